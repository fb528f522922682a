use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::manifest::DatasetManifest;

/// Dataset-level statistics: average primitive fan-out, label-count
/// histogram, attribute co-occurrence and attribute-object binding counts.
///
/// All splits are counted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub num_images: usize,
    pub num_attributes: usize,
    pub num_objects: usize,
    /// Distinct `⟨S, o⟩` compositions across all splits.
    pub num_compositions: usize,
    /// Distinct `⟨a, o⟩` pairs across all splits.
    pub num_pairs: usize,
    /// Mean number of distinct attributes annotated per object class.
    pub avg_attr: f64,
    /// Mean number of distinct objects annotated per attribute class.
    pub avg_obj: f64,
    /// Number of attributes on an image -> number of images.
    pub label_count_histogram: BTreeMap<usize, usize>,
    /// `cooccurrence[i][j]` = images whose attribute set holds both `a_i` and `a_j`.
    pub cooccurrence: Vec<Vec<usize>>,
    /// `binding[o][a]` = images of object `o` annotated with attribute `a`.
    pub binding: Vec<Vec<usize>>,
    pub attribute_counts: Vec<usize>,
    pub object_counts: Vec<usize>,
    pub scope: String,
}

pub fn compute_stats(manifest: &DatasetManifest) -> DatasetStats {
    let vocab = manifest.vocab();
    let (na, no) = (vocab.num_attributes(), vocab.num_objects());
    let mut histogram = BTreeMap::new();
    let mut cooccurrence = vec![vec![0usize; na]; na];
    let mut binding = vec![vec![0usize; na]; no];
    let mut attribute_counts = vec![0usize; na];
    let mut object_counts = vec![0usize; no];
    let mut compositions = BTreeSet::new();

    for sample in manifest.samples() {
        let label = &sample.label;
        let attrs = label.attributes();
        let o = label.object().0;
        *histogram.entry(attrs.len()).or_insert(0) += 1;
        object_counts[o] += 1;
        compositions.insert(label);
        for &a in attrs {
            attribute_counts[a.0] += 1;
            binding[o][a.0] += 1;
            for &b in attrs {
                cooccurrence[a.0][b.0] += 1;
            }
        }
    }

    let attrs_per_object: Vec<usize> = binding
        .iter()
        .map(|row| row.iter().filter(|&&c| c > 0).count())
        .collect();
    let objs_per_attribute: Vec<usize> = (0..na)
        .map(|a| binding.iter().filter(|row| row[a] > 0).count())
        .collect();
    let num_pairs = attrs_per_object.iter().sum();

    DatasetStats {
        num_images: manifest.samples().len(),
        num_attributes: na,
        num_objects: no,
        num_compositions: compositions.len(),
        num_pairs,
        avg_attr: attrs_per_object.iter().sum::<usize>() as f64 / no as f64,
        avg_obj: objs_per_attribute.iter().sum::<usize>() as f64 / na as f64,
        label_count_histogram: histogram,
        cooccurrence,
        binding,
        attribute_counts,
        object_counts,
        scope: "all_splits".to_owned(),
    }
}

impl DatasetStats {
    /// Fraction of images per attribute count; sums to 1.
    pub fn histogram_proportions(&self) -> BTreeMap<usize, f64> {
        let total = self.num_images.max(1) as f64;
        self.label_count_histogram
            .iter()
            .map(|(&k, &v)| (k, v as f64 / total))
            .collect()
    }

    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<20} {:>10}", "images", self.num_images);
        let _ = writeln!(out, "{:<20} {:>10}", "attributes", self.num_attributes);
        let _ = writeln!(out, "{:<20} {:>10}", "objects", self.num_objects);
        let _ = writeln!(out, "{:<20} {:>10}", "compositions", self.num_compositions);
        let _ = writeln!(out, "{:<20} {:>10}", "pairs", self.num_pairs);
        let _ = writeln!(out, "{:<20} {:>10.2}", "avg attr", self.avg_attr);
        let _ = writeln!(out, "{:<20} {:>10.2}", "avg obj", self.avg_obj);
        let _ = writeln!(out, "attributes per image:");
        for (k, p) in self.histogram_proportions() {
            let _ = writeln!(
                out,
                "  {:>3} {:>8} {:>7.2}%",
                k,
                self.label_count_histogram[&k],
                p * 100.0
            );
        }
        out
    }
}
