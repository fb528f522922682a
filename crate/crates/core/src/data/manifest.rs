use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::label::MultiAttrLabel;
use super::vocab::PrimitiveVocab;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::MalformedManifest(format!("unknown split `{other}`"))),
        }
    }
}

/// Precomputed backbone outputs for one image: a class-token vector and
/// `P ≥ 1` patch vectors of the same dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticFeatures {
    pub cls: Array1<f64>,
    pub patches: Array2<f64>,
}

impl SyntheticFeatures {
    pub fn new(cls: Array1<f64>, patches: Array2<f64>) -> Result<Self> {
        if patches.nrows() == 0 {
            return Err(Error::MalformedManifest("feature payload has no patches".into()));
        }
        if patches.ncols() != cls.len() {
            return Err(Error::DimensionMismatch(format!(
                "cls has dim {} but patches have dim {}",
                cls.len(),
                patches.ncols()
            )));
        }
        if !cls.iter().chain(patches.iter()).all(|v| v.is_finite()) {
            return Err(Error::MalformedManifest("feature payload has non-finite values".into()));
        }
        Ok(Self { cls, patches })
    }

    pub fn dim(&self) -> usize {
        self.cls.len()
    }

    pub fn num_patches(&self) -> usize {
        self.patches.nrows()
    }

    /// Row 0 is the class token, rows 1.. are patches.
    fn to_rows(&self) -> Vec<Vec<f64>> {
        std::iter::once(self.cls.to_vec())
            .chain(self.patches.rows().into_iter().map(|r| r.to_vec()))
            .collect()
    }

    fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::MalformedManifest(
                "features need a class row and at least one patch row".into(),
            ));
        }
        let dim = rows[0].len();
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::MalformedManifest("feature rows have inconsistent dimension".into()));
        }
        let cls = Array1::from(rows[0].clone());
        let flat: Vec<f64> = rows[1..].iter().flatten().copied().collect();
        let patches = Array2::from_shape_vec((rows.len() - 1, dim), flat)
            .map_err(|e| Error::MalformedManifest(e.to_string()))?;
        Self::new(cls, patches)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FeaturePayload {
    Synthetic(SyntheticFeatures),
    Image(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub id: String,
    pub payload: FeaturePayload,
    pub label: MultiAttrLabel,
    pub split: Split,
}

impl SampleRecord {
    pub fn synthetic_features(&self) -> Result<&SyntheticFeatures> {
        match &self.payload {
            FeaturePayload::Synthetic(f) => Ok(f),
            FeaturePayload::Image(_) => Err(Error::MissingPayload(self.id.clone())),
        }
    }
}

/// A validated dataset with the seen and unseen multi-attribute
/// compositions derived from its splits.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    vocab: PrimitiveVocab,
    samples: Vec<SampleRecord>,
    seen: BTreeSet<MultiAttrLabel>,
    unseen: BTreeSet<MultiAttrLabel>,
}

impl DatasetManifest {
    /// Validates samples and derives `C^s` (distinct labels in train) and
    /// `C^u` (distinct val/test labels not in `C^s`). Train and test must be
    /// non-empty; val may be empty.
    pub fn new(vocab: PrimitiveVocab, samples: Vec<SampleRecord>) -> Result<Self> {
        let mut ids = HashSet::with_capacity(samples.len());
        for sample in &samples {
            if !ids.insert(sample.id.as_str()) {
                return Err(Error::DuplicateSampleId(sample.id.clone()));
            }
            sample.label.validate(&vocab)?;
        }
        for split in [Split::Train, Split::Test] {
            if !samples.iter().any(|s| s.split == split) {
                return Err(Error::EmptySplit(split));
            }
        }
        let seen: BTreeSet<MultiAttrLabel> = samples
            .iter()
            .filter(|s| s.split == Split::Train)
            .map(|s| s.label.clone())
            .collect();
        let unseen = samples
            .iter()
            .filter(|s| s.split != Split::Train && !seen.contains(&s.label))
            .map(|s| s.label.clone())
            .collect();
        Ok(Self {
            vocab,
            samples,
            seen,
            unseen,
        })
    }

    pub fn vocab(&self) -> &PrimitiveVocab {
        &self.vocab
    }

    pub fn samples(&self) -> &[SampleRecord] {
        &self.samples
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &SampleRecord> + '_ {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.split(split).count()
    }

    /// Seen multi-attribute compositions `C^s`.
    pub fn seen_compositions(&self) -> &BTreeSet<MultiAttrLabel> {
        &self.seen
    }

    /// Unseen multi-attribute compositions `C^u`.
    pub fn unseen_compositions(&self) -> &BTreeSet<MultiAttrLabel> {
        &self.unseen
    }

    pub fn is_seen(&self, label: &MultiAttrLabel) -> bool {
        self.seen.contains(label)
    }

    pub fn to_file(&self) -> ManifestFile {
        ManifestFile {
            attributes: self.vocab.attributes().to_vec(),
            objects: self.vocab.objects().to_vec(),
            samples: self
                .samples
                .iter()
                .map(|s| {
                    let (features, image_path) = match &s.payload {
                        FeaturePayload::Synthetic(f) => (Some(f.to_rows()), None),
                        FeaturePayload::Image(p) => (None, Some(p.to_string_lossy().into_owned())),
                    };
                    SampleEntry {
                        id: s.id.clone(),
                        split: s.split,
                        object: self.vocab.object_name(s.label.object()).to_owned(),
                        attrs: s
                            .label
                            .attributes()
                            .iter()
                            .map(|&a| self.vocab.attribute_name(a).to_owned())
                            .collect(),
                        features,
                        image_path,
                    }
                })
                .collect(),
        }
    }

    pub fn from_file(file: ManifestFile) -> Result<Self> {
        let vocab = PrimitiveVocab::new(&file.attributes, &file.objects)
            .map_err(|e| Error::MalformedManifest(e.to_string()))?;
        let samples = file
            .samples
            .into_iter()
            .map(|entry| entry.into_record(&vocab))
            .collect::<Result<Vec<_>>>()?;
        Self::new(vocab, samples)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ManifestFile =
            serde_json::from_str(text).map_err(|e| Error::MalformedManifest(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

/// Reads and validates a manifest file.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DatasetManifest::from_json(&text)
}

/// On-disk manifest layout.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFile {
    pub attributes: Vec<String>,
    pub objects: Vec<String>,
    pub samples: Vec<SampleEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleEntry {
    pub id: String,
    pub split: Split,
    pub object: String,
    pub attrs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
}

impl SampleEntry {
    fn into_record(self, vocab: &PrimitiveVocab) -> Result<SampleRecord> {
        let object = vocab.object_id(&self.object).ok_or_else(|| Error::UnknownPrimitive {
            kind: "object",
            name: self.object.clone(),
            sample: self.id.clone(),
        })?;
        let attrs = self
            .attrs
            .iter()
            .map(|name| {
                vocab.attribute_id(name).ok_or_else(|| Error::UnknownPrimitive {
                    kind: "attribute",
                    name: name.clone(),
                    sample: self.id.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let label = MultiAttrLabel::new(attrs, object)
            .map_err(|e| Error::MalformedManifest(format!("sample `{}`: {e}", self.id)))?;
        let payload = match (self.features, self.image_path) {
            (Some(rows), None) => FeaturePayload::Synthetic(
                SyntheticFeatures::from_rows(&rows)
                    .map_err(|e| Error::MalformedManifest(format!("sample `{}`: {e}", self.id)))?,
            ),
            (None, Some(path)) => FeaturePayload::Image(PathBuf::from(path)),
            _ => {
                return Err(Error::MalformedManifest(format!(
                    "sample `{}` needs exactly one of `features` or `image_path`",
                    self.id
                )))
            }
        };
        Ok(SampleRecord {
            id: self.id,
            payload,
            label,
            split: self.split,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AttributeId, ObjectId};

    const MINIMAL: &str = r#"{
        "attributes": ["red", "ripe"],
        "objects": ["apple"],
        "samples": [
            {"id": "s0", "split": "train", "object": "apple", "attrs": ["red", "ripe"], "features": [[1.0, 0.0], [0.0, 1.0]]},
            {"id": "s1", "split": "test", "object": "apple", "attrs": ["red"], "image_path": "img/s1.jpg"}
        ]
    }"#;

    #[test]
    fn loads_minimal_manifest() {
        let m = DatasetManifest::from_json(MINIMAL).unwrap();
        assert_eq!(m.vocab().num_attributes(), 2);
        assert_eq!(m.vocab().num_objects(), 1);
        assert_eq!(m.samples().len(), 2);
        assert_eq!(m.samples()[0].id, "s0");
        assert_eq!(m.seen_compositions().len(), 1);
        assert_eq!(m.unseen_compositions().len(), 1);
        let unseen = m.unseen_compositions().iter().next().unwrap();
        assert_eq!(unseen.attributes(), [AttributeId(0)]);
        assert_eq!(unseen.object(), ObjectId(0));
    }

    #[test]
    fn unknown_attribute_is_reported() {
        let text = MINIMAL.replace(r#"["red"], "image_path""#, r#"["blue"], "image_path""#);
        let err = DatasetManifest::from_json(&text).unwrap_err();
        assert_eq!(err.code(), "E_UNKNOWN_PRIMITIVE");
    }

    #[test]
    fn test_label_equal_to_train_label_is_seen() {
        let text = MINIMAL.replace(r#"["red"], "image_path""#, r#"["ripe", "red"], "image_path""#);
        let m = DatasetManifest::from_json(&text).unwrap();
        assert!(m.unseen_compositions().is_empty());
    }

    #[test]
    fn duplicate_ids_and_empty_splits() {
        let dup = MINIMAL.replace(r#""id": "s1""#, r#""id": "s0""#);
        assert_eq!(DatasetManifest::from_json(&dup).unwrap_err().code(), "E_DUPLICATE_SAMPLE");
        let no_test = MINIMAL.replace(r#""split": "test""#, r#""split": "train""#);
        assert_eq!(DatasetManifest::from_json(&no_test).unwrap_err().code(), "E_EMPTY_SPLIT");
    }

    #[test]
    fn malformed_inputs() {
        assert_eq!(DatasetManifest::from_json("{").unwrap_err().code(), "E_MALFORMED");
        let ragged = MINIMAL.replace("[[1.0, 0.0], [0.0, 1.0]]", "[[1.0, 0.0], [0.0]]");
        assert_eq!(DatasetManifest::from_json(&ragged).unwrap_err().code(), "E_MALFORMED");
        let no_patch = MINIMAL.replace("[[1.0, 0.0], [0.0, 1.0]]", "[[1.0, 0.0]]");
        assert_eq!(DatasetManifest::from_json(&no_patch).unwrap_err().code(), "E_MALFORMED");
        let no_attrs = MINIMAL.replace(r#"["red"], "image_path""#, r#"[], "image_path""#);
        assert_eq!(DatasetManifest::from_json(&no_attrs).unwrap_err().code(), "E_MALFORMED");
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = DatasetManifest::from_json(MINIMAL).unwrap();
        let again = DatasetManifest::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, again);
        assert_eq!(m.to_json().unwrap(), again.to_json().unwrap());
    }
}
