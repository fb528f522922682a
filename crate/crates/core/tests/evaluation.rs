mod common;

use std::collections::BTreeSet;

use ndarray::Array1;
use proptest::prelude::*;

use common::{tiny_data, tiny_model, words_config};
use primfuse_core::data::{
    build_pair_seen_set, build_solution_space, AttributeId, DatasetManifest, FeaturePayload, MultiAttrLabel, ObjectId,
    PairComposition, PairSet, PrimitiveVocab, SampleRecord, SolutionSpace, Split, SyntheticFeatures, World,
};
use primfuse_core::evaluation::{
    aggregate_report, combine_scores, evaluate, evaluate_scores, instance_metrics, rank_pairs, score_split,
    EvalOptions, InstanceMetrics, PrimitiveTop1, ScoredSample,
};
use primfuse_core::training::{TrainConfig, Trainer};
use primfuse_core::{BranchScores, ModelKind};

/// Position of each pair, counted as the number of space members that
/// beat it (higher score, or equal score and smaller ids).
fn oracle_positions(scores: &[f64], no: usize, space: &[PairComposition]) -> Vec<(PairComposition, usize)> {
    space
        .iter()
        .map(|&p| {
            let sp = scores[p.attribute.0 * no + p.object.0];
            let ahead = space
                .iter()
                .filter(|&&q| {
                    let sq = scores[q.attribute.0 * no + q.object.0];
                    sq > sp || (sq == sp && (q.attribute.0, q.object.0) < (p.attribute.0, p.object.0))
                })
                .count();
            (p, ahead)
        })
        .collect()
}

fn oracle_metrics(scores: &[f64], no: usize, space: &[PairComposition], truth: &[PairComposition]) -> InstanceMetrics {
    let pos = oracle_positions(scores, no, space);
    let rank_of = |p: &PairComposition| pos.iter().find(|(q, _)| q == p).unwrap().1;
    let first = pos.iter().find(|(_, r)| *r == 0).unwrap().0;
    let n = truth.len();
    let worst = truth.iter().map(rank_of).max().unwrap();
    let in_top5 = truth.iter().filter(|p| rank_of(p) < 5).count();
    let attrs: Vec<usize> = truth.iter().map(|p| p.attribute.0).collect();
    let objs: Vec<usize> = truth.iter().map(|p| p.object.0).collect();
    InstanceMetrics {
        exact_match: if worst + 1 == n { 1.0 } else { 0.0 },
        top1_p: if truth.contains(&first) { 1.0 } else { 0.0 },
        top5_r: in_top5 as f64 / n as f64,
        coverage: worst + 1,
        top1_p_attr: if attrs.contains(&first.attribute.0) { 1.0 } else { 0.0 },
        top1_p_obj: if objs.contains(&first.object.0) { 1.0 } else { 0.0 },
        truth_size: n,
    }
}

fn vocab(na: usize, no: usize) -> PrimitiveVocab {
    PrimitiveVocab::new((0..na).map(|i| format!("a{i}")), (0..no).map(|i| format!("o{i}"))).unwrap()
}

fn pair(a: usize, o: usize) -> PairComposition {
    PairComposition::new(AttributeId(a), ObjectId(o))
}

#[derive(Debug, Clone)]
struct Instance {
    na: usize,
    no: usize,
    scores: Vec<f64>,
    truth_attrs: Vec<usize>,
    object: usize,
    extra: Vec<bool>,
}

fn instance() -> impl Strategy<Value = Instance> {
    (1usize..=6, 1usize..=5).prop_flat_map(|(na, no)| {
        (
            // Coarse values so ties are common.
            prop::collection::vec((0u8..6).prop_map(|v| v as f64 * 0.25), na * no),
            prop::collection::btree_set(0..na, 1..=na),
            0..no,
            prop::collection::vec(any::<bool>(), na * no),
        )
            .prop_map(move |(scores, attrs, object, extra)| Instance {
                na,
                no,
                scores,
                truth_attrs: attrs.into_iter().collect(),
                object,
                extra,
            })
    })
}

fn setup(inst: &Instance) -> (PrimitiveVocab, SolutionSpace, Vec<PairComposition>, Vec<PairComposition>) {
    let v = vocab(inst.na, inst.no);
    let truth: Vec<PairComposition> = inst.truth_attrs.iter().map(|&a| pair(a, inst.object)).collect();
    let mut pairs = PairSet::empty(&v);
    let mut members = Vec::new();
    for a in 0..inst.na {
        for o in 0..inst.no {
            let p = pair(a, o);
            if inst.extra[a * inst.no + o] || truth.contains(&p) {
                pairs.insert(p);
                members.push(p);
            }
        }
    }
    (v, SolutionSpace { world: World::Closed, pairs }, truth, members)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn metrics_match_brute_force(insts in prop::collection::vec(instance(), 1..5)) {
        let mut got = Vec::new();
        let mut want = Vec::new();
        for inst in &insts {
            let (v, space, truth, members) = setup(inst);
            let seen = build_unseen_free(&v);
            let ranked = rank_pairs(Array1::from(inst.scores.clone()).view(), inst.no, &space, 0.0, &seen).unwrap();
            prop_assert_eq!(ranked.len(), members.len());
            let truth_set: BTreeSet<_> = truth.iter().copied().collect();
            let m = instance_metrics(&ranked, &truth_set, &space).unwrap();
            let o = oracle_metrics(&inst.scores, inst.no, &members, &truth);
            prop_assert_eq!(m.exact_match, o.exact_match);
            prop_assert_eq!(m.top1_p, o.top1_p);
            prop_assert!((m.top5_r - o.top5_r).abs() < 1e-9);
            prop_assert_eq!(m.coverage, o.coverage);
            prop_assert_eq!(m.top1_p_attr, o.top1_p_attr);
            prop_assert_eq!(m.top1_p_obj, o.top1_p_obj);
            // Per-instance invariants.
            prop_assert_eq!(m.exact_match == 1.0, m.coverage == truth.len());
            prop_assert!(m.exact_match <= m.top1_p);
            prop_assert!(m.top1_p == 0.0 || (m.top1_p_attr == 1.0 && m.top1_p_obj == 1.0));
            prop_assert!(m.coverage >= truth.len());
            if m.top5_r == 1.0 && truth.len() <= 5 {
                prop_assert!(m.coverage <= 5);
            }
            got.push(m);
            want.push(o);
        }
        let agg = aggregate_report(&got).unwrap();
        let n = want.len() as f64;
        let mean = |f: fn(&InstanceMetrics) -> f64| want.iter().map(f).sum::<f64>() / n;
        prop_assert!((agg.exact_match - mean(|m| m.exact_match)).abs() < 1e-9);
        prop_assert!((agg.top1_p - mean(|m| m.top1_p)).abs() < 1e-9);
        prop_assert!((agg.top5_r - mean(|m| m.top5_r)).abs() < 1e-9);
        prop_assert!((agg.coverage - mean(|m| m.coverage as f64)).abs() < 1e-9);
        prop_assert!((agg.top1_p_attr - mean(|m| m.top1_p_attr)).abs() < 1e-9);
        prop_assert!((agg.top1_p_obj - mean(|m| m.top1_p_obj)).abs() < 1e-9);
        let mut reversed = got.clone();
        reversed.reverse();
        prop_assert_eq!(aggregate_report(&reversed).unwrap(), agg);
    }

    #[test]
    fn dual_branch_top1_factorizes(
        (na, no, attr, obj) in (1usize..=8, 1usize..=8).prop_flat_map(|(na, no)| (
            Just(na),
            Just(no),
            prop::collection::vec(-1.0f64..1.0, na),
            prop::collection::vec(-1.0f64..1.0, no),
        ))
    ) {
        let v = vocab(na, no);
        let scores = BranchScores { attr: Some(Array1::from(attr.clone())), obj: Some(Array1::from(obj.clone())), pair: None };
        let combined = combine_scores(&scores, na, no, 1.0 / 0.07).unwrap();
        let ranked = rank_pairs(combined.view(), no, &SolutionSpace::open(&v), 0.0, &build_unseen_free(&v)).unwrap();
        let argmax = |xs: &[f64]| (0..xs.len()).fold(0, |b, i| if xs[i] > xs[b] { i } else { b });
        prop_assert_eq!(ranked.top().unwrap(), pair(argmax(&attr), argmax(&obj)));
    }
}

fn build_unseen_free(v: &PrimitiveVocab) -> primfuse_core::data::PairSeenSet {
    primfuse_core::data::PairSeenSet { pairs: PairSet::full(v) }
}

#[test]
fn worked_ranking_example() {
    let v = PrimitiveVocab::new(["red", "ripe"], ["apple", "car"]).unwrap();
    let space = SolutionSpace::open(&v);
    // (red, apple) > (ripe, apple) > (red, car) > (ripe, car)
    let scores = Array1::from(vec![3.0, 1.0, 2.0, 0.0]);
    let ranked = rank_pairs(scores.view(), 2, &space, 0.0, &build_unseen_free(&v)).unwrap();
    let truth = BTreeSet::from([pair(0, 0), pair(1, 0)]);
    let m = instance_metrics(&ranked, &truth, &space).unwrap();
    assert_eq!((m.exact_match, m.top1_p, m.top5_r, m.coverage), (1.0, 1.0, 1.0, 2));
}

#[test]
fn large_truth_sets_bound_recall_and_coverage() {
    let v = vocab(8, 1);
    let space = SolutionSpace::open(&v);
    let scores = Array1::from((0..8).map(|i| -(i as f64)).collect::<Vec<_>>());
    let ranked = rank_pairs(scores.view(), 1, &space, 0.0, &build_unseen_free(&v)).unwrap();
    let truth: BTreeSet<_> = (0..7).map(|a| pair(a, 0)).collect();
    let m = instance_metrics(&ranked, &truth, &space).unwrap();
    assert!(m.top5_r <= 5.0 / 7.0 + 1e-12);
    assert!(m.coverage >= 7);
}

fn trained_model(manifest: &DatasetManifest) -> primfuse_core::CompositionalModel {
    let mut model = tiny_model(manifest, &words_config(), ModelKind::DualBranch);
    let mut trainer = Trainer::new(
        TrainConfig {
            epochs: 3,
            batch_size: 8,
            ..TrainConfig::default()
        },
        &model,
    )
    .unwrap();
    trainer.fit(&mut model, manifest, &mut |_| Ok(())).unwrap();
    model
}

#[test]
fn closed_world_equals_filtered_open_world() {
    let (manifest, _) = tiny_data(16, 9);
    let model = trained_model(&manifest);
    let scored = score_split(&model, &manifest, Split::Test).unwrap();
    let v = manifest.vocab();
    let open = build_solution_space(&manifest, World::Open);
    let closed = build_solution_space(&manifest, World::Closed);
    let seen = build_pair_seen_set(&manifest).unwrap();
    let mut filtered_metrics = Vec::new();
    for s in &scored {
        let combined = combine_scores(&s.scores, v.num_attributes(), v.num_objects(), model.logit_scale()).unwrap();
        let o = rank_pairs(combined.view(), v.num_objects(), &open, 0.0, &seen).unwrap();
        let c = rank_pairs(combined.view(), v.num_objects(), &closed, 0.0, &seen).unwrap();
        let mut f = o.clone();
        f.entries.retain(|e| closed.contains(e.pair));
        assert_eq!(f, c);
        let truth: BTreeSet<_> = s.label.expand_pairs().into_iter().collect();
        filtered_metrics.push(instance_metrics(&f, &truth, &closed).unwrap());
    }
    let agg = aggregate_report(&filtered_metrics).unwrap();
    let direct = evaluate(&model, &manifest, Split::Test, World::Closed, EvalOptions::default())
        .unwrap()
        .report;
    assert_eq!(agg.exact_match, direct.exact_match);
    assert_eq!(agg.top1_p, direct.top1_p);
    assert_eq!(agg.top5_r, direct.top5_r);
    assert_eq!(agg.coverage, direct.coverage);
    assert_eq!(agg.top1_p_attr, direct.top1_p_attr);
    assert_eq!(agg.top1_p_obj, direct.top1_p_obj);
}

#[test]
fn evaluation_is_deterministic() {
    let (manifest, _) = tiny_data(16, 9);
    let model = trained_model(&manifest);
    for world in [World::Open, World::Closed] {
        let a = evaluate(&model, &manifest, Split::Test, world, EvalOptions::default()).unwrap();
        let b = evaluate(&model, &manifest, Split::Test, world, EvalOptions::default()).unwrap();
        assert_eq!(
            serde_json::to_string(&a.report).unwrap(),
            serde_json::to_string(&b.report).unwrap()
        );
    }
}

#[test]
fn infinite_biases_pick_seen_or_unseen_pairs() {
    let (manifest, _) = tiny_data(16, 9);
    let model = trained_model(&manifest);
    let scored = score_split(&model, &manifest, Split::Test).unwrap();
    let v = manifest.vocab();
    let open = build_solution_space(&manifest, World::Open);
    let seen = build_pair_seen_set(&manifest).unwrap();
    assert!(seen.len() < open.len());
    for s in &scored {
        let combined = combine_scores(&s.scores, v.num_attributes(), v.num_objects(), model.logit_scale()).unwrap();
        let low = rank_pairs(combined.view(), v.num_objects(), &open, f64::NEG_INFINITY, &seen).unwrap();
        let high = rank_pairs(combined.view(), v.num_objects(), &open, f64::INFINITY, &seen).unwrap();
        assert!(seen.contains(low.top().unwrap()));
        assert!(!seen.contains(high.top().unwrap()));
    }
}

#[test]
fn branch_argmax_option_changes_only_primitive_metrics() {
    let (manifest, _) = tiny_data(16, 9);
    let model = trained_model(&manifest);
    let scored = score_split(&model, &manifest, Split::Test).unwrap();
    let comp = evaluate_scores(&scored, &manifest, Split::Test, World::Open, model.logit_scale(), EvalOptions::default())
        .unwrap()
        .report;
    let arg = evaluate_scores(
        &scored,
        &manifest,
        Split::Test,
        World::Open,
        model.logit_scale(),
        EvalOptions {
            primitive_top1: PrimitiveTop1::BranchArgmax,
            keep_instances: false,
        },
    )
    .unwrap()
    .report;
    assert_eq!(comp.exact_match, arg.exact_match);
    assert_eq!(comp.auc, arg.auc);
    // With factorized scores in the open world both rules coincide.
    assert_eq!(comp.top1_p_attr, arg.top1_p_attr);
    assert_eq!(comp.top1_p_obj, arg.top1_p_obj);
    assert_eq!(arg.primitive_top1, PrimitiveTop1::BranchArgmax);
}

fn record(id: &str, attrs: &[usize], object: usize, split: Split) -> SampleRecord {
    let features = SyntheticFeatures::new(Array1::ones(2), ndarray::Array2::ones((1, 2))).unwrap();
    SampleRecord {
        id: id.into(),
        payload: FeaturePayload::Synthetic(features),
        label: MultiAttrLabel::new(attrs.iter().map(|&a| AttributeId(a)), ObjectId(object)).unwrap(),
        split,
    }
}

#[test]
fn perfect_scores_give_perfect_report() {
    let v = vocab(3, 2);
    let manifest = DatasetManifest::new(
        v,
        vec![
            record("tr0", &[0], 0, Split::Train),
            record("tr1", &[1, 2], 1, Split::Train),
            record("te0", &[0], 0, Split::Test),
            record("te1", &[1, 2], 1, Split::Test),
            // Unseen compositions, each with at least one unseen pair.
            record("te2", &[0, 1], 0, Split::Test),
            record("te3", &[0], 1, Split::Test),
        ],
    )
    .unwrap();
    let test: Vec<&SampleRecord> = manifest.split(Split::Test).collect();
    let scored: Vec<ScoredSample> = test
        .iter()
        .map(|s| {
            let mut pair_scores = Array1::zeros(6);
            for p in s.label.expand_pairs() {
                pair_scores[p.flat_index(2)] = 1.0;
            }
            ScoredSample {
                id: &s.id,
                label: &s.label,
                scores: BranchScores { attr: None, obj: None, pair: Some(pair_scores) },
            }
        })
        .collect();
    for world in [World::Open, World::Closed] {
        let r = evaluate_scores(&scored, &manifest, Split::Test, world, 1.0 / 0.07, EvalOptions::default())
            .unwrap()
            .report;
        assert_eq!(r.exact_match, 1.0);
        assert_eq!(r.top1_p, 1.0);
        assert_eq!(r.coverage, r.mean_truth_size);
        assert_eq!(r.auc, 1.0);
        assert_eq!(r.best_seen, 1.0);
        assert_eq!(r.best_unseen, 1.0);
        assert!(!r.sweep_degenerate);
        assert_eq!(r.seen_partition.unwrap().count, 2);
        assert_eq!(r.unseen_partition.unwrap().count, 2);
    }
}
