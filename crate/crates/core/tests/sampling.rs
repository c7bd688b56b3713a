mod common;

use std::collections::{BTreeMap, HashSet};

use common::rng;
use histoprompt_core::data::{DatasetManifest, ManifestRecord};
use histoprompt_core::sampling::{
    aggregate_results, balance, make_grid, split, synthetic_count, GridResult, GridSpec, SamplingError,
};
use proptest::prelude::*;
use rand::Rng;

fn manifest(groups: &[(String, String, usize)]) -> DatasetManifest {
    let mut records = Vec::new();
    for (label, prompt, count) in groups {
        for i in 0..*count {
            let mut r = ManifestRecord::new(format!("{prompt}#{i}"), label.clone());
            r.prompt = Some(prompt.clone());
            records.push(r);
        }
    }
    DatasetManifest::new(records)
}

/// Two classes with 25 prompts each; the 21 largest per class are well above 1215.
fn paper_like_manifest() -> DatasetManifest {
    let mut groups = Vec::new();
    for label in ["cancer", "healthy"] {
        for c in 0..25 {
            let population = if c < 21 { 1300 + 37 * c } else { 400 + c };
            groups.push((label.to_string(), format!("{label} type {c}"), population));
        }
    }
    manifest(&groups)
}

fn counts_by_prompt(m: &DatasetManifest) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for r in &m.records {
        *out.entry(r.prompt.clone().unwrap()).or_default() += 1;
    }
    out
}

#[test]
fn forty_two_prompts_fifty_one_thousand() {
    let m = paper_like_manifest();
    let b = balance(&m, 21, 51_000, 5).unwrap();
    let quotas = b.per_prompt_quota();
    assert_eq!(quotas.len(), 42);
    assert_eq!(quotas.values().filter(|&&q| q == 1214).count(), 30);
    assert_eq!(quotas.values().filter(|&&q| q == 1215).count(), 12);
    assert_eq!(b.manifest.len(), 51_000);
    assert_eq!(counts_by_prompt(&b.manifest), quotas);

    // The twelve extra records go to the twelve largest original populations.
    let mut by_pop = b.quotas.clone();
    by_pop.sort_by(|a, b| b.population.cmp(&a.population).then(a.prompt.cmp(&b.prompt)));
    assert!(by_pop[..12].iter().all(|q| q.quota == 1215));
    assert!(by_pop[12..].iter().all(|q| q.quota == 1214));

    let ids: HashSet<&str> = b.manifest.records.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids.len(), 51_000);
    assert_eq!(balance(&m, 21, 51_000, 5).unwrap(), b);
}

#[test]
fn split_fifty_thousand_one_thousand() {
    let b = balance(&paper_like_manifest(), 21, 51_000, 5).unwrap();
    let (train, val) = split(&b, 50_000, 1_000, 6).unwrap();
    assert_eq!((train.len(), val.len()), (50_000, 1_000));
    let val_counts = counts_by_prompt(&val);
    assert_eq!(val_counts.len(), 42);
    assert!(val_counts.values().all(|&c| c == 23 || c == 24));
    assert_eq!(val_counts.values().sum::<usize>(), 1_000);
    let train_counts = counts_by_prompt(&train);
    for (prompt, quota) in b.per_prompt_quota() {
        assert_eq!(train_counts[&prompt] + val_counts[&prompt], quota);
    }
    let t: HashSet<&str> = train.records.iter().map(|r| r.id.as_str()).collect();
    let v: HashSet<&str> = val.records.iter().map(|r| r.id.as_str()).collect();
    assert!(t.is_disjoint(&v));
    assert_eq!(t.len() + v.len(), 51_000);
}

#[test]
fn split_edges() {
    let m = manifest(&[("a".into(), "pa".into(), 6), ("b".into(), "pb".into(), 6)]);
    let b = balance(&m, 1, 10, 0).unwrap();
    let (train, val) = split(&b, 10, 0, 0).unwrap();
    assert_eq!((train.len(), val.len()), (10, 0));
    assert!(matches!(split(&b, 9, 2, 0), Err(SamplingError::CountMismatch { .. })));
}

#[test]
fn balance_errors() {
    let m = manifest(&[("a".into(), "pa".into(), 2), ("b".into(), "pb".into(), 9)]);
    match balance(&m, 1, 10, 0) {
        Err(SamplingError::InsufficientExamples { prompt, .. }) => assert_eq!(prompt, "pa"),
        other => panic!("{other:?}"),
    }
    assert!(matches!(balance(&m, 2, 4, 0), Err(SamplingError::InsufficientPrompts { .. })));
}

fn pool(prefix: &str, n: usize) -> DatasetManifest {
    DatasetManifest::new(
        (0..n)
            .map(|i| ManifestRecord::new(format!("{prefix}{i}"), if i % 2 == 0 { "cancer" } else { "healthy" }))
            .collect(),
    )
}

#[test]
fn default_grid_has_420_plans() {
    let spec = GridSpec::default();
    let real = pool("r", 12_000);
    let synth = pool("s", 30_000);
    let plans = make_grid(&spec, 99, &real, &synth).unwrap();
    assert_eq!(plans.len(), 420);
    for p in &plans {
        assert_eq!(p.real_ids.len(), p.regime);
        let exact = p.regime as f64 * p.ratio_pct as f64 / 100.0;
        assert_eq!(p.synthetic_ids.len() as f64, exact.round());
        assert_eq!(p.real_ids.iter().collect::<HashSet<_>>().len(), p.regime);
        assert_eq!(p.synthetic_ids.iter().collect::<HashSet<_>>().len(), p.synthetic_ids.len());
        let cancer = p.real_ids.iter().filter(|id| id[1..].parse::<usize>().unwrap() % 2 == 0).count();
        assert!(cancer.abs_diff(p.regime - cancer) <= 1);
    }
    let cell = plans.iter().find(|p| p.regime == 100 && p.ratio_pct == 200).unwrap();
    assert_eq!(cell.synthetic_ids.len(), 200);
    assert!(plans.iter().filter(|p| p.ratio_pct == 0).all(|p| p.synthetic_ids.is_empty()));
    assert_eq!(make_grid(&spec, 99, &real, &synth).unwrap(), plans);
}

#[test]
fn grid_needs_enough_data() {
    let spec = GridSpec::default();
    assert!(matches!(
        make_grid(&spec, 0, &pool("r", 500), &pool("s", 30_000)),
        Err(SamplingError::InsufficientData { pool: "real", .. })
    ));
}

#[test]
fn rounding_of_synthetic_counts() {
    assert_eq!(synthetic_count(10, 25), 3);
    assert_eq!(synthetic_count(25, 25), 6);
    assert_eq!(synthetic_count(100, 200), 200);
    assert_eq!(synthetic_count(10, 0), 0);
}

#[test]
fn aggregation() {
    let spec = GridSpec {
        regimes: vec![10],
        ratios_pct: vec![0],
        folds: 3,
    };
    let rs: Vec<GridResult> = [0.8, 1.0, 0.9]
        .iter()
        .enumerate()
        .map(|(fold, &auc)| GridResult {
            regime: 10,
            ratio_pct: 0,
            fold,
            auc,
        })
        .collect();
    let s = aggregate_results(&spec, &rs).unwrap();
    assert_eq!(s.cells[0].median, 0.9);
    let wider = GridSpec {
        ratios_pct: vec![0, 25],
        ..spec
    };
    assert!(matches!(
        aggregate_results(&wider, &rs),
        Err(SamplingError::EmptyCell { regime: 10, ratio_pct: 25 })
    ));
}

#[test]
fn aggregation_matches_sort_and_index() {
    let spec = GridSpec::default();
    let mut r = rng(12);
    let mut results = Vec::new();
    for &regime in &spec.regimes {
        for &ratio in &spec.ratios_pct {
            for fold in 0..10 {
                results.push(GridResult {
                    regime,
                    ratio_pct: ratio,
                    fold,
                    auc: r.random_range(0.5..1.0),
                });
            }
        }
    }
    let summary = aggregate_results(&spec, &results).unwrap();
    assert_eq!(summary.cells.len(), 42);
    for cell in &summary.cells {
        let mut v: Vec<f64> = results
            .iter()
            .filter(|x| x.regime == cell.regime && x.ratio_pct == cell.ratio_pct)
            .map(|x| x.auc)
            .collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Ten values: median is the mean of the 5th and 6th; linear quartiles
        // sit at positions 2.25 and 6.75 (0-based).
        assert!((cell.median - (v[4] + v[5]) / 2.0).abs() < 1e-15);
        assert!((cell.q1 - (v[2] + 0.25 * (v[3] - v[2]))).abs() < 1e-15);
        assert!((cell.q3 - (v[6] + 0.75 * (v[7] - v[6]))).abs() < 1e-15);
        assert_eq!((cell.min, cell.max), (v[0], v[9]));
    }
    assert!(summary.to_csv().starts_with("regime,ratio_pct,median,q1,q3,min,max\n"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn balance_invariants(
        pops in prop::collection::vec(5usize..60, 2..10),
        per_class in 1usize..3,
        seed in any::<u64>(),
    ) {
        let groups: Vec<(String, String, usize)> = pops
            .iter()
            .enumerate()
            .map(|(i, &n)| (format!("c{}", i % 2), format!("p{i}"), n))
            .collect();
        let m = manifest(&groups);
        let classes = [pops.iter().step_by(2).count(), pops.iter().skip(1).step_by(2).count()];
        prop_assume!(classes.iter().all(|&c| c >= per_class));
        let chosen = 2 * per_class;
        let total = chosen * 5;
        let b = balance(&m, per_class, total, seed).unwrap();
        let q = b.per_prompt_quota();
        prop_assert_eq!(q.len(), chosen);
        prop_assert_eq!(b.manifest.len(), total);
        prop_assert!(q.values().all(|&c| c == total / chosen || c == total.div_ceil(chosen)));
        prop_assert_eq!(counts_by_prompt(&b.manifest), q);
        prop_assert_eq!(balance(&m, per_class, total, seed).unwrap(), b.clone());

        let val = chosen + 1;
        let (train, v) = split(&b, total - val, val, seed).unwrap();
        let vc = counts_by_prompt(&v);
        let (lo, hi) = (vc.values().min().copied().unwrap_or(0), vc.values().max().copied().unwrap_or(0));
        prop_assert!(hi - lo <= 1);
        prop_assert_eq!(train.len() + v.len(), total);
    }
}
