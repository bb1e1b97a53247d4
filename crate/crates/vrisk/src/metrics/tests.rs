use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::testutil::{random_instance, toy4};

fn ranking(ids: &[&str], k: usize) -> Ranking {
    Ranking::new(ids.iter().map(|s| s.to_string()).collect(), k).unwrap()
}

/// Independent Rockafellar-Uryasev evaluation: minimize the objective
/// over all distinct loss values (plus zero) instead of walking the
/// sorted mass. Test-side oracle for the CVaR implementation.
fn ru_value(losses: &[f64], probs: &[f64], beta: f64) -> f64 {
    let mut candidates: Vec<f64> = losses.to_vec();
    candidates.push(0.0);
    candidates
        .iter()
        .map(|&z| {
            z + losses
                .iter()
                .zip(probs)
                .map(|(&l, &p)| p * (l - z).max(0.0))
                .sum::<f64>()
                / beta
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn base_value_ndcg_hand_computed() {
    let spec = MetricSpec::ndcg();
    let v = base_value(&spec, &[1.0, 0.0], 2, &[1.0, 1.0], 0.0, 1.0).unwrap();
    let expected = 1.0 / (1.0 + 1.0 / 3f64.log2());
    assert!((v - expected).abs() < 1e-12);
    assert!((v - 0.6131).abs() < 5e-4);
}

#[test]
fn base_value_avgrel_all_max() {
    let spec = MetricSpec::avg_rel();
    let v = base_value(&spec, &[1.0, 1.0], 2, &[], 0.0, 1.0).unwrap();
    assert_eq!(v, 1.0);
}

#[test]
fn base_value_err_binary() {
    let spec = MetricSpec::err();
    let v = base_value(&spec, &[1.0, 1.0], 2, &[], 0.0, 1.0).unwrap();
    assert!((v - 0.625).abs() < 1e-12);
}

#[test]
fn base_value_prefix_divides_by_k() {
    // A one-doc prefix at k = 2 still divides by 2.
    let spec = MetricSpec::avg_rel();
    let v = base_value(&spec, &[1.0], 2, &[], 0.0, 1.0).unwrap();
    assert_eq!(v, 0.5);
}

#[test]
fn base_value_error_paths() {
    let spec = MetricSpec::ndcg();
    assert!(matches!(
        base_value(&spec, &[1.0], 0, &[1.0], 0.0, 1.0),
        Err(Error::ZeroCutoff)
    ));
    assert!(matches!(
        base_value(&spec, &[1.0], 2, &[], 0.0, 1.0),
        Err(Error::EmptyIdeal)
    ));
    assert!(matches!(
        base_value(&spec, &[1.0, 1.0, 1.0], 2, &[1.0], 0.0, 1.0),
        Err(Error::TooManyGrades { .. })
    ));
    let bad = MetricSpec::rbp().with_rbp_persistence(1.0);
    assert!(matches!(
        base_value(&bad, &[1.0], 2, &[], 0.0, 1.0),
        Err(Error::InvalidMetricSpec(_))
    ));
}

#[test]
fn per_intent_value_toy_cases() {
    let inst = toy4();
    let spec = MetricSpec::avg_rel();
    let r = ranking(&["d1", "d3"], 2);
    assert!((per_intent_value(&inst, &r, "c2", &spec).unwrap() - 0.5).abs() < 1e-12);
    let r = ranking(&["d3", "d4"], 2);
    assert!((per_intent_value(&inst, &r, "c2", &spec).unwrap() - 1.0).abs() < 1e-12);
    assert!(matches!(
        per_intent_value(&inst, &r, "c9", &spec),
        Err(Error::UnknownIntent(_))
    ));
}

#[test]
fn per_intent_value_zero_column() {
    // An intent with no relevant docs values every ranking at zero.
    let intents = IntentDistributionFixture::two();
    let rel = crate::instance::RelevanceTable::new(
        vec!["a".into(), "b".into()],
        vec![vec![1.0, 0.0], vec![1.0, 0.0]],
        1.0,
    )
    .unwrap();
    let inst = crate::instance::QueryInstance::new("q", intents, rel, None).unwrap();
    let r = ranking(&["a", "b"], 2);
    for spec in all_specs() {
        let v = per_intent_value(&inst, &r, "c2", &spec).unwrap();
        assert_eq!(v, 0.0, "{spec:?}");
    }
}

struct IntentDistributionFixture;
impl IntentDistributionFixture {
    fn two() -> crate::instance::IntentDistribution {
        crate::instance::IntentDistribution::new(
            vec!["c1".into(), "c2".into()],
            vec![0.5, 0.5],
        )
        .unwrap()
    }
}

fn all_specs() -> Vec<MetricSpec> {
    let mut out = Vec::new();
    for metric in BaseMetric::all() {
        out.push(MetricSpec::new(metric));
        out.push(MetricSpec::new(metric).with_gain(GainScheme::Linear));
    }
    out
}

#[test]
fn v_std_toy_cases() {
    let inst = toy4();
    let spec = MetricSpec::avg_rel();
    let r = ranking(&["d1", "d2"], 2);
    assert!((v_std(&inst, &r, &spec).unwrap() - 0.51).abs() < 1e-12);
    let empty = Ranking::new(vec![], 2).unwrap();
    assert_eq!(v_std(&inst, &empty, &spec).unwrap(), 0.0);
}

#[test]
fn v_std_maximized_by_top_raw_docs_under_avgrel() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spec = MetricSpec::avg_rel();
    for _ in 0..20 {
        let inst = random_instance(&mut rng, 8, 3, 4);
        let k = 3;
        let mut by_raw: Vec<usize> = (0..inst.n_docs()).collect();
        by_raw.sort_by(|&a, &b| inst.raw_relevance_at(b).total_cmp(&inst.raw_relevance_at(a)));
        let eval = QueryEvaluator::new(&inst, &spec, k).unwrap();
        let best = eval.v_std(&by_raw[..k]);
        for subset in (0..inst.n_docs()).combinations(k) {
            assert!(eval.v_std(&subset) <= best + 1e-12);
        }
    }
}

#[test]
fn v_iw_matches_toy_table() {
    let inst = toy4();
    let spec = MetricSpec::ndcg();
    let r = ranking(&["d1", "d3"], 2);
    let v = v_iw(&inst, &r, &spec).unwrap();
    assert!((v - 0.502).abs() < 1e-3, "got {v}");
}

#[test]
fn v_iw_collapses_to_v_std_for_linear_specs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let linear = [
        MetricSpec::avg_rel(),
        MetricSpec::dcg().with_gain(GainScheme::Linear),
        MetricSpec::prec_at_k(),
    ];
    for _ in 0..30 {
        let inst = random_instance(&mut rng, 10, 4, 4);
        let k = 4;
        let mut idxs: Vec<usize> = (0..inst.n_docs()).collect();
        for i in (1..idxs.len()).rev() {
            idxs.swap(i, rng.gen_range(0..=i));
        }
        idxs.truncate(k);
        for spec in &linear {
            let eval = QueryEvaluator::new(&inst, spec, k).unwrap();
            let iw = eval.v_iw(&idxs);
            let std = eval.v_std(&idxs);
            assert!((iw - std).abs() <= 1e-9, "{spec:?}: {iw} vs {std}");
        }
    }
}

#[test]
fn v_iw_single_intent_equals_per_intent_value() {
    let intents =
        crate::instance::IntentDistribution::new(vec!["only".into()], vec![1.0]).unwrap();
    let rel = crate::instance::RelevanceTable::new(
        vec!["a".into(), "b".into(), "c".into()],
        vec![vec![3.0], vec![1.0], vec![2.0]],
        4.0,
    )
    .unwrap();
    let inst = crate::instance::QueryInstance::new("q", intents, rel, None).unwrap();
    let r = ranking(&["a", "c"], 2);
    for spec in all_specs() {
        let iw = v_iw(&inst, &r, &spec).unwrap();
        let pi = per_intent_value(&inst, &r, "only", &spec).unwrap();
        assert!((iw - pi).abs() < 1e-12);
    }
}

#[test]
fn oracle_targets_match_enumeration() {
    // The sort-based oracle must agree with brute force over all ordered
    // arrangements, for every metric.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..10 {
        let inst = random_instance(&mut rng, 6, 3, 3);
        let k = 2 + trial % 2;
        for spec in all_specs() {
            let targets = compute_targets(&inst, &spec, k, &TargetMode::Oracle).unwrap();
            let eval = QueryEvaluator::new(&inst, &spec, k).unwrap();
            for c in 0..inst.n_intents() {
                let mut best = 0.0f64;
                for subset in (0..inst.n_docs()).combinations(k) {
                    for perm in subset.iter().copied().permutations(k) {
                        best = best.max(eval.per_intent_value(&perm, c));
                    }
                }
                assert!(
                    (best - targets[c]).abs() < 1e-10,
                    "{spec:?} intent {c}: enumerated {best} vs oracle {}",
                    targets[c]
                );
            }
        }
    }
}

#[test]
fn targets_toy_cases() {
    let inst = toy4();
    let spec = MetricSpec::avg_rel();
    let oracle = compute_targets(&inst, &spec, 2, &TargetMode::Oracle).unwrap();
    assert!((oracle[1] - 1.0).abs() < 1e-12);
    let scaled =
        compute_targets(&inst, &spec, 2, &TargetMode::ScaledOracle { alpha: 0.2 }).unwrap();
    assert!((scaled[1] - 0.2).abs() < 1e-12);
    let zero = compute_targets(&inst, &spec, 2, &TargetMode::Constant(0.0)).unwrap();
    let r = ranking(&["d1", "d2"], 2);
    let losses = intent_loss(&inst, &r, &spec, &zero).unwrap();
    assert_eq!(losses, vec![0.0, 0.0]);
}

#[test]
fn intent_loss_toy_case() {
    let inst = toy4();
    let spec = MetricSpec::avg_rel();
    let targets = compute_targets(&inst, &spec, 2, &TargetMode::Oracle).unwrap();
    let r = ranking(&["d1", "d2"], 2);
    let losses = intent_loss(&inst, &r, &spec, &targets).unwrap();
    assert!((losses[0] - 0.0).abs() < 1e-12);
    assert!((losses[1] - 1.0).abs() < 1e-12);

    // A ranking above a constant target clips to zero loss.
    let losses = intent_loss(&inst, &r, &spec, &[0.1, 0.0]).unwrap();
    assert_eq!(losses, vec![0.0, 0.0]);
}

#[test]
fn vrisk_toy_cases() {
    let inst = toy4();
    let spec = MetricSpec::avg_rel();
    let targets = compute_targets(&inst, &spec, 2, &TargetMode::Oracle).unwrap();
    let r = ranking(&["d1", "d2"], 2);

    let risk = vrisk(&inst, &r, &spec, &targets, 0.49).unwrap();
    assert!((risk.vrisk - 1.0).abs() < 1e-12);
    assert_eq!(risk.worst_mass.len(), 1);
    assert_eq!(risk.worst_mass[0].intent, "c2");
    assert!((risk.worst_mass[0].weight - 0.49).abs() < 1e-12);
    assert!((risk.var_threshold - 1.0).abs() < 1e-12);

    let risk = vrisk(&inst, &r, &spec, &targets, 1.0).unwrap();
    assert!((risk.vrisk - 0.49).abs() < 1e-12);

    assert!(matches!(
        vrisk(&inst, &r, &spec, &targets, 0.0),
        Err(Error::BetaOutOfRange(_))
    ));
    assert!(matches!(
        vrisk(&inst, &r, &spec, &targets, 1.5),
        Err(Error::BetaOutOfRange(_))
    ));
}

#[test]
fn vrisk_constant_losses_is_constant_in_beta() {
    let inst = toy4();
    let spec = MetricSpec::avg_rel();
    // Constant target 1.0 with the empty ranking: every loss is 1.0.
    let empty = Ranking::new(vec![], 2).unwrap();
    for beta in [0.01, 0.3, 0.49, 0.51, 1.0] {
        let risk = vrisk(&inst, &empty, &spec, &[1.0, 1.0], beta).unwrap();
        assert!((risk.vrisk - 1.0).abs() < 1e-12, "beta {beta}");
    }
}

#[test]
fn risk_evaluation_invariants_on_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let spec = MetricSpec::avg_rel();
    for trial in 0..200 {
        let inst = random_instance(&mut rng, 6, 1 + trial % 6, 4);
        let targets = compute_targets(&inst, &spec, 3, &TargetMode::Oracle).unwrap();
        let mut idxs: Vec<usize> = (0..inst.n_docs()).collect();
        idxs.truncate(rng.gen_range(0..=3));
        let r = Ranking::from_indices(&inst, &idxs, 3);
        let beta = rng.gen_range(0.01..=1.0f64);
        let risk = vrisk(&inst, &r, &spec, &targets, beta).unwrap();

        let mass: f64 = risk.worst_mass.iter().map(|e| e.weight).sum();
        assert!((mass - beta).abs() <= 1e-9, "mass {mass} vs beta {beta}");
        let recomputed: f64 =
            risk.worst_mass.iter().map(|e| e.weight * e.loss).sum::<f64>() / beta;
        assert!((recomputed - risk.vrisk).abs() <= 1e-9);
        assert!(risk.vrisk >= risk.var_threshold - 1e-12);
        assert!(risk.var_threshold >= 0.0);
    }
}

#[test]
fn vrisk_equals_rockafellar_uryasev_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let spec = MetricSpec::avg_rel();
    for trial in 0..300 {
        let inst = random_instance(&mut rng, 8, 1 + trial % 7, 4);
        let targets = compute_targets(&inst, &spec, 4, &TargetMode::Oracle).unwrap();
        let mut idxs: Vec<usize> = (0..inst.n_docs()).collect();
        for i in (1..idxs.len()).rev() {
            idxs.swap(i, rng.gen_range(0..=i));
        }
        idxs.truncate(rng.gen_range(0..=4));
        let r = Ranking::from_indices(&inst, &idxs, 4);
        let beta = rng.gen_range(0.01..=1.0f64);
        let risk = vrisk(&inst, &r, &spec, &targets, beta).unwrap();
        let oracle = ru_value(&risk.losses, inst.intents().probs(), beta);
        assert!(
            (risk.vrisk - oracle).abs() <= 1e-9,
            "sorted-mass {} vs RU {oracle}",
            risk.vrisk
        );
    }
}

#[test]
fn vrisk_monotone_in_beta_and_minimax_limit() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let spec = MetricSpec::avg_rel();
    let grid = [0.01, 0.05, 0.1, 0.25, 0.5, 1.0];
    for _ in 0..50 {
        let inst = random_instance(&mut rng, 8, 5, 4);
        let targets = compute_targets(&inst, &spec, 3, &TargetMode::Oracle).unwrap();
        let idxs = vec![0usize, 1];
        let r = Ranking::from_indices(&inst, &idxs, 3);
        let mut prev = f64::INFINITY;
        for beta in grid {
            let v = vrisk(&inst, &r, &spec, &targets, beta).unwrap().vrisk;
            assert!(v <= prev + 1e-12, "beta {beta}: {v} > {prev}");
            prev = v;
        }
        // beta -> 0 recovers the worst single intent.
        let tiny = vrisk(&inst, &r, &spec, &targets, 1e-9).unwrap();
        let max_loss = tiny.losses.iter().cloned().fold(0.0f64, f64::max);
        assert!((tiny.vrisk - max_loss).abs() <= 1e-6);
    }
}

#[test]
fn vrisk_at_beta_one_is_expected_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let spec = MetricSpec::avg_rel();
    for _ in 0..100 {
        let inst = random_instance(&mut rng, 6, 4, 4);
        let targets = compute_targets(&inst, &spec, 2, &TargetMode::Oracle).unwrap();
        let r = Ranking::from_indices(&inst, &[0, 1], 2);
        let risk = vrisk(&inst, &r, &spec, &targets, 1.0).unwrap();
        let expected: f64 = risk
            .losses
            .iter()
            .zip(inst.intents().probs())
            .map(|(l, p)| l * p)
            .sum();
        assert!((risk.vrisk - expected).abs() <= 1e-9);
    }
}

#[test]
fn minimizing_expected_loss_maximizes_v_iw_under_oracle_targets() {
    // With oracle targets and a modular metric the hinge never clips, so
    // the beta = 1 risk ordering is the reverse of the v_iw ordering.
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let spec = MetricSpec::avg_rel();
    let mut checked = 0;
    for _ in 0..40 {
        let inst = random_instance(&mut rng, 7, 3, 4);
        let k = 3;
        let targets = compute_targets(&inst, &spec, k, &TargetMode::Oracle).unwrap();
        let eval = QueryEvaluator::new(&inst, &spec, k).unwrap();
        let mut best_risk: Option<(f64, Vec<usize>)> = None;
        let mut best_iw: Option<(f64, Vec<usize>)> = None;
        let mut risk_gap = f64::INFINITY;
        let mut iw_gap = f64::INFINITY;
        for subset in (0..inst.n_docs()).combinations(k) {
            let losses = eval.losses(&subset, &targets).unwrap();
            let risk: f64 = losses
                .iter()
                .zip(inst.intents().probs())
                .map(|(l, p)| l * p)
                .sum();
            let iw = eval.v_iw(&subset);
            match &mut best_risk {
                None => best_risk = Some((risk, subset.clone())),
                Some((r, s)) => {
                    if risk < *r {
                        risk_gap = *r - risk;
                        *r = risk;
                        *s = subset.clone();
                    } else {
                        risk_gap = risk_gap.min(risk - *r);
                    }
                }
            }
            match &mut best_iw {
                None => best_iw = Some((iw, subset.clone())),
                Some((v, s)) => {
                    if iw > *v {
                        iw_gap = *v - iw;
                        *v = iw;
                        *s = subset.clone();
                    } else {
                        iw_gap = iw_gap.min(*v - iw);
                    }
                }
            }
        }
        let (_, risk_set) = best_risk.unwrap();
        let (_, iw_set) = best_iw.unwrap();
        // Only assert on instances with a unique optimum on both sides.
        if risk_gap.abs() > 1e-9 && iw_gap.abs() > 1e-9 {
            assert_eq!(risk_set, iw_set);
            checked += 1;
        }
    }
    assert!(checked > 10, "too few tie-free instances: {checked}");
}

#[test]
fn metric_ranges_stay_in_unit_interval() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..50 {
        let inst = random_instance(&mut rng, 9, 3, 4);
        let k = 4;
        let mut idxs: Vec<usize> = (0..inst.n_docs()).collect();
        idxs.truncate(k);
        for spec in [MetricSpec::ndcg(), MetricSpec::err(), MetricSpec::prec_at_k()] {
            let eval = QueryEvaluator::new(&inst, &spec, k).unwrap();
            for c in 0..inst.n_intents() {
                let v = eval.per_intent_value(&idxs, c);
                assert!((0.0..=1.0).contains(&v), "{spec:?}: {v}");
            }
        }
        // RBP is bounded by 1 but not normalized by an ideal.
        let eval = QueryEvaluator::new(&inst, &MetricSpec::rbp(), k).unwrap();
        for c in 0..inst.n_intents() {
            let v = eval.per_intent_value(&idxs, c);
            assert!((0.0..1.0).contains(&v));
        }
    }
}

#[test]
fn delta_normalize_cases() {
    assert_eq!(delta_normalize(0.45, 0.50), DeltaValue::Defined(90.0));
    assert_eq!(delta_normalize(0.7, 0.7), DeltaValue::Defined(100.0));
    assert_eq!(delta_normalize(0.0, 0.0), DeltaValue::Defined(100.0));
    assert_eq!(delta_normalize(0.2, 0.0), DeltaValue::Undefined);
    assert_eq!(delta_normalize(0.2, 0.0).value(), None);
}

#[test]
fn metric_spec_parses_cli_tokens() {
    for (token, metric) in [
        ("avgrel", BaseMetric::AvgRel),
        ("dcg", BaseMetric::Dcg),
        ("ndcg", BaseMetric::Ndcg),
        ("err", BaseMetric::Err),
        ("rbp", BaseMetric::Rbp),
        ("precatk", BaseMetric::PrecAtK),
    ] {
        assert_eq!(token.parse::<BaseMetric>().unwrap(), metric);
        assert_eq!(metric.to_string(), token);
    }
    assert!("nope".parse::<BaseMetric>().is_err());
}
