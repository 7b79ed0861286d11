use proptest::prelude::*;

use super::*;
use crate::exact_dp::evaluate;
use crate::instances::{generate_instance, random_policy, RandomInstanceSpec, RewardFamily};
use crate::rng::RngStreams;

fn instance(family: RewardFamily, seed: u64) -> (TicProblem, TabularPolicy) {
    let problem = generate_instance(&RandomInstanceSpec::new(family), seed).unwrap();
    let mut rng = RngStreams::new(seed).stream("policy");
    let policy = random_policy(&problem, &mut rng);
    (problem, policy)
}

fn full() -> BpiConfig {
    BpiConfig::new(ActionSpec::FullSweepArgmax)
}

/// Finite-horizon value iteration for time-consistent rewards.
fn value_iteration(problem: &TicProblem) -> Vec<Vec<usize>> {
    let kernel = problem.kernel().unwrap();
    let mut v: Vec<f64> = problem.rewards().terminal().to_vec();
    let mut policy = vec![Vec::new(); problem.horizon()];
    for t in (0..problem.horizon()).rev() {
        let mut next_v = Vec::new();
        for x in 0..problem.n_states(t) {
            let q: Vec<f64> = (0..problem.n_actions(t))
                .map(|u| {
                    problem.rewards().raw()[t][x][u]
                        + kernel[t][x][u]
                            .iter()
                            .zip(&v)
                            .map(|(p, w)| p * w)
                            .sum::<f64>()
                })
                .collect();
            let best = (0..q.len()).fold(0, |b, u| if q[u] > q[b] { u } else { b });
            policy[t].push(best);
            next_v.push(q[best]);
        }
        v = next_v;
    }
    policy
}

#[test]
fn full_sweep_reaches_equilibrium_within_two_sweeps() {
    for family in RewardFamily::standard_set() {
        for seed in 0..40 {
            let (p, pi0) = instance(family, seed);
            let out = bpi_run(&p, &pi0, &full()).unwrap();
            assert!(out.terminated);
            assert!(
                out.trace.len() <= 2,
                "{family:?} {seed}: {} sweeps",
                out.trace.len()
            );
            assert!(spe_check(&p, &out.policy, DEFAULT_TIE_TOLERANCE)
                .unwrap()
                .passed());
            for snap in &out.trace.iterations {
                if snap.changed.is_empty() {
                    assert_eq!(snap.comparison.order, LexOrder::Equal);
                } else {
                    assert_eq!(snap.comparison.order, LexOrder::Greater);
                }
            }
        }
    }
}

#[test]
fn time_consistent_equilibrium_is_the_optimal_policy() {
    for seed in 0..40 {
        let (p, pi0) = instance(RewardFamily::TimeConsistent, seed);
        let out = bpi_run(&p, &pi0, &full()).unwrap();
        assert_eq!(out.policy.rows(), value_iteration(&p).as_slice());
    }
}

#[test]
fn rerunning_on_an_equilibrium_changes_nothing() {
    let (p, pi0) = instance(RewardFamily::QuadraticMean { gamma: 1.2 }, 3);
    let first = bpi_run(&p, &pi0, &full()).unwrap();
    let again = bpi_run(&p, &first.policy, &full()).unwrap();
    assert_eq!(again.trace.len(), 1);
    assert_eq!(again.policy, first.policy);
}

#[test]
fn local_sweep_passes_local_check() {
    let spec =
        RandomInstanceSpec::new(RewardFamily::QuadraticMean { gamma: 1.2 }).with_actions(3, 5);
    for seed in 0..30 {
        let p = generate_instance(&spec, seed).unwrap();
        let pi0 = TabularPolicy::first_action(&p);
        let config = BpiConfig::new(ActionSpec::LocalSweepArgmax { radius: 1.5 });
        let out = bpi_run(&p, &pi0, &config).unwrap();
        assert!(out.terminated);
        let report =
            local_spe_check(&p, &out.policy, 1.5, &LabelDistance, DEFAULT_TIE_TOLERANCE).unwrap();
        assert!(report.passed());
    }
}

#[test]
fn improvements_never_hurt_under_the_new_policy() {
    for seed in 0..20 {
        let (p, pi0) = instance(RewardFamily::StateScaled { gamma: 1.5 }, seed);
        let out = bpi_run(&p, &pi0, &full()).unwrap();
        let mut previous = pi0.clone();
        for snap in &out.trace.iterations {
            let tables = evaluate(&p, &snap.policy).unwrap();
            for t in 0..p.horizon() {
                for x in 0..p.n_states(t) {
                    let s = tables.slice(t);
                    assert!(
                        s.q(x, snap.policy.action(t, x)) >= s.q(x, previous.action(t, x)) - 1e-12
                    );
                }
            }
            previous = snap.policy.clone();
        }
    }
}

#[derive(Debug)]
struct Worst;

impl ActionProposer for Worst {
    fn propose(&self, _t: usize, _x: usize, q_row: &[f64], _current: usize) -> Option<usize> {
        (0..q_row.len()).min_by(|&a, &b| q_row[a].total_cmp(&q_row[b]))
    }
}

#[test]
fn non_improving_proposals_are_ignored() {
    let (p, pi0) = instance(RewardFamily::Hyperbolic { h: 1.0 }, 4);
    let solved = bpi_run(&p, &pi0, &full()).unwrap().policy;
    let out = bpi_run(
        &p,
        &solved,
        &BpiConfig::new(ActionSpec::Custom(Arc::new(Worst))),
    )
    .unwrap();
    assert_eq!(out.policy, solved);
}

#[test]
fn iteration_cap_is_reported() {
    let (p, pi0) = (1..100)
        .map(|s| instance(RewardFamily::TimeConsistent, s))
        .find(|(p, pi)| !spe_check(p, pi, DEFAULT_TIE_TOLERANCE).unwrap().passed())
        .unwrap();
    let out = bpi_run(&p, &pi0, &full().with_max_iters(1)).unwrap();
    assert!(!out.terminated);
    assert_eq!(out.trace.len(), 1);
}

#[test]
fn empty_radius_is_a_configuration_error() {
    let (p, pi0) = instance(RewardFamily::TimeConsistent, 1);
    let config = BpiConfig::new(ActionSpec::LocalSweepArgmax { radius: 0.0 });
    assert!(matches!(
        bpi_run(&p, &pi0, &config),
        Err(SperlError::Config(_))
    ));
    assert!(local_spe_check(&p, &pi0, -1.0, &LabelDistance, 1e-9).is_err());
}

#[test]
fn lex_compare_cases() {
    let basis = |s: Vec<Vec<f64>>| PolicyBasis { slices: s };
    let a = basis(vec![vec![0.0, 5.0], vec![1.0, 1.0]]);
    let b = basis(vec![vec![9.0, 9.0], vec![1.0, 0.5]]);
    assert_eq!(
        lex_compare(&a, &b, 1e-9).unwrap(),
        LexComparison {
            order: LexOrder::Greater,
            epoch: Some(1)
        }
    );
    assert_eq!(lex_compare(&b, &a, 1e-9).unwrap().order, LexOrder::Less);
    let c = basis(vec![vec![0.0, 5.0], vec![2.0, 0.0]]);
    assert_eq!(
        lex_compare(&c, &a, 1e-9).unwrap().order,
        LexOrder::Incomparable
    );
    assert_eq!(lex_compare(&a, &a, 1e-9).unwrap().order, LexOrder::Equal);
    let d = basis(vec![vec![0.0]]);
    assert!(lex_compare(&a, &d, 1e-9).is_err());
}

#[test]
fn spe_check_reports_a_witness() {
    let (p, pi0) = (1..100)
        .map(|s| instance(RewardFamily::QuadraticMean { gamma: 1.2 }, s))
        .find(|(p, pi)| !spe_check(p, pi, DEFAULT_TIE_TOLERANCE).unwrap().passed())
        .unwrap();
    let report = spe_check(&p, &pi0, DEFAULT_TIE_TOLERANCE).unwrap();
    let w = report.witness().unwrap();
    let tables = evaluate(&p, &pi0).unwrap();
    let s = tables.slice(w.t);
    assert!(s.q(w.x, w.u) > s.q(w.x, pi0.action(w.t, w.x)) + DEFAULT_TIE_TOLERANCE);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn iterates_improve_lexicographically(seed in 0u64..1_000_000, family in 0usize..4) {
        let (p, pi0) = instance(RewardFamily::standard_set()[family], seed);
        let out = bpi_run(&p, &pi0, &full()).unwrap();
        prop_assert!(out.terminated);
        prop_assert!(spe_check(&p, &out.policy, DEFAULT_TIE_TOLERANCE).unwrap().passed());
        let mut prev = out.trace.initial_basis.clone();
        for snap in &out.trace.iterations {
            let fresh = PolicyBasis::of(&p, &snap.policy).unwrap();
            for (a, b) in fresh.slices.iter().flatten().zip(snap.basis.slices.iter().flatten()) {
                prop_assert!((a - b).abs() < 1e-10);
            }
            let cmp = lex_compare(&fresh, &prev, DEFAULT_TIE_TOLERANCE).unwrap();
            prop_assert!(matches!(cmp.order, LexOrder::Greater | LexOrder::Equal));
            prev = fresh;
        }
    }
}
