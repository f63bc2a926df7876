//! Regret values checked against an independent signal simulator and invariants.

mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust_agg::regret::{absolute_loss, additive_regret, omniscient_loss, regret};
use robust_agg::{
    support_distribution, Aggregator, BaselineKind, FnAggregator, InformationStructure, Paradigm,
};

/// Per-agent likelihood of the low signal given the state, derived from the
/// martingale split of the prior rather than from the library's conversion.
fn low_likelihoods(lo: f64, hi: f64, mu: f64) -> (f64, f64) {
    let p_low = (hi - mu) / (hi - lo);
    (p_low * (1.0 - lo) / (1.0 - mu), p_low * lo / mu)
}

/// Monte Carlo estimate of `E[(f(x) - Pr[omega=1 | s1, s2])^2]` and its standard error.
fn simulate(
    theta: &InformationStructure,
    f: &impl Aggregator<f64>,
    draws: usize,
    seed: u64,
) -> (f64, f64) {
    let InformationStructure { mu, a0, a1, b0, b1 } = *theta;
    let (pa0, pa1) = low_likelihoods(a0, a1, mu);
    let (pb0, pb1) = low_likelihoods(b0, b1, mu);
    let like = |low: bool, p: f64| if low { p } else { 1.0 - p };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..draws {
        let omega = rng.random::<f64>() < mu;
        let s1 = rng.random::<f64>() < if omega { pa1 } else { pa0 };
        let s2 = rng.random::<f64>() < if omega { pb1 } else { pb0 };
        let w1 = mu * like(s1, pa1) * like(s2, pb1);
        let w0 = (1.0 - mu) * like(s1, pa0) * like(s2, pb0);
        let g = w1 / (w1 + w0);
        let x1 = if s1 { a0 } else { a1 };
        let x2 = if s2 { b0 } else { b1 };
        let e = f.eval(x1, x2) - g;
        sum += e * e;
        sq += e * e * e * e;
    }
    let mean = sum / draws as f64;
    let var = (sq / draws as f64 - mean * mean).max(0.0);
    (mean, (var / draws as f64).sqrt())
}

#[test]
fn simple_average_regret_matches_simulation() {
    let theta = InformationStructure::new(0.3, 0.1, 0.5, 0.1, 0.5).unwrap();
    let exact = additive_regret(&BaselineKind::SimpleAverage, &theta).unwrap();
    assert!((exact - 0.01703).abs() < 5e-6, "exact {exact}");
    let (mc, se) = simulate(&theta, &BaselineKind::SimpleAverage, 1_000_000, 7);
    assert!(
        (mc - exact).abs() <= 3.0 * se,
        "mc {mc} se {se} exact {exact}"
    );
}

#[test]
fn baseline_regrets_match_simulation_on_asymmetric_structure() {
    let theta = InformationStructure::new(0.35, 0.05, 0.9, 0.2, 0.6).unwrap();
    for kind in BaselineKind::ALL {
        let exact = additive_regret(&kind, &theta).unwrap();
        let (mc, se) = simulate(&theta, &kind, 400_000, 11);
        assert!(
            (mc - exact).abs() <= 4.0 * se + 1e-12,
            "{kind:?}: mc {mc} se {se} exact {exact}"
        );
    }
}

#[test]
fn single_atom_regret_is_squared_error_at_prior() {
    let theta = InformationStructure::new(0.4, 0.4, 0.4, 0.4, 0.4).unwrap();
    let f = FnAggregator(|x1: f64, x2: f64| 0.1 + 0.5 * x1 * x2);
    let want = (f.eval(0.4, 0.4) - 0.4f64).powi(2);
    assert!((additive_regret(&f, &theta).unwrap() - want).abs() < 1e-15);
}

proptest! {
    #[test]
    fn report_distribution_is_a_martingale(theta in common::structure()) {
        let d = support_distribution(&theta).unwrap();
        prop_assert!((d.total() - 1.0).abs() < 1e-12);
        prop_assert!((d.mean_x1() - theta.mu).abs() < 1e-12);
        prop_assert!((d.mean_x2() - theta.mu).abs() < 1e-12);
        for (i, a) in d.atoms.iter().enumerate() {
            prop_assert!(a.p >= 0.0);
            for b in &d.atoms[i + 1..] {
                prop_assert!(a.x1 != b.x1 || a.x2 != b.x2);
            }
        }
    }

    #[test]
    fn additive_and_absolute_differ_by_omniscient_loss(theta in common::structure(), f in common::grid(6)) {
        let add = additive_regret(&f, &theta).unwrap();
        let abs = absolute_loss(&f, &theta).unwrap();
        let omni = omniscient_loss(&theta).unwrap();
        prop_assert!((abs - omni - add).abs() < 1e-12);
        prop_assert!(add >= 0.0 && omni >= 0.0);
        let via = regret(&f, &theta, &Paradigm::absolute()).unwrap();
        prop_assert!((via - abs).abs() < 1e-12);
    }

    #[test]
    fn omniscient_aggregator_has_zero_regret(theta in common::structure()) {
        let f = robust_agg::Omniscient { mu: theta.mu };
        prop_assert!(additive_regret(&f, &theta).unwrap() < 1e-24);
    }
}
