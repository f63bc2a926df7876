//! Randomized numerical checks of the covering, concentration, smoothing,
//! solver, and online-learning guarantees the solver relies on.
//!
//! Every property draws its samples from a seeded generator split per sample,
//! so a report depends only on the seed and sample counts, never on the
//! thread count. Each sample yields a slack that is nonnegative exactly when
//! the property holds; tolerances are folded into the slack.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::aggregator::AggregatorGrid;
use crate::best_response::ResponseTarget;
use crate::error::Result;
use crate::info::{
    predictions_to_signal_probs, support_distribution, GridSpec, InformationStructure,
    ReportDistribution,
};
use crate::learning::{mw_step, theory_rate};
use crate::metrics::{
    check_concentration, emd, lipschitz_extension, nearest_in_grid, sample_random_structure, tvd,
    SampleMode, TrimRegions,
};
use crate::qp::{lipschitz_best_response, QpSettings};
use crate::regret::{absolute_loss, additive_regret, omniscient_loss};

/// Distance functions under test; replaceable so the harness can be checked
/// against deliberately broken implementations.
#[derive(Clone, Copy)]
pub struct DistanceFns {
    pub tvd: fn(&ReportDistribution<f64>, &ReportDistribution<f64>) -> f64,
    pub emd: fn(&ReportDistribution<f64>, &ReportDistribution<f64>) -> Result<f64>,
}

impl Default for DistanceFns {
    fn default() -> Self {
        Self {
            tvd: tvd::<f64>,
            emd: |p, q| emd(p, q).map(|r| r.0),
        }
    }
}

/// Sweep controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    /// Samples per property.
    pub samples: usize,
    /// Instances for the brute-force QP comparison, the costliest property per sample.
    pub qp_samples: usize,
    pub seed: u64,
    /// Grid used by the covering and smoothness properties; needs `m > n`.
    pub spec: GridSpec,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            samples: 10_000,
            qp_samples: 10_000,
            seed: 0,
            spec: GridSpec { n: 10, m: 100 },
        }
    }
}

/// Outcome of one property sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    pub name: &'static str,
    pub samples: usize,
    /// Smallest slack seen; negative means violated.
    pub worst_slack: f64,
    /// Description of the worst sample when the property failed.
    pub witness: Option<String>,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.witness.is_none()
    }

    /// `property=... samples=... worst_slack=... status=pass|FAIL witness=...`
    pub fn line(&self) -> String {
        format!(
            "property={} samples={} worst_slack={:.6e} status={} witness={}",
            self.name,
            self.samples,
            self.worst_slack,
            if self.passed() { "pass" } else { "FAIL" },
            self.witness.as_deref().unwrap_or("-")
        )
    }
}

/// All property outcomes of one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub properties: Vec<PropertyReport>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.properties.iter().all(PropertyReport::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &PropertyReport> {
        self.properties.iter().filter(|p| !p.passed())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for p in &self.properties {
            let _ = writeln!(out, "{}", p.line());
        }
        out
    }
}

/// Names of every property, in report order.
pub const PROPERTIES: [&str; 12] = [
    "concentration",
    "tvd_covering",
    "emd_covering",
    "emd_le_2tvd",
    "prior_bound",
    "emd_metric",
    "trimmed_mass",
    "extension_lipschitz",
    "qp_brute_force",
    "mw_regret",
    "loss_identity",
    "regret_smoothness",
];

/// Runs every property sweep.
pub fn run_verify(config: &VerifyConfig, fns: &DistanceFns) -> VerifyReport {
    let properties = PROPERTIES
        .iter()
        .enumerate()
        .map(|(id, &name)| {
            let samples = if name == "qp_brute_force" {
                config.qp_samples
            } else {
                config.samples
            };
            sweep(name, id as u64, samples, config, fns)
        })
        .collect();
    VerifyReport { properties }
}

/// Generator for sample `i` of property `id`.
fn sample_rng(seed: u64, id: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ id.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(i as u64);
    rng
}

type Sample = (f64, String);

fn sweep(
    name: &'static str,
    id: u64,
    samples: usize,
    config: &VerifyConfig,
    fns: &DistanceFns,
) -> PropertyReport {
    let check = |i: usize| -> Sample {
        let mut rng = sample_rng(config.seed, id, i);
        let outcome = match name {
            "concentration" => concentration(&mut rng, i, config.spec),
            "tvd_covering" => tvd_covering(&mut rng, i, config.spec, fns),
            "emd_covering" => emd_covering(&mut rng, i, config.spec, fns),
            "emd_le_2tvd" => emd_vs_tvd(&mut rng, i, config.spec, fns),
            "prior_bound" => prior_bound(&mut rng, i, config.spec, fns),
            "emd_metric" => emd_metric(&mut rng, i, fns),
            "trimmed_mass" => trimmed_mass(&mut rng, i),
            "extension_lipschitz" => extension_lipschitz(&mut rng),
            "qp_brute_force" => qp_brute_force(&mut rng, i),
            "mw_regret" => mw_regret(&mut rng, i),
            "loss_identity" => loss_identity(&mut rng),
            "regret_smoothness" => regret_smoothness(&mut rng, i, config.spec, fns),
            other => Err(format!("unknown property {other}")),
        };
        outcome.unwrap_or_else(|e| (f64::NEG_INFINITY, format!("error: {e}")))
    };
    let results: Vec<Sample> = (0..samples).into_par_iter().map(check).collect();
    let mut worst: Option<(usize, f64)> = None;
    for (i, (slack, _)) in results.iter().enumerate() {
        // NaN slack counts as a violation.
        let s = if slack.is_nan() {
            f64::NEG_INFINITY
        } else {
            *slack
        };
        if worst.is_none_or(|(_, w)| s < w) {
            worst = Some((i, s));
        }
    }
    let (worst_slack, witness) = match worst {
        Some((i, s)) if s < 0.0 => (
            s,
            Some(format!("sample{i}:{}", results[i].1.replace(' ', ""))),
        ),
        Some((_, s)) => (s, None),
        None => (f64::INFINITY, None),
    };
    PropertyReport {
        name,
        samples,
        worst_slack,
        witness,
    }
}

type Outcome = std::result::Result<Sample, String>;

fn mode_for(i: usize) -> SampleMode {
    if i.is_multiple_of(2) {
        SampleMode::Uniform
    } else {
        SampleMode::NearBoundary
    }
}

fn fmt_theta(t: &InformationStructure<f64>) -> String {
    format!(
        "({:.17e},{:.17e},{:.17e},{:.17e},{:.17e})",
        t.mu, t.a0, t.a1, t.b0, t.b1
    )
}

fn dist(t: &InformationStructure<f64>) -> std::result::Result<ReportDistribution<f64>, String> {
    support_distribution(t).map_err(|e| e.to_string())
}

fn concentration(rng: &mut ChaCha8Rng, i: usize, spec: GridSpec) -> Outcome {
    let theta = if i % 4 == 3 {
        // Prior one report step away from the boundary, informative reports.
        let n = spec.n as f64;
        let mu = if rng.random_bool(0.5) {
            1.0 / n
        } else {
            1.0 - 1.0 / n
        };
        let lo = (rng.random_range(0..=((mu * n).round() as u32 - 1)) as f64) / n;
        let hi = (rng.random_range(((mu * n).round() as u32 + 1)..=spec.n) as f64) / n;
        InformationStructure {
            mu,
            a0: lo,
            a1: hi,
            b0: lo,
            b1: hi,
        }
    } else {
        sample_random_structure(rng, mode_for(i))
    };
    let eps = rng.random_range(1e-3..=0.5);
    let report = check_concentration(&theta, eps).map_err(|e| e.to_string())?;
    Ok((
        report.worst_slack(),
        format!("theta={} eps={eps:.17e}", fmt_theta(&theta)),
    ))
}

/// Structure with reports on the `n`-grid and an arbitrary prior.
fn grid_report_structure(rng: &mut ChaCha8Rng, i: usize, n: u32) -> InformationStructure<f64> {
    let nf = n as f64;
    let mu: f64 = if i.is_multiple_of(2) {
        rng.random()
    } else {
        0.05 * rng.random::<f64>()
    };
    let below = (mu * nf).floor() as u32;
    let above = ((mu * nf).ceil() as u32).min(n);
    let mut draw = || {
        let lo = rng.random_range(0..=below) as f64 / nf;
        let hi = rng.random_range(above..=n) as f64 / nf;
        (lo, hi)
    };
    let (a0, a1) = draw();
    let (b0, b1) = draw();
    InformationStructure { mu, a0, a1, b0, b1 }
}

fn tvd_covering(rng: &mut ChaCha8Rng, i: usize, spec: GridSpec, fns: &DistanceFns) -> Outcome {
    let theta = grid_report_structure(rng, i, spec.n);
    let near = nearest_in_grid(&theta, spec);
    let d = (fns.tvd)(&dist(&theta)?, &dist(&near)?);
    let bound = 6.0 * spec.n as f64 / spec.m as f64;
    Ok((
        bound - d,
        format!("theta={} tvd={d:.17e}", fmt_theta(&theta)),
    ))
}

fn emd_covering(rng: &mut ChaCha8Rng, i: usize, spec: GridSpec, fns: &DistanceFns) -> Outcome {
    let theta = sample_random_structure(rng, mode_for(i));
    let near = nearest_in_grid(&theta, spec);
    let d = (fns.emd)(&dist(&theta)?, &dist(&near)?).map_err(|e| e.to_string())?;
    let (n, m) = (spec.n as f64, spec.m as f64);
    let bound = 12.0 * n / m + 8.0 / n.sqrt() + 4.0 / n;
    Ok((
        bound - d,
        format!("theta={} emd={d:.17e}", fmt_theta(&theta)),
    ))
}

/// A pair of structures that share support points half of the time.
fn structure_pair(
    rng: &mut ChaCha8Rng,
    i: usize,
    spec: GridSpec,
) -> (InformationStructure<f64>, InformationStructure<f64>) {
    match i % 3 {
        0 => {
            let t = grid_report_structure(rng, i / 3, spec.n);
            (t, nearest_in_grid(&t, spec))
        }
        1 => {
            let t = sample_random_structure(rng, mode_for(i / 3));
            (t, nearest_in_grid(&t, spec))
        }
        _ => (
            sample_random_structure(rng, mode_for(i / 3)),
            sample_random_structure(rng, mode_for(i / 3 + 1)),
        ),
    }
}

fn emd_vs_tvd(rng: &mut ChaCha8Rng, i: usize, spec: GridSpec, fns: &DistanceFns) -> Outcome {
    let (s, t) = structure_pair(rng, i, spec);
    let (p, q) = (dist(&s)?, dist(&t)?);
    let e = (fns.emd)(&p, &q).map_err(|e| e.to_string())?;
    let v = (fns.tvd)(&p, &q);
    Ok((
        2.0 * v - e + 1e-12,
        format!(
            "P={} Q={} emd={e:.17e} tvd={v:.17e}",
            fmt_theta(&s),
            fmt_theta(&t)
        ),
    ))
}

fn prior_bound(rng: &mut ChaCha8Rng, i: usize, spec: GridSpec, fns: &DistanceFns) -> Outcome {
    let (s, t) = structure_pair(rng, i, spec);
    let (p, q) = (dist(&s)?, dist(&t)?);
    let gap = (p.mean_x1() - q.mean_x1()).abs();
    let e = (fns.emd)(&p, &q).map_err(|e| e.to_string())?;
    let v = (fns.tvd)(&p, &q);
    Ok((
        (v - gap).min(e - gap) + 1e-12,
        format!("P={} Q={} dmu={gap:.17e}", fmt_theta(&s), fmt_theta(&t)),
    ))
}

fn emd_metric(rng: &mut ChaCha8Rng, i: usize, fns: &DistanceFns) -> Outcome {
    let thetas: Vec<InformationStructure<f64>> = (0..3)
        .map(|k| sample_random_structure(rng, mode_for(i + k)))
        .collect();
    let d: Vec<ReportDistribution<f64>> = thetas
        .iter()
        .map(dist)
        .collect::<std::result::Result<_, _>>()?;
    let e = |a: usize, b: usize| (fns.emd)(&d[a], &d[b]).map_err(|e| e.to_string());
    let (pq, qp, qr, pr) = (e(0, 1)?, e(1, 0)?, e(1, 2)?, e(0, 2)?);
    let symmetry = 1e-10 - (pq - qp).abs();
    let triangle = pq + qr - pr + 1e-9;
    let identity = 1e-12 - e(0, 0)?.abs();
    Ok((
        symmetry.min(triangle).min(identity),
        format!(
            "P={} Q={} R={}",
            fmt_theta(&thetas[0]),
            fmt_theta(&thetas[1]),
            fmt_theta(&thetas[2])
        ),
    ))
}

fn trimmed_mass(rng: &mut ChaCha8Rng, i: usize) -> Outcome {
    let theta = sample_random_structure(rng, mode_for(i));
    let e1 = rng.random_range(1e-3..=0.5);
    let e2 = rng.random_range(1e-3..=0.5);
    let regions = TrimRegions::new(e1, e2, theta.mu).map_err(|e| e.to_string())?;
    let kept = regions.kept_mass(&theta).map_err(|e| e.to_string())?;
    Ok((
        kept - (1.0 - 4.0 * e1 - 2.0 * e2) + 1e-12,
        format!("theta={} eps1={e1:.17e} eps2={e2:.17e}", fmt_theta(&theta)),
    ))
}

/// Largest finite-difference slope along one random row and one random column.
fn extension_lipschitz(rng: &mut ChaCha8Rng) -> Outcome {
    let mu = rng.random_range(1e-3..0.999);
    let e1 = rng.random_range(0.01..0.49);
    let e2 = rng.random_range(0.01..0.49);
    let bound = 8.0 / (e1 * e1 * e2);
    let steps = 256;
    let h = 1.0 / steps as f64;
    let row: f64 = rng.random();
    let col: f64 = rng.random();
    let g = |x1: f64, x2: f64| lipschitz_extension(mu, e1, e2, x1, x2).map_err(|e| e.to_string());
    let mut worst: f64 = 0.0;
    for k in 0..steps {
        let (a, b) = (k as f64 * h, (k + 1) as f64 * h);
        worst = worst.max((g(b, row)? - g(a, row)?).abs() / h);
        worst = worst.max((g(col, b)? - g(col, a)?).abs() / h);
    }
    Ok((
        1.0 - worst / bound,
        format!("mu={mu:.17e} eps1={e1:.17e} eps2={e2:.17e} slope={worst:.6e} bound={bound:.6e}"),
    ))
}

/// Minimum of `sum pi (f - t)^2` over grids with values on multiples of `h`
/// and adjacent differences at most `c`, by exhaustive dynamic programming.
///
/// Cells are visited row by row keeping the last `side` values as state.
/// Clamping into the target range never hurts, and any feasible grid spans at
/// most `2 (side - 1) c`, so overlapping value windows cover every candidate.
pub fn lattice_qp_oracle(target: &ResponseTarget<f64>, c: f64, h: f64) -> f64 {
    let side = target.side();
    let cells = side * side;
    let r = (c / h).round() as usize;
    let top = (1.0 / h).round() as usize;
    let reached: Vec<usize> = (0..cells).filter(|&i| target.mass[i] > 0.0).collect();
    if reached.is_empty() {
        return 0.0;
    }
    let tmin = reached
        .iter()
        .map(|&i| target.target[i])
        .fold(f64::INFINITY, f64::min);
    let tmax = reached
        .iter()
        .map(|&i| target.target[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let kmin = ((tmin / h).floor().max(0.0) as usize).min(top);
    let kmax = ((tmax / h).ceil().max(0.0) as usize).min(top);
    let stride = (2 * r).max(1);
    let width = 2 * (side - 1) * r + stride;
    let mut best = f64::INFINITY;
    let mut lo = kmin;
    while lo <= kmax {
        let hi = (lo + width).min(kmax);
        best = best.min(window_dp(target, side, r, h, lo, hi - lo + 1));
        lo += stride;
    }
    best
}

fn window_dp(
    target: &ResponseTarget<f64>,
    side: usize,
    r: usize,
    h: f64,
    lo: usize,
    v: usize,
) -> f64 {
    let inner = v.pow(side as u32 - 1);
    let mut old = vec![0.0f64; inner * v];
    let mut new = vec![0.0f64; inner * v];
    let mut column = vec![0.0f64; v];
    let mut reach = vec![0.0f64; v];
    for i in 0..side * side {
        let (row, col) = (i / side, i % side);
        let (p, t) = (target.mass[i], target.target[i]);
        let cost: Vec<f64> = (0..v)
            .map(|k| {
                let e = (lo + k) as f64 * h - t;
                p * e * e
            })
            .collect();
        for m in 0..inner {
            for (u, slot) in column.iter_mut().enumerate() {
                *slot = old[u * inner + m];
            }
            if row > 0 {
                sliding_min(&column, r, &mut reach);
            } else {
                let least = column.iter().copied().fold(f64::INFINITY, f64::min);
                reach.iter_mut().for_each(|x| *x = least);
            }
            let left = m % v;
            for k in 0..v {
                new[m * v + k] = if col > 0 && left.abs_diff(k) > r {
                    f64::INFINITY
                } else {
                    reach[k] + cost[k]
                };
            }
        }
        std::mem::swap(&mut old, &mut new);
    }
    old.into_iter().fold(f64::INFINITY, f64::min)
}

/// `out[k] = min(values[k - r ..= k + r])` using a monotone deque.
#[allow(clippy::needless_range_loop)]
fn sliding_min(values: &[f64], r: usize, out: &mut [f64]) {
    let n = values.len();
    let mut dq: std::collections::VecDeque<usize> = std::collections::VecDeque::with_capacity(n);
    let mut next = 0;
    for k in 0..n {
        let end = (k + r).min(n - 1);
        while next <= end {
            while dq.back().is_some_and(|&b| values[b] >= values[next]) {
                dq.pop_back();
            }
            dq.push_back(next);
            next += 1;
        }
        while dq.front().is_some_and(|&f| f + r < k) {
            dq.pop_front();
        }
        out[k] = values[*dq.front().expect("window is nonempty")];
    }
}

/// Resolution of the brute-force value lattice.
pub const ORACLE_STEP: f64 = 1e-3;

fn qp_brute_force(rng: &mut ChaCha8Rng, i: usize) -> Outcome {
    let n = 2u32;
    let side = 3;
    let c = if i.is_multiple_of(2) { 0.005 } else { 0.01 };
    let mut mass: Vec<f64> = (0..side * side)
        .map(|_| {
            if rng.random_bool(0.75) {
                rng.random::<f64>()
            } else {
                0.0
            }
        })
        .collect();
    if mass.iter().all(|&m| m == 0.0) {
        mass[4] = 1.0;
    }
    let total: f64 = mass.iter().sum();
    mass.iter_mut().for_each(|m| *m /= total);
    let base = rng.random_range(0.0..0.9);
    let target: Vec<f64> = mass
        .iter()
        .map(|&m| {
            if m > 0.0 {
                base + 0.1 * rng.random::<f64>()
            } else {
                0.0
            }
        })
        .collect();
    let target = ResponseTarget {
        n,
        mass,
        target,
        constant: 0.0,
        scale: 1.0,
        offset: 0.0,
    };
    let settings = QpSettings::default();
    let sol = lipschitz_best_response(&target, c * n as f64, &settings, None)
        .map_err(|e| e.to_string())?;
    let oracle = lattice_qp_oracle(&target, c, ORACLE_STEP);
    let h = ORACLE_STEP;
    // Rounding the solver's grid down onto the lattice stays feasible and
    // costs at most this much.
    let rounding: f64 = sol
        .grid
        .values()
        .iter()
        .zip(&target.mass)
        .zip(&target.target)
        .map(|((f, p), t)| p * h * (2.0 * (f - t).abs() + h))
        .sum();
    let not_worse = oracle + settings.tolerance - sol.primal;
    let not_better = sol.primal + rounding - oracle;
    Ok((
        not_worse.min(not_better),
        format!(
            "c={c} mass={:?} target={:?} qp={:.17e} oracle={oracle:.17e}",
            target.mass, target.target, sol.primal
        ),
    ))
}

fn mw_regret(rng: &mut ChaCha8Rng, i: usize) -> Outcome {
    let n = rng.random_range(2..=8usize);
    let rounds = rng.random_range(1..=300usize);
    let rate = theory_rate(n as f64, rounds);
    let mut w = vec![1.0 / n as f64; n];
    let mut cum = vec![0.0f64; n];
    let mut earned = 0.0;
    for _ in 0..rounds {
        let u: Vec<f64> = if i.is_multiple_of(2) {
            (0..n).map(|_| rng.random()).collect()
        } else {
            // Reward only the currently lightest action.
            let lightest = (0..n)
                .min_by(|&a, &b| w[a].partial_cmp(&w[b]).expect("finite weights"))
                .expect("n >= 2");
            (0..n)
                .map(|k| if k == lightest { 1.0 } else { 0.0 })
                .collect()
        };
        earned += w.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
        for (c, x) in cum.iter_mut().zip(&u) {
            *c += x;
        }
        w = mw_step(&w, &u, rate);
    }
    let regret = cum.iter().copied().fold(f64::NEG_INFINITY, f64::max) - earned;
    let ln_n = (n as f64).ln();
    let bound = (2.0 * rounds as f64 * ln_n).sqrt() + ln_n;
    Ok((
        bound - regret,
        format!("n={n} T={rounds} regret={regret:.17e}"),
    ))
}

/// Absolute loss and omniscient loss computed from the joint law of state and
/// signals, compared with the library's additive regret.
fn loss_identity(rng: &mut ChaCha8Rng) -> Outcome {
    let theta: InformationStructure<f64> = sample_random_structure(rng, SampleMode::Uniform);
    let n = 10;
    let f = AggregatorGrid::new(n, (0..(n + 1) * (n + 1)).map(|_| rng.random()).collect())
        .map_err(|e| e.to_string())?;
    let sp = predictions_to_signal_probs(&theta).map_err(|e| e.to_string())?;
    let mu = theta.mu;
    let mut abs_direct = 0.0;
    let mut omni_direct = 0.0;
    for (x1, l1, l0) in [
        (theta.a0, sp.p1, sp.p0),
        (theta.a1, 1.0 - sp.p1, 1.0 - sp.p0),
    ] {
        for (x2, k1, k0) in [
            (theta.b0, sp.q1, sp.q0),
            (theta.b1, 1.0 - sp.q1, 1.0 - sp.q0),
        ] {
            let up = mu * l1 * k1;
            let down = (1.0 - mu) * l0 * k0;
            let joint = up + down;
            if joint <= 0.0 {
                continue;
            }
            let g = up / joint;
            let fx = crate::aggregator::Aggregator::eval(&f, x1, x2);
            abs_direct += up * (fx - 1.0).powi(2) + down * fx * fx;
            omni_direct += up * (g - 1.0).powi(2) + down * g * g;
        }
    }
    let add = additive_regret(&f, &theta).map_err(|e| e.to_string())?;
    let abs_lib = absolute_loss(&f, &theta).map_err(|e| e.to_string())?;
    let omni_lib = omniscient_loss(&theta).map_err(|e| e.to_string())?;
    let err = ((abs_direct - omni_direct) - add)
        .abs()
        .max((abs_lib - omni_lib - add).abs());
    Ok((
        1e-12 - err,
        format!("theta={} err={err:.3e}", fmt_theta(&theta)),
    ))
}

/// Random `L`-Lipschitz grid: clamped lower envelope of cones around random anchors.
fn random_lipschitz_grid(rng: &mut ChaCha8Rng, n: u32, l: f64) -> AggregatorGrid<f64> {
    let anchors: Vec<(f64, f64, f64)> = (0..5)
        .map(|_| (rng.random(), rng.random(), rng.random()))
        .collect();
    AggregatorGrid::from_fn(n, |x1: f64, x2: f64| {
        anchors
            .iter()
            .map(|&(a1, a2, v)| v + l * ((x1 - a1).abs() + (x2 - a2).abs()))
            .fold(f64::INFINITY, f64::min)
            .clamp(0.0, 1.0)
    })
}

fn regret_smoothness(rng: &mut ChaCha8Rng, i: usize, spec: GridSpec, fns: &DistanceFns) -> Outcome {
    let theta = sample_random_structure(rng, mode_for(i));
    let near = nearest_in_grid(&theta, spec);
    let l = rng.random_range(0.5..20.0);
    let f = random_lipschitz_grid(rng, spec.n, l);
    let d = (fns.emd)(&dist(&theta)?, &dist(&near)?).map_err(|e| e.to_string())?;
    let r = additive_regret(&f, &theta).map_err(|e| e.to_string())?;
    let r_near = additive_regret(&f, &near).map_err(|e| e.to_string())?;
    let bound = 134.0 * d.max(0.0).powf(1.0 / 7.0) + 2.0 * l * d;
    Ok((
        bound - (r - r_near),
        format!("theta={} L={l:.6} emd={d:.17e}", fmt_theta(&theta)),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> VerifyConfig {
        VerifyConfig {
            samples: 300,
            qp_samples: 6,
            seed: 7,
            spec: GridSpec::new(10, 100).unwrap(),
        }
    }

    #[test]
    fn default_run_passes_small() {
        let report = run_verify(&small(), &DistanceFns::default());
        assert!(report.all_passed(), "{}", report.render());
        assert_eq!(report.properties.len(), PROPERTIES.len());
    }

    #[test]
    fn corrupted_tvd_fails_with_witness() {
        let fns = DistanceFns {
            tvd: |p, q| -tvd(p, q),
            ..DistanceFns::default()
        };
        let report = run_verify(&small(), &fns);
        assert!(!report.all_passed());
        let failed: Vec<&str> = report.failures().map(|p| p.name).collect();
        assert!(
            failed.contains(&"emd_le_2tvd") && failed.contains(&"prior_bound"),
            "{failed:?}"
        );
        for p in report.failures() {
            assert!(p
                .witness
                .as_deref()
                .is_some_and(|w| w.starts_with("sample")));
            assert!(p.line().contains("status=FAIL"));
        }
    }

    #[test]
    fn reports_reproducible() {
        let a = run_verify(&small(), &DistanceFns::default()).render();
        let b = run_verify(&small(), &DistanceFns::default()).render();
        assert_eq!(a, b);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn sliding_min_matches_naive() {
        let values = [5.0, 3.0, 8.0, 1.0, 9.0, 2.0, 7.0, 7.0, 0.5];
        for r in 0..5 {
            let mut out = vec![0.0; values.len()];
            sliding_min(&values, r, &mut out);
            for k in 0..values.len() {
                let lo = k.saturating_sub(r);
                let hi = (k + r).min(values.len() - 1);
                let naive = values[lo..=hi]
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min);
                assert_eq!(out[k], naive);
            }
        }
    }

    /// Full enumeration on a one-by-one grid checks the windowed search.
    #[test]
    fn oracle_matches_enumeration_on_tiny_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = 0.01;
        for _ in 0..20 {
            let mass: Vec<f64> = {
                let raw: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
                let s: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / s).collect()
            };
            let target: Vec<f64> = (0..4).map(|_| rng.random()).collect();
            let t = ResponseTarget {
                n: 1,
                mass,
                target,
                constant: 0.0,
                scale: 1.0,
                offset: 0.0,
            };
            let c = 0.05;
            let r = 5usize;
            let k = 101usize;
            let mut best = f64::INFINITY;
            for a in 0..k {
                for b in a.saturating_sub(r)..(a + r + 1).min(k) {
                    for d in a.saturating_sub(r)..(a + r + 1).min(k) {
                        for e in
                            b.saturating_sub(r).max(d.saturating_sub(r))..(b.min(d) + r + 1).min(k)
                        {
                            let vals = [a, b, d, e].map(|v| v as f64 * h);
                            best = best.min(t.residual(&vals));
                        }
                    }
                }
            }
            let got = lattice_qp_oracle(&t, c, h);
            assert!((got - best).abs() < 1e-12, "{got} vs {best}");
        }
    }
}
