//! Losses and regrets under the three robustness paradigms, evaluated
//! structure by structure. [`crate::family::Family`] provides the same
//! quantities precomputed over a whole discretized family.

use rayon::prelude::*;

use crate::aggregator::Aggregator;
use crate::error::{Error, Result};
use crate::info::{support_distribution, InformationStructure, ReportDistribution};
use crate::scalar::{chunked_sum, Scalar};

/// Benchmark comparison used to score an aggregator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParadigmKind {
    /// Loss minus the omniscient loss.
    Additive,
    /// Raw expected quadratic loss.
    Absolute,
    /// Loss divided by the omniscient loss.
    Ratio,
}

impl std::str::FromStr for ParadigmKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "additive" => Ok(ParadigmKind::Additive),
            "absolute" => Ok(ParadigmKind::Absolute),
            "ratio" => Ok(ParadigmKind::Ratio),
            other => Err(Error::InvalidArgument(format!(
                "unknown paradigm '{other}' (expected additive, absolute or ratio)"
            ))),
        }
    }
}

impl std::fmt::Display for ParadigmKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ParadigmKind::Additive => "additive",
            ParadigmKind::Absolute => "absolute",
            ParadigmKind::Ratio => "ratio",
        })
    }
}

/// A paradigm together with its numeric guards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Paradigm<T> {
    pub kind: ParadigmKind,
    /// Omniscient loss below which the ratio is undefined.
    pub ratio_floor: T,
    /// Utilities fed to the weight update are clipped to `[0, utility_cap]`.
    pub utility_cap: T,
}

impl<T: Scalar> Paradigm<T> {
    pub fn new(kind: ParadigmKind) -> Self {
        let cap = match kind {
            ParadigmKind::Ratio => T::lit(100.0),
            _ => T::one(),
        };
        Self {
            kind,
            ratio_floor: T::lit(1e-9),
            utility_cap: cap,
        }
    }

    pub fn additive() -> Self {
        Self::new(ParadigmKind::Additive)
    }

    pub fn absolute() -> Self {
        Self::new(ParadigmKind::Absolute)
    }

    pub fn ratio() -> Self {
        Self::new(ParadigmKind::Ratio)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ratio_floor > T::zero()) || !(self.utility_cap > T::zero()) {
            return Err(Error::InvalidArgument(
                "ratio floor and utility cap must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Whether a structure with this omniscient loss has a defined regret.
    #[inline]
    pub fn admits(&self, omniscient: T) -> bool {
        self.kind != ParadigmKind::Ratio || omniscient >= self.ratio_floor
    }

    /// Regret from its two ingredients. Returns `None` for an undefined ratio.
    #[inline]
    pub fn combine(&self, additive: T, omniscient: T) -> Option<T> {
        match self.kind {
            ParadigmKind::Additive => Some(additive),
            ParadigmKind::Absolute => Some(additive + omniscient),
            ParadigmKind::Ratio => {
                if omniscient >= self.ratio_floor {
                    Some((additive + omniscient) / omniscient)
                } else {
                    None
                }
            }
        }
    }

    #[inline]
    pub fn clip(&self, u: T) -> T {
        u.max(T::zero()).min(self.utility_cap)
    }
}

/// Posterior of each atom under `theta`; atoms with undefined posterior carry no mass
/// and never appear in the support.
fn atom_posteriors<T: Scalar>(
    theta: &InformationStructure<T>,
    d: &ReportDistribution<T>,
) -> Result<Vec<T>> {
    d.atoms
        .iter()
        .map(|a| theta.posterior(a.x1, a.x2))
        .collect()
}

/// Expected squared distance between `f` and the omniscient posterior.
pub fn additive_regret<T: Scalar>(
    f: &impl Aggregator<T>,
    theta: &InformationStructure<T>,
) -> Result<T> {
    let d = support_distribution(theta)?;
    let g = atom_posteriors(theta, &d)?;
    Ok(d.atoms
        .iter()
        .zip(g)
        .map(|(a, g)| {
            let e = f.eval(a.x1, a.x2) - g;
            a.p * e * e
        })
        .sum())
}

/// Expected quadratic loss of the omniscient aggregator.
pub fn omniscient_loss<T: Scalar>(theta: &InformationStructure<T>) -> Result<T> {
    let d = support_distribution(theta)?;
    let g = atom_posteriors(theta, &d)?;
    Ok(d.atoms
        .iter()
        .zip(g)
        .map(|(a, g)| a.p * g * (T::one() - g))
        .sum())
}

/// Expected quadratic loss of `f`, decomposed around the posterior.
pub fn absolute_loss<T: Scalar>(
    f: &impl Aggregator<T>,
    theta: &InformationStructure<T>,
) -> Result<T> {
    let d = support_distribution(theta)?;
    let g = atom_posteriors(theta, &d)?;
    Ok(d.atoms
        .iter()
        .zip(g)
        .map(|(a, g)| {
            let e = f.eval(a.x1, a.x2) - g;
            a.p * (e * e + g * (T::one() - g))
        })
        .sum())
}

/// Regret of `f` on `theta` under `paradigm`.
pub fn regret<T: Scalar>(
    f: &impl Aggregator<T>,
    theta: &InformationStructure<T>,
    paradigm: &Paradigm<T>,
) -> Result<T> {
    let add = additive_regret(f, theta)?;
    let omni = omniscient_loss(theta)?;
    paradigm.combine(add, omni).ok_or(Error::RatioUndefined {
        loss: omni.to_f64_lossy(),
        floor: paradigm.ratio_floor.to_f64_lossy(),
    })
}

fn check_weights<T: Scalar>(weights: &[T], len: usize) -> Result<()> {
    if weights.len() != len {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {len} structures",
            weights.len()
        )));
    }
    Ok(())
}

/// `E_{theta ~ w}[R(f, theta)]`. Structures with zero weight are skipped, so an
/// undefined ratio only matters when it carries mass.
pub fn expected_regret<T: Scalar>(
    f: &impl Aggregator<T>,
    weights: &[T],
    family: &[InformationStructure<T>],
    paradigm: &Paradigm<T>,
) -> Result<T> {
    check_weights(weights, family.len())?;
    let terms = family
        .par_iter()
        .zip(weights.par_iter())
        .map(|(theta, &w)| {
            if w == T::zero() {
                Ok(T::zero())
            } else {
                Ok(w * regret(f, theta, paradigm)?)
            }
        })
        .collect::<Result<Vec<T>>>()?;
    Ok(chunked_sum(&terms))
}

/// Largest regret over the family and the lowest index attaining it. Ratio
/// structures below the floor are skipped; `None` if nothing is admissible.
pub fn max_regret<T: Scalar>(
    f: &impl Aggregator<T>,
    family: &[InformationStructure<T>],
    paradigm: &Paradigm<T>,
) -> Result<Option<(T, usize)>> {
    let values = family
        .par_iter()
        .map(|theta| {
            let add = additive_regret(f, theta)?;
            let omni = omniscient_loss(theta)?;
            Ok(paradigm.combine(add, omni))
        })
        .collect::<Result<Vec<Option<T>>>>()?;
    Ok(argmax(values.into_iter().enumerate()))
}

/// Maximum with ties resolved towards the lowest index.
pub(crate) fn argmax<T: Scalar>(
    it: impl Iterator<Item = (usize, Option<T>)>,
) -> Option<(T, usize)> {
    let mut best: Option<(T, usize)> = None;
    for (i, v) in it {
        if let Some(v) = v {
            match best {
                Some((b, _)) if !(v > b) => {}
                _ => best = Some((v, i)),
            }
        }
    }
    best
}

/// Index of the grid report `x` on the `n`-grid, or `AtomOffGrid`.
pub fn grid_index<T: Scalar>(x1: T, x2: T, n: u32) -> Result<(u32, u32)> {
    let snap = |x: T| {
        let u = x * T::lit(n as f64);
        let r = u.round();
        if (u - r).abs() <= T::grid_tol() * T::lit(n as f64)
            && r >= T::zero()
            && r <= T::lit(n as f64)
        {
            r.to_u32()
        } else {
            None
        }
    };
    match (snap(x1), snap(x2)) {
        (Some(k1), Some(k2)) => Ok((k1, k2)),
        _ => Err(Error::AtomOffGrid {
            x1: x1.to_f64_lossy(),
            x2: x2.to_f64_lossy(),
            n,
        }),
    }
}

/// For every grid report, the largest regret among structures that reach it
/// with positive probability; 0 for unreached reports. Row-major `(n+1)^2`.
pub fn report_regret_map<T: Scalar>(
    f: &impl Aggregator<T>,
    family: &[InformationStructure<T>],
    n: u32,
    paradigm: &Paradigm<T>,
) -> Result<Vec<T>> {
    let side = n as usize + 1;
    let mut map = vec![T::zero(); side * side];
    for theta in family {
        let omni = omniscient_loss(theta)?;
        let Some(r) = paradigm.combine(additive_regret(f, theta)?, omni) else {
            continue;
        };
        for a in support_distribution(theta)?.atoms {
            let (k1, k2) = grid_index(a.x1, a.x2, n)?;
            let slot = &mut map[k1 as usize * side + k2 as usize];
            *slot = slot.max(r);
        }
    }
    Ok(map)
}

/// `Pr[x] = sum_theta w_theta Pr_theta[x]` on the grid. Row-major `(n+1)^2`.
pub fn report_mass_map<T: Scalar>(
    weights: &[T],
    family: &[InformationStructure<T>],
    n: u32,
) -> Result<Vec<T>> {
    check_weights(weights, family.len())?;
    let side = n as usize + 1;
    let mut map = vec![T::zero(); side * side];
    for (theta, &w) in family.iter().zip(weights) {
        for a in support_distribution(theta)?.atoms {
            let (k1, k2) = grid_index(a.x1, a.x2, n)?;
            map[k1 as usize * side + k2 as usize] = map[k1 as usize * side + k2 as usize] + w * a.p;
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregator::{AggregatorGrid, BaselineKind, FnAggregator, Omniscient};

    fn th(mu: f64, a0: f64, a1: f64, b0: f64, b1: f64) -> InformationStructure<f64> {
        InformationStructure::new(mu, a0, a1, b0, b1).unwrap()
    }

    #[test]
    fn additive_examples() {
        let t = th(0.3, 0.1, 0.5, 0.1, 0.5);
        assert!(additive_regret(&Omniscient { mu: 0.3 }, &t).unwrap() < 1e-30);
        let r = additive_regret(&BaselineKind::SimpleAverage, &t).unwrap();
        assert!((r - 0.01703).abs() < 5e-6, "{r}");
        let u = th(0.4, 0.4, 0.4, 0.4, 0.4);
        let f = FnAggregator(|_: f64, _: f64| 0.9);
        assert!((additive_regret(&f, &u).unwrap() - 0.25).abs() < 1e-15);
    }

    /// Hand enumeration of the four atoms for the 0.01703 example.
    #[test]
    fn additive_hand_enumeration() {
        let mu: f64 = 0.3;
        let (lo, hi) = (0.1, 0.5);
        let m = [((hi - mu) / (hi - lo), lo), ((mu - lo) / (hi - lo), hi)];
        let mut acc = 0.0;
        for (pa, x1) in m {
            for (pb, x2) in m {
                let joint = pa * pb * ((1.0 - x1) * (1.0 - x2) / (1.0 - mu) + x1 * x2 / mu);
                let g =
                    (1.0 - mu) * x1 * x2 / ((1.0 - mu) * x1 * x2 + mu * (1.0 - x1) * (1.0 - x2));
                acc += joint * ((x1 + x2) / 2.0 - g).powi(2);
            }
        }
        let r = additive_regret(&BaselineKind::SimpleAverage, &th(mu, lo, hi, lo, hi)).unwrap();
        assert!((acc - r).abs() < 1e-15);
    }

    #[test]
    fn absolute_examples() {
        let half = FnAggregator(|_: f64, _: f64| 0.5);
        assert!((absolute_loss(&half, &th(0.5, 0.5, 0.5, 0.5, 0.5)).unwrap() - 0.25).abs() < 1e-15);
        let f = FnAggregator(|a: f64, b: f64| (a + b) / 2.0);
        assert_eq!(
            absolute_loss(&f, &th(0.5, 0.0, 1.0, 0.0, 1.0)).unwrap(),
            0.0
        );
    }

    #[test]
    fn omniscient_examples() {
        assert_eq!(omniscient_loss(&th(0.5, 0.0, 1.0, 0.0, 1.0)).unwrap(), 0.0);
        assert!((omniscient_loss(&th(0.3, 0.3, 0.3, 0.3, 0.3)).unwrap() - 0.21).abs() < 1e-15);
        let v = omniscient_loss(&th(0.3, 0.1, 0.5, 0.1, 0.5)).unwrap();
        assert!(v > 0.0 && v < 0.25);
    }

    #[test]
    fn ratio_examples() {
        let t = th(0.3, 0.1, 0.5, 0.2, 0.6);
        let p = Paradigm::ratio();
        assert!((regret(&Omniscient { mu: 0.3 }, &t, &p).unwrap() - 1.0).abs() < 1e-12);
        let z = th(0.5, 0.0, 1.0, 0.0, 1.0);
        assert!(matches!(
            regret(&Omniscient { mu: 0.5 }, &z, &p),
            Err(Error::RatioUndefined { .. })
        ));
        assert_eq!(
            regret(&Omniscient { mu: 0.5 }, &z, &Paradigm::additive()).unwrap(),
            0.0
        );
    }

    #[test]
    fn expected_and_max() {
        let a = th(0.3, 0.1, 0.5, 0.1, 0.5);
        let b = th(0.6, 0.2, 0.9, 0.5, 0.7);
        let f = BaselineKind::SimpleAverage;
        let p = Paradigm::additive();
        let ra = regret(&f, &a, &p).unwrap();
        let rb = regret(&f, &b, &p).unwrap();
        assert_eq!(expected_regret(&f, &[1.0, 0.0], &[a, b], &p).unwrap(), ra);
        assert!((expected_regret(&f, &[0.5, 0.5], &[a, a], &p).unwrap() - ra).abs() < 1e-16);
        assert!(
            (expected_regret(&f, &[0.25, 0.75], &[a, b], &p).unwrap() - (0.25 * ra + 0.75 * rb))
                .abs()
                < 1e-16
        );
        assert_eq!(max_regret(&f, &[a], &p).unwrap(), Some((ra, 0)));
        assert_eq!(max_regret(&f, &[a, a], &p).unwrap(), Some((ra, 0)));
    }

    #[test]
    fn maps() {
        let t = th(0.5, 0.25, 0.75, 0.5, 0.5);
        let g = AggregatorGrid::from_fn(4, |a: f64, b| Omniscient { mu: 0.5 }.eval(a, b));
        let m = report_regret_map(&g, &[t], 4, &Paradigm::additive()).unwrap();
        assert!(m.iter().all(|v| v.abs() < 1e-15));
        let mass = report_mass_map(&[1.0], &[t], 4).unwrap();
        assert!((mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((mass[5 + 2] - 0.5).abs() < 1e-12);
        let single = th(0.5, 0.5, 0.5, 0.5, 0.5);
        let mass = report_mass_map(&[1.0], &[single], 4).unwrap();
        assert_eq!(mass[2 * 5 + 2], 1.0);
        let off = th(0.33, 0.33, 0.33, 0.33, 0.33);
        assert!(matches!(
            report_mass_map(&[1.0], &[off], 4),
            Err(Error::AtomOffGrid { .. })
        ));
    }
}
