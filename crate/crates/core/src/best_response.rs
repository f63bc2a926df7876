//! The aggregator's best response to a mixture over structures.
//!
//! Expected additive regret against a mixture reduces to a weighted least
//! squares problem on the report grid: `sum_x pi(x) (f(x) - t(x))^2 + C`,
//! where `pi` is the mixture's report distribution and `t` its pooled
//! posterior. Unconstrained, the minimizer is `t` itself.

use crate::aggregator::{uniform_prior_posterior, AggregatorGrid};
use crate::error::{Error, Result};
use crate::family::{Family, ORBIT_MAPS};
use crate::regret::{Paradigm, ParadigmKind};
use crate::scalar::{chunked_sum, clamp01, Scalar};

/// Report mass and pooled posterior of a mixture, plus the affine map from the
/// least-squares objective to the paradigm's expected regret.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseTarget<T> {
    pub n: u32,
    /// `pi(x)`, row-major over the grid; sums to 1.
    pub mass: Vec<T>,
    /// `t(x)` where `mass > 0`; unspecified (zero) elsewhere.
    pub target: Vec<T>,
    /// `C` in `sum pi (f - t)^2 + C`.
    pub constant: T,
    /// Expected regret under the paradigm is `scale * objective + offset`.
    pub scale: T,
    pub offset: T,
}

impl<T: Scalar> ResponseTarget<T> {
    pub fn side(&self) -> usize {
        self.n as usize + 1
    }

    pub fn reached(&self, i: usize) -> bool {
        self.mass[i] > T::zero()
    }

    /// `sum_x pi(x) (f(x) - t(x))^2 + C`: expected additive regret under the
    /// (possibly reweighted) mixture.
    pub fn objective(&self, f: &AggregatorGrid<T>) -> T {
        self.objective_values(f.values())
    }

    pub fn objective_values(&self, f: &[T]) -> T {
        self.residual(f) + self.constant
    }

    /// `sum_x pi(x) (f(x) - t(x))^2` alone.
    pub fn residual(&self, f: &[T]) -> T {
        f.iter()
            .zip(&self.mass)
            .zip(&self.target)
            .map(|((f, p), t)| {
                let e = *f - *t;
                *p * e * e
            })
            .sum()
    }

    /// Converts an objective value into the paradigm's expected regret.
    pub fn to_regret(&self, objective: T) -> T {
        self.scale * objective + self.offset
    }

    /// Mass-weighted mean of the target: the best constant aggregator.
    pub fn weighted_mean(&self) -> T {
        let total: T = self.mass.iter().copied().sum();
        if total <= T::zero() {
            return T::half();
        }
        let s: T = self
            .mass
            .iter()
            .zip(&self.target)
            .map(|(p, t)| *p * *t)
            .sum();
        clamp01(s / total)
    }
}

/// Builds the best-response target for nature's mixture `weights` over `family`.
/// Weights are normalized first, so any nonnegative vector with positive mass works.
///
/// Under the ratio paradigm, weights are tilted to `w / omniscient_loss`, which
/// turns the ratio objective into the same weighted least squares problem.
pub fn build_target<T: Scalar>(
    family: &Family<T>,
    weights: &[T],
    paradigm: &Paradigm<T>,
) -> Result<ResponseTarget<T>> {
    if weights.len() != family.len() {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {} structures",
            weights.len(),
            family.len()
        )));
    }
    let omni = family.omniscient();
    let total_w = chunked_sum(weights);
    if !(total_w > T::zero()) {
        return Err(Error::InvalidArgument("weights have no mass".into()));
    }
    let weights: Vec<T> = weights.iter().map(|w| *w / total_w).collect();
    let (tilted, scale, offset) = match paradigm.kind {
        ParadigmKind::Additive => (weights.clone(), T::one(), T::zero()),
        ParadigmKind::Absolute => {
            let terms: Vec<T> = weights.iter().zip(omni).map(|(w, o)| *w * *o).collect();
            (weights.clone(), T::one(), chunked_sum(&terms))
        }
        ParadigmKind::Ratio => {
            let mut raw = Vec::with_capacity(weights.len());
            for (i, (&w, &o)) in weights.iter().zip(omni).enumerate() {
                if w == T::zero() {
                    raw.push(T::zero());
                } else if paradigm.admits(o) {
                    raw.push(w / o);
                } else {
                    return Err(Error::RatioUndefined {
                        loss: omni[i].to_f64_lossy(),
                        floor: paradigm.ratio_floor.to_f64_lossy(),
                    });
                }
            }
            let z = chunked_sum(&raw);
            let tilted = raw.iter().map(|r| *r / z).collect();
            (tilted, z, T::one())
        }
    };
    let sym = family.is_symmetric();
    let raw = family.accumulate(&tilted, |_, a| {
        let sq = if sym {
            let h = T::one() - a.g;
            (a.g * a.g + h * h) * T::half()
        } else {
            a.g * a.g
        };
        [a.p, a.p * a.g, a.p * sq]
    });
    let size = raw.len();
    let (mass, num): (Vec<T>, Vec<T>) = if sym {
        let quarter = T::lit(0.25);
        (0..size as u32)
            .map(|c| {
                let mut m = T::zero();
                let mut s = T::zero();
                for k in 0..ORBIT_MAPS {
                    let r = raw[family.map_cell(c, k) as usize];
                    m = m + r[0];
                    s = s + if k < 2 { r[1] } else { r[0] - r[1] };
                }
                (m * quarter, s * quarter)
            })
            .unzip()
    } else {
        raw.iter().map(|r| (r[0], r[1])).unzip()
    };
    let second: T = raw.iter().map(|r| r[2]).sum();
    let target: Vec<T> = mass
        .iter()
        .zip(&num)
        .map(|(m, s)| {
            if *m > T::zero() {
                clamp01(*s / *m)
            } else {
                T::zero()
            }
        })
        .collect();
    let explained: T = mass.iter().zip(&target).map(|(m, t)| *m * *t * *t).sum();
    Ok(ResponseTarget {
        n: family.n(),
        mass,
        target,
        constant: second - explained,
        scale,
        offset,
    })
}

/// Values used at grid points the mixture never reaches.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum FillPolicy<T> {
    /// Posterior under a uniform prior, with the baseline singular-point policy.
    #[default]
    UniformPriorPosterior,
    Constant(T),
}

impl<T: Scalar> FillPolicy<T> {
    pub fn value(&self, x1: T, x2: T) -> T {
        match self {
            FillPolicy::UniformPriorPosterior => uniform_prior_posterior(x1, x2),
            FillPolicy::Constant(c) => clamp01(*c),
        }
    }
}

/// Exact unconstrained best response: the pooled posterior where reached.
pub fn closed_form_best_response<T: Scalar>(
    target: &ResponseTarget<T>,
    fill: FillPolicy<T>,
) -> AggregatorGrid<T> {
    let n = target.n;
    let mut values = Vec::with_capacity(target.mass.len());
    for k1 in 0..=n {
        for k2 in 0..=n {
            let i = values.len();
            values.push(if target.reached(i) {
                target.target[i]
            } else {
                fill.value(T::ratio(k1, n), T::ratio(k2, n))
            });
        }
    }
    AggregatorGrid::new(n, values).expect("targets and fills lie in [0, 1]")
}
