//! Aggregators on the report square: grid functions with bilinear
//! interpolation, closed-form baselines, and the symmetry/Lipschitz tools.

use crate::error::{Error, Result};
use crate::info::omniscient_posterior;
use crate::scalar::{clamp01, Scalar};

/// Anything that maps a pair of reports to a forecast.
pub trait Aggregator<T: Scalar>: Sync {
    fn eval(&self, x1: T, x2: T) -> T;
}

impl<T: Scalar, A: Aggregator<T> + ?Sized> Aggregator<T> for &A {
    fn eval(&self, x1: T, x2: T) -> T {
        (**self).eval(x1, x2)
    }
}

/// Wraps a closure as an [`Aggregator`].
pub struct FnAggregator<F>(pub F);

impl<T: Scalar, F: Fn(T, T) -> T + Sync> Aggregator<T> for FnAggregator<F> {
    fn eval(&self, x1: T, x2: T) -> T {
        (self.0)(x1, x2)
    }
}

/// Values on the `(N+1) x (N+1)` report grid, extended bilinearly.
///
/// `values[k1 * (N+1) + k2] = f(k1/N, k2/N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatorGrid<T> {
    n: u32,
    values: Vec<T>,
}

impl<T: Scalar> AggregatorGrid<T> {
    pub fn new(n: u32, values: Vec<T>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "grid resolution must be positive".into(),
            ));
        }
        let side = n as usize + 1;
        if values.len() != side * side {
            return Err(Error::InvalidArgument(format!(
                "grid of resolution {n} needs {} values, got {}",
                side * side,
                values.len()
            )));
        }
        if let Some(v) = values
            .iter()
            .find(|v| !(**v >= T::zero() && **v <= T::one()))
        {
            return Err(Error::InvalidArgument(format!(
                "grid value {v} outside [0, 1]"
            )));
        }
        Ok(Self { n, values })
    }

    pub fn constant(n: u32, c: T) -> Self {
        let side = n as usize + 1;
        Self {
            n,
            values: vec![clamp01(c); side * side],
        }
    }

    /// Samples `f` at every grid point, clamping into `[0, 1]`.
    pub fn from_fn(n: u32, f: impl Fn(T, T) -> T) -> Self {
        let side = n as usize + 1;
        let mut values = Vec::with_capacity(side * side);
        for k1 in 0..=n {
            for k2 in 0..=n {
                values.push(clamp01(f(T::ratio(k1, n), T::ratio(k2, n))));
            }
        }
        Self { n, values }
    }

    pub fn sample(n: u32, agg: &impl Aggregator<T>) -> Self {
        Self::from_fn(n, |a, b| agg.eval(a, b))
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn side(&self) -> usize {
        self.n as usize + 1
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn index(&self, k1: u32, k2: u32) -> usize {
        k1 as usize * self.side() + k2 as usize
    }

    #[inline]
    pub fn get(&self, k1: u32, k2: u32) -> T {
        self.values[self.index(k1, k2)]
    }

    pub fn set(&mut self, k1: u32, k2: u32, v: T) {
        let i = self.index(k1, k2);
        self.values[i] = clamp01(v);
    }

    /// Bilinear interpolation. Exact at grid points.
    pub fn eval(&self, x1: T, x2: T) -> T {
        let (k1, f1) = cell(self.n, x1);
        let (k2, f2) = cell(self.n, x2);
        let one = T::one();
        let v00 = self.get(k1, k2);
        if f1 == T::zero() && f2 == T::zero() {
            return v00;
        }
        let k1b = (k1 + 1).min(self.n);
        let k2b = (k2 + 1).min(self.n);
        let v10 = self.get(k1b, k2);
        let v01 = self.get(k1, k2b);
        let v11 = self.get(k1b, k2b);
        let lo = (one - f1) * v00 + f1 * v10;
        let hi = (one - f1) * v01 + f1 * v11;
        clamp01((one - f2) * lo + f2 * hi)
    }

    /// `N` times the largest difference between 1-norm-adjacent grid values,
    /// which is the 1-norm Lipschitz constant of the interpolant.
    pub fn lipschitz_constant(&self) -> T {
        let mut worst = T::zero();
        for k1 in 0..=self.n {
            for k2 in 0..=self.n {
                let v = self.get(k1, k2);
                if k1 < self.n {
                    worst = worst.max((self.get(k1 + 1, k2) - v).abs());
                }
                if k2 < self.n {
                    worst = worst.max((self.get(k1, k2 + 1) - v).abs());
                }
            }
        }
        worst * T::lit(self.n as f64)
    }

    /// Grid points of the orbit of `(k1, k2)` under transpose and complement:
    /// `[p, p^T, pbar, pbar^T]`.
    fn orbit(&self, k1: u32, k2: u32) -> [usize; 4] {
        let n = self.n;
        [
            self.index(k1, k2),
            self.index(k2, k1),
            self.index(n - k1, n - k2),
            self.index(n - k2, n - k1),
        ]
    }

    fn orbit_matches(&self, idx: [usize; 4], v: T) -> bool {
        let w = T::one() - v;
        v == v.quantize_unit()
            && self.values[idx[0]] == v
            && self.values[idx[1]] == v
            && self.values[idx[2]] == w
            && self.values[idx[3]] == w
    }

    /// Exact fixed point of [`symmetrize`](Self::symmetrize):
    /// `f(x1,x2) = f(x2,x1)` and `f(x) = 1 - f(1-x)` bitwise on the grid.
    pub fn is_symmetric(&self) -> bool {
        (0..=self.n).all(|k1| {
            (0..=self.n).all(|k2| {
                let idx = self.orbit(k1, k2);
                let rep = *idx.iter().min().expect("non-empty");
                idx[0] != rep || self.orbit_matches(idx, self.values[rep])
            })
        })
    }

    /// Orbit average over the four function symmetries
    /// `f(x1,x2)`, `f(x2,x1)`, `1-f(1-x1,1-x2)`, `1-f(1-x2,1-x1)`.
    ///
    /// Averages are rounded to multiples of [`Scalar::unit_quantum`] so the
    /// complement relation holds bitwise in both directions. Orbits already in
    /// symmetric form are left unchanged, so the map is exactly idempotent.
    pub fn symmetrize(&self) -> Self {
        let mut out = self.clone();
        let one = T::one();
        let quarter = T::lit(0.25);
        for k1 in 0..=self.n {
            for k2 in 0..=self.n {
                let idx = self.orbit(k1, k2);
                let rep = *idx.iter().min().expect("non-empty");
                if idx[0] != rep {
                    continue;
                }
                let self_complementary = idx[2] == idx[0] || idx[2] == idx[1];
                let v = if self_complementary {
                    T::half()
                } else {
                    let v0 = self.values[rep];
                    if self.orbit_matches(idx, v0) {
                        continue;
                    }
                    let s = self.values[idx[0]]
                        + self.values[idx[1]]
                        + (one - self.values[idx[2]])
                        + (one - self.values[idx[3]]);
                    clamp01(s * quarter).quantize_unit()
                };
                out.values[idx[0]] = v;
                out.values[idx[1]] = v;
                out.values[idx[2]] = one - v;
                out.values[idx[3]] = one - v;
            }
        }
        out
    }

    /// Elementwise convex combination `(1 - t) * self + t * other`.
    pub fn blend(&self, other: &Self, t: T) -> Result<Self> {
        if other.n != self.n {
            return Err(Error::InvalidArgument(format!(
                "cannot blend grids of resolution {} and {}",
                self.n, other.n
            )));
        }
        let one = T::one();
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| clamp01((one - t) * *a + t * *b))
            .collect();
        Ok(Self { n: self.n, values })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            n: self.n,
            values: self.values.iter().map(|v| clamp01(f(*v))).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> AggregatorGrid<U> {
        AggregatorGrid {
            n: self.n,
            values: self
                .values
                .iter()
                .map(|v| U::lit(v.to_f64_lossy()))
                .collect(),
        }
    }
}

impl<T: Scalar> Aggregator<T> for AggregatorGrid<T> {
    fn eval(&self, x1: T, x2: T) -> T {
        AggregatorGrid::eval(self, x1, x2)
    }
}

/// Lower cell index and fractional offset of `x` on the `n`-grid, snapping
/// values within tolerance of a grid point onto it.
#[inline]
pub(crate) fn cell<T: Scalar>(n: u32, x: T) -> (u32, T) {
    let nf = T::lit(n as f64);
    let u = clamp01(x) * nf;
    let r = u.round();
    if (u - r).abs() <= T::grid_tol() * nf {
        let k = r.to_u32().unwrap_or(0).min(n);
        return (k, T::zero());
    }
    let k = u.floor().to_u32().unwrap_or(0).min(n - 1);
    (k, u - T::lit(k as f64))
}

/// Closed-form baselines from the literature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    SimpleAverage,
    AveragePrior,
    StateOfTheArt,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [
        BaselineKind::SimpleAverage,
        BaselineKind::AveragePrior,
        BaselineKind::StateOfTheArt,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::SimpleAverage => "simple-average",
            BaselineKind::AveragePrior => "average-prior",
            BaselineKind::StateOfTheArt => "state-of-the-art",
        }
    }
}

impl std::fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Posterior-shaped aggregation `x1 x2 (1-m) / (x1 x2 (1-m) + (1-x1)(1-x2) m)`.
///
/// At 0/0 points the value is 0 below the anti-diagonal, 1 above it and 1/2 on it:
/// the diagonal limits at (0,0) and (1,1), and a neutral value at the
/// impossible reports (0,1) and (1,0).
pub fn posterior_with_prior<T: Scalar>(m: T, x1: T, x2: T) -> T {
    let one = T::one();
    let up = x1 * x2 * (one - m);
    let den = up + (one - x1) * (one - x2) * m;
    if den > T::zero() {
        return clamp01(up / den);
    }
    let s = x1 + x2;
    if s < one {
        T::zero()
    } else if s > one {
        one
    } else {
        T::half()
    }
}

/// `g_{1/2}` with the singular-point policy of [`posterior_with_prior`].
pub fn uniform_prior_posterior<T: Scalar>(x1: T, x2: T) -> T {
    posterior_with_prior(T::half(), x1, x2)
}

/// Closed-form baseline value at `(x1, x2)`.
pub fn baseline_eval<T: Scalar>(kind: BaselineKind, x1: T, x2: T) -> T {
    match kind {
        BaselineKind::SimpleAverage => clamp01((x1 + x2) * T::half()),
        BaselineKind::AveragePrior => posterior_with_prior((x1 + x2) * T::half(), x1, x2),
        BaselineKind::StateOfTheArt => {
            let mut ep = T::lit(0.49) * x1 + T::lit(0.49) * x2;
            if x1 + x2 > T::one() {
                ep = ep + T::lit(0.02);
            }
            posterior_with_prior(clamp01(ep), x1, x2)
        }
    }
}

impl<T: Scalar> Aggregator<T> for BaselineKind {
    fn eval(&self, x1: T, x2: T) -> T {
        baseline_eval(*self, x1, x2)
    }
}

/// The omniscient aggregator for a known prior, with the singular-point policy
/// of [`posterior_with_prior`] where the posterior is undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Omniscient<T> {
    pub mu: T,
}

impl<T: Scalar> Aggregator<T> for Omniscient<T> {
    fn eval(&self, x1: T, x2: T) -> T {
        if self.mu <= T::zero() || self.mu >= T::one() {
            return self.mu;
        }
        omniscient_posterior(self.mu, x1, x2)
            .unwrap_or_else(|_| posterior_with_prior(self.mu, x1, x2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corners(v: [f64; 4]) -> AggregatorGrid<f64> {
        AggregatorGrid::new(1, v.to_vec()).unwrap()
    }

    #[test]
    fn eval_examples() {
        let g = AggregatorGrid::constant(7, 0.3);
        for (a, b) in [(0.0, 0.0), (0.13, 0.77), (1.0, 0.5), (0.999, 0.001)] {
            assert!((g.eval(a, b) - 0.3_f64).abs() < 1e-15);
        }
        let g = corners([0.0, 0.0, 0.0, 1.0]);
        assert_eq!(g.eval(0.5, 0.5), 0.25);
        assert_eq!(g.eval(1.0, 1.0), 1.0);
    }

    #[test]
    fn eval_exact_on_grid() {
        let n = 20;
        let g = AggregatorGrid::<f64>::from_fn(n, |a, b| (a * 0.37 + b * b * 0.51).sin().abs());
        for k1 in 0..=n {
            for k2 in 0..=n {
                let (x1, x2) = (k1 as f64 / n as f64, k2 as f64 / n as f64);
                assert_eq!(g.eval(x1, x2), g.get(k1, k2));
            }
        }
    }

    #[test]
    fn lipschitz_examples() {
        assert_eq!(
            AggregatorGrid::constant(5, 0.4_f64).lipschitz_constant(),
            0.0
        );
        assert_eq!(corners([0.0, 0.0, 0.0, 1.0]).lipschitz_constant(), 1.0);
        for n in [1, 4, 20, 33] {
            let g = AggregatorGrid::<f64>::from_fn(n, |a, b| (a + b) / 2.0);
            assert!((g.lipschitz_constant() - 0.5).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn symmetrize_examples() {
        let g = AggregatorGrid::constant(6, 0.3_f64).symmetrize();
        assert!(g.values().iter().all(|v| (*v - 0.5).abs() < 1e-15));
        let s = AggregatorGrid::<f64>::sample(10, &BaselineKind::SimpleAverage);
        assert!(s
            .symmetrize()
            .values()
            .iter()
            .zip(s.values())
            .all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn symmetrize_is_idempotent_and_symmetric() {
        for n in [1, 2, 5, 8] {
            let g =
                AggregatorGrid::<f64>::from_fn(n, |a, b| ((a * 13.1 + b * 7.3).sin() + 1.0) / 2.0);
            let s = g.symmetrize();
            assert!(s.is_symmetric());
            assert_eq!(s.symmetrize(), s);
            for k1 in 0..=n {
                for k2 in 0..=n {
                    assert_eq!(s.get(k1, k2), s.get(k2, k1));
                    assert_eq!(s.get(k1, k2), 1.0 - s.get(n - k1, n - k2));
                }
            }
        }
    }

    #[test]
    fn baseline_examples() {
        assert!((baseline_eval(BaselineKind::SimpleAverage, 0.2, 0.6) - 0.4_f64).abs() < 1e-15);
        assert_eq!(baseline_eval(BaselineKind::AveragePrior, 0.5, 0.5), 0.5_f64);
        assert!((baseline_eval(BaselineKind::StateOfTheArt, 0.5, 0.5) - 0.51_f64).abs() < 1e-12);
        for kind in [BaselineKind::AveragePrior, BaselineKind::StateOfTheArt] {
            assert_eq!(baseline_eval(kind, 0.0, 0.0), 0.0_f64);
            assert_eq!(baseline_eval(kind, 1.0, 1.0), 1.0_f64);
            assert_eq!(baseline_eval(kind, 0.0, 1.0), 0.5_f64);
            assert_eq!(baseline_eval(kind, 1.0, 0.0), 0.5_f64);
        }
    }

    #[test]
    fn baselines_in_unit_interval_everywhere() {
        let k = 200;
        for kind in BaselineKind::ALL {
            for i in 0..=k {
                for j in 0..=k {
                    let v: f64 = baseline_eval(kind, i as f64 / k as f64, j as f64 / k as f64);
                    assert!((0.0..=1.0).contains(&v), "{kind} at ({i},{j}) = {v}");
                }
            }
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(AggregatorGrid::new(2, vec![0.5_f64; 8]).is_err());
        assert!(AggregatorGrid::new(1, vec![0.5_f64, 1.5, 0.0, 0.0]).is_err());
        assert!(AggregatorGrid::new(1, vec![0.5_f64, f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn f32_grid() {
        let g = AggregatorGrid::<f32>::from_fn(4, |a, b| (a + b) / 2.0);
        assert!((g.eval(0.3, 0.6) - 0.45).abs() < 1e-6);
        assert!(g.symmetrize().is_symmetric());
    }
}
