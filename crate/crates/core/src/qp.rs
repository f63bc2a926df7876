//! Lipschitz-constrained best response as a convex quadratic program.
//!
//! minimize `sum_x pi(x) (f(x) - t(x))^2`
//! subject to `0 <= f <= 1` and `|f(u) - f(v)| <= L/N` for 1-norm-adjacent grid points.
//!
//! Solved by ADMM on the splitting `z = [f; Df]` with a banded Cholesky
//! factorization of the (grid Laplacian plus diagonal) system. Every returned
//! solution carries a certificate: a feasible primal point and a Lagrangian
//! dual bound whose difference is at most the requested tolerance.

use crate::aggregator::AggregatorGrid;
use crate::best_response::{closed_form_best_response, FillPolicy, ResponseTarget};
use crate::error::{Error, Result};
use crate::scalar::{clamp01, Scalar};

/// Solver controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings<T> {
    /// Maximum allowed certified gap between primal objective and dual bound.
    pub tolerance: T,
    pub max_iterations: usize,
    /// Initial ADMM penalty.
    pub rho: T,
    /// Over-relaxation factor in `(0, 2)`.
    pub alpha: T,
    /// Iterations between certificate checks.
    pub check_every: usize,
    /// Iterations between penalty adaptations.
    pub adapt_every: usize,
}

impl<T: Scalar> Default for QpSettings<T> {
    fn default() -> Self {
        Self {
            tolerance: T::lit(1e-6),
            max_iterations: 50_000,
            rho: T::lit(0.1),
            alpha: T::lit(1.6),
            check_every: 10,
            adapt_every: 50,
        }
    }
}

impl<T: Scalar> QpSettings<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > T::zero()) || self.max_iterations == 0 {
            return Err(Error::InvalidArgument(
                "QP tolerance must be positive and the iteration budget nonzero".into(),
            ));
        }
        Ok(())
    }
}

/// Solver state carried between calls for warm starts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QpWarmStart<T> {
    x: Vec<T>,
    y: Vec<T>,
    rho: Option<T>,
}

/// A certified solution.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution<T> {
    pub grid: AggregatorGrid<T>,
    /// `sum pi (f - t)^2` at the returned grid.
    pub primal: T,
    /// Lower bound on the optimal value of the same quantity.
    pub dual: T,
    pub iterations: usize,
}

impl<T: Scalar> QpSolution<T> {
    pub fn gap(&self) -> T {
        (self.primal - self.dual).max(T::zero())
    }
}

/// Adjacent pairs `(u, v)` of the grid: all horizontal edges, then all vertical ones.
fn edges(n: u32) -> Vec<(usize, usize)> {
    let side = n as usize + 1;
    let mut e = Vec::with_capacity(2 * side * (side - 1));
    for k1 in 0..side {
        for k2 in 0..side - 1 {
            let i = k1 * side + k2;
            e.push((i, i + 1));
        }
    }
    for k1 in 0..side - 1 {
        for k2 in 0..side {
            let i = k1 * side + k2;
            e.push((i, i + side));
        }
    }
    e
}

/// Cholesky factor of a symmetric positive definite band matrix.
struct BandCholesky<T> {
    n: usize,
    bw: usize,
    /// `l[i * (bw + 1) + (i - j)] = L[i][j]`.
    l: Vec<T>,
}

impl<T: Scalar> BandCholesky<T> {
    /// Factors `diag + rho * laplacian` over the grid graph.
    fn grid(side: usize, diag: &[T], rho: T) -> Self {
        let n = side * side;
        let bw = side;
        let w = bw + 1;
        let mut a = vec![T::zero(); n * w];
        for i in 0..n {
            let (k1, k2) = (i / side, i % side);
            let deg = [k1 > 0, k1 + 1 < side, k2 > 0, k2 + 1 < side]
                .iter()
                .filter(|b| **b)
                .count();
            a[i * w] = diag[i] + rho * T::lit(deg as f64);
            if k2 > 0 {
                a[i * w + 1] = -rho;
            }
            if k1 > 0 {
                a[i * w + bw] = -rho;
            }
        }
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let mut s = a[i * w + (i - j)];
                let k0 = j0.max(j.saturating_sub(bw));
                for k in k0..j {
                    s = s - a[i * w + (i - k)] * a[j * w + (j - k)];
                }
                if i == j {
                    a[i * w] = s.max(T::min_positive_value()).sqrt();
                } else {
                    a[i * w + (i - j)] = s / a[j * w];
                }
            }
        }
        Self { n, bw, l: a }
    }

    // Banded triangular solves read clearest by index.
    #[allow(clippy::needless_range_loop)]
    fn solve(&self, b: &mut [T]) {
        let w = self.bw + 1;
        for i in 0..self.n {
            let mut s = b[i];
            for j in i.saturating_sub(self.bw)..i {
                s = s - self.l[i * w + (i - j)] * b[j];
            }
            b[i] = s / self.l[i * w];
        }
        for i in (0..self.n).rev() {
            let mut s = b[i];
            for k in i + 1..(i + self.bw + 1).min(self.n) {
                s = s - self.l[k * w + (k - i)] * b[k];
            }
            b[i] = s / self.l[i * w];
        }
    }
}

/// `sum pi (f - t)^2`.
fn residual<T: Scalar>(target: &ResponseTarget<T>, f: &[T]) -> T {
    target.residual(f)
}

/// Lagrangian dual value for multipliers `yd` on the difference constraints,
/// with the box kept as an explicit domain. Always a lower bound on the optimum.
#[allow(clippy::needless_range_loop)]
pub fn dual_bound<T: Scalar>(target: &ResponseTarget<T>, c: T, yd: &[T]) -> T {
    let n = target.mass.len();
    let e = edges(target.n);
    let mut s = vec![T::zero(); n];
    let mut l1 = T::zero();
    for ((u, v), y) in e.iter().zip(yd) {
        // row of D is f(v) - f(u)
        s[*v] = s[*v] + *y;
        s[*u] = s[*u] - *y;
        l1 = l1 + y.abs();
    }
    let two = T::lit(2.0);
    let mut val = T::zero();
    for i in 0..n {
        let p = target.mass[i];
        if p > T::zero() {
            let t = target.target[i];
            let f = clamp01(t - s[i] / (two * p));
            let d = f - t;
            val = val + p * d * d + s[i] * f;
        } else {
            val = val + s[i].min(T::zero());
        }
    }
    val - c * l1
}

/// Pulls a box-feasible `f` towards the constant `m` until every adjacent
/// difference is within `c`.
fn make_feasible<T: Scalar>(f: &mut [T], n: u32, c: T, m: T) {
    for v in f.iter_mut() {
        *v = clamp01(*v);
    }
    let worst = edges(n)
        .iter()
        .map(|(u, v)| (f[*v] - f[*u]).abs())
        .fold(T::zero(), T::max);
    if worst > c {
        let lam = c / worst;
        for v in f.iter_mut() {
            *v = clamp01(m + lam * (*v - m));
        }
    }
}

/// Best `L`-Lipschitz grid response to `target`.
pub fn lipschitz_best_response<T: Scalar>(
    target: &ResponseTarget<T>,
    lipschitz: T,
    settings: &QpSettings<T>,
    warm: Option<&mut QpWarmStart<T>>,
) -> Result<QpSolution<T>> {
    settings.validate()?;
    if !(lipschitz >= T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "Lipschitz constant {lipschitz} must be nonnegative"
        )));
    }
    let n = target.n;
    let side = target.side();
    let npts = side * side;
    let c = lipschitz / T::lit(n as f64);

    if c >= T::one() {
        let grid = closed_form_best_response(target, FillPolicy::default());
        let primal = residual(target, grid.values());
        return Ok(QpSolution {
            grid,
            primal,
            dual: primal,
            iterations: 0,
        });
    }
    if c == T::zero() {
        let m = target.weighted_mean();
        let grid = AggregatorGrid::constant(n, m);
        let primal = residual(target, grid.values());
        // the constant is the exact minimizer over constants
        return Ok(QpSolution {
            grid,
            primal,
            dual: primal,
            iterations: 0,
        });
    }

    let e = edges(n);
    let ne = e.len();
    let scale = T::lit(npts as f64);
    let two = T::lit(2.0);
    let pdiag: Vec<T> = target.mass.iter().map(|p| two * scale * *p).collect();
    let q: Vec<T> = target
        .mass
        .iter()
        .zip(&target.target)
        .map(|(p, t)| -two * scale * *p * *t)
        .collect();
    let sigma = T::lit(1e-6);
    let alpha = settings.alpha;
    let mean = target.weighted_mean();

    let mut local = QpWarmStart::default();
    let state = warm.unwrap_or(&mut local);
    let mut rho = state.rho.unwrap_or(settings.rho);
    let mut x: Vec<T> = if state.x.len() == npts {
        state.x.clone()
    } else {
        closed_form_best_response(target, FillPolicy::Constant(mean)).into_values()
    };
    let mut y: Vec<T> = if state.y.len() == npts + ne {
        state.y.clone()
    } else {
        vec![T::zero(); npts + ne]
    };
    let apply_a = |x: &[T], out: &mut [T]| {
        out[..npts].copy_from_slice(x);
        for (k, (u, v)) in e.iter().enumerate() {
            out[npts + k] = x[*v] - x[*u];
        }
    };
    let apply_at = |v: &[T], out: &mut [T]| {
        out.copy_from_slice(&v[..npts]);
        for (k, (a, b)) in e.iter().enumerate() {
            let w = v[npts + k];
            out[*b] = out[*b] + w;
            out[*a] = out[*a] - w;
        }
    };
    let lo = |k: usize| if k < npts { T::zero() } else { -c };
    let hi = |k: usize| if k < npts { T::one() } else { c };

    let mut z = vec![T::zero(); npts + ne];
    apply_a(&x, &mut z);
    for (k, v) in z.iter_mut().enumerate() {
        *v = v.max(lo(k)).min(hi(k));
    }

    let factor = |rho: T| {
        let diag: Vec<T> = pdiag.iter().map(|p| *p + sigma + rho).collect();
        BandCholesky::grid(side, &diag, rho)
    };
    let mut chol = factor(rho);
    let mut rhs = vec![T::zero(); npts];
    let mut tmp = vec![T::zero(); npts + ne];
    let mut az = vec![T::zero(); npts + ne];
    let mut best_gap = T::infinity();
    let mut feas = vec![T::zero(); npts];

    for it in 1..=settings.max_iterations {
        for k in 0..npts + ne {
            tmp[k] = rho * z[k] - y[k];
        }
        apply_at(&tmp, &mut rhs);
        for i in 0..npts {
            rhs[i] = rhs[i] + sigma * x[i] - q[i];
        }
        chol.solve(&mut rhs);
        apply_a(&rhs, &mut az);
        for i in 0..npts {
            x[i] = alpha * rhs[i] + (T::one() - alpha) * x[i];
        }
        for k in 0..npts + ne {
            let zr = alpha * az[k] + (T::one() - alpha) * z[k];
            let zn = (zr + y[k] / rho).max(lo(k)).min(hi(k));
            y[k] = y[k] + rho * (zr - zn);
            z[k] = zn;
        }

        if it % settings.check_every == 0 || it == settings.max_iterations {
            feas.copy_from_slice(&x);
            make_feasible(&mut feas, n, c, mean);
            let primal = residual(target, &feas);
            let yd: Vec<T> = y[npts..].iter().map(|v| *v / scale).collect();
            let dual = dual_bound(target, c, &yd);
            let gap = primal - dual;
            best_gap = best_gap.min(gap);
            if gap <= settings.tolerance {
                state.x = x;
                state.y = y;
                state.rho = Some(rho);
                let grid = AggregatorGrid::new(n, feas)?;
                return Ok(QpSolution {
                    grid,
                    primal,
                    dual,
                    iterations: it,
                });
            }
        }

        if it % settings.adapt_every == 0 {
            apply_a(&x, &mut az);
            let mut rp = T::zero();
            let mut nax = T::zero();
            let mut nz = T::zero();
            for k in 0..npts + ne {
                rp = rp.max((az[k] - z[k]).abs());
                nax = nax.max(az[k].abs());
                nz = nz.max(z[k].abs());
            }
            apply_at(&y, &mut rhs);
            let mut rd = T::zero();
            let mut npx = T::zero();
            let mut naty = T::zero();
            let mut nq = T::zero();
            for i in 0..npts {
                let px = pdiag[i] * x[i];
                rd = rd.max((px + q[i] + rhs[i]).abs());
                npx = npx.max(px.abs());
                naty = naty.max(rhs[i].abs());
                nq = nq.max(q[i].abs());
            }
            let tiny = T::lit(1e-12);
            let num = rp / nax.max(nz).max(tiny);
            let den = rd / npx.max(naty).max(nq).max(tiny);
            if num > T::zero() && den > T::zero() {
                let ratio = (num / den).sqrt();
                if ratio > T::lit(5.0) || ratio < T::lit(0.2) {
                    rho = (rho * ratio).max(T::lit(1e-6)).min(T::lit(1e6));
                    chol = factor(rho);
                }
            }
        }
    }
    state.x = x;
    state.y = y;
    state.rho = Some(rho);
    Err(Error::NotConverged {
        iterations: settings.max_iterations,
        gap: best_gap.to_f64_lossy(),
        tolerance: settings.tolerance.to_f64_lossy(),
    })
}
