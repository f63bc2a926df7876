//! Distances between report distributions, nearest-grid rounding, and the
//! trimming and smoothing constructions used to reason about discretization.

use rand::Rng;

use crate::error::{Error, Result};
use crate::info::{
    omniscient_posterior, support_distribution, GridSpec, InformationStructure, ReportDistribution,
};
use crate::scalar::Scalar;

/// Largest support size [`emd`] accepts by default.
pub const DEFAULT_SUPPORT_LIMIT: usize = 64;

/// Total variation distance, aligning atoms whose coordinates agree within `1e-12`.
pub fn tvd<T: Scalar>(p: &ReportDistribution<T>, q: &ReportDistribution<T>) -> T {
    let tol = T::lit(1e-12);
    let same = |a: (T, T), b: (T, T)| (a.0 - b.0).abs() <= tol && (a.1 - b.1).abs() <= tol;
    let mut points: Vec<(T, T)> = Vec::with_capacity(p.len() + q.len());
    for a in p.atoms.iter().chain(&q.atoms) {
        let x = (a.x1, a.x2);
        if !points.iter().any(|&y| same(x, y)) {
            points.push(x);
        }
    }
    let mass = |d: &ReportDistribution<T>, x: (T, T)| -> T {
        d.atoms
            .iter()
            .filter(|a| same((a.x1, a.x2), x))
            .map(|a| a.p)
            .fold(T::zero(), |s, v| s + v)
    };
    let total = points
        .into_iter()
        .map(|x| (mass(p, x) - mass(q, x)).abs())
        .fold(T::zero(), |s, v| s + v);
    total * T::half()
}

/// One entry of a transport plan: `mass` moved from source atom `source`
/// to destination atom `dest`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flow<T> {
    pub source: usize,
    pub dest: usize,
    pub mass: T,
}

/// Coupling between two report distributions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransportPlan<T> {
    pub flows: Vec<Flow<T>>,
}

impl<T: Scalar> TransportPlan<T> {
    /// Mass leaving each of the `k` source atoms.
    pub fn row_sums(&self, k: usize) -> Vec<T> {
        let mut out = vec![T::zero(); k];
        for f in &self.flows {
            out[f.source] = out[f.source] + f.mass;
        }
        out
    }

    /// Mass arriving at each of the `l` destination atoms.
    pub fn col_sums(&self, l: usize) -> Vec<T> {
        let mut out = vec![T::zero(); l];
        for f in &self.flows {
            out[f.dest] = out[f.dest] + f.mass;
        }
        out
    }

    /// Transport cost under the 1-norm ground distance.
    pub fn cost(&self, p: &ReportDistribution<T>, q: &ReportDistribution<T>) -> T {
        self.flows
            .iter()
            .map(|f| {
                f.mass
                    * ground(
                        p.atoms[f.source].x1,
                        p.atoms[f.source].x2,
                        q.atoms[f.dest].x1,
                        q.atoms[f.dest].x2,
                    )
            })
            .fold(T::zero(), |s, v| s + v)
    }
}

fn ground<T: Scalar>(x1: T, x2: T, y1: T, y2: T) -> T {
    (x1 - y1).abs() + (x2 - y2).abs()
}

/// Earth mover's distance under the 1-norm, with an optimal plan.
pub fn emd<T: Scalar>(
    p: &ReportDistribution<T>,
    q: &ReportDistribution<T>,
) -> Result<(T, TransportPlan<T>)> {
    emd_with_limit(p, q, DEFAULT_SUPPORT_LIMIT)
}

/// [`emd`] with an explicit support size limit.
///
/// Solved exactly by successive shortest paths on the bipartite
/// transportation network.
pub fn emd_with_limit<T: Scalar>(
    p: &ReportDistribution<T>,
    q: &ReportDistribution<T>,
    limit: usize,
) -> Result<(T, TransportPlan<T>)> {
    for d in [p, q] {
        if d.len() > limit {
            return Err(Error::SupportTooLarge {
                size: d.len(),
                limit,
            });
        }
        if d.atoms.iter().any(|a| !(a.p >= T::zero())) {
            return Err(Error::InvalidArgument(
                "negative or NaN atom probability".into(),
            ));
        }
    }
    let (tp, tq) = (p.total(), q.total());
    if (tp - tq).abs() > T::lit(1e-9) * tp.max(T::one()) {
        return Err(Error::InvalidArgument(format!(
            "distributions have different total mass ({tp} vs {tq})"
        )));
    }
    let (k, l) = (p.len(), q.len());
    let cost: Vec<T> = p
        .atoms
        .iter()
        .flat_map(|a| q.atoms.iter().map(move |b| ground(a.x1, a.x2, b.x1, b.x2)))
        .collect();
    let mut supply: Vec<T> = p.atoms.iter().map(|a| a.p).collect();
    let mut demand: Vec<T> = q.atoms.iter().map(|a| a.p).collect();
    let mut flow = vec![T::zero(); k * l];
    let inf = T::infinity();
    // Relaxations must improve by more than rounding noise, or zero-cost
    // cycles can masquerade as improvements.
    let slack =
        T::epsilon() * T::lit(16.0) * (T::one() + cost.iter().fold(T::zero(), |a, &b| a.max(b)));

    // Each augmentation empties a source, a sink, or a backward arc.
    let max_aug = 4 * (k + l + 1) * (k * l + 1);
    for _ in 0..max_aug {
        if !supply.iter().any(|&s| s > T::zero()) || !demand.iter().any(|&d| d > T::zero()) {
            break;
        }
        // Bellman-Ford over source nodes `0..k` and sink nodes `k..k+l`.
        let mut dist = vec![inf; k + l];
        let mut pred = vec![usize::MAX; k + l];
        for i in 0..k {
            if supply[i] > T::zero() {
                dist[i] = T::zero();
            }
        }
        for _ in 0..(k + l) {
            let mut changed = false;
            for i in 0..k {
                if dist[i] == inf {
                    continue;
                }
                for j in 0..l {
                    let nd = dist[i] + cost[i * l + j];
                    if nd < dist[k + j] - slack {
                        dist[k + j] = nd;
                        pred[k + j] = i;
                        changed = true;
                    }
                }
            }
            for j in 0..l {
                if dist[k + j] == inf {
                    continue;
                }
                for i in 0..k {
                    if flow[i * l + j] > T::zero() {
                        let nd = dist[k + j] - cost[i * l + j];
                        if nd < dist[i] - slack {
                            dist[i] = nd;
                            pred[i] = k + j;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let Some(sink) = (0..l)
            .filter(|&j| demand[j] > T::zero() && dist[k + j] < inf)
            .min_by(|&a, &b| {
                dist[k + a]
                    .partial_cmp(&dist[k + b])
                    .expect("finite distances")
            })
        else {
            break;
        };
        // Walk back to the originating source, collecting the bottleneck.
        let mut bottleneck = demand[sink];
        let mut node = k + sink;
        let mut path = Vec::new();
        loop {
            let prev = pred[node];
            if prev == usize::MAX {
                bottleneck = bottleneck.min(supply[node]);
                break;
            }
            path.push((prev, node));
            if node < k {
                // Backward arc sink `prev` -> source `node`.
                bottleneck = bottleneck.min(flow[node * l + (prev - k)]);
            }
            node = prev;
            if path.len() > k + l {
                return Err(Error::InvalidArgument(
                    "transport search found a cycle".into(),
                ));
            }
        }
        let origin = node;
        for &(from, to) in &path {
            if to >= k {
                let idx = from * l + (to - k);
                flow[idx] = flow[idx] + bottleneck;
            } else {
                let idx = to * l + (from - k);
                flow[idx] = (flow[idx] - bottleneck).max(T::zero());
            }
        }
        supply[origin] = supply[origin] - bottleneck;
        demand[sink] = demand[sink] - bottleneck;
    }

    let flows: Vec<Flow<T>> = (0..k)
        .flat_map(|i| (0..l).map(move |j| (i, j)))
        .filter(|&(i, j)| flow[i * l + j] > T::zero())
        .map(|(i, j)| Flow {
            source: i,
            dest: j,
            mass: flow[i * l + j],
        })
        .collect();
    let plan = TransportPlan { flows };
    let value = plan.cost(p, q);
    Ok((value, plan))
}

/// Member of the `(n, m)` discretized family close to `theta`.
///
/// Reports of an agent with two distinct posteriors are rounded outward onto
/// the report grid. The prior goes to the nearest prior-grid point strictly
/// inside every such rounded report interval (one exists when `m > n`). An
/// agent whose two posteriors coincide reports the report-grid neighbours of
/// the new prior; when both agents are like that, the prior is rounded onto
/// points shared by both grids so the result stays uninformative.
pub fn nearest_in_grid<T: Scalar>(
    theta: &InformationStructure<T>,
    spec: GridSpec,
) -> InformationStructure<T> {
    let tol = T::lit(1e-9);
    let nf = T::lit(spec.n as f64);
    let mf = T::lit(spec.m as f64);
    let mu = theta.mu;
    let informative = |lo: T, hi: T| hi - lo > T::grid_tol();
    let down = |v: T| T::lit(((v * nf + tol).floor()).to_f64_lossy().max(0.0)) / nf;
    let up = |v: T| T::lit(((v * nf - tol).ceil()).to_f64_lossy().min(spec.n as f64)) / nf;

    let agents = [(theta.a0, theta.a1), (theta.b0, theta.b1)];
    let rounded: Vec<Option<(T, T)>> = agents
        .iter()
        .map(|&(lo, hi)| informative(lo, hi).then(|| (down(lo), up(hi))))
        .collect();

    let mu_new = if rounded.iter().all(Option::is_none) {
        // Both agents uninformative: the prior must lie on both grids.
        let g = gcd(spec.n, spec.m) as f64;
        T::lit(((mu.to_f64_lossy() * g + 0.5 + 1e-9).floor()).clamp(0.0, g) / g)
    } else {
        let lo = rounded
            .iter()
            .flatten()
            .map(|r| r.0)
            .fold(T::zero(), |a, b| a.max(b));
        let hi = rounded
            .iter()
            .flatten()
            .map(|r| r.1)
            .fold(T::one(), |a, b| a.min(b));
        let lo_k = (lo * mf).to_f64_lossy();
        let hi_k = (hi * mf).to_f64_lossy();
        let mut k = (mu * mf).to_f64_lossy() + 0.5 + 1e-9;
        k = k.floor();
        // Strictly inside (lo, hi); fall back to the closed interval when
        // the prior grid is too coarse to have an interior point.
        let first = (lo_k + 1e-9).floor() + 1.0;
        let last = (hi_k - 1e-9).ceil() - 1.0;
        if first <= last {
            k = k.clamp(first, last);
        } else {
            k = k.clamp((lo_k - 1e-9).ceil(), (hi_k + 1e-9).floor());
        }
        T::lit(k) / mf
    };

    let place = |r: Option<(T, T)>| -> (T, T) {
        match r {
            Some(pair) => pair,
            None => (down(mu_new), up(mu_new)),
        }
    };
    let (a0, a1) = place(rounded[0]);
    let (b0, b1) = place(rounded[1]);
    InformationStructure {
        mu: mu_new,
        a0,
        a1,
        b0,
        b1,
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// One inequality evaluated exactly on a finite support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityCheck<T> {
    pub lhs: T,
    pub rhs: T,
}

impl<T: Scalar> InequalityCheck<T> {
    /// `rhs - lhs`; negative on violation.
    pub fn slack(&self) -> T {
        self.rhs - self.lhs
    }

    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + T::lit(1e-12)
    }
}

/// Concentration of reports around the prior and rarity of strong disagreement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentrationReport<T> {
    /// `Pr[x1 <= eps] <= (1 - mu) / (1 - eps)`.
    pub low: InequalityCheck<T>,
    /// `Pr[x1 >= 1 - eps] <= mu / (1 - eps)`.
    pub high: InequalityCheck<T>,
    /// `Pr[|x1 - x2| >= 1 - eps] <= 2 eps / (1 - eps)`.
    pub disagree: InequalityCheck<T>,
}

impl<T: Scalar> ConcentrationReport<T> {
    pub fn all_hold(&self) -> bool {
        self.low.holds() && self.high.holds() && self.disagree.holds()
    }

    pub fn checks(&self) -> [(&'static str, InequalityCheck<T>); 3] {
        [
            ("low", self.low),
            ("high", self.high),
            ("disagree", self.disagree),
        ]
    }

    pub fn worst_slack(&self) -> T {
        self.checks()
            .iter()
            .map(|c| c.1.slack())
            .fold(T::infinity(), |a, b| a.min(b))
    }
}

pub fn check_concentration<T: Scalar>(
    theta: &InformationStructure<T>,
    eps: T,
) -> Result<ConcentrationReport<T>> {
    if !(eps > T::zero() && eps <= T::half()) {
        return Err(Error::InvalidArgument(format!(
            "eps must lie in (0, 1/2], got {eps}"
        )));
    }
    let dist = support_distribution(theta)?;
    let one = T::one();
    let prob = |pred: &dyn Fn(T, T) -> bool| -> T {
        dist.atoms
            .iter()
            .filter(|a| pred(a.x1, a.x2))
            .map(|a| a.p)
            .fold(T::zero(), |s, v| s + v)
    };
    let mu = theta.mu;
    Ok(ConcentrationReport {
        low: InequalityCheck {
            lhs: prob(&|x1, _| x1 <= eps),
            rhs: (one - mu) / (one - eps),
        },
        high: InequalityCheck {
            lhs: prob(&|x1, _| x1 >= one - eps),
            rhs: mu / (one - eps),
        },
        disagree: InequalityCheck {
            lhs: prob(&|x1, x2| (x1 - x2).abs() >= one - eps),
            rhs: (eps + eps) / (one - eps),
        },
    })
}

/// Cell of the report square after trimming.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    /// Kept: the posterior is well behaved here.
    A,
    /// Strongly disagreeing reports.
    B,
    /// Reports far from the prior.
    C,
}

/// Parameters of the trimmed report square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrimRegions<T> {
    pub eps1: T,
    pub eps2: T,
    pub mu: T,
}

impl<T: Scalar> TrimRegions<T> {
    pub fn new(eps1: T, eps2: T, mu: T) -> Result<Self> {
        let half = T::half();
        if !(eps1 > T::zero() && eps1 <= half && eps2 > T::zero() && eps2 <= half) {
            return Err(Error::InvalidArgument(format!(
                "trimming parameters must lie in (0, 1/2], got ({eps1}, {eps2})"
            )));
        }
        if !(mu >= T::zero() && mu <= T::one()) {
            return Err(Error::InvalidArgument(format!("prior {mu} outside [0, 1]")));
        }
        Ok(Self { eps1, eps2, mu })
    }

    /// Region membership with precedence `B`, then `C`, then `A`.
    ///
    /// A report pair is in `C` when either report is far from the prior.
    pub fn region_of(&self, x1: T, x2: T) -> Region {
        let one = T::one();
        if (x1 - x2).abs() > one - self.eps1 {
            return Region::B;
        }
        let far = if self.mu <= T::half() {
            let cut = self.mu / self.eps2;
            x1 > cut || x2 > cut
        } else {
            let cut = one - (one - self.mu) / self.eps2;
            x1 < cut || x2 < cut
        };
        if far {
            Region::C
        } else {
            Region::A
        }
    }

    /// Probability that the reports of `theta` land in `A`.
    pub fn kept_mass(&self, theta: &InformationStructure<T>) -> Result<T> {
        let dist = support_distribution(theta)?;
        Ok(dist
            .atoms
            .iter()
            .filter(|a| self.region_of(a.x1, a.x2) == Region::A)
            .map(|a| a.p)
            .fold(T::zero(), |s, v| s + v))
    }
}

/// Bounded Lipschitz extension of the posterior from the trimmed region.
///
/// Points to the right of (above) the kept region take the value at the
/// rightmost (topmost) kept point of the same row (column); points beyond
/// both take the value at the kept corner.
pub fn lipschitz_extension<T: Scalar>(mu: T, eps1: T, eps2: T, x1: T, x2: T) -> Result<T> {
    let half = T::half();
    if !(eps1 > T::zero() && eps1 < half && eps2 > T::zero() && eps2 < half) {
        return Err(Error::InvalidArgument(format!(
            "extension parameters must lie in (0, 1/2), got ({eps1}, {eps2})"
        )));
    }
    if !(mu > T::zero() && mu < T::one()) {
        return Err(Error::InvalidArgument(format!(
            "extension prior {mu} outside (0, 1)"
        )));
    }
    let one = T::one();
    if mu > half {
        let v = extension_low_prior(one - mu, eps1, eps2, one - x1, one - x2)?;
        return Ok(one - v);
    }
    extension_low_prior(mu, eps1, eps2, x1, x2)
}

fn extension_low_prior<T: Scalar>(mu: T, eps1: T, eps2: T, x1: T, x2: T) -> Result<T> {
    let one = T::one();
    let width = one - eps1;
    let bar = (mu / eps2).min(one);
    let top = |x: T| bar.min(width + x);
    let g = |a: T, b: T| omniscient_posterior(mu, a, b);
    let right = x1 > bar || x1 - x2 > width;
    let above = x2 > bar || x2 - x1 > width;
    if x1 > bar && x2 > bar {
        g(bar, bar)
    } else if x2 <= bar && right {
        g(top(x2), x2)
    } else if x1 <= bar && above {
        g(x1, top(x1))
    } else {
        g(x1, x2)
    }
}

/// Distribution of [`sample_random_structure`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SampleMode {
    /// Prior uniform on `[0, 1]`, each report uniform on its side of the prior.
    #[default]
    Uniform,
    /// Prior within `0.05` of `0` or `1` with probability `0.95`, reports
    /// clustered near the prior.
    NearBoundary,
}

impl std::str::FromStr for SampleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "near-boundary" | "near_boundary" => Ok(Self::NearBoundary),
            other => Err(Error::InvalidArgument(format!(
                "unknown sample mode {other:?}"
            ))),
        }
    }
}

/// Random valid structure.
pub fn sample_random_structure<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    mode: SampleMode,
) -> InformationStructure<T> {
    let (mu, spread): (f64, fn(f64) -> f64) = match mode {
        SampleMode::Uniform => (rng.random::<f64>(), |u| u),
        SampleMode::NearBoundary => {
            let mu = if rng.random_bool(0.95) {
                let d = 0.05 * rng.random::<f64>();
                if rng.random_bool(0.5) {
                    d
                } else {
                    1.0 - d
                }
            } else {
                rng.random::<f64>()
            };
            (mu, |u| u * u * u)
        }
    };
    let mut draw = || {
        let lo = mu - mu * spread(rng.random::<f64>());
        let hi = mu + (1.0 - mu) * spread(rng.random::<f64>());
        (lo, hi)
    };
    let (a0, a1) = draw();
    let (b0, b1) = draw();
    InformationStructure {
        mu: T::lit(mu),
        a0: T::lit(a0),
        a1: T::lit(a1),
        b0: T::lit(b0),
        b1: T::lit(b1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::info::Atom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dist(atoms: &[(f64, f64, f64)]) -> ReportDistribution<f64> {
        ReportDistribution::new(
            atoms
                .iter()
                .map(|&(x1, x2, p)| Atom { x1, x2, p })
                .collect(),
        )
    }

    #[test]
    fn tvd_examples() {
        let p = dist(&[(0.0, 0.0, 0.5), (1.0, 1.0, 0.5)]);
        let q = dist(&[(0.0, 0.0, 0.25), (1.0, 1.0, 0.75)]);
        assert!((tvd(&p, &q) - 0.25).abs() < 1e-15);
        assert_eq!(tvd(&p, &p), 0.0);
        let r = dist(&[(0.5, 0.5, 1.0)]);
        assert!((tvd(&p, &r) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn emd_examples() {
        let a = dist(&[(0.0, 0.0, 1.0)]);
        let b = dist(&[(1.0, 1.0, 1.0)]);
        assert!((emd(&a, &b).unwrap().0 - 2.0).abs() < 1e-15);
        let p = dist(&[(0.0, 0.0, 0.5), (1.0, 1.0, 0.5)]);
        assert!(emd(&p, &p).unwrap().0.abs() < 1e-15);
        assert!((emd(&p, &a).unwrap().0 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn emd_rejects_large_support() {
        let atoms: Vec<(f64, f64, f64)> = (0..65)
            .map(|i| (i as f64 / 64.0, 0.0, 1.0 / 65.0))
            .collect();
        let p = dist(&atoms);
        assert!(matches!(
            emd(&p, &p),
            Err(Error::SupportTooLarge {
                size: 65,
                limit: 64
            })
        ));
    }

    /// Exact optimum when every mass is a multiple of `1/units`: split atoms
    /// into unit pieces and try every assignment.
    fn unit_assignment_oracle(
        p: &[(f64, f64, usize)],
        q: &[(f64, f64, usize)],
        units: usize,
    ) -> f64 {
        let expand = |d: &[(f64, f64, usize)]| -> Vec<(f64, f64)> {
            d.iter()
                .flat_map(|&(x, y, c)| std::iter::repeat_n((x, y), c))
                .collect()
        };
        let (a, b) = (expand(p), expand(q));
        let mut perm: Vec<usize> = (0..units).collect();
        let mut best = f64::INFINITY;
        permute(&mut perm, 0, &mut |pm| {
            let c: f64 = pm
                .iter()
                .enumerate()
                .map(|(i, &j)| (a[i].0 - b[j].0).abs() + (a[i].1 - b[j].1).abs())
                .sum();
            best = best.min(c);
        });
        best / units as f64
    }

    fn permute(v: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
        if k == v.len() {
            visit(v);
            return;
        }
        for i in k..v.len() {
            v.swap(k, i);
            permute(v, k + 1, visit);
            v.swap(k, i);
        }
    }

    fn random_units(rng: &mut ChaCha8Rng, units: usize, atoms: usize) -> Vec<(f64, f64, usize)> {
        let mut counts = vec![0usize; atoms];
        for _ in 0..units {
            counts[rng.random_range(0..atoms)] += 1;
        }
        counts
            .into_iter()
            .filter(|&c| c > 0)
            .map(|c| (rng.random::<f64>(), rng.random::<f64>(), c))
            .collect()
    }

    #[test]
    fn emd_matches_assignment_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let units = 7;
        for _ in 0..60 {
            let pa = random_units(&mut rng, units, 4);
            let qa = random_units(&mut rng, units, 4);
            let to_dist = |v: &[(f64, f64, usize)]| {
                dist(
                    &v.iter()
                        .map(|&(x, y, c)| (x, y, c as f64 / units as f64))
                        .collect::<Vec<_>>(),
                )
            };
            let (p, q) = (to_dist(&pa), to_dist(&qa));
            let (value, plan) = emd(&p, &q).unwrap();
            let oracle = unit_assignment_oracle(&pa, &qa, units);
            assert!((value - oracle).abs() < 1e-12, "{value} vs {oracle}");
            for (s, a) in plan.row_sums(p.len()).iter().zip(&p.atoms) {
                assert!((s - a.p).abs() < 1e-10);
            }
            for (s, a) in plan.col_sums(q.len()).iter().zip(&q.atoms) {
                assert!((s - a.p).abs() < 1e-10);
            }
            assert!(plan.flows.iter().all(|f| f.mass >= 0.0));
        }
    }

    #[test]
    fn nearest_in_grid_examples() {
        let spec = GridSpec::new(10, 100).unwrap();
        // Agent 2's low report sits above the prior; rounding still applies.
        let theta = InformationStructure {
            mu: 0.305,
            a0: 0.11,
            a1: 0.52,
            b0: 0.33,
            b1: 0.77,
        };
        let r = nearest_in_grid(&theta, spec);
        let want = [0.31_f64, 0.1, 0.6, 0.3, 0.8];
        for (a, b) in r.as_array().iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{r:?}");
        }
        let on = InformationStructure::new(0.25, 0.1, 0.4, 0.2, 0.3).unwrap();
        assert_eq!(nearest_in_grid(&on, spec), on);
    }

    #[test]
    fn nearest_in_grid_degenerate() {
        let spec = GridSpec::new(10, 100).unwrap();
        let theta = InformationStructure::new(0.33_f64, 0.33, 0.33, 0.33, 0.33).unwrap();
        let r = nearest_in_grid(&theta, spec);
        assert!(
            (r.mu - 0.3).abs() < 1e-12
                && r.a0 == r.mu
                && r.a1 == r.mu
                && r.b0 == r.mu
                && r.b1 == r.mu
        );
        assert!(r.is_valid());
        let half = InformationStructure::new(0.33_f64, 0.33, 0.33, 0.1, 0.9).unwrap();
        let r = nearest_in_grid(&half, spec);
        assert!(r.is_valid(), "{r:?}");
        assert!((r.mu - 0.33).abs() < 1e-12);
    }

    fn on_grid(v: f64, k: u32) -> bool {
        ((v * k as f64) - (v * k as f64).round()).abs() < 1e-9
    }

    #[test]
    fn nearest_in_grid_lands_in_family() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (n, m) in [(10, 100), (20, 400), (5, 7), (4, 4), (6, 3)] {
            let spec = GridSpec::new(n, m).unwrap();
            for i in 0..2000 {
                let mode = if i % 2 == 0 {
                    SampleMode::Uniform
                } else {
                    SampleMode::NearBoundary
                };
                let theta: InformationStructure<f64> = sample_random_structure(&mut rng, mode);
                let r = nearest_in_grid(&theta, spec);
                assert!(r.is_valid(), "{theta:?} -> {r:?}");
                assert!(on_grid(r.mu, m), "{r:?}");
                for v in [r.a0, r.a1, r.b0, r.b1] {
                    assert!(on_grid(v, n), "{r:?}");
                }
                assert!(r.a0 <= theta.a0 + 1e-12 && r.a1 >= theta.a1 - 1e-12);
                assert!(r.b0 <= theta.b0 + 1e-12 && r.b1 >= theta.b1 - 1e-12);
                if m > n {
                    assert!(
                        r.a0 < r.mu && r.mu < r.a1 && r.b0 < r.mu && r.mu < r.b1,
                        "{r:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn concentration_holds_on_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for i in 0..3000 {
            let mode = if i % 2 == 0 {
                SampleMode::Uniform
            } else {
                SampleMode::NearBoundary
            };
            let theta: InformationStructure<f64> = sample_random_structure(&mut rng, mode);
            for eps in [0.01, 0.1, 0.3, 0.5] {
                let r = check_concentration(&theta, eps).unwrap();
                assert!(r.all_hold(), "{theta:?} eps={eps}: {r:?}");
            }
        }
        let flat = InformationStructure::new(0.3, 0.3, 0.3, 0.3, 0.3).unwrap();
        let r = check_concentration(&flat, 0.2).unwrap();
        assert_eq!((r.low.lhs, r.high.lhs, r.disagree.lhs), (0.0, 0.0, 0.0));
        assert!(check_concentration(&flat, 0.6).is_err());
    }

    #[test]
    fn region_examples() {
        let r = TrimRegions::new(0.1, 0.5, 0.1).unwrap();
        assert_eq!(r.region_of(0.0, 1.0), Region::B);
        assert_eq!(r.region_of(0.1, 0.1), Region::A);
        assert_eq!(r.region_of(0.3, 0.3), Region::C);
        assert_eq!(r.region_of(0.3, 0.1), Region::C);
        let hi = TrimRegions::new(0.1, 0.5, 0.9).unwrap();
        assert_eq!(hi.region_of(0.7, 0.9), Region::C);
        assert_eq!(hi.region_of(0.9, 0.85), Region::A);
    }

    #[test]
    fn extension_agrees_on_kept_region() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..2000 {
            let mu = rng.random_range(0.01..0.99);
            let e1 = rng.random_range(0.01..0.49);
            let e2 = rng.random_range(0.01..0.49);
            let (x1, x2) = (rng.random::<f64>(), rng.random::<f64>());
            let regions = TrimRegions::new(e1, e2, mu).unwrap();
            let v = lipschitz_extension(mu, e1, e2, x1, x2).unwrap();
            assert!((0.0..=1.0).contains(&v));
            if regions.region_of(x1, x2) == Region::A {
                let g = omniscient_posterior(mu, x1, x2).unwrap();
                assert!((v - g).abs() < 1e-12, "mu={mu} x=({x1},{x2})");
            }
        }
    }

    #[test]
    fn extension_constant_beyond_corner() {
        let (mu, e1, e2) = (0.1_f64, 0.2, 0.25);
        let corner = omniscient_posterior(mu, 0.4, 0.4).unwrap();
        for (x1, x2) in [(0.5, 0.5), (0.9, 0.41), (1.0, 1.0)] {
            assert!((lipschitz_extension(mu, e1, e2, x1, x2).unwrap() - corner).abs() < 1e-15);
        }
    }

    #[test]
    fn extension_lipschitz_constant_bounded() {
        let steps = 400;
        let h = 1.0 / steps as f64;
        for (mu, e1, e2) in [
            (0.1, 0.2, 0.25),
            (0.02, 0.1, 0.1),
            (0.5, 0.3, 0.4),
            (0.85, 0.15, 0.3),
        ] {
            let bound = 8.0 / (e1 * e1 * e2);
            let f = |i: usize, j: usize| {
                lipschitz_extension(mu, e1, e2, i as f64 * h, j as f64 * h).unwrap()
            };
            let mut worst: f64 = 0.0;
            for i in 0..=steps {
                for j in 0..=steps {
                    if i < steps {
                        worst = worst.max((f(i + 1, j) - f(i, j)).abs() / h);
                    }
                    if j < steps {
                        worst = worst.max((f(i, j + 1) - f(i, j)).abs() / h);
                    }
                }
            }
            assert!(worst <= bound, "mu={mu}: {worst} > {bound}");
        }
    }

    #[test]
    fn sampler_valid_and_reproducible() {
        let mut a = ChaCha8Rng::seed_from_u64(1);
        let mut b = ChaCha8Rng::seed_from_u64(1);
        let mut c = ChaCha8Rng::seed_from_u64(2);
        let mut near = 0;
        for _ in 0..5000 {
            let s: InformationStructure<f64> =
                sample_random_structure(&mut a, SampleMode::NearBoundary);
            let t: InformationStructure<f64> =
                sample_random_structure(&mut b, SampleMode::NearBoundary);
            assert_eq!(s, t);
            assert!(s.is_valid());
            if s.mu <= 0.05 || s.mu >= 0.95 {
                near += 1;
            }
            let u: InformationStructure<f64> = sample_random_structure(&mut c, SampleMode::Uniform);
            assert!(u.is_valid());
        }
        assert!(near as f64 / 5000.0 >= 0.9);
    }
}
