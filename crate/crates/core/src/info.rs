//! Binary-state, two-agent, conditionally independent information structures.
//!
//! A structure is stored in prediction coordinates `(mu, a0, a1, b0, b1)`:
//! the prior of the state `omega = 1` and the two posteriors each agent can
//! report. Agent 1 reports `a0` or `a1`, agent 2 reports `b0` or `b1`, with
//! `a0 <= mu <= a1` and `b0 <= mu <= b1`.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One conditionally independent binary-signal structure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InformationStructure<T> {
    pub mu: T,
    pub a0: T,
    pub a1: T,
    pub b0: T,
    pub b1: T,
}

/// Likelihoods of the low-report signal of each agent.
///
/// `p1 = Pr[low signal of agent 1 | omega = 1]`, `p0 = Pr[low signal of agent 1 | omega = 0]`;
/// `q1`, `q0` likewise for agent 2. The low signal is the one whose posterior is `a0` (`b0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalProbabilities<T> {
    pub p0: T,
    pub p1: T,
    pub q0: T,
    pub q1: T,
}

/// A point of the report space with its probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom<T> {
    pub x1: T,
    pub x2: T,
    pub p: T,
}

/// Finite distribution over report pairs `(x1, x2)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportDistribution<T> {
    pub atoms: Vec<Atom<T>>,
}

impl<T: Scalar> ReportDistribution<T> {
    pub fn new(atoms: Vec<Atom<T>>) -> Self {
        Self { atoms }
    }

    pub fn point_mass(x1: T, x2: T) -> Self {
        Self {
            atoms: vec![Atom {
                x1,
                x2,
                p: T::one(),
            }],
        }
    }

    pub fn total(&self) -> T {
        self.atoms.iter().map(|a| a.p).sum()
    }

    pub fn mean_x1(&self) -> T {
        self.atoms.iter().map(|a| a.p * a.x1).sum()
    }

    pub fn mean_x2(&self) -> T {
        self.atoms.iter().map(|a| a.p * a.x2).sum()
    }

    /// Probability mass at `(x1, x2)`, matching coordinates within the grid tolerance.
    pub fn prob_at(&self, x1: T, x2: T) -> T {
        let tol = T::grid_tol();
        self.atoms
            .iter()
            .filter(|a| (a.x1 - x1).abs() <= tol && (a.x2 - x2).abs() <= tol)
            .map(|a| a.p)
            .sum()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// Report and prior resolution of the discretized family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridSpec {
    /// Reports live on `{0, 1/n, ..., 1}`.
    pub n: u32,
    /// Priors live on `{0, 1/m, ..., 1}`.
    pub m: u32,
}

impl GridSpec {
    pub fn new(n: u32, m: u32) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid resolutions must be positive (n={n}, m={m})"
            )));
        }
        if n > u16::MAX as u32 - 1 {
            return Err(Error::InvalidArgument(format!(
                "report resolution {n} too large"
            )));
        }
        Ok(Self { n, m })
    }
}

/// Posterior of `omega = 1` given both reports, for a known prior.
///
/// Undefined when both `x1 x2 (1 - mu)` and `(1 - x1)(1 - x2) mu` vanish.
pub fn omniscient_posterior<T: Scalar>(mu: T, x1: T, x2: T) -> Result<T> {
    let up = (T::one() - mu) * x1 * x2;
    let down = mu * (T::one() - x1) * (T::one() - x2);
    let den = up + down;
    if den <= T::zero() {
        return Err(Error::UndefinedPosterior {
            mu: mu.to_f64_lossy(),
            x1: x1.to_f64_lossy(),
            x2: x2.to_f64_lossy(),
        });
    }
    Ok(up / den)
}

fn lex_cmp_tol<T: Scalar>(a: &[T; 5], b: &[T; 5], tol: T) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        if (*x - *y).abs() > tol {
            return if x < y {
                Ordering::Less
            } else {
                Ordering::Greater
            };
        }
    }
    Ordering::Equal
}

impl<T: Scalar> InformationStructure<T> {
    /// Builds a structure, checking every invariant.
    pub fn new(mu: T, a0: T, a1: T, b0: T, b1: T) -> Result<Self> {
        let s = Self { mu, a0, a1, b0, b1 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let tol = T::grid_tol();
        let unit = |v: T| v >= T::zero() && v <= T::one();
        if ![self.mu, self.a0, self.a1, self.b0, self.b1]
            .into_iter()
            .all(unit)
        {
            return Err(Error::DegenerateStructure(format!(
                "{self:?}: all coordinates must lie in [0, 1]"
            )));
        }
        for (lo, hi, who) in [(self.a0, self.a1, "agent 1"), (self.b0, self.b1, "agent 2")] {
            if lo > self.mu + tol || hi < self.mu - tol {
                return Err(Error::DegenerateStructure(format!(
                    "{self:?}: prior is not between the {who} posteriors"
                )));
            }
            if (hi - lo).abs() <= tol && (lo - self.mu).abs() > tol {
                return Err(Error::DegenerateStructure(format!(
                    "{self:?}: uninformative {who} must report the prior"
                )));
            }
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }

    pub fn as_array(&self) -> [T; 5] {
        [self.mu, self.a0, self.a1, self.b0, self.b1]
    }

    fn from_array(v: [T; 5]) -> Self {
        Self {
            mu: v[0],
            a0: v[1],
            a1: v[2],
            b0: v[3],
            b1: v[4],
        }
    }

    /// Report distribution of one agent: `(report, probability)` with zero-probability
    /// reports removed. A point mass at `mu` when the agent is uninformative.
    pub fn marginal(lo: T, hi: T, mu: T) -> Vec<(T, T)> {
        let width = hi - lo;
        if width <= T::grid_tol() {
            return vec![(mu, T::one())];
        }
        let p_lo = ((hi - mu) / width).max(T::zero()).min(T::one());
        let p_hi = ((mu - lo) / width).max(T::zero()).min(T::one());
        let mut out = Vec::with_capacity(2);
        if p_lo > T::zero() {
            out.push((lo, p_lo));
        }
        if p_hi > T::zero() {
            out.push((hi, p_hi));
        }
        out
    }

    pub fn marginal_a(&self) -> Vec<(T, T)> {
        Self::marginal(self.a0, self.a1, self.mu)
    }

    pub fn marginal_b(&self) -> Vec<(T, T)> {
        Self::marginal(self.b0, self.b1, self.mu)
    }

    /// Bayesian posterior of the state given both reports under this structure.
    ///
    /// With a boundary prior the state is known, so the posterior is the prior.
    pub fn posterior(&self, x1: T, x2: T) -> Result<T> {
        if self.mu <= T::zero() || self.mu >= T::one() {
            return Ok(self.mu);
        }
        omniscient_posterior(self.mu, x1, x2)
    }

    /// Agent swap.
    pub fn swap_agents(&self) -> Self {
        Self {
            mu: self.mu,
            a0: self.b0,
            a1: self.b1,
            b0: self.a0,
            b1: self.a1,
        }
    }

    /// State relabeling `omega -> 1 - omega`.
    pub fn complement(&self) -> Self {
        let one = T::one();
        Self {
            mu: one - self.mu,
            a0: one - self.a1,
            a1: one - self.a0,
            b0: one - self.b1,
            b1: one - self.b0,
        }
    }

    /// Swapping the signal labels of agent 1. In sorted prediction coordinates the
    /// two reports are exchanged and re-sorted, so the tuple is unchanged.
    pub fn relabel_a(&self) -> Self {
        let (lo, hi) = (self.a1.min(self.a0), self.a1.max(self.a0));
        Self {
            a0: lo,
            a1: hi,
            ..*self
        }
    }

    pub fn relabel_b(&self) -> Self {
        let (lo, hi) = (self.b1.min(self.b0), self.b1.max(self.b0));
        Self {
            b0: lo,
            b1: hi,
            ..*self
        }
    }

    /// Images under the 16 symmetry maps (two signal relabelings, agent swap,
    /// state complement, and their compositions). The identity comes first.
    pub fn symmetry_images(&self) -> [Self; 16] {
        let mut out = [*self; 16];
        for (k, slot) in out.iter_mut().enumerate() {
            let mut s = *self;
            if k & 1 != 0 {
                s = s.relabel_a();
            }
            if k & 2 != 0 {
                s = s.relabel_b();
            }
            if k & 4 != 0 {
                s = s.swap_agents();
            }
            if k & 8 != 0 {
                s = s.complement();
            }
            *slot = s;
        }
        out
    }

    /// Distinct members of the symmetry orbit (matched within the grid tolerance).
    pub fn orbit(&self) -> Vec<Self> {
        let tol = T::grid_tol();
        let mut out: Vec<Self> = Vec::with_capacity(4);
        for img in self.symmetry_images() {
            let a = img.as_array();
            if !out
                .iter()
                .any(|o| lex_cmp_tol(&o.as_array(), &a, tol) == Ordering::Equal)
            {
                out.push(img);
            }
        }
        out
    }

    /// Lexicographically smallest member of the orbit. Ties within tolerance keep
    /// the earlier image, so canonical inputs are returned unchanged.
    pub fn canonicalize(&self) -> Self {
        let tol = T::grid_tol();
        let mut best = self.as_array();
        for img in self.symmetry_images().iter().skip(1) {
            let a = img.as_array();
            if lex_cmp_tol(&a, &best, tol) == Ordering::Less {
                best = a;
            }
        }
        Self::from_array(best)
    }
}

/// Joint distribution of both agents' reports.
pub fn support_distribution<T: Scalar>(
    theta: &InformationStructure<T>,
) -> Result<ReportDistribution<T>> {
    let mu = theta.mu;
    let one = T::one();
    let ma = theta.marginal_a();
    let mb = theta.marginal_b();
    let mut atoms = Vec::with_capacity(4);
    for &(x1, pa) in &ma {
        for &(x2, pb) in &mb {
            let mut k = T::zero();
            let low = (one - x1) * (one - x2);
            let high = x1 * x2;
            if mu < one {
                k = k + low / (one - mu);
            } else if low > T::zero() {
                return Err(Error::DegenerateStructure(format!(
                    "{theta:?}: atom ({x1}, {x2}) needs the undefined omega=0 term"
                )));
            }
            if mu > T::zero() {
                k = k + high / mu;
            } else if high > T::zero() {
                return Err(Error::DegenerateStructure(format!(
                    "{theta:?}: atom ({x1}, {x2}) needs the undefined omega=1 term"
                )));
            }
            let p = pa * pb * k;
            if p > T::zero() {
                atoms.push(Atom { x1, x2, p });
            }
        }
    }
    Ok(ReportDistribution { atoms })
}

/// Signal likelihoods realizing the given predictions.
///
/// Requires `a0 < mu < a1` and `b0 < mu < b1`.
pub fn predictions_to_signal_probs<T: Scalar>(
    theta: &InformationStructure<T>,
) -> Result<SignalProbabilities<T>> {
    let InformationStructure { mu, a0, a1, b0, b1 } = *theta;
    if !(a0 < mu && mu < a1 && b0 < mu && mu < b1) {
        return Err(Error::DegenerateStructure(format!(
            "{theta:?}: signal probabilities need a0 < mu < a1 and b0 < mu < b1"
        )));
    }
    let one = T::one();
    let solve = |lo: T, hi: T| {
        let p1 = lo * (hi - mu) / (mu * (hi - lo));
        let p0 = (one - lo) * (hi - mu) / ((one - mu) * (hi - lo));
        (p0, p1)
    };
    let (p0, p1) = solve(a0, a1);
    let (q0, q1) = solve(b0, b1);
    Ok(SignalProbabilities { p0, p1, q0, q1 })
}

/// Inverse of [`predictions_to_signal_probs`].
pub fn signal_probs_to_predictions<T: Scalar>(
    mu: T,
    sp: &SignalProbabilities<T>,
) -> Result<InformationStructure<T>> {
    let one = T::one();
    let post = |p0: T, p1: T| -> Result<(T, T)> {
        let low = mu * p1 + (one - mu) * p0;
        if low <= T::zero() || low >= one {
            return Err(Error::DegenerateStructure(format!(
                "signal with likelihoods ({p0}, {p1}) is never or always received"
            )));
        }
        Ok((mu * p1 / low, mu * (one - p1) / (one - low)))
    };
    let (a0, a1) = post(sp.p0, sp.p1)?;
    let (b0, b1) = post(sp.q0, sp.q1)?;
    Ok(InformationStructure { mu, a0, a1, b0, b1 })
}

/// Integer coordinates of a member of the discretized family:
/// `mu = m / M`, `a0 = a0 / N`, and so on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GridKey {
    pub m: u32,
    pub a0: u32,
    pub a1: u32,
    pub b0: u32,
    pub b1: u32,
}

impl GridKey {
    fn agent_valid(lo: u32, hi: u32, m: u32, spec: GridSpec) -> bool {
        let (n, mm) = (spec.n as u64, spec.m as u64);
        let lo_s = lo as u64 * mm;
        let hi_s = hi as u64 * mm;
        let mu_s = m as u64 * n;
        lo <= hi && lo_s <= mu_s && mu_s <= hi_s && (lo != hi || lo_s == mu_s)
    }

    pub fn is_valid(&self, spec: GridSpec) -> bool {
        self.m <= spec.m
            && self.a1 <= spec.n
            && self.b1 <= spec.n
            && Self::agent_valid(self.a0, self.a1, self.m, spec)
            && Self::agent_valid(self.b0, self.b1, self.m, spec)
    }

    pub fn swap_agents(&self) -> Self {
        Self {
            m: self.m,
            a0: self.b0,
            a1: self.b1,
            b0: self.a0,
            b1: self.a1,
        }
    }

    pub fn complement(&self, spec: GridSpec) -> Self {
        let n = spec.n;
        Self {
            m: spec.m - self.m,
            a0: n - self.a1,
            a1: n - self.a0,
            b0: n - self.b1,
            b1: n - self.b0,
        }
    }

    /// The four orbit images under agent swap and complement (signal relabelings
    /// act trivially on sorted keys). May contain repeats.
    pub fn images(&self, spec: GridSpec) -> [Self; 4] {
        let c = self.complement(spec);
        [*self, self.swap_agents(), c, c.swap_agents()]
    }

    pub fn canonical(&self, spec: GridSpec) -> Self {
        *self.images(spec).iter().min().expect("non-empty")
    }

    pub fn orbit_size(&self, spec: GridSpec) -> u32 {
        let mut imgs = self.images(spec);
        imgs.sort();
        1 + imgs.windows(2).filter(|w| w[0] != w[1]).count() as u32
    }

    /// Collapses agents whose report distribution is a point mass onto the
    /// degenerate representative `a0 = a1 = mu`. Two keys describe the same
    /// report distribution iff their reduced keys are equal.
    pub fn reduced(&self, spec: GridSpec) -> Self {
        let (n, mm) = (spec.n as u64, spec.m as u64);
        let mu_s = self.m as u64 * n;
        let fix = |lo: u32, hi: u32| {
            if lo as u64 * mm == mu_s {
                (lo, lo)
            } else if hi as u64 * mm == mu_s {
                (hi, hi)
            } else {
                (lo, hi)
            }
        };
        let (a0, a1) = fix(self.a0, self.a1);
        let (b0, b1) = fix(self.b0, self.b1);
        Self {
            m: self.m,
            a0,
            a1,
            b0,
            b1,
        }
    }

    pub fn to_structure<T: Scalar>(&self, spec: GridSpec) -> InformationStructure<T> {
        InformationStructure {
            mu: T::ratio(self.m, spec.m),
            a0: T::ratio(self.a0, spec.n),
            a1: T::ratio(self.a1, spec.n),
            b0: T::ratio(self.b0, spec.n),
            b1: T::ratio(self.b1, spec.n),
        }
    }
}

/// Options for [`enumerate_keys`] / [`enumerate_grid`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EnumerateOptions {
    /// Keep one representative per symmetry orbit.
    pub prune_symmetry: bool,
    /// Merge keys with identical report distributions.
    pub dedup: bool,
}

/// Enumerates the discretized family as integer keys with their orbit sizes.
///
/// Ordering is lexicographic on the key (on the canonical key when pruning).
/// When pruning, the orbit size counts the distinct members the representative
/// stands for; otherwise it is 1.
pub fn enumerate_keys(spec: GridSpec, opts: EnumerateOptions) -> Vec<(GridKey, u32)> {
    let agents = |m: u32| -> Vec<(u32, u32)> {
        let mut v = Vec::new();
        for lo in 0..=spec.n {
            for hi in lo..=spec.n {
                if GridKey::agent_valid(lo, hi, m, spec) {
                    v.push((lo, hi));
                }
            }
        }
        v
    };
    let per_prior: Vec<Vec<(GridKey, u32)>> = (0..=spec.m)
        .into_par_iter()
        .map(|m| {
            let ag = agents(m);
            let mut out = Vec::with_capacity(ag.len() * ag.len());
            for &(a0, a1) in &ag {
                for &(b0, b1) in &ag {
                    let mut key = GridKey { m, a0, a1, b0, b1 };
                    if opts.dedup {
                        let r = key.reduced(spec);
                        if r != key {
                            continue;
                        }
                        key = r;
                    }
                    if opts.prune_symmetry {
                        if key.canonical(spec) != key {
                            continue;
                        }
                        out.push((key, key.orbit_size(spec)));
                    } else {
                        out.push((key, 1));
                    }
                }
            }
            out
        })
        .collect();
    // Keys within one prior are generated in lexicographic order already.
    per_prior.into_iter().flatten().collect()
}

/// Enumerates the discretized family as structures.
pub fn enumerate_grid<T: Scalar>(
    spec: GridSpec,
    prune_symmetry: bool,
    dedup: bool,
) -> Vec<InformationStructure<T>> {
    enumerate_keys(
        spec,
        EnumerateOptions {
            prune_symmetry,
            dedup,
        },
    )
    .into_iter()
    .map(|(k, _)| k.to_structure(spec))
    .collect()
}
