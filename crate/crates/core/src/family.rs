//! A finite family of grid-supported structures with its report atoms,
//! posteriors and omniscient losses precomputed.
//!
//! A family may be *symmetric*: it then stores one representative per orbit of
//! the agent-swap and complement symmetries, and every quantity is defined
//! over the full orbit closure. Weights on a representative are the total
//! mass of its orbit, spread evenly over the orbit members.

use rayon::prelude::*;

use crate::aggregator::{Aggregator, AggregatorGrid};
use crate::error::{Error, Result};
use crate::info::{
    enumerate_keys, support_distribution, EnumerateOptions, GridKey, GridSpec, InformationStructure,
};
use crate::regret::{argmax, grid_index, Paradigm};
use crate::scalar::{chunked_sum, Scalar, REDUCE_CHUNK};

/// One report atom: probability, omniscient posterior and flat grid index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridAtom<T> {
    pub p: T,
    pub g: T,
    pub cell: u32,
}

/// The four orbit maps acting on reports: identity, swap, complement, swap then complement.
pub const ORBIT_MAPS: usize = 4;

#[derive(Debug, Clone)]
pub struct Family<T> {
    n: u32,
    spec: Option<GridSpec>,
    keys: Option<Vec<GridKey>>,
    structures: Vec<InformationStructure<T>>,
    offsets: Vec<u32>,
    atoms: Vec<GridAtom<T>>,
    omniscient: Vec<T>,
    multiplicity: Vec<u32>,
    symmetric: bool,
}

/// How a non-symmetric aggregator's regret on a symmetric family's orbit is reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OrbitReduce {
    Mean,
    Max,
}

fn build_atoms<T: Scalar>(
    theta: &InformationStructure<T>,
    n: u32,
) -> Result<(Vec<GridAtom<T>>, T)> {
    let d = support_distribution(theta)?;
    let side = n + 1;
    let mut out = Vec::with_capacity(d.atoms.len());
    let mut omni = T::zero();
    for a in d.atoms {
        let (k1, k2) = grid_index(a.x1, a.x2, n)?;
        let g = theta.posterior(a.x1, a.x2)?;
        omni = omni + a.p * g * (T::one() - g);
        out.push(GridAtom {
            p: a.p,
            g,
            cell: k1 * side + k2,
        });
    }
    Ok((out, omni))
}

impl<T: Scalar> Family<T> {
    /// The discretized family on `spec`, optionally pruned to orbit representatives.
    pub fn grid(spec: GridSpec, opts: EnumerateOptions) -> Self {
        let keys = enumerate_keys(spec, opts);
        Self::from_keys(spec, keys, opts.prune_symmetry)
    }

    /// Family from integer keys and their multiplicities.
    pub fn from_keys(spec: GridSpec, keys: Vec<(GridKey, u32)>, symmetric: bool) -> Self {
        let structures: Vec<InformationStructure<T>> =
            keys.iter().map(|(k, _)| k.to_structure(spec)).collect();
        let multiplicity = keys.iter().map(|(_, m)| *m).collect();
        let mut fam = Self::from_parts(spec.n, structures, multiplicity, symmetric)
            .expect("grid keys always yield on-grid atoms");
        fam.spec = Some(spec);
        fam.keys = Some(keys.into_iter().map(|(k, _)| k).collect());
        fam
    }

    /// Family from explicit structures whose atoms lie on the `n`-grid.
    ///
    /// With `symmetric`, each structure stands for its orbit and `multiplicity`
    /// should hold the orbit sizes; it defaults to all ones.
    pub fn from_structures(
        n: u32,
        structures: Vec<InformationStructure<T>>,
        multiplicity: Option<Vec<u32>>,
        symmetric: bool,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "grid resolution must be positive".into(),
            ));
        }
        for s in &structures {
            s.validate()?;
        }
        let multiplicity = multiplicity.unwrap_or_else(|| vec![1; structures.len()]);
        if multiplicity.len() != structures.len() {
            return Err(Error::InvalidArgument(
                "multiplicity length mismatch".into(),
            ));
        }
        Self::from_parts(n, structures, multiplicity, symmetric)
    }

    fn from_parts(
        n: u32,
        structures: Vec<InformationStructure<T>>,
        multiplicity: Vec<u32>,
        symmetric: bool,
    ) -> Result<Self> {
        let built = structures
            .par_iter()
            .map(|s| build_atoms(s, n))
            .collect::<Result<Vec<_>>>()?;
        let mut offsets = Vec::with_capacity(built.len() + 1);
        let mut atoms = Vec::with_capacity(built.len() * 4);
        let mut omniscient = Vec::with_capacity(built.len());
        offsets.push(0u32);
        for (a, o) in built {
            atoms.extend(a);
            offsets.push(atoms.len() as u32);
            omniscient.push(o);
        }
        Ok(Self {
            n,
            spec: None,
            keys: None,
            structures,
            offsets,
            atoms,
            omniscient,
            multiplicity,
            symmetric,
        })
    }

    pub fn len(&self) -> usize {
        self.structures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.structures.is_empty()
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn side(&self) -> usize {
        self.n as usize + 1
    }

    pub fn spec(&self) -> Option<GridSpec> {
        self.spec
    }

    pub fn keys(&self) -> Option<&[GridKey]> {
        self.keys.as_deref()
    }

    pub fn structures(&self) -> &[InformationStructure<T>] {
        &self.structures
    }

    pub fn omniscient(&self) -> &[T] {
        &self.omniscient
    }

    pub fn multiplicity(&self) -> &[u32] {
        &self.multiplicity
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Number of structures in the family this one stands for.
    pub fn total_multiplicity(&self) -> u64 {
        self.multiplicity.iter().map(|&m| m as u64).sum()
    }

    #[inline]
    pub fn atoms(&self, i: usize) -> &[GridAtom<T>] {
        &self.atoms[self.offsets[i] as usize..self.offsets[i + 1] as usize]
    }

    /// Image of a flat grid index under orbit map `m`.
    #[inline]
    pub fn map_cell(&self, cell: u32, m: usize) -> u32 {
        let side = self.n + 1;
        let (k1, k2) = (cell / side, cell % side);
        let n = self.n;
        match m {
            0 => cell,
            1 => k2 * side + k1,
            2 => (n - k1) * side + (n - k2),
            _ => (n - k2) * side + (n - k1),
        }
    }

    /// Structures whose regret is defined under `paradigm`.
    pub fn admissible(&self, paradigm: &Paradigm<T>) -> Vec<bool> {
        self.omniscient
            .iter()
            .map(|&o| paradigm.admits(o))
            .collect()
    }

    /// Samples an aggregator on this family's report grid.
    pub fn sample(&self, f: &impl Aggregator<T>) -> AggregatorGrid<T> {
        AggregatorGrid::sample(self.n, f)
    }

    fn check_grid(&self, f: &AggregatorGrid<T>) -> Result<()> {
        if f.n() != self.n {
            return Err(Error::InvalidArgument(format!(
                "aggregator resolution {} does not match family resolution {}",
                f.n(),
                self.n
            )));
        }
        Ok(())
    }

    #[inline]
    fn additive_image(&self, i: usize, vals: &[T], m: usize) -> T {
        let mut acc = T::zero();
        for a in self.atoms(i) {
            let (cell, g) = if m == 0 {
                (a.cell, a.g)
            } else if m == 1 {
                (self.map_cell(a.cell, 1), a.g)
            } else {
                (self.map_cell(a.cell, m), T::one() - a.g)
            };
            let e = vals[cell as usize] - g;
            acc = acc + a.p * e * e;
        }
        acc
    }

    fn maps_for(&self, f: &AggregatorGrid<T>) -> usize {
        if self.symmetric && !f.is_symmetric() {
            ORBIT_MAPS
        } else {
            1
        }
    }

    fn regrets_with(
        &self,
        f: &AggregatorGrid<T>,
        paradigm: &Paradigm<T>,
        reduce: OrbitReduce,
    ) -> Vec<Option<T>> {
        let vals = f.values();
        let maps = self.maps_for(f);
        (0..self.len())
            .into_par_iter()
            .with_min_len(256)
            .map(|i| {
                let omni = self.omniscient[i];
                if !paradigm.admits(omni) {
                    return None;
                }
                let add = if maps == 1 {
                    self.additive_image(i, vals, 0)
                } else {
                    let imgs = [0, 1, 2, 3].map(|m| self.additive_image(i, vals, m));
                    match reduce {
                        OrbitReduce::Mean => {
                            imgs.into_iter().fold(T::zero(), |a, b| a + b) * T::lit(0.25)
                        }
                        OrbitReduce::Max => imgs.into_iter().fold(T::zero(), T::max),
                    }
                };
                paradigm.combine(add, omni)
            })
            .collect()
    }

    /// Regret of each structure. On a symmetric family with a non-symmetric `f`,
    /// the mean over the orbit (what the representative's weight is spread over).
    pub fn regrets(&self, f: &AggregatorGrid<T>, paradigm: &Paradigm<T>) -> Result<Vec<Option<T>>> {
        self.check_grid(f)?;
        Ok(self.regrets_with(f, paradigm, OrbitReduce::Mean))
    }

    /// `E_{theta ~ w}[R(f, theta)]` over the (orbit-closed) family.
    pub fn expected_regret(
        &self,
        f: &AggregatorGrid<T>,
        weights: &[T],
        paradigm: &Paradigm<T>,
    ) -> Result<T> {
        self.check_grid(f)?;
        if weights.len() != self.len() {
            return Err(Error::InvalidArgument(format!(
                "{} weights for {} structures",
                weights.len(),
                self.len()
            )));
        }
        let r = self.regrets_with(f, paradigm, OrbitReduce::Mean);
        let terms = r
            .iter()
            .zip(weights)
            .enumerate()
            .map(|(i, (r, &w))| match r {
                _ if w == T::zero() => Ok(T::zero()),
                Some(r) => Ok(w * *r),
                None => Err(Error::RatioUndefined {
                    loss: self.omniscient[i].to_f64_lossy(),
                    floor: paradigm.ratio_floor.to_f64_lossy(),
                }),
            })
            .collect::<Result<Vec<T>>>()?;
        Ok(chunked_sum(&terms))
    }

    /// Largest regret over the orbit-closed family and the lowest
    /// representative index attaining it.
    pub fn max_regret(
        &self,
        f: &AggregatorGrid<T>,
        paradigm: &Paradigm<T>,
    ) -> Result<Option<(T, usize)>> {
        self.check_grid(f)?;
        let r = self.regrets_with(f, paradigm, OrbitReduce::Max);
        Ok(argmax(r.into_iter().enumerate()))
    }

    /// Per-report maximum regret over structures reaching that report; 0 where unreached.
    pub fn regret_map(&self, f: &AggregatorGrid<T>, paradigm: &Paradigm<T>) -> Result<Vec<T>> {
        self.check_grid(f)?;
        let vals = f.values();
        let maps = if self.symmetric { ORBIT_MAPS } else { 1 };
        let size = self.side() * self.side();
        let partial: Vec<Vec<T>> = (0..self.len())
            .collect::<Vec<_>>()
            .par_chunks(REDUCE_CHUNK)
            .map(|chunk| {
                let mut map = vec![T::zero(); size];
                for &i in chunk {
                    let omni = self.omniscient[i];
                    for m in 0..maps {
                        let Some(r) = paradigm.combine(self.additive_image(i, vals, m), omni)
                        else {
                            continue;
                        };
                        for a in self.atoms(i) {
                            let c = self.map_cell(a.cell, m) as usize;
                            map[c] = map[c].max(r);
                        }
                    }
                }
                map
            })
            .collect();
        let mut out = vec![T::zero(); size];
        for p in partial {
            for (o, v) in out.iter_mut().zip(p) {
                *o = o.max(v);
            }
        }
        Ok(out)
    }

    /// Report distribution under the mixture `w`, orbit-averaged on a symmetric family.
    pub fn mass_map(&self, weights: &[T]) -> Result<Vec<T>> {
        if weights.len() != self.len() {
            return Err(Error::InvalidArgument(format!(
                "{} weights for {} structures",
                weights.len(),
                self.len()
            )));
        }
        let raw = self.accumulate(weights, |_, a| [a.p, T::zero(), T::zero()]);
        let mass: Vec<T> = raw.iter().map(|v| v[0]).collect();
        if !self.symmetric {
            return Ok(mass);
        }
        Ok((0..mass.len() as u32)
            .map(|c| {
                let s = (0..ORBIT_MAPS)
                    .fold(T::zero(), |acc, m| acc + mass[self.map_cell(c, m) as usize]);
                s * T::lit(0.25)
            })
            .collect())
    }

    /// Deterministic per-cell accumulation of `w_theta * term(theta, atom)`.
    pub(crate) fn accumulate(
        &self,
        weights: &[T],
        term: impl Fn(usize, &GridAtom<T>) -> [T; 3] + Sync,
    ) -> Vec<[T; 3]> {
        let size = self.side() * self.side();
        let idx: Vec<usize> = (0..self.len()).collect();
        let partial: Vec<Vec<[T; 3]>> = idx
            .par_chunks(REDUCE_CHUNK)
            .map(|chunk| {
                let mut acc = vec![[T::zero(); 3]; size];
                for &i in chunk {
                    let w = weights[i];
                    if w == T::zero() {
                        continue;
                    }
                    for a in self.atoms(i) {
                        let t = term(i, a);
                        let slot = &mut acc[a.cell as usize];
                        for k in 0..3 {
                            slot[k] = slot[k] + w * t[k];
                        }
                    }
                }
                acc
            })
            .collect();
        let mut out = vec![[T::zero(); 3]; size];
        for p in partial {
            for (o, v) in out.iter_mut().zip(p) {
                for k in 0..3 {
                    o[k] = o[k] + v[k];
                }
            }
        }
        out
    }

    /// Expands representative-level weights to every member of each orbit,
    /// returned as (structure, weight) pairs. Identity for non-symmetric families.
    pub fn expand_weights(&self, weights: &[T]) -> Vec<(InformationStructure<T>, T)> {
        let mut out = Vec::with_capacity(self.len());
        for (s, &w) in self.structures.iter().zip(weights) {
            if !self.symmetric {
                out.push((*s, w));
                continue;
            }
            let mut members: Vec<InformationStructure<T>> = Vec::with_capacity(4);
            let c = s.complement();
            for img in [*s, s.swap_agents(), c, c.swap_agents()] {
                if !members.iter().any(|m| m.as_array() == img.as_array()) {
                    members.push(img);
                }
            }
            let share = w / T::lit(members.len() as f64);
            out.extend(members.into_iter().map(|m| (m, share)));
        }
        out
    }
}
