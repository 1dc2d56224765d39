//! Ground-truth structure prediction by exhaustive search over a compact
//! ensemble, and designability censuses over a sequence space.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::energy::{EnergyMatrix, Sequence, DEGENERACY_TOL};
use crate::error::{invalid, Result};
use crate::lattice::ContactMap;
use crate::math;
use crate::sequence::SequenceSpace;

/// Inverse temperature and fold-probability threshold of the oracle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub beta: f64,
    pub p_fold: f64,
}

impl OracleConfig {
    pub fn new(beta: f64, p_fold: f64) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(invalid(alloc::format!("beta must be finite and >= 0, got {beta}")));
        }
        if !(p_fold > 0.5 && p_fold < 1.0) {
            return Err(invalid(alloc::format!("p_fold must lie in (0.5, 1), got {p_fold}")));
        }
        Ok(OracleConfig { beta, p_fold })
    }
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            beta: 3.0,
            p_fold: 0.8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    /// `(ensemble index, energy)`, ascending by energy then index.
    pub ranked_spectrum: Vec<(usize, f64)>,
    pub ground_states: Vec<usize>,
    pub p_native: f64,
    pub foldable: bool,
}

impl FoldResult {
    pub fn energy_of(&self, index: usize) -> Option<f64> {
        self.ranked_spectrum
            .iter()
            .find(|(k, _)| *k == index)
            .map(|&(_, e)| e)
    }

    /// The unique ground state, if there is one.
    pub fn native(&self) -> Option<usize> {
        (self.ground_states.len() == 1).then(|| self.ground_states[0])
    }

    /// Whether `target` is the unique ground state with enough occupancy.
    pub fn designs(&self, target: usize) -> bool {
        self.foldable && self.native() == Some(target)
    }
}

/// An ensemble of contact maps flattened for fast repeated energy sweeps.
#[derive(Clone, Debug)]
pub struct FoldEngine {
    n: usize,
    offsets: Vec<usize>,
    pairs: Vec<(u16, u16)>,
}

impl FoldEngine {
    pub fn new(ensemble: &[ContactMap]) -> Result<Self> {
        let first = ensemble.first().ok_or_else(|| invalid("empty conformation ensemble"))?;
        let n = first.n();
        let mut offsets = Vec::with_capacity(ensemble.len() + 1);
        let mut pairs = Vec::new();
        offsets.push(0);
        for cm in ensemble {
            if cm.n() != n {
                return Err(invalid("ensemble mixes chain lengths"));
            }
            pairs.extend(cm.pairs().map(|(i, j)| (i as u16, j as u16)));
            offsets.push(pairs.len());
        }
        Ok(FoldEngine { n, offsets, pairs })
    }

    pub fn chain_length(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contacts(&self, structure: usize) -> &[(u16, u16)] {
        &self.pairs[self.offsets[structure]..self.offsets[structure + 1]]
    }

    fn check(&self, s: &Sequence, e: &EnergyMatrix) -> Result<()> {
        if s.len() != self.n {
            return Err(invalid(alloc::format!(
                "sequence length {} does not match chain length {}",
                s.len(),
                self.n
            )));
        }
        if s.max_type().is_some_and(|m| m as usize >= e.size()) {
            return Err(invalid("sequence uses types outside the energy matrix"));
        }
        Ok(())
    }

    #[inline]
    pub fn energy(&self, structure: usize, s: &[u8], e: &EnergyMatrix) -> f64 {
        self.contacts(structure)
            .iter()
            .map(|&(i, j)| e.get(s[i as usize] as usize, s[j as usize] as usize))
            .sum()
    }

    pub fn energies_into(&self, s: &[u8], e: &EnergyMatrix, out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.len()).map(|k| self.energy(k, s, e)));
    }

    pub fn fold(&self, s: &Sequence, e: &EnergyMatrix, cfg: OracleConfig) -> Result<FoldResult> {
        self.check(s, e)?;
        let mut energies = Vec::with_capacity(self.len());
        self.energies_into(s.residues(), e, &mut energies);
        let mut ranked: Vec<(usize, f64)> = energies.iter().copied().enumerate().collect();
        ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let min = ranked[0].1;
        let ground_states: Vec<usize> = ranked
            .iter()
            .take_while(|(_, v)| *v <= min + DEGENERACY_TOL)
            .map(|&(k, _)| k)
            .collect();
        let z: f64 = energies.iter().map(|&v| math::exp(-cfg.beta * (v - min))).sum();
        let p_native = 1.0 / z;
        let foldable = ground_states.len() == 1 && p_native >= cfg.p_fold;
        Ok(FoldResult {
            ranked_spectrum: ranked,
            ground_states,
            p_native,
            foldable,
        })
    }

    /// Unique ground state of `s` (if any) and whether it is occupied with
    /// probability at least `p_fold`. Allocation-free given the buffer.
    pub fn classify(
        &self,
        s: &[u8],
        e: &EnergyMatrix,
        cfg: OracleConfig,
        buf: &mut Vec<f64>,
    ) -> Option<(usize, bool)> {
        self.energies_into(s, e, buf);
        let mut best = 0usize;
        let mut min = f64::INFINITY;
        let mut second = f64::INFINITY;
        for (k, &v) in buf.iter().enumerate() {
            if v < min {
                second = min;
                min = v;
                best = k;
            } else if v < second {
                second = v;
            }
        }
        if second <= min + DEGENERACY_TOL {
            return None;
        }
        let z: f64 = buf.iter().map(|&v| math::exp(-cfg.beta * (v - min))).sum();
        Some((best, 1.0 / z >= cfg.p_fold))
    }
}

/// Structures that score at or below `target` for this sequence, excluding
/// the target itself, lowest energy first, at most `n_max`.
pub fn competitors(fr: &FoldResult, target: usize, n_max: usize) -> Vec<usize> {
    let Some(et) = fr.energy_of(target) else {
        return Vec::new();
    };
    fr.ranked_spectrum
        .iter()
        .take_while(|(_, v)| *v <= et + DEGENERACY_TOL)
        .filter(|(k, _)| *k != target)
        .map(|&(k, _)| k)
        .take(n_max)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignabilityRecord {
    pub structure: usize,
    /// Sequences for which the structure is the unique ground state.
    pub unique_ground_state: u64,
    /// Of those, sequences that also meet the fold-probability threshold.
    pub designing: u64,
}

/// Per-structure designability counts over a whole sequence space, plus the
/// ranks of every designing sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Census {
    pub records: Vec<DesignabilityRecord>,
    /// Sorted ranks (in the composition's sequence space) of the sequences
    /// designing each structure.
    pub designing: Vec<Vec<u64>>,
    pub sequences_seen: u64,
}

impl Census {
    pub fn empty(structures: usize) -> Self {
        Census {
            records: (0..structures)
                .map(|structure| DesignabilityRecord {
                    structure,
                    unique_ground_state: 0,
                    designing: 0,
                })
                .collect(),
            designing: vec![Vec::new(); structures],
            sequences_seen: 0,
        }
    }

    /// Folds every sequence with rank in `start..end` and accumulates.
    pub fn accumulate_range(
        &mut self,
        engine: &FoldEngine,
        space: &SequenceSpace,
        e: &EnergyMatrix,
        cfg: OracleConfig,
        start: u128,
        end: u128,
    ) {
        let mut buf = Vec::with_capacity(engine.len());
        space.for_each_in_range(start, end, |rank, s| {
            self.sequences_seen += 1;
            if let Some((gs, designing)) = engine.classify(s, e, cfg, &mut buf) {
                self.records[gs].unique_ground_state += 1;
                if designing {
                    self.records[gs].designing += 1;
                    self.designing[gs].push(rank as u64);
                }
            }
        });
    }

    /// Combines two partial censuses; order-independent.
    pub fn merge(mut self, other: Census) -> Census {
        for (a, b) in self.records.iter_mut().zip(&other.records) {
            a.unique_ground_state += b.unique_ground_state;
            a.designing += b.designing;
        }
        for (a, b) in self.designing.iter_mut().zip(other.designing) {
            a.extend(b);
            a.sort_unstable();
        }
        self.sequences_seen += other.sequences_seen;
        self
    }

    /// Structure with the most designing sequences; ties go to the lower
    /// index. `None` if nothing is designable.
    pub fn most_designable(&self) -> Option<usize> {
        self.records
            .iter()
            .filter(|r| r.designing > 0)
            .max_by(|a, b| a.designing.cmp(&b.designing).then(b.structure.cmp(&a.structure)))
            .map(|r| r.structure)
    }

    pub fn designing_sequences(&self, structure: usize, space: &SequenceSpace) -> Vec<Sequence> {
        self.designing[structure]
            .iter()
            .filter_map(|&r| space.unrank(r as u128))
            .collect()
    }
}

/// Single-threaded census over a full sequence space, guarded by `limit`.
pub fn designability_census(
    engine: &FoldEngine,
    space: &SequenceSpace,
    e: &EnergyMatrix,
    cfg: OracleConfig,
    limit: u128,
) -> Result<Census> {
    space.ensure_at_most(limit)?;
    if space.composition().total() != engine.chain_length() {
        return Err(invalid("composition does not sum to the chain length"));
    }
    if space.composition().alphabet_size() > e.size() {
        return Err(invalid("composition uses more types than the energy matrix"));
    }
    let mut census = Census::empty(engine.len());
    census.accumulate_range(engine, space, e, cfg, 0, space.count());
    Ok(census)
}
