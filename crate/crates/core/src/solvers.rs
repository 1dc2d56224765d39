//! Sequence selection: composition-preserving simulated annealing, QUBO
//! simulated annealing, exhaustive ranking and candidate pooling.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{Composition, DesignScore, Sequence};
use crate::error::{invalid, Result};
use crate::math;
use crate::qubo::{decode, OneHotLayout, QuboProblem, ViolationReport};
use crate::sequence::SequenceSpace;

/// Geometric cooling from `t_max` to `t_min` over `n_steps` proposals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub t_max: f64,
    pub t_min: f64,
    pub n_steps: u64,
    pub seed: u64,
}

impl AnnealSchedule {
    pub fn new(t_max: f64, t_min: f64, n_steps: u64, seed: u64) -> Result<Self> {
        if !(t_min > 0.0 && t_max > t_min && t_max.is_finite()) {
            return Err(invalid(alloc::format!(
                "temperatures must satisfy t_max > t_min > 0, got {t_max} and {t_min}"
            )));
        }
        if n_steps == 0 {
            return Err(invalid("an annealing schedule needs at least one step"));
        }
        Ok(AnnealSchedule {
            t_max,
            t_min,
            n_steps,
            seed,
        })
    }

    pub fn with_seed(self, seed: u64) -> Self {
        AnnealSchedule { seed, ..self }
    }

    /// `T_k = t_max (t_min / t_max)^(k / n_steps)`.
    pub fn temperature(&self, k: u64) -> f64 {
        self.t_max * math::powf(self.t_min / self.t_max, k as f64 / self.n_steps as f64)
    }
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        AnnealSchedule {
            t_max: 100.0,
            t_min: 1e-4,
            n_steps: 10_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverRun {
    pub best_value: f64,
    pub best: Sequence,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
    pub seed: u64,
}

/// An objective over sequences that can price a two-site swap.
pub trait SwapObjective {
    fn value(&self, s: &[u8]) -> f64;

    fn swap_delta(&self, s: &[u8], i: usize, j: usize) -> f64 {
        let mut t = s.to_vec();
        t.swap(i, j);
        self.value(&t) - self.value(s)
    }
}

impl SwapObjective for DesignScore {
    fn value(&self, s: &[u8]) -> f64 {
        DesignScore::value(self, s)
    }

    fn swap_delta(&self, s: &[u8], i: usize, j: usize) -> f64 {
        DesignScore::swap_delta(self, s, i, j)
    }
}

#[inline]
fn metropolis<R: Rng>(rng: &mut R, delta: f64, temperature: f64) -> bool {
    delta <= 0.0 || rng.gen::<f64>() < math::exp(-delta / temperature)
}

/// Metropolis chain over sequences with swap moves.
pub struct SwapChain<'a, O: SwapObjective + ?Sized> {
    objective: &'a O,
    state: Vec<u8>,
    value: f64,
    rng: ChaCha8Rng,
}

impl<'a, O: SwapObjective + ?Sized> SwapChain<'a, O> {
    pub fn new(objective: &'a O, init: &Sequence, seed: u64) -> Self {
        let state = init.residues().to_vec();
        let value = objective.value(&state);
        SwapChain {
            objective,
            state,
            value,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn state(&self) -> &[u8] {
        &self.state
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// Proposes a swap of two distinct random positions. Returns whether the
    /// state changed.
    pub fn step(&mut self, temperature: f64) -> bool {
        let n = self.state.len();
        if n < 2 {
            return false;
        }
        let i = self.rng.gen_range(0..n);
        let mut j = self.rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        if self.state[i] == self.state[j] {
            return false;
        }
        let delta = self.objective.swap_delta(&self.state, i, j);
        if metropolis(&mut self.rng, delta, temperature) {
            self.state.swap(i, j);
            self.value += delta;
            true
        } else {
            false
        }
    }
}

/// Composition-preserving simulated annealing with pair-swap moves.
pub fn sequence_sa<O: SwapObjective + ?Sized>(
    objective: &O,
    init: &Sequence,
    sched: &AnnealSchedule,
    record_trace: bool,
) -> SolverRun {
    let mut chain = SwapChain::new(objective, init, sched.seed);
    let mut best = chain.state().to_vec();
    let mut best_value = chain.value();
    let mut trace = record_trace.then(Vec::new);
    let single_type = init.residues().windows(2).all(|w| w[0] == w[1]);
    if !single_type {
        for k in 0..sched.n_steps {
            if chain.step(sched.temperature(k)) {
                if let Some(t) = trace.as_mut() {
                    t.push(chain.value());
                }
                if chain.value() < best_value {
                    best_value = chain.value();
                    best.copy_from_slice(chain.state());
                }
            }
        }
    }
    SolverRun {
        best_value: objective.value(&best),
        best: Sequence::new(best),
        trace,
        wall_time_ms: None,
        seed: sched.seed,
    }
}

/// Uniformly shuffled arrangement of a composition.
pub fn random_sequence<R: Rng + ?Sized>(comp: &Composition, rng: &mut R) -> Sequence {
    use rand::seq::SliceRandom;
    let mut s = comp.first_sequence().residues().to_vec();
    s.shuffle(rng);
    Sequence::new(s)
}

/// Sparse row view of a QUBO for local-field updates.
struct QuboRows {
    linear: Vec<f64>,
    offsets: Vec<usize>,
    neighbours: Vec<(u32, f64)>,
}

impl QuboRows {
    fn new(p: &QuboProblem) -> Self {
        let n = p.num_vars();
        let mut linear = vec![0.0; n];
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        for (u, v, c) in p.terms() {
            if u == v {
                linear[u] += c;
            } else {
                rows[u].push((v as u32, c));
                rows[v].push((u as u32, c));
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbours = Vec::new();
        offsets.push(0);
        for r in rows {
            neighbours.extend(r);
            offsets.push(neighbours.len());
        }
        QuboRows {
            linear,
            offsets,
            neighbours,
        }
    }
}

/// Single-bit-flip Metropolis annealer that tracks local fields, energy and
/// constraint satisfaction incrementally.
pub struct QuboAnnealer<'a> {
    rows: QuboRows,
    layout: OneHotLayout,
    composition: &'a Composition,
    bits: Vec<bool>,
    field: Vec<f64>,
    energy: f64,
    site_hot: Vec<u32>,
    type_count: Vec<i64>,
    crowded_sites: usize,
    off_types: usize,
    rng: ChaCha8Rng,
}

impl<'a> QuboAnnealer<'a> {
    pub fn new(p: &QuboProblem, composition: &'a Composition, init: &[bool], seed: u64) -> Result<Self> {
        let layout = p
            .layout()
            .ok_or_else(|| invalid("QUBO annealing needs a one-hot layout"))?;
        if layout.alphabet != composition.alphabet_size() || layout.sites != composition.total() {
            return Err(invalid("composition does not match the QUBO layout"));
        }
        if init.len() != p.num_vars() {
            return Err(invalid("initial assignment has the wrong length"));
        }
        let rows = QuboRows::new(p);
        let mut a = QuboAnnealer {
            field: rows.linear.clone(),
            rows,
            layout,
            composition,
            bits: vec![false; init.len()],
            energy: p.offset(),
            site_hot: vec![0; layout.sites],
            type_count: vec![0; layout.alphabet],
            crowded_sites: 0,
            off_types: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        a.off_types = (1..layout.alphabet)
            .filter(|&m| composition.counts()[m] != 0)
            .count();
        for (u, &b) in init.iter().enumerate() {
            if b {
                a.flip(u);
            }
        }
        Ok(a)
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn is_valid(&self) -> bool {
        self.crowded_sites == 0 && self.off_types == 0
    }

    #[inline]
    fn delta(&self, u: usize) -> f64 {
        if self.bits[u] {
            -self.field[u]
        } else {
            self.field[u]
        }
    }

    fn flip(&mut self, u: usize) {
        self.energy += self.delta(u);
        let on = !self.bits[u];
        self.bits[u] = on;
        let sign = if on { 1.0 } else { -1.0 };
        for &(v, c) in &self.rows.neighbours[self.rows.offsets[u]..self.rows.offsets[u + 1]] {
            self.field[v as usize] += sign * c;
        }
        let k = self.layout.alphabet - 1;
        let (site, m) = (u / k, u % k + 1);
        let before_crowded = self.site_hot[site] > 1;
        if on {
            self.site_hot[site] += 1;
        } else {
            self.site_hot[site] -= 1;
        }
        let after_crowded = self.site_hot[site] > 1;
        match (before_crowded, after_crowded) {
            (false, true) => self.crowded_sites += 1,
            (true, false) => self.crowded_sites -= 1,
            _ => {}
        }
        let want = self.composition.counts()[m] as i64;
        let was_off = self.type_count[m] != want;
        self.type_count[m] += if on { 1 } else { -1 };
        let is_off = self.type_count[m] != want;
        match (was_off, is_off) {
            (false, true) => self.off_types += 1,
            (true, false) => self.off_types -= 1,
            _ => {}
        }
    }

    /// Proposes flipping one random bit at `temperature`.
    pub fn step(&mut self, temperature: f64) -> bool {
        let u = self.rng.gen_range(0..self.bits.len());
        let delta = self.delta(u);
        if metropolis(&mut self.rng, delta, temperature) {
            self.flip(u);
            true
        } else {
            false
        }
    }
}

/// Outcome of one QUBO annealing restart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuboRestart {
    pub seed: u64,
    pub best_energy: f64,
    pub best_assignment: Vec<bool>,
    /// Lowest-energy assignment that satisfied every constraint, decoded.
    pub best_valid: Option<(Sequence, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuboRun {
    pub best_energy: f64,
    pub best_assignment: Vec<bool>,
    pub report: ViolationReport,
    pub restarts: Vec<QuboRestart>,
}

impl QuboRun {
    /// Valid decoded sequences, one per restart that found any, as solver
    /// runs valued by `score`.
    pub fn solver_runs<O: SwapObjective + ?Sized>(&self, score: &O) -> Vec<SolverRun> {
        self.restarts
            .iter()
            .filter_map(|r| {
                let (s, _) = r.best_valid.as_ref()?;
                Some(SolverRun {
                    best_value: score.value(s.residues()),
                    best: s.clone(),
                    trace: None,
                    wall_time_ms: None,
                    seed: r.seed,
                })
            })
            .collect()
    }
}

/// One annealing pass from a random valid assignment.
pub fn qubo_sa_restart(p: &QuboProblem, comp: &Composition, sched: &AnnealSchedule) -> Result<QuboRestart> {
    let mut rng = ChaCha8Rng::seed_from_u64(sched.seed ^ 0x9e37_79b9_7f4a_7c15);
    let start = random_sequence(comp, &mut rng);
    let init = crate::qubo::encode_assignment(&start, comp.alphabet_size())?;
    let mut annealer = QuboAnnealer::new(p, comp, &init, sched.seed)?;
    let mut best_energy = annealer.energy();
    let mut best_assignment = annealer.bits().to_vec();
    let mut best_valid_energy = annealer.energy();
    let mut best_valid_bits = annealer.bits().to_vec();
    for k in 0..sched.n_steps {
        if annealer.step(sched.temperature(k)) {
            let e = annealer.energy();
            if e < best_energy {
                best_energy = e;
                best_assignment.copy_from_slice(annealer.bits());
            }
            if e < best_valid_energy && annealer.is_valid() {
                best_valid_energy = e;
                best_valid_bits.copy_from_slice(annealer.bits());
            }
        }
    }
    let best_energy = crate::qubo::qubo_energy(p, &best_assignment)?;
    let best_valid = decode(&best_valid_bits, comp)?
        .valid_sequence()
        .cloned()
        .map(|s| (s, crate::qubo::qubo_energy(p, &best_valid_bits).unwrap_or(f64::NAN)));
    Ok(QuboRestart {
        seed: sched.seed,
        best_energy,
        best_assignment,
        best_valid,
    })
}

/// Best of `restarts` QUBO annealing passes; restart `r` uses seed
/// `sched.seed + r`.
pub fn qubo_sa(p: &QuboProblem, comp: &Composition, sched: &AnnealSchedule, restarts: usize) -> Result<QuboRun> {
    if restarts == 0 {
        return Err(invalid("at least one restart is required"));
    }
    let runs = (0..restarts as u64)
        .map(|r| qubo_sa_restart(p, comp, &sched.with_seed(sched.seed.wrapping_add(r))))
        .collect::<Result<Vec<_>>>()?;
    Ok(merge_qubo_restarts(runs, comp))
}

/// Picks the lowest-energy restart (ties to the lower seed).
pub fn merge_qubo_restarts(mut runs: Vec<QuboRestart>, comp: &Composition) -> QuboRun {
    runs.sort_by(|a, b| a.best_energy.total_cmp(&b.best_energy).then(a.seed.cmp(&b.seed)));
    let best = &runs[0];
    let report = decode(&best.best_assignment, comp)
        .map(|d| d.report)
        .unwrap_or_default();
    QuboRun {
        best_energy: best.best_energy,
        best_assignment: best.best_assignment.clone(),
        report,
        restarts: runs,
    }
}

/// Every sequence of a composition with its objective value, ascending, ties
/// broken lexicographically.
#[derive(Clone, Debug)]
pub struct SequenceRanking {
    space: SequenceSpace,
    entries: Vec<(f64, u64)>,
}

impl SequenceRanking {
    /// Sorts `(value, rank)` pairs produced by [`score_range`] calls.
    pub fn from_scored(space: SequenceSpace, mut entries: Vec<(f64, u64)>) -> Self {
        entries.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        SequenceRanking { space, entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn space(&self) -> &SequenceSpace {
        &self.space
    }

    /// `(value, lexicographic rank)` in ascending order.
    pub fn entries(&self) -> &[(f64, u64)] {
        &self.entries
    }

    pub fn get(&self, k: usize) -> Option<(Sequence, f64)> {
        let &(v, r) = self.entries.get(k)?;
        Some((self.space.unrank(r as u128)?, v))
    }

    pub fn top(&self, k: usize) -> Vec<(Sequence, f64)> {
        (0..k.min(self.len())).filter_map(|i| self.get(i)).collect()
    }
}

/// Scores ranks `start..end` of a sequence space.
pub fn score_range<O: SwapObjective + ?Sized>(
    space: &SequenceSpace,
    objective: &O,
    start: u128,
    end: u128,
) -> Vec<(f64, u64)> {
    let mut out = Vec::with_capacity(end.saturating_sub(start).min(space.count()) as usize);
    space.for_each_in_range(start, end, |rank, s| out.push((objective.value(s), rank as u64)));
    out
}

pub fn exhaustive_sequence_search<O: SwapObjective + ?Sized>(
    space: &SequenceSpace,
    objective: &O,
    limit: u128,
) -> Result<SequenceRanking> {
    space.ensure_at_most(limit)?;
    let entries = score_range(space, objective, 0, space.count());
    Ok(SequenceRanking::from_scored(space.clone(), entries))
}

/// Distinct sequences from a pool of runs, best first, at most `k`.
pub fn select_candidates(runs: &[SolverRun], k: usize) -> Vec<(Sequence, f64)> {
    let mut best: BTreeMap<&Sequence, f64> = BTreeMap::new();
    for r in runs {
        best.entry(&r.best)
            .and_modify(|v| *v = v.min(r.best_value))
            .or_insert(r.best_value);
    }
    let mut pool: Vec<(Sequence, f64)> = best.into_iter().map(|(s, v)| (s.clone(), v)).collect();
    pool.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    pool.truncate(k);
    pool
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{ground_truth, DeltaContactMap};
    use crate::lattice::{average_contact_map, enumerate_compact_conformations};
    use crate::qubo::{encode, QuboWeights};

    fn score3() -> DesignScore {
        let ens: Vec<_> = enumerate_compact_conformations(3, false)
            .unwrap()
            .iter()
            .map(|c| c.contact_map())
            .collect();
        let avg = average_contact_map(&ens).unwrap();
        let dc = DeltaContactMap::new(&ens[1], &avg).unwrap();
        DesignScore::new(&dc, &ground_truth::eps3())
    }

    #[test]
    fn schedule_endpoints() {
        let s = AnnealSchedule::default();
        assert_eq!(s.temperature(0), 100.0);
        assert!((s.temperature(s.n_steps) - 1e-4).abs() < 1e-15);
        assert!(AnnealSchedule::new(1.0, 1.0, 10, 0).is_err());
        assert!(AnnealSchedule::new(1.0, 0.5, 0, 0).is_err());
    }

    #[test]
    fn single_type_returns_init() {
        let score = score3();
        let init = Sequence::new(vec![1; 9]);
        let run = sequence_sa(&score, &init, &AnnealSchedule::default(), true);
        assert_eq!(run.best, init);
        assert_eq!(run.trace.unwrap().len(), 0);
    }

    #[test]
    fn swaps_preserve_composition_and_are_deterministic() {
        let score = score3();
        let comp = Composition::new(vec![3, 3, 3]).unwrap();
        let init = comp.first_sequence();
        let sched = AnnealSchedule::default().with_seed(11);
        let a = sequence_sa(&score, &init, &sched, true);
        let b = sequence_sa(&score, &init, &sched, true);
        assert_eq!(a, b);
        assert!(comp.matches(&a.best));
        assert!((a.best_value - score.value(a.best.residues())).abs() < 1e-12);
        assert!(a.best_value <= score.value(init.residues()));
    }

    #[test]
    fn candidates_deduplicate() {
        let s1: Sequence = "1 2".parse().unwrap();
        let s2: Sequence = "2 1".parse().unwrap();
        let run = |s: &Sequence, v: f64| SolverRun {
            best_value: v,
            best: s.clone(),
            trace: None,
            wall_time_ms: None,
            seed: 0,
        };
        let runs = [run(&s1, 0.5), run(&s2, 0.1), run(&s1, 0.5)];
        let picked = select_candidates(&runs, 10);
        assert_eq!(picked, [(s2.clone(), 0.1), (s1, 0.5)]);
        assert_eq!(select_candidates(&runs, 1), [(s2, 0.1)]);
    }

    #[test]
    fn qubo_restart_never_worse_than_its_start() {
        let score = score3();
        let ens: Vec<_> = enumerate_compact_conformations(3, false)
            .unwrap()
            .iter()
            .map(|c| c.contact_map())
            .collect();
        let avg = average_contact_map(&ens).unwrap();
        let dc = DeltaContactMap::new(&ens[1], &avg).unwrap();
        let comp = Composition::new(vec![3, 3, 3]).unwrap();
        let p = encode(&dc, &ground_truth::eps3(), &comp, QuboWeights::default()).unwrap();
        let sched = AnnealSchedule::default().with_seed(5);
        let r = qubo_sa_restart(&p, &comp, &sched).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(sched.seed ^ 0x9e37_79b9_7f4a_7c15);
        let start = random_sequence(&comp, &mut rng);
        assert!(r.best_energy <= score.value(start.residues()) + 1e-9);
        let (s, h) = r.best_valid.unwrap();
        assert!((h - score.value(s.residues())).abs() < 1e-9);
    }
}
