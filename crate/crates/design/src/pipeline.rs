//! The iterative design loop: select sequences under the current matrix,
//! fold them with the ground truth, refine the matrix, repeat.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use lattice_design_core::fold_oracle::Census;
use lattice_design_core::lattice::{
    average_contact_map, canonical_form, enumerate_compact_conformations,
};
use lattice_design_core::metrics::{self, SuccessRecord};
use lattice_design_core::qubo::{self, QuboProblem};
use lattice_design_core::refine::{
    build_constraints, eta_schedule, perceptron_refine, random_epsilon, EpsilonVector,
    FoldedSequence, LinearConstraint,
};
use lattice_design_core::sequence::MAX_EXHAUSTIVE_SEQUENCES;
use lattice_design_core::solvers::{
    qubo_sa_restart, random_sequence, select_candidates, sequence_sa, SolverRun,
};
use lattice_design_core::{
    AverageContactMap, Conformation, ContactMap, DeltaContactMap, DesignScore, EnergyMatrix,
    Error as CoreError, FoldEngine, FoldResult, Sequence, SequenceSpace,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{DesignConfig, InitSpec, SolverKind, TargetSpec};
use crate::{io, parallel};

/// Per-cycle stride of the seed splitting rule: restart `r` of cycle `k`
/// runs with seed `master + k * CYCLE_SEED_STRIDE + r`.
pub const CYCLE_SEED_STRIDE: u64 = 1_000_000;

pub fn restart_seed(master: u64, cycle: usize, restart: usize) -> u64 {
    master
        .wrapping_add((cycle as u64).wrapping_mul(CYCLE_SEED_STRIDE))
        .wrapping_add(restart as u64)
}

/// Everything derived from a config before the loop starts.
pub struct Workspace {
    pub conformations: Vec<Conformation>,
    pub maps: Vec<ContactMap>,
    pub engine: FoldEngine,
    pub average: AverageContactMap,
    pub truth: EnergyMatrix,
    pub space: SequenceSpace,
    /// Ground-truth census, when the sequence space is small enough.
    pub census: Option<Census>,
    pub target: usize,
    pub delta: DeltaContactMap,
}

impl Workspace {
    pub fn new(cfg: &DesignConfig) -> Result<Self> {
        cfg.validate()?;
        let conformations = enumerate_compact_conformations(cfg.side, false)
            .with_context(|| format!("enumerating the {0}x{0} ensemble", cfg.side))?;
        let maps: Vec<ContactMap> = conformations.iter().map(|c| c.contact_map()).collect();
        let engine = FoldEngine::new(&maps)?;
        let average = average_contact_map(&maps)?;
        let truth = cfg.ground_truth.load(cfg.alphabet)?;
        let space = SequenceSpace::new(cfg.composition.clone())?;
        let census = match space.ensure_at_most(MAX_EXHAUSTIVE_SEQUENCES) {
            Ok(()) => Some(parallel::census(
                &engine,
                &space,
                &truth,
                cfg.oracle(),
                MAX_EXHAUSTIVE_SEQUENCES,
            )?),
            Err(_) => None,
        };
        let target = select_target(&cfg.target, &conformations, census.as_ref())?;
        let delta = DeltaContactMap::new(&maps[target], &average)?;
        Ok(Workspace {
            conformations,
            maps,
            engine,
            average,
            truth,
            space,
            census,
            target,
            delta,
        })
    }

    /// Sorted ranks of the sequences designing the target, if known.
    pub fn designing_ranks(&self) -> Option<&[u64]> {
        self.census.as_ref().map(|c| c.designing[self.target].as_slice())
    }
}

/// Index of `c` (up to symmetry) in an ensemble sorted by canonical form.
pub fn locate(conformations: &[Conformation], c: &Conformation) -> Result<usize> {
    let canon = canonical_form(c);
    conformations
        .iter()
        .position(|x| *x == canon)
        .with_context(|| format!("conformation {c} is not in the ensemble"))
}

/// Resolves a target strategy against the ensemble. Structures with no
/// designing sequence are rejected whenever a census is available.
pub fn select_target(
    spec: &TargetSpec,
    conformations: &[Conformation],
    census: Option<&Census>,
) -> Result<usize> {
    let index = match spec {
        TargetSpec::MostDesignable => {
            let census = census.context(
                "choosing the most designable target needs a census, which exceeds the exhaustive limit here",
            )?;
            return census
                .most_designable()
                .ok_or_else(|| CoreError::Domain("no structure in the ensemble is designable".into()).into());
        }
        TargetSpec::Index(i) => {
            ensure!(*i < conformations.len(), "target index {i} outside an ensemble of {}", conformations.len());
            *i
        }
        TargetSpec::Conformation(text) => locate(conformations, &text.parse::<Conformation>()?)?,
        TargetSpec::File(path) => {
            let confs = io::read_conformations(path)?;
            ensure!(confs.len() == 1, "{} must hold exactly one conformation", path.display());
            locate(conformations, &confs[0])?
        }
    };
    match census {
        Some(c) if c.records[index].designing == 0 => {
            Err(CoreError::Domain(format!("structure {index} is not designable")).into())
        }
        Some(_) => Ok(index),
        None => {
            log::warn!("no census for this composition; target {index} is used without a designability check");
            Ok(index)
        }
    }
}

/// True when at least `threshold` of the candidates design the target or
/// any single one does. An empty candidate set never satisfies the rule.
pub fn stop_rule(folds: &[FoldResult], target: usize, threshold: f64) -> bool {
    if folds.is_empty() {
        return false;
    }
    let hits = folds.iter().filter(|f| f.designs(target)).count();
    hits > 0 || hits as f64 / folds.len() as f64 >= threshold
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub sequence: Sequence,
    pub g: f64,
    /// Unique ground-truth ground state, if any.
    pub native: Option<usize>,
    pub p_native: f64,
    pub foldable: bool,
    pub designs_target: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementSummary {
    pub constraints: usize,
    pub eta: f64,
    pub updates: usize,
    pub satisfied: bool,
    pub total_violation: f64,
    pub next_epsilon: EnergyMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: usize,
    /// Matrix used to score sequences in this cycle.
    pub epsilon: EnergyMatrix,
    pub restarts: usize,
    pub candidates: Vec<CandidateSummary>,
    pub success: SuccessRecord,
    pub stop_rule: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roc_q: Option<f64>,
    pub cumulative_sequences: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refinement: Option<RefinementSummary>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Solved,
    MaxCycles,
    NonSeparable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub config_hash: String,
    pub target: usize,
    pub target_conformation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_designing_sequences: Option<u64>,
    pub cycles: Vec<CycleRecord>,
    pub status: RunStatus,
}

impl DesignReport {
    pub fn success_records(&self) -> Vec<SuccessRecord> {
        self.cycles.iter().map(|c| c.success.clone()).collect()
    }

    pub fn final_epsilon(&self) -> &EnergyMatrix {
        let last = self.cycles.last().expect("at least one cycle");
        last.refinement.as_ref().map_or(&last.epsilon, |r| &r.next_epsilon)
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Parent directory for per-config run directories. Each cycle is
    /// checkpointed there and an interrupted run resumes from it.
    pub run_root: Option<PathBuf>,
    /// Directory receiving the constraint set of every refinement.
    pub dump_refinement: Option<PathBuf>,
    /// Stop after this many cycles have been recorded in this invocation
    /// (simulates an interruption; the run directory stays resumable).
    pub stop_after: Option<usize>,
}

pub fn run_dir(root: &Path, cfg: &DesignConfig) -> PathBuf {
    root.join(format!("run-{}", cfg.hash()))
}

fn cycle_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("cycle_{k:03}.json"))
}

pub fn initial_epsilon(cfg: &DesignConfig, truth: &EnergyMatrix) -> Result<EnergyMatrix> {
    Ok(match &cfg.init {
        InitSpec::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(1);
            random_epsilon(cfg.alphabet, &mut rng)
        }
        InitSpec::GroundTruth => truth.clone(),
        InitSpec::Matrix(src) => src.load(cfg.alphabet)?,
    })
}

/// Sequence selection for one cycle: pooled solver restarts, reduced to
/// the best `candidates` distinct sequences.
pub fn select_sequences(
    cfg: &DesignConfig,
    ws: &Workspace,
    eps: &EnergyMatrix,
    cycle: usize,
) -> Result<(Vec<(Sequence, f64)>, usize)> {
    let score = DesignScore::new(&ws.delta, eps);
    let k = cfg.candidates;
    if cfg.solver.kind == SolverKind::Exhaustive {
        let ranking = parallel::ranking(&ws.space, &score, MAX_EXHAUSTIVE_SEQUENCES)?;
        return Ok((ranking.top(k), 0));
    }
    let sched = cfg.solver.schedule();
    let problem: Option<QuboProblem> = match cfg.solver.kind {
        SolverKind::QuboSa => Some(qubo::encode(&ws.delta, eps, &cfg.composition, cfg.weights)?),
        _ => None,
    };
    let mut runs: Vec<SolverRun> = Vec::new();
    let mut done = 0;
    loop {
        let batch: Vec<usize> = (done..(done + cfg.solver.restarts).min(cfg.solver.max_restarts)).collect();
        let results: Vec<Result<Option<SolverRun>>> = parallel::map(&batch, |&r| {
            let seed = restart_seed(cfg.seed, cycle, r);
            let s = sched.with_seed(seed)?;
            match &problem {
                None => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(2);
                    let init = random_sequence(&cfg.composition, &mut rng);
                    Ok(Some(sequence_sa(&score, &init, &s, false)))
                }
                Some(p) => {
                    let out = qubo_sa_restart(p, &cfg.composition, &s)?;
                    Ok(out.best_valid.map(|(seq, _)| SolverRun {
                        best_value: score.value(seq.residues()),
                        best: seq,
                        trace: None,
                        wall_time_ms: None,
                        seed,
                    }))
                }
            }
        });
        for r in results {
            runs.extend(r?);
        }
        done += batch.len();
        let distinct = select_candidates(&runs, k).len();
        if distinct >= k || done >= cfg.solver.max_restarts {
            break;
        }
    }
    Ok((select_candidates(&runs, k), done))
}

fn fold_all(cfg: &DesignConfig, ws: &Workspace, seqs: &[Sequence]) -> Result<Vec<FoldResult>> {
    parallel::map(seqs, |s| ws.engine.fold(s, &ws.truth, cfg.oracle()))
        .into_iter()
        .map(|r| r.map_err(Into::into))
        .collect()
}

/// Exhaustive ROC normalized area of `eps` for the workspace target.
pub fn roc_q(ws: &Workspace, eps: &EnergyMatrix) -> Result<f64> {
    let designing = ws
        .designing_ranks()
        .context("ROC tracking needs an exhaustive census")?;
    let score = DesignScore::new(&ws.delta, eps);
    let ranking = parallel::ranking(&ws.space, &score, MAX_EXHAUSTIVE_SEQUENCES)?;
    let flags = ranking
        .entries()
        .iter()
        .map(|&(_, r)| designing.binary_search(&r).is_ok());
    Ok(metrics::roc(flags)?.q)
}

struct LoopState {
    eps: EnergyMatrix,
    cumulative: BTreeMap<Sequence, FoldResult>,
    records: Vec<CycleRecord>,
}

fn load_checkpoints(dir: &Path, cfg: &DesignConfig, ws: &Workspace) -> Result<Option<LoopState>> {
    let mut records: Vec<CycleRecord> = Vec::new();
    while cycle_path(dir, records.len()).exists() {
        records.push(io::read_json(&cycle_path(dir, records.len()))?);
    }
    let Some(last) = records.last() else {
        return Ok(None);
    };
    let eps = match &last.refinement {
        Some(r) => r.next_epsilon.clone(),
        None => last.epsilon.clone(),
    };
    let mut cumulative = BTreeMap::new();
    for rec in &records {
        if rec.refinement.is_none() {
            continue;
        }
        let seqs: Vec<Sequence> = rec.candidates.iter().map(|c| c.sequence.clone()).collect();
        for (s, f) in seqs.iter().zip(fold_all(cfg, ws, &seqs)?) {
            cumulative.insert(s.clone(), f);
        }
    }
    Ok(Some(LoopState {
        eps,
        cumulative,
        records,
    }))
}

fn finished(rec: &CycleRecord) -> bool {
    rec.refinement.is_none()
}

fn status_of(records: &[CycleRecord]) -> RunStatus {
    let last = records.last().expect("at least one cycle");
    if last.stop_rule {
        return RunStatus::Solved;
    }
    match records.iter().rev().find_map(|r| r.refinement.as_ref()) {
        Some(r) if !r.satisfied => RunStatus::NonSeparable,
        _ => RunStatus::MaxCycles,
    }
}

/// Runs the design loop for `cfg`.
pub fn run_design(cfg: &DesignConfig) -> Result<DesignReport> {
    run_design_with(cfg, &RunOptions::default())
}

pub fn run_design_with(cfg: &DesignConfig, opts: &RunOptions) -> Result<DesignReport> {
    let ws = Workspace::new(cfg)?;
    run_in_workspace(cfg, &ws, opts)
}

/// Runs the loop on a prepared workspace (which must come from `cfg`).
pub fn run_in_workspace(cfg: &DesignConfig, ws: &Workspace, opts: &RunOptions) -> Result<DesignReport> {
    let dir = opts.run_root.as_ref().map(|root| run_dir(root, cfg));
    if let Some(dir) = &dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let stored = dir.join("config.json");
        if stored.exists() {
            let prev: DesignConfig = io::read_json(&stored)?;
            ensure!(prev == *cfg, "{} belongs to a different config", dir.display());
        } else {
            io::write_json(&stored, cfg)?;
        }
    }
    let resumed = match &dir {
        Some(d) => load_checkpoints(d, cfg, ws)?,
        None => None,
    };
    let mut state = match resumed {
        Some(s) => s,
        None => LoopState {
            eps: initial_epsilon(cfg, &ws.truth)?,
            cumulative: BTreeMap::new(),
            records: Vec::new(),
        },
    };
    let mut recorded_now = 0;
    while state.records.last().is_none_or(|r| !finished(r)) {
        if opts.stop_after.is_some_and(|n| recorded_now >= n) {
            bail!("stopped after {recorded_now} cycles as requested");
        }
        let k = state.records.len();
        let rec = run_cycle(cfg, ws, &mut state, k, opts)
            .with_context(|| format!("design cycle {k}"))?;
        if let Some(d) = &dir {
            io::write_json(&cycle_path(d, k), &rec)?;
        }
        log::info!(
            "cycle {k}: f_c = {:.3}, stop rule {}, q = {:?}",
            rec.success.f_c,
            rec.stop_rule,
            rec.roc_q
        );
        state.records.push(rec);
        recorded_now += 1;
    }
    let report = DesignReport {
        config_hash: cfg.hash(),
        target: ws.target,
        target_conformation: ws.conformations[ws.target].to_string(),
        target_designing_sequences: ws.census.as_ref().map(|c| c.records[ws.target].designing),
        status: status_of(&state.records),
        cycles: state.records,
    };
    if let Some(d) = &dir {
        io::write_json(&d.join("report.json"), &report)?;
    }
    Ok(report)
}

fn run_cycle(
    cfg: &DesignConfig,
    ws: &Workspace,
    state: &mut LoopState,
    k: usize,
    opts: &RunOptions,
) -> Result<CycleRecord> {
    let (picked, restarts) = select_sequences(cfg, ws, &state.eps, k)?;
    let seqs: Vec<Sequence> = picked.iter().map(|(s, _)| s.clone()).collect();
    let folds = fold_all(cfg, ws, &seqs)?;
    let candidates: Vec<CandidateSummary> = picked
        .iter()
        .zip(&folds)
        .map(|((s, g), f)| CandidateSummary {
            sequence: s.clone(),
            g: *g,
            native: f.native(),
            p_native: f.p_native,
            foldable: f.foldable,
            designs_target: f.designs(ws.target),
        })
        .collect();
    let hits = candidates.iter().filter(|c| c.designs_target).count();
    let success = metrics::success_record(k, hits, candidates.len());
    let stop = stop_rule(&folds, ws.target, cfg.stop_threshold);
    let roc_q = if cfg.track_roc {
        Some(roc_q(ws, &state.eps)?)
    } else {
        None
    };
    for (s, f) in seqs.iter().zip(folds) {
        state.cumulative.insert(s.clone(), f);
    }
    let last = k >= cfg.max_cycles || (stop && cfg.halt_on_success);
    let refinement = if last {
        None
    } else {
        Some(refine_step(cfg, ws, state, k, opts)?)
    };
    let rec = CycleRecord {
        cycle: k,
        epsilon: state.eps.clone(),
        restarts,
        candidates,
        success,
        stop_rule: stop,
        roc_q,
        cumulative_sequences: state.cumulative.len(),
        refinement,
    };
    if let Some(r) = &rec.refinement {
        state.eps = r.next_epsilon.clone();
    }
    Ok(rec)
}

#[derive(Serialize)]
struct RefinementDump<'a> {
    cycle: usize,
    eta: f64,
    epsilon_in: &'a EnergyMatrix,
    epsilon_out: &'a EnergyMatrix,
    constraints: &'a [LinearConstraint],
}

fn refine_step(
    cfg: &DesignConfig,
    ws: &Workspace,
    state: &LoopState,
    k: usize,
    opts: &RunOptions,
) -> Result<RefinementSummary> {
    let history: Vec<FoldedSequence<'_>> = state
        .cumulative
        .iter()
        .map(|(sequence, fold)| FoldedSequence { sequence, fold })
        .collect();
    let constraints = build_constraints(
        &ws.engine,
        &history,
        ws.target,
        cfg.alphabet,
        cfg.oracle(),
        cfg.n_max,
    )?;
    let eta = eta_schedule(k, cfg.eta0());
    let out = perceptron_refine(
        &EpsilonVector::from_matrix(&state.eps),
        &constraints,
        eta,
        cfg.perceptron_max_iters,
    )?;
    let next = out.epsilon.to_matrix();
    if let Some(d) = &opts.dump_refinement {
        io::write_json(
            &d.join(format!("refinement_{k:03}.json")),
            &RefinementDump {
                cycle: k,
                eta,
                epsilon_in: &state.eps,
                epsilon_out: &next,
                constraints: &constraints,
            },
        )?;
    }
    Ok(RefinementSummary {
        constraints: constraints.len(),
        eta,
        updates: out.updates,
        satisfied: out.satisfied,
        total_violation: out.total_violation,
        next_epsilon: next,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_rule() {
        assert_eq!(restart_seed(7, 0, 3), 10);
        assert_eq!(restart_seed(7, 2, 3), 2_000_010);
    }

    #[test]
    fn empty_candidates_never_stop() {
        assert!(!stop_rule(&[], 0, 0.0));
    }
}
