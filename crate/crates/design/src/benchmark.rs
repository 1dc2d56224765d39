//! Equal-wall-time comparison of the sequence-space and QUBO annealers.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{ensure, Result};
use lattice_design_core::lattice::{
    average_contact_map, canonical_form, enumerate_compact_conformations, BackbiteSampler,
    MAX_ENUMERATION_SIDE,
};
use lattice_design_core::metrics::{g_histogram, DEFAULT_BINS};
use lattice_design_core::qubo::{encode, QuboProblem};
use lattice_design_core::solvers::{qubo_sa_restart, random_sequence, sequence_sa, AnnealSchedule};
use lattice_design_core::{
    AverageContactMap, Composition, Conformation, DeltaContactMap, DesignScore, EnergyMatrix,
    QuboWeights,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ScheduleConfig, SolverKind};
use crate::{io, parallel};

/// Reference ensemble for the average contact map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSampling {
    pub samples: usize,
    pub moves_between: usize,
    pub seed: u64,
}

impl Default for ReferenceSampling {
    fn default() -> Self {
        ReferenceSampling {
            samples: 2000,
            moves_between: 2000,
            seed: 0,
        }
    }
}

/// Average contact map of all compact conformations of the side, or of
/// backbite samples (reduced to canonical form) when the side is too large
/// to enumerate.
pub fn reference_average(side: usize, sampling: ReferenceSampling) -> Result<AverageContactMap> {
    if side <= MAX_ENUMERATION_SIDE {
        let maps: Vec<_> = enumerate_compact_conformations(side, false)?
            .iter()
            .map(|c| c.contact_map())
            .collect();
        return Ok(average_contact_map(&maps)?);
    }
    ensure!(sampling.samples > 0, "reference sampling needs at least one sample");
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    let mut sampler = BackbiteSampler::new(Conformation::serpentine(side)?);
    let maps: Vec<_> = sampler
        .sample(sampling.samples, sampling.moves_between, &mut rng)
        .iter()
        .map(|c| canonical_form(c).contact_map())
        .collect();
    Ok(average_contact_map(&maps)?)
}

#[derive(Clone, Debug)]
pub struct BenchmarkOptions {
    pub target: Conformation,
    pub composition: Composition,
    pub truth: EnergyMatrix,
    pub weights: QuboWeights,
    pub budget: Duration,
    pub samples: usize,
    pub seed: u64,
    pub seq_schedule: ScheduleConfig,
    pub qubo_schedule: ScheduleConfig,
    pub reference: ReferenceSampling,
    pub bins: usize,
    pub out_dir: PathBuf,
}

impl BenchmarkOptions {
    pub fn new(target: Conformation, composition: Composition, truth: EnergyMatrix, out_dir: PathBuf) -> Self {
        BenchmarkOptions {
            target,
            composition,
            truth,
            weights: QuboWeights::default(),
            budget: Duration::from_millis(3000),
            samples: 1000,
            seed: 0,
            seq_schedule: ScheduleConfig::default_for(SolverKind::SeqSa),
            qubo_schedule: ScheduleConfig::default_for(SolverKind::QuboSa),
            reference: ReferenceSampling::default(),
            bins: DEFAULT_BINS,
            out_dir,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub solver: String,
    pub samples: usize,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub mean_restarts: f64,
    pub histogram: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub target: String,
    pub composition: Composition,
    pub budget_ms: u64,
    pub samples: usize,
    pub solvers: Vec<SolverSummary>,
}

/// One sample: restarts until the budget is spent (at least one), keeping
/// the best score.
fn timed_sample(budget: Duration, mut restart: impl FnMut(usize) -> Result<f64>) -> Result<(f64, usize)> {
    let start = Instant::now();
    let mut best = f64::INFINITY;
    let mut r = 0;
    loop {
        best = best.min(restart(r)?);
        r += 1;
        if start.elapsed() >= budget {
            return Ok((best, r));
        }
    }
}

fn sample_seed(master: u64, sample: usize, restart: usize) -> u64 {
    master
        .wrapping_add((sample as u64).wrapping_mul(1_000_000))
        .wrapping_add(restart as u64)
}

pub fn run_sequence_sa(
    score: &DesignScore,
    comp: &Composition,
    sched: ScheduleConfig,
    opts: &BenchmarkOptions,
) -> Result<Vec<(f64, usize)>> {
    let ids: Vec<usize> = (0..opts.samples).collect();
    parallel::map(&ids, |&i| {
        timed_sample(opts.budget, |r| {
            let seed = sample_seed(opts.seed, i, r);
            let s = sched.with_seed(seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(2);
            let init = random_sequence(comp, &mut rng);
            Ok(sequence_sa(score, &init, &s, false).best_value)
        })
    })
    .into_iter()
    .collect()
}

pub fn run_qubo_sa(
    score: &DesignScore,
    problem: &QuboProblem,
    comp: &Composition,
    sched: ScheduleConfig,
    opts: &BenchmarkOptions,
) -> Result<Vec<(f64, usize)>> {
    let ids: Vec<usize> = (0..opts.samples).collect();
    parallel::map(&ids, |&i| {
        timed_sample(opts.budget, |r| {
            let s: AnnealSchedule = sched.with_seed(sample_seed(opts.seed, i, r))?;
            let out = qubo_sa_restart(problem, comp, &s)?;
            // the annealer starts from a valid assignment, so one always exists
            let (seq, _) = out.best_valid.expect("valid start");
            Ok(score.value(seq.residues()))
        })
    })
    .into_iter()
    .collect()
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn summarize(name: &str, results: &[(f64, usize)], opts: &BenchmarkOptions, dir: &Path) -> Result<SolverSummary> {
    let values: Vec<f64> = results.iter().map(|r| r.0).collect();
    let bins = g_histogram(&values, opts.bins)?;
    let hist_name = format!("hist_{name}.csv");
    io::write_histogram_csv(&dir.join(&hist_name), &bins)?;
    io::write_values_csv(
        &dir.join(format!("samples_{name}.csv")),
        values.iter().enumerate().map(|(i, &v)| (i as u64, v)),
    )?;
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(SolverSummary {
        solver: name.to_string(),
        samples: values.len(),
        min: sorted[0],
        median: median(&sorted),
        max: sorted[sorted.len() - 1],
        mean_restarts: results.iter().map(|r| r.1 as f64).sum::<f64>() / results.len() as f64,
        histogram: hist_name,
    })
}

/// Runs both annealers for `samples` budgeted samples each and writes
/// `hist_<solver>.csv`, `samples_<solver>.csv` and `summary.json`.
pub fn benchmark_solvers(opts: &BenchmarkOptions) -> Result<BenchmarkSummary> {
    ensure!(opts.samples > 0, "need at least one sample");
    let side = opts.target.side();
    ensure!(
        opts.composition.total() == side * side,
        "composition sums to {}, target has {} residues",
        opts.composition.total(),
        side * side
    );
    ensure!(
        opts.composition.alphabet_size() == opts.truth.size(),
        "composition and energy matrix disagree on the alphabet size"
    );
    let avg = reference_average(side, opts.reference)?;
    let delta = DeltaContactMap::new(&opts.target.contact_map(), &avg)?;
    let score = DesignScore::new(&delta, &opts.truth);
    let problem = encode(&delta, &opts.truth, &opts.composition, opts.weights)?;
    std::fs::create_dir_all(&opts.out_dir)?;
    let seq = run_sequence_sa(&score, &opts.composition, opts.seq_schedule, opts)?;
    let qubo = run_qubo_sa(&score, &problem, &opts.composition, opts.qubo_schedule, opts)?;
    let summary = BenchmarkSummary {
        target: opts.target.to_string(),
        composition: opts.composition.clone(),
        budget_ms: opts.budget.as_millis() as u64,
        samples: opts.samples,
        solvers: vec![
            summarize("seq-sa", &seq, opts, &opts.out_dir)?,
            summarize("qubo-sa", &qubo, opts, &opts.out_dir)?,
        ],
    };
    io::write_json(&opts.out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}
