use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use lattice_design::benchmark::{benchmark_solvers, BenchmarkOptions, ReferenceSampling};
use lattice_design::config::{
    DesignConfig, MatrixSource, ScheduleConfig, SolverKind, TargetSpec,
};
use lattice_design::pipeline::{restart_seed, select_target};
use lattice_design::{io, parallel, pipeline, RunOptions};
use lattice_design_core::fold_oracle::Census;
use lattice_design_core::lattice::{
    average_contact_map, canonical_form, enumerate_compact_conformations, BackbiteSampler,
};
use lattice_design_core::metrics;
use lattice_design_core::qubo::{self, QuboWeights};
use lattice_design_core::sequence::MAX_EXHAUSTIVE_SEQUENCES;
use lattice_design_core::solvers::{
    qubo_sa_restart, random_sequence, select_candidates, sequence_sa, SolverRun,
};
use lattice_design_core::{
    Composition, Conformation, ContactMap, DeltaContactMap, DesignScore, EnergyMatrix, FoldEngine,
    OracleConfig, Sequence, SequenceSpace,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "lattice-design", version, about = "Iterative protein design on compact square lattices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List compact conformations (one per symmetry class), or sample large ones.
    Enumerate(EnumerateArgs),
    /// Fold a sequence against the compact ensemble.
    Fold(FoldArgs),
    /// Count designing sequences per structure for a composition.
    Census(CensusArgs),
    /// Write the QUBO for a target and energy matrix.
    ExportQubo(ExportArgs),
    /// Minimize the design score for a target.
    Solve(SolveArgs),
    /// Run the iterative design loop from a JSON config.
    Design(DesignArgs),
    /// Exhaustive ROC of the design score against the ground truth.
    Roc(RocArgs),
    /// Compare the two annealers at equal wall time.
    Benchmark(BenchArgs),
}

#[derive(Args)]
struct EnumerateArgs {
    #[arg(long)]
    side: usize,
    /// Draw this many backbite samples instead of enumerating.
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    moves: usize,
    /// Allow enumeration beyond 6x6.
    #[arg(long)]
    allow_large: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long)]
    side: usize,
    #[arg(long, default_value_t = 3)]
    alphabet: usize,
    /// Ground-truth matrix file; the bundled one for the alphabet otherwise.
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long, default_value_t = 3.0)]
    beta: f64,
    #[arg(long, default_value_t = 0.8)]
    p_fold: f64,
}

impl ModelArgs {
    fn truth(&self) -> Result<EnergyMatrix> {
        match &self.matrix {
            Some(p) => MatrixSource::File(p.clone()).load(self.alphabet),
            None => MatrixSource::Bundled.load(self.alphabet),
        }
    }

    fn oracle(&self) -> Result<OracleConfig> {
        Ok(OracleConfig::new(self.beta, self.p_fold)?)
    }

    fn ensemble(&self) -> Result<(Vec<Conformation>, Vec<ContactMap>)> {
        let confs = enumerate_compact_conformations(self.side, false)?;
        let maps = confs.iter().map(|c| c.contact_map()).collect();
        Ok((confs, maps))
    }
}

#[derive(Args)]
struct FoldArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// One-based labels, e.g. "1 2 3 1 ...".
    #[arg(long)]
    sequence: String,
    /// Lowest part of the spectrum to print.
    #[arg(long, default_value_t = 5)]
    top: usize,
}

#[derive(Args)]
struct CensusArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    composition: Composition,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct TargetArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    composition: Composition,
    /// `most-designable`, an ensemble index, a chain `x,y x,y ...` or a file.
    #[arg(long, default_value = "most-designable")]
    target: String,
    /// Matrix used in the design score; the ground truth if omitted.
    #[arg(long)]
    score_matrix: Option<PathBuf>,
}

impl TargetArgs {
    fn spec(&self) -> TargetSpec {
        let t = self.target.trim();
        if t == "most-designable" {
            TargetSpec::MostDesignable
        } else if let Ok(i) = t.parse::<usize>() {
            TargetSpec::Index(i)
        } else if t.contains(',') && !PathBuf::from(t).exists() {
            TargetSpec::Conformation(t.to_string())
        } else {
            TargetSpec::File(PathBuf::from(t))
        }
    }
}

/// A resolved target with its score inputs.
struct Problem {
    confs: Vec<Conformation>,
    target: usize,
    delta: DeltaContactMap,
    score_matrix: EnergyMatrix,
    space: SequenceSpace,
    census: Option<Census>,
}

fn build_problem(t: &TargetArgs, need_census: bool) -> Result<Problem> {
    let truth = t.model.truth()?;
    let (confs, maps) = t.model.ensemble()?;
    let space = SequenceSpace::new(t.composition.clone())?;
    let spec = t.spec();
    let census = if need_census || spec == TargetSpec::MostDesignable {
        let engine = FoldEngine::new(&maps)?;
        Some(parallel::census(&engine, &space, &truth, t.model.oracle()?, MAX_EXHAUSTIVE_SEQUENCES)?)
    } else {
        None
    };
    let target = select_target(&spec, &confs, census.as_ref())?;
    let avg = average_contact_map(&maps)?;
    let delta = DeltaContactMap::new(&maps[target], &avg)?;
    let score_matrix = match &t.score_matrix {
        Some(p) => io::read_energy_matrix(p)?,
        None => truth.clone(),
    };
    Ok(Problem {
        confs,
        target,
        delta,
        score_matrix,
        space,
        census,
    })
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    target: TargetArgs,
    #[arg(long, default_value_t = 2.1)]
    a1: f64,
    #[arg(long, default_value_t = 2.1)]
    a2: f64,
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    target: TargetArgs,
    #[arg(long, default_value = "seq-sa")]
    solver: SolverKind,
    #[arg(long, default_value_t = 20)]
    restarts: usize,
    /// Keep restarting until this much time has passed.
    #[arg(long)]
    time_budget_ms: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 30)]
    top_k: usize,
    #[arg(long)]
    n_steps: Option<u64>,
    #[arg(long)]
    out_json: Option<PathBuf>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

#[derive(Args)]
struct DesignArgs {
    #[arg(long)]
    config: PathBuf,
    /// Parent of the checkpoint directory; an existing run resumes.
    #[arg(long)]
    run_dir: Option<PathBuf>,
    #[arg(long)]
    dump_refinement: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV of f_c per cycle.
    #[arg(long)]
    fc_csv: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum RocMode {
    GroundTruth,
    Learned,
}

#[derive(Args)]
struct RocArgs {
    #[command(flatten)]
    target: TargetArgs,
    #[arg(long, value_enum, default_value = "ground-truth")]
    mode: RocMode,
    /// Learned matrix (required in learned mode).
    #[arg(long)]
    learned: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// File holding the target chain; the bundled 9x9 target if omitted.
    #[arg(long)]
    target_file: Option<PathBuf>,
    #[arg(long, default_value = "27,27,27")]
    composition: Composition,
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long, default_value_t = 3000)]
    budget_ms: u64,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    seq_steps: Option<u64>,
    #[arg(long)]
    qubo_steps: Option<u64>,
    #[arg(long, default_value_t = 2000)]
    reference_samples: usize,
    #[arg(long, default_value_t = 60)]
    bins: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn enumerate(a: EnumerateArgs) -> Result<()> {
    let confs = match a.sample {
        Some(n) => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            let mut s = BackbiteSampler::new(Conformation::serpentine(a.side)?);
            s.sample(n, a.moves, &mut rng).iter().map(canonical_form).collect()
        }
        None => enumerate_compact_conformations(a.side, a.allow_large)?,
    };
    match a.out {
        Some(p) => io::write_conformations(&p, &confs)?,
        None => {
            for c in &confs {
                println!("{c}");
            }
        }
    }
    eprintln!("{} conformations", confs.len());
    Ok(())
}

#[derive(Serialize)]
struct FoldOut {
    ground_states: Vec<usize>,
    native: Option<String>,
    p_native: f64,
    foldable: bool,
    lowest: Vec<(usize, f64)>,
}

fn fold(a: FoldArgs) -> Result<()> {
    let seq: Sequence = a.sequence.parse()?;
    let (confs, maps) = a.model.ensemble()?;
    let engine = FoldEngine::new(&maps)?;
    let r = engine.fold(&seq, &a.model.truth()?, a.model.oracle()?)?;
    print_json(&FoldOut {
        native: r.native().map(|k| confs[k].to_string()),
        ground_states: r.ground_states.clone(),
        p_native: r.p_native,
        foldable: r.foldable,
        lowest: r.ranked_spectrum.iter().take(a.top).copied().collect(),
    })
}

#[derive(Serialize)]
struct CensusOut {
    sequences: u64,
    most_designable: Option<usize>,
    most_designable_conformation: Option<String>,
    records: Vec<lattice_design_core::fold_oracle::DesignabilityRecord>,
}

fn census(a: CensusArgs) -> Result<()> {
    let (confs, maps) = a.model.ensemble()?;
    let engine = FoldEngine::new(&maps)?;
    let space = SequenceSpace::new(a.composition)?;
    let c = parallel::census(&engine, &space, &a.model.truth()?, a.model.oracle()?, MAX_EXHAUSTIVE_SEQUENCES)?;
    let best = c.most_designable();
    let out = CensusOut {
        sequences: c.sequences_seen,
        most_designable: best,
        most_designable_conformation: best.map(|k| confs[k].to_string()),
        records: c.records,
    };
    match a.out {
        Some(p) => io::write_json(&p, &out),
        None => print_json(&out),
    }
}

fn export_qubo(a: ExportArgs) -> Result<()> {
    let p = build_problem(&a.target, false)?;
    let w = QuboWeights::new(a.a1, a.a2, a.b)?;
    if !w.is_dominant(&p.delta, &p.score_matrix) {
        log::warn!("penalty weights may not dominate the contact term for this instance");
    }
    let q = qubo::encode(&p.delta, &p.score_matrix, &a.target.composition, w)?;
    io::write_qubo(&a.out, &q)?;
    eprintln!("{} variables, {} terms -> {}", q.num_vars(), q.num_terms(), a.out.display());
    Ok(())
}

fn solve(a: SolveArgs) -> Result<()> {
    let p = build_problem(&a.target, false)?;
    let comp = &a.target.composition;
    let score = DesignScore::new(&p.delta, &p.score_matrix);
    let mut sched = ScheduleConfig::default_for(a.solver);
    if let Some(n) = a.n_steps {
        sched.n_steps = n;
    }
    let runs: Vec<SolverRun> = match a.solver {
        SolverKind::Exhaustive => {
            let ranking = parallel::ranking(&p.space, &score, MAX_EXHAUSTIVE_SEQUENCES)?;
            ranking
                .top(a.top_k)
                .into_iter()
                .map(|(best, best_value)| SolverRun {
                    best_value,
                    best,
                    trace: None,
                    wall_time_ms: None,
                    seed: 0,
                })
                .collect()
        }
        kind => {
            let problem = match kind {
                SolverKind::QuboSa => Some(qubo::encode(&p.delta, &p.score_matrix, comp, QuboWeights::default())?),
                _ => None,
            };
            let start = std::time::Instant::now();
            let budget = a.time_budget_ms.map(Duration::from_millis);
            let mut runs = Vec::new();
            let mut r = 0;
            while r < a.restarts || budget.is_some_and(|b| start.elapsed() < b) {
                let seed = restart_seed(a.seed, 0, r);
                let t0 = std::time::Instant::now();
                let s = sched.with_seed(seed)?;
                let mut run = match &problem {
                    None => {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        rng.set_stream(2);
                        sequence_sa(&score, &random_sequence(comp, &mut rng), &s, false)
                    }
                    Some(q) => {
                        let (best, _) = qubo_sa_restart(q, comp, &s)?.best_valid.expect("valid start");
                        SolverRun {
                            best_value: score.value(best.residues()),
                            best,
                            trace: None,
                            wall_time_ms: None,
                            seed,
                        }
                    }
                };
                run.wall_time_ms = Some(t0.elapsed().as_secs_f64() * 1e3);
                runs.push(run);
                r += 1;
            }
            runs
        }
    };
    if let Some(path) = &a.out_csv {
        io::write_values_csv(path, runs.iter().map(|r| (r.seed, r.best_value)))?;
    }
    match &a.out_json {
        Some(path) => io::write_json(path, &runs)?,
        None => {
            for (s, g) in select_candidates(&runs, a.top_k) {
                println!("{g:.10} {s}");
            }
        }
    }
    Ok(())
}

fn design(a: DesignArgs) -> Result<()> {
    let cfg = DesignConfig::load(&a.config)?;
    let opts = RunOptions {
        run_root: a.run_dir,
        dump_refinement: a.dump_refinement,
        stop_after: None,
    };
    let report = pipeline::run_design_with(&cfg, &opts)?;
    if let Some(p) = &a.fc_csv {
        io::write_fc_csv(p, &report.success_records())?;
    }
    match &a.out {
        Some(p) => io::write_json(p, &report)?,
        None => print_json(&report)?,
    }
    eprintln!("status {:?} after {} cycles", report.status, report.cycles.len());
    Ok(())
}

#[derive(Serialize)]
struct RocSummary {
    target: usize,
    target_conformation: String,
    q: f64,
    sequences: u64,
    designing: u64,
}

fn roc(a: RocArgs) -> Result<()> {
    let mut t = a.target.clone();
    match a.mode {
        RocMode::GroundTruth => t.score_matrix = None,
        RocMode::Learned => {
            t.score_matrix = Some(a.learned.clone().context("--learned is required in learned mode")?)
        }
    }
    let p = build_problem(&t, true)?;
    let census = p.census.as_ref().expect("census requested");
    let designing = &census.designing[p.target];
    let score = DesignScore::new(&p.delta, &p.score_matrix);
    let ranking = parallel::ranking(&p.space, &score, MAX_EXHAUSTIVE_SEQUENCES)?;
    let curve = metrics::roc(ranking.entries().iter().map(|&(_, r)| designing.binary_search(&r).is_ok()))?;
    io::write_roc_csv(&a.out_dir.join("roc.csv"), &curve)?;
    let summary = RocSummary {
        target: p.target,
        target_conformation: p.confs[p.target].to_string(),
        q: curve.q,
        sequences: curve.total,
        designing: curve.positives,
    };
    io::write_json(&a.out_dir.join("summary.json"), &summary)?;
    println!("Q = {:.6}", curve.q);
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let target = match &a.target_file {
        Some(p) => io::read_conformations(p)?,
        None => io::parse_conformations(io::TARGET_9X9)?,
    };
    if target.len() != 1 {
        bail!("the target file must hold exactly one conformation");
    }
    let d = a.composition.alphabet_size();
    let truth = match &a.matrix {
        Some(p) => MatrixSource::File(p.clone()).load(d)?,
        None => MatrixSource::Bundled.load(d)?,
    };
    let mut opts = BenchmarkOptions::new(target[0].clone(), a.composition, truth, a.out_dir);
    opts.budget = Duration::from_millis(a.budget_ms);
    opts.samples = a.samples;
    opts.seed = a.seed;
    opts.bins = a.bins;
    opts.reference = ReferenceSampling {
        samples: a.reference_samples,
        ..ReferenceSampling::default()
    };
    if let Some(n) = a.seq_steps {
        opts.seq_schedule.n_steps = n;
    }
    if let Some(n) = a.qubo_steps {
        opts.qubo_schedule.n_steps = n;
    }
    let summary = benchmark_solvers(&opts)?;
    print_json(&summary)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Enumerate(a) => enumerate(a),
        Command::Fold(a) => fold(a),
        Command::Census(a) => census(a),
        Command::ExportQubo(a) => export_qubo(a),
        Command::Solve(a) => solve(a),
        Command::Design(a) => design(a),
        Command::Roc(a) => roc(a),
        Command::Benchmark(a) => bench(a),
    }
}
