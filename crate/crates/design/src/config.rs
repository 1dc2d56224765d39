//! Experiment configuration, loaded from a single JSON document.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use lattice_design_core::energy::ground_truth;
use lattice_design_core::solvers::AnnealSchedule;
use lattice_design_core::{Composition, EnergyMatrix, OracleConfig, QuboWeights};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::io;

/// How the design target is chosen.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetSpec {
    /// Structure with the most designing sequences under the ground truth.
    #[default]
    MostDesignable,
    /// Index into the enumerated ensemble.
    Index(usize),
    /// Explicit chain, `x,y x,y ...`; matched up to symmetry.
    Conformation(String),
    /// File holding one chain.
    File(PathBuf),
}

/// Source of an energy matrix.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixSource {
    /// The shipped ground-truth matrix for the alphabet.
    #[default]
    Bundled,
    File(PathBuf),
    Inline(EnergyMatrix),
}

impl MatrixSource {
    pub fn load(&self, d: usize) -> Result<EnergyMatrix> {
        let e = match self {
            MatrixSource::Bundled => io::bundled_energy_matrix(d)?,
            MatrixSource::File(p) => io::read_energy_matrix(p)?,
            MatrixSource::Inline(e) => e.clone(),
        };
        ensure!(e.size() == d, "energy matrix is {0}x{0}, alphabet is {d}", e.size());
        Ok(e)
    }
}

/// Starting matrix of the learning loop.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitSpec {
    /// Uniform entries in `[-0.5, 0.5]`, symmetrized, drawn from the seed.
    #[default]
    Random,
    GroundTruth,
    Matrix(MatrixSource),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    #[default]
    SeqSa,
    QuboSa,
    Exhaustive,
}

impl std::str::FromStr for SolverKind {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "seq-sa" => SolverKind::SeqSa,
            "qubo-sa" => SolverKind::QuboSa,
            "exhaustive" => SolverKind::Exhaustive,
            _ => bail!("unknown solver {s:?} (seq-sa, qubo-sa, exhaustive)"),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub t_max: f64,
    pub t_min: f64,
    pub n_steps: u64,
}

impl ScheduleConfig {
    pub fn default_for(kind: SolverKind) -> Self {
        match kind {
            // single flips have to climb over the penalty terms, so the
            // QUBO walk runs cooler and longer
            SolverKind::QuboSa => ScheduleConfig {
                t_max: 1.0,
                t_min: 0.05,
                n_steps: 300_000,
            },
            _ => {
                let d = AnnealSchedule::default();
                ScheduleConfig {
                    t_max: d.t_max,
                    t_min: d.t_min,
                    n_steps: d.n_steps,
                }
            }
        }
    }

    pub fn with_seed(&self, seed: u64) -> Result<AnnealSchedule> {
        Ok(AnnealSchedule::new(self.t_max, self.t_min, self.n_steps, seed)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub kind: SolverKind,
    /// Defaults depend on `kind`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleConfig>,
    /// Restarts per batch; batches repeat until `candidates` distinct
    /// sequences are pooled or `max_restarts` is reached.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_max_restarts")]
    pub max_restarts: usize,
}

fn default_restarts() -> usize {
    200
}

fn default_max_restarts() -> usize {
    2000
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            kind: SolverKind::default(),
            schedule: None,
            restarts: default_restarts(),
            max_restarts: default_max_restarts(),
        }
    }
}

impl SolverConfig {
    pub fn schedule(&self) -> ScheduleConfig {
        self.schedule.unwrap_or_else(|| ScheduleConfig::default_for(self.kind))
    }
}

fn default_beta() -> f64 {
    3.0
}
fn default_p_fold() -> f64 {
    0.8
}
fn default_k() -> usize {
    30
}
fn default_max_cycles() -> usize {
    10
}
fn default_n_max() -> usize {
    10
}
fn default_stop() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}
fn default_perceptron_iters() -> usize {
    100_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    /// Lattice side `L`; chains have `L * L` residues.
    pub side: usize,
    /// Alphabet size `D`.
    pub alphabet: usize,
    pub composition: Composition,
    #[serde(default)]
    pub target: TargetSpec,
    #[serde(default)]
    pub ground_truth: MatrixSource,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_p_fold")]
    pub p_fold: f64,
    #[serde(default)]
    pub weights: QuboWeights,
    /// Perceptron step at cycle 0; defaults per alphabet.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta0: Option<f64>,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Candidates folded per cycle (`K`).
    #[serde(default = "default_k")]
    pub candidates: usize,
    #[serde(default = "default_max_cycles")]
    pub max_cycles: usize,
    /// Excited states per foldable sequence that receive a gap constraint.
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub init: InitSpec,
    /// The loop stops once this fraction of candidates designs the target,
    /// or any single candidate does.
    #[serde(default = "default_stop")]
    pub stop_threshold: f64,
    /// When false the loop runs all `max_cycles` refinements regardless of
    /// the stop rule (the rule is still evaluated and reported).
    #[serde(default = "default_true")]
    pub halt_on_success: bool,
    #[serde(default = "default_perceptron_iters")]
    pub perceptron_max_iters: usize,
    /// Compute the exhaustive ROC of every cycle's matrix.
    #[serde(default)]
    pub track_roc: bool,
}

impl DesignConfig {
    /// Default settings for a lattice, alphabet and composition.
    pub fn new(side: usize, alphabet: usize, composition: Composition) -> Self {
        DesignConfig {
            side,
            alphabet,
            composition,
            target: TargetSpec::default(),
            ground_truth: MatrixSource::default(),
            beta: default_beta(),
            p_fold: default_p_fold(),
            weights: QuboWeights::default(),
            eta0: None,
            solver: SolverConfig::default(),
            candidates: default_k(),
            max_cycles: default_max_cycles(),
            n_max: default_n_max(),
            seed: 0,
            init: InitSpec::default(),
            stop_threshold: default_stop(),
            halt_on_success: true,
            perceptron_max_iters: default_perceptron_iters(),
            track_roc: false,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: DesignConfig = io::read_json(path)?;
        cfg.validate().with_context(|| format!("invalid config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.side >= 2, "side must be at least 2");
        ensure!(self.alphabet >= 1, "alphabet must be non-empty");
        ensure!(
            self.composition.alphabet_size() == self.alphabet,
            "composition has {} types, alphabet is {}",
            self.composition.alphabet_size(),
            self.alphabet
        );
        ensure!(
            self.composition.total() == self.side * self.side,
            "composition sums to {}, lattice has {} sites",
            self.composition.total(),
            self.side * self.side
        );
        OracleConfig::new(self.beta, self.p_fold)?;
        ensure!(self.beta > 0.0, "beta must be positive");
        QuboWeights::new(self.weights.a1, self.weights.a2, self.weights.b)?;
        ensure!(self.eta0() > 0.0, "eta0 must be positive");
        ensure!(self.candidates >= 1, "need at least one candidate per cycle");
        ensure!(self.solver.restarts >= 1, "need at least one restart");
        ensure!(
            self.solver.max_restarts >= self.solver.restarts,
            "max_restarts is below restarts"
        );
        self.solver.schedule().with_seed(0)?;
        ensure!(
            (0.0..=1.0).contains(&self.stop_threshold),
            "stop_threshold must lie in [0, 1]"
        );
        ensure!(self.perceptron_max_iters >= 1, "perceptron_max_iters must be >= 1");
        Ok(())
    }

    pub fn oracle(&self) -> OracleConfig {
        OracleConfig {
            beta: self.beta,
            p_fold: self.p_fold,
        }
    }

    pub fn eta0(&self) -> f64 {
        self.eta0
            .or_else(|| ground_truth::eta0(self.alphabet))
            .unwrap_or(0.3)
    }

    /// Hex SHA-256 of the canonical JSON form, shortened to 16 characters.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> DesignConfig {
        DesignConfig::new(4, 3, "5,5,6".parse().unwrap())
    }

    #[test]
    fn defaults_round_trip() {
        let cfg = base();
        cfg.validate().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: DesignConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.eta0(), 0.325);
    }

    #[test]
    fn minimal_document() {
        let cfg: DesignConfig =
            serde_json::from_str(r#"{"side": 4, "alphabet": 3, "composition": [5, 5, 6]}"#).unwrap();
        assert_eq!(cfg, base());
        let cfg: DesignConfig = serde_json::from_str(
            r#"{"side": 4, "alphabet": 3, "composition": [5, 5, 6], "target": {"index": 5},
                "solver": {"kind": "qubo-sa"}, "init": "ground-truth"}"#,
        )
        .unwrap();
        assert_eq!(cfg.target, TargetSpec::Index(5));
        assert_eq!(cfg.solver.schedule().n_steps, 300_000);
        assert!(serde_json::from_str::<DesignConfig>(r#"{"side": 4, "alphabet": 3, "composition": [5, 5, 6], "typo": 1}"#).is_err());
    }

    #[test]
    fn cross_field_checks() {
        let mut cfg = base();
        cfg.composition = "5,5,5".parse().unwrap();
        assert!(cfg.validate().is_err());
        let mut cfg = base();
        cfg.p_fold = 0.5;
        assert!(cfg.validate().is_err());
        let mut cfg = base();
        cfg.alphabet = 4;
        assert!(cfg.validate().is_err());
        let mut a = base();
        a.seed = 1;
        assert_ne!(a.hash(), base().hash());
    }
}
