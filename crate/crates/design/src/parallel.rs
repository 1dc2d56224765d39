//! Thread pool sizing and chunked parallel sweeps with ordered merges.

use std::sync::OnceLock;

use anyhow::Result;
use lattice_design_core::fold_oracle::Census;
use lattice_design_core::solvers::{score_range, SequenceRanking, SwapObjective};
use lattice_design_core::{EnergyMatrix, FoldEngine, OracleConfig, SequenceSpace};
use rayon::prelude::*;

pub const THREADS_ENV: &str = "LATTICE_DESIGN_THREADS";

/// Worker count: `LATTICE_DESIGN_THREADS` if set to a positive integer,
/// otherwise the available parallelism.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(thread_count())
            .build()
            .expect("thread pool")
    })
}

/// Runs `f` inside the capped pool.
pub fn install<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    pool().install(f)
}

/// Splits `0..count` into contiguous ranges of roughly equal size.
pub fn chunks(count: u128, pieces: usize) -> Vec<(u128, u128)> {
    let pieces = (pieces.max(1) as u128).min(count.max(1));
    (0..pieces)
        .map(|k| (count * k / pieces, count * (k + 1) / pieces))
        .collect()
}

const CHUNKS: usize = 256;

/// Census over a whole sequence space; identical to the sequential result.
pub fn census(
    engine: &FoldEngine,
    space: &SequenceSpace,
    e: &EnergyMatrix,
    cfg: OracleConfig,
    limit: u128,
) -> Result<Census> {
    space.ensure_at_most(limit)?;
    anyhow::ensure!(
        space.composition().total() == engine.chain_length(),
        "composition does not sum to the chain length"
    );
    let parts: Vec<Census> = install(|| {
        chunks(space.count(), CHUNKS)
            .into_par_iter()
            .map(|(a, b)| {
                let mut c = Census::empty(engine.len());
                c.accumulate_range(engine, space, e, cfg, a, b);
                c
            })
            .collect()
    });
    // ranges are disjoint and ascending, so appending keeps ranks sorted
    let mut out = Census::empty(engine.len());
    for p in parts {
        for (a, b) in out.records.iter_mut().zip(&p.records) {
            a.unique_ground_state += b.unique_ground_state;
            a.designing += b.designing;
        }
        for (a, b) in out.designing.iter_mut().zip(p.designing) {
            a.extend(b);
        }
        out.sequences_seen += p.sequences_seen;
    }
    Ok(out)
}

/// Exhaustive ranking of a sequence space under `objective`.
pub fn ranking<O: SwapObjective + Sync + ?Sized>(
    space: &SequenceSpace,
    objective: &O,
    limit: u128,
) -> Result<SequenceRanking> {
    space.ensure_at_most(limit)?;
    let parts: Vec<Vec<(f64, u64)>> = install(|| {
        chunks(space.count(), CHUNKS)
            .into_par_iter()
            .map(|(a, b)| score_range(space, objective, a, b))
            .collect()
    });
    Ok(SequenceRanking::from_scored(space.clone(), parts.concat()))
}

/// Order-preserving parallel map.
pub fn map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    install(|| items.par_iter().map(f).collect())
}
