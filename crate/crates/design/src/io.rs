//! Text and CSV file formats.
//!
//! * conformations: one chain per line as `x,y x,y ...`
//! * sequences: one per line, one-based type labels separated by spaces
//! * energy matrices: `D` lines of `D` numbers, symmetrized on load
//! * QUBO problems: see [`QuboProblem::to_text`]
//!
//! Blank lines and lines starting with `#` are skipped everywhere.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use lattice_design_core::metrics::{HistogramBin, RocCurve, SuccessRecord};
use lattice_design_core::{Conformation, EnergyMatrix, QuboProblem, Sequence};
use serde::Serialize;

const EPS3: &str = include_str!("../data/eps3.txt");
const EPS4: &str = include_str!("../data/eps4.txt");
const EPS5: &str = include_str!("../data/eps5.txt");
pub const TARGET_9X9: &str = include_str!("../data/target_9x9.txt");

const ASYMMETRY_WARN: f64 = 1e-9;

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn parse_conformations(text: &str) -> Result<Vec<Conformation>> {
    content_lines(text)
        .map(|(k, l)| l.parse::<Conformation>().with_context(|| format!("line {k}")))
        .collect()
}

pub fn read_conformations(path: &Path) -> Result<Vec<Conformation>> {
    parse_conformations(&read(path)?).with_context(|| format!("in {}", path.display()))
}

pub fn write_conformations(path: &Path, confs: &[Conformation]) -> Result<()> {
    write(path, &format_lines(confs))
}

pub fn parse_sequences(text: &str) -> Result<Vec<Sequence>> {
    content_lines(text)
        .map(|(k, l)| l.parse::<Sequence>().with_context(|| format!("line {k}")))
        .collect()
}

pub fn read_sequences(path: &Path) -> Result<Vec<Sequence>> {
    parse_sequences(&read(path)?).with_context(|| format!("in {}", path.display()))
}

pub fn write_sequences(path: &Path, seqs: &[Sequence]) -> Result<()> {
    write(path, &format_lines(seqs))
}

fn format_lines<T: std::fmt::Display>(items: &[T]) -> String {
    let mut out = String::new();
    for it in items {
        out.push_str(&it.to_string());
        out.push('\n');
    }
    out
}

pub fn parse_energy_matrix(text: &str) -> Result<EnergyMatrix> {
    let (e, asym) = EnergyMatrix::parse_text(text)?;
    if asym > ASYMMETRY_WARN {
        log::warn!("energy matrix was asymmetric by up to {asym:.3e}; symmetrized by averaging");
    }
    Ok(e)
}

pub fn read_energy_matrix(path: &Path) -> Result<EnergyMatrix> {
    parse_energy_matrix(&read(path)?).with_context(|| format!("in {}", path.display()))
}

pub fn write_energy_matrix(path: &Path, e: &EnergyMatrix) -> Result<()> {
    write(path, &e.to_string())
}

/// Ground-truth matrices shipped with the crate, for alphabets of 3, 4 and 5.
pub fn bundled_energy_matrix(d: usize) -> Result<EnergyMatrix> {
    let text = match d {
        3 => EPS3,
        4 => EPS4,
        5 => EPS5,
        _ => bail!("no bundled ground-truth matrix for an alphabet of {d}"),
    };
    parse_energy_matrix(text)
}

pub fn read_qubo(path: &Path) -> Result<QuboProblem> {
    Ok(QuboProblem::from_text(&read(path)?).with_context(|| format!("in {}", path.display()))?)
}

pub fn write_qubo(path: &Path, p: &QuboProblem) -> Result<()> {
    write(path, &p.to_text())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, &text)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn write_csv<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct RocRow {
    x: f64,
    y: f64,
}

pub fn write_roc_csv(path: &Path, roc: &RocCurve) -> Result<()> {
    write_csv(path, roc.points.iter().map(|&(x, y)| RocRow { x, y }))
}

#[derive(Serialize)]
struct FcRow {
    cycle: usize,
    f_c: f64,
}

pub fn write_fc_csv(path: &Path, records: &[SuccessRecord]) -> Result<()> {
    write_csv(
        path,
        records.iter().map(|r| FcRow {
            cycle: r.cycle,
            f_c: r.f_c,
        }),
    )
}

#[derive(Serialize)]
struct HistRow {
    bin_lo: f64,
    bin_hi: f64,
    count: u64,
}

pub fn write_histogram_csv(path: &Path, bins: &[HistogramBin]) -> Result<()> {
    write_csv(
        path,
        bins.iter().map(|b| HistRow {
            bin_lo: b.lo,
            bin_hi: b.hi,
            count: b.count,
        }),
    )
}

/// Reads back a histogram CSV written by [`write_histogram_csv`].
pub fn read_histogram_csv(path: &Path) -> Result<Vec<HistogramBin>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["bin_lo", "bin_hi", "count"] {
        bail!("{}: unexpected header {:?}", path.display(), headers);
    }
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(HistogramBin {
                lo: rec[0].parse()?,
                hi: rec[1].parse()?,
                count: rec[2].parse()?,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct ValueRow {
    seed: u64,
    value: f64,
}

pub fn write_values_csv(path: &Path, values: impl IntoIterator<Item = (u64, f64)>) -> Result<()> {
    write_csv(path, values.into_iter().map(|(seed, value)| ValueRow { seed, value }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use lattice_design_core::energy::ground_truth;

    #[test]
    fn bundled_matrices_match_the_built_in_values() {
        for d in 3..=5 {
            assert_eq!(bundled_energy_matrix(d).unwrap(), ground_truth::for_alphabet(d).unwrap());
        }
        assert!(bundled_energy_matrix(6).is_err());
    }

    #[test]
    fn bundled_target_is_a_9x9_chain() {
        let c = parse_conformations(TARGET_9X9).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].side(), 9);
    }

    #[test]
    fn comments_and_blanks_are_skipped() {
        let s = parse_sequences("# header\n\n1 2 3\n  3 2 1  \n").unwrap();
        assert_eq!(s.len(), 2);
        assert!(parse_sequences("1 x").is_err());
    }
}
