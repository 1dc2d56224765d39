//! Pairwise contact energies, the approximate design score `G(S)` and exact
//! Boltzmann fold probabilities over an enumerated ensemble.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{AverageContactMap, ContactMap};
use crate::math;

/// Absolute tolerance below which two energies count as tied.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Largest supported alphabet.
pub const MAX_ALPHABET: usize = 26;

/// Residue types along the chain, zero-based (`0..D`).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Sequence(Vec<u8>);

impl Sequence {
    pub fn new(residues: Vec<u8>) -> Self {
        Sequence(residues)
    }

    /// Builds a sequence from one-based labels.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        labels
            .iter()
            .map(|&l| {
                if (1..=MAX_ALPHABET).contains(&l) {
                    Ok((l - 1) as u8)
                } else {
                    Err(invalid(alloc::format!("residue label {l} outside 1..={MAX_ALPHABET}")))
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(Sequence)
    }

    pub fn residues(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_type(&self) -> Option<u8> {
        self.0.iter().copied().max()
    }
}

impl From<Sequence> for String {
    fn from(s: Sequence) -> String {
        alloc::format!("{s}")
    }
}

impl TryFrom<String> for Sequence {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl fmt::Display for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, r) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}", *r as usize + 1)?;
        }
        Ok(())
    }
}

impl FromStr for Sequence {
    type Err = Error;

    /// One-based labels separated by whitespace or commas.
    fn from_str(s: &str) -> Result<Self> {
        let labels = s
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|e| Error::Parse(alloc::format!("bad residue label {t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Sequence::from_labels(&labels)
    }
}

/// Number of residues of each type.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "Vec<u32>", try_from = "Vec<u32>")]
pub struct Composition(Vec<u32>);

impl Composition {
    pub fn new(counts: Vec<u32>) -> Result<Self> {
        if counts.is_empty() || counts.len() > MAX_ALPHABET {
            return Err(invalid(alloc::format!(
                "composition needs 1..={MAX_ALPHABET} types, got {}",
                counts.len()
            )));
        }
        Ok(Composition(counts))
    }

    pub fn of(seq: &Sequence, alphabet: usize) -> Result<Self> {
        let mut counts = vec![0u32; alphabet];
        for &r in seq.residues() {
            *counts
                .get_mut(r as usize)
                .ok_or_else(|| invalid(alloc::format!("residue type {} outside alphabet", r + 1)))? +=
                1;
        }
        Composition::new(counts)
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    pub fn alphabet_size(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> usize {
        self.0.iter().map(|&c| c as usize).sum()
    }

    /// Sorted sequence with this composition: all type-0 residues first.
    pub fn first_sequence(&self) -> Sequence {
        let mut out = Vec::with_capacity(self.total());
        for (t, &c) in self.0.iter().enumerate() {
            out.extend(core::iter::repeat(t as u8).take(c as usize));
        }
        Sequence(out)
    }

    pub fn matches(&self, seq: &Sequence) -> bool {
        Composition::of(seq, self.alphabet_size()).is_ok_and(|c| c == *self)
    }
}

impl From<Composition> for Vec<u32> {
    fn from(c: Composition) -> Self {
        c.0
    }
}

impl TryFrom<Vec<u32>> for Composition {
    type Error = Error;

    fn try_from(v: Vec<u32>) -> Result<Self> {
        Composition::new(v)
    }
}

impl fmt::Display for Composition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, c) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl FromStr for Composition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let counts = s
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<u32>()
                    .map_err(|e| Error::Parse(alloc::format!("bad composition entry {t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Composition::new(counts)
    }
}

/// Symmetric `D × D` contact energy matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct EnergyMatrix {
    d: usize,
    values: Vec<f64>,
}

impl EnergyMatrix {
    /// Row-major values; rejects matrices asymmetric beyond `1e-9`.
    pub fn new(d: usize, values: Vec<f64>) -> Result<Self> {
        let (m, asym) = EnergyMatrix::symmetrized(d, values)?;
        if asym > DEGENERACY_TOL {
            return Err(invalid(alloc::format!(
                "energy matrix is not symmetric (max |e_mn - e_nm| = {asym:e})"
            )));
        }
        Ok(m)
    }

    /// Averages `e` with its transpose; also returns the largest asymmetry.
    pub fn symmetrized(d: usize, mut values: Vec<f64>) -> Result<(Self, f64)> {
        if !(1..=MAX_ALPHABET).contains(&d) {
            return Err(invalid(alloc::format!("alphabet size {d} outside 1..={MAX_ALPHABET}")));
        }
        if values.len() != d * d {
            return Err(invalid(alloc::format!(
                "expected {} matrix entries, got {}",
                d * d,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("energy matrix has non-finite entries"));
        }
        let mut asym = 0.0f64;
        for m in 0..d {
            for n in (m + 1)..d {
                let (a, b) = (values[m * d + n], values[n * d + m]);
                asym = asym.max(math::abs(a - b));
                let avg = 0.5 * (a + b);
                values[m * d + n] = avg;
                values[n * d + m] = avg;
            }
        }
        Ok((EnergyMatrix { d, values }, asym))
    }

    pub fn constant(d: usize, k: f64) -> Result<Self> {
        EnergyMatrix::new(d, vec![k; d * d])
    }

    pub fn size(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.values[m * self.d + n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.d).map(|r| r.to_vec()).collect()
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        EnergyMatrix {
            d: self.d,
            values: self.values.iter().map(|v| v * lambda).collect(),
        }
    }

    /// Matrix `e'` with `e'[perm[m]][perm[n]] = e[m][n]`.
    pub fn relabeled(&self, perm: &[usize]) -> Self {
        let d = self.d;
        let mut values = vec![0.0; d * d];
        for m in 0..d {
            for n in 0..d {
                values[perm[m] * d + perm[n]] = self.values[m * d + n];
            }
        }
        EnergyMatrix { d, values }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, &v| a.max(math::abs(v)))
    }

    /// Parses `D` lines of `D` numbers, symmetrizing. Returns the matrix and
    /// the asymmetry that was averaged away.
    pub fn parse_text(text: &str) -> Result<(Self, f64)> {
        let rows: Vec<Vec<f64>> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                l.split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|t| !t.is_empty())
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|e| Error::Parse(alloc::format!("bad matrix entry {t:?}: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let d = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::Parse(alloc::format!(
                "matrix row has {} entries, expected {d}",
                r.len()
            )));
        }
        EnergyMatrix::symmetrized(d, rows.concat())
    }
}

impl TryFrom<Vec<Vec<f64>>> for EnergyMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(invalid("energy matrix rows must be square"));
        }
        EnergyMatrix::new(d, rows.concat())
    }
}

impl From<EnergyMatrix> for Vec<Vec<f64>> {
    fn from(m: EnergyMatrix) -> Self {
        m.rows()
    }
}

impl fmt::Display for EnergyMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.values.chunks(self.d) {
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    f.write_str(" ")?;
                }
                write!(f, "{v}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Ground-truth interaction matrices used by the structure oracle.
pub mod ground_truth {
    use super::EnergyMatrix;
    use alloc::vec;

    pub fn eps3() -> EnergyMatrix {
        EnergyMatrix::new(
            3,
            vec![
                -0.35346, 0.30399, 0.42582, //
                0.30399, 0.17115, -0.30167, //
                0.42582, -0.30167, 0.34102,
            ],
        )
        .expect("symmetric")
    }

    pub fn eps4() -> EnergyMatrix {
        EnergyMatrix::new(
            4,
            vec![
                0.05375, 0.21861, 0.00656, 0.14191, //
                0.21861, 0.43261, -0.50441, -0.5146, //
                0.00656, -0.50441, 0.23041, 0.34485, //
                0.14191, -0.5146, 0.34485, 0.34976,
            ],
        )
        .expect("symmetric")
    }

    pub fn eps5() -> EnergyMatrix {
        EnergyMatrix::new(
            5,
            vec![
                -0.05777, 0.26095, -0.00228, 0.26162, 0.0197, //
                0.26095, 0.14214, -0.37257, 0.13965, 0.18096, //
                -0.00228, -0.37257, 0.04771, 0.12568, 0.11891, //
                0.26162, 0.13965, 0.12568, -0.38521, 0.02284, //
                0.0197, 0.18096, 0.11891, 0.02284, -0.32999,
            ],
        )
        .expect("symmetric")
    }

    /// Matrix for alphabet size `d`, if one ships.
    pub fn for_alphabet(d: usize) -> Option<EnergyMatrix> {
        match d {
            3 => Some(eps3()),
            4 => Some(eps4()),
            5 => Some(eps5()),
            _ => None,
        }
    }

    /// Perceptron base step size tuned for each shipped alphabet.
    pub fn eta0(d: usize) -> Option<f64> {
        match d {
            3 => Some(0.325),
            4 => Some(0.288),
            5 => Some(0.263),
            _ => None,
        }
    }
}

/// `C(target) - <C>`, dense and symmetric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaContactMap {
    n: usize,
    values: Vec<f64>,
}

impl DeltaContactMap {
    pub fn new(target: &ContactMap, average: &AverageContactMap) -> Result<Self> {
        let n = target.n();
        if average.n() != n {
            return Err(invalid(alloc::format!(
                "target has {n} sites but the reference map has {}",
                average.n()
            )));
        }
        let mut values: Vec<f64> = average.values().iter().map(|v| -v).collect();
        for (i, j) in target.pairs() {
            values[i * n + j] += 1.0;
            values[j * n + i] += 1.0;
        }
        Ok(DeltaContactMap { n, values })
    }

    pub fn zero(n: usize) -> Self {
        DeltaContactMap {
            n,
            values: vec![0.0; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Upper-triangle entries with `|value| >= threshold`.
    pub fn significant_pairs(&self, threshold: f64) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |i| {
            ((i + 1)..n).filter_map(move |j| {
                let v = self.values[i * n + j];
                (math::abs(v) >= threshold).then_some((i, j, v))
            })
        })
    }
}

fn check_sequence(s: &Sequence, n: usize, e: &EnergyMatrix) -> Result<()> {
    if s.len() != n {
        return Err(invalid(alloc::format!(
            "sequence length {} does not match chain length {n}",
            s.len()
        )));
    }
    if let Some(m) = s.max_type() {
        if m as usize >= e.size() {
            return Err(invalid(alloc::format!(
                "residue type {} outside the {}-letter alphabet",
                m + 1,
                e.size()
            )));
        }
    }
    Ok(())
}

/// `E(Γ, S) = Σ_{i<j} C_ij ε(s_i, s_j)`.
pub fn contact_energy(c: &ContactMap, s: &Sequence, e: &EnergyMatrix) -> Result<f64> {
    check_sequence(s, c.n(), e)?;
    let r = s.residues();
    Ok(c.pairs()
        .map(|(i, j)| e.get(r[i] as usize, r[j] as usize))
        .sum())
}

/// `G(S) = Σ_{i<j} ε(s_i, s_j) ΔC_ij`.
pub fn scoring_g(dc: &DeltaContactMap, s: &Sequence, e: &EnergyMatrix) -> Result<f64> {
    check_sequence(s, dc.n(), e)?;
    let r = s.residues();
    let n = dc.n();
    let mut g = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            g += e.get(r[i] as usize, r[j] as usize) * dc.get(i, j);
        }
    }
    Ok(g)
}

/// `P(target | S)` from a slice of energies, normalized after shifting by
/// the minimum.
pub fn boltzmann_probability(energies: &[f64], target: usize, beta: f64) -> f64 {
    let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let z: f64 = energies.iter().map(|&e| math::exp(-beta * (e - min))).sum();
    math::exp(-beta * (energies[target] - min)) / z
}

pub fn fold_probability(
    s: &Sequence,
    target: usize,
    ensemble: &[ContactMap],
    e: &EnergyMatrix,
    beta: f64,
) -> Result<f64> {
    if ensemble.is_empty() {
        return Err(invalid("empty conformation ensemble"));
    }
    if target >= ensemble.len() {
        return Err(invalid(alloc::format!(
            "target index {target} outside ensemble of {}",
            ensemble.len()
        )));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(invalid(alloc::format!("inverse temperature {beta} must be finite and >= 0")));
    }
    let energies = ensemble
        .iter()
        .map(|c| contact_energy(c, s, e))
        .collect::<Result<Vec<_>>>()?;
    Ok(boltzmann_probability(&energies, target, beta))
}

/// Whether `target` is the strict unique ground state of `s` and is
/// occupied with probability at least `p_fold`.
pub fn is_designing(
    s: &Sequence,
    target: usize,
    ensemble: &[ContactMap],
    e: &EnergyMatrix,
    beta: f64,
    p_fold: f64,
) -> Result<bool> {
    let energies = ensemble
        .iter()
        .map(|c| contact_energy(c, s, e))
        .collect::<Result<Vec<_>>>()?;
    let Some(&et) = energies.get(target) else {
        return Err(invalid("target index outside ensemble"));
    };
    let unique = energies
        .iter()
        .enumerate()
        .all(|(k, &v)| k == target || v > et + DEGENERACY_TOL);
    Ok(unique && boltzmann_probability(&energies, target, beta) >= p_fold)
}

/// Precompiled `G(S)` for fast evaluation and O(degree) swap updates.
#[derive(Clone, Debug)]
pub struct DesignScore {
    n: usize,
    d: usize,
    eps: Vec<f64>,
    pairs: Vec<(u16, u16, f64)>,
    neighbours: Vec<Vec<(u16, f64)>>,
}

/// Entries of `ΔC` smaller than this are ignored.
pub const SPARSITY_TOL: f64 = 1e-12;

impl DesignScore {
    pub fn new(dc: &DeltaContactMap, e: &EnergyMatrix) -> Self {
        let n = dc.n();
        let mut pairs = Vec::new();
        let mut neighbours = vec![Vec::new(); n];
        for (i, j, w) in dc.significant_pairs(SPARSITY_TOL) {
            pairs.push((i as u16, j as u16, w));
            neighbours[i].push((j as u16, w));
            neighbours[j].push((i as u16, w));
        }
        DesignScore {
            n,
            d: e.size(),
            eps: e.values().to_vec(),
            pairs,
            neighbours,
        }
    }

    pub fn chain_length(&self) -> usize {
        self.n
    }

    pub fn alphabet_size(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn value(&self, s: &[u8]) -> f64 {
        let d = self.d;
        self.pairs
            .iter()
            .map(|&(i, j, w)| w * self.eps[s[i as usize] as usize * d + s[j as usize] as usize])
            .sum()
    }

    /// `G(S') - G(S)` where `S'` swaps positions `i` and `j` of `S`.
    #[inline]
    pub fn swap_delta(&self, s: &[u8], i: usize, j: usize) -> f64 {
        let (a, b) = (s[i] as usize, s[j] as usize);
        if a == b {
            return 0.0;
        }
        let d = self.d;
        let mut delta = 0.0;
        for &(k, w) in &self.neighbours[i] {
            let k = k as usize;
            if k != j {
                let t = s[k] as usize;
                delta += w * (self.eps[b * d + t] - self.eps[a * d + t]);
            }
        }
        for &(k, w) in &self.neighbours[j] {
            let k = k as usize;
            if k != i {
                let t = s[k] as usize;
                delta += w * (self.eps[a * d + t] - self.eps[b * d + t]);
            }
        }
        delta
    }
}
