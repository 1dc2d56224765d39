//! QUBO encoding of fixed-composition `G(S)` minimization.
//!
//! Each site carries `D - 1` bits, one per residue type `1..D` (zero-based);
//! type `0` is implied by an all-zero block. The Hamiltonian is
//!
//! ```text
//! H = A1 Σ_{m≥1} (Σ_i q_im − N_m)²                       composition
//!   + A2 Σ_i Σ_{m≠n≥1} q_im q_in                          single occupancy
//!   + B [ Σ_{i<j} ΔC_ij Σ_{m,n≥1} α_mn q_im q_jn
//!       + Σ_i Σ_{m≥1} γ_m q_im Σ_{j≠i} ΔC_ij
//!       + ε_00 Σ_{i<j} ΔC_ij ]                            contact score
//! ```
//!
//! with `α_mn = ε_mn − ε_m0 − ε_n0 + ε_00` and `γ_m = ε_m0 − ε_00`. On every
//! valid assignment the first two terms vanish and the last equals `B·G(S)`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::energy::{Composition, DeltaContactMap, EnergyMatrix, Sequence, SPARSITY_TOL};
use crate::error::{invalid, Error, Result};
use crate::math;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuboWeights {
    pub a1: f64,
    pub a2: f64,
    pub b: f64,
}

impl QuboWeights {
    pub fn new(a1: f64, a2: f64, b: f64) -> Result<Self> {
        for (name, v) in [("A1", a1), ("A2", a2), ("B", b)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(alloc::format!("{name} must be positive, got {v}")));
            }
        }
        Ok(QuboWeights { a1, a2, b })
    }

    /// Penalty level below which a single residue change could pay for a
    /// constraint violation: `2·B·max|ε|·max_i Σ_j |ΔC_ij|`. Advisory only.
    pub fn dominance_threshold(&self, dc: &DeltaContactMap, e: &EnergyMatrix) -> f64 {
        let n = dc.n();
        let row_max = (0..n)
            .map(|i| (0..n).map(|j| math::abs(dc.get(i, j))).sum::<f64>())
            .fold(0.0, f64::max);
        2.0 * self.b * e.max_abs() * row_max
    }

    pub fn is_dominant(&self, dc: &DeltaContactMap, e: &EnergyMatrix) -> bool {
        let t = self.dominance_threshold(dc, e);
        self.a1 >= t && self.a2 >= t
    }
}

impl Default for QuboWeights {
    fn default() -> Self {
        QuboWeights {
            a1: 2.1,
            a2: 2.1,
            b: 1.0,
        }
    }
}

/// Sites and alphabet behind a one-hot variable layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneHotLayout {
    pub sites: usize,
    pub alphabet: usize,
}

impl OneHotLayout {
    pub fn num_vars(&self) -> usize {
        self.sites * (self.alphabet - 1)
    }

    /// Bit for residue type `m` (zero-based, `m >= 1`) at site `i`.
    #[inline]
    pub fn var_index(&self, i: usize, m: usize) -> usize {
        debug_assert!(m >= 1 && m < self.alphabet);
        i * (self.alphabet - 1) + (m - 1)
    }
}

/// Quadratic form over binary variables: `offset + Σ_{u≤v} Q_uv x_u x_v`,
/// with diagonal entries acting as linear terms.
#[derive(Clone, Debug, PartialEq)]
pub struct QuboProblem {
    num_vars: usize,
    terms: BTreeMap<(u32, u32), f64>,
    offset: f64,
    layout: Option<OneHotLayout>,
}

impl QuboProblem {
    pub fn new(num_vars: usize) -> Self {
        QuboProblem {
            num_vars,
            terms: BTreeMap::new(),
            offset: 0.0,
            layout: None,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn layout(&self) -> Option<OneHotLayout> {
        self.layout
    }

    pub fn terms(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.terms
            .iter()
            .map(|(&(u, v), &c)| (u as usize, v as usize, c))
    }

    pub fn add_offset(&mut self, c: f64) {
        self.offset += c;
    }

    /// Adds `c·x_u·x_v` (a linear term when `u == v`).
    pub fn add_term(&mut self, u: usize, v: usize, c: f64) {
        assert!(u < self.num_vars && v < self.num_vars, "variable index out of range");
        let key = if u <= v { (u as u32, v as u32) } else { (v as u32, u as u32) };
        *self.terms.entry(key).or_insert(0.0) += c;
    }

    fn drop_zeros(&mut self) {
        self.terms.retain(|_, c| *c != 0.0);
    }

    /// Text form: a header `qubo <num_vars> <num_terms> <offset>` followed
    /// by `u v coeff` lines, values printed with 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "qubo {} {} {:.16e}",
            self.num_vars,
            self.terms.len(),
            self.offset
        );
        for (&(u, v), &c) in &self.terms {
            let _ = writeln!(out, "{u} {v} {c:.16e}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Parse("empty QUBO file".into()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 4 || h[0] != "qubo" {
            return Err(Error::Parse(alloc::format!("bad QUBO header {header:?}")));
        }
        let parse_usize = |t: &str| {
            t.parse::<usize>()
                .map_err(|e| Error::Parse(alloc::format!("bad integer {t:?}: {e}")))
        };
        let parse_f64 = |t: &str| {
            t.parse::<f64>()
                .map_err(|e| Error::Parse(alloc::format!("bad number {t:?}: {e}")))
        };
        let num_vars = parse_usize(h[1])?;
        let num_terms = parse_usize(h[2])?;
        let mut p = QuboProblem::new(num_vars);
        p.offset = parse_f64(h[3])?;
        for line in lines.by_ref().take(num_terms) {
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 3 {
                return Err(Error::Parse(alloc::format!("bad QUBO term line {line:?}")));
            }
            let (u, v, c) = (parse_usize(t[0])?, parse_usize(t[1])?, parse_f64(t[2])?);
            if u > v || v >= num_vars {
                return Err(Error::Parse(alloc::format!(
                    "term ({u},{v}) must satisfy u <= v < {num_vars}"
                )));
            }
            if p.terms.insert((u as u32, v as u32), c).is_some() {
                return Err(Error::Parse(alloc::format!("duplicate term ({u},{v})")));
            }
        }
        if p.terms.len() != num_terms {
            return Err(Error::Parse(alloc::format!(
                "header announces {num_terms} terms, found {}",
                p.terms.len()
            )));
        }
        if lines.next().is_some() {
            return Err(Error::Parse("trailing lines after the announced terms".into()));
        }
        Ok(p)
    }
}

/// Builds the composition, occupancy and contact-score Hamiltonian.
pub fn encode(
    dc: &DeltaContactMap,
    e: &EnergyMatrix,
    comp: &Composition,
    w: QuboWeights,
) -> Result<QuboProblem> {
    let n = dc.n();
    let d = e.size();
    if comp.total() != n {
        return Err(invalid(alloc::format!(
            "composition sums to {} but the chain has {n} sites",
            comp.total()
        )));
    }
    if comp.alphabet_size() != d {
        return Err(invalid(alloc::format!(
            "composition has {} types but the energy matrix is {d}x{d}",
            comp.alphabet_size()
        )));
    }
    if d < 2 {
        return Err(invalid("the one-hot encoding needs at least two residue types"));
    }
    let layout = OneHotLayout { sites: n, alphabet: d };
    let mut p = QuboProblem::new(layout.num_vars());
    p.layout = Some(layout);

    for m in 1..d {
        let target = comp.counts()[m] as f64;
        p.add_offset(w.a1 * target * target);
        for i in 0..n {
            let u = layout.var_index(i, m);
            p.add_term(u, u, w.a1 * (1.0 - 2.0 * target));
            for j in (i + 1)..n {
                p.add_term(u, layout.var_index(j, m), 2.0 * w.a1);
            }
        }
    }

    for i in 0..n {
        for m in 1..d {
            for k in (m + 1)..d {
                // ordered-pair sum: each clash appears as (m,k) and (k,m)
                p.add_term(layout.var_index(i, m), layout.var_index(i, k), 2.0 * w.a2);
            }
        }
    }

    let e00 = e.get(0, 0);
    let alpha = |m: usize, k: usize| e.get(m, k) - e.get(m, 0) - e.get(k, 0) + e00;
    let gamma = |m: usize| e.get(m, 0) - e00;
    let mut row_sum = vec![0.0; n];
    for (i, j, c) in dc.significant_pairs(SPARSITY_TOL) {
        row_sum[i] += c;
        row_sum[j] += c;
        p.add_offset(w.b * c * e00);
        for m in 1..d {
            for k in 1..d {
                p.add_term(layout.var_index(i, m), layout.var_index(j, k), w.b * c * alpha(m, k));
            }
        }
    }
    for (i, &r) in row_sum.iter().enumerate() {
        if r != 0.0 {
            for m in 1..d {
                let u = layout.var_index(i, m);
                p.add_term(u, u, w.b * r * gamma(m));
            }
        }
    }
    p.drop_zeros();
    Ok(p)
}

/// One-hot bits of a sequence over `alphabet` types.
pub fn encode_assignment(s: &Sequence, alphabet: usize) -> Result<Vec<bool>> {
    if alphabet < 2 {
        return Err(invalid("the one-hot encoding needs at least two residue types"));
    }
    if s.max_type().is_some_and(|m| m as usize >= alphabet) {
        return Err(invalid("sequence uses types outside the alphabet"));
    }
    let layout = OneHotLayout {
        sites: s.len(),
        alphabet,
    };
    let mut a = vec![false; layout.num_vars()];
    for (i, &t) in s.residues().iter().enumerate() {
        if t > 0 {
            a[layout.var_index(i, t as usize)] = true;
        }
    }
    Ok(a)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationReport {
    /// Sites with more than one hot bit, and the zero-based types set there.
    pub double_occupancy: Vec<(usize, Vec<usize>)>,
    /// `count - N_m` for every type with a mismatch, type 0 inferred.
    pub composition_delta: Vec<(usize, i64)>,
}

impl ViolationReport {
    pub fn is_empty(&self) -> bool {
        self.double_occupancy.is_empty() && self.composition_delta.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decoded {
    /// Present when every site has at most one hot bit.
    pub sequence: Option<Sequence>,
    pub report: ViolationReport,
}

impl Decoded {
    /// The sequence, if the assignment satisfies every constraint.
    pub fn valid_sequence(&self) -> Option<&Sequence> {
        if self.report.is_empty() {
            self.sequence.as_ref()
        } else {
            None
        }
    }
}

pub fn decode(a: &[bool], comp: &Composition) -> Result<Decoded> {
    let d = comp.alphabet_size();
    let n = comp.total();
    if d < 2 {
        return Err(invalid("the one-hot encoding needs at least two residue types"));
    }
    let layout = OneHotLayout { sites: n, alphabet: d };
    if a.len() != layout.num_vars() {
        return Err(invalid(alloc::format!(
            "assignment has {} bits, expected {}",
            a.len(),
            layout.num_vars()
        )));
    }
    let mut report = ViolationReport::default();
    let mut residues = Vec::with_capacity(n);
    let mut counts = vec![0i64; d];
    for i in 0..n {
        let hot: Vec<usize> = (1..d).filter(|&m| a[layout.var_index(i, m)]).collect();
        for &m in &hot {
            counts[m] += 1;
        }
        match hot.len() {
            0 => {
                counts[0] += 1;
                residues.push(0);
            }
            1 => residues.push(hot[0] as u8),
            _ => report.double_occupancy.push((i, hot)),
        }
    }
    for (m, (&have, &want)) in counts.iter().zip(comp.counts()).enumerate() {
        if have != want as i64 {
            report.composition_delta.push((m, have - want as i64));
        }
    }
    let sequence = report
        .double_occupancy
        .is_empty()
        .then(|| Sequence::new(residues));
    Ok(Decoded { sequence, report })
}

pub fn qubo_energy(p: &QuboProblem, a: &[bool]) -> Result<f64> {
    if a.len() != p.num_vars {
        return Err(invalid(alloc::format!(
            "assignment has {} bits, problem has {}",
            a.len(),
            p.num_vars
        )));
    }
    Ok(p.offset
        + p.terms
            .iter()
            .filter(|(&(u, v), _)| a[u as usize] && a[v as usize])
            .map(|(_, &c)| c)
            .sum::<f64>())
}

/// Energy change from flipping bit `u`.
pub fn flip_delta(p: &QuboProblem, a: &[bool], u: usize) -> f64 {
    let mut field = 0.0;
    for (&(x, y), &c) in &p.terms {
        let (x, y) = (x as usize, y as usize);
        if x == u && y == u {
            field += c;
        } else if x == u && a[y] {
            field += c;
        } else if y == u && a[x] {
            field += c;
        }
    }
    if a[u] {
        -field
    } else {
        field
    }
}
