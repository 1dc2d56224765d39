//! Energy-matrix refinement from fold outcomes: contact-type features,
//! linear constraints and the most-violated-constraint perceptron.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{EnergyMatrix, Sequence};
use crate::error::{invalid, Result};
use crate::fold_oracle::{competitors, FoldEngine, FoldResult, OracleConfig};
use crate::math;

/// Position of the unordered type pair `(m, n)` in the flattened upper
/// triangle of a `d x d` matrix.
#[inline]
pub fn pair_index(d: usize, m: usize, n: usize) -> usize {
    let (a, b) = if m <= n { (m, n) } else { (n, m) };
    a * d - a * a.saturating_sub(1) / 2 + (b - a)
}

/// `d (d + 1) / 2`.
pub fn feature_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Upper-triangle flattening of a symmetric energy matrix, without doubling
/// of the off-diagonal entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonVector {
    d: usize,
    values: Vec<f64>,
}

impl EpsilonVector {
    pub fn new(d: usize, values: Vec<f64>) -> Result<Self> {
        if d == 0 || values.len() != feature_len(d) {
            return Err(invalid(alloc::format!(
                "expected {} entries for alphabet {d}, got {}",
                feature_len(d),
                values.len()
            )));
        }
        Ok(EpsilonVector { d, values })
    }

    pub fn from_matrix(e: &EnergyMatrix) -> Self {
        let d = e.size();
        let mut values = Vec::with_capacity(feature_len(d));
        for m in 0..d {
            for n in m..d {
                values.push(e.get(m, n));
            }
        }
        EpsilonVector { d, values }
    }

    pub fn to_matrix(&self) -> EnergyMatrix {
        let d = self.d;
        let mut full = vec![0.0; d * d];
        for m in 0..d {
            for n in m..d {
                let v = self.values[pair_index(d, m, n)];
                full[m * d + n] = v;
                full[n * d + m] = v;
            }
        }
        EnergyMatrix::new(d, full).expect("built symmetric")
    }

    pub fn alphabet_size(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.values.iter().zip(x).map(|(a, b)| a * b).sum()
    }
}

/// Counts of contacts per unordered residue-type pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactTypeVector {
    d: usize,
    counts: Vec<u32>,
}

impl ContactTypeVector {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>, s: &[u8], d: usize) -> Self {
        let mut counts = vec![0u32; feature_len(d)];
        for (i, j) in pairs {
            counts[pair_index(d, s[i] as usize, s[j] as usize)] += 1;
        }
        ContactTypeVector { d, counts }
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    /// `self - other` as a real vector.
    pub fn minus(&self, other: &ContactTypeVector) -> Vec<f64> {
        self.counts
            .iter()
            .zip(&other.counts)
            .map(|(&a, &b)| a as f64 - b as f64)
            .collect()
    }
}

pub fn contact_type_vector(c: &crate::lattice::ContactMap, s: &Sequence, d: usize) -> Result<ContactTypeVector> {
    if c.n() != s.len() {
        return Err(invalid("contact map and sequence lengths differ"));
    }
    if s.max_type().is_some_and(|m| m as usize >= d) {
        return Err(invalid("sequence uses types outside the alphabet"));
    }
    Ok(ContactTypeVector::from_pairs(c.pairs(), s.residues(), d))
}

fn engine_vector(engine: &FoldEngine, k: usize, s: &[u8], d: usize) -> ContactTypeVector {
    ContactTypeVector::from_pairs(
        engine.contacts(k).iter().map(|&(i, j)| (i as usize, j as usize)),
        s,
        d,
    )
}

/// `eps . x + c >= 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub x: Vec<f64>,
    pub c: f64,
}

impl LinearConstraint {
    pub fn margin(&self, eps: &EpsilonVector) -> f64 {
        eps.dot(&self.x) + self.c
    }

    pub fn is_satisfied(&self, eps: &EpsilonVector) -> bool {
        self.margin(eps) >= 0.0
    }
}

/// Smallest ground-to-first-excited gap compatible with occupancy `p_fold`
/// at inverse temperature `beta`: `ln(p / (1 - p)) / beta`.
pub fn min_gap(p_fold: f64, beta: f64) -> Result<f64> {
    if !(p_fold > 0.5 && p_fold < 1.0) {
        return Err(invalid(alloc::format!("p_fold must lie in (0.5, 1), got {p_fold}")));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(invalid(alloc::format!("beta must be positive, got {beta}")));
    }
    Ok(math::ln(p_fold / (1.0 - p_fold)) / beta)
}

/// `eta0 / (1 + 3k)`.
pub fn eta_schedule(k: usize, eta0: f64) -> f64 {
    eta0 / (1.0 + 3.0 * k as f64)
}

/// Symmetrized matrix with entries drawn uniformly from `[-0.5, 0.5]`.
pub fn random_epsilon<R: Rng + ?Sized>(d: usize, rng: &mut R) -> EnergyMatrix {
    let raw: Vec<f64> = (0..d * d).map(|_| rng.gen_range(-0.5..=0.5)).collect();
    EnergyMatrix::symmetrized(d, raw).expect("square").0
}

/// A sequence together with its ground-truth fold.
#[derive(Clone, Debug)]
pub struct FoldedSequence<'a> {
    pub sequence: &'a Sequence,
    pub fold: &'a FoldResult,
}

/// Constraints asking the refined matrix to reproduce the ground-truth
/// outcome for every folded sequence:
///
/// * each structure `i` that scores at or below the target for `S` must also
///   do so under the refined matrix (`x = n(T,S) - n(i,S)`, `c = 0`);
/// * for foldable `S`, the first `n_max` excited states must sit at least
///   `min_gap` above the native state (`x = n(i,S) - n(0,S)`, `c = -gap`).
///
/// Constraints with a zero feature difference are dropped; the rest are
/// deduplicated and returned in a canonical order, so the output does not
/// depend on the order of `history`.
pub fn build_constraints(
    engine: &FoldEngine,
    history: &[FoldedSequence<'_>],
    target: usize,
    d: usize,
    cfg: OracleConfig,
    n_max: usize,
) -> Result<Vec<LinearConstraint>> {
    if target >= engine.len() {
        return Err(invalid("target index outside the ensemble"));
    }
    let gap = min_gap(cfg.p_fold, cfg.beta)?;
    let mut set: BTreeMap<(Vec<i64>, u64), ()> = BTreeMap::new();
    let mut push = |x: Vec<f64>, c: f64| {
        if x.iter().all(|&v| v == 0.0) {
            return;
        }
        let key: Vec<i64> = x.iter().map(|&v| v as i64).collect();
        set.insert((key, c.to_bits()), ());
    };
    for h in history {
        let s = h.sequence.residues();
        if s.len() != engine.chain_length() || h.sequence.max_type().is_some_and(|m| m as usize >= d) {
            return Err(invalid("sequence does not fit the ensemble or alphabet"));
        }
        let n_target = engine_vector(engine, target, s, d);
        for i in competitors(h.fold, target, usize::MAX) {
            push(n_target.minus(&engine_vector(engine, i, s, d)), 0.0);
        }
        if h.fold.foldable {
            let native = h.fold.ranked_spectrum[0].0;
            let n0 = engine_vector(engine, native, s, d);
            for &(i, _) in h.fold.ranked_spectrum.iter().skip(1).take(n_max) {
                push(engine_vector(engine, i, s, d).minus(&n0), -gap);
            }
        }
    }
    Ok(set
        .into_keys()
        .map(|(x, c)| LinearConstraint {
            x: x.into_iter().map(|v| v as f64).collect(),
            c: f64::from_bits(c),
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerceptronOutcome {
    pub epsilon: EpsilonVector,
    pub updates: usize,
    pub satisfied: bool,
    /// Sum of `max(0, -(eps . x + c))` at the returned matrix.
    pub total_violation: f64,
}

fn total_violation(margins: &[f64]) -> f64 {
    margins.iter().map(|&m| if m < 0.0 { -m } else { 0.0 }).sum()
}

fn argmin(margins: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, &m) in margins.iter().enumerate() {
        if m < best.1 {
            best = (i, m);
        }
    }
    best
}

/// Repeatedly adds `eta * x` of the most violated constraint until all hold
/// or `max_iters` updates have been made. In the latter case the matrix
/// with the smallest total violation seen is returned.
pub fn perceptron_refine(
    eps: &EpsilonVector,
    constraints: &[LinearConstraint],
    eta: f64,
    max_iters: usize,
) -> Result<PerceptronOutcome> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(invalid("eta must be positive"));
    }
    if max_iters == 0 {
        return Err(invalid("max_iters must be at least 1"));
    }
    let dim = eps.values.len();
    if constraints.iter().any(|c| c.x.len() != dim) {
        return Err(invalid("constraint dimension does not match the energy vector"));
    }
    let mut cur = eps.clone();
    if constraints.is_empty() {
        return Ok(PerceptronOutcome {
            epsilon: cur,
            updates: 0,
            satisfied: true,
            total_violation: 0.0,
        });
    }
    let exact = |e: &EpsilonVector| constraints.iter().map(|c| c.margin(e)).collect::<Vec<f64>>();
    let mut margins = exact(&cur);
    let mut best = (total_violation(&margins), cur.clone());
    let mut updates = 0;
    loop {
        let (mut i_star, mut m_star) = argmin(&margins);
        if m_star >= -1e-9 {
            // settle near-boundary cases on exact margins
            margins = exact(&cur);
            (i_star, m_star) = argmin(&margins);
        }
        if m_star >= 0.0 {
            return Ok(PerceptronOutcome {
                epsilon: cur,
                updates,
                satisfied: true,
                total_violation: 0.0,
            });
        }
        if updates == max_iters {
            break;
        }
        let xs = &constraints[i_star].x;
        for (v, x) in cur.values.iter_mut().zip(xs) {
            *v += eta * x;
        }
        updates += 1;
        if updates % 1000 == 0 {
            margins = exact(&cur);
        } else {
            for (m, c) in margins.iter_mut().zip(constraints) {
                let overlap: f64 = c.x.iter().zip(xs).map(|(a, b)| a * b).sum();
                *m += eta * overlap;
            }
        }
        let v = total_violation(&margins);
        if v < best.0 {
            best = (v, cur.clone());
        }
    }
    let margins = exact(&best.1);
    Ok(PerceptronOutcome {
        total_violation: total_violation(&margins),
        satisfied: margins.iter().all(|&m| m >= 0.0),
        epsilon: best.1,
        updates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{contact_energy, ground_truth};
    use crate::lattice::{enumerate_compact_conformations, ContactMap};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn index_map_is_a_bijection() {
        for d in 1..7 {
            let mut seen = vec![false; feature_len(d)];
            for m in 0..d {
                for n in m..d {
                    let k = pair_index(d, m, n);
                    assert!(!seen[k]);
                    seen[k] = true;
                    assert_eq!(pair_index(d, n, m), k);
                }
            }
            assert!(seen.iter().all(|&b| b));
        }
        let e = ground_truth::eps4();
        assert_eq!(EpsilonVector::from_matrix(&e).to_matrix(), e);
    }

    #[test]
    fn gap_values() {
        assert!((min_gap(0.8, 3.0).unwrap() - math::ln(4.0) / 3.0).abs() < 1e-12);
        assert!((min_gap(0.8, 6.0).unwrap() * 2.0 - min_gap(0.8, 3.0).unwrap()).abs() < 1e-15);
        assert!(min_gap(0.5 + 1e-12, 3.0).unwrap() < 1e-11);
        assert!(min_gap(0.5, 3.0).is_err());
        assert!(min_gap(0.8, 0.0).is_err());
        assert_eq!(eta_schedule(1, 0.325), 0.325 / 4.0);
    }

    #[test]
    fn gap_sign_readings() {
        // two states split by the gap occupy the lower one with exactly p
        let (p, beta) = (0.8, 3.0);
        let gap = min_gap(p, beta).unwrap();
        assert!((1.0 / (1.0 + math::exp(-beta * gap)) - p).abs() < 1e-12);
        // the other sign reading, ln((1-p)/p)/beta, is negative and would
        // leave the lower state below p
        let other = math::ln((1.0 - p) / p) / beta;
        assert!((other + gap).abs() < 1e-15);
        assert!(1.0 / (1.0 + math::exp(-beta * other)) < 0.5);
    }

    #[test]
    fn feature_dot_is_contact_energy() {
        let confs = enumerate_compact_conformations(4, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for c in confs.iter().take(10) {
            let cm = c.contact_map();
            let s = Sequence::new((0..16).map(|_| rng.gen_range(0..4u8)).collect());
            let e = random_epsilon(4, &mut rng);
            let n = contact_type_vector(&cm, &s, 4).unwrap();
            assert_eq!(n.total() as usize, cm.contact_count());
            let lin = EpsilonVector::from_matrix(&e).dot(&n.as_f64());
            assert!((lin - contact_energy(&cm, &s, &e).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn homopolymer_uses_one_component() {
        let cm = enumerate_compact_conformations(4, false).unwrap()[0].contact_map();
        let n = contact_type_vector(&cm, &Sequence::new(vec![2; 16]), 3).unwrap();
        let k = pair_index(3, 2, 2);
        assert_eq!(n.counts()[k], 9);
        assert_eq!(n.total(), 9);
    }

    #[test]
    fn perceptron_hand_iteration() {
        let eps = EpsilonVector::new(2, vec![0.0; 3]).unwrap();
        let cons = [LinearConstraint {
            x: vec![1.0, 0.0, 0.0],
            c: -1.0,
        }];
        let out = perceptron_refine(&eps, &cons, 0.5, 100).unwrap();
        assert_eq!(out.updates, 2);
        assert!(out.satisfied);
        assert_eq!(out.epsilon.values(), &[1.0, 0.0, 0.0]);
        let again = perceptron_refine(&out.epsilon, &cons, 0.5, 100).unwrap();
        assert_eq!(again.updates, 0);
        assert_eq!(again.epsilon, out.epsilon);
        assert_eq!(perceptron_refine(&eps, &[], 0.5, 1).unwrap().epsilon, eps);
    }

    #[test]
    fn infeasible_returns_least_violating() {
        let eps = EpsilonVector::new(1, vec![0.0]).unwrap();
        let cons = [
            LinearConstraint { x: vec![1.0], c: -1.0 },
            LinearConstraint { x: vec![-1.0], c: -1.0 },
        ];
        let out = perceptron_refine(&eps, &cons, 0.25, 50).unwrap();
        assert!(!out.satisfied);
        assert_eq!(out.updates, 50);
        assert!((out.total_violation - 2.0).abs() < 1e-12);
    }

    // Two hand-built six-site maps with one contact each.
    #[test]
    fn toy_constraints_by_hand() {
        let a = ContactMap::from_pairs(6, [(0, 3)]).unwrap();
        let b = ContactMap::from_pairs(6, [(1, 4)]).unwrap();
        let engine = FoldEngine::new(&[a, b]).unwrap();
        // pair (0, 3) is type (0, 0), pair (1, 4) is type (1, 0)
        let s: Sequence = "1 2 2 1 1 2".parse().unwrap();
        let truth = EnergyMatrix::new(2, vec![-1.0, 0.0, 0.0, 0.0]).unwrap();
        let cfg = OracleConfig::new(3.0, 0.8).unwrap();
        let fold = engine.fold(&s, &truth, cfg).unwrap();
        assert_eq!(fold.native(), Some(0));
        // target 1 loses to structure 0; S is foldable (p = 1 / (1 + e^-3))
        let h = [FoldedSequence {
            sequence: &s,
            fold: &fold,
        }];
        let cons = build_constraints(&engine, &h, 1, 2, cfg, 10).unwrap();
        let gap = min_gap(0.8, 3.0).unwrap();
        // n(0,S) = (1,0,0), n(1,S) = (0,1,0)
        assert_eq!(
            cons,
            [
                LinearConstraint {
                    x: vec![-1.0, 1.0, 0.0],
                    c: 0.0
                },
                LinearConstraint {
                    x: vec![-1.0, 1.0, 0.0],
                    c: -gap
                },
            ]
        );
        let twice = [h[0].clone(), h[0].clone()];
        assert_eq!(build_constraints(&engine, &twice, 1, 2, cfg, 10).unwrap(), cons);
        let truth_vec = EpsilonVector::from_matrix(&truth);
        assert!(cons.iter().all(|c| c.is_satisfied(&truth_vec)));
    }
}
