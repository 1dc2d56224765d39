//! The space of sequences with a fixed composition, in lexicographic order.

use alloc::string::String;
use alloc::vec::Vec;

use crate::energy::{Composition, Sequence};
use crate::error::{Error, Result};

/// Default guard on exhaustive passes over a sequence space.
pub const MAX_EXHAUSTIVE_SEQUENCES: u128 = 10_000_000;

/// All arrangements of a composition, ranked lexicographically.
#[derive(Clone, Debug)]
pub struct SequenceSpace {
    composition: Composition,
    count: u128,
}

impl SequenceSpace {
    pub fn new(composition: Composition) -> Result<Self> {
        let count = multinomial(composition.counts()).ok_or_else(|| Error::ResourceLimit {
            what: String::from("multinomial sequence count"),
            required: u128::MAX,
            limit: u128::MAX,
        })?;
        Ok(SequenceSpace { composition, count })
    }

    pub fn composition(&self) -> &Composition {
        &self.composition
    }

    pub fn count(&self) -> u128 {
        self.count
    }

    /// Fails with a resource-limit error carrying the count when the space
    /// exceeds `limit`.
    pub fn ensure_at_most(&self, limit: u128) -> Result<()> {
        if self.count > limit {
            return Err(Error::ResourceLimit {
                what: alloc::format!("exhaustive pass over composition {}", self.composition),
                required: self.count,
                limit,
            });
        }
        Ok(())
    }

    pub fn unrank(&self, mut rank: u128) -> Option<Sequence> {
        if rank >= self.count {
            return None;
        }
        let mut remaining: Vec<u32> = self.composition.counts().to_vec();
        let mut left = self.composition.total() as u128;
        let mut block = self.count;
        let mut out = Vec::with_capacity(left as usize);
        while left > 0 {
            for (t, r) in remaining.iter_mut().enumerate() {
                if *r == 0 {
                    continue;
                }
                let with_t = block * *r as u128 / left;
                if rank < with_t {
                    out.push(t as u8);
                    *r -= 1;
                    block = with_t;
                    break;
                }
                rank -= with_t;
            }
            left -= 1;
        }
        Some(Sequence::new(out))
    }

    pub fn rank(&self, seq: &Sequence) -> Option<u128> {
        if !self.composition.matches(seq) {
            return None;
        }
        let mut remaining: Vec<u32> = self.composition.counts().to_vec();
        let mut left = self.composition.total() as u128;
        let mut block = self.count;
        let mut rank = 0u128;
        for &s in seq.residues() {
            for t in 0..s as usize {
                rank += block * remaining[t] as u128 / left;
            }
            block = block * remaining[s as usize] as u128 / left;
            remaining[s as usize] -= 1;
            left -= 1;
        }
        Some(rank)
    }

    /// Calls `visit(rank, residues)` for every rank in `start..end`.
    pub fn for_each_in_range(&self, start: u128, end: u128, mut visit: impl FnMut(u128, &[u8])) {
        let end = end.min(self.count);
        if start >= end {
            return;
        }
        let mut cur = self
            .unrank(start)
            .expect("start is below count")
            .residues()
            .to_vec();
        for rank in start..end {
            visit(rank, &cur);
            next_permutation(&mut cur);
        }
    }

    pub fn iter_range(&self, start: u128, end: u128) -> SequenceIter {
        let end = end.min(self.count);
        let current = if start < end {
            self.unrank(start).map(|s| s.residues().to_vec())
        } else {
            None
        };
        SequenceIter {
            current,
            remaining: end.saturating_sub(start),
        }
    }

    pub fn iter(&self) -> SequenceIter {
        self.iter_range(0, self.count)
    }
}

pub struct SequenceIter {
    current: Option<Vec<u8>>,
    remaining: u128,
}

impl Iterator for SequenceIter {
    type Item = Sequence;

    fn next(&mut self) -> Option<Sequence> {
        if self.remaining == 0 {
            return None;
        }
        let cur = self.current.as_mut()?;
        let out = Sequence::new(cur.clone());
        self.remaining -= 1;
        next_permutation(cur);
        Some(out)
    }
}

/// Rearranges into the next lexicographic permutation; false when `v` was
/// already the last one.
pub fn next_permutation(v: &mut [u8]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// `N! / Π N_m!`, or `None` on `u128` overflow.
pub fn multinomial(counts: &[u32]) -> Option<u128> {
    let mut total: u128 = 1;
    let mut n: u128 = 0;
    for &c in counts {
        for k in 1..=c as u128 {
            n += 1;
            // total * n / k stays integral: it is C(n, k) times earlier factors
            total = total.checked_mul(n)? / k;
        }
    }
    Some(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn multinomial_values() {
        assert_eq!(multinomial(&[5, 5, 6]), Some(2_018_016));
        assert_eq!(multinomial(&[3, 3, 3]), Some(1_680));
        assert_eq!(multinomial(&[16]), Some(1));
        assert_eq!(multinomial(&[5, 4, 2, 5]), Some(30_270_240));
    }

    #[test]
    fn iteration_matches_rank_and_unrank() {
        let space = SequenceSpace::new(Composition::new(vec![2, 1, 2]).unwrap()).unwrap();
        let all: Vec<Sequence> = space.iter().collect();
        assert_eq!(all.len() as u128, space.count());
        for (r, s) in all.iter().enumerate() {
            assert_eq!(space.rank(s), Some(r as u128));
            assert_eq!(space.unrank(r as u128).as_ref(), Some(s));
        }
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        let tail: Vec<Sequence> = space.iter_range(10, 13).collect();
        assert_eq!(tail, all[10..13]);
        assert!(space.unrank(space.count()).is_none());
    }

    #[test]
    fn guard_reports_count() {
        let space = SequenceSpace::new(Composition::new(vec![5, 4, 2, 5]).unwrap()).unwrap();
        match space.ensure_at_most(MAX_EXHAUSTIVE_SEQUENCES) {
            Err(Error::ResourceLimit { required, .. }) => assert_eq!(required, 30_270_240),
            other => panic!("unexpected {other:?}"),
        }
    }
}
