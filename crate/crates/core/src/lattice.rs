//! Compact conformations on the square lattice, their symmetry reduction and
//! contact maps.
//!
//! A compact conformation of side `L` is a Hamiltonian path of the `L × L`
//! grid. Two paths are considered the same structure when one maps onto the
//! other under one of the eight point symmetries of the square combined with
//! optional chain reversal.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest side enumerated without an explicit override.
pub const MAX_ENUMERATION_SIDE: usize = 6;

/// Hard ceiling for any enumeration; cell sets are kept in a `u64`.
const MAX_BITMASK_SIDE: usize = 8;

/// A lattice site. Ordering is lexicographic on `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Site {
    pub x: u8,
    pub y: u8,
}

impl Site {
    pub const fn new(x: u8, y: u8) -> Self {
        Site { x, y }
    }

    fn is_adjacent(self, other: Site) -> bool {
        let dx = (self.x as i16 - other.x as i16).abs();
        let dy = (self.y as i16 - other.y as i16).abs();
        dx + dy == 1
    }
}

/// A compact self-avoiding chain filling an `L × L` grid.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Site>", into = "Vec<Site>")]
pub struct Conformation {
    side: u8,
    sites: Vec<Site>,
}

impl Conformation {
    /// Validates a site list: `N = L²` distinct in-range sites joined by unit
    /// steps.
    pub fn new(sites: Vec<Site>) -> Result<Self> {
        let n = sites.len();
        let side = integer_sqrt(n).ok_or_else(|| {
            invalid(alloc::format!("chain of {n} sites does not fill a square lattice"))
        })?;
        if side < 1 || side > u8::MAX as usize {
            return Err(invalid("empty conformation"));
        }
        let mut seen = vec![false; n];
        for (k, s) in sites.iter().enumerate() {
            if s.x as usize >= side || s.y as usize >= side {
                return Err(invalid(alloc::format!(
                    "site {k} ({},{}) lies outside the {side}x{side} grid",
                    s.x, s.y
                )));
            }
            let cell = s.y as usize * side + s.x as usize;
            if seen[cell] {
                return Err(invalid(alloc::format!(
                    "site ({},{}) visited twice",
                    s.x, s.y
                )));
            }
            seen[cell] = true;
        }
        for (k, w) in sites.windows(2).enumerate() {
            if !w[0].is_adjacent(w[1]) {
                return Err(invalid(alloc::format!(
                    "sites {k} and {} are not lattice neighbours",
                    k + 1
                )));
            }
        }
        Ok(Conformation {
            side: side as u8,
            sites,
        })
    }

    /// Boustrophedon path: row 0 left to right, row 1 right to left, ...
    pub fn serpentine(side: usize) -> Result<Self> {
        if side == 0 || side > u8::MAX as usize {
            return Err(invalid("side must be in 1..=255"));
        }
        let mut sites = Vec::with_capacity(side * side);
        for y in 0..side {
            for k in 0..side {
                let x = if y % 2 == 0 { k } else { side - 1 - k };
                sites.push(Site::new(x as u8, y as u8));
            }
        }
        Conformation::new(sites)
    }

    pub fn side(&self) -> usize {
        self.side as usize
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn reversed(&self) -> Self {
        let mut sites = self.sites.clone();
        sites.reverse();
        Conformation {
            side: self.side,
            sites,
        }
    }

    /// Image under point symmetry `t` (0..8) of the square.
    pub fn transformed(&self, t: usize) -> Self {
        let sites = self
            .sites
            .iter()
            .map(|&s| transform_site(s, self.side, t))
            .collect();
        Conformation {
            side: self.side,
            sites,
        }
    }

    pub fn contact_map(&self) -> ContactMap {
        contact_map(self)
    }
}

impl From<Conformation> for Vec<Site> {
    fn from(c: Conformation) -> Self {
        c.sites
    }
}

impl TryFrom<Vec<Site>> for Conformation {
    type Error = Error;

    fn try_from(sites: Vec<Site>) -> Result<Self> {
        Conformation::new(sites)
    }
}

impl fmt::Display for Conformation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, s) in self.sites.iter().enumerate() {
            if k > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{},{}", s.x, s.y)?;
        }
        Ok(())
    }
}

impl FromStr for Conformation {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let mut sites = Vec::new();
        for tok in line.split_whitespace() {
            let (x, y) = tok
                .split_once(',')
                .ok_or_else(|| Error::Parse(alloc::format!("expected \"x,y\", found {tok:?}")))?;
            let x = x
                .trim()
                .parse::<u8>()
                .map_err(|e| Error::Parse(alloc::format!("bad x in {tok:?}: {e}")))?;
            let y = y
                .trim()
                .parse::<u8>()
                .map_err(|e| Error::Parse(alloc::format!("bad y in {tok:?}: {e}")))?;
            sites.push(Site::new(x, y));
        }
        Conformation::new(sites)
    }
}

fn integer_sqrt(n: usize) -> Option<usize> {
    let mut r = 0usize;
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    (r * r == n).then_some(r)
}

fn transform_site(s: Site, side: u8, t: usize) -> Site {
    let m = side - 1;
    let (x, y) = (s.x, s.y);
    let (nx, ny) = match t {
        0 => (x, y),
        1 => (m - y, x),
        2 => (m - x, m - y),
        3 => (y, m - x),
        4 => (m - x, y),
        5 => (x, m - y),
        6 => (y, x),
        7 => (m - y, m - x),
        _ => unreachable!("the square has eight point symmetries"),
    };
    Site::new(nx, ny)
}

/// Iterates image `t` of `sites`; `t >= 8` also reverses the chain.
fn image(sites: &[Site], side: u8, t: usize) -> impl Iterator<Item = Site> + '_ {
    let n = sites.len();
    (0..n).map(move |k| {
        let idx = if t >= 8 { n - 1 - k } else { k };
        transform_site(sites[idx], side, t % 8)
    })
}

/// Lexicographically smallest image under the 16 symmetry operations.
pub fn canonical_form(c: &Conformation) -> Conformation {
    let mut best = c.sites.clone();
    let mut candidate = Vec::with_capacity(best.len());
    for t in 1..16 {
        candidate.clear();
        candidate.extend(image(&c.sites, c.side, t));
        if candidate < best {
            core::mem::swap(&mut best, &mut candidate);
        }
    }
    Conformation {
        side: c.side,
        sites: best,
    }
}

fn is_canonical(sites: &[Site], side: u8) -> bool {
    (1..16).all(|t| {
        for (a, b) in image(sites, side, t).zip(sites.iter()) {
            match a.cmp(b) {
                core::cmp::Ordering::Less => return false,
                core::cmp::Ordering::Greater => return true,
                core::cmp::Ordering::Equal => {}
            }
        }
        true
    })
}

/// All compact conformations of side `side`, one canonical representative per
/// symmetry class, sorted lexicographically.
///
/// Sides above [`MAX_ENUMERATION_SIDE`] are refused unless `allow_large` is
/// set; sides above 8 are always refused.
pub fn enumerate_compact_conformations(side: usize, allow_large: bool) -> Result<Vec<Conformation>> {
    if side < 2 {
        return Err(invalid(alloc::format!("lattice side must be at least 2, got {side}")));
    }
    if side > MAX_BITMASK_SIDE || (side > MAX_ENUMERATION_SIDE && !allow_large) {
        return Err(Error::ResourceLimit {
            what: String::from("compact conformation enumeration side"),
            required: side as u128,
            limit: if allow_large {
                MAX_BITMASK_SIDE as u128
            } else {
                MAX_ENUMERATION_SIDE as u128
            },
        });
    }
    let mut out = Vec::new();
    for_each_directed_path(side, |cells| {
        let sites: Vec<Site> = cells
            .iter()
            .map(|&c| Site::new((c as usize % side) as u8, (c as usize / side) as u8))
            .collect();
        if is_canonical(&sites, side as u8) {
            out.push(Conformation {
                side: side as u8,
                sites,
            });
        }
    });
    out.sort();
    Ok(out)
}

/// Calls `visit` with every directed Hamiltonian path of the grid, as cell
/// indices `y * side + x`. Used by the enumerator and by tests that check
/// orbit coverage.
pub fn for_each_directed_path(side: usize, mut visit: impl FnMut(&[u8])) {
    assert!((1..=MAX_BITMASK_SIDE).contains(&side));
    let n = side * side;
    let full: u64 = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let neighbours: Vec<u64> = (0..n)
        .map(|c| {
            let (x, y) = (c % side, c / side);
            let mut m = 0u64;
            if x > 0 {
                m |= 1 << (c - 1);
            }
            if x + 1 < side {
                m |= 1 << (c + 1);
            }
            if y > 0 {
                m |= 1 << (c - side);
            }
            if y + 1 < side {
                m |= 1 << (c + side);
            }
            m
        })
        .collect();
    let search = PathSearch {
        full,
        neighbours: &neighbours,
    };
    let mut path = Vec::with_capacity(n);
    for start in 0..n {
        path.clear();
        path.push(start as u8);
        search.extend(&mut path, 1u64 << start, &mut visit);
    }
}

struct PathSearch<'a> {
    full: u64,
    neighbours: &'a [u64],
}

impl PathSearch<'_> {
    fn extend(&self, path: &mut Vec<u8>, visited: u64, visit: &mut impl FnMut(&[u8])) {
        if visited == self.full {
            visit(path);
            return;
        }
        let head = *path.last().expect("path is never empty") as usize;
        let mut options = self.neighbours[head] & !visited;
        while options != 0 {
            let next = options.trailing_zeros() as usize;
            options &= options - 1;
            let v = visited | (1 << next);
            if self.viable(next, v) {
                path.push(next as u8);
                self.extend(path, v, visit);
                path.pop();
            }
        }
    }

    /// The unvisited region must be connected, reachable from the head, and
    /// contain at most one forced end point.
    fn viable(&self, head: usize, visited: u64) -> bool {
        let remaining = self.full & !visited;
        if remaining == 0 {
            return true;
        }
        let entry = self.neighbours[head] & remaining;
        if entry == 0 {
            return false;
        }
        let mut dead_ends = 0;
        let mut bits = remaining;
        while bits != 0 {
            let c = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            let mut degree = (self.neighbours[c] & remaining).count_ones();
            if self.neighbours[c] & (1 << head) != 0 {
                degree += 1;
            }
            if degree <= 1 {
                dead_ends += 1;
                if dead_ends > 1 {
                    return false;
                }
            }
        }
        let start = entry.trailing_zeros();
        let mut seen = 1u64 << start;
        let mut frontier = seen;
        while frontier != 0 {
            let mut next = 0u64;
            let mut f = frontier;
            while f != 0 {
                let c = f.trailing_zeros() as usize;
                f &= f - 1;
                next |= self.neighbours[c];
            }
            next &= remaining & !seen;
            seen |= next;
            frontier = next;
        }
        seen == remaining
    }
}

/// Non-bonded lattice contacts of a conformation, stored as sorted pairs
/// `(i, j)` with `j > i + 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactMap {
    n: usize,
    pairs: Vec<(u16, u16)>,
}

impl ContactMap {
    /// Builds a map from explicit pairs, checking the bonded-neighbour and
    /// lattice-parity exclusions.
    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut out: Vec<(u16, u16)> = Vec::new();
        for (a, b) in pairs {
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            if j >= n {
                return Err(invalid(alloc::format!("contact ({i},{j}) out of range for n={n}")));
            }
            if j - i < 2 {
                return Err(invalid(alloc::format!("({i},{j}) is not a non-bonded pair")));
            }
            if (j - i) % 2 == 0 {
                return Err(invalid(alloc::format!(
                    "({i},{j}) has even chain separation and cannot touch on a square lattice"
                )));
            }
            out.push((i as u16, j as u16));
        }
        out.sort_unstable();
        out.dedup();
        Ok(ContactMap { n, pairs: out })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pairs(&self) -> impl ExactSizeIterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().map(|&(i, j)| (i as usize, j as usize))
    }

    pub fn contact_count(&self) -> usize {
        self.pairs.len()
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        let key = if i < j { (i as u16, j as u16) } else { (j as u16, i as u16) };
        self.pairs.binary_search(&key).is_ok()
    }

    /// Row-major `n × n` 0/1 matrix.
    pub fn to_dense(&self) -> Vec<u8> {
        let mut m = vec![0u8; self.n * self.n];
        for &(i, j) in &self.pairs {
            m[i as usize * self.n + j as usize] = 1;
            m[j as usize * self.n + i as usize] = 1;
        }
        m
    }
}

pub fn contact_map(c: &Conformation) -> ContactMap {
    let side = c.side();
    let n = c.len();
    let mut index = vec![usize::MAX; n];
    for (k, s) in c.sites.iter().enumerate() {
        index[s.y as usize * side + s.x as usize] = k;
    }
    let mut pairs = Vec::new();
    for (i, s) in c.sites.iter().enumerate() {
        let (x, y) = (s.x as usize, s.y as usize);
        // right and up neighbours only, so every lattice edge is seen once
        for (nx, ny) in [(x + 1, y), (x, y + 1)] {
            if nx < side && ny < side {
                let j = index[ny * side + nx];
                let (a, b) = if i < j { (i, j) } else { (j, i) };
                if b - a > 1 {
                    pairs.push((a as u16, b as u16));
                }
            }
        }
    }
    pairs.sort_unstable();
    ContactMap { n, pairs }
}

/// Entrywise mean of a set of contact maps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AverageContactMap {
    n: usize,
    values: Vec<f64>,
}

impl AverageContactMap {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

pub fn average_contact_map(db: &[ContactMap]) -> Result<AverageContactMap> {
    let first = db.first().ok_or_else(|| invalid("average of an empty structure database"))?;
    let n = first.n;
    if let Some(bad) = db.iter().find(|c| c.n != n) {
        return Err(invalid(alloc::format!(
            "mixed chain lengths in database: {n} and {}",
            bad.n
        )));
    }
    let mut counts = vec![0u32; n * n];
    for cm in db {
        for &(i, j) in &cm.pairs {
            counts[i as usize * n + j as usize] += 1;
        }
    }
    let total = db.len() as f64;
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = counts[i * n + j] as f64 / total;
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    Ok(AverageContactMap { n, values })
}

/// Markov-chain sampler of compact conformations by backbite moves.
///
/// A move attaches a chain end to one of its free lattice neighbours and cuts
/// the bond that would otherwise close a loop. Used to estimate the reference
/// contact map on lattices too large to enumerate.
pub struct BackbiteSampler {
    side: usize,
    path: Vec<Site>,
    index: Vec<usize>,
}

impl BackbiteSampler {
    pub fn new(start: Conformation) -> Self {
        let side = start.side();
        let path = start.sites;
        let mut index = vec![0; path.len()];
        for (k, s) in path.iter().enumerate() {
            index[s.y as usize * side + s.x as usize] = k;
        }
        BackbiteSampler { side, path, index }
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let n = self.path.len();
        if n < 3 {
            return;
        }
        let at_head = rng.gen_bool(0.5);
        let end = if at_head { self.path[0] } else { self.path[n - 1] };
        // fixed four-way proposal with rejection keeps the move symmetric,
        // so the chain samples compact conformations uniformly
        let (dx, dy) = [(1, 0), (-1, 0), (0, 1), (0, -1)][rng.gen_range(0..4)];
        let (nx, ny) = (end.x as i32 + dx, end.y as i32 + dy);
        if nx < 0 || ny < 0 || nx >= self.side as i32 || ny >= self.side as i32 {
            return;
        }
        let k = self.index[ny as usize * self.side + nx as usize];
        if (at_head && k == 1) || (!at_head && k == n - 2) {
            return;
        }
        if at_head {
            self.path[..k].reverse();
            for p in 0..k {
                let s = self.path[p];
                self.index[s.y as usize * self.side + s.x as usize] = p;
            }
        } else {
            self.path[k + 1..].reverse();
            for p in k + 1..n {
                let s = self.path[p];
                self.index[s.y as usize * self.side + s.x as usize] = p;
            }
        }
    }

    pub fn current(&self) -> Conformation {
        Conformation {
            side: self.side as u8,
            sites: self.path.clone(),
        }
    }

    /// Draws `count` conformations, `moves_between` backbite moves apart,
    /// after an initial burn-in of the same length.
    pub fn sample<R: Rng + ?Sized>(
        &mut self,
        count: usize,
        moves_between: usize,
        rng: &mut R,
    ) -> Vec<Conformation> {
        for _ in 0..moves_between {
            self.step(rng);
        }
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            for _ in 0..moves_between {
                self.step(rng);
            }
            out.push(self.current());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hook() -> Conformation {
        "0,0 0,1 1,1 1,0".parse().unwrap()
    }

    fn spiral3() -> Conformation {
        "0,0 1,0 2,0 2,1 2,2 1,2 0,2 0,1 1,1".parse().unwrap()
    }

    #[test]
    fn l2_has_a_single_class() {
        let all = enumerate_compact_conformations(2, false).unwrap();
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].len(), 4);
        let mut directed = 0;
        for_each_directed_path(2, |_| directed += 1);
        assert_eq!(directed, 8);
    }

    #[test]
    fn side_guards() {
        assert!(matches!(
            enumerate_compact_conformations(1, false),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            enumerate_compact_conformations(7, false),
            Err(Error::ResourceLimit { .. })
        ));
        assert!(matches!(
            enumerate_compact_conformations(9, true),
            Err(Error::ResourceLimit { .. })
        ));
    }

    #[test]
    fn rejects_invalid_chains() {
        assert!("0,0 1,1 0,1 1,0".parse::<Conformation>().is_err());
        assert!("0,0 0,1 0,0 1,0".parse::<Conformation>().is_err());
        assert!("0,0 0,1 1,1".parse::<Conformation>().is_err());
        assert!("0,0 0,1 1,1 2,1".parse::<Conformation>().is_err());
        assert!("0;0 0,1 1,1 1,0".parse::<Conformation>().is_err());
    }

    #[test]
    fn hook_contact() {
        let cm = hook().contact_map();
        assert_eq!(cm.pairs().collect::<Vec<_>>(), [(0, 3)]);
    }

    #[test]
    fn spiral_contacts_match_pair_scan() {
        let c = spiral3();
        let cm = c.contact_map();
        let s = c.sites();
        let mut expected = Vec::new();
        for i in 0..s.len() {
            for j in (i + 2)..s.len() {
                let dx = s[i].x as i32 - s[j].x as i32;
                let dy = s[i].y as i32 - s[j].y as i32;
                if dx * dx + dy * dy == 1 {
                    expected.push((i, j));
                }
            }
        }
        assert_eq!(cm.pairs().collect::<Vec<_>>(), expected);
        assert_eq!(cm.contact_count(), 4);
    }

    #[test]
    fn canonical_form_is_orbit_invariant() {
        let c = spiral3();
        let canon = canonical_form(&c);
        assert_eq!(canonical_form(&canon), canon);
        assert_eq!(canonical_form(&c.transformed(1)), canon);
        assert_eq!(canonical_form(&c.reversed()), canon);
        for t in 0..8 {
            assert_eq!(canonical_form(&c.transformed(t).reversed()), canon);
        }
    }

    #[test]
    fn reversal_mirrors_contact_indices() {
        let c = spiral3();
        let n = c.len();
        let a = c.contact_map();
        let b = c.reversed().contact_map();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(b.get(i, j), a.get(n - 1 - i, n - 1 - j));
            }
        }
    }

    #[test]
    fn every_directed_path_has_a_representative() {
        for side in 2..=4 {
            let reps: BTreeSet<Conformation> =
                enumerate_compact_conformations(side, false).unwrap().into_iter().collect();
            let mut hits = BTreeSet::new();
            for_each_directed_path(side, |cells| {
                let sites = cells
                    .iter()
                    .map(|&c| Site::new((c as usize % side) as u8, (c as usize / side) as u8))
                    .collect();
                let conf = Conformation::new(sites).unwrap();
                let canon = canonical_form(&conf);
                assert!(reps.contains(&canon));
                hits.insert(canon);
            });
            assert_eq!(hits.len(), reps.len());
        }
    }

    #[test]
    fn average_map_errors() {
        assert!(average_contact_map(&[]).is_err());
        let a = hook().contact_map();
        let b = spiral3().contact_map();
        assert!(average_contact_map(&[a, b]).is_err());
    }

    #[test]
    fn from_pairs_enforces_exclusions() {
        assert!(ContactMap::from_pairs(4, [(0, 1)]).is_err());
        assert!(ContactMap::from_pairs(5, [(0, 2)]).is_err());
        assert!(ContactMap::from_pairs(4, [(0, 4)]).is_err());
        let cm = ContactMap::from_pairs(4, [(3, 0)]).unwrap();
        assert!(cm.get(0, 3) && cm.get(3, 0));
    }

    #[test]
    fn backbite_keeps_conformations_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut sampler = BackbiteSampler::new(Conformation::serpentine(5).unwrap());
        for c in sampler.sample(50, 40, &mut rng) {
            Conformation::new(c.sites().to_vec()).unwrap();
        }
    }
}
