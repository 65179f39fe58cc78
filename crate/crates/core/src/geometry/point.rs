use super::{Half, MAX_PARTICLES};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Particle count `n` and single-particle dimension `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LatticeConfig {
    pub n: usize,
    pub d: usize,
}

impl LatticeConfig {
    pub fn new(n: usize, d: usize) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidParameter("n and d must be ≥ 1".into()));
        }
        if n > MAX_PARTICLES {
            return Err(Error::InvalidParameter(format!(
                "n = {n} exceeds the permutation ceiling {MAX_PARTICLES}"
            )));
        }
        if n * d > 8 {
            return Err(Error::InvalidParameter(format!(
                "nd = {} exceeds the enumeration ceiling 8",
                n * d
            )));
        }
        Ok(LatticeConfig { n, d })
    }

    pub fn nd(&self) -> usize {
        self.n * self.d
    }
}

/// A point of `R^{nd}` on the half-integer grid (coordinates stored doubled).
///
/// Lattice configurations are the points whose coordinates are all even in
/// the doubled representation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Point {
    lattice: LatticeConfig,
    coords: Vec<i64>,
}

impl Point {
    /// Point from doubled coordinates (length must be `n·d`).
    pub fn from_doubled(lattice: LatticeConfig, coords: Vec<i64>) -> Result<Self> {
        if coords.len() != lattice.nd() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} coordinates, got {}",
                lattice.nd(),
                coords.len()
            )));
        }
        Ok(Point { lattice, coords })
    }

    /// Lattice site from actual integer coordinates.
    pub fn site(lattice: LatticeConfig, coords: &[i64]) -> Result<Self> {
        Point::from_doubled(lattice, coords.iter().map(|&c| 2 * c).collect())
    }

    /// Point from half-grid scalars.
    pub fn from_halves(lattice: LatticeConfig, coords: &[Half]) -> Result<Self> {
        Point::from_doubled(lattice, coords.iter().map(|h| h.doubled()).collect())
    }

    pub fn lattice(&self) -> LatticeConfig {
        self.lattice
    }

    /// Doubled coordinates, all `n·d` of them.
    pub fn doubled(&self) -> &[i64] {
        &self.coords
    }

    /// Doubled coordinates of particle `i` (a block of `d` entries).
    pub fn particle(&self, i: usize) -> &[i64] {
        let d = self.lattice.d;
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn is_lattice_site(&self) -> bool {
        self.coords.iter().all(|c| c % 2 == 0)
    }

    /// Actual integer coordinates; panics off the integer lattice.
    pub fn site_coords(&self) -> Vec<i64> {
        assert!(self.is_lattice_site(), "point is not a lattice site");
        self.coords.iter().map(|c| c / 2).collect()
    }

    /// Apply a particle permutation: block `i` of the result is block
    /// `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Point {
        let d = self.lattice.d;
        let mut coords = Vec::with_capacity(self.coords.len());
        for &p in perm {
            coords.extend_from_slice(&self.coords[p * d..(p + 1) * d]);
        }
        Point {
            lattice: self.lattice,
            coords,
        }
    }

    /// Neighbor one lattice step away along axis `axis` (`±1`).
    pub fn step(&self, axis: usize, dir: i64) -> Point {
        let mut coords = self.coords.clone();
        coords[axis] += 2 * dir;
        Point {
            lattice: self.lattice,
            coords,
        }
    }

    /// Graph (1-norm) distance on the doubled grid.
    pub fn one_norm_doubled(&self, other: &Point) -> i64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = (0..self.lattice.n)
            .map(|i| {
                let block: Vec<String> = self
                    .particle(i)
                    .iter()
                    .map(|&c| Half::from_doubled(c).to_string())
                    .collect();
                format!("({})", block.join(","))
            })
            .collect();
        write!(f, "{}", parts.join(""))
    }
}

/// Which (pseudo-)distance to use on `Z^{nd}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DistanceKind {
    /// Sup norm over all `n·d` coordinates.
    Infinity,
    /// Minimum over particle permutations of the sup norm.
    Symmetrized,
    /// Two-sided max–min distance between the particle position sets.
    Hausdorff,
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    assert!(n <= MAX_PARTICLES, "permutation ceiling exceeded");
    let mut items: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    permute(&mut items, 0, &mut out);
    out.sort();
    out
}

fn permute(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == items.len() {
        out.push(items.clone());
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, out);
        items.swap(k, i);
    }
}

fn sup_doubled(a: &[i64], b: &[i64]) -> i64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .max()
        .unwrap_or(0)
}

/// Exact doubled distance (twice the real value) between two points.
pub fn dist_doubled(kind: DistanceKind, a: &Point, b: &Point) -> Result<i64> {
    if a.lattice() != b.lattice() {
        return Err(Error::DimensionMismatch(
            "points from different lattice configs".into(),
        ));
    }
    let n = a.lattice().n;
    Ok(match kind {
        DistanceKind::Infinity => sup_doubled(a.doubled(), b.doubled()),
        DistanceKind::Symmetrized => permutations(n)
            .iter()
            .map(|p| sup_doubled(a.permuted(p).doubled(), b.doubled()))
            .min()
            .unwrap(),
        DistanceKind::Hausdorff => {
            let dir = |from: &Point, to: &Point| -> i64 {
                (0..n)
                    .map(|i| {
                        (0..n)
                            .map(|j| sup_doubled(from.particle(i), to.particle(j)))
                            .min()
                            .unwrap()
                    })
                    .max()
                    .unwrap()
            };
            dir(a, b).max(dir(b, a))
        }
    })
}

/// Exact distance as a half-grid scalar.
pub fn distance(kind: DistanceKind, a: &Point, b: &Point) -> Result<Half> {
    Ok(Half::from_doubled(dist_doubled(kind, a, b)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(n: usize, d: usize, coords: &[i64]) -> Point {
        Point::site(LatticeConfig::new(n, d).unwrap(), coords).unwrap()
    }

    #[test]
    fn norm_distance() {
        // d=1, n=2: dist_inf(((0),(0)), ((2),(3))) = 3
        let a = pt(2, 1, &[0, 0]);
        let b = pt(2, 1, &[2, 3]);
        assert_eq!(distance(DistanceKind::Infinity, &a, &b).unwrap(), Half::int(3));
    }

    #[test]
    fn symmetrized_collapses_swaps() {
        let a = pt(2, 1, &[0, 3]);
        let b = pt(2, 1, &[3, 0]);
        assert_eq!(
            distance(DistanceKind::Symmetrized, &a, &b).unwrap(),
            Half::int(0)
        );
        assert_eq!(distance(DistanceKind::Infinity, &a, &b).unwrap(), Half::int(3));
    }

    #[test]
    fn hausdorff_differs_from_symmetrized_for_three_particles() {
        // a=(0,0,5), b=(0,5,5): multisets {0,0,5} vs {0,5,5} coincide as sets.
        let a = pt(3, 1, &[0, 0, 5]);
        let b = pt(3, 1, &[0, 5, 5]);
        assert_eq!(distance(DistanceKind::Hausdorff, &a, &b).unwrap(), Half::int(0));
        assert_eq!(
            distance(DistanceKind::Symmetrized, &a, &b).unwrap(),
            Half::int(5)
        );
    }

    #[test]
    fn half_integer_centers_are_exact() {
        let lat = LatticeConfig::new(1, 1).unwrap();
        let c = Point::from_doubled(lat, vec![1]).unwrap(); // x = 1/2
        let y = Point::site(lat, &[1]).unwrap();
        assert_eq!(dist_doubled(DistanceKind::Infinity, &c, &y).unwrap(), 1);
    }

    #[test]
    fn permutation_count() {
        assert_eq!(permutations(3).len(), 6);
        assert_eq!(permutations(1), vec![vec![0]]);
    }
}
