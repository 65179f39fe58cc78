use super::{LatticeConfig, Point, MAX_REGION_SITES};
use crate::{Error, Result};
use std::collections::BTreeSet;
use std::io::Write;

/// A finite subset of `Z^{nd}` with a stable site-index map.
///
/// Sites are kept in ascending lexicographic order; the index of a site in
/// that order is its row/column in every operator restricted to the region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    lattice: LatticeConfig,
    sites: Vec<Point>,
}

impl Region {
    /// Build from arbitrary points; sorts, dedupes, and checks the ceiling.
    pub fn from_points(lattice: LatticeConfig, points: Vec<Point>) -> Result<Self> {
        for p in &points {
            if p.lattice() != lattice {
                return Err(Error::DimensionMismatch("mixed lattice configs".into()));
            }
            if !p.is_lattice_site() {
                return Err(Error::InvalidParameter(format!(
                    "region site {p} is not a lattice point"
                )));
            }
        }
        let set: BTreeSet<Point> = points.into_iter().collect();
        if set.len() > MAX_REGION_SITES {
            return Err(Error::EnumerationCeiling(set.len(), MAX_REGION_SITES));
        }
        Ok(Region {
            lattice,
            sites: set.into_iter().collect(),
        })
    }

    pub fn lattice(&self) -> LatticeConfig {
        self.lattice
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[Point] {
        &self.sites
    }

    pub fn site(&self, i: usize) -> &Point {
        &self.sites[i]
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.sites.binary_search(p).is_ok()
    }

    pub fn index_of(&self, p: &Point) -> Option<usize> {
        self.sites.binary_search(p).ok()
    }

    pub fn is_subset_of(&self, other: &Region) -> bool {
        self.sites.iter().all(|p| other.contains(p))
    }

    /// Set union (same lattice config).
    pub fn union(&self, other: &Region) -> Result<Region> {
        let mut pts = self.sites.clone();
        pts.extend(other.sites.iter().cloned());
        Region::from_points(self.lattice, pts)
    }

    pub fn intersects(&self, other: &Region) -> bool {
        let (small, big) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.sites.iter().any(|p| big.contains(p))
    }

    /// All single-particle sites appearing in any coordinate block, as
    /// actual integer coordinates, sorted and deduped.
    pub fn single_particle_support(&self) -> Vec<Vec<i64>> {
        let mut set: BTreeSet<Vec<i64>> = BTreeSet::new();
        for p in &self.sites {
            for i in 0..self.lattice.n {
                set.insert(p.particle(i).iter().map(|c| c / 2).collect());
            }
        }
        set.into_iter().collect()
    }

    /// Dump: header `n d count`, then one site per line, coordinates as
    /// space-separated integers in lexicographic site order.
    pub fn write_dump<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "{} {} {}", self.lattice.n, self.lattice.d, self.len())?;
        for p in &self.sites {
            let coords: Vec<String> = p.site_coords().iter().map(|c| c.to_string()).collect();
            writeln!(w, "{}", coords.join(" "))?;
        }
        Ok(())
    }

    pub fn dump_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_dump(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("dump is ASCII")
    }
}

/// Boundary data for `inner ⊆ outer`: the edge set and the two vertex sets.
#[derive(Debug, Clone)]
pub struct Boundary {
    /// Edges `(u, v)` with `u` inside, `v` outside, `‖u−v‖₁ = 1`.
    pub edges: Vec<(Point, Point)>,
    /// Inner boundary `∂₋`: inner endpoints of boundary edges.
    pub inner_sites: Vec<Point>,
    /// Outer boundary `∂₊`: outer endpoints of boundary edges.
    pub outer_sites: Vec<Point>,
}

/// Compute `(∂, ∂₋, ∂₊)` of `inner` relative to `outer`
/// (`None` means the ambient lattice `Z^{nd}`).
pub fn boundary_sets(inner: &Region, outer: Option<&Region>) -> Result<Boundary> {
    if let Some(out) = outer {
        if !inner.is_subset_of(out) {
            return Err(Error::Precondition("inner region not inside outer".into()));
        }
    }
    let nd = inner.lattice().nd();
    let mut edges = Vec::new();
    let mut minus: BTreeSet<Point> = BTreeSet::new();
    let mut plus: BTreeSet<Point> = BTreeSet::new();
    for u in inner.sites() {
        for axis in 0..nd {
            for dir in [-1i64, 1] {
                let v = u.step(axis, dir);
                if inner.contains(&v) {
                    continue;
                }
                if let Some(out) = outer {
                    if !out.contains(&v) {
                        continue;
                    }
                }
                minus.insert(u.clone());
                plus.insert(v.clone());
                edges.push((u.clone(), v));
            }
        }
    }
    Ok(Boundary {
        edges,
        inner_sites: minus.into_iter().collect(),
        outer_sites: plus.into_iter().collect(),
    })
}
