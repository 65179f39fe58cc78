use super::point::{dist_doubled, permutations, DistanceKind, LatticeConfig, Point};
use super::region::Region;
use super::{Half, MAX_REGION_SITES};
use crate::{Error, Result};
use std::collections::BTreeSet;

/// A `∗`-box: all lattice configurations within `side/2` of `center` in the
/// chosen (pseudo-)distance.  Centers live on the half-integer grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoxSpec {
    pub kind: DistanceKind,
    pub center: Point,
    pub side: Half,
}

impl BoxSpec {
    pub fn new(kind: DistanceKind, center: Point, side: Half) -> Result<Self> {
        if side < Half::int(1) {
            return Err(Error::InvalidParameter(format!("box side {side} < 1")));
        }
        Ok(BoxSpec { kind, center, side })
    }

    pub fn lattice(&self) -> LatticeConfig {
        self.center.lattice()
    }

    /// Exact membership: `2·dist ≤ side` on the doubled grid.
    pub fn contains(&self, p: &Point) -> Result<bool> {
        Ok(2 * dist_doubled(self.kind, &self.center, p)? <= self.side.doubled())
    }

    /// Exact membership in the inner-third box of side `L/3`:
    /// `dist ≤ L/6`, i.e. `6·dist ≤ side` on the doubled grid.
    pub fn inner_core_contains(&self, p: &Point) -> Result<bool> {
        Ok(6 * dist_doubled(self.kind, &self.center, p)? <= self.side.doubled())
    }
}

fn floor_div(a: i64, b: i64) -> i64 {
    a.div_euclid(b)
}

fn ceil_div(a: i64, b: i64) -> i64 {
    -((-a).div_euclid(b))
}

/// Integer range of one axis of a plain box: `y` with `|2y − c| ≤ s/2`
/// (`c`, `s` doubled center coordinate and side).
fn axis_range(c: i64, s: i64) -> (i64, i64) {
    (ceil_div(2 * c - s, 4), floor_div(2 * c + s, 4))
}

/// Cartesian product of per-axis integer ranges, as doubled points.
fn product_region(lattice: LatticeConfig, ranges: &[(i64, i64)]) -> Result<Vec<Point>> {
    let mut total: usize = 1;
    for &(lo, hi) in ranges {
        debug_assert!(lo <= hi, "side ≥ 1 guarantees a nonempty axis range");
        total = total.saturating_mul((hi - lo + 1) as usize);
        if total > MAX_REGION_SITES {
            return Err(Error::EnumerationCeiling(total, MAX_REGION_SITES));
        }
    }
    let nd = lattice.nd();
    let mut out = Vec::with_capacity(total);
    let mut cur: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    loop {
        out.push(Point::from_doubled(
            lattice,
            cur.iter().map(|&c| 2 * c).collect(),
        )?);
        let mut axis = nd;
        loop {
            if axis == 0 {
                return Ok(out);
            }
            axis -= 1;
            if cur[axis] < ranges[axis].1 {
                cur[axis] += 1;
                break;
            }
            cur[axis] = ranges[axis].0;
        }
    }
}

fn plain_box_points(center: &Point, side: Half) -> Result<Vec<Point>> {
    let ranges: Vec<(i64, i64)> = center
        .doubled()
        .iter()
        .map(|&c| axis_range(c, side.doubled()))
        .collect();
    product_region(center.lattice(), &ranges)
}

/// Enumerate the exact point set of a `∗`-box.
///
/// Symmetrized boxes are the union of plain boxes over permuted centers;
/// Hausdorff boxes filter the superset `∪_{y ∈ S_x^n} Λ_L(y)` by the exact
/// Hausdorff membership test.
pub fn enumerate_box(spec: &BoxSpec) -> Result<Region> {
    let lat = spec.lattice();
    match spec.kind {
        DistanceKind::Infinity => Region::from_points(lat, plain_box_points(&spec.center, spec.side)?),
        DistanceKind::Symmetrized => {
            let mut pts: BTreeSet<Point> = BTreeSet::new();
            for perm in permutations(lat.n) {
                let c = spec.center.permuted(&perm);
                for p in plain_box_points(&c, spec.side)? {
                    pts.insert(p);
                }
                if pts.len() > MAX_REGION_SITES {
                    return Err(Error::EnumerationCeiling(pts.len(), MAX_REGION_SITES));
                }
            }
            Region::from_points(lat, pts.into_iter().collect())
        }
        DistanceKind::Hausdorff => {
            // Candidate centers: n-tuples drawn from the particle positions
            // of the center configuration.
            let n = lat.n;
            let blocks: Vec<Vec<i64>> = (0..n)
                .map(|i| spec.center.particle(i).to_vec())
                .collect();
            let mut tuples: BTreeSet<Vec<i64>> = BTreeSet::new();
            let mut idx = vec![0usize; n];
            loop {
                let mut coords = Vec::with_capacity(lat.nd());
                for &b in &idx {
                    coords.extend_from_slice(&blocks[b]);
                }
                tuples.insert(coords);
                let mut k = n;
                let done = loop {
                    if k == 0 {
                        break true;
                    }
                    k -= 1;
                    if idx[k] + 1 < n {
                        idx[k] += 1;
                        break false;
                    }
                    idx[k] = 0;
                };
                if done {
                    break;
                }
            }
            let mut pts: BTreeSet<Point> = BTreeSet::new();
            for coords in tuples {
                let c = Point::from_doubled(lat, coords)?;
                for p in plain_box_points(&c, spec.side)? {
                    if spec.contains(&p)? {
                        pts.insert(p);
                    }
                }
                if pts.len() > MAX_REGION_SITES {
                    return Err(Error::EnumerationCeiling(pts.len(), MAX_REGION_SITES));
                }
            }
            Region::from_points(lat, pts.into_iter().collect())
        }
    }
}

/// The inner-third box `Λ_{∗;L/3}(center)` as an exact point set.
pub fn inner_core(spec: &BoxSpec) -> Result<Region> {
    let all = enumerate_box(spec)?;
    let mut pts = Vec::new();
    for p in all.sites() {
        if spec.inner_core_contains(p)? {
            pts.push(p.clone());
        }
    }
    Region::from_points(spec.lattice(), pts)
}

/// An `n`-particle rectangle: product of one-particle boxes, optionally
/// symmetrized over particle permutations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RectangleSpec {
    pub symmetrized: bool,
    pub center: Point,
    pub sides: Vec<Half>,
}

impl RectangleSpec {
    pub fn new(symmetrized: bool, center: Point, sides: Vec<Half>) -> Result<Self> {
        if sides.len() != center.lattice().n {
            return Err(Error::DimensionMismatch(format!(
                "expected {} sides, got {}",
                center.lattice().n,
                sides.len()
            )));
        }
        if sides.iter().any(|s| *s < Half::int(1)) {
            return Err(Error::InvalidParameter("rectangle side < 1".into()));
        }
        Ok(RectangleSpec {
            symmetrized,
            center,
            sides,
        })
    }

    pub fn lattice(&self) -> LatticeConfig {
        self.center.lattice()
    }

    pub fn max_side(&self) -> Half {
        *self.sides.iter().max().unwrap()
    }

    pub fn min_side(&self) -> Half {
        *self.sides.iter().min().unwrap()
    }

    fn plain_points(&self) -> Result<Vec<Point>> {
        let lat = self.lattice();
        let d = lat.d;
        let mut ranges = Vec::with_capacity(lat.nd());
        for j in 0..lat.n {
            let block = self.center.particle(j);
            for k in 0..d {
                ranges.push(axis_range(block[k], self.sides[j].doubled()));
            }
        }
        product_region(lat, &ranges)
    }
}

/// Enumerate the exact point set of a rectangle.
pub fn enumerate_rectangle(spec: &RectangleSpec) -> Result<Region> {
    let lat = spec.lattice();
    let plain = spec.plain_points()?;
    if !spec.symmetrized {
        return Region::from_points(lat, plain);
    }
    let mut pts: BTreeSet<Point> = BTreeSet::new();
    for perm in permutations(lat.n) {
        for p in &plain {
            pts.insert(p.permuted(&perm));
        }
        if pts.len() > MAX_REGION_SITES {
            return Err(Error::EnumerationCeiling(pts.len(), MAX_REGION_SITES));
        }
    }
    Region::from_points(lat, pts.into_iter().collect())
}

/// `Π_j` of a two-particle rectangle: the one-particle box `Λ_{L_j}(x_j)`.
pub fn projection(spec: &RectangleSpec, j: usize) -> Result<Region> {
    let lat = spec.lattice();
    if lat.n != 2 {
        return Err(Error::Precondition("projections are defined for n = 2".into()));
    }
    if j != 1 && j != 2 {
        return Err(Error::InvalidParameter(format!("projection index {j} ∉ {{1,2}}")));
    }
    let one = LatticeConfig::new(1, lat.d)?;
    let block = spec.center.particle(j - 1);
    let ranges: Vec<(i64, i64)> = block
        .iter()
        .map(|&c| axis_range(c, spec.sides[j - 1].doubled()))
        .collect();
    Region::from_points(one, product_region(one, &ranges)?)
}

/// `Π` of a two-particle rectangle: union of the one-particle projections.
pub fn projection_union(spec: &RectangleSpec) -> Result<Region> {
    projection(spec, 1)?.union(&projection(spec, 2)?)
}

/// True iff some configuration in `region` has inter-particle distance
/// `≤ r₀` (the interaction reaches it).
pub fn is_interactive(region: &Region, r0: i64) -> Result<bool> {
    if region.lattice().n != 2 {
        return Err(Error::Precondition("interactivity is defined for n = 2".into()));
    }
    Ok(region.sites().iter().any(|p| {
        p.particle(0)
            .iter()
            .zip(p.particle(1))
            .map(|(a, b)| (a - b).abs())
            .max()
            .unwrap()
            <= 2 * r0
    }))
}

/// Separation classes for a pair of symmetrized two-particle rectangles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeparationClass {
    /// Disjoint full projections; events on the pair are independent.
    Fully,
    /// Some one-sided projection is disjoint from the other's projection.
    Partially,
    Neither,
}

/// Classify the separation of two symmetrized two-particle rectangles.
pub fn separation_class(a: &RectangleSpec, b: &RectangleSpec) -> Result<SeparationClass> {
    if a.lattice().n != 2 || b.lattice().n != 2 {
        return Err(Error::Precondition("separation is defined for n = 2".into()));
    }
    if !a.symmetrized || !b.symmetrized {
        return Err(Error::Precondition(
            "separation is defined for symmetrized rectangles".into(),
        ));
    }
    let pa = projection_union(a)?;
    let pb = projection_union(b)?;
    if !pa.intersects(&pb) {
        return Ok(SeparationClass::Fully);
    }
    for j in 1..=2 {
        if !projection(a, j)?.intersects(&pb) || !projection(b, j)?.intersects(&pa) {
            return Ok(SeparationClass::Partially);
        }
    }
    Ok(SeparationClass::Neither)
}

/// True iff the pair of equal-side boxes has `dist_S(centers) > 8L`.
pub fn is_l_distant(a: &BoxSpec, b: &BoxSpec) -> Result<bool> {
    if a.side != b.side {
        return Err(Error::Precondition("L-distance requires equal sides".into()));
    }
    let delta = dist_doubled(DistanceKind::Symmetrized, &a.center, &b.center)?;
    Ok(delta > 8 * a.side.doubled())
}
