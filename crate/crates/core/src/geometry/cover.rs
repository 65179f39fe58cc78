use super::boxes::{enumerate_box, BoxSpec};
use super::point::{dist_doubled, DistanceKind, Point};
use super::region::{boundary_sets, Region};
use super::{Half, MAX_REGION_SITES};
use crate::{Error, Result};

/// An `ℓ`-suitable partial cover of a symmetrized box of side `L`: cells of
/// side `ℓ` on the grid of step `ℓ/3 + 1`, kept clear of the outer boundary.
#[derive(Debug, Clone)]
pub struct Cover {
    pub outer: BoxSpec,
    pub cell_side: Half,
    pub centers: Vec<Point>,
    pub cells: Vec<BoxSpec>,
}

impl Cover {
    /// Doubled step of the center grid.
    pub fn step_doubled(&self) -> i64 {
        self.cell_side.doubled() / 3 + 2
    }
}

/// Centers `x + (ℓ/3 + 1)·Z^{nd}` constrained to `‖y − x‖_∞ ≤ L/2 − ℓ`.
///
/// The grid step `ℓ/3 + 1` must land on the half-integer grid (`3 | 2ℓ`).
/// Works for any particle count; the one-particle case feeds the
/// per-coordinate covers of the energy-interval analysis.
pub fn cover_centers(center: &Point, outer_side: Half, cell_side: Half) -> Result<Vec<Point>> {
    if cell_side >= outer_side || cell_side < Half::int(1) {
        return Err(Error::InvalidParameter(format!(
            "cell side {cell_side} must satisfy 1 ≤ ℓ < L = {outer_side}"
        )));
    }
    let s_cell = cell_side.doubled();
    if s_cell % 3 != 0 {
        return Err(Error::InvalidParameter(format!(
            "cell step ℓ/3 + 1 leaves the half-integer grid for ℓ = {cell_side}"
        )));
    }
    let step_d = s_cell / 3 + 2;
    let reach = outer_side.doubled() - 2 * s_cell; // 2·(L/2 − ℓ) doubled
    if reach < 0 {
        return Err(Error::InvalidParameter(format!(
            "no cover centers: ℓ = {cell_side} exceeds L/2 for L = {outer_side}"
        )));
    }
    let k_max = reach / (2 * step_d);
    let offsets: Vec<i64> = (-k_max..=k_max).map(|k| k * step_d).collect();

    let nd = center.lattice().nd();
    let mut count: usize = 1;
    for _ in 0..nd {
        count = count.saturating_mul(offsets.len());
    }
    if count > MAX_REGION_SITES {
        return Err(Error::EnumerationCeiling(count, MAX_REGION_SITES));
    }

    let mut centers = Vec::with_capacity(count);
    let base = center.doubled().to_vec();
    let mut idx = vec![0usize; nd];
    loop {
        let coords: Vec<i64> = base
            .iter()
            .enumerate()
            .map(|(a, &c)| c + offsets[idx[a]])
            .collect();
        centers.push(Point::from_doubled(center.lattice(), coords)?);
        let mut axis = nd;
        let done = loop {
            if axis == 0 {
                break true;
            }
            axis -= 1;
            if idx[axis] + 1 < offsets.len() {
                idx[axis] += 1;
                break false;
            }
            idx[axis] = 0;
        };
        if done {
            break;
        }
    }
    Ok(centers)
}

/// Construct the partial cover and verify its invariants.
///
/// Exact inner-third coverage of the shrunken box holds when `6 | ℓ`; for
/// other admissible `ℓ` the construction still covers at the grid's
/// half-step radius `(ℓ/3+1)/2`, and only that is checked.
pub fn partial_cover(outer: &BoxSpec, cell_side: Half) -> Result<Cover> {
    if outer.kind != DistanceKind::Symmetrized {
        return Err(Error::Precondition("partial covers are built on symmetrized boxes".into()));
    }
    let centers = cover_centers(&outer.center, outer.side, cell_side)?;
    let cells: Vec<BoxSpec> = centers
        .iter()
        .map(|c| BoxSpec::new(DistanceKind::Symmetrized, c.clone(), cell_side))
        .collect::<Result<_>>()?;

    let cover = Cover {
        outer: outer.clone(),
        cell_side,
        centers,
        cells,
    };
    validate(&cover)?;
    Ok(cover)
}

fn validate(cover: &Cover) -> Result<()> {
    let outer_region = enumerate_box(&cover.outer)?;
    let inner_boundary = boundary_sets(&outer_region, None)?.inner_sites;
    let inner_boundary = Region::from_points(cover.outer.lattice(), inner_boundary)?;

    for cell in &cover.cells {
        let r = enumerate_box(cell)?;
        if !r.is_subset_of(&outer_region) {
            return Err(Error::Precondition(format!(
                "cover invariant violated: cell at {} leaves the outer box",
                cell.center
            )));
        }
        if r.intersects(&inner_boundary) {
            return Err(Error::Precondition(format!(
                "cover invariant violated: cell at {} meets ∂₋ of the outer box",
                cell.center
            )));
        }
    }

    let nd = cover.outer.lattice().nd() as i32;
    let ratio = 3.0 * cover.outer.side.as_f64() / cover.cell_side.as_f64();
    let bound = (2.0 * (ratio + 1.0)).powi(nd);
    if (cover.cells.len() as f64) >= bound {
        return Err(Error::Precondition(format!(
            "cover invariant violated: {} cells ≥ bound {bound}",
            cover.cells.len()
        )));
    }

    // Coverage of the shrunken box of side L − 2ℓ by cell inner thirds.
    // Exact ℓ/6 coverage needs 6 | ℓ; otherwise the half-step radius is
    // what the step-(ℓ/3+1) grid guarantees.
    let s_cell = cover.cell_side.doubled();
    let exact = s_cell % 12 == 0;
    let reach = cover.outer.side.doubled() - 2 * s_cell;
    let step_d = cover.step_doubled();
    for u in outer_region.sites() {
        if 2 * dist_doubled(DistanceKind::Symmetrized, &cover.outer.center, u)? > reach {
            continue;
        }
        let covered = cover.centers.iter().try_fold(false, |acc, y| -> Result<bool> {
            if acc {
                return Ok(true);
            }
            let delta = dist_doubled(DistanceKind::Symmetrized, y, u)?;
            Ok(if exact {
                6 * delta <= s_cell
            } else {
                delta <= step_d
            })
        })?;
        if !covered {
            return Err(Error::Precondition(format!(
                "cover invariant violated: {u} in the shrunken box is not covered"
            )));
        }
    }
    Ok(())
}
