//! Exact combinatorics of `Z^{nd}` under the norm, symmetrized, and
//! Hausdorff (pseudo-)distances.
//!
//! Coordinates live on a doubled grid: every stored integer is twice the
//! real value, so half-integer box centers and side lengths are exact and
//! every membership test is an integer comparison.  Box membership
//! `dist ≤ L/2` becomes `2Δ ≤ S` and inner-third membership `dist ≤ L/6`
//! becomes `6Δ ≤ S`, where `Δ` is the doubled distance and `S` the doubled
//! side.

mod boxes;
mod cover;
mod half;
mod point;
mod region;

pub use boxes::{
    enumerate_box, enumerate_rectangle, inner_core, is_interactive, is_l_distant, projection,
    projection_union, separation_class, BoxSpec, RectangleSpec, SeparationClass,
};
pub use cover::{cover_centers, partial_cover, Cover};
pub use half::Half;
pub use point::{distance, dist_doubled, permutations, DistanceKind, LatticeConfig, Point};
pub use region::{boundary_sets, Boundary, Region};

/// Hard ceiling on enumerated region sizes; guards runaway memory.
pub const MAX_REGION_SITES: usize = 4_000_000;

/// Hard ceiling on `n` for permutation-based (pseudo-)distances.
pub const MAX_PARTICLES: usize = 6;
