//! Eigenfunction-correlator decay and the Z/W localization weights.

use crate::geometry::{dist_doubled, DistanceKind, Point, Region};
use crate::spectral::SpectralData;
use crate::stats::linear_fit;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Relative tolerance for grouping numerically degenerate eigenvalues.
pub const CLUSTER_TOL: f64 = 1e-8;

/// Indices of eigenvalue clusters: maximal runs closer than
/// `CLUSTER_TOL·scale` to their neighbor.
pub fn eigenvalue_clusters(sd: &SpectralData) -> Vec<std::ops::Range<usize>> {
    let tol = CLUSTER_TOL * sd.scale();
    let mut out = Vec::new();
    let mut start = 0usize;
    for j in 1..=sd.dim() {
        if j == sd.dim() || sd.eigenvalues[j] - sd.eigenvalues[j - 1] > tol {
            out.push(start..j);
            start = j;
        }
    }
    out
}

/// Eigenfunction correlator
/// `Q_I(x, y) = Σ_{λ_j ∈ I} |ψ_j(x)||ψ_j(y)|`, with degenerate clusters
/// contributing `‖χ_x P‖₂·‖P χ_y‖₂` through their projector.
pub fn correlator(sd: &SpectralData, interval: (f64, f64), x: usize, y: usize) -> f64 {
    let mut total = 0.0;
    for cluster in eigenvalue_clusters(sd) {
        let inside = sd.eigenvalues[cluster.clone()]
            .iter()
            .any(|l| interval.0 <= *l && *l <= interval.1);
        if !inside {
            continue;
        }
        let mut nx = 0.0;
        let mut ny = 0.0;
        for j in cluster {
            nx += sd.eigenvectors[(x, j)] * sd.eigenvectors[(x, j)];
            ny += sd.eigenvectors[(y, j)] * sd.eigenvectors[(y, j)];
        }
        total += (nx * ny).sqrt();
    }
    total
}

/// One distance bin of an ensemble-averaged correlator grid.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CorrelatorBin {
    /// Symmetrized distance of the pairs in this bin.
    pub dist: f64,
    pub mean_q: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub pair_count: usize,
}

/// Ensemble means of `Q_I` grouped by exact pair distance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelatorGrid {
    pub interval: (f64, f64),
    pub bins: Vec<CorrelatorBin>,
    pub trials: u64,
}

/// Accumulate a correlator grid over site pairs `(x, y)` keyed by their
/// exact distance; `samples[trial][pair]` are per-trial correlator values.
pub fn build_grid(
    region: &Region,
    kind: DistanceKind,
    pairs: &[(usize, usize)],
    interval: (f64, f64),
    samples: &[Vec<f64>],
) -> Result<CorrelatorGrid> {
    let trials = samples.len() as u64;
    let mut by_dist: std::collections::BTreeMap<i64, Vec<f64>> = Default::default();
    for (pi, &(x, y)) in pairs.iter().enumerate() {
        let d = dist_doubled(kind, region.site(x), region.site(y))?;
        let entry = by_dist.entry(d).or_default();
        for s in samples {
            entry.push(s[pi]);
        }
    }
    let z99 = 2.5758293035489004; // two-sided 99% normal quantile
    let bins = by_dist
        .into_iter()
        .map(|(d, vals)| {
            let (mean, se) = crate::stats::mean_se(&vals);
            let se = if se.is_nan() { 0.0 } else { se };
            CorrelatorBin {
                dist: d as f64 / 2.0,
                mean_q: mean,
                ci_lo: mean - z99 * se,
                ci_hi: mean + z99 * se,
                pair_count: vals.len() / samples.len().max(1),
            }
        })
        .collect();
    Ok(CorrelatorGrid {
        interval,
        bins,
        trials,
    })
}

/// Result of a stretched-exponential decay fit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DecayFit {
    /// Slope of `log E[Q]` against `dist^ζ` (negative in the localized
    /// regime); `−∞` when every off-diagonal mean vanishes.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub bins_used: usize,
}

/// Regress `log E[Q]` on `dist^ζ`; the exponent `ζ` is a fit input.
pub fn decay_fit(grid: &CorrelatorGrid, zeta: f64) -> Result<DecayFit> {
    if !(0.0 < zeta && zeta <= 1.0) {
        return Err(Error::InvalidParameter("ζ must lie in (0, 1]".into()));
    }
    let usable: Vec<(f64, f64)> = grid
        .bins
        .iter()
        .filter(|b| b.mean_q > 0.0)
        .map(|b| (b.dist.powf(zeta), b.mean_q.ln()))
        .collect();
    if usable.is_empty() || grid.bins.iter().all(|b| b.dist == 0.0 || b.mean_q == 0.0) {
        // Zero-hopping style degenerate case: point-mass eigenvectors.
        return Ok(DecayFit {
            slope: f64::NEG_INFINITY,
            intercept: 0.0,
            r_squared: 1.0,
            bins_used: 0,
        });
    }
    if usable.len() < 6 {
        return Err(Error::Precondition(format!(
            "need ≥ 6 usable distance bins, have {}",
            usable.len()
        )));
    }
    let xs: Vec<f64> = usable.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = usable.iter().map(|p| p.1).collect();
    let (slope, intercept, r_squared) = linear_fit(&xs, &ys);
    Ok(DecayFit {
        slope,
        intercept,
        r_squared,
        bins_used: usable.len(),
    })
}

/// Localization weights of one eigenvalue (cluster) at an anchor site.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ZwRecord {
    pub eigenvalue: f64,
    pub z: f64,
    pub w: f64,
}

/// Compute `Z ≤ W ≤ 1` for the eigenvalue cluster containing index `j`.
///
/// `T_a` is multiplication by `(1 + ‖x − a‖²)^{ν/2}`; for a simple
/// eigenvalue `Z = W = |ψ(a)| / ‖T_a^{-1}ψ‖`, and clusters use the
/// projector (`Z` from Hilbert–Schmidt norms, `W` as the largest
/// generalized singular value).
pub fn zw_weights(
    sd: &SpectralData,
    region: &Region,
    j: usize,
    anchor: &Point,
    nu: f64,
) -> Result<ZwRecord> {
    if j >= sd.dim() {
        return Err(Error::InvalidParameter(format!("eigenindex {j} out of range")));
    }
    let ai = region
        .index_of(anchor)
        .ok_or_else(|| Error::Precondition(format!("{anchor} outside the region")))?;
    let cluster = eigenvalue_clusters(sd)
        .into_iter()
        .find(|c| c.contains(&j))
        .expect("clusters partition the spectrum");
    let k = cluster.len();
    let n = sd.dim();

    // D = T_a^{-1} on the region: diagonal (1 + ‖x − a‖²)^{−ν/2}.
    let mut dvals = DVector::zeros(n);
    for (i, p) in region.sites().iter().enumerate() {
        let r = dist_doubled(DistanceKind::Infinity, p, anchor)? as f64 / 2.0;
        dvals[i] = (1.0 + r * r).powf(-nu / 2.0);
    }

    // M = D·Q with Q the cluster's orthonormal columns; q_a its anchor row.
    let mut m = DMatrix::zeros(n, k);
    let mut q_a = DVector::zeros(k);
    for (col, jj) in cluster.clone().enumerate() {
        for i in 0..n {
            m[(i, col)] = dvals[i] * sd.eigenvectors[(i, jj)];
        }
        q_a[col] = sd.eigenvectors[(ai, jj)];
    }
    let z = q_a.norm() / m.norm();
    let gram = m.transpose() * &m;
    let sol = gram
        .lu()
        .solve(&q_a)
        .ok_or_else(|| Error::Precondition("degenerate weight Gram matrix".into()))?;
    let w = q_a.dot(&sol).max(0.0).sqrt();
    Ok(ZwRecord {
        eigenvalue: sd.eigenvalues[j],
        z,
        w,
    })
}

/// The fixed weight-exponent `ν = (nd + 1)/2`.
pub fn default_nu(nd: usize) -> f64 {
    (nd as f64 + 1.0) / 2.0
}
