//! Monte-Carlo verification of the Wegner estimates and deterministic
//! verification of the Combes–Thomas bound and the resolvent tail
//! probability lemma.
//!
//! All bounds are upper bounds, so ensemble verdicts are one-sided: PASS
//! means the 99% confidence interval is consistent with the bound.

use crate::geometry::{
    boundary_sets, enumerate_box, enumerate_rectangle, separation_class, BoxSpec, DistanceKind,
    Point, RectangleSpec, Region, SeparationClass,
};
use crate::model::{assemble, sample_disorder, DisorderField, ModelSpec, OperatorMatrix};
use crate::rng::trial_seed;
use crate::spectral::eigenvalues_only;
use crate::stats::{clopper_pearson, parallel_trials};
use crate::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Confidence level used by every ensemble verdict.
pub const CONFIDENCE: f64 = 0.99;

/// The geometric constant `C_n^{(♯)}` of the Wegner estimate.
pub fn wegner_constant(kind: DistanceKind, n: usize) -> f64 {
    let fact = |k: usize| (1..=k).product::<usize>() as f64;
    match kind {
        DistanceKind::Infinity => n as f64,
        DistanceKind::Symmetrized => n as f64 * fact(n),
        DistanceKind::Hausdorff => (n as f64).powi(2 * n as i32 + 1),
    }
}

/// Aggregate of one ensemble run against a theoretical bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub trials: u64,
    pub hits: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub bound: f64,
    /// Bound ≥ 1: the run cannot falsify anything.
    pub vacuous: bool,
    /// One-sided consistency: CI lower bound ≤ bound.
    pub pass: bool,
}

impl EnsembleReport {
    pub fn from_hits(hits: u64, trials: u64, bound: f64) -> Self {
        let p_hat = hits as f64 / trials as f64;
        let (ci_lo, ci_hi) = clopper_pearson(hits, trials, CONFIDENCE);
        EnsembleReport {
            trials,
            hits,
            p_hat,
            ci_lo,
            ci_hi,
            bound,
            vacuous: bound >= 1.0,
            pass: ci_lo <= bound,
        }
    }
}

/// One archived trial of a distance-to-energy ensemble.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: u64,
    pub seed: u64,
    /// `dist(σ(H), E)` or the pair spectral gap, depending on the run.
    pub statistic: f64,
    pub hit: bool,
}

/// Result of a Wegner-type run: report plus the per-trial archive.
#[derive(Debug, Clone)]
pub struct WegnerRun {
    pub report: EnsembleReport,
    pub rows: Vec<TrialRow>,
    /// Effective `‖ρ‖_∞` of the sampled potential entries.
    pub density_sup: f64,
    pub side_max: f64,
}

/// Target of a single-spectrum Wegner run.
#[derive(Debug, Clone)]
pub enum WegnerTarget {
    Box(BoxSpec),
    Rectangle(RectangleSpec),
}

impl WegnerTarget {
    fn region(&self) -> Result<Region> {
        match self {
            WegnerTarget::Box(b) => enumerate_box(b),
            WegnerTarget::Rectangle(r) => enumerate_rectangle(r),
        }
    }

    fn kind(&self) -> DistanceKind {
        match self {
            WegnerTarget::Box(b) => b.kind,
            WegnerTarget::Rectangle(r) => {
                if r.symmetrized {
                    DistanceKind::Symmetrized
                } else {
                    DistanceKind::Infinity
                }
            }
        }
    }

    fn side_max(&self) -> f64 {
        match self {
            WegnerTarget::Box(b) => b.side.as_f64(),
            WegnerTarget::Rectangle(r) => r.max_side().as_f64(),
        }
    }
}

/// Monte-Carlo test of `P{dist(σ(H_Λ), E) ≤ ε} ≤ 2·C_n^{(♯)}·‖ρ‖_∞·ε·L^{nd}`.
pub fn wegner_single(
    target: &WegnerTarget,
    model: &ModelSpec,
    e: f64,
    eps: f64,
    trials: u64,
    master_seed: u64,
) -> Result<WegnerRun> {
    if eps < 0.0 {
        return Err(Error::InvalidParameter("ε must be ≥ 0".into()));
    }
    let density_sup = model
        .effective_density_sup()
        .ok_or_else(|| Error::Precondition("Wegner needs coupling λ > 0".into()))?;
    let region = target.region()?;
    let support = region.single_particle_support();
    let rows = parallel_trials(trials, |i| {
        let seed = trial_seed(master_seed, i);
        let field = sample_disorder(model, &support, seed)?;
        let vals = eigenvalues_only(&assemble(&region, &field, model)?)?;
        let statistic = vals.iter().map(|l| (l - e).abs()).fold(f64::INFINITY, f64::min);
        Ok(TrialRow {
            trial: i,
            seed,
            statistic,
            hit: statistic <= eps,
        })
    })?;
    let hits = rows.iter().filter(|r| r.hit).count() as u64;
    let nd = model.lattice.nd() as i32;
    let side_max = target.side_max();
    let constant = wegner_constant(target.kind(), model.lattice.n);
    let bound = 2.0 * constant * density_sup * eps * side_max.powi(nd);
    Ok(WegnerRun {
        report: EnsembleReport::from_hits(hits, trials, bound),
        rows,
        density_sup,
        side_max,
    })
}

/// Minimum gap between two ascending spectra (sorted-merge two-pointer).
pub fn min_spectral_gap(a: &[f64], b: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    let mut j = 0usize;
    for &x in a {
        while j + 1 < b.len() && b[j + 1] <= x {
            j += 1;
        }
        best = best.min((x - b[j]).abs());
        if j + 1 < b.len() {
            best = best.min((x - b[j + 1]).abs());
        }
    }
    best
}

/// Monte-Carlo test of the pair Wegner bound
/// `P{dist(σ(H_a), σ(H_b)) ≤ ε} ≤ 16·‖ρ‖_∞·ε·L^{4d}` for partially
/// separated symmetrized two-particle rectangles.
pub fn wegner_pair(
    a: &RectangleSpec,
    b: &RectangleSpec,
    model: &ModelSpec,
    eps: f64,
    trials: u64,
    master_seed: u64,
) -> Result<WegnerRun> {
    if separation_class(a, b)? == SeparationClass::Neither {
        return Err(Error::Precondition(
            "pair Wegner needs a partially separated pair".into(),
        ));
    }
    let density_sup = model
        .effective_density_sup()
        .ok_or_else(|| Error::Precondition("Wegner needs coupling λ > 0".into()))?;
    let ra = enumerate_rectangle(a)?;
    let rb = enumerate_rectangle(b)?;
    let support = {
        let mut s = ra.single_particle_support();
        s.extend(rb.single_particle_support());
        s.sort();
        s.dedup();
        s
    };
    let rows = parallel_trials(trials, |i| {
        let seed = trial_seed(master_seed, i);
        let field = sample_disorder(model, &support, seed)?;
        let va = eigenvalues_only(&assemble(&ra, &field, model)?)?;
        let vb = eigenvalues_only(&assemble(&rb, &field, model)?)?;
        let statistic = min_spectral_gap(&va, &vb);
        Ok(TrialRow {
            trial: i,
            seed,
            statistic,
            hit: statistic <= eps,
        })
    })?;
    let hits = rows.iter().filter(|r| r.hit).count() as u64;
    let side_max = a.max_side().as_f64().max(b.max_side().as_f64());
    let bound = 16.0 * density_sup * eps * side_max.powi(4 * model.lattice.d as i32);
    Ok(WegnerRun {
        report: EnsembleReport::from_hits(hits, trials, bound),
        rows,
        density_sup,
        side_max,
    })
}

/// Outcome of a Combes–Thomas sweep over one region and one energy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CtReport {
    /// `dist(z, σ(H_S))`, the proof's resolvent-distance quantity.
    pub eta: f64,
    /// Worst `|G(z;x,y)| / bound(x,y,ε)` over all pairs and all ε.
    pub max_ratio: f64,
    pub pass: bool,
    /// Same sweep with η replaced by the distance to the a-priori spectral
    /// enclosure of the full operator (reported, never asserted).
    pub window_eta: f64,
    pub window_max_ratio: f64,
    pub pairs_checked: usize,
}

/// Default ε grid `{0.1, …, 0.9}` of the Combes–Thomas sweep.
pub fn ct_eps_grid() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

/// Verify `|⟨δ_x, (H_S − z)^{-1} δ_y⟩| ≤ e^{−ln(εη/(2nd)+1)·‖y−x‖} / (η(1−ε))`
/// over every site pair of the region and every ε in the grid.
pub fn combes_thomas_check(
    region: &Region,
    field: &DisorderField,
    model: &ModelSpec,
    z: Complex64,
    eps_grid: &[f64],
) -> Result<CtReport> {
    if eps_grid.iter().any(|e| !(0.0 < *e && *e < 1.0)) {
        return Err(Error::InvalidParameter("ε grid must lie in (0,1)".into()));
    }
    let op = assemble(region, field, model)?;
    let vals = eigenvalues_only(&op)?;
    let eta = vals
        .iter()
        .map(|l| ((l - z.re) * (l - z.re) + z.im * z.im).sqrt())
        .fold(f64::INFINITY, f64::min);
    if eta <= 0.0 {
        return Err(Error::Resonant(eta));
    }
    let g = full_green(&op, z)?;
    let two_d = 2.0 * model.lattice.nd() as f64;
    let (_, upper) = model.operator_norm_bounds();
    let dx = if z.re < 0.0 {
        -z.re
    } else if z.re > upper {
        z.re - upper
    } else {
        0.0
    };
    let window_eta = (dx * dx + z.im * z.im).sqrt();

    let n = region.len();
    let mut max_ratio: f64 = 0.0;
    let mut window_max_ratio: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let dist = crate::geometry::dist_doubled(
                DistanceKind::Infinity,
                region.site(i),
                region.site(j),
            )? as f64
                / 2.0;
            let mag = g[(i, j)].norm();
            for &eps in eps_grid {
                let bound = (- (eps * eta / two_d + 1.0).ln() * dist).exp() / (eta * (1.0 - eps));
                max_ratio = max_ratio.max(mag / bound);
                if window_eta > 0.0 {
                    let wb = (-(eps * window_eta / two_d + 1.0).ln() * dist).exp()
                        / (window_eta * (1.0 - eps));
                    window_max_ratio = window_max_ratio.max(mag / wb);
                }
            }
        }
    }
    Ok(CtReport {
        eta,
        max_ratio,
        pass: max_ratio <= 1.0 + 1e-9,
        window_eta,
        window_max_ratio,
        pairs_checked: n * n,
    })
}

fn full_green(op: &OperatorMatrix, z: Complex64) -> Result<nalgebra::DMatrix<Complex64>> {
    let n = op.matrix.nrows();
    let mut m = op.matrix.map(|x| Complex64::new(x, 0.0));
    for i in 0..n {
        m[(i, i)] -= z;
    }
    m.try_inverse()
        .ok_or(Error::Resonant(0.0))
}

/// One row of the tail-probability comparison: probabilities of
/// `a < |G_Λ|` against the two lemma bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailRow {
    pub a: f64,
    /// Worst empirical tail probability over `y ∈ ∂₋Λ` at `E + iε`.
    pub p_complex: f64,
    pub p_complex_ci_lo: f64,
    /// Worst empirical tail probability over `y ∈ ∂₋Λ` at real `E`.
    pub p_real: f64,
    pub p_real_ci_lo: f64,
    pub bound_complex: f64,
    pub bound_real: f64,
    pub pass: bool,
}

/// Full report of the probability-lemma experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbLemmaReport {
    pub rows: Vec<TailRow>,
    /// `sup_k` over `∂₊Λ ∪ B₂` of the ensemble mean `|G_big(E+iε;k,u)|`.
    pub sup_mean_green: f64,
    /// The proof's finite-volume remainder `2·C·‖ρ‖_∞·L^{nd−γ}`.
    pub p0_term: f64,
    /// Additive slack covering the full-lattice truncation (Combes–Thomas
    /// tail through the enlarged box) plus Monte-Carlo error on the mean.
    pub slack: f64,
    /// `|∂₊Λ| ≤ L^{nd}` gate required by the proof at this scale.
    pub boundary_gate: bool,
    pub pass: bool,
}

/// Monte-Carlo check of the resolvent tail probability lemma on a box,
/// with the full-lattice Green function approximated on an enclosing box
/// `enlargement×` the side.
#[allow(clippy::too_many_arguments)]
pub fn probability_lemma_check(
    spec: &BoxSpec,
    model: &ModelSpec,
    e: f64,
    eps: f64,
    gamma: f64,
    a_grid: &[f64],
    trials: u64,
    master_seed: u64,
    enlargement: i64,
) -> Result<ProbLemmaReport> {
    let nd = model.lattice.nd() as f64;
    if gamma <= nd {
        return Err(Error::InvalidParameter("need γ > nd".into()));
    }
    if eps <= 0.0 {
        return Err(Error::InvalidParameter("need ε > 0".into()));
    }
    if enlargement < 2 {
        return Err(Error::InvalidParameter("enclosing box must be ≥ 2× the side".into()));
    }
    let density_sup = model
        .effective_density_sup()
        .ok_or_else(|| Error::Precondition("the lemma needs coupling λ > 0".into()))?;

    let region = enumerate_box(spec)?;
    let big_spec = BoxSpec::new(spec.kind, spec.center.clone(), spec.side * enlargement)?;
    let big = enumerate_box(&big_spec)?;
    let support = big.single_particle_support();

    let boundary = boundary_sets(&region, None)?;
    let b2: Vec<Point> = boundary.inner_sites.clone(); // B₂ = ∂₋Λ
    let b2_small: Vec<usize> = b2.iter().map(|p| region.index_of(p).unwrap()).collect();
    // u ∈ B₁ = the inner-third box; take the site closest to the center.
    let mut core: Vec<usize> = Vec::new();
    for (i, p) in region.sites().iter().enumerate() {
        if spec.inner_core_contains(p)? {
            core.push(i);
        }
    }
    let u_small = *core.first().ok_or_else(|| {
        Error::Precondition("inner-third box is empty; enlarge the side".into())
    })?;
    let u_point = region.site(u_small).clone();
    let u_big = big.index_of(&u_point).expect("Λ ⊂ enclosing box");

    // sup set: ∂₊Λ ∪ B₂, indexed in the big region.
    let mut sup_set: Vec<usize> = boundary
        .outer_sites
        .iter()
        .chain(b2.iter())
        .map(|p| big.index_of(p).expect("∂₊Λ ∪ B₂ ⊂ enclosing box"))
        .collect();
    sup_set.sort();
    sup_set.dedup();

    let z = Complex64::new(e, eps);
    struct Trial {
        g_small_complex: Vec<f64>,
        g_small_real: Vec<f64>,
        g_big: Vec<f64>,
    }
    let outcome = parallel_trials(trials, |i| {
        let seed = trial_seed(master_seed, i);
        let field = sample_disorder(model, &support, seed)?;
        let op_small = assemble(&region, &field, model)?;
        let op_big = assemble(&big, &field, model)?;
        let col_c = crate::spectral::green_column(&op_small, z, u_small)?;
        let col_r = match crate::spectral::green_column(&op_small, Complex64::new(e, 0.0), u_small)
        {
            Ok(c) => c,
            // Resonant draws have `‖G_Λ(E)‖ = ∞`; count them as tail hits.
            Err(Error::Resonant(_)) => {
                nalgebra::DVector::from_element(region.len(), Complex64::new(f64::INFINITY, 0.0))
            }
            Err(e) => return Err(e),
        };
        let col_big = crate::spectral::green_column(&op_big, z, u_big)?;
        Ok(Trial {
            g_small_complex: b2_small.iter().map(|&y| col_c[y].norm()).collect(),
            g_small_real: b2_small.iter().map(|&y| col_r[y].norm()).collect(),
            g_big: sup_set.iter().map(|&k| col_big[k].norm()).collect(),
        })
    })?;

    // sup over k of the ensemble mean, plus its worst standard error.
    let mut sup_mean_green: f64 = 0.0;
    let mut worst_se: f64 = 0.0;
    for (ki, _) in sup_set.iter().enumerate() {
        let vals: Vec<f64> = outcome.iter().map(|t| t.g_big[ki]).collect();
        let (m, se) = crate::stats::mean_se(&vals);
        if m > sup_mean_green {
            sup_mean_green = m;
        }
        worst_se = worst_se.max(if se.is_nan() { 0.0 } else { se });
    }

    let side = spec.side.as_f64();
    let constant = wegner_constant(spec.kind, model.lattice.n);
    let p0_term = 2.0 * constant * density_sup * side.powf(nd - gamma);
    let boundary_gate = (boundary.outer_sites.len() as f64) <= side.powf(nd);

    // Truncation slack: the big-box approximation of the full-lattice Green
    // entries differs by at most |∂(Λ_big)| · (1/ε) · CT(dist(u, ∂Λ_big)),
    // using the imaginary part as the guaranteed resolvent distance.
    let big_boundary = boundary_sets(&big, None)?;
    let min_dist = big_boundary
        .inner_sites
        .iter()
        .map(|p| {
            crate::geometry::dist_doubled(DistanceKind::Infinity, p, &u_point).unwrap() as f64 / 2.0
        })
        .fold(f64::INFINITY, f64::min);
    let ct_eps = 0.5;
    let ct_tail =
        (-(ct_eps * eps / (2.0 * nd) + 1.0).ln() * min_dist).exp() / (eps * (1.0 - ct_eps));
    let truncation = big_boundary.edges.len() as f64 * (1.0 / eps) * ct_tail;
    let slack = truncation + 3.0 * worst_se * 4.0 * side.powf(gamma + 2.0 * nd) / a_grid
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);

    let mut rows = Vec::with_capacity(a_grid.len());
    for &a in a_grid {
        let mut worst_c = (0u64, 0.0f64, 0.0f64);
        let mut worst_r = (0u64, 0.0f64, 0.0f64);
        for (yi, _) in b2_small.iter().enumerate() {
            let hits_c = outcome.iter().filter(|t| t.g_small_complex[yi] > a).count() as u64;
            let hits_r = outcome.iter().filter(|t| t.g_small_real[yi] > a).count() as u64;
            for (hits, worst) in [(hits_c, &mut worst_c), (hits_r, &mut worst_r)] {
                let p = hits as f64 / trials as f64;
                if p >= worst.1 {
                    let (lo, _) = clopper_pearson(hits, trials, CONFIDENCE);
                    *worst = (hits, p, lo);
                }
            }
        }
        let lead = side.powf(gamma + 2.0 * nd) / a * sup_mean_green;
        let bound_complex = 4.0 * lead + p0_term;
        let bound_real = 8.0 * lead
            + two_pow_three_halves() * constant * density_sup * (eps / a).sqrt() * side.powf(nd)
            + p0_term;
        let pass = worst_c.2 <= bound_complex + slack && worst_r.2 <= bound_real + slack;
        rows.push(TailRow {
            a,
            p_complex: worst_c.1,
            p_complex_ci_lo: worst_c.2,
            p_real: worst_r.1,
            p_real_ci_lo: worst_r.2,
            bound_complex,
            bound_real,
            pass,
        });
    }
    let pass = boundary_gate && rows.iter().all(|r| r.pass);
    Ok(ProbLemmaReport {
        rows,
        sup_mean_green,
        p0_term,
        slack,
        boundary_gate,
        pass,
    })
}

fn two_pow_three_halves() -> f64 {
    2.0f64.powf(1.5)
}
