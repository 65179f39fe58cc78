//! The bootstrap multiscale analysis as an executable experiment:
//! deterministic-lemma checks on covers, scale-recursion probability
//! tracking, and the energy-interval event machinery for symmetrized
//! two-particle boxes.
//!
//! The deterministic lemmas are finite statements about one realization;
//! their hypotheses, margin gates, and conclusions are all evaluated
//! exactly, and assertions fire only when hypotheses and gates hold.

use crate::geometry::{
    cover_centers, dist_doubled, enumerate_box, is_interactive, partial_cover, separation_class,
    BoxSpec, Cover, DistanceKind, Half, LatticeConfig, Point, SeparationClass,
};
use crate::model::{sample_disorder, DisorderField, ModelSpec};
use crate::rng::{mix, trial_seed};
use crate::spectral::{
    eigenvalues_only, one_particle_spec, resonance_margins, BoxClassifier, BoxGeometry,
    BoxVerdict, ClassificationParams, RESONANCE_SOLVE_TOL,
};
use crate::stats::{clopper_pearson, parallel_trials};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// The fixed exponent family of the scale analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsaExponents {
    pub zeta: f64,
    pub zeta2: f64,
    pub zeta1: f64,
    pub beta: f64,
    pub zeta0: f64,
    pub tau: f64,
    pub gamma: f64,
    pub kappa: f64,
}

impl MsaExponents {
    /// A valid default family: 0.28 < 0.45 < 0.5625 < 0.6 < 0.75 < 0.8 <
    /// 0.85 < 0.9 with γ = 1.25, κ = 0.2.
    pub fn default_family() -> Self {
        MsaExponents {
            zeta: 0.28,
            zeta2: 0.45,
            zeta1: 0.6,
            beta: 0.8,
            zeta0: 0.85,
            tau: 0.9,
            gamma: 1.25,
            kappa: 0.2,
        }
    }

    /// Enforce the ordering chain
    /// `0 < ζ < ζ₂ < γζ₂ < ζ₁ < γζ₁ < β < ζ₀ < τ < 1`, `γ > 1`,
    /// `ζγ² < ζ₂`, and `0 < κ < min{γ−1, γ(1−β), 1}`.
    pub fn validate(&self) -> Result<()> {
        let MsaExponents {
            zeta,
            zeta2,
            zeta1,
            beta,
            zeta0,
            tau,
            gamma,
            kappa,
        } = *self;
        let chain = [
            0.0 < zeta,
            zeta < zeta2,
            zeta2 < gamma * zeta2,
            gamma * zeta2 < zeta1,
            zeta1 < gamma * zeta1,
            gamma * zeta1 < beta,
            beta < zeta0,
            zeta0 < tau,
            tau < 1.0,
            gamma > 1.0,
            zeta * gamma * gamma < zeta2,
            zeta < tau,
        ];
        if !chain.iter().all(|&c| c) {
            return Err(Error::InvalidParameter(
                "exponent family violates the ordering chain".into(),
            ));
        }
        let kappa_cap = (gamma - 1.0).min(gamma * (1.0 - beta)).min(1.0);
        if !(0.0 < kappa && kappa < kappa_cap) {
            return Err(Error::InvalidParameter(format!(
                "κ = {kappa} must lie in (0, {kappa_cap})"
            )));
        }
        Ok(())
    }
}

/// How scales grow from one step to the next.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ScaleGrowth {
    /// `L_{k+1} = Y·L_k` (first and third analyses).
    Multiplicative { y: f64 },
    /// `L_{k+1} = L_k^γ` (second and fourth analyses).
    Power { gamma: f64 },
}

/// Scale schedule: initial side, growth rule, bad-cluster budget, exponents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleSchedule {
    pub l0: Half,
    pub growth: ScaleGrowth,
    pub j_budget: usize,
    pub exponents: MsaExponents,
}

impl ScaleSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.l0 < Half::int(1) {
            return Err(Error::InvalidParameter("L₀ must be ≥ 1".into()));
        }
        if self.j_budget == 0 {
            return Err(Error::InvalidParameter("bad-cluster budget J must be ≥ 1".into()));
        }
        match self.growth {
            ScaleGrowth::Multiplicative { y } if y <= 1.0 => {
                return Err(Error::InvalidParameter("need Y > 1".into()))
            }
            ScaleGrowth::Power { gamma } if gamma <= 1.0 => {
                return Err(Error::InvalidParameter("need γ > 1".into()))
            }
            _ => {}
        }
        self.exponents.validate()
    }

    /// Next scale, rounded to the half-integer grid.
    pub fn next_scale(&self, l: Half) -> Half {
        let v = l.as_f64();
        let next = match self.growth {
            ScaleGrowth::Multiplicative { y } => v * y,
            ScaleGrowth::Power { gamma } => v.powf(gamma),
        };
        Half::from_doubled((2.0 * next).round() as i64)
    }
}

/// `m(L) = m*_τ − 1/(2L^κ) − 6(d+1)·ln(2L)/L`, the propagated mass.
pub fn m_of_scale(m_star_tau: f64, d: usize, kappa: f64, l: f64) -> f64 {
    m_star_tau - 0.5 * l.powf(-kappa) - 6.0 * (d as f64 + 1.0) * (2.0 * l).ln() / l
}

/// Energy cutoffs and probability thresholds of the scale analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsaThresholds {
    pub theta: f64,
    /// Decay exponent `p` of the per-scale probability target `L^{−p}`.
    pub p: f64,
    /// Initial-scale probability threshold; the theorem's own value
    /// `(6Y+2)^{−4d}` is unreachable by Monte Carlo, so runs carry an
    /// explicit relaxed value.
    pub p0: f64,
    pub e1: f64,
    pub e2: f64,
    /// One-particle mass input `m*_τ` (estimated by n = 1 runs).
    pub m_star_tau: f64,
}

impl MsaThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.e1 > self.e2 && self.e2 > 0.0) {
            return Err(Error::InvalidParameter("need E⁽¹⁾ > E⁽²⁾ > 0".into()));
        }
        if self.theta <= 0.0 || self.p <= 0.0 || self.m_star_tau <= 0.0 {
            return Err(Error::InvalidParameter("θ, p, m*_τ must be positive".into()));
        }
        if !(0.0 < self.p0 && self.p0 < 1.0) {
            return Err(Error::InvalidParameter("p₀ must lie in (0,1)".into()));
        }
        Ok(())
    }

    /// The bootstrap theorem's own hypothesis `θ > 16d`.
    pub fn bootstrap_theta_gate(&self, d: usize) -> bool {
        self.theta > 16.0 * d as f64
    }

    /// The theorem's initial threshold `(6Y+2)^{−4d}`.
    pub fn theorem_p0(y: f64, d: usize) -> f64 {
        (6.0 * y + 2.0).powi(-4 * d as i32)
    }
}

/// Per-cell classification plus the interactivity tag (two-particle only).
#[derive(Debug, Clone)]
pub struct CellVerdict {
    pub center: Point,
    pub verdict: BoxVerdict,
    pub interactive: Option<bool>,
}

/// Classify every cell of a cover against one field.
pub fn classify_cover(
    cover: &Cover,
    field: &DisorderField,
    model: &ModelSpec,
    e: f64,
    params: &ClassificationParams,
) -> Result<Vec<CellVerdict>> {
    params.validate()?;
    let n = model.lattice.n;
    cover
        .cells
        .iter()
        .map(|cell| {
            let cls = BoxClassifier::build(cell, field, model)?;
            let interactive = if n == 2 {
                Some(is_interactive(&cls.geometry.region, model.interaction.range)?)
            } else {
                None
            };
            Ok(CellVerdict {
                center: cell.center.clone(),
                verdict: cls.verdict(e, params),
                interactive,
            })
        })
        .collect()
}

/// Maximum cardinality of a pairwise `ℓ`-distant subset of the given
/// centers (`dist_S > 8ℓ`), by branch and bound on the conflict graph.
/// Returns `(size, exact)`; `exact = false` means the node budget ran out
/// and `size` is only a lower bound.
pub fn max_distant_bad_set(centers: &[Point], cell_side: Half) -> Result<(usize, bool)> {
    let k = centers.len();
    let mut distant = vec![vec![false; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let d = dist_doubled(DistanceKind::Symmetrized, &centers[i], &centers[j])?;
            let far = d > 8 * cell_side.doubled();
            distant[i][j] = far;
            distant[j][i] = far;
        }
    }
    const NODE_BUDGET: usize = 2_000_000;
    let mut budget = NODE_BUDGET;
    let mut best = 0usize;
    let mut chosen: Vec<usize> = Vec::new();
    fn grow(
        next: usize,
        distant: &[Vec<bool>],
        chosen: &mut Vec<usize>,
        best: &mut usize,
        budget: &mut usize,
    ) -> bool {
        if *budget == 0 {
            return false;
        }
        *budget -= 1;
        let k = distant.len();
        *best = (*best).max(chosen.len());
        if chosen.len() + (k - next) <= *best {
            return true; // cannot beat the incumbent from here
        }
        let mut complete = true;
        for cand in next..k {
            if chosen.iter().all(|&c| distant[c][cand]) {
                chosen.push(cand);
                complete &= grow(cand + 1, distant, chosen, best, budget);
                chosen.pop();
            }
        }
        complete
    }
    let exact = grow(0, &distant, &mut chosen, &mut best, &mut budget);
    Ok((best, exact))
}

/// Margin gates of the first deterministic lemma, evaluated with exact
/// boundary counts in place of the generic `2·s_{2,d}·ℓ^{2d−1}`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepGates {
    /// `θ > 4d − 2 + s` and `Y ≥ 10 + 56J`.
    pub params_ok: bool,
    /// Value of `(2d − 1 − θ)(Y/2 − 3 − 28J) + s + θ` (needs `< 0`).
    pub exponent_margin: f64,
    pub exponent_ok: bool,
    /// Value of `B·(Yℓ)^s · B·ℓ^{−θ}` with `B` the worst exact cell
    /// boundary count (needs `≤ 1`).
    pub hop_margin: f64,
    pub hop_ok: bool,
    pub all: bool,
}

/// Full record of one deterministic first-lemma check.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub gates: StepGates,
    /// Hypothesis (i): the box is `(E,s)`-suitably nonresonant.
    pub box_nonresonant: bool,
    /// Hypothesis (ii): at most `J` pairwise `ℓ`-distant nonsuitable cells.
    pub bad_set_size: usize,
    pub bad_set_exact: bool,
    pub bad_budget_ok: bool,
    /// Hypothesis (iii): every `j(8ℓ+1)`-box at a cover center is
    /// `(E,s)`-suitably nonresonant.
    pub scaled_boxes_nonresonant: bool,
    pub hypotheses_hold: bool,
    pub conclusion_suitable: bool,
    /// Gates and hypotheses all hold: the conclusion is asserted.
    pub asserted: bool,
    pub cells: Vec<CellVerdict>,
}

/// Single-particle support needed by `deterministic_step_check`: the box
/// itself plus every `j(8ℓ+1)`-box at a cover center, `j ≤ J` (those boxes
/// overhang the big box).
pub fn step_support(outer: &BoxSpec, cell_side: Half, j_budget: usize) -> Result<Vec<Vec<i64>>> {
    let mut support = enumerate_box(outer)?.single_particle_support();
    let side = Half::from_doubled((8 * cell_side.doubled() + 2) * j_budget as i64);
    for center in cover_centers(&outer.center, outer.side, cell_side)? {
        let b = BoxSpec::new(DistanceKind::Symmetrized, center, side)?;
        support.extend(enumerate_box(&b)?.single_particle_support());
    }
    support.sort();
    support.dedup();
    Ok(support)
}

/// Check the first deterministic lemma on one realization: box of side
/// `L = Y·ℓ` with its `ℓ`-cover, cell suitability budget `J`, resonance
/// exponent `s`, suitability exponent `θ`.
#[allow(clippy::too_many_arguments)]
pub fn deterministic_step_check(
    outer: &BoxSpec,
    cell_side: Half,
    field: &DisorderField,
    model: &ModelSpec,
    e: f64,
    theta: f64,
    s: f64,
    j_budget: usize,
) -> Result<StepReport> {
    let d = model.lattice.d as f64;
    let cover = partial_cover(outer, cell_side)?;
    let params = ClassificationParams {
        theta,
        mass: 1.0,
        zeta: 0.5,
        s,
        beta: 0.5,
    };
    let cells = classify_cover(&cover, field, model, e, &params)?;

    // Exact boundary counts for the hop gate.
    let mut worst_boundary = 0usize;
    for cell in &cover.cells {
        worst_boundary = worst_boundary.max(BoxGeometry::build(cell)?.boundary_edge_count);
    }

    let y = outer.side.as_f64() / cell_side.as_f64();
    let j = j_budget as f64;
    let params_ok = theta > 4.0 * d - 2.0 + s
        && outer.side.doubled() >= (10 + 56 * j_budget as i64) * cell_side.doubled();
    let exponent_margin = (2.0 * d - 1.0 - theta) * (y / 2.0 - 3.0 - 28.0 * j) + s + theta;
    let ell = cell_side.as_f64();
    let big = outer.side.as_f64();
    let hop_margin =
        (worst_boundary as f64) * big.powf(s) * (worst_boundary as f64) * ell.powf(-theta);
    let gates = StepGates {
        params_ok,
        exponent_margin,
        exponent_ok: exponent_margin < 0.0,
        hop_margin,
        hop_ok: hop_margin <= 1.0,
        all: params_ok && exponent_margin < 0.0 && hop_margin <= 1.0,
    };

    // Hypothesis (i) and the conclusion share the big-box eigensolve.
    let big_cls = BoxClassifier::build(outer, field, model)?;
    let box_nonresonant = big_cls.data.spectral_dist(e) >= big.powf(-s);
    let conclusion_suitable = big_cls.geometry.is_suitable(&big_cls.data, e, theta);

    let bad_centers: Vec<Point> = cells
        .iter()
        .filter(|c| !c.verdict.suitable)
        .map(|c| c.center.clone())
        .collect();
    let (bad_set_size, bad_set_exact) = max_distant_bad_set(&bad_centers, cell_side)?;
    let bad_budget_ok = bad_set_size <= j_budget;

    let mut scaled_boxes_nonresonant = true;
    'outer: for jj in 1..=j_budget {
        let side = Half::from_doubled((8 * cell_side.doubled() + 2) * jj as i64);
        for y_center in cover_centers(&outer.center, outer.side, cell_side)? {
            let b = BoxSpec::new(DistanceKind::Symmetrized, y_center, side)?;
            let region = enumerate_box(&b)?;
            let vals = eigenvalues_only(&crate::model::assemble(&region, field, model)?)?;
            let dist = vals.iter().map(|l| (l - e).abs()).fold(f64::INFINITY, f64::min);
            if dist < side.as_f64().powf(-s) {
                scaled_boxes_nonresonant = false;
                break 'outer;
            }
        }
    }

    let hypotheses_hold = box_nonresonant && bad_budget_ok && scaled_boxes_nonresonant;
    Ok(StepReport {
        gates,
        box_nonresonant,
        bad_set_size,
        bad_set_exact,
        bad_budget_ok,
        scaled_boxes_nonresonant,
        hypotheses_hold,
        conclusion_suitable,
        asserted: gates.all && hypotheses_hold,
        cells,
    })
}

/// Monte-Carlo estimate for one representative center.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CenterProbe {
    pub center_label: String,
    pub trials: u64,
    pub hits: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Representative-center sweep standing in for `sup_x`: for `n = 2`,
/// `((0), (s·e₁))` with `s ∈ {0, …, ⌈L⌉ + r₀ + 2}` plus the non-interactive
/// representative `s = 2⌈L⌉`; translation invariance leaves `{0}` for
/// `n = 1`.
pub fn representative_centers(lat: LatticeConfig, side: Half, r0: i64) -> Result<Vec<Point>> {
    if lat.n == 1 {
        return Ok(vec![Point::site(lat, &vec![0; lat.d])?]);
    }
    if lat.n != 2 {
        return Err(Error::Precondition("center sweeps are defined for n ≤ 2".into()));
    }
    let l_ceil = (side.doubled() + 1) / 2;
    let mut out = Vec::new();
    let mut shifts: Vec<i64> = (0..=(l_ceil + r0 + 2)).collect();
    shifts.push(2 * l_ceil);
    for s in shifts {
        let mut coords = vec![0i64; 2 * lat.d];
        coords[lat.d] = s; // first axis of the second particle
        out.push(Point::site(lat, &coords)?);
    }
    Ok(out)
}

/// Estimate `P{Λ_{S;L}(x) is (θ,E)-nonsuitable}` per representative center.
#[allow(clippy::too_many_arguments)]
pub fn estimate_nonsuitable_prob(
    model: &ModelSpec,
    kind: DistanceKind,
    theta: f64,
    e: f64,
    side: Half,
    centers: &[Point],
    trials: u64,
    master_seed: u64,
) -> Result<Vec<CenterProbe>> {
    centers
        .iter()
        .enumerate()
        .map(|(ci, center)| {
            let spec = BoxSpec::new(kind, center.clone(), side)?;
            let geometry = BoxGeometry::build(&spec)?;
            let support = geometry.region.single_particle_support();
            let center_seed = mix(master_seed, ci as u64);
            let hits: u64 = parallel_trials(trials, |t| {
                let field = sample_disorder(model, &support, trial_seed(center_seed, t))?;
                let data = geometry.solve(&field, model)?;
                Ok(!geometry.is_suitable(&data, e, theta) as u64)
            })?
            .iter()
            .sum();
            let p_hat = hits as f64 / trials as f64;
            let (ci_lo, ci_hi) = clopper_pearson(hits, trials, 0.99);
            Ok(CenterProbe {
                center_label: center.to_string(),
                trials,
                hits,
                p_hat,
                ci_lo,
                ci_hi,
            })
        })
        .collect()
}

/// The scale-recursion overlay
/// `(L_{k+1}^{−p} + ((6Y+2)^{2d}·p_k)^{J+1}) / 2` applied to an estimate.
pub fn recursion_bound(p_prev: f64, l_next: f64, p_exp: f64, y: f64, d: usize, j: usize) -> f64 {
    0.5 * (l_next.powf(-p_exp) + ((6.0 * y + 2.0).powi(2 * d as i32) * p_prev).powi(j as i32 + 1))
}

/// One scale of a recursion trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecursionRow {
    pub k: usize,
    pub side: f64,
    pub probes: Vec<CenterProbe>,
    /// Worst empirical nonsuitable probability over the center sweep.
    pub p_max: f64,
    /// Recursion overlay computed from the previous row's `p_max`.
    pub bound_from_previous: Option<f64>,
}

/// Full trace of a scale recursion run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecursionTrace {
    pub rows: Vec<RecursionRow>,
    /// Scales beyond the dense ceiling were dropped.
    pub truncated: bool,
}

/// Trace nonsuitable probabilities across scales `L₀, L₁, …` and overlay
/// the recursion bound (diagnostic; the bound is not asserted).
#[allow(clippy::too_many_arguments)]
pub fn run_scale_recursion(
    schedule: &ScaleSchedule,
    thresholds: &MsaThresholds,
    model: &ModelSpec,
    e: f64,
    trials: u64,
    master_seed: u64,
    k_max: usize,
) -> Result<RecursionTrace> {
    schedule.validate()?;
    thresholds.validate()?;
    let kind = if model.lattice.n == 1 {
        DistanceKind::Infinity
    } else {
        DistanceKind::Symmetrized
    };
    let y = match schedule.growth {
        ScaleGrowth::Multiplicative { y } => y,
        ScaleGrowth::Power { gamma } => gamma,
    };
    let mut rows = Vec::new();
    let mut truncated = false;
    let mut side = schedule.l0;
    let mut prev_p: Option<f64> = None;
    for k in 0..=k_max {
        let centers = representative_centers(model.lattice, side, model.interaction.range)?;
        let test_region = enumerate_box(&BoxSpec::new(kind, centers[0].clone(), side)?)?;
        if test_region.len() > crate::spectral::DENSE_CEILING {
            truncated = true;
            break;
        }
        let probes = estimate_nonsuitable_prob(
            model,
            kind,
            thresholds.theta,
            e,
            side,
            &centers,
            trials,
            mix(master_seed, k as u64),
        )?;
        let p_max = probes.iter().map(|p| p.p_hat).fold(0.0, f64::max);
        let bound_from_previous = prev_p.map(|p| {
            recursion_bound(p, side.as_f64(), thresholds.p, y, model.lattice.d, schedule.j_budget)
        });
        rows.push(RecursionRow {
            k,
            side: side.as_f64(),
            probes,
            p_max,
            bound_from_previous,
        });
        prev_p = Some(p_max);
        side = schedule.next_scale(side);
    }
    Ok(RecursionTrace { rows, truncated })
}

/// Flags of the energy-interval preliminary classification of a
/// non-interactive symmetrized two-particle box.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreregReport {
    pub lregular: bool,
    pub rregular: bool,
    pub preregular: bool,
    pub lnr: bool,
    pub rnr: bool,
    pub hnr: bool,
    /// Propagated mass `m(L)` of the conclusion.
    pub m_of_l: f64,
    pub conclusion_regular: bool,
    pub max_green: Option<f64>,
    /// Count of `9ℓ`-boxes that entered the nonresonance scan.
    pub nine_ell_boxes: usize,
    /// HNR ∧ preregular: the conclusion is asserted.
    pub asserted: bool,
}

/// Thresholds of the preliminary classification.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PreregThresholds {
    pub m_star_tau: f64,
    pub e1: f64,
    pub beta: f64,
    pub kappa: f64,
}

/// Evaluate L/R-regularity, L/R-nonresonance, and the propagated
/// two-particle regularity of a non-interactive symmetrized box with
/// one-particle covers of cell side `ℓ`.
pub fn preregularity_classify(
    outer: &BoxSpec,
    cell_side: Half,
    field: &DisorderField,
    model: &ModelSpec,
    e: f64,
    thr: &PreregThresholds,
) -> Result<PreregReport> {
    let lat = outer.lattice();
    if lat.n != 2 || outer.kind != DistanceKind::Symmetrized {
        return Err(Error::Precondition("need a symmetrized two-particle box".into()));
    }
    let region = enumerate_box(outer)?;
    if is_interactive(&region, model.interaction.range)? {
        return Err(Error::Precondition("box must be non-interactive".into()));
    }
    let spec1p = one_particle_spec(model)?;
    let lat1 = spec1p.lattice;
    let side = outer.side;

    // One-particle blocks and their spectra.
    let mut block_data = Vec::new();
    for particle in 0..2 {
        let c = Point::from_doubled(lat1, outer.center.particle(particle).to_vec())?;
        let spec = BoxSpec::new(DistanceKind::Infinity, c.clone(), side)?;
        let cls = BoxClassifier::build(&spec, field, &spec1p)?;
        block_data.push((c, cls));
    }

    let mut side_flags = Vec::new(); // (regular-side flag, nonresonant-side flag)
    let mut nine_ell_boxes = 0usize;
    for (this, other) in [(0usize, 1usize), (1, 0)] {
        let (c_this, _) = &block_data[this];
        let (_, cls_other) = &block_data[other];
        let shifts: Vec<f64> = cls_other
            .data
            .eigenvalues
            .iter()
            .filter(|&&mu| mu <= thr.e1)
            .map(|&mu| e - mu)
            .collect();

        // Cells of the one-particle cover, with pairwise disjointness.
        let centers = cover_centers(c_this, side, cell_side)?;
        let mut cell_geoms = Vec::new();
        for c in &centers {
            let spec = BoxSpec::new(DistanceKind::Infinity, c.clone(), cell_side)?;
            cell_geoms.push(BoxGeometry::build(&spec)?);
        }
        let cell_data: Vec<_> = cell_geoms
            .iter()
            .map(|g| g.solve(field, &spec1p))
            .collect::<Result<_>>()?;

        let mut regular_side = true;
        'shift: for &ep in &shifts {
            let bad: Vec<usize> = (0..cell_geoms.len())
                .filter(|&i| !cell_geoms[i].is_regular(&cell_data[i], ep, thr.m_star_tau))
                .collect();
            for (ai, &a) in bad.iter().enumerate() {
                for &b in &bad[ai + 1..] {
                    if !cell_geoms[a].region.intersects(&cell_geoms[b].region) {
                        regular_side = false;
                        break 'shift;
                    }
                }
            }
        }

        // Nonresonance of the 9ℓ-boxes contained in the one-particle box.
        let nine = Half::from_doubled(9 * cell_side.doubled());
        let mut nonres_side = true;
        for a in &centers {
            let fits = a
                .doubled()
                .iter()
                .zip(c_this.doubled())
                .all(|(ac, cc)| 2 * (ac - cc).abs() <= side.doubled() - nine.doubled());
            if !fits {
                continue;
            }
            nine_ell_boxes += 1;
            let spec = BoxSpec::new(DistanceKind::Infinity, a.clone(), nine)?;
            let r = enumerate_box(&spec)?;
            let vals = eigenvalues_only(&crate::model::assemble(&r, field, &spec1p)?)?;
            for &ep in &shifts {
                let dist = vals.iter().map(|l| (l - ep).abs()).fold(f64::INFINITY, f64::min);
                if resonance_margins(dist, nine.as_f64(), 1.0, thr.beta).beta_resonant {
                    nonres_side = false;
                    break;
                }
            }
            if !nonres_side {
                break;
            }
        }
        side_flags.push((regular_side, nonres_side));
    }

    let (lregular, lnr) = side_flags[0];
    let (rregular, rnr) = side_flags[1];
    let preregular = lregular && rregular;
    let hnr = lnr && rnr;

    let m_of_l = m_of_scale(thr.m_star_tau, lat.d, thr.kappa, side.as_f64());
    let big = BoxClassifier::build(outer, field, model)?;
    let (conclusion_regular, max_green) = match big.max_green(e) {
        Some((g, _)) => (g <= (-m_of_l * side.as_f64() / 2.0).exp(), Some(g)),
        None => (false, None),
    };

    Ok(PreregReport {
        lregular,
        rregular,
        preregular,
        lnr,
        rnr,
        hnr,
        m_of_l,
        conclusion_regular,
        max_green,
        nine_ell_boxes,
        asserted: hnr && preregular,
    })
}

/// Ensemble estimate of the event `R(m, I, x, y, L)`: some `E ∈ I` makes
/// both boxes `(m, E)`-nonregular.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventRReport {
    pub trials: u64,
    pub hits: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Diagnostic overlay `e^{−L^{ζ₂}}` from the interval analysis.
    pub overlay: f64,
    pub energy_points: usize,
}

/// Estimate `P{R(m, I, x, y, L)}` with the `∃E` quantifier discretized on
/// a uniform grid joined with the finite-volume eigenvalues in `I`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_event_r(
    model: &ModelSpec,
    mass: f64,
    interval: (f64, f64),
    x: &Point,
    y: &Point,
    side: Half,
    n_e_grid: usize,
    trials: u64,
    master_seed: u64,
    zeta2: f64,
) -> Result<EventRReport> {
    if x == y {
        return Err(Error::Precondition("the two centers must differ".into()));
    }
    let lat = model.lattice;
    let rect = |c: &Point| {
        crate::geometry::RectangleSpec::new(true, c.clone(), vec![side; lat.n])
    };
    if separation_class(&rect(x)?, &rect(y)?)? == SeparationClass::Neither {
        return Err(Error::Precondition("pair must be partially separated".into()));
    }
    let gx = BoxGeometry::build(&BoxSpec::new(DistanceKind::Symmetrized, x.clone(), side)?)?;
    let gy = BoxGeometry::build(&BoxSpec::new(DistanceKind::Symmetrized, y.clone(), side)?)?;
    let support = {
        let mut s = gx.region.single_particle_support();
        s.extend(gy.region.single_particle_support());
        s.sort();
        s.dedup();
        s
    };
    let grid: Vec<f64> = (0..n_e_grid)
        .map(|i| interval.0 + (interval.1 - interval.0) * (i as f64 + 0.5) / n_e_grid as f64)
        .collect();
    let mut energy_points = grid.len();

    let results = parallel_trials(trials, |t| {
        let field = sample_disorder(model, &support, trial_seed(master_seed, t))?;
        let dx = gx.solve(&field, model)?;
        let dy = gy.solve(&field, model)?;
        let mut energies = grid.clone();
        for v in dx.eigenvalues.iter().chain(dy.eigenvalues.iter()) {
            if interval.0 <= *v && *v <= interval.1 {
                energies.push(*v);
            }
        }
        let hit = energies.iter().any(|&e| {
            !gx.is_regular(&dx, e, mass) && !gy.is_regular(&dy, e, mass)
        });
        Ok((hit, energies.len()))
    })?;
    let hits = results.iter().filter(|r| r.0).count() as u64;
    energy_points = energy_points.max(results.iter().map(|r| r.1).max().unwrap_or(0));
    let p_hat = hits as f64 / trials as f64;
    let (ci_lo, ci_hi) = clopper_pearson(hits, trials, 0.99);
    Ok(EventRReport {
        trials,
        hits,
        p_hat,
        ci_lo,
        ci_hi,
        overlay: (-side.as_f64().powf(zeta2)).exp(),
        energy_points,
    })
}

/// `E` is resonant for solving iff within solve tolerance of the spectrum.
pub fn resonant_for_solve(spectral_dist: f64, scale: f64) -> bool {
    spectral_dist <= RESONANCE_SOLVE_TOL * scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DisorderLaw, InteractionSpec};
    use crate::rng::Stream;

    fn model(n: usize, d: usize, coupling: f64) -> ModelSpec {
        ModelSpec::new(
            LatticeConfig::new(n, d).unwrap(),
            DisorderLaw::Uniform { m_plus: 1.0 },
            coupling,
            InteractionSpec::none(d),
        )
        .unwrap()
    }

    #[test]
    fn exponent_family_validation() {
        MsaExponents::default_family().validate().unwrap();
        let mut bad = MsaExponents::default_family();
        bad.zeta = 0.5; // breaks ζ < ζ₂
        assert!(bad.validate().is_err());
        let mut bad2 = MsaExponents::default_family();
        bad2.kappa = 0.4; // breaks κ < γ(1−β) = 0.25
        assert!(bad2.validate().is_err());
        let mut bad3 = MsaExponents::default_family();
        bad3.gamma = 1.6; // breaks γζ₁ < β
        assert!(bad3.validate().is_err());
    }

    #[test]
    fn margin_arithmetic_instantiation() {
        // θ = 10, d = 1, s = 5, J = 1, Y = 66:
        // (2d−1−θ)(Y/2−3−28J) + s + θ = (−9)(2) + 15 = −3.
        let v = (2.0 * 1.0 - 1.0 - 10.0) * (66.0 / 2.0 - 3.0 - 28.0) + 5.0 + 10.0;
        assert_eq!(v, -3.0);
    }

    #[test]
    fn theorem_p0_is_astronomically_small() {
        let p0 = MsaThresholds::theorem_p0(66.0, 1);
        assert!((p0 - 398f64.powi(-4)).abs() < 1e-20);
        assert!(p0 < 4.0e-11 && p0 > 3.9e-11);
    }

    #[test]
    fn recursion_bound_hand_values() {
        // Y = 3, d = 1, J = 1, p = 1, L₁ = 18, p̂₀ = 0.1:
        // ((18)^{-1} + (20²·0.1)²)/2 = (0.05555… + 1600)/2.
        let b = recursion_bound(0.1, 18.0, 1.0, 3.0, 1, 1);
        assert!((b - 0.5 * (1.0 / 18.0 + 1600.0)).abs() < 1e-12);
        // Free model: p̂ = 0 collapses the second term.
        let b0 = recursion_bound(0.0, 18.0, 2.0, 3.0, 1, 1);
        assert!((b0 - 0.5 * 18f64.powf(-2.0)).abs() < 1e-18);
    }

    #[test]
    fn m_of_scale_arithmetic() {
        let m = m_of_scale(2.0, 1, 0.5, 27.0);
        let expect = 2.0 - 0.5 / 27f64.sqrt() - 12.0 * 54f64.ln() / 27.0;
        assert!((m - expect).abs() < 1e-14);
        assert!(m > 0.12 && m < 0.14);
    }

    #[test]
    fn distant_bad_set_small_cases() {
        let lat = LatticeConfig::new(2, 1).unwrap();
        let p = |a: i64, b: i64| Point::site(lat, &[a, b]).unwrap();
        let side = Half::int(2);
        assert_eq!(max_distant_bad_set(&[], side).unwrap(), (0, true));
        // Two centers at symmetrized distance 17ℓ > 8ℓ.
        assert_eq!(
            max_distant_bad_set(&[p(0, 0), p(34, 34)], side).unwrap(),
            (2, true)
        );
        // Two close centers cannot both be picked.
        assert_eq!(
            max_distant_bad_set(&[p(0, 0), p(3, 3)], side).unwrap(),
            (1, true)
        );
    }

    #[test]
    fn distant_bad_set_matches_exhaustive() {
        let lat = LatticeConfig::new(1, 1).unwrap();
        let side = Half::int(3);
        let mut st = Stream::new(19);
        for _ in 0..25 {
            let centers: Vec<Point> = (0..10)
                .map(|_| Point::site(lat, &[st.next_range(-120, 120)]).unwrap())
                .collect();
            let (got, exact) = max_distant_bad_set(&centers, side).unwrap();
            assert!(exact);
            // Exhaustive subset enumeration.
            let mut best = 0usize;
            for mask in 0u32..(1 << centers.len()) {
                let picked: Vec<&Point> = (0..centers.len())
                    .filter(|i| mask >> i & 1 == 1)
                    .map(|i| &centers[i])
                    .collect();
                let ok = picked.iter().enumerate().all(|(i, a)| {
                    picked[i + 1..].iter().all(|b| {
                        dist_doubled(DistanceKind::Symmetrized, a, b).unwrap()
                            > 8 * side.doubled()
                    })
                });
                if ok {
                    best = best.max(picked.len());
                }
            }
            assert_eq!(got, best);
        }
    }

    #[test]
    fn classify_cover_free_model_below_spectrum() {
        let m = model(2, 1, 0.0);
        let outer = BoxSpec::new(
            DistanceKind::Symmetrized,
            Point::site(m.lattice, &[0, 0]).unwrap(),
            Half::int(30),
        )
        .unwrap();
        let cover = partial_cover(&outer, Half::int(6)).unwrap();
        let support = enumerate_box(&outer).unwrap().single_particle_support();
        let field = sample_disorder(&m, &support, 0).unwrap();
        let params = ClassificationParams {
            theta: 1.5,
            mass: 0.3,
            zeta: 0.5,
            s: 0.5,
            beta: 0.5,
        };
        let verdicts = classify_cover(&cover, &field, &m, -6.0, &params).unwrap();
        assert_eq!(verdicts.len(), cover.cells.len());
        assert!(verdicts.iter().all(|v| v.verdict.suitable));
        assert!(verdicts.iter().all(|v| v.interactive.is_some()));
    }

    #[test]
    fn representative_center_sweep() {
        let lat1 = LatticeConfig::new(1, 1).unwrap();
        assert_eq!(representative_centers(lat1, Half::int(6), 1).unwrap().len(), 1);
        let lat2 = LatticeConfig::new(2, 1).unwrap();
        let centers = representative_centers(lat2, Half::int(6), 1).unwrap();
        // s ∈ {0, …, 6+1+2} plus s = 12.
        assert_eq!(centers.len(), 11);
        let last = centers.last().unwrap();
        assert_eq!(last.particle(1)[0], 24); // doubled
    }

    #[test]
    fn deterministic_step_free_model_asserts_and_holds() {
        // n = 1, ℓ = 6, Y = 66, θ = 2.5, s = 0.25: all margin gates hold
        // with exact boundary counts, and at E = −4 the free chain is
        // deterministically nonresonant and suitable at every level.
        let m = model(1, 1, 0.0);
        let outer = BoxSpec::new(
            DistanceKind::Symmetrized,
            Point::site(m.lattice, &[0]).unwrap(),
            Half::int(396),
        )
        .unwrap();
        let support = step_support(&outer, Half::int(6), 1).unwrap();
        let field = sample_disorder(&m, &support, 0).unwrap();
        let rep = deterministic_step_check(
            &outer,
            Half::int(6),
            &field,
            &m,
            -4.0,
            2.5,
            0.25,
            1,
        )
        .unwrap();
        assert!(rep.gates.params_ok && rep.gates.exponent_ok && rep.gates.hop_ok, "{:?}", rep.gates);
        assert!(rep.hypotheses_hold, "hyp: nonres={} bad={} scaled={}",
            rep.box_nonresonant, rep.bad_set_size, rep.scaled_boxes_nonresonant);
        assert!(rep.asserted);
        assert!(rep.conclusion_suitable);
        assert_eq!(rep.cells.len(), 129);
    }

    #[test]
    fn preregularity_deep_localization_asserts() {
        let m = model(2, 1, 15.0);
        let lat = m.lattice;
        let outer = BoxSpec::new(
            DistanceKind::Symmetrized,
            Point::site(lat, &[0, 40]).unwrap(),
            Half::int(27),
        )
        .unwrap();
        let support = enumerate_box(&outer).unwrap().single_particle_support();
        let field = sample_disorder(&m, &support, 11).unwrap();
        let thr = PreregThresholds {
            m_star_tau: 2.0,
            e1: 30.0,
            beta: 0.8,
            kappa: 0.5,
        };
        let rep = preregularity_classify(&outer, Half::int(3), &field, &m, -5.0, &thr).unwrap();
        assert!(rep.hnr && rep.preregular, "{rep:?}");
        assert!(rep.asserted);
        assert!(rep.conclusion_regular, "{rep:?}");
        assert!(rep.m_of_l > 0.12 && rep.m_of_l < 0.14);
        assert_eq!(rep.nine_ell_boxes, 2); // one concentric box per particle

        // Interactive boxes are rejected.
        let close = BoxSpec::new(
            DistanceKind::Symmetrized,
            Point::site(lat, &[0, 2]).unwrap(),
            Half::int(27),
        )
        .unwrap();
        assert!(preregularity_classify(&close, Half::int(3), &field, &m, -5.0, &thr).is_err());
    }

    #[test]
    fn preregularity_left_right_symmetry() {
        // Swapping the particle blocks swaps the L/R flags.
        let m = model(2, 1, 4.0);
        let lat = m.lattice;
        let mk = |a: i64, b: i64| {
            BoxSpec::new(
                DistanceKind::Symmetrized,
                Point::site(lat, &[a, b]).unwrap(),
                Half::int(27),
            )
            .unwrap()
        };
        let thr = PreregThresholds {
            m_star_tau: 3.6,
            e1: 12.0,
            beta: 0.8,
            kappa: 0.5,
        };
        for seed in 0..6u64 {
            let fwd = mk(0, 40);
            let rev = mk(40, 0);
            let support = enumerate_box(&fwd).unwrap().single_particle_support();
            let field = sample_disorder(&m, &support, seed).unwrap();
            let a = preregularity_classify(&fwd, Half::int(3), &field, &m, 0.4, &thr).unwrap();
            let b = preregularity_classify(&rev, Half::int(3), &field, &m, 0.4, &thr).unwrap();
            assert_eq!(a.lregular, b.rregular);
            assert_eq!(a.rregular, b.lregular);
            assert_eq!(a.lnr, b.rnr);
            assert_eq!(a.rnr, b.lnr);
            assert_eq!(a.conclusion_regular, b.conclusion_regular);
        }
    }

    #[test]
    fn event_r_far_interval_never_fires() {
        let m = model(2, 1, 1.0);
        let lat = m.lattice;
        let x = Point::site(lat, &[0, 0]).unwrap();
        let y = Point::site(lat, &[0, 20]).unwrap();
        let rep = estimate_event_r(
            &m,
            0.4,
            (-10.0, -9.0),
            &x,
            &y,
            Half::int(6),
            16,
            40,
            5,
            0.45,
        )
        .unwrap();
        assert_eq!(rep.hits, 0);
        assert!(rep.overlay > 0.0);
        // Identical centers are rejected.
        assert!(estimate_event_r(&m, 0.4, (-1.0, 0.0), &x, &x, Half::int(6), 8, 4, 5, 0.45)
            .is_err());
    }

    #[test]
    fn free_recursion_trace_is_zero() {
        let m = model(1, 1, 0.0);
        let schedule = ScaleSchedule {
            l0: Half::int(6),
            growth: ScaleGrowth::Multiplicative { y: 3.0 },
            j_budget: 1,
            exponents: MsaExponents::default_family(),
        };
        let thresholds = MsaThresholds {
            theta: 1.5,
            p: 2.0,
            p0: 0.3,
            e1: 2.0,
            e2: 1.0,
            m_star_tau: 0.5,
        };
        let trace = run_scale_recursion(&schedule, &thresholds, &m, -4.0, 20, 1, 1).unwrap();
        assert_eq!(trace.rows.len(), 2);
        assert!(trace.rows.iter().all(|r| r.p_max == 0.0));
        assert!((trace.rows[1].side - 18.0).abs() < 1e-12);
        let bound = trace.rows[1].bound_from_previous.unwrap();
        assert!((bound - 0.5 * 18f64.powf(-2.0)).abs() < 1e-15);
    }
}
