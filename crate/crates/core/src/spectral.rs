//! Eigensolves, Green-function entries, and box classification.
//!
//! A single dense symmetric eigensolve backs everything at desk scale;
//! linear solves of `(H − z)w = δ_v` are kept as an independent route and
//! cross-checked against the eigen-expansion in tests.

use crate::geometry::{
    boundary_sets, dist_doubled, enumerate_box, BoxSpec, DistanceKind, LatticeConfig, Point, Region,
};
use crate::model::{assemble, DisorderField, InteractionSpec, ModelSpec, OperatorMatrix};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Largest region size accepted by the dense eigensolve.
pub const DENSE_CEILING: usize = 4000;

/// Relative tolerance below which an energy counts as resonant for solves.
pub const RESONANCE_SOLVE_TOL: f64 = 1e-12;

/// Eigenvalues (ascending) and orthonormal eigenvectors of a finite-volume
/// restriction, columns aligned with the region's site order.
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

/// Dense symmetric eigensolve.
pub fn eig(op: &OperatorMatrix) -> Result<SpectralData> {
    let n = op.matrix.nrows();
    if n > DENSE_CEILING {
        return Err(Error::DenseCeiling(n, DENSE_CEILING));
    }
    let se = op.matrix.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        eigenvectors.set_column(col, &se.eigenvectors.column(i));
    }
    Ok(SpectralData {
        eigenvalues,
        eigenvectors,
    })
}

/// Eigenvalues only (ascending), skipping the eigenvector pass.
pub fn eigenvalues_only(op: &OperatorMatrix) -> Result<Vec<f64>> {
    let n = op.matrix.nrows();
    if n > DENSE_CEILING {
        return Err(Error::DenseCeiling(n, DENSE_CEILING));
    }
    let mut vals: Vec<f64> = op.matrix.clone().symmetric_eigenvalues().iter().cloned().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(vals)
}

impl SpectralData {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Distance from `e` to the finite-volume spectrum.
    pub fn spectral_dist(&self, e: f64) -> f64 {
        self.eigenvalues
            .iter()
            .map(|l| (l - e).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Distance from a complex `z` to the spectrum.
    pub fn spectral_dist_complex(&self, z: Complex64) -> f64 {
        self.eigenvalues
            .iter()
            .map(|l| ((l - z.re) * (l - z.re) + z.im * z.im).sqrt())
            .fold(f64::INFINITY, f64::min)
    }

    /// Spectral scale used for relative resonance tests.
    pub fn scale(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|l| l.abs())
            .fold(1.0, f64::max)
    }

    /// Green entry by eigen-expansion: `Σ_j ψ_j(u) ψ_j(v) / (λ_j − z)`.
    pub fn green(&self, z: Complex64, u: usize, v: usize) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, &l) in self.eigenvalues.iter().enumerate() {
            let w = self.eigenvectors[(u, j)] * self.eigenvectors[(v, j)];
            acc += Complex64::new(w, 0.0) / (Complex64::new(l, 0.0) - z);
        }
        acc
    }

    /// Real-energy Green block `G[rows, cols]` by eigen-expansion.
    pub fn green_block(&self, e: f64, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        let n = self.dim();
        let mut w = DMatrix::<f64>::zeros(rows.len(), n);
        for (i, &r) in rows.iter().enumerate() {
            for j in 0..n {
                w[(i, j)] = self.eigenvectors[(r, j)] / (self.eigenvalues[j] - e);
            }
        }
        let mut v = DMatrix::<f64>::zeros(n, cols.len());
        for (k, &c) in cols.iter().enumerate() {
            for j in 0..n {
                v[(j, k)] = self.eigenvectors[(c, j)];
            }
        }
        w * v
    }

    /// Residual and orthonormality check (used by tests; O(N³)).
    pub fn validate(&self, op: &OperatorMatrix) -> Result<()> {
        let n = self.dim();
        let scale = op.matrix.norm();
        for j in 0..n {
            let v = self.eigenvectors.column(j);
            let res = (&op.matrix * v - self.eigenvalues[j] * v).norm();
            if res > 1e-10 * scale.max(1.0) {
                return Err(Error::Precondition(format!(
                    "eigenpair {j} residual {res:e} exceeds tolerance"
                )));
            }
        }
        let gram = self.eigenvectors.transpose() * &self.eigenvectors;
        let dev = (&gram - DMatrix::<f64>::identity(n, n)).norm();
        if dev > 1e-10 * (n as f64).sqrt() {
            return Err(Error::Precondition(format!(
                "eigenbasis orthonormality deviation {dev:e}"
            )));
        }
        Ok(())
    }
}

fn solve_lu_complex(m: DMatrix<Complex64>, rhs: DVector<Complex64>) -> Result<DVector<Complex64>> {
    let lu = m.lu();
    let diag_max = (0..lu.u().nrows())
        .map(|i| lu.u()[(i, i)].norm())
        .fold(0.0, f64::max);
    let diag_min = (0..lu.u().nrows())
        .map(|i| lu.u()[(i, i)].norm())
        .fold(f64::INFINITY, f64::min);
    if diag_min <= RESONANCE_SOLVE_TOL * diag_max.max(1.0) {
        return Err(Error::Resonant(diag_min));
    }
    lu.solve(&rhs).ok_or(Error::Resonant(0.0))
}

/// Solve `(H − z)w = δ_v` and return the whole column of Green entries.
pub fn green_column(op: &OperatorMatrix, z: Complex64, v: usize) -> Result<DVector<Complex64>> {
    let n = op.matrix.nrows();
    let mut m = op.matrix.map(|x| Complex64::new(x, 0.0));
    for i in 0..n {
        m[(i, i)] -= z;
    }
    let mut rhs = DVector::from_element(n, Complex64::new(0.0, 0.0));
    rhs[v] = Complex64::new(1.0, 0.0);
    solve_lu_complex(m, rhs)
}

/// Green entry `⟨δ_u, (H_Θ − z)^{-1} δ_v⟩` by direct linear solve.
pub fn green_entry(op: &OperatorMatrix, z: Complex64, u: &Point, v: &Point) -> Result<Complex64> {
    let ui = op
        .region
        .index_of(u)
        .ok_or_else(|| Error::Precondition(format!("{u} outside the region")))?;
    let vi = op
        .region
        .index_of(v)
        .ok_or_else(|| Error::Precondition(format!("{v} outside the region")))?;
    Ok(green_column(op, z, vi)?[ui])
}

/// Exponents and thresholds for box classification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassificationParams {
    /// Polynomial suitability exponent `θ`.
    pub theta: f64,
    /// Exponential-regularity mass `m`.
    pub mass: f64,
    /// Sub-exponential exponent `ζ ∈ (0,1)`.
    pub zeta: f64,
    /// Suitable-resonance exponent `s`.
    pub s: f64,
    /// Resonance exponent `β ∈ (0,1)`.
    pub beta: f64,
}

impl ClassificationParams {
    pub fn validate(&self) -> Result<()> {
        if self.theta <= 0.0 || self.mass <= 0.0 || self.s <= 0.0 {
            return Err(Error::InvalidParameter("θ, m, s must be positive".into()));
        }
        if !(0.0 < self.zeta && self.zeta < 1.0) || !(0.0 < self.beta && self.beta < 1.0) {
            return Err(Error::InvalidParameter("ζ and β must lie in (0,1)".into()));
        }
        Ok(())
    }
}

/// Distance of the finite-volume spectrum to `E` against both resonance
/// thresholds (`ℓ^{−s}` and `½·e^{−ℓ^β}`, `ℓ` the relevant side).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceMargins {
    pub spectral_dist: f64,
    pub suitable_threshold: f64,
    pub beta_threshold: f64,
    pub suitably_resonant: bool,
    pub beta_resonant: bool,
}

pub fn resonance_margins(spectral_dist: f64, side: f64, s: f64, beta: f64) -> ResonanceMargins {
    let suitable_threshold = side.powf(-s);
    let beta_threshold = 0.5 * (-side.powf(beta)).exp();
    ResonanceMargins {
        spectral_dist,
        suitable_threshold,
        beta_threshold,
        suitably_resonant: spectral_dist < suitable_threshold,
        beta_resonant: spectral_dist < beta_threshold,
    }
}

/// Verdict of one box at one energy.
#[derive(Debug, Clone)]
pub struct BoxVerdict {
    /// `E` too close to the spectrum for a trustworthy solve; all decay
    /// flags are false and `max_green` is absent.
    pub resonant: bool,
    pub suitable: bool,
    pub regular: bool,
    pub ses: bool,
    /// Worst Green magnitude over inner-third × inner-boundary pairs.
    pub max_green: Option<f64>,
    pub witness: Option<(Point, Point)>,
    pub margins: ResonanceMargins,
    pub suitable_threshold: f64,
    pub regular_threshold: f64,
    pub ses_threshold: f64,
}

/// Enumerated geometry of one box: region, inner-third rows, `∂₋` columns.
///
/// Built once per box and reused across disorder realizations.
#[derive(Debug, Clone)]
pub struct BoxGeometry {
    pub spec: BoxSpec,
    pub region: Region,
    core_rows: Vec<usize>,
    boundary_cols: Vec<usize>,
    /// `|∂Λ|`: exact boundary edge count (ambient lattice).
    pub boundary_edge_count: usize,
}

impl BoxGeometry {
    pub fn build(spec: &BoxSpec) -> Result<Self> {
        let region = enumerate_box(spec)?;
        let mut core_rows = Vec::new();
        for (i, p) in region.sites().iter().enumerate() {
            if spec.inner_core_contains(p)? {
                core_rows.push(i);
            }
        }
        let boundary = boundary_sets(&region, None)?;
        let boundary_cols = boundary
            .inner_sites
            .iter()
            .map(|p| region.index_of(p).expect("∂₋ lies inside the region"))
            .collect();
        Ok(BoxGeometry {
            spec: spec.clone(),
            region,
            core_rows,
            boundary_cols,
            boundary_edge_count: boundary.edges.len(),
        })
    }

    /// Assemble with the given field and eigensolve.
    pub fn solve(&self, field: &DisorderField, model: &ModelSpec) -> Result<SpectralData> {
        eig(&assemble(&self.region, field, model)?)
    }

    /// Worst `|G(u,v;E)|` over inner-third × `∂₋` pairs, with its witness.
    /// `None` when `E` is resonant at solve tolerance.
    pub fn max_green(
        &self,
        data: &SpectralData,
        e: f64,
    ) -> Option<(f64, Option<(Point, Point)>)> {
        if data.spectral_dist(e) <= RESONANCE_SOLVE_TOL * data.scale() {
            return None;
        }
        if self.core_rows.is_empty() || self.boundary_cols.is_empty() {
            return Some((0.0, None));
        }
        let g = data.green_block(e, &self.core_rows, &self.boundary_cols);
        let mut best = (0.0f64, (0usize, 0usize));
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let a = g[(i, j)].abs();
                if a > best.0 {
                    best = (a, (i, j));
                }
            }
        }
        let witness = (
            self.region.site(self.core_rows[best.1 .0]).clone(),
            self.region.site(self.boundary_cols[best.1 .1]).clone(),
        );
        Some((best.0, Some(witness)))
    }

    /// Full verdict at `e` under `params`.
    pub fn verdict(&self, data: &SpectralData, e: f64, params: &ClassificationParams) -> BoxVerdict {
        let side = self.spec.side.as_f64();
        let margins = resonance_margins(data.spectral_dist(e), side, params.s, params.beta);
        let suitable_threshold = side.powf(-params.theta);
        let regular_threshold = (-params.mass * side / 2.0).exp();
        let ses_threshold = (-side.powf(params.zeta)).exp();
        match self.max_green(data, e) {
            None => BoxVerdict {
                resonant: true,
                suitable: false,
                regular: false,
                ses: false,
                max_green: None,
                witness: None,
                margins,
                suitable_threshold,
                regular_threshold,
                ses_threshold,
            },
            Some((max_green, witness)) => BoxVerdict {
                resonant: false,
                suitable: max_green <= suitable_threshold,
                regular: max_green <= regular_threshold,
                ses: max_green <= ses_threshold,
                max_green: Some(max_green),
                witness,
                margins,
                suitable_threshold,
                regular_threshold,
                ses_threshold,
            },
        }
    }

    /// `(m, E)`-regularity: false when resonant at solve tolerance.
    pub fn is_regular(&self, data: &SpectralData, e: f64, mass: f64) -> bool {
        match self.max_green(data, e) {
            Some((g, _)) => g <= (-mass * self.spec.side.as_f64() / 2.0).exp(),
            None => false,
        }
    }

    /// `(θ, E)`-suitability: false when resonant at solve tolerance.
    pub fn is_suitable(&self, data: &SpectralData, e: f64, theta: f64) -> bool {
        match self.max_green(data, e) {
            Some((g, _)) => g <= self.spec.side.as_f64().powf(-theta),
            None => false,
        }
    }
}

/// One box solved against one field, ready to classify at many energies.
pub struct BoxClassifier {
    pub geometry: BoxGeometry,
    pub data: SpectralData,
}

impl BoxClassifier {
    pub fn build(spec: &BoxSpec, field: &DisorderField, model: &ModelSpec) -> Result<Self> {
        let geometry = BoxGeometry::build(spec)?;
        let data = geometry.solve(field, model)?;
        Ok(BoxClassifier { geometry, data })
    }

    pub fn max_green(&self, e: f64) -> Option<(f64, Option<(Point, Point)>)> {
        self.geometry.max_green(&self.data, e)
    }

    pub fn verdict(&self, e: f64, params: &ClassificationParams) -> BoxVerdict {
        self.geometry.verdict(&self.data, e, params)
    }
}

/// Classify one box at one energy (build + verdict in one call).
pub fn classify_box(
    spec: &BoxSpec,
    field: &DisorderField,
    model: &ModelSpec,
    e: f64,
    params: &ClassificationParams,
) -> Result<BoxVerdict> {
    params.validate()?;
    Ok(BoxClassifier::build(spec, field, model)?.verdict(e, params))
}

/// Resonance margins of one box at one energy.
pub fn resonance_status(
    spec: &BoxSpec,
    field: &DisorderField,
    model: &ModelSpec,
    e: f64,
    params: &ClassificationParams,
) -> Result<ResonanceMargins> {
    let region = enumerate_box(spec)?;
    let op = assemble(&region, field, model)?;
    let vals = eigenvalues_only(&op)?;
    let dist = vals.iter().map(|l| (l - e).abs()).fold(f64::INFINITY, f64::min);
    Ok(resonance_margins(dist, spec.side.as_f64(), params.s, params.beta))
}

/// The `n = 1` restriction of a model (used for one-particle blocks).
pub fn one_particle_spec(model: &ModelSpec) -> Result<ModelSpec> {
    ModelSpec::new(
        LatticeConfig::new(1, model.lattice.d)?,
        model.disorder.clone(),
        model.coupling,
        InteractionSpec::none(model.lattice.d),
    )
}

/// One-particle box `Λ_side(x_i)` of a two-particle configuration.
pub fn one_particle_box(center: &Point, particle: usize, side: crate::geometry::Half) -> Result<BoxSpec> {
    let lat1 = LatticeConfig::new(1, center.lattice().d)?;
    let c = Point::from_doubled(lat1, center.particle(particle).to_vec())?;
    BoxSpec::new(DistanceKind::Infinity, c, side)
}

/// Report of the non-interactive tensor-decomposition check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NiReport {
    /// Max multiset deviation of `σ(H_plain)` from the one-particle sum-set.
    pub plain_sumset_dev: f64,
    /// Max multiset deviation of `σ(H_sym)` from the doubled sum-set.
    pub sym_sumset_dev: f64,
    /// Largest cross-permutation-component Green magnitude.
    pub cross_green_max: f64,
    /// Largest deviation of in-component Green entries from the tensor
    /// resolvent formula.
    pub tensor_dev_max: f64,
}

fn multiset_dev(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "multiset comparison needs equal sizes");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Verify the direct-sum structure of a far-separated symmetrized
/// rectangle: sum-set spectra, vanishing cross-component Green entries,
/// and the tensor form of in-component Green entries.
pub fn ni_decompose_check(
    rect: &crate::geometry::RectangleSpec,
    field: &DisorderField,
    model: &ModelSpec,
    e: f64,
) -> Result<NiReport> {
    let lat = rect.lattice();
    if lat.n != 2 || !rect.symmetrized {
        return Err(Error::Precondition(
            "decomposition check needs a symmetrized two-particle rectangle".into(),
        ));
    }
    let l_max = rect.max_side();
    let sep = dist_doubled(DistanceKind::Infinity, &one_center(rect, 0)?, &one_center(rect, 1)?)?;
    if sep <= l_max.doubled() + 2 * model.interaction.range {
        return Err(Error::Precondition(format!(
            "separation ‖x₁−x₂‖ = {} must exceed L + r₀ = {}",
            sep as f64 / 2.0,
            l_max.as_f64() + model.interaction.range as f64
        )));
    }

    let spec1p = one_particle_spec(model)?;
    let box1 = one_particle_box(&rect.center, 0, rect.sides[0])?;
    let box2 = one_particle_box(&rect.center, 1, rect.sides[1])?;
    let r1 = enumerate_box(&box1)?;
    let r2 = enumerate_box(&box2)?;
    let sd1 = eig(&assemble(&r1, field, &spec1p)?)?;
    let sd2 = eig(&assemble(&r2, field, &spec1p)?)?;

    let mut sumset: Vec<f64> = Vec::with_capacity(sd1.dim() * sd2.dim());
    for a in &sd1.eigenvalues {
        for b in &sd2.eigenvalues {
            sumset.push(a + b);
        }
    }
    sumset.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let plain = crate::geometry::enumerate_rectangle(&crate::geometry::RectangleSpec::new(
        false,
        rect.center.clone(),
        rect.sides.clone(),
    )?)?;
    let op_plain = assemble(&plain, field, model)?;
    let vals_plain = eigenvalues_only(&op_plain)?;
    let plain_sumset_dev = multiset_dev(&vals_plain, &sumset);

    let sym = crate::geometry::enumerate_rectangle(rect)?;
    let op_sym = assemble(&sym, field, model)?;
    let vals_sym = eigenvalues_only(&op_sym)?;
    let mut doubled = sumset.clone();
    doubled.extend_from_slice(&sumset);
    doubled.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let sym_sumset_dev = multiset_dev(&vals_sym, &doubled);

    // Cross-component and tensor checks at energy e.
    let swapped: Vec<usize> = sym
        .sites()
        .iter()
        .enumerate()
        .filter(|(_, p)| !plain.contains(p))
        .map(|(i, _)| i)
        .collect();
    let in_plain: Vec<usize> = sym
        .sites()
        .iter()
        .enumerate()
        .filter(|(_, p)| plain.contains(p))
        .map(|(i, _)| i)
        .collect();

    let z = Complex64::new(e, 0.0);
    let mut cross_green_max: f64 = 0.0;
    let mut tensor_dev_max: f64 = 0.0;
    // A handful of solve columns suffices; pick deterministically spread targets.
    let pick = |idx: &[usize], k: usize| -> Vec<usize> {
        let step = (idx.len() / k.min(idx.len().max(1))).max(1);
        idx.iter().step_by(step).take(k).cloned().collect()
    };
    for &vi in &pick(&in_plain, 6) {
        let col = green_column(&op_sym, z, vi)?;
        for &ui in &swapped {
            cross_green_max = cross_green_max.max(col[ui].norm());
        }
        // Tensor form within the plain component against the same column.
        let v = sym.site(vi);
        let (v1, v2) = split_site(v);
        let v1i = r1.index_of(&v1).expect("first block in Λ_L(x₁)");
        let v2i = r2.index_of(&v2).expect("second block in Λ_ℓ(x₂)");
        for &ui in &pick(&in_plain, 24) {
            let u = sym.site(ui);
            let (u1, u2) = split_site(u);
            let u1i = r1.index_of(&u1).expect("first block in Λ_L(x₁)");
            let u2i = r2.index_of(&u2).expect("second block in Λ_ℓ(x₂)");
            let mut tensor = Complex64::new(0.0, 0.0);
            for (j, &mu) in sd2.eigenvalues.iter().enumerate() {
                let w = sd2.eigenvectors[(u2i, j)] * sd2.eigenvectors[(v2i, j)];
                tensor += Complex64::new(w, 0.0) * sd1.green(z - Complex64::new(mu, 0.0), u1i, v1i);
            }
            tensor_dev_max = tensor_dev_max.max((col[ui] - tensor).norm());
        }
    }

    Ok(NiReport {
        plain_sumset_dev,
        sym_sumset_dev,
        cross_green_max,
        tensor_dev_max,
    })
}

fn one_center(rect: &crate::geometry::RectangleSpec, particle: usize) -> Result<Point> {
    let lat1 = LatticeConfig::new(1, rect.lattice().d)?;
    Point::from_doubled(lat1, rect.center.particle(particle).to_vec())
}

fn split_site(p: &Point) -> (Point, Point) {
    let lat1 = LatticeConfig::new(1, p.lattice().d).expect("d unchanged");
    (
        Point::from_doubled(lat1, p.particle(0).to_vec()).unwrap(),
        Point::from_doubled(lat1, p.particle(1).to_vec()).unwrap(),
    )
}

/// Both sides of the geometric resolvent identity and their gap.
#[derive(Debug, Clone, Copy)]
pub struct ResolventIdentityReport {
    pub lhs: Complex64,
    pub rhs: Complex64,
    pub residual: f64,
}

/// Evaluate `G_{Λ₂}(z; u, v) = Σ_{(a,b) ∈ ∂^{Λ₂}Λ₁} G_{Λ₁}(z; u, a)·G_{Λ₂}(z; b, v)`
/// for `u ∈ Λ₁`, `v ∈ Λ₂ ∖ Λ₁` by two independent linear solves.
pub fn geometric_resolvent_check(
    inner: &Region,
    outer: &Region,
    field: &DisorderField,
    model: &ModelSpec,
    z: Complex64,
    u: &Point,
    v: &Point,
) -> Result<ResolventIdentityReport> {
    if !inner.is_subset_of(outer) || inner.len() == outer.len() {
        return Err(Error::Precondition("need inner ⊊ outer".into()));
    }
    if !inner.contains(u) {
        return Err(Error::Precondition("u must lie in the inner region".into()));
    }
    if !outer.contains(v) || inner.contains(v) {
        return Err(Error::Precondition("v must lie in outer ∖ inner".into()));
    }
    let op_in = assemble(inner, field, model)?;
    let op_out = assemble(outer, field, model)?;
    let ui = inner.index_of(u).unwrap();
    let col_in = green_column(&op_in, z, ui)?; // G_{Λ₁}(u, ·) by symmetry
    let vi = outer.index_of(v).unwrap();
    let col_out = green_column(&op_out, z, vi)?; // G_{Λ₂}(·, v)

    let lhs = col_out[outer.index_of(u).unwrap()];
    let boundary = boundary_sets(inner, Some(outer))?;
    let mut rhs = Complex64::new(0.0, 0.0);
    for (a, b) in &boundary.edges {
        rhs += col_in[inner.index_of(a).unwrap()] * col_out[outer.index_of(b).unwrap()];
    }
    Ok(ResolventIdentityReport {
        lhs,
        rhs,
        residual: (lhs - rhs).norm(),
    })
}

/// Which one-particle decay hypothesis the two-particle lemma propagates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OneToTwoKind {
    Suitable { theta: f64 },
    Regular { mass: f64 },
}

/// Outcome of the two-particle-from-one-particle decay check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoFromOneReport {
    pub hypotheses_hold: bool,
    pub conclusion_holds: bool,
    /// Effective two-particle threshold exponent/mass actually tested.
    pub conclusion_threshold: f64,
    pub max_green_two_particle: Option<f64>,
    pub shifted_energy_count: usize,
}

/// For a far-separated non-interactive symmetrized box, check the
/// one-particle decay hypotheses at all shifted energies `E − μ`,
/// `μ ∈ σ(opposite block) ∩ (−∞, E¹]`, and evaluate the two-particle
/// conclusion (`(θ/2, E)`-suitable, or `(m − 6(d+1)·ln(2L)/L, E)`-regular).
pub fn two_particle_from_one_check(
    spec: &BoxSpec,
    field: &DisorderField,
    model: &ModelSpec,
    e: f64,
    e1: f64,
    e2: f64,
    kind: OneToTwoKind,
) -> Result<TwoFromOneReport> {
    let lat = spec.lattice();
    if lat.n != 2 || spec.kind != DistanceKind::Symmetrized {
        return Err(Error::Precondition("need a symmetrized two-particle box".into()));
    }
    if !(e1 > e2) || e > e2 {
        return Err(Error::Precondition("need E ≤ E⁽²⁾ < E⁽¹⁾".into()));
    }
    let d = lat.d as f64;
    let side = spec.side.as_f64();
    match kind {
        OneToTwoKind::Suitable { theta } => {
            if theta <= 2.0 * d + 2.0 {
                return Err(Error::InvalidParameter(format!(
                    "suitability transfer needs θ > 2d + 2 = {}",
                    2.0 * d + 2.0
                )));
            }
        }
        OneToTwoKind::Regular { mass } => {
            let gate = ((e1 - e2) / (4.0 * d) + 1.0).ln();
            if mass <= 0.0 || mass >= gate {
                return Err(Error::InvalidParameter(format!(
                    "mass transfer needs 0 < m < ln((E¹−E²)/(4d)+1) = {gate}"
                )));
            }
        }
    }
    let sep = dist_doubled(
        DistanceKind::Infinity,
        &one_center_of_box(spec, 0)?,
        &one_center_of_box(spec, 1)?,
    )?;
    if sep <= spec.side.doubled() + 2 * model.interaction.range {
        return Err(Error::Precondition(
            "need ‖x₁ − x₂‖ > L + r₀ for the tensor decomposition".into(),
        ));
    }

    let spec1p = one_particle_spec(model)?;
    let boxes = [
        one_particle_box(&spec.center, 0, spec.side)?,
        one_particle_box(&spec.center, 1, spec.side)?,
    ];
    let cls: Vec<BoxClassifier> = boxes
        .iter()
        .map(|b| BoxClassifier::build(b, field, &spec1p))
        .collect::<Result<_>>()?;

    let threshold_1p = |max_g: f64| -> bool {
        match kind {
            OneToTwoKind::Suitable { theta } => max_g <= side.powf(-theta),
            OneToTwoKind::Regular { mass } => max_g <= (-mass * side / 2.0).exp(),
        }
    };

    let mut hypotheses_hold = true;
    let mut shifted_energy_count = 0;
    for (this, other) in [(0usize, 1usize), (1, 0)] {
        for &mu in cls[other].data.eigenvalues.iter().filter(|&&m| m <= e1) {
            shifted_energy_count += 1;
            match cls[this].max_green(e - mu) {
                Some((g, _)) if threshold_1p(g) => {}
                _ => {
                    hypotheses_hold = false;
                }
            }
        }
    }

    let conclusion_threshold = match kind {
        OneToTwoKind::Suitable { theta } => side.powf(-theta / 2.0),
        OneToTwoKind::Regular { mass } => {
            let m_eff = mass - 6.0 * (d + 1.0) * (2.0 * side).ln() / side;
            (-m_eff * side / 2.0).exp()
        }
    };
    let two = BoxClassifier::build(spec, field, model)?;
    let (conclusion_holds, max_green_two_particle) = match two.max_green(e) {
        Some((g, _)) => (g <= conclusion_threshold, Some(g)),
        None => (false, None),
    };

    Ok(TwoFromOneReport {
        hypotheses_hold,
        conclusion_holds,
        conclusion_threshold,
        max_green_two_particle,
        shifted_energy_count,
    })
}

fn one_center_of_box(spec: &BoxSpec, particle: usize) -> Result<Point> {
    let lat1 = LatticeConfig::new(1, spec.lattice().d)?;
    Point::from_doubled(lat1, spec.center.particle(particle).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{enumerate_rectangle, Half, RectangleSpec};
    use crate::model::{sample_disorder, DisorderLaw};
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

    fn free_path(len_sites: i64) -> (ModelSpec, Region, OperatorMatrix) {
        let spec = model(1, 1, 0.0);
        let lat = spec.lattice;
        let b = BoxSpec::new(
            DistanceKind::Infinity,
            Point::site(lat, &[0]).unwrap(),
            Half::int(len_sites - 1),
        )
        .unwrap();
        let region = enumerate_box(&b).unwrap();
        let field = sample_disorder(&spec, &region.single_particle_support(), 0).unwrap();
        let op = assemble(&region, &field, &spec).unwrap();
        (spec, region, op)
    }

    #[test]
    fn free_three_site_path_spectrum() {
        let (_, _, op) = free_path(3);
        let sd = eig(&op).unwrap();
        sd.validate(&op).unwrap();
        let expect = [2.0 - 2f64.sqrt(), 2.0, 2.0 + 2f64.sqrt()];
        for (a, b) in sd.eigenvalues.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_site_green() {
        let spec = model(1, 1, 1.0);
        let lat = spec.lattice;
        let p = Point::site(lat, &[0]).unwrap();
        let region = Region::from_points(lat, vec![p.clone()]).unwrap();
        let field = DisorderField::from_pairs(0, vec![(vec![0], 0.7)]);
        let op = assemble(&region, &field, &spec).unwrap();
        let g = green_entry(&op, Complex64::new(0.0, 0.0), &p, &p).unwrap();
        assert!((g.re - 1.0 / 2.7).abs() < 1e-15 && g.im == 0.0);
    }

    #[test]
    fn green_routes_agree_and_respect_norm_bound() {
        // Direct solve vs eigen-expansion on random disordered instances,
        // plus the spectral-theorem bound |G| ≤ 1/dist(z, σ).
        let spec = model(1, 1, 1.0);
        let lat = spec.lattice;
        let b = BoxSpec::new(
            DistanceKind::Infinity,
            Point::site(lat, &[0]).unwrap(),
            Half::int(14),
        )
        .unwrap();
        let region = enumerate_box(&b).unwrap();
        let mut picks = Stream::new(11);
        for trial in 0..50u64 {
            let field = sample_disorder(&spec, &region.single_particle_support(), trial).unwrap();
            let op = assemble(&region, &field, &spec).unwrap();
            let sd = eig(&op).unwrap();
            let z = Complex64::new(picks.next_f64() * 6.0 - 1.0, 0.3 + picks.next_f64());
            let u = picks.next_below(region.len() as u64) as usize;
            let v = picks.next_below(region.len() as u64) as usize;
            let direct = green_column(&op, z, v).unwrap()[u];
            let expanded = sd.green(z, u, v);
            assert!((direct - expanded).norm() <= 1e-9 * direct.norm().max(1e-3));
            let dist = sd.spectral_dist_complex(z);
            assert!(direct.norm() <= 1.0 / dist * (1.0 + 1e-10));
            // Symmetry of the real-symmetric resolvent.
            let swapped = green_column(&op, z, u).unwrap()[v];
            assert!((direct - swapped).norm() <= 1e-12 * direct.norm().max(1.0));
        }
    }

    #[test]
    fn classify_far_below_spectrum_is_suitable() {
        let spec = model(2, 1, 1.0);
        let lat = spec.lattice;
        let b = BoxSpec::new(
            DistanceKind::Symmetrized,
            Point::site(lat, &[0, 0]).unwrap(),
            Half::int(8),
        )
        .unwrap();
        let region = enumerate_box(&b).unwrap();
        let field = sample_disorder(&spec, &region.single_particle_support(), 5).unwrap();
        let params = ClassificationParams {
            theta: 2.0,
            mass: 0.1,
            zeta: 0.5,
            s: 1.0,
            beta: 0.5,
        };
        let v = classify_box(&b, &field, &spec, -10.0, &params).unwrap();
        assert!(!v.resonant && v.suitable);
        // Monotonicity: suitable at θ implies suitable at θ′ < θ.
        let weaker = ClassificationParams { theta: 1.0, ..params };
        assert!(classify_box(&b, &field, &spec, -10.0, &weaker).unwrap().suitable);
    }

    #[test]
    fn classify_at_exact_eigenvalue_is_resonant() {
        let (spec, _region, op) = free_path(9);
        let sd = eig(&op).unwrap();
        let e = sd.eigenvalues[3];
        let lat = spec.lattice;
        let b = BoxSpec::new(
            DistanceKind::Infinity,
            Point::site(lat, &[0]).unwrap(),
            Half::int(8),
        )
        .unwrap();
        let field = sample_disorder(&spec, &op.region.single_particle_support(), 0).unwrap();
        let params = ClassificationParams {
            theta: 2.0,
            mass: 0.1,
            zeta: 0.5,
            s: 1.0,
            beta: 0.5,
        };
        let v = classify_box(&b, &field, &spec, e, &params).unwrap();
        assert!(v.resonant && !v.suitable && !v.regular && !v.ses);
    }

    #[test]
    fn resonance_threshold_values() {
        // ℓ = 4, s = 1: dist 0.5 ≥ 0.25 is not suitably resonant.
        let m = resonance_margins(0.5, 4.0, 1.0, 0.5);
        assert!(!m.suitably_resonant && (m.suitable_threshold - 0.25).abs() < 1e-15);
        // dist = 0 is resonant under both thresholds.
        let m0 = resonance_margins(0.0, 4.0, 1.0, 0.5);
        assert!(m0.suitably_resonant && m0.beta_resonant);
        // ℓ = 9, β = 1/2: ½·e^{−3} ≈ 0.024894.
        let m9 = resonance_margins(1.0, 9.0, 1.0, 0.5);
        assert!((m9.beta_threshold - 0.5 * (-3.0f64).exp()).abs() < 1e-15);
        assert!((m9.beta_threshold - 0.02489).abs() < 5e-6);
    }

    #[test]
    fn ni_decomposition_zero_disorder() {
        // L = ℓ = 2 at separation 10 > L + r₀: sum-set of {2−√2, 2, 2+√2}
        // with itself, cross-block Green exactly zero.
        let spec = model(2, 1, 0.0);
        let lat = spec.lattice;
        let rect = RectangleSpec::new(
            true,
            Point::site(lat, &[0, 10]).unwrap(),
            vec![Half::int(2), Half::int(2)],
        )
        .unwrap();
        let region = enumerate_rectangle(&rect).unwrap();
        let field = sample_disorder(&spec, &region.single_particle_support(), 0).unwrap();
        let rep = ni_decompose_check(&rect, &field, &spec, -1.0).unwrap();
        assert!(rep.plain_sumset_dev < 1e-10);
        assert!(rep.sym_sumset_dev < 1e-10);
        assert!(rep.cross_green_max <= 1e-12);
        assert!(rep.tensor_dev_max < 1e-10);
    }

    #[test]
    fn ni_decomposition_rejects_close_centers() {
        let spec = model(2, 1, 1.0);
        let lat = spec.lattice;
        let rect = RectangleSpec::new(
            true,
            Point::site(lat, &[0, 2]).unwrap(),
            vec![Half::int(2), Half::int(2)],
        )
        .unwrap();
        let field = DisorderField::from_pairs(0, vec![]);
        assert!(ni_decompose_check(&rect, &field, &spec, -1.0).is_err());
    }

    #[test]
    fn resolvent_identity_on_nested_boxes() {
        let spec = model(2, 1, 1.0);
        let lat = spec.lattice;
        let mk = |side: i64| {
            enumerate_box(
                &BoxSpec::new(
                    DistanceKind::Symmetrized,
                    Point::site(lat, &[0, 3]).unwrap(),
                    Half::int(side),
                )
                .unwrap(),
            )
            .unwrap()
        };
        let inner = mk(4);
        let outer = mk(10);
        let field = sample_disorder(&spec, &outer.single_particle_support(), 21).unwrap();
        let z = Complex64::new(3.0, 0.7);
        let u = inner.site(0).clone();
        let v = outer
            .sites()
            .iter()
            .find(|p| !inner.contains(p))
            .unwrap()
            .clone();
        let rep = geometric_resolvent_check(&inner, &outer, &field, &spec, z, &u, &v).unwrap();
        assert!(rep.residual <= 1e-9 * rep.lhs.norm());
        // Degenerate case: inner = outer is rejected.
        assert!(geometric_resolvent_check(&outer, &outer, &field, &spec, z, &u, &v).is_err());
    }

    #[test]
    fn two_from_one_strong_disorder() {
        let spec = model(2, 1, 15.0);
        let lat = spec.lattice;
        let b = BoxSpec::new(
            DistanceKind::Symmetrized,
            Point::site(lat, &[0, 20]).unwrap(),
            Half::int(12),
        )
        .unwrap();
        let region = enumerate_box(&b).unwrap();
        let field = sample_disorder(&spec, &region.single_particle_support(), 3).unwrap();
        // E below the almost-sure spectrum bottom: hypotheses and
        // conclusion should both hold with wide margins.
        let rep = two_particle_from_one_check(
            &b,
            &field,
            &spec,
            -2.0,
            30.0,
            1.0,
            OneToTwoKind::Regular { mass: 0.4 },
        )
        .unwrap();
        assert!(rep.hypotheses_hold, "1p hypotheses failed: {rep:?}");
        assert!(rep.conclusion_holds, "2p conclusion failed: {rep:?}");

        // The mass gate is enforced: ln((E¹−E²)/4 + 1) with E¹−E² = 2 is ≈ 0.405.
        let err = two_particle_from_one_check(
            &b,
            &field,
            &spec,
            -2.0,
            3.0,
            1.0,
            OneToTwoKind::Regular { mass: 0.5 },
        );
        assert!(err.is_err());
    }
}
