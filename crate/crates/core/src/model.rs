//! The random `n`-particle Anderson Hamiltonian and its finite-volume
//! restrictions.
//!
//! `H = −Δ + V_ω + U` with the Laplacian sign fixed so that
//! `σ(−Δ) = [0, 4nd]`: the diagonal carries `2nd + V + U` and every
//! 1-norm-adjacent pair inside the region carries hopping `−1`.

use crate::geometry::{LatticeConfig, Point, Region};
use crate::rng::{site_seed, Stream};
use crate::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;

/// Single-site distribution: a bounded density on `[0, M₊]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisorderLaw {
    /// Uniform density `1/M₊` on `[0, M₊]`.
    Uniform { m_plus: f64 },
    /// Symmetric triangular density on `[0, M₊]`, peak `2/M₊` at `M₊/2`.
    Triangular { m_plus: f64 },
}

impl DisorderLaw {
    pub fn m_plus(&self) -> f64 {
        match self {
            DisorderLaw::Uniform { m_plus } | DisorderLaw::Triangular { m_plus } => *m_plus,
        }
    }

    /// `‖ρ‖_∞` of the density.
    pub fn density_sup(&self) -> f64 {
        match self {
            DisorderLaw::Uniform { m_plus } => 1.0 / m_plus,
            DisorderLaw::Triangular { m_plus } => 2.0 / m_plus,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.m_plus() <= 0.0 || !self.m_plus().is_finite() {
            return Err(Error::InvalidParameter("M₊ must be positive and finite".into()));
        }
        Ok(())
    }

    /// Inverse CDF applied to a uniform draw in `[0, 1)`.
    fn quantile(&self, u: f64) -> f64 {
        match self {
            DisorderLaw::Uniform { m_plus } => m_plus * u,
            DisorderLaw::Triangular { m_plus } => {
                if u < 0.5 {
                    m_plus * (u / 2.0).sqrt()
                } else {
                    m_plus * (1.0 - ((1.0 - u) / 2.0).sqrt())
                }
            }
        }
    }
}

/// Two-body interaction `Ũ`: symmetric, nonnegative, supported on
/// `‖y‖_∞ ≤ r₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionSpec {
    pub range: i64,
    /// `Ũ(y)` keyed by the difference vector; missing entries are zero.
    pub table: BTreeMap<Vec<i64>, f64>,
}

impl InteractionSpec {
    pub fn new(range: i64, table: BTreeMap<Vec<i64>, f64>) -> Result<Self> {
        let spec = InteractionSpec { range, table };
        spec.validate()?;
        Ok(spec)
    }

    /// The default constant-plateau interaction `Ũ(y) = u₀·1{‖y‖_∞ ≤ r₀}`.
    pub fn plateau(d: usize, range: i64, u0: f64) -> Result<Self> {
        if u0 < 0.0 {
            return Err(Error::InvalidParameter("interaction strength u₀ < 0".into()));
        }
        let mut table = BTreeMap::new();
        let mut cur = vec![-range; d];
        loop {
            table.insert(cur.clone(), u0);
            let mut axis = d;
            let done = loop {
                if axis == 0 {
                    break true;
                }
                axis -= 1;
                if cur[axis] < range {
                    cur[axis] += 1;
                    break false;
                }
                cur[axis] = -range;
            };
            if done {
                break;
            }
        }
        InteractionSpec::new(range, table)
    }

    /// No interaction (`Ũ ≡ 0`, minimal range).
    pub fn none(d: usize) -> Self {
        InteractionSpec::plateau(d, 1, 0.0).expect("zero plateau is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.range < 1 {
            return Err(Error::InvalidParameter("interaction range r₀ < 1".into()));
        }
        for (y, &v) in &self.table {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::InvalidParameter("interaction values must be ≥ 0".into()));
            }
            if y.iter().map(|c| c.abs()).max().unwrap_or(0) > self.range {
                return Err(Error::InvalidParameter(format!(
                    "interaction entry at {y:?} beyond range r₀ = {}",
                    self.range
                )));
            }
            let neg: Vec<i64> = y.iter().map(|c| -c).collect();
            if self.table.get(&neg).copied().unwrap_or(0.0) != v {
                return Err(Error::InvalidParameter(format!(
                    "interaction not symmetric at {y:?}"
                )));
            }
        }
        Ok(())
    }

    /// `Ũ(y)` for a doubled difference vector (lattice steps).
    fn eval_doubled(&self, diff: &[i64]) -> f64 {
        if diff.iter().map(|c| c.abs()).max().unwrap_or(0) > 2 * self.range {
            return 0.0;
        }
        let key: Vec<i64> = diff.iter().map(|c| c / 2).collect();
        self.table.get(&key).copied().unwrap_or(0.0)
    }

    pub fn max_value(&self) -> f64 {
        self.table.values().cloned().fold(0.0, f64::max)
    }
}

/// Full specification of the random model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub lattice: LatticeConfig,
    pub disorder: DisorderLaw,
    /// Multiplicative disorder strength `λ ≥ 0` applied to sampled values.
    pub coupling: f64,
    pub interaction: InteractionSpec,
}

impl ModelSpec {
    pub fn new(
        lattice: LatticeConfig,
        disorder: DisorderLaw,
        coupling: f64,
        interaction: InteractionSpec,
    ) -> Result<Self> {
        disorder.validate()?;
        interaction.validate()?;
        if coupling < 0.0 || !coupling.is_finite() {
            return Err(Error::InvalidParameter("coupling λ must be ≥ 0".into()));
        }
        Ok(ModelSpec {
            lattice,
            disorder,
            coupling,
            interaction,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.disorder.validate()?;
        self.interaction.validate()?;
        if self.coupling < 0.0 || !self.coupling.is_finite() {
            return Err(Error::InvalidParameter("coupling λ must be ≥ 0".into()));
        }
        LatticeConfig::new(self.lattice.n, self.lattice.d)?;
        Ok(())
    }

    /// `‖ρ‖_∞` of the density of one potential value `λ·ω`, when defined.
    pub fn effective_density_sup(&self) -> Option<f64> {
        if self.coupling == 0.0 {
            None
        } else {
            Some(self.disorder.density_sup() / self.coupling)
        }
    }

    /// Coarse spectral enclosure `[0, 4nd + n·λM₊ + max U]` of any
    /// finite-volume restriction.
    pub fn operator_norm_bounds(&self) -> (f64, f64) {
        let nd = self.lattice.nd() as f64;
        let n = self.lattice.n as f64;
        let pairs = (self.lattice.n * (self.lattice.n.saturating_sub(1)) / 2) as f64;
        (
            0.0,
            4.0 * nd + n * self.coupling * self.disorder.m_plus() + pairs * self.interaction.max_value(),
        )
    }
}

/// A sampled potential: one value per single-particle site.
///
/// Values are the scaled potential entries `λ·ω_x`; re-sampling with the
/// same `(seed, site)` reproduces them bit-identically.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderField {
    seed: u64,
    support: Vec<Vec<i64>>,
    values: Vec<f64>,
}

/// Draw the disorder over `support` (actual integer coordinates).
///
/// Each site gets an independent SplitMix64 substream keyed by
/// `(seed, coordinates)`; the value is the law's inverse CDF of one
/// uniform draw, scaled by the coupling.
pub fn sample_disorder(spec: &ModelSpec, support: &[Vec<i64>], seed: u64) -> Result<DisorderField> {
    spec.validate()?;
    let mut sites: Vec<Vec<i64>> = support.to_vec();
    sites.sort();
    sites.dedup();
    for s in &sites {
        if s.len() != spec.lattice.d {
            return Err(Error::DimensionMismatch(format!(
                "support site {s:?} has {} coordinates, expected d = {}",
                s.len(),
                spec.lattice.d
            )));
        }
    }
    let values = sites
        .iter()
        .map(|s| {
            let mut stream = Stream::new(site_seed(seed, s));
            spec.coupling * spec.disorder.quantile(stream.next_f64())
        })
        .collect();
    Ok(DisorderField {
        seed,
        support: sites,
        values,
    })
}

impl DisorderField {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn support(&self) -> &[Vec<i64>] {
        &self.support
    }

    pub fn value(&self, site: &[i64]) -> Option<f64> {
        self.support
            .binary_search_by(|s| s.as_slice().cmp(site))
            .ok()
            .map(|i| self.values[i])
    }

    /// Build a field directly from `(site, value)` pairs (replay path).
    pub fn from_pairs(seed: u64, mut pairs: Vec<(Vec<i64>, f64)>) -> Self {
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
        DisorderField {
            seed,
            support: pairs.iter().map(|p| p.0.clone()).collect(),
            values: pairs.iter().map(|p| p.1).collect(),
        }
    }

    /// Cyclic shift on a 1-d periodic window `[lo, hi]`: the value at `x`
    /// of the result is the value at the wrapped `x − a` of `self`.
    pub fn shifted_periodic_1d(&self, a: i64, lo: i64, hi: i64) -> Result<DisorderField> {
        let period = hi - lo + 1;
        let pairs = self
            .support
            .iter()
            .map(|s| {
                if s.len() != 1 || s[0] < lo || s[0] > hi {
                    return Err(Error::Precondition(format!(
                        "site {s:?} outside the periodic window [{lo}, {hi}]"
                    )));
                }
                let src = lo + (s[0] - a - lo).rem_euclid(period);
                let v = self
                    .value(&[src])
                    .ok_or_else(|| Error::MissingDisorder(format!("{src}")))?;
                Ok((s.clone(), v))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DisorderField::from_pairs(self.seed, pairs))
    }

    /// Persist as `seed` header plus `site… value` lines.
    pub fn write_dump<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "seed {}", self.seed)?;
        for (s, v) in self.support.iter().zip(&self.values) {
            let coords: Vec<String> = s.iter().map(|c| c.to_string()).collect();
            writeln!(w, "{} {v:?}", coords.join(" "))?;
        }
        Ok(())
    }
}

/// A finite-volume restriction `H_Θ` as a dense real symmetric matrix,
/// indexed by the region's site order.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub region: Region,
    pub matrix: DMatrix<f64>,
}

fn diagonal_entry(spec: &ModelSpec, field: &DisorderField, site: &Point) -> Result<f64> {
    let lat = spec.lattice;
    let mut v = 2.0 * lat.nd() as f64;
    for i in 0..lat.n {
        let block: Vec<i64> = site.particle(i).iter().map(|c| c / 2).collect();
        v += field
            .value(&block)
            .ok_or_else(|| Error::MissingDisorder(format!("{block:?}")))?;
    }
    for i in 0..lat.n {
        for j in (i + 1)..lat.n {
            let diff: Vec<i64> = site
                .particle(i)
                .iter()
                .zip(site.particle(j))
                .map(|(a, b)| a - b)
                .collect();
            v += spec.interaction.eval_doubled(&diff);
        }
    }
    Ok(v)
}

/// Assemble `χ_Θ H χ_Θ` on the given region (Dirichlet-type truncation).
pub fn assemble(region: &Region, field: &DisorderField, spec: &ModelSpec) -> Result<OperatorMatrix> {
    if region.lattice() != spec.lattice {
        return Err(Error::DimensionMismatch("region/model lattice mismatch".into()));
    }
    let n = region.len();
    let nd = spec.lattice.nd();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for (i, site) in region.sites().iter().enumerate() {
        m[(i, i)] = diagonal_entry(spec, field, site)?;
        for axis in 0..nd {
            for dir in [-1i64, 1] {
                if let Some(j) = region.index_of(&site.step(axis, dir)) {
                    m[(i, j)] = -1.0;
                }
            }
        }
    }
    Ok(OperatorMatrix { region: region.clone(), matrix: m })
}

/// Assemble with periodic wrapping on a product box.
///
/// `ranges` gives the inclusive per-axis windows of the torus (all `nd`
/// axes); the region must be exactly their product.  Wrap edges accumulate,
/// so a two-site axis gets hopping `−2` and a one-site axis none.
pub fn assemble_periodic(
    region: &Region,
    ranges: &[(i64, i64)],
    field: &DisorderField,
    spec: &ModelSpec,
) -> Result<OperatorMatrix> {
    if region.lattice() != spec.lattice {
        return Err(Error::DimensionMismatch("region/model lattice mismatch".into()));
    }
    let nd = spec.lattice.nd();
    if ranges.len() != nd {
        return Err(Error::DimensionMismatch("one range per axis required".into()));
    }
    let expected: usize = ranges.iter().map(|(lo, hi)| (hi - lo + 1) as usize).product();
    if expected != region.len() {
        return Err(Error::Precondition("region is not the product of the given ranges".into()));
    }
    let n = region.len();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for (i, site) in region.sites().iter().enumerate() {
        m[(i, i)] = diagonal_entry(spec, field, site)?;
        let coords = site.site_coords();
        for (axis, &(lo, hi)) in ranges.iter().enumerate() {
            let period = hi - lo + 1;
            if period == 1 {
                continue;
            }
            for dir in [-1i64, 1] {
                let mut c = coords.clone();
                c[axis] = lo + (c[axis] + dir - lo).rem_euclid(period);
                let neighbor = Point::site(spec.lattice, &c)?;
                let j = region
                    .index_of(&neighbor)
                    .ok_or_else(|| Error::Precondition("periodic neighbor outside region".into()))?;
                m[(i, j)] += -1.0;
            }
        }
    }
    Ok(OperatorMatrix { region: region.clone(), matrix: m })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{enumerate_box, BoxSpec, DistanceKind, Half};

    fn spec1(coupling: f64) -> ModelSpec {
        ModelSpec::new(
            LatticeConfig::new(1, 1).unwrap(),
            DisorderLaw::Uniform { m_plus: 1.0 },
            coupling,
            InteractionSpec::none(1),
        )
        .unwrap()
    }

    #[test]
    fn sampling_is_deterministic_and_in_range() {
        let spec = spec1(1.0);
        let support: Vec<Vec<i64>> = (-50..=50).map(|x| vec![x]).collect();
        let a = sample_disorder(&spec, &support, 99).unwrap();
        let b = sample_disorder(&spec, &support, 99).unwrap();
        assert_eq!(a, b);
        assert!(a.values.iter().all(|v| (0.0..1.0).contains(v)));
        let c = sample_disorder(&spec, &support, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn uniform_mean_converges() {
        let spec = spec1(1.0);
        let support: Vec<Vec<i64>> = (0..100_000).map(|x| vec![x]).collect();
        let f = sample_disorder(&spec, &support, 7).unwrap();
        let mean: f64 = f.values.iter().sum::<f64>() / f.values.len() as f64;
        // 3σ window for the mean of 1e5 uniform draws: σ ≈ 1/√(12·1e5).
        assert!((mean - 0.5).abs() < 3.0 / (12.0f64 * 1e5).sqrt());
    }

    #[test]
    fn zero_coupling_kills_the_potential() {
        let spec = spec1(0.0);
        let f = sample_disorder(&spec, &[vec![0], vec![1]], 1).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
        assert!(spec.effective_density_sup().is_none());
    }

    #[test]
    fn single_site_matrix() {
        // Region {0} in Z, ω₀ = 0.7: 1×1 matrix [2.7].
        let spec = spec1(1.0);
        let lat = spec.lattice;
        let region = Region::from_points(lat, vec![Point::site(lat, &[0]).unwrap()]).unwrap();
        let field = DisorderField::from_pairs(0, vec![(vec![0], 0.7)]);
        let m = assemble(&region, &field, &spec).unwrap();
        assert_eq!(m.matrix[(0, 0)], 2.7);
    }

    #[test]
    fn interaction_and_double_potential_on_diagonal() {
        // n=2, d=1, region {(0,0)}, ω₀ = 1, Ũ(0) = 5: 4 + 2 + 5 = 11.
        let lat = LatticeConfig::new(2, 1).unwrap();
        let spec = ModelSpec::new(
            lat,
            DisorderLaw::Uniform { m_plus: 1.0 },
            1.0,
            InteractionSpec::plateau(1, 1, 5.0).unwrap(),
        )
        .unwrap();
        let region = Region::from_points(lat, vec![Point::site(lat, &[0, 0]).unwrap()]).unwrap();
        let field = DisorderField::from_pairs(0, vec![(vec![0], 1.0)]);
        let m = assemble(&region, &field, &spec).unwrap();
        assert_eq!(m.matrix[(0, 0)], 11.0);
    }

    #[test]
    fn restriction_consistency() {
        // Assembling on a sub-box reproduces the principal submatrix.
        let spec = spec1(1.0);
        let lat = spec.lattice;
        let big = enumerate_box(
            &BoxSpec::new(DistanceKind::Infinity, Point::site(lat, &[0]).unwrap(), Half::int(8))
                .unwrap(),
        )
        .unwrap();
        let small = enumerate_box(
            &BoxSpec::new(DistanceKind::Infinity, Point::site(lat, &[0]).unwrap(), Half::int(4))
                .unwrap(),
        )
        .unwrap();
        let field = sample_disorder(&spec, &big.single_particle_support(), 3).unwrap();
        let mb = assemble(&big, &field, &spec).unwrap();
        let ms = assemble(&small, &field, &spec).unwrap();
        for (i, si) in small.sites().iter().enumerate() {
            for (j, sj) in small.sites().iter().enumerate() {
                let bi = big.index_of(si).unwrap();
                let bj = big.index_of(sj).unwrap();
                assert_eq!(ms.matrix[(i, j)], mb.matrix[(bi, bj)]);
            }
        }
    }

    #[test]
    fn missing_disorder_is_an_error() {
        let spec = spec1(1.0);
        let lat = spec.lattice;
        let region = Region::from_points(lat, vec![Point::site(lat, &[5]).unwrap()]).unwrap();
        let field = DisorderField::from_pairs(0, vec![(vec![0], 0.5)]);
        assert!(matches!(
            assemble(&region, &field, &spec),
            Err(Error::MissingDisorder(_))
        ));
    }

    #[test]
    fn norm_bound_examples() {
        let lat = LatticeConfig::new(2, 1).unwrap();
        let spec = ModelSpec::new(
            lat,
            DisorderLaw::Uniform { m_plus: 1.0 },
            1.0,
            InteractionSpec::none(1),
        )
        .unwrap();
        assert_eq!(spec.operator_norm_bounds(), (0.0, 10.0));
        assert_eq!(spec1(0.0).operator_norm_bounds(), (0.0, 4.0));
    }
}
