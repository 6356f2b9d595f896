//! Driven Hamiltonian families `s ↦ H_s`, continuity-tracked eigenbases along
//! the drive, the transport unitary `U_s`, the gauge velocity
//! `V_s = -i U_s† ∂_s U_s`, and the gap functionals `μ_s`, `ν_s`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{
    c, eig_hermitian, hermiticity_defect, CMatrix, DensityMatrix, HermitianOperator,
    SpectralDecomposition,
};
use crate::wire_model::{self, WireModelParams};

/// Finite-difference Hermiticity defect above which the grid is rejected.
pub const FD_HERMITICITY_LIMIT: f64 = 1e-6;
/// Matched eigenvectors at consecutive grid points must overlap at least this much.
pub const CONTINUITY_MIN_OVERLAP: f64 = 0.5;
/// Default degeneracy threshold, relative to the spectral range of `H_0`.
pub const DEFAULT_RELATIVE_DEGENERACY: f64 = 1e-8;

/// Uniform grid `s_k = k s_max / (n_steps - 1)` traversed at rate `omega`
/// (`s = ω t`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrivingSchedule {
    omega: f64,
    s_max: f64,
    n_steps: usize,
}

impl DrivingSchedule {
    pub fn new(omega: f64, s_max: f64, n_steps: usize) -> Result<Self> {
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::InvalidSchedule(format!(
                "omega {omega} must be positive"
            )));
        }
        if !(s_max.is_finite() && s_max > 0.0) {
            return Err(Error::InvalidSchedule(format!(
                "s_max {s_max} must be positive"
            )));
        }
        if n_steps < 2 {
            return Err(Error::InvalidSchedule(format!("n_steps {n_steps} < 2")));
        }
        Ok(Self {
            omega,
            s_max,
            n_steps,
        })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn s_max(&self) -> f64 {
        self.s_max
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Grid spacing in `s`.
    pub fn ds(&self) -> f64 {
        self.s_max / (self.n_steps - 1) as f64
    }

    /// Time step `ds / ω`.
    pub fn dt(&self) -> f64 {
        self.ds() / self.omega
    }

    pub fn s_at(&self, k: usize) -> f64 {
        if k + 1 == self.n_steps {
            self.s_max
        } else {
            k as f64 * self.s_max / (self.n_steps - 1) as f64
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.n_steps).map(|k| self.s_at(k)).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_steps)
            .map(|k| self.s_at(k) / self.omega)
            .collect()
    }

    pub fn with_omega(&self, omega: f64) -> Result<Self> {
        Self::new(omega, self.s_max, self.n_steps)
    }

    pub fn with_n_steps(&self, n_steps: usize) -> Result<Self> {
        Self::new(self.omega, self.s_max, n_steps)
    }
}

/// `H_s = exp(isV) H_0 exp(-isV)`.
#[derive(Debug, Clone)]
pub struct IsospectralFamily {
    h0: HermitianOperator,
    generator: HermitianOperator,
    generator_eig: SpectralDecomposition,
}

impl IsospectralFamily {
    pub fn new(h0: HermitianOperator, generator: HermitianOperator) -> Result<Self> {
        if h0.dim() != generator.dim() {
            return Err(Error::DimensionMismatch {
                left: h0.dim(),
                right: generator.dim(),
            });
        }
        let generator_eig = eig_hermitian(&generator)?;
        Ok(Self {
            h0,
            generator,
            generator_eig,
        })
    }

    pub fn h0(&self) -> &HermitianOperator {
        &self.h0
    }

    /// The constant gauge velocity `V`.
    pub fn generator(&self) -> &HermitianOperator {
        &self.generator
    }

    /// `exp(isV)`.
    pub fn rotation(&self, s: f64) -> CMatrix {
        self.generator_eig
            .map(|v| Complex64::from_polar(1.0, v * s))
    }

    pub fn evaluate(&self, s: f64) -> HermitianOperator {
        self.h0.conjugate_by(&self.rotation(s))
    }
}

pub type FamilyFn = dyn Fn(f64) -> CMatrix + Send + Sync;

/// Arbitrary `s ↦ H_s` supplied as a closure; outputs are validated on every
/// evaluation.
#[derive(Clone)]
pub struct GenericFamily {
    dim: usize,
    label: String,
    func: Arc<FamilyFn>,
}

impl GenericFamily {
    pub fn new<F>(dim: usize, label: impl Into<String>, func: F) -> Self
    where
        F: Fn(f64) -> CMatrix + Send + Sync + 'static,
    {
        Self {
            dim,
            label: label.into(),
            func: Arc::new(func),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for GenericFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GenericFamily")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .finish_non_exhaustive()
    }
}

/// The spin-around-a-wire effective Hamiltonian
/// `γ(-sin s S_x + cos s S_y)`, an isospectral family with `V = -S_z`.
#[derive(Debug, Clone)]
pub struct WireSpinFamily {
    params: WireModelParams,
    gamma: f64,
    inner: IsospectralFamily,
}

impl WireSpinFamily {
    pub fn new(params: WireModelParams) -> Result<Self> {
        params.validate()?;
        let gamma = wire_model::gamma_coupling(&params);
        let inner = wire_model::wire_isospectral_family(gamma, params.spin)?;
        Ok(Self {
            params,
            gamma,
            inner,
        })
    }

    pub fn params(&self) -> &WireModelParams {
        &self.params
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

#[derive(Debug, Clone)]
pub enum DrivenHamiltonian {
    UniformIsospectral(IsospectralFamily),
    Generic(GenericFamily),
    WireSpin(WireSpinFamily),
}

impl DrivenHamiltonian {
    pub fn uniform_isospectral(
        h0: HermitianOperator,
        generator: HermitianOperator,
    ) -> Result<Self> {
        Ok(Self::UniformIsospectral(IsospectralFamily::new(
            h0, generator,
        )?))
    }

    /// `H_s = H_0` for all `s`.
    pub fn constant(h0: HermitianOperator) -> Self {
        let zero = HermitianOperator::zeros(h0.dim());
        Self::uniform_isospectral(h0, zero).expect("zero generator always decomposes")
    }

    pub fn generic<F>(dim: usize, label: impl Into<String>, func: F) -> Self
    where
        F: Fn(f64) -> CMatrix + Send + Sync + 'static,
    {
        Self::Generic(GenericFamily::new(dim, label, func))
    }

    /// `H_s = (1 - s/s_max) A + (s/s_max) B`.
    pub fn linear_interpolation(
        a: HermitianOperator,
        b: HermitianOperator,
        s_max: f64,
    ) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(Error::DimensionMismatch {
                left: a.dim(),
                right: b.dim(),
            });
        }
        if !(s_max.is_finite() && s_max > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "s_max {s_max} must be positive"
            )));
        }
        let dim = a.dim();
        let (a, b) = (a.into_matrix(), b.into_matrix());
        Ok(Self::generic(dim, "linear_interpolation", move |s| {
            let x = s / s_max;
            &a * c(1.0 - x) + &b * c(x)
        }))
    }

    /// `H_s = (1 + rate·s) exp(isV) H_0 exp(-isV)`: a rotating frame whose
    /// gaps all dilate by the same factor.
    pub fn dilated_isospectral(
        h0: HermitianOperator,
        generator: HermitianOperator,
        rate: f64,
    ) -> Result<Self> {
        if !rate.is_finite() {
            return Err(Error::InvalidArgument(format!("dilation rate {rate}")));
        }
        let base = IsospectralFamily::new(h0, generator)?;
        let dim = base.h0.dim();
        Ok(Self::generic(dim, "dilated_isospectral", move |s| {
            base.evaluate(s).into_matrix() * c(1.0 + rate * s)
        }))
    }

    pub fn wire(params: WireModelParams) -> Result<Self> {
        Ok(Self::WireSpin(WireSpinFamily::new(params)?))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::UniformIsospectral(f) => f.h0.dim(),
            Self::Generic(f) => f.dim,
            Self::WireSpin(f) => f.inner.h0.dim(),
        }
    }

    /// The isospectral structure, when the family has one in closed form.
    pub fn isospectral(&self) -> Option<&IsospectralFamily> {
        match self {
            Self::UniformIsospectral(f) => Some(f),
            Self::WireSpin(f) => Some(&f.inner),
            Self::Generic(_) => None,
        }
    }

    pub fn evaluate(&self, s: f64) -> Result<HermitianOperator> {
        if !s.is_finite() {
            return Err(Error::EvaluationFailure {
                s,
                reason: "parameter is not finite".into(),
            });
        }
        match self {
            Self::UniformIsospectral(f) => Ok(f.evaluate(s)),
            Self::WireSpin(f) => Ok(f.inner.evaluate(s)),
            Self::Generic(f) => {
                let m = (f.func)(s);
                if m.nrows() != f.dim || m.ncols() != f.dim {
                    return Err(Error::EvaluationFailure {
                        s,
                        reason: format!(
                            "expected {0}x{0}, got {1}x{2}",
                            f.dim,
                            m.nrows(),
                            m.ncols()
                        ),
                    });
                }
                HermitianOperator::new(m).map_err(|e| Error::EvaluationFailure {
                    s,
                    reason: e.to_string(),
                })
            }
        }
    }
}

/// Continuity-matched eigenpairs `{E_s^n, Φ_s^n}` on the schedule grid.
///
/// Labels are fixed at `s = 0` by ascending energy and then follow the
/// eigenvectors; energies are never re-sorted afterwards. Each column of
/// `vectors(k)` is phase-fixed so that its overlap with the same label at
/// `k - 1` is real and positive.
#[derive(Debug, Clone)]
pub struct EigenbasisPath {
    family: DrivenHamiltonian,
    grid: Vec<f64>,
    energies: Vec<Vec<f64>>,
    vectors: Vec<CMatrix>,
    degeneracy_threshold: f64,
}

impl EigenbasisPath {
    pub fn family(&self) -> &DrivenHamiltonian {
        &self.family
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    pub fn degeneracy_threshold(&self) -> f64 {
        self.degeneracy_threshold
    }

    pub fn energies(&self, k: usize) -> &[f64] {
        &self.energies[k]
    }

    pub fn vectors(&self, k: usize) -> &CMatrix {
        &self.vectors[k]
    }

    /// Adjacent label gaps `E^{n+1} - E^n` at grid point `k`.
    pub fn gaps(&self, k: usize) -> Vec<f64> {
        self.energies[k].windows(2).map(|w| w[1] - w[0]).collect()
    }

    fn check_index(&self, k: usize) -> Result<()> {
        if k >= self.len() {
            return Err(Error::IndexOutOfRange {
                index: k,
                len: self.len(),
            });
        }
        Ok(())
    }
}

fn check_gaps(energies: &[f64], s: f64, threshold: f64) -> Result<()> {
    for (level, w) in energies.windows(2).enumerate() {
        let gap = w[1] - w[0];
        if gap.is_nan() || gap < threshold {
            return Err(Error::DegenerateGap {
                s,
                level,
                gap,
                threshold,
            });
        }
    }
    Ok(())
}

/// Greedy maximal-overlap assignment: `assignment[label] = candidate column`.
/// Columns of `candidates` are re-phased so every matched overlap is real
/// and positive, and reordered into label order.
fn match_frame(reference: &CMatrix, candidates: &CMatrix, s: f64) -> Result<(Vec<usize>, CMatrix)> {
    let d = reference.ncols();
    let overlaps = reference.adjoint() * candidates;
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            pairs.push((overlaps[(i, j)].norm(), i, j));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut assignment = vec![usize::MAX; d];
    let mut taken = vec![false; d];
    let mut assigned = 0;
    for (magnitude, label, cand) in pairs {
        if assignment[label] != usize::MAX || taken[cand] {
            continue;
        }
        if magnitude < CONTINUITY_MIN_OVERLAP {
            return Err(Error::ContinuityLoss {
                s,
                overlap: magnitude,
            });
        }
        assignment[label] = cand;
        taken[cand] = true;
        assigned += 1;
        if assigned == d {
            break;
        }
    }

    let mut frame = CMatrix::zeros(d, d);
    for (label, &cand) in assignment.iter().enumerate() {
        let ov = overlaps[(label, cand)];
        let phase = ov.conj() / ov.norm();
        for i in 0..d {
            frame[(i, label)] = candidates[(i, cand)] * phase;
        }
    }
    Ok((assignment, frame))
}

fn spectral_range(energies: &[f64]) -> f64 {
    energies.last().copied().unwrap_or(0.0) - energies.first().copied().unwrap_or(0.0)
}

/// Default threshold: `1e-8 ×` the spectral range of `H_0`.
pub fn default_degeneracy_threshold(h0_energies: &[f64]) -> f64 {
    let range = spectral_range(h0_energies);
    if range > 0.0 {
        DEFAULT_RELATIVE_DEGENERACY * range
    } else {
        f64::MIN_POSITIVE
    }
}

/// Tracks eigenpairs of `family` along the schedule grid.
///
/// `degeneracy_threshold = None` selects [`default_degeneracy_threshold`].
pub fn trace_path(
    family: &DrivenHamiltonian,
    schedule: &DrivingSchedule,
    degeneracy_threshold: Option<f64>,
) -> Result<EigenbasisPath> {
    let grid = schedule.grid();
    let h0 = family.evaluate(grid[0])?;
    let first = eig_hermitian(&h0)?;
    let threshold = match degeneracy_threshold {
        Some(t) if t.is_finite() && t >= 0.0 => t,
        Some(t) => {
            return Err(Error::InvalidArgument(format!(
                "degeneracy threshold {t} must be finite and non-negative"
            )))
        }
        None => default_degeneracy_threshold(&first.eigenvalues),
    };
    check_gaps(&first.eigenvalues, grid[0], threshold)?;

    let mut energies = Vec::with_capacity(grid.len());
    let mut vectors = Vec::with_capacity(grid.len());
    energies.push(first.eigenvalues);
    vectors.push(first.eigenvectors);

    for &s in &grid[1..] {
        let eig = eig_hermitian(&family.evaluate(s)?)?;
        let (assignment, frame) = match_frame(vectors.last().unwrap(), &eig.eigenvectors, s)?;
        let labelled: Vec<f64> = assignment.iter().map(|&j| eig.eigenvalues[j]).collect();
        check_gaps(&labelled, s, threshold)?;
        energies.push(labelled);
        vectors.push(frame);
    }

    Ok(EigenbasisPath {
        family: family.clone(),
        grid,
        energies,
        vectors,
        degeneracy_threshold: threshold,
    })
}

/// `U_{s_k} = Σ_n |Φ_{s_k}^n⟩⟨Φ_0^n|`.
pub fn transport_unitary(path: &EigenbasisPath, k: usize) -> Result<CMatrix> {
    path.check_index(k)?;
    Ok(&path.vectors[k] * path.vectors[0].adjoint())
}

/// `H̃_s = Σ_n E_s^n |Φ_0^n⟩⟨Φ_0^n|`.
pub fn frozen_frame_hamiltonian(path: &EigenbasisPath, k: usize) -> Result<HermitianOperator> {
    path.check_index(k)?;
    let decomposition = SpectralDecomposition {
        eigenvalues: path.energies[k].clone(),
        eigenvectors: path.vectors[0].clone(),
    };
    Ok(HermitianOperator::hermitized(decomposition.reconstruct()))
}

/// Second-order stencil `(offsets, weights)` for a first derivative at index
/// `k` of an `n`-point grid; one-sided at the ends.
fn derivative_stencil(k: usize, n: usize) -> Vec<(usize, f64)> {
    if n == 2 {
        return vec![(0, -1.0), (1, 1.0)];
    }
    if k == 0 {
        vec![(0, -1.5), (1, 2.0), (2, -0.5)]
    } else if k + 1 == n {
        vec![(n - 3, 0.5), (n - 2, -2.0), (n - 1, 1.5)]
    } else {
        vec![(k - 1, -0.5), (k + 1, 0.5)]
    }
}

/// Converts `Φ_k† ∂_s Φ_k` into `V = -i Φ_0 (Φ_k† ∂Φ_k) Φ_0†`, rejecting large
/// Hermiticity defects.
fn velocity_from_frame_derivative(
    path: &EigenbasisPath,
    k: usize,
    frame_derivative: &CMatrix,
) -> Result<HermitianOperator> {
    let phi0 = &path.vectors[0];
    let local = path.vectors[k].adjoint() * frame_derivative * Complex64::new(0.0, -1.0);
    let defect = hermiticity_defect(&local);
    if defect > FD_HERMITICITY_LIMIT {
        return Err(Error::GridTooCoarse {
            s: path.grid[k],
            defect,
        });
    }
    Ok(HermitianOperator::hermitized(phi0 * local * phi0.adjoint()))
}

/// Gauge velocity `V_{s_k} = -i U† ∂_s U`.
///
/// Isospectral families return their generator. Otherwise `∂_s U` is a
/// second-order finite difference: over the path grid when `fd_step` is
/// `None`, or over freshly evaluated frames at `s_k ± fd_step` matched to the
/// path frame at `k`.
pub fn gauge_velocity(
    path: &EigenbasisPath,
    k: usize,
    fd_step: Option<f64>,
) -> Result<HermitianOperator> {
    path.check_index(k)?;
    if let Some(iso) = path.family.isospectral() {
        return Ok(iso.generator().clone());
    }
    let derivative = match fd_step {
        None => {
            let n = path.len();
            let h = path.grid[1] - path.grid[0];
            let mut acc = CMatrix::zeros(path.dim(), path.dim());
            for (idx, w) in derivative_stencil(k, n) {
                acc += &path.vectors[idx] * c(w / h);
            }
            acc
        }
        Some(h) => local_frame_derivative(path, k, h)?,
    };
    velocity_from_frame_derivative(path, k, &derivative)
}

fn local_frame_derivative(path: &EigenbasisPath, k: usize, h: f64) -> Result<CMatrix> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "fd_step {h} must be positive"
        )));
    }
    let s = path.grid[k];
    let lo = path.grid[0];
    let hi = *path.grid.last().unwrap();
    let reference = &path.vectors[k];
    let frame_at = |x: f64| -> Result<CMatrix> {
        let eig = eig_hermitian(&path.family.evaluate(x)?)?;
        Ok(match_frame(reference, &eig.eigenvectors, x)?.1)
    };
    let stencil: Vec<(f64, f64)> = if s - h >= lo && s + h <= hi {
        vec![(-h, -0.5), (h, 0.5)]
    } else if s - h < lo {
        vec![(0.0, -1.5), (h, 2.0), (2.0 * h, -0.5)]
    } else {
        vec![(-2.0 * h, 0.5), (-h, -2.0), (0.0, 1.5)]
    };
    let mut acc = CMatrix::zeros(path.dim(), path.dim());
    for (offset, w) in stencil {
        let frame = if offset == 0.0 {
            reference.clone()
        } else {
            frame_at(s + offset)?
        };
        acc += frame * c(w / h);
    }
    Ok(acc)
}

/// `∂_s V_s` by differencing [`gauge_velocity`] along the grid. Zero for
/// isospectral families.
pub fn gauge_acceleration(path: &EigenbasisPath, k: usize) -> Result<HermitianOperator> {
    path.check_index(k)?;
    if path.family.isospectral().is_some() {
        return Ok(HermitianOperator::zeros(path.dim()));
    }
    let n = path.len();
    let h = path.grid[1] - path.grid[0];
    let mut acc = CMatrix::zeros(path.dim(), path.dim());
    for (idx, w) in derivative_stencil(k, n) {
        acc += gauge_velocity(path, idx, None)?.matrix() * c(w / h);
    }
    Ok(HermitianOperator::hermitized(acc))
}

/// `V_s` and `∂_s V_s` at every grid point.
#[derive(Debug, Clone)]
pub struct GaugeProfile {
    pub velocities: Vec<HermitianOperator>,
    pub accelerations: Vec<HermitianOperator>,
}

impl GaugeProfile {
    pub fn velocity_norms(&self) -> Result<Vec<f64>> {
        self.velocities.iter().map(|v| v.operator_norm()).collect()
    }

    pub fn acceleration_norms(&self) -> Result<Vec<f64>> {
        self.accelerations
            .iter()
            .map(|v| v.operator_norm())
            .collect()
    }
}

/// Computes every velocity once and differences the sequence for the
/// accelerations.
pub fn gauge_profile(path: &EigenbasisPath, fd_step: Option<f64>) -> Result<GaugeProfile> {
    let n = path.len();
    let velocities = (0..n)
        .map(|k| gauge_velocity(path, k, fd_step))
        .collect::<Result<Vec<_>>>()?;
    let accelerations = if path.family.isospectral().is_some() {
        vec![HermitianOperator::zeros(path.dim()); n]
    } else {
        let h = path.grid[1] - path.grid[0];
        (0..n)
            .map(|k| {
                let mut acc = CMatrix::zeros(path.dim(), path.dim());
                for (idx, w) in derivative_stencil(k, n) {
                    acc += velocities[idx].matrix() * c(w / h);
                }
                HermitianOperator::hermitized(acc)
            })
            .collect()
    };
    Ok(GaugeProfile {
        velocities,
        accelerations,
    })
}

/// `μ_s` (dimensionless, positive) and `ν_s` (per unit `s`) on the path grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFunctionals {
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
}

impl SpectralFunctionals {
    pub fn mu_inv(&self) -> Vec<f64> {
        self.mu.iter().map(|m| 1.0 / m).collect()
    }
}

fn check_spectra(e0: &[f64], es: &[f64], des: &[f64]) -> Result<()> {
    for other in [es.len(), des.len()] {
        if other != e0.len() {
            return Err(Error::DimensionMismatch {
                left: e0.len(),
                right: other,
            });
        }
    }
    if es
        .windows(2)
        .any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
    {
        return Err(Error::UnorderedSpectrum);
    }
    Ok(())
}

/// `(1/μ, ν)` from adjacent levels only:
/// `max_n |ΔE_0^n / ΔE_s^n|` and `max_n |∂_s ΔE_s^n / ΔE_s^n|`.
pub fn adjacent_pair_functionals(e0: &[f64], es: &[f64], des: &[f64]) -> Result<(f64, f64)> {
    check_spectra(e0, es, des)?;
    if e0.len() < 2 {
        return Ok((1.0, 0.0));
    }
    let mut mu_inv = 0.0_f64;
    let mut nu = 0.0_f64;
    for n in 0..e0.len() - 1 {
        let gap = es[n + 1] - es[n];
        mu_inv = mu_inv.max(((e0[n + 1] - e0[n]) / gap).abs());
        nu = nu.max(((des[n + 1] - des[n]) / gap).abs());
    }
    Ok((mu_inv, nu))
}

/// Brute-force `(1/μ, ν)` over every pair `m > n`. Agrees with
/// [`adjacent_pair_functionals`] for any strictly ordered `es`.
pub fn all_pairs_oracle(e0: &[f64], es: &[f64], des: &[f64]) -> Result<(f64, f64)> {
    check_spectra(e0, es, des)?;
    if e0.len() < 2 {
        return Ok((1.0, 0.0));
    }
    let mut mu_inv = 0.0_f64;
    let mut nu = 0.0_f64;
    for m in 1..e0.len() {
        for n in 0..m {
            let gap = es[m] - es[n];
            mu_inv = mu_inv.max(((e0[m] - e0[n]) / gap).abs());
            nu = nu.max(((des[m] - des[n]) / gap).abs());
        }
    }
    Ok((mu_inv, nu))
}

/// `∂_s E_s^n` at grid point `k` by the same stencil used for `V_s`.
pub fn energy_derivatives(path: &EigenbasisPath, k: usize) -> Result<Vec<f64>> {
    path.check_index(k)?;
    let h = path.grid[1] - path.grid[0];
    let mut out = vec![0.0; path.dim()];
    for (idx, w) in derivative_stencil(k, path.len()) {
        for (o, e) in out.iter_mut().zip(&path.energies[idx]) {
            *o += w * e / h;
        }
    }
    Ok(out)
}

/// `μ_s`, `ν_s` along the path. Isospectral families give `μ ≡ 1`, `ν ≡ 0`.
pub fn spectral_functionals(path: &EigenbasisPath) -> Result<SpectralFunctionals> {
    let n = path.len();
    if path.family.isospectral().is_some() {
        return Ok(SpectralFunctionals {
            mu: vec![1.0; n],
            nu: vec![0.0; n],
        });
    }
    let e0 = &path.energies[0];
    let mut mu = Vec::with_capacity(n);
    let mut nu = Vec::with_capacity(n);
    for k in 0..n {
        let es = &path.energies[k];
        check_gaps(es, path.grid[k], path.degeneracy_threshold)?;
        let des = energy_derivatives(path, k)?;
        let (mu_inv, nu_k) = adjacent_pair_functionals(e0, es, &des)?;
        mu.push(1.0 / mu_inv);
        nu.push(nu_k);
    }
    Ok(SpectralFunctionals { mu, nu })
}

/// Normalized Boltzmann weights `exp(-β E_n) / Z`, shifted to the lowest
/// energy before exponentiation.
pub fn boltzmann_weights(energies: &[f64], beta: f64) -> Result<Vec<f64>> {
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::NonFiniteBeta(beta));
    }
    let e_min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = energies
        .iter()
        .map(|e| (-beta * (e - e_min)).exp())
        .collect();
    let z: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / z).collect())
}

/// Thermal state `exp(-βH) / tr exp(-βH)`.
pub fn gibbs_state(h: &HermitianOperator, beta: f64) -> Result<DensityMatrix> {
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::NonFiniteBeta(beta));
    }
    let eig = eig_hermitian(h)?;
    let weights = boltzmann_weights(&eig.eigenvalues, beta)?;
    Ok(DensityMatrix::from_weights(&weights, &eig.eigenvectors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, random_hermitian, spin_matrices};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn spin_half_family(generator_sign: f64) -> DrivenHamiltonian {
        let s = spin_matrices(0.5).unwrap();
        DrivenHamiltonian::uniform_isospectral(s.y.clone(), &s.z * generator_sign).unwrap()
    }

    #[test]
    fn schedule_validation_and_grid() {
        assert!(DrivingSchedule::new(0.0, 1.0, 10).is_err());
        assert!(DrivingSchedule::new(1.0, -1.0, 10).is_err());
        assert!(DrivingSchedule::new(1.0, 1.0, 1).is_err());
        let sched = DrivingSchedule::new(0.5, 2.0, 5).unwrap();
        assert_eq!(sched.grid(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_abs_diff_eq!(sched.dt(), 1.0, epsilon = 1e-15);
        assert_eq!(sched.times().last().copied(), Some(4.0));
    }

    #[test]
    fn isospectral_at_zero_is_h0() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h0 = random_hermitian(&mut rng, 4);
        let v = random_hermitian(&mut rng, 4);
        let fam = DrivenHamiltonian::uniform_isospectral(h0.clone(), v).unwrap();
        assert!(max_abs(&(fam.evaluate(0.0).unwrap().into_matrix() - h0.matrix())) < 1e-12);
    }

    #[test]
    fn wire_form_from_minus_sz_generator() {
        let s = spin_matrices(0.5).unwrap();
        let alpha: f64 = 0.83;
        let expected = s.x.matrix() * c(-alpha.sin()) + s.y.matrix() * c(alpha.cos());
        let h = spin_half_family(-1.0).evaluate(alpha).unwrap();
        assert!(max_abs(&(h.into_matrix() - &expected)) < 1e-14);
        // The opposite generator rotates the other way.
        let mirrored = s.x.matrix() * c(alpha.sin()) + s.y.matrix() * c(alpha.cos());
        let h = spin_half_family(1.0).evaluate(alpha).unwrap();
        assert!(max_abs(&(h.into_matrix() - &mirrored)) < 1e-14);
    }

    #[test]
    fn isospectral_spectrum_is_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h0 = random_hermitian(&mut rng, 5);
        let v = random_hermitian(&mut rng, 5);
        let reference = h0.eig().unwrap().eigenvalues;
        let fam = DrivenHamiltonian::uniform_isospectral(h0, v).unwrap();
        for _ in 0..20 {
            let s = rng.random_range(0.0..6.0);
            let e = fam.evaluate(s).unwrap().eig().unwrap().eigenvalues;
            for (a, b) in e.iter().zip(&reference) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn generic_family_rejects_non_hermitian_output() {
        let fam = DrivenHamiltonian::generic(2, "bad", |s| {
            CMatrix::from_row_slice(2, 2, &[c(0.0), c(s), c(0.0), c(0.0)])
        });
        assert!(fam.evaluate(0.0).is_ok());
        assert!(matches!(
            fam.evaluate(1.0),
            Err(Error::EvaluationFailure { .. })
        ));
        let wrong_dim = DrivenHamiltonian::generic(3, "bad", |_| CMatrix::identity(2, 2));
        assert!(wrong_dim.evaluate(0.0).is_err());
    }

    #[test]
    fn constant_family_path_has_identical_frames() {
        let h0 = HermitianOperator::from_real_diagonal(&[0.0, 1.0, 3.0]);
        let fam = DrivenHamiltonian::constant(h0);
        let sched = DrivingSchedule::new(1.0, 1.0, 11).unwrap();
        let path = trace_path(&fam, &sched, None).unwrap();
        for k in 0..path.len() {
            assert!(max_abs(&(path.vectors(k) - path.vectors(0))) < 1e-14);
            assert_eq!(path.energies(k), path.energies(0));
        }
        let v = gauge_velocity(&path, 4, None).unwrap();
        assert_eq!(v.operator_norm().unwrap(), 0.0);
        assert_eq!(
            gauge_acceleration(&path, 4)
                .unwrap()
                .operator_norm()
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn isospectral_path_rotates_rigidly() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h0 = random_hermitian(&mut rng, 4);
        let v = &random_hermitian(&mut rng, 4) * 0.5;
        let fam = DrivenHamiltonian::uniform_isospectral(h0, v).unwrap();
        let iso = fam.isospectral().unwrap().clone();
        let sched = DrivingSchedule::new(1.0, 2.0, 201).unwrap();
        let path = trace_path(&fam, &sched, None).unwrap();
        for k in [0, 50, 200] {
            for (a, b) in path.energies(k).iter().zip(path.energies(0)) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
            // Φ_s^n ∝ exp(isV) Φ_0^n, so the overlap has unit modulus.
            let rotated = iso.rotation(path.grid()[k]) * path.vectors(0);
            let overlaps = path.vectors(k).adjoint() * rotated;
            for n in 0..4 {
                assert_abs_diff_eq!(overlaps[(n, n)].norm(), 1.0, epsilon = 1e-8);
            }
            let u = transport_unitary(&path, k).unwrap();
            let gram = u.adjoint() * &u;
            assert!(max_abs(&(gram - CMatrix::identity(4, 4))) < 1e-10);
        }
        assert!(max_abs(&(transport_unitary(&path, 0).unwrap() - CMatrix::identity(4, 4))) < 1e-12);
    }

    #[test]
    fn transport_reconstructs_hamiltonian() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_hermitian(&mut rng, 4);
        let b = random_hermitian(&mut rng, 4);
        let fam = DrivenHamiltonian::linear_interpolation(a, b, 1.0).unwrap();
        let sched = DrivingSchedule::new(1.0, 1.0, 401).unwrap();
        let path = match trace_path(&fam, &sched, None) {
            Ok(p) => p,
            Err(e) => panic!("{e}"),
        };
        for k in (0..path.len()).step_by(40) {
            let u = transport_unitary(&path, k).unwrap();
            let frozen = frozen_frame_hamiltonian(&path, k).unwrap();
            let rebuilt = frozen.conjugate_by(&u);
            let direct = fam.evaluate(path.grid()[k]).unwrap();
            assert!(max_abs(&(rebuilt.into_matrix() - direct.matrix())) < 1e-8);
        }
    }

    #[test]
    fn index_out_of_range() {
        let fam = DrivenHamiltonian::constant(HermitianOperator::from_real_diagonal(&[0.0, 1.0]));
        let path = trace_path(&fam, &DrivingSchedule::new(1.0, 1.0, 3).unwrap(), None).unwrap();
        assert!(matches!(
            transport_unitary(&path, 3),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn degenerate_spectrum_is_rejected() {
        let fam =
            DrivenHamiltonian::constant(HermitianOperator::from_real_diagonal(&[1.0, 1.0, 2.0]));
        let sched = DrivingSchedule::new(1.0, 1.0, 5).unwrap();
        assert!(matches!(
            trace_path(&fam, &sched, None),
            Err(Error::DegenerateGap { level: 0, .. })
        ));
    }

    #[test]
    fn level_crossing_is_rejected() {
        // Diagonal levels 0 and 1 - s cross at s = 1 with no coupling.
        let fam = DrivenHamiltonian::generic(2, "crossing", |s| {
            CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(0.0), c(1.0 - s)]))
        });
        let sched = DrivingSchedule::new(1.0, 2.0, 41).unwrap();
        assert!(matches!(
            trace_path(&fam, &sched, None),
            Err(Error::DegenerateGap { .. })
        ));
    }

    #[test]
    fn coarse_grid_loses_continuity() {
        // The frame jumps from the standard basis to the Fourier basis, where
        // every overlap has modulus 1/√5.
        let d = 5;
        let fourier = CMatrix::from_fn(d, d, |j, k| {
            Complex64::from_polar(
                1.0 / (d as f64).sqrt(),
                2.0 * PI * (j * k) as f64 / d as f64,
            )
        });
        let diag = CMatrix::from_diagonal(&nalgebra::DVector::from_fn(d, |i, _| c(i as f64)));
        let fam = DrivenHamiltonian::generic(d, "jump", move |s| {
            if s < 0.5 {
                diag.clone()
            } else {
                &fourier * &diag * fourier.adjoint()
            }
        });
        let sched = DrivingSchedule::new(1.0, 1.0, 3).unwrap();
        assert!(matches!(
            trace_path(&fam, &sched, None),
            Err(Error::ContinuityLoss { .. })
        ));
    }

    #[test]
    fn isospectral_velocity_is_stored_generator() {
        let s = spin_matrices(0.5).unwrap();
        let fam = spin_half_family(-1.0);
        let path = trace_path(&fam, &DrivingSchedule::new(0.1, 3.0, 31).unwrap(), None).unwrap();
        let minus_sz = &s.z * -1.0;
        for k in [0, 10, 30] {
            assert_eq!(gauge_velocity(&path, k, None).unwrap(), minus_sz);
            assert_eq!(
                gauge_acceleration(&path, k)
                    .unwrap()
                    .operator_norm()
                    .unwrap(),
                0.0
            );
        }
        let f = spectral_functionals(&path).unwrap();
        assert!(f.mu.iter().all(|&m| m == 1.0));
        assert!(f.nu.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn uniform_gap_dilation_functionals() {
        let h0 = HermitianOperator::from_real_diagonal(&[-1.0, 0.5, 2.0]);
        let fam = DrivenHamiltonian::generic(3, "dilation", move |s| h0.matrix() * c(1.0 + s));
        let sched = DrivingSchedule::new(1.0, 2.0, 21).unwrap();
        let path = trace_path(&fam, &sched, None).unwrap();
        let f = spectral_functionals(&path).unwrap();
        for (k, &s) in path.grid().iter().enumerate() {
            assert_abs_diff_eq!(1.0 / f.mu[k], 1.0 / (1.0 + s), epsilon = 1e-12);
            assert_abs_diff_eq!(f.nu[k], 1.0 / (1.0 + s), epsilon = 1e-12);
        }
    }

    #[test]
    fn all_pairs_trivial_cases() {
        let e = [0.0, 1.0, 3.0];
        let (mu_inv, _) = all_pairs_oracle(&e, &e, &[0.0; 3]).unwrap();
        assert_abs_diff_eq!(mu_inv, 1.0, epsilon = 1e-15);
        let two = all_pairs_oracle(&[0.0, 2.0], &[0.0, 1.0], &[0.3, -0.1]).unwrap();
        let adj = adjacent_pair_functionals(&[0.0, 2.0], &[0.0, 1.0], &[0.3, -0.1]).unwrap();
        assert_eq!(two, adj);
        assert!(matches!(
            all_pairs_oracle(&e, &[0.0, 2.0, 1.0], &[0.0; 3]),
            Err(Error::UnorderedSpectrum)
        ));
    }

    #[test]
    fn lemma_adjacent_equals_all_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let d = rng.random_range(3..=10);
            let e0: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
            let mut es: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
            es.sort_by(f64::total_cmp);
            if es.windows(2).any(|w| w[1] <= w[0]) {
                continue;
            }
            let des: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let (a_mu, a_nu) = adjacent_pair_functionals(&e0, &es, &des).unwrap();
            let (b_mu, b_nu) = all_pairs_oracle(&e0, &es, &des).unwrap();
            assert!((a_mu - b_mu).abs() <= 1e-12 * b_mu.max(1.0));
            assert!((a_nu - b_nu).abs() <= 1e-12 * b_nu.max(1.0));
        }
    }

    #[test]
    fn gibbs_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let h = random_hermitian(&mut rng, 4);
        let rho = gibbs_state(&h, 0.0).unwrap();
        assert!(max_abs(&(rho.matrix() - CMatrix::identity(4, 4) * c(0.25))) < 1e-14);

        let e = 1.7;
        let h = HermitianOperator::from_real_diagonal(&[0.0, e]);
        let rho = gibbs_state(&h, 3.0_f64.ln() / e).unwrap();
        assert_abs_diff_eq!(rho.matrix()[(0, 0)].re, 0.75, epsilon = 1e-14);
        assert_abs_diff_eq!(rho.matrix()[(1, 1)].re, 0.25, epsilon = 1e-14);

        let cold = gibbs_state(&h, 50.0 / e).unwrap();
        assert!(cold.matrix()[(1, 1)].re < 1e-20);
        assert_abs_diff_eq!(cold.trace(), 1.0, epsilon = 1e-12);

        assert!(matches!(
            gibbs_state(&h, f64::INFINITY),
            Err(Error::NonFiniteBeta(_))
        ));
        assert!(matches!(
            gibbs_state(&h, -1.0),
            Err(Error::NonFiniteBeta(_))
        ));
    }

    #[test]
    fn gibbs_survives_huge_energies() {
        let h = HermitianOperator::from_real_diagonal(&[1e4, 1e4 + 1.0]);
        let rho = gibbs_state(&h, 10.0).unwrap();
        assert!(rho.trace().is_finite());
        assert_abs_diff_eq!(rho.trace(), 1.0, epsilon = 1e-12);
    }
}
