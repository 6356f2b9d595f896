//! Dense complex linear algebra: Hermitian operators, their spectral
//! decompositions, matrix functions, and distances between density matrices.
//!
//! Every matrix function (propagators, Boltzmann weights, square roots) goes
//! through an eigendecomposition of a Hermitian operator, so unitarity and
//! positivity are inherited from the eigensolver rather than from a series.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
pub use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Relative tolerance on `|H_ij - conj(H_ji)|`.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Most negative eigenvalue tolerated in a density matrix.
pub const PSD_TOL: f64 = 1e-10;
/// Allowed deviation of a density-matrix trace from one.
pub const TRACE_TOL: f64 = 1e-10;
/// Eigenvalues between `-SQRT_CLAMP_LIMIT` and zero are clamped before `sqrt`.
pub const SQRT_CLAMP_LIMIT: f64 = 1e-8;

const EIG_MAX_ITERATIONS: usize = 100_000;

pub(crate) fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Largest entrywise deviation from Hermiticity.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut defect = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            defect = defect.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    defect
}

/// `tr(A B)` without forming the product.
pub fn trace_of_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let n = a.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// A dense Hermitian matrix (`ħ = 1`, energy units where applicable).
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    matrix: CMatrix,
}

impl HermitianOperator {
    /// Validates squareness and Hermiticity (relative tolerance
    /// [`HERMITICITY_TOL`], absolute when entries are below one).
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::NotSquare {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
            });
        }
        if matrix
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::InvalidArgument(
                "matrix has non-finite entries".into(),
            ));
        }
        let defect = hermiticity_defect(&matrix);
        if defect > HERMITICITY_TOL * max_abs(&matrix).max(1.0) {
            return Err(Error::NonHermitianInput { defect });
        }
        Ok(Self::hermitized(matrix))
    }

    /// Symmetrizes without checking. Callers must already know the input is
    /// Hermitian up to rounding.
    pub(crate) fn hermitized(matrix: CMatrix) -> Self {
        let sym = (&matrix + matrix.adjoint()) * c(0.5);
        Self { matrix: sym }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d = diag.len();
        let mut matrix = CMatrix::zeros(d, d);
        for (i, &e) in diag.iter().enumerate() {
            matrix[(i, i)] = c(e);
        }
        Self { matrix }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: CMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: CMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    /// `U H U†` for a unitary `U`.
    pub fn conjugate_by(&self, u: &CMatrix) -> Self {
        Self::hermitized(u * &self.matrix * u.adjoint())
    }

    pub fn eig(&self) -> Result<SpectralDecomposition> {
        eig_hermitian(self)
    }

    pub fn operator_norm(&self) -> Result<f64> {
        operator_norm(self)
    }
}

impl Add for &HermitianOperator {
    type Output = HermitianOperator;
    fn add(self, rhs: Self) -> HermitianOperator {
        HermitianOperator {
            matrix: &self.matrix + &rhs.matrix,
        }
    }
}

impl Sub for &HermitianOperator {
    type Output = HermitianOperator;
    fn sub(self, rhs: Self) -> HermitianOperator {
        HermitianOperator {
            matrix: &self.matrix - &rhs.matrix,
        }
    }
}

impl Mul<f64> for &HermitianOperator {
    type Output = HermitianOperator;
    fn mul(self, rhs: f64) -> HermitianOperator {
        HermitianOperator {
            matrix: &self.matrix * c(rhs),
        }
    }
}

/// Ascending eigenvalues with a unitary matrix of eigenvector columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `U diag(f(λ)) U†`.
    pub fn map<F>(&self, f: F) -> CMatrix
    where
        F: Fn(f64) -> Complex64,
    {
        let d = self.dim();
        let mut scaled = self.eigenvectors.clone();
        for (j, &lambda) in self.eigenvalues.iter().enumerate() {
            let factor = f(lambda);
            for i in 0..d {
                scaled[(i, j)] *= factor;
            }
        }
        scaled * self.eigenvectors.adjoint()
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.map(c)
    }
}

/// Hermitian eigendecomposition with ascending eigenvalues.
///
/// Output is deterministic: each eigenvector is phase-fixed so that its
/// largest-magnitude component (first one on ties) is real and positive.
/// Degenerate subspaces get whatever basis the solver produces.
pub fn eig_hermitian(h: &HermitianOperator) -> Result<SpectralDecomposition> {
    let d = h.dim();
    if d == 1 {
        return Ok(SpectralDecomposition {
            eigenvalues: vec![h.matrix[(0, 0)].re],
            eigenvectors: CMatrix::identity(1, 1),
        });
    }
    let eig = SymmetricEigen::try_new(h.matrix.clone(), f64::EPSILON, EIG_MAX_ITERATIONS)
        .ok_or(Error::EigenSolverFailure)?;

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .total_cmp(&eig.eigenvalues[b])
            .then(a.cmp(&b))
    });

    let mut eigenvectors = CMatrix::zeros(d, d);
    let mut eigenvalues = Vec::with_capacity(d);
    for (col, &src) in order.iter().enumerate() {
        eigenvalues.push(eig.eigenvalues[src]);
        let v = eig.eigenvectors.column(src);
        let mut pivot = 0;
        let mut best = -1.0;
        for i in 0..d {
            let m = v[i].norm();
            if m > best + 1e-14 {
                best = m;
                pivot = i;
            }
        }
        let phase = v[pivot].conj() / v[pivot].norm();
        for i in 0..d {
            eigenvectors[(i, col)] = v[i] * phase;
        }
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Largest absolute eigenvalue.
pub fn operator_norm(h: &HermitianOperator) -> Result<f64> {
    let eig = eig_hermitian(h)?;
    Ok(spectral_radius(&eig.eigenvalues))
}

pub(crate) fn spectral_radius(eigenvalues: &[f64]) -> f64 {
    eigenvalues.iter().fold(0.0_f64, |acc, e| acc.max(e.abs()))
}

/// `exp(-i H dt)` via the spectral decomposition of `H`.
pub fn propagator_step(h: &HermitianOperator, dt: f64) -> Result<CMatrix> {
    if !dt.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "time step {dt} is not finite"
        )));
    }
    let eig = eig_hermitian(h)?;
    Ok(eig.map(|e| Complex64::from_polar(1.0, -e * dt)))
}

/// A positive-semidefinite, unit-trace Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let h = HermitianOperator::new(matrix)
            .map_err(|e| Error::InvalidDensityMatrix(e.to_string()))?;
        let tr = h.matrix.trace().re;
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidDensityMatrix(format!("trace {tr}")));
        }
        let eig = eig_hermitian(&h)?;
        let min = eig.eigenvalues[0];
        if min < -PSD_TOL {
            return Err(Error::InvalidDensityMatrix(format!(
                "negative eigenvalue {min:.3e}"
            )));
        }
        Ok(Self { matrix: h.matrix })
    }

    pub(crate) fn from_matrix_unchecked(matrix: CMatrix) -> Self {
        Self {
            matrix: HermitianOperator::hermitized(matrix).matrix,
        }
    }

    /// `|ψ⟩⟨ψ|` for a normalized copy of `psi`.
    pub fn pure(psi: &CVector) -> Result<Self> {
        let norm = psi.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidDensityMatrix("zero state vector".into()));
        }
        let psi = psi / c(norm);
        Ok(Self::from_matrix_unchecked(&psi * psi.adjoint()))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: CMatrix::identity(dim, dim) * c(1.0 / dim as f64),
        }
    }

    /// `Σ_n w_n |v_n⟩⟨v_n|` for orthonormal columns `v_n` and weights summing
    /// to one.
    pub(crate) fn from_weights(weights: &[f64], basis: &CMatrix) -> Self {
        let d = weights.len();
        let mut scaled = basis.clone();
        for (j, &w) in weights.iter().enumerate() {
            for i in 0..d {
                scaled[(i, j)] *= c(w);
            }
        }
        Self::from_matrix_unchecked(scaled * basis.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn to_hermitian(&self) -> HermitianOperator {
        HermitianOperator {
            matrix: self.matrix.clone(),
        }
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// `tr ρ²`.
    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Ascending eigenvalues.
    pub fn spectrum(&self) -> Result<Vec<f64>> {
        Ok(eig_hermitian(&self.to_hermitian())?.eigenvalues)
    }

    /// `W ρ W†`.
    pub fn evolve(&self, w: &CMatrix) -> Self {
        Self::from_matrix_unchecked(w * &self.matrix * w.adjoint())
    }

    /// `⟨ψ|ρ|ψ⟩` for a normalized vector.
    pub fn expectation_of_projector(&self, psi: &CVector) -> f64 {
        (psi.adjoint() * &self.matrix * psi)[(0, 0)].re
    }
}

/// Principal square root of a positive-semidefinite operator. Eigenvalues in
/// `[-SQRT_CLAMP_LIMIT, 0)` are clamped to zero, as are positive eigenvalues
/// inside the eigensolver's rounding floor (`4 d ε λ_max`).
pub fn sqrt_psd(h: &HermitianOperator) -> Result<HermitianOperator> {
    let eig = eig_hermitian(h)?;
    let min = eig.eigenvalues[0];
    if min < -SQRT_CLAMP_LIMIT {
        return Err(Error::NegativeEigenvalue { min });
    }
    let top = eig.eigenvalues.last().copied().unwrap_or(0.0).max(0.0);
    let floor = 4.0 * eig.dim() as f64 * f64::EPSILON * top;
    Ok(HermitianOperator::hermitized(eig.map(|e| {
        if e <= floor {
            c(0.0)
        } else {
            c(e.sqrt())
        }
    })))
}

pub fn matrix_sqrt_psd(rho: &DensityMatrix) -> Result<HermitianOperator> {
    sqrt_psd(&rho.to_hermitian())
}

fn check_dims(a: &DensityMatrix, b: &DensityMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(())
}

/// `(1/2) tr|ρ2 - ρ1|`.
pub fn trace_distance(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    check_dims(rho1, rho2)?;
    let diff = HermitianOperator::hermitized(&rho2.matrix - &rho1.matrix);
    let eig = eig_hermitian(&diff)?;
    let half_sum: f64 = 0.5 * eig.eigenvalues.iter().map(|e| e.abs()).sum::<f64>();
    Ok(half_sum.clamp(0.0, 1.0))
}

/// `tr(√ρ1 √ρ2)`.
pub fn root_overlap(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    check_dims(rho1, rho2)?;
    let a = matrix_sqrt_psd(rho1)?;
    let b = matrix_sqrt_psd(rho2)?;
    Ok(trace_of_product(a.matrix(), b.matrix()).re)
}

/// `1 - tr(√ρ1 √ρ2)`, clamped to `[0, 1]`.
pub fn affinity_defect(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    Ok((1.0 - root_overlap(rho1, rho2)?).clamp(0.0, 1.0))
}

/// Spin-`S` angular momentum components in the `|S, m⟩` basis ordered
/// `m = S, S-1, …, -S`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinMatrices {
    pub x: HermitianOperator,
    pub y: HermitianOperator,
    pub z: HermitianOperator,
}

pub fn spin_matrices(spin: f64) -> Result<SpinMatrices> {
    let twice = 2.0 * spin;
    if spin.is_nan() || spin <= 0.0 || (twice - twice.round()).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "spin {spin} is not a positive half-integer"
        )));
    }
    let d = twice.round() as usize + 1;
    let m_of = |i: usize| spin - i as f64;
    let mut x = CMatrix::zeros(d, d);
    let mut y = CMatrix::zeros(d, d);
    let mut z = CMatrix::zeros(d, d);
    for i in 0..d {
        z[(i, i)] = c(m_of(i));
    }
    // S+ |m⟩ = sqrt(S(S+1) - m(m+1)) |m+1⟩; row i-1 holds m+1.
    for i in 1..d {
        let m = m_of(i);
        let amp = (spin * (spin + 1.0) - m * (m + 1.0)).sqrt();
        x[(i - 1, i)] = c(0.5 * amp);
        x[(i, i - 1)] = c(0.5 * amp);
        y[(i - 1, i)] = Complex64::new(0.0, -0.5 * amp);
        y[(i, i - 1)] = Complex64::new(0.0, 0.5 * amp);
    }
    Ok(SpinMatrices {
        x: HermitianOperator { matrix: x },
        y: HermitianOperator { matrix: y },
        z: HermitianOperator { matrix: z },
    })
}

/// GUE-style sample `(A + A†)/2` with standard complex Gaussian entries.
pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> HermitianOperator {
    let a = CMatrix::from_fn(dim, dim, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    HermitianOperator::hermitized(a)
}

/// Ginibre-induced random state `G G† / tr(G G†)`.
pub fn random_density_matrix<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DensityMatrix {
    let g = CMatrix::from_fn(dim, dim, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let gg = &g * g.adjoint();
    let tr = gg.trace().re;
    DensityMatrix::from_matrix_unchecked(gg * c(1.0 / tr))
}

pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CMatrix {
    let h = random_hermitian(rng, dim);
    propagator_step(&h, 1.0).expect("finite step on a valid Hermitian matrix")
}
