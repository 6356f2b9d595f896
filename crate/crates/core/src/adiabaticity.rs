//! Quasi-Gibbs reference states and the finite-temperature adiabatic bound.
//!
//! The measured quantity is the trace distance between the evolved state
//! and the quasi-Gibbs state `θ_s = Σ_n p_n |Φ_s^n⟩⟨Φ_s^n|`, which keeps the
//! initial Boltzmann weights on the transported eigenvectors. The bound is
//!
//! ```text
//! D ≤ √( √2 ω β [ ‖V_s‖/μ_s + ∫ ‖∂V‖/μ + ∫ ν ‖V‖/μ + √2 ∫ ‖V‖²/μ ] )
//! ```

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evolution::{propagate_with, Integrator, TrajectoryRecord};
use crate::hamiltonian::{
    boltzmann_weights, gauge_profile, gibbs_state, spectral_functionals, trace_path,
    DrivenHamiltonian, DrivingSchedule, EigenbasisPath, GaugeProfile, SpectralFunctionals,
};
use crate::linalg::{trace_distance, DensityMatrix};

/// Slack allowed between measured distance and bound.
pub const BOUND_TOLERANCE: f64 = 1e-8;

/// Initial Boltzmann weights on the continuity-matched frame at `k`.
pub fn quasi_gibbs(path: &EigenbasisPath, k: usize, beta: f64) -> Result<DensityMatrix> {
    let weights = boltzmann_weights(path.energies(0), beta)?;
    if k >= path.len() {
        return Err(Error::IndexOutOfRange {
            index: k,
            len: path.len(),
        });
    }
    Ok(DensityMatrix::from_weights(&weights, path.vectors(k)))
}

/// `exp(-β H_s) / tr exp(-β H_s)`.
pub fn instantaneous_gibbs(family: &DrivenHamiltonian, s: f64, beta: f64) -> Result<DensityMatrix> {
    gibbs_state(&family.evaluate(s)?, beta)
}

/// Per-term breakdown of the bound, plus the measured distance once audited.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub s_values: Vec<f64>,
    pub term_boundary: Vec<f64>,
    pub term_accel: Vec<f64>,
    pub term_gapdrift: Vec<f64>,
    pub term_quadratic: Vec<f64>,
    pub rhs_total: Vec<f64>,
    /// Empty until [`adiabatic_audit`] fills it.
    pub lhs_measured: Vec<f64>,
    /// Smallest `rhs - lhs` over the grid, once audited.
    pub min_margin: Option<f64>,
}

impl BoundReport {
    pub fn len(&self) -> usize {
        self.s_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s_values.is_empty()
    }

    pub fn max_lhs(&self) -> f64 {
        self.lhs_measured.iter().copied().fold(0.0, f64::max)
    }

    /// CSV with one row per grid point. `lhs_measured` is left blank before
    /// auditing.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "s,term_boundary,term_accel,term_gapdrift,term_quadratic,rhs_total,lhs_measured"
        )?;
        for k in 0..self.len() {
            write!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},",
                self.s_values[k],
                self.term_boundary[k],
                self.term_accel[k],
                self.term_gapdrift[k],
                self.term_quadratic[k],
                self.rhs_total[k]
            )?;
            if let Some(lhs) = self.lhs_measured.get(k) {
                write!(out, "{lhs:.16e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Cumulative trapezoid integral of `f` on `grid`, starting at zero.
fn cumulative_trapezoid(grid: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(f.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..f.len() {
        acc += 0.5 * (grid[k] - grid[k - 1]) * (f[k] + f[k - 1]);
        out.push(acc);
    }
    out
}

fn check_omega_beta(omega: f64, beta: f64) -> Result<()> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "omega {omega} must be positive"
        )));
    }
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::NonFiniteBeta(beta));
    }
    Ok(())
}

/// Evaluates the four bracket terms and the bound on the path grid.
pub fn bound_general(
    path: &EigenbasisPath,
    functionals: &SpectralFunctionals,
    profile: &GaugeProfile,
    omega: f64,
    beta: f64,
) -> Result<BoundReport> {
    check_omega_beta(omega, beta)?;
    let n = path.len();
    for (what, len) in [
        ("mu", functionals.mu.len()),
        ("nu", functionals.nu.len()),
        ("velocities", profile.velocities.len()),
        ("accelerations", profile.accelerations.len()),
    ] {
        if len != n {
            return Err(Error::GridMismatch(format!(
                "{what} has {len} points, path has {n}"
            )));
        }
    }
    let grid = path.grid();
    let mu_inv = functionals.mu_inv();
    let v = profile.velocity_norms()?;
    let dv = profile.acceleration_norms()?;

    let term_boundary: Vec<f64> = (0..n).map(|k| mu_inv[k] * v[k]).collect();
    let accel: Vec<f64> = (0..n).map(|k| mu_inv[k] * dv[k]).collect();
    let drift: Vec<f64> = (0..n)
        .map(|k| functionals.nu[k] * mu_inv[k] * v[k])
        .collect();
    let quad: Vec<f64> = (0..n).map(|k| mu_inv[k] * v[k] * v[k]).collect();

    let term_accel = cumulative_trapezoid(grid, &accel);
    let term_gapdrift = cumulative_trapezoid(grid, &drift);
    let term_quadratic: Vec<f64> = cumulative_trapezoid(grid, &quad)
        .into_iter()
        .map(|x| std::f64::consts::SQRT_2 * x)
        .collect();
    let prefactor = std::f64::consts::SQRT_2 * omega * beta;
    let rhs_total = (0..n)
        .map(|k| {
            let bracket = term_boundary[k] + term_accel[k] + term_gapdrift[k] + term_quadratic[k];
            (prefactor * bracket).sqrt()
        })
        .collect();

    Ok(BoundReport {
        s_values: grid.to_vec(),
        term_boundary,
        term_accel,
        term_gapdrift,
        term_quadratic,
        rhs_total,
        lhs_measured: Vec::new(),
        min_margin: None,
    })
}

/// Closed form for uniform isospectral driving:
/// `√(√2 ω β ‖V‖ (1 + √2 s ‖V‖))`. Arguments are expected to be non-negative.
pub fn bound_corollary(omega: f64, beta: f64, v_norm: f64, s: f64) -> f64 {
    let sqrt2 = std::f64::consts::SQRT_2;
    (sqrt2 * omega * beta * v_norm * (1.0 + sqrt2 * s * v_norm)).sqrt()
}

fn same_grid(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0))
}

/// Measures `D(ρ_t, θ_t)` along the trajectory and checks it against the
/// bound at every grid point.
pub fn adiabatic_audit(
    traj: &TrajectoryRecord,
    path: &EigenbasisPath,
    beta: f64,
    report: BoundReport,
) -> Result<BoundReport> {
    if !same_grid(&traj.s_values, path.grid()) {
        return Err(Error::GridMismatch("trajectory and path".into()));
    }
    if !same_grid(&report.s_values, path.grid()) {
        return Err(Error::GridMismatch("report and path".into()));
    }
    let lhs = (0..path.len())
        .into_par_iter()
        .map(|k| trace_distance(&traj.states[k], &quasi_gibbs(path, k, beta)?))
        .collect::<Result<Vec<_>>>()?;

    let mut min_margin = f64::INFINITY;
    for ((&s, &rhs), &l) in report.s_values.iter().zip(&report.rhs_total).zip(&lhs) {
        let margin = rhs - l;
        if margin < -BOUND_TOLERANCE {
            return Err(Error::BoundViolation { s, lhs: l, rhs });
        }
        min_margin = min_margin.min(margin);
    }
    Ok(BoundReport {
        lhs_measured: lhs,
        min_margin: Some(min_margin),
        ..report
    })
}

/// Knobs for [`run_audit`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AuditOptions {
    pub degeneracy_threshold: Option<f64>,
    pub fd_step: Option<f64>,
    pub integrator: Integrator,
}

/// Everything produced by one end-to-end scenario.
#[derive(Debug, Clone)]
pub struct AuditOutcome {
    pub trajectory: TrajectoryRecord,
    pub path: EigenbasisPath,
    pub functionals: SpectralFunctionals,
    pub report: BoundReport,
}

/// Path, functionals, gauge profile, bound, evolution of the initial Gibbs
/// state, and the audit, in that order.
pub fn run_audit(
    family: &DrivenHamiltonian,
    schedule: &DrivingSchedule,
    beta: f64,
    options: AuditOptions,
) -> Result<AuditOutcome> {
    let path = trace_path(family, schedule, options.degeneracy_threshold)?;
    let functionals = spectral_functionals(&path)?;
    let profile = gauge_profile(&path, options.fd_step)?;
    let bound = bound_general(&path, &functionals, &profile, schedule.omega(), beta)?;
    let trajectory = propagate_with(family, schedule, beta, options.integrator)?;
    let report = adiabatic_audit(&trajectory, &path, beta, bound)?;
    Ok(AuditOutcome {
        trajectory,
        path,
        functionals,
        report,
    })
}
