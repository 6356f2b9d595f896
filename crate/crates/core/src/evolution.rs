//! Time-ordered unitary evolution `ρ_t = W_t ρ_0 W_t†` of a driven family.

use std::io::Write;

use crate::error::{Error, Result};
use crate::hamiltonian::{gibbs_state, DrivenHamiltonian, DrivingSchedule};
use crate::linalg::{eig_hermitian, spectral_radius, CMatrix, DensityMatrix, HermitianOperator};

/// One-step propagator used between grid points.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Integrator {
    /// `exp(-i H(s_mid) δ)`, second order in `δ`.
    #[default]
    Midpoint,
    /// Two-exponential commutator-free Magnus scheme on Gauss nodes,
    /// fourth order in `δ`.
    Magnus4,
}

/// States on the schedule grid together with the initial spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub s_values: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub initial_spectrum: Vec<f64>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn final_state(&self) -> &DensityMatrix {
        self.states
            .last()
            .expect("trajectory has at least two points")
    }

    pub fn purities(&self) -> Vec<f64> {
        self.states.iter().map(DensityMatrix::purity).collect()
    }

    /// CSV with columns `t,s,purity` and, if `entries` is set, the real and
    /// imaginary parts of every matrix element in row-major order.
    pub fn write_csv<W: Write>(&self, mut out: W, entries: bool) -> std::io::Result<()> {
        let d = self.states.first().map_or(0, DensityMatrix::dim);
        let mut header = String::from("t,s,purity");
        if entries {
            for i in 0..d {
                for j in 0..d {
                    header.push_str(&format!(",re_{i}_{j},im_{i}_{j}"));
                }
            }
        }
        writeln!(out, "{header}")?;
        for ((t, s), rho) in self.times.iter().zip(&self.s_values).zip(&self.states) {
            write!(out, "{t:.16e},{s:.16e},{:.16e}", rho.purity())?;
            if entries {
                let m = rho.matrix();
                for i in 0..d {
                    for j in 0..d {
                        write!(out, ",{:.16e},{:.16e}", m[(i, j)].re, m[(i, j)].im)?;
                    }
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// `exp(-i H dt)` with the `‖H‖ dt ≤ 1` guard, reusing one decomposition.
fn guarded_exp(h: &HermitianOperator, dt: f64, step: usize) -> Result<CMatrix> {
    let eig = eig_hermitian(h)?;
    let norm_dt = spectral_radius(&eig.eigenvalues) * dt;
    if norm_dt > 1.0 {
        return Err(Error::StepTooLarge { step, norm_dt });
    }
    Ok(eig.map(|e| num_complex::Complex64::from_polar(1.0, -e * dt)))
}

/// Propagator from grid point `k` to `k + 1`.
pub fn step_propagator(
    family: &DrivenHamiltonian,
    schedule: &DrivingSchedule,
    k: usize,
    integrator: Integrator,
) -> Result<CMatrix> {
    let s0 = schedule.s_at(k);
    let ds = schedule.s_at(k + 1) - s0;
    let dt = ds / schedule.omega();
    match integrator {
        Integrator::Midpoint => guarded_exp(&family.evaluate(s0 + 0.5 * ds)?, dt, k),
        Integrator::Magnus4 => {
            let r = 3f64.sqrt() / 6.0;
            let h1 = family.evaluate(s0 + (0.5 - r) * ds)?;
            let h2 = family.evaluate(s0 + (0.5 + r) * ds)?;
            let (a, b) = (0.25 - r, 0.25 + r);
            let early = &(&h1 * b) + &(&h2 * a);
            let late = &(&h1 * a) + &(&h2 * b);
            let first = guarded_exp(&early, dt, k)?;
            let second = guarded_exp(&late, dt, k)?;
            Ok(second * first)
        }
    }
}

/// Evolves `initial` along the schedule and records the state at every grid
/// point.
pub fn propagate_state(
    family: &DrivenHamiltonian,
    schedule: &DrivingSchedule,
    initial: DensityMatrix,
    integrator: Integrator,
) -> Result<TrajectoryRecord> {
    if initial.dim() != family.dim() {
        return Err(Error::DimensionMismatch {
            left: initial.dim(),
            right: family.dim(),
        });
    }
    let n = schedule.n_steps();
    let initial_spectrum = initial.spectrum()?;
    let mut states = Vec::with_capacity(n);
    states.push(initial);
    for k in 0..n - 1 {
        let w = step_propagator(family, schedule, k, integrator)?;
        let next = states[k].evolve(&w);
        states.push(next);
    }
    Ok(TrajectoryRecord {
        times: schedule.times(),
        s_values: schedule.grid(),
        states,
        initial_spectrum,
    })
}

/// Evolves the Gibbs state of `H_0` at inverse temperature `beta` with the
/// default integrator.
pub fn propagate(
    family: &DrivenHamiltonian,
    schedule: &DrivingSchedule,
    beta: f64,
) -> Result<TrajectoryRecord> {
    propagate_with(family, schedule, beta, Integrator::default())
}

pub fn propagate_with(
    family: &DrivenHamiltonian,
    schedule: &DrivingSchedule,
    beta: f64,
    integrator: Integrator,
) -> Result<TrajectoryRecord> {
    let rho0 = gibbs_state(&family.evaluate(0.0)?, beta)?;
    propagate_state(family, schedule, rho0, integrator)
}

/// Largest deviation of any recorded spectrum from the initial one.
pub fn verify_spectrum_conservation(traj: &TrajectoryRecord) -> Result<f64> {
    let mut worst = 0.0_f64;
    for rho in &traj.states {
        for (a, b) in rho.spectrum()?.iter().zip(&traj.initial_spectrum) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}
