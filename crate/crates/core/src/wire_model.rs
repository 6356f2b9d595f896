//! A spin sensor carried around a current-carrying wire.
//!
//! With periodic boundary conditions the total electron momentum `P_e` is
//! conserved, so the spin sees the effective Hamiltonian
//! `γ(-sin α S_x + cos α S_y)` with `γ ∝ P_e / N`. Driving `α = ω t` is a
//! uniform isospectral drive with `V = -S_z`.
//!
//! Units are reduced (`ħ = 1`, wire constants are dimensionless inputs).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{propagate_state, Integrator};
use crate::hamiltonian::{DrivenHamiltonian, DrivingSchedule, IsospectralFamily};
use crate::linalg::{c, spin_matrices, CVector, DensityMatrix, HermitianOperator};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WireModelParams {
    /// Magnetic moment of the sensor spin.
    pub mu_magn: f64,
    /// Distance from the sensor to the wire.
    pub r: f64,
    pub e_charge: f64,
    pub m_e: f64,
    /// Electron number density.
    pub rho_density: f64,
    /// Wire cross-section.
    pub area: f64,
    pub n_electrons: u64,
    pub spin: f64,
    /// Per-electron momentum scale used when sampling `P_e`.
    pub p_f: f64,
    /// Total electron momentum, treated as a c-number.
    pub p_e: f64,
}

impl Default for WireModelParams {
    fn default() -> Self {
        Self {
            mu_magn: 1.0,
            r: 1.0,
            e_charge: 1.0,
            m_e: 1.0,
            rho_density: 1.0,
            area: 1.0,
            n_electrons: 1,
            spin: 0.5,
            p_f: 1.0,
            p_e: 1.0,
        }
    }
}

impl WireModelParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.mu_magn,
            self.r,
            self.e_charge,
            self.m_e,
            self.rho_density,
            self.area,
            self.spin,
            self.p_f,
            self.p_e,
        ]
        .iter()
        .all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidArgument(
                "wire parameters must be finite".into(),
            ));
        }
        if self.n_electrons == 0 {
            return Err(Error::InvalidArgument("N must be at least 1".into()));
        }
        if self.r <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "r = {} must be positive",
                self.r
            )));
        }
        if self.m_e == 0.0 {
            return Err(Error::InvalidArgument("m_e must be nonzero".into()));
        }
        spin_matrices(self.spin).map(|_| ())
    }
}

/// `γ = -(μ / 2πr) (e ρ A / m_e N) P_e`.
pub fn gamma_coupling(params: &WireModelParams) -> f64 {
    let field = params.mu_magn / (2.0 * std::f64::consts::PI * params.r);
    let current_per_momentum = params.e_charge * params.rho_density * params.area
        / (params.m_e * params.n_electrons as f64);
    -field * current_per_momentum * params.p_e
}

/// `γ(-sin α S_x + cos α S_y)` for spin `S`.
pub fn effective_hamiltonian(gamma: f64, alpha: f64, spin: f64) -> Result<HermitianOperator> {
    if !(gamma.is_finite() && alpha.is_finite()) {
        return Err(Error::InvalidArgument(
            "gamma and alpha must be finite".into(),
        ));
    }
    let s = spin_matrices(spin)?;
    let m = s.x.matrix() * c(-gamma * alpha.sin()) + s.y.matrix() * c(gamma * alpha.cos());
    HermitianOperator::new(m)
}

/// `H_0 = γ S_y` rotated by `V = -S_z`.
pub(crate) fn wire_isospectral_family(gamma: f64, spin: f64) -> Result<IsospectralFamily> {
    let s = spin_matrices(spin)?;
    IsospectralFamily::new(&s.y * gamma, &s.z * -1.0)
}

/// The wire drive as a [`DrivenHamiltonian`] with explicit `γ`.
pub fn wire_family(gamma: f64, spin: f64) -> Result<DrivenHamiltonian> {
    Ok(DrivenHamiltonian::UniformIsospectral(
        wire_isospectral_family(gamma, spin)?,
    ))
}

/// Pure-state infidelity `1 - F` for spin 1/2 started in an `S_y` eigenstate:
/// `(ω²/(ω²+γ²)) sin²((α/2) √(1 + γ²/ω²))`.
pub fn psa_fidelity_analytic(omega: f64, gamma: f64, alpha: f64) -> Result<f64> {
    if omega == 0.0 && gamma == 0.0 {
        return Err(Error::UndefinedLimit);
    }
    if omega == 0.0 {
        return Ok(0.0);
    }
    let w2 = omega * omega;
    let g2 = gamma * gamma;
    // α/2 · sqrt(1 + γ²/ω²) = α/2 · sqrt(ω² + γ²)/|ω|
    let phase = 0.5 * alpha * (w2 + g2).sqrt() / omega.abs();
    Ok(w2 / (w2 + g2) * phase.sin().powi(2))
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::EpsilonOutOfRange(epsilon));
    }
    Ok(())
}

/// Largest rate keeping `1 - F ≤ ε` up to a target angle beyond `π`:
/// `|γ| √(ε/(1-ε))`.
pub fn psa_critical_rate(gamma: f64, epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    Ok(gamma.abs() * (epsilon / (1.0 - epsilon)).sqrt())
}

/// Rate below which the finite-temperature bound guarantees trace distance
/// `≤ ε` at angle `α`: `ε² / (√2 β S (1 + √2 α S))`.
pub fn finite_t_sufficient_rate(epsilon: f64, beta: f64, spin: f64, alpha: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::NonPositiveBeta(beta));
    }
    let sqrt2 = std::f64::consts::SQRT_2;
    Ok(epsilon * epsilon / (sqrt2 * beta * spin * (1.0 + sqrt2 * alpha * spin)))
}

/// `S_y` eigenstate with the largest eigenvalue.
pub fn psa_initial_state(spin: f64) -> Result<CVector> {
    let s = spin_matrices(spin)?;
    let eig = s.y.eig()?;
    Ok(eig.eigenvectors.column(eig.dim() - 1).into_owned())
}

/// Simulated pure-state infidelity along a drive.
#[derive(Debug, Clone, PartialEq)]
pub struct PsaTrajectory {
    pub alphas: Vec<f64>,
    pub infidelity: Vec<f64>,
}

impl PsaTrajectory {
    pub fn max_infidelity(&self) -> f64 {
        self.infidelity.iter().copied().fold(0.0, f64::max)
    }
}

/// Propagates the spin-1/2 wire drive from `ψ_0` (top `S_y` eigenstate) and
/// records `1 - |⟨φ_α|ψ_t⟩|²` against the adiabatically continued eigenstate
/// `φ_α = exp(iαV) ψ_0`.
pub fn simulate_psa_infidelity(
    omega: f64,
    gamma: f64,
    alpha_max: f64,
    n_steps: usize,
    integrator: Integrator,
) -> Result<PsaTrajectory> {
    let iso = wire_isospectral_family(gamma, 0.5)?;
    let family = DrivenHamiltonian::UniformIsospectral(iso.clone());
    let schedule = DrivingSchedule::new(omega, alpha_max, n_steps)?;
    let psi0 = psa_initial_state(0.5)?;
    let traj = propagate_state(&family, &schedule, DensityMatrix::pure(&psi0)?, integrator)?;
    let infidelity = traj
        .s_values
        .iter()
        .zip(&traj.states)
        .map(|(&alpha, rho)| {
            let phi = iso.rotation(alpha) * &psi0;
            (1.0 - rho.expectation_of_projector(&phi)).max(0.0)
        })
        .collect();
    Ok(PsaTrajectory {
        alphas: traj.s_values,
        infidelity,
    })
}

/// Bisection for the largest `ω` with `max_infidelity(ω) ≤ ε`, assuming the
/// maximum grows with `ω`. `max_infidelity` is any evaluator, simulated or
/// closed-form.
pub fn search_critical_rate<F>(
    epsilon: f64,
    initial_guess: f64,
    mut max_infidelity: F,
) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    check_epsilon(epsilon)?;
    if !(initial_guess > 0.0 && initial_guess.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "initial guess {initial_guess} must be positive"
        )));
    }
    let mut lo = 0.0;
    let mut hi = initial_guess;
    let mut expansions = 0;
    while max_infidelity(hi)? <= epsilon {
        lo = hi;
        hi *= 2.0;
        expansions += 1;
        if expansions > 60 {
            return Err(Error::InvalidArgument(
                "no rate violates the tolerance".into(),
            ));
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if max_infidelity(mid)? <= epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-10 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Deterministic per-task seed derived from a master seed.
pub fn derive_seed(master: u64, task: u64) -> u64 {
    splitmix64(master ^ splitmix64(task))
}

/// Total momentum of `n` independent electrons with zero-mean Gaussian
/// momenta of standard deviation `p_f`. The sum is itself Gaussian with
/// standard deviation `p_f √n` and is drawn in one shot.
pub fn sample_total_momenta(n: u64, p_f: f64, samples: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    let sigma = p_f.abs() * (n as f64).sqrt();
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| Error::InvalidArgument(format!("momentum scale: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..samples).map(|_| normal.sample(&mut rng)).collect())
}

pub fn sample_total_momentum(n: u64, p_f: f64, seed: u64) -> Result<f64> {
    Ok(sample_total_momenta(n, p_f, 1, seed)?[0])
}

/// How `P_e` is chosen for each `N` in a scaling experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentumModel {
    /// Gibbs-typical momenta, `P_e ~ p_F √N`.
    Sampled,
    /// The same `P_e` for every `N`.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n: u64,
    pub median_omega_eps: f64,
    pub q25: f64,
    pub q75: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingResult {
    pub rows: Vec<ScalingRow>,
    pub fit: LinearFit,
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Ordinary least squares `y = slope x + intercept` with the slope's
/// standard error.
pub fn least_squares(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if x.len() > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - slope * a - intercept).powi(2))
            .sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    LinearFit {
        slope,
        intercept,
        stderr,
    }
}

/// For each `N`, the median (and quartiles) of the critical PSA rate over
/// momentum samples, then a log-log fit of median rate against `N`.
pub fn scaling_experiment(
    base: &WireModelParams,
    n_list: &[u64],
    epsilon: f64,
    samples: usize,
    seed: u64,
    momentum: MomentumModel,
) -> Result<ScalingResult> {
    check_epsilon(epsilon)?;
    base.validate()?;
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be positive".into()));
    }
    let min = n_list.iter().copied().min().unwrap_or(0);
    let max = n_list.iter().copied().max().unwrap_or(0);
    if min == 0 {
        return Err(Error::InvalidArgument(
            "N list must be non-empty with N >= 1".into(),
        ));
    }
    let decades = (max as f64 / min as f64).log10();
    if decades < 2.0 - 1e-12 {
        return Err(Error::InsufficientSpan { decades });
    }

    let rows = n_list
        .par_iter()
        .enumerate()
        .map(|(i, &n)| -> Result<ScalingRow> {
            let momenta = match momentum {
                MomentumModel::Sampled => {
                    sample_total_momenta(n, base.p_f, samples, derive_seed(seed, i as u64))?
                }
                MomentumModel::Fixed(p) => vec![p; samples],
            };
            let mut rates = momenta
                .into_iter()
                .map(|p_e| {
                    let params = WireModelParams {
                        n_electrons: n,
                        p_e,
                        ..*base
                    };
                    psa_critical_rate(gamma_coupling(&params), epsilon)
                })
                .collect::<Result<Vec<_>>>()?;
            rates.sort_by(f64::total_cmp);
            Ok(ScalingRow {
                n,
                median_omega_eps: quantile(&rates, 0.5),
                q25: quantile(&rates, 0.25),
                q75: quantile(&rates, 0.75),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let x: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.median_omega_eps.ln()).collect();
    Ok(ScalingResult {
        fit: least_squares(&x, &y),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn gamma_cases() {
        let zero = WireModelParams {
            p_e: 0.0,
            ..Default::default()
        };
        assert_eq!(gamma_coupling(&zero), 0.0);
        assert_abs_diff_eq!(
            gamma_coupling(&WireModelParams::default()),
            -1.0 / (2.0 * PI),
            epsilon = 1e-15
        );
        let p = WireModelParams {
            n_electrons: 10,
            p_e: 3.0,
            ..Default::default()
        };
        let doubled = WireModelParams {
            n_electrons: 20,
            ..p
        };
        assert_abs_diff_eq!(
            gamma_coupling(&doubled),
            0.5 * gamma_coupling(&p),
            epsilon = 1e-15
        );
    }

    #[test]
    fn effective_hamiltonian_cases() {
        let s = spin_matrices(0.5).unwrap();
        let g = 0.7;
        let h = effective_hamiltonian(g, 0.0, 0.5).unwrap();
        assert!(max_abs(&(h.into_matrix() - s.y.matrix() * c(g))) < 1e-15);
        let h = effective_hamiltonian(g, PI / 2.0, 0.5).unwrap();
        assert!(max_abs(&(h.into_matrix() + s.x.matrix() * c(g))) < 1e-15);
        for spin in [0.5, 1.0, 1.5] {
            let e = effective_hamiltonian(g, 1.234, spin)
                .unwrap()
                .eig()
                .unwrap();
            let d = e.dim();
            for (i, ev) in e.eigenvalues.iter().enumerate() {
                assert_abs_diff_eq!(
                    *ev,
                    g * (i as f64 - (d as f64 - 1.0) / 2.0),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn wire_family_matches_effective_hamiltonian() {
        let params = WireModelParams {
            p_e: 2.0,
            n_electrons: 3,
            ..Default::default()
        };
        let fam = DrivenHamiltonian::wire(params).unwrap();
        let gamma = gamma_coupling(&params);
        for alpha in [0.0, 0.4, 2.5] {
            let a = fam.evaluate(alpha).unwrap();
            let b = effective_hamiltonian(gamma, alpha, 0.5).unwrap();
            assert!(max_abs(&(a.into_matrix() - b.matrix())) < 1e-14);
        }
    }

    #[test]
    fn fidelity_formula_cases() {
        assert!(psa_fidelity_analytic(1e-9, 1.0, 3.0).unwrap() < 1e-17);
        assert_abs_diff_eq!(
            psa_fidelity_analytic(0.8, 0.8, PI / 2f64.sqrt()).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        for alpha in [0.3, 1.0, 5.0] {
            assert_abs_diff_eq!(
                psa_fidelity_analytic(0.4, 0.0, alpha).unwrap(),
                (alpha / 2.0).sin().powi(2),
                epsilon = 1e-15
            );
        }
        assert_eq!(
            psa_fidelity_analytic(0.0, 0.0, 1.0),
            Err(Error::UndefinedLimit)
        );
    }

    #[test]
    fn critical_rate_cases() {
        assert_abs_diff_eq!(psa_critical_rate(2.5, 0.5).unwrap(), 2.5, epsilon = 1e-15);
        assert!(psa_critical_rate(1.0, 1e-12).unwrap() < 1e-5);
        assert!(matches!(
            psa_critical_rate(1.0, 1.0),
            Err(Error::EpsilonOutOfRange(_))
        ));
        assert!(matches!(
            psa_critical_rate(1.0, 0.0),
            Err(Error::EpsilonOutOfRange(_))
        ));
    }

    #[test]
    fn critical_rate_by_bisection_of_closed_form() {
        let alpha_target = 1.5 * PI;
        let grid: Vec<f64> = (0..=4000)
            .map(|i| alpha_target * i as f64 / 4000.0)
            .collect();
        let rate = search_critical_rate(0.1, 0.5, |omega| {
            grid.iter()
                .map(|&a| psa_fidelity_analytic(omega, 1.0, a))
                .try_fold(0.0_f64, |m, x| x.map(|x| m.max(x)))
        })
        .unwrap();
        assert!((rate - 1.0 / 3.0).abs() < 0.01 / 3.0);
    }

    #[test]
    fn sufficient_rate_cases() {
        let rate = finite_t_sufficient_rate(0.1, 1.0, 0.5, PI).unwrap();
        // 0.01 / (√2 · 0.5 · (1 + √2 π / 2))
        assert_abs_diff_eq!(rate, 0.004390, epsilon = 1e-6);
        assert_abs_diff_eq!(
            finite_t_sufficient_rate(0.2, 2.0, 1.5, 0.0).unwrap(),
            0.04 / (2f64.sqrt() * 2.0 * 1.5),
            epsilon = 1e-15
        );
        assert!(matches!(
            finite_t_sufficient_rate(0.1, 0.0, 0.5, 1.0),
            Err(Error::NonPositiveBeta(_))
        ));
        assert!(finite_t_sufficient_rate(1.5, 1.0, 0.5, 1.0).is_err());
    }

    fn std_dev(x: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var.sqrt())
    }

    #[test]
    fn momentum_sampling_statistics() {
        let single = sample_total_momenta(1, 2.0, 100_000, 1).unwrap();
        let (mean, sd) = std_dev(&single);
        assert!((sd / 2.0 - 1.0).abs() < 0.02);
        assert!(mean.abs() < 3.0 * sd / (single.len() as f64).sqrt());

        let many = sample_total_momenta(10_000, 1.0, 10_000, 2).unwrap();
        let (mean, sd) = std_dev(&many);
        assert!((sd / 100.0 - 1.0).abs() < 0.05);
        assert!(mean.abs() < 3.0 * sd / (many.len() as f64).sqrt());

        assert_eq!(
            sample_total_momentum(50, 1.0, 9).unwrap(),
            sample_total_momentum(50, 1.0, 9).unwrap()
        );
    }

    #[test]
    fn scaling_with_fixed_momentum_is_pure_inverse_n() {
        let res = scaling_experiment(
            &WireModelParams::default(),
            &[100, 1000, 10_000],
            0.1,
            10,
            0,
            MomentumModel::Fixed(5.0),
        )
        .unwrap();
        assert_abs_diff_eq!(res.fit.slope, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn scaling_with_sampled_momentum_is_inverse_sqrt_n() {
        let res = scaling_experiment(
            &WireModelParams::default(),
            &[100, 1000, 10_000],
            0.1,
            400,
            42,
            MomentumModel::Sampled,
        )
        .unwrap();
        assert!((res.fit.slope + 0.5).abs() < 0.1, "slope {}", res.fit.slope);
        let other_eps = scaling_experiment(
            &WireModelParams::default(),
            &[100, 1000, 10_000],
            0.4,
            400,
            42,
            MomentumModel::Sampled,
        )
        .unwrap();
        assert!((res.fit.slope - other_eps.fit.slope).abs() < 1e-12);
        assert!(other_eps.rows[0].median_omega_eps > res.rows[0].median_omega_eps);
    }

    #[test]
    fn scaling_requires_two_decades() {
        let err = scaling_experiment(
            &WireModelParams::default(),
            &[100, 1000],
            0.1,
            10,
            0,
            MomentumModel::Sampled,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InsufficientSpan { .. }));
    }

    #[test]
    fn simulation_matches_closed_form_at_resonance() {
        let traj = simulate_psa_infidelity(1.0, 1.0, PI, 4001, Integrator::Magnus4).unwrap();
        for (alpha, inf) in traj.alphas.iter().zip(&traj.infidelity) {
            let exact = psa_fidelity_analytic(1.0, 1.0, *alpha).unwrap();
            assert!(
                (inf - exact).abs() < 1e-8,
                "alpha {alpha}: {inf} vs {exact}"
            );
        }
    }
}
