//! JSON scenario and wire-experiment configuration.
//!
//! Complex matrices are nested row-major arrays of `[re, im]` pairs:
//!
//! ```json
//! {"kind": "uniform_isospectral",
//!  "h0": [[[0.5, 0], [0, 0]], [[0, 0], [-0.5, 0]]],
//!  "generator": [[[0, 0], [0.3, 0]], [[0.3, 0], [0, 0]]]}
//! ```

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use thermadiab::adiabaticity::AuditOptions;
use thermadiab::evolution::Integrator;
use thermadiab::hamiltonian::{DrivenHamiltonian, DrivingSchedule};
use thermadiab::linalg::{random_hermitian, CMatrix, Complex64, HermitianOperator};
use thermadiab::wire_model::{wire_family, MomentumModel, WireModelParams};

use crate::error::{CliError, CliResult};

pub type JsonMatrix = Vec<Vec<[f64; 2]>>;

fn to_operator(rows: &JsonMatrix, what: &str) -> CliResult<HermitianOperator> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::ConfigParse(format!(
            "{what} must be a non-empty square matrix"
        )));
    }
    let m = CMatrix::from_fn(n, n, |i, j| Complex64::new(rows[i][j][0], rows[i][j][1]));
    Ok(HermitianOperator::new(m)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    UniformIsospectral {
        h0: JsonMatrix,
        generator: JsonMatrix,
    },
    DilatedIsospectral {
        h0: JsonMatrix,
        generator: JsonMatrix,
        rate: f64,
    },
    LinearInterpolation {
        start: JsonMatrix,
        end: JsonMatrix,
    },
    Constant {
        h0: JsonMatrix,
    },
    /// GUE draws for `H_0` and `V` from the scenario seed.
    RandomIsospectral {
        dim: usize,
        #[serde(default = "one")]
        generator_scale: f64,
    },
    /// The wire drive from physical constants.
    Wire {
        #[serde(default)]
        params: WireModelParams,
    },
    /// The wire drive with an explicit coupling.
    WireCoupling {
        gamma: f64,
        #[serde(default = "half")]
        spin: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

impl FamilySpec {
    pub fn build(&self, s_max: f64, seed: u64) -> CliResult<DrivenHamiltonian> {
        Ok(match self {
            FamilySpec::UniformIsospectral { h0, generator } => {
                DrivenHamiltonian::uniform_isospectral(
                    to_operator(h0, "h0")?,
                    to_operator(generator, "generator")?,
                )?
            }
            FamilySpec::DilatedIsospectral {
                h0,
                generator,
                rate,
            } => DrivenHamiltonian::dilated_isospectral(
                to_operator(h0, "h0")?,
                to_operator(generator, "generator")?,
                *rate,
            )?,
            FamilySpec::LinearInterpolation { start, end } => {
                DrivenHamiltonian::linear_interpolation(
                    to_operator(start, "start")?,
                    to_operator(end, "end")?,
                    s_max,
                )?
            }
            FamilySpec::Constant { h0 } => DrivenHamiltonian::constant(to_operator(h0, "h0")?),
            FamilySpec::RandomIsospectral {
                dim,
                generator_scale,
            } => {
                if *dim == 0 {
                    return Err(CliError::ConfigParse("dim must be positive".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let h0 = random_hermitian(&mut rng, *dim);
                let v = &random_hermitian(&mut rng, *dim) * *generator_scale;
                DrivenHamiltonian::uniform_isospectral(h0, v)?
            }
            FamilySpec::Wire { params } => DrivenHamiltonian::wire(*params)?,
            FamilySpec::WireCoupling { gamma, spin } => wire_family(*gamma, *spin)?,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorChoice {
    #[default]
    Midpoint,
    Magnus4,
}

impl From<IntegratorChoice> for Integrator {
    fn from(c: IntegratorChoice) -> Self {
        match c {
            IntegratorChoice::Midpoint => Integrator::Midpoint,
            IntegratorChoice::Magnus4 => Integrator::Magnus4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub family: FamilySpec,
    pub omega: f64,
    pub beta: f64,
    pub s_max: f64,
    pub n_steps: usize,
    #[serde(default)]
    pub degeneracy_threshold: Option<f64>,
    #[serde(default)]
    pub fd_step: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub integrator: IntegratorChoice,
    /// Adds density-matrix entries to the trajectory CSV.
    #[serde(default)]
    pub write_entries: bool,
}

impl ScenarioConfig {
    pub fn validate(&self) -> CliResult<()> {
        let optional = [self.degeneracy_threshold, self.fd_step];
        if ![self.omega, self.beta, self.s_max]
            .iter()
            .all(|x| x.is_finite())
            || optional.iter().flatten().any(|x| !x.is_finite())
        {
            return Err(CliError::ConfigParse(
                "numeric fields must be finite".into(),
            ));
        }
        if self.omega <= 0.0 {
            return Err(CliError::ConfigParse(format!(
                "omega = {} must be positive",
                self.omega
            )));
        }
        if self.n_steps < 2 {
            return Err(CliError::ConfigParse("n_steps must be at least 2".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> CliResult<DrivingSchedule> {
        Ok(DrivingSchedule::new(self.omega, self.s_max, self.n_steps)?)
    }

    pub fn family(&self) -> CliResult<DrivenHamiltonian> {
        self.family.build(self.s_max, self.seed)
    }

    pub fn audit_options(&self) -> AuditOptions {
        AuditOptions {
            degeneracy_threshold: self.degeneracy_threshold,
            fd_step: self.fd_step,
            integrator: self.integrator.into(),
        }
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::ConfigParse(format!("{}: {e}", path.display())))
}

pub fn load_scenario(path: &Path) -> CliResult<ScenarioConfig> {
    let config: ScenarioConfig = read_json(path)?;
    config.validate()?;
    Ok(config)
}

/// Settings for the wire experiments. Every field has a default, so `{}`
/// is a valid file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WireConfig {
    pub params: WireModelParams,
    /// Overrides the coupling computed from `params`.
    pub gamma: Option<f64>,
    pub omega: f64,
    pub alpha_max: f64,
    pub n_steps: usize,
    pub epsilons: Vec<f64>,
    pub beta: f64,
    pub n_list: Vec<u64>,
    pub samples: usize,
    pub momentum: MomentumModel,
}

impl Default for WireConfig {
    fn default() -> Self {
        Self {
            params: WireModelParams::default(),
            gamma: None,
            omega: 0.5,
            alpha_max: std::f64::consts::PI,
            n_steps: 2001,
            epsilons: vec![0.05, 0.1, 0.5],
            beta: 1.0,
            n_list: vec![100, 1000, 10_000],
            samples: 400,
            momentum: MomentumModel::Sampled,
        }
    }
}
