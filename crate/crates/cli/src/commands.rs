use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use thermadiab::adiabaticity::{run_audit, AuditOutcome};
use thermadiab::evolution::Integrator;
use thermadiab::hamiltonian::{adjacent_pair_functionals, all_pairs_oracle};
use thermadiab::wire_model::{
    finite_t_sufficient_rate, gamma_coupling, psa_critical_rate, psa_fidelity_analytic,
    scaling_experiment, simulate_psa_infidelity,
};

use crate::config::{ScenarioConfig, WireConfig};
use crate::error::{CliError, CliResult};

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    Ok(BufWriter::new(
        File::create(path).map_err(CliError::io(path))?,
    ))
}

fn write_with<F>(path: &Path, body: F) -> CliResult<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let mut out = create(path)?;
    body(&mut out)
        .and_then(|_| out.flush())
        .map_err(CliError::io(path))
}

fn run_scenario(config: &ScenarioConfig) -> CliResult<AuditOutcome> {
    let family = config.family()?;
    let schedule = config.schedule()?;
    Ok(run_audit(
        &family,
        &schedule,
        config.beta,
        config.audit_options(),
    )?)
}

fn write_outcome(dir: &Path, outcome: &AuditOutcome, entries: bool) -> CliResult<()> {
    write_with(&dir.join("trajectory.csv"), |w| {
        outcome.trajectory.write_csv(w, entries)
    })?;
    write_with(&dir.join("bound_report.csv"), |w| {
        outcome.report.write_csv(w)
    })
}

/// Runs one scenario and writes `trajectory.csv` and `bound_report.csv`.
pub fn simulate(config: &ScenarioConfig, out: &Path) -> CliResult<AuditOutcome> {
    let outcome = run_scenario(config)?;
    write_outcome(out, &outcome, config.write_entries)?;
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepAxis {
    Omega,
    Beta,
    #[value(name = "n_steps")]
    NSteps,
}

impl SweepAxis {
    fn apply(self, base: &ScenarioConfig, value: f64) -> CliResult<ScenarioConfig> {
        let mut cfg = base.clone();
        match self {
            SweepAxis::Omega => cfg.omega = value,
            SweepAxis::Beta => cfg.beta = value,
            SweepAxis::NSteps => {
                if value.fract() != 0.0 || value < 0.0 {
                    return Err(CliError::Usage(format!(
                        "n_steps value {value} is not an integer"
                    )));
                }
                cfg.n_steps = value as usize;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub result: Result<(f64, f64), (String, String)>,
}

/// Runs the base scenario once per value, concurrently. Each run writes to
/// `out/run_NNN/`; the summary is written after all runs finish, in input
/// order. Failed runs are recorded, not fatal.
pub fn sweep(
    base: &ScenarioConfig,
    axis: SweepAxis,
    values: &[f64],
    out: &Path,
) -> CliResult<Vec<SweepRow>> {
    let rows: Vec<SweepRow> = values
        .par_iter()
        .enumerate()
        .map(|(i, &value)| {
            let dir = out.join(format!("run_{i:03}"));
            let result = axis
                .apply(base, value)
                .and_then(|cfg| simulate(&cfg, &dir))
                .map(|o| {
                    let lhs = o.report.lhs_measured.last().copied().unwrap_or(f64::NAN);
                    let rhs = o.report.rhs_total.last().copied().unwrap_or(f64::NAN);
                    (lhs, rhs)
                })
                .map_err(|e| (e.tag().to_string(), e.to_string()));
            SweepRow { value, result }
        })
        .collect();

    write_with(&out.join("summary.csv"), |w| {
        writeln!(w, "index,value,status,final_lhs,final_rhs,message")?;
        for (i, row) in rows.iter().enumerate() {
            match &row.result {
                Ok((lhs, rhs)) => writeln!(w, "{i},{:.16e},ok,{lhs:.16e},{rhs:.16e},", row.value)?,
                Err((tag, msg)) => {
                    let msg = msg.replace([',', '\n'], ";");
                    writeln!(w, "{i},{:.16e},{tag},,,{msg}", row.value)?
                }
            }
        }
        Ok(())
    })?;
    Ok(rows)
}

pub fn parse_values(text: &str) -> CliResult<Vec<f64>> {
    let values = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| CliError::Usage(format!("cannot parse sweep value {s:?}")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    if values.is_empty() {
        return Err(CliError::Usage("no sweep values given".into()));
    }
    Ok(values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum WireExperiment {
    Fidelity,
    Rates,
    Scaling,
}

fn wire_gamma(config: &WireConfig) -> CliResult<f64> {
    match config.gamma {
        Some(g) => Ok(g),
        None => {
            config.params.validate()?;
            Ok(gamma_coupling(&config.params))
        }
    }
}

pub fn wire(
    config: &WireConfig,
    experiment: WireExperiment,
    seed: u64,
    out: &Path,
) -> CliResult<()> {
    match experiment {
        WireExperiment::Fidelity => {
            let gamma = wire_gamma(config)?;
            let traj = simulate_psa_infidelity(
                config.omega,
                gamma,
                config.alpha_max,
                config.n_steps,
                Integrator::Magnus4,
            )?;
            let analytic = traj
                .alphas
                .iter()
                .map(|&a| psa_fidelity_analytic(config.omega, gamma, a))
                .collect::<Result<Vec<_>, _>>()?;
            write_with(&out.join("fidelity.csv"), |w| {
                writeln!(w, "alpha,analytic,simulated")?;
                for ((a, x), y) in traj.alphas.iter().zip(&analytic).zip(&traj.infidelity) {
                    writeln!(w, "{a:.16e},{x:.16e},{y:.16e}")?;
                }
                Ok(())
            })
        }
        WireExperiment::Rates => {
            let gamma = wire_gamma(config)?;
            let spin = config.params.spin;
            let rows = config
                .epsilons
                .iter()
                .map(|&eps| {
                    Ok((
                        eps,
                        psa_critical_rate(gamma, eps)?,
                        finite_t_sufficient_rate(eps, config.beta, spin, config.alpha_max)?,
                    ))
                })
                .collect::<Result<Vec<_>, thermadiab::Error>>()?;
            write_with(&out.join("rates.csv"), |w| {
                writeln!(
                    w,
                    "epsilon,gamma,beta,spin,alpha,psa_critical_rate,finite_t_sufficient_rate"
                )?;
                for (eps, psa, finite) in &rows {
                    writeln!(
                        w,
                        "{eps:.16e},{gamma:.16e},{:.16e},{spin:.16e},{:.16e},{psa:.16e},{finite:.16e}",
                        config.beta, config.alpha_max
                    )?;
                }
                Ok(())
            })
        }
        WireExperiment::Scaling => {
            let eps = config.epsilons.first().copied().unwrap_or(0.1);
            let res = scaling_experiment(
                &config.params,
                &config.n_list,
                eps,
                config.samples,
                seed,
                config.momentum,
            )?;
            write_with(&out.join("scaling.csv"), |w| {
                writeln!(w, "N,median_omega_eps,q25,q75")?;
                for r in &res.rows {
                    writeln!(
                        w,
                        "{},{:.16e},{:.16e},{:.16e}",
                        r.n, r.median_omega_eps, r.q25, r.q75
                    )?;
                }
                Ok(())
            })?;
            let path = out.join("scaling_fit.json");
            let json = serde_json::to_string_pretty(&res.fit)
                .map_err(|e| CliError::ConfigParse(e.to_string()))?;
            write_with(&path, |w| writeln!(w, "{json}"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaSummary {
    pub trials: usize,
    pub worst: f64,
}

/// `dims` is `N` or `MIN-MAX`.
pub fn parse_dims(text: &str) -> CliResult<(usize, usize)> {
    let parse = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| CliError::Usage(format!("cannot parse dims {text:?}")))
    };
    let (lo, hi) = match text.split_once('-') {
        Some((a, b)) => (parse(a)?, parse(b)?),
        None => {
            let n = parse(text)?;
            (n, n)
        }
    };
    if lo < 1 || hi < lo {
        return Err(CliError::Usage(format!("invalid dims range {text:?}")));
    }
    Ok((lo, hi))
}

/// Compares adjacent-gap and all-pairs functionals on random ordered
/// spectra. Every tenth trial packs the levels nearly degenerate.
pub fn lemma_check(trials: usize, dims: (usize, usize), seed: u64) -> CliResult<LemmaSummary> {
    if trials == 0 {
        return Err(CliError::Usage("trials must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    let mut mismatches = 0;
    for trial in 0..trials {
        let d = rng.random_range(dims.0..=dims.1);
        let mut draw = |spread: f64| {
            let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(-spread..spread)).collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let e0 = draw(3.0);
        let mut es = draw(3.0);
        let des = draw(2.0);
        if trial % 10 == 9 {
            for k in 1..d {
                es[k] = es[k - 1] + 1e-7 * (1.0 + k as f64);
            }
        }
        if es.windows(2).any(|w| w[1] <= w[0]) {
            for k in 1..d {
                es[k] = es[k].max(es[k - 1] + 1e-9);
            }
        }
        let fast = adjacent_pair_functionals(&e0, &es, &des)?;
        let slow = all_pairs_oracle(&e0, &es, &des)?;
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
        let dev = rel(fast.0, slow.0).max(rel(fast.1, slow.1));
        worst = worst.max(dev);
        if dev > 1e-12 {
            mismatches += 1;
        }
    }
    if mismatches > 0 {
        return Err(CliError::LemmaMismatch {
            mismatches,
            trials,
            worst,
        });
    }
    Ok(LemmaSummary { trials, worst })
}

pub fn default_out(config_output: Option<&PathBuf>, flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| config_output.cloned())
        .unwrap_or_else(|| PathBuf::from("."))
}
