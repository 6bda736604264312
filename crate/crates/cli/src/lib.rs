//! Subcommands of the `bittide` binary.
//!
//! Every command loads a scenario (with `key=value` overrides layered on
//! top), writes its data files into the output directory and returns the
//! text summary, which `main` prints to stdout.

use std::fs;
use std::path::Path;

use bittide_core::afm::EventKind;
use bittide_core::analysis::{
    build_lyapunov_certificate, hurwitz_check, predicted_performance, simulate_norms,
    worst_case_frequency, LYAPUNOV_REL_TOL,
};
use bittide_core::compare::{compare_traces, Thresholds};
use bittide_core::ode::{build_reduced_system, steady_state};
use bittide_core::report::Report;
use bittide_core::scenario::{load_scenario_with_overrides, Scenario};
use bittide_core::trace::{write_afm_trace, write_events, write_ode_trace};
use bittide_core::Error;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("buffer {kind} on link {link} at t = {time} (occupancy {value})")]
    BufferViolation {
        kind: &'static str,
        link: String,
        time: f64,
        value: f64,
    },
    #[error("{0}")]
    Usage(String),
    #[error("{failed} of {total} sweep runs failed")]
    SweepFailures { failed: usize, total: usize },
}

impl CliError {
    /// 1 for invalid input, 2 for runtime failures, 3 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_validation() => 1,
            CliError::Core(e) if e.is_io() => 3,
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Model {
    Afm,
    Ode,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AnalyzeFlags {
    pub resistance: bool,
    pub worst_case: bool,
    pub performance: bool,
    pub simulate: bool,
    pub lyapunov: bool,
    /// Norm bound for the worst-case frequency vector; defaults to `‖ω_u − ω_avg·1‖`.
    pub gamma: Option<f64>,
}

pub fn load(scenario: &Path, overrides: &[String]) -> CliResult<Scenario> {
    Ok(load_scenario_with_overrides(scenario, overrides)?)
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e).into())
}

fn finish(report: &Report, out: &Path) -> CliResult<String> {
    report.write(out)?;
    Ok(report.to_text())
}

fn scenario_name(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned())
}

pub fn cmd_simulate(
    scenario: &Path,
    overrides: &[String],
    model: Model,
    out: &Path,
) -> CliResult<String> {
    let s = load(scenario, overrides)?;
    create_dir(out)?;
    let name = scenario_name(scenario);
    let mut report = Report::new(format!("simulate {name}"));
    match model {
        Model::Ode => {
            let trace = s.run_ode()?;
            write_ode_trace(&trace, &out.join("trace.csv"))?;
            let last = trace.len() - 1;
            let omega: Vec<f64> = trace.omega[last].iter().copied().collect();
            let delta: Vec<f64> = trace.delta[last].iter().copied().collect();
            let data = serde_json::json!({
                "model": "ode",
                "samples": trace.len(),
                "dt": s.ode_step(),
                "t_end": trace.times[last],
                "omega_avg": s.afm.omega_avg(),
                "final_omega": omega,
                "final_delta": delta,
            });
            let lines = vec![
                format!(
                    "ODE run: {} samples, dt = {}, t_end = {}",
                    trace.len(),
                    s.ode_step(),
                    trace.times[last]
                ),
                format!("omega_avg = {}", s.afm.omega_avg()),
                format!("final omega {omega:?}"),
                format!("final delta {delta:?}"),
            ];
            report.add("run", &data, lines)?;
            finish(&report, out)
        }
        Model::Afm => {
            let trace = s.run_afm()?;
            write_afm_trace(&trace, &out.join("trace.csv"))?;
            write_events(&trace.events, &out.join("events.csv"))?;
            let last = trace.times.len() - 1;
            let violations = trace.overflow_events().count();
            let data = serde_json::json!({
                "model": "afm",
                "samples": trace.times.len(),
                "events": trace.events.len(),
                "buffer_violations": violations,
                "t_end": trace.times[last],
                "omega_avg": s.afm.omega_avg(),
                "final_omega": trace.omega[last],
                "final_beta": trace.beta[last],
            });
            let lines = vec![
                format!(
                    "AFM run: {} events, {} samples, t_end = {}",
                    trace.events.len(),
                    trace.times.len(),
                    trace.times[last]
                ),
                format!("omega_avg = {}", s.afm.omega_avg()),
                format!("final omega {:?}", trace.omega[last]),
                format!("final beta {:?}", trace.beta[last]),
                format!("buffer violations: {violations}"),
            ];
            report.add("run", &data, lines)?;
            report.write(out)?;
            if let Some(e) = trace.overflow_events().next() {
                let link = e
                    .link
                    .map_or_else(|| "?".into(), |l| trace.links[l].label());
                return Err(CliError::BufferViolation {
                    kind: if e.kind == EventKind::Overflow {
                        "overflow"
                    } else {
                        "underflow"
                    },
                    link,
                    time: e.time,
                    value: e.value,
                });
            }
            Ok(report.to_text())
        }
    }
}

pub fn cmd_compare(scenario: &Path, overrides: &[String], out: &Path) -> CliResult<String> {
    let s = load(scenario, overrides)?;
    create_dir(out)?;
    let afm = s.run_afm()?;
    let ode = s.run_ode()?;
    write_afm_trace(&afm, &out.join("afm_trace.csv"))?;
    write_events(&afm.events, &out.join("afm_events.csv"))?;
    write_ode_trace(&ode, &out.join("ode_trace.csv"))?;
    let r = compare_traces(&afm, &ode, Thresholds::default())?;
    let mut report = Report::new(format!("compare {}", scenario_name(scenario)));
    report.add_comparison("afm vs ode", &r)?;
    finish(&report, out)
}

pub fn cmd_analyze(
    scenario: &Path,
    overrides: &[String],
    flags: AnalyzeFlags,
    out: &Path,
) -> CliResult<String> {
    if !(flags.resistance || flags.worst_case || flags.performance || flags.lyapunov) {
        return Err(CliError::Usage(
            "choose at least one of --resistance, --worst-case, --performance, --lyapunov".into(),
        ));
    }
    let s = load(scenario, overrides)?;
    create_dir(out)?;
    let sd = &s.spectral;
    let name = scenario_name(scenario);
    let mut report = Report::new(format!("analyze {name}"));

    if flags.resistance {
        report.add_resistance(&name, sd)?;
    }
    if flags.worst_case {
        let gamma = match flags.gamma {
            Some(g) => g,
            None => {
                let avg = s.omega_u.mean();
                s.omega_u.map(|w| w - avg).norm()
            }
        };
        report.add_worst_case(&name, gamma, &worst_case_frequency(sd, gamma)?)?;
    }
    if flags.performance {
        let predicted = predicted_performance(sd, &s.gains, &s.omega_u)?;
        let empirical = if flags.simulate {
            Some(simulate_norms(sd, &s.gains, &s.omega_u)?.norms)
        } else {
            None
        };
        report.add_performance(&name, &predicted, empirical.as_ref())?;
    }
    if flags.lyapunov {
        let reduced = build_reduced_system(sd, &s.gains);
        let h = hurwitz_check(&reduced.a_hat)?;
        let cert = build_lyapunov_certificate(&reduced, sd, &s.gains)?;
        report.add_lyapunov(&name, &h, &cert, LYAPUNOV_REL_TOL)?;
        let ss = steady_state(&reduced, &s.omega_u)?;
        let data = serde_json::json!({ "relative_gap": ss.relative_gap() });
        report.add(
            "steady state",
            &data,
            vec![format!(
                "closed form vs linear solve: relative gap {:.2e}",
                ss.relative_gap()
            )],
        )?;
    }
    finish(&report, out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub spectral_abscissa: Option<f64>,
    pub freq_dev_norm_sq: Option<f64>,
    pub occupancy_norm_sq: Option<f64>,
    pub error: Option<String>,
}

fn sweep_one(scenario: &Path, overrides: &[String], param: &str, value: f64) -> SweepRow {
    let mut all = overrides.to_vec();
    all.push(format!("{param}={value:e}"));
    let run = || -> CliResult<(f64, f64, f64)> {
        let s = load(scenario, &all)?;
        let h = hurwitz_check(&build_reduced_system(&s.spectral, &s.gains).a_hat)?;
        let p = predicted_performance(&s.spectral, &s.gains, &s.omega_u)?;
        Ok((h.spectral_abscissa, p.freq_dev_norm_sq, p.occupancy_norm_sq))
    };
    match run() {
        Ok((sigma, f, o)) => SweepRow {
            value,
            spectral_abscissa: Some(sigma),
            freq_dev_norm_sq: Some(f),
            occupancy_norm_sq: Some(o),
            error: None,
        },
        Err(e) => SweepRow {
            value,
            spectral_abscissa: None,
            freq_dev_norm_sq: None,
            occupancy_norm_sq: None,
            error: Some(e.to_string()),
        },
    }
}

pub fn parse_values(list: &str) -> CliResult<Vec<f64>> {
    list.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("--values: `{}` is not a number", v.trim())))
        })
        .collect()
}

/// Predicted performance for each value of one numeric scenario field.
/// Rows come back sorted by value whatever the number of jobs.
pub fn run_sweep(
    scenario: &Path,
    overrides: &[String],
    param: &str,
    values: &[f64],
    jobs: usize,
) -> CliResult<Vec<SweepRow>> {
    let mut values = values.to_vec();
    values.sort_by(f64::total_cmp);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(pool.install(|| {
        values
            .par_iter()
            .map(|&v| sweep_one(scenario, overrides, param, v))
            .collect()
    }))
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, bittide_core::trace::format_float)
}

pub fn cmd_sweep(
    scenario: &Path,
    overrides: &[String],
    param: &str,
    values: &[f64],
    jobs: usize,
    out: &Path,
) -> CliResult<String> {
    if values.is_empty() {
        return Err(CliError::Usage("--values is empty".into()));
    }
    // fail early on a bad base scenario rather than once per value
    load(scenario, overrides)?;
    create_dir(out)?;
    let rows = run_sweep(scenario, overrides, param, values, jobs)?;

    let table = out.join("sweep.csv");
    let mut text =
        String::from("value,spectral_abscissa,freq_dev_norm_sq,occupancy_norm_sq,error\n");
    for r in &rows {
        let err = r.error.as_deref().unwrap_or("").replace('"', "'");
        text.push_str(&format!(
            "{},{},{},{},\"{}\"\n",
            bittide_core::trace::format_float(r.value),
            opt(r.spectral_abscissa),
            opt(r.freq_dev_norm_sq),
            opt(r.occupancy_norm_sq),
            err
        ));
    }
    fs::write(&table, text).map_err(|e| Error::io(&table, e))?;

    let mut lines = vec![format!("{param}: {} values", rows.len())];
    for r in &rows {
        lines.push(match &r.error {
            None => format!(
                "  {:<12e} sigma {:<12.4e} |w-wss|^2 {:<12.6e} |delta|^2 {:.6e}",
                r.value,
                r.spectral_abscissa.unwrap_or(f64::NAN),
                r.freq_dev_norm_sq.unwrap_or(f64::NAN),
                r.occupancy_norm_sq.unwrap_or(f64::NAN)
            ),
            Some(e) => format!("  {:<12e} failed: {e}", r.value),
        });
    }
    let mut report = Report::new(format!("sweep {} over {param}", scenario_name(scenario)));
    report.add("sweep", &rows, lines)?;
    let summary = finish(&report, out)?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprint!("{summary}");
        return Err(CliError::SweepFailures {
            failed,
            total: rows.len(),
        });
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_parse_in_order() {
        assert_eq!(parse_values("1e-8, 2e-8,4").unwrap(), [1e-8, 2e-8, 4.0]);
        assert!(matches!(parse_values("1,,2"), Err(CliError::Usage(_))));
    }

    #[test]
    fn exit_code_classes() {
        let validation = CliError::Core(Error::MissingField("controller.k_p".into()));
        assert_eq!(validation.exit_code(), 1);
        let io = CliError::Core(Error::io(
            "/x",
            std::io::Error::from(std::io::ErrorKind::NotFound),
        ));
        assert_eq!(io.exit_code(), 3);
        let runtime = CliError::Core(Error::Inadmissible {
            node: 0,
            time: 1.0,
            frequency: 2.0,
            omega_min: 0.5,
            omega_max: 1.5,
        });
        assert_eq!(runtime.exit_code(), 2);
        assert_eq!(
            CliError::SweepFailures {
                failed: 1,
                total: 2
            }
            .exit_code(),
            2
        );
    }
}
