//! Scenario files.
//!
//! A scenario is a TOML document with sections `graph`, `frequencies`,
//! `controller`, `afm` and `run`:
//!
//! ```toml
//! [graph]
//! kind = "complete"        # complete | path | mesh | edges | random
//! n = 3
//!
//! [frequencies]
//! omega_u = [1.001, 0.9996, 0.9994]
//! # or: perturbation = { i = 0, j = 23, alpha = 1e-4, base = 1.0 }
//!
//! [controller]
//! k_p = 3e-5
//! k_i = 2e-9
//! omega_c = 1.0
//!
//! [afm]
//! p = 1000
//! d = 100
//! latency = 500            # scalar, or one value per directed link
//! theta0 = 0.1             # scalar, or one value per node
//! beta_max = 128           # beta0 defaults to beta_max / 2
//!
//! [run]
//! t_end = 300000
//! output_dt = 500
//! ```
//!
//! Every `afm` and `run` field has a default; see [`AfmSpec`] and [`RunSpec`].

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::afm::{simulate_afm, AfmScenario, AfmTrace};
use crate::analysis::{hurwitz_check, HORIZON_FACTOR};
use crate::error::{Error, Result};
use crate::graph::{OrientedGraph, SpectralData};
use crate::numerics::DenseVector;
use crate::ode::{
    build_full_system, build_reduced_system, default_step, simulate_ode, Gains, OdeTrace,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn expand(&self, len: usize, field: &str) -> Result<Vec<T>> {
        match self {
            OneOrMany::One(v) => Ok(vec![v.clone(); len]),
            OneOrMany::Many(vs) if vs.len() == len => Ok(vs.clone()),
            OneOrMany::Many(vs) => Err(Error::validation(
                field,
                format!("expected a scalar or {len} values, got {}", vs.len()),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GraphSpec {
    Complete {
        n: usize,
    },
    Path {
        n: usize,
    },
    Mesh {
        rows: usize,
        cols: usize,
    },
    Edges {
        n: usize,
        edges: Vec<[usize; 2]>,
    },
    /// Random spanning tree plus extra edges, seeded by `run.seed`.
    Random {
        n: usize,
        extra_edge_prob: f64,
    },
}

impl GraphSpec {
    pub fn build(&self, seed: u64) -> Result<OrientedGraph> {
        match self {
            GraphSpec::Complete { n } => OrientedGraph::complete(*n),
            GraphSpec::Path { n } => OrientedGraph::path(*n),
            GraphSpec::Mesh { rows, cols } => OrientedGraph::mesh(*rows, *cols),
            GraphSpec::Edges { n, edges } => {
                OrientedGraph::new(*n, edges.iter().map(|e| (e[0], e[1])).collect())
            }
            GraphSpec::Random { n, extra_edge_prob } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                OrientedGraph::random_connected(*n, *extra_edge_prob, &mut rng)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub i: usize,
    pub j: usize,
    pub alpha: f64,
    #[serde(default = "one")]
    pub base: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencySpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_u: Option<OneOrMany<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<Perturbation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    pub k_p: f64,
    pub k_i: f64,
    #[serde(default = "one")]
    pub omega_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AfmSpec {
    pub p: f64,
    pub d: f64,
    pub latency: OneOrMany<f64>,
    pub beta_max: i64,
    /// Defaults to `beta_max / 2` on every link.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta0: Option<OneOrMany<i64>>,
    pub theta0: OneOrMany<f64>,
    /// Defaults to `omega_u`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_m1: Option<OneOrMany<f64>>,
    /// Defaults to `omega_u`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_m2: Option<OneOrMany<f64>>,
    /// Defaults to one second before the latest admissible epoch.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epoch: Option<f64>,
    pub omega_min: f64,
    pub omega_max: f64,
}

impl Default for AfmSpec {
    fn default() -> Self {
        Self {
            p: 1000.0,
            d: 100.0,
            latency: OneOrMany::One(0.0),
            beta_max: 128,
            beta0: None,
            theta0: OneOrMany::One(0.1),
            omega_m1: None,
            omega_m2: None,
            epoch: None,
            omega_min: 0.5,
            omega_max: 1.5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSpec {
    /// Defaults to 30 closed-loop time constants.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    /// Defaults to `t_end / 1000`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dt: Option<f64>,
    /// ODE step; defaults to a twentieth of the fastest closed-loop time constant.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ode_dt: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub graph: GraphSpec,
    pub frequencies: FrequencySpec,
    pub controller: ControllerSpec,
    #[serde(default)]
    pub afm: AfmSpec,
    #[serde(default)]
    pub run: RunSpec,
}

/// A loaded and validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub spectral: SpectralData,
    pub omega_u: DenseVector,
    pub gains: Gains,
    pub afm: AfmScenario,
    pub ode_dt: Option<f64>,
}

impl Scenario {
    pub fn graph(&self) -> &OrientedGraph {
        &self.afm.graph
    }

    pub fn ode_step(&self) -> f64 {
        self.ode_dt
            .unwrap_or_else(|| default_step(&self.spectral, &self.gains))
    }

    /// Runs the linearized model from rest over `[0, t_end]`. Latencies are ignored.
    pub fn run_ode(&self) -> Result<OdeTrace> {
        if self.afm.max_latency() > 0.0 {
            log::info!(
                "ODE model ignores link latency (max {} s)",
                self.afm.max_latency()
            );
        }
        let sys = build_full_system(&self.spectral, &self.gains);
        simulate_ode(&sys, &self.omega_u, self.afm.t_end, self.ode_step())
    }

    pub fn run_afm(&self) -> Result<AfmTrace> {
        simulate_afm(&self.afm)
    }
}

fn parse_error(path: &str, e: impl std::fmt::Display) -> Error {
    let message = e.to_string();
    if let Some(field) = message
        .split("missing field `")
        .nth(1)
        .and_then(|rest| rest.split('`').next())
    {
        return Error::MissingField(field.to_string());
    }
    Error::Parse {
        path: path.to_string(),
        message: message.trim().to_string(),
    }
}

pub fn read_tree(path: &Path) -> Result<toml::Table> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.parse::<toml::Table>()
        .map_err(|e| parse_error(&path.display().to_string(), e))
}

/// Parses the value of an override: any TOML value, or a bare string.
fn parse_override_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies `section.key=value` onto a scenario tree, creating tables as needed.
pub fn apply_override(tree: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::validation(spec, "override must have the form key=value"))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::validation(key, "empty path segment in override"));
    }
    let value = parse_override_value(raw.trim());
    let mut table = tree;
    for seg in &path[..path.len() - 1] {
        let entry = table
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::validation(key, format!("`{seg}` is not a table")))?;
    }
    let last = path[path.len() - 1];
    // A new omega_u list replaces a perturbation spec and vice versa.
    if path.len() == 2 && path[0] == "frequencies" {
        match last {
            "omega_u" => {
                table.remove("perturbation");
            }
            "perturbation" => {
                table.remove("omega_u");
            }
            _ => {}
        }
    }
    table.insert(last.to_string(), value);
    Ok(())
}

pub fn scenario_from_tree(tree: toml::Table, origin: &str) -> Result<ScenarioFile> {
    toml::Value::Table(tree)
        .try_into::<ScenarioFile>()
        .map_err(|e| parse_error(origin, e))
}

pub fn parse_scenario(text: &str) -> Result<ScenarioFile> {
    toml::from_str(text).map_err(|e| parse_error("<string>", e))
}

pub fn save_scenario(file: &ScenarioFile, path: &Path) -> Result<()> {
    let text = toml::to_string_pretty(file).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    load_scenario_with_overrides(path, &[] as &[&str])
}

pub fn load_scenario_with_overrides<S: AsRef<str>>(
    path: &Path,
    overrides: &[S],
) -> Result<Scenario> {
    let mut tree = read_tree(path)?;
    for o in overrides {
        apply_override(&mut tree, o.as_ref())?;
    }
    let file = scenario_from_tree(tree, &path.display().to_string())?;
    resolve(file)
}

/// Applies defaults and validates every field.
pub fn resolve(file: ScenarioFile) -> Result<Scenario> {
    let graph = file
        .graph
        .build(file.run.seed)
        .map_err(|e| Error::validation("graph", e.to_string()))?;
    let spectral = graph.spectral_data().map_err(|e| match e {
        Error::NotConnected { .. } => Error::validation("graph", e.to_string()),
        other => other,
    })?;
    let n = graph.n();
    let links = 2 * graph.m();

    let omega_u = match (&file.frequencies.omega_u, &file.frequencies.perturbation) {
        (Some(_), Some(_)) => {
            return Err(Error::validation(
                "frequencies",
                "give either omega_u or perturbation, not both",
            ))
        }
        (None, None) => return Err(Error::MissingField("frequencies.omega_u".into())),
        (Some(w), None) => w.expand(n, "frequencies.omega_u")?,
        (None, Some(p)) => {
            for (name, idx) in [("i", p.i), ("j", p.j)] {
                if idx >= n {
                    return Err(Error::validation(
                        format!("frequencies.perturbation.{name}"),
                        format!("node {idx} out of range for {n} nodes"),
                    ));
                }
            }
            if p.i == p.j {
                return Err(Error::validation(
                    "frequencies.perturbation",
                    "i and j must differ",
                ));
            }
            crate::analysis::perturbed_frequencies(n, p.i, p.j, p.alpha, p.base)
                .iter()
                .copied()
                .collect()
        }
    };

    let c = &file.controller;
    let gains = Gains::new(c.k_p, c.k_i, c.omega_c)?;

    let a = &file.afm;
    let latency = a.latency.expand(links, "afm.latency")?;
    let beta0 = match &a.beta0 {
        Some(b) => b.expand(links, "afm.beta0")?,
        None => vec![a.beta_max / 2; links],
    };
    let theta0 = a.theta0.expand(n, "afm.theta0")?;
    let omega_m1 = match &a.omega_m1 {
        Some(w) => w.expand(n, "afm.omega_m1")?,
        None => omega_u.clone(),
    };
    let omega_m2 = match &a.omega_m2 {
        Some(w) => w.expand(n, "afm.omega_m2")?,
        None => omega_u.clone(),
    };
    let max_latency = latency.iter().copied().fold(0.0, f64::max);
    let epoch = a.epoch.unwrap_or(-(max_latency + a.d / a.omega_min) - 1.0);

    let t_end = match file.run.t_end {
        Some(t) => t,
        None => {
            let h = hurwitz_check(&build_reduced_system(&spectral, &gains).a_hat)?;
            HORIZON_FACTOR / h.spectral_abscissa.abs()
        }
    };
    let output_dt = file.run.output_dt.unwrap_or(t_end / 1000.0);
    if let Some(dt) = file.run.ode_dt {
        if !(dt > 0.0) {
            return Err(Error::validation(
                "run.ode_dt",
                format!("must be positive, got {dt}"),
            ));
        }
    }

    let afm = AfmScenario {
        graph,
        omega_u: omega_u.clone(),
        theta0,
        omega_m1,
        omega_m2,
        beta0,
        beta_max: a.beta_max,
        latency,
        p: a.p,
        d: a.d,
        gains,
        omega_min: a.omega_min,
        omega_max: a.omega_max,
        t_end,
        epoch,
        output_dt,
    };
    afm.validate()?;

    Ok(Scenario {
        ode_dt: file.run.ode_dt,
        omega_u: DenseVector::from_vec(omega_u),
        spectral,
        gains,
        afm,
        file,
    })
}
