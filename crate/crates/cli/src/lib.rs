//! Run configuration and the three subcommands behind the `swift-bsde`
//! binary. Everything here returns documents as strings so the binary only
//! decides where they go.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use swift_bsde::oracle::convergence_study;
use swift_bsde::problem::{ProblemDocument, Reference};
use swift_bsde::solver::PhaseTimings;
use swift_bsde::{scheme_params, solve, FbsdeProblem, SolverConfig, ThetaScheme, Variant};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<swift_bsde::Error> for CliError {
    fn from(e: swift_bsde::Error) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// A builtin name or a full problem document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemSpec {
    Name(String),
    Document(Box<ProblemDocument>),
}

/// `"A"`..`"D"`, `"theta1,theta2"`, or `[theta1, theta2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SchemeSpec {
    Label(String),
    Pair([f64; 2]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Off {
    #[serde(rename = "off")]
    Off,
}

/// `"off"` or a fraction in `(0, 1/3)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AntireflectiveSpec {
    Off(Off),
    Fraction(f64),
}

impl std::str::FromStr for AntireflectiveSpec {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        if s.trim().eq_ignore_ascii_case("off") {
            return Ok(AntireflectiveSpec::Off(Off::Off));
        }
        s.trim()
            .parse()
            .map(AntireflectiveSpec::Fraction)
            .map_err(|_| {
                CliError::Config(format!(
                    "antireflective: expected 'off' or a fraction, got {s:?}"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    #[default]
    Json,
}

impl std::str::FromStr for Format {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(CliError::Config(format!(
                "format: expected csv or json, got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Defaults to CSV for `converge`, JSON otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

/// Everything a run needs. The JSON form uses these field names; command
/// line flags override fields read from a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemSpec>,
    pub scheme: SchemeSpec,
    pub variant: Variant,
    #[serde(rename = "J")]
    pub j: i64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "P")]
    pub p: i64,
    #[serde(rename = "P_list", skip_serializing_if = "Option::is_none")]
    pub p_list: Option<Vec<i64>>,
    pub picard_iters: usize,
    pub antireflective: AntireflectiveSpec,
    pub output: OutputSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        let solver = SolverConfig::default();
        Self {
            problem: None,
            scheme: SchemeSpec::Label(solver.scheme.name()),
            variant: solver.variant,
            j: solver.order as i64,
            l: solver.width_multiplier,
            p: solver.steps as i64,
            p_list: None,
            picard_iters: solver.picard_iters,
            antireflective: AntireflectiveSpec::Off(Off::Off),
            output: OutputSpec::default(),
        }
    }
}

/// A validated configuration.
pub struct Resolved {
    pub problem: FbsdeProblem,
    pub solver: SolverConfig,
    pub p_list: Option<Vec<usize>>,
}

fn positive(name: &str, v: i64) -> CliResult<usize> {
    if v <= 0 {
        return Err(CliError::Config(format!(
            "{name} must be positive, got {v}"
        )));
    }
    Ok(v as usize)
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn scheme(&self) -> CliResult<ThetaScheme> {
        Ok(match &self.scheme {
            SchemeSpec::Label(s) => scheme_params(s)?,
            SchemeSpec::Pair([a, b]) => ThetaScheme::custom(*a, *b)?,
        })
    }

    fn build_problem(&self) -> CliResult<FbsdeProblem> {
        match &self.problem {
            None => Err(CliError::Config(
                "no problem given (--problem or \"problem\" in the config)".into(),
            )),
            Some(ProblemSpec::Name(name)) if name.ends_with(".json") => {
                let text = std::fs::read_to_string(name)
                    .map_err(|e| CliError::Config(format!("cannot read problem {name}: {e}")))?;
                Ok(ProblemDocument::from_json(&text)?.build()?)
            }
            Some(ProblemSpec::Name(name)) => Ok(ProblemDocument::builtin(name).build()?),
            Some(ProblemSpec::Document(doc)) => Ok(doc.build()?),
        }
    }

    /// Checks every field and the solver invariants for each `P` that will
    /// run.
    pub fn resolve(&self) -> CliResult<Resolved> {
        let problem = self.build_problem()?;
        let antireflective = match self.antireflective {
            AntireflectiveSpec::Off(_) => None,
            AntireflectiveSpec::Fraction(f) => Some(f),
        };
        let solver = SolverConfig {
            scheme: self.scheme()?,
            steps: positive("P", self.p)?,
            order: positive("J", self.j)?,
            width_multiplier: self.l,
            picard_iters: self.picard_iters,
            variant: self.variant,
            antireflective,
            keep_slices: false,
            kernel_path: Default::default(),
        };
        solver.validate(&problem)?;
        let p_list = match &self.p_list {
            None => None,
            Some(list) => {
                let mut steps = list
                    .iter()
                    .map(|&p| positive("P", p))
                    .collect::<CliResult<Vec<_>>>()?;
                steps.sort_unstable();
                if steps.windows(2).any(|w| w[0] == w[1]) {
                    return Err(CliError::Config("P-list contains duplicates".into()));
                }
                for &p in &steps {
                    SolverConfig {
                        steps: p,
                        ..solver.clone()
                    }
                    .validate(&problem)?;
                }
                Some(steps)
            }
        };
        Ok(Resolved {
            problem,
            solver,
            p_list,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveDocument {
    pub problem: String,
    pub y0: f64,
    pub z0: f64,
    pub y_error: Option<f64>,
    pub z_error: Option<f64>,
    pub reference: Option<Reference>,
    pub picard_warnings: usize,
    pub wall_ms: f64,
    pub config: RunConfig,
}

const CSV_HEADER: &str = "P,dt,y0,z0,y_error,z_error";

fn opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:e}")).unwrap_or_default()
}

fn to_json<T: Serialize>(v: &T) -> CliResult<String> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn run_solve(config: &RunConfig) -> CliResult<String> {
    let r = config.resolve()?;
    let started = Instant::now();
    let res = solve(&r.problem, &r.solver)?;
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;
    let reference = r.problem.reference();
    let doc = SolveDocument {
        problem: r.problem.name().to_string(),
        y0: res.y0,
        z0: res.z0,
        y_error: reference.map(|rf| (res.y0 - rf.y).abs()),
        z_error: reference.map(|rf| (res.z0 - rf.z).abs()),
        reference,
        picard_warnings: res.diagnostics.picard_warnings,
        wall_ms,
        config: config.clone(),
    };
    match config.output.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&doc),
        Format::Csv => Ok(format!(
            "{CSV_HEADER}\n{},{:e},{:e},{:e},{},{}\n",
            r.solver.steps,
            r.solver.dt(&r.problem),
            doc.y0,
            doc.z0,
            opt(doc.y_error),
            opt(doc.z_error)
        )),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergeRow {
    #[serde(rename = "P")]
    pub p: usize,
    pub dt: f64,
    pub y0: f64,
    pub z0: f64,
    pub y_error: f64,
    pub z_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergeSummary {
    pub problem: String,
    pub order_y: f64,
    pub order_z: f64,
    pub reference: Reference,
    pub wall_ms: f64,
    pub config: RunConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergeDocument {
    pub rows: Vec<ConvergeRow>,
    pub summary: ConvergeSummary,
}

/// CSV rows followed by a one-line JSON summary, or one JSON document.
pub fn run_converge(config: &RunConfig) -> CliResult<String> {
    let r = config.resolve()?;
    let steps = r.p_list.ok_or_else(|| {
        CliError::Config("converge needs a P-list (--P-list or \"P_list\")".into())
    })?;
    if steps.len() < 3 {
        return Err(CliError::Config(format!(
            "P-list needs at least 3 values for an order fit, got {}",
            steps.len()
        )));
    }
    let reference = r.problem.reference().ok_or_else(|| {
        CliError::Config(format!(
            "problem {} has no exact or reference solution",
            r.problem.name()
        ))
    })?;
    let started = Instant::now();
    let report = convergence_study(&r.problem, &r.solver, &steps, reference)?;
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;
    let horizon = r.problem.horizon();
    let rows: Vec<ConvergeRow> = (0..steps.len())
        .map(|i| ConvergeRow {
            p: steps[i],
            dt: horizon / steps[i] as f64,
            y0: report.y0[i],
            z0: report.z0[i],
            y_error: report.errors_y[i],
            z_error: report.errors_z[i],
        })
        .collect();
    let summary = ConvergeSummary {
        problem: r.problem.name().to_string(),
        order_y: report.order_y,
        order_z: report.order_z,
        reference,
        wall_ms,
        config: config.clone(),
    };
    match config.output.format.unwrap_or(Format::Csv) {
        Format::Json => to_json(&ConvergeDocument { rows, summary }),
        Format::Csv => {
            let mut out = format!("{CSV_HEADER}\n");
            for row in &rows {
                writeln!(
                    out,
                    "{},{:e},{:e},{:e},{:e},{:e}",
                    row.p, row.dt, row.y0, row.z0, row.y_error, row.z_error
                )
                .expect("write to string");
            }
            out.push_str(
                &serde_json::to_string(&summary).map_err(|e| CliError::Runtime(e.to_string()))?,
            );
            out.push('\n');
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileDocument {
    pub problem: String,
    #[serde(rename = "J")]
    pub j: usize,
    #[serde(rename = "P")]
    pub p: usize,
    pub timings: PhaseTimings,
    /// Kernel build, matrix-vector, Picard, driver and boundary phases.
    pub step_ms: f64,
    pub matvec_share: f64,
    pub kernel_builds: usize,
    pub y0: f64,
    pub z0: f64,
    pub config: RunConfig,
}

pub fn run_profile(config: &RunConfig) -> CliResult<String> {
    let r = config.resolve()?;
    let res = solve(&r.problem, &r.solver)?;
    let t = res.diagnostics.timings.clone();
    let step_ms =
        t.kernel_build_ms + t.matvec_ms + t.picard_ms + t.driver_eval_ms + t.antireflective_ms;
    let doc = ProfileDocument {
        problem: r.problem.name().to_string(),
        j: r.solver.order,
        p: r.solver.steps,
        matvec_share: if step_ms > 0.0 {
            t.matvec_ms / step_ms
        } else {
            0.0
        },
        step_ms,
        timings: t,
        kernel_builds: res.diagnostics.kernel_builds,
        y0: res.y0,
        z0: res.z0,
        config: config.clone(),
    };
    match config.output.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&doc),
        Format::Csv => {
            let t = &doc.timings;
            let mut out = String::from("phase,ms\n");
            for (name, ms) in [
                ("terminal", t.terminal_ms),
                ("kernel_build", t.kernel_build_ms),
                ("matvec", t.matvec_ms),
                ("picard", t.picard_ms),
                ("driver_eval", t.driver_eval_ms),
                ("antireflective", t.antireflective_ms),
                ("final_eval", t.final_eval_ms),
                ("total", t.total_ms),
            ] {
                writeln!(out, "{name},{ms}").expect("write to string");
            }
            Ok(out)
        }
    }
}

/// Writes `text` to the configured path, or returns it for stdout.
pub fn deliver(config: &RunConfig, text: String) -> CliResult<Option<String>> {
    match &config.output.path {
        Some(path) => {
            std::fs::write(path, text)
                .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
            Ok(None)
        }
        None => Ok(Some(text)),
    }
}
