//! Command-line and config-file settings resolved into a [`RunConfig`].

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use thiserror::Error;
use yamabe_core::flow::{FlowMode, FlowOptions, SingleTriangleOptions, SingularityThresholds, StepOptions};
use yamabe_core::io::IoError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("unknown flag or key `{0}`")]
    UnknownFlag(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("{path}: {source}")]
    BadMeshFile {
        path: String,
        #[source]
        source: IoError,
    },
    #[error("invalid value for {flag}: {msg}")]
    InvalidValue { flag: String, msg: String },
    #[error("config file {path}: {msg}")]
    Config { path: String, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Flow(#[from] yamabe_core::flow::FlowError),
    #[error(transparent)]
    Curvature(#[from] yamabe_core::curvature::CurvatureError),
    #[error(transparent)]
    Admissibility(#[from] yamabe_core::admissibility::AdmissibilityError),
    #[error(transparent)]
    Metric(#[from] yamabe_core::metric::MetricError),
    #[error(transparent)]
    Triangle(#[from] yamabe_core::triangle::TriangleError),
}

#[derive(Debug, Parser)]
#[command(
    name = "yamabe",
    version,
    about = "Combinatorial Yamabe flow on triangulated surfaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the flow on a mesh.
    Flow(Flags),
    /// Decide whether a mesh carries a constant-curvature metric.
    Admissible(Flags),
    /// Corner angles realizing constant curvature combinatorially.
    TargetAngles(Flags),
    /// Flow of a single triangle towards the equilateral one.
    SingleTriangle(Flags),
    /// Compare the coefficient matrix with finite differences of the curvature.
    JacobianCheck(Flags),
    /// Energy and its gradient at a conformal factor.
    Energy(Flags),
}

#[derive(Debug, Default, Args)]
struct Flags {
    /// TOML file whose keys mirror these flags; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Mesh file (JSON, or OFF with --lengths).
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Edge lengths, one `i j length` per line.
    #[arg(long)]
    lengths: Option<PathBuf>,
    /// Initial conformal factor, comma separated.
    #[arg(long)]
    u0: Option<String>,
    /// Triangle side lengths, comma separated.
    #[arg(long)]
    d: Option<String>,
    /// Use the normalized flow.
    #[arg(long)]
    normalized: bool,
    /// Trace CSV path (segments after surgeries get `.segK` inserted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Events file (JSON lines).
    #[arg(long)]
    events: Option<PathBuf>,
    /// Where to write the final mesh and lengths as JSON.
    #[arg(long)]
    final_mesh: Option<PathBuf>,
    #[arg(long, overrides_with = "no_surgery")]
    surgery: bool,
    /// Stop at a removable singularity instead of flipping.
    #[arg(long)]
    no_surgery: bool,
    #[arg(long)]
    max_surgeries: Option<usize>,
    #[arg(long)]
    max_time: Option<f64>,
    #[arg(long)]
    sample_interval: Option<f64>,
    /// Convergence tolerance on max |K_i - K_av|.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    dt0: Option<f64>,
    #[arg(long)]
    dt_min: Option<f64>,
    #[arg(long)]
    dt_max: Option<f64>,
    #[arg(long)]
    removable_slack: Option<f64>,
    #[arg(long)]
    u_essential: Option<f64>,
    /// Include the feasible flow or violating subset.
    #[arg(long)]
    witness: bool,
    /// Number of random starting factors to run in parallel.
    #[arg(long)]
    multistart: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Settings as they appear in a config file.
#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Settings {
    pub mesh: Option<PathBuf>,
    pub lengths: Option<PathBuf>,
    pub u0: Option<Vec<f64>>,
    pub d: Option<Vec<f64>>,
    pub normalized: Option<bool>,
    pub out: Option<PathBuf>,
    pub events: Option<PathBuf>,
    pub final_mesh: Option<PathBuf>,
    pub surgery: Option<bool>,
    pub max_surgeries: Option<usize>,
    pub max_time: Option<f64>,
    pub sample_interval: Option<f64>,
    pub tol: Option<f64>,
    pub dt0: Option<f64>,
    pub dt_min: Option<f64>,
    pub dt_max: Option<f64>,
    pub removable_slack: Option<f64>,
    pub u_essential: Option<f64>,
    pub witness: Option<bool>,
    pub multistart: Option<usize>,
    pub seed: Option<u64>,
}

impl Settings {
    /// Fields set in `self` win over `base`.
    fn over(self, base: Settings) -> Settings {
        Settings {
            mesh: self.mesh.or(base.mesh),
            lengths: self.lengths.or(base.lengths),
            u0: self.u0.or(base.u0),
            d: self.d.or(base.d),
            normalized: self.normalized.or(base.normalized),
            out: self.out.or(base.out),
            events: self.events.or(base.events),
            final_mesh: self.final_mesh.or(base.final_mesh),
            surgery: self.surgery.or(base.surgery),
            max_surgeries: self.max_surgeries.or(base.max_surgeries),
            max_time: self.max_time.or(base.max_time),
            sample_interval: self.sample_interval.or(base.sample_interval),
            tol: self.tol.or(base.tol),
            dt0: self.dt0.or(base.dt0),
            dt_min: self.dt_min.or(base.dt_min),
            dt_max: self.dt_max.or(base.dt_max),
            removable_slack: self.removable_slack.or(base.removable_slack),
            u_essential: self.u_essential.or(base.u_essential),
            witness: self.witness.or(base.witness),
            multistart: self.multistart.or(base.multistart),
            seed: self.seed.or(base.seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Flow,
    FlowNormalized,
    SingleTriangle,
    Admissible,
    TargetAngles,
    JacobianCheck,
    Energy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub mesh: Option<PathBuf>,
    pub lengths: Option<PathBuf>,
    pub u0: Option<Vec<f64>>,
    pub d: Option<[f64; 3]>,
    pub flow: FlowOptions,
    pub triangle: SingleTriangleOptions,
    pub out: Option<PathBuf>,
    pub events: Option<PathBuf>,
    pub final_mesh: Option<PathBuf>,
    pub witness: bool,
    pub multistart: Option<usize>,
    pub seed: u64,
}

/// What the command line asked for.
#[derive(Debug)]
pub enum Parsed {
    Run(Box<RunConfig>),
    /// Help or version text to print.
    Info(String),
}

fn parse_list(flag: &str, s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|x| {
            x.trim().parse::<f64>().map_err(|_| CliError::InvalidValue {
                flag: flag.into(),
                msg: format!("`{x}` is not a number"),
            })
        })
        .collect()
}

fn flags_to_settings(f: Flags) -> Result<Settings, CliError> {
    Ok(Settings {
        mesh: f.mesh,
        lengths: f.lengths,
        u0: f.u0.map(|s| parse_list("--u0", &s)).transpose()?,
        d: f.d.map(|s| parse_list("--d", &s)).transpose()?,
        normalized: f.normalized.then_some(true),
        out: f.out,
        events: f.events,
        final_mesh: f.final_mesh,
        surgery: if f.no_surgery {
            Some(false)
        } else {
            f.surgery.then_some(true)
        },
        max_surgeries: f.max_surgeries,
        max_time: f.max_time,
        sample_interval: f.sample_interval,
        tol: f.tol,
        dt0: f.dt0,
        dt_min: f.dt_min,
        dt_max: f.dt_max,
        removable_slack: f.removable_slack,
        u_essential: f.u_essential,
        witness: f.witness.then_some(true),
        multistart: f.multistart,
        seed: f.seed,
    })
}

pub fn load_settings(path: &Path) -> Result<Settings, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| {
        let msg = e.message().to_string();
        if let Some(key) = msg.strip_prefix("unknown field `").and_then(|r| r.split('`').next()) {
            return CliError::UnknownFlag(key.to_string());
        }
        CliError::Config {
            path: path.display().to_string(),
            msg: e.to_string(),
        }
    })
}

fn positive(flag: &str, x: Option<f64>, default: f64) -> Result<f64, CliError> {
    match x {
        None => Ok(default),
        Some(v) if v > 0.0 && v.is_finite() => Ok(v),
        Some(v) => Err(CliError::InvalidValue {
            flag: flag.into(),
            msg: format!("{v} must be positive"),
        }),
    }
}

fn resolve(mode: Mode, s: Settings) -> Result<RunConfig, CliError> {
    let mode = match (mode, s.normalized) {
        (Mode::Flow, Some(true)) => Mode::FlowNormalized,
        (m, _) => m,
    };
    let needs_mesh = !matches!(mode, Mode::SingleTriangle);
    if needs_mesh && s.mesh.is_none() {
        return Err(CliError::MissingInput("--mesh is required".into()));
    }
    let d = match (mode, &s.d) {
        (Mode::SingleTriangle, None) => return Err(CliError::MissingInput("--d is required".into())),
        (_, Some(v)) if v.len() != 3 => {
            return Err(CliError::InvalidValue {
                flag: "--d".into(),
                msg: format!("expected 3 side lengths, got {}", v.len()),
            })
        }
        (_, Some(v)) => Some([v[0], v[1], v[2]]),
        (_, None) => None,
    };
    let step_default = StepOptions::default();
    let step = StepOptions {
        dt0: positive("--dt0", s.dt0, step_default.dt0)?,
        dt_min: positive("--dt-min", s.dt_min, step_default.dt_min)?,
        dt_max: positive("--dt-max", s.dt_max, step_default.dt_max)?,
        ..step_default
    };
    let th_default = SingularityThresholds::default();
    let flow_default = FlowOptions::default();
    let tri_default = SingleTriangleOptions::default();
    let max_time = positive("--max-time", s.max_time, flow_default.max_time)?;
    let flow = FlowOptions {
        mode: if mode == Mode::FlowNormalized {
            FlowMode::Normalized
        } else {
            FlowMode::Unnormalized
        },
        step,
        thresholds: SingularityThresholds {
            removable_slack: positive("--removable-slack", s.removable_slack, th_default.removable_slack)?,
            u_essential: positive("--u-essential", s.u_essential, th_default.u_essential)?,
            ..th_default
        },
        tol_converge: positive("--tol", s.tol, flow_default.tol_converge)?,
        max_time,
        surgery: s.surgery.unwrap_or(flow_default.surgery),
        max_surgeries: s.max_surgeries.unwrap_or(flow_default.max_surgeries),
        sample_interval: s
            .sample_interval
            .map(|x| positive("--sample-interval", Some(x), 0.0))
            .transpose()?,
    };
    let triangle = SingleTriangleOptions {
        step,
        tol: positive("--tol", s.tol, tri_default.tol)?,
        max_time,
    };
    Ok(RunConfig {
        mode,
        mesh: s.mesh,
        lengths: s.lengths,
        u0: s.u0,
        d,
        flow,
        triangle,
        out: s.out,
        events: s.events,
        final_mesh: s.final_mesh,
        witness: s.witness.unwrap_or(false),
        multistart: s.multistart,
        seed: s.seed.unwrap_or(0),
    })
}

/// Parses arguments (program name first) and an optional config file
/// named by `--config`; flags override file keys, defaults fill the rest.
pub fn parse_config<I, T>(args: I) -> Result<Parsed, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => Ok(Parsed::Info(e.render().to_string())),
                ErrorKind::UnknownArgument => {
                    let arg = e
                        .get(clap::error::ContextKind::InvalidArg)
                        .map(|v| v.to_string())
                        .unwrap_or_default();
                    Err(CliError::UnknownFlag(arg))
                }
                _ => Err(CliError::Usage(e.render().to_string())),
            };
        }
    };
    let (mode, flags) = match cli.command {
        Command::Flow(f) => (Mode::Flow, f),
        Command::Admissible(f) => (Mode::Admissible, f),
        Command::TargetAngles(f) => (Mode::TargetAngles, f),
        Command::SingleTriangle(f) => (Mode::SingleTriangle, f),
        Command::JacobianCheck(f) => (Mode::JacobianCheck, f),
        Command::Energy(f) => (Mode::Energy, f),
    };
    let file = match &flags.config {
        Some(p) => load_settings(p)?,
        None => Settings::default(),
    };
    let settings = flags_to_settings(flags)?.over(file);
    resolve(mode, settings).map(|c| Parsed::Run(Box::new(c)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(args: &[&str]) -> RunConfig {
        match parse_config(args.iter().copied()).unwrap() {
            Parsed::Run(c) => *c,
            Parsed::Info(s) => panic!("unexpected info {s}"),
        }
    }

    #[test]
    fn normalized_flow() {
        let c = cfg(&[
            "yamabe",
            "flow",
            "--mesh",
            "tet.json",
            "--normalized",
            "--u0",
            "1,1,1,1.3",
            "--out",
            "trace.csv",
        ]);
        assert_eq!(c.mode, Mode::FlowNormalized);
        assert_eq!(c.flow.mode, FlowMode::Normalized);
        assert_eq!(c.u0, Some(vec![1.0, 1.0, 1.0, 1.3]));
        assert_eq!(c.out, Some(PathBuf::from("trace.csv")));
        assert_eq!(c.flow.tol_converge, 1e-9);
        assert!(c.flow.surgery);
    }

    #[test]
    fn admissible_witness() {
        let c = cfg(&["yamabe", "admissible", "--mesh", "torus7.json", "--witness"]);
        assert_eq!(c.mode, Mode::Admissible);
        assert!(c.witness);
    }

    #[test]
    fn single_triangle_sides() {
        let c = cfg(&["yamabe", "single-triangle", "--d", "3,4,5"]);
        assert_eq!(c.d, Some([3.0, 4.0, 5.0]));
    }

    #[test]
    fn errors() {
        assert!(matches!(
            parse_config(["yamabe", "flow", "--mesh", "a.json", "--bogus"]),
            Err(CliError::UnknownFlag(f)) if f == "--bogus"
        ));
        assert!(matches!(
            parse_config(["yamabe", "flow"]),
            Err(CliError::MissingInput(_))
        ));
        assert!(matches!(
            parse_config(["yamabe", "single-triangle"]),
            Err(CliError::MissingInput(_))
        ));
        assert!(matches!(
            parse_config(["yamabe", "flow", "--mesh", "a.json", "--tol=-1"]),
            Err(CliError::InvalidValue { .. })
        ));
        assert!(matches!(parse_config(["yamabe", "--help"]), Ok(Parsed::Info(_))));
    }

    #[test]
    fn no_surgery_flag() {
        let c = cfg(&["yamabe", "flow", "--mesh", "a.json", "--no-surgery"]);
        assert!(!c.flow.surgery);
    }
}
