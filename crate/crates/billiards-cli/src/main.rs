//! `billiards`: build and validate circular polygons, run orbits, verify
//! stretching, count periodic orbits and compute length spectra.

mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "billiards", version, about = "Billiards inside circular polygons")]
struct Cli {
    /// Worker threads for parallel commands (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build or validate polygon files.
    #[command(subcommand)]
    Polygon(PolygonCmd),
    /// Compute orbits and export them.
    #[command(subcommand)]
    Orbit(OrbitCmd),
    /// Fundamental quadrilaterals.
    #[command(subcommand)]
    Quad(QuadCmd),
    /// Count periodic orbits and check the lower bounds.
    #[command(subcommand)]
    Count(CountCmd),
    /// Asymptotic length spectrum of sliding periodic orbits.
    Spectrum(SpectrumArgs),
}

#[derive(Debug, Subcommand)]
pub enum PolygonCmd {
    /// Write a preset polygon as JSON (stdout when no file is given).
    #[command(subcommand)]
    Preset(Preset),
    /// Re-check all invariants of a polygon file and print a table.
    Validate { file: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum Preset {
    /// Radii (r, R, r, R), central angles (α, π−α, α, π−α).
    PseudoEllipse {
        /// Radians, or a multiple of π such as `pi/2` or `3pi/4`.
        #[arg(long, default_value = "pi/2", value_parser = parse_angle)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(long = "R", default_value_t = 2.0)]
        big_r: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Moss's egg with base radius r.
    MossEgg {
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Parallel 6-gon around a clockwise triangle.
    TriangleSixgon {
        /// Vertex as `x,y`.
        #[arg(long, default_value = "0,0", allow_hyphen_values = true, value_parser = parse_point)]
        a: [f64; 2],
        /// Vertex as `x,y`.
        #[arg(long, default_value = "0,1", allow_hyphen_values = true, value_parser = parse_point)]
        b: [f64; 2],
        /// Vertex as `x,y`.
        #[arg(long, default_value = "1,0", allow_hyphen_values = true, value_parser = parse_point)]
        c: [f64; 2],
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ChiChoice {
    Geometric,
    HypothesisX,
}

/// Floors `χ_j`: a policy, or explicit values (one per arc).
#[derive(Debug, Args)]
pub struct ChiArgs {
    #[arg(long, value_enum, default_value_t = ChiChoice::HypothesisX)]
    pub chi_policy: ChiChoice,
    /// Explicit floors, overriding the policy.
    #[arg(long, value_delimiter = ',')]
    pub chi: Option<Vec<i64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitChoice {
    EqualSpacing,
    Ascent,
}

#[derive(Debug, Subcommand)]
pub enum OrbitCmd {
    /// Nodal periodic orbit started at the first node with θ = δ/2i.
    Nodal {
        file: PathBuf,
        #[arg(long)]
        i: u64,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
        /// Largest accepted |f^q(x) − x|.
        #[arg(long, default_value_t = 1e-9)]
        tol_closure: f64,
    },
    /// Forward (or, for negative steps, backward) iteration from (φ, θ).
    Iterate {
        file: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        phi: f64,
        #[arg(long)]
        theta: f64,
        #[arg(long, allow_hyphen_values = true)]
        steps: i64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Sliding periodic orbit with the given impacts per arc.
    Periodic {
        file: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        impacts: Vec<i64>,
        #[arg(long, value_enum, default_value_t = InitChoice::EqualSpacing)]
        init: InitChoice,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Orbit realizing the fastest admissible itinerary, with its speed certificate.
    Asymptotic {
        file: PathBuf,
        #[arg(long, default_value_t = 30)]
        n: i64,
        #[arg(long, default_value_t = 10)]
        turns: usize,
        #[command(flatten)]
        chi: ChiArgs,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Certificate JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HalfChoice {
    Minus,
    Plus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GateChoice {
    Upsilon,
    Endpoint,
}

#[derive(Debug, Subcommand)]
pub enum QuadCmd {
    /// Sample vertical paths in Q_{j,n} and look for vertical crossings of Q_{j+1,n'}.
    Stretch(StretchArgs),
}

#[derive(Debug, Args)]
pub struct StretchArgs {
    pub file: PathBuf,
    /// Source arc, numbered from 1.
    #[arg(long)]
    pub j: usize,
    #[arg(long)]
    pub n: i64,
    #[arg(long)]
    pub n_prime: i64,
    /// Source half; all four combinations run when both halves are omitted.
    #[arg(long, value_enum)]
    pub sigma: Option<HalfChoice>,
    #[arg(long, value_enum)]
    pub sigma_prime: Option<HalfChoice>,
    /// Random paths, besides the two lateral edges.
    #[arg(long, default_value_t = 200)]
    pub paths: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = GateChoice::Upsilon)]
    pub gate: GateChoice,
    #[command(flatten)]
    pub chi: ChiArgs,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum CountCmd {
    /// Number of lattice points G_q of the chain polytope.
    Gq {
        file: PathBuf,
        #[arg(long, default_value_t = 1)]
        p: usize,
        #[arg(long)]
        q: i64,
        #[command(flatten)]
        chi: ChiArgs,
    },
    /// Compare 2^{kp} G_q with both lower bounds for q ≤ q_max.
    CheckBounds {
        file: PathBuf,
        #[arg(long, default_value_t = 1)]
        p: usize,
        #[arg(long, default_value_t = 300)]
        q_max: i64,
        #[command(flatten)]
        chi: ChiArgs,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Constants of the lower bounds as JSON.
    Constants {
        file: PathBuf,
        #[arg(long, default_value_t = 1)]
        p: usize,
        #[command(flatten)]
        chi: ChiArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    pub file: PathBuf,
    /// Periods of the orbit sequence; none means the interval only.
    #[arg(long, value_delimiter = ',')]
    pub qs: Vec<i64>,
    /// Constant in [c1_minus, c1_plus] to approach (default c1_plus).
    #[arg(long, allow_hyphen_values = true)]
    pub target: Option<f64>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Interval JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

/// A float, or `[c]pi[/d]` with optional numbers `c` and `d`.
fn parse_angle(s: &str) -> Result<f64, String> {
    let t = s.trim().to_ascii_lowercase();
    let Some((coef, rest)) = t.split_once("pi") else {
        return t.parse().map_err(|_| format!("not an angle: {s}"));
    };
    let coef = match coef.trim_end_matches('*') {
        "" => 1.0,
        c => c.parse::<f64>().map_err(|_| format!("bad multiple of pi: {s}"))?,
    };
    let div = match rest {
        "" => 1.0,
        r => r
            .strip_prefix('/')
            .and_then(|d| d.parse::<f64>().ok())
            .ok_or_else(|| format!("bad divisor in {s}"))?,
    };
    Ok(coef * std::f64::consts::PI / div)
}

/// A point written `x,y`.
fn parse_point(s: &str) -> Result<[f64; 2], String> {
    let (x, y) = s.split_once(',').ok_or_else(|| format!("expected x,y, got {s}"))?;
    let coord = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("not a number: {v}"));
    Ok([coord(x)?, coord(y)?])
}

/// Floating-point mode requested through `BILLIARDS_PRECISION`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    Double,
}

/// Settings shared by every command.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub precision: Precision,
    pub threads: Option<usize>,
}

impl RunConfig {
    fn from_env(threads: Option<usize>) -> Result<Self, CliError> {
        let precision = match std::env::var("BILLIARDS_PRECISION").ok().as_deref() {
            None | Some("") | Some("double") => Precision::Double,
            Some("extended") => {
                return Err(CliError::usage(
                    "UnsupportedPrecision",
                    "extended precision is not available in this build; use BILLIARDS_PRECISION=double",
                ))
            }
            Some(other) => {
                return Err(CliError::usage(
                    "InvalidPrecision",
                    format!("BILLIARDS_PRECISION must be double or extended, got {other:?}"),
                ))
            }
        };
        if threads == Some(0) {
            return Err(CliError::usage("InvalidParameter", "--threads must be positive"));
        }
        Ok(Self { precision, threads })
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = RunConfig::from_env(cli.threads)?;
    if let Some(n) = config.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage("InvalidParameter", e.to_string()))?;
    }
    match cli.command {
        Command::Polygon(c) => commands::polygon(c),
        Command::Orbit(c) => commands::orbit(c),
        Command::Quad(QuadCmd::Stretch(a)) => commands::stretch(a),
        Command::Count(c) => commands::count(c),
        Command::Spectrum(a) => commands::spectrum(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::json!({"schema": 1, "error": e});
            eprintln!("{body}");
            ExitCode::from(e.kind.code())
        }
    }
}
