//! `translab`: classification, phase portraits, profile curves, meshes and
//! verification reports for invariant translating solitons.

pub mod commands;
pub mod config;
pub mod emit;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use config::{Action, RegionKind};

pub use commands::{run, Outcome};

#[derive(Debug, Parser)]
#[command(name = "translab", version, about = "Invariant translating solitons: classify, build, mesh and verify")]
pub struct Cli {
    /// JSON run configuration; flags override its entries
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// output file (stdout when omitted)
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// JSON instead of text / CSV
    #[arg(long, global = true)]
    pub json: bool,
    /// base dimension n
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub action: Option<Action>,
    #[arg(long, global = true, value_enum)]
    pub region: Option<RegionKind>,
    /// boost fiber coefficient c = 1 for every n
    #[arg(long, global = true)]
    pub strict_fiber: bool,
    #[arg(long, global = true)]
    pub rel_tol: Option<f64>,
    #[arg(long, global = true)]
    pub abs_tol: Option<f64>,
    /// right integration horizon
    #[arg(long, global = true)]
    pub s_max: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WingForm {
    /// `eps' = -1`, `eps~ = +1` (timelike rotational)
    Minkowski,
    /// `eps' = eps~ = +1`
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MeshTarget {
    Bowl,
    Zwing,
    Wing,
    Spindle,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VerifyTarget {
    Bowl,
    Hybrid,
    Const,
    Quadratic,
}

fn parse_range(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected 'lo,hi', got '{s}'"));
    }
    let lo: f64 = parts[0].trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = parts[1].trim().parse().map_err(|e| format!("{e}"))?;
    if !(lo <= hi) {
        return Err(format!("empty range {lo},{hi}"));
    }
    Ok([lo, hi])
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify the slope solution through (s0, w0)
    Classify {
        #[arg(long, allow_negative_numbers = true)]
        s0: f64,
        #[arg(long, allow_negative_numbers = true)]
        w0: f64,
    },
    /// Phase portrait CSV over a grid of initial conditions
    Portrait {
        #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
        s0_range: Option<[f64; 2]>,
        #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
        w0_range: Option<[f64; 2]>,
        #[arg(long)]
        s0_count: Option<usize>,
        #[arg(long)]
        w0_count: Option<usize>,
        /// samples kept per trajectory
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Bowl profile f(s) on (0, extent]
    Bowl {
        #[arg(long)]
        extent: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Separatrix by bisection, with its trajectory
    Separatrix {
        #[arg(long)]
        anchor: Option<f64>,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Wing-like profile through the apex (s0, y0)
    Wing {
        #[arg(long, default_value_t = 1.0)]
        s0: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        y0: f64,
        #[arg(long, value_enum, default_value_t = WingForm::Minkowski)]
        form: WingForm,
    },
    /// Closed rotational timelike profile (spindle)
    Spindle {
        #[arg(long, default_value_t = 1.0)]
        s0: f64,
    },
    /// Hybrid translator samples u(x, y) on a square grid
    Hybrid {
        #[arg(long)]
        order: Option<usize>,
        /// adjacent quadrants, e.g. 1,2,3
        #[arg(long)]
        quadrants: Option<String>,
        #[arg(long)]
        extent: Option<f64>,
        #[arg(long)]
        h: Option<f64>,
        /// negative control: glue -f2 instead of f2
        #[arg(long)]
        mismatched: bool,
    },
    /// OBJ mesh of a profile or of the hybrid
    Mesh {
        #[arg(value_enum)]
        target: MeshTarget,
        #[arg(long, default_value_t = 1.0)]
        s0: f64,
        #[arg(long, value_enum, default_value_t = WingForm::Minkowski)]
        form: WingForm,
        #[arg(long)]
        angular: Option<usize>,
        #[arg(long)]
        profile_samples: Option<usize>,
        #[arg(long)]
        extent: Option<f64>,
        /// hybrid grid spacing
        #[arg(long)]
        h: Option<f64>,
        #[arg(long)]
        quadrants: Option<String>,
        /// boost angle range [-theta, theta] for zwing
        #[arg(long, default_value_t = 1.0)]
        theta: f64,
    },
    /// Residual, convergence and smoothness report; exit 1 on failure
    Verify {
        #[arg(value_enum)]
        target: VerifyTarget,
        /// three spacings h, h/2, h/4
        #[arg(long, value_delimiter = ',')]
        h: Option<Vec<f64>>,
        #[arg(long)]
        extent: Option<f64>,
        /// highest derivative order of the cross-cone smoothness scan
        #[arg(long)]
        order: Option<usize>,
        #[arg(long)]
        quadrants: Option<String>,
        #[arg(long)]
        mismatched: bool,
    },
}
