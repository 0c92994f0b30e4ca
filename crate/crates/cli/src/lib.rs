//! Command-line front end: each subcommand runs one library operation and
//! writes its CSV/JSON outputs plus `manifest.json` into the run directory.

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use hbl_core::Point;

pub mod commands;
pub mod config;
pub mod output;
pub mod sweep;

use config::Config;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "hbl", version, about = "Henon-like maps at the first homoclinic tangency")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub cmd: Cmd,
}

/// Overrides for values of the config file.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// JSON config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub a: Option<f64>,
    /// Use a = a*(b) + offset.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub a_offset: Option<f64>,
    #[arg(long, global = true)]
    pub b: Option<f64>,
    /// Orientation sign, 1 or -1.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub orientation: Option<i32>,
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker count; takes precedence over HBL_THREADS.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Run directory.
    #[arg(long, short, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Cmd {
    /// Orbit of one point.
    Iterate {
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        point: Point,
        #[arg(long)]
        n: usize,
    },
    /// QR Lyapunov exponents along one orbit.
    Lyap {
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        point: Point,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
    },
    /// Periodic orbits up to a period.
    Orbits {
        #[arg(long, default_value_t = 12)]
        max_period: usize,
    },
    /// Stable or unstable manifold of a fixed saddle.
    Manifold {
        #[arg(long, value_enum, ignore_case = true, default_value_t = commands::Saddle::Q)]
        saddle: commands::Saddle,
        #[arg(long, value_enum, default_value_t = commands::Kind::Unstable)]
        kind: commands::Kind,
    },
    /// Locate the tangency parameter a*(b).
    Astar,
    /// Boundary of the trapping region R.
    Region,
    /// Fraction of a grid that stays bounded.
    Escape(commands::EscapeArgs),
    /// Bound/free decomposition of sampled bounded orbits.
    Decompose {
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 1000)]
        horizon: usize,
    },
    /// Uniform expansion on the bounded set away from the tangency.
    Hyper(commands::HyperArgs),
    /// Exponent bars on every saddle orbit up to a period.
    #[command(name = "audit-a")]
    AuditA {
        #[arg(long, default_value_t = 12)]
        max_period: usize,
    },
    /// Transversality of manifold intersections away from the tangency.
    #[command(name = "audit-b")]
    AuditB,
    /// Run a subcommand over a grid of (a, b).
    Sweep(sweep::SweepArgs),
}

fn parse_point(s: &str) -> std::result::Result<Point, String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    let x: f64 = x.trim().parse().map_err(|e| format!("x: {e}"))?;
    let y: f64 = y.trim().parse().map_err(|e| format!("y: {e}"))?;
    Ok(Point::new(x, y))
}

impl Cmd {
    pub fn name(&self) -> &'static str {
        match self {
            Cmd::Iterate { .. } => "iterate",
            Cmd::Lyap { .. } => "lyap",
            Cmd::Orbits { .. } => "orbits",
            Cmd::Manifold { .. } => "manifold",
            Cmd::Astar => "astar",
            Cmd::Region => "region",
            Cmd::Escape(_) => "escape",
            Cmd::Decompose { .. } => "decompose",
            Cmd::Hyper(_) => "hyper",
            Cmd::AuditA { .. } => "audit-a",
            Cmd::AuditB => "audit-b",
            Cmd::Sweep(_) => "sweep",
        }
    }
}

/// File config with flags applied.
pub fn resolve_config(common: &Common) -> Result<(Config, Option<Vec<u8>>)> {
    let (mut cfg, bytes) = match &common.config {
        Some(path) => {
            let (c, b) = Config::load(path)?;
            (c, Some(b))
        }
        None => (Config::default(), None),
    };
    if common.a.is_some() && common.a_offset.is_some() {
        bail!("--a and --a-offset are mutually exclusive");
    }
    if let Some(a) = common.a {
        cfg.map.a = Some(a);
        cfg.map.a_offset = None;
    }
    if let Some(da) = common.a_offset {
        cfg.map.a_offset = Some(da);
        cfg.map.a = None;
    }
    if let Some(b) = common.b {
        cfg.map.b = b;
    }
    if let Some(o) = common.orientation {
        cfg.map.orientation = o;
    }
    if let Some(d) = common.delta {
        cfg.constants.delta = d;
    }
    if let Some(s) = common.seed {
        cfg.run.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.run.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok((cfg, bytes))
}

/// Worker count: flag, then `HBL_THREADS`, then the config file.
pub fn thread_count(common: &Common, cfg: &Config) -> Result<usize> {
    let env = match std::env::var("HBL_THREADS") {
        Ok(s) => Some(s.trim().parse::<usize>().map_err(|_| anyhow::anyhow!("HBL_THREADS must be a positive integer, got {s:?}"))?),
        Err(_) => None,
    };
    let n = common.threads.or(env).or(cfg.run.threads).unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    if n == 0 {
        bail!("thread count must be positive");
    }
    Ok(n)
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    let (cfg, bytes) = match resolve_config(&cli.common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return EXIT_USAGE;
        }
    };
    let threads = match thread_count(&cli.common, &cfg) {
        Ok(n) => n,
        Err(e) => {
            eprintln!("error: {e:#}");
            return EXIT_USAGE;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAIL;
        }
    };
    let argv: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let res = pool.install(|| commands::dispatch(&cli.cmd, &cfg, bytes.as_deref(), &argv, threads));
    match res {
        Ok(true) => EXIT_PASS,
        Ok(false) => EXIT_FAIL,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<commands::UsageError>().is_some() {
                EXIT_USAGE
            } else {
                EXIT_FAIL
            }
        }
    }
}
