//! Runs one subcommand over a grid of `(a, b)` and aggregates one CSV.

use anyhow::Result;
use clap::{Args, ValueEnum};
use rayon::prelude::*;

use hbl_core::MapParams;

use crate::commands::{self, EscapeArgs, HyperArgs};
use crate::config::Config;
use crate::output::{num, RunDir, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepCmd {
    Astar,
    Escape,
    #[value(name = "audit-a")]
    AuditA,
    Hyper,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[arg(long = "cmd", value_enum)]
    pub cmd: SweepCmd,
    /// Comma-separated values of a (an empty string gives an empty grid).
    #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
    pub a_values: Option<FloatList>,
    /// `lo,hi,n`: n evenly spaced values of a.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true, conflicts_with = "a_values")]
    pub a_range: Option<FloatList>,
    #[arg(long, value_parser = parse_list)]
    pub b_values: Option<FloatList>,
    /// Values of a are offsets from a*(b).
    #[arg(long)]
    pub relative: bool,
    #[arg(long, default_value_t = 200)]
    pub nx: usize,
    #[arg(long, default_value_t = 20)]
    pub ny: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [100usize, 1000, 10_000])]
    pub horizons: Vec<usize>,
    #[arg(long, default_value_t = 12)]
    pub max_period: usize,
    #[arg(long, default_value_t = 200)]
    pub count: usize,
}

/// A comma-separated list taken as one argument value.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatList(pub Vec<f64>);

fn parse_list(s: &str) -> std::result::Result<FloatList, String> {
    if s.trim().is_empty() {
        return Ok(FloatList(Vec::new()));
    }
    s.split(',').map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"))).collect::<std::result::Result<_, _>>().map(FloatList)
}

fn parse_range(s: &str) -> std::result::Result<FloatList, String> {
    let v = parse_list(s)?.0;
    if v.len() != 3 || v[2] < 0.0 || v[2].fract() != 0.0 {
        return Err("expected lo,hi,n".into());
    }
    let n = v[2] as usize;
    Ok(FloatList(match n {
        0 => Vec::new(),
        1 => vec![v[0]],
        _ => (0..n).map(|i| v[0] + (v[1] - v[0]) * i as f64 / (n - 1) as f64).collect(),
    }))
}

struct Cell {
    a: Option<f64>,
    b: f64,
}

fn header(args: &SweepArgs) -> Vec<String> {
    let mut h: Vec<String> = ["a", "b", "status"].map(String::from).to_vec();
    let extra: Vec<String> = match args.cmd {
        SweepCmd::Astar => ["a_star", "abs_a_star_minus_2", "bracket_width", "kind"].map(String::from).to_vec(),
        SweepCmd::Escape => std::iter::once("monotone".to_string()).chain(args.horizons.iter().map(|n| format!("fraction_{n}"))).collect(),
        SweepCmd::AuditA => ["n_orbits", "violations", "min_chi_u", "max_chi_s", "attracting"].map(String::from).to_vec(),
        SweepCmd::Hyper => ["lambda_star", "n_star", "p_sup_observed", "failures", "tested", "skipped"].map(String::from).to_vec(),
    };
    h.extend(extra);
    h.push("message".into());
    h
}

/// `(a, pass, fields)` for one cell.
fn run_cell(cfg: &Config, args: &SweepArgs, cell: &Cell) -> Result<(f64, bool, Vec<String>)> {
    let o = cfg.orientation();
    if args.cmd == SweepCmd::Astar {
        let t = commands::locate(cfg, cell.b)?;
        let f = vec![num(t.a_star), num((t.a_star - 2.0).abs()), num(t.bracket_width), format!("{:?}", t.tangency_kind).to_lowercase()];
        return Ok((t.a_star, t.bracket_width <= cfg.numerics.tangency_tol, f));
    }
    let a = cell.a.expect("grid cells carry a");
    let needs_zeta = args.cmd == SweepCmd::Hyper;
    let tangency = if args.relative || needs_zeta { Some(commands::locate(cfg, cell.b)?) } else { None };
    let a = match (&tangency, args.relative) {
        (Some(t), true) => t.a_star + a,
        _ => a,
    };
    let p = MapParams::new(a, cell.b, o)?;
    match args.cmd {
        SweepCmd::Astar => unreachable!(),
        SweepCmd::Escape => {
            let ea = EscapeArgs { nx: args.nx, ny: args.ny, horizons: args.horizons.clone(), rect: None };
            let (r, _) = commands::escape_report(&p, &ea)?;
            let mut f = vec![r.monotone.to_string()];
            f.extend(r.fraction_bounded.iter().map(|x| num(*x)));
            Ok((a, r.monotone, f))
        }
        SweepCmd::AuditA => {
            let (r, att) = commands::theorem_a(&p, args.max_period)?;
            let f = vec![r.n_orbits.to_string(), r.violations.len().to_string(), num(r.min_chi_u), num(r.max_chi_s), att.violations.len().to_string()];
            Ok((a, r.pass() && att.pass(), f))
        }
        SweepCmd::Hyper => {
            let zeta0 = tangency.expect("located above").tangency_point;
            let ha = HyperArgs { count: args.count, ..HyperArgs::default() };
            let (r, _) = commands::hyperbolicity(cfg, &p, zeta0, &ha)?;
            let f = vec![num(r.lambda_star), r.n_star.to_string(), r.p_sup_observed.to_string(), r.failures.len().to_string(), r.tested.to_string(), r.skipped.to_string()];
            Ok((a, r.pass(), f))
        }
    }
}

pub fn sweep(cfg: &Config, out: &mut RunDir, args: &SweepArgs) -> Result<bool> {
    let bs = args.b_values.clone().map_or_else(|| vec![cfg.map.b], |l| l.0);
    let cells: Vec<Cell> = if args.cmd == SweepCmd::Astar {
        bs.iter().map(|&b| Cell { a: None, b }).collect()
    } else {
        let default_a = if args.relative { cfg.map.a_offset.unwrap_or(0.0) } else { cfg.map.a.unwrap_or(f64::NAN) };
        let as_ = args.a_values.clone().or_else(|| args.a_range.clone()).map_or_else(|| vec![default_a], |l| l.0);
        bs.iter().flat_map(|&b| as_.iter().map(move |&a| Cell { a: Some(a), b })).collect()
    };
    let h = header(args);
    let width = h.len();
    let rows: Vec<(bool, Vec<String>)> = cells
        .par_iter()
        .map(|c| match run_cell(cfg, args, c) {
            Ok((a, pass, fields)) => {
                let mut row = vec![num(a), num(c.b), if pass { "pass" } else { "fail" }.to_string()];
                row.extend(fields);
                row.push(String::new());
                (pass, row)
            }
            Err(e) => {
                let mut row = vec![c.a.map(num).unwrap_or_default(), num(c.b), "error".to_string()];
                row.resize(width - 1, String::new());
                row.push(format!("{e:#}"));
                (false, row)
            }
        })
        .collect();
    let mut t = Table::new(&h.iter().map(String::as_str).collect::<Vec<_>>());
    for (_, r) in &rows {
        t.row(r);
    }
    out.csv("sweep.csv", t)?;
    Ok(rows.iter().all(|(p, _)| *p))
}
