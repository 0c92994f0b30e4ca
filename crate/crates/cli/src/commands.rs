use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use hbl_core::critical::{decompose_orbit, AnalysisConstants, BoundFreeDecomposition, CriticalCache, DecomposeConfig, Verdict};
use hbl_core::escape::{self, EscapeGrid, EscapeReport, NoAttractorReport};
use hbl_core::geometry::Rect;
use hbl_core::lyapunov::{audit_theorem_a, qr_exponents, TheoremAReport};
use hbl_core::manifolds::region::build_region_r;
use hbl_core::manifolds::tangency::{locate_a_star, TangencyReport};
use hbl_core::manifolds::theorem_b::{audit_theorem_b, AuditBConfig};
use hbl_core::manifolds::{grow_manifold, ManifoldKind};
use hbl_core::periodic::{enumerate_periodic, fixed_points, orbit_exponents, Classification, Multiplier, SeedGrid};
use hbl_core::symbolic::necklace_count;
use hbl_core::{MapParams, Point};

use crate::config::Config;
use crate::output::{num, RunDir, Table};
use crate::Cmd;

/// Missing or inconsistent inputs detected after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Saddle {
    P,
    Q,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Stable,
    Unstable,
}

#[derive(Args, Debug, Clone)]
pub struct EscapeArgs {
    #[arg(long, default_value_t = 1000)]
    pub nx: usize,
    #[arg(long, default_value_t = 100)]
    pub ny: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [100usize, 1000, 10_000])]
    pub horizons: Vec<usize>,
    /// Grid rectangle x0,x1,y0,y1; defaults to the bounding box of R.
    #[arg(long, value_delimiter = ',', num_args = 4, allow_hyphen_values = true)]
    pub rect: Option<Vec<f64>>,
}

impl Default for EscapeArgs {
    fn default() -> Self {
        Self { nx: 1000, ny: 100, horizons: vec![100, 1000, 10_000], rect: None }
    }
}

#[derive(Args, Debug, Clone)]
pub struct HyperArgs {
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    /// Half-length of the stored orbit segment of each sample point.
    #[arg(long, default_value_t = 100)]
    pub n_check: usize,
    #[arg(long, default_value_t = 100)]
    pub n_max: usize,
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
}

impl Default for HyperArgs {
    fn default() -> Self {
        Self { count: 1000, n_check: 100, n_max: 100, epsilon: 0.05 }
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn locate(cfg: &Config, b: f64) -> Result<TangencyReport> {
    Ok(locate_a_star(b, cfg.orientation(), cfg.numerics.astar_bracket, &cfg.tangency())?)
}

/// Map at the configured parameters; also returns the tangency report
/// when `a` was given relative to `a*(b)`.
pub fn map_params(cfg: &Config) -> Result<(MapParams, Option<TangencyReport>)> {
    let (b, o) = (cfg.map.b, cfg.orientation());
    match (cfg.map.a, cfg.map.a_offset) {
        (_, Some(da)) => {
            let t = locate(cfg, b)?;
            Ok((MapParams::new(t.a_star + da, b, o)?, Some(t)))
        }
        (Some(a), None) => Ok((MapParams::new(a, b, o)?, None)),
        (None, None) => Err(usage("the map parameter a is not set (use --a, --a-offset or map.a in the config)")),
    }
}

/// Default escape grid: the bounding box of R, or the nominal box
/// `[-1, 1] x [-sqrt(b), sqrt(b)]` where R cannot be built.
pub fn escape_rect(p: &MapParams, rect: Option<&[f64]>) -> (Rect, &'static str) {
    if let Some(r) = rect {
        return (Rect::new(r[0], r[1], r[2], r[3]), "flag");
    }
    match build_region_r(p) {
        Ok(r) => (Rect::new(r.bbox[0], r.bbox[1], r.bbox[2], r.bbox[3]), "region_r"),
        Err(_) => (Rect::new(-1.0, 1.0, -p.sqrt_b(), p.sqrt_b()), "nominal"),
    }
}

pub fn dispatch(cmd: &Cmd, cfg: &Config, config_bytes: Option<&[u8]>, argv: &[String], threads: usize) -> Result<bool> {
    let mut out = RunDir::create(&cfg.run.output_dir)?;
    let pass = match cmd {
        Cmd::Iterate { point, n } => iterate(cfg, &mut out, *point, *n)?,
        Cmd::Lyap { point, n } => lyap(cfg, &mut out, *point, *n)?,
        Cmd::Orbits { max_period } => orbits(cfg, &mut out, *max_period)?,
        Cmd::Manifold { saddle, kind } => manifold(cfg, &mut out, *saddle, *kind)?,
        Cmd::Astar => astar(cfg, &mut out)?,
        Cmd::Region => region(cfg, &mut out)?,
        Cmd::Escape(a) => escape_cmd(cfg, &mut out, a)?,
        Cmd::Decompose { count, horizon } => decompose(cfg, &mut out, *count, *horizon)?,
        Cmd::Hyper(a) => hyper(cfg, &mut out, a)?,
        Cmd::AuditA { max_period } => audit_a(cfg, &mut out, *max_period)?,
        Cmd::AuditB => audit_b(cfg, &mut out)?,
        Cmd::Sweep(a) => crate::sweep::sweep(cfg, &mut out, a)?,
    };
    out.finish(cmd.name(), argv, cfg, config_bytes, threads)?;
    Ok(pass)
}

fn iterate(cfg: &Config, out: &mut RunDir, z: Point, n: usize) -> Result<bool> {
    let (p, _) = map_params(cfg)?;
    let seg = p.iterate(&z, n, &Rect::working());
    let mut t = Table::new(&["n", "x", "y"]);
    for (i, w) in seg.points.iter().enumerate() {
        t.row([i.to_string(), num(w.x), num(w.y)]);
    }
    out.csv("orbit.csv", t)?;
    if let Some(k) = seg.escaped_at {
        eprintln!("orbit left the working rectangle at step {k}");
    }
    Ok(true)
}

#[derive(Serialize)]
struct LyapOut {
    a: f64,
    b: f64,
    point: Point,
    #[serde(flatten)]
    estimate: hbl_core::lyapunov::ExponentEstimate,
}

fn lyap(cfg: &Config, out: &mut RunDir, z: Point, n: usize) -> Result<bool> {
    let (p, _) = map_params(cfg)?;
    let estimate = qr_exponents(&p, z, n)?;
    out.json("lyap.json", &LyapOut { a: p.a, b: p.b, point: z, estimate })?;
    Ok(true)
}

#[derive(Serialize)]
struct OrbitRecord {
    period: usize,
    points: Vec<Point>,
    multipliers: [Multiplier; 2],
    chi_s: Option<f64>,
    chi_u: Option<f64>,
    classification: Classification,
}

#[derive(Serialize)]
struct OrbitsOut {
    a: f64,
    b: f64,
    max_period: usize,
    failed_seeds: usize,
    seeds_tried: usize,
    orbits: Vec<OrbitRecord>,
    attractors: NoAttractorReport,
}

fn orbits(cfg: &Config, out: &mut RunDir, max_period: usize) -> Result<bool> {
    let (p, _) = map_params(cfg)?;
    let e = enumerate_periodic(&p, max_period, &SeedGrid::default())?;
    let mut t = Table::new(&["period", "count", "necklaces"]);
    for (i, c) in e.count_by_period(max_period).iter().enumerate() {
        t.row([(i + 1).to_string(), c.to_string(), necklace_count(i + 1).to_string()]);
    }
    let records = e
        .orbits
        .iter()
        .map(|o| {
            let x = orbit_exponents(o).ok();
            OrbitRecord {
                period: o.period,
                points: o.points.clone(),
                multipliers: o.multipliers,
                chi_s: x.map(|x| x.chi_s),
                chi_u: x.map(|x| x.chi_u),
                classification: o.classification,
            }
        })
        .collect();
    let attractors = escape::verify_no_attracting_periodic(&e.orbits);
    out.csv("orbit_counts.csv", t)?;
    out.json(
        "orbits.json",
        &OrbitsOut { a: p.a, b: p.b, max_period, failed_seeds: e.failed_seeds, seeds_tried: e.seeds_tried, orbits: records, attractors },
    )?;
    Ok(true)
}

fn manifold(cfg: &Config, out: &mut RunDir, saddle: Saddle, kind: Kind) -> Result<bool> {
    let (p, _) = map_params(cfg)?;
    let fs = fixed_points(&p)?;
    let s = match saddle {
        Saddle::P => &fs.p,
        Saddle::Q => &fs.q,
    };
    let (mk, gc) = match kind {
        Kind::Stable => (ManifoldKind::Stable, cfg.growth(true)),
        Kind::Unstable => (ManifoldKind::Unstable, cfg.growth(false)),
    };
    let c = grow_manifold(&p, s, mk, &gc)?;
    let mut t = Table::new(&["piece", "branch", "s", "x", "y"]);
    for (i, pc) in c.pieces.iter().enumerate() {
        for (z, s) in pc.points.iter().zip(&pc.arclength) {
            t.row([i.to_string(), pc.branch.to_string(), num(*s), num(z.x), num(z.y)]);
        }
    }
    out.csv("manifold.csv", t)?;
    Ok(true)
}

fn astar(cfg: &Config, out: &mut RunDir) -> Result<bool> {
    let t = locate(cfg, cfg.map.b)?;
    out.json("astar.json", &t)?;
    Ok(t.bracket_width <= cfg.numerics.tangency_tol)
}

#[derive(Serialize)]
struct RegionOut {
    a: f64,
    b: f64,
    bbox: [f64; 4],
    corners: [Point; 4],
    closure_gap: f64,
    vertices: usize,
}

fn region(cfg: &Config, out: &mut RunDir) -> Result<bool> {
    let (p, _) = map_params(cfg)?;
    let r = build_region_r(&p)?;
    let mut t = Table::new(&["x", "y"]);
    let mut ring = r.ring.clone();
    if ring.first() != ring.last() {
        ring.push(ring[0]);
    }
    for z in &ring {
        t.row([num(z.x), num(z.y)]);
    }
    out.csv("region_boundary.csv", t)?;
    out.json("region.json", &RegionOut { a: p.a, b: p.b, bbox: r.bbox, corners: r.corners, closure_gap: r.closure_gap(), vertices: ring.len() })?;
    Ok(true)
}

#[derive(Serialize)]
struct EscapeOut {
    #[serde(flatten)]
    report: EscapeReport,
    rect_source: &'static str,
}

pub fn escape_report(p: &MapParams, a: &EscapeArgs) -> Result<(EscapeReport, &'static str)> {
    if a.nx == 0 || a.ny == 0 {
        return Err(usage("escape grid needs nx, ny >= 1"));
    }
    let (rect, src) = escape_rect(p, a.rect.as_deref());
    Ok((escape::measure_escape(p, &EscapeGrid { nx: a.nx, ny: a.ny, rect }, &a.horizons), src))
}

fn escape_cmd(cfg: &Config, out: &mut RunDir, a: &EscapeArgs) -> Result<bool> {
    let (p, _) = map_params(cfg)?;
    let (report, rect_source) = escape_report(&p, a)?;
    out.write("escape.csv", report.csv().as_bytes())?;
    let pass = report.monotone;
    out.json("escape.json", &EscapeOut { report, rect_source })?;
    Ok(pass)
}

#[derive(Serialize)]
struct DecomposeSummary {
    orbits: usize,
    attempts: usize,
    cache_entries: usize,
    cache_skipped: usize,
    free_returns: usize,
    conduir_violations: usize,
    min_log_margin: Option<f64>,
    close_returns: usize,
    doubling_violations: usize,
    controlled: usize,
    max_bound_period: usize,
    errors: usize,
}

#[derive(Serialize)]
#[serde(untagged)]
enum DecompositionEntry {
    Ok(BoundFreeDecomposition),
    Err { x0: Point, error: String },
}

#[derive(Serialize)]
struct DecomposeOut {
    a: f64,
    b: f64,
    horizon: usize,
    constants: AnalysisConstants,
    summary: DecomposeSummary,
    decompositions: Vec<DecompositionEntry>,
}

pub struct Decomposed {
    pub results: Vec<(Point, hbl_core::Result<BoundFreeDecomposition>)>,
    pub attempts: usize,
    pub cache: CriticalCache,
}

/// Builds the critical cache on W^u(Q) and decomposes `count` sampled
/// bounded orbits, each starting at its first strip visit.
pub fn run_decompositions(cfg: &Config, p: &MapParams, k: &AnalysisConstants, count: usize, horizon: usize) -> Result<Decomposed> {
    let fs = fixed_points(p)?;
    let wu = grow_manifold(p, &fs.q, ManifoldKind::Unstable, &cfg.growth(false))?;
    let cache = CriticalCache::build(p, k, &wu, cfg.numerics.cache_order);
    let (orbits, attempts) = escape::bounded_orbits(p, horizon, count, Some(k.delta), cfg.run.seed)?;
    let dc = DecomposeConfig { k_max: cfg.numerics.k_max, p_max: cfg.numerics.p_max, ..DecomposeConfig::default() };
    let results = orbits.par_iter().map(|o| (o[0], decompose_orbit(p, k, &cache, o, &dc))).collect();
    Ok(Decomposed { results, attempts, cache })
}

fn decompose(cfg: &Config, out: &mut RunDir, count: usize, horizon: usize) -> Result<bool> {
    let (p, _) = map_params(cfg)?;
    let k = cfg.constants_for(&p)?;
    let d = run_decompositions(cfg, &p, &k, count, horizon)?;
    let mut s = DecomposeSummary {
        orbits: d.results.len(),
        attempts: d.attempts,
        cache_entries: d.cache.entries.len(),
        cache_skipped: d.cache.skipped,
        free_returns: 0,
        conduir_violations: 0,
        min_log_margin: None,
        close_returns: 0,
        doubling_violations: 0,
        controlled: 0,
        max_bound_period: 0,
        errors: 0,
    };
    let mut entries = Vec::with_capacity(d.results.len());
    for (x0, r) in d.results {
        match r {
            Ok(dec) => {
                s.free_returns += dec.returns.len();
                s.conduir_violations += dec.conduir_violations();
                s.close_returns += dec.close_returns.len();
                s.doubling_violations += dec.doubling_violations();
                s.controlled += (dec.verdict == Verdict::Controlled) as usize;
                for r in &dec.returns {
                    let m = r.log_w - r.log_bound;
                    s.min_log_margin = Some(s.min_log_margin.map_or(m, |x: f64| x.min(m)));
                    s.max_bound_period = s.max_bound_period.max(r.p);
                }
                entries.push(DecompositionEntry::Ok(dec));
            }
            Err(e) => {
                s.errors += 1;
                entries.push(DecompositionEntry::Err { x0, error: e.to_string() });
            }
        }
    }
    let pass = s.conduir_violations == 0 && s.errors == 0;
    out.json("decompose.json", &DecomposeOut { a: p.a, b: p.b, horizon, constants: k, summary: s, decompositions: entries })?;
    Ok(pass)
}

#[derive(Serialize)]
struct HyperOut {
    #[serde(flatten)]
    report: escape::HyperbolicityReport,
    pass: bool,
    zeta0: Point,
    n_check: usize,
    attempts: usize,
    caveat: String,
}

pub fn hyperbolicity(cfg: &Config, p: &MapParams, zeta0: Point, a: &HyperArgs) -> Result<(escape::HyperbolicityReport, escape::OmegaSample)> {
    let k = cfg.constants_for(p)?;
    let s = escape::sample_bounded(p, a.n_check, a.count, a.epsilon, zeta0, cfg.run.seed)?;
    let r = escape::verify_uniform_expansion(p, &k, &s, a.n_max)?;
    Ok((r, s))
}

fn hyper(cfg: &Config, out: &mut RunDir, a: &HyperArgs) -> Result<bool> {
    let (p, t) = map_params(cfg)?;
    let t = match t {
        Some(t) => t,
        None => locate(cfg, p.b)?,
    };
    let (report, s) = hyperbolicity(cfg, &p, t.tangency_point, a)?;
    let pass = report.pass();
    out.json("hyper.json", &HyperOut { report, pass, zeta0: t.tangency_point, n_check: s.n_check, attempts: s.attempts, caveat: s.caveat })?;
    Ok(pass)
}

#[derive(Serialize)]
struct AuditAOut {
    #[serde(flatten)]
    report: TheoremAReport,
    max_period: usize,
    attractors: NoAttractorReport,
    pass: bool,
}

pub fn theorem_a(p: &MapParams, max_period: usize) -> Result<(TheoremAReport, NoAttractorReport)> {
    let e = enumerate_periodic(p, max_period, &SeedGrid::default())?;
    Ok((audit_theorem_a(p, &e.orbits), escape::verify_no_attracting_periodic(&e.orbits)))
}

fn audit_a(cfg: &Config, out: &mut RunDir, max_period: usize) -> Result<bool> {
    let (p, _) = map_params(cfg)?;
    let (report, attractors) = theorem_a(&p, max_period)?;
    let pass = report.pass() && attractors.pass();
    out.json("audit_a.json", &AuditAOut { report, max_period, attractors, pass })?;
    Ok(pass)
}

#[derive(Serialize)]
struct AuditBOut {
    #[serde(flatten)]
    report: hbl_core::manifolds::theorem_b::TheoremBReport,
    pass: bool,
    tangency: TangencyReport,
}

fn audit_b(cfg: &Config, out: &mut RunDir) -> Result<bool> {
    if cfg.map.a.is_some() || cfg.map.a_offset.is_some_and(|d| d != 0.0) {
        eprintln!("audit-b always runs at a*(b); the configured a is ignored");
    }
    let t = locate(cfg, cfg.map.b)?;
    let p = MapParams::new(t.a_star, t.b, t.orientation)?;
    let ac = AuditBConfig {
        theta_transverse: cfg.numerics.theta_transverse,
        unstable: cfg.growth(false),
        stable: cfg.growth(true),
        ..AuditBConfig::default()
    };
    let report = audit_theorem_b(&p, &t, &ac).context("theorem B audit")?;
    let pass = report.pass() && report.zeta0_angle < report.theta_transverse;
    out.json("audit_b.json", &AuditBOut { report, pass, tangency: t })?;
    Ok(pass)
}
