//! One PASS/FAIL line per acceptance criterion. Runs as a plain binary so
//! the lines are always printed; exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::Matrix2;
use rand::Rng;
use rayon::prelude::*;
use serde_json::Value;

use hbl_core::critical::{check_outside_expansion, AnalysisConstants};
use hbl_core::escape::{symbolic_segment, verify_no_attracting_periodic};
use hbl_core::lyapunov::qr_exponents_cycle;
use hbl_core::manifolds::region::{build_region_r, RegionR};
use hbl_core::manifolds::tangency::{locate_a_star, TangencyConfig, TangencyKind};
use hbl_core::periodic::{enumerate_periodic, fixed_points, PeriodicOrbit, SeedGrid};
use hbl_core::{MapParams, Orientation, Point};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

const A_STAR_1E3: f64 = 2.0019972324371333;
const ESCAPE_GOLDEN: [f64; 3] = [0.43783, 0.00013, 0.0];

fn workdir() -> PathBuf {
    let d = std::env::temp_dir().join(format!("hbl-acceptance-{}", std::process::id()));
    fs::create_dir_all(&d).unwrap();
    d
}

/// Runs the binary in `cwd` with `-o run`; returns exit code and run dir.
fn hbl(cwd: &Path, args: &[&str], threads: Option<usize>) -> (i32, PathBuf, String) {
    fs::create_dir_all(cwd).unwrap();
    let mut c = Command::new(env!("CARGO_BIN_EXE_hbl"));
    c.current_dir(cwd).args(args).args(["-o", "run"]);
    match threads {
        Some(n) => c.env("HBL_THREADS", n.to_string()),
        None => c.env_remove("HBL_THREADS"),
    };
    let o = c.output().expect("spawning hbl");
    (o.status.code().unwrap_or(-1), cwd.join("run"), String::from_utf8_lossy(&o.stderr).into_owned())
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn map_correctness() -> Outcome {
    let t = Instant::now();
    let mut rng = hbl_core::rng::stream(2024, 0);
    let (mut round, mut jac, mut det) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100_000 {
        let a = rng.gen_range(1.5..2.5);
        let b = 10f64.powf(rng.gen_range(-4.0..-1.5));
        let o = if rng.gen_bool(0.5) { Orientation::Plus } else { Orientation::Minus };
        let p = MapParams::new(a, b, o).unwrap();
        let z = Point::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
        let w = p.apply_inverse(&p.apply(&z).unwrap()).unwrap();
        round = round.max((w.x - z.x).abs().max((w.y - z.y).abs()));
        let j = p.jacobian(&z);
        let h = 1e-6;
        let d = |dx: f64, dy: f64| {
            let (u, v) = (p.step(&Point::new(z.x + dx, z.y + dy)), p.step(&Point::new(z.x - dx, z.y - dy)));
            ((u.x - v.x) / (2.0 * h), (u.y - v.y) / (2.0 * h))
        };
        let (cx, cy) = (d(h, 0.0), d(0.0, h));
        let num = [[cx.0, cy.0], [cx.1, cy.1]];
        for r in 0..2 {
            for c in 0..2 {
                jac = jac.max((num[r][c] - j.m[r][c]).abs());
            }
        }
        det = det.max((j.det.abs() - b).abs());
    }
    let el = t.elapsed();
    ensure!(round < 1e-12, "round-trip error {round:e}");
    ensure!(jac < 1e-6, "jacobian error {jac:e}");
    ensure!(det < 1e-12, "determinant error {det:e}");
    ensure!(el < Duration::from_secs(5), "runtime {}", secs(el));
    Ok(format!("1e5 points: round-trip {round:.1e}, jacobian {jac:.1e}, det {det:.1e}, {}", secs(el)))
}

fn fixed_points_oracle() -> Outcome {
    let mut worst = 0.0f64;
    for o in [Orientation::Plus, Orientation::Minus] {
        let (a, b) = (2.0, 1e-4);
        let p = MapParams::new(a, b, o).unwrap();
        let fs = fixed_points(&p).map_err(|e| e.to_string())?;
        // x = 1 - a x^2 - sigma b x, y = sigma sqrt(b) x
        let s = p.sigma();
        let bb = 1.0 + s * b;
        let disc = (bb * bb + 4.0 * a).sqrt();
        let roots = [(-bb + disc) / (2.0 * a), (-bb - disc) / (2.0 * a)];
        for (orbit, x) in [(&fs.p, roots[0]), (&fs.q, roots[1])] {
            let z = orbit.points[0];
            let y = s * b.sqrt() * x;
            worst = worst.max((z.x - x).abs()).max((z.y - y).abs());
            let m = Matrix2::new(-2.0 * a * x, -b.sqrt(), s * b.sqrt(), 0.0);
            let mut ev: Vec<f64> = m.complex_eigenvalues().iter().map(|c| c.re).collect();
            ev.sort_by(|u, v| v.abs().total_cmp(&u.abs()));
            for (k, e) in ev.iter().enumerate() {
                let mu = orbit.multipliers[k];
                worst = worst.max((mu.re - e).abs()).max(mu.im.abs());
            }
            let prod = orbit.multipliers[0].re * orbit.multipliers[1].re;
            ensure!((prod - s * b).abs() < 1e-10, "multiplier product {prod} vs {}", s * b);
        }
    }
    ensure!(worst < 1e-10, "max deviation {worst:e}");
    Ok(format!("P, Q and multipliers at (2, 1e-4), both orientations: max deviation {worst:.1e}"))
}

/// Number of primitive binary necklaces of length n.
fn necklaces(n: usize) -> usize {
    fn mobius(mut n: usize) -> i64 {
        let mut m = 1;
        let mut d = 2;
        while d * d <= n {
            if n % d == 0 {
                n /= d;
                if n % d == 0 {
                    return 0;
                }
                m = -m;
            }
            d += 1;
        }
        if n > 1 {
            m = -m;
        }
        m
    }
    let s: i64 = (1..=n).filter(|d| n % d == 0).map(|d| mobius(n / d) * (1i64 << d)).sum();
    (s / n as i64) as usize
}

fn census() -> Outcome {
    let t = Instant::now();
    let p = MapParams::new(2.2, 1e-3, Orientation::Plus).unwrap();
    let e = enumerate_periodic(&p, 6, &SeedGrid::default()).map_err(|e| e.to_string())?;
    let el = t.elapsed();
    let counts = e.count_by_period(6);
    let want: Vec<usize> = (1..=6).map(necklaces).collect();
    ensure!(want == [2, 1, 2, 3, 6, 9], "necklace oracle {want:?}");
    ensure!(counts == want, "counts {counts:?}, expected {want:?}");
    ensure!(el < Duration::from_secs(60), "runtime {}", secs(el));
    Ok(format!("counts {counts:?} at (2.2, 1e-3), {}", secs(el)))
}

fn exponent_oracle() -> Outcome {
    let mut orbits: Vec<(MapParams, PeriodicOrbit)> = Vec::new();
    for (a, b, n) in [(2.2, 1e-3, 8), (A_STAR_1E3, 1e-3, 10)] {
        let p = MapParams::new(a, b, Orientation::Plus).unwrap();
        let e = enumerate_periodic(&p, n, &SeedGrid::default()).map_err(|e| e.to_string())?;
        orbits.extend(e.orbits.into_iter().map(|o| (p.clone(), o)));
    }
    let mut worst = 0.0f64;
    for (p, o) in &orbits {
        let mut m = Matrix2::identity();
        for z in &o.points {
            let j = p.jacobian(z);
            m = Matrix2::new(j.m[0][0], j.m[0][1], j.m[1][0], j.m[1][1]) * m;
        }
        let mut mods: Vec<f64> = m.complex_eigenvalues().iter().map(|c| c.norm()).collect();
        mods.sort_by(|u, v| v.total_cmp(u));
        let n = o.period as f64;
        // the small multiplier is b^n / large; its product form is exact
        let oracle_u = mods[0].ln() / n;
        let oracle_s = p.b.ln() - oracle_u;
        let q = qr_exponents_cycle(p, o, 50);
        worst = worst.max((q.chi_u - oracle_u).abs()).max((q.chi_s - oracle_s).abs());
    }
    ensure!(worst < 1e-8, "max deviation {worst:e} over {} orbits", orbits.len());
    Ok(format!("{} orbits: max |QR - log|mult|/period| = {worst:.1e}", orbits.len()))
}

fn theorem_a(dir: &Path) -> Outcome {
    let mut parts = Vec::new();
    for b in ["1e-2", "1e-3"] {
        let t = Instant::now();
        let (code, run, err) = hbl(&dir.join(format!("a{b}")), &["--b", b, "--a-offset", "0", "audit-a", "--max-period", "12"], None);
        let el = t.elapsed();
        ensure!(code == 0, "b={b}: exit {code}: {err}");
        let r = json(&run.join("audit_a.json"));
        let n = r["n_orbits"].as_u64().unwrap();
        let v = r["violations"].as_array().unwrap().len();
        let expected: usize = (1..=12).map(necklaces).sum();
        ensure!(v == 0, "b={b}: {v} violations");
        ensure!(n as usize == expected, "b={b}: {n} saddle orbits, expected {expected}");
        ensure!(r["min_chi_u"].as_f64().unwrap() > 0.25 * 2f64.ln(), "b={b}: chi_u bar");
        ensure!(r["max_chi_s"].as_f64().unwrap() < b.parse::<f64>().unwrap().ln() / 3.0, "b={b}: chi_s bar");
        ensure!(el < Duration::from_secs(120), "b={b}: runtime {}", secs(el));
        parts.push(format!("b={b}: {n} orbits, min chi_u {:.4}, max chi_s {:.3}, {}", r["min_chi_u"].as_f64().unwrap(), r["max_chi_s"].as_f64().unwrap(), secs(el)));
    }
    Ok(parts.join("; "))
}

fn tangency() -> Outcome {
    let mut gaps = Vec::new();
    let mut parts = Vec::new();
    for b in [1e-2, 1e-3, 1e-4] {
        let t = Instant::now();
        let r = locate_a_star(b, Orientation::Plus, [1.7, 2.4], &TangencyConfig::default()).map_err(|e| format!("b={b}: {e}"))?;
        let el = t.elapsed();
        ensure!(r.bracket_width <= 1e-6, "b={b}: width {:e}", r.bracket_width);
        ensure!(r.tangency_kind == TangencyKind::Homoclinic, "b={b}: kind {:?}", r.tangency_kind);
        ensure!(el < Duration::from_secs(120), "b={b}: runtime {}", secs(el));
        gaps.push((r.a_star - 2.0).abs());
        parts.push(format!("a*({b:e}) = {:.10}", r.a_star));
    }
    ensure!(gaps.windows(2).all(|w| w[1] < w[0]), "|a* - 2| not decreasing: {gaps:?}");
    let r = locate_a_star(1e-3, Orientation::Minus, [1.7, 2.4], &TangencyConfig::default()).map_err(|e| e.to_string())?;
    ensure!(r.tangency_kind == TangencyKind::Heteroclinic, "orientation -1: kind {:?}", r.tangency_kind);
    ensure!(r.bracket_width <= 1e-6, "orientation -1: width {:e}", r.bracket_width);
    Ok(format!("{}; orientation -1 heteroclinic", parts.join(", ")))
}

fn in_r(r: &RegionR, z: &Point) -> bool {
    r.contains(z) || r.boundary_distance(z) < 1e-6
}

fn outside_expansion() -> Outcome {
    const SAMPLES: usize = 100_000;
    let p = MapParams::new(A_STAR_1E3, 1e-3, Orientation::Plus).unwrap();
    let k = AnalysisConstants::for_map(&p, 0.1).map_err(|e| e.to_string())?;
    let region = build_region_r(&p).map_err(|e| e.to_string())?;
    let strip = k.critical_region();
    let sb = p.sqrt_b();
    // (pass, slope ok) per admissible (point, n), in segment order
    let per_segment = |i: u64| -> Result<Vec<(bool, bool)>, String> {
        let seg = symbolic_segment(&p, 100, 77, i);
        let mut out = Vec::new();
        for (start, z) in seg.iter().enumerate() {
            let run = std::iter::successors(Some(*z), |w| Some(p.step(w)))
                .take(51)
                .take_while(|w| !strip.in_strip(w) && in_r(&region, w))
                .count();
            for n in 1..=run.min(50) {
                let v = (1.0, sb * (2.0 * ((start + n) % 9) as f64 / 8.0 - 1.0));
                let e = check_outside_expansion(&p, &k, z, v, n, &|w| in_r(&region, w)).map_err(|e| e.to_string())?;
                out.push((e.log_growth >= e.log_bound, e.slope_out <= sb));
            }
        }
        Ok(out)
    };
    let mut samples: Vec<(bool, bool)> = Vec::with_capacity(SAMPLES);
    let mut next = 0u64;
    while samples.len() < SAMPLES {
        let batch: Vec<Result<Vec<(bool, bool)>, String>> = (next..next + 64).into_par_iter().map(per_segment).collect();
        next += 64;
        for b in batch {
            samples.extend(b?);
        }
    }
    samples.truncate(SAMPLES);
    let growth = samples.iter().filter(|s| !s.0).count();
    let slope = samples.iter().filter(|s| !s.1).count();
    ensure!(growth == 0 && slope == 0, "{growth} growth and {slope} slope violations in {SAMPLES} samples");
    Ok(format!("{SAMPLES} samples from {next} orbit segments: 0 growth, 0 slope violations"))
}

fn conduir(dir: &Path) -> Outcome {
    let (code, run, err) = hbl(&dir.join("decompose"), &["--a-offset", "0", "decompose", "--count", "1000", "--horizon", "1000"], None);
    ensure!(code <= 1, "exit {code}: {err}");
    let s = &json(&run.join("decompose.json"))["summary"];
    let v = s["conduir_violations"].as_u64().unwrap();
    let e = s["errors"].as_u64().unwrap();
    ensure!(s["orbits"].as_u64().unwrap() == 1000, "orbits {}", s["orbits"]);
    ensure!(v == 0 && e == 0, "{v} violations, {e} errors");
    ensure!(code == 0, "exit {code}");
    Ok(format!(
        "1000 orbits, {} free returns, 0 violations (min log margin {:.3}); close returns {}, doubling violations {} (diagnostic)",
        s["free_returns"], s["min_log_margin"].as_f64().unwrap_or(f64::NAN), s["close_returns"], s["doubling_violations"]
    ))
}

fn theorem_b(dir: &Path) -> Outcome {
    let (code, run, err) = hbl(&dir.join("audit-b"), &["--b", "1e-3", "audit-b"], None);
    ensure!(code <= 1, "exit {code}: {err}");
    let r = json(&run.join("audit_b.json"));
    let theta = r["theta_transverse"].as_f64().unwrap();
    let v = r["violations"].as_array().unwrap().len();
    let angle = r["zeta0_angle"].as_f64().unwrap();
    ensure!(v == 0, "{v} non-transverse intersections");
    ensure!(angle < theta, "angle at zeta0 {angle:e} is not below {theta:e}");
    ensure!(r["n_intersections"].as_u64().unwrap() > 0, "no intersections detected");
    ensure!(code == 0, "exit {code}");
    Ok(format!(
        "{} intersections transverse, min angle {:.2e}; {} excluded near the tangency orbit; zeta0 angle {angle:.1e}",
        r["n_intersections"], r["min_angle"].as_f64().unwrap_or(f64::NAN), r["n_excluded"]
    ))
}

fn hyperbolicity(dir: &Path) -> Outcome {
    let (code, run, err) = hbl(&dir.join("hyper"), &["--b", "1e-3", "--a-offset", "0.1", "hyper", "--count", "1000", "--n-max", "100"], None);
    ensure!(code <= 1, "exit {code}: {err}");
    let r = json(&run.join("hyper.json"));
    let lam = r["lambda_star"].as_f64().unwrap();
    ensure!(r["pass"] == true && code == 0, "verify_uniform_expansion failed: {} failures", r["failures"].as_array().unwrap().len());
    ensure!(lam >= 1.05, "lambda* = {lam}");
    ensure!(r["tested"].as_u64().unwrap() == 1000, "tested {}", r["tested"]);
    let p = MapParams::new(0.5, 0.05, Orientation::Plus).unwrap();
    let e = enumerate_periodic(&p, 1, &SeedGrid::default()).map_err(|e| e.to_string())?;
    let att = verify_no_attracting_periodic(&e.orbits);
    ensure!(!att.pass() && att.violations.iter().any(|v| v.period == 1), "negative control: no attracting fixed point flagged");
    Ok(format!("lambda* = {lam:.4}, N* = {}, p_sup {}; control (0.5, 0.05) flags an attracting fixed point", r["n_star"], r["p_sup_observed"]))
}

fn escape(dir: &Path) -> Outcome {
    let (code, run, err) = hbl(&dir.join("escape"), &["--b", "1e-3", "--a-offset", "0", "escape", "--nx", "1000", "--ny", "100", "--horizons", "100,1000,10000"], None);
    ensure!(code <= 1, "exit {code}: {err}");
    let r = json(&run.join("escape.json"));
    let f: Vec<f64> = r["fraction_bounded"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    ensure!(f.windows(2).all(|w| w[1] <= w[0]), "not non-increasing: {f:?}");
    ensure!(f.iter().zip(ESCAPE_GOLDEN).all(|(x, g)| (x - g).abs() < 1e-12), "fractions {f:?}, golden {ESCAPE_GOLDEN:?}");
    ensure!(code == 0, "exit {code}");
    Ok(format!("fractions {f:?} at N = 1e2, 1e3, 1e4 match the golden values"))
}

fn outputs(run: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(run)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "manifest.json")
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect()
}

fn reproducibility(dir: &Path) -> Outcome {
    let cases: [(&str, &[&str]); 3] = [
        ("escape", &["--a-offset", "0", "--seed", "5", "escape", "--nx", "400", "--ny", "40"]),
        ("hyper", &["--a-offset", "0.1", "--seed", "5", "hyper", "--count", "200"]),
        ("decompose", &["--a-offset", "0", "--seed", "5", "decompose", "--count", "100", "--horizon", "300"]),
    ];
    let mut files = 0;
    for (name, args) in cases {
        let mut seen: Option<(BTreeMap<String, Vec<u8>>, Value)> = None;
        for (j, threads) in [1, 8, 8].into_iter().enumerate() {
            let (code, run, err) = hbl(&dir.join(format!("repro-{name}-{j}")), args, Some(threads));
            ensure!(code <= 1, "{name}: exit {code}: {err}");
            let mut m = json(&run.join("manifest.json"));
            ensure!(m["environment"]["threads"] == threads, "{name}: manifest threads {}", m["environment"]["threads"]);
            m.as_object_mut().unwrap().remove("environment");
            let out = outputs(&run);
            match &seen {
                None => {
                    files += out.len();
                    seen = Some((out, m));
                }
                Some((o0, m0)) => {
                    ensure!(&out == o0, "{name}: outputs differ between runs (threads {threads})");
                    ensure!(&m == m0, "{name}: manifests differ outside the environment block");
                }
            }
        }
    }
    Ok(format!("{files} output files byte-identical across 1, 8, 8 threads"))
}

fn main() {
    let dir = workdir();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("map correctness", Box::new(map_correctness)),
        ("fixed points and multipliers", Box::new(fixed_points_oracle)),
        ("horseshoe census", Box::new(census)),
        ("exponent oracle", Box::new(exponent_oracle)),
        ("exponent bars on saddle orbits", Box::new(|| theorem_a(&dir))),
        ("tangency location", Box::new(tangency)),
        ("expansion outside the critical strip", Box::new(outside_expansion)),
        ("free-return growth", Box::new(|| conduir(&dir))),
        ("transversality away from the tangency", Box::new(|| theorem_b(&dir))),
        ("hyperbolicity above the bifurcation", Box::new(|| hyperbolicity(&dir))),
        ("escape monotonicity and magnitude", Box::new(|| escape(&dir))),
        ("reproducibility", Box::new(|| reproducibility(&dir))),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        match r {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    let _ = fs::remove_dir_all(&dir);
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
