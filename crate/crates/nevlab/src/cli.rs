//! The `nevlab` command line: argument parsing, config files and emitters.
//!
//! Exit codes: 0 all checks pass, 2 constructed but some check failed
//! (outputs are still written), 1 error, 64 usage error.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::analysis::{self, box_count_auto, boundary_length, simple_curve_check_refined, winding_index, Contour, CurveSample};
use crate::hedgehog::{self, accessible_boxcount, run_hedgehog, HedgehogConfig};
use crate::htree::{build_tree, check_geometry, dimension_estimate, endpoint_sample, HTreeConfig};
use crate::needle::{build_needle, verify_needle, NeedleGrid, NeedleParams};
use crate::ratmap::{Complex, RationalMap};
use crate::snake::{
    build_corrected, build_f, build_f0, calibrate_beta, injectivity_separation, pw_report, real_line_samples,
    scaling_csv, scaling_experiment, spike_check, verify_boxes, waypoints_radial, Boxes, SnakeGrid,
};
use crate::svg::{emit_svg, Polyline};
use crate::treemap::{run_treemap, TreeMapConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FAIL: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser, Serialize)]
#[command(name = "nevlab", version, about = "Build and verify explicit univalent rational maps")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Global {
    /// Seed for any randomised sampling.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Quadrature tolerance override.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Grid size override (meaning depends on the subcommand).
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Also write the full JSON report here.
    #[arg(long = "json-report", global = true)]
    pub json_report: Option<PathBuf>,
    /// Flat `key = value` file; flags on the command line win.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cmd {
    /// Build one needle and optionally verify its properties.
    Needle(NeedleArgs),
    /// Plant spines over a fat-Cantor family of arcs.
    Hedgehog(HedgehogArgs),
    /// Build the H-tree and estimate the dimension of its tips.
    Htree(HTreeArgs),
    /// Grow a needle along every H-tree segment.
    Treemap(TreeMapArgs),
    /// Build a snake map along radial waypoints and run the box checks.
    Snake(SnakeArgs),
    /// Boundary length against N for radial snakes.
    SnakeScaling(ScalingArgs),
    /// The pole-cancelling corrector and the corrected snake.
    Pw(PwArgs),
    /// Boundary checks for a saved rational map on the unit circle.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NeedleArgs {
    #[arg(long, default_value_t = 0.5)]
    pub b: f64,
    #[arg(long, default_value_t = 64)]
    pub nodes: usize,
    #[arg(long, default_value_t = 0.05)]
    pub eps: f64,
    #[arg(long)]
    pub verify: bool,
    /// Multiplier on the Simpson error budget.
    #[arg(long, default_value_t = 10.0)]
    pub budget: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct HedgehogArgs {
    #[arg(long, default_value_t = 16)]
    pub arcs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub c: f64,
    #[arg(long, default_value_t = 256)]
    pub nodes: usize,
    /// Box side exponent for the accessible box count.
    #[arg(long = "n-box", default_value_t = 8)]
    pub n_box: i32,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct HTreeArgs {
    #[arg(long, default_value_t = 0.01)]
    pub eps: f64,
    /// Target dimension; sets λ = 2^{−1/β} instead of 2^{−1/2} − ε.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, default_value_t = 8)]
    pub depth: usize,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TreeMapArgs {
    #[arg(long, default_value_t = 1.5)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.01)]
    pub eps: f64,
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    #[arg(long, default_value_t = 64)]
    pub nodes: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SnakeArgs {
    #[arg(long = "N", default_value_t = 64)]
    pub n: usize,
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    /// Halve β until the box and simple-curve checks pass.
    #[arg(long = "auto-beta")]
    pub auto_beta: bool,
    #[arg(long = "Q", default_value_t = 4.0)]
    pub q: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScalingArgs {
    #[arg(long = "Ns", value_delimiter = ',', default_value = "16,32,64,128,256,512")]
    pub ns: Vec<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    #[arg(long = "Q", default_value_t = 3.0)]
    pub q: f64,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PwArgs {
    #[arg(long = "Q", default_value_t = 4.0)]
    pub q: f64,
    #[arg(long, default_value_t = 40)]
    pub trunc: usize,
    /// Snake whose poles the corrector cancels.
    #[arg(long = "N", default_value_t = 16)]
    pub n: usize,
    #[arg(long, default_value_t = 0.25)]
    pub beta: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Check {
    Length,
    Winding,
    Simple,
    Boxdim,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "length,winding,simple,boxdim")]
    pub checks: Vec<Check>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// What a subcommand hands back: the report body, the verdict and a one-line
/// summary for stderr.
struct Outcome {
    result: Value,
    pass: bool,
    summary: String,
}

// ------------------------------------------------------------------ config

fn config_error(msg: String) -> clap::Error {
    Cli::command().error(clap::error::ErrorKind::InvalidValue, msg)
}

fn parse_config(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, val) = match line.find(|c: char| c == '=' || c.is_whitespace()) {
            Some(i) => (&line[..i], line[i + 1..].trim().trim_start_matches('=').trim()),
            None => (line, ""),
        };
        let key = key.trim().trim_start_matches("--");
        if key.is_empty() {
            return Err(format!("config line {}: missing key", k + 1));
        }
        out.push((key.to_string(), val.to_string()));
    }
    Ok(out)
}

/// Append `--key value` for every config entry not already given on the
/// command line. Keys belonging only to other subcommands are skipped.
fn merge_config(argv: Vec<OsString>) -> Result<Vec<OsString>, clap::Error> {
    let strs: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut path = None;
    for (i, a) in strs.iter().enumerate() {
        if a == "--config" {
            path = strs.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let text = std::fs::read_to_string(&path).map_err(|e| config_error(format!("cannot read config {path}: {e}")))?;
    let entries = parse_config(&text).map_err(config_error)?;

    let cmd = Cli::command();
    let sub = strs.iter().skip(1).find_map(|a| cmd.find_subcommand(a)).map(|s| s.get_name().to_string());
    // (long name, takes a value) for the chosen subcommand plus globals
    let mut known: Vec<(String, bool)> = Vec::new();
    let mut elsewhere: BTreeSet<String> = BTreeSet::new();
    for a in cmd.get_arguments() {
        if let Some(l) = a.get_long() {
            known.push((l.to_string(), a.get_action().takes_values()));
        }
    }
    for s in cmd.get_subcommands() {
        for a in s.get_arguments() {
            if let Some(l) = a.get_long() {
                if Some(s.get_name()) == sub.as_deref() {
                    known.push((l.to_string(), a.get_action().takes_values()));
                } else {
                    elsewhere.insert(l.to_string());
                }
            }
        }
    }

    let mut out = argv;
    for (key, val) in entries {
        if key == "config" {
            return Err(config_error("config files cannot include other config files".into()));
        }
        let Some(&(_, takes)) = known.iter().find(|(l, _)| *l == key) else {
            if elsewhere.contains(&key) {
                continue;
            }
            return Err(config_error(format!("unknown config key '{key}'")));
        };
        let flag = format!("--{key}");
        if strs.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}="))) {
            continue;
        }
        if takes {
            out.push(flag.into());
            out.push(val.into());
        } else {
            match val.as_str() {
                "" | "true" | "1" | "yes" => out.push(flag.into()),
                "false" | "0" | "no" => {}
                v => return Err(config_error(format!("config key '{key}': expected a boolean, got '{v}'"))),
            }
        }
    }
    Ok(out)
}

// ------------------------------------------------------------------ output

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    write_file(path, &s)
}

fn svg_out(path: &Path, lines: &[Polyline], stroke: f64) -> Result<()> {
    emit_svg(lines, stroke, path).with_context(|| format!("writing {}", path.display()))
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn circle_image(map: &RationalMap, n0: usize) -> Result<CurveSample> {
    Ok(hedgehog::boundary_curve(map, n0)?)
}

// ------------------------------------------------------------- subcommands

fn cmd_needle(a: &NeedleArgs, g: &Global) -> Result<Outcome> {
    let p = NeedleParams::new(a.b, a.nodes, a.eps)?;
    let f = build_needle(&p)?;
    if let Some(out) = &a.out {
        write_file(out, &(f.to_json_pretty() + "\n"))?;
    }
    let construction = json!({
        "degree": f.degree(),
        "height": p.height(),
        "min_pole_modulus": f.min_pole_modulus(),
    });
    let (verification, pass) = if a.verify {
        let grid = NeedleGrid::with_points(g.grid.unwrap_or(NeedleGrid::default().per_region));
        let rep = verify_needle(&f, &p, &grid, a.budget)?;
        let pass = rep.all_pass();
        (Some(rep), pass)
    } else {
        (None, true)
    };
    let summary = match &verification {
        Some(_) => format!("needle b={} N={}: {}", a.b, a.nodes, verdict(pass)),
        None => format!("needle b={} N={}: built (degree {})", a.b, a.nodes, f.degree()),
    };
    Ok(Outcome { result: json!({ "construction": construction, "verification": to_value(&verification)? }), pass, summary })
}

fn cmd_htree(a: &HTreeArgs, _g: &Global) -> Result<Outcome> {
    let cfg = match a.beta {
        Some(beta) => HTreeConfig::from_beta(beta, a.eps, a.depth)?,
        None => HTreeConfig::from_eps(a.eps, a.depth)?,
    };
    let tree = build_tree(&cfg)?;
    let tips = endpoint_sample(&tree);
    if let Some(csv) = &a.csv {
        let mut s = String::from("x,y\n");
        for p in &tips {
            s.push_str(&format!("{},{}\n", p.re, p.im));
        }
        write_file(csv, &s)?;
    }
    if let Some(svg) = &a.svg {
        let lines: Vec<Polyline> = tree
            .words()
            .iter()
            .filter_map(|w| tree.segment(w))
            .map(|s| Polyline::open(vec![s.base, s.tip()]))
            .collect();
        svg_out(svg, &lines, cfg.eps / 100.0)?;
    }
    let dim = dimension_estimate(&tree).ok();
    let geometry = if cfg.depth >= 2 { Some(check_geometry(&tree)?) } else { None };
    let summary = format!(
        "htree depth {}: {} tips, similarity dimension {:.4}, box-count slope {}",
        cfg.depth,
        tips.len(),
        cfg.similarity_dimension(),
        dim.as_ref().map(|d| format!("{:.4}", d.slope)).unwrap_or_else(|| "n/a".into())
    );
    let result = json!({
        "config": cfg,
        "endpoints": tips.len(),
        "similarity_dimension": cfg.similarity_dimension(),
        "dimension_estimate": to_value(&dim)?,
        "geometry": to_value(&geometry)?,
    });
    // the construction itself cannot fail; the report carries the checks
    Ok(Outcome { result, pass: true, summary })
}

fn cmd_hedgehog(a: &HedgehogArgs, g: &Global) -> Result<Outcome> {
    let base = HedgehogConfig::default();
    let cfg = HedgehogConfig { c: a.c, arcs: a.arcs, nodes: a.nodes, disc_grid: g.grid.unwrap_or(base.disc_grid), ..base };
    let run = run_hedgehog(&cfg)?;
    let boxes = accessible_boxcount(&run.state, &run.cantor, a.n_box)?;
    if let Some(out) = &a.out {
        write_file(out, &(run.state.phi.to_json_pretty() + "\n"))?;
    }
    if let Some(svg) = &a.svg {
        let curve = circle_image(&run.state.phi, cfg.boundary_samples)?;
        svg_out(svg, &[Polyline::closed(curve.points)], 0.004)?;
    }
    let pass = run.pass && boxes.meets_bound;
    let summary = format!(
        "hedgehog: {}/{} spines planted, box count {} vs bound {}: {}{}",
        run.state.spines.len(),
        cfg.arcs,
        boxes.m,
        boxes.bound,
        verdict(pass),
        run.error.as_ref().map(|e| format!(" ({e})")).unwrap_or_default()
    );
    Ok(Outcome { result: json!({ "run": to_value(&run)?, "accessible_boxcount": to_value(&boxes)? }), pass, summary })
}

fn cmd_treemap(a: &TreeMapArgs, g: &Global) -> Result<Outcome> {
    let mut cfg = TreeMapConfig::from_beta(a.beta, a.eps, a.depth)?;
    cfg.nodes = a.nodes;
    if let Some(n) = g.grid {
        cfg.grid = n;
    }
    if let Some(w) = cfg.warning() {
        if !g.quiet {
            eprintln!("warning: {w}");
        }
    }
    let run = run_treemap(&cfg)?;
    if let Some(out) = &a.out {
        write_file(out, &(run.state.phi.to_json_pretty() + "\n"))?;
    }
    if let Some(svg) = &a.svg {
        let curve = circle_image(&run.state.phi, cfg.boundary_samples)?;
        svg_out(svg, &[Polyline::closed(curve.points)], 0.002)?;
    }
    let summary = format!(
        "treemap depth {}: {}/{} words planted: {}{}",
        cfg.tree.depth,
        run.report.words_planted,
        run.report.words_total,
        verdict(run.pass),
        run.error.as_ref().map(|e| format!(" ({e})")).unwrap_or_default()
    );
    Ok(Outcome { result: to_value(&run)?, pass: run.pass, summary })
}

fn cmd_snake(a: &SnakeArgs, g: &Global) -> Result<Outcome> {
    let grid = SnakeGrid { per_window: g.grid.unwrap_or(SnakeGrid::default().per_window), ..SnakeGrid::default() };
    let (beta, halvings) = if a.auto_beta { calibrate_beta(&[a.n], a.beta, a.q, &grid)? } else { (a.beta, 0) };
    let wp = waypoints_radial(a.n, beta, a.q)?;
    let f = build_f(&wp)?;
    let boxes = Boxes::new(&wp);
    let rep = verify_boxes(&f, &wp, &boxes, &grid);
    let sep = injectivity_separation(&f, &wp, 64)?;
    if let Some(out) = &a.out {
        write_file(out, &half_plane_json(&f)?)?;
    }
    if let Some(svg) = &a.svg {
        let xs = real_line_samples(&wp, grid.per_window);
        let pts = xs.iter().map(|&x| f.eval(Complex::new(x, 0.0))).collect::<Result<Vec<_>, _>>()?;
        svg_out(svg, &[Polyline::closed(pts), Polyline::open(wp.w.clone())], 0.002)?;
    }
    let summary = format!("snake N={} Q={} beta={}: {}", a.n, a.q, beta, verdict(rep.pass));
    let result = json!({
        "beta": beta,
        "halvings": halvings,
        "degree": f.degree(),
        "waypoints": to_value(&wp)?,
        "boxes": to_value(&rep)?,
        "separation": to_value(&sep)?,
    });
    Ok(Outcome { result, pass: rep.pass, summary })
}

fn cmd_scaling(a: &ScalingArgs, g: &Global) -> Result<Outcome> {
    if a.ns.is_empty() {
        return Err(anyhow!("--Ns is empty"));
    }
    let rep = scaling_experiment(&a.ns, a.beta, a.q, g.tol.unwrap_or(1e-9))?;
    if let Some(csv) = &a.csv {
        write_file(csv, &scaling_csv(&rep))?;
    }
    let summary = format!("snake-scaling: slope {:.4}, bounds {}: {}", rep.slope, if rep.bounds_hold { "hold" } else { "violated" }, verdict(rep.pass));
    Ok(Outcome { result: to_value(&rep)?, pass: rep.pass, summary })
}

fn cmd_pw(a: &PwArgs, g: &Global) -> Result<Outcome> {
    let f0 = build_f0(a.q, a.trunc)?;
    let rep = pw_report(&f0, g.grid.unwrap_or(401))?;
    let wp = waypoints_radial(a.n, a.beta, a.q)?;
    let f = build_f(&wp)?;
    let fc = build_corrected(&f, &f0)?;
    let spikes = spike_check(&fc)?;
    if let Some(out) = &a.out {
        write_file(out, &(fc.to_json() + "\n"))?;
    }
    let interp = rep.interpolation.iter().all(|&e| e <= 1e-6);
    let doubling = rep.doubling_change < 1e-10;
    let pass = interp && doubling && spikes.pass;
    let summary = format!(
        "pw Q={} trunc={}: interpolation {}, doubling {:.2e}, spikes {}: {}",
        a.q,
        a.trunc,
        verdict(interp),
        rep.doubling_change,
        verdict(spikes.pass),
        verdict(pass)
    );
    let result = json!({
        "corrector": to_value(&rep)?,
        "interpolation_pass": interp,
        "doubling_pass": doubling,
        "spikes": to_value(&spikes)?,
    });
    Ok(Outcome { result, pass, summary })
}

/// Domain tag carried by map files. Snake maps live on the upper half-plane;
/// everything else on the disc. Untagged files are disc maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Domain {
    Disc,
    HalfPlane,
}

const HALF_PLANE_TAG: &str = "upper-half-plane";

fn half_plane_json(f: &RationalMap) -> Result<String> {
    let mut v = to_value(f)?;
    v.as_object_mut().expect("map serializes to an object").insert("domain".into(), json!(HALF_PLANE_TAG));
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

fn read_map(path: &Path) -> Result<(RationalMap, Domain)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut v: Value = serde_json::from_str(&text).with_context(|| format!("{} is not JSON", path.display()))?;
    let domain = match v.as_object_mut().and_then(|o| o.remove("domain")) {
        None => Domain::Disc,
        Some(Value::String(d)) if d == "disc" => Domain::Disc,
        Some(Value::String(d)) if d == HALF_PLANE_TAG => Domain::HalfPlane,
        Some(d) => return Err(anyhow!("{}: unknown domain {d}", path.display())),
    };
    let map = RationalMap::from_json(&v.to_string()).with_context(|| format!("{} is not a rational map", path.display()))?;
    Ok((map, domain))
}

/// Scale of the real-line parametrisation `x = ℓ·sinh s` and its reach:
/// `ℓ` a fraction of the nearest pole height, the reach far beyond the
/// farthest one so the tails are negligible.
fn line_scales(map: &RationalMap) -> Result<(f64, f64)> {
    let heights: Vec<f64> = map.terms.iter().map(|t| t.pole.im.abs()).collect();
    if map.affine1 != Complex::new(0.0, 0.0) {
        return Err(anyhow!("half-plane map has a linear term: the boundary image is unbounded"));
    }
    if heights.contains(&0.0) {
        return Err(anyhow!("half-plane map has a pole on the real line"));
    }
    let lo = heights.iter().copied().fold(1.0, f64::min) / 4.0;
    let hi = heights.iter().copied().fold(1.0, f64::max) * 1e6;
    Ok((lo, (hi / lo).asinh()))
}

/// Image of ℝ, closed through infinity, with the `s` parameters.
fn line_image(map: &RationalMap, n: usize) -> Result<CurveSample> {
    let (lo, reach) = line_scales(map)?;
    let n = n.max(64);
    let ss: Vec<f64> = (0..n).map(|k| -reach + 2.0 * reach * k as f64 / (n - 1) as f64).collect();
    let pts = ss.iter().map(|&s| map.eval(Complex::new(lo * s.sinh(), 0.0))).collect::<Result<Vec<_>, _>>()?;
    Ok(CurveSample::new(pts, true, ss)?)
}

/// `(1/2π)∫_ℝ |f′|`, the normalisation that matches the circle length.
fn line_length_auto(map: &RationalMap, tol: f64) -> Result<f64> {
    let (lo, reach) = line_scales(map)?;
    let g = |s: f64| -> Result<f64, analysis::AnalysisError> { Ok(map.deriv(Complex::new(lo * s.sinh(), 0.0))?.norm() * lo * s.cosh()) };
    let panels = (2.0 * reach / 0.25).ceil() as usize;
    let breaks: Vec<f64> = (0..=panels).map(|k| -reach + 2.0 * reach * k as f64 / panels as f64).collect();
    Ok(analysis::integrate_panels(&g, &breaks, tol, 40)? / std::f64::consts::TAU)
}

fn cmd_verify(a: &VerifyArgs, g: &Global) -> Result<Outcome> {
    let (map, domain) = read_map(&a.input)?;
    let checks: BTreeSet<Check> = a.checks.iter().copied().collect();
    let samples = g.grid.unwrap_or(1 << 13);
    let tol = g.tol.unwrap_or(1e-8);
    let (curve, centre) = match domain {
        Domain::Disc => (circle_image(&map, samples)?, map.eval(Complex::new(0.0, 0.0))?),
        Domain::HalfPlane => (line_image(&map, samples)?, map.eval(Complex::new(0.0, 1.0))?),
    };
    let mut result = serde_json::Map::new();
    result.insert("domain".into(), json!(if domain == Domain::Disc { "disc" } else { HALF_PLANE_TAG }));
    result.insert("degree".into(), json!(map.degree()));
    result.insert("boundary_samples".into(), json!(curve.points.len()));
    let mut pass = true;
    let mut parts = Vec::new();
    for c in &checks {
        match c {
            Check::Length => {
                let ell = match domain {
                    Domain::Disc => boundary_length(&map, &Contour::UnitCircle, tol)?,
                    Domain::HalfPlane => line_length_auto(&map, tol)?,
                };
                let ok = ell.is_finite();
                pass &= ok;
                parts.push(format!("length {ell:.6}"));
                result.insert("length".into(), json!({ "ell": ell, "pass": ok }));
            }
            Check::Winding => {
                let idx = winding_index(&curve, centre)?;
                pass &= idx == 1;
                parts.push(format!("winding {idx}"));
                result.insert("winding".into(), json!({ "about": [centre.re, centre.im], "index": idx, "pass": idx == 1 }));
            }
            Check::Simple => {
                let rep = match domain {
                    Domain::Disc => {
                        let eval = |t: f64| -> Result<Complex, analysis::AnalysisError> { Ok(map.eval(Complex::from_polar(1.0, t))?) };
                        simple_curve_check_refined(eval, &curve, std::f64::consts::TAU)?
                    }
                    Domain::HalfPlane => {
                        let (lo, reach) = line_scales(&map)?;
                        let eval = |s: f64| -> Result<Complex, analysis::AnalysisError> { Ok(map.eval(Complex::new(lo * s.sinh(), 0.0))?) };
                        // the closing segment runs through infinity; refine it outwards
                        let step = 2.0 * reach / (curve.points.len() - 1) as f64;
                        simple_curve_check_refined(eval, &curve, reach + step)?
                    }
                };
                pass &= rep.simple;
                parts.push(format!("simple {}", rep.simple));
                result.insert("simple".into(), to_value(&rep)?);
            }
            Check::Boxdim => {
                let rep = box_count_auto(&curve.points)?;
                parts.push(format!("box slope {:.4}", rep.slope));
                result.insert("boxdim".into(), to_value(&rep)?);
            }
        }
    }
    let summary = format!("verify {}: {}: {}", a.input.display(), parts.join(", "), verdict(pass));
    Ok(Outcome { result: Value::Object(result), pass, summary })
}

// --------------------------------------------------------------------- run

fn dispatch(cli: &Cli) -> Result<Outcome> {
    let g = &cli.global;
    match &cli.cmd {
        Cmd::Needle(a) => cmd_needle(a, g),
        Cmd::Hedgehog(a) => cmd_hedgehog(a, g),
        Cmd::Htree(a) => cmd_htree(a, g),
        Cmd::Treemap(a) => cmd_treemap(a, g),
        Cmd::Snake(a) => cmd_snake(a, g),
        Cmd::SnakeScaling(a) => cmd_scaling(a, g),
        Cmd::Pw(a) => cmd_pw(a, g),
        Cmd::Verify(a) => cmd_verify(a, g),
    }
}

fn report_path(cmd: &Cmd) -> Option<&PathBuf> {
    match cmd {
        Cmd::Needle(a) => a.report.as_ref(),
        Cmd::Hedgehog(a) => a.report.as_ref(),
        Cmd::Htree(a) => a.report.as_ref(),
        Cmd::Treemap(a) => a.report.as_ref(),
        Cmd::Snake(a) => a.report.as_ref(),
        Cmd::SnakeScaling(a) => a.report.as_ref(),
        Cmd::Pw(a) => a.report.as_ref(),
        Cmd::Verify(a) => a.report.as_ref(),
    }
}

fn execute(cli: &Cli) -> Result<bool> {
    let outcome = dispatch(cli)?;
    let doc = json!({
        "config": to_value(cli)?,
        "pass": outcome.pass,
        "result": outcome.result,
    });
    for p in [report_path(&cli.cmd), cli.global.json_report.as_ref()].into_iter().flatten() {
        write_json(p, &doc)?;
    }
    if !cli.global.quiet {
        eprintln!("{}", outcome.summary);
    }
    Ok(outcome.pass)
}

/// Parse `argv` (including the program name), run the subcommand and return
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let parsed = merge_config(argv).and_then(Cli::try_parse_from);
    let cli = match parsed {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind::{DisplayHelp, DisplayVersion};
            let _ = e.print();
            return if matches!(e.kind(), DisplayHelp | DisplayVersion) { EXIT_OK } else { EXIT_USAGE };
        }
    };
    match execute(&cli) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_FAIL,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_lines() {
        let v = parse_config("# c\nseed = 7\n--b 0.3\nverify\nNs=16,32 # tail\n").unwrap();
        assert_eq!(
            v,
            vec![
                ("seed".into(), "7".into()),
                ("b".into(), "0.3".into()),
                ("verify".into(), "".into()),
                ("Ns".into(), "16,32".into())
            ]
        );
    }

    #[test]
    fn usage_errors() {
        assert_eq!(run(["nevlab", "needle", "--bogus"]), EXIT_USAGE);
        assert_eq!(run(["nevlab"]), EXIT_USAGE);
        assert_eq!(run(["nevlab", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["nevlab", "--help"]), EXIT_OK);
        Cli::command().debug_assert();
    }
}
