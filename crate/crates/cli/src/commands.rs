use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use serde_json::json;

use scissor_qkd::keyrate::{gaussianity_metrics, key_rate_from_states, plob_bound};
use scissor_qkd::optimizer::{
    best_of, extract_regions, find_range, grid_search, tradeoff_report, GridConfig, GridSummary,
    RangeResult, RangeSettings, SweepOptions,
};
use scissor_qkd::oracle::battery::{default_battery, load_battery, run_battery};
use scissor_qkd::scissor::{fidelity, homodyne_pdf_parts, joint_state, reduced_states};
use scissor_qkd::states::{equivalent_noises, t_c_from_distance};
use scissor_qkd::ProtocolParams;

use crate::output::{emit, fmt_num, render, Cell, Format, Provenance, Table};

/// What a command reports besides its output files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    ValidationFailed,
    NotConverged,
}

fn tolerances(settings: &RangeSettings) -> serde_json::Value {
    json!({ "tol": settings.tol, "resolution_km": settings.resolution_km })
}

fn sample(lo: f64, hi: f64, step: f64, what: &str) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        bail!("{what}: need finite bounds with max >= min and step > 0");
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + i as f64 * step).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct KeyrateConfig {
    pub lambda_a: f64,
    pub t_s: f64,
    pub eps: f64,
    pub beta: f64,
    pub k_min: f64,
    pub tol: f64,
    pub l_min: f64,
    pub l_max: f64,
    pub l_step: f64,
}

pub fn keyrate(cfg: &KeyrateConfig, format: Format, out: Option<&Path>) -> Result<Outcome> {
    if !(cfg.l_min > 0.0) {
        bail!("--l-min must be > 0 km (the PLOB bound diverges at zero distance)");
    }
    let base = ProtocolParams::from_link(cfg.lambda_a, cfg.t_s, cfg.eps, cfg.l_min, cfg.beta)?;
    let mut prov = Provenance::new(
        "keyrate",
        serde_json::to_value(cfg)?,
        cfg.beta,
        cfg.k_min,
        json!({ "tol": cfg.tol }),
    );
    let mut table = Table::new(&["L_km", "K", "K_PLOB", "F", "P_Q", "gaussianity_ratio"]);
    for l in sample(cfg.l_min, cfg.l_max, cfg.l_step, "distance grid")? {
        let p = base.with_distance(l)?;
        let joint = joint_state(&p, cfg.tol)?;
        let reduced = reduced_states(&joint, &p);
        let k = key_rate_from_states(&p, &joint, &reduced)?;
        prov.track_cutoff(joint.cutoff);
        table.push(vec![
            l.into(),
            k.k.into(),
            plob_bound(p.t_c())?.into(),
            fidelity(&reduced).into(),
            joint.p_q.into(),
            gaussianity_metrics(&p).ratio.into(),
        ]);
    }
    emit(&render(&table, &prov, format), out)?;
    Ok(Outcome::Success)
}

#[derive(Debug, Clone, Serialize)]
pub struct PdfConfig {
    pub lambda_a: f64,
    pub t_s: f64,
    pub eps: f64,
    pub distance_km: f64,
    pub tol: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
}

pub fn pdf(cfg: &PdfConfig, format: Format, out: Option<&Path>) -> Result<Outcome> {
    if cfg.points < 2 || !(cfg.x_max > cfg.x_min) {
        bail!("pdf grid needs --points >= 2 and --x-max > --x-min");
    }
    let p = ProtocolParams::from_link(cfg.lambda_a, cfg.t_s, cfg.eps, cfg.distance_km, 1.0)?;
    let joint = joint_state(&p, cfg.tol)?;
    let reduced = reduced_states(&joint, &p);
    let mut prov = Provenance::new(
        "pdf",
        serde_json::to_value(cfg)?,
        1.0,
        0.0,
        json!({ "tol": cfg.tol }),
    );
    prov.track_cutoff(joint.cutoff);
    let mut table = Table::new(&["x", "f", "gaussian_part", "nongaussian_part"]);
    let dx = (cfg.x_max - cfg.x_min) / (cfg.points - 1) as f64;
    for i in 0..cfg.points {
        let x = if i + 1 == cfg.points {
            cfg.x_max
        } else {
            cfg.x_min + i as f64 * dx
        };
        let (g, ng) = homodyne_pdf_parts(x, &reduced);
        table.push(vec![x.into(), (g + ng).into(), g.into(), ng.into()]);
    }
    emit(&render(&table, &prov, format), out)?;
    Ok(Outcome::Success)
}

/// Only `grid` is embedded in output headers; the rest changes how a run
/// executes, not what it produces.
#[derive(Debug, Clone, Serialize)]
pub struct GridRunConfig {
    pub grid: GridConfig,
    #[serde(skip)]
    pub workers: Option<usize>,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub resume: bool,
}

const GRID_COLUMNS: [&str; 8] = [
    "lambda_a",
    "t_s",
    "range_km",
    "fidelity",
    "k_at_range",
    "converged",
    "crossings",
    "bisection_steps",
];

fn grid_table(results: &[RangeResult]) -> Table {
    let mut t = Table::new(&GRID_COLUMNS);
    for r in results {
        t.push(vec![
            r.lambda_a.into(),
            r.t_s.into(),
            r.range_km.into(),
            r.fidelity_at_range.into(),
            r.k_at_range.into(),
            r.converged.into(),
            r.crossings.into(),
            r.bisection_steps.into(),
        ]);
    }
    t
}

fn point_table(points: &[(f64, f64)]) -> Table {
    let mut t = Table::new(&["lambda_a", "t_s"]);
    for &(l, s) in points {
        t.push(vec![l.into(), s.into()]);
    }
    t
}

fn describe(r: &RangeResult) -> String {
    format!(
        "lambda_a={} t_s={} range_km={} F={} K={}",
        r.lambda_a,
        r.t_s,
        fmt_num(r.range_km),
        fmt_num(r.fidelity_at_range),
        fmt_num(r.k_at_range)
    )
}

fn sweep(cfg: &GridRunConfig, checkpoint: bool) -> Result<GridSummary> {
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let options = SweepOptions {
        workers: cfg.workers,
        checkpoint: checkpoint.then(|| cfg.out.join("checkpoint.json")),
        resume: cfg.resume,
    };
    Ok(grid_search(&cfg.grid, &options)?)
}

pub fn optimize(cfg: &GridRunConfig) -> Result<Outcome> {
    let summary = sweep(cfg, true)?;
    let s = &cfg.grid.settings;
    let prov = Provenance::new(
        "optimize",
        serde_json::to_value(cfg)?,
        s.beta,
        s.k_min,
        tolerances(s),
    );
    emit(
        &grid_table(&summary.results).to_csv(&prov),
        Some(&cfg.out.join("grid.csv")),
    )?;
    let report = json!({
        "schema_version": crate::output::SCHEMA_VERSION,
        "provenance": prov,
        "points": summary.results.len(),
        "best": summary.best,
        "unconverged": summary.unconverged.iter().map(|&i| summary.results[i]).collect::<Vec<_>>(),
    });
    emit(
        &(serde_json::to_string_pretty(&report)? + "\n"),
        Some(&cfg.out.join("summary.json")),
    )?;
    match &summary.best {
        Some(b) => println!("best {}", describe(b)),
        None => println!("best none"),
    }
    if summary.unconverged.is_empty() {
        Ok(Outcome::Success)
    } else {
        eprintln!(
            "{} grid point(s) did not converge",
            summary.unconverged.len()
        );
        Ok(Outcome::NotConverged)
    }
}

/// Reads the `grid.csv` written by `optimize`.
pub fn read_grid_csv(path: &Path) -> Result<Vec<RangeResult>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#'));
    let (_, header) = lines
        .next()
        .ok_or_else(|| anyhow!("{}: empty grid file", path.display()))?;
    if header.split(',').ne(GRID_COLUMNS.iter().copied()) {
        bail!("{}: unexpected header `{header}`", path.display());
    }
    lines
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != GRID_COLUMNS.len() {
                bail!(
                    "{}:{}: expected {} fields",
                    path.display(),
                    i + 1,
                    GRID_COLUMNS.len()
                );
            }
            let num = |j: usize| -> Result<f64> {
                f[j].parse()
                    .with_context(|| format!("{}:{}: bad number `{}`", path.display(), i + 1, f[j]))
            };
            let int = |j: usize| -> Result<usize> {
                f[j].parse().with_context(|| {
                    format!("{}:{}: bad integer `{}`", path.display(), i + 1, f[j])
                })
            };
            Ok(RangeResult {
                lambda_a: num(0)?,
                t_s: num(1)?,
                range_km: num(2)?,
                fidelity_at_range: num(3)?,
                k_at_range: num(4)?,
                converged: f[5].parse().with_context(|| {
                    format!("{}:{}: bad flag `{}`", path.display(), i + 1, f[5])
                })?,
                crossings: int(6)?,
                bisection_steps: int(7)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionsConfig {
    pub run: GridRunConfig,
    pub from_grid: Option<PathBuf>,
    pub r_min: f64,
    pub f_min: f64,
}

pub fn regions(cfg: &RegionsConfig) -> Result<Outcome> {
    let summary = match &cfg.from_grid {
        Some(path) => {
            let results = read_grid_csv(path)?;
            GridSummary {
                config: cfg.run.grid,
                best: best_of(&results),
                unconverged: Vec::new(),
                results,
                regions: Default::default(),
            }
        }
        None => sweep(&cfg.run, false)?,
    };
    let r = extract_regions(&summary, cfg.r_min, cfg.f_min);
    let s = &cfg.run.grid.settings;
    let prov = Provenance::new(
        "regions",
        serde_json::to_value(cfg)?,
        s.beta,
        s.k_min,
        tolerances(s),
    );
    for (name, pts) in [
        ("range", &r.range),
        ("fidelity", &r.fidelity),
        ("intersection", &r.both),
    ] {
        emit(
            &point_table(pts).to_csv(&prov),
            Some(&cfg.run.out.join(format!("{name}.csv"))),
        )?;
    }
    println!(
        "range: {} points, fidelity: {} points, intersection: {} points",
        r.range.len(),
        r.fidelity.len(),
        r.both.len()
    );
    Ok(Outcome::Success)
}

/// Printed operating points per excess-noise column:
/// `(ε, best λ_A, best t_s, high-fidelity λ_A, high-fidelity t_s, F target)`.
pub const TABLE1_PRESETS: [(f64, f64, f64, f64, f64, f64); 5] = [
    (0.0, 0.815, 0.041, 0.359, 0.004, 0.94),
    (0.001, 0.787, 0.038, 0.413, 0.087, 0.93),
    (0.005, 0.798, 0.085, 0.413, 0.182, 0.93),
    (0.01, 0.819, 0.121, 0.423, 0.257, 0.93),
    (0.05, 0.849, 0.246, 0.473, 0.464, 0.92),
];

#[derive(Debug, Clone, Serialize)]
pub struct Table1Config {
    pub settings: RangeSettings,
    /// Run a grid per column instead of using the preset operating points.
    pub from_grid: Option<GridConfig>,
    #[serde(skip)]
    pub workers: Option<usize>,
}

fn column(best: &RangeResult, high: &RangeResult, eps: f64) -> Result<Vec<f64>> {
    let noise = |r: &RangeResult| equivalent_noises(eps, t_c_from_distance(r.range_km)?);
    let (nb, nh) = (noise(best)?, noise(high)?);
    let t = tradeoff_report(best, high)?;
    Ok(vec![
        best.range_km,
        best.fidelity_at_range,
        best.lambda_a,
        best.t_s,
        nb.transmitter,
        nb.receiver,
        high.range_km,
        high.fidelity_at_range,
        high.lambda_a,
        high.t_s,
        nh.transmitter,
        nh.receiver,
        t.delta_r_pct,
        t.delta_f_pct,
    ])
}

const TABLE1_ROWS: [&str; 14] = [
    "R_km",
    "F",
    "lambda_a",
    "t_s",
    "eps_tm",
    "eps_rec",
    "R_km_high_f",
    "F_high_f",
    "lambda_a_high_f",
    "t_s_high_f",
    "eps_tm_high_f",
    "eps_rec_high_f",
    "delta_R_pct",
    "delta_F_pct",
];

pub fn table1(cfg: &Table1Config, format: Format, out: Option<&Path>) -> Result<Outcome> {
    let mut columns = Vec::new();
    let mut converged = true;
    for &(eps, bl, bt, hl, ht, f_target) in &TABLE1_PRESETS {
        let settings = RangeSettings {
            eps,
            ..cfg.settings
        };
        let (best, high) = match &cfg.from_grid {
            None => (
                find_range(bl, bt, &settings)?,
                find_range(hl, ht, &settings)?,
            ),
            Some(grid) => {
                let grid = GridConfig { settings, ..*grid };
                let summary = grid_search(
                    &grid,
                    &SweepOptions {
                        workers: cfg.workers,
                        ..Default::default()
                    },
                )?;
                converged &= summary.unconverged.is_empty();
                let best = summary
                    .best
                    .ok_or_else(|| anyhow!("eps={eps}: no converged grid point"))?;
                let faithful: Vec<RangeResult> = summary
                    .results
                    .iter()
                    .filter(|r| r.fidelity_at_range >= f_target)
                    .copied()
                    .collect();
                let high = best_of(&faithful)
                    .ok_or_else(|| anyhow!("eps={eps}: no grid point reaches F >= {f_target}"))?;
                (best, high)
            }
        };
        converged &= best.converged && high.converged;
        columns.push(column(&best, &high, eps)?);
    }
    let s = &cfg.settings;
    let prov = Provenance::new(
        "table1",
        serde_json::to_value(cfg)?,
        s.beta,
        s.k_min,
        tolerances(s),
    );
    let mut table = Table::new(&[
        "quantity",
        "eps_0",
        "eps_0.001",
        "eps_0.005",
        "eps_0.01",
        "eps_0.05",
    ]);
    for (i, name) in TABLE1_ROWS.iter().enumerate() {
        let mut row: Vec<Cell> = vec![(*name).into()];
        row.extend(columns.iter().map(|c| Cell::Num(c[i])));
        table.push(row);
    }
    emit(&render(&table, &prov, format), out)?;
    Ok(if converged {
        Outcome::Success
    } else {
        Outcome::NotConverged
    })
}

pub fn validate(battery: Option<&Path>, format: Format, out: Option<&Path>) -> Result<Outcome> {
    let points = match battery {
        Some(p) => load_battery(p)?,
        None => default_battery(),
    };
    let report = run_battery(&points)?;
    let config =
        json!({ "battery": battery.map(|p| p.display().to_string()), "points": points.len() });
    let mut prov = Provenance::new("validate", config, 1.0, 0.0, json!({}));
    points.iter().for_each(|p| prov.track_cutoff(p.cutoff));
    let mut table = Table::new(&["quantity", "max_abs_error", "tolerance", "passed"]);
    for q in &report.quantities {
        table.push(vec![
            q.quantity.as_str().into(),
            q.max_abs_error.into(),
            q.tolerance.into(),
            q.passed.into(),
        ]);
    }
    let text = render(&table, &prov, format);
    if out.is_some() {
        emit(&text, out)?;
    }
    for q in &report.quantities {
        eprintln!(
            "{:<18} {:>10.3e}  (tol {:.0e})  {}",
            q.quantity,
            q.max_abs_error,
            q.tolerance,
            if q.passed { "pass" } else { "FAIL" }
        );
    }
    if out.is_none() {
        emit(&text, None)?;
    }
    Ok(if report.passed() {
        Outcome::Success
    } else {
        Outcome::ValidationFailed
    })
}
