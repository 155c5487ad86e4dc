//! Protocol range by bracketed bisection, and the direct search over
//! `(λ_A, t_s)`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keyrate::secret_key_rate_with_tol;
use crate::scissor::fidelity_at;
use crate::states::{ProtocolParams, DEFAULT_TOL};

pub const DEFAULT_K_MIN: f64 = 1e-6;
pub const DEFAULT_RESOLUTION_KM: f64 = 0.01;
pub const DEFAULT_STEP: f64 = 0.001;
pub const MAX_BISECTION_STEPS: usize = 200;
/// Coarse scan window. The PLOB bound drops below 1e-6 at 308 km.
pub const SCAN_LIMIT_KM: f64 = 401.0;
pub const CHECKPOINT_EVERY: usize = 10_000;

/// Fixed inputs of a range search other than the grid coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeSettings {
    pub eps: f64,
    pub beta: f64,
    pub k_min: f64,
    pub resolution_km: f64,
    pub tol: f64,
}

impl Default for RangeSettings {
    fn default() -> Self {
        Self {
            eps: 0.0,
            beta: 1.0,
            k_min: DEFAULT_K_MIN,
            resolution_km: DEFAULT_RESOLUTION_KM,
            tol: DEFAULT_TOL,
        }
    }
}

impl RangeSettings {
    fn validate(&self) -> Result<()> {
        if !(self.k_min > 0.0) {
            return Err(Error::param("k_min", self.k_min, "must be > 0"));
        }
        if !(self.resolution_km > 0.0) {
            return Err(Error::param(
                "resolution_km",
                self.resolution_km,
                "must be > 0",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeResult {
    pub lambda_a: f64,
    pub t_s: f64,
    /// Largest distance with `K >= k_min`; zero when there is none.
    pub range_km: f64,
    pub fidelity_at_range: f64,
    pub k_at_range: f64,
    pub converged: bool,
    /// Number of `K = k_min` crossings seen by the coarse scan. More than one
    /// means `K(L)` is not monotone across the threshold.
    pub crossings: usize,
    pub bisection_steps: usize,
}

/// Outcome of [`bisect_crossing`]: `f(lo) >= target > f(hi)` throughout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
    pub converged: bool,
}

/// Bisects a bracket with `f(lo) >= target > f(hi)` down to `hi - lo <=
/// resolution`. The caller guarantees the initial bracket.
pub fn bisect_crossing<F>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    target: f64,
    resolution: f64,
    max_steps: usize,
) -> Result<Bracket>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut steps = 0;
    while hi - lo > resolution {
        if steps == max_steps {
            return Ok(Bracket {
                lo,
                hi,
                steps,
                converged: false,
            });
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // resolution below the spacing of floats at this distance
            return Ok(Bracket {
                lo,
                hi,
                steps,
                converged: false,
            });
        }
        if f(mid)? >= target {
            lo = mid;
        } else {
            hi = mid;
        }
        steps += 1;
    }
    Ok(Bracket {
        lo,
        hi,
        steps,
        converged: true,
    })
}

fn key_rate_at(base: &ProtocolParams, distance_km: f64, tol: f64) -> Result<f64> {
    Ok(secret_key_rate_with_tol(&base.with_distance(distance_km)?, tol)?.k)
}

/// Largest distance at which the key rate stays at or above `k_min`.
///
/// The crossing is bracketed by a forward scan from 1 km in 10 km steps, then
/// 1 km steps, then bisected to `resolution_km`. If even 1 km fails, shorter
/// distances down to 0.01 km are tried before reporting a zero range.
pub fn find_range(lambda_a: f64, t_s: f64, settings: &RangeSettings) -> Result<RangeResult> {
    settings.validate()?;
    let base = ProtocolParams::from_link(lambda_a, t_s, settings.eps, 0.0, settings.beta)?;
    let tol = settings.tol;
    let k = |l: f64| key_rate_at(&base, l, tol);

    let coarse: Vec<f64> = (0..)
        .map(|i| 1.0 + 10.0 * i as f64)
        .take_while(|&l| l <= SCAN_LIMIT_KM)
        .collect();
    let above: Vec<bool> = coarse
        .iter()
        .map(|&l| k(l).map(|v| v >= settings.k_min))
        .collect::<Result<_>>()?;
    let crossings = above.windows(2).filter(|w| w[0] != w[1]).count()
        + usize::from(!above[0] && above.iter().any(|&a| a));

    let finish =
        |lo: f64, hi: f64, crossings: usize, converged_scan: bool| -> Result<RangeResult> {
            let bracket = bisect_crossing(
                k,
                lo,
                hi,
                settings.k_min,
                settings.resolution_km,
                MAX_BISECTION_STEPS,
            )?;
            let at = base.with_distance(bracket.lo)?;
            Ok(RangeResult {
                lambda_a,
                t_s,
                range_km: bracket.lo,
                fidelity_at_range: fidelity_at(&at, tol)?,
                k_at_range: secret_key_rate_with_tol(&at, tol)?.k,
                converged: bracket.converged && converged_scan,
                crossings,
                bisection_steps: bracket.steps,
            })
        };

    match above.iter().rposition(|&a| a) {
        Some(last) if last + 1 == coarse.len() => {
            // still above threshold at the end of the window
            let l = coarse[last];
            let at = base.with_distance(l)?;
            Ok(RangeResult {
                lambda_a,
                t_s,
                range_km: l,
                fidelity_at_range: fidelity_at(&at, tol)?,
                k_at_range: k(l)?,
                converged: false,
                crossings,
                bisection_steps: 0,
            })
        }
        Some(last) => {
            let start = coarse[last];
            let mut lo = start;
            let mut hi = coarse[last + 1];
            for j in 1..10 {
                let l = start + j as f64;
                if k(l)? >= settings.k_min {
                    lo = l;
                } else {
                    hi = l;
                    break;
                }
            }
            finish(lo, hi, crossings, true)
        }
        None => {
            let short = [0.5, 0.25, 0.1, 0.05, 0.01];
            let mut hi = 1.0;
            for &l in &short {
                if k(l)? >= settings.k_min {
                    return finish(l, hi, crossings.max(1), true);
                }
                hi = l;
            }
            let at = base.with_distance(0.0)?;
            Ok(RangeResult {
                lambda_a,
                t_s,
                range_km: 0.0,
                fidelity_at_range: fidelity_at(&at, tol)?,
                k_at_range: secret_key_rate_with_tol(&at, tol)?.k,
                converged: true,
                crossings,
                bisection_steps: 0,
            })
        }
    }
}

/// Grid definition: `λ_A = i·step` for `i` from `round(lambda_min/step)`
/// (at least 1) to `round(lambda_max/step)`, and likewise for `t_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub settings: RangeSettings,
    pub step: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub t_s_min: f64,
    pub t_s_max: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            settings: RangeSettings::default(),
            step: DEFAULT_STEP,
            lambda_min: 0.0,
            lambda_max: 0.9,
            t_s_min: 0.0,
            t_s_max: 0.7,
        }
    }
}

fn grid_axis(step: f64, min: f64, max: f64) -> Vec<f64> {
    let first = ((min / step).round() as usize).max(1);
    let n = (max / step).round() as usize;
    // snap to 12 decimals so that 0.815 is 0.815 and not 0.8150000000000001
    (first..=n)
        .map(|i| (i as f64 * step * 1e12).round() / 1e12)
        .collect()
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        self.settings.validate()?;
        if !(self.step > 0.0) {
            return Err(Error::param("step", self.step, "must be > 0"));
        }
        if !(self.lambda_max > 0.0 && self.lambda_max <= 0.9) {
            return Err(Error::param(
                "lambda_max",
                self.lambda_max,
                "must lie in (0, 0.9]",
            ));
        }
        if !(self.t_s_max > 0.0 && self.t_s_max <= 0.7) {
            return Err(Error::param(
                "t_s_max",
                self.t_s_max,
                "must lie in (0, 0.7]",
            ));
        }
        if !(self.lambda_min >= 0.0 && self.t_s_min >= 0.0) {
            return Err(Error::param(
                "lambda_min/t_s_min",
                self.lambda_min.min(self.t_s_min),
                "must be >= 0",
            ));
        }
        if self.lambda_axis().is_empty() || self.t_s_axis().is_empty() {
            return Err(Error::param(
                "step",
                self.step,
                "larger than the search domain",
            ));
        }
        Ok(())
    }

    pub fn lambda_axis(&self) -> Vec<f64> {
        grid_axis(self.step, self.lambda_min, self.lambda_max)
    }

    pub fn t_s_axis(&self) -> Vec<f64> {
        grid_axis(self.step, self.t_s_min, self.t_s_max)
    }

    /// Coordinates in row-major order (`λ_A` outer).
    pub fn points(&self) -> Vec<(f64, f64)> {
        let ts = self.t_s_axis();
        self.lambda_axis()
            .into_iter()
            .flat_map(|l| ts.iter().map(move |&t| (l, t)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regions {
    pub r_min: f64,
    pub f_min: f64,
    pub range: Vec<(f64, f64)>,
    pub fidelity: Vec<(f64, f64)>,
    pub both: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub config: GridConfig,
    /// One entry per grid point, row-major.
    pub results: Vec<RangeResult>,
    pub best: Option<RangeResult>,
    /// Indices into `results` of points whose search did not converge.
    pub unconverged: Vec<usize>,
    pub regions: BTreeMap<String, Regions>,
}

/// `a` beats `b`: longer range, then higher fidelity, then smaller `λ_A`,
/// then smaller `t_s`.
fn better(a: &RangeResult, b: &RangeResult) -> bool {
    use std::cmp::Ordering::*;
    match a.range_km.total_cmp(&b.range_km) {
        Greater => return true,
        Less => return false,
        Equal => {}
    }
    match a.fidelity_at_range.total_cmp(&b.fidelity_at_range) {
        Greater => return true,
        Less => return false,
        Equal => {}
    }
    (a.lambda_a, a.t_s) < (b.lambda_a, b.t_s)
}

pub fn best_of(results: &[RangeResult]) -> Option<RangeResult> {
    results
        .iter()
        .filter(|r| r.converged)
        .fold(None, |acc: Option<&RangeResult>, r| match acc {
            Some(b) if !better(r, b) => Some(b),
            _ => Some(r),
        })
        .copied()
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    config: GridConfig,
    results: Vec<RangeResult>,
}

/// Options that affect how, but not what, the grid computes.
#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Worker threads; `None` uses rayon's global pool.
    pub workers: Option<usize>,
    pub checkpoint: Option<PathBuf>,
    /// Continue from `checkpoint` when it exists.
    pub resume: bool,
}

fn read_checkpoint(path: &Path, config: &GridConfig) -> Result<Vec<RangeResult>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    let cp: Checkpoint = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_owned(),
        source,
    })?;
    if cp.config != *config {
        return Err(Error::Invariant(format!(
            "checkpoint {} was written for a different grid configuration",
            path.display()
        )));
    }
    Ok(cp.results)
}

fn write_checkpoint(path: &Path, config: &GridConfig, results: &[RangeResult]) -> Result<()> {
    let cp = Checkpoint {
        config: *config,
        results: results.to_vec(),
    };
    let tmp = path.with_extension("tmp");
    let text = serde_json::to_string(&cp).map_err(|source| Error::Json {
        path: path.to_owned(),
        source,
    })?;
    let io = |source| Error::Io {
        path: path.to_owned(),
        source,
    };
    std::fs::write(&tmp, text).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

/// Evaluates [`find_range`] on every grid point.
///
/// Points run in parallel inside chunks of [`CHECKPOINT_EVERY`]; results are
/// stored by grid index, so the summary does not depend on the worker
/// count. After each chunk the completed prefix is written to the checkpoint
/// file when one is configured.
pub fn grid_search(config: &GridConfig, options: &SweepOptions) -> Result<GridSummary> {
    config.validate()?;
    let points = config.points();
    let mut results = match (&options.checkpoint, options.resume) {
        (Some(path), true) if path.exists() => read_checkpoint(path, config)?,
        _ => Vec::new(),
    };
    if results.len() > points.len() {
        return Err(Error::Invariant(
            "checkpoint holds more points than the grid".into(),
        ));
    }

    let run = |results: &mut Vec<RangeResult>| -> Result<()> {
        while results.len() < points.len() {
            let start = results.len();
            let end = (start + CHECKPOINT_EVERY).min(points.len());
            let chunk = points[start..end]
                .par_iter()
                .map(|&(l, t)| find_range(l, t, &config.settings))
                .collect::<Result<Vec<_>>>()?;
            results.extend(chunk);
            if let Some(path) = &options.checkpoint {
                write_checkpoint(path, config, results)?;
            }
        }
        Ok(())
    };

    match options.workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Invariant(format!("thread pool: {e}")))?;
            pool.install(|| run(&mut results))?;
        }
        None => run(&mut results)?,
    }

    let unconverged = results
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.converged)
        .map(|(i, _)| i)
        .collect();
    Ok(GridSummary {
        config: *config,
        best: best_of(&results),
        results,
        unconverged,
        regions: BTreeMap::new(),
    })
}

/// Grid points with range above `r_min`, fidelity above `f_min`, and both.
pub fn extract_regions(summary: &GridSummary, r_min: f64, f_min: f64) -> Regions {
    let mut regions = Regions {
        r_min,
        f_min,
        range: Vec::new(),
        fidelity: Vec::new(),
        both: Vec::new(),
    };
    for r in summary.results.iter().filter(|r| r.converged) {
        let p = (r.lambda_a, r.t_s);
        let long = r.range_km > r_min;
        let faithful = r.fidelity_at_range > f_min;
        if long {
            regions.range.push(p);
        }
        if faithful {
            regions.fidelity.push(p);
        }
        if long && faithful {
            regions.both.push(p);
        }
    }
    regions
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tradeoff {
    pub delta_r_pct: f64,
    pub delta_f_pct: f64,
}

/// Relative change in range and fidelity of `alt` against `best`.
pub fn tradeoff_report(best: &RangeResult, alt: &RangeResult) -> Result<Tradeoff> {
    if !best.converged || !alt.converged {
        return Err(Error::Invariant("trade-off needs converged results".into()));
    }
    if best.range_km == 0.0 {
        return Err(Error::param(
            "range_km",
            0.0,
            "reference range must be nonzero",
        ));
    }
    if best.fidelity_at_range == 0.0 {
        return Err(Error::param(
            "fidelity",
            0.0,
            "reference fidelity must be nonzero",
        ));
    }
    Ok(Tradeoff {
        delta_r_pct: 100.0 * (alt.range_km - best.range_km) / best.range_km,
        delta_f_pct: 100.0 * (alt.fidelity_at_range - best.fidelity_at_range)
            / best.fidelity_at_range,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(l: f64, t: f64, r: f64, f: f64) -> RangeResult {
        RangeResult {
            lambda_a: l,
            t_s: t,
            range_km: r,
            fidelity_at_range: f,
            k_at_range: 1e-6,
            converged: true,
            crossings: 1,
            bisection_steps: 10,
        }
    }

    #[test]
    fn bisection_keeps_bracket() {
        let mut seen = Vec::new();
        let b = bisect_crossing(
            |x| {
                seen.push(x);
                Ok(2.0 - x)
            },
            0.0,
            10.0,
            1.0,
            1e-6,
            200,
        )
        .unwrap();
        assert!(b.converged);
        assert!(2.0 - b.lo >= 1.0 && 2.0 - b.hi < 1.0);
        assert!(b.hi - b.lo <= 1e-6);
        let capped = bisect_crossing(|x| Ok(2.0 - x), 0.0, 10.0, 1.0, 1e-9, 3).unwrap();
        assert!(!capped.converged);
        assert_eq!(capped.steps, 3);
        let unreachable = bisect_crossing(|x| Ok(300.0 - x), 0.0, 400.0, 1.0, 1e-20, 200).unwrap();
        assert!(!unreachable.converged);
        assert!(unreachable.steps < 200);
    }

    #[test]
    fn vacuum_has_zero_range() {
        let r = find_range(1e-9, 0.3, &RangeSettings::default()).unwrap();
        assert_eq!(r.range_km, 0.0);
        assert!(r.converged);
    }

    #[test]
    fn grid_axes_include_upper_end() {
        let cfg = GridConfig {
            step: 0.1,
            ..GridConfig::default()
        };
        assert_eq!(cfg.lambda_axis().len(), 9);
        assert_eq!(*cfg.lambda_axis().last().unwrap(), 0.9);
        assert_eq!(cfg.t_s_axis().len(), 7);
        let fine = GridConfig::default();
        assert_eq!(fine.lambda_axis().len() * fine.t_s_axis().len(), 900 * 700);
        assert_eq!(fine.lambda_axis()[814], 0.815);
        assert!(GridConfig {
            lambda_max: 0.95,
            ..GridConfig::default()
        }
        .validate()
        .is_err());
        let window = GridConfig {
            lambda_min: 0.357,
            lambda_max: 0.361,
            t_s_min: 0.0,
            t_s_max: 0.006,
            ..GridConfig::default()
        };
        assert_eq!(window.lambda_axis(), vec![0.357, 0.358, 0.359, 0.36, 0.361]);
        assert_eq!(window.t_s_axis().len(), 6);
    }

    #[test]
    fn tie_breaking() {
        let a = result(0.5, 0.1, 100.0, 0.5);
        let b = result(0.4, 0.1, 100.0, 0.5);
        let c = result(0.4, 0.05, 100.0, 0.5);
        let d = result(0.9, 0.7, 100.0, 0.6);
        assert_eq!(best_of(&[a, b, c]).unwrap(), c);
        assert_eq!(best_of(&[a, b, c, d]).unwrap(), d);
        let mut e = result(0.1, 0.1, 500.0, 1.0);
        e.converged = false;
        assert_eq!(best_of(&[a, e]).unwrap(), a);
    }

    #[test]
    fn tradeoff_cases() {
        let a = result(0.815, 0.041, 288.0, 0.36);
        let t = tradeoff_report(&a, &a).unwrap();
        assert_eq!((t.delta_r_pct, t.delta_f_pct), (0.0, 0.0));
        let b = result(0.359, 0.004, 265.0, 0.94);
        let t = tradeoff_report(&a, &b).unwrap();
        assert!((t.delta_r_pct + 8.0).abs() < 0.1);
        assert!((t.delta_f_pct - 161.1).abs() < 0.1);
        assert!(tradeoff_report(&result(0.1, 0.1, 0.0, 0.5), &a).is_err());
    }
}
