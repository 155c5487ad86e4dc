//! Closed form versus dense simulation over a battery of parameter points.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{dense_entropy, dense_fidelity, simulate_protocol, OracleOutput};
use crate::channel::{theta, FockIndexTriple};
use crate::error::{Error, Result};
use crate::keyrate::{spectrum, von_neumann};
use crate::scissor::{
    fidelity, joint_state, reduced_states, success_prob_qs, vw_amplitudes, JointState,
};
use crate::states::{ProtocolParams, DEFAULT_TOL};

/// Tolerance on amplitudes, probabilities, σ, γ and fidelity.
pub const STATE_TOL: f64 = 1e-8;
/// Tolerance on entropies.
pub const ENTROPY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryPoint {
    pub lambda_a: f64,
    pub lambda_e: f64,
    pub t_c: f64,
    pub t_s: f64,
    pub cutoff: usize,
}

impl BatteryPoint {
    pub fn params(&self) -> Result<ProtocolParams> {
        ProtocolParams::new(self.lambda_a, 1.0, self.t_s, self.lambda_e, self.t_c, 1.0)
    }
}

/// Parses `lambda_a,lambda_e,t_c,t_s,cutoff` lines. Blank lines, `#`
/// comments and a header line starting with `lambda_a` are skipped.
pub fn parse_battery(text: &str) -> Result<Vec<BatteryPoint>> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("lambda_a") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse_err = |message: String| Error::Parse {
            line: i + 1,
            message,
        };
        if fields.len() != 5 {
            return Err(parse_err(format!(
                "expected 5 fields, got {}",
                fields.len()
            )));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| parse_err(format!("`{s}`: {e}")))
        };
        points.push(BatteryPoint {
            lambda_a: num(fields[0])?,
            lambda_e: num(fields[1])?,
            t_c: num(fields[2])?,
            t_s: num(fields[3])?,
            cutoff: fields[4]
                .parse()
                .map_err(|e| parse_err(format!("`{}`: {e}", fields[4])))?,
        });
    }
    Ok(points)
}

pub fn load_battery(path: &Path) -> Result<Vec<BatteryPoint>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_battery(&text)
}

/// The battery shipped with the crate.
pub fn default_battery() -> Vec<BatteryPoint> {
    parse_battery(include_str!("../../fixtures/battery.csv")).expect("shipped battery parses")
}

/// Closed-form quantities at one point, restricted to the oracle's cutoff.
#[derive(Debug, Clone)]
pub struct ClosedFormSnapshot {
    /// `(n_a, n_b, n_e, Θ)` for `n_a, n_e <= cutoff`.
    pub theta: Vec<(usize, usize, usize, f64)>,
    /// `(n_a, n_e, V, W)`.
    pub vw: Vec<(usize, usize, f64, f64)>,
    pub p_q: f64,
    pub sigma00: Vec<f64>,
    pub sigma11: Vec<f64>,
    pub sigma01: Vec<f64>,
    pub gamma_a: Vec<f64>,
    pub gamma_b: [f64; 2],
    pub fidelity: f64,
    /// Entropy of the joint state truncated to the oracle cutoff and
    /// renormalised, from the block spectrum.
    pub entropy_ab: f64,
    pub entropy_a: f64,
}

/// The joint state restricted to `n <= cutoff` and renormalised; this is
/// what the dense simulation represents.
pub fn truncate_joint(joint: &JointState, cutoff: usize) -> JointState {
    let keep = cutoff.min(joint.cutoff);
    let mut out = JointState {
        sigma00: joint.sigma00[..=keep].to_vec(),
        sigma11: joint.sigma11[..=keep].to_vec(),
        sigma01: joint.sigma01[..keep].to_vec(),
        cutoff: keep,
        tail_bound: 0.0,
        p_q: joint.p_q,
    };
    let tr = out.trace();
    for v in out
        .sigma00
        .iter_mut()
        .chain(out.sigma11.iter_mut())
        .chain(out.sigma01.iter_mut())
    {
        *v /= tr;
    }
    out.tail_bound = (1.0 - tr).max(0.0);
    out
}

impl ClosedFormSnapshot {
    pub fn compute(params: &ProtocolParams, cutoff: usize) -> Result<Self> {
        let mut theta_vals = Vec::new();
        for n_e in 0..=cutoff {
            for n_a in 0..=cutoff {
                for n_b in 0..=n_a + n_e {
                    let idx = FockIndexTriple::new(n_a as u64, n_b as u64, n_e as u64);
                    theta_vals.push((n_a, n_b, n_e, theta(idx, params)));
                }
            }
        }
        let mut vw = Vec::new();
        for n_e in 0..=cutoff {
            for n_a in 0..=cutoff {
                let (v, w) = vw_amplitudes(n_a as u64, n_e as u64, params);
                vw.push((n_a, n_e, v, w));
            }
        }
        let joint = joint_state(params, DEFAULT_TOL)?;
        let reduced = reduced_states(&joint, params);
        let truncated = truncate_joint(&joint, cutoff);
        let entropy_ab = von_neumann(spectrum(&truncated)?.eigenvalues())?;
        let gamma_a_trunc: Vec<f64> = truncated
            .sigma00
            .iter()
            .zip(&truncated.sigma11)
            .map(|(a, b)| a + b)
            .collect();
        let entropy_a = von_neumann(gamma_a_trunc)?;
        let keep = cutoff.min(joint.cutoff);
        let pad = |v: &[f64], len: usize| {
            let mut out = v[..len.min(v.len())].to_vec();
            out.resize(len, 0.0);
            out
        };
        Ok(Self {
            theta: theta_vals,
            vw,
            p_q: success_prob_qs(params),
            sigma00: pad(&joint.sigma00, cutoff + 1),
            sigma11: pad(&joint.sigma11, cutoff + 1),
            sigma01: pad(&joint.sigma01, cutoff),
            gamma_a: pad(&reduced.gamma_a[..=keep], cutoff + 1),
            gamma_b: [reduced.gamma_b0, reduced.gamma_b1],
            fidelity: fidelity(&reduced),
            entropy_ab,
            entropy_a,
        })
    }
}

/// Largest absolute deviation per quantity.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointErrors {
    pub theta: f64,
    pub vw: f64,
    pub p_q: f64,
    pub sigma00: f64,
    pub sigma11: f64,
    pub sigma01: f64,
    pub gamma_a: f64,
    pub gamma_b: f64,
    pub fidelity: f64,
    pub fidelity_uhlmann: f64,
    pub entropy_ab: f64,
    pub entropy_a: f64,
}

impl PointErrors {
    pub fn entries(&self) -> [(&'static str, f64, f64); 12] {
        [
            ("theta", self.theta, STATE_TOL),
            ("v_w", self.vw, STATE_TOL),
            ("p_q", self.p_q, STATE_TOL),
            ("sigma00", self.sigma00, STATE_TOL),
            ("sigma11", self.sigma11, STATE_TOL),
            ("sigma01", self.sigma01, STATE_TOL),
            ("gamma_a", self.gamma_a, STATE_TOL),
            ("gamma_b", self.gamma_b, STATE_TOL),
            ("fidelity", self.fidelity, STATE_TOL),
            ("fidelity_uhlmann", self.fidelity_uhlmann, STATE_TOL),
            ("entropy_ab", self.entropy_ab, ENTROPY_TOL),
            ("entropy_a", self.entropy_a, ENTROPY_TOL),
        ]
    }

    fn merge_max(&mut self, other: &PointErrors) {
        macro_rules! take {
            ($($f:ident),*) => { $( self.$f = self.$f.max(other.$f); )* };
        }
        take!(
            theta,
            vw,
            p_q,
            sigma00,
            sigma11,
            sigma01,
            gamma_a,
            gamma_b,
            fidelity,
            fidelity_uhlmann,
            entropy_ab,
            entropy_a
        );
    }
}

fn max_abs_diff<'a>(pairs: impl Iterator<Item = (&'a f64, &'a f64)>) -> f64 {
    pairs.map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Compares a closed-form snapshot against one oracle run.
pub fn compare(
    snapshot: &ClosedFormSnapshot,
    oracle: &OracleOutput,
    params: &ProtocolParams,
) -> Result<PointErrors> {
    let channel = super::channel_state(params, oracle.cutoff)?;
    let theta = snapshot
        .theta
        .iter()
        .map(|&(n_a, n_b, n_e, th)| {
            let dense = channel.amplitude(&[n_a, n_e, n_b, n_a + n_e - n_b]);
            (th - dense).abs()
        })
        .fold(0.0, f64::max);
    let vw = snapshot
        .vw
        .iter()
        .map(|&(n_a, n_e, v, w)| {
            let dv = oracle.heralded.amplitude(&[n_a, n_e, n_a + n_e, 0]);
            let dw = if n_a + n_e > 0 {
                oracle.heralded.amplitude(&[n_a, n_e, n_a + n_e - 1, 1])
            } else {
                0.0
            };
            (v - dv).abs().max((w - dw).abs())
        })
        .fold(0.0, f64::max);

    let rho_a = oracle.rho_a();
    let rho_b = oracle.rho_b();
    let gamma_a_dense: Vec<f64> = (0..rho_a.nrows()).map(|i| rho_a[(i, i)]).collect();
    let gamma_b_dense = [rho_b[(0, 0)], rho_b[(1, 1)]];
    let fid_dense = {
        let ga = &gamma_a_dense;
        let f = (ga[0] * gamma_b_dense[0]).sqrt()
            + ga.get(1).map_or(0.0, |g1| (g1 * gamma_b_dense[1]).sqrt());
        f * f
    };
    let rho_a_dense = dense_entropy(&rho_a)?;
    Ok(PointErrors {
        theta,
        vw,
        p_q: (snapshot.p_q - oracle.p_q).abs(),
        sigma00: max_abs_diff(snapshot.sigma00.iter().zip(&oracle.sigma00)),
        sigma11: max_abs_diff(snapshot.sigma11.iter().zip(&oracle.sigma11)),
        sigma01: max_abs_diff(snapshot.sigma01.iter().zip(&oracle.sigma01)),
        gamma_a: max_abs_diff(snapshot.gamma_a.iter().zip(&gamma_a_dense)),
        gamma_b: max_abs_diff(snapshot.gamma_b.iter().zip(&gamma_b_dense)),
        fidelity: (snapshot.fidelity - fid_dense).abs(),
        fidelity_uhlmann: (snapshot.fidelity - dense_fidelity(&rho_a, &rho_b)).abs(),
        entropy_ab: (snapshot.entropy_ab - dense_entropy(&oracle.rho_ab)?).abs(),
        entropy_a: (snapshot.entropy_a - rho_a_dense).abs(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityReport {
    pub quantity: String,
    pub max_abs_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub points: usize,
    pub per_point: Vec<PointErrors>,
    pub quantities: Vec<QuantityReport>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.quantities.iter().all(|q| q.passed)
    }
}

/// Runs the battery with the library's closed forms.
pub fn run_battery(points: &[BatteryPoint]) -> Result<ValidationReport> {
    run_battery_with(points, ClosedFormSnapshot::compute)
}

/// Runs the battery with an arbitrary closed-form provider; points run in
/// parallel and results are kept in battery order.
pub fn run_battery_with<F>(points: &[BatteryPoint], closed: F) -> Result<ValidationReport>
where
    F: Fn(&ProtocolParams, usize) -> Result<ClosedFormSnapshot> + Sync,
{
    if points.is_empty() {
        return Err(Error::EmptyBattery);
    }
    let per_point = points
        .par_iter()
        .map(|pt| {
            let params = pt.params()?;
            let oracle = simulate_protocol(&params, pt.cutoff)?;
            let snapshot = closed(&params, pt.cutoff)?;
            compare(&snapshot, &oracle, &params)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut worst = PointErrors::default();
    per_point.iter().for_each(|e| worst.merge_max(e));
    let quantities = worst
        .entries()
        .into_iter()
        .map(|(name, err, tol)| QuantityReport {
            quantity: name.to_owned(),
            max_abs_error: err,
            tolerance: tol,
            passed: err < tol,
        })
        .collect();
    Ok(ValidationReport {
        points: points.len(),
        per_point,
        quantities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects() {
        let pts =
            parse_battery("# c\nlambda_a,lambda_e,t_c,t_s,cutoff\n0.3,0.1,0.8,0.2,9\n\n").unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].cutoff, 9);
        assert!(parse_battery("0.3,0.1,0.8\n").is_err());
        assert!(parse_battery("0.3,x,0.8,0.2,9\n").is_err());
        assert!(matches!(run_battery(&[]), Err(Error::EmptyBattery)));
    }

    #[test]
    fn shipped_battery_shape() {
        let pts = default_battery();
        assert!(pts.len() >= 10);
        for p in &pts {
            assert!(p.lambda_a <= 0.4 && p.lambda_e <= 0.4);
            assert!((8..=12).contains(&p.cutoff));
        }
    }
}
