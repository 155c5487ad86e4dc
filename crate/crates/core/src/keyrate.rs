//! Entropies from the closed block spectrum, secret key rate and the PLOB
//! bound.

use serde::{Deserialize, Serialize};

use crate::channel::CompensatedSum;
use crate::error::{Error, Result};
use crate::scissor::{joint_state, reduced_states, JointState, ReducedStates};
use crate::states::{ProtocolParams, DEFAULT_TOL};

/// Eigenvalues in `[-CLAMP, 0)` are rounding noise and set to zero.
pub const CLAMP: f64 = 1e-14;

/// Spectrum of the joint state. `|0, 1⟩` is uncoupled; every other basis
/// state sits in a 2×2 block `{|n, 0⟩, |n+1, 1⟩}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSpectrum {
    pub lone_eigenvalue: f64,
    pub block_eigenpairs: Vec<(f64, f64)>,
}

impl BlockSpectrum {
    pub fn eigenvalues(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(self.lone_eigenvalue)
            .chain(self.block_eigenpairs.iter().flat_map(|&(p, m)| [p, m]))
    }

    pub fn total(&self) -> f64 {
        let mut acc = CompensatedSum::default();
        self.eigenvalues().for_each(|e| acc.add(e));
        acc.value()
    }
}

fn clamp(value: f64, index: usize) -> Result<f64> {
    if value >= 0.0 {
        Ok(value)
    } else if value >= -CLAMP {
        Ok(0.0)
    } else {
        Err(Error::NegativeProbability { index, value })
    }
}

/// Eigenvalues of `[[a, c], [c, b]]`, larger first. The smaller one comes from
/// the determinant to avoid cancellation.
pub fn symmetric_2x2_eigen(a: f64, b: f64, c: f64) -> (f64, f64) {
    let half_tr = 0.5 * (a + b);
    let disc = (0.5 * (a - b)).hypot(c);
    let plus = half_tr + disc;
    let minus = if plus > 0.0 {
        (a * b - c * c) / plus
    } else {
        half_tr - disc
    };
    (plus, minus)
}

pub fn spectrum(joint: &JointState) -> Result<BlockSpectrum> {
    let n = joint.cutoff;
    let lone_eigenvalue = clamp(joint.sigma11[0], 0)?;
    let mut block_eigenpairs = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let a = joint.sigma00[i];
        let b = joint.sigma11.get(i + 1).copied().unwrap_or(0.0);
        let c = joint.sigma01.get(i).copied().unwrap_or(0.0);
        let (p, m) = symmetric_2x2_eigen(a, b, c);
        block_eigenpairs.push((clamp(p, 2 * i + 1)?, clamp(m, 2 * i + 2)?));
    }
    Ok(BlockSpectrum {
        lone_eigenvalue,
        block_eigenpairs,
    })
}

/// Shannon entropy in bits with `0·log 0 = 0`.
pub fn von_neumann<I>(probabilities: I) -> Result<f64>
where
    I: IntoIterator<Item = f64>,
{
    let mut acc = CompensatedSum::default();
    for (index, p) in probabilities.into_iter().enumerate() {
        let p = clamp(p, index)?;
        if p > 0.0 {
            acc.add(-p * p.log2());
        }
    }
    Ok(acc.value().max(0.0))
}

/// Entropy estimate for a discarded tail of total weight `tail` whose
/// weights decay with ratio `q`: the tail's own mixing entropy plus its share
/// of a geometric distribution.
fn tail_entropy(tail: f64, q: f64) -> f64 {
    if tail <= 0.0 {
        return 0.0;
    }
    let geometric = if q > 0.0 && q < 1.0 {
        -(q * q.log2() + (1.0 - q) * (1.0 - q).log2()) / (1.0 - q)
    } else {
        0.0
    };
    tail * (geometric - tail.log2())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRate {
    /// Bits per pulse; may be negative.
    pub k: f64,
    pub p_q: f64,
    pub entropy_a: f64,
    pub entropy_ab: f64,
    /// Bound on `|k|` error from the truncated tails.
    pub error_bound: f64,
    pub cutoff: usize,
}

/// `P_Q (β S[ρ_A] - S[ρ_AB])` at the default tolerance.
pub fn secret_key_rate(params: &ProtocolParams) -> Result<KeyRate> {
    secret_key_rate_with_tol(params, DEFAULT_TOL)
}

pub fn secret_key_rate_with_tol(params: &ProtocolParams, tol: f64) -> Result<KeyRate> {
    let joint = joint_state(params, tol)?;
    let reduced = reduced_states(&joint, params);
    key_rate_from_states(params, &joint, &reduced)
}

pub fn key_rate_from_states(
    params: &ProtocolParams,
    joint: &JointState,
    reduced: &ReducedStates,
) -> Result<KeyRate> {
    let entropy_a = von_neumann(reduced.gamma_a.iter().copied())?;
    let entropy_ab = von_neumann(spectrum(joint)?.eigenvalues())?;
    let q = params.r_c_sq() * params.effective_lambda_a().powi(2)
        / (1.0 - params.t_c().powi(2) * params.lambda_e().powi(2));
    let tail = tail_entropy(joint.tail_bound, q);
    let p_q = joint.p_q;
    Ok(KeyRate {
        k: p_q * (params.beta() * entropy_a - entropy_ab),
        p_q,
        entropy_a,
        entropy_ab,
        error_bound: p_q * tail * (1.0 + params.beta()),
        cutoff: joint.cutoff,
    })
}

/// Entropy of the scissor output alone.
pub fn entropy_b(reduced: &ReducedStates) -> Result<f64> {
    von_neumann([reduced.gamma_b0, reduced.gamma_b1])
}

/// Repeaterless secret-key capacity of a pure-loss channel, in bits per use.
pub fn plob_bound(t_c: f64) -> Result<f64> {
    if !(t_c > 0.0 && t_c < 1.0) {
        return Err(Error::param("t_c", t_c, "PLOB bound needs t_c in (0, 1)"));
    }
    Ok(-(-t_c * t_c).ln_1p() / std::f64::consts::LN_2)
}

/// Non-Gaussianity diagnostics of the scissor output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianityMetrics {
    /// `γ^(B)_1 / γ^(B)_0`
    pub ratio: f64,
    /// `g² λ_A²`
    pub proxy: f64,
}

pub fn gaussianity_metrics(params: &ProtocolParams) -> GaussianityMetrics {
    // the common prefactor of γ^(B)_0 and γ^(B)_1 cancels
    let la2 = params.effective_lambda_a().powi(2);
    let le2 = params.lambda_e().powi(2);
    let (t2, r2) = (params.t_c().powi(2), params.r_c_sq());
    let den = 1.0 - r2 * la2 - t2 * le2;
    let ratio = params.gain_sq() * (t2 * la2 + le2 * (r2 - la2)) / den;
    GaussianityMetrics {
        ratio,
        proxy: params.gain_sq() * la2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_examples() {
        assert_eq!(von_neumann([1.0]).unwrap(), 0.0);
        assert!((von_neumann([0.5, 0.5]).unwrap() - 1.0).abs() < 1e-15);
        assert!((von_neumann([0.25; 4]).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(von_neumann([1.0, -1e-15]).unwrap(), 0.0);
        assert!(von_neumann([1.0, -1e-10]).is_err());
    }

    #[test]
    fn diagonal_blocks_keep_their_entries() {
        let joint = JointState {
            sigma00: vec![0.5, 0.2],
            sigma11: vec![0.1, 0.15],
            sigma01: vec![0.0],
            cutoff: 1,
            tail_bound: 0.0,
            p_q: 1.0,
        };
        let s = spectrum(&joint).unwrap();
        assert_eq!(s.lone_eigenvalue, 0.1);
        assert_eq!(s.block_eigenpairs[0], (0.5, 0.15));
        // last block's partner |2, 1⟩ lies beyond the cutoff
        assert_eq!(s.block_eigenpairs[1], (0.2, 0.0));
    }

    #[test]
    fn vacuum_spectrum_is_pure() {
        let p = ProtocolParams::new(0.0, 1.0, 0.3, 0.0, 0.4, 1.0).unwrap();
        let s = spectrum(&joint_state(&p, DEFAULT_TOL).unwrap()).unwrap();
        let mut ev: Vec<f64> = s.eigenvalues().filter(|&e| e > 0.0).collect();
        ev.sort_by(f64::total_cmp);
        assert_eq!(ev.len(), 1);
        assert!((ev[0] - 1.0).abs() < 1e-15);
        let k = secret_key_rate(&p).unwrap();
        assert_eq!(k.k, 0.0);
    }

    #[test]
    fn two_by_two_invariants() {
        for (a, b, c) in [(0.3, 0.2, 0.1), (1e-9, 1e-3, 3e-7), (0.5, 0.5, 0.5)] {
            let (p, m) = symmetric_2x2_eigen(a, b, c);
            assert!(p >= m);
            assert!((p + m - (a + b)).abs() < 1e-15);
            assert!((p * m - (a * b - c * c)).abs() < 1e-15);
        }
    }

    #[test]
    fn plob_values() {
        assert!((plob_bound(0.5f64.sqrt()).unwrap() - 1.0).abs() < 1e-15);
        assert!((plob_bound(0.99f64.sqrt()).unwrap() - 6.643_856_189_774_724).abs() < 1e-12);
        assert!(plob_bound(1.0).is_err());
        assert!(plob_bound(0.0).is_err());
    }

    #[test]
    fn gaussianity_vacuum_and_proxy() {
        let p = ProtocolParams::new(0.0, 1.0, 0.3, 0.0, 0.4, 1.0).unwrap();
        assert_eq!(gaussianity_metrics(&p).ratio, 0.0);
        let p = ProtocolParams::new(0.359, 1.0, 0.004, 0.0, 0.4, 1.0).unwrap();
        let expect = (1.0 - 0.004f64.powi(2)) / 0.004f64.powi(2) * 0.359f64.powi(2);
        assert!((gaussianity_metrics(&p).proxy - expect).abs() < 1e-9 * expect);
    }

    #[test]
    fn gaussianity_ratio_peaks_at_zero_distance() {
        let base = ProtocolParams::new(0.5, 1.0, 0.2, 0.1, 1.0, 1.0).unwrap();
        let at_one = gaussianity_metrics(&base).ratio;
        for tc in [0.99, 0.9, 0.5, 0.1, 0.01] {
            let r = gaussianity_metrics(&base.with_t_c(tc).unwrap()).ratio;
            assert!(r <= at_one, "t_c = {tc}: {r} > {at_one}");
        }
    }
}
