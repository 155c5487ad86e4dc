//! Brute-force Fock-space simulation of the whole link.
//!
//! Nothing here uses the closed forms from [`crate::channel`] or
//! [`crate::scissor`]. Beam splitters are dense matrices obtained by
//! exponentiating the truncated generator, states are dense tensors, the
//! scissor is an explicit ancilla-photon circuit with photon-counting
//! projection, and Eve is traced out numerically. It is slow on purpose.

pub mod battery;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::states::ProtocolParams;

/// Largest truncation tail the oracle accepts.
pub const ORACLE_TAIL_LIMIT: f64 = 1e-10;

/// Dense amplitudes over several truncated modes, row-major in the order of
/// `mode_labels`.
#[derive(Debug, Clone)]
pub struct DenseState {
    pub amplitudes: Vec<f64>,
    pub dims: Vec<usize>,
    pub mode_labels: Vec<&'static str>,
}

impl DenseState {
    fn offset(&self, index: &[usize]) -> Option<usize> {
        if index.len() != self.dims.len() {
            return None;
        }
        let mut flat = 0;
        for (&i, &d) in index.iter().zip(&self.dims) {
            if i >= d {
                return None;
            }
            flat = flat * d + i;
        }
        Some(flat)
    }

    /// Amplitude at the given per-mode photon numbers; zero outside the
    /// truncated space.
    pub fn amplitude(&self, index: &[usize]) -> f64 {
        self.offset(index).map_or(0.0, |i| self.amplitudes[i])
    }

    pub fn norm_sq(&self) -> f64 {
        self.amplitudes.iter().map(|a| a * a).sum()
    }
}

/// Annihilation operator on `0..=cutoff`.
fn annihilation(cutoff: usize) -> DMatrix<f64> {
    let d = cutoff + 1;
    DMatrix::from_fn(
        d,
        d,
        |i, j| if j == i + 1 { (j as f64).sqrt() } else { 0.0 },
    )
}

/// Two-mode beam splitter on `(0..=cutoff)²`, index `n1·(cutoff+1) + n2`.
///
/// Built as `exp(θ (a b† - a† b))` with `cos θ = t`, so a photon in the first
/// mode goes to `t|1,0⟩ + r|0,1⟩` and a photon in the second to
/// `t|0,1⟩ - r|1,0⟩`. Exact (unitary) on every photon-number block
/// `n1 + n2 <= cutoff`.
pub fn beam_splitter_matrix(cutoff: usize, t: f64) -> DMatrix<f64> {
    let d = cutoff + 1;
    let a = annihilation(cutoff);
    let id = DMatrix::<f64>::identity(d, d);
    let a1 = a.kronecker(&id);
    let a2 = id.kronecker(&a);
    let theta = t.clamp(-1.0, 1.0).acos();
    let generator = (&a1 * a2.transpose() - a1.transpose() * &a2) * theta;
    generator.exp()
}

fn check_tail(lambda: f64, cutoff: usize, other: f64) -> Result<()> {
    let tail = (lambda * lambda).powi(cutoff as i32 + 1) + other;
    if tail >= ORACLE_TAIL_LIMIT {
        let mut required = cutoff;
        while (lambda * lambda).powi(required as i32 + 1) + other >= ORACLE_TAIL_LIMIT
            && required < 10_000
        {
            required += 1;
        }
        return Err(Error::TailBound {
            tail,
            limit: ORACLE_TAIL_LIMIT,
            required_cutoff: required,
        });
    }
    Ok(())
}

fn tmsv_weights(lambda: f64, cutoff: usize) -> Vec<f64> {
    let norm = (1.0 - lambda * lambda).sqrt();
    (0..=cutoff).map(|n| norm * lambda.powi(n as i32)).collect()
}

/// State of modes `(A, E1, B, E2)` after Alice's and Eve's TMSVs meet on the
/// channel beam splitter. `A` and `E1` run to `cutoff`, `B` and `E2` to
/// `2·cutoff`, so no photon is lost to truncation inside the beam splitter.
///
/// Eve's TMSV enters with `(-1)^n` on its amplitudes. That local phase on
/// Eve's kept arm is unobservable for Alice and Bob and aligns the
/// amplitudes with the sign convention of the closed-form Θ.
pub fn channel_state(params: &ProtocolParams, cutoff: usize) -> Result<DenseState> {
    let la = params.effective_lambda_a();
    let le = params.lambda_e();
    let tail_e = (le * le).powi(cutoff as i32 + 1);
    check_tail(la, cutoff, tail_e)?;

    let alice = tmsv_weights(la, cutoff);
    let eve: Vec<f64> = tmsv_weights(le, cutoff)
        .into_iter()
        .enumerate()
        .map(|(n, w)| if n % 2 == 0 { w } else { -w })
        .collect();

    let wide = 2 * cutoff;
    let dw = wide + 1;
    let bs = beam_splitter_matrix(wide, params.t_c());
    let dn = cutoff + 1;
    let mut amplitudes = vec![0.0; dn * dn * dw * dw];
    for a in 0..dn {
        for e1 in 0..dn {
            // |a⟩_{A''} |e1⟩_{E2'}
            let mut input = DVector::<f64>::zeros(dw * dw);
            input[a * dw + e1] = alice[a] * eve[e1];
            let out = &bs * input;
            let base = (a * dn + e1) * dw * dw;
            amplitudes[base..base + dw * dw].copy_from_slice(out.as_slice());
        }
    }
    Ok(DenseState {
        amplitudes,
        dims: vec![dn, dn, dw, dw],
        mode_labels: vec!["A", "E1", "B", "E2"],
    })
}

/// Everything the simulation measures.
#[derive(Debug, Clone)]
pub struct OracleOutput {
    pub cutoff: usize,
    /// Normalised heralded state on `(A, E1, E2, Bs)`.
    pub heralded: DenseState,
    /// `ρ_{A Bs}`, index `n_A·2 + n_Bs`.
    pub rho_ab: DMatrix<f64>,
    pub sigma00: Vec<f64>,
    pub sigma11: Vec<f64>,
    pub sigma01: Vec<f64>,
    pub p_q: f64,
    /// Unnormalised probabilities of the heralded output carrying 0 and 1
    /// photons; they sum to `p_q`.
    pub herald_breakdown: (f64, f64),
}

impl OracleOutput {
    pub fn rho_a(&self) -> DMatrix<f64> {
        let dn = self.cutoff + 1;
        DMatrix::from_fn(dn, dn, |i, j| {
            (0..2).map(|d| self.rho_ab[(i * 2 + d, j * 2 + d)]).sum()
        })
    }

    pub fn rho_b(&self) -> DMatrix<f64> {
        let dn = self.cutoff + 1;
        DMatrix::from_fn(2, 2, |i, j| {
            (0..dn).map(|a| self.rho_ab[(a * 2 + i, a * 2 + j)]).sum()
        })
    }
}

/// Runs the full circuit: sources, channel, scissor and Eve's partial trace.
///
/// Scissor: a single photon on ancilla `C` meets vacuum `D` on a beam
/// splitter of transmission `t_s`; `C` then meets Bob's mode on a balanced
/// beam splitter whose outputs are projected onto zero photons (Bob's arm)
/// and one photon (ancilla arm). `D` carries the scissor output.
pub fn simulate_protocol(params: &ProtocolParams, cutoff: usize) -> Result<OracleOutput> {
    let channel = channel_state(params, cutoff)?;
    let dn = cutoff + 1;
    let dw = 2 * cutoff + 1;

    let anc_bs = beam_splitter_matrix(1, params.t_s());
    // |1⟩_C |0⟩_D has index 1·2 + 0
    let ancilla: Vec<f64> = (0..4).map(|i| anc_bs[(i, 2)]).collect();

    // balanced splitter on (B, C); per-mode dimension covers b + c <= 2·cutoff + 1
    let m = dw + 1;
    let balanced = beam_splitter_matrix(m - 1, std::f64::consts::FRAC_1_SQRT_2);
    // output |0⟩_B |1⟩_C; the mirrored pattern flips the sign of the
    // one-photon branch
    let herald_row = 1;

    let mut chi = vec![0.0; dn * dn * dw * 2];
    for a in 0..dn {
        for e1 in 0..dn {
            for e2 in 0..dw {
                for d in 0..2 {
                    let mut amp = 0.0;
                    for b in 0..dw {
                        let psi = channel.amplitude(&[a, e1, b, e2]);
                        if psi == 0.0 {
                            continue;
                        }
                        for c in 0..2 {
                            let anc = ancilla[c * 2 + d];
                            amp += balanced[(herald_row, b * m + c)] * psi * anc;
                        }
                    }
                    chi[((a * dn + e1) * dw + e2) * 2 + d] = amp;
                }
            }
        }
    }

    let p_q: f64 = chi.iter().map(|x| x * x).sum();
    if p_q <= 0.0 {
        return Err(Error::ZeroState);
    }
    let breakdown = (
        chi.iter().step_by(2).map(|x| x * x).sum::<f64>(),
        chi.iter().skip(1).step_by(2).map(|x| x * x).sum::<f64>(),
    );
    let scale = p_q.sqrt().recip();
    chi.iter_mut().for_each(|x| *x *= scale);
    let heralded = DenseState {
        amplitudes: chi,
        dims: vec![dn, dn, dw, 2],
        mode_labels: vec!["A", "E1", "E2", "Bs"],
    };

    let dim_ab = dn * 2;
    let mut rho_ab = DMatrix::<f64>::zeros(dim_ab, dim_ab);
    for e1 in 0..dn {
        for e2 in 0..dw {
            let column =
                DVector::from_fn(dim_ab, |i, _| heralded.amplitude(&[i / 2, e1, e2, i % 2]));
            rho_ab += &column * column.transpose();
        }
    }

    let sigma00 = (0..dn).map(|n| rho_ab[(2 * n, 2 * n)]).collect();
    let sigma11 = (0..dn).map(|n| rho_ab[(2 * n + 1, 2 * n + 1)]).collect();
    let sigma01 = (0..cutoff)
        .map(|n| rho_ab[(2 * n, 2 * (n + 1) + 1)])
        .collect();

    Ok(OracleOutput {
        cutoff,
        heralded,
        rho_ab,
        sigma00,
        sigma11,
        sigma01,
        p_q,
        herald_breakdown: breakdown,
    })
}

/// Entropy in bits from a full symmetric eigendecomposition.
pub fn dense_entropy(rho: &DMatrix<f64>) -> Result<f64> {
    let asymmetry = (rho - rho.transpose()).amax();
    if asymmetry > 1e-12 {
        return Err(Error::NonHermitian { asymmetry });
    }
    let trace = rho.trace();
    if (trace - 1.0).abs() > 1e-10 {
        return Err(Error::Invariant(format!(
            "density matrix trace {trace} != 1"
        )));
    }
    let eigen = SymmetricEigen::new(rho.clone());
    Ok(eigen
        .eigenvalues
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| -l * l.log2())
        .sum())
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eigen = SymmetricEigen::new(m.clone());
    let roots = eigen.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eigen.eigenvectors * DMatrix::from_diagonal(&roots) * eigen.eigenvectors.transpose()
}

/// Uhlmann fidelity `(tr √(√σ ρ √σ))²` of two states on the same truncated
/// space; the smaller one is zero-padded.
pub fn dense_fidelity(rho: &DMatrix<f64>, sigma: &DMatrix<f64>) -> f64 {
    let dim = rho.nrows().max(sigma.nrows());
    let pad = |m: &DMatrix<f64>| {
        DMatrix::from_fn(dim, dim, |i, j| {
            if i < m.nrows() && j < m.ncols() {
                m[(i, j)]
            } else {
                0.0
            }
        })
    };
    let (rho, sigma) = (pad(rho), pad(sigma));
    let root = psd_sqrt(&sigma);
    let inner = &root * rho * &root;
    let inner = (&inner + inner.transpose()) * 0.5;
    let eigen = SymmetricEigen::new(inner);
    let tr: f64 = eigen.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum();
    tr * tr
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_dev_from_identity(m: &DMatrix<f64>) -> f64 {
        (m - DMatrix::<f64>::identity(m.nrows(), m.ncols())).amax()
    }

    #[test]
    fn fully_transmitting_is_identity() {
        let bs = beam_splitter_matrix(4, 1.0);
        assert!(max_dev_from_identity(&bs) < 1e-15);
    }

    #[test]
    fn single_photon_splitting() {
        let (t, cutoff) = (0.8, 3);
        let d = cutoff + 1;
        let bs = beam_splitter_matrix(cutoff, t);
        let r = (1.0 - t * t).sqrt();
        let idx = |n1: usize, n2: usize| n1 * d + n2;
        assert!((bs[(idx(1, 0), idx(1, 0))] - t).abs() < 1e-14);
        assert!((bs[(idx(0, 1), idx(1, 0))] - r).abs() < 1e-14);
        assert!((bs[(idx(1, 0), idx(0, 1))] + r).abs() < 1e-14);
    }

    #[test]
    fn complete_blocks_are_unitary() {
        let cutoff = 5;
        let d = cutoff + 1;
        let bs = beam_splitter_matrix(cutoff, 0.8);
        for total in 0..=cutoff {
            let states: Vec<usize> = (0..=total).map(|n1| n1 * d + (total - n1)).collect();
            let block = DMatrix::from_fn(states.len(), states.len(), |i, j| {
                bs[(states[i], states[j])]
            });
            let err = max_dev_from_identity(&(block.transpose() * &block));
            assert!(err < 1e-12, "block {total}: {err}");
            // nothing leaks out of the block
            for &s in &states {
                let col_norm: f64 = bs.column(s).iter().map(|x| x * x).sum();
                assert!((col_norm - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn vacuum_herald_probability() {
        let p = ProtocolParams::new(0.0, 1.0, 0.3, 0.0, 0.6, 1.0).unwrap();
        let out = simulate_protocol(&p, 2).unwrap();
        assert!((out.p_q - 0.045).abs() < 1e-12);
    }

    #[test]
    fn rejects_large_tail() {
        let p = ProtocolParams::new(0.8, 1.0, 0.3, 0.0, 0.6, 1.0).unwrap();
        match simulate_protocol(&p, 4) {
            Err(Error::TailBound {
                required_cutoff, ..
            }) => assert!(required_cutoff > 50),
            other => panic!("expected tail error, got {other:?}"),
        }
    }

    #[test]
    fn dense_entropy_examples() {
        let half = DMatrix::<f64>::identity(2, 2) * 0.5;
        assert!((dense_entropy(&half).unwrap() - 1.0).abs() < 1e-14);
        let pure = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        assert!(dense_entropy(&pure).unwrap().abs() < 1e-12);
        let skew = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.5]);
        assert!(matches!(
            dense_entropy(&skew),
            Err(Error::NonHermitian { .. })
        ));
    }
}
