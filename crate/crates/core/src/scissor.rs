//! Heralded state after the quantum scissor.
//!
//! The scissor keeps only the zero- and one-photon components of Bob's mode,
//! weighting them by `t_s` and `g·t_s = r_s` respectively. Tracing out Eve
//! leaves a state on Alice's mode and the scissor output whose only
//! coherences pair `|n, 0⟩` with `|n + 1, 1⟩`.
//!
//! Every `r_c^{-2}` that appears in the printed coefficient formulas is a
//! removable singularity; the implementations below distribute it into the
//! bracket so that `t_c = 1` (zero distance) evaluates exactly.

use serde::{Deserialize, Serialize};

use crate::channel::{ln_factorial, CompensatedSum};
use crate::error::{Error, Result};
use crate::states::ProtocolParams;

/// Probability that the scissor detectors register the heralding pattern.
pub fn success_prob_qs(params: &ProtocolParams) -> f64 {
    let la2 = params.effective_lambda_a().powi(2);
    let le2 = params.lambda_e().powi(2);
    let t2 = params.t_c().powi(2);
    let r2 = params.r_c_sq();
    let ts2 = params.t_s().powi(2);
    let den = 1.0 - r2 * la2 - t2 * le2;
    let bracket = ts2 * (1.0 - la2) * (1.0 - le2) + t2 * la2 + (r2 - la2) * le2;
    (1.0 - la2) * (1.0 - le2) * bracket / (2.0 * den * den)
}

fn pow_signed(x: f64, n: i64) -> f64 {
    x.powi(n as i32)
}

/// Amplitudes `(V, W)` of the heralded four-mode state on
/// `|n_a⟩|0⟩|n_e⟩|n_a+n_e⟩` and `|n_a⟩|1⟩|n_e⟩|n_a+n_e-1⟩`.
pub fn vw_amplitudes(n_a: u64, n_e: u64, params: &ProtocolParams) -> (f64, f64) {
    let p_q = success_prob_qs(params);
    let la = params.effective_lambda_a();
    let le = params.lambda_e();
    let (t, r, ts, g) = (params.t_c(), params.r_c(), params.t_s(), params.gain());
    let ln_src = (1.0 - la * la).ln() + (1.0 - le * le).ln() - (2.0 * p_q).ln();
    let ln_scale = |n: u64| -> f64 {
        0.5 * (ln_src + ln_factorial(n) - ln_factorial(n_a) - ln_factorial(n_e))
    };
    let powers = la.powi(n_a as i32) * le.powi(n_e as i32);

    let v =
        ts * pow_signed(-t, n_e as i64) * r.powi(n_a as i32) * powers * ln_scale(n_a + n_e).exp();

    let w = if n_a + n_e == 0 {
        0.0
    } else {
        // (-t)^{n_e-1} r^{n_a-1} (n_e r² - n_a t²), split so that a zero index
        // removes its own negative power
        let mut bracket = 0.0;
        if n_e > 0 {
            bracket += n_e as f64 * pow_signed(-t, n_e as i64 - 1) * r.powi(n_a as i32 + 1);
        }
        if n_a > 0 {
            bracket -= n_a as f64 * pow_signed(-t, n_e as i64 + 1) * r.powi(n_a as i32 - 1);
        }
        g * ts * bracket * powers * ln_scale(n_a + n_e - 1).exp()
    };
    (v, w)
}

/// `Σ (V² + W²)` over `n_a, n_e <= cutoff`.
pub fn herald_norm_sq(params: &ProtocolParams, cutoff: u64) -> f64 {
    let mut acc = CompensatedSum::default();
    for n_e in 0..=cutoff {
        for n_a in 0..=cutoff {
            let (v, w) = vw_amplitudes(n_a, n_e, params);
            acc.add(v * v);
            acc.add(w * w);
        }
    }
    acc.value()
}

/// Alice–Bob state after the scissor:
/// `Σ σ⁰⁰_n |n,0⟩⟨n,0| + σ¹¹_n |n,1⟩⟨n,1| + σ⁰¹_n (|n,0⟩⟨n+1,1| + h.c.)`.
///
/// `sigma00` and `sigma11` hold `n = 0..=cutoff`; `sigma01` holds
/// `n = 0..cutoff` so that every stored coherence has both of its diagonal
/// partners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub sigma00: Vec<f64>,
    pub sigma11: Vec<f64>,
    pub sigma01: Vec<f64>,
    pub cutoff: usize,
    /// Upper bound on the trace weight beyond `cutoff`.
    pub tail_bound: f64,
    pub p_q: f64,
}

impl JointState {
    pub fn trace(&self) -> f64 {
        let mut acc = CompensatedSum::default();
        for (a, b) in self.sigma00.iter().zip(&self.sigma11) {
            acc.add(*a);
            acc.add(*b);
        }
        acc.value()
    }
}

/// Shared scalar pieces of the σ and γ closed forms.
struct Coefficients {
    la2: f64,
    le2: f64,
    t2: f64,
    r2: f64,
    ts2: f64,
    g2: f64,
    /// `1 - t_c² λ_E²`
    d: f64,
    /// `(1 - λ_A²)(1 - λ_E²) / (2 P_Q)`
    c0: f64,
    p_q: f64,
}

impl Coefficients {
    fn new(params: &ProtocolParams) -> Self {
        let la2 = params.effective_lambda_a().powi(2);
        let le2 = params.lambda_e().powi(2);
        let t2 = params.t_c().powi(2);
        let p_q = success_prob_qs(params);
        Self {
            la2,
            le2,
            t2,
            r2: params.r_c_sq(),
            ts2: params.t_s().powi(2),
            g2: params.gain_sq(),
            d: 1.0 - t2 * le2,
            c0: (1.0 - la2) * (1.0 - le2) / (2.0 * p_q),
            p_q,
        }
    }

    fn ratio(&self) -> f64 {
        self.r2 * self.la2 / self.d
    }

    /// `λ_A^{2n} r_c^{2n-2}·n`, zero at `n = 0`.
    fn n_term(&self, n: usize) -> f64 {
        if n == 0 {
            0.0
        } else {
            n as f64 * self.la2.powi(n as i32) * self.r2.powi(n as i32 - 1)
        }
    }

    fn sigma00(&self, n: usize) -> f64 {
        self.ts2 * self.c0 * (self.r2 * self.la2).powi(n as i32) / self.d.powi(n as i32 + 1)
    }

    fn sigma11(&self, n: usize) -> f64 {
        let bracket = self.n_term(n) * self.t2 * (1.0 - self.le2).powi(2)
            + self.la2.powi(n as i32) * self.r2.powi(n as i32 + 1) * self.le2;
        self.g2 * self.ts2 * self.c0 * bracket / self.d.powi(n as i32 + 2)
    }

    fn sigma01(&self, n: usize, params: &ProtocolParams) -> f64 {
        let la = params.effective_lambda_a();
        let (la_sq, le_sq) = (self.la2, self.le2);
        params.gain()
            * self.ts2
            * params.t_c()
            * ((n + 1) as f64).sqrt()
            * (1.0 - la_sq)
            * (1.0 - le_sq).powi(2)
            * self.r2.powi(n as i32)
            * la.powi(2 * n as i32 + 1)
            / (2.0 * self.p_q * self.d.powi(n as i32 + 2))
    }

    fn gamma_a(&self, n: usize) -> f64 {
        let bracket = self.n_term(n) * self.g2 * self.ts2 * self.t2 * (1.0 - self.le2).powi(2)
            + self.la2.powi(n as i32) * self.r2.powi(n as i32 + 1) * self.le2
            + self.la2.powi(n as i32) * self.r2.powi(n as i32) * self.ts2 * (1.0 - self.le2);
        self.c0 * bracket / self.d.powi(n as i32 + 2)
    }
}

/// Chooses the series cutoff for the common ratio `q` of the σ and γ
/// arrays. Consecutive γ^(A) terms grow by at most `q·(n+2)/(n+1)`, which
/// bounds the discarded weight after `n` by
/// `γ_n·q/(1-q)·(1 + 1/((1-q)(n+1)))`.
fn series_cutoff(coeffs: &Coefficients, tol: f64) -> (usize, f64) {
    if coeffs.la2 == 0.0 {
        return (0, 0.0);
    }
    let q = coeffs.ratio();
    let mut n = 1usize;
    loop {
        let gamma = coeffs.gamma_a(n);
        let bound = if q == 0.0 {
            0.0
        } else {
            gamma * q / (1.0 - q) * (1.0 + 1.0 / ((1.0 - q) * (n + 1) as f64))
        };
        if bound < tol || n >= 100_000 {
            return (n, bound);
        }
        n += 1;
    }
}

/// σ arrays to the cutoff where the remaining trace weight is below `tol`.
pub fn joint_state(params: &ProtocolParams, tol: f64) -> Result<JointState> {
    if !(tol > 0.0) {
        return Err(Error::param("tol", tol, "must be > 0"));
    }
    let coeffs = Coefficients::new(params);
    let (cutoff, tail_bound) = series_cutoff(&coeffs, tol);
    let sigma00 = (0..=cutoff).map(|n| coeffs.sigma00(n)).collect();
    let sigma11 = (0..=cutoff).map(|n| coeffs.sigma11(n)).collect();
    let sigma01 = (0..cutoff).map(|n| coeffs.sigma01(n, params)).collect();
    Ok(JointState {
        sigma00,
        sigma11,
        sigma01,
        cutoff,
        tail_bound,
        p_q: coeffs.p_q,
    })
}

/// Diagonal reduced states of Alice and of the scissor output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedStates {
    pub gamma_a: Vec<f64>,
    pub gamma_b0: f64,
    pub gamma_b1: f64,
}

/// Reduced states from their own closed forms (not from summing σ), to the
/// cutoff of `joint`.
pub fn reduced_states(joint: &JointState, params: &ProtocolParams) -> ReducedStates {
    let c = Coefficients::new(params);
    let gamma_a = (0..=joint.cutoff).map(|n| c.gamma_a(n)).collect();
    let den = 1.0 - c.r2 * c.la2 - c.t2 * c.le2;
    let gamma_b0 = c.ts2 * c.c0 / den;
    let gamma_b1 = c.g2 * c.ts2 * c.c0 * (c.t2 * c.la2 + c.le2 * (c.r2 - c.la2)) / (den * den);
    ReducedStates {
        gamma_a,
        gamma_b0,
        gamma_b1,
    }
}

/// Density of Bob's `x = (a + a†)/2` homodyne outcome.
pub fn homodyne_pdf(x: f64, reduced: &ReducedStates) -> f64 {
    let (gauss, non_gauss) = homodyne_pdf_parts(x, reduced);
    gauss + non_gauss
}

/// The vacuum-weighted (Gaussian) and one-photon-weighted parts of the
/// homodyne density.
pub fn homodyne_pdf_parts(x: f64, reduced: &ReducedStates) -> (f64, f64) {
    let envelope = (2.0 / std::f64::consts::PI).sqrt() * (-2.0 * x * x).exp();
    (
        envelope * reduced.gamma_b0,
        envelope * 4.0 * reduced.gamma_b1 * x * x,
    )
}

/// Uhlmann fidelity between Alice's and Bob's reduced states. Bob's state
/// lives on `{|0⟩, |1⟩}` and both states are diagonal in the Fock basis, so
/// only `γ^(A)_0` and `γ^(A)_1` contribute.
pub fn fidelity(reduced: &ReducedStates) -> f64 {
    let ga0 = reduced.gamma_a.first().copied().unwrap_or(0.0).max(0.0);
    let ga1 = reduced.gamma_a.get(1).copied().unwrap_or(0.0).max(0.0);
    let f = (ga0 * reduced.gamma_b0.max(0.0)).sqrt() + (ga1 * reduced.gamma_b1.max(0.0)).sqrt();
    (f * f).min(1.0)
}

/// Reduced states and fidelity straight from the parameters.
pub fn fidelity_at(params: &ProtocolParams, tol: f64) -> Result<f64> {
    let joint = joint_state(params, tol)?;
    Ok(fidelity(&reduced_states(&joint, params)))
}
