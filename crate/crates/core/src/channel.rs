//! Four-mode amplitudes after the entangling-cloner beam splitter.
//!
//! Alice's transmitted arm (photon number `n_A`) and Eve's injected arm
//! (`n_E`) meet on a beam splitter of transmission `t_c`. The outgoing state
//! is `Σ Θ |n_A⟩_A |n_B⟩_B |n_E⟩_E1 |n_A + n_E - n_B⟩_E2`.

use crate::error::{Error, Result};
use crate::states::ProtocolParams;

const EXACT_FACTORIALS: [u64; 21] = {
    let mut table = [1u64; 21];
    let mut i = 1;
    while i < 21 {
        table[i] = table[i - 1] * i as u64;
        i += 1;
    }
    table
};

/// `n!` exactly for `n <= 20`, through the log-gamma function beyond.
pub fn factorial(n: u64) -> f64 {
    match EXACT_FACTORIALS.get(n as usize) {
        Some(&f) => f as f64,
        None => ln_factorial(n).exp(),
    }
}

pub fn ln_factorial(n: u64) -> f64 {
    match EXACT_FACTORIALS.get(n as usize) {
        Some(&f) => (f as f64).ln(),
        None => statrs::function::gamma::ln_gamma(n as f64 + 1.0),
    }
}

pub fn ln_binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// `x^n` in log form with the convention `0^0 = 1`.
fn ln_pow(x: f64, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        n as f64 * x.ln()
    }
}

/// Neumaier-compensated sum.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Terms `(a)_k (b)_k / ((c)_k k!)` of a terminating `₂F₁`, as
/// `(ln|coeff|, sign)` pairs. Stops at the first vanishing Pochhammer factor.
fn terminating_coefficients(a: i64, b: i64, c: i64) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 1.0)];
    let (mut ln_mag, mut sign) = (0.0f64, 1.0f64);
    let mut k = 0i64;
    loop {
        let num = (a + k) as f64 * (b + k) as f64;
        if num == 0.0 {
            break;
        }
        let den = (c + k) as f64 * (k + 1) as f64;
        ln_mag += num.abs().ln() - den.abs().ln();
        sign *= num.signum() * den.signum();
        out.push((ln_mag, sign));
        k += 1;
    }
    out
}

fn check_terminating(a: i64, c: i64) -> Result<()> {
    if a > 0 || c < 1 {
        return Err(Error::NonTerminating { a, c });
    }
    Ok(())
}

/// `₂F₁(a, b; c; z)` for a non-positive integer `a`, where the series is a
/// polynomial of degree at most `|a|`.
pub fn hyp2f1_terminating(a: i64, b: i64, c: i64, z: f64) -> Result<f64> {
    check_terminating(a, c)?;
    let mut acc = CompensatedSum::default();
    let mut zk = 1.0;
    for (k, (ln_mag, sign)) in terminating_coefficients(a, b, c).into_iter().enumerate() {
        if k > 0 {
            zk *= z;
        }
        acc.add(sign * ln_mag.exp() * zk);
    }
    Ok(acc.value())
}

/// `r^m · ₂F₁(a, b; c; -t²/r²)` with the `r` powers cancelled term by term,
/// so that `r = 0` is a valid input. Requires `m >= 2·deg`.
pub fn hyp2f1_scaled(a: i64, b: i64, c: i64, t: f64, r: f64, m: u64) -> Result<f64> {
    check_terminating(a, c)?;
    let coeffs = terminating_coefficients(a, b, c);
    let degree = coeffs.len() as u64 - 1;
    if m < 2 * degree {
        return Err(Error::Invariant(format!(
            "scaled hypergeometric needs m >= {}, got {m}",
            2 * degree
        )));
    }
    let mut acc = CompensatedSum::default();
    for (k, (ln_mag, sign)) in coeffs.into_iter().enumerate() {
        let k = k as u64;
        let ln_term = ln_mag + ln_pow(t, 2 * k) + ln_pow(r, m - 2 * k);
        let alt = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
        acc.add(alt * sign * ln_term.exp());
    }
    Ok(acc.value())
}

/// Photon numbers of Alice's kept mode, Bob's received mode and Eve's kept
/// mode. The fourth mode carries `n_a + n_e - n_b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FockIndexTriple {
    pub n_a: u64,
    pub n_b: u64,
    pub n_e: u64,
}

impl FockIndexTriple {
    pub fn new(n_a: u64, n_b: u64, n_e: u64) -> Self {
        Self { n_a, n_b, n_e }
    }

    pub fn is_valid(&self) -> bool {
        self.n_b <= self.n_a + self.n_e
    }

    pub fn n_e2(&self) -> Option<u64> {
        (self.n_a + self.n_e).checked_sub(self.n_b)
    }
}

struct ThetaInputs {
    ln_common: f64,
    t: f64,
    r: f64,
}

impl ThetaInputs {
    fn new(idx: FockIndexTriple, n_e2: u64, params: &ProtocolParams) -> Self {
        let FockIndexTriple { n_a, n_b, n_e } = idx;
        let la = params.effective_lambda_a();
        let le = params.lambda_e();
        let ln_norm = 0.5 * ((1.0 - la * la).ln() + (1.0 - le * le).ln());
        let ln_fact =
            0.5 * (ln_factorial(n_b) + ln_factorial(n_e2) - ln_factorial(n_a) - ln_factorial(n_e));
        Self {
            ln_common: ln_norm + ln_pow(la, n_a) + ln_pow(le, n_e) + ln_fact,
            t: params.t_c(),
            r: params.r_c(),
        }
    }
}

/// Branch valid for `n_b <= n_e`.
fn theta_low(idx: FockIndexTriple, inp: &ThetaInputs) -> f64 {
    let FockIndexTriple { n_a, n_b, n_e } = idx;
    let d = n_e - n_b;
    let sign = if d % 2 == 0 { 1.0 } else { -1.0 };
    let series = hyp2f1_scaled(
        -(n_a as i64),
        -(n_b as i64),
        1 + d as i64,
        inp.t,
        inp.r,
        n_a + n_b,
    )
    .expect("degree <= min(n_a, n_b)");
    sign * (inp.ln_common + ln_pow(inp.t, d) + ln_binomial(n_e, n_b)).exp() * series
}

/// Branch valid for `n_e <= n_b <= n_a + n_e` (the printed form uses the
/// strict lower bound; both agree at `n_b = n_e`).
fn theta_high(idx: FockIndexTriple, inp: &ThetaInputs) -> f64 {
    let FockIndexTriple { n_a, n_b, n_e } = idx;
    let d = n_b - n_e;
    let series = hyp2f1_scaled(
        n_b as i64 - n_a as i64 - n_e as i64,
        -(n_e as i64),
        1 + d as i64,
        inp.t,
        inp.r,
        n_a + n_e - n_b + n_e,
    )
    .expect("degree <= min(n_a + n_e - n_b, n_e)");
    (inp.ln_common + ln_pow(inp.t, d) + ln_binomial(n_a, d)).exp() * series
}

/// Amplitude Θ of the post-channel four-mode state. Zero outside
/// `0 <= n_b <= n_a + n_e`.
pub fn theta(idx: FockIndexTriple, params: &ProtocolParams) -> f64 {
    let Some(n_e2) = idx.n_e2() else {
        return 0.0;
    };
    let inp = ThetaInputs::new(idx, n_e2, params);
    if idx.n_b <= idx.n_e {
        theta_low(idx, &inp)
    } else {
        theta_high(idx, &inp)
    }
}

/// `Σ Θ²` over `n_a, n_e <= cutoff` and every admissible `n_b`, summed in
/// the fixed order `n_e` (outer), `n_a`, `n_b` (inner).
pub fn theta_norm_sq(params: &ProtocolParams, cutoff: u64) -> f64 {
    let mut acc = CompensatedSum::default();
    for n_e in 0..=cutoff {
        for n_a in 0..=cutoff {
            for n_b in 0..=n_a + n_e {
                let th = theta(FockIndexTriple::new(n_a, n_b, n_e), params);
                acc.add(th * th);
            }
        }
    }
    acc.value()
}
