//! Parameter conversions and source-side state preparation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default truncation tolerance for every geometric Fock series in the crate.
pub const DEFAULT_TOL: f64 = 1e-15;

/// Physical knobs of the link.
///
/// `lambda_a` is the source squeezing parameter, `t_z` the catalysis
/// beam-splitter transmission, `t_s` the scissor transmission, `lambda_e`
/// Eve's cloner squeezing, `t_c` the channel transmission amplitude and
/// `beta` the reconciliation efficiency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    lambda_a: f64,
    t_z: f64,
    t_s: f64,
    lambda_e: f64,
    t_c: f64,
    beta: f64,
}

impl ProtocolParams {
    pub fn new(
        lambda_a: f64,
        t_z: f64,
        t_s: f64,
        lambda_e: f64,
        t_c: f64,
        beta: f64,
    ) -> Result<Self> {
        check_half_open(lambda_a, "lambda_a", "must lie in [0, 1)")?;
        if !(t_z > 0.0 && t_z <= 1.0) {
            return Err(Error::param("t_z", t_z, "must lie in (0, 1]"));
        }
        if !(t_s > 0.0 && t_s < 1.0) {
            return Err(Error::param("t_s", t_s, "must lie in (0, 1)"));
        }
        check_half_open(lambda_e, "lambda_e", "must lie in [0, 1)")?;
        if !(t_c > 0.0 && t_c <= 1.0) {
            return Err(Error::param("t_c", t_c, "must lie in (0, 1]"));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::param("beta", beta, "must lie in (0, 1]"));
        }
        Ok(Self {
            lambda_a,
            t_z,
            t_s,
            lambda_e,
            t_c,
            beta,
        })
    }

    /// Parameters in the lab units used throughout the CLI: excess noise in
    /// shot-noise units and fibre length in km. Catalysis is disabled
    /// (`t_z = 1`).
    pub fn from_link(
        lambda_a: f64,
        t_s: f64,
        eps: f64,
        distance_km: f64,
        beta: f64,
    ) -> Result<Self> {
        let lambda_e = lambda_e_from_excess_noise(eps)?;
        let t_c = t_c_from_distance(distance_km)?;
        Self::new(lambda_a, 1.0, t_s, lambda_e, t_c, beta)
    }

    pub fn with_distance(self, distance_km: f64) -> Result<Self> {
        let t_c = t_c_from_distance(distance_km)?;
        Self::new(
            self.lambda_a,
            self.t_z,
            self.t_s,
            self.lambda_e,
            t_c,
            self.beta,
        )
    }

    pub fn with_t_c(self, t_c: f64) -> Result<Self> {
        Self::new(
            self.lambda_a,
            self.t_z,
            self.t_s,
            self.lambda_e,
            t_c,
            self.beta,
        )
    }

    pub fn with_beta(self, beta: f64) -> Result<Self> {
        Self::new(
            self.lambda_a,
            self.t_z,
            self.t_s,
            self.lambda_e,
            self.t_c,
            beta,
        )
    }

    pub fn lambda_a(&self) -> f64 {
        self.lambda_a
    }

    pub fn t_z(&self) -> f64 {
        self.t_z
    }

    pub fn t_s(&self) -> f64 {
        self.t_s
    }

    pub fn lambda_e(&self) -> f64 {
        self.lambda_e
    }

    pub fn t_c(&self) -> f64 {
        self.t_c
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Squeezing parameter seen by the channel. Catalysis on a TMSV arm only
    /// rescales it by `t_z`.
    pub fn effective_lambda_a(&self) -> f64 {
        self.t_z * self.lambda_a
    }

    /// Channel reflection amplitude.
    pub fn r_c(&self) -> f64 {
        (1.0 - self.t_c * self.t_c).max(0.0).sqrt()
    }

    /// `r_c²` computed without going through a square root.
    pub fn r_c_sq(&self) -> f64 {
        (1.0 - self.t_c * self.t_c).max(0.0)
    }

    /// Scissor gain; exceeds one exactly when `t_s² < 1/2`.
    pub fn gain(&self) -> f64 {
        self.gain_sq().sqrt()
    }

    pub fn gain_sq(&self) -> f64 {
        (1.0 - self.t_s * self.t_s) / (self.t_s * self.t_s)
    }

    pub fn excess_noise(&self) -> f64 {
        excess_noise_from_lambda_e(self.lambda_e)
    }

    pub fn distance_km(&self) -> f64 {
        // t_c is validated at construction
        distance_from_t_c(self.t_c).unwrap_or(f64::NAN)
    }
}

fn check_half_open(v: f64, name: &'static str, reason: &'static str) -> Result<()> {
    if (0.0..1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::param(name, v, reason))
    }
}

/// Channel transmission amplitude for a fibre of `distance_km` (0.2 dB/km).
pub fn t_c_from_distance(distance_km: f64) -> Result<f64> {
    if !(distance_km >= 0.0) || !distance_km.is_finite() {
        return Err(Error::param(
            "distance_km",
            distance_km,
            "must be finite and >= 0",
        ));
    }
    Ok(10f64.powf(-0.01 * distance_km))
}

pub fn distance_from_t_c(t_c: f64) -> Result<f64> {
    if !(t_c > 0.0 && t_c <= 1.0) {
        return Err(Error::param("t_c", t_c, "must lie in (0, 1]"));
    }
    Ok(-100.0 * t_c.log10())
}

/// Eve's cloner parameter for a given excess noise (shot-noise units).
pub fn lambda_e_from_excess_noise(eps: f64) -> Result<f64> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::param("eps", eps, "must be finite and >= 0"));
    }
    Ok((eps / (eps + 2.0)).sqrt())
}

pub fn excess_noise_from_lambda_e(lambda_e: f64) -> f64 {
    let l2 = lambda_e * lambda_e;
    2.0 * l2 / (1.0 - l2)
}

/// Transmitter- and receiver-referred equivalents of the excess noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalentNoise {
    pub transmitter: f64,
    pub receiver: f64,
}

pub fn equivalent_noises(eps: f64, t_c: f64) -> Result<EquivalentNoise> {
    if !(eps >= 0.0) {
        return Err(Error::param("eps", eps, "must be >= 0"));
    }
    if !(t_c > 0.0 && t_c <= 1.0) {
        return Err(Error::param("t_c", t_c, "must lie in (0, 1]"));
    }
    let t2 = t_c * t_c;
    let receiver = (1.0 - t2) * eps;
    Ok(EquivalentNoise {
        transmitter: receiver / t2,
        receiver,
    })
}

/// Two-mode Fock amplitudes Γ(n_A, n_A′), both indices in `0..=cutoff`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    amplitudes: Vec<f64>,
    cutoff: usize,
    tail: f64,
}

impl CoefficientMatrix {
    pub fn zeros(cutoff: usize) -> Self {
        let dim = cutoff + 1;
        Self {
            amplitudes: vec![0.0; dim * dim],
            cutoff,
            tail: 0.0,
        }
    }

    /// Builds a matrix from row-major amplitudes of size `(cutoff+1)²`.
    pub fn from_rows(cutoff: usize, amplitudes: Vec<f64>, tail: f64) -> Result<Self> {
        let dim = cutoff + 1;
        if amplitudes.len() != dim * dim {
            return Err(Error::Invariant(format!(
                "expected {} amplitudes for cutoff {cutoff}, got {}",
                dim * dim,
                amplitudes.len()
            )));
        }
        Ok(Self {
            amplitudes,
            cutoff,
            tail,
        })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Norm weight discarded by truncation (an upper bound when known
    /// analytically, zero otherwise).
    pub fn tail(&self) -> f64 {
        self.tail
    }

    pub fn get(&self, n_a: usize, n_a_prime: usize) -> f64 {
        if n_a > self.cutoff || n_a_prime > self.cutoff {
            return 0.0;
        }
        self.amplitudes[n_a * (self.cutoff + 1) + n_a_prime]
    }

    pub fn set(&mut self, n_a: usize, n_a_prime: usize, value: f64) {
        let dim = self.cutoff + 1;
        self.amplitudes[n_a * dim + n_a_prime] = value;
    }

    pub fn norm_sq(&self) -> f64 {
        self.amplitudes.iter().map(|a| a * a).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let dim = self.cutoff + 1;
        self.amplitudes
            .iter()
            .enumerate()
            .map(move |(i, &a)| (i / dim, i % dim, a))
    }
}

/// Smallest `N` such that `ratio^(N+1) < tol`, i.e. the cutoff that leaves a
/// geometric tail below `tol`.
pub fn geometric_cutoff(ratio: f64, tol: f64) -> usize {
    if ratio <= 0.0 {
        return 0;
    }
    let mut n = ((tol.ln() / ratio.ln()).ceil() as i64 - 1).max(0) as usize;
    // correct for floating rounding on either side
    while n > 0 && ratio.powi(n as i32) < tol {
        n -= 1;
    }
    while ratio.powi(n as i32 + 1) >= tol {
        n += 1;
    }
    n
}

/// TMSV amplitudes `sqrt(1-λ²) λⁿ` on the diagonal.
pub fn tmsv_coefficients(lambda: f64, cutoff: usize) -> Result<CoefficientMatrix> {
    if !(lambda >= 0.0) {
        return Err(Error::param("lambda", lambda, "must be >= 0"));
    }
    if lambda >= 1.0 {
        return Err(Error::param(
            "lambda",
            lambda,
            "TMSV with lambda >= 1 is unnormalizable",
        ));
    }
    let mut m = CoefficientMatrix::zeros(cutoff);
    let norm = (1.0 - lambda * lambda).sqrt();
    let mut power = 1.0;
    for n in 0..=cutoff {
        m.set(n, n, norm * power);
        power *= lambda;
    }
    m.tail = (lambda * lambda).powi(cutoff as i32 + 1);
    Ok(m)
}

/// TMSV truncated at the default geometric cutoff for `tol`.
pub fn tmsv_auto(lambda: f64, tol: f64) -> Result<CoefficientMatrix> {
    tmsv_coefficients(lambda, geometric_cutoff(lambda * lambda, tol))
}

/// Zero-photon catalysis on the second mode: every amplitude is weighted by
/// `t_z^{n_A′}` and the result renormalised. Returns the new state and the
/// heralding probability.
pub fn zpc_transform(gamma: &CoefficientMatrix, t_z: f64) -> Result<(CoefficientMatrix, f64)> {
    if !(0.0..=1.0).contains(&t_z) {
        return Err(Error::param("t_z", t_z, "must lie in [0, 1]"));
    }
    if gamma.norm_sq() == 0.0 {
        return Err(Error::ZeroState);
    }
    let dim = gamma.cutoff + 1;
    let weights: Vec<f64> = (0..dim).map(|n| t_z.powi(n as i32)).collect();
    let mut amplitudes: Vec<f64> = gamma
        .iter()
        .map(|(_, n_prime, a)| weights[n_prime] * a)
        .collect();
    let p_z: f64 = amplitudes.iter().map(|a| a * a).sum();
    if p_z == 0.0 {
        return Err(Error::ZeroState);
    }
    let scale = p_z.sqrt().recip();
    amplitudes.iter_mut().for_each(|a| *a *= scale);
    let out = CoefficientMatrix {
        amplitudes,
        cutoff: gamma.cutoff,
        tail: gamma.tail,
    };
    Ok((out, p_z))
}

/// Closed-form catalysis success probability for a TMSV input.
pub fn zpc_success_tmsv(lambda: f64, t_z: f64) -> f64 {
    (1.0 - lambda * lambda) / (1.0 - t_z * t_z * lambda * lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_conversions() {
        assert_eq!(t_c_from_distance(0.0).unwrap(), 1.0);
        assert!((t_c_from_distance(50.0).unwrap() - 0.316_227_766_016_837_9).abs() < 1e-15);
        let t = t_c_from_distance(308.0).unwrap();
        // PLOB crossing transmittance 1 - 2^(-1e-6) = 6.931e-7 sits at 307.96 km
        assert!((t * t - 6.93e-7).abs() < 0.02e-7, "{}", t * t);
        assert!(t_c_from_distance(-1.0).is_err());
        assert!(distance_from_t_c(0.0).is_err());
        assert!(distance_from_t_c(1.2).is_err());
    }

    #[test]
    fn excess_noise_conversions() {
        assert_eq!(lambda_e_from_excess_noise(0.0).unwrap(), 0.0);
        assert!((lambda_e_from_excess_noise(2.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        let l = lambda_e_from_excess_noise(0.001).unwrap();
        assert!((l - (0.001f64 / 2.001).sqrt()).abs() < 1e-16);
        assert!((l - 0.022355).abs() < 1e-6);
        assert!(lambda_e_from_excess_noise(-0.1).is_err());
        for eps in [0.0, 1e-4, 0.001, 0.05, 1.0, 7.0] {
            let back = excess_noise_from_lambda_e(lambda_e_from_excess_noise(eps).unwrap());
            assert!((back - eps).abs() < 1e-14, "{eps} -> {back}");
        }
    }

    #[test]
    fn equivalent_noise_lossless_and_zero_t() {
        let n = equivalent_noises(0.3, 1.0).unwrap();
        assert_eq!((n.transmitter, n.receiver), (0.0, 0.0));
        assert!(equivalent_noises(0.3, 0.0).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(ProtocolParams::new(1.0, 1.0, 0.5, 0.0, 0.5, 1.0).is_err());
        assert!(ProtocolParams::new(0.5, 1.0, 0.0, 0.0, 0.5, 1.0).is_err());
        assert!(ProtocolParams::new(0.5, 1.0, 0.5, 0.0, 0.0, 1.0).is_err());
        assert!(ProtocolParams::new(0.5, 1.0, 0.5, 0.0, 0.5, 0.0).is_err());
        assert!(ProtocolParams::new(0.5, 0.0, 0.5, 0.0, 0.5, 1.0).is_err());
        assert!(ProtocolParams::new(f64::NAN, 1.0, 0.5, 0.0, 0.5, 1.0).is_err());
        let p = ProtocolParams::new(0.5, 1.0, 0.5, 0.0, 0.6, 1.0).unwrap();
        assert!((p.t_c().powi(2) + p.r_c().powi(2) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gain_exceeds_one_below_half_transmittance() {
        for ts in [0.1, 0.5, 0.7, 0.707, 0.708, 0.9] {
            let p = ProtocolParams::new(0.5, 1.0, ts, 0.0, 0.5, 1.0).unwrap();
            assert_eq!(p.gain() > 1.0, ts * ts < 0.5, "t_s = {ts}");
        }
    }

    #[test]
    fn tmsv_entries_and_cutoff() {
        let v = tmsv_coefficients(0.0, 3).unwrap();
        assert_eq!(v.get(0, 0), 1.0);
        assert_eq!(v.norm_sq(), 1.0);
        let t = tmsv_coefficients(0.5, 4).unwrap();
        assert!((t.get(2, 2) - 0.75f64.sqrt() * 0.25).abs() < 1e-15);
        assert!((t.get(2, 2) - 0.21651).abs() < 1e-5);
        assert_eq!(t.get(2, 1), 0.0);
        assert_eq!(geometric_cutoff(0.815 * 0.815, 1e-15), 84);
        assert!(tmsv_coefficients(1.0, 3).is_err());
    }

    #[test]
    fn zpc_special_cases() {
        let t = tmsv_coefficients(0.8, 200).unwrap();
        let (same, p) = zpc_transform(&t, 1.0).unwrap();
        assert_eq!(p, t.norm_sq());
        for (a, b, v) in same.iter() {
            assert!((v - t.get(a, b) / p.sqrt()).abs() < 1e-15);
        }
        let (vac, p0) = zpc_transform(&t, 0.0).unwrap();
        assert!((p0 - 0.36).abs() < 1e-15);
        assert!((vac.get(0, 0) - 1.0).abs() < 1e-15);
        assert!(zpc_transform(&CoefficientMatrix::zeros(2), 0.5).is_err());
    }
}
