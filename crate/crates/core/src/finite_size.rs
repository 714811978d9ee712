//! Finite-size key rate: privacy-amplification penalty, worst-case channel
//! from parameter estimation on `m` samples, and block-length planning.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{domain, Error, Result};
use crate::gaussian::{epr_channel_cov, CovMat};
use crate::protocol::{ChannelParams, DetectorParams, KeyRateReport, Protocol};

/// Default for every failure probability.
pub const DEFAULT_EPSILON: f64 = 1e-10;
/// Default raw-key alphabet dimension.
pub const DEFAULT_DIM_HX: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteSizeParams {
    /// Total exchanged symbols `N`.
    pub n_total: u64,
    /// Symbols kept for the key, `n`; the other `m = N - n` go to estimation.
    pub n_key: u64,
    /// Smoothing parameter `ε̄`.
    pub eps_smooth: f64,
    pub eps_pe: f64,
    pub eps_pa: f64,
    pub dim_hx: f64,
}

impl FiniteSizeParams {
    pub fn new(
        n_total: u64,
        n_key: u64,
        eps_smooth: f64,
        eps_pe: f64,
        eps_pa: f64,
        dim_hx: f64,
    ) -> Result<Self> {
        let fs = FiniteSizeParams {
            n_total,
            n_key,
            eps_smooth,
            eps_pe,
            eps_pa,
            dim_hx,
        };
        fs.validate()?;
        Ok(fs)
    }

    /// `n = m = N/2` with all failure probabilities at `1e-10` and `dim H_X = 2`.
    pub fn half_split(n_total: u64) -> Result<Self> {
        Self::new(
            n_total,
            n_total / 2,
            DEFAULT_EPSILON,
            DEFAULT_EPSILON,
            DEFAULT_EPSILON,
            DEFAULT_DIM_HX,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_key < 1 || self.n_key >= self.n_total {
            return Err(domain(format!(
                "need 1 ≤ n < N, got n = {} and N = {}",
                self.n_key, self.n_total
            )));
        }
        for (name, e) in [
            ("eps_smooth", self.eps_smooth),
            ("eps_pe", self.eps_pe),
            ("eps_pa", self.eps_pa),
        ] {
            if !(e > 0.0 && e < 1.0) {
                return Err(domain(format!("{name} = {e} outside (0, 1)")));
            }
        }
        if !(self.dim_hx > 0.0) || !self.dim_hx.is_finite() {
            return Err(domain(format!("dim_hx = {} must be positive", self.dim_hx)));
        }
        Ok(())
    }

    /// Estimation symbols `m = N - n`.
    pub fn n_estimation(&self) -> u64 {
        self.n_total - self.n_key
    }

    pub fn key_fraction(&self) -> f64 {
        self.n_key as f64 / self.n_total as f64
    }
}

/// Confidence coefficient `z` with `(1 - erf(z/√2))/2 = ε_PE/2`, i.e. the
/// one-sided standard-normal quantile at tail probability `ε_PE/2`.
///
/// `eps_pe = 1` is accepted and gives `z = 0`.
pub fn z_from_epsilon(eps_pe: f64) -> Result<f64> {
    if !(eps_pe > 0.0 && eps_pe <= 1.0) {
        return Err(domain(format!("ε_PE = {eps_pe} outside (0, 1]")));
    }
    let f = |z: f64| erfc(z / std::f64::consts::SQRT_2) - eps_pe;
    let (mut lo, mut hi) = (0.0_f64, 40.0_f64);
    if f(lo) <= 0.0 {
        return Ok(0.0);
    }
    // erfc is decreasing; keep f(lo) > 0 ≥ f(hi).
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Privacy-amplification penalty
/// `(2 dim H_X + 3) √(log₂(2/ε̄)/n) + (2/n) log₂(1/ε_PA)`.
pub fn delta_n(fs: &FiniteSizeParams) -> Result<f64> {
    fs.validate()?;
    let n = fs.n_key as f64;
    Ok((2.0 * fs.dim_hx + 3.0) * ((2.0 / fs.eps_smooth).log2() / n).sqrt()
        + 2.0 / n * (1.0 / fs.eps_pa).log2())
}

/// Pessimistic channel compatible with the estimates except with
/// probability `ε_PE`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseChannel {
    /// Lower bound on the amplitude `t = √T`, clamped at 0.
    pub t_min: f64,
    /// Upper bound on the noise variance `σ² = 1 + Tε`.
    pub sigma2_max: f64,
    /// `t_min²`.
    pub transmittance: f64,
    /// `(σ²_max - 1) / t_min²`; infinite when estimation failed.
    pub eps: f64,
}

impl WorstCaseChannel {
    /// True when the amplitude bound collapsed to zero.
    pub fn estimation_failed(&self) -> bool {
        self.t_min <= 0.0
    }
}

/// Worst-case `(t_min, σ²_max)` with the expected estimator values
/// `t̂ = √T`, `σ̂² = 1 + Tε` substituted. `m` may be infinite.
pub fn worst_case_channel(
    transmittance: f64,
    eps: f64,
    v: f64,
    m: f64,
    eps_pe: f64,
) -> Result<WorstCaseChannel> {
    if !(transmittance > 0.0 && transmittance <= 1.0) {
        return Err(domain(format!("T = {transmittance} outside (0, 1]")));
    }
    if !(eps >= 0.0) {
        return Err(domain(format!("ε = {eps} must be ≥ 0")));
    }
    if !(v > 1.0) {
        return Err(domain(format!("V = {v} must be > 1 for parameter estimation")));
    }
    if !(m >= 1.0) {
        return Err(domain(format!("m = {m} must be ≥ 1")));
    }
    let z = z_from_epsilon(eps_pe)?;
    let sigma2 = 1.0 + transmittance * eps;
    let t_min = (transmittance.sqrt() - z * (sigma2 / (m * (v - 1.0))).sqrt()).max(0.0);
    let sigma2_max = sigma2 + z * sigma2 * std::f64::consts::SQRT_2 / m.sqrt();
    let t_wc = t_min * t_min;
    let eps_wc = if t_wc > 0.0 {
        (sigma2_max - 1.0) / t_wc
    } else {
        f64::INFINITY
    };
    Ok(WorstCaseChannel {
        t_min,
        sigma2_max,
        transmittance: t_wc,
        eps: eps_wc,
    })
}

/// Worst-case Alice-Bob covariance: `γ_AB1` with the correlation set to
/// `t_min √(V²-1)` and Bob's variance raised by `Δ_B`.
pub fn worst_case_cov(ch: &ChannelParams, m: f64, eps_pe: f64) -> Result<CovMat> {
    ch.validate()?;
    let wc = worst_case_channel(ch.transmittance, ch.eps, ch.v, m, eps_pe)?;
    if wc.estimation_failed() {
        return Err(Error::EstimationFailure(format!(
            "t_min ≤ 0 with m = {m} samples"
        )));
    }
    let z = z_from_epsilon(eps_pe)?;
    let (t, v) = (ch.transmittance, ch.v);
    let sigma2 = 1.0 + t * ch.eps;
    let delta_z = -z * (sigma2 / (m * (v - 1.0))).sqrt();
    let delta_b = z / m.sqrt() * (sigma2 * std::f64::consts::SQRT_2 - 2.0 * (t * (v - 1.0)).sqrt())
        + z * z * sigma2 / m;
    let dz = delta_z * (v * v - 1.0).sqrt();
    #[rustfmt::skip]
    let shift = DMatrix::from_row_slice(4, 4, &[
        0.0, 0.0, dz,      0.0,
        0.0, 0.0, 0.0,     -dz,
        dz,  0.0, delta_b, 0.0,
        0.0, -dz, 0.0,     delta_b,
    ]);
    let gamma = CovMat::new(epr_channel_cov(v, t, ch.eps)?.into_matrix() + shift)?;
    gamma
        .validate_physical()
        .map_err(|e| Error::EstimationFailure(format!("worst-case matrix not physical: {e}")))?;
    Ok(gamma)
}

/// `R = (n/N) [β I_AB(nominal) - χ_BE(T_wc, ε_wc) - Δ(n)]`.
///
/// Negative rates are returned as computed.
pub fn finite_keyrate(
    ch: &ChannelParams,
    det: &DetectorParams,
    fs: &FiniteSizeParams,
    protocol: Protocol,
) -> Result<KeyRateReport> {
    ch.validate()?;
    fs.validate()?;
    let wc = worst_case_channel(
        ch.transmittance,
        ch.eps,
        ch.v,
        fs.n_estimation() as f64,
        fs.eps_pe,
    )?;
    if wc.estimation_failed() {
        return Err(Error::EstimationFailure(format!(
            "t_min ≤ 0 at T = {} with m = {}",
            ch.transmittance,
            fs.n_estimation()
        )));
    }
    let i_ab = protocol.iab(ch, det)?;
    let worst = ch.with_transmittance(wc.transmittance).with_eps(wc.eps);
    let holevo = protocol.holevo(&worst, det)?;
    let delta = delta_n(fs)?;
    let rate = fs.key_fraction() * (ch.beta * i_ab - holevo.chi_be - delta);
    Ok(KeyRateReport {
        rate,
        i_ab,
        chi_be: holevo.chi_be,
        delta_n: Some(delta),
        eigenvalues_joint: holevo.eigenvalues_joint,
        eigenvalues_conditional: holevo.eigenvalues_conditional,
        transmittance_used: wc.transmittance,
        eps_used: wc.eps,
    })
}

/// Estimation samples needed to pin excess noise to `±delta_eps`:
/// `ceil(2 z² / (T² Δε²))`.
pub fn required_block_length(transmittance: f64, delta_eps: f64, eps_pe: f64) -> Result<u64> {
    if !(transmittance > 0.0 && transmittance <= 1.0) {
        return Err(domain(format!("T = {transmittance} outside (0, 1]")));
    }
    if !(delta_eps > 0.0) || !delta_eps.is_finite() {
        return Err(domain(format!("Δε = {delta_eps} must be positive")));
    }
    let z = z_from_epsilon(eps_pe)?;
    let m = 2.0 * z * z / (transmittance * transmittance * delta_eps * delta_eps);
    Ok(m.ceil() as u64)
}
