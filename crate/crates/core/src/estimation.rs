//! Monte Carlo check of channel parameter estimation.
//!
//! Data follow `y = t x + z` with `x ~ N(0, v_a)` and `z ~ N(0, σ²)`.
//! Random numbers come from ChaCha20 (`rand_chacha`) seeded with a 64-bit
//! seed; trial `i` of an experiment uses stream `i` of that seed. Normal
//! variates use the Box-Muller transform, so a seed fixes every sample on
//! every platform.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::finite_size::z_from_epsilon;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    /// Alice's modulation values.
    pub x: Vec<f64>,
    /// Bob's measurements.
    pub y: Vec<f64>,
    pub seed: u64,
}

impl SampleBatch {
    pub fn m(&self) -> usize {
        self.x.len()
    }

    /// Writes `index,x,y` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "index,x,y")?;
        for (i, (x, y)) in self.x.iter().zip(&self.y).enumerate() {
            writeln!(out, "{i},{x:.16e},{y:.16e}")?;
        }
        out.flush()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlEstimate {
    pub t_hat: f64,
    pub sigma2_hat: f64,
}

/// Pair of independent standard normals.
fn box_muller<R: Rng>(rng: &mut R) -> (f64, f64) {
    // gen() is in [0, 1); shift to (0, 1] so the log is finite.
    let u1 = 1.0 - rng.gen::<f64>();
    let u2 = rng.gen::<f64>();
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
    (r * c, r * s)
}

fn check_channel(t: f64, sigma2: f64, v_a: f64, m: usize) -> Result<()> {
    if !t.is_finite() {
        return Err(domain(format!("t = {t} is not finite")));
    }
    if !(sigma2 >= 0.0) || !sigma2.is_finite() {
        return Err(domain(format!("σ² = {sigma2} must be ≥ 0")));
    }
    if !(v_a > 0.0) || !v_a.is_finite() {
        return Err(domain(format!("V_A = {v_a} must be positive")));
    }
    if m < 2 {
        return Err(domain(format!("m = {m} must be ≥ 2")));
    }
    Ok(())
}

fn generate(t: f64, sigma2: f64, v_a: f64, m: usize, rng: &mut ChaCha20Rng) -> (Vec<f64>, Vec<f64>) {
    let (sx, sz) = (v_a.sqrt(), sigma2.sqrt());
    let mut x = Vec::with_capacity(m);
    let mut y = Vec::with_capacity(m);
    for _ in 0..m {
        let (g1, g2) = box_muller(rng);
        let xi = sx * g1;
        x.push(xi);
        y.push(t * xi + sz * g2);
    }
    (x, y)
}

fn rng_for(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `m` samples through the linear channel, reproducible from `seed`.
pub fn simulate_channel(t: f64, sigma2: f64, v_a: f64, m: usize, seed: u64) -> Result<SampleBatch> {
    check_channel(t, sigma2, v_a, m)?;
    let (x, y) = generate(t, sigma2, v_a, m, &mut rng_for(seed, 0));
    Ok(SampleBatch { x, y, seed })
}

/// `t̂ = Σxy / Σx²`, `σ̂² = Σ(y - t̂x)² / m`.
pub fn ml_estimate(batch: &SampleBatch) -> Result<MlEstimate> {
    ml_estimate_slices(&batch.x, &batch.y)
}

fn ml_estimate_slices(x: &[f64], y: &[f64]) -> Result<MlEstimate> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::Degenerate("empty batch".into()));
    }
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all modulation values are zero".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let t_hat = sxy / sxx;
    let sigma2_hat = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - t_hat * a).powi(2))
        .sum::<f64>()
        / x.len() as f64;
    Ok(MlEstimate { t_hat, sigma2_hat })
}

/// `(t_min, σ²_max)` for `m` samples; `v` is the EPR variance, `V - 1 = V_A`.
/// `m` may be infinite.
pub fn confidence_bounds(est: &MlEstimate, m: f64, v: f64, eps_pe: f64) -> Result<(f64, f64)> {
    if !(m >= 1.0) {
        return Err(domain(format!("m = {m} must be ≥ 1")));
    }
    if !(v > 1.0) {
        return Err(domain(format!("V = {v} must be > 1")));
    }
    if !(est.sigma2_hat >= 0.0) || !est.t_hat.is_finite() {
        return Err(domain("invalid estimate"));
    }
    let z = z_from_epsilon(eps_pe)?;
    let s = est.sigma2_hat;
    let t_min = est.t_hat - z * (s / (m * (v - 1.0))).sqrt();
    let sigma2_max = s + z * s * std::f64::consts::SQRT_2 / m.sqrt();
    Ok((t_min, sigma2_max))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    /// Fraction of trials with `t ≥ t_min`.
    pub coverage_t: f64,
    /// Fraction of trials with `σ² ≤ σ²_max`.
    pub coverage_sigma: f64,
    pub trials: usize,
}

/// Empirical coverage of [`confidence_bounds`] over independent trials.
pub fn coverage_experiment(
    t: f64,
    sigma2: f64,
    v_a: f64,
    m: usize,
    eps_pe: f64,
    trials: usize,
    seed: u64,
) -> Result<Coverage> {
    check_channel(t, sigma2, v_a, m)?;
    if trials < 100 {
        return Err(domain(format!("trials = {trials} must be ≥ 100")));
    }
    z_from_epsilon(eps_pe)?;
    let hits = (0..trials as u64)
        .into_par_iter()
        .map(|i| -> Result<(usize, usize)> {
            let (x, y) = generate(t, sigma2, v_a, m, &mut rng_for(seed, i));
            let est = ml_estimate_slices(&x, &y)?;
            let (t_min, s_max) = confidence_bounds(&est, m as f64, v_a + 1.0, eps_pe)?;
            // A few ulps of slack so a noiseless batch, where t̂ = t up to
            // rounding, counts as covered.
            let ulps = 8.0 * f64::EPSILON;
            Ok((
                usize::from(t >= t_min - ulps * t.abs()),
                usize::from(sigma2 <= s_max + ulps * sigma2),
            ))
        })
        .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;
    Ok(Coverage {
        coverage_t: hits.0 as f64 / trials as f64,
        coverage_sigma: hits.1 as f64 / trials as f64,
        trials,
    })
}

/// Estimates from `trials` independent batches, in trial order.
pub fn estimate_trials(
    t: f64,
    sigma2: f64,
    v_a: f64,
    m: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<MlEstimate>> {
    check_channel(t, sigma2, v_a, m)?;
    (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let (x, y) = generate(t, sigma2, v_a, m, &mut rng_for(seed, i));
            ml_estimate_slices(&x, &y)
        })
        .collect()
}
