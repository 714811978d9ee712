//! Optimizers and parameter sweeps over the key-rate models.

use std::cell::Cell;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finite_size::{finite_keyrate, FiniteSizeParams};
use crate::gaussian::transmittance_from_distance;
use crate::protocol::{ChannelParams, DetectorParams, KeyRateReport, Protocol};

pub const ETA_BS_BRACKET: (f64, f64) = (0.01, 0.99);
pub const VARIANCE_BRACKET: (f64, f64) = (1.1, 60.0);
pub const EXCESS_NOISE_BRACKET: (f64, f64) = (0.0, 1.0);
/// Points in the coarse grid stage of [`maximize`].
pub const COARSE_GRID_POINTS: usize = 99;
/// Final bracket width of the golden-section stage.
pub const ARGMAX_TOL: f64 = 1e-5;
pub const EXCESS_NOISE_TOL: f64 = 1e-6;
pub const DISTANCE_TOL_KM: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Asymptotic,
    Finite,
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "asymptotic" => Ok(Regime::Asymptotic),
            "finite" => Ok(Regime::Finite),
            other => Err(Error::Input(format!(
                "unknown regime `{other}` (expected asymptotic or finite)"
            ))),
        }
    }
}

/// Asymptotic rate when `fs` is `None`, finite-size rate otherwise.
pub fn evaluate(
    ch: &ChannelParams,
    det: &DetectorParams,
    protocol: Protocol,
    fs: Option<&FiniteSizeParams>,
) -> Result<KeyRateReport> {
    ch.validate()?;
    det.validate()?;
    match fs {
        None => protocol.keyrate(ch, det),
        Some(fs) => finite_keyrate(ch, det, fs, protocol),
    }
}

/// Rate as an objective: a failed parameter estimation counts as `-∞`.
fn objective_rate(
    ch: &ChannelParams,
    det: &DetectorParams,
    protocol: Protocol,
    fs: Option<&FiniteSizeParams>,
) -> Result<f64> {
    match evaluate(ch, det, protocol, fs) {
        Ok(r) => Ok(r.rate),
        Err(Error::EstimationFailure(_)) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimumStatus {
    Ok,
    /// The rate is negative over the whole bracket.
    AllNegative,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimumResult {
    pub argmax: f64,
    pub max_rate: f64,
    pub bracket: (f64, f64),
    pub evaluations: usize,
    pub status: OptimumStatus,
}

/// Coarse grid of [`COARSE_GRID_POINTS`] followed by golden-section
/// refinement around the best grid point.
pub fn maximize<F>(f: F, lo: f64, hi: f64) -> Result<OptimumResult>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Domain(format!("invalid bracket [{lo}, {hi}]")));
    }
    let count = Cell::new(0usize);
    let eval = |x: f64| -> Result<f64> {
        count.set(count.get() + 1);
        f(x)
    };

    let n = COARSE_GRID_POINTS;
    let step = (hi - lo) / (n - 1) as f64;
    let grid: Vec<f64> = (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
        .collect();
    let mut values = Vec::with_capacity(n);
    for &x in &grid {
        values.push(eval(x)?);
    }
    let k = values
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > values[best] { i } else { best });
    let (mut best_x, mut best_f) = (grid[k], values[k]);

    if best_f.is_finite() {
        let mut a = grid[k.saturating_sub(1)];
        let mut b = grid[(k + 1).min(n - 1)];
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let mut fc = eval(c)?;
        let mut fd = eval(d)?;
        while b - a > ARGMAX_TOL {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_phi * (b - a);
                fc = eval(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_phi * (b - a);
                fd = eval(d)?;
            }
        }
        for (x, v) in [(c, fc), (d, fd)] {
            if v > best_f {
                best_x = x;
                best_f = v;
            }
        }
    }

    Ok(OptimumResult {
        argmax: best_x,
        max_rate: best_f,
        bracket: (lo, hi),
        evaluations: count.get(),
        status: if best_f < 0.0 {
            OptimumStatus::AllNegative
        } else {
            OptimumStatus::Ok
        },
    })
}

/// Best receiver splitter transmittance for the biased model; the `eta_bs`
/// field of `det` is ignored.
pub fn optimize_eta_bs(
    ch: &ChannelParams,
    det: &DetectorParams,
    fs: Option<&FiniteSizeParams>,
) -> Result<OptimumResult> {
    ch.validate()?;
    det.with_eta_bs(0.5).validate()?;
    let (lo, hi) = ETA_BS_BRACKET;
    maximize(
        |x| objective_rate(ch, &det.with_eta_bs(x), Protocol::Biased, fs),
        lo,
        hi,
    )
}

/// Best EPR variance; the `v` field of `ch` is ignored.
pub fn optimize_variance(
    ch: &ChannelParams,
    det: &DetectorParams,
    protocol: Protocol,
    fs: Option<&FiniteSizeParams>,
) -> Result<OptimumResult> {
    ch.with_v(5.0).validate()?;
    det.validate()?;
    let (lo, hi) = VARIANCE_BRACKET;
    maximize(|v| objective_rate(&ch.with_v(v), det, protocol, fs), lo, hi)
}

/// Largest excess noise with a positive rate; 0 when even `ε = 0` gives
/// no key. The `eps` field of `ch` is ignored.
pub fn tolerable_excess_noise(
    ch: &ChannelParams,
    det: &DetectorParams,
    protocol: Protocol,
    fs: Option<&FiniteSizeParams>,
) -> Result<f64> {
    let (lo, hi) = EXCESS_NOISE_BRACKET;
    let rate = |eps: f64| objective_rate(&ch.with_eps(eps), det, protocol, fs);
    if rate(lo)? <= 0.0 {
        return Ok(0.0);
    }
    if rate(hi)? > 0.0 {
        return Err(Error::NotBracketed { lo, hi });
    }
    bisect_sign_change(rate, lo, hi, EXCESS_NOISE_TOL)
}

/// Distance (km) at which the rate crosses zero inside `[lo_km, hi_km]`.
/// The `transmittance` field of `ch` is ignored.
pub fn max_distance(
    ch: &ChannelParams,
    det: &DetectorParams,
    protocol: Protocol,
    fs: Option<&FiniteSizeParams>,
    alpha_db_per_km: f64,
    lo_km: f64,
    hi_km: f64,
) -> Result<f64> {
    let rate = |l: f64| -> Result<f64> {
        let t = transmittance_from_distance(l, alpha_db_per_km)?;
        objective_rate(&ch.with_transmittance(t), det, protocol, fs)
    };
    if !(rate(lo_km)? > 0.0) || rate(hi_km)? > 0.0 {
        return Err(Error::NotBracketed {
            lo: lo_km,
            hi: hi_km,
        });
    }
    bisect_sign_change(rate, lo_km, hi_km, DISTANCE_TOL_KM)
}

/// Bisection for `f(lo) > 0 ≥ f(hi)`.
fn bisect_sign_change<F>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Fiber length in km.
    Distance,
    EtaBs,
    /// EPR variance `V`.
    Variance,
    ExcessNoise,
    /// Total block length `N`; the key fraction of the fixed parameters is kept.
    BlockLength,
}

impl std::str::FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "distance" => Ok(SweepVariable::Distance),
            "eta_bs" => Ok(SweepVariable::EtaBs),
            "variance" => Ok(SweepVariable::Variance),
            "excess_noise" => Ok(SweepVariable::ExcessNoise),
            "block_length" => Ok(SweepVariable::BlockLength),
            other => Err(Error::Input(format!("unknown sweep variable `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub grid: Vec<f64>,
    pub channel: ChannelParams,
    pub detector: DetectorParams,
    pub finite_size: Option<FiniteSizeParams>,
    pub protocol: Protocol,
    pub regime: Regime,
    /// Re-optimize `η_BS` at every point (biased model only).
    pub optimize_eta_bs: bool,
    pub alpha_db_per_km: f64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Input("sweep grid is empty".into()));
        }
        if self.grid.iter().any(|x| !x.is_finite()) {
            return Err(Error::Input("sweep grid contains a non-finite value".into()));
        }
        if self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Input("sweep grid must be strictly increasing".into()));
        }
        if self.regime == Regime::Finite && self.finite_size.is_none() {
            return Err(Error::Input("finite regime needs finite-size parameters".into()));
        }
        if self.variable == SweepVariable::BlockLength && self.regime != Regime::Finite {
            return Err(Error::Input("block_length sweeps need the finite regime".into()));
        }
        if self.optimize_eta_bs {
            if self.protocol != Protocol::Biased {
                return Err(Error::Input("optimize_eta_bs needs the biased model".into()));
            }
            if self.variable == SweepVariable::EtaBs {
                return Err(Error::Input("cannot optimize the swept variable".into()));
            }
        }
        Ok(())
    }

    fn point(&self, x: f64) -> Result<(ChannelParams, DetectorParams, Option<FiniteSizeParams>)> {
        let mut ch = self.channel;
        let mut det = self.detector;
        let mut fs = match self.regime {
            Regime::Asymptotic => None,
            Regime::Finite => self.finite_size,
        };
        match self.variable {
            SweepVariable::Distance => {
                ch.transmittance = transmittance_from_distance(x, self.alpha_db_per_km)?
            }
            SweepVariable::EtaBs => det.eta_bs = x,
            SweepVariable::Variance => ch.v = x,
            SweepVariable::ExcessNoise => ch.eps = x,
            SweepVariable::BlockLength => {
                let base = fs.ok_or_else(|| Error::Input("missing finite-size parameters".into()))?;
                if !(x >= 2.0) || x.fract() != 0.0 || x > u64::MAX as f64 {
                    return Err(Error::Domain(format!("block length {x} is not an integer ≥ 2")));
                }
                let n_total = x as u64;
                let n_key = ((n_total as f64 * base.key_fraction()).round() as u64)
                    .clamp(1, n_total - 1);
                fs = Some(FiniteSizeParams::new(
                    n_total,
                    n_key,
                    base.eps_smooth,
                    base.eps_pe,
                    base.eps_pa,
                    base.dim_hx,
                )?);
            }
        }
        Ok((ch, det, fs))
    }

    fn evaluate_point(&self, x: f64) -> Result<(KeyRateReport, Option<f64>)> {
        let (ch, mut det, fs) = self.point(x)?;
        let mut eta_bs = None;
        if self.optimize_eta_bs {
            let opt = optimize_eta_bs(&ch, &det, fs.as_ref())?;
            det.eta_bs = opt.argmax;
            eta_bs = Some(opt.argmax);
        }
        Ok((evaluate(&ch, &det, self.protocol, fs.as_ref())?, eta_bs))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub grid_value: f64,
    /// `None` when the point failed; see `status`.
    pub report: Option<KeyRateReport>,
    /// Optimized splitter transmittance when the sweep re-optimizes it.
    pub eta_bs: Option<f64>,
    /// `ok` or the error message for this point.
    pub status: String,
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.report.is_some()
    }
}

/// One row per grid point, in grid order. Points run in parallel; a failing
/// point is recorded in its row and does not stop the sweep.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    Ok(spec
        .grid
        .par_iter()
        .map(|&x| match spec.evaluate_point(x) {
            Ok((report, eta_bs)) => SweepRow {
                grid_value: x,
                report: Some(report),
                eta_bs,
                status: "ok".into(),
            },
            Err(e) => SweepRow {
                grid_value: x,
                report: None,
                eta_bs: None,
                status: e.to_string(),
            },
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{HomodyneDetector, DEFAULT_ALPHA_DB_PER_KM};
    use approx::assert_abs_diff_eq;

    fn channel(l: f64) -> ChannelParams {
        ChannelParams::at_distance(5.0, l, DEFAULT_ALPHA_DB_PER_KM, 0.05, 0.95).unwrap()
    }

    #[test]
    fn maximize_parabola() {
        let r = maximize(|x| Ok(1.0 - (x - 0.3217).powi(2)), 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(r.argmax, 0.3217, epsilon = 1e-5);
        assert_eq!(r.status, OptimumStatus::Ok);
        assert!(r.evaluations > COARSE_GRID_POINTS);
    }

    #[test]
    fn maximize_edge_and_negative() {
        let r = maximize(|x| Ok(-1.0 - x), 0.0, 1.0).unwrap();
        assert_eq!(r.argmax, 0.0);
        assert_eq!(r.max_rate, -1.0);
        assert_eq!(r.status, OptimumStatus::AllNegative);
        assert!(maximize(Ok, 1.0, 1.0).is_err());
    }

    #[test]
    fn symmetric_detector_optimum_is_half() {
        let det = DetectorParams::symmetric(HomodyneDetector::new(0.7, 0.1).unwrap());
        for l in [0.0, 10.0] {
            let r = optimize_eta_bs(&channel(l), &det, None).unwrap();
            assert_abs_diff_eq!(r.argmax, 0.5, epsilon = 1e-4);
        }
    }

    #[test]
    fn symmetric_detector_objective_is_mirror_symmetric() {
        // Past ~25 km the balanced split is a local minimum and the two
        // bracket edges tie, so only the mirror symmetry is asserted.
        let det = DetectorParams::symmetric(HomodyneDetector::new(0.7, 0.1).unwrap());
        for l in [10.0, 50.0, 100.0] {
            let ch = channel(l);
            for e in [0.01, 0.2, 0.37, 0.5] {
                let a = Protocol::Biased.keyrate(&ch, &det.with_eta_bs(e)).unwrap().rate;
                let b = Protocol::Biased.keyrate(&ch, &det.with_eta_bs(1.0 - e)).unwrap().rate;
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn optimum_not_worse_than_half() {
        let det = DetectorParams::default();
        for l in [10.0, 50.0, 70.0] {
            let ch = channel(l);
            let r = optimize_eta_bs(&ch, &det, None).unwrap();
            let half = Protocol::Biased.keyrate(&ch, &det).unwrap().rate;
            assert!(r.max_rate >= half);
            assert!(r.bracket.0 <= r.argmax && r.argmax <= r.bracket.1);
        }
    }

    #[test]
    fn variance_optimum_dominates_samples() {
        let det = DetectorParams::default();
        let ch = channel(30.0);
        let r = optimize_variance(&ch, &det, Protocol::Biased, None).unwrap();
        for v in [5.0, 40.0] {
            assert!(r.max_rate >= Protocol::Biased.keyrate(&ch.with_v(v), &det).unwrap().rate);
        }
    }

    #[test]
    fn tolerable_noise_brackets_zero() {
        let det = DetectorParams::default();
        let ch = channel(20.0);
        let tol = tolerable_excess_noise(&ch, &det, Protocol::Biased, None).unwrap();
        let r = |e: f64| Protocol::Biased.keyrate(&ch.with_eps(e), &det).unwrap().rate;
        assert!(r(tol - 1e-4) > 0.0);
        assert!(r(tol + 1e-4) <= 0.0);
    }

    #[test]
    fn tolerable_noise_zero_when_no_key() {
        let det = DetectorParams::default();
        let fs = FiniteSizeParams::half_split(1_000_000_000).unwrap();
        let tol = tolerable_excess_noise(&channel(150.0), &det, Protocol::Biased, Some(&fs)).unwrap();
        assert_eq!(tol, 0.0);
    }

    #[test]
    fn max_distance_sign_change() {
        let det = DetectorParams::default();
        let ch = channel(0.0);
        let l = max_distance(&ch, &det, Protocol::Biased, None, 0.2, 0.0, 300.0).unwrap();
        let r = |l: f64| {
            let t = transmittance_from_distance(l, 0.2).unwrap();
            Protocol::Biased.keyrate(&ch.with_transmittance(t), &det).unwrap().rate
        };
        assert!(r(l - 1e-3) > 0.0 && r(l + 1e-3) <= 0.0);
        assert!(matches!(
            max_distance(&ch, &det, Protocol::Biased, None, 0.2, 0.0, 10.0),
            Err(Error::NotBracketed { .. })
        ));
    }

    fn distance_spec(grid: Vec<f64>) -> SweepSpec {
        SweepSpec {
            variable: SweepVariable::Distance,
            grid,
            channel: channel(0.0),
            detector: DetectorParams::default(),
            finite_size: None,
            protocol: Protocol::Biased,
            regime: Regime::Asymptotic,
            optimize_eta_bs: false,
            alpha_db_per_km: 0.2,
        }
    }

    #[test]
    fn distance_sweep_decreasing() {
        let rows = run_sweep(&distance_spec((0..15).map(|i| 10.0 * i as f64).collect())).unwrap();
        assert!(rows.iter().all(SweepRow::is_ok));
        let rates: Vec<f64> = rows.iter().map(|r| r.report.as_ref().unwrap().rate).collect();
        assert!(rates.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn sweep_rejects_bad_grids() {
        assert!(run_sweep(&distance_spec(vec![])).is_err());
        assert!(run_sweep(&distance_spec(vec![1.0, 1.0])).is_err());
    }

    #[test]
    fn sweep_records_failures_in_row() {
        let mut spec = distance_spec(vec![10.0, 20.0]);
        spec.variable = SweepVariable::EtaBs;
        spec.grid = vec![0.5, 1.5];
        let rows = run_sweep(&spec).unwrap();
        assert!(rows[0].is_ok());
        assert!(!rows[1].is_ok());
        assert!(rows[1].status.contains("η_BS"));
    }

    #[test]
    fn block_length_sweep_keeps_fraction() {
        let mut spec = distance_spec(vec![1e9, 1e11]);
        spec.channel = channel(50.0);
        spec.variable = SweepVariable::BlockLength;
        spec.regime = Regime::Finite;
        spec.finite_size = Some(FiniteSizeParams::half_split(1000).unwrap());
        let rows = run_sweep(&spec).unwrap();
        let r: Vec<f64> = rows.iter().map(|r| r.report.as_ref().unwrap().rate).collect();
        assert!(r[0] < r[1]);
        let direct = finite_keyrate(
            &channel(50.0),
            &DetectorParams::default(),
            &FiniteSizeParams::half_split(1_000_000_000).unwrap(),
            Protocol::Biased,
        )
        .unwrap();
        assert_eq!(r[0], direct.rate);
    }
}
