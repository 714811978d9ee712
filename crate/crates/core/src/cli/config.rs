//! Run configuration: a TOML file with `[channel]`, `[detector]`,
//! `[finite_size]`, `[sweep]`, `[optimize]`, `[calibration]` and
//! `[estimation]` sections. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::analysis::{Regime, SweepVariable};
use crate::error::{Error, Result};
use crate::finite_size::{FiniteSizeParams, DEFAULT_DIM_HX, DEFAULT_EPSILON};
use crate::gaussian::transmittance_from_distance;
use crate::protocol::{ChannelParams, DetectorParams, Protocol, DEFAULT_ALPHA_DB_PER_KM};

pub const DEFAULT_EPS: f64 = 0.05;
pub const DEFAULT_BETA: f64 = 0.95;
pub const DEFAULT_TRIALS: usize = 2000;
pub const DEFAULT_ESTIMATION_EPS_PE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Input(format!("unknown format `{other}` (expected csv or json)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizeTarget {
    #[default]
    EtaBs,
    Variance,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub model: Option<Protocol>,
    pub regime: Option<Regime>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub seed: Option<u64>,
    pub channel: Option<ChannelSection>,
    pub detector: Option<DetectorSection>,
    pub finite_size: Option<FiniteSizeSection>,
    pub sweep: Option<SweepSection>,
    pub optimize: Option<OptimizeSection>,
    pub calibration: Option<CalibrationSection>,
    pub estimation: Option<EstimationSection>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub v: Option<f64>,
    pub distance_km: Option<f64>,
    pub transmittance: Option<f64>,
    pub alpha_db_per_km: Option<f64>,
    pub eps: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub eta_d_x: Option<f64>,
    pub eta_d_p: Option<f64>,
    pub v_el_x: Option<f64>,
    pub v_el_p: Option<f64>,
    pub eta_bs: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteSizeSection {
    pub n_total: Option<u64>,
    pub n_key: Option<u64>,
    pub eps_smooth: Option<f64>,
    pub eps_pe: Option<f64>,
    pub eps_pa: Option<f64>,
    pub dim_hx: Option<f64>,
}

/// Either an explicit `grid` or `start`/`stop`/`points` (inclusive).
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub variable: SweepVariable,
    pub grid: Option<Vec<f64>>,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub points: Option<usize>,
    #[serde(default)]
    pub optimize_eta_bs: bool,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSection {
    #[serde(default)]
    pub target: OptimizeTarget,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    pub splitter_csv: Option<PathBuf>,
    pub psd_csv: Option<PathBuf>,
    pub detector_id: Option<String>,
    pub lo_power_dbm: Option<f64>,
    pub eta_d_x: Option<f64>,
    pub eta_d_p: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationSection {
    pub m: Option<usize>,
    pub trials: Option<usize>,
    pub eps_pe: Option<f64>,
}

/// A parsed config file and the directory its relative paths resolve from.
#[derive(Clone, Debug, Default)]
pub struct RunConfig {
    pub file: ConfigFile,
    pub base_dir: PathBuf,
}

/// Channel field left open because a sweep or optimizer sets it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FreeVariable {
    None,
    Variance,
    Distance,
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text)
            .map_err(|e| Error::Input(format!("invalid config: {}", e.message().trim())
                + &describe_span(text, e.span())))?;
        Ok(RunConfig {
            file,
            base_dir: base_dir.to_path_buf(),
        })
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn alpha(&self) -> f64 {
        self.file
            .channel
            .as_ref()
            .and_then(|c| c.alpha_db_per_km)
            .unwrap_or(DEFAULT_ALPHA_DB_PER_KM)
    }

    /// Channel parameters; `free` names the field a sweep or optimizer
    /// will overwrite, which then need not be present.
    pub fn channel(&self, free: FreeVariable) -> Result<ChannelParams> {
        let sec = self.file.channel.clone().unwrap_or_default();
        let v = match (sec.v, free) {
            (Some(v), _) => v,
            (None, FreeVariable::Variance) => 5.0,
            (None, _) => return Err(missing("channel.v")),
        };
        let transmittance = match (sec.distance_km, sec.transmittance, free) {
            (Some(_), Some(_), _) => {
                return Err(Error::Input(
                    "keys `channel.distance_km` and `channel.transmittance` are exclusive".into(),
                ))
            }
            (Some(l), None, _) => transmittance_from_distance(l, self.alpha())
                .map_err(|e| key_error("channel.distance_km", e))?,
            (None, Some(t), _) => t,
            (None, None, FreeVariable::Distance) => 1.0,
            (None, None, _) => return Err(missing("channel.distance_km")),
        };
        let ch = ChannelParams {
            v,
            transmittance,
            eps: sec.eps.unwrap_or(DEFAULT_EPS),
            beta: sec.beta.unwrap_or(DEFAULT_BETA),
        };
        ch.validate().map_err(|e| key_error(channel_key(&ch), e))?;
        Ok(ch)
    }

    pub fn detector(&self) -> Result<DetectorParams> {
        let sec = self.file.detector.clone().unwrap_or_default();
        let d = DetectorParams::default();
        let det = DetectorParams {
            eta_d_x: sec.eta_d_x.unwrap_or(d.eta_d_x),
            eta_d_p: sec.eta_d_p.unwrap_or(d.eta_d_p),
            v_el_x: sec.v_el_x.unwrap_or(d.v_el_x),
            v_el_p: sec.v_el_p.unwrap_or(d.v_el_p),
            eta_bs: sec.eta_bs.unwrap_or(d.eta_bs),
        };
        det.validate().map_err(|e| key_error("detector", e))?;
        Ok(det)
    }

    /// Finite-size parameters, required in the finite regime.
    pub fn finite_size(&self, regime: Regime) -> Result<Option<FiniteSizeParams>> {
        if regime == Regime::Asymptotic {
            return Ok(None);
        }
        let sec = self
            .file
            .finite_size
            .clone()
            .ok_or_else(|| missing("finite_size.n_total"))?;
        let n_total = sec.n_total.ok_or_else(|| missing("finite_size.n_total"))?;
        let fs = FiniteSizeParams {
            n_total,
            n_key: sec.n_key.unwrap_or(n_total / 2),
            eps_smooth: sec.eps_smooth.unwrap_or(DEFAULT_EPSILON),
            eps_pe: sec.eps_pe.unwrap_or(DEFAULT_EPSILON),
            eps_pa: sec.eps_pa.unwrap_or(DEFAULT_EPSILON),
            dim_hx: sec.dim_hx.unwrap_or(DEFAULT_DIM_HX),
        };
        fs.validate().map_err(|e| key_error("finite_size", e))?;
        Ok(Some(fs))
    }

    pub fn sweep(&self) -> Result<SweepSection> {
        self.file.sweep.clone().ok_or_else(|| missing("sweep"))
    }

    pub fn optimize_target(&self) -> OptimizeTarget {
        self.file.optimize.clone().unwrap_or_default().target
    }
}

impl SweepSection {
    pub fn grid(&self) -> Result<Vec<f64>> {
        match (&self.grid, self.start, self.stop, self.points) {
            (Some(g), None, None, None) => Ok(g.clone()),
            (None, Some(a), Some(b), Some(n)) => match n {
                0 => Ok(Vec::new()),
                1 => Ok(vec![a]),
                _ => Ok((0..n)
                    .map(|i| {
                        if i == n - 1 {
                            b
                        } else {
                            a + (b - a) * i as f64 / (n - 1) as f64
                        }
                    })
                    .collect()),
            },
            (None, None, None, None) => Err(missing("sweep.grid")),
            _ => Err(Error::Input(
                "key `sweep.grid`: give either `grid` or all of `start`, `stop`, `points`".into(),
            )),
        }
    }

    pub fn free_variable(&self) -> FreeVariable {
        match self.variable {
            SweepVariable::Distance => FreeVariable::Distance,
            SweepVariable::Variance => FreeVariable::Variance,
            _ => FreeVariable::None,
        }
    }
}

fn missing(key: &str) -> Error {
    Error::Input(format!("missing key `{key}`"))
}

fn key_error(key: &str, e: Error) -> Error {
    Error::Input(format!("key `{key}`: {e}"))
}

/// Best guess at which channel key a validation failure came from.
fn channel_key(ch: &ChannelParams) -> &'static str {
    if !(ch.v >= 1.0) || !ch.v.is_finite() {
        "channel.v"
    } else if !(ch.transmittance > 0.0 && ch.transmittance <= 1.0) {
        "channel.transmittance"
    } else if !(ch.eps >= 0.0) || !ch.eps.is_finite() {
        "channel.eps"
    } else {
        "channel.beta"
    }
}

fn describe_span(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(r) => {
            let line = text[..r.start.min(text.len())].matches('\n').count() + 1;
            format!(" (line {line})")
        }
        None => String::new(),
    }
}
