//! Reduction of receiver calibration data: splitter output powers and
//! balanced-detector noise spectra.
//!
//! Powers are in dBm (1 mW reference) and converted to linear mW before any
//! arithmetic. The only log-domain operation is the noise-floor ratio in
//! [`v_el_from_psd`].

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::gaussian::Quadrature;
use crate::protocol::{DetectorParams, HomodyneDetector};

/// Tolerated gap between a printed and the computed port-1 ratio, in
/// percentage points.
pub const RATIO_WARNING_PCT: f64 = 0.2;

pub const SPLITTER_HEADER: [&str; 4] = ["input_port", "input_dbm", "out1_dbm", "out2_dbm"];
pub const SPLITTER_EXPECTED_COLUMN: &str = "expected_ratio_pct";
pub const PSD_HEADER: [&str; 6] = [
    "detector_id",
    "quadrature",
    "lo_power_dbm",
    "freq_hz",
    "total_dbm",
    "electronic_dbm",
];

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

fn finite(name: &str, x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(domain(format!("{name} = {x} is not finite")))
    }
}

/// Output powers of a two-port splitter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerPair {
    pub p1_dbm: f64,
    pub p2_dbm: f64,
    pub input_dbm: Option<f64>,
}

/// Linear power fractions `(p1, p2) / (p1 + p2)`.
pub fn splitting_ratio(pair: &PowerPair) -> Result<(f64, f64)> {
    let p1 = dbm_to_mw(finite("p1_dbm", pair.p1_dbm)?);
    let p2 = dbm_to_mw(finite("p2_dbm", pair.p2_dbm)?);
    let r1 = p1 / (p1 + p2);
    Ok((r1, 1.0 - r1))
}

/// `input - 10 log10(p1 + p2)` in dB.
pub fn insertion_loss(pair: &PowerPair) -> Result<f64> {
    let input = pair
        .input_dbm
        .ok_or_else(|| Error::Input("insertion loss needs the input power".into()))?;
    let input = finite("input_dbm", input)?;
    let out = dbm_to_mw(finite("p1_dbm", pair.p1_dbm)?) + dbm_to_mw(finite("p2_dbm", pair.p2_dbm)?);
    Ok(input - mw_to_dbm(out))
}

/// Electronic noise in shot-noise units from the dark and LO-on PSD levels.
pub fn v_el_from_psd(p_el_dbm: f64, p_snu_dbm: f64) -> Result<f64> {
    let diff = finite("p_el_dbm", p_el_dbm)? - finite("p_snu_dbm", p_snu_dbm)?;
    Ok(10f64.powf(diff / 10.0))
}

/// Dark-noise level that yields `v_el` against a given LO-on level.
pub fn psd_from_v_el(v_el: f64, p_snu_dbm: f64) -> Result<f64> {
    if !(v_el > 0.0) || !v_el.is_finite() {
        return Err(domain(format!("v_el = {v_el} must be positive")));
    }
    Ok(finite("p_snu_dbm", p_snu_dbm)? + 10.0 * v_el.log10())
}

/// Transmittance of the beam splitter that models electronic noise.
pub fn eta_e_from_vel(v_el: f64) -> Result<f64> {
    if !(v_el >= 0.0) || !v_el.is_finite() {
        return Err(domain(format!("v_el = {v_el} must be ≥ 0")));
    }
    Ok(1.0 / (1.0 + v_el))
}

/// One noise-spectrum reading of a balanced detector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdRecord {
    pub detector_id: String,
    pub quadrature: Quadrature,
    pub lo_power_dbm: f64,
    pub freq_hz: f64,
    /// PSD level with the LO on.
    pub total_noise_dbm: f64,
    /// PSD level with the LO off.
    pub electronic_noise_dbm: f64,
}

impl PsdRecord {
    /// Electronic noise of this reading, in SNU.
    pub fn v_el(&self) -> Result<f64> {
        v_el_from_psd(self.electronic_noise_dbm, self.total_noise_dbm)
    }

    /// Shot-noise power `total - electronic` in linear units.
    pub fn shot_noise_mw(&self) -> f64 {
        dbm_to_mw(self.total_noise_dbm) - dbm_to_mw(self.electronic_noise_dbm)
    }

    /// Non-fatal problems with the reading.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.total_noise_dbm < self.electronic_noise_dbm {
            out.push(format!(
                "{} {:?} at {} dBm: total noise {} dBm below electronic noise {} dBm",
                self.detector_id,
                self.quadrature,
                self.lo_power_dbm,
                self.total_noise_dbm,
                self.electronic_noise_dbm
            ));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotNoiseFit {
    /// Shot-noise PSD per mW of LO.
    pub slope: f64,
    pub intercept: f64,
    /// Largest `|residual| / |observed|` over the records.
    pub max_relative_residual: f64,
}

/// Least-squares line through shot-noise power versus LO power, both linear.
pub fn shot_noise_fit(records: &[PsdRecord]) -> Result<ShotNoiseFit> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .map(|r| (dbm_to_mw(r.lo_power_dbm), r.shot_noise_mw()))
        .collect();
    if pts.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(domain("non-finite PSD record"));
    }
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return Err(Error::Degenerate("need at least two records".into()));
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > f64::EPSILON * mx * mx * n) {
        return Err(Error::Degenerate("LO powers are not distinct".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_relative_residual = pts
        .iter()
        .map(|&(x, y)| {
            let r = (y - (slope * x + intercept)).abs();
            if y != 0.0 {
                r / y.abs()
            } else {
                r
            }
        })
        .fold(0.0, f64::max);
    Ok(ShotNoiseFit {
        slope,
        intercept,
        max_relative_residual,
    })
}

/// Receiver parameters from one x-quadrature and one p-quadrature reading.
/// The splitter is taken as balanced.
pub fn detector_params_from_calibration(
    x_record: &PsdRecord,
    p_record: &PsdRecord,
    eta_d_x: f64,
    eta_d_p: f64,
) -> Result<DetectorParams> {
    let x = HomodyneDetector::new(eta_d_x, x_record.v_el()?)?;
    let p = HomodyneDetector::new(eta_d_p, p_record.v_el()?)?;
    let det = DetectorParams::from_branches(x, p, 0.5);
    det.validate()?;
    Ok(det)
}

/// Picks the x and p readings of one detector at one LO power.
///
/// `detector_id` may be omitted when the records name a single detector;
/// `lo_power_dbm` defaults to the highest LO power with both quadratures.
pub fn select_psd_pair<'a>(
    records: &'a [PsdRecord],
    detector_id: Option<&str>,
    lo_power_dbm: Option<f64>,
) -> Result<(&'a PsdRecord, &'a PsdRecord)> {
    let id = match detector_id {
        Some(id) => id.to_string(),
        None => {
            let mut ids: Vec<&str> = records.iter().map(|r| r.detector_id.as_str()).collect();
            ids.sort_unstable();
            ids.dedup();
            match ids.as_slice() {
                [one] => one.to_string(),
                [] => return Err(Error::Input("no PSD records".into())),
                _ => {
                    return Err(Error::Input(format!(
                        "several detectors present ({}); choose one with detector_id",
                        ids.join(", ")
                    )))
                }
            }
        }
    };
    let find = |q: Quadrature, lo: f64| {
        records
            .iter()
            .find(|r| r.detector_id == id && r.quadrature == q && r.lo_power_dbm == lo)
    };
    let lo = match lo_power_dbm {
        Some(lo) => lo,
        None => records
            .iter()
            .filter(|r| r.detector_id == id && r.quadrature == Quadrature::X)
            .map(|r| r.lo_power_dbm)
            .filter(|&lo| find(Quadrature::P, lo).is_some())
            .fold(f64::NEG_INFINITY, f64::max),
    };
    match (find(Quadrature::X, lo), find(Quadrature::P, lo)) {
        (Some(x), Some(p)) => Ok((x, p)),
        _ => Err(Error::Input(format!(
            "no x/p record pair for detector `{id}` at LO power {lo} dBm"
        ))),
    }
}

/// One row of a splitter measurement file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitterRow {
    pub input_port: String,
    pub input_dbm: f64,
    pub out1_dbm: f64,
    pub out2_dbm: f64,
    /// Port-1 ratio as printed by the instrument or datasheet, in percent.
    pub expected_ratio_pct: Option<f64>,
}

impl SplitterRow {
    pub fn power_pair(&self) -> PowerPair {
        PowerPair {
            p1_dbm: self.out1_dbm,
            p2_dbm: self.out2_dbm,
            input_dbm: Some(self.input_dbm),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitterReport {
    pub input_port: String,
    pub input_dbm: f64,
    pub ratio: (f64, f64),
    pub insertion_loss_db: f64,
    pub warning: Option<String>,
}

pub fn splitter_report(row: &SplitterRow) -> Result<SplitterReport> {
    let pair = row.power_pair();
    let ratio = splitting_ratio(&pair)?;
    let warning = row.expected_ratio_pct.and_then(|expected| {
        let computed = 100.0 * ratio.0;
        ((computed - expected).abs() > RATIO_WARNING_PCT).then(|| {
            format!(
                "port {} at {} dBm: printed ratio {:.2}:{:.2} differs from linear-power ratio {:.2}:{:.2}",
                row.input_port,
                row.input_dbm,
                expected,
                100.0 - expected,
                computed,
                100.0 * ratio.1
            )
        })
    });
    Ok(SplitterReport {
        input_port: row.input_port.clone(),
        input_dbm: row.input_dbm,
        ratio,
        insertion_loss_db: insertion_loss(&pair)?,
        warning,
    })
}

fn csv_error(line: u64, column: &str, msg: impl std::fmt::Display) -> Error {
    Error::Input(format!("line {line}, column `{column}`: {msg}"))
}

fn parse_f64(field: &str, line: u64, column: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| csv_error(line, column, format!("`{field}` is not a number")))?;
    if !v.is_finite() {
        return Err(csv_error(line, column, format!("`{field}` is not finite")));
    }
    Ok(v)
}

/// Header check; returns whether the optional trailing column is present.
fn check_header(headers: &csv::StringRecord, required: &[&str], optional: Option<&str>) -> Result<bool> {
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    let base_ok = got.len() >= required.len() && got[..required.len()] == *required;
    let extra = &got[required.len().min(got.len())..];
    match (base_ok, extra, optional) {
        (true, [], _) => Ok(false),
        (true, [e], Some(opt)) if *e == opt => Ok(true),
        _ => {
            let mut expected = required.join(",");
            if let Some(opt) = optional {
                expected.push_str(&format!("[,{opt}]"));
            }
            Err(Error::Input(format!(
                "line 1: header `{}` does not match `{expected}`",
                got.join(",")
            )))
        }
    }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn records<R: Read>(
    rdr: &mut csv::Reader<R>,
    width: usize,
) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Input(format!("malformed CSV: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(Error::Input(format!(
                "line {line}: expected {width} fields, found {}",
                rec.len()
            )));
        }
        out.push((line, rec));
    }
    if out.is_empty() {
        return Err(Error::Input("no data rows".into()));
    }
    Ok(out)
}

pub fn read_splitter_csv<R: Read>(input: R) -> Result<Vec<SplitterRow>> {
    let mut rdr = reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Input(format!("malformed CSV header: {e}")))?
        .clone();
    if headers.iter().all(|h| h.trim().is_empty()) {
        return Err(Error::Input("empty splitter file".into()));
    }
    let has_expected = check_header(&headers, &SPLITTER_HEADER, Some(SPLITTER_EXPECTED_COLUMN))?;
    let width = SPLITTER_HEADER.len() + usize::from(has_expected);
    records(&mut rdr, width)?
        .into_iter()
        .map(|(line, rec)| {
            if rec[0].is_empty() {
                return Err(csv_error(line, "input_port", "empty"));
            }
            Ok(SplitterRow {
                input_port: rec[0].to_string(),
                input_dbm: parse_f64(&rec[1], line, "input_dbm")?,
                out1_dbm: parse_f64(&rec[2], line, "out1_dbm")?,
                out2_dbm: parse_f64(&rec[3], line, "out2_dbm")?,
                expected_ratio_pct: if has_expected && !rec[4].is_empty() {
                    Some(parse_f64(&rec[4], line, SPLITTER_EXPECTED_COLUMN)?)
                } else {
                    None
                },
            })
        })
        .collect()
}

pub fn write_splitter_csv<W: Write>(rows: &[SplitterRow], out: W) -> Result<()> {
    let with_expected = rows.iter().any(|r| r.expected_ratio_pct.is_some());
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Input(format!("CSV write failed: {e}"));
    let mut header: Vec<&str> = SPLITTER_HEADER.to_vec();
    if with_expected {
        header.push(SPLITTER_EXPECTED_COLUMN);
    }
    w.write_record(&header).map_err(io)?;
    for r in rows {
        let mut rec = vec![
            r.input_port.clone(),
            r.input_dbm.to_string(),
            r.out1_dbm.to_string(),
            r.out2_dbm.to_string(),
        ];
        if with_expected {
            rec.push(r.expected_ratio_pct.map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::Input(format!("CSV write failed: {e}")))
}

pub fn read_psd_csv<R: Read>(input: R) -> Result<Vec<PsdRecord>> {
    let mut rdr = reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Input(format!("malformed CSV header: {e}")))?
        .clone();
    if headers.iter().all(|h| h.trim().is_empty()) {
        return Err(Error::Input("empty PSD file".into()));
    }
    check_header(&headers, &PSD_HEADER, None)?;
    records(&mut rdr, PSD_HEADER.len())?
        .into_iter()
        .map(|(line, rec)| {
            if rec[0].is_empty() {
                return Err(csv_error(line, "detector_id", "empty"));
            }
            let quadrature = match &rec[1] {
                "x" => Quadrature::X,
                "p" => Quadrature::P,
                other => {
                    return Err(csv_error(line, "quadrature", format!("`{other}` is not x or p")))
                }
            };
            Ok(PsdRecord {
                detector_id: rec[0].to_string(),
                quadrature,
                lo_power_dbm: parse_f64(&rec[2], line, "lo_power_dbm")?,
                freq_hz: parse_f64(&rec[3], line, "freq_hz")?,
                total_noise_dbm: parse_f64(&rec[4], line, "total_dbm")?,
                electronic_noise_dbm: parse_f64(&rec[5], line, "electronic_dbm")?,
            })
        })
        .collect()
}

pub fn write_psd_csv<W: Write>(records: &[PsdRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Input(format!("CSV write failed: {e}"));
    w.write_record(PSD_HEADER).map_err(io)?;
    for r in records {
        let q = match r.quadrature {
            Quadrature::X => "x",
            Quadrature::P => "p",
        };
        w.write_record([
            r.detector_id.clone(),
            q.to_string(),
            r.lo_power_dbm.to_string(),
            r.freq_hz.to_string(),
            r.total_noise_dbm.to_string(),
            r.electronic_noise_dbm.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::Input(format!("CSV write failed: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pair(p1: f64, p2: f64, input: Option<f64>) -> PowerPair {
        PowerPair {
            p1_dbm: p1,
            p2_dbm: p2,
            input_dbm: input,
        }
    }

    fn psd(q: Quadrature, lo: f64, total: f64, el: f64) -> PsdRecord {
        PsdRecord {
            detector_id: "det".into(),
            quadrature: q,
            lo_power_dbm: lo,
            freq_hz: 5e8,
            total_noise_dbm: total,
            electronic_noise_dbm: el,
        }
    }

    #[test]
    fn ratios() {
        assert_eq!(splitting_ratio(&pair(-3.0, -3.0, None)).unwrap(), (0.5, 0.5));
        let (r1, r2) = splitting_ratio(&pair(-43.12, -43.19, None)).unwrap();
        assert_abs_diff_eq!(r1, 0.5040, epsilon = 1e-4);
        assert_abs_diff_eq!(r2, 0.4960, epsilon = 1e-4);
        let (r1, r2) = splitting_ratio(&pair(0.0, -3.0, None)).unwrap();
        assert_abs_diff_eq!(r1, 0.6661, epsilon = 1e-4);
        assert_abs_diff_eq!(r2, 0.3339, epsilon = 1e-4);
        assert!(splitting_ratio(&pair(f64::NAN, 0.0, None)).is_err());
    }

    #[test]
    fn losses() {
        let lossless = -20.0 - mw_to_dbm(2.0);
        assert_abs_diff_eq!(
            insertion_loss(&pair(lossless, lossless, Some(-20.0))).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        let l = insertion_loss(&pair(-23.28, -23.43, Some(-20.0))).unwrap();
        let oracle = -20.0 - 10.0 * (10f64.powf(-2.328) + 10f64.powf(-2.343)).log10();
        assert_abs_diff_eq!(l, oracle, epsilon = 1e-12);
        assert_abs_diff_eq!(l, 0.35, epsilon = 0.01);
        assert!(insertion_loss(&pair(-23.0, -23.0, None)).is_err());
    }

    #[test]
    fn electronic_noise() {
        assert_abs_diff_eq!(v_el_from_psd(-70.0, -60.0).unwrap(), 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(v_el_from_psd(-60.0, -60.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v_el_from_psd(-68.529, -60.0).unwrap(), 0.1403, epsilon = 1e-4);
        for v in [0.1403, 0.0743, 0.091, 0.1545] {
            let el = psd_from_v_el(v, -57.3).unwrap();
            assert_abs_diff_eq!(v_el_from_psd(el, -57.3).unwrap(), v, epsilon = 1e-12);
        }
        assert!(psd_from_v_el(0.0, -60.0).is_err());
    }

    #[test]
    fn electronic_efficiency() {
        assert_eq!(eta_e_from_vel(0.0).unwrap(), 1.0);
        assert_abs_diff_eq!(eta_e_from_vel(0.1403).unwrap(), 0.87696, epsilon = 1e-5);
        assert_eq!(eta_e_from_vel(1.0).unwrap(), 0.5);
        assert!(eta_e_from_vel(-0.1).is_err());
    }

    #[test]
    fn fit_exact_line() {
        let recs: Vec<PsdRecord> = [1.0, 3.0, 5.0, 7.0, 9.0]
            .iter()
            .map(|&lo| {
                let el = -80.0;
                let shot = 2e-7 * dbm_to_mw(lo) + 1e-9;
                psd(Quadrature::X, lo, mw_to_dbm(shot + dbm_to_mw(el)), el)
            })
            .collect();
        let fit = shot_noise_fit(&recs).unwrap();
        assert_abs_diff_eq!(fit.slope, 2e-7, epsilon = 1e-18);
        assert!(fit.max_relative_residual < 1e-12);
        assert!(fit.slope > 0.0);

        let two = shot_noise_fit(&recs[..2]).unwrap();
        assert!(two.max_relative_residual < 1e-12);
        assert!(shot_noise_fit(&recs[..1]).is_err());
        assert!(shot_noise_fit(&[recs[0].clone(), recs[0].clone()]).is_err());
    }

    #[test]
    fn detector_from_table_values() {
        let total = -55.0;
        let rec = |q, v| psd(q, 9.0, total, psd_from_v_el(v, total).unwrap());
        let det = detector_params_from_calibration(
            &rec(Quadrature::X, 0.1403),
            &rec(Quadrature::P, 0.0743),
            0.6,
            0.8,
        )
        .unwrap();
        assert_abs_diff_eq!(det.v_el_x, 0.1403, epsilon = 1e-12);
        assert_abs_diff_eq!(det.v_el_p, 0.0743, epsilon = 1e-12);
        assert_eq!(det.eta_bs, 0.5);

        let same = rec(Quadrature::X, 0.1);
        let det = detector_params_from_calibration(&same, &same, 0.7, 0.7).unwrap();
        assert!(det.is_symmetric());
    }

    #[test]
    fn inverted_levels_warn() {
        assert!(psd(Quadrature::X, 9.0, -60.0, -70.0).warnings().is_empty());
        assert_eq!(psd(Quadrature::X, 9.0, -70.0, -60.0).warnings().len(), 1);
    }

    #[test]
    fn splitter_warning() {
        let row = SplitterRow {
            input_port: "1".into(),
            input_dbm: -40.0,
            out1_dbm: -43.12,
            out2_dbm: -43.19,
            expected_ratio_pct: Some(50.04),
        };
        let rep = splitter_report(&row).unwrap();
        assert!(rep.warning.is_some());
        let ok = SplitterRow {
            expected_ratio_pct: Some(50.40),
            ..row.clone()
        };
        assert!(splitter_report(&ok).unwrap().warning.is_none());
        let none = SplitterRow {
            expected_ratio_pct: None,
            ..row
        };
        assert!(splitter_report(&none).unwrap().warning.is_none());
    }

    #[test]
    fn splitter_csv_parse_and_errors() {
        let text = "input_port,input_dbm,out1_dbm,out2_dbm\n1,-40,-43.12,-43.19\n1,-20,-23.28,-23.43\n";
        let rows = read_splitter_csv(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].out2_dbm, -23.43);

        let bad = "input_port,input_dbm,out1_dbm,out2_dbm\n1,-40,abc,-43.19\n";
        let err = read_splitter_csv(bad.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("out1_dbm"), "{err}");

        assert!(read_splitter_csv("".as_bytes()).is_err());
        assert!(read_splitter_csv("input_port,input_dbm,out1_dbm,out2_dbm\n".as_bytes()).is_err());
        assert!(read_splitter_csv("a,b,c,d\n1,2,3,4\n".as_bytes()).is_err());
    }

    #[test]
    fn psd_csv_parse_and_errors() {
        let text = "detector_id,quadrature,lo_power_dbm,freq_hz,total_dbm,electronic_dbm\n\
                    pdb,x,9,500000000,-60,-68.5\npdb,p,9,500000000,-60,-71.3\n";
        let recs = read_psd_csv(text.as_bytes()).unwrap();
        assert_eq!(recs[1].quadrature, Quadrature::P);
        let bad = text.replace("pdb,p,", "pdb,q,");
        let err = read_psd_csv(bad.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("quadrature"), "{err}");
    }

    #[test]
    fn pair_selection() {
        let mut recs = vec![
            psd(Quadrature::X, 8.0, -60.0, -68.0),
            psd(Quadrature::P, 8.0, -60.0, -69.0),
            psd(Quadrature::X, 9.0, -59.0, -68.0),
            psd(Quadrature::P, 9.0, -59.0, -70.0),
            psd(Quadrature::X, 10.0, -58.0, -68.0),
        ];
        let (x, p) = select_psd_pair(&recs, None, None).unwrap();
        assert_eq!((x.lo_power_dbm, p.lo_power_dbm), (9.0, 9.0));
        let (x, _) = select_psd_pair(&recs, Some("det"), Some(8.0)).unwrap();
        assert_eq!(x.lo_power_dbm, 8.0);
        assert!(select_psd_pair(&recs, None, Some(10.0)).is_err());
        recs.push(PsdRecord {
            detector_id: "other".into(),
            ..recs[0].clone()
        });
        assert!(select_psd_pair(&recs, None, None).is_err());
    }
}
