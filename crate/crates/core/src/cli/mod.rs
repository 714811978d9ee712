//! Command-line front end.
//!
//! Exit codes: 0 success (positive rate), 1 input error, 2 I/O error,
//! 3 rate computed but not positive.

pub mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analysis::{
    evaluate, optimize_eta_bs, optimize_variance, run_sweep, OptimumResult, OptimumStatus, Regime,
    SweepRow, SweepSpec,
};
use crate::calibration::{
    detector_params_from_calibration, read_psd_csv, read_splitter_csv, select_psd_pair,
    splitter_report, PsdRecord, SplitterReport,
};
use crate::error::Error;
use crate::estimation::{confidence_bounds, coverage_experiment, ml_estimate, simulate_channel, MlEstimate};
use crate::finite_size::worst_case_channel;
use crate::protocol::{ChannelParams, DetectorParams, KeyRateReport, Protocol};
use config::{FreeVariable, Format, OptimizeTarget, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NO_KEY: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "nsqkd", version, about = "Key rates for No-Switching CV-QKD with a biased heterodyne receiver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Write results here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    pub output: Option<PathBuf>,
    /// csv or json.
    #[arg(long, global = true)]
    pub format: Option<String>,
    /// ideal or biased.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// asymptotic or finite.
    #[arg(long, global = true)]
    pub regime: Option<String>,
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Secret key rate at one operating point.
    Keyrate,
    /// Key rate over a grid of one parameter.
    Sweep,
    /// Optimal splitter transmittance or modulation variance.
    Optimize,
    /// Detector parameters and splitter ratios from calibration CSV files.
    Calibrate {
        #[arg(long, value_name = "PATH")]
        splitter: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        psd: Option<PathBuf>,
    },
    /// Monte Carlo coverage of the parameter-estimation bounds.
    SimulateEstimation,
}

/// Failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Options after merging flags over the config file.
struct Session {
    cfg: RunConfig,
    model: Protocol,
    regime: Regime,
    format: Option<Format>,
    output: Option<PathBuf>,
    seed: u64,
}

impl Session {
    fn new(common: &CommonArgs, config_required: bool) -> CliResult<Self> {
        let cfg = match &common.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
                let base = path.parent().unwrap_or(Path::new("."));
                RunConfig::parse(&text, base)?
            }
            None if config_required => {
                return Err(Error::Input("--config is required for this command".into()).into())
            }
            None => RunConfig {
                base_dir: PathBuf::from("."),
                ..Default::default()
            },
        };
        let model = match &common.model {
            Some(s) => s.parse()?,
            None => cfg.file.model.unwrap_or(Protocol::Biased),
        };
        let regime = match &common.regime {
            Some(s) => s.parse()?,
            None => cfg.file.regime.unwrap_or(Regime::Asymptotic),
        };
        let format = match &common.format {
            Some(s) => Some(s.parse()?),
            None => cfg.file.format,
        };
        let output = common
            .output
            .clone()
            .or_else(|| cfg.file.output.as_ref().map(|p| cfg.resolve_path(p)));
        let seed = common.seed.or(cfg.file.seed).unwrap_or(0);
        Ok(Session {
            cfg,
            model,
            regime,
            format,
            output,
            seed,
        })
    }

    fn emit(&self, text: &str) -> CliResult<()> {
        match &self.output {
            Some(path) => fs::write(path, text).map_err(|e| io_failure(path, e)),
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(text.as_bytes())
                    .and_then(|_| out.flush())
                    .map_err(|e| io_failure(Path::new("<stdout>"), e))
            }
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

/// 17 significant digits.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// Parses arguments and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cli: &Cli) -> CliResult<i32> {
    match &cli.command {
        Command::Keyrate => cmd_keyrate(&Session::new(&cli.common, true)?),
        Command::Sweep => cmd_sweep(&Session::new(&cli.common, true)?),
        Command::Optimize => cmd_optimize(&Session::new(&cli.common, true)?),
        Command::Calibrate { splitter, psd } => {
            cmd_calibrate(&Session::new(&cli.common, false)?, splitter.clone(), psd.clone())
        }
        Command::SimulateEstimation => cmd_simulate_estimation(&Session::new(&cli.common, true)?),
    }
}

#[derive(Serialize)]
struct KeyrateOutput<'a> {
    model: Protocol,
    regime: Regime,
    channel: &'a ChannelParams,
    detector: &'a DetectorParams,
    report: &'a KeyRateReport,
}

fn cmd_keyrate(s: &Session) -> CliResult<i32> {
    let ch = s.cfg.channel(FreeVariable::None)?;
    let det = s.cfg.detector()?;
    let fs = s.cfg.finite_size(s.regime)?;
    let report = evaluate(&ch, &det, s.model, fs.as_ref())?;
    let text = match s.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&KeyrateOutput {
            model: s.model,
            regime: s.regime,
            channel: &ch,
            detector: &det,
            report: &report,
        }),
        Format::Csv => csv_table(
            &["rate", "i_ab", "chi_be", "delta_n", "transmittance_used", "eps_used"],
            &[vec![
                num(report.rate),
                num(report.i_ab),
                num(report.chi_be),
                opt_num(report.delta_n),
                num(report.transmittance_used),
                num(report.eps_used),
            ]],
        ),
    };
    s.emit(&text)?;
    Ok(if report.rate > 0.0 { EXIT_OK } else { EXIT_NO_KEY })
}

#[derive(Serialize)]
struct SweepRecord<'a> {
    grid_value: f64,
    rate: Option<f64>,
    i_ab: Option<f64>,
    chi_be: Option<f64>,
    delta_n: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eta_bs: Option<f64>,
    status: &'a str,
}

fn cmd_sweep(s: &Session) -> CliResult<i32> {
    let sec = s.cfg.sweep()?;
    let spec = SweepSpec {
        variable: sec.variable,
        grid: sec.grid()?,
        channel: s.cfg.channel(sec.free_variable())?,
        detector: s.cfg.detector()?,
        finite_size: s.cfg.finite_size(s.regime)?,
        protocol: s.model,
        regime: s.regime,
        optimize_eta_bs: sec.optimize_eta_bs,
        alpha_db_per_km: s.cfg.alpha(),
    };
    let rows = run_sweep(&spec)?;
    let records: Vec<SweepRecord> = rows.iter().map(sweep_record).collect();
    let text = match s.format.unwrap_or(Format::Csv) {
        Format::Json => to_json(&records),
        Format::Csv => {
            let mut header = vec!["grid_value", "rate", "i_ab", "chi_be", "delta_n", "status"];
            if spec.optimize_eta_bs {
                header.push("eta_bs");
            }
            let table: Vec<Vec<String>> = records
                .iter()
                .map(|r| {
                    let mut row = vec![
                        num(r.grid_value),
                        opt_num(r.rate),
                        opt_num(r.i_ab),
                        opt_num(r.chi_be),
                        opt_num(r.delta_n),
                        r.status.to_string(),
                    ];
                    if spec.optimize_eta_bs {
                        row.push(opt_num(r.eta_bs));
                    }
                    row
                })
                .collect();
            csv_table(&header, &table)
        }
    };
    s.emit(&text)?;
    Ok(EXIT_OK)
}

fn sweep_record(row: &SweepRow) -> SweepRecord<'_> {
    let r = row.report.as_ref();
    SweepRecord {
        grid_value: row.grid_value,
        rate: r.map(|r| r.rate),
        i_ab: r.map(|r| r.i_ab),
        chi_be: r.map(|r| r.chi_be),
        delta_n: r.and_then(|r| r.delta_n),
        eta_bs: row.eta_bs,
        status: &row.status,
    }
}

#[derive(Serialize)]
struct OptimizeOutput {
    target: &'static str,
    model: Protocol,
    regime: Regime,
    #[serde(flatten)]
    result: OptimumResult,
}

fn cmd_optimize(s: &Session) -> CliResult<i32> {
    let target = s.cfg.optimize_target();
    let fs = s.cfg.finite_size(s.regime)?;
    let det = s.cfg.detector()?;
    let (name, result) = match target {
        OptimizeTarget::EtaBs => {
            if s.model != Protocol::Biased {
                return Err(Error::Input("η_BS optimization needs --model biased".into()).into());
            }
            let ch = s.cfg.channel(FreeVariable::None)?;
            ("eta_bs", optimize_eta_bs(&ch, &det, fs.as_ref())?)
        }
        OptimizeTarget::Variance => {
            let ch = s.cfg.channel(FreeVariable::Variance)?;
            ("variance", optimize_variance(&ch, &det, s.model, fs.as_ref())?)
        }
    };
    let text = match s.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&OptimizeOutput {
            target: name,
            model: s.model,
            regime: s.regime,
            result,
        }),
        Format::Csv => csv_table(
            &["target", "argmax", "max_rate", "bracket_lo", "bracket_hi", "evaluations", "status"],
            &[vec![
                name.to_string(),
                num(result.argmax),
                num(result.max_rate),
                num(result.bracket.0),
                num(result.bracket.1),
                result.evaluations.to_string(),
                match result.status {
                    OptimumStatus::Ok => "ok",
                    OptimumStatus::AllNegative => "all_negative",
                }
                .to_string(),
            ]],
        ),
    };
    s.emit(&text)?;
    Ok(match result.status {
        OptimumStatus::Ok => EXIT_OK,
        OptimumStatus::AllNegative => EXIT_NO_KEY,
    })
}

#[derive(Serialize)]
struct CalibrationOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    detector: Option<DetectorParams>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    splitter: Vec<SplitterReport>,
    warnings: Vec<String>,
}

fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| io_failure(path, e))
}

fn in_file(path: &Path, e: Error) -> Failure {
    Failure {
        code: EXIT_INPUT,
        message: format!("{}: {e}", path.display()),
    }
}

fn cmd_calibrate(s: &Session, splitter: Option<PathBuf>, psd: Option<PathBuf>) -> CliResult<i32> {
    let sec = s.cfg.file.calibration.clone().unwrap_or_default();
    let splitter = splitter.or_else(|| sec.splitter_csv.as_ref().map(|p| s.cfg.resolve_path(p)));
    let psd = psd.or_else(|| sec.psd_csv.as_ref().map(|p| s.cfg.resolve_path(p)));
    if splitter.is_none() && psd.is_none() {
        return Err(Error::Input(
            "no calibration input: give --splitter/--psd or `calibration.splitter_csv`/`calibration.psd_csv`"
                .into(),
        )
        .into());
    }

    let mut out = CalibrationOutput {
        detector: None,
        splitter: Vec::new(),
        warnings: Vec::new(),
    };
    if let Some(path) = &splitter {
        let rows = read_splitter_csv(read_file(path)?.as_slice()).map_err(|e| in_file(path, e))?;
        for row in &rows {
            let rep = splitter_report(row).map_err(|e| in_file(path, e))?;
            out.warnings.extend(rep.warning.clone());
            out.splitter.push(rep);
        }
    }
    if let Some(path) = &psd {
        let records: Vec<PsdRecord> =
            read_psd_csv(read_file(path)?.as_slice()).map_err(|e| in_file(path, e))?;
        out.warnings.extend(records.iter().flat_map(PsdRecord::warnings));
        let (x, p) = select_psd_pair(&records, sec.detector_id.as_deref(), sec.lo_power_dbm)?;
        let d = DetectorParams::default();
        out.detector = Some(detector_params_from_calibration(
            x,
            p,
            sec.eta_d_x.unwrap_or(d.eta_d_x),
            sec.eta_d_p.unwrap_or(d.eta_d_p),
        )?);
    }
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }

    let text = match s.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&out),
        Format::Csv => {
            if out.splitter.is_empty() {
                return Err(Error::Input("csv output lists splitter rows; give a splitter file or use --format json".into()).into());
            }
            let rows: Vec<Vec<String>> = out
                .splitter
                .iter()
                .map(|r| {
                    vec![
                        r.input_port.clone(),
                        num(r.input_dbm),
                        num(r.ratio.0),
                        num(r.ratio.1),
                        num(r.insertion_loss_db),
                        r.warning.clone().unwrap_or_default(),
                    ]
                })
                .collect();
            csv_table(
                &["input_port", "input_dbm", "ratio_1", "ratio_2", "insertion_loss_db", "warning"],
                &rows,
            )
        }
    };
    s.emit(&text)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct EstimationOutput {
    seed: u64,
    transmittance: f64,
    sigma2: f64,
    v_a: f64,
    m: usize,
    trials: usize,
    eps_pe: f64,
    coverage_t: f64,
    coverage_sigma: f64,
    /// Estimates from the batch generated with `seed`.
    estimate: MlEstimate,
    /// Bounds around `estimate`.
    t_min: f64,
    sigma2_max: f64,
    /// Bounds with the expected estimator values substituted.
    expected_t_min: f64,
    expected_sigma2_max: f64,
}

fn cmd_simulate_estimation(s: &Session) -> CliResult<i32> {
    let ch = s.cfg.channel(FreeVariable::None)?;
    let sec = s.cfg.file.estimation.clone().unwrap_or_default();
    let m = sec.m.ok_or_else(|| Error::Input("missing key `estimation.m`".into()))?;
    let trials = sec.trials.unwrap_or(config::DEFAULT_TRIALS);
    let eps_pe = sec.eps_pe.unwrap_or(config::DEFAULT_ESTIMATION_EPS_PE);
    let v_a = ch.v - 1.0;
    let t = ch.transmittance.sqrt();
    let sigma2 = 1.0 + ch.transmittance * ch.eps;

    let batch = simulate_channel(t, sigma2, v_a, m, s.seed)?;
    let text = match s.format.unwrap_or(Format::Json) {
        Format::Csv => {
            let mut buf = Vec::new();
            batch
                .write_csv(&mut buf)
                .map_err(|e| io_failure(Path::new("<buffer>"), e))?;
            String::from_utf8(buf).expect("utf-8")
        }
        Format::Json => {
            let cov = coverage_experiment(t, sigma2, v_a, m, eps_pe, trials, s.seed)?;
            let estimate = ml_estimate(&batch)?;
            let (t_min, sigma2_max) = confidence_bounds(&estimate, m as f64, ch.v, eps_pe)?;
            let wc = worst_case_channel(ch.transmittance, ch.eps, ch.v, m as f64, eps_pe)?;
            to_json(&EstimationOutput {
                seed: s.seed,
                transmittance: ch.transmittance,
                sigma2,
                v_a,
                m,
                trials,
                eps_pe,
                coverage_t: cov.coverage_t,
                coverage_sigma: cov.coverage_sigma,
                estimate,
                t_min,
                sigma2_max,
                expected_t_min: wc.t_min,
                expected_sigma2_max: wc.sigma2_max,
            })
        }
    };
    s.emit(&text)?;
    Ok(EXIT_OK)
}
