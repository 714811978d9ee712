//! Acceptance criteria. Each test writes one `PASS`/`FAIL` line to stdout
//! (bypassing the test harness capture) and then asserts.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::DMatrix;
use nsqkd::analysis::{max_distance, optimize_eta_bs, tolerable_excess_noise, ETA_BS_BRACKET};
use nsqkd::calibration::{psd_from_v_el, splitter_report, v_el_from_psd, SplitterRow};
use nsqkd::estimation::{confidence_bounds, coverage_experiment, MlEstimate};
use nsqkd::finite_size::{
    finite_keyrate, required_block_length, worst_case_channel, z_from_epsilon, FiniteSizeParams,
};
use nsqkd::gaussian::{epr_channel_cov, symplectic_form, CovMat, SymplecticOp};
use nsqkd::protocol::{ChannelParams, DetectorParams, HomodyneDetector, Protocol};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

const MEASURED: DetectorParams = DetectorParams {
    eta_d_x: 0.6,
    eta_d_p: 0.8,
    v_el_x: 0.1403,
    v_el_p: 0.0743,
    eta_bs: 0.5,
};

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("[acceptance {id:>2}] {verdict} {name}: {detail}\n");
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
}

fn channel(v: f64, length_km: f64, eps: f64) -> ChannelParams {
    ChannelParams::at_distance(v, length_km, 0.2, eps, 0.95).unwrap()
}

fn distances(from: u32, to: u32, step: usize) -> Vec<f64> {
    (from..=to).step_by(step).map(f64::from).collect()
}

#[test]
fn criterion_01_symmetric_reduction() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for det in [HomodyneDetector::new(0.6, 0.1403).unwrap(), HomodyneDetector::new(0.8, 0.0743).unwrap()] {
        for v in [2.0, 5.0, 10.0, 20.0, 40.0] {
            for l in [0.0, 10.0, 50.0, 100.0] {
                for eps in [0.0, 0.05, 0.1] {
                    let ch = channel(v, l, eps);
                    let b = Protocol::Biased.keyrate(&ch, &DetectorParams::symmetric(det)).unwrap();
                    let i = nsqkd::protocol::ideal_keyrate(&ch, &det).unwrap();
                    worst = worst.max((b.rate - i.rate).abs());
                    points += 1;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst < 1e-8 && secs < 10.0;
    report(1, "symmetric reduction", pass, &format!("max |ΔR| = {worst:.3e} over {points} points in {secs:.2} s"));
    assert!(pass);
}

#[test]
fn criterion_02_ideal_overestimates() {
    let grid = distances(5, 140, 5);
    let rows: Vec<(f64, f64, f64)> = grid
        .par_iter()
        .map(|&l| {
            let ch = channel(5.0, l, 0.05);
            let ideal = Protocol::Ideal.keyrate(&ch, &MEASURED).unwrap().rate;
            let biased = Protocol::Biased.keyrate(&ch, &MEASURED).unwrap().rate;
            (l, ideal, biased)
        })
        .collect();
    let violations: Vec<f64> = rows.iter().filter(|r| r.1 < r.2).map(|r| r.0).collect();
    let strict = rows.iter().filter(|r| r.1 > r.2).count();
    let frac = strict as f64 / rows.len() as f64;
    let pass = violations.is_empty() && frac >= 0.9;
    let mut detail = format!("strict at {strict}/{} points ({:.0}%)", rows.len(), 100.0 * frac);
    for (l, i, b) in rows.iter().filter(|r| r.1 < r.2) {
        detail.push_str(&format!("; L = {l} km: R_ideal = {i:.6e} < R_biased = {b:.6e}"));
    }
    report(2, "ideal rate ≥ biased rate", pass, &detail);
    assert!(pass);
}

#[test]
fn criterion_03_optimization_improvement() {
    let grid = distances(5, 140, 5);
    let rows: Vec<(f64, f64, f64)> = grid
        .par_iter()
        .map(|&l| {
            let ch = channel(5.0, l, 0.05);
            let opt = optimize_eta_bs(&ch, &MEASURED, None).unwrap();
            let half = Protocol::Biased.keyrate(&ch, &MEASURED).unwrap().rate;
            (l, opt.max_rate, half)
        })
        .collect();
    let never_worse = rows.iter().all(|r| r.1 >= r.2);
    let mut detail = String::new();
    let mut strict = true;
    let mut scan_ok = true;
    for l in [50.0, 70.0] {
        let ch = channel(5.0, l, 0.05);
        let opt = optimize_eta_bs(&ch, &MEASURED, None).unwrap();
        let half = Protocol::Biased.keyrate(&ch, &MEASURED).unwrap().rate;
        let (lo, hi) = ETA_BS_BRACKET;
        let n = ((hi - lo) / 1e-4).round() as usize;
        let (x, _) = (0..=n)
            .into_par_iter()
            .map(|i| {
                let e = lo + (hi - lo) * i as f64 / n as f64;
                (e, Protocol::Biased.keyrate(&ch, &MEASURED.with_eta_bs(e)).unwrap().rate)
            })
            .reduce(|| (f64::NAN, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        strict &= opt.max_rate - half > 1e-6;
        scan_ok &= (opt.argmax - x).abs() < 2e-4;
        detail.push_str(&format!(
            "L = {l}: η* = {:.5} (scan {x:.4}), gain {:.3e}; ",
            opt.argmax,
            opt.max_rate - half
        ));
    }
    detail.push_str(&format!("R(η*) ≥ R(0.5) at all {} distances: {never_worse}", rows.len()));
    let pass = never_worse && strict && scan_ok;
    report(3, "η_BS optimization improvement", pass, &detail);
    assert!(pass);
}

fn finite_rate(l: f64, n_total: u64, model: Protocol, eps: f64) -> f64 {
    let fs = FiniteSizeParams::half_split(n_total).unwrap();
    finite_keyrate(&channel(5.0, l, eps), &MEASURED, &fs, model).unwrap().rate
}

#[test]
fn criterion_04_finite_size_ordering() {
    let grid = distances(10, 140, 5);
    let mut ordered = true;
    let mut first_bad = String::new();
    for model in [Protocol::Ideal, Protocol::Biased] {
        for &l in &grid {
            let r: Vec<f64> = [1_000_000_000u64, 100_000_000_000, 10_000_000_000_000]
                .iter()
                .map(|&n| finite_rate(l, n, model, 0.05))
                .collect();
            let asy = model.keyrate(&channel(5.0, l, 0.05), &MEASURED).unwrap().rate;
            let ok = r[0] <= r[1] && r[1] <= r[2] && r[2] <= asy;
            if !ok && first_bad.is_empty() {
                first_bad = format!("; first violation {model:?} L = {l}: {r:?} vs {asy}");
            }
            ordered &= ok;
        }
    }
    let fs = FiniteSizeParams::half_split(1_000_000_000).unwrap();
    let cutoff = max_distance(&channel(5.0, 0.0, 0.05), &MEASURED, Protocol::Biased, Some(&fs), 0.2, 1.0, 300.0).unwrap();
    let pass = ordered && (55.0..=85.0).contains(&cutoff);
    report(
        4,
        "finite-size ordering",
        pass,
        &format!("R(1e9) ≤ R(1e11) ≤ R(1e13) ≤ R_asym on L ∈ [10, 140]: {ordered}; N = 1e9 cutoff {cutoff:.2} km{first_bad}"),
    );
    assert!(pass);
}

#[test]
fn criterion_05_tolerable_noise_zeros() {
    let mut pass = true;
    let mut detail = Vec::new();
    for (n_total, target) in [(1_000_000_000u64, 90.0), (100_000_000_000, 140.0), (10_000_000_000_000, 190.0)] {
        let fs = FiniteSizeParams::half_split(n_total).unwrap();
        let zero = max_distance(&channel(5.0, 0.0, 0.0), &MEASURED, Protocol::Biased, Some(&fs), 0.2, 1.0, 400.0).unwrap();
        let before = tolerable_excess_noise(&channel(5.0, zero - 0.5, 0.0), &MEASURED, Protocol::Biased, Some(&fs)).unwrap();
        let after = tolerable_excess_noise(&channel(5.0, zero + 0.5, 0.0), &MEASURED, Protocol::Biased, Some(&fs)).unwrap();
        let ok = (zero - target).abs() <= 15.0 && before > 0.0 && after == 0.0;
        pass &= ok;
        detail.push(format!("N = {n_total:.0e}: {zero:.1} km (target {target})"));
    }
    report(5, "tolerable-noise zeros", pass, &detail.join("; "));
    assert!(pass);
}

#[test]
fn criterion_06_finite_size_scalars() {
    let start = Instant::now();
    let z = z_from_epsilon(1e-10).unwrap();
    let m = required_block_length(0.1, 0.01, 1e-10).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = (6.42..=6.52).contains(&z) && (5e7..=2e8).contains(&(m as f64)) && secs < 1.0;
    report(6, "finite-size scalars", pass, &format!("z = {z:.6}, m = {m:.3e} in {secs:.1e} s", m = m as f64));
    assert!(pass);
}

#[test]
fn criterion_07_calibration_round_trips() {
    let table = [0.1403, 0.0743, 0.091, 0.1545];
    let mut worst: f64 = 0.0;
    for v in table {
        for total in [-75.0, -60.0, -42.5] {
            let back = v_el_from_psd(psd_from_v_el(v, total).unwrap(), total).unwrap();
            worst = worst.max((back - v).abs());
        }
    }
    let rep = splitter_report(&SplitterRow {
        input_port: "1".into(),
        input_dbm: -40.0,
        out1_dbm: -43.12,
        out2_dbm: -43.19,
        expected_ratio_pct: Some(50.04),
    })
    .unwrap();
    let ratio_ok = (rep.ratio.0 - 0.5040).abs() <= 1e-4 && (rep.ratio.1 - 0.4960).abs() <= 1e-4;
    let pass = worst < 1e-6 && ratio_ok && rep.warning.is_some();
    report(
        7,
        "calibration round trips",
        pass,
        &format!(
            "v_el round trip max error {worst:.1e}; ratio ({:.4}, {:.4}); warning: {}",
            rep.ratio.0,
            rep.ratio.1,
            rep.warning.as_deref().unwrap_or("none")
        ),
    );
    assert!(pass);
}

fn random_symplectic(n: usize, rng: &mut ChaCha20Rng) -> DMatrix<f64> {
    let mut s = DMatrix::identity(2 * n, 2 * n);
    for _ in 0..12 {
        let mut g = DMatrix::identity(2 * n, 2 * n);
        let k = rng.gen_range(0..n);
        match rng.gen_range(0..3) {
            0 => {
                let (sn, c) = rng.gen_range(0.0..std::f64::consts::TAU).sin_cos();
                g[(2 * k, 2 * k)] = c;
                g[(2 * k, 2 * k + 1)] = sn;
                g[(2 * k + 1, 2 * k)] = -sn;
                g[(2 * k + 1, 2 * k + 1)] = c;
            }
            1 => {
                let r: f64 = rng.gen_range(0.6..1.7);
                g[(2 * k, 2 * k)] = r;
                g[(2 * k + 1, 2 * k + 1)] = 1.0 / r;
            }
            _ if n > 1 => {
                let other = (k + rng.gen_range(1..n)) % n;
                g = SymplecticOp::beamsplitter(rng.gen_range(0.0..=1.0), k, other, n)
                    .unwrap()
                    .matrix()
                    .clone();
            }
            _ => {}
        }
        s = g * s;
    }
    s
}

fn brute_symplectic_eigenvalues(g: &CovMat) -> Vec<f64> {
    let m = symplectic_form(g.n_modes()) * g.matrix();
    let mut v: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.norm()).collect();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect()
}

#[test]
fn criterion_08_gaussian_core_oracles() {
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let (mut eig_err, mut sym_err): (f64, f64) = (0.0, 0.0);
    for trial in 0..300 {
        let n = 1 + trial % 6;
        let s = random_symplectic(n, &mut rng);
        let omega = symplectic_form(n);
        sym_err = sym_err.max((&s * &omega * s.transpose() - &omega).amax());
        let nu: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..6.0)).collect();
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(2 * n, nu.iter().flat_map(|&v| [v, v])));
        let g = CovMat::new(&s * d * s.transpose()).unwrap();
        let got = g.symplectic_eigenvalues().unwrap();
        for (a, b) in got.iter().zip(brute_symplectic_eigenvalues(&g)) {
            eig_err = eig_err.max((a - b).abs() / b.max(1.0));
        }
    }
    let mut het_err: f64 = 0.0;
    for v in [1.0, 2.0, 5.0, 20.0] {
        let cond = epr_channel_cov(v, 1.0, 0.0).unwrap().heterodyne(1).unwrap();
        het_err = het_err.max((cond.matrix() - DMatrix::<f64>::identity(2, 2)).amax());
    }
    let ch = ChannelParams::new(5.0, 1.0, 0.0, 1.0).unwrap();
    let perfect = DetectorParams::symmetric(HomodyneDetector::PERFECT);
    let chi = [Protocol::Ideal, Protocol::Biased]
        .iter()
        .map(|m| m.holevo(&ch, &perfect).unwrap().chi_be.abs())
        .fold(0.0, f64::max);
    let pass = eig_err < 1e-10 && sym_err < 1e-10 && het_err < 1e-10 && chi < 1e-7;
    report(
        8,
        "Gaussian core oracles",
        pass,
        &format!("eigenvalues vs iΩγ {eig_err:.1e}; SΩSᵀ - Ω {sym_err:.1e}; heterodyne on EPR {het_err:.1e}; pure-state χ_BE {chi:.1e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_09_estimation_statistics() {
    let start = Instant::now();
    let (t, eps, v) = (0.1f64, 0.05, 5.0);
    let cov = coverage_experiment(t.sqrt(), 1.0 + t * eps, v - 1.0, 10_000, 0.05, 2000, 2024).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let mut identity: f64 = 0.0;
    for (t, eps, v, m, e) in [(0.1, 0.05, 5.0, 1e4, 0.05), (0.01, 0.02, 20.0, 5e8, 1e-10), (0.5, 0.0, 1.5, 1e6, 1e-3)] {
        let expected = MlEstimate { t_hat: f64::sqrt(t), sigma2_hat: 1.0 + t * eps };
        let (t_min, s_max) = confidence_bounds(&expected, m, v, e).unwrap();
        let wc = worst_case_channel(t, eps, v, m, e).unwrap();
        identity = identity.max((t_min - wc.t_min).abs()).max((s_max - wc.sigma2_max).abs());
    }
    let pass = cov.coverage_t >= 0.965 && cov.coverage_sigma >= 0.965 && identity <= 1e-12 && secs < 60.0;
    report(
        9,
        "estimation statistics",
        pass,
        &format!(
            "coverage t {:.4}, σ² {:.4} over {} trials in {secs:.1} s; bound identity {identity:.1e}",
            cov.coverage_t, cov.coverage_sigma, cov.trials
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_10_cli_determinism() {
    let dir = tempfile::TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "seed = 17\n\n[channel]\nv = 5.0\ndistance_km = 50.0\neps = 0.05\nbeta = 0.95\n\n\
         [finite_size]\nn_total = 1000000000\n\n\
         [sweep]\nvariable = \"distance\"\nstart = 0.0\nstop = 140.0\npoints = 57\noptimize_eta_bs = true\n\n\
         [estimation]\nm = 10000\ntrials = 500\n",
    )
    .unwrap();
    let run = |args: &[&str], out: &Path| -> Vec<u8> {
        let status = Command::new(env!("CARGO_BIN_EXE_nsqkd"))
            .arg("--config")
            .arg(&cfg)
            .args(args)
            .arg("--output")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.code().is_some());
        std::fs::read(out).unwrap()
    };
    let commands: [&[&str]; 5] = [
        &["keyrate"],
        &["keyrate", "--regime", "finite", "--format", "csv"],
        &["sweep", "--regime", "finite"],
        &["optimize"],
        &["simulate-estimation"],
    ];
    let mut identical = 0;
    for (k, args) in commands.iter().enumerate() {
        let a = run(args, &dir.path().join(format!("{k}a")));
        let b = run(args, &dir.path().join(format!("{k}b")));
        if !a.is_empty() && a == b {
            identical += 1;
        }
    }
    let pass = identical == commands.len();
    report(10, "CLI determinism", pass, &format!("{identical}/{} commands byte-identical", commands.len()));
    assert!(pass);
}
