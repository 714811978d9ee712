//! Entanglement-based models of the No-Switching protocol and their
//! asymptotic key rates under collective attacks with reverse reconciliation.
//!
//! Two receivers are modelled:
//!
//! * **ideal**: a balanced heterodyne detector built from two identical
//!   homodyne detectors, described by one efficiency and one electronic noise;
//! * **biased**: an unbalanced splitter of transmittance `η_BS` feeding two
//!   separately calibrated homodyne detectors (x branch transmitted, p branch
//!   reflected).
//!
//! In both models electronic noise is a beam splitter of transmittance
//! `η_e = 1/(1 + v_el)` whose ancilla is traced out, followed by an
//! efficiency beam splitter whose ancilla stays in the trusted system.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::gaussian::{
    entropy_from_eigenvalues, epr_channel_cov, transmittance_from_distance, CovMat, Quadrature,
    SymplecticOp,
};

/// Fiber loss used throughout unless overridden, in dB/km.
pub const DEFAULT_ALPHA_DB_PER_KM: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// EPR variance in SNU, `V = V_A + 1`.
    pub v: f64,
    /// Channel transmittance `T`.
    pub transmittance: f64,
    /// Excess noise referred to the channel input, SNU.
    pub eps: f64,
    /// Reconciliation efficiency.
    pub beta: f64,
}

impl ChannelParams {
    pub fn new(v: f64, transmittance: f64, eps: f64, beta: f64) -> Result<Self> {
        let ch = ChannelParams {
            v,
            transmittance,
            eps,
            beta,
        };
        ch.validate()?;
        Ok(ch)
    }

    pub fn at_distance(v: f64, length_km: f64, alpha: f64, eps: f64, beta: f64) -> Result<Self> {
        Self::new(v, transmittance_from_distance(length_km, alpha)?, eps, beta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v >= 1.0) || !self.v.is_finite() {
            return Err(domain(format!("V = {} must be ≥ 1", self.v)));
        }
        if !(self.transmittance > 0.0 && self.transmittance <= 1.0) {
            return Err(domain(format!("T = {} outside (0, 1]", self.transmittance)));
        }
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return Err(domain(format!("ε = {} must be ≥ 0", self.eps)));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(domain(format!("β = {} outside (0, 1]", self.beta)));
        }
        Ok(())
    }

    pub fn with_transmittance(self, transmittance: f64) -> Self {
        ChannelParams {
            transmittance,
            ..self
        }
    }

    pub fn with_eps(self, eps: f64) -> Self {
        ChannelParams { eps, ..self }
    }

    pub fn with_v(self, v: f64) -> Self {
        ChannelParams { v, ..self }
    }

    pub fn chi_line(&self) -> f64 {
        1.0 / self.transmittance - 1.0 + self.eps
    }
}

/// One homodyne detector: efficiency and electronic noise (SNU).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomodyneDetector {
    pub eta_d: f64,
    pub v_el: f64,
}

impl HomodyneDetector {
    pub const PERFECT: HomodyneDetector = HomodyneDetector { eta_d: 1.0, v_el: 0.0 };

    pub fn new(eta_d: f64, v_el: f64) -> Result<Self> {
        let det = HomodyneDetector { eta_d, v_el };
        det.validate()?;
        Ok(det)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta_d > 0.0 && self.eta_d <= 1.0) {
            return Err(domain(format!("η_d = {} outside (0, 1]", self.eta_d)));
        }
        if !(self.v_el >= 0.0) || !self.v_el.is_finite() {
            return Err(domain(format!("v_el = {} must be ≥ 0", self.v_el)));
        }
        Ok(())
    }

    /// Transmittance of the beam splitter that stands in for electronic noise.
    pub fn eta_e(&self) -> f64 {
        1.0 / (1.0 + self.v_el)
    }
}

/// Calibrated receiver for the biased protocol.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    pub eta_d_x: f64,
    pub eta_d_p: f64,
    pub v_el_x: f64,
    pub v_el_p: f64,
    /// Transmittance of the receiver splitter towards the x branch.
    pub eta_bs: f64,
}

impl Default for DetectorParams {
    /// The asymmetric PDB480C-AC receiver at 9 dBm LO with a 50:50 splitter.
    fn default() -> Self {
        DetectorParams {
            eta_d_x: 0.6,
            eta_d_p: 0.8,
            v_el_x: 0.1403,
            v_el_p: 0.0743,
            eta_bs: 0.5,
        }
    }
}

impl DetectorParams {
    pub fn from_branches(x: HomodyneDetector, p: HomodyneDetector, eta_bs: f64) -> Self {
        DetectorParams {
            eta_d_x: x.eta_d,
            eta_d_p: p.eta_d,
            v_el_x: x.v_el,
            v_el_p: p.v_el,
            eta_bs,
        }
    }

    pub fn symmetric(det: HomodyneDetector) -> Self {
        Self::from_branches(det, det, 0.5)
    }

    pub fn validate(&self) -> Result<()> {
        self.branch(Quadrature::X).validate()?;
        self.branch(Quadrature::P).validate()?;
        if !(self.eta_bs > 0.0 && self.eta_bs < 1.0) {
            return Err(domain(format!("η_BS = {} outside (0, 1)", self.eta_bs)));
        }
        Ok(())
    }

    pub fn branch(&self, q: Quadrature) -> HomodyneDetector {
        match q {
            Quadrature::X => HomodyneDetector {
                eta_d: self.eta_d_x,
                v_el: self.v_el_x,
            },
            Quadrature::P => HomodyneDetector {
                eta_d: self.eta_d_p,
                v_el: self.v_el_p,
            },
        }
    }

    /// Fraction of the received signal routed to a branch.
    pub fn branch_transmittance(&self, q: Quadrature) -> f64 {
        match q {
            Quadrature::X => self.eta_bs,
            Quadrature::P => 1.0 - self.eta_bs,
        }
    }

    pub fn with_eta_bs(self, eta_bs: f64) -> Self {
        DetectorParams { eta_bs, ..self }
    }

    /// Same physical receiver with the branch labels exchanged.
    pub fn swapped(self) -> Self {
        DetectorParams {
            eta_d_x: self.eta_d_p,
            eta_d_p: self.eta_d_x,
            v_el_x: self.v_el_p,
            v_el_p: self.v_el_x,
            eta_bs: 1.0 - self.eta_bs,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.eta_d_x == self.eta_d_p && self.v_el_x == self.v_el_p
    }

    /// The single detector an analysis under the ideal protocol assigns to
    /// both quadratures: the better efficiency and the lower electronic noise
    /// of the two calibrated branches. Exact for a symmetric receiver.
    pub fn ideal_detector(&self) -> HomodyneDetector {
        HomodyneDetector {
            eta_d: self.eta_d_x.max(self.eta_d_p),
            v_el: self.v_el_x.min(self.v_el_p),
        }
    }
}

/// Asymptotic (or finite-size) key-rate breakdown.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyRateReport {
    /// Secret key rate, bits per symbol.
    pub rate: f64,
    pub i_ab: f64,
    pub chi_be: f64,
    /// Privacy-amplification penalty; `None` in the asymptotic regime.
    pub delta_n: Option<f64>,
    pub eigenvalues_joint: Vec<f64>,
    pub eigenvalues_conditional: Vec<f64>,
    /// Channel transmittance the Holevo bound was evaluated at.
    pub transmittance_used: f64,
    /// Excess noise the Holevo bound was evaluated at.
    pub eps_used: f64,
}

/// Holevo bound together with the spectra it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct HolevoBound {
    pub chi_be: f64,
    pub eigenvalues_joint: Vec<f64>,
    pub eigenvalues_conditional: Vec<f64>,
}

impl HolevoBound {
    fn from_states(joint: &CovMat, conditional: &CovMat) -> Result<Self> {
        let eigenvalues_joint = joint.symplectic_eigenvalues()?;
        let eigenvalues_conditional = conditional.symplectic_eigenvalues()?;
        let chi_be = entropy_from_eigenvalues(&eigenvalues_joint)
            - entropy_from_eigenvalues(&eigenvalues_conditional);
        Ok(HolevoBound {
            chi_be,
            eigenvalues_joint,
            eigenvalues_conditional,
        })
    }
}

/// `χ_line = 1/T - 1 + ε`.
pub fn chi_line(transmittance: f64, eps: f64) -> Result<f64> {
    if !(transmittance > 0.0 && transmittance <= 1.0) {
        return Err(domain(format!("T = {transmittance} outside (0, 1]")));
    }
    Ok(1.0 / transmittance - 1.0 + eps)
}

/// Heterodyne detection noise referred to Bob's input: `[2 - η_d + 2 v_el] / η_d`.
pub fn chi_het_ideal(eta_d: f64, v_el: f64) -> Result<f64> {
    HomodyneDetector::new(eta_d, v_el)?;
    Ok((1.0 + (1.0 - eta_d) + 2.0 * v_el) / eta_d)
}

/// Homodyne-branch noise referred to Bob's input, for a branch that receives
/// a fraction `branch_t` of the signal: `(1 - η_d t + v_el) / (η_d t)`.
pub fn chi_hom_branch(eta_d: f64, v_el: f64, branch_t: f64) -> Result<f64> {
    HomodyneDetector::new(eta_d, v_el)?;
    if !(branch_t > 0.0 && branch_t < 1.0) {
        return Err(domain(format!("branch transmittance {branch_t} outside (0, 1)")));
    }
    let g = eta_d * branch_t;
    Ok((1.0 - g + v_el) / g)
}

fn log2_snr(v: f64, chi_tot: f64) -> f64 {
    ((v + chi_tot) / (1.0 + chi_tot)).log2()
}

/// `I_AB = log₂((V + χ_tot)/(1 + χ_tot))`, `χ_tot = χ_line + χ_het/T`.
pub fn ideal_iab(ch: &ChannelParams, det: &HomodyneDetector) -> Result<f64> {
    ch.validate()?;
    let chi_tot = ch.chi_line() + chi_het_ideal(det.eta_d, det.v_el)? / ch.transmittance;
    Ok(log2_snr(ch.v, chi_tot))
}

/// Trusted state `(A, G2, B3)` of the ideal receiver.
pub fn build_ideal_cov(ch: &ChannelParams, det: &HomodyneDetector) -> Result<CovMat> {
    ch.validate()?;
    det.validate()?;
    // (A, B1)
    let g = epr_channel_cov(ch.v, ch.transmittance, ch.eps)?;
    // Electronic noise: B1 with a fresh vacuum, ancilla G1 discarded.
    let g = g
        .push_vacuum()
        .apply(&SymplecticOp::beamsplitter(det.eta_e(), 1, 2, 3)?)?
        .trace_out(&[2])?;
    // Detection efficiency: ancilla G2 kept.
    let g = g
        .push_vacuum()
        .apply(&SymplecticOp::beamsplitter(det.eta_d, 1, 2, 3)?)?;
    // (A, B3, G2) -> (A, G2, B3)
    g.reorder(&[0, 2, 1])
}

/// Holevo bound of the ideal protocol; Bob heterodynes `B3`.
pub fn ideal_holevo(ch: &ChannelParams, det: &HomodyneDetector) -> Result<HolevoBound> {
    let joint = build_ideal_cov(ch, det)?;
    let conditional = joint.heterodyne(2)?;
    HolevoBound::from_states(&joint, &conditional)
}

pub fn ideal_keyrate(ch: &ChannelParams, det: &HomodyneDetector) -> Result<KeyRateReport> {
    let i_ab = ideal_iab(ch, det)?;
    let holevo = ideal_holevo(ch, det)?;
    Ok(report(ch, i_ab, holevo))
}

fn report(ch: &ChannelParams, i_ab: f64, holevo: HolevoBound) -> KeyRateReport {
    KeyRateReport {
        rate: ch.beta * i_ab - holevo.chi_be,
        i_ab,
        chi_be: holevo.chi_be,
        delta_n: None,
        eigenvalues_joint: holevo.eigenvalues_joint,
        eigenvalues_conditional: holevo.eigenvalues_conditional,
        transmittance_used: ch.transmittance,
        eps_used: ch.eps,
    }
}

/// Mode positions of the biased six-mode state.
pub mod biased_modes {
    pub const A_X: usize = 0;
    pub const A_P: usize = 1;
    pub const G2: usize = 2;
    pub const F2: usize = 3;
    pub const B_X3: usize = 4;
    pub const B_P3: usize = 5;
}

/// Six-mode trusted state `(A_x, A_p, G2, F2, B_x3, B_p3)` of the biased receiver.
pub fn build_biased_cov(ch: &ChannelParams, det: &DetectorParams) -> Result<CovMat> {
    ch.validate()?;
    det.validate()?;
    let x = det.branch(Quadrature::X);
    let p = det.branch(Quadrature::P);
    let bs = SymplecticOp::beamsplitter;

    // (A, B1) -> (v, A, B1) -> (A_x, A_p, B1) via Alice's 50:50 split.
    let g = epr_channel_cov(ch.v, ch.transmittance, ch.eps)?
        .attach_vacuum(0)?
        .apply(&bs(0.5, 0, 1, 3)?)?;
    // Receiver splitter: transmitted port is the x branch.
    let g = g.push_vacuum().apply(&bs(det.eta_bs, 2, 3, 4)?)?;
    // x branch: electronic noise (G1 traced), then efficiency (G2 kept).
    let g = g
        .push_vacuum()
        .apply(&bs(x.eta_e(), 2, 4, 5)?)?
        .trace_out(&[4])?
        .push_vacuum()
        .apply(&bs(x.eta_d, 2, 4, 5)?)?;
    // (A_x, A_p, B_x3, B_p1, G2); p branch: F1 traced, F2 kept.
    let g = g
        .push_vacuum()
        .apply(&bs(p.eta_e(), 3, 5, 6)?)?
        .trace_out(&[5])?
        .push_vacuum()
        .apply(&bs(p.eta_d, 3, 5, 6)?)?;
    // (A_x, A_p, B_x3, B_p3, G2, F2) -> (A_x, A_p, G2, F2, B_x3, B_p3)
    g.reorder(&[0, 1, 4, 5, 2, 3])
}

/// `½ log₂((V + χ_tot^x)/(1 + χ_tot^x)) + ½ log₂((V + χ_tot^p)/(1 + χ_tot^p))`
/// with `χ_tot^q = χ_line + χ_hom^q / T`.
pub fn biased_iab(ch: &ChannelParams, det: &DetectorParams) -> Result<f64> {
    ch.validate()?;
    det.validate()?;
    let mut total = 0.0;
    for q in [Quadrature::X, Quadrature::P] {
        let b = det.branch(q);
        let chi_hom = chi_hom_branch(b.eta_d, b.v_el, det.branch_transmittance(q))?;
        let chi_tot = ch.chi_line() + chi_hom / ch.transmittance;
        total += 0.5 * log2_snr(ch.v, chi_tot);
    }
    Ok(total)
}

/// Holevo bound of the biased protocol with the standard selectors:
/// `B_p3` homodyned in P, then `B_x3` in X.
pub fn biased_holevo(ch: &ChannelParams, det: &DetectorParams) -> Result<HolevoBound> {
    biased_holevo_with_selectors(ch, det, Quadrature::P, Quadrature::X)
}

/// Holevo bound with explicit selectors for the `B_p3` and `B_x3` measurements.
pub fn biased_holevo_with_selectors(
    ch: &ChannelParams,
    det: &DetectorParams,
    p_branch_selector: Quadrature,
    x_branch_selector: Quadrature,
) -> Result<HolevoBound> {
    use biased_modes::{B_P3, B_X3};
    let joint = build_biased_cov(ch, det)?;
    let conditional = joint
        .homodyne(B_P3, p_branch_selector)?
        .homodyne(B_X3, x_branch_selector)?;
    HolevoBound::from_states(&joint, &conditional)
}

pub fn biased_keyrate(ch: &ChannelParams, det: &DetectorParams) -> Result<KeyRateReport> {
    let i_ab = biased_iab(ch, det)?;
    let holevo = biased_holevo(ch, det)?;
    Ok(report(ch, i_ab, holevo))
}

/// Which receiver model to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Ideal,
    Biased,
}

impl Protocol {
    pub fn iab(self, ch: &ChannelParams, det: &DetectorParams) -> Result<f64> {
        match self {
            Protocol::Ideal => ideal_iab(ch, &det.ideal_detector()),
            Protocol::Biased => biased_iab(ch, det),
        }
    }

    pub fn holevo(self, ch: &ChannelParams, det: &DetectorParams) -> Result<HolevoBound> {
        match self {
            Protocol::Ideal => ideal_holevo(ch, &det.ideal_detector()),
            Protocol::Biased => biased_holevo(ch, det),
        }
    }

    pub fn keyrate(self, ch: &ChannelParams, det: &DetectorParams) -> Result<KeyRateReport> {
        match self {
            Protocol::Ideal => ideal_keyrate(ch, &det.ideal_detector()),
            Protocol::Biased => biased_keyrate(ch, det),
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => Ok(Protocol::Ideal),
            "biased" => Ok(Protocol::Biased),
            other => Err(crate::error::Error::Input(format!(
                "unknown model `{other}` (expected ideal or biased)"
            ))),
        }
    }
}
