//! Covariance-matrix algebra for zero-mean multimode Gaussian states.
//!
//! Quadratures are ordered mode by mode, `(x1, p1, x2, p2, ...)`, and all
//! variances are in shot-noise units, so the vacuum is the 2x2 identity.
//! Every operation returns a new value; nothing here mutates in place.

use nalgebra::{DMatrix, Matrix2, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Symmetry tolerance, relative to the largest entry.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Symplectic eigenvalues this far below 1 are treated as numerical dust.
pub const PHYSICALITY_TOL: f64 = 1e-9;
/// Symplectic eigenvalues below `1 - NON_PHYSICAL_TOL` are rejected.
pub const NON_PHYSICAL_TOL: f64 = 1e-6;
/// Relative singular-value cutoff for the Moore-Penrose pseudoinverse.
pub const PINV_RCOND: f64 = 1e-12;
/// Tolerance for `S Ω Sᵀ = Ω`.
pub const SYMPLECTIC_TOL: f64 = 1e-10;

/// Real symmetric `2n x 2n` covariance matrix of an `n`-mode Gaussian state.
#[derive(Clone, Debug, PartialEq)]
pub struct CovMat {
    m: DMatrix<f64>,
}

/// Quadrature picked out by a homodyne measurement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    X,
    P,
}

impl Quadrature {
    /// The 2x2 projector `diag(1, 0)` for X and `diag(0, 1)` for P.
    pub fn projector(self) -> Matrix2<f64> {
        match self {
            Quadrature::X => Matrix2::new(1.0, 0.0, 0.0, 0.0),
            Quadrature::P => Matrix2::new(0.0, 0.0, 0.0, 1.0),
        }
    }

    pub fn other(self) -> Self {
        match self {
            Quadrature::X => Quadrature::P,
            Quadrature::P => Quadrature::X,
        }
    }
}

/// A real `2n x 2n` matrix satisfying `S Ω Sᵀ = Ω`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymplecticOp {
    s: DMatrix<f64>,
}

/// Standard symplectic form: block-diagonal `[[0, 1], [-1, 0]]`.
pub fn symplectic_form(n_modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * n_modes, 2 * n_modes);
    for k in 0..n_modes {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    omega
}

fn block_indices(modes: impl IntoIterator<Item = usize>) -> Vec<usize> {
    modes.into_iter().flat_map(|k| [2 * k, 2 * k + 1]).collect()
}

fn select(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

impl SymplecticOp {
    /// Wraps `s` after checking that it preserves the symplectic form.
    pub fn new(s: DMatrix<f64>) -> Result<Self> {
        if !s.is_square() || !s.nrows().is_multiple_of(2) {
            return Err(Error::InvalidMatrix(format!(
                "symplectic operator must be square with even size, got {}x{}",
                s.nrows(),
                s.ncols()
            )));
        }
        let op = SymplecticOp { s };
        let err = op.symplectic_residual();
        if err > SYMPLECTIC_TOL {
            return Err(Error::InvalidMatrix(format!(
                "S Ω Sᵀ deviates from Ω by {err:e}"
            )));
        }
        Ok(op)
    }

    pub fn identity(n_modes: usize) -> Self {
        SymplecticOp {
            s: DMatrix::identity(2 * n_modes, 2 * n_modes),
        }
    }

    /// Beam splitter of transmittance `eta` mixing `mode_a` and `mode_b`.
    ///
    /// The two affected block rows carry
    /// `[[√η I, √(1-η) I], [-√(1-η) I, √η I]]`; every other mode passes
    /// through unchanged.
    pub fn beamsplitter(eta: f64, mode_a: usize, mode_b: usize, n_modes: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(domain(format!("beam-splitter transmittance {eta} outside [0, 1]")));
        }
        for index in [mode_a, mode_b] {
            if index >= n_modes {
                return Err(Error::ModeIndex { index, n_modes });
            }
        }
        if mode_a == mode_b {
            return Err(domain("beam splitter needs two distinct modes"));
        }
        let t = eta.sqrt();
        let r = (1.0 - eta).sqrt();
        let mut s = DMatrix::identity(2 * n_modes, 2 * n_modes);
        let (a, b) = (2 * mode_a, 2 * mode_b);
        for q in 0..2 {
            s[(a + q, a + q)] = t;
            s[(a + q, b + q)] = r;
            s[(b + q, a + q)] = -r;
            s[(b + q, b + q)] = t;
        }
        Ok(SymplecticOp { s })
    }

    pub fn n_modes(&self) -> usize {
        self.s.nrows() / 2
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    /// Largest entry of `|S Ω Sᵀ - Ω|`.
    pub fn symplectic_residual(&self) -> f64 {
        let omega = symplectic_form(self.n_modes());
        (&self.s * &omega * self.s.transpose() - omega).amax()
    }
}

impl CovMat {
    /// Validates shape and symmetry, then stores the symmetrized matrix.
    ///
    /// Physicality is not checked here; see [`CovMat::validate_physical`].
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || !m.nrows().is_multiple_of(2) {
            return Err(Error::InvalidMatrix(format!(
                "covariance matrix must be square with even size, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite entry".into()));
        }
        let scale = m.amax().max(1.0);
        let asym = (&m - m.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::InvalidMatrix(format!("asymmetry {asym:e} exceeds tolerance")));
        }
        Ok(Self::from_raw(m))
    }

    fn from_raw(m: DMatrix<f64>) -> Self {
        let sym = (&m + m.transpose()) * 0.5;
        CovMat { m: sym }
    }

    /// `n`-mode vacuum.
    pub fn vacuum(n_modes: usize) -> Self {
        CovMat {
            m: DMatrix::identity(2 * n_modes, 2 * n_modes),
        }
    }

    pub fn n_modes(&self) -> usize {
        self.m.nrows() / 2
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    /// 2x2 block coupling `row_mode` and `col_mode`.
    pub fn block(&self, row_mode: usize, col_mode: usize) -> Matrix2<f64> {
        let (r, c) = (2 * row_mode, 2 * col_mode);
        Matrix2::new(
            self.m[(r, c)],
            self.m[(r, c + 1)],
            self.m[(r + 1, c)],
            self.m[(r + 1, c + 1)],
        )
    }

    fn check_mode(&self, index: usize) -> Result<()> {
        if index >= self.n_modes() {
            return Err(Error::ModeIndex {
                index,
                n_modes: self.n_modes(),
            });
        }
        Ok(())
    }

    /// Inserts a vacuum mode so that it becomes mode `position`.
    pub fn attach_vacuum(&self, position: usize) -> Result<Self> {
        let n = self.n_modes();
        if position > n {
            return Err(Error::ModeIndex { index: position, n_modes: n + 1 });
        }
        // Old mode k lands at k for k < position and at k + 1 otherwise.
        let dim = 2 * (n + 1);
        let old_index = |i: usize| -> Option<usize> {
            let mode = i / 2;
            match mode.cmp(&position) {
                std::cmp::Ordering::Less => Some(i),
                std::cmp::Ordering::Equal => None,
                std::cmp::Ordering::Greater => Some(i - 2),
            }
        };
        let m = DMatrix::from_fn(dim, dim, |i, j| match (old_index(i), old_index(j)) {
            (Some(a), Some(b)) => self.m[(a, b)],
            (None, None) if i == j => 1.0,
            _ => 0.0,
        });
        Ok(CovMat { m })
    }

    /// Appends a vacuum mode at the end.
    pub fn push_vacuum(&self) -> Self {
        self.attach_vacuum(self.n_modes())
            .expect("appending at n_modes is always in range")
    }

    /// `S γ Sᵀ`.
    pub fn apply(&self, s: &SymplecticOp) -> Result<Self> {
        if s.matrix().nrows() != self.m.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.m.nrows(),
                actual: s.matrix().nrows(),
            });
        }
        Ok(Self::from_raw(s.matrix() * &self.m * s.matrix().transpose()))
    }

    /// Mode `i` of the result is mode `permutation[i]` of `self`.
    pub fn reorder(&self, permutation: &[usize]) -> Result<Self> {
        let n = self.n_modes();
        let mut seen = vec![false; n];
        let valid = permutation.len() == n
            && permutation
                .iter()
                .all(|&k| k < n && !std::mem::replace(&mut seen[k], true));
        if !valid {
            return Err(Error::InvalidPermutation(permutation.to_vec()));
        }
        let idx = block_indices(permutation.iter().copied());
        Ok(CovMat {
            m: select(&self.m, &idx, &idx),
        })
    }

    /// Removes the listed modes (partial trace over them).
    pub fn trace_out(&self, modes: &[usize]) -> Result<Self> {
        for &k in modes {
            self.check_mode(k)?;
        }
        let keep: Vec<usize> = (0..self.n_modes()).filter(|k| !modes.contains(k)).collect();
        let idx = block_indices(keep);
        Ok(CovMat {
            m: select(&self.m, &idx, &idx),
        })
    }

    /// Splits into (rest, measured block, cross block with rows on the measured mode).
    fn partition(&self, mode: usize) -> (DMatrix<f64>, Matrix2<f64>, DMatrix<f64>) {
        let rest = block_indices((0..self.n_modes()).filter(|&k| k != mode));
        let meas = [2 * mode, 2 * mode + 1];
        let gamma_a = select(&self.m, &rest, &rest);
        let gamma_b = self.block(mode, mode);
        let sigma = select(&self.m, &meas, &rest);
        (gamma_a, gamma_b, sigma)
    }

    fn condition_with(&self, mode: usize, h: &Matrix2<f64>) -> Self {
        let (gamma_a, _, sigma) = self.partition(mode);
        let h = DMatrix::from_column_slice(2, 2, h.as_slice());
        Self::from_raw(gamma_a - sigma.transpose() * h * sigma)
    }

    /// Conditional state of the other modes after homodyning `quadrature`
    /// on `measured_mode`: `γ_A - σᵀ (Π γ_B Π)^MP σ`.
    pub fn homodyne(&self, measured_mode: usize, quadrature: Quadrature) -> Result<Self> {
        self.check_mode(measured_mode)?;
        let proj = quadrature.projector();
        let gamma_b = self.block(measured_mode, measured_mode);
        let h = pseudo_inverse_2x2(&(proj * gamma_b * proj));
        Ok(self.condition_with(measured_mode, &h))
    }

    /// Conditional state of the other modes after heterodyning
    /// `measured_mode`: `γ_A - σᵀ (γ_B + I)⁻¹ σ`.
    pub fn heterodyne(&self, measured_mode: usize) -> Result<Self> {
        self.check_mode(measured_mode)?;
        let gamma_b = self.block(measured_mode, measured_mode);
        let h = (gamma_b + Matrix2::identity())
            .try_inverse()
            .ok_or_else(|| Error::Degenerate("γ_B + I is singular".into()))?;
        Ok(self.condition_with(measured_mode, &h))
    }

    /// Symplectic eigenvalues in descending order, one per mode.
    ///
    /// Computed as the singular values of `γ^{1/2} Ω γ^{1/2}`, which share
    /// the spectrum `{±ν}` of `iΩγ` up to sign. Values within
    /// [`NON_PHYSICAL_TOL`] below 1 are clipped to 1.
    pub fn symplectic_eigenvalues(&self) -> Result<Vec<f64>> {
        let nu = self.raw_symplectic_eigenvalues()?;
        let min = nu.iter().copied().fold(f64::INFINITY, f64::min);
        if min < 1.0 - NON_PHYSICAL_TOL {
            return Err(Error::NonPhysical { min_eigenvalue: min });
        }
        Ok(nu.into_iter().map(|v| v.max(1.0)).collect())
    }

    fn raw_symplectic_eigenvalues(&self) -> Result<Vec<f64>> {
        let n = self.n_modes();
        if n == 0 {
            return Ok(Vec::new());
        }
        let eig = SymmetricEigen::new(self.m.clone());
        let scale = eig.eigenvalues.amax().max(1.0);
        let lowest = eig.eigenvalues.min();
        if lowest < -1e-9 * scale {
            return Err(Error::NonPhysical { min_eigenvalue: lowest });
        }
        let sqrt_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
        let root = &eig.eigenvectors * sqrt_diag * eig.eigenvectors.transpose();
        let k = &root * symplectic_form(n) * &root;
        // k is antisymmetric, so kᵀk is symmetric PSD with eigenvalues ν² in pairs.
        let gram = k.transpose() * &k;
        let gram = (&gram + gram.transpose()) * 0.5;
        let mut sq: Vec<f64> = SymmetricEigen::new(gram).eigenvalues.iter().copied().collect();
        sq.sort_by(|a, b| b.total_cmp(a));
        Ok(sq
            .chunks(2)
            .map(|pair| (0.5 * (pair[0] + pair[1])).max(0.0).sqrt())
            .collect())
    }

    /// Checks the uncertainty relation (all ν ≥ 1 - [`PHYSICALITY_TOL`]).
    pub fn validate_physical(&self) -> Result<()> {
        let nu = self.raw_symplectic_eigenvalues()?;
        match nu.iter().copied().fold(f64::INFINITY, f64::min) {
            min if min < 1.0 - PHYSICALITY_TOL => Err(Error::NonPhysical { min_eigenvalue: min }),
            _ => Ok(()),
        }
    }

    /// Von Neumann entropy in bits.
    pub fn entropy(&self) -> Result<f64> {
        Ok(entropy_from_eigenvalues(&self.symplectic_eigenvalues()?))
    }
}

fn pseudo_inverse_2x2(m: &Matrix2<f64>) -> Matrix2<f64> {
    let svd = m.svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return Matrix2::zeros();
    }
    let cutoff = PINV_RCOND * smax;
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let inv = svd
        .singular_values
        .map(|s| if s > cutoff { 1.0 / s } else { 0.0 });
    v_t.transpose() * Matrix2::from_diagonal(&inv) * u.transpose()
}

/// Two-mode state after one arm of an EPR source of variance `v` crosses a
/// channel of transmittance `t` and excess noise `eps`.
///
/// ```text
/// [[V I,            √(T(V²-1)) σz],
///  [√(T(V²-1)) σz,  T(V + χ_line) I]]     χ_line = 1/T - 1 + ε
/// ```
pub fn epr_channel_cov(v: f64, t: f64, eps: f64) -> Result<CovMat> {
    if !(v >= 1.0) || !v.is_finite() {
        return Err(domain(format!("EPR variance V = {v} must be ≥ 1")));
    }
    if !(t > 0.0 && t <= 1.0) {
        return Err(domain(format!("transmittance T = {t} outside (0, 1]")));
    }
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(domain(format!("excess noise ε = {eps} must be ≥ 0")));
    }
    let chi_line = 1.0 / t - 1.0 + eps;
    let c = (t * (v * v - 1.0)).sqrt();
    let b = t * (v + chi_line);
    let m = DMatrix::from_row_slice(
        4,
        4,
        &[
            v, 0.0, c, 0.0, //
            0.0, v, 0.0, -c, //
            c, 0.0, b, 0.0, //
            0.0, -c, 0.0, b,
        ],
    );
    Ok(CovMat { m })
}

/// Fiber transmittance `10^(-αL/10)`.
pub fn transmittance_from_distance(length_km: f64, alpha_db_per_km: f64) -> Result<f64> {
    if !(length_km >= 0.0) || !length_km.is_finite() {
        return Err(domain(format!("distance {length_km} km must be ≥ 0")));
    }
    if !(alpha_db_per_km > 0.0) || !alpha_db_per_km.is_finite() {
        return Err(domain(format!("loss coefficient {alpha_db_per_km} dB/km must be > 0")));
    }
    Ok(10f64.powf(-alpha_db_per_km * length_km / 10.0))
}

/// Bosonic entropy `G(x) = (x+1) log₂(x+1) - x log₂ x`, with `G(0) = 0`.
pub fn g_entropy(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(domain(format!("G(x) requires x ≥ 0, got {x}")));
    }
    Ok(g_unchecked(x))
}

fn g_unchecked(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (x + 1.0) * (x + 1.0).log2() - x * x.log2()
    }
}

/// `Σ G((ν - 1)/2)` over a list of symplectic eigenvalues.
pub fn entropy_from_eigenvalues(nu: &[f64]) -> f64 {
    nu.iter().map(|&v| g_unchecked(((v - 1.0) / 2.0).max(0.0))).sum()
}
