//! Truncated Fock-basis state algebra: coherent states, the memory as a
//! loss + noise bosonic channel with storage decay, and Uhlmann fidelity.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Hermiticity tolerance for states built by this crate.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Trace tolerance.
pub const TRACE_TOL: f64 = 1e-9;
/// Lowest admissible eigenvalue.
pub const POSITIVITY_TOL: f64 = -1e-10;
/// Largest probability allowed to leak out of the truncated space.
pub const TRUNCATION_TOL: f64 = 1e-8;

/// A density matrix in the Fock basis `|0⟩ … |dim − 1⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DensityMatrixJson", into = "DensityMatrixJson")]
pub struct DensityMatrix {
    elements: DMatrix<Complex64>,
}

/// Interchange layout: dimension plus row-major `[re, im]` pairs.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DensityMatrixJson {
    dim: usize,
    elements: Vec<[f64; 2]>,
}

impl TryFrom<DensityMatrixJson> for DensityMatrix {
    type Error = Error;

    fn try_from(raw: DensityMatrixJson) -> Result<Self> {
        if raw.elements.len() != raw.dim * raw.dim {
            return Err(Error::InvalidState(format!(
                "{} elements for dim {}",
                raw.elements.len(),
                raw.dim
            )));
        }
        let m = DMatrix::from_row_iterator(
            raw.dim,
            raw.dim,
            raw.elements.iter().map(|[re, im]| Complex64::new(*re, *im)),
        );
        DensityMatrix::new(m)
    }
}

impl From<DensityMatrix> for DensityMatrixJson {
    fn from(rho: DensityMatrix) -> Self {
        let dim = rho.dim();
        let mut elements = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for c in 0..dim {
                let v = rho.elements[(r, c)];
                elements.push([v.re, v.im]);
            }
        }
        Self { dim, elements }
    }
}

fn hermitian_deviation(m: &DMatrix<Complex64>) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..m.nrows() {
        for c in r..m.ncols() {
            worst = worst.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    worst
}

impl DensityMatrix {
    /// Validated constructor: Hermitian, unit trace and positive to the module
    /// tolerances.
    pub fn new(elements: DMatrix<Complex64>) -> Result<Self> {
        if elements.nrows() != elements.ncols() || elements.nrows() == 0 {
            return Err(Error::InvalidState(format!(
                "matrix must be square and nonempty, got {}x{}",
                elements.nrows(),
                elements.ncols()
            )));
        }
        let deviation = hermitian_deviation(&elements);
        if deviation > HERMITIAN_TOL * elements.nrows() as f64 {
            return Err(Error::NotHermitian { deviation });
        }
        let rho = Self { elements };
        let tr = rho.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} != 1")));
        }
        let min = rho.min_eigenvalue();
        if min < POSITIVITY_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(rho)
    }

    /// Wrap a matrix without any checks; operations that need a valid state
    /// re-check what they rely on.
    pub fn from_raw(elements: DMatrix<Complex64>) -> Self {
        Self { elements }
    }

    /// `|ψ⟩⟨ψ|` for a normalised amplitude vector.
    pub fn from_pure(psi: &[Complex64]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|c| c.norm_sqr()).sum();
        if norm == 0.0 {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let v = DVector::from_iterator(psi.len(), psi.iter().map(|c| c / norm.sqrt()));
        Ok(Self {
            elements: &v * v.adjoint(),
        })
    }

    /// Projector onto `|n⟩`.
    pub fn fock(n: usize, n_max: usize) -> Result<Self> {
        if n > n_max {
            return Err(Error::param("n", format!("{n} exceeds n_max {n_max}")));
        }
        let mut m = DMatrix::from_element(n_max + 1, n_max + 1, ZERO);
        m[(n, n)] = Complex64::new(1.0, 0.0);
        Ok(Self { elements: m })
    }

    pub fn dim(&self) -> usize {
        self.elements.nrows()
    }

    pub fn n_max(&self) -> usize {
        self.dim() - 1
    }

    pub fn elements(&self) -> &DMatrix<Complex64> {
        &self.elements
    }

    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.elements[(m, n)]
    }

    pub fn trace(&self) -> f64 {
        self.elements.diagonal().iter().map(|c| c.re).sum()
    }

    pub fn purity(&self) -> f64 {
        (&self.elements * &self.elements).trace().re
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.elements
            .diagonal()
            .iter()
            .enumerate()
            .map(|(n, c)| n as f64 * c.re)
            .sum()
    }

    pub fn photon_distribution(&self) -> Vec<f64> {
        self.elements.diagonal().iter().map(|c| c.re).collect()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_part(&self.elements)
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn hermitian_deviation(&self) -> f64 {
        hermitian_deviation(&self.elements)
    }

    /// `e^{iφn̂} ρ e^{−iφn̂}`.
    pub fn phase_rotated(&self, phi: f64) -> Self {
        let dim = self.dim();
        let elements = DMatrix::from_fn(dim, dim, |m, n| {
            self.elements[(m, n)] * Complex64::from_polar(1.0, phi * (m as f64 - n as f64))
        });
        Self { elements }
    }

    /// Embed into a larger truncation (zero padding) or cut to a smaller one.
    pub fn resized(&self, n_max: usize) -> Self {
        let dim = n_max + 1;
        let old = self.dim();
        let elements = DMatrix::from_fn(dim, dim, |m, n| {
            if m < old && n < old {
                self.elements[(m, n)]
            } else {
                ZERO
            }
        });
        Self { elements }
    }
}

fn hermitian_part(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Coherent state `|α⟩` truncated at `n_max` and renormalised.
pub fn coherent_state(alpha: Complex64, n_max: usize) -> Result<DensityMatrix> {
    if n_max < 1 {
        return Err(Error::param("n_max", "must be >= 1"));
    }
    if alpha.norm_sqr() > n_max as f64 / 4.0 {
        log::warn!(
            "coherent state |α|² = {:.3} is large for n_max = {n_max}",
            alpha.norm_sqr()
        );
    }
    DensityMatrix::from_pure(&coherent_amplitudes(alpha, n_max))
}

/// Fock amplitudes `e^{−|α|²/2} αⁿ/√(n!)` for `n ≤ n_max` (not renormalised).
pub fn coherent_amplitudes(alpha: Complex64, n_max: usize) -> Vec<Complex64> {
    let mut amps = Vec::with_capacity(n_max + 1);
    let mut c = Complex64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for n in 0..=n_max {
        if n > 0 {
            c *= alpha / (n as f64).sqrt();
        }
        amps.push(c);
    }
    amps
}

/// Truncation large enough for coherent or thermal-like states with mean
/// photon number up to `n_bar`.
pub fn default_n_max(n_bar: f64) -> usize {
    if n_bar <= 10.0 {
        40
    } else {
        (n_bar + 8.0 * n_bar.sqrt() + 10.0).ceil() as usize
    }
}

/// Spontaneous noise after the output filters: 0.02 photons per memory
/// process ahead of the etalons times their 33% transmission.
pub const REFERENCE_NOISE_PHOTONS: f64 = 0.0066;
/// Added photons per transmitted signal photon. Chosen so the reconstructed
/// fidelities at 0.76 and 4.2 input photons land near 0.98 and 0.915.
pub const REFERENCE_FWM_FRACTION: f64 = 0.018;
pub const REFERENCE_ETA_T: f64 = 0.826;
/// Coherence time in ns.
pub const REFERENCE_TAU_C: f64 = 1100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelParams {
    /// Total memory efficiency at zero storage time.
    pub eta_t: f64,
    /// Signal-independent added photons per pulse.
    pub noise_photons: f64,
    /// Added photons per transmitted signal photon (four-wave-mixing-like).
    pub fwm_fraction: f64,
    /// Storage time in ns.
    pub tau: f64,
    /// Coherence time in ns.
    pub tau_c: f64,
}

/// The reference memory: measured efficiency and noise, no storage delay.
impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            noise_photons: REFERENCE_NOISE_PHOTONS,
            fwm_fraction: REFERENCE_FWM_FRACTION,
            ..Self::lossy(REFERENCE_ETA_T)
        }
    }
}

impl ChannelParams {
    pub fn identity() -> Self {
        Self::lossy(1.0)
    }

    pub fn lossy(eta_t: f64) -> Self {
        Self {
            eta_t,
            noise_photons: 0.0,
            fwm_fraction: 0.0,
            tau: 0.0,
            tau_c: REFERENCE_TAU_C,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta_t) {
            return Err(Error::param("eta_t", format!("must lie in [0, 1], got {}", self.eta_t)));
        }
        if !(self.noise_photons >= 0.0) || !self.noise_photons.is_finite() {
            return Err(Error::param("noise_photons", "must be >= 0"));
        }
        if !(self.fwm_fraction >= 0.0) || !self.fwm_fraction.is_finite() {
            return Err(Error::param("fwm_fraction", "must be >= 0"));
        }
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return Err(Error::param("tau", "must be >= 0"));
        }
        if !(self.tau_c > 0.0) {
            return Err(Error::param("tau_c", "must be > 0"));
        }
        Ok(())
    }

    /// `η_T·e^{−τ/τ_c}`.
    pub fn eta_eff(&self) -> f64 {
        self.eta_t * (-self.tau / self.tau_c).exp()
    }

    /// Added photons for an input with mean photon number `n_in`.
    pub fn added_photons(&self, n_in: f64) -> f64 {
        self.noise_photons + self.fwm_fraction * self.eta_eff() * n_in
    }
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n + 1];
    for k in 1..=n {
        t[k] = t[k - 1] + (k as f64).ln();
    }
    t
}

/// Pure loss with transmissivity `eta` (Kraus operators
/// `⟨n−k|A_k|n⟩ = √C(n,k)·η^{(n−k)/2}(1−η)^{k/2}`).
pub fn apply_loss(rho: &DensityMatrix, eta: f64) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::param("eta", format!("must lie in [0, 1], got {eta}")));
    }
    let dim = rho.dim();
    if eta == 1.0 {
        return Ok(rho.clone());
    }
    let lf = ln_factorials(dim);
    let (le, ll) = (eta.ln(), (1.0 - eta).ln());
    // c[m][k] = ⟨m|A_k|m+k⟩
    let coeff = |m: usize, k: usize| -> f64 {
        let mut v = 0.5 * (lf[m + k] - lf[m] - lf[k]);
        if m > 0 {
            v += 0.5 * m as f64 * le;
        }
        if k > 0 {
            v += 0.5 * k as f64 * ll;
        }
        v.exp()
    };
    let mut out = DMatrix::from_element(dim, dim, ZERO);
    for m in 0..dim {
        for n in 0..dim {
            let mut acc = ZERO;
            for k in 0..dim - m.max(n) {
                acc += rho.elements[(m + k, n + k)] * (coeff(m, k) * coeff(n, k));
            }
            out[(m, n)] = acc;
        }
    }
    Ok(DensityMatrix::from_raw(out))
}

/// Quantum-limited phase-insensitive amplifier with gain `gain ≥ 1`
/// (Kraus operators `⟨n+k|B_k|n⟩ = √C(n+k,k)·G^{−(n+1)/2}((G−1)/G)^{k/2}`).
/// Returns the state and the probability lost above the truncation.
pub fn apply_amplifier(rho: &DensityMatrix, gain: f64) -> Result<(DensityMatrix, f64)> {
    if !(gain >= 1.0) || !gain.is_finite() {
        return Err(Error::param("gain", format!("must be >= 1, got {gain}")));
    }
    if gain == 1.0 {
        return Ok((rho.clone(), 0.0));
    }
    let dim = rho.dim();
    let lf = ln_factorials(2 * dim);
    let (lg, lr) = (gain.ln(), ((gain - 1.0) / gain).ln());
    let coeff = |m: usize, k: usize| -> f64 {
        (0.5 * (lf[m + k] - lf[m] - lf[k]) - 0.5 * (m as f64 + 1.0) * lg + 0.5 * k as f64 * lr).exp()
    };
    let mut out = DMatrix::from_element(dim, dim, ZERO);
    for m in 0..dim {
        for n in 0..dim {
            let v = rho.elements[(m, n)];
            if v == ZERO {
                continue;
            }
            for k in 0..dim - m.max(n) {
                out[(m + k, n + k)] += v * (coeff(m, k) * coeff(n, k));
            }
        }
    }
    let lost = rho.trace() - out.trace().re;
    Ok((DensityMatrix::from_raw(out), lost))
}

/// Memory channel: loss at `η_eff/(1+N)` followed by an amplifier of gain
/// `1 + N`, where `N` is the added photon number. A coherent input `|α⟩` leaves
/// as a displaced thermal state with amplitude `√η_eff·α` and `N` thermal
/// photons.
pub fn apply_memory_channel(rho: &DensityMatrix, ch: &ChannelParams) -> Result<DensityMatrix> {
    ch.validate()?;
    let eta = ch.eta_eff();
    let noise = ch.added_photons(rho.mean_photon_number());
    let lossy = apply_loss(rho, eta / (1.0 + noise))?;
    let (amplified, lost) = apply_amplifier(&lossy, 1.0 + noise)?;
    let n_max = rho.n_max() as f64;
    let n_out = amplified.mean_photon_number();
    if lost > TRUNCATION_TOL || n_out > 0.9 * n_max {
        return Err(Error::Truncation(format!(
            "output ⟨n⟩ = {n_out:.3}, probability beyond n_max = {} is {lost:.2e}",
            rho.n_max()
        )));
    }
    let tr = amplified.trace();
    let mut m = amplified.elements / Complex64::new(tr, 0.0);
    m = hermitian_part(&m);
    Ok(DensityMatrix::from_raw(m))
}

/// Principal square root of a Hermitian positive semidefinite matrix.
/// Eigenvalues below rounding level are clamped to zero.
pub fn psd_sqrt(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let eig = hermitian_part(m).symmetric_eigen();
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let floor = 1e-15 * top.max(1.0);
    let roots = eig.eigenvalues.map(|l| if l > floor { l.sqrt() } else { 0.0 });
    let v = &eig.eigenvectors;
    let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |r, c| v[(r, c)] * roots[c]);
    &scaled * v.adjoint()
}

/// Uhlmann fidelity `(Tr √(√ρ_a ρ_b √ρ_a))²`, computed as the squared trace
/// norm of `√ρ_a √ρ_b`.
pub fn uhlmann_fidelity(rho_a: &DensityMatrix, rho_b: &DensityMatrix) -> Result<f64> {
    if rho_a.dim() != rho_b.dim() {
        return Err(Error::param(
            "rho_b",
            format!("dimension {} differs from {}", rho_b.dim(), rho_a.dim()),
        ));
    }
    for rho in [rho_a, rho_b] {
        let deviation = rho.hermitian_deviation();
        if deviation > 1e-9 {
            return Err(Error::NotHermitian { deviation });
        }
    }
    let product = psd_sqrt(&rho_a.elements) * psd_sqrt(&rho_b.elements);
    let trace_norm: f64 = product.singular_values().iter().sum();
    Ok(trace_norm * trace_norm)
}

/// `1/(1 + n̄(1 − √η)²)`.
pub fn fidelity_closed_form(n_bar: f64, eta_t: f64) -> f64 {
    let s = 1.0 - eta_t.sqrt();
    1.0 / (1.0 + n_bar * s * s)
}

/// Fidelity of a single coherent state `|α⟩`, `|α|² = n̄`, with its image
/// `|√η·α⟩` under pure loss: `exp(−n̄(1 − √η)²)`.
pub fn coherent_loss_fidelity(n_bar: f64, eta_t: f64) -> f64 {
    let s = 1.0 - eta_t.sqrt();
    (-n_bar * s * s).exp()
}

/// Mean photon number at which [`fidelity_closed_form`] falls to `threshold`.
pub fn no_cloning_crossing(eta_t: f64, threshold: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&eta_t) {
        return Err(Error::param("eta_t", "must lie in [0, 1]"));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::param("threshold", "must lie in (0, 1]"));
    }
    if eta_t >= 1.0 {
        return Err(Error::NoCrossing);
    }
    let s = 1.0 - eta_t.sqrt();
    Ok((1.0 / threshold - 1.0) / (s * s))
}

/// Classical benchmark for coherent-state families.
pub const NO_CLONING_LIMIT: f64 = 2.0 / 3.0;
