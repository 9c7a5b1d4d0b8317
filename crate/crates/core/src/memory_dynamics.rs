//! Linear storage and forward-retrieval dynamics of the off-resonant Raman
//! memory.
//!
//! The signal field `E(z, t)` and spin wave `S(z, t)` obey
//!
//! ```text
//! ∂_z E = i(d/Δ) E + i(√d Ω(t)/Δ) S
//! ∂_t S = i(|Ω(t)|²/Δ) S + i(√d Ω*(t)/Δ) E
//! ```
//!
//! on `z ∈ [0, 1]`. Both diagonal phases are removed exactly by the substitution
//! `E = e^{idz/Δ} A`, `S = e^{idz/Δ} e^{iφ(t)} B` with `φ(t) = ∫₀ᵗ|Ω|²/Δ`, which
//! leaves `∂_z A = i g B`, `∂_t B = i g* A`, `g = √d Ω e^{iφ}/Δ`. Each `(Δz, Δt)`
//! cell is advanced with the implicit midpoint (box) rule, whose cell map is
//! exactly unitary in the `(√Δt·A, √Δz·B)` norm, so the discrete energy balance
//! `‖S‖² + ‖E_out‖² = ‖E_in‖²` holds to rounding.
//!
//! The closed-form storage kernel ([`storage_kernel_matrix`]) is kept as an
//! independent oracle for the solver.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bessel::j0;
use crate::error::{Error, Result};
use crate::grid_pulse::{ComplexEnvelope, Grid};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Relative energy-balance defect above which a propagation is rejected.
pub const NORM_DEFECT_LIMIT: f64 = 1e-3;

/// Slack allowed above unit efficiency.
pub const EFFICIENCY_SLACK: f64 = 1e-6;

fn default_adiabatic_threshold() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MemoryParams {
    /// Optical depth (dimensionless).
    pub d: f64,
    /// Write detuning in GHz.
    pub delta_w: f64,
    /// Read detuning in GHz.
    pub delta_r: f64,
    /// Write window length in ns.
    pub t_write: f64,
    pub nz: usize,
    pub nt: usize,
    /// Ratio above which `d/|Δ|` or `max|Ω|²·t/|Δ|` is flagged as straining
    /// the adiabatic model.
    #[serde(default = "default_adiabatic_threshold")]
    pub adiabatic_threshold: f64,
}

impl Default for MemoryParams {
    fn default() -> Self {
        Self {
            d: 1100.0,
            delta_w: 3.0,
            delta_r: 3.0,
            t_write: 30.0,
            nz: 400,
            nt: 600,
            adiabatic_threshold: default_adiabatic_threshold(),
        }
    }
}

impl MemoryParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.d > 0.0) || !self.d.is_finite() {
            return Err(Error::param("d", format!("must be > 0, got {}", self.d)));
        }
        for (name, v) in [("delta_w", self.delta_w), ("delta_r", self.delta_r)] {
            if v == 0.0 || !v.is_finite() {
                return Err(Error::param(name, format!("must be finite and nonzero, got {v}")));
            }
        }
        if !(self.t_write > 0.0) || !self.t_write.is_finite() {
            return Err(Error::param("t_write", format!("must be > 0, got {}", self.t_write)));
        }
        if self.nz < 16 {
            return Err(Error::param("nz", format!("must be >= 16, got {}", self.nz)));
        }
        if self.nt < 16 {
            return Err(Error::param("nt", format!("must be >= 16, got {}", self.nt)));
        }
        if !(self.adiabatic_threshold > 0.0) {
            return Err(Error::param("adiabatic_threshold", "must be > 0"));
        }
        Ok(())
    }

    /// Cell-centred write-window grid over `[0, t_write]`.
    pub fn time_grid(&self) -> Result<Grid> {
        Grid::cell_centered(0.0, self.t_write, self.nt)
    }

    /// Cell-centred grid over the normalised cell `[0, 1]`.
    pub fn space_grid(&self) -> Result<Grid> {
        Grid::unit_interval(self.nz)
    }

    /// Dimensionless coupling `h·d/Δ²` for drive area `h` at detuning `delta`.
    pub fn coupling(&self, drive_area: f64, delta: f64) -> f64 {
        drive_area * self.d / (delta * delta)
    }

    fn strained(&self, control: &ComplexEnvelope, delta: f64) -> bool {
        let drive = control.max_intensity() * control.grid().span() / delta.abs();
        let strained = self.d / delta.abs() > self.adiabatic_threshold || drive > self.adiabatic_threshold;
        if strained {
            log::debug!(
                "adiabaticity strain: d/|Δ| = {:.3}, max|Ω|²t/|Δ| = {:.3}",
                self.d / delta.abs(),
                drive
            );
        }
        strained
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StorageResult {
    pub spin_wave: ComplexEnvelope,
    pub leak: ComplexEnvelope,
    pub eta_w: f64,
    /// Relative energy-balance defect of the run.
    pub norm_defect: f64,
    /// Parameters lie outside the regime where the adiabatic model is tight.
    pub adiabaticity_strained: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub output: ComplexEnvelope,
    pub residual_spin: ComplexEnvelope,
    pub eta_r: f64,
    pub norm_defect: f64,
    pub adiabaticity_strained: bool,
}

/// Dense linear map between two sampled grids: `out = matrix · in` on samples.
#[derive(Debug, Clone)]
pub struct LinearMapMatrix {
    pub row_grid: Grid,
    pub col_grid: Grid,
    pub matrix: DMatrix<Complex64>,
}

impl LinearMapMatrix {
    pub fn apply(&self, input: &ComplexEnvelope) -> Result<ComplexEnvelope> {
        self.col_grid.ensure_compatible(input.grid(), "linear map input")?;
        let x = nalgebra::DVector::from_column_slice(input.samples());
        let y = &self.matrix * x;
        ComplexEnvelope::new(self.row_grid, y.as_slice().to_vec())
    }

    /// The same map with both sides measured in their grid norms, so that its
    /// singular values are the efficiency amplitudes.
    pub fn weighted(&self) -> DMatrix<Complex64> {
        let w = (self.row_grid.step() / self.col_grid.step()).sqrt();
        self.matrix.map(|v| v * w)
    }
}

/// Interaction-picture box-scheme propagator for one control field.
#[derive(Debug, Clone)]
pub(crate) struct Propagator {
    nz: usize,
    dz: f64,
    dt: f64,
    /// `√d/Δ`.
    s: f64,
    delta: f64,
    /// Control samples.
    omega: Vec<Complex64>,
    /// Drive phase at the middle of each time cell.
    phi: Vec<f64>,
    /// Drive phase at the end of the window.
    phi_end: f64,
    g: Vec<Complex64>,
}

struct CellMap {
    /// Diagonal element `(1 - p)/D`.
    diag: f64,
    /// `i g Δz / D`: B → A.
    ab: Complex64,
    /// `i g* Δt / D`: A → B.
    ba: Complex64,
}

impl Propagator {
    pub(crate) fn new(d: f64, delta: f64, nz: usize, control: &ComplexEnvelope) -> Self {
        let dt = control.grid().step();
        let s = d.sqrt() / delta;
        let mut phi = Vec::with_capacity(control.len());
        let mut acc = 0.0;
        for w in control.samples() {
            let inc = w.norm_sqr() * dt / delta;
            phi.push(acc + 0.5 * inc);
            acc += inc;
        }
        let g = control
            .samples()
            .iter()
            .zip(&phi)
            .map(|(w, &p)| w * Complex64::from_polar(s, p))
            .collect();
        Self {
            nz,
            dz: 1.0 / nz as f64,
            dt,
            s,
            delta,
            omega: control.samples().to_vec(),
            phi,
            phi_end: acc,
            g,
        }
    }

    pub(crate) fn nt(&self) -> usize {
        self.g.len()
    }

    pub(crate) fn nz(&self) -> usize {
        self.nz
    }

    pub(crate) fn dz(&self) -> f64 {
        self.dz
    }

    pub(crate) fn dt(&self) -> f64 {
        self.dt
    }

    fn cell(&self, n: usize) -> CellMap {
        let g = self.g[n];
        let p = g.norm_sqr() * self.dz * self.dt * 0.25;
        let inv = 1.0 / (1.0 + p);
        CellMap {
            diag: (1.0 - p) * inv,
            ab: I * g * (self.dz * inv),
            ba: I * g.conj() * (self.dt * inv),
        }
    }

    /// Advance interaction-picture amplitudes through the window. `b` holds
    /// `B(z)` on entry and on exit; returns `A(1, t)`. When `history` is given
    /// it receives the `B` row at the start of every time cell.
    pub(crate) fn forward(
        &self,
        a_in: &[Complex64],
        b: &mut [Complex64],
        mut history: Option<&mut Vec<Complex64>>,
    ) -> Vec<Complex64> {
        let mut a_out = Vec::with_capacity(self.nt());
        for (n, &a0) in a_in.iter().enumerate() {
            if let Some(h) = history.as_deref_mut() {
                h.extend_from_slice(b);
            }
            let m = self.cell(n);
            let mut a = a0;
            for bj in b.iter_mut() {
                let (an, bn) = (m.diag * a + m.ab * *bj, m.ba * a + m.diag * *bj);
                a = an;
                *bj = bn;
            }
            a_out.push(a);
        }
        a_out
    }

    /// Cotangent (conjugate-transpose) sweep: given cotangents of `A(1, t)` and
    /// of the final `B`, returns the cotangent of `A(0, t)` and leaves the
    /// cotangent of the initial `B` in `b_bar`.
    pub(crate) fn adjoint(&self, a_out_bar: &[Complex64], b_bar: &mut [Complex64]) -> Vec<Complex64> {
        let mut a_in_bar = vec![ZERO; self.nt()];
        for n in (0..self.nt()).rev() {
            let m = self.cell(n);
            let (ab, ba) = (m.ab.conj(), m.ba.conj());
            let mut a = a_out_bar[n];
            for bj in b_bar.iter_mut().rev() {
                let (an, bn) = (m.diag * a + ba * *bj, ab * a + m.diag * *bj);
                a = an;
                *bj = bn;
            }
            a_in_bar[n] = a;
        }
        a_in_bar
    }

    /// Gradient of a real objective `J(A_out, B_final)` with respect to the
    /// control samples, in the convention `dJ = Re Σ conj(Ω̄_n)·dΩ_n`.
    pub(crate) fn control_gradient(
        &self,
        a_in: &[Complex64],
        b_init: &[Complex64],
        a_out_bar: &[Complex64],
        b_final_bar: &[Complex64],
    ) -> Vec<Complex64> {
        let (nt, nz) = (self.nt(), self.nz);
        let mut hist = Vec::with_capacity(nt * nz);
        let mut b = b_init.to_vec();
        self.forward(a_in, &mut b, Some(&mut hist));

        let c = 0.25 * self.dz * self.dt;
        let mut b_bar = b_final_bar.to_vec();
        let mut a_row = vec![ZERO; nz];
        let mut g_bar = vec![ZERO; nt];
        for n in (0..nt).rev() {
            let m = self.cell(n);
            let row = &hist[n * nz..(n + 1) * nz];
            let mut a = a_in[n];
            for (slot, bj) in a_row.iter_mut().zip(row) {
                *slot = a;
                a = m.diag * a + m.ab * bj;
            }

            let (ab_h, ba_h) = (m.ab.conj(), m.ba.conj());
            let mut abar = a_out_bar[n];
            // Σ conj(cotangent_out)·input over the row
            let (mut s_aa, mut s_ab, mut s_ba, mut s_bb) = (ZERO, ZERO, ZERO, ZERO);
            for j in (0..nz).rev() {
                let (ai, bi) = (a_row[j], row[j]);
                let (ao_bar, bo_bar) = (abar, b_bar[j]);
                s_aa += ao_bar.conj() * ai;
                s_ab += ao_bar.conj() * bi;
                s_ba += bo_bar.conj() * ai;
                s_bb += bo_bar.conj() * bi;
                abar = m.diag * ao_bar + ba_h * bo_bar;
                b_bar[j] = ab_h * ao_bar + m.diag * bo_bar;
            }

            let g = self.g[n];
            let den = 1.0 + g.norm_sqr() * c;
            let inv = 1.0 / den;
            let inv2 = inv * inv;
            // ∂/∂Re g and ∂/∂Im g of the cell entries
            let d_diag_r = -2.0 * inv2 * 2.0 * g.re * c;
            let d_diag_i = -2.0 * inv2 * 2.0 * g.im * c;
            let d_ab_r = I * self.dz * (inv - g * (2.0 * g.re * c * inv2));
            let d_ab_i = I * self.dz * (I * inv - g * (2.0 * g.im * c * inv2));
            let d_ba_r = I * self.dt * (inv - g.conj() * (2.0 * g.re * c * inv2));
            let d_ba_i = I * self.dt * (-I * inv - g.conj() * (2.0 * g.im * c * inv2));
            let jr = (d_diag_r * (s_aa + s_bb) + d_ab_r * s_ab + d_ba_r * s_ba).re;
            let ji = (d_diag_i * (s_aa + s_bb) + d_ab_i * s_ab + d_ba_i * s_ba).re;
            g_bar[n] = Complex64::new(jr, ji);
        }

        // chain rule through g_n = s Ω_n e^{iφ_n}
        let r: Vec<f64> = g_bar.iter().zip(&self.g).map(|(gb, g)| -(gb.conj() * g).im).collect();
        let mut omega_bar = vec![ZERO; nt];
        let mut later = 0.0;
        for n in (0..nt).rev() {
            let direct = g_bar[n] * Complex64::from_polar(self.s, -self.phi[n]);
            let phase = self.dt / self.delta * (2.0 * later + r[n]);
            omega_bar[n] = direct + self.omega[n] * phase;
            later += r[n];
        }
        omega_bar
    }

    /// `e^{idz/Δ}` at each space-cell centre.
    pub(crate) fn z_phases(&self, d: f64) -> Vec<Complex64> {
        (0..self.nz)
            .map(|j| Complex64::from_polar(1.0, d * (j as f64 + 0.5) * self.dz / self.delta))
            .collect()
    }

    pub(crate) fn exit_phase(&self, d: f64) -> Complex64 {
        Complex64::from_polar(1.0, d / self.delta)
    }

    pub(crate) fn end_phase(&self) -> Complex64 {
        Complex64::from_polar(1.0, self.phi_end)
    }
}

fn check_defect(before: f64, after: f64) -> Result<f64> {
    let defect = if before > 0.0 {
        (after - before).abs() / before
    } else {
        0.0
    };
    if !defect.is_finite() || defect > NORM_DEFECT_LIMIT {
        return Err(Error::SolverTolerance { defect });
    }
    Ok(defect)
}

/// Store `input` with write control `write`; both must sit on the write grid
/// of `params`.
pub fn propagate_storage(
    params: &MemoryParams,
    write: &ComplexEnvelope,
    input: &ComplexEnvelope,
) -> Result<StorageResult> {
    params.validate()?;
    let grid = params.time_grid()?;
    grid.ensure_compatible(write.grid(), "write pulse vs write window")?;
    grid.ensure_compatible(input.grid(), "input vs write window")?;

    let prop = Propagator::new(params.d, params.delta_w, params.nz, write);
    let mut b = vec![ZERO; params.nz];
    let a_out = prop.forward(input.samples(), &mut b, None);

    let end = prop.end_phase();
    let spin: Vec<Complex64> = prop
        .z_phases(params.d)
        .iter()
        .zip(&b)
        .map(|(ph, bj)| ph * end * bj)
        .collect();
    let exit = prop.exit_phase(params.d);
    let leak: Vec<Complex64> = a_out.iter().map(|a| exit * a).collect();

    let spin_wave = ComplexEnvelope::new(params.space_grid()?, spin)?;
    let leak = ComplexEnvelope::new(*input.grid(), leak)?;
    let e_in = input.norm_sqr();
    let norm_defect = check_defect(e_in, spin_wave.norm_sqr() + leak.norm_sqr())?;
    let eta_w = if e_in > 0.0 {
        (1.0 - leak.norm_sqr() / e_in).clamp(0.0, 1.0 + EFFICIENCY_SLACK)
    } else {
        0.0
    };
    Ok(StorageResult {
        spin_wave,
        leak,
        eta_w,
        norm_defect,
        adiabaticity_strained: params.strained(write, params.delta_w),
    })
}

/// Forward retrieval of `spin` by the read control `read` at detuning
/// `params.delta_r`. The read window is the grid of `read`.
pub fn propagate_retrieval(
    params: &MemoryParams,
    read: &ComplexEnvelope,
    spin: &ComplexEnvelope,
) -> Result<RetrievalResult> {
    params.validate()?;
    let zgrid = params.space_grid()?;
    zgrid.ensure_compatible(spin.grid(), "spin wave vs space grid")?;

    let prop = Propagator::new(params.d, params.delta_r, params.nz, read);
    let zph = prop.z_phases(params.d);
    let mut b: Vec<Complex64> = zph.iter().zip(spin.samples()).map(|(ph, s)| ph.conj() * s).collect();
    let a_in = vec![ZERO; read.len()];
    let a_out = prop.forward(&a_in, &mut b, None);

    let exit = prop.exit_phase(params.d);
    let output: Vec<Complex64> = a_out.iter().map(|a| exit * a).collect();
    let end = prop.end_phase();
    let residual: Vec<Complex64> = zph.iter().zip(&b).map(|(ph, bj)| ph * end * bj).collect();

    let output = ComplexEnvelope::new(*read.grid(), output)?;
    let residual_spin = ComplexEnvelope::new(zgrid, residual)?;
    let e_spin = spin.norm_sqr();
    let norm_defect = check_defect(e_spin, output.norm_sqr() + residual_spin.norm_sqr())?;
    let eta_r = if e_spin > 0.0 {
        (output.norm_sqr() / e_spin).clamp(0.0, 1.0 + EFFICIENCY_SLACK)
    } else {
        0.0
    };
    Ok(RetrievalResult {
        output,
        residual_spin,
        eta_r,
        norm_defect,
        adiabaticity_strained: params.strained(read, params.delta_r),
    })
}

/// Closed-form storage kernel sampled as a matrix, `K[i, k] = q(z_i, t_k)·Δt`,
/// with `q(z, t) = i(√d/Δ) Ω*(t) e^{i(dz + h)/Δ} J₀(2√(h d z)/|Δ|)` and
/// `h(t) = ∫_t^{t_W}|Ω|²`. `h` uses the same midpoint quadrature as the
/// solver: the full weight of later cells plus half of the current one.
pub fn storage_kernel_matrix(params: &MemoryParams, write: &ComplexEnvelope) -> Result<LinearMapMatrix> {
    params.validate()?;
    let tgrid = params.time_grid()?;
    tgrid.ensure_compatible(write.grid(), "write pulse vs write window")?;
    let zgrid = params.space_grid()?;
    let (d, delta) = (params.d, params.delta_w);
    let dt = tgrid.step();

    let intensity: Vec<f64> = write.samples().iter().map(|w| w.norm_sqr() * dt).collect();
    let mut h = vec![0.0; intensity.len()];
    let mut later = 0.0;
    for k in (0..intensity.len()).rev() {
        h[k] = later + 0.5 * intensity[k];
        later += intensity[k];
    }

    let pref = I * (d.sqrt() / delta) * dt;
    let matrix = DMatrix::from_fn(zgrid.len(), tgrid.len(), |i, k| {
        let z = zgrid.coord(i);
        let omega = write.samples()[k];
        if omega == ZERO {
            return ZERO;
        }
        let arg = 2.0 * (h[k] * d * z).sqrt() / delta.abs();
        pref * omega.conj() * Complex64::from_polar(j0(arg), (d * z + h[k]) / delta)
    });
    Ok(LinearMapMatrix {
        row_grid: zgrid,
        col_grid: tgrid,
        matrix,
    })
}

/// Dense matrix of the discrete storage map (input samples to spin-wave
/// samples) of the propagation solver, assembled column by column.
pub fn solver_storage_matrix(params: &MemoryParams, write: &ComplexEnvelope) -> Result<LinearMapMatrix> {
    params.validate()?;
    let tgrid = params.time_grid()?;
    tgrid.ensure_compatible(write.grid(), "write pulse vs write window")?;
    let prop = Propagator::new(params.d, params.delta_w, params.nz, write);
    let lab: Vec<Complex64> = prop.z_phases(params.d).iter().map(|ph| ph * prop.end_phase()).collect();
    let mut matrix = DMatrix::from_element(params.nz, tgrid.len(), ZERO);
    let mut unit = vec![ZERO; tgrid.len()];
    for k in 0..tgrid.len() {
        unit[k] = Complex64::new(1.0, 0.0);
        let mut b = vec![ZERO; params.nz];
        prop.forward(&unit, &mut b, None);
        for (j, bj) in b.iter().enumerate() {
            matrix[(j, k)] = lab[j] * bj;
        }
        unit[k] = ZERO;
    }
    Ok(LinearMapMatrix {
        row_grid: params.space_grid()?,
        col_grid: tgrid,
        matrix,
    })
}

/// The storage map `input ↦ spin wave` for a fixed write control, with its
/// adjoint taken in the grid inner products `Σ conj(a)·b·step`.
#[derive(Debug, Clone)]
pub struct StorageOperator {
    prop: Propagator,
    lab: Vec<Complex64>,
    tgrid: Grid,
    zgrid: Grid,
}

impl StorageOperator {
    pub fn new(params: &MemoryParams, write: &ComplexEnvelope) -> Result<Self> {
        params.validate()?;
        let tgrid = params.time_grid()?;
        tgrid.ensure_compatible(write.grid(), "write pulse vs write window")?;
        let prop = Propagator::new(params.d, params.delta_w, params.nz, write);
        let end = prop.end_phase();
        let lab = prop.z_phases(params.d).iter().map(|ph| ph * end).collect();
        Ok(Self {
            prop,
            lab,
            tgrid,
            zgrid: params.space_grid()?,
        })
    }

    pub fn time_grid(&self) -> &Grid {
        &self.tgrid
    }

    pub fn space_grid(&self) -> &Grid {
        &self.zgrid
    }

    pub(crate) fn propagator(&self) -> &Propagator {
        &self.prop
    }

    pub(crate) fn apply_samples(&self, input: &[Complex64]) -> Vec<Complex64> {
        let mut b = vec![ZERO; self.prop.nz()];
        self.prop.forward(input, &mut b, None);
        b.iter().zip(&self.lab).map(|(bj, ph)| ph * bj).collect()
    }

    pub(crate) fn adjoint_samples(&self, spin: &[Complex64]) -> Vec<Complex64> {
        let dz = self.prop.dz();
        let mut b_bar: Vec<Complex64> = spin.iter().zip(&self.lab).map(|(s, ph)| ph.conj() * s * dz).collect();
        let zeros = vec![ZERO; self.prop.nt()];
        let x = self.prop.adjoint(&zeros, &mut b_bar);
        let inv_dt = 1.0 / self.prop.dt();
        x.into_iter().map(|v| v * inv_dt).collect()
    }

    pub fn apply(&self, input: &ComplexEnvelope) -> Result<ComplexEnvelope> {
        self.tgrid.ensure_compatible(input.grid(), "storage operator input")?;
        ComplexEnvelope::new(self.zgrid, self.apply_samples(input.samples()))
    }

    pub fn adjoint(&self, spin: &ComplexEnvelope) -> Result<ComplexEnvelope> {
        self.zgrid
            .ensure_compatible(spin.grid(), "storage operator adjoint input")?;
        ComplexEnvelope::new(self.tgrid, self.adjoint_samples(spin.samples()))
    }
}

/// `(η_W, η_R, η_T = η_W·η_R)`.
pub fn efficiencies(storage: &StorageResult, retrieval: &RetrievalResult) -> (f64, f64, f64) {
    (storage.eta_w, retrieval.eta_r, storage.eta_w * retrieval.eta_r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_pulse::{make_pulse, PulseShapeSpec};
    use approx::assert_relative_eq;

    fn small_params(nz: usize, nt: usize) -> MemoryParams {
        MemoryParams {
            d: 10.0,
            delta_w: 50.0,
            delta_r: 50.0,
            t_write: 10.0,
            nz,
            nt,
            ..MemoryParams::default()
        }
    }

    fn gaussian_on(params: &MemoryParams, fwhm: f64, amp: f64) -> ComplexEnvelope {
        let grid = params.time_grid().unwrap();
        let delay = 0.5 * params.t_write - 0.5 * fwhm;
        make_pulse(&PulseShapeSpec::gaussian(fwhm, amp, delay), &grid).unwrap()
    }

    fn rel_l2(a: &ComplexEnvelope, b: &ComplexEnvelope) -> f64 {
        let diff: f64 = a
            .samples()
            .iter()
            .zip(b.samples())
            .map(|(x, y)| (x - y).norm_sqr())
            .sum();
        let base: f64 = b.samples().iter().map(|y| y.norm_sqr()).sum();
        (diff / base).sqrt()
    }

    #[test]
    fn uncoupled_storage_passes_input_with_phase() {
        let p = small_params(32, 64);
        let grid = p.time_grid().unwrap();
        let input = gaussian_on(&p, 3.0, 1.0);
        let res = propagate_storage(&p, &ComplexEnvelope::zeros(grid), &input).unwrap();
        assert!(res.spin_wave.is_zero());
        assert_eq!(res.eta_w, 0.0);
        let phase = Complex64::from_polar(1.0, p.d / p.delta_w);
        for (l, e) in res.leak.samples().iter().zip(input.samples()) {
            assert!((l - phase * e).norm() < 1e-14);
        }
    }

    #[test]
    fn zero_input_gives_zero_outputs() {
        let p = small_params(32, 64);
        let write = gaussian_on(&p, 3.0, 1.0);
        let res = propagate_storage(&p, &write, &ComplexEnvelope::zeros(*write.grid())).unwrap();
        assert!(res.spin_wave.is_zero() && res.leak.is_zero());
        assert_eq!(res.eta_w, 0.0);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let p = small_params(32, 64);
        let write = gaussian_on(&p, 3.0, 1.0);
        let other = ComplexEnvelope::zeros(Grid::cell_centered(0.0, 12.0, 64).unwrap());
        assert!(matches!(
            propagate_storage(&p, &write, &other),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn kernel_at_z0_and_window_end() {
        let p = small_params(32, 64);
        let write = gaussian_on(&p, 3.0, 1.0);
        let k = storage_kernel_matrix(&p, &write).unwrap();
        let dt = p.time_grid().unwrap().step();
        // first z cell sits at dz/2; compare against the z → 0 limit there
        let s = p.d.sqrt() / p.delta_w.abs();
        for t in 0..64 {
            let q = k.matrix[(0, t)].norm() / dt;
            let w = write.samples()[t].norm();
            assert!((q - s * w).abs() <= 2e-3 * s * w + 1e-300);
        }
    }

    #[test]
    fn kernel_matches_solver_on_small_case() {
        let p = small_params(128, 128);
        let write = gaussian_on(&p, 3.0, 1.0);
        let input = gaussian_on(&p, 3.2, 1.0);
        let res = propagate_storage(&p, &write, &input).unwrap();
        let k = storage_kernel_matrix(&p, &write).unwrap();
        let spin_k = k.apply(&input).unwrap();
        assert!(rel_l2(&res.spin_wave, &spin_k) < 1e-3);
        let eta_k = spin_k.norm_sqr() / input.norm_sqr();
        assert!((eta_k - res.eta_w).abs() < 1e-3);
    }

    #[test]
    fn energy_balance_holds_to_rounding() {
        let p = MemoryParams {
            nz: 64,
            nt: 120,
            ..MemoryParams::default()
        };
        let grid = p.time_grid().unwrap();
        let write = make_pulse(&PulseShapeSpec::square(10.0, 0.2, 10.0), &grid).unwrap();
        let input = make_pulse(&PulseShapeSpec::square(10.0, 1.0, 10.0), &grid).unwrap();
        let st = propagate_storage(&p, &write, &input).unwrap();
        assert!(st.norm_defect < 1e-12, "{}", st.norm_defect);
        let read = make_pulse(&PulseShapeSpec::square(20.0, 0.3, 5.0), &grid).unwrap();
        let rt = propagate_retrieval(&p, &read, &st.spin_wave).unwrap();
        assert!(rt.norm_defect < 1e-12);
        let (w, r, t) = efficiencies(&st, &rt);
        assert_relative_eq!(t, w * r);
    }

    #[test]
    fn solver_matrix_reproduces_storage() {
        let p = small_params(24, 40);
        let write = gaussian_on(&p, 3.0, 2.0);
        let input = gaussian_on(&p, 3.2, 1.0);
        let m = solver_storage_matrix(&p, &write).unwrap();
        let direct = propagate_storage(&p, &write, &input).unwrap().spin_wave;
        assert!(rel_l2(&m.apply(&input).unwrap(), &direct) < 1e-13);
    }

    #[test]
    fn adjoint_sweep_is_conjugate_transpose() {
        let p = small_params(20, 30);
        let write = gaussian_on(&p, 3.0, 3.0);
        let prop = Propagator::new(p.d, p.delta_w, p.nz, &write);
        let x: Vec<Complex64> = (0..30).map(|k| Complex64::new((k as f64).sin(), 0.3)).collect();
        let b0: Vec<Complex64> = (0..20).map(|j| Complex64::new(0.1, (j as f64).cos())).collect();
        let ya: Vec<Complex64> = (0..30).map(|k| Complex64::new(0.2, (k as f64 * 0.7).cos())).collect();
        let yb: Vec<Complex64> = (0..20).map(|j| Complex64::new((j as f64).sqrt(), -0.4)).collect();

        let mut b = b0.clone();
        let a_out = prop.forward(&x, &mut b, None);
        let lhs: Complex64 = ya.iter().zip(&a_out).map(|(y, a)| y.conj() * a).sum::<Complex64>()
            + yb.iter().zip(&b).map(|(y, v)| y.conj() * v).sum::<Complex64>();
        let mut bbar = yb.clone();
        let xbar = prop.adjoint(&ya, &mut bbar);
        let rhs: Complex64 = xbar.iter().zip(&x).map(|(y, a)| y.conj() * a).sum::<Complex64>()
            + bbar.iter().zip(&b0).map(|(y, v)| y.conj() * v).sum::<Complex64>();
        assert!((lhs - rhs).norm() < 1e-12 * lhs.norm().max(1.0));
    }
}
