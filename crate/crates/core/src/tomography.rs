//! Simulated phase-scanned homodyne detection and maximum-likelihood state
//! reconstruction.
//!
//! Quadratures follow `X_θ = (a e^{−iθ} + a† e^{iθ})/√2` (vacuum variance ½),
//! whose eigenstates are `|x_θ⟩ = Σ ψ_n(x) e^{iθn}|n⟩` with Hermite functions
//! `ψ_n`. Reconstruction bins the record in phase and quadrature value and runs
//! the iterative `RρR` algorithm, diluted whenever a full step would lower the
//! likelihood, so the log-likelihood never decreases.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::io::{Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_pulse::{fmt_f64, ComplexEnvelope};
use crate::quantum_states::{apply_memory_channel, uhlmann_fidelity, ChannelParams, DensityMatrix};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const TWO_PI: f64 = 2.0 * PI;

/// Largest admissible gap between recorded phases.
pub const MAX_PHASE_GAP: f64 = PI / 8.0;

/// Phase lattice used to tabulate quadrature distributions for sampling.
const PHASE_LATTICE: usize = 1024;
/// Quadrature grid used to tabulate distributions for sampling.
const X_GRID: usize = 4096;
/// Gauss–Legendre nodes per quadrature bin.
const BIN_NODES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRecord {
    /// `(θ, x)` pairs with `θ ∈ [0, 2π)`.
    pub samples: Vec<(f64, f64)>,
}

impl QuadratureRecord {
    pub fn new(samples: Vec<(f64, f64)>) -> Self {
        Self { samples }
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    /// Largest circular gap between recorded phases (`2π` for an empty record).
    pub fn max_phase_gap(&self) -> f64 {
        if self.samples.is_empty() {
            return TWO_PI;
        }
        let mut phases: Vec<f64> = self.samples.iter().map(|s| s.0.rem_euclid(TWO_PI)).collect();
        phases.sort_by(f64::total_cmp);
        let wrap = phases[0] + TWO_PI - phases[phases.len() - 1];
        phases.windows(2).map(|w| w[1] - w[0]).fold(wrap, f64::max)
    }

    /// Same record with every phase advanced by `phi`.
    pub fn phase_shifted(&self, phi: f64) -> Self {
        Self {
            samples: self
                .samples
                .iter()
                .map(|&(t, x)| ((t + phi).rem_euclid(TWO_PI), x))
                .collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut writer: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(writer, "# {c}")?;
        }
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["phase", "value"])?;
        for (t, x) in &self.samples {
            w.write_record([fmt_f64(*t), fmt_f64(*x)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut samples = Vec::new();
        for record in rdr.records() {
            let record = record?;
            if record.len() < 2 {
                return Err(Error::Parse("expected columns phase, value".into()));
            }
            let parse = |i: usize| -> Result<f64> {
                record[i]
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("column {i}: {e}")))
            };
            samples.push((parse(0)?, parse(1)?));
        }
        Ok(Self { samples })
    }
}

/// Hermite functions `ψ_0(x) … ψ_{dim−1}(x)` by the stable three-term recurrence.
pub fn hermite_functions(x: f64, dim: usize) -> Vec<f64> {
    let mut psi = vec![0.0; dim];
    if dim == 0 {
        return psi;
    }
    psi[0] = PI.powf(-0.25) * (-0.5 * x * x).exp();
    if dim > 1 {
        psi[1] = SQRT_2 * x * psi[0];
    }
    for n in 1..dim.saturating_sub(1) {
        let nf = n as f64;
        psi[n + 1] = (2.0 / (nf + 1.0)).sqrt() * x * psi[n] - (nf / (nf + 1.0)).sqrt() * psi[n - 1];
    }
    psi
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Tabulated quadrature distributions of one state.
struct QuadratureSampler {
    x: Vec<f64>,
    /// `F_k(x) = Σ_{m−n=k} ρ_mn ψ_m(x) ψ_n(x)` for `k ≥ 0`.
    fk: Vec<Vec<Complex64>>,
    cdfs: Vec<Option<Vec<f64>>>,
}

impl QuadratureSampler {
    fn new(rho: &DensityMatrix) -> Self {
        let dim = rho.dim();
        let half = (2.0 * dim as f64 + 1.0).sqrt() + 5.0;
        let dx = 2.0 * half / (X_GRID - 1) as f64;
        let x: Vec<f64> = (0..X_GRID).map(|j| -half + j as f64 * dx).collect();
        let mut fk = vec![vec![ZERO; X_GRID]; dim];
        for (j, &xj) in x.iter().enumerate() {
            let psi = hermite_functions(xj, dim);
            for (k, f) in fk.iter_mut().enumerate() {
                let mut acc = ZERO;
                for n in 0..dim - k {
                    acc += rho.get(n + k, n) * (psi[n + k] * psi[n]);
                }
                f[j] = acc;
            }
        }
        Self {
            x,
            fk,
            cdfs: vec![None; PHASE_LATTICE],
        }
    }

    fn cdf(&mut self, lattice: usize) -> &[f64] {
        if self.cdfs[lattice].is_none() {
            let theta = TWO_PI * lattice as f64 / PHASE_LATTICE as f64;
            let rot: Vec<Complex64> = (0..self.fk.len())
                .map(|k| Complex64::from_polar(1.0, -theta * k as f64))
                .collect();
            let pdf: Vec<f64> = (0..self.x.len())
                .map(|j| {
                    let mut p = self.fk[0][j].re;
                    for k in 1..self.fk.len() {
                        p += 2.0 * (rot[k] * self.fk[k][j]).re;
                    }
                    p.max(0.0)
                })
                .collect();
            let mut cdf = vec![0.0; pdf.len()];
            for j in 1..pdf.len() {
                cdf[j] = cdf[j - 1] + 0.5 * (pdf[j] + pdf[j - 1]);
            }
            let total = cdf[cdf.len() - 1];
            cdf.iter_mut().for_each(|c| *c /= total);
            self.cdfs[lattice] = Some(cdf);
        }
        self.cdfs[lattice].as_deref().unwrap()
    }

    fn invert(&mut self, lattice: usize, u: f64) -> f64 {
        let x0 = self.x[0];
        let dx = self.x[1] - self.x[0];
        let cdf = self.cdf(lattice);
        let j = cdf.partition_point(|&c| c < u).clamp(1, cdf.len() - 1);
        let (c0, c1) = (cdf[j - 1], cdf[j]);
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        x0 + (j as f64 - 1.0 + frac) * dx
    }
}

/// Draw `n_samples` homodyne outcomes with uniformly random phase. The
/// distribution at `θ` is interpolated linearly between a fine phase lattice.
pub fn simulate_homodyne(rho: &DensityMatrix, n_samples: usize, seed: u64) -> Result<QuadratureRecord> {
    if n_samples == 0 {
        return Err(Error::param("n_samples", "must be >= 1"));
    }
    let mut sampler = QuadratureSampler::new(rho);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let theta = rng.gen::<f64>() * TWO_PI;
        let pos = theta / TWO_PI * PHASE_LATTICE as f64;
        let lo = (pos.floor() as usize).min(PHASE_LATTICE - 1);
        let w = pos - lo as f64;
        let lattice = if rng.gen::<f64>() < w {
            (lo + 1) % PHASE_LATTICE
        } else {
            lo
        };
        let x = sampler.invert(lattice, rng.gen::<f64>());
        samples.push((theta, x));
    }
    Ok(QuadratureRecord { samples })
}

/// Temporal-mode projection `Re ∫ conj(mode(t))·raw(t) dt` of a homodyne
/// photocurrent trace onto a unit-norm mode.
pub fn matched_filter_quadrature(raw: &ComplexEnvelope, mode: &ComplexEnvelope) -> Result<f64> {
    mode.grid().ensure_compatible(raw.grid(), "raw trace vs mode")?;
    let n = mode.norm_sqr();
    if (n - 1.0).abs() > 1e-6 {
        return Err(Error::ModeNotNormalized { norm_sqr: n });
    }
    Ok(mode.inner(raw)?.re)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MLConfig {
    pub n_max: usize,
    pub n_phase_bins: usize,
    pub n_x_bins: usize,
    /// Half-width of the binned quadrature interval.
    pub x_range: f64,
    pub max_iter: usize,
    /// Relative log-likelihood change that stops the iteration.
    pub loglik_tol: f64,
}

impl MLConfig {
    /// Defaults for states with mean photon number up to `n_bar`.
    pub fn for_mean_photons(n_bar: f64) -> Self {
        let n_bar = n_bar.max(0.0);
        Self {
            n_max: (n_bar + 8.0 * n_bar.sqrt() + 6.0).ceil().max(12.0) as usize,
            n_phase_bins: 30,
            n_x_bins: 120,
            x_range: 5.0 * FRAC_1_SQRT_2 + SQRT_2 * n_bar.sqrt(),
            max_iter: 2000,
            loglik_tol: 1e-10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_max < 1 {
            return Err(Error::param("n_max", "must be >= 1"));
        }
        if self.n_phase_bins < 8 {
            return Err(Error::param("n_phase_bins", "must be >= 8"));
        }
        if self.n_x_bins < 8 {
            return Err(Error::param("n_x_bins", "must be >= 8"));
        }
        if !(self.x_range >= 5.0 * FRAC_1_SQRT_2) {
            return Err(Error::param(
                "x_range",
                format!(
                    "must cover 5 vacuum standard deviations (>= {:.4})",
                    5.0 * FRAC_1_SQRT_2
                ),
            ));
        }
        if !(self.loglik_tol > 0.0) {
            return Err(Error::param("loglik_tol", "must be > 0"));
        }
        Ok(())
    }
}

impl Default for MLConfig {
    fn default() -> Self {
        Self::for_mean_photons(1.0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MLResult {
    pub rho: DensityMatrix,
    /// Mean log-likelihood per kept sample, one entry per accepted iterate.
    pub loglik_history: Vec<f64>,
    pub iterations: usize,
    /// False when the tolerance was not reached or the record has fewer
    /// samples than free parameters.
    pub converged: bool,
    /// Samples outside `±x_range`.
    pub dropped_samples: usize,
}

/// Binned POVM `Π_{b,x}[n, m] = I_x[n, m]·e^{iθ_b(n−m)}·sinc((n−m)w/2)`.
struct BinnedPovm {
    dim: usize,
    /// `∫_bin ψ_m ψ_n dx`, one row per quadrature bin, `m·dim + n` columns.
    overlaps: DMatrix<f64>,
    /// Phase factor per (phase bin, n − m + dim − 1).
    phase: Vec<Vec<Complex64>>,
}

impl BinnedPovm {
    fn new(cfg: &MLConfig) -> Self {
        let dim = cfg.n_max + 1;
        let (nodes, weights) = gauss_legendre(BIN_NODES);
        let width = 2.0 * cfg.x_range / cfg.n_x_bins as f64;
        let mut overlaps = DMatrix::zeros(cfg.n_x_bins, dim * dim);
        for b in 0..cfg.n_x_bins {
            let centre = -cfg.x_range + (b as f64 + 0.5) * width;
            for (t, w) in nodes.iter().zip(&weights) {
                let psi = hermite_functions(centre + 0.5 * width * t, dim);
                let w = 0.5 * width * w;
                for m in 0..dim {
                    for n in 0..dim {
                        overlaps[(b, m * dim + n)] += w * psi[m] * psi[n];
                    }
                }
            }
        }
        let bw = TWO_PI / cfg.n_phase_bins as f64;
        let phase = (0..cfg.n_phase_bins)
            .map(|b| {
                let theta = (b as f64 + 0.5) * bw;
                (0..2 * dim - 1)
                    .map(|i| {
                        let k = i as f64 - (dim as f64 - 1.0);
                        let y = 0.5 * k * bw;
                        let sinc = if y == 0.0 { 1.0 } else { y.sin() / y };
                        Complex64::from_polar(sinc, theta * k)
                    })
                    .collect()
            })
            .collect();
        Self { dim, overlaps, phase }
    }

    fn factor(&self, b: usize, n: usize, m: usize) -> Complex64 {
        self.phase[b][n + self.dim - 1 - m]
    }

    /// Bin probabilities `p[b, x] = tr(Π_{b,x} ρ)`.
    fn probabilities(&self, rho: &DMatrix<Complex64>) -> DMatrix<f64> {
        let d = self.dim;
        let nb = self.phase.len();
        // Re(e^{iθ_b(n−m)} s ρ[m, n]) laid out as m·d + n
        let t = DMatrix::from_fn(nb, d * d, |b, idx| {
            let (m, n) = (idx / d, idx % d);
            (self.factor(b, n, m) * rho[(m, n)]).re
        });
        t * self.overlaps.transpose()
    }

    /// `R = Σ_{b,x} w[b, x]·Π_{b,x}`.
    fn weighted_sum(&self, w: &DMatrix<f64>) -> DMatrix<Complex64> {
        let d = self.dim;
        let q = w * &self.overlaps;
        DMatrix::from_fn(d, d, |n, m| {
            let mut acc = ZERO;
            for b in 0..self.phase.len() {
                acc += self.factor(b, n, m) * q[(b, n * d + m)];
            }
            acc
        })
    }
}

fn log_likelihood(counts: &DMatrix<f64>, p: &DMatrix<f64>, total: f64) -> f64 {
    let mut acc = 0.0;
    for (c, pv) in counts.iter().zip(p.iter()) {
        if *c > 0.0 {
            acc += c * pv.max(1e-300).ln();
        }
    }
    acc / total
}

/// Iterative maximum-likelihood reconstruction from a homodyne record.
pub fn ml_reconstruct(record: &QuadratureRecord, cfg: &MLConfig) -> Result<MLResult> {
    cfg.validate()?;
    if record.samples.is_empty() {
        return Err(Error::EmptyRecord);
    }
    let gap = record.max_phase_gap();
    if gap >= MAX_PHASE_GAP {
        return Err(Error::InsufficientPhaseCoverage {
            gap,
            limit: MAX_PHASE_GAP,
        });
    }

    let dim = cfg.n_max + 1;
    let mut counts = DMatrix::<f64>::zeros(cfg.n_phase_bins, cfg.n_x_bins);
    let mut dropped = 0;
    for &(theta, x) in &record.samples {
        if !(x.abs() < cfg.x_range) {
            dropped += 1;
            continue;
        }
        let b = ((theta.rem_euclid(TWO_PI) / TWO_PI * cfg.n_phase_bins as f64) as usize).min(cfg.n_phase_bins - 1);
        let xb = (((x + cfg.x_range) / (2.0 * cfg.x_range) * cfg.n_x_bins as f64) as usize).min(cfg.n_x_bins - 1);
        counts[(b, xb)] += 1.0;
    }
    let kept = (record.n_samples() - dropped) as f64;
    if kept == 0.0 {
        return Err(Error::EmptyRecord);
    }

    let povm = BinnedPovm::new(cfg);
    let identity = DMatrix::<Complex64>::identity(dim, dim);
    let mut rho = identity.scale(1.0 / dim as f64);
    let mut p = povm.probabilities(&rho);
    let mut loglik = log_likelihood(&counts, &p, kept);
    let mut history = vec![loglik];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        iterations += 1;
        let w = DMatrix::from_fn(cfg.n_phase_bins, cfg.n_x_bins, |b, x| {
            let c = counts[(b, x)];
            if c > 0.0 {
                c / kept / p[(b, x)].max(1e-300)
            } else {
                0.0
            }
        });
        let r = povm.weighted_sum(&w);

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let step = identity.scale(1.0 - t) + r.scale(t);
            let mut next = &step * &rho * step.adjoint();
            next = (&next + next.adjoint()).scale(0.5);
            let tr = next.trace().re;
            next = next.unscale(tr);
            let p_next = povm.probabilities(&next);
            let l_next = log_likelihood(&counts, &p_next, kept);
            if l_next >= loglik {
                accepted = Some((next, p_next, l_next));
                break;
            }
            t *= 0.5;
        }
        let Some((next, p_next, l_next)) = accepted else {
            converged = true;
            break;
        };
        let change = l_next - loglik;
        rho = next;
        p = p_next;
        loglik = l_next;
        history.push(loglik);
        if change <= cfg.loglik_tol * loglik.abs().max(1e-300) {
            converged = true;
            break;
        }
    }

    let free_parameters = dim * dim - 1;
    if (kept as usize) < free_parameters {
        converged = false;
    }
    Ok(MLResult {
        rho: DensityMatrix::from_raw(rho),
        loglik_history: history,
        iterations,
        converged,
        dropped_samples: dropped,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineResult {
    pub rho_in_hat: DensityMatrix,
    pub rho_out_hat: DensityMatrix,
    pub fidelity: f64,
    pub input_fit: FitSummary,
    pub output_fit: FitSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSummary {
    pub iterations: usize,
    pub converged: bool,
    pub dropped_samples: usize,
    pub final_loglik: f64,
}

impl From<&MLResult> for FitSummary {
    fn from(r: &MLResult) -> Self {
        Self {
            iterations: r.iterations,
            converged: r.converged,
            dropped_samples: r.dropped_samples,
            final_loglik: *r.loglik_history.last().unwrap_or(&f64::NAN),
        }
    }
}

/// Simulate records of the input and of its image under the memory channel,
/// reconstruct both, and return the fidelity between the reconstructions.
pub fn reconstruct_fidelity_pipeline(
    rho_true_in: &DensityMatrix,
    ch: &ChannelParams,
    n_samples: usize,
    cfg: &MLConfig,
    seed: u64,
) -> Result<PipelineResult> {
    let rho_true_out = apply_memory_channel(rho_true_in, ch)?;
    let (fit_in, fit_out) = rayon::join(
        || -> Result<MLResult> {
            let rec = simulate_homodyne(rho_true_in, n_samples, crate::derive_seed(seed, 0))?;
            ml_reconstruct(&rec, cfg)
        },
        || -> Result<MLResult> {
            let rec = simulate_homodyne(&rho_true_out, n_samples, crate::derive_seed(seed, 1))?;
            ml_reconstruct(&rec, cfg)
        },
    );
    let (fit_in, fit_out) = (fit_in?, fit_out?);
    let fidelity = uhlmann_fidelity(&fit_in.rho, &fit_out.rho)?;
    Ok(PipelineResult {
        input_fit: (&fit_in).into(),
        output_fit: (&fit_out).into(),
        rho_in_hat: fit_in.rho,
        rho_out_hat: fit_out.rho,
        fidelity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_pulse::{make_pulse, Grid, PulseShapeSpec};
    use crate::quantum_states::coherent_state;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn hermite_functions_are_orthonormal() {
        let dim = 30;
        let (a, n) = (-12.0, 6000);
        let dx = 24.0 / n as f64;
        let mut gram = vec![vec![0.0; dim]; dim];
        for j in 0..n {
            let psi = hermite_functions(a + (j as f64 + 0.5) * dx, dim);
            for m in 0..dim {
                for k in 0..dim {
                    gram[m][k] += psi[m] * psi[k] * dx;
                }
            }
        }
        for m in 0..dim {
            for k in 0..dim {
                let want = if m == k { 1.0 } else { 0.0 };
                assert!((gram[m][k] - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let int: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((int - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn simulation_is_deterministic() {
        let rho = coherent_state(c(0.8, 0.1), 12).unwrap();
        let a = simulate_homodyne(&rho, 500, 7).unwrap();
        let b = simulate_homodyne(&rho, 500, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, simulate_homodyne(&rho, 500, 8).unwrap());
    }

    #[test]
    fn coherent_mean_at_zero_phase() {
        let alpha = 1.2;
        let rho = coherent_state(c(alpha, 0.0), 20).unwrap();
        let rec = simulate_homodyne(&rho, 200_000, 3).unwrap();
        let near: Vec<f64> = rec
            .samples
            .iter()
            .filter(|(t, _)| *t < 0.05 || *t > TWO_PI - 0.05)
            .map(|s| s.1)
            .collect();
        let n = near.len() as f64;
        let mean = near.iter().sum::<f64>() / n;
        // σ = 1/√2; the ±0.05 window shifts the mean by < 1e-3
        let sigma = FRAC_1_SQRT_2 / n.sqrt();
        assert!((mean - SQRT_2 * alpha).abs() < 3.0 * sigma + 1e-3, "{mean}");
    }

    #[test]
    fn matched_filter_examples() {
        let grid = Grid::cell_centered(0.0, 20.0, 400).unwrap();
        let mode = make_pulse(&PulseShapeSpec::gaussian(4.0, 1.0, 8.0), &grid)
            .unwrap()
            .normalized()
            .unwrap();
        assert!((matched_filter_quadrature(&mode, &mode).unwrap() - 1.0).abs() < 1e-12);
        // odd partner of the even mode
        let odd = ComplexEnvelope::from_fn(grid, |t| {
            let centre = 10.0;
            let m = mode.samples()[((t - 0.025) / 0.05).round() as usize];
            m * (t - centre)
        });
        assert!(matched_filter_quadrature(&odd, &mode).unwrap().abs() < 1e-12);
        let unnormalized = mode.scaled(c(2.0, 0.0));
        assert!(matches!(
            matched_filter_quadrature(&mode, &unnormalized),
            Err(Error::ModeNotNormalized { .. })
        ));
    }

    #[test]
    fn empty_and_gappy_records_are_rejected() {
        let cfg = MLConfig::default();
        assert!(matches!(
            ml_reconstruct(&QuadratureRecord::new(vec![]), &cfg),
            Err(Error::EmptyRecord)
        ));
        let rec = QuadratureRecord::new((0..100).map(|i| (0.01 * i as f64, 0.0)).collect());
        let err = ml_reconstruct(&rec, &cfg).unwrap_err();
        assert!(err.to_string().contains("insufficient phase coverage"));
    }

    #[test]
    fn likelihood_never_decreases() {
        let rho = coherent_state(c(1.0, 0.5), 20).unwrap();
        let rec = simulate_homodyne(&rho, 5000, 11).unwrap();
        let cfg = MLConfig {
            max_iter: 200,
            ..MLConfig::for_mean_photons(1.25)
        };
        let res = ml_reconstruct(&rec, &cfg).unwrap();
        for w in res.loglik_history.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert!(res.rho.hermitian_deviation() < 1e-12);
        assert!((res.rho.trace() - 1.0).abs() < 1e-9);
        assert!(res.rho.min_eigenvalue() >= -1e-10);
    }

    #[test]
    fn record_csv_round_trip() {
        let rec = simulate_homodyne(&coherent_state(c(0.3, 0.0), 8).unwrap(), 50, 1).unwrap();
        let mut buf = Vec::new();
        rec.write_csv(&mut buf, &["seed=1".into()]).unwrap();
        assert_eq!(QuadratureRecord::read_csv(buf.as_slice()).unwrap(), rec);
    }
}
