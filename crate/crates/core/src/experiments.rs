//! Parameter sweeps, control-power calibration, the delay-bandwidth product and
//! the headline report.
//!
//! Every routine takes a [`RunConfig`] and is deterministic given its seed.
//! Sweep points run on the ambient rayon pool and are gathered in order.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ControlMode, ReadShape, RunConfig, SweepKind};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::grid_pulse::{bandwidth_estimate, fmt_f64, fwhm, make_pulse, ComplexEnvelope, Grid, PulseShapeSpec};
use crate::memory_dynamics::{propagate_retrieval, propagate_storage, MemoryParams, RetrievalResult, StorageResult};
use crate::optimal_control::{delayed_control_experiment, optimal_spin_mode, shape_write_pulse, ControlSolution};
use crate::quantum_states::{
    apply_memory_channel, coherent_state, default_n_max, fidelity_closed_form, uhlmann_fidelity, ChannelParams,
};
use crate::tomography::{reconstruct_fidelity_pipeline, MLConfig};
use crate::Complex64;

/// Rescale `env` to drive area `area`; a zero area gives a zero envelope.
pub fn scaled_to_area(env: &ComplexEnvelope, area: f64) -> Result<ComplexEnvelope> {
    if area == 0.0 {
        return Ok(ComplexEnvelope::zeros(*env.grid()));
    }
    let e = env.norm_sqr();
    if e == 0.0 {
        return Err(Error::ZeroInput);
    }
    Ok(env.scaled(Complex64::new((area / e).sqrt(), 0.0)))
}

pub fn input_envelope(cfg: &RunConfig) -> Result<ComplexEnvelope> {
    make_pulse(&cfg.input, &cfg.memory.time_grid()?)
}

/// Write control of drive area `area`. Gaussian and square controls last
/// `control.write_duration` and are centred on the input pulse.
pub fn write_control(
    cfg: &RunConfig,
    mode: ControlMode,
    area: f64,
) -> Result<(ComplexEnvelope, Option<ControlSolution>)> {
    let grid = cfg.memory.time_grid()?;
    let centre = cfg.input.delay + 0.5 * cfg.input.duration;
    let tw = cfg.control.write_duration;
    match mode {
        ControlMode::Optimal => {
            let input = input_envelope(cfg)?;
            let sol = shape_write_pulse(&cfg.memory, &input, None, area, &cfg.control.shaping)?;
            Ok((sol.write_pulse.clone(), Some(sol)))
        }
        ControlMode::Gaussian => {
            let env = make_pulse(&PulseShapeSpec::gaussian(tw, 1.0, centre - 0.5 * tw), &grid)?;
            Ok((scaled_to_area(&env, area)?, None))
        }
        ControlMode::Square => {
            let env = make_pulse(&PulseShapeSpec::square(tw, 1.0, centre - 0.5 * tw), &grid)?;
            Ok((scaled_to_area(&env, area)?, None))
        }
    }
}

/// Read control of drive area `area`, centred in the read window.
pub fn read_control(cfg: &RunConfig, shape: ReadShape, area: f64) -> Result<ComplexEnvelope> {
    let c = &cfg.control;
    let grid = Grid::cell_centered(0.0, c.read_window, c.read_nt)?;
    let delay = 0.5 * (c.read_window - c.read_duration);
    let spec = match shape {
        ReadShape::Gaussian => PulseShapeSpec::gaussian(c.read_duration, 1.0, delay),
        ReadShape::Square => PulseShapeSpec::square(c.read_duration, 1.0, delay),
    };
    scaled_to_area(&make_pulse(&spec, &grid)?, area)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemoryRun {
    pub write: ComplexEnvelope,
    pub read: ComplexEnvelope,
    pub storage: StorageResult,
    pub retrieval: RetrievalResult,
    pub shaping: Option<ControlSolution>,
    pub eta_w: f64,
    pub eta_r: f64,
    pub eta_t: f64,
}

/// Store the configured input and retrieve it.
pub fn run_memory(
    cfg: &RunConfig,
    mode: ControlMode,
    write_area: f64,
    read_shape: ReadShape,
    read_area: f64,
) -> Result<MemoryRun> {
    let input = input_envelope(cfg)?;
    let (write, shaping) = write_control(cfg, mode, write_area)?;
    let storage = propagate_storage(&cfg.memory, &write, &input)?;
    let read = read_control(cfg, read_shape, read_area)?;
    let retrieval = propagate_retrieval(&cfg.memory, &read, &storage.spin_wave)?;
    let (eta_w, eta_r) = (storage.eta_w, retrieval.eta_r);
    Ok(MemoryRun {
        write,
        read,
        storage,
        retrieval,
        shaping,
        eta_w,
        eta_r,
        eta_t: eta_w * eta_r,
    })
}

/// Drive area at which the optimal storage efficiency reaches `target`.
///
/// The optimum over control shapes depends on the control only through its
/// area, so the dominant singular value of the square-control map is used.
pub fn drive_area_for_efficiency(memory: &MemoryParams, target: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::param("target", format!("must lie in (0, 1), got {target}")));
    }
    let eff = |h: f64| -> Result<f64> { Ok(optimal_spin_mode(memory, h, 500, 1e-13)?.max_efficiency) };
    let scale = memory.delta_w * memory.delta_w / memory.d;
    let mut lo = 1e-3 * scale;
    let mut hi = scale;
    while eff(lo)? > target {
        lo *= 0.1;
        if lo < 1e-12 * scale {
            return Err(Error::NoCrossing);
        }
    }
    while eff(hi)? < target {
        hi *= 2.0;
        if hi > 1e4 * scale {
            return Err(Error::NoCrossing);
        }
    }
    while hi / lo - 1.0 > 1e-7 {
        let mid = (lo * hi).sqrt();
        if eff(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

/// `κ` such that an optimally shaped write pulse of `power_mw` lasting
/// `duration` ns stores with efficiency `target_eta_w`.
pub fn calibrate_kappa(memory: &MemoryParams, target_eta_w: f64, power_mw: f64, duration: f64) -> Result<f64> {
    if !(power_mw > 0.0) || !(duration > 0.0) {
        return Err(Error::param("power_mw", "power and duration must be > 0"));
    }
    Ok(drive_area_for_efficiency(memory, target_eta_w)? / (power_mw * duration))
}

/// Write energy in nJ above which optimal storage exceeds `threshold`.
pub fn saturation_energy_nj(cfg: &RunConfig, threshold: f64) -> Result<f64> {
    let h = drive_area_for_efficiency(&cfg.memory, threshold)?;
    Ok(h / cfg.control.drive_area_from_energy(1.0))
}

/// Storage time at which `eta_t0·e^{−τ/τ_c}` falls to one half, and its ratio
/// to the pulse duration.
pub fn delay_bandwidth_product(eta_t0: f64, tau_c: f64, pulse_duration: f64) -> Result<(f64, f64)> {
    if !(eta_t0 > 0.5) {
        return Err(Error::EfficiencyBelowHalf);
    }
    if !(tau_c > 0.0) {
        return Err(Error::param("tau_c", "must be > 0"));
    }
    if !(pulse_duration > 0.0) {
        return Err(Error::param("pulse_duration", "must be > 0"));
    }
    let tau_50 = tau_c * (2.0 * eta_t0).ln();
    Ok((tau_50, tau_50 / pulse_duration))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub x: f64,
    pub eta_w: Option<f64>,
    pub eta_r: Option<f64>,
    pub eta_t: Option<f64>,
    pub fidelity: Option<f64>,
    pub aux: BTreeMap<String, f64>,
    pub error: Option<String>,
}

impl SweepRow {
    fn empty(x: f64) -> Self {
        Self {
            x,
            eta_w: None,
            eta_r: None,
            eta_t: None,
            fidelity: None,
            aux: BTreeMap::new(),
            error: None,
        }
    }

    fn failed(x: f64, e: &Error) -> Self {
        Self {
            error: Some(e.to_string()),
            ..Self::empty(x)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub kind: SweepKind,
    /// [`RunConfig::provenance`] of the run.
    pub config: serde_json::Value,
    pub config_hash: String,
    pub seed: u64,
    pub rows: Vec<SweepRow>,
}

fn read_shape_for(cfg: &RunConfig) -> ReadShape {
    match cfg.sweep.control_mode {
        Some(ControlMode::Gaussian) => ReadShape::Gaussian,
        Some(ControlMode::Square) => ReadShape::Square,
        _ => cfg.control.read_shape,
    }
}

fn efficiency_row(x: f64, run: &MemoryRun) -> SweepRow {
    SweepRow {
        eta_w: Some(run.eta_w),
        eta_r: Some(run.eta_r),
        eta_t: Some(run.eta_t),
        ..SweepRow::empty(x)
    }
}

fn sweep_point(cfg: &RunConfig, index: usize, x: f64, stored: Option<&StorageResult>) -> Result<SweepRow> {
    let c = &cfg.control;
    let mode = cfg.sweep.control_mode.unwrap_or(c.mode);
    let coupling = |h: f64, delta: f64| cfg.memory.coupling(h, delta);
    match cfg.sweep.kind {
        SweepKind::WriteEnergy => {
            let h = c.drive_area_from_energy(x);
            let run = run_memory(cfg, mode, h, c.read_shape, c.read_drive_area())?;
            let mut row = efficiency_row(x, &run);
            row.aux.insert("write_drive_area".into(), h);
            row.aux.insert("write_coupling".into(), coupling(h, cfg.memory.delta_w));
            Ok(row)
        }
        SweepKind::ReadEnergy => {
            let storage = stored.expect("read sweeps share one storage run");
            let h = c.drive_area_from_energy(x);
            let read = read_control(cfg, read_shape_for(cfg), h)?;
            let retrieval = propagate_retrieval(&cfg.memory, &read, &storage.spin_wave)?;
            let mut row = SweepRow {
                eta_w: Some(storage.eta_w),
                eta_r: Some(retrieval.eta_r),
                eta_t: Some(storage.eta_w * retrieval.eta_r),
                ..SweepRow::empty(x)
            };
            row.aux.insert("read_drive_area".into(), h);
            row.aux.insert("read_coupling".into(), coupling(h, cfg.memory.delta_r));
            Ok(row)
        }
        SweepKind::DrivePower => {
            let hw = c.drive_area(x, c.write_duration);
            let hr = c.drive_area(x, c.read_duration);
            let run = run_memory(cfg, mode, hw, c.read_shape, hr)?;
            let mut row = efficiency_row(x, &run);
            row.aux.insert("write_drive_area".into(), hw);
            row.aux.insert("read_drive_area".into(), hr);
            Ok(row)
        }
        SweepKind::FidelityVsNbar => {
            let eta = cfg.channel.eta_eff();
            let mut row = SweepRow {
                eta_t: Some(eta),
                fidelity: Some(fidelity_closed_form(x, eta)),
                ..SweepRow::empty(x)
            };
            let rho = coherent_state(Complex64::new(x.sqrt(), 0.0), default_n_max(x))?;
            let out = apply_memory_channel(&rho, &cfg.channel)?;
            row.aux.insert("uhlmann".into(), uhlmann_fidelity(&rho, &out)?);
            if cfg.sweep.tomography_samples > 0 {
                let ml = cfg.tomography.ml.unwrap_or_else(|| MLConfig::for_mean_photons(x));
                let seed = derive_seed(cfg.seed, index as u64);
                let p = reconstruct_fidelity_pipeline(&rho, &cfg.channel, cfg.sweep.tomography_samples, &ml, seed)?;
                row.aux.insert("tomography".into(), p.fidelity);
            }
            Ok(row)
        }
        SweepKind::DelayScan => {
            let input = input_envelope(cfg)?;
            let (control, _) = write_control(cfg, mode, c.write_drive_area())?;
            let r = delayed_control_experiment(&cfg.memory, &input, &control, x)?;
            let mut row = SweepRow {
                eta_w: Some(1.0 - r.leak_delayed.norm_sqr() / input.norm_sqr()),
                ..SweepRow::empty(x)
            };
            row.aux.insert("leak_energy_ratio".into(), r.leak_energy_ratio);
            row.aux.insert("shift_steps".into(), r.shift_steps as f64);
            Ok(row)
        }
    }
}

/// Run the sweep described by `cfg.sweep`. A failing point is recorded in its
/// row and the sweep continues.
pub fn run_sweep(cfg: &RunConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let stored = if cfg.sweep.kind == SweepKind::ReadEnergy {
        let mode = cfg
            .sweep
            .control_mode
            .filter(|m| *m == ControlMode::Optimal)
            .unwrap_or(cfg.control.mode);
        let (write, _) = write_control(cfg, mode, cfg.control.write_drive_area())?;
        Some(propagate_storage(&cfg.memory, &write, &input_envelope(cfg)?)?)
    } else {
        None
    };
    let rows = cfg
        .sweep
        .points
        .par_iter()
        .enumerate()
        .map(|(i, &x)| {
            sweep_point(cfg, i, x, stored.as_ref()).unwrap_or_else(|e| {
                log::warn!("sweep point {x}: {e}");
                SweepRow::failed(x, &e)
            })
        })
        .collect();
    Ok(SweepResult {
        kind: cfg.sweep.kind,
        config: cfg.provenance(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        rows,
    })
}

impl SweepResult {
    /// Aux column names across all rows.
    pub fn aux_columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = self.rows.iter().flat_map(|r| r.aux.keys().cloned()).collect();
        cols.sort();
        cols.dedup();
        cols
    }

    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "# kind={}", self.kind.name())?;
        writeln!(writer, "# config_hash={}", self.config_hash)?;
        writeln!(writer, "# seed={}", self.seed)?;
        let aux = self.aux_columns();
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = ["x", "eta_w", "eta_r", "eta_t", "fidelity"].map(String::from).to_vec();
        header.extend(aux.iter().cloned());
        header.push("error".into());
        w.write_record(&header)?;
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        for r in &self.rows {
            let mut rec = vec![fmt_f64(r.x), opt(r.eta_w), opt(r.eta_r), opt(r.eta_t), opt(r.fidelity)];
            rec.extend(aux.iter().map(|k| opt(r.aux.get(k).copied())));
            rec.push(r.error.clone().unwrap_or_default());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Write `<kind>_<hash>.csv` and `<kind>_<hash>.json` into `dir`.
    pub fn write_files(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let stem = format!("{}_{}", self.kind.name(), &self.config_hash[..12]);
        let csv_path = dir.join(format!("{stem}.csv"));
        let json_path = dir.join(format!("{stem}.json"));
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(&csv_path)?))?;
        std::fs::write(&json_path, serde_json::to_string_pretty(self)?)?;
        Ok((csv_path, json_path))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportEntry {
    pub name: String,
    pub unit: String,
    /// Published value, where one exists.
    pub published: Option<f64>,
    pub simulated: f64,
    /// `simulated / published`.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeadlineReport {
    pub config_hash: String,
    pub seed: u64,
    pub entries: Vec<ReportEntry>,
}

impl HeadlineReport {
    pub fn get(&self, name: &str) -> Option<&ReportEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Published figures of merit of the reference memory.
pub mod published {
    pub const ETA_W: f64 = 0.84;
    pub const ETA_R: f64 = 0.985;
    pub const ETA_T: f64 = 0.826;
    pub const FIDELITY_LOW: f64 = 0.98;
    pub const N_BAR_LOW: f64 = 0.76;
    pub const FIDELITY_HIGH: f64 = 0.915;
    pub const N_BAR_HIGH: f64 = 4.2;
    pub const DELAY_BANDWIDTH: f64 = 52.0;
    pub const INPUT_FWHM_NS: f64 = 10.0;
    pub const RETRIEVED_FWHM_NS: f64 = 13.0;
    pub const INPUT_BANDWIDTH_GHZ: f64 = 0.100;
    pub const RETRIEVED_BANDWIDTH_GHZ: f64 = 0.077;
    pub const NO_CLONING_PHOTONS: f64 = 49.0;
}

fn entry(name: &str, unit: &str, published: Option<f64>, simulated: f64) -> ReportEntry {
    ReportEntry {
        name: name.into(),
        unit: unit.into(),
        published,
        simulated,
        ratio: published.map(|p| simulated / p),
    }
}

/// Efficiencies, reconstructed fidelities, delay-bandwidth product and pulse
/// widths of the configured memory next to the published values.
pub fn headline_report(cfg: &RunConfig) -> Result<HeadlineReport> {
    use published as p;
    cfg.validate()?;
    let c = &cfg.control;
    let run = run_memory(cfg, c.mode, c.write_drive_area(), c.read_shape, c.read_drive_area())?;
    let input = input_envelope(cfg)?;

    let fidelity = |n_bar: f64, stream: u64| -> Result<f64> {
        let rho = coherent_state(Complex64::new(n_bar.sqrt(), 0.0), default_n_max(n_bar))?;
        let ml = cfg.tomography.ml.unwrap_or_else(|| MLConfig::for_mean_photons(n_bar));
        let seed = derive_seed(cfg.seed, stream);
        Ok(reconstruct_fidelity_pipeline(&rho, &cfg.channel, cfg.tomography.n_samples, &ml, seed)?.fidelity)
    };
    let (f_low, f_high) = rayon::join(|| fidelity(p::N_BAR_LOW, 0), || fidelity(p::N_BAR_HIGH, 1));
    let channel = ChannelParams {
        tau: 0.0,
        ..cfg.channel
    };
    let (tau_50, dbp) = delay_bandwidth_product(channel.eta_t, channel.tau_c, cfg.input.duration)?;

    let entries = vec![
        entry("eta_w", "", Some(p::ETA_W), run.eta_w),
        entry("eta_r", "", Some(p::ETA_R), run.eta_r),
        entry("eta_t", "", Some(p::ETA_T), run.eta_t),
        entry("fidelity_nbar_0.76", "", Some(p::FIDELITY_LOW), f_low?),
        entry("fidelity_nbar_4.2", "", Some(p::FIDELITY_HIGH), f_high?),
        entry(
            "fidelity_closed_form_nbar_0.76",
            "",
            None,
            fidelity_closed_form(p::N_BAR_LOW, channel.eta_t),
        ),
        entry(
            "fidelity_closed_form_nbar_4.2",
            "",
            None,
            fidelity_closed_form(p::N_BAR_HIGH, channel.eta_t),
        ),
        entry("tau_50", "ns", None, tau_50),
        entry("delay_bandwidth_product", "", Some(p::DELAY_BANDWIDTH), dbp),
        entry("input_fwhm", "ns", Some(p::INPUT_FWHM_NS), fwhm(&input)?),
        entry(
            "retrieved_fwhm",
            "ns",
            Some(p::RETRIEVED_FWHM_NS),
            fwhm(&run.retrieval.output)?,
        ),
        entry(
            "input_bandwidth",
            "GHz",
            Some(p::INPUT_BANDWIDTH_GHZ),
            bandwidth_estimate(&input)?,
        ),
        entry(
            "retrieved_bandwidth",
            "GHz",
            Some(p::RETRIEVED_BANDWIDTH_GHZ),
            bandwidth_estimate(&run.retrieval.output)?,
        ),
    ];
    Ok(HeadlineReport {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{SweepConfig, REFERENCE_KAPPA};

    fn small() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.memory.nz = 100;
        cfg.memory.nt = 150;
        cfg.control.read_nt = 300;
        cfg
    }

    #[test]
    fn dbp_examples() {
        let (tau, dbp) = delay_bandwidth_product(0.826, 1100.0, 10.0).unwrap();
        assert!((tau - 1100.0 * (1.652f64).ln()).abs() < 1e-9);
        assert!((dbp - 55.2).abs() < 0.1, "{dbp}");
        let (_, dbp) = delay_bandwidth_product(1.0, 7.0, 7.0).unwrap();
        assert!((dbp - std::f64::consts::LN_2).abs() < 1e-15);
        let (tau, _) = delay_bandwidth_product(0.5 + 1e-12, 1100.0, 10.0).unwrap();
        assert!(tau < 1e-8);
        assert!(matches!(
            delay_bandwidth_product(0.5, 1100.0, 10.0),
            Err(Error::EfficiencyBelowHalf)
        ));
    }

    #[test]
    fn reference_kappa_matches_calibration() {
        let kappa = calibrate_kappa(&MemoryParams::default(), 0.84, 190.0, 10.0).unwrap();
        assert!((kappa / REFERENCE_KAPPA - 1.0).abs() < 1e-3, "{kappa}");
    }

    #[test]
    fn sweep_is_deterministic_and_ordered() {
        let mut cfg = small();
        cfg.sweep = SweepConfig {
            kind: SweepKind::WriteEnergy,
            points: vec![0.5, 2.0, 5.0],
            control_mode: Some(ControlMode::Gaussian),
            tomography_samples: 0,
        };
        let a = run_sweep(&cfg).unwrap();
        let b = run_sweep(&cfg).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.rows.iter().map(|r| r.x).collect::<Vec<_>>(), cfg.sweep.points);
        for r in &a.rows {
            assert!(r.error.is_none());
            assert!(r.eta_w.unwrap() <= 1.0 + 1e-6);
        }
    }

    #[test]
    fn failing_points_do_not_abort_the_sweep() {
        let mut cfg = small();
        cfg.sweep = SweepConfig {
            kind: SweepKind::FidelityVsNbar,
            points: vec![-1.0, 1.0],
            control_mode: None,
            tomography_samples: 0,
        };
        let res = run_sweep(&cfg).unwrap();
        assert!(res.rows[0].error.is_some());
        assert_eq!(
            res.rows[1].fidelity,
            Some(fidelity_closed_form(1.0, cfg.channel.eta_eff()))
        );
    }

    #[test]
    fn csv_has_one_line_per_point() {
        let mut cfg = small();
        cfg.sweep = SweepConfig {
            kind: SweepKind::FidelityVsNbar,
            points: vec![0.76, 4.2],
            control_mode: None,
            tomography_samples: 0,
        };
        let res = run_sweep(&cfg).unwrap();
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains(&res.config_hash));
        let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data.len(), 3);
        assert!(data[0].starts_with("x,eta_w,eta_r,eta_t,fidelity,uhlmann"));
    }

    #[test]
    fn zero_write_area_gives_zero_control() {
        let cfg = small();
        for mode in [ControlMode::Optimal, ControlMode::Gaussian, ControlMode::Square] {
            let (w, _) = write_control(&cfg, mode, 0.0).unwrap();
            assert!(w.is_zero());
        }
    }
}
