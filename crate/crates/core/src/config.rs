//! Run configuration shared by the experiments and the command-line tool.
//!
//! A configuration is one JSON document with a block per module. Every field
//! has a default at the reference operating point (d = 1100, Δ = 3 GHz, a
//! 10-ns near-square signal in a 30-ns write window, τ_c = 1.1 μs), so an
//! empty document is valid. Individual keys can be overridden by dotted path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid_pulse::{make_pulse, PulseShapeSpec};
use crate::memory_dynamics::MemoryParams;
use crate::optimal_control::ShapeOptions;
use crate::quantum_states::ChannelParams;
use crate::tomography::MLConfig;

/// Control-power calibration `|Ω|² = κ·P` in GHz² per mW, fitted so that a
/// 190 mW, 10-ns optimally shaped write pulse stores 84% at the reference
/// point. `experiments::calibrate_kappa` reproduces it.
pub const REFERENCE_KAPPA: f64 = 8.0703e-6;

/// Energy conversion: 1 nJ = 1000 mW·ns.
pub const MW_NS_PER_NJ: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    /// Write pulse shaped for the configured input.
    Optimal,
    Gaussian,
    Square,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadShape {
    Gaussian,
    Square,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlConfig {
    pub mode: ControlMode,
    /// GHz² per mW.
    pub kappa: f64,
    pub write_power_mw: f64,
    /// Length of the write pulse in ns (FWHM for Gaussian controls); with the
    /// power it fixes the write energy.
    pub write_duration: f64,
    pub read_shape: ReadShape,
    pub read_power_mw: f64,
    pub read_duration: f64,
    /// Read window in ns; the read pulse is centred in it.
    pub read_window: f64,
    pub read_nt: usize,
    pub shaping: ShapeOptions,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            mode: ControlMode::Optimal,
            kappa: REFERENCE_KAPPA,
            write_power_mw: 190.0,
            write_duration: 10.0,
            read_shape: ReadShape::Gaussian,
            read_power_mw: 30_000.0,
            read_duration: 30.0,
            read_window: 90.0,
            read_nt: 1800,
            shaping: ShapeOptions::default(),
        }
    }
}

impl ControlConfig {
    /// Drive area `∫|Ω|²dt` of a pulse of `power_mw` lasting `duration` ns.
    pub fn drive_area(&self, power_mw: f64, duration: f64) -> f64 {
        self.kappa * power_mw * duration
    }

    /// Drive area of a pulse carrying `energy_nj`.
    pub fn drive_area_from_energy(&self, energy_nj: f64) -> f64 {
        self.kappa * energy_nj * MW_NS_PER_NJ
    }

    pub fn write_drive_area(&self) -> f64 {
        self.drive_area(self.write_power_mw, self.write_duration)
    }

    pub fn read_drive_area(&self) -> f64 {
        self.drive_area(self.read_power_mw, self.read_duration)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("kappa", self.kappa),
            ("write_duration", self.write_duration),
            ("read_duration", self.read_duration),
            ("read_window", self.read_window),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(name, format!("must be > 0, got {v}")));
            }
        }
        for (name, v) in [
            ("write_power_mw", self.write_power_mw),
            ("read_power_mw", self.read_power_mw),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::param(name, format!("must be >= 0, got {v}")));
            }
        }
        if self.read_duration > self.read_window {
            return Err(Error::param("read_duration", "must fit inside read_window"));
        }
        if self.read_nt < 16 {
            return Err(Error::param("read_nt", format!("must be >= 16, got {}", self.read_nt)));
        }
        self.shaping.validate().map_err(|e| e.in_section("shaping"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TomographyConfig {
    /// Mean photon number of the coherent probe.
    pub n_bar: f64,
    pub n_samples: usize,
    /// Reconstruction settings; derived from `n_bar` when absent.
    pub ml: Option<MLConfig>,
}

impl Default for TomographyConfig {
    fn default() -> Self {
        Self {
            n_bar: 0.76,
            n_samples: 100_000,
            ml: None,
        }
    }
}

impl TomographyConfig {
    pub fn ml_config(&self) -> MLConfig {
        self.ml.unwrap_or_else(|| MLConfig::for_mean_photons(self.n_bar))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n_bar >= 0.0) || !self.n_bar.is_finite() {
            return Err(Error::param("n_bar", format!("must be >= 0, got {}", self.n_bar)));
        }
        if self.n_samples == 0 {
            return Err(Error::param("n_samples", "must be >= 1"));
        }
        if let Some(ml) = &self.ml {
            ml.validate().map_err(|e| e.in_section("ml"))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    /// Write pulse energy in nJ.
    WriteEnergy,
    /// Read pulse energy in nJ.
    ReadEnergy,
    /// Power in mW of both write and read pulses.
    DrivePower,
    /// Mean photon number of the coherent input.
    FidelityVsNbar,
    /// Control delay in ns.
    DelayScan,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::WriteEnergy => "write_energy",
            SweepKind::ReadEnergy => "read_energy",
            SweepKind::DrivePower => "drive_power",
            SweepKind::FidelityVsNbar => "fidelity_vs_nbar",
            SweepKind::DelayScan => "delay_scan",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub kind: SweepKind,
    pub points: Vec<f64>,
    /// Overrides `control.mode` (or, for read sweeps, selects the read shape).
    pub control_mode: Option<ControlMode>,
    /// Homodyne samples per reconstruction in fidelity sweeps; 0 skips
    /// tomography.
    pub tomography_samples: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            kind: SweepKind::WriteEnergy,
            points: vec![0.5, 1.0, 1.5, 2.0, 3.0, 4.5, 6.0, 8.0],
            control_mode: None,
            tomography_samples: 0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 2 {
            return Err(Error::param("points", "need at least 2 points"));
        }
        if self.points.iter().any(|p| !p.is_finite()) {
            return Err(Error::param("points", "must be finite"));
        }
        if self.points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("points", "must be strictly increasing"));
        }
        Ok(())
    }
}

fn default_input() -> PulseShapeSpec {
    PulseShapeSpec::square(10.0, 1.0, 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub memory: MemoryParams,
    /// Signal pulse on the write window.
    pub input: PulseShapeSpec,
    pub control: ControlConfig,
    pub channel: ChannelParams,
    pub tomography: TomographyConfig,
    pub sweep: SweepConfig,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            memory: MemoryParams::default(),
            input: default_input(),
            control: ControlConfig::default(),
            channel: ChannelParams::default(),
            tomography: TomographyConfig::default(),
            sweep: SweepConfig::default(),
            seed: 0,
            output_dir: PathBuf::from("results"),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.memory.validate().map_err(|e| e.in_section("memory"))?;
        let grid = self.memory.time_grid().map_err(|e| e.in_section("memory"))?;
        make_pulse(&self.input, &grid).map_err(|e| match e {
            Error::PulseTruncated { .. } => Error::param("input", e.to_string()),
            other => other.in_section("input"),
        })?;
        self.control.validate().map_err(|e| e.in_section("control"))?;
        self.channel.validate().map_err(|e| e.in_section("channel"))?;
        self.tomography.validate().map_err(|e| e.in_section("tomography"))?;
        self.sweep.validate().map_err(|e| e.in_section("sweep"))?;
        Ok(())
    }

    /// JSON form without `output_dir`, which never affects results. Output
    /// files echo this so reruns elsewhere are byte-identical.
    pub fn provenance(&self) -> Value {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(map) = &mut value {
            map.remove("output_dir");
        }
        value
    }

    /// SHA-256 of [`RunConfig::provenance`].
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.provenance()).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// First 12 hex digits of [`RunConfig::hash`], used in file names.
    pub fn short_hash(&self) -> String {
        self.hash()[..12].to_string()
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::from_value(serde_json::from_str(text)?)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load a configuration, layering in order: defaults, the optional file,
    /// environment overrides (`PREFIX` + `SECTION__KEY`), then explicit
    /// `key=value` overrides with dotted keys.
    pub fn load(
        file: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
        env_prefix: &str,
        overrides: &[(String, String)],
    ) -> Result<Self> {
        let mut value = serde_json::to_value(RunConfig::default())?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)?;
            let file_value: Value = serde_json::from_str(&text)?;
            if !file_value.is_object() {
                return Err(Error::Parse("config must be a JSON object".into()));
            }
            merge(&mut value, file_value);
        }
        let mut env_pairs: Vec<(String, String)> = env
            .into_iter()
            .filter_map(|(k, v)| {
                k.strip_prefix(env_prefix)
                    .map(|rest| (rest.to_ascii_lowercase().replace("__", "."), v))
            })
            .collect();
        env_pairs.sort();
        for (key, raw) in env_pairs.iter().chain(overrides) {
            set_path(&mut value, key, raw)?;
        }
        Self::from_value(value)
    }
}

/// Deep merge of `patch` into `base`. A tagged object whose `kind` differs from
/// the base replaces it wholesale, so switching pulse kinds does not inherit
/// fields of the old kind.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            let kind_changed = matches!((b.get("kind"), p.get("kind")), (Some(x), Some(y)) if x != y);
            if kind_changed {
                *b = p;
                return;
            }
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, p) => *slot = p,
    }
}

/// Set `dotted.key` to `raw`, parsed as JSON when possible and as a string
/// otherwise.
fn set_path(root: &mut Value, key: &str, raw: &str) -> Result<()> {
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Parse(format!("malformed override key `{key}`")));
    }
    let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        if !node.is_object() {
            *node = Value::Object(Map::new());
        }
        node = node
            .as_object_mut()
            .unwrap()
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    if !node.is_object() {
        *node = Value::Object(Map::new());
    }
    let last = parts[parts.len() - 1];
    let obj = node.as_object_mut().unwrap();
    match obj.get_mut(last) {
        Some(slot) if parsed.is_object() => merge(slot, parsed),
        _ => {
            obj.insert(last.to_string(), parsed);
        }
    }
    Ok(())
}
