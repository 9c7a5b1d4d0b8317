//! Subcommand implementations. Each computes everything first and writes its
//! files only on success; every file carries the run hash and seed.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use raman_core::config::{ControlMode, RunConfig};
use raman_core::experiments::{self, headline_report, run_sweep};
use raman_core::grid_pulse::{energy, ComplexEnvelope};
use raman_core::memory_dynamics::{propagate_retrieval, propagate_storage};
use raman_core::quantum_states::{coherent_state, default_n_max, fidelity_closed_form};
use raman_core::tomography::reconstruct_fidelity_pipeline;
use raman_core::{Complex64, Error, Result};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

/// Output naming and provenance for one command invocation.
struct Output {
    dir: PathBuf,
    stem: String,
    hash: String,
    seed: u64,
}

impl Output {
    /// The run hash is the config hash, extended with the bytes of any input
    /// files so different inputs never share file names.
    fn new(command: &str, cfg: &RunConfig, inputs: &[&[u8]]) -> Self {
        let hash = if inputs.is_empty() {
            cfg.hash()
        } else {
            let mut h = Sha256::new();
            h.update(cfg.hash().as_bytes());
            for bytes in inputs {
                h.update((bytes.len() as u64).to_le_bytes());
                h.update(bytes);
            }
            h.finalize().iter().map(|b| format!("{b:02x}")).collect()
        };
        Self {
            dir: cfg.output_dir.clone(),
            stem: format!("{command}_{}", &hash[..12]),
            hash,
            seed: cfg.seed,
        }
    }

    fn path(&self, suffix: &str, ext: &str) -> PathBuf {
        let name = if suffix.is_empty() {
            format!("{}.{ext}", self.stem)
        } else {
            format!("{}_{suffix}.{ext}", self.stem)
        };
        self.dir.join(name)
    }

    fn comments(&self) -> Vec<String> {
        vec![format!("run_hash={}", self.hash), format!("seed={}", self.seed)]
    }

    fn json(&self, body: Value) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.dir)?;
        let mut doc = json!({ "run_hash": self.hash, "seed": self.seed });
        if let (Value::Object(d), Value::Object(b)) = (&mut doc, body) {
            d.extend(b);
        }
        let path = self.path("", "json");
        std::fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")?;
        Ok(path)
    }

    fn envelope(&self, suffix: &str, env: &ComplexEnvelope) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.dir)?;
        let path = self.path(suffix, "csv");
        env.write_csv(BufWriter::new(File::create(&path)?), &self.comments())?;
        Ok(path)
    }
}

fn read_bytes(path: Option<&Path>) -> Result<Option<Vec<u8>>> {
    path.map(std::fs::read).transpose().map_err(Error::from)
}

fn envelope_from(bytes: &[u8]) -> Result<ComplexEnvelope> {
    ComplexEnvelope::read_csv(bytes)
}

pub fn store(cfg: &RunConfig, input: Option<&Path>, control: Option<&Path>) -> Result<Vec<PathBuf>> {
    let input_bytes = read_bytes(input)?;
    let control_bytes = read_bytes(control)?;
    let input_env = match &input_bytes {
        Some(b) => envelope_from(b)?,
        None => experiments::input_envelope(cfg)?,
    };
    let write = match &control_bytes {
        Some(b) => envelope_from(b)?,
        None => experiments::write_control(cfg, cfg.control.mode, cfg.control.write_drive_area())?.0,
    };
    let res = propagate_storage(&cfg.memory, &write, &input_env)?;

    let inputs: Vec<&[u8]> = [&input_bytes, &control_bytes]
        .into_iter()
        .flatten()
        .map(Vec::as_slice)
        .collect();
    let out = Output::new("store", cfg, &inputs);
    let summary = json!({
        "config": cfg.provenance(),
        "eta_w": res.eta_w,
        "norm_defect": res.norm_defect,
        "adiabaticity_strained": res.adiabaticity_strained,
        "input_energy": energy(&input_env),
        "write_drive_area": energy(&write),
        "result": res,
    });
    Ok(vec![
        out.json(summary)?,
        out.envelope("spin_wave", &res.spin_wave)?,
        out.envelope("leak", &res.leak)?,
        out.envelope("write", &write)?,
    ])
}

pub fn retrieve(cfg: &RunConfig, spin: Option<&Path>, read: Option<&Path>) -> Result<Vec<PathBuf>> {
    let spin_bytes = read_bytes(spin)?;
    let read_bytes_ = read_bytes(read)?;
    let spin_env = match &spin_bytes {
        Some(b) => envelope_from(b)?,
        None => {
            let input = experiments::input_envelope(cfg)?;
            let (write, _) = experiments::write_control(cfg, cfg.control.mode, cfg.control.write_drive_area())?;
            propagate_storage(&cfg.memory, &write, &input)?.spin_wave
        }
    };
    let read_env = match &read_bytes_ {
        Some(b) => envelope_from(b)?,
        None => experiments::read_control(cfg, cfg.control.read_shape, cfg.control.read_drive_area())?,
    };
    let res = propagate_retrieval(&cfg.memory, &read_env, &spin_env)?;

    let inputs: Vec<&[u8]> = [&spin_bytes, &read_bytes_]
        .into_iter()
        .flatten()
        .map(Vec::as_slice)
        .collect();
    let out = Output::new("retrieve", cfg, &inputs);
    let summary = json!({
        "config": cfg.provenance(),
        "eta_r": res.eta_r,
        "norm_defect": res.norm_defect,
        "adiabaticity_strained": res.adiabaticity_strained,
        "spin_energy": spin_env.norm_sqr(),
        "read_drive_area": energy(&read_env),
        "result": res,
    });
    Ok(vec![
        out.json(summary)?,
        out.envelope("output", &res.output)?,
        out.envelope("residual_spin", &res.residual_spin)?,
    ])
}

pub fn optimize(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let budget = cfg.control.write_drive_area();
    let (control, sol) = experiments::write_control(cfg, ControlMode::Optimal, budget)?;
    let sol = sol.expect("optimal mode returns the shaping result");
    let (gaussian, _) = experiments::write_control(cfg, ControlMode::Gaussian, budget)?;
    let input = experiments::input_envelope(cfg)?;
    let gaussian_eta = propagate_storage(&cfg.memory, &gaussian, &input)?.eta_w;

    let out = Output::new("optimize", cfg, &[]);
    let summary = json!({
        "config": cfg.provenance(),
        "energy_budget": budget,
        "write_energy_nj": cfg.control.write_power_mw * cfg.control.write_duration / 1000.0,
        "achieved_eta_w": sol.achieved_eta_w,
        "gaussian_eta_w": gaussian_eta,
        "iterations": sol.iterations,
        "converged": sol.converged,
        "objective_history": sol.objective_history,
    });
    Ok(vec![out.json(summary)?, out.envelope("control", &control)?])
}

pub fn sweep(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let res = run_sweep(cfg)?;
    let (csv, json) = res.write_files(&cfg.output_dir)?;
    Ok(vec![csv, json])
}

pub fn tomo(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let t = &cfg.tomography;
    let rho = coherent_state(Complex64::new(t.n_bar.sqrt(), 0.0), default_n_max(t.n_bar))?;
    let res = reconstruct_fidelity_pipeline(&rho, &cfg.channel, t.n_samples, &t.ml_config(), cfg.seed)?;
    let out = Output::new("tomo", cfg, &[]);
    let summary = json!({
        "config": cfg.provenance(),
        "n_bar": t.n_bar,
        "n_samples": t.n_samples,
        "fidelity": res.fidelity,
        "fidelity_closed_form": fidelity_closed_form(t.n_bar, cfg.channel.eta_eff()),
        "input_fit": res.input_fit,
        "output_fit": res.output_fit,
        "rho_in_hat": res.rho_in_hat,
        "rho_out_hat": res.rho_out_hat,
    });
    Ok(vec![out.json(summary)?])
}

pub fn report(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let rep = headline_report(cfg)?;
    let out = Output::new("report", cfg, &[]);
    let summary = json!({ "config": cfg.provenance(), "report": rep });
    Ok(vec![out.json(summary)?])
}
