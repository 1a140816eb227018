//! Scenario configuration, presets and the run driver behind the CLI.
//!
//! Configuration files are TOML with the sections `physics`, `grid`,
//! `pulse`, `initial`, `propagation` and `output`; every length, time, field
//! and energy is in atomic units. A top-level `preset = "name"` starts from a
//! preset and lets the remaining keys override it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::Value;

use crate::error::{Error, Result};
use crate::grids::{AxisLabel, Grid1D, ProductGrid};
use crate::laser::{LaserPulse, SpatialEnvelope};
use crate::observables::{
    write_density_csv, CsvSink, FluxAccumulators, Marginals, Observer, Partition, RunRecord, RUN_CSV_HEADER,
};
use crate::potentials::{PhysicalParams, PotentialKind};
use crate::propagator::{CapField, CapSpec, PropagationSettings, Propagator, StepObserver, SystemHamiltonian};
use crate::state::{relax_imaginary_time, seed_initial, InitialKind, InitialStateSpec, Wavefunction};
use crate::units;

pub const CONFIG_FILE: &str = "config.toml";
pub const RUN_CSV: &str = "run.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const ERROR_FILE: &str = "error.json";
pub const INITIAL_STATE: &str = "initial_state.hhwf";
pub const FINAL_STATE: &str = "final_state.hhwf";
pub const CHECKPOINT_STATE: &str = "checkpoint.hhwf";
pub const CHECKPOINT_CSV: &str = "checkpoint.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub preset: String,
    pub physics: PhysicsSection,
    pub grid: GridSection,
    pub pulse: PulseSection,
    pub initial: InitialSection,
    pub propagation: PropagationSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsSection {
    pub proton_mass: f64,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    /// Clamp `R` at `r_frozen` and drop the `R` axis.
    pub frozen_r: bool,
    pub r_frozen: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub n_r: usize,
    pub z_min: f64,
    pub z_max: f64,
    pub n_z: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvelopeKind {
    Gaussian,
    Narrow,
    Uniform,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseSection {
    pub e0: f64,
    pub omega: f64,
    /// Pulse duration `t_p` (a.u.).
    pub duration: f64,
    pub cep: f64,
    pub envelope: EnvelopeKind,
    /// Gaussian focal width and centre.
    pub lambda: f64,
    pub z0: f64,
    /// Narrow envelope support.
    pub z_a: f64,
    pub z_b: f64,
    pub mask_e1: bool,
    pub mask_e2: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelaxChoice {
    /// Reduced for the direct product, full for the singlet.
    Auto,
    Full,
    ReducedNoninteracting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSection {
    pub kind: InitialKind,
    pub r0: f64,
    pub sigma_r: f64,
    pub z_a: f64,
    pub z_b: f64,
    pub dtau: f64,
    pub tolerance: f64,
    pub max_steps: usize,
    pub relax_hamiltonian: RelaxChoice,
    pub freeze_r: bool,
    /// Start from this snapshot instead of relaxing; empty to relax.
    pub from_snapshot: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropagationSection {
    pub dt: f64,
    /// Total propagated time (a.u.).
    pub duration: f64,
    pub output_stride: usize,
    pub detector_z: f64,
    pub cap_z_onset: f64,
    pub cap_z_width: f64,
    pub cap_strength: f64,
    pub cap_order: i32,
    pub cap_r_lower: f64,
    pub cap_r_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: String,
    /// Density snapshot times (a.u.); empty selects `0, t_p, t_p + 2.5 fs, end`.
    pub snapshot_times: Vec<f64>,
    pub write_final_state: bool,
    /// Steps between checkpoints; 0 disables. Must be a multiple of the output stride.
    pub checkpoint_every: usize,
    /// Directory holding a checkpoint to continue from; empty to start fresh.
    pub restart_from: String,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            preset: "none".into(),
            physics: PhysicsSection::default(),
            grid: GridSection::default(),
            pulse: PulseSection::default(),
            initial: InitialSection::default(),
            propagation: PropagationSection::default(),
            output: OutputSection::default(),
        }
    }
}

impl Default for PhysicsSection {
    fn default() -> Self {
        let p = PhysicalParams::default();
        PhysicsSection {
            proton_mass: p.proton_mass,
            alpha: p.alpha,
            beta: p.beta,
        }
    }
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            frozen_r: false,
            r_frozen: 100.0,
            r_min: 75.0,
            r_max: 125.0,
            n_r: 256,
            z_min: -120.0,
            z_max: 120.0,
            n_z: 384,
        }
    }
}

impl Default for PulseSection {
    fn default() -> Self {
        PulseSection {
            e0: 1.0,
            omega: 1.0,
            duration: units::fs_to_au(5.0),
            cep: 0.0,
            envelope: EnvelopeKind::Gaussian,
            lambda: 861.0,
            z0: -1291.5,
            z_a: -60.0,
            z_b: -40.0,
            mask_e1: true,
            mask_e2: true,
        }
    }
}

impl Default for InitialSection {
    fn default() -> Self {
        let s = InitialStateSpec::default();
        InitialSection {
            kind: s.kind,
            r0: s.r0,
            sigma_r: s.sigma_r,
            z_a: s.z_a,
            z_b: s.z_b,
            dtau: s.dtau,
            tolerance: s.tolerance,
            max_steps: s.max_steps,
            relax_hamiltonian: RelaxChoice::Auto,
            freeze_r: s.freeze_r,
            from_snapshot: String::new(),
        }
    }
}

impl Default for PropagationSection {
    fn default() -> Self {
        let s = PropagationSettings::default();
        PropagationSection {
            dt: s.dt,
            duration: s.duration,
            output_stride: s.output_stride,
            detector_z: s.detector_z,
            cap_z_onset: s.cap.z_onset,
            cap_z_width: s.cap.z_width,
            cap_strength: s.cap.strength,
            cap_order: s.cap.order,
            cap_r_lower: s.cap.r_lower,
            cap_r_upper: s.cap.r_upper,
        }
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: "out".into(),
            snapshot_times: Vec::new(),
            write_final_state: true,
            checkpoint_every: 0,
            restart_from: String::new(),
        }
    }
}

struct PresetInfo {
    name: &'static str,
    about: &'static str,
}

const BASE_PRESETS: [PresetInfo; 6] = [
    PresetInfo {
        name: "fig2-gauss",
        about: "direct-product state, Gaussian focus E0 = 1.0 (0.125 / 0.088 at the atoms)",
    },
    PresetInfo {
        name: "fig2-narrow",
        about: "direct-product state, narrow envelope on atom A, E0 = 0.02",
    },
    PresetInfo {
        name: "fig5-gauss-entangled",
        about: "entangled singlet, Gaussian focus E0 = 1.0",
    },
    PresetInfo {
        name: "fig5-narrow-entangled",
        about: "entangled singlet, narrow envelope E0 = 0.02, both electrons driven",
    },
    PresetInfo {
        name: "fig7c-mask-e1",
        about: "entangled singlet, narrow envelope acting on electron 1 only",
    },
    PresetInfo {
        name: "fig7d-mask-e2",
        about: "entangled singlet, narrow envelope acting on electron 2 only",
    },
];

/// Preset names with one-line descriptions, including the `-2d` variants.
pub fn presets() -> Vec<(String, String)> {
    let mut out = Vec::new();
    for p in &BASE_PRESETS {
        out.push((p.name.to_string(), format!("{} (full R, z1, z2)", p.about)));
    }
    for p in &BASE_PRESETS {
        out.push((format!("{}-2d", p.name), format!("{} (frozen R = 100)", p.about)));
    }
    out
}

pub fn preset_names() -> Vec<String> {
    presets().into_iter().map(|(n, _)| n).collect()
}

/// Fully expanded configuration for a preset name.
pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let (base, frozen) = match name.strip_suffix("-2d") {
        Some(b) => (b, true),
        None => (name, false),
    };
    let mut c = ScenarioConfig {
        preset: name.to_string(),
        ..Default::default()
    };
    let narrow = |c: &mut ScenarioConfig| {
        c.pulse.e0 = 0.02;
        c.pulse.envelope = EnvelopeKind::Narrow;
    };
    match base {
        "fig2-gauss" => {}
        "fig2-narrow" => narrow(&mut c),
        "fig5-gauss-entangled" => c.initial.kind = InitialKind::EntangledSinglet,
        "fig5-narrow-entangled" => {
            narrow(&mut c);
            c.initial.kind = InitialKind::EntangledSinglet;
        }
        "fig7c-mask-e1" => {
            narrow(&mut c);
            c.initial.kind = InitialKind::EntangledSinglet;
            c.pulse.mask_e2 = false;
        }
        "fig7d-mask-e2" => {
            narrow(&mut c);
            c.initial.kind = InitialKind::EntangledSinglet;
            c.pulse.mask_e1 = false;
        }
        _ => {
            return Err(Error::config(format!(
                "unknown preset {name:?}; available presets: {}",
                preset_names().join(", ")
            )))
        }
    }
    c.grid.frozen_r = frozen;
    c.output.directory = format!("out/{name}");
    Ok(c)
}

fn to_value(c: &ScenarioConfig) -> Value {
    Value::try_from(c).expect("configuration serializes")
}

fn unknown_keys(user: &toml::Table, reference: &toml::Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in user {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match reference.get(k) {
            None => out.push(path),
            Some(Value::Table(rt)) => match v {
                Value::Table(ut) => unknown_keys(ut, rt, &path, out),
                _ => out.push(format!("{path} (expected a section)")),
            },
            Some(_) => {}
        }
    }
}

fn overlay(base: &mut toml::Table, user: &toml::Table) {
    for (k, v) in user {
        match (base.get_mut(k), v) {
            (Some(Value::Table(b)), Value::Table(u)) => overlay(b, u),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// Command-line overrides applied after the file and before expansion.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub directory: Option<String>,
    pub frozen_r: bool,
    pub duration: Option<f64>,
}

/// Parses configuration text, applying a preset (from `preset_override` or
/// the file's `preset` key) before the file's own keys. Returns a validated,
/// fully expanded configuration.
pub fn parse_config(text: &str, preset_override: Option<&str>) -> Result<ScenarioConfig> {
    parse_config_with(text, preset_override, &Overrides::default())
}

pub fn parse_config_with(text: &str, preset_override: Option<&str>, ov: &Overrides) -> Result<ScenarioConfig> {
    let user: toml::Table = text
        .parse::<toml::Table>()
        .map_err(|e| Error::config(format!("cannot parse configuration: {e}")))?;
    let reference = match to_value(&ScenarioConfig::default()) {
        Value::Table(t) => t,
        _ => unreachable!(),
    };
    let mut unknown = Vec::new();
    unknown_keys(&user, &reference, "", &mut unknown);
    if !unknown.is_empty() {
        return Err(Error::config(format!("unknown configuration keys: {}", unknown.join(", "))));
    }
    let preset_name = match (preset_override, user.get("preset")) {
        (Some(p), _) => Some(p.to_string()),
        (None, Some(Value::String(p))) if p != "none" => Some(p.clone()),
        (None, Some(Value::String(_))) | (None, None) => None,
        (None, Some(other)) => return Err(Error::config(format!("preset must be a string, got {other}"))),
    };
    let base = match &preset_name {
        Some(p) => preset(p)?,
        None => ScenarioConfig::default(),
    };
    let mut merged = match to_value(&base) {
        Value::Table(t) => t,
        _ => unreachable!(),
    };
    overlay(&mut merged, &user);
    if let Some(p) = &preset_name {
        merged.insert("preset".into(), Value::String(p.clone()));
    }
    let mut cfg: ScenarioConfig = Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| Error::config(format!("invalid configuration: {}", e.message())))?;
    if let Some(d) = &ov.directory {
        cfg.output.directory = d.clone();
    }
    if ov.frozen_r {
        cfg.grid.frozen_r = true;
    }
    if let Some(t) = ov.duration {
        cfg.propagation.duration = t;
    }
    cfg.expand();
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path, preset_override: Option<&str>) -> Result<ScenarioConfig> {
    load_config_with(path, preset_override, &Overrides::default())
}

pub fn load_config_with(path: &Path, preset_override: Option<&str>, ov: &Overrides) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_with(&text, preset_override, ov)
}

/// Configuration for a preset alone, validated and expanded.
pub fn preset_config(name: &str) -> Result<ScenarioConfig> {
    parse_config("", Some(name))
}

fn check_range(name: &str, v: f64, lo: f64, hi: f64, lo_open: bool) -> Result<()> {
    let ok = v.is_finite() && (if lo_open { v > lo } else { v >= lo }) && v <= hi;
    if ok {
        Ok(())
    } else {
        let open = if lo_open { "(" } else { "[" };
        Err(Error::config(format!("{name} = {v} is out of range {open}{lo}, {hi}]")))
    }
}

fn check_count(name: &str, v: usize, lo: usize, hi: usize) -> Result<()> {
    if (lo..=hi).contains(&v) {
        Ok(())
    } else {
        Err(Error::config(format!("{name} = {v} is out of range [{lo}, {hi}]")))
    }
}

impl ScenarioConfig {
    /// Fills schedule defaults that depend on other keys.
    pub fn expand(&mut self) {
        if self.output.snapshot_times.is_empty() {
            let tp = self.pulse.duration;
            let end = self.propagation.duration;
            let mut times = vec![0.0, tp, tp + units::fs_to_au(2.5), end];
            times.retain(|t| *t <= end);
            times.sort_by(f64::total_cmp);
            times.dedup();
            self.output.snapshot_times = times;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.physics;
        check_range("physics.proton_mass", p.proton_mass, 1000.0, 1e5, false)?;
        check_range("physics.alpha", p.alpha, 0.0, 10.0, true)?;
        check_range("physics.beta", p.beta, 0.0, 10.0, true)?;

        let g = &self.grid;
        check_count("grid.n_z", g.n_z, 8, 16384)?;
        check_range("grid.z_max", g.z_max, g.z_min, 1e5, true)?;
        if g.frozen_r {
            check_range("grid.r_frozen", g.r_frozen, 0.0, 1e4, true)?;
        } else {
            check_count("grid.n_r", g.n_r, 8, 4096)?;
            check_range("grid.r_min", g.r_min, 0.0, 1e4, true)?;
            check_range("grid.r_max", g.r_max, g.r_min, 1e4, true)?;
        }

        let u = &self.pulse;
        check_range("pulse.e0", u.e0, 0.0, 10.0, false)?;
        check_range("pulse.omega", u.omega, 0.0, 100.0, true)?;
        check_range("pulse.duration", u.duration, 0.0, 1e5, true)?;
        check_range("pulse.cep", u.cep, -10.0, 10.0, false)?;
        self.pulse()?.validate()?;

        let s = &self.initial;
        check_range("initial.sigma_r", s.sigma_r, 0.0, 100.0, true)?;
        check_range("initial.dtau", s.dtau, 0.0, 1.0, true)?;
        check_range("initial.tolerance", s.tolerance, 0.0, 1.0, true)?;
        check_count("initial.max_steps", s.max_steps, 1, 10_000_000)?;

        let q = &self.propagation;
        check_range("propagation.dt", q.dt, 0.0, 1.0, true)?;
        check_range("propagation.duration", q.duration, 0.0, 1e6, false)?;
        check_count("propagation.output_stride", q.output_stride, 1, 1_000_000)?;
        check_range("propagation.cap_strength", q.cap_strength, 0.0, 1e3, false)?;

        let o = &self.output;
        if o.directory.trim().is_empty() {
            return Err(Error::config("output.directory must not be empty"));
        }
        for t in &o.snapshot_times {
            check_range("output.snapshot_times[]", *t, 0.0, q.duration, false)?;
        }
        if o.checkpoint_every % q.output_stride != 0 {
            return Err(Error::config(format!(
                "output.checkpoint_every = {} must be a multiple of propagation.output_stride = {}",
                o.checkpoint_every, q.output_stride
            )));
        }

        // grid-dependent checks without allocating the product state
        let grid = self.product_grid()?;
        self.initial_spec().validate()?;
        for (name, z) in [("initial.z_a", s.z_a), ("initial.z_b", s.z_b)] {
            if !grid.z1().contains(z) {
                return Err(Error::config(format!("{name} = {z} lies outside the electron grid")));
            }
        }
        match grid.r_grid() {
            Some(rg) if !rg.contains(s.r0) => {
                return Err(Error::config(format!("initial.r0 = {} lies outside the R grid", s.r0)))
            }
            None if (s.r0 - g.r_frozen).abs() > 1e-9 * g.r_frozen => {
                return Err(Error::config(format!(
                    "initial.r0 = {} must equal grid.r_frozen = {} in frozen-R mode",
                    s.r0, g.r_frozen
                )))
            }
            _ => {}
        }
        CapField::build(&grid, &self.settings().cap, q.detector_z)?;
        for gz in [grid.z1(), grid.z2()] {
            if !(q.detector_z > 0.0 && gz.contains(q.detector_z) && gz.contains(-q.detector_z)) {
                return Err(Error::config(format!(
                    "propagation.detector_z = {} puts the detectors outside the electron grid",
                    q.detector_z
                )));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> PhysicalParams {
        PhysicalParams {
            proton_mass: self.physics.proton_mass,
            alpha: self.physics.alpha,
            beta: self.physics.beta,
        }
    }

    pub fn product_grid(&self) -> Result<ProductGrid> {
        let g = &self.grid;
        let z1 = Grid1D::equidistant(AxisLabel::Z1, g.z_min, g.z_max, g.n_z)?;
        let z2 = z1.clone().with_label(AxisLabel::Z2);
        if g.frozen_r {
            ProductGrid::frozen(g.r_frozen, z1, z2)
        } else {
            let r = Grid1D::equidistant(AxisLabel::R, g.r_min, g.r_max, g.n_r)?;
            Ok(ProductGrid::new(r, z1, z2))
        }
    }

    pub fn pulse(&self) -> Result<LaserPulse> {
        let u = &self.pulse;
        let envelope = match u.envelope {
            EnvelopeKind::Gaussian => SpatialEnvelope::Gaussian {
                lambda: u.lambda,
                z0: u.z0,
            },
            EnvelopeKind::Narrow => SpatialEnvelope::Narrow { z_a: u.z_a, z_b: u.z_b },
            EnvelopeKind::Uniform => SpatialEnvelope::Uniform,
            EnvelopeKind::Off => SpatialEnvelope::Off,
        };
        let p = LaserPulse {
            e0: u.e0,
            omega: u.omega,
            duration: u.duration,
            cep: u.cep,
            envelope,
            mask: [u.mask_e1, u.mask_e2],
        };
        p.validate()?;
        Ok(p)
    }

    pub fn initial_spec(&self) -> InitialStateSpec {
        let s = &self.initial;
        InitialStateSpec {
            kind: s.kind,
            r0: s.r0,
            sigma_r: s.sigma_r,
            z_a: s.z_a,
            z_b: s.z_b,
            dtau: s.dtau,
            tolerance: s.tolerance,
            max_steps: s.max_steps,
            relax_hamiltonian: match s.relax_hamiltonian {
                RelaxChoice::Auto => None,
                RelaxChoice::Full => Some(PotentialKind::Full),
                RelaxChoice::ReducedNoninteracting => Some(PotentialKind::ReducedNoninteracting),
            },
            freeze_r: s.freeze_r,
        }
    }

    pub fn settings(&self) -> PropagationSettings {
        let q = &self.propagation;
        PropagationSettings {
            dt: q.dt,
            duration: q.duration,
            output_stride: q.output_stride,
            detector_z: q.detector_z,
            cap: CapSpec {
                z_onset: q.cap_z_onset,
                z_width: q.cap_z_width,
                strength: q.cap_strength,
                order: q.cap_order,
                r_lower: q.cap_r_lower,
                r_upper: q.cap_r_upper,
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn output_dir(&self) -> PathBuf {
        PathBuf::from(&self.output.directory)
    }
}

/// Result of preparing the initial state.
#[derive(Debug, Clone)]
pub struct InitialState {
    pub psi: Wavefunction,
    /// `⟨H⟩` of the relaxation Hamiltonian, if relaxed here.
    pub relax_energy: Option<f64>,
    pub relax_steps: usize,
    /// `⟨H_S⟩` of the full Hamiltonian.
    pub full_energy: f64,
}

/// Seeds and relaxes (or loads) the initial state.
pub fn prepare_initial(cfg: &ScenarioConfig) -> Result<InitialState> {
    let grid = cfg.product_grid()?;
    let params = cfg.params();
    let full = SystemHamiltonian::new(&grid, &params, PotentialKind::Full)?;
    if !cfg.initial.from_snapshot.is_empty() {
        let psi = Wavefunction::read_snapshot(Path::new(&cfg.initial.from_snapshot))?;
        if !psi.grid().same_shape(&grid) {
            return Err(Error::config(format!(
                "snapshot {} does not match the configured grid",
                cfg.initial.from_snapshot
            )));
        }
        let full_energy = full.energy(&psi);
        return Ok(InitialState {
            psi,
            relax_energy: None,
            relax_steps: 0,
            full_energy,
        });
    }
    let spec = cfg.initial_spec();
    let seed = seed_initial(&spec, &grid)?;
    let relax = if spec.relax_kind() == PotentialKind::Full {
        full.clone()
    } else {
        SystemHamiltonian::new(&grid, &params, spec.relax_kind())?
    };
    let out = relax_imaginary_time(seed, &spec, &relax)?;
    let full_energy = full.energy(&out.psi);
    Ok(InitialState {
        psi: out.psi,
        relax_energy: Some(out.energy),
        relax_steps: out.steps,
        full_energy,
    })
}

/// Machine-readable summary written next to the run record.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunSummary {
    pub preset: String,
    pub relax_energy: Option<f64>,
    pub relax_steps: usize,
    pub initial_energy: f64,
    pub steps: usize,
    pub final_time: f64,
    pub final_norm_sqr: f64,
    /// Norm² with both electrons between the detector planes.
    pub inside_norm_sqr: f64,
    pub flux: FluxAccumulators,
    /// `inside_norm_sqr + Σ flux`; 1 when every loss is accounted for.
    pub bookkeeping: f64,
    pub detector_positions: [f64; 4],
    pub snapshot_files: Vec<String>,
}

/// Writes `z,P` files for both electrons at the scheduled steps.
struct DensityWriter {
    dir: PathBuf,
    steps: Vec<usize>,
    z1: Vec<f64>,
    z2: Vec<f64>,
    written: Vec<String>,
}

impl StepObserver for DensityWriter {
    fn after_step(&mut self, step: usize, t: f64, psi: &Wavefunction, _record: &RunRecord) -> Result<()> {
        if !self.steps.contains(&step) {
            return Ok(());
        }
        let m = Marginals::new(psi);
        for (which, z) in [(0usize, &self.z1), (1, &self.z2)] {
            let name = format!("density_e{}_t{:010.3}.csv", which + 1, t);
            write_density_csv(&self.dir.join(&name), z, &m.density(psi.grid(), which))?;
            self.written.push(name);
        }
        Ok(())
    }
}

/// Streams new rows of the record to `run.csv`.
struct RowWriter {
    sink: CsvSink,
    written: usize,
}

impl StepObserver for RowWriter {
    fn after_step(&mut self, _step: usize, _t: f64, _psi: &Wavefunction, record: &RunRecord) -> Result<()> {
        for row in &record.rows[self.written..] {
            self.sink.write_row(row)?;
        }
        if record.rows.len() > self.written {
            self.written = record.rows.len();
            self.sink.flush()?;
        }
        Ok(())
    }
}

struct Checkpointer {
    dir: PathBuf,
    every: usize,
}

impl StepObserver for Checkpointer {
    fn after_step(&mut self, step: usize, _t: f64, psi: &Wavefunction, record: &RunRecord) -> Result<()> {
        if self.every == 0 || step == 0 || step % self.every != 0 {
            return Ok(());
        }
        // state first, then the sidecar, each via a temporary file
        let tmp = self.dir.join(format!("{CHECKPOINT_STATE}.tmp"));
        psi.write_snapshot(&tmp)?;
        std::fs::rename(&tmp, self.dir.join(CHECKPOINT_STATE))?;
        let tmp = self.dir.join(format!("{CHECKPOINT_CSV}.tmp"));
        let mut rec = record.clone();
        // the sidecar's last row carries the current time and fluxes
        if let Some(last) = rec.rows.last_mut() {
            last.flux = record.final_flux;
        }
        rec.write_csv(&tmp)?;
        std::fs::rename(&tmp, self.dir.join(CHECKPOINT_CSV))?;
        Ok(())
    }
}

/// Writes `error.json` describing `err` into `dir` (best effort).
pub fn write_error_record(dir: &Path, err: &Error) {
    let rec = serde_json::json!({
        "kind": err.kind(),
        "message": err.to_string(),
        "exit_code": err.exit_code(),
    });
    let _ = std::fs::create_dir_all(dir);
    let _ = std::fs::write(
        dir.join(ERROR_FILE),
        serde_json::to_string_pretty(&rec).unwrap_or_default() + "\n",
    );
}

/// Runs the initial-state stage only and stores the state.
pub fn run_relax(cfg: &ScenarioConfig) -> Result<InitialState> {
    let dir = cfg.output_dir();
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join(CONFIG_FILE), cfg.to_toml())?;
    let init = prepare_initial(cfg)?;
    init.psi.write_snapshot(&dir.join(INITIAL_STATE))?;
    let rec = serde_json::json!({
        "relax_energy": init.relax_energy,
        "relax_steps": init.relax_steps,
        "full_energy": init.full_energy,
        "norm": init.psi.norm(),
    });
    std::fs::write(dir.join("relax.json"), serde_json::to_string_pretty(&rec).unwrap_or_default() + "\n")?;
    Ok(init)
}

/// Runs a full scenario: expanded config, initial state, propagation, outputs.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunSummary> {
    let dir = cfg.output_dir();
    std::fs::create_dir_all(&dir)?;
    let _ = std::fs::remove_file(dir.join(ERROR_FILE));
    std::fs::write(dir.join(CONFIG_FILE), cfg.to_toml())?;

    let grid = cfg.product_grid()?;
    let params = cfg.params();
    let pulse = cfg.pulse()?;
    let settings = cfg.settings();
    let ham = SystemHamiltonian::new(&grid, &params, PotentialKind::Full)?;
    let propagator = Propagator::new(&ham, &pulse, &settings)?;

    let (mut psi, prior, init) = if cfg.output.restart_from.is_empty() {
        let init = prepare_initial(cfg)?;
        (init.psi.clone(), RunRecord::default(), init)
    } else {
        let from = PathBuf::from(&cfg.output.restart_from);
        let psi = Wavefunction::read_snapshot(&from.join(CHECKPOINT_STATE))?;
        if !psi.grid().same_shape(&grid) {
            return Err(Error::config("checkpoint grid does not match the configuration"));
        }
        let prior = RunRecord::from_csv(&std::fs::read_to_string(from.join(CHECKPOINT_CSV))?)?;
        let full_energy = prior.rows.first().map(|r| r.e_total).unwrap_or(f64::NAN);
        let init = InitialState {
            psi: psi.clone(),
            relax_energy: None,
            relax_steps: 0,
            full_energy,
        };
        (psi, prior, init)
    };

    let mut observer = Observer::new(&ham, &psi, Partition::from(cfg.initial.kind))?;
    if let Some(first) = prior.rows.first() {
        observer.set_reference(first.z1_mean, first.z2_mean);
    }

    let dt = settings.dt;
    let mut densities = DensityWriter {
        dir: dir.clone(),
        steps: cfg.output.snapshot_times.iter().map(|t| (t / dt).round() as usize).collect(),
        z1: grid.z1().nodes().to_vec(),
        z2: grid.z2().nodes().to_vec(),
        written: Vec::new(),
    };
    let mut rows = RowWriter {
        sink: CsvSink::create(&dir.join(RUN_CSV))?,
        written: 0,
    };
    let mut checkpoints = Checkpointer {
        dir: dir.clone(),
        every: cfg.output.checkpoint_every,
    };
    let result = {
        let mut hooks: [&mut dyn StepObserver; 3] = [&mut rows, &mut densities, &mut checkpoints];
        propagator.run_from(&mut psi, &mut observer, &mut hooks, prior)
    };
    rows.sink.flush()?;
    let record = result?;

    if cfg.output.write_final_state {
        psi.write_snapshot(&dir.join(FINAL_STATE))?;
    }
    let detectors = propagator.detectors();
    let inside = detectors.inside_norm_sqr(&psi);
    let flux = record.final_flux;
    let summary = RunSummary {
        preset: cfg.preset.clone(),
        relax_energy: init.relax_energy,
        relax_steps: init.relax_steps,
        initial_energy: init.full_energy,
        steps: settings.n_steps(),
        final_time: record.last().map(|r| r.t).unwrap_or(0.0),
        final_norm_sqr: psi.norm_sqr(),
        inside_norm_sqr: inside,
        flux,
        bookkeeping: inside + flux.sum(),
        detector_positions: detectors.positions(),
        snapshot_files: densities.written,
    };
    std::fs::write(
        dir.join(SUMMARY_FILE),
        serde_json::to_string_pretty(&summary).unwrap_or_default() + "\n",
    )?;
    Ok(summary)
}

/// Column names of the run record, in order.
pub fn run_csv_columns() -> Vec<&'static str> {
    RUN_CSV_HEADER.split(',').collect()
}

/// Reads a run record written by [`run_scenario`].
pub fn read_run_csv(path: &Path) -> Result<RunRecord> {
    RunRecord::from_csv(&std::fs::read_to_string(path)?)
}

/// Parsed `key = value` overview of a configuration, for the CLI.
pub fn describe(cfg: &ScenarioConfig) -> BTreeMap<&'static str, String> {
    let mut m = BTreeMap::new();
    let pulse = cfg.pulse().ok();
    m.insert("preset", cfg.preset.clone());
    m.insert("frozen_r", cfg.grid.frozen_r.to_string());
    m.insert("initial", format!("{:?}", cfg.initial.kind));
    if let Some(p) = pulse {
        let (a, b) = p.effective_amplitudes();
        m.insert("E0_A", format!("{a:.4}"));
        m.insert("E0_B", format!("{b:.4}"));
        m.insert("cycles", format!("{:.2}", p.cycle_count()));
        m.insert("intensity_A_W_cm2", format!("{:.3e}", units::intensity_w_cm2(a)));
    }
    m.insert("steps", cfg.settings().n_steps().to_string());
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse_config("", None).unwrap();
        assert_eq!(c.preset, "none");
        let mut d = ScenarioConfig::default();
        d.expand();
        assert_eq!(c, d);
        assert_eq!(c.grid.n_r, 256);
        assert_eq!(c.grid.n_z, 384);
        assert!((c.propagation.dt - 0.021).abs() < 1e-15);
    }

    #[test]
    fn gauss_preset() {
        let c = preset_config("fig2-gauss").unwrap();
        assert_eq!(c.pulse.e0, 1.0);
        assert_eq!(c.pulse.envelope, EnvelopeKind::Gaussian);
        assert_eq!((c.pulse.lambda, c.pulse.z0), (861.0, -1291.5));
        assert_eq!(c.pulse.omega, 1.0);
        assert!((c.pulse.duration - 206.7069).abs() < 1e-3);
        assert_eq!(c.initial.kind, InitialKind::DirectProduct);
        assert!(!c.grid.frozen_r);
    }

    #[test]
    fn narrow_and_mask_presets() {
        let c = preset_config("fig2-narrow").unwrap();
        assert_eq!(c.pulse.e0, 0.02);
        assert_eq!(c.pulse.envelope, EnvelopeKind::Narrow);
        assert_eq!((c.pulse.z_a, c.pulse.z_b), (-60.0, -40.0));
        let c = preset_config("fig5-narrow-entangled").unwrap();
        assert_eq!(c.initial.kind, InitialKind::EntangledSinglet);
        assert!(c.pulse.mask_e1 && c.pulse.mask_e2);
        let c = preset_config("fig7c-mask-e1").unwrap();
        assert_eq!(c.initial.kind, InitialKind::EntangledSinglet);
        assert!(c.pulse.mask_e1 && !c.pulse.mask_e2);
        let c = preset_config("fig7d-mask-e2-2d").unwrap();
        assert!(!c.pulse.mask_e1 && c.pulse.mask_e2);
        assert!(c.grid.frozen_r);
        assert_eq!(c.grid.n_z, 384);
        assert_eq!(presets().len(), 12);
        for name in preset_names() {
            preset_config(&name).unwrap();
        }
    }

    #[test]
    fn unknown_preset_lists_available() {
        match preset_config("fig9") {
            Err(Error::Config(msg)) => {
                assert!(msg.contains("fig2-gauss") && msg.contains("fig7d-mask-e2-2d"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_listed() {
        let text = "colour = 3\n[pulse]\ne0 = 0.1\nomgea = 2.0\n[grid.sub]\nx = 1\n[nonsense]\nq = 1\n";
        match parse_config(text, None) {
            Err(Error::Config(msg)) => {
                assert!(msg.contains("colour"), "{msg}");
                assert!(msg.contains("pulse.omgea"), "{msg}");
                assert!(msg.contains("grid.sub"), "{msg}");
                assert!(msg.contains("nonsense"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn out_of_range_values_report_bounds() {
        match parse_config("[propagation]\ndt = 5.0\n", None) {
            Err(Error::Config(msg)) => assert!(msg.contains("propagation.dt") && msg.contains("(0, 1]"), "{msg}"),
            other => panic!("{other:?}"),
        }
        assert!(parse_config("[grid]\nn_z = 4\n", None).is_err());
        assert!(parse_config("[propagation]\ndetector_z = 100.0\n", None).is_err());
        assert!(parse_config("[pulse]\nenvelope = \"square\"\n", None).is_err());
        assert!(parse_config("[initial]\nkind = \"triplet\"\n", None).is_err());
    }

    #[test]
    fn file_keys_override_the_preset() {
        let c = parse_config("preset = \"fig2-narrow-2d\"\n[pulse]\ne0 = 0.03\n", None).unwrap();
        assert_eq!(c.preset, "fig2-narrow-2d");
        assert_eq!(c.pulse.e0, 0.03);
        assert_eq!(c.pulse.envelope, EnvelopeKind::Narrow);
        assert!(c.grid.frozen_r);
    }

    #[test]
    fn expanded_config_round_trips() {
        for name in preset_names() {
            let c = preset_config(&name).unwrap();
            let back = parse_config(&c.to_toml(), None).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn default_snapshot_schedule() {
        let c = preset_config("fig2-gauss-2d").unwrap();
        let tp = units::fs_to_au(5.0);
        let t = &c.output.snapshot_times;
        assert_eq!(t.len(), 4);
        assert_eq!(t[0], 0.0);
        assert!((t[1] - tp).abs() < 1e-9);
        assert!((t[2] - units::fs_to_au(7.5)).abs() < 1e-9);
        assert!((t[3] - units::fs_to_au(20.0)).abs() < 1e-9);
    }

    #[test]
    fn checkpoint_interval_must_match_stride() {
        assert!(parse_config("[output]\ncheckpoint_every = 15\n", None).is_err());
        assert!(parse_config("[output]\ncheckpoint_every = 20\n", None).is_ok());
    }
}
