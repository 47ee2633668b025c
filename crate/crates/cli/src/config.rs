//! Experiment configuration: presets, the key-value file format and
//! `section.key=value` overrides.
//!
//! Resolution order is preset, then file, then overrides. Every key is
//! optional in the file; unknown keys and keys that do not apply to the
//! selected model are errors.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use qsync::dasim::CavityModelParams;
use qsync::qmlfb::{FeedbackMode, QubitModelParams, ITERS_PER_UNIT_TIME};

use crate::error::{CliError, Result};

/// First and last metadata lines around an embedded configuration.
pub const CONFIG_BEGIN: &str = "# --- config ---";
pub const CONFIG_END: &str = "# --- end config ---";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Fig2,
    Fig4,
    Fig5,
    Fig7,
    Custom,
}

impl Experiment {
    pub const ALL: [Experiment; 5] =
        [Experiment::Fig2, Experiment::Fig4, Experiment::Fig5, Experiment::Fig7, Experiment::Custom];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Fig2 => "fig2",
            Experiment::Fig4 => "fig4",
            Experiment::Fig5 => "fig5",
            Experiment::Fig7 => "fig7",
            Experiment::Custom => "custom",
        }
    }

    fn fixed_model(self) -> Option<ModelKind> {
        match self {
            Experiment::Fig2 | Experiment::Fig7 => Some(ModelKind::Cavity),
            Experiment::Fig4 | Experiment::Fig5 => Some(ModelKind::Qubits),
            Experiment::Custom => None,
        }
    }

    fn fixed_sweep(self) -> Option<SweepKind> {
        match self {
            Experiment::Fig2 | Experiment::Fig5 => Some(SweepKind::None),
            Experiment::Fig4 => Some(SweepKind::MutualInformation),
            Experiment::Fig7 => Some(SweepKind::Fidelity),
            Experiment::Custom => None,
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn parse_choice<T: Copy>(key: &str, value: &str, choices: &[(&str, T)]) -> Result<T> {
    choices.iter().find(|(n, _)| *n == value).map(|(_, v)| *v).ok_or_else(|| {
        let names: Vec<&str> = choices.iter().map(|(n, _)| *n).collect();
        CliError::config(format!("{key} = '{value}' is not one of {}", names.join(", ")))
    })
}

impl FromStr for Experiment {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let choices: Vec<(&str, Experiment)> = Self::ALL.iter().map(|e| (e.name(), *e)).collect();
        parse_choice("experiment", s, &choices)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Cavity,
    Qubits,
}

impl ModelKind {
    fn name(self) -> &'static str {
        match self {
            ModelKind::Cavity => "cavity",
            ModelKind::Qubits => "qubits",
        }
    }

    pub fn time_unit(self) -> &'static str {
        match self {
            ModelKind::Cavity => "kappa",
            ModelKind::Qubits => "gamma",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    None,
    MutualInformation,
    Fidelity,
}

impl SweepKind {
    fn name(self) -> &'static str {
        match self {
            SweepKind::None => "none",
            SweepKind::MutualInformation => "mutual_information",
            SweepKind::Fidelity => "fidelity",
        }
    }
}

/// `points` evenly spaced values from `start` to `stop` inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self.points {
            0 => Vec::new(),
            1 => vec![self.start],
            n => (0..n).map(|k| self.start + (self.stop - self.start) * k as f64 / (n - 1) as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub kind: SweepKind,
    pub delta_a: Grid,
    pub j2: Grid,
    /// Trotter steps per unit of `kappa t`.
    pub n: Vec<usize>,
    pub kappa_t: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackSwitch {
    Off,
    On,
    Both,
}

impl FeedbackSwitch {
    fn name(self) -> &'static str {
        match self {
            FeedbackSwitch::Off => "off",
            FeedbackSwitch::On => "on",
            FeedbackSwitch::Both => "both",
        }
    }

    /// Feedback flags to run, off first.
    pub fn flags(self) -> Vec<bool> {
        match self {
            FeedbackSwitch::Off => vec![false],
            FeedbackSwitch::On => vec![true],
            FeedbackSwitch::Both => vec![false, true],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QubitStateName {
    Plus,
    Minus,
    Excited,
    Ground,
}

impl QubitStateName {
    const CHOICES: [(&'static str, QubitStateName); 4] = [
        ("plus", QubitStateName::Plus),
        ("minus", QubitStateName::Minus),
        ("excited", QubitStateName::Excited),
        ("ground", QubitStateName::Ground),
    ];

    fn name(self) -> &'static str {
        Self::CHOICES.iter().find(|(_, v)| *v == self).map(|(n, _)| *n).expect("listed")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PunishUnitary {
    /// `exp(-i pi sz / 2)` on agent and environment.
    RotateZPi,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackConfig {
    pub enabled: FeedbackSwitch,
    pub mode: FeedbackMode,
    pub seed: u64,
    pub measure: Axis,
    pub reward_reinit: QubitStateName,
    pub punish_reinit: QubitStateName,
    pub punish_unitary: PunishUnitary,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self {
            enabled: FeedbackSwitch::Both,
            mode: FeedbackMode::Averaged,
            seed: 0,
            measure: Axis::X,
            reward_reinit: QubitStateName::Minus,
            punish_reinit: QubitStateName::Plus,
            punish_unitary: PunishUnitary::RotateZPi,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub prefix: String,
}

/// A fully resolved run description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub model: ModelKind,
    pub cavity: CavityModelParams,
    pub qubits: QubitModelParams,
    pub t_total: f64,
    /// Trotter steps (cavity) or protocol iterations (qubits) per unit time.
    pub steps_per_unit: usize,
    pub sweep: SweepConfig,
    pub feedback: FeedbackConfig,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    /// Defaults of an experiment before any file or override is applied.
    /// `custom` needs a model kind.
    pub fn preset(experiment: Experiment, model: ModelKind) -> Self {
        let sweep = SweepConfig {
            kind: experiment.fixed_sweep().unwrap_or(SweepKind::None),
            delta_a: Grid { start: 0.0, stop: 40.0, points: 41 },
            j2: Grid { start: 0.0, stop: 40.0, points: 41 },
            n: vec![1, 2, 5, 10, 20, 50, 100, 150, 200, 300],
            kappa_t: vec![1.0, 50.0],
        };
        let (qubits, t_total) = match (experiment, model) {
            (Experiment::Fig4, _) => (QubitModelParams::fig4(), 3.0),
            (_, ModelKind::Qubits) => (QubitModelParams::fig5(), 5.0),
            (_, ModelKind::Cavity) => (QubitModelParams::fig5(), 20.0),
        };
        Self {
            experiment,
            model,
            cavity: CavityModelParams::fig2(),
            qubits,
            t_total,
            steps_per_unit: ITERS_PER_UNIT_TIME,
            sweep,
            feedback: FeedbackConfig::default(),
            output: OutputConfig { dir: PathBuf::from("."), prefix: experiment.name().to_string() },
        }
    }

    /// Steps for the whole run, `t_total * steps_per_unit` rounded.
    pub fn total_steps(&self) -> usize {
        ((self.t_total * self.steps_per_unit as f64).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CliError::config(msg));
        if !(self.t_total > 0.0 && self.t_total.is_finite()) {
            return bad(format!("model.t_total = {} must be > 0", self.t_total));
        }
        if self.steps_per_unit == 0 {
            return bad("model.steps_per_unit must be >= 1".into());
        }
        match self.model {
            ModelKind::Cavity => self.cavity.validate(),
            ModelKind::Qubits => self.qubits.validate(),
        }
        .map_err(|e| CliError::config(e.to_string()))?;
        if self.cavity.n_fock > 8 {
            return bad(format!("model.n_fock = {} exceeds the supported maximum of 8", self.cavity.n_fock));
        }
        match self.sweep.kind {
            SweepKind::MutualInformation => {
                for (name, g) in [("delta_a", &self.sweep.delta_a), ("j2", &self.sweep.j2)] {
                    if g.points == 0 {
                        return bad(format!("sweep.{name}_points = 0 gives an empty grid"));
                    }
                    if !(g.start.is_finite() && g.stop.is_finite()) {
                        return bad(format!("sweep.{name} bounds must be finite"));
                    }
                }
            }
            SweepKind::Fidelity => {
                if self.sweep.n.is_empty() || self.sweep.kappa_t.is_empty() {
                    return bad("sweep.n and sweep.kappa_t must be non-empty".into());
                }
                if self.sweep.n.contains(&0) {
                    return bad("sweep.n entries must be >= 1".into());
                }
                if self.sweep.kappa_t.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
                    return bad("sweep.kappa_t entries must be > 0".into());
                }
            }
            SweepKind::None => {}
        }
        if self.output.prefix.is_empty() || self.output.prefix.contains(['/', '\\']) {
            return bad(format!("output.prefix = '{}' is not a plain file prefix", self.output.prefix));
        }
        Ok(())
    }

    /// The resolved configuration in the same format the parser reads.
    /// Output directories are left out so that the text depends only on
    /// what is computed.
    pub fn to_config_text(&self) -> String {
        let mut s = String::new();
        let f = |x: f64| format!("{x:?}");
        let _ = writeln!(s, "experiment = \"{}\"", self.experiment);
        let _ = writeln!(s, "\n[model]");
        let _ = writeln!(s, "kind = \"{}\"", self.model.name());
        let _ = writeln!(s, "t_total = {}", f(self.t_total));
        let _ = writeln!(s, "steps_per_unit = {}", self.steps_per_unit);
        match self.model {
            ModelKind::Cavity => {
                let c = &self.cavity;
                for (k, v) in [
                    ("delta_1", c.qubit_detuning[0]),
                    ("delta_2", c.qubit_detuning[1]),
                    ("cavity_detuning_1", c.cavity_detuning[0]),
                    ("cavity_detuning_2", c.cavity_detuning[1]),
                    ("g_1", c.coupling[0]),
                    ("g_2", c.coupling[1]),
                    ("hopping", c.hopping),
                    ("drive", c.drive),
                    ("kappa", c.kappa),
                ] {
                    let _ = writeln!(s, "{k} = {}", f(v));
                }
                let _ = writeln!(s, "n_fock = {}", c.n_fock);
            }
            ModelKind::Qubits => {
                let q = &self.qubits;
                for (k, v) in [
                    ("delta_a", q.delta_a),
                    ("delta_r", q.delta_r),
                    ("delta_e", q.delta_e),
                    ("omega", q.omega),
                    ("j1", q.j1),
                    ("j2", q.j2),
                    ("gamma", q.gamma),
                    ("gamma_phi", q.gamma_phi),
                ] {
                    let _ = writeln!(s, "{k} = {}", f(v));
                }
            }
        }
        let _ = writeln!(s, "\n[sweep]");
        let _ = writeln!(s, "kind = \"{}\"", self.sweep.kind.name());
        match self.sweep.kind {
            SweepKind::MutualInformation => {
                for (name, g) in [("delta_a", &self.sweep.delta_a), ("j2", &self.sweep.j2)] {
                    let _ = writeln!(s, "{name}_start = {}", f(g.start));
                    let _ = writeln!(s, "{name}_stop = {}", f(g.stop));
                    let _ = writeln!(s, "{name}_points = {}", g.points);
                }
            }
            SweepKind::Fidelity => {
                let n: Vec<String> = self.sweep.n.iter().map(|n| n.to_string()).collect();
                let kt: Vec<String> = self.sweep.kappa_t.iter().map(|&x| f(x)).collect();
                let _ = writeln!(s, "n = [{}]", n.join(", "));
                let _ = writeln!(s, "kappa_t = [{}]", kt.join(", "));
            }
            SweepKind::None => {}
        }
        if self.model == ModelKind::Qubits {
            let fb = &self.feedback;
            let _ = writeln!(s, "\n[feedback]");
            let _ = writeln!(s, "enabled = \"{}\"", fb.enabled.name());
            let mode = match fb.mode {
                FeedbackMode::Averaged => "averaged",
                FeedbackMode::Trajectory => "trajectory",
            };
            let _ = writeln!(s, "mode = \"{mode}\"");
            let _ = writeln!(s, "seed = {}", fb.seed);
            let axis = match fb.measure {
                Axis::X => "x",
                Axis::Y => "y",
                Axis::Z => "z",
            };
            let _ = writeln!(s, "measure = \"{axis}\"");
            let _ = writeln!(s, "reward_reinit = \"{}\"", fb.reward_reinit.name());
            let _ = writeln!(s, "punish_reinit = \"{}\"", fb.punish_reinit.name());
            let pu = match fb.punish_unitary {
                PunishUnitary::RotateZPi => "rz_pi",
                PunishUnitary::Identity => "identity",
            };
            let _ = writeln!(s, "punish_unitary = \"{pu}\"");
        }
        let _ = writeln!(s, "\n[output]");
        let _ = writeln!(s, "prefix = \"{}\"", self.output.prefix);
        s
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Option<String>,
    model: Option<RawModel>,
    sweep: Option<RawSweep>,
    feedback: Option<RawFeedback>,
    output: Option<RawOutput>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: Option<String>,
    t_total: Option<f64>,
    steps_per_unit: Option<usize>,
    delta_1: Option<f64>,
    delta_2: Option<f64>,
    cavity_detuning_1: Option<f64>,
    cavity_detuning_2: Option<f64>,
    g_1: Option<f64>,
    g_2: Option<f64>,
    hopping: Option<f64>,
    drive: Option<f64>,
    kappa: Option<f64>,
    n_fock: Option<usize>,
    delta_a: Option<f64>,
    delta_r: Option<f64>,
    delta_e: Option<f64>,
    omega: Option<f64>,
    j1: Option<f64>,
    j2: Option<f64>,
    gamma: Option<f64>,
    gamma_phi: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    kind: Option<String>,
    delta_a_start: Option<f64>,
    delta_a_stop: Option<f64>,
    delta_a_points: Option<usize>,
    j2_start: Option<f64>,
    j2_stop: Option<f64>,
    j2_points: Option<usize>,
    n: Option<Vec<usize>>,
    kappa_t: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFeedback {
    enabled: Option<String>,
    mode: Option<String>,
    seed: Option<u64>,
    measure: Option<String>,
    reward_reinit: Option<String>,
    punish_reinit: Option<String>,
    punish_unitary: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
    prefix: Option<String>,
}

/// Later values win, field by field.
macro_rules! overlay {
    ($base:expr, $top:expr; $($field:ident),* $(,)?) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field; } )*
    };
}

fn overlay_section<T: Default>(base: &mut Option<T>, top: Option<T>, merge: impl FnOnce(&mut T, T)) {
    if let Some(top) = top {
        merge(base.get_or_insert_with(T::default), top);
    }
}

impl RawConfig {
    fn overlay(&mut self, top: RawConfig) {
        if top.experiment.is_some() {
            self.experiment = top.experiment;
        }
        overlay_section(&mut self.model, top.model, |b, t| {
            overlay!(b, t; kind, t_total, steps_per_unit, delta_1, delta_2, cavity_detuning_1, cavity_detuning_2,
                g_1, g_2, hopping, drive, kappa, n_fock, delta_a, delta_r, delta_e, omega, j1, j2, gamma, gamma_phi);
        });
        overlay_section(&mut self.sweep, top.sweep, |b, t| {
            overlay!(b, t; kind, delta_a_start, delta_a_stop, delta_a_points, j2_start, j2_stop, j2_points, n, kappa_t);
        });
        overlay_section(&mut self.feedback, top.feedback, |b, t| {
            overlay!(b, t; enabled, mode, seed, measure, reward_reinit, punish_reinit, punish_unitary);
        });
        overlay_section(&mut self.output, top.output, |b, t| {
            overlay!(b, t; dir, prefix);
        });
    }
}

/// Keeps only configuration lines when `text` is a CSV written by this
/// tool, blanking the rest so parse errors still point at file lines.
fn extract_config(text: &str) -> String {
    if !text.lines().any(|l| l.trim_end() == CONFIG_BEGIN) {
        return text.to_string();
    }
    let mut inside = false;
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        let line = line.trim_end();
        if line == CONFIG_BEGIN {
            inside = true;
        } else if line == CONFIG_END {
            inside = false;
        } else if inside {
            out.push_str(line.strip_prefix("# ").unwrap_or(line.strip_prefix('#').unwrap_or(line)));
        }
        out.push('\n');
    }
    out
}

fn parse_raw(text: &str, origin: &str) -> Result<RawConfig> {
    toml::from_str(&extract_config(text)).map_err(|e| CliError::config(format!("{origin}: {e}")))
}

/// Turns `section.key=value` into a one-key document. Bare words that are
/// not valid values are read as strings.
fn parse_override(assignment: &str) -> Result<RawConfig> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("override '{assignment}' is not key=value")))?;
    let (key, value) = (key.trim(), value.trim());
    let value = if toml::from_str::<toml::Table>(&format!("v = {value}")).is_ok() {
        value.to_string()
    } else {
        format!("\"{}\"", value.replace('\\', "\\\\").replace('"', "\\\""))
    };
    let doc = match key.split_once('.') {
        Some((section, field)) => format!("[{section}]\n{field} = {value}\n"),
        None => format!("{key} = {value}\n"),
    };
    parse_raw(&doc, &format!("--set {assignment}"))
}

/// Resolves a configuration from an optional file body and overrides.
/// `experiment` comes from the command line; a file that names a different
/// one is rejected.
pub fn resolve(experiment: Experiment, file: Option<(&str, &str)>, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut raw = match file {
        Some((text, origin)) => parse_raw(text, origin)?,
        None => RawConfig::default(),
    };
    for o in overrides {
        raw.overlay(parse_override(o)?);
    }
    if let Some(named) = &raw.experiment {
        let named: Experiment = named.parse()?;
        if named != experiment {
            return Err(CliError::config(format!(
                "config is for experiment '{named}' but '{experiment}' was requested"
            )));
        }
    }
    build(experiment, raw)
}

/// Reads and resolves a configuration file, which may also be a CSV
/// written by this tool.
pub fn load(experiment: Experiment, path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| CliError::Io { path: p.to_path_buf(), source })?;
            resolve(experiment, Some((&text, &p.display().to_string())), overrides)
        }
        None => resolve(experiment, None, overrides),
    }
}

fn reject(key: &str, present: bool, model: ModelKind) -> Result<()> {
    if present {
        return Err(CliError::config(format!("{key} does not apply to the {} model", model.name())));
    }
    Ok(())
}

fn build(experiment: Experiment, raw: RawConfig) -> Result<ExperimentConfig> {
    let m = raw.model.unwrap_or_default();
    let requested = m
        .kind
        .as_deref()
        .map(|k| parse_choice("model.kind", k, &[("cavity", ModelKind::Cavity), ("qubits", ModelKind::Qubits)]))
        .transpose()?;
    let model = match (experiment.fixed_model(), requested) {
        (Some(fixed), Some(r)) if fixed != r => {
            return Err(CliError::config(format!(
                "experiment {experiment} uses the {} model, not {}",
                fixed.name(),
                r.name()
            )))
        }
        (Some(fixed), _) => fixed,
        (None, Some(r)) => r,
        (None, None) => return Err(CliError::config("experiment custom needs model.kind = \"cavity\" or \"qubits\"")),
    };
    let mut cfg = ExperimentConfig::preset(experiment, model);

    let cavity_keys = [
        ("model.delta_1", m.delta_1.is_some()),
        ("model.delta_2", m.delta_2.is_some()),
        ("model.cavity_detuning_1", m.cavity_detuning_1.is_some()),
        ("model.cavity_detuning_2", m.cavity_detuning_2.is_some()),
        ("model.g_1", m.g_1.is_some()),
        ("model.g_2", m.g_2.is_some()),
        ("model.hopping", m.hopping.is_some()),
        ("model.drive", m.drive.is_some()),
        ("model.kappa", m.kappa.is_some()),
        ("model.n_fock", m.n_fock.is_some()),
    ];
    let qubit_keys = [
        ("model.delta_a", m.delta_a.is_some()),
        ("model.delta_r", m.delta_r.is_some()),
        ("model.delta_e", m.delta_e.is_some()),
        ("model.omega", m.omega.is_some()),
        ("model.j1", m.j1.is_some()),
        ("model.j2", m.j2.is_some()),
        ("model.gamma", m.gamma.is_some()),
        ("model.gamma_phi", m.gamma_phi.is_some()),
    ];
    let foreign = if model == ModelKind::Cavity { &qubit_keys[..] } else { &cavity_keys[..] };
    for (key, present) in foreign {
        reject(key, *present, model)?;
    }

    if let Some(t) = m.t_total {
        cfg.t_total = t;
    }
    if let Some(n) = m.steps_per_unit {
        cfg.steps_per_unit = n;
    }
    let c = &mut cfg.cavity;
    let set = |slot: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut c.qubit_detuning[0], m.delta_1);
    set(&mut c.qubit_detuning[1], m.delta_2);
    set(&mut c.cavity_detuning[0], m.cavity_detuning_1);
    set(&mut c.cavity_detuning[1], m.cavity_detuning_2);
    set(&mut c.coupling[0], m.g_1);
    set(&mut c.coupling[1], m.g_2);
    set(&mut c.hopping, m.hopping);
    set(&mut c.drive, m.drive);
    set(&mut c.kappa, m.kappa);
    if let Some(n) = m.n_fock {
        c.n_fock = n;
    }
    let q = &mut cfg.qubits;
    set(&mut q.delta_a, m.delta_a);
    set(&mut q.delta_r, m.delta_r);
    set(&mut q.delta_e, m.delta_e);
    set(&mut q.omega, m.omega);
    set(&mut q.j1, m.j1);
    set(&mut q.j2, m.j2);
    set(&mut q.gamma, m.gamma);
    set(&mut q.gamma_phi, m.gamma_phi);

    let s = raw.sweep.unwrap_or_default();
    let requested = s
        .kind
        .as_deref()
        .map(|k| {
            parse_choice(
                "sweep.kind",
                k,
                &[
                    ("none", SweepKind::None),
                    ("mutual_information", SweepKind::MutualInformation),
                    ("fidelity", SweepKind::Fidelity),
                ],
            )
        })
        .transpose()?;
    cfg.sweep.kind = match (experiment.fixed_sweep(), requested) {
        (Some(fixed), Some(r)) if fixed != r => {
            return Err(CliError::config(format!(
                "experiment {experiment} runs sweep '{}', not '{}'",
                fixed.name(),
                r.name()
            )))
        }
        (Some(fixed), _) => fixed,
        (None, r) => r.unwrap_or(SweepKind::None),
    };
    match (cfg.sweep.kind, model) {
        (SweepKind::MutualInformation, ModelKind::Cavity) | (SweepKind::Fidelity, ModelKind::Qubits) => {
            return Err(CliError::config(format!(
                "sweep.kind = '{}' does not apply to the {} model",
                cfg.sweep.kind.name(),
                model.name()
            )))
        }
        _ => {}
    }
    let grid_keys = [
        ("sweep.delta_a_start", s.delta_a_start.is_some()),
        ("sweep.delta_a_stop", s.delta_a_stop.is_some()),
        ("sweep.delta_a_points", s.delta_a_points.is_some()),
        ("sweep.j2_start", s.j2_start.is_some()),
        ("sweep.j2_stop", s.j2_stop.is_some()),
        ("sweep.j2_points", s.j2_points.is_some()),
    ];
    let fidelity_keys = [("sweep.n", s.n.is_some()), ("sweep.kappa_t", s.kappa_t.is_some())];
    let unused: Vec<&(&str, bool)> = match cfg.sweep.kind {
        SweepKind::None => grid_keys.iter().chain(&fidelity_keys).collect(),
        SweepKind::MutualInformation => fidelity_keys.iter().collect(),
        SweepKind::Fidelity => grid_keys.iter().collect(),
    };
    if let Some((key, _)) = unused.into_iter().find(|(_, present)| *present) {
        return Err(CliError::config(format!("{key} does not apply to sweep kind '{}'", cfg.sweep.kind.name())));
    }
    set(&mut cfg.sweep.delta_a.start, s.delta_a_start);
    set(&mut cfg.sweep.delta_a.stop, s.delta_a_stop);
    set(&mut cfg.sweep.j2.start, s.j2_start);
    set(&mut cfg.sweep.j2.stop, s.j2_stop);
    if let Some(p) = s.delta_a_points {
        cfg.sweep.delta_a.points = p;
    }
    if let Some(p) = s.j2_points {
        cfg.sweep.j2.points = p;
    }
    if let Some(n) = s.n {
        cfg.sweep.n = n;
    }
    if let Some(kt) = s.kappa_t {
        cfg.sweep.kappa_t = kt;
    }

    if let Some(fb) = raw.feedback {
        if model == ModelKind::Cavity {
            return Err(CliError::config("the [feedback] section does not apply to the cavity model"));
        }
        let f = &mut cfg.feedback;
        if let Some(v) = fb.enabled {
            f.enabled = parse_choice(
                "feedback.enabled",
                &v,
                &[("off", FeedbackSwitch::Off), ("on", FeedbackSwitch::On), ("both", FeedbackSwitch::Both)],
            )?;
        }
        if let Some(v) = fb.mode {
            f.mode = parse_choice(
                "feedback.mode",
                &v,
                &[("averaged", FeedbackMode::Averaged), ("trajectory", FeedbackMode::Trajectory)],
            )?;
        }
        if let Some(v) = fb.seed {
            f.seed = v;
        }
        if let Some(v) = fb.measure {
            f.measure = parse_choice("feedback.measure", &v, &[("x", Axis::X), ("y", Axis::Y), ("z", Axis::Z)])?;
        }
        if let Some(v) = fb.reward_reinit {
            f.reward_reinit = parse_choice("feedback.reward_reinit", &v, &QubitStateName::CHOICES)?;
        }
        if let Some(v) = fb.punish_reinit {
            f.punish_reinit = parse_choice("feedback.punish_reinit", &v, &QubitStateName::CHOICES)?;
        }
        if let Some(v) = fb.punish_unitary {
            f.punish_unitary = parse_choice(
                "feedback.punish_unitary",
                &v,
                &[("rz_pi", PunishUnitary::RotateZPi), ("identity", PunishUnitary::Identity)],
            )?;
        }
    }

    if let Some(out) = raw.output {
        if let Some(d) = out.dir {
            cfg.output.dir = PathBuf::from(d);
        }
        if let Some(p) = out.prefix {
            cfg.output.prefix = p;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn res(exp: Experiment, text: &str, sets: &[&str]) -> Result<ExperimentConfig> {
        let sets: Vec<String> = sets.iter().map(|s| s.to_string()).collect();
        resolve(exp, Some((text, "test.toml")), &sets)
    }

    #[test]
    fn empty_file_loads_presets() {
        let cfg = res(Experiment::Fig2, "", &[]).unwrap();
        assert_eq!(cfg.model, ModelKind::Cavity);
        assert_eq!(cfg.cavity, CavityModelParams::fig2());
        assert_eq!(cfg.steps_per_unit, 100);
        let cfg = res(Experiment::Fig4, "", &[]).unwrap();
        assert_eq!(cfg.qubits, QubitModelParams::fig4());
        assert_eq!(cfg.sweep.delta_a.values().len(), 41);
        assert_eq!(cfg.sweep.j2.values()[40], 40.0);
        assert_eq!(cfg.t_total, 3.0);
    }

    #[test]
    fn truncation_override_changes_only_truncation() {
        let base = res(Experiment::Fig2, "", &[]).unwrap();
        let four = res(Experiment::Fig2, "", &["model.n_fock=4"]).unwrap();
        assert_eq!(four.cavity.n_fock, 4);
        let mut back = four.clone();
        back.cavity.n_fock = base.cavity.n_fock;
        assert_eq!(back, base);
    }

    #[test]
    fn empty_grid_is_rejected() {
        let err = res(Experiment::Fig4, "[sweep]\nj2_points = 0\n", &[]).unwrap_err();
        assert!(matches!(err, CliError::Config(ref m) if m.contains("empty grid")), "{err}");
    }

    #[test]
    fn unknown_keys_report_lines() {
        let err = res(Experiment::Fig2, "[model]\nhopping = 3.0\n\nhoping = 3.0\n", &[]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 4"), "{msg}");
        assert!(msg.contains("hoping"), "{msg}");
        let err = res(Experiment::Fig2, "[model\n", &[]).unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn foreign_keys_are_errors() {
        assert!(res(Experiment::Fig2, "[model]\nj2 = 1.0\n", &[]).is_err());
        assert!(res(Experiment::Fig5, "[model]\nn_fock = 4\n", &[]).is_err());
        assert!(res(Experiment::Fig2, "[feedback]\nenabled = \"on\"\n", &[]).is_err());
        assert!(res(Experiment::Fig5, "[sweep]\nn = [1, 2]\n", &[]).is_err());
        assert!(res(Experiment::Fig7, "[model]\nkind = \"qubits\"\n", &[]).is_err());
    }

    #[test]
    fn out_of_range_values() {
        assert!(res(Experiment::Fig2, "[model]\nkappa = 0.0\n", &[]).is_err());
        assert!(res(Experiment::Fig5, "[model]\nt_total = -1.0\n", &[]).is_err());
        assert!(res(Experiment::Fig5, "[model]\ngamma_phi = -0.1\n", &[]).is_err());
        assert!(res(Experiment::Fig7, "[sweep]\nn = [0, 5]\n", &[]).is_err());
        assert!(res(Experiment::Fig5, "[feedback]\nmode = \"sometimes\"\n", &[]).is_err());
    }

    #[test]
    fn overrides_win_and_bare_words_are_strings() {
        let cfg = res(
            Experiment::Fig5,
            "[model]\nj2 = 3.0\n[feedback]\nmode = \"averaged\"\n",
            &["model.j2=7", "feedback.mode=trajectory", "feedback.seed=9"],
        )
        .unwrap();
        assert_eq!(cfg.qubits.j2, 7.0);
        assert_eq!(cfg.feedback.mode, FeedbackMode::Trajectory);
        assert_eq!(cfg.feedback.seed, 9);
        assert!(res(Experiment::Fig5, "", &["model.nope=1"]).is_err());
        assert!(res(Experiment::Fig5, "", &["j2"]).is_err());
    }

    #[test]
    fn custom_needs_a_model() {
        assert!(res(Experiment::Custom, "", &[]).is_err());
        let cfg = res(Experiment::Custom, "[model]\nkind = \"qubits\"\n[sweep]\nkind = \"mutual_information\"\n", &[])
            .unwrap();
        assert_eq!(cfg.sweep.kind, SweepKind::MutualInformation);
        assert!(res(Experiment::Custom, "[model]\nkind = \"cavity\"\n[sweep]\nkind = \"mutual_information\"\n", &[])
            .is_err());
    }

    #[test]
    fn experiment_mismatch_is_rejected() {
        assert!(res(Experiment::Fig2, "experiment = \"fig5\"\n", &[]).is_err());
        assert!(res(Experiment::Fig2, "experiment = \"fig2\"\n", &[]).is_ok());
    }

    #[test]
    fn resolved_text_round_trips() {
        for (exp, sets) in [
            (Experiment::Fig2, vec!["model.drive=0.001"]),
            (Experiment::Fig4, vec!["sweep.j2_points=3"]),
            (Experiment::Fig5, vec!["feedback.mode=trajectory", "feedback.reward_reinit=excited"]),
            (Experiment::Fig7, vec!["sweep.kappa_t=[2.5]"]),
        ] {
            let cfg = res(exp, "", &sets).unwrap();
            let again = res(exp, &cfg.to_config_text(), &[]).unwrap();
            assert_eq!(again, cfg);
        }
    }

    #[test]
    fn config_is_read_back_from_csv_metadata() {
        let cfg = res(Experiment::Fig5, "", &["model.omega=0.25"]).unwrap();
        let mut csv = String::from("# header line\n");
        csv.push_str(CONFIG_BEGIN);
        csv.push('\n');
        for l in cfg.to_config_text().lines() {
            csv.push_str(&format!("# {l}\n").replace("# \n", "#\n"));
        }
        csv.push_str(CONFIG_END);
        csv.push_str("\nt,x\n0,1\n");
        assert_eq!(res(Experiment::Fig5, &csv, &[]).unwrap(), cfg);
    }

    #[test]
    fn grid_values() {
        assert_eq!(Grid { start: 0.0, stop: 1.0, points: 3 }.values(), [0.0, 0.5, 1.0]);
        assert_eq!(Grid { start: 2.0, stop: 9.0, points: 1 }.values(), [2.0]);
    }
}
