//! Experiment configuration, as read from JSON and snapshotted into manifests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stirap_core::scans::Statistic;
use stirap_core::{validate, ChainParams, IntegratorOptions, LyapunovSettings, PulseProtocol, SemiclassicalState};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Sweep,
    Branch,
    Lyapunov,
    Window,
    Ensemble,
    Scan,
    Quantum,
    BoundCheck,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Sweep => "sweep",
            Kind::Branch => "branch",
            Kind::Lyapunov => "lyapunov",
            Kind::Window => "window",
            Kind::Ensemble => "ensemble",
            Kind::Scan => "scan",
            Kind::Quantum => "quantum",
            Kind::BoundCheck => "bound-check",
        }
    }
}

/// Where a sweep starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StartSpec {
    /// On the stationary branch at `ttilde`.
    Ssp { ttilde: f64 },
    /// All photons in the source cavity, qubit in the ground state.
    Source,
    /// Occupations and qubit inversion at `ttilde`; phases are taken from the
    /// branch and `|s|` from the spin length.
    Occupations { ttilde: f64, occupations: Vec<f64>, sz: f64 },
    State { ttilde: f64, state: SemiclassicalState },
}

impl StartSpec {
    pub fn ttilde(&self) -> f64 {
        match self {
            StartSpec::Source => 0.0,
            StartSpec::Ssp { ttilde } | StartSpec::Occupations { ttilde, .. } | StartSpec::State { ttilde, .. } => *ttilde,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSettings {
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
    #[serde(default)]
    pub lyapunov: LyapunovSettings,
    /// Skip the linear-system calibration.
    #[serde(default)]
    pub noise_floor: Option<f64>,
}

fn default_grid_step() -> f64 {
    0.1
}

impl Default for WindowSettings {
    fn default() -> Self {
        Self {
            grid_step: default_grid_step(),
            lyapunov: LyapunovSettings::default(),
            noise_floor: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSettings {
    pub ttilde: Vec<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
    /// Evolution time under the frozen couplings, units 1/K.
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_n_out")]
    pub n_out: usize,
}

fn default_samples() -> usize {
    10
}
fn default_perturbation() -> f64 {
    1e-3
}
fn default_horizon() -> f64 {
    2000.0
}
fn default_n_out() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSettings {
    pub lo: f64,
    pub hi: f64,
    pub per_decade: usize,
    #[serde(default = "default_statistic")]
    pub statistic: Statistic,
    /// Bisect the bracketing grid intervals of each bound.
    #[serde(default)]
    pub refine: bool,
}

fn default_statistic() -> Statistic {
    Statistic::TailMean
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum QuantumInitial {
    /// Fock state with the given photon numbers and qubit level (0 or 1).
    Fock { occupations: Vec<u32>, qubit: u32 },
    /// Coherent state matching the source-filled semiclassical state; the
    /// cutoff defaults to the smallest one meeting the truncation limit.
    Coherent {
        #[serde(default)]
        cutoff: Option<u32>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "settings", rename_all = "kebab-case")]
pub enum Experiment {
    Sweep {
        start: StartSpec,
        /// Extra time (units 1/K) after the protocol end with the final
        /// couplings frozen.
        #[serde(default)]
        hold_after: Option<f64>,
        /// Also run the closed system and report the pointwise deviation.
        #[serde(default)]
        hermitian_reference: bool,
        #[serde(default)]
        window: Option<WindowSettings>,
    },
    Branch {
        #[serde(default = "default_branch_step")]
        step: f64,
        /// Random Newton starts at the first grid point, reported separately.
        #[serde(default)]
        multistart: usize,
    },
    Lyapunov {
        ttilde: Vec<f64>,
        #[serde(default)]
        lyapunov: LyapunovSettings,
        #[serde(default)]
        ensemble: Option<EnsembleSettings>,
    },
    Window(WindowSettings),
    Ensemble(EnsembleSettings),
    Scan(ScanSettings),
    Quantum {
        initial: QuantumInitial,
        #[serde(default = "default_true")]
        compare: bool,
        #[serde(default = "default_onset")]
        onset_fraction: f64,
        #[serde(default)]
        window: Option<WindowSettings>,
    },
    BoundCheck {
        couplings: Vec<f64>,
        scan: ScanSettings,
        #[serde(default)]
        window: WindowSettings,
    },
}

fn default_branch_step() -> f64 {
    0.01
}
fn default_true() -> bool {
    true
}
fn default_onset() -> f64 {
    stirap_core::quantum::ONSET_FRACTION
}

impl Experiment {
    pub fn kind(&self) -> Kind {
        match self {
            Experiment::Sweep { .. } => Kind::Sweep,
            Experiment::Branch { .. } => Kind::Branch,
            Experiment::Lyapunov { .. } => Kind::Lyapunov,
            Experiment::Window(_) => Kind::Window,
            Experiment::Ensemble(_) => Kind::Ensemble,
            Experiment::Scan(_) => Kind::Scan,
            Experiment::Quantum { .. } => Kind::Quantum,
            Experiment::BoundCheck { .. } => Kind::BoundCheck,
        }
    }
}

/// Overrides applied to the base parameters for one run of a config.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Variant {
    pub label: String,
    #[serde(default)]
    pub g: Option<f64>,
    #[serde(default)]
    pub sweep_rate: Option<f64>,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Sweep only.
    #[serde(default)]
    pub start: Option<StartSpec>,
}

impl Variant {
    pub fn labelled(label: &str) -> Self {
        Self {
            label: label.into(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub params: ChainParams,
    pub protocol: PulseProtocol,
    #[serde(flatten)]
    pub experiment: Experiment,
    #[serde(default)]
    pub variants: Vec<Variant>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub format: Format,
    #[serde(default)]
    pub seed: u64,
    /// Integrator tolerances; each experiment kind has its own default.
    #[serde(default)]
    pub integrator: Option<IntegratorOptions>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Parameters and protocol of one resolved run.
#[derive(Debug, Clone)]
pub struct Run {
    pub label: String,
    pub params: ChainParams,
    pub protocol: PulseProtocol,
    pub start: Option<StartSpec>,
}

fn check(ok: bool, msg: impl FnOnce() -> String, errs: &mut Vec<String>) {
    if !ok {
        errs.push(msg());
    }
}

fn check_window(w: &WindowSettings, errs: &mut Vec<String>) {
    check(w.grid_step > 0.0, || "window grid_step must be > 0".into(), errs);
    if let Err(e) = w.lyapunov.validate() {
        errs.push(e.to_string());
    }
    if let Some(f) = w.noise_floor {
        check(f > 0.0, || "noise_floor must be > 0".into(), errs);
    }
}

fn check_ensemble(e: &EnsembleSettings, errs: &mut Vec<String>) {
    check(!e.ttilde.is_empty(), || "ensemble needs at least one ttilde".into(), errs);
    check(e.samples > 0 && e.n_out > 0, || "ensemble samples and n_out must be > 0".into(), errs);
    check(e.horizon > 0.0 && e.perturbation >= 0.0, || "ensemble horizon must be > 0 and perturbation >= 0".into(), errs);
}

fn check_scan(s: &ScanSettings, errs: &mut Vec<String>) {
    check(
        s.lo > 0.0 && s.lo < s.hi && s.per_decade > 0,
        || format!("scan needs 0 < lo < hi and per_decade > 0 (got {} {} {})", s.lo, s.hi, s.per_decade),
        errs,
    );
}

impl ExperimentConfig {
    pub fn kind(&self) -> Kind {
        self.experiment.kind()
    }

    /// Copy every seed into the nested Lyapunov settings so the snapshot is
    /// self-consistent.
    pub fn propagate_seed(&mut self) {
        let seed = self.seed;
        match &mut self.experiment {
            Experiment::Sweep { window: Some(w), .. } | Experiment::Quantum { window: Some(w), .. } => w.lyapunov.seed = seed,
            Experiment::Lyapunov { lyapunov, .. } => lyapunov.seed = seed,
            Experiment::Window(w) | Experiment::BoundCheck { window: w, .. } => w.lyapunov.seed = seed,
            _ => {}
        }
    }

    /// The runs this config expands to: one per variant, or the base alone.
    pub fn runs(&self) -> Vec<Run> {
        let base_start = match &self.experiment {
            Experiment::Sweep { start, .. } => Some(start.clone()),
            _ => None,
        };
        if self.variants.is_empty() {
            return vec![Run {
                label: self.name.clone(),
                params: self.params.clone(),
                protocol: self.protocol.clone(),
                start: base_start,
            }];
        }
        self.variants
            .iter()
            .map(|v| {
                let mut params = self.params.clone();
                if let Some(g) = v.g {
                    params = params.with_g_terminal(g);
                }
                params.kappa = v.kappa.unwrap_or(params.kappa);
                params.gamma = v.gamma.unwrap_or(params.gamma);
                let protocol = match v.sweep_rate {
                    Some(r) => self.protocol.with_sweep_rate(r),
                    None => self.protocol.clone(),
                };
                Run {
                    label: v.label.clone(),
                    params,
                    protocol,
                    start: v.start.clone().or_else(|| base_start.clone()),
                }
            })
            .collect()
    }

    /// All configuration problems at once; nothing is computed.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        check(!self.name.is_empty(), || "name must not be empty".into(), &mut errs);
        let mut labels: Vec<&str> = self.variants.iter().map(|v| v.label.as_str()).collect();
        labels.sort_unstable();
        check(labels.windows(2).all(|w| w[0] != w[1]), || "variant labels must be distinct".into(), &mut errs);
        for l in &labels {
            check(
                !l.is_empty() && l.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.'),
                || format!("variant label {l:?} is not a plain file-name component"),
                &mut errs,
            );
        }
        if let Some(o) = &self.integrator {
            if let Err(e) = o.validate() {
                errs.push(e.to_string());
            }
        }
        for run in self.runs() {
            if let Err(diags) = validate(&run.params, &run.protocol) {
                for d in diags {
                    errs.push(format!("{}: {d}", run.label));
                }
            }
            if let Some(s) = &run.start {
                let tt = s.ttilde();
                check(
                    tt >= 0.0 && tt < run.protocol.ttilde_end(),
                    || format!("{}: start ttilde {tt} outside [0, {})", run.label, run.protocol.ttilde_end()),
                    &mut errs,
                );
                match s {
                    StartSpec::Occupations { occupations, sz, .. } => {
                        check(
                            occupations.len() == run.params.n_cavities && occupations.iter().all(|n| *n >= 0.0),
                            || format!("{}: need {} nonnegative occupations", run.label, run.params.n_cavities),
                            &mut errs,
                        );
                        check(sz.abs() <= 0.5, || format!("{}: |sz| must be <= 1/2", run.label), &mut errs);
                    }
                    StartSpec::State { state, .. } => check(
                        state.n_cavities() == run.params.n_cavities,
                        || format!("{}: start state has the wrong number of cavities", run.label),
                        &mut errs,
                    ),
                    _ => {}
                }
            }
        }
        if self.kind() != Kind::Sweep {
            check(
                self.variants.iter().all(|v| v.start.is_none()),
                || "variant start states are only used by sweeps".into(),
                &mut errs,
            );
        }
        let n = self.params.n_cavities;
        match &self.experiment {
            Experiment::Sweep { hold_after, window, .. } => {
                if let Some(h) = hold_after {
                    check(*h > 0.0, || "hold_after must be > 0".into(), &mut errs);
                }
                if let Some(w) = window {
                    check_window(w, &mut errs);
                }
            }
            Experiment::Branch { step, .. } => check(*step > 0.0, || "branch step must be > 0".into(), &mut errs),
            Experiment::Lyapunov { ttilde, lyapunov, ensemble } => {
                check(!ttilde.is_empty(), || "lyapunov needs at least one ttilde".into(), &mut errs);
                if let Err(e) = lyapunov.validate() {
                    errs.push(e.to_string());
                }
                if let Some(e) = ensemble {
                    check_ensemble(e, &mut errs);
                }
            }
            Experiment::Window(w) => check_window(w, &mut errs),
            Experiment::Ensemble(e) => check_ensemble(e, &mut errs),
            Experiment::Scan(s) => check_scan(s, &mut errs),
            Experiment::Quantum { initial, onset_fraction, window, .. } => {
                if let QuantumInitial::Fock { occupations, qubit } = initial {
                    check(
                        occupations.len() == n && *qubit <= 1,
                        || format!("fock state needs {n} occupations and qubit 0 or 1"),
                        &mut errs,
                    );
                }
                check(*onset_fraction > 0.0, || "onset_fraction must be > 0".into(), &mut errs);
                for run in self.runs() {
                    check(run.params.is_hermitian(), || format!("{}: quantum runs are closed-system only", run.label), &mut errs);
                }
                if let Some(w) = window {
                    check_window(w, &mut errs);
                }
            }
            Experiment::BoundCheck { couplings, scan, window } => {
                check(!couplings.is_empty(), || "bound-check needs couplings".into(), &mut errs);
                check(self.variants.is_empty(), || "bound-check takes couplings, not variants".into(), &mut errs);
                check_scan(scan, &mut errs);
                check_window(window, &mut errs);
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(errs.join("; ")))
        }
    }

    /// Read a config, or the config snapshot of a run manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let value = match value.get("config") {
            Some(inner) if value.get("outputs").is_some() => inner.clone(),
            _ => value,
        };
        serde_json::from_value(value).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }
}
