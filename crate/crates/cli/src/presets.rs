//! One ready-made configuration per reproduced figure.

use stirap_core::scans::Statistic;
use stirap_core::{ChainParams, LyapunovSettings, PulseProtocol};

use crate::config::{
    EnsembleSettings, Experiment, ExperimentConfig, Format, QuantumInitial, ScanSettings, StartSpec, Variant,
    WindowSettings,
};
use crate::error::{CliError, Result};

/// Interior-cavity detuning used by every preset, units K.
pub const PRESET_DETUNING: f64 = 0.5;
pub const PRESET_PHOTONS: f64 = 20.0;

pub const FAST_RATE: f64 = 0.0202;
pub const SLOW_RATE: f64 = 1.2121e-4;

pub const PRESETS: &[&str] = &[
    "fig2-fast",
    "fig2-slow",
    "fig2-restart",
    "fig3",
    "fig4",
    "fig5",
    "fig6-linear",
    "fig6-nonlinear",
    "figS1",
    "figS2",
    "figS3",
    "figS4",
    "bounds",
];

fn three(g: f64, rate: f64) -> (ChainParams, PulseProtocol) {
    (
        ChainParams::three_cavity(PRESET_DETUNING, g, PRESET_PHOTONS),
        PulseProtocol::three_cavity(rate),
    )
}

fn config(name: &str, (params, protocol): (ChainParams, PulseProtocol), experiment: Experiment) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        params,
        protocol,
        experiment,
        variants: Vec::new(),
        out: format!("out/{name}").into(),
        format: Format::Csv,
        seed: 0,
        integrator: None,
    }
}

fn sweep(start: StartSpec, window: bool) -> Experiment {
    Experiment::Sweep {
        start,
        hold_after: None,
        hermitian_reference: false,
        window: window.then(WindowSettings::default),
    }
}

fn variant(label: &str, g: Option<f64>, rate: Option<f64>, start: Option<StartSpec>) -> Variant {
    Variant {
        g,
        sweep_rate: rate,
        start,
        ..Variant::labelled(label)
    }
}

fn occupations(ttilde: f64, n: [f64; 3], sz: f64) -> Option<StartSpec> {
    Some(StartSpec::Occupations {
        ttilde,
        occupations: n.to_vec(),
        sz,
    })
}

fn lyapunov(ttilde: &[f64]) -> Experiment {
    Experiment::Lyapunov {
        ttilde: ttilde.to_vec(),
        lyapunov: LyapunovSettings::default(),
        ensemble: Some(EnsembleSettings {
            ttilde: ttilde.to_vec(),
            samples: 10,
            perturbation: 1e-3,
            horizon: 2000.0,
            n_out: 200,
        }),
    }
}

fn with_variants(mut c: ExperimentConfig, variants: Vec<Variant>) -> ExperimentConfig {
    c.variants = variants;
    c
}

/// Fully resolved configuration for a named figure.
pub fn figure_preset(name: &str) -> Result<ExperimentConfig> {
    let ssp0 = StartSpec::Ssp { ttilde: 0.0 };
    let c = match name {
        "fig2-fast" => config(name, three(0.2, FAST_RATE), sweep(ssp0, false)),
        "fig2-slow" => config(name, three(0.2, SLOW_RATE), sweep(ssp0, true)),
        "fig2-restart" => with_variants(
            config(name, three(0.2, FAST_RATE), sweep(ssp0, true)),
            vec![
                variant("fast", None, Some(FAST_RATE), occupations(1.9697, [19.4542, 0.0150, 0.0396], -0.0088)),
                variant("slow", None, Some(SLOW_RATE), occupations(2.9394, [12.8592, 0.0073, 6.6399], -0.0065)),
            ],
        ),
        "fig3" => config(name, three(0.2, FAST_RATE), lyapunov(&[1.5, 2.8, 4.0])),
        "fig4" => with_variants(
            config(name, three(0.2, FAST_RATE), Experiment::Window(WindowSettings::default())),
            [0.0, 0.1, 0.2, 0.4]
                .iter()
                .map(|g| variant(&format!("g{g}"), Some(*g), None, None))
                .collect(),
        ),
        "fig5" => with_variants(
            config(
                name,
                three(0.2, FAST_RATE),
                Experiment::Scan(ScanSettings {
                    lo: 1e-5,
                    hi: 1e-1,
                    per_decade: 60,
                    statistic: Statistic::TailMean,
                    refine: true,
                }),
            ),
            [0.0, 0.1, 0.2, 0.4]
                .iter()
                .map(|g| variant(&format!("g{g}"), Some(*g), None, None))
                .collect(),
        ),
        "fig6-linear" => config(
            name,
            (
                ChainParams::chain(4, PRESET_DETUNING, 0.0, PRESET_PHOTONS),
                PulseProtocol::chain(4, 0.00379),
            ),
            sweep(ssp0, false),
        ),
        "fig6-nonlinear" => config(
            name,
            (
                ChainParams::chain(4, PRESET_DETUNING, 0.2, PRESET_PHOTONS),
                PulseProtocol::chain(4, 0.0101),
            ),
            sweep(ssp0, true),
        ),
        "figS1" => with_variants(
            config(
                name,
                three(0.2, 0.0303),
                Experiment::Quantum {
                    initial: QuantumInitial::Fock {
                        occupations: vec![20, 0, 0],
                        qubit: 0,
                    },
                    compare: true,
                    onset_fraction: stirap_core::quantum::ONSET_FRACTION,
                    window: Some(WindowSettings::default()),
                },
            ),
            vec![
                variant("linear", Some(0.0), Some(0.0303), None),
                variant("fast", Some(0.2), Some(0.0303), None),
                variant("slow", Some(0.2), Some(0.0012), None),
            ],
        ),
        "figS2" => {
            let (params, protocol) = three(0.2, FAST_RATE);
            with_variants(
                config(
                    name,
                    (params.with_dissipation(1e-4, 1e-4), protocol),
                    Experiment::Sweep {
                        start: ssp0,
                        hold_after: Some(1e5),
                        hermitian_reference: true,
                        window: Some(WindowSettings::default()),
                    },
                ),
                vec![
                    variant("fast", None, Some(FAST_RATE), None),
                    variant("slow", None, Some(0.0012), None),
                ],
            )
        }
        "figS3" => with_variants(
            config(name, three(0.4, FAST_RATE), sweep(ssp0, true)),
            vec![
                variant("fast", None, Some(FAST_RATE), None),
                variant("slow", None, Some(1.2121e-3), None),
                variant("fast-restart", None, Some(FAST_RATE), occupations(2.1212, [19.3819, 0.0475, 0.0798], -0.0091)),
                variant("slow-restart", None, Some(1.2121e-3), occupations(2.7273, [16.7613, 0.035, 2.7105], -0.0068)),
            ],
        ),
        "figS4" => config(name, three(0.4, FAST_RATE), lyapunov(&[1.5, 2.5, 4.0])),
        "bounds" => config(
            name,
            three(0.2, FAST_RATE),
            Experiment::BoundCheck {
                couplings: vec![0.1, 0.2, 0.4],
                scan: ScanSettings {
                    lo: 1e-3,
                    hi: 1e-1,
                    per_decade: 40,
                    statistic: Statistic::TailMean,
                    refine: true,
                },
                window: WindowSettings::default(),
            },
        ),
        _ => {
            return Err(CliError::Validation(format!(
                "unknown preset {name:?}; known: {}",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(c)
}
