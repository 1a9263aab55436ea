//! Desk-scale presets. Energies in units of `J`, times in units of `1/(κ_n J^n)`.
//! Full-scale runs use the same presets with larger `sizes` and `runs`.

use super::{CavitySettings, EquilibriumSettings, ExperimentConfig, ExperimentKind, LifetimeSettings, SinglePairSettings, ThresholdSettings};
use crate::bath::BathSpec;
use crate::cavity::{CavitySpec, HoneycombSpec};
use crate::decoder::MatchingMode;
use crate::dynamics::{InitialState, SampleSchedule};
use crate::energy::InteractionSpec;
use crate::error::{Error, Result};

pub const RECIPES: [&str; 10] = [
    "fig2",
    "fig3",
    "fig4",
    "fig5-ohmic",
    "fig5-superohmic",
    "fig6",
    "fig7",
    "fig8",
    "analytics",
    "cavity",
];

fn base(kind: ExperimentKind, sizes: &[usize], interaction: InteractionSpec<f64>, bath: BathSpec<f64>) -> ExperimentConfig {
    ExperimentConfig {
        kind,
        sizes: sizes.to_vec(),
        interaction,
        bath,
        runs: 1000,
        t_max: 0.0,
        schedule: SampleSchedule::default(),
        initial: InitialState::Empty,
        seed: 1,
        decoder: MatchingMode::default(),
        memory_budget_mb: 4096,
        threshold: ThresholdSettings::default(),
        lifetime: LifetimeSettings::default(),
        equilibrium: EquilibriumSettings::default(),
        single_pair: SinglePairSettings::default(),
        cavity: None,
    }
}

fn interacting(alpha: f64) -> InteractionSpec<f64> {
    InteractionSpec {
        j: 1.0,
        a: 0.1,
        alpha,
    }
}

fn log_schedule(per_decade: u32, t_min: f64) -> SampleSchedule {
    SampleSchedule::Log { per_decade, t_min }
}

pub fn recipe(name: &str) -> Result<ExperimentConfig> {
    let free = InteractionSpec::non_interacting(1.0);
    let cfg = match name {
        // step-like collapse of ⟨Z_ec⟩ at a size-independent time
        "fig2" => ExperimentConfig {
            t_max: 30.0,
            schedule: log_schedule(24, 0.1),
            ..base(ExperimentKind::Simulate, &[16, 32, 64], free, BathSpec::equal_hop_annihilation(1.0, 1.0, 0.3))
        },
        "fig3" => ExperimentConfig {
            runs: 2000,
            threshold: ThresholdSettings {
                f_values: vec![0.08, 0.09, 0.1, 0.11, 0.12],
                bootstrap: 200,
            },
            ..base(ExperimentKind::Threshold, &[16, 32, 64], free, BathSpec::ohmic(0.3))
        },
        "fig4" => ExperimentConfig {
            equilibrium: EquilibriumSettings {
                alphas: vec![0.0, 0.5, 1.0],
                sweeps: 20_000,
            },
            ..base(ExperimentKind::Equilibrium, &[16, 24, 32], interacting(0.0), BathSpec::ohmic(0.5))
        },
        "fig5-ohmic" => ExperimentConfig {
            t_max: 200.0,
            schedule: log_schedule(24, 0.1),
            ..base(ExperimentKind::LifetimeScan, &[8, 16, 32, 64], interacting(0.0), BathSpec::ohmic(0.3))
        },
        "fig5-superohmic" => ExperimentConfig {
            t_max: 5000.0,
            schedule: log_schedule(24, 1.0),
            ..base(ExperimentKind::LifetimeScan, &[8, 16, 32], interacting(0.0), BathSpec::spin_boson(2, 0.3))
        },
        "fig6" => ExperimentConfig {
            runs: 200,
            t_max: 2000.0,
            schedule: log_schedule(12, 1.0),
            ..base(ExperimentKind::NonsplitPair, &[64, 128], interacting(0.0), BathSpec::spin_boson(2, 0.3))
        },
        "fig7" => ExperimentConfig {
            t_max: 100.0,
            schedule: log_schedule(24, 0.1),
            ..base(ExperimentKind::LifetimeScan, &[8, 16, 32, 64], interacting(1.0), BathSpec::ohmic(0.3))
        },
        "fig8" => ExperimentConfig {
            runs: 10_000,
            single_pair: SinglePairSettings::default(),
            ..base(ExperimentKind::SinglePair, &[32, 64, 128], free, BathSpec::hopping_only(1.0, 1.0, 0.3))
        },
        "analytics" => ExperimentConfig {
            lifetime: LifetimeSettings {
                f_c: Some(0.022),
                ..LifetimeSettings::default()
            },
            ..base(ExperimentKind::Analytics, &[8, 16, 32, 64, 128, 256], interacting(0.0), BathSpec::ohmic(0.3))
        },
        "cavity" => {
            let honeycomb = HoneycombSpec {
                jx: 1.0,
                jy: 1.0,
                jz: 2.0,
                delta_x: 0.1,
                delta_y: 0.1,
            };
            ExperimentConfig {
                cavity: Some(CavitySettings {
                    spec: CavitySpec {
                        omega1: 1.01,
                        omega2: 1.0,
                        g: 0.0,
                        nb1: 100.0,
                        nb2: 0.0,
                        j0: 0.0,
                    },
                    honeycomb: Some(honeycomb),
                    anyon_counts: vec![0, 2, 10, 100],
                }),
                ..base(ExperimentKind::Cavity, &[], free, BathSpec::ohmic(0.3))
            }
        }
        _ => {
            return Err(Error::Config(format!(
                "unknown recipe {name:?}; available: {}",
                RECIPES.join(", ")
            )))
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_recipe_validates() {
        for name in RECIPES {
            recipe(name).unwrap();
        }
        assert!(recipe("fig9").unwrap_err().to_string().contains("fig2"));
    }
}
