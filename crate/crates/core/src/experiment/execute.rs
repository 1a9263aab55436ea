use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::ensemble::{check_memory, run_ensemble, size_seed, Ensemble};
use super::threshold::threshold_scan;
use super::{ExperimentConfig, ExperimentKind};
use crate::analytics::{
    fit_fc, lifetime_interacting, single_pair_bare_z, single_pair_corrected_z, FcFit, Regime,
};
use crate::bath::BathSpec;
use crate::cavity::{bogoliubov_frequencies, effective_parameters, second_order_shift, CavitySpec};
use crate::dynamics::{decay_threshold_time, run_seed, Crossing, InitialState, SampleSchedule};
use crate::energy::InteractionSpec;
use crate::equilibrium::{
    exact_partition_equilibrium, metropolis_sample, nonsplit_pair_ode, pair_partition_quasistationary, solve_mean_field,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    /// Statistics too weak to locate the requested feature.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub status: Status,
    pub config_hash: String,
    pub files: Vec<PathBuf>,
    pub summary: Value,
}

fn interp(t: &[f64], y: &[f64], x: f64) -> f64 {
    match t.iter().position(|&s| s >= x) {
        None => *y.last().expect("non-empty"),
        Some(0) => y[0],
        Some(k) => y[k - 1] + (x - t[k - 1]) / (t[k] - t[k - 1]) * (y[k] - y[k - 1]),
    }
}

#[derive(Debug, Clone)]
pub struct LifetimePoint {
    pub ensemble: Ensemble,
    /// First crossing of `⟨Z_ec⟩` through the threshold level.
    pub tau: Crossing,
    /// Crossing through the full-decay level.
    pub full_decay: Crossing,
    /// Mean flipped-spin fraction at the full-decay time.
    pub flipped_fraction: Option<f64>,
    /// Predicted lifetime per unit `f_c`.
    pub unit_tau: f64,
    pub unit_tau_asymptotic: Option<f64>,
    pub regime: Regime,
}

#[derive(Debug, Clone)]
pub struct LifetimeScan {
    pub points: Vec<LifetimePoint>,
    /// Present when at least three sizes crossed the threshold level.
    pub fit: Option<FcFit>,
}

impl LifetimeScan {
    /// `f_c` used for predictions: configured, else fitted.
    pub fn f_c(&self, config: &ExperimentConfig) -> Option<f64> {
        config.lifetime.f_c.or(self.fit.map(|f| f.f_c))
    }
}

fn unit_prediction(size: usize, spec: &InteractionSpec<f64>, bath: &BathSpec<f64>) -> Result<(f64, Option<f64>, Regime)> {
    let p = lifetime_interacting(size, spec, bath, 0.1)?;
    Ok((p.tau / 0.1, p.tau_asymptotic.map(|t| t / 0.1), p.regime))
}

/// Threshold and full-decay times of `⟨Z_ec⟩` at every size, with the
/// matching predictions and an `f_c` fit.
pub fn lifetime_scan(config: &ExperimentConfig, workers: usize) -> Result<LifetimeScan> {
    let mut points = Vec::new();
    for &size in &config.sizes {
        check_memory(size, workers, config.memory_budget_mb)?;
        let ensemble = run_ensemble(&config.run_config(size), config.runs, size_seed(config.seed, size), workers)?;
        let c = &ensemble.curves;
        let z_ec: Vec<f64> = c.z_ec.iter().map(|s| s.mean).collect();
        let tau = decay_threshold_time(&c.t, &z_ec, config.lifetime.level)?;
        let full_decay = decay_threshold_time(&c.t, &z_ec, config.lifetime.full_decay_level)?;
        let flipped: Vec<f64> = c.flipped.iter().map(|s| s.mean).collect();
        let edges = 2.0 * (size * size) as f64;
        let flipped_fraction = full_decay.time().map(|t| interp(&c.t, &flipped, t) / edges);
        let (unit_tau, unit_tau_asymptotic, regime) = unit_prediction(size, &config.interaction, &config.bath)?;
        points.push(LifetimePoint {
            ensemble,
            tau,
            full_decay,
            flipped_fraction,
            unit_tau,
            unit_tau_asymptotic,
            regime,
        });
    }
    let crossed: Vec<(f64, f64)> = points.iter().filter_map(|p| p.tau.time().map(|t| (t, p.unit_tau))).collect();
    let fit = if crossed.len() >= 3 {
        let (m, u): (Vec<f64>, Vec<f64>) = crossed.into_iter().unzip();
        Some(fit_fc(&m, &u)?)
    } else {
        None
    };
    Ok(LifetimeScan { points, fit })
}

#[derive(Debug, Clone)]
pub struct NonsplitPoint {
    pub ensemble: Ensemble,
    /// Pair rate equation at the sample times.
    pub n_ode: Vec<f64>,
    /// Self-consistent plateau of the rate equation.
    pub n_fixed_point: f64,
    /// Quasi-stationary anyon number from the partition sum over nonsplit pairs.
    pub n_star: f64,
    /// `e^{-N(t)/2L}` from the simulated anyon number.
    pub z_predicted: Vec<f64>,
}

/// Early-time anyon number and logical readout against the pair rate equation.
pub fn nonsplit_pair(config: &ExperimentConfig, workers: usize) -> Result<Vec<NonsplitPoint>> {
    let mut out = Vec::new();
    for &size in &config.sizes {
        check_memory(size, workers, config.memory_budget_mb)?;
        let ensemble = run_ensemble(&config.run_config(size), config.runs, size_seed(config.seed, size), workers)?;
        let ode = nonsplit_pair_ode(size, &config.interaction, &config.bath, config.t_max.max(1e-9), 4001)?;
        let t = &ensemble.curves.t;
        let n_ode = t.iter().map(|&x| ode.at(x)).collect();
        let z_predicted = ensemble
            .curves
            .anyons
            .iter()
            .map(|s| (-s.mean / (2.0 * size as f64)).exp())
            .collect();
        out.push(NonsplitPoint {
            n_ode,
            n_fixed_point: ode.quasi_stationary,
            n_star: pair_partition_quasistationary(size, &config.interaction, config.bath.temperature())?,
            z_predicted,
            ensemble,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SinglePairPoint {
    pub gamma0: f64,
    pub s: Vec<f64>,
    pub ensemble: Ensemble,
    pub z_theory: Vec<f64>,
    pub z_ec_theory: Vec<f64>,
}

/// One adjacent pair diffusing without creation or annihilation, sampled at
/// fixed `s = γ(0) t / L²`.
pub fn single_pair(config: &ExperimentConfig, workers: usize) -> Result<Vec<SinglePairPoint>> {
    let gamma0 = match config.bath {
        BathSpec::ExplicitRates { gamma0, gamma_minus, .. } if gamma_minus == 0.0 => gamma0,
        _ => return Err(Error::Config("single-pair runs need an explicit-rate bath with gamma_minus = 0".into())),
    };
    let mut out = Vec::new();
    for &size in &config.sizes {
        let l2 = (size * size) as f64;
        let s = config.single_pair.s_values.clone();
        let times: Vec<f64> = s.iter().map(|x| x * l2 / gamma0).collect();
        let mut rc = config.run_config(size);
        rc.t_max = *times.last().expect("validated non-empty");
        rc.schedule = SampleSchedule::Explicit { times: times.clone() };
        rc.initial = InitialState::RandomFlip;
        let ensemble = run_ensemble(&rc, config.runs, size_seed(config.seed, size), workers)?;
        let mut z_theory = vec![1.0];
        let mut z_ec_theory = vec![1.0];
        for &t in &times {
            z_theory.push(single_pair_bare_z(t, size, gamma0)?);
            z_ec_theory.push(single_pair_corrected_z(t, size, gamma0)?);
        }
        let mut s_all = vec![0.0];
        s_all.extend(s);
        out.push(SinglePairPoint {
            gamma0,
            s: s_all,
            ensemble,
            z_theory,
            z_ec_theory,
        });
    }
    Ok(out)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_curves(dir: &Path, e: &Ensemble, hash: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    for name in ["z", "z_ec", "anyons", "flipped"] {
        let path = dir.join(format!("curves_L{}_{name}.csv", e.size));
        e.curves.write_csv(name, hash, fs::File::create(&path)?)?;
        files.push(path);
    }
    Ok(())
}

fn crossing_value(c: Crossing) -> Value {
    match c {
        Crossing::At { t } => json!({ "t": t, "crossed": true }),
        Crossing::Never { t_max } => json!({ "t": t_max, "crossed": false }),
    }
}

#[derive(Serialize)]
struct ThresholdRow {
    #[serde(rename = "L")]
    size: usize,
    f: f64,
    z_ec: f64,
    stderr: f64,
    n: usize,
    config_hash: String,
}

#[derive(Serialize)]
struct LifetimeRow {
    #[serde(rename = "L")]
    size: usize,
    tau_measured: f64,
    crossed: bool,
    full_decay: f64,
    full_decay_crossed: bool,
    flipped_fraction: Option<f64>,
    tau_formula: Option<f64>,
    tau_asymptotic: Option<f64>,
    regime: &'static str,
    f_c: Option<f64>,
    config_hash: String,
}

#[derive(Serialize)]
struct EquilibriumRow {
    #[serde(rename = "L")]
    size: usize,
    alpha: f64,
    #[serde(rename = "A")]
    a: f64,
    #[serde(rename = "T")]
    temperature: f64,
    n_mf: f64,
    #[serde(rename = "N_mf")]
    count_mf: f64,
    epsilon_mf: f64,
    #[serde(rename = "N_metropolis")]
    n_metropolis: f64,
    stderr: f64,
    #[serde(rename = "N_exact")]
    n_exact: Option<f64>,
    config_hash: String,
}

#[derive(Serialize)]
struct NonsplitRow {
    t: f64,
    n_sim: f64,
    n_stderr: f64,
    n_ode: f64,
    z_sim: f64,
    z_stderr: f64,
    z_predicted: f64,
    config_hash: String,
}

#[derive(Serialize)]
struct SinglePairRow {
    #[serde(rename = "L")]
    size: usize,
    s: f64,
    t: f64,
    z: f64,
    z_stderr: f64,
    z_theory: f64,
    z_ec: f64,
    z_ec_stderr: f64,
    z_ec_theory: f64,
    config_hash: String,
}

#[derive(Serialize)]
struct PredictionRow {
    #[serde(rename = "L")]
    size: usize,
    tau_formula: f64,
    tau_asymptotic: Option<f64>,
    regime: &'static str,
    f_c: f64,
    n_mf: f64,
    epsilon_mf: f64,
    config_hash: String,
}

/// Runs the configured experiment, writes its files into `out`, and
/// finishes with `metadata.json`. Output does not depend on `workers`.
pub fn execute(config: &ExperimentConfig, out: &Path, workers: usize) -> Result<Outcome> {
    config.validate()?;
    fs::create_dir_all(out)?;
    let hash = config.hash();
    let mut files = Vec::new();
    let mut status = Status::Ok;
    let summary = match config.kind {
        ExperimentKind::Simulate => {
            let mut per = Vec::new();
            for &size in &config.sizes {
                check_memory(size, workers, config.memory_budget_mb)?;
                let e = run_ensemble(&config.run_config(size), config.runs, size_seed(config.seed, size), workers)?;
                write_curves(out, &e, &hash, &mut files)?;
                per.push(json!({ "L": size, "base_seed": e.base_seed, "events": e.events, "frozen_runs": e.frozen }));
            }
            json!({ "sizes": per })
        }
        ExperimentKind::Threshold => {
            let scan = threshold_scan(
                &config.sizes,
                &config.threshold.f_values,
                config.runs,
                config.seed,
                config.decoder,
                config.threshold.bootstrap,
                workers,
            )?;
            let mut rows = Vec::new();
            for c in &scan.curves {
                for (f, s) in c.f.iter().zip(&c.z_ec) {
                    rows.push(ThresholdRow {
                        size: c.size,
                        f: *f,
                        z_ec: s.mean,
                        stderr: s.stderr,
                        n: s.n,
                        config_hash: hash.clone(),
                    });
                }
            }
            let path = out.join("threshold.csv");
            write_csv(&path, &rows)?;
            files.push(path);
            if scan.f_c.is_none() {
                status = Status::Inconclusive;
            }
            json!({ "f_c": scan.f_c, "stderr": scan.stderr, "crossings": scan.crossings, "slopes": scan.slopes })
        }
        ExperimentKind::LifetimeScan => {
            let scan = lifetime_scan(config, workers)?;
            let f_c = scan.f_c(config);
            let mut rows = Vec::new();
            for p in &scan.points {
                write_curves(out, &p.ensemble, &hash, &mut files)?;
                let (tau, crossed) = match p.tau {
                    Crossing::At { t } => (t, true),
                    Crossing::Never { t_max } => (t_max, false),
                };
                let (full, full_crossed) = match p.full_decay {
                    Crossing::At { t } => (t, true),
                    Crossing::Never { t_max } => (t_max, false),
                };
                rows.push(LifetimeRow {
                    size: p.ensemble.size,
                    tau_measured: tau,
                    crossed,
                    full_decay: full,
                    full_decay_crossed: full_crossed,
                    flipped_fraction: p.flipped_fraction,
                    tau_formula: f_c.map(|f| f * p.unit_tau),
                    tau_asymptotic: f_c.and_then(|f| p.unit_tau_asymptotic.map(|u| f * u)),
                    regime: p.regime.as_str(),
                    f_c,
                    config_hash: hash.clone(),
                });
            }
            let path = out.join("lifetimes.csv");
            write_csv(&path, &rows)?;
            files.push(path);
            if f_c.is_none() {
                status = Status::Inconclusive;
            }
            json!({
                "f_c": f_c,
                "fit": scan.fit,
                "tau": scan.points.iter().map(|p| json!({ "L": p.ensemble.size, "threshold": crossing_value(p.tau), "full_decay": crossing_value(p.full_decay) })).collect::<Vec<_>>(),
            })
        }
        ExperimentKind::Equilibrium => {
            let alphas = if config.equilibrium.alphas.is_empty() {
                vec![config.interaction.alpha]
            } else {
                config.equilibrium.alphas.clone()
            };
            let t = config.bath.temperature();
            let mut rows = Vec::new();
            for &size in &config.sizes {
                for (k, &alpha) in alphas.iter().enumerate() {
                    let spec = InteractionSpec::new(config.interaction.j, config.interaction.a, alpha)?;
                    let mf = solve_mean_field(size, &spec, t)?;
                    let seed = run_seed(size_seed(config.seed, size), k as u64);
                    let m = metropolis_sample(size, &spec, t, config.equilibrium.sweeps, seed)?;
                    rows.push(EquilibriumRow {
                        size,
                        alpha,
                        a: spec.a,
                        temperature: t,
                        n_mf: mf.n_mf,
                        count_mf: mf.count,
                        epsilon_mf: mf.epsilon_mf,
                        n_metropolis: m.mean,
                        stderr: m.stderr,
                        n_exact: exact_partition_equilibrium(size, &spec, t).ok(),
                        config_hash: hash.clone(),
                    });
                }
            }
            let path = out.join("equilibrium.csv");
            write_csv(&path, &rows)?;
            files.push(path);
            json!({ "rows": rows.len() })
        }
        ExperimentKind::NonsplitPair => {
            let points = nonsplit_pair(config, workers)?;
            let mut per = Vec::new();
            for p in &points {
                let c = &p.ensemble.curves;
                let rows: Vec<NonsplitRow> = (0..c.t.len())
                    .map(|k| NonsplitRow {
                        t: c.t[k],
                        n_sim: c.anyons[k].mean,
                        n_stderr: c.anyons[k].stderr,
                        n_ode: p.n_ode[k],
                        z_sim: c.z[k].mean,
                        z_stderr: c.z[k].stderr,
                        z_predicted: p.z_predicted[k],
                        config_hash: hash.clone(),
                    })
                    .collect();
                let path = out.join(format!("nonsplit_L{}.csv", p.ensemble.size));
                write_csv(&path, &rows)?;
                files.push(path);
                per.push(json!({ "L": p.ensemble.size, "n_star": p.n_star, "n_fixed_point": p.n_fixed_point }));
            }
            json!({ "sizes": per })
        }
        ExperimentKind::SinglePair => {
            let points = single_pair(config, workers)?;
            let mut rows = Vec::new();
            for p in &points {
                let c = &p.ensemble.curves;
                for k in 0..c.t.len() {
                    rows.push(SinglePairRow {
                        size: p.ensemble.size,
                        s: p.s[k],
                        t: c.t[k],
                        z: c.z[k].mean,
                        z_stderr: c.z[k].stderr,
                        z_theory: p.z_theory[k],
                        z_ec: c.z_ec[k].mean,
                        z_ec_stderr: c.z_ec[k].stderr,
                        z_ec_theory: p.z_ec_theory[k],
                        config_hash: hash.clone(),
                    });
                }
            }
            let path = out.join("single_pair.csv");
            write_csv(&path, &rows)?;
            files.push(path);
            json!({ "rows": rows.len() })
        }
        ExperimentKind::Analytics => {
            let f_c = config.lifetime.f_c.unwrap_or(0.1);
            let mut rows = Vec::new();
            for &size in &config.sizes {
                let p = lifetime_interacting(size, &config.interaction, &config.bath, f_c)?;
                rows.push(PredictionRow {
                    size,
                    tau_formula: p.tau,
                    tau_asymptotic: p.tau_asymptotic,
                    regime: p.regime.as_str(),
                    f_c,
                    n_mf: p.density,
                    epsilon_mf: p.gap,
                    config_hash: hash.clone(),
                });
            }
            let path = out.join("predictions.csv");
            write_csv(&path, &rows)?;
            files.push(path);
            json!({ "rows": rows.len() })
        }
        ExperimentKind::Cavity => {
            let settings = config.cavity.as_ref().expect("validated");
            let spec = match &settings.honeycomb {
                Some(h) => CavitySpec::from_honeycomb(h, settings.spec.omega1, settings.spec.omega2, settings.spec.nb1, settings.spec.nb2)?,
                None => settings.spec,
            };
            let params = effective_parameters(&spec)?;
            let modes: Vec<Value> = settings
                .anyon_counts
                .iter()
                .map(|&n| {
                    let m = bogoliubov_frequencies(&spec, n);
                    json!({ "N": n, "Omega1": m.omega1, "Omega2": m.omega2, "theta": m.theta, "second_order_shift": second_order_shift(&spec, n).ok() })
                })
                .collect();
            let body = json!({
                "config_hash": hash,
                "spec": spec,
                "J_eff": params.j,
                "A_eff": params.a,
                "repulsive": params.a > 0.0,
                "weak_coupling": settings.honeycomb.map(|h| h.weak_coupling()),
                "modes": modes,
            });
            let path = out.join("cavity.json");
            fs::write(&path, serde_json::to_string_pretty(&body)?)?;
            files.push(path);
            body
        }
    };
    let metadata = json!({
        "config": config,
        "config_hash": hash,
        "code_version": env!("CARGO_PKG_VERSION"),
        "seed_rule": "trajectory i at size L uses run_seed(size_seed(seed, L), i)",
        "decoder": config.decoder,
        "status": status,
        "files": files.iter().map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned())).collect::<Vec<_>>(),
        "summary": summary,
    });
    let meta_path = out.join("metadata.json");
    fs::write(&meta_path, serde_json::to_string_pretty(&metadata)?)?;
    files.push(meta_path);
    Ok(Outcome {
        status,
        config_hash: hash,
        files,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::recipe;

    fn tmp(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("anyonmem-{name}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        dir
    }

    #[test]
    fn empty_run_writes_trivial_curves() {
        let mut cfg = recipe("fig2").unwrap();
        cfg.sizes = vec![8];
        cfg.runs = 1;
        cfg.t_max = 0.0;
        let dir = tmp("empty");
        let out = execute(&cfg, &dir, 1).unwrap();
        assert_eq!(out.status, Status::Ok);
        let text = fs::read_to_string(dir.join("curves_L8_z_ec.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("0,1,0,1,"));
        assert!(lines[1].ends_with(&out.config_hash));
        let meta: Value = serde_json::from_str(&fs::read_to_string(dir.join("metadata.json")).unwrap()).unwrap();
        assert_eq!(meta["config_hash"], json!(out.config_hash));
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn reruns_are_identical_across_worker_counts() {
        let mut cfg = recipe("fig5-ohmic").unwrap();
        cfg.sizes = vec![6];
        cfg.runs = 6;
        cfg.t_max = 5.0;
        let (a, b) = (tmp("rerun-a"), tmp("rerun-b"));
        execute(&cfg, &a, 1).unwrap();
        execute(&cfg, &b, 2).unwrap();
        for f in ["curves_L6_z_ec.csv", "lifetimes.csv", "metadata.json"] {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
        }
        fs::remove_dir_all(a).unwrap();
        fs::remove_dir_all(b).unwrap();
    }

    #[test]
    fn inconclusive_threshold() {
        let mut cfg = recipe("fig3").unwrap();
        cfg.sizes = vec![6, 8];
        cfg.runs = 20;
        cfg.threshold.f_values = vec![0.001, 0.005, 0.01];
        let dir = tmp("thr");
        assert_eq!(execute(&cfg, &dir, 1).unwrap().status, Status::Inconclusive);
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn cavity_and_analytics_outputs() {
        let dir = tmp("cav");
        let out = execute(&recipe("cavity").unwrap(), &dir, 1).unwrap();
        assert!(out.summary["A_eff"].as_f64().unwrap() > 0.0);
        let out = execute(&recipe("analytics").unwrap(), &dir, 1).unwrap();
        let text = fs::read_to_string(dir.join("predictions.csv")).unwrap();
        assert!(text.starts_with("L,tau_formula,tau_asymptotic,regime,f_c,n_mf,epsilon_mf,config_hash"));
        assert!(text.contains(&out.config_hash));
        fs::remove_dir_all(dir).unwrap();
    }
}
