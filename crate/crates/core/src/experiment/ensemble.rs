use rayon::prelude::*;

use crate::dynamics::{run_on, run_seed, CurveAccumulator, DecayCurves, RunConfig, Trajectory};
use crate::energy::Hamiltonian;
use crate::error::{Error, Result};
use crate::lattice::Lattice;

/// Environment variable read for the worker count when none is given explicitly.
pub const WORKERS_ENV: &str = "ANYONMEM_WORKERS";

pub fn resolve_workers(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse().ok()))
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Base seed of the ensemble at one lattice size.
pub fn size_seed(base: u64, size: usize) -> u64 {
    run_seed(base, (1u64 << 40) + size as u64)
}

/// Rough resident bytes of `workers` concurrent trajectories at size `L`:
/// potentials, rate tree, occupation flags and decoder scratch per worker,
/// plus the shared coupling table.
pub fn memory_estimate(size: usize, workers: usize) -> u64 {
    let cells = (size * size) as u64;
    let per_worker = cells * (8 + 16 + 3 + 200);
    per_worker * workers as u64 + cells * 8
}

pub(crate) fn check_memory(size: usize, workers: usize, budget_mb: u64) -> Result<()> {
    let need = memory_estimate(size, workers);
    let budget = budget_mb.saturating_mul(1 << 20);
    if need > budget {
        let per = memory_estimate(size, 1);
        return Err(Error::Config(format!(
            "L = {size} with {workers} workers needs about {} MiB but memory_budget_mb = {budget_mb}; \
             use at most {} workers or raise the budget",
            need >> 20,
            (budget / per.max(1)).max(1)
        )));
    }
    Ok(())
}

/// Ensemble averages with bookkeeping.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub size: usize,
    pub base_seed: u64,
    pub curves: DecayCurves,
    pub events: u64,
    /// Runs whose rates all vanished before `t_max`.
    pub frozen: usize,
}

/// Runs `runs` trajectories seeded `run_seed(base_seed, i)` and averages them in index order.
pub fn run_ensemble(config: &RunConfig, runs: usize, base_seed: u64, workers: usize) -> Result<Ensemble> {
    config.validate()?;
    if runs == 0 {
        return Err(Error::InvalidParameter("ensemble needs at least one run".into()));
    }
    let lattice = Lattice::new(config.size)?;
    let ham = Hamiltonian::new(&lattice, config.interaction)?;
    let times = config.schedule.times(config.t_max)?;
    let mut acc = CurveAccumulator::new(times);
    let (mut events, mut frozen) = (0u64, 0usize);
    let workers = workers.max(1);
    let mut absorb = |t: Trajectory, acc: &mut CurveAccumulator| -> Result<()> {
        events += t.events;
        frozen += t.frozen as usize;
        acc.push(&t)
    };
    if workers == 1 {
        for i in 0..runs {
            absorb(run_on(&lattice, &ham, config, run_seed(base_seed, i as u64))?, &mut acc)?;
        }
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
        let chunk = workers * 8;
        for start in (0..runs).step_by(chunk) {
            let end = (start + chunk).min(runs);
            let batch: Vec<Result<Trajectory>> = pool.install(|| {
                (start..end)
                    .into_par_iter()
                    .map(|i| run_on(&lattice, &ham, config, run_seed(base_seed, i as u64)))
                    .collect()
            });
            for t in batch {
                absorb(t?, &mut acc)?;
            }
        }
    }
    Ok(Ensemble {
        size: config.size,
        base_seed,
        curves: acc.finish(),
        events,
        frozen,
    })
}
