//! Rejection-free continuous-time Monte Carlo of the single-spin-flip master
//! equation, with readout at scheduled sample times.
//!
//! Two rate engines share one interface. When the coupling is constant
//! (`alpha = 0` or `A = 0`) the flip energy of an edge depends only on how
//! many of its two plaquettes are occupied and on the total anyon number, so
//! edges are kept in three classes and an event costs O(1). Otherwise every
//! event shifts every potential, all `2L²` rates are recomputed and a Fenwick
//! tree over them is rebuilt.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::bath::BathSpec;
use crate::decoder::{self, MatchingMode};
use crate::energy::{ErrorPattern, Hamiltonian, InteractionSpec};
use crate::error::{Error, Result};
use crate::lattice::Lattice;

/// Times at which observables are recorded. Every schedule starts at `t = 0`
/// and ends at `t_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SampleSchedule {
    /// `per_decade` log-spaced points from `t_min` upwards.
    Log { per_decade: u32, t_min: f64 },
    /// `count` equally spaced points including both ends.
    Linear { count: usize },
    Explicit { times: Vec<f64> },
}

impl Default for SampleSchedule {
    fn default() -> Self {
        Self::Log {
            per_decade: 64,
            t_min: 1e-2,
        }
    }
}

impl SampleSchedule {
    pub fn times(&self, t_max: f64) -> Result<Vec<f64>> {
        if !(t_max >= 0.0) || !t_max.is_finite() {
            return Err(Error::InvalidParameter(format!("t_max must be finite and >= 0, got {t_max}")));
        }
        let mut out = vec![0.0];
        match self {
            Self::Log { per_decade, t_min } => {
                if *per_decade == 0 || !(*t_min > 0.0) {
                    return Err(Error::InvalidParameter("log schedule needs per_decade >= 1 and t_min > 0".into()));
                }
                let mut k = 0i32;
                loop {
                    let t = t_min * 10f64.powf(k as f64 / *per_decade as f64);
                    if t >= t_max * (1.0 - 1e-12) {
                        break;
                    }
                    out.push(t);
                    k += 1;
                }
            }
            Self::Linear { count } => {
                if *count < 2 {
                    return Err(Error::InvalidParameter("linear schedule needs at least 2 points".into()));
                }
                out.extend((1..*count - 1).map(|i| t_max * i as f64 / (*count - 1) as f64));
            }
            Self::Explicit { times } => {
                out = times.clone();
                if out.first() != Some(&0.0) {
                    out.insert(0, 0.0);
                }
                if out.windows(2).any(|w| !(w[1] > w[0])) || out.iter().any(|t| *t > t_max) {
                    return Err(Error::InvalidParameter(
                        "explicit sample times must be strictly increasing within [0, t_max]".into(),
                    ));
                }
                return Ok(out);
            }
        }
        if t_max > 0.0 {
            out.push(t_max);
        }
        Ok(out)
    }
}

/// Error pattern at `t = 0`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialState {
    #[default]
    Empty,
    /// One uniformly chosen flipped spin, i.e. a single adjacent anyon pair.
    RandomFlip,
    Flips { edges: Vec<usize> },
}

/// Everything needed to run one trajectory apart from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub size: usize,
    pub interaction: InteractionSpec<f64>,
    pub bath: BathSpec<f64>,
    pub t_max: f64,
    #[serde(default)]
    pub schedule: SampleSchedule,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default)]
    pub decoder: MatchingMode,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size < 2 {
            return Err(Error::InvalidSize(self.size));
        }
        self.interaction.validate()?;
        self.bath.validate()?;
        if let BathSpec::ExplicitRates { j, .. } = self.bath {
            if self.interaction.a != 0.0 {
                return Err(Error::InvalidBath("explicit rates only cover the non-interacting model (A = 0)".into()));
            }
            if (j - self.interaction.j).abs() > 1e-12 * j {
                return Err(Error::InvalidBath(format!(
                    "explicit-rate J = {j} differs from the Hamiltonian J = {}",
                    self.interaction.j
                )));
            }
        }
        self.schedule.times(self.t_max)?;
        Ok(())
    }
}

/// Per-run seed derived from a base seed.
pub fn run_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct Clock {
    sum: f64,
    carry: f64,
}

impl Clock {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Edges grouped by the number of occupied endpoints.
#[derive(Debug, Clone)]
struct ClassRates {
    members: [Vec<usize>; 3],
    class_of: Vec<u8>,
    slot: Vec<usize>,
    /// Per-class rates indexed by anyon number, filled lazily.
    by_count: Vec<Option<[f64; 3]>>,
}

impl ClassRates {
    fn new(lattice: &Lattice, pattern: &ErrorPattern) -> Self {
        let mut members: [Vec<usize>; 3] = Default::default();
        let mut class_of = vec![0u8; lattice.num_edges()];
        let mut slot = vec![0usize; lattice.num_edges()];
        for e in 0..lattice.num_edges() {
            let c = occupied_ends(lattice, pattern, e);
            class_of[e] = c as u8;
            slot[e] = members[c].len();
            members[c].push(e);
        }
        Self {
            members,
            class_of,
            slot,
            by_count: vec![None; lattice.num_plaquettes() + 1],
        }
    }

    fn rates(&mut self, ham: &Hamiltonian, bath: &BathSpec<f64>, count: usize) -> Result<[f64; 3]> {
        if let Some(r) = self.by_count[count] {
            return Ok(r);
        }
        let mut r = [0.0; 3];
        for (c, rate) in r.iter_mut().enumerate() {
            let feasible = match c {
                0 => count + 2 < self.by_count.len(),
                1 => count >= 1,
                _ => count >= 2,
            };
            if feasible {
                *rate = bath.rate(ham.constant_flip_delta(count, c))?;
            }
        }
        self.by_count[count] = Some(r);
        Ok(r)
    }

    fn total(&mut self, ham: &Hamiltonian, bath: &BathSpec<f64>, count: usize) -> Result<f64> {
        let r = self.rates(ham, bath, count)?;
        Ok((0..3).map(|c| r[c] * self.members[c].len() as f64).sum())
    }

    fn select(&self, r: [f64; 3], total: f64, rng: &mut ChaCha8Rng) -> usize {
        let mut u = rng.gen::<f64>() * total;
        let mut class = 2;
        for c in 0..3 {
            let w = r[c] * self.members[c].len() as f64;
            if u < w {
                class = c;
                break;
            }
            u -= w;
        }
        // guard against rounding pushing `u` past the last non-empty class
        while self.members[class].is_empty() || r[class] == 0.0 {
            class -= 1;
        }
        let list = &self.members[class];
        list[rng.gen_range(0..list.len())]
    }

    fn update(&mut self, lattice: &Lattice, pattern: &ErrorPattern, edge: usize) {
        for p in lattice.edge_plaquettes(edge) {
            for e in lattice.plaquette_edges(p) {
                let c = occupied_ends(lattice, pattern, e);
                let old = self.class_of[e] as usize;
                if c == old {
                    continue;
                }
                let s = self.slot[e];
                self.members[old].swap_remove(s);
                if s < self.members[old].len() {
                    let moved = self.members[old][s];
                    self.slot[moved] = s;
                }
                self.slot[e] = self.members[c].len();
                self.members[c].push(e);
                self.class_of[e] = c as u8;
            }
        }
    }
}

fn occupied_ends(lattice: &Lattice, pattern: &ErrorPattern, edge: usize) -> usize {
    lattice
        .edge_plaquettes(edge)
        .iter()
        .filter(|&&p| pattern.is_occupied(p))
        .count()
}

/// Fenwick tree over per-edge rates.
#[derive(Debug, Clone)]
struct TreeRates {
    rates: Vec<f64>,
    tree: Vec<f64>,
    total: f64,
}

impl TreeRates {
    fn new(n: usize) -> Self {
        Self {
            rates: vec![0.0; n],
            tree: vec![0.0; n + 1],
            total: 0.0,
        }
    }

    fn rebuild(&mut self, lattice: &Lattice, ham: &Hamiltonian, bath: &BathSpec<f64>, pattern: &ErrorPattern) -> Result<()> {
        for e in 0..self.rates.len() {
            self.rates[e] = bath.rate(ham.flip_delta(lattice, pattern, e))?;
        }
        let n = self.rates.len();
        self.tree[0] = 0.0;
        self.tree[1..].copy_from_slice(&self.rates);
        for i in 1..=n {
            let parent = i + (i & i.wrapping_neg());
            if parent <= n {
                self.tree[parent] += self.tree[i];
            }
        }
        self.total = self.prefix(n);
        Ok(())
    }

    fn prefix(&self, mut i: usize) -> f64 {
        let mut s = 0.0;
        while i > 0 {
            s += self.tree[i];
            i &= i - 1;
        }
        s
    }

    /// Smallest index whose inclusive prefix sum exceeds `u`.
    fn find(&self, mut u: f64) -> usize {
        let n = self.rates.len();
        let mut pos = 0;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= u {
                pos = next;
                u -= self.tree[next];
            }
            step >>= 1;
        }
        let mut e = pos.min(n - 1);
        // rounding can land on a zero-rate edge; walk back to a live one
        while self.rates[e] == 0.0 && e > 0 {
            e -= 1;
        }
        e
    }
}

#[derive(Debug, Clone)]
enum Engine {
    Classes(ClassRates),
    Tree(TreeRates),
}

/// One flip drawn from the current rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub edge: usize,
    pub dt: f64,
}

/// A single Markov chain over error patterns.
#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    lattice: &'a Lattice,
    ham: &'a Hamiltonian,
    bath: BathSpec<f64>,
    pattern: ErrorPattern,
    clock: Clock,
    rng: ChaCha8Rng,
    engine: Engine,
    events: u64,
}

impl<'a> Simulation<'a> {
    pub fn new(lattice: &'a Lattice, ham: &'a Hamiltonian, bath: BathSpec<f64>, pattern: ErrorPattern, seed: u64) -> Result<Self> {
        bath.validate()?;
        if !pattern.is_consistent(lattice) {
            return Err(Error::InvalidParameter("initial pattern is inconsistent".into()));
        }
        let pattern = if ham.tracks_potentials() && pattern.potentials().is_none() {
            ErrorPattern::from_flips(lattice, Some(ham), (0..lattice.num_edges()).filter(|&e| pattern.is_flipped(e)))
        } else {
            pattern
        };
        let engine = if ham.tracks_potentials() {
            let mut t = TreeRates::new(lattice.num_edges());
            t.rebuild(lattice, ham, &bath, &pattern)?;
            Engine::Tree(t)
        } else {
            Engine::Classes(ClassRates::new(lattice, &pattern))
        };
        Ok(Self {
            lattice,
            ham,
            bath,
            pattern,
            clock: Clock::default(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            engine,
            events: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.clock.value()
    }

    pub fn pattern(&self) -> &ErrorPattern {
        &self.pattern
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Cached total flip rate.
    pub fn total_rate(&mut self) -> Result<f64> {
        match &mut self.engine {
            Engine::Classes(c) => c.total(self.ham, &self.bath, self.pattern.anyon_count()),
            Engine::Tree(t) => Ok(t.total),
        }
    }

    /// Total rate summed edge by edge from the current pattern.
    pub fn total_rate_from_scratch(&self) -> Result<f64> {
        let mut sum = 0.0;
        for e in 0..self.lattice.num_edges() {
            let omega = self.ham.flip_delta(self.lattice, &self.pattern, e);
            sum += self.bath.rate(omega)?;
        }
        Ok(sum)
    }

    /// Draws the next event without applying it; `None` when every rate vanishes.
    pub fn draw(&mut self) -> Result<Option<Event>> {
        let total = self.total_rate()?;
        if !(total > 0.0) {
            return Ok(None);
        }
        let dt = self.rng.sample::<f64, _>(Exp1) / total;
        let edge = match &mut self.engine {
            Engine::Classes(c) => {
                let r = c.rates(self.ham, &self.bath, self.pattern.anyon_count())?;
                c.select(r, total, &mut self.rng)
            }
            Engine::Tree(t) => {
                let u = self.rng.gen::<f64>() * t.total;
                t.find(u)
            }
        };
        Ok(Some(Event { edge, dt }))
    }

    /// Advances the clock by `event.dt` and flips `event.edge`.
    pub fn apply(&mut self, event: Event) -> Result<()> {
        self.clock.add(event.dt);
        self.pattern.flip(self.lattice, self.ham, event.edge);
        self.events += 1;
        match &mut self.engine {
            Engine::Classes(c) => c.update(self.lattice, &self.pattern, event.edge),
            Engine::Tree(t) => t.rebuild(self.lattice, self.ham, &self.bath, &self.pattern)?,
        }
        Ok(())
    }

    pub fn step(&mut self) -> Result<Option<Event>> {
        let event = self.draw()?;
        if let Some(ev) = event {
            self.apply(ev)?;
        }
        Ok(event)
    }

    /// Observables of the current pattern at time `t`.
    pub fn observe(&self, t: f64, mode: MatchingMode) -> Result<Sample> {
        Ok(Sample {
            t,
            anyons: self.pattern.anyon_count(),
            flipped: self.pattern.flipped_count(),
            z_bare: self.pattern.logical_z(),
            z_ec: decoder::corrected_logical_z(self.lattice, &self.pattern, mode)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub anyons: usize,
    pub flipped: usize,
    pub z_bare: i8,
    pub z_ec: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub seed: u64,
    pub events: u64,
    /// Set when all rates vanished before `t_max`.
    pub frozen: bool,
    pub samples: Vec<Sample>,
}

pub fn initial_pattern(lattice: &Lattice, ham: &Hamiltonian, initial: &InitialState, rng: &mut ChaCha8Rng) -> Result<ErrorPattern> {
    let flips = match initial {
        InitialState::Empty => Vec::new(),
        InitialState::RandomFlip => vec![rng.gen_range(0..lattice.num_edges())],
        InitialState::Flips { edges } => {
            if let Some(&bad) = edges.iter().find(|&&e| e >= lattice.num_edges()) {
                return Err(Error::InvalidParameter(format!("edge {bad} out of range")));
            }
            edges.clone()
        }
    };
    Ok(ErrorPattern::from_flips(lattice, Some(ham), flips))
}

/// One trajectory on prebuilt geometry.
pub fn run_on(lattice: &Lattice, ham: &Hamiltonian, config: &RunConfig, seed: u64) -> Result<Trajectory> {
    let times = config.schedule.times(config.t_max)?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005E_ED0F_1A77_1CE5);
    let pattern = initial_pattern(lattice, ham, &config.initial, &mut init_rng)?;
    let mut sim = Simulation::new(lattice, ham, config.bath, pattern, seed)?;
    let mut samples = Vec::with_capacity(times.len());
    let mut next = 0;
    let mut frozen = false;
    while next < times.len() {
        match sim.draw()? {
            None => {
                frozen = true;
                while next < times.len() {
                    samples.push(sim.observe(times[next], config.decoder)?);
                    next += 1;
                }
            }
            Some(ev) => {
                let arrival = sim.time() + ev.dt;
                while next < times.len() && times[next] < arrival {
                    samples.push(sim.observe(times[next], config.decoder)?);
                    next += 1;
                }
                if next < times.len() {
                    sim.apply(ev)?;
                }
            }
        }
    }
    Ok(Trajectory {
        seed,
        events: sim.events(),
        frozen,
        samples,
    })
}

pub fn run(config: &RunConfig, seed: u64) -> Result<Trajectory> {
    config.validate()?;
    let lattice = Lattice::new(config.size)?;
    let ham = Hamiltonian::new(&lattice, config.interaction)?;
    run_on(&lattice, &ham, config, seed)
}

/// Mean with standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn stat(&self) -> Stat {
        let stderr = if self.n > 1 {
            (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
        } else {
            0.0
        };
        Stat {
            mean: self.mean,
            stderr,
            n: self.n,
        }
    }
}

/// Ensemble-averaged observables on a common time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurves {
    pub t: Vec<f64>,
    pub z: Vec<Stat>,
    pub z_ec: Vec<Stat>,
    pub anyons: Vec<Stat>,
    pub flipped: Vec<Stat>,
}

impl DecayCurves {
    pub fn runs(&self) -> usize {
        self.z.first().map_or(0, |s| s.n)
    }

    pub fn observable(&self, name: &str) -> Option<&[Stat]> {
        match name {
            "z" => Some(&self.z),
            "z_ec" => Some(&self.z_ec),
            "anyons" => Some(&self.anyons),
            "flipped" => Some(&self.flipped),
            _ => None,
        }
    }

    pub fn means(stats: &[Stat]) -> Vec<f64> {
        stats.iter().map(|s| s.mean).collect()
    }

    /// Writes `t, mean, stderr, n_runs, config_hash` rows for one observable.
    pub fn write_csv<W: std::io::Write>(&self, name: &str, config_hash: &str, out: W) -> Result<()> {
        let stats = self
            .observable(name)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown observable {name}")))?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "mean", "stderr", "n_runs", "config_hash"])?;
        for (t, s) in self.t.iter().zip(stats) {
            w.write_record([t.to_string(), s.mean.to_string(), s.stderr.to_string(), s.n.to_string(), config_hash.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Streaming accumulator; trajectories must be pushed in a fixed order for reproducible output.
#[derive(Debug, Clone)]
pub struct CurveAccumulator {
    t: Vec<f64>,
    acc: Vec<[Welford; 4]>,
}

impl CurveAccumulator {
    pub fn new(t: Vec<f64>) -> Self {
        let acc = vec![[Welford::default(); 4]; t.len()];
        Self { t, acc }
    }

    pub fn push(&mut self, trajectory: &Trajectory) -> Result<()> {
        if trajectory.samples.len() != self.t.len() || trajectory.samples.iter().zip(&self.t).any(|(s, t)| s.t != *t) {
            return Err(Error::ScheduleMismatch);
        }
        for (a, s) in self.acc.iter_mut().zip(&trajectory.samples) {
            a[0].push(s.z_bare as f64);
            a[1].push(s.z_ec as f64);
            a[2].push(s.anyons as f64);
            a[3].push(s.flipped as f64);
        }
        Ok(())
    }

    pub fn finish(self) -> DecayCurves {
        let col = |k: usize| self.acc.iter().map(|a| a[k].stat()).collect();
        DecayCurves {
            z: col(0),
            z_ec: col(1),
            anyons: col(2),
            flipped: col(3),
            t: self.t,
        }
    }
}

pub fn ensemble_average(trajectories: &[Trajectory]) -> Result<DecayCurves> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::InvalidParameter("no trajectories to average".into()))?;
    let mut acc = CurveAccumulator::new(first.samples.iter().map(|s| s.t).collect());
    for tr in trajectories {
        acc.push(tr)?;
    }
    Ok(acc.finish())
}

/// First downward crossing of a decay curve through a level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Crossing {
    At { t: f64 },
    /// The curve stays above the level up to `t_max`, a lower bound on the crossing.
    Never { t_max: f64 },
}

impl Crossing {
    pub fn time(self) -> Option<f64> {
        match self {
            Self::At { t } => Some(t),
            Self::Never { .. } => None,
        }
    }
}

pub fn decay_threshold_time(t: &[f64], values: &[f64], level: f64) -> Result<Crossing> {
    if t.len() != values.len() || t.is_empty() {
        return Err(Error::InvalidParameter("time and value arrays must be non-empty and equal length".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("level must lie in (0, 1), got {level}")));
    }
    if values[0] < level {
        return Err(Error::InvalidParameter("curve starts below the level".into()));
    }
    for k in 1..t.len() {
        if values[k] < level {
            let (t0, t1, v0, v1) = (t[k - 1], t[k], values[k - 1], values[k]);
            return Ok(Crossing::At {
                t: t0 + (v0 - level) / (v0 - v1) * (t1 - t0),
            });
        }
    }
    Ok(Crossing::Never {
        t_max: *t.last().expect("non-empty"),
    })
}

/// One uniform variate per spin; thresholding them at `f` gives i.i.d.
/// errors, and reusing them across `f` gives common random numbers.
pub fn iid_uniforms(lattice: &Lattice, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..lattice.num_edges()).map(|_| rng.gen::<f64>()).collect()
}

pub fn pattern_from_uniforms(lattice: &Lattice, uniforms: &[f64], f: f64) -> ErrorPattern {
    ErrorPattern::from_flips(lattice, None, (0..lattice.num_edges()).filter(|&e| uniforms[e] < f))
}

/// Every spin flipped independently with probability `f`.
pub fn inject_iid_errors(lattice: &Lattice, f: f64, seed: u64) -> Result<ErrorPattern> {
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::InvalidParameter(format!("error probability must lie in [0, 1], got {f}")));
    }
    Ok(pattern_from_uniforms(lattice, &iid_uniforms(lattice, seed), f))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(size: usize, a: f64, alpha: f64, bath: BathSpec<f64>, t_max: f64) -> RunConfig {
        RunConfig {
            size,
            interaction: InteractionSpec::new(1.0, a, alpha).unwrap(),
            bath,
            t_max,
            schedule: SampleSchedule::default(),
            initial: InitialState::Empty,
            decoder: MatchingMode::default(),
        }
    }

    #[test]
    fn schedules() {
        let log = SampleSchedule::default().times(10.0).unwrap();
        assert_eq!(log[0], 0.0);
        assert_eq!(log[1], 0.01);
        assert_eq!(*log.last().unwrap(), 10.0);
        assert_eq!(log.len(), 2 + 3 * 64);
        assert!(log.windows(2).all(|w| w[1] > w[0]));
        let lin = SampleSchedule::Linear { count: 5 }.times(2.0).unwrap();
        assert_eq!(lin, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(SampleSchedule::default().times(0.0).unwrap(), vec![0.0]);
        assert!(SampleSchedule::Explicit { times: vec![1.0, 1.0] }.times(2.0).is_err());
        assert_eq!(
            SampleSchedule::Explicit { times: vec![0.5, 1.0] }.times(2.0).unwrap(),
            vec![0.0, 0.5, 1.0]
        );
    }

    #[test]
    fn zero_duration_run_is_trivial() {
        let tr = run(&config(8, 0.0, 0.0, BathSpec::ohmic(0.3), 0.0), 1).unwrap();
        assert_eq!(tr.samples.len(), 1);
        let s = tr.samples[0];
        assert_eq!((s.anyons, s.z_bare, s.z_ec), (0, 1, 1));
    }

    #[test]
    fn seed_determinism() {
        for (a, alpha) in [(0.0, 0.0), (0.1, 0.0), (0.1, 1.0)] {
            let c = config(6, a, alpha, BathSpec::ohmic(0.4), 20.0);
            let a1 = run(&c, 42).unwrap();
            let a2 = run(&c, 42).unwrap();
            assert_eq!(serde_json::to_string(&a1).unwrap(), serde_json::to_string(&a2).unwrap());
            assert_ne!(run(&c, 43).unwrap(), a1);
        }
    }

    #[test]
    fn first_event_from_empty_is_a_uniform_pair_creation() {
        let lat = Lattice::new(4).unwrap();
        let ham = Hamiltonian::new(&lat, InteractionSpec::non_interacting(1.0)).unwrap();
        let bath = BathSpec::spin_boson(2, 0.3);
        let mut counts = vec![0usize; lat.num_edges()];
        let draws = 32_000;
        for seed in 0..draws {
            let mut sim = Simulation::new(&lat, &ham, bath, ErrorPattern::empty(&lat, Some(&ham)), seed).unwrap();
            let total = sim.total_rate().unwrap();
            assert!((total - 32.0 * bath.rate(-2.0).unwrap()).abs() < 1e-12 * total);
            let ev = sim.step().unwrap().unwrap();
            assert_eq!(sim.pattern().anyon_count(), 2);
            counts[ev.edge] += 1;
        }
        let expected = draws as f64 / 32.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 31 degrees of freedom, p = 1e-4 cutoff
        assert!(chi2 < 66.0, "chi2 = {chi2}");
    }

    #[test]
    fn isolated_pair_hops_at_the_direct_rate() {
        // one pair away from everything: 6 free neighbouring edges hop, the
        // shared edge annihilates, the rest create
        let lat = Lattice::new(8).unwrap();
        let ham = Hamiltonian::new(&lat, InteractionSpec::non_interacting(1.0)).unwrap();
        let bath = BathSpec::ohmic(0.3);
        let mut sim = Simulation::new(&lat, &ham, bath, ErrorPattern::from_flips(&lat, Some(&ham), [9]), 0).unwrap();
        let g = |w: f64| bath.rate(w).unwrap();
        let expected = 6.0 * g(0.0) + g(2.0) + 121.0 * g(-2.0);
        let total = sim.total_rate().unwrap();
        assert!((total - expected).abs() < 1e-12 * expected);
        assert!((sim.total_rate_from_scratch().unwrap() - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn cached_rates_stay_coherent() {
        for (a, alpha) in [(0.0, 0.0), (0.2, 0.0), (0.2, 0.5), (0.1, 1.0)] {
            let lat = Lattice::new(5).unwrap();
            let ham = Hamiltonian::new(&lat, InteractionSpec::new(1.0, a, alpha).unwrap()).unwrap();
            let mut sim = Simulation::new(&lat, &ham, BathSpec::ohmic(0.8), ErrorPattern::empty(&lat, Some(&ham)), 9).unwrap();
            let mut last_t = 0.0;
            for k in 0..20_000 {
                sim.step().unwrap();
                assert!(sim.time() >= last_t);
                last_t = sim.time();
                assert_eq!(sim.pattern().anyon_count() % 2, 0);
                if k % 2000 == 0 {
                    let cached = sim.total_rate().unwrap();
                    let fresh = sim.total_rate_from_scratch().unwrap();
                    assert!((cached - fresh).abs() <= 1e-9 * fresh, "a={a} alpha={alpha}");
                    assert!(sim.pattern().is_consistent(&lat));
                    assert!(sim.pattern().potential_drift(&ham) < 1e-9);
                }
            }
        }
    }

    #[test]
    fn non_interacting_density_relaxes_to_fermi_factor() {
        let c = RunConfig {
            schedule: SampleSchedule::Linear { count: 41 },
            ..config(16, 0.0, 0.0, BathSpec::ohmic(0.5), 200.0)
        };
        let mut acc = 0.0;
        let mut n = 0;
        for seed in 0..20 {
            let tr = run(&c, seed).unwrap();
            for s in &tr.samples[20..] {
                acc += s.anyons as f64;
                n += 1;
            }
        }
        let expected = 256.0 / ((2.0f64).exp() + 1.0);
        assert!((acc / n as f64 / expected - 1.0).abs() < 0.05, "{} vs {expected}", acc / n as f64);
    }

    #[test]
    fn clock_is_compensated() {
        let mut c = Clock::default();
        c.add(1e8);
        for _ in 0..1_000_000 {
            c.add(1e-9);
        }
        assert!((c.value() - (1e8 + 1e-3)).abs() < 1e-9);
    }

    #[test]
    fn averaging() {
        let tr = |z: i8| Trajectory {
            seed: 0,
            events: 0,
            frozen: false,
            samples: vec![Sample { t: 0.0, anyons: 2, flipped: 1, z_bare: z, z_ec: z }],
        };
        let single = ensemble_average(&[tr(1)]).unwrap();
        assert_eq!(single.z[0], Stat { mean: 1.0, stderr: 0.0, n: 1 });
        let mirrored = ensemble_average(&[tr(1), tr(-1)]).unwrap();
        assert_eq!(mirrored.z_ec[0].mean, 0.0);
        assert!((mirrored.z_ec[0].stderr - 1.0).abs() < 1e-15);
        let mut other = tr(1);
        other.samples[0].t = 1.0;
        assert!(matches!(ensemble_average(&[tr(1), other]), Err(Error::ScheduleMismatch)));
    }

    #[test]
    fn threshold_crossings() {
        let t: Vec<f64> = (0..=10).map(|k| k as f64).collect();
        let flat = vec![1.0; 11];
        assert_eq!(decay_threshold_time(&t, &flat, 0.9).unwrap(), Crossing::Never { t_max: 10.0 });
        let lin: Vec<f64> = t.iter().map(|x| 1.0 - x / 10.0).collect();
        let c = decay_threshold_time(&t, &lin, 0.9).unwrap().time().unwrap();
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iid_injection() {
        let lat = Lattice::new(100).unwrap();
        assert_eq!(inject_iid_errors(&lat, 0.0, 1).unwrap().flipped_count(), 0);
        let all = inject_iid_errors(&lat, 1.0, 1).unwrap();
        assert_eq!((all.flipped_count(), all.anyon_count()), (20_000, 0));
        let p = inject_iid_errors(&lat, 0.05, 5).unwrap();
        let sigma = (20_000.0f64 * 0.05 * 0.95).sqrt();
        assert!((p.flipped_count() as f64 - 1000.0).abs() < 3.0 * sigma);
        assert!(inject_iid_errors(&lat, 1.5, 1).is_err());
    }

    #[test]
    fn explicit_rates_need_the_free_model() {
        let c = config(4, 0.1, 0.0, BathSpec::equal_hop_annihilation(1.0, 1.0, 0.3), 1.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn distinct_run_seeds() {
        let seeds: std::collections::BTreeSet<u64> = (0..1000).map(|i| run_seed(7, i)).collect();
        assert_eq!(seeds.len(), 1000);
    }
}
