//! Equilibrium anyon populations: mean-field self-consistency, exact sums for
//! the constant coupling, Metropolis sampling of the lattice gas, and the
//! rate equation for nonsplit pairs.

use ode_solvers::{Dopri5, System, Vector1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::bath::BathSpec;
use crate::energy::{Hamiltonian, InteractionSpec};
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::scalar::Scalar;

/// `∫∫_{[-1/2, 1/2]²} r^{-alpha} dx dy`.
///
/// Reduced by symmetry to one octant in polar coordinates:
/// `c = 8 / (2 - alpha) ∫_0^{π/4} (2 cos θ)^{alpha - 2} dθ`.
pub fn c_alpha(alpha: f64) -> Result<f64> {
    if !(alpha < 2.0) {
        return Err(Error::DivergentIntegral(alpha));
    }
    if alpha < 0.0 {
        return Err(Error::InvalidInteraction(format!("alpha must be >= 0, got {alpha}")));
    }
    let out = quadrature::double_exponential::integrate(
        |t: f64| (2.0 * t.cos()).powf(alpha - 2.0),
        0.0,
        std::f64::consts::FRAC_PI_4,
        1e-14,
    );
    Ok(8.0 / (2.0 - alpha) * out.integral)
}

/// Self-consistent mean-field state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldSolution<S = f64> {
    /// Anyon density per plaquette.
    pub n_mf: S,
    /// `n_mf L²`.
    pub count: S,
    /// Self-consistent excitation energy `J + n_mf T L_alpha`.
    pub epsilon_mf: S,
    pub l_alpha: S,
    pub c_alpha: S,
    /// `|n - 1/(e^{beta J + n L_alpha} + 1)|` at the returned root.
    pub residual: S,
}

/// `L_alpha = c_alpha beta A L^{2 - alpha}`.
pub fn l_alpha<S: Scalar>(size: usize, spec: &InteractionSpec<S>, temperature: S) -> Result<S> {
    spec.validate()?;
    let c = S::lit(c_alpha(spec.alpha.to_f64_lossy())?);
    Ok(c * spec.a / temperature * S::from_usize_lossy(size).powf(S::lit(2.0) - spec.alpha))
}

/// `1 / (e^x + 1)` without overflow.
fn fermi<S: Scalar>(x: S) -> S {
    if x > S::zero() {
        let e = (-x).exp();
        e / (S::one() + e)
    } else {
        S::one() / (x.exp() + S::one())
    }
}

pub fn solve_mean_field<S: Scalar>(size: usize, spec: &InteractionSpec<S>, temperature: S) -> Result<MeanFieldSolution<S>> {
    if !(temperature > S::zero()) {
        return Err(Error::InvalidParameter(format!("temperature must be positive, got {temperature}")));
    }
    let la = l_alpha(size, spec, temperature)?;
    let beta_j = spec.j / temperature;
    let g = |n: S| n - fermi(beta_j + n * la);
    let (mut lo, mut hi) = (S::zero(), S::lit(0.5));
    // g(0) < 0 < g(1/2) and g is strictly increasing
    loop {
        let mid = (lo + hi) * S::lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > S::zero() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let n = if g(lo).abs() <= g(hi).abs() { lo } else { hi };
    let n_plaquettes = S::from_usize_lossy(size * size);
    Ok(MeanFieldSolution {
        n_mf: n,
        count: n * n_plaquettes,
        epsilon_mf: spec.j + n * temperature * la,
        l_alpha: la,
        c_alpha: S::lit(c_alpha(spec.alpha.to_f64_lossy())?),
        residual: g(n).abs(),
    })
}

/// Leading large-`L_alpha` density `(ln L - ln ln L - beta J) / L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Expansion<S = f64> {
    pub n: S,
    /// `ln L_alpha > max(beta J, |ln ln L_alpha|)`.
    pub in_regime: bool,
}

pub fn mean_field_expansion<S: Scalar>(l_alpha: S, beta_j: S) -> Expansion<S> {
    let ln_l = l_alpha.ln();
    let lnln = ln_l.ln();
    Expansion {
        n: (ln_l - lnln - beta_j) / l_alpha,
        in_regime: ln_l > beta_j.max(lnln.abs()),
    }
}

fn require_constant(spec: &InteractionSpec<f64>) -> Result<()> {
    spec.validate()?;
    if spec.alpha != 0.0 && spec.a != 0.0 {
        return Err(Error::Unsupported(format!(
            "exact partition sums need a distance-independent coupling, got alpha = {}",
            spec.alpha
        )));
    }
    Ok(())
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Mean of `N = 2k` under weights `C(m, j(k)) e^{-beta E_{2k}}`, summed until
/// terms past the peak fall below `1e-15` of the largest.
fn truncated_mean(kmax: usize, ln_weight: impl Fn(usize) -> f64) -> f64 {
    let cutoff = 1e-15f64.ln();
    let mut logs = Vec::new();
    let mut peak = f64::NEG_INFINITY;
    for k in 0..=kmax {
        let lw = ln_weight(k);
        if lw > peak {
            peak = lw;
        } else if lw < peak + cutoff {
            break;
        }
        logs.push(lw);
    }
    let (mut z, mut m) = (0.0, 0.0);
    for (k, lw) in logs.iter().enumerate() {
        let w = (lw - peak).exp();
        z += w;
        m += 2.0 * k as f64 * w;
    }
    m / z
}

/// Grand-canonical mean anyon number over even `N` with degeneracy `C(L², N)`.
pub fn exact_partition_equilibrium(size: usize, spec: &InteractionSpec<f64>, temperature: f64) -> Result<f64> {
    require_constant(spec)?;
    let m = size * size;
    let beta = 1.0 / temperature;
    Ok(truncated_mean(m / 2, |k| ln_binomial(m, 2 * k) - beta * spec.constant_energy(2 * k)))
}

/// Mean anyon number of `k` diluted single-spin errors, each a nonsplit pair,
/// with degeneracy `C(2L², k)`.
pub fn pair_partition_quasistationary(size: usize, spec: &InteractionSpec<f64>, temperature: f64) -> Result<f64> {
    require_constant(spec)?;
    let m = 2 * size * size;
    let beta = 1.0 / temperature;
    Ok(truncated_mean(m.min(size * size / 2), |k| {
        ln_binomial(m, k) - beta * spec.constant_energy(2 * k)
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetropolisResult {
    pub mean: f64,
    /// Batch-means standard error.
    pub stderr: f64,
    pub acceptance: f64,
    /// Anyon number after each retained sweep.
    pub samples: Vec<usize>,
}

/// Single-plaquette-toggle Metropolis over occupations `{n_p}` with weight
/// `exp(-beta/2 sum U n n)`. The first 20% of sweeps are discarded. Toggles do
/// not conserve the parity of `N`.
pub fn metropolis_sample(size: usize, spec: &InteractionSpec<f64>, temperature: f64, sweeps: usize, seed: u64) -> Result<MetropolisResult> {
    if sweeps == 0 {
        return Err(Error::InvalidParameter("need at least one sweep".into()));
    }
    if !(temperature > 0.0) {
        return Err(Error::InvalidParameter(format!("temperature must be positive, got {temperature}")));
    }
    let lattice = Lattice::new(size)?;
    let ham = Hamiltonian::new(&lattice, *spec)?;
    let beta = 1.0 / temperature;
    let n_sites = lattice.num_plaquettes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut occ = vec![false; n_sites];
    let mut count = 0usize;
    let mut phi = vec![0.0; n_sites];
    let tracks = ham.tracks_potentials();
    let burn = sweeps / 5;
    let mut samples = Vec::with_capacity(sweeps - burn);
    let mut accepted = 0u64;
    for sweep in 0..sweeps {
        for _ in 0..n_sites {
            let p = rng.gen_range(0..n_sites);
            let potential = if tracks {
                phi[p]
            } else {
                spec.a * (count - occ[p] as usize) as f64
            };
            let rise = if occ[p] { -(spec.j + potential) } else { spec.j + potential };
            if rise <= 0.0 || rng.gen::<f64>() < (-beta * rise).exp() {
                occ[p] ^= true;
                accepted += 1;
                if occ[p] {
                    count += 1;
                } else {
                    count -= 1;
                }
                if tracks {
                    ham.shift_potentials(&mut phi, p, if occ[p] { 1.0 } else { -1.0 });
                }
            }
        }
        if sweep >= burn {
            samples.push(count);
        }
    }
    let xs: Vec<f64> = samples.iter().map(|&n| n as f64).collect();
    let (mean, stderr) = batch_means(&xs, 32);
    Ok(MetropolisResult {
        mean,
        stderr,
        acceptance: accepted as f64 / (sweeps * n_sites) as f64,
        samples,
    })
}

/// Mean and batch-means standard error over `batches` contiguous blocks.
pub fn batch_means(xs: &[f64], batches: usize) -> (f64, f64) {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let b = batches.min(n);
    if b < 2 {
        return (mean, 0.0);
    }
    let size = n / b;
    let means: Vec<f64> = (0..b)
        .map(|i| xs[i * size..(i + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let mm = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - mm).powi(2)).sum::<f64>() / (b - 1) as f64;
    (mean, (var / b as f64).sqrt())
}

/// Solution of `dN/dt = 4L² γ(-2ε) - N γ(2ε)` with `ε = J + A N`, `N(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonsplitCurve {
    pub t: Vec<f64>,
    pub n: Vec<f64>,
    /// Root of `N = 4L² e^{-2 beta (J + A N)}`.
    pub quasi_stationary: f64,
}

impl NonsplitCurve {
    /// Linear interpolation of `N` at time `t`.
    pub fn at(&self, t: f64) -> f64 {
        match self.t.iter().position(|&x| x >= t) {
            None => *self.n.last().expect("non-empty"),
            Some(0) => self.n[0],
            Some(k) => {
                let w = (t - self.t[k - 1]) / (self.t[k] - self.t[k - 1]);
                self.n[k - 1] + w * (self.n[k] - self.n[k - 1])
            }
        }
    }
}

struct PairRateEquation {
    four_l2: f64,
    spec: InteractionSpec<f64>,
    bath: BathSpec<f64>,
}

impl System<f64, Vector1<f64>> for PairRateEquation {
    fn system(&self, _t: f64, y: &Vector1<f64>, dy: &mut Vector1<f64>) {
        let n = y[0];
        let eps = self.spec.j + self.spec.a * n;
        let up = self.bath.rate(-2.0 * eps).unwrap_or(f64::NAN);
        let down = self.bath.rate(2.0 * eps).unwrap_or(f64::NAN);
        dy[0] = self.four_l2 * up - n * down;
    }
}

pub fn nonsplit_pair_ode(
    size: usize,
    spec: &InteractionSpec<f64>,
    bath: &BathSpec<f64>,
    t_max: f64,
    points: usize,
) -> Result<NonsplitCurve> {
    require_constant(spec)?;
    bath.validate()?;
    if matches!(bath, BathSpec::ExplicitRates { .. }) && spec.a != 0.0 {
        return Err(Error::InvalidBath("explicit rates cannot evaluate interacting pair energies".into()));
    }
    if !(t_max > 0.0) || points < 2 {
        return Err(Error::InvalidParameter("need t_max > 0 and at least 2 output points".into()));
    }
    let four_l2 = 4.0 * (size * size) as f64;
    let system = PairRateEquation {
        four_l2,
        spec: *spec,
        bath: *bath,
    };
    let dx = t_max / (points - 1) as f64;
    let mut solver = Dopri5::new(system, 0.0, t_max, dx, Vector1::new(0.0), 1e-8, 1e-12);
    solver
        .integrate()
        .map_err(|e| Error::InvalidParameter(format!("pair rate equation: {e}")))?;
    let t = solver.x_out().clone();
    let n: Vec<f64> = solver.y_out().iter().map(|y| y[0]).collect();
    if n.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidBath("bath rate undefined along the pair rate equation".into()));
    }
    let quasi_stationary = pair_fixed_point(size, spec, 1.0 / bath.temperature());
    Ok(NonsplitCurve { t, n, quasi_stationary })
}

/// Root of `N = 4L² e^{-2 beta (J + A N)}` by bisection.
pub fn pair_fixed_point(size: usize, spec: &InteractionSpec<f64>, beta: f64) -> f64 {
    let four_l2 = 4.0 * (size * size) as f64;
    let h = |n: f64| n - four_l2 * (-2.0 * beta * (spec.j + spec.a * n)).exp();
    let (mut lo, mut hi) = (0.0, four_l2 * (-2.0 * beta * spec.j).exp());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// One row of an equilibrium parameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "L")]
    pub size: usize,
    pub alpha: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "T")]
    pub temperature: f64,
    pub n_mf: f64,
    #[serde(rename = "N_mf")]
    pub count_mf: f64,
    pub epsilon_mf: f64,
    #[serde(rename = "N_metropolis")]
    pub n_metropolis: f64,
    pub stderr: f64,
}

pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec(a: f64, alpha: f64) -> InteractionSpec<f64> {
        InteractionSpec::new(1.0, a, alpha).unwrap()
    }

    /// Independent Cartesian quadrature over one quadrant. `x = u²` tames the
    /// `x^{1 - alpha}` edge singularity and `y = e^s` the scale-`x` peak.
    fn c_alpha_cartesian(alpha: f64) -> f64 {
        use quadrature::double_exponential::integrate;
        let inner = |x: f64| {
            let f = |y: f64| (x * x + y * y).powf(-alpha / 2.0);
            let tail = integrate(|s: f64| f(s.exp()) * s.exp(), x.ln(), 0.5f64.ln(), 1e-14).integral;
            integrate(f, 0.0, x, 1e-14).integral + tail
        };
        4.0 * integrate(|u: f64| 2.0 * u * inner(u * u), 0.0, 0.5f64.sqrt(), 1e-13).integral
    }

    #[test]
    fn geometric_constant() {
        assert_relative_eq!(c_alpha(0.0).unwrap(), 1.0, max_relative = 1e-13);
        let c1 = 4.0 * (1.0 + 2f64.sqrt()).ln();
        assert_relative_eq!(c_alpha(1.0).unwrap(), c1, max_relative = 1e-10);
        for alpha in [0.25, 0.5, 1.0, 1.5] {
            assert_relative_eq!(c_alpha(alpha).unwrap(), c_alpha_cartesian(alpha), max_relative = 1e-8);
        }
        assert!(matches!(c_alpha(2.0), Err(Error::DivergentIntegral(_))));
    }

    #[test]
    fn mean_field_without_interaction_is_fermi() {
        let s = solve_mean_field(32, &spec(0.0, 0.0), 0.3).unwrap();
        assert_relative_eq!(s.n_mf, 1.0 / ((1.0f64 / 0.3).exp() + 1.0), max_relative = 1e-14);
        assert_eq!(s.epsilon_mf, 1.0);
    }

    #[test]
    fn mean_field_residual_and_monotonicity() {
        for alpha in [0.0, 0.5, 1.0, 1.5] {
            let mut prev = 1.0;
            for l in [8usize, 16, 32, 64, 128, 256, 1024] {
                let s = solve_mean_field(l, &spec(0.1, alpha), 0.5).unwrap();
                assert!(s.residual < 1e-12);
                assert!(s.n_mf > 0.0 && s.n_mf < 0.5);
                assert!(s.n_mf < prev, "density must fall with L");
                prev = s.n_mf;
                let reconstructed = 1.0 + s.n_mf * 0.5 * s.l_alpha;
                assert_relative_eq!(s.epsilon_mf, reconstructed, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn mean_field_in_single_precision() {
        let s32 = solve_mean_field::<f32>(32, &InteractionSpec::new(1.0f32, 0.1, 0.0).unwrap(), 0.5).unwrap();
        let s64 = solve_mean_field(32, &spec(0.1, 0.0), 0.5).unwrap();
        assert!((s32.n_mf as f64 / s64.n_mf - 1.0).abs() < 1e-5);
    }

    /// Density root found directly from `L_alpha`, bypassing the lattice.
    fn root(la: f64, beta_j: f64) -> f64 {
        let (mut lo, mut hi) = (0.0f64, 0.5f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid - fermi(beta_j + mid * la) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    #[test]
    fn expansion_converges_to_fixed_point() {
        let e = mean_field_expansion(std::f64::consts::E.exp(), 0.0);
        assert_relative_eq!(e.n, (std::f64::consts::E - 1.0) / std::f64::consts::E.exp(), max_relative = 1e-14);
        let bj = 10.0 / 3.0;
        let err = |la: f64| (mean_field_expansion(la, bj).n / root(la, bj) - 1.0).abs();
        assert!(err(1e6) < 0.15, "{}", err(1e6));
        assert!(err(1e9) < 0.08, "{}", err(1e9));
        assert!(err(1e12) < err(1e9) && err(1e9) < err(1e6));
        assert!(mean_field_expansion(1e6, bj).in_regime);
        assert!(!mean_field_expansion(10.0, bj).in_regime);
    }

    #[test]
    fn gap_grows_like_t_log_l() {
        for la in [1e4, 1e8, 1e12] {
            let n = root(la, 2.0);
            let eps_over_t = 2.0 + n * la;
            let ratio = eps_over_t / la.ln();
            assert!((ratio - 1.0).abs() < if la >= 1e12 { 0.12 } else { 0.35 }, "{la}: {ratio}");
        }
    }

    /// Sum over every even-N occupation configuration of an L x L lattice.
    fn brute_even(size: usize, s: &InteractionSpec<f64>, t: f64) -> f64 {
        let m = size * size;
        let (mut z, mut nz) = (0.0, 0.0);
        for mask in 0u32..(1 << m) {
            let n = mask.count_ones() as usize;
            if n % 2 == 1 {
                continue;
            }
            let w = (-s.constant_energy(n) / t).exp();
            z += w;
            nz += n as f64 * w;
        }
        nz / z
    }

    #[test]
    fn exact_partition_matches_enumeration() {
        for (l, a, t) in [(2usize, 0.1, 0.3), (3, 0.1, 0.3), (4, 0.1, 0.5), (4, 0.3, 1.0)] {
            let s = spec(a, 0.0);
            assert_relative_eq!(exact_partition_equilibrium(l, &s, t).unwrap(), brute_even(l, &s, t), max_relative = 1e-10);
        }
        assert!(exact_partition_equilibrium(8, &spec(1e6, 0.0), 0.5).unwrap() < 1e-100);
        assert!(matches!(exact_partition_equilibrium(8, &spec(0.1, 1.0), 0.5), Err(Error::Unsupported(_))));
    }

    #[test]
    fn pair_partition_limits() {
        assert!(pair_partition_quasistationary(16, &spec(0.1, 0.0), 1e-3).unwrap() < 1e-300);
        // without repulsion the pair count is binomial with p = e^{-2 beta J} / (1 + e^{-2 beta J})
        let t: f64 = 0.5;
        let q = (-2.0 / t).exp();
        let expected = 2.0 * 2.0 * 64.0 * q / (1.0 + q);
        assert_relative_eq!(pair_partition_quasistationary(8, &spec(0.0, 0.0), t).unwrap(), expected, max_relative = 1e-12);
    }

    #[test]
    fn pair_partition_tracks_the_rate_equation_plateau() {
        let s = spec(0.1, 0.0);
        let bath = BathSpec::spin_boson(2, 0.3);
        let curve = nonsplit_pair_ode(256, &s, &bath, 6.0, 61).unwrap();
        let plateau = *curve.n.last().unwrap();
        let exact = pair_partition_quasistationary(256, &s, 0.3).unwrap();
        assert!((plateau / exact - 1.0).abs() < 0.05, "{plateau} vs {exact}");
        assert_relative_eq!(plateau, curve.quasi_stationary, max_relative = 1e-6);
    }

    #[test]
    fn rate_equation_limits() {
        let bath = BathSpec::spin_boson(2, 0.3);
        let free = nonsplit_pair_ode(16, &spec(0.0, 0.0), &bath, 10.0, 11).unwrap();
        assert_eq!(free.n[0], 0.0);
        let fixed = 4.0 * 256.0 * (-2.0f64 / 0.3).exp();
        assert_relative_eq!(*free.n.last().unwrap(), fixed, max_relative = 1e-6);
        assert_relative_eq!(free.quasi_stationary, fixed, max_relative = 1e-12);
        assert_relative_eq!(free.at(10.0), fixed, max_relative = 1e-6);
    }

    #[test]
    fn metropolis_matches_exact_sum() {
        let s = spec(0.1, 0.0);
        let m = metropolis_sample(8, &s, 0.5, 40_000, 3).unwrap();
        let exact = exact_partition_equilibrium(8, &s, 0.5).unwrap();
        assert!((m.mean - exact).abs() < 4.0 * m.stderr, "{} ± {} vs {exact}", m.mean, m.stderr);
        let cold = metropolis_sample(6, &s, 0.02, 200, 1).unwrap();
        assert_eq!(cold.mean, 0.0);
    }

    #[test]
    fn batch_means_of_constant() {
        assert_eq!(batch_means(&[2.0; 100], 10), (2.0, 0.0));
    }

    #[test]
    fn sweep_csv_header() {
        let row = SweepRow {
            size: 16,
            alpha: 0.0,
            a: 0.1,
            temperature: 0.5,
            n_mf: 0.03,
            count_mf: 7.5,
            epsilon_mf: 1.2,
            n_metropolis: 7.6,
            stderr: 0.1,
        };
        let mut buf = Vec::new();
        write_sweep_csv(&[row], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("L,alpha,A,T,n_mf,N_mf,epsilon_mf,N_metropolis,stderr\n"));
    }

    proptest::proptest! {
        #[test]
        fn mean_field_residual_property(l in 2usize..2048, a in 0.0f64..1.0, alpha in 0.0f64..2.0, t in 0.05f64..3.0) {
            let spec = InteractionSpec::new(1.0, a, alpha).unwrap();
            let mf = solve_mean_field(l, &spec, t).unwrap();
            let direct = mf.n_mf - 1.0 / ((1.0 / t + mf.n_mf * mf.l_alpha).exp() + 1.0);
            proptest::prop_assert!(direct.abs() <= 1e-12);
            proptest::prop_assert!(mf.n_mf > 0.0 && mf.n_mf < 0.5);
        }
    }
}
