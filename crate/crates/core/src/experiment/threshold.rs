use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ensemble::size_seed;
use crate::decoder::{corrected_logical_z, MatchingMode};
use crate::dynamics::{iid_uniforms, pattern_from_uniforms, run_seed, Stat};
use crate::error::{Error, Result};
use crate::lattice::Lattice;

/// `⟨Z_ec⟩(f)` at one size. Syndrome `i` reuses the same uniforms at every `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCurve {
    pub size: usize,
    pub f: Vec<f64>,
    pub z_ec: Vec<Stat>,
    /// `samples[k][i]`: corrected readout of syndrome `i` at `f[k]`.
    #[serde(skip)]
    pub samples: Vec<Vec<i8>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCrossing {
    pub smaller: usize,
    pub larger: usize,
    pub f_cross: Option<f64>,
    /// Spread of the crossing over bootstrap resamples of the syndromes.
    pub bootstrap_stderr: Option<f64>,
    /// Fraction of resamples in which the curves still crossed.
    pub bootstrap_success: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdScan {
    pub curves: Vec<ThresholdCurve>,
    pub crossings: Vec<ThresholdCrossing>,
    /// Mean crossing, present only when every consecutive pair crossed.
    pub f_c: Option<f64>,
    pub stderr: Option<f64>,
    /// `-d⟨Z_ec⟩/df` at `f_c`, one per size.
    pub slopes: Vec<f64>,
}

fn mean_of(xs: &[i8], idx: Option<&[usize]>) -> f64 {
    match idx {
        None => xs.iter().map(|&v| v as f64).sum::<f64>() / xs.len() as f64,
        Some(ix) => ix.iter().map(|&i| xs[i] as f64).sum::<f64>() / ix.len() as f64,
    }
}

fn stat_of(xs: &[i8]) -> Stat {
    let n = xs.len();
    let mean = mean_of(xs, None);
    let var = if n > 1 {
        xs.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    Stat {
        mean,
        stderr: (var / n as f64).sqrt(),
        n,
    }
}

/// Root of `larger − smaller` where it first changes sign from positive to
/// negative, by linear interpolation on the grid.
pub fn curve_crossing(f: &[f64], smaller: &[f64], larger: &[f64]) -> Option<f64> {
    let d: Vec<f64> = larger.iter().zip(smaller).map(|(b, a)| b - a).collect();
    (0..d.len().saturating_sub(1)).find_map(|k| {
        (d[k] > 0.0 && d[k + 1] < 0.0).then(|| f[k] + d[k] / (d[k] - d[k + 1]) * (f[k + 1] - f[k]))
    })
}

fn slope_at(f: &[f64], z: &[f64], x: f64) -> f64 {
    let k = f.windows(2).position(|w| x >= w[0] && x <= w[1]).unwrap_or(0);
    -(z[k + 1] - z[k]) / (f[k + 1] - f[k])
}

fn scan_size(size: usize, f: &[f64], syndromes: usize, seed: u64, mode: MatchingMode, workers: usize) -> Result<ThresholdCurve> {
    let lattice = Lattice::new(size)?;
    let base = size_seed(seed, size);
    let one = |i: usize| -> Result<Vec<i8>> {
        let u = iid_uniforms(&lattice, run_seed(base, i as u64));
        f.iter()
            .map(|&p| corrected_logical_z(&lattice, &pattern_from_uniforms(&lattice, &u, p), mode))
            .collect()
    };
    let rows: Vec<Result<Vec<i8>>> = if workers <= 1 {
        (0..syndromes).map(one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
        pool.install(|| (0..syndromes).into_par_iter().map(one).collect())
    };
    let mut samples = vec![Vec::with_capacity(syndromes); f.len()];
    for row in rows {
        for (k, z) in row?.into_iter().enumerate() {
            samples[k].push(z);
        }
    }
    Ok(ThresholdCurve {
        size,
        f: f.to_vec(),
        z_ec: samples.iter().map(|s| stat_of(s)).collect(),
        samples,
    })
}

/// Sweeps i.i.d. error rates at each size and locates where `⟨Z_ec⟩(f)`
/// curves of consecutive sizes cross.
pub fn threshold_scan(
    sizes: &[usize],
    f: &[f64],
    syndromes: usize,
    seed: u64,
    mode: MatchingMode,
    bootstrap: usize,
    workers: usize,
) -> Result<ThresholdScan> {
    if sizes.len() < 2 || syndromes == 0 || f.len() < 2 {
        return Err(Error::InvalidParameter("threshold scans need two sizes, two rates and one syndrome".into()));
    }
    let mut sizes = sizes.to_vec();
    sizes.sort_unstable();
    let curves: Vec<ThresholdCurve> = sizes
        .iter()
        .map(|&l| scan_size(l, f, syndromes, seed, mode, workers))
        .collect::<Result<_>>()?;
    let means = |c: &ThresholdCurve| c.z_ec.iter().map(|s| s.mean).collect::<Vec<f64>>();
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed(seed, u64::MAX));
    let mut crossings = Vec::new();
    for pair in curves.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let f_cross = curve_crossing(f, &means(a), &means(b));
        let mut boots = Vec::with_capacity(bootstrap);
        for _ in 0..bootstrap {
            let ia: Vec<usize> = (0..syndromes).map(|_| rng.gen_range(0..syndromes)).collect();
            let ib: Vec<usize> = (0..syndromes).map(|_| rng.gen_range(0..syndromes)).collect();
            let za: Vec<f64> = a.samples.iter().map(|s| mean_of(s, Some(&ia))).collect();
            let zb: Vec<f64> = b.samples.iter().map(|s| mean_of(s, Some(&ib))).collect();
            if let Some(x) = curve_crossing(f, &za, &zb) {
                boots.push(x);
            }
        }
        let bootstrap_stderr = (boots.len() > 1).then(|| {
            let m = boots.iter().sum::<f64>() / boots.len() as f64;
            (boots.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (boots.len() - 1) as f64).sqrt()
        });
        crossings.push(ThresholdCrossing {
            smaller: a.size,
            larger: b.size,
            f_cross,
            bootstrap_stderr,
            bootstrap_success: if bootstrap == 0 { 0.0 } else { boots.len() as f64 / bootstrap as f64 },
        });
    }
    let found: Vec<f64> = crossings.iter().filter_map(|c| c.f_cross).collect();
    let (f_c, stderr, slopes) = if found.len() == crossings.len() {
        let m = found.iter().sum::<f64>() / found.len() as f64;
        let boot = crossings.iter().filter_map(|c| c.bootstrap_stderr).map(|s| s * s).sum::<f64>().sqrt() / found.len() as f64;
        let spread = if found.len() > 1 {
            (found.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (found.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        let slopes = curves.iter().map(|c| slope_at(f, &means(c), m)).collect();
        (Some(m), Some(boot.max(spread)), slopes)
    } else {
        (None, None, Vec::new())
    };
    Ok(ThresholdScan {
        curves,
        crossings,
        f_c,
        stderr,
        slopes,
    })
}
