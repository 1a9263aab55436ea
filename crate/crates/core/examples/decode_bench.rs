//! Per-readout decoding cost on i.i.d. syndromes: graph construction and matching times.

use anyonmem::decoder::{build_matching_graph, min_weight_perfect_matching, MatchingMode};
use anyonmem::{ErrorPattern, Lattice};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (l, f) in [(32usize, 0.1), (64, 0.08), (64, 0.1), (64, 0.12)] {
        let lat = Lattice::new(l).unwrap();
        let reps = 20;
        let (mut tg, mut tm) = (0.0, 0.0);
        for _ in 0..reps {
            let flips: Vec<usize> = (0..lat.num_edges()).filter(|_| rng.gen::<f64>() < f).collect();
            let p = ErrorPattern::from_flips(&lat, None, flips);
            let t0 = Instant::now();
            let g = build_matching_graph(&lat, &p.anyons(), MatchingMode::default()).unwrap();
            tg += t0.elapsed().as_secs_f64();
            let t0 = Instant::now();
            min_weight_perfect_matching(&g).unwrap();
            tm += t0.elapsed().as_secs_f64();
        }
        println!("L={l} f={f} graph {:.2} ms match {:.2} ms", tg * 1e3 / reps as f64, tm * 1e3 / reps as f64);
    }
}
