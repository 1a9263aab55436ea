//! Plaquette-sector Hamiltonian with repulsive power-law anyon couplings.
//!
//! Energies are measured in units of the single-anyon gap `J`. The pair
//! coupling is `U(p, p) = 2J` and `U(p, q) = A / r^alpha` for `p != q`, with
//! `r` the Euclidean minimal-image distance between plaquette centres, so the
//! total energy is `N J + 1/2 sum_{p != q} U(p, q) n_p n_q`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionSpec<S = f64> {
    /// Single-anyon gap.
    pub j: S,
    /// Repulsion strength.
    pub a: S,
    /// Decay exponent of the repulsion.
    pub alpha: S,
}

impl<S: Scalar> InteractionSpec<S> {
    pub fn new(j: S, a: S, alpha: S) -> Result<Self> {
        let spec = Self { j, a, alpha };
        spec.validate()?;
        Ok(spec)
    }

    pub fn non_interacting(j: S) -> Self {
        Self {
            j,
            a: S::zero(),
            alpha: S::zero(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.j > S::zero()) || !self.j.is_finite() {
            return Err(Error::InvalidInteraction(format!("J must be positive, got {}", self.j)));
        }
        if !(self.a >= S::zero()) || !self.a.is_finite() {
            return Err(Error::InvalidInteraction(format!(
                "A must be non-negative (attractive couplings are not modelled), got {}",
                self.a
            )));
        }
        if !(self.alpha >= S::zero() && self.alpha < S::lit(2.0)) {
            return Err(Error::InvalidInteraction(format!(
                "alpha must lie in [0, 2), got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Energy depends on the anyon count only.
    pub fn is_constant(&self) -> bool {
        self.a == S::zero() || self.alpha == S::zero()
    }

    /// Off-diagonal coupling at distance `r > 0`.
    pub fn pair_coupling(&self, r: S) -> S {
        if self.alpha == S::zero() {
            self.a
        } else {
            self.a / r.powf(self.alpha)
        }
    }

    /// Total energy of `n` anyons when the coupling is distance independent.
    pub fn constant_energy(&self, n: usize) -> S {
        let n = S::from_usize_lossy(n);
        n * self.j + self.a * S::lit(0.5) * n * (n - S::one()).max(S::zero())
    }
}

/// `U(p, q)` on the torus.
pub fn coupling<S: Scalar>(spec: &InteractionSpec<S>, lattice: &Lattice, p: usize, q: usize) -> S {
    if p == q {
        S::lit(2.0) * spec.j
    } else {
        spec.pair_coupling(lattice.euclidean_distance(p, q))
    }
}

/// From-scratch `1/2 sum_{p,q} U(p, q) n_p n_q` over a list of occupied plaquettes.
pub fn total_energy_of<S: Scalar>(spec: &InteractionSpec<S>, lattice: &Lattice, anyons: &[usize]) -> S {
    let mut e = S::zero();
    for (i, &p) in anyons.iter().enumerate() {
        e = e + spec.j;
        for &q in &anyons[i + 1..] {
            e = e + coupling(spec, lattice, p, q);
        }
    }
    e
}

/// Value of the Ising form together with the configuration-independent offset
/// separating it from the lattice-gas energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsingEnergy<S = f64> {
    pub value: S,
    pub constant: S,
}

impl<S: Scalar> IsingEnergy<S> {
    /// Lattice-gas energy recovered from the Ising form.
    pub fn lattice_gas(&self) -> S {
        self.value + self.constant
    }
}

/// Offset `C` such that `H_lattice_gas = H_ising + C` with `s_p = 1 - 2 n_p`.
///
/// Substituting `n = (1 - s)/2` gives the constant
/// `L² J / 2 + 1/8 sum'_{p,q} U(p, q)`.
pub fn ising_constant<S: Scalar>(spec: &InteractionSpec<S>, lattice: &Lattice) -> S {
    let n = lattice.num_plaquettes();
    let mut off = S::zero();
    for q in 1..n {
        off = off + coupling(spec, lattice, 0, q);
    }
    // translation invariance: every row of U has the same off-diagonal sum
    let sum_all = off * S::from_usize_lossy(n);
    S::from_usize_lossy(n) * spec.j * S::lit(0.5) + sum_all / S::lit(8.0)
}

/// `-sum_p (J/2 + sum'_q U/4) s_p + 1/8 sum'_{p,q} U s_p s_q`.
pub fn ising_energy<S: Scalar>(spec: &InteractionSpec<S>, lattice: &Lattice, occupied: &[bool]) -> IsingEnergy<S> {
    let n = lattice.num_plaquettes();
    let spin = |p: usize| if occupied[p] { -S::one() } else { S::one() };
    let mut row = S::zero();
    for q in 1..n {
        row = row + coupling(spec, lattice, 0, q);
    }
    let field = spec.j * S::lit(0.5) + row / S::lit(4.0);
    let mut value = S::zero();
    for p in 0..n {
        value = value - field * spin(p);
        for q in 0..n {
            if q != p {
                value = value + coupling(spec, lattice, p, q) * spin(p) * spin(q) / S::lit(8.0);
            }
        }
    }
    IsingEnergy {
        value,
        constant: ising_constant(spec, lattice),
    }
}

/// `f64` Hamiltonian bound to one lattice size, with couplings tabulated by displacement.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    spec: InteractionSpec<f64>,
    size: usize,
    /// Off-diagonal `U` indexed by `(dy mod L) * L + (dx mod L)`; zero at the origin.
    table: Vec<f64>,
}

impl Hamiltonian {
    pub fn new(lattice: &Lattice, spec: InteractionSpec<f64>) -> Result<Self> {
        spec.validate()?;
        let l = lattice.size();
        let mut table = vec![0.0; l * l];
        for (q, slot) in table.iter_mut().enumerate().skip(1) {
            *slot = spec.pair_coupling(lattice.euclidean_distance(0, q));
        }
        Ok(Self { spec, size: l, table })
    }

    pub fn spec(&self) -> &InteractionSpec<f64> {
        &self.spec
    }

    /// Whether per-plaquette potentials must be cached (non-constant coupling).
    pub fn tracks_potentials(&self) -> bool {
        !self.spec.is_constant()
    }

    #[inline]
    fn offset(&self, from: usize, to: usize) -> usize {
        let l = self.size;
        let dx = (to % l + l - from % l) % l;
        let dy = (to / l + l - from / l) % l;
        dy * l + dx
    }

    pub fn coupling(&self, p: usize, q: usize) -> f64 {
        if p == q {
            2.0 * self.spec.j
        } else {
            self.table[self.offset(p, q)]
        }
    }

    /// `Phi_p = sum_{q != p} U(p, q) n_q` computed from scratch.
    pub fn potential_from_scratch(&self, pattern: &ErrorPattern, p: usize) -> f64 {
        pattern
            .occupied
            .iter()
            .enumerate()
            .filter(|&(q, &o)| o && q != p)
            .map(|(q, _)| self.table[self.offset(p, q)])
            .sum()
    }

    pub fn potential(&self, pattern: &ErrorPattern, p: usize) -> f64 {
        match &pattern.potentials {
            Some(phi) => phi[p],
            None => {
                let others = pattern.count - usize::from(pattern.occupied[p]);
                self.spec.a * others as f64
            }
        }
    }

    pub fn total_energy(&self, pattern: &ErrorPattern) -> f64 {
        if self.spec.is_constant() {
            return self.spec.constant_energy(pattern.count);
        }
        let anyons = pattern.anyons();
        let mut e = 0.0;
        for (i, &p) in anyons.iter().enumerate() {
            e += self.spec.j;
            for &q in &anyons[i + 1..] {
                e += self.table[self.offset(p, q)];
            }
        }
        e
    }

    /// `omega = E(current) - E(after flipping edge)`; positive when the flip releases energy.
    pub fn flip_delta(&self, lattice: &Lattice, pattern: &ErrorPattern, edge: usize) -> f64 {
        let [p, q] = lattice.edge_plaquettes(edge);
        let dp = if pattern.occupied[p] { -1.0 } else { 1.0 };
        let dq = if pattern.occupied[q] { -1.0 } else { 1.0 };
        let j = self.spec.j;
        let rise = dp * (j + self.potential(pattern, p)) + dq * (j + self.potential(pattern, q)) + dp * dq * self.coupling(p, q);
        -rise
    }

    /// `omega` for a flip whose endpoints hold `occupied_ends` anyons (0, 1 or 2)
    /// when `count` anyons are present and the coupling is constant.
    pub fn constant_flip_delta(&self, count: usize, occupied_ends: usize) -> f64 {
        let s = &self.spec;
        match occupied_ends {
            0 => s.constant_energy(count) - s.constant_energy(count + 2),
            1 => 0.0,
            _ => s.constant_energy(count) - s.constant_energy(count - 2),
        }
    }

    /// Adds `sign * U(q, p)` to every cached potential.
    pub(crate) fn shift_potentials(&self, phi: &mut [f64], p: usize, sign: f64) {
        let l = self.size;
        let (px, py) = (p % l, p / l);
        for qy in 0..l {
            let row = ((qy + l - py) % l) * l;
            let base = qy * l;
            // dx runs l - px, ..., l - 1, 0, ..., l - px - 1 as qx goes 0..l
            let split = px;
            let (head, tail) = phi[base..base + l].split_at_mut(split);
            let t = &self.table[row..row + l];
            for (k, v) in head.iter_mut().enumerate() {
                *v += sign * t[l - px + k];
            }
            for (k, v) in tail.iter_mut().enumerate() {
                *v += sign * t[k];
            }
        }
    }
}

/// Current set of sigma-x errors and the plaquette excitations they imply.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorPattern {
    flipped: Vec<bool>,
    occupied: Vec<bool>,
    count: usize,
    logical_flips: usize,
    potentials: Option<Vec<f64>>,
}

impl ErrorPattern {
    /// Error-free pattern. Potentials are cached when `hamiltonian` has a non-constant coupling.
    pub fn empty(lattice: &Lattice, hamiltonian: Option<&Hamiltonian>) -> Self {
        let potentials = hamiltonian
            .filter(|h| h.tracks_potentials())
            .map(|_| vec![0.0; lattice.num_plaquettes()]);
        Self {
            flipped: vec![false; lattice.num_edges()],
            occupied: vec![false; lattice.num_plaquettes()],
            count: 0,
            logical_flips: 0,
            potentials,
        }
    }

    pub fn from_flips(lattice: &Lattice, hamiltonian: Option<&Hamiltonian>, flips: impl IntoIterator<Item = usize>) -> Self {
        let mut pattern = Self::empty(lattice, None);
        for e in flips {
            pattern.toggle_edge(lattice, e);
        }
        if let Some(h) = hamiltonian.filter(|h| h.tracks_potentials()) {
            pattern.potentials = Some(
                (0..lattice.num_plaquettes())
                    .map(|p| h.potential_from_scratch(&pattern, p))
                    .collect(),
            );
        }
        pattern
    }

    fn toggle_edge(&mut self, lattice: &Lattice, edge: usize) -> [(usize, bool); 2] {
        self.flipped[edge] ^= true;
        if lattice.on_logical_z(edge) {
            if self.flipped[edge] {
                self.logical_flips += 1;
            } else {
                self.logical_flips -= 1;
            }
        }
        let [p, q] = lattice.edge_plaquettes(edge);
        let mut out = [(p, false), (q, false)];
        for (slot, site) in out.iter_mut().zip([p, q]) {
            self.occupied[site] ^= true;
            if self.occupied[site] {
                self.count += 1;
            } else {
                self.count -= 1;
            }
            *slot = (site, self.occupied[site]);
        }
        out
    }

    /// Flips one spin, keeping occupations and any cached potentials consistent.
    pub fn flip(&mut self, lattice: &Lattice, hamiltonian: &Hamiltonian, edge: usize) {
        let changes = self.toggle_edge(lattice, edge);
        if let Some(phi) = self.potentials.as_mut() {
            for (site, now) in changes {
                hamiltonian.shift_potentials(phi, site, if now { 1.0 } else { -1.0 });
            }
        }
    }

    /// Flips a spin without touching potentials (for patterns that never carry them).
    pub fn flip_bare(&mut self, lattice: &Lattice, edge: usize) {
        debug_assert!(self.potentials.is_none());
        self.toggle_edge(lattice, edge);
    }

    pub fn is_flipped(&self, edge: usize) -> bool {
        self.flipped[edge]
    }

    pub fn flipped(&self) -> &[bool] {
        &self.flipped
    }

    pub fn is_occupied(&self, p: usize) -> bool {
        self.occupied[p]
    }

    pub fn occupations(&self) -> &[bool] {
        &self.occupied
    }

    pub fn anyon_count(&self) -> usize {
        self.count
    }

    pub fn anyons(&self) -> Vec<usize> {
        (0..self.occupied.len()).filter(|&p| self.occupied[p]).collect()
    }

    pub fn flipped_count(&self) -> usize {
        self.flipped.iter().filter(|&&f| f).count()
    }

    /// Sign of the bare logical `Z`: `-1` when an odd number of string spins are flipped.
    pub fn logical_z(&self) -> i8 {
        if self.logical_flips.is_multiple_of(2) {
            1
        } else {
            -1
        }
    }

    pub fn potentials(&self) -> Option<&[f64]> {
        self.potentials.as_deref()
    }

    /// Recomputes occupations from the flipped edges and compares with the stored ones.
    pub fn is_consistent(&self, lattice: &Lattice) -> bool {
        let mut occ = vec![false; lattice.num_plaquettes()];
        for (e, &f) in self.flipped.iter().enumerate() {
            if f {
                for p in lattice.edge_plaquettes(e) {
                    occ[p] ^= true;
                }
            }
        }
        occ == self.occupied && self.count == occ.iter().filter(|&&o| o).count() && self.count.is_multiple_of(2)
    }

    /// Largest relative deviation of cached potentials from a fresh recomputation.
    pub fn potential_drift(&self, hamiltonian: &Hamiltonian) -> f64 {
        let Some(phi) = &self.potentials else { return 0.0 };
        phi.iter()
            .enumerate()
            .map(|(p, &cached)| {
                let exact = hamiltonian.potential_from_scratch(self, p);
                (cached - exact).abs() / exact.abs().max(1e-300).max(hamiltonian.spec.a)
            })
            .fold(0.0, f64::max)
    }
}
