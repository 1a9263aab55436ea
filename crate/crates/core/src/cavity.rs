//! Constant anyon repulsion mediated by two cavity modes.
//!
//! Plaquettes couple to the modes through `g N (a₁†a₂ + a₁a₂†)`. Diagonalising
//! the 2×2 mode matrix and expanding to second order in `g` gives an energy
//! `(n₁ - n₂)(gN)²/(ω₁ - ω₂)`, quadratic in the anyon number `N`, which maps
//! onto `J` and `A` of the `α = 0` model.

use serde::{Deserialize, Serialize};

use crate::energy::InteractionSpec;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Exchange and spin-electric couplings of the underlying honeycomb model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoneycombSpec<S = f64> {
    pub jx: S,
    pub jy: S,
    pub jz: S,
    pub delta_x: S,
    pub delta_y: S,
}

/// Largest `δ_k / J_k` treated as "small" by [`HoneycombSpec::weak_coupling`].
pub const WEAK_COUPLING_RATIO: f64 = 0.1;

impl<S: Scalar> HoneycombSpec<S> {
    pub fn gap(&self) -> Result<S> {
        honeycomb_gap(self.jx, self.jy, self.jz)
    }

    pub fn coupling(&self) -> Result<S> {
        plaquette_coupling(self.jx, self.jy, self.jz, self.delta_x, self.delta_y)
    }

    /// Whether both `δ_x ≪ J_x` and `δ_y ≪ J_y`; higher orders are dropped
    /// regardless, so a `false` here marks the coefficients as unreliable.
    pub fn weak_coupling(&self) -> bool {
        let small = |d: S, j: S| d.abs() <= S::lit(WEAK_COUPLING_RATIO) * j.abs();
        small(self.delta_x, self.jx) && small(self.delta_y, self.jy)
    }
}

fn check_jz<S: Scalar>(jz: S) -> Result<()> {
    if jz > S::zero() && jz.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("Jz must be positive, got {jz}")))
    }
}

/// `J₀ = Jx² Jy² / (8 Jz³)`.
pub fn honeycomb_gap<S: Scalar>(jx: S, jy: S, jz: S) -> Result<S> {
    check_jz(jz)?;
    Ok(jx * jx * jy * jy / (S::lit(8.0) * jz.powi(3)))
}

/// `g = Jx Jy δx δy / (2 Jz³)`.
pub fn plaquette_coupling<S: Scalar>(jx: S, jy: S, jz: S, delta_x: S, delta_y: S) -> Result<S> {
    check_jz(jz)?;
    Ok(jx * jy * delta_x * delta_y / (S::lit(2.0) * jz.powi(3)))
}

/// Two cavity modes, their steady occupations, and the bare anyon gap `J₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavitySpec<S = f64> {
    pub omega1: S,
    pub omega2: S,
    /// Coupling per plaquette, uniform over the lattice.
    pub g: S,
    pub nb1: S,
    #[serde(default)]
    pub nb2: S,
    pub j0: S,
}

impl<S: Scalar> CavitySpec<S> {
    pub fn from_honeycomb(h: &HoneycombSpec<S>, omega1: S, omega2: S, nb1: S, nb2: S) -> Result<Self> {
        Ok(Self {
            omega1,
            omega2,
            g: h.coupling()?,
            nb1,
            nb2,
            j0: h.gap()?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nb1 >= S::zero() && self.nb2 >= S::zero()) {
            return Err(Error::InvalidParameter("mode occupations must be non-negative".into()));
        }
        if !(self.omega1.is_finite() && self.omega2.is_finite() && self.g.is_finite()) {
            return Err(Error::InvalidParameter("frequencies and coupling must be finite".into()));
        }
        Ok(())
    }
}

/// Normal modes of `[[ω₁, gN], [gN, ω₂]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalModes<S = f64> {
    /// Upper branch `(ω₁+ω₂)/2 + √((ω₁-ω₂)²/4 + (gN)²)`.
    pub omega1: S,
    pub omega2: S,
    /// `tan 2θ = 2gN/(ω₁-ω₂)`, in `(-π/4, π/4]`; `π/4` at resonance.
    pub theta: S,
}

pub fn bogoliubov_frequencies<S: Scalar>(spec: &CavitySpec<S>, anyons: usize) -> NormalModes<S> {
    let two = S::lit(2.0);
    let x = spec.g * S::from_usize_lossy(anyons);
    let half_detuning = (spec.omega1 - spec.omega2) / two;
    let mean = (spec.omega1 + spec.omega2) / two;
    let root = half_detuning.hypot(x);
    let theta = if half_detuning == S::zero() {
        if x == S::zero() {
            S::zero()
        } else {
            S::FRAC_PI_4()
        }
    } else {
        (x / half_detuning).atan() / two
    };
    NormalModes {
        omega1: mean + root,
        omega2: mean - root,
        theta,
    }
}

/// Second-order energy `(n₁ - n₂)(gN)²/(ω₁ - ω₂)` of the populated modes.
pub fn second_order_shift<S: Scalar>(spec: &CavitySpec<S>, anyons: usize) -> Result<S> {
    let detuning = detuning(spec)?;
    let x = spec.g * S::from_usize_lossy(anyons);
    Ok((spec.nb1 - spec.nb2) * x * x / detuning)
}

/// Exact mode energy shift `n₁(Ω₁ - ω₁) + n₂(Ω₂ - ω₂)` for `ω₁ > ω₂`.
pub fn exact_shift<S: Scalar>(spec: &CavitySpec<S>, anyons: usize) -> S {
    let m = bogoliubov_frequencies(spec, anyons);
    let (hi, lo) = if spec.omega1 >= spec.omega2 { (m.omega1, m.omega2) } else { (m.omega2, m.omega1) };
    spec.nb1 * (hi - spec.omega1) + spec.nb2 * (lo - spec.omega2)
}

fn detuning<S: Scalar>(spec: &CavitySpec<S>) -> Result<S> {
    let d = spec.omega1 - spec.omega2;
    if d == S::zero() {
        Err(Error::Resonance(spec.omega1.to_f64_lossy()))
    } else {
        Ok(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParameters<S = f64> {
    pub j: S,
    pub a: S,
}

impl<S: Scalar> EffectiveParameters<S> {
    /// Constant-coupling model; fails when the cavity makes the interaction attractive.
    pub fn interaction(&self) -> Result<InteractionSpec<S>> {
        InteractionSpec::new(self.j, self.a, S::zero())
    }
}

/// `A = 2g²(n₁ - n₂)/(ω₁ - ω₂)` and `J = J₀ + A/2`; the `A/2` is the
/// self-energy left over from `N² = Σ_{p≠q} n_p n_q + N`.
pub fn effective_parameters<S: Scalar>(spec: &CavitySpec<S>) -> Result<EffectiveParameters<S>> {
    spec.validate()?;
    let detuning = detuning(spec)?;
    let a = S::lit(2.0) * spec.g * spec.g * (spec.nb1 - spec.nb2) / detuning;
    Ok(EffectiveParameters {
        j: spec.j0 + a / S::lit(2.0),
        a,
    })
}
