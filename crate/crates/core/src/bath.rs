//! Thermal transition rates `gamma(omega)` for single spin flips.
//!
//! `omega` is the energy released by the flip (positive for downhill moves).
//! Every rate law here obeys detailed balance, `gamma(omega) = e^{beta omega} gamma(-omega)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BathSpec<S = f64> {
    /// Spin-boson bath with spectral exponent `n` (1 = Ohmic, >= 2 super-Ohmic):
    /// `gamma(w) = 2 kappa |w^n / (1 - e^{-beta w})| e^{-|w|/cutoff}`.
    SpinBoson {
        n: u32,
        kappa: S,
        temperature: S,
        /// `None` is an infinite cutoff.
        #[serde(default)]
        cutoff: Option<S>,
    },
    /// Tabulated rates for the non-interacting model: hopping `gamma0`, pair
    /// creation `gamma_minus`, pair annihilation `gamma_minus e^{2 J beta}`.
    ExplicitRates {
        gamma0: S,
        gamma_minus: S,
        temperature: S,
        j: S,
    },
}

impl<S: Scalar> BathSpec<S> {
    pub fn ohmic(temperature: S) -> Self {
        Self::spin_boson(1, temperature)
    }

    pub fn spin_boson(n: u32, temperature: S) -> Self {
        Self::SpinBoson {
            n,
            kappa: S::one(),
            temperature,
            cutoff: None,
        }
    }

    /// Explicit rates with hopping as fast as pair annihilation, `gamma(0) = gamma(2J)`.
    pub fn equal_hop_annihilation(gamma0: S, j: S, temperature: S) -> Self {
        let gamma_minus = gamma0 * (-S::lit(2.0) * j / temperature).exp();
        Self::ExplicitRates {
            gamma0,
            gamma_minus,
            temperature,
            j,
        }
    }

    /// Pure hopping with pair creation and annihilation switched off.
    pub fn hopping_only(gamma0: S, j: S, temperature: S) -> Self {
        Self::ExplicitRates {
            gamma0,
            gamma_minus: S::zero(),
            temperature,
            j,
        }
    }

    pub fn temperature(&self) -> S {
        match *self {
            Self::SpinBoson { temperature, .. } | Self::ExplicitRates { temperature, .. } => temperature,
        }
    }

    pub fn beta(&self) -> S {
        S::one() / self.temperature()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.temperature();
        if !(t > S::zero()) || !t.is_finite() {
            return Err(Error::InvalidBath(format!("temperature must be positive, got {t}")));
        }
        match *self {
            Self::SpinBoson { n, kappa, cutoff, .. } => {
                if n < 1 {
                    return Err(Error::InvalidBath("spectral exponent n must be >= 1".into()));
                }
                if !(kappa > S::zero()) {
                    return Err(Error::InvalidBath(format!("kappa must be positive, got {kappa}")));
                }
                if let Some(c) = cutoff {
                    if !(c > S::zero()) {
                        return Err(Error::InvalidBath(format!("cutoff must be positive, got {c}")));
                    }
                }
            }
            Self::ExplicitRates { gamma0, gamma_minus, j, .. } => {
                if !(gamma0 >= S::zero()) || !(gamma_minus >= S::zero()) {
                    return Err(Error::InvalidBath("explicit rates must be non-negative".into()));
                }
                if !(j > S::zero()) {
                    return Err(Error::InvalidBath(format!("J must be positive, got {j}")));
                }
            }
        }
        Ok(())
    }

    /// Rate for a flip releasing energy `omega`.
    pub fn rate(&self, omega: S) -> Result<S> {
        match *self {
            Self::SpinBoson {
                n,
                kappa,
                temperature,
                cutoff,
            } => Ok(spin_boson_rate(n, kappa, temperature, cutoff, omega)),
            Self::ExplicitRates {
                gamma0,
                gamma_minus,
                temperature,
                j,
            } => {
                let two_j = S::lit(2.0) * j;
                let tol = S::lit(1e-9) * two_j;
                if omega.abs() <= tol {
                    Ok(gamma0)
                } else if (omega + two_j).abs() <= tol {
                    Ok(gamma_minus)
                } else if (omega - two_j).abs() <= tol {
                    Ok(gamma_minus * (two_j / temperature).exp())
                } else {
                    Err(Error::UnsupportedEnergy(omega.to_f64_lossy()))
                }
            }
        }
    }

    /// Spectral exponent for spin-boson baths.
    pub fn ohmicity(&self) -> Option<u32> {
        match *self {
            Self::SpinBoson { n, .. } => Some(n),
            Self::ExplicitRates { .. } => None,
        }
    }

    /// Rate coefficient `kappa_n` for spin-boson baths.
    pub fn kappa(&self) -> Option<S> {
        match *self {
            Self::SpinBoson { kappa, .. } => Some(kappa),
            Self::ExplicitRates { .. } => None,
        }
    }
}

fn spin_boson_rate<S: Scalar>(n: u32, kappa: S, temperature: S, cutoff: Option<S>, omega: S) -> S {
    // w^n / (1 - e^{-beta w}) = T |w|^{n-1} x / (1 - e^{-x}) with x = beta w; the last
    // factor is positive for every x and tends to 1 at x = 0
    let x = omega / temperature;
    let thermal = if x == S::zero() { S::one() } else { x / (-(-x).exp_m1()) };
    let power = if n == 1 { S::one() } else { omega.abs().powi(n as i32 - 1) };
    let damping = cutoff.map_or(S::one(), |c| (-omega.abs() / c).exp());
    S::lit(2.0) * kappa * temperature * power * thermal * damping
}
