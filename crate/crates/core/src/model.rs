//! Domain types and right-hand sides of the SIR system with relapse.
//!
//! The deterministic system is
//!
//! ```text
//! dS/dt = θ − ξ·S·I − η·S + ρ·R
//! dI/dt = ξ·S·I − (η + γ)·I
//! dR/dt = γ·I − (η + ρ)·R
//! ```
//!
//! and the stochastic system perturbs the contact term by a compensated
//! Poisson random measure with amplitude ε(u), which moves mass between S
//! and I only. Brownian terms are deliberately absent.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{name} must be positive (got {value})")]
    NonPositiveRate { name: &'static str, value: f64 },
    #[error("{name} must be non-negative (got {value})")]
    NegativeRate { name: &'static str, value: f64 },
    #[error("{name} must be finite (got {value})")]
    NonFinite { name: &'static str, value: f64 },
    #[error("compartment {name} must be non-negative (got {value})")]
    NegativeCompartment { name: &'static str, value: f64 },
    #[error(
        "measure atom {index}: amplitude {amplitude} must exceed -1 \
         (a jump must leave 1 + amplitude positive)"
    )]
    AmplitudeTooSmall { index: usize, amplitude: f64 },
    #[error("measure atom {index}: rate {rate} must be finite and non-negative")]
    InvalidAtomRate { index: usize, rate: f64 },
}

fn finite(name: &'static str, value: f64) -> Result<f64, ModelError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ModelError::NonFinite { name, value })
    }
}

/// The five rate constants of the model.
///
/// `theta` is recruitment, `xi` contact, `eta` natural outflow, `rho`
/// relapse from R back to S and `gamma` recovery. All are per unit model
/// time. `xi` may be zero (no transmission); the others must be strictly
/// positive because they appear as divisors in the threshold quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpidemicParams {
    pub theta: f64,
    pub xi: f64,
    pub eta: f64,
    pub rho: f64,
    pub gamma: f64,
}

impl EpidemicParams {
    pub fn new(theta: f64, xi: f64, eta: f64, rho: f64, gamma: f64) -> Result<Self, ModelError> {
        let p = Self {
            theta,
            xi,
            eta,
            rho,
            gamma,
        };
        p.validate()?;
        Ok(p)
    }

    /// θ = 0.0073, ξ = 0.003, η = 0.001, ρ = 0.01, γ = 0.02.
    pub fn reference() -> Self {
        Self {
            theta: 0.0073,
            xi: 0.003,
            eta: 0.001,
            rho: 0.01,
            gamma: 0.02,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, value) in [
            ("theta", self.theta),
            ("eta", self.eta),
            ("rho", self.rho),
            ("gamma", self.gamma),
        ] {
            if !(finite(name, value)? > 0.0) {
                return Err(ModelError::NonPositiveRate { name, value });
            }
        }
        if finite("xi", self.xi)? < 0.0 {
            return Err(ModelError::NegativeRate {
                name: "xi",
                value: self.xi,
            });
        }
        Ok(())
    }

    /// Steady total population θ/η.
    pub fn carrying_population(&self) -> f64 {
        self.theta / self.eta
    }
}

/// One point (S, I, R) of the compartment space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SirState {
    pub s: f64,
    pub i: f64,
    pub r: f64,
}

impl SirState {
    pub fn new(s: f64, i: f64, r: f64) -> Result<Self, ModelError> {
        let st = Self { s, i, r };
        st.validate()?;
        Ok(st)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, value) in [("s", self.s), ("i", self.i), ("r", self.r)] {
            if finite(name, value)? < 0.0 {
                return Err(ModelError::NegativeCompartment { name, value });
            }
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.s + self.i + self.r
    }

    pub fn get(&self, c: Compartment) -> f64 {
        match c {
            Compartment::S => self.s,
            Compartment::I => self.i,
            Compartment::R => self.r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Compartment {
    S,
    I,
    R,
}

/// A single point mass of the jump intensity: jumps of relative size
/// `amplitude` arriving at `rate` per unit time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpAtom {
    pub amplitude: f64,
    pub rate: f64,
}

/// Finite-activity jump measure ν written as a weighted sum of atoms.
///
/// Invariants: every amplitude is > −1, every rate is finite and
/// non-negative. Finiteness of Σ rate·ln(1+amplitude)² follows.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpMeasure {
    #[serde(default)]
    pub atoms: Vec<JumpAtom>,
}

impl JumpMeasure {
    pub fn new(atoms: Vec<JumpAtom>) -> Result<Self, ModelError> {
        let m = Self { atoms };
        m.validate()?;
        Ok(m)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn single(amplitude: f64, rate: f64) -> Result<Self, ModelError> {
        Self::new(vec![JumpAtom { amplitude, rate }])
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (index, atom) in self.atoms.iter().enumerate() {
            if !atom.amplitude.is_finite() || atom.amplitude <= -1.0 {
                return Err(ModelError::AmplitudeTooSmall {
                    index,
                    amplitude: atom.amplitude,
                });
            }
            if !atom.rate.is_finite() || atom.rate < 0.0 {
                return Err(ModelError::InvalidAtomRate {
                    index,
                    rate: atom.rate,
                });
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.iter().all(|a| a.rate == 0.0)
    }

    /// ν(ℤ), the total jump rate.
    pub fn total_rate(&self) -> f64 {
        self.atoms.iter().map(|a| a.rate).sum()
    }

    /// Σ rate·ln(1+amplitude)², the quantity bounded by the moment
    /// assumption on the noise.
    pub fn log_second_moment(&self) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.rate * a.amplitude.ln_1p().powi(2))
            .sum()
    }
}

/// Time derivative of each compartment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivative {
    pub ds: f64,
    pub di: f64,
    pub dr: f64,
}

impl Derivative {
    pub fn max_abs(&self) -> f64 {
        self.ds.abs().max(self.di.abs()).max(self.dr.abs())
    }

    pub fn sum(&self) -> f64 {
        self.ds + self.di + self.dr
    }
}

pub fn drift(state: &SirState, params: &EpidemicParams) -> Derivative {
    let EpidemicParams {
        theta,
        xi,
        eta,
        rho,
        gamma,
    } = *params;
    let SirState { s, i, r } = *state;
    let infection = xi * s * i;
    Derivative {
        ds: theta - infection - eta * s + rho * r,
        di: infection - (eta + gamma) * i,
        dr: gamma * i - (eta + rho) * r,
    }
}

/// Change in (S, I) caused by one jump of the given amplitude.
///
/// The two components are exact negatives of each other, so jumps never
/// change the total population.
pub fn jump_delta(state: &SirState, amplitude: f64) -> (f64, f64) {
    let moved = amplitude * state.s * state.i;
    (-moved, moved)
}

/// Solution of dN/dt = θ − η·N with N(0) = `n0`.
pub fn total_population_closed_form(n0: f64, params: &EpidemicParams, t: f64) -> f64 {
    let steady = params.carrying_population();
    steady + (n0 - steady) * (-params.eta * t).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn base() -> EpidemicParams {
        EpidemicParams::reference()
    }

    #[test]
    fn dfe_is_a_rest_point() {
        let p = base();
        let d = drift(&SirState::new(p.theta / p.eta, 0.0, 0.0).unwrap(), &p);
        assert!(d.max_abs() < 1e-15);
    }

    #[test]
    fn drift_at_unit_state() {
        let d = drift(&SirState::new(1.0, 1.0, 1.0).unwrap(), &base());
        assert_relative_eq!(d.ds, 0.0133, max_relative = 1e-12);
        assert_relative_eq!(d.di, -0.018, max_relative = 1e-12);
        assert_relative_eq!(d.dr, 0.009, max_relative = 1e-12);
    }

    #[test]
    fn drift_vanishes_at_endemic_point() {
        // S₊ = (η+γ)/ξ = 7, and I₊, R₊ from the equilibrium relations.
        let p = base();
        let psi0 = p.xi * p.theta / (p.eta * (p.eta + p.gamma));
        let k = (p.eta + p.gamma) / (p.xi * (p.eta + p.rho + p.gamma)) * (psi0 - 1.0);
        let e = SirState::new((p.eta + p.gamma) / p.xi, (p.eta + p.rho) * k, p.gamma * k).unwrap();
        assert!(drift(&e, &p).max_abs() < 1e-12);
    }

    #[test]
    fn jump_delta_examples() {
        assert_eq!(
            jump_delta(&SirState::new(2.0, 3.0, 0.0).unwrap(), 0.5),
            (-3.0, 3.0)
        );
        let (a, b) = jump_delta(&SirState::new(4.0, 5.0, 1.0).unwrap(), 0.0);
        assert_eq!((a.abs(), b), (0.0, 0.0));
        let (a, b) = jump_delta(&SirState::new(0.0, 5.0, 1.0).unwrap(), 0.7);
        assert_eq!((a.abs(), b), (0.0, 0.0));
    }

    #[test]
    fn closed_form_population() {
        let p = base();
        let steady = p.theta / p.eta;
        assert_relative_eq!(
            total_population_closed_form(steady, &p, 123.4),
            steady,
            max_relative = 1e-15
        );
        assert_eq!(total_population_closed_form(10.0, &p, 0.0), 10.0);
        // 7.3 + 2.7·e⁻¹
        assert_relative_eq!(
            total_population_closed_form(10.0, &p, 1000.0),
            8.293_274_491_162_894,
            max_relative = 1e-12
        );
    }

    #[test]
    fn validation_rejects_bad_values() {
        assert_eq!(
            EpidemicParams::new(0.0073, 0.003, 0.0, 0.01, 0.02)
                .unwrap_err()
                .to_string(),
            "eta must be positive (got 0)"
        );
        assert!(EpidemicParams::new(0.0073, -0.1, 0.001, 0.01, 0.02).is_err());
        assert!(EpidemicParams::new(0.0073, 0.0, 0.001, 0.01, 0.02).is_ok());
        assert!(EpidemicParams::new(f64::NAN, 0.003, 0.001, 0.01, 0.02).is_err());
        assert!(SirState::new(1.0, -1e-9, 0.0).is_err());
        assert!(matches!(
            JumpMeasure::single(-1.5, 1.0),
            Err(ModelError::AmplitudeTooSmall { index: 0, .. })
        ));
        assert!(JumpMeasure::single(-1.0, 1.0).is_err());
        assert!(JumpMeasure::single(0.2, -1.0).is_err());
        assert!(JumpMeasure::single(-0.99, 2.0).is_ok());
    }

    #[test]
    fn measure_moments() {
        let m = JumpMeasure::new(vec![
            JumpAtom {
                amplitude: 0.5,
                rate: 2.0,
            },
            JumpAtom {
                amplitude: -0.5,
                rate: 1.0,
            },
        ])
        .unwrap();
        assert_eq!(m.total_rate(), 3.0);
        let expected = 2.0 * 1.5f64.ln().powi(2) + 0.5f64.ln().powi(2);
        assert_relative_eq!(m.log_second_moment(), expected, max_relative = 1e-14);
        assert!(JumpMeasure::empty().is_empty());
    }
}
