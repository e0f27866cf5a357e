//! Closed-form threshold analysis: equilibria, reproduction numbers,
//! Jacobian spectra and the jump-corrected extinction/persistence
//! quantities.

use nalgebra::{Complex, Matrix3};
use thiserror::Error;

use crate::model::{drift, EpidemicParams, JumpMeasure, SirState};

/// |Re λ| below this is reported as marginal.
pub const MARGINAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("Lyapunov function undefined at S = {s}, I = {i} (both must be positive)")]
    InvalidProbe { s: f64, i: f64 },
    #[error("Lyapunov function needs xi > 0 (got {xi})")]
    ZeroContact { xi: f64 },
    #[error(
        "jump correction undefined: atom {index} gives 1 + amplitude*theta/eta = {argument} <= 0"
    )]
    PhiDomain { index: usize, argument: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumReport {
    pub dfe: SirState,
    pub endemic: Option<SirState>,
    pub psi0: f64,
    pub endemic_exists: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

impl Stability {
    pub fn from_spectrum(eigenvalues: &[Complex<f64>]) -> Self {
        if eigenvalues.iter().any(|l| l.re > MARGINAL_TOLERANCE) {
            Stability::Unstable
        } else if eigenvalues.iter().all(|l| l.re < -MARGINAL_TOLERANCE) {
            Stability::Stable
        } else {
            Stability::Marginal
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
            Stability::Marginal => "marginal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    /// Spectrum used for the classification. At the DFE these are the
    /// analytic values −η, (η+γ)(ψ₀−1), −(ρ+η).
    pub eigenvalues: [Complex<f64>; 3],
    /// Spectrum from the general Schur-based solver, sorted by real part.
    pub solver_eigenvalues: [Complex<f64>; 3],
    pub classification: Stability,
}

impl StabilityReport {
    /// Largest distance between the analytic and solver spectra after
    /// sorting both by real part.
    pub fn solver_deviation(&self) -> f64 {
        let mut analytic = self.eigenvalues;
        sort_spectrum(&mut analytic);
        analytic
            .iter()
            .zip(self.solver_eigenvalues.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PersistenceLimits {
    pub s_star: f64,
    pub i_star: f64,
    pub r_star: f64,
}

impl PersistenceLimits {
    /// Long-run time averages stated for the persistent regime, evaluated
    /// for any ψ. Only meaningful when ψ > 1.
    pub fn from_psi(params: &EpidemicParams, psi: f64) -> Self {
        let EpidemicParams {
            theta,
            eta,
            rho,
            gamma,
            ..
        } = *params;
        let i_star = (eta + gamma) * (psi - 1.0);
        Self {
            s_star: theta / eta - ((eta + gamma + rho) / (eta + rho)) * i_star,
            i_star,
            r_star: gamma / (eta + rho) * i_star,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StochasticThresholds {
    /// φ actually used for ψ (the override when one was supplied).
    pub phi: f64,
    /// φ computed from the jump measure.
    pub phi_from_measure: f64,
    pub phi_overridden: bool,
    pub psi0: f64,
    pub psi: f64,
    /// (η+γ)(ψ−1), the almost-sure bound on limsup ln(I)/t.
    pub extinction_rate_bound: f64,
    pub persistence_limits: Option<PersistenceLimits>,
}

pub fn psi0(params: &EpidemicParams) -> f64 {
    params.xi * params.theta / (params.eta * (params.gamma + params.eta))
}

pub fn equilibria(params: &EpidemicParams) -> EquilibriumReport {
    let EpidemicParams {
        theta,
        xi,
        eta,
        rho,
        gamma,
    } = *params;
    let psi0 = psi0(params);
    let dfe = SirState {
        s: theta / eta,
        i: 0.0,
        r: 0.0,
    };
    let endemic = (psi0 > 1.0).then(|| {
        let scale = (eta + gamma) / (xi * (eta + rho + gamma)) * (psi0 - 1.0);
        SirState {
            s: (eta + gamma) / xi,
            i: (eta + rho) * scale,
            r: gamma * scale,
        }
    });
    EquilibriumReport {
        dfe,
        endemic,
        psi0,
        endemic_exists: endemic.is_some(),
    }
}

pub fn jacobian(state: &SirState, params: &EpidemicParams) -> Matrix3<f64> {
    let EpidemicParams {
        xi,
        eta,
        rho,
        gamma,
        ..
    } = *params;
    let SirState { s, i, .. } = *state;
    Matrix3::new(
        -eta - xi * i,
        -xi * s,
        rho,
        xi * i,
        xi * s - (eta + gamma),
        0.0,
        0.0,
        gamma,
        -rho - eta,
    )
}

fn sort_spectrum(values: &mut [Complex<f64>; 3]) {
    values.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// Eigenvalues of a general real 3×3 matrix, sorted by real part.
pub fn eigenvalues(matrix: &Matrix3<f64>) -> [Complex<f64>; 3] {
    let ev = matrix.complex_eigenvalues();
    let mut out = [ev[0], ev[1], ev[2]];
    sort_spectrum(&mut out);
    out
}

/// Local stability of the disease-free equilibrium.
pub fn classify_dfe_stability(params: &EpidemicParams) -> StabilityReport {
    let EpidemicParams {
        theta,
        xi,
        eta,
        rho,
        gamma,
    } = *params;
    let dfe = equilibria(params).dfe;
    let solver_eigenvalues = eigenvalues(&jacobian(&dfe, params));
    // ξθ/η − (η+γ) = (η+γ)(ψ₀−1) without the cancellation in ψ₀−1.
    let invasion = xi * theta / eta - (eta + gamma);
    let eigenvalues = [
        Complex::new(-eta, 0.0),
        Complex::new(invasion, 0.0),
        Complex::new(-rho - eta, 0.0),
    ];
    StabilityReport {
        eigenvalues,
        solver_eigenvalues,
        classification: Stability::from_spectrum(&eigenvalues),
    }
}

/// The Lyapunov function L(S, I) = S − β − β·ln(S/β) + I − 1 − ln I with
/// β = (η+γ)/ξ.
pub fn lyapunov_function(state: &SirState, params: &EpidemicParams) -> Result<f64, AnalysisError> {
    let beta = lyapunov_beta(state, params)?;
    let SirState { s, i, .. } = *state;
    Ok(s - beta - beta * (s / beta).ln() + i - 1.0 - i.ln())
}

/// dL/dt = (1 − β/S)·dS/dt + (1 − 1/I)·dI/dt along the deterministic flow.
pub fn lyapunov_derivative(
    state: &SirState,
    params: &EpidemicParams,
) -> Result<f64, AnalysisError> {
    let beta = lyapunov_beta(state, params)?;
    let d = drift(state, params);
    Ok((1.0 - beta / state.s) * d.ds + (1.0 - 1.0 / state.i) * d.di)
}

fn lyapunov_beta(state: &SirState, params: &EpidemicParams) -> Result<f64, AnalysisError> {
    if !(state.s > 0.0 && state.i > 0.0) {
        return Err(AnalysisError::InvalidProbe {
            s: state.s,
            i: state.i,
        });
    }
    if !(params.xi > 0.0) {
        return Err(AnalysisError::ZeroContact { xi: params.xi });
    }
    Ok((params.eta + params.gamma) / params.xi)
}

/// φ = Σ rateᵢ·[ln(1 + εᵢ·θ/η) − εᵢ·θ/η]. Never positive.
pub fn phi(measure: &JumpMeasure, params: &EpidemicParams) -> Result<f64, AnalysisError> {
    let n0 = params.carrying_population();
    measure
        .atoms
        .iter()
        .enumerate()
        .try_fold(0.0, |acc, (index, atom)| {
            let x = atom.amplitude * n0;
            if !(1.0 + x > 0.0) {
                return Err(AnalysisError::PhiDomain {
                    index,
                    argument: 1.0 + x,
                });
            }
            Ok(acc + atom.rate * log1p_minus_x(x))
        })
}

/// ln(1+x) − x without cancellation for small |x|.
fn log1p_minus_x(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        // −x²/2 + x³/3 − x⁴/4 + …, truncated well below f64 resolution.
        let mut term = -x * x / 2.0;
        let mut sum = term;
        let mut k = 2.0;
        while term.abs() > f64::EPSILON * sum.abs() * 1e-2 && k < 40.0 {
            term *= -x * k / (k + 1.0);
            sum += term;
            k += 1.0;
        }
        sum
    } else {
        x.ln_1p() - x
    }
}

pub fn psi(params: &EpidemicParams, phi_value: f64) -> f64 {
    psi0(params) - phi_value / (params.eta + params.gamma)
}

/// φ, ψ, the extinction-rate bound and, when ψ > 1, the persistence limits.
pub fn thresholds(
    params: &EpidemicParams,
    measure: &JumpMeasure,
    phi_override: Option<f64>,
) -> Result<StochasticThresholds, AnalysisError> {
    let phi_from_measure = phi(measure, params)?;
    let phi_used = phi_override.unwrap_or(phi_from_measure);
    let psi = psi(params, phi_used);
    Ok(StochasticThresholds {
        phi: phi_used,
        phi_from_measure,
        phi_overridden: phi_override.is_some(),
        psi0: psi0(params),
        psi,
        extinction_rate_bound: (params.eta + params.gamma) * (psi - 1.0),
        persistence_limits: (psi > 1.0).then(|| PersistenceLimits::from_psi(params, psi)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::JumpAtom;
    use approx::assert_relative_eq;

    fn base() -> EpidemicParams {
        EpidemicParams::reference()
    }

    fn with_xi(xi: f64) -> EpidemicParams {
        EpidemicParams { xi, ..base() }
    }

    #[test]
    fn psi0_examples() {
        assert!((psi0(&base()) - 1.0429).abs() <= 1e-4);
        assert_eq!(psi0(&with_xi(0.0)), 0.0);
        let p = EpidemicParams::new(0.01, 0.01, 0.01, 0.01, 0.04).unwrap();
        assert_relative_eq!(psi0(&p), 0.2, max_relative = 1e-14);
    }

    #[test]
    fn equilibria_for_reference_params() {
        let rep = equilibria(&base());
        assert_eq!(
            rep.dfe,
            SirState {
                s: 7.3,
                i: 0.0,
                r: 0.0
            }
        );
        let e = rep.endemic.unwrap();
        assert!(rep.endemic_exists);
        assert!((e.s - 7.0).abs() < 1e-4);
        assert!((e.i - 0.10645).abs() < 1e-4);
        assert!((e.r - 0.19355).abs() < 1e-4);

        let sub = equilibria(&with_xi(0.002));
        assert!(sub.endemic.is_none() && !sub.endemic_exists);
    }

    #[test]
    fn jacobian_entries() {
        let p = base();
        let j = jacobian(&equilibria(&p).dfe, &p);
        assert_relative_eq!(j[(1, 1)], 0.0009, max_relative = 1e-9);
        let z = jacobian(
            &SirState {
                s: 0.0,
                i: 0.0,
                r: 0.0,
            },
            &p,
        );
        let expect = Matrix3::new(-0.001, 0.0, 0.01, 0.0, -0.021, 0.0, 0.0, 0.02, -0.011);
        assert!((z - expect).abs().max() < 1e-18);
    }

    #[test]
    fn dfe_spectrum_and_class() {
        let rep = classify_dfe_stability(&base());
        assert_eq!(rep.classification, Stability::Unstable);
        let mut expected = [-0.011, -0.001, 0.0009];
        expected.sort_by(f64::total_cmp);
        for (l, e) in rep.solver_eigenvalues.iter().zip(expected) {
            assert!((l.re - e).abs() < 1e-12 && l.im.abs() < 1e-12);
        }
        assert!(rep.solver_deviation() < 1e-12);

        let p = base();
        let marginal = with_xi(p.eta * (p.eta + p.gamma) / p.theta);
        assert_eq!(
            classify_dfe_stability(&marginal).classification,
            Stability::Marginal
        );

        let half = with_xi(0.5 * p.eta * (p.eta + p.gamma) / p.theta);
        let rep = classify_dfe_stability(&half);
        assert_eq!(rep.classification, Stability::Stable);
        assert!(rep.eigenvalues.iter().all(|l| l.re < 0.0));
    }

    #[test]
    fn lyapunov_examples() {
        let p = base();
        let beta = (p.eta + p.gamma) / p.xi;
        let at_beta = lyapunov_derivative(
            &SirState {
                s: beta,
                i: 1.0,
                r: 3.0,
            },
            &p,
        )
        .unwrap();
        assert_eq!(at_beta, 0.0);
        let probe = SirState {
            s: p.theta / p.eta,
            i: 1.0,
            r: 0.0,
        };
        assert_relative_eq!(
            lyapunov_derivative(&probe, &p).unwrap(),
            -0.0009,
            max_relative = 1e-9
        );
        assert!(matches!(
            lyapunov_derivative(
                &SirState {
                    s: 0.0,
                    i: 1.0,
                    r: 0.0
                },
                &p
            ),
            Err(AnalysisError::InvalidProbe { .. })
        ));
        assert!(lyapunov_derivative(
            &SirState {
                s: 1.0,
                i: 0.0,
                r: 0.0
            },
            &p
        )
        .is_err());
        assert!(matches!(
            lyapunov_derivative(&probe, &with_xi(0.0)),
            Err(AnalysisError::ZeroContact { .. })
        ));
    }

    #[test]
    fn phi_examples() {
        let p = base();
        assert_eq!(phi(&JumpMeasure::empty(), &p).unwrap(), 0.0);
        // ln(1.0073) − 0.0073 from a 30-digit reference evaluation.
        let one = JumpMeasure::single(0.001, 1.0).unwrap();
        assert_relative_eq!(
            phi(&one, &p).unwrap(),
            -2.651_603_350_161_403e-5,
            max_relative = 1e-12
        );
        let three = JumpMeasure::single(0.001, 3.0).unwrap();
        assert_relative_eq!(
            phi(&three, &p).unwrap(),
            3.0 * -2.651_603_350_161_403e-5,
            max_relative = 1e-12
        );
        let bad = JumpMeasure::single(-0.5, 1.0).unwrap();
        assert!(matches!(
            phi(&bad, &p),
            Err(AnalysisError::PhiDomain { index: 0, .. })
        ));
    }

    #[test]
    fn log1p_minus_x_branches_agree() {
        for x in [-9.9e-3, -1e-3, 1e-6, 5e-3, 9.99e-3] {
            let series = log1p_minus_x(x);
            let direct = x.ln_1p() - x;
            assert_relative_eq!(series, direct, max_relative = 1e-9);
        }
        assert_eq!(log1p_minus_x(0.0), 0.0);
    }

    #[test]
    fn psi_examples() {
        let p = base();
        assert!((psi(&p, 9.126e-4) - 0.9994).abs() <= 1e-4);
        assert_eq!(psi(&p, 0.0), psi0(&p));
        assert!((psi(&with_xi(0.0033), 9.0e-4) - 1.1042).abs() <= 1e-3);
    }

    #[test]
    fn persistence_limits_for_high_contact() {
        let p = with_xi(0.0033);
        let th = thresholds(&p, &JumpMeasure::single(0.001, 1.0).unwrap(), Some(9.0e-4)).unwrap();
        assert!(th.phi_overridden);
        let lim = th.persistence_limits.unwrap();
        assert!((lim.i_star - 0.0022).abs() < 1e-4);
        assert!((lim.s_star - 7.2938).abs() < 5e-4);
        assert!((lim.r_star - 0.00398).abs() < 1e-4);
        assert!(th.phi_from_measure < 0.0);

        let at_one = PersistenceLimits::from_psi(&p, 1.0);
        assert_eq!(at_one.i_star, 0.0);
        assert_eq!(at_one.s_star, p.theta / p.eta);
    }

    #[test]
    fn threshold_presence_follows_psi() {
        let p = base();
        let m = JumpMeasure::new(vec![JumpAtom {
            amplitude: 0.001,
            rate: 1.0,
        }])
        .unwrap();
        let below = thresholds(&p, &m, Some(9.126e-4)).unwrap();
        assert!(below.psi < 1.0 && below.extinction_rate_bound < 0.0);
        assert!(below.persistence_limits.is_none());
        let computed = thresholds(&p, &m, None).unwrap();
        assert!(!computed.phi_overridden);
        assert!(computed.psi >= computed.psi0);
        assert!(computed.persistence_limits.is_some());
    }
}
