//! Closed-form fidelity factors, detection probabilities and their limits.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::params::{DerivedQuantities, GeometryParams, ProtocolParams, TWO_PI};
use crate::quadrature::{self, QuadError};

/// Which sinc argument to use for the geometric factor.
///
/// `Unscaled` is `sinc(d L_x / 2λ₁√(d²+D²))`, the default used by the
/// favourable preset. `WaveOptics` is the detector-average integral
/// `(1/L_x)∫ e^{-i k₁ x d/√(d²+D²)} dx = sinc(k₁ d L_x / 2√(d²+D²))`; the two
/// differ by `2π` in the argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeoConvention {
    #[default]
    Unscaled,
    WaveOptics,
}

pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

pub fn f_geo(geometry: &GeometryParams, convention: GeoConvention) -> f64 {
    let eps2 = geometry.d * geometry.lx / (2.0 * geometry.atom_detector_distance());
    match convention {
        GeoConvention::Unscaled => sinc(eps2),
        GeoConvention::WaveOptics => sinc(TWO_PI * eps2),
    }
}

/// Far-field visibility of the exact two-path phase `k₁(|r−r_A| − |r−r_B|)`
/// for atoms at `(±d, 0, 0)`: the path difference across the detector is
/// `−2xd/√(d²+D²)`, giving `sinc(k₁ d L_x / √(d²+D²))`. This is what
/// [`crate::montecarlo::mc_geometric_visibility`] converges to.
pub fn f_geo_two_path(geometry: &GeometryParams) -> f64 {
    sinc(TWO_PI * geometry.d * geometry.lx / geometry.atom_detector_distance())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            abs_tol: 1e-10,
            rel_tol: 1e-9,
            max_subdivisions: 1_000_000,
        }
    }
}

impl QuadratureConfig {
    /// Upper integration limit: the dropped tail `e^{-τ_max}` is at most
    /// `abs_tol/2`, and never shorter than 30.
    pub fn tau_max(&self) -> f64 {
        (-(0.5 * self.abs_tol).ln()).max(30.0)
    }
}

// Cap on the number of per-period segments laid down before refinement.
const MAX_PERIOD_SEGMENTS: usize = 200_000;

/// The `F_dyn` integrand `e^{-τ} exp{-2η² coth [1 − cos χ cos(ντ/Γ)]}`.
pub fn f_dyn_integrand(derived: &DerivedQuantities, chi: f64, tau: f64) -> f64 {
    let a = 2.0 * derived.eta * derived.eta * derived.coth_factor;
    let bracket = 1.0 - chi.cos() * (derived.nu_over_gamma * tau).cos();
    (-tau - a * bracket).exp()
}

pub fn f_dyn(
    derived: &DerivedQuantities,
    chi: f64,
    quad: &QuadratureConfig,
) -> Result<f64, QuadError> {
    let tau_max = quad.tau_max();
    let nu = derived.nu_over_gamma;
    let period = TWO_PI / nu;
    let n_periods = (tau_max / period).ceil();
    let breaks: Vec<f64> = if n_periods > 1.0 {
        let n = (n_periods as usize).min(MAX_PERIOD_SEGMENTS);
        (0..=n).map(|i| tau_max * i as f64 / n as f64).collect()
    } else {
        vec![0.0, tau_max]
    };
    // Leave room for the e^{-τ_max} tail in the error budget.
    let budget = QuadratureConfig {
        abs_tol: quad.abs_tol - (-tau_max).exp(),
        ..*quad
    };
    let r = quadrature::integrate(
        |tau| f_dyn_integrand(derived, chi, tau),
        &breaks,
        budget.abs_tol,
        budget.rel_tol,
        budget.max_subdivisions,
    )?;
    Ok(r.value.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confinement {
    /// `ν ≪ Γ`
    Weak,
    /// `ν ≫ Γ`
    Strong,
}

impl Confinement {
    pub fn for_trap(nu_over_gamma: f64) -> Self {
        if nu_over_gamma < 1.0 {
            Confinement::Weak
        } else {
            Confinement::Strong
        }
    }
}

pub fn eps3(derived: &DerivedQuantities, regime: Confinement) -> f64 {
    match regime {
        Confinement::Weak => derived.eps3_weak,
        Confinement::Strong => derived.eps3_strong,
    }
}

pub fn f_dyn_approx(derived: &DerivedQuantities, regime: Confinement) -> f64 {
    1.0 - eps3(derived, regime)
}

/// `½cos²θ [1 + F_geo F_dyn] + (Γ₀/2Γ) sin²θ`.
pub fn fidelity_total(params: &ProtocolParams, f_geo: f64, f_dyn: f64) -> f64 {
    let s2 = params.laser.theta_las.sin().powi(2);
    let c2 = 1.0 - s2;
    0.5 * c2 * (1.0 + f_geo * f_dyn) + 0.5 * params.levels.gamma0_frac * s2
}

/// `1 − ½[ε₁ + ε₂²/6 + ε₃]`.
pub fn fidelity_linearized_eps(eps1: f64, eps2: f64, eps3: f64) -> f64 {
    1.0 - 0.5 * (eps1 + eps2 * eps2 / 6.0 + eps3)
}

pub fn fidelity_linearized(derived: &DerivedQuantities, regime: Confinement) -> f64 {
    fidelity_linearized_eps(derived.eps1, derived.eps2, eps3(derived, regime))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdetForm {
    Direct,
    Epsilon,
}

/// Detection-probability inputs in the small-parameter form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonPdet {
    pub eta_d: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub ly_over_lx: f64,
    pub big_d_over_lx: f64,
    /// `λ₁/d`
    pub lambda_over_d: f64,
}

impl EpsilonPdet {
    pub fn probability(&self) -> f64 {
        4.0 / PI
            * self.eta_d
            * self.eps1
            * self.eps2.powi(3)
            * self.ly_over_lx
            * self.big_d_over_lx
            * self.lambda_over_d.powi(3)
    }
}

pub fn detection_probability(params: &ProtocolParams, form: PdetForm) -> f64 {
    let g = &params.geometry;
    let s2 = params.laser.theta_las.sin().powi(2);
    let eta_d = params.levels.eta_d;
    match form {
        PdetForm::Direct => {
            let r2 = g.d * g.d + g.big_d * g.big_d;
            s2 * eta_d * g.big_d * g.lx * g.ly / (TWO_PI * r2 * r2.sqrt())
        }
        PdetForm::Epsilon => EpsilonPdet {
            eta_d,
            eps1: s2,
            eps2: g.d * g.lx / (2.0 * g.atom_detector_distance()),
            ly_over_lx: g.ly / g.lx,
            big_d_over_lx: g.big_d / g.lx,
            lambda_over_d: 1.0 / g.d,
        }
        .probability(),
    }
}

/// Detector distance maximising the detection probability, `d/√2`.
pub fn optimal_detector_distance(d: f64) -> f64 {
    d * FRAC_1_SQRT_2
}

/// Golden-section maximisation of `f` on `[lo, hi]` down to a bracket of
/// relative width `rel_tol`.
pub fn golden_section_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, rel_tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while (hi - lo) > rel_tol * 0.5 * (lo.abs() + hi.abs()) {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

/// Numerical argmax over `D ∈ (0, 10d)` of the direct detection probability,
/// all other parameters held fixed.
pub fn argmax_detector_distance(params: &ProtocolParams) -> f64 {
    let d = params.geometry.d;
    golden_section_max(
        |big_d| {
            let mut p = *params;
            p.geometry.big_d = big_d;
            detection_probability(&p, PdetForm::Direct)
        },
        1e-9 * d,
        10.0 * d,
        1e-10,
    )
}

pub const CHSH_THRESHOLD: f64 = 0.79;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Chsh {
    Violates,
    Inconclusive,
}

impl Chsh {
    pub fn as_str(self) -> &'static str {
        match self {
            Chsh::Violates => "violates",
            Chsh::Inconclusive => "inconclusive",
        }
    }
}

pub fn chsh_threshold(fidelity: f64) -> Chsh {
    chsh_threshold_at(fidelity, CHSH_THRESHOLD)
}

pub fn chsh_threshold_at(fidelity: f64, threshold: f64) -> Chsh {
    if fidelity >= threshold {
        Chsh::Violates
    } else {
        Chsh::Inconclusive
    }
}
