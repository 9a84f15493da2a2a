//! Thermal traces of displacement-operator products for one atom in an
//! isotropic 3-D harmonic trap.
//!
//! The quantity is `tr[e^{-i k_out·s(t)} e^{+i k_in·s(0)} ρ_th]`, where the
//! right factor is the laser kick and the left factor the emission recoil
//! towards the detector, `s(t)` the Heisenberg-picture displacement from the
//! trap center and `ρ_th ∝ exp(−H_tp/k_B T)`. Wavevectors are in units of
//! `k₁`, so `k·s = η Σ_j κ_j (b_j e^{-iνt} + b_j† e^{iνt})`.
//!
//! Three routes are provided: the closed form, a truncated Fock-space oracle
//! that exponentiates the truncated position operator numerically, and a
//! classical (Wigner) phase-space sampler.

use std::collections::HashMap;
use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::Vec3;
use crate::params::{coth_factor, DerivedQuantities};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MotionalError {
    #[error(
        "Fock truncation n_max = {n_max} leaves thermal weight {tail:e} above tolerance {tol:e}"
    )]
    TruncationInadequate { n_max: usize, tail: f64, tol: f64 },
    #[error("Fock oracle did not self-converge: doubling n_max = {n_max} changed the trace by {change:e} (tolerance {tol:e})")]
    NotConverged { n_max: usize, change: f64, tol: f64 },
}

/// A wavevector in units of `k₁ = 2π/λ₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveVector(pub [f64; 3]);

impl WaveVector {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        WaveVector([x, y, z])
    }

    pub fn from_vec3(v: &Vec3) -> Self {
        WaveVector([v.x, v.y, v.z])
    }

    pub fn modulus(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, other: &WaveVector) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceMethod {
    ClosedForm,
    FockOracle,
    PhaseSpace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionalTraceResult {
    pub value: Complex64,
    pub method: TraceMethod,
    pub n_max: Option<usize>,
    pub error_estimate: f64,
}

/// Temperature-independent phase `−η² (κ_in·κ_out) sin(νt)` from composing
/// the two displacements.
pub fn commutator_phase(k_in: &WaveVector, k_out: &WaveVector, t: f64, trap: &DerivedQuantities) -> f64 {
    -trap.eta * trap.eta * k_in.dot(k_out) * (trap.nu_over_gamma * t).sin()
}

/// Closed form of the single-atom trace; `t` is in units of `1/Γ`.
pub fn motional_trace_closed_form(
    k_in: &WaveVector,
    k_out: &WaveVector,
    t: f64,
    trap: &DerivedQuantities,
) -> Complex64 {
    let eta2 = trap.eta * trap.eta;
    let nu_t = trap.nu_over_gamma * t;
    let quad = 0.5 * (k_in.dot(k_in) + k_out.dot(k_out)) - k_in.dot(k_out) * nu_t.cos();
    let magnitude = (-eta2 * trap.coth_factor * quad).exp();
    Complex64::from_polar(magnitude, commutator_phase(k_in, k_out, t, trap))
}

/// Boltzmann ratio `q = e^{-ħν/k_BT} = n̄/(n̄+1)` of consecutive level weights.
pub fn boltzmann_ratio(trap: &DerivedQuantities) -> f64 {
    trap.nbar / (trap.nbar + 1.0)
}

/// Thermal weight carried by levels above `n_max`, `q^{n_max+1}`.
pub fn thermal_tail_weight(q: f64, n_max: usize) -> f64 {
    q.powi(n_max as i32 + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FockTruncation {
    /// Highest retained number state per Cartesian mode.
    pub n_max: usize,
    pub convergence_tol: f64,
}

impl FockTruncation {
    /// Truncation for a given trace: enough levels that the dropped thermal
    /// weight is below `convergence_tol`, plus room for the displacement to
    /// spread the populated states.
    pub fn for_trace(
        k_in: &WaveVector,
        k_out: &WaveVector,
        trap: &DerivedQuantities,
        convergence_tol: f64,
    ) -> Self {
        let q = boltzmann_ratio(trap);
        let n_tail = if q == 0.0 {
            0
        } else {
            ((convergence_tol.ln() / q.ln()).ceil() as usize).saturating_sub(1)
        };
        let reach = trap.eta * (k_in.modulus() + k_out.modulus());
        let margin = 3.0 * reach * ((n_tail + 1) as f64).sqrt() + reach * reach + 30.0;
        let n_max = n_tail + margin.ceil() as usize;
        FockTruncation {
            n_max: n_max.div_ceil(32) * 32,
            convergence_tol,
        }
    }
}

/// Spectral decomposition of the truncated `X = b + b†` for one mode.
pub struct FockOracle {
    dim: usize,
    eigvals: Vec<f64>,
    eigvecs: DMatrix<f64>,
}

impl FockOracle {
    pub fn new(n_max: usize) -> Self {
        let dim = n_max + 1;
        let mut x = DMatrix::<f64>::zeros(dim, dim);
        for k in 1..dim {
            let v = (k as f64).sqrt();
            x[(k - 1, k)] = v;
            x[(k, k - 1)] = v;
        }
        let eig = SymmetricEigen::new(x);
        FockOracle {
            dim,
            eigvals: eig.eigenvalues.iter().copied().collect(),
            eigvecs: eig.eigenvectors,
        }
    }

    pub fn n_max(&self) -> usize {
        self.dim - 1
    }

    /// First `rows` rows of `cos(θX)` and `sin(θX)`.
    fn cos_sin_rows(&self, theta: f64, rows: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let head = self.eigvecs.rows(0, rows);
        let mut wc = head.clone_owned();
        let mut ws = head.clone_owned();
        for (k, &lambda) in self.eigvals.iter().enumerate() {
            let (s, c) = (theta * lambda).sin_cos();
            wc.column_mut(k).scale_mut(c);
            ws.column_mut(k).scale_mut(s);
        }
        let vt = self.eigvecs.transpose();
        (wc * &vt, ws * &vt)
    }

    /// One Cartesian mode: `Σ_n ρ_n ⟨n| e^{-iα X(νt)} e^{iβ X} |n⟩`.
    fn mode_trace(&self, alpha: f64, beta: f64, nu_t: f64, q: f64) -> Complex64 {
        if alpha == 0.0 && beta == 0.0 {
            return Complex64::new(1.0, 0.0);
        }
        let populated = if q == 0.0 {
            1
        } else {
            // levels with relative weight above 1e-18
            (((1e-18f64).ln() / q.ln()).ceil() as usize + 1).min(self.dim)
        };
        let (ca, sa) = self.cos_sin_rows(alpha, populated);
        let (cb, sb) = self.cos_sin_rows(beta, populated);
        let mut weight = 1.0;
        let mut norm = 0.0;
        let mut acc = Complex64::new(0.0, 0.0);
        for n in 0..populated {
            let mut row = Complex64::new(0.0, 0.0);
            for m in 0..self.dim {
                // A_nm = e^{iνt(n−m)} (cos αX − i sin αX)_nm, B_mn = (cos βX + i sin βX)_nm
                let a = Complex64::new(ca[(n, m)], -sa[(n, m)]);
                let b = Complex64::new(cb[(n, m)], sb[(n, m)]);
                row += Complex64::from_polar(1.0, nu_t * (n as f64 - m as f64)) * a * b;
            }
            acc += row * weight;
            norm += weight;
            weight *= q;
        }
        // remaining weight of the truncated (normalised) thermal state
        let total_norm = if q == 0.0 {
            1.0
        } else {
            (1.0 - q.powi(self.dim as i32)) / (1.0 - q)
        };
        debug_assert!(norm <= total_norm * (1.0 + 1e-12));
        acc / total_norm
    }

    /// Product over the three Cartesian modes; `t` in units of `1/Γ`.
    pub fn trace(
        &self,
        k_in: &WaveVector,
        k_out: &WaveVector,
        t: f64,
        trap: &DerivedQuantities,
    ) -> Complex64 {
        let q = boltzmann_ratio(trap);
        let nu_t = trap.nu_over_gamma * t;
        (0..3)
            .map(|j| self.mode_trace(trap.eta * k_out.0[j], trap.eta * k_in.0[j], nu_t, q))
            .product()
    }
}

/// Memoises [`FockOracle`] decompositions by truncation.
#[derive(Default)]
pub struct FockOracleCache {
    oracles: HashMap<usize, FockOracle>,
}

impl FockOracleCache {
    pub fn get(&mut self, n_max: usize) -> &FockOracle {
        self.oracles
            .entry(n_max)
            .or_insert_with(|| FockOracle::new(n_max))
    }

    /// Oracle trace at `trunc.n_max`, with the change on doubling `n_max` as
    /// the error estimate.
    pub fn trace(
        &mut self,
        k_in: &WaveVector,
        k_out: &WaveVector,
        t: f64,
        trap: &DerivedQuantities,
        trunc: &FockTruncation,
    ) -> Result<MotionalTraceResult, MotionalError> {
        let q = boltzmann_ratio(trap);
        let tail = thermal_tail_weight(q, trunc.n_max);
        if tail >= trunc.convergence_tol {
            return Err(MotionalError::TruncationInadequate {
                n_max: trunc.n_max,
                tail,
                tol: trunc.convergence_tol,
            });
        }
        let value = self.get(trunc.n_max).trace(k_in, k_out, t, trap);
        let doubled = self.get(2 * trunc.n_max + 1).trace(k_in, k_out, t, trap);
        let change = (doubled - value).norm();
        if change >= trunc.convergence_tol {
            return Err(MotionalError::NotConverged {
                n_max: trunc.n_max,
                change,
                tol: trunc.convergence_tol,
            });
        }
        Ok(MotionalTraceResult {
            value,
            method: TraceMethod::FockOracle,
            n_max: Some(trunc.n_max),
            error_estimate: change,
        })
    }
}

pub fn motional_trace_fock_oracle(
    k_in: &WaveVector,
    k_out: &WaveVector,
    t: f64,
    trap: &DerivedQuantities,
    trunc: &FockTruncation,
) -> Result<MotionalTraceResult, MotionalError> {
    FockOracleCache::default().trace(k_in, k_out, t, trap, trunc)
}

/// Oracle value at each requested truncation, without any adequacy check.
pub fn fock_convergence_curve(
    k_in: &WaveVector,
    k_out: &WaveVector,
    t: f64,
    trap: &DerivedQuantities,
    n_values: &[usize],
) -> Vec<(usize, Complex64)> {
    n_values
        .iter()
        .map(|&n| (n, FockOracle::new(n).trace(k_in, k_out, t, trap)))
        .collect()
}

/// Phase-space point of the three Cartesian modes in the quadrature
/// convention `x = (b + b†)/√2`, `p = i(b† − b)/√2`; the displacement is
/// `s = √2 a_tp x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpacePoint {
    pub position: [f64; 3],
    pub momentum: [f64; 3],
}

/// Draw from the thermal Wigner distribution: every quadrature is an
/// independent Gaussian of variance `coth/2`.
pub fn sample_thermal_phase_space<R: Rng + ?Sized>(trap: &DerivedQuantities, rng: &mut R) -> PhaseSpacePoint {
    let sigma = (0.5 * trap.coth_factor).sqrt();
    let mut draw = || sigma * rng.sample::<f64, _>(StandardNormal);
    PhaseSpacePoint {
        position: [draw(), draw(), draw()],
        momentum: [draw(), draw(), draw()],
    }
}

/// Classical phase `k_in·s(0) − k_out·s(t)` along the trap orbit through
/// `point`.
pub fn classical_phase(
    k_in: &WaveVector,
    k_out: &WaveVector,
    t: f64,
    trap: &DerivedQuantities,
    point: &PhaseSpacePoint,
) -> f64 {
    let (s, c) = (trap.nu_over_gamma * t).sin_cos();
    let mut phase = 0.0;
    for j in 0..3 {
        let x0 = SQRT_2 * point.position[j];
        let p0 = SQRT_2 * point.momentum[j];
        let xt = x0 * c + p0 * s;
        phase += k_in.0[j] * x0 - k_out.0[j] * xt;
    }
    trap.eta * phase
}

/// Grid for the closed-form vs Fock-oracle comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleGrid {
    pub eta_i: Vec<f64>,
    pub t_over_td: Vec<f64>,
    pub nu_over_gamma: Vec<f64>,
    pub nu_t: Vec<f64>,
    /// Angle between kick and emission, radians.
    pub chi: f64,
    pub k_ratio: f64,
    pub tolerance: f64,
    pub convergence_tol: f64,
}

impl Default for OracleGrid {
    fn default() -> Self {
        OracleGrid {
            eta_i: vec![0.05, 0.3],
            t_over_td: vec![0.0, 0.5, 1.0],
            nu_over_gamma: vec![0.05, 0.3, 1.0],
            nu_t: vec![0.0, 1.0, 3.0],
            chi: 8f64.to_radians(),
            k_ratio: 1.0,
            tolerance: 1e-6,
            convergence_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OraclePoint {
    pub eta_i: f64,
    pub t_over_td: f64,
    pub nu_over_gamma: f64,
    pub nu_t: f64,
    pub closed_form: Complex64,
    pub fock: Result<MotionalTraceResult, String>,
    /// Larger of the real and imaginary discrepancies (infinite on failure).
    pub max_abs_diff: f64,
}

impl OraclePoint {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.fock.is_ok() && self.max_abs_diff <= tolerance
    }
}

/// Trap quantities for one oracle-grid point.
pub fn trap_point(eta_i: f64, nu_over_gamma: f64, t_over_td: f64) -> DerivedQuantities {
    let eta = eta_i / nu_over_gamma.sqrt();
    let coth = coth_factor(nu_over_gamma, t_over_td);
    DerivedQuantities {
        eta,
        eta_i,
        a_tp: eta / crate::params::TWO_PI,
        nu_over_gamma,
        coth_factor: coth,
        nbar: (coth - 1.0) / 2.0,
        eps1: 0.0,
        eps2: 0.0,
        eps3_weak: 2.0 * eta * eta * coth * nu_over_gamma * nu_over_gamma,
        eps3_strong: 2.0 * eta * eta * coth,
        t_doppler_units: t_over_td,
    }
}

pub fn run_oracle_grid(grid: &OracleGrid) -> Vec<OraclePoint> {
    let k_in = WaveVector::new(grid.k_ratio * grid.chi.sin(), 0.0, grid.k_ratio * grid.chi.cos());
    let k_out = WaveVector::new(0.0, 0.0, 1.0);
    let mut cache = FockOracleCache::default();
    let mut out = Vec::new();
    for &eta_i in &grid.eta_i {
        for &temp in &grid.t_over_td {
            for &nu in &grid.nu_over_gamma {
                let trap = trap_point(eta_i, nu, temp);
                let trunc = FockTruncation::for_trace(&k_in, &k_out, &trap, grid.convergence_tol);
                for &nu_t in &grid.nu_t {
                    let t = nu_t / nu;
                    let closed = motional_trace_closed_form(&k_in, &k_out, t, &trap);
                    let fock = cache.trace(&k_in, &k_out, t, &trap, &trunc);
                    let max_abs_diff = match &fock {
                        Ok(r) => (r.value.re - closed.re).abs().max((r.value.im - closed.im).abs()),
                        Err(_) => f64::INFINITY,
                    };
                    out.push(OraclePoint {
                        eta_i,
                        t_over_td: temp,
                        nu_over_gamma: nu,
                        nu_t,
                        closed_form: closed,
                        fock: fock.map_err(|e| e.to_string()),
                        max_abs_diff,
                    });
                }
            }
        }
    }
    out
}
