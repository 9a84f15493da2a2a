//! Two-atom state conditioned on a single detector click.
//!
//! Basis order is `|00⟩, |01⟩, |10⟩, |11⟩` with `|a b⟩` meaning atom A in
//! `|a⟩` and atom B in `|b⟩`; `|1⟩` is the level reached by emitting a
//! detectable photon.

use nalgebra::{Matrix4, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::frame::{CanonicalFrame, Vec3};
use crate::params::{ProtocolParams, TWO_PI};

/// Detector-integrated emission overlaps, up to a common factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MMatrix {
    pub aa: Complex64,
    pub bb: Complex64,
    pub ab: Complex64,
}

impl MMatrix {
    pub fn ba(&self) -> Complex64 {
        self.ab.conj()
    }
}

/// `k^A·r^A − k^B·r^B` for laser wavevectors in units of `k₁` and positions
/// in units of `λ₁`, in radians.
pub fn laser_phase_difference(k_a: &Vec3, r_a: &Vec3, k_b: &Vec3, r_b: &Vec3) -> f64 {
    TWO_PI * (k_a.dot(r_a) - k_b.dot(r_b))
}

/// Phase `φ` of the target Bell state in the canonical frame.
pub fn canonical_phase(params: &ProtocolParams) -> f64 {
    let f = CanonicalFrame::new(params);
    laser_phase_difference(&f.k_laser_a(), &f.atom_a, &f.k_laser_b(), &f.atom_b)
}

/// Emission overlaps for a rectangular detector in the far field.
pub fn compute_m_matrix(params: &ProtocolParams, f_geo: f64, f_dyn: f64) -> MMatrix {
    let g = &params.geometry;
    let diag = g.lx * g.ly / (g.d * g.d + g.big_d * g.big_d);
    let phase = canonical_phase(params);
    MMatrix {
        aa: Complex64::new(diag, 0.0),
        bb: Complex64::new(diag, 0.0),
        ab: Complex64::from_polar(diag * f_geo * f_dyn, phase),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoAtomState {
    pub rho: Matrix4<Complex64>,
    /// Relative phase of the ideal target state.
    pub phi: f64,
}

impl TwoAtomState {
    pub fn trace(&self) -> Complex64 {
        self.rho.trace()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        (self.rho - self.rho.adjoint()).iter().all(|z| z.norm() <= tol)
    }

    pub fn eigenvalues(&self) -> [f64; 4] {
        let herm = (self.rho + self.rho.adjoint()).scale(0.5);
        let e = SymmetricEigen::new(herm).eigenvalues;
        [e[0], e[1], e[2], e[3]]
    }

    pub fn is_positive_semidefinite(&self, tol: f64) -> bool {
        self.eigenvalues().iter().all(|&l| l >= -tol)
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.is_hermitian(tol)
            && (self.trace() - Complex64::new(1.0, 0.0)).norm() <= tol
            && self.is_positive_semidefinite(tol)
    }
}

#[derive(Serialize, Deserialize)]
struct StateJson {
    /// Row-major `[re, im]` pairs.
    rho: Vec<[f64; 2]>,
    phi: f64,
}

impl Serialize for TwoAtomState {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut rho = Vec::with_capacity(16);
        for i in 0..4 {
            for j in 0..4 {
                let z = self.rho[(i, j)];
                rho.push([z.re, z.im]);
            }
        }
        StateJson { rho, phi: self.phi }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for TwoAtomState {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = StateJson::deserialize(d)?;
        if raw.rho.len() != 16 {
            return Err(serde::de::Error::invalid_length(raw.rho.len(), &"16 entries"));
        }
        let rho = Matrix4::from_fn(|i, j| {
            let [re, im] = raw.rho[4 * i + j];
            Complex64::new(re, im)
        });
        Ok(TwoAtomState { rho, phi: raw.phi })
    }
}

/// Normalised state after one click: single excitations weighted by
/// `cos²θ sin²θ`, double excitations by `sin⁴θ` and split between the two
/// decay branches of the undetected atom.
pub fn conditional_density_operator(params: &ProtocolParams, m: &MMatrix) -> TwoAtomState {
    let s2 = params.laser.theta_las.sin().powi(2);
    let c2 = 1.0 - s2;
    let single = c2 * s2;
    let double = s2 * s2;
    let g0 = params.levels.gamma0_frac;
    let g1 = params.levels.gamma1_frac();

    let mut rho = Matrix4::<Complex64>::zeros();
    rho[(2, 2)] = m.aa * (single + double * g0);
    rho[(1, 1)] = m.bb * (single + double * g0);
    rho[(2, 1)] = m.ab * single;
    rho[(1, 2)] = m.ba() * single;
    rho[(3, 3)] = (m.aa + m.bb) * (double * g1);
    let tr = rho.trace();
    TwoAtomState {
        rho: rho.unscale(tr.re),
        phi: canonical_phase(params),
    }
}

/// `⟨Ψ|ρ|Ψ⟩` for `|Ψ⟩ = (|01⟩ + e^{iφ}|10⟩)/√2`.
pub fn bell_fidelity(state: &TwoAtomState) -> f64 {
    let r = &state.rho;
    let coherence = r[(2, 1)] * Complex64::from_polar(1.0, -state.phi);
    0.5 * (r[(1, 1)].re + r[(2, 2)].re) + coherence.re
}

/// Same fidelity evaluated directly from the overlaps.
pub fn bell_fidelity_closed_form(params: &ProtocolParams, m: &MMatrix, phi: f64) -> f64 {
    let s2 = params.laser.theta_las.sin().powi(2);
    let c2 = 1.0 - s2;
    let ratio = (m.ab * Complex64::from_polar(1.0, -phi)).re / (m.aa + m.bb).re;
    0.5 * c2 * (1.0 + 2.0 * ratio) + 0.5 * params.levels.gamma0_frac * s2
}

/// Ideal single-excitation W state of `N` atoms with per-atom phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NAtomIdealState {
    pub phases: Vec<f64>,
}

impl NAtomIdealState {
    pub fn new(phases: Vec<f64>) -> Self {
        assert!(!phases.is_empty(), "need at least one atom");
        NAtomIdealState { phases }
    }

    pub fn n_atoms(&self) -> usize {
        self.phases.len()
    }

    /// Amplitude on the state with atom `j` excited.
    pub fn amplitude(&self, j: usize) -> Complex64 {
        Complex64::from_polar(1.0 / (self.phases.len() as f64).sqrt(), self.phases[j])
    }

    /// `|⟨other|self⟩|²`.
    pub fn overlap(&self, other: &NAtomIdealState) -> f64 {
        assert_eq!(self.n_atoms(), other.n_atoms(), "atom numbers differ");
        let sum: Complex64 = (0..self.n_atoms())
            .map(|j| other.amplitude(j).conj() * self.amplitude(j))
            .sum();
        sum.norm_sqr()
    }
}
