//! The fixed laboratory frame every phase convention refers to.
//!
//! Atoms sit at `(±d, 0, 0)`; the detector is the rectangle in the plane
//! `z = D` spanning `|x| ≤ L_x/2`, `|y| ≤ L_y/2`. Each laser lies in the XZ
//! plane at angle `χ` to its atom→detector-center line, tilted away from the
//! detector normal; the two lasers are mirror images under `x → −x`.

use nalgebra::Vector3;

use crate::params::{ProtocolParams, TWO_PI};

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalFrame {
    pub atom_a: Vec3,
    pub atom_b: Vec3,
    pub detector_center: Vec3,
    /// Unit vector from atom A to the detector center.
    pub emission_a: Vec3,
    pub emission_b: Vec3,
    /// Unit propagation direction of the laser on atom A.
    pub laser_a: Vec3,
    pub laser_b: Vec3,
    pub k_ratio: f64,
    pub half_lx: f64,
    pub half_ly: f64,
}

impl CanonicalFrame {
    pub fn new(params: &ProtocolParams) -> Self {
        let g = &params.geometry;
        let atom_a = Vec3::new(g.d, 0.0, 0.0);
        let atom_b = Vec3::new(-g.d, 0.0, 0.0);
        let detector_center = Vec3::new(0.0, 0.0, g.big_d);
        let tilt = g.d.atan2(g.big_d) + g.chi();
        CanonicalFrame {
            atom_a,
            atom_b,
            detector_center,
            emission_a: (detector_center - atom_a).normalize(),
            emission_b: (detector_center - atom_b).normalize(),
            laser_a: Vec3::new(-tilt.sin(), 0.0, tilt.cos()),
            laser_b: Vec3::new(tilt.sin(), 0.0, tilt.cos()),
            k_ratio: params.laser.k_ratio,
            half_lx: 0.5 * g.lx,
            half_ly: 0.5 * g.ly,
        }
    }

    /// Laser wavevector on atom A in units of `k₁`.
    pub fn k_laser_a(&self) -> Vec3 {
        self.laser_a * self.k_ratio
    }

    pub fn k_laser_b(&self) -> Vec3 {
        self.laser_b * self.k_ratio
    }

    /// `k^A · r₀^A` in radians.
    pub fn laser_phase_a(&self) -> f64 {
        TWO_PI * self.k_laser_a().dot(&self.atom_a)
    }

    pub fn laser_phase_b(&self) -> f64 {
        TWO_PI * self.k_laser_b().dot(&self.atom_b)
    }

    /// Whether the point `(x, y, D)` lies on the detector surface.
    pub fn on_detector(&self, x: f64, y: f64) -> bool {
        x.abs() <= self.half_lx && y.abs() <= self.half_ly
    }
}
