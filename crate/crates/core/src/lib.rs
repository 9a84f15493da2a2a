//! Heralded entanglement of two trapped atoms by detection of a single
//! scattered photon whose source cannot be identified.
//!
//! Lengths are in units of the emitted wavelength `λ₁`, rates in units of the
//! excited-state decay rate `Γ` and temperatures in units of the Doppler
//! temperature `T_D = ħΓ/2k_B`.

pub mod analytic;
pub mod conditional;
pub mod frame;
pub mod montecarlo;
pub mod motional;
pub mod params;
pub mod quadrature;
pub mod sweeps;

pub use analytic::{Chsh, Confinement, GeoConvention, PdetForm, QuadratureConfig};
pub use conditional::{MMatrix, NAtomIdealState, TwoAtomState};
pub use frame::{CanonicalFrame, Vec3};
pub use montecarlo::{Estimate, McError, ProtocolReport};
pub use motional::{FockTruncation, MotionalTraceResult, WaveVector};
pub use num_complex::Complex64;
pub use params::{
    derive, validate, ConfigKey, DerivedQuantities, GeometryParams, LaserParams, LevelParams,
    ParamError, ProtocolParams, TrapParams, Validated,
};
pub use quadrature::QuadError;
pub use sweeps::{Cell, Fig2Spec, SweepOutput, SweepSpec, SweepTable};
