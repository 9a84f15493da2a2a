//! Physical parameter sets and the dimensionless quantities derived from them.
//!
//! Lengths are in units of the detected wavelength `λ₁`, rates in units of the
//! total decay width `Γ`, temperatures in units of the Doppler temperature
//! `T_D = ħΓ/2k_B`. Nothing here knows about SI constants: the rescaled
//! Lamb–Dicke parameter `η_I` and `T/T_D` are the primitive inputs.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TWO_PI: f64 = 2.0 * PI;

/// Default far-field threshold on `k₁·√(d²+D²)`.
pub const DEFAULT_FAR_FIELD_THRESHOLD: f64 = 10.0 * TWO_PI;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("invalid value for `{key}`: {value} ({reason})")]
    Invalid {
        key: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("duplicate config key `{0}`")]
    DuplicateKey(String),
    #[error("config key `{key}`: cannot parse `{raw}` as a number")]
    BadNumber { key: String, raw: String },
    #[error("config line {line}: expected `key = value`, got `{text}`")]
    Malformed { line: usize, text: String },
}

/// The twelve config keys, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConfigKey {
    #[serde(rename = "d")]
    HalfSeparation,
    #[serde(rename = "D")]
    DetectorDistance,
    #[serde(rename = "Lx")]
    Lx,
    #[serde(rename = "Ly")]
    Ly,
    #[serde(rename = "chi_deg")]
    ChiDeg,
    #[serde(rename = "theta_las")]
    ThetaLas,
    #[serde(rename = "k_ratio")]
    KRatio,
    #[serde(rename = "eta_I")]
    EtaI,
    #[serde(rename = "nu_over_Gamma")]
    NuOverGamma,
    #[serde(rename = "T_over_TD")]
    TOverTd,
    #[serde(rename = "Gamma0_frac")]
    Gamma0Frac,
    #[serde(rename = "eta_D")]
    EtaD,
}

impl ConfigKey {
    pub const ALL: [ConfigKey; 12] = [
        ConfigKey::HalfSeparation,
        ConfigKey::DetectorDistance,
        ConfigKey::Lx,
        ConfigKey::Ly,
        ConfigKey::ChiDeg,
        ConfigKey::ThetaLas,
        ConfigKey::KRatio,
        ConfigKey::EtaI,
        ConfigKey::NuOverGamma,
        ConfigKey::TOverTd,
        ConfigKey::Gamma0Frac,
        ConfigKey::EtaD,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConfigKey::HalfSeparation => "d",
            ConfigKey::DetectorDistance => "D",
            ConfigKey::Lx => "Lx",
            ConfigKey::Ly => "Ly",
            ConfigKey::ChiDeg => "chi_deg",
            ConfigKey::ThetaLas => "theta_las",
            ConfigKey::KRatio => "k_ratio",
            ConfigKey::EtaI => "eta_I",
            ConfigKey::NuOverGamma => "nu_over_Gamma",
            ConfigKey::TOverTd => "T_over_TD",
            ConfigKey::Gamma0Frac => "Gamma0_frac",
            ConfigKey::EtaD => "eta_D",
        }
    }
}

impl fmt::Display for ConfigKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConfigKey {
    type Err = ParamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ConfigKey::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ParamError::UnknownKey(s.to_string()))
    }
}

/// Atom/detector geometry. Atoms sit at `(±d, 0, 0)`, the detector center at
/// `(0, 0, D)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryParams {
    /// Half-separation of the atoms.
    pub d: f64,
    /// Distance of the detector plane from the atom segment.
    #[serde(rename = "D")]
    pub big_d: f64,
    /// Detector extent along X (in the plane containing both atoms).
    pub lx: f64,
    /// Detector extent along Y.
    pub ly: f64,
    /// Angle between each laser and its atom→detector-center line, degrees.
    pub chi_deg: f64,
}

impl GeometryParams {
    pub fn chi(&self) -> f64 {
        self.chi_deg.to_radians()
    }

    /// Atom to detector-center distance `√(d²+D²)`.
    pub fn atom_detector_distance(&self) -> f64 {
        self.d.hypot(self.big_d)
    }

    pub fn far_field(&self, threshold: f64) -> FarField {
        let k1_r = TWO_PI * self.atom_detector_distance();
        FarField {
            k1_r,
            threshold,
            satisfied: k1_r >= threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapParams {
    /// Trap angular frequency over the total decay width, `ν/Γ`.
    pub nu_over_gamma: f64,
    /// Rescaled Lamb–Dicke parameter `η_I = k₁√(ħ/2mΓ)`.
    pub eta_i: f64,
    /// Initial temperature over the Doppler temperature.
    pub t_over_td: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserParams {
    /// Pulse area.
    pub theta_las: f64,
    /// `|k_laser| / k₁`.
    pub k_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelParams {
    /// Branching fraction `Γ₀/Γ` into the undetected channel.
    pub gamma0_frac: f64,
    /// Detector quantum efficiency.
    pub eta_d: f64,
}

impl LevelParams {
    pub fn gamma1_frac(&self) -> f64 {
        1.0 - self.gamma0_frac
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub geometry: GeometryParams,
    pub trap: TrapParams,
    pub laser: LaserParams,
    pub levels: LevelParams,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams::favorable_scenario()
    }
}

impl ProtocolParams {
    /// A physically consistent realisation of the favourable operating point
    /// `ε₁ = 0.1`, `ε₂ = 0.5`, `ε₃(weak) = 0.1`: `d = 50`, `D = 5d`,
    /// `L_x = √(d²+D²)/50` (so `D/L_x ≈ 49`), `L_y/L_x = 30`, `η_D = 0.5`,
    /// `η_I = 0.3` at `T = 0`, `χ = 8°`.
    pub fn favorable_scenario() -> Self {
        let d = 50.0;
        let big_d = 250.0;
        let lx = f64::hypot(d, big_d) / 50.0;
        let eta_i: f64 = 0.3;
        ProtocolParams {
            geometry: GeometryParams {
                d,
                big_d,
                lx,
                ly: 30.0 * lx,
                chi_deg: 8.0,
            },
            trap: TrapParams {
                // 2 η_I² ν/Γ = 0.1 at T = 0
                nu_over_gamma: 0.1 / (2.0 * eta_i * eta_i),
                eta_i,
                t_over_td: 0.0,
            },
            laser: LaserParams {
                theta_las: 0.1f64.sqrt().asin(),
                k_ratio: 1.0,
            },
            levels: LevelParams {
                gamma0_frac: 0.0,
                eta_d: 0.5,
            },
        }
    }

    pub fn get(&self, key: ConfigKey) -> f64 {
        match key {
            ConfigKey::HalfSeparation => self.geometry.d,
            ConfigKey::DetectorDistance => self.geometry.big_d,
            ConfigKey::Lx => self.geometry.lx,
            ConfigKey::Ly => self.geometry.ly,
            ConfigKey::ChiDeg => self.geometry.chi_deg,
            ConfigKey::ThetaLas => self.laser.theta_las,
            ConfigKey::KRatio => self.laser.k_ratio,
            ConfigKey::EtaI => self.trap.eta_i,
            ConfigKey::NuOverGamma => self.trap.nu_over_gamma,
            ConfigKey::TOverTd => self.trap.t_over_td,
            ConfigKey::Gamma0Frac => self.levels.gamma0_frac,
            ConfigKey::EtaD => self.levels.eta_d,
        }
    }

    pub fn set(&mut self, key: ConfigKey, value: f64) {
        let slot = match key {
            ConfigKey::HalfSeparation => &mut self.geometry.d,
            ConfigKey::DetectorDistance => &mut self.geometry.big_d,
            ConfigKey::Lx => &mut self.geometry.lx,
            ConfigKey::Ly => &mut self.geometry.ly,
            ConfigKey::ChiDeg => &mut self.geometry.chi_deg,
            ConfigKey::ThetaLas => &mut self.laser.theta_las,
            ConfigKey::KRatio => &mut self.laser.k_ratio,
            ConfigKey::EtaI => &mut self.trap.eta_i,
            ConfigKey::NuOverGamma => &mut self.trap.nu_over_gamma,
            ConfigKey::TOverTd => &mut self.trap.t_over_td,
            ConfigKey::Gamma0Frac => &mut self.levels.gamma0_frac,
            ConfigKey::EtaD => &mut self.levels.eta_d,
        };
        *slot = value;
    }

    pub fn with(mut self, key: ConfigKey, value: f64) -> Self {
        self.set(key, value);
        self
    }

    /// Parse the flat `key = value` config format on top of `self`.
    ///
    /// Blank lines and lines starting with `#` are skipped. Keys not present
    /// keep their current value.
    pub fn apply_config_str(mut self, text: &str) -> Result<Self, ParamError> {
        let mut seen = Vec::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ParamError::Malformed {
                    line: idx + 1,
                    text: line.to_string(),
                });
            };
            let key: ConfigKey = k.trim().parse()?;
            if seen.contains(&key) {
                return Err(ParamError::DuplicateKey(key.to_string()));
            }
            seen.push(key);
            let raw = v.trim();
            let value: f64 = raw.parse().map_err(|_| ParamError::BadNumber {
                key: key.to_string(),
                raw: raw.to_string(),
            })?;
            self.set(key, value);
        }
        Ok(self)
    }

    pub fn from_config_str(text: &str) -> Result<Self, ParamError> {
        ProtocolParams::default().apply_config_str(text)
    }

    /// Canonical config text: every key, canonical order, shortest
    /// round-trip decimal values.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        for key in ConfigKey::ALL {
            out.push_str(key.as_str());
            out.push_str(" = ");
            out.push_str(&format!("{:?}", self.get(key)));
            out.push('\n');
        }
        out
    }
}

/// Far-field diagnostic `k₁·√(d²+D²)` attached by [`validate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FarField {
    pub k1_r: f64,
    pub threshold: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Validated {
    pub params: ProtocolParams,
    pub far_field: FarField,
}

fn check(key: &'static str, value: f64, ok: bool, reason: &'static str) -> Result<(), ParamError> {
    if value.is_finite() && ok {
        Ok(())
    } else {
        Err(ParamError::Invalid { key, value, reason })
    }
}

pub fn validate(raw: ProtocolParams) -> Result<Validated, ParamError> {
    validate_with_threshold(raw, DEFAULT_FAR_FIELD_THRESHOLD)
}

pub fn validate_with_threshold(
    raw: ProtocolParams,
    far_field_threshold: f64,
) -> Result<Validated, ParamError> {
    let g = &raw.geometry;
    check("d", g.d, g.d > 0.0, "must be > 0")?;
    check("D", g.big_d, g.big_d > 0.0, "must be > 0")?;
    check("Lx", g.lx, g.lx > 0.0, "must be > 0")?;
    check("Ly", g.ly, g.ly > 0.0, "must be > 0")?;
    check(
        "chi_deg",
        g.chi_deg,
        (0.0..90.0).contains(&g.chi_deg),
        "must lie in [0, 90)",
    )?;
    let t = &raw.trap;
    check("nu_over_Gamma", t.nu_over_gamma, t.nu_over_gamma > 0.0, "must be > 0")?;
    check("eta_I", t.eta_i, t.eta_i > 0.0, "must be > 0")?;
    check("T_over_TD", t.t_over_td, t.t_over_td >= 0.0, "must be >= 0")?;
    let l = &raw.laser;
    check(
        "theta_las",
        l.theta_las,
        l.theta_las > 0.0 && l.theta_las < FRAC_PI_2,
        "must lie in (0, pi/2)",
    )?;
    check("k_ratio", l.k_ratio, l.k_ratio > 0.0, "must be > 0")?;
    let v = &raw.levels;
    check(
        "Gamma0_frac",
        v.gamma0_frac,
        (0.0..=1.0).contains(&v.gamma0_frac),
        "must lie in [0, 1]",
    )?;
    check("eta_D", v.eta_d, (0.0..=1.0).contains(&v.eta_d), "must lie in [0, 1]")?;
    Ok(Validated {
        params: raw,
        far_field: raw.geometry.far_field(far_field_threshold),
    })
}

/// Scalars derived from a validated [`ProtocolParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedQuantities {
    /// Lamb–Dicke parameter `η = k₁ a_tp = η_I √(Γ/ν)`.
    pub eta: f64,
    pub eta_i: f64,
    /// Ground-state size `a_tp` in units of `λ₁`.
    pub a_tp: f64,
    pub nu_over_gamma: f64,
    /// `coth(ħν / 2k_B T)`; exactly 1 at `T = 0`.
    pub coth_factor: f64,
    pub nbar: f64,
    /// `sin²θ_las`.
    pub eps1: f64,
    /// `d L_x / (2 λ₁ √(d²+D²))`.
    pub eps2: f64,
    pub eps3_weak: f64,
    pub eps3_strong: f64,
    /// Temperature in units of `ħΓ/2k_B`.
    pub t_doppler_units: f64,
}

/// `coth(ħν/2k_BT)` written as `coth[(ν/Γ)/(T/T_D)]`.
pub fn coth_factor(nu_over_gamma: f64, t_over_td: f64) -> f64 {
    if t_over_td == 0.0 {
        1.0
    } else {
        1.0 / (nu_over_gamma / t_over_td).tanh()
    }
}

pub fn derive(params: &ProtocolParams) -> DerivedQuantities {
    let trap = &params.trap;
    let g = &params.geometry;
    let eta = trap.eta_i * (1.0 / trap.nu_over_gamma).sqrt();
    let coth = coth_factor(trap.nu_over_gamma, trap.t_over_td);
    let eps3_strong = 2.0 * eta * eta * coth;
    DerivedQuantities {
        eta,
        eta_i: trap.eta_i,
        a_tp: eta / TWO_PI,
        nu_over_gamma: trap.nu_over_gamma,
        coth_factor: coth,
        nbar: (coth - 1.0) / 2.0,
        eps1: params.laser.theta_las.sin().powi(2),
        eps2: g.d * g.lx / (2.0 * g.atom_detector_distance()),
        eps3_weak: eps3_strong * trap.nu_over_gamma * trap.nu_over_gamma,
        eps3_strong,
        t_doppler_units: trap.t_over_td,
    }
}

/// `ε₂` in the rewritten form `½ [ (λ₁/d) √((d/L_x)² + (D/L_x)²) ]⁻¹`.
pub fn eps2_rewritten(g: &GeometryParams) -> f64 {
    let bracket = (1.0 / g.d) * (g.d / g.lx).hypot(g.big_d / g.lx);
    0.5 / bracket
}
