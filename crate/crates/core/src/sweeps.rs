//! Parameter sweeps and the canned scenario reproductions.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{
    chsh_threshold, detection_probability, f_dyn, f_dyn_approx, f_geo, fidelity_linearized,
    fidelity_total, Chsh, Confinement, GeoConvention, PdetForm, QuadratureConfig,
};
use crate::params::{derive, validate, ConfigKey, ProtocolParams};
use crate::quadrature::QuadError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("unknown sweep axis `{0}`")]
    UnknownAxis(String),
    #[error("unknown sweep output `{0}`")]
    UnknownOutput(String),
    #[error("sweep needs at least one axis value")]
    NoValues,
    #[error("sweep needs at least one output")]
    NoOutputs,
    #[error("non-finite axis value {0}")]
    NonFiniteValue(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOutput {
    FGeo,
    FDyn,
    FDynWeak,
    FDynStrong,
    Fidelity,
    FidelityLinearized,
    PDet,
    Chsh,
}

impl SweepOutput {
    pub const ALL: [SweepOutput; 8] = [
        Self::FGeo,
        Self::FDyn,
        Self::FDynWeak,
        Self::FDynStrong,
        Self::Fidelity,
        Self::FidelityLinearized,
        Self::PDet,
        Self::Chsh,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::FGeo => "f_geo",
            Self::FDyn => "f_dyn",
            Self::FDynWeak => "f_dyn_weak",
            Self::FDynStrong => "f_dyn_strong",
            Self::Fidelity => "fidelity",
            Self::FidelityLinearized => "fidelity_linearized",
            Self::PDet => "p_det",
            Self::Chsh => "chsh",
        }
    }
}

impl fmt::Display for SweepOutput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepOutput {
    type Err = SweepError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|o| o.as_str() == s)
            .ok_or_else(|| SweepError::UnknownOutput(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: ProtocolParams,
    pub axis: ConfigKey,
    pub values: Vec<f64>,
    pub outputs: Vec<SweepOutput>,
    #[serde(default)]
    pub convention: GeoConvention,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
}

impl SweepSpec {
    /// Build from textual axis and output names, rejecting unknown names
    /// and empty or non-finite value lists.
    pub fn parse(
        base: ProtocolParams,
        axis: &str,
        values: Vec<f64>,
        outputs: &[&str],
    ) -> Result<Self, SweepError> {
        let axis: ConfigKey = axis.parse().map_err(|_| SweepError::UnknownAxis(axis.to_string()))?;
        let outputs = outputs
            .iter()
            .map(|o| o.parse())
            .collect::<Result<Vec<SweepOutput>, _>>()?;
        let spec = SweepSpec {
            base,
            axis,
            values,
            outputs,
            convention: GeoConvention::default(),
            quadrature: QuadratureConfig::default(),
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn check(&self) -> Result<(), SweepError> {
        if self.values.is_empty() {
            return Err(SweepError::NoValues);
        }
        if self.outputs.is_empty() {
            return Err(SweepError::NoOutputs);
        }
        if let Some(&v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(SweepError::NonFiniteValue(v));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cell {
    Number(f64),
    Chsh(Chsh),
    Error(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: ConfigKey,
    pub outputs: Vec<SweepOutput>,
    pub rows: Vec<SweepRow>,
}

fn evaluate_point(spec: &SweepSpec, value: f64) -> Vec<Cell> {
    let params = match validate(spec.base.with(spec.axis, value)) {
        Ok(v) => v.params,
        Err(e) => return vec![Cell::Error(e.to_string()); spec.outputs.len()],
    };
    let derived = derive(&params);
    let regime = Confinement::for_trap(derived.nu_over_gamma);
    let fg = f_geo(&params.geometry, spec.convention);
    let needs_dyn = spec
        .outputs
        .iter()
        .any(|o| matches!(o, SweepOutput::FDyn | SweepOutput::Fidelity | SweepOutput::Chsh));
    let fd: Result<f64, QuadError> = if needs_dyn {
        f_dyn(&derived, params.geometry.chi(), &spec.quadrature)
    } else {
        Ok(f64::NAN)
    };
    let fidelity = fd.as_ref().map(|&fd| fidelity_total(&params, fg, fd));
    spec.outputs
        .iter()
        .map(|o| match o {
            SweepOutput::FGeo => Cell::Number(fg),
            SweepOutput::FDyn => fd.as_ref().map_or_else(|e| Cell::Error(e.to_string()), |&v| Cell::Number(v)),
            SweepOutput::FDynWeak => Cell::Number(f_dyn_approx(&derived, Confinement::Weak)),
            SweepOutput::FDynStrong => Cell::Number(f_dyn_approx(&derived, Confinement::Strong)),
            SweepOutput::Fidelity => fidelity
                .as_ref()
                .map_or_else(|e| Cell::Error(e.to_string()), |&v| Cell::Number(v)),
            SweepOutput::FidelityLinearized => Cell::Number(fidelity_linearized(&derived, regime)),
            SweepOutput::PDet => Cell::Number(detection_probability(&params, PdetForm::Direct)),
            SweepOutput::Chsh => fidelity
                .as_ref()
                .map_or_else(|e| Cell::Error(e.to_string()), |&v| Cell::Chsh(chsh_threshold(v))),
        })
        .collect()
}

/// Evaluate every output at every axis value. Points are computed in
/// parallel; rows keep the input order and failures become error cells.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepTable, SweepError> {
    spec.check()?;
    let rows = spec
        .values
        .par_iter()
        .map(|&v| SweepRow {
            axis_value: v,
            cells: evaluate_point(spec, v),
        })
        .collect();
    Ok(SweepTable {
        axis: spec.axis,
        outputs: spec.outputs.clone(),
        rows,
    })
}

/// `n` log-spaced points from `lo` to `hi`, both included.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && lo > 0.0 && hi > lo);
    let ratio = (hi / lo).ln();
    let mut v: Vec<f64> = (0..n)
        .map(|k| lo * (ratio * k as f64 / (n - 1) as f64).exp())
        .collect();
    v[0] = lo;
    v[n - 1] = hi;
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2Spec {
    pub eta_i: f64,
    pub chi_deg: f64,
    pub temperatures: Vec<f64>,
    pub nu_over_gamma: Vec<f64>,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
}

impl Fig2Spec {
    pub fn new(eta_i: f64) -> Self {
        Fig2Spec {
            eta_i,
            chi_deg: 8.0,
            temperatures: vec![0.0, 0.5, 1.0],
            nu_over_gamma: log_grid(1e-3, 1.0, 200),
            quadrature: QuadratureConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2Curve {
    pub t_over_td: f64,
    pub nu_over_gamma: Vec<f64>,
    pub f_dyn: Vec<Result<f64, QuadError>>,
}

impl Fig2Curve {
    /// Values, or the first quadrature failure.
    pub fn values(&self) -> Result<Vec<f64>, QuadError> {
        self.f_dyn.iter().cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2Dataset {
    pub eta_i: f64,
    pub chi_deg: f64,
    pub curves: Vec<Fig2Curve>,
}

pub fn reproduce_fig2(spec: &Fig2Spec) -> Fig2Dataset {
    let chi = spec.chi_deg.to_radians();
    let curves = spec
        .temperatures
        .iter()
        .map(|&t| {
            let f_dyn = spec
                .nu_over_gamma
                .par_iter()
                .map(|&nu| {
                    let p = ProtocolParams::favorable_scenario()
                        .with(ConfigKey::EtaI, spec.eta_i)
                        .with(ConfigKey::NuOverGamma, nu)
                        .with(ConfigKey::TOverTd, t);
                    f_dyn(&derive(&p), chi, &spec.quadrature)
                })
                .collect();
            Fig2Curve {
                t_over_td: t,
                nu_over_gamma: spec.nu_over_gamma.clone(),
                f_dyn,
            }
        })
        .collect();
    Fig2Dataset {
        eta_i: spec.eta_i,
        chi_deg: spec.chi_deg,
        curves,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveShape {
    pub max_value: f64,
    pub argmax: f64,
    /// Value at the first grid point.
    pub first_value: f64,
    /// Abscissae of strict interior local maxima.
    pub interior_maxima: Vec<f64>,
}

pub fn curve_shape(x: &[f64], y: &[f64]) -> CurveShape {
    assert_eq!(x.len(), y.len());
    assert!(!y.is_empty());
    let (imax, &max_value) = y
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let interior_maxima = (1..y.len().saturating_sub(1))
        .filter(|&k| y[k] > y[k - 1] && y[k] >= y[k + 1])
        .map(|k| x[k])
        .collect();
    CurveShape {
        max_value,
        argmax: x[imax],
        first_value: y[0],
        interior_maxima,
    }
}

/// Whether curves listed in increasing temperature are pointwise
/// non-increasing in temperature (to within `tol`).
pub fn temperature_ordered(curves: &[Vec<f64>], tol: f64) -> bool {
    curves
        .windows(2)
        .all(|w| w[0].iter().zip(w[1].iter()).all(|(cold, hot)| *cold + tol >= *hot))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub f_geo: f64,
    pub f_dyn: f64,
    pub confinement: Confinement,
    pub f_exact: f64,
    pub f_linearized: f64,
    pub p_det: f64,
    pub chsh: Chsh,
    pub chsh_linearized: Chsh,
    pub attempts_per_detection: f64,
}

pub fn feasibility_report(
    params: &ProtocolParams,
    convention: GeoConvention,
    quadrature: &QuadratureConfig,
) -> Result<FeasibilityReport, QuadError> {
    let derived = derive(params);
    let regime = Confinement::for_trap(derived.nu_over_gamma);
    let fg = f_geo(&params.geometry, convention);
    let fd = f_dyn(&derived, params.geometry.chi(), quadrature)?;
    let f_exact = fidelity_total(params, fg, fd);
    let f_lin = fidelity_linearized(&derived, regime);
    let p_det = detection_probability(params, PdetForm::Direct);
    Ok(FeasibilityReport {
        f_geo: fg,
        f_dyn: fd,
        confinement: regime,
        f_exact,
        f_linearized: f_lin,
        p_det,
        chsh: chsh_threshold(f_exact),
        chsh_linearized: chsh_threshold(f_lin),
        attempts_per_detection: 1.0 / p_det,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::optimal_detector_distance;

    fn base() -> ProtocolParams {
        ProtocolParams::favorable_scenario()
    }

    fn numbers(table: &SweepTable, col: usize) -> Vec<f64> {
        table
            .rows
            .iter()
            .map(|r| match &r.cells[col] {
                Cell::Number(v) => *v,
                other => panic!("not a number: {other:?}"),
            })
            .collect()
    }

    #[test]
    fn unknown_names_rejected() {
        assert_eq!(
            SweepSpec::parse(base(), "foo", vec![1.0], &["f_geo"]).unwrap_err(),
            SweepError::UnknownAxis("foo".into())
        );
        assert_eq!(
            SweepSpec::parse(base(), "Lx", vec![1.0], &["bar"]).unwrap_err(),
            SweepError::UnknownOutput("bar".into())
        );
        assert_eq!(
            SweepSpec::parse(base(), "Lx", vec![], &["f_geo"]).unwrap_err(),
            SweepError::NoValues
        );
        assert!(SweepSpec::parse(base(), "Lx", vec![f64::NAN], &["f_geo"]).is_err());
    }

    #[test]
    fn f_geo_monotone_up_to_first_zero() {
        // first zero of sinc(ε₂) at ε₂ = π, i.e. Lx = 2πR/d
        let r = base().geometry.atom_detector_distance();
        let first_zero = 2.0 * std::f64::consts::PI * r / base().geometry.d;
        let values: Vec<f64> = (1..=50).map(|k| 0.1 + (first_zero - 0.1) * k as f64 / 50.0).collect();
        let spec = SweepSpec::parse(base(), "Lx", values, &["f_geo"]).unwrap();
        let v = numbers(&run_sweep(&spec).unwrap(), 0);
        assert!(v.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn p_det_proportional_to_sin_squared() {
        let thetas = vec![0.1, 0.3, 0.6, 1.0];
        let spec = SweepSpec::parse(base(), "theta_las", thetas.clone(), &["p_det"]).unwrap();
        let v = numbers(&run_sweep(&spec).unwrap(), 0);
        for (p, t) in v.iter().zip(thetas.iter()) {
            let ratio = p / t.sin().powi(2);
            assert!((ratio / (v[0] / thetas[0].sin().powi(2)) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn p_det_peaks_at_optimal_distance() {
        let d = base().geometry.d;
        let dstar = optimal_detector_distance(d);
        let values: Vec<f64> = (-20..=20).map(|k| dstar * (1.0 + 0.01 * k as f64)).collect();
        let spec = SweepSpec::parse(base(), "D", values.clone(), &["p_det"]).unwrap();
        let v = numbers(&run_sweep(&spec).unwrap(), 0);
        let imax = v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(imax, 20);
    }

    #[test]
    fn invalid_points_become_error_cells() {
        let spec = SweepSpec::parse(base(), "Lx", vec![1.0, -1.0, 2.0], &["f_geo", "chsh"]).unwrap();
        let t = run_sweep(&spec).unwrap();
        assert!(matches!(t.rows[0].cells[0], Cell::Number(_)));
        assert!(matches!(t.rows[1].cells[0], Cell::Error(_)));
        assert!(matches!(t.rows[1].cells[1], Cell::Error(_)));
        assert!(matches!(t.rows[2].cells[1], Cell::Chsh(_)));
        assert_eq!(t.rows[1].axis_value, -1.0);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1e-3, 1.0, 200);
        assert_eq!(g.len(), 200);
        assert_eq!(g[0], 1e-3);
        assert_eq!(g[199], 1.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn curve_shape_finds_interior_peak() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let s = curve_shape(&x, &[0.1, 0.5, 0.9, 0.4, 0.6]);
        assert_eq!(s.max_value, 0.9);
        assert_eq!(s.argmax, 3.0);
        assert_eq!(s.interior_maxima, vec![3.0]);
        let mono = curve_shape(&x, &[0.1, 0.2, 0.3, 0.4, 0.5]);
        assert!(mono.interior_maxima.is_empty());
    }

    #[test]
    fn feasibility_of_favorable_scenario() {
        let r = feasibility_report(&base(), GeoConvention::Unscaled, &QuadratureConfig::default()).unwrap();
        assert!((r.f_linearized - 0.879).abs() < 1e-3);
        assert_eq!(r.chsh_linearized, Chsh::Violates);
        assert_eq!(r.chsh, Chsh::Violates);
        assert!((9.0e-5..=10.5e-5).contains(&r.p_det));
        assert!((r.attempts_per_detection * r.p_det - 1.0).abs() < 1e-15);
    }

    #[test]
    fn feasibility_trade_off_endpoint() {
        let p = base()
            .with(ConfigKey::EtaD, 1.0)
            .with(ConfigKey::ThetaLas, 1e-3)
            .with(ConfigKey::Lx, 1e-3)
            .with(ConfigKey::EtaI, 1e-4);
        let r = feasibility_report(&p, GeoConvention::Unscaled, &QuadratureConfig::default()).unwrap();
        assert!(r.f_exact > 0.999);
        assert!(r.p_det < 1e-9);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn rows_independent_of_order(mut values in proptest::collection::vec(0.05f64..5.0, 1..12)) {
                let outputs = ["f_geo", "fidelity", "p_det", "chsh"];
                let forward = run_sweep(&SweepSpec::parse(base(), "Lx", values.clone(), &outputs).unwrap()).unwrap();
                values.reverse();
                let backward = run_sweep(&SweepSpec::parse(base(), "Lx", values, &outputs).unwrap()).unwrap();
                let mut rev = backward.rows.clone();
                rev.reverse();
                prop_assert_eq!(forward.rows, rev);
            }
        }
    }
}
