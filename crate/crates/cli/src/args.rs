use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use entangle_core::{ConfigKey, GeoConvention};

#[derive(Debug, Parser)]
#[command(
    name = "entangle-click",
    version,
    about = "Fidelity, detection rate and validation runs for click-heralded two-atom entanglement"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Geometric and dynamical factors, exact and linearised fidelity.
    Fidelity(Common),
    /// Detection probability in both closed forms and the optimal detector distance.
    Pdet(Common),
    /// Sweep one configuration key and tabulate selected outputs.
    Sweep(SweepArgs),
    /// Dynamical factor versus trap frequency at three temperatures.
    Fig2(Fig2Args),
    /// Monte Carlo estimators.
    Mc(McArgs),
    /// Compare the closed-form motional trace against the truncated Fock-space oracle.
    OracleCheck(OracleArgs),
    /// Fidelity, detection probability and attempts per click for one operating point.
    Feasibility(Common),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeoFlag {
    Paper,
    Wave,
}

impl From<GeoFlag> for GeoConvention {
    fn from(g: GeoFlag) -> Self {
        match g {
            GeoFlag::Paper => GeoConvention::Unscaled,
            GeoFlag::Wave => GeoConvention::WaveOptics,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// key = value configuration file; missing keys take the favourable-scenario defaults.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Worker threads; never changes any output value.
    #[arg(long, env = "ENTANGLE_CLICK_WORKERS", value_name = "N")]
    pub workers: Option<usize>,
    /// Directory for data files and their manifests.
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "paper")]
    pub geo_convention: GeoFlag,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long = "d", allow_hyphen_values = true, value_name = "X")]
    pub d: Option<f64>,
    #[arg(long = "D", allow_hyphen_values = true, value_name = "X")]
    pub big_d: Option<f64>,
    #[arg(long = "Lx", allow_hyphen_values = true, value_name = "X")]
    pub lx: Option<f64>,
    #[arg(long = "Ly", allow_hyphen_values = true, value_name = "X")]
    pub ly: Option<f64>,
    #[arg(long = "chi_deg", allow_hyphen_values = true, value_name = "X")]
    pub chi_deg: Option<f64>,
    #[arg(long = "theta_las", allow_hyphen_values = true, value_name = "X")]
    pub theta_las: Option<f64>,
    #[arg(long = "k_ratio", allow_hyphen_values = true, value_name = "X")]
    pub k_ratio: Option<f64>,
    #[arg(long = "eta_I", allow_hyphen_values = true, value_name = "X")]
    pub eta_i: Option<f64>,
    #[arg(long = "nu_over_Gamma", allow_hyphen_values = true, value_name = "X")]
    pub nu_over_gamma: Option<f64>,
    #[arg(long = "T_over_TD", allow_hyphen_values = true, value_name = "X")]
    pub t_over_td: Option<f64>,
    #[arg(long = "Gamma0_frac", allow_hyphen_values = true, value_name = "X")]
    pub gamma0_frac: Option<f64>,
    #[arg(long = "eta_D", allow_hyphen_values = true, value_name = "X")]
    pub eta_d: Option<f64>,
}

impl Overrides {
    pub fn pairs(&self) -> Vec<(ConfigKey, f64)> {
        [
            (ConfigKey::HalfSeparation, self.d),
            (ConfigKey::DetectorDistance, self.big_d),
            (ConfigKey::Lx, self.lx),
            (ConfigKey::Ly, self.ly),
            (ConfigKey::ChiDeg, self.chi_deg),
            (ConfigKey::ThetaLas, self.theta_las),
            (ConfigKey::KRatio, self.k_ratio),
            (ConfigKey::EtaI, self.eta_i),
            (ConfigKey::NuOverGamma, self.nu_over_gamma),
            (ConfigKey::TOverTd, self.t_over_td),
            (ConfigKey::Gamma0Frac, self.gamma0_frac),
            (ConfigKey::EtaD, self.eta_d),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// Configuration key to vary.
    #[arg(long)]
    pub axis: String,
    /// Explicit axis values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "range")]
    pub values: Vec<f64>,
    /// `LO,HI,N`: N evenly spaced values from LO to HI inclusive.
    #[arg(long, value_delimiter = ',', num_args = 1, allow_hyphen_values = true)]
    pub range: Vec<f64>,
    /// Space the range logarithmically.
    #[arg(long, requires = "range")]
    pub log: bool,
    /// Output columns, from f_geo, f_dyn, f_dyn_weak, f_dyn_strong, fidelity,
    /// fidelity_linearized, p_det, chsh.
    #[arg(long, value_delimiter = ',', default_value = "f_geo,f_dyn,fidelity,p_det,chsh")]
    pub outputs: Vec<String>,
}

#[derive(Debug, Args)]
pub struct Fig2Args {
    #[command(flatten)]
    pub common: Common,
    #[arg(long = "eta-I", default_value_t = 0.05)]
    pub eta_i_curve: f64,
    /// Angle between laser and emission direction, degrees.
    #[arg(long = "chi-deg", default_value_t = 8.0)]
    pub chi_deg_curve: f64,
    /// Number of log-spaced trap frequencies on [1e-3, 1].
    #[arg(long, default_value_t = 200)]
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum McKind {
    Visibility,
    Dynamical,
    Protocol,
    All,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub trials: u64,
    #[arg(long, value_enum, default_value = "all")]
    pub kind: McKind,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: Common,
    /// Largest allowed closed-form vs oracle discrepancy (real or imaginary part).
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
}
