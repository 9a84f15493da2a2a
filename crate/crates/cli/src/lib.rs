//! Implementation of the `entangle-click` command-line tool.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration or usage error,
//! 3 numerical failure or oracle tolerance breach, 4 Monte Carlo run without
//! a single detection.

pub mod args;
pub mod output;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io;

use clap::Parser;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use entangle_core::analytic::{
    argmax_detector_distance, detection_probability, f_dyn, f_geo, fidelity_linearized,
    optimal_detector_distance, Confinement, GeoConvention, PdetForm, QuadratureConfig,
};
use entangle_core::conditional::{bell_fidelity, compute_m_matrix, conditional_density_operator};
use entangle_core::montecarlo::{mc_dynamical_factor, mc_geometric_visibility, mc_protocol, McError};
use entangle_core::motional::{run_oracle_grid, OracleGrid};
use entangle_core::params::{derive, validate, ProtocolParams};
use entangle_core::sweeps::{
    curve_shape, feasibility_report, log_grid, reproduce_fig2, run_sweep, Cell, Fig2Spec, SweepSpec,
};

use args::{Cli, Command, Common, Fig2Args, McArgs, McKind, OracleArgs, SweepArgs};
use output::{csv_field, fmt_f64, RunManifest, Writer, TOOL_VERSION};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("no detection events in {0} trials")]
    NoDetections(u64),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::NoDetections(_) => 4,
        }
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("entangle-click: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fidelity(c) => with_workers(&c, || cmd_fidelity(&c)),
        Command::Pdet(c) => with_workers(&c, || cmd_pdet(&c)),
        Command::Sweep(a) => with_workers(&a.common, || cmd_sweep(&a)),
        Command::Fig2(a) => with_workers(&a.common, || cmd_fig2(&a)),
        Command::Mc(a) => with_workers(&a.common, || cmd_mc(&a)),
        Command::OracleCheck(a) => with_workers(&a.common, || cmd_oracle_check(&a)),
        Command::Feasibility(c) => with_workers(&c, || cmd_feasibility(&c)),
    }
}

fn with_workers<F>(common: &Common, f: F) -> Result<(), CliError>
where
    F: FnOnce() -> Result<(), CliError> + Send,
{
    match common.workers {
        None => f(),
        Some(0) => Err(CliError::Config("--workers must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("cannot start {n} workers: {e}")))?
            .install(f),
    }
}

/// Defaults, then the config file, then per-key flags; validated.
pub fn resolve_params(common: &Common) -> Result<ProtocolParams, CliError> {
    let mut params = ProtocolParams::default();
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        params = params
            .apply_config_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    }
    for (key, value) in common.overrides.pairs() {
        params.set(key, value);
    }
    let v = validate(params).map_err(|e| CliError::Config(e.to_string()))?;
    if !v.far_field.satisfied {
        eprintln!(
            "warning: k1*sqrt(d^2+D^2) = {:.3} is below the far-field threshold {:.3}",
            v.far_field.k1_r, v.far_field.threshold
        );
    }
    Ok(v.params)
}

fn convention(common: &Common) -> GeoConvention {
    common.geo_convention.into()
}

fn json_text<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serialisable");
    s.push('\n');
    s
}

fn cmd_fidelity(c: &Common) -> Result<(), CliError> {
    let params = resolve_params(c)?;
    let derived = derive(&params);
    let regime = Confinement::for_trap(derived.nu_over_gamma);
    let fg = f_geo(&params.geometry, convention(c));
    let fd = f_dyn(&derived, params.geometry.chi(), &QuadratureConfig::default())
        .map_err(|e| CliError::Numeric(e.to_string()))?;
    let m = compute_m_matrix(&params, fg, fd);
    let state = conditional_density_operator(&params, &m);
    let f = bell_fidelity(&state);
    let f_lin = fidelity_linearized(&derived, regime);
    let chsh = entangle_core::analytic::chsh_threshold(f);

    println!("F_geo                {}", fmt_f64(fg));
    println!("F_dyn                {}", fmt_f64(fd));
    println!("F                    {}", fmt_f64(f));
    println!("F_linearized         {}", fmt_f64(f_lin));
    println!("chsh                 {}", chsh.as_str());

    let manifest = RunManifest::new("fidelity", &params, None);
    let data = json!({
        "command": "fidelity",
        "params_hash": manifest.params_hash,
        "tool_version": TOOL_VERSION,
        "params": params,
        "derived": derived,
        "geo_convention": convention(c),
        "confinement": regime,
        "f_geo": fg,
        "f_dyn": fd,
        "fidelity": f,
        "fidelity_linearized": f_lin,
        "chsh": chsh,
        "state": state,
    });
    Writer::new(&c.out)?.write("fidelity.json", &json_text(&data), &manifest)?;
    Ok(())
}

fn cmd_pdet(c: &Common) -> Result<(), CliError> {
    let params = resolve_params(c)?;
    let direct = detection_probability(&params, PdetForm::Direct);
    let eps = detection_probability(&params, PdetForm::Epsilon);
    let d_opt = optimal_detector_distance(params.geometry.d);
    let d_num = argmax_detector_distance(&params);

    println!("P_det                {}", fmt_f64(direct));
    println!("P_det (eps form)     {}", fmt_f64(eps));
    println!("attempts per click   {}", fmt_f64(1.0 / direct));
    println!("optimal D            {}", fmt_f64(d_opt));
    println!("optimal D (numeric)  {}", fmt_f64(d_num));

    let manifest = RunManifest::new("pdet", &params, None);
    let data = json!({
        "command": "pdet",
        "params_hash": manifest.params_hash,
        "tool_version": TOOL_VERSION,
        "params": params,
        "p_det": direct,
        "p_det_epsilon_form": eps,
        "attempts_per_detection": 1.0 / direct,
        "optimal_detector_distance": d_opt,
        "optimal_detector_distance_numeric": d_num,
    });
    Writer::new(&c.out)?.write("pdet.json", &json_text(&data), &manifest)?;
    Ok(())
}

fn sweep_values(a: &SweepArgs) -> Result<Vec<f64>, CliError> {
    if !a.values.is_empty() {
        return Ok(a.values.clone());
    }
    match a.range.as_slice() {
        [lo, hi, n] => {
            if n.fract() != 0.0 || *n < 1.0 {
                return Err(CliError::Config(format!("--range count must be a positive integer, got {n}")));
            }
            let n = *n as usize;
            if n == 1 {
                return Ok(vec![*lo]);
            }
            if a.log {
                if !(*lo > 0.0 && hi > lo) {
                    return Err(CliError::Config("--log needs 0 < LO < HI".into()));
                }
                Ok(log_grid(*lo, *hi, n))
            } else {
                Ok((0..n)
                    .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
                    .collect())
            }
        }
        [] => Err(CliError::Config("sweep needs --values or --range".into())),
        _ => Err(CliError::Config("--range takes LO,HI,N".into())),
    }
}

fn cmd_sweep(a: &SweepArgs) -> Result<(), CliError> {
    let params = resolve_params(&a.common)?;
    let values = sweep_values(a)?;
    let outputs: Vec<&str> = a.outputs.iter().map(String::as_str).collect();
    let mut spec = SweepSpec::parse(params, &a.axis, values, &outputs)
        .map_err(|e| CliError::Config(e.to_string()))?;
    spec.convention = convention(&a.common);
    let table = run_sweep(&spec).map_err(|e| CliError::Config(e.to_string()))?;

    let mut csv = String::from("axis,value");
    for o in &table.outputs {
        write!(csv, ",{o}").unwrap();
    }
    csv.push('\n');
    let mut errors = 0;
    for row in &table.rows {
        write!(csv, "{},{}", table.axis, fmt_f64(row.axis_value)).unwrap();
        for cell in &row.cells {
            let text = match cell {
                Cell::Number(v) => fmt_f64(*v),
                Cell::Chsh(c) => c.as_str().to_string(),
                Cell::Error(msg) => {
                    errors += 1;
                    csv_field(&format!("error: {msg}"))
                }
            };
            write!(csv, ",{text}").unwrap();
        }
        csv.push('\n');
    }
    let manifest = RunManifest::new("sweep", &params, None);
    let path = Writer::new(&a.common.out)?.write("sweep.csv", &csv, &manifest)?;
    println!(
        "{} rows written to {} ({errors} error cells)",
        table.rows.len(),
        path.display()
    );
    Ok(())
}

fn cmd_fig2(a: &Fig2Args) -> Result<(), CliError> {
    let params = resolve_params(&a.common)?;
    if !(a.eta_i_curve > 0.0 && a.eta_i_curve.is_finite()) {
        return Err(CliError::Config(format!("--eta-I must be > 0, got {}", a.eta_i_curve)));
    }
    if a.points < 2 {
        return Err(CliError::Config("--points must be at least 2".into()));
    }
    let mut spec = Fig2Spec::new(a.eta_i_curve);
    spec.chi_deg = a.chi_deg_curve;
    spec.nu_over_gamma = log_grid(1e-3, 1.0, a.points);
    let data = reproduce_fig2(&spec);

    let mut csv = String::from("T_over_TD,nu_over_Gamma,F_dyn\n");
    let mut failures = 0;
    for curve in &data.curves {
        for (nu, f) in curve.nu_over_gamma.iter().zip(curve.f_dyn.iter()) {
            let v = match f {
                Ok(v) => *v,
                Err(_) => {
                    failures += 1;
                    f64::NAN
                }
            };
            writeln!(csv, "{},{},{}", fmt_f64(curve.t_over_td), fmt_f64(*nu), fmt_f64(v)).unwrap();
        }
        if let Ok(values) = curve.values() {
            let s = curve_shape(&curve.nu_over_gamma, &values);
            println!(
                "T/T_D = {:<4} max F_dyn {:.6} at nu/Gamma {:.4e}; F_dyn(1e-3) {:.6}; interior maxima {}",
                curve.t_over_td,
                s.max_value,
                s.argmax,
                s.first_value,
                s.interior_maxima.len()
            );
        }
    }
    let manifest = RunManifest::new("fig2", &params, None);
    Writer::new(&a.common.out)?.write("fig2.csv", &csv, &manifest)?;
    if failures > 0 {
        return Err(CliError::Numeric(format!("{failures} grid points did not converge")));
    }
    Ok(())
}

fn mc_error(e: McError) -> CliError {
    CliError::Config(e.to_string())
}

fn cmd_mc(a: &McArgs) -> Result<(), CliError> {
    let params = resolve_params(&a.common)?;
    let mut csv = String::from("quantity,mean,std_error,n,seed\n");
    let mut row = |name: &str, mean: f64, se: f64, n: u64, seed: u64| {
        writeln!(csv, "{name},{},{},{n},{seed}", fmt_f64(mean), fmt_f64(se)).unwrap();
        println!("{name:<22} {mean:.6e} ± {se:.2e}  (n = {n})");
    };
    let kind = a.kind;
    let wants = |k: McKind| kind == McKind::All || kind == k;

    if wants(McKind::Visibility) {
        let v = mc_geometric_visibility(&params, a.trials, a.seed).map_err(mc_error)?;
        row("visibility_re", v.mean.re, v.std_error, v.n_samples, v.seed);
        row("visibility_im", v.mean.im, v.std_error, v.n_samples, v.seed);
    }
    if wants(McKind::Dynamical) {
        let d = mc_dynamical_factor(&params, a.trials, a.seed).map_err(mc_error)?;
        row("f_dyn", d.mean, d.std_error, d.n_samples, d.seed);
    }
    let mut report = None;
    if wants(McKind::Protocol) {
        let r = mc_protocol(&params, a.trials, a.seed).map_err(mc_error)?;
        row("p_det", r.p_det.mean, r.p_det.std_error, r.p_det.n_samples, r.p_det.seed);
        if let Some(f) = &r.fidelity {
            row("fidelity", f.mean, f.std_error, f.n_samples, f.seed);
        }
        if let Some(p) = &r.population_11 {
            row("population_11", p.mean, p.std_error, p.n_samples, p.seed);
        }
        report = Some(r);
    }

    let writer = Writer::new(&a.common.out)?;
    let manifest = RunManifest::new("mc", &params, Some(a.seed));
    writer.write("mc.csv", &csv, &manifest)?;
    if let Some(r) = report {
        let data = json!({
            "command": "mc",
            "params_hash": manifest.params_hash,
            "tool_version": TOOL_VERSION,
            "seed": a.seed,
            "trials": a.trials,
            "outcomes": r.outcomes,
            "conditional_state": r.conditional_state,
        });
        writer.write("mc_protocol.json", &json_text(&data), &manifest)?;
        if r.fidelity.is_none() {
            return Err(CliError::NoDetections(a.trials));
        }
    }
    Ok(())
}

fn cmd_oracle_check(a: &OracleArgs) -> Result<(), CliError> {
    let params = resolve_params(&a.common)?;
    if a.tolerance.is_nan() || a.tolerance <= 0.0 {
        return Err(CliError::Config("--tolerance must be > 0".into()));
    }
    let grid = OracleGrid {
        chi: params.geometry.chi(),
        k_ratio: params.laser.k_ratio,
        tolerance: a.tolerance,
        ..OracleGrid::default()
    };
    let points = run_oracle_grid(&grid);
    let mut csv = String::from(
        "eta_I,T_over_TD,nu_over_Gamma,nu_t,closed_re,closed_im,fock_re,fock_im,max_abs_diff,n_max,self_convergence,status\n",
    );
    let mut breaches = 0;
    for p in &points {
        let pass = p.passes(grid.tolerance);
        breaches += !pass as usize;
        let (fr, fi, n_max, conv) = match &p.fock {
            Ok(r) => (
                fmt_f64(r.value.re),
                fmt_f64(r.value.im),
                r.n_max.map_or(String::new(), |n| n.to_string()),
                fmt_f64(r.error_estimate),
            ),
            Err(e) => (String::new(), String::new(), String::new(), csv_field(e)),
        };
        writeln!(
            csv,
            "{},{},{},{},{},{},{fr},{fi},{},{n_max},{conv},{}",
            fmt_f64(p.eta_i),
            fmt_f64(p.t_over_td),
            fmt_f64(p.nu_over_gamma),
            fmt_f64(p.nu_t),
            fmt_f64(p.closed_form.re),
            fmt_f64(p.closed_form.im),
            fmt_f64(p.max_abs_diff),
            if pass { "pass" } else { "fail" }
        )
        .unwrap();
    }
    let worst = points.iter().map(|p| p.max_abs_diff).fold(0.0, f64::max);
    println!(
        "{} grid points, {} outside tolerance {:e}; largest discrepancy {:e}",
        points.len(),
        breaches,
        grid.tolerance,
        worst
    );
    let manifest = RunManifest::new("oracle-check", &params, None);
    Writer::new(&a.common.out)?.write("oracle_check.csv", &csv, &manifest)?;
    if breaches > 0 {
        return Err(CliError::Numeric(format!(
            "{breaches} oracle grid points exceed tolerance {:e}",
            grid.tolerance
        )));
    }
    Ok(())
}

fn cmd_feasibility(c: &Common) -> Result<(), CliError> {
    let params = resolve_params(c)?;
    let r = feasibility_report(&params, convention(c), &QuadratureConfig::default())
        .map_err(|e| CliError::Numeric(e.to_string()))?;
    println!("F_geo                {}", fmt_f64(r.f_geo));
    println!("F_dyn                {}", fmt_f64(r.f_dyn));
    println!("F (exact)            {}", fmt_f64(r.f_exact));
    println!("F (linearized)       {}", fmt_f64(r.f_linearized));
    println!("P_det                {}", fmt_f64(r.p_det));
    println!("attempts per click   {}", fmt_f64(r.attempts_per_detection));
    println!("chsh (exact)         {}", r.chsh.as_str());
    println!("chsh (linearized)    {}", r.chsh_linearized.as_str());
    let manifest = RunManifest::new("feasibility", &params, None);
    let data = json!({
        "command": "feasibility",
        "params_hash": manifest.params_hash,
        "tool_version": TOOL_VERSION,
        "params": params,
        "report": r,
    });
    Writer::new(&c.out)?.write("feasibility.json", &json_text(&data), &manifest)?;
    Ok(())
}
