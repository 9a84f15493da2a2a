//! Acceptance gate: one `[PASS]`/`[FAIL]` line per criterion, with the
//! individual checks listed beneath it. Exits non-zero if any criterion
//! fails.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use entangle_core::analytic::{
    argmax_detector_distance, chsh_threshold, detection_probability, f_dyn, f_geo, f_geo_two_path,
    fidelity_linearized, fidelity_linearized_eps, fidelity_total, Chsh, Confinement, EpsilonPdet,
    GeoConvention, PdetForm, QuadratureConfig,
};
use entangle_core::conditional::{
    bell_fidelity, bell_fidelity_closed_form, compute_m_matrix, conditional_density_operator,
};
use entangle_core::montecarlo::{mc_dynamical_factor, mc_geometric_visibility, mc_protocol};
use entangle_core::motional::{run_oracle_grid, OracleGrid};
use entangle_core::params::{derive, validate, ConfigKey, ProtocolParams};
use entangle_core::sweeps::{curve_shape, reproduce_fig2, temperature_ordered, Fig2Spec};

struct Checks {
    lines: Vec<String>,
    ok: bool,
}

impl Checks {
    fn check(&mut self, pass: bool, what: impl Into<String>) {
        let tag = if pass { "ok  " } else { "FAIL" };
        self.lines.push(format!("    {tag} {}", what.into()));
        self.ok &= pass;
    }

    fn note(&mut self, what: impl Into<String>) {
        self.lines.push(format!("    note {}", what.into()));
    }
}

struct Gate {
    passed: usize,
    total: usize,
}

impl Gate {
    fn criterion(&mut self, id: u32, title: &str, budget: Duration, body: impl FnOnce(&mut Checks)) {
        let mut c = Checks {
            lines: Vec::new(),
            ok: true,
        };
        let start = Instant::now();
        body(&mut c);
        let elapsed = start.elapsed();
        c.check(
            elapsed < budget,
            format!("runtime {:.2} s within {} s", elapsed.as_secs_f64(), budget.as_secs()),
        );
        let tag = if c.ok { "[PASS]" } else { "[FAIL]" };
        println!("{tag} {id}. {title}");
        for l in &c.lines {
            println!("{l}");
        }
        self.total += 1;
        self.passed += c.ok as usize;
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn favorable() -> ProtocolParams {
    ProtocolParams::favorable_scenario()
}

fn quad() -> QuadratureConfig {
    QuadratureConfig::default()
}

fn favorable_scenario(c: &mut Checks) {
    let p = favorable();
    let d = derive(&p);
    c.check(
        (d.eps1 - 0.1).abs() < 1e-12 && (d.eps2 - 0.5).abs() < 1e-12 && (d.eps3_weak - 0.1).abs() < 1e-12,
        format!("preset small parameters eps1 {:.6} eps2 {:.6} eps3 {:.6}", d.eps1, d.eps2, d.eps3_weak),
    );
    let regime = Confinement::for_trap(d.nu_over_gamma);
    let f = fidelity_linearized(&d, regime);
    c.check((f - 0.879).abs() <= 0.001, format!("F_linearized = {f:.6} (0.879 ± 0.001)"));
    let f_eps = fidelity_linearized_eps(0.1, 0.5, 0.1);
    c.check((f_eps - 0.879).abs() <= 0.001, format!("F_linearized(0.1, 0.5, 0.1) = {f_eps:.6}"));
    c.check(f > 0.8, "F_linearized > 0.8");
    c.check(chsh_threshold(f) == Chsh::Violates, "CHSH: violates (>= 0.79)");
}

fn random_valid(rng: &mut ChaCha8Rng) -> ProtocolParams {
    let p = favorable()
        .with(ConfigKey::HalfSeparation, rng.random_range(1.0..200.0))
        .with(ConfigKey::DetectorDistance, rng.random_range(0.1..500.0))
        .with(ConfigKey::Lx, rng.random_range(0.01..10.0))
        .with(ConfigKey::Ly, rng.random_range(0.01..300.0))
        .with(ConfigKey::ChiDeg, rng.random_range(0.0..60.0))
        .with(ConfigKey::ThetaLas, rng.random_range(0.01..1.5))
        .with(ConfigKey::KRatio, rng.random_range(0.5..2.0))
        .with(ConfigKey::EtaI, rng.random_range(0.01..0.4))
        .with(ConfigKey::NuOverGamma, rng.random_range(0.01..3.0))
        .with(ConfigKey::TOverTd, rng.random_range(0.0..1.5))
        .with(ConfigKey::Gamma0Frac, rng.random_range(0.0..=1.0))
        .with(ConfigKey::EtaD, rng.random_range(0.01..=1.0));
    validate(p).expect("draw is valid").params
}

fn detection_probability_checks(c: &mut Checks) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let p = random_valid(&mut rng);
        let a = detection_probability(&p, PdetForm::Direct);
        let b = detection_probability(&p, PdetForm::Epsilon);
        worst = worst.max(((a - b) / a).abs());
    }
    c.check(worst <= 1e-12, format!("direct vs epsilon form, 10^4 draws: max rel diff {worst:.2e} (<= 1e-12)"));

    let coeff = EpsilonPdet {
        eta_d: 1.0,
        eps1: 0.1,
        eps2: 0.5,
        ly_over_lx: 1.0,
        big_d_over_lx: 50.0,
        lambda_over_d: 1.0,
    }
    .probability();
    c.check(
        ((coeff - 0.8) / 0.8).abs() <= 0.01,
        format!("coefficient at eps1 0.1, eps2 0.5, D/Lx 50: {coeff:.6} vs 0.8 (1%)"),
    );
    let p = detection_probability(&favorable(), PdetForm::Direct);
    c.check(
        (9.0e-5..=10.5e-5).contains(&p),
        format!("d = 50, Ly/Lx = 30, eta_D = 0.5: P_det = {p:.4e} in [9.0, 10.5]e-5"),
    );
}

fn optimal_distance(c: &mut Checks) {
    for d in [1.0, 50.0, 137.3] {
        let p = favorable().with(ConfigKey::HalfSeparation, d);
        let num = argmax_detector_distance(&p);
        let exact = d * FRAC_1_SQRT_2;
        let rel = ((num - exact) / exact).abs();
        c.check(rel <= 1e-6, format!("d = {d}: argmax D = {num:.9}, d/sqrt2 = {exact:.9}, rel {rel:.1e}"));
    }
}

fn motional_oracle(c: &mut Checks) {
    let grid = OracleGrid::default();
    let points = run_oracle_grid(&grid);
    let worst = points.iter().map(|p| p.max_abs_diff).fold(0.0, f64::max);
    let n_pass = points.iter().filter(|p| p.passes(grid.tolerance)).count();
    c.check(
        n_pass == points.len() && points.len() == 54,
        format!("{n_pass}/{} grid points within 1e-6; largest |diff| {worst:.2e}", points.len()),
    );
    let worst_conv = points
        .iter()
        .filter_map(|p| p.fock.as_ref().ok().map(|r| r.error_estimate))
        .fold(0.0, f64::max);
    c.check(
        worst_conv < 1e-8 && n_pass == points.len(),
        format!("doubling n_max changes the trace by at most {worst_conv:.2e} (< 1e-8)"),
    );
}

fn f_dyn_limits(c: &mut Checks) {
    let mut d = derive(&favorable());
    d.eta = 0.0;
    let v = f_dyn(&d, 0.3, &quad()).unwrap();
    c.check((v - 1.0).abs() <= 1e-10, format!("eta = 0: F_dyn = {v:.15}"));

    let tight = QuadratureConfig {
        abs_tol: 1e-14,
        rel_tol: 1e-14,
        ..quad()
    };
    let mut n_weak = 0;
    let mut weak_ok = true;
    let mut worst_ratio = 0.0f64;
    for eta_i in [0.05, 0.1, 0.3] {
        for nu in [1e-3, 3e-3, 1e-2] {
            for t in [0.0, 0.5, 1.0] {
                let p = favorable()
                    .with(ConfigKey::EtaI, eta_i)
                    .with(ConfigKey::NuOverGamma, nu)
                    .with(ConfigKey::TOverTd, t);
                let d = derive(&p);
                if d.eps3_weak > 1e-3 {
                    continue;
                }
                n_weak += 1;
                let exact = f_dyn(&d, 0.0, &tight).unwrap();
                let err = (exact - (1.0 - d.eps3_weak)).abs();
                let bound = 10.0 * d.eps3_weak * d.eps3_weak;
                worst_ratio = worst_ratio.max(err / bound);
                weak_ok &= err <= bound;
            }
        }
    }
    c.check(
        weak_ok && n_weak > 0,
        format!("weak confinement, chi = 0, {n_weak} points with eps3 <= 1e-3: max err/(10 eps3^2) = {worst_ratio:.3}"),
    );

    let mut worst = 0.0f64;
    for eta in [0.02, 0.05, 0.1] {
        for t in [0.0, 0.5, 1.0] {
            let p = favorable()
                .with(ConfigKey::NuOverGamma, 10.0)
                .with(ConfigKey::EtaI, eta * 10f64.sqrt())
                .with(ConfigKey::TOverTd, t);
            let d = derive(&p);
            let exact = f_dyn(&d, p.geometry.chi(), &quad()).unwrap();
            worst = worst.max((exact - (1.0 - d.eps3_strong)).abs());
        }
    }
    c.check(worst <= 5e-3, format!("strong confinement, nu = 10, eta <= 0.1: max |diff| {worst:.2e} (<= 5e-3)"));
}

fn fig2_structure(c: &mut Checks) {
    for eta_i in [0.05, 0.3] {
        let data = reproduce_fig2(&Fig2Spec::new(eta_i));
        let mut curves = Vec::new();
        for curve in &data.curves {
            let values = match curve.values() {
                Ok(v) => v,
                Err(e) => {
                    c.check(false, format!("eta_I {eta_i}, T {}: quadrature failed: {e}", curve.t_over_td));
                    continue;
                }
            };
            let s = curve_shape(&curve.nu_over_gamma, &values);
            let label = format!("eta_I {eta_i}, T/T_D {}", curve.t_over_td);
            c.check(
                s.first_value < 0.5 * s.max_value,
                format!(
                    "(a) {label}: F_dyn(1e-3) = {:.4} vs 0.5 x max {:.4}",
                    s.first_value,
                    0.5 * s.max_value
                ),
            );
            c.check(
                !s.interior_maxima.is_empty(),
                format!(
                    "(b) {label}: interior local maxima at {:?}; global max {:.4} at nu/Gamma {:.4}",
                    s.interior_maxima.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>(),
                    s.max_value,
                    s.argmax
                ),
            );
            if eta_i == 0.05 && curve.t_over_td == 0.0 {
                c.check(s.max_value >= 0.9, format!("(d) {label}: curve maximum {:.4} >= 0.9", s.max_value));
            }
            curves.push(values);
        }
        c.check(
            curves.len() == 3 && temperature_ordered(&curves, 0.0),
            format!("(c) eta_I {eta_i}: pointwise T = 0 >= T_D/2 >= T_D"),
        );
    }
}

fn structural_identity(c: &mut Checks) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_fid = 0.0f64;
    let mut worst_total = 0.0f64;
    let mut all_valid = true;
    for _ in 0..1000 {
        let p = random_valid(&mut rng);
        let conv = if rng.random::<bool>() {
            GeoConvention::Unscaled
        } else {
            GeoConvention::WaveOptics
        };
        let fg = f_geo(&p.geometry, conv);
        let fd = f_dyn(&derive(&p), p.geometry.chi(), &quad()).unwrap();
        let m = compute_m_matrix(&p, fg, fd);
        let state = conditional_density_operator(&p, &m);
        let f = bell_fidelity(&state);
        worst_fid = worst_fid.max((f - bell_fidelity_closed_form(&p, &m, state.phi)).abs());
        worst_total = worst_total.max((f - fidelity_total(&p, fg, fd)).abs());
        all_valid &= state.is_valid(1e-12);
    }
    c.check(worst_fid <= 1e-10, format!("bell_fidelity vs closed form, 10^3 draws: max |diff| {worst_fid:.1e}"));
    c.check(worst_total <= 1e-10, format!("bell_fidelity vs factorised total: max |diff| {worst_total:.1e}"));
    c.check(all_valid, "rho is Hermitian, unit-trace and PSD to 1e-12 on every draw");
}

fn compact_protocol() -> ProtocolParams {
    favorable()
        .with(ConfigKey::HalfSeparation, 5.0)
        .with(ConfigKey::DetectorDistance, 5.0 * FRAC_1_SQRT_2)
        .with(ConfigKey::Lx, 0.5)
        .with(ConfigKey::Ly, 0.5)
        .with(ConfigKey::ThetaLas, FRAC_PI_4)
        .with(ConfigKey::EtaD, 1.0)
        .with(ConfigKey::Gamma0Frac, 0.0)
}

fn monte_carlo(c: &mut Checks) {
    let far = favorable()
        .with(ConfigKey::HalfSeparation, 50.0)
        .with(ConfigKey::DetectorDistance, 35.0)
        .with(ConfigKey::Lx, 1.41)
        .with(ConfigKey::Ly, 1.41);
    let v = mc_geometric_visibility(&far, 1_000_000, 1).unwrap();
    let wave = f_geo(&far.geometry, GeoConvention::WaveOptics);
    c.check(
        (v.mean.re - wave).abs() <= 3.0 * v.std_error + 1e-3,
        format!(
            "(a) visibility {:.5} ± {:.1e} vs f_geo(wave) {wave:.5} (3 sigma + 1e-3)",
            v.mean.re, v.std_error
        ),
    );
    let two_path = f_geo_two_path(&far.geometry);
    c.note(format!(
        "(a) same estimate vs sinc(2 pi d Lx / R) for atoms at (+-d, 0, 0): {two_path:.5}, |diff| {:.1e}",
        (v.mean.re - two_path).abs()
    ));

    let p = favorable()
        .with(ConfigKey::EtaI, 0.05)
        .with(ConfigKey::TOverTd, 1.0)
        .with(ConfigKey::NuOverGamma, 0.3);
    let e = mc_dynamical_factor(&p, 1_000_000, 2).unwrap();
    let exact = f_dyn(&derive(&p), p.geometry.chi(), &quad()).unwrap();
    c.check(
        e.covers(exact, 3.0, 0.0),
        format!("(b) F_dyn MC {:.6} ± {:.1e} vs quadrature {exact:.6}", e.mean, e.std_error),
    );

    let p = compact_protocol();
    let r = mc_protocol(&p, 10_000_000, 3).unwrap();
    let analytic = detection_probability(&p, PdetForm::Direct);
    c.check(
        r.p_det.covers(analytic, 3.0, 0.0),
        format!(
            "(c) protocol P_det {:.4e} ± {:.1e} vs direct {analytic:.4e} at 10^7 trials",
            r.p_det.mean, r.p_det.std_error
        ),
    );

    let p = favorable()
        .with(ConfigKey::EtaI, 0.3)
        .with(ConfigKey::NuOverGamma, 0.5)
        .with(ConfigKey::TOverTd, 0.5);
    let exact = f_dyn(&derive(&p), p.geometry.chi(), &quad()).unwrap();
    let covered = (0..100u64)
        .filter(|&seed| mc_dynamical_factor(&p, 20_000, 1000 + seed).unwrap().covers(exact, 3.0, 0.0))
        .count();
    c.check(covered >= 99, format!("(d) seed calibration: {covered}/100 runs cover the quadrature value"));
}

fn list_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

fn determinism(c: &mut Checks) {
    let bin = env!("CARGO_BIN_EXE_entangle-click");
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("scenario.cfg");
    fs::write(&cfg, "d = 40\nD = 30\nLx = 1.5\nLy = 20\nT_over_TD = 0.5\n").unwrap();
    let cfg = cfg.to_str().unwrap().to_string();
    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("fidelity", vec!["fidelity"]),
        ("pdet", vec!["pdet"]),
        ("sweep", vec!["sweep", "--axis", "D", "--range", "10,60,11", "--outputs", "f_geo,f_dyn,f_dyn_weak,f_dyn_strong,fidelity,fidelity_linearized,p_det,chsh"]),
        ("fig2", vec!["fig2", "--eta-I", "0.3"]),
        ("mc", vec!["mc", "--seed", "5", "--trials", "300000"]),
        ("oracle-check", vec!["oracle-check"]),
        ("feasibility", vec!["feasibility"]),
    ];
    for (name, args) in &commands {
        let mut outputs = Vec::new();
        for (run, workers) in ["1", "4", "4"].iter().enumerate() {
            let out = root.path().join(format!("{name}-{run}"));
            let status = Command::new(bin)
                .args(args)
                .args(["--config", &cfg, "--workers", workers, "--out"])
                .arg(&out)
                .env("SOURCE_DATE_EPOCH", "1700000000")
                .output()
                .unwrap()
                .status;
            outputs.push((out, status.code()));
        }
        let files = list_files(&outputs[0].0);
        let identical = outputs.iter().all(|(dir, code)| {
            *code == Some(0)
                && list_files(dir) == files
                && files.iter().all(|f| fs::read(dir.join(f)).unwrap() == fs::read(outputs[0].0.join(f)).unwrap())
        });
        c.check(
            identical && !files.is_empty(),
            format!("{name}: {} files byte-identical over workers 1, 4, 4", files.len()),
        );
    }
}

fn main() {
    let mut gate = Gate { passed: 0, total: 0 };
    gate.criterion(1, "favourable scenario: linearised fidelity 0.879 and CHSH violation", secs(1), favorable_scenario);
    gate.criterion(2, "detection probability: dual formula identity and coefficient checks", secs(5), detection_probability_checks);
    gate.criterion(3, "optimal detector distance d/sqrt2", secs(1), optimal_distance);
    gate.criterion(4, "motional trace: closed form vs truncated Fock oracle", secs(120), motional_oracle);
    gate.criterion(5, "dynamical factor limits", secs(10), f_dyn_limits);
    gate.criterion(6, "dynamical factor curves versus trap frequency", secs(60), fig2_structure);
    gate.criterion(7, "conditional state: fidelity identity and physicality", secs(30), structural_identity);
    gate.criterion(8, "Monte Carlo validation", secs(600), monte_carlo);
    gate.criterion(9, "determinism of every command", secs(60), determinism);
    println!("\n{}/{} acceptance criteria passed", gate.passed, gate.total);
    if gate.passed != gate.total {
        std::process::exit(1);
    }
}
