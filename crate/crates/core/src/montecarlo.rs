//! Sampling estimators that check the closed forms without the far-field
//! expansion or the factorisation of geometry and motion.
//!
//! Work is split into fixed-size batches; batch `i` draws from
//! `ChaCha8Rng::seed_from_u64(seed)` on stream `i`. Batch sums are folded in
//! batch order, so results depend only on `(params, n, seed)` and never on
//! the number of worker threads.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, UnitSphere};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conditional::{canonical_phase, TwoAtomState};
use crate::frame::{CanonicalFrame, Vec3};
use crate::motional::{classical_phase, commutator_phase, sample_thermal_phase_space, WaveVector};
use crate::params::{derive, DerivedQuantities, ProtocolParams, TWO_PI};
use nalgebra::Matrix4;

pub const MIN_SAMPLES: u64 = 100;
const BATCH_SIZE: u64 = 1 << 14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McError {
    #[error("{n} samples requested; at least {min} are required")]
    TooFewSamples { n: u64, min: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate<T> {
    pub mean: T,
    pub std_error: f64,
    pub n_samples: u64,
    pub seed: u64,
}

impl Estimate<f64> {
    /// Whether `value` lies within `k` standard errors (plus `slack`).
    pub fn covers(&self, value: f64, k: f64, slack: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error + slack
    }
}

fn batch_rng(seed: u64, batch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch);
    rng
}

/// Run `n` trials in batches and fold the per-batch accumulators in order.
fn run_batched<A, F>(n: u64, seed: u64, batch: F) -> A
where
    A: Send + Default + Merge,
    F: Fn(&mut ChaCha8Rng, u64) -> A + Sync,
{
    let n_batches = n.div_ceil(BATCH_SIZE);
    let parts: Vec<A> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let len = BATCH_SIZE.min(n - b * BATCH_SIZE);
            batch(&mut batch_rng(seed, b), len)
        })
        .collect();
    parts.into_iter().fold(A::default(), |mut acc, p| {
        acc.merge(&p);
        acc
    })
}

trait Merge {
    fn merge(&mut self, other: &Self);
}

fn check_samples(n: u64) -> Result<(), McError> {
    if n < MIN_SAMPLES {
        Err(McError::TooFewSamples { n, min: MIN_SAMPLES })
    } else {
        Ok(())
    }
}

#[derive(Default)]
struct RatioSums {
    y: Complex64,
    w: f64,
    y2: f64,
    yw: Complex64,
    w2: f64,
}

impl Merge for RatioSums {
    fn merge(&mut self, o: &Self) {
        self.y += o.y;
        self.w += o.w;
        self.y2 += o.y2;
        self.yw += o.yw;
        self.w2 += o.w2;
    }
}

/// Interference visibility across the detector surface using exact
/// atom–point distances and spherical-wave amplitudes `e^{ik₁ρ}/(k₁ρ)`:
/// `Σ G_A G_B* / Σ ½(|G_A|² + |G_B|²)` over uniformly drawn surface points.
/// The standard error is the delta-method error of the ratio.
pub fn mc_geometric_visibility(
    params: &ProtocolParams,
    n_samples: u64,
    seed: u64,
) -> Result<Estimate<Complex64>, McError> {
    check_samples(n_samples)?;
    let frame = CanonicalFrame::new(params);
    let sums: RatioSums = run_batched(n_samples, seed, |rng, len| {
        let mut s = RatioSums::default();
        for _ in 0..len {
            let x = (rng.random::<f64>() - 0.5) * params.geometry.lx;
            let y = (rng.random::<f64>() - 0.5) * params.geometry.ly;
            let r = Vec3::new(x, y, params.geometry.big_d);
            let rho_a = (r - frame.atom_a).norm();
            let rho_b = (r - frame.atom_b).norm();
            let g_a = Complex64::from_polar(1.0 / (TWO_PI * rho_a), TWO_PI * rho_a);
            let g_b = Complex64::from_polar(1.0 / (TWO_PI * rho_b), TWO_PI * rho_b);
            let yv = g_a * g_b.conj();
            let wv = 0.5 * (g_a.norm_sqr() + g_b.norm_sqr());
            s.y += yv;
            s.w += wv;
            s.y2 += yv.norm_sqr();
            s.yw += yv * wv;
            s.w2 += wv * wv;
        }
        s
    });
    let n = n_samples as f64;
    let v = sums.y / sums.w;
    let resid2 = (sums.y2 - 2.0 * (v.conj() * sums.yw).re + v.norm_sqr() * sums.w2).max(0.0);
    let w_bar = sums.w / n;
    let std_error = (resid2 / (n * (n - 1.0))).sqrt() / w_bar;
    Ok(Estimate {
        mean: v,
        std_error,
        n_samples,
        seed,
    })
}

#[derive(Default)]
struct MeanSums {
    sum: f64,
    sum2: f64,
}

impl Merge for MeanSums {
    fn merge(&mut self, o: &Self) {
        self.sum += o.sum;
        self.sum2 += o.sum2;
    }
}

fn mean_estimate(s: &MeanSums, n: u64, seed: u64) -> Estimate<f64> {
    let nf = n as f64;
    let mean = s.sum / nf;
    let var = ((s.sum2 - nf * mean * mean) / (nf - 1.0)).max(0.0);
    Estimate {
        mean,
        std_error: (var / nf).sqrt(),
        n_samples: n,
        seed,
    }
}

/// Motional interference weight `T_A T_B*` for one emission delay `tau`,
/// sampled classically with the commutator phases applied analytically.
fn motional_weight<R: Rng + ?Sized>(
    trap: &DerivedQuantities,
    kin: [&WaveVector; 2],
    kout: [&WaveVector; 2],
    tau: f64,
    rng: &mut R,
) -> Complex64 {
    let pa = sample_thermal_phase_space(trap, rng);
    let pb = sample_thermal_phase_space(trap, rng);
    let phase_a = classical_phase(kin[0], kout[0], tau, trap, &pa) + commutator_phase(kin[0], kout[0], tau, trap);
    let phase_b = classical_phase(kin[1], kout[1], tau, trap, &pb) + commutator_phase(kin[1], kout[1], tau, trap);
    Complex64::from_polar(1.0, phase_a - phase_b)
}

/// Dynamical factor with emission towards the detector center: the real
/// part of `T_A(τ) T_B(τ)*` averaged over `τ ~ Exp(1)` and thermal orbits.
pub fn mc_dynamical_factor(
    params: &ProtocolParams,
    n_samples: u64,
    seed: u64,
) -> Result<Estimate<f64>, McError> {
    check_samples(n_samples)?;
    let frame = CanonicalFrame::new(params);
    let trap = derive(params);
    let kin_a = WaveVector::from_vec3(&frame.k_laser_a());
    let kin_b = WaveVector::from_vec3(&frame.k_laser_b());
    let kout_a = WaveVector::from_vec3(&frame.emission_a);
    let kout_b = WaveVector::from_vec3(&frame.emission_b);
    let sums: MeanSums = run_batched(n_samples, seed, |rng, len| {
        let mut s = MeanSums::default();
        for _ in 0..len {
            let tau: f64 = Exp1.sample(rng);
            let w = motional_weight(&trap, [&kin_a, &kin_b], [&kout_a, &kout_b], tau, rng).re;
            s.sum += w;
            s.sum2 += w * w;
        }
        s
    });
    Ok(mean_estimate(&sums, n_samples, seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExcitationPattern {
    None,
    A,
    B,
    AB,
}

impl ExcitationPattern {
    pub const ALL: [ExcitationPattern; 4] = [Self::None, Self::A, Self::B, Self::AB];

    fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::A => "A",
            Self::B => "B",
            Self::AB => "AB",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Gamma0,
    Gamma1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolOutcome {
    pub detected: bool,
    pub excitation_pattern: ExcitationPattern,
    /// Transition of the detected photon; `None` without a click.
    pub branch: Option<Branch>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternCounts {
    pub trials: u64,
    pub detected: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeTally {
    /// Indexed in [`ExcitationPattern::ALL`] order.
    pub by_pattern: [PatternCounts; 4],
}

impl OutcomeTally {
    pub fn record(&mut self, o: &ProtocolOutcome) {
        let c = &mut self.by_pattern[o.excitation_pattern.index()];
        c.trials += 1;
        c.detected += o.detected as u64;
    }

    pub fn get(&self, pattern: ExcitationPattern) -> PatternCounts {
        self.by_pattern[pattern.index()]
    }

    pub fn trials(&self) -> u64 {
        self.by_pattern.iter().map(|c| c.trials).sum()
    }

    pub fn detected(&self) -> u64 {
        self.by_pattern.iter().map(|c| c.detected).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub p_det: Estimate<f64>,
    /// `None` when no trial produced a click.
    pub fidelity: Option<Estimate<f64>>,
    /// Population of `|11⟩` among clicks.
    pub population_11: Option<Estimate<f64>>,
    pub conditional_state: Option<TwoAtomState>,
    pub outcomes: OutcomeTally,
}

#[derive(Default)]
struct ProtocolSums {
    tally: OutcomeTally,
    /// Click counts landing in `|01⟩, |10⟩, |11⟩`.
    populations: [u64; 3],
    coherence: Complex64,
    fid: f64,
    fid2: f64,
}

impl Merge for ProtocolSums {
    fn merge(&mut self, o: &Self) {
        for (a, b) in self.tally.by_pattern.iter_mut().zip(o.tally.by_pattern.iter()) {
            a.trials += b.trials;
            a.detected += b.detected;
        }
        for (a, b) in self.populations.iter_mut().zip(o.populations.iter()) {
            *a += b;
        }
        self.coherence += o.coherence;
        self.fid += o.fid;
        self.fid2 += o.fid2;
    }
}

struct Emitter<'a> {
    frame: &'a CanonicalFrame,
    big_d: f64,
    g1: f64,
    eta_d: f64,
}

impl Emitter<'_> {
    /// Emit from `atom`; returns the detector hit point of a detected
    /// photon and the branch taken.
    fn emit<R: Rng + ?Sized>(&self, atom: &Vec3, rng: &mut R) -> (Branch, Option<Vec3>) {
        let branch = if rng.random::<f64>() < self.g1 {
            Branch::Gamma1
        } else {
            Branch::Gamma0
        };
        let dir: [f64; 3] = UnitSphere.sample(rng);
        if branch == Branch::Gamma0 || dir[2] <= 0.0 {
            return (branch, None);
        }
        let t = (self.big_d - atom.z) / dir[2];
        let x = atom.x + t * dir[0];
        let y = atom.y + t * dir[1];
        if !self.frame.on_detector(x, y) || rng.random::<f64>() >= self.eta_d {
            return (branch, None);
        }
        (branch, Some(Vec3::new(x, y, self.big_d)))
    }
}

/// Full event simulation: independent excitation of each atom with
/// probability `sin²θ`, branch choice, isotropic emission, exact ray–plane
/// detector hits and detector efficiency. Single-excitation clicks carry the
/// interference coherence at the hit point, including the motional weight;
/// double-excitation clicks are incoherent.
pub fn mc_protocol(
    params: &ProtocolParams,
    n_trials: u64,
    seed: u64,
) -> Result<ProtocolReport, McError> {
    check_samples(n_trials)?;
    let frame = CanonicalFrame::new(params);
    let trap = derive(params);
    let s2 = params.laser.theta_las.sin().powi(2);
    let phi = canonical_phase(params);
    let laser_phase = Complex64::from_polar(1.0, frame.laser_phase_a() - frame.laser_phase_b());
    let rot = Complex64::from_polar(1.0, -phi);
    let kin_a = WaveVector::from_vec3(&frame.k_laser_a());
    let kin_b = WaveVector::from_vec3(&frame.k_laser_b());
    let emitter = Emitter {
        frame: &frame,
        big_d: params.geometry.big_d,
        g1: params.levels.gamma1_frac(),
        eta_d: params.levels.eta_d,
    };

    let sums: ProtocolSums = run_batched(n_trials, seed, |rng, len| {
        let mut s = ProtocolSums::default();
        for _ in 0..len {
            let exc_a = rng.random::<f64>() < s2;
            let exc_b = rng.random::<f64>() < s2;
            let pattern = match (exc_a, exc_b) {
                (false, false) => ExcitationPattern::None,
                (true, false) => ExcitationPattern::A,
                (false, true) => ExcitationPattern::B,
                (true, true) => ExcitationPattern::AB,
            };
            let (br_a, hit_a) = if exc_a { emitter.emit(&frame.atom_a, rng) } else { (Branch::Gamma0, None) };
            let (br_b, hit_b) = if exc_b { emitter.emit(&frame.atom_b, rng) } else { (Branch::Gamma0, None) };
            let detected = hit_a.is_some() || hit_b.is_some();
            s.tally.record(&ProtocolOutcome {
                detected,
                excitation_pattern: pattern,
                branch: detected.then_some(Branch::Gamma1),
            });
            if !detected {
                continue;
            }
            let f = match pattern {
                ExcitationPattern::A | ExcitationPattern::B => {
                    let (hit, from_a) = match hit_a {
                        Some(h) => (h, true),
                        None => (hit_b.expect("detected"), false),
                    };
                    s.populations[if from_a { 1 } else { 0 }] += 1;
                    let da = hit - frame.atom_a;
                    let db = hit - frame.atom_b;
                    let (rho_a, rho_b) = (da.norm(), db.norm());
                    // amplitudes e^{ik₁ρ}√D/ρ^{3/2}, importance-weighted by the
                    // emitting atom's hit density
                    let rho_src = if from_a { rho_a } else { rho_b };
                    let geo = Complex64::from_polar(
                        0.5 * (rho_src * rho_src * rho_src / (rho_a * rho_b).powf(1.5)),
                        TWO_PI * (rho_a - rho_b),
                    );
                    let kout_a = WaveVector::from_vec3(&(da / rho_a));
                    let kout_b = WaveVector::from_vec3(&(db / rho_b));
                    let tau: f64 = Exp1.sample(rng);
                    let motion = motional_weight(&trap, [&kin_a, &kin_b], [&kout_a, &kout_b], tau, rng);
                    let c = geo * laser_phase * motion;
                    s.coherence += c;
                    0.5 + (c * rot).re
                }
                ExcitationPattern::AB => {
                    // undetected partner's branch decides |10⟩/|01⟩ vs |11⟩
                    let partner = match (hit_a.is_some(), hit_b.is_some()) {
                        (true, false) => br_b,
                        (false, true) => br_a,
                        _ => Branch::Gamma1,
                    };
                    if partner == Branch::Gamma1 {
                        s.populations[2] += 1;
                        0.0
                    } else {
                        s.populations[if hit_a.is_some() { 1 } else { 0 }] += 1;
                        0.5
                    }
                }
                ExcitationPattern::None => unreachable!("click without excitation"),
            };
            s.fid += f;
            s.fid2 += f * f;
        }
        s
    });

    let clicks = sums.tally.detected();
    let n = n_trials as f64;
    let p = clicks as f64 / n;
    let p_det = Estimate {
        mean: p,
        std_error: (p * (1.0 - p) / n).sqrt(),
        n_samples: n_trials,
        seed,
    };
    if clicks == 0 {
        return Ok(ProtocolReport {
            p_det,
            fidelity: None,
            population_11: None,
            conditional_state: None,
            outcomes: sums.tally,
        });
    }
    let k = clicks as f64;
    let fidelity = if clicks > 1 {
        mean_estimate(
            &MeanSums {
                sum: sums.fid,
                sum2: sums.fid2,
            },
            clicks,
            seed,
        )
    } else {
        Estimate {
            mean: sums.fid,
            std_error: f64::INFINITY,
            n_samples: 1,
            seed,
        }
    };
    let p11 = sums.populations[2] as f64 / k;
    let mut rho = Matrix4::<Complex64>::zeros();
    rho[(1, 1)] = Complex64::new(sums.populations[0] as f64 / k, 0.0);
    rho[(2, 2)] = Complex64::new(sums.populations[1] as f64 / k, 0.0);
    rho[(3, 3)] = Complex64::new(p11, 0.0);
    rho[(2, 1)] = sums.coherence / k;
    rho[(1, 2)] = rho[(2, 1)].conj();
    Ok(ProtocolReport {
        p_det,
        fidelity: Some(fidelity),
        population_11: Some(Estimate {
            mean: p11,
            std_error: (p11 * (1.0 - p11) / k).sqrt(),
            n_samples: clicks,
            seed,
        }),
        conditional_state: Some(TwoAtomState { rho, phi }),
        outcomes: sums.tally,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{detection_probability, f_dyn, f_geo_two_path, PdetForm, QuadratureConfig};
    use crate::conditional::bell_fidelity;
    use crate::params::ConfigKey;

    fn far_field() -> ProtocolParams {
        ProtocolParams::favorable_scenario()
            .with(ConfigKey::HalfSeparation, 50.0)
            .with(ConfigKey::DetectorDistance, 35.0)
            .with(ConfigKey::Lx, 1.41)
            .with(ConfigKey::Ly, 1.41)
    }

    #[test]
    fn rejects_small_sample_counts() {
        let p = far_field();
        assert_eq!(
            mc_geometric_visibility(&p, 99, 1).unwrap_err(),
            McError::TooFewSamples { n: 99, min: 100 }
        );
        assert!(mc_dynamical_factor(&p, 10, 1).is_err());
        assert!(mc_protocol(&p, 0, 1).is_err());
    }

    #[test]
    fn tiny_detector_has_unit_visibility() {
        let p = far_field().with(ConfigKey::Lx, 1e-6).with(ConfigKey::Ly, 1e-6);
        let v = mc_geometric_visibility(&p, 1000, 3).unwrap();
        assert!((v.mean.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn visibility_matches_two_path_form() {
        let p = far_field();
        let v = mc_geometric_visibility(&p, 200_000, 5).unwrap();
        let expected = f_geo_two_path(&p.geometry);
        assert!(v.mean.im.abs() < 3.0 * v.std_error + 1e-3);
        assert!(
            (v.mean.re - expected).abs() <= 3.0 * v.std_error + 1e-3,
            "{} vs {expected} (se {})",
            v.mean.re,
            v.std_error
        );
    }

    #[test]
    fn zero_eta_gives_unit_dynamical_factor() {
        let p = far_field().with(ConfigKey::EtaI, 0.0);
        let e = mc_dynamical_factor(&p, 1000, 9).unwrap();
        assert!((e.mean - 1.0).abs() < 1e-15);
        assert!(e.std_error < 1e-7);
    }

    #[test]
    fn dynamical_factor_matches_quadrature() {
        let p = far_field()
            .with(ConfigKey::EtaI, 0.05)
            .with(ConfigKey::TOverTd, 1.0)
            .with(ConfigKey::NuOverGamma, 0.3);
        let e = mc_dynamical_factor(&p, 200_000, 17).unwrap();
        let exact = f_dyn(&derive(&p), p.geometry.chi(), &QuadratureConfig::default()).unwrap();
        assert!(e.covers(exact, 3.0, 0.0), "{e:?} vs {exact}");
    }

    #[test]
    fn results_independent_of_thread_count() {
        let p = far_field();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    (
                        mc_geometric_visibility(&p, 50_000, 21).unwrap(),
                        mc_dynamical_factor(&p, 50_000, 21).unwrap(),
                        mc_protocol(&p, 100_000, 21).unwrap(),
                    )
                })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn no_detection_report() {
        let p = far_field().with(ConfigKey::EtaD, 0.0);
        let r = mc_protocol(&p, 10_000, 1).unwrap();
        assert_eq!(r.p_det.mean, 0.0);
        assert!(r.fidelity.is_none());
        assert!(r.conditional_state.is_none());
        assert_eq!(r.outcomes.trials(), 10_000);
    }

    fn compact() -> ProtocolParams {
        // large solid angle so that clicks are plentiful
        ProtocolParams::favorable_scenario()
            .with(ConfigKey::HalfSeparation, 5.0)
            .with(ConfigKey::DetectorDistance, 5.0 / 2f64.sqrt())
            .with(ConfigKey::Lx, 0.5)
            .with(ConfigKey::Ly, 0.5)
            .with(ConfigKey::ThetaLas, std::f64::consts::FRAC_PI_4)
            .with(ConfigKey::EtaD, 1.0)
            .with(ConfigKey::Gamma0Frac, 0.0)
    }

    #[test]
    fn doubly_excited_population() {
        let p = compact();
        let r = mc_protocol(&p, 2_000_000, 4).unwrap();
        let pop = r.population_11.unwrap();
        // sin⁴θ · 2m_aa over the trace sin²θ · 2m_aa
        assert!(pop.covers(0.5, 3.0, 0.0), "{pop:?}");
    }

    #[test]
    fn protocol_detection_probability_and_state() {
        let p = compact();
        let r = mc_protocol(&p, 2_000_000, 8).unwrap();
        let analytic = detection_probability(&p, PdetForm::Direct);
        assert!(r.p_det.covers(analytic, 3.0, 0.0), "{:?} vs {analytic}", r.p_det);
        let state = r.conditional_state.unwrap();
        assert!(state.is_hermitian(1e-15));
        assert!((state.trace().re - 1.0).abs() < 1e-12);
        let f = r.fidelity.unwrap();
        assert!((bell_fidelity(&state) - f.mean).abs() < 1e-12);
        let tally = r.outcomes;
        assert_eq!(tally.get(ExcitationPattern::None).detected, 0);
    }

    #[test]
    fn p_det_scales_with_detected_branch() {
        let full = mc_protocol(&compact(), 2_000_000, 2).unwrap().p_det;
        let half = mc_protocol(&compact().with(ConfigKey::Gamma0Frac, 0.5), 2_000_000, 3)
            .unwrap()
            .p_det;
        let ratio = half.mean / full.mean;
        let se = ratio * ((half.std_error / half.mean).powi(2) + (full.std_error / full.mean).powi(2)).sqrt();
        assert!((ratio - 0.5).abs() < 3.0 * se, "ratio {ratio} ± {se}");
    }

    #[test]
    fn protocol_fidelity_matches_closed_form() {
        use crate::analytic::fidelity_total;
        for (g0, seed) in [(0.0, 31), (0.5, 32)] {
            let p = compact()
                .with(ConfigKey::ThetaLas, 0.3)
                .with(ConfigKey::Gamma0Frac, g0)
                .with(ConfigKey::Lx, 0.2)
                .with(ConfigKey::Ly, 2.0);
            let r = mc_protocol(&p, 4_000_000, seed).unwrap();
            let fd = f_dyn(&derive(&p), p.geometry.chi(), &QuadratureConfig::default()).unwrap();
            let expected = fidelity_total(&p, f_geo_two_path(&p.geometry), fd);
            let f = r.fidelity.unwrap();
            assert!(f.covers(expected, 3.0, 2e-3), "{f:?} vs {expected}");
        }
    }
}
