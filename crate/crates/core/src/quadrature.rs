//! Globally adaptive 7/15-point Gauss–Kronrod integration on a finite range.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
pub enum QuadError {
    #[error(
        "quadrature did not converge within {max_subdivisions} subdivisions: \
         value {value:e}, achieved error estimate {achieved_error:e} (requested {requested:e})"
    )]
    NonConvergence {
        value: f64,
        achieved_error: f64,
        requested: f64,
        max_subdivisions: usize,
    },
    #[error("integrand returned a non-finite value at x = {0}")]
    NonFinite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error: f64,
    pub intervals: usize,
}

// Kronrod abscissae (positive half, descending) and weights; the Gauss
// 7-point nodes are the odd-indexed abscissae.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<(f64, f64), QuadError> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let eval = |x: f64| {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(QuadError::NonFinite(x))
        }
    };
    let fc = eval(center)?;
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let sum = eval(center - dx)? + eval(center + dx)?;
        kronrod += WGK[j] * sum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * sum;
        }
    }
    Ok((kronrod * half, ((kronrod - gauss) * half).abs()))
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Integrate `f` over `[breaks[0], breaks[last]]`, starting from the given
/// partition and bisecting the segment with the largest error estimate until
/// the total error is below `max(abs_tol, rel_tol·|I|)`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    max_subdivisions: usize,
) -> Result<QuadResult, QuadError> {
    assert!(breaks.len() >= 2, "need at least one interval");
    let mut heap = BinaryHeap::with_capacity(breaks.len() * 2);
    let (mut total, mut total_err) = (0.0, 0.0);
    for w in breaks.windows(2) {
        let (v, e) = gk15(&f, w[0], w[1])?;
        total += v;
        total_err += e;
        heap.push(Segment { a: w[0], b: w[1], value: v, error: e });
    }
    loop {
        let target = abs_tol.max(rel_tol * total.abs());
        if total_err <= target {
            break;
        }
        if heap.len() >= max_subdivisions {
            return Err(QuadError::NonConvergence {
                value: total,
                achieved_error: total_err,
                requested: target,
                max_subdivisions,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Segment below floating-point resolution; cannot refine further.
            return Err(QuadError::NonConvergence {
                value: total,
                achieved_error: total_err,
                requested: target,
                max_subdivisions,
            });
        }
        let (v1, e1) = gk15(&f, worst.a, mid)?;
        let (v2, e2) = gk15(&f, mid, worst.b)?;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Segment { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: worst.b, value: v2, error: e2 });
    }
    // Re-sum from the segments to shed the drift of incremental updates.
    let (value, abs_error) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
    Ok(QuadResult {
        value,
        abs_error,
        intervals: heap.len(),
    })
}
