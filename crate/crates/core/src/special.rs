//! Special functions and quadrature.
//!
//! Everything here works in the scaled or logarithmic form that the rate
//! expressions need: `e^x E1(x)` is evaluated jointly (the two factors
//! overflow and underflow separately for large `x`), and the incomplete
//! gamma function is available as `ln Γ(s, x)` for the large shape
//! parameters that show up with hundreds of antennas.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `log2(e)`, the nats-to-bits factor.
pub const LOG2_E: f64 = std::f64::consts::LOG2_E;

const EPS: f64 = f64::EPSILON;
const FPMIN: f64 = f64::MIN_POSITIVE / EPS;
const MAX_ITER: usize = 100_000;

/// Tolerances and limits for numerical integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    /// Node count for fixed Gauss–Legendre rules.
    pub nodes: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_subdivisions: 4000,
            nodes: 64,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::InvalidParameter(
                "quadrature tolerances must be positive".into(),
            ));
        }
        if self.max_subdivisions < 1 || self.nodes < 1 {
            return Err(Error::InvalidParameter(
                "quadrature needs at least one subdivision and one node".into(),
            ));
        }
        Ok(())
    }

    /// Same spec with looser tolerances, used for inner integrals of nested
    /// quadrature.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            abs_tol: self.abs_tol * factor,
            rel_tol: self.rel_tol * factor,
            ..*self
        }
    }
}

/// Result of a numerical integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

impl std::ops::Add for Quadrature {
    type Output = Quadrature;
    fn add(self, rhs: Quadrature) -> Quadrature {
        Quadrature {
            value: self.value + rhs.value,
            error: self.error + rhs.error,
            evaluations: self.evaluations + rhs.evaluations,
        }
    }
}

/// `e^x · E1(x)` for `x > 0`.
///
/// Power series below 1, Lentz continued fraction above. The result satisfies
/// `ln(1 + 2/x)/2 < e^x E1(x) < ln(1 + 1/x) < 1/x` and decreases in `x`.
pub fn exp_e1(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("exp_e1 requires x > 0, got {x}")));
    }
    if x < 1.0 {
        // E1(x) = -γ - ln x - Σ (-x)^k / (k k!)
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..MAX_ITER {
            term *= -x / k as f64;
            let contrib = term / k as f64;
            sum += contrib;
            if contrib.abs() < sum.abs().max(1.0) * EPS {
                break;
            }
        }
        Ok(x.exp() * (-EULER_GAMMA - x.ln() - sum))
    } else {
        let mut b = x + 1.0;
        let mut c = 1.0 / FPMIN;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < EPS {
                return Ok(h);
            }
        }
        Err(Error::NotConverged {
            estimate: h,
            error: f64::NAN,
        })
    }
}

/// Natural log of the regularized-free upper incomplete gamma `ln Γ(s, x)`.
pub fn ln_upper_incomplete_gamma(s: f64, x: f64) -> Result<f64> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!(
            "incomplete gamma requires s > 0, got {s}"
        )));
    }
    if !(x >= 0.0) {
        return Err(Error::Domain(format!(
            "incomplete gamma requires x >= 0, got {x}"
        )));
    }
    let ln_gamma_s = ln_gamma(s);
    if x == 0.0 {
        return Ok(ln_gamma_s);
    }
    if x.is_infinite() {
        return Ok(f64::NEG_INFINITY);
    }
    if x < s + 1.0 {
        let ln_p = ln_lower_regularized_series(s, x)?;
        let p = ln_p.exp();
        Ok(ln_gamma_s + (-p).ln_1p())
    } else {
        ln_upper_continued_fraction(s, x)
    }
}

/// Upper incomplete gamma `Γ(s, x) = ∫_x^∞ t^{s-1} e^{-t} dt`.
pub fn upper_incomplete_gamma(s: f64, x: f64) -> Result<f64> {
    ln_upper_incomplete_gamma(s, x).map(f64::exp)
}

/// Lower incomplete gamma `γ(s, x) = Γ(s) - Γ(s, x)`, computed without the
/// subtraction when `x` is small.
pub fn lower_incomplete_gamma(s: f64, x: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!(
            "incomplete gamma requires s > 0, got {s}"
        )));
    }
    if !(x >= 0.0) {
        return Err(Error::Domain(format!(
            "incomplete gamma requires x >= 0, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let ln_gamma_s = ln_gamma(s);
    if x < s + 1.0 {
        Ok((ln_lower_regularized_series(s, x)? + ln_gamma_s).exp())
    } else {
        let q = (ln_upper_continued_fraction(s, x)? - ln_gamma_s).exp();
        Ok(ln_gamma_s.exp() * (1.0 - q))
    }
}

// ln P(s, x) by the power series, valid for x < s + 1.
fn ln_lower_regularized_series(s: f64, x: f64) -> Result<f64> {
    let mut ap = s;
    let mut del = 1.0 / s;
    let mut sum = del;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * EPS {
            return Ok(sum.ln() - x + s * x.ln() - ln_gamma(s));
        }
    }
    Err(Error::NotConverged {
        estimate: sum,
        error: del,
    })
}

// ln Γ(s, x) by the Lentz continued fraction, valid for x >= s + 1.
fn ln_upper_continued_fraction(s: f64, x: f64) -> Result<f64> {
    let mut b = x + 1.0 - s;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - s);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            return Ok(-x + s * x.ln() + h.ln());
        }
    }
    Err(Error::NotConverged {
        estimate: h,
        error: f64::NAN,
    })
}

/// Log-density of Gamma(shape, scale) at `x`.
pub fn ln_gamma_density(x: f64, shape: f64, scale: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    let power = if shape == 1.0 {
        0.0
    } else if x == 0.0 {
        return if shape < 1.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
    } else {
        (shape - 1.0) * x.ln()
    };
    power - x / scale - ln_gamma(shape) - shape * scale.ln()
}

/// `E[g(X)]` for `X ~ Gamma(shape, scale)`, the density evaluated in log
/// space so that shapes in the thousands are fine.
pub fn gamma_expectation<G: Fn(f64) -> f64>(
    shape: f64,
    scale: f64,
    g: G,
    spec: &QuadratureSpec,
) -> Result<Quadrature> {
    if !(shape >= 1.0) || !(scale > 0.0) {
        return Err(Error::Domain(format!(
            "gamma expectation needs shape >= 1 and scale > 0 (got {shape}, {scale})"
        )));
    }
    let mean = shape * scale;
    let sd = shape.sqrt() * scale;
    let lo = (mean - 12.0 * sd).max(0.0);
    let hi = mean + 12.0 * sd;
    let integrand = |x: f64| {
        let ln_p = ln_gamma_density(x, shape, scale);
        if ln_p == f64::NEG_INFINITY {
            0.0
        } else {
            g(x) * ln_p.exp()
        }
    };
    let mut total = Quadrature {
        value: 0.0,
        error: 0.0,
        evaluations: 0,
    };
    if lo > 0.0 {
        total = total + integrate_adaptive(&integrand, 0.0, lo, spec)?;
    }
    total = total + integrate_adaptive(&integrand, lo, mean, spec)?;
    total = total + integrate_adaptive(&integrand, mean, hi, spec)?;
    total = total + integrate_adaptive(&integrand, hi, f64::INFINITY, spec)?;
    Ok(total)
}

// Gauss–Kronrod 7/15 abscissae and weights.
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
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
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

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs_sum = kronrod.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        kronrod += WGK[j] * (f1 + f2);
        abs_sum += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = kronrod * 0.5;
    let mut asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = kronrod * half;
    let abs_sum = abs_sum * half.abs();
    let asc = asc * half.abs();
    let mut error = ((kronrod - gauss) * half).abs();
    if asc != 0.0 && error != 0.0 {
        error = asc * (200.0 * error / asc).powf(1.5).min(1.0);
    }
    let floor = 50.0 * EPS * abs_sum;
    if abs_sum > f64::MIN_POSITIVE / (50.0 * EPS) && floor > error {
        error = floor;
    }
    Segment { a, b, value, error }
}

/// Globally adaptive Gauss–Kronrod (7/15) integration over `[a, b]`.
///
/// An infinite upper bound is mapped onto `[0, 1)` with `x = a + t/(1-t)`.
/// The integrand is never evaluated at the end points.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    spec: &QuadratureSpec,
) -> Result<Quadrature> {
    spec.validate()?;
    if a.is_nan() || b.is_nan() || a.is_infinite() {
        return Err(Error::Domain(format!("bad integration bounds [{a}, {b}]")));
    }
    if b == f64::INFINITY {
        let mapped = move |t: f64| {
            let one_minus = 1.0 - t;
            let x = a + t / one_minus;
            let fx = f(x);
            if fx == 0.0 {
                0.0
            } else {
                fx / (one_minus * one_minus)
            }
        };
        return adaptive_finite(&mapped, 0.0, 1.0, spec);
    }
    if a == b {
        return Ok(Quadrature {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    if b < a {
        let q = adaptive_finite(&f, b, a, spec)?;
        return Ok(Quadrature {
            value: -q.value,
            ..q
        });
    }
    adaptive_finite(&f, a, b, spec)
}

fn adaptive_finite<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    spec: &QuadratureSpec,
) -> Result<Quadrature> {
    let first = kronrod15(f, a, b);
    let mut evaluations = 15;
    let mut heap = BinaryHeap::new();
    let mut value = first.value;
    let mut error = first.error;
    heap.push(first);
    // Segments too narrow to split further; their error is final.
    let mut frozen_error = 0.0;
    let mut frozen_value = 0.0;

    let tolerance = |v: f64| spec.abs_tol.max(spec.rel_tol * v.abs());
    let mut subdivisions = 1;
    while error > tolerance(value) {
        if subdivisions >= spec.max_subdivisions {
            break;
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if (worst.b - worst.a) <= 1e3 * EPS * mid.abs().max(f64::MIN_POSITIVE) {
            frozen_error += worst.error;
            frozen_value += worst.value;
            if heap.is_empty() {
                break;
            }
            continue;
        }
        let left = kronrod15(f, worst.a, mid);
        let right = kronrod15(f, mid, worst.b);
        evaluations += 30;
        subdivisions += 1;
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        // Resum periodically so the running totals do not drift.
        if subdivisions % 64 == 0 {
            value = frozen_value + heap.iter().map(|s| s.value).sum::<f64>();
            error = frozen_error + heap.iter().map(|s| s.error).sum::<f64>();
        }
    }
    value = frozen_value + heap.iter().map(|s| s.value).sum::<f64>();
    error = frozen_error + heap.iter().map(|s| s.error).sum::<f64>();
    if !value.is_finite() {
        return Err(Error::NotConverged {
            estimate: value,
            error,
        });
    }
    if error > tolerance(value) {
        return Err(Error::NotConverged {
            estimate: value,
            error,
        });
    }
    Ok(Quadrature {
        value,
        error,
        evaluations,
    })
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / dp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Fixed-order Gauss–Legendre rule over a finite interval.
pub fn integrate_fixed<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, nodes: usize) -> f64 {
    let (x, w) = gauss_legendre(nodes);
    let half = 0.5 * (b - a);
    let center = 0.5 * (a + b);
    x.iter()
        .zip(&w)
        .map(|(xi, wi)| wi * f(center + half * xi))
        .sum::<f64>()
        * half
}

/// Bits from nats.
#[inline]
pub fn nats_to_bits(x: f64) -> f64 {
    x / LN_2
}
