//! Large-scale and small-scale channel construction.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Layout, ScenarioLayout, MIN_SEPARATION};

/// Path gains of one scenario. Row `k` belongs to user `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LargeScaleProfile {
    /// `gamma[k][l] = d_{k,l}^{-alpha/2}`.
    pub gamma: Vec<Vec<f64>>,
    /// `||gamma_k||^2`.
    pub gamma_norm_sq: Vec<f64>,
    /// `gamma_k / ||gamma_k||`.
    pub beta: Vec<Vec<f64>>,
}

impl LargeScaleProfile {
    pub fn num_users(&self) -> usize {
        self.gamma.len()
    }

    pub fn num_antennas(&self) -> usize {
        self.gamma.first().map_or(0, Vec::len)
    }

    /// `beta_{k,l}^2` for user `k`.
    pub fn beta_sq(&self, k: usize) -> Vec<f64> {
        self.beta[k].iter().map(|b| b * b).collect()
    }
}

/// Amplitude path gains and their per-user normalization.
pub fn large_scale_profile(scenario: &ScenarioLayout) -> Result<LargeScaleProfile> {
    let l_antennas = scenario.num_antennas();
    let half_alpha = 0.5 * scenario.alpha;
    let mut gamma = Vec::with_capacity(scenario.num_users());
    let mut norms = Vec::with_capacity(scenario.num_users());
    let mut beta = Vec::with_capacity(scenario.num_users());
    for k in 0..scenario.num_users() {
        let mut row = Vec::with_capacity(l_antennas);
        for l in 0..l_antennas {
            let d = scenario.access_distance(k, l);
            if !(d >= MIN_SEPARATION) {
                return Err(Error::SingularGeometry { distance: d });
            }
            row.push(d.powf(-half_alpha));
        }
        let norm_sq: f64 = row.iter().map(|g| g * g).sum();
        let b = match scenario.layout {
            Layout::Ca => vec![1.0 / (l_antennas as f64).sqrt(); l_antennas],
            Layout::Da => {
                let norm = norm_sq.sqrt();
                row.iter().map(|g| g / norm).collect()
            }
        };
        gamma.push(row);
        norms.push(norm_sq);
        beta.push(b);
    }
    Ok(LargeScaleProfile {
        gamma,
        gamma_norm_sq: norms,
        beta,
    })
}

/// One draw of i.i.d. CN(0, 1) small-scale fading, `K x L`.
#[derive(Debug, Clone, PartialEq)]
pub struct FadingRealization {
    pub h: DMatrix<Complex64>,
}

impl FadingRealization {
    /// `g_k = gamma_k ∘ h_k`, stacked.
    pub fn channel(&self, profile: &LargeScaleProfile) -> DMatrix<Complex64> {
        self.scaled_by(&profile.gamma)
    }

    /// `g~_k = beta_k ∘ h_k`, stacked.
    pub fn normalized_channel(&self, profile: &LargeScaleProfile) -> DMatrix<Complex64> {
        self.scaled_by(&profile.beta)
    }

    fn scaled_by(&self, weights: &[Vec<f64>]) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.h.nrows(), self.h.ncols(), |k, l| self.h[(k, l)] * weights[k][l])
    }
}

pub fn sample_fading<R: Rng + ?Sized>(users: usize, antennas: usize, rng: &mut R) -> Result<FadingRealization> {
    if users == 0 || antennas == 0 {
        return Err(Error::EmptyInput("fading dimensions"));
    }
    let h = DMatrix::from_fn(users, antennas, |_, _| sample_cn(rng));
    Ok(FadingRealization { h })
}

/// One CN(0, 1) sample.
#[inline]
pub fn sample_cn<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

/// Smallest relative gap between rates accepted by the closed forms.
pub const MIN_RELATIVE_RATE_GAP: f64 = 1e-4;
/// Largest `ln |coefficient|` accepted by the closed forms.
pub const MAX_LOG_COEFFICIENT: f64 = 250.0;
/// Largest tolerated `sum |terms| / |result|` times machine epsilon.
pub const MAX_CANCELLATION_ERROR: f64 = 1e-9;

/// Sum of independent exponentials with distinct rates, stored as the
/// partial-fraction coefficients `c_l = prod_{i != l} r_i / (r_i - r_l)` in
/// log-magnitude and sign form.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypoexponential {
    rates: Vec<f64>,
    ln_abs_coeff: Vec<f64>,
    negative: Vec<bool>,
}

impl Hypoexponential {
    /// From the exponential means (for `||g~||^2`, the `beta_l^2`).
    pub fn from_means(means: &[f64]) -> Result<Self> {
        if means.is_empty() {
            return Err(Error::EmptyInput("hypoexponential weights"));
        }
        if means.iter().any(|m| !(*m > 0.0) || !m.is_finite()) {
            return Err(Error::InvalidParameter("exponential means must be positive".into()));
        }
        Self::from_rates(means.iter().map(|m| 1.0 / m).collect())
    }

    pub fn from_rates(rates: Vec<f64>) -> Result<Self> {
        let n = rates.len();
        let mut sorted = rates.clone();
        sorted.sort_by(f64::total_cmp);
        for w in sorted.windows(2) {
            let gap = (w[1] - w[0]) / w[1];
            if gap < MIN_RELATIVE_RATE_GAP {
                return Err(Error::IllConditioned(format!(
                    "rates {} and {} closer than relative gap {MIN_RELATIVE_RATE_GAP}",
                    w[0], w[1]
                )));
            }
        }
        let mut ln_abs_coeff = vec![0.0; n];
        let mut negative = vec![false; n];
        for l in 0..n {
            let mut acc = 0.0;
            let mut neg = false;
            for i in 0..n {
                if i == l {
                    continue;
                }
                let diff = rates[i] - rates[l];
                acc += rates[i].ln() - diff.abs().ln();
                neg ^= diff < 0.0;
            }
            if acc > MAX_LOG_COEFFICIENT {
                return Err(Error::IllConditioned(format!(
                    "partial-fraction coefficient e^{acc:.1} exceeds e^{MAX_LOG_COEFFICIENT}"
                )));
            }
            ln_abs_coeff[l] = acc;
            negative[l] = neg;
        }
        Ok(Self {
            rates,
            ln_abs_coeff,
            negative,
        })
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// Signed coefficient `c_l`.
    pub fn coefficient(&self, l: usize) -> f64 {
        let m = self.ln_abs_coeff[l].exp();
        if self.negative[l] {
            -m
        } else {
            m
        }
    }

    /// `sum_l c_l * term(l, rate_l)`, refused when the rounding error of the
    /// alternating sum exceeds [`MAX_CANCELLATION_ERROR`] relative to the
    /// result.
    pub fn mix<F: Fn(usize, f64) -> f64>(&self, term: F) -> Result<f64> {
        self.mix_with_scale(term, 0.0)
    }

    /// As [`Self::mix`], with the error measured against `max(|result|, scale)`
    /// for sums whose true value may be zero.
    pub fn mix_with_scale<F: Fn(usize, f64) -> f64>(&self, term: F, scale: f64) -> Result<f64> {
        let mut total = 0.0;
        let mut magnitude = 0.0;
        for l in 0..self.rates.len() {
            let t = self.coefficient(l) * term(l, self.rates[l]);
            total += t;
            magnitude += t.abs();
        }
        let rounding = magnitude * f64::EPSILON * self.rates.len() as f64;
        if rounding > MAX_CANCELLATION_ERROR * total.abs().max(scale).max(f64::MIN_POSITIVE) {
            return Err(Error::IllConditioned(format!(
                "cancellation: sum of |terms| {magnitude:e} against result {total:e}"
            )));
        }
        Ok(total)
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Ok(0.0);
        }
        let mean: f64 = self.rates.iter().map(|r| 1.0 / r).sum();
        let v = self.mix_with_scale(|_, r| r * (-r * x).exp(), 1.0 / mean)?;
        Ok(v.max(0.0))
    }
}

/// Density of `||g~_k||^2 = sum_l beta_l^2 |h_l|^2`.
pub fn hypoexp_pdf(beta_sq: &[f64], x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("density argument must be >= 0, got {x}")));
    }
    let total: f64 = beta_sq.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("weights must sum to 1, got {total}")));
    }
    Hypoexponential::from_means(beta_sq)?.pdf(x)
}
