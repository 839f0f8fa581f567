//! Maximum-ratio transmission: precoder, interference weights, average
//! SINRs, ergodic-rate closed forms, the distributed-layout SINR upper bound
//! and the large-system asymptotes.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{sample_cn, Hypoexponential, LargeScaleProfile, MAX_CANCELLATION_ERROR};
use crate::error::{Error, Result};
use crate::geometry::{neighbor_stats, Layout, NeighborStats, ScenarioLayout};
use crate::montecarlo::{position_average, Method, RateEstimate, SampleMean, ScenarioValue, SimulationPlan};
use crate::special::{exp_e1, gamma_expectation, integrate_adaptive, QuadratureSpec, LOG2_E};

/// Largest antenna count for which the closed-form interference weights are
/// attempted.
pub const CLOSED_FORM_MAX_ANTENNAS: usize = 64;

/// Tolerated deviation of an interference-weight row sum from 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// Matched-filter precoder `g^H / ||g||`.
pub fn mrt_precoder(g: &[Complex64]) -> Result<Vec<Complex64>> {
    if g.is_empty() {
        return Err(Error::EmptyInput("channel vector"));
    }
    let norm = g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::DegenerateChannel);
    }
    Ok(g.iter().map(|z| z.conj() / norm).collect())
}

/// Signal and intra-cell interference power received by one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceivedPower {
    pub signal: f64,
    pub interference: f64,
}

/// Received powers of every user for one channel draw `g` (K x L) under MRT
/// with `power` per user: signal `P ||g_k||^2` and interference
/// `P sum_{j != k} |g_k g_j^H|^2 / ||g_j||^2`.
pub fn mrt_received_powers(g: &DMatrix<Complex64>, power: f64) -> Result<Vec<ReceivedPower>> {
    let k_users = g.nrows();
    let gram = g * g.adjoint();
    let norms: Vec<f64> = (0..k_users).map(|k| gram[(k, k)].re).collect();
    if norms.iter().any(|n| !(*n > 0.0)) {
        return Err(Error::DegenerateChannel);
    }
    Ok((0..k_users)
        .map(|k| {
            let interference: f64 = (0..k_users)
                .filter(|&j| j != k)
                .map(|j| gram[(k, j)].norm_sqr() / norms[j])
                .sum();
            ReceivedPower {
                signal: power * norms[k],
                interference: power * interference,
            }
        })
        .collect())
}

/// How a row of interference weights was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMethod {
    ClosedForm,
    Transform,
    MonteCarlo,
}

/// `a[j][l] = E[|g~_{j,l}|^2 / ||g~_j||^2]`, the share of user `j`'s MRT
/// beam that lands on antenna `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceWeights {
    pub a: Vec<Vec<f64>>,
    pub method: Vec<WeightMethod>,
}

fn check_weights(beta_sq: &[f64]) -> Result<()> {
    if beta_sq.is_empty() {
        return Err(Error::EmptyInput("large-scale weights"));
    }
    if beta_sq.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
        return Err(Error::InvalidParameter("large-scale weights must be positive".into()));
    }
    let total: f64 = beta_sq.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "squared weights must sum to 1, got {total}"
        )));
    }
    Ok(())
}

// (ln r - 1 + 1/r) / (r - 1), with its Taylor series near r = 1.
fn weight_kernel(r: f64) -> f64 {
    let u = r - 1.0;
    if u.abs() < 0.05 {
        // sum_{n>=2} (-1)^n (n-1)/n u^{n-1}
        let mut sum = 0.0;
        let mut power = 1.0;
        for n in 2..30 {
            power *= u;
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * (n - 1) as f64 / n as f64 * power;
        }
        return sum;
    }
    (u.ln_1p() - 1.0 + 1.0 / r) / u
}

/// Closed-form interference weights of one user from its squared
/// normalized gains.
///
/// With rates `lambda = beta^{-2}` and hypoexponential coefficients `c_m`,
/// `a_l = sum_{m != l} c_m * phi(lambda_l / lambda_m)` where
/// `phi(r) = (ln r - 1 + 1/r) / (r - 1)`.
pub fn interference_weight_row(beta_sq: &[f64]) -> Result<Vec<f64>> {
    check_weights(beta_sq)?;
    let n = beta_sq.len();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let hypo = Hypoexponential::from_means(beta_sq)?;
    let rates = hypo.rates();
    let coeff: Vec<f64> = (0..n).map(|m| hypo.coefficient(m)).collect();
    let mut row = Vec::with_capacity(n);
    for l in 0..n {
        let mut total = 0.0;
        let mut magnitude = 0.0;
        for m in 0..n {
            if m == l {
                continue;
            }
            let t = coeff[m] * weight_kernel(rates[l] / rates[m]);
            total += t;
            magnitude += t.abs();
        }
        let rounding = magnitude * f64::EPSILON * n as f64;
        if rounding > MAX_CANCELLATION_ERROR * total.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::IllConditioned(format!(
                "interference weight {l}: sum of |terms| {magnitude:e} against result {total:e}"
            )));
        }
        row.push(total);
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE || row.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        return Err(Error::IllConditioned(format!(
            "closed-form interference weights sum to {sum}"
        )));
    }
    Ok(row)
}

// Nodes per unit-width panel of the transform rule.
const TRANSFORM_NODES: usize = 10;
// Truncation of the log-time axis: the neglected tails are below this.
const TRANSFORM_TAIL: f64 = 1e-16;

/// Interference weights of one user from the Laplace-transform integral
/// `a_l = int_0^inf beta_l^2 / (1 + t beta_l^2) * prod_m 1 / (1 + t beta_m^2) dt`.
///
/// The integral is taken over `s = ln t` with composite Gauss–Legendre
/// panels of unit width; the integrand is analytic in a strip of half-width
/// pi around the real axis, so the rule converges geometrically for any
/// antenna count.
pub fn interference_weight_row_transform(beta_sq: &[f64]) -> Result<Vec<f64>> {
    check_weights(beta_sq)?;
    let n = beta_sq.len();
    let max = beta_sq.iter().cloned().fold(0.0, f64::max);
    let min = beta_sq.iter().cloned().fold(f64::INFINITY, f64::min);
    let lo = (TRANSFORM_TAIL / max).ln();
    let hi = (1.0 / (TRANSFORM_TAIL * min)).ln();
    let panels = (hi - lo).ceil() as usize;
    let (x, w) = crate::special::gauss_legendre(TRANSFORM_NODES);
    let width = (hi - lo) / panels as f64;
    let mut row = vec![0.0; n];
    for p in 0..panels {
        let centre = lo + (p as f64 + 0.5) * width;
        for (xi, wi) in x.iter().zip(&w) {
            let s = centre + 0.5 * width * xi;
            let t = s.exp();
            let ln_prod: f64 = beta_sq.iter().map(|b| (t * b).ln_1p()).sum();
            let prod = (-ln_prod).exp();
            let scale = 0.5 * width * wi * prod;
            for (a, b) in row.iter_mut().zip(beta_sq) {
                let tb = t * b;
                *a += scale * tb / (1.0 + tb);
            }
        }
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(Error::NotConverged {
            estimate: sum,
            error: (sum - 1.0).abs(),
        });
    }
    Ok(row)
}

/// Monte Carlo estimate of one user's interference weights from `draws`
/// fading draws: mean and standard error per antenna.
pub fn interference_weight_row_monte_carlo<R: Rng + ?Sized>(
    beta_sq: &[f64],
    draws: usize,
    rng: &mut R,
) -> Result<Vec<SampleMean>> {
    check_weights(beta_sq)?;
    if draws == 0 {
        return Err(Error::EmptyInput("fading draws"));
    }
    let n = beta_sq.len();
    let mut samples = vec![Vec::with_capacity(draws); n];
    let mut power = vec![0.0; n];
    for _ in 0..draws {
        for (p, b) in power.iter_mut().zip(beta_sq) {
            *p = b * sample_cn(rng).norm_sqr();
        }
        let total: f64 = power.iter().sum();
        for (s, p) in samples.iter_mut().zip(&power) {
            s.push(p / total);
        }
    }
    Ok(samples.iter().map(|s| SampleMean::of(s)).collect())
}

/// Interference weights of every user: the closed form for up to
/// [`CLOSED_FORM_MAX_ANTENNAS`] well-conditioned antennas, the transform
/// integral otherwise.
pub fn interference_weights(profile: &LargeScaleProfile) -> Result<InterferenceWeights> {
    let mut a = Vec::with_capacity(profile.num_users());
    let mut method = Vec::with_capacity(profile.num_users());
    for j in 0..profile.num_users() {
        let beta_sq = profile.beta_sq(j);
        let closed = if beta_sq.len() <= CLOSED_FORM_MAX_ANTENNAS {
            interference_weight_row(&beta_sq)
        } else {
            Err(Error::IllConditioned("too many antennas for the closed form".into()))
        };
        match closed {
            Ok(row) => {
                a.push(row);
                method.push(WeightMethod::ClosedForm);
            }
            Err(Error::IllConditioned(_)) => {
                a.push(interference_weight_row_transform(&beta_sq)?);
                method.push(WeightMethod::Transform);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(InterferenceWeights { a, method })
}

/// Noise treatment in the average SINR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SinrModel {
    /// High-SNR form without the noise term.
    InterferenceLimited,
    /// Keeps `K N_0 / (P_t ||gamma_k||^2)` in the denominator.
    WithNoise { snr_budget: f64 },
}

/// Average SINR with co-located antennas, `L / (K - 1)`.
pub fn sinr_mrt_ca(antennas: usize, users: usize) -> Result<f64> {
    if users < 2 {
        return Err(Error::NoInterference);
    }
    if antennas < 1 {
        return Err(Error::InvalidParameter("need at least one antenna".into()));
    }
    Ok(antennas as f64 / (users - 1) as f64)
}

/// Ergodic MRT rate with co-located antennas,
/// `E[log2(1 + X / (K - 1))]` for `X ~ Gamma(L, 1)`.
pub fn rate_mrt_ca(antennas: usize, users: usize, spec: &QuadratureSpec) -> Result<RateEstimate> {
    if users < 2 {
        return Err(Error::NoInterference);
    }
    if antennas < 1 {
        return Err(Error::InvalidParameter("need at least one antenna".into()));
    }
    let scale = 1.0 / (users - 1) as f64;
    let q = gamma_expectation(antennas as f64, 1.0, |x| (x * scale).ln_1p() * LOG2_E, spec)?;
    Ok(RateEstimate::exact(q.value, Method::ClosedForm))
}

/// Average SINR of user `k` with distributed antennas,
/// `1 / sum_{j != k} sum_l a_{j,l} beta_{k,l}^2` (plus the noise term under
/// [`SinrModel::WithNoise`]).
pub fn sinr_mrt_da(
    profile: &LargeScaleProfile,
    weights: &InterferenceWeights,
    k: usize,
    model: SinrModel,
) -> Result<f64> {
    let k_users = profile.num_users();
    if k_users < 2 {
        return Err(Error::NoInterference);
    }
    if k >= k_users || weights.a.len() != k_users {
        return Err(Error::InvalidParameter(format!(
            "user {k} or weight rows ({}) do not match {k_users} users",
            weights.a.len()
        )));
    }
    let beta_sq = profile.beta_sq(k);
    let interference: f64 = (0..k_users)
        .filter(|&j| j != k)
        .map(|j| weights.a[j].iter().zip(&beta_sq).map(|(a, b)| a * b).sum::<f64>())
        .sum();
    let noise = match model {
        SinrModel::InterferenceLimited => 0.0,
        SinrModel::WithNoise { snr_budget } => {
            if !(snr_budget > 0.0) {
                return Err(Error::InvalidParameter("snr budget must be positive".into()));
            }
            k_users as f64 / (snr_budget * profile.gamma_norm_sq[k])
        }
    };
    Ok(1.0 / (interference + noise))
}

/// Average intra-cell interference power at user `k`,
/// `sum_{j != k} sum_l a_{j,l} gamma_{k,l}^2 P` with `P = P_t / K`.
pub fn interference_power_average(
    profile: &LargeScaleProfile,
    weights: &InterferenceWeights,
    k: usize,
    power: f64,
) -> f64 {
    (0..profile.num_users())
        .filter(|&j| j != k)
        .map(|j| {
            weights.a[j]
                .iter()
                .zip(&profile.gamma[k])
                .map(|(a, g)| a * g * g)
                .sum::<f64>()
        })
        .sum::<f64>()
        * power
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidParameter(format!("average SINR must be positive, got {mu}")));
    }
    Ok(())
}

/// Ergodic MRT rate with distributed antennas from the hypoexponential
/// law of `||g~_k||^2`:
/// `log2(e) * sum_l c_l e^{lambda_l / mu} E1(lambda_l / mu)`.
///
/// Returns [`Error::IllConditioned`] when the partial-fraction sum cannot
/// be evaluated accurately; [`rate_mrt_da_transform`] covers that case.
pub fn rate_mrt_da(beta_sq: &[f64], mu: f64) -> Result<RateEstimate> {
    check_weights(beta_sq)?;
    check_mu(mu)?;
    let hypo = Hypoexponential::from_means(beta_sq)?;
    let terms = hypo
        .rates()
        .iter()
        .map(|r| exp_e1(r / mu))
        .collect::<Result<Vec<f64>>>()?;
    let nats = hypo.mix(|l, _| terms[l])?;
    Ok(RateEstimate::exact(nats * LOG2_E, Method::ClosedForm))
}

/// `E[log2(1 + mu ||g~||^2)]` from the Laplace transform of `||g~||^2`:
/// `int_0^inf (1 - prod_l 1 / (1 + mu beta_l^2 s)) e^{-s} / s ds`,
/// integrated over `ln s`. Stable for any weights.
pub fn rate_mrt_da_transform(beta_sq: &[f64], mu: f64, spec: &QuadratureSpec) -> Result<RateEstimate> {
    check_weights(beta_sq)?;
    check_mu(mu)?;
    let integrand = |v: f64| {
        let s = v.exp();
        let ln_prod: f64 = beta_sq.iter().map(|b| (mu * b * s).ln_1p()).sum();
        -(-ln_prod).exp_m1() * (-s).exp()
    };
    let lo = (TRANSFORM_TAIL / mu).ln();
    let mid = (1.0 / mu).ln().clamp(lo, 0.0);
    let hi = 750f64.ln();
    let q = integrate_adaptive(integrand, lo, mid, spec)? + integrate_adaptive(integrand, mid, hi, spec)?;
    Ok(RateEstimate::exact(q.value * LOG2_E, Method::ClosedForm))
}

/// [`rate_mrt_da`], falling back to [`rate_mrt_da_transform`] when the
/// closed form is ill-conditioned.
pub fn rate_mrt_da_auto(beta_sq: &[f64], mu: f64, spec: &QuadratureSpec) -> Result<RateEstimate> {
    match rate_mrt_da(beta_sq, mu) {
        Err(Error::IllConditioned(_)) => rate_mrt_da_transform(beta_sq, mu, spec),
        other => other,
    }
}

/// Upper bound on the average SINR of user `k` with distributed antennas:
/// `1 / m_k` when other users share its nearest antenna, otherwise
/// `(d_user / d_antenna)^alpha`.
pub fn sinr_ub_mrt_da(stats: &NeighborStats, alpha: f64, k: usize) -> f64 {
    match stats.cocluster_count[k] {
        0 => (stats.d_min_user[k] / stats.d_min_antenna[k]).powf(alpha),
        m => 1.0 / m as f64,
    }
}

/// `e^x E1(x)` extended by continuity to `x = inf` (value 0).
fn exp_e1_or_zero(x: f64) -> Result<f64> {
    if x == f64::INFINITY {
        Ok(0.0)
    } else {
        exp_e1(x)
    }
}

/// Rate of the SINR upper bound, `exp_e1(1 / mu_ub) * log2(e)`.
pub fn rate_ub_mrt_da(stats: &NeighborStats, alpha: f64, k: usize) -> Result<f64> {
    let inv_mu = match stats.cocluster_count[k] {
        0 => (stats.d_min_antenna[k] / stats.d_min_user[k]).powf(alpha),
        m => m as f64,
    };
    if inv_mu == 0.0 {
        return Err(Error::Domain("SINR upper bound is infinite".into()));
    }
    Ok(exp_e1_or_zero(inv_mu)? * LOG2_E)
}

/// Upper bound on the DA average user rate, averaged over sampled antenna
/// and user positions.
pub fn avg_rate_ub_mrt_da(
    plan: &SimulationPlan,
    antennas: usize,
    users: usize,
    alpha: f64,
) -> Result<RateEstimate> {
    let report = position_average(
        plan,
        Layout::Da,
        users,
        antennas,
        alpha,
        1.0,
        Method::BoundUpper,
        |scenario, _| {
            let stats = neighbor_stats(scenario);
            let rates = (0..users)
                .map(|k| rate_ub_mrt_da(&stats, alpha, k))
                .collect::<Result<Vec<f64>>>()?;
            let s = SampleMean::of(&rates);
            Ok(ScenarioValue {
                mean: s.mean,
                inner_variance: if s.stderr.is_nan() { 0.0 } else { s.stderr * s.stderr },
                samples: users as u64,
                resampled: 0,
            })
        },
    )?;
    Ok(report.estimate)
}

/// Limiting antenna-to-user ratio and path-loss factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticParams {
    pub upsilon: f64,
    pub alpha: f64,
}

impl AsymptoticParams {
    pub fn new(upsilon: f64, alpha: f64) -> Result<Self> {
        if !(upsilon > 0.0) || !upsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "antenna-to-user ratio must be positive, got {upsilon}"
            )));
        }
        if !(alpha > 2.0) {
            return Err(Error::InvalidParameter(format!(
                "path-loss factor must exceed 2, got {alpha}"
            )));
        }
        Ok(Self { upsilon, alpha })
    }
}

/// Co-located asymptote `log2(1 + upsilon)`.
pub fn asym_rate_mrt_ca(params: &AsymptoticParams) -> f64 {
    params.upsilon.ln_1p() * LOG2_E
}

/// Poisson probability `mean^n e^{-mean} / n!`.
pub fn poisson_pmf(n: u64, mean: f64) -> f64 {
    let n_f = n as f64;
    let ln = if n == 0 { -mean } else { n_f * mean.ln() - mean - statrs::function::gamma::ln_gamma(n_f + 1.0) };
    ln.exp()
}

/// Cumulative Poisson mass at which the series is truncated.
const POISSON_TRUNCATION: f64 = 1.0 - 1e-12;

/// Large-system limit of the DA average-rate upper bound:
/// `log2(e) * [sum_{n>=1} exp_e1(n) P(n) + e^{-1/upsilon} int_0^inf exp_e1(y^{-alpha}) f_Y(y) dy]`
/// with `P` the Poisson(1/upsilon) pmf and `f_Y(y) = 2 upsilon y / (upsilon + y^2)^2`.
pub fn asym_rate_ub_mrt_da(params: &AsymptoticParams, spec: &QuadratureSpec) -> Result<f64> {
    let mean = 1.0 / params.upsilon;
    let alpha = params.alpha;
    let upsilon = params.upsilon;

    let mut series = 0.0;
    let mut cumulative = poisson_pmf(0, mean);
    let mut n = 1u64;
    while cumulative < POISSON_TRUNCATION {
        let p = poisson_pmf(n, mean);
        series += exp_e1(n as f64)? * p;
        cumulative += p;
        n += 1;
        if n > 100_000 {
            break;
        }
    }

    let near = |y: f64| -> f64 {
        let v = exp_e1_or_zero(y.powf(-alpha)).unwrap_or(0.0);
        v * 2.0 * upsilon * y / (upsilon + y * y).powi(2)
    };
    // Beyond y = 10 with u = 1/y: exp_e1(u^alpha) 2 upsilon u / (upsilon u^2 + 1)^2.
    let far = |u: f64| -> f64 {
        let x = u.powf(alpha);
        if x <= 0.0 {
            return 0.0;
        }
        let v = exp_e1(x).unwrap_or(0.0);
        v * 2.0 * upsilon * u / (upsilon * u * u + 1.0).powi(2)
    };
    let integral = integrate_adaptive(near, 0.0, 1.0, spec)?
        + integrate_adaptive(near, 1.0, 10.0, spec)?
        + integrate_adaptive(far, 0.0, 0.1, spec)?;
    Ok((series + (-mean).exp() * integral.value) * LOG2_E)
}

/// The two approximation steps behind the DA SINR upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MrtSinrApprox {
    /// Each interferer's beam concentrated on its nearest antenna:
    /// `1 / sum_{j != k} beta_{k, l_j*}^2`.
    pub nearest_antenna: f64,
    /// Additionally `gamma_{k, l_j*} ~ gamma_{k, j}` and
    /// `||gamma_k||^2 ~ gamma_{k, l_k*}^2`:
    /// `1 / (m_k + sum_{j: l_j* != l_k*} (d_k / d_{k,j})^alpha)`.
    pub user_distance: f64,
}

/// Approximate average SINRs of user `k` in a DA scenario, for comparison
/// with [`sinr_mrt_da`] and [`sinr_ub_mrt_da`].
pub fn sinr_mrt_da_approx(
    scenario: &ScenarioLayout,
    profile: &LargeScaleProfile,
    k: usize,
) -> Result<MrtSinrApprox> {
    if scenario.layout != Layout::Da {
        return Err(Error::LayoutMismatch);
    }
    if k >= scenario.num_users() {
        return Err(Error::InvalidParameter(format!("user index {k} out of range")));
    }
    let stats = neighbor_stats(scenario);
    let own = stats.nearest_antenna_index[k];
    let beta_sq = profile.beta_sq(k);
    let mut first = 0.0;
    let mut second = 0.0;
    for j in (0..scenario.num_users()).filter(|&j| j != k) {
        let lj = stats.nearest_antenna_index[j];
        first += beta_sq[lj];
        second += if lj == own {
            1.0
        } else {
            (stats.d_min_antenna[k] / scenario.users[k].distance(&scenario.users[j])).powf(scenario.alpha)
        };
    }
    Ok(MrtSinrApprox {
        nearest_antenna: 1.0 / first,
        user_distance: 1.0 / second,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::large_scale_profile;
    use crate::geometry::CellPoint;
    use crate::special::integrate_fixed;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn precoder_unit_norm_and_matched() {
        let g = vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)];
        let w = mrt_precoder(&g).unwrap();
        let gw: Complex64 = g.iter().zip(&w).map(|(a, b)| a * b).sum();
        assert!((gw.re - 2f64.sqrt()).abs() < 1e-12 && gw.im.abs() < 1e-12);
        let norm: f64 = w.iter().map(|z| z.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        assert_eq!(mrt_precoder(&[Complex64::new(0.0, 0.0)]), Err(Error::DegenerateChannel));
    }

    #[test]
    fn weight_kernel_series_matches_direct_form() {
        for r in [0.951, 0.97, 1.0 + 1e-9, 1.03, 1.049] {
            let u: f64 = r - 1.0;
            let direct = (u.ln_1p() - 1.0 + 1.0 / r) / u;
            assert!((weight_kernel(r) - direct).abs() < 1e-9, "r={r}");
        }
        assert_eq!(weight_kernel(1.0), 0.0);
    }

    #[test]
    fn two_antenna_weights_match_reduced_form() {
        // a_1 = (r ln r - r + 1) / (r - 1)^2 with r = lambda_1 / lambda_2.
        let b = [0.8, 0.2];
        let row = interference_weight_row(&b).unwrap();
        let r: f64 = (1.0 / 0.8) / (1.0 / 0.2);
        let expect = (r * r.ln() - r + 1.0) / (r - 1.0).powi(2);
        assert!((row[0] - expect).abs() < 1e-12);
        assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn transform_matches_closed_form() {
        let b: Vec<f64> = [0.05, 0.1, 0.15, 0.3, 0.4].to_vec();
        let closed = interference_weight_row(&b).unwrap();
        let transform = interference_weight_row_transform(&b).unwrap();
        for (c, t) in closed.iter().zip(&transform) {
            assert!((c - t).abs() < 1e-10, "{c} vs {t}");
        }
    }

    #[test]
    fn equal_weights_refuse_closed_form() {
        assert!(matches!(interference_weight_row(&[0.5, 0.5]), Err(Error::IllConditioned(_))));
        let t = interference_weight_row_transform(&[0.5, 0.5]).unwrap();
        assert!((t[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ca_sinr_and_errors() {
        assert_eq!(sinr_mrt_ca(100, 50).unwrap(), 100.0 / 49.0);
        assert_eq!(sinr_mrt_ca(2, 2).unwrap(), 2.0);
        assert_eq!(sinr_mrt_ca(100, 1), Err(Error::NoInterference));
    }

    #[test]
    fn single_antenna_rate_is_scaled_e1() {
        let r = rate_mrt_da(&[1.0], 5.0).unwrap().value;
        assert!((r - exp_e1(0.2).unwrap() * LOG2_E).abs() < 1e-14);
        let direct = integrate_fixed(|x| (-x).exp() * (5.0 * x).ln_1p(), 0.0, 60.0, 200) * LOG2_E;
        assert!((r - direct).abs() < 1e-8);
        let t = rate_mrt_da_transform(&[1.0], 5.0, &QuadratureSpec::default()).unwrap().value;
        assert!((r - t).abs() < 1e-8);
    }

    #[test]
    fn upper_bound_branches() {
        let stats = NeighborStats {
            nearest_antenna_index: vec![0, 1],
            d_min_antenna: vec![0.1, 0.2],
            d_min_user: vec![0.2, 0.2],
            cocluster_count: vec![3, 0],
            trimmed_d_min: vec![],
        };
        assert_eq!(sinr_ub_mrt_da(&stats, 4.0, 0), 1.0 / 3.0);
        let s = NeighborStats {
            d_min_antenna: vec![0.1, 0.1],
            ..stats
        };
        assert!((sinr_ub_mrt_da(&s, 4.0, 1) - 16.0).abs() < 1e-12);
    }

    #[test]
    fn asymptotic_ca_values() {
        for (u, r) in [(1.0, 1.0), (3.0, 2.0), (15.0, 4.0)] {
            let p = AsymptoticParams::new(u, 4.0).unwrap();
            assert!((asym_rate_mrt_ca(&p) - r).abs() < 1e-14);
        }
        assert!(AsymptoticParams::new(0.0, 4.0).is_err());
        assert!(AsymptoticParams::new(1.0, 2.0).is_err());
    }

    #[test]
    fn poisson_weight() {
        assert!((poisson_pmf(1, 0.5) - 0.5 * (-0.5f64).exp()).abs() < 1e-15);
        let total: f64 = (0..60).map(|n| poisson_pmf(n, 3.0)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn approximation_chain_on_small_scenario() {
        let scenario = ScenarioLayout::new(
            vec![CellPoint::new(0.5, 0.0).unwrap(), CellPoint::new(0.5, 3.0).unwrap()],
            vec![CellPoint::new(0.45, 0.0).unwrap(), CellPoint::new(0.55, 3.0).unwrap()],
            Layout::Da,
            4.0,
            100.0,
        )
        .unwrap();
        let profile = large_scale_profile(&scenario).unwrap();
        let approx = sinr_mrt_da_approx(&scenario, &profile, 0).unwrap();
        let beta = profile.beta_sq(0);
        assert!((approx.nearest_antenna - 1.0 / beta[1]).abs() < 1e-9);
        assert!(approx.user_distance > 0.0);
    }

    #[test]
    fn monte_carlo_weights_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let est = interference_weight_row_monte_carlo(&[0.7, 0.2, 0.1], 1000, &mut rng).unwrap();
        let total: f64 = est.iter().map(|s| s.mean).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
