//! Empirical engine: ergodic rates by fading averaging and average user
//! rates by nested position averaging.
//!
//! Every random quantity is drawn from a substream keyed by the master seed
//! and the indices of the realization it belongs to, so results do not
//! depend on scheduling or on the number of worker threads.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{large_scale_profile, sample_fading, LargeScaleProfile};
use crate::error::{Error, Result};
use crate::geometry::{sample_uniform_disk, CellPoint, Layout, ScenarioLayout};
use crate::mrt::{interference_weights, mrt_received_powers, sinr_mrt_da, SinrModel};
use crate::special::QuadratureSpec;
use crate::zfbf::zf_effective_gains;

/// How a rate value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    BoundUpper,
    BoundLower,
    MonteCarlo,
    Asymptotic,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::ClosedForm => "closed_form",
            Method::BoundUpper => "bound_upper",
            Method::BoundLower => "bound_lower",
            Method::MonteCarlo => "monte_carlo",
            Method::Asymptotic => "asymptotic",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [
            Method::ClosedForm,
            Method::BoundUpper,
            Method::BoundLower,
            Method::MonteCarlo,
            Method::Asymptotic,
        ]
        .into_iter()
        .find(|m| m.as_str() == s)
        .ok_or_else(|| Error::InvalidParameter(format!("unknown method tag {s:?}")))
    }
}

/// A rate in bits/s/Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub value: f64,
    pub method: Method,
    /// Standard error, present for sampled estimates.
    pub stderr: Option<f64>,
    /// Number of samples behind a sampled estimate; 0 for deterministic ones.
    pub n_samples: u64,
}

impl RateEstimate {
    pub fn exact(value: f64, method: Method) -> Self {
        Self {
            value,
            method,
            stderr: None,
            n_samples: 0,
        }
    }

    pub fn sampled(value: f64, method: Method, stderr: f64, n_samples: u64) -> Self {
        Self {
            value,
            method,
            stderr: Some(stderr),
            n_samples,
        }
    }

    /// `value ± z * stderr`, for sampled estimates.
    pub fn confidence_interval(&self, z: f64) -> Option<(f64, f64)> {
        self.stderr.map(|s| (self.value - z * s, self.value + z * s))
    }
}

/// Precoding scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Mrt,
    Zfbf,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Mrt => "mrt",
            Scheme::Zfbf => "zfbf",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mrt" => Ok(Scheme::Mrt),
            "zfbf" | "zf" => Ok(Scheme::Zfbf),
            _ => Err(Error::InvalidParameter(format!("unknown scheme {s:?}"))),
        }
    }
}

/// SINR used by the empirical MRT estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MrtEstimator {
    /// Per-draw interference from the other users' precoders.
    Instantaneous,
    /// Fading-averaged interference with noise: `log2(1 + mu_k ||g~_k||^2)`.
    AveragedWithNoise,
    /// As `AveragedWithNoise` without the noise term.
    AveragedInterferenceLimited,
}

/// Realization counts, seed and numerical settings of an empirical run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationPlan {
    pub fading_draws: usize,
    pub user_realizations: usize,
    pub antenna_realizations: usize,
    pub master_seed: u64,
    pub quadrature: QuadratureSpec,
    pub mrt_estimator: MrtEstimator,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
}

impl Default for SimulationPlan {
    fn default() -> Self {
        Self {
            fading_draws: 2000,
            user_realizations: 500,
            antenna_realizations: 50,
            master_seed: 0,
            quadrature: QuadratureSpec::default(),
            mrt_estimator: MrtEstimator::Instantaneous,
            workers: 0,
        }
    }
}

impl SimulationPlan {
    pub fn validate(&self) -> Result<()> {
        if self.fading_draws < 1 || self.user_realizations < 1 || self.antenna_realizations < 1 {
            return Err(Error::InvalidParameter(
                "realization counts must be at least 1".into(),
            ));
        }
        self.quadrature.validate()
    }
}

// Stream domains keep the position, fading and auxiliary streams apart.
const DOMAIN_ANTENNAS: u64 = 1;
const DOMAIN_USERS: u64 = 2;
const DOMAIN_FADING: u64 = 3;

/// Resampling attempts for a rank-deficient zero-forcing draw.
const MAX_RESAMPLES: usize = 100;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent random stream for the realization at `path` under `master_seed`.
pub fn substream(master_seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut state = splitmix64(master_seed);
    for &p in path {
        state = splitmix64(state ^ splitmix64(p));
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Run `job` on a pool with `workers` threads (0: the global pool).
pub fn with_workers<T: Send, F: FnOnce() -> T + Send>(workers: usize, job: F) -> Result<T> {
    if workers == 0 {
        return Ok(job());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(job))
}

/// Mean and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleMean {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
}

impl SampleMean {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            f64::NAN
        };
        Self {
            mean,
            stderr,
            n: n as u64,
        }
    }
}

/// Per-user ergodic rates of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalRates {
    pub per_user: Vec<RateEstimate>,
    /// Rank-deficient zero-forcing draws that were redrawn.
    pub resampled_draws: usize,
}

// Rates of every user over the fading draws of one scenario, draw-major.
struct DrawRates {
    rates: Vec<Vec<f64>>,
    resampled: usize,
}

fn per_user_sinr_scale(
    scenario: &ScenarioLayout,
    profile: &LargeScaleProfile,
    estimator: MrtEstimator,
) -> Result<Option<Vec<f64>>> {
    let model = match estimator {
        MrtEstimator::Instantaneous => return Ok(None),
        MrtEstimator::AveragedWithNoise => SinrModel::WithNoise {
            snr_budget: scenario.snr_budget,
        },
        MrtEstimator::AveragedInterferenceLimited => SinrModel::InterferenceLimited,
    };
    let weights = interference_weights(profile)?;
    (0..profile.num_users())
        .map(|k| sinr_mrt_da(profile, &weights, k, model))
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

fn draw_rates(
    scenario: &ScenarioLayout,
    scheme: Scheme,
    plan: &SimulationPlan,
    key: &[u64],
) -> Result<DrawRates> {
    let profile = large_scale_profile(scenario)?;
    let k_users = scenario.num_users();
    let l_antennas = scenario.num_antennas();
    if scheme == Scheme::Zfbf && l_antennas < k_users {
        return Err(Error::Infeasible(format!(
            "zero-forcing needs L >= K (L = {l_antennas}, K = {k_users})"
        )));
    }
    let power = scenario.snr_budget / k_users as f64;
    let mu = match scheme {
        Scheme::Mrt => per_user_sinr_scale(scenario, &profile, plan.mrt_estimator)?,
        Scheme::Zfbf => None,
    };

    let one_draw = |d: usize| -> Result<(Vec<f64>, usize)> {
        let mut path = Vec::with_capacity(key.len() + 2);
        path.push(DOMAIN_FADING);
        path.extend_from_slice(key);
        path.push(d as u64);
        let mut rng = substream(plan.master_seed, &path);
        let mut resampled = 0;
        loop {
            let fading = sample_fading(k_users, l_antennas, &mut rng)?;
            let rates = match scheme {
                Scheme::Mrt => match &mu {
                    None => mrt_received_powers(&fading.channel(&profile), power)?
                        .into_iter()
                        .map(|p| (p.signal / (1.0 + p.interference)).ln_1p() * crate::special::LOG2_E)
                        .collect(),
                    Some(mu) => {
                        let g = fading.normalized_channel(&profile);
                        (0..k_users)
                            .map(|k| (mu[k] * row_norm_sq(&g, k)).ln_1p() * crate::special::LOG2_E)
                            .collect()
                    }
                },
                Scheme::Zfbf => match zf_effective_gains(&fading.normalized_channel(&profile)) {
                    Ok(gains) => gains
                        .iter()
                        .enumerate()
                        .map(|(k, e)| {
                            (power * profile.gamma_norm_sq[k] * e).ln_1p() * crate::special::LOG2_E
                        })
                        .collect(),
                    Err(Error::SingularChannel { condition }) => {
                        resampled += 1;
                        if resampled > MAX_RESAMPLES {
                            return Err(Error::SingularChannel { condition });
                        }
                        continue;
                    }
                    Err(e) => return Err(e),
                },
            };
            return Ok((rates, resampled));
        }
    };

    let draws: Vec<(Vec<f64>, usize)> = (0..plan.fading_draws)
        .into_par_iter()
        .map(one_draw)
        .collect::<Result<_>>()?;
    let resampled = draws.iter().map(|d| d.1).sum();
    Ok(DrawRates {
        rates: draws.into_iter().map(|d| d.0).collect(),
        resampled,
    })
}

fn row_norm_sq(m: &DMatrix<Complex64>, k: usize) -> f64 {
    m.row(k).iter().map(|z| z.norm_sqr()).sum()
}

/// Ergodic rates of all users of `scenario`, each averaged over
/// `plan.fading_draws` fading draws.
pub fn ergodic_rates_empirical(
    scenario: &ScenarioLayout,
    scheme: Scheme,
    plan: &SimulationPlan,
) -> Result<EmpiricalRates> {
    plan.validate()?;
    let draws = with_workers(plan.workers, || draw_rates(scenario, scheme, plan, &[0, 0]))??;
    let per_user = (0..scenario.num_users())
        .map(|k| {
            let column: Vec<f64> = draws.rates.iter().map(|r| r[k]).collect();
            let s = SampleMean::of(&column);
            RateEstimate::sampled(s.mean, Method::MonteCarlo, s.stderr, s.n)
        })
        .collect();
    Ok(EmpiricalRates {
        per_user,
        resampled_draws: draws.resampled,
    })
}

/// Ergodic rate of user `k` averaged over fading.
pub fn ergodic_rate_empirical(
    scenario: &ScenarioLayout,
    scheme: Scheme,
    k: usize,
    plan: &SimulationPlan,
) -> Result<RateEstimate> {
    if k >= scenario.num_users() {
        return Err(Error::InvalidParameter(format!(
            "user index {k} out of range for {} users",
            scenario.num_users()
        )));
    }
    Ok(ergodic_rates_empirical(scenario, scheme, plan)?.per_user[k])
}

/// Empirical intra-cell interference power `sum_{j != k} P |g_k w_j|^2` at
/// user `k` under MRT, over `plan.fading_draws` draws.
pub fn mrt_interference_empirical(
    scenario: &ScenarioLayout,
    k: usize,
    plan: &SimulationPlan,
) -> Result<SampleMean> {
    plan.validate()?;
    if k >= scenario.num_users() {
        return Err(Error::InvalidParameter(format!("user index {k} out of range")));
    }
    let profile = large_scale_profile(scenario)?;
    let power = scenario.snr_budget / scenario.num_users() as f64;
    let values = with_workers(plan.workers, || {
        (0..plan.fading_draws)
            .into_par_iter()
            .map(|d| {
                let mut rng = substream(plan.master_seed, &[DOMAIN_FADING, 0, 0, d as u64]);
                let fading = sample_fading(scenario.num_users(), scenario.num_antennas(), &mut rng)?;
                Ok(mrt_received_powers(&fading.channel(&profile), power)?[k].interference)
            })
            .collect::<Result<Vec<f64>>>()
    })??;
    Ok(SampleMean::of(&values))
}

/// Summary of one scenario inside a position average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioValue {
    /// Mean over the scenario's users (and fading draws).
    pub mean: f64,
    /// Squared standard error of `mean` from its inner samples.
    pub inner_variance: f64,
    pub samples: u64,
    pub resampled: usize,
}

/// Position-averaged estimate with run diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct AverageReport {
    pub estimate: RateEstimate,
    pub resampled_draws: usize,
    pub scenarios: usize,
}

/// Realization counts actually used for a layout: CA antennas never move.
pub fn realization_counts(plan: &SimulationPlan, layout: Layout) -> (usize, usize) {
    match layout {
        Layout::Ca => (1, plan.user_realizations),
        Layout::Da => (plan.antenna_realizations, plan.user_realizations),
    }
}

/// Sample scenario `(a, u)` of a nested average: antennas from stream `a`,
/// users from stream `(a, u)`.
pub fn nested_scenario(
    plan: &SimulationPlan,
    layout: Layout,
    users: usize,
    antennas: usize,
    alpha: f64,
    snr_budget: f64,
    a: usize,
    u: usize,
) -> Result<ScenarioLayout> {
    let antenna_pts = match layout {
        Layout::Ca => vec![CellPoint::ORIGIN; antennas],
        Layout::Da => {
            let mut rng = substream(plan.master_seed, &[DOMAIN_ANTENNAS, a as u64]);
            sample_uniform_disk(antennas, &mut rng)?
        }
    };
    let mut rng = substream(plan.master_seed, &[DOMAIN_USERS, a as u64, u as u64]);
    ScenarioLayout::sample_users(layout, antenna_pts, users, alpha, snr_budget, &mut rng)
}

/// Average of `per_scenario` over nested antenna and user realizations.
///
/// The standard error comes from the outermost level with at least two
/// realizations, or from the inner samples of a single scenario.
#[allow(clippy::too_many_arguments)]
pub fn position_average<F>(
    plan: &SimulationPlan,
    layout: Layout,
    users: usize,
    antennas: usize,
    alpha: f64,
    snr_budget: f64,
    method: Method,
    per_scenario: F,
) -> Result<AverageReport>
where
    F: Fn(&ScenarioLayout, &[u64]) -> Result<ScenarioValue> + Sync,
{
    plan.validate()?;
    let (n_ant, n_user) = realization_counts(plan, layout);
    let values = with_workers(plan.workers, || {
        (0..n_ant * n_user)
            .into_par_iter()
            .map(|i| {
                let (a, u) = (i / n_user, i % n_user);
                let scenario = nested_scenario(plan, layout, users, antennas, alpha, snr_budget, a, u)?;
                per_scenario(&scenario, &[a as u64, u as u64])
            })
            .collect::<Result<Vec<ScenarioValue>>>()
    })??;

    let samples = values.iter().map(|v| v.samples).sum();
    let resampled = values.iter().map(|v| v.resampled).sum();
    let outer: Vec<f64> = values
        .chunks(n_user)
        .map(|c| c.iter().map(|v| v.mean).sum::<f64>() / n_user as f64)
        .collect();
    let (value, stderr) = if n_ant >= 2 {
        let s = SampleMean::of(&outer);
        (s.mean, s.stderr)
    } else if n_user >= 2 {
        let means: Vec<f64> = values.iter().map(|v| v.mean).collect();
        let s = SampleMean::of(&means);
        (s.mean, s.stderr)
    } else {
        (values[0].mean, values[0].inner_variance.sqrt())
    };
    Ok(AverageReport {
        estimate: RateEstimate::sampled(value, method, stderr, samples),
        resampled_draws: resampled,
        scenarios: values.len(),
    })
}

/// Average user rate: fading inside, user positions, then (DA only)
/// antenna positions.
pub fn average_user_rate(
    plan: &SimulationPlan,
    antennas: usize,
    users: usize,
    layout: Layout,
    scheme: Scheme,
    alpha: f64,
    snr_budget: f64,
) -> Result<RateEstimate> {
    Ok(average_user_rate_report(plan, antennas, users, layout, scheme, alpha, snr_budget)?.estimate)
}

/// [`average_user_rate`] with the resampling count.
pub fn average_user_rate_report(
    plan: &SimulationPlan,
    antennas: usize,
    users: usize,
    layout: Layout,
    scheme: Scheme,
    alpha: f64,
    snr_budget: f64,
) -> Result<AverageReport> {
    position_average(
        plan,
        layout,
        users,
        antennas,
        alpha,
        snr_budget,
        Method::MonteCarlo,
        |scenario, key| {
            let draws = draw_rates(scenario, scheme, plan, key)?;
            // Per-draw user averages are independent across draws.
            let draw_means: Vec<f64> = draws
                .rates
                .iter()
                .map(|r| r.iter().sum::<f64>() / r.len() as f64)
                .collect();
            let s = SampleMean::of(&draw_means);
            Ok(ScenarioValue {
                mean: s.mean,
                inner_variance: if s.stderr.is_nan() { 0.0 } else { s.stderr * s.stderr },
                samples: (draws.rates.len() * users) as u64,
                resampled: draws.resampled,
            })
        },
    )
}
