//! Curve definitions for each experiment and the runner that evaluates them.

use dasrate::channel::large_scale_profile;
use dasrate::montecarlo::{average_user_rate, ergodic_rates_empirical, nested_scenario};
use dasrate::mrt::{
    asym_rate_mrt_ca, asym_rate_ub_mrt_da, avg_rate_ub_mrt_da, interference_weights, rate_mrt_ca,
    rate_mrt_da_auto, sinr_mrt_da, AsymptoticParams, SinrModel,
};
use dasrate::zfbf::{asym_rate_zfbf_ca, avg_rate_lb_zfbf_da, avg_rate_zfbf_ca};
use dasrate::{Layout, Method, RateEstimate, Scheme};
use serde::{Deserialize, Serialize};

use crate::config::{users_for_ratio, Evaluation, ExperimentConfig, ExperimentKind, NoiseModel};
use crate::error::CliError;

/// Significant digits kept in emitted values.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// Text form of a float at [`SIGNIFICANT_DIGITS`] significant digits.
pub fn format_value(v: f64) -> String {
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, v)
}

/// `v` rounded to the precision it is emitted with.
pub fn round_value(v: f64) -> f64 {
    format_value(v).parse().expect("formatted float parses")
}

/// One output row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub x: f64,
    pub value: f64,
    pub method: Method,
    pub stderr: Option<f64>,
    pub n_samples: u64,
    /// Master seed for sampled values.
    pub seed: Option<u64>,
}

impl Row {
    /// Row for `estimate` at `x`, rounded to the emitted precision.
    pub fn new(x: f64, estimate: RateEstimate, seed: u64) -> Self {
        Row {
            x: round_value(x),
            value: round_value(estimate.value),
            method: estimate.method,
            stderr: estimate.stderr.map(round_value),
            n_samples: estimate.n_samples,
            seed: (estimate.n_samples > 0).then_some(seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub id: String,
    pub rows: Vec<Row>,
}

type Job<'a> = Box<dyn FnOnce(&mut Vec<Row>) -> dasrate::Result<()> + 'a>;

/// A named curve whose rows are computed on demand. A failing job keeps the
/// rows it produced before the failure.
pub struct CurveJob<'a> {
    pub id: String,
    job: Job<'a>,
}

impl<'a> CurveJob<'a> {
    fn new(id: impl Into<String>, job: impl FnOnce(&mut Vec<Row>) -> dasrate::Result<()> + 'a) -> Self {
        CurveJob {
            id: id.into(),
            job: Box::new(job),
        }
    }

    /// Curve over `xs` with one estimate per point.
    fn points<T: Copy + 'a>(
        id: impl Into<String>,
        seed: u64,
        xs: Vec<(f64, T)>,
        eval: impl Fn(T) -> dasrate::Result<RateEstimate> + 'a,
    ) -> Self {
        Self::new(id, move |rows| {
            for (x, arg) in xs {
                rows.push(Row::new(x, eval(arg)?, seed));
            }
            Ok(())
        })
    }
}

/// Outcome of a run: completed or partial curves and the failures.
#[derive(Debug, Default)]
pub struct RunOutcome {
    pub curves: Vec<Curve>,
    pub failures: Vec<CliError>,
}

impl RunOutcome {
    /// 0 success, 3 nothing computed, 4 partial results.
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else if self.curves.iter().any(|c| !c.rows.is_empty()) {
            4
        } else {
            3
        }
    }
}

/// Evaluate every curve of the experiment in order, handing each finished
/// (or partially finished) curve to `sink` before starting the next.
pub fn run(
    config: &ExperimentConfig,
    mut sink: impl FnMut(&Curve) -> Result<(), CliError>,
) -> Result<RunOutcome, CliError> {
    let mut outcome = RunOutcome::default();
    for job in curve_jobs(config)? {
        let mut rows = Vec::new();
        let result = (job.job)(&mut rows);
        let curve = Curve { id: job.id, rows };
        if !curve.rows.is_empty() {
            sink(&curve)?;
        }
        if let Err(source) = result {
            outcome.failures.push(CliError::Numerical {
                curve: curve.id.clone(),
                source,
            });
        }
        outcome.curves.push(curve);
    }
    Ok(outcome)
}

fn single_point(config: &ExperimentConfig) -> Result<(usize, usize), CliError> {
    let series = config.series()?;
    Ok(series[0].points[0])
}

/// Curves of the configured experiment.
pub fn curve_jobs(config: &ExperimentConfig) -> Result<Vec<CurveJob<'_>>, CliError> {
    Ok(match config.experiment {
        ExperimentKind::Figure2 => figure2(config)?,
        ExperimentKind::Figure3 => figure3(config),
        ExperimentKind::Figure4 => figure4(config)?,
        ExperimentKind::Figure6 => figure6(config)?,
        ExperimentKind::Figure7 => figure7(config)?,
        ExperimentKind::Figure8 => figure8(config)?,
        ExperimentKind::Scenario | ExperimentKind::Sweep => selection_curves(config)?,
    })
}

fn simulated(
    config: &ExperimentConfig,
    layout: Layout,
    scheme: Scheme,
) -> impl Fn((usize, usize)) -> dasrate::Result<RateEstimate> + '_ {
    move |(l, k)| {
        average_user_rate(
            &config.plan,
            l,
            k,
            layout,
            scheme,
            config.grid.alpha,
            config.grid.snr(),
        )
    }
}

fn analytic(
    config: &ExperimentConfig,
    layout: Layout,
    scheme: Scheme,
) -> impl Fn((usize, usize)) -> dasrate::Result<RateEstimate> + '_ {
    let (alpha, snr) = (config.grid.alpha, config.grid.snr());
    let spec = config.plan.quadrature;
    move |(l, k)| match (layout, scheme) {
        (Layout::Ca, Scheme::Mrt) => rate_mrt_ca(l, k, &spec),
        (Layout::Ca, Scheme::Zfbf) => avg_rate_zfbf_ca(l, k, snr, alpha),
        (Layout::Da, Scheme::Mrt) => avg_rate_ub_mrt_da(&config.plan, l, k, alpha),
        (Layout::Da, Scheme::Zfbf) => avg_rate_lb_zfbf_da(l, k, snr, alpha, &spec),
    }
}

fn over_l(points: &[(usize, usize)]) -> Vec<(f64, (usize, usize))> {
    points.iter().map(|&p| (p.0 as f64, p)).collect()
}

/// Per-user MRT rates in one sampled scenario: CA and DA, analytic and simulated.
fn figure2(config: &ExperimentConfig) -> Result<Vec<CurveJob<'_>>, CliError> {
    let (l, k) = single_point(config)?;
    let (alpha, snr, seed) = (config.grid.alpha, config.grid.snr(), config.plan.master_seed);
    let plan = &config.plan;
    let users: Vec<(f64, usize)> = (0..k).map(|j| ((j + 1) as f64, j)).collect();
    let model = match config.selection.sinr_model {
        NoiseModel::InterferenceLimited => SinrModel::InterferenceLimited,
        NoiseModel::WithNoise => SinrModel::WithNoise { snr_budget: snr },
    };
    let spec = plan.quadrature;
    let empirical = move |layout: Layout| {
        move |rows: &mut Vec<Row>| {
            let scenario = nested_scenario(plan, layout, k, l, alpha, snr, 0, 0)?;
            let rates = ergodic_rates_empirical(&scenario, Scheme::Mrt, plan)?;
            for (j, r) in rates.per_user.into_iter().enumerate() {
                rows.push(Row::new((j + 1) as f64, r, seed));
            }
            Ok(())
        }
    };
    Ok(vec![
        CurveJob::points("ca_closed", seed, users, move |_| rate_mrt_ca(l, k, &spec)),
        CurveJob::new("da_closed", move |rows| {
            let scenario = nested_scenario(plan, Layout::Da, k, l, alpha, snr, 0, 0)?;
            let profile = large_scale_profile(&scenario)?;
            let weights = interference_weights(&profile)?;
            for j in 0..k {
                let mu = sinr_mrt_da(&profile, &weights, j, model)?;
                let rate = rate_mrt_da_auto(&profile.beta_sq(j), mu, &spec)?;
                rows.push(Row::new((j + 1) as f64, rate, seed));
            }
            Ok(())
        }),
        CurveJob::new("ca_sim", empirical(Layout::Ca)),
        CurveJob::new("da_sim", empirical(Layout::Da)),
    ])
}

/// Large-system MRT rates against L/K.
fn figure3(config: &ExperimentConfig) -> Vec<CurveJob<'_>> {
    let (alpha, seed, spec) = (config.grid.alpha, config.plan.master_seed, config.plan.quadrature);
    let xs: Vec<(f64, f64)> = config.grid.upsilon.iter().map(|&u| (u, u)).collect();
    vec![
        CurveJob::points("ca_asym", seed, xs.clone(), move |u| {
            let params = AsymptoticParams::new(u, alpha)?;
            Ok(RateEstimate::exact(asym_rate_mrt_ca(&params), Method::Asymptotic))
        }),
        CurveJob::points("da_ub_asym", seed, xs, move |u| {
            let params = AsymptoticParams::new(u, alpha)?;
            Ok(RateEstimate::exact(asym_rate_ub_mrt_da(&params, &spec)?, Method::Asymptotic))
        }),
    ]
}

/// MRT average rates against L at fixed L/K (or K), with the CA asymptote.
fn figure4(config: &ExperimentConfig) -> Result<Vec<CurveJob<'_>>, CliError> {
    let (alpha, seed) = (config.grid.alpha, config.plan.master_seed);
    let mut jobs = Vec::new();
    for series in config.series()? {
        let xs = over_l(&series.points);
        jobs.push(CurveJob::points(
            format!("ca_sim_{}", series.label),
            seed,
            xs.clone(),
            simulated(config, Layout::Ca, Scheme::Mrt),
        ));
        jobs.push(CurveJob::points(
            format!("da_sim_{}", series.label),
            seed,
            xs.clone(),
            simulated(config, Layout::Da, Scheme::Mrt),
        ));
        jobs.push(CurveJob::points(
            format!("ca_asym_{}", series.label),
            seed,
            xs,
            move |(l, k)| {
                let params = AsymptoticParams::new(l as f64 / k as f64, alpha)?;
                Ok(RateEstimate::exact(asym_rate_mrt_ca(&params), Method::Asymptotic))
            },
        ));
    }
    Ok(jobs)
}

/// ZF CA closed form and DA lower bound against L/K, one bound curve per L.
fn figure6(config: &ExperimentConfig) -> Result<Vec<CurveJob<'_>>, CliError> {
    let (alpha, snr, seed, spec) = (
        config.grid.alpha,
        config.grid.snr(),
        config.plan.master_seed,
        config.plan.quadrature,
    );
    let upsilon = &config.grid.upsilon;
    let mut jobs = vec![CurveJob::points(
        "ca_closed",
        seed,
        upsilon.iter().map(|&u| (u, u)).collect(),
        move |u| {
            let params = AsymptoticParams::new(u, alpha)?;
            Ok(RateEstimate::exact(asym_rate_zfbf_ca(&params, snr)?, Method::ClosedForm))
        },
    )];
    for &l in &config.grid.antennas {
        let xs = upsilon
            .iter()
            .map(|&u| Ok((u, users_for_ratio(l, u)?)))
            .collect::<Result<Vec<_>, CliError>>()?;
        jobs.push(CurveJob::points(format!("da_lb_L{l}"), seed, xs, move |k| {
            avg_rate_lb_zfbf_da(l, k, snr, alpha, &spec)
        }));
    }
    Ok(jobs)
}

/// ZF average rates against L: CA closed form and simulation, DA bound and simulation.
fn figure7(config: &ExperimentConfig) -> Result<Vec<CurveJob<'_>>, CliError> {
    let seed = config.plan.master_seed;
    let mut jobs = Vec::new();
    for series in config.series()? {
        let xs = over_l(&series.points);
        let label = &series.label;
        jobs.push(CurveJob::points(
            format!("ca_closed_{label}"),
            seed,
            xs.clone(),
            analytic(config, Layout::Ca, Scheme::Zfbf),
        ));
        jobs.push(CurveJob::points(
            format!("ca_sim_{label}"),
            seed,
            xs.clone(),
            simulated(config, Layout::Ca, Scheme::Zfbf),
        ));
        jobs.push(CurveJob::points(
            format!("da_lb_{label}"),
            seed,
            xs.clone(),
            analytic(config, Layout::Da, Scheme::Zfbf),
        ));
        jobs.push(CurveJob::points(
            format!("da_sim_{label}"),
            seed,
            xs,
            simulated(config, Layout::Da, Scheme::Zfbf),
        ));
    }
    Ok(jobs)
}

/// MRT and ZF simulations against L at fixed K.
fn figure8(config: &ExperimentConfig) -> Result<Vec<CurveJob<'_>>, CliError> {
    let seed = config.plan.master_seed;
    let mut jobs = Vec::new();
    for series in config.series()? {
        for scheme in [Scheme::Mrt, Scheme::Zfbf] {
            for layout in [Layout::Ca, Layout::Da] {
                jobs.push(CurveJob::points(
                    format!("{scheme}_{layout}_sim_{}", series.label),
                    seed,
                    over_l(&series.points),
                    simulated(config, layout, scheme),
                ));
            }
        }
    }
    Ok(jobs)
}

/// Scenario and sweep: every selected (scheme, layout) over the grid.
fn selection_curves(config: &ExperimentConfig) -> Result<Vec<CurveJob<'_>>, CliError> {
    let seed = config.plan.master_seed;
    let sel = &config.selection;
    let single = config.experiment == ExperimentKind::Scenario;
    let mut jobs = Vec::new();
    for series in config.series()? {
        for &scheme in &sel.schemes {
            for &layout in &sel.layouts {
                let mut id = format!("{scheme}_{layout}_{}", sel.method);
                if !single {
                    id = format!("{id}_{}", series.label);
                }
                let xs = over_l(&series.points);
                jobs.push(match sel.method {
                    Evaluation::Analytic => CurveJob::points(id, seed, xs, analytic(config, layout, scheme)),
                    Evaluation::Simulation => CurveJob::points(id, seed, xs, simulated(config, layout, scheme)),
                });
            }
        }
    }
    Ok(jobs)
}
