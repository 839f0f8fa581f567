//! Layered experiment configuration: experiment defaults, then the config
//! file, then command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use dasrate::montecarlo::MrtEstimator;
use dasrate::{Layout, Scheme, SimulationPlan};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Desk-scale position realization counts (users, antennas).
pub const DESK_SCALE: (usize, usize) = (100, 10);
/// Position realization counts of the published figures (users, antennas).
pub const PAPER_SCALE: (usize, usize) = (500, 50);
/// Fading draws per scenario unless configured otherwise.
pub const DEFAULT_FADING_DRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    /// Per-user MRT rates, CA vs DA, in one scenario.
    Figure2,
    /// Asymptotic MRT rates vs L/K.
    Figure3,
    /// MRT average rate vs L at fixed L/K.
    Figure4,
    /// ZF average rate (CA closed form, DA lower bound) vs L/K.
    Figure6,
    /// ZF average rate vs L at fixed L/K: closed forms, bound and simulations.
    Figure7,
    /// MRT and ZF average rates vs L at fixed K.
    Figure8,
    /// One (layout, scheme, L, K) point.
    Scenario,
    /// Average rates over a grid of layouts, schemes, L and K (or L/K).
    Sweep,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Figure2 => "figure2",
            ExperimentKind::Figure3 => "figure3",
            ExperimentKind::Figure4 => "figure4",
            ExperimentKind::Figure6 => "figure6",
            ExperimentKind::Figure7 => "figure7",
            ExperimentKind::Figure8 => "figure8",
            ExperimentKind::Scenario => "scenario",
            ExperimentKind::Sweep => "sweep",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Analytic route (closed form, bound or quadrature) or simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Evaluation {
    Analytic,
    Simulation,
}

impl fmt::Display for Evaluation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Evaluation::Analytic => "analytic",
            Evaluation::Simulation => "simulation",
        })
    }
}

/// Noise handling of the analytic DA MRT SINR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    InterferenceLimited,
    WithNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridLayer {
    pub antennas: Option<Vec<usize>>,
    pub users: Option<Vec<usize>>,
    pub ratios: Option<Vec<f64>>,
    pub upsilon: Option<Vec<f64>>,
    pub alpha: Option<f64>,
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanLayer {
    pub fading_draws: Option<usize>,
    pub user_realizations: Option<usize>,
    pub antenna_realizations: Option<usize>,
    pub master_seed: Option<u64>,
    pub workers: Option<usize>,
    pub mrt_estimator: Option<MrtEstimator>,
    pub paper_scale: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionLayer {
    pub layouts: Option<Vec<Layout>>,
    pub schemes: Option<Vec<Scheme>>,
    pub method: Option<Evaluation>,
    pub sinr_model: Option<NoiseModel>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputLayer {
    pub dir: Option<PathBuf>,
    pub format: Option<OutputFormat>,
}

/// One configuration source; unset fields defer to the layer below.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigLayer {
    pub experiment: Option<ExperimentKind>,
    pub grid: GridLayer,
    pub plan: PlanLayer,
    pub scenario: SelectionLayer,
    pub output: OutputLayer,
}

impl ConfigLayer {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::ReadConfig {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Field-wise merge with `self` taking precedence. `users` and `ratios`
    /// move together so an override of one replaces a default of the other.
    pub fn over(self, lower: ConfigLayer) -> ConfigLayer {
        let (users, ratios) = if self.grid.users.is_some() || self.grid.ratios.is_some() {
            (self.grid.users, self.grid.ratios)
        } else {
            (lower.grid.users, lower.grid.ratios)
        };
        ConfigLayer {
            experiment: self.experiment.or(lower.experiment),
            grid: GridLayer {
                antennas: self.grid.antennas.or(lower.grid.antennas),
                users,
                ratios,
                upsilon: self.grid.upsilon.or(lower.grid.upsilon),
                alpha: self.grid.alpha.or(lower.grid.alpha),
                snr_db: self.grid.snr_db.or(lower.grid.snr_db),
            },
            plan: PlanLayer {
                fading_draws: self.plan.fading_draws.or(lower.plan.fading_draws),
                user_realizations: self.plan.user_realizations.or(lower.plan.user_realizations),
                antenna_realizations: self.plan.antenna_realizations.or(lower.plan.antenna_realizations),
                master_seed: self.plan.master_seed.or(lower.plan.master_seed),
                workers: self.plan.workers.or(lower.plan.workers),
                mrt_estimator: self.plan.mrt_estimator.or(lower.plan.mrt_estimator),
                paper_scale: self.plan.paper_scale.or(lower.plan.paper_scale),
            },
            scenario: SelectionLayer {
                layouts: self.scenario.layouts.or(lower.scenario.layouts),
                schemes: self.scenario.schemes.or(lower.scenario.schemes),
                method: self.scenario.method.or(lower.scenario.method),
                sinr_model: self.scenario.sinr_model.or(lower.scenario.sinr_model),
            },
            output: OutputLayer {
                dir: self.output.dir.or(lower.output.dir),
                format: self.output.format.or(lower.output.format),
            },
        }
    }
}

/// Parameter grid with the SNR budget in dB.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    pub antennas: Vec<usize>,
    pub users: Vec<usize>,
    pub ratios: Vec<f64>,
    pub upsilon: Vec<f64>,
    pub alpha: f64,
    pub snr_db: f64,
}

impl Grid {
    /// Linear SNR budget `P_t / N_0`.
    pub fn snr(&self) -> f64 {
        db_to_linear(self.snr_db)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    pub layouts: Vec<Layout>,
    pub schemes: Vec<Scheme>,
    pub method: Evaluation,
    pub sinr_model: NoiseModel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Output {
    pub dir: PathBuf,
    pub format: OutputFormat,
}

/// Fully resolved and validated experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub grid: Grid,
    pub plan: SimulationPlan,
    pub selection: Selection,
    pub output: Output,
}

/// Points of constant K or constant L/K, in increasing L.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    /// Curve-id suffix such as `ratio2` or `K50`.
    pub label: String,
    /// (L, K) pairs.
    pub points: Vec<(usize, usize)>,
}

fn grid_defaults(kind: ExperimentKind) -> GridLayer {
    let mut grid = GridLayer {
        alpha: Some(4.0),
        snr_db: Some(20.0),
        ..GridLayer::default()
    };
    match kind {
        ExperimentKind::Figure2 | ExperimentKind::Scenario => {
            grid.antennas = Some(vec![100]);
            grid.users = Some(vec![50]);
        }
        ExperimentKind::Figure3 => {
            grid.upsilon = Some((1..=20).map(f64::from).collect());
        }
        ExperimentKind::Figure4 | ExperimentKind::Figure7 | ExperimentKind::Sweep => {
            grid.antennas = Some(vec![10, 20, 50, 100, 200]);
            grid.ratios = Some(vec![2.0, 5.0]);
        }
        ExperimentKind::Figure6 => {
            grid.antennas = Some(vec![64, 256, 1024]);
            grid.upsilon = Some(vec![2.0, 4.0, 8.0, 16.0, 32.0]);
        }
        ExperimentKind::Figure8 => {
            grid.antennas = Some(vec![50, 100, 200, 300, 400]);
            grid.users = Some(vec![50]);
        }
    }
    grid
}

/// Built-in defaults for an experiment.
pub fn defaults(kind: ExperimentKind) -> ConfigLayer {
    ConfigLayer {
        experiment: Some(kind),
        grid: grid_defaults(kind),
        plan: PlanLayer {
            fading_draws: Some(DEFAULT_FADING_DRAWS),
            master_seed: Some(0),
            workers: Some(0),
            mrt_estimator: Some(MrtEstimator::Instantaneous),
            paper_scale: Some(false),
            ..PlanLayer::default()
        },
        scenario: SelectionLayer {
            layouts: Some(match kind {
                ExperimentKind::Sweep => vec![Layout::Ca, Layout::Da],
                _ => vec![Layout::Ca],
            }),
            schemes: Some(match kind {
                ExperimentKind::Sweep => vec![Scheme::Mrt, Scheme::Zfbf],
                _ => vec![Scheme::Mrt],
            }),
            method: Some(match kind {
                ExperimentKind::Sweep => Evaluation::Simulation,
                _ => Evaluation::Analytic,
            }),
            sinr_model: Some(NoiseModel::InterferenceLimited),
        },
        output: OutputLayer {
            dir: Some(PathBuf::from("results")),
            format: Some(OutputFormat::Csv),
        },
    }
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    /// Resolve the merged layers (highest precedence first) on top of the
    /// experiment defaults and validate the result.
    pub fn resolve(layers: ConfigLayer) -> Result<Self, CliError> {
        let kind = layers
            .experiment
            .ok_or_else(|| config_error("no experiment given"))?;
        let merged = layers.over(defaults(kind));
        let grid = merged.grid;
        let plan = merged.plan;
        let (desk_users, desk_antennas) = if plan.paper_scale.unwrap_or(false) {
            PAPER_SCALE
        } else {
            DESK_SCALE
        };
        let simulation = SimulationPlan {
            fading_draws: plan.fading_draws.unwrap_or(DEFAULT_FADING_DRAWS),
            user_realizations: plan.user_realizations.unwrap_or(desk_users),
            antenna_realizations: plan.antenna_realizations.unwrap_or(desk_antennas),
            master_seed: plan.master_seed.unwrap_or(0),
            workers: plan.workers.unwrap_or(0),
            mrt_estimator: plan.mrt_estimator.unwrap_or(MrtEstimator::Instantaneous),
            ..SimulationPlan::default()
        };
        let config = ExperimentConfig {
            experiment: kind,
            grid: Grid {
                antennas: grid.antennas.unwrap_or_default(),
                users: grid.users.unwrap_or_default(),
                ratios: grid.ratios.unwrap_or_default(),
                upsilon: grid.upsilon.unwrap_or_default(),
                alpha: grid.alpha.unwrap_or(4.0),
                snr_db: grid.snr_db.unwrap_or(20.0),
            },
            plan: simulation,
            selection: Selection {
                layouts: merged.scenario.layouts.unwrap_or_default(),
                schemes: merged.scenario.schemes.unwrap_or_default(),
                method: merged.scenario.method.unwrap_or(Evaluation::Analytic),
                sinr_model: merged.scenario.sinr_model.unwrap_or(NoiseModel::InterferenceLimited),
            },
            output: Output {
                dir: merged.output.dir.unwrap_or_else(|| PathBuf::from("results")),
                format: merged.output.format.unwrap_or(OutputFormat::Csv),
            },
        };
        config.validate()?;
        Ok(config)
    }

    /// (L, K) series from `users` (constant K) or `ratios` (constant L/K).
    pub fn series(&self) -> Result<Vec<Series>, CliError> {
        let grid = &self.grid;
        if !grid.users.is_empty() && !grid.ratios.is_empty() {
            return Err(config_error("give either users (K) or ratios (L/K), not both"));
        }
        if grid.antennas.is_empty() {
            return Err(config_error("the antenna grid (L) is empty"));
        }
        if !grid.users.is_empty() {
            return Ok(grid
                .users
                .iter()
                .map(|&k| Series {
                    label: format!("K{k}"),
                    points: grid.antennas.iter().map(|&l| (l, k)).collect(),
                })
                .collect());
        }
        if grid.ratios.is_empty() {
            return Err(config_error("the grid needs users (K) or ratios (L/K)"));
        }
        grid.ratios
            .iter()
            .map(|&ratio| {
                let points = grid
                    .antennas
                    .iter()
                    .map(|&l| Ok((l, users_for_ratio(l, ratio)?)))
                    .collect::<Result<Vec<_>, CliError>>()?;
                Ok(Series {
                    label: format!("ratio{ratio}"),
                    points,
                })
            })
            .collect()
    }

    /// (L, K) pairs of every series, for validation.
    fn all_points(&self) -> Result<Vec<(usize, usize)>, CliError> {
        Ok(self.series()?.into_iter().flat_map(|s| s.points).collect())
    }

    fn validate(&self) -> Result<(), CliError> {
        let grid = &self.grid;
        if !(grid.alpha > 2.0) || !grid.alpha.is_finite() {
            return Err(config_error(format!("path-loss factor must exceed 2, got {}", grid.alpha)));
        }
        let snr = grid.snr();
        if !snr.is_finite() || !(snr > 0.0) {
            return Err(config_error(format!(
                "snr_db = {} gives no finite positive linear SNR",
                grid.snr_db
            )));
        }
        self.plan
            .validate()
            .map_err(|e| config_error(format!("simulation plan: {e}")))?;
        if grid.antennas.contains(&0) {
            return Err(config_error("L must be at least 1"));
        }
        match self.experiment {
            ExperimentKind::Figure3 => {
                if grid.upsilon.is_empty() {
                    return Err(config_error("the upsilon grid is empty"));
                }
                if let Some(u) = grid.upsilon.iter().find(|u| !(**u > 0.0) || !u.is_finite()) {
                    return Err(CliError::Infeasible(format!("L/K must be positive, got {u}")));
                }
                Ok(())
            }
            ExperimentKind::Figure6 => {
                if grid.upsilon.is_empty() || grid.antennas.is_empty() {
                    return Err(config_error("figure6 needs nonempty antenna and upsilon grids"));
                }
                for &u in &grid.upsilon {
                    if !(u > 1.0) || !u.is_finite() {
                        return Err(CliError::Infeasible(format!("zero-forcing needs L/K > 1, got {u}")));
                    }
                    for &l in &grid.antennas {
                        check_point(l, users_for_ratio(l, u)?, &[Scheme::Zfbf], &[Layout::Ca, Layout::Da], true)?;
                    }
                }
                Ok(())
            }
            kind => {
                let points = self.all_points()?;
                if points.is_empty() {
                    return Err(config_error("the parameter grid is empty"));
                }
                let (schemes, layouts, strict_zf) = match kind {
                    ExperimentKind::Figure2 => {
                        if points.len() != 1 {
                            return Err(config_error("figure2 takes a single L and K"));
                        }
                        (vec![Scheme::Mrt], vec![Layout::Ca, Layout::Da], false)
                    }
                    ExperimentKind::Figure4 => (vec![Scheme::Mrt], vec![Layout::Ca, Layout::Da], false),
                    ExperimentKind::Figure7 => (vec![Scheme::Zfbf], vec![Layout::Ca, Layout::Da], true),
                    ExperimentKind::Figure8 => (
                        vec![Scheme::Mrt, Scheme::Zfbf],
                        vec![Layout::Ca, Layout::Da],
                        false,
                    ),
                    _ => {
                        let sel = &self.selection;
                        if sel.layouts.is_empty() || sel.schemes.is_empty() {
                            return Err(config_error("at least one layout and one scheme are required"));
                        }
                        if kind == ExperimentKind::Scenario
                            && (points.len() != 1 || sel.layouts.len() != 1 || sel.schemes.len() != 1)
                        {
                            return Err(config_error(
                                "scenario takes a single L, K, layout and scheme",
                            ));
                        }
                        // The CA ZF closed form needs L > K.
                        let strict = sel.method == Evaluation::Analytic;
                        (sel.schemes.clone(), sel.layouts.clone(), strict)
                    }
                };
                for (l, k) in points {
                    check_point(l, k, &schemes, &layouts, strict_zf)?;
                }
                Ok(())
            }
        }
    }
}

/// K = L / ratio, which must be a whole number.
pub fn users_for_ratio(antennas: usize, ratio: f64) -> Result<usize, CliError> {
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(CliError::Infeasible(format!("L/K must be positive, got {ratio}")));
    }
    let k = antennas as f64 / ratio;
    let rounded = k.round();
    if (k - rounded).abs() > 1e-9 * k.max(1.0) || rounded < 1.0 {
        return Err(CliError::Infeasible(format!(
            "L = {antennas} with L/K = {ratio} gives a non-integer K = {k}"
        )));
    }
    Ok(rounded as usize)
}

fn check_point(
    antennas: usize,
    users: usize,
    schemes: &[Scheme],
    layouts: &[Layout],
    strict_zf: bool,
) -> Result<(), CliError> {
    if users < 2 {
        return Err(CliError::Infeasible(format!("K must be at least 2, got {users}")));
    }
    if schemes.contains(&Scheme::Zfbf) {
        if antennas < users {
            return Err(CliError::Infeasible(format!(
                "zero-forcing needs L >= K (L = {antennas}, K = {users})"
            )));
        }
        if strict_zf && layouts.contains(&Layout::Ca) && antennas == users {
            return Err(CliError::Infeasible(format!(
                "the CA zero-forcing closed form needs L > K (L = K = {antennas})"
            )));
        }
    }
    Ok(())
}
