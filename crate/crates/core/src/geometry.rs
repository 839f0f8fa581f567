//! Unit-disk scenarios and access-distance laws.
//!
//! Positions are polar `(rho, theta)` in cell radii. The distance laws are
//! those of the distance from a fixed point at radius `y` to a point drawn
//! uniformly over the unit disk, and of the minimum over `n` such points.

use std::f64::consts::{FRAC_1_PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum user–antenna separation enforced when sampling, in cell radii.
pub const MIN_SEPARATION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellPoint {
    pub rho: f64,
    pub theta: f64,
}

impl CellPoint {
    pub const ORIGIN: CellPoint = CellPoint { rho: 0.0, theta: 0.0 };

    pub fn new(rho: f64, theta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) || !theta.is_finite() {
            return Err(Error::Domain(format!(
                "cell point needs 0 <= rho <= 1, got rho={rho}, theta={theta}"
            )));
        }
        Ok(Self {
            rho,
            theta: theta.rem_euclid(TAU),
        })
    }

    pub fn cartesian(&self) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        (self.rho * c, self.rho * s)
    }

    pub fn distance(&self, other: &CellPoint) -> f64 {
        let (x1, y1) = self.cartesian();
        let (x2, y2) = other.cartesian();
        (x1 - x2).hypot(y1 - y2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// All antennas at the cell center.
    Ca,
    /// Antennas uniform over the cell.
    Da,
}

impl std::fmt::Display for Layout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Layout::Ca => "ca",
            Layout::Da => "da",
        })
    }
}

impl std::str::FromStr for Layout {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ca" => Ok(Layout::Ca),
            "da" => Ok(Layout::Da),
            _ => Err(Error::InvalidParameter(format!("unknown layout '{s}'"))),
        }
    }
}

/// One placement of users and antennas plus the propagation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioLayout {
    pub users: Vec<CellPoint>,
    pub antennas: Vec<CellPoint>,
    pub layout: Layout,
    pub alpha: f64,
    /// `P_t / N_0`, linear.
    pub snr_budget: f64,
}

impl ScenarioLayout {
    pub fn new(
        users: Vec<CellPoint>,
        antennas: Vec<CellPoint>,
        layout: Layout,
        alpha: f64,
        snr_budget: f64,
    ) -> Result<Self> {
        if users.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 users, got {}",
                users.len()
            )));
        }
        if antennas.is_empty() {
            return Err(Error::EmptyInput("antennas"));
        }
        if !(alpha > 2.0) {
            return Err(Error::InvalidParameter(format!(
                "path-loss factor must exceed 2, got {alpha}"
            )));
        }
        if !(snr_budget > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "snr budget must be positive, got {snr_budget}"
            )));
        }
        if layout == Layout::Ca && antennas.iter().any(|a| a.rho != 0.0) {
            return Err(Error::InvalidParameter(
                "co-located layout requires every antenna at the origin".into(),
            ));
        }
        Ok(Self {
            users,
            antennas,
            layout,
            alpha,
            snr_budget,
        })
    }

    /// Draw a scenario: users uniform in the disk, antennas at the origin (CA)
    /// or uniform in the disk (DA). Any point closer than [`MIN_SEPARATION`]
    /// to an existing counterpart is redrawn (antennas for DA, users for CA).
    pub fn sample<R: Rng + ?Sized>(
        layout: Layout,
        users: usize,
        antennas: usize,
        alpha: f64,
        snr_budget: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if users == 0 {
            return Err(Error::EmptyInput("users"));
        }
        if antennas == 0 {
            return Err(Error::EmptyInput("antennas"));
        }
        let (user_pts, antenna_pts) = match layout {
            Layout::Ca => {
                let pts = (0..users)
                    .map(|_| loop {
                        let p = sample_point(rng);
                        if p.rho >= MIN_SEPARATION {
                            break p;
                        }
                    })
                    .collect();
                (pts, vec![CellPoint::ORIGIN; antennas])
            }
            Layout::Da => {
                let user_pts: Vec<CellPoint> = (0..users).map(|_| sample_point(rng)).collect();
                let antenna_pts = (0..antennas)
                    .map(|_| loop {
                        let p = sample_point(rng);
                        if user_pts.iter().all(|u| u.distance(&p) >= MIN_SEPARATION) {
                            break p;
                        }
                    })
                    .collect();
                (user_pts, antenna_pts)
            }
        };
        Self::new(user_pts, antenna_pts, layout, alpha, snr_budget)
    }

    /// Draw users around a fixed antenna placement. A user closer than
    /// [`MIN_SEPARATION`] to any antenna is redrawn, so the antennas can be
    /// shared across user realizations.
    pub fn sample_users<R: Rng + ?Sized>(
        layout: Layout,
        antennas: Vec<CellPoint>,
        users: usize,
        alpha: f64,
        snr_budget: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if users == 0 {
            return Err(Error::EmptyInput("users"));
        }
        let user_pts = (0..users)
            .map(|_| loop {
                let p = sample_point(rng);
                if antennas.iter().all(|a| a.distance(&p) >= MIN_SEPARATION) {
                    break p;
                }
            })
            .collect();
        Self::new(user_pts, antennas, layout, alpha, snr_budget)
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_antennas(&self) -> usize {
        self.antennas.len()
    }

    /// Distance from user `k` to antenna `l`.
    pub fn access_distance(&self, k: usize, l: usize) -> f64 {
        match self.layout {
            Layout::Ca => self.users[k].rho,
            Layout::Da => self.users[k].distance(&self.antennas[l]),
        }
    }
}

fn sample_point<R: Rng + ?Sized>(rng: &mut R) -> CellPoint {
    let u: f64 = rng.random();
    let v: f64 = rng.random();
    CellPoint {
        rho: u.sqrt(),
        theta: TAU * v,
    }
}

/// `n` points i.i.d. uniform over the unit disk.
pub fn sample_uniform_disk<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<CellPoint>> {
    if n == 0 {
        return Err(Error::EmptyInput("sample count"));
    }
    Ok((0..n).map(|_| sample_point(rng)).collect())
}

fn check_distance_domain(x: f64, y: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&y) {
        return Err(Error::Domain(format!("user radius must be in [0, 1], got {y}")));
    }
    if !(x >= 0.0 && x <= 1.0 + y) {
        return Err(Error::Domain(format!(
            "distance must be in [0, 1 + y] = [0, {}], got {x}",
            1.0 + y
        )));
    }
    Ok(())
}

// Four times the area of the triangle with sides x, y and 1, in the
// factored Heron form that stays exact when the triangle degenerates.
fn quad_triangle_area(x: f64, y: f64) -> f64 {
    let sq = (x + y + 1.0) * (1.0 + y - x) * (1.0 + x - y) * (x + y - 1.0);
    sq.max(0.0).sqrt()
}

// Angle at the user between the centre direction and the intersection
// point, and the angle at the centre; atan2 keeps both accurate near 0 and pi.
fn intersection_angles(x: f64, y: f64) -> (f64, f64) {
    let four_area = quad_triangle_area(x, y);
    let at_user = four_area.atan2(x * x + y * y - 1.0);
    let at_centre = four_area.atan2(1.0 + y * y - x * x);
    (at_user, at_centre)
}

// Unchecked F(x; y) for x in [0, 1 + y].
fn cdf_unchecked(x: f64, y: f64) -> f64 {
    if x <= 1.0 - y {
        return x * x;
    }
    let (at_user, at_centre) = intersection_angles(x, y);
    let value = FRAC_1_PI * (x * x * at_user + at_centre - 0.5 * quad_triangle_area(x, y));
    value.clamp(0.0, 1.0)
}

fn pdf_unchecked(x: f64, y: f64) -> f64 {
    if x <= 1.0 - y {
        return 2.0 * x;
    }
    2.0 * x * FRAC_1_PI * intersection_angles(x, y).0
}

/// CDF of the distance from a point at radius `y` to a uniform point in the
/// unit disk: the fraction of the disk covered by a circle of radius `x`.
pub fn access_distance_cdf(x: f64, y: f64) -> Result<f64> {
    check_distance_domain(x, y)?;
    Ok(cdf_unchecked(x, y))
}

/// Density matching [`access_distance_cdf`].
pub fn access_distance_pdf(x: f64, y: f64) -> Result<f64> {
    check_distance_domain(x, y)?;
    Ok(pdf_unchecked(x, y))
}

/// Inverse of [`access_distance_cdf`] in `x`, for `p` in `[0, 1]`.
pub fn access_distance_quantile(p: f64, y: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("probability must be in [0, 1], got {p}")));
    }
    check_distance_domain(0.0, y)?;
    Ok(quantile_unchecked(p, y))
}

pub(crate) fn quantile_unchecked(p: f64, y: f64) -> f64 {
    let inner = 1.0 - y;
    if p <= inner * inner {
        return p.sqrt();
    }
    if p >= 1.0 {
        return 1.0 + y;
    }
    // Safeguarded Newton on the outer branch, where F is increasing.
    let (mut lo, mut hi) = (inner, 1.0 + y);
    let mut x = 0.5 * (lo + hi);
    for _ in 0..100 {
        let fx = cdf_unchecked(x, y) - p;
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let slope = pdf_unchecked(x, y);
        let mut next = if slope > 0.0 { x - fx / slope } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * (1.0 + x) || hi - lo <= 1e-15 {
            return next;
        }
        x = next;
    }
    x
}

/// Density of the minimum of `n` i.i.d. access distances:
/// `n (1 - F)^{n-1} f`.
pub fn min_access_distance_pdf(x: f64, y: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("antenna count must be at least 1".into()));
    }
    check_distance_domain(x, y)?;
    Ok(min_pdf_unchecked(x, y, n))
}

pub(crate) fn min_pdf_unchecked(x: f64, y: f64, n: usize) -> f64 {
    let f = pdf_unchecked(x, y);
    if n == 1 {
        return f;
    }
    let survival = 1.0 - cdf_unchecked(x, y);
    if survival <= 0.0 {
        return 0.0;
    }
    n as f64 * ((n - 1) as f64 * survival.ln()).exp() * f
}

/// Per-user nearest-neighbour quantities in a distributed layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborStats {
    /// Index of each user's nearest antenna.
    pub nearest_antenna_index: Vec<usize>,
    /// Distance to that antenna.
    pub d_min_antenna: Vec<f64>,
    /// Distance to the nearest other user.
    pub d_min_user: Vec<f64>,
    /// Number of other users sharing the user's nearest antenna.
    pub cocluster_count: Vec<usize>,
    /// Minimum distance over antennas not claimed as nearest by any other user.
    pub trimmed_d_min: Vec<f64>,
}

/// Nearest-antenna statistics for every user of a DA scenario.
///
/// Exact ties go to the lowest antenna index.
pub fn nearest_antenna_stats(scenario: &ScenarioLayout) -> Result<NeighborStats> {
    if scenario.layout != Layout::Da {
        return Err(Error::LayoutMismatch);
    }
    let k_users = scenario.num_users();
    let l_antennas = scenario.num_antennas();
    if l_antennas < k_users {
        return Err(Error::Infeasible(format!(
            "trimmed antenna set is empty: L = {l_antennas} < K = {k_users}"
        )));
    }
    let mut stats = neighbor_stats(scenario);
    let users: Vec<(f64, f64)> = scenario.users.iter().map(CellPoint::cartesian).collect();
    let antennas: Vec<(f64, f64)> = scenario.antennas.iter().map(CellPoint::cartesian).collect();

    let mut claims = vec![0usize; l_antennas];
    for &l in &stats.nearest_antenna_index {
        claims[l] += 1;
    }
    stats.trimmed_d_min = (0..k_users)
        .map(|k| {
            let own = stats.nearest_antenna_index[k];
            let (ux, uy) = users[k];
            antennas
                .iter()
                .enumerate()
                .filter(|&(l, _)| {
                    // claimed by someone other than k?
                    let others = claims[l] - usize::from(l == own);
                    others == 0
                })
                // Same arithmetic as `d_min_antenna`, so a shared minimum compares equal.
                .map(|(_, &(ax, ay))| ((ux - ax) * (ux - ax) + (uy - ay) * (uy - ay)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    Ok(stats)
}

/// Nearest antenna, nearest user and co-cluster counts, without the trimmed
/// distance (which needs `L >= K`). `trimmed_d_min` is left empty.
pub(crate) fn neighbor_stats(scenario: &ScenarioLayout) -> NeighborStats {
    let users: Vec<(f64, f64)> = scenario.users.iter().map(CellPoint::cartesian).collect();
    let antennas: Vec<(f64, f64)> = scenario.antennas.iter().map(CellPoint::cartesian).collect();
    let k_users = users.len();

    let mut nearest = Vec::with_capacity(k_users);
    let mut d_ant = Vec::with_capacity(k_users);
    for &(ux, uy) in &users {
        let mut best = (0usize, f64::INFINITY);
        for (l, &(ax, ay)) in antennas.iter().enumerate() {
            let d2 = (ux - ax) * (ux - ax) + (uy - ay) * (uy - ay);
            if d2 < best.1 {
                best = (l, d2);
            }
        }
        nearest.push(best.0);
        d_ant.push(best.1.sqrt());
    }

    let d_user = (0..k_users)
        .map(|k| {
            let (ux, uy) = users[k];
            users
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, &(vx, vy))| (ux - vx) * (ux - vx) + (uy - vy) * (uy - vy))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect();

    let mut claims = vec![0usize; antennas.len()];
    for &l in &nearest {
        claims[l] += 1;
    }
    let cocluster = nearest.iter().map(|&l| claims[l] - 1).collect();

    NeighborStats {
        nearest_antenna_index: nearest,
        d_min_antenna: d_ant,
        d_min_user: d_user,
        cocluster_count: cocluster,
        trimmed_d_min: Vec::new(),
    }
}
