//! Geometry: disk sampling, the access-distance laws and nearest-neighbour
//! statistics against simulation and exhaustive oracles.

mod common;

use std::f64::consts::PI;

use common::{ks_critical_1pct, ks_statistic, mean_stderr};
use dasrate::geometry::{
    access_distance_cdf, access_distance_pdf, min_access_distance_pdf, nearest_antenna_stats, sample_uniform_disk,
};
use dasrate::montecarlo::substream;
use dasrate::special::integrate_adaptive;
use dasrate::{CellPoint, Layout, QuadratureSpec, ScenarioLayout};
use proptest::prelude::*;
use rayon::prelude::*;

#[test]
fn disk_radius_law() {
    let mut rng = substream(101, &[0]);
    let points = sample_uniform_disk(100_000, &mut rng).unwrap();
    let rho_sq: Vec<f64> = points.iter().map(|p| p.rho * p.rho).collect();
    let (mean, se) = mean_stderr(&rho_sq);
    assert!((mean - 0.5).abs() < 3.0 * se, "mean rho^2 {mean} ± {se}");
    let rho: Vec<f64> = points.iter().map(|p| p.rho).collect();
    let d = ks_statistic(&rho, |r| r * r);
    assert!(d < ks_critical_1pct(rho.len()), "KS {d}");
    assert!(points.iter().all(|p| (0.0..2.0 * PI).contains(&p.theta)));
}

#[test]
fn disk_sampling_is_deterministic() {
    let a = sample_uniform_disk(1, &mut substream(5, &[1, 2])).unwrap();
    let b = sample_uniform_disk(1, &mut substream(5, &[1, 2])).unwrap();
    assert_eq!(a, b);
}

#[test]
fn distance_law_examples() {
    assert!((access_distance_cdf(0.4, 0.0).unwrap() - 0.16).abs() < 1e-15);
    for y in [0.0, 0.3, 0.9] {
        assert!((access_distance_cdf(1.0 + y, y).unwrap() - 1.0).abs() < 1e-12, "y = {y}");
    }
}

#[test]
fn distance_cdf_matches_hit_count() {
    // Fraction of uniform points within 1.2 of a point at radius 0.5.
    let centre = CellPoint::new(0.5, 0.0).unwrap();
    let chunks = 100u64;
    let per_chunk = 100_000;
    let hits: usize = (0..chunks)
        .into_par_iter()
        .map(|c| {
            sample_uniform_disk(per_chunk, &mut substream(102, &[c]))
                .unwrap()
                .iter()
                .filter(|p| p.distance(&centre) <= 1.2)
                .count()
        })
        .sum();
    let n = (chunks as usize * per_chunk) as f64;
    let p = hits as f64 / n;
    let se = (p * (1.0 - p) / n).sqrt();
    let exact = access_distance_cdf(1.2, 0.5).unwrap();
    assert!((p - exact).abs() < 3.0 * se, "hit rate {p} vs F {exact} (se {se})");
}

#[test]
fn single_antenna_minimum_is_base_law() {
    for y in [0.0, 0.2, 0.7] {
        for i in 1..40 {
            let x = i as f64 * (1.0 + y) / 40.0;
            let a = min_access_distance_pdf(x, y, 1).unwrap();
            let b = access_distance_pdf(x, y).unwrap();
            assert!((a - b).abs() <= 1e-12 * b.max(1.0), "x {x} y {y}: {a} vs {b}");
        }
    }
}

fn min_pdf_mass(n: usize, y: f64) -> f64 {
    let spec = QuadratureSpec::default();
    let f = |x: f64| min_access_distance_pdf(x, y, n).unwrap();
    // Split at the branch kink and where the (1 - F)^(n-1) factor decays.
    let knee = (4.0 / (n as f64).sqrt()).min(1.0 - y).max(1e-3);
    let mut cuts = vec![0.0, knee];
    if 1.0 - y > knee {
        cuts.push(1.0 - y);
    }
    cuts.push(1.0 + y);
    cuts.windows(2)
        .map(|w| integrate_adaptive(f, w[0], w[1], &spec).unwrap().value)
        .sum()
}

#[test]
fn min_distance_pdf_normalized() {
    let mass = min_pdf_mass(50, 0.4);
    assert!((mass - 1.0).abs() < 1e-6, "mass {mass}");
}

#[test]
fn min_distance_matches_simulation() {
    // User at the centre, minimum over 100 uniform antennas.
    let mins: Vec<f64> = (0..100_000u64)
        .into_par_iter()
        .map(|t| {
            sample_uniform_disk(100, &mut substream(103, &[t]))
                .unwrap()
                .iter()
                .map(|p| p.rho)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let d = ks_statistic(&mins, |x| 1.0 - (1.0 - x * x).powi(100));
    assert!(d < ks_critical_1pct(mins.len()), "KS {d}");
    // The library density integrates to the same law.
    let spec = QuadratureSpec::default();
    for x in [0.05, 0.1, 0.2] {
        let cdf = integrate_adaptive(|t| min_access_distance_pdf(t, 0.0, 100).unwrap(), 0.0, x, &spec)
            .unwrap()
            .value;
        assert!((cdf - (1.0 - (1.0 - x * x).powi(100))).abs() < 1e-8);
    }
}

#[test]
fn nearest_stats_match_exhaustive_search() {
    let users = vec![CellPoint::new(0.1, 0.0).unwrap(), CellPoint::new(0.9, PI).unwrap()];
    let antennas = vec![
        CellPoint::new(0.5, 0.0).unwrap(),
        CellPoint::new(0.6, PI).unwrap(),
        CellPoint::new(0.3, 0.5 * PI).unwrap(),
    ];
    let scenario = ScenarioLayout::new(users.clone(), antennas.clone(), Layout::Da, 4.0, 100.0).unwrap();
    let stats = nearest_antenna_stats(&scenario).unwrap();
    for (k, u) in users.iter().enumerate() {
        let distances: Vec<f64> = antennas.iter().map(|a| u.distance(a)).collect();
        let best = (0..3).min_by(|&a, &b| distances[a].total_cmp(&distances[b])).unwrap();
        assert_eq!(stats.nearest_antenna_index[k], best);
        assert!((stats.d_min_antenna[k] - distances[best]).abs() < 1e-15);
        assert_eq!(stats.d_min_user[k], users[0].distance(&users[1]));
    }
    // User 0 is nearest to antenna 2 (0.3 at 90 deg), user 1 to antenna 1.
    assert_eq!(stats.nearest_antenna_index, vec![2, 1]);
    assert_eq!(stats.cocluster_count, vec![0, 0]);
    // Trimmed minimum skips the antenna claimed by the other user.
    let trimmed0 = users[0].distance(&antennas[0]).min(users[0].distance(&antennas[2]));
    assert_eq!(stats.trimmed_d_min[0], trimmed0);
    let trimmed1 = users[1].distance(&antennas[0]).min(users[1].distance(&antennas[1]));
    assert_eq!(stats.trimmed_d_min[1], trimmed1);
}

/// Users fall preferentially in large Voronoi cells, so the number of other
/// users sharing a user's nearest antenna is Binomial(K - 1, A/pi) with the
/// cell area A size-biased. For Poisson-Voronoi cells E[A^2]/E[A]^2 = 1.280,
/// which inflates the mean over the unbiased (K - 1)/L by that factor.
#[test]
fn cocluster_count_is_size_biased_binomial() {
    let (l, k) = (10_000usize, 100usize);
    let per_scenario: Vec<f64> = (0..1000u64)
        .into_par_iter()
        .map(|s| {
            let scenario =
                ScenarioLayout::sample(Layout::Da, k, l, 4.0, 100.0, &mut substream(104, &[s])).unwrap();
            let stats = nearest_antenna_stats(&scenario).unwrap();
            stats.cocluster_count.iter().sum::<usize>() as f64 / k as f64
        })
        .collect();
    let (mean, se) = mean_stderr(&per_scenario);
    let unbiased = (k - 1) as f64 / l as f64;
    let ratio = mean / unbiased;
    let ratio_se = se / unbiased;
    assert!(
        (ratio - 1.280).abs() < 3.0 * ratio_se + 0.02,
        "E[m_k] / ((K-1)/L) = {ratio} ± {ratio_se}"
    );
    // The plain binomial mean is rejected.
    assert!((ratio - 1.0).abs() > 5.0 * ratio_se);
}

#[test]
fn minimum_access_distance_scales_as_inverse_sqrt_l() {
    let median = |l: usize| {
        let mut d: Vec<f64> = (0..300u64)
            .into_par_iter()
            .flat_map_iter(|s| {
                let scenario =
                    ScenarioLayout::sample(Layout::Da, 10, l, 4.0, 100.0, &mut substream(105, &[l as u64, s]))
                        .unwrap();
                nearest_antenna_stats(&scenario).unwrap().d_min_antenna
            })
            .collect();
        d.sort_by(f64::total_cmp);
        d[d.len() / 2]
    };
    let ratio = median(100) / median(1600);
    assert!((ratio / 4.0 - 1.0).abs() < 0.1, "median ratio {ratio}");
}

proptest! {
    #[test]
    fn distance_law_is_a_distribution(u in 0.0f64..=1.0, y in 0.0f64..1.0) {
        let x = u * (1.0 + y);
        let f = access_distance_cdf(x, y).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!(access_distance_pdf(x, y).unwrap() >= 0.0);
    }

    #[test]
    fn pdf_is_derivative_of_cdf(y in 0.01f64..0.99, u in 0.001f64..0.999) {
        let x = u * (1.0 + y);
        prop_assume!((x - (1.0 - y)).abs() > 1e-3);
        let h = 1e-6;
        let numeric = (access_distance_cdf(x + h, y).unwrap() - access_distance_cdf(x - h, y).unwrap()) / (2.0 * h);
        let exact = access_distance_pdf(x, y).unwrap();
        prop_assert!((numeric - exact).abs() < 1e-5, "x {} y {}: {} vs {}", x, y, numeric, exact);
    }

    #[test]
    fn min_distance_pdf_normalized_everywhere(n in 1usize..300, y in 0.0f64..0.99) {
        let mass = min_pdf_mass(n, y);
        prop_assert!((mass - 1.0).abs() < 1e-6, "n {} y {}: {}", n, y, mass);
    }

    #[test]
    fn trimmed_minimum_never_below_nearest(seed in any::<u64>(), users in 2usize..8, antennas in 8usize..40) {
        let scenario =
            ScenarioLayout::sample(Layout::Da, users, antennas, 4.0, 100.0, &mut substream(seed, &[])).unwrap();
        let stats = nearest_antenna_stats(&scenario).unwrap();
        for k in 0..users {
            prop_assert!(stats.d_min_antenna[k] <= stats.trimmed_d_min[k]);
        }
    }
}
