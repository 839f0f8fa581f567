//! Zero-forcing beamforming: pseudo-inverse precoder, effective channel
//! gains, co-located closed forms and asymptote, and the distributed-layout
//! lower bound.

use nalgebra::{ColPivQR, DMatrix, Dyn};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::quantile_unchecked;
use crate::montecarlo::{Method, RateEstimate};
use crate::mrt::AsymptoticParams;
use crate::special::{exp_e1, gamma_expectation, integrate_adaptive, lower_incomplete_gamma, QuadratureSpec, LOG2_E};

/// Largest accepted ratio between the extreme pivots of the factorization.
pub const MAX_CONDITION: f64 = 1e12;

/// Zero-forcing precoder of a normalized channel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ZfPrecoder {
    /// `F = G~^H (G~ G~^H)^{-1}`, L x K.
    pub pseudo_inverse: DMatrix<Complex64>,
    /// Unit-norm columns `f_k / ||f_k||`.
    pub precoders: DMatrix<Complex64>,
    /// `1 / ||f_k||^2`.
    pub effective_gain: Vec<f64>,
    /// Ratio of the largest to the smallest pivot magnitude.
    pub condition: f64,
}

type Factor = ColPivQR<Complex64, Dyn, Dyn>;

// Column-pivoted QR of G~^H = Q R P^T, refusing rank-deficient channels.
fn factor(g_tilde: &DMatrix<Complex64>) -> Result<(Factor, f64)> {
    let (k_users, l_antennas) = g_tilde.shape();
    if k_users == 0 || l_antennas == 0 {
        return Err(Error::EmptyInput("channel matrix"));
    }
    if l_antennas < k_users {
        return Err(Error::Infeasible(format!(
            "zero-forcing needs at least as many antennas as users (L = {l_antennas}, K = {k_users})"
        )));
    }
    let qr = ColPivQR::new(g_tilde.adjoint());
    let r = qr.r();
    let pivots: Vec<f64> = (0..k_users).map(|i| r[(i, i)].norm()).collect();
    let largest = pivots.iter().cloned().fold(0.0, f64::max);
    let smallest = pivots.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if smallest > 0.0 { largest / smallest } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::SingularChannel { condition });
    }
    Ok((qr, condition))
}

// R^{-H} P^T, whose column k has squared norm ||f_k||^2.
fn inverse_factor(qr: &Factor) -> Result<DMatrix<Complex64>> {
    let r = qr.r();
    let k_users = r.nrows();
    let mut m = DMatrix::<Complex64>::identity(k_users, k_users);
    if !r.adjoint().solve_lower_triangular_mut(&mut m) {
        return Err(Error::SingularChannel {
            condition: f64::INFINITY,
        });
    }
    qr.p().inv_permute_columns(&mut m);
    Ok(m)
}

fn column_gains(m: &DMatrix<Complex64>) -> Vec<f64> {
    m.column_iter()
        .map(|c| 1.0 / c.iter().map(|z| z.norm_sqr()).sum::<f64>())
        .collect()
}

/// Pseudo-inverse precoder via a rank-revealing QR factorization.
pub fn zf_precoder(g_tilde: &DMatrix<Complex64>) -> Result<ZfPrecoder> {
    let (qr, condition) = factor(g_tilde)?;
    let m = inverse_factor(&qr)?;
    let effective_gain = column_gains(&m);
    let pseudo_inverse = qr.q() * &m;
    let mut precoders = pseudo_inverse.clone();
    for (mut col, gain) in precoders.column_iter_mut().zip(&effective_gain) {
        col *= Complex64::new(gain.sqrt(), 0.0);
    }
    Ok(ZfPrecoder {
        pseudo_inverse,
        precoders,
        effective_gain,
        condition,
    })
}

/// Effective gains `1 / ||f_k||^2` without forming the precoder.
pub fn zf_effective_gains(g_tilde: &DMatrix<Complex64>) -> Result<Vec<f64>> {
    let (qr, _) = factor(g_tilde)?;
    Ok(column_gains(&inverse_factor(&qr)?))
}

fn check_ca(antennas: usize, users: usize, snr_budget: f64, alpha: f64) -> Result<()> {
    if users < 1 {
        return Err(Error::InvalidParameter("need at least one user".into()));
    }
    if antennas < users {
        return Err(Error::Infeasible(format!(
            "zero-forcing needs L >= K (L = {antennas}, K = {users})"
        )));
    }
    if !(snr_budget > 0.0) {
        return Err(Error::InvalidParameter(format!("snr budget must be positive, got {snr_budget}")));
    }
    if !(alpha > 2.0) {
        return Err(Error::InvalidParameter(format!("path-loss factor must exceed 2, got {alpha}")));
    }
    Ok(())
}

/// Ergodic ZF rate of a user at radius `rho` with co-located antennas,
/// `E[log2(1 + c X)]` with `X ~ Gamma(L - K + 1, 1/L)` and
/// `c = P_t L rho^{-alpha} / (K N_0)`.
pub fn rate_zfbf_ca(
    antennas: usize,
    users: usize,
    snr_budget: f64,
    rho: f64,
    alpha: f64,
    spec: &QuadratureSpec,
) -> Result<RateEstimate> {
    check_ca(antennas, users, snr_budget, alpha)?;
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Domain(format!("user radius must be in (0, 1], got {rho}")));
    }
    let l = antennas as f64;
    let c = snr_budget * l * rho.powf(-alpha) / users as f64;
    let shape = (antennas - users + 1) as f64;
    let q = gamma_expectation(shape, 1.0 / l, |x| (c * x).ln_1p() * LOG2_E, spec)?;
    Ok(RateEstimate::exact(q.value, Method::ClosedForm))
}

/// The three successive approximations of the co-located ZF rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZfCaApprox {
    /// Effective gain replaced by its mean `(L - K + 1) / L`:
    /// `log2(1 + P_t (L - K + 1) rho^{-alpha} / (K N_0))`.
    pub deterministic_gain: f64,
    /// `(L - K + 1) / K` replaced by `L / K - 1`.
    pub many_users: f64,
    /// The `1 +` dropped; `None` when `L = K`.
    pub high_snr: Option<f64>,
}

/// Approximation chain for [`rate_zfbf_ca`].
pub fn rate_zfbf_ca_approx(
    antennas: usize,
    users: usize,
    snr_budget: f64,
    rho: f64,
    alpha: f64,
) -> Result<ZfCaApprox> {
    check_ca(antennas, users, snr_budget, alpha)?;
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Domain(format!("user radius must be in (0, 1], got {rho}")));
    }
    let k = users as f64;
    let path = rho.powf(-alpha);
    let ratio = antennas as f64 / k - 1.0;
    Ok(ZfCaApprox {
        deterministic_gain: (snr_budget * (antennas - users + 1) as f64 * path / k).ln_1p() * LOG2_E,
        many_users: (snr_budget * ratio * path).ln_1p() * LOG2_E,
        high_snr: (ratio > 0.0).then(|| (snr_budget * ratio * path).log2()),
    })
}

/// Lower bound on the DA ZF rate from the trimmed minimum access distance,
/// `exp_e1((K N_0 / P_t) d^alpha) log2(e)`.
pub fn rate_lb_zfbf_da(trimmed_d_min: f64, users: usize, snr_budget: f64, alpha: f64) -> Result<RateEstimate> {
    if !(trimmed_d_min > 0.0) || !trimmed_d_min.is_finite() {
        return Err(Error::Domain(format!("distance must be positive, got {trimmed_d_min}")));
    }
    if !(snr_budget > 0.0) || users < 1 {
        return Err(Error::InvalidParameter("need a positive snr budget and a user".into()));
    }
    let x = users as f64 / snr_budget * trimmed_d_min.powf(alpha);
    Ok(RateEstimate::exact(exp_e1(x)? * LOG2_E, Method::BoundLower))
}

/// Co-located average rate in the high-SNR form, integrated over uniform
/// user positions: `log2(P_t/N_0 (L/K - 1)) + (alpha/2) log2(e)`.
pub fn avg_rate_zfbf_ca(antennas: usize, users: usize, snr_budget: f64, alpha: f64) -> Result<RateEstimate> {
    check_ca(antennas, users, snr_budget, alpha)?;
    if antennas <= users {
        return Err(Error::Domain(format!(
            "the high-SNR average needs L > K (L = {antennas}, K = {users})"
        )));
    }
    let ratio = antennas as f64 / users as f64 - 1.0;
    Ok(RateEstimate::exact(
        (snr_budget * ratio).log2() + 0.5 * alpha * LOG2_E,
        Method::ClosedForm,
    ))
}

/// Co-located average of the exact ergodic rate [`rate_zfbf_ca`] over
/// uniform user positions (radial density `2 rho`).
pub fn avg_rate_zfbf_ca_exact(
    antennas: usize,
    users: usize,
    snr_budget: f64,
    alpha: f64,
    spec: &QuadratureSpec,
) -> Result<RateEstimate> {
    check_ca(antennas, users, snr_budget, alpha)?;
    let inner = spec.scaled(0.1);
    let failure = std::sync::Mutex::new(None);
    let q = integrate_adaptive(
        |rho| match rate_zfbf_ca(antennas, users, snr_budget, rho, alpha, &inner) {
            Ok(r) => 2.0 * rho * r.value,
            Err(e) => {
                failure.lock().expect("poisoned").get_or_insert(e);
                0.0
            }
        },
        0.0,
        1.0,
        spec,
    )?;
    if let Some(e) = failure.into_inner().expect("poisoned") {
        return Err(e);
    }
    Ok(RateEstimate::exact(q.value, Method::ClosedForm))
}

/// Large-system co-located average rate,
/// `log2(P_t/N_0 (upsilon - 1)) + (alpha/2) log2(e)`.
pub fn asym_rate_zfbf_ca(params: &AsymptoticParams, snr_budget: f64) -> Result<f64> {
    if !(params.upsilon > 1.0) {
        return Err(Error::Domain(format!(
            "the asymptote needs upsilon > 1, got {}",
            params.upsilon
        )));
    }
    if !(snr_budget > 0.0) {
        return Err(Error::InvalidParameter("snr budget must be positive".into()));
    }
    Ok((snr_budget * (params.upsilon - 1.0)).log2() + 0.5 * params.alpha * LOG2_E)
}

/// Average of the DA ZF lower bound over user positions and the minimum of
/// `L - K + 1` access distances:
/// `log2(e) int_0^1 2y E[exp_e1((K N_0/P_t) D^alpha) | y] dy`.
///
/// The inner expectation is taken over `w` uniform on `[0, 1]` with
/// `D = Q(1 - (1 - w)^{1/(L-K+1)}; y)`, the inverse of the minimum's
/// distribution; this absorbs the `(1 - F)^{L-K}` peak at small distances.
pub fn avg_rate_lb_zfbf_da(
    antennas: usize,
    users: usize,
    snr_budget: f64,
    alpha: f64,
    spec: &QuadratureSpec,
) -> Result<RateEstimate> {
    check_ca(antennas, users, snr_budget, alpha)?;
    spec.validate()?;
    let exponent = 1.0 / (antennas - users + 1) as f64;
    let scale = users as f64 / snr_budget;
    let inner_spec = spec.scaled(0.1);
    let failure = std::sync::Mutex::new(None);
    let record = |e: Error| {
        failure.lock().expect("poisoned").get_or_insert(e);
        0.0
    };

    let conditional = |y: f64| -> f64 {
        let g = |w: f64| {
            let v = -(exponent * (-w).ln_1p()).exp_m1();
            let x = quantile_unchecked(v.min(1.0), y);
            if x <= 0.0 {
                return 0.0;
            }
            exp_e1(scale * x.powf(alpha)).unwrap_or(0.0)
        };
        // Inner/outer branch switch of the distance law.
        let inner_mass = (1.0 - y) * (1.0 - y);
        let kink = -((1.0 - inner_mass).ln() / exponent).exp_m1();
        let mut total = match integrate_adaptive(g, 0.0, kink.clamp(0.0, 1.0), &inner_spec) {
            Ok(q) => q.value,
            Err(e) => return record(e),
        };
        if kink < 1.0 {
            total += match integrate_adaptive(g, kink.max(0.0), 1.0, &inner_spec) {
                Ok(q) => q.value,
                Err(e) => return record(e),
            };
        }
        total
    };
    let q = integrate_adaptive(|y| 2.0 * y * conditional(y), 0.0, 1.0, spec)?;
    if let Some(e) = failure.into_inner().expect("poisoned") {
        return Err(e);
    }
    Ok(RateEstimate::exact(q.value * LOG2_E, Method::BoundLower))
}

/// `E[D^alpha | y = t]` for the minimum of `n + 1` access distances in the
/// inner-branch, large-`n` form:
/// `(n + 1) / n^{1 + alpha/2} * lower_gamma(1 + alpha/2, n (1 - t)^2)`.
pub fn conditional_trimmed_moment(n: usize, alpha: f64, t: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("the moment form needs L > K".into()));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("radius must be in [0, 1], got {t}")));
    }
    let n_f = n as f64;
    let s = 1.0 + 0.5 * alpha;
    let arg = n_f * (1.0 - t) * (1.0 - t);
    let ln_prefactor = (n_f + 1.0).ln() - s * n_f.ln();
    if arg == 0.0 {
        return Ok(0.0);
    }
    Ok(ln_prefactor.exp() * lower_incomplete_gamma(s, arg)?)
}

/// `E[D^alpha]` averaged over user radius `t` with density `2t`; tends to 0
/// as `L - K` grows, which drives the unbounded growth of the DA lower bound.
pub fn asym_divergence_diagnostic(antennas: usize, users: usize, alpha: f64, spec: &QuadratureSpec) -> Result<f64> {
    if antennas <= users {
        return Err(Error::Domain(format!(
            "the diagnostic needs L > K (L = {antennas}, K = {users})"
        )));
    }
    let n = antennas - users;
    let q = integrate_adaptive(
        |t| 2.0 * t * conditional_trimmed_moment(n, alpha, t).unwrap_or(f64::NAN),
        0.0,
        1.0,
        spec,
    )?;
    Ok(q.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_cn;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_channel(k: usize, l: usize, seed: u64) -> DMatrix<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(k, l, |_, _| sample_cn(&mut rng))
    }

    #[test]
    fn pseudo_inverse_zero_forces() {
        let g = random_channel(4, 7, 1);
        let zf = zf_precoder(&g).unwrap();
        let product = &g * &zf.pseudo_inverse;
        let eye = DMatrix::<Complex64>::identity(4, 4);
        assert!((product - eye).norm() < 1e-10);
        let cross = &g * &zf.precoders;
        for k in 0..4 {
            let col_norm: f64 = zf.precoders.column(k).iter().map(|z| z.norm_sqr()).sum();
            assert!((col_norm - 1.0).abs() < 1e-12);
            for j in (0..4).filter(|&j| j != k) {
                assert!(cross[(j, k)].norm() < 1e-10);
            }
        }
    }

    #[test]
    fn single_user_gain_is_channel_norm() {
        let g = random_channel(1, 5, 2);
        let norm: f64 = g.iter().map(|z| z.norm_sqr()).sum();
        let gains = zf_effective_gains(&g).unwrap();
        assert!((gains[0] - norm).abs() < 1e-12 * norm);
    }

    #[test]
    fn infeasible_and_singular() {
        let g = random_channel(3, 2, 3);
        assert!(matches!(zf_precoder(&g), Err(Error::Infeasible(_))));
        let mut g = random_channel(2, 3, 4);
        let row = g.row(0).into_owned();
        g.set_row(1, &row);
        assert!(matches!(zf_precoder(&g), Err(Error::SingularChannel { .. })));
    }

    #[test]
    fn ca_average_values() {
        let r = avg_rate_zfbf_ca(100, 50, 100.0, 4.0).unwrap().value;
        assert!((r - (100f64.log2() + 2.0 * LOG2_E)).abs() < 1e-12);
        assert!(avg_rate_zfbf_ca(50, 50, 100.0, 4.0).is_err());
        let p = AsymptoticParams::new(1.01, 4.0).unwrap();
        let a = asym_rate_zfbf_ca(&p, 100.0).unwrap();
        assert!((a - 2.0 * LOG2_E).abs() < 1e-9);
        assert!(asym_rate_zfbf_ca(&AsymptoticParams::new(1.0, 4.0).unwrap(), 100.0).is_err());
    }

    #[test]
    fn lower_bound_is_scaled_e1() {
        let r = rate_lb_zfbf_da(1.0, 50, 100.0, 4.0).unwrap().value;
        assert!((r - exp_e1(0.5).unwrap() * LOG2_E).abs() < 1e-14);
        assert!(rate_lb_zfbf_da(0.0, 50, 100.0, 4.0).is_err());
    }

    #[test]
    fn approximation_chain_orders() {
        let a = rate_zfbf_ca_approx(100, 50, 100.0, 0.5, 4.0).unwrap();
        assert!(a.deterministic_gain > a.many_users);
        assert!(a.many_users > a.high_snr.unwrap());
        assert!(rate_zfbf_ca_approx(50, 50, 100.0, 0.5, 4.0).unwrap().high_snr.is_none());
    }

    #[test]
    fn trimmed_moment_at_centre() {
        let v = conditional_trimmed_moment(10, 4.0, 0.0).unwrap();
        let expect = 11.0 / 1000.0 * lower_incomplete_gamma(3.0, 10.0).unwrap();
        assert!((v - expect).abs() < 1e-15);
        assert_eq!(conditional_trimmed_moment(10, 4.0, 1.0).unwrap(), 0.0);
    }
}
