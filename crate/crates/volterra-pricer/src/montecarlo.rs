//! Euler-scheme simulation for validating the Fourier prices.
//!
//! The forward index I^T is simulated under the T-forward measure,
//!   d log I^T = −½σ_k² dt + ν_{t_k} dW_I + η_r B_{G_r}(t_k,T) dW_r,
//!   σ_k² = ν_k² + η_r² B_k² + 2 ρ_Ir ν_k η_r B_k,
//! with ν advanced by a left-endpoint Euler-Volterra recursion
//!   ν_{t_k} = g_0^T(t_k) + Σ_{j<k} w_{kj} (κ_ν ν_{t_j} Δ + η_ν ΔW_ν,j),
//! where w_{kj} = G_ν(t_k, t_j) except for j = k−1 which uses the cell
//! average Δ⁻¹∫_{t_{k−1}}^{t_k} G_ν(t_k,s) ds to tame singular kernels, and
//!   g_0^T(t) = ν0 + θ_ν ∫_0^t G_ν(t,s) ds − η_ν η_r ρ_νr ∫_0^t G_ν(t,s) B_{G_r}(s,T) ds.
//!
//! Each path owns an RNG stream keyed by (seed, path index), so results are
//! bit-identical regardless of the worker count; reductions use a fixed
//! pairwise order.

use crate::charfn::ModelParams;
use crate::error::{Error, Result};
use crate::kernels::{b_g, b_g_numeric, kernel_eval, kernel_integral, ResolventEval};
use crate::rates::{DiscountCurve, RateLegParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    pub antithetic: bool,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths < 2 {
            return Err(Error::Domain("need at least 2 paths".into()));
        }
        if self.steps < 2 {
            return Err(Error::Domain("need at least 2 time steps".into()));
        }
        Ok(())
    }
}

/// Forward (undiscounted) call estimates per strike; the caller applies
/// P(0,T) when discounted prices are needed.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub strikes: Vec<f64>,
    pub price_estimates: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub ci95_lower: Vec<f64>,
    pub ci95_upper: Vec<f64>,
    pub terminal_forward_mean: f64,
    pub terminal_forward_stderr: f64,
}

/// Lower-triangular factor of the (W_I, W_ν, W_r) correlation matrix, with a
/// tolerance clamp so exactly-semidefinite triples still factor.
fn chol3(rho_i_nu: f64, rho_i_r: f64, rho_nu_r: f64) -> Result<[[f64; 3]; 3]> {
    let a = [
        [1.0, rho_i_nu, rho_i_r],
        [rho_i_nu, 1.0, rho_nu_r],
        [rho_i_r, rho_nu_r, 1.0],
    ];
    let mut l = [[0.0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s < -1e-10 {
                    return Err(Error::Domain(
                        "correlation matrix is not positive semidefinite".into(),
                    ));
                }
                l[i][i] = s.max(0.0).sqrt();
            } else if l[j][j] > 1e-14 {
                l[i][j] = s / l[j][j];
            } else {
                l[i][j] = 0.0;
            }
        }
    }
    Ok(l)
}

/// Volterra weights and forward drift for the vol recursion on an N-step grid.
struct VolScheme {
    /// w[k][j] for j < k, row k has length k.
    weights: Vec<Vec<f64>>,
    /// g_0^T(t_k) for k = 0..=steps.
    g0: Vec<f64>,
    /// B_{G_r}(t_k, T) for k = 0..=steps.
    b_rate: Vec<f64>,
}

fn rate_loading(res: &ResolventEval, t: f64, t_mat: f64) -> Result<f64> {
    match b_g(res, t, t_mat) {
        Ok(v) => Ok(v),
        Err(Error::UnsupportedFamily(_)) => b_g_numeric(res, t, t_mat, 200),
        Err(e) => Err(e),
    }
}

fn build_vol_scheme(model: &ModelParams, t_mat: f64, steps: usize) -> Result<VolScheme> {
    let dt = t_mat / steps as f64;
    let kernel = &model.equity.kernel;
    let eq = &model.equity;
    let res = model.rate.resolvent()?;
    let b_rate: Vec<f64> = (0..=steps)
        .map(|k| rate_loading(&res, k as f64 * dt, t_mat))
        .collect::<Result<_>>()?;

    let mut weights = Vec::with_capacity(steps + 1);
    let mut g0 = Vec::with_capacity(steps + 1);
    weights.push(Vec::new());
    g0.push(eq.nu0);
    for k in 1..=steps {
        let t_k = k as f64 * dt;
        let mut row = Vec::with_capacity(k);
        for j in 0..k {
            let w = if j + 1 == k {
                kernel_integral(kernel, t_k, t_k - dt, t_k) / dt
            } else {
                kernel_eval(kernel, t_k, j as f64 * dt)
            };
            row.push(w);
        }
        let mut drift_adj = 0.0;
        for (j, w) in row.iter().enumerate() {
            drift_adj += w * b_rate[j] * dt;
        }
        g0.push(
            eq.nu0 + eq.theta_nu * kernel_integral(kernel, t_k, 0.0, t_k)
                - eq.eta_nu * model.rate.eta_r * eq.rho_nu_r * drift_adj,
        );
        weights.push(row);
    }
    Ok(VolScheme {
        weights,
        g0,
        b_rate,
    })
}

/// One path's terminal forward index (starting at `forward`). `flip` negates
/// the normals (antithetic partner).
#[allow(clippy::too_many_arguments)]
fn equity_path(
    scheme: &VolScheme,
    model: &ModelParams,
    dt: f64,
    steps: usize,
    forward: f64,
    l: &[[f64; 3]; 3],
    normals: &[f64],
    flip: bool,
) -> f64 {
    let eq = &model.equity;
    let eta_r = model.rate.eta_r;
    let sign = if flip { -1.0 } else { 1.0 };
    let sqdt = dt.sqrt();
    let mut nu = vec![0.0f64; steps];
    let mut dw_nu = vec![0.0f64; steps];
    let mut log_i = 0.0f64;
    for k in 0..steps {
        // ν at t_k from the stored increments.
        let mut v = scheme.g0[k];
        let row = &scheme.weights[k];
        for j in 0..k {
            v += row[j] * (eq.kappa_nu * nu[j] * dt + eq.eta_nu * dw_nu[j]);
        }
        nu[k] = v;

        let z0 = sign * normals[3 * k];
        let z1 = sign * normals[3 * k + 1];
        let z2 = sign * normals[3 * k + 2];
        let dw_i = l[0][0] * z0 * sqdt;
        dw_nu[k] = (l[1][0] * z0 + l[1][1] * z1) * sqdt;
        let dw_r = (l[2][0] * z0 + l[2][1] * z1 + l[2][2] * z2) * sqdt;

        let b_k = scheme.b_rate[k];
        let sigma2 = v * v + eta_r * eta_r * b_k * b_k + 2.0 * eq.rho_i_r * v * eta_r * b_k;
        log_i += -0.5 * sigma2 * dt + v * dw_i + eta_r * b_k * dw_r;
    }
    forward * log_i.exp()
}

/// Fixed-order pairwise sum (deterministic regardless of chunking upstream).
fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

fn mean_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = pairwise_sum(samples) / n;
    let sq: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo forward call prices on the forward index started at `forward`.
pub fn simulate_equity(
    model: &ModelParams,
    t_mat: f64,
    config: &SimConfig,
    strikes: &[f64],
    forward: f64,
) -> Result<SimResult> {
    config.validate()?;
    model.validate()?;
    if !(t_mat > 0.0 && forward > 0.0) {
        return Err(Error::Domain("need positive maturity and forward".into()));
    }
    if strikes.iter().any(|k| *k <= 0.0) {
        return Err(Error::Domain("strikes must be positive".into()));
    }
    let steps = config.steps;
    let dt = t_mat / steps as f64;
    let scheme = build_vol_scheme(model, t_mat, steps)?;
    let l = chol3(
        model.equity.rho_i_nu,
        model.equity.rho_i_r,
        model.equity.rho_nu_r,
    )?;

    // With antithetics the sample unit is the pair average.
    let units = if config.antithetic {
        config.paths / 2
    } else {
        config.paths
    };
    if units == 0 {
        return Err(Error::Domain("antithetic runs need >= 2 paths".into()));
    }
    let seed = config.seed;
    let anti = config.antithetic;
    // rows[unit] = (terminal, payoff per strike)
    let rows: Vec<(f64, Vec<f64>)> = (0..units)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(p as u64);
            let normals: Vec<f64> = (0..3 * steps)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let term_a = equity_path(&scheme, model, dt, steps, forward, &l, &normals, false);
            let term = if anti {
                let term_b =
                    equity_path(&scheme, model, dt, steps, forward, &l, &normals, true);
                0.5 * (term_a + term_b)
            } else {
                term_a
            };
            let payoffs: Vec<f64> = strikes
                .iter()
                .map(|k| {
                    if anti {
                        // pair-averaged payoff, not payoff of the pair mean
                        let term_b = 2.0 * term - term_a;
                        0.5 * ((term_a - k).max(0.0) + (term_b - k).max(0.0))
                    } else {
                        (term_a - k).max(0.0)
                    }
                })
                .collect();
            (term, payoffs)
        })
        .collect();

    let terminals: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let (tmean, tse) = mean_stderr(&terminals);
    let mut prices = Vec::with_capacity(strikes.len());
    let mut ses = Vec::with_capacity(strikes.len());
    let mut lo = Vec::with_capacity(strikes.len());
    let mut hi = Vec::with_capacity(strikes.len());
    for (i, _) in strikes.iter().enumerate() {
        let col: Vec<f64> = rows.iter().map(|r| r.1[i]).collect();
        let (m, se) = mean_stderr(&col);
        prices.push(m);
        ses.push(se);
        lo.push(m - 1.96 * se);
        hi.push(m + 1.96 * se);
    }
    Ok(SimResult {
        strikes: strikes.to_vec(),
        price_estimates: prices,
        standard_errors: ses,
        ci95_lower: lo,
        ci95_upper: hi,
        terminal_forward_mean: tmean,
        terminal_forward_stderr: tse,
    })
}

/// Simulated short-rate paths plus a pooled autocorrelation estimate.
#[derive(Debug, Clone)]
pub struct RatePathResult {
    pub times: Vec<f64>,
    pub paths: Vec<Vec<f64>>,
    /// Empirical autocorrelation of the level r_t centered on its
    /// deterministic mean path, at the requested lags (in steps), pooled
    /// over paths.
    pub autocorrelation: Vec<f64>,
}

/// Risk-neutral Euler-Volterra short-rate paths,
/// r_{t_k} = r0(t_k) + Σ_{j<k} w_{kj} (κ_r r_j Δ + η_r ΔW_j).
pub fn simulate_rate_path(
    params: &RateLegParams,
    curve: &DiscountCurve,
    t_mat: f64,
    config: &SimConfig,
    lags: &[usize],
) -> Result<RatePathResult> {
    config.validate()?;
    params.validate()?;
    if t_mat <= 0.0 {
        return Err(Error::Domain("need positive horizon".into()));
    }
    let steps = config.steps;
    if lags.iter().any(|l| *l == 0 || *l >= steps) {
        return Err(Error::Domain("lags must lie in [1, steps)".into()));
    }
    let dt = t_mat / steps as f64;
    let kernel = &params.kernel;
    // Same singular-cell treatment as the vol scheme.
    let mut weights: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    weights.push(Vec::new());
    for k in 1..=steps {
        let t_k = k as f64 * dt;
        let mut row = Vec::with_capacity(k);
        for j in 0..k {
            row.push(if j + 1 == k {
                kernel_integral(kernel, t_k, t_k - dt, t_k) / dt
            } else {
                kernel_eval(kernel, t_k, j as f64 * dt)
            });
        }
        weights.push(row);
    }
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
    let r0: Vec<f64> = times.iter().map(|t| curve.r0(*t)).collect();
    // Deterministic mean path (the same recursion with the noise off); the
    // drift κ_r ∫ G r ds pushes E[r] away from r0, so centering must use this,
    // not r0 itself.
    let mean_path: Vec<f64> = {
        let mut m = vec![0.0f64; steps + 1];
        m[0] = r0[0];
        for k in 1..=steps {
            let mut acc = 0.0;
            for (j, w) in weights[k].iter().enumerate() {
                acc += w * params.kappa_r * m[j] * dt;
            }
            m[k] = r0[k] + acc;
        }
        m
    };

    let seed = config.seed;
    let paths: Vec<Vec<f64>> = (0..config.paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(0x7261_7465_0000_0000 | p as u64);
            let mut r = vec![0.0f64; steps + 1];
            let mut dw = vec![0.0f64; steps];
            r[0] = r0[0];
            let sqdt = dt.sqrt();
            for k in 1..=steps {
                dw[k - 1] = {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * sqdt
                };
                let mut acc = 0.0;
                for (j, w) in weights[k].iter().enumerate() {
                    acc += w * (params.kappa_r * r[j] * dt + params.eta_r * dw[j]);
                }
                r[k] = r0[k] + acc;
            }
            r
        })
        .collect();

    // Pooled autocorrelation of the centered levels, normalized over the
    // matching index windows.
    let mut autocorrelation = Vec::with_capacity(lags.len());
    for &lag in lags {
        let mut num = 0.0;
        let mut den_x = 0.0;
        let mut den_y = 0.0;
        for path in &paths {
            for k in 0..=(steps - lag) {
                let x = path[k] - mean_path[k];
                let y = path[k + lag] - mean_path[k + lag];
                num += x * y;
                den_x += x * x;
                den_y += y * y;
            }
        }
        let den = (den_x * den_y).sqrt();
        autocorrelation.push(if den > 0.0 { num / den } else { 0.0 });
    }
    Ok(RatePathResult {
        times,
        paths,
        autocorrelation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charfn::{build_engine, EquityLegParams};
    use crate::fourier::{lewis_call, OptionRequest};
    use crate::kernels::KernelSpec;
    use crate::rates::strip_r0;

    fn det_vol_model() -> ModelParams {
        // η_ν = 0, κ_ν = 0 → ν ≡ ν0; rates still stochastic.
        ModelParams {
            rate: RateLegParams {
                kappa_r: -0.03,
                eta_r: 0.01,
                kernel: KernelSpec::Constant { c: 1.0 },
            },
            equity: EquityLegParams {
                nu0: 0.2,
                theta_nu: 0.0,
                kappa_nu: 0.0,
                eta_nu: 0.0,
                kernel: KernelSpec::Constant { c: 1.0 },
                rho_i_nu: 0.0,
                rho_i_r: -0.25,
                rho_nu_r: 0.0,
            },
        }
    }

    #[test]
    fn deterministic_vol_collapses_to_drift() {
        let model = det_vol_model();
        let scheme = build_vol_scheme(&model, 1.0, 50).unwrap();
        // η_ν = 0, θ_ν = 0, ρ_νr·η_ν = 0 ⇒ g_0^T(t_k) = ν0 everywhere, and the
        // recursion adds nothing.
        for g in &scheme.g0 {
            assert!((g - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn determinism_and_antithetic_variance_reduction() {
        let model = det_vol_model();
        let cfg = SimConfig {
            paths: 4000,
            steps: 50,
            seed: 7,
            antithetic: false,
        };
        let a = simulate_equity(&model, 1.0, &cfg, &[100.0], 100.0).unwrap();
        let b = simulate_equity(&model, 1.0, &cfg, &[100.0], 100.0).unwrap();
        assert_eq!(a.price_estimates[0].to_bits(), b.price_estimates[0].to_bits());
        let cfg_anti = SimConfig {
            antithetic: true,
            ..cfg
        };
        let c = simulate_equity(&model, 1.0, &cfg_anti, &[100.0], 100.0).unwrap();
        assert!(
            c.standard_errors[0] <= a.standard_errors[0],
            "antithetic stderr {} > plain {}",
            c.standard_errors[0],
            a.standard_errors[0]
        );
    }

    #[test]
    fn martingale_and_black_scholes_consistency() {
        let mut model = det_vol_model();
        // Switch the rate leg off entirely: pure Black-Scholes with σ = 0.2.
        model.rate.eta_r = 0.0;
        model.equity.rho_i_r = 0.0;
        let cfg = SimConfig {
            paths: 40_000,
            steps: 100,
            seed: 11,
            antithetic: true,
        };
        let res = simulate_equity(&model, 1.0, &cfg, &[90.0, 100.0, 110.0], 100.0).unwrap();
        assert!(
            (res.terminal_forward_mean - 100.0).abs() < 3.0 * res.terminal_forward_stderr,
            "terminal mean {} ± {}",
            res.terminal_forward_mean,
            res.terminal_forward_stderr
        );
        for (i, k) in res.strikes.iter().enumerate() {
            let d1 = (100.0f64 / k).ln() / 0.2 + 0.1;
            let d2 = d1 - 0.2;
            let bs = 100.0 * crate::specialfn::norm_cdf(d1) - k * crate::specialfn::norm_cdf(d2);
            assert!(
                (res.price_estimates[i] - bs).abs() < 3.0 * res.standard_errors[i] + 0.05,
                "K={k}: mc {} vs bs {bs} (se {})",
                res.price_estimates[i],
                res.standard_errors[i]
            );
        }
    }

    #[test]
    fn fourier_price_inside_ci_stochastic_vol() {
        // Rough-vol case against the operator-discretization Fourier price.
        let model = ModelParams {
            rate: RateLegParams {
                kappa_r: -0.03,
                eta_r: 0.01,
                kernel: KernelSpec::Constant { c: 1.0 },
            },
            equity: EquityLegParams {
                nu0: 0.2,
                theta_nu: 0.1,
                kappa_nu: 0.0,
                eta_nu: 0.2,
                kernel: KernelSpec::Fractional { c: 1.0, h: 0.3 },
                rho_i_nu: -0.7,
                rho_i_r: -0.25,
                rho_nu_r: -0.25,
            },
        };
        let t = 0.5;
        let strikes = vec![90.0, 100.0, 110.0];
        let engine = build_engine(&model, t, 40).unwrap();
        let req = OptionRequest::new(t, strikes.clone(), 100.0, 1.0);
        let fourier = lewis_call(&engine, &req, 40).unwrap();
        let cfg = SimConfig {
            paths: 20_000,
            steps: 200,
            seed: 3,
            antithetic: true,
        };
        let mc = simulate_equity(&model, t, &cfg, &strikes, 100.0).unwrap();
        for i in 0..strikes.len() {
            assert!(
                fourier[i] > mc.ci95_lower[i] - 0.02 && fourier[i] < mc.ci95_upper[i] + 0.02,
                "K={}: fourier {} outside [{}, {}]",
                strikes[i],
                fourier[i],
                mc.ci95_lower[i],
                mc.ci95_upper[i]
            );
        }
    }

    #[test]
    fn rate_paths_deterministic_when_noise_off() {
        let params = RateLegParams {
            kappa_r: 0.0,
            eta_r: 0.0,
            kernel: KernelSpec::Constant { c: 1.0 },
        };
        let curve = strip_r0(&[1.0, 2.0], &[0.97, 0.94], &params).unwrap();
        let cfg = SimConfig {
            paths: 3,
            steps: 64,
            seed: 1,
            antithetic: false,
        };
        let out = simulate_rate_path(&params, &curve, 2.0, &cfg, &[1]).unwrap();
        for path in &out.paths {
            for (k, t) in out.times.iter().enumerate() {
                assert!((path[k] - curve.r0(*t)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn constant_kernel_autocorrelation_decays() {
        let params = RateLegParams {
            kappa_r: -0.8,
            eta_r: 0.01,
            kernel: KernelSpec::Constant { c: 1.0 },
        };
        let curve = strip_r0(&[10.0], &[0.74], &params).unwrap();
        let cfg = SimConfig {
            paths: 400,
            steps: 500,
            seed: 5,
            antithetic: false,
        };
        let lags: Vec<usize> = vec![10, 50, 100, 200];
        let out = simulate_rate_path(&params, &curve, 10.0, &cfg, &lags).unwrap();
        // OU autocorrelation e^{κ·lag·Δ}; require the observed decay to track
        // the exponential within a loose band.
        for (lag, rho) in lags.iter().zip(&out.autocorrelation) {
            let expect = (params.kappa_r * (*lag as f64) * 10.0 / 500.0).exp();
            assert!(
                (rho - expect).abs() < 0.12,
                "lag {lag}: empirical {rho} vs OU {expect}"
            );
        }
        // And decay is monotone.
        for w in out.autocorrelation.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn long_memory_kernel_has_slower_decay() {
        let mk = |kernel| RateLegParams {
            kappa_r: -0.5566,
            eta_r: 0.0377,
            kernel,
        };
        let cfg = SimConfig {
            paths: 300,
            steps: 400,
            seed: 9,
            antithetic: false,
        };
        let lags: Vec<usize> = (1..=100).step_by(9).collect();
        let p_long = mk(KernelSpec::Fractional { c: 1.0, h: 0.9845 });
        let p_hw = mk(KernelSpec::Fractional { c: 1.0, h: 0.5 });
        let curve_long = strip_r0(&[8.0], &[0.79], &p_long).unwrap();
        let curve_hw = strip_r0(&[8.0], &[0.79], &p_hw).unwrap();
        let long = simulate_rate_path(&p_long, &curve_long, 8.0, &cfg, &lags).unwrap();
        let hw = simulate_rate_path(&p_hw, &curve_hw, 8.0, &cfg, &lags).unwrap();
        let mut wins = 0;
        for (a, b) in long.autocorrelation.iter().zip(&hw.autocorrelation) {
            if a > b {
                wins += 1;
            }
        }
        assert!(
            wins == lags.len(),
            "long-memory autocorrelation above Hull-White at {wins}/{} lags",
            lags.len()
        );
    }
}
