//! Two-stage calibration: rate leg to ATM cap vols, then equity leg and
//! correlations to an implied-vol surface. The optimizer is a bounded
//! Nelder-Mead: coordinates live in an unconstrained space and are mapped
//! into their boxes through tanh, with random restarts for the multimodal
//! equity stage. Candidate failures (stripping, pricing, root-finding) are
//! penalized, never fatal.

use crate::charfn::{build_engine, correlation_min_eigenvalue, EquityLegParams, ModelParams};
use crate::error::{Error, Result};
use crate::fourier::{implied_vol, lewis_call, select_quadrature_level, OptionRequest};
use crate::kernels::KernelSpec;
use crate::market_io::{CapQuote, MarketCurve, OptionQuote};
use crate::rates::{atm_cap_strike, cap_implied_vol, cap_price, strip_r0, CapFloor, CapSpec, RateLegParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::time::Instant;

const PENALTY: f64 = 1.0e6;

#[derive(Debug, Clone, Copy)]
pub struct CalibOptions {
    /// Nelder-Mead iterations per start; 0 returns the initial point scored.
    pub max_iters: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Stop when the simplex objective spread falls below this.
    pub tol: f64,
}

impl Default for CalibOptions {
    fn default() -> Self {
        CalibOptions {
            max_iters: 600,
            restarts: 3,
            seed: 17,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QuoteFit {
    pub maturity: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strike: Option<f64>,
    pub market_vol: f64,
    pub model_vol: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibReport {
    pub parameters: Vec<(String, f64)>,
    pub rmse: f64,
    pub quotes: Vec<QuoteFit>,
    pub iterations: usize,
    pub wall_time_secs: f64,
}

fn rmse_of(quotes: &[QuoteFit]) -> f64 {
    let ss: f64 = quotes
        .iter()
        .map(|q| (q.model_vol - q.market_vol).powi(2))
        .sum();
    (ss / quotes.len() as f64).sqrt()
}

// --- bounded Nelder-Mead ---------------------------------------------------

fn to_box(x: f64, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * 0.5 * (x.tanh() + 1.0)
}

fn from_box(p: f64, lo: f64, hi: f64) -> f64 {
    let w = hi - lo;
    let y = ((p - lo) / w).clamp(1e-9, 1.0 - 1e-9);
    (2.0 * y - 1.0).atanh()
}

struct Simplex {
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
}

/// Minimize `f` over the box [lo, hi]^d starting from `p0` (box coordinates).
/// Returns (best point in box coordinates, best value, iterations used).
pub fn nelder_mead_box<F>(
    f: &F,
    lo: &[f64],
    hi: &[f64],
    p0: &[f64],
    max_iters: usize,
    tol: f64,
) -> (Vec<f64>, f64, usize)
where
    F: Fn(&[f64]) -> f64,
{
    let d = p0.len();
    let eval = |x: &[f64]| -> f64 {
        let p: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, xi)| to_box(*xi, lo[i], hi[i]))
            .collect();
        f(&p)
    };
    let x0: Vec<f64> = p0
        .iter()
        .enumerate()
        .map(|(i, p)| from_box(*p, lo[i], hi[i]))
        .collect();
    let mut sx = Simplex {
        points: Vec::with_capacity(d + 1),
        values: Vec::with_capacity(d + 1),
    };
    sx.points.push(x0.clone());
    sx.values.push(eval(&x0));
    for i in 0..d {
        let mut v = x0.clone();
        v[i] += 0.25;
        sx.values.push(eval(&v));
        sx.points.push(v);
    }

    let mut iters = 0;
    while iters < max_iters {
        iters += 1;
        // Order ascending by value.
        let mut idx: Vec<usize> = (0..=d).collect();
        idx.sort_by(|a, b| sx.values[*a].partial_cmp(&sx.values[*b]).unwrap());
        let reorder_p: Vec<Vec<f64>> = idx.iter().map(|i| sx.points[*i].clone()).collect();
        let reorder_v: Vec<f64> = idx.iter().map(|i| sx.values[*i]).collect();
        sx.points = reorder_p;
        sx.values = reorder_v;
        if sx.values[d] - sx.values[0] < tol {
            break;
        }
        // Centroid of all but worst.
        let mut cen = vec![0.0; d];
        for p in &sx.points[..d] {
            for (c, x) in cen.iter_mut().zip(p) {
                *c += x / d as f64;
            }
        }
        let worst = sx.points[d].clone();
        let mix = |a: f64| -> Vec<f64> {
            cen.iter()
                .zip(&worst)
                .map(|(c, w)| c + a * (c - w))
                .collect()
        };
        let xr = mix(1.0);
        let fr = eval(&xr);
        if fr < sx.values[0] {
            let xe = mix(2.0);
            let fe = eval(&xe);
            if fe < fr {
                sx.points[d] = xe;
                sx.values[d] = fe;
            } else {
                sx.points[d] = xr;
                sx.values[d] = fr;
            }
        } else if fr < sx.values[d - 1] {
            sx.points[d] = xr;
            sx.values[d] = fr;
        } else {
            let (xc, fc) = if fr < sx.values[d] {
                let xc = mix(0.5);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc: Vec<f64> = cen
                    .iter()
                    .zip(&worst)
                    .map(|(c, w)| c - 0.5 * (c - w))
                    .collect();
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < sx.values[d].min(fr) {
                sx.points[d] = xc;
                sx.values[d] = fc;
            } else {
                // Shrink toward the best vertex.
                let best = sx.points[0].clone();
                for i in 1..=d {
                    let v: Vec<f64> = best
                        .iter()
                        .zip(&sx.points[i])
                        .map(|(b, x)| b + 0.5 * (x - b))
                        .collect();
                    sx.values[i] = eval(&v);
                    sx.points[i] = v;
                }
            }
        }
    }
    let mut best = 0;
    for i in 1..=d {
        if sx.values[i] < sx.values[best] {
            best = i;
        }
    }
    let p: Vec<f64> = sx.points[best]
        .iter()
        .enumerate()
        .map(|(i, x)| to_box(*x, lo[i], hi[i]))
        .collect();
    (p, sx.values[best], iters)
}

/// Run Nelder-Mead from `p0` plus `restarts` random interior starts; keep the
/// best result.
fn multistart<F>(
    f: &F,
    lo: &[f64],
    hi: &[f64],
    p0: &[f64],
    opts: &CalibOptions,
) -> (Vec<f64>, f64, usize)
where
    F: Fn(&[f64]) -> f64,
{
    let (mut best_p, mut best_v, mut total) = nelder_mead_box(f, lo, hi, p0, opts.max_iters, opts.tol);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.restarts {
        let start: Vec<f64> = lo
            .iter()
            .zip(hi)
            .map(|(l, h)| {
                let u: f64 = rng.gen_range(0.1..0.9);
                l + (h - l) * u
            })
            .collect();
        let (p, v, it) = nelder_mead_box(f, lo, hi, &start, opts.max_iters, opts.tol);
        total += it;
        if v < best_v {
            best_v = v;
            best_p = p;
        }
    }
    (best_p, best_v, total)
}

// --- rates stage -------------------------------------------------------------

/// ATM cap implied vols for a candidate rate leg; the curve is re-stripped so
/// the candidate reprices the market discounts exactly.
pub fn model_cap_vols(
    market: &MarketCurve,
    params: &RateLegParams,
    maturities: &[f64],
) -> Result<Vec<f64>> {
    let curve = strip_r0(&market.pillars, &market.discounts, params)?;
    maturities
        .iter()
        .map(|m| {
            let proto = CapSpec::quarterly(*m, 0.01, CapFloor::Cap);
            let k = atm_cap_strike(&curve, params, &proto.payment_dates)?;
            let spec = CapSpec::quarterly(*m, k, CapFloor::Cap);
            let price = cap_price(&curve, params, &spec)?;
            cap_implied_vol(&curve, params, &spec, price)
        })
        .collect()
}

/// Calibrate (κ_r, η_r, H_r) of a unit-constant fractional kernel to ATM cap
/// vols. Stripping happens inside the objective so each candidate is
/// internally consistent.
pub fn calibrate_rates(
    market: &MarketCurve,
    quotes: &[CapQuote],
    initial: &RateLegParams,
    opts: &CalibOptions,
) -> Result<(RateLegParams, CalibReport)> {
    if quotes.is_empty() {
        return Err(Error::Domain("no cap quotes".into()));
    }
    let start = Instant::now();
    let maturities: Vec<f64> = quotes.iter().map(|q| q.maturity_years).collect();
    let market_vols: Vec<f64> = quotes.iter().map(|q| q.atm_lognormal_vol).collect();
    let lo = [-5.0, 1e-4, 0.01];
    let hi = [5.0, 1.0, 1.49];
    let h0 = match &initial.kernel {
        KernelSpec::Fractional { h, .. } | KernelSpec::ShiftedFractional { h, .. } => *h,
        _ => 0.5,
    };
    let p0 = [
        initial.kappa_r.clamp(lo[0] + 1e-6, hi[0] - 1e-6),
        initial.eta_r.clamp(lo[1], hi[1]),
        h0.clamp(lo[2], hi[2]),
    ];
    let mk = |p: &[f64]| RateLegParams {
        kappa_r: p[0],
        eta_r: p[1],
        kernel: KernelSpec::Fractional { c: 1.0, h: p[2] },
    };
    let objective = |p: &[f64]| -> f64 {
        match model_cap_vols(market, &mk(p), &maturities) {
            Ok(vols) => {
                let ss: f64 = vols
                    .iter()
                    .zip(&market_vols)
                    .map(|(m, q)| (m - q).powi(2))
                    .sum();
                (ss / vols.len() as f64).sqrt()
            }
            Err(_) => PENALTY,
        }
    };

    let (best, _, iters) = if opts.max_iters == 0 {
        (p0.to_vec(), objective(&p0), 0)
    } else {
        multistart(&objective, &lo, &hi, &p0, opts)
    };
    let fitted = mk(&best);
    let model_vols = model_cap_vols(market, &fitted, &maturities)
        .map_err(|e| Error::NonConvergence(format!("best candidate failed repricing: {e}")))?;
    let fits: Vec<QuoteFit> = quotes
        .iter()
        .zip(&model_vols)
        .map(|(q, m)| QuoteFit {
            maturity: q.maturity_years,
            strike: None,
            market_vol: q.atm_lognormal_vol,
            model_vol: *m,
        })
        .collect();
    let report = CalibReport {
        parameters: vec![
            ("kappa_r".into(), best[0]),
            ("eta_r".into(), best[1]),
            ("h_r".into(), best[2]),
        ],
        rmse: rmse_of(&fits),
        quotes: fits,
        iterations: iters,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok((fitted, report))
}

// --- equity stage ------------------------------------------------------------

/// Model implied vols for the quote set, grouped by maturity; one engine per
/// maturity per candidate, maturities priced in parallel.
pub fn model_option_vols(
    rate: &RateLegParams,
    curve_market: &MarketCurve,
    spot: f64,
    equity: &EquityLegParams,
    quotes: &[OptionQuote],
    grid_n: usize,
) -> Result<Vec<f64>> {
    let curve = strip_r0(&curve_market.pillars, &curve_market.discounts, rate)?;
    let model = ModelParams {
        rate: rate.clone(),
        equity: equity.clone(),
    };
    model.validate()?;
    // Group quote indices by maturity.
    let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
    for (i, q) in quotes.iter().enumerate() {
        match groups
            .iter_mut()
            .find(|(t, _)| (*t - q.maturity_years).abs() < 1e-12)
        {
            Some((_, v)) => v.push(i),
            None => groups.push((q.maturity_years, vec![i])),
        }
    }
    let mut out = vec![0.0; quotes.len()];
    let results: Vec<Result<Vec<(usize, f64)>>> = groups
        .par_iter()
        .map(|(t_mat, idxs)| {
            let df = crate::rates::bond_price(&curve, rate, *t_mat)?;
            let engine = build_engine(&model, *t_mat, grid_n)?;
            let strikes: Vec<f64> = idxs.iter().map(|i| quotes[*i].strike).collect();
            let req = OptionRequest::new(*t_mat, strikes.clone(), spot, df);
            let level = select_quadrature_level(*t_mat);
            let prices = lewis_call(&engine, &req, level)?;
            idxs.iter()
                .zip(prices.iter().zip(&strikes))
                .map(|(i, (price, k))| {
                    let iv = implied_vol(price / df, spot / df, *k, *t_mat, true)?;
                    Ok((*i, iv))
                })
                .collect()
        })
        .collect();
    for r in results {
        for (i, iv) in r? {
            out[i] = iv;
        }
    }
    Ok(out)
}

/// Calibrate (ν0, θ_ν, η_ν, ρ_Iν, ρ_Ir, H_ν) with κ_ν and ρ_νr held at the
/// initial values; the kernel family (fractional / shifted fractional) and
/// its scale and shift come from `initial`, only H moves.
pub fn calibrate_equity(
    rate: &RateLegParams,
    curve_market: &MarketCurve,
    spot: f64,
    quotes: &[OptionQuote],
    initial: &EquityLegParams,
    grid_n: usize,
    opts: &CalibOptions,
) -> Result<(EquityLegParams, CalibReport)> {
    if quotes.is_empty() {
        return Err(Error::Domain("no option quotes".into()));
    }
    let start = Instant::now();
    let market_vols: Vec<f64> = quotes.iter().map(|q| q.implied_vol).collect();
    let lo = [-1.0, -1.0, 1e-4, -0.999, -0.999, 0.01];
    let hi = [1.0, 1.0, 2.0, 0.999, 0.999, 1.49];
    let h0 = match &initial.kernel {
        KernelSpec::Fractional { h, .. } | KernelSpec::ShiftedFractional { h, .. } => *h,
        _ => 0.5,
    };
    let p0 = [
        initial.nu0,
        initial.theta_nu,
        initial.eta_nu,
        initial.rho_i_nu,
        initial.rho_i_r,
        h0,
    ];
    let mk = |p: &[f64]| -> EquityLegParams {
        let kernel = match &initial.kernel {
            KernelSpec::ShiftedFractional { c, epsilon, .. } => KernelSpec::ShiftedFractional {
                c: *c,
                h: p[5],
                epsilon: *epsilon,
            },
            KernelSpec::Fractional { c, .. } => KernelSpec::Fractional { c: *c, h: p[5] },
            other => other.clone(),
        };
        EquityLegParams {
            nu0: p[0],
            theta_nu: p[1],
            kappa_nu: initial.kappa_nu,
            eta_nu: p[2],
            kernel,
            rho_i_nu: p[3],
            rho_i_r: p[4],
            rho_nu_r: initial.rho_nu_r,
        }
    };
    let objective = |p: &[f64]| -> f64 {
        let eq = mk(p);
        let min_eig = correlation_min_eigenvalue(eq.rho_i_nu, eq.rho_i_r, eq.rho_nu_r);
        if min_eig < -1e-12 {
            return PENALTY * (1.0 - min_eig);
        }
        match model_option_vols(rate, curve_market, spot, &eq, quotes, grid_n) {
            Ok(vols) => {
                let ss: f64 = vols
                    .iter()
                    .zip(&market_vols)
                    .map(|(m, q)| (m - q).powi(2))
                    .sum();
                (ss / vols.len() as f64).sqrt()
            }
            Err(_) => PENALTY,
        }
    };
    let (best, _, iters) = if opts.max_iters == 0 {
        (p0.to_vec(), objective(&p0), 0)
    } else {
        multistart(&objective, &lo, &hi, &p0, opts)
    };
    let fitted = mk(&best);
    let model_vols = model_option_vols(rate, curve_market, spot, &fitted, quotes, grid_n)
        .map_err(|e| Error::NonConvergence(format!("best candidate failed repricing: {e}")))?;
    let fits: Vec<QuoteFit> = quotes
        .iter()
        .zip(&model_vols)
        .map(|(q, m)| QuoteFit {
            maturity: q.maturity_years,
            strike: Some(q.strike),
            market_vol: q.implied_vol,
            model_vol: *m,
        })
        .collect();
    let report = CalibReport {
        parameters: vec![
            ("nu0".into(), best[0]),
            ("theta_nu".into(), best[1]),
            ("eta_nu".into(), best[2]),
            ("rho_i_nu".into(), best[3]),
            ("rho_i_r".into(), best[4]),
            ("h_nu".into(), best[5]),
        ],
        rmse: rmse_of(&fits),
        quotes: fits,
        iterations: iters,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok((fitted, report))
}
