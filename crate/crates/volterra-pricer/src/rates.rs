//! Volterra Hull-White analytics at time 0: curve stripping, zero-coupon
//! bonds, ZC bond options, caps/floors and the flat Black cap implied vol.
//!
//! Bond price: P(0,T) = exp(−∫_0^T r0(s)(1 + κ_r B(s,T)) ds
//!                          − (η_r²/2) ∫_0^T B(u,T)² du),
//! with B = B_{G_r} the resolvent integral of the rate kernel. The stripper
//! inverts this formula segment by segment so every input pillar reprices
//! exactly (within the shared quadrature), making the round trip tight.

use crate::error::{Error, Result};
use crate::kernels::{b_g, KernelSpec, ResolventEval};
use crate::specialfn::{gauss_legendre, norm_cdf};
use serde::{Deserialize, Serialize};

/// Gauss-Legendre points per curve segment for ∫ r0(s)(1+κB) ds.
const SEG_GL_POINTS: usize = 32;
/// Gauss-Legendre points for variance-type integrals (∫B², ∫(B−B)²).
const VAR_GL_POINTS: usize = 64;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateLegParams {
    pub kappa_r: f64,
    pub eta_r: f64,
    pub kernel: KernelSpec,
}

impl RateLegParams {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !(self.eta_r > 0.0) && self.eta_r != 0.0 {
            return Err(Error::Domain(format!(
                "eta_r must be nonnegative (got {})",
                self.eta_r
            )));
        }
        Ok(())
    }

    pub fn resolvent(&self) -> Result<ResolventEval> {
        ResolventEval::new(self.kernel.clone(), self.kappa_r)
    }
}

/// Market pillars plus the stripped piecewise-constant r0.
#[derive(Debug, Clone)]
pub struct DiscountCurve {
    pub pillars: Vec<f64>,
    pub discounts: Vec<f64>,
    /// r0 value on [T_{i−1}, T_i) (with T_0 = 0).
    pub r0_segments: Vec<f64>,
}

impl DiscountCurve {
    pub fn last_pillar(&self) -> f64 {
        *self.pillars.last().unwrap()
    }

    /// r0(t) lookup (piecewise constant, right-open segments).
    pub fn r0(&self, t: f64) -> f64 {
        let mut lo = 0.0;
        for (i, &p) in self.pillars.iter().enumerate() {
            if t < p || i + 1 == self.pillars.len() {
                return self.r0_segments[i];
            }
            lo = p;
        }
        let _ = lo;
        *self.r0_segments.last().unwrap()
    }
}

fn validate_pillars(pillars: &[f64], discounts: &[f64]) -> Result<()> {
    if pillars.is_empty() || pillars.len() != discounts.len() {
        return Err(Error::Domain(
            "pillars and discounts must be nonempty and of equal length".into(),
        ));
    }
    if pillars[0] <= 0.0 {
        return Err(Error::Domain("first pillar must be > 0".into()));
    }
    if !pillars.windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::Domain("pillars must be strictly increasing".into()));
    }
    if !discounts.iter().all(|&d| d > 0.0 && d <= 1.5) {
        return Err(Error::Domain("discounts must lie in (0, 1.5]".into()));
    }
    Ok(())
}

/// ∫_{a}^{b} (1 + κ B(s,T)) ds by Gauss-Legendre.
fn segment_loading(res: &ResolventEval, kappa: f64, a: f64, b: f64, t_mat: f64) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    let mut acc = b - a;
    if kappa != 0.0 {
        let (xs, ws) = gauss_legendre(SEG_GL_POINTS, a, b);
        for (x, w) in xs.iter().zip(&ws) {
            acc += kappa * w * b_g(res, *x, t_mat)?;
        }
    }
    Ok(acc)
}

/// (η²/2) ∫_0^T B(u,T)² du.
fn convexity_term(res: &ResolventEval, eta: f64, t_mat: f64) -> Result<f64> {
    if eta == 0.0 || t_mat == 0.0 {
        return Ok(0.0);
    }
    let (xs, ws) = gauss_legendre(VAR_GL_POINTS, 0.0, t_mat);
    let mut acc = 0.0;
    for (x, w) in xs.iter().zip(&ws) {
        let b = b_g(res, *x, t_mat)?;
        acc += w * b * b;
    }
    Ok(0.5 * eta * eta * acc)
}

/// Strip the piecewise-constant r0 from market discounts so that the model
/// bond formula reprices every pillar. Sequential bootstrap: segment i solves
/// a linear equation in r0_i given the already-stripped earlier segments.
pub fn strip_r0(
    pillars: &[f64],
    discounts: &[f64],
    params: &RateLegParams,
) -> Result<DiscountCurve> {
    validate_pillars(pillars, discounts)?;
    params.validate()?;
    let res = params.resolvent()?;
    let n = pillars.len();
    let mut r0 = Vec::with_capacity(n);
    for i in 0..n {
        let t_i = pillars[i];
        let conv = convexity_term(&res, params.eta_r, t_i)?;
        // ln P_i = −Σ_j r0_j m_j(T_i) − conv, m_j = ∫_{seg j}(1+κB(s,T_i))ds.
        let mut known = 0.0;
        let mut lo = 0.0;
        for j in 0..i {
            let m_j = segment_loading(&res, params.kappa_r, lo, pillars[j], t_i)?;
            known += r0[j] * m_j;
            lo = pillars[j];
        }
        let m_i = segment_loading(&res, params.kappa_r, lo, t_i, t_i)?;
        if m_i <= 0.0 {
            return Err(Error::Domain(format!(
                "degenerate stripping denominator {m_i:.3e} at pillar {t_i}"
            )));
        }
        r0.push((-discounts[i].ln() - known - conv) / m_i);
    }
    Ok(DiscountCurve {
        pillars: pillars.to_vec(),
        discounts: discounts.to_vec(),
        r0_segments: r0,
    })
}

/// P(0,T) from the stripped curve and rate-leg parameters.
pub fn bond_price(curve: &DiscountCurve, params: &RateLegParams, t_mat: f64) -> Result<f64> {
    if t_mat < 0.0 {
        return Err(Error::Domain("bond maturity must be >= 0".into()));
    }
    if t_mat == 0.0 {
        return Ok(1.0);
    }
    if t_mat > curve.last_pillar() + 1e-12 {
        return Err(Error::Extrapolation(format!(
            "T={t_mat} beyond last pillar {}",
            curve.last_pillar()
        )));
    }
    let res = params.resolvent()?;
    let mut log_p = -convexity_term(&res, params.eta_r, t_mat)?;
    let mut lo = 0.0;
    for (i, &p) in curve.pillars.iter().enumerate() {
        let hi = p.min(t_mat);
        if hi > lo {
            log_p -= curve.r0_segments[i] * segment_loading(&res, params.kappa_r, lo, hi, t_mat)?;
        }
        if p >= t_mat {
            break;
        }
        lo = p;
    }
    Ok(log_p.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionSide {
    Call,
    Put,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapFloor {
    Cap,
    Floor,
}

/// Option on the S-maturity zero-coupon bond, expiring at T < S:
/// Call = P(0,S) Φ(−d₁) − K P(0,T) Φ(−d₂),
/// Put  = K P(0,T) Φ(d₂) − P(0,S) Φ(d₁),
/// d₂ = ln(K P(0,T)/P(0,S))/(v√T) + v√T/2, d₁ = d₂ − v√T,
/// v² = η_r² ∫_0^T (B(s,T) − B(s,S))² ds / T.
pub fn zc_option_price(
    curve: &DiscountCurve,
    params: &RateLegParams,
    t_exp: f64,
    s_mat: f64,
    strike: f64,
    side: OptionSide,
) -> Result<f64> {
    if !(t_exp > 0.0 && s_mat > t_exp) {
        return Err(Error::Domain(format!(
            "need 0 < T < S (got T={t_exp}, S={s_mat})"
        )));
    }
    if strike < 0.0 {
        return Err(Error::Domain("strike must be nonnegative".into()));
    }
    let p_t = bond_price(curve, params, t_exp)?;
    let p_s = bond_price(curve, params, s_mat)?;
    let res = params.resolvent()?;
    let (xs, ws) = gauss_legendre(VAR_GL_POINTS, 0.0, t_exp);
    let mut var = 0.0;
    for (x, w) in xs.iter().zip(&ws) {
        let diff = b_g(&res, *x, t_exp)? - b_g(&res, *x, s_mat)?;
        var += w * diff * diff;
    }
    let v_sqrt_t = (params.eta_r * params.eta_r * var).sqrt(); // = v·√T
    if v_sqrt_t < 1e-12 || strike == 0.0 {
        let intrinsic_call = (p_s - strike * p_t).max(0.0);
        return Ok(match side {
            OptionSide::Call => intrinsic_call,
            OptionSide::Put => (strike * p_t - p_s).max(0.0),
        });
    }
    let d2 = (strike * p_t / p_s).ln() / v_sqrt_t + 0.5 * v_sqrt_t;
    let d1 = d2 - v_sqrt_t;
    Ok(match side {
        OptionSide::Call => p_s * norm_cdf(-d1) - strike * p_t * norm_cdf(-d2),
        OptionSide::Put => strike * p_t * norm_cdf(d2) - p_s * norm_cdf(d1),
    })
}

#[derive(Debug, Clone)]
pub struct CapSpec {
    /// T_0 < T_1 < … < T_β; caplet i covers [T_{i−1}, T_i].
    pub payment_dates: Vec<f64>,
    pub strike: f64,
    pub side: CapFloor,
}

impl CapSpec {
    pub fn validate(&self) -> Result<()> {
        if self.payment_dates.len() < 2 {
            return Err(Error::Domain("cap needs at least one caplet".into()));
        }
        if self.payment_dates[0] <= 0.0 || !self.payment_dates.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::Domain(
                "payment dates must be strictly increasing and positive".into(),
            ));
        }
        Ok(())
    }

    /// Quarterly schedule 0.25, 0.50, …, maturity.
    pub fn quarterly(maturity: f64, strike: f64, side: CapFloor) -> Self {
        let n = (maturity / 0.25).round() as usize;
        CapSpec {
            payment_dates: (1..=n).map(|i| i as f64 * 0.25).collect(),
            strike,
            side,
        }
    }
}

/// Cap = Σ_i (1 + K τ_i) · Put_ZC(0, T_{i−1}, T_i, 1/(1+K τ_i));
/// floors use the matching calls.
pub fn cap_price(curve: &DiscountCurve, params: &RateLegParams, spec: &CapSpec) -> Result<f64> {
    spec.validate()?;
    let mut total = 0.0;
    for w in spec.payment_dates.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let tau = t1 - t0;
        let scale = 1.0 + spec.strike * tau;
        if scale <= 0.0 {
            return Err(Error::Domain("1 + K·τ must be positive".into()));
        }
        let side = match spec.side {
            CapFloor::Cap => OptionSide::Put,
            CapFloor::Floor => OptionSide::Call,
        };
        total += scale * zc_option_price(curve, params, t0, t1, 1.0 / scale, side)?;
    }
    Ok(total)
}

/// The flat swap-equivalent ATM strike: K = [P(0,T_0) − P(0,T_β)] / Σ τ_i P(0,T_i).
pub fn atm_cap_strike(
    curve: &DiscountCurve,
    params: &RateLegParams,
    payment_dates: &[f64],
) -> Result<f64> {
    if payment_dates.len() < 2 {
        return Err(Error::Domain("need at least two payment dates".into()));
    }
    let p_first = bond_price(curve, params, payment_dates[0])?;
    let p_last = bond_price(curve, params, *payment_dates.last().unwrap())?;
    let mut annuity = 0.0;
    for w in payment_dates.windows(2) {
        annuity += (w[1] - w[0]) * bond_price(curve, params, w[1])?;
    }
    Ok((p_first - p_last) / annuity)
}

/// Black-76 caplet/cap on the curve's simple forward rates with a flat vol.
pub fn black_cap_price(
    curve: &DiscountCurve,
    params: &RateLegParams,
    spec: &CapSpec,
    vol: f64,
) -> Result<f64> {
    spec.validate()?;
    let mut total = 0.0;
    for w in spec.payment_dates.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let tau = t1 - t0;
        let p0 = bond_price(curve, params, t0)?;
        let p1 = bond_price(curve, params, t1)?;
        let fwd = (p0 / p1 - 1.0) / tau;
        let is_cap = matches!(spec.side, CapFloor::Cap);
        total += tau * p1 * black76(fwd, spec.strike, vol * t0.sqrt(), is_cap);
    }
    Ok(total)
}

/// Undiscounted Black-76 value with total volatility `sd` = σ√T.
pub fn black76(forward: f64, strike: f64, sd: f64, call: bool) -> f64 {
    if strike <= 0.0 {
        return if call { forward - strike } else { 0.0 };
    }
    if sd <= 0.0 || forward <= 0.0 {
        let intrinsic = forward - strike;
        return if call {
            intrinsic.max(0.0)
        } else {
            (-intrinsic).max(0.0)
        };
    }
    let d1 = (forward / strike).ln() / sd + 0.5 * sd;
    let d2 = d1 - sd;
    if call {
        forward * norm_cdf(d1) - strike * norm_cdf(d2)
    } else {
        strike * norm_cdf(-d2) - forward * norm_cdf(-d1)
    }
}

/// The single flat Black lognormal vol repricing `price`; Brent to 1e-10.
pub fn cap_implied_vol(
    curve: &DiscountCurve,
    params: &RateLegParams,
    spec: &CapSpec,
    price: f64,
) -> Result<f64> {
    let lo_v = 1e-10;
    let hi_v = 5.0;
    let f_lo = black_cap_price(curve, params, spec, lo_v)? - price;
    let f_hi = black_cap_price(curve, params, spec, hi_v)? - price;
    if f_lo.abs() < 1e-14 {
        return Ok(0.0);
    }
    if f_lo > 0.0 || f_hi < 0.0 {
        return Err(Error::Bounds(format!(
            "cap price {price:.6e} outside Black bounds [{:.6e}, {:.6e}]",
            f_lo + price,
            f_hi + price
        )));
    }
    brent(lo_v, hi_v, f_lo, f_hi, 1e-10, 200, |v| {
        black_cap_price(curve, params, spec, v).map(|p| p - price)
    })
}

/// Standard Brent root-finder on a bracketing interval.
pub fn brent<F>(
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
    tol: f64,
    max_iter: usize,
    mut f: F,
) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if fa * fb > 0.0 {
        return Err(Error::Bounds("brent: root not bracketed".into()));
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.abs() > fc.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let q0 = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * q0 * (q0 - r) - (b - a) * (r - 1.0));
                q = (q0 - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            if 2.0 * p < (3.0 * xm * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 {
            d
        } else {
            tol1.copysign(xm)
        };
        fb = f(b)?;
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
    }
    Err(Error::NonConvergence("brent exceeded max iterations".into()))
}
