//! Volterra kernel algebra: kernel evaluation, closed-form resolvents, the
//! bond-volatility integral B_G(t,T), segment integrals, L² distances and a
//! numerical resolvent path for families without closed forms.
//!
//! Fractional-family normalization: G(t,s) = c (t−s)^{H−1/2} / Γ(H+1/2) with
//! α = H + 1/2, and likewise for the shifted variant with (t−s+ε).

use crate::error::{Error, Result};
use crate::specialfn::mittag_leffler;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

/// Declarative description of a Volterra kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Constant { c: f64 },
    Exponential { c: f64, beta: f64 },
    Fractional { c: f64, h: f64 },
    ShiftedFractional { c: f64, h: f64, epsilon: f64 },
    CmMixture { weights: Vec<f64>, nodes: Vec<f64> },
}

impl KernelSpec {
    /// Analytic admissibility check per family (L² integrability etc.).
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Constant { c } | KernelSpec::Exponential { c, .. } => {
                if !c.is_finite() {
                    return Err(Error::Domain("kernel scale c must be finite".into()));
                }
            }
            KernelSpec::Fractional { c, h } => {
                if !c.is_finite() {
                    return Err(Error::Domain("kernel scale c must be finite".into()));
                }
                if !(*h > 0.0 && *h < 1.5) {
                    return Err(Error::Domain(format!(
                        "fractional kernel requires H in (0, 1.5) for L2 admissibility (got {h})"
                    )));
                }
            }
            KernelSpec::ShiftedFractional { c, h, epsilon } => {
                if !c.is_finite() || !h.is_finite() {
                    return Err(Error::Domain("kernel parameters must be finite".into()));
                }
                if !(*epsilon > 0.0) {
                    return Err(Error::Domain(format!(
                        "shifted fractional kernel requires epsilon > 0 (got {epsilon})"
                    )));
                }
            }
            KernelSpec::CmMixture { weights, nodes } => {
                if weights.len() != nodes.len() || weights.is_empty() {
                    return Err(Error::Domain(
                        "mixture weights/nodes must be nonempty and of equal length".into(),
                    ));
                }
                if !weights.iter().all(|w| w.is_finite()) {
                    return Err(Error::Domain("mixture weights must be finite".into()));
                }
                if !nodes.iter().all(|x| x.is_finite() && *x >= 0.0) {
                    return Err(Error::Domain("mixture nodes must be nonnegative".into()));
                }
                for i in 0..nodes.len() {
                    for j in i + 1..nodes.len() {
                        if nodes[i] == nodes[j] {
                            return Err(Error::Domain("mixture nodes must be distinct".into()));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// α = H + 1/2 for the (shifted-)fractional families.
    pub fn alpha(&self) -> Option<f64> {
        match self {
            KernelSpec::Fractional { h, .. } | KernelSpec::ShiftedFractional { h, .. } => {
                Some(h + 0.5)
            }
            _ => None,
        }
    }
}

/// G(t,s); zero whenever s ≥ t (strict Volterra property).
pub fn kernel_eval(spec: &KernelSpec, t: f64, s: f64) -> f64 {
    if s >= t {
        return 0.0;
    }
    let tau = t - s;
    match spec {
        KernelSpec::Constant { c } => *c,
        KernelSpec::Exponential { c, beta } => c * (-beta * tau).exp(),
        KernelSpec::Fractional { c, h } => {
            let alpha = h + 0.5;
            c * tau.powf(alpha - 1.0) / gamma(alpha)
        }
        KernelSpec::ShiftedFractional { c, h, epsilon } => {
            let alpha = h + 0.5;
            c * (tau + epsilon).powf(alpha - 1.0) / gamma(alpha)
        }
        KernelSpec::CmMixture { weights, nodes } => weights
            .iter()
            .zip(nodes)
            .map(|(w, x)| w * (-x * tau).exp())
            .sum(),
    }
}

/// ∫_{s1}^{s2} G(t,s) ds in closed form, for s1 ≤ s2 ≤ t.
pub fn kernel_integral(spec: &KernelSpec, t: f64, s1: f64, s2: f64) -> f64 {
    debug_assert!(s1 <= s2 + 1e-15 && s2 <= t + 1e-12);
    let s2 = s2.min(t);
    let s1 = s1.min(s2);
    match spec {
        KernelSpec::Constant { c } => c * (s2 - s1),
        KernelSpec::Exponential { c, beta } => {
            if beta.abs() < 1e-14 {
                c * (s2 - s1)
            } else {
                c / beta * ((-beta * (t - s2)).exp() - (-beta * (t - s1)).exp())
            }
        }
        KernelSpec::Fractional { c, h } => {
            let alpha = h + 0.5;
            c * ((t - s1).powf(alpha) - (t - s2).powf(alpha)) / gamma(alpha + 1.0)
        }
        KernelSpec::ShiftedFractional { c, h, epsilon } => {
            let alpha = h + 0.5;
            c * ((t - s1 + epsilon).powf(alpha) - (t - s2 + epsilon).powf(alpha))
                / gamma(alpha + 1.0)
        }
        KernelSpec::CmMixture { weights, nodes } => weights
            .iter()
            .zip(nodes)
            .map(|(w, x)| {
                if x.abs() < 1e-14 {
                    w * (s2 - s1)
                } else {
                    w / x * ((-x * (t - s2)).exp() - (-x * (t - s1)).exp())
                }
            })
            .sum(),
    }
}

/// The resolvent R_{κG} of κ·G, i.e. R = κG + κG ⋆ R.
#[derive(Debug, Clone)]
pub struct ResolventEval {
    pub base: KernelSpec,
    pub kappa: f64,
}

impl ResolventEval {
    pub fn new(base: KernelSpec, kappa: f64) -> Result<Self> {
        base.validate()?;
        if !kappa.is_finite() {
            return Err(Error::Domain("kappa must be finite".into()));
        }
        Ok(ResolventEval { base, kappa })
    }
}

/// R_{κG}(t,s) in closed form (constant / exponential / fractional families).
/// Convention: R_{κG}/κ := G when κ = 0, so this returns G for κ = 0.
pub fn resolvent_eval(res: &ResolventEval, t: f64, s: f64) -> Result<f64> {
    if s >= t {
        return Ok(0.0);
    }
    if res.kappa == 0.0 {
        return match res.base {
            KernelSpec::Constant { .. }
            | KernelSpec::Exponential { .. }
            | KernelSpec::Fractional { .. } => Ok(kernel_eval(&res.base, t, s)),
            _ => Err(Error::UnsupportedFamily(
                "resolvent closed form exists only for constant/exponential/fractional".into(),
            )),
        };
    }
    let tau = t - s;
    let k = res.kappa;
    match &res.base {
        KernelSpec::Constant { c } => Ok(k * c * (k * c * tau).exp()),
        KernelSpec::Exponential { c, beta } => Ok(k * c * (tau * (k * c - beta)).exp()),
        KernelSpec::Fractional { c, h } => {
            let alpha = h + 0.5;
            let ml = mittag_leffler(alpha, alpha, k * c * tau.powf(alpha))?;
            Ok(k * c * tau.powf(alpha - 1.0) * ml)
        }
        _ => Err(Error::UnsupportedFamily(
            "resolvent closed form exists only for constant/exponential/fractional".into(),
        )),
    }
}

/// B_G(t,T) = (1/κ) ∫_t^T R_{κG}(s,t) ds, the bond-volatility loading.
/// Closed forms: constant (e^{κc τ}−1)/κ, exponential c(e^{(κc−β)τ}−1)/(κc−β),
/// fractional c τ^α E_{α,α+1}(κc τ^α); all continuous at κ = 0 where the
/// value is ∫_t^T G(s,t) ds.
pub fn b_g(res: &ResolventEval, t: f64, t_mat: f64) -> Result<f64> {
    if t_mat < t {
        return Err(Error::Domain(format!(
            "b_g requires t <= T (got t={t}, T={t_mat})"
        )));
    }
    let tau = t_mat - t;
    if tau == 0.0 {
        return Ok(0.0);
    }
    let k = res.kappa;
    match &res.base {
        KernelSpec::Constant { c } => {
            let kc = k * c;
            if kc.abs() < 1e-14 {
                Ok(c * tau * (1.0 + 0.5 * kc * tau))
            } else {
                Ok(c * ((kc * tau).exp() - 1.0) / kc)
            }
        }
        KernelSpec::Exponential { c, beta } => {
            let lam = k * c - beta;
            if lam.abs() < 1e-14 {
                Ok(c * tau * (1.0 + 0.5 * lam * tau))
            } else {
                Ok(c * ((lam * tau).exp() - 1.0) / lam)
            }
        }
        KernelSpec::Fractional { c, h } => {
            let alpha = h + 0.5;
            let ml = mittag_leffler(alpha, alpha + 1.0, k * c * tau.powf(alpha))?;
            Ok(c * tau.powf(alpha) * ml)
        }
        _ => Err(Error::UnsupportedFamily(
            "b_g closed form exists only for constant/exponential/fractional; \
             use b_g_numeric for other families"
        .into())),
    }
}

/// Numerical resolvent on a uniform grid by product integration of the
/// second-kind Volterra equation R(t,s) = κG(t,s) + ∫_s^t κG(t,v) R(v,s) dv,
/// followed by trapezoidal integration for B_G. Works for any family.
pub fn b_g_numeric(res: &ResolventEval, t: f64, t_mat: f64, n: usize) -> Result<f64> {
    if t_mat < t {
        return Err(Error::Domain("b_g_numeric requires t <= T".into()));
    }
    if t_mat == t {
        return Ok(0.0);
    }
    let n = n.max(16);
    let k = res.kappa;
    let dt = (t_mat - t) / n as f64;
    let grid: Vec<f64> = (0..=n).map(|i| t + i as f64 * dt).collect();
    if k == 0.0 {
        // Convention R/κ := G: B reduces to ∫_t^T G(s,t) ds. The integral runs
        // over the *first* kernel argument, so use a midpoint rule directly.
        let mut acc = 0.0;
        for w in grid.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            acc += kernel_eval(&res.base, mid, t) * dt;
        }
        return Ok(acc);
    }
    // r[i] ≈ R(grid[i], t): product integration with left-rectangle memory.
    let mut r = vec![0.0f64; n + 1];
    for i in 1..=n {
        let ti = grid[i];
        let mut conv = 0.0;
        for j in 1..i {
            // ∫ over [grid[j-1], grid[j]] of κG(ti,v) R(v,t) dv, R at right end.
            conv += k * kernel_integral(&res.base, ti, grid[j - 1], grid[j]) * r[j];
        }
        // Implicit in the last cell to handle the diagonal singularity.
        let wlast = k * kernel_integral(&res.base, ti, grid[i - 1], ti);
        let g = k * kernel_eval(&res.base, ti, t);
        r[i] = (g + conv) / (1.0 - wlast);
    }
    // B = (1/κ) ∫_t^T R(s,t) ds, trapezoid; R(t,t) may be singular for
    // fractional-type kernels, so treat the first cell by midpoint.
    let mut total = 0.0;
    for i in 1..n {
        total += 0.5 * (r[i] + r[i + 1]) * dt;
    }
    let mid = 0.5 * (grid[0] + grid[1]);
    let mut rmid = k * kernel_eval(&res.base, mid, t);
    rmid /= 1.0 - k * kernel_integral(&res.base, mid, t, mid);
    total += rmid * dt;
    Ok(total / k)
}

/// L²([0,T]²) distance between two kernels, midpoint rule on a grid×grid mesh
/// (midpoints avoid the integrable diagonal singularity of rough kernels).
pub fn l2_norm_distance(a: &KernelSpec, b: &KernelSpec, t_max: f64, grid: usize) -> f64 {
    let n = grid.max(16);
    let dt = t_max / n as f64;
    let mut acc = 0.0;
    for i in 0..n {
        let t = (i as f64 + 0.5) * dt;
        for j in 0..n {
            let s = (j as f64 + 0.5) * dt;
            let d = kernel_eval(a, t, s) - kernel_eval(b, t, s);
            acc += d * d;
        }
    }
    (acc * dt * dt).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kernel_eval_basics() {
        let k = KernelSpec::Constant { c: 1.0 };
        assert_eq!(kernel_eval(&k, 2.0, 1.0), 1.0);
        assert_eq!(kernel_eval(&k, 1.0, 1.0), 0.0);
        let sf = KernelSpec::ShiftedFractional {
            c: 1.0,
            h: 0.2,
            epsilon: 1.0 / 52.0,
        };
        let expect = (0.25f64 + 1.0 / 52.0).powf(-0.3) / gamma(0.7);
        assert_relative_eq!(kernel_eval(&sf, 0.5, 0.25), expect, max_relative = 1e-14);
        // ε → 0 limit approaches the fractional kernel.
        let f = KernelSpec::Fractional { c: 1.0, h: 0.2 };
        let sf_small = KernelSpec::ShiftedFractional {
            c: 1.0,
            h: 0.2,
            epsilon: 1e-10,
        };
        assert_relative_eq!(
            kernel_eval(&sf_small, 0.5, 0.25),
            kernel_eval(&f, 0.5, 0.25),
            max_relative = 1e-7
        );
    }

    #[test]
    fn kernel_integral_matches_quadrature() {
        let specs = [
            KernelSpec::Constant { c: 0.7 },
            KernelSpec::Exponential { c: 1.2, beta: 0.9 },
            KernelSpec::Fractional { c: 0.8, h: 0.3 },
            KernelSpec::ShiftedFractional {
                c: 1.1,
                h: 0.2,
                epsilon: 0.02,
            },
            KernelSpec::CmMixture {
                weights: vec![0.5, 0.7],
                nodes: vec![0.0, 2.0],
            },
        ];
        for spec in &specs {
            let (xs, ws) = crate::specialfn::gauss_legendre(200, 0.1, 0.6);
            let quad: f64 = xs
                .iter()
                .zip(&ws)
                .map(|(x, w)| w * kernel_eval(spec, 0.8, *x))
                .sum();
            assert_relative_eq!(
                kernel_integral(spec, 0.8, 0.1, 0.6),
                quad,
                max_relative = 1e-8
            );
        }
    }

    #[test]
    fn resolvent_closed_forms() {
        // Constant kernel row: R = κc e^{κc τ}.
        let r = ResolventEval::new(KernelSpec::Constant { c: 1.0 }, 1.0).unwrap();
        assert_relative_eq!(
            resolvent_eval(&r, 0.5, 0.0).unwrap(),
            0.5f64.exp(),
            max_relative = 1e-12
        );
        // κ = 0 convention: resolvent equals kernel.
        let r0 = ResolventEval::new(KernelSpec::Exponential { c: 1.3, beta: 0.4 }, 0.0).unwrap();
        assert_relative_eq!(
            resolvent_eval(&r0, 0.9, 0.2).unwrap(),
            kernel_eval(&r0.base, 0.9, 0.2),
            max_relative = 1e-14
        );
        // Fractional with α = 1 collapses to the constant-kernel row.
        let rf = ResolventEval::new(KernelSpec::Fractional { c: 1.0, h: 0.5 }, 2.0).unwrap();
        assert_relative_eq!(
            resolvent_eval(&rf, 0.3, 0.0).unwrap(),
            2.0 * 0.6f64.exp(),
            max_relative = 1e-10
        );
        // Exponential with β = 0 equals the constant resolvent.
        let re = ResolventEval::new(KernelSpec::Exponential { c: 0.8, beta: 0.0 }, 1.5).unwrap();
        let rc = ResolventEval::new(KernelSpec::Constant { c: 0.8 }, 1.5).unwrap();
        assert_relative_eq!(
            resolvent_eval(&re, 1.1, 0.3).unwrap(),
            resolvent_eval(&rc, 1.1, 0.3).unwrap(),
            max_relative = 1e-14
        );
        // Unsupported families are rejected.
        let bad = ResolventEval::new(
            KernelSpec::ShiftedFractional {
                c: 1.0,
                h: 0.2,
                epsilon: 0.01,
            },
            1.0,
        )
        .unwrap();
        assert!(resolvent_eval(&bad, 1.0, 0.0).is_err());
    }

    #[test]
    fn resolvent_identity_on_grid() {
        // R = κG + κG ⋆ R to O(Δ); error shrinks roughly by half with Δ/2.
        let res = ResolventEval::new(KernelSpec::Exponential { c: 1.0, beta: 0.5 }, 0.8).unwrap();
        let check = |n: usize| -> f64 {
            let t = 1.0;
            let s = 0.0;
            let dt = (t - s) / n as f64;
            let mut conv = 0.0;
            for i in 0..n {
                let v = s + (i as f64 + 0.5) * dt;
                conv += res.kappa
                    * kernel_eval(&res.base, t, v)
                    * resolvent_eval(&res, v, s).unwrap()
                    * dt;
            }
            let lhs = resolvent_eval(&res, t, s).unwrap();
            let rhs = res.kappa * kernel_eval(&res.base, t, s) + conv;
            (lhs - rhs).abs()
        };
        let e1 = check(64);
        let e2 = check(128);
        assert!(e1 < 1e-3);
        assert!(e2 < e1);
    }

    #[test]
    fn b_g_closed_forms() {
        // Constant kernel, κ = c = 1, T − t = 1 → e − 1.
        let r = ResolventEval::new(KernelSpec::Constant { c: 1.0 }, 1.0).unwrap();
        assert_relative_eq!(
            b_g(&r, 0.0, 1.0).unwrap(),
            1.0f64.exp() - 1.0,
            max_relative = 1e-12
        );
        assert_eq!(b_g(&r, 1.0, 1.0).unwrap(), 0.0);
        // Fractional α = 1, κc = −0.03 → (e^{−0.06}−1)/(−0.03).
        let rf = ResolventEval::new(KernelSpec::Fractional { c: 1.0, h: 0.5 }, -0.03).unwrap();
        assert_relative_eq!(
            b_g(&rf, 0.0, 2.0).unwrap(),
            ((-0.06f64).exp() - 1.0) / -0.03,
            max_relative = 1e-10
        );
        // Fractional α = 1 agrees with the exponential closed form.
        let re = ResolventEval::new(KernelSpec::Exponential { c: 1.0, beta: 0.0 }, -0.03).unwrap();
        assert_relative_eq!(
            b_g(&rf, 0.3, 2.0).unwrap(),
            b_g(&re, 0.3, 2.0).unwrap(),
            max_relative = 1e-10
        );
        assert!(b_g(&r, 1.0, 0.5).is_err());
    }

    #[test]
    fn b_g_matches_numerical_resolvent() {
        // Closed forms vs the product-integration path.
        for (spec, kappa) in [
            (KernelSpec::Constant { c: 1.0 }, -0.4f64),
            (KernelSpec::Exponential { c: 0.9, beta: 0.7 }, 0.6),
            (KernelSpec::Fractional { c: 1.0, h: 0.7 }, -0.5),
        ] {
            let res = ResolventEval::new(spec, kappa).unwrap();
            let exact = b_g(&res, 0.2, 1.2).unwrap();
            let num = b_g_numeric(&res, 0.2, 1.2, 4000).unwrap();
            assert_relative_eq!(exact, num, max_relative = 2e-3);
        }
        // κ = 0 numerical path equals ∫ G.
        let res = ResolventEval::new(
            KernelSpec::ShiftedFractional {
                c: 1.0,
                h: 0.3,
                epsilon: 0.02,
            },
            0.0,
        )
        .unwrap();
        let num = b_g_numeric(&res, 0.0, 1.0, 2000).unwrap();
        // ∫_0^T G(s,0) ds = ∫ c(s+ε)^{α-1}/Γ(α) ds.
        let alpha = 0.8;
        let eps = 0.02;
        let exact = ((1.0f64 + eps).powf(alpha) - eps.powf(alpha)) / gamma(alpha + 1.0);
        assert_relative_eq!(num, exact, max_relative = 1e-3);
    }

    #[test]
    fn l2_distance_cases() {
        let a = KernelSpec::Constant { c: 1.0 };
        assert_eq!(l2_norm_distance(&a, &a, 1.0, 32), 0.0);
        let b = KernelSpec::Constant { c: 0.0 };
        // Cell-center sampling covers the strictly-lower triangle, n(n−1)/2
        // of n² cells, so the discrete value is √((1−1/n)/2) → √(1/2).
        assert_relative_eq!(
            l2_norm_distance(&a, &b, 1.0, 64),
            (0.5f64 * (1.0 - 1.0 / 64.0)).sqrt(),
            max_relative = 1e-12
        );
        assert!((l2_norm_distance(&a, &b, 1.0, 512) - 0.5f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn validation_rules() {
        assert!(KernelSpec::Fractional { c: 1.0, h: 0.0 }.validate().is_err());
        assert!(KernelSpec::Fractional { c: 1.0, h: 0.9845 }.validate().is_ok());
        assert!(KernelSpec::ShiftedFractional {
            c: 1.0,
            h: -0.2,
            epsilon: 0.0
        }
        .validate()
        .is_err());
        assert!(KernelSpec::CmMixture {
            weights: vec![1.0, 2.0],
            nodes: vec![0.5, 0.5]
        }
        .validate()
        .is_err());
    }
}
