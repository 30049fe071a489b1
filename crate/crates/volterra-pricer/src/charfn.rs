//! Semi-explicit characteristic function of the log-forward index under the
//! T-forward measure, by operator discretization on an N-point grid and a
//! Fredholm-determinant evaluation:
//!
//!   φ(u) = exp( χ^u + (T/N) a^u qᵀ Φ⁻¹ q − ½ log det Φ ),
//!
//! with a^u = (u²−u)/2, b^u = κ_ν + η_ν u ρ_Iν, q = (I−b^u G)⁻¹ h^u,
//! Σ̃ = (T/N)(I−b^u G)⁻¹ Σ (I−b^u Gᵀ)⁻¹ and Φ = I − 2a^u Σ̃.
//!
//! `charfn` takes the moment-generating-function variable: it returns
//! E[exp(u · log(I_T^T / I_0^T))] for complex u with Re(u) ∈ [0, 1]; the Lewis
//! contour point u_j − i/2 of the pricer corresponds to u = 1/2 + i·u_j here.

use crate::error::{Error, Result};
use crate::kernels::{b_g, kernel_integral, KernelSpec};
use crate::linalg::{lu_factor, solve_unit_lower};
use crate::rates::RateLegParams;
use crate::specialfn::{gauss_legendre, hyp2f1};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquityLegParams {
    pub nu0: f64,
    pub theta_nu: f64,
    pub kappa_nu: f64,
    pub eta_nu: f64,
    pub kernel: KernelSpec,
    pub rho_i_nu: f64,
    pub rho_i_r: f64,
    pub rho_nu_r: f64,
}

impl EquityLegParams {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if self.eta_nu < 0.0 {
            return Err(Error::Domain(format!(
                "eta_nu must be nonnegative (got {})",
                self.eta_nu
            )));
        }
        for r in [self.rho_i_nu, self.rho_i_r, self.rho_nu_r] {
            if !(-1.0..=1.0).contains(&r) {
                return Err(Error::Domain(format!("correlation {r} outside [-1,1]")));
            }
        }
        let min_eig = correlation_min_eigenvalue(self.rho_i_nu, self.rho_i_r, self.rho_nu_r);
        if min_eig < -1e-12 {
            return Err(Error::Domain(format!(
                "correlation matrix not PSD (min eigenvalue {min_eig:.3e})"
            )));
        }
        Ok(())
    }
}

/// Minimum eigenvalue of the 3×3 correlation matrix of (W_I, W_ν, W_r).
pub fn correlation_min_eigenvalue(rho_i_nu: f64, rho_i_r: f64, rho_nu_r: f64) -> f64 {
    let m = DMatrix::from_row_slice(
        3,
        3,
        &[
            1.0, rho_i_nu, rho_i_r, //
            rho_i_nu, 1.0, rho_nu_r, //
            rho_i_r, rho_nu_r, 1.0,
        ],
    );
    let eig = SymmetricEigen::new(m);
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelParams {
    pub rate: RateLegParams,
    pub equity: EquityLegParams,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        self.rate.validate()?;
        self.equity.validate()
    }
}

/// Precomputed u-independent operator data for one maturity.
#[derive(Debug, Clone)]
pub struct CharFnEngine {
    pub n: usize,
    pub maturity: f64,
    pub dt: f64,
    /// N×N lower triangular: G_{ij} = ∫ over cell_j ∩ [0, t_i] of G_ν(t_i, s) ds,
    /// with t_i the midpoint of cell_i = [i·dt, (i+1)·dt].
    pub g_matrix: Vec<f64>,
    /// N×N symmetric: Σ_{ij} = η_ν² ∫_0^T G_ν(t_i,s) G_ν(t_j,s) ds.
    pub sigma_matrix: Vec<f64>,
    /// g_0(t_i) = ν0 + θ_ν ∫_0^{t_i} G_ν(t_i, s) ds.
    pub g0_vec: Vec<f64>,
    /// B_{G_r}(t_i, T).
    pub b_vec: Vec<f64>,
    /// Midpoint product rule for ∫_0^{t_i} G_ν(t_i,w) B_{G_r}(w,T) dw.
    pub conv_vec: Vec<f64>,
    /// ∫_0^T B_{G_r}(s,T)² ds.
    pub chi_integral: f64,
    pub eta_nu: f64,
    pub kappa_nu: f64,
    pub eta_r: f64,
    pub rho_i_nu: f64,
    pub rho_i_r: f64,
    pub rho_nu_r: f64,
}

/// Σ-entry core integral ∫_0^{min} G(t_i,s) G(t_j,s) ds for the
/// (shifted-)fractional families, via the single-series reduction
/// J(x) = ∫_0^x σ^{α−1}(σ+d)^{α−1} dσ
///      = (x^α/α)(x+d)^{α−1} ₂F₁(1−α, 1; α+1; x/(x+d))   (d > 0),
/// with the entry equal to J(t_min+ε) − J(ε), d = |t_i − t_j|. This is
/// analytically identical to the Appell-F1 closed form but converges fast.
fn fractional_overlap(alpha: f64, eps: f64, t_min: f64, d: f64) -> Result<f64> {
    if t_min <= 0.0 {
        return Ok(0.0);
    }
    let j = |x: f64| -> Result<f64> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        if d <= 1e-300 {
            let p = 2.0 * alpha - 1.0;
            if p.abs() < 1e-12 {
                // α = 1/2: ∫ σ^{-1} dσ is handled by the caller via J-differences.
                return Ok(x.ln());
            }
            return Ok(x.powf(p) / p);
        }
        let z = x / (x + d);
        Ok(x.powf(alpha) / alpha * (x + d).powf(alpha - 1.0) * hyp2f1(1.0 - alpha, 1.0, alpha + 1.0, z)?)
    };
    if d <= 1e-300 && eps <= 0.0 && 2.0 * alpha - 1.0 <= 0.0 {
        return Err(Error::Domain(
            "divergent diagonal overlap for H <= 0 without shift".into(),
        ));
    }
    Ok(j(t_min + eps)? - j(eps)?)
}

/// Σ-entry via the Appell-F1 closed form (cross-check path; same value as
/// `fractional_overlap` but computed through the double series).
pub fn sigma_entry_f1(alpha: f64, eps: f64, t_a: f64, t_b: f64) -> Result<f64> {
    // t_a ≤ t_b; ∫_0^{t_a}(t_a−s+ε)^{α−1}(t_b−s+ε)^{α−1} ds
    //   = t_a (t_a+ε)^{α−1}(t_b+ε)^{α−1} F1(1; 1−α, 1−α; 2; t_a/(t_b+ε), t_a/(t_a+ε)).
    if t_a <= 0.0 {
        return Ok(0.0);
    }
    let f1 = crate::specialfn::appell_f1(
        1.0,
        1.0 - alpha,
        1.0 - alpha,
        2.0,
        t_a / (t_b + eps),
        t_a / (t_a + eps),
    )?;
    Ok(t_a * (t_a + eps).powf(alpha - 1.0) * (t_b + eps).powf(alpha - 1.0) * f1)
}

/// Build the u-independent engine for maturity `t_mat` on an N-point grid
/// t_i = iT/N, i = 0..N−1.
pub fn build_engine(model: &ModelParams, t_mat: f64, n: usize) -> Result<CharFnEngine> {
    if n < 2 {
        return Err(Error::Domain(format!("grid size N must be >= 2 (got {n})")));
    }
    if !(t_mat > 0.0) {
        return Err(Error::Domain("maturity must be positive".into()));
    }
    model.validate()?;
    let eq = &model.equity;
    let dt = t_mat / n as f64;
    // Cell midpoints: the product rules below are then second-order accurate,
    // which the route-agreement tolerances require (evaluation at the left
    // cell edges converges only first-order in 1/N).
    let grid: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * dt).collect();

    // G matrix: exact integrals of the vol kernel over cell_j ∩ [0, t_i] with
    // cells [j·dt, (j+1)·dt]; the diagonal entry is the half cell ending at
    // the midpoint t_i.
    let mut g_matrix = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let lo = j as f64 * dt;
            let hi = ((j + 1) as f64 * dt).min(grid[i]);
            g_matrix[i * n + j] = kernel_integral(&eq.kernel, grid[i], lo, hi);
        }
    }

    // Σ matrix: closed forms per family.
    let eta2 = eq.eta_nu * eq.eta_nu;
    let mut sigma_matrix = vec![0.0f64; n * n];
    match &eq.kernel {
        KernelSpec::Constant { c } => {
            for i in 0..n {
                for j in 0..=i {
                    let v = eta2 * c * c * grid[j.min(i)];
                    sigma_matrix[i * n + j] = v;
                    sigma_matrix[j * n + i] = v;
                }
            }
        }
        KernelSpec::Exponential { c, beta } => {
            for i in 0..n {
                for j in 0..=i {
                    let m = grid[j];
                    let v = if beta.abs() < 1e-14 {
                        eta2 * c * c * m
                    } else {
                        eta2 * c * c
                            * ((-beta * (grid[i] + grid[j] - 2.0 * m)).exp()
                                - (-beta * (grid[i] + grid[j])).exp())
                            / (2.0 * beta)
                    };
                    sigma_matrix[i * n + j] = v;
                    sigma_matrix[j * n + i] = v;
                }
            }
        }
        KernelSpec::Fractional { c, h } | KernelSpec::ShiftedFractional { c, h, .. } => {
            let alpha = h + 0.5;
            let eps = match &eq.kernel {
                KernelSpec::ShiftedFractional { epsilon, .. } => *epsilon,
                _ => 0.0,
            };
            let scale = eta2 * c * c / (gamma(alpha) * gamma(alpha));
            for i in 0..n {
                for j in 0..=i {
                    let t_min = grid[j];
                    let d = grid[i] - grid[j];
                    let v = scale * fractional_overlap(alpha, eps, t_min, d)?;
                    sigma_matrix[i * n + j] = v;
                    sigma_matrix[j * n + i] = v;
                }
            }
        }
        KernelSpec::CmMixture { weights, nodes } => {
            for i in 0..n {
                for j in 0..=i {
                    let m = grid[j];
                    let mut v = 0.0;
                    for (wp, xp) in weights.iter().zip(nodes) {
                        for (wq, xq) in weights.iter().zip(nodes) {
                            let s = xp + xq;
                            v += if s.abs() < 1e-14 {
                                wp * wq * m
                            } else {
                                wp * wq
                                    * ((-xp * (grid[i] - m) - xq * (grid[j] - m)).exp()
                                        - (-xp * grid[i] - xq * grid[j]).exp())
                                    / s
                            };
                        }
                    }
                    sigma_matrix[i * n + j] = eta2 * v;
                    sigma_matrix[j * n + i] = eta2 * v;
                }
            }
        }
    }

    // h-vector ingredients.
    let res = model.rate.resolvent()?;
    let mut g0_vec = vec![0.0f64; n];
    let mut b_vec = vec![0.0f64; n];
    for i in 0..n {
        g0_vec[i] =
            eq.nu0 + eq.theta_nu * kernel_integral(&eq.kernel, grid[i], 0.0, grid[i]);
        b_vec[i] = b_g(&res, grid[i], t_mat)?;
    }
    let mut conv_vec = vec![0.0f64; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..=i {
            acc += g_matrix[i * n + j] * b_vec[j];
        }
        conv_vec[i] = acc;
    }

    let chi_integral = if model.rate.eta_r == 0.0 {
        0.0
    } else {
        let (xs, ws) = gauss_legendre(128, 0.0, t_mat);
        xs.iter()
            .zip(&ws)
            .map(|(x, w)| {
                let b = b_g(&res, *x, t_mat).unwrap_or(0.0);
                w * b * b
            })
            .sum()
    };

    Ok(CharFnEngine {
        n,
        maturity: t_mat,
        dt,
        g_matrix,
        sigma_matrix,
        g0_vec,
        b_vec,
        conv_vec,
        chi_integral,
        eta_nu: eq.eta_nu,
        kappa_nu: eq.kappa_nu,
        eta_r: model.rate.eta_r,
        rho_i_nu: eq.rho_i_nu,
        rho_i_r: eq.rho_i_r,
        rho_nu_r: eq.rho_nu_r,
    })
}

/// φ(u) = E[exp(u log(I_T^T/I_0^T))] for Re(u) ∈ [0, 1].
pub fn charfn(engine: &CharFnEngine, u: Complex64) -> Result<Complex64> {
    if !(-1e-9..=1.0 + 1e-9).contains(&u.re) {
        return Err(Error::Domain(format!(
            "charfn requires Re(u) in [0,1] (got {})",
            u.re
        )));
    }
    let n = engine.n;
    let a = 0.5 * (u * u - u);
    if a.norm() == 0.0 {
        // u ∈ {0, 1}: martingale endpoints, exactly 1.
        return Ok(Complex64::new(1.0, 0.0));
    }
    let b = Complex64::new(engine.kappa_nu, 0.0)
        + engine.eta_nu * engine.rho_i_nu * u;

    // h_i = g_0^T(t_i) + ρ_Ir η_r B_i − (b ρ_Ir − u η_ν ρ_νr) η_r conv_i,
    // g_0^T(t_i) = g_0(t_i) − η_ν η_r ρ_νr conv_i.
    let coeff = (b * engine.rho_i_r - u * engine.eta_nu * engine.rho_nu_r) * engine.eta_r;
    let mut h: Vec<Complex64> = (0..n)
        .map(|i| {
            Complex64::new(
                engine.g0_vec[i] - engine.eta_nu * engine.eta_r * engine.rho_nu_r * engine.conv_vec[i]
                    + engine.rho_i_r * engine.eta_r * engine.b_vec[i],
                0.0,
            ) - coeff * engine.conv_vec[i]
        })
        .collect();

    // q = (I − bG)^{-1} h by forward substitution.
    solve_unit_lower(&engine.g_matrix, n, b, &mut h);
    let q = h;

    // Σ̃ = dt · (I−bG)^{-1} Σ (I−bG)^{-T}: forward-substitute Σ's columns,
    // then the transpose's columns.
    let mut w: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); n * n];
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for c in 0..n {
        for r in 0..n {
            col[r] = Complex64::new(engine.sigma_matrix[r * n + c], 0.0);
        }
        solve_unit_lower(&engine.g_matrix, n, b, &mut col);
        for r in 0..n {
            w[r * n + c] = col[r];
        }
    }
    // Now apply M^{-1} to rows of W (i.e. to columns of Wᵀ): since W is
    // M^{-1}Σ and Σ symmetric, Σ̃ = dt · M^{-1} Wᵀ read back transposed.
    let mut phi: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); n * n];
    for c in 0..n {
        for r in 0..n {
            col[r] = w[c * n + r]; // column c of Wᵀ = row c of W
        }
        solve_unit_lower(&engine.g_matrix, n, b, &mut col);
        for r in 0..n {
            // (Σ̃)ᵀ_{rc} = Σ̃_{cr}; Σ̃ symmetric so store either way.
            phi[r * n + c] = col[r];
        }
    }
    // Φ = I − 2a·Σ̃.
    let two_a_dt = 2.0 * a * engine.dt;
    for r in 0..n {
        for c in 0..n {
            let v = -two_a_dt * phi[r * n + c];
            phi[r * n + c] = if r == c {
                v + 1.0
            } else {
                v
            };
        }
    }

    let lu = lu_factor(phi, n)?;
    let log_det = lu.log_det();
    let x = lu.solve(&q);
    // Plain bilinear form qᵀ Φ⁻¹ q (no conjugation).
    let mut quad = Complex64::new(0.0, 0.0);
    for i in 0..n {
        quad += q[i] * x[i];
    }
    let chi = a * (1.0 - engine.rho_i_r * engine.rho_i_r) * engine.eta_r * engine.eta_r
        * engine.chi_integral;
    Ok((chi + engine.dt * a * quad - 0.5 * log_det).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::RateLegParams;
    use approx::assert_relative_eq;

    /// Baseline parameter set used throughout the discretization tests:
    /// κ_r=−0.03, η_r=0.01, ν0=0.2, κ_ν=0, θ_ν=0.1, η_ν=0.2,
    /// ρ_Iν=−0.7, ρ_Ir=−0.25, ρ_νr=−0.25.
    pub fn baseline_model(vol_kernel: KernelSpec) -> ModelParams {
        ModelParams {
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
                kernel: vol_kernel,
                rho_i_nu: -0.7,
                rho_i_r: -0.25,
                rho_nu_r: -0.25,
            },
        }
    }

    #[test]
    fn engine_trivial_entries() {
        let model = baseline_model(KernelSpec::Constant { c: 1.0 });
        let n = 8;
        let eng = build_engine(&model, 1.0, n).unwrap();
        // Constant kernel: G_ij = dt for full cells below the diagonal and
        // dt/2 on the diagonal (the half cell ending at the midpoint t_i).
        for i in 0..n {
            for j in 0..n {
                let expect = if j < i {
                    eng.dt
                } else if j == i {
                    0.5 * eng.dt
                } else {
                    0.0
                };
                assert_relative_eq!(eng.g_matrix[i * n + j], expect, epsilon = 1e-14);
            }
        }
        // First Σ row/column is η² t_0 = η² dt/2 (midpoint grid).
        for j in 0..n {
            let expect = 0.2f64 * 0.2 * 0.5 * eng.dt;
            assert_relative_eq!(eng.sigma_matrix[j], expect, epsilon = 1e-14);
            assert_relative_eq!(eng.sigma_matrix[j * n], expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn sigma_fractional_alpha_one_is_min() {
        // H = 0.5 (α = 1): Σ_ij = η² min(t_i, t_j).
        let model = baseline_model(KernelSpec::Fractional { c: 1.0, h: 0.5 });
        let n = 10;
        let eng = build_engine(&model, 2.0, n).unwrap();
        let eta2 = 0.2f64 * 0.2;
        for i in 0..n {
            for j in 0..n {
                let expect = eta2 * (eng.dt * (i.min(j) as f64 + 0.5));
                assert_relative_eq!(eng.sigma_matrix[i * n + j], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn sigma_overlap_matches_f1_and_quadrature() {
        // 2F1 reduction vs the Appell-F1 closed form vs brute quadrature.
        for &(alpha, eps, ta, tb) in &[
            (0.8f64, 0.0f64, 0.4f64, 0.7f64),
            (0.8, 1.0 / 52.0, 0.4, 0.7),
            (0.72, 0.02, 0.15, 0.9),
            (1.3, 0.05, 0.3, 0.3),
        ] {
            let direct = fractional_overlap(alpha, eps, ta, tb - ta).unwrap();
            // The Appell form needs ε > 0 (its second argument hits the
            // convergence boundary at ε = 0).
            if eps > 0.0 {
                let via_f1 = sigma_entry_f1(alpha, eps, ta, tb).unwrap();
                assert_relative_eq!(direct, via_f1, max_relative = 1e-8);
            }
            let (xs, ws) = gauss_legendre(400, 0.0, ta);
            let quad: f64 = xs
                .iter()
                .zip(&ws)
                .map(|(s, w)| {
                    w * (ta - s + eps).powf(alpha - 1.0) * (tb - s + eps).powf(alpha - 1.0)
                })
                .sum();
            // At ε = 0 the integrand has an endpoint singularity and the
            // Gauss-Legendre reference itself converges slowly.
            let tol = if eps == 0.0 { 5e-5 } else { 1e-5 };
            assert_relative_eq!(direct, quad, max_relative = tol);
        }
        // Frozen high-precision references.
        assert_relative_eq!(
            fractional_overlap(0.8, 0.0, 0.4, 0.3).unwrap(),
            0.701478665998020171,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            fractional_overlap(0.8, 1.0 / 52.0, 0.4, 0.3).unwrap(),
            0.659072410989652344,
            max_relative = 1e-12
        );
    }

    #[test]
    fn charfn_martingale_endpoints() {
        let model = baseline_model(KernelSpec::Fractional { c: 1.0, h: 0.3 });
        let eng = build_engine(&model, 1.0, 16).unwrap();
        for u in [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)] {
            let v = charfn(&eng, u).unwrap();
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn charfn_deterministic_vol_lognormal() {
        // η_ν = 0, κ_ν = 0: exp(a ∫ [(g0+ρ_Ir η_r B)² + (1−ρ²)η_r²B²]).
        let mut model = baseline_model(KernelSpec::Constant { c: 1.0 });
        model.equity.eta_nu = 0.0;
        model.equity.kappa_nu = 0.0;
        let t = 1.0;
        let n = 2000;
        let eng = build_engine(&model, t, n).unwrap();
        let u = Complex64::new(0.5, 1.3);
        let val = charfn(&eng, u).unwrap();
        let res = model.rate.resolvent().unwrap();
        let (xs, ws) = gauss_legendre(128, 0.0, t);
        let mut total_var = 0.0;
        for (x, w) in xs.iter().zip(&ws) {
            let b = b_g(&res, *x, t).unwrap();
            let g0 = model.equity.nu0
                + model.equity.theta_nu * kernel_integral(&model.equity.kernel, *x, 0.0, *x);
            let drift = g0 + model.equity.rho_i_r * model.rate.eta_r * b;
            total_var += w
                * (drift * drift
                    + (1.0 - model.equity.rho_i_r.powi(2))
                        * model.rate.eta_r.powi(2)
                        * b
                        * b);
        }
        let a = 0.5 * (u * u - u);
        let expect = (a * total_var).exp();
        assert!((val - expect).norm() / expect.norm() < 2e-3);
    }

    #[test]
    fn charfn_conjugate_symmetry() {
        let model = baseline_model(KernelSpec::Fractional { c: 1.0, h: 0.3 });
        let eng = build_engine(&model, 0.5, 24).unwrap();
        for &(re, im) in &[(0.5, 0.7), (0.3, 2.0), (1.0, -1.4)] {
            let a = charfn(&eng, Complex64::new(re, im)).unwrap();
            let b = charfn(&eng, Complex64::new(re, -im)).unwrap();
            assert!((a - b.conj()).norm() < 1e-12 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn charfn_zero_correlation_u_symmetry() {
        let mut model = baseline_model(KernelSpec::Fractional { c: 1.0, h: 0.4 });
        model.equity.rho_i_nu = 0.0;
        model.equity.rho_i_r = 0.0;
        model.equity.rho_nu_r = 0.0;
        let eng = build_engine(&model, 1.0, 32).unwrap();
        for &x in &[0.1, 0.25, 0.4, 0.5] {
            let a = charfn(&eng, Complex64::new(x, 0.0)).unwrap();
            let b = charfn(&eng, Complex64::new(1.0 - x, 0.0)).unwrap();
            assert!((a - b).norm() < 1e-10 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn charfn_grid_refinement_converges() {
        let model = baseline_model(KernelSpec::Fractional { c: 1.0, h: 0.5 });
        let u = Complex64::new(0.5, 2.0);
        let mut prev_gap: Option<f64> = None;
        for &n in &[10usize, 20, 40, 80] {
            let a = charfn(&build_engine(&model, 1.0, n).unwrap(), u).unwrap();
            let b = charfn(&build_engine(&model, 1.0, 2 * n).unwrap(), u).unwrap();
            let gap = (a - b).norm();
            if let Some(p) = prev_gap {
                assert!(gap < p, "refinement gap should shrink: {gap} !< {p}");
            }
            prev_gap = Some(gap);
        }
    }

    #[test]
    fn charfn_rates_only_gaussian() {
        // η_ν = 0 and g0 ≡ 0: only the bond-volatility leg remains, and
        // φ(u) = exp(a η_r² ∫ B² ds) (Gaussian with total variance η²∫B²).
        let mut model = baseline_model(KernelSpec::Constant { c: 1.0 });
        model.equity.eta_nu = 0.0;
        model.equity.kappa_nu = 0.0;
        model.equity.nu0 = 0.0;
        model.equity.theta_nu = 0.0;
        let t = 2.0;
        let eng = build_engine(&model, t, 1500).unwrap();
        let u = Complex64::new(0.5, -0.9);
        let a = 0.5 * (u * u - u);
        let res = model.rate.resolvent().unwrap();
        let (xs, ws) = gauss_legendre(128, 0.0, t);
        let var: f64 = xs
            .iter()
            .zip(&ws)
            .map(|(x, w)| {
                let b = b_g(&res, *x, t).unwrap();
                w * b * b
            })
            .sum();
        let expect = (a * model.rate.eta_r.powi(2) * var).exp();
        let val = charfn(&eng, u).unwrap();
        assert!((val - expect).norm() / expect.norm() < 2e-3);
    }

    #[test]
    fn rejects_bad_correlations() {
        let mut model = baseline_model(KernelSpec::Constant { c: 1.0 });
        model.equity.rho_i_nu = -0.95;
        model.equity.rho_i_r = 0.9;
        model.equity.rho_nu_r = 0.9;
        assert!(model.validate().is_err());
        assert!(build_engine(&model, 1.0, 8).is_err());
    }
}
