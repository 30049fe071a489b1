//! Command-line front end: curve stripping, bond/cap/option pricing,
//! characteristic-function inspection, calibration, simulation, and the
//! operator-vs-multifactor method comparison. Outputs are plot-ready CSV
//! (and JSON for calibration reports) written under --out.
//!
//! Exit codes: 0 success, 1 validation/input error, 2 numerical failure.

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;
use volterra_pricer::calibration::{calibrate_equity, calibrate_rates, CalibOptions};
use volterra_pricer::charfn::{build_engine, charfn, ModelParams};
use volterra_pricer::fourier::{
    atm_skew, implied_vol, lewis_call, lewis_call_with, select_quadrature_level, OptionRequest,
};
use volterra_pricer::market_io::{
    load_cap_quotes, load_curve, load_option_quotes, ConfigFile, MarketCurve,
};
use volterra_pricer::montecarlo::{simulate_equity, SimConfig};
use volterra_pricer::rates::{
    atm_cap_strike, bond_price, cap_implied_vol, cap_price, strip_r0, CapFloor, CapSpec,
    DiscountCurve,
};
use volterra_pricer::riccati::{multifactor_reduce, riccati_charfn};
use volterra_pricer::{Error, Result};

#[derive(Parser)]
#[command(name = "volterra-pricer", version, about = "Hybrid equity/rates pricer with Gaussian Volterra volatility and short rate")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, default_value = "config.toml")]
    config: PathBuf,
    /// Output directory for CSV/JSON artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker thread cap (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Simulation seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Operator-discretization grid size override.
    #[arg(long, global = true)]
    grid_n: Option<usize>,
    /// Quadrature level override for Lewis pricing.
    #[arg(long, global = true)]
    quad_l: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct MaturityArg {
    /// Maturity in years.
    #[arg(long)]
    maturity: f64,
}

#[derive(Args)]
struct StrikesArg {
    /// Comma-separated strike list.
    #[arg(long, value_delimiter = ',')]
    strikes: Vec<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Bootstrap the piecewise-constant r0 from the discount curve file.
    StripCurve,
    /// Model zero-coupon bond prices at the given maturities.
    PriceBond {
        #[arg(long, value_delimiter = ',')]
        maturities: Vec<f64>,
    },
    /// Price a quarterly cap (ATM when --strike is omitted).
    PriceCap {
        #[command(flatten)]
        maturity: MaturityArg,
        #[arg(long)]
        strike: Option<f64>,
    },
    /// Price equity calls and report implied vols.
    PriceOption {
        #[command(flatten)]
        maturity: MaturityArg,
        #[command(flatten)]
        strikes: StrikesArg,
    },
    /// Dump φ(1/2 + iu) over an imaginary-axis grid.
    Charfn {
        #[command(flatten)]
        maturity: MaturityArg,
        #[arg(long, default_value_t = 20.0)]
        u_max: f64,
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
    /// Implied-vol smile per maturity.
    Smile {
        #[arg(long, value_delimiter = ',')]
        maturities: Vec<f64>,
        #[command(flatten)]
        strikes: StrikesArg,
    },
    /// ATM implied-vol skew term structure.
    AtmSkew {
        #[arg(long, value_delimiter = ',')]
        maturities: Vec<f64>,
        #[arg(long, default_value_t = 0.01)]
        bump: f64,
    },
    /// Fit (κ_r, η_r, H_r) to the ATM cap vol quotes.
    CalibrateRates {
        #[arg(long, default_value_t = 600)]
        max_iters: usize,
        #[arg(long, default_value_t = 2)]
        restarts: usize,
    },
    /// Fit the equity leg and correlations to the option vol quotes.
    CalibrateEquity {
        #[arg(long, default_value_t = 400)]
        max_iters: usize,
        #[arg(long, default_value_t = 2)]
        restarts: usize,
    },
    /// Monte Carlo call prices with 95% confidence bounds.
    Simulate {
        #[command(flatten)]
        maturity: MaturityArg,
        #[command(flatten)]
        strikes: StrikesArg,
    },
    /// Operator discretization vs multi-factor Riccati: ATM vol and wall time.
    CompareMethods {
        #[command(flatten)]
        maturity: MaturityArg,
        #[arg(long, value_delimiter = ',', default_value = "10,20,40,80")]
        grid_sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "5,10,20")]
        factor_counts: Vec<usize>,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
    },
}

fn write_out(dir: &Path, name: &str, content: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, content)?;
    println!("wrote {}", path.display());
    Ok(path)
}

struct Ctx {
    cfg: ConfigFile,
    model: ModelParams,
    out: PathBuf,
    grid_n: usize,
    quad_l: Option<usize>,
    seed: u64,
}

impl Ctx {
    fn market_curve(&self) -> Result<MarketCurve> {
        let rel = self.cfg.files.curve.as_deref().ok_or_else(|| {
            Error::Config("config [files] has no `curve` entry".into())
        })?;
        load_curve(Path::new(rel))
    }

    fn stripped_curve(&self) -> Result<DiscountCurve> {
        let market = self.market_curve()?;
        strip_r0(&market.pillars, &market.discounts, &self.model.rate)
    }

    fn quad_level(&self, t_mat: f64) -> usize {
        self.quad_l.unwrap_or_else(|| select_quadrature_level(t_mat))
    }

    /// Forward and discount for an equity maturity from the stripped curve.
    fn forward_discount(&self, curve: &DiscountCurve, t_mat: f64) -> Result<(f64, f64)> {
        let df = bond_price(curve, &self.model.rate, t_mat)?;
        Ok((self.cfg.model.spot / df, df))
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let cfg = ConfigFile::from_path(&cli.config)?;
    let model = cfg.model_params()?;
    let ctx = Ctx {
        grid_n: cli.grid_n.unwrap_or(cfg.engine.grid_n),
        quad_l: cli.quad_l.or(cfg.engine.quad_l),
        seed: cli.seed.unwrap_or(cfg.simulation.seed),
        out: cli.out,
        cfg,
        model,
    };

    match cli.cmd {
        Cmd::StripCurve => {
            let curve = ctx.stripped_curve()?;
            let mut csv = String::from("t_start,t_end,r0\n");
            let mut prev = 0.0;
            for (t, r) in curve.pillars.iter().zip(&curve.r0_segments) {
                csv.push_str(&format!("{prev},{t},{r:.10}\n"));
                prev = *t;
            }
            write_out(&ctx.out, "r0_segments.csv", &csv)?;
        }
        Cmd::PriceBond { maturities } => {
            let curve = ctx.stripped_curve()?;
            let mut csv = String::from("maturity_years,price\n");
            for t in maturities {
                csv.push_str(&format!("{t},{:.12}\n", bond_price(&curve, &ctx.model.rate, t)?));
            }
            write_out(&ctx.out, "bond_prices.csv", &csv)?;
        }
        Cmd::PriceCap { maturity, strike } => {
            let curve = ctx.stripped_curve()?;
            let proto = CapSpec::quarterly(maturity.maturity, 0.01, CapFloor::Cap);
            let k = match strike {
                Some(k) => k,
                None => atm_cap_strike(&curve, &ctx.model.rate, &proto.payment_dates)?,
            };
            let spec = CapSpec::quarterly(maturity.maturity, k, CapFloor::Cap);
            let price = cap_price(&curve, &ctx.model.rate, &spec)?;
            let vol = cap_implied_vol(&curve, &ctx.model.rate, &spec, price)?;
            let csv = format!(
                "maturity_years,strike,price,implied_vol\n{},{k:.8},{price:.10},{vol:.8}\n",
                maturity.maturity
            );
            write_out(&ctx.out, "cap_price.csv", &csv)?;
        }
        Cmd::PriceOption { maturity, strikes } => {
            let t = maturity.maturity;
            let curve = ctx.stripped_curve()?;
            let (forward, df) = ctx.forward_discount(&curve, t)?;
            let engine = build_engine(&ctx.model, t, ctx.grid_n)?;
            let req = OptionRequest {
                maturity: t,
                strikes: strikes.strikes.clone(),
                spot: ctx.cfg.model.spot,
                forward,
                discount: df,
            };
            let prices = lewis_call(&engine, &req, ctx.quad_level(t))?;
            let mut csv = String::from("strike,price,implied_vol\n");
            for (k, p) in strikes.strikes.iter().zip(&prices) {
                let iv = implied_vol(p / df, forward, *k, t, true)?;
                csv.push_str(&format!("{k},{p:.10},{iv:.8}\n"));
            }
            write_out(&ctx.out, "option_prices.csv", &csv)?;
        }
        Cmd::Charfn {
            maturity,
            u_max,
            points,
        } => {
            if points < 2 || u_max <= 0.0 {
                return Err(Error::Domain("need points >= 2 and u_max > 0".into()));
            }
            let engine = build_engine(&ctx.model, maturity.maturity, ctx.grid_n)?;
            let mut csv = String::from("u_im,re_phi,im_phi\n");
            for i in 0..points {
                let v = u_max * i as f64 / (points - 1) as f64;
                let phi = charfn(&engine, Complex64::new(0.5, v))?;
                csv.push_str(&format!("{v},{:.12e},{:.12e}\n", phi.re, phi.im));
            }
            write_out(&ctx.out, "charfn.csv", &csv)?;
        }
        Cmd::Smile {
            maturities,
            strikes,
        } => {
            let curve = ctx.stripped_curve()?;
            let mut csv = String::from("maturity_years,strike,implied_vol\n");
            for t in maturities {
                let (forward, df) = ctx.forward_discount(&curve, t)?;
                let engine = build_engine(&ctx.model, t, ctx.grid_n)?;
                let req = OptionRequest {
                    maturity: t,
                    strikes: strikes.strikes.clone(),
                    spot: ctx.cfg.model.spot,
                    forward,
                    discount: df,
                };
                let prices = lewis_call(&engine, &req, ctx.quad_level(t))?;
                for (k, p) in strikes.strikes.iter().zip(&prices) {
                    let iv = implied_vol(p / df, forward, *k, t, true)?;
                    csv.push_str(&format!("{t},{k},{iv:.8}\n"));
                }
            }
            write_out(&ctx.out, "smile.csv", &csv)?;
        }
        Cmd::AtmSkew { maturities, bump } => {
            let curve = ctx.stripped_curve()?;
            let mut csv = String::from("maturity_years,atm_skew\n");
            for t in maturities {
                let (forward, df) = ctx.forward_discount(&curve, t)?;
                let engine = build_engine(&ctx.model, t, ctx.grid_n)?;
                let skew = atm_skew(&engine, forward, df, t, bump, ctx.quad_level(t))?;
                csv.push_str(&format!("{t},{skew:.8}\n"));
            }
            write_out(&ctx.out, "atm_skew.csv", &csv)?;
        }
        Cmd::CalibrateRates {
            max_iters,
            restarts,
        } => {
            let market = ctx.market_curve()?;
            let quotes_path = ctx.cfg.files.cap_quotes.as_deref().ok_or_else(|| {
                Error::Config("config [files] has no `cap_quotes` entry".into())
            })?;
            let quotes = load_cap_quotes(Path::new(quotes_path))?;
            let opts = CalibOptions {
                max_iters,
                restarts,
                seed: ctx.seed,
                ..Default::default()
            };
            let (fitted, report) = calibrate_rates(&market, &quotes, &ctx.model.rate, &opts)?;
            write_report(&ctx.out, "rates_calibration", &report)?;
            println!(
                "fitted rate leg: kappa_r={:.6} eta_r={:.6} kernel={:?} (RMSE {:.4e})",
                fitted.kappa_r, fitted.eta_r, fitted.kernel, report.rmse
            );
        }
        Cmd::CalibrateEquity {
            max_iters,
            restarts,
        } => {
            let market = ctx.market_curve()?;
            let quotes_path = ctx.cfg.files.option_quotes.as_deref().ok_or_else(|| {
                Error::Config("config [files] has no `option_quotes` entry".into())
            })?;
            let quotes = load_option_quotes(Path::new(quotes_path))?;
            let opts = CalibOptions {
                max_iters,
                restarts,
                seed: ctx.seed,
                ..Default::default()
            };
            let (fitted, report) = calibrate_equity(
                &ctx.model.rate,
                &market,
                ctx.cfg.model.spot,
                &quotes,
                &ctx.model.equity,
                ctx.grid_n,
                &opts,
            )?;
            write_report(&ctx.out, "equity_calibration", &report)?;
            println!(
                "fitted equity leg: nu0={:.6} theta_nu={:.6} eta_nu={:.6} rho_i_nu={:.4} rho_i_r={:.4} kernel={:?} (RMSE {:.4e})",
                fitted.nu0, fitted.theta_nu, fitted.eta_nu, fitted.rho_i_nu, fitted.rho_i_r,
                fitted.kernel, report.rmse
            );
        }
        Cmd::Simulate { maturity, strikes } => {
            let t = maturity.maturity;
            let curve = ctx.stripped_curve()?;
            let (forward, df) = ctx.forward_discount(&curve, t)?;
            let sim = SimConfig {
                paths: ctx.cfg.simulation.paths,
                steps: ctx.cfg.simulation.steps,
                seed: ctx.seed,
                antithetic: ctx.cfg.simulation.antithetic,
            };
            // MC works in forward units; quoted strikes are spot-scale, so
            // forward strikes divide by the discount factor the same way.
            let result = simulate_equity(&ctx.model, t, &sim, &strikes.strikes, forward)?;
            let mut csv = String::from("strike,price,stderr,ci95_lower,ci95_upper\n");
            for i in 0..result.strikes.len() {
                csv.push_str(&format!(
                    "{},{:.10},{:.4e},{:.10},{:.10}\n",
                    result.strikes[i],
                    df * result.price_estimates[i],
                    df * result.standard_errors[i],
                    df * result.ci95_lower[i],
                    df * result.ci95_upper[i]
                ));
            }
            csv.push_str(&format!(
                "# terminal forward mean {:.6} (target {:.6}, stderr {:.4e})\n",
                result.terminal_forward_mean, forward, result.terminal_forward_stderr
            ));
            write_out(&ctx.out, "mc_prices.csv", &csv)?;
        }
        Cmd::CompareMethods {
            maturity,
            grid_sizes,
            factor_counts,
            steps,
        } => {
            let t = maturity.maturity;
            let curve = ctx.stripped_curve()?;
            let (forward, df) = ctx.forward_discount(&curve, t)?;
            let req = OptionRequest {
                maturity: t,
                strikes: vec![ctx.cfg.model.spot],
                spot: ctx.cfg.model.spot,
                forward,
                discount: df,
            };
            let level = ctx.quad_level(t);
            let mut csv = String::from("method,size,atm_vol,wall_ms\n");
            for n in grid_sizes {
                let clock = Instant::now();
                let engine = build_engine(&ctx.model, t, n)?;
                let price = lewis_call(&engine, &req, level)?[0];
                let iv = implied_vol(price / df, forward, ctx.cfg.model.spot, t, true)?;
                csv.push_str(&format!(
                    "operator,{n},{iv:.8},{:.2}\n",
                    clock.elapsed().as_secs_f64() * 1e3
                ));
            }
            for n_f in factor_counts {
                let clock = Instant::now();
                let factors = multifactor_reduce(&ctx.model.equity.kernel, n_f, t)?;
                let mut reduced = ctx.model.clone();
                reduced.equity.kernel = factors.to_kernel();
                let price =
                    lewis_call_with(|u| riccati_charfn(&reduced, t, u, steps), &req, level)?[0];
                let iv = implied_vol(price / df, forward, ctx.cfg.model.spot, t, true)?;
                csv.push_str(&format!(
                    "multifactor,{n_f},{iv:.8},{:.2}\n",
                    clock.elapsed().as_secs_f64() * 1e3
                ));
            }
            write_out(&ctx.out, "method_comparison.csv", &csv)?;
        }
    }
    Ok(())
}

fn write_report(
    out: &Path,
    stem: &str,
    report: &volterra_pricer::calibration::CalibReport,
) -> Result<()> {
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Config(format!("report serialization: {e}")))?;
    write_out(out, &format!("{stem}.json"), &json)?;
    let mut csv = String::from("maturity_years,strike,market_vol,model_vol,residual\n");
    for q in &report.quotes {
        let strike = q.strike.map_or(String::new(), |k| format!("{k}"));
        csv.push_str(&format!(
            "{},{strike},{:.8},{:.8},{:.4e}\n",
            q.maturity,
            q.market_vol,
            q.model_vol,
            q.model_vol - q.market_vol
        ));
    }
    write_out(out, &format!("{stem}_residuals.csv"), &csv)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
