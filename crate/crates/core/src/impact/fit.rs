use std::collections::BTreeMap;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::arma::{self, RegressionData};
use super::design::{build_design, Term};
use super::hac::{default_bandwidth, newey_west_cov};
use super::optim::{self, BfgsOptions};
use super::{Estimator, ImpactError, ImpactModel};
use crate::linalg;

/// Objective maximised over the ARMA parameters. Regression coefficients are
/// GLS given the ARMA parameters under both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Likelihood {
    /// Exact Gaussian likelihood.
    Full,
    /// Restricted likelihood of the error contrasts; removes the downward
    /// bias of the autoregressive estimates caused by the many dummies.
    #[default]
    Restricted,
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub likelihood: Likelihood,
    /// Extra optimizer runs from randomly perturbed starting points.
    pub restarts: usize,
    /// Seed of the restart perturbations.
    pub seed: u64,
    pub bfgs: BfgsOptions,
    /// Newey–West bandwidth for OLS + HAC; `None` uses the automatic rule.
    pub hac_bandwidth: Option<usize>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            likelihood: Likelihood::default(),
            restarts: 3,
            seed: 0x5EED_A12A,
            bfgs: BfgsOptions::default(),
            hac_bandwidth: None,
        }
    }
}

/// Output of the ARMA maximum-likelihood search for a given regression.
#[derive(Debug, Clone)]
pub(crate) struct MlArmaFit {
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub gls: arma::GlsFit,
    /// Covariance of (φ, θ) from the inverse observed information.
    pub arma_cov: DMatrix<f64>,
    pub grad_norm: f64,
    pub converged: bool,
}

/// Yule–Walker AR(p) fit; returns partial autocorrelations.
fn yule_walker_pacf(u: &[f64], p: usize) -> Vec<f64> {
    let n = u.len();
    let c0: f64 = u.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if p == 0 || c0 <= 0.0 {
        return vec![0.0; p];
    }
    let rho: Vec<f64> = (0..=p).map(|h| (h..n).map(|t| u[t] * u[t - h]).sum::<f64>() / n as f64 / c0).collect();
    let mut phi: Vec<f64> = Vec::new();
    let mut pacf = Vec::with_capacity(p);
    let mut v = 1.0;
    for k in 1..=p {
        let num = rho[k] - (1..k).map(|j| phi[j - 1] * rho[k - j]).sum::<f64>();
        let a = if v > 0.0 { num / v } else { 0.0 };
        let prev = phi.clone();
        for j in 1..k {
            phi[j - 1] = prev[j - 1] - a * prev[k - j - 1];
        }
        phi.push(a);
        v *= 1.0 - a * a;
        pacf.push(a);
    }
    pacf
}

fn ar_residuals(u: &[f64], phi: &[f64]) -> Vec<f64> {
    let p = phi.len();
    (0..u.len())
        .map(|t| if t < p { 0.0 } else { u[t] - phi.iter().enumerate().map(|(j, ph)| ph * u[t - j - 1]).sum::<f64>() })
        .collect()
}

/// Starting values in unconstrained coordinates (Hannan–Rissanen).
fn initial_values(u: &[f64], p: usize, q: usize) -> Vec<f64> {
    const CLAMP: f64 = 0.95;
    let yw = |order: usize| -> Vec<f64> {
        yule_walker_pacf(u, order).into_iter().map(|r| r.clamp(-CLAMP, CLAMP).atanh()).collect()
    };
    if q == 0 {
        return yw(p);
    }
    let n = u.len();
    let long = (p + q + 5).max(10).min(n / 10).max(1);
    let long_phi = arma::pacf_to_ar(&yule_walker_pacf(u, long));
    let e = ar_residuals(u, &long_phi);
    let start = long + q.max(p);
    let rows = n.saturating_sub(start);
    let fallback = || {
        let mut v = yw(p);
        v.extend(std::iter::repeat_n(0.0, q));
        v
    };
    if rows <= 2 * (p + q) {
        return fallback();
    }
    let x = DMatrix::from_fn(rows, p + q, |i, j| {
        let t = start + i;
        if j < p {
            u[t - j - 1]
        } else {
            e[t - (j - p) - 1]
        }
    });
    let y = DVector::from_fn(rows, |i, _| u[start + i]);
    match linalg::ols(&x, &y) {
        Ok(fit) => {
            let phi: Vec<f64> = (0..p).map(|j| fit.coef[j]).collect();
            let theta: Vec<f64> = (0..q).map(|j| fit.coef[p + j]).collect();
            arma::arma_to_unconstrained(&phi, &theta, CLAMP).unwrap_or_else(fallback)
        }
        Err(_) => fallback(),
    }
}

/// Maximum-likelihood ARMA(p, q) for the regression in `data`, started from
/// the OLS residuals `resid`.
pub(crate) fn ml_arma(
    data: &RegressionData,
    resid: &[f64],
    p: usize,
    q: usize,
    options: &FitOptions,
) -> Result<MlArmaFit, ImpactError> {
    let n = data.n as f64;
    let objective = |u: &[f64]| -> f64 {
        let (phi, theta) = arma::unconstrained_to_arma(u, p, q);
        let ll = arma::gls_fit(&phi, &theta, data).map(|g| match options.likelihood {
            Likelihood::Full => g.loglik,
            Likelihood::Restricted => g.restricted_loglik(data.n),
        });
        match ll {
            Some(v) if v.is_finite() => -v / n,
            _ => f64::INFINITY,
        }
    };

    let x0 = initial_values(resid, p, q);
    let mut best = optim::minimize(objective, &x0, options.bfgs);
    if p + q > 0 {
        for r in 0..options.restarts {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            rng.set_stream(r as u64 + 1);
            let start: Vec<f64> = x0.iter().map(|v| v + 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
            let cand = optim::minimize(objective, &start, options.bfgs);
            let better = cand.f < best.f - 1e-12 || (!best.converged && cand.converged && cand.f <= best.f + 1e-9);
            if better {
                best = cand;
            }
        }
    }
    let (phi, theta) = arma::unconstrained_to_arma(&best.x, p, q);
    let gls = arma::gls_fit(&phi, &theta, data).ok_or(ImpactError::StationarityViolation)?;

    // observed information in unconstrained coordinates, mapped to (φ, θ)
    let dim = p + q;
    let arma_cov = if dim == 0 {
        DMatrix::zeros(0, 0)
    } else {
        let h = optim::numerical_hessian(&objective, &best.x, 1e-4);
        let info = DMatrix::from_fn(dim, dim, |i, j| h[i][j] * n);
        let cov_u = linalg::regularized_sym_inverse(&info, 1e-12);
        let jac = {
            let step = 1e-6;
            let mut jm = DMatrix::zeros(dim, dim);
            let mut xp = best.x.clone();
            for c in 0..dim {
                let orig = xp[c];
                xp[c] = orig + step;
                let (a1, m1) = arma::unconstrained_to_arma(&xp, p, q);
                xp[c] = orig - step;
                let (a2, m2) = arma::unconstrained_to_arma(&xp, p, q);
                xp[c] = orig;
                let plus: Vec<f64> = a1.into_iter().chain(m1).collect();
                let minus: Vec<f64> = a2.into_iter().chain(m2).collect();
                for r in 0..dim {
                    jm[(r, c)] = (plus[r] - minus[r]) / (2.0 * step);
                }
            }
            jm
        };
        &jac * cov_u * jac.transpose()
    };
    Ok(MlArmaFit { phi, theta, gls, arma_cov, grad_norm: best.grad_norm, converged: best.converged })
}

fn near_boundary(phi: &[f64], theta: &[f64]) -> bool {
    let margin = 1.0 - 1e-7;
    let ar = arma::ar_to_pacf(phi);
    let neg: Vec<f64> = theta.iter().map(|t| -t).collect();
    let ma = arma::ar_to_pacf(&neg);
    match (ar, ma) {
        (Some(a), Some(m)) => a.iter().chain(&m).any(|r| r.abs() > margin),
        _ => true,
    }
}

/// Fit the impact model to the prefiltered series.
pub fn fit_impact_model(
    adjusted: &[(NaiveDate, f64)],
    order: (usize, usize),
    estimator: Estimator,
    shock_year: i32,
    options: &FitOptions,
) -> Result<ImpactModel, ImpactError> {
    let design = build_design(adjusted, shock_year)?;
    let n = design.y.len();
    let k = design.terms.len();
    if n <= k + order.0 + order.1 {
        return Err(ImpactError::Invalid(format!("{n} observations for {k} regressors")));
    }
    let y = DVector::from_column_slice(&design.y);
    let ols = linalg::ols(&design.x, &y)?;
    let yy = y.norm_squared();
    let degenerate = ols.ssr <= 1e-24 * (n as f64) || ols.ssr <= 1e-26 * yy;
    let (p, q) = order;

    let (beta, beta_cov, phi, theta, sigma2, arma_cov, loglik, retransform, innovations, grad_norm, bandwidth) =
        if degenerate {
            let dim = p + q;
            (
                ols.coef.as_slice().to_vec(),
                DMatrix::zeros(k, k),
                vec![0.0; p],
                vec![0.0; q],
                0.0,
                DMatrix::zeros(dim, dim),
                None,
                0.0,
                vec![0.0; n],
                0.0,
                None,
            )
        } else {
            match estimator {
                Estimator::OlsHac => {
                    let bw = options.hac_bandwidth.unwrap_or_else(|| default_bandwidth(n));
                    let cov = newey_west_cov(&design.x, &ols.residuals, Some(bw))?;
                    let s2 = ols.sigma2;
                    (
                        ols.coef.as_slice().to_vec(),
                        cov,
                        Vec::new(),
                        Vec::new(),
                        s2,
                        DMatrix::zeros(0, 0),
                        None,
                        s2,
                        ols.residuals.as_slice().to_vec(),
                        0.0,
                        Some(bw),
                    )
                }
                Estimator::MlArma => {
                    let data = RegressionData::new(&design.x, &design.y);
                    let ml = ml_arma(&data, ols.residuals.as_slice(), p, q, options)?;
                    if near_boundary(&ml.phi, &ml.theta) {
                        return Err(ImpactError::StationarityViolation);
                    }
                    let df = (n - k) as f64;
                    let beta_cov = &ml.gls.xtx_inv * (ml.gls.ssr / df);
                    let beta: Vec<f64> = ml.gls.beta.as_slice().to_vec();
                    let resid: Vec<f64> =
                        (0..n).map(|i| design.y[i] - (0..k).map(|j| design.x[(i, j)] * beta[j]).sum::<f64>()).collect();
                    let innov = arma::standardized_innovations(&ml.phi, &ml.theta, &resid)
                        .ok_or(ImpactError::StationarityViolation)?;
                    let uncond = arma::ArmaStateSpace::new(&ml.phi, &ml.theta)
                        .ok_or(ImpactError::StationarityViolation)?
                        .unconditional_variance();
                    let s2 = match options.likelihood {
                        Likelihood::Full => ml.gls.sigma2,
                        Likelihood::Restricted => ml.gls.ssr / df,
                    };
                    let fit = (
                        beta,
                        beta_cov,
                        ml.phi.clone(),
                        ml.theta.clone(),
                        s2,
                        ml.arma_cov.clone(),
                        Some(ml.gls.loglik),
                        s2 * uncond,
                        innov,
                        ml.grad_norm,
                        None,
                    );
                    if !ml.converged {
                        let model = assemble(&design, estimator, shock_year, order, fit, &y);
                        return Err(ImpactError::NonConvergence { grad_norm: ml.grad_norm, best: Box::new(model) });
                    }
                    fit
                }
            }
        };
    Ok(assemble(
        &design,
        estimator,
        shock_year,
        order,
        (beta, beta_cov, phi, theta, sigma2, arma_cov, loglik, retransform, innovations, grad_norm, bandwidth),
        &y,
    ))
}

type FitParts =
    (Vec<f64>, DMatrix<f64>, Vec<f64>, Vec<f64>, f64, DMatrix<f64>, Option<f64>, f64, Vec<f64>, f64, Option<usize>);

fn assemble(
    design: &super::ImpactDesign,
    estimator: Estimator,
    shock_year: i32,
    order: (usize, usize),
    parts: FitParts,
    y: &DVector<f64>,
) -> ImpactModel {
    let (beta, beta_cov, phi, theta, sigma2, arma_cov, loglik, retransform_var, innovations, grad_norm, bandwidth) =
        parts;
    let k = beta.len();
    let a = arma_cov.nrows();
    let with_sigma = estimator == Estimator::MlArma;
    let dim = k + a + usize::from(with_sigma);
    let mut cov = DMatrix::zeros(dim, dim);
    cov.view_mut((0, 0), (k, k)).copy_from(&beta_cov);
    if a > 0 {
        cov.view_mut((k, k), (a, a)).copy_from(&arma_cov);
    }
    if with_sigma {
        cov[(dim - 1, dim - 1)] = 2.0 * sigma2 * sigma2 / design.y.len() as f64;
    }

    let mut beta0 = 0.0;
    let mut gamma = BTreeMap::new();
    let mut gamma_star = BTreeMap::new();
    let baseline = design
        .dates
        .iter()
        .map(|d| crate::calendar::week_of_year(*d))
        .find(|w| !design.terms.contains(&Term::Week(*w)));
    if let Some(w) = baseline {
        gamma.insert(w, 0.0);
    }
    for (t, b) in design.terms.iter().zip(&beta) {
        match t {
            Term::Intercept => beta0 = *b,
            Term::Week(w) => {
                gamma.insert(*w, *b);
            }
            Term::ShockWeek(w) => {
                gamma_star.insert(*w, *b);
            }
        }
    }
    let fitted = &design.x * DVector::from_column_slice(&beta);
    let residuals = design.dates.iter().zip((y - fitted).iter()).map(|(d, r)| (*d, *r)).collect();
    ImpactModel {
        estimator,
        shock_year,
        order,
        terms: design.terms.clone(),
        beta,
        beta0,
        gamma,
        gamma_star,
        phi,
        theta,
        sigma2,
        param_cov: cov,
        loglik,
        n_obs: design.y.len(),
        retransform_var,
        residuals,
        innovations,
        dropped_terms: design.dropped.iter().map(|t| t.to_string()).collect(),
        grad_norm,
        hac_bandwidth: bandwidth,
    }
}
