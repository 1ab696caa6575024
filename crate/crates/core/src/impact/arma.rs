//! Exact Gaussian likelihood of a linear regression with ARMA(p, q) errors.
//!
//! The error process is cast in state-space form with state dimension
//! `r = max(p, q + 1)`:
//!
//! ```text
//! u_t       = x_t[0]
//! x_{t+1}   = T x_t + R ε_{t+1},   T = [φ | shift],  R = (1, θ_1, …, θ_{r-1})ᵀ
//! ```
//!
//! The Kalman filter runs once over the response and all regressor columns
//! together (the gain does not depend on the data), which turns the
//! likelihood into a GLS problem: β and σ² are concentrated out and only the
//! ARMA coefficients are searched over numerically.

use nalgebra::{DMatrix, DVector};

/// Partial autocorrelations in (-1, 1) to the coefficients of a stationary
/// AR polynomial `1 - φ_1 z - … - φ_p z^p` (Durbin–Levinson).
pub fn pacf_to_ar(pacf: &[f64]) -> Vec<f64> {
    let mut phi: Vec<f64> = Vec::with_capacity(pacf.len());
    for (k, &rho) in pacf.iter().enumerate() {
        let prev = phi.clone();
        for j in 0..k {
            phi[j] = prev[j] - rho * prev[k - 1 - j];
        }
        phi.push(rho);
    }
    phi
}

/// Inverse of [`pacf_to_ar`]; `None` when the polynomial is not stationary.
pub fn ar_to_pacf(phi: &[f64]) -> Option<Vec<f64>> {
    let p = phi.len();
    let mut cur = phi.to_vec();
    let mut pacf = vec![0.0; p];
    for k in (0..p).rev() {
        let rho = cur[k];
        if !rho.is_finite() || rho.abs() >= 1.0 {
            return None;
        }
        pacf[k] = rho;
        let denom = 1.0 - rho * rho;
        let prev: Vec<f64> = (0..k).map(|j| (cur[j] + rho * cur[k - 1 - j]) / denom).collect();
        cur = prev;
    }
    Some(pacf)
}

/// All roots of `1 - Σ φ_j z^j` lie outside the unit circle.
pub fn is_stationary(phi: &[f64]) -> bool {
    ar_to_pacf(phi).is_some()
}

/// All roots of `1 + Σ θ_j z^j` lie outside the unit circle.
pub fn is_invertible(theta: &[f64]) -> bool {
    let neg: Vec<f64> = theta.iter().map(|t| -t).collect();
    is_stationary(&neg)
}

/// Map unconstrained coordinates to (φ, θ) in the stationary/invertible
/// region: `tanh` onto partial autocorrelations, then Durbin–Levinson.
pub fn unconstrained_to_arma(u: &[f64], p: usize, q: usize) -> (Vec<f64>, Vec<f64>) {
    debug_assert_eq!(u.len(), p + q);
    let phi = pacf_to_ar(&u[..p].iter().map(|v| v.tanh()).collect::<Vec<_>>());
    let theta = pacf_to_ar(&u[p..].iter().map(|v| v.tanh()).collect::<Vec<_>>()).into_iter().map(|v| -v).collect();
    (phi, theta)
}

/// Inverse of [`unconstrained_to_arma`] with partial autocorrelations clamped
/// to ±`clamp`; `None` outside the admissible region.
pub fn arma_to_unconstrained(phi: &[f64], theta: &[f64], clamp: f64) -> Option<Vec<f64>> {
    let ar = ar_to_pacf(phi)?;
    let neg: Vec<f64> = theta.iter().map(|t| -t).collect();
    let ma = ar_to_pacf(&neg)?;
    Some(ar.into_iter().chain(ma).map(|r| r.clamp(-clamp, clamp).atanh()).collect())
}

/// Time-invariant state-space form of an ARMA(p, q) process with unit
/// innovation variance.
#[derive(Debug, Clone)]
pub struct ArmaStateSpace {
    r: usize,
    /// First column of T, padded with zeros to length r.
    phi: Vec<f64>,
    /// R = (1, θ_1, …), padded to length r.
    rvec: Vec<f64>,
    /// Stationary state covariance.
    p0: Vec<f64>,
}

impl ArmaStateSpace {
    pub fn new(phi: &[f64], theta: &[f64]) -> Option<Self> {
        let r = phi.len().max(theta.len() + 1);
        let mut phi_pad = vec![0.0; r];
        phi_pad[..phi.len()].copy_from_slice(phi);
        let mut rvec = vec![0.0; r];
        rvec[0] = 1.0;
        rvec[1..=theta.len()].copy_from_slice(theta);
        let p0 = stationary_covariance(&phi_pad, &rvec)?;
        Some(ArmaStateSpace { r, phi: phi_pad, rvec, p0 })
    }

    /// Unconditional variance of the process per unit innovation variance.
    pub fn unconditional_variance(&self) -> f64 {
        self.p0[0]
    }

    /// Autocovariances γ(0..=max_lag) per unit innovation variance, from
    /// γ(h) = [Tʰ P₀]₀₀.
    pub fn autocovariances(&self, max_lag: usize) -> Vec<f64> {
        let r = self.r;
        let mut v: Vec<f64> = (0..r).map(|i| self.p0[i * r]).collect();
        let mut out = Vec::with_capacity(max_lag + 1);
        for _ in 0..=max_lag {
            out.push(v[0]);
            let head = v[0];
            v = (0..r).map(|i| self.phi[i] * head + v.get(i + 1).copied().unwrap_or(0.0)).collect();
        }
        out
    }
}

/// Solve `P = T P Tᵀ + R Rᵀ` through the vectorised linear system.
fn stationary_covariance(phi: &[f64], rvec: &[f64]) -> Option<Vec<f64>> {
    let r = phi.len();
    let t = DMatrix::from_fn(r, r, |i, j| {
        let mut v = if j == 0 { phi[i] } else { 0.0 };
        if j == i + 1 {
            v += 1.0;
        }
        v
    });
    let n = r * r;
    let kron = t.kronecker(&t);
    let a = DMatrix::identity(n, n) - kron;
    let rr = DVector::from_fn(n, |idx, _| {
        // column-major vec: idx = i + j * r
        let (i, j) = (idx % r, idx / r);
        rvec[i] * rvec[j]
    });
    let sol = a.lu().solve(&rr)?;
    let mut p = vec![0.0; n];
    for i in 0..r {
        for j in 0..r {
            p[i * r + j] = 0.5 * (sol[i + j * r] + sol[j + i * r]);
        }
    }
    if !(p[0].is_finite() && p[0] > 0.0) {
        return None;
    }
    Some(p)
}

/// Regression data in row-major layout: `k` regressor columns followed by the
/// response in the last column.
#[derive(Debug, Clone)]
pub struct RegressionData {
    pub n: usize,
    pub k: usize,
    rows: Vec<f64>,
}

impl RegressionData {
    pub fn new(x: &DMatrix<f64>, y: &[f64]) -> Self {
        assert_eq!(x.nrows(), y.len());
        let (n, k) = (x.nrows(), x.ncols());
        let m = k + 1;
        let mut rows = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..k {
                rows[i * m + j] = x[(i, j)];
            }
            rows[i * m + k] = y[i];
        }
        RegressionData { n, k, rows }
    }

    fn width(&self) -> usize {
        self.k + 1
    }
}

/// Result of filtering the regression data through an ARMA model.
#[derive(Debug, Clone)]
pub struct GlsFit {
    /// Concentrated log-likelihood.
    pub loglik: f64,
    /// GLS coefficients.
    pub beta: DVector<f64>,
    /// `(X̃ᵀX̃)⁻¹` of the whitened regressors.
    pub xtx_inv: DMatrix<f64>,
    pub ssr: f64,
    /// ML innovation variance, `ssr / n`.
    pub sigma2: f64,
    pub sum_log_f: f64,
    /// `ln det(X̃ᵀX̃)`.
    pub log_det_xtx: f64,
}

impl GlsFit {
    /// Restricted (residual) log-likelihood with σ² concentrated out at
    /// `ssr / (n − k)`, up to an additive constant.
    pub fn restricted_loglik(&self, n: usize) -> f64 {
        let k = self.beta.len();
        let df = n.saturating_sub(k) as f64;
        if self.ssr <= 0.0 || df <= 0.0 {
            return f64::INFINITY;
        }
        -0.5 * df * (self.ssr / df).ln() - 0.5 * self.sum_log_f - 0.5 * self.log_det_xtx
    }
}

/// Kalman filter over every column of `data` at once. Calls `visit` with the
/// standardised innovation row of each time step; returns Σ ln F_t.
fn kalman_pass(ss: &ArmaStateSpace, data: &RegressionData, mut visit: impl FnMut(&[f64])) -> f64 {
    let r = ss.r;
    let m = data.width();
    let mut a = vec![0.0; r * m];
    let mut a_next = vec![0.0; r * m];
    let mut p = ss.p0.clone();
    let mut p_next = vec![0.0; r * r];
    let mut tp = vec![0.0; r * r];
    let mut k = vec![0.0; r];
    let mut w = vec![0.0; m];
    let mut steady = false;
    let mut sum_log_f = 0.0;

    for t in 0..data.n {
        let f = p[0];
        let row = &data.rows[t * m..(t + 1) * m];
        let sf = f.sqrt();
        for j in 0..m {
            let v = row[j] - a[j];
            w[j] = v;
        }
        // gain K = T P e1 / F
        for i in 0..r {
            let below = if i + 1 < r { p[(i + 1) * r] } else { 0.0 };
            k[i] = (ss.phi[i] * p[0] + below) / f;
        }
        for i in 0..r {
            let (phi_i, k_i) = (ss.phi[i], k[i]);
            let dst = &mut a_next[i * m..(i + 1) * m];
            if i + 1 < r {
                let (a0, a_below) = (&a[0..m], &a[(i + 1) * m..(i + 2) * m]);
                for j in 0..m {
                    dst[j] = phi_i * a0[j] + a_below[j] + k_i * w[j];
                }
            } else {
                let a0 = &a[0..m];
                for j in 0..m {
                    dst[j] = phi_i * a0[j] + k_i * w[j];
                }
            }
        }
        std::mem::swap(&mut a, &mut a_next);
        for v in w.iter_mut() {
            *v /= sf;
        }
        visit(&w);
        sum_log_f += f.ln();

        if !steady {
            // TP
            for i in 0..r {
                for l in 0..r {
                    let below = if i + 1 < r { p[(i + 1) * r + l] } else { 0.0 };
                    tp[i * r + l] = ss.phi[i] * p[l] + below;
                }
            }
            let mut delta = 0.0f64;
            for i in 0..r {
                for j in 0..r {
                    let below = if j + 1 < r { tp[i * r + j + 1] } else { 0.0 };
                    let v = ss.phi[j] * tp[i * r] + below + ss.rvec[i] * ss.rvec[j] - k[i] * k[j] * f;
                    p_next[i * r + j] = v;
                    delta = delta.max((v - p[i * r + j]).abs());
                }
            }
            std::mem::swap(&mut p, &mut p_next);
            if delta < 1e-13 {
                steady = true;
            }
        }
    }
    sum_log_f
}

/// Concentrated GLS likelihood for the given ARMA coefficients. `None` when
/// the coefficients are outside the admissible region or the whitened
/// regressors are singular.
pub fn gls_fit(phi: &[f64], theta: &[f64], data: &RegressionData) -> Option<GlsFit> {
    let ss = ArmaStateSpace::new(phi, theta)?;
    let m = data.width();
    let mut cross = vec![0.0; m * m];
    let sum_log_f = kalman_pass(&ss, data, |w| {
        for i in 0..m {
            let wi = w[i];
            if wi == 0.0 {
                continue;
            }
            let row = &mut cross[i * m..i * m + i + 1];
            for (c, wj) in row.iter_mut().zip(w) {
                *c += wi * wj;
            }
        }
    });
    let full = DMatrix::from_fn(m, m, |i, j| if j <= i { cross[i * m + j] } else { cross[j * m + i] });
    let k = data.k;
    let chol = full.clone().cholesky();
    let (ssr, beta, xtx_inv, log_det_xtx) = match chol {
        Some(c) => {
            let l = c.l();
            let ssr = l[(k, k)] * l[(k, k)];
            let xtx = full.view((0, 0), (k, k)).into_owned();
            let xty = DVector::from_fn(k, |j, _| full[(k, j)]);
            let cx = xtx.cholesky()?;
            let beta = cx.solve(&xty);
            let log_det = 2.0 * cx.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            (ssr, beta, cx.inverse(), log_det)
        }
        None => {
            // response in the column span of X (exact fit)
            let xtx = full.view((0, 0), (k, k)).into_owned();
            let xty = DVector::from_fn(k, |j, _| full[(k, j)]);
            let cx = xtx.cholesky()?;
            let beta = cx.solve(&xty);
            let ssr = (full[(k, k)] - xty.dot(&beta)).max(0.0);
            let log_det = 2.0 * cx.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            (ssr, beta, cx.inverse(), log_det)
        }
    };
    let n = data.n as f64;
    let sigma2 = ssr / n;
    let loglik = if sigma2 > 0.0 {
        -0.5 * n * ((2.0 * std::f64::consts::PI).ln() + 1.0 + sigma2.ln()) - 0.5 * sum_log_f
    } else {
        f64::INFINITY
    };
    Some(GlsFit { loglik, beta, xtx_inv, ssr, sigma2, sum_log_f, log_det_xtx })
}

/// Standardised one-step innovations of `y - Xβ` under the ARMA model.
pub fn standardized_innovations(phi: &[f64], theta: &[f64], resid: &[f64]) -> Option<Vec<f64>> {
    let ss = ArmaStateSpace::new(phi, theta)?;
    let data = RegressionData { n: resid.len(), k: 0, rows: resid.to_vec() };
    let mut out = Vec::with_capacity(resid.len());
    kalman_pass(&ss, &data, |w| out.push(w[0]));
    Some(out)
}

/// Simulate an ARMA path of length `n` driven by `shocks` (length `n + burn`).
pub fn simulate(phi: &[f64], theta: &[f64], shocks: &[f64], burn: usize) -> Vec<f64> {
    let total = shocks.len();
    let mut u = vec![0.0; total];
    for t in 0..total {
        let mut v = shocks[t];
        for (j, ph) in phi.iter().enumerate() {
            if t > j {
                v += ph * u[t - j - 1];
            }
        }
        for (j, th) in theta.iter().enumerate() {
            if t > j {
                v += th * shocks[t - j - 1];
            }
        }
        u[t] = v;
    }
    u.split_off(burn.min(total))
}
