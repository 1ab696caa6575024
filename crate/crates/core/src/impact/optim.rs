//! Small dense BFGS minimiser with central-difference gradients.

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub f_tol: f64,
    pub fd_step: f64,
    /// Largest step length in the unconstrained coordinates.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions { max_iter: 200, grad_tol: 1e-6, f_tol: 1e-13, fd_step: 1e-5, max_step: 2.0 }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn numerical_gradient(f: &impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = xp[i];
            xp[i] = orig + h;
            let fp = f(&xp);
            xp[i] = orig - h;
            let fm = f(&xp);
            xp[i] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Hessian.
pub fn numerical_hessian(f: &impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut hess = vec![vec![0.0; n]; n];
    let mut xp = x.to_vec();
    let f0 = f(x);
    for i in 0..n {
        for j in i..n {
            let v = if i == j {
                xp[i] = x[i] + h;
                let fp = f(&xp);
                xp[i] = x[i] - h;
                let fm = f(&xp);
                xp[i] = x[i];
                (fp - 2.0 * f0 + fm) / (h * h)
            } else {
                let mut eval = |di: f64, dj: f64| {
                    xp[i] = x[i] + di;
                    xp[j] = x[j] + dj;
                    let v = f(&xp);
                    xp[i] = x[i];
                    xp[j] = x[j];
                    v
                };
                (eval(h, h) - eval(h, -h) - eval(-h, h) + eval(-h, -h)) / (4.0 * h * h)
            };
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    hess
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimise `f` from `x0`. Non-finite objective values are treated as +∞ by
/// the line search.
pub fn minimize(f: impl Fn(&[f64]) -> f64, x0: &[f64], opts: BfgsOptions) -> BfgsResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    if n == 0 {
        return BfgsResult { x, f: fx, grad_norm: 0.0, iterations: 0, converged: fx.is_finite() };
    }
    let mut g = numerical_gradient(&f, &x, opts.fd_step);
    let mut h_inv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(i == j)).collect()).collect();
    let mut iterations = 0;

    while iterations < opts.max_iter {
        let gn = norm(&g);
        if gn < opts.grad_tol {
            return BfgsResult { x, f: fx, grad_norm: gn, iterations, converged: true };
        }
        iterations += 1;
        let mut d: Vec<f64> = (0..n).map(|i| -dot(&h_inv[i], &g)).collect();
        if dot(&d, &g) >= 0.0 {
            for (i, row) in h_inv.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = f64::from(i == j);
                }
            }
            d = g.iter().map(|v| -v).collect();
        }
        let dn = norm(&d);
        if dn > opts.max_step {
            d.iter_mut().for_each(|v| *v *= opts.max_step / dn);
        }
        let slope = dot(&d, &g);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            let fn_ = f(&xn);
            if fn_.is_finite() && fn_ <= fx + 1e-4 * step * slope {
                accepted = Some((xn, fn_));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_)) = accepted else {
            // no decrease along the search direction: stationary to working precision
            return BfgsResult { x, f: fx, grad_norm: gn, iterations, converged: gn < 1e-4 };
        };
        let gn_vec = numerical_gradient(&f, &xn, opts.fd_step);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn_vec.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        let f_change = (fx - fn_).abs();
        x = xn;
        let f_prev = fx;
        fx = fn_;
        g = gn_vec;
        if sy > 1e-12 * norm(&s) * norm(&yv) {
            let hy: Vec<f64> = (0..n).map(|i| dot(&h_inv[i], &yv)).collect();
            let yhy = dot(&yv, &hy);
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    h_inv[i][j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
                }
            }
        }
        if f_change <= opts.f_tol * (1.0 + f_prev.abs()) && norm(&g) < 1e-4 {
            return BfgsResult { x, f: fx, grad_norm: norm(&g), iterations, converged: true };
        }
    }
    let gn = norm(&g);
    BfgsResult { x, f: fx, grad_norm: gn, iterations, converged: gn < opts.grad_tol * 100.0 }
}
