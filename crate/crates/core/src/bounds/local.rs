//! Box-constrained local maximisation.
//!
//! Quasi-Newton (BFGS) ascent with central-difference gradients. Interval
//! coordinates are projected back into their box after every step and the
//! coordinates pinned at a bound with an outward gradient are frozen for the
//! step. Periodic coordinates move freely and are wrapped into their period
//! on return.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    Interval(f64, f64),
    Periodic(f64, f64),
}

impl Domain {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            Domain::Interval(lo, hi) | Domain::Periodic(lo, hi) => (lo, hi),
        }
    }

    fn project(self, x: f64) -> f64 {
        match self {
            Domain::Interval(lo, hi) => x.clamp(lo, hi),
            Domain::Periodic(..) => x,
        }
    }

    pub fn wrap(self, x: f64) -> f64 {
        match self {
            Domain::Interval(lo, hi) => x.clamp(lo, hi),
            Domain::Periodic(lo, hi) => lo + (x - lo).rem_euclid(hi - lo),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalSettings {
    /// Projected-gradient tolerance.
    pub tol: f64,
    pub max_iter: usize,
    /// Finite-difference step.
    pub fd_step: f64,
    /// Largest coordinate change per step.
    pub max_step: f64,
}

impl Default for LocalSettings {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 200,
            fd_step: 1e-6,
            max_step: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn gradient<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    x: &[f64],
    fx: f64,
    domains: &[Domain],
    h: f64,
    buf: &mut [f64],
    g: &mut [f64],
) {
    buf.copy_from_slice(x);
    for i in 0..x.len() {
        let xi = x[i];
        let (up, down) = match domains[i] {
            Domain::Interval(lo, hi) => (xi + h <= hi, xi - h >= lo),
            Domain::Periodic(..) => (true, true),
        };
        let mut eval = |v: f64| {
            buf[i] = v;
            let r = f(buf);
            buf[i] = xi;
            r
        };
        let d = match (up, down) {
            (true, true) => (eval(xi + h) - eval(xi - h)) / (2.0 * h),
            (true, false) => (eval(xi + h) - fx) / h,
            (false, true) => (fx - eval(xi - h)) / h,
            (false, false) => 0.0,
        };
        g[i] = if d.is_finite() { d } else { 0.0 };
    }
}

/// Maximises `f` from `x0`.
pub fn maximize<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    domains: &[Domain],
    s: &LocalSettings,
) -> LocalResult {
    let n = x0.len();
    let mut x: Vec<f64> = x0
        .iter()
        .zip(domains)
        .map(|(&v, d)| d.project(v))
        .collect();
    let mut fx = f(&x);
    if !fx.is_finite() {
        return LocalResult {
            x,
            value: fx,
            iterations: 0,
            converged: false,
        };
    }

    let mut buf = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut xt = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut free = vec![true; n];
    let mut h = identity(n);
    gradient(&mut f, &x, fx, domains, s.fd_step, &mut buf, &mut g);

    let mut iterations = 0;
    let mut converged = false;
    while iterations < s.max_iter {
        iterations += 1;
        let mut pg = 0.0f64;
        for i in 0..n {
            free[i] = match domains[i] {
                Domain::Interval(lo, hi) => {
                    !((x[i] <= lo && g[i] < 0.0) || (x[i] >= hi && g[i] > 0.0))
                }
                Domain::Periodic(..) => true,
            };
            if free[i] {
                pg = pg.max(g[i].abs());
            }
        }
        if pg < s.tol {
            converged = true;
            break;
        }

        let mut slope = 0.0;
        for i in 0..n {
            d[i] = 0.0;
            if free[i] {
                for j in 0..n {
                    if free[j] {
                        d[i] += h[i * n + j] * g[j];
                    }
                }
                slope += d[i] * g[i];
            }
        }
        if !(slope > 0.0) {
            h = identity(n);
            for i in 0..n {
                d[i] = if free[i] { g[i] } else { 0.0 };
            }
        }
        let big = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if big > s.max_step {
            d.iter_mut().for_each(|v| *v *= s.max_step / big);
        }

        let mut t = 1.0;
        let mut ft;
        loop {
            let mut gain = 0.0;
            for i in 0..n {
                xt[i] = domains[i].project(x[i] + t * d[i]);
                gain += g[i] * (xt[i] - x[i]);
            }
            ft = f(&xt);
            if ft.is_finite() && ft >= fx + 1e-4 * gain {
                break;
            }
            t *= 0.5;
            if t < 1e-10 {
                break;
            }
        }
        if !(ft.is_finite() && ft >= fx) {
            // No ascent along the quasi-Newton direction: retry once from a
            // plain gradient step, otherwise stop.
            if h.iter().enumerate().all(|(k, &v)| v == if k % (n + 1) == 0 { 1.0 } else { 0.0 }) {
                converged = true;
                break;
            }
            h = identity(n);
            continue;
        }

        gradient(&mut f, &xt, ft, domains, s.fd_step, &mut buf, &mut g_new);
        // BFGS update of the inverse Hessian of −f.
        let mut sy = 0.0;
        let mut yy = 0.0;
        let mut ss = 0.0;
        for i in 0..n {
            let si = xt[i] - x[i];
            let yi = g[i] - g_new[i];
            sy += si * yi;
            yy += yi * yi;
            ss += si * si;
        }
        if sy > 1e-12 * (ss * yy).sqrt() && sy > 0.0 {
            bfgs_update(&mut h, &x, &xt, &g, &g_new, sy);
        } else {
            h = identity(n);
        }
        let improvement = ft - fx;
        x.copy_from_slice(&xt);
        std::mem::swap(&mut g, &mut g_new);
        fx = ft;
        if improvement <= 1e-15 * (1.0 + fx.abs()) && ss.sqrt() < 1e-12 {
            converged = true;
            break;
        }
    }

    for (v, dom) in x.iter_mut().zip(domains) {
        *v = dom.wrap(*v);
    }
    LocalResult {
        x,
        value: fx,
        iterations,
        converged,
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

fn bfgs_update(h: &mut [f64], x: &[f64], xt: &[f64], g: &[f64], g_new: &[f64], sy: f64) {
    let n = x.len();
    let s: Vec<f64> = (0..n).map(|i| xt[i] - x[i]).collect();
    let y: Vec<f64> = (0..n).map(|i| g[i] - g_new[i]).collect();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum())
        .collect();
    let yhy: f64 = (0..n).map(|i| y[i] * hy[i]).sum();
    // H⁺ = H − ρ(s·yᵀH + H·y·sᵀ) + (ρ²·yᵀHy + ρ)·s·sᵀ
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (s[i] * hy[j] + hy[i] * s[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_maximum() {
        let f = |x: &[f64]| -(x[0] - 0.3).powi(2) - 2.0 * (x[1] + 0.7).powi(2) - 0.5 * x[0] * x[1];
        let dom = [Domain::Interval(-2.0, 2.0), Domain::Interval(-2.0, 2.0)];
        let r = maximize(f, &[1.5, 1.5], &dom, &LocalSettings::default());
        assert!(r.converged);
        // Stationary point of the quadratic: both partials vanish.
        let g0 = -2.0 * (r.x[0] - 0.3) - 0.5 * r.x[1];
        let g1 = -4.0 * (r.x[1] + 0.7) - 0.5 * r.x[0];
        assert!(g0.abs() < 1e-5 && g1.abs() < 1e-5, "{:?}", r.x);
    }

    #[test]
    fn respects_box() {
        let f = |x: &[f64]| x[0] + x[1];
        let dom = [Domain::Interval(0.0, 1.0), Domain::Interval(-1.0, 0.5)];
        let r = maximize(f, &[0.2, 0.0], &dom, &LocalSettings::default());
        assert!((r.x[0] - 1.0).abs() < 1e-12 && (r.x[1] - 0.5).abs() < 1e-12);
        assert!((r.value - 1.5).abs() < 1e-12);
    }

    #[test]
    fn wraps_periodic_coordinates() {
        let f = |x: &[f64]| (x[0] - 0.1).cos();
        let dom = [Domain::Periodic(0.0, std::f64::consts::TAU)];
        let r = maximize(f, &[6.0], &dom, &LocalSettings::default());
        assert!((r.x[0] - 0.1).abs() < 1e-5, "{}", r.x[0]);
        assert!((0.0..std::f64::consts::TAU).contains(&r.x[0]));
    }

    #[test]
    fn rosenbrock_valley() {
        let f = |x: &[f64]| -((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2));
        let dom = [Domain::Interval(-3.0, 3.0), Domain::Interval(-3.0, 3.0)];
        let s = LocalSettings {
            max_iter: 500,
            ..LocalSettings::default()
        };
        let r = maximize(f, &[-1.2, 1.0], &dom, &s);
        assert!((r.x[0] - 1.0).abs() < 1e-3 && (r.x[1] - 1.0).abs() < 2e-3, "{:?}", r.x);
    }
}
