//! First-order optimizers shared by the trainers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop once the gradient norm falls below this.
    pub tolerance: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 10,
            max_iterations: 200,
            tolerance: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsReport {
    pub iterations: usize,
    pub objective: f64,
    pub gradient_norm: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f`, which returns the objective and writes its gradient.
///
/// Two-loop recursion with backtracking Armijo line search.
pub fn lbfgs<F>(x: &mut [f64], config: &LbfgsConfig, mut f: F) -> Result<LbfgsReport>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut fx = f(x, &mut g);
    if !fx.is_finite() {
        return Err(Error::Numerical("objective is not finite at the starting point".into()));
    }
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho: Vec<f64> = Vec::new();
    let mut gnorm = dot(&g, &g).sqrt();
    let mut it = 0;
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    while it < config.max_iterations && gnorm > config.tolerance {
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let m = s_hist.len();
        let mut alpha = vec![0.0; m];
        for i in (0..m).rev() {
            alpha[i] = rho[i] * dot(&s_hist[i], &d);
            for (dj, yj) in d.iter_mut().zip(&y_hist[i]) {
                *dj -= alpha[i] * yj;
            }
        }
        let gamma = if m > 0 {
            dot(&s_hist[m - 1], &y_hist[m - 1]) / dot(&y_hist[m - 1], &y_hist[m - 1])
        } else {
            1.0 / gnorm.max(1.0)
        };
        for dj in d.iter_mut() {
            *dj *= gamma;
        }
        for i in 0..m {
            let beta = rho[i] * dot(&y_hist[i], &d);
            for (dj, sj) in d.iter_mut().zip(&s_hist[i]) {
                *dj += (alpha[i] - beta) * sj;
            }
        }
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            // Lost descent; restart from steepest descent.
            s_hist.clear();
            y_hist.clear();
            rho.clear();
            for (dj, gj) in d.iter_mut().zip(&g) {
                *dj = -gj / gnorm.max(1.0);
            }
            slope = dot(&g, &d);
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            for j in 0..n {
                x_new[j] = x[j] + step * d[j];
            }
            let f_new = f(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * step * slope {
                let s: Vec<f64> = (0..n).map(|j| x_new[j] - x[j]).collect();
                let y: Vec<f64> = (0..n).map(|j| g_new[j] - g[j]).collect();
                let sy = dot(&s, &y);
                if sy > 1e-10 {
                    if s_hist.len() == config.memory {
                        s_hist.remove(0);
                        y_hist.remove(0);
                        rho.remove(0);
                    }
                    s_hist.push(s);
                    y_hist.push(y);
                    rho.push(1.0 / sy);
                }
                x.copy_from_slice(&x_new);
                g.copy_from_slice(&g_new);
                fx = f_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        it += 1;
        gnorm = dot(&g, &g).sqrt();
        if !accepted {
            break;
        }
    }
    Ok(LbfgsReport {
        iterations: it,
        objective: fx,
        gradient_norm: gnorm,
        converged: gnorm <= config.tolerance,
    })
}

/// Adam moment buffers for one flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update; advances `state.t`.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, config: &AdamConfig) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape {
            op: "adam_step",
            left: vec![params.len()],
            right: vec![grads.len(), state.m.len()],
        });
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
        state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
        let mh = state.m[i] / c1;
        let vh = state.v[i] / c2;
        params[i] -= config.lr * mh / (vh.sqrt() + config.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lbfgs_rosenbrock() {
        let mut x = vec![-1.2, 1.0];
        let cfg = LbfgsConfig {
            max_iterations: 500,
            ..Default::default()
        };
        let r = lbfgs(&mut x, &cfg, |p, g| {
            let (a, b) = (p[0], p[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        })
        .unwrap();
        assert!(r.converged, "{r:?}");
        assert!((x[0] - 1.0).abs() < 1e-4 && (x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn lbfgs_quadratic_is_exact() {
        let mut x = vec![3.0, -4.0, 5.0];
        let r = lbfgs(&mut x, &LbfgsConfig::default(), |p, g| {
            let mut f = 0.0;
            for i in 0..3 {
                let w = (i + 1) as f64;
                g[i] = w * (p[i] - 1.0);
                f += 0.5 * w * (p[i] - 1.0).powi(2);
            }
            f
        })
        .unwrap();
        assert!(r.converged);
        for v in x {
            assert!((v - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn adam_zero_gradient() {
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState::new(2);
        s.m = vec![0.5, 0.5];
        s.v = vec![0.25, 0.25];
        adam_step(&mut p, &[0.0, 0.0], &mut s, &AdamConfig::default()).unwrap();
        assert_eq!(s.m, vec![0.45, 0.45]);
        assert!(s.v[0] < 0.25);
        // Moments are nonzero so the step is not a no-op; from a fresh state it is.
        let mut q = vec![1.0, -2.0];
        let mut fresh = AdamState::new(2);
        adam_step(&mut q, &[0.0, 0.0], &mut fresh, &AdamConfig::default()).unwrap();
        assert_eq!(q, vec![1.0, -2.0]);
    }

    #[test]
    fn adam_first_step_is_lr() {
        let mut p = vec![0.0, 0.0];
        let mut s = AdamState::new(2);
        let cfg = AdamConfig::default();
        adam_step(&mut p, &[3.0, -0.5], &mut s, &cfg).unwrap();
        assert!((p[0] + cfg.lr).abs() < 1e-9);
        assert!((p[1] - cfg.lr).abs() < 1e-9);
    }

    #[test]
    fn adam_minimizes_square() {
        let mut w = vec![1.0];
        let mut s = AdamState::new(1);
        let cfg = AdamConfig { lr: 0.1, ..Default::default() };
        for _ in 0..100 {
            let g = [2.0 * w[0]];
            adam_step(&mut w, &g, &mut s, &cfg).unwrap();
        }
        assert!(w[0].abs() < 0.5);
    }

    #[test]
    fn adam_shape_error() {
        let mut s = AdamState::new(2);
        assert!(adam_step(&mut [0.0; 2], &[0.0; 3], &mut s, &AdamConfig::default()).is_err());
    }
}
