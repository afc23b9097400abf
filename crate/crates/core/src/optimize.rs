//! Dense BFGS minimizer with a weak-Wolfe bisection line search.

/// Stopping rules for [`bfgs`].
#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    /// Converged once `max_i |∇f_i|` drops below this.
    pub gradient_tol: f64,
    pub max_iterations: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            gradient_tol: 1e-8,
            max_iterations: 5000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_max_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_norm(g: &[f64]) -> f64 {
    g.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Minimizes `f` starting from `x0`. `f` returns the value and gradient.
///
/// Returns the best iterate found; `converged` is false when the iteration
/// budget ran out or the line search could no longer make progress.
pub fn bfgs<F>(f: F, x0: Vec<f64>, options: BfgsOptions) -> Minimum
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    // Inverse Hessian approximation, row-major.
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    let mut scaled = false;
    let mut fresh = true;

    for iter in 0..options.max_iterations {
        let gnorm = max_norm(&g);
        if gnorm < options.gradient_tol {
            return Minimum {
                x,
                value: fx,
                gradient_max_norm: gnorm,
                iterations: iter,
                converged: true,
            };
        }

        let mut p: Vec<f64> = (0..n)
            .map(|i| -(0..n).map(|j| h[i * n + j] * g[j]).sum::<f64>())
            .collect();
        let mut slope = dot(&p, &g);
        if slope >= 0.0 {
            // Lost descent: restart from steepest descent.
            for (i, v) in h.iter_mut().enumerate() {
                *v = if i % (n + 1) == 0 { 1.0 } else { 0.0 };
            }
            p = g.iter().map(|v| -v).collect();
            slope = dot(&p, &g);
        }

        let Some((step, x_new, f_new, g_new)) = wolfe_search(&f, &x, fx, &p, slope) else {
            if !fresh {
                for (i, v) in h.iter_mut().enumerate() {
                    *v = if i % (n + 1) == 0 { 1.0 } else { 0.0 };
                }
                scaled = false;
                fresh = true;
                continue;
            }
            return Minimum {
                x,
                value: fx,
                gradient_max_norm: gnorm,
                iterations: iter,
                converged: false,
            };
        };

        let s: Vec<f64> = p.iter().map(|v| v * step).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if !scaled {
                let gamma = sy / dot(&y, &y);
                h.iter_mut().for_each(|v| *v *= gamma);
                scaled = true;
            }
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum())
                .collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j])
                        + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        fresh = false;
        x = x_new;
        fx = f_new;
        g = g_new;
    }

    let gnorm = max_norm(&g);
    Minimum {
        x,
        value: fx,
        gradient_max_norm: gnorm,
        iterations: options.max_iterations,
        converged: gnorm < options.gradient_tol,
    }
}

type Trial = (f64, Vec<f64>, f64, Vec<f64>);

fn wolfe_search<F>(f: &F, x: &[f64], fx: f64, p: &[f64], slope: f64) -> Option<Trial>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    const FLAT: f64 = 1e-12;
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    let mut t = 1.0;
    let mut best: Option<Trial> = None;
    for _ in 0..80 {
        let xt: Vec<f64> = x.iter().zip(p).map(|(a, b)| a + t * b).collect();
        let (ft, gt) = f(&xt);
        let dt = dot(&gt, p);
        // Near the minimum `f` stops resolving the decrease; accept steps
        // on the slope alone when the value is flat to rounding.
        let approx = ft.is_finite()
            && ft <= fx + FLAT * fx.abs()
            && dt >= C2 * slope
            && dt <= (2.0 * C1 - 1.0) * slope;
        if approx {
            return Some((t, xt, ft, gt));
        }
        if !ft.is_finite() || ft > fx + C1 * t * slope {
            hi = t;
        } else {
            let improved = best.as_ref().is_none_or(|b| ft < b.2);
            let curvature_ok = dt >= C2 * slope;
            if improved {
                best = Some((t, xt, ft, gt));
            }
            if curvature_ok {
                return best;
            }
            lo = t;
        }
        t = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * lo };
        if hi.is_finite() && hi - lo < 1e-16 * hi.max(1.0) {
            break;
        }
    }
    best.filter(|b| b.2 < fx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock_minimum() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ];
            (v, g)
        };
        let m = bfgs(f, vec![-1.2, 1.0], BfgsOptions::default());
        assert!(m.converged, "{m:?}");
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ill_conditioned_quadratic() {
        let scales = [1.0, 1e3, 1e6];
        let f = |x: &[f64]| {
            let v = x.iter().zip(scales).map(|(a, s)| s * (a - 1.0).powi(2)).sum();
            let g = x.iter().zip(scales).map(|(a, s)| 2.0 * s * (a - 1.0)).collect();
            (v, g)
        };
        let m = bfgs(f, vec![0.0; 3], BfgsOptions::default());
        assert!(m.converged);
        assert!(m.x.iter().all(|v| (v - 1.0).abs() < 1e-8));
    }
}
