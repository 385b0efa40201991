//! Small deterministic minimizers for low-dimensional likelihood problems.
//!
//! Both methods minimize; callers negate log-likelihoods. Non-finite
//! objective values are treated as +∞ so that infeasible regions simply
//! repel the search.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop when the simplex diameter (∞-norm) falls below this.
    pub xtol: f64,
    /// Stop when the spread of vertex values falls below this.
    pub ftol: f64,
    /// Edge length of the initial simplex.
    pub initial_step: f64,
    /// Number of restarts from the best vertex after convergence.
    pub restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evals: 4000,
            xtol: 1e-8,
            ftol: 1e-10,
            initial_step: 0.25,
            restarts: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
    pub iterations: usize,
}

fn finite_or_inf(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Nelder–Mead simplex search with restarts.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let mut best = nelder_mead_once(&mut f, x0, opts, opts.max_evals);
    let mut evals = best.evals;
    let mut iterations = best.iterations;
    for _ in 0..opts.restarts {
        if evals >= opts.max_evals {
            break;
        }
        let run = nelder_mead_once(&mut f, &best.x, opts, opts.max_evals - evals);
        evals += run.evals;
        iterations += run.iterations;
        let improved = run.value < best.value - opts.ftol;
        if run.value <= best.value {
            best = Minimum {
                converged: run.converged,
                ..run
            };
        }
        if !improved {
            break;
        }
    }
    best.evals = evals;
    best.iterations = iterations;
    best
}

fn nelder_mead_once<F>(f: &mut F, x0: &[f64], opts: &NelderMeadOptions, budget: usize) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        finite_or_inf(f(x))
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += opts.initial_step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals)).collect();

    let mut iterations = 0;
    let mut converged = false;
    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial2 = vec![0.0; n];

    while evals < budget {
        iterations += 1;
        // Sort vertices; stable so ties keep insertion order.
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[n] - values[0];
        let diameter = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0_f64, f64::max);
        if (spread <= opts.ftol && diameter <= opts.xtol) || diameter < 1e-14 {
            converged = true;
            break;
        }

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let worst = simplex[n].clone();
        for j in 0..n {
            trial[j] = centroid[j] + (centroid[j] - worst[j]);
        }
        let fr = eval(&trial, &mut evals);

        if fr < values[0] {
            for j in 0..n {
                trial2[j] = centroid[j] + 2.0 * (centroid[j] - worst[j]);
            }
            let fe = eval(&trial2, &mut evals);
            if fe < fr {
                simplex[n].copy_from_slice(&trial2);
                values[n] = fe;
            } else {
                simplex[n].copy_from_slice(&trial);
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n].copy_from_slice(&trial);
            values[n] = fr;
            continue;
        }
        // Contraction, outside or inside.
        let outside = fr < values[n];
        for j in 0..n {
            trial2[j] = if outside {
                centroid[j] + 0.5 * (trial[j] - centroid[j])
            } else {
                centroid[j] + 0.5 * (worst[j] - centroid[j])
            };
        }
        let fc = eval(&trial2, &mut evals);
        if (outside && fc <= fr) || (!outside && fc < values[n]) {
            simplex[n].copy_from_slice(&trial2);
            values[n] = fc;
            continue;
        }
        // Shrink towards the best vertex.
        let best = simplex[0].clone();
        for i in 1..=n {
            for j in 0..n {
                simplex[i][j] = best[j] + 0.5 * (simplex[i][j] - best[j]);
            }
            values[i] = eval(&simplex[i], &mut evals);
        }
    }

    let (ibest, &value) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty simplex");
    Minimum {
        x: simplex[ibest].clone(),
        value,
        evals,
        converged,
        iterations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iters: usize,
    /// Central-difference step in the optimization coordinates.
    pub fd_step: f64,
    pub gtol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            fd_step: 1e-5,
            gtol: 1e-6,
        }
    }
}

/// Central finite-difference gradient.
pub fn fd_gradient<F>(f: &mut F, x: &[f64], step: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            xp[i] = x[i] + step;
            let up = f(&xp);
            xp[i] = x[i] - step;
            let down = f(&xp);
            xp[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// BFGS with finite-difference gradients and a backtracking Armijo search.
pub fn bfgs<F>(mut f: F, x0: &[f64], opts: &BfgsOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut obj = |x: &[f64]| {
        evals += 1;
        finite_or_inf(f(x))
    };
    let mut x = x0.to_vec();
    let mut fx = obj(&x);
    let mut g = fd_gradient(&mut obj, &x, opts.fd_step);
    let mut h = identity(n);
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..opts.max_iters {
        iterations += 1;
        if g.iter().map(|v| v.abs()).fold(0.0, f64::max) < opts.gtol {
            converged = true;
            break;
        }
        let mut dir: Vec<f64> = (0..n)
            .map(|i| -(0..n).map(|j| h[i * n + j] * g[j]).sum::<f64>())
            .collect();
        let mut slope: f64 = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();
        if slope >= 0.0 {
            // Not a descent direction: reset to steepest descent.
            h = identity(n);
            dir = g.iter().map(|v| -v).collect();
            slope = -g.iter().map(|v| v * v).sum::<f64>();
        }
        let mut step = 1.0;
        let mut x_new = x.clone();
        let mut f_new = f64::INFINITY;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + step * dir[i];
            }
            f_new = obj(&x_new);
            if f_new <= fx + 1e-4 * step * slope {
                break;
            }
            step *= 0.5;
        }
        if !(f_new < fx) {
            converged = true;
            break;
        }
        let g_new = fd_gradient(&mut obj, &x_new, opts.fd_step);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum()).collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        let df = fx - f_new;
        x = x_new;
        fx = f_new;
        g = g_new;
        if df.abs() < 1e-14 * (1.0 + fx.abs()) {
            converged = true;
            break;
        }
    }
    Minimum {
        x,
        value: fx,
        evals,
        converged,
        iterations,
    }
}

/// Standard errors from the inverse of a finite-difference Hessian of a
/// negative log-likelihood at its minimum. `None` when the Hessian is not
/// positive definite.
pub fn observed_information_se<F>(mut f: F, x: &[f64]) -> Option<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x.len();
    let steps: Vec<f64> = x.iter().map(|v| 1e-4 * v.abs().max(1e-2)).collect();
    let f0 = f(x);
    let mut hess = vec![0.0; n * n];
    let mut xp = x.to_vec();
    for i in 0..n {
        for j in i..n {
            let (hi, hj) = (steps[i], steps[j]);
            let v = if i == j {
                xp[i] = x[i] + hi;
                let up = f(&xp);
                xp[i] = x[i] - hi;
                let down = f(&xp);
                xp[i] = x[i];
                (up - 2.0 * f0 + down) / (hi * hi)
            } else {
                let mut eval = |di: f64, dj: f64| {
                    xp[i] = x[i] + di;
                    xp[j] = x[j] + dj;
                    let r = f(&xp);
                    xp[i] = x[i];
                    xp[j] = x[j];
                    r
                };
                (eval(hi, hj) - eval(hi, -hj) - eval(-hi, hj) + eval(-hi, -hj)) / (4.0 * hi * hj)
            };
            hess[i * n + j] = v;
            hess[j * n + i] = v;
        }
    }
    if hess.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let inv = invert(&hess, n)?;
    (0..n)
        .map(|i| {
            let d = inv[i * n + i];
            (d > 0.0).then(|| d.sqrt())
        })
        .collect()
}

/// Gauss–Jordan inverse with partial pivoting.
fn invert(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut inv = identity(n);
    for col in 0..n {
        let pivot = (col..n).max_by(|&r, &s| m[r * n + col].abs().total_cmp(&m[s * n + col].abs()))?;
        if m[pivot * n + col].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                m.swap(col * n + k, pivot * n + k);
                inv.swap(col * n + k, pivot * n + k);
            }
        }
        let d = m[col * n + col];
        for k in 0..n {
            m[col * n + k] /= d;
            inv[col * n + k] /= d;
        }
        for r in 0..n {
            if r != col {
                let factor = m[r * n + col];
                if factor != 0.0 {
                    for k in 0..n {
                        m[r * n + k] -= factor * m[col * n + k];
                        inv[r * n + k] -= factor * inv[col * n + k];
                    }
                }
            }
        }
    }
    Some(inv)
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn nelder_mead_finds_rosenbrock_minimum() {
        let opts = NelderMeadOptions {
            xtol: 1e-10,
            ftol: 1e-14,
            initial_step: 0.5,
            ..Default::default()
        };
        let m = nelder_mead(rosenbrock, &[-1.2, 1.0], &opts);
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{m:?}");
    }

    #[test]
    fn nelder_mead_is_deterministic() {
        let opts = NelderMeadOptions::default();
        let a = nelder_mead(rosenbrock, &[0.3, -0.4], &opts);
        let b = nelder_mead(rosenbrock, &[0.3, -0.4], &opts);
        assert_eq!(a, b);
    }

    #[test]
    fn infinite_values_repel() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 2.0).powi(2) };
        let m = nelder_mead(f, &[0.1], &NelderMeadOptions::default());
        assert!((m.x[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn bfgs_quadratic() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2) + x[0] * x[1];
        let m = bfgs(f, &[0.0, 0.0], &BfgsOptions::default());
        // Stationary point of the quadratic: solve [[2,1],[1,6]] x = [2,-12].
        let (x0, x1) = (24.0 / 11.0, -26.0 / 11.0);
        assert!((m.x[0] - x0).abs() < 1e-5 && (m.x[1] - x1).abs() < 1e-5, "{m:?}");
    }

    #[test]
    fn standard_errors_of_gaussian_mean() {
        // Negative log-likelihood of N(μ, 1) for n = 25 observations around 0:
        // Hessian is n, so se(μ) = 1/5.
        let nll = |x: &[f64]| 12.5 * x[0] * x[0] + 2.0 * (x[1] - 1.0).powi(2);
        let se = observed_information_se(nll, &[0.0, 1.0]).unwrap();
        assert!((se[0] - 0.2).abs() < 1e-6 && (se[1] - 0.5).abs() < 1e-6, "{se:?}");
        assert!(observed_information_se(|x: &[f64]| -x[0] * x[0], &[0.0]).is_none());
    }

    #[test]
    fn fd_gradient_matches_analytic() {
        let mut f = |x: &[f64]| x[0].sin() * x[1].exp();
        let g = fd_gradient(&mut f, &[0.7, -0.3], 1e-5);
        assert!((g[0] - 0.7_f64.cos() * (-0.3_f64).exp()).abs() < 1e-9);
        assert!((g[1] - 0.7_f64.sin() * (-0.3_f64).exp()).abs() < 1e-9);
    }
}
