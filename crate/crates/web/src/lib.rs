//! WebAssembly bindings for the static demo in `www/`.
//!
//! Each export wraps a plain function returning `Result<_, String>` so the
//! numerics can be tested natively.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use exrain::dependence::{chi_r, AdvectionTransform, VariogramParams, Velocity};
use exrain::marginals::{EgpdParams, MarginalModel};
use exrain::simulation::{generate_episode, SimulationDomain};
use wasm_bindgen::prelude::*;

/// Largest simulated domain (sites × steps); the Cholesky factor is dense.
pub const MAX_POINTS: usize = 2500;

fn model(p0: f64, xi: f64, sigma: f64, kappa: f64) -> Result<MarginalModel, String> {
    let egpd = EgpdParams::new(xi, sigma, kappa).map_err(|e| e.to_string())?;
    MarginalModel::new(p0, egpd).map_err(|e| e.to_string())
}

/// `n` points on (0, x_max]: x, EGPD density, then the mixed cdf, concatenated.
pub fn marginal_curves(p0: f64, xi: f64, sigma: f64, kappa: f64, x_max: f64, n: usize) -> Result<Vec<f64>, String> {
    let m = model(p0, xi, sigma, kappa)?;
    if !(x_max > 0.0) || n < 2 {
        return Err("x_max must be > 0 and n >= 2".into());
    }
    let xs: Vec<f64> = (1..=n).map(|i| x_max * i as f64 / n as f64).collect();
    let mut out = xs.clone();
    out.extend(xs.iter().map(|&x| m.egpd.pdf(x)));
    out.extend(xs.iter().map(|&x| m.cdf(x)));
    Ok(out)
}

/// χ(h, τ) on an `n × n` grid of lags covering [−extent, extent]², row by
/// row from the bottom, under the advection A(V).
#[allow(clippy::too_many_arguments)]
pub fn extremogram_map(
    theta: [f64; 4],
    v: (f64, f64),
    eta: (f64, f64),
    tau: f64,
    n: usize,
    extent: f64,
) -> Result<Vec<f64>, String> {
    let theta = VariogramParams::new(theta[0], theta[1], theta[2], theta[3]).map_err(|e| e.to_string())?;
    let adv = AdvectionTransform::new(eta.0, eta.1).map_err(|e| e.to_string())?;
    if n < 2 || !(extent > 0.0) || !(tau >= 0.0) {
        return Err("need n >= 2, extent > 0 and tau >= 0".into());
    }
    let ve = adv.apply(Velocity::new(v.0, v.1));
    let step = 2.0 * extent / (n - 1) as f64;
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let h = (-extent + i as f64 * step, -extent + j as f64 * step);
            out.push(chi_r(h, tau, &theta, ve));
        }
    }
    Ok(out)
}

/// Rainfall of one episode on an `nx × nx` unit lattice, conditioned at the
/// center pixel at step 0; step-major, rows from the bottom.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    nx: usize,
    n_steps: usize,
    theta: [f64; 4],
    v: (f64, f64),
    marginal: [f64; 4],
    threshold: f64,
    seed: u64,
) -> Result<Vec<f64>, String> {
    if nx == 0 || n_steps == 0 || nx * nx * n_steps > MAX_POINTS {
        return Err(format!("grid too large: at most {MAX_POINTS} space-time points"));
    }
    let theta = VariogramParams::new(theta[0], theta[1], theta[2], theta[3]).map_err(|e| e.to_string())?;
    let m = model(marginal[0], marginal[1], marginal[2], marginal[3])?;
    let center = (nx / 2) * nx + nx / 2;
    let domain = SimulationDomain::lattice(nx, nx, 1.0, n_steps, center).map_err(|e| e.to_string())?;
    let ep = generate_episode(
        &domain,
        &theta,
        Velocity::new(v.0, v.1),
        &AdvectionTransform::IDENTITY,
        threshold,
        &m,
        seed,
        None,
    )
    .map_err(|e| e.to_string())?;
    Ok(ep.x)
}

#[wasm_bindgen(js_name = marginalCurves)]
pub fn marginal_curves_js(p0: f64, xi: f64, sigma: f64, kappa: f64, x_max: f64, n: usize) -> Result<Vec<f64>, JsError> {
    marginal_curves(p0, xi, sigma, kappa, x_max, n).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = extremogramMap)]
#[allow(clippy::too_many_arguments)]
pub fn extremogram_map_js(
    beta1: f64,
    beta2: f64,
    alpha1: f64,
    alpha2: f64,
    vx: f64,
    vy: f64,
    eta1: f64,
    eta2: f64,
    tau: f64,
    n: usize,
    extent: f64,
) -> Result<Vec<f64>, JsError> {
    extremogram_map([beta1, beta2, alpha1, alpha2], (vx, vy), (eta1, eta2), tau, n, extent)
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = simulateEpisode)]
#[allow(clippy::too_many_arguments)]
pub fn simulate_js(
    nx: usize,
    n_steps: usize,
    beta1: f64,
    beta2: f64,
    alpha1: f64,
    alpha2: f64,
    vx: f64,
    vy: f64,
    p0: f64,
    xi: f64,
    sigma: f64,
    kappa: f64,
    threshold: f64,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    simulate(
        nx,
        n_steps,
        [beta1, beta2, alpha1, alpha2],
        (vx, vy),
        [p0, xi, sigma, kappa],
        threshold,
        u64::from(seed),
    )
    .map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const THETA: [f64; 4] = [0.3, 0.6, 0.3, 0.8];

    #[test]
    fn curves_are_monotone_cdfs() {
        let c = marginal_curves(0.8, 0.262, 0.591, 0.27, 10.0, 50).unwrap();
        assert_eq!(c.len(), 150);
        let cdf = &c[100..];
        assert!(cdf.windows(2).all(|w| w[1] >= w[0]));
        assert!(cdf[0] > 0.8 && cdf[49] < 1.0);
        assert!(marginal_curves(1.5, 0.2, 1.0, 1.0, 10.0, 50).is_err());
    }

    #[test]
    fn map_peaks_on_the_advected_lag() {
        // A(V) = V when η = (1, 1), so the peak at τ = 2 sits at h = 2V.
        let n = 41;
        let m = extremogram_map(THETA, (1.0, -0.5), (1.0, 1.0), 2.0, n, 4.0).unwrap();
        let best = (0..m.len()).max_by(|&a, &b| m[a].total_cmp(&m[b])).unwrap();
        let step = 8.0 / 40.0;
        let (hx, hy) = (-4.0 + (best % n) as f64 * step, -4.0 + (best / n) as f64 * step);
        assert!((hx - 2.0).abs() < 1e-9 && (hy + 1.0).abs() < 1e-9, "{hx} {hy}");
        let still = extremogram_map(THETA, (0.0, 0.0), (1.0, 1.0), 0.0, n, 4.0).unwrap();
        assert_eq!(still[20 * n + 20], 1.0);
    }

    #[test]
    fn simulation_is_seeded_and_bounded() {
        let a = simulate(7, 4, THETA, (0.5, 0.0), [0.8, 0.262, 0.591, 0.27], 1.0, 3).unwrap();
        assert_eq!(a.len(), 7 * 7 * 4);
        assert_eq!(
            a,
            simulate(7, 4, THETA, (0.5, 0.0), [0.8, 0.262, 0.591, 0.27], 1.0, 3).unwrap()
        );
        assert!(a.iter().all(|x| *x >= 0.0 && x.is_finite()));
        assert!(a[3 * 7 + 3] > 0.0, "the conditioning pixel is wet");
        assert!(simulate(60, 60, THETA, (0.0, 0.0), [0.8, 0.262, 0.591, 0.27], 1.0, 3).is_err());
    }
}
