//! Composite-likelihood estimation of the variogram and advection transform.
//!
//! Every observation of an episode at lag (h, τ) from its conditioning point
//! is a Bernoulli trial with success probability χ_r(h, τ; Θ, A(V^emp)).
//! The likelihood uses the exact lag vector of each observation; lag classes
//! only serve the WLS starting values and diagnostics.

use std::collections::BTreeMap;
use std::io::Write;

use crate::data::SpaceTimeData;
use crate::dependence::{inverse_chi, AdvectionTransform, VariogramParams, Velocity};
use crate::episodes::EpisodeCatalog;
use crate::error::{Error, Result};
use crate::optim::{bfgs, nelder_mead, observed_information_se, BfgsOptions, NelderMeadOptions};

/// χ is kept inside [CHI_CLAMP, 1 − CHI_CLAMP] in the logs.
pub const CHI_CLAMP: f64 = 1e-10;
/// Bounds on η₂ during optimization.
pub const ETA2_BOUNDS: (f64, f64) = (0.1, 10.0);
/// Two-sided 97.5% standard normal quantile.
pub const Z_975: f64 = 1.959_963_984_540_054;

/// Θ̃ = (β₁, β₂, α₁, α₂, η₁, η₂).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtendedParams {
    pub theta: VariogramParams,
    pub adv: AdvectionTransform,
}

impl ExtendedParams {
    pub fn new(theta: VariogramParams, adv: AdvectionTransform) -> Result<Self> {
        theta.validate()?;
        adv.validate()?;
        Ok(Self { theta, adv })
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.theta.beta1,
            self.theta.beta2,
            self.theta.alpha1,
            self.theta.alpha2,
            self.adv.eta1,
            self.adv.eta2,
        ]
    }

    /// Same model with space measured in units of `space_factor` meters and
    /// time in units of `time_factor` steps.
    pub fn rescaled(&self, space_factor: f64, time_factor: f64) -> Self {
        Self {
            theta: self.theta.rescaled(space_factor, time_factor),
            adv: self.adv.rescaled(time_factor / space_factor),
        }
    }
}

pub const PARAM_NAMES: [&str; 6] = ["beta1", "beta2", "alpha1", "alpha2", "eta1", "eta2"];

/// Observations of one episode, as lags from its conditioning point. The
/// conditioning point itself and missing values are not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeObs {
    /// Empirical velocity (m per step).
    pub v_emp: Velocity,
    pub hx: Vec<f64>,
    pub hy: Vec<f64>,
    pub tau: Vec<u32>,
    pub exceed: Vec<bool>,
    /// Calendar month (1–12) of the conditioning time, when known.
    pub month: Option<u32>,
}

impl EpisodeObs {
    pub fn len(&self) -> usize {
        self.exceed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exceed.is_empty()
    }
}

/// Builds likelihood inputs from observed episodes. Episodes without a
/// velocity are skipped; the second value counts them.
pub fn episode_observations(data: &SpaceTimeData, catalog: &EpisodeCatalog) -> (Vec<EpisodeObs>, usize) {
    let mut out = Vec::with_capacity(catalog.len());
    let mut skipped = 0;
    for e in &catalog.episodes {
        let Some(v_emp) = e.velocity else {
            skipped += 1;
            continue;
        };
        let s0 = &data.sites[e.site];
        let mut obs = EpisodeObs {
            v_emp,
            hx: Vec::new(),
            hy: Vec::new(),
            tau: Vec::new(),
            exceed: Vec::new(),
            month: data.axis.month(e.t0),
        };
        for t in e.t0..(e.t0 + e.delta).min(data.n_steps()) {
            for (s, &x) in data.slice(t).iter().enumerate() {
                if x.is_nan() || (t == e.t0 && s == e.site) {
                    continue;
                }
                obs.hx.push(data.sites[s].x - s0.x);
                obs.hy.push(data.sites[s].y - s0.y);
                obs.tau.push((t - e.t0) as u32);
                obs.exceed.push(x > catalog.threshold);
            }
        }
        out.push(obs);
    }
    (out, skipped)
}

#[inline]
fn bernoulli_term(chi: f64, k: bool) -> f64 {
    let c = chi.clamp(CHI_CLAMP, 1.0 - CHI_CLAMP);
    if k {
        c.ln()
    } else {
        (-c).ln_1p()
    }
}

/// k log χ + (N − k) log(1 − χ), the aggregated Bernoulli log-likelihood.
pub fn bernoulli_loglik(chi: f64, k: u64, n: u64) -> f64 {
    let c = chi.clamp(CHI_CLAMP, 1.0 - CHI_CLAMP);
    k as f64 * c.ln() + (n - k) as f64 * (-c).ln_1p()
}

fn episode_loglik(p: &ExtendedParams, e: &EpisodeObs, tau_pow: &[f64]) -> f64 {
    let v = p.adv.apply(e.v_emp);
    let (b1, a1) = (p.theta.beta1, p.theta.alpha1);
    let mut ll = 0.0;
    for i in 0..e.exceed.len() {
        let t = e.tau[i] as f64;
        let dx = e.hx[i] - t * v.vx;
        let dy = e.hy[i] - t * v.vy;
        let d2 = dx * dx + dy * dy;
        let spatial = if d2 > 0.0 { b1 * (0.5 * a1 * d2.ln()).exp() } else { 0.0 };
        let gamma = 2.0 * (spatial + tau_pow[e.tau[i] as usize]);
        let chi = libm::erfc(0.5 * gamma.sqrt());
        ll += bernoulli_term(chi, e.exceed[i]);
    }
    ll
}

fn tau_table(p: &ExtendedParams, episodes: &[EpisodeObs]) -> Vec<f64> {
    let max_tau = episodes.iter().flat_map(|e| e.tau.iter().copied()).max().unwrap_or(0) as usize;
    (0..=max_tau)
        .map(|t| {
            if t == 0 {
                0.0
            } else {
                p.theta.beta2 * (t as f64).powf(p.theta.alpha2)
            }
        })
        .collect()
}

/// ℓ_C summed over episodes.
pub fn composite_loglik(params: &ExtendedParams, episodes: &[EpisodeObs]) -> Result<f64> {
    if episodes.is_empty() {
        return Err(Error::insufficient("no episodes for the composite likelihood"));
    }
    if episodes.iter().all(|e| e.is_empty()) {
        return Err(Error::insufficient("episodes contain no observed trials"));
    }
    Ok(loglik_unchecked(params, episodes))
}

fn loglik_unchecked(params: &ExtendedParams, episodes: &[EpisodeObs]) -> f64 {
    let taus = tau_table(params, episodes);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if rayon::current_num_threads() > 1 && episodes.len() > 8 {
            // Summed in episode order so the result does not depend on the thread count.
            let terms: Vec<f64> = episodes.par_iter().map(|e| episode_loglik(params, e, &taus)).collect();
            return terms.iter().sum();
        }
    }
    episodes.iter().map(|e| episode_loglik(params, e, &taus)).sum()
}

/// Empirical extremogram cell: trials at one (distance, lag) class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiClass {
    /// Representative distance (m).
    pub dist: f64,
    pub tau: u32,
    pub k: u64,
    pub n: u64,
}

impl ChiClass {
    pub fn chi(&self) -> Option<f64> {
        (self.n > 0).then(|| self.k as f64 / self.n as f64)
    }
}

/// Groups observations by exact (‖h‖, τ), with distances rounded to `resolution`.
pub fn chi_classes(episodes: &[EpisodeObs], resolution: f64) -> Vec<ChiClass> {
    let mut map: BTreeMap<(i64, u32), (u64, u64)> = BTreeMap::new();
    for e in episodes {
        for i in 0..e.len() {
            let d = e.hx[i].hypot(e.hy[i]);
            let key = ((d / resolution).round() as i64, e.tau[i]);
            let c = map.entry(key).or_default();
            c.0 += u64::from(e.exceed[i]);
            c.1 += 1;
        }
    }
    map.into_iter()
        .map(|((d, tau), (k, n))| ChiClass {
            dist: d as f64 * resolution,
            tau,
            k,
            n,
        })
        .collect()
}

fn weighted_line(points: &[(f64, f64, f64)]) -> Option<(f64, f64)> {
    let sw: f64 = points.iter().map(|p| p.2).sum();
    if points.len() < 2 || sw <= 0.0 {
        return None;
    }
    let mx = points.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = points.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = points.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((my - slope * mx, slope))
}

/// Starting values from the empirical extremogram: log(γ̂/2) is regressed
/// on log distance at τ = 0 and on log τ at distance 0, with pair-count
/// weights. Classes with χ̂ ∈ {0, 1} are skipped.
pub fn wls_initialize(classes: &[ChiClass]) -> Result<VariogramParams> {
    let usable = classes.iter().filter(|c| c.n > 0).count();
    if usable < 4 {
        return Err(Error::insufficient(format!(
            "WLS needs at least 4 lag classes with trials, found {usable}; use a default start"
        )));
    }
    let mut spatial = Vec::new();
    let mut temporal = Vec::new();
    for c in classes {
        let Some(chi) = c.chi() else { continue };
        if !(chi > 0.0 && chi < 1.0) {
            continue;
        }
        let g = inverse_chi(chi)?;
        if !(g > 0.0) {
            continue;
        }
        let y = (g / 2.0).ln();
        if c.tau == 0 && c.dist > 0.0 {
            spatial.push((c.dist.ln(), y, c.n as f64));
        } else if c.dist == 0.0 && c.tau > 0 {
            temporal.push((f64::from(c.tau).ln(), y, c.n as f64));
        }
    }
    let (i1, s1) = weighted_line(&spatial)
        .ok_or_else(|| Error::insufficient("WLS needs at least two spatial classes at lag 0"))?;
    let (i2, s2) = weighted_line(&temporal)
        .ok_or_else(|| Error::insufficient("WLS needs at least two temporal classes at distance 0"))?;
    let clamp_a = |a: f64| a.clamp(0.05, 1.95);
    let clamp_b = |b: f64| b.clamp(1e-6, 1e6);
    VariogramParams::new(clamp_b(i1.exp()), clamp_b(i2.exp()), clamp_a(s1), clamp_a(s2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    NelderMead,
    /// Quasi-Newton with central finite differences.
    Bfgs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub method: Method,
    pub nelder_mead: NelderMeadOptions,
    pub bfgs: BfgsOptions,
    /// Episodes whose transformed speed exceeds this (m per step) are dropped.
    pub speed_cap: Option<f64>,
    pub std_errors: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            method: Method::NelderMead,
            nelder_mead: NelderMeadOptions {
                max_evals: 3000,
                xtol: 1e-6,
                ftol: 1e-10,
                initial_step: 0.4,
                restarts: 2,
            },
            bfgs: BfgsOptions::default(),
            speed_cap: None,
            std_errors: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: ExtendedParams,
    pub loglik: f64,
    pub n_episodes: usize,
    /// Episodes removed by the speed cap.
    pub n_capped: usize,
    pub converged: bool,
    pub evals: usize,
    pub eta_fixed: bool,
    /// Standard errors in natural units (NaN for fixed parameters).
    pub std_errors: Option<[f64; 6]>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn eta2_from(z: f64) -> f64 {
    let (lo, hi) = (ETA2_BOUNDS.0.ln(), ETA2_BOUNDS.1.ln());
    (lo + (hi - lo) * sigmoid(z)).exp()
}

fn eta2_to(e: f64) -> f64 {
    let (lo, hi) = (ETA2_BOUNDS.0.ln(), ETA2_BOUNDS.1.ln());
    let p = ((e.ln() - lo) / (hi - lo)).clamp(1e-9, 1.0 - 1e-9);
    logit(p)
}

/// Unconstrained coordinates of Θ̃ (4 or 6 of them).
fn to_z(p: &ExtendedParams, with_eta: bool) -> Vec<f64> {
    let a = |x: f64| logit((x / 2.0).clamp(1e-9, 1.0 - 1e-9));
    let mut z = vec![
        p.theta.beta1.ln(),
        p.theta.beta2.ln(),
        a(p.theta.alpha1),
        a(p.theta.alpha2),
    ];
    if with_eta {
        z.push(p.adv.eta1.ln());
        z.push(eta2_to(p.adv.eta2));
    }
    z
}

fn from_z(z: &[f64], fixed: &AdvectionTransform) -> ExtendedParams {
    let theta = VariogramParams {
        beta1: z[0].exp(),
        beta2: z[1].exp(),
        alpha1: 2.0 * sigmoid(z[2]),
        alpha2: 2.0 * sigmoid(z[3]),
    };
    let adv = if z.len() == 6 {
        AdvectionTransform {
            eta1: z[4].exp(),
            eta2: eta2_from(z[5]),
        }
    } else {
        *fixed
    };
    ExtendedParams { theta, adv }
}

/// Drops episodes whose transformed velocity under `adv` exceeds `cap`.
pub fn apply_speed_cap(episodes: &[EpisodeObs], adv: &AdvectionTransform, cap: f64) -> (Vec<EpisodeObs>, usize) {
    let kept: Vec<EpisodeObs> = episodes
        .iter()
        .filter(|e| adv.apply(e.v_emp).speed() <= cap)
        .cloned()
        .collect();
    let dropped = episodes.len() - kept.len();
    (kept, dropped)
}

/// Maximizes ℓ_C over Θ̃ (or over Θ when `fixed_adv` is given). A fit that
/// does not meet the optimizer tolerances is returned with
/// `converged = false` and its best iterate.
pub fn fit_variogram(
    episodes: &[EpisodeObs],
    init: &ExtendedParams,
    fixed_adv: Option<AdvectionTransform>,
    opts: &FitOptions,
) -> Result<FitResult> {
    init.theta.validate()?;
    init.adv.validate()?;
    let cap_adv = fixed_adv.unwrap_or(init.adv);
    let (kept, n_capped) = match opts.speed_cap {
        Some(cap) => apply_speed_cap(episodes, &cap_adv, cap),
        None => (episodes.to_vec(), 0),
    };
    let n_trials: usize = kept.iter().map(EpisodeObs::len).sum();
    if kept.is_empty() || n_trials == 0 {
        return Err(Error::insufficient("no observed trials left to fit"));
    }
    let with_eta = fixed_adv.is_none();
    let fixed = fixed_adv.unwrap_or(init.adv);
    let scale = 1.0 / n_trials as f64;
    let objective = |z: &[f64]| -> f64 { -loglik_unchecked(&from_z(z, &fixed), &kept) * scale };
    let start = to_z(
        &ExtendedParams {
            adv: fixed_adv.unwrap_or(init.adv),
            ..*init
        },
        with_eta,
    );
    let min = match opts.method {
        Method::NelderMead => nelder_mead(objective, &start, &opts.nelder_mead),
        Method::Bfgs => {
            let m = bfgs(objective, &start, &opts.bfgs);
            // Polish with a simplex pass: the gradient test is scale dependent.
            let polish = nelder_mead(
                objective,
                &m.x,
                &NelderMeadOptions {
                    restarts: 0,
                    ..opts.nelder_mead
                },
            );
            if polish.value < m.value {
                crate::optim::Minimum {
                    evals: m.evals + polish.evals,
                    ..polish
                }
            } else {
                m
            }
        }
    };
    let params = from_z(&min.x, &fixed);
    let loglik = loglik_unchecked(&params, &kept);
    let std_errors = if opts.std_errors {
        natural_std_errors(&params, &kept, with_eta, &fixed)
    } else {
        None
    };
    Ok(FitResult {
        params,
        loglik,
        n_episodes: kept.len(),
        n_capped,
        converged: min.converged && loglik.is_finite(),
        evals: min.evals,
        eta_fixed: !with_eta,
        std_errors,
    })
}

fn natural_std_errors(
    p: &ExtendedParams,
    episodes: &[EpisodeObs],
    with_eta: bool,
    fixed: &AdvectionTransform,
) -> Option<[f64; 6]> {
    // Natural-scale Hessian: work directly in Θ̃ coordinates.
    let base = p.to_array();
    let k = if with_eta { 6 } else { 4 };
    let f = |x: &[f64]| -> f64 {
        let mut full = base;
        full[..k].copy_from_slice(x);
        let q = ExtendedParams {
            theta: VariogramParams {
                beta1: full[0],
                beta2: full[1],
                alpha1: full[2],
                alpha2: full[3],
            },
            adv: if with_eta {
                AdvectionTransform {
                    eta1: full[4],
                    eta2: full[5],
                }
            } else {
                *fixed
            },
        };
        if q.theta.validate().is_err() {
            return f64::INFINITY;
        }
        -loglik_unchecked(&q, episodes)
    };
    let se = observed_information_se(f, &base[..k])?;
    let mut out = [f64::NAN; 6];
    out[..k].copy_from_slice(&se);
    Some(out)
}

/// Leave-one-group-out jackknife summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Jackknife {
    pub groups: Vec<u32>,
    pub replicates: Vec<[f64; 6]>,
    pub std_error: [f64; 6],
    pub ci_low: [f64; 6],
    pub ci_high: [f64; 6],
}

/// Jackknife over groups (calendar months): refit without each group,
/// variance (m−1)/m Σ(θ̂₍ᵢ₎ − θ̄)², CI θ̂ ± z₀.₉₇₅·SE around the full fit.
pub fn jackknife_groups(
    episodes: &[EpisodeObs],
    groups: &[u32],
    full: &FitResult,
    fixed_adv: Option<AdvectionTransform>,
    opts: &FitOptions,
) -> Result<Jackknife> {
    if groups.len() != episodes.len() {
        return Err(Error::param("one group label per episode is required"));
    }
    let mut labels: Vec<u32> = groups.to_vec();
    labels.sort_unstable();
    labels.dedup();
    if labels.len() < 3 {
        return Err(Error::insufficient(format!(
            "jackknife needs at least 3 distinct months, found {}",
            labels.len()
        )));
    }
    let refit = |g: &u32| -> Result<[f64; 6]> {
        let subset: Vec<EpisodeObs> = episodes
            .iter()
            .zip(groups)
            .filter(|(_, l)| *l != g)
            .map(|(e, _)| e.clone())
            .collect();
        let fit_opts = FitOptions {
            std_errors: false,
            ..opts.clone()
        };
        Ok(fit_variogram(&subset, &full.params, fixed_adv, &fit_opts)?
            .params
            .to_array())
    };
    #[cfg(feature = "parallel")]
    let replicates: Vec<[f64; 6]> = {
        use rayon::prelude::*;
        labels.par_iter().map(refit).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let replicates: Vec<[f64; 6]> = labels.iter().map(refit).collect::<Result<_>>()?;
    let m = replicates.len() as f64;
    let est = full.params.to_array();
    let mut std_error = [0.0; 6];
    let mut ci_low = [0.0; 6];
    let mut ci_high = [0.0; 6];
    for j in 0..6 {
        let mean = replicates.iter().map(|r| r[j]).sum::<f64>() / m;
        let var = (m - 1.0) / m * replicates.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>();
        std_error[j] = var.sqrt();
        ci_low[j] = est[j] - Z_975 * std_error[j];
        ci_high[j] = est[j] + Z_975 * std_error[j];
    }
    Ok(Jackknife {
        groups: labels,
        replicates,
        std_error,
        ci_low,
        ci_high,
    })
}

/// Month labels of episodes, failing when any is unknown.
pub fn month_labels(episodes: &[EpisodeObs]) -> Result<Vec<u32>> {
    episodes
        .iter()
        .map(|e| {
            e.month
                .ok_or_else(|| Error::Data("jackknife by month needs calendar timestamps".into()))
        })
        .collect()
}

/// Unit system used when reporting a fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitSystem {
    pub name: &'static str,
    pub space: &'static str,
    pub time: &'static str,
    /// Size of the space unit in meters.
    pub space_factor: f64,
    /// Size of the time unit in dataset steps.
    pub time_factor: f64,
}

impl UnitSystem {
    pub fn canonical() -> Self {
        Self {
            name: "m-per-step",
            space: "m",
            time: "step",
            space_factor: 1.0,
            time_factor: 1.0,
        }
    }

    pub fn km_h(step_seconds: f64) -> Self {
        Self {
            name: "km-per-hour",
            space: "km",
            time: "h",
            space_factor: 1000.0,
            time_factor: 3600.0 / step_seconds,
        }
    }
}

/// Writes `parameter estimate ci_low ci_high units` lines in a unit system.
/// Confidence bounds are mapped through the same rescaling as the estimate.
pub fn write_fit_text<W: Write>(
    fit: &FitResult,
    jack: Option<&Jackknife>,
    units: &UnitSystem,
    mut out: W,
) -> Result<()> {
    let rescale = |v: [f64; 6]| -> [f64; 6] {
        let p = ExtendedParams {
            theta: VariogramParams {
                beta1: v[0],
                beta2: v[1],
                alpha1: fit.params.theta.alpha1,
                alpha2: fit.params.theta.alpha2,
            },
            adv: AdvectionTransform {
                eta1: v[4],
                eta2: fit.params.adv.eta2,
            },
        };
        let r = p.rescaled(units.space_factor, units.time_factor).to_array();
        [r[0], r[1], v[2], v[3], r[4], v[5]]
    };
    let est = rescale(fit.params.to_array());
    let unit_of = [
        format!("{}^-alpha1", units.space),
        format!("{}^-alpha2", units.time),
        "1".to_string(),
        "1".to_string(),
        format!("({}/{})^(1-eta2)", units.space, units.time),
        "1".to_string(),
    ];
    writeln!(out, "# units {}", units.name)?;
    writeln!(out, "# parameter estimate ci_low ci_high units")?;
    for j in 0..6 {
        let (lo, hi) = match jack {
            Some(jk) => {
                let lo = rescale(jk.ci_low)[j];
                let hi = rescale(jk.ci_high)[j];
                (lo.to_string(), hi.to_string())
            }
            None => ("NA".to_string(), "NA".to_string()),
        };
        let fixed = if fit.eta_fixed && j >= 4 { " fixed" } else { "" };
        writeln!(out, "{} {} {lo} {hi} {}{fixed}", PARAM_NAMES[j], est[j], unit_of[j])?;
    }
    writeln!(out, "loglik {:.6} NA NA 1", fit.loglik)?;
    writeln!(out, "n_episodes {} NA NA 1", fit.n_episodes)?;
    writeln!(out, "converged {} NA NA 1", u8::from(fit.converged))?;
    Ok(())
}

/// Reads the canonical-unit parameter block written by [`write_fit_text`].
pub fn read_fit_params(text: &str) -> Result<ExtendedParams> {
    let mut vals = [f64::NAN; 6];
    for line in text.lines() {
        let mut it = line.split_whitespace();
        let (Some(name), Some(v)) = (it.next(), it.next()) else {
            continue;
        };
        if let Some(j) = PARAM_NAMES.iter().position(|n| *n == name) {
            vals[j] = v
                .parse()
                .map_err(|_| Error::Data(format!("invalid value for {name}: {v:?}")))?;
        }
    }
    if let Some(j) = vals.iter().position(|v| v.is_nan()) {
        return Err(Error::Data(format!("parameter {} missing", PARAM_NAMES[j])));
    }
    ExtendedParams::new(
        VariogramParams::new(vals[0], vals[1], vals[2], vals[3])?,
        AdvectionTransform::new(vals[4], vals[5])?,
    )
}
