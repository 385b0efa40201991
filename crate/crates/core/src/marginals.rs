//! Rainfall marginals: the extended generalized Pareto distribution (EGPD)
//! for positive intensities, mixed with a point mass at zero for dry steps.
//!
//! The EGPD used here is the power family `F(x) = H(x)^κ` where `H` is the
//! GPD cdf with shape ξ and scale σ. Its upper tail is GPD-like, while κ
//! controls the behaviour of small intensities.
//!
//! Observations at or below a left-censoring threshold enter the likelihood
//! through `log F(threshold)`; values exactly equal to the threshold are
//! treated as censored.

use crate::error::{Error, Result};
use crate::optim::{self, NelderMeadOptions};

/// Shape ξ, scale σ (mm) and lower-tail exponent κ of an EGPD.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgpdParams {
    pub xi: f64,
    pub sigma: f64,
    pub kappa: f64,
}

/// Fitting box for the EGPD maximum-likelihood search.
pub const XI_BOUNDS: (f64, f64) = (-0.5, 1.0);
pub const SIGMA_BOUNDS: (f64, f64) = (1e-6, 1e3);
pub const KAPPA_BOUNDS: (f64, f64) = (1e-3, 1e2);

const XI_ZERO: f64 = 1e-12;

impl EgpdParams {
    pub fn new(xi: f64, sigma: f64, kappa: f64) -> Result<Self> {
        let p = Self { xi, sigma, kappa };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.xi.is_finite() {
            return Err(Error::param(format!("xi must be finite, got {}", self.xi)));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::param(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(Error::param(format!("kappa must be > 0, got {}", self.kappa)));
        }
        Ok(())
    }

    /// Upper end of the support (∞ unless ξ < 0).
    pub fn upper_endpoint(&self) -> f64 {
        if self.xi < -XI_ZERO {
            -self.sigma / self.xi
        } else {
            f64::INFINITY
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        gpd_cdf_unchecked(x, self.xi, self.sigma).powf(self.kappa)
    }

    /// 1 − F(x), computed without cancellation in the upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        let ln_h = ln_gpd_cdf(x, self.xi, self.sigma);
        -(self.kappa * ln_h).exp_m1()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    /// log f(x) = log κ − log σ + (κ−1) log H(x) − (1/ξ + 1) log(1 + ξx/σ).
    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 || x >= self.upper_endpoint() {
            return f64::NEG_INFINITY;
        }
        let Self { xi, sigma, kappa } = *self;
        let ln_h = ln_gpd_cdf(x, xi, sigma);
        let ln_sf_part = if xi.abs() < XI_ZERO {
            -x / sigma
        } else {
            -(1.0 / xi + 1.0) * (xi * x / sigma).ln_1p()
        };
        kappa.ln() - sigma.ln() + (kappa - 1.0) * ln_h + ln_sf_part
    }

    /// Inverse cdf: σ((1 − u^{1/κ})^{−ξ} − 1)/ξ, or −σ log(1 − u^{1/κ}) at ξ = 0.
    pub fn quantile(&self, u: f64) -> f64 {
        // log(1 − u^{1/κ}) evaluated stably.
        let ln_one_minus_w = ln_one_minus_exp(u.ln() / self.kappa);
        if self.xi.abs() < XI_ZERO {
            -self.sigma * ln_one_minus_w
        } else {
            self.sigma * (-self.xi * ln_one_minus_w).exp_m1() / self.xi
        }
    }
}

/// log(1 − e^a) for a < 0.
fn ln_one_minus_exp(a: f64) -> f64 {
    if a > -std::f64::consts::LN_2 {
        (-a.exp_m1()).ln()
    } else {
        (-a.exp()).ln_1p()
    }
}

/// log of the GPD survival function; −∞ beyond the upper endpoint.
fn ln_gpd_sf(y: f64, xi: f64, sigma: f64) -> f64 {
    if xi.abs() < XI_ZERO {
        return -y / sigma;
    }
    let arg = xi * y / sigma;
    if arg <= -1.0 {
        return f64::NEG_INFINITY;
    }
    -arg.ln_1p() / xi
}

fn gpd_cdf_unchecked(y: f64, xi: f64, sigma: f64) -> f64 {
    -ln_gpd_sf(y, xi, sigma).exp_m1()
}

fn ln_gpd_cdf(y: f64, xi: f64, sigma: f64) -> f64 {
    ln_one_minus_exp(ln_gpd_sf(y, xi, sigma))
}

/// GPD survival function `(1 + ξy/σ)₊^{−1/ξ}` (or `exp(−y/σ)` at ξ = 0).
pub fn gpd_sf(y: f64, xi: f64, sigma_u: f64) -> Result<f64> {
    if !(sigma_u > 0.0) || !sigma_u.is_finite() {
        return Err(Error::domain(format!("GPD scale must be > 0, got {sigma_u}")));
    }
    if !(y >= 0.0) {
        return Err(Error::domain(format!("GPD argument must be >= 0, got {y}")));
    }
    if !xi.is_finite() {
        return Err(Error::domain("GPD shape must be finite"));
    }
    Ok(ln_gpd_sf(y, xi, sigma_u).exp())
}

pub fn egpd_cdf(x: f64, params: &EgpdParams) -> Result<f64> {
    params.validate()?;
    if !(x >= 0.0) {
        return Err(Error::domain(format!("EGPD cdf needs x >= 0, got {x}")));
    }
    Ok(params.cdf(x))
}

pub fn egpd_pdf(x: f64, params: &EgpdParams) -> Result<f64> {
    params.validate()?;
    if !(x >= 0.0) {
        return Err(Error::domain(format!("EGPD density needs x >= 0, got {x}")));
    }
    Ok(params.pdf(x))
}

pub fn egpd_quantile(u: f64, params: &EgpdParams) -> Result<f64> {
    params.validate()?;
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::domain(format!("EGPD quantile needs u in (0,1), got {u}")));
    }
    Ok(params.quantile(u))
}

/// Zero-inflated rainfall marginal: `F(0) = p0`, `F(x) = p0 + (1 − p0)·F_EGPD(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalModel {
    pub p0: f64,
    pub egpd: EgpdParams,
}

impl MarginalModel {
    pub fn new(p0: f64, egpd: EgpdParams) -> Result<Self> {
        let m = Self { p0, egpd };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p0 >= 0.0 && self.p0 < 1.0) {
            return Err(Error::param(format!("p0 must lie in [0,1), got {}", self.p0)));
        }
        self.egpd.validate()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            0.0
        } else if x == 0.0 {
            self.p0
        } else {
            self.p0 + (1.0 - self.p0) * self.egpd.cdf(x)
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        if u <= self.p0 {
            0.0
        } else if u >= 1.0 {
            self.egpd.upper_endpoint()
        } else {
            self.egpd.quantile((u - self.p0) / (1.0 - self.p0))
        }
    }
}

pub fn mixed_cdf(x: f64, model: &MarginalModel) -> Result<f64> {
    model.validate()?;
    if !(x >= 0.0) {
        return Err(Error::domain(format!("marginal cdf needs x >= 0, got {x}")));
    }
    Ok(model.cdf(x))
}

pub fn mixed_quantile(u: f64, model: &MarginalModel) -> Result<f64> {
    model.validate()?;
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::domain(format!("marginal quantile needs u in (0,1), got {u}")));
    }
    Ok(model.quantile(u))
}

/// Left-censoring at an integer multiple of the gauge precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CensoringSpec {
    pub precision: f64,
    pub multiplier: u32,
}

impl CensoringSpec {
    pub fn new(precision: f64, multiplier: u32) -> Result<Self> {
        if !(precision >= 0.0) || !precision.is_finite() {
            return Err(Error::param(format!("precision must be >= 0, got {precision}")));
        }
        Ok(Self { precision, multiplier })
    }

    pub fn none() -> Self {
        Self {
            precision: 0.0,
            multiplier: 0,
        }
    }

    pub fn threshold(&self) -> f64 {
        self.precision * f64::from(self.multiplier)
    }
}

/// A sample of positive values sharing one censoring threshold.
#[derive(Debug, Clone, Copy)]
pub struct CensoredSample<'a> {
    pub values: &'a [f64],
    pub threshold: f64,
}

/// Censored EGPD log-likelihood over several samples.
pub fn censored_loglik(params: &EgpdParams, samples: &[CensoredSample<'_>]) -> f64 {
    let mut total = 0.0;
    for s in samples {
        let censored_term = if s.threshold > 0.0 {
            params.kappa * ln_gpd_cdf(s.threshold, params.xi, params.sigma)
        } else {
            0.0
        };
        for &x in s.values {
            total += if x <= s.threshold {
                censored_term
            } else {
                params.ln_pdf(x)
            };
        }
    }
    total
}

/// Uncensored EGPD log-likelihood.
pub fn loglik(params: &EgpdParams, values: &[f64]) -> f64 {
    values.iter().map(|&x| params.ln_pdf(x)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgpdFitOptions {
    pub min_samples: usize,
    pub optimizer: NelderMeadOptions,
}

impl Default for EgpdFitOptions {
    fn default() -> Self {
        Self {
            min_samples: 50,
            optimizer: NelderMeadOptions {
                max_evals: 3000,
                xtol: 1e-9,
                ftol: 1e-9,
                initial_step: 0.5,
                restarts: 3,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgpdFit {
    pub params: EgpdParams,
    pub loglik: f64,
    /// Standard errors of (ξ, σ, κ) from the observed information, when the
    /// numerical Hessian is positive definite.
    pub std_errors: Option<[f64; 3]>,
    pub n: usize,
    pub n_censored: usize,
    pub evals: usize,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn to_box(z: f64, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * sigmoid(z)
}

fn from_box(x: f64, (lo, hi): (f64, f64)) -> f64 {
    logit(((x - lo) / (hi - lo)).clamp(1e-12, 1.0 - 1e-12))
}

fn to_log_box(z: f64, (lo, hi): (f64, f64)) -> f64 {
    to_box(z, (lo.ln(), hi.ln())).exp()
}

fn from_log_box(x: f64, (lo, hi): (f64, f64)) -> f64 {
    from_box(x.ln(), (lo.ln(), hi.ln()))
}

fn params_from_z(z: &[f64]) -> EgpdParams {
    EgpdParams {
        xi: to_box(z[0], XI_BOUNDS),
        sigma: to_log_box(z[1], SIGMA_BOUNDS),
        kappa: to_log_box(z[2], KAPPA_BOUNDS),
    }
}

fn z_from_params(p: &EgpdParams) -> [f64; 3] {
    [
        from_box(p.xi, XI_BOUNDS),
        from_log_box(p.sigma, SIGMA_BOUNDS),
        from_log_box(p.kappa, KAPPA_BOUNDS),
    ]
}

/// Fits an EGPD to positive values with left-censoring.
pub fn fit_egpd_censored(values: &[f64], censoring: &CensoringSpec, opts: &EgpdFitOptions) -> Result<EgpdFit> {
    fit_egpd_samples(
        &[CensoredSample {
            values,
            threshold: censoring.threshold(),
        }],
        opts,
    )
}

/// Fits one EGPD to several samples, each with its own censoring threshold.
pub fn fit_egpd_samples(samples: &[CensoredSample<'_>], opts: &EgpdFitOptions) -> Result<EgpdFit> {
    let n: usize = samples.iter().map(|s| s.values.len()).sum();
    if n == 0 {
        return Err(Error::insufficient("empty sample"));
    }
    if let Some(bad) = samples
        .iter()
        .flat_map(|s| s.values.iter())
        .find(|x| !(**x > 0.0) || !x.is_finite())
    {
        return Err(Error::domain(format!(
            "EGPD fit needs positive finite values, got {bad}"
        )));
    }
    if n < opts.min_samples {
        return Err(Error::insufficient(format!(
            "{n} positive values, at least {} required",
            opts.min_samples
        )));
    }
    let n_censored = samples
        .iter()
        .map(|s| s.values.iter().filter(|&&x| x <= s.threshold).count())
        .sum::<usize>();
    if n_censored == n {
        return Err(Error::insufficient(
            "every value is at or below its censoring threshold",
        ));
    }
    let all = samples.iter().flat_map(|s| s.values.iter().copied());
    let (min, max, sum) = all.fold((f64::INFINITY, f64::NEG_INFINITY, 0.0), |(lo, hi, s), x| {
        (lo.min(x), hi.max(x), s + x)
    });
    if min == max {
        return Err(Error::NonConvergence {
            reason: "degenerate sample: all values are equal".into(),
            best_point: vec![],
            best_value: f64::NAN,
        });
    }
    let mean = sum / n as f64;

    let objective = |z: &[f64]| -censored_loglik(&params_from_z(z), samples);
    let start = EgpdParams {
        xi: 0.1,
        sigma: mean.clamp(SIGMA_BOUNDS.0 * 10.0, SIGMA_BOUNDS.1 / 10.0),
        kappa: 1.0,
    };
    let m = optim::nelder_mead(objective, &z_from_params(&start), &opts.optimizer);
    let params = params_from_z(&m.x);
    let best_point = vec![params.xi, params.sigma, params.kappa];
    if !m.value.is_finite() {
        return Err(Error::NonConvergence {
            reason: "likelihood is not finite anywhere along the search".into(),
            best_point,
            best_value: m.value,
        });
    }
    if !m.converged {
        return Err(Error::NonConvergence {
            reason: format!("simplex did not contract within {} evaluations", m.evals),
            best_point,
            best_value: -m.value,
        });
    }
    if m.x.iter().any(|z| z.abs() > 25.0) {
        return Err(Error::NonConvergence {
            reason: "estimate sits on the boundary of the fitting box".into(),
            best_point,
            best_value: -m.value,
        });
    }

    let natural = |p: &[f64]| {
        -censored_loglik(
            &EgpdParams {
                xi: p[0],
                sigma: p[1],
                kappa: p[2],
            },
            samples,
        )
    };
    let std_errors = optim::observed_information_se(natural, &best_point).map(|se| [se[0], se[1], se[2]]);

    Ok(EgpdFit {
        params,
        loglik: -m.value,
        std_errors,
        n,
        n_censored,
        evals: m.evals,
    })
}

/// Chooses the censoring multiplier that minimizes the RMSE between empirical
/// and fitted quantiles. The comparison grid only uses probabilities whose
/// empirical quantile lies above the largest candidate threshold, so every
/// candidate is scored on the same points. Candidates whose fit fails get a
/// NaN score; the call fails only when none can be fitted.
pub fn select_censoring(
    values: &[f64],
    precision: f64,
    multipliers: &[u32],
    opts: &EgpdFitOptions,
) -> Result<(CensoringSpec, Vec<(u32, f64)>)> {
    if multipliers.is_empty() {
        return Err(Error::param("no censoring multipliers to compare"));
    }
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let top = precision * f64::from(*multipliers.iter().max().unwrap_or(&1));
    let probs: Vec<f64> = (1..=199)
        .map(|i| i as f64 / 200.0)
        .filter(|&p| empirical_quantile_sorted(&sorted, p) > top)
        .collect();
    if probs.is_empty() {
        return Err(Error::insufficient("no quantiles above the censoring thresholds"));
    }
    let mut scores = Vec::with_capacity(multipliers.len());
    let mut last_err = None;
    for &k in multipliers {
        let spec = CensoringSpec::new(precision, k)?;
        let fit = match fit_egpd_censored(values, &spec, opts) {
            Ok(f) => f,
            Err(e) => {
                last_err = Some(e);
                scores.push((k, f64::NAN));
                continue;
            }
        };
        let mse = probs
            .iter()
            .map(|&p| (empirical_quantile_sorted(&sorted, p) - fit.params.quantile(p)).powi(2))
            .sum::<f64>()
            / probs.len() as f64;
        scores.push((k, mse.sqrt()));
    }
    let best = scores
        .iter()
        .filter(|s| !s.1.is_nan())
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|&(k, _)| k);
    match (best, last_err) {
        (Some(k), _) => Ok((CensoringSpec::new(precision, k)?, scores)),
        (None, Some(e)) => Err(e),
        (None, None) => Err(Error::insufficient("no censoring candidate could be fitted")),
    }
}

/// Inverse of the empirical cdf (order statistic ⌈n·p⌉).
pub fn empirical_quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let idx = ((n as f64 * p).ceil() as usize).clamp(1, n);
    sorted[idx - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PoolMode {
    /// One EGPD fitted to the positive values of every site together.
    #[default]
    Pooled,
    /// Per-site fits averaged parameter by parameter.
    Averaged,
}

/// Rainfall at one site; NaN marks a missing observation.
#[derive(Debug, Clone)]
pub struct SiteSample<'a> {
    pub id: &'a str,
    pub values: &'a [f64],
    pub censoring: CensoringSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiteFit {
    pub id: String,
    pub n_observed: usize,
    pub n_positive: usize,
    pub p0: f64,
    pub fit: Option<EgpdFit>,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalFit {
    pub model: MarginalModel,
    pub mode: PoolMode,
    /// Log-likelihood and standard errors of the retained EGPD fit (pooled
    /// mode only).
    pub pooled: Option<EgpdFit>,
    pub sites: Vec<SiteFit>,
}

/// Fits the zero-inflated EGPD marginal from per-site series.
///
/// Missing values are dropped. A site without observations, or whose EGPD
/// fit fails, is reported with a warning and left out of averaging.
pub fn fit_marginal_model(sites: &[SiteSample<'_>], mode: PoolMode, opts: &EgpdFitOptions) -> Result<MarginalFit> {
    if sites.is_empty() {
        return Err(Error::insufficient("no sites"));
    }
    let positives: Vec<Vec<f64>> = sites
        .iter()
        .map(|s| s.values.iter().copied().filter(|x| *x > 0.0).collect())
        .collect();

    let mut table = Vec::with_capacity(sites.len());
    let (mut zeros_total, mut observed_total) = (0usize, 0usize);
    for (site, pos) in sites.iter().zip(&positives) {
        let observed = site.values.iter().filter(|x| !x.is_nan()).count();
        let zeros = site.values.iter().filter(|x| **x == 0.0).count();
        if observed == 0 {
            table.push(SiteFit {
                id: site.id.to_string(),
                n_observed: 0,
                n_positive: 0,
                p0: f64::NAN,
                fit: None,
                warning: Some("no observations; site excluded".into()),
            });
            continue;
        }
        zeros_total += zeros;
        observed_total += observed;
        let (fit, warning) = match fit_egpd_censored(pos, &site.censoring, opts) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(format!("EGPD fit failed: {e}"))),
        };
        table.push(SiteFit {
            id: site.id.to_string(),
            n_observed: observed,
            n_positive: pos.len(),
            p0: zeros as f64 / observed as f64,
            fit,
            warning,
        });
    }
    if observed_total == 0 {
        return Err(Error::insufficient("no observed values at any site"));
    }

    match mode {
        PoolMode::Pooled => {
            let samples: Vec<CensoredSample<'_>> = sites
                .iter()
                .zip(&positives)
                .filter(|(_, pos)| !pos.is_empty())
                .map(|(s, pos)| CensoredSample {
                    values: pos,
                    threshold: s.censoring.threshold(),
                })
                .collect();
            let fit = fit_egpd_samples(&samples, opts)?;
            let p0 = zeros_total as f64 / observed_total as f64;
            Ok(MarginalFit {
                model: MarginalModel::new(p0, fit.params)?,
                mode,
                pooled: Some(fit),
                sites: table,
            })
        }
        PoolMode::Averaged => {
            let fitted: Vec<(&SiteFit, &EgpdFit)> =
                table.iter().filter_map(|s| s.fit.as_ref().map(|f| (s, f))).collect();
            if fitted.is_empty() {
                return Err(Error::insufficient("no site produced an EGPD fit"));
            }
            let m = fitted.len() as f64;
            let avg = |g: &dyn Fn(&EgpdParams) -> f64| fitted.iter().map(|(_, f)| g(&f.params)).sum::<f64>() / m;
            let egpd = EgpdParams::new(avg(&|p| p.xi), avg(&|p| p.sigma), avg(&|p| p.kappa))?;
            let p0 = fitted.iter().map(|(s, _)| s.p0).sum::<f64>() / m;
            Ok(MarginalFit {
                model: MarginalModel::new(p0, egpd)?,
                mode,
                pooled: None,
                sites: table,
            })
        }
    }
}
