//! Conditional simulation of r-Pareto episodes and their mapping to rainfall.
//!
//! A space-time point set (sites × steps, conditioning at step 0) carries
//! a Gaussian process W with variogram γ. An episode is
//! `Y_p = R · exp(W_p − W_{p₀} − γ(p − p₀))` with `P(R > v) = 1/v`,
//! rescaled by the threshold, `Z = uY`, sent to the uniform scale through G
//! and to rainfall through the inverse marginal.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Grid;
use crate::dependence::{variogram, AdvectionTransform, VariogramParams, Velocity};
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::marginals::MarginalModel;
use crate::seed::{derive_seed, rng_from_seed, Rng};

/// Largest relative diagonal jitter tried before giving up on a covariance.
pub const MAX_JITTER: f64 = 1e-8;

/// Space-time points: every site at steps 0..n_steps, stored step-major
/// (`index = t · n_sites + s`). Conditioning is at (s0, step 0).
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationDomain {
    pub sites: Vec<(f64, f64)>,
    pub n_steps: usize,
    pub s0: usize,
}

impl SimulationDomain {
    pub fn new(sites: Vec<(f64, f64)>, n_steps: usize, s0: usize) -> Result<Self> {
        if sites.is_empty() || n_steps == 0 {
            return Err(Error::param("domain needs at least one site and one step"));
        }
        if s0 >= sites.len() {
            return Err(Error::param(format!("conditioning site {s0} out of range")));
        }
        let mut sorted = sites.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::param("domain sites must be distinct"));
        }
        Ok(Self { sites, n_steps, s0 })
    }

    /// Regular `nx × ny` lattice with spacing `dx`, sites row by row.
    pub fn lattice(nx: usize, ny: usize, dx: f64, n_steps: usize, s0: usize) -> Result<Self> {
        let sites = (0..ny)
            .flat_map(|j| (0..nx).map(move |i| (i as f64 * dx, j as f64 * dx)))
            .collect();
        Self::new(sites, n_steps, s0)
    }

    pub fn from_grid(grid: &Grid, n_steps: usize, s0: usize) -> Result<Self> {
        Self::new(grid.sites().iter().map(|s| (s.x, s.y)).collect(), n_steps, s0)
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn len(&self) -> usize {
        self.sites.len() * self.n_steps
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// (x, y, t) of point `i`.
    #[inline]
    pub fn point(&self, i: usize) -> (f64, f64, f64) {
        let n = self.sites.len();
        let (x, y) = self.sites[i % n];
        (x, y, (i / n) as f64)
    }

    pub fn conditioning_index(&self) -> usize {
        self.s0
    }

    pub fn with_conditioning(&self, s0: usize) -> Result<Self> {
        if s0 >= self.sites.len() {
            return Err(Error::param(format!("conditioning site {s0} out of range")));
        }
        Ok(Self { s0, ..self.clone() })
    }
}

#[inline]
fn gamma_between(d: &SimulationDomain, i: usize, j: usize, theta: &VariogramParams, v: Velocity) -> f64 {
    let (xi, yi, ti) = d.point(i);
    let (xj, yj, tj) = d.point(j);
    variogram((xi - xj, yi - yj), ti - tj, theta, v)
}

/// Covariance of W anchored at `anchor`: C(p, q) = γ(p−a) + γ(q−a) − γ(p−q).
fn anchored_covariance(domain: &SimulationDomain, anchor: usize, theta: &VariogramParams, v: Velocity) -> Matrix {
    let n = domain.len();
    let g0: Vec<f64> = (0..n).map(|i| gamma_between(domain, i, anchor, theta, v)).collect();
    let mut c = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            let val = if i == anchor || j == anchor {
                0.0
            } else if i == j {
                2.0 * g0[i]
            } else {
                g0[i] + g0[j] - gamma_between(domain, i, j, theta, v)
            };
            c.set(i, j, val);
            c.set(j, i, val);
        }
    }
    c
}

/// Covariance of W − W_{p₀} over the whole domain (conditioning row and
/// column are zero).
pub fn build_covariance(domain: &SimulationDomain, theta: &VariogramParams, v: Velocity) -> Matrix {
    anchored_covariance(domain, domain.conditioning_index(), theta, v)
}

/// Gaussian sampler for W anchored at a fixed point. Because only
/// increments matter, one factorization serves every conditioning site.
#[derive(Debug, Clone)]
pub struct AnchoredSampler {
    domain: SimulationDomain,
    theta: VariogramParams,
    v: Velocity,
    anchor: usize,
    chol: Cholesky,
}

/// One r-Pareto draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoDraw {
    pub r: f64,
    pub y: Vec<f64>,
}

impl AnchoredSampler {
    pub fn new(domain: &SimulationDomain, theta: &VariogramParams, v: Velocity) -> Result<Self> {
        theta.validate()?;
        if !v.is_finite() {
            return Err(Error::param("velocity must be finite"));
        }
        let anchor = domain.conditioning_index();
        let full = anchored_covariance(domain, anchor, theta, v);
        // Drop the anchor row and column, which are identically zero.
        let n = domain.len();
        let mut reduced = Matrix::zeros(n - 1);
        for (ri, i) in (0..n).filter(|&i| i != anchor).enumerate() {
            for (rj, j) in (0..n).filter(|&j| j != anchor).enumerate() {
                reduced.set(ri, rj, full.get(i, j));
            }
        }
        let chol = if n > 1 {
            Cholesky::new(&reduced, MAX_JITTER).map_err(|e| {
                Error::Factorization(format!(
                    "{e} (θ = {theta:?}, V = ({}, {}), {} sites × {} steps)",
                    v.vx,
                    v.vy,
                    domain.n_sites(),
                    domain.n_steps
                ))
            })?
        } else {
            Cholesky::new(&Matrix::zeros(0), MAX_JITTER)?
        };
        Ok(Self {
            domain: domain.clone(),
            theta: *theta,
            v,
            anchor,
            chol,
        })
    }

    pub fn domain(&self) -> &SimulationDomain {
        &self.domain
    }

    pub fn jitter(&self) -> f64 {
        self.chol.jitter()
    }

    /// W anchored at the sampler's anchor (W_anchor = 0).
    pub fn sample_gaussian<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let m = self.chol.dim();
        let z: Vec<f64> = (0..m).map(|_| StandardNormal.sample(rng)).collect();
        let lz = self.chol.mul_lower(&z);
        let mut w = Vec::with_capacity(m + 1);
        w.extend_from_slice(&lz[..self.anchor]);
        w.push(0.0);
        w.extend_from_slice(&lz[self.anchor..]);
        w
    }

    /// Y conditioned at site `s0`, step 0.
    pub fn sample_pareto<R: rand::Rng + ?Sized>(&self, rng: &mut R, s0: usize) -> ParetoDraw {
        let w = self.sample_gaussian(rng);
        let r = pareto_draw(rng);
        let p0 = s0;
        let w0 = w[p0];
        let y = (0..w.len())
            .map(|i| {
                let g = gamma_between(&self.domain, i, p0, &self.theta, self.v);
                r * (w[i] - w0 - g).exp()
            })
            .collect();
        ParetoDraw { r, y }
    }
}

/// R with P(R > v) = 1/v on [1, ∞), by inversion.
pub fn pareto_draw<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    1.0 / (1.0 - u)
}

/// One episode on the Pareto scale, deterministic in `seed`.
pub fn simulate_rpareto(
    domain: &SimulationDomain,
    theta: &VariogramParams,
    v: Velocity,
    seed: u64,
) -> Result<ParetoDraw> {
    let sampler = AnchoredSampler::new(domain, theta, v)?;
    Ok(sampler.sample_pareto(&mut rng_from_seed(seed), domain.s0))
}

/// Standardisation G onto the uniform scale with an atom p0 at zero.
pub fn standardize_g(z: f64, p0: f64) -> f64 {
    if z < 0.0 {
        0.0
    } else if z == 0.0 {
        p0
    } else if z <= 2.0 / (1.0 - p0) {
        p0 + (1.0 - p0).powi(2) / 4.0 * z
    } else {
        1.0 - 1.0 / z
    }
}

/// The staged transforms of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedEpisode {
    pub r: f64,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub u: Vec<f64>,
    /// Rainfall in mm.
    pub x: Vec<f64>,
}

/// Z = uY, U = G(Z), X = F⁻¹(U); with `precision`, values in (0, p) become p.
pub fn to_rainfall(
    draw: ParetoDraw,
    threshold: f64,
    marginal: &MarginalModel,
    precision: Option<f64>,
) -> SimulatedEpisode {
    let z: Vec<f64> = draw.y.iter().map(|y| threshold * y).collect();
    let u: Vec<f64> = z.iter().map(|&z| standardize_g(z, marginal.p0)).collect();
    let x = u
        .iter()
        .map(|&u| {
            let x = marginal.quantile(u.min(1.0 - f64::EPSILON));
            match precision {
                Some(p) if x > 0.0 && x < p => p,
                _ => x,
            }
        })
        .collect();
    SimulatedEpisode {
        r: draw.r,
        y: draw.y,
        z,
        u,
        x,
    }
}

/// Full generator for one episode with velocity V_E = A(V^emp).
#[allow(clippy::too_many_arguments)]
pub fn generate_episode(
    domain: &SimulationDomain,
    theta: &VariogramParams,
    v_emp: Velocity,
    adv: &AdvectionTransform,
    threshold: f64,
    marginal: &MarginalModel,
    seed: u64,
    precision: Option<f64>,
) -> Result<SimulatedEpisode> {
    marginal.validate()?;
    if !(threshold > 0.0) {
        return Err(Error::param(format!("threshold must be > 0, got {threshold}")));
    }
    let draw = simulate_rpareto(domain, theta, adv.apply(v_emp), seed)?;
    Ok(to_rainfall(draw, threshold, marginal, precision))
}

/// How each simulated episode gets its velocity.
#[derive(Debug, Clone, PartialEq)]
pub enum VelocitySampler {
    /// The same advection (already transformed) for every episode.
    Fixed(Velocity),
    /// Uniform resampling of empirical velocities, transformed by A.
    Resample(Vec<Velocity>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    Random,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub grid: Grid,
    pub n_steps: usize,
    pub n_episodes: usize,
    pub n_replicates: usize,
    pub conditioning: Conditioning,
    pub velocity: VelocitySampler,
    pub threshold: f64,
    pub precision: Option<f64>,
    pub seed: u64,
}

/// One simulated episode of an ensemble and its replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleEpisode {
    pub id: usize,
    pub s0: usize,
    /// Effective advection (m per step).
    pub velocity: Velocity,
    pub replicates: Vec<SimulatedEpisode>,
}

/// Simulates `n_episodes` episodes on a grid, each with a random (or fixed)
/// conditioning pixel and a sampled velocity. Factorizations are cached per
/// velocity and shared across conditioning pixels and replicates.
pub fn simulate_grid_ensemble(
    spec: &EnsembleSpec,
    theta: &VariogramParams,
    adv: &AdvectionTransform,
    marginal: &MarginalModel,
) -> Result<Vec<EnsembleEpisode>> {
    marginal.validate()?;
    if let Conditioning::Fixed(s) = spec.conditioning {
        if s >= spec.grid.len() {
            return Err(Error::param(format!("conditioning pixel {s} outside the grid")));
        }
    }
    if let VelocitySampler::Resample(v) = &spec.velocity {
        if v.is_empty() && spec.n_episodes > 0 {
            return Err(Error::insufficient("no velocities to resample"));
        }
    }
    let base = SimulationDomain::from_grid(&spec.grid, spec.n_steps, 0)?;
    let mut cache: HashMap<(u64, u64), Arc<AnchoredSampler>> = HashMap::new();
    let mut out = Vec::with_capacity(spec.n_episodes);
    for e in 0..spec.n_episodes {
        let mut rng: Rng = rng_from_seed(derive_seed(spec.seed, "episode-setup", e as u64));
        let s0 = match spec.conditioning {
            Conditioning::Fixed(s) => s,
            Conditioning::Random => rng.random_range(0..spec.grid.len()),
        };
        let velocity = match &spec.velocity {
            VelocitySampler::Fixed(v) => *v,
            VelocitySampler::Resample(vs) => adv.apply(vs[rng.random_range(0..vs.len())]),
        };
        let key = (velocity.vx.to_bits(), velocity.vy.to_bits());
        let sampler = match cache.get(&key) {
            Some(s) => Arc::clone(s),
            None => {
                let s = Arc::new(AnchoredSampler::new(&base, theta, velocity)?);
                cache.insert(key, Arc::clone(&s));
                s
            }
        };
        let episode_seed = derive_seed(spec.seed, "episode", e as u64);
        let one = |r: usize| {
            let mut rng = rng_from_seed(derive_seed(episode_seed, "replicate", r as u64));
            to_rainfall(
                sampler.sample_pareto(&mut rng, s0),
                spec.threshold,
                marginal,
                spec.precision,
            )
        };
        #[cfg(feature = "parallel")]
        let replicates = {
            use rayon::prelude::*;
            (0..spec.n_replicates).into_par_iter().map(one).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let replicates = (0..spec.n_replicates).map(one).collect();
        out.push(EnsembleEpisode {
            id: e,
            s0,
            velocity,
            replicates,
        });
    }
    Ok(out)
}

/// `episode_id, replicate, t, x_m, y_m, rain_mm`.
pub fn write_ensemble_csv<W: Write>(grid: &Grid, n_steps: usize, episodes: &[EnsembleEpisode], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["episode_id", "replicate", "t", "x_m", "y_m", "rain_mm"])?;
    let sites = grid.sites();
    let n = sites.len();
    for e in episodes {
        for (r, rep) in e.replicates.iter().enumerate() {
            for t in 0..n_steps {
                for (s, site) in sites.iter().enumerate() {
                    w.write_record([
                        e.id.to_string(),
                        r.to_string(),
                        t.to_string(),
                        site.x.to_string(),
                        site.y.to_string(),
                        format!("{:.6}", rep.x[t * n + s]),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Sidecar describing an ensemble: seed, parameters, threshold, correction
/// flag and per-episode conditioning pixel and velocity, as TOML.
pub fn write_ensemble_metadata<W: Write>(
    spec: &EnsembleSpec,
    theta: &VariogramParams,
    adv: &AdvectionTransform,
    marginal: &MarginalModel,
    episodes: &[EnsembleEpisode],
    mut out: W,
) -> Result<()> {
    writeln!(out, "seed = {}", spec.seed)?;
    writeln!(out, "n_episodes = {}", spec.n_episodes)?;
    writeln!(out, "n_replicates = {}", spec.n_replicates)?;
    writeln!(out, "n_steps = {}", spec.n_steps)?;
    writeln!(out, "threshold_mm = {:?}", spec.threshold)?;
    writeln!(out, "discretization_correction = {}", spec.precision.is_some())?;
    if let Some(p) = spec.precision {
        writeln!(out, "precision_mm = {p:?}")?;
    }
    let velocity = match spec.velocity {
        VelocitySampler::Fixed(_) => "fixed",
        VelocitySampler::Resample(_) => "resample",
    };
    writeln!(out, "velocity_sampler = \"{velocity}\"")?;
    writeln!(out, "\n[variogram]")?;
    writeln!(
        out,
        "beta1 = {:?}\nbeta2 = {:?}\nalpha1 = {:?}\nalpha2 = {:?}",
        theta.beta1, theta.beta2, theta.alpha1, theta.alpha2
    )?;
    writeln!(out, "eta1 = {:?}\neta2 = {:?}", adv.eta1, adv.eta2)?;
    writeln!(out, "\n[marginal]")?;
    writeln!(
        out,
        "p0 = {:?}\nxi = {:?}\nsigma = {:?}\nkappa = {:?}",
        marginal.p0, marginal.egpd.xi, marginal.egpd.sigma, marginal.egpd.kappa
    )?;
    let g = &spec.grid;
    writeln!(out, "\n[grid]")?;
    writeln!(
        out,
        "nx = {}\nny = {}\nx0_m = {:?}\ny0_m = {:?}\ndx_m = {:?}\ndy_m = {:?}",
        g.nx, g.ny, g.x0, g.y0, g.dx, g.dy
    )?;
    let sites = spec.grid.sites();
    for e in episodes {
        let (x, y) = (sites[e.s0].x, sites[e.s0].y);
        writeln!(out, "\n[[episode]]")?;
        writeln!(out, "id = {}\nconditioning_x_m = {x:?}\nconditioning_y_m = {y:?}", e.id)?;
        writeln!(out, "vx_m_step = {:?}\nvy_m_step = {:?}", e.velocity.vx, e.velocity.vy)?;
    }
    Ok(())
}
