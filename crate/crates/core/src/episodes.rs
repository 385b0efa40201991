//! Extreme episodes: conditioning exceedances, spatio-temporal thinning,
//! lag classes and joint-exceedance counts.

use std::io::Write;
use std::path::Path;

use crate::data::SpaceTimeData;
use crate::dependence::Velocity;
use crate::error::{Error, Result};
use crate::marginals::empirical_quantile_sorted;

/// Which values enter the threshold quantile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuantileBasis {
    /// Strictly positive values only.
    #[default]
    Positive,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeConfig {
    pub q: f64,
    /// Episode duration in steps.
    pub delta: usize,
    /// Minimum spatial separation in meters.
    pub d_min: f64,
    pub max_episodes: Option<usize>,
    pub basis: QuantileBasis,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            q: 0.95,
            delta: 12,
            d_min: 1200.0,
            max_episodes: None,
            basis: QuantileBasis::Positive,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::param(format!("q must lie in (0, 1), got {}", self.q)));
        }
        if self.delta == 0 {
            return Err(Error::param("delta must be >= 1 step"));
        }
        if !(self.d_min >= 0.0) {
            return Err(Error::param(format!("d_min must be >= 0, got {}", self.d_min)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub id: usize,
    /// Conditioning site (or pixel) index.
    pub site: usize,
    pub t0: usize,
    pub delta: usize,
    /// Empirical velocity in m per step, once estimated.
    pub velocity: Option<Velocity>,
    /// Observations above the threshold inside the window, conditioning point included.
    pub n_exceedances: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeCatalog {
    pub threshold: f64,
    pub episodes: Vec<Episode>,
}

impl EpisodeCatalog {
    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }
}

/// Empirical q-quantile (inverse ECDF) of the non-missing values.
pub fn threshold_from_quantile(data: &SpaceTimeData, q: f64, basis: QuantileBasis) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::param(format!("q must lie in (0, 1), got {q}")));
    }
    let mut v: Vec<f64> = data
        .values()
        .iter()
        .copied()
        .filter(|x| !x.is_nan() && (basis == QuantileBasis::All || *x > 0.0))
        .collect();
    if v.is_empty() {
        return Err(Error::insufficient("no usable values for the threshold quantile"));
    }
    v.sort_by(f64::total_cmp);
    Ok(empirical_quantile_sorted(&v, q))
}

/// Greedy chronological thinning of conditioning exceedances.
///
/// Candidates are all (s, t) with X > u, ordered by time, then site id, then
/// value (descending). A candidate is kept when every kept episode is at
/// least `d_min` away in space or `delta` steps away in time.
pub fn select_episodes(data: &SpaceTimeData, u: f64, config: &EpisodeConfig) -> Result<EpisodeCatalog> {
    config.validate()?;
    let n = data.n_sites();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| data.sites[a].id.cmp(&data.sites[b].id));
    let mut kept: Vec<(usize, usize)> = Vec::new();
    // Index into `kept` of the first episode still within delta of the scan time.
    let mut active = 0;
    'scan: for t in 0..data.n_steps() {
        while active < kept.len() && t - kept[active].1 >= config.delta {
            active += 1;
        }
        let row = data.slice(t);
        let mut cands: Vec<usize> = order.iter().copied().filter(|&s| row[s] > u).collect();
        cands.sort_by(|&a, &b| data.sites[a].id.cmp(&data.sites[b].id).then(row[b].total_cmp(&row[a])));
        for s in cands {
            let site = &data.sites[s];
            let clash = kept[active..]
                .iter()
                .any(|&(s2, _)| site.distance(&data.sites[s2]) < config.d_min);
            if !clash {
                kept.push((s, t));
                if config.max_episodes.is_some_and(|m| kept.len() >= m) {
                    break 'scan;
                }
            }
        }
    }
    let episodes = kept
        .into_iter()
        .enumerate()
        .map(|(id, (site, t0))| Episode {
            id,
            site,
            t0,
            delta: config.delta,
            velocity: None,
            n_exceedances: window_exceedances(data, t0, config.delta, u),
        })
        .collect();
    Ok(EpisodeCatalog { threshold: u, episodes })
}

fn window_exceedances(data: &SpaceTimeData, t0: usize, delta: usize, u: f64) -> usize {
    (t0..(t0 + delta).min(data.n_steps()))
        .map(|t| data.slice(t).iter().filter(|&&x| x > u).count())
        .sum()
}

/// Spatial and temporal lag classes.
///
/// Spatial class 0 is distance 0 (the conditioning site itself); class i ≥ 1
/// covers distances in (edges[i−1], edges[i]], with edges[0] = 0. Temporal
/// classes are the lags 0..n_tau.
#[derive(Debug, Clone, PartialEq)]
pub struct LagClasses {
    pub edges: Vec<f64>,
    /// Representative distance per spatial class (0 for class 0).
    pub centers: Vec<f64>,
    pub n_tau: usize,
}

const DIST_TOL: f64 = 1e-6;

impl LagClasses {
    pub fn n_spatial(&self) -> usize {
        self.centers.len()
    }

    /// Spatial class of a distance, `None` beyond the last edge.
    pub fn spatial_class(&self, d: f64) -> Option<usize> {
        if d <= DIST_TOL {
            return Some(0);
        }
        // edges is sorted; first edge >= d.
        let i = self.edges.partition_point(|&e| e < d - DIST_TOL);
        (i >= 1 && i < self.edges.len()).then_some(i)
    }

    /// One class per distinct pairwise distance (regular grids).
    pub fn exact(data: &SpaceTimeData, n_tau: usize, max_dist: Option<f64>) -> Self {
        let mut d = positive_distances(data);
        d.dedup_by(|a, b| (*a - *b).abs() <= DIST_TOL);
        if let Some(m) = max_dist {
            d.retain(|&x| x <= m + DIST_TOL);
        }
        let mut edges = vec![0.0];
        edges.extend(d.iter().copied());
        let mut centers = vec![0.0];
        centers.extend(d);
        Self { edges, centers, n_tau }
    }

    /// `n_bins` bins holding roughly equal numbers of site pairs (gauges).
    pub fn equal_count(data: &SpaceTimeData, n_tau: usize, n_bins: usize) -> Result<Self> {
        let d = positive_distances(data);
        if d.is_empty() || n_bins == 0 {
            return Err(Error::insufficient(
                "need at least two distinct sites for spatial lag classes",
            ));
        }
        let mut edges = vec![0.0];
        for b in 1..=n_bins {
            let e = empirical_quantile_sorted(&d, b as f64 / n_bins as f64);
            if e > *edges.last().unwrap_or(&0.0) + DIST_TOL {
                edges.push(e);
            }
        }
        let mut centers = vec![0.0];
        for w in edges.windows(2) {
            let inside: Vec<f64> = d
                .iter()
                .copied()
                .filter(|&x| x > w[0] + DIST_TOL && x <= w[1] + DIST_TOL)
                .collect();
            centers.push(if inside.is_empty() {
                0.5 * (w[0] + w[1])
            } else {
                inside.iter().sum::<f64>() / inside.len() as f64
            });
        }
        Ok(Self { edges, centers, n_tau })
    }

    pub fn for_data(data: &SpaceTimeData, n_tau: usize, n_bins: usize) -> Result<Self> {
        if data.grid.is_some() {
            Ok(Self::exact(data, n_tau, None))
        } else {
            Self::equal_count(data, n_tau, n_bins)
        }
    }
}

fn positive_distances(data: &SpaceTimeData) -> Vec<f64> {
    let n = data.n_sites();
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let x = data.sites[i].distance(&data.sites[j]);
            if x > DIST_TOL {
                d.push(x);
            }
        }
    }
    d.sort_by(f64::total_cmp);
    d
}

/// Successes K and trials N per (spatial class, temporal lag).
#[derive(Debug, Clone, PartialEq)]
pub struct LagCounts {
    pub n_spatial: usize,
    pub n_tau: usize,
    pub k: Vec<u64>,
    pub n: Vec<u64>,
}

impl LagCounts {
    pub fn zeros(n_spatial: usize, n_tau: usize) -> Self {
        Self {
            n_spatial,
            n_tau,
            k: vec![0; n_spatial * n_tau],
            n: vec![0; n_spatial * n_tau],
        }
    }

    #[inline]
    pub fn index(&self, class: usize, tau: usize) -> usize {
        class * self.n_tau + tau
    }

    pub fn get(&self, class: usize, tau: usize) -> (u64, u64) {
        let i = self.index(class, tau);
        (self.k[i], self.n[i])
    }

    pub fn add(&mut self, other: &LagCounts) {
        for (a, b) in self.k.iter_mut().zip(&other.k) {
            *a += b;
        }
        for (a, b) in self.n.iter_mut().zip(&other.n) {
            *a += b;
        }
    }
}

/// Joint-exceedance counts of one episode window.
pub fn episode_counts(data: &SpaceTimeData, episode: &Episode, u: f64, classes: &LagClasses) -> LagCounts {
    let mut out = LagCounts::zeros(classes.n_spatial(), classes.n_tau);
    let s0 = &data.sites[episode.site];
    let class_of: Vec<Option<usize>> = data
        .sites
        .iter()
        .map(|s| classes.spatial_class(s.distance(s0)))
        .collect();
    let t_end = (episode.t0 + episode.delta).min(data.n_steps());
    for t in episode.t0..t_end {
        let tau = t - episode.t0;
        if tau >= classes.n_tau {
            break;
        }
        for (s, &x) in data.slice(t).iter().enumerate() {
            if x.is_nan() || (tau == 0 && s == episode.site) {
                continue;
            }
            if let Some(c) = class_of[s] {
                let i = out.index(c, tau);
                out.n[i] += 1;
                out.k[i] += u64::from(x > u);
            }
        }
    }
    out
}

/// K_tot and N_tot over a catalog.
pub fn count_joint_exceedances(data: &SpaceTimeData, catalog: &EpisodeCatalog, classes: &LagClasses) -> LagCounts {
    let per_episode = |e: &Episode| episode_counts(data, e, catalog.threshold, classes);
    #[cfg(feature = "parallel")]
    let parts: Vec<LagCounts> = {
        use rayon::prelude::*;
        catalog.episodes.par_iter().map(per_episode).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<LagCounts> = catalog.episodes.iter().map(per_episode).collect();
    let mut total = LagCounts::zeros(classes.n_spatial(), classes.n_tau);
    for p in &parts {
        total.add(p);
    }
    total
}

/// Joint exceedances of X > u by spatial class (pairs of distinct sites at
/// the same step) and by temporal lag (the same site `tau` steps apart).
#[derive(Debug, Clone, PartialEq)]
pub struct ExceedanceProfile {
    pub threshold: f64,
    /// Indexed by spatial class; class 0 (same site) is always 0.
    pub spatial: Vec<u64>,
    /// Indexed by temporal lag; lag 0 is always 0.
    pub temporal: Vec<u64>,
}

pub fn joint_exceedance_profile(data: &SpaceTimeData, u: f64, classes: &LagClasses) -> ExceedanceProfile {
    let n = data.n_sites();
    let mut pair_class = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            pair_class.push(if j > i {
                classes.spatial_class(data.sites[i].distance(&data.sites[j]))
            } else {
                None
            });
        }
    }
    let mut spatial = vec![0u64; classes.n_spatial()];
    let mut temporal = vec![0u64; classes.n_tau];
    let mut wet = Vec::with_capacity(n);
    for t in 0..data.n_steps() {
        let row = data.slice(t);
        wet.clear();
        wet.extend((0..n).filter(|&s| row[s] > u));
        for (a, &i) in wet.iter().enumerate() {
            for &j in &wet[a + 1..] {
                if let Some(c) = pair_class[i * n + j] {
                    spatial[c] += 1;
                }
            }
            for (tau, slot) in temporal.iter_mut().enumerate().skip(1) {
                if t + tau < data.n_steps() && data.value(t + tau, i) > u {
                    *slot += 1;
                }
            }
        }
    }
    ExceedanceProfile {
        threshold: u,
        spatial,
        temporal,
    }
}

/// Profiles for several candidate quantiles.
pub fn exceedance_count_profile(
    data: &SpaceTimeData,
    q_list: &[f64],
    basis: QuantileBasis,
    classes: &LagClasses,
) -> Result<Vec<(f64, ExceedanceProfile)>> {
    q_list
        .iter()
        .map(|&q| {
            let u = threshold_from_quantile(data, q, basis)?;
            Ok((q, joint_exceedance_profile(data, u, classes)))
        })
        .collect()
}

/// Number of selected episodes for every (δ, d_min) combination.
pub fn episode_tradeoff(
    data: &SpaceTimeData,
    u: f64,
    delta_grid: &[usize],
    dmin_grid: &[f64],
) -> Result<Vec<(usize, f64, usize)>> {
    let mut out = Vec::with_capacity(delta_grid.len() * dmin_grid.len());
    for &delta in delta_grid {
        for &d_min in dmin_grid {
            let cfg = EpisodeConfig {
                delta,
                d_min,
                ..EpisodeConfig::default()
            };
            out.push((delta, d_min, select_episodes(data, u, &cfg)?.len()));
        }
    }
    Ok(out)
}

/// Writes `episode_id, site_id_or_pixel, t0, delta, vx, vy, n_exceedances`
/// with velocities in m per step (empty when unknown).
pub fn write_catalog_csv<W: Write>(data: &SpaceTimeData, catalog: &EpisodeCatalog, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "episode_id",
        "site_id_or_pixel",
        "t0",
        "delta",
        "vx",
        "vy",
        "n_exceedances",
    ])?;
    for e in &catalog.episodes {
        let (vx, vy) = e
            .velocity
            .map_or((String::new(), String::new()), |v| (v.vx.to_string(), v.vy.to_string()));
        w.write_record([
            e.id.to_string(),
            data.sites[e.site].id.clone(),
            data.axis.label(e.t0),
            e.delta.to_string(),
            vx,
            vy,
            e.n_exceedances.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a catalog written by [`write_catalog_csv`] against the same data.
pub fn read_catalog_csv(path: &Path, data: &SpaceTimeData, threshold: f64) -> Result<EpisodeCatalog> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let labels: std::collections::HashMap<String, usize> =
        (0..data.n_steps()).map(|t| (data.axis.label(t), t)).collect();
    let mut episodes = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let err = |m: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: m,
        };
        if rec.len() != 7 {
            return Err(err(format!("expected 7 fields, found {}", rec.len())));
        }
        let num = |i: usize| -> Result<usize> {
            rec[i]
                .parse()
                .map_err(|_| err(format!("invalid integer {:?}", &rec[i])))
        };
        let site = data
            .site_index(&rec[1])
            .ok_or_else(|| err(format!("unknown site {:?}", &rec[1])))?;
        let t0 = *labels
            .get(&rec[2])
            .ok_or_else(|| err(format!("timestamp {:?} not in data", &rec[2])))?;
        let velocity = if rec[4].is_empty() || rec[5].is_empty() {
            None
        } else {
            let f = |i: usize| -> Result<f64> {
                rec[i]
                    .parse()
                    .map_err(|_| err(format!("invalid velocity {:?}", &rec[i])))
            };
            Some(Velocity::new(f(4)?, f(5)?))
        };
        episodes.push(Episode {
            id: num(0)?,
            site,
            t0,
            delta: num(3)?,
            velocity,
            n_exceedances: num(6)?,
        });
    }
    Ok(EpisodeCatalog { threshold, episodes })
}
