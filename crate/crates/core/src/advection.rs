//! Empirical advection from rainfall barycenter tracking.

use std::io::Write;

use crate::data::{Site, SpaceTimeData};
use crate::dependence::{units, AdvectionTransform, Velocity};
use crate::episodes::{Episode, EpisodeCatalog};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocitySource {
    Gridded,
    GaugeFallback,
}

impl VelocitySource {
    pub fn as_str(&self) -> &'static str {
        match self {
            VelocitySource::Gridded => "gridded",
            VelocitySource::GaugeFallback => "gauge-fallback",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalVelocity {
    /// Meters per step of the dataset it was estimated on.
    pub v: Velocity,
    pub source: VelocitySource,
    pub n_displacements: usize,
}

/// Intensity-weighted centroid of one slice. Missing values carry no
/// weight; `None` when the slice is dry.
pub fn barycenter(sites: &[Site], values: &[f64]) -> Option<(f64, f64)> {
    let (mut w, mut x, mut y) = (0.0, 0.0, 0.0);
    for (s, &v) in sites.iter().zip(values) {
        if v > 0.0 {
            w += v;
            x += v * s.x;
            y += v * s.y;
        }
    }
    (w > 0.0).then(|| (x / w, y / w))
}

/// Average displacement per step of the barycenter over steps
/// `t_start..=t_end`. Only consecutive pairs of wet slices contribute.
pub fn estimate_velocity(
    data: &SpaceTimeData,
    t_start: usize,
    t_end: usize,
    source: VelocitySource,
) -> Result<EmpiricalVelocity> {
    let t_end = t_end.min(data.n_steps().saturating_sub(1));
    let mut prev = None;
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for t in t_start..=t_end {
        let b = barycenter(&data.sites, data.slice(t));
        if let (Some((x0, y0)), Some((x1, y1))) = (prev, b) {
            sx += x1 - x0;
            sy += y1 - y0;
            n += 1;
        }
        prev = b;
    }
    if n == 0 {
        return Err(Error::NoVelocity(format!(
            "no consecutive wet slices between steps {t_start} and {t_end}"
        )));
    }
    Ok(EmpiricalVelocity {
        v: Velocity::new(sx / n as f64, sy / n as f64),
        source,
        n_displacements: n,
    })
}

/// Which gridded episode (if any) serves a fine-scale episode: those whose
/// conditioning time falls in the fine window padded by `pad_seconds` on
/// both sides; the nearest conditioning time to the fine start wins, ties
/// going to the earlier one.
pub fn match_episode(
    fine: &SpaceTimeData,
    episode: &Episode,
    grid: &SpaceTimeData,
    grid_catalog: &EpisodeCatalog,
    pad_seconds: i64,
) -> Option<usize> {
    let start = fine.axis.seconds(episode.t0);
    let end = fine.axis.seconds(episode.t0 + episode.delta);
    let lo = start - pad_seconds;
    let hi = end + pad_seconds;
    grid_catalog
        .episodes
        .iter()
        .enumerate()
        .filter_map(|(i, g)| {
            let t = grid.axis.seconds(g.t0);
            (t >= lo && t <= hi).then_some(((t - start).abs(), t, i))
        })
        .min()
        .map(|(_, _, i)| i)
}

/// Per-episode outcome of [`match_and_assign`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdvectionRecord {
    pub episode_id: usize,
    /// In m per step of the fine dataset.
    pub velocity: Option<EmpiricalVelocity>,
    pub matched: Option<usize>,
}

/// Assigns an empirical velocity to every fine-scale episode, from the
/// matched gridded episode when possible and from the gauges otherwise.
/// The gridded estimate uses that episode's own window intersected with the
/// padded fine window, converted to m per fine step.
pub fn match_and_assign(
    fine: &SpaceTimeData,
    catalog: &mut EpisodeCatalog,
    gridded: Option<(&SpaceTimeData, &EpisodeCatalog)>,
    pad_seconds: i64,
) -> Vec<AdvectionRecord> {
    let mut out = Vec::with_capacity(catalog.len());
    for e in &mut catalog.episodes {
        let mut matched = None;
        let mut velocity = None;
        if let Some((grid, gcat)) = gridded {
            if let Some(i) = match_episode(fine, e, grid, gcat, pad_seconds) {
                matched = Some(i);
                let g = &gcat.episodes[i];
                let lo = fine.axis.seconds(e.t0) - pad_seconds;
                let hi = fine.axis.seconds(e.t0 + e.delta) + pad_seconds;
                let first = (g.t0..g.t0 + g.delta).find(|&t| grid.axis.seconds(t) >= lo);
                let last = (g.t0..g.t0 + g.delta).rev().find(|&t| grid.axis.seconds(t) <= hi);
                if let (Some(a), Some(b)) = (first, last) {
                    if let Ok(mut ev) = estimate_velocity(grid, a, b, VelocitySource::Gridded) {
                        ev.v = ev.v.scaled(fine.axis.step_seconds / grid.axis.step_seconds);
                        velocity = Some(ev);
                    }
                }
            }
        }
        if velocity.is_none() {
            velocity = estimate_velocity(fine, e.t0, e.t0 + e.delta - 1, VelocitySource::GaugeFallback).ok();
        }
        e.velocity = velocity.map(|v| v.v);
        out.push(AdvectionRecord {
            episode_id: e.id,
            velocity,
            matched,
        });
    }
    out
}

/// Drops episodes whose empirical speed exceeds `max_speed` (same units as
/// the stored velocities). Episodes without a velocity are kept. Returns the
/// fraction removed.
pub fn filter_speed_range(catalog: &mut EpisodeCatalog, max_speed: f64) -> f64 {
    let before = catalog.len();
    catalog
        .episodes
        .retain(|e| e.velocity.is_none_or(|v| v.speed() <= max_speed));
    if before == 0 {
        0.0
    } else {
        (before - catalog.len()) as f64 / before as f64
    }
}

/// V_E = A(V^emp) for every episode with a velocity.
pub fn final_velocities(catalog: &EpisodeCatalog, adv: &AdvectionTransform) -> Vec<Option<Velocity>> {
    catalog
        .episodes
        .iter()
        .map(|e| e.velocity.map(|v| adv.apply(v)))
        .collect()
}

/// `episode_id, source, n_displacements, vx_m_step, vy_m_step, speed_kmh, matched_episode`.
pub fn write_advection_csv<W: Write>(records: &[AdvectionRecord], step_seconds: f64, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "episode_id",
        "source",
        "n_displacements",
        "vx_m_step",
        "vy_m_step",
        "speed_kmh",
        "matched_episode",
    ])?;
    for r in records {
        let matched = r.matched.map_or(String::new(), |m| m.to_string());
        match r.velocity {
            Some(ev) => w.write_record([
                r.episode_id.to_string(),
                ev.source.as_str().to_string(),
                ev.n_displacements.to_string(),
                ev.v.vx.to_string(),
                ev.v.vy.to_string(),
                units::mps_to_kmh(ev.v.speed(), step_seconds).to_string(),
                matched,
            ])?,
            None => w.write_record([
                r.episode_id.to_string(),
                "missing".to_string(),
                "0".to_string(),
                String::new(),
                String::new(),
                String::new(),
                matched,
            ])?,
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Grid, TimeAxis};
    use rand::{Rng as _, SeedableRng};

    fn moving_blob(nx: usize, ny: usize, nt: usize, step: (i64, i64), start: (i64, i64)) -> SpaceTimeData {
        let grid = Grid::new(nx, ny, 0.0, 0.0, 1000.0, 1000.0).unwrap();
        let mut v = vec![0.0; nx * ny * nt];
        for t in 0..nt {
            let cx = start.0 + step.0 * t as i64;
            let cy = start.1 + step.1 * t as i64;
            for (dx, dy, w) in [(0, 0, 4.0), (1, 0, 2.0), (0, 1, 1.0), (-1, -1, 0.5)] {
                let (i, j) = (cx + dx, cy + dy);
                if i >= 0 && j >= 0 && (i as usize) < nx && (j as usize) < ny {
                    v[t * nx * ny + grid.index(i as usize, j as usize)] = w;
                }
            }
        }
        SpaceTimeData::gridded(grid, TimeAxis::calendar(1_600_000_000, 3600.0), nt, v).unwrap()
    }

    #[test]
    fn barycenter_basics() {
        let sites = vec![
            Site::new("a", 0.0, 0.0),
            Site::new("b", 10.0, 4.0),
            Site::new("c", 3.0, 3.0),
        ];
        assert_eq!(barycenter(&sites, &[0.0, 2.0, 0.0]), Some((10.0, 4.0)));
        assert_eq!(barycenter(&sites, &[1.0, 1.0, 0.0]), Some((5.0, 2.0)));
        assert_eq!(barycenter(&sites, &[0.0, 0.0, f64::NAN]), None);
        let a = barycenter(&sites, &[1.0, 2.0, 3.0]).unwrap();
        let b = barycenter(&sites, &[7.0, 14.0, 21.0]).unwrap();
        assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
    }

    #[test]
    fn barycenter_matches_weighted_mean() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let sites: Vec<Site> = (0..30)
                .map(|i| Site::new(format!("{i}"), rng.random_range(-5e3..5e3), rng.random_range(-5e3..5e3)))
                .collect();
            let w: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..10.0)).collect();
            let tot: f64 = w.iter().sum();
            let ex = sites.iter().zip(&w).map(|(s, w)| s.x * w).sum::<f64>() / tot;
            let ey = sites.iter().zip(&w).map(|(s, w)| s.y * w).sum::<f64>() / tot;
            let (x, y) = barycenter(&sites, &w).unwrap();
            assert!((x - ex).abs() < 1e-9 && (y - ey).abs() < 1e-9);
        }
    }

    #[test]
    fn pure_translation_is_recovered_exactly() {
        let data = moving_blob(16, 16, 10, (1, 0), (2, 5));
        let ev = estimate_velocity(&data, 0, 9, VelocitySource::Gridded).unwrap();
        assert_eq!(ev.v, Velocity::new(1000.0, 0.0));
        assert_eq!(ev.n_displacements, 9);
        let still = moving_blob(16, 16, 5, (0, 0), (8, 8));
        assert_eq!(
            estimate_velocity(&still, 0, 4, VelocitySource::Gridded).unwrap().v,
            Velocity::ZERO
        );
    }

    #[test]
    fn gaps_break_the_chain() {
        let mut data = moving_blob(16, 16, 6, (1, 1), (2, 2));
        for s in 0..data.n_sites() {
            data.set(2, s, 0.0);
        }
        let ev = estimate_velocity(&data, 0, 5, VelocitySource::Gridded).unwrap();
        assert_eq!(ev.n_displacements, 3);
        assert_eq!(ev.v, Velocity::new(1000.0, 1000.0));
        let mut dry = data.clone();
        for t in 0..6 {
            for s in 0..dry.n_sites() {
                dry.set(t, s, if t == 3 { 1.0 } else { 0.0 });
            }
        }
        assert!(matches!(
            estimate_velocity(&dry, 0, 5, VelocitySource::Gridded),
            Err(Error::NoVelocity(_))
        ));
    }

    fn gauges(nt: usize, step_s: f64) -> SpaceTimeData {
        let sites = vec![Site::new("g1", 0.0, 0.0), Site::new("g2", 1000.0, 0.0)];
        let mut v = vec![0.0; 2 * nt];
        for t in 0..nt {
            v[2 * t] = 1.0 + t as f64;
            v[2 * t + 1] = 1.0;
        }
        SpaceTimeData::new(sites, TimeAxis::calendar(1_600_000_000, step_s), nt, v).unwrap()
    }

    fn ep(id: usize, t0: usize, delta: usize) -> Episode {
        Episode {
            id,
            site: 0,
            t0,
            delta,
            velocity: None,
            n_exceedances: 1,
        }
    }

    #[test]
    fn gridded_source_preferred_with_unit_conversion() {
        let grid = moving_blob(16, 16, 24, (1, 0), (2, 5));
        let gcat = EpisodeCatalog {
            threshold: 1.0,
            episodes: vec![ep(0, 0, 12)],
        };
        let fine = gauges(48, 300.0);
        let mut cat = EpisodeCatalog {
            threshold: 1.0,
            episodes: vec![ep(0, 0, 12)],
        };
        let rec = match_and_assign(&fine, &mut cat, Some((&grid, &gcat)), 7200);
        let ev = rec[0].velocity.unwrap();
        assert_eq!(ev.source, VelocitySource::Gridded);
        assert_eq!(rec[0].matched, Some(0));
        // 1 km/h expressed per 5-minute step.
        assert!((ev.v.vx - 1000.0 / 12.0).abs() < 1e-9);
    }

    #[test]
    fn fallback_without_gridded_match() {
        let fine = gauges(48, 300.0);
        let grid = moving_blob(16, 16, 24, (1, 0), (0, 5));
        let gcat = EpisodeCatalog {
            threshold: 1.0,
            episodes: vec![ep(0, 20, 4)],
        };
        let mut cat = EpisodeCatalog {
            threshold: 1.0,
            episodes: vec![ep(0, 0, 12)],
        };
        let rec = match_and_assign(&fine, &mut cat, Some((&grid, &gcat)), 7200);
        assert_eq!(rec[0].matched, None);
        let ev = rec[0].velocity.unwrap();
        assert_eq!(ev.source, VelocitySource::GaugeFallback);
        assert!(ev.v.vx < 0.0);
        assert_eq!(cat.episodes[0].velocity, Some(ev.v));
    }

    #[test]
    fn matching_equals_interval_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let fine = gauges(2000, 300.0);
        let grid = moving_blob(4, 4, 200, (0, 0), (1, 1));
        for _ in 0..100 {
            let gcat = EpisodeCatalog {
                threshold: 1.0,
                episodes: (0..rng.random_range(0..8))
                    .map(|i| ep(i, rng.random_range(0..160), 24))
                    .collect(),
            };
            let e = ep(0, rng.random_range(0..1900), 12);
            let pad = 7200;
            let start = fine.axis.seconds(e.t0);
            let end = start + 12 * 300;
            let mut best: Option<(i64, i64, usize)> = None;
            for (i, g) in gcat.episodes.iter().enumerate() {
                let t = grid.axis.seconds(g.t0);
                if start - pad <= t && t <= end + pad {
                    let key = ((t - start).abs(), t, i);
                    if best.is_none_or(|b| key < b) {
                        best = Some(key);
                    }
                }
            }
            assert_eq!(match_episode(&fine, &e, &grid, &gcat, pad), best.map(|b| b.2));
        }
    }

    #[test]
    fn speed_filter() {
        let mut cat = EpisodeCatalog {
            threshold: 1.0,
            episodes: (0..4).map(|i| ep(i, i * 10, 5)).collect(),
        };
        cat.episodes[0].velocity = Some(Velocity::ZERO);
        cat.episodes[1].velocity = Some(Velocity::new(3.0, 4.0));
        cat.episodes[2].velocity = Some(Velocity::new(0.0, 1.0));
        cat.episodes[3].velocity = Some(Velocity::new(0.1, 0.0));
        let mut all = cat.clone();
        assert_eq!(filter_speed_range(&mut all, 5.0), 0.0);
        assert_eq!(all, cat);
        let frac = filter_speed_range(&mut cat, 0.0);
        assert_eq!(frac, 0.75);
        assert_eq!(cat.episodes.len(), 1);
        assert_eq!(cat.episodes[0].id, 0);
    }
}
