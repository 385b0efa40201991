//! Same-schema synthetic datasets: model-simulated storms at a gauge network
//! and matching moving rain cells on a coarser radar grid.

use exrain::data::{parse_datetime, Grid, Site, SpaceTimeData, TimeAxis};
use exrain::dependence::{AdvectionTransform, VariogramParams, Velocity};
use exrain::marginals::{EgpdParams, MarginalModel};
use exrain::seed::{derive_seed, rng_for};
use exrain::simulation::{generate_episode, SimulationDomain};
use rand::Rng as _;

use crate::config::SyntheticConfig;
use crate::CliError;

struct Storm {
    start: f64,
    duration: f64,
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    radius: f64,
    peak: f64,
}

impl Storm {
    /// Rain rate in mm per hour at (x, y) and time `s` (seconds since start of record).
    fn rate(&self, x: f64, y: f64, s: f64) -> f64 {
        let age = s - self.start;
        if age < 0.0 || age > self.duration {
            return 0.0;
        }
        let cx = self.x + self.vx * age;
        let cy = self.y + self.vy * age;
        let d2 = (x - cx).powi(2) + (y - cy).powi(2);
        let envelope = (std::f64::consts::PI * age / self.duration).sin();
        self.peak * envelope * (-0.5 * d2 / self.radius.powi(2)).exp()
    }
}

pub struct Synthetic {
    pub gauges: SpaceTimeData,
    pub radar: SpaceTimeData,
}

pub fn generate(
    cfg: &SyntheticConfig,
    step_seconds: f64,
    radar_step_seconds: f64,
    precision: f64,
    seed: u64,
) -> Result<Synthetic, CliError> {
    let origin = parse_datetime(&cfg.start)
        .ok_or_else(|| CliError::Config(format!("synthetic.start: cannot parse {:?}", cfg.start)))?;
    if cfg.n_sites == 0
        || cfg.n_days == 0
        || cfg.storm_steps == 0
        || !(cfg.extent_m > 0.0)
        || cfg.radar_nx * cfg.radar_ny == 0
    {
        return Err(CliError::Config("synthetic: sizes must be positive".into()));
    }
    let total = cfg.n_days as f64 * 86400.0;
    let n_steps = (total / step_seconds) as usize;
    if n_steps <= cfg.storm_steps {
        return Err(CliError::Config("synthetic: record shorter than one storm".into()));
    }
    let mut rng = rng_for(seed, "synthetic-sites", 0);
    let sites: Vec<Site> = (0..cfg.n_sites)
        .map(|i| {
            Site::new(
                format!("g{i:02}"),
                rng.random_range(0.0..cfg.extent_m),
                rng.random_range(0.0..cfg.extent_m),
            )
        })
        .collect();

    // Storm fields come from the model itself, with V_E = V^emp.
    let t = cfg.theta;
    let theta = VariogramParams::new(t[0], t[1], t[2], t[3])?;
    let marginal = MarginalModel::new(cfg.p0, EgpdParams::new(cfg.egpd[0], cfg.egpd[1], cfg.egpd[2])?)?;
    let domain = SimulationDomain::new(sites.iter().map(|s| (s.x, s.y)).collect(), cfg.storm_steps, 0)?;
    let n_storms = (cfg.n_days as f64 * cfg.storms_per_day).round() as usize;
    let mut rng = rng_for(seed, "synthetic-storms", 0);
    let mut values = vec![0.0; n_steps * sites.len()];
    let mut storms = Vec::with_capacity(n_storms);
    for k in 0..n_storms {
        let t0 = rng.random_range(0..n_steps - cfg.storm_steps);
        let s0 = rng.random_range(0..sites.len());
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let speed = rng.random_range(cfg.speed_kmh[0]..=cfg.speed_kmh[1]) / 3.6;
        let v = Velocity::new(speed * angle.cos() * step_seconds, speed * angle.sin() * step_seconds);
        let ep = generate_episode(
            &domain.with_conditioning(s0)?,
            &theta,
            v,
            &AdvectionTransform::IDENTITY,
            cfg.storm_scale,
            &marginal,
            derive_seed(seed, "synthetic-storm", k as u64),
            Some(precision).filter(|p| *p > 0.0),
        )?;
        for (i, x) in ep.x.iter().enumerate() {
            let slot = &mut values[t0 * sites.len() + i];
            *slot = f64::max(*slot, (x * 1e4).round() / 1e4);
        }
        storms.push(Storm {
            start: t0 as f64 * step_seconds,
            duration: cfg.storm_steps as f64 * step_seconds,
            x: sites[s0].x,
            y: sites[s0].y,
            vx: speed * angle.cos(),
            vy: speed * angle.sin(),
            radius: 1500.0,
            peak: 5.0 + ep.x[s0],
        });
    }
    for v in values.iter_mut() {
        if rng.random::<f64>() < 0.002 {
            *v = f64::NAN;
        }
    }
    let gauges = SpaceTimeData::new(sites, TimeAxis::calendar(origin, step_seconds), n_steps, values)?;

    // Radar: one moving rain cell per storm, following the storm velocity.
    let c = cfg.extent_m / 2.0;
    let grid = Grid::new(
        cfg.radar_nx,
        cfg.radar_ny,
        c - (cfg.radar_nx as f64 - 1.0) / 2.0 * cfg.radar_pixel_m,
        c - (cfg.radar_ny as f64 - 1.0) / 2.0 * cfg.radar_pixel_m,
        cfg.radar_pixel_m,
        cfg.radar_pixel_m,
    )?;
    let pixels = grid.sites();
    let n_radar = (total / radar_step_seconds) as usize;
    let mut radar = vec![0.0; n_radar * pixels.len()];
    let sub = 6;
    for st in &storms {
        let t0 = (st.start / radar_step_seconds).floor() as usize;
        let t1 = (((st.start + st.duration) / radar_step_seconds).ceil() as usize).min(n_radar);
        for t in t0..t1 {
            for k in 0..sub {
                let s = (t as f64 + (k as f64 + 0.5) / sub as f64) * radar_step_seconds;
                for (p, px) in pixels.iter().enumerate() {
                    radar[t * pixels.len() + p] += st.rate(px.x, px.y, s) * radar_step_seconds / 3600.0 / sub as f64;
                }
            }
        }
    }
    for v in radar.iter_mut() {
        *v = if *v < 0.1 { 0.0 } else { (*v * 1e3).round() / 1e3 };
    }
    let radar = SpaceTimeData::gridded(grid, TimeAxis::calendar(origin, radar_step_seconds), n_radar, radar)?;
    Ok(Synthetic { gauges, radar })
}
