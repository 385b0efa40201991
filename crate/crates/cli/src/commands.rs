//! Pipeline stages. Each reads its inputs from the configured data files and
//! from earlier artifacts in the output directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use exrain::advection::{filter_speed_range, match_and_assign, write_advection_csv};
use exrain::data::{
    read_gauge_csv, read_grid_csv, read_sites_csv, write_gauge_csv, write_grid_binary, write_grid_csv, write_sites_csv,
    Grid, SpaceTimeData,
};
use exrain::dependence::units::kmh_to_mps;
use exrain::dependence::{chi_r, AdvectionTransform, VariogramParams, Velocity};
use exrain::diagnostics::{
    cumulative_rain_distribution, empirical_extremogram, empirical_variogram, qq_egpd, trivariate_conditional,
    write_extremogram_csv, write_qq_csv, write_totals_csv, write_trivariate_csv, write_variogram_csv,
};
use exrain::episodes::{
    count_joint_exceedances, episode_tradeoff, joint_exceedance_profile, read_catalog_csv, select_episodes as select,
    threshold_from_quantile, write_catalog_csv, EpisodeCatalog, EpisodeConfig, LagClasses, QuantileBasis,
};
use exrain::inference::{
    chi_classes, episode_observations, fit_variogram as fit, jackknife_groups, month_labels, read_fit_params,
    wls_initialize, write_fit_text, ExtendedParams, FitOptions, Method, UnitSystem,
};
use exrain::marginals::{
    fit_marginal_model, select_censoring, CensoringSpec, EgpdFitOptions, EgpdParams, MarginalModel, PoolMode,
    SiteSample,
};
use exrain::recovery::{run_recovery, RecoverySetting};
use exrain::simulation::{
    simulate_grid_ensemble, write_ensemble_csv, write_ensemble_metadata, Conditioning, EnsembleSpec, VelocitySampler,
};
use serde::{Deserialize, Serialize};

use crate::config::{DataKind, MethodConfig, PipelineConfig, PoolConfig, RecoveryKind};
use crate::synth;
use crate::CliError;

const MARGINS: &str = "margins.toml";
const EPISODES: &str = "episodes.csv";
const EPISODES_META: &str = "episodes.toml";
const EPISODES_ADV: &str = "episodes_advection.csv";
const FIT: &str = "variogram_fit.txt";
const SIMULATION: &str = "simulation.csv";

#[derive(Debug, Serialize, Deserialize)]
struct MarginsArtifact {
    mode: String,
    p0: f64,
    xi: f64,
    sigma: f64,
    kappa: f64,
    precision_mm: f64,
    censoring_multiplier: u32,
    censoring_threshold_mm: f64,
    loglik: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EpisodesArtifact {
    threshold_mm: f64,
    q: f64,
    delta: usize,
    d_min_m: f64,
    n_episodes: usize,
}

fn out_dir(cfg: &PipelineConfig) -> Result<&Path, CliError> {
    fs::create_dir_all(&cfg.output)?;
    Ok(&cfg.output)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn artifact(cfg: &PipelineConfig, name: &str, command: &'static str) -> Result<PathBuf, CliError> {
    let p = cfg.output.join(name);
    if p.exists() {
        Ok(p)
    } else {
        Err(CliError::Missing {
            artifact: name.to_string(),
            dir: cfg.output.clone(),
            command,
        })
    }
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| exrain::Error::Data(format!("{}: {e}", path.display())).into())
}

fn load_data(cfg: &PipelineConfig) -> Result<SpaceTimeData, CliError> {
    let rain = cfg.require(&cfg.data.rain, "data.rain")?;
    let data = match cfg.data.kind {
        DataKind::Gauge => {
            let sites = read_sites_csv(cfg.require(&cfg.data.sites, "data.sites")?)?;
            read_gauge_csv(rain, sites, cfg.data.step_seconds)?
        }
        DataKind::Grid => read_grid_csv(rain, cfg.data.step_seconds)?,
    };
    Ok(data)
}

fn basis(cfg: &PipelineConfig) -> QuantileBasis {
    if cfg.episodes.positive_only {
        QuantileBasis::Positive
    } else {
        QuantileBasis::All
    }
}

fn lag_classes(cfg: &PipelineConfig, data: &SpaceTimeData) -> Result<LagClasses, CliError> {
    Ok(LagClasses::for_data(
        data,
        cfg.episodes.delta,
        cfg.episodes.n_distance_bins,
    )?)
}

fn load_margins(cfg: &PipelineConfig) -> Result<(MarginalModel, MarginsArtifact), CliError> {
    let m: MarginsArtifact = read_toml(&artifact(cfg, MARGINS, "fit-margins")?)?;
    let model = MarginalModel::new(m.p0, EgpdParams::new(m.xi, m.sigma, m.kappa)?)?;
    Ok((model, m))
}

fn load_episodes_meta(cfg: &PipelineConfig) -> Result<EpisodesArtifact, CliError> {
    read_toml(&artifact(cfg, EPISODES_META, "select-episodes")?)
}

fn load_fit(cfg: &PipelineConfig) -> Result<ExtendedParams, CliError> {
    let p = artifact(cfg, FIT, "fit-variogram")?;
    Ok(read_fit_params(&fs::read_to_string(p)?)?)
}

pub fn generate_synthetic(cfg: &PipelineConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let s = synth::generate(
        &cfg.synthetic,
        cfg.data.step_seconds,
        cfg.data.radar_step_seconds,
        cfg.marginals.precision_mm,
        cfg.seed,
    )?;
    write_sites_csv(&s.gauges.sites, create(dir, "sites.csv")?)?;
    write_gauge_csv(&s.gauges, create(dir, "rain.csv")?)?;
    write_grid_csv(&s.radar, create(dir, "radar.csv")?)?;
    write_grid_binary(&s.radar, create(dir, "radar.bin")?)?;
    eprintln!(
        "wrote {} gauges x {} steps and a {}-pixel radar grid x {} steps to {}",
        s.gauges.n_sites(),
        s.gauges.n_steps(),
        s.radar.n_sites(),
        s.radar.n_steps(),
        dir.display()
    );
    Ok(())
}

pub fn fit_margins(cfg: &PipelineConfig) -> Result<(), CliError> {
    let data = load_data(cfg)?;
    let dir = out_dir(cfg)?;
    let m = &cfg.marginals;
    let opts = EgpdFitOptions::default();
    let pooled: Vec<f64> = data.values().iter().copied().filter(|v| *v > 0.0).collect();
    let censoring = if m.censoring_multipliers.len() > 1 {
        let (spec, scores) = select_censoring(&pooled, m.precision_mm, &m.censoring_multipliers, &opts)?;
        let mut w = create(dir, "censoring_selection.csv")?;
        writeln!(w, "multiplier,threshold_mm,rmse_mm")?;
        for (k, rmse) in scores {
            writeln!(w, "{k},{},{rmse}", m.precision_mm * f64::from(k))?;
        }
        spec
    } else {
        CensoringSpec::new(m.precision_mm, m.censoring_multipliers[0])?
    };
    let series: Vec<Vec<f64>> = (0..data.n_sites()).map(|s| data.site_series(s)).collect();
    let samples: Vec<SiteSample<'_>> = data
        .sites
        .iter()
        .zip(&series)
        .map(|(site, values)| SiteSample {
            id: &site.id,
            values,
            censoring,
        })
        .collect();
    let mode = match m.pool {
        PoolConfig::Pooled => PoolMode::Pooled,
        PoolConfig::Averaged => PoolMode::Averaged,
    };
    let fit = fit_marginal_model(&samples, mode, &opts)?;

    let mut w = create(dir, "margins_sites.csv")?;
    writeln!(w, "site_id,n_observed,n_positive,p0,xi,sigma,kappa,loglik,warning")?;
    for s in &fit.sites {
        let (xi, sigma, kappa, ll) =
            s.fit
                .as_ref()
                .map_or((String::new(), String::new(), String::new(), String::new()), |f| {
                    (
                        f.params.xi.to_string(),
                        f.params.sigma.to_string(),
                        f.params.kappa.to_string(),
                        f.loglik.to_string(),
                    )
                });
        let warning = s.warning.clone().unwrap_or_default().replace(',', ";");
        writeln!(
            w,
            "{},{},{},{},{xi},{sigma},{kappa},{ll},{warning}",
            s.id, s.n_observed, s.n_positive, s.p0
        )?;
        if let Some(msg) = &s.warning {
            eprintln!("warning: site {}: {msg}", s.id);
        }
    }
    let art = MarginsArtifact {
        mode: format!("{mode:?}").to_lowercase(),
        p0: fit.model.p0,
        xi: fit.model.egpd.xi,
        sigma: fit.model.egpd.sigma,
        kappa: fit.model.egpd.kappa,
        precision_mm: censoring.precision,
        censoring_multiplier: censoring.multiplier,
        censoring_threshold_mm: censoring.threshold(),
        loglik: fit.pooled.as_ref().map(|f| f.loglik),
    };
    fs::write(dir.join(MARGINS), toml::to_string(&art).expect("serializable"))?;
    eprintln!(
        "marginal: p0={:.4} xi={:.4} sigma={:.4} kappa={:.4} (censoring at {} mm)",
        art.p0, art.xi, art.sigma, art.kappa, art.censoring_threshold_mm
    );
    Ok(())
}

pub fn select_episodes(cfg: &PipelineConfig) -> Result<(), CliError> {
    let data = load_data(cfg)?;
    let dir = out_dir(cfg)?;
    let e = &cfg.episodes;
    let u = threshold_from_quantile(&data, e.q, basis(cfg))?;
    let ecfg = EpisodeConfig {
        q: e.q,
        delta: e.delta,
        d_min: e.d_min_m,
        max_episodes: e.max_episodes,
        basis: basis(cfg),
    };
    let catalog = select(&data, u, &ecfg)?;
    write_catalog_csv(&data, &catalog, create(dir, EPISODES)?)?;
    let meta = EpisodesArtifact {
        threshold_mm: u,
        q: e.q,
        delta: e.delta,
        d_min_m: e.d_min_m,
        n_episodes: catalog.len(),
    };
    fs::write(dir.join(EPISODES_META), toml::to_string(&meta).expect("serializable"))?;

    let mut w = create(dir, "episode_tradeoff.csv")?;
    writeln!(w, "delta,d_min_m,n_episodes")?;
    for (d, m, n) in episode_tradeoff(&data, u, &e.tradeoff_delta, &e.tradeoff_d_min_m)? {
        writeln!(w, "{d},{m},{n}")?;
    }
    let classes = lag_classes(cfg, &data)?;
    let profile = joint_exceedance_profile(&data, u, &classes);
    let mut w = create(dir, "exceedance_profile.csv")?;
    writeln!(w, "kind,lag,dist_m,joint_exceedances")?;
    for (c, n) in profile.spatial.iter().enumerate() {
        writeln!(w, "spatial,{c},{},{n}", classes.centers[c])?;
    }
    for (tau, n) in profile.temporal.iter().enumerate() {
        writeln!(w, "temporal,{tau},0,{n}")?;
    }
    eprintln!("{} episodes above u = {u} mm", catalog.len());
    Ok(())
}

pub fn estimate_advection(cfg: &PipelineConfig) -> Result<(), CliError> {
    let data = load_data(cfg)?;
    let meta = load_episodes_meta(cfg)?;
    let mut catalog = read_catalog_csv(&artifact(cfg, EPISODES, "select-episodes")?, &data, meta.threshold_mm)?;
    let dir = out_dir(cfg)?;
    let radar = match &cfg.data.radar {
        Some(_) => {
            let path = cfg.require(&cfg.data.radar, "data.radar")?;
            let radar = if path.extension().is_some_and(|e| e == "bin") {
                exrain::data::read_grid_binary(std::io::BufReader::new(File::open(path)?))?
            } else {
                read_grid_csv(path, cfg.data.radar_step_seconds)?
            };
            let e = &cfg.episodes;
            let u = threshold_from_quantile(&radar, e.radar_q, basis(cfg))?;
            let rcfg = EpisodeConfig {
                q: e.radar_q,
                delta: e.radar_delta,
                d_min: e.radar_d_min_m,
                max_episodes: None,
                basis: basis(cfg),
            };
            let rcat = select(&radar, u, &rcfg)?;
            write_catalog_csv(&radar, &rcat, create(dir, "radar_episodes.csv")?)?;
            Some((radar, rcat))
        }
        None => None,
    };
    let pad = (cfg.advection.pad_hours * 3600.0).round() as i64;
    let records = match_and_assign(&data, &mut catalog, radar.as_ref().map(|(d, c)| (d, c)), pad);
    write_advection_csv(&records, data.axis.step_seconds, create(dir, "advection.csv")?)?;
    let bound = kmh_to_mps(cfg.advection.max_empirical_speed_kmh, data.axis.step_seconds);
    let removed = filter_speed_range(&mut catalog, bound);
    write_catalog_csv(&data, &catalog, create(dir, EPISODES_ADV)?)?;
    let missing = catalog.episodes.iter().filter(|e| e.velocity.is_none()).count();
    eprintln!(
        "advection for {} episodes ({:.1}% above {} km/h removed, {missing} without velocity)",
        catalog.len(),
        100.0 * removed,
        cfg.advection.max_empirical_speed_kmh
    );
    Ok(())
}

fn fit_options(cfg: &PipelineConfig, step_seconds: f64) -> FitOptions {
    let mut opts = FitOptions {
        method: match cfg.variogram.method {
            MethodConfig::NelderMead => Method::NelderMead,
            MethodConfig::Bfgs => Method::Bfgs,
        },
        speed_cap: Some(kmh_to_mps(cfg.advection.speed_cap_kmh, step_seconds)),
        ..FitOptions::default()
    };
    opts.nelder_mead.max_evals = cfg.variogram.max_evals;
    opts
}

fn advected_catalog(cfg: &PipelineConfig, data: &SpaceTimeData, threshold: f64) -> Result<EpisodeCatalog, CliError> {
    Ok(read_catalog_csv(
        &artifact(cfg, EPISODES_ADV, "estimate-advection")?,
        data,
        threshold,
    )?)
}

pub fn fit_variogram(cfg: &PipelineConfig) -> Result<(), CliError> {
    let data = load_data(cfg)?;
    let meta = load_episodes_meta(cfg)?;
    let catalog = advected_catalog(cfg, &data, meta.threshold_mm)?;
    let dir = out_dir(cfg)?;
    let (obs, skipped) = episode_observations(&data, &catalog);
    if skipped > 0 {
        eprintln!("warning: {skipped} episodes without velocity left out of the fit");
    }
    let resolution = data.grid.map_or(1.0, |g| 1e-3 * g.dx.min(g.dy));
    let theta = wls_initialize(&chi_classes(&obs, resolution)).unwrap_or_else(|e| {
        eprintln!("warning: weighted least-squares start failed ({e}); starting from unit values");
        VariogramParams {
            beta1: 1e-2,
            beta2: 0.5,
            alpha1: 1.0,
            alpha2: 1.0,
        }
    });
    let fixed = match cfg.variogram.fixed_eta {
        Some([a, b]) => Some(AdvectionTransform::new(a, b)?),
        None => None,
    };
    let init = ExtendedParams::new(theta, fixed.unwrap_or(AdvectionTransform::IDENTITY))?;
    let opts = fit_options(cfg, data.axis.step_seconds);
    let result = fit(&obs, &init, fixed, &opts)?;
    let jack = if cfg.variogram.jackknife {
        match month_labels(&obs).and_then(|g| jackknife_groups(&obs, &g, &result, fixed, &opts)) {
            Ok(j) => Some(j),
            Err(e) => {
                eprintln!("warning: jackknife skipped: {e}");
                None
            }
        }
    } else {
        None
    };
    write_fit_text(&result, jack.as_ref(), &UnitSystem::canonical(), create(dir, FIT)?)?;
    write_fit_text(
        &result,
        jack.as_ref(),
        &UnitSystem::km_h(data.axis.step_seconds),
        create(dir, "variogram_fit_kmh.txt")?,
    )?;
    if let Some(j) = &jack {
        let mut w = create(dir, "jackknife.csv")?;
        writeln!(w, "left_out_month,beta1,beta2,alpha1,alpha2,eta1,eta2")?;
        for (g, r) in j.groups.iter().zip(&j.replicates) {
            writeln!(w, "{g},{},{},{},{},{},{}", r[0], r[1], r[2], r[3], r[4], r[5])?;
        }
    }
    let p = result.params.to_array();
    eprintln!(
        "fit on {} episodes ({} capped): beta1={:.4} beta2={:.4} alpha1={:.4} alpha2={:.4} eta1={:.4} eta2={:.4}, loglik {:.3}",
        result.n_episodes, result.n_capped, p[0], p[1], p[2], p[3], p[4], p[5], result.loglik
    );
    if !result.converged && cfg.variogram.require_convergence {
        return Err(exrain::Error::NonConvergence {
            reason: format!("variogram fit stopped after {} evaluations", result.evals),
            best_point: p.to_vec(),
            best_value: -result.loglik,
        }
        .into());
    }
    Ok(())
}

fn sim_grid(cfg: &PipelineConfig) -> Result<Grid, CliError> {
    let s = &cfg.simulation;
    Ok(Grid::new(s.nx, s.ny, s.x0_m, s.y0_m, s.pixel_m, s.pixel_m)?)
}

pub fn simulate(cfg: &PipelineConfig) -> Result<(), CliError> {
    let (marginal, margins) = load_margins(cfg)?;
    let params = load_fit(cfg)?;
    let meta = load_episodes_meta(cfg)?;
    let s = &cfg.simulation;
    let step = cfg.data.step_seconds;
    let velocity = match s.velocity_kmh {
        Some([vx, vy]) => VelocitySampler::Fixed(Velocity::new(kmh_to_mps(vx, step), kmh_to_mps(vy, step))),
        None => {
            let data = load_data(cfg)?;
            let catalog = advected_catalog(cfg, &data, meta.threshold_mm)?;
            let v: Vec<Velocity> = catalog.episodes.iter().filter_map(|e| e.velocity).collect();
            if v.is_empty() {
                return Err(exrain::Error::InsufficientData(
                    "no episode velocities to resample; set simulation.velocity_kmh".into(),
                )
                .into());
            }
            VelocitySampler::Resample(v)
        }
    };
    let spec = EnsembleSpec {
        grid: sim_grid(cfg)?,
        n_steps: s.n_steps.unwrap_or(meta.delta),
        n_episodes: s.n_episodes,
        n_replicates: s.n_replicates,
        conditioning: s.conditioning_pixel.map_or(Conditioning::Random, Conditioning::Fixed),
        velocity,
        threshold: meta.threshold_mm,
        precision: s.discretization_correction.then_some(margins.precision_mm),
        seed: exrain::seed::derive_seed(cfg.seed, "simulate", 0),
    };
    let episodes = simulate_grid_ensemble(&spec, &params.theta, &params.adv, &marginal)?;
    let dir = out_dir(cfg)?;
    write_ensemble_csv(&spec.grid, spec.n_steps, &episodes, create(dir, SIMULATION)?)?;
    write_ensemble_metadata(
        &spec,
        &params.theta,
        &params.adv,
        &marginal,
        &episodes,
        create(dir, "simulation_meta.toml")?,
    )?;
    eprintln!(
        "simulated {} episodes x {} replicates",
        episodes.len(),
        spec.n_replicates
    );
    Ok(())
}

/// Per-(episode, replicate) totals from a simulation CSV.
fn simulated_totals(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path)?;
    let mut totals: Vec<((usize, usize), f64)> = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || exrain::Error::Parse {
            path: path.to_path_buf(),
            line: i as u64 + 1,
            message: "expected episode_id,replicate,t,x_m,y_m,rain_mm".into(),
        };
        if f.len() != 6 {
            return Err(bad().into());
        }
        let key = (f[0].parse().map_err(|_| bad())?, f[1].parse().map_err(|_| bad())?);
        let v: f64 = f[5].parse().map_err(|_| bad())?;
        match totals.last_mut() {
            Some((k, t)) if *k == key => *t += v,
            _ => totals.push((key, v)),
        }
    }
    Ok(totals.into_iter().map(|(_, t)| t).collect())
}

pub fn diagnose(cfg: &PipelineConfig) -> Result<(), CliError> {
    let data = load_data(cfg)?;
    let meta = load_episodes_meta(cfg)?;
    let u = meta.threshold_mm;
    let catalog = match artifact(cfg, EPISODES_ADV, "estimate-advection") {
        Ok(p) => read_catalog_csv(&p, &data, u)?,
        Err(_) => read_catalog_csv(&artifact(cfg, EPISODES, "select-episodes")?, &data, u)?,
    };
    let dir = out_dir(cfg)?.join("diagnostics");
    fs::create_dir_all(&dir)?;
    let classes = lag_classes(cfg, &data)?;
    let counts = count_joint_exceedances(&data, &catalog, &classes);
    let cells = empirical_extremogram(&counts, &classes, None);
    write_extremogram_csv(&cells, create(&dir, "extremogram.csv")?)?;
    write_variogram_csv(&empirical_variogram(&cells), create(&dir, "variogram_empirical.csv")?)?;

    if let Ok(params) = load_fit(cfg) {
        // Model χ averaged over the trials of each lag class.
        let (obs, _) = episode_observations(&data, &catalog);
        let mut sum = vec![0.0; counts.k.len()];
        let mut n = vec![0u64; counts.k.len()];
        for e in &obs {
            let v = params.adv.apply(e.v_emp);
            for i in 0..e.len() {
                let d = e.hx[i].hypot(e.hy[i]);
                let tau = e.tau[i] as usize;
                if let Some(c) = classes.spatial_class(d).filter(|_| tau < classes.n_tau) {
                    let j = counts.index(c, tau);
                    sum[j] += chi_r((e.hx[i], e.hy[i]), tau as f64, &params.theta, v);
                    n[j] += 1;
                }
            }
        }
        let mut w = create(&dir, "extremogram_model.csv")?;
        writeln!(w, "class,dist_m,tau,n,chi_model")?;
        for c in 0..counts.n_spatial {
            for tau in 0..counts.n_tau {
                let j = counts.index(c, tau);
                if n[j] > 0 {
                    writeln!(w, "{c},{},{tau},{},{}", classes.centers[c], n[j], sum[j] / n[j] as f64)?;
                }
            }
        }
    }

    if let Ok((marginal, m)) = load_margins(cfg) {
        let qq = qq_egpd(
            data.values(),
            &marginal.egpd,
            m.censoring_threshold_mm,
            cfg.diagnostics.qq_points,
            cfg.diagnostics.n_bootstrap,
            exrain::seed::derive_seed(cfg.seed, "qq-bootstrap", 0),
        );
        if qq.degenerate {
            eprintln!("warning: degenerate positive sample, QQ table left empty");
        }
        write_qq_csv(&qq, create(&dir, "qq.csv")?)?;
    }

    let s = match &cfg.diagnostics.trivariate_site {
        Some(id) => data
            .site_index(id)
            .ok_or_else(|| CliError::Config(format!("diagnostics.trivariate_site: unknown site {id:?}")))?,
        None => 0,
    };
    match trivariate_conditional(&data, u, s) {
        Some(t) => write_trivariate_csv(&data, s, &t, create(&dir, "trivariate.csv")?)?,
        None => eprintln!(
            "warning: no exceedance at site {}, trivariate table skipped",
            data.sites[s].id
        ),
    }

    write_totals_csv(
        &cumulative_rain_distribution(&data, &catalog),
        create(&dir, "totals_observed.csv")?,
    )?;
    if let Ok(p) = artifact(cfg, SIMULATION, "simulate") {
        write_totals_csv(&simulated_totals(&p)?, create(&dir, "totals_simulated.csv")?)?;
    }
    eprintln!("diagnostics written to {}", dir.display());
    Ok(())
}

pub fn validate_recovery(cfg: &PipelineConfig) -> Result<(), CliError> {
    let r = &cfg.recovery;
    let t = r.truth;
    let truth = ExtendedParams::new(
        VariogramParams::new(t[0], t[1], t[2], t[3])?,
        AdvectionTransform::new(t[4], t[5])?,
    )?;
    let setting = RecoverySetting {
        truth,
        nx: r.nx,
        ny: r.ny,
        spacing: 1.0,
        n_steps: r.n_steps,
        n_episodes: r.n_episodes,
        estimate_eta: r.kind == RecoveryKind::Joint,
        speed_range: (r.speed_range[0], r.speed_range[1]),
    };
    let summary = run_recovery(&setting, r.n_runs, cfg.seed, &FitOptions::default())?;
    let dir = out_dir(cfg)?;
    let mut w = create(dir, "recovery_runs.csv")?;
    writeln!(w, "run,converged,beta1,beta2,alpha1,alpha2,eta1,eta2")?;
    for (i, (e, c)) in summary.estimates.iter().zip(&summary.converged).enumerate() {
        writeln!(
            w,
            "{i},{},{},{},{},{},{},{}",
            u8::from(*c),
            e[0],
            e[1],
            e[2],
            e[3],
            e[4],
            e[5]
        )?;
    }
    let med = summary.median();
    let rel = summary.relative_errors();
    let mut w = create(dir, "recovery_summary.csv")?;
    writeln!(w, "parameter,truth,median,relative_error")?;
    for (j, name) in exrain::inference::PARAM_NAMES.iter().enumerate() {
        writeln!(w, "{name},{},{},{}", summary.truth[j], med[j], rel[j])?;
        println!(
            "{name:>7} truth {:>8.4} median {:>8.4} rel.err {:>6.1}%",
            summary.truth[j],
            med[j],
            100.0 * rel[j]
        );
    }
    Ok(())
}
