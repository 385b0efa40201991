//! Empirical diagnostics shared by observed and simulated data.

use std::io::Write;

use rand::Rng as _;

use crate::data::SpaceTimeData;
use crate::dependence::inverse_chi;
use crate::episodes::{EpisodeCatalog, LagClasses, LagCounts};
use crate::error::Result;
use crate::marginals::{empirical_quantile_sorted, EgpdParams};
use crate::seed::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremogramCell {
    pub class: usize,
    pub dist: f64,
    pub tau: usize,
    pub k: u64,
    pub n: u64,
    /// K/N, `None` when the class has no trials.
    pub chi: Option<f64>,
}

/// χ̂ = K/N per (spatial class, lag). With `n_conditioning`, that many
/// conditioning points are added as successes to the (0, 0) class.
pub fn empirical_extremogram(
    counts: &LagCounts,
    classes: &LagClasses,
    n_conditioning: Option<u64>,
) -> Vec<ExtremogramCell> {
    let mut out = Vec::with_capacity(counts.k.len());
    for c in 0..counts.n_spatial {
        for tau in 0..counts.n_tau {
            let (mut k, mut n) = counts.get(c, tau);
            if c == 0 && tau == 0 {
                if let Some(m) = n_conditioning {
                    k += m;
                    n += m;
                }
            }
            out.push(ExtremogramCell {
                class: c,
                dist: classes.centers[c],
                tau,
                k,
                n,
                chi: (n > 0).then(|| k as f64 / n as f64),
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariogramCell {
    pub dist: f64,
    pub tau: usize,
    pub gamma: f64,
    pub n: u64,
}

/// γ̂ = inverse_chi(χ̂); classes without trials or with χ̂ = 0 are dropped.
pub fn empirical_variogram(cells: &[ExtremogramCell]) -> Vec<VariogramCell> {
    cells
        .iter()
        .filter_map(|c| {
            let chi = c.chi?;
            let gamma = inverse_chi(chi).ok()?;
            Some(VariogramCell {
                dist: c.dist,
                tau: c.tau,
                gamma,
                n: c.n,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct QqTable {
    pub probs: Vec<f64>,
    pub empirical: Vec<f64>,
    pub model: Vec<f64>,
    /// Percentile bootstrap band (2.5%, 97.5%) of the empirical quantiles.
    pub band: Option<(Vec<f64>, Vec<f64>)>,
    /// Set when every value is identical.
    pub degenerate: bool,
}

/// Empirical against fitted EGPD quantiles of the positive values on a
/// probability grid above the censoring level, with nonparametric bootstrap
/// bands for the empirical quantiles.
pub fn qq_egpd(
    values: &[f64],
    params: &EgpdParams,
    censoring_threshold: f64,
    n_points: usize,
    n_bootstrap: usize,
    seed: u64,
) -> QqTable {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| *v > 0.0).collect();
    sorted.sort_by(f64::total_cmp);
    let degenerate = sorted.is_empty() || sorted.first() == sorted.last();
    if degenerate || n_points == 0 {
        return QqTable {
            probs: vec![],
            empirical: vec![],
            model: vec![],
            band: None,
            degenerate,
        };
    }
    let n = sorted.len();
    let p_lo = (sorted.partition_point(|&v| v <= censoring_threshold) as f64 / n as f64).max(0.5 / n as f64);
    let p_hi = 1.0 - 0.5 / n as f64;
    let probs: Vec<f64> = (0..n_points)
        .map(|i| p_lo + (p_hi - p_lo) * (i as f64 + 0.5) / n_points as f64)
        .collect();
    let empirical: Vec<f64> = probs.iter().map(|&p| empirical_quantile_sorted(&sorted, p)).collect();
    let model: Vec<f64> = probs.iter().map(|&p| params.quantile(p)).collect();
    let band = (n_bootstrap > 0).then(|| {
        let mut rng = rng_from_seed(seed);
        let mut reps = vec![Vec::with_capacity(n_bootstrap); n_points];
        let mut resample = vec![0.0; n];
        for _ in 0..n_bootstrap {
            for r in resample.iter_mut() {
                *r = sorted[rng.random_range(0..n)];
            }
            resample.sort_by(f64::total_cmp);
            for (j, &p) in probs.iter().enumerate() {
                reps[j].push(empirical_quantile_sorted(&resample, p));
            }
        }
        let mut lo = Vec::with_capacity(n_points);
        let mut hi = Vec::with_capacity(n_points);
        for r in &mut reps {
            r.sort_by(f64::total_cmp);
            lo.push(empirical_quantile_sorted(r, 0.025));
            hi.push(empirical_quantile_sorted(r, 0.975));
        }
        (lo, hi)
    });
    QqTable {
        probs,
        empirical,
        model,
        band,
        degenerate,
    }
}

/// P(X_{s₁} > u, X_{s₂} > u | X_s > u) over all rows (steps) of `data`, for
/// every ordered pair (s₁, s₂); `None` without any conditioning exceedance.
/// Rows with a missing value at s, s₁ or s₂ are skipped for that pair.
pub fn trivariate_conditional(data: &SpaceTimeData, u: f64, s: usize) -> Option<Vec<Vec<f64>>> {
    let n = data.n_sites();
    let mut joint = vec![vec![0u64; n]; n];
    let mut cond = vec![vec![0u64; n]; n];
    let mut any = false;
    for t in 0..data.n_steps() {
        let row = data.slice(t);
        if !(row[s] > u) {
            continue;
        }
        any = true;
        for i in 0..n {
            if row[i].is_nan() {
                continue;
            }
            for j in 0..n {
                if row[j].is_nan() {
                    continue;
                }
                cond[i][j] += 1;
                if row[i] > u && row[j] > u {
                    joint[i][j] += 1;
                }
            }
        }
    }
    any.then(|| {
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if cond[i][j] == 0 {
                            f64::NAN
                        } else {
                            joint[i][j] as f64 / cond[i][j] as f64
                        }
                    })
                    .collect()
            })
            .collect()
    })
}

/// Sum of the non-missing values of one episode.
pub fn episode_total(values: &[f64]) -> f64 {
    values.iter().filter(|v| !v.is_nan()).sum()
}

/// Per-episode cumulative rainfall over all sites and window steps.
pub fn cumulative_rain_distribution(data: &SpaceTimeData, catalog: &EpisodeCatalog) -> Vec<f64> {
    catalog
        .episodes
        .iter()
        .map(|e| {
            (e.t0..(e.t0 + e.delta).min(data.n_steps()))
                .map(|t| episode_total(data.slice(t)))
                .sum()
        })
        .collect()
}

pub fn write_extremogram_csv<W: Write>(cells: &[ExtremogramCell], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["class", "dist_m", "tau", "k", "n", "chi"])?;
    for c in cells {
        w.write_record([
            c.class.to_string(),
            c.dist.to_string(),
            c.tau.to_string(),
            c.k.to_string(),
            c.n.to_string(),
            c.chi.map_or(String::new(), |v| v.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_variogram_csv<W: Write>(cells: &[VariogramCell], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["dist_m", "tau", "gamma", "n"])?;
    for c in cells {
        w.write_record([
            c.dist.to_string(),
            c.tau.to_string(),
            c.gamma.to_string(),
            c.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_qq_csv<W: Write>(qq: &QqTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["prob", "empirical_mm", "model_mm", "band_low_mm", "band_high_mm"])?;
    for i in 0..qq.probs.len() {
        let (lo, hi) = qq.band.as_ref().map_or((String::new(), String::new()), |(l, h)| {
            (l[i].to_string(), h[i].to_string())
        });
        w.write_record([
            qq.probs[i].to_string(),
            qq.empirical[i].to_string(),
            qq.model[i].to_string(),
            lo,
            hi,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trivariate_csv<W: Write>(data: &SpaceTimeData, s: usize, table: &[Vec<f64>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["site", "site1", "site2", "prob"])?;
    for (i, row) in table.iter().enumerate() {
        for (j, p) in row.iter().enumerate() {
            w.write_record([
                data.sites[s].id.as_str(),
                data.sites[i].id.as_str(),
                data.sites[j].id.as_str(),
                &if p.is_nan() { String::new() } else { p.to_string() },
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_totals_csv<W: Write>(totals: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["episode_id", "total_mm"])?;
    for (i, t) in totals.iter().enumerate() {
        w.write_record([i.to_string(), t.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Site, TimeAxis};
    use crate::dependence::{chi_r, VariogramParams, Velocity};
    use crate::episodes::{count_joint_exceedances, select_episodes, EpisodeConfig};
    use crate::seed::rng_from_seed;
    use crate::simulation::{AnchoredSampler, SimulationDomain};

    fn line_sites(n: usize) -> Vec<Site> {
        (0..n)
            .map(|i| Site::new(format!("s{i}"), 100.0 * i as f64, 0.0))
            .collect()
    }

    fn noise(n_sites: usize, n_steps: usize, seed: u64) -> SpaceTimeData {
        let mut rng = rng_from_seed(seed);
        let v = (0..n_sites * n_steps).map(|_| rng.random::<f64>()).collect();
        SpaceTimeData::new(line_sites(n_sites), TimeAxis::steps(300.0), n_steps, v).unwrap()
    }

    #[test]
    fn extremogram_accounting() {
        let data = noise(6, 3000, 1);
        let classes = LagClasses::exact(&data, 4, None);
        let cfg = EpisodeConfig {
            delta: 4,
            d_min: 0.0,
            ..Default::default()
        };
        let cat = select_episodes(&data, 0.9, &cfg).unwrap();
        let counts = count_joint_exceedances(&data, &cat, &classes);
        let cells = empirical_extremogram(&counts, &classes, Some(cat.len() as u64));
        assert_eq!(cells[0].chi, Some(1.0));
        let (mut k, mut n) = (0u64, 0u64);
        for c in &cells {
            assert!(c.chi.is_none_or(|x| (0.0..=1.0).contains(&x)));
            k += c.k;
            n += c.n;
        }
        let weighted: f64 = cells.iter().filter_map(|c| c.chi.map(|x| x * c.n as f64)).sum::<f64>() / n as f64;
        assert!((weighted - k as f64 / n as f64).abs() < 1e-12);
        // Independent noise: χ̂ ≈ 1 − q away from the origin.
        for c in cells.iter().filter(|c| (c.class, c.tau) != (0, 0) && c.n > 2000) {
            assert!((c.chi.unwrap() - 0.1).abs() < 0.02, "{c:?}");
        }
    }

    #[test]
    fn variogram_inverts_extremogram() {
        let th = VariogramParams::new(0.3, 0.6, 0.3, 0.8).unwrap();
        let cells: Vec<ExtremogramCell> = (0..5)
            .map(|i| ExtremogramCell {
                class: i,
                dist: i as f64,
                tau: 0,
                k: 0,
                n: 1,
                chi: Some(chi_r((i as f64, 0.0), 0.0, &th, Velocity::ZERO)),
            })
            .chain(std::iter::once(ExtremogramCell {
                class: 9,
                dist: 9.0,
                tau: 0,
                k: 0,
                n: 5,
                chi: Some(0.0),
            }))
            .collect();
        let g = empirical_variogram(&cells);
        assert_eq!(g.len(), 5);
        assert_eq!(g[0].gamma, 0.0);
        for c in &g[1..] {
            let expect = 2.0 * th.beta1 * c.dist.powf(th.alpha1);
            assert!((c.gamma - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn separable_curves_are_parallel() {
        let th = VariogramParams::new(0.2, 0.4, 1.0, 1.0).unwrap();
        let d = SimulationDomain::lattice(4, 1, 1.0, 3, 0).unwrap();
        let s = AnchoredSampler::new(&d, &th, Velocity::ZERO).unwrap();
        let mut rng = rng_from_seed(6);
        let n = 10_000u64;
        let mut k = vec![0u64; d.len()];
        for _ in 0..n {
            for (i, y) in s.sample_pareto(&mut rng, 0).y.iter().enumerate() {
                k[i] += u64::from(*y > 1.0);
            }
        }
        let cells: Vec<ExtremogramCell> = (0..d.len())
            .map(|i| {
                let (x, _, t) = d.point(i);
                ExtremogramCell {
                    class: x as usize,
                    dist: x,
                    tau: t as usize,
                    k: k[i],
                    n,
                    chi: Some(k[i] as f64 / n as f64),
                }
            })
            .collect();
        let g = empirical_variogram(&cells);
        let at = |dist: f64, tau: usize| g.iter().find(|c| c.dist == dist && c.tau == tau).unwrap().gamma;
        for tau in 1..3 {
            let shifts: Vec<f64> = (1..4).map(|x| at(x as f64, tau) - at(x as f64, 0)).collect();
            let spread =
                shifts.iter().cloned().fold(f64::MIN, f64::max) - shifts.iter().cloned().fold(f64::MAX, f64::min);
            assert!(spread < 0.25, "tau {tau}: {shifts:?}");
        }
    }

    #[test]
    fn qq_self_consistency() {
        let p = EgpdParams::new(0.262, 0.591, 0.270).unwrap();
        // Average pointwise coverage of the model quantiles by the bands.
        let mut rng = rng_from_seed(2);
        let (mut inside, mut total) = (0, 0);
        let mut values = vec![];
        for rep in 0..40 {
            values = (0..500).map(|_| p.quantile(rng.random::<f64>().max(1e-12))).collect();
            let qq = qq_egpd(&values, &p, 0.0, 20, 200, rep);
            let (lo, hi) = qq.band.as_ref().unwrap();
            inside += (0..20)
                .filter(|&i| lo[i] <= qq.model[i] && qq.model[i] <= hi[i])
                .count();
            total += 20;
        }
        let cov = inside as f64 / total as f64;
        assert!((0.85..=0.99).contains(&cov), "{cov}");
        assert!(qq_egpd(&values, &p, 0.0, 50, 0, 3).band.is_none());
        assert!(qq_egpd(&[2.0; 40], &p, 0.0, 50, 10, 3).degenerate);
    }

    #[test]
    fn trivariate_cases() {
        let data = noise(4, 40_000, 4);
        let t = trivariate_conditional(&data, 0.9, 0).unwrap();
        assert_eq!(t[0][0], 1.0);
        assert!((t[1][2] - 0.01).abs() < 0.02);
        let same = SpaceTimeData::new(
            line_sites(3),
            TimeAxis::steps(1.0),
            4,
            vec![1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 0.0, 0.0, 0.0, 5.0, 5.0, 5.0],
        )
        .unwrap();
        let t = trivariate_conditional(&same, 0.5, 1).unwrap();
        assert!(t.iter().flatten().all(|&p| p == 1.0));
        assert!(trivariate_conditional(&same, 10.0, 1).is_none());
    }

    #[test]
    fn totals() {
        let mut v = vec![0.0; 9];
        v[4] = 5.0;
        let data = SpaceTimeData::new(line_sites(3), TimeAxis::steps(1.0), 3, v).unwrap();
        let cat = EpisodeCatalog {
            threshold: 1.0,
            episodes: vec![crate::episodes::Episode {
                id: 0,
                site: 1,
                t0: 1,
                delta: 2,
                velocity: None,
                n_exceedances: 1,
            }],
        };
        assert_eq!(cumulative_rain_distribution(&data, &cat), vec![5.0]);
        assert_eq!(episode_total(&[0.0, f64::NAN, 0.0]), 0.0);
        let mut rng = rng_from_seed(1);
        let r: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
        let brute: f64 = r.iter().sum();
        assert!((episode_total(&r) - brute).abs() < 1e-12);
    }
}
