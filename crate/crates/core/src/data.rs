//! Space-time rainfall observations and their file formats.
//!
//! Gauge networks and gridded products share one in-memory layout: a dense
//! `steps × sites` table with NaN for missing values, plus site coordinates
//! in meters and a regular time axis. Gridded data additionally carry the
//! grid geometry, with sites stored row by row.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Datelike, NaiveDateTime};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Site {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

impl Site {
    pub fn new(id: impl Into<String>, x: f64, y: f64) -> Self {
        Self { id: id.into(), x, y }
    }

    pub fn distance(&self, other: &Site) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Regular time axis. Calendar axes map step indices to UTC timestamps;
/// plain axes only count steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeAxis {
    /// Unix time (seconds) of step 0 for calendar axes, 0 otherwise.
    pub origin: i64,
    pub step_seconds: f64,
    pub calendar: bool,
}

impl TimeAxis {
    pub fn steps(step_seconds: f64) -> Self {
        Self {
            origin: 0,
            step_seconds,
            calendar: false,
        }
    }

    pub fn calendar(origin: i64, step_seconds: f64) -> Self {
        Self {
            origin,
            step_seconds,
            calendar: true,
        }
    }

    /// Seconds since the axis origin (or Unix time for calendar axes).
    pub fn seconds(&self, t: usize) -> i64 {
        self.origin + (t as f64 * self.step_seconds).round() as i64
    }

    pub fn datetime(&self, t: usize) -> Option<NaiveDateTime> {
        if !self.calendar {
            return None;
        }
        DateTime::from_timestamp(self.seconds(t), 0).map(|d| d.naive_utc())
    }

    /// Calendar month (1–12) of step `t`.
    pub fn month(&self, t: usize) -> Option<u32> {
        self.datetime(t).map(|d| d.month())
    }

    pub fn label(&self, t: usize) -> String {
        match self.datetime(t) {
            Some(d) => d.format("%Y-%m-%dT%H:%M:%S").to_string(),
            None => t.to_string(),
        }
    }

    /// Step index of an absolute time in this axis, when it falls on a step.
    pub fn index_of(&self, seconds: i64) -> Option<i64> {
        let offset = (seconds - self.origin) as f64 / self.step_seconds;
        let r = offset.round();
        ((offset - r).abs() < 1e-6).then_some(r as i64)
    }
}

/// Regular grid geometry; pixel (i, j) has center (x0 + i·dx, y0 + j·dy).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, x0: f64, y0: f64, dx: f64, dy: f64) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::param("grid must have at least one pixel"));
        }
        if !(dx > 0.0) || !(dy > 0.0) {
            return Err(Error::param("pixel size must be > 0"));
        }
        Ok(Self { nx, ny, x0, y0, dx, dy })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn sites(&self) -> Vec<Site> {
        (0..self.ny)
            .flat_map(|j| {
                (0..self.nx).map(move |i| {
                    Site::new(
                        format!("px_{i}_{j}"),
                        self.x0 + i as f64 * self.dx,
                        self.y0 + j as f64 * self.dy,
                    )
                })
            })
            .collect()
    }
}

/// Dense space-time table of rainfall (mm), NaN = missing.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeData {
    pub sites: Vec<Site>,
    pub axis: TimeAxis,
    n_steps: usize,
    values: Vec<f64>,
    pub grid: Option<Grid>,
}

impl SpaceTimeData {
    /// `values` is laid out step-major: `values[t * n_sites + s]`.
    pub fn new(sites: Vec<Site>, axis: TimeAxis, n_steps: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != sites.len() * n_steps {
            return Err(Error::Data(format!(
                "expected {} values for {} sites x {} steps, got {}",
                sites.len() * n_steps,
                sites.len(),
                n_steps,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| **v < 0.0 || v.is_infinite()) {
            return Err(Error::Data(format!("rainfall must be >= 0 and finite, got {v}")));
        }
        let mut seen = BTreeSet::new();
        for s in &sites {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Data(format!("duplicate site id {}", s.id)));
            }
        }
        Ok(Self {
            sites,
            axis,
            n_steps,
            values,
            grid: None,
        })
    }

    pub fn gridded(grid: Grid, axis: TimeAxis, n_steps: usize, values: Vec<f64>) -> Result<Self> {
        let mut d = Self::new(grid.sites(), axis, n_steps, values)?;
        d.grid = Some(grid);
        Ok(d)
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    #[inline]
    pub fn value(&self, t: usize, s: usize) -> f64 {
        self.values[t * self.sites.len() + s]
    }

    pub fn set(&mut self, t: usize, s: usize, v: f64) {
        let n = self.sites.len();
        self.values[t * n + s] = v;
    }

    pub fn slice(&self, t: usize) -> &[f64] {
        let n = self.sites.len();
        &self.values[t * n..(t + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn site_series(&self, s: usize) -> Vec<f64> {
        (0..self.n_steps).map(|t| self.value(t, s)).collect()
    }

    pub fn site_index(&self, id: &str) -> Option<usize> {
        self.sites.iter().position(|s| s.id == id)
    }

    /// Pairwise site distances, row-major.
    pub fn distances(&self) -> Vec<f64> {
        let n = self.sites.len();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                d[i * n + j] = self.sites[i].distance(&self.sites[j]);
            }
        }
        d
    }
}

/// Parsed timestamp column: either integer steps or absolute UTC seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Stamp {
    Step(i64),
    Time(i64),
}

fn parse_stamp(raw: &str) -> Option<Stamp> {
    let s = raw.trim();
    if let Ok(i) = s.parse::<i64>() {
        return Some(Stamp::Step(i));
    }
    if let Ok(d) = DateTime::parse_from_rfc3339(s) {
        return Some(Stamp::Time(d.timestamp()));
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(d) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(Stamp::Time(d.and_utc().timestamp()));
        }
    }
    None
}

/// UTC seconds of an ISO-like timestamp.
pub fn parse_datetime(raw: &str) -> Option<i64> {
    match parse_stamp(raw)? {
        Stamp::Time(t) => Some(t),
        Stamp::Step(_) => None,
    }
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_value(path: &Path, line: u64, raw: &str) -> Result<f64> {
    let raw = raw.trim();
    if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan") {
        return Ok(f64::NAN);
    }
    let v: f64 = raw
        .parse()
        .map_err(|_| parse_error(path, line, format!("invalid rainfall value {raw:?}")))?;
    if !(v >= 0.0) || !v.is_finite() {
        return Err(parse_error(path, line, format!("rainfall must be >= 0, got {v}")));
    }
    Ok(v)
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(path)?)
}

fn check_header(path: &Path, rdr: &mut csv::Reader<std::fs::File>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers()?.clone();
    let got: Vec<&str> = header.iter().collect();
    if got.len() != expected.len() || got.iter().zip(expected).any(|(a, b)| !a.eq_ignore_ascii_case(b)) {
        return Err(parse_error(
            path,
            1,
            format!("expected header {expected:?}, found {got:?}"),
        ));
    }
    Ok(())
}

/// Builds a regular axis from the distinct stamps of a file.
fn build_axis(
    path: &Path,
    stamps: &BTreeSet<i64>,
    is_time: bool,
    step_seconds: f64,
) -> Result<(TimeAxis, BTreeMap<i64, usize>)> {
    let first = *stamps
        .iter()
        .next()
        .ok_or_else(|| parse_error(path, 1, "file contains no observations"))?;
    let last = *stamps.iter().next_back().unwrap_or(&first);
    let (axis, step) = if is_time {
        let step = stamps
            .iter()
            .zip(stamps.iter().skip(1))
            .map(|(a, b)| b - a)
            .min()
            .unwrap_or(step_seconds.round() as i64)
            .max(1);
        (TimeAxis::calendar(first, step as f64), step)
    } else {
        (
            TimeAxis {
                origin: first,
                step_seconds,
                calendar: false,
            },
            1,
        )
    };
    let mut index = BTreeMap::new();
    for &s in stamps {
        if (s - first) % step != 0 {
            return Err(parse_error(
                path,
                0,
                format!("timestamps are not on a regular {step}-second grid"),
            ));
        }
        index.insert(s, ((s - first) / step) as usize);
    }
    let n_steps = ((last - first) / step) as usize + 1;
    let mut dense = BTreeMap::new();
    for t in 0..n_steps {
        dense.insert(first + t as i64 * step, t);
    }
    Ok((axis, dense))
}

/// Reads gauge sites from `site_id, x_m, y_m`.
pub fn read_sites_csv(path: &Path) -> Result<Vec<Site>> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &["site_id", "x_m", "y_m"])?;
    let mut sites = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let coord = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|_| parse_error(path, line, format!("invalid coordinate {:?}", &rec[i])))
        };
        sites.push(Site::new(&rec[0], coord(1)?, coord(2)?));
    }
    if sites.is_empty() {
        return Err(parse_error(path, 1, "no sites"));
    }
    Ok(sites)
}

/// Reads gauge observations `timestamp, site_id, value_mm`. Timestamps are
/// ISO-8601 or integer steps; an empty value is missing, and so is any
/// (site, step) pair absent from the file.
pub fn read_gauge_csv(path: &Path, sites: Vec<Site>, step_seconds: f64) -> Result<SpaceTimeData> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &["timestamp", "site_id", "value_mm"])?;
    let site_ix: HashMap<String, usize> = sites.iter().enumerate().map(|(i, s)| (s.id.clone(), i)).collect();
    let mut rows = Vec::new();
    let mut kinds = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let stamp =
            parse_stamp(&rec[0]).ok_or_else(|| parse_error(path, line, format!("invalid timestamp {:?}", &rec[0])))?;
        let site = *site_ix
            .get(&rec[1])
            .ok_or_else(|| parse_error(path, line, format!("unknown site {:?}", &rec[1])))?;
        let value = parse_value(path, line, &rec[2])?;
        kinds.insert(matches!(stamp, Stamp::Time(_)));
        rows.push((stamp, site, value, line));
    }
    if kinds.len() > 1 {
        return Err(parse_error(path, 0, "mixed ISO-8601 and integer timestamps"));
    }
    let is_time = kinds.contains(&true);
    let raw = |s: Stamp| match s {
        Stamp::Step(v) | Stamp::Time(v) => v,
    };
    let stamps: BTreeSet<i64> = rows.iter().map(|r| raw(r.0)).collect();
    let (axis, index) = build_axis(path, &stamps, is_time, step_seconds)?;
    let n = sites.len();
    let n_steps = index.len();
    let mut values = vec![f64::NAN; n * n_steps];
    for (stamp, site, value, line) in rows {
        let t = index[&raw(stamp)];
        let slot = &mut values[t * n + site];
        if !slot.is_nan() {
            return Err(parse_error(path, line, "duplicate observation for site and time"));
        }
        *slot = value;
    }
    SpaceTimeData::new(sites, axis, n_steps, values)
}

/// Reads a gridded product `timestamp, x_m, y_m, value_mm`, checking that
/// pixel centers form a regular grid.
pub fn read_grid_csv(path: &Path, step_seconds: f64) -> Result<SpaceTimeData> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &["timestamp", "x_m", "y_m", "value_mm"])?;
    let mut rows = Vec::new();
    let mut kinds = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let stamp =
            parse_stamp(&rec[0]).ok_or_else(|| parse_error(path, line, format!("invalid timestamp {:?}", &rec[0])))?;
        let x: f64 = rec[1]
            .parse()
            .map_err(|_| parse_error(path, line, format!("invalid x {:?}", &rec[1])))?;
        let y: f64 = rec[2]
            .parse()
            .map_err(|_| parse_error(path, line, format!("invalid y {:?}", &rec[2])))?;
        let value = parse_value(path, line, &rec[3])?;
        kinds.insert(matches!(stamp, Stamp::Time(_)));
        rows.push((stamp, x, y, value, line));
    }
    if kinds.len() > 1 {
        return Err(parse_error(path, 0, "mixed ISO-8601 and integer timestamps"));
    }
    let grid = infer_grid(path, rows.iter().map(|r| r.1), rows.iter().map(|r| r.2))?;
    let raw = |s: Stamp| match s {
        Stamp::Step(v) | Stamp::Time(v) => v,
    };
    let stamps: BTreeSet<i64> = rows.iter().map(|r| raw(r.0)).collect();
    let (axis, index) = build_axis(path, &stamps, kinds.contains(&true), step_seconds)?;
    let n = grid.len();
    let n_steps = index.len();
    let mut values = vec![f64::NAN; n * n_steps];
    for (stamp, x, y, value, line) in rows {
        let i = ((x - grid.x0) / grid.dx).round() as usize;
        let j = ((y - grid.y0) / grid.dy).round() as usize;
        let slot = &mut values[index[&raw(stamp)] * n + grid.index(i, j)];
        if !slot.is_nan() {
            return Err(parse_error(path, line, "duplicate observation for pixel and time"));
        }
        *slot = value;
    }
    SpaceTimeData::gridded(grid, axis, n_steps, values)
}

fn axis_spec(path: &Path, coords: impl Iterator<Item = f64>, name: &str) -> Result<(usize, f64, f64)> {
    let mut distinct: Vec<f64> = coords.collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
    if distinct.is_empty() {
        return Err(parse_error(path, 1, "file contains no observations"));
    }
    if distinct.len() == 1 {
        return Ok((1, distinct[0], 1.0));
    }
    let step = distinct[1] - distinct[0];
    for w in distinct.windows(2) {
        let k = (w[1] - w[0]) / step;
        if (k - k.round()).abs() > 1e-6 || k.round() < 1.0 {
            return Err(parse_error(
                path,
                0,
                format!("{name} coordinates are not on a regular grid"),
            ));
        }
    }
    let lo = distinct[0];
    let hi = *distinct.last().unwrap_or(&lo);
    Ok((((hi - lo) / step).round() as usize + 1, lo, step))
}

fn infer_grid(path: &Path, xs: impl Iterator<Item = f64>, ys: impl Iterator<Item = f64>) -> Result<Grid> {
    let (nx, x0, dx) = axis_spec(path, xs, "x")?;
    let (ny, y0, dy) = axis_spec(path, ys, "y")?;
    Grid::new(nx, ny, x0, y0, dx, dy)
}

pub fn write_gauge_csv<W: Write>(data: &SpaceTimeData, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp", "site_id", "value_mm"])?;
    for t in 0..data.n_steps() {
        let stamp = data.axis.label(t);
        for (s, site) in data.sites.iter().enumerate() {
            let v = data.value(t, s);
            let v = if v.is_nan() { String::new() } else { format!("{v}") };
            w.write_record([stamp.as_str(), site.id.as_str(), v.as_str()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_sites_csv<W: Write>(sites: &[Site], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["site_id", "x_m", "y_m"])?;
    for s in sites {
        w.write_record([s.id.clone(), s.x.to_string(), s.y.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_grid_csv<W: Write>(data: &SpaceTimeData, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp", "x_m", "y_m", "value_mm"])?;
    for t in 0..data.n_steps() {
        let stamp = data.axis.label(t);
        for (s, site) in data.sites.iter().enumerate() {
            let v = data.value(t, s);
            let v = if v.is_nan() { String::new() } else { format!("{v}") };
            w.write_record([stamp.clone(), site.x.to_string(), site.y.to_string(), v])?;
        }
    }
    w.flush()?;
    Ok(())
}

const GRID_MAGIC: &[u8; 8] = b"EXRGRID1";

/// Dense little-endian grid layout:
///
/// ```text
/// magic "EXRGRID1"
/// u32 nx, u32 ny, u32 nt, u32 flags (bit 0: calendar axis)
/// f64 x0, f64 y0, f64 dx, f64 dy, f64 step_seconds, i64 origin
/// nt·ny·nx f32 values, step-major then row-major (NaN = missing)
/// ```
pub fn write_grid_binary<W: Write>(data: &SpaceTimeData, mut out: W) -> Result<()> {
    let grid = data
        .grid
        .ok_or_else(|| Error::Data("binary layout requires gridded data".into()))?;
    out.write_all(GRID_MAGIC)?;
    for v in [
        grid.nx as u32,
        grid.ny as u32,
        data.n_steps() as u32,
        u32::from(data.axis.calendar),
    ] {
        out.write_all(&v.to_le_bytes())?;
    }
    for v in [grid.x0, grid.y0, grid.dx, grid.dy, data.axis.step_seconds] {
        out.write_all(&v.to_le_bytes())?;
    }
    out.write_all(&data.axis.origin.to_le_bytes())?;
    for &v in data.values() {
        out.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_grid_binary<R: Read>(mut input: R) -> Result<SpaceTimeData> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != GRID_MAGIC {
        return Err(Error::Data("not a gridded binary file (bad magic)".into()));
    }
    let mut u32s = [0u32; 4];
    for v in &mut u32s {
        let mut b = [0u8; 4];
        input.read_exact(&mut b)?;
        *v = u32::from_le_bytes(b);
    }
    let mut f64s = [0f64; 5];
    for v in &mut f64s {
        let mut b = [0u8; 8];
        input.read_exact(&mut b)?;
        *v = f64::from_le_bytes(b);
    }
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    let origin = i64::from_le_bytes(b);
    let [nx, ny, nt, flags] = u32s.map(|v| v as usize);
    let grid = Grid::new(nx, ny, f64s[0], f64s[1], f64s[2], f64s[3])?;
    let axis = TimeAxis {
        origin,
        step_seconds: f64s[4],
        calendar: flags & 1 == 1,
    };
    let mut raw = vec![0u8; nx * ny * nt * 4];
    input.read_exact(&mut raw)?;
    let values = raw
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    SpaceTimeData::gridded(grid, axis, nt, values)
}
