//! Grain indexing on pixel grids of orientation measurements.
//!
//! Map CSV format (angles in radians, Bunge ZXZ):
//!
//! ```text
//! x,y,phi1,Phi,phi2[,grain]
//! ```
//!
//! One record per pixel, `0 <= x < width`, `0 <= y < height`, each pixel
//! exactly once. The optional `grain` column carries nonnegative integer
//! labels (0 = unindexed), e.g. ground truth from [`synthesize`].

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ginv::{em_fit, EmConfig, GInvariantVmf};
use crate::io::parse_numeric_rows;
use crate::orient::{EulerAngles, UnitQuaternion};
use crate::symgrp::{disorientation, map_to_fz, SymmetryGroup};
use crate::vmf::{self, uniform_quaternion, VmfParams};

pub const MAP_HEADER: &str = "x,y,phi1,Phi,phi2";
pub const LABELED_MAP_HEADER: &str = "x,y,phi1,Phi,phi2,grain";
pub const GRAINS_HEADER: &str =
    "grain,pixels,q1,q2,q3,q4,phi1,Phi,phi2,kappa,kappa_saturated,iterations,converged,mean_disorientation_deg";
pub const PIXELS_HEADER: &str = "x,y,grain,phi1,Phi,phi2";

pub const DEFAULT_THRESHOLD_DEG: f64 = 5.0;
pub const DEFAULT_MIN_SIZE: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct OrientationMap {
    width: usize,
    height: usize,
    /// Row-major, index `y * width + x`.
    orientations: Vec<UnitQuaternion>,
    labels: Option<Vec<u32>>,
}

impl OrientationMap {
    pub fn new(width: usize, height: usize, orientations: Vec<UnitQuaternion>) -> Result<Self> {
        if width == 0 || height == 0 || orientations.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} orientations for a {width}x{height} grid",
                orientations.len()
            )));
        }
        Ok(OrientationMap {
            width,
            height,
            orientations,
            labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != self.orientations.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} pixels",
                labels.len(),
                self.orientations.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.orientations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orientations.is_empty()
    }

    pub fn orientations(&self) -> &[UnitQuaternion] {
        &self.orientations
    }

    pub fn orientation(&self, x: usize, y: usize) -> UnitQuaternion {
        self.orientations[y * self.width + x]
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    /// Pixel indices per nonzero label, ascending by label then pixel index.
    pub fn grains(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut out: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        if let Some(labels) = &self.labels {
            for (i, &l) in labels.iter().enumerate() {
                if l != 0 {
                    out.entry(l).or_default().push(i);
                }
            }
        }
        out
    }
}

fn as_index(v: f64, what: &str, line: usize) -> Result<usize> {
    if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
        return Err(Error::Parse {
            line,
            msg: format!("{what} must be a nonnegative integer, got {v}"),
        });
    }
    Ok(v as usize)
}

pub fn parse_map(text: &str) -> Result<OrientationMap> {
    let (header_line, header) = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .find(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .ok_or(Error::Parse {
            line: 1,
            msg: "empty map file".into(),
        })?;
    let compact: String = header.chars().filter(|c| !c.is_whitespace()).collect();
    let labeled = match compact.as_str() {
        MAP_HEADER => false,
        LABELED_MAP_HEADER => true,
        _ => {
            return Err(Error::Parse {
                line: header_line,
                msg: format!("expected header `{MAP_HEADER}` or `{LABELED_MAP_HEADER}`"),
            })
        }
    };
    let width = if labeled { 6 } else { 5 };
    let (_, rows) = parse_numeric_rows(text, width)?;

    let mut records = Vec::with_capacity(rows.len());
    let (mut w, mut h) = (0, 0);
    for (line, v) in rows {
        let x = as_index(v[0], "x", line)?;
        let y = as_index(v[1], "y", line)?;
        let euler = EulerAngles::new(v[2], v[3], v[4]).map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        let label = if labeled { as_index(v[5], "grain", line)? as u32 } else { 0 };
        w = w.max(x + 1);
        h = h.max(y + 1);
        records.push((line, x, y, euler.to_quat(), label));
    }
    if records.is_empty() {
        return Err(Error::DimensionMismatch("map has no pixel records".into()));
    }
    if records.len() != w * h {
        return Err(Error::DimensionMismatch(format!(
            "{} records do not fill a {w}x{h} grid",
            records.len()
        )));
    }
    let mut orientations = vec![UnitQuaternion::IDENTITY; w * h];
    let mut labels = vec![0u32; w * h];
    let mut seen = vec![false; w * h];
    for (line, x, y, q, label) in records {
        let idx = y * w + x;
        if seen[idx] {
            return Err(Error::DimensionMismatch(format!("pixel ({x}, {y}) repeated at line {line}")));
        }
        seen[idx] = true;
        orientations[idx] = q;
        labels[idx] = label;
    }
    let map = OrientationMap::new(w, h, orientations)?;
    if labeled {
        map.with_labels(labels)
    } else {
        Ok(map)
    }
}

pub fn load_map(path: impl AsRef<Path>) -> Result<OrientationMap> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_map(&text)
}

/// Row-major map CSV; the `grain` column is written when labels are present.
pub fn format_map(map: &OrientationMap) -> String {
    let mut out = String::with_capacity(map.len() * 64);
    out.push_str(if map.labels.is_some() { LABELED_MAP_HEADER } else { MAP_HEADER });
    out.push('\n');
    for y in 0..map.height {
        for x in 0..map.width {
            let idx = y * map.width + x;
            let [a, b, c] = map.orientations[idx].to_euler().as_array();
            let _ = write!(out, "{x},{y},{a},{b},{c}");
            if let Some(labels) = &map.labels {
                let _ = write!(out, ",{}", labels[idx]);
            }
            out.push('\n');
        }
    }
    out
}

pub fn write_map(map: &OrientationMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_map(map)).map_err(|e| Error::io(path, e))
}

/// Connected components of the 4-neighbour graph whose edges join pixels with
/// disorientation at most `threshold` (radians). Components smaller than
/// `min_size` get label 0; the rest are numbered densely from 1 in order of
/// their first pixel in row-major order.
pub fn segment_grains(map: &OrientationMap, group: &SymmetryGroup, threshold: f64, min_size: usize) -> Vec<u32> {
    let (w, h) = (map.width, map.height);
    let q = &map.orientations;
    let mut component = vec![usize::MAX; w * h];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if component[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        component[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(p) = queue.pop_front() {
            size += 1;
            let (x, y) = (p % w, p / w);
            let neighbours = [
                (x > 0).then(|| p - 1),
                (x + 1 < w).then(|| p + 1),
                (y > 0).then(|| p - w),
                (y + 1 < h).then(|| p + w),
            ];
            for nb in neighbours.into_iter().flatten() {
                if component[nb] == usize::MAX && disorientation(&q[p], &q[nb], group) <= threshold {
                    component[nb] = id;
                    queue.push_back(nb);
                }
            }
        }
        sizes.push(size);
    }
    let mut next = 1u32;
    let dense: Vec<u32> = sizes
        .iter()
        .map(|&s| {
            if s >= min_size {
                next += 1;
                next - 1
            } else {
                0
            }
        })
        .collect();
    component.into_iter().map(|c| dense[c]).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrainRecord {
    pub id: u32,
    pub pixel_count: usize,
    /// Fundamental-zone representative of the fitted mean.
    pub mean: UnitQuaternion,
    pub kappa: f64,
    pub kappa_saturated: bool,
    pub iterations: usize,
    pub converged: bool,
    /// Mean disorientation of member pixels to `mean`, radians.
    pub mean_disorientation: f64,
}

#[derive(Debug)]
pub struct GrainFailure {
    pub id: u32,
    pub pixel_count: usize,
    pub error: Error,
}

#[derive(Debug, Default)]
pub struct IndexOutcome {
    /// Successful fits, ascending by grain id.
    pub records: Vec<GrainRecord>,
    pub failures: Vec<GrainFailure>,
}

fn index_one(id: u32, pixels: &[UnitQuaternion], group: &SymmetryGroup, config: &EmConfig) -> Result<GrainRecord> {
    let fit = em_fit(pixels, group, config)?;
    let mean = fit.params.mu;
    let mean_disorientation =
        pixels.iter().map(|p| disorientation(p, &mean, group)).sum::<f64>() / pixels.len() as f64;
    Ok(GrainRecord {
        id,
        pixel_count: pixels.len(),
        mean,
        kappa: fit.params.kappa,
        kappa_saturated: fit.kappa_saturated,
        iterations: fit.iterations,
        converged: fit.converged,
        mean_disorientation,
    })
}

/// One EM fit per labeled grain, in parallel. Grains whose fit fails are
/// collected in `failures` instead of aborting the run.
pub fn index_grains(map: &OrientationMap, group: &SymmetryGroup, config: &EmConfig) -> Result<IndexOutcome> {
    if map.labels.is_none() {
        return Err(Error::InvalidConfig("map has no grain labels; segment it first".into()));
    }
    let grains: Vec<(u32, Vec<UnitQuaternion>)> = map
        .grains()
        .into_iter()
        .map(|(id, idx)| (id, idx.iter().map(|&i| map.orientations[i]).collect()))
        .collect();
    let results: Vec<(u32, usize, Result<GrainRecord>)> = grains
        .par_iter()
        .map(|(id, pixels)| (*id, pixels.len(), index_one(*id, pixels, group, config)))
        .collect();
    let mut outcome = IndexOutcome::default();
    for (id, pixel_count, r) in results {
        match r {
            Ok(rec) => outcome.records.push(rec),
            Err(error) => outcome.failures.push(GrainFailure { id, pixel_count, error }),
        }
    }
    Ok(outcome)
}

pub fn format_grains(records: &[GrainRecord]) -> String {
    let mut out = String::from(GRAINS_HEADER);
    out.push('\n');
    for r in records {
        let [q1, q2, q3, q4] = r.mean.components();
        let [a, b, c] = r.mean.to_euler().as_array();
        let _ = writeln!(
            out,
            "{},{},{q1},{q2},{q3},{q4},{a},{b},{c},{},{},{},{},{}",
            r.id,
            r.pixel_count,
            r.kappa,
            r.kappa_saturated,
            r.iterations,
            r.converged,
            r.mean_disorientation.to_degrees()
        );
    }
    out
}

/// Per-pixel rows in row-major order. Pixels without a successfully indexed
/// grain get id 0 and empty orientation fields.
pub fn format_pixels(records: &[GrainRecord], map: &OrientationMap) -> String {
    let euler: BTreeMap<u32, [f64; 3]> = records.iter().map(|r| (r.id, r.mean.to_euler().as_array())).collect();
    let mut out = String::with_capacity(map.len() * 48);
    out.push_str(PIXELS_HEADER);
    out.push('\n');
    let labels = map.labels();
    for y in 0..map.height {
        for x in 0..map.width {
            let label = labels.map_or(0, |l| l[y * map.width + x]);
            match euler.get(&label) {
                Some([a, b, c]) if label != 0 => {
                    let _ = writeln!(out, "{x},{y},{label},{a},{b},{c}");
                }
                _ => {
                    let _ = writeln!(out, "{x},{y},0,,,");
                }
            }
        }
    }
    out
}

/// Writes `grains.csv` and `pixels.csv` under `out_dir`.
pub fn emit_outputs(records: &[GrainRecord], map: &OrientationMap, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::InvalidConfig("no indexed grains to write".into()));
    }
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (name, contents) in [
        ("grains.csv", format_grains(records)),
        ("pixels.csv", format_pixels(records, map)),
    ] {
        let path = dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub grains: usize,
    pub width: usize,
    pub height: usize,
    pub kappa: f64,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct SynthMap {
    /// Map with ground-truth labels `1..=grains`.
    pub map: OrientationMap,
    /// True mean of grain `i + 1`.
    pub means: Vec<UnitQuaternion>,
    pub kappa: f64,
}

/// Voronoi seeds placed by rejection with a minimum spacing, relaxed until
/// all seeds fit.
fn place_seeds(rng: &mut ChaCha8Rng, k: usize, w: usize, h: usize) -> Vec<(f64, f64)> {
    let mut spacing = 0.8 * ((w * h) as f64 / k as f64).sqrt();
    loop {
        let mut seeds: Vec<(f64, f64)> = Vec::with_capacity(k);
        let mut attempts = 0;
        while seeds.len() < k && attempts < 10_000 {
            attempts += 1;
            let p = (rng.random::<f64>() * w as f64, rng.random::<f64>() * h as f64);
            if seeds.iter().all(|s| (s.0 - p.0).hypot(s.1 - p.1) >= spacing) {
                seeds.push(p);
            }
        }
        if seeds.len() == k {
            return seeds;
        }
        spacing *= 0.9;
    }
}

/// Voronoi grain map whose pixels are independent draws from the
/// group-invariant model around a uniformly random mean per grain. Raw Euler
/// triples therefore scatter over all symmetry translates of each mean.
pub fn synthesize(config: &SynthConfig, group: &SymmetryGroup) -> Result<SynthMap> {
    let SynthConfig {
        grains,
        width,
        height,
        kappa,
        seed,
    } = *config;
    if grains == 0 || width == 0 || height == 0 || grains > width * height {
        return Err(Error::InvalidConfig(format!(
            "cannot place {grains} grains on a {width}x{height} grid"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds = place_seeds(&mut rng, grains, width, height);
    let means: Vec<UnitQuaternion> = (0..grains).map(|_| uniform_quaternion(&mut rng)).collect();

    let labels: Vec<u32> = (0..width * height)
        .map(|p| {
            let (x, y) = ((p % width) as f64 + 0.5, (p / width) as f64 + 0.5);
            let nearest = seeds
                .iter()
                .enumerate()
                .min_by(|a, b| {
                    let da = (a.1 .0 - x).hypot(a.1 .1 - y);
                    let db = (b.1 .0 - x).hypot(b.1 .1 - y);
                    da.total_cmp(&db)
                })
                .map(|(i, _)| i)
                .expect("at least one seed");
            nearest as u32 + 1
        })
        .collect();

    let mut counts = vec![0usize; grains];
    for &l in &labels {
        counts[l as usize - 1] += 1;
    }
    let mut draws: Vec<std::vec::IntoIter<UnitQuaternion>> = Vec::with_capacity(grains);
    for (g, &mean) in means.iter().enumerate() {
        let model = GInvariantVmf::new(group.clone(), VmfParams::new(mean, kappa)?);
        draws.push(model.sample_with_rng(counts[g], &mut rng).into_iter());
    }
    let orientations = labels
        .iter()
        .map(|&l| draws[l as usize - 1].next().expect("one draw per pixel"))
        .collect();
    let map = OrientationMap::new(width, height, orientations)?.with_labels(labels)?;
    Ok(SynthMap { map, means, kappa })
}

/// Single-grain map whose mean sits on the boundary of the cubic fundamental
/// zone (45 degrees about [001]). Pixels are VMF draws folded into the zone,
/// as an indexing package would report them, so the raw orientations split
/// into two clusters 90 degrees apart that are one orientation physically.
pub fn wraparound_fixture(width: usize, height: usize, kappa: f64, seed: u64, group: &SymmetryGroup) -> Result<OrientationMap> {
    let mean = UnitQuaternion::from_axis_angle([0.0, 0.0, 1.0], std::f64::consts::FRAC_PI_4)?;
    let draws = vmf::sample(&VmfParams::new(mean, kappa)?, width * height, seed);
    let folded = draws
        .iter()
        .map(|q| map_to_fz(q, group).map(|(img, _)| img))
        .collect::<Result<Vec<_>>>()?;
    OrientationMap::new(width, height, folded)?.with_labels(vec![1; width * height])
}
