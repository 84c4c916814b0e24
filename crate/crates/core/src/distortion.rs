//! Fast-scan galvanometer distortion.
//!
//! While the mirror travels from the previous scan point to the current one
//! the laser keeps firing, so the histogram recorded for point `n` is the
//! path average of ideal transients along that segment. Each path sample at
//! distance `s` from `x_n` is weighted by `(d_n / d_n^s)^2` and advanced by
//! `2 (d_n - d_n^s) / c`, where `d` is the wall-to-detector distance.
//!
//! With `M` samples at `s = i * ds`, `i = 1..=M` and `M * ds = |S|`, the
//! `1/|S|` normalisation and the `ds` measure reduce to a plain `1/M` mean.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::transient::{
    distance, subgrid_geometry, subgrid_stride, CubeKind, Point3, TransientCube, SPEED_OF_LIGHT,
};

/// Ordered scan-grid visits with a fixed dwell per point.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanPattern {
    points: Vec<(usize, usize)>,
    resolution: [usize; 2],
    /// Seconds per scan point.
    pub exposure_per_point: f64,
}

pub const DEFAULT_EXPOSURE: f64 = 0.4e-3;

impl ScanPattern {
    /// Boustrophedon raster: row `j = 0` runs along +x, row 1 back along -x,
    /// and so on.
    pub fn serpentine(nx: usize, ny: usize) -> Self {
        let mut points = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            if j % 2 == 0 {
                points.extend((0..nx).map(|i| (i, j)));
            } else {
                points.extend((0..nx).rev().map(|i| (i, j)));
            }
        }
        Self {
            points,
            resolution: [nx, ny],
            exposure_per_point: DEFAULT_EXPOSURE,
        }
    }

    /// Custom visiting order; must satisfy the serpentine invariants.
    pub fn from_points(points: Vec<(usize, usize)>, resolution: [usize; 2], exposure_per_point: f64) -> Result<Self> {
        let pattern = Self {
            points,
            resolution,
            exposure_per_point,
        };
        pattern.validate()?;
        Ok(pattern)
    }

    /// Every cell exactly once, unit axis-aligned steps between neighbours.
    pub fn validate(&self) -> Result<()> {
        let [nx, ny] = self.resolution;
        if self.points.len() != nx * ny {
            return Err(CoreError::Config(format!(
                "pattern visits {} points, grid has {}",
                self.points.len(),
                nx * ny
            )));
        }
        let mut seen = vec![false; nx * ny];
        for &(i, j) in &self.points {
            if i >= nx || j >= ny {
                return Err(CoreError::Config(format!("pattern point ({i}, {j}) outside {nx}x{ny} grid")));
            }
            if std::mem::replace(&mut seen[i * ny + j], true) {
                return Err(CoreError::Config(format!("pattern visits ({i}, {j}) twice")));
            }
        }
        for (k, w) in self.points.windows(2).enumerate() {
            let di = w[0].0.abs_diff(w[1].0);
            let dj = w[0].1.abs_diff(w[1].1);
            if di + dj != 1 {
                return Err(CoreError::Config(format!(
                    "pattern step {k} -> {} is not a unit axis-aligned move",
                    k + 1
                )));
            }
        }
        if !(self.exposure_per_point > 0.0) {
            return Err(CoreError::Config("exposure per point must be positive".into()));
        }
        Ok(())
    }

    pub fn points(&self) -> &[(usize, usize)] {
        &self.points
    }

    pub fn resolution(&self) -> [usize; 2] {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Duration of one full frame.
    pub fn frame_time(&self) -> f64 {
        self.points.len() as f64 * self.exposure_per_point
    }
}

/// `M` path samples per segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PathSampling {
    samples: usize,
}

impl PathSampling {
    pub fn new(samples: usize) -> Result<Self> {
        if samples == 0 {
            return Err(CoreError::Config("path sampling needs at least one sample per segment".into()));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Spacing `ds` for a segment of the given length.
    pub fn step(&self, segment_length: f64) -> f64 {
        segment_length / self.samples as f64
    }
}

/// How a path sample reads the dense cube.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lookup {
    #[default]
    Nearest,
    Bilinear,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistortionConfig {
    /// Samples per segment (`M`).
    pub samples: usize,
    pub lookup: Lookup,
    pub exposure_per_point: f64,
}

impl Default for DistortionConfig {
    fn default() -> Self {
        Self {
            samples: 16,
            lookup: Lookup::Nearest,
            exposure_per_point: DEFAULT_EXPOSURE,
        }
    }
}

impl DistortionConfig {
    pub fn sampling(&self) -> Result<PathSampling> {
        PathSampling::new(self.samples)
    }
}

/// The wall point `s` meters from `current` towards `previous`.
pub fn shifted_point(current: &Point3, previous: &Point3, s: f64) -> Result<Point3> {
    let len = distance(current, previous);
    if len == 0.0 {
        return Err(CoreError::Domain("segment endpoints coincide".into()));
    }
    let tol = 1e-12 * len;
    if !(s >= -tol && s <= len + tol) {
        return Err(CoreError::Domain(format!("shift {s} outside segment [0, {len}]")));
    }
    let f = s / len;
    Ok([
        current[0] + f * (previous[0] - current[0]),
        current[1] + f * (previous[1] - current[1]),
        current[2] + f * (previous[2] - current[2]),
    ])
}

/// Radiometric weight `(d_n / d_s)^2` and time advance `2 (d_n - d_s) / c`
/// in seconds.
pub fn distortion_terms(d_n: f64, d_s: f64) -> Result<(f64, f64)> {
    if !(d_n > 0.0 && d_s > 0.0) {
        return Err(CoreError::Domain(format!(
            "distances must be positive, got d_n = {d_n}, d_s = {d_s}"
        )));
    }
    let ratio = d_n / d_s;
    Ok((ratio * ratio, 2.0 * (d_n - d_s) / SPEED_OF_LIGHT))
}

/// Nearest dense index `i / m` of the way from `cur` to `prev`, with exact
/// half-way ties going to the current point.
fn nearest_on_segment(cur: usize, prev: usize, i: usize, m: usize) -> usize {
    let num = i * cur.abs_diff(prev);
    let q = (2 * num + m - 1) / (2 * m);
    if prev >= cur {
        cur + q
    } else {
        cur - q
    }
}

fn sample_histogram<'a>(
    dense: &'a TransientCube,
    fi: f64,
    fj: f64,
    nearest: (usize, usize),
    position: &Point3,
    lookup: Lookup,
    scratch: &'a mut Vec<f64>,
) -> Result<&'a [f64]> {
    let [nx, ny] = dense.wall().resolution;
    let max_i = (nx - 1) as f64;
    let max_j = (ny - 1) as f64;
    let tol = 1e-9;
    if fi < -tol || fj < -tol || fi > max_i + tol || fj > max_j + tol {
        return Err(CoreError::OutOfExtent { position: *position });
    }
    let fi = fi.clamp(0.0, max_i);
    let fj = fj.clamp(0.0, max_j);
    match lookup {
        Lookup::Nearest => Ok(dense.histogram(nearest.0, nearest.1)),
        Lookup::Bilinear => {
            let i0 = fi.floor() as usize;
            let j0 = fj.floor() as usize;
            let i1 = (i0 + 1).min(nx - 1);
            let j1 = (j0 + 1).min(ny - 1);
            let (u, v) = (fi - i0 as f64, fj - j0 as f64);
            scratch.clear();
            scratch.resize(dense.num_bins(), 0.0);
            for (i, j, w) in [
                (i0, j0, (1.0 - u) * (1.0 - v)),
                (i1, j0, u * (1.0 - v)),
                (i0, j1, (1.0 - u) * v),
                (i1, j1, u * v),
            ] {
                if w == 0.0 {
                    continue;
                }
                for (o, &h) in scratch.iter_mut().zip(dense.histogram(i, j)) {
                    *o += w * h;
                }
            }
            Ok(scratch.as_slice())
        }
    }
}

/// Fast-scan histogram recorded at pattern index `n`.
///
/// `pattern` lives on a regular sub-grid of `dense`; scan point `(a, b)` is
/// dense point `(a * stride_x, b * stride_y)`. The first pattern point has
/// no incoming segment and returns the dense histogram unchanged.
pub fn distort_histogram(
    dense: &TransientCube,
    n: usize,
    pattern: &ScanPattern,
    sampling: PathSampling,
    lookup: Lookup,
) -> Result<Vec<f64>> {
    let stride = subgrid_stride(dense.wall().resolution, pattern.resolution())?;
    let &(a, b) = pattern
        .points()
        .get(n)
        .ok_or_else(|| CoreError::Domain(format!("pattern index {n} out of range (len {})", pattern.len())))?;
    let cur_idx = [a * stride[0], b * stride[1]];
    if n == 0 {
        return Ok(dense.histogram(cur_idx[0], cur_idx[1]).to_vec());
    }
    let (pa, pb) = pattern.points()[n - 1];
    let prev_idx = [pa * stride[0], pb * stride[1]];
    let wall = dense.wall();
    let current = wall.point(cur_idx[0], cur_idx[1]);
    let previous = wall.point(prev_idx[0], prev_idx[1]);
    let length = distance(&current, &previous);
    let d_n = distance(&current, &wall.detector_origin);
    let bin_width = dense.time_axis().bin_width;
    let t = dense.num_bins();
    let m = sampling.samples();
    let weight_norm = 1.0 / m as f64;

    let mut out = vec![0.0; t];
    let mut scratch = Vec::new();
    for i in 1..=m {
        let frac = i as f64 / m as f64;
        let s = if i == m { length } else { frac * length };
        let position = shifted_point(&current, &previous, s)?;
        let fi = cur_idx[0] as f64 + frac * (prev_idx[0] as f64 - cur_idx[0] as f64);
        let fj = cur_idx[1] as f64 + frac * (prev_idx[1] as f64 - cur_idx[1] as f64);
        let d_s = distance(&position, &wall.detector_origin);
        let (weight, advance) = distortion_terms(d_n, d_s)?;
        let shift = (advance / bin_width).round() as i64;
        let nearest = (
            nearest_on_segment(cur_idx[0], prev_idx[0], i, m),
            nearest_on_segment(cur_idx[1], prev_idx[1], i, m),
        );
        let hist = sample_histogram(dense, fi, fj, nearest, &position, lookup, &mut scratch)?;
        let w = weight * weight_norm;
        // out[k] = sum_i w_i * h_i[k + shift_i]
        let lo = (-shift).max(0) as usize;
        let hi = ((t as i64) - shift).clamp(0, t as i64) as usize;
        for k in lo..hi {
            out[k] += w * hist[(k as i64 + shift) as usize];
        }
    }
    Ok(out)
}

/// Sparse fast-scan cube on a `target` sub-grid of an ideal dense cube,
/// traversed in serpentine order.
pub fn distort_cube(dense: &TransientCube, target: [usize; 2], config: &DistortionConfig) -> Result<TransientCube> {
    let mut pattern = ScanPattern::serpentine(target[0], target[1]);
    pattern.exposure_per_point = config.exposure_per_point;
    distort_cube_with_pattern(dense, &pattern, config)
}

pub fn distort_cube_with_pattern(
    dense: &TransientCube,
    pattern: &ScanPattern,
    config: &DistortionConfig,
) -> Result<TransientCube> {
    if dense.kind() != CubeKind::Ideal {
        return Err(CoreError::Domain(format!(
            "distortion expects an ideal dense cube, got {:?}",
            dense.kind()
        )));
    }
    pattern.validate()?;
    let target = pattern.resolution();
    let stride = subgrid_stride(dense.wall().resolution, target)?;
    let sampling = config.sampling()?;
    let per_point: Vec<((usize, usize), Vec<f64>)> = (0..pattern.len())
        .into_par_iter()
        .map(|n| {
            distort_histogram(dense, n, pattern, sampling, config.lookup)
                .map(|h| (pattern.points()[n], h))
                .map_err(|e| e.context(format!("pattern index {n}")))
        })
        .collect::<Result<_>>()?;
    let t = dense.num_bins();
    let mut data = vec![0.0; target[0] * target[1] * t];
    for ((a, b), h) in per_point {
        let start = (a * target[1] + b) * t;
        data[start..start + t].copy_from_slice(&h);
    }
    let wall = subgrid_geometry(dense.wall(), target, stride);
    TransientCube::new(wall, *dense.time_axis(), CubeKind::IdealDistorted, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transient::{render_cube, HiddenScene, ScenePoint, TimeAxis, WallGeometry};

    #[test]
    fn shifted_point_endpoints_and_midpoint() {
        let cur = [0.1, 0.0, 0.0];
        let prev = [0.0, 0.0, 0.0];
        assert_eq!(shifted_point(&cur, &prev, 0.0).unwrap(), cur);
        let full = shifted_point(&cur, &prev, 0.1).unwrap();
        assert!(distance(&full, &prev) < 1e-16);
        let mid = shifted_point(&cur, &prev, 0.05).unwrap();
        assert!((mid[0] - 0.05).abs() < 1e-16 && mid[1] == 0.0);
    }

    #[test]
    fn shifted_point_errors() {
        assert!(shifted_point(&[0.0; 3], &[0.0; 3], 0.0).is_err());
        assert!(shifted_point(&[0.1, 0.0, 0.0], &[0.0; 3], 0.2).is_err());
        assert!(shifted_point(&[0.1, 0.0, 0.0], &[0.0; 3], -0.01).is_err());
    }

    #[test]
    fn distortion_terms_examples() {
        assert_eq!(distortion_terms(2.0, 2.0).unwrap(), (1.0, 0.0));
        let (w, dt) = distortion_terms(2.0, 2.1).unwrap();
        assert!((w - 0.907_029_478_458_049_9).abs() < 1e-12);
        assert!((dt - (-0.2 / SPEED_OF_LIGHT)).abs() < 1e-24);
        assert!((dt * 1e9 + 0.667).abs() < 1e-3);
        assert!(distortion_terms(0.0, 1.0).is_err());
        assert!(distortion_terms(1.0, -1.0).is_err());
    }

    #[test]
    fn serpentine_2x2() {
        let p = ScanPattern::serpentine(2, 2);
        assert_eq!(p.points(), &[(0, 0), (1, 0), (1, 1), (0, 1)]);
        p.validate().unwrap();
    }

    #[test]
    fn invalid_patterns_rejected() {
        assert!(ScanPattern::from_points(vec![(0, 0), (1, 1), (1, 0), (0, 1)], [2, 2], 1e-3).is_err());
        assert!(ScanPattern::from_points(vec![(0, 0), (1, 0), (0, 0), (0, 1)], [2, 2], 1e-3).is_err());
        assert!(ScanPattern::from_points(vec![(0, 0), (1, 0)], [2, 2], 1e-3).is_err());
    }

    fn dense_cube() -> TransientCube {
        let wall = WallGeometry::square(2.0, 16).unwrap();
        let axis = TimeAxis::new(256, 40e-12).unwrap();
        let scene = HiddenScene::new(
            (0..50)
                .map(|k| ScenePoint {
                    position: [-0.5 + 0.02 * k as f64, 0.1 * (k % 5) as f64 - 0.2, 1.0],
                    albedo: 1.0,
                })
                .collect(),
        )
        .unwrap();
        render_cube(&scene, &wall, &axis).unwrap()
    }

    #[test]
    fn first_point_is_identity() {
        let dense = dense_cube();
        let pattern = ScanPattern::serpentine(4, 4);
        let h = distort_histogram(&dense, 0, &pattern, PathSampling::new(16).unwrap(), Lookup::Nearest).unwrap();
        assert_eq!(&h[..], dense.histogram(0, 0));
    }

    #[test]
    fn single_sample_is_weighted_shifted_previous_point() {
        let dense = dense_cube();
        let pattern = ScanPattern::serpentine(4, 4);
        let n = 5; // (2, 1) after (3, 1)
        let out = distort_histogram(&dense, n, &pattern, PathSampling::new(1).unwrap(), Lookup::Nearest).unwrap();
        let wall = dense.wall();
        let (a, b) = pattern.points()[n];
        let (pa, pb) = pattern.points()[n - 1];
        let d_n = distance(&wall.point(4 * a, 4 * b), &wall.detector_origin);
        let d_s = distance(&wall.point(4 * pa, 4 * pb), &wall.detector_origin);
        let w = (d_n / d_s).powi(2);
        let shift = (2.0 * (d_n - d_s) / SPEED_OF_LIGHT / dense.time_axis().bin_width).round() as i64;
        let src = dense.histogram(4 * pa, 4 * pb);
        for (k, &v) in out.iter().enumerate() {
            let idx = k as i64 + shift;
            let expect = if idx >= 0 && (idx as usize) < src.len() { w * src[idx as usize] } else { 0.0 };
            assert!((v - expect).abs() <= 1e-15 * expect.abs().max(1e-30), "bin {k}");
        }
    }

    #[test]
    fn far_detector_gives_plain_average() {
        let mut dense = dense_cube();
        let mut wall = *dense.wall();
        wall.detector_origin = [0.0, 0.0, -1e7];
        dense = TransientCube::new(wall, *dense.time_axis(), CubeKind::Ideal, dense.into_data()).unwrap();
        let pattern = ScanPattern::serpentine(4, 4);
        let m = 8;
        let out = distort_histogram(&dense, 1, &pattern, PathSampling::new(m).unwrap(), Lookup::Nearest).unwrap();
        // Segment from dense (0,0) to (4,0): samples at fractional index 4 - i/2.
        let mut mean = vec![0.0; dense.num_bins()];
        for i in 1..=m {
            let fi = 4.0 - 4.0 * i as f64 / m as f64;
            for (o, h) in mean.iter_mut().zip(dense.histogram(fi.round() as usize, 0)) {
                *o += h / m as f64;
            }
        }
        for (a, b) in out.iter().zip(&mean) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-12));
        }
    }

    #[test]
    fn bilinear_lookup_matches_nearest_on_knots() {
        let dense = dense_cube();
        let pattern = ScanPattern::serpentine(4, 4);
        // With 4 samples per 4-pitch segment every sample sits on a dense knot.
        let s = PathSampling::new(4).unwrap();
        let a = distort_histogram(&dense, 3, &pattern, s, Lookup::Nearest).unwrap();
        let b = distort_histogram(&dense, 3, &pattern, s, Lookup::Bilinear).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-15 * x.abs().max(1e-30));
        }
    }

    #[test]
    fn distort_cube_rejects_bad_inputs() {
        let dense = dense_cube();
        assert!(distort_cube(&dense, [5, 5], &DistortionConfig::default()).is_err());
        let measured = dense.clone().with_kind(CubeKind::Measured);
        assert!(distort_cube(&measured, [4, 4], &DistortionConfig::default()).is_err());
        let out = distort_cube(&dense, [4, 4], &DistortionConfig::default()).unwrap();
        assert_eq!(out.kind(), CubeKind::IdealDistorted);
        assert_eq!(out.wall().resolution, [4, 4]);
    }
}
