//! Ideal confocal transients and the canonical transient-cube type.
//!
//! A confocal scan illuminates and observes the same relay-wall point, so a
//! scene point at distance `r` from the scan point contributes `rho / r^4`
//! to the bin containing the round-trip time `2 r / c`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub type Point3 = [f64; 3];

#[inline]
pub(crate) fn distance(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Uniform histogram time axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeAxis {
    pub num_bins: usize,
    /// Seconds.
    pub bin_width: f64,
    /// Left edge of bin 0, seconds.
    #[serde(default)]
    pub origin: f64,
}

impl TimeAxis {
    pub fn new(num_bins: usize, bin_width: f64) -> Result<Self> {
        Self::with_origin(num_bins, bin_width, 0.0)
    }

    pub fn with_origin(num_bins: usize, bin_width: f64, origin: f64) -> Result<Self> {
        let axis = Self {
            num_bins,
            bin_width,
            origin,
        };
        axis.validate()?;
        Ok(axis)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_bins == 0 {
            return Err(CoreError::Config("time axis needs at least one bin".into()));
        }
        if !(self.bin_width > 0.0 && self.bin_width.is_finite()) {
            return Err(CoreError::Config(format!(
                "bin width must be positive, got {}",
                self.bin_width
            )));
        }
        if !self.origin.is_finite() {
            return Err(CoreError::Config("time origin must be finite".into()));
        }
        Ok(())
    }

    /// Bin containing time `t`, or `None` when `t` falls outside the axis.
    #[inline]
    pub fn bin_of(&self, t: f64) -> Option<usize> {
        let u = (t - self.origin) / self.bin_width;
        if u >= 0.0 && u < self.num_bins as f64 {
            Some(u as usize)
        } else {
            None
        }
    }

    /// Total time span covered by the axis.
    pub fn span(&self) -> f64 {
        self.num_bins as f64 * self.bin_width
    }
}

impl Default for TimeAxis {
    fn default() -> Self {
        Self {
            num_bins: 512,
            bin_width: 20e-12,
            origin: 0.0,
        }
    }
}

/// Relay wall in the `z = 0` plane with a uniform scan grid centred on the
/// wall frame origin.
///
/// Coordinates are expressed in the frame of the scan grid: the grid centre
/// is the lateral origin and `detector_origin` is stored relative to it.
/// A sub-grid that is not centred on its parent therefore carries a
/// detector position shifted by the sub-grid offset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallGeometry {
    /// Meters along x and y.
    pub extent: [f64; 2],
    /// Scan points along x and y.
    pub resolution: [usize; 2],
    /// Co-located laser and detector, meters. Must have negative z.
    pub detector_origin: Point3,
}

impl WallGeometry {
    pub fn new(extent: [f64; 2], resolution: [usize; 2], detector_origin: Point3) -> Result<Self> {
        let wall = Self {
            extent,
            resolution,
            detector_origin,
        };
        wall.validate()?;
        Ok(wall)
    }

    /// Square wall of side `extent` with `n x n` scan points and the detector
    /// 2 m in front of its centre.
    pub fn square(extent: f64, n: usize) -> Result<Self> {
        Self::new([extent, extent], [n, n], [0.0, 0.0, -2.0])
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution[0] == 0 || self.resolution[1] == 0 {
            return Err(CoreError::Config(format!(
                "wall resolution must be at least 1x1, got {}x{}",
                self.resolution[0], self.resolution[1]
            )));
        }
        if !(self.extent[0] > 0.0 && self.extent[1] > 0.0)
            || !self.extent.iter().all(|e| e.is_finite())
        {
            return Err(CoreError::Config(format!(
                "wall extent must be positive, got {:?}",
                self.extent
            )));
        }
        if !(self.detector_origin[2] < 0.0) || !self.detector_origin.iter().all(|v| v.is_finite())
        {
            return Err(CoreError::Config(format!(
                "detector origin must lie in front of the wall (z < 0), got {:?}",
                self.detector_origin
            )));
        }
        Ok(())
    }

    pub fn num_points(&self) -> usize {
        self.resolution[0] * self.resolution[1]
    }

    /// Grid spacing along x and y.
    pub fn pitch(&self) -> [f64; 2] {
        [
            self.extent[0] / self.resolution[0] as f64,
            self.extent[1] / self.resolution[1] as f64,
        ]
    }

    /// Position of grid point `(i, j)`; `i` indexes x, `j` indexes y.
    #[inline]
    pub fn point(&self, i: usize, j: usize) -> Point3 {
        self.point_at(i as f64, j as f64)
    }

    /// Position at a fractional grid index.
    #[inline]
    pub fn point_at(&self, fi: f64, fj: f64) -> Point3 {
        let p = self.pitch();
        [
            -0.5 * self.extent[0] + (fi + 0.5) * p[0],
            -0.5 * self.extent[1] + (fj + 0.5) * p[1],
            0.0,
        ]
    }

    /// Fractional grid index of a wall position.
    pub fn index_at(&self, position: &Point3) -> [f64; 2] {
        let p = self.pitch();
        [
            (position[0] + 0.5 * self.extent[0]) / p[0] - 0.5,
            (position[1] + 0.5 * self.extent[1]) / p[1] - 0.5,
        ]
    }

    /// Distance from grid point `(i, j)` to the detector.
    pub fn detector_distance(&self, i: usize, j: usize) -> f64 {
        distance(&self.point(i, j), &self.detector_origin)
    }
}

impl Default for WallGeometry {
    fn default() -> Self {
        Self {
            extent: [2.0, 2.0],
            resolution: [64, 64],
            detector_origin: [0.0, 0.0, -2.0],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenePoint {
    pub position: Point3,
    pub albedo: f64,
}

/// Albedo-weighted point cloud on the hidden side of the wall.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HiddenScene {
    points: Vec<ScenePoint>,
}

impl HiddenScene {
    pub fn new(points: Vec<ScenePoint>) -> Result<Self> {
        for (k, p) in points.iter().enumerate() {
            if !(p.albedo >= 0.0) || !p.albedo.is_finite() {
                return Err(CoreError::Domain(format!(
                    "scene point {k} has invalid albedo {}",
                    p.albedo
                )));
            }
            if !(p.position[2] > 0.0) || !p.position.iter().all(|v| v.is_finite()) {
                return Err(CoreError::Domain(format!(
                    "scene point {k} at {:?} is not on the hidden side (z > 0)",
                    p.position
                )));
            }
        }
        Ok(Self { points })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn single(position: Point3, albedo: f64) -> Result<Self> {
        Self::new(vec![ScenePoint { position, albedo }])
    }

    pub fn points(&self) -> &[ScenePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn union(&self, other: &HiddenScene) -> HiddenScene {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        HiddenScene { points }
    }

    /// Albedo-weighted centroid, or the origin for an empty scene.
    pub fn centroid(&self) -> Point3 {
        let total: f64 = self.points.iter().map(|p| p.albedo).sum();
        if self.points.is_empty() {
            return [0.0; 3];
        }
        let mut c = [0.0; 3];
        if total > 0.0 {
            for p in &self.points {
                for (ck, pk) in c.iter_mut().zip(p.position) {
                    *ck += p.albedo * pk;
                }
            }
            c.iter_mut().for_each(|v| *v /= total);
        } else {
            for p in &self.points {
                for (ck, pk) in c.iter_mut().zip(p.position) {
                    *ck += pk;
                }
            }
            let n = self.points.len() as f64;
            c.iter_mut().for_each(|v| *v /= n);
        }
        c
    }

    /// Rigid translation. Fails if the result crosses the wall plane.
    pub fn translated(&self, offset: Point3) -> Result<HiddenScene> {
        let points = self
            .points
            .iter()
            .map(|p| ScenePoint {
                position: [
                    p.position[0] + offset[0],
                    p.position[1] + offset[1],
                    p.position[2] + offset[2],
                ],
                albedo: p.albedo,
            })
            .collect();
        HiddenScene::new(points)
    }

    /// Translation parallel to the wall; never changes depth.
    pub fn shifted_xy(&self, dx: f64, dy: f64) -> HiddenScene {
        let points = self
            .points
            .iter()
            .map(|p| ScenePoint {
                position: [p.position[0] + dx, p.position[1] + dy, p.position[2]],
                albedo: p.albedo,
            })
            .collect();
        HiddenScene { points }
    }

    /// In-plane rotation by `angle` radians about the axis through `center`
    /// parallel to z.
    pub fn rotated_z(&self, center: Point3, angle: f64) -> HiddenScene {
        let (s, c) = angle.sin_cos();
        let points = self
            .points
            .iter()
            .map(|p| {
                let dx = p.position[0] - center[0];
                let dy = p.position[1] - center[1];
                ScenePoint {
                    position: [
                        center[0] + c * dx - s * dy,
                        center[1] + s * dx + c * dy,
                        p.position[2],
                    ],
                    albedo: p.albedo,
                }
            })
            .collect();
        HiddenScene { points }
    }
}

/// Which of the four transient flavours a cube holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CubeKind {
    Ideal,
    IdealDistorted,
    Measured,
    MeasuredDistorted,
}

impl CubeKind {
    pub fn code(self) -> u8 {
        match self {
            CubeKind::Ideal => 0,
            CubeKind::IdealDistorted => 1,
            CubeKind::Measured => 2,
            CubeKind::MeasuredDistorted => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(CubeKind::Ideal),
            1 => Some(CubeKind::IdealDistorted),
            2 => Some(CubeKind::Measured),
            3 => Some(CubeKind::MeasuredDistorted),
            _ => None,
        }
    }

    pub fn is_ideal(self) -> bool {
        matches!(self, CubeKind::Ideal | CubeKind::IdealDistorted)
    }
}

/// Histograms over a scan grid, laid out `(i * n_y + j) * num_bins + t`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransientCube {
    data: Vec<f64>,
    time_axis: TimeAxis,
    wall: WallGeometry,
    kind: CubeKind,
}

impl TransientCube {
    pub fn new(wall: WallGeometry, time_axis: TimeAxis, kind: CubeKind, data: Vec<f64>) -> Result<Self> {
        wall.validate()?;
        time_axis.validate()?;
        let expected = wall.num_points() * time_axis.num_bins;
        if data.len() != expected {
            return Err(CoreError::Shape(format!(
                "cube payload has {} entries, geometry needs {}x{}x{} = {expected}",
                data.len(),
                wall.resolution[0],
                wall.resolution[1],
                time_axis.num_bins
            )));
        }
        if let Some(k) = data.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(CoreError::Domain(format!(
                "cube entry {k} is {} (entries must be finite and non-negative)",
                data[k]
            )));
        }
        Ok(Self {
            data,
            time_axis,
            wall,
            kind,
        })
    }

    pub fn zeros(wall: WallGeometry, time_axis: TimeAxis, kind: CubeKind) -> Self {
        let n = wall.num_points() * time_axis.num_bins;
        Self {
            data: vec![0.0; n],
            time_axis,
            wall,
            kind,
        }
    }

    /// Build a cube from one histogram per grid point in `i`-major order.
    pub fn from_histograms(
        wall: WallGeometry,
        time_axis: TimeAxis,
        kind: CubeKind,
        histograms: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if histograms.len() != wall.num_points() {
            return Err(CoreError::Shape(format!(
                "expected {} histograms, got {}",
                wall.num_points(),
                histograms.len()
            )));
        }
        let mut data = Vec::with_capacity(wall.num_points() * time_axis.num_bins);
        for h in histograms {
            if h.len() != time_axis.num_bins {
                return Err(CoreError::Shape(format!(
                    "histogram has {} bins, axis has {}",
                    h.len(),
                    time_axis.num_bins
                )));
            }
            data.extend(h);
        }
        Self::new(wall, time_axis, kind, data)
    }

    pub fn wall(&self) -> &WallGeometry {
        &self.wall
    }

    pub fn time_axis(&self) -> &TimeAxis {
        &self.time_axis
    }

    pub fn kind(&self) -> CubeKind {
        self.kind
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn nx(&self) -> usize {
        self.wall.resolution[0]
    }

    pub fn ny(&self) -> usize {
        self.wall.resolution[1]
    }

    pub fn num_bins(&self) -> usize {
        self.time_axis.num_bins
    }

    #[inline]
    pub fn histogram(&self, i: usize, j: usize) -> &[f64] {
        let t = self.time_axis.num_bins;
        let start = (i * self.ny() + j) * t;
        &self.data[start..start + t]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, t: usize) -> f64 {
        self.data[(i * self.ny() + j) * self.time_axis.num_bins + t]
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Same shape and metadata, new kind.
    pub fn with_kind(mut self, kind: CubeKind) -> Self {
        self.kind = kind;
        self
    }

    /// Multiply every entry by a non-negative factor.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor >= 0.0 && factor.is_finite()) {
            return Err(CoreError::Domain(format!("scale factor {factor} must be non-negative")));
        }
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= factor);
        Ok(out)
    }

    /// Keep every `stride`-th grid point starting at index 0 along each axis.
    ///
    /// The result's frame is re-centred on the kept points, so its
    /// `detector_origin` absorbs the sub-grid offset.
    pub fn subsample(&self, target: [usize; 2]) -> Result<Self> {
        let stride = subgrid_stride(self.wall.resolution, target)?;
        let wall = subgrid_geometry(&self.wall, target, stride);
        let t = self.num_bins();
        let mut data = Vec::with_capacity(target[0] * target[1] * t);
        for a in 0..target[0] {
            for b in 0..target[1] {
                data.extend_from_slice(self.histogram(a * stride[0], b * stride[1]));
            }
        }
        Ok(Self {
            data,
            time_axis: self.time_axis,
            wall,
            kind: self.kind,
        })
    }
}

/// Integer stride between a dense grid and a regularly subsampled one.
pub(crate) fn subgrid_stride(dense: [usize; 2], target: [usize; 2]) -> Result<[usize; 2]> {
    let mut stride = [0; 2];
    for k in 0..2 {
        if target[k] == 0 || !dense[k].is_multiple_of(target[k]) {
            return Err(CoreError::Config(format!(
                "dense resolution {}x{} is not divisible by target {}x{}",
                dense[0], dense[1], target[0], target[1]
            )));
        }
        stride[k] = dense[k] / target[k];
    }
    Ok(stride)
}

/// Geometry of the corner-aligned sub-grid `(a * stride)` in its own frame.
pub(crate) fn subgrid_geometry(dense: &WallGeometry, target: [usize; 2], stride: [usize; 2]) -> WallGeometry {
    let p = dense.pitch();
    let mut origin = dense.detector_origin;
    for k in 0..2 {
        // Centre of the kept points in the dense frame.
        let first = -0.5 * dense.extent[k] + 0.5 * p[k];
        let last = first + ((target[k] - 1) * stride[k]) as f64 * p[k];
        origin[k] -= 0.5 * (first + last);
    }
    WallGeometry {
        extent: [
            target[0] as f64 * stride[0] as f64 * p[0],
            target[1] as f64 * stride[1] as f64 * p[1],
        ],
        resolution: target,
        detector_origin: origin,
    }
}

/// Ideal confocal histogram at one wall point.
///
/// Each scene point deposits `albedo / r^4` into the bin holding `2 r / c`.
pub fn render_histogram(scene: &HiddenScene, wall_point: &Point3, axis: &TimeAxis) -> Result<Vec<f64>> {
    let mut hist = vec![0.0; axis.num_bins];
    accumulate_histogram(scene, wall_point, axis, &mut hist)?;
    Ok(hist)
}

fn accumulate_histogram(
    scene: &HiddenScene,
    wall_point: &Point3,
    axis: &TimeAxis,
    hist: &mut [f64],
) -> Result<()> {
    for (k, p) in scene.points.iter().enumerate() {
        let r = distance(wall_point, &p.position);
        if r == 0.0 {
            return Err(CoreError::DegenerateGeometry(format!(
                "scene point {k} coincides with scan point {wall_point:?}"
            )));
        }
        if let Some(bin) = axis.bin_of(2.0 * r / SPEED_OF_LIGHT) {
            let r2 = r * r;
            hist[bin] += p.albedo / (r2 * r2);
        }
    }
    Ok(())
}

/// Ideal confocal cube over the whole scan grid.
pub fn render_cube(scene: &HiddenScene, wall: &WallGeometry, axis: &TimeAxis) -> Result<TransientCube> {
    wall.validate()?;
    axis.validate()?;
    let ny = wall.resolution[1];
    let t = axis.num_bins;
    let mut data = vec![0.0; wall.num_points() * t];
    data.par_chunks_mut(t)
        .enumerate()
        .try_for_each(|(idx, hist)| {
            let (i, j) = (idx / ny, idx % ny);
            accumulate_histogram(scene, &wall.point(i, j), axis, hist)
                .map_err(|e| e.context(format!("grid point ({i}, {j})")))
        })?;
    Ok(TransientCube {
        data,
        time_axis: *axis,
        wall: *wall,
        kind: CubeKind::Ideal,
    })
}

/// Shift every histogram by `shift(i, j)` whole bins and scale it; bins
/// pushed off either end are dropped.
fn shift_and_scale(cube: &TransientCube, f: impl Fn(usize, usize) -> (i64, f64) + Sync) -> Vec<f64> {
    let ny = cube.ny();
    let t = cube.num_bins();
    let mut data = vec![0.0; cube.data.len()];
    data.par_chunks_mut(t).enumerate().for_each(|(idx, out)| {
        let (i, j) = (idx / ny, idx % ny);
        let (shift, scale) = f(i, j);
        let src = cube.histogram(i, j);
        for (k, &v) in src.iter().enumerate() {
            let dst = k as i64 + shift;
            if dst >= 0 && (dst as usize) < t {
                out[dst as usize] = v * scale;
            }
        }
    });
    data
}

/// Bin offset of the wall-to-detector round trip at grid point `(i, j)`.
pub fn round_trip_bins(cube: &TransientCube, i: usize, j: usize) -> i64 {
    let d = cube.wall.detector_distance(i, j);
    (2.0 * d / (SPEED_OF_LIGHT * cube.time_axis.bin_width)).round() as i64
}

/// Add the laser/detector-to-wall legs: scale by `1/d^2`, delay by `2d/c`.
pub fn to_measured(cube: &TransientCube) -> Result<TransientCube> {
    let kind = match cube.kind {
        CubeKind::Ideal => CubeKind::Measured,
        CubeKind::IdealDistorted => CubeKind::MeasuredDistorted,
        other => {
            return Err(CoreError::Domain(format!(
                "to_measured expects an ideal cube, got {other:?}"
            )))
        }
    };
    let data = shift_and_scale(cube, |i, j| {
        let d = cube.wall.detector_distance(i, j);
        (round_trip_bins(cube, i, j), 1.0 / (d * d))
    });
    Ok(TransientCube { data, kind, ..*cube })
}

/// Inverse of [`to_measured`]: advance by `2d/c` and rescale by `d^2`.
pub fn measured_to_ideal(cube: &TransientCube) -> Result<TransientCube> {
    let kind = match cube.kind {
        CubeKind::Measured => CubeKind::Ideal,
        CubeKind::MeasuredDistorted => CubeKind::IdealDistorted,
        other => {
            return Err(CoreError::Domain(format!(
                "measured_to_ideal expects a measured cube, got {other:?}"
            )))
        }
    };
    let data = shift_and_scale(cube, |i, j| {
        let d = cube.wall.detector_distance(i, j);
        (-round_trip_bins(cube, i, j), d * d)
    });
    Ok(TransientCube { data, kind, ..*cube })
}

/// SPAD noise parameters. All off by default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Expected dark/ambient counts added to every bin.
    pub background_rate: f64,
    /// Gaussian timing jitter, seconds.
    pub jitter_sigma: f64,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.background_rate >= 0.0 && self.background_rate.is_finite()) {
            return Err(CoreError::Config(format!(
                "background_rate must be >= 0, got {}",
                self.background_rate
            )));
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return Err(CoreError::Config(format!(
                "jitter_sigma must be >= 0, got {}",
                self.jitter_sigma
            )));
        }
        Ok(())
    }
}

/// Normalised discrete Gaussian on integer offsets `-radius..=radius`.
pub(crate) fn gaussian_kernel(sigma_bins: f64) -> Vec<f64> {
    if sigma_bins <= 0.0 {
        return vec![1.0];
    }
    let radius = (4.0 * sigma_bins).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma_bins * sigma_bins)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Timing jitter, flat background and Poisson shot noise.
///
/// Each histogram draws from its own ChaCha stream keyed by `(seed, i, j)`,
/// so the output does not depend on evaluation order.
pub fn apply_noise(cube: &TransientCube, noise: &NoiseConfig) -> Result<TransientCube> {
    noise.validate()?;
    let kernel = gaussian_kernel(noise.jitter_sigma / cube.time_axis.bin_width);
    let radius = (kernel.len() / 2) as i64;
    let ny = cube.ny();
    let t = cube.num_bins();
    let mut data = vec![0.0; cube.data.len()];
    data.par_chunks_mut(t).enumerate().for_each(|(idx, out)| {
        let (i, j) = (idx / ny, idx % ny);
        let src = cube.histogram(i, j);
        let mut mean = vec![noise.background_rate; t];
        for (k, &v) in src.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            for (o, &w) in kernel.iter().enumerate() {
                let dst = k as i64 + o as i64 - radius;
                if dst >= 0 && (dst as usize) < t {
                    mean[dst as usize] += v * w;
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        rng.set_stream(((i as u64) << 32) | j as u64);
        for (o, &lambda) in out.iter_mut().zip(&mean) {
            *o = if lambda > 0.0 {
                // Poisson::new only fails for non-positive or non-finite rates.
                Poisson::new(lambda).map(|p| p.sample(&mut rng)).unwrap_or(0.0)
            } else {
                0.0
            };
        }
    });
    Ok(TransientCube { data, ..*cube })
}
