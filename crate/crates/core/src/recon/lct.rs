//! Light-cone-transform reconstruction for confocal scans.
//!
//! Substituting `v = (c t / 2)^2` turns the confocal image formation into a
//! 3D convolution of the depth-resampled albedo with a fixed light-cone
//! kernel, which is inverted with a Wiener filter in the frequency domain.

use rustfft::num_complex::Complex64;
use rustfft::FftDirection;
use serde::{Deserialize, Serialize};

use super::fft3::fft3;
use super::volume::VolumeGrid;
use crate::error::{CoreError, Result};
use crate::transient::{TransientCube, SPEED_OF_LIGHT};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LctConfig {
    /// Wiener signal-to-noise constant.
    pub snr: f64,
}

impl Default for LctConfig {
    fn default() -> Self {
        Self { snr: 1e2 }
    }
}

/// Sparse `m x m` operator mapping `t` bins to `v = t^2` bins.
///
/// Row `k` averages the fine samples `x = k m + 1 ..= (k + 1) m` of an
/// `m^2`-point uniform grid in `v`, each weighted by `1 / sqrt(x)` and
/// assigned to time bin `ceil(sqrt(x)) - 1`. The inverse resampling is the
/// transpose.
pub fn resampling_operator(m: usize) -> Vec<Vec<(usize, f64)>> {
    let mut rows = Vec::with_capacity(m);
    for k in 0..m {
        let mut row: Vec<(usize, f64)> = Vec::new();
        for x in (k * m + 1) as u64..=((k + 1) * m) as u64 {
            let s = x.isqrt();
            let j = if s * s == x { s } else { s + 1 } as usize - 1;
            let w = 1.0 / ((x as f64).sqrt() * m as f64);
            match row.last_mut() {
                Some((jj, acc)) if *jj == j => *acc += w,
                _ => row.push((j, w)),
            }
        }
        rows.push(row);
    }
    rows
}

/// LCT reconstruction resampled onto `grid` (max-pooled per voxel).
pub fn lct_reconstruct(cube: &TransientCube, grid: &VolumeGrid, config: &LctConfig) -> Result<VolumeGrid> {
    if !(config.snr > 0.0 && config.snr.is_finite()) {
        return Err(CoreError::Config(format!("LCT snr must be positive, got {}", config.snr)));
    }
    if !cube.kind().is_ideal() {
        return Err(CoreError::Domain(format!("LCT expects ideal transients, got {:?}", cube.kind())));
    }
    let wall = cube.wall();
    let [nx, ny] = wall.resolution;
    if nx != ny || (wall.extent[0] - wall.extent[1]).abs() > 1e-12 * wall.extent[0] {
        return Err(CoreError::Config(format!(
            "LCT needs a square scan grid, got {nx}x{ny} over {:?}",
            wall.extent
        )));
    }
    let axis = cube.time_axis();
    if axis.origin != 0.0 {
        return Err(CoreError::Config("LCT needs a time axis starting at t = 0".into()));
    }
    let n = nx;
    let t = cube.num_bins();
    let m = t.next_power_of_two().max(2);
    let native = native_volume(cube, n, m, config.snr);
    pool_into(&native, n, t, m, cube, grid)
}

/// Returns the clamped `m x n x n` volume in `(t, i, j)` order.
fn native_volume(cube: &TransientCube, n: usize, m: usize, snr: f64) -> Vec<f64> {
    let t = cube.num_bins();
    let (pm, pn) = (2 * m, 2 * n);
    let dims = [pm, pn, pn];
    let idx = |k: usize, i: usize, j: usize| (k * pn + i) * pn + j;
    let mtx = resampling_operator(m);

    // Attenuation compensation and t -> v resampling into the first octant.
    let attenuation: Vec<f64> = (0..m).map(|k| (k as f64 / (m - 1) as f64).powi(4)).collect();
    let mut data = vec![Complex64::default(); pm * pn * pn];
    let mut column = vec![0.0; m];
    for i in 0..n {
        for j in 0..n {
            let h = cube.histogram(i, j);
            column.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..t {
                column[k] = h[k] * attenuation[k];
            }
            for (k, row) in mtx.iter().enumerate() {
                let v: f64 = row.iter().map(|&(jj, w)| w * column[jj]).sum();
                data[idx(k, i, j)] = Complex64::new(v, 0.0);
            }
        }
    }

    let filter = wiener_filter(cube, n, m, snr);
    fft3(&mut data, dims, FftDirection::Forward);
    for (d, f) in data.iter_mut().zip(&filter) {
        *d *= f;
    }
    drop(filter);
    fft3(&mut data, dims, FftDirection::Inverse);
    let scale = 1.0 / data.len() as f64;

    let mut out = vec![0.0; m * n * n];
    for i in 0..n {
        for j in 0..n {
            for (k, row) in mtx.iter().enumerate() {
                let v = data[idx(k, i, j)].re * scale;
                for &(jj, w) in row {
                    out[(jj * n + i) * n + j] += w * v;
                }
            }
        }
    }
    out.iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

/// `conj(H) / (|H|^2 + 1/snr)` for the light-cone kernel on the padded grid.
fn wiener_filter(cube: &TransientCube, n: usize, m: usize, snr: f64) -> Vec<Complex64> {
    let (pm, pn) = (2 * m, 2 * n);
    let width = 0.5 * cube.wall().extent[0];
    let range = m as f64 * SPEED_OF_LIGHT * cube.time_axis().bin_width;
    let slope = width / range;
    let gain = (4.0 * slope).powi(2);
    let mut psf = vec![Complex64::default(); pm * pn * pn];
    // Lateral offsets are in units of half the padded aperture, centred on
    // sample n; v offsets are in resampled bins of 1/m.
    let value = 1.0 / pn as f64;
    for iy in 0..pn {
        let y = (iy as f64 - n as f64) / n as f64;
        for ix in 0..pn {
            let x = (ix as f64 - n as f64) / n as f64;
            let k = (m as f64 * gain * (x * x + y * y)).round();
            if k < pm as f64 {
                let sy = (iy + n) % pn;
                let sx = (ix + n) % pn;
                psf[(k as usize * pn + sy) * pn + sx] = Complex64::new(value, 0.0);
            }
        }
    }
    fft3(&mut psf, [pm, pn, pn], FftDirection::Forward);
    let reg = 1.0 / snr;
    psf.iter_mut().for_each(|h| *h = h.conj() / (h.norm_sqr() + reg));
    psf
}

/// Index ranges of native samples whose centres fall in each voxel,
/// falling back to the nearest sample.
fn pool_ranges(native_centres: &[f64], lo: f64, size: f64, count: usize) -> Vec<(usize, usize)> {
    (0..count)
        .map(|a| {
            let a0 = lo + a as f64 * size;
            let a1 = a0 + size;
            let inside: Vec<usize> = native_centres
                .iter()
                .enumerate()
                .filter(|(_, &c)| c >= a0 && c < a1)
                .map(|(k, _)| k)
                .collect();
            match (inside.first(), inside.last()) {
                (Some(&f), Some(&l)) => (f, l + 1),
                _ => {
                    let mid = 0.5 * (a0 + a1);
                    let k = native_centres
                        .iter()
                        .enumerate()
                        .min_by(|x, y| (x.1 - mid).abs().total_cmp(&(y.1 - mid).abs()))
                        .map(|(k, _)| k)
                        .unwrap_or(0);
                    (k, k + 1)
                }
            }
        })
        .collect()
}

fn pool_into(native: &[f64], n: usize, t: usize, m: usize, cube: &TransientCube, grid: &VolumeGrid) -> Result<VolumeGrid> {
    let wall = cube.wall();
    let dz = SPEED_OF_LIGHT * cube.time_axis().bin_width / 2.0;
    let xs: Vec<f64> = (0..n).map(|i| wall.point(i, 0)[0]).collect();
    let ys: Vec<f64> = (0..n).map(|j| wall.point(0, j)[1]).collect();
    // Only the first t depth slices correspond to measured bins.
    let zs: Vec<f64> = (0..t).map(|k| (k as f64 + 0.5) * dz).collect();
    let size = grid.voxel_size();
    let [vx, vy, vz] = grid.resolution;
    let rx = pool_ranges(&xs, grid.center[0] - 0.5 * grid.extent[0], size[0], vx);
    let ry = pool_ranges(&ys, grid.center[1] - 0.5 * grid.extent[1], size[1], vy);
    let rz = pool_ranges(&zs, grid.depth[0], size[2], vz);
    debug_assert!(t <= m);
    let mut values = Vec::with_capacity(vx * vy * vz);
    for &(i0, i1) in &rx {
        for &(j0, j1) in &ry {
            for &(k0, k1) in &rz {
                let mut best: f64 = 0.0;
                for k in k0..k1 {
                    for i in i0..i1 {
                        for j in j0..j1 {
                            best = best.max(native[(k * n + i) * n + j]);
                        }
                    }
                }
                values.push(best);
            }
        }
    }
    grid.with_values(values)
}
