use rayon::prelude::*;

use super::volume::VolumeGrid;
use crate::error::{CoreError, Result};
use crate::transient::{distance, TransientCube, SPEED_OF_LIGHT};

/// Brute-force confocal backprojection with `r^4` falloff compensation.
///
/// Each voxel sums, over every scan point, the histogram counts whose
/// round-trip range falls inside the voxel's footprint along the ray
/// (`r ± h`, `h` the half-extent of the voxel box projected on the ray).
/// When the voxel is thinner than a time bin this is the single bin at
/// `2 r / c`. The `r^4` compensation uses each bin's own range, so a point
/// contributes equally to every voxel whose footprint covers it and the
/// voxel that contains it collects the most. Terms with a voxel centre on
/// a scan point are skipped.
pub fn backproject(cube: &TransientCube, grid: &VolumeGrid) -> Result<VolumeGrid> {
    if !cube.kind().is_ideal() {
        return Err(CoreError::Domain(format!(
            "backprojection expects ideal transients, got {:?}",
            cube.kind()
        )));
    }
    let wall = cube.wall();
    let axis = cube.time_axis();
    let t = cube.num_bins();
    let [nx, ny] = wall.resolution;

    // Prefix sums turn each bin-range sum into two lookups.
    let falloff: Vec<f64> = (0..t)
        .map(|k| {
            let r = 0.5 * SPEED_OF_LIGHT * (axis.origin + (k as f64 + 0.5) * axis.bin_width);
            r.powi(4)
        })
        .collect();
    let mut prefix = vec![0.0; nx * ny * (t + 1)];
    for (n, chunk) in prefix.chunks_mut(t + 1).enumerate() {
        let h = cube.histogram(n / ny, n % ny);
        for k in 0..t {
            chunk[k + 1] = chunk[k] + h[k] * falloff[k];
        }
    }
    let scan: Vec<_> = (0..nx * ny).map(|n| wall.point(n / ny, n % ny)).collect();
    let half = grid.voxel_size().map(|s| 0.5 * s);
    let [vx, vy, vz] = grid.resolution;
    let to_bin = |r: f64| (2.0 * r / SPEED_OF_LIGHT - axis.origin) / axis.bin_width;

    let values: Vec<f64> = (0..vx * vy)
        .into_par_iter()
        .flat_map_iter(|col| {
            let (a, b) = (col / vy, col % vy);
            let scan = &scan;
            let prefix = &prefix;
            (0..vz).map(move |c| {
                let v = grid.voxel_center(a, b, c);
                let mut acc = 0.0;
                for (n, x) in scan.iter().enumerate() {
                    let r = distance(x, &v);
                    if r == 0.0 {
                        continue;
                    }
                    let foot = ((v[0] - x[0]).abs() * half[0]
                        + (v[1] - x[1]).abs() * half[1]
                        + (v[2] - x[2]).abs() * half[2])
                        / r;
                    let lo = to_bin(r - foot).floor();
                    let hi = to_bin(r + foot).floor();
                    if hi < 0.0 || lo >= t as f64 {
                        continue;
                    }
                    let lo = lo.max(0.0) as usize;
                    let hi = (hi as usize).min(t - 1);
                    let row = &prefix[n * (t + 1)..(n + 1) * (t + 1)];
                    acc += row[hi + 1] - row[lo];
                }
                acc
            })
        })
        .collect();
    grid.with_values(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transient::{render_cube, CubeKind, HiddenScene, TimeAxis, WallGeometry};

    #[test]
    fn zero_cube_gives_zero_volume() {
        let wall = WallGeometry::square(2.0, 4).unwrap();
        let cube = TransientCube::zeros(wall, TimeAxis::new(64, 80e-12).unwrap(), CubeKind::Ideal);
        let grid = VolumeGrid::new([2.0, 2.0], [0.2, 0.8], [4, 4, 8]).unwrap();
        let vol = backproject(&cube, &grid).unwrap();
        assert!(vol.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_point_round_trip() {
        let wall = WallGeometry::square(2.0, 8).unwrap();
        let axis = TimeAxis::new(128, 80e-12).unwrap();
        let grid = VolumeGrid::new([2.0, 2.0], [0.0, 1.536], [8, 8, 16]).unwrap();
        let p = grid.voxel_center(5, 2, 9);
        let scene = HiddenScene::single(p, 1.0).unwrap();
        let vol = backproject(&render_cube(&scene, &wall, &axis).unwrap(), &grid).unwrap();
        assert_eq!(vol.argmax(), [5, 2, 9]);
    }

    #[test]
    fn linear_in_the_cube() {
        let wall = WallGeometry::square(2.0, 4).unwrap();
        let axis = TimeAxis::new(64, 80e-12).unwrap();
        let grid = VolumeGrid::new([2.0, 2.0], [0.1, 0.7], [4, 4, 6]).unwrap();
        let s1 = HiddenScene::single([0.1, 0.2, 0.4], 1.0).unwrap();
        let s2 = HiddenScene::single([-0.3, 0.1, 0.5], 0.5).unwrap();
        let v1 = backproject(&render_cube(&s1, &wall, &axis).unwrap(), &grid).unwrap();
        let v2 = backproject(&render_cube(&s2, &wall, &axis).unwrap(), &grid).unwrap();
        let v12 = backproject(&render_cube(&s1.union(&s2), &wall, &axis).unwrap(), &grid).unwrap();
        for k in 0..v12.values().len() {
            let e = v1.values()[k] + v2.values()[k];
            assert!((v12.values()[k] - e).abs() <= 1e-12 * e.abs().max(1.0));
        }
    }

    #[test]
    fn rejects_measured_cubes() {
        let wall = WallGeometry::square(2.0, 2).unwrap();
        let cube = TransientCube::zeros(wall, TimeAxis::new(8, 80e-12).unwrap(), CubeKind::Measured);
        assert!(backproject(&cube, &VolumeGrid::default()).is_err());
    }
}
