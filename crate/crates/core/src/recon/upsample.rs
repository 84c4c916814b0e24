use crate::error::{CoreError, Result};
use crate::transient::{TransientCube, WallGeometry};

/// Bilinear scan-grid upsampling by an integer factor per axis.
///
/// Corners are aligned: target index `i` reads source coordinate
/// `i (n - 1) / (n f - 1)`, so the outer scan points are preserved and the
/// new grid spans the same first-to-last scan positions. The output wall
/// extent shrinks accordingly (`n f` points at the finer pitch) and stays
/// centred in the same frame.
pub fn upsample_cube(cube: &TransientCube, target: [usize; 2]) -> Result<TransientCube> {
    let src = cube.wall().resolution;
    let mut factor = [0; 2];
    for k in 0..2 {
        if target[k] == 0 || !target[k].is_multiple_of(src[k]) {
            return Err(CoreError::Config(format!(
                "target {}x{} is not an integer multiple of {}x{}",
                target[0], target[1], src[0], src[1]
            )));
        }
        factor[k] = target[k] / src[k];
    }
    let wall = cube.wall();
    let pitch = wall.pitch();
    let mut extent = [0.0; 2];
    let mut map = [Vec::new(), Vec::new()];
    for k in 0..2 {
        let (n, m) = (src[k], target[k]);
        let new_pitch = if n > 1 && m > 1 {
            (n - 1) as f64 * pitch[k] / (m - 1) as f64
        } else {
            pitch[k] / factor[k] as f64
        };
        extent[k] = m as f64 * new_pitch;
        map[k] = (0..m)
            .map(|i| {
                if n == 1 || m == 1 {
                    return (0, 0, 0.0);
                }
                // Exact rational position avoids drift at the knots.
                let num = i * (n - 1);
                let den = m - 1;
                let i0 = (num / den).min(n - 1);
                let frac = (num - i0 * den) as f64 / den as f64;
                let i1 = (i0 + 1).min(n - 1);
                (i0, i1, frac)
            })
            .collect();
    }
    let out_wall = WallGeometry::new(extent, target, wall.detector_origin)?;
    let t = cube.num_bins();
    let mut data = vec![0.0; target[0] * target[1] * t];
    for (i, &(i0, i1, u)) in map[0].iter().enumerate() {
        for (j, &(j0, j1, v)) in map[1].iter().enumerate() {
            let out = &mut data[(i * target[1] + j) * t..(i * target[1] + j + 1) * t];
            for (a, b, w) in [
                (i0, j0, (1.0 - u) * (1.0 - v)),
                (i1, j0, u * (1.0 - v)),
                (i0, j1, (1.0 - u) * v),
                (i1, j1, u * v),
            ] {
                if w == 0.0 {
                    continue;
                }
                for (o, &h) in out.iter_mut().zip(cube.histogram(a, b)) {
                    *o += w * h;
                }
            }
        }
    }
    TransientCube::new(out_wall, *cube.time_axis(), cube.kind(), data)
}
