use crate::error::{CoreError, Result};
use crate::image::ReconImage;
use crate::transient::{Point3, TransientCube, SPEED_OF_LIGHT};

/// Voxel grid over the hidden volume, in the wall frame of the cube it
/// reconstructs. Lateral extent is centred on `center`; depth runs from
/// `depth[0]` to `depth[1]`. Storage is `(a * v_y + b) * v_z + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeGrid {
    pub extent: [f64; 2],
    /// Lateral centre in the cube frame, meters.
    pub center: [f64; 2],
    pub depth: [f64; 2],
    pub resolution: [usize; 3],
    values: Vec<f64>,
}

impl VolumeGrid {
    pub fn new(extent: [f64; 2], depth: [f64; 2], resolution: [usize; 3]) -> Result<Self> {
        if resolution.contains(&0) {
            return Err(CoreError::Config(format!("volume resolution {resolution:?} must be >= 1 per axis")));
        }
        if !(extent[0] > 0.0 && extent[1] > 0.0 && depth[1] > depth[0]) {
            return Err(CoreError::Config(format!(
                "volume extent {extent:?} / depth {depth:?} must be non-empty"
            )));
        }
        Ok(Self {
            extent,
            center: [0.0, 0.0],
            depth,
            resolution,
            values: vec![0.0; resolution.iter().product()],
        })
    }

    /// Lateral grid identical to the cube's scan grid, depth covering the
    /// cube's time window (`z = c t / 2`) with `depth_voxels` slices.
    pub fn for_cube(cube: &TransientCube, depth_voxels: usize) -> Result<Self> {
        let axis = cube.time_axis();
        let z0 = (SPEED_OF_LIGHT * axis.origin / 2.0).max(0.0);
        let z1 = SPEED_OF_LIGHT * (axis.origin + axis.span()) / 2.0;
        let wall = cube.wall();
        Self::new(wall.extent, [z0, z1], [wall.resolution[0], wall.resolution[1], depth_voxels])
    }

    /// Same grid moved laterally. A sub-grid cube whose detector faces the
    /// dense wall centre is registered to the dense frame by centring on
    /// the detector's lateral position.
    pub fn with_center(mut self, center: [f64; 2]) -> Self {
        self.center = center;
        self
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(CoreError::Shape(format!(
                "volume needs {} values, got {}",
                self.values.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::Domain("volume values must be finite".into()));
        }
        Ok(Self { values, ..self.clone() })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn voxel_size(&self) -> [f64; 3] {
        [
            self.extent[0] / self.resolution[0] as f64,
            self.extent[1] / self.resolution[1] as f64,
            (self.depth[1] - self.depth[0]) / self.resolution[2] as f64,
        ]
    }

    pub fn voxel_center(&self, a: usize, b: usize, c: usize) -> Point3 {
        let s = self.voxel_size();
        [
            self.center[0] - 0.5 * self.extent[0] + (a as f64 + 0.5) * s[0],
            self.center[1] - 0.5 * self.extent[1] + (b as f64 + 0.5) * s[1],
            self.depth[0] + (c as f64 + 0.5) * s[2],
        ]
    }

    /// Voxel containing a point, if inside the grid.
    pub fn voxel_of(&self, p: &Point3) -> Option<[usize; 3]> {
        let s = self.voxel_size();
        let u = [
            (p[0] - self.center[0] + 0.5 * self.extent[0]) / s[0],
            (p[1] - self.center[1] + 0.5 * self.extent[1]) / s[1],
            (p[2] - self.depth[0]) / s[2],
        ];
        let mut idx = [0; 3];
        for k in 0..3 {
            if !(u[k] >= 0.0 && u[k] < self.resolution[k] as f64) {
                return None;
            }
            idx[k] = u[k] as usize;
        }
        Some(idx)
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.values[(a * self.resolution[1] + b) * self.resolution[2] + c]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the largest voxel (first one on ties).
    pub fn argmax(&self) -> [usize; 3] {
        let mut best = 0;
        for (k, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = k;
            }
        }
        let [_, vy, vz] = self.resolution;
        [best / (vy * vz), (best / vz) % vy, best % vz]
    }
}

impl Default for VolumeGrid {
    fn default() -> Self {
        Self::new([2.0, 2.0], [0.5, 2.5], [64, 64, 64]).expect("default volume is valid")
    }
}

/// Per-column maximum over depth, scaled so the brightest pixel is 1.
pub fn max_project(volume: &VolumeGrid) -> ReconImage {
    let [vx, vy, vz] = volume.resolution;
    let mut img = ReconImage::zeros(vx, vy);
    for a in 0..vx {
        for b in 0..vy {
            let start = (a * vy + b) * vz;
            let m = volume.values[start..start + vz].iter().copied().fold(0.0, f64::max);
            img.set(a, b, m);
        }
    }
    img.normalized()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_voxel_projects_to_single_pixel() {
        let grid = VolumeGrid::new([2.0, 2.0], [0.0, 1.0], [4, 5, 6]).unwrap();
        let mut v = vec![0.0; 120];
        v[(2 * 5 + 3) * 6 + 4] = 0.3;
        let img = max_project(&grid.with_values(v).unwrap());
        assert_eq!(img.get(2, 3), 1.0);
        assert_eq!(img.sum(), 1.0);
    }

    #[test]
    fn projection_ignores_depth_order() {
        let grid = VolumeGrid::new([2.0, 2.0], [0.0, 1.0], [3, 3, 4]).unwrap();
        let v: Vec<f64> = (0..36).map(|k| ((k * 7) % 11) as f64).collect();
        let mut rolled = v.clone();
        for col in 0..9 {
            for c in 0..4 {
                rolled[col * 4 + (c + 1) % 4] = v[col * 4 + c];
            }
        }
        let a = max_project(&grid.with_values(v).unwrap());
        let b = max_project(&grid.with_values(rolled).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn zero_volume_projects_to_zero() {
        let img = max_project(&VolumeGrid::new([1.0, 1.0], [0.0, 1.0], [2, 2, 2]).unwrap());
        assert!(img.pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn voxel_lookup_round_trips() {
        let grid = VolumeGrid::default();
        let c = grid.voxel_center(10, 20, 30);
        assert_eq!(grid.voxel_of(&c), Some([10, 20, 30]));
        assert_eq!(grid.voxel_of(&[0.0, 0.0, 0.1]), None);
        let moved = grid.clone().with_center([0.25, -0.5]);
        let c = moved.voxel_center(10, 20, 30);
        assert_eq!(moved.voxel_of(&c), Some([10, 20, 30]));
        assert!((c[0] - grid.voxel_center(10, 20, 30)[0] - 0.25).abs() < 1e-12);
    }
}
