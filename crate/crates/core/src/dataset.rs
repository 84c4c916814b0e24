//! Synthetic dynamic scenes: parametric planar shapes, rigid motion,
//! ground-truth images and per-frame dense / distorted transients.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distortion::{distort_cube_with_pattern, DistortionConfig, ScanPattern};
use crate::error::{CoreError, Result};
use crate::font::{glyph_cells, GLYPH_COLS, GLYPH_ROWS};
use crate::image::ReconImage;
use crate::transient::{
    apply_noise, render_cube, HiddenScene, NoiseConfig, ScenePoint, TimeAxis, TransientCube, WallGeometry,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    #[default]
    Letter,
    Propeller,
    WindmillLike,
    BarSet,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 4] = [Self::Letter, Self::Propeller, Self::WindmillLike, Self::BarSet];

    pub fn name(self) -> &'static str {
        match self {
            Self::Letter => "letter",
            Self::Propeller => "propeller",
            Self::WindmillLike => "windmill_like",
            Self::BarSet => "bar_set",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    /// Side of the bounding square, meters.
    pub size: f64,
    /// Plane depth behind the wall, meters.
    pub depth: f64,
    /// Points per square meter of shape area.
    pub sample_density: f64,
    /// Glyph for `letter`.
    pub glyph: char,
    /// Blades for `propeller` / `windmill_like`, bars for `bar_set`.
    pub count: usize,
    /// Lateral centre, meters.
    pub center: [f64; 2],
    pub albedo: f64,
}

impl Default for ShapeSpec {
    fn default() -> Self {
        Self {
            kind: ShapeKind::Letter,
            size: 1.2,
            depth: 1.0,
            sample_density: 3000.0,
            glyph: 'T',
            count: 3,
            center: [0.0, 0.0],
            albedo: 1.0,
        }
    }
}

impl ShapeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.size > 0.0 && self.size.is_finite()) {
            return Err(CoreError::Config(format!("shape size must be positive, got {}", self.size)));
        }
        if !(self.depth > 0.0 && self.depth.is_finite()) {
            return Err(CoreError::Config(format!("shape depth must be > 0, got {}", self.depth)));
        }
        if !(self.sample_density > 0.0 && self.sample_density.is_finite()) {
            return Err(CoreError::Config(format!(
                "sample_density must be positive, got {}",
                self.sample_density
            )));
        }
        if !(self.albedo >= 0.0 && self.albedo.is_finite()) {
            return Err(CoreError::Config(format!("albedo must be >= 0, got {}", self.albedo)));
        }
        match self.kind {
            ShapeKind::Letter if glyph_cells(self.glyph).is_none() => Err(CoreError::Config(format!(
                "no glyph for {:?}; the font covers A-Z",
                self.glyph
            ))),
            ShapeKind::Propeller | ShapeKind::WindmillLike | ShapeKind::BarSet if self.count == 0 => {
                Err(CoreError::Config(format!("{} needs count >= 1", self.kind.name())))
            }
            _ => Ok(()),
        }
    }

    /// Points the generator will place.
    pub fn area(&self) -> f64 {
        match self.kind {
            ShapeKind::Letter => {
                let cell = self.size / GLYPH_ROWS as f64;
                glyph_cells(self.glyph).map_or(0.0, |c| c.len() as f64 * cell * cell)
            }
            ShapeKind::Propeller => {
                let r = 0.5 * self.size;
                // Half of the disk, split into `count` wedges.
                0.5 * std::f64::consts::PI * r * r
            }
            ShapeKind::WindmillLike => {
                let (len, width) = windmill_blade(self.size);
                self.count as f64 * len * width
            }
            ShapeKind::BarSet => {
                let w = self.size / (2 * self.count - 1) as f64;
                self.count as f64 * w * self.size
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    #[default]
    Translate,
    Rotate,
    Compose,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionSpec {
    pub kind: MotionKind,
    /// Meters per second.
    pub velocity: f64,
    /// Translation direction in the wall plane; normalised on use.
    pub direction: [f64; 2],
    /// Degrees per second, counter-clockwise.
    pub angular_rate: f64,
    pub fps: f64,
    pub num_frames: usize,
    pub seed: u64,
}

impl Default for MotionSpec {
    fn default() -> Self {
        Self {
            kind: MotionKind::Translate,
            velocity: 0.4,
            direction: [1.0, 0.0],
            angular_rate: 0.0,
            fps: 10.0,
            num_frames: 50,
            seed: 0,
        }
    }
}

impl MotionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_frames == 0 {
            return Err(CoreError::Config("num_frames must be >= 1".into()));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(CoreError::Config(format!("fps must be positive, got {}", self.fps)));
        }
        if !self.velocity.is_finite() || !self.angular_rate.is_finite() {
            return Err(CoreError::Config("velocity and angular_rate must be finite".into()));
        }
        if self.translates() && self.velocity != 0.0 && self.unit_direction().is_none() {
            return Err(CoreError::Config("motion direction must be non-zero".into()));
        }
        Ok(())
    }

    /// Meters moved between consecutive frames.
    pub fn displacement_per_frame(&self) -> f64 {
        self.velocity / self.fps
    }

    /// Seconds covered by the sequence.
    pub fn duration(&self) -> f64 {
        self.num_frames as f64 / self.fps
    }

    fn translates(&self) -> bool {
        matches!(self.kind, MotionKind::Translate | MotionKind::Compose)
    }

    fn rotates(&self) -> bool {
        matches!(self.kind, MotionKind::Rotate | MotionKind::Compose)
    }

    fn unit_direction(&self) -> Option<[f64; 2]> {
        let n = self.direction[0].hypot(self.direction[1]);
        (n > 0.0 && n.is_finite()).then(|| [self.direction[0] / n, self.direction[1] / n])
    }
}

const INV_GOLDEN: f64 = 0.618_033_988_749_894_9;

/// `n` low-discrepancy points spread over `cells` equal-area cells.
///
/// Points walk the cells in order with a constant stride along the cell's
/// long side and a golden-ratio sequence along the short side, both
/// randomly offset by the seed. Each point is passed to `place` as
/// `(cell, along, across)` with the coordinates in `[0, 1)`.
fn lattice(n: usize, cells: usize, offsets: [f64; 2], mut place: impl FnMut(usize, f64, f64)) {
    for k in 0..n {
        let u = (k as f64 + offsets[0]) / n as f64 * cells as f64;
        let cell = (u as usize).min(cells - 1);
        let along = (u - cell as f64).clamp(0.0, 1.0 - f64::EPSILON);
        let across = (k as f64 * INV_GOLDEN + offsets[1]).fract();
        place(cell, along, across);
    }
}

fn windmill_blade(size: f64) -> (f64, f64) {
    let r = 0.5 * size;
    (0.88 * r, 0.3 * r)
}

/// Planar point cloud for `spec` at `z = depth`, centred on `spec.center`.
pub fn make_shape(spec: &ShapeSpec, seed: u64) -> Result<HiddenScene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offsets = [rng.random::<f64>(), rng.random::<f64>()];
    let d = spec.sample_density;
    let mut xy: Vec<[f64; 2]> = Vec::new();
    match spec.kind {
        ShapeKind::Letter => {
            let cells = glyph_cells(spec.glyph).unwrap_or_default();
            let cell = spec.size / GLYPH_ROWS as f64;
            let x0 = -0.5 * GLYPH_COLS as f64 * cell;
            let y0 = 0.5 * spec.size;
            let n = (d * spec.area()).round() as usize;
            lattice(n, cells.len(), offsets, |c, a, b| {
                let (col, row) = cells[c];
                xy.push([x0 + (col as f64 + a) * cell, y0 - (row as f64 + b) * cell]);
            });
        }
        ShapeKind::Propeller => {
            let k = spec.count;
            let r = 0.5 * spec.size;
            let width = std::f64::consts::PI / k as f64;
            let per_blade = (d * spec.area() / k as f64).round() as usize;
            let mut blade = Vec::with_capacity(per_blade);
            // Area-uniform in the wedge: radius from sqrt of the stratified coordinate.
            lattice(per_blade, 1, offsets, |_, a, b| {
                blade.push((r * a.sqrt(), std::f64::consts::FRAC_PI_2 + width * (b - 0.5)));
            });
            for m in 0..k {
                let turn = std::f64::consts::TAU * m as f64 / k as f64;
                xy.extend(blade.iter().map(|&(rho, th)| [rho * (th + turn).cos(), rho * (th + turn).sin()]));
            }
        }
        ShapeKind::WindmillLike => {
            let k = spec.count;
            let (len, width) = windmill_blade(spec.size);
            let start = 0.5 * spec.size - len;
            let per_blade = (d * len * width).round() as usize;
            let mut blade = Vec::with_capacity(per_blade);
            // Sails sit to one side of their spar, giving the shape a handedness.
            lattice(per_blade, 1, offsets, |_, a, b| blade.push([start + a * len, b * width]));
            for m in 0..k {
                let (s, c) = (std::f64::consts::TAU * m as f64 / k as f64).sin_cos();
                xy.extend(blade.iter().map(|&[u, v]| [c * u - s * v, s * u + c * v]));
            }
        }
        ShapeKind::BarSet => {
            let bars = spec.count;
            let w = spec.size / (2 * bars - 1) as f64;
            let n = (d * spec.area()).round() as usize;
            lattice(n, bars, offsets, |c, a, b| {
                xy.push([-0.5 * spec.size + (2 * c) as f64 * w + b * w, -0.5 * spec.size + a * spec.size]);
            });
        }
    }
    let points = xy
        .into_iter()
        .map(|[x, y]| ScenePoint {
            position: [spec.center[0] + x, spec.center[1] + y, spec.depth],
            albedo: spec.albedo,
        })
        .collect();
    HiddenScene::new(points)
}

/// Rigid pose of `scene` at `frame`: rotation by `frame * rate / fps`
/// degrees about the centroid, then translation by
/// `frame * velocity / fps` along the motion direction.
pub fn animate(scene: &HiddenScene, motion: &MotionSpec, frame: usize) -> HiddenScene {
    let t = frame as f64 / motion.fps;
    let mut out = scene.clone();
    if motion.rotates() && motion.angular_rate != 0.0 {
        out = out.rotated_z(scene.centroid(), (motion.angular_rate * t).to_radians());
    }
    if motion.translates() {
        if let Some([ux, uy]) = motion.unit_direction() {
            let s = motion.velocity * t;
            out = out.shifted_xy(s * ux, s * uy);
        }
    }
    out
}

/// Reflect `x` into `[lo, hi]` as if bouncing between the ends.
fn fold(x: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    if span <= 0.0 {
        return 0.5 * (lo + hi);
    }
    let y = (x - lo).rem_euclid(2.0 * span);
    if y > span {
        lo + 2.0 * span - y
    } else {
        lo + y
    }
}

/// Pose at `frame` with the translation folded back whenever the shape's
/// bounding box would leave the wall extent. Rotating shapes use their
/// bounding circle.
pub fn bounded_pose(scene: &HiddenScene, motion: &MotionSpec, extent: [f64; 2], frame: usize) -> HiddenScene {
    let spin = MotionSpec {
        kind: MotionKind::Rotate,
        ..motion.clone()
    };
    let posed = if motion.rotates() { animate(scene, &spin, frame) } else { scene.clone() };
    if !motion.translates() || scene.is_empty() {
        return posed;
    }
    let Some(u) = motion.unit_direction() else {
        return posed;
    };
    let c = scene.centroid();
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    if motion.rotates() {
        let r = scene
            .points()
            .iter()
            .map(|p| (p.position[0] - c[0]).hypot(p.position[1] - c[1]))
            .fold(0.0, f64::max);
        for k in 0..2 {
            lo[k] = c[k] - r;
            hi[k] = c[k] + r;
        }
    } else {
        for p in scene.points() {
            for k in 0..2 {
                lo[k] = lo[k].min(p.position[k]);
                hi[k] = hi[k].max(p.position[k]);
            }
        }
    }
    let s = motion.velocity * frame as f64 / motion.fps;
    let mut shift = [0.0; 2];
    for k in 0..2 {
        let raw = s * u[k];
        let (min_shift, max_shift) = (-0.5 * extent[k] - lo[k], 0.5 * extent[k] - hi[k]);
        shift[k] = if min_shift <= 0.0 && max_shift >= 0.0 {
            fold(raw, min_shift, max_shift)
        } else {
            raw
        };
    }
    posed.shifted_xy(shift[0], shift[1])
}

/// Ground-truth image plus how many points fell outside the wall extent.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub image: ReconImage,
    pub outside: usize,
}

impl GroundTruth {
    /// Set when a non-empty scene missed the image entirely.
    pub fn all_outside(&self, scene: &HiddenScene) -> bool {
        !scene.is_empty() && self.outside == scene.len()
    }
}

/// Albedo splat of the scene onto a `resolution` image of the wall extent
/// (pixel `(i, j)` covers the `i`-th x and `j`-th y slab), scaled to peak 1.
pub fn render_gt_unnormalized(scene: &HiddenScene, wall: &WallGeometry, resolution: [usize; 2]) -> Result<GroundTruth> {
    if resolution[0] == 0 || resolution[1] == 0 {
        return Err(CoreError::Config("ground-truth resolution must be at least 1x1".into()));
    }
    let mut image = ReconImage::zeros(resolution[0], resolution[1]);
    let mut outside = 0;
    for p in scene.points() {
        let u = (p.position[0] / wall.extent[0] + 0.5) * resolution[0] as f64;
        let v = (p.position[1] / wall.extent[1] + 0.5) * resolution[1] as f64;
        if u >= 0.0 && v >= 0.0 && u < resolution[0] as f64 && v < resolution[1] as f64 {
            let (i, j) = (u as usize, v as usize);
            image.set(i, j, image.get(i, j) + p.albedo);
        } else {
            outside += 1;
        }
    }
    Ok(GroundTruth { image, outside })
}

pub fn render_gt_image(scene: &HiddenScene, wall: &WallGeometry, resolution: [usize; 2]) -> Result<GroundTruth> {
    let mut gt = render_gt_unnormalized(scene, wall, resolution)?;
    if gt.all_outside(scene) {
        warn!("scene lies entirely outside the wall extent; ground truth is empty");
    }
    gt.image = gt.image.normalized();
    Ok(gt)
}

pub fn serpentine_pattern(nx: usize, ny: usize) -> ScanPattern {
    ScanPattern::serpentine(nx, ny)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderConfig {
    /// Dense scan wall.
    pub wall: WallGeometry,
    pub time_axis: TimeAxis,
    pub gt_resolution: [usize; 2],
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            wall: WallGeometry::default(),
            time_axis: TimeAxis::default(),
            gt_resolution: [64, 64],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SequenceConfig {
    pub render: RenderConfig,
    /// Fast-scan grid.
    pub target_resolution: [usize; 2],
    pub distortion: DistortionConfig,
    /// Applied to the distorted cube only.
    pub noise: Option<NoiseConfig>,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self {
            render: RenderConfig::default(),
            target_resolution: [16, 16],
            distortion: DistortionConfig::default(),
            noise: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceFrame {
    pub dense: TransientCube,
    pub distorted: TransientCube,
    pub gt: ReconImage,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceSample {
    pub id: u64,
    pub shape: ShapeSpec,
    pub motion: MotionSpec,
    pub frames: Vec<SequenceFrame>,
}

impl SequenceSample {
    pub fn name(&self) -> String {
        sequence_name(self.id)
    }
}

pub fn sequence_name(id: u64) -> String {
    format!("seq_{id:04}")
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Noise seed for one frame of one sequence.
pub fn frame_seed(base: u64, id: u64, frame: usize) -> u64 {
    splitmix(base ^ splitmix(id.wrapping_mul(0x1_0000_0001) ^ frame as u64))
}

/// Everything needed to produce the frames of one sequence independently.
pub struct SequenceGenerator<'a> {
    pub id: u64,
    pub shape: &'a ShapeSpec,
    pub motion: &'a MotionSpec,
    pub config: &'a SequenceConfig,
    scene: HiddenScene,
    pattern: ScanPattern,
}

impl<'a> SequenceGenerator<'a> {
    pub fn new(id: u64, shape: &'a ShapeSpec, motion: &'a MotionSpec, config: &'a SequenceConfig) -> Result<Self> {
        motion.validate()?;
        config.render.wall.validate()?;
        config.render.time_axis.validate()?;
        let scene = make_shape(shape, motion.seed)?;
        let t = config.target_resolution;
        let mut pattern = serpentine_pattern(t[0], t[1]);
        pattern.exposure_per_point = config.distortion.exposure_per_point;
        Ok(Self {
            id,
            shape,
            motion,
            config,
            scene,
            pattern,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.motion.num_frames
    }

    pub fn scene_at(&self, frame: usize) -> HiddenScene {
        bounded_pose(&self.scene, self.motion, self.config.render.wall.extent, frame)
    }

    pub fn frame(&self, frame: usize) -> Result<SequenceFrame> {
        self.frame_inner(frame).map_err(|e| e.context(format!("frame {frame}")))
    }

    fn frame_inner(&self, frame: usize) -> Result<SequenceFrame> {
        let render = &self.config.render;
        let scene = self.scene_at(frame);
        let dense = render_cube(&scene, &render.wall, &render.time_axis)?;
        let mut distorted = distort_cube_with_pattern(&dense, &self.pattern, &self.config.distortion)?;
        if let Some(noise) = &self.config.noise {
            let per_frame = NoiseConfig {
                seed: frame_seed(noise.seed, self.id, frame),
                ..*noise
            };
            distorted = apply_noise(&distorted, &per_frame)?;
        }
        let gt = render_gt_image(&scene, &render.wall, render.gt_resolution)?.image;
        Ok(SequenceFrame { dense, distorted, gt })
    }
}

/// All frames of one sequence, generated in parallel.
pub fn generate_sequence(id: u64, shape: &ShapeSpec, motion: &MotionSpec, config: &SequenceConfig) -> Result<SequenceSample> {
    let generator = SequenceGenerator::new(id, shape, motion, config)?;
    let frames = (0..generator.num_frames())
        .into_par_iter()
        .map(|k| generator.frame(k))
        .collect::<Result<Vec<_>>>()?;
    Ok(SequenceSample {
        id,
        shape: shape.clone(),
        motion: motion.clone(),
        frames,
    })
}

/// Seeded random shapes and motions for a generated set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SequencePlan {
    pub num_sequences: usize,
    pub seed: u64,
    pub kinds: Vec<ShapeKind>,
    pub size_range: [f64; 2],
    pub depth_range: [f64; 2],
    pub sample_density: f64,
    pub velocity: f64,
    pub angular_rate_range: [f64; 2],
    pub fps: f64,
    pub num_frames: usize,
}

impl Default for SequencePlan {
    fn default() -> Self {
        Self {
            num_sequences: 8,
            seed: 0,
            kinds: ShapeKind::ALL.to_vec(),
            size_range: [1.0, 1.4],
            depth_range: [0.7, 1.1],
            sample_density: 3000.0,
            velocity: 0.4,
            angular_rate_range: [30.0, 90.0],
            fps: 10.0,
            num_frames: 50,
        }
    }
}

impl SequencePlan {
    pub fn specs(&self) -> Result<Vec<(ShapeSpec, MotionSpec)>> {
        if self.kinds.is_empty() {
            return Err(CoreError::Config("sequence plan needs at least one shape kind".into()));
        }
        for (name, [a, b]) in [
            ("size_range", self.size_range),
            ("depth_range", self.depth_range),
            ("angular_rate_range", self.angular_rate_range),
        ] {
            if !(a <= b) {
                return Err(CoreError::Config(format!("{name} must satisfy lo <= hi, got [{a}, {b}]")));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let letters: Vec<char> = ('A'..='Z').collect();
        let mut out = Vec::with_capacity(self.num_sequences);
        for id in 0..self.num_sequences {
            let kind = self.kinds[rng.random_range(0..self.kinds.len())];
            let shape = ShapeSpec {
                kind,
                size: rng.random_range(self.size_range[0]..=self.size_range[1]),
                depth: rng.random_range(self.depth_range[0]..=self.depth_range[1]),
                sample_density: self.sample_density,
                glyph: letters[rng.random_range(0..letters.len())],
                count: match kind {
                    ShapeKind::BarSet => rng.random_range(2..=4),
                    _ => rng.random_range(2..=5),
                },
                center: [0.0, 0.0],
                albedo: 1.0,
            };
            let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let motion_kind = [MotionKind::Translate, MotionKind::Rotate, MotionKind::Compose][rng.random_range(0..3)];
            let rate = rng.random_range(self.angular_rate_range[0]..=self.angular_rate_range[1]);
            let motion = MotionSpec {
                kind: motion_kind,
                velocity: self.velocity,
                direction: [angle.cos(), angle.sin()],
                angular_rate: if rng.random_bool(0.5) { rate } else { -rate },
                fps: self.fps,
                num_frames: self.num_frames,
                seed: splitmix(self.seed ^ id as u64),
            };
            out.push((shape, motion));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortion::distort_cube;

    fn letter(glyph: char, density: f64) -> ShapeSpec {
        ShapeSpec {
            glyph,
            sample_density: density,
            ..ShapeSpec::default()
        }
    }

    #[test]
    fn letter_i_is_a_bar_with_exact_count() {
        let spec = ShapeSpec { size: 1.4, ..letter('I', 2500.0) };
        let scene = make_shape(&spec, 3).unwrap();
        let cell = 1.4 / 7.0;
        let area = 7.0 * cell * cell;
        assert!((scene.len() as f64 - 2500.0 * area).abs() <= 1.0);
        for p in scene.points() {
            assert!(p.position[0] >= -0.5 * cell - 1e-12 && p.position[0] < 0.5 * cell);
            assert!(p.position[1].abs() <= 0.7 + 1e-12);
            assert_eq!(p.position[2], spec.depth);
        }
    }

    fn nearest(scene: &HiddenScene, q: [f64; 3]) -> f64 {
        scene
            .points()
            .iter()
            .map(|p| (p.position[0] - q[0]).hypot(p.position[1] - q[1]))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn propeller_has_threefold_symmetry() {
        let spec = ShapeSpec {
            kind: ShapeKind::Propeller,
            count: 3,
            ..ShapeSpec::default()
        };
        let scene = make_shape(&spec, 11).unwrap();
        let turned = scene.rotated_z([0.0, 0.0, spec.depth], std::f64::consts::TAU / 3.0);
        for p in turned.points() {
            assert!(nearest(&scene, p.position) < 1e-9);
        }
        let skew = scene.rotated_z([0.0, 0.0, spec.depth], 0.5);
        let worst = skew.points().iter().map(|p| nearest(&scene, p.position)).fold(0.0, f64::max);
        assert!(worst > 0.05);
    }

    #[test]
    fn shapes_fit_their_box_and_are_deterministic() {
        for kind in ShapeKind::ALL {
            let spec = ShapeSpec {
                kind,
                size: 1.5,
                center: [0.1, -0.2],
                ..ShapeSpec::default()
            };
            let a = make_shape(&spec, 5).unwrap();
            assert_eq!(a, make_shape(&spec, 5).unwrap());
            assert_ne!(a, make_shape(&spec, 6).unwrap());
            assert!(!a.is_empty());
            for p in a.points() {
                assert!((p.position[0] - 0.1).abs() <= 0.75 + 1e-9, "{kind:?}");
                assert!((p.position[1] + 0.2).abs() <= 0.75 + 1e-9, "{kind:?}");
                assert!(p.position[2] >= spec.depth);
            }
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(make_shape(&letter('#', 100.0), 0).is_err());
        assert!(make_shape(&ShapeSpec { depth: 0.0, ..ShapeSpec::default() }, 0).is_err());
        let zero = ShapeSpec {
            kind: ShapeKind::BarSet,
            count: 0,
            ..ShapeSpec::default()
        };
        assert!(make_shape(&zero, 0).is_err());
    }

    #[test]
    fn translation_per_frame() {
        let scene = make_shape(&letter('L', 500.0), 1).unwrap();
        let motion = MotionSpec::default();
        assert_eq!(animate(&scene, &motion, 0), scene);
        for k in [1usize, 7, 20] {
            let moved = animate(&scene, &motion, k);
            for (a, b) in moved.points().iter().zip(scene.points()) {
                assert!((a.position[0] - b.position[0] - 0.04 * k as f64).abs() < 1e-12);
                assert_eq!(a.position[1], b.position[1]);
            }
        }
        assert!((motion.duration() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn full_revolution_returns_home() {
        let scene = make_shape(&ShapeSpec { kind: ShapeKind::WindmillLike, ..ShapeSpec::default() }, 2).unwrap();
        let motion = MotionSpec {
            kind: MotionKind::Rotate,
            angular_rate: 36.0,
            num_frames: 200,
            ..MotionSpec::default()
        };
        let back = animate(&scene, &motion, 100);
        for (a, b) in back.points().iter().zip(scene.points()) {
            assert!((a.position[0] - b.position[0]).abs() < 1e-9);
            assert!((a.position[1] - b.position[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn bounded_pose_stays_on_the_wall() {
        let spec = ShapeSpec { size: 1.0, ..letter('H', 400.0) };
        let scene = make_shape(&spec, 0).unwrap();
        let motion = MotionSpec::default();
        for k in 0..motion.num_frames {
            for p in bounded_pose(&scene, &motion, [2.0, 2.0], k).points() {
                assert!(p.position[0].abs() <= 1.0 + 1e-9);
            }
        }
        // Before the first bounce the pose matches the free motion.
        assert_eq!(bounded_pose(&scene, &motion, [2.0, 2.0], 3), animate(&scene, &motion, 3));
    }

    #[test]
    fn gt_examples() {
        let wall = WallGeometry::default();
        let empty = render_gt_image(&HiddenScene::empty(), &wall, [64, 64]).unwrap();
        assert_eq!(empty.image.max(), 0.0);
        let one = HiddenScene::single([1e-6, 1e-6, 1.0], 0.3).unwrap();
        let gt = render_gt_image(&one, &wall, [64, 64]).unwrap();
        assert_eq!(gt.image.get(32, 32), 1.0);
        assert_eq!(gt.image.sum(), 1.0);
        let away = HiddenScene::single([5.0, 0.0, 1.0], 1.0).unwrap();
        let gt = render_gt_image(&away, &wall, [64, 64]).unwrap();
        assert!(gt.all_outside(&away));
        assert_eq!(gt.image.max(), 0.0);
    }

    #[test]
    fn gt_translates_with_the_scene() {
        let wall = WallGeometry::default();
        let scene = make_shape(&ShapeSpec { size: 1.0, ..letter('F', 2000.0) }, 4).unwrap();
        let pix = 2.0 / 64.0;
        let base = render_gt_unnormalized(&scene, &wall, [64, 64]).unwrap().image;
        let moved = render_gt_unnormalized(&scene.shifted_xy(3.0 * pix, -2.0 * pix), &wall, [64, 64])
            .unwrap()
            .image;
        assert!((base.sum() - moved.sum()).abs() < 1e-9);
        let mut agree = 0;
        for i in 3..64 {
            for j in 0..62 {
                if moved.get(i, j) == base.get(i - 3, j + 2) {
                    agree += 1;
                }
            }
        }
        // Floor binning may move boundary points by one pixel.
        assert!(agree as f64 > 0.95 * (61.0 * 62.0));
    }

    #[test]
    fn serpentine_examples() {
        let p = serpentine_pattern(2, 2);
        assert_eq!(p.points(), &[(0, 0), (1, 0), (1, 1), (0, 1)]);
        let p = serpentine_pattern(16, 16);
        let unique: std::collections::HashSet<_> = p.points().iter().collect();
        assert_eq!(unique.len(), 256);
    }

    fn small_config() -> SequenceConfig {
        SequenceConfig {
            render: RenderConfig {
                wall: WallGeometry::square(2.0, 16).unwrap(),
                time_axis: TimeAxis::new(96, 80e-12).unwrap(),
                gt_resolution: [16, 16],
            },
            target_resolution: [4, 4],
            distortion: DistortionConfig {
                samples: 8,
                ..DistortionConfig::default()
            },
            noise: None,
        }
    }

    #[test]
    fn static_sequence_repeats_frames() {
        let shape = ShapeSpec { size: 1.0, ..letter('T', 300.0) };
        let motion = MotionSpec {
            velocity: 0.0,
            num_frames: 3,
            ..MotionSpec::default()
        };
        let s = generate_sequence(0, &shape, &motion, &small_config()).unwrap();
        assert_eq!(s.frames.len(), 3);
        assert_eq!(s.frames[0], s.frames[1]);
        assert_eq!(s.frames[1], s.frames[2]);
    }

    #[test]
    fn frames_match_independent_distortion() {
        let shape = ShapeSpec { size: 1.0, ..letter('A', 300.0) };
        let motion = MotionSpec {
            num_frames: 3,
            ..MotionSpec::default()
        };
        let cfg = small_config();
        let s = generate_sequence(1, &shape, &motion, &cfg).unwrap();
        for f in &s.frames {
            let again = distort_cube(&f.dense, cfg.target_resolution, &cfg.distortion).unwrap();
            assert_eq!(again, f.distorted);
            assert!(f.gt.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(f.dense.time_axis(), s.frames[0].dense.time_axis());
        }
        assert_ne!(s.frames[0].dense, s.frames[2].dense);
        assert_eq!(s, generate_sequence(1, &shape, &motion, &cfg).unwrap());
    }

    #[test]
    fn noisy_frames_use_distinct_streams() {
        let shape = ShapeSpec { size: 1.0, ..letter('O', 300.0) };
        let motion = MotionSpec {
            velocity: 0.0,
            num_frames: 2,
            ..MotionSpec::default()
        };
        let cfg = SequenceConfig {
            noise: Some(NoiseConfig {
                background_rate: 0.5,
                ..NoiseConfig::default()
            }),
            ..small_config()
        };
        let s = generate_sequence(2, &shape, &motion, &cfg).unwrap();
        assert_eq!(s.frames[0].dense, s.frames[1].dense);
        assert_ne!(s.frames[0].distorted, s.frames[1].distorted);
    }

    #[test]
    fn plan_is_seeded() {
        let plan = SequencePlan::default();
        let a = plan.specs().unwrap();
        assert_eq!(a.len(), 8);
        assert_eq!(a, plan.specs().unwrap());
        let other = SequencePlan { seed: 1, ..plan }.specs().unwrap();
        assert_ne!(a, other);
    }
}
