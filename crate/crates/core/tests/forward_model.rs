use nlos_core::transient::{
    apply_noise, render_cube, render_histogram, round_trip_bins, to_measured, NoiseConfig,
};
use nlos_core::{HiddenScene, ScenePoint, TimeAxis, WallGeometry, SPEED_OF_LIGHT};
use proptest::prelude::*;

fn point() -> impl Strategy<Value = ScenePoint> {
    (-1.0..1.0f64, -1.0..1.0f64, 0.2..1.4f64, 0.0..2.0f64).prop_map(|(x, y, z, a)| ScenePoint {
        position: [x, y, z],
        albedo: a,
    })
}

fn scene(max: usize) -> impl Strategy<Value = HiddenScene> {
    prop::collection::vec(point(), 0..max).prop_map(|p| HiddenScene::new(p).unwrap())
}

fn small_wall() -> WallGeometry {
    WallGeometry::square(2.0, 6).unwrap()
}

fn long_axis() -> TimeAxis {
    TimeAxis::new(1200, 20e-12).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn single_point_peak_and_amplitude(p in point(), wx in -1.0..1.0f64, wy in -1.0..1.0f64) {
        let wall_point = [wx, wy, 0.0];
        let axis = long_axis();
        let h = render_histogram(&HiddenScene::new(vec![p]).unwrap(), &wall_point, &axis).unwrap();
        let d = [p.position[0] - wx, p.position[1] - wy, p.position[2]];
        let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        let bin = (2.0 * r / (SPEED_OF_LIGHT * 20e-12)).floor() as usize;
        prop_assert!(bin < axis.num_bins);
        for (k, &v) in h.iter().enumerate() {
            if k == bin {
                prop_assert!((v - p.albedo / r.powi(4)).abs() <= 1e-12);
            } else {
                prop_assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn doubling_distance_divides_by_sixteen(
        theta in 0.0..0.6f64, phi in 0.0..std::f64::consts::TAU, r in 0.2..0.7f64,
    ) {
        let u = [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
        let axis = long_axis();
        let amp = |dist: f64| {
            let s = HiddenScene::single([u[0] * dist, u[1] * dist, u[2] * dist], 1.0).unwrap();
            render_histogram(&s, &[0.0; 3], &axis).unwrap().iter().sum::<f64>()
        };
        let ratio = amp(r) / amp(2.0 * r);
        prop_assert!((ratio - 16.0).abs() < 1e-9, "ratio {}", ratio);
    }

    #[test]
    fn rendering_is_linear_and_non_negative(a in scene(6), b in scene(6)) {
        let wall = small_wall();
        let axis = long_axis();
        let ca = render_cube(&a, &wall, &axis).unwrap();
        let cb = render_cube(&b, &wall, &axis).unwrap();
        let cab = render_cube(&a.union(&b), &wall, &axis).unwrap();
        for k in 0..cab.data().len() {
            let e = ca.data()[k] + cb.data()[k];
            prop_assert!((cab.data()[k] - e).abs() <= 1e-12 * e.max(1.0));
            prop_assert!(cab.data()[k] >= 0.0);
        }
    }

    #[test]
    fn noise_is_non_negative_and_deterministic(s in scene(4), seed in any::<u64>(), bg in 0.0..2.0f64) {
        let cube = render_cube(&s, &small_wall(), &TimeAxis::new(256, 20e-12).unwrap()).unwrap();
        let noise = NoiseConfig { background_rate: bg, jitter_sigma: 30e-12, seed };
        let a = apply_noise(&cube, &noise).unwrap();
        prop_assert!(a.data().iter().all(|&v| v >= 0.0 && v.is_finite()));
        prop_assert_eq!(a, apply_noise(&cube, &noise).unwrap());
    }

    #[test]
    fn measured_argmax_moves_by_round_trip(p in point()) {
        let wall = small_wall();
        let axis = TimeAxis::new(2048, 20e-12).unwrap();
        let ideal = render_cube(&HiddenScene::new(vec![ScenePoint { albedo: 1.0, ..p }]).unwrap(), &wall, &axis).unwrap();
        let measured = to_measured(&ideal).unwrap();
        let argmax = |h: &[f64]| h.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|x| x.0).unwrap() as i64;
        for i in 0..6 {
            for j in 0..6 {
                let shift = round_trip_bins(&ideal, i, j);
                let moved = argmax(measured.histogram(i, j)) - argmax(ideal.histogram(i, j));
                prop_assert!((moved - shift).abs() <= 1);
            }
        }
    }
}

#[test]
fn depth_step_of_half_a_bin_width_moves_one_bin() {
    let axis = TimeAxis::default();
    let dz = SPEED_OF_LIGHT * axis.bin_width / 2.0;
    let first = |z: f64| {
        let h = render_histogram(&HiddenScene::single([0.0, 0.0, z], 1.0).unwrap(), &[0.0; 3], &axis).unwrap();
        h.iter().position(|&v| v > 0.0).unwrap()
    };
    for i in 0..50 {
        let z = 0.3 + 0.0213 * i as f64;
        assert_eq!(first(z + dz), first(z) + 1, "z = {z}");
    }
}

#[test]
fn dense_cube_matches_per_point_rendering() {
    let mut pts = Vec::with_capacity(1000);
    let mut s: u64 = 17;
    let mut next = || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (s >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..1000 {
        pts.push(ScenePoint {
            position: [next() - 0.5, next() - 0.5, 0.6 + 0.5 * next()],
            albedo: 0.5 + next(),
        });
    }
    let scene = HiddenScene::new(pts).unwrap();
    let wall = WallGeometry::default();
    let axis = TimeAxis::default();
    let cube = render_cube(&scene, &wall, &axis).unwrap();
    for i in 0..64 {
        for j in 0..64 {
            let h = render_histogram(&scene, &wall.point(i, j), &axis).unwrap();
            assert_eq!(cube.histogram(i, j), &h[..], "grid point ({i}, {j})");
        }
    }
}
