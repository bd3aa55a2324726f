use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdfforge::diffmlp::JetOrder;
use sdfforge::field::SdfField;
use sdfforge::synth::*;
use sdfforge::tracer::TraceParams;
use sdfforge::{Aabb, Vec3};

fn shapes() -> Vec<Shape> {
    vec![
        Shape::Sphere { radius: 0.7 },
        Shape::Torus { major: 0.6, minor: 0.2 },
        Shape::Box {
            half_extents: Vec3::new(0.5, 0.3, 0.7),
        },
        Shape::Spheres {
            centers: vec![Vec3::new(-0.45, 0.0, 0.0), Vec3::new(0.45, 0.1, 0.0)],
            radii: vec![0.35, 0.3],
        },
    ]
}

fn scene(shape: Shape) -> AnalyticScene {
    AnalyticScene::new(shape, Albedo::checker(0.25)).unwrap()
}

#[test]
fn closed_form_distances() {
    let unit = Shape::Sphere { radius: 1.0 };
    assert_eq!(unit.value(&Vec3::new(2.0, 0.0, 0.0)).unwrap(), 1.0);
    assert_eq!(unit.value(&Vec3::zeros()).unwrap(), -1.0);
    let torus = Shape::Torus { major: 0.6, minor: 0.2 };
    assert!(torus.value(&Vec3::new(0.6, 0.0, 0.2)).unwrap().abs() < 1e-15);
    let s = scene(Shape::Sphere { radius: 0.5 });
    assert_eq!(analytic_sdf(&s, &Vec3::new(0.0, 0.0, 2.0)), 1.5);
}

#[test]
fn scenes_must_keep_margin() {
    assert!(AnalyticScene::sphere(1.0).is_err());
    assert!(AnalyticScene::sphere(0.9).is_ok());
    assert!(AnalyticScene::new(
        Shape::Spheres {
            centers: vec![Vec3::zeros(), Vec3::new(0.3, 0.0, 0.0)],
            radii: vec![0.2, 0.2],
        },
        Albedo::checker(0.25)
    )
    .is_err());
}

/// Random point away from the medial set of each shape.
fn off_medial(shape: &Shape, rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let x = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let ok = match shape {
            Shape::Sphere { .. } => x.norm() > 0.05,
            Shape::Torus { major, .. } => x.xy().norm() > 0.05 && (x.xy().norm() - major).hypot(x.z) > 0.05,
            Shape::Box { half_extents } => {
                // stay clear of the interior medial planes
                let q = x.abs() - half_extents;
                let mut s: Vec<f64> = q.iter().copied().collect();
                s.sort_by(f64::total_cmp);
                q.max() > 0.0 && q.iter().all(|v| v.abs() > 0.02) || q.max() < 0.0 && s[2] - s[1] > 0.02
            }
            Shape::Spheres { centers, radii } => {
                let d: Vec<f64> = centers.iter().zip(radii).map(|(c, r)| (x - c).norm() - r).collect();
                centers.iter().all(|c| (x - c).norm() > 0.05) && (d[0] - d[1]).abs() > 0.02
            }
        };
        if ok {
            return x;
        }
    }
}

#[test]
fn analytic_fields_are_eikonal() {
    let h = 1e-6;
    for shape in shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let x = off_medial(&shape, &mut rng);
            let g = Vec3::from_fn(|i, _| {
                let mut e = Vec3::zeros();
                e[i] = h;
                (shape.value(&(x + e)).unwrap() - shape.value(&(x - e)).unwrap()) / (2.0 * h)
            });
            assert!((g.norm() - 1.0).abs() < 1e-4, "{shape:?} at {x:?}: {}", g.norm());
        }
    }
}

#[test]
fn analytic_derivatives_match_finite_differences() {
    let h = 1e-5;
    for shape in shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let x = off_medial(&shape, &mut rng);
            let s = shape.sample(&[x], JetOrder::Hessian).unwrap()[0];
            let grad_at = |p: Vec3| shape.sample(&[p], JetOrder::Gradient).unwrap()[0].gradient;
            for i in 0..3 {
                let mut e = Vec3::zeros();
                e[i] = h;
                let fd_g = (shape.value(&(x + e)).unwrap() - shape.value(&(x - e)).unwrap()) / (2.0 * h);
                assert!((fd_g - s.gradient[i]).abs() < 1e-6, "{shape:?}");
                let fd_h = (grad_at(x + e) - grad_at(x - e)) / (2.0 * h);
                for j in 0..3 {
                    assert!((fd_h[j] - s.hessian[(i, j)]).abs() < 1e-4 * (1.0 + s.hessian.abs().max()), "{shape:?} H[{i},{j}] at {x:?}");
                }
            }
        }
    }
}

#[test]
fn clean_samples_lie_on_surface_with_exact_normals() {
    for shape in shapes() {
        let s = scene(shape.clone());
        let cloud = sample_scene(&s, 2000, &DegradationSpec::default(), 3).unwrap();
        assert_eq!(cloud.len(), 2000);
        let samples = shape.sample(cloud.positions(), JetOrder::Gradient).unwrap();
        for (p, fs) in cloud.points().iter().zip(samples) {
            assert!(fs.value.abs() < 1e-12, "{shape:?}: {}", fs.value);
            assert!((p.normal - fs.gradient).norm() < 1e-9);
        }
    }
}

#[test]
fn sphere_samples_are_area_uniform() {
    // equal-area bands in z receive equal counts
    let s = scene(Shape::Sphere { radius: 0.8 });
    let cloud = sample_scene(&s, 40_000, &DegradationSpec::default(), 4).unwrap();
    let mut bins = [0usize; 8];
    for p in cloud.points() {
        let b = (((p.normal.z + 1.0) / 2.0 * 8.0) as usize).min(7);
        bins[b] += 1;
    }
    for b in bins {
        assert!((b as f64 - 5000.0).abs() < 300.0, "{bins:?}");
    }
}

#[test]
fn polar_hole_removes_cap() {
    let s = scene(Shape::Sphere { radius: 0.8 });
    let deg = DegradationSpec {
        hole: Some(Hole {
            axis: Vec3::z(),
            half_angle: 30.0,
        }),
        ..Default::default()
    };
    let cloud = sample_scene(&s, 5000, &deg, 5).unwrap();
    let cos30 = 30f64.to_radians().cos();
    assert!(cloud.points().iter().all(|p| p.normal.z <= cos30));
    // cap fraction (1 - cos 30) / 2 ~ 6.7%
    let kept = cloud.len() as f64 / 5000.0;
    assert!((kept - (1.0 - (1.0 - cos30) / 2.0)).abs() < 0.015, "{kept}");
    let all = DegradationSpec {
        hole: Some(Hole {
            axis: Vec3::z(),
            half_angle: 180.0,
        }),
        ..Default::default()
    };
    assert!(matches!(sample_scene(&s, 100, &all, 5), Err(sdfforge::Error::EmptyOutput(_))));
}

#[test]
fn jitter_rms_matches_sigma() {
    let s = scene(Shape::Sphere { radius: 0.8 });
    let sigma = 0.01;
    let deg = DegradationSpec {
        jitter_sigma: sigma,
        ..Default::default()
    };
    let cloud = sample_scene(&s, 10_000, &deg, 6).unwrap();
    let ms: f64 = cloud.positions().iter().map(|p| analytic_sdf(&s, p).powi(2)).sum::<f64>() / cloud.len() as f64;
    assert!((ms.sqrt() / sigma - 1.0).abs() < 0.2, "rms {}", ms.sqrt());
}

#[test]
fn normal_noise_tilts_normals() {
    let s = scene(Shape::Sphere { radius: 0.8 });
    let deg = DegradationSpec {
        normal_noise: 10.0,
        ..Default::default()
    };
    let cloud = sample_scene(&s, 5000, &deg, 7).unwrap();
    let mean_angle: f64 = cloud.points().iter().map(|p| p.normal.dot(&p.position.normalize()).min(1.0).acos().to_degrees()).sum::<f64>() / 5000.0;
    // half-normal mean is sigma * sqrt(2 / pi)
    assert!((mean_angle - 10.0 * (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.5, "{mean_angle}");
}

fn intr() -> Intrinsics {
    Intrinsics::from_fov(48, 40, 40.0)
}

#[test]
fn orbit_cameras_on_axes() {
    let cams = orbit_cameras(4, 3.0, 0.0, Vec3::zeros(), &intr()).unwrap();
    let expect = [Vec3::new(3.0, 0.0, 0.0), Vec3::new(0.0, 3.0, 0.0), Vec3::new(-3.0, 0.0, 0.0), Vec3::new(0.0, -3.0, 0.0)];
    for (c, e) in cams.iter().zip(expect) {
        assert!((c.center() - e).norm() < 1e-12);
        c.validate().unwrap();
    }
}

#[test]
fn look_at_projects_to_principal_point() {
    let target = Vec3::new(0.1, -0.2, 0.05);
    for c in orbit_cameras(7, 2.5, 35.0, target, &intr()).unwrap() {
        let (u, v) = c.project(&target).unwrap();
        assert!((u - c.cx).abs() < 1e-6 && (v - c.cy).abs() < 1e-6);
        assert!(c.project(&(target + Vec3::z() * 0.1)).unwrap().1 < c.cy, "+z should appear upward");
    }
}

#[test]
fn center_pixel_lit_head_on() {
    let mut s = AnalyticScene::sphere(0.6).unwrap();
    let cam = look_at_camera("c".into(), Vec3::new(0.0, -3.0, 0.0), Vec3::zeros(), &Intrinsics::from_fov(33, 33, 30.0)).unwrap();
    s.light_dir = -cam.forward();
    let (img, mask) = render_views(&s, &[cam]).unwrap().remove(0);
    assert!(mask.get(16, 16));
    let albedo = Vec3::new(0.8, 0.6, 0.4);
    assert!((img.get(16, 16) - albedo).norm() < 1e-6, "{:?}", img.get(16, 16));
    assert!(!mask.get(0, 0));
    assert_eq!(img.get(0, 0), Vec3::zeros());
}

#[test]
fn rendered_hits_lie_on_surface() {
    let s = scene(Shape::Torus { major: 0.55, minor: 0.25 });
    let cams = orbit_cameras(3, 3.0, 30.0, Vec3::zeros(), &intr()).unwrap();
    let tol = TraceParams::for_box(&Aabb::unit()).hit_tol;
    for (cam, (_, mask)) in cams.iter().zip(render_views(&s, &cams).unwrap()) {
        let mut valid = 0;
        for j in 0..mask.height {
            for i in 0..mask.width {
                if mask.get(i, j) {
                    valid += 1;
                    let ray = cam.ray(i as f64 + 0.5, j as f64 + 0.5);
                    let hit = sdfforge::tracer::sphere_trace(&s, &ray, &TraceParams::for_box(&Aabb::unit())).unwrap();
                    assert!(analytic_sdf(&s, &hit.hit().unwrap().point).abs() < tol);
                }
            }
        }
        assert!(valid > 100);
    }
}

#[test]
fn rendering_is_deterministic_and_permutation_equivariant() {
    let s = scene(Shape::Box {
        half_extents: Vec3::new(0.4, 0.5, 0.3),
    });
    let cams = orbit_cameras(3, 3.0, 20.0, Vec3::zeros(), &intr()).unwrap();
    let a = render_views(&s, &cams).unwrap();
    let rev: Vec<_> = cams.iter().rev().cloned().collect();
    let b = render_views(&s, &rev).unwrap();
    for i in 0..3 {
        assert_eq!(a[i], b[2 - i]);
    }
    assert_eq!(a, render_views(&s, &cams).unwrap());
}

#[test]
fn scene_spec_round_trip() {
    let text = r#"
n_points = 1000
seed = 3

[scene]
light_dir = [0.0, 0.0, 1.0]
ambient = 0.25

[scene.shape]
type = "torus"
major = 0.6
minor = 0.2

[scene.albedo]
type = "checker"
period = 0.25
light = [0.9, 0.9, 0.9]
dark = [0.1, 0.1, 0.1]

[degradation]
jitter_sigma = 0.01

[degradation.hole]
axis = [0.0, 0.0, 1.0]
half_angle = 30.0

[views]
count = 6
radius = 3.0
elevation = 20.0
width = 64
height = 64
fov = 40.0
"#;
    let spec = SceneSpec::parse(text).unwrap();
    assert_eq!(spec.scene.shape, Shape::Torus { major: 0.6, minor: 0.2 });
    assert_eq!(SceneSpec::parse(&spec.to_toml().unwrap()).unwrap(), spec);
    assert_eq!(spec.cameras().unwrap().len(), 6);
    let bad = text.replace("n_points", "n_pointz");
    assert!(SceneSpec::parse(&bad).is_err());
}
