use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdfforge::diffmlp::{eval_sdf, eval_slf, grad_sdf, init_params, MlpArchitecture, ParamStore};
use sdfforge::field::{NeuralLightField, NeuralSdf, SdfField};
use sdfforge::image::{Image, Mask};
use sdfforge::losses::{total_loss, LossContext, LossWeights, PixelSample, SampleBatch};
use sdfforge::pointcloud::{BoundaryPoint, OrientedPoint, OrientedPointCloud};
use sdfforge::synth::{look_at_camera, render_views, sample_scene, AnalyticScene, DegradationSpec, Intrinsics};
use sdfforge::tracer::{trace_rays, Camera, RenderMode, TraceParams};
use sdfforge::trainer::*;
use sdfforge::{Aabb, Ray, Vec3};

#[test]
fn learning_rate_schedule() {
    let cfg = TrainConfig::default();
    assert_eq!(cfg.epochs, 1800);
    assert_eq!(lr_at(&cfg, 0), 1e-3);
    assert!((lr_at(&cfg, 599) - 1e-3).abs() < 1e-18);
    assert!((lr_at(&cfg, 600) - 3.1623e-4).abs() < 1e-8);
    assert!((lr_at(&cfg, 1500) - 1e-5).abs() < 1e-15);
    let mut decays = 0;
    for e in 1..1800 {
        let (a, b) = (lr_at(&cfg, e - 1), lr_at(&cfg, e));
        assert!(b <= a);
        decays += (b < a) as usize;
    }
    assert_eq!(decays, 4);
}

#[test]
fn normal_weight_override_and_warmup_mode() {
    let cfg = TrainConfig {
        epochs: 6,
        normal_weight_second_half: Some(0.1),
        ..Default::default()
    };
    assert_eq!(cfg.weights_at(2).lambda_n, 1.0);
    assert_eq!(cfg.weights_at(3).lambda_n, 0.1);
    assert_eq!(cfg.render_mode(0), RenderMode::Frozen);
    assert_eq!(cfg.render_mode(1), RenderMode::Differentiable);
    let bad = TrainConfig {
        warmup_fraction: 0.0,
        ..Default::default()
    };
    assert!(bad.validate().is_err());
}

fn cloud_of(points: &[Vec3]) -> OrientedPointCloud {
    OrientedPointCloud::new(points.iter().map(|&p| OrientedPoint { position: p, normal: Vec3::z() }).collect()).unwrap()
}

#[test]
fn normalization_maps_padded_box_into_domain() {
    let inside = cloud_of(&[Vec3::new(-0.5, 0.0, 0.1), Vec3::new(0.5, 0.2, -0.3)]);
    let (t, c, _) = normalize_scene(&inside, &[], DEFAULT_PADDING).unwrap();
    assert!(t.is_identity());
    assert_eq!(c.positions(), inside.positions());

    let big = cloud_of(&[Vec3::zeros(), Vec3::repeat(100.0), Vec3::new(100.0, 0.0, 50.0)]);
    let (t, c, _) = normalize_scene(&big, &[], DEFAULT_PADDING).unwrap();
    assert!((t.scale - 2.0 / (100.0 * 1.1)).abs() < 1e-15);
    assert_eq!(t.center, [50.0; 3]);
    for p in c.positions() {
        assert!(p.iter().all(|v| v.abs() <= 1.0 / 1.1 + 1e-12));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let p = Vec3::from_fn(|_, _| rng.gen_range(-1e3..1e3));
        assert!((t.to_scene(&t.to_normalized(&p)) - p).norm() < 1e-12);
    }
    let b = t.boundary_to_normalized(&BoundaryPoint {
        position: Vec3::repeat(50.0),
        target_distance: 11.0,
    });
    assert_eq!(b.position, Vec3::zeros());
    assert!((b.target_distance - 0.2).abs() < 1e-15);

    let point = cloud_of(&[Vec3::new(3.0, 3.0, 3.0)]);
    assert!(matches!(normalize_scene(&point, &[], 0.1), Err(sdfforge::Error::DegenerateScene(_))));
}

#[test]
fn adam_update_oracles() {
    let mut opt = OptimizerState::new(3);
    let mut p = vec![1.0, -2.0, 0.5];
    opt.update(&mut p, &[0.0; 3], 1e-3);
    assert_eq!(p, vec![1.0, -2.0, 0.5]);

    let mut opt = OptimizerState::new(1);
    let mut p = vec![0.0];
    // step 1: m = 0.05, v = 2.5e-4, bias-corrected to g and g^2
    opt.update(&mut p, &[0.5], 1e-3);
    assert!((p[0] + 1e-3 * 0.5 / (0.5 + 1e-8)).abs() < 1e-18);
    // step 2 with g = -1: m = -0.055, v = 0.0012495
    opt.update(&mut p, &[-1.0], 1e-3);
    let mhat: f64 = -0.055 / (1.0 - 0.81);
    let vhat: f64 = 0.0012497500000000002 / (1.0 - 0.998001);
    let expect = -1e-3 * 0.5 / (0.5 + 1e-8) - 1e-3 * mhat / (vhat.sqrt() + 1e-8);
    assert!((p[0] - expect).abs() < 1e-15, "{} vs {expect}", p[0]);
}

fn small_sdf(seed: u64, descriptor: usize) -> (MlpArchitecture, ParamStore) {
    let arch = MlpArchitecture::sdf(vec![32, 32], vec![], 2, descriptor);
    let mut params = init_params(&arch, seed);
    // pull the level set into the box
    let f0 = NeuralSdf::new(&arch, &params).value(&Vec3::zeros()).unwrap();
    let bias = arch.layout().bias(arch.n_layers() - 1).offset;
    params.values[bias] -= f0 + 0.3;
    (arch, params)
}

fn random_batch(seed: u64, n: usize) -> SampleBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = || Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    SampleBatch {
        data: (0..n)
            .map(|_| OrientedPoint {
                position: v() * 0.6,
                normal: v().normalize(),
            })
            .collect(),
        boundary: (0..5)
            .map(|_| BoundaryPoint {
                position: v(),
                target_distance: 0.5,
            })
            .collect(),
        uniform: (0..n).map(|_| v()).collect(),
        pixels: Vec::new(),
    }
}

fn sdf_only(arch: MlpArchitecture, params: ParamStore) -> Model {
    Model {
        sdf_arch: arch,
        sdf: params,
        light: None,
    }
}

const NO_LIGHT: Option<&NeuralLightField> = None;

#[test]
fn geometric_gradient_matches_finite_differences() {
    let (arch, params) = small_sdf(3, 0);
    let batch = random_batch(4, 60);
    let w = LossWeights {
        render: 0.0,
        epsilon: 0.5,
        ..Default::default()
    };
    let trace = TraceParams::for_box(&Aabb::unit());
    let model = sdf_only(arch.clone(), params.clone());
    let (b, g) = loss_and_gradient(&model, &[], &trace, &batch, &w, RenderMode::Frozen, 1.0).unwrap();
    let ctx = LossContext {
        light: NO_LIGHT,
        cameras: &[],
        trace,
        mode: RenderMode::Frozen,
    };
    let loss = |p: &ParamStore| total_loss(&NeuralSdf::new(&arch, p), &ctx, &batch, &w).unwrap().0;
    let reference = total_loss(&NeuralSdf::new(&arch, &params), &ctx, &batch, &w).unwrap().1;
    for (a, r) in [(b.data, reference.data), (b.boundary, reference.boundary), (b.eikonal, reference.eikonal), (b.hessian, reference.hessian), (b.minimal_surface, reference.minimal_surface)] {
        assert!((a - r).abs() <= 1e-12 * r.abs().max(1e-12), "{a} vs {r}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-6;
    for _ in 0..40 {
        let k = rng.gen_range(0..params.len());
        let mut plus = params.clone();
        plus.values[k] += h;
        let mut minus = params.clone();
        minus.values[k] -= h;
        let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
        let scale = fd.abs().max(g.sdf[k].abs()).max(1e-2);
        assert!((fd - g.sdf[k]).abs() / scale < 1e-4, "param {k}: fd {fd} vs {}", g.sdf[k]);
    }
}

struct RenderRig {
    model: Model,
    cameras: Vec<Camera>,
    batch: SampleBatch,
    trace: TraceParams,
}

fn render_rig() -> RenderRig {
    let (arch, params) = small_sdf(7, 4);
    let larch = MlpArchitecture::light_field(vec![16, 16], 4, 2);
    let lparams = init_params(&larch, 8);
    let cam = look_at_camera("c".into(), Vec3::new(0.3, -3.0, 0.8), Vec3::zeros(), &Intrinsics::from_fov(12, 12, 50.0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pixels = (0..12)
        .flat_map(|j| (0..12).map(move |i| (i, j)))
        .map(|(i, j)| PixelSample {
            camera: 0,
            pixel: (i as f64 + 0.5, j as f64 + 0.5),
            rgb: Vec3::from_fn(|_, _| rng.gen_range(0.0..1.0)),
        })
        .collect();
    RenderRig {
        model: Model {
            sdf_arch: arch,
            sdf: params,
            light: Some((larch, lparams)),
        },
        cameras: vec![cam],
        batch: SampleBatch {
            pixels,
            ..Default::default()
        },
        trace: TraceParams::for_box(&Aabb::unit()),
    }
}

/// Frozen intersection data of every traced, non-tangential pixel.
struct FrozenHit {
    x0: Vec3,
    v: Vec3,
    f0: f64,
    g0: Vec3,
    rgb: Vec3,
}

fn frozen_hits(rig: &RenderRig) -> Vec<FrozenHit> {
    let field = NeuralSdf::new(&rig.model.sdf_arch, &rig.model.sdf);
    let cam = &rig.cameras[0];
    let rays: Vec<Ray> = rig.batch.pixels.iter().map(|p| cam.ray(p.pixel.0, p.pixel.1)).collect();
    let mut out = Vec::new();
    for ((o, r), p) in trace_rays(&field, &rays, &rig.trace).unwrap().iter().zip(&rays).zip(&rig.batch.pixels) {
        if let Some(h) = o.hit() {
            let ev = eval_sdf(&rig.model.sdf, &rig.model.sdf_arch, &h.point).unwrap();
            let g0 = grad_sdf(&ev.record).unwrap();
            if r.dir.dot(&g0).abs() >= 1e-4 {
                out.push(FrozenHit {
                    x0: h.point,
                    v: r.dir,
                    f0: ev.distance,
                    g0,
                    rgb: p.rgb,
                });
            }
        }
    }
    out
}

/// Render loss written out point by point: hit re-parameterized through
/// the current distance value, normal and descriptor re-evaluated there.
fn oracle_render_loss(model: &Model, hits: &[FrozenHit]) -> f64 {
    let (larch, lparams) = model.light.as_ref().unwrap();
    let mut sum = 0.0;
    for h in hits {
        let f = eval_sdf(&model.sdf, &model.sdf_arch, &h.x0).unwrap().distance;
        let x = h.x0 - h.v * ((f - h.f0) / h.v.dot(&h.g0));
        let ev = eval_sdf(&model.sdf, &model.sdf_arch, &x).unwrap();
        let n = grad_sdf(&ev.record).unwrap().normalize();
        let c = eval_slf(lparams, larch, &x, &n, &h.v, &ev.descriptor).unwrap();
        sum += (c - h.rgb).abs().sum();
    }
    sum / hits.len() as f64
}

#[test]
fn render_gradient_matches_finite_differences() {
    let rig = render_rig();
    let w = LossWeights {
        render: 1.0,
        ..LossWeights::zero()
    };
    let (b, g) = loss_and_gradient(&rig.model, &rig.cameras, &rig.trace, &rig.batch, &w, RenderMode::Differentiable, 1.0).unwrap();
    let hits = frozen_hits(&rig);
    assert!(hits.len() > 30, "{} hits", hits.len());
    assert_eq!(hits.len() + b.skipped_pixels, rig.batch.pixels.len());
    assert!((oracle_render_loss(&rig.model, &hits) - b.render).abs() < 1e-12);

    let h = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let light_len = rig.model.light.as_ref().unwrap().1.len();
    let mut checked = 0;
    for trial in 0..80 {
        let on_sdf = trial % 2 == 0;
        let k = rng.gen_range(0..if on_sdf { rig.model.sdf.len() } else { light_len });
        let perturbed = |d: f64| {
            let mut m = rig.model.clone();
            if on_sdf {
                m.sdf.values[k] += d;
            } else {
                m.light.as_mut().unwrap().1.values[k] += d;
            }
            oracle_render_loss(&m, &hits)
        };
        let fd = (perturbed(h) - perturbed(-h)) / (2.0 * h);
        let an = if on_sdf { g.sdf[k] } else { g.light.as_ref().unwrap()[k] };
        let scale = fd.abs().max(an.abs()).max(1e-3);
        assert!((fd - an).abs() / scale < 1e-4, "{} param {k}: fd {fd} vs {an}", if on_sdf { "sdf" } else { "light" });
        checked += (an != 0.0) as usize;
    }
    assert!(checked > 20);
}

#[test]
fn warmup_freezes_render_path_for_distance_parameters() {
    let mut rig = render_rig();
    rig.batch = SampleBatch {
        pixels: rig.batch.pixels,
        ..random_batch(11, 40)
    };
    let w = LossWeights::default();
    let (bf, gf) = loss_and_gradient(&rig.model, &rig.cameras, &rig.trace, &rig.batch, &w, RenderMode::Frozen, 1.0).unwrap();
    let (bd, gd) = loss_and_gradient(&rig.model, &rig.cameras, &rig.trace, &rig.batch, &w, RenderMode::Differentiable, 1.0).unwrap();
    assert_eq!((bf.data, bf.boundary, bf.eikonal, bf.hessian, bf.minimal_surface), (bd.data, bd.boundary, bd.eikonal, bd.hessian, bd.minimal_surface));
    assert!(gf.sdf.iter().zip(&gd.sdf).any(|(a, b)| (a - b).abs() > 1e-8));
    let geo_only = LossWeights { render: 0.0, ..w };
    let (_, gg) = loss_and_gradient(&rig.model, &rig.cameras, &rig.trace, &rig.batch, &geo_only, RenderMode::Frozen, 1.0).unwrap();
    assert_eq!(gg.sdf, gf.sdf);
    let render_only = LossWeights {
        render: 1.0,
        ..LossWeights::zero()
    };
    let (_, gr) = loss_and_gradient(&rig.model, &rig.cameras, &rig.trace, &rig.batch, &render_only, RenderMode::Frozen, 1.0).unwrap();
    assert!(gr.sdf.iter().all(|g| *g == 0.0));
    assert!(gr.light.unwrap().iter().any(|g| *g != 0.0));
}

#[test]
fn render_term_matches_field_level_loss() {
    let rig = render_rig();
    let w = LossWeights::default();
    let (b, _) = loss_and_gradient(&rig.model, &rig.cameras, &rig.trace, &rig.batch, &w, RenderMode::Differentiable, 1.0).unwrap();
    let (larch, lparams) = rig.model.light.as_ref().unwrap();
    let light = NeuralLightField::new(larch, lparams);
    let ctx = LossContext {
        light: Some(&light),
        cameras: &rig.cameras,
        trace: rig.trace,
        mode: RenderMode::Differentiable,
    };
    let (_, r) = total_loss(&NeuralSdf::new(&rig.model.sdf_arch, &rig.model.sdf), &ctx, &rig.batch, &w).unwrap();
    assert!((b.render - r.render).abs() < 1e-12);
    assert_eq!(b.skipped_pixels, r.skipped_pixels);
}

fn sphere_scene(n: usize) -> TrainingScene {
    let scene = AnalyticScene::sphere(0.5).unwrap();
    let cloud = sample_scene(&scene, n, &DegradationSpec::default(), 1).unwrap();
    let boundary = vec![BoundaryPoint {
        position: Vec3::new(0.0, 0.0, 1.0),
        target_distance: 0.5,
    }];
    TrainingScene::new(cloud, boundary, vec![], vec![]).unwrap()
}

fn quick_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        n_data: 128,
        n_uniform: 64,
        ..Default::default()
    }
}

fn tiny_model(seed: u64) -> Model {
    Model::init(MlpArchitecture::sdf(vec![16, 16], vec![], 1, 0), None, seed).unwrap()
}

#[test]
fn zero_weights_leave_parameters_unchanged() {
    let scene = sphere_scene(500);
    let cfg = TrainConfig {
        weights: LossWeights::zero(),
        ..quick_config(3)
    };
    let init = tiny_model(1);
    let r = train(&scene, &cfg, TrainState::new(init.clone()), vec![], None).unwrap();
    assert_eq!(r.state.model, init);
    assert_eq!(r.log.len(), 3);
}

#[test]
fn single_point_data_loss_descends() {
    let cloud = OrientedPointCloud::new(vec![OrientedPoint {
        position: Vec3::new(0.2, -0.1, 0.3),
        normal: Vec3::x(),
    }])
    .unwrap();
    let scene = TrainingScene::new(cloud, vec![], vec![], vec![]).unwrap();
    let cfg = TrainConfig {
        n_data: 1,
        n_uniform: 1,
        lr0: 1e-5,
        weights: LossWeights {
            data: 1.0,
            lambda_d: 1.0,
            ..LossWeights::zero()
        },
        ..quick_config(100)
    };
    let r = train(&scene, &cfg, TrainState::new(tiny_model(2)), vec![], None).unwrap();
    assert_eq!(r.resampled_batches, 0);
    let losses: Vec<f64> = r.log.iter().map(|l| LossBreakdown_total(l)).collect();
    assert!(losses[0] > 0.0);
    for w in losses.windows(2) {
        assert!(w[1] < w[0], "{} !< {}", w[1], w[0]);
    }
}

#[allow(non_snake_case)]
fn LossBreakdown_total(line: &str) -> f64 {
    sdfforge::losses::LossBreakdown::parse_log_line(line).unwrap().2.total
}

#[test]
fn runs_are_deterministic_and_resume_exactly() {
    let scene = sphere_scene(2000);
    let cfg = TrainConfig {
        iterations_per_epoch: 2,
        checkpoint_every: Some(3),
        ..quick_config(12)
    };
    let full = train(&scene, &cfg, TrainState::new(tiny_model(3)), vec![], None).unwrap();
    let again = train(&scene, &cfg, TrainState::new(tiny_model(3)), vec![], None).unwrap();
    assert_eq!(full.log, again.log);
    assert_eq!(full.log.len(), 24);

    let dir = tempfile::tempdir().unwrap();
    let first = train_until(&scene, &cfg, TrainState::new(tiny_model(3)), vec![], Some(dir.path()), 7).unwrap();
    assert_eq!(first.state.epoch, 7);
    let (state, log) = load_training(dir.path(), cfg.iterations_per_epoch).unwrap();
    assert_eq!(state, first.state);
    assert_eq!(log.len(), 14);
    let resumed = train(&scene, &cfg, state, log, Some(dir.path())).unwrap();
    assert_eq!(resumed.log.len(), full.log.len());
    for (a, b) in resumed.log.iter().zip(&full.log) {
        assert!((LossBreakdown_total(a) - LossBreakdown_total(b)).abs() <= 1e-10);
    }
    assert_eq!(resumed.state.model, full.state.model);
}

#[test]
fn zero_epochs_checkpoint_equals_initialization() {
    let scene = sphere_scene(200);
    let dir = tempfile::tempdir().unwrap();
    let init = tiny_model(4);
    let r = train(&scene, &quick_config(0), TrainState::new(init.clone()), vec![], Some(dir.path())).unwrap();
    assert_eq!(r.state.model, init);
    let (arch, params) = sdfforge::diffmlp::checkpoint::read_checkpoint(&dir.path().join(SDF_CHECKPOINT)).unwrap();
    assert_eq!(arch, init.sdf_arch);
    for (a, b) in params.values.iter().zip(&init.sdf.values) {
        assert_eq!(*a, *b as f32 as f64);
    }
    let (state, log) = load_training(dir.path(), 1).unwrap();
    assert_eq!(state.model, init);
    assert!(log.is_empty());
}

#[test]
fn non_finite_steps_are_skipped_then_abort() {
    let scene = sphere_scene(200);
    let cfg = quick_config(10);
    let mut model = tiny_model(5);
    model.sdf.values[0] = f64::NAN;
    let mut state = TrainState::new(model);
    let (batch, _) = sample_batch(&mut batch_rng(0, 0), &scene, &cfg).unwrap();
    for _ in 0..2 {
        let r = train_step(&mut state, &scene, &batch, &cfg, 0).unwrap();
        assert!(!r.applied);
    }
    let err = train_step(&mut state, &scene, &batch, &cfg, 0).unwrap_err();
    assert!(matches!(err, sdfforge::Error::NonConvergence(_)), "{err}");
}

fn two_view_scene() -> TrainingScene {
    let cams: Vec<Camera> = [Vec3::new(0.0, -3.0, 0.0), Vec3::new(3.0, 0.0, 0.0)]
        .iter()
        .map(|&c| look_at_camera("v".into(), c, Vec3::zeros(), &Intrinsics::from_fov(8, 8, 40.0)).unwrap())
        .collect();
    let views = cams
        .iter()
        .enumerate()
        .map(|(k, _)| {
            let mut img = Image::new(8, 8);
            let mut mask = Mask {
                width: 8,
                height: 8,
                valid: vec![false; 64],
            };
            // view k has 10 + k valid pixels
            for p in 0..10 + k {
                mask.valid[3 * p + k] = true;
                img.set((3 * p + k) % 8, (3 * p + k) / 8, Vec3::repeat(0.5));
            }
            (img, mask)
        })
        .collect();
    TrainingScene::new(sphere_scene(300).cloud().clone(), vec![], cams, views).unwrap()
}

#[test]
fn batches_are_reproducible_and_in_domain() {
    let scene = two_view_scene();
    let cfg = TrainConfig {
        n_data: 100,
        n_uniform: 500,
        batch_size: 3,
        n_pixels_per_image: 7,
        ..Default::default()
    };
    let (a, ra) = sample_batch(&mut batch_rng(9, 4), &scene, &cfg).unwrap();
    let (b, _) = sample_batch(&mut batch_rng(9, 4), &scene, &cfg).unwrap();
    let (c, _) = sample_batch(&mut batch_rng(9, 5), &scene, &cfg).unwrap();
    assert!(!ra);
    assert_eq!(a.data, b.data);
    assert_eq!(a.uniform, b.uniform);
    assert_eq!(a.pixels, b.pixels);
    assert_ne!(a.uniform, c.uniform);
    assert_eq!(a.pixels.len(), 21);
    assert!(a.uniform.iter().all(|x| Aabb::unit().contains(x)));
    for p in &a.pixels {
        let (i, j) = (p.pixel.0 as usize, p.pixel.1 as usize);
        assert!(scene.views()[p.camera].1.get(i, j));
        assert_eq!(p.rgb, Vec3::repeat(0.5));
    }
    let big = TrainConfig { n_data: 301, ..cfg };
    let (d, flagged) = sample_batch(&mut batch_rng(9, 4), &scene, &big).unwrap();
    assert!(flagged);
    assert_eq!(d.data.len(), 301);
}

#[test]
fn pixel_draws_are_uniform_per_image() {
    let scene = two_view_scene();
    let cfg = TrainConfig {
        batch_size: 10,
        n_pixels_per_image: 1000,
        n_data: 1,
        n_uniform: 1,
        ..Default::default()
    };
    let mut counts = [vec![0usize; 64], vec![0usize; 64]];
    for it in 0..10 {
        let (b, _) = sample_batch(&mut batch_rng(1, it), &scene, &cfg).unwrap();
        for p in &b.pixels {
            counts[p.camera][p.pixel.1 as usize * 8 + p.pixel.0 as usize] += 1;
        }
    }
    let per_view: Vec<usize> = counts.iter().map(|c| c.iter().sum()).collect();
    assert_eq!(per_view.iter().sum::<usize>(), 100_000);
    // 100 image draws over two views; 1 degree of freedom, critical value 6.635 at p = 0.01
    let e = 50.0;
    let chi_views: f64 = per_view.iter().map(|&o| (o as f64 / 1000.0 - e).powi(2) / e).sum();
    assert!(chi_views < 6.635, "{chi_views}");
    // critical values at p = 0.01 for 9 and 10 degrees of freedom
    for (k, crit) in [(0usize, 21.666), (1, 23.209)] {
        let valid: Vec<usize> = counts[k].iter().copied().filter(|&c| c > 0).collect();
        assert_eq!(valid.len(), 10 + k);
        let e = per_view[k] as f64 / valid.len() as f64;
        let chi: f64 = valid.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
        assert!(chi < crit, "view {k}: chi2 {chi}");
    }
}

#[test]
fn short_training_reduces_loss_on_sphere() {
    let scene = sphere_scene(5000);
    let cfg = TrainConfig {
        n_data: 512,
        n_uniform: 256,
        ..quick_config(150)
    };
    let model = Model::init(MlpArchitecture::sdf(vec![32, 32, 32], vec![], 2, 0), None, 6).unwrap();
    let r = train(&scene, &cfg, TrainState::new(model), vec![], None).unwrap();
    let first = LossBreakdown_total(&r.log[0]);
    let last = LossBreakdown_total(r.log.last().unwrap());
    assert!(last < 0.3 * first, "{first} -> {last}");
}

#[test]
fn synthetic_views_feed_pixel_batches() {
    let scene = AnalyticScene::sphere(0.5).unwrap();
    let cams = sdfforge::synth::orbit_cameras(2, 3.0, 10.0, Vec3::zeros(), &Intrinsics::from_fov(16, 16, 30.0)).unwrap();
    let views = render_views(&scene, &cams).unwrap();
    let cloud = sample_scene(&scene, 500, &DegradationSpec::default(), 2).unwrap();
    let ts = TrainingScene::new(cloud, vec![], cams, views).unwrap();
    assert!(ts.has_pixels());
    let cfg = TrainConfig {
        batch_size: 2,
        n_pixels_per_image: 16,
        ..quick_config(2)
    };
    let model = Model::init(
        MlpArchitecture::sdf(vec![16, 16], vec![], 1, 3),
        Some(MlpArchitecture::light_field(vec![8], 3, 1)),
        7,
    )
    .unwrap();
    let r = train(&ts, &cfg, TrainState::new(model), vec![], None).unwrap();
    assert_eq!(r.log.len(), 2);
    let mismatched = Model::init(
        MlpArchitecture::sdf(vec![16], vec![], 1, 3),
        Some(MlpArchitecture::light_field(vec![8], 2, 1)),
        7,
    );
    assert!(mismatched.is_err());
}
