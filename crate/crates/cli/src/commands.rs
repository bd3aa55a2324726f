use std::fs;
use std::path::{Path, PathBuf};

use sdfforge::config::RunConfig;
use sdfforge::field::{NeuralLightField, NeuralSdf};
use sdfforge::image::Image;
use sdfforge::mesher::{extract_mesh, read_mesh, write_obj, write_ply_mesh, TriangleMesh};
use sdfforge::metrics::{evaluate_clouds, psnr, sample_mesh_uniform};
use sdfforge::pointcloud::ply::{read_ply_points, write_ply_points, PlyEncoding};
use sdfforge::pointcloud::*;
use sdfforge::synth::{render_views, sample_scene, DegradationSpec, SceneSpec};
use sdfforge::tracer::{read_cameras, render_image, write_cameras, Camera};
use sdfforge::trainer::{load_training, normalize_scene, train as run_training, Model, SceneTransform, TrainState, TrainingScene, DEFAULT_PADDING, STATE_FILE};
use sdfforge::{Aabb, Error, Result, Vec3};

use crate::files::*;
use crate::{EvalArgs, TrainArgs};

/// Clean surface samples written next to a synthetic dataset, per noisy sample.
const GT_SAMPLES_PER_POINT: usize = 4;
/// Target sample count when the evaluation density is derived from a mesh.
const DERIVED_SAMPLES: f64 = 1e5;

pub fn synth(spec_path: &Path, out: &Path, force: bool) -> Result<()> {
    let text = fs::read_to_string(spec_path).map_err(|e| Error::Config(format!("{}: {e}", spec_path.display())))?;
    let spec = SceneSpec::parse(&text)?;
    check_output(&out.join(POINTS), force)?;
    fs::create_dir_all(out)?;
    let cloud = sample_scene(&spec.scene, spec.n_points, &spec.degradation, spec.seed)?;
    let gt = sample_scene(&spec.scene, GT_SAMPLES_PER_POINT * spec.n_points, &DegradationSpec::default(), spec.seed.wrapping_add(1))?;
    let cams = spec.cameras()?;
    fs::write(out.join(SCENE_SPEC), spec.to_toml()?)?;
    write_ply_points(&out.join(POINTS), cloud.positions(), Some(&cloud.normals()), PlyEncoding::BinaryLittleEndian)?;
    write_ply_points(&out.join(GT_POINTS), gt.positions(), Some(&gt.normals()), PlyEncoding::BinaryLittleEndian)?;
    write_cameras(&out.join(CAMERAS), &cams)?;
    if !cams.is_empty() {
        fs::create_dir_all(out.join(IMAGES))?;
        fs::create_dir_all(out.join(MASKS))?;
        for (cam, (img, mask)) in cams.iter().zip(render_views(&spec.scene, &cams)?) {
            img.write_ppm(&image_path(out, cam))?;
            mask.write_pgm(&mask_path(out, cam))?;
        }
    }
    println!("wrote {} points, {} views to {}", cloud.len(), cams.len(), out.display());
    Ok(())
}

pub fn preprocess(data: &Path, input: Option<&Path>, cameras: Option<&Path>, force: bool) -> Result<()> {
    let input = input.map(Path::to_path_buf).unwrap_or_else(|| data.join(POINTS));
    let cam_path = cameras.map(Path::to_path_buf).unwrap_or_else(|| data.join(CAMERAS));
    require(&input)?;
    require(&cam_path)?;
    check_output(&data.join(PROCESSED), force)?;
    check_output(&data.join(BOUNDARY), force)?;
    let raw = read_ply_points(&input)?;
    let cams = read_cameras(&cam_path)?;
    if cams.is_empty() {
        return Err(Error::Format(format!("{} lists no cameras", cam_path.display())));
    }
    let centers: Vec<Vec3> = cams.iter().map(Camera::center).collect();
    let normals = match raw.normals {
        Some(n) => n,
        None => {
            log::info!("estimating normals (k = {DEFAULT_NORMAL_K})");
            let n = estimate_normals(&raw.positions, DEFAULT_NORMAL_K)?;
            let (n, ambiguous) = orient_normals(&raw.positions, &n, &centers, None)?;
            if ambiguous > 0 {
                log::warn!("{ambiguous} normals are perpendicular to their camera ray");
            }
            n
        }
    };
    let cloud = downsample_uniform(&OrientedPointCloud::from_parts(&raw.positions, &normals)?)?;
    let (t, _, _) = normalize_scene(&cloud, &cams, DEFAULT_PADDING)?;
    let domain = Aabb::new(t.to_scene(&Vec3::repeat(-1.0)), t.to_scene(&Vec3::repeat(1.0)));
    let forwards: Vec<Vec3> = cams.iter().map(Camera::forward).collect();
    let (positions, skipped) = make_boundary_points(&centers, &forwards, &domain)?;
    if skipped > 0 {
        log::warn!("{skipped} cameras look away from the scene box; no boundary point for them");
    }
    let boundary = boundary_points(&positions, &cloud, DEFAULT_BOUNDARY_K, DEFAULT_BOUNDARY_ANGLE)?;
    write_ply_points(&data.join(PROCESSED), cloud.positions(), Some(&cloud.normals()), PlyEncoding::BinaryLittleEndian)?;
    fs::write(data.join(BOUNDARY), format_boundary(&boundary))?;
    println!(
        "{} -> {} points (spacing {:.6}), {} boundary points",
        raw.positions.len(),
        cloud.len(),
        cloud.density(),
        boundary.len()
    );
    Ok(())
}

/// `a.b.c=value`; values use TOML syntax and fall back to plain strings.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| Error::Config(format!("override `{spec}` is not KEY=VALUE")))?;
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| Error::Config(format!("`{p}` in `{key}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut table = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            toml::from_str::<toml::Table>(&text).map_err(|e| Error::Config(format!("{}: {}", p.display(), e.message())))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    RunConfig::from_toml_str(&table.to_string())
}

fn run_config(run: &Path) -> Result<RunConfig> {
    let p = run.join(RUN_CONFIG);
    require(&p)?;
    RunConfig::load(&p)
}

pub fn train(a: &TrainArgs, force: bool) -> Result<()> {
    let mut cfg = if a.resume && a.config.is_none() { run_config(&a.run)? } else { load_config(a.config.as_deref(), &a.overrides)? };
    if a.resume && a.config.is_none() {
        let mut table: toml::Table = toml::from_str(&cfg.to_toml_string()?).map_err(|e| Error::Config(e.message().to_string()))?;
        for o in &a.overrides {
            apply_override(&mut table, o)?;
        }
        cfg = RunConfig::from_toml_str(&table.to_string())?;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    cfg.validate()?;
    let data = &a.data;
    require(&data.join(PROCESSED))?;
    require(&data.join(BOUNDARY))?;
    let raw = read_ply_points(&data.join(PROCESSED))?;
    let normals = raw.normals.ok_or_else(|| Error::Format("processed cloud has no normals".into()))?;
    let cloud = OrientedPointCloud::from_parts(&raw.positions, &normals)?;
    let boundary = parse_boundary(&fs::read_to_string(data.join(BOUNDARY))?)?;
    let cams = read_cameras(&data.join(CAMERAS))?;
    let views = if cfg.model.light_field && cfg.train.weights.render > 0.0 { read_views(data, &cams)? } else { Vec::new() };
    let (t, ncloud, ncams) = normalize_scene(&cloud, &cams, DEFAULT_PADDING)?;
    let nboundary = boundary.iter().map(|b| t.boundary_to_normalized(b)).collect();
    let (ncams, views) = if views.is_empty() { (Vec::new(), Vec::new()) } else { (ncams, views) };
    let mut scene = TrainingScene::new(ncloud, nboundary, ncams, views)?;
    scene.trace = cfg.tracer.params(&Aabb::unit());

    let (state, log) = if a.resume {
        let (state, log) = load_training(&a.run, cfg.train.iterations_per_epoch)?;
        let saved = read_transform(&a.run.join(TRANSFORM))?;
        if saved != t {
            return Err(Error::Format("dataset normalization differs from the run being resumed".into()));
        }
        log::info!("resuming at epoch {}", state.epoch);
        (state, log)
    } else {
        check_output(&a.run.join(STATE_FILE), force)?;
        let light = if scene.has_pixels() { Some(cfg.model.light_arch()?) } else { None };
        (TrainState::new(Model::init(cfg.model.sdf_arch()?, light, cfg.train.seed)?), Vec::new())
    };
    fs::create_dir_all(&a.run)?;
    cfg.save(&a.run.join(RUN_CONFIG))?;
    write_transform(&a.run.join(TRANSFORM), &t)?;
    let data_abs = fs::canonicalize(data).unwrap_or_else(|_| data.clone());
    fs::write(a.run.join(DATA_REF), format!("{}\n", data_abs.display()))?;
    let report = run_training(&scene, &cfg.train, state, log, Some(&a.run))?;
    if let Some(last) = report.log.last() {
        println!("{last}");
    }
    println!(
        "trained {} epochs ({} skipped steps) into {}",
        report.state.epoch,
        report.skipped_steps,
        a.run.display()
    );
    Ok(())
}

fn load_model(run: &Path) -> Result<(RunConfig, SceneTransform, Model)> {
    let cfg = run_config(run)?;
    let t = read_transform(&run.join(TRANSFORM))?;
    let (state, _) = load_training(run, cfg.train.iterations_per_epoch)?;
    Ok((cfg, t, state.model))
}

fn write_mesh(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("ply") => write_ply_mesh(path, mesh),
        _ => write_obj(path, mesh),
    }
}

pub fn mesh(run: &Path, resolution: Option<usize>, out: Option<&Path>, force: bool) -> Result<()> {
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| run.join(MESH));
    check_output(&out, force)?;
    let (cfg, t, model) = load_model(run)?;
    let res = resolution.unwrap_or(cfg.mesh.resolution);
    if res < 2 {
        return Err(Error::Config("resolution must be at least 2".into()));
    }
    let field = NeuralSdf::new(&model.sdf_arch, &model.sdf);
    let mesh = extract_mesh(&field, &Aabb::unit(), [res; 3], cfg.mesh.iso)?;
    if mesh.is_empty() {
        return Err(Error::EmptyOutput("the field has no zero crossing inside the domain".into()));
    }
    let mesh = mesh.map_vertices(|v| t.to_scene(v)).with_vertex_normals();
    write_mesh(&out, &mesh)?;
    println!(
        "{} vertices, {} triangles, Euler characteristic {} -> {}",
        mesh.vertices.len(),
        mesh.triangles.len(),
        mesh.euler_characteristic(),
        out.display()
    );
    Ok(())
}

fn data_dir_of(run: &Path) -> Result<PathBuf> {
    let p = run.join(DATA_REF);
    require(&p)?;
    Ok(PathBuf::from(fs::read_to_string(p)?.trim()))
}

pub fn render(run: &Path, cameras: Option<&Path>, out: Option<&Path>, force: bool) -> Result<()> {
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| run.join(RENDERS));
    let (cfg, t, model) = load_model(run)?;
    let (larch, lparams) = model.light.as_ref().ok_or_else(|| Error::Format("run has no light field; train with images".into()))?;
    let cam_path = match cameras {
        Some(c) => c.to_path_buf(),
        None => data_dir_of(run)?.join(CAMERAS),
    };
    require(&cam_path)?;
    let cams = read_cameras(&cam_path)?;
    let sdf = NeuralSdf::new(&model.sdf_arch, &model.sdf);
    let light = NeuralLightField::new(larch, lparams);
    let params = cfg.tracer.params(&Aabb::unit());
    fs::create_dir_all(&out)?;
    for cam in &cams {
        let path = out.join(format!("{}.ppm", cam.name));
        check_output(&path, force)?;
        render_image(&sdf, &light, &t.camera_to_normalized(cam), &params)?.write_ppm(&path)?;
    }
    println!("rendered {} views into {}", cams.len(), out.display());
    Ok(())
}

enum Geometry {
    Mesh(TriangleMesh),
    Cloud(OrientedPointCloud),
}

fn read_geometry(path: &Path) -> Result<Geometry> {
    require(path)?;
    let mesh = read_mesh(path)?;
    if !mesh.triangles.is_empty() {
        return Ok(Geometry::Mesh(mesh));
    }
    let is_ply = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("ply"));
    if !is_ply {
        return Err(Error::Format(format!("{} has no faces", path.display())));
    }
    let p = read_ply_points(path)?;
    let n = p.normals.ok_or_else(|| Error::Format(format!("{}: point clouds need normals for evaluation", path.display())))?;
    Ok(Geometry::Cloud(OrientedPointCloud::from_parts(&p.positions, &n)?))
}

fn is_image_input(p: &Path) -> bool {
    p.is_dir() || p.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("ppm"))
}

fn eval_images(pred: &Path, gt: &Path) -> Result<String> {
    let pairs: Vec<(String, PathBuf, PathBuf)> = if pred.is_dir() {
        let mut names: Vec<String> = fs::read_dir(gt)?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".ppm"))
            .collect();
        names.sort();
        names.into_iter().map(|n| (n.trim_end_matches(".ppm").to_string(), pred.join(&n), gt.join(&n))).collect()
    } else {
        vec![("image".into(), pred.to_path_buf(), gt.to_path_buf())]
    };
    if pairs.is_empty() {
        return Err(Error::Format(format!("no .ppm images in {}", gt.display())));
    }
    let mut out = String::new();
    let mut sum = 0.0;
    for (name, p, g) in &pairs {
        require(p)?;
        let v = psnr(&Image::read_ppm(p)?, &Image::read_ppm(g)?)?;
        out.push_str(&format!("psnr_{name}={v:?}\n"));
        sum += v;
    }
    out.push_str(&format!("psnr_mean={:?}\n", sum / pairs.len() as f64));
    Ok(out)
}

pub fn eval(a: &EvalArgs, force: bool) -> Result<()> {
    if let Some(out) = &a.out {
        check_output(out, force)?;
    }
    let cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let text = if is_image_input(&a.pred) && is_image_input(&a.gt) {
        let kv = eval_images(&a.pred, &a.gt)?;
        print!("{kv}");
        kv
    } else {
        let seed = a.seed.unwrap_or(cfg.eval.seed);
        let pred = read_geometry(&a.pred)?;
        let gt = read_geometry(&a.gt)?;
        let density = match (a.density.or(cfg.eval.density), &gt) {
            (Some(d), _) => d,
            (None, Geometry::Cloud(c)) => c.density(),
            (None, Geometry::Mesh(m)) => (m.area() / DERIVED_SAMPLES).sqrt(),
        };
        if !(density > 0.0) {
            return Err(Error::Config(format!("evaluation density must be positive, got {density}")));
        }
        let to_cloud = |g: Geometry, s: u64| match g {
            Geometry::Mesh(m) => sample_mesh_uniform(&m, density, s),
            Geometry::Cloud(c) => Ok(c),
        };
        let p = to_cloud(pred, seed)?;
        let g = to_cloud(gt, seed.wrapping_add(1))?;
        let factor = a.distance_factor.unwrap_or(cfg.eval.distance_factor);
        let angle = a.angle.unwrap_or(cfg.eval.angle_deg);
        let report = evaluate_clouds(&p, &g, density, factor * density, angle)?;
        print!("{}", report.to_text());
        let kv = format!("seed={seed}\n{}", report.to_key_values());
        print!("{kv}");
        kv
    };
    if let Some(out) = &a.out {
        fs::write(out, text)?;
    }
    Ok(())
}
