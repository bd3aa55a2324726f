use sdfforge::config::*;
use sdfforge::Error;

#[test]
fn defaults_follow_published_settings() {
    let c = RunConfig::default();
    assert_eq!(c.model.sdf_hidden, vec![512; 8]);
    assert_eq!(c.model.sdf_skip, vec![4]);
    assert_eq!((c.model.pe_octaves, c.model.view_octaves, c.model.descriptor_width), (6, 4, 256));
    assert_eq!(c.model.light_hidden, vec![512; 4]);
    assert_eq!((c.train.epochs, c.train.batch_size), (1800, 8));
    assert_eq!((c.train.n_data, c.train.n_uniform, c.train.n_pixels_per_image), (32768, 16384, 4096));
    assert_eq!(c.train.lr0, 1e-3);
    let w = c.train.weights;
    assert_eq!([w.data, w.boundary, w.render, w.lambda_d, w.lambda_n], [1.0; 5]);
    assert_eq!([w.eikonal, w.hessian, w.minimal_surface], [0.1, 0.01, 0.01]);
    assert_eq!(c.mesh.resolution, 512);
    assert_eq!((c.eval.distance_factor, c.eval.angle_deg), (3.0, 30.0));
}

#[test]
fn round_trip_is_identity() {
    let mut c = RunConfig::default();
    c.train.epochs = 77;
    c.train.normal_weight_second_half = Some(0.1);
    c.train.weights.hessian = 0.0;
    c.eval.density = Some(0.004);
    c.paths.run_dir = Some("out/run".into());
    c.model.sdf_hidden = vec![64, 64];
    c.model.sdf_skip = vec![];
    let text = c.to_toml_string().unwrap();
    let back = RunConfig::from_toml_str(&text).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.to_toml_string().unwrap(), text);
    assert_eq!(RunConfig::from_toml_str(&RunConfig::default().to_toml_string().unwrap()).unwrap(), RunConfig::default());
}

#[test]
fn partial_file_keeps_defaults() {
    let c = RunConfig::from_toml_str("[train]\nepochs = 10\n[train.weights]\nrender = 0.0\n[mesh]\nresolution = 64\n").unwrap();
    assert_eq!(c.train.epochs, 10);
    assert_eq!(c.train.weights.render, 0.0);
    assert_eq!(c.train.weights.eikonal, 0.1);
    assert_eq!(c.mesh.resolution, 64);
    assert_eq!(c.model, ModelConfig::default());
}

#[test]
fn unknown_keys_are_named() {
    for (text, key) in [("[train]\nepoch = 3\n", "epoch"), ("[train.weights]\nlambda_x = 1.0\n", "lambda_x"), ("[meshing]\n", "meshing"), ("colour = 1\n", "colour")] {
        match RunConfig::from_toml_str(text) {
            Err(Error::Config(m)) => assert!(m.contains(key), "{m}"),
            other => panic!("{other:?}"),
        }
    }
}

#[test]
fn invalid_values_are_config_errors() {
    for text in ["[mesh]\nresolution = 1\n", "[train]\nwarmup_fraction = 0.0\n", "[eval]\nangle_deg = -1.0\n", "[tracer]\nmax_steps = 0\n", "[model]\nsdf_skip = [9]\n"] {
        assert!(matches!(RunConfig::from_toml_str(text), Err(Error::Config(_))), "{text}");
    }
}

#[test]
fn tracer_lengths_scale_with_box() {
    let t = TracerConfig::default();
    let p = t.params(&sdfforge::Aabb::cube(2.0));
    let q = sdfforge::tracer::TraceParams::for_box(&sdfforge::Aabb::cube(2.0));
    assert!((p.hit_tol - q.hit_tol).abs() < 1e-15 && (p.t_max - q.t_max).abs() < 1e-12);
    assert_eq!(p.max_steps, q.max_steps);
}
