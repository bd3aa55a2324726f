use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdfforge::pointcloud::*;
use sdfforge::{Aabb, Vec3};

fn random_points(n: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen())).collect()
}

fn brute_knn(points: &[Vec3], q: &Vec3, k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| ((p - q).norm_squared(), i)).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(d2, i)| (i, d2.sqrt())).collect()
}

fn sphere_cloud(n: usize, seed: u64) -> OrientedPointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<OrientedPoint> = (0..n)
        .map(|_| {
            let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize();
            OrientedPoint { position: v, normal: v }
        })
        .collect();
    OrientedPointCloud::new(pts).unwrap()
}

#[test]
fn knn_matches_brute_force_on_large_cloud() {
    let pts = random_points(50_000, 1);
    let tree = KdTree::new(&pts);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let q = Vec3::new(rng.gen_range(-0.2..1.2), rng.gen_range(-0.2..1.2), rng.gen_range(-0.2..1.2));
        assert_eq!(tree.knn(&q, 8), brute_knn(&pts, &q, 8));
    }
}

#[test]
fn radius_query_matches_brute_force() {
    let pts = random_points(3000, 3);
    let tree = KdTree::new(&pts);
    for q in pts.iter().take(50) {
        let expect: Vec<usize> = (0..pts.len()).filter(|&i| (pts[i] - q).norm() < 0.05).collect();
        assert_eq!(tree.within(q, 0.05), expect);
    }
}

proptest! {
    #[test]
    fn knn_exact_on_small_clouds(seed in 0u64..1000, n in 1usize..300, k in 1usize..12) {
        let mut pts = random_points(n, seed);
        // snap to a coarse lattice so ties are common
        for p in pts.iter_mut() { *p = p.map(|v| (v * 8.0).round() / 8.0); }
        let tree = KdTree::new(&pts);
        let q = Vec3::new(0.5, 0.25, 0.75);
        prop_assert_eq!(tree.knn(&q, k), brute_knn(&pts, &q, k));
    }
}

#[test]
fn plane_normals_are_axis_aligned() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pts: Vec<Vec3> = (0..100).map(|_| Vec3::new(rng.gen(), rng.gen(), 0.0)).collect();
    for n in estimate_normals(&pts, 10).unwrap() {
        assert!((n.z.abs() - 1.0).abs() < 1e-6, "{n:?}");
    }
}

#[test]
fn sphere_normals_are_radial() {
    let cloud = sphere_cloud(5000, 5);
    let normals = estimate_normals(cloud.positions(), DEFAULT_NORMAL_K).unwrap();
    for (p, n) in cloud.positions().iter().zip(&normals) {
        let angle = p.normalize().dot(n).abs().min(1.0).acos().to_degrees();
        assert!(angle < 5.0, "angle {angle}");
    }
}

#[test]
fn collinear_neighborhood_is_degenerate() {
    let pts = vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0];
    assert!(matches!(estimate_normals(&pts, 3), Err(sdfforge::Error::DegenerateNeighborhood { .. })));
    let same = vec![Vec3::x(); 5];
    assert!(estimate_normals(&same, 3).is_err());
}

#[test]
fn orientation_follows_camera_side() {
    let pts: Vec<Vec3> = (0..20).map(|i| Vec3::new(i as f64 * 0.1, 0.3, 0.0)).collect();
    let mixed: Vec<Vec3> = (0..20).map(|i| if i % 2 == 0 { Vec3::z() } else { -Vec3::z() }).collect();
    let (up, flagged) = orient_normals(&pts, &mixed, &[Vec3::new(0.0, 0.0, 10.0)], None).unwrap();
    assert_eq!(flagged, 0);
    assert!(up.iter().all(|n| *n == Vec3::z()));
    let (down, _) = orient_normals(&pts, &mixed, &[Vec3::new(0.0, 0.0, -10.0)], None).unwrap();
    assert!(down.iter().all(|n| *n == -Vec3::z()));
    let (_, flagged) = orient_normals(&[Vec3::zeros()], &[Vec3::x()], &[Vec3::z()], None).unwrap();
    assert_eq!(flagged, 1);
}

#[test]
fn sphere_orientation_with_orbit_cameras() {
    let cloud = sphere_cloud(4000, 6);
    let flipped: Vec<Vec3> = cloud.normals().iter().enumerate().map(|(i, n)| if i % 3 == 0 { -n } else { *n }).collect();
    let cams: Vec<Vec3> = (0..8)
        .map(|k| {
            let a = k as f64 * std::f64::consts::TAU / 8.0;
            Vec3::new(3.0 * a.cos(), 3.0 * a.sin(), if k % 2 == 0 { 1.5 } else { -1.5 })
        })
        .collect();
    let (out, _) = orient_normals(cloud.positions(), &flipped, &cams, None).unwrap();
    let outward = out.iter().zip(cloud.positions()).filter(|(n, p)| n.dot(p) > 0.0).count();
    assert!(outward as f64 >= 0.99 * cloud.len() as f64, "{outward}");
}

fn lattice(step: f64, n: usize) -> Vec<OrientedPoint> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            out.push(OrientedPoint {
                position: Vec3::new(i as f64 * step, j as f64 * step, 0.0),
                normal: Vec3::z(),
            });
        }
    }
    out
}

#[test]
fn separated_cloud_is_unchanged() {
    let cloud = OrientedPointCloud::new(lattice(0.125, 12)).unwrap();
    let down = downsample_uniform(&cloud).unwrap();
    assert_eq!(down.points(), cloud.points());
    assert_eq!(down.downsampled_spacing(), Some(0.125));
}

#[test]
fn duplicated_points_keep_one_copy() {
    let base = lattice(0.125, 10);
    let doubled: Vec<OrientedPoint> = base.iter().flat_map(|p| [*p, *p]).collect();
    let down = downsample_uniform(&OrientedPointCloud::new(doubled).unwrap()).unwrap();
    assert_eq!(down.points(), &base[..]);
}

#[test]
fn thinned_random_cloud_respects_spacing() {
    let pts: Vec<OrientedPoint> = random_points(10_000, 7).into_iter().map(|p| OrientedPoint { position: p, normal: Vec3::x() }).collect();
    let cloud = OrientedPointCloud::new(pts).unwrap();
    let down = downsample_uniform(&cloud).unwrap();
    let t = down.downsampled_spacing().unwrap();
    assert!(t > 0.0 && down.len() < cloud.len());
    let p = down.positions();
    for i in 0..p.len() {
        for j in 0..i {
            assert!((p[i] - p[j]).norm() >= t);
        }
    }
}

#[test]
fn downsampling_is_idempotent() {
    let cloud = sphere_cloud(3000, 8);
    let once = downsample_uniform(&cloud).unwrap();
    let twice = downsample_uniform(&once).unwrap();
    assert_eq!(once.points(), twice.points());
    assert_eq!(once.density(), twice.density());
}

#[test]
fn boundary_points_from_cameras() {
    let domain = Aabb::unit();
    let centers = [Vec3::new(0.2, 0.1, 0.0), Vec3::new(0.0, 0.0, 5.0), Vec3::new(0.0, 0.0, 5.0)];
    let forwards = [Vec3::x(), -Vec3::z(), Vec3::z()];
    let (pts, skipped) = make_boundary_points(&centers, &forwards, &domain).unwrap();
    assert_eq!(pts, vec![centers[0], Vec3::new(0.0, 0.0, 1.0)]);
    assert_eq!(skipped, 1);
}

#[test]
fn boundary_distance_point_to_plane() {
    let cloud = OrientedPointCloud::new(vec![OrientedPoint {
        position: Vec3::new(0.0, 0.0, 1.0),
        normal: Vec3::z(),
    }])
    .unwrap();
    assert_eq!(boundary_target_distance(&Vec3::new(0.0, 0.0, 5.0), &cloud, 1, 60.0).unwrap(), 4.0);
}

#[test]
fn boundary_distance_above_dense_plane() {
    let step = 0.02;
    let pts: Vec<OrientedPoint> = lattice(step, 50)
        .into_iter()
        .map(|mut p| {
            p.position -= Vec3::new(0.5, 0.5, 0.0);
            p
        })
        .collect();
    let cloud = OrientedPointCloud::new(pts).unwrap();
    for h in [0.05, 0.3, 1.0] {
        let d = boundary_target_distance(&Vec3::new(0.013, -0.007, h), &cloud, 8, 60.0).unwrap();
        assert!((d - h).abs() <= 2.0 * step, "h {h}: {d}");
    }
}

#[test]
fn perpendicular_neighbor_excluded_then_fallback() {
    // offset lies in the tangent plane: angle 90 degrees
    let p = OrientedPoint {
        position: Vec3::zeros(),
        normal: Vec3::z(),
    };
    let q = OrientedPoint {
        position: Vec3::new(0.0, 0.0, -2.5),
        normal: Vec3::z(),
    };
    let x = Vec3::new(1.0, 0.0, 0.0);
    let single = OrientedPointCloud::new(vec![p]).unwrap();
    assert_eq!(boundary_target_distance(&x, &single, 1, 30.0).unwrap(), 0.0);
    // with a second, aligned neighbour the perpendicular one is dropped
    let pair = OrientedPointCloud::new(vec![p, q]).unwrap();
    assert_eq!(boundary_target_distance(&x, &pair, 2, 30.0).unwrap(), 2.5);
    let far = Vec3::new(0.5, 0.0, 4.0);
    let d = boundary_target_distance(&far, &pair, 2, 30.0).unwrap();
    assert!((d - 5.25).abs() < 1e-12, "{d}");
}

proptest! {
    #[test]
    fn boundary_distance_non_negative(seed in 0u64..200, x in -3.0f64..3.0, y in -3.0f64..3.0, z in -3.0f64..3.0) {
        let cloud = sphere_cloud(200, seed);
        let d = boundary_target_distance(&Vec3::new(x, y, z), &cloud, 4, 60.0).unwrap();
        prop_assert!(d >= 0.0);
    }
}

#[test]
fn ply_round_trip_both_encodings() {
    let cloud = sphere_cloud(50, 9);
    for enc in [PlyEncoding::Ascii, PlyEncoding::BinaryLittleEndian] {
        let bytes = ply::encode_ply_points(cloud.positions(), Some(&cloud.normals()), enc).unwrap();
        let back = ply::parse_ply_points(&bytes).unwrap();
        assert_eq!(back.positions, cloud.positions());
        assert_eq!(back.normals.unwrap(), cloud.normals());
    }
    let bare = ply::parse_ply_points(&ply::encode_ply_points(cloud.positions(), None, PlyEncoding::Ascii).unwrap()).unwrap();
    assert!(bare.normals.is_none());
}

#[test]
fn ply_skips_unknown_properties_and_elements() {
    let mut bytes = b"ply\nformat binary_little_endian 1.0\ncomment test\nelement vertex 2\nproperty float x\nproperty uchar red\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n".to_vec();
    for (p, c) in [([1.0f32, 2.0, 3.0], 7u8), ([4.0, 5.0, 6.0], 9)] {
        bytes.extend_from_slice(&p[0].to_le_bytes());
        bytes.push(c);
        bytes.extend_from_slice(&p[1].to_le_bytes());
        bytes.extend_from_slice(&p[2].to_le_bytes());
    }
    bytes.push(3);
    for i in [0i32, 1, 1] {
        bytes.extend_from_slice(&i.to_le_bytes());
    }
    let pts = ply::parse_ply_points(&bytes).unwrap();
    assert_eq!(pts.positions, vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(4.0, 5.0, 6.0)]);
    assert!(ply::parse_ply_points(b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\n1\n").is_err());
}
