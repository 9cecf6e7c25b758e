use clearfill::completion::{complete_depth, CompletionConfig, CompletionInputs};
use clearfill::heightmap::{backproject_cloud, build_heightmap, Bounds, RigidTransform, Workspace};
use clearfill::io::{load_scene, save_scene};
use clearfill::synthgen::recipe::{generate_scene, BatchConfig};
use clearfill::synthgen::{derive_boundaries, raycast, render_scene, BoundaryParams, Primitive, SceneSpec, Shape};
use clearfill::{
    BoundaryClass, BoundaryMap, CameraIntrinsics, DepthImage, NormalMap, Scene, SceneMetadata, TransparencyMask, Vec3,
};
use proptest::prelude::*;

const W: usize = 48;
const H: usize = 32;

/// Principal point on the pixel grid's mirror axis, so that mirrored rays are mirrored.
fn symmetric_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::new(40.0, 40.0, (W as f64 - 1.0) / 2.0, (H as f64 - 1.0) / 2.0, W, H).unwrap()
}

fn tight() -> CompletionConfig {
    let mut c = CompletionConfig::default();
    c.solver.tolerance = 1e-12;
    c
}

/// Tilted plane with a transparent sphere in front of it and a rectangular hole.
fn scene(tilt: (f64, f64), dist: f64, ball: (f64, f64, f64), hole: (usize, usize, usize, usize)) -> Scene {
    let k = symmetric_intrinsics();
    let n = Vec3::new(tilt.0.sin(), tilt.1.sin(), -1.0).normalize();
    let prims = vec![
        Primitive::opaque(Shape::Plane {
            point: Vec3::new(0.0, 0.0, dist),
            normal: n,
        }),
        Primitive::transparent(Shape::Sphere {
            center: Vec3::new(ball.0, ball.1, dist - 0.1),
            radius: ball.2,
        }),
    ];
    let out = raycast(&k, &prims, 10.0).unwrap();
    let (u0, v0, du, dv) = hole;
    let mask = TransparencyMask::from_fn(W, H, |u, v| {
        out.transparency(&prims).get(u, v) || ((u0..u0 + du).contains(&u) && (v0..v0 + dv).contains(&v))
    })
    .unwrap();
    let b = derive_boundaries(&out.depth, &mask, &BoundaryParams::default()).unwrap();
    let meta = SceneMetadata {
        scene_id: "prop".into(),
        seed: 0,
        primitives: prims,
        support_plane: Some(0),
    };
    Scene::from_ground_truth(k, out.depth, out.normals, mask, b, meta).unwrap()
}

fn mirror<T: Copy>(values: &[T], w: usize) -> Vec<T> {
    let h = values.len() / w;
    (0..w * h).map(|i| values[(i / w) * w + (w - 1 - i % w)]).collect()
}

fn mirrored(s: &Scene) -> Scene {
    let depth = DepthImage::new(W, H, mirror(s.raw_depth.values(), W)).unwrap();
    let normals: Vec<Vec3> = mirror(s.input_normals.values(), W)
        .into_iter()
        .map(|n| Vec3::new(-n.x, n.y, n.z))
        .collect();
    let normals = NormalMap::new(W, H, normals).unwrap();
    let mask = TransparencyMask::new(W, H, mirror(s.input_mask.values(), W)).unwrap();
    let b = BoundaryMap::with_occlusion_prob(
        W,
        H,
        mirror(s.input_boundary.labels(), W),
        mirror(s.input_boundary.occlusion_prob(), W),
    )
    .unwrap();
    Scene::from_ground_truth(s.intrinsics, depth, normals, mask, b, s.metadata.clone()).unwrap()
}

/// A single plane with a hole and a random soft boundary field. Normals are constant,
/// which is what exact mirror equivariance of the one-sided normal stencil needs.
fn plane_strategy() -> impl Strategy<Value = Scene> {
    (
        (-0.5f64..0.5, -0.5f64..0.5),
        0.5f64..1.0,
        (0usize..30, 0usize..20, 2usize..15, 2usize..10),
        proptest::collection::vec(0.0f64..1.0, W * H),
    )
        .prop_map(|(t, d, h, p)| {
            let s = scene(t, d, (5.0, 0.0, 0.01), h);
            let b = BoundaryMap::with_occlusion_prob(W, H, s.input_boundary.labels().to_vec(), p).unwrap();
            Scene { input_boundary: b, ..s }
        })
}

fn scene_strategy() -> impl Strategy<Value = Scene> {
    (
        (-0.5f64..0.5, -0.5f64..0.5),
        0.5f64..1.0,
        (-0.08f64..0.08, -0.05f64..0.05, 0.02f64..0.05),
        (0usize..30, 0usize..20, 2usize..15, 2usize..10),
    )
        .prop_map(|(t, d, b, h)| scene(t, d, b, h))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn mirroring_inputs_mirrors_the_output(s in plane_strategy()) {
        let a = complete_depth(&CompletionInputs::from_scene(&s), &tight()).unwrap();
        let m = mirrored(&s);
        let b = complete_depth(&CompletionInputs::from_scene(&m), &tight()).unwrap();
        let back = mirror(&b.raw, W);
        for (x, y) in a.raw.iter().zip(&back) {
            prop_assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
    }

    #[test]
    fn scaling_all_weights_keeps_the_minimizer(s in scene_strategy(), log_c in -2.0f64..2.0) {
        let base = tight();
        let mut scaled = base;
        scaled.weights = base.weights.scaled(10f64.powf(log_c));
        let a = complete_depth(&CompletionInputs::from_scene(&s), &base).unwrap();
        let b = complete_depth(&CompletionInputs::from_scene(&s), &scaled).unwrap();
        for (x, y) in a.raw.iter().zip(&b.raw) {
            prop_assert!((x - y).abs() < 1e-6);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn generated_scenes_keep_render_invariants(seed in 0u64..1000) {
        let cfg = BatchConfig { count: 1, master_seed: seed, ..Default::default() };
        let s = generate_scene(&cfg, 0).unwrap();
        for (i, n) in s.gt_normals.values().iter().enumerate() {
            if s.gt_depth.is_valid_at(i) {
                prop_assert!((n.norm() - 1.0).abs() < 1e-9);
                prop_assert!(n.z < 0.0);
            }
        }
        // Type II removes the first (transparent) hit, so what remains lies behind it.
        for (r, g) in s.raw_depth.values().iter().zip(s.gt_depth.values()) {
            if *r > 0.0 {
                prop_assert!(*r >= *g);
            }
        }
        // Pipeline inputs already equal ground truth apart from the raw depth.
        prop_assert_eq!(&s.input_mask, &s.gt_mask);
        prop_assert_eq!(&s.input_normals, &s.gt_normals);
    }
}

#[test]
fn saved_scenes_reload_losslessly() {
    let cfg = BatchConfig {
        count: 1,
        master_seed: 21,
        ..Default::default()
    };
    let original = generate_scene(&cfg, 0).unwrap();
    let a = tempfile::tempdir().unwrap();
    save_scene(a.path(), &original).unwrap();
    let loaded = load_scene(a.path()).unwrap();
    // Depth is stored in millimetres; everything else survives exactly.
    for (x, y) in loaded.gt_depth.values().iter().zip(original.gt_depth.values()) {
        assert!((x - y).abs() <= 5e-4 + 1e-12);
    }
    assert_eq!(loaded.gt_mask, original.gt_mask);
    assert_eq!(loaded.input_boundary, original.input_boundary);
    assert_eq!(loaded.metadata, original.metadata);
    for (x, y) in loaded.gt_normals.values().iter().zip(original.gt_normals.values()) {
        assert!((x - y).norm() < 1e-6);
    }
    // Once quantized, a save/load cycle is the identity.
    let b = tempfile::tempdir().unwrap();
    save_scene(b.path(), &loaded).unwrap();
    assert_eq!(load_scene(b.path()).unwrap(), loaded);
}

#[test]
fn sphere_heightmap_peak_is_within_one_cell() {
    // Camera 0.8 m above a table; the sphere top is 0.1 m above the table.
    let spec = SceneSpec {
        scene_id: "ball".into(),
        intrinsics: CameraIntrinsics::d415_like(256, 144),
        primitives: vec![
            Primitive::opaque(Shape::Plane {
                point: Vec3::new(0.0, 0.0, 0.8),
                normal: Vec3::new(0.0, 0.0, -1.0),
            }),
            Primitive::transparent(Shape::Sphere {
                center: Vec3::new(0.0, 0.0, 0.75),
                radius: 0.05,
            }),
        ],
        support_plane: 0,
        seed: 0,
    };
    let s = render_scene(&spec).unwrap();
    let ws = Workspace {
        bounds: Bounds {
            min: [-0.3, -0.2, -0.05],
            max: [0.3, 0.2, 0.3],
        },
        resolution: 0.005,
        cam_to_world: RigidTransform::overhead(0.8),
    };
    let cloud = backproject_cloud(&s.gt_depth, &s.intrinsics, &ws.cam_to_world).unwrap();
    let hm = build_heightmap(&cloud, &ws).unwrap();
    let peak = hm.peak().unwrap();
    assert!(peak <= 0.1 + 1e-9 && peak >= 0.1 - ws.resolution, "peak {peak}");
    assert!(s.gt_boundary.count(BoundaryClass::Occlusion) > 0);
}
