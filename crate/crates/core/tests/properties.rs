use std::f64::consts::PI;

use approx::assert_relative_eq;
use dvf_core::augment::{apply_transform, GlobalTransform, Scene};
use dvf_core::calib::{parse_calib, CameraCalib};
use dvf_core::dataio::{camera_box_to_lidar, lidar_box_to_camera, read_labels, read_velodyne, write_velodyne};
use dvf_core::eval::{ap_r40, bev_iou, iou_3d, Detection, EvalConfig, GroundTruth, IouKind};
use dvf_core::fusion::fuse_level;
use dvf_core::geometry::{Box3D, LidarPoint};
use dvf_core::heatmap::{aggregate_masks, mask_from_box, Box2D, ForegroundHeatmap};
use dvf_core::rng::RandomStream;
use dvf_core::voxelgrid::{build_hierarchy, GridConfig};
use nalgebra::{Point3, Vector3};
use proptest::prelude::*;

fn arb_box() -> impl Strategy<Value = Box3D> {
    (
        -20.0..20.0f64,
        -20.0..20.0f64,
        -2.0..2.0f64,
        0.5..6.0f64,
        0.5..3.0f64,
        0.5..3.0f64,
        -PI..PI,
    )
        .prop_map(|(x, y, z, l, w, h, yaw)| Box3D::new(Point3::new(x, y, z), Vector3::new(l, w, h), yaw))
}

fn arb_near_pair() -> impl Strategy<Value = (Box3D, Box3D)> {
    (arb_box(), -2.0..2.0f64, -2.0..2.0f64, -0.5..0.5f64, -PI..PI).prop_map(|(a, dx, dy, dz, yaw)| {
        let b = Box3D::new(a.center + Vector3::new(dx, dy, dz), a.size.component_mul(&Vector3::new(0.9, 1.1, 1.0)), yaw);
        (a, b)
    })
}

fn wrap(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

fn moved(b: &Box3D, theta: f64, t: Vector3<f64>) -> Box3D {
    let (s, c) = theta.sin_cos();
    let p = b.center;
    Box3D::new(
        Point3::new(c * p.x - s * p.y + t.x, s * p.x + c * p.y + t.y, p.z + t.z),
        b.size,
        b.yaw + theta,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn iou_symmetric_and_bounded((a, b) in arb_near_pair()) {
        let (ab, ba) = (bev_iou(&a, &b).unwrap(), bev_iou(&b, &a).unwrap());
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
        let (ab3, ba3) = (iou_3d(&a, &b).unwrap(), iou_3d(&b, &a).unwrap());
        prop_assert!((ab3 - ba3).abs() < 1e-12);
        prop_assert!(ab3 <= ab + 1e-12, "3D IoU {ab3} above BEV {ab}");
    }

    #[test]
    fn iou_rigid_invariant((a, b) in arb_near_pair(), theta in -PI..PI, tx in -50.0..50.0f64, ty in -50.0..50.0f64) {
        let t = Vector3::new(tx, ty, 0.7);
        let before = iou_3d(&a, &b).unwrap();
        let after = iou_3d(&moved(&a, theta, t), &moved(&b, theta, t)).unwrap();
        prop_assert!((before - after).abs() < 1e-9, "{before} vs {after}");
    }

    #[test]
    fn box_transform_round_trip(b in arb_box(), scale in 0.95..1.05f64, yaw in -PI / 4.0..PI / 4.0, flip: bool) {
        let t = GlobalTransform::new(scale, yaw, flip).unwrap();
        let back = t.invert_box(&t.apply_box(&b));
        assert_relative_eq!(back.center, b.center, epsilon = 1e-9);
        assert_relative_eq!(back.size, b.size, epsilon = 1e-9);
        prop_assert!(wrap(back.yaw - b.yaw).abs() < 1e-9);
    }

    #[test]
    fn transformed_points_stay_in_transformed_boxes(b in arb_box(), u in -0.49..0.49f64, v in -0.49..0.49f64, w in -0.49..0.49f64,
                                                      scale in 0.95..1.05f64, yaw in -PI / 4.0..PI / 4.0, flip: bool) {
        let p = b.local_to_world(&Point3::new(u * b.size.x, v * b.size.y, w * b.size.z));
        let t = GlobalTransform::new(scale, yaw, flip).unwrap();
        prop_assert!(t.apply_box(&b).contains(&t.apply_point(&p)));
    }

    #[test]
    fn velodyne_round_trip(raw in prop::collection::vec(any::<[f32; 4]>(), 0..64)) {
        let points: Vec<LidarPoint> = raw.iter().map(|r| LidarPoint::new(r[0], r[1], r[2], r[3])).collect();
        let bytes = write_velodyne(&points);
        prop_assert_eq!(bytes.len(), 16 * points.len());
        prop_assert_eq!(write_velodyne(&read_velodyne(&bytes).unwrap()), bytes);
    }

    #[test]
    fn mask_aggregate_is_max(boxes in prop::collection::vec((0.0..40.0f64, 0.0..40.0f64, 0.0..20.0f64, 0.0..20.0f64, 0.0..=1.0f64), 0..6)) {
        let masks: Vec<ForegroundHeatmap> = boxes
            .iter()
            .map(|&(u, v, du, dv, c)| mask_from_box(&Box2D::new(u, v, u + du, v + dv, c).unwrap(), 48, 32).unwrap())
            .collect();
        let all = aggregate_masks(&masks, 48, 32).unwrap();
        let zero = ForegroundHeatmap::zeros(48, 32).unwrap();
        let mut with_zero = masks.clone();
        with_zero.push(zero);
        prop_assert_eq!(&aggregate_masks(&with_zero, 48, 32).unwrap(), &all);
        for m in &masks {
            prop_assert!(m.values().iter().zip(all.values()).all(|(a, b)| a <= b));
        }
    }

    #[test]
    fn bilinear_sample_stays_in_hull(vals in prop::collection::vec(0.0..=1.0f32, 12), u in -1.0..4.0f64, v in -1.0..3.0f64) {
        let map = ForegroundHeatmap::from_values(4, 3, vals.clone()).unwrap();
        let s = map.sample(u, v);
        if u < 0.0 || v < 0.0 || u > 3.0 || v > 2.0 {
            prop_assert_eq!(s, 0.0);
        } else {
            let lo = vals.iter().cloned().fold(f32::INFINITY, f32::min) as f64;
            let hi = vals.iter().cloned().fold(0.0f32, f32::max) as f64;
            prop_assert!(s >= lo - 1e-12 && s <= hi + 1e-12);
        }
    }

    #[test]
    fn ap_ignores_score_scale_and_input_order(seed in any::<u64>(), factor in 0.1..10.0f64) {
        let mut rng = RandomStream::new(seed);
        let size = Vector3::new(2.0, 2.0, 1.5);
        let gts: Vec<GroundTruth> = (0..4)
            .map(|g| GroundTruth { frame: 0, box3d: Box3D::new(Point3::new(5.0 * g as f64, 0.0, 0.0), size, 0.0), class: "Car".into() })
            .collect();
        let mut dets: Vec<Detection> = (0..6)
            .map(|k| Detection {
                frame: 0,
                box3d: Box3D::new(Point3::new(5.0 * rng.index(4) as f64 + 0.3 * rng.unit(), 0.0, 0.0), size, 0.0),
                score: 0.1 + 0.1 * k as f64 + 0.01 * rng.unit(),
                class: "Car".into(),
            })
            .collect();
        let cfg = EvalConfig::default();
        let base = ap_r40(&dets, &gts, "Car", &cfg, IouKind::ThreeD).unwrap();
        prop_assert!((0.0..=1.0).contains(&base));
        dets.reverse();
        prop_assert_eq!(ap_r40(&dets, &gts, "Car", &cfg, IouKind::ThreeD).unwrap(), base);
        for d in &mut dets {
            d.score *= factor;
        }
        prop_assert_eq!(ap_r40(&dets, &gts, "Car", &cfg, IouKind::ThreeD).unwrap(), base);
    }

    #[test]
    fn label_box_round_trip(x in 5.0..60.0f64, y in -20.0..20.0f64, yaw in -PI..PI) {
        let calib = CameraCalib::forward_pinhole(721.5, 609.6, 172.9, 1242, 375);
        let b = Box3D::new(Point3::new(x, y, -0.4), Vector3::new(3.9, 1.6, 1.5), yaw);
        let line = lidar_box_to_camera(&b, "Car", &calib, Some(0.5)).unwrap().to_line();
        let rec = read_labels(&line).unwrap().remove(0);
        let back = camera_box_to_lidar(&rec, &calib).unwrap();
        // the label text keeps two decimals
        prop_assert!((back.center - b.center).norm() < 0.02);
        prop_assert!(wrap(back.yaw - b.yaw).abs() < 0.01);
    }

    #[test]
    fn dilation_only_adds_voxels(seed in any::<u64>()) {
        let mut rng = RandomStream::new(seed);
        let points: Vec<LidarPoint> = (0..40)
            .map(|_| LidarPoint::new((rng.unit() * 16.0) as f32, (rng.unit() * 16.0) as f32, (rng.unit() * 16.0) as f32, 0.5))
            .collect();
        let mut cfg = GridConfig { range_min: [0.0; 3], range_max: [16.0; 3], resolution: [1.0; 3], num_levels: 4, dilation_radius: 0 };
        let plain = build_hierarchy(&points, &cfg).unwrap();
        cfg.dilation_radius = 1;
        let grown = build_hierarchy(&points, &cfg).unwrap();
        for (p, g) in plain.levels.iter().zip(&grown.levels) {
            prop_assert!(p.indices.iter().all(|i| g.position_of(i).is_some()));
        }
        // every coarse voxel's parent-children relation holds without dilation
        for w in plain.levels.windows(2) {
            for idx in &w[0].indices {
                prop_assert!(w[1].position_of(&idx.map(|c| c / 2)).is_some());
            }
        }
    }

    #[test]
    fn fusion_weights_match_samples(seed in any::<u64>()) {
        let mut rng = RandomStream::new(seed);
        let cfg = GridConfig { range_min: [0.0, -8.0, -2.0], range_max: [16.0, 8.0, 2.0], resolution: [0.5; 3], num_levels: 3, dilation_radius: 1 };
        let points: Vec<LidarPoint> = (0..200)
            .map(|_| LidarPoint::new((2.0 + rng.unit() * 14.0) as f32, (rng.unit() * 16.0 - 8.0) as f32, (rng.unit() * 4.0 - 2.0) as f32, rng.unit() as f32))
            .collect();
        let calib = CameraCalib::forward_pinhole(50.0, 32.0, 24.0, 64, 48);
        let map = ForegroundHeatmap::from_values(64, 48, (0..64 * 48).map(|_| rng.unit() as f32).collect()).unwrap();
        let h = build_hierarchy(&points, &cfg).unwrap();
        for level in &h.levels {
            let f = fuse_level(level, &cfg, &calib, &map, None).unwrap();
            for i in 0..f.len() {
                let px = &f.pixel_locs[i];
                let want = if px.in_front { map.sample(px.u, px.v) } else { 0.0 };
                prop_assert_eq!(f.rhos[i], want);
                for (a, b) in f.feature(i).iter().zip(level.feature(i)) {
                    prop_assert!((a - (1.0 + want) * b).abs() <= 1e-12 * b.abs().max(1e-300));
                }
            }
        }
    }

    #[test]
    fn scene_transform_keeps_sensor_frame_boxes(b in arb_box(), scale in 0.95..1.05f64, yaw in -PI / 4.0..PI / 4.0, flip: bool) {
        let scene = Scene::new(vec![LidarPoint::new(1.0, 2.0, 0.5, 0.3)], vec![b.clone()], vec!["Car".into()], CameraCalib::kitti_reference());
        let t = GlobalTransform::new(scale, yaw, flip).unwrap();
        let moved = apply_transform(&scene, &t).unwrap();
        prop_assert!(apply_transform(&moved, &t).is_err());
        let back = &moved.boxes_in_sensor_frame()[0];
        assert_relative_eq!(back.center, b.center, epsilon = 1e-9);
    }
}

#[test]
fn calib_text_round_trip() {
    let calib = CameraCalib::kitti_reference();
    let again = parse_calib(&calib.to_kitti_text()).unwrap();
    assert_relative_eq!(*again.proj(), *calib.proj(), epsilon = 1e-12);
    assert_relative_eq!(*again.rect(), *calib.rect(), epsilon = 1e-12);
    assert_relative_eq!(*again.lidar_to_cam(), *calib.lidar_to_cam(), epsilon = 1e-12);
}
