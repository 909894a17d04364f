use carvebot_core::control::PlantModel;
use carvebot_core::Point2;
use carvebot_harness::config::HarnessConfig;
use carvebot_harness::metrics::{consistency_report, trim_accuracy, Bands, TrimMode};
use carvebot_harness::pipeline::{compare_trim, conservation_error, run_pipeline, Rig};
use carvebot_harness::runlog::RunStore;
use carvebot_harness::scene::MeatSpec;

/// Camera square to the arm, exact survey, noiseless plant.
pub fn aligned_rectangle_config() -> HarnessConfig {
    let mut cfg = HarnessConfig::default();
    cfg.loin = MeatSpec::rectangle(24.0, 10.0);
    cfg.calibration.theta0 = 0.0;
    cfg.calibration.marker_noise_m = 0.0;
    cfg.plant = PlantModel::ideal();
    cfg.pipeline.n_slices = 4;
    cfg
}

/// Area of a polygon by counting grid-cell centers inside it.
fn raster_area(poly: &[Point2], step: f64) -> f64 {
    let b = carvebot_core::geometry::Bounds::of(poly).unwrap();
    let mut hits = 0usize;
    let mut y = b.min.y + step / 2.0;
    while y < b.max.y {
        let mut x = b.min.x + step / 2.0;
        while x < b.max.x {
            if carvebot_core::geometry::contains_point(poly, Point2::new(x, y)) {
                hits += 1;
            }
            x += step;
        }
        y += step;
    }
    hits as f64 * step * step
}

#[test]
fn rectangle_slices_are_identical() {
    let out = run_pipeline(&aligned_rectangle_config()).unwrap();
    let r = consistency_report(&out.log, &Bands::default());
    assert_eq!(r.slice_thickness_cm.count, 4);
    assert!((r.slice_thickness_cm.mean - 6.0).abs() < 1e-9, "{:?}", r.slice_thickness_cm);
    assert!(r.slice_thickness_cm.variance < 1e-18, "{:?}", r.slice_thickness_cm);
    assert!(r.slice_weight_g.variance < 1e-12 * r.slice_weight_g.mean.powi(2), "{:?}", r.slice_weight_g);
    assert!(conservation_error(&out.log) < 1e-9);
}

#[test]
fn loin_run_conserves_area() {
    let out = run_pipeline(&HarnessConfig::default()).unwrap();
    let log = &out.log;
    assert_eq!(log.slices.len(), 9);
    assert_eq!(log.chops.len(), 9);
    assert!(!log.cubes.is_empty());
    let err = conservation_error(log);
    assert!(err < 1e-9, "{err}");

    // slice areas against a sampling oracle, independent of the clipper
    for s in &log.slices {
        let sampled: f64 = s.polygons.iter().map(|p| raster_area(p, 0.02)).sum();
        assert!((sampled - s.area_cm2).abs() < 0.01 * s.area_cm2 + 0.05, "{sampled} vs {}", s.area_cm2);
    }

    let r = consistency_report(log, &Bands::default());
    assert!(r.slice_thickness_cm.variance >= 0.0);
    assert!((0.0..=1.0).contains(&r.cube_fraction_in_band));
    assert!((0.0..=1.0).contains(&r.slice_fraction_in_weight_band));
    let expected_t = log.slices.iter().map(|s| s.area_cm2 / s.length_cm).sum::<f64>() / 9.0;
    assert!((r.slice_thickness_cm.mean - expected_t).abs() < 1e-12);

    let acc = trim_accuracy(log);
    assert_eq!(acc.cuts.len(), log.trims.len());
    for t in &log.trims {
        assert_eq!(t.mode, TrimMode::Trim);
        assert!(t.fat_removed_cm2 > 0.5 * t.fat_area_cm2, "{t:?}");
    }
    for st in &log.stages {
        let tr = st.tracking.unwrap();
        assert!(tr.max_error_m < 5e-3, "{} {:?}", st.stage, tr);
    }

    let dir = tempfile::tempdir().unwrap();
    let store = RunStore::open(dir.path()).unwrap();
    let mut saved = out.log.clone();
    let shots: Vec<(&str, &_)> = out.snapshots.iter().map(|(n, s)| (n.as_str(), s)).collect();
    let id = store.save(&mut saved, &shots).unwrap();
    let back = store.load(&id).unwrap();
    assert_eq!(back, saved);
    assert!(dir.path().join(&id).join("loin.ppm").exists());
}

#[test]
fn trim_keeps_more_meat_than_a_straight_cut() {
    let cfg = HarnessConfig::default();
    let rig = Rig::from_config(&cfg).unwrap();
    for seed in 0..3 {
        let c = compare_trim(&rig, &MeatSpec::random_chop(100 + seed), &cfg.pipeline).unwrap();
        assert!(c.trim.meat_weight_removed_g < c.point_to_point.meat_weight_removed_g, "{c:?}");
    }
}
