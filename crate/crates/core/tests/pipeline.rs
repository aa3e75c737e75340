use mmreg::eval::{compute_tre, transform_landmarks, Mapping};
use mmreg::features::BuiltinMatcher;
use mmreg::io::{Direction, PipelineConfig};
use mmreg::pipeline::register_pair;
use mmreg::search::exhaustive_align;
use mmreg::synth::{make_synthetic_pair, SyntheticSpec};
use mmreg::{AffineTransform2D, RegistrationConfig};

fn quick_config() -> RegistrationConfig {
    RegistrationConfig {
        angles: vec![0.0, 90.0, 180.0, 270.0],
        resolutions: vec![128, 256],
        ..RegistrationConfig::default()
    }
}

fn spec(seed: u64, rotation: f64, translation: (f64, f64)) -> SyntheticSpec {
    SyntheticSpec {
        seed,
        size: 256,
        rotation,
        translation,
        deform_amplitude: 0.0,
    }
}

#[test]
fn untransformed_pair_aligns_near_identity() {
    let pair = make_synthetic_pair(&spec(4, 0.0, (0.0, 0.0)));
    assert!(pair.affine.max_abs_diff(&AffineTransform2D::identity()) < 1e-12);
    let cfg = quick_config();
    let outcome = exhaustive_align(&pair.he, &pair.shg, &cfg, &BuiltinMatcher::from_config(&cfg)).unwrap();
    assert_eq!(outcome.candidates.len(), 8);
    let t = outcome.transform;
    assert!(t.rotation_degrees().abs() < 1.0, "{t:?}");
    assert!(t.translation_part().norm() < 3.0, "{t:?}");
}

#[test]
fn ground_truth_maps_landmarks_exactly() {
    let pair = make_synthetic_pair(&spec(2, 45.0, (20.0, -15.0)));
    let by_affine = transform_landmarks(&pair.landmarks_target, Mapping::Affine(&pair.affine));
    assert!(compute_tre(&pair.landmarks_source, &by_affine).unwrap().max < 1e-9);
    let by_field = transform_landmarks(&pair.landmarks_target, Mapping::Field(&pair.field));
    assert!(compute_tre(&pair.landmarks_source, &by_field).unwrap().max < 1e-9);
}

#[test]
fn synthetic_pairs_are_deterministic() {
    let s = SyntheticSpec {
        deform_amplitude: 3.0,
        ..spec(9, 30.0, (5.0, 5.0))
    };
    let (a, b) = (make_synthetic_pair(&s), make_synthetic_pair(&s));
    assert_eq!(a.he, b.he);
    assert_eq!(a.shg, b.shg);
    assert_eq!(a.field, b.field);
}

#[test]
fn both_directions_agree_on_a_quarter_turn() {
    let pair = make_synthetic_pair(&spec(6, 90.0, (6.0, -4.0)));
    let mut cfg = PipelineConfig {
        registration: quick_config(),
        deformable_enabled: false,
        ..PipelineConfig::default()
    };
    let matcher = BuiltinMatcher::from_config(&cfg.registration);

    let forward = register_pair(&pair.he, &pair.shg, &cfg, &matcher, false).unwrap();
    assert!(
        forward.transform.max_abs_diff(&pair.affine) < 0.05 * 256.0,
        "{:?}",
        forward.transform
    );
    let mapped = transform_landmarks(&pair.landmarks_target, Mapping::Affine(&forward.transform));
    assert!(compute_tre(&pair.landmarks_source, &mapped).unwrap().mean < 3.0);

    cfg.direction = Direction::ShgToHe;
    let backward = register_pair(&pair.shg, &pair.he, &cfg, &matcher, false).unwrap();
    assert_eq!((backward.field.width(), backward.field.height()), (256, 256));
    let mapped = transform_landmarks(&pair.landmarks_source, Mapping::Affine(&backward.transform));
    assert!(compute_tre(&pair.landmarks_target, &mapped).unwrap().mean < 3.0);
}

#[test]
fn deformable_stage_keeps_the_report_consistent() {
    let pair = make_synthetic_pair(&SyntheticSpec {
        size: 128,
        deform_amplitude: 2.0,
        ..spec(1, 0.0, (0.0, 0.0))
    });
    let mut cfg = PipelineConfig {
        registration: RegistrationConfig {
            angles: vec![0.0],
            resolutions: vec![128],
            ..RegistrationConfig::default()
        },
        ..PipelineConfig::default()
    };
    for level in &mut cfg.registration.levels {
        level.iterations = 10;
    }
    let matcher = BuiltinMatcher::from_config(&cfg.registration);
    let run = register_pair(&pair.he, &pair.shg, &cfg, &matcher, false).unwrap();
    let report = &run.report;
    assert!(report.deformable_enabled);
    assert_eq!(report.working_size, Some([128, 128]));
    assert_eq!(report.candidates.len(), 1);
    assert_eq!(report.objective.len(), 3);
    assert_eq!(report.folding.fold_count, 0);
    for level in &report.objective {
        assert!(level.last.total <= level.first.total);
    }
}
