use noisybox::geometry::{point_in_box, wrap_angle_residual};
use noisybox::scenegen::{
    coordinate_errors, corrupt_labels, generate_corpus, generate_scene, CorruptionSpec, SceneSpec,
    BACKGROUND,
};
use proptest::prelude::*;

fn corruption() -> CorruptionSpec {
    CorruptionSpec {
        fraction: 0.3,
        stds: [0.5, 0.5, 0.5, 0.4, 0.4, 0.4, 0.3],
        seed: 1,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generation_is_deterministic(seed in 0u64..1000, index in 0u64..1000) {
        let spec = SceneSpec { seed, ..SceneSpec::default() };
        let a = generate_scene(&spec, index).unwrap();
        let b = generate_scene(&spec, index).unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let (ca, ea) = corrupt_labels(&a, &corruption(), index).unwrap();
        let (cb, eb) = corrupt_labels(&b, &corruption(), index).unwrap();
        prop_assert_eq!(ca, cb);
        prop_assert_eq!(ea, eb);
    }

    #[test]
    fn object_points_lie_in_their_box(seed in 0u64..1000, index in 0u64..1000) {
        let s = generate_scene(&SceneSpec { seed, ..SceneSpec::default() }, index).unwrap();
        prop_assert_eq!(s.points.len(), s.prov.len());
        for (p, &k) in s.points.iter().zip(&s.prov) {
            if k != BACKGROUND {
                prop_assert!(point_in_box(p, &s.gt_boxes[k as usize]), "{:?} outside box {}", p, k);
            }
        }
    }

    #[test]
    fn injected_errors_are_recorded_exactly(seed in 0u64..1000, index in 0u64..1000) {
        let s = generate_scene(&SceneSpec { seed, ..SceneSpec::default() }, index).unwrap();
        let (c, errors) = corrupt_labels(&s, &corruption(), index).unwrap();
        prop_assert_eq!(c.pseudo_boxes.len(), s.gt_boxes.len());
        for ((p, g), e) in c.pseudo_boxes.iter().zip(&s.gt_boxes).zip(&errors) {
            let (pa, ga) = (p.to_array(), g.to_array());
            for i in 0..6 {
                prop_assert_eq!(e[i], (pa[i] - ga[i]).abs());
            }
            prop_assert_eq!(e[6], wrap_angle_residual(p.theta, g.theta));
            prop_assert_eq!(*e, coordinate_errors(p, g));
        }
    }
}

#[test]
fn corruption_rate_is_close_to_requested() {
    let corpus = generate_corpus(&SceneSpec::default(), 60, 1, Some(&corruption())).unwrap();
    let errs: Vec<&[f64; 7]> = corpus
        .train_errors
        .as_ref()
        .unwrap()
        .iter()
        .flatten()
        .collect();
    let corrupted = errs.iter().filter(|e| e.iter().any(|&v| v > 0.0)).count();
    let rate = corrupted as f64 / errs.len() as f64;
    assert!(
        (rate - 0.3).abs() < 0.08,
        "rate {rate} over {} boxes",
        errs.len()
    );
}
