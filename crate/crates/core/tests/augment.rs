use mlcl_core::augment::{apply, apply_raster, make_views, sample_transform, AugmentConfig, Axis, Transform, TransformSpec};
use mlcl_core::rpmgen::{generate_instance, instance_seed, Layout, Raster};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn involutions() -> Vec<TransformSpec> {
    [Transform::HFlip, Transform::VFlip, Transform::Transpose]
        .into_iter()
        .map(|t| TransformSpec::single(t).unwrap())
        .collect()
}

#[test]
fn labels_kept_and_involutions_restore() {
    let cfg = AugmentConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for i in 0..500u64 {
        let layout = Layout::ALL[(i % 3) as usize];
        let inst = generate_instance(layout, instance_seed(21, i), 28).unwrap();
        let spec = sample_transform(&mut rng, 28, &cfg);
        let out = apply(&inst, &spec);
        assert_eq!(out.structure, inst.structure);
        assert_eq!(out.correct_index, inst.correct_index);
        assert_eq!(out.panels, inst.panels);
        for (a, b) in inst.rasters.iter().zip(&out.rasters) {
            assert_eq!(apply_raster(a, &spec), *b);
        }
        for t in involutions() {
            assert_eq!(apply(&apply(&inst, &t), &t).rasters, inst.rasters);
        }
    }
}

#[test]
fn every_kind_is_sampled_and_never_empty() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut counts = std::collections::BTreeMap::new();
    for _ in 0..10_000 {
        let s = sample_transform(&mut rng, 28, &AugmentConfig::default());
        assert!(!s.is_empty());
        for t in s.transforms() {
            *counts.entry(t.name()).or_insert(0) += 1;
            if let Transform::Rotate(a) = t {
                assert!((0.0..360.0).contains(a));
            }
        }
    }
    assert_eq!(counts.len(), 6);
}

#[test]
fn quarter_turn_mode_uses_right_angles() {
    let cfg = AugmentConfig { free_rotation: false };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        for t in sample_transform(&mut rng, 28, &cfg).transforms() {
            if let Transform::Rotate(a) = t {
                assert_eq!(a % 90.0, 0.0);
            }
        }
    }
}

#[test]
fn views_share_labels_and_usually_differ() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut differ = 0;
    for i in 0..100 {
        let inst = generate_instance(Layout::Center, instance_seed(8, i), 28).unwrap();
        let (a, b) = make_views(&inst, &mut rng, &AugmentConfig::default());
        assert_eq!(a.structure, b.structure);
        assert_eq!(a.correct_index, b.correct_index);
        differ += usize::from(a.rasters != b.rasters);
    }
    assert!(differ >= 90, "{differ}");
}

fn raster_strategy() -> impl Strategy<Value = Raster> {
    (1u16..20).prop_flat_map(|n| {
        prop::collection::vec(any::<u8>(), usize::from(n).pow(2)).prop_map(move |px| Raster::new(n, px).unwrap())
    })
}

proptest! {
    #[test]
    fn flips_and_transpose_are_involutions(r in raster_strategy()) {
        for t in involutions() {
            prop_assert_eq!(apply_raster(&apply_raster(&r, &t), &t), r.clone());
        }
    }

    #[test]
    fn identity_shuffle_and_full_roll(r in raster_strategy(), grid in 2u8..=3) {
        let id = TransformSpec::single(Transform::GridShuffle { grid, perm: (0..grid * grid).collect() }).unwrap();
        prop_assert_eq!(apply_raster(&r, &id), r.clone());
        for axis in [Axis::Horizontal, Axis::Vertical] {
            let full = TransformSpec::single(Transform::Roll { axis, offset: r.size() }).unwrap();
            prop_assert_eq!(apply_raster(&r, &full), r.clone());
        }
    }

    #[test]
    fn rolls_compose(r in raster_strategy(), a in 0u16..20, b in 0u16..20) {
        let roll = |o| TransformSpec::single(Transform::Roll { axis: Axis::Horizontal, offset: o }).unwrap();
        let n = r.size();
        prop_assert_eq!(
            apply_raster(&apply_raster(&r, &roll(a % n)), &roll(b % n)),
            apply_raster(&r, &roll((a + b) % n))
        );
    }
}
