use std::collections::{BTreeSet, HashSet};

use mlcl_core::rpmgen::{
    decode_dataset, encode_dataset, generate_dataset, generate_instance, instance_seed, rasterize, read_dataset,
    rule_report, sample_structure, verify, write_dataset, Layout, PanelSpec, BACKGROUND,
};
use mlcl_core::rules::{AbstractStructure, Grammar, Rule};
use mlcl_core::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn exactly_one_valid_answer_per_instance() {
    for layout in Layout::ALL {
        let d = generate_dataset(layout, 1000, 11, 12, 1).unwrap();
        for inst in &d.instances {
            assert_eq!(verify(inst).unwrap(), vec![inst.correct_index], "seed {}", inst.seed);
            let grammar = inst.structure.grammar();
            assert!((1..=grammar.max_rules()).contains(&inst.structure.len()));
            let distinct: HashSet<&PanelSpec> = inst.choices().iter().collect();
            assert_eq!(distinct.len(), 8);
        }
    }
}

#[test]
fn distractors_break_a_named_rule() {
    for layout in Layout::ALL {
        for i in 0..200 {
            let inst = generate_instance(layout, instance_seed(5, i), 12).unwrap();
            for choice in 0..8 {
                let report = rule_report(&inst, choice).unwrap();
                assert_eq!(report.len(), inst.structure.len());
                let all = report.iter().all(|(_, ok)| *ok);
                assert_eq!(all, choice + 1 == usize::from(inst.correct_index));
            }
        }
    }
}

/// Each of the answer's object count, type, size and color is shared by
/// exactly half of the choices (or all of them), so no choice-only statistic
/// singles the answer out.
#[test]
fn pair_style_answers_are_balanced_among_choices() {
    for layout in [Layout::Center, Layout::Grid2x2] {
        for i in 0..300 {
            let inst = generate_instance(layout, instance_seed(8, i), 12).unwrap();
            let key = |p: &PanelSpec| {
                let o = p.objects();
                [o.len() as u8, o[0].kind, o[0].size, o[0].color]
            };
            let choices = inst.choices();
            let answer = key(&choices[usize::from(inst.correct_index) - 1]);
            for a in 0..4 {
                let shared = choices.iter().filter(|c| key(c)[a] == answer[a]).count();
                assert!(shared == 4 || shared == 8, "{layout} seed {} attribute {a}: {shared}", inst.seed);
            }
        }
    }
}

#[test]
fn most_central_choice_is_not_the_answer_cue() {
    let d = generate_dataset(Layout::Center, 2000, 13, 28, 1).unwrap();
    let mut hits = 0;
    for inst in &d.instances {
        let px = |c: usize| inst.rasters[8 + c].pixels();
        let l1 = |x: usize, y: usize| -> u64 { px(x).iter().zip(px(y)).map(|(&a, &b)| u64::from(a.abs_diff(b))).sum() };
        let central = (0..8).min_by_key(|&x| (0..8).map(|y| l1(x, y)).sum::<u64>()).unwrap();
        hits += usize::from(central + 1 == usize::from(inst.correct_index));
    }
    let p = hits as f64 / 2000.0;
    let sd = (0.125f64 * 0.875 / 2000.0).sqrt();
    assert!((p - 0.125).abs() < 3.0 * sd, "{p}");
}

#[test]
fn correct_index_is_uniform() {
    let n = 1000usize;
    let mut hist = [0usize; 8];
    for i in 0..n {
        let inst = generate_instance(Layout::Center, instance_seed(77, i as u64), 8).unwrap();
        hist[usize::from(inst.correct_index) - 1] += 1;
    }
    let p: f64 = 1.0 / 8.0;
    let mean = n as f64 * p;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    for h in hist {
        assert!((h as f64 - mean).abs() <= 3.0 * sd, "{hist:?}");
    }
}

#[test]
fn rule_coverage_over_sampled_structures() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for layout in Layout::ALL {
        let mut seen = BTreeSet::new();
        for _ in 0..10_000 {
            let s = sample_structure(layout, &mut rng);
            for r in s.rules() {
                r.validate().unwrap();
                seen.insert(*r);
            }
        }
        let active: BTreeSet<Rule> = layout.active_rules().into_iter().collect();
        assert_eq!(seen, active, "{layout}");
    }
}

#[test]
fn replacing_answer_with_context_panel_breaks_constant_type() {
    let mut found = false;
    for i in 0..200 {
        let mut inst = generate_instance(Layout::Center, instance_seed(3, i), 8).unwrap();
        if !inst.structure.contains(&"[Constant,Type]".parse().unwrap()) {
            continue;
        }
        let k = usize::from(inst.correct_index) - 1;
        // pick a context panel from another row whose type differs
        let row_type = inst.panels[6].objects()[0].kind;
        let Some(j) = (0..6).find(|j| inst.panels[*j].objects()[0].kind != row_type) else {
            continue;
        };
        inst.panels[8 + k] = inst.panels[j].clone();
        assert!(!verify(&inst).unwrap().contains(&inst.correct_index));
        found = true;
        break;
    }
    assert!(found);
}

#[test]
fn empty_structure_is_rejected() {
    assert!(matches!(
        AbstractStructure::new(Grammar::PairStyle, []),
        Err(Error::EmptyStructure)
    ));
}

#[test]
fn same_spec_renders_identically() {
    let inst = generate_instance(Layout::ShapeGrid, 9, 28).unwrap();
    for p in &inst.panels {
        assert_eq!(rasterize(p, 28), rasterize(p, 28));
    }
    assert!(rasterize(&PanelSpec::empty(3), 28).pixels().iter().all(|p| *p == BACKGROUND));
}

#[test]
fn file_round_trip_and_header_count() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.mlcl");
    let d = generate_dataset(Layout::Grid2x2, 10_000, 4, 6, 1).unwrap();
    write_dataset(&d, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], b"MLCL");
    assert_eq!(u32::from_le_bytes(bytes[10..14].try_into().unwrap()), 10_000);
    assert_eq!(read_dataset(&path).unwrap(), d);
}

#[test]
fn missing_file_is_io_error() {
    assert!(matches!(read_dataset("/nonexistent/x.mlcl"), Err(Error::Io { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generation_is_deterministic(seed in any::<u64>(), layout in 0u8..3) {
        let layout = Layout::from_code(layout).unwrap();
        prop_assert_eq!(generate_instance(layout, seed, 16).unwrap(), generate_instance(layout, seed, 16).unwrap());
    }

    #[test]
    fn corrupted_byte_is_detected(seed in any::<u64>(), pos in any::<prop::sample::Index>(), flip in 1u8..=255) {
        let d = generate_dataset(Layout::ShapeGrid, 2, seed, 8, 1).unwrap();
        let mut bytes = encode_dataset(&d).unwrap();
        let i = pos.index(bytes.len());
        bytes[i] ^= flip;
        prop_assert!(decode_dataset(&bytes).is_err());
    }
}
