use mlcl_core::losses::{
    aux_loss, brute_force_mlc_oracle, build_positive_mask, ce_answer_loss, combined_loss, contrastive_loss,
    contrastive_node, mlc_loss, mlc_loss_with_negatives, softmax, supcon_loss, ContrastBatch, ContrastOptions,
    LossWeights, NegativeScope, Normalization,
};
use mlcl_core::numerics::{Graph, Tensor};
use mlcl_core::rules::{Grammar, MetaTarget, Scheme};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_rows(rng: &mut impl Rng, n: usize, p: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * p);
    for _ in 0..n {
        let v: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        out.extend(v.iter().map(|x| x / norm));
    }
    out
}

fn labels(rng: &mut impl Rng, b: usize, singleton: bool) -> Vec<Vec<usize>> {
    (0..b)
        .map(|_| {
            let n = if singleton { 1 } else { rng.random_range(1..=3) };
            let mut all: Vec<usize> = (0..8).collect();
            all.shuffle(rng);
            all.truncate(n);
            all
        })
        .collect()
}

fn batch(rng: &mut impl Rng, b: usize, p: usize, k: usize, tau: f64, singleton: bool) -> ContrastBatch {
    let z = Tensor::new(vec![b, p], unit_rows(rng, b, p)).unwrap();
    let zneg = (k > 0).then(|| Tensor::new(vec![b, k, p], unit_rows(rng, b * k, p)).unwrap());
    ContrastBatch::new(z, zneg, labels(rng, b, singleton), tau).unwrap()
}

const TAUS: [f64; 4] = [0.05, 0.1, 0.5, 1.0];

fn off() -> ContrastOptions {
    ContrastOptions {
        negatives: NegativeScope::Off,
        ..Default::default()
    }
}

#[test]
fn oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for t in 0..100 {
        let b = 2 + t % 15;
        let tau = TAUS[t % 4];
        let single = batch(&mut rng, b, 6, 0, tau, true);
        assert!((supcon_loss(&single).unwrap() - brute_force_mlc_oracle(&single, off()).unwrap()).abs() <= 1e-12);
        let multi = batch(&mut rng, b, 6, 7, tau, false);
        assert!((mlc_loss(&multi).unwrap() - brute_force_mlc_oracle(&multi, off()).unwrap()).abs() <= 1e-12);
        let with = mlc_loss_with_negatives(&multi).unwrap();
        let oracle = brute_force_mlc_oracle(&multi, ContrastOptions::default()).unwrap();
        assert!((with - oracle).abs() <= 1e-12, "{with} {oracle}");
        for opts in [
            ContrastOptions {
                normalization: Normalization::Doubled,
                negatives: NegativeScope::Others,
            },
            ContrastOptions {
                normalization: Normalization::Doubled,
                negatives: NegativeScope::All,
            },
        ] {
            let a = contrastive_loss(&multi, opts).unwrap();
            assert!((a - brute_force_mlc_oracle(&multi, opts).unwrap()).abs() <= 1e-12);
        }
    }
}

#[test]
fn singleton_labels_reduce_to_supcon() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for t in 0..100 {
        let b = batch(&mut rng, 2 + t % 15, 5, 0, TAUS[t % 4], true);
        assert!((mlc_loss(&b).unwrap() - supcon_loss(&b).unwrap()).abs() <= 1e-12);
    }
}

#[test]
fn disjoint_labels_give_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let z = Tensor::new(vec![4, 3], unit_rows(&mut rng, 4, 3)).unwrap();
    let b = ContrastBatch::new(z, None, vec![vec![0], vec![1, 2], vec![3], vec![4, 5]], 0.1).unwrap();
    assert_eq!(mlc_loss(&b).unwrap(), 0.0);
}

#[test]
fn orthogonal_negatives_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (b, k, half) = (5usize, 7usize, 4usize);
    for tau in [0.1, 1.0, 1e6] {
        let mut z = vec![0.0; b * 2 * half];
        for (i, row) in unit_rows(&mut rng, b, half).chunks(half).enumerate() {
            z[i * 2 * half..i * 2 * half + half].copy_from_slice(row);
        }
        let mut zn = vec![0.0; b * k * 2 * half];
        for (i, row) in unit_rows(&mut rng, b * k, half).chunks(half).enumerate() {
            zn[i * 2 * half + half..(i + 1) * 2 * half].copy_from_slice(row);
        }
        let labelsets = vec![vec![0], vec![0, 1], vec![1], vec![2, 0], vec![2]];
        let batch = ContrastBatch::new(
            Tensor::new(vec![b, 2 * half], z.clone()).unwrap(),
            Some(Tensor::new(vec![b, k, 2 * half], zn).unwrap()),
            labelsets,
            tau,
        )
        .unwrap();
        let dot = |i: usize, j: usize| (0..2 * half).map(|c| z[i * 2 * half + c] * z[j * 2 * half + c]).sum::<f64>();
        // every anchor has a positive here, each gains log((D+M)/D)
        let mut expected = 0.0;
        for i in 0..b {
            let d: f64 = (0..b).filter(|j| *j != i).map(|j| (dot(i, j) / tau).exp()).sum();
            expected += ((d + (b * k) as f64) / d).ln();
        }
        let gap = mlc_loss_with_negatives(&batch).unwrap() - mlc_loss(&batch).unwrap();
        assert!((gap - expected).abs() < 1e-12, "tau {tau}: {gap} vs {expected}");
        if tau > 1e5 {
            let limit = b as f64 * (((b - 1 + b * k) as f64) / (b - 1) as f64).ln();
            assert!((gap - limit).abs() < 1e-4);
        }
    }
}

#[test]
fn sharper_temperature_pushes_harder_on_hard_negative() {
    // anchor 0 and 1 are positives, 2 is a close negative, 3 a far one
    let rows = vec![vec![1.0, 0.0, 0.0], vec![0.6, 0.8, 0.0], vec![0.9, 0.0, 0.43588989435406733], vec![-1.0, 0.0, 0.0]];
    let labelsets = vec![vec![0], vec![0], vec![1], vec![2]];
    let grad_norm = |tau: f64| {
        let mut g = Graph::new();
        let z = g.leaf(Tensor::from_rows(&rows).unwrap());
        let loss = contrastive_node(&mut g, z, None, &labelsets, tau, ContrastOptions::default()).unwrap();
        let grads = g.backward(loss).unwrap();
        let d = grads.var(z).unwrap();
        d.row(2).iter().map(|x| x * x).sum::<f64>().sqrt()
    };
    assert!(grad_norm(0.1) > grad_norm(0.5));
}

#[test]
fn weights_and_aux() {
    let w = LossWeights::default();
    assert_eq!((w.gamma, w.beta), (1.0, 10.0));
    assert_eq!(combined_loss(LossWeights::new(0.0, 10.0).unwrap(), 3.0, 0.5), 5.0);
    assert_eq!(combined_loss(LossWeights::new(1.0, 0.0).unwrap(), 3.0, 0.5), 3.0);
    assert!(LossWeights::new(-1.0, 1.0).is_err());
    assert!(LossWeights::new(0.0, 0.0).unwrap().check_pretraining().is_err());

    let t = MetaTarget::from_bit_string(Grammar::PairStyle, Scheme::Dense, "110000101").unwrap();
    let confident: Vec<f64> = t.to_f64().iter().map(|y| if *y > 0.5 { 40.0 } else { -40.0 }).collect();
    assert!(aux_loss(&confident, &t).unwrap() < 1e-15);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let x: Vec<f64> = (0..9).map(|_| rng.random_range(-4.0..4.0)).collect();
        let y = t.to_f64();
        let hand: f64 = x
            .iter()
            .zip(&y)
            .map(|(x, y)| {
                let s = 1.0 / (1.0 + (-x).exp());
                -(y * s.ln() + (1.0 - y) * (1.0 - s).ln())
            })
            .sum::<f64>()
            / 9.0;
        assert!((aux_loss(&x, &t).unwrap() - hand).abs() < 1e-12);
    }
}

#[test]
fn answer_cross_entropy() {
    let mut s = [0.0; 8];
    s[2] = 60.0;
    assert!(ce_answer_loss(&s, 3).unwrap() < 1e-20);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let s: Vec<f64> = (0..8).map(|_| rng.random_range(-3.0..3.0)).collect();
        let k = rng.random_range(1..=8u8);
        let naive = -(s[usize::from(k) - 1].exp() / s.iter().map(|x| x.exp()).sum::<f64>()).ln();
        assert!((ce_answer_loss(&s, k).unwrap() - naive).abs() < 1e-12);
        assert!((softmax(&s).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn mask_corner_cases() {
    let same = build_positive_mask(&vec![vec![1, 2]; 4]).unwrap();
    let disjoint = build_positive_mask(&[vec![0], vec![1], vec![2]]).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            assert_eq!(same.get(i, j), i != j);
        }
    }
    assert!(disjoint.counts().iter().all(|c| *c == 0));
}

#[test]
fn missing_negatives_is_an_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let b = batch(&mut rng, 4, 3, 0, 0.1, false);
    assert!(mlc_loss_with_negatives(&b).is_err());
}

fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize) -> f64 {
    let h = 1e-5;
    let mut a = x.to_vec();
    let mut b = x.to_vec();
    a[i] += h;
    b[i] -= h;
    (f(&a) - f(&b)) / (2.0 * h)
}

#[test]
fn contrastive_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (b, k, p) = (5, 3, 4);
    let labelsets = labels(&mut rng, b, false);
    for opts in [
        ContrastOptions::default(),
        ContrastOptions {
            normalization: Normalization::Doubled,
            negatives: NegativeScope::Others,
        },
        off(),
    ] {
        let x: Vec<f64> = (0..b * p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let xn: Vec<f64> = (0..b * k * p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let eval = |x: &[f64], xn: &[f64], grad: bool| {
            let mut g = Graph::new();
            let a = g.leaf(Tensor::new(vec![b, p], x.to_vec()).unwrap());
            let an = g.leaf(Tensor::new(vec![b * k, p], xn.to_vec()).unwrap());
            let z = g.normalize_rows(a).unwrap();
            let zn = g.normalize_rows(an).unwrap();
            let l = contrastive_node(&mut g, z, Some(zn), &labelsets, 0.5, opts).unwrap();
            let v = g.value(l).item();
            let gr = grad.then(|| {
                let gs = g.backward(l).unwrap();
                (gs.var(a).unwrap().data().to_vec(), gs.var(an).map(|t| t.data().to_vec()))
            });
            (v, gr)
        };
        let (_, Some((ga, gn))) = eval(&x, &xn, true) else { unreachable!() };
        let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-3);
        for i in 0..x.len() {
            let n = central_difference(|v| eval(v, &xn, false).0, &x, i);
            assert!(rel(ga[i], n) < 1e-5, "{opts:?} z[{i}]: {} vs {n}", ga[i]);
        }
        for i in 0..xn.len() {
            let n = central_difference(|v| eval(&x, v, false).0, &xn, i);
            let a = gn.as_ref().map_or(0.0, |g| g[i]);
            assert!(rel(a, n) < 1e-5, "{opts:?} zneg[{i}]: {a} vs {n}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn permutation_leaves_loss_unchanged(seed in any::<u64>(), b in 2usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch0 = batch(&mut rng, b, 5, 7, 0.1, false);
        let mut perm: Vec<usize> = (0..b).collect();
        perm.shuffle(&mut rng);
        let p = 5;
        let z: Vec<f64> = perm.iter().flat_map(|&i| batch0.z.row(i).to_vec()).collect();
        let zn_src = batch0.zneg.as_ref().unwrap().data();
        let zn: Vec<f64> = perm.iter().flat_map(|&i| zn_src[i * 7 * p..(i + 1) * 7 * p].to_vec()).collect();
        let labels: Vec<Vec<usize>> = perm.iter().map(|&i| batch0.labelsets[i].clone()).collect();
        let permuted = ContrastBatch::new(
            Tensor::new(vec![b, p], z).unwrap(),
            Some(Tensor::new(vec![b, 7, p], zn).unwrap()),
            labels,
            0.1,
        ).unwrap();
        prop_assert!((mlc_loss(&batch0).unwrap() - mlc_loss(&permuted).unwrap()).abs() <= 1e-12);
        prop_assert!((mlc_loss_with_negatives(&batch0).unwrap() - mlc_loss_with_negatives(&permuted).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn extra_negatives_never_lower_the_loss(seed in any::<u64>(), b in 2usize..12, k in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = batch(&mut rng, b, 4, k, TAUS[(seed % 4) as usize], false);
        let base = mlc_loss(&batch).unwrap();
        let others = ContrastOptions { negatives: NegativeScope::Others, ..Default::default() };
        prop_assert!(contrastive_loss(&batch, others).unwrap() >= base);
        prop_assert!(mlc_loss_with_negatives(&batch).unwrap() >= base);
    }

    #[test]
    fn mask_is_symmetric(seed in any::<u64>(), b in 2usize..16) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = build_positive_mask(&labels(&mut rng, b, false)).unwrap();
        for i in 0..b {
            prop_assert!(!m.get(i, i));
            prop_assert_eq!(m.count(i), (0..b).filter(|j| m.get(i, *j)).count());
            for j in 0..b {
                prop_assert_eq!(m.get(i, j), m.get(j, i));
            }
        }
    }
}
