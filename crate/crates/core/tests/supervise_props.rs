use approx::assert_abs_diff_eq;
use depthprior::supervise::{
    ablation_weight, build_strat_masks, dlw_weight, effective_rates, object_weights, quantile,
    strat_gradient_check, stratified_loss, stratum_losses, weighted_total_loss, CutMode,
    DepthValue, ImageLosses, LevelLoss, ObjectDepth, ObjectLoss, StratConfig, StratMasks,
    StratNormalization, ToySample, WeightingMode,
};
use depthprior::{Error, NormalizedDepthMap};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn obj(image: &str, d: f64, cls: f64, bx: f64) -> ObjectLoss {
    ObjectLoss {
        image_id: image.into(),
        object_index: 0,
        cls_loss: cls,
        box_loss: bx,
        depth_norm: d,
        depth_raw: None,
    }
}

#[test]
fn weight_examples() {
    assert_eq!(dlw_weight(0.0, 1.0), 2.0);
    assert_abs_diff_eq!(dlw_weight(0.5, 1.0), 1.0 + 0.5f64.exp(), epsilon = 1e-15);
    let n = DepthValue::Normalized;
    assert_eq!(
        ablation_weight(n(0.3), &WeightingMode::Linear).unwrap(),
        0.3
    );
    assert_eq!(
        ablation_weight(n(0.5), &WeightingMode::Quadratic).unwrap(),
        0.25
    );
    assert_eq!(
        ablation_weight(n(0.25), &WeightingMode::InvOnly).unwrap(),
        0.75
    );
    assert_eq!(
        ablation_weight(n(0.25), &WeightingMode::ExpNoinv).unwrap(),
        0.75f64.exp()
    );
    assert_eq!(
        ablation_weight(DepthValue::Raw(7.5), &WeightingMode::RawD).unwrap(),
        7.5
    );
    assert!(matches!(
        ablation_weight(n(0.5), &WeightingMode::RawD),
        Err(Error::Domain(_))
    ));
    assert!(matches!(
        ablation_weight(DepthValue::Raw(0.5), &WeightingMode::Linear),
        Err(Error::Domain(_))
    ));
    assert!(matches!(
        ablation_weight(n(1.5), &WeightingMode::Linear),
        Err(Error::Domain(_))
    ));
    assert!(WeightingMode::Dlw { alpha: 0.0 }.validate().is_err());
}

#[test]
fn group_modes_use_means() {
    let objs: Vec<ObjectDepth> = [("a", 0.2), ("a", 0.6), ("b", 0.7)]
        .iter()
        .map(|&(i, d)| ObjectDepth {
            image_id: i.into(),
            depth_norm: d,
            depth_raw: None,
        })
        .collect();
    let bw = object_weights(&objs, &WeightingMode::Bw { alpha: 1.0 }).unwrap();
    assert!(bw.iter().all(|&w| (w - (1.0 + 0.5f64.exp())).abs() < 1e-12));
    let iw = object_weights(&objs, &WeightingMode::Iw { alpha: 2.0 }).unwrap();
    assert_abs_diff_eq!(iw[0], 1.0 + 2.0 * 0.4f64.exp(), epsilon = 1e-12);
    assert_eq!(iw[0], iw[1]);
    assert_abs_diff_eq!(iw[2], 1.0 + 2.0 * 0.7f64.exp(), epsilon = 1e-12);
    let err = object_weights(&objs, &WeightingMode::RawD).unwrap_err();
    assert!(err.to_string().contains("\"a\""), "{err}");
}

#[test]
fn weighted_loss_examples() {
    let dlw = WeightingMode::Dlw { alpha: 1.0 };
    assert_eq!(
        weighted_total_loss(&[obj("a", 0.0, 1.0, 1.0)], &dlw).unwrap(),
        4.0
    );
    let ones: Vec<ObjectLoss> = (0..4).map(|i| obj("a", 1.0, i as f64, 0.5)).collect();
    assert_eq!(
        weighted_total_loss(&ones, &WeightingMode::Linear).unwrap(),
        (0.0 + 1.0 + 2.0 + 3.0 + 2.0) / 4.0
    );
    assert!(matches!(
        weighted_total_loss(&[], &dlw),
        Err(Error::Domain(_))
    ));
    assert!(weighted_total_loss(&[obj("a", 0.1, -1.0, 0.0)], &dlw).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let alpha = rng.random_range(0.1..10.0);
        let objs: Vec<ObjectLoss> = (0..5)
            .map(|_| {
                obj(
                    "a",
                    rng.random(),
                    rng.random_range(0.0..3.0),
                    rng.random_range(0.0..3.0),
                )
            })
            .collect();
        let mut want = 0.0;
        for o in &objs {
            want += (1.0 + alpha * o.depth_norm.exp()) * (o.cls_loss + o.box_loss);
        }
        want /= 5.0;
        let got = weighted_total_loss(&objs, &WeightingMode::Dlw { alpha }).unwrap();
        assert!((got - want).abs() <= 1e-9);
    }
}

proptest! {
    #[test]
    fn dlw_bounds_and_monotonicity(d in 0.0f64..=1.0, dd in 0.0f64..0.5, a in 0.01f64..10.0, da in 0.0f64..5.0) {
        let w = dlw_weight(d, a);
        prop_assert!(w >= 1.0 + a - 1e-12 && w <= 1.0 + a * std::f64::consts::E + 1e-12);
        prop_assert!(dlw_weight((d + dd).min(1.0), a) >= w);
        prop_assert!(dlw_weight(d, a + da) >= w);
    }
}

fn nmap(w: usize, h: usize, v: Vec<f64>) -> NormalizedDepthMap {
    NormalizedDepthMap::new(w, h, v).unwrap()
}

/// Linear-interpolation quantile computed from the ordered statistics.
fn quantile_oracle(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (s.len() - 1) as f64 * q;
    let i = h.floor() as usize;
    if i + 1 >= s.len() {
        return s[i];
    }
    s[i] + (h - i as f64) * (s[i + 1] - s[i])
}

#[test]
fn mask_examples() {
    let abs = StratConfig::binary(0.5, CutMode::Absolute, 1.0, 2.0).unwrap();
    let m = build_strat_masks(&nmap(2, 1, vec![0.2, 0.8]), &abs, &[(1, 2)]).unwrap();
    assert_eq!((m.mask(0, 0), m.mask(0, 1)), (vec![1, 0], vec![0, 1]));

    let q = StratConfig::binary(0.5, CutMode::Quantile, 1.0, 2.0).unwrap();
    let vals = vec![0.1, 0.2, 0.9, 1.0];
    let m = build_strat_masks(&nmap(4, 1, vals.clone()), &q, &[(1, 4)]).unwrap();
    assert_eq!(m.cuts()[0], quantile_oracle(&vals, 0.5));
    assert_eq!(m.mask(0, 1).iter().filter(|&&x| x == 1).count(), 2);

    let m = build_strat_masks(&nmap(3, 1, vec![0.4; 3]), &q, &[(1, 3)]).unwrap();
    assert_eq!(m.mask(0, 1), vec![1, 1, 1]);
    assert!(build_strat_masks(&nmap(3, 1, vec![0.4; 3]), &q, &[]).is_err());
}

proptest! {
    #[test]
    fn masks_partition_every_level(
        vals in prop::collection::vec(0.0f64..=1.0, 64),
        quantile_mode in any::<bool>(),
    ) {
        let mode = if quantile_mode { CutMode::Quantile } else { CutMode::Absolute };
        let cfg = StratConfig::new(mode, vec![0.25, 0.75], vec![1.0, 2.0, 3.0]).unwrap();
        let m = build_strat_masks(&nmap(8, 8, vals.clone()), &cfg, &[(8, 8), (4, 4), (3, 5), (1, 1)]).unwrap();
        for (l, level) in m.levels().iter().enumerate() {
            let masks: Vec<Vec<u8>> = (0..3).map(|k| m.mask(l, k)).collect();
            for cell in 0..level.height * level.width {
                prop_assert_eq!(masks.iter().map(|mk| mk[cell] as u32).sum::<u32>(), 1);
            }
        }
        if quantile_mode {
            prop_assert!((m.cuts()[0] - quantile_oracle(&vals, 0.25)).abs() <= 1e-12);
            prop_assert!((quantile(&vals, 0.75) - quantile_oracle(&vals, 0.75)).abs() <= 1e-12);
        }
    }
}

fn random_losses(rng: &mut ChaCha8Rng, shapes: &[(usize, usize)]) -> ImageLosses {
    ImageLosses {
        levels: shapes
            .iter()
            .map(|&(h, w)| LevelLoss {
                height: h,
                width: w,
                cls: (0..h * w).map(|_| rng.random_range(0.0..2.0)).collect(),
                boxes: (0..h * w).map(|_| rng.random_range(0.0..2.0)).collect(),
            })
            .collect(),
    }
}

fn random_batch(seed: u64, n: usize, cfg: &StratConfig) -> (Vec<ImageLosses>, Vec<StratMasks>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes = [(4, 4), (2, 2)];
    let mut losses = Vec::new();
    let mut masks = Vec::new();
    for _ in 0..n {
        let map = nmap(8, 8, (0..64).map(|_| rng.random()).collect());
        masks.push(build_strat_masks(&map, cfg, &shapes).unwrap());
        losses.push(random_losses(&mut rng, &shapes));
    }
    (losses, masks)
}

#[test]
fn stratified_loss_matches_cell_oracle() {
    let cfg = StratConfig::new(CutMode::Quantile, vec![0.3, 0.6], vec![1.0, 1.5, 4.0]).unwrap();
    for seed in 0..20 {
        let (losses, masks) = random_batch(seed, 3, &cfg);
        let (mut sums, mut counts) = (vec![0.0; 3], vec![0usize; 3]);
        let mut total = 0.0;
        for (img, m) in losses.iter().zip(&masks) {
            for (l, lv) in img.levels.iter().enumerate() {
                for k in 0..3 {
                    let mk = m.mask(l, k);
                    for ((cls, bx), w) in lv.cls.iter().zip(&lv.boxes).zip(mk) {
                        let v = (cls + bx) * w as f64;
                        sums[k] += v;
                        counts[k] += w as usize;
                        total += v;
                    }
                }
            }
        }
        let scale = 1.0 / (2.0 * 3.0);
        let want: f64 = sums
            .iter()
            .zip(&cfg.lambdas)
            .map(|(s, l)| l * s * scale)
            .sum();
        let got =
            stratified_loss(&losses, &masks, &cfg.lambdas, StratNormalization::MaskedSum).unwrap();
        assert!((got - want).abs() <= 1e-9);

        // Unit weights: masked sums give the plain total, stratum means the
        // sum of per-stratum means.
        let ones = [1.0; 3];
        let plain = stratified_loss(&losses, &masks, &ones, StratNormalization::MaskedSum).unwrap();
        assert!((plain - total * scale).abs() <= 1e-9);
        let means: f64 = sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
            .sum();
        let got = stratified_loss(&losses, &masks, &ones, StratNormalization::StratumMean).unwrap();
        assert!((got - means).abs() <= 1e-9);
    }
}

#[test]
fn distant_only_mass_scales_with_lambda() {
    let cfg = StratConfig::binary(0.5, CutMode::Absolute, 1.0, 2.0).unwrap();
    let map = nmap(2, 1, vec![0.1, 0.9]);
    let masks = vec![build_strat_masks(&map, &cfg, &[(1, 2)]).unwrap()];
    let losses = vec![ImageLosses {
        levels: vec![LevelLoss {
            height: 1,
            width: 2,
            cls: vec![0.0, 1.5],
            boxes: vec![0.0, 0.5],
        }],
    }];
    let terms = stratum_losses(&losses, &masks, StratNormalization::MaskedSum).unwrap();
    assert_eq!(terms, vec![0.0, 2.0]);
    assert_eq!(
        stratified_loss(&losses, &masks, &[1.0, 2.0], StratNormalization::MaskedSum).unwrap(),
        4.0
    );

    let bad = vec![ImageLosses {
        levels: vec![LevelLoss {
            height: 2,
            width: 1,
            cls: vec![0.0; 2],
            boxes: vec![0.0; 2],
        }],
    }];
    assert!(matches!(
        stratum_losses(&bad, &masks, StratNormalization::MaskedSum),
        Err(Error::Domain(_))
    ));
    assert!(stratified_loss(&losses, &masks, &[1.0], StratNormalization::MaskedSum).is_err());
}

proptest! {
    #[test]
    fn raising_distant_lambda_increases_loss_iff_distant_mass(
        seed in any::<u64>(),
        l1 in 0.1f64..5.0,
        dl in 0.01f64..5.0,
        zero_distant in any::<bool>(),
    ) {
        let cfg = StratConfig::binary(0.5, CutMode::Absolute, 1.0, 1.0).unwrap();
        let (mut losses, masks) = random_batch(seed, 2, &cfg);
        if zero_distant {
            for (img, m) in losses.iter_mut().zip(&masks) {
                for (l, lv) in img.levels.iter_mut().enumerate() {
                    for (c, &bit) in m.mask(l, 1).iter().enumerate() {
                        if bit == 1 {
                            lv.cls[c] = 0.0;
                            lv.boxes[c] = 0.0;
                        }
                    }
                }
            }
        }
        let mass = stratum_losses(&losses, &masks, StratNormalization::MaskedSum).unwrap()[1];
        let a = stratified_loss(&losses, &masks, &[1.0, l1], StratNormalization::MaskedSum).unwrap();
        let b = stratified_loss(&losses, &masks, &[1.0, l1 + dl], StratNormalization::MaskedSum).unwrap();
        prop_assert_eq!(b > a, mass > 0.0);
    }
}

fn toy(rng: &mut ChaCha8Rng, depth: f64, dim: usize) -> ToySample {
    ToySample {
        depth,
        features: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
        target: rng.random_range(-1.0..1.0),
    }
}

#[test]
fn gradient_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let samples: Vec<ToySample> = (0..10).map(|i| toy(&mut rng, i as f64 / 10.0, 3)).collect();
    let theta = [0.3, -0.2, 0.5];
    // Single stratum: ordinary mean-loss gradient.
    let g = strat_gradient_check(&theta, &samples, &[], &[1.0], 1e-5).unwrap();
    let mut mean = [0.0; 3];
    for s in &samples {
        let r: f64 = s
            .features
            .iter()
            .zip(&theta)
            .map(|(x, t)| x * t)
            .sum::<f64>()
            - s.target;
        for (m, x) in mean.iter_mut().zip(&s.features) {
            *m += r * x / 10.0;
        }
    }
    for (a, b) in g.analytic.iter().zip(mean) {
        assert!((a - b).abs() <= 1e-12);
    }
    // Equal strata with weights (1, 2): distant per-sample scale is double.
    let g = strat_gradient_check(&theta, &samples, &[0.5], &[1.0, 2.0], 1e-5).unwrap();
    assert_eq!(g.counts, vec![5, 5]);
    let r = effective_rates(&g.counts, &[1.0, 2.0]);
    assert_eq!(r[1], 2.0 * r[0]);
    assert_eq!(effective_rates(&[0, 4], &[3.0, 2.0]), vec![0.0, 0.5]);
    assert!(strat_gradient_check(&theta, &samples, &[0.5], &[1.0], 1e-5).is_err());
}

#[test]
fn random_gradient_checks() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let samples: Vec<ToySample> = (0..20)
            .map(|_| {
                let d = rng.random();
                toy(&mut rng, d, 4)
            })
            .collect();
        let theta: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let lambdas: Vec<f64> = (0..3).map(|_| rng.random_range(0.5..4.0)).collect();
        let g = strat_gradient_check(&theta, &samples, &[0.3, 0.7], &lambdas, 1e-5).unwrap();
        assert!(g.max_abs_deviation <= 1e-5, "{}", g.max_abs_deviation);
    }
}
