#![allow(dead_code)]

use depthprior::matching::{iou, MatchConfig};
use depthprior::{BBox, Detection, GroundTruthBox};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Cox–de Boor recursion straight from the definition. Half-open spans,
/// except that the right end of the domain belongs to the last basis.
pub fn naive_basis(knots: &[f64], m: usize, p: usize, d: f64) -> f64 {
    if p == 0 {
        let (a, b) = (knots[m], knots[m + 1]);
        let last = knots[knots.len() - 1];
        if a < b && (d >= a && d < b || d == last && b == last) {
            return 1.0;
        }
        return 0.0;
    }
    let mut v = 0.0;
    let l = knots[m + p] - knots[m];
    if l > 0.0 {
        v += (d - knots[m]) / l * naive_basis(knots, m, p - 1, d);
    }
    let r = knots[m + p + 1] - knots[m + 1];
    if r > 0.0 {
        v += (knots[m + p + 1] - d) / r * naive_basis(knots, m + 1, p - 1, d);
    }
    v
}

/// Clamped uniform cubic knot vector with `count` basis functions.
pub fn clamped_knots(count: usize, lo: f64, hi: f64) -> Vec<f64> {
    let spans = count - 3;
    let mut k = vec![lo; 4];
    k.extend((1..spans).map(|i| lo + (hi - lo) * i as f64 / spans as f64));
    k.extend([hi; 4]);
    k
}

/// Naive threshold: tau0 minus the spline correction at the clamped depth,
/// clipped to [0, 1].
pub fn naive_threshold(tau0: f64, psi: &[f64], domain: (f64, f64), d: f64) -> f64 {
    let knots = clamped_knots(psi.len(), domain.0, domain.1);
    let u = d.clamp(domain.0, domain.1);
    let g: f64 = (0..psi.len())
        .map(|m| psi[m] * naive_basis(&knots, m, 3, u))
        .sum();
    (tau0 - g).clamp(0.0, 1.0)
}

pub fn rand_box(rng: &mut ChaCha8Rng, canvas: f64) -> BBox {
    let x = rng.random_range(0.0..canvas);
    let y = rng.random_range(0.0..canvas);
    let w = rng.random_range(4.0..20.0);
    let h = rng.random_range(4.0..20.0);
    BBox::new(x, y, x + w, y + h).unwrap()
}

/// Maximum number of matches over every one-to-one assignment.
pub fn max_matching(adj: &[Vec<usize>], used: &mut Vec<bool>, i: usize) -> usize {
    if i == adj.len() {
        return 0;
    }
    let mut best = max_matching(adj, used, i + 1);
    for &j in &adj[i] {
        if !used[j] {
            used[j] = true;
            best = best.max(1 + max_matching(adj, used, i + 1));
            used[j] = false;
        }
    }
    best
}

/// Random image with up to six boxes per side. Returns `None` when some
/// detection is eligible for more than one ground-truth box, the case where
/// greedy matching can fall short of the maximum assignment.
#[allow(clippy::type_complexity)]
pub fn matching_instance(
    rng: &mut ChaCha8Rng,
    cfg: &MatchConfig,
) -> Option<(Vec<Detection>, Vec<GroundTruthBox>, Vec<Vec<usize>>)> {
    let nd = rng.random_range(0..=6);
    let ng = rng.random_range(0..=6);
    let gts: Vec<GroundTruthBox> = (0..ng)
        .map(|_| GroundTruthBox::new("i", rand_box(rng, 40.0), rng.random_range(0..2)).unwrap())
        .collect();
    let dets: Vec<Detection> = (0..nd)
        .map(|_| {
            let b = if !gts.is_empty() && rng.random::<f64>() < 0.6 {
                let g = &gts[rng.random_range(0..gts.len())];
                let j = rng.random_range(-2.0..2.0);
                BBox::new(g.bbox.x1 + j, g.bbox.y1 + j, g.bbox.x2 + j, g.bbox.y2).unwrap()
            } else {
                rand_box(rng, 40.0)
            };
            Detection::new("i", b, rng.random(), rng.random_range(0..2)).unwrap()
        })
        .collect();
    let adj: Vec<Vec<usize>> = dets
        .iter()
        .map(|d| {
            (0..gts.len())
                .filter(|&j| {
                    gts[j].class_id == d.class_id && iou(&d.bbox, &gts[j].bbox) >= cfg.iou_threshold
                })
                .collect()
        })
        .collect();
    if adj.iter().any(|a| a.len() > 1) {
        return None;
    }
    Some((dets, gts, adj))
}

pub fn coco_gts() -> Vec<GroundTruthBox> {
    [
        ("a", 10.0, 10.0, 30.0, 30.0, 0),
        ("a", 50.0, 50.0, 110.0, 100.0, 0),
        ("a", 200.0, 200.0, 320.0, 330.0, 1),
        ("a", 5.0, 150.0, 25.0, 175.0, 1),
        ("a", 400.0, 20.0, 460.0, 70.0, 0),
        ("b", 0.0, 0.0, 40.0, 40.0, 0),
        ("b", 100.0, 100.0, 120.0, 118.0, 1),
        ("b", 300.0, 50.0, 420.0, 190.0, 0),
        ("b", 60.0, 200.0, 140.0, 260.0, 1),
        ("b", 500.0, 300.0, 515.0, 312.0, 0),
    ]
    .iter()
    .map(|&(im, x1, y1, x2, y2, c)| {
        GroundTruthBox::new(im, BBox::new(x1, y1, x2, y2).unwrap(), c).unwrap()
    })
    .collect()
}

pub fn coco_dets() -> Vec<Detection> {
    [
        ("a", 11.0, 11.0, 31.0, 29.0, 0.95, 0),
        ("a", 52.0, 48.0, 112.0, 102.0, 0.80, 0),
        ("a", 205.0, 210.0, 318.0, 335.0, 0.60, 1),
        ("a", 8.0, 152.0, 30.0, 178.0, 0.30, 1),
        ("a", 380.0, 10.0, 420.0, 60.0, 0.70, 0),
        ("b", 2.0, 1.0, 38.0, 42.0, 0.90, 0),
        ("b", 300.0, 60.0, 400.0, 190.0, 0.85, 0),
        ("b", 65.0, 205.0, 150.0, 270.0, 0.40, 1),
        ("b", 99.0, 99.0, 121.0, 119.0, 0.20, 1),
        ("b", 0.0, 0.0, 40.0, 40.0, 0.55, 0),
    ]
    .iter()
    .map(|&(im, x1, y1, x2, y2, s, c)| {
        Detection::new(im, BBox::new(x1, y1, x2, y2).unwrap(), s, c).unwrap()
    })
    .collect()
}

/// Reference-evaluator output on the fixture above, in the order mAP, AP50,
/// AP75, AP_S, AP_M, AP_L, AR, AR_S, AR_M, AR_L.
pub const COCO_REFERENCE: [f64; 10] = [
    0.4568069306930693,
    0.8316831683168316,
    0.5222772277227723,
    0.3398514851485149,
    0.4571782178217822,
    0.6499999999999999,
    0.5083333333333332,
    0.4,
    0.5,
    0.65,
];
