//! COCO metrics on a fixed 20-box instance, checked against values produced
//! by the reference evaluator and against a simple independent oracle.

mod common;

use common::{coco_dets as dets, coco_gts as gts};
use depthprior::matching::{coco_map, iou};
use depthprior::{Detection, GroundTruthBox};

/// Plain AP / recall over all sizes: per class, greedy matching at the IoU
/// threshold in score order, 101-point interpolated precision.
fn oracle(dets: &[Detection], gts: &[GroundTruthBox], thr: f64) -> (f64, f64) {
    let classes: std::collections::BTreeSet<u32> = gts.iter().map(|g| g.class_id).collect();
    let (mut ap_sum, mut rec_sum) = (0.0, 0.0);
    for &c in &classes {
        let g: Vec<&GroundTruthBox> = gts.iter().filter(|g| g.class_id == c).collect();
        let mut d: Vec<&Detection> = dets.iter().filter(|d| d.class_id == c).collect();
        d.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
        let mut used = vec![false; g.len()];
        let mut hits = Vec::new();
        for det in &d {
            let mut best: Option<(usize, f64)> = None;
            for (j, gt) in g.iter().enumerate() {
                if used[j] || gt.image_id != det.image_id {
                    continue;
                }
                let v = iou(&det.bbox, &gt.bbox);
                if v >= thr && best.is_none_or(|(_, b)| v > b) {
                    best = Some((j, v));
                }
            }
            if let Some((j, _)) = best {
                used[j] = true;
            }
            hits.push(best.is_some());
        }
        let mut tp = 0.0;
        let mut points = Vec::new();
        for (k, h) in hits.iter().enumerate() {
            if *h {
                tp += 1.0;
            }
            points.push((tp / g.len() as f64, tp / (k + 1) as f64));
        }
        let ap: f64 = (0..=100)
            .map(|r| {
                let r = r as f64 / 100.0;
                points
                    .iter()
                    .filter(|(rc, _)| *rc >= r - 1e-12)
                    .map(|(_, p)| *p)
                    .fold(0.0, f64::max)
            })
            .sum::<f64>()
            / 101.0;
        ap_sum += ap;
        rec_sum += tp / g.len() as f64;
    }
    (
        ap_sum / classes.len() as f64,
        rec_sum / classes.len() as f64,
    )
}

#[test]
fn matches_reference_evaluator() {
    let m = coco_map(&dets(), &gts()).unwrap();
    let got = [
        m.map, m.map50, m.map75, m.map_s, m.map_m, m.map_l, m.mar, m.mar_s, m.mar_m, m.mar_l,
    ];
    let expect = got.iter().zip(common::COCO_REFERENCE);
    for (i, (got, want)) in expect.enumerate() {
        let got = got.expect("metric present");
        assert!((got - want).abs() < 1e-4, "metric {i}: {got} vs {want}");
    }
}

#[test]
fn matches_simple_oracle_over_all_sizes() {
    let m = coco_map(&dets(), &gts()).unwrap();
    let thresholds: Vec<f64> = (0..10).map(|i| 0.5 + 0.05 * i as f64).collect();
    let per: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&t| oracle(&dets(), &gts(), t))
        .collect();
    let map = per.iter().map(|p| p.0).sum::<f64>() / 10.0;
    let mar = per.iter().map(|p| p.1).sum::<f64>() / 10.0;
    assert!((m.map.unwrap() - map).abs() < 1e-4, "{:?} vs {map}", m.map);
    assert!((m.map50.unwrap() - per[0].0).abs() < 1e-4);
    assert!((m.map75.unwrap() - per[5].0).abs() < 1e-4);
    assert!((m.mar.unwrap() - mar).abs() < 1e-4);
}

#[test]
fn perfect_detections_give_exactly_one() {
    let g = gts();
    let d: Vec<Detection> = g
        .iter()
        .map(|g| Detection::new(g.image_id.clone(), g.bbox, 1.0, g.class_id).unwrap())
        .collect();
    let m = coco_map(&d, &g).unwrap();
    assert_eq!(m.map, Some(1.0));
    assert_eq!(m.map50, Some(1.0));
    assert_eq!(m.mar, Some(1.0));
}

#[test]
fn no_detections_give_zero() {
    let m = coco_map(&[], &gts()).unwrap();
    for v in [
        m.map, m.map50, m.map75, m.map_s, m.map_m, m.map_l, m.mar, m.mar_s, m.mar_m, m.mar_l,
    ] {
        assert_eq!(v, Some(0.0));
    }
}
