use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::json;

use depthprior::dct::{self, BoundsMode, FitConfig, ObjectiveVariant, OptimizerConfig};
use depthprior::depthnorm::{
    invert_normalized, normalize_image, BatchDepth, DepthCatalog, DepthIndex,
};
use depthprior::hetsim::{self, BiasConfig, SimConfig, SimWeighting};
use depthprior::io;
use depthprior::matching::{self, CostModel, MatchConfig, ThresholdSource};
use depthprior::supervise::{
    build_strat_masks, object_weights, CutMode, ObjectDepth, StratConfig, WeightingMode,
};
use depthprior::synth::{self, PlantedConfig, RealisticConfig};
use depthprior::{DepthMap, Error};

use crate::meta::write_sidecar;
use crate::{
    AnalyzeArgs, BoundsArg, DctApplyArgs, DctFitArgs, DlsArgs, DlwArgs, EvalArgs, MatchArgs,
    ObjectiveArg, SimWeightArg, SimulateArgs, StratModeArg, SynthArgs, SynthKind, WeightMode,
};

fn same_path(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

fn ensure_distinct(inputs: &[Option<&Path>], out: &Path) -> Result<()> {
    for p in inputs.iter().flatten() {
        if same_path(p, out) {
            bail!("output {} would overwrite an input", out.display());
        }
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

impl MatchArgs {
    fn config(&self) -> MatchConfig {
        MatchConfig {
            iou_threshold: self.iou_threshold,
            class_aware: !self.class_agnostic,
            ..MatchConfig::default()
        }
    }
}

fn catalog(dir: &Path) -> Result<DepthCatalog> {
    Ok(DepthCatalog::from_maps(&io::read_depth_dir(dir)?))
}

// ---------------------------------------------------------------------------

fn weighting_mode(mode: WeightMode, alpha: f64) -> WeightingMode {
    match mode {
        WeightMode::Dlw => WeightingMode::Dlw { alpha },
        WeightMode::RawD => WeightingMode::RawD,
        WeightMode::InvOnly => WeightingMode::InvOnly,
        WeightMode::ExpNoinv => WeightingMode::ExpNoinv,
        WeightMode::Linear => WeightingMode::Linear,
        WeightMode::Quadratic => WeightingMode::Quadratic,
        WeightMode::Bw => WeightingMode::Bw { alpha },
        WeightMode::Iw => WeightingMode::Iw { alpha },
    }
}

fn read_manifest(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let batches: Vec<Vec<String>> = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("batch manifest {}: {e}", path.display())))?;
    let mut seen = BTreeSet::new();
    for id in batches.iter().flatten() {
        if !seen.insert(id) {
            return Err(
                Error::Format(format!("image {id:?} appears in more than one batch")).into(),
            );
        }
    }
    Ok(batches)
}

pub fn dlw(a: DlwArgs) -> Result<()> {
    ensure_distinct(&[Some(&a.groundtruth), a.batch_manifest.as_deref()], &a.out)?;
    let mode = weighting_mode(a.mode, a.alpha);
    mode.validate()?;
    let maps = io::read_depth_dir(&a.depth_dir)?;
    let gts = io::read_groundtruth(&a.groundtruth)?;
    let batches = match &a.batch_manifest {
        Some(p) => read_manifest(p)?,
        None => vec![maps.keys().cloned().collect()],
    };

    let mut batch_of: BTreeMap<&str, usize> = BTreeMap::new();
    for (b, ids) in batches.iter().enumerate() {
        for id in ids {
            batch_of.insert(id, b);
        }
    }
    let mut per_image_index: BTreeMap<&str, usize> = BTreeMap::new();
    // (batch, object index within image, raw mean) per GT row.
    let mut rows = Vec::with_capacity(gts.len());
    for g in &gts {
        let Some(&b) = batch_of.get(g.image_id.as_str()) else {
            return Err(
                Error::Lookup(format!("image {:?} is not in any batch", g.image_id)).into(),
            );
        };
        let k = per_image_index.entry(&g.image_id).or_default();
        rows.push((b, *k));
        *k += 1;
    }

    let mut weights = vec![0.0; gts.len()];
    let mut depths = vec![0.0; gts.len()];
    for (b, ids) in batches.iter().enumerate() {
        let members: Vec<usize> = (0..gts.len()).filter(|&i| rows[i].0 == b).collect();
        if ids.is_empty() {
            continue;
        }
        let batch_maps: Vec<DepthMap> = ids
            .iter()
            .map(|id| {
                maps.get(id)
                    .cloned()
                    .ok_or_else(|| Error::Lookup(format!("no depth map for image {id:?}")))
            })
            .collect::<Result<_, _>>()?;
        let batch = BatchDepth::new(batch_maps)?;
        let indexes: BTreeMap<&str, DepthIndex> = ids
            .iter()
            .map(|id| (id.as_str(), DepthIndex::new(&maps[id])))
            .collect();
        let mut objects = Vec::with_capacity(members.len());
        for &i in &members {
            let g = &gts[i];
            let raw = indexes[g.image_id.as_str()].raw_box_mean(&g.bbox)?;
            let d = invert_normalized(raw, batch.d_min(), batch.d_max());
            depths[i] = d;
            objects.push(ObjectDepth {
                image_id: g.image_id.clone(),
                depth_norm: d,
                depth_raw: Some(raw),
            });
        }
        for (w, &i) in object_weights(&objects, &mode)?.into_iter().zip(&members) {
            weights[i] = w;
        }
    }

    let records: Vec<io::WeightRecord> = gts
        .iter()
        .enumerate()
        .map(|(i, g)| io::WeightRecord {
            image: g.image_id.clone(),
            object_index: rows[i].1,
            depth_norm: depths[i],
            weight: weights[i],
        })
        .collect();
    io::write_weight_records(&records, &a.out)?;
    write_sidecar(
        &a.out,
        "dlw",
        None,
        &json!({"alpha": a.alpha, "mode": a.mode, "batches": batches.len()}),
    )
}

// ---------------------------------------------------------------------------

fn parse_levels(levels: &[String]) -> Result<Vec<(usize, usize)>> {
    levels
        .iter()
        .map(|s| {
            let (h, w) = s
                .split_once(['x', 'X'])
                .with_context(|| format!("level {s:?} is not HxW"))?;
            Ok((h.trim().parse()?, w.trim().parse()?))
        })
        .collect()
}

pub fn dls(a: DlsArgs) -> Result<()> {
    let mode = match a.strat_mode {
        StratModeArg::Quantile => CutMode::Quantile,
        StratModeArg::Absolute => CutMode::Absolute,
    };
    let cuts = a.cuts.clone().unwrap_or_else(|| vec![a.beta]);
    let cfg = StratConfig::new(mode, cuts, a.lambdas.clone())?;
    let levels = a.levels.as_deref().map(parse_levels).transpose()?;
    let maps = io::read_depth_dir(&a.depth_dir)?;
    if same_path(&a.depth_dir, &a.out) {
        bail!("output directory must differ from the depth directory");
    }
    create_dir(&a.out)?;
    let mut applied: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (id, map) in &maps {
        let norm = normalize_image(map);
        let lv = levels
            .clone()
            .unwrap_or_else(|| vec![(map.height(), map.width())]);
        let masks = build_strat_masks(&norm, &cfg, &lv)?;
        for (l, &(h, w)) in lv.iter().enumerate() {
            for k in 0..cfg.strata() {
                let values = masks.mask(l, k).into_iter().map(f32::from).collect();
                let path = a.out.join(format!("{id}.L{}.K{}.dpm", l + 1, k + 1));
                io::write_depth_map(&DepthMap::new(w, h, values)?, path)?;
            }
        }
        applied.insert(id, masks.cuts().to_vec());
    }
    write_json(&a.out.join("cuts.json"), &applied)?;
    write_sidecar(
        &a.out,
        "dls",
        None,
        &json!({"mode": a.strat_mode, "cuts": cfg.cuts, "lambdas": cfg.lambdas, "levels": levels}),
    )
}

// ---------------------------------------------------------------------------

fn fit_config(a: &DctFitArgs) -> FitConfig {
    FitConfig {
        taus: a.taus.clone(),
        knots: a.knots,
        domain: (0.0, a.domain_max),
        epsilon: a.epsilon,
        gamma: a.gamma,
        rho: a.rho,
        objective: match a.objective {
            ObjectiveArg::Base => ObjectiveVariant::Base,
            ObjectiveArg::AbsRatio => ObjectiveVariant::AbsRatio,
            ObjectiveArg::RelRatio => ObjectiveVariant::RelRatio,
        },
        optimizer: OptimizerConfig {
            seed: a.seed,
            population: a.population,
            generations: a.generations,
            ..OptimizerConfig::default()
        },
        coeff_bounds: match a.bounds {
            BoundsArg::Safe => BoundsMode::Safe,
            BoundsArg::Literal => BoundsMode::Literal,
        },
        matching: a.matching.config(),
    }
}

pub fn dct_fit(a: DctFitArgs) -> Result<()> {
    ensure_distinct(&[Some(&a.detections), Some(&a.groundtruth)], &a.out)?;
    let cfg = fit_config(&a);
    cfg.validate()?;
    let cat = catalog(&a.depth_dir)?;
    let dets = io::read_detections(&a.detections)?;
    let gts = io::read_groundtruth(&a.groundtruth)?;
    let (table, outcomes) = dct::build_lut_with_outcomes(&dets, &gts, &cat, &cfg)?;
    io::write_lookup_table(&table, &a.out)?;
    if let Some(log) = &a.fit_log {
        write_text(log, &dct::fit_log_jsonl(&outcomes)?)?;
    }
    println!("tau0\tTD\tTD*\tED\tED*\tfeasible");
    for o in &outcomes {
        println!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            o.curve.tau0, o.tp_static, o.tp_star, o.fp_static, o.fp_star, o.feasible
        );
    }
    write_sidecar(&a.out, "dct-fit", Some(cfg.optimizer.seed), &cfg)
}

pub fn dct_apply(a: DctApplyArgs) -> Result<()> {
    ensure_distinct(&[Some(&a.detections), a.lut.as_deref()], &a.out)?;
    let dets = io::read_detections(&a.detections)?;
    let kept = match &a.lut {
        Some(lut_path) => {
            let lut = io::read_lookup_table(lut_path)?;
            let Some(dir) = &a.depth_dir else {
                bail!("--depth-dir is required with --lut");
            };
            dct::apply_lut(&dets, &catalog(dir)?, a.tau0, &lut)?
        }
        None => dct::filter_static(&dets, a.tau0),
    };
    io::write_detections(&kept, &a.out)?;
    write_sidecar(
        &a.out,
        "dct-apply",
        None,
        &json!({"tau0": a.tau0, "curve": a.lut.is_some()}),
    )
}

// ---------------------------------------------------------------------------

pub fn eval(a: EvalArgs) -> Result<()> {
    ensure_distinct(&[Some(&a.detections), Some(&a.groundtruth)], &a.out)?;
    let dets = io::read_detections(&a.detections)?;
    let gts = io::read_groundtruth(&a.groundtruth)?;
    let cfg = a.matching.config();
    let coco = matching::coco_map(&dets, &gts)?;
    let counts = match &a.depth_dir {
        Some(dir) => {
            let cat = catalog(dir)?;
            let lut = a.lut.as_deref().map(io::read_lookup_table).transpose()?;
            let source = match &lut {
                Some(t) => ThresholdSource::Curve(t.get(a.tau0)?),
                None => ThresholdSource::Constant(a.tau0),
            };
            Some(matching::count_report(&dets, &gts, &cat, &cfg, source)?)
        }
        None => None,
    };
    write_json(&a.out, &json!({"coco": coco, "counts": counts}))?;
    write_sidecar(
        &a.out,
        "eval",
        None,
        &json!({"matching": a.matching, "tau0": a.tau0, "curve": a.lut.is_some()}),
    )
}

pub fn analyze(a: AnalyzeArgs) -> Result<()> {
    let cat = catalog(&a.depth_dir)?;
    let dets = io::read_detections(&a.detections)?;
    let gts = io::read_groundtruth(&a.groundtruth)?;
    let cfg = MatchConfig {
        score_bins: a.score_bins,
        depth_bins: a.depth_bins,
        ..a.matching.config()
    };
    cfg.validate()?;
    let lut = a.lut.as_deref().map(io::read_lookup_table).transpose()?;
    create_dir(&a.out)?;

    let grid = matching::match_rate_grid(&dets, &gts, &cat, a.score_bins, a.depth_bins, &cfg)?;
    write_text(&a.out.join("match_rate.csv"), &grid.to_csv())?;

    let raw = matching::count_report(&dets, &gts, &cat, &cfg, ThresholdSource::Constant(0.0))?;
    write_text(&a.out.join("depth_histogram.csv"), &raw.histogram_csv())?;

    let rows = matching::pareto_sweep(&dets, &gts, &cat, &a.taus, lut.as_ref(), &cfg)?;
    let mut csv = String::from("tau0,td,ed,td_star,ed_star\n");
    let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.tau0,
            r.td,
            r.ed,
            opt(r.td_star),
            opt(r.ed_star)
        ));
    }
    write_text(&a.out.join("pareto.csv"), &csv)?;

    let cost = CostModel::new(a.c_fn, a.c_fp)?;
    let taus = matching::empirical_optimal_threshold(&dets, &gts, &cat, &cost, a.depth_bins, &cfg)?;
    write_json(&a.out.join("optimal_thresholds.json"), &taus)?;
    write_sidecar(
        &a.out,
        "analyze",
        None,
        &json!({"matching": cfg, "taus": a.taus, "c_fn": a.c_fn, "c_fp": a.c_fp, "curve": a.lut.is_some()}),
    )
}

// ---------------------------------------------------------------------------

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let base = SimConfig {
        kappa: a.kappa,
        alpha_signal: a.alpha_signal,
        sigma_eps: a.sigma_eps,
        n_samples: a.samples,
        depth_range: (a.depth_min, a.depth_max),
        seed: a.seed,
    };
    base.validate()?;
    let bias = BiasConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        huber_delta: (a.huber_delta != 0.0).then_some(a.huber_delta),
        ..BiasConfig::default()
    };
    bias.validate()?;
    create_dir(&a.out)?;

    let samples = hetsim::sample_losses(&base)?;
    let fit = hetsim::variance_law_fit(&samples, a.variance_bins)?;
    write_json(
        &a.out.join("variance_fit.json"),
        &json!({"sigma0_sq": base.sigma0_sq(), "sigma_eps_sq": a.sigma_eps * a.sigma_eps, "fit": fit}),
    )?;

    let mut summary = BTreeMap::new();
    for w in &a.weighting {
        let (weighting, name) = match w {
            SimWeightArg::Uniform => (SimWeighting::Uniform, "uniform"),
            SimWeightArg::Compensating => (SimWeighting::Compensating, "compensating"),
            SimWeightArg::DlwExponential => (SimWeighting::DlwExponential, "dlw-exponential"),
        };
        let mut csv = String::from(hetsim::TRAJECTORY_CSV_HEADER);
        let mut gaps = Vec::new();
        for r in 0..a.replicas {
            let cfg = SimConfig {
                n_samples: a.train_samples,
                seed: a.seed + r,
                ..base.clone()
            };
            let t = hetsim::bias_experiment(&cfg, weighting, &bias)?;
            csv.push_str(&t.csv_rows());
            gaps.push(t.final_gap());
        }
        write_text(&a.out.join(format!("trajectories_{name}.csv")), &csv)?;
        let far_worse = gaps.iter().filter(|g| **g > 0.0).count();
        summary.insert(name, json!({"final_gaps": gaps, "far_worse": far_worse}));
    }
    write_json(&a.out.join("bias_summary.json"), &summary)?;
    write_sidecar(
        &a.out,
        "simulate",
        Some(a.seed),
        &json!({"sim": base, "bias": bias, "replicas": a.replicas, "train_samples": a.train_samples,
                "variance_bins": a.variance_bins, "weighting": a.weighting}),
    )
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let corpus = match a.kind {
        SynthKind::Realistic => synth::realistic_corpus(&RealisticConfig {
            images: a.images,
            seed: a.seed,
            ..RealisticConfig::default()
        })?,
        SynthKind::Planted => synth::planted_corpus(&PlantedConfig {
            tau0: a.tau0,
            seed: a.seed,
            ..PlantedConfig::default()
        })?,
    };
    create_dir(&a.out)?;
    corpus.write_to(&a.out)?;
    write_sidecar(
        &a.out,
        "synth",
        Some(a.seed),
        &json!({"kind": a.kind, "images": a.images, "tau0": a.tau0}),
    )
}
