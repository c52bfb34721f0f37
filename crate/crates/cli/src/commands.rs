use std::collections::HashSet;
use std::path::Path;

use serde_json::{json, Map, Value};

use cxrtrees::embedding::{chexpert_patient_id, split_dataset, write_embedding_file, AlignedDataset, SplitFractions};
use cxrtrees::ensemble::{
    combine_set, read_stacking_file, stack_predict_set, stack_train as fit_stacking, write_stacking_file, Strategy,
    WeightingMode,
};
use cxrtrees::eval::{
    auroc, calibrate_threshold, classify_with_band, confusion_matrix, roc_curve, uncertain_fraction, BandMode,
    DEFAULT_BAND_DELTA,
};
use cxrtrees::hierarchy::{propagate_row, train_conditional_tree_pipeline, ModelFamily};
use cxrtrees::labels::{write_label_csv, LabelRegistry, SoftLabelMatrix, FOCUS_FINDINGS};
use cxrtrees::predictions::{write_predictions_file, PredictionSet, ScoreMatrix};
use cxrtrees::synthetic::{generate, SyntheticSpec};
use cxrtrees::tree::{
    self, grid_search, read_model_file, write_model_file, BoostHyperparams, ForestHyperparams, MaxFeatures, ParamGrid,
};
use cxrtrees::Error;

use crate::config::{pick, TreeSection};
use crate::data::{self, PARTITIONS};
use crate::error::{CliError, CliResult};
use crate::{
    CalibrateArgs, EnsembleArgs, EvalArgs, Family, GenSyntheticArgs, Global, MetaArgs, PredictArgs, SplitArgs,
    StackApplyArgs, StackTrainArgs, TrainArgs, TreeArgs,
};

/// Five focus findings plus their parents, in CheXpert column order.
const SYNTHETIC_LABELS: [&str; 7] = [
    "Enlarged Cardiomediastinum",
    "Cardiomegaly",
    "Lung Opacity",
    "Edema",
    "Consolidation",
    "Atelectasis",
    "Pleural Effusion",
];

fn fractions(g: &Global, train: Option<f64>, validation: Option<f64>, default: SplitFractions) -> SplitFractions {
    SplitFractions {
        train: pick(train, g.config.split.train_fraction, default.train),
        validation: pick(validation, g.config.split.validation_fraction, default.validation),
    }
}

pub fn gen_synthetic(g: &Global, a: &GenSyntheticArgs) -> CliResult<()> {
    let cfg = &g.config.synthetic;
    let names: Vec<String> = a
        .label_names
        .clone()
        .or_else(|| g.config.labels.names.clone())
        .unwrap_or_else(|| SYNTHETIC_LABELS.iter().map(|s| s.to_string()).collect());
    let registry = LabelRegistry::new(&names, &[])?;
    let h = data::load_hierarchy(g, a.hierarchy.as_deref(), &names)?;
    let n = pick(a.n_samples, cfg.n_samples, 5000);
    let dim = pick(a.dim, cfg.dim, 64);
    let mut spec = SyntheticSpec::new(n, dim, names, h.clone(), g.seed);
    spec.noise_sigma = pick(a.noise_sigma, cfg.noise_sigma, spec.noise_sigma);
    spec.uncertain_fraction = pick(a.uncertain_fraction, cfg.uncertain_fraction, spec.uncertain_fraction);
    spec.latent_dim = pick(a.latent_dim, cfg.latent_dim, spec.latent_dim);
    spec.feature_noise = pick(a.feature_noise, cfg.feature_noise, spec.feature_noise);
    let views = pick(a.views, cfg.views, 1);
    if views == 0 || views > dim {
        return Err(CliError::config(format!("views must be in 1..={dim}")));
    }
    let split_fr = fractions(
        g,
        a.train_fraction,
        a.validation_fraction,
        SplitFractions {
            train: 0.6,
            validation: 0.2,
        },
    );
    let synth = generate(&spec)?;
    let split = split_dataset(&synth.dataset, split_fr, g.seed, None)?;

    let dir = &a.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let emb = synth.dataset.embeddings();
    write_embedding_file(emb, dir.join("embeddings.emb"))?;
    if views > 1 {
        for k in 0..views {
            let cols: Vec<usize> = (0..dim).filter(|j| j % views == k).collect();
            let view = emb.select_columns(&cols, format!("view{k}"))?;
            write_embedding_file(&view, dir.join(format!("view{k}.emb")))?;
        }
    }
    let labels_path = dir.join("labels.csv");
    write_label_csv(data::create(&labels_path)?, &registry, &synth.annotations)?;
    let h_path = dir.join("hierarchy.txt");
    std::fs::write(&h_path, h.to_text(&registry)).map_err(|e| CliError::io(&h_path, e))?;
    data::write_split(&dir.join("split.csv"), &emb.sample_ids, &split)?;
    println!(
        "wrote {n} samples, {dim} features, {} labels to {}",
        registry.len(),
        dir.display()
    );
    Ok(())
}

pub fn split(g: &Global, a: &SplitArgs) -> CliResult<()> {
    let ds = data::load_aligned(g, &a.embeddings, &a.labels)?;
    let fr = fractions(g, a.train_fraction, a.validation_fraction, SplitFractions::default());
    let by_patient = a.group_by_patient || g.config.split.group_by_patient.unwrap_or(false);
    let key = |id: &str| chexpert_patient_id(id);
    let s = split_dataset(&ds, fr, g.seed, if by_patient { Some(&key) } else { None })?;
    data::write_split(&a.out, &ds.embeddings().sample_ids, &s)?;
    println!(
        "train {} validation {} test {}",
        s.train.len(),
        s.validation.len(),
        s.test.len()
    );
    Ok(())
}

fn max_features(flag: Option<&String>, cfg: Option<&String>) -> CliResult<MaxFeatures> {
    match flag.or(cfg) {
        Some(s) => Ok(s.parse()?),
        None => Ok(MaxFeatures::Sqrt),
    }
}

fn forest_hp(g: &Global, t: &TreeArgs) -> CliResult<ForestHyperparams> {
    let c = &g.config.forest;
    let d = ForestHyperparams::default();
    Ok(ForestHyperparams {
        n_estimators: pick(t.n_estimators, c.n_estimators, d.n_estimators),
        max_depth: pick(t.max_depth, c.max_depth, d.max_depth),
        min_samples_split: pick(t.min_samples_split, c.min_samples_split, d.min_samples_split),
        min_samples_leaf: pick(t.min_samples_leaf, c.min_samples_leaf, d.min_samples_leaf),
        max_features: max_features(t.max_features.as_ref(), c.max_features.as_ref())?,
        seed: g.seed,
    })
}

fn boost_hp(g: &Global, t: &TreeArgs) -> BoostHyperparams {
    let c = &g.config.boost;
    let d = BoostHyperparams::default();
    BoostHyperparams {
        rounds: pick(t.rounds, c.rounds, d.rounds),
        max_depth: pick(t.max_depth, c.max_depth, d.max_depth),
        learning_rate: pick(t.learning_rate, c.learning_rate, d.learning_rate),
        l2_lambda: pick(t.l2_lambda, c.l2_lambda, d.l2_lambda),
        seed: g.seed,
    }
}

fn meta_hp(g: &Global, m: &MetaArgs) -> CliResult<ForestHyperparams> {
    let c: &TreeSection = &g.config.stacking;
    let d = ForestHyperparams::stacking_default();
    Ok(ForestHyperparams {
        n_estimators: pick(m.n_estimators, c.n_estimators, d.n_estimators),
        max_depth: pick(m.max_depth, c.max_depth, d.max_depth),
        min_samples_split: pick(m.min_samples_split, c.min_samples_split, d.min_samples_split),
        min_samples_leaf: pick(m.min_samples_leaf, c.min_samples_leaf, d.min_samples_leaf),
        max_features: max_features(m.max_features.as_ref(), c.max_features.as_ref())?,
        seed: g.seed,
    })
}

fn binarize(ds: AlignedDataset, t: f64) -> CliResult<AlignedDataset> {
    let (emb, labels) = ds.into_parts();
    let targets = (0..labels.n_samples())
        .flat_map(|i| {
            labels
                .row(i)
                .iter()
                .map(|&v| if v >= t { 1.0 } else { 0.0 })
                .collect::<Vec<_>>()
        })
        .collect();
    let hard = SoftLabelMatrix::new(labels.sample_ids.clone(), labels.labels.clone(), targets)?;
    Ok(AlignedDataset::new(emb, hard)?)
}

fn label_indices(labels: &[String], wanted: &[String]) -> CliResult<Vec<usize>> {
    wanted
        .iter()
        .map(|w| {
            labels
                .iter()
                .position(|l| l == w)
                .ok_or_else(|| Error::UnknownLabel(w.clone()).into())
        })
        .collect()
}

pub fn train(g: &Global, a: &TrainArgs) -> CliResult<()> {
    let full = data::load_aligned(g, &a.embeddings, &a.labels)?;
    let mut train_ds = match data::partition_ids(&a.partition, "train")? {
        Some(ids) => data::subset_dataset(&full, &ids)?,
        None => full.clone(),
    };
    if let Some(t) = a.binarize_at {
        train_ds = binarize(train_ds, t)?;
    }
    let names = train_ds.labels().labels.clone();
    let wanted: Vec<String> = match &a.focus {
        Some(f) => f.clone(),
        None => {
            let present: Vec<String> = FOCUS_FINDINGS
                .iter()
                .filter(|f| names.iter().any(|n| n == *f))
                .map(|f| f.to_string())
                .collect();
            if present.is_empty() {
                names.clone()
            } else {
                present
            }
        }
    };
    let mut idx = label_indices(&names, &wanted)?;
    idx.sort_unstable();
    let h = if a.conditional {
        Some(data::load_hierarchy(g, a.hierarchy.as_deref(), &names)?)
    } else {
        None
    };

    let family = match a.family {
        Family::Forest => {
            let mut hp = forest_hp(g, &a.tree)?;
            if a.grid_search {
                let split = a.partition.split.as_deref().expect("clap enforces --split");
                let mut val = data::subset_dataset(&full, &data::read_partition(split, "validation")?)?;
                if let Some(t) = a.binarize_at {
                    val = binarize(val, t)?;
                }
                let mut search_labels = idx.clone();
                if let Some(h) = &h {
                    for &l in &idx {
                        search_labels.extend(h.ancestors(l));
                    }
                    search_labels.sort_unstable();
                    search_labels.dedup();
                }
                let c = &g.config.grid;
                let d = ParamGrid::default();
                let grid = ParamGrid {
                    max_depth: pick(a.grid_max_depth.clone(), c.max_depth.clone(), d.max_depth),
                    min_samples_split: pick(
                        a.grid_min_samples_split.clone(),
                        c.min_samples_split.clone(),
                        d.min_samples_split,
                    ),
                    min_samples_leaf: pick(
                        a.grid_min_samples_leaf.clone(),
                        c.min_samples_leaf.clone(),
                        d.min_samples_leaf,
                    ),
                };
                let result = grid_search(&train_ds, &val, &search_labels, &hp, &grid)?;
                if let Some(path) = &a.grid_report {
                    let table: Vec<Value> = result
                        .table
                        .iter()
                        .map(|p| {
                            json!({
                                "max_depth": p.hyperparams.max_depth,
                                "min_samples_split": p.hyperparams.min_samples_split,
                                "min_samples_leaf": p.hyperparams.min_samples_leaf,
                                "mean_validation_auroc": p.score,
                            })
                        })
                        .collect();
                    let b = &result.best;
                    data::write_json(
                        path,
                        &json!({
                            "best": {
                                "max_depth": b.hyperparams.max_depth,
                                "min_samples_split": b.hyperparams.min_samples_split,
                                "min_samples_leaf": b.hyperparams.min_samples_leaf,
                                "mean_validation_auroc": b.score,
                            },
                            "table": table,
                        }),
                    )?;
                }
                hp = result.best.hyperparams;
            }
            ModelFamily::Forest(hp)
        }
        Family::Boosted => {
            if a.grid_search {
                return Err(CliError::config("grid search is only available for forests"));
            }
            ModelFamily::Boosted(boost_hp(g, &a.tree))
        }
    };

    let model = match &h {
        Some(h) => train_conditional_tree_pipeline(&train_ds, h, &idx, &family)?.merged_model()?,
        None => match &family {
            ModelFamily::Forest(hp) => tree::train_random_forest(&train_ds, &idx, hp)?,
            ModelFamily::Boosted(hp) => tree::train_gradient_boosting(&train_ds, &idx, hp)?,
        },
    };
    write_model_file(&model, &a.out)?;
    println!(
        "trained {} labels on {} samples: {}",
        model.labels.len(),
        train_ds.n_samples(),
        model.label_names().join(", ")
    );
    Ok(())
}

pub fn predict(g: &Global, a: &PredictArgs) -> CliResult<()> {
    let model = read_model_file(&a.model)?;
    let mut emb = cxrtrees::embedding::read_embedding_file(&a.embeddings)?;
    if let Some(ids) = data::partition_ids(&a.partition, "test")? {
        let rows: Vec<usize> = (0..emb.n_samples())
            .filter(|&i| ids.contains(&emb.sample_ids[i]))
            .collect();
        if rows.is_empty() {
            return Err(CliError::new("empty", "no embeddings in the selected partition"));
        }
        emb = emb.select_rows(&rows);
    }
    let mut scores = tree::predict(&model, &emb)?;
    if a.propagate {
        let h = data::load_hierarchy(g, a.hierarchy.as_deref(), &scores.labels)?;
        let parents: Vec<Option<usize>> = (0..scores.n_labels()).map(|l| h.parent(l)).collect();
        let mut values = Vec::with_capacity(scores.values().len());
        for i in 0..scores.n_samples() {
            values.extend(propagate_row(scores.row(i), &parents));
        }
        scores = ScoreMatrix::new(scores.classifier, scores.sample_ids, scores.labels, values)?;
    }
    if let Some(name) = &a.name {
        scores = scores.with_classifier(name.clone());
    }
    write_predictions_file(&a.out, std::slice::from_ref(&scores))?;
    println!("scored {} samples as `{}`", scores.n_samples(), scores.classifier);
    Ok(())
}

pub fn ensemble(g: &Global, a: &EnsembleArgs) -> CliResult<()> {
    let c = &g.config.ensemble;
    let strategy_name = pick(a.strategy.clone(), c.strategy.clone(), "simple".into());
    let strategy = match strategy_name.as_str() {
        "simple" => Strategy::Simple,
        "entropy" => {
            Strategy::Entropy(pick(a.mode.clone(), c.mode.clone(), "normalized".into()).parse::<WeightingMode>()?)
        }
        other => {
            return Err(CliError::config(format!(
                "unknown strategy `{other}` (simple or entropy)"
            )))
        }
    };
    let set = PredictionSet::new(data::read_all_predictions(&a.inputs)?)?;
    let name = a.name.clone().unwrap_or_else(|| format!("ensemble-{strategy_name}"));
    let (combined, fallbacks) = combine_set(&set, strategy, &name)?;
    if fallbacks > 0 {
        eprintln!("note: {fallbacks} entries fell back to the simple average");
    }
    write_predictions_file(&a.out, std::slice::from_ref(&combined))?;
    println!("combined {} classifiers into `{name}`", set.classifiers.len());
    Ok(())
}

fn filtered_set(matrices: Vec<ScoreMatrix>, keep: Option<&HashSet<String>>) -> CliResult<PredictionSet> {
    let matrices = match keep {
        Some(ids) => matrices
            .iter()
            .map(|m| data::subset_scores(m, ids))
            .collect::<CliResult<Vec<_>>>()?,
        None => matrices,
    };
    Ok(PredictionSet::new(matrices)?)
}

pub fn stack_train(g: &Global, a: &StackTrainArgs) -> CliResult<()> {
    let keep = data::partition_ids(&a.partition, "validation")?;
    let set = filtered_set(data::read_all_predictions(&a.predictions)?, keep.as_ref())?;
    let targets = data::load_soft_labels(g, &a.labels)?;
    let model = fit_stacking(&set, &targets, &meta_hp(g, &a.meta)?)?;
    write_stacking_file(&model, &a.out)?;
    println!(
        "stacked {} classifiers over {} labels on {} samples",
        model.classifier_names.len(),
        model.labels.len(),
        set.n_samples()
    );
    Ok(())
}

pub fn stack_apply(a: &StackApplyArgs) -> CliResult<()> {
    let model = read_stacking_file(&a.model)?;
    let set = PredictionSet::new(data::read_all_predictions(&a.predictions)?)?;
    let name = a.name.clone().unwrap_or_else(|| "stacking".into());
    let out = stack_predict_set(&model, &set, &name)?;
    write_predictions_file(&a.out, std::slice::from_ref(&out))?;
    println!("scored {} samples as `{name}`", out.n_samples());
    Ok(())
}

fn pick_classifier(matrices: Vec<ScoreMatrix>, name: Option<&str>) -> CliResult<ScoreMatrix> {
    match name {
        Some(n) => matrices
            .into_iter()
            .find(|m| m.classifier == n)
            .ok_or_else(|| Error::ClassifierMismatch(format!("no classifier `{n}` in the predictions")).into()),
        None if matrices.len() == 1 => Ok(matrices.into_iter().next().expect("one matrix")),
        None => Err(CliError::new(
            "classifier_mismatch",
            format!(
                "predictions hold {} classifiers; choose one with --classifier",
                matrices.len()
            ),
        )),
    }
}

pub fn calibrate(g: &Global, a: &CalibrateArgs) -> CliResult<()> {
    let c = &g.config.calibrate;
    let mut scores = pick_classifier(
        cxrtrees::predictions::read_predictions_file(&a.predictions)?,
        a.classifier.as_deref(),
    )?;
    if let Some(ids) = data::partition_ids(&a.partition, "validation")? {
        scores = data::subset_scores(&scores, &ids)?;
    }
    let mode = match (a.delta, a.auto_target, c.delta, c.auto_target) {
        (Some(d), ..) => BandMode::Fixed(d),
        (None, Some(t), ..) => BandMode::Auto { target: t },
        (None, None, Some(d), _) => BandMode::Fixed(d),
        (None, None, None, Some(t)) => BandMode::Auto { target: t },
        _ => BandMode::Fixed(DEFAULT_BAND_DELTA),
    };
    let cal = calibrate_threshold(&scores, mode)?;
    let fraction = uncertain_fraction(&scores, &cal.thresholds, cal.delta);
    let thresholds: Map<String, Value> = cal
        .labels
        .iter()
        .zip(&cal.thresholds)
        .map(|(l, &t)| (l.clone(), json!(t)))
        .collect();
    let (mode_name, target) = match mode {
        BandMode::Fixed(_) => ("fixed", Value::Null),
        BandMode::Auto { target } => ("auto", json!(target)),
    };
    data::write_json(
        &a.out,
        &json!({
            "classifier": scores.classifier,
            "n_samples": scores.n_samples(),
            "thresholds": thresholds,
            "delta": cal.delta,
            "band_mode": mode_name,
            "auto_target": target,
            "uncertain_fraction": fraction,
        }),
    )?;
    println!("delta {} uncertain fraction {fraction:.4}", cal.delta);
    Ok(())
}

fn input_entry(path: &Path, canonical: bool) -> CliResult<Value> {
    let mut m = Map::new();
    m.insert("sha256".into(), json!(data::sha256_file(path)?));
    let file = path
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_default();
    m.insert("file".into(), json!(file));
    if !canonical {
        let abs = std::fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf());
        m.insert("path".into(), json!(abs.display().to_string()));
    }
    Ok(Value::Object(m))
}

/// Thresholds by label name and the band half-width from a calibration file.
fn read_calibration(path: &Path) -> CliResult<(Map<String, Value>, Option<f64>)> {
    let v = data::read_json(path)?;
    let bad = || CliError::new("malformed", format!("{}: not a calibration file", path.display()));
    let thresholds = v.get("thresholds").and_then(Value::as_object).ok_or_else(bad)?.clone();
    Ok((thresholds, v.get("delta").and_then(Value::as_f64)))
}

pub fn eval(g: &Global, a: &EvalArgs) -> CliResult<()> {
    let c = &g.config.eval;
    let canonical = a.canonical || c.canonical.unwrap_or(false);
    let truth_threshold = pick(a.truth_threshold, c.truth_threshold, 0.5);
    let targets = data::load_soft_labels(g, &a.labels)?;
    let rows = data::row_index(&targets);
    let keep = data::partition_ids(&a.partition, "test")?;
    let set = filtered_set(
        cxrtrees::predictions::read_predictions_file(&a.predictions)?,
        keep.as_ref(),
    )?;
    let (cal_thresholds, cal_delta) = match &a.calibration {
        Some(p) => {
            let (t, d) = read_calibration(p)?;
            (Some(t), d)
        }
        None => (None, None),
    };
    let delta = a.delta.or(c.delta).or(cal_delta).unwrap_or(DEFAULT_BAND_DELTA);
    if delta < 0.0 {
        return Err(CliError::config(format!("band delta {delta} is negative")));
    }

    let sample_rows = set
        .sample_ids
        .iter()
        .map(|id| {
            rows.get(id.as_str())
                .copied()
                .ok_or_else(|| CliError::new("length_mismatch", format!("no label row for sample `{id}`")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let mut truths = Vec::with_capacity(set.labels.len());
    for name in &set.labels {
        let l = targets
            .label_index(name)
            .ok_or_else(|| CliError::from(Error::UnknownLabel(name.clone())))?;
        let t: Vec<u8> = sample_rows
            .iter()
            .map(|&i| u8::from(targets.get(i, l) >= truth_threshold))
            .collect();
        if !(t.contains(&0) && t.contains(&1)) {
            let class = if t.contains(&1) { "positive" } else { "negative" };
            return Err(CliError::new(
                "degenerate_truth",
                format!(
                    "label `{name}`: all {} evaluated samples are {class}, AUROC is undefined",
                    t.len()
                ),
            ));
        }
        truths.push(t);
    }

    let mut roc_rows: Vec<[String; 5]> = Vec::new();
    let mut classifiers = Map::new();
    let mut means = Vec::with_capacity(set.classifiers.len());
    for m in &set.classifiers {
        let mut per_label = Map::new();
        let mut total = 0.0;
        for (l, name) in set.labels.iter().enumerate() {
            let scores = m.column(l);
            let truth = &truths[l];
            let a_l = auroc(&scores, truth)?;
            total += a_l;
            let threshold = match &cal_thresholds {
                Some(t) => t.get(name).and_then(Value::as_f64).ok_or_else(|| {
                    CliError::new("unknown_label", format!("calibration has no threshold for `{name}`"))
                })?,
                None => 0.5,
            };
            let cm = confusion_matrix(&classify_with_band(&scores, threshold, delta), truth)?;
            let positives = truth.iter().filter(|&&t| t == 1).count();
            per_label.insert(
                name.clone(),
                json!({
                    "auroc": a_l,
                    "threshold": threshold,
                    "positives": positives,
                    "negatives": truth.len() - positives,
                    "confusion": {
                        "tp": cm.tp, "fp": cm.fp, "tn": cm.tn, "fn": cm.fn_, "uncertain": cm.uncertain,
                    },
                }),
            );
            if a.roc_out.is_some() {
                for p in roc_curve(&scores, truth)? {
                    roc_rows.push([
                        m.classifier.clone(),
                        name.clone(),
                        format!("{:e}", p.threshold),
                        format!("{:e}", p.fpr),
                        format!("{:e}", p.tpr),
                    ]);
                }
            }
        }
        let mean = total / set.labels.len() as f64;
        means.push((m.classifier.clone(), mean));
        classifiers.insert(m.classifier.clone(), json!({ "mean_auroc": mean, "labels": per_label }));
    }

    let mut inputs = Map::new();
    inputs.insert("predictions".into(), input_entry(&a.predictions, canonical)?);
    inputs.insert("labels".into(), input_entry(&a.labels.labels, canonical)?);
    if let Some(p) = &a.calibration {
        inputs.insert("calibration".into(), input_entry(p, canonical)?);
    }
    if let Some(p) = &a.partition.split {
        inputs.insert("split".into(), input_entry(p, canonical)?);
    }
    let partition = a.partition.split.as_ref().map(|_| {
        a.partition
            .partition
            .clone()
            .unwrap_or_else(|| PARTITIONS[2].to_string())
    });
    let mut report = Map::new();
    report.insert("inputs".into(), Value::Object(inputs));
    report.insert("partition".into(), json!(partition));
    report.insert("n_samples".into(), json!(set.n_samples()));
    report.insert("truth_threshold".into(), json!(truth_threshold));
    report.insert("delta".into(), json!(delta));
    report.insert("calibrated".into(), json!(cal_thresholds.is_some()));
    report.insert("classifiers".into(), Value::Object(classifiers));
    if !canonical {
        report.insert("tool_version".into(), json!(env!("CARGO_PKG_VERSION")));
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        report.insert("generated_at_unix".into(), json!(now));
    }
    data::write_json(&a.out, &Value::Object(report))?;

    if let Some(path) = &a.roc_out {
        let mut w = csv::Writer::from_writer(data::create(path)?);
        let bad = |e: csv::Error| CliError::new("csv", format!("{}: {e}", path.display()));
        w.write_record(["classifier", "label", "threshold", "fpr", "tpr"])
            .map_err(bad)?;
        for r in &roc_rows {
            w.write_record(r).map_err(bad)?;
        }
        w.flush().map_err(|e| CliError::io(path, e))?;
    }
    for (name, mean) in means {
        println!("{name}: mean AUROC {mean:.4}");
    }
    Ok(())
}
