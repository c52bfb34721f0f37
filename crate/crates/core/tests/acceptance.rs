use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cxrtrees::embedding::{split_dataset, AlignedDataset, EmbeddingMatrix, SplitFractions};
use cxrtrees::ensemble::{
    bernoulli_entropy, combine_set, entropy_weighted_average, simple_average, stack_predict_set, stack_train,
    PredictionMatrix, Strategy, WeightingMode,
};
use cxrtrees::eval::{
    auroc, calibrate_threshold, classify_with_band, confusion_matrix, mean_auroc, roc_area, roc_curve,
    uncertain_fraction, BandMode, Decision,
};
use cxrtrees::hierarchy::propagate_row;
use cxrtrees::labels::{apply_lsr, AnnotationValue, LabelHierarchy, LsrConfig, RawAnnotation, SoftLabelMatrix};
use cxrtrees::predictions::{PredictionSet, ScoreMatrix};
use cxrtrees::synthetic::{generate, SyntheticSpec};
use cxrtrees::tree::{
    bootstrap_sample, predict, train_gradient_boosting, train_random_forest, BoostHyperparams, ForestHyperparams,
    MaxFeatures, TreeEnsembleModel,
};

type Check = std::result::Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn brute_auroc(scores: &[f64], truth: &[u8]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if truth[i] == 1 && truth[j] == 0 {
                den += 1.0;
                if si > sj {
                    num += 1.0;
                } else if si == sj {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

fn auroc_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut done = 0;
    while done < 200 {
        let n = rng.random_range(2..=50);
        let levels = if done % 2 == 0 { 5 } else { 1_000_000 };
        let scores: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0..levels) as f64 / levels as f64)
            .collect();
        let truth: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        if truth.iter().all(|&t| t == truth[0]) {
            continue;
        }
        let a = auroc(&scores, &truth).map_err(|e| e.to_string())?;
        let b = brute_auroc(&scores, &truth);
        let c = roc_area(&roc_curve(&scores, &truth).map_err(|e| e.to_string())?);
        ensure((a - b).abs() <= 1e-12, format!("rank {a} vs brute {b}"))?;
        ensure((a - c).abs() <= 1e-12, format!("rank {a} vs trapezoid {c}"))?;
        done += 1;
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(1), format!("took {took:?}"))?;
    Ok(format!("200 instances, {took:?}"))
}

fn entropy_identities() -> Check {
    let h = |p| bernoulli_entropy(p).unwrap();
    ensure(h(0.5) == 1.0 && h(0.0) == 0.0 && h(1.0) == 0.0, "endpoint values")?;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let p: f64 = rng.random();
        ensure((h(p) - h(1.0 - p)).abs() <= 1e-12, format!("asymmetric at {p}"))?;
    }
    let v = h(0.25);
    ensure((v - 0.8112781244591328).abs() <= 1e-6, format!("H(0.25) = {v}"))?;
    Ok(format!("H(0.25) = {v}"))
}

fn ensembling_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..300 {
        let n = rng.random_range(1..=8);
        let l = rng.random_range(1..=6);
        let names: Vec<String> = (0..n).map(|k| format!("c{k}")).collect();
        let labels: Vec<String> = (0..l).map(|k| format!("l{k}")).collect();

        let row: Vec<f64> = (0..l).map(|_| rng.random()).collect();
        let same = PredictionMatrix::new(names.clone(), labels.clone(), row.repeat(n)).unwrap();
        ensure(simple_average(&same).unwrap().values == row, "simple identity")?;
        let ent = entropy_weighted_average(&same, WeightingMode::Normalized).unwrap();
        ensure(ent.values == row, "entropy identity")?;

        let values: Vec<f64> = (0..n * l).map(|_| rng.random()).collect();
        let m = PredictionMatrix::new(names.clone(), labels.clone(), values.clone()).unwrap();
        let simple = simple_average(&m).unwrap().values;
        let ent = entropy_weighted_average(&m, WeightingMode::Normalized).unwrap().values;
        for (j, &e) in ent.iter().enumerate() {
            let col = m.column(j);
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            ensure(lo <= e && e <= hi, format!("entropy output {e} outside [{lo}, {hi}]"))?;
        }

        let mut perm: Vec<usize> = (0..n).collect();
        for k in (1..n).rev() {
            perm.swap(k, rng.random_range(0..=k));
        }
        let pv: Vec<f64> = perm.iter().flat_map(|&k| values[k * l..(k + 1) * l].to_vec()).collect();
        let pn: Vec<String> = perm.iter().map(|&k| names[k].clone()).collect();
        let pm = PredictionMatrix::new(pn, labels.clone(), pv).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        ensure(
            bits(&simple_average(&pm).unwrap().values) == bits(&simple),
            "simple not permutation invariant",
        )?;
        let pe = entropy_weighted_average(&pm, WeightingMode::Normalized).unwrap().values;
        ensure(bits(&pe) == bits(&ent), "entropy not permutation invariant")?;
    }
    Ok("300 random matrices".into())
}

fn weighted_average_fidelity() -> Check {
    let m = PredictionMatrix::new(vec!["a".into(), "b".into()], vec!["L".into()], vec![0.8, 0.6]).unwrap();
    let literal = entropy_weighted_average(&m, WeightingMode::PaperLiteral)
        .unwrap()
        .values[0];
    let normalized = entropy_weighted_average(&m, WeightingMode::Normalized).unwrap().values[0];
    // 0.8 * (1 - H(0.8)) + 0.6 * (1 - H(0.6)), evaluated at 50 digits
    let oracle = 0.2398871674173089;
    ensure((literal - oracle).abs() <= 1e-5, format!("literal {literal}"))?;
    ensure((normalized - 0.7811).abs() <= 1e-3, format!("normalized {normalized}"))?;
    Ok(format!("literal {literal:.7}, normalized {normalized:.7}"))
}

fn random_parents(rng: &mut ChaCha8Rng, n: usize) -> Vec<Option<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    for k in (1..n).rev() {
        order.swap(k, rng.random_range(0..=k));
    }
    let mut parents = vec![None; n];
    for pos in 1..n {
        if rng.random_bool(0.7) {
            parents[order[pos]] = Some(order[rng.random_range(0..pos)]);
        }
    }
    parents
}

fn bayes_propagation() -> Check {
    let out = propagate_row(&[0.9, 0.8, 0.5], &[None, Some(0), Some(1)]);
    ensure((out[2] - 0.36).abs() <= 1e-15, format!("chain gives {}", out[2]))?;
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..1000 {
        let n = rng.random_range(1..=12);
        let parents = random_parents(&mut rng, n);
        let cond: Vec<f64> = (0..n)
            .map(|_| match rng.random_range(0..10) {
                0 => 0.0,
                1 => 1.0,
                2 => rng.random::<f64>() * 1e-14,
                _ => rng.random(),
            })
            .collect();
        let out = propagate_row(&cond, &parents);
        for l in 0..n {
            ensure((0.0..=1.0).contains(&out[l]), "out of range")?;
            if let Some(p) = parents[l] {
                ensure(out[l] <= out[p], format!("child {} exceeds parent {}", out[l], out[p]))?;
            }
        }
    }
    Ok("chain 0.36, 1000 random hierarchies monotone".into())
}

fn small_dataset(seed: u64, n: usize, dim: usize, labels: usize) -> AlignedDataset {
    let names: Vec<String> = (0..labels).map(|l| format!("L{l}")).collect();
    let h = LabelHierarchy::empty(labels);
    let mut spec = SyntheticSpec::new(n, dim, names, h, seed);
    spec.uncertain_fraction = 0.1;
    generate(&spec).unwrap().dataset
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

fn leaf_sizes_ok(model: &TreeEnsembleModel, ds: &AlignedDataset, labels: &[usize], seed: u64, min_leaf: usize) -> bool {
    let n = ds.n_samples();
    for (k, lt) in model.labels.iter().enumerate() {
        for (t, tree) in lt.trees.iter().enumerate() {
            let mut counts = vec![0usize; tree.nodes.len()];
            for i in bootstrap_sample(seed, labels[k], t, n) {
                counts[tree.leaf_index(ds.embeddings().row(i))] += 1;
            }
            let leaves = tree.nodes.iter().enumerate().filter(|(_, nd)| nd.is_leaf());
            if leaves.into_iter().any(|(j, _)| counts[j] < min_leaf) {
                return false;
            }
        }
    }
    true
}

fn tree_determinism() -> Check {
    let ds = small_dataset(21, 400, 12, 3);
    let hp = ForestHyperparams {
        n_estimators: 24,
        max_depth: 8,
        min_samples_leaf: 3,
        seed: 5,
        ..ForestHyperparams::default()
    };
    let f1 = in_pool(1, || train_random_forest(&ds, &[0, 1, 2], &hp).unwrap());
    let f8 = in_pool(8, || train_random_forest(&ds, &[0, 1, 2], &hp).unwrap());
    ensure(
        f1.to_bytes() == f8.to_bytes(),
        "forest bytes differ between 1 and 8 threads",
    )?;
    let bp = BoostHyperparams {
        rounds: 15,
        ..BoostHyperparams::default()
    };
    let b1 = in_pool(1, || train_gradient_boosting(&ds, &[0, 1, 2], &bp).unwrap());
    let b8 = in_pool(8, || train_gradient_boosting(&ds, &[0, 1, 2], &bp).unwrap());
    ensure(
        b1.to_bytes() == b8.to_bytes(),
        "boosted bytes differ between 1 and 8 threads",
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for run in 0..50 {
        let n = rng.random_range(20..200);
        let ds = small_dataset(100 + run, n, rng.random_range(2..8), 2);
        let hp = ForestHyperparams {
            n_estimators: rng.random_range(1..6),
            max_depth: rng.random_range(1..12),
            min_samples_split: rng.random_range(2..20),
            min_samples_leaf: rng.random_range(1..15),
            max_features: if rng.random_bool(0.5) {
                MaxFeatures::All
            } else {
                MaxFeatures::Sqrt
            },
            seed: run,
        };
        let labels = [1, 0];
        let model = train_random_forest(&ds, &labels, &hp).unwrap();
        ensure(
            leaf_sizes_ok(&model, &ds, &labels, hp.seed, hp.min_samples_leaf),
            format!("min_samples_leaf violated in run {run}"),
        )?;
    }
    Ok("1 vs 8 threads byte-identical; 50 trainings respect min_samples_leaf".into())
}

struct EndToEnd {
    validation_ensemble: ScoreMatrix,
}

fn focus_like_spec() -> SyntheticSpec {
    let names: Vec<String> = [
        "Lung Opacity",
        "Edema",
        "Consolidation",
        "Enlarged Cardiomediastinum",
        "Cardiomegaly",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let h = LabelHierarchy::from_pairs(5, &[(1, 0), (2, 0), (4, 3)]);
    let mut spec = SyntheticSpec::new(5000, 64, names, h, 7);
    spec.noise_sigma = 0.5;
    spec.uncertain_fraction = 0.05;
    spec
}

fn mean_test_auroc(scores: &ScoreMatrix, truth: &SoftLabelMatrix) -> f64 {
    let per: Vec<f64> = (0..truth.n_labels())
        .map(|l| auroc(&scores.column(l), &truth.binarized_column(l, 0.5)).unwrap())
        .collect();
    mean_auroc(&per)
}

fn synthetic_end_to_end() -> (Check, EndToEnd) {
    let start = Instant::now();
    let data = generate(&focus_like_spec()).unwrap();
    let ds = data.dataset;
    let split = split_dataset(
        &ds,
        SplitFractions {
            train: 0.6,
            validation: 0.2,
        },
        7,
        None,
    )
    .unwrap();
    let labels: Vec<usize> = (0..5).collect();
    let hp = ForestHyperparams {
        seed: 7,
        ..ForestHyperparams::default()
    };

    let mut val_scores = Vec::new();
    let mut test_scores = Vec::new();
    for m in 0..3 {
        let cols: Vec<usize> = (0..64).filter(|j| j % 3 == m).collect();
        let view = ds.with_feature_columns(&cols, &format!("forest{m}")).unwrap();
        let model = train_random_forest(&view.subset(&split.train), &labels, &hp).unwrap();
        val_scores.push(predict(&model, view.subset(&split.validation).embeddings()).unwrap());
        test_scores.push(predict(&model, view.subset(&split.test).embeddings()).unwrap());
    }
    let test_truth = ds.labels().select_rows(&split.test);
    let val_truth = ds.labels().select_rows(&split.validation);

    let singles: Vec<f64> = test_scores.iter().map(|s| mean_test_auroc(s, &test_truth)).collect();
    let test_set = PredictionSet::new(test_scores).unwrap();
    let val_set = PredictionSet::new(val_scores).unwrap();
    let simple = combine_set(&test_set, Strategy::Simple, "simple").unwrap().0;
    let entropy = combine_set(&test_set, Strategy::Entropy(WeightingMode::Normalized), "entropy")
        .unwrap()
        .0;
    let meta_hp = ForestHyperparams {
        seed: 7,
        ..ForestHyperparams::stacking_default()
    };
    let stack = stack_train(&val_set, &val_truth, &meta_hp).unwrap();
    let stacked = stack_predict_set(&stack, &test_set, "stacking").unwrap();
    let validation_ensemble = combine_set(&val_set, Strategy::Simple, "simple").unwrap().0;
    let took = start.elapsed();

    let best = singles.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (s, e, k) = (
        mean_test_auroc(&simple, &test_truth),
        mean_test_auroc(&entropy, &test_truth),
        mean_test_auroc(&stacked, &test_truth),
    );
    let summary = format!(
        "singles {:.4}/{:.4}/{:.4}, simple {s:.4}, entropy {e:.4}, stacking {k:.4}, {took:.1?}",
        singles[0], singles[1], singles[2]
    );
    let check = (|| {
        ensure(singles.iter().all(|&a| a >= 0.85), "a single model is below 0.85")?;
        ensure(s >= best - 0.01, "simple average below best single - 0.01")?;
        ensure(e >= best - 0.01, "entropy average below best single - 0.01")?;
        ensure(k >= 0.85, "stacking below 0.85")?;
        ensure(took < Duration::from_secs(120), "slower than 2 minutes")
    })()
    .map(|_| summary.clone())
    .map_err(|m| format!("{m}: {summary}"));
    (check, EndToEnd { validation_ensemble })
}

fn lsr() -> Check {
    let labels: Vec<String> = (0..5).map(|l| format!("L{l}")).collect();
    let anns: Vec<RawAnnotation> = (0..20_000)
        .map(|i| RawAnnotation {
            sample_id: format!("s{i}"),
            values: vec![AnnotationValue::Uncertain; 5],
        })
        .collect();
    let cfg = LsrConfig {
        seed: 3,
        ..LsrConfig::default()
    };
    let a = apply_lsr(&anns, &labels, &cfg).unwrap();
    let b = apply_lsr(&anns, &labels, &cfg).unwrap();
    let mut sum = 0.0;
    for i in 0..a.n_samples() {
        for &v in a.row(i) {
            ensure((0.55..0.85).contains(&v), format!("value {v} outside [0.55, 0.85)"))?;
            sum += v;
        }
    }
    let bits = |m: &SoftLabelMatrix| {
        (0..m.n_samples())
            .flat_map(|i| m.row(i).to_vec())
            .map(f64::to_bits)
            .collect::<Vec<_>>()
    };
    ensure(bits(&a) == bits(&b), "rerun differs")?;
    let mean = sum / 100_000.0;
    ensure((mean - 0.70).abs() <= 0.003, format!("mean {mean}"))?;
    Ok(format!("mean of 1e5 values {mean:.5}"))
}

fn calibration(e2e: &EndToEnd) -> Check {
    use Decision::{Negative as N, Positive as P, Uncertain as U};
    // threshold 0.5, band 0.25, both exact in binary; [0.25, 0.75] is uncertain
    let scores = [
        0.00, 0.10, 0.20, 0.249, 0.25, 0.30, 0.50, 0.70, 0.75, 0.751, 0.80, 0.90, 0.99, 1.00, 0.15, 0.45, 0.60, 0.76,
        0.24, 0.85,
    ];
    let truth = [0, 0, 0, 1, 0, 1, 1, 0, 1, 1, 1, 1, 1, 0, 1, 0, 1, 0, 0, 1];
    let expected = [N, N, N, N, U, U, U, U, U, P, P, P, P, P, N, U, U, P, N, P];
    let got = classify_with_band(&scores, 0.5, 0.25);
    ensure(got == expected, format!("decisions {got:?}"))?;
    let cm = confusion_matrix(&got, &truth).unwrap();
    ensure(
        (cm.tp, cm.fp, cm.tn, cm.fn_, cm.uncertain) == (5, 2, 4, 2, 7),
        format!("counts {cm:?}"),
    )?;
    ensure(cm.total() == scores.len(), "counts do not partition n")?;

    let cal = calibrate_threshold(&e2e.validation_ensemble, BandMode::Auto { target: 0.10 }).unwrap();
    let frac = uncertain_fraction(&e2e.validation_ensemble, &cal.thresholds, cal.delta);
    ensure(
        (0.05..=0.15).contains(&frac),
        format!("auto delta {} gives {frac}", cal.delta),
    )?;
    Ok(format!(
        "fixture exact; auto delta {} -> uncertain {:.3}",
        cal.delta, frac
    ))
}

fn random_embedding(rng: &mut ChaCha8Rng) -> EmbeddingMatrix {
    let n = rng.random_range(0..30);
    let dim = rng.random_range(1..40);
    let ids = (0..n)
        .map(|i| {
            let len = rng.random_range(1..20);
            let s: String = (0..len).map(|_| rng.random_range('a'..='z')).collect();
            format!("{s}/{i}/é")
        })
        .collect();
    let data = (0..n * dim)
        .map(|_| rng.random_range(-1e6f32..1e6) * rng.random::<f32>())
        .collect();
    EmbeddingMatrix::new(ids, dim, data, format!("model{}", rng.random::<u16>())).unwrap()
}

fn format_round_trips() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..100 {
        let m = random_embedding(&mut rng);
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back = EmbeddingMatrix::read_from(&buf[..]).unwrap();
        ensure(back == m, "EMB1 round trip differs")?;
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        ensure(again == buf, "EMB1 rewrite differs")?;
    }
    for run in 0..100u64 {
        let ds = small_dataset(run, rng.random_range(10..60), rng.random_range(2..6), 2);
        let model = if run % 2 == 0 {
            let hp = ForestHyperparams {
                n_estimators: rng.random_range(1..5),
                max_depth: rng.random_range(1..8),
                min_samples_leaf: rng.random_range(1..4),
                seed: run,
                ..ForestHyperparams::default()
            };
            train_random_forest(&ds, &[0, 1], &hp).unwrap()
        } else {
            let hp = BoostHyperparams {
                rounds: rng.random_range(1..6),
                max_depth: rng.random_range(1..4),
                learning_rate: rng.random_range(0.0..1.0),
                l2_lambda: rng.random_range(0.0..3.0),
                seed: run,
            };
            train_gradient_boosting(&ds, &[1], &hp).unwrap()
        };
        let bytes = model.to_bytes();
        let back = TreeEnsembleModel::read_from(&bytes[..]).unwrap();
        ensure(back == model, "model round trip differs")?;
        ensure(back.to_bytes() == bytes, "model rewrite differs")?;
    }
    Ok("100 EMB1 + 100 model instances".into())
}

fn report(name: &str, check: Check) {
    match check {
        Ok(detail) => println!("PASS {name}: {detail}"),
        Err(why) => {
            println!("FAIL {name}: {why}");
            panic!("{name}: {why}");
        }
    }
}

fn end_to_end() -> &'static (Check, EndToEnd) {
    static RUN: OnceLock<(Check, EndToEnd)> = OnceLock::new();
    RUN.get_or_init(synthetic_end_to_end)
}

#[test]
fn auroc_oracle_equivalence() {
    report("AUROC oracle equivalence", auroc_oracle());
}

#[test]
fn entropy_identities_hold() {
    report("entropy identities", entropy_identities());
}

#[test]
fn ensembling_identities_hold() {
    report("ensembling identities", ensembling_identities());
}

#[test]
fn entropy_weighted_average_fidelity() {
    report("entropy-weighted average fidelity", weighted_average_fidelity());
}

#[test]
fn bayes_propagation_holds() {
    report("Bayes propagation", bayes_propagation());
}

#[test]
fn tree_learner_determinism_and_contract() {
    report("tree determinism and leaf contract", tree_determinism());
}

#[test]
fn synthetic_end_to_end_quality() {
    report("synthetic end-to-end", end_to_end().0.clone());
}

#[test]
fn label_smoothing() {
    report("label smoothing", lsr());
}

#[test]
fn calibration_and_confusion() {
    report("calibration and confusion", calibration(&end_to_end().1));
}

#[test]
fn format_round_trip_identity() {
    report("format round-trips", format_round_trips());
}
