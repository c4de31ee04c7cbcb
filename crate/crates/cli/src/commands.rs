//! One function per subcommand.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use cic_core::baselines::{knn_predict, tune_knn, ComparisonRow, KnnSearch, KnnSetting};
use cic_core::data::{
    generate_synthetic, holdout_indices, load_dir, save_dir, split, LabeledDataset, SyntheticConfig,
};
use cic_core::dimred::{pca_fit, separability_score, write_scores_csv};
use cic_core::hyperopt::{
    default_network_space, read_history, run_search, write_history_line, NetworkObjective,
    SearchOptions, SearchSpace, TrialRecord,
};
use cic_core::math::Matrix;
use cic_core::metrics::{
    accuracy_of, confusion, per_class_metrics, write_metrics_csv, MetricsReport,
};
use cic_core::models::{
    argmax, load_checkpoint, save_checkpoint, Model, NetworkSpec, Vocabularies,
};
use cic_core::robustness::{sweep, write_sweep_csv, SweepKind};
use cic_core::train::{
    cross_validate, evaluate, fit, write_epochs_csv, write_predictions_csv, CvOptions, TaskMetrics,
};
use cic_core::{Error, RngState};
use serde::Serialize;

use crate::config::{usage, RunConfig};
use crate::run::{runtime, RunDir};
use crate::{Cli, CliError, Command, FeatureChoice, NetArgs, SplitChoice};

pub const MODEL_FILE: &str = "model.json";

pub fn run(cli: &Cli, args: &[String]) -> Result<(), CliError> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if cli.workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let mut dir = RunDir::create(&cli.out)?;
    if let Some(c) = &cli.config {
        dir.input(c);
    }
    let ctx = Ctx {
        seed: cli.seed,
        workers: cli.workers,
    };
    let name = match &cli.command {
        Command::Synth {
            tissues,
            diseases,
            samples,
            mrna,
            mirna,
            noise_sd,
        } => {
            let synth = SyntheticConfig {
                tissues: *tissues,
                diseases: *diseases,
                samples: *samples,
                mrna_genes: *mrna,
                mirna_genes: *mirna,
                noise_sd: *noise_sd,
                seed: ctx.seed,
            };
            synth.validate().map_err(usage)?;
            let data = generate_synthetic(&synth).map_err(runtime)?;
            save_dir(&data, &cli.out).map_err(runtime)?;
            for f in [
                cic_core::data::MRNA_FILE,
                cic_core::data::MIRNA_FILE,
                cic_core::data::LABELS_FILE,
            ] {
                dir.mark(f);
            }
            "synth"
        }
        Command::Train { data, net } => {
            apply_net(&mut config, net);
            train(&ctx, &config, &mut dir, data)?;
            "train"
        }
        Command::Cv { data, net, folds } => {
            apply_net(&mut config, net);
            if let Some(f) = folds {
                config.split.folds = *f;
            }
            let dataset = load_data(&mut dir, data)?;
            let spec = config.network_spec(&dataset)?;
            cv(&ctx, &config, &mut dir, &dataset, &spec)?;
            "cv"
        }
        Command::Hyperopt {
            data,
            net,
            trials,
            objective_epochs,
            space,
            resume,
            cv: then_cv,
        } => {
            apply_net(&mut config, net);
            let h = &mut config.hyperopt;
            if let Some(t) = trials {
                h.trials = *t;
            }
            if let Some(e) = objective_epochs {
                h.objective_epochs = *e;
            }
            if let Some(s) = space {
                h.space = Some(s.clone());
            }
            hyperopt(&ctx, &config, &mut dir, data, *resume, *then_cv)?;
            "hyperopt"
        }
        Command::Evaluate { model, data, split } => {
            let (model, dataset) = load_model_and_data(&mut dir, model, data)?;
            let subset = select(&config, &ctx, &dataset, *split)?;
            let eval = evaluate(&model, &subset).map_err(runtime)?;
            dir.write("evaluation.csv", |out| {
                write_metrics_row(out, &eval.metrics)
            })?;
            write_reports(&mut dir, &subset, &eval.tissue_pred, &eval.disease_pred)?;
            "evaluate"
        }
        Command::Encode { model, data } => {
            let (model, dataset) = load_model_and_data(&mut dir, model, data)?;
            dir.write("cics.csv", |out| {
                write_model_predictions(out, &model, &dataset)
            })?;
            "encode"
        }
        Command::Sweep {
            kind,
            model,
            data,
            split,
            levels,
            replicates,
        } => {
            let kind = SweepKind::from(*kind);
            if let Some(r) = replicates {
                config.sweep.replicates = *r;
            }
            let (model, dataset) = load_model_and_data(&mut dir, model, data)?;
            let subset = select(&config, &ctx, &dataset, *split)?;
            let grid = levels.clone().unwrap_or_else(|| kind.default_grid());
            let rows = sweep(
                &model,
                &subset,
                kind,
                &grid,
                config.sweep.replicates,
                &RngState::new(ctx.seed).derive("sweep"),
                ctx.workers,
            )
            .map_err(classify)?;
            dir.write("sweep.csv", |out| write_sweep_csv(out, kind, &rows))?;
            "sweep"
        }
        Command::Pca {
            data,
            model,
            components,
        } => {
            if let Some(c) = components {
                config.pca.components = *c;
            }
            pca(&ctx, &config, &mut dir, data, model.as_deref())?;
            "pca"
        }
        Command::Baseline {
            data,
            features,
            model,
        } => {
            baseline(&ctx, &config, &mut dir, data, *features, model.as_deref())?;
            "baseline"
        }
        Command::Report { run } => {
            let text = report(run)?;
            print!("{text}");
            dir.write_text("report.md", &text)?;
            "report"
        }
    };
    dir.finish(name, args, ctx.seed, ctx.workers, &config)
}

struct Ctx {
    seed: u64,
    workers: usize,
}

/// Argument errors inside the library are usage errors; the rest are runtime.
fn classify(e: Error) -> CliError {
    match e {
        Error::InvalidArgument(_) | Error::InvalidSpec(_) => CliError::Usage(e.to_string()),
        other => CliError::Runtime(other.to_string()),
    }
}

fn apply_net(config: &mut RunConfig, net: &NetArgs) {
    let n = &mut config.network;
    if let Some(a) = net.arch {
        n.arch = a;
    }
    if let Some(c) = net.cic {
        n.cic = c;
    }
    if let Some(e) = net.epochs {
        n.epochs = e;
    }
    if let Some(s) = &net.spec {
        n.spec = Some(s.clone());
    }
}

fn load_data(dir: &mut RunDir, path: &Path) -> Result<LabeledDataset, CliError> {
    dir.input(path);
    load_dir(path).map_err(runtime)
}

fn load_model_and_data(
    dir: &mut RunDir,
    model: &Path,
    data: &Path,
) -> Result<(Model, LabeledDataset), CliError> {
    dir.input(model);
    let model = load_checkpoint(model).map_err(runtime)?;
    let dataset = load_data(dir, data)?;
    if let Some(v) = model.vocabularies() {
        if v.tissues != dataset.tissues || v.diseases != dataset.diseases {
            return Err(CliError::Runtime(
                "dataset label vocabularies differ from the checkpoint's".into(),
            ));
        }
    }
    Ok((model, dataset))
}

fn select(
    config: &RunConfig,
    ctx: &Ctx,
    dataset: &LabeledDataset,
    choice: SplitChoice,
) -> Result<LabeledDataset, CliError> {
    match choice {
        SplitChoice::All => Ok(dataset.clone()),
        SplitChoice::Test => Ok(split(dataset, &config.plan(ctx.seed)?).map_err(runtime)?.1),
    }
}

fn write_metrics_row<W: Write>(out: W, m: &TaskMetrics) -> cic_core::Result<()> {
    // Same layout as the test columns of epochs.csv.
    let json = serde_json::to_value(m).map_err(|e| Error::Data(e.to_string()))?;
    let map = json
        .as_object()
        .ok_or_else(|| Error::Data("metrics are not a record".into()))?;
    let mut w = std::io::BufWriter::new(out);
    let names: Vec<&str> = TASK_FIELDS.to_vec();
    writeln!(w, "{}", names.join(",")).map_err(io)?;
    let values: Vec<String> = names
        .iter()
        .map(|n| map[*n].as_f64().map_or(String::new(), |v| v.to_string()))
        .collect();
    writeln!(w, "{}", values.join(",")).map_err(io)?;
    w.flush().map_err(io)
}

const TASK_FIELDS: [&str; 10] = [
    "mrna_mse",
    "mrna_mae",
    "mirna_mse",
    "mirna_mae",
    "tissue_loss",
    "tissue_accuracy",
    "disease_loss",
    "disease_accuracy",
    "regularizer",
    "total_loss",
];

fn io(e: std::io::Error) -> Error {
    Error::Data(e.to_string())
}

fn write_reports(
    dir: &mut RunDir,
    data: &LabeledDataset,
    tissue_pred: &[usize],
    disease_pred: &[usize],
) -> Result<(), CliError> {
    let tc = confusion(&data.tissue_ids, tissue_pred, data.tissue_count()).map_err(runtime)?;
    let dc = confusion(&data.disease_ids, disease_pred, data.disease_count()).map_err(runtime)?;
    let tm = per_class_metrics(&tc).map_err(runtime)?;
    let dm = per_class_metrics(&dc).map_err(runtime)?;
    dir.write("metrics.csv", |out| {
        write_metrics_csv(
            out,
            &[
                MetricsReport {
                    task: "tissue",
                    names: &data.tissues,
                    metrics: &tm,
                    balanced_accuracy_se: None,
                },
                MetricsReport {
                    task: "disease",
                    names: &data.diseases,
                    metrics: &dm,
                    balanced_accuracy_se: None,
                },
            ],
        )
    })?;
    dir.write("confusion_tissue.csv", |out| {
        tc.write_csv(out, &data.tissues)
    })?;
    dir.write("confusion_disease.csv", |out| {
        dc.write_csv(out, &data.diseases)
    })
}

/// `sample_id,true_tissue,pred_tissue,true_disease,pred_disease,cic_1..cic_L`.
fn write_model_predictions<W: Write>(
    out: W,
    model: &Model,
    data: &LabeledDataset,
) -> cic_core::Result<()> {
    let codes = model.encode_batch(&data.mrna.values)?;
    let outputs = model.decode_batch(&codes)?;
    let mut w = std::io::BufWriter::new(out);
    let mut header = vec![
        "sample_id",
        "true_tissue",
        "pred_tissue",
        "true_disease",
        "pred_disease",
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    header.extend((1..=codes.cols()).map(|k| format!("cic_{k}")));
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for i in 0..data.len() {
        let mut row = vec![
            data.sample_ids[i].clone(),
            data.tissues[data.tissue_ids[i]].clone(),
            data.tissues[argmax(outputs.tissue.row(i))].clone(),
            data.diseases[data.disease_ids[i]].clone(),
            data.diseases[argmax(outputs.disease.row(i))].clone(),
        ];
        row.extend(codes.row(i).iter().map(f64::to_string));
        writeln!(w, "{}", row.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    train_samples: usize,
    test_samples: usize,
    final_train: &'a TaskMetrics,
    final_test: Option<&'a TaskMetrics>,
}

fn train(ctx: &Ctx, config: &RunConfig, dir: &mut RunDir, data: &Path) -> Result<(), CliError> {
    let dataset = load_data(dir, data)?;
    let spec = config.network_spec(&dataset)?;
    let (train_set, test_set) = split(&dataset, &config.plan(ctx.seed)?).map_err(runtime)?;
    let rng = RngState::new(ctx.seed).derive("train");
    let (mut model, logs) = fit(&spec, &train_set, Some(&test_set), &rng).map_err(classify)?;
    model
        .set_vocabularies(Vocabularies {
            tissues: dataset.tissues.clone(),
            diseases: dataset.diseases.clone(),
        })
        .map_err(runtime)?;
    save_checkpoint(&model, dir.path(MODEL_FILE)).map_err(runtime)?;
    dir.mark(MODEL_FILE);
    dir.write("epochs.csv", |out| write_epochs_csv(out, &logs))?;
    let eval = evaluate(&model, &test_set).map_err(runtime)?;
    write_reports(dir, &test_set, &eval.tissue_pred, &eval.disease_pred)?;
    dir.write("cics.csv", |out| {
        write_model_predictions(out, &model, &test_set)
    })?;
    let last = logs
        .last()
        .ok_or_else(|| CliError::Usage("epochs must be at least 1".into()))?;
    dir.write_json(
        "summary.json",
        &TrainSummary {
            train_samples: train_set.len(),
            test_samples: test_set.len(),
            final_train: &last.train,
            final_test: last.test.as_ref(),
        },
    )
}

#[derive(Serialize)]
struct CvSummary<'a> {
    folds: usize,
    tissue_accuracy: f64,
    tissue_accuracy_se: Option<f64>,
    disease_accuracy: f64,
    disease_accuracy_se: Option<f64>,
    mrna_mse: f64,
    mirna_mse: f64,
    warnings: &'a [String],
}

fn cv(
    ctx: &Ctx,
    config: &RunConfig,
    dir: &mut RunDir,
    dataset: &LabeledDataset,
    spec: &NetworkSpec,
) -> Result<(), CliError> {
    let options = CvOptions {
        plan: config.plan(ctx.seed)?,
        workers: ctx.workers,
    };
    let result = cross_validate(
        spec,
        dataset,
        &options,
        &RngState::new(ctx.seed).derive("cv"),
    )
    .map_err(classify)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    dir.write("metrics.csv", |out| result.write_metrics_csv(out, dataset))?;
    dir.write("confusion_tissue.csv", |out| {
        result.tissue_confusion.write_csv(out, &dataset.tissues)
    })?;
    dir.write("confusion_disease.csv", |out| {
        result.disease_confusion.write_csv(out, &dataset.diseases)
    })?;
    dir.write("cics.csv", |out| {
        write_predictions_csv(out, &result, dataset)
    })?;
    for f in &result.folds {
        dir.write(&format!("epochs_fold{}.csv", f.fold + 1), |out| {
            write_epochs_csv(out, &f.logs)
        })?;
    }
    dir.write_json(
        "summary.json",
        &CvSummary {
            folds: result.folds.len(),
            tissue_accuracy: result.tissue_accuracy,
            tissue_accuracy_se: result.tissue_accuracy_se,
            disease_accuracy: result.disease_accuracy,
            disease_accuracy_se: result.disease_accuracy_se,
            mrna_mse: result.mrna_mse,
            mirna_mse: result.mirna_mse,
            warnings: &result.warnings,
        },
    )
}

#[derive(Serialize)]
struct BestTrial<'a> {
    trial: usize,
    score: Option<f64>,
    values: &'a BTreeMap<String, cic_core::hyperopt::ParamValue>,
    completed: usize,
    failed: usize,
}

fn hyperopt(
    ctx: &Ctx,
    config: &RunConfig,
    dir: &mut RunDir,
    data: &Path,
    resume: bool,
    then_cv: bool,
) -> Result<(), CliError> {
    let h = &config.hyperopt;
    let dataset = load_data(dir, data)?;
    let base = config.network_spec(&dataset)?;
    let space = match &h.space {
        Some(path) => {
            dir.input(path);
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read space {}: {e}", path.display()))
            })?;
            SearchSpace::parse(&text).map_err(usage)?
        }
        None => default_network_space(base.kind),
    };
    let history_path = dir.path("trials.jsonl");
    let history: Vec<TrialRecord> = if resume && history_path.exists() {
        let file = std::fs::File::open(&history_path).map_err(runtime)?;
        read_history(BufReader::new(file), &space).map_err(runtime)?
    } else {
        Vec::new()
    };
    // Rewrite the kept prefix so a torn final line disappears.
    let mut log = std::fs::File::create(&history_path).map_err(runtime)?;
    for r in &history {
        write_history_line(&mut log, r).map_err(runtime)?;
    }
    dir.mark("trials.jsonl");
    let objective = NetworkObjective::new(base.clone(), &dataset, h.objective_epochs, ctx.seed)
        .map_err(classify)?;
    let options = SearchOptions {
        n_trials: h.trials,
        tpe: config.tpe(),
        batch_size: h.batch,
        workers: ctx.workers,
        exhaustive_fallback: false,
    };
    let rng = RngState::new(ctx.seed).derive("hyperopt");
    let outcome = run_search(
        &space,
        |v, r| objective.score(v, r),
        &options,
        &rng,
        history,
        |r| {
            write_history_line(&mut log, r)?;
            log.flush().map_err(|e| Error::Data(e.to_string()))?;
            let score = r.score.map_or("failed".to_string(), |s| format!("{s:.6}"));
            eprintln!("trial {} {}", r.trial, score);
            Ok(())
        },
    )
    .map_err(classify)?;
    let failed = outcome
        .history
        .iter()
        .filter(|r| r.completed_score().is_none())
        .count();
    dir.write_json(
        "best.json",
        &BestTrial {
            trial: outcome.best.trial,
            score: outcome.best.score,
            values: &outcome.best.values,
            completed: outcome.history.len() - failed,
            failed,
        },
    )?;
    let mut best_spec =
        cic_core::hyperopt::apply_assignment(&base, &outcome.best.values).map_err(runtime)?;
    best_spec.epochs = config.network.epochs;
    dir.write_json("best_spec.json", &best_spec)?;
    if then_cv {
        cv(ctx, config, dir, &dataset, &best_spec)?;
    }
    Ok(())
}

fn pca(
    ctx: &Ctx,
    config: &RunConfig,
    dir: &mut RunDir,
    data: &Path,
    model: Option<&Path>,
) -> Result<(), CliError> {
    let (model, dataset) = match model {
        Some(m) => {
            let (model, dataset) = load_model_and_data(dir, m, data)?;
            (Some(model), dataset)
        }
        None => (None, load_data(dir, data)?),
    };
    let k = config.pca.components;
    let folds = config.split.folds;
    let raw = pca_fit(&dataset.mrna.values, k).map_err(classify)?;
    let raw_scores = raw.transform(&dataset.mrna.values).map_err(runtime)?;
    dir.write("pca_raw.csv", |out| {
        write_scores_csv(out, &raw_scores, &dataset, "pc")
    })?;
    let mut rows = vec![("pca_raw".to_string(), raw_scores)];
    if let Some(model) = &model {
        let codes = model.encode_batch(&dataset.mrna.values).map_err(runtime)?;
        let cic_pca = pca_fit(&codes, k.min(codes.cols())).map_err(classify)?;
        let cic_scores = cic_pca.transform(&codes).map_err(runtime)?;
        dir.write("pca_cic.csv", |out| {
            write_scores_csv(out, &cic_scores, &dataset, "pc")
        })?;
        rows.push(("cic".to_string(), codes));
    }
    dir.write("separability.csv", |out| {
        let mut w = std::io::BufWriter::new(out);
        writeln!(w, "space,dimensions,tissue,disease").map_err(io)?;
        for (name, scores) in &rows {
            let t = separability_score(scores, &dataset.tissue_ids, folds, ctx.seed)?;
            let d = separability_score(scores, &dataset.disease_ids, folds, ctx.seed)?;
            writeln!(w, "{name},{},{t},{d}", scores.cols()).map_err(io)?;
        }
        w.flush().map_err(io)
    })
}

fn baseline(
    ctx: &Ctx,
    config: &RunConfig,
    dir: &mut RunDir,
    data: &Path,
    features: FeatureChoice,
    model: Option<&Path>,
) -> Result<(), CliError> {
    let (model, dataset) = match model {
        Some(m) => {
            let (model, dataset) = load_model_and_data(dir, m, data)?;
            (Some(model), dataset)
        }
        None => (None, load_data(dir, data)?),
    };
    // Same hold-out split as `train` with this seed.
    let (train_idx, test_idx) =
        holdout_indices(&dataset, &config.plan(ctx.seed)?).map_err(runtime)?;
    let x_train_raw = dataset.mrna.values.select_rows(&train_idx);
    let x_test_raw = dataset.mrna.values.select_rows(&test_idx);
    let (x_train, x_test, label) = match features {
        FeatureChoice::Raw => (x_train_raw, x_test_raw, "raw".to_string()),
        FeatureChoice::Pca => {
            let p = pca_fit(&x_train_raw, config.pca.components).map_err(classify)?;
            (
                p.transform(&x_train_raw).map_err(runtime)?,
                p.transform(&x_test_raw).map_err(runtime)?,
                format!("pca{}", config.pca.components),
            )
        }
    };
    let b = &config.baseline;
    let search = KnnSearch {
        k_options: b.k.clone(),
        metrics: b.metrics.clone(),
        n_trials: b.trials,
        fold_count: b.folds,
        workers: ctx.workers,
    };
    let rng = RngState::new(ctx.seed).derive("baseline");
    let pick = |ids: &[usize]| -> Vec<usize> { train_idx.iter().map(|&i| ids[i]).collect() };
    let truth = |ids: &[usize]| -> Vec<usize> { test_idx.iter().map(|&i| ids[i]).collect() };
    let run_task = |ids: &[usize], task: &str| -> Result<(KnnSetting, f64), CliError> {
        let y = pick(ids);
        let best = tune_knn(&x_train, &y, &search, &rng.derive(task)).map_err(classify)?;
        let pred = knn_predict(&x_train, &y, &x_test, best.k, best.metric, ctx.workers)
            .map_err(runtime)?;
        Ok((best, accuracy_of(&truth(ids), &pred).map_err(runtime)?))
    };
    let (ts, ta) = run_task(&dataset.tissue_ids, "tissue")?;
    let (ds, da) = run_task(&dataset.disease_ids, "disease")?;
    let mut rows = vec![ComparisonRow {
        method: "knn".into(),
        tissue_accuracy: Some(ta),
        disease_accuracy: Some(da),
        settings: format!("features={label}; tissue {ts}; disease {ds}"),
    }];
    if let Some(model) = &model {
        let x = dataset.mrna.values.select_rows(&test_idx);
        let out = model.predict_batch(&x).map_err(runtime)?;
        let preds = |m: &Matrix| -> Vec<usize> { m.row_iter().map(argmax).collect() };
        rows.insert(
            0,
            ComparisonRow {
                method: "cic_dnn".into(),
                tissue_accuracy: Some(
                    accuracy_of(&truth(&dataset.tissue_ids), &preds(&out.tissue))
                        .map_err(runtime)?,
                ),
                disease_accuracy: Some(
                    accuracy_of(&truth(&dataset.disease_ids), &preds(&out.disease))
                        .map_err(runtime)?,
                ),
                settings: format!("arch={} cic={}", model.kind(), model.spec().cic_size),
            },
        );
    }
    dir.write("comparison.csv", |out| {
        cic_core::baselines::write_comparison_csv(out, &rows)
    })
}

/// Markdown summary of a run directory: manifest header plus every small
/// CSV table it produced.
fn report(run: &Path) -> Result<String, CliError> {
    let manifest_path = run.join(crate::run::MANIFEST);
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", manifest_path.display())))?;
    let manifest: serde_json::Value = serde_json::from_str(&text).map_err(runtime)?;
    let mut md = format!("# Run `{}`\n\n", run.display());
    for key in ["command", "seed", "workers", "config_sha256"] {
        md += &format!("- {key}: {}\n", manifest[key]);
    }
    for name in ["summary.json", "best.json"] {
        if let Ok(s) = std::fs::read_to_string(run.join(name)) {
            md += &format!("\n## {name}\n\n```json\n{}```\n", s);
        }
    }
    for name in [
        "evaluation.csv",
        "metrics.csv",
        "separability.csv",
        "comparison.csv",
        "sweep.csv",
    ] {
        let path = run.join(name);
        let Ok(file) = std::fs::File::open(&path) else {
            continue;
        };
        md += &format!("\n## {name}\n\n");
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(runtime)?;
            let cells: Vec<&str> = line.split(',').collect();
            md += &format!("| {} |\n", cells.join(" | "));
            if i == 0 {
                md += &format!("|{}\n", " --- |".repeat(cells.len()));
            }
        }
    }
    Ok(md)
}
