//! One function per subcommand. Each writes its artefacts under the
//! configured output directory and a short summary to `log`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use milkit::data::{
    dataset_stats, load_quality_file, read_bags, read_vocabulary, write_bags, write_vocabulary,
    BagDataset, Synthesizer,
};
use milkit::metrics::{correlation_csv, correlation_table, csv_field, evaluate, EvalReport};
use milkit::models::{load_model, save_model, BagPredictor, Model};
use milkit::training::{gradcheck_sweep, train, Ensemble, GradcheckOptions, GradcheckResult};

use crate::config::RunConfig;
use crate::CliError;

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| milkit::Error::Io(e).into())
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| milkit::Error::Io(e).into())
}

fn require(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Missing(format!(
            "{what} {} not found",
            path.display()
        )))
    }
}

fn file_id(path: &Path) -> String {
    path.file_name().map_or_else(
        || path.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    )
}

/// Reads a dataset, taking class names from a `vocabulary.json` beside it
/// when one exists.
pub fn load_dataset(path: &Path) -> Result<BagDataset, CliError> {
    require(path, "dataset")?;
    let dataset = read_bags(path)?;
    let vocab = path.with_file_name("vocabulary.json");
    if vocab.is_file() {
        return Ok(dataset.with_class_names(read_vocabulary(&vocab)?)?);
    }
    Ok(dataset)
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub train: PathBuf,
    pub eval: PathBuf,
    pub vocabulary: PathBuf,
}

/// Writes `train.milb`, `eval.milb` and `vocabulary.json`.
pub fn generate(config: &RunConfig, log: &mut dyn Write) -> Result<Generated, CliError> {
    let train_spec = config.train_synth()?;
    let synth = Synthesizer::new(&train_spec)?;
    let train_set = synth.split(0, &train_spec.counts())?.dataset;
    let eval_set = synth.split(1, &config.eval_synth().counts())?.dataset;

    create_dir(&config.out)?;
    let files = Generated {
        train: config.out.join("train.milb"),
        eval: config.out.join("eval.milb"),
        vocabulary: config.out.join("vocabulary.json"),
    };
    write_bags(&files.train, &train_set)?;
    write_bags(&files.eval, &eval_set)?;
    write_vocabulary(&files.vocabulary, train_set.classes())?;
    for (name, ds) in [("train", &train_set), ("eval", &eval_set)] {
        let stats = dataset_stats(ds);
        let counts: Vec<usize> = stats.class_counts.iter().map(|c| c.1).collect();
        writeln!(
            log,
            "{name}: {} bags, {} classes, dim {}, bags per class {}..{}, labels per bag {:?}",
            ds.len(),
            ds.class_count(),
            ds.dim(),
            counts.last().unwrap_or(&0),
            counts.first().unwrap_or(&0),
            stats.labels_per_bag
        )
        .ok();
    }
    Ok(files)
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub log: PathBuf,
    pub final_loss: Option<f64>,
}

/// Trains on `data` (or the configured training file), writing
/// `model.milm`, `checkpoints/checkpoint-NNNNNN.milm`, `train_log.csv` and
/// the effective `train.cfg`.
pub fn train_cmd(
    config: &RunConfig,
    data: Option<&Path>,
    log: &mut dyn Write,
) -> Result<Trained, CliError> {
    let data = data.map_or_else(|| config.train_data_path(), Path::to_path_buf);
    let dataset = load_dataset(&data)?;
    let spec = config.model_spec(dataset.dim(), dataset.class_count());
    let model = Model::new(spec, config.seed)?;
    let outcome = train(model, &dataset, &config.train_config())?;

    let ckpt_dir = config.out.join("checkpoints");
    create_dir(&ckpt_dir)?;
    let mut checkpoints = Vec::new();
    for c in &outcome.checkpoints {
        let path = ckpt_dir.join(format!("checkpoint-{:06}.milm", c.iteration));
        save_model(&path, &c.model)?;
        checkpoints.push(path);
    }
    let files = Trained {
        model: config.out.join("model.milm"),
        checkpoints,
        log: config.out.join("train_log.csv"),
        final_loss: outcome.log.last().map(|e| e.loss),
    };
    save_model(&files.model, &outcome.model)?;
    write_file(&files.log, outcome.log_csv())?;
    write_file(&config.out.join("train.cfg"), config.to_text())?;
    writeln!(
        log,
        "trained {} on {} bags: {} iterations, final loss {}, {} checkpoints",
        config.head,
        dataset.len(),
        outcome.log.len(),
        files.final_loss.map_or("n/a".into(), |l| format!("{l:.6}")),
        files.checkpoints.len()
    )
    .ok();
    Ok(files)
}

fn has_glob(pattern: &str) -> bool {
    pattern.contains(['*', '?', '['])
}

/// Resolves a model path or checkpoint glob to the files it names, sorted.
/// `last` keeps only the final matches.
pub fn resolve_models(pattern: &str, last: Option<usize>) -> Result<Vec<PathBuf>, CliError> {
    let mut paths = if has_glob(pattern) {
        let entries = glob::glob(pattern)
            .map_err(|e| CliError::Usage(format!("bad glob {pattern:?}: {e}")))?;
        let mut paths = Vec::new();
        for entry in entries {
            paths.push(entry.map_err(|e| milkit::Error::Io(e.into()))?);
        }
        paths.sort();
        paths
    } else {
        vec![PathBuf::from(pattern)]
    };
    if paths.is_empty() {
        return Err(CliError::Missing(format!(
            "no model file matches {pattern:?}"
        )));
    }
    if let Some(n) = last {
        if n == 0 {
            return Err(CliError::Usage("--last must be positive".into()));
        }
        paths.drain(..paths.len().saturating_sub(n));
    }
    Ok(paths)
}

/// Loads one model, or an averaging ensemble of all matched checkpoints.
pub fn load_predictor(pattern: &str, last: Option<usize>) -> Result<Ensemble, CliError> {
    let mut models = Vec::new();
    for path in resolve_models(pattern, last)? {
        require(&path, "model")?;
        models.push(load_model(&path)?);
    }
    Ok(Ensemble::new(models)?)
}

fn check_classes(predictor: &Ensemble, dataset: &BagDataset) -> Result<(), CliError> {
    let spec = predictor.members()[0].spec();
    if spec.classes != dataset.class_count() || spec.input_dim != dataset.dim() {
        return Err(milkit::Error::Shape(format!(
            "model expects {} classes x {} features, dataset has {} x {}",
            spec.classes,
            spec.input_dim,
            dataset.class_count(),
            dataset.dim()
        ))
        .into());
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Evaluated {
    pub report: EvalReport,
    pub json: PathBuf,
    pub csv: PathBuf,
}

/// Writes the report JSON and `per_class.csv`.
pub fn evaluate_cmd(
    config: &RunConfig,
    model: Option<&str>,
    data: Option<&Path>,
    last: Option<usize>,
    log: &mut dyn Write,
) -> Result<Evaluated, CliError> {
    let pattern = model.map_or_else(|| config.model_pattern(), str::to_string);
    let data = data.map_or_else(|| config.eval_data_path(), Path::to_path_buf);
    let predictor = load_predictor(&pattern, last)?;
    let dataset = load_dataset(&data)?;
    check_classes(&predictor, &dataset)?;
    let report =
        evaluate(&predictor, &dataset)?.with_ids(file_id(Path::new(&pattern)), file_id(&data));

    create_dir(&config.out)?;
    let files = Evaluated {
        json: config.report_path(),
        csv: config.out.join("per_class.csv"),
        report,
    };
    write_file(&files.json, files.report.to_json())?;
    write_file(&files.csv, files.report.per_class_csv())?;
    let show = |v: Option<f64>| v.map_or("undefined".into(), |v| format!("{v:.4}"));
    writeln!(
        log,
        "{} members on {} bags: mAP {}, AUC {}, d-prime {}",
        predictor.members().len(),
        dataset.len(),
        show(files.report.map),
        show(files.report.mean_auc),
        show(files.report.dprime_of_mean_auc)
    )
    .ok();
    Ok(files)
}

/// Writes `predictions.csv`: one row of class probabilities per bag.
pub fn predict_cmd(
    config: &RunConfig,
    model: Option<&str>,
    data: Option<&Path>,
    last: Option<usize>,
    log: &mut dyn Write,
) -> Result<PathBuf, CliError> {
    let pattern = model.map_or_else(|| config.model_pattern(), str::to_string);
    let data = data.map_or_else(|| config.eval_data_path(), Path::to_path_buf);
    let predictor = load_predictor(&pattern, last)?;
    let dataset = load_dataset(&data)?;
    check_classes(&predictor, &dataset)?;
    let scores = predictor.predict_dataset(&dataset)?;

    let mut out = String::from("bag_id");
    for name in dataset.classes() {
        write!(out, ",{}", csv_field(name)).unwrap();
    }
    out.push('\n');
    for (i, bag) in dataset.bags().iter().enumerate() {
        out.push_str(&csv_field(&bag.id));
        for v in scores.row(i) {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    create_dir(&config.out)?;
    let path = config.out.join("predictions.csv");
    write_file(&path, out)?;
    writeln!(log, "scored {} bags into {}", dataset.len(), path.display()).ok();
    Ok(path)
}

/// Correlates per-class AP of a report with training-bag counts and label
/// quality; writes `correlation.csv`.
pub fn analyze_cmd(
    config: &RunConfig,
    report: Option<&Path>,
    data: Option<&Path>,
    quality: Option<&Path>,
    log: &mut dyn Write,
) -> Result<PathBuf, CliError> {
    let report_path = report.map_or_else(|| config.report_path(), Path::to_path_buf);
    let data = data.map_or_else(|| config.train_data_path(), Path::to_path_buf);
    require(&report_path, "report")?;
    let text = fs::read_to_string(&report_path).map_err(milkit::Error::Io)?;
    let report = EvalReport::from_json(&text)?;
    let dataset = load_dataset(&data)?;
    if report.classes.len() != dataset.class_count() {
        return Err(milkit::Error::Shape(format!(
            "report covers {} classes, dataset has {}",
            report.classes.len(),
            dataset.class_count()
        ))
        .into());
    }
    let quality = match quality
        .map(Path::to_path_buf)
        .or_else(|| config.quality_file.clone())
    {
        Some(p) => load_quality_file(p, dataset.classes())?,
        None => Default::default(),
    };
    let rows = correlation_table(&report.ap_by_class(), &dataset.class_counts(), &quality)?;
    let csv = correlation_csv(&rows);
    create_dir(&config.out)?;
    let path = config.out.join("correlation.csv");
    write_file(&path, &csv)?;
    log.write_all(csv.as_bytes()).ok();
    Ok(path)
}

/// Writes `labels_per_bag.csv` and `class_counts.csv`.
pub fn stats_cmd(
    config: &RunConfig,
    data: Option<&Path>,
    log: &mut dyn Write,
) -> Result<(PathBuf, PathBuf), CliError> {
    let data = data.map_or_else(|| config.train_data_path(), Path::to_path_buf);
    let dataset = load_dataset(&data)?;
    let stats = dataset_stats(&dataset);
    create_dir(&config.out)?;
    let hist = config.out.join("labels_per_bag.csv");
    let counts = config.out.join("class_counts.csv");
    write_file(&hist, stats.histogram_csv())?;
    write_file(&counts, stats.class_counts_csv(dataset.classes()))?;
    log.write_all(stats.histogram_csv().as_bytes()).ok();
    Ok((hist, counts))
}

/// Runs the full gradient-check sweep and prints one line per combination.
/// Fails when any combination exceeds the tolerance.
pub fn gradcheck_cmd(
    config: &RunConfig,
    inject_fault: bool,
    log: &mut dyn Write,
) -> Result<Vec<GradcheckResult>, CliError> {
    let options = GradcheckOptions {
        step: config.gradcheck_step,
        tolerance: config.gradcheck_tolerance,
        seed: config.seed,
        fault: inject_fault.then_some(milkit::numerics::Fault::SigmoidDerivative),
        ..GradcheckOptions::default()
    };
    let results = gradcheck_sweep(&options)?;
    writeln!(
        log,
        "{:<48} {:>12} {:>8}  status",
        "combination", "max_rel_err", "checked"
    )
    .ok();
    for r in &results {
        let status = if r.passed { "pass" } else { "FAIL" };
        writeln!(
            log,
            "{:<48} {:>12.3e} {:>8}  {status}",
            r.label(),
            r.max_rel_error,
            r.checked
        )
        .ok();
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    writeln!(log, "{} combinations, {failed} failed", results.len()).ok();
    if failed > 0 {
        return Err(CliError::GradcheckFailed(failed));
    }
    Ok(results)
}
