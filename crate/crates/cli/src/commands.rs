use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use samm2d::config::RunConfig;
use samm2d::evaluation::{calibrate, ScoredSet};
use samm2d::imaging::{
    load_samples, preprocess_dataset, write_sample, AugmentRegime, RegimeId, Sample,
};
use samm2d::model::{load_checkpoint, save_checkpoint, Samm2dModel};
use samm2d::report::{
    line_chart_svg, num, svg_with_comments, write_csv, write_json, write_text, Series,
};
use samm2d::saliency::{attention_report, random_baseline, to_pgm};
use samm2d::synthgen::{gen_dataset, Manifest, MANIFEST_FILE};
use samm2d::training::{
    init_model, run_ablation, run_cv, stratified_holdout, train_one, LabeledImages, HISTORY_COLUMNS,
};
use samm2d::{Error, Result};

use crate::output::{with_output, OutputDir};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
const REPORT_FILE: &str = "report.json";
const REPORT_SERIES_FILE: &str = "report_files.csv";

pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

/// Accepts either a manifest file or a directory containing one.
fn read_manifest(path: &Path) -> Result<Manifest> {
    let file = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    };
    if !file.exists() {
        return Err(Error::Data(format!("no manifest at {}", file.display())));
    }
    Manifest::read(&file)
}

fn read_samples(path: &Path) -> Result<Vec<Sample>> {
    let samples = load_samples(&read_manifest(path)?)?;
    if samples.is_empty() {
        return Err(Error::Data(format!(
            "{}: manifest lists no samples",
            path.display()
        )));
    }
    Ok(samples)
}

fn with_command(cfg: &RunConfig, command: String) -> Vec<String> {
    let mut lines = cfg.provenance_lines();
    lines.insert(1, command);
    lines
}

fn json_with_provenance(cfg: &RunConfig, command: &str, body: Value) -> Value {
    let mut v = json!({ "provenance": cfg.provenance_json(), "command": command });
    if let (Some(obj), Value::Object(extra)) = (v.as_object_mut(), body) {
        obj.extend(extra);
    }
    v
}

fn write_svg(path: &Path, comments: &[String], svg: &str) -> Result<()> {
    write_text(path, &svg_with_comments(comments, svg))
}

pub fn gen(
    cfg: &mut RunConfig,
    n: usize,
    prevalence: Option<f32>,
    seed: u64,
    out: &Path,
) -> Result<()> {
    if let Some(p) = prevalence {
        cfg.gen.prevalence = p;
    }
    cfg.validate()?;
    let comments = with_command(cfg, format!("gen n={n} seed={seed}"));
    let manifest = with_output(out, |o| gen_dataset(n, &cfg.gen, seed, o.path(), &comments))?;
    eprintln!(
        "gen: {} studies, {} positive",
        manifest.rows.len(),
        manifest.positives()
    );
    Ok(())
}

pub fn preprocess(
    cfg: &RunConfig,
    manifest: &Path,
    regime: RegimeId,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let input = read_manifest(manifest)?;
    let aug = AugmentRegime::new(regime, &cfg.augment)?;
    let comments = with_command(cfg, format!("preprocess regime={regime} seed={seed}"));
    let m = with_output(out, |o| {
        preprocess_dataset(&input, &cfg.preprocess, &aug, seed, o.path(), &comments)
    })?;
    eprintln!("preprocess: {} samples under {regime}", m.rows.len());
    Ok(())
}

pub fn train(
    cfg: &RunConfig,
    data: &Path,
    val: Option<&Path>,
    permute_labels: bool,
    out: &Path,
) -> Result<()> {
    let setup = cfg.setup();
    setup.validate()?;
    let samples = read_samples(data)?;
    let val_samples = val.map(read_samples).transpose()?;
    let (train_set, val_set) = match &val_samples {
        Some(v) => (LabeledImages::all(&samples)?, LabeledImages::all(v)?),
        None => {
            let all = LabeledImages::all(&samples)?;
            let (tr, va) =
                stratified_holdout(&all.labels, setup.train.val_fraction, setup.train.seed)?;
            (
                LabeledImages::select(&samples, &tr)?,
                LabeledImages::select(&samples, &va)?,
            )
        }
    };
    let train_set = if permute_labels {
        train_set.with_permuted_labels(setup.train.seed)
    } else {
        train_set
    };
    let command = format!(
        "train val={} permute_labels={permute_labels}",
        if val.is_some() { "separate" } else { "holdout" }
    );
    let comments = with_command(cfg, command.clone());

    let mut model = init_model(&setup)?;
    let outcome = train_one(&mut model, &train_set, &val_set, &setup)?;
    let best_auc = outcome
        .history
        .records
        .iter()
        .find(|r| r.epoch == outcome.best_epoch)
        .and_then(|r| r.val_auc);

    with_output(out, |o| {
        let mut meta = BTreeMap::new();
        meta.insert("tool".to_string(), samm2d::config::TOOL_NAME.to_string());
        meta.insert(
            "version".to_string(),
            samm2d::config::TOOL_VERSION.to_string(),
        );
        meta.insert("config".to_string(), cfg.to_toml());
        meta.insert("command".to_string(), command.clone());
        meta.insert("best_epoch".to_string(), outcome.best_epoch.to_string());
        save_checkpoint(o.join(CHECKPOINT_FILE), &outcome.best, &meta)?;
        write_text(&o.join("history.csv"), &outcome.history.to_csv(&comments)?)?;

        let recs = &outcome.history.records;
        let series = |name: &str, f: &dyn Fn(&samm2d::training::EpochRecord) -> Option<f64>| {
            Series::new(
                name,
                recs.iter()
                    .filter_map(|r| f(r).map(|y| (r.epoch as f64, y)))
                    .collect(),
            )
        };
        let loss = line_chart_svg(
            "Focal loss",
            "epoch",
            "loss",
            &[
                series("train", &|r| Some(r.train_loss)),
                series("validation", &|r| r.val_loss),
            ],
            None,
        );
        write_svg(&o.join("loss.svg"), &comments, &loss)?;
        let auc = line_chart_svg(
            "Validation AUC",
            "epoch",
            "AUC",
            &[series("validation", &|r| r.val_auc)],
            Some((1.0, recs.len().max(2) as f64, 0.0, 1.0)),
        );
        write_svg(&o.join("val_auc.svg"), &comments, &auc)?;

        let summary = json!({
            "n_train": train_set.len(),
            "n_val": val_set.len(),
            "permuted_labels": permute_labels,
            "parameters": outcome.best.num_params(),
            "epochs_run": recs.len(),
            "best_epoch": outcome.best_epoch,
            "best_val_loss": outcome.best_val_loss,
            "best_val_auc": best_auc,
            "max_val_auc": recs.iter().filter_map(|r| r.val_auc).fold(None, |a: Option<f64>, v| Some(a.map_or(v, |a| a.max(v)))),
            "stopped_early": outcome.stopped_early,
            "augment_calls": outcome.augment_calls,
            "optimizer_steps": outcome.optimizer_steps,
            "history_columns": HISTORY_COLUMNS,
        });
        write_json(
            &o.join("train.json"),
            &json_with_provenance(cfg, &command, summary),
        )
    })?;
    eprintln!(
        "train: {} epochs, best epoch {} (val loss {:.6}, val AUC {})",
        outcome.history.len(),
        outcome.best_epoch,
        outcome.best_val_loss,
        best_auc.map_or("n/a".to_string(), |a| format!("{a:.4}"))
    );
    Ok(())
}

pub fn cv(cfg: &mut RunConfig, data: &Path, folds: Option<usize>, out: &Path) -> Result<()> {
    if let Some(k) = folds {
        cfg.train.folds = k;
    }
    cfg.validate()?;
    let samples = read_samples(data)?;
    let report = run_cv(&samples, &cfg.setup())?;
    let command = format!("cv k={}", cfg.train.folds);
    let comments = with_command(cfg, command.clone());
    with_output(out, |o| {
        write_text(&o.join("cv.csv"), &report.to_csv(&comments)?)?;
        write_json(
            &o.join("cv.json"),
            &json_with_provenance(cfg, &command, json!({ "cv": report })),
        )
    })?;
    eprintln!(
        "cv: AUC {:.4} +/- {:.4} over {} folds",
        report.summary.auc.mean, report.summary.auc.sd, report.k
    );
    Ok(())
}

pub fn ablation(cfg: &RunConfig, data: &Path, out: &Path) -> Result<()> {
    cfg.validate()?;
    let samples = read_samples(data)?;
    let report = run_ablation(&samples, &cfg.setup(), &RegimeId::ALL)?;
    let command = format!(
        "ablation regimes={} k={}",
        RegimeId::ALL.len(),
        cfg.train.folds
    );
    let comments = with_command(cfg, command.clone());
    with_output(out, |o| {
        write_text(&o.join("ablation.csv"), &report.to_csv(&comments)?)?;
        write_json(
            &o.join("ablation.json"),
            &json_with_provenance(
                cfg,
                &command,
                json!({ "rows": report.rows, "cv": report.cv }),
            ),
        )
    })?;
    for r in &report.rows {
        eprintln!(
            "ablation: {} AUC {:.4} +/- {:.4}",
            r.regime, r.auc_mean, r.auc_sd
        );
    }
    Ok(())
}

/// Config stored in a checkpoint unless one is given explicitly; the
/// model architecture always comes from the checkpoint.
fn checkpoint_and_config(
    checkpoint: &Path,
    config: Option<&Path>,
) -> Result<(Samm2dModel<f32>, RunConfig)> {
    let ckpt = load_checkpoint(checkpoint)?;
    let mut cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => {
            let text = ckpt.meta.get("config").ok_or_else(|| {
                Error::Data(format!(
                    "{}: checkpoint carries no config",
                    checkpoint.display()
                ))
            })?;
            RunConfig::from_toml(text)?
        }
    };
    cfg.model = ckpt.model.config().clone();
    Ok((ckpt.model, cfg))
}

pub fn calibrate_cmd(
    checkpoint: &Path,
    config: Option<&Path>,
    data: &Path,
    out: &Path,
) -> Result<()> {
    let (model, cfg) = checkpoint_and_config(checkpoint, config)?;
    let samples = read_samples(data)?;
    let set = LabeledImages::all(&samples)?;
    let probs = model.predict(&set.images, cfg.train.batch_size)?;
    let scored = ScoredSet::new(
        probs.iter().map(|p| p.clamp(0.0, 1.0)).collect(),
        set.labels.clone(),
    )?;
    let report = calibrate(&scored, &cfg.calibration, &cfg.modes, &cfg.cost)?;
    let command = "calibrate".to_string();
    let comments = with_command(&cfg, command.clone());
    with_output(out, |o| {
        let rows: Vec<Vec<String>> = report
            .curve
            .iter()
            .map(|p| {
                vec![
                    num(p.tau),
                    num(p.f1),
                    num(p.sensitivity),
                    num(p.specificity),
                    num(p.precision),
                ]
            })
            .collect();
        write_csv(
            &o.join("sweep.csv"),
            &comments,
            &["tau", "f1", "sensitivity", "specificity", "precision"],
            &rows,
        )?;
        let roc: Vec<Vec<String>> = report
            .roc
            .iter()
            .map(|&(f, t)| vec![num(f), num(t)])
            .collect();
        write_csv(&o.join("roc.csv"), &comments, &["fpr", "tpr"], &roc)?;
        let modes: Vec<Vec<String>> = report
            .modes
            .iter()
            .map(|m| {
                vec![
                    m.name.clone(),
                    num(m.tau),
                    num(m.metrics.sensitivity),
                    num(m.metrics.specificity),
                    num(m.metrics.precision),
                    num(m.metrics.f1),
                    num(m.projected_savings),
                ]
            })
            .collect();
        write_csv(
            &o.join("operating_modes.csv"),
            &comments,
            &[
                "mode",
                "tau",
                "sensitivity",
                "specificity",
                "precision",
                "f1",
                "projected_savings",
            ],
            &modes,
        )?;
        let pts = |f: fn(&samm2d::evaluation::SweepPoint) -> f64| -> Vec<(f64, f64)> {
            report.curve.iter().map(|p| (p.tau, f(p))).collect()
        };
        let (lo, hi) = (cfg.calibration.lo, cfg.calibration.hi);
        let sweep_svg = line_chart_svg(
            "Threshold sweep",
            "tau",
            "rate",
            &[
                Series::new("F1", pts(|p| p.f1)),
                Series::new("sensitivity", pts(|p| p.sensitivity)),
                Series::new("specificity", pts(|p| p.specificity)),
                Series::new("precision", pts(|p| p.precision)),
            ],
            Some((lo, hi, 0.0, 1.0)),
        );
        write_svg(&o.join("sweep.svg"), &comments, &sweep_svg)?;
        let roc_svg = line_chart_svg(
            "ROC",
            "false positive rate",
            "true positive rate",
            &[
                Series::new("model", report.roc.clone()),
                Series::new("chance", vec![(0.0, 0.0), (1.0, 1.0)]),
            ],
            Some((0.0, 1.0, 0.0, 1.0)),
        );
        write_svg(&o.join("roc.svg"), &comments, &roc_svg)?;
        write_json(
            &o.join("calibration.json"),
            &json_with_provenance(&cfg, &command, json!({ "calibration": report })),
        )
    })?;
    eprintln!(
        "calibrate: AUC {:.4}, tau* {:.3}, F1* {:.4}",
        report.auc, report.tau_star, report.f1_star
    );
    Ok(())
}

pub fn gradcam_cmd(
    checkpoint: &Path,
    config: Option<&Path>,
    data: &Path,
    n: Option<usize>,
    stage: Option<usize>,
    out: &Path,
) -> Result<()> {
    let (model, mut cfg) = checkpoint_and_config(checkpoint, config)?;
    if let Some(n) = n {
        cfg.saliency.n_cases = n;
    }
    if stage.is_some() {
        cfg.saliency.stage = stage;
    }
    cfg.validate()?;
    let samples = read_samples(data)?;
    let report = attention_report(&model, &samples, &cfg.saliency)?;
    let baseline = random_baseline(&samples, &cfg.saliency)?;
    let command = format!("gradcam n={}", cfg.saliency.n_cases);
    let comments = with_command(&cfg, command.clone());
    with_output(out, |o| {
        let maps = o.join("heatmaps");
        fs::create_dir_all(&maps).map_err(|e| Error::io(&maps, e))?;
        for (case, heat) in report.cases.iter().zip(&report.heatmaps) {
            let path = maps.join(format!("case_{:05}.pgm", case.index));
            fs::write(&path, to_pgm(&heat.values, &comments)).map_err(|e| Error::io(&path, e))?;
            let source = &samples[case.index];
            let map = Sample {
                image: heat.values.clone(),
                label: source.label,
                view: source.view,
                mask: source.mask.clone(),
            };
            write_sample(maps.join(format!("case_{:05}.mip2", case.index)), &map)?;
        }
        let rows: Vec<Vec<String>> = report
            .cases
            .iter()
            .map(|c| {
                vec![
                    c.index.to_string(),
                    num(c.prob),
                    c.hit.to_string(),
                    num(c.iou),
                ]
            })
            .collect();
        write_csv(
            &o.join("cases.csv"),
            &comments,
            &["index", "prob", "hit", "iou"],
            &rows,
        )?;
        let body = json!({
            "stats": report.stats,
            "random_baseline": baseline,
            "requested": report.requested,
            "available_tp": report.available_tp,
            "stage": report.heatmaps.first().map(|h| h.stage),
            "encoder": cfg.saliency.encoder,
            "cases": report.cases,
        });
        write_json(
            &o.join("attention.json"),
            &json_with_provenance(&cfg, &command, body),
        )
    })?;
    eprintln!(
        "gradcam: {} cases, on-target {:.3}, mean IoU {:.4} (random {:.4})",
        report.stats.n_cases,
        report.stats.frac_tp_on_target,
        report.stats.mean_iou,
        baseline.mean_iou
    );
    Ok(())
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            walk(root, &p, out)?;
        } else {
            out.push(
                p.strip_prefix(root)
                    .expect("walked under root")
                    .to_path_buf(),
            );
        }
    }
    Ok(())
}

fn slash_path(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Collects every JSON report under `run_dir` into one document and lists
/// every file with its size and CRC32.
pub fn report(run_dir: &Path) -> Result<()> {
    if !run_dir.is_dir() {
        return Err(Error::Data(format!(
            "{} is not a directory",
            run_dir.display()
        )));
    }
    let mut files = Vec::new();
    walk(run_dir, run_dir, &mut files)?;
    files.retain(|f| {
        let s = slash_path(f);
        s != REPORT_FILE && s != REPORT_SERIES_FILE
    });

    let mut sections = serde_json::Map::new();
    let mut listing = Vec::new();
    let mut rows = Vec::new();
    for f in &files {
        let path = run_dir.join(f);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let name = slash_path(f);
        let crc = format!("{:08x}", crc32fast::hash(&bytes));
        if name.ends_with(".json") {
            let v: Value =
                serde_json::from_slice(&bytes).map_err(|e| Error::Data(format!("{name}: {e}")))?;
            sections.insert(name.clone(), v);
        }
        let kind = name.rsplit('.').next().unwrap_or("").to_string();
        listing.push(json!({ "file": name, "kind": kind, "bytes": bytes.len(), "crc32": crc }));
        rows.push(vec![name, kind, bytes.len().to_string(), crc]);
    }
    let doc = json!({
        "tool": samm2d::config::TOOL_NAME,
        "version": samm2d::config::TOOL_VERSION,
        "sections": sections,
        "files": listing,
    });
    let comments = vec![format!(
        "{} {}",
        samm2d::config::TOOL_NAME,
        samm2d::config::TOOL_VERSION
    )];
    // report files land next to their inputs; a failed run removes only them
    let dir = OutputDir::open(run_dir)?;
    let result = write_json(&dir.join(REPORT_FILE), &doc).and_then(|()| {
        write_csv(
            &dir.join(REPORT_SERIES_FILE),
            &comments,
            &["file", "kind", "bytes", "crc32"],
            &rows,
        )
    });
    if result.is_err() {
        dir.rollback();
    }
    result?;
    eprintln!(
        "report: {} files, {} JSON sections",
        files.len(),
        sections_len(&doc)
    );
    Ok(())
}

fn sections_len(doc: &Value) -> usize {
    doc["sections"].as_object().map_or(0, |m| m.len())
}
