use std::fs;
use std::path::{Path, PathBuf};

use radgaze_core::gaze::{
    build_labels, fixation_stats, read_labeled_file, read_sessions_file, synthesize_sessions, write_labeled_jsonl,
    write_pgm, write_sessions_jsonl, BlobLayout, FindingVocabulary, GazeSession, LabeledSession, SynthSpec,
};
use radgaze_core::model::{Checkpoint, Model, ModelKind};
use radgaze_core::tensor::{GradCheck, Tensor};
use radgaze_core::train::{self, emit_report, ResultSet};
use serde_json::{json, Value};

use crate::config::Resolved;
use crate::error::{require_file, Failure};

fn display_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::RadGazeIntent => "RadGazeIntent",
        ModelKind::Mlp => "MLP",
        ModelKind::Recurrent => "LSTM",
    }
}

/// Provenance fields carried by every JSON artifact.
fn header(command: &str, r: &Resolved) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("command".into(), json!(command));
    m.insert("seed".into(), json!(r.cfg.seed));
    m.insert("config".into(), serde_json::to_value(&r.cfg).expect("config serializes"));
    m
}

fn with_header(command: &str, r: &Resolved, body: Value) -> Value {
    let mut m = header(command, r);
    if let Value::Object(b) = body {
        m.extend(b);
    }
    Value::Object(m)
}

fn write_json(path: &Path, doc: &Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(doc).expect("json serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Failure::runtime("io", format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::runtime("io", format!("{}: {e}", dir.display())))
}

/// `<file>.meta.json` next to a JSONL artifact.
fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// `manifest.json` for commands that write a directory.
fn write_manifest(dir: &Path, command: &str, r: &Resolved, artifacts: &[&str]) -> Result<(), Failure> {
    write_json(
        &dir.join("manifest.json"),
        &with_header(command, r, json!({ "artifacts": artifacts })),
    )
}

fn parse_range(flag: &str, s: &str) -> Result<(usize, usize), Failure> {
    let bad = || Failure::usage(format!("--{flag}: expected LO,HI, got {s:?}"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

/// Maps `f` over `items` on up to `jobs` threads, preserving order.
fn parallel_map<T: Sync, U: Send, E: Send>(
    jobs: usize,
    items: &[T],
    f: impl Fn(&T) -> Result<U, E> + Sync,
) -> Result<Vec<U>, E> {
    if items.is_empty() {
        return Ok(Vec::new());
    }
    let chunk = items.len().div_ceil(jobs.max(1));
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| scope.spawn(|| c.iter().map(&f).collect::<Result<Vec<U>, E>>()))
            .collect();
        let mut out = Vec::with_capacity(items.len());
        for h in handles {
            out.extend(h.join().expect("worker panicked")?);
        }
        Ok(out)
    })
}

fn load_labeled(path: &Path, k: usize) -> Result<Vec<LabeledSession>, Failure> {
    require_file(path)?;
    Ok(read_labeled_file(path, k)?)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, Failure> {
    require_file(path)?;
    Ok(Checkpoint::load(path)?)
}

fn finding_names(ck: &Checkpoint) -> Result<Vec<String>, Failure> {
    let k = ck.model.config.num_findings;
    let stored: Option<Vec<String>> = ck.meta.get("findings").and_then(|v| serde_json::from_value(v.clone()).ok());
    match stored {
        Some(names) if names.len() == k => Ok(names),
        _ => Ok(FindingVocabulary::first(k)?.names().to_vec()),
    }
}

pub fn build_dataset(input: &Path, out: &Path, r: &Resolved, jobs: usize) -> Result<(), Failure> {
    require_file(input)?;
    let vocab = r.cfg.vocabulary()?;
    let k = vocab.k();
    let sessions = read_sessions_file(input, k)?;
    let spec = r.cfg.label_spec();
    let labeled = parallel_map(jobs, &sessions, |s: &GazeSession| {
        build_labels(s, k, &spec).map(|labels| LabeledSession {
            session: s.clone(),
            mode: spec.mode(),
            labels,
        })
    })?;
    write_labeled_jsonl(out, &labeled)?;
    write_json(
        &sidecar(out),
        &with_header(
            "build-dataset",
            r,
            json!({"input": input.display().to_string(), "sessions": labeled.len(), "findings": vocab.names()}),
        ),
    )?;
    println!("labeled {} sessions ({}) -> {}", labeled.len(), spec.mode().as_str(), out.display());
    Ok(())
}

pub fn synth_spec(
    sessions: usize,
    (height, width): (usize, usize),
    layout: &str,
    fixations_per_intention: &str,
    findings_per_session: &str,
    scan_fixations: usize,
) -> Result<SynthSpec, Failure> {
    let layout = match layout {
        "fixed" => BlobLayout::Fixed,
        "shuffled" => BlobLayout::Shuffled,
        o => return Err(Failure::usage(format!("--layout: expected fixed|shuffled, got {o:?}"))),
    };
    Ok(SynthSpec {
        height,
        width,
        num_findings: 0,
        sessions,
        fixations_per_intention: parse_range("fixations-per-intention", fixations_per_intention)?,
        findings_per_session: parse_range("findings-per-session", findings_per_session)?,
        scan_fixations,
        layout,
    })
}

pub fn synth(out: &Path, mut spec: SynthSpec, image_dir: Option<&Path>, r: &Resolved) -> Result<(), Failure> {
    let seed = r.require_seed()?;
    spec.num_findings = r.cfg.vocabulary()?.k();
    let mut sessions: Vec<GazeSession> = synthesize_sessions(&spec, seed)?.into_iter().map(|s| s.session).collect();
    if let Some(rel) = image_dir {
        let dir = out.parent().unwrap_or(Path::new(".")).join(rel);
        create_dir(&dir)?;
        for s in &mut sessions {
            let name = format!("{}.pgm", s.session_id);
            let img = s.image.as_ref().expect("synthetic sessions carry images");
            write_pgm(&dir.join(&name), img)
                .map_err(|e| Failure::runtime("io", format!("{}: {e}", dir.join(&name).display())))?;
            s.image_file = Some(rel.join(&name).to_string_lossy().replace('\\', "/"));
        }
    }
    write_sessions_jsonl(out, &sessions)?;
    write_json(&sidecar(out), &with_header("synth", r, json!({ "synth": spec })))?;
    println!("wrote {} synthetic sessions -> {}", sessions.len(), out.display());
    Ok(())
}

pub fn stats(data: &Path, out: &Path, bin_width: usize, r: &Resolved) -> Result<(), Failure> {
    let vocab = r.cfg.vocabulary()?;
    let dataset = load_labeled(data, vocab.k())?;
    let report = fixation_stats(&dataset, &vocab, bin_width)?;
    create_dir(out)?;
    write_json(
        &out.join("stats.json"),
        &with_header("stats", r, json!({"bin_width": bin_width, "stats": report})),
    )?;
    fs::write(out.join("histogram.csv"), report.histogram_csv())?;
    fs::write(out.join("boxplot.csv"), report.boxplot_csv())?;
    write_manifest(out, "stats", r, &["stats.json", "histogram.csv", "boxplot.csv"])?;
    println!(
        "{} sessions, median length {:.1} -> {}",
        report.sessions,
        report.lengths.median,
        out.display()
    );
    Ok(())
}

pub fn train(data: &Path, val: Option<&Path>, out: &Path, r: &Resolved) -> Result<(), Failure> {
    let seed = r.require_seed()?;
    let vocab = r.cfg.vocabulary()?;
    let k = vocab.k();
    let mcfg = r.cfg.model_config(k)?;
    let tcfg = r.cfg.train_config()?;
    let dataset = load_labeled(data, k)?;
    let val_set = val.map(|p| load_labeled(p, k)).transpose()?;
    let outcome = train::train(&dataset, r.cfg.model, &tcfg, &mcfg, val_set.as_deref())?;

    let train_eval = train::evaluate(&outcome.model, &dataset, tcfg.threshold)?;
    let val_eval = val_set
        .as_deref()
        .map(|v| train::evaluate(&outcome.model, v, tcfg.threshold))
        .transpose()?;
    let name = display_name(r.cfg.model);
    let mut rows = vec![(format!("{name} (train)"), train_eval.metrics)];
    if let Some(v) = &val_eval {
        rows.push((format!("{name} (val)"), v.metrics));
    }
    let rendered = emit_report(&ResultSet::Metrics(rows))?;

    create_dir(out)?;
    let meta = json!({
        "seed": seed,
        "config": r.cfg,
        "findings": vocab.names(),
        "iterations_run": outcome.iterations_run,
    });
    Checkpoint::new(outcome.model, meta).save(&out.join("model.ckpt"))?;
    let mut log = String::new();
    for rec in &outcome.log {
        log.push_str(&serde_json::to_string(rec).expect("log serializes"));
        log.push('\n');
    }
    fs::write(out.join("train_log.jsonl"), log)?;
    write_json(
        &out.join("metrics.json"),
        &with_header(
            "train",
            r,
            json!({
                "findings": vocab.names(),
                "iterations_run": outcome.iterations_run,
                "train": train_eval,
                "val": val_eval,
                "report": rendered.text,
            }),
        ),
    )?;
    write_manifest(out, "train", r, &["model.ckpt", "train_log.jsonl", "metrics.json"])?;
    print!("{}", rendered.text);
    Ok(())
}

pub fn eval(ckpt: &Path, data: &Path, out: &Path, r: &Resolved) -> Result<(), Failure> {
    let ck = load_checkpoint(ckpt)?;
    let dataset = load_labeled(data, ck.model.config.num_findings)?;
    let e = train::evaluate(&ck.model, &dataset, r.cfg.threshold)?;
    let rendered = emit_report(&ResultSet::Metrics(vec![(display_name(ck.model.kind).to_string(), e.metrics)]))?;
    write_json(
        out,
        &with_header(
            "eval",
            r,
            json!({
                "checkpoint": ck.meta,
                "threshold": r.cfg.threshold,
                "evaluation": e,
                "report": rendered.text,
            }),
        ),
    )?;
    print!("{}", rendered.text);
    Ok(())
}

pub fn cv(data: &Path, out: &Path, r: &Resolved, jobs: usize) -> Result<(), Failure> {
    r.require_seed()?;
    let k = r.cfg.vocabulary()?.k();
    let mcfg = r.cfg.model_config(k)?;
    let tcfg = r.cfg.train_config()?;
    let dataset = load_labeled(data, k)?;
    let outcome = train::cross_validate(&dataset, r.cfg.folds, r.cfg.model, &tcfg, &mcfg, jobs.max(1))?;
    let rendered = emit_report(&ResultSet::CrossValidation(vec![(
        display_name(r.cfg.model).to_string(),
        outcome.report.clone(),
    )]))?;
    create_dir(out)?;
    write_json(
        &out.join("cv.json"),
        &with_header(
            "cv",
            r,
            json!({
                "folds": r.cfg.folds,
                "metrics": outcome.report,
                "fold_results": outcome.folds,
                "report": rendered.text,
            }),
        ),
    )?;
    write_manifest(out, "cv", r, &["cv.json"])?;
    print!("{}", rendered.text);
    Ok(())
}

pub fn ablate(data: &Path, out: &Path, r: &Resolved, jobs: usize) -> Result<(), Failure> {
    r.require_seed()?;
    if r.cfg.model != ModelKind::RadGazeIntent {
        return Err(Failure::usage("ablate only applies to model=radgazeintent".into()));
    }
    let k = r.cfg.vocabulary()?.k();
    let mcfg = r.cfg.model_config(k)?;
    let tcfg = r.cfg.train_config()?;
    let dataset = load_labeled(data, k)?;
    let table = train::run_ablations(&dataset, &mcfg, &tcfg, r.cfg.folds, jobs.max(1))?;
    let rendered = emit_report(&ResultSet::Ablation(table))?;
    create_dir(out)?;
    write_json(
        &out.join("ablation.json"),
        &with_header(
            "ablate",
            r,
            json!({
                "folds": r.cfg.folds,
                "table": rendered.document,
                "report": rendered.text,
            }),
        ),
    )?;
    write_manifest(out, "ablate", r, &["ablation.json"])?;
    print!("{}", rendered.text);
    Ok(())
}

pub fn gradcheck(out: Option<&Path>, r: &Resolved) -> Result<(), Failure> {
    let seed = r.require_seed()?;
    let cfg = &r.cfg;
    if cfg.gradcheck_fixations == 0 {
        return Err(Failure::usage("gradcheck_fixations must be >= 1".into()));
    }
    let k = cfg.vocabulary()?.k();
    let mcfg = cfg.model_config(k)?;
    let spec = SynthSpec {
        height: cfg.image_height,
        width: cfg.image_width,
        num_findings: k,
        sessions: 1,
        fixations_per_intention: (2, 3),
        findings_per_session: (1, k.min(2)),
        scan_fixations: 1,
        layout: BlobLayout::Fixed,
    };
    let mut session = synthesize_sessions(&spec, seed)?.remove(0).session;
    session.fixations.truncate(cfg.gradcheck_fixations);
    let labels = build_labels(&session, k, &cfg.label_spec())?;
    let target = Tensor::new(vec![labels.rows(), k], labels.to_f64()).map_err(|e| Failure::runtime("internal", e.to_string()))?;

    let model = Model::init(cfg.model, mcfg, seed)?;
    let input = model.input(&session)?;
    let check = GradCheck {
        step: cfg.gradcheck_step,
        max_coords_per_tensor: (cfg.gradcheck_coords > 0).then_some(cfg.gradcheck_coords),
        seed,
        ..GradCheck::default()
    };
    let report = model.gradcheck(&input, &target, &check)?;
    let passed = report.max_rel_err < cfg.gradcheck_tolerance;
    let summary = json!({
        "passed": passed,
        "max_rel_err": report.max_rel_err,
        "mean_rel_err": report.mean_rel_err,
        "checked": report.checked,
        "tolerance": cfg.gradcheck_tolerance,
        "fixations": session.len(),
        "parameters": model.params.len(),
    });
    println!("{summary}");
    if let Some(path) = out {
        write_json(
            path,
            &with_header(
                "gradcheck",
                r,
                json!({ "summary": summary, "worst": report.worst(), "coords": report.coords }),
            ),
        )?;
    }
    if passed {
        Ok(())
    } else {
        Err(Failure::runtime(
            "gradcheck",
            format!(
                "max relative error {:.3e} is not below {:.1e}",
                report.max_rel_err, cfg.gradcheck_tolerance
            ),
        ))
    }
}

pub fn predict(ckpt: &Path, session_path: &Path, out: &Path, r: &Resolved) -> Result<(), Failure> {
    let ck = load_checkpoint(ckpt)?;
    let names = finding_names(&ck)?;
    require_file(session_path)?;
    let sessions = read_sessions_file(session_path, names.len())?;
    if sessions.is_empty() {
        return Err(Failure::usage(format!("{}: no sessions", session_path.display())));
    }
    let thr = r.cfg.threshold;
    let mut docs = Vec::with_capacity(sessions.len());
    for s in &sessions {
        let conf = ck.model.predict(s)?;
        let fixations: Vec<Value> = s
            .fixations
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let row = conf.row(i);
                let scores: serde_json::Map<String, Value> =
                    names.iter().zip(row).map(|(n, &p)| (n.clone(), json!(p))).collect();
                let predicted: Vec<&String> = names.iter().zip(row).filter(|(_, &p)| p > thr).map(|(n, _)| n).collect();
                json!({
                    "index": i,
                    "x": f.x,
                    "y": f.y,
                    "timestamp_s": f.timestamp_s,
                    "scores": scores,
                    "predicted": predicted,
                })
            })
            .collect();
        let matrix: Vec<&[f64]> = (0..s.len()).map(|i| conf.row(i)).collect();
        docs.push(json!({"session_id": s.session_id, "confidences": matrix, "fixations": fixations}));
    }
    write_json(
        out,
        &with_header(
            "predict",
            r,
            json!({"checkpoint": ck.meta, "threshold": thr, "findings": names, "sessions": docs}),
        ),
    )?;
    println!("scored {} sessions -> {}", sessions.len(), out.display());
    Ok(())
}
