use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use odr_core::behavior::{self, Strategy};
use odr_core::domain::{read_corpus, read_jsonl, write_corpus, write_jsonl, DisputeCase, OutcomeLabel, Party};
use odr_core::eval::{
    ablate_prepared, default_space, evaluate_folds, out_of_fold_scores, prepare_corpus_folds, random_search,
    segment_evaluate, AblationMode, AblationReport, CvReport, EvalReport,
};
use odr_core::features::Matrix;
use odr_core::interpret::{gain_importance, shapley_summary, ExplainOptions};
use odr_core::learners::{save_model, LearnerSpec, Model};
use odr_core::pipeline::{labeled_cases, train_pipeline, PipelineConfig};
use odr_core::synth::{generate_corpus, generate_timelines, write_manifest, GeneratorConfig};
use odr_service::{prediction_payload, ActiveModel, ServiceConfig};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, Result};
use crate::manifest::{sibling, Recorder};
use crate::output::{write_csv, write_json};
use crate::{AblateArgs, ChurnArgs, ErrorArgs, EvalArgs, ExplainArgs, GenArgs, PolitenessArgs, SearchArgs, ServeArgs, TrainArgs};

fn require(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("input file {} does not exist", path.display())))
    }
}

fn load_corpus(path: &Path, rec: &mut Recorder) -> Result<Vec<DisputeCase>> {
    require(path)?;
    rec.input(path);
    Ok(read_corpus(path)?)
}

fn load_model(path: &Path, rec: &mut Recorder) -> Result<ActiveModel> {
    require(path)?;
    rec.input(path);
    Ok(ActiveModel::load(path)?)
}

fn check_folds(k: usize) -> Result<()> {
    if k < 2 {
        return Err(CliError::Usage(format!("--folds must be at least 2, got {k}")));
    }
    Ok(())
}

/// Default parameters of `kind` with the keys of `params` overlaid.
pub fn learner_spec(kind: &str, params: Option<&str>) -> Result<LearnerSpec> {
    let base = LearnerSpec::default_for(kind)?;
    let Some(text) = params else {
        return Ok(base);
    };
    let overlay: serde_json::Map<String, Value> =
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("--params is not a JSON object: {e}")))?;
    let mut value = serde_json::to_value(&base).expect("specs serialize");
    let slot = value
        .get_mut("params")
        .and_then(Value::as_object_mut)
        .ok_or_else(|| CliError::Usage(format!("learner `{kind}` takes no parameters")))?;
    for (k, v) in overlay {
        if !slot.contains_key(&k) {
            return Err(CliError::Usage(format!("learner `{kind}` has no parameter `{k}`")));
        }
        slot.insert(k, v);
    }
    serde_json::from_value(value).map_err(|e| CliError::Usage(format!("--params: {e}")))
}

fn parent_dir(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct MetricRow {
    learner: String,
    fold: String,
    auroc: f64,
    accuracy: f64,
    precision: f64,
    recall: f64,
    f1: f64,
    n: Option<usize>,
    positives: Option<usize>,
}

fn metric_rows(cv: &CvReport) -> Vec<MetricRow> {
    let fold_row = |fold: String, r: &EvalReport| MetricRow {
        learner: cv.learner.clone(),
        fold,
        auroc: r.auroc,
        accuracy: r.accuracy,
        precision: r.precision,
        recall: r.recall,
        f1: r.f1,
        n: Some(r.n),
        positives: Some(r.positives),
    };
    let mut rows: Vec<MetricRow> = cv.folds.iter().enumerate().map(|(i, r)| fold_row(i.to_string(), r)).collect();
    rows.push(MetricRow {
        learner: cv.learner.clone(),
        fold: "mean".into(),
        auroc: cv.mean.auroc,
        accuracy: cv.mean.accuracy,
        precision: cv.mean.precision,
        recall: cv.mean.recall,
        f1: cv.mean.f1,
        n: None,
        positives: None,
    });
    rows
}

#[derive(Serialize)]
struct RocRow {
    learner: String,
    fold: usize,
    fpr: f64,
    tpr: f64,
    threshold: f64,
}

fn roc_rows(cv: &CvReport) -> Vec<RocRow> {
    cv.folds
        .iter()
        .enumerate()
        .flat_map(|(f, r)| {
            r.roc_points.iter().map(move |p| RocRow {
                learner: cv.learner.clone(),
                fold: f,
                fpr: p.fpr,
                tpr: p.tpr,
                threshold: p.threshold,
            })
        })
        .collect()
}

pub fn gen(a: &GenArgs, seed: u64) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => {
            require(p)?;
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            serde_json::from_str::<GeneratorConfig>(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => GeneratorConfig::default(),
    };
    if let Some(n) = a.n {
        cfg.n_cases = n;
    }
    if let Some(noise) = a.noise {
        cfg.noise_rate = noise;
    }
    cfg.seed = seed;
    let mut rec = Recorder::new("gen", &cfg, seed);
    if let Some(p) = &a.config {
        rec.input(p);
    }
    let (corpus, rules) = generate_corpus(&cfg)?;
    parent_dir(&a.out)?;
    write_corpus(&corpus, &a.out)?;
    rec.output(&a.out);
    let rules_out = a.rules_out.clone().unwrap_or_else(|| sibling(&a.out, "rules.json"));
    write_manifest(&rules, &rules_out)?;
    rec.output(&rules_out);
    if let Some(t) = &a.timelines_out {
        write_jsonl(&generate_timelines(seed, &corpus)?, t)?;
        rec.output(t);
    }
    rec.finish(&sibling(&a.out, "manifest.json"))?;
    Ok(())
}

pub fn train(a: &TrainArgs, seed: u64) -> Result<()> {
    let spec = learner_spec(&a.model, a.params.as_deref())?;
    if a.folds == 1 {
        return Err(CliError::Usage("--folds must be 0 or at least 2".into()));
    }
    let cfg = PipelineConfig::default();
    let mut rec = Recorder::new("train", json!({"learner": &spec, "folds": a.folds}), seed);
    let corpus = load_corpus(&a.corpus, &mut rec)?;
    parent_dir(&a.out)?;
    let mut extra = BTreeMap::new();
    if a.folds >= 2 {
        let folds = prepare_corpus_folds(&corpus, a.folds, &cfg, seed)?;
        let cv = evaluate_folds(&spec, &folds, None, seed)?;
        let report = a.report_out.clone().unwrap_or_else(|| sibling(&a.out, "eval.csv"));
        write_csv(&report, &metric_rows(&cv))?;
        rec.output(&report);
        if let Some(roc) = &a.roc_out {
            write_csv(roc, &roc_rows(&cv))?;
            rec.output(roc);
        }
        extra.insert("cv_folds".into(), json!(a.folds));
        extra.insert("cv_mean".into(), serde_json::to_value(cv.mean).expect("metrics serialize"));
        extra.insert("cv_fold_aurocs".into(), json!(cv.fold_aurocs()));
    }
    let pipeline = train_pipeline(&corpus, &spec, &cfg, seed)?;
    let file = pipeline.to_model_file()?.with_extra(extra)?;
    save_model(&a.out, &file)?;
    rec.output(&a.out);
    rec.finish(&sibling(&a.out, "manifest.json"))?;
    Ok(())
}

pub fn eval(a: &EvalArgs, seed: u64) -> Result<()> {
    check_folds(a.folds)?;
    let specs: Vec<LearnerSpec> = if a.models == "all" {
        LearnerSpec::all_defaults()
    } else {
        a.models
            .split(',')
            .map(|k| LearnerSpec::default_for(k.trim()).map_err(|e| CliError::Usage(e.to_string())))
            .collect::<Result<_>>()?
    };
    let cfg = PipelineConfig::default();
    let mut rec = Recorder::new(
        "eval",
        json!({"learners": &specs, "folds": a.folds, "segment": a.segment}),
        seed,
    );
    let corpus = load_corpus(&a.corpus, &mut rec)?;
    parent_dir(&a.out)?;
    let folds = prepare_corpus_folds(&corpus, a.folds, &cfg, seed)?;
    let reports = specs
        .iter()
        .map(|s| evaluate_folds(s, &folds, None, seed))
        .collect::<odr_core::Result<Vec<_>>>()?;
    let segments = if a.segment {
        Some(segment_evaluate(&LearnerSpec::default_for("gbdt")?, &corpus, a.folds, &cfg, seed)?)
    } else {
        None
    };
    write_json(&a.out, &json!({"reports": &reports, "segments": &segments}))?;
    rec.output(&a.out);
    let csv = sibling(&a.out, "csv");
    write_csv(&csv, &reports.iter().flat_map(metric_rows).collect::<Vec<_>>())?;
    rec.output(&csv);
    if let Some(roc) = &a.roc_out {
        write_csv(roc, &reports.iter().flat_map(roc_rows).collect::<Vec<_>>())?;
        rec.output(roc);
    }
    rec.finish(&sibling(&a.out, "manifest.json"))?;
    Ok(())
}

pub fn search(a: &SearchArgs, seed: u64) -> Result<()> {
    check_folds(a.folds)?;
    if a.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let kind = LearnerSpec::default_for(&a.model)?.kind();
    let cfg = PipelineConfig::default();
    let mut rec = Recorder::new("search", json!({"learner": kind, "trials": a.trials, "folds": a.folds}), seed);
    let corpus = load_corpus(&a.corpus, &mut rec)?;
    parent_dir(&a.out)?;
    let folds = prepare_corpus_folds(&corpus, a.folds, &cfg, seed)?;
    let space = default_space(kind, folds.schema.len())?;
    let report = random_search(&space, a.trials, &folds, seed)?;
    write_json(&a.out, &report)?;
    rec.output(&a.out);
    #[derive(Serialize)]
    struct TrialRow {
        trial: usize,
        mean_auroc: f64,
        best: bool,
        assignment: String,
    }
    let rows: Vec<TrialRow> = report
        .trials
        .iter()
        .map(|t| TrialRow {
            trial: t.index,
            mean_auroc: t.mean_auroc,
            best: t.index == report.best,
            assignment: serde_json::to_string(&t.assignment).expect("assignments serialize"),
        })
        .collect();
    let csv = sibling(&a.out, "csv");
    write_csv(&csv, &rows)?;
    rec.output(&csv);
    rec.finish(&sibling(&a.out, "manifest.json"))?;
    Ok(())
}

pub fn ablate(a: &AblateArgs, seed: u64) -> Result<()> {
    check_folds(a.folds)?;
    let spec = learner_spec(&a.model, a.params.as_deref())?;
    let modes: Vec<AblationMode> = if a.mode == "all" {
        vec![
            AblationMode::FeatureFamily,
            AblationMode::SingleFeature,
            AblationMode::LeaveOneFeatureOut,
        ]
    } else {
        a.mode
            .split(',')
            .map(|m| m.trim().parse().map_err(|e: odr_core::OdrError| CliError::Usage(e.to_string())))
            .collect::<Result<_>>()?
    };
    let cfg = PipelineConfig::default();
    let mut rec = Recorder::new("ablate", json!({"learner": &spec, "modes": &modes, "folds": a.folds}), seed);
    let corpus = load_corpus(&a.corpus, &mut rec)?;
    parent_dir(&a.out)?;
    let folds = prepare_corpus_folds(&corpus, a.folds, &cfg, seed)?;
    let reports = modes
        .iter()
        .map(|&m| ablate_prepared(&spec, &folds, m, seed))
        .collect::<odr_core::Result<Vec<AblationReport>>>()?;
    write_json(&a.out, &reports)?;
    rec.output(&a.out);
    #[derive(Serialize)]
    struct Row<'a> {
        mode: AblationMode,
        unit: &'a str,
        n_columns: usize,
        auroc: f64,
        accuracy: f64,
        f1: f64,
        full_auroc: f64,
    }
    let rows: Vec<Row> = reports
        .iter()
        .flat_map(|r| {
            r.rows.iter().map(move |row| Row {
                mode: r.mode,
                unit: &row.unit,
                n_columns: row.n_columns,
                auroc: row.mean.auroc,
                accuracy: row.mean.accuracy,
                f1: row.mean.f1,
                full_auroc: r.full.auroc,
            })
        })
        .collect();
    let csv = sibling(&a.out, "csv");
    write_csv(&csv, &rows)?;
    rec.output(&csv);
    rec.finish(&sibling(&a.out, "manifest.json"))?;
    Ok(())
}

pub fn explain(a: &ExplainArgs, seed: u64) -> Result<()> {
    let mut rec = Recorder::new(
        "explain",
        json!({
            "case_id": &a.case_id,
            "shap_cases": a.shap_cases,
            "background": a.background,
            "permutations": a.permutations,
        }),
        seed,
    );
    let model = load_model(&a.model, &mut rec)?;
    let corpus = load_corpus(&a.corpus, &mut rec)?;
    let case = corpus
        .iter()
        .find(|c| c.case_id == a.case_id)
        .ok_or_else(|| CliError::CaseNotFound(a.case_id.clone()))?;
    let payload = prediction_payload(&model, case, &ExplainOptions::default())?;
    let line = serde_json::to_string(&payload).expect("payload serializes");
    let mut manifest_at = None;
    match &a.out {
        Some(p) => {
            parent_dir(p)?;
            fs::write(p, format!("{line}\n")).map_err(|e| CliError::io(p, e))?;
            rec.output(p);
            manifest_at = Some(sibling(p, "manifest.json"));
        }
        None => println!("{line}"),
    }
    if let Some(p) = &a.shap_out {
        let labeled = labeled_cases(&corpus);
        let rows_of = |cs: &[&DisputeCase]| -> Vec<(String, Vec<f64>)> {
            cs.iter()
                .map(|c| (c.case_id.clone(), model.pipeline.features(c).0.values))
                .collect()
        };
        let explained = rows_of(&labeled[..a.shap_cases.min(labeled.len())]);
        let rest = &labeled[a.shap_cases.min(labeled.len())..];
        let bg_cases = if rest.is_empty() { &labeled[..] } else { rest };
        let bg: Vec<Vec<f64>> = rows_of(&bg_cases[..a.background.min(bg_cases.len())])
            .into_iter()
            .map(|(_, v)| v)
            .collect();
        let f = |z: &[f64]| model.pipeline.model.predict_row(z);
        let summary = shapley_summary(
            &f,
            &explained,
            &Matrix::from_rows(&bg),
            model.pipeline.schema.names(),
            a.permutations,
            seed,
        )?;
        #[derive(Serialize)]
        struct ShapRow {
            case_id: String,
            feature: String,
            value: Option<f64>,
            phi: f64,
            se: f64,
        }
        let rows: Vec<ShapRow> = summary
            .long_rows()
            .into_iter()
            .map(|(case_id, feature, value, phi, se)| ShapRow {
                case_id,
                feature,
                value,
                phi,
                se,
            })
            .collect();
        parent_dir(p)?;
        write_csv(p, &rows)?;
        rec.output(p);
        manifest_at.get_or_insert_with(|| sibling(p, "manifest.json"));
    }
    if let Some(p) = &a.importance_out {
        let Model::Gbdt(m) = &model.pipeline.model else {
            return Err(CliError::Usage("--importance-out needs a gbdt model".into()));
        };
        let report = gain_importance(m, Some(&model.pipeline.schema));
        parent_dir(p)?;
        write_csv(p, &report.rows)?;
        rec.output(p);
        manifest_at.get_or_insert_with(|| sibling(p, "manifest.json"));
    }
    if let Some(m) = manifest_at {
        rec.finish(&m)?;
    }
    Ok(())
}

pub fn analyze_politeness(a: &PolitenessArgs, seed: u64) -> Result<()> {
    let mut rec = Recorder::new("analyze-politeness", json!({"bins": a.bins}), seed);
    let corpus = load_corpus(&a.corpus, &mut rec)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| CliError::io(&a.out_dir, e))?;
    let correlations = [Party::Buyer, Party::Seller]
        .into_iter()
        .map(|role| behavior::first_message_correlation(&corpus, role))
        .collect::<odr_core::Result<Vec<_>>>()?;
    let traj = behavior::trajectories(&corpus, a.bins)?;
    let json_path = a.out_dir.join("politeness.json");
    write_json(&json_path, &json!({"correlations": &correlations, "trajectories": &traj}))?;
    rec.output(&json_path);

    #[derive(Serialize)]
    struct CorrRow {
        role: Party,
        strategy: Strategy,
        correlation: f64,
        p_value: f64,
        significant: bool,
        constant: bool,
        n_present: usize,
        n: usize,
    }
    let rows: Vec<CorrRow> = correlations
        .iter()
        .flat_map(|rep| {
            rep.rows.iter().map(move |r| CorrRow {
                role: rep.role,
                strategy: r.strategy,
                correlation: r.correlation,
                p_value: r.p_value,
                significant: r.significant,
                constant: r.constant,
                n_present: r.n_present,
                n: rep.n,
            })
        })
        .collect();
    let corr_path = a.out_dir.join("correlations.csv");
    write_csv(&corr_path, &rows)?;
    rec.output(&corr_path);

    #[derive(Serialize)]
    struct TrajRow {
        strategy: Strategy,
        role: Party,
        /// Whether the message author's side won.
        winner: &'static str,
        bin: usize,
        frequency: f64,
        support: usize,
        low_support: bool,
    }
    let rows: Vec<TrajRow> = traj
        .rows
        .iter()
        .map(|r| TrajRow {
            strategy: r.strategy,
            role: r.role,
            winner: if r.author_won { "author" } else { "other" },
            bin: r.bin,
            frequency: r.frequency,
            support: r.support,
            low_support: r.low_support,
        })
        .collect();
    let traj_path = a.out_dir.join("trajectories.csv");
    write_csv(&traj_path, &rows)?;
    rec.output(&traj_path);
    rec.finish(&a.out_dir.join("manifest.json"))?;
    Ok(())
}

pub fn analyze_churn(a: &ChurnArgs, seed: u64) -> Result<()> {
    let mut rec = Recorder::new("analyze-churn", json!({"timelines": &a.timelines}), seed);
    let corpus = load_corpus(&a.corpus, &mut rec)?;
    let timelines = match &a.timelines {
        Some(p) => {
            require(p)?;
            rec.input(p);
            read_jsonl(p)?
        }
        None => generate_timelines(seed, &corpus)?,
    };
    let report = behavior::soft_churn(&timelines, &behavior::buyer_outcomes(&corpus))?;
    parent_dir(&a.out)?;
    write_json(&a.out, &report)?;
    rec.output(&a.out);
    let csv = sibling(&a.out, "csv");
    write_csv(&csv, &report.rows)?;
    rec.output(&csv);
    rec.finish(&sibling(&a.out, "manifest.json"))?;
    Ok(())
}

pub fn error_analysis(a: &ErrorArgs, seed: u64) -> Result<()> {
    let mut rec = Recorder::new(
        "error-analysis",
        json!({"model": &a.model, "learner": &a.learner, "folds": a.folds}),
        seed,
    );
    let corpus = load_corpus(&a.corpus, &mut rec)?;
    let cases = labeled_cases(&corpus);
    let predicted: Vec<OutcomeLabel> = match &a.model {
        Some(p) => {
            let model = load_model(p, &mut rec)?;
            cases.iter().map(|c| model.pipeline.predict_case(c).predicted).collect()
        }
        None => {
            check_folds(a.folds)?;
            let spec = LearnerSpec::default_for(&a.learner).map_err(|e| CliError::Usage(e.to_string()))?;
            let folds = prepare_corpus_folds(&corpus, a.folds, &PipelineConfig::default(), seed)?;
            out_of_fold_scores(&spec, &folds, seed)?
                .into_iter()
                .map(|(_, p)| OutcomeLabel::from_positive(p >= 0.5))
                .collect()
        }
    };
    let report = behavior::error_analysis(&cases, &predicted)?;
    parent_dir(&a.out)?;
    write_json(&a.out, &report)?;
    rec.output(&a.out);
    let groups = sibling(&a.out, "groups.csv");
    write_csv(&groups, &report.groups)?;
    rec.output(&groups);
    let terms = sibling(&a.out, "terms.csv");
    write_csv(&terms, &report.terms)?;
    rec.output(&terms);
    rec.finish(&sibling(&a.out, "manifest.json"))?;
    Ok(())
}

pub fn serve(a: &ServeArgs, jobs: usize) -> Result<()> {
    let mut cfg = ServiceConfig::from_env()?;
    if let Some(d) = &a.data_dir {
        cfg.data_dir = d.clone();
    }
    if let Some(m) = &a.model {
        cfg.model_path = Some(m.clone());
    }
    if let Some(p) = a.port {
        cfg.port = p;
    }
    if let Some(m) = &cfg.model_path {
        require(m)?;
    }
    let state = cfg.build_state()?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(jobs)
        .enable_all()
        .build()
        .map_err(|e| CliError::io(PathBuf::from("<runtime>"), e))?;
    runtime.block_on(odr_service::serve(&cfg, state))?;
    Ok(())
}
