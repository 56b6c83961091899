use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::{Component, Path, PathBuf};

use anyhow::anyhow;
use serde::{Deserialize, Serialize};

use oncosurv::cohort::{self, build_cohort, load_dataset, CohortSummary};
use oncosurv::corpus::read_corpus;
use oncosurv::exec::{with_workers, Execution};
use oncosurv::extraction::{
    evaluate_extractions, ExtractionError, ExtractionLine, ExtractionScores, HttpChatBackend, LabeledRecord,
    LlmBackend, Pipeline, RuleBackend, Target,
};
use oncosurv::plot;
use oncosurv::report::{evaluate_model, EvalReport};
use oncosurv::retrieval::HashedBowEmbedder;
use oncosurv::survival::{deserialize_model, fit_forest_with, serialize_model, SurvivalData};
use oncosurv::synth::corpus::{synthesize, SynthPaths};

use crate::config::{BackendKind, PipelineConfig};
use crate::error::{backend, data, usage, Classify, CliResult};

pub const EXTRACTIONS: &str = "extractions.jsonl";
pub const EXTRACTION_SUMMARY: &str = "extraction_summary.json";
pub const EXTRACTION_SCORES: &str = "extraction_scores.json";
pub const FEATURES: &str = "features.csv";
pub const SURVIVAL: &str = "survival.jsonl";
pub const DATA_DICTIONARY: &str = "data_dictionary.json";
pub const COHORT_SUMMARY: &str = "cohort_summary.json";
pub const REGIMEN_CATALOG: &str = "regimen_catalog.json";
pub const MODEL: &str = "model.json";
pub const TRAIN_MANIFEST: &str = "train_manifest.json";
pub const EVAL_REPORT: &str = "eval_report.json";
pub const REPORT: &str = "report.md";

/// Every artifact is written under one directory. Names are relative and
/// may not climb out of it.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> CliResult<OutDir> {
        fs::create_dir_all(root).data_ctx(|| format!("creating output directory {}", root.display()))?;
        Ok(OutDir { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> CliResult<PathBuf> {
        let rel = Path::new(name);
        if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
            return Err(usage(anyhow!("artifact name {name:?} must stay inside the output directory")));
        }
        Ok(self.root.join(rel))
    }

    /// Writes through a temporary file and renames it into place.
    pub fn write(&self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.path(name)?;
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).data_ctx(|| format!("creating {}", parent.display()))?;
        }
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, bytes).data_ctx(|| format!("writing {}", tmp.display()))?;
        fs::rename(&tmp, &path).data_ctx(|| format!("renaming into {}", path.display()))?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(data)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn read_json<T: for<'de> Deserialize<'de>>(&self, name: &str) -> CliResult<T> {
        let path = self.path(name)?;
        let text = fs::read_to_string(&path).data_ctx(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).data_ctx(|| format!("parsing {}", path.display()))
    }
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).data_ctx(|| format!("opening {}", path.display()))
}

fn execution(cfg: &PipelineConfig) -> Execution {
    if cfg.workers == 1 {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn jsonl<T: Serialize>(items: &[T]) -> CliResult<Vec<u8>> {
    let mut out = Vec::new();
    for it in items {
        serde_json::to_writer(&mut out, it).map_err(data)?;
        out.push(b'\n');
    }
    Ok(out)
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.data_ctx(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).data_ctx(|| format!("{} line {}", path.display(), i + 1))?);
    }
    Ok(out)
}

pub fn synthesize_cmd(cfg: &PipelineConfig) -> CliResult<()> {
    let out = OutDir::create(&cfg.paths.output_dir)?;
    let dir = out.path("data")?;
    let corpus = synthesize(&cfg.synth, cfg.seed);
    let paths: SynthPaths = corpus.write_dir(&dir).data_ctx(|| format!("writing {}", dir.display()))?;
    let events = corpus.truth.iter().filter(|t| t.event).count();
    println!(
        "synthesized {} patients, {} notes, {} failures into {}",
        corpus.truth.len(),
        corpus.notes.len(),
        events,
        paths.corpus.parent().unwrap_or(&dir).display()
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NoteFailure {
    pub note_id: Option<String>,
    pub error: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExtractionSummary {
    pub backend: String,
    pub notes: usize,
    pub skipped_lines: usize,
    pub notes_extracted: usize,
    pub lines: usize,
    /// Lines that still failed a critic check after the last retry.
    pub unresolved: usize,
    pub forced_lines: usize,
    pub retried_lines: usize,
    pub failures: Vec<NoteFailure>,
}

fn make_backend(cfg: &PipelineConfig) -> CliResult<Box<dyn LlmBackend>> {
    Ok(match cfg.backend.kind {
        BackendKind::Rule => Box::new(RuleBackend),
        BackendKind::Http => Box::new(HttpChatBackend::new(&cfg.backend.http).map_err(backend)?),
    })
}

pub fn extract_cmd(cfg: &PipelineConfig) -> CliResult<()> {
    let out = OutDir::create(&cfg.paths.output_dir)?;
    let corpus_path = cfg.paths.corpus();
    let (notes, skipped) =
        read_corpus(open(&corpus_path)?, cfg.lenient).data_ctx(|| format!("reading corpus {}", corpus_path.display()))?;
    let be = make_backend(cfg)?;
    let embedder = HashedBowEmbedder::default();
    let pipeline = Pipeline {
        corpus: &cfg.corpus,
        retrieval: &cfg.retrieval,
        extraction: &cfg.extraction,
        embedder: &embedder,
        backend: be.as_ref(),
    };
    let results = pipeline.extract_all(&notes, Target::ALL, cfg.workers, execution(cfg));

    let mut lines: Vec<ExtractionLine> = Vec::new();
    let mut failures = Vec::new();
    let mut backend_failed = false;
    for r in results {
        match r {
            Ok(l) => lines.extend(l),
            Err(e) => {
                log::error!("{e}");
                backend_failed |= matches!(e, ExtractionError::ExtractionFailed { .. });
                failures.push(NoteFailure { note_id: e.note_id().map(str::to_string), error: e.to_string() });
            }
        }
    }
    let summary = ExtractionSummary {
        backend: be.name().to_string(),
        notes: notes.len(),
        skipped_lines: skipped.len(),
        notes_extracted: notes.len() - failures.len(),
        lines: lines.len(),
        unresolved: lines.iter().filter(|l| !(l.verdict.valid_json && l.verdict.schema_ok && l.verdict.grounded)).count(),
        forced_lines: lines.iter().filter(|l| !l.forced_fields.is_empty()).count(),
        retried_lines: lines.iter().filter(|l| l.attempts > 1).count(),
        failures,
    };
    out.write(EXTRACTIONS, &jsonl(&lines)?)?;
    out.write_json(EXTRACTION_SUMMARY, &summary)?;
    println!(
        "extracted {} lines from {}/{} notes ({} unresolved, {} failed)",
        summary.lines,
        summary.notes_extracted,
        summary.notes,
        summary.unresolved,
        summary.failures.len()
    );

    if let Some(gold_path) = &cfg.paths.gold {
        let gold: Vec<LabeledRecord> = read_jsonl(gold_path)?;
        let pred: Vec<LabeledRecord> = lines
            .iter()
            .map(|l| LabeledRecord { note_id: l.note_id.clone(), target: l.target, record: l.record.clone() })
            .collect();
        let scores = evaluate_extractions(&pred, &gold).map_err(data)?;
        out.write_json(EXTRACTION_SCORES, &scores)?;
        print_scores(&scores);
    }

    if backend_failed {
        return Err(backend(anyhow!("{} note(s) failed at the backend", summary.failures.len())));
    }
    if !summary.failures.is_empty() && lines.is_empty() {
        return Err(data(anyhow!("no note could be extracted")));
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.3}"))
}

fn print_scores(s: &ExtractionScores) {
    let m = s.micro.metrics.as_ref();
    println!(
        "micro precision {} recall {} f1 {}",
        fmt_opt(m.and_then(|m| m.precision)),
        fmt_opt(m.and_then(|m| m.recall)),
        fmt_opt(m.and_then(|m| m.f1))
    );
}

pub fn featurize_cmd(cfg: &PipelineConfig) -> CliResult<()> {
    let out = OutDir::create(&cfg.paths.output_dir)?;
    let emr = cohort::read_emr(open(&cfg.paths.emr())?).map_err(data)?;
    let plans = cohort::read_plans(open(&cfg.paths.plans())?).map_err(data)?;
    let approved = cohort::read_approved_drugs(open(&cfg.paths.drugs())?).map_err(data)?;
    let lines: Vec<ExtractionLine> = read_jsonl(&out.path(EXTRACTIONS)?)?;
    let c = build_cohort(&emr, &plans, &approved, &lines, &cfg.cohort).map_err(data)?;

    let mut features = Vec::new();
    c.write_features_csv(&mut features).map_err(data)?;
    out.write(FEATURES, &features)?;
    let mut survival = Vec::new();
    c.write_survival_jsonl(&mut survival).map_err(data)?;
    out.write(SURVIVAL, &survival)?;
    out.write_json(DATA_DICTIONARY, &c.columns)?;
    out.write_json(COHORT_SUMMARY, &c.summary)?;
    out.write_json(REGIMEN_CATALOG, &c.catalog)?;

    let s = &c.summary;
    println!(
        "cohort: {} patients, {} failures (prevalence {}), {} of {} regimen combinations retained at support >= {}",
        s.n,
        s.events,
        fmt_opt(s.failure_prevalence),
        s.retained_combinations,
        s.observed_combinations,
        s.support_threshold
    );
    for r in &s.regimens {
        println!("  {:<40} n={:<5} failures={:<5} {:.1}%", r.regimen, r.patients, r.failures, r.failure_pct);
    }
    Ok(())
}

/// How the training split was drawn, so `evaluate` scores the same
/// held-out patients.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct TrainManifest {
    pub split_seed: u64,
    pub test_fraction: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub schema_hash: String,
}

fn load_split(out: &OutDir, split_seed: u64, test_fraction: f64) -> CliResult<(SurvivalData, SurvivalData)> {
    let (_, d) = load_dataset(open(&out.path(FEATURES)?)?, open(&out.path(SURVIVAL)?)?).map_err(data)?;
    Ok(d.train_test_split(test_fraction, split_seed))
}

pub fn train_cmd(cfg: &PipelineConfig) -> CliResult<()> {
    let out = OutDir::create(&cfg.paths.output_dir)?;
    let s = &cfg.survival;
    let (train, test) = load_split(&out, s.split_seed, s.test_fraction)?;
    let model = with_workers(cfg.workers, || fit_forest_with(&train, &s.forest, execution(cfg))).map_err(data)?;
    out.write(MODEL, &serialize_model(&model).map_err(data)?)?;
    out.write_json(
        TRAIN_MANIFEST,
        &TrainManifest {
            split_seed: s.split_seed,
            test_fraction: s.test_fraction,
            n_train: train.len(),
            n_test: test.len(),
            schema_hash: model.schema_hash.clone(),
        },
    )?;
    println!(
        "trained {} trees on {} patients ({} events); {} held out",
        model.config.n_trees,
        train.len(),
        train.y.iter().filter(|r| r.event).count(),
        test.len()
    );
    Ok(())
}

pub fn evaluate_cmd(cfg: &PipelineConfig) -> CliResult<()> {
    let out = OutDir::create(&cfg.paths.output_dir)?;
    let manifest: TrainManifest = out.read_json(TRAIN_MANIFEST)?;
    let bytes = fs::read(out.path(MODEL)?).data_ctx(|| "reading model".into())?;
    let model = deserialize_model(&bytes).map_err(data)?;
    let (train, test) = load_split(&out, manifest.split_seed, manifest.test_fraction)?;
    let mut settings = cfg.survival.clone();
    settings.split_seed = manifest.split_seed;
    settings.test_fraction = manifest.test_fraction;
    settings.forest = model.config.clone();
    let (report, figs) =
        with_workers(cfg.workers, || evaluate_model(&model, &train, &test, &settings, execution(cfg))).map_err(data)?;

    out.write_json(EVAL_REPORT, &report)?;
    let title = format!("Mean predicted survival, held-out patients (t* = {} days)", report.t_star);
    out.write("survival_curves.svg", plot::step_plot_svg(&figs.survival_curves, &title, "days since plan start", "S(t)").as_bytes())?;
    out.write("survival_curves.csv", plot::step_plot_csv(&figs.survival_curves).as_bytes())?;
    let title = format!("Calibration at t* = {} days", report.t_star);
    out.write("calibration.svg", plot::calibration_svg(&figs.calibration, &title).as_bytes())?;
    out.write("calibration.csv", plot::calibration_csv(&figs.calibration).as_bytes())?;
    out.write("time_sweep.csv", sweep_csv(&report).as_bytes())?;

    let m = &report.at_t_star;
    println!(
        "C-index {:.3}; t* = {} days: accuracy {} f1+ {} f1- {} (n={}, excluded {})",
        report.c_index,
        report.t_star,
        fmt_opt(m.accuracy),
        fmt_opt(m.f1_pos),
        fmt_opt(m.f1_neg),
        m.n_evaluated,
        m.n_excluded
    );
    Ok(())
}

fn csv_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn sweep_csv(r: &EvalReport) -> String {
    let mut s = String::from("t,n_evaluated,n_excluded,accuracy,precision,recall,f1_pos,f1_neg,macro_f1,composite,both_classes\n");
    for m in &r.sweep {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            m.t,
            m.n_evaluated,
            m.n_excluded,
            csv_opt(m.accuracy),
            csv_opt(m.precision),
            csv_opt(m.recall),
            csv_opt(m.f1_pos),
            csv_opt(m.f1_neg),
            csv_opt(m.macro_f1),
            m.composite,
            m.both_classes
        );
    }
    s
}

pub fn report_cmd(cfg: &PipelineConfig) -> CliResult<()> {
    let out = OutDir::create(&cfg.paths.output_dir)?;
    let report: EvalReport = out.read_json(EVAL_REPORT)?;
    let cohort: Option<CohortSummary> = out.read_json(COHORT_SUMMARY).ok();
    let extraction: Option<ExtractionSummary> = out.read_json(EXTRACTION_SUMMARY).ok();
    let scores: Option<ExtractionScores> = out.read_json(EXTRACTION_SCORES).ok();
    let md = render_report(&report, cohort.as_ref(), extraction.as_ref(), scores.as_ref());
    let path = out.write(REPORT, md.as_bytes())?;
    println!("report written to {}", path.display());
    Ok(())
}

pub fn render_report(
    r: &EvalReport,
    cohort: Option<&CohortSummary>,
    extraction: Option<&ExtractionSummary>,
    scores: Option<&ExtractionScores>,
) -> String {
    let mut s = String::from("# Chemotherapy failure model\n\n");
    if let Some(e) = extraction {
        let _ = writeln!(s, "## Extraction\n");
        let _ = writeln!(
            s,
            "Backend `{}`: {} of {} notes extracted into {} records; {} unresolved after retries, {} with forced fields.\n",
            e.backend, e.notes_extracted, e.notes, e.lines, e.unresolved, e.forced_lines
        );
    }
    if let Some(sc) = scores {
        let _ = writeln!(s, "| label | tp | fp | fn | precision | recall | f1 |\n|---|---|---|---|---|---|---|");
        let mut rows: Vec<(&String, _)> = sc.per_label.iter().collect();
        let micro = "micro".to_string();
        rows.push((&micro, &sc.micro));
        for (name, l) in rows {
            let m = l.metrics.as_ref();
            let _ = writeln!(
                s,
                "| {name} | {} | {} | {} | {} | {} | {} |",
                l.counts.tp,
                l.counts.fp,
                l.counts.fn_,
                fmt_opt(m.and_then(|m| m.precision)),
                fmt_opt(m.and_then(|m| m.recall)),
                fmt_opt(m.and_then(|m| m.f1))
            );
        }
        s.push('\n');
    }
    if let Some(c) = cohort {
        let _ = writeln!(s, "## Cohort\n");
        let _ = writeln!(
            s,
            "{} patients, {} failures (prevalence {}). {} of {} regimen combinations have at least {} patients.\n",
            c.n,
            c.events,
            fmt_opt(c.failure_prevalence),
            c.retained_combinations,
            c.observed_combinations,
            c.support_threshold
        );
        if !c.regimens.is_empty() {
            let _ = writeln!(s, "| regimen | patients | failures | failure % |\n|---|---|---|---|");
            for g in &c.regimens {
                let _ = writeln!(s, "| {} | {} | {} | {:.1} |", g.regimen, g.patients, g.failures, g.failure_pct);
            }
            s.push('\n');
        }
    }
    let p = &r.protocol;
    let _ = writeln!(s, "## Survival model\n");
    let _ = writeln!(
        s,
        "{} trees, min leaf {}, seed {}; trained on {} patients ({} events), evaluated on {} held-out patients ({} events), split seed {}.\n",
        p.forest.n_trees, p.forest.min_leaf_size, p.forest.seed, p.n_train, p.train_events, p.n_test, p.test_events, p.split_seed
    );
    let _ = writeln!(s, "Held-out C-index: **{:.3}**\n", r.c_index);
    let m = &r.at_t_star;
    let _ = writeln!(s, "### Classification at t* = {} days (threshold {})\n", r.t_star, r.threshold);
    let _ = writeln!(s, "| metric | value |\n|---|---|");
    for (k, v) in [
        ("accuracy", m.accuracy),
        ("precision", m.precision),
        ("recall", m.recall),
        ("f1 (failure)", m.f1_pos),
        ("f1 (no failure)", m.f1_neg),
        ("macro f1", m.macro_f1),
    ] {
        let _ = writeln!(s, "| {k} | {} |", fmt_opt(v));
    }
    let _ = writeln!(s, "| evaluated | {} (excluded {}) |\n", m.n_evaluated, m.n_excluded);
    let _ = writeln!(s, "### Time-point sweep\n\n| t | n | accuracy | f1+ | f1- | composite |\n|---|---|---|---|---|---|");
    for m in &r.sweep {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {:.3} |",
            m.t,
            m.n_evaluated,
            fmt_opt(m.accuracy),
            fmt_opt(m.f1_pos),
            fmt_opt(m.f1_neg),
            m.composite
        );
    }
    let _ = writeln!(s, "\n### Top features\n\n| feature | importance | sd |\n|---|---|---|");
    for f in r.importances.iter().take(15) {
        let _ = writeln!(s, "| {} | {:.4} | {:.4} |", f.feature, f.importance, f.std_dev);
    }
    let _ = writeln!(
        s,
        "\n![survival curves](survival_curves.svg)\n\n![calibration](calibration.svg)\n"
    );
    s
}
