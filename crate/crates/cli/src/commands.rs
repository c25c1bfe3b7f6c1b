use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::Utc;
use serde::Serialize;

use eit_core::annotation::{EarnestnessLabel, LabelStore, RubricScore};
use eit_core::classifier::{
    cross_validate, eval_set_from_labels, AblationGrid, BinaryClass, ClassificationRun, Distance, Space,
};
use eit_core::corpus::ColumnMapping;
use eit_core::embedding::{select_provider, EmbeddingCache, EmbeddingProvider};
use eit_core::engagement::{flag_at_risk, semester_attendance, AtRiskConfig};
use eit_core::features::{rule_based_sample, SamplerConfig};
use eit_core::pipeline::{self, AblateRequest, ClassifyRequest, ProjectRequest};
use eit_core::projection::{export_scatter, ScatterFormat, TsneConfig, TsneInit};
use eit_core::store::{write_atomic, Store};
use eit_core::Corpus;

use crate::args::*;
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

struct Ctx {
    store: Store,
    corpus: Corpus,
    labels: LabelStore,
    provider: Arc<dyn EmbeddingProvider>,
    cache: EmbeddingCache,
}

impl Ctx {
    /// Opens the data directory, as the writer when possible. Read-only
    /// commands still work while another process holds the lock; they then
    /// keep embeddings in memory instead of the shared cache.
    fn open(cli: &Cli, need_writer: bool) -> Result<Self> {
        let store = match Store::open_writer(&cli.data_dir) {
            Ok(s) => s,
            Err(eit_core::Error::StoreLocked(_)) if !need_writer => Store::open(&cli.data_dir)?,
            Err(e) => return Err(e.into()),
        };
        let cache = if store.is_writer() {
            store.embedding_cache()
        } else {
            EmbeddingCache::in_memory()
        };
        Ok(Self {
            corpus: store.load_corpus()?,
            labels: store.load_labels()?,
            provider: select_provider(cli.model_path.as_deref())?,
            cache,
            store,
        })
    }

    fn provider(&self) -> &dyn EmbeddingProvider {
        self.provider.as_ref()
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Init => init(&cli),
        Command::Ingest(a) => ingest(&cli, a),
        Command::Sample(a) => sample(&cli, a),
        Command::Labels(a) => labels(&cli, a),
        Command::Classify(a) => classify(&cli, a),
        Command::Ablate(a) => ablate(&cli, a),
        Command::Project(a) => project(&cli, a),
        Command::Report(a) => report(&cli, a),
        Command::Runs(a) => runs(&cli, a),
        Command::Serve(a) => serve(&cli, a),
    }
}

fn emit<T: Serialize>(json: bool, value: &T, human: impl FnOnce() -> String) -> Result<()> {
    let mut out = io::stdout().lock();
    if json {
        serde_json::to_writer_pretty(&mut out, value)?;
        writeln!(out)?;
    } else {
        let text = human();
        if !text.is_empty() {
            writeln!(out, "{}", text.trim_end())?;
        }
    }
    Ok(())
}

fn open_input(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))
}

fn csv_to_file(path: &Path, write: impl FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        write(&mut w)?;
        w.flush()?;
    }
    write_atomic(path, &buf)?;
    Ok(())
}

fn seed_note(seed: u64) {
    eprintln!("seed: {seed}");
}

fn init(cli: &Cli) -> Result<()> {
    let store = Store::init(&cli.data_dir)?;
    emit(cli.json, &serde_json::json!({ "data_dir": store.root() }), || {
        format!("initialized {}", store.root().display())
    })
}

fn ingest(cli: &Cli, a: &IngestArgs) -> Result<()> {
    let input = open_input(&a.input)?;
    let mapping = match &a.mapping {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::data(format!("cannot read {}: {e}", p.display())))?;
            ColumnMapping::from_toml(&text)?
        }
        None => ColumnMapping::canonical(),
    };
    let questions = a.questions.as_deref().map(open_input).transpose()?;
    let ctx = Ctx::open(cli, true)?;
    let mut corpus = ctx.corpus;
    let loaded_questions = match questions {
        Some(f) => corpus.ingest_questions(f)?,
        None => 0,
    };
    let report = corpus.ingest_reader(input, &mapping)?;
    ctx.store.save_corpus(&corpus)?;
    emit(
        cli.json,
        &serde_json::json!({ "questions": loaded_questions, "report": report }),
        || {
            let mut s = format!("questions loaded: {loaded_questions}\naccepted: {}\nrejected: {}\n", report.accepted, report.rejected.len());
            for r in report.rejected.iter().take(20) {
                s.push_str(&format!("  line {}: {}\n", r.line, r.reason));
            }
            if report.rejected.len() > 20 {
                s.push_str(&format!("  ... {} more\n", report.rejected.len() - 20));
            }
            s
        },
    )
}

fn sample(cli: &Cli, a: &SampleArgs) -> Result<()> {
    let ctx = Ctx::open(cli, false)?;
    seed_note(a.seed);
    let config = SamplerConfig {
        tail_fraction: a.tail_fraction,
        per_metric_fraction: a.per_metric_fraction,
        target_n: a.n,
        seed: a.seed,
    };
    let sample = rule_based_sample(&ctx.corpus, &a.question, &config, ctx.provider(), Some(&ctx.cache))?;
    if let Some(out) = &a.out {
        csv_to_file(out, |w| {
            w.write_record([
                "question_id",
                "normalized_text",
                "metrics",
                "frequency",
                "char_length",
                "edit_distance_to_mode",
                "centroid_distance",
            ])?;
            for item in &sample.items {
                let metrics: Vec<&str> = item.metrics.iter().map(|m| m.as_str()).collect();
                w.write_record([
                    sample.question_id.clone(),
                    item.normalized_text.clone(),
                    metrics.join(";"),
                    item.features.frequency.to_string(),
                    item.features.char_length.to_string(),
                    item.features.edit_distance_to_mode.to_string(),
                    format!("{:.16e}", item.features.centroid_distance),
                ])?;
            }
            Ok(())
        })?;
    }
    emit(cli.json, &sample, || {
        let mut s = format!(
            "{}: {} of {} unique responses\n",
            sample.question_id,
            sample.items.len(),
            sample.unique_responses
        );
        for item in &sample.items {
            s.push_str(&item.normalized_text);
            s.push('\n');
        }
        s
    })
}

fn labels(cli: &Cli, cmd: &LabelsCommand) -> Result<()> {
    match cmd {
        LabelsCommand::Import { file } => {
            let f = open_input(file)?;
            let ctx = Ctx::open(cli, true)?;
            let mut labels = ctx.labels;
            let report = labels.import_labels(f, Some(&ctx.corpus))?;
            ctx.store.save_labels(&labels)?;
            emit(cli.json, &report, || {
                let mut s = format!("imported: {}\nrejected: {}\n", report.imported, report.rejected.len());
                for (line, why) in report.rejected.iter().take(20) {
                    s.push_str(&format!("  line {line}: {why}\n"));
                }
                s
            })
        }
        LabelsCommand::Export { out } => {
            let ctx = Ctx::open(cli, false)?;
            match out {
                Some(path) => {
                    let mut buf = Vec::new();
                    let n = ctx.labels.export_labels(&mut buf)?;
                    write_atomic(path, &buf)?;
                    eprintln!("exported {n} labels to {}", path.display());
                }
                None => {
                    ctx.labels.export_labels(BufWriter::new(io::stdout().lock()))?;
                }
            }
            Ok(())
        }
        LabelsCommand::Agreement { question } => {
            let ctx = Ctx::open(cli, false)?;
            let a = ctx.labels.agreement(question.as_deref())?;
            emit(cli.json, &a, || {
                let kappa = a.fleiss_kappa.map_or_else(|| "undefined".to_string(), |k| format!("{k:.4}"));
                format!(
                    "annotators: {}\nitems: {}\npairwise agreement: {:.2}%\nFleiss kappa: {kappa}",
                    a.annotators, a.items, 100.0 * a.pairwise_percent
                )
            })
        }
        LabelsCommand::Record {
            annotator,
            question,
            text,
            score,
        } => {
            let ctx = Ctx::open(cli, true)?;
            let mut labels = ctx.labels;
            let label = EarnestnessLabel {
                annotator_id: annotator.clone(),
                question_id: question.clone(),
                normalized_text: eit_core::normalize_text(text),
                score: RubricScore::new(*score)?,
                labeled_at: Utc::now(),
            };
            let stored = labels.record_label(&ctx.corpus, label)?.clone();
            ctx.store.save_labels(&labels)?;
            let agg = labels.aggregate(&stored.question_id, &stored.normalized_text)?;
            emit(cli.json, &agg, || {
                format!(
                    "recorded; mean {:.3} over {} annotator(s): {}",
                    agg.mean_score,
                    agg.n_annotators,
                    agg.class.as_str()
                )
            })
        }
    }
}

fn distance(d: DistanceArg) -> Distance {
    match d {
        DistanceArg::Euclidean => Distance::Euclidean,
        DistanceArg::Cosine => Distance::Cosine,
    }
}

#[derive(Serialize)]
struct ClassifySummary<'a> {
    run_id: &'a str,
    question_id: &'a str,
    fingerprint: &'a str,
    provider_id: &'a str,
    unique_responses: usize,
    responses: usize,
    non_earnest_responses: usize,
    classes: &'a [eit_core::classifier::ResponseClass],
}

fn write_classes_csv(path: &Path, run: &ClassificationRun) -> Result<()> {
    csv_to_file(path, |w| {
        w.write_record(["normalized_text", "class", "count", "nearest_text", "nearest_class", "nearest_distance"])?;
        for c in &run.classes {
            let first = c.neighbors.first();
            w.write_record([
                c.normalized_text.clone(),
                c.class.as_str().to_string(),
                c.count.to_string(),
                first.map(|n| n.normalized_text.clone()).unwrap_or_default(),
                first.map(|n| n.class.as_str().to_string()).unwrap_or_default(),
                first.map(|n| format!("{:.16e}", n.distance)).unwrap_or_default(),
            ])?;
        }
        Ok(())
    })
}

fn classify(cli: &Cli, a: &ClassifyArgs) -> Result<()> {
    let mut req = ClassifyRequest::new(&a.question);
    req.non_earnest_fraction = a.pool_frac;
    req.earnest_seed_count = a.earnest_seeds;
    req.k = a.k;
    req.seed = a.seed;
    req.distance = distance(a.distance);
    req.space = match a.space {
        SpaceArg::Embedding => Space::Embedding,
        SpaceArg::TwoD => Space::Projected2d,
    };
    if !a.pool_questions.is_empty() {
        req.pool_questions = Some(a.pool_questions.clone());
    }
    if a.cv {
        return cross_validation(cli, a, &req);
    }
    let ctx = Ctx::open(cli, true)?;
    seed_note(a.seed);
    let mut run = pipeline::classify(&ctx.corpus, &ctx.labels, &req, ctx.provider(), Some(&ctx.cache))?;
    ctx.store.save_run(&mut run)?;
    if let Some(out) = &a.out {
        write_classes_csv(out, &run)?;
    }
    let responses: usize = run.classes.iter().map(|c| c.count).sum();
    let non_earnest: usize = run
        .classes
        .iter()
        .filter(|c| c.class == BinaryClass::NonEarnest)
        .map(|c| c.count)
        .sum();
    let summary = ClassifySummary {
        run_id: &run.run_id,
        question_id: &run.question_id,
        fingerprint: &run.fingerprint,
        provider_id: &run.provider_id,
        unique_responses: run.classes.len(),
        responses,
        non_earnest_responses: non_earnest,
        classes: &run.classes,
    };
    emit(cli.json, &summary, || {
        format!(
            "{}: question {}, {} responses ({} unique), {} non-earnest\nfingerprint {}",
            run.run_id,
            run.question_id,
            responses,
            run.classes.len(),
            non_earnest,
            run.fingerprint
        )
    })
}

fn cross_validation(cli: &Cli, a: &ClassifyArgs, req: &ClassifyRequest) -> Result<()> {
    let ctx = Ctx::open(cli, false)?;
    seed_note(a.seed);
    ctx.corpus.word_cloud_question(&req.question_id)?;
    let points = eval_set_from_labels(&ctx.labels, Some(&req.question_id), ctx.provider(), Some(&ctx.cache))?;
    let cv = cross_validate(&points, req.k, a.folds, req.seed, req.distance)?;
    emit(cli.json, &cv, || {
        let mut s = String::new();
        for (i, f) in cv.folds.iter().enumerate() {
            s.push_str(&format!("fold {}: accuracy {:.4} recall {:.4} (n={})\n", i + 1, f.accuracy, f.recall, f.n));
        }
        s.push_str(&format!(
            "mean: accuracy {:.4} recall {:.4}\npooled: accuracy {:.4} recall {:.4}",
            cv.mean_accuracy, cv.mean_recall, cv.pooled.accuracy, cv.pooled.recall
        ));
        s
    })
}

fn parse_grid(grid: &str) -> Result<AblationGrid> {
    if grid == "default" {
        return Ok(AblationGrid::default());
    }
    let bad = || CliError::data(format!("invalid grid `{grid}`: expected `default` or FRACTIONS:COUNTS, e.g. 0.1,0.5:5,20"));
    let (fracs, counts) = grid.split_once(':').ok_or_else(bad)?;
    let non_earnest_fractions = fracs
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| bad())?;
    let earnest_seed_counts = counts
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| bad())?;
    Ok(AblationGrid {
        non_earnest_fractions,
        earnest_seed_counts,
    })
}

fn ablate(cli: &Cli, a: &AblateArgs) -> Result<()> {
    let grid = parse_grid(&a.grid)?;
    let eval_file = a.eval.as_deref().map(open_input).transpose()?;
    let ctx = Ctx::open(cli, false)?;
    seed_note(a.seed);
    let eval_labels = match eval_file {
        Some(f) => {
            let mut store = LabelStore::new();
            let report = store.import_labels(f, Some(&ctx.corpus))?;
            if !report.rejected.is_empty() {
                eprintln!("evaluation labels: {} rows rejected", report.rejected.len());
            }
            Some(store)
        }
        None => None,
    };
    let req = AblateRequest {
        question_id: a.question.clone(),
        grid,
        seed: a.seed,
        k: a.k,
        distance: distance(a.distance),
        eval_question: a.eval_question.clone(),
        pool_questions: None,
    };
    let report = pipeline::ablate_with_eval(
        &ctx.corpus,
        &ctx.labels,
        eval_labels.as_ref().unwrap_or(&ctx.labels),
        &req,
        ctx.provider(),
        Some(&ctx.cache),
    )?;
    if let Some(out) = &a.out {
        csv_to_file(out, |w| {
            w.write_record([
                "non_earnest_fraction",
                "earnest_seed_count",
                "train_non_earnest",
                "train_earnest",
                "eval_size",
                "accuracy",
                "recall",
                "tp",
                "fn",
                "fp",
                "tn",
            ])?;
            for r in &report.rows {
                let m = &r.metrics;
                w.write_record([
                    r.non_earnest_fraction.to_string(),
                    r.earnest_seed_count.to_string(),
                    r.train_non_earnest.to_string(),
                    r.train_earnest.to_string(),
                    r.eval_size.to_string(),
                    format!("{:.6}", m.accuracy),
                    format!("{:.6}", m.recall),
                    m.true_positives().to_string(),
                    m.false_negatives().to_string(),
                    m.false_positives().to_string(),
                    m.true_negatives().to_string(),
                ])?;
            }
            Ok(())
        })?;
    }
    emit(cli.json, &report, || {
        let mut s = format!(
            "seed question {}, pool {}, {} evaluation items\n{:>8} {:>6} {:>9} {:>7}\n",
            report.question_id, report.pool_size, report.eval_items, "fraction", "seeds", "accuracy", "recall"
        );
        for r in &report.rows {
            s.push_str(&format!(
                "{:>8.2} {:>6} {:>9.4} {:>7.4}\n",
                r.non_earnest_fraction, r.earnest_seed_count, r.metrics.accuracy, r.metrics.recall
            ));
        }
        s
    })
}

fn project(cli: &Cli, a: &ProjectArgs) -> Result<()> {
    let ctx = Ctx::open(cli, false)?;
    seed_note(a.seed);
    let run = a.run.as_deref().map(|id| ctx.store.load_run(id)).transpose()?;
    let req = ProjectRequest {
        question_id: a.question.clone(),
        tsne: TsneConfig {
            perplexity: a.perplexity,
            iterations: a.iters,
            learning_rate: a.learning_rate,
            seed: a.seed,
            init: match a.init {
                InitArg::Gaussian => TsneInit::SeededGaussian,
                InitArg::Pca => TsneInit::FirstTwoPrincipalComponents,
            },
            ..TsneConfig::default()
        },
    };
    let points = pipeline::project(&ctx.corpus, &ctx.labels, &req, run.as_ref(), ctx.provider(), Some(&ctx.cache))?;
    if let Some(out) = &a.out {
        export_scatter(&points, out, ScatterFormat::Csv)?;
    }
    if let Some(svg) = &a.svg {
        export_scatter(&points, svg, ScatterFormat::Svg)?;
    }
    emit(cli.json, &points, || {
        let written: Vec<String> = [&a.out, &a.svg]
            .into_iter()
            .flatten()
            .map(|p: &PathBuf| p.display().to_string())
            .collect();
        if written.is_empty() {
            format!("projected {} points (use --out or --svg to save)", points.len())
        } else {
            format!("projected {} points -> {}", points.len(), written.join(", "))
        }
    })
}

fn report(cli: &Cli, a: &ReportArgs) -> Result<()> {
    if !a.atrisk && !a.attendance {
        return Err(CliError::data("choose --atrisk and/or --attendance"));
    }
    let ctx = Ctx::open(cli, false)?;
    let mut json = serde_json::Map::new();
    let mut text = String::new();
    if a.attendance {
        let rows = ctx
            .corpus
            .student_ids()
            .into_iter()
            .map(|s| semester_attendance(&ctx.corpus, s))
            .collect::<eit_core::Result<Vec<_>>>()?;
        text.push_str("student      credited  score\n");
        for r in &rows {
            text.push_str(&format!(
                "{:<12} {:>3}/{:<4} {:.3}\n",
                r.student_id, r.credited_lectures, r.total_lectures, r.score
            ));
        }
        if let (Some(out), false) = (&a.out, a.atrisk) {
            csv_to_file(out, |w| {
                w.write_record(["student_id", "credited_lectures", "total_lectures", "score", "grade_weight"])?;
                for r in &rows {
                    w.write_record([
                        r.student_id.clone(),
                        r.credited_lectures.to_string(),
                        r.total_lectures.to_string(),
                        format!("{:.6}", r.score),
                        r.grade_weight.to_string(),
                    ])?;
                }
                Ok(())
            })?;
        }
        json.insert("attendance".into(), serde_json::to_value(&rows)?);
    }
    if a.atrisk {
        let config = AtRiskConfig {
            non_earnest_threshold: a.threshold,
            window_lectures: a.window,
            min_responses: a.min_responses,
        };
        let runs = ctx.store.list_runs()?;
        let flagged = flag_at_risk(&ctx.corpus, &runs, &config)?;
        if !text.is_empty() {
            text.push('\n');
        }
        text.push_str(&format!("{} student(s) at risk\n", flagged.len()));
        for s in &flagged {
            let lectures: Vec<String> = s.window_lectures.iter().map(u32::to_string).collect();
            text.push_str(&format!(
                "{:<12} {:.3} non-earnest over {} responses (lectures {})\n",
                s.student_id,
                s.window_fraction,
                s.window_responses,
                lectures.join(",")
            ));
        }
        if let Some(out) = &a.out {
            csv_to_file(out, |w| {
                w.write_record(["student_id", "window_fraction", "window_responses", "window_lectures"])?;
                for s in &flagged {
                    let lectures: Vec<String> = s.window_lectures.iter().map(u32::to_string).collect();
                    w.write_record([
                        s.student_id.clone(),
                        format!("{:.6}", s.window_fraction),
                        s.window_responses.to_string(),
                        lectures.join(";"),
                    ])?;
                }
                Ok(())
            })?;
        }
        json.insert("at_risk".into(), serde_json::to_value(&flagged)?);
    }
    emit(cli.json, &json, || text)
}

fn runs(cli: &Cli, a: &RunsArgs) -> Result<()> {
    let ctx = Ctx::open(cli, false)?;
    if let Some(id) = &a.id {
        let run = ctx.store.load_run(id)?;
        return emit(cli.json, &run, || {
            let mut s = format!(
                "{} question {} started {}\nfingerprint {}\n",
                run.run_id,
                run.question_id,
                run.started_at.to_rfc3339(),
                run.fingerprint
            );
            for c in &run.classes {
                s.push_str(&format!("{:<12} {:>4}  {}\n", c.class.as_str(), c.count, c.normalized_text));
            }
            s
        });
    }
    #[derive(Serialize)]
    struct Row {
        run_id: String,
        question_id: String,
        started_at: String,
        fingerprint: String,
        unique_responses: usize,
    }
    let rows: Vec<Row> = ctx
        .store
        .list_runs()?
        .into_iter()
        .map(|r| Row {
            unique_responses: r.classes.len(),
            started_at: r.started_at.to_rfc3339(),
            run_id: r.run_id,
            question_id: r.question_id,
            fingerprint: r.fingerprint,
        })
        .collect();
    emit(cli.json, &rows, || {
        rows.iter()
            .map(|r| format!("{}  {}  {}  {} uniques", r.run_id, r.question_id, r.started_at, r.unique_responses))
            .collect::<Vec<_>>()
            .join("\n")
    })
}

fn serve(cli: &Cli, a: &ServeArgs) -> Result<()> {
    if !cli.data_dir.join("store.json").is_file() {
        return Err(eit_core::Error::StoreNotInitialized(cli.data_dir.clone()).into());
    }
    let config = eit_service::ServiceConfig {
        data_dir: cli.data_dir.clone(),
        token: std::env::var(eit_service::TOKEN_ENV).ok().filter(|t| !t.is_empty()),
        model_path: cli.model_path.clone(),
        ui_dir: a.ui_dir.clone(),
    };
    if config.token.is_none() {
        eprintln!("{} is not set: mutating endpoints are disabled", eit_service::TOKEN_ENV);
    }
    let addr = std::net::SocketAddr::new(a.host, a.port);
    eprintln!("listening on http://{addr}");
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(eit_service::serve(config, addr)).map_err(|e| CliError::data(e.to_string()))
}
