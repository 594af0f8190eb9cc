use std::fs::OpenOptions;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use log::{error, info};
use mcgen_core::corpus::{ingest, tokenize, Corpus};
use mcgen_core::evalharness::{accuracy, baseline_bleu, baseline_pv, baseline_random, render_table, EvalReport};
use mcgen_core::mccreate::{build_dataset, build_rnd_dataset, combine, validate_dataset, McDataset, McInstance, Split};
use mcgen_core::pvdbow::{train_pv, PvModel};
use mcgen_core::synth;
use mcgen_models::train::{mean_rouge_l, write_metrics_csv, TrainOutcome};
use mcgen_models::{build_vocab, encode_instances, train, Attention, EncodedInstance, Model, ModelConfig, ModelKind};
use serde::Serialize;
use serde_json::json;

use crate::provenance::RunRecord;
use crate::{exit_code, Cli, Command, DatasetVariant, GlobalFlags, RunConfig, UsageError};

const LOG_FILE: &str = "mcgen.log";
/// Failures go to the log file only; stderr gets the one-line summary.
const FAILURE_TARGET: &str = "mcgen::failure";

/// Runs `cli` and returns the process exit code, printing a one-line cause
/// on failure.
pub fn execute(cli: &Cli) -> i32 {
    let flags = GlobalFlags::from(&cli.global);
    let cfg = match RunConfig::load(&flags) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return exit_code(&e);
        }
    };
    let log = cfg.out(LOG_FILE);
    match run(cli, cfg) {
        Ok(()) => 0,
        Err(e) => {
            error!(target: FAILURE_TARGET, "{e:#}");
            eprintln!("error: {e:#} (log: {})", log.display());
            exit_code(&e)
        }
    }
}

fn init_logging(path: &Path) -> Result<()> {
    use simplelog::{ColorChoice, CombinedLogger, Config, ConfigBuilder, LevelFilter, TermLogger, TerminalMode, WriteLogger};
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    // A second initialisation in the same process keeps the first logger.
    let _ = CombinedLogger::init(vec![
        TermLogger::new(
            LevelFilter::Info,
            ConfigBuilder::new().add_filter_ignore_str(FAILURE_TARGET).build(),
            TerminalMode::Stderr,
            ColorChoice::Never,
        ),
        WriteLogger::new(LevelFilter::Info, Config::default(), file),
    ]);
    Ok(())
}

pub fn run(cli: &Cli, mut cfg: RunConfig) -> Result<()> {
    apply_flags(&cli.command, &mut cfg);
    cfg.ensure_out_dir()?;
    init_logging(&cfg.out(LOG_FILE))?;
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build_global();
    let name = cli.command.name();
    info!("{name}: seed {} workers {} deterministic {}", cfg.seed, cfg.workers, cfg.deterministic);
    let t0 = Instant::now();
    let rec = match &cli.command {
        Command::Ingest { input, limit } => cmd_ingest(&cfg, input, *limit)?,
        Command::SynthCorpus { .. } => cmd_synth(&cfg)?,
        Command::TrainPv { corpus, .. } => cmd_train_pv(&cfg, corpus)?,
        Command::BuildDataset { variant, corpus, pv } => cmd_build(&cfg, *variant, corpus, pv)?,
        Command::Stats { dataset } => cmd_stats(&cfg, dataset)?,
        Command::EvalBaselines { dataset, pv, split } => cmd_baselines(&cfg, dataset, pv, *split)?,
        Command::TrainModel { kind, dataset, lambda_gen, .. } => {
            let mut m = cfg.model((*kind).into())?;
            if let Some(l) = lambda_gen {
                m.lambda_gen = *l;
            }
            cmd_train_model(&cfg, m, dataset)?
        }
        Command::EvalModel { checkpoint, dataset, split } => cmd_eval_model(&cfg, checkpoint, dataset, *split)?,
        Command::SweepLambdaGen { lambdas, dataset, .. } => cmd_sweep(&cfg, lambdas, dataset)?,
        Command::Ablate { dataset, .. } => cmd_ablate(&cfg, dataset)?,
        Command::ServeAnnotate { dataset, port, log, static_dir } => {
            return cmd_serve(&cfg, dataset, *port, log.clone(), static_dir.clone());
        }
    };
    let p = rec.write(&cfg.out_dir)?;
    info!("{name}: done in {:.1}s, provenance {}", t0.elapsed().as_secs_f64(), p.display());
    Ok(())
}

fn apply_flags(cmd: &Command, cfg: &mut RunConfig) {
    match cmd {
        Command::SynthCorpus { docs: Some(d) } => cfg.synth.docs = *d,
        Command::TrainPv { epochs: Some(e), .. } => cfg.pv.epochs = *e,
        Command::TrainModel { steps: Some(s), .. }
        | Command::SweepLambdaGen { steps: Some(s), .. }
        | Command::Ablate { steps: Some(s), .. } => cfg.train.steps = *s,
        _ => {}
    }
}

fn record(cfg: &RunConfig, command: &str, config: serde_json::Value) -> RunRecord {
    RunRecord::new(command, config, cfg.seed, cfg.deterministic, cfg.workers)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    let (corpus, stats) = ingest(path, None).with_context(|| format!("reading corpus {}", path.display()))?;
    if stats.skipped() > 0 {
        info!("{}: skipped {} bad lines", path.display(), stats.skipped());
    }
    if corpus.is_empty() {
        bail!("corpus {} has no usable documents", path.display());
    }
    Ok(corpus)
}

fn load_dataset(path: &Path) -> Result<McDataset> {
    McDataset::read(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn split_of(ds: &McDataset, split: Split) -> Result<Vec<McInstance>> {
    let v: Vec<McInstance> = ds.split(split).cloned().collect();
    if v.is_empty() {
        return Err(UsageError(format!("split {split} of the dataset is empty")).into());
    }
    Ok(v)
}

fn cmd_ingest(cfg: &RunConfig, input: &Path, limit: Option<usize>) -> Result<RunRecord> {
    let (corpus, stats) = ingest(input, limit).with_context(|| format!("reading {}", input.display()))?;
    if corpus.is_empty() {
        bail!("{} has no usable documents", input.display());
    }
    let out = cfg.out("corpus.jsonl");
    corpus.write_jsonl(&out)?;
    let summary = cfg.out("ingest.json");
    write_json(&summary, &stats)?;
    println!(
        "lines {}  kept {}  malformed {}  invalid {}  duplicate {}",
        stats.lines, stats.kept, stats.malformed, stats.invalid, stats.duplicate
    );
    let mut rec = record(cfg, "ingest", json!({ "limit": limit }));
    rec.input(input)?;
    rec.output(&out)?;
    rec.output(&summary)?;
    Ok(rec)
}

fn cmd_synth(cfg: &RunConfig) -> Result<RunRecord> {
    let corpus = synth::generate(&cfg.synth)?;
    let out = cfg.out("corpus.jsonl");
    corpus.write_jsonl(&out)?;
    println!("documents {}", corpus.len());
    let mut rec = record(cfg, "synth-corpus", json!({ "synth": cfg.synth }));
    rec.output(&out)?;
    Ok(rec)
}

fn cmd_train_pv(cfg: &RunConfig, corpus: &Option<PathBuf>) -> Result<RunRecord> {
    let cp = cfg.input(corpus, "corpus.jsonl")?;
    let corpus = load_corpus(&cp)?;
    let pv = train_pv(&corpus, &cfg.pv)?;
    let out = cfg.out("pv.bin");
    pv.save(&out)?;
    println!("documents {}  dim {}  fingerprint {}", pv.num_docs(), pv.dim(), pv.fingerprint());
    let mut rec = record(cfg, "train-pv", json!({ "pv": cfg.pv }));
    rec.input(&cp)?;
    rec.output(&out)?;
    Ok(rec)
}

#[derive(Serialize)]
struct ValidationSummary {
    checked: usize,
    failed: usize,
    pass_rate: f64,
    failures: Vec<(String, String)>,
}

fn cmd_build(
    cfg: &RunConfig,
    variant: DatasetVariant,
    corpus: &Option<PathBuf>,
    pv: &Option<PathBuf>,
) -> Result<RunRecord> {
    let cp = cfg.input(corpus, "corpus.jsonl")?;
    let pp = cfg.input(pv, "pv.bin")?;
    let corpus = load_corpus(&cp)?;
    let pv = PvModel::load(&pp).with_context(|| format!("loading {}", pp.display()))?;
    let base = build_dataset(&corpus, &pv, &cfg.dataset)?;
    let (ds, tag) = match variant {
        DatasetVariant::Pv => (base, "pv"),
        DatasetVariant::Rnd => (build_rnd_dataset(&corpus, &base, cfg.seed)?, "rnd"),
        DatasetVariant::Combined => {
            let rnd = build_rnd_dataset(&corpus, &base, cfg.seed)?;
            (combine(&base, &rnd)?, "combined")
        }
    };
    let out = cfg.out(format!("dataset-{tag}.jsonl"));
    ds.write(&out)?;
    let mut rec = record(cfg, &format!("build-dataset-{tag}"), json!({ "dataset": cfg.dataset, "variant": tag }));
    rec.input(&cp)?;
    rec.input(&pp)?;
    rec.output(&out)?;
    rec.output(&mcgen_core::mccreate::provenance_path(&out))?;
    let counts: Vec<String> = [Split::Train, Split::Dev, Split::Test]
        .iter()
        .map(|&s| format!("{s} {}", ds.split(s).count()))
        .collect();
    println!(
        "instances {}  ({})  documents without enough decoys {}",
        ds.instances.len(),
        counts.join(", "),
        ds.provenance.too_few_decoys
    );
    if variant == DatasetVariant::Pv {
        let report = validate_dataset(&ds, &corpus, &pv);
        let summary = ValidationSummary {
            checked: report.checked,
            failed: report.failures.len(),
            pass_rate: report.pass_rate(),
            failures: report.failures.iter().take(20).cloned().collect(),
        };
        let vp = cfg.out("validation-pv.json");
        write_json(&vp, &summary)?;
        rec.output(&vp)?;
        println!("validation: {} checked, {} failed", summary.checked, summary.failed);
        if !report.passed() {
            rec.write(&cfg.out_dir)?;
            bail!("{} instances failed validation, see {}", summary.failed, vp.display());
        }
    }
    Ok(rec)
}

#[derive(Debug, Clone, Serialize)]
pub struct StatsRow {
    pub split: String,
    pub instances: usize,
    pub avg_tokens_article: f64,
    pub avg_tokens_answer: f64,
}

pub fn stats_rows(ds: &McDataset) -> Vec<StatsRow> {
    let row = |name: &str, insts: Vec<&McInstance>| {
        let n = insts.len();
        let art: usize = insts.iter().map(|i| tokenize(&i.article).len()).sum();
        let (ans, opts) = insts.iter().flat_map(|i| &i.options).fold((0usize, 0usize), |(t, c), o| {
            (t + tokenize(o).len(), c + 1)
        });
        StatsRow {
            split: name.to_string(),
            instances: n,
            avg_tokens_article: if n == 0 { 0.0 } else { art as f64 / n as f64 },
            avg_tokens_answer: if opts == 0 { 0.0 } else { ans as f64 / opts as f64 },
        }
    };
    let mut rows: Vec<StatsRow> = [Split::Train, Split::Dev, Split::Test]
        .iter()
        .map(|&s| row(&s.to_string(), ds.split(s).collect()))
        .collect();
    rows.push(row("all", ds.instances.iter().collect()));
    rows
}

pub fn render_stats(rows: &[StatsRow]) -> String {
    let mut out = format!("{:<6}  {:>10}  {:>19}  {:>18}\n", "Split", "#instances", "Avg. tokens/article", "Avg. tokens/answer");
    for r in rows {
        out.push_str(&format!(
            "{:<6}  {:>10}  {:>19.1}  {:>18.1}\n",
            r.split, r.instances, r.avg_tokens_article, r.avg_tokens_answer
        ));
    }
    out
}

fn cmd_stats(cfg: &RunConfig, dataset: &Option<PathBuf>) -> Result<RunRecord> {
    let dp = cfg.input(dataset, "dataset-pv.jsonl")?;
    let ds = load_dataset(&dp)?;
    let rows = stats_rows(&ds);
    let out = cfg.out("stats.json");
    write_json(&out, &rows)?;
    print!("{}", render_stats(&rows));
    let mut rec = record(cfg, "stats", json!({}));
    rec.input(&dp)?;
    rec.output(&out)?;
    Ok(rec)
}

fn cmd_baselines(cfg: &RunConfig, dataset: &Option<PathBuf>, pv: &Option<PathBuf>, split: Split) -> Result<RunRecord> {
    let dp = cfg.input(dataset, "dataset-pv.jsonl")?;
    let pp = cfg.input(pv, "pv.bin")?;
    let ds = load_dataset(&dp)?;
    let pv = PvModel::load(&pp).with_context(|| format!("loading {}", pp.display()))?;
    let insts = split_of(&ds, split)?;
    let reports = vec![
        accuracy("Random", &baseline_random(&insts, cfg.seed), &insts, cfg.seed)?,
        accuracy("BLEU", &baseline_bleu(&insts, &cfg.dataset.bleu), &insts, cfg.seed)?,
        accuracy("PV", &baseline_pv(&insts, &pv, cfg.eval.infer_steps)?, &insts, cfg.seed)?,
    ];
    let out = cfg.out(format!("baselines-{split}.json"));
    write_json(&out, &reports)?;
    print!("{}", render_table(&reports));
    let mut rec = record(cfg, &format!("eval-baselines-{split}"), json!({ "eval": cfg.eval, "bleu": cfg.dataset.bleu }));
    rec.input(&dp)?;
    rec.input(&pp)?;
    rec.output(&out)?;
    Ok(rec)
}

/// Encoded train, dev and test splits under a vocabulary built from train.
struct Splits {
    train: Vec<EncodedInstance>,
    dev: Vec<EncodedInstance>,
    test: Vec<EncodedInstance>,
    vocab: mcgen_core::corpus::Vocabulary,
}

fn encode_splits(ds: &McDataset, mcfg: &ModelConfig) -> Result<Splits> {
    let train = split_of(ds, Split::Train)?;
    let vocab = build_vocab(&train, mcfg.vocab_size);
    let enc = |insts: &[McInstance]| encode_instances(insts, &vocab, mcfg).0;
    Ok(Splits {
        train: enc(&train),
        dev: enc(&ds.split(Split::Dev).cloned().collect::<Vec<_>>()),
        test: enc(&ds.split(Split::Test).cloned().collect::<Vec<_>>()),
        vocab,
    })
}

fn fit(cfg: &RunConfig, mcfg: ModelConfig, data: &Splits) -> Result<TrainOutcome> {
    let model = Model::new(mcfg, data.vocab.clone(), cfg.seed)?;
    info!("{} model, {} parameters, {} training instances", model.config.kind, model.num_params(), data.train.len());
    let out = train(model, &data.train, &data.dev, &cfg.train)?;
    for r in &out.log {
        info!(
            "step {:>6}  loss {:.4}  dev_acc {}",
            r.step,
            r.train_loss,
            r.dev_acc.map_or("-".into(), |a| format!("{a:.4}"))
        );
    }
    Ok(out)
}

fn acc_of(model: &Model, data: &[EncodedInstance]) -> Result<Option<f64>> {
    if data.is_empty() {
        return Ok(None);
    }
    Ok(Some(mcgen_models::train::accuracy(model, data)?))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{:.1}", 100.0 * v))
}

fn cmd_train_model(cfg: &RunConfig, mcfg: ModelConfig, dataset: &Option<PathBuf>) -> Result<RunRecord> {
    let dp = cfg.input(dataset, "dataset-pv.jsonl")?;
    let ds = load_dataset(&dp)?;
    let data = encode_splits(&ds, &mcfg)?;
    let kind = mcfg.kind;
    let out = fit(cfg, mcfg.clone(), &data)?;
    let ck = cfg.out(format!("model-{kind}.ckpt"));
    out.best.save(&ck, out.best_step, out.best_dev_accuracy)?;
    let metrics = cfg.out(format!("model-{kind}.metrics.csv"));
    write_metrics_csv(&metrics, &out.log)?;
    let summary = cfg.out(format!("model-{kind}.json"));
    write_json(
        &summary,
        &json!({
            "kind": kind,
            "params": out.best.num_params(),
            "best_step": out.best_step,
            "best_dev_accuracy": out.best_dev_accuracy,
            "final_step": out.final_step,
        }),
    )?;
    println!(
        "{kind}: best dev accuracy {} at step {} of {}",
        fmt_opt(out.best_dev_accuracy),
        out.best_step,
        out.final_step
    );
    let mut rec = record(cfg, &format!("train-model-{kind}"), json!({ "model": mcfg, "train": cfg.train }));
    rec.input(&dp)?;
    for p in [&ck, &metrics, &summary] {
        rec.output(p)?;
    }
    Ok(rec)
}

fn cmd_eval_model(cfg: &RunConfig, checkpoint: &Path, dataset: &Option<PathBuf>, split: Split) -> Result<RunRecord> {
    let dp = cfg.input(dataset, "dataset-pv.jsonl")?;
    if !checkpoint.exists() {
        return Err(UsageError(format!("checkpoint {} does not exist", checkpoint.display())).into());
    }
    let (model, header) = Model::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let ds = load_dataset(&dp)?;
    let insts = split_of(&ds, split)?;
    let (enc, _) = encode_instances(&insts, &model.vocab, &model.config);
    let kind = model.config.kind;
    let report: EvalReport = accuracy(&kind.to_string(), &model.predict(&enc)?, &insts, cfg.seed)?;
    let rouge = if kind == ModelKind::Hybrid {
        Some(mean_rouge_l(&model, &enc[..cfg.eval.rouge_samples.min(enc.len())])?)
    } else {
        None
    };
    let out = cfg.out(format!("eval-{kind}-{split}.json"));
    write_json(&out, &json!({ "report": report, "rouge_l": rouge, "checkpoint_step": header.step }))?;
    print!("{}", render_table(std::slice::from_ref(&report)));
    if let Some(r) = rouge {
        println!("ROUGE-L {r:.4}");
    }
    let mut rec = record(cfg, &format!("eval-model-{kind}-{split}"), json!({ "eval": cfg.eval }));
    rec.input(checkpoint)?;
    rec.input(&dp)?;
    rec.output(&out)?;
    Ok(rec)
}

#[derive(Debug, Clone, Serialize)]
struct SweepRow {
    lambda_gen: f64,
    dev_acc: Option<f64>,
    test_acc: Option<f64>,
    rouge_l: Option<f64>,
}

fn cmd_sweep(cfg: &RunConfig, lambdas: &[f64], dataset: &Option<PathBuf>) -> Result<RunRecord> {
    if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(UsageError("lambda values must be finite and non-negative".into()).into());
    }
    let dp = cfg.input(dataset, "dataset-pv.jsonl")?;
    let ds = load_dataset(&dp)?;
    let base = cfg.model(ModelKind::Hybrid)?;
    let data = encode_splits(&ds, &base)?;
    let rouge_set = &data.dev[..cfg.eval.rouge_samples.min(data.dev.len())];
    let mut rows = Vec::new();
    for &l in lambdas {
        let out = fit(cfg, ModelConfig { lambda_gen: l, ..base.clone() }, &data)?;
        let rouge = if rouge_set.is_empty() { None } else { Some(mean_rouge_l(&out.best, rouge_set)?) };
        let row = SweepRow {
            lambda_gen: l,
            dev_acc: acc_of(&out.best, &data.dev)?,
            test_acc: acc_of(&out.best, &data.test)?,
            rouge_l: rouge,
        };
        info!("lambda_gen {l}: {row:?}");
        rows.push(row);
    }
    let out = cfg.out("sweep-lambda-gen.csv");
    let mut w = csv::Writer::from_path(&out).with_context(|| format!("writing {}", out.display()))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    println!("{:>10}  {:>7}  {:>8}  {:>7}", "lambda_gen", "Dev", "Test", "ROUGE-L");
    for r in &rows {
        println!(
            "{:>10}  {:>7}  {:>8}  {:>7}",
            r.lambda_gen,
            fmt_opt(r.dev_acc),
            fmt_opt(r.test_acc),
            r.rouge_l.map_or("-".into(), |x| format!("{x:.3}"))
        );
    }
    let mut rec = record(cfg, "sweep-lambda-gen", json!({ "model": base, "train": cfg.train, "lambdas": lambdas }));
    rec.input(&dp)?;
    rec.output(&out)?;
    Ok(rec)
}

#[derive(Debug, Clone, Serialize)]
struct AblateRow {
    tied_embeddings: bool,
    attention: Attention,
    params: usize,
    dev_acc: Option<f64>,
    test_acc: Option<f64>,
}

fn cmd_ablate(cfg: &RunConfig, dataset: &Option<PathBuf>) -> Result<RunRecord> {
    let dp = cfg.input(dataset, "dataset-pv.jsonl")?;
    let ds = load_dataset(&dp)?;
    let base = cfg.model(ModelKind::Hybrid)?;
    let data = encode_splits(&ds, &base)?;
    let mut rows = Vec::new();
    for tied in [true, false] {
        for attention in [Attention::Bilinear, Attention::Tanh] {
            let m = ModelConfig {
                tied_embeddings: tied,
                attention,
                ..base.clone()
            };
            let out = fit(cfg, m, &data)?;
            rows.push(AblateRow {
                tied_embeddings: tied,
                attention,
                params: out.best.num_params(),
                dev_acc: acc_of(&out.best, &data.dev)?,
                test_acc: acc_of(&out.best, &data.test)?,
            });
        }
    }
    let out = cfg.out("ablate.csv");
    let mut w = csv::Writer::from_path(&out).with_context(|| format!("writing {}", out.display()))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    println!("{:<6}  {:<9}  {:>9}  {:>6}  {:>6}", "Tied", "Attention", "Params", "Dev", "Test");
    for r in &rows {
        println!(
            "{:<6}  {:<9}  {:>9}  {:>6}  {:>6}",
            r.tied_embeddings,
            r.attention.to_string(),
            r.params,
            fmt_opt(r.dev_acc),
            fmt_opt(r.test_acc)
        );
    }
    let mut rec = record(cfg, "ablate", json!({ "model": base, "train": cfg.train }));
    rec.input(&dp)?;
    rec.output(&out)?;
    Ok(rec)
}

fn cmd_serve(
    cfg: &RunConfig,
    dataset: &Option<PathBuf>,
    port: Option<u16>,
    log: Option<PathBuf>,
    static_dir: Option<PathBuf>,
) -> Result<()> {
    let dp = cfg.input(dataset, "dataset-pv.jsonl")?;
    let ds = load_dataset(&dp)?;
    let a = &cfg.annotate;
    let log = log.unwrap_or_else(|| cfg.out(&a.log));
    let static_dir = static_dir.or_else(|| a.static_dir.clone());
    let addr: SocketAddr = format!("{}:{}", a.host, port.unwrap_or(a.port))
        .parse()
        .map_err(|e| UsageError(format!("bad listen address: {e}")))?;
    let state = Arc::new(mcgen_annotate::AppState::new(ds.instances, &log)?);
    let mut rec = record(cfg, "serve-annotate", json!({ "annotate": a }));
    rec.input(&dp)?;
    rec.write(&cfg.out_dir)?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(cfg.workers)
        .enable_all()
        .build()?;
    rt.block_on(mcgen_annotate::serve(state, addr, static_dir, |bound| {
        info!("listening on http://{bound}, records in {}", log.display());
        println!("listening on http://{bound}");
    }))
    .with_context(|| format!("serving on {addr}"))
}
