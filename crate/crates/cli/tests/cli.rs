use std::path::Path;
use std::process::{Command, Output};

use clap::CommandFactory;
use mcgen_cli::{Cli, GlobalFlags, RunConfig};
use mcgen_models::ModelKind;

fn mcgen(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcgen"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .env_remove("MCGEN_CONFIG")
        .output()
        .unwrap()
}

fn ok(args: &[&str], out: &Path) -> String {
    let o = mcgen(args, out);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn help_documents_every_flag() {
    let root = Cli::command();
    let mut cmds = vec![root.clone()];
    cmds.extend(root.get_subcommands().cloned());
    for mut cmd in cmds {
        let name = cmd.get_name().to_string();
        let help = cmd.render_long_help().to_string();
        for arg in cmd.get_arguments() {
            if ["help", "version"].contains(&arg.get_id().as_str()) {
                continue;
            }
            assert!(arg.get_help().is_some(), "{name}: `{}` has no help text", arg.get_id());
            if let Some(long) = arg.get_long() {
                assert!(help.contains(&format!("--{long}")), "{name}: --{long} missing from help");
            }
        }
    }
    let names: Vec<&str> = root.get_subcommands().map(|c| c.get_name()).collect();
    for expected in [
        "ingest",
        "synth-corpus",
        "train-pv",
        "build-dataset",
        "stats",
        "eval-baselines",
        "train-model",
        "eval-model",
        "sweep-lambda-gen",
        "ablate",
        "serve-annotate",
    ] {
        assert!(names.contains(&expected), "missing subcommand {expected}");
    }
}

#[test]
fn binary_help_lists_global_flags() {
    let dir = tempfile::tempdir().unwrap();
    let o = mcgen(&["train-model", "--help"], dir.path());
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for flag in ["--config", "--seed", "--out-dir", "--workers", "--nondeterministic", "--steps", "--lambda-gen"] {
        assert!(text.contains(flag), "{flag} missing:\n{text}");
    }
}

#[test]
fn config_layers_defaults_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(
        dir.path(),
        "seed = 7\nworkers = 3\n[pv]\ndim = 32\n[train]\nsteps = 10\nseed = 99\n[model]\nembed_dim = 8\n",
    );
    let flags = GlobalFlags {
        config: Some(p.clone()),
        workers: Some(2),
        ..GlobalFlags::default()
    };
    let cfg = RunConfig::load(&flags).unwrap();
    assert_eq!(cfg.seed, 7);
    assert_eq!(cfg.workers, 2);
    assert_eq!(cfg.pv.dim, 32);
    assert_eq!(cfg.pv.epochs, 5);
    assert_eq!(cfg.pv.seed, 7);
    assert_eq!(cfg.pv.workers, 1);
    assert_eq!(cfg.train.steps, 10);
    assert_eq!(cfg.train.seed, 99);
    assert_eq!(cfg.dataset.seed, 7);
    let m = cfg.model(ModelKind::Ffnn5).unwrap();
    assert_eq!((m.kind, m.embed_dim), (ModelKind::Ffnn5, 8));
    assert_eq!(m.gru_hidden, mcgen_models::ModelConfig::desk(ModelKind::Ffnn5).gru_hidden);

    let flags = GlobalFlags {
        config: Some(p),
        seed: Some(11),
        nondeterministic: true,
        ..GlobalFlags::default()
    };
    let cfg = RunConfig::load(&flags).unwrap();
    assert_eq!((cfg.seed, cfg.pv.seed, cfg.train.seed), (11, 11, 99));
    assert!(!cfg.deterministic);
    assert_eq!(cfg.pv.workers, 3);
}

#[test]
fn bad_config_and_missing_inputs_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "[pv]\nwindow = 3\n");
    let o = mcgen(&["--config", bad.to_str().unwrap(), "stats"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("pv.window"), "{err}");

    let o = mcgen(&["stats"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.lines().filter(|l| l.starts_with("error:")).count(), 1, "{err}");
    assert!(err.contains("mcgen.log"), "{err}");

    let o = mcgen(&["train-model", "svm"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn runtime_failure_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("raw.jsonl");
    std::fs::write(&input, "not json\n{\"id\":\"a\",\"title\":\"\",\"article\":\"x\"}\n").unwrap();
    let o = mcgen(&["ingest", "--input", input.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let log = std::fs::read_to_string(dir.path().join("mcgen.log")).unwrap();
    assert!(log.contains("no usable documents"), "{log}");
}

#[test]
fn ingest_tallies_and_writes_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("raw.jsonl");
    std::fs::write(
        &input,
        concat!(
            "{\"id\":\"a\",\"title\":\"Rain hits town\",\"article\":\"It rained all day.\"}\n",
            "garbage\n",
            "{\"id\":\"a\",\"title\":\"Again\",\"article\":\"dup\"}\n",
            "{\"id\":\"b\",\"title\":\"Sun returns\",\"article\":\"Clear skies.\"}\n",
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    let text = ok(&["ingest", "--input", input.to_str().unwrap()], &out);
    assert!(text.contains("kept 2"), "{text}");
    let stats: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("ingest.json")).unwrap()).unwrap();
    assert_eq!((stats["malformed"].as_u64(), stats["duplicate"].as_u64()), (Some(1), Some(1)));
    assert_eq!(std::fs::read_to_string(out.join("corpus.jsonl")).unwrap().lines().count(), 2);
    let prov: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("provenance/ingest.json")).unwrap()).unwrap();
    assert_eq!(prov["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(prov["version"], env!("CARGO_PKG_VERSION"));
    assert!(prov["config_hash"].is_string());
}

/// Small corpus through every dataset and model command.
#[test]
fn pipeline_outputs_have_the_documented_layout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[pv]\ninitial_lr = 0.25\ndim = 64\n[train]\nsteps = 4\neval_every = 2\ndev_limit = 20\n\
         [model]\nembed_dim = 8\ngru_hidden = 8\nmax_article_len = 20\nvocab_size = 300\n[eval]\nrouge_samples = 5\n",
    );
    let out = dir.path().join("run");
    let c = cfg.to_str().unwrap();
    let run = |args: &[&str]| {
        let mut a = vec!["--config", c];
        a.extend_from_slice(args);
        ok(&a, &out)
    };
    run(&["synth-corpus", "--docs", "400"]);
    run(&["train-pv"]);
    run(&["build-dataset"]);
    for v in ["rnd", "combined"] {
        run(&["build-dataset", "--variant", v]);
        assert!(out.join(format!("dataset-{v}.jsonl")).exists());
    }
    let validation: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("validation-pv.json")).unwrap()).unwrap();
    assert_eq!(validation["failed"], 0);

    let stats = run(&["stats"]);
    let header = stats.lines().next().unwrap();
    for col in ["#instances", "Avg. tokens/article", "Avg. tokens/answer"] {
        assert!(header.contains(col), "{stats}");
    }
    let rows: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("stats.json")).unwrap()).unwrap();
    assert_eq!(rows[3]["split"], "all");
    let n: u64 = (0..3).map(|i| rows[i]["instances"].as_u64().unwrap()).sum();
    assert_eq!(rows[3]["instances"].as_u64(), Some(n));

    let table = run(&["eval-baselines"]);
    let methods: Vec<&str> = table.lines().skip(1).map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(methods, ["Random", "BLEU", "PV"]);

    run(&["train-model", "ffnn5"]);
    let ck = out.join("model-ffnn5.ckpt");
    let eval = run(&["eval-model", "--checkpoint", ck.to_str().unwrap(), "--split", "dev"]);
    assert!(eval.contains("ffnn5"), "{eval}");
    let metrics = std::fs::read_to_string(out.join("model-ffnn5.metrics.csv")).unwrap();
    assert!(metrics.starts_with("step,train_loss,dev_acc,rouge_l\n"));
    assert_eq!(metrics.lines().count(), 3);

    run(&["sweep-lambda-gen", "0", "0.5", "--steps", "2"]);
    let csv = std::fs::read_to_string(out.join("sweep-lambda-gen.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "lambda_gen,dev_acc,test_acc,rouge_l");
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("0.5,"));

    run(&["ablate", "--steps", "1"]);
    let csv = std::fs::read_to_string(out.join("ablate.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("tied_embeddings,attention,params,dev_acc,test_acc"));
    assert_eq!(csv.lines().count(), 5);

    for name in ["synth-corpus", "train-pv", "build-dataset-pv", "stats", "eval-baselines-dev", "train-model-ffnn5", "ablate"] {
        assert!(out.join(format!("provenance/{name}.json")).exists(), "{name}");
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[pv]\ninitial_lr = 0.25\ndim = 32\n");
    let outputs = |name: &str| {
        let out = dir.path().join(name);
        for args in [&["synth-corpus", "--docs", "300"][..], &["train-pv"], &["build-dataset", "--variant", "combined"]] {
            let mut a = vec!["--config", cfg.to_str().unwrap()];
            a.extend_from_slice(args);
            ok(&a, &out);
        }
        ["corpus.jsonl", "pv.bin", "dataset-combined.jsonl", "dataset-combined.jsonl.provenance.json"]
            .map(|f| std::fs::read(out.join(f)).unwrap())
    };
    assert_eq!(outputs("a"), outputs("b"));
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["desk.toml", "full.toml"] {
        let flags = GlobalFlags {
            config: Some(dir.join(name)),
            ..GlobalFlags::default()
        };
        let cfg = RunConfig::load(&flags).unwrap_or_else(|e| panic!("{name}: {e:#}"));
        for kind in [ModelKind::Ffnn, ModelKind::Ffnn5, ModelKind::Hybrid] {
            cfg.model(kind).unwrap().validate().unwrap();
        }
    }
    let full = RunConfig::load(&GlobalFlags {
        config: Some(dir.join("full.toml")),
        ..GlobalFlags::default()
    })
    .unwrap();
    assert_eq!(full.model(ModelKind::Hybrid).unwrap(), mcgen_models::ModelConfig::default());
    assert_eq!((full.train.steps, full.train.batch_size), (1_000_000, 200));
}
