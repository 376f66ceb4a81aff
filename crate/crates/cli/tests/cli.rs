use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use storyeval::decoding::NgramModel;
use storyeval::intrinsic::distinct_n;
use storyeval::report::{Manifest, MetricReport};
use storyeval::schema::read_all;
use storyeval::EvalRecord;

fn storyeval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_storyeval"))
        .args(args)
        .env_remove("STORYEVAL_RESOURCES")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = storyeval(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{args:?}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture(dir: &Path) -> PathBuf {
    let path = dir.join("x.jsonl");
    let lines: Vec<String> = (0..4)
        .map(|i| {
            EvalRecord::from_text(
                format!("r{i}"),
                "human",
                None,
                "A boat on the sea .",
                "The boat sailed far . It met a storm at night . The crew sang .",
            )
            .to_json_line()
        })
        .collect();
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

#[test]
fn eval_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture(dir.path());
    let out = dir.path().join("o");
    ok(&["eval", "--input", s(&input), "--out", s(&out)]);
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.starts_with("metric,model,k,mean,stderr,n,fingerprint"));
    let report = MetricReport::from_csv(&csv).unwrap();
    assert_eq!(report.get("distinct_1", "human", None).unwrap().n, 4);
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.fingerprint, report.fingerprint);
    assert!(manifest.outputs.contains_key("metrics.jsonl"));
}

#[test]
fn exit_codes() {
    let out = storyeval(&["eval", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(storyeval(&[]).status.code(), Some(2));
    assert_eq!(storyeval(&["--help"]).status.code(), Some(0));
    assert_eq!(storyeval(&["--version"]).status.code(), Some(0));
    assert_eq!(storyeval(&["gen", "--model", "m", "--prompts", "p", "--out", "o", "--k", "0"]).status.code(), Some(2));
    assert_eq!(storyeval(&["eval", "--input", "x", "--out", "o", "--workers", "0"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let input = fixture(dir.path());
    let out = dir.path().join("o");
    // a probe without a scoring source is a usage error
    assert_eq!(storyeval(&["probe", "swap", "--input", s(&input), "--out", s(&out)]).status.code(), Some(2));

    // broken records fail the run unless skipped
    let bad = dir.path().join("bad.jsonl");
    let mut text = fs::read_to_string(&input).unwrap();
    text.push_str("{\"id\": \"broken\"}\n");
    fs::write(&bad, text).unwrap();
    let run = storyeval(&["eval", "--input", s(&bad), "--out", s(&out)]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("line 5"));
    ok(&["eval", "--input", s(&bad), "--out", s(&out), "--skip-invalid"]);
    let missing = dir.path().join("nope.jsonl");
    assert_eq!(storyeval(&["eval", "--input", s(&missing), "--out", s(&out)]).status.code(), Some(1));
}

#[test]
fn resources_fall_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    ok(&["synth", "--out", s(&corpus), "--train-tokens", "2000", "--n-test", "4"]);
    let out = dir.path().join("o");
    let run = Command::new(env!("CARGO_BIN_EXE_storyeval"))
        .args(["eval", "--input", s(&corpus.join("test.jsonl")), "--out", s(&out)])
        .env("STORYEVAL_RESOURCES", corpus.join("resources"))
        .output()
        .unwrap();
    assert!(run.status.success());
    let report = MetricReport::from_csv(&fs::read_to_string(out.join("report.csv")).unwrap()).unwrap();
    assert!(report.get("stopword_frac", "human", None).is_some());
    assert!(report.get("sent_similarity", "human", None).is_some());
}

struct Sweep {
    report: MetricReport,
    manifests: Vec<String>,
    generated: Vec<EvalRecord>,
    vocab: usize,
}

fn sweep(root: &Path, workers: &str) -> Sweep {
    let corpus = root.join("corpus");
    let res = corpus.join("resources");
    let common = ["--seed", "7", "--workers", workers];
    let run = |args: &[&str]| ok(&[args, &common[..]].concat());
    run(&["synth", "--out", s(&corpus), "--train-tokens", "20000", "--n-test", "24"]);
    run(&["baseline", "--input", s(&corpus.join("test.jsonl")), "--out", s(&root.join("human"))]);
    run(&["train-ngram", "--input", s(&corpus.join("train.jsonl")), "--order", "3", "--out", s(&root.join("lm"))]);
    let model = root.join("lm/ngram.bin");
    let human = root.join("human/records.jsonl");
    run(&[
        "gen", "--model", s(&model), "--prompts", s(&human), "--k", "1,2,20,V", "--resources", s(&res), "--out",
        s(&root.join("gen")),
    ]);
    let generated = root.join("gen/records.jsonl");
    run(&[
        "eval", "--input", s(&human), "--input", s(&generated), "--resources", s(&res), "--model", s(&model), "--out",
        s(&root.join("eval")),
    ]);
    run(&["report", "--input", s(&root.join("eval/metrics.jsonl")), "--out", s(&root.join("report"))]);
    run(&["probe", "swap", "--input", s(&human), "--model", s(&model), "--out", s(&root.join("swap"))]);
    run(&["probe", "confidence", "--input", s(&generated), "--out", s(&root.join("conf"))]);

    let manifests = ["corpus", "human", "lm", "gen", "eval", "report", "swap", "conf"]
        .iter()
        .map(|d| fs::read_to_string(root.join(d).join("manifest.json")).unwrap())
        .collect();
    Sweep {
        report: MetricReport::from_csv(&fs::read_to_string(root.join("report/report.csv")).unwrap()).unwrap(),
        manifests,
        generated: read_all(&generated, false).unwrap().0,
        vocab: NgramModel::load(&model).unwrap().vocab().len(),
    }
}

#[test]
fn full_pipeline_through_the_binary() {
    let a_dir = tempfile::tempdir().unwrap();
    let a = sweep(a_dir.path(), "1");
    let ks = [1, 2, 20, a.vocab];

    // generated stories: right count, length and k labels
    assert_eq!(a.generated.len(), 4 * 24);
    for r in &a.generated {
        assert_eq!(r.tokens.len(), 150);
        assert!(ks.contains(&r.k.unwrap()));
        assert!(r.annotations.is_some());
    }

    // report means recomputed independently from the generated records
    for k in ks {
        let group: Vec<&EvalRecord> = a.generated.iter().filter(|r| r.k == Some(k)).collect();
        let mean = group
            .iter()
            .map(|r| distinct_n(&r.tokens, 1).unwrap().unwrap())
            .sum::<f64>()
            / group.len() as f64;
        let row = a.report.get("distinct_1", "ngram", Some(k)).unwrap();
        assert_eq!(row.n, 24);
        assert!((row.mean - mean).abs() < 1e-12);
    }

    // diversity grows and likelihood falls as k widens
    let at = |m: &str, k: usize| a.report.get(m, "ngram", Some(k)).unwrap().mean;
    for w in ks.windows(2) {
        assert!(at("distinct_1", w[0]) < at("distinct_1", w[1]), "distinct_1 at {w:?}");
        assert!(at("story_logprob", w[0]) > at("story_logprob", w[1]), "story_logprob at {w:?}");
    }
    assert!(a.report.get("distinct_1", "human", None).is_some());
    assert!(a_dir.path().join("report/distinct_1.svg").exists());

    // same config, different worker count and directory: identical manifests
    let b_dir = tempfile::tempdir().unwrap();
    let b = sweep(b_dir.path(), "3");
    assert_eq!(a.manifests, b.manifests);
}
