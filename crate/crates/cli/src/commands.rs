use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};
use storyeval::decoding::NgramModel;
use storyeval::intrinsic::ConcretenessConfig;
use storyeval::pipeline::{evaluate, generate_records, story_context, training_sequences, EvalConfig, GenConfig, RecordMetrics};
use storyeval::probes::{
    confidence_curve, prompt_ranking_accuracy, prompt_ranking_from_scores, story_logprob, swap_probe,
    swap_probe_from_scores, teacher_force, ProbeResult, ScoreTable,
};
use storyeval::relatedness::SifConfig;
use storyeval::report::{aggregate, Manifest};
use storyeval::resources::{file_hash, LexiconSet};
use storyeval::schema::{build_human_baseline, read_all, write_records};
use storyeval::scorer::RandomScorer;
use storyeval::synthetic::{write_resources, SyntheticCorpus, TagLexicon, TAGS_FILE};
use storyeval::{EvalRecord, LmScorer, SequenceScorer, STORY_WORDS};

use crate::args::*;

/// Bad invocation discovered after parsing; exits like a clap error.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Eval(a) => eval(a),
        Command::Probe(a) => probe(a, seed),
        Command::Gen(a) => gen(a, seed),
        Command::TrainNgram(a) => train(a),
        Command::Baseline(a) => baseline(a),
        Command::Report(a) => report(a),
        Command::Synth(a) => synth(a, seed),
    }
}

fn hashed(paths: &[PathBuf]) -> Result<Vec<Value>> {
    paths
        .iter()
        .map(|p| {
            let hash = file_hash(p).with_context(|| format!("reading {}", p.display()))?;
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            Ok(json!({"name": name, "sha256": hash}))
        })
        .collect()
}

fn load_inputs(input: &Input) -> Result<Vec<EvalRecord>> {
    let mut all = Vec::new();
    for path in &input.input {
        let (records, rejected) =
            read_all(path, input.skip_invalid).with_context(|| format!("loading {}", path.display()))?;
        if !rejected.is_empty() {
            log::warn!("{}: skipped {} invalid records", path.display(), rejected.len());
        }
        all.extend(records);
    }
    Ok(all)
}

fn out_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn finish(manifest: &mut Manifest, out: &Path, files: &[PathBuf]) -> Result<()> {
    for f in files {
        manifest.record_output(f)?;
    }
    manifest.write(out.join("manifest.json"))?;
    Ok(())
}

fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item)?);
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn sort_records(records: &mut [EvalRecord]) {
    records.sort_by(|a, b| (&a.id, &a.model, a.k).cmp(&(&b.id, &b.model, b.k)));
}

fn load_model(path: &Path) -> Result<NgramModel> {
    NgramModel::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn eval(a: EvalArgs) -> Result<()> {
    let records = load_inputs(&a.input)?;
    let lex = match &a.resources {
        Some(dir) => LexiconSet::load_dir(dir).with_context(|| format!("loading resources from {}", dir.display()))?,
        None => {
            log::warn!("no resource directory; lexicon-based metrics will be absent");
            LexiconSet::default()
        }
    };
    let model = a.model.as_deref().map(load_model).transpose()?;
    let cfg = EvalConfig {
        sif: SifConfig {
            a: a.sif_a,
            pc_scope: a.pc_scope,
            ..SifConfig::default()
        },
        concreteness: ConcretenessConfig {
            include_propn: a.include_propn,
            include_aux: !a.exclude_aux,
        },
    };
    let config = json!({
        "command": "eval",
        "inputs": hashed(&a.input.input)?,
        "skip_invalid": a.input.skip_invalid,
        "resources": lex.hashes,
        "model": a.model.as_ref().map(|m| hashed(std::slice::from_ref(m))).transpose()?,
        "eval": cfg,
    });
    let mut manifest = Manifest::new(&config)?;
    let scorer = model.as_ref().map(|m| m as &dyn SequenceScorer);
    let mut metrics = evaluate(&records, &lex, &cfg, scorer);
    metrics.sort_by(|x, y| (&x.id, &x.model, x.k).cmp(&(&y.id, &y.model, y.k)));

    out_dir(&a.out)?;
    let metrics_path = a.out.join("metrics.jsonl");
    write_jsonl(&metrics_path, &metrics)?;
    let (rep, excl) = aggregate(metrics.iter().flat_map(RecordMetrics::observations), &manifest.fingerprint);
    let csv_path = a.out.join("report.csv");
    rep.emit_csv(&csv_path)?;
    let undefined: usize = excl.absent.values().sum();
    println!(
        "evaluated {} records; {} report rows; {} undefined values",
        metrics.len(),
        rep.rows.len(),
        undefined
    );
    finish(&mut manifest, &a.out, &[metrics_path, csv_path])
}

enum Scorer {
    Ngram(NgramModel),
    Random(RandomScorer),
}

impl SequenceScorer for Scorer {
    fn score_sequence(&self, context: &[String], target: &[String]) -> f64 {
        match self {
            Scorer::Ngram(m) => m.score_sequence(context, target),
            Scorer::Random(r) => r.score_sequence(context, target),
        }
    }
}

fn probe(a: ProbeArgs, seed: u64) -> Result<()> {
    let records = load_inputs(&a.input)?;
    let mut source = json!(null);
    let scorer = if let Some(m) = &a.model {
        source = json!({"model": hashed(std::slice::from_ref(m))?});
        Some(Scorer::Ngram(load_model(m)?))
    } else if a.random {
        source = json!("random");
        Some(Scorer::Random(RandomScorer::new(seed)))
    } else {
        None
    };
    let table = match &a.scores {
        Some(p) => {
            source = json!({"scores": hashed(std::slice::from_ref(p))?});
            Some(ScoreTable::load(p).with_context(|| format!("loading scores {}", p.display()))?)
        }
        None => None,
    };
    let config = json!({
        "command": "probe",
        "probe": format!("{:?}", a.kind).to_lowercase(),
        "inputs": hashed(&a.input.input)?,
        "skip_invalid": a.input.skip_invalid,
        "source": source,
        "tie_policy": a.tie_policy,
        "seed": seed,
    });
    let mut manifest = Manifest::new(&config)?;
    let mut result = ProbeResult::default();
    match a.kind {
        ProbeKind::Rank => {
            let r = match (&scorer, &table) {
                (Some(s), _) => {
                    let stories: Vec<Vec<String>> = records.iter().map(|r| r.tokens.clone()).collect();
                    let prompts: Vec<Vec<String>> = records.iter().map(|r| r.prompt_tokens().into_owned()).collect();
                    prompt_ranking_accuracy(s, &stories, &prompts, seed, a.tie_policy)?
                }
                (None, Some(t)) => {
                    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
                    prompt_ranking_from_scores(&ids, t, seed, a.tie_policy)?
                }
                (None, None) => bail!(Usage("probe rank needs one of --model, --scores or --random".into())),
            };
            println!("prompt ranking accuracy {:.4} over {} stories", r.accuracy, r.n);
            result.prompt_ranking = Some(r);
        }
        ProbeKind::Swap => {
            let r = match (&scorer, &table) {
                (Some(s), _) => swap_probe(s, &records, a.tie_policy)?,
                (None, Some(t)) => swap_probe_from_scores(&records, t, a.tie_policy)?,
                (None, None) => bail!(Usage("probe swap needs one of --model, --scores or --random".into())),
            };
            println!(
                "swap error rate {:.4} over {} stories ({} skipped)",
                r.error_rate, r.n_scored, r.n_skipped
            );
            result.swap = Some(r);
        }
        ProbeKind::Confidence => {
            let traces = match &scorer {
                Some(Scorer::Ngram(m)) => records
                    .iter()
                    .map(|r| teacher_force(m, &story_context(r), &r.tokens, m.vocab_size()))
                    .collect(),
                Some(Scorer::Random(_)) => bail!(Usage("probe confidence cannot use --random".into())),
                None if table.is_some() => bail!(Usage("probe confidence cannot use --scores".into())),
                None => records.iter().filter_map(|r| r.trace.clone()).collect::<Vec<_>>(),
            };
            if traces.len() < records.len() {
                log::warn!("{} records carry no trace", records.len() - traces.len());
            }
            let curve = confidence_curve(&traces, STORY_WORDS)?;
            let logps: Vec<f64> = traces.iter().filter_map(|t| story_logprob(t).ok()).collect();
            if !logps.is_empty() {
                result.story_logprob_mean = Some(logps.iter().sum::<f64>() / logps.len() as f64);
            }
            result.word_perplexity = storyeval::probes::word_perplexity(&traces).ok();
            println!(
                "confidence curve over {} traces ({} excluded); perplexity {}",
                curve.n_used,
                curve.n_excluded,
                result.word_perplexity.map_or("undefined".into(), |p| format!("{p:.3}"))
            );
            result.confidence = Some(curve);
        }
    }
    out_dir(&a.out)?;
    let path = a.out.join("probe.json");
    let mut body = serde_json::to_value(&result)?;
    body["fingerprint"] = json!(manifest.fingerprint);
    fs::write(&path, serde_json::to_string_pretty(&body)? + "\n")?;
    finish(&mut manifest, &a.out, &[path])
}

fn gen(a: GenArgs, seed: u64) -> Result<()> {
    let model = load_model(&a.model)?;
    let (prompts, rejected) = read_all(&a.prompts, a.skip_invalid)?;
    if !rejected.is_empty() {
        log::warn!("skipped {} invalid prompt records", rejected.len());
    }
    let tagger = match &a.resources {
        Some(dir) if dir.join(TAGS_FILE).exists() => Some(TagLexicon::load(dir.join(TAGS_FILE))?),
        _ => None,
    };
    let ks: Vec<usize> = a.k.iter().map(|k| k.resolve(model.vocab_size())).collect();
    let config = json!({
        "command": "gen",
        "model": hashed(std::slice::from_ref(&a.model))?,
        "prompts": hashed(std::slice::from_ref(&a.prompts))?,
        "tags": tagger.as_ref().map(|_| hashed(&[a.resources.as_ref().unwrap().join(TAGS_FILE)])).transpose()?,
        "k": ks,
        "name": a.name,
        "length": a.length,
        "temperature": a.temperature,
        "seed": seed,
    });
    let mut manifest = Manifest::new(&config)?;
    let mut records = Vec::new();
    for &k in &ks {
        let cfg = GenConfig {
            model_name: a.name.clone(),
            k,
            seed,
            target_len: a.length,
            temperature: a.temperature,
        };
        records.extend(generate_records(&model, &prompts, &cfg, tagger.as_ref())?);
    }
    sort_records(&mut records);
    out_dir(&a.out)?;
    let path = a.out.join("records.jsonl");
    write_records(&path, &records)?;
    println!("generated {} stories at k = {ks:?}", records.len());
    finish(&mut manifest, &a.out, &[path])
}

fn train(a: TrainArgs) -> Result<()> {
    let records = load_inputs(&a.input)?;
    let config = json!({
        "command": "train-ngram",
        "inputs": hashed(&a.input.input)?,
        "skip_invalid": a.input.skip_invalid,
        "order": a.order,
    });
    let mut manifest = Manifest::new(&config)?;
    let model = storyeval::decoding::train_ngram(&training_sequences(&records), a.order as usize)?;
    out_dir(&a.out)?;
    let path = a.out.join("ngram.bin");
    model.save(&path)?;
    println!(
        "trained order-{} model on {} records; vocabulary {}",
        a.order,
        records.len(),
        model.vocab_size()
    );
    finish(&mut manifest, &a.out, &[path])
}

fn baseline(a: BaselineArgs) -> Result<()> {
    let records = load_inputs(&a.input)?;
    let config = json!({
        "command": "baseline",
        "inputs": hashed(&a.input.input)?,
        "skip_invalid": a.input.skip_invalid,
        "length": STORY_WORDS,
    });
    let mut manifest = Manifest::new(&config)?;
    let mut b = build_human_baseline(records);
    sort_records(&mut b.records);
    out_dir(&a.out)?;
    let path = a.out.join("records.jsonl");
    write_records(&path, &b.records)?;
    println!(
        "kept {} human stories; dropped {} short, skipped {} non-human",
        b.records.len(),
        b.dropped_short,
        b.skipped_non_human
    );
    finish(&mut manifest, &a.out, &[path])
}

fn report(a: ReportArgs) -> Result<()> {
    let mut metrics: Vec<RecordMetrics> = Vec::new();
    for path in &a.input {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let m = serde_json::from_str(line).with_context(|| format!("{} line {}", path.display(), i + 1))?;
            metrics.push(m);
        }
    }
    let config = json!({
        "command": "report",
        "inputs": hashed(&a.input)?,
        "metrics": a.metric,
    });
    let mut manifest = Manifest::new(&config)?;
    let (rep, _) = aggregate(metrics.iter().flat_map(RecordMetrics::observations), &manifest.fingerprint);
    if rep.rows.is_empty() {
        bail!("no defined metric values in the input");
    }
    out_dir(&a.out)?;
    let csv_path = a.out.join("report.csv");
    rep.emit_csv(&csv_path)?;
    let mut files = vec![csv_path];
    let wanted: Vec<String> = if a.metric.is_empty() {
        rep.metrics().into_iter().map(String::from).collect()
    } else {
        a.metric.clone()
    };
    for m in &wanted {
        let path = a.out.join(format!("{m}.svg"));
        rep.emit_svg(m, &path)?;
        files.push(path);
    }
    println!("{} rows; {} plots", rep.rows.len(), wanted.len());
    finish(&mut manifest, &a.out, &files)
}

fn synth(a: SynthArgs, seed: u64) -> Result<()> {
    let config = json!({
        "command": "synth",
        "seed": seed,
        "train_tokens": a.train_tokens,
        "n_test": a.n_test,
    });
    let mut manifest = Manifest::new(&config)?;
    let corpus = SyntheticCorpus::generate(seed, a.train_tokens, a.n_test);
    out_dir(&a.out)?;
    let train = a.out.join("train.jsonl");
    let test = a.out.join("test.jsonl");
    write_records(&train, &corpus.train)?;
    write_records(&test, &corpus.test)?;
    let res = a.out.join("resources");
    write_resources(&res, &corpus)?;
    let mut files = vec![train, test];
    let mut names: Vec<PathBuf> = fs::read_dir(&res)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    names.sort();
    files.extend(names);
    println!(
        "wrote {} training records ({} tokens) and {} test records",
        corpus.train.len(),
        corpus.train_tokens(),
        corpus.test.len()
    );
    finish(&mut manifest, &a.out, &files)
}
