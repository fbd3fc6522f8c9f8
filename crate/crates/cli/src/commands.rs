use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use paat::attention::attention_map;
use paat::data::{
    audit_corpus, generate_corpus, label_name, parse_label_name, read_dataset, split_dataset, to_documents,
    write_dataset, Document, Vocab,
};
use paat::kv::parse_list;
use paat::metrics::{disagreement_report, evaluate, MetricsReport};
use paat::model::{
    format_epoch_log, load_checkpoint, save_checkpoint, score_documents, train_loop, PaatConfig, PaatModel, Variant,
};

use crate::render::render_text;
use crate::settings::RunSettings;
use crate::{AblateArgs, EvalArgs, ExplainArgs, GenDataArgs, TrainArgs};

pub const TRAIN_FILE: &str = "train.tsv";
pub const VALID_FILE: &str = "valid.tsv";
pub const TEST_FILE: &str = "test.tsv";
pub const VOCAB_FILE: &str = "vocab.txt";

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn gen_data(args: &GenDataArgs) -> Result<()> {
    let mut s = args.settings.resolve()?;
    if let Some(seed) = args.settings.seed {
        s.gen.seed = seed;
    }
    if let Some(n) = args.doc_len {
        s.gen.doc_len_min = n;
        s.gen.doc_len_max = n;
    }
    if let Some(n) = args.signature_per_label {
        s.gen.signature_per_label = n;
    }
    if let Some(n) = args.dispersion {
        s.gen.dispersion = n;
    }
    if let Some(n) = args.num_docs {
        s.gen.num_docs = n;
    }
    s.echo();
    let docs = generate_corpus(&s.gen)?;
    let audit = audit_corpus(&docs, &s.gen);
    let vocab = Vocab::synthetic(s.gen.vocab_size);
    let (train, valid, test) = split_dataset(&docs, s.ratios, s.gen.seed)?;

    create_dir(&args.out)?;
    for (name, part) in [(TRAIN_FILE, &train), (VALID_FILE, &valid), (TEST_FILE, &test)] {
        let text = part.iter().map(|d| d.to_text(&vocab)).collect::<paat::Result<Vec<_>>>()?;
        write_dataset(&text, &args.out.join(name))?;
    }
    vocab.save(&args.out.join(VOCAB_FILE))?;
    write(&args.out.join("genspec.txt"), s.gen.to_kv().to_text())?;
    let summary = format!(
        "docs={}\ttrain={}\tvalid={}\ttest={}\tdispersion={}\tmin_regions_per_label={}\tmean_regions_per_label={:.3}\tforeign_signature_tokens={}\taudit={}\n",
        audit.docs,
        train.len(),
        valid.len(),
        test.len(),
        s.gen.dispersion,
        audit.min_regions_per_label,
        audit.mean_regions_per_label,
        audit.foreign_signature_tokens,
        if audit.passes(&s.gen) { "pass" } else { "FAIL" }
    );
    write(&args.out.join("audit.txt"), &summary)?;
    eprint!("audit: {summary}");
    if !audit.passes(&s.gen) {
        bail!("generated corpus failed its own dispersion audit");
    }
    Ok(())
}

fn vocab_for(data: &Path, explicit: Option<&PathBuf>) -> Result<Vocab> {
    let path = match explicit {
        Some(p) => p.clone(),
        None => data.parent().unwrap_or(Path::new(".")).join(VOCAB_FILE),
    };
    Vocab::load(&path).with_context(|| format!("loading vocabulary {}", path.display()))
}

fn load_docs(path: &Path, vocab: &Vocab, labels: usize) -> Result<Vec<Document>> {
    let text = read_dataset(path).with_context(|| format!("reading {}", path.display()))?;
    to_documents(&text, vocab, labels).with_context(|| format!("converting {}", path.display()))
}

struct Splits {
    train: Vec<Document>,
    valid: Vec<Document>,
    test: Option<Vec<Document>>,
}

/// Loads a gen-data directory and pins the model's vocabulary size to it.
fn load_splits(dir: &Path, s: &mut RunSettings, with_test: bool) -> Result<Splits> {
    let vocab = Vocab::load(&dir.join(VOCAB_FILE)).with_context(|| format!("loading vocabulary from {}", dir.display()))?;
    if s.model.vocab_size != vocab.len() {
        log::info!("vocab_size set to {} from {}", vocab.len(), VOCAB_FILE);
        s.model.vocab_size = vocab.len();
    }
    let l = s.model.labels;
    Ok(Splits {
        train: load_docs(&dir.join(TRAIN_FILE), &vocab, l)?,
        valid: load_docs(&dir.join(VALID_FILE), &vocab, l)?,
        test: if with_test {
            Some(load_docs(&dir.join(TEST_FILE), &vocab, l)?)
        } else {
            None
        },
    })
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let mut s = args.settings.resolve()?;
    let splits = load_splits(&args.data, &mut s, false)?;
    s.validate()?;
    s.echo();
    create_dir(&args.out)?;
    write(&args.out.join("config.txt"), s.to_kv().to_text())?;
    let model = PaatModel::new(s.model.clone())?;
    let out = train_loop(model, &s.train, &splits.train, &splits.valid)?;
    save_checkpoint(&out.best, &args.out.join("model.ckpt"))?;
    write(&args.out.join("epochs.tsv"), format_epoch_log(&out.logs))?;
    let best = &out.logs[out.best_epoch - 1];
    log::info!(
        "best epoch {} of {} (valid micro-F1 {:.4}){}",
        out.best_epoch,
        out.logs.len(),
        best.valid_micro_f1,
        if out.stopped_early { ", stopped early" } else { "" }
    );
    Ok(())
}

fn check_compatible(model: &PaatModel, vocab: &Vocab) -> Result<()> {
    if model.config.vocab_size != vocab.len() {
        bail!(
            "checkpoint expects a vocabulary of {} tokens but the vocabulary file has {}",
            model.config.vocab_size,
            vocab.len()
        );
    }
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let ks: Vec<usize> = parse_list(&args.k)?;
    let vocab = vocab_for(&args.data, args.vocab.as_ref())?;
    let model = load_checkpoint(&args.checkpoint)?;
    check_compatible(&model, &vocab)?;
    let docs = load_docs(&args.data, &vocab, model.config.labels)?;
    let sm = score_documents(&model, &docs)?;
    let mut report: MetricsReport = evaluate(&sm, &ks, args.threshold)?;
    if let Some(other) = &args.compare {
        let other = load_checkpoint(other)?;
        check_compatible(&other, &vocab)?;
        if other.config.labels != model.config.labels {
            bail!("compared checkpoints disagree on the label count");
        }
        let sm_b = score_documents(&other, &docs)?;
        report.disagreement = Some(disagreement_report(&sm, &sm_b, args.threshold)?);
    }
    let mut json = report.to_json();
    json.push('\n');
    write(&args.out, json)?;
    log::info!("micro-F1 {:.4}, macro-F1 {:.4}", report.micro_f1, report.macro_f1);
    Ok(())
}

pub fn explain(args: &ExplainArgs) -> Result<()> {
    let vocab = vocab_for(&args.data, args.vocab.as_ref())?;
    let model = load_checkpoint(&args.checkpoint)?;
    check_compatible(&model, &vocab)?;
    let docs = load_docs(&args.data, &vocab, model.config.labels)?;
    let doc = docs
        .iter()
        .find(|d| d.id == args.doc)
        .with_context(|| format!("no document with id {:?}", args.doc))?;
    let labels: Vec<usize> = match &args.labels {
        Some(list) => list
            .split(',')
            .map(|name| {
                let name = name.trim();
                match parse_label_name(name) {
                    Some(l) if l < model.config.labels => Ok(l),
                    _ => bail!("unknown label name {name:?}"),
                }
            })
            .collect::<Result<_>>()?,
        None => doc.gold.clone(),
    };
    if labels.is_empty() {
        bail!("document {} has no gold labels; pass --labels", doc.id);
    }
    let trace = model.forward_with_attention(&doc.tokens)?;
    let maps = attention_map(
        &trace.conventional,
        &trace.partition,
        &trace.boundaries,
        &trace.tokens,
        &vocab,
        &labels,
    )?;
    let json = serde_json::json!({
        "doc": doc.id,
        "variant": model.config.variant.to_string(),
        "n_att": trace.boundaries.len(),
        "segments": trace.boundaries.ranges(),
        "probabilities": labels
            .iter()
            .map(|&l| (label_name(l), trace.prediction.probs[l]))
            .collect::<std::collections::BTreeMap<_, _>>(),
        "labels": maps,
    });
    let mut text = serde_json::to_string_pretty(&json)?;
    text.push('\n');
    write(&args.out, text)?;
    let rendered = render_text(&maps, &trace.tokens, &vocab, &trace.boundaries, args.width)?;
    write(&args.out.with_extension("txt"), rendered)?;
    Ok(())
}

/// One row of an ablation table.
#[derive(Debug, Clone)]
struct Cell {
    name: String,
    config: PaatConfig,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn ablate(args: &AblateArgs) -> Result<()> {
    let mut s = args.settings.resolve()?;
    let splits = load_splits(&args.data, &mut s, true)?;
    s.validate()?;
    s.echo();
    let test = splits.test.as_ref().expect("loaded with test split");
    if args.seeds == 0 {
        bail!("--seeds must be at least 1");
    }

    let mut cells = Vec::new();
    for v in args.variants.split(',').filter(|v| !v.trim().is_empty()) {
        let variant: Variant = v.trim().parse()?;
        cells.push(Cell {
            name: variant.to_string(),
            config: PaatConfig {
                variant,
                ..s.model.clone()
            },
        });
    }
    if let Some(parts) = &args.partitions {
        for n in parse_list::<usize>(parts)? {
            cells.push(Cell {
                name: format!("paat n_att={n}"),
                config: PaatConfig {
                    variant: Variant::Paat,
                    n_att: Some(n),
                    ..s.model.clone()
                },
            });
        }
    }
    if cells.is_empty() {
        bail!("the sweep has no cells");
    }

    create_dir(&args.out)?;
    write(&args.out.join("config.txt"), s.to_kv().to_text())?;
    let mut table = String::from("cell\truns\tmicro_f1\tmacro_f1\tmicro_auc\tmacro_auc");
    for k in &s.ks {
        write!(table, "\tp_at_{k}").expect("writing to a String");
    }
    table.push('\n');

    for (ci, cell) in cells.iter().enumerate() {
        let mut reports = Vec::new();
        let mut failure = None;
        for seed in 1..=args.seeds {
            log::info!("cell {} seed {seed}", cell.name);
            let config = PaatConfig {
                seed,
                ..cell.config.clone()
            };
            let run = || -> Result<MetricsReport> {
                let out = train_loop(PaatModel::new(config)?, &s.train, &splits.train, &splits.valid)?;
                let sm = score_documents(&out.best, test)?;
                Ok(evaluate(&sm, &s.ks, s.train.threshold)?)
            };
            match run() {
                Ok(r) => {
                    let mut json = r.to_json();
                    json.push('\n');
                    write(&args.out.join(format!("cell{ci}_seed{seed}.json")), json)?;
                    reports.push(r);
                }
                Err(e) => {
                    log::error!("cell {} seed {seed} failed: {e:#}", cell.name);
                    failure = Some(format!("{e:#}"));
                    break;
                }
            }
        }
        write!(table, "{}\t{}", cell.name, reports.len()).expect("writing to a String");
        if let Some(msg) = failure {
            writeln!(table, "\tFAILED: {msg}").expect("writing to a String");
            continue;
        }
        let mut column = |f: &dyn Fn(&MetricsReport) -> Option<f64>| {
            let xs: Option<Vec<f64>> = reports.iter().map(f).collect();
            match xs {
                Some(xs) => {
                    let (m, sd) = mean_std(&xs);
                    write!(table, "\t{m:.4}±{sd:.4}").expect("writing to a String");
                }
                None => table.push_str("\tn/a"),
            }
        };
        column(&|r| Some(r.micro_f1));
        column(&|r| Some(r.macro_f1));
        column(&|r| r.micro_auc);
        column(&|r| r.macro_auc);
        for k in &s.ks {
            column(&|r| r.p_at_k.get(k).copied());
        }
        table.push('\n');
    }
    write(&args.out.join("table.tsv"), &table)?;
    eprint!("{table}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
    }
}
