//! The desk-scale experiment: generate the corpus, split speakers, train
//! every model on ideal-clean data, score all four conditions and compare.

use crate::experiment::{evaluate, extract_records, write_split, Manifest};
use avsad::corpus::seed::derive_seed;
use avsad::corpus::{generate_corpus, Condition, CorpusConfig};
use avsad::eval::{canonical_json, compare_reports, emit_report, write_json, ComparisonResult, EvalReport};
use avsad::features::{apply_normalizers, fit_normalizers, FeatureContract, FeatureKind, StreamContract, UtteranceFeatures, CONTEXT};
use avsad::train::{split_corpus, train_recipe, History, ModelRecipe, SplitRatios, SplitSpec, TrainConfig};
use avsad::zoo::{Frontend, ModelKind, TrainedModel};
use avsad::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReproConfig {
    pub seed: u64,
    pub corpus: CorpusConfig,
    pub width_scale: f64,
    pub train: TrainConfig,
    /// Unscaled A-RNN width of the spectrogram model.
    pub spectrogram_audio_width: usize,
    /// Model names to run; empty runs all.
    pub models: Vec<String>,
}

impl ReproConfig {
    pub fn new(seed: u64) -> Self {
        ReproConfig {
            seed,
            corpus: CorpusConfig {
                seed,
                ..CorpusConfig::default()
            },
            width_scale: 0.125,
            train: TrainConfig {
                seed,
                ..TrainConfig::default()
            },
            spectrogram_audio_width: 512,
            models: Vec::new(),
        }
    }
}

/// One trained system in the protocol.
#[derive(Clone, Debug)]
pub struct ModelPlan {
    pub name: &'static str,
    pub recipe: ModelRecipe,
    /// Model whose subnet is reused.
    pub source: Option<&'static str>,
}

pub fn plans(cfg: &ReproConfig) -> Vec<ModelPlan> {
    let recipe = |i: u64, kind: ModelKind, frontend: Frontend, audio_width: Option<usize>| {
        let mut r = ModelRecipe::new(kind, cfg.width_scale, derive_seed(&[cfg.seed, 0xB11D, i]));
        r.frontend = frontend;
        r.audio_width = audio_width;
        r
    };
    let all = vec![
        ModelPlan {
            name: "brnn-e2e",
            recipe: recipe(0, ModelKind::BrnnE2e, Frontend::Mel, None),
            source: None,
        },
        ModelPlan {
            name: "audio-only",
            recipe: recipe(1, ModelKind::AudioOnly, Frontend::Mel, None),
            source: Some("brnn-e2e"),
        },
        ModelPlan {
            name: "video-only",
            recipe: recipe(2, ModelKind::VideoOnly, Frontend::Mel, None),
            source: Some("brnn-e2e"),
        },
        ModelPlan {
            name: "brnn-spectrogram",
            recipe: recipe(3, ModelKind::BrnnE2e, Frontend::Spectrogram, Some(cfg.spectrogram_audio_width)),
            source: None,
        },
        ModelPlan {
            name: "brnn-sadjadi",
            recipe: recipe(4, ModelKind::BrnnE2e, Frontend::Sadjadi, None),
            source: None,
        },
        ModelPlan {
            name: "ryant-dnn",
            recipe: recipe(5, ModelKind::RyantDnn, Frontend::Mel, None),
            source: None,
        },
        ModelPlan {
            name: "tao2017-brnn",
            recipe: recipe(6, ModelKind::Tao2017Brnn, Frontend::Mel, None),
            source: None,
        },
        ModelPlan {
            name: "ariav-ae-rnn",
            recipe: recipe(7, ModelKind::AriavAeRnn, Frontend::Mel, None),
            source: None,
        },
    ];
    if cfg.models.is_empty() {
        return all;
    }
    let mut want: Vec<&str> = cfg.models.iter().map(String::as_str).collect();
    // Sources must be trained first.
    for p in &all {
        if want.contains(&p.name) {
            if let Some(s) = p.source {
                if !want.contains(&s) {
                    want.push(s);
                }
            }
        }
    }
    all.into_iter().filter(|p| want.contains(&p.name)).collect()
}

fn log(msg: &str) {
    eprintln!("[repro] {msg}");
}

/// Features needed by any plan; unimodal models reuse BRNN streams.
fn needed_features(plans: &[ModelPlan]) -> Vec<FeatureKind> {
    let mut v = Vec::new();
    for p in plans {
        let c = match p.recipe.kind {
            ModelKind::AudioOnly | ModelKind::VideoOnly => FeatureContract {
                streams: vec![
                    StreamContract::new("audio", &[(FeatureKind::Mel, CONTEXT)]),
                    StreamContract::new("video", &[(FeatureKind::Roi, 1)]),
                ],
            },
            _ => p.recipe.contract(None).expect("self-contained recipe"),
        };
        v.extend(c.features());
    }
    v.sort();
    v.dedup();
    v
}

#[derive(Clone, Debug)]
pub struct ModelResult {
    pub name: String,
    pub histories: Vec<History>,
    pub reports: BTreeMap<Condition, EvalReport>,
}

#[derive(Clone, Debug)]
pub struct ReproOutcome {
    pub out_dir: PathBuf,
    pub split: SplitSpec,
    pub results: Vec<ModelResult>,
    pub comparisons: Vec<(Condition, ComparisonResult)>,
    pub rejected: Vec<String>,
}

impl ReproOutcome {
    pub fn report(&self, model: &str, condition: Condition) -> Option<&EvalReport> {
        self.results.iter().find(|r| r.name == model)?.reports.get(&condition)
    }

    pub fn f1(&self, model: &str, condition: Condition) -> Option<f64> {
        self.report(model, condition).map(|r| r.macro_avg.f1)
    }

    pub fn comparison(&self, a: &str, b: &str, condition: Condition) -> Option<&ComparisonResult> {
        let (ra, rb) = (self.report(a, condition)?, self.report(b, condition)?);
        self.comparisons
            .iter()
            .find(|(c, r)| *c == condition && r.a == ra.model && r.b == rb.model)
            .map(|(_, r)| r)
    }
}

/// Pairs compared with the one-tailed test, per condition.
pub const COMPARISONS: [(&str, &str); 9] = [
    ("brnn-e2e", "audio-only"),
    ("brnn-e2e", "video-only"),
    ("audio-only", "video-only"),
    ("brnn-e2e", "brnn-spectrogram"),
    ("brnn-e2e", "brnn-sadjadi"),
    ("brnn-spectrogram", "brnn-sadjadi"),
    ("brnn-e2e", "ryant-dnn"),
    ("brnn-e2e", "tao2017-brnn"),
    ("brnn-e2e", "ariav-ae-rnn"),
];

fn history_json(h: &History) -> Value {
    json!({
        "epochs": h.epochs(),
        "best_epoch": h.best_epoch,
        "train_loss": h.train_loss,
        "val_loss": h.val_loss,
    })
}

pub fn run_repro(cfg: &ReproConfig, out: &Path, threads: usize) -> Result<ReproOutcome> {
    let started = Instant::now();
    let io = |p: &Path, e: std::io::Error| Error::io(p, e);
    std::fs::create_dir_all(out).map_err(|e| io(out, e))?;
    let corpus_dir = out.join("corpus");
    log(&format!(
        "generating {} speakers x {} utterances",
        cfg.corpus.speakers, cfg.corpus.utts_per_speaker
    ));
    generate_corpus(&cfg.corpus, &corpus_dir)?;
    let manifest = Manifest::load(&corpus_dir.join("manifest.jsonl"))?;
    let split = split_corpus(&manifest.records, &SplitRatios::default(), true, cfg.seed)?;
    write_split(&split, &out.join("split.json"))?;
    log(&format!(
        "split {}/{}/{} speakers",
        split.train.len(),
        split.test.len(),
        split.validation.len()
    ));

    let plans = plans(cfg);
    let kinds = needed_features(&plans);
    let mut rejected = Vec::new();
    let mut load = |speakers: &[String], c: Condition| -> Result<Vec<UtteranceFeatures>> {
        let recs = manifest.select(speakers, c);
        let (f, r) = extract_records(&recs, &manifest.root, &kinds, threads)?;
        rejected.extend(r.into_iter().map(|id| format!("{id}.{c}")));
        Ok(f)
    };
    let mut train = load(&split.train, Condition::IDEAL_CLEAN)?;
    let mut val = load(&split.validation, Condition::IDEAL_CLEAN)?;
    let mut test: BTreeMap<Condition, Vec<UtteranceFeatures>> = BTreeMap::new();
    for c in Condition::ALL {
        test.insert(c, load(&split.test, c)?);
    }
    log(&format!("features ready after {:.1}s", started.elapsed().as_secs_f64()));

    // Every normaliser depends only on its feature and the training set, so
    // all models share one fit.
    let all = FeatureContract {
        streams: vec![StreamContract {
            name: "all".into(),
            parts: kinds
                .iter()
                .map(|&feature| avsad::features::FeaturePart { feature, context: 1 })
                .collect(),
        }],
    };
    let norms = fit_normalizers(&all, &train)?;
    apply_normalizers(&norms, &mut train)?;
    apply_normalizers(&norms, &mut val)?;
    for utts in test.values_mut() {
        apply_normalizers(&norms, utts)?;
    }

    let models_dir = out.join("models");
    let reports_dir = out.join("reports");
    std::fs::create_dir_all(&models_dir).map_err(|e| io(&models_dir, e))?;
    std::fs::create_dir_all(&reports_dir).map_err(|e| io(&reports_dir, e))?;
    let mut trained: BTreeMap<&str, TrainedModel> = BTreeMap::new();
    let mut results = Vec::new();
    for plan in &plans {
        let t0 = Instant::now();
        let pretrained = plan.source.map(|s| &trained[s]);
        let want = plan.recipe.contract(pretrained)?.features();
        let subset: Vec<_> = norms.iter().filter(|n| want.contains(&n.feature)).cloned().collect();
        let tc = TrainConfig {
            seed: derive_seed(&[cfg.train.seed, 0x7EA1, plan.recipe.options.seed]),
            ..cfg.train
        };
        let outcome = train_recipe(&plan.recipe, &train, &val, &tc, subset, pretrained)?;
        let epochs: Vec<usize> = outcome.histories.iter().map(History::epochs).collect();
        log(&format!(
            "{}: {} params, epochs {:?}, best val {:.4}, {:.1}s",
            plan.name,
            outcome.model.graph.param_count(),
            epochs,
            outcome.histories.last().map_or(f64::NAN, History::best_val_loss),
            t0.elapsed().as_secs_f64()
        ));
        outcome.model.save(&models_dir.join(format!("{}.avsd", plan.name)))?;
        let mut reports = BTreeMap::new();
        for (c, utts) in &test {
            let r = evaluate(&outcome.model, plan.name, *c, utts)?;
            emit_report(&r, &reports_dir.join(format!("{}.{c}.json", plan.name)))?;
            reports.insert(*c, r);
        }
        log(&format!(
            "{}: F1 {}",
            plan.name,
            reports
                .iter()
                .map(|(c, r)| format!("{c} {:.3}", r.macro_avg.f1))
                .collect::<Vec<_>>()
                .join(", ")
        ));
        results.push(ModelResult {
            name: plan.name.to_string(),
            histories: outcome.histories,
            reports,
        });
        trained.insert(plan.name, outcome.model);
    }

    let mut comparisons = Vec::new();
    for c in Condition::ALL {
        for (a, b) in COMPARISONS {
            let find = |n: &str| results.iter().find(|r| r.name == n).and_then(|r| r.reports.get(&c));
            if let (Some(ra), Some(rb)) = (find(a), find(b)) {
                comparisons.push((c, compare_reports(ra, rb)?));
            }
        }
    }
    let outcome = ReproOutcome {
        out_dir: out.to_path_buf(),
        split,
        results,
        comparisons,
        rejected,
    };
    write_json(&summary_json(cfg, &outcome), &out.join("summary.json"))?;
    log(&format!("done in {:.1}s", started.elapsed().as_secs_f64()));
    Ok(outcome)
}

fn summary_json(cfg: &ReproConfig, o: &ReproOutcome) -> Value {
    let models: serde_json::Map<String, Value> = o
        .results
        .iter()
        .map(|r| {
            let f1: serde_json::Map<String, Value> =
                r.reports.iter().map(|(c, rep)| (c.to_string(), json!(rep.macro_avg.f1))).collect();
            (
                r.name.clone(),
                json!({
                    "training": r.histories.iter().map(history_json).collect::<Vec<_>>(),
                    "macro_f1": f1,
                }),
            )
        })
        .collect();
    json!({
        "config": serde_json::to_value(cfg).expect("config serialises"),
        "split": serde_json::to_value(&o.split).expect("split serialises"),
        "rejected": o.rejected,
        "models": models,
        "comparisons": o
            .comparisons
            .iter()
            .map(|(c, r)| {
                let mut v = r.to_json();
                v["condition"] = json!(c.to_string());
                v
            })
            .collect::<Vec<_>>(),
    })
}

/// Fixed-width results table.
pub fn results_table(o: &ReproOutcome) -> String {
    let mut s = String::new();
    s.push_str(&format!("{:<18}", "model"));
    for c in Condition::ALL {
        s.push_str(&format!("{:>17}", c.to_string()));
    }
    s.push('\n');
    for r in &o.results {
        s.push_str(&format!("{:<18}", r.name));
        for c in Condition::ALL {
            match r.reports.get(&c) {
                Some(rep) => s.push_str(&format!("{:>17.4}", rep.macro_avg.f1)),
                None => s.push_str(&format!("{:>17}", "-")),
            }
        }
        s.push('\n');
    }
    s
}

/// Canonical text of the summary, for byte comparisons.
pub fn summary_text(cfg: &ReproConfig, o: &ReproOutcome) -> String {
    canonical_json(&summary_json(cfg, o))
}

/// Every model saved under `out/models`, in name order.
pub fn load_models(out: &Path) -> Result<Vec<(String, TrainedModel)>> {
    let dir = out.join("models");
    let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "avsd"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            Ok((name, TrainedModel::load(&p)?))
        })
        .collect()
}
