//! One function per subcommand.

use crate::checks;
use crate::experiment::{evaluate, extract_records, model_features, thread_count, write_split, Manifest};
use crate::repro::{results_table, ReproConfig};
use avsad::corpus::{generate_corpus, Condition, CorpusConfig};
use avsad::eval::{canonical_json, compare_reports, emit_report, read_report};
use avsad::features::{apply_normalizers, FeatureKind};
use avsad::train::{split_corpus, train_recipe, ModelRecipe, SplitRatios, SplitSpec, TrainConfig};
use avsad::zoo::{Frontend, ModelKind, TrainedModel};
use avsad::{Error, Result};
use std::path::{Path, PathBuf};

pub struct GenData {
    pub out: PathBuf,
    pub speakers: usize,
    pub utts: usize,
    pub seed: u64,
}

pub fn gen_data(a: &GenData) -> Result<String> {
    let cfg = CorpusConfig {
        speakers: a.speakers,
        utts_per_speaker: a.utts,
        seed: a.seed,
        ..CorpusConfig::default()
    };
    let records = generate_corpus(&cfg, &a.out)?;
    Ok(format!("wrote {} records to {}", records.len(), a.out.join("manifest.jsonl").display()))
}

const FEATURE_MAGIC: &[u8; 4] = b"AVFT";

/// Feature matrix file: magic, u32 version, u32 dim, u64 steps, then
/// little-endian f64 values in time-major order.
pub fn write_feature_file(path: &Path, dim: usize, values: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(20 + values.len() * 8);
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&1u32.to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    buf.extend_from_slice(&((values.len() / dim) as u64).to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_feature_file(path: &Path) -> Result<(usize, Vec<f64>)> {
    let b = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if b.len() < 20 || &b[..4] != FEATURE_MAGIC {
        return Err(Error::format(path, 0, "not a feature file"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().expect("4 bytes"));
    if u32_at(4) != 1 {
        return Err(Error::format(path, 4, format!("unsupported version {}", u32_at(4))));
    }
    let dim = u32_at(8) as usize;
    let steps = u64::from_le_bytes(b[12..20].try_into().expect("8 bytes")) as usize;
    if dim == 0 || b.len() != 20 + dim * steps * 8 {
        return Err(Error::format(path, 20, format!("expected {dim}x{steps} values")));
    }
    let values = b[20..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok((dim, values))
}

pub fn extract(manifest: &Path, kind: FeatureKind, out: &Path) -> Result<String> {
    if kind == FeatureKind::Roi {
        return Err(Error::Input("roi crops are extracted on the fly by train and eval".into()));
    }
    let m = Manifest::load(manifest)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let records: Vec<_> = m.records.iter().collect();
    let (feats, rejected) = extract_records(&records, &m.root, &[kind], thread_count())?;
    let mut written = 0;
    for (r, f) in records.iter().filter(|r| !rejected.contains(&r.utt_id)).zip(&feats) {
        let seq = f.sequence(kind).expect("requested feature");
        write_feature_file(&out.join(format!("{}.{}.{kind}.avft", r.utt_id, r.condition)), seq.dim, &seq.values)?;
        written += 1;
    }
    Ok(format!("wrote {written} {kind} files, {} rejected", records.len() - written))
}

pub struct Train {
    pub manifest: PathBuf,
    pub split_seed: u64,
    pub model: ModelKind,
    pub config: Option<PathBuf>,
    pub width_scale: f64,
    pub frontend: Frontend,
    pub audio_width: Option<usize>,
    pub pretrained: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
}

fn split_for(m: &Manifest, seed: u64) -> Result<SplitSpec> {
    split_corpus(&m.records, &SplitRatios::default(), true, seed)
}

pub fn train(a: &Train) -> Result<String> {
    let m = Manifest::load(&a.manifest)?;
    let split = split_for(&m, a.split_seed)?;
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    cfg.seed = a.seed;
    let pretrained = a.pretrained.as_deref().map(TrainedModel::load).transpose()?;
    let mut recipe = ModelRecipe::new(a.model, a.width_scale, a.seed);
    recipe.frontend = a.frontend;
    recipe.audio_width = a.audio_width;
    let contract = recipe.contract(pretrained.as_ref())?;
    let threads = thread_count();
    let load = |speakers: &[String]| {
        let recs = m.select(speakers, Condition::IDEAL_CLEAN);
        extract_records(&recs, &m.root, &contract.features(), threads).map(|r| r.0)
    };
    let (mut tr, mut va) = (load(&split.train)?, load(&split.validation)?);
    let norms = recipe.normalizers(&tr, pretrained.as_ref())?;
    apply_normalizers(&norms, &mut tr)?;
    apply_normalizers(&norms, &mut va)?;
    let outcome = train_recipe(&recipe, &tr, &va, &cfg, norms, pretrained.as_ref())?;
    outcome.model.save(&a.out)?;
    let split_path = a.out.with_extension("split.json");
    write_split(&split, &split_path)?;
    let h = outcome.histories.last().expect("at least one stage");
    Ok(format!(
        "{}: {} epochs, best epoch {}, val loss {:.5}; saved {}",
        a.model,
        h.epochs(),
        h.best_epoch,
        h.best_val_loss(),
        a.out.display()
    ))
}

pub fn eval(manifest: &Path, model: &Path, condition: Condition, split_seed: u64, report: &Path) -> Result<String> {
    let m = Manifest::load(manifest)?;
    let split = split_for(&m, split_seed)?;
    let trained = TrainedModel::load(model)?;
    let recs = m.select(&split.test, condition);
    let utts = model_features(&trained, &recs, &m.root, thread_count())?;
    let name = model.file_stem().unwrap_or_default().to_string_lossy().into_owned();
    let r = evaluate(&trained, &name, condition, &utts)?;
    emit_report(&r, report)?;
    let a = &r.macro_avg;
    Ok(format!(
        "{name} {condition}: acc {:.4} pre {:.4} rec {:.4} f1 {:.4} over {} speakers",
        a.accuracy,
        a.precision,
        a.recall,
        a.f1,
        r.speakers.len()
    ))
}

pub fn compare(a: &Path, b: &Path) -> Result<String> {
    let c = compare_reports(&read_report(a)?, &read_report(b)?)?;
    Ok(canonical_json(&c.to_json()))
}

/// Lines of the gradient suite and whether all passed.
pub fn gradcheck() -> Result<(String, bool)> {
    let rows = checks::gradient_suite(7)?;
    let mut s = String::new();
    let mut ok = true;
    for (name, err) in rows {
        ok &= err < checks::GRAD_TOL;
        s.push_str(&format!("{name:<24} max relative error {err:.3e}\n"));
    }
    Ok((s, ok))
}

pub fn repro(seed: u64, out: &Path, verify: bool, models: Vec<String>) -> Result<String> {
    let mut cfg = ReproConfig::new(seed);
    cfg.models = models;
    let (o, verdicts) = checks::acceptance(&cfg, out, thread_count(), verify)?;
    let mut s = results_table(&o);
    s.push('\n');
    for v in &verdicts {
        s.push_str(&v.line());
        s.push('\n');
    }
    let passed = verdicts.iter().filter(|v| v.pass).count();
    s.push_str(&format!("{passed}/{} criteria passed\n", verdicts.len()));
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.avft");
        let values: Vec<f64> = (0..15).map(|i| i as f64 * 0.25 - 1.0).collect();
        write_feature_file(&p, 5, &values).unwrap();
        assert_eq!(read_feature_file(&p).unwrap(), (5, values));
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.truncate(50);
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(read_feature_file(&p), Err(Error::Format { offset: 20, .. })));
    }
}
