//! The ten acceptance criteria. Each check returns a [`Verdict`] whose
//! detail line says what was measured.

use crate::repro::{ReproConfig, ReproOutcome};
use avsad::corpus::Condition;
use avsad::eval::{f1_score, paired_one_tailed_ttest};
use avsad::features::{hold_index, FeatureContract, FeatureKind, RoiTrack, UtteranceFeatures};
use avsad::nn::{grad_check, grad_check_graph, LayerSpec};
use avsad::train::ModelRecipe;
use avsad::video::{interpolate_landmarks, LandmarkTrack, N_LANDMARKS};
use avsad::zoo::{build_brnn, build_unimodal, predict, BrnnConfig, BuildOptions, ModelKind, ModelMeta, TrainedModel};
use avsad::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

pub const GRAD_TOL: f64 = 1e-4;
pub const GRAD_EPS: f64 = 1e-5;
pub const F_TOL: f64 = 0.05;
pub const TTEST_TOL: f64 = 1e-6;
pub const F1_FLOOR: f64 = 0.90;
pub const ALPHA: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub id: usize,
    pub name: &'static str,
    pub pass: bool,
    /// Not evaluated in this run.
    pub skipped: bool,
    pub detail: String,
    pub secs: f64,
}

impl Verdict {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2}. {:<28} {} ({:.1}s)",
            if self.skipped {
                "SKIP"
            } else if self.pass {
                "PASS"
            } else {
                "FAIL"
            },
            self.id,
            self.name,
            self.detail,
            self.secs
        )
    }
}

fn timed(id: usize, name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Verdict {
    let t0 = Instant::now();
    let (pass, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    Verdict {
        id,
        name,
        pass,
        skipped: false,
        detail,
        secs: t0.elapsed().as_secs_f64(),
    }
}

/// Random features matching `contract`, with a 32x32 ROI track held at
/// 30 fps when the contract has a frame stream.
pub fn random_features(contract: &FeatureContract, steps: usize, seed: u64) -> UtteranceFeatures {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sequences = BTreeMap::new();
    let mut rois = None;
    for k in contract.features() {
        if k == FeatureKind::Roi {
            let frames = (steps * 3).div_ceil(10) + 2;
            let pixels = (0..frames * 1024).map(|_| rng.random_range(-1.0..1.0)).collect();
            rois = Some(RoiTrack {
                pixels,
                index: hold_index(steps, frames, (30, 1)),
            });
        } else {
            let data = (0..steps * k.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            sequences.insert(k, avsad::audio::FeatureSequence::new("probe", k.dim(), data));
        }
    }
    UtteranceFeatures {
        utt_id: "probe".into(),
        speaker_id: "probe".into(),
        steps,
        labels: (0..steps).map(|t| u8::from(t % 7 < 3)).collect(),
        sequences,
        rois,
    }
}

// ---------------------------------------------------------------- 1

pub fn gradient_suite(seed: u64) -> Result<Vec<(String, f64)>> {
    let conv = LayerSpec::Conv2d {
        in_channels: 2,
        out_channels: 3,
        in_height: 11,
        in_width: 11,
        kernel: 5,
        stride: 2,
    };
    let mut out = vec![
        ("maxout-fc".to_string(), grad_check(&LayerSpec::maxout(7, 4), 3, GRAD_EPS, seed)?),
        ("conv2d+relu".to_string(), grad_check(&conv, 2, GRAD_EPS, seed + 1)?),
        ("lstm".to_string(), grad_check(&LayerSpec::lstm(4, 5), 2, GRAD_EPS, seed + 2)?),
        ("softmax+ce".to_string(), grad_check(&LayerSpec::softmax(6), 3, GRAD_EPS, seed + 3)?),
    ];
    let cfg = BrnnConfig::with_scale(0.125);
    let mut g = build_brnn(&cfg)?;
    g.set_dropout(0.0);
    let u = random_features(&cfg.contract(), 4, seed + 4);
    let batch = avsad::features::assemble_utterance(&cfg.contract(), &u)?;
    let r = grad_check_graph(&mut g, &batch.input, &batch.labels, 4, GRAD_EPS, seed + 5)?;
    if r.probes == 0 {
        return Err(Error::Numeric("every full-model probe hit a kink".into()));
    }
    out.push((format!("brnn@0.125 ({} probes)", r.probes), r.max_relative_error));
    Ok(out)
}

pub fn check_gradients() -> Verdict {
    timed(1, "gradient suite", || {
        let rows = gradient_suite(7)?;
        let worst = rows.iter().map(|r| r.1).fold(0.0, f64::max);
        let detail = rows.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect::<Vec<_>>().join(", ");
        Ok((worst < GRAD_TOL, format!("max rel err < {GRAD_TOL:.0e}: {detail}")))
    })
}

// ---------------------------------------------------------------- 2

/// Input and output widths of every non-dropout layer, per subnet.
pub fn layer_dims(g: &avsad::ModelGraph) -> BTreeMap<String, Vec<(usize, usize)>> {
    g.spec()
        .subnets
        .iter()
        .map(|s| {
            let dims = s
                .layers
                .iter()
                .filter_map(|l| Some((l.input_dim()?, l.output_dim()?)))
                .collect();
            (s.name.clone(), dims)
        })
        .collect()
}

pub fn topology_audit() -> Result<Vec<(String, bool)>> {
    use avsad::zoo::{build_ariav, build_ryant_dnn, build_tao2017, AriavStage};
    let o = BuildOptions::default();
    let brnn = layer_dims(&build_brnn(&BrnnConfig::default())?);
    let ryant = layer_dims(&build_ryant_dnn(&o)?);
    let tao = layer_dims(&build_tao2017(&o)?);
    let ae = build_ariav(AriavStage::Autoencoder, None, &o)?;
    let ariav = layer_dims(&ae);
    let first = |m: &BTreeMap<String, Vec<(usize, usize)>>, s: &str| m.get(s).and_then(|v| v.first()).map(|d| d.0);
    let last = |m: &BTreeMap<String, Vec<(usize, usize)>>, s: &str| m.get(s).and_then(|v| v.last()).map(|d| d.1);
    let ryant_hidden: Vec<usize> = ryant["dnn"].iter().map(|d| d.1).collect();
    let conv_out = brnn["v-rnn"].get(2).map(|d| d.1);
    Ok(vec![
        ("audio input 286".into(), first(&brnn, "a-rnn") == Some(286)),
        ("a-rnn widths 512".into(), brnn["a-rnn"].iter().all(|d| d.1 == 512)),
        ("v-rnn cnn output 64".into(), conv_out == Some(64)),
        ("v-rnn output 64".into(), last(&brnn, "v-rnn") == Some(64)),
        ("fusion input 576".into(), first(&brnn, "av-rnn") == Some(576)),
        ("fusion softmax 2".into(), last(&brnn, "av-rnn") == Some(2)),
        ("ryant input 143".into(), first(&ryant, "dnn") == Some(143)),
        ("ryant 4x256 maxout".into(), ryant_hidden == vec![256, 256, 256, 256, 2]),
        ("ariav bottleneck 64".into(), last(&ariav, "encoder") == Some(64)),
        ("ariav reconstructs 146".into(), first(&ariav, "encoder") == Some(146) && last(&ariav, "decoder") == Some(146)),
        ("tao audio input 55".into(), first(&tao, "audio-rnn") == Some(55)),
        ("tao video input 26".into(), first(&tao, "video-rnn") == Some(26)),
        ("tao fusion input 320".into(), first(&tao, "fusion") == Some(320)),
    ])
}

pub fn check_topology() -> Verdict {
    timed(2, "topology audit", || {
        let rows = topology_audit()?;
        let bad: Vec<&str> = rows.iter().filter(|r| !r.1).map(|r| r.0.as_str()).collect();
        Ok(if bad.is_empty() {
            (true, format!("{} width checks at scale 1", rows.len()))
        } else {
            (false, format!("mismatched: {}", bad.join(", ")))
        })
    })
}

// ---------------------------------------------------------------- 3

/// (table, row label, Pre, Rec, F) as printed, in percent.
pub const TABLE_ROWS: [(&str, &str, f64, f64, f64); 16] = [
    ("I", "ideal clean ryant", 96.6, 90.5, 93.4),
    ("I", "ideal clean tao2017", 94.6, 84.8, 89.5),
    ("I", "ideal clean ariav", 95.4, 91.7, 93.5),
    ("I", "ideal clean brnn", 95.8, 92.3, 94.0),
    ("I", "ideal noisy ryant", 96.4, 93.8, 95.0),
    ("I", "ideal noisy tao2017", 93.1, 94.0, 93.4),
    ("I", "ideal noisy ariav", 95.4, 94.1, 94.7),
    ("I", "ideal noisy brnn", 96.2, 95.2, 95.7),
    ("II", "practical clean ryant", 94.3, 91.6, 92.9),
    ("II", "practical clean tao2017", 91.9, 87.3, 89.4),
    ("II", "practical clean ariav", 95.2, 90.8, 92.9),
    ("II", "practical clean brnn", 95.4, 92.0, 93.7),
    ("II", "practical noisy ryant", 90.6, 92.5, 91.5),
    ("II", "practical noisy tao2017", 77.5, 96.7, 86.0),
    ("II", "practical noisy ariav", 92.9, 90.6, 91.7),
    ("II", "practical noisy brnn", 92.9, 92.6, 92.7),
];

pub fn check_table_rows() -> Verdict {
    timed(3, "metric formula vs tables", || {
        let misses: Vec<String> = TABLE_ROWS
            .iter()
            .filter_map(|&(t, row, p, r, f)| {
                let got = f1_score(p, r);
                ((got - f).abs() > F_TOL).then(|| format!("{t}/{row}: {got:.2} vs {f}"))
            })
            .collect();
        let ok = TABLE_ROWS.len() - misses.len();
        let mut detail = format!("{ok}/{} rows within +-{F_TOL}", TABLE_ROWS.len());
        if !misses.is_empty() {
            detail.push_str(&format!("; off: {}", misses.join("; ")));
        }
        Ok((misses.is_empty(), detail))
    })
}

// ---------------------------------------------------------------- 4

/// Gamma at `k / 2` for positive integer `k`, by the half-step recursion.
fn gamma_half(k: usize) -> f64 {
    let (mut g, mut x) = if k % 2 == 0 { (1.0, 1.0) } else { (std::f64::consts::PI.sqrt(), 0.5) };
    while x < k as f64 / 2.0 - 1e-9 {
        g *= x;
        x += 1.0;
    }
    g
}

fn t_density(x: f64, df: usize) -> f64 {
    let v = df as f64;
    gamma_half(df + 1) / ((v * std::f64::consts::PI).sqrt() * gamma_half(df)) * (1.0 + x * x / v).powf(-(v + 1.0) / 2.0)
}

/// Upper tail of Student's t by composite Simpson integration of the
/// density over `[0, |t|]`.
pub fn t_upper_by_integration(t: f64, df: usize) -> f64 {
    let n = 200_000;
    let h = t.abs() / n as f64;
    let mut acc = t_density(0.0, df) + t_density(t.abs(), df);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * t_density(i as f64 * h, df);
    }
    let half = acc * h / 3.0;
    if t >= 0.0 {
        0.5 - half
    } else {
        0.5 + half
    }
}

pub fn ttest_cases() -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut cases = vec![(vec![1.0, 2.0, 3.0], vec![0.0; 3])];
    for n in [3, 5, 10] {
        for shift in [0.3, 0.05, -0.2] {
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.6..0.95)).collect();
            let a = b.iter().map(|v| v + shift + rng.random_range(-0.3..0.3)).collect();
            cases.push((a, b));
        }
    }
    cases
}

pub fn check_ttest() -> Verdict {
    timed(4, "t-test oracle", || {
        let mut worst = 0.0f64;
        let mut p123 = f64::NAN;
        for (i, (a, b)) in ttest_cases().iter().enumerate() {
            let r = paired_one_tailed_ttest(a, b)?;
            let oracle = t_upper_by_integration(r.t, r.df);
            worst = worst.max((r.p - oracle).abs());
            if i == 0 {
                p123 = r.p;
            }
        }
        let ok = worst < TTEST_TOL && (p123 - 0.0371).abs() < 5e-5;
        Ok((ok, format!("max |p - oracle| {worst:.1e} over n in {{3,5,10}}; d=(1,2,3) p={p123:.4}")))
    })
}

// ---------------------------------------------------------------- 5-7

pub fn check_training(o: &ReproOutcome) -> Verdict {
    timed(5, "end-to-end training", || {
        let f = o.f1("brnn-e2e", Condition::IDEAL_CLEAN).ok_or_else(|| Error::Input("brnn-e2e not run".into()))?;
        let (tr, te, va) = (o.split.train.len(), o.split.test.len(), o.split.validation.len());
        Ok((
            f >= F1_FLOOR && (tr, te, va) == (18, 6, 2),
            format!("split {tr}/{te}/{va}; brnn ideal-clean macro F1 {f:.4} (>= {F1_FLOOR})"),
        ))
    })
}

fn need(o: &ReproOutcome, m: &str, c: Condition) -> Result<f64> {
    o.f1(m, c).ok_or_else(|| Error::Input(format!("{m} not run")))
}

pub fn check_unimodal(o: &ReproOutcome) -> Verdict {
    timed(6, "bimodal vs unimodal", || {
        let c = o
            .comparison("brnn-e2e", "audio-only", Condition::PRACTICAL_NOISY)
            .ok_or_else(|| Error::Input("brnn-e2e vs audio-only not compared".into()))?;
        let (b, a) = (need(o, "brnn-e2e", Condition::PRACTICAL_NOISY)?, need(o, "audio-only", Condition::PRACTICAL_NOISY)?);
        let (ac, vc) = (need(o, "audio-only", Condition::IDEAL_CLEAN)?, need(o, "video-only", Condition::IDEAL_CLEAN)?);
        let ok = b > a && c.p < ALPHA && ac > vc;
        Ok((
            ok,
            format!("practical-noisy brnn {b:.4} vs audio {a:.4} (p={:.4}); ideal-clean audio {ac:.4} vs video {vc:.4}", c.p),
        ))
    })
}

pub fn check_frontends(o: &ReproOutcome) -> Verdict {
    timed(7, "acoustic front-ends", || {
        let c = Condition::PRACTICAL_NOISY;
        let (m, s, h) = (need(o, "brnn-e2e", c)?, need(o, "brnn-spectrogram", c)?, need(o, "brnn-sadjadi", c)?);
        Ok((
            m > s && s > h && m > h,
            format!("practical-noisy mel {m:.4} > spectrogram {s:.4} > sadjadi {h:.4}"),
        ))
    })
}

// ---------------------------------------------------------------- 8

/// Largest step `t` such that some output at or before `t` changed when
/// every input after `t` was perturbed, if any.
pub fn causality_violation(model: &TrainedModel, steps: usize, seed: u64) -> Result<Option<usize>> {
    let base = random_features(&model.meta.contract, steps, seed);
    let p0 = predict(model, &base)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xCA5A);
    // A late cut can leave a video-only model with no unseen frame to touch,
    // so only require that some cut reaches the future outputs.
    let mut reached = false;
    for t in [0, steps / 3, steps / 2, steps - 2] {
        let mut u = base.clone();
        for seq in u.sequences.values_mut() {
            for v in &mut seq.values[(t + 1) * seq.dim..] {
                *v += rng.random_range(-2.0..2.0);
            }
        }
        if let Some(r) = u.rois.as_mut() {
            // Only frames first shown after step t.
            let first_future = r.index[t] + 1;
            for v in &mut r.pixels[first_future * 1024..] {
                *v += rng.random_range(-2.0..2.0);
            }
        }
        let p = predict(model, &u)?;
        let same = p0.probs[..=t].iter().zip(&p.probs[..=t]).all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            return Ok(Some(t));
        }
        reached |= p0.probs[t + 1..] != p.probs[t + 1..];
    }
    if !reached {
        return Err(Error::Numeric("perturbing future inputs never changed an output".into()));
    }
    Ok(None)
}

/// One untrained instance of every recurrent model at desk scale.
pub fn recurrent_models(width_scale: f64, seed: u64) -> Result<Vec<(String, TrainedModel)>> {
    let mut out = Vec::new();
    let mut brnn = None;
    for kind in [ModelKind::BrnnE2e, ModelKind::Tao2017Brnn, ModelKind::AriavAeRnn] {
        let recipe = ModelRecipe::new(kind, width_scale, seed);
        let contract = recipe.contract(None)?;
        let graph = match kind {
            ModelKind::BrnnE2e => build_brnn(&BrnnConfig::with_scale(width_scale))?,
            ModelKind::Tao2017Brnn => avsad::zoo::build_tao2017(&recipe.options)?,
            _ => {
                use avsad::zoo::{build_ariav, AriavStage};
                let ae = build_ariav(AriavStage::Autoencoder, None, &recipe.options)?;
                build_ariav(AriavStage::Classifier, Some(&ae), &recipe.options)?
            }
        };
        let meta = ModelMeta {
            kind,
            contract,
            normalizers: Vec::new(),
            width_scale,
        };
        let m = TrainedModel::new(graph, meta)?;
        if kind == ModelKind::BrnnE2e {
            brnn = Some(m.clone());
        }
        out.push((kind.to_string(), m));
    }
    let o = BuildOptions {
        width_scale,
        seed,
        ..BuildOptions::default()
    };
    for kind in [ModelKind::AudioOnly, ModelKind::VideoOnly] {
        out.push((kind.to_string(), build_unimodal(kind, brnn.as_ref(), &o)?));
    }
    Ok(out)
}

pub fn check_causality(trained: &[(String, TrainedModel)]) -> Verdict {
    timed(8, "causality", || {
        let mut models = recurrent_models(0.125, 3)?;
        models.extend(trained.iter().filter(|(_, m)| m.meta.kind.is_recurrent()).cloned());
        let mut bad = Vec::new();
        for (i, (name, m)) in models.iter().enumerate() {
            if let Some(t) = causality_violation(m, 60, 100 + i as u64)? {
                bad.push(format!("{name} at step {t}"));
            }
        }
        Ok(if bad.is_empty() {
            (true, format!("{} recurrent models: past outputs bitwise unchanged", models.len()))
        } else {
            (false, format!("future leaks into {}", bad.join(", ")))
        })
    })
}

// ---------------------------------------------------------------- 9

/// Every file under `dir`, relative path to bytes.
pub fn tree_bytes(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>> {
    let mut out = BTreeMap::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::Input(format!("walking {}: {e}", dir.display())))?;
        if entry.file_type().is_file() {
            let p = entry.path();
            let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
            let rel = p.strip_prefix(dir).unwrap_or(p).to_string_lossy().into_owned();
            out.insert(rel, bytes);
        }
    }
    Ok(out)
}

/// Compares the models, reports and summary of two output directories.
pub fn compare_outputs(a: &Path, b: &Path) -> Result<(usize, Vec<String>)> {
    let mut files = 0;
    let mut diffs = Vec::new();
    for sub in ["models", "reports"] {
        let (ta, tb) = (tree_bytes(&a.join(sub))?, tree_bytes(&b.join(sub))?);
        for (k, v) in &ta {
            files += 1;
            if tb.get(k) != Some(v) {
                diffs.push(format!("{sub}/{k}"));
            }
        }
        diffs.extend(tb.keys().filter(|k| !ta.contains_key(*k)).map(|k| format!("{sub}/{k}")));
    }
    files += 1;
    let read = |p: &Path| std::fs::read(p).map_err(|e| Error::io(p, e));
    if read(&a.join("summary.json"))? != read(&b.join("summary.json"))? {
        diffs.push("summary.json".into());
    }
    Ok((files, diffs))
}

pub fn check_determinism(a: &Path, b: &Path) -> Verdict {
    timed(9, "determinism", || {
        let (files, diffs) = compare_outputs(a, b)?;
        Ok(if diffs.is_empty() && files > 1 {
            (true, format!("{files} model/report files byte-identical across two runs"))
        } else {
            (false, format!("{} of {files} files differ: {}", diffs.len(), diffs.join(", ")))
        })
    })
}

// ---------------------------------------------------------------- 10

fn track_with_missing(frames: usize, missing: usize) -> LandmarkTrack {
    let mut points = Vec::with_capacity(frames * N_LANDMARKS);
    for t in 0..frames {
        for j in 0..N_LANDMARKS {
            points.push([t as f64 + j as f64, 2.0 * t as f64 - j as f64]);
        }
    }
    // Spread the gaps so every one is interior.
    let mut flags = vec![false; frames];
    for i in 0..missing {
        flags[1 + i * (frames - 2) / missing.max(1)] = true;
    }
    LandmarkTrack::new(points, flags, (30, 1)).expect("consistent track")
}

pub fn check_landmark_rule() -> Verdict {
    timed(10, "landmark rejection rule", || {
        let at_limit = track_with_missing(100, 10);
        let rejected = matches!(interpolate_landmarks(&at_limit), Err(Error::Rejected { missing: 10, total: 100 }));
        let below = track_with_missing(1000, 99);
        let filled = interpolate_landmarks(&below)?;
        // Coordinates are linear in t, so interpolation must restore them.
        let exact = (0..1000).all(|t| {
            filled.frame(t).iter().enumerate().all(|(j, p)| {
                (p[0] - (t as f64 + j as f64)).abs() < 1e-9 && (p[1] - (2.0 * t as f64 - j as f64)).abs() < 1e-9
            })
        });
        Ok((
            rejected && exact && filled.missing_count() == 0,
            format!("10/100 missing rejected: {rejected}; 99/1000 missing accepted and interpolated: {exact}"),
        ))
    })
}

// ---------------------------------------------------------------- all

/// Criteria that need no training.
pub fn static_checks() -> Vec<Verdict> {
    vec![check_gradients(), check_topology(), check_table_rows(), check_ttest()]
}

/// Runs the protocol in `out` (twice when `verify` is set, the second
/// time in `out/rerun`) and evaluates all ten criteria.
pub fn acceptance(cfg: &ReproConfig, out: &Path, threads: usize, verify: bool) -> Result<(ReproOutcome, Vec<Verdict>)> {
    let mut v = static_checks();
    let o = crate::repro::run_repro(cfg, out, threads)?;
    v.push(check_training(&o));
    v.push(check_unimodal(&o));
    v.push(check_frontends(&o));
    let trained = crate::repro::load_models(&o.out_dir)?;
    v.push(check_causality(&trained));
    if verify {
        let again = out.join("rerun");
        crate::repro::run_repro(cfg, &again, threads)?;
        v.push(check_determinism(out, &again));
    } else {
        v.push(Verdict {
            id: 9,
            name: "determinism",
            pass: false,
            skipped: true,
            detail: "needs a second run; pass --verify".into(),
            secs: 0.0,
        });
    }
    v.push(check_landmark_rule());
    Ok((o, v))
}
