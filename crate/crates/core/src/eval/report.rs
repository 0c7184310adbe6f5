use super::{paired_one_tailed_ttest, per_speaker_average, FrameMetrics, MacroMetrics};
use crate::corpus::Condition;
use crate::error::{Error, Result};
use serde_json::{json, Value};
use std::path::Path;

pub const ALPHA: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct SpeakerScore {
    pub id: String,
    pub metrics: FrameMetrics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub model: String,
    pub condition: Condition,
    pub speakers: Vec<SpeakerScore>,
    pub macro_avg: MacroMetrics,
}

impl EvalReport {
    /// Sorts speakers by id and computes the macro average.
    pub fn new(model: impl Into<String>, condition: Condition, mut speakers: Vec<SpeakerScore>) -> Result<Self> {
        speakers.sort_by(|a, b| a.id.cmp(&b.id));
        let per: Vec<FrameMetrics> = speakers.iter().map(|s| s.metrics).collect();
        let macro_avg = per_speaker_average(&per)?;
        Ok(EvalReport {
            model: model.into(),
            condition,
            speakers,
            macro_avg,
        })
    }

    pub fn f1_by_speaker(&self) -> Vec<(String, f64)> {
        self.speakers.iter().map(|s| (s.id.clone(), s.metrics.f1)).collect()
    }

    pub fn to_json(&self) -> Value {
        let speakers: Vec<Value> = self
            .speakers
            .iter()
            .map(|s| {
                let m = &s.metrics;
                json!({
                    "id": s.id,
                    "acc": m.accuracy,
                    "pre": m.precision,
                    "rec": m.recall,
                    "f1": m.f1,
                    "counts": {"tp": m.tp, "fp": m.fp, "tn": m.tn, "fn": m.fn_},
                })
            })
            .collect();
        let m = &self.macro_avg;
        json!({
            "model": self.model,
            "condition": self.condition,
            "speakers": speakers,
            "macro": {"acc": m.accuracy, "pre": m.precision, "rec": m.recall, "f1": m.f1},
        })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let bad = |what: &str| Error::Input(format!("report lacks {what}"));
        let num = |v: &Value, k: &str| v[k].as_f64().ok_or_else(|| bad(k));
        let count = |v: &Value, k: &str| v["counts"][k].as_u64().ok_or_else(|| bad(k));
        let condition: Condition =
            serde_json::from_value(v["condition"].clone()).map_err(|e| Error::Input(format!("bad condition: {e}")))?;
        let mut speakers = Vec::new();
        for s in v["speakers"].as_array().ok_or_else(|| bad("speakers"))? {
            speakers.push(SpeakerScore {
                id: s["id"].as_str().ok_or_else(|| bad("id"))?.to_string(),
                metrics: FrameMetrics {
                    accuracy: num(s, "acc")?,
                    precision: num(s, "pre")?,
                    recall: num(s, "rec")?,
                    f1: num(s, "f1")?,
                    tp: count(s, "tp")?,
                    fp: count(s, "fp")?,
                    tn: count(s, "tn")?,
                    fn_: count(s, "fn")?,
                },
            });
        }
        let m = &v["macro"];
        Ok(EvalReport {
            model: v["model"].as_str().ok_or_else(|| bad("model"))?.to_string(),
            condition,
            speakers,
            macro_avg: MacroMetrics {
                accuracy: num(m, "acc")?,
                precision: num(m, "pre")?,
                recall: num(m, "rec")?,
                f1: num(m, "f1")?,
            },
        })
    }
}

/// Per-speaker paired comparison of two reports on F1.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonResult {
    pub a: String,
    pub b: String,
    pub mean_diff: f64,
    pub t: f64,
    pub p: f64,
    pub significant: bool,
}

impl ComparisonResult {
    pub fn to_json(&self) -> Value {
        let t = if self.t.is_finite() {
            json!(self.t)
        } else {
            json!(if self.t > 0.0 { "inf" } else { "-inf" })
        };
        json!({
            "a": self.a,
            "b": self.b,
            "mean_diff": self.mean_diff,
            "t": t,
            "p": self.p,
            "significant": self.significant,
        })
    }
}

/// Tests whether report `a` has higher per-speaker F1 than report `b`.
pub fn compare_reports(a: &EvalReport, b: &EvalReport) -> Result<ComparisonResult> {
    let fa = a.f1_by_speaker();
    let fb = b.f1_by_speaker();
    let ids_a: Vec<&String> = fa.iter().map(|(i, _)| i).collect();
    let ids_b: Vec<&String> = fb.iter().map(|(i, _)| i).collect();
    if ids_a != ids_b {
        return Err(Error::Input("reports cover different speakers".into()));
    }
    let xa: Vec<f64> = fa.iter().map(|(_, f)| *f).collect();
    let xb: Vec<f64> = fb.iter().map(|(_, f)| *f).collect();
    let r = paired_one_tailed_ttest(&xa, &xb)?;
    Ok(ComparisonResult {
        a: a.model.clone(),
        b: b.model.clone(),
        mean_diff: r.mean_diff,
        t: r.t,
        p: r.p,
        significant: r.p < ALPHA,
    })
}

/// Pretty JSON with sorted keys and every float printed with 6 decimals.
pub fn canonical_json(v: &Value) -> String {
    let mut out = String::new();
    write_value(v, 0, &mut out);
    out.push('\n');
    out
}

fn write_value(v: &Value, depth: usize, out: &mut String) {
    let pad = |d: usize| "  ".repeat(d);
    match v {
        Value::Null | Value::Bool(_) | Value::String(_) => out.push_str(&v.to_string()),
        Value::Number(n) => {
            if n.is_f64() {
                let x = n.as_f64().unwrap();
                let s = format!("{x:.6}");
                out.push_str(if s == "-0.000000" { "0.000000" } else { &s });
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                out.push_str(&pad(depth + 1));
                write_value(item, depth + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(depth));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                out.push_str(&pad(depth + 1));
                out.push_str(&Value::String((*k).clone()).to_string());
                out.push_str(": ");
                write_value(&map[*k], depth + 1, out);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(depth));
            out.push('}');
        }
    }
}

pub fn emit_report(report: &EvalReport, path: &Path) -> Result<()> {
    if report.speakers.is_empty() {
        return Err(Error::Input("report has no speakers".into()));
    }
    write_json(&report.to_json(), path)
}

pub fn write_json(v: &Value, path: &Path) -> Result<()> {
    std::fs::write(path, canonical_json(v)).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: &Path) -> Result<EvalReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Error::format(path, e.column() as u64, e.to_string()))?;
    EvalReport::from_json(&v)
}
