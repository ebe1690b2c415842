//! Append-only JSONL results log.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::data::Split;
use crate::error::{Error, Result};
use crate::protocol::RunKind;

/// Epoch of a measurement, or the end-of-training value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EpochTag {
    At(u32),
    Final,
}

impl Serialize for EpochTag {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            EpochTag::At(e) => s.serialize_u32(*e),
            EpochTag::Final => s.serialize_str("final"),
        }
    }
}

impl<'de> Deserialize<'de> for EpochTag {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match Value::deserialize(d)? {
            Value::String(s) if s == "final" => Ok(EpochTag::Final),
            Value::Number(n) => n
                .as_u64()
                .and_then(|e| u32::try_from(e).ok())
                .map(EpochTag::At)
                .ok_or_else(|| serde::de::Error::custom(format!("epoch {n} is not a u32"))),
            other => Err(serde::de::Error::custom(format!(
                "epoch must be an integer or \"final\", got {other}"
            ))),
        }
    }
}

/// One measurement row. Accuracy is in percent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRecord {
    pub run_id: String,
    pub protocol: RunKind,
    pub pretrain_lr: f64,
    pub subnet_lr: f64,
    pub sparsity: f64,
    pub seed: u64,
    pub replicate: u32,
    pub epoch: EpochTag,
    pub split: Split,
    pub accuracy: f64,
    pub loss: f64,
    pub config_hash: String,
}

#[derive(Clone, Copy)]
enum FieldType {
    Str,
    Num,
    UInt,
    Epoch,
}

const FIELDS: [(&str, FieldType); 12] = [
    ("run_id", FieldType::Str),
    ("protocol", FieldType::Str),
    ("pretrain_lr", FieldType::Num),
    ("subnet_lr", FieldType::Num),
    ("sparsity", FieldType::Num),
    ("seed", FieldType::UInt),
    ("replicate", FieldType::UInt),
    ("epoch", FieldType::Epoch),
    ("split", FieldType::Str),
    ("accuracy", FieldType::Num),
    ("loss", FieldType::Num),
    ("config_hash", FieldType::Str),
];

impl ResultRecord {
    /// Validates value ranges beyond what the JSON types enforce.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::Schema(format!("field `{field}`: {why}")));
        if self.run_id.is_empty() {
            return bad("run_id", "empty".into());
        }
        for (field, lr) in [
            ("pretrain_lr", self.pretrain_lr),
            ("subnet_lr", self.subnet_lr),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(field, format!("must be positive, got {lr}"));
            }
        }
        if !(0.0..1.0).contains(&self.sparsity) {
            return bad(
                "sparsity",
                format!("must lie in [0, 1), got {}", self.sparsity),
            );
        }
        if !(0.0..=100.0).contains(&self.accuracy) {
            return bad(
                "accuracy",
                format!("must lie in [0, 100], got {}", self.accuracy),
            );
        }
        if self.loss.is_nan() {
            return bad("loss", "NaN".into());
        }
        Ok(())
    }

    /// Parses and validates one log line; errors name the offending field.
    pub fn from_value(v: Value) -> Result<Self> {
        let Value::Object(map) = &v else {
            return Err(Error::Schema("record is not a JSON object".into()));
        };
        for key in map.keys() {
            if !FIELDS.iter().any(|(f, _)| f == key) {
                return Err(Error::Schema(format!("unknown field `{key}`")));
            }
        }
        for (field, ty) in FIELDS {
            let Some(x) = map.get(field) else {
                return Err(Error::Schema(format!("missing field `{field}`")));
            };
            let ok = match ty {
                FieldType::Str => x.is_string(),
                FieldType::Num => x.is_number(),
                FieldType::UInt => x.is_u64(),
                FieldType::Epoch => x.is_u64() || x.as_str() == Some("final"),
            };
            if !ok {
                return Err(Error::Schema(format!(
                    "field `{field}` has wrong type: {x}"
                )));
            }
        }
        let rec: ResultRecord =
            serde_json::from_value(v).map_err(|e| Error::Schema(e.to_string()))?;
        rec.validate()?;
        Ok(rec)
    }

    pub fn is_final_test(&self) -> bool {
        self.epoch == EpochTag::Final && self.split == Split::Test
    }

    fn key(&self) -> (String, u32, EpochTag, Split) {
        (self.run_id.clone(), self.replicate, self.epoch, self.split)
    }
}

/// Any line of the log: a measurement or an adjudication verdict.
#[derive(Clone, Debug, PartialEq)]
pub enum LogLine {
    Result(ResultRecord),
    Verdict(Value),
}

/// Parses a whole log. Schema errors carry the 1-based line number.
pub fn parse_log(text: &str) -> Result<Vec<LogLine>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = |e: Error| match e {
            Error::Schema(m) => Error::Schema(format!("line {}: {m}", i + 1)),
            other => other,
        };
        let v: Value = serde_json::from_str(line)
            .map_err(|e| Error::Schema(format!("line {}: invalid JSON: {e}", i + 1)))?;
        if let Some(verdict) = v.get("verdict") {
            out.push(LogLine::Verdict(verdict.clone()));
        } else {
            out.push(LogLine::Result(ResultRecord::from_value(v).map_err(at)?));
        }
    }
    Ok(out)
}

/// Reads only the measurement rows of a log file.
pub fn read_results(path: &Path) -> Result<Vec<ResultRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_log(&text)?
        .into_iter()
        .filter_map(|l| match l {
            LogLine::Result(r) => Some(r),
            LogLine::Verdict(_) => None,
        })
        .collect())
}

struct LogState {
    file: File,
    seen: HashSet<(String, u32, EpochTag, Split)>,
    owners: HashMap<String, String>,
}

/// Results log open for appending. Appends from several threads are serialized,
/// so each line is written whole.
pub struct ResultsLog {
    path: PathBuf,
    state: Mutex<LogState>,
}

impl ResultsLog {
    /// Opens or creates the log, loading existing rows for duplicate detection.
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut seen = HashSet::new();
        let mut owners = HashMap::new();
        if path.exists() {
            for r in read_results(path)? {
                owners.insert(r.run_id.clone(), r.config_hash.clone());
                seen.insert(r.key());
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(ResultsLog {
            path: path.to_path_buf(),
            state: Mutex::new(LogState { file, seen, owners }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends rows atomically as a group; rejects duplicates and run ids reused
    /// across configurations.
    pub fn append(&self, records: &[ResultRecord]) -> Result<()> {
        let mut st = self.state.lock().expect("results log lock");
        let mut buf = String::new();
        let mut keys = HashSet::new();
        for r in records {
            r.validate()?;
            if let Some(h) = st.owners.get(&r.run_id) {
                if *h != r.config_hash {
                    return Err(Error::Schema(format!(
                        "run_id {} already belongs to config {h}",
                        r.run_id
                    )));
                }
            }
            if st.seen.contains(&r.key()) || !keys.insert(r.key()) {
                return Err(Error::Schema(format!(
                    "duplicate record for run {} replicate {} epoch {:?} split {:?}",
                    r.run_id, r.replicate, r.epoch, r.split
                )));
            }
            buf.push_str(&serde_json::to_string(r).expect("record serializes"));
            buf.push('\n');
        }
        st.file
            .write_all(buf.as_bytes())
            .and_then(|_| st.file.flush())
            .map_err(|e| Error::io(&self.path, e))?;
        for r in records {
            st.owners.insert(r.run_id.clone(), r.config_hash.clone());
            st.seen.insert(r.key());
        }
        Ok(())
    }

    /// Appends a verdict line, wrapped as `{"verdict": ...}`.
    pub fn append_verdict<V: Serialize>(&self, verdict: &V) -> Result<()> {
        let mut st = self.state.lock().expect("results log lock");
        let line = serde_json::json!({ "verdict": verdict }).to_string() + "\n";
        st.file
            .write_all(line.as_bytes())
            .and_then(|_| st.file.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn row(run: &str, acc: f64) -> ResultRecord {
        ResultRecord {
            run_id: run.into(),
            protocol: RunKind::Pretrain,
            pretrain_lr: 0.1,
            subnet_lr: 0.1,
            sparsity: 0.0,
            seed: 1,
            replicate: 0,
            epoch: EpochTag::Final,
            split: Split::Test,
            accuracy: acc,
            loss: 0.3,
            config_hash: "c".into(),
        }
    }

    #[test]
    fn missing_field_is_named() {
        let mut v = serde_json::to_value(row("a", 90.0)).unwrap();
        v.as_object_mut().unwrap().remove("accuracy");
        let err = ResultRecord::from_value(v).unwrap_err().to_string();
        assert!(err.contains("`accuracy`"), "{err}");
    }

    #[test]
    fn wrong_type_is_named() {
        let mut v = serde_json::to_value(row("a", 90.0)).unwrap();
        v["seed"] = Value::String("x".into());
        let err = ResultRecord::from_value(v).unwrap_err().to_string();
        assert!(err.contains("`seed`"), "{err}");
    }

    #[test]
    fn epoch_tags_serialize() {
        let mut r = row("a", 1.0);
        r.epoch = EpochTag::At(3);
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["epoch"], 3);
        assert_eq!(
            serde_json::to_value(row("a", 1.0)).unwrap()["epoch"],
            "final"
        );
    }

    #[test]
    fn duplicates_rejected_and_reload_detects_them() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.jsonl");
        let log = ResultsLog::open(&p).unwrap();
        log.append(&[row("a", 90.0)]).unwrap();
        assert!(log.append(&[row("a", 91.0)]).is_err());
        let mut other = row("a", 90.0);
        other.config_hash = "d".into();
        other.split = Split::Train;
        assert!(log.append(&[other]).is_err());
        drop(log);
        let log = ResultsLog::open(&p).unwrap();
        assert!(log.append(&[row("a", 90.0)]).is_err());
        log.append_verdict(&serde_json::json!({"class": "none"}))
            .unwrap();
        assert_eq!(read_results(&p).unwrap().len(), 1);
    }

    #[test]
    fn concurrent_appends_keep_lines_whole() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.jsonl");
        let log = ResultsLog::open(&p).unwrap();
        std::thread::scope(|s| {
            for t in 0..8 {
                let log = &log;
                s.spawn(move || {
                    for i in 0..50 {
                        log.append(&[row(&format!("t{t}-{i}"), 50.0)]).unwrap();
                    }
                });
            }
        });
        assert_eq!(read_results(&p).unwrap().len(), 400);
    }
}
