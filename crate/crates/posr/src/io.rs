//! On-disk formats for transcripts, worksheets, annotations, span
//! predictions and corpus manifests.
//!
//! * Transcript: JSON lines `{index, speaker, utterance, start_ms, end_ms}`.
//! * Worksheet: one JSON document `{id, problems: [{id, text}]}`.
//! * Annotation: JSON lines `{line_index, segment_id, ref}` with `ref` a
//!   problem id, `"-1"` or `"null"`.
//! * Spans: one JSON array `[{start_line, end_line, ref}]`.
//! * Manifest: `{split, transcripts, worksheets, annotations?, agreement?}`
//!   with paths relative to the manifest file.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use posr_core::model::{
    Labeling, Line, LineLabel, ModelError, Problem, RefLabel, SegmentSpan, Session, Transcript, Worksheet,
};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Invalid {
        path: PathBuf,
        #[source]
        source: ModelError,
    },
    #[error("{path}: {message}")]
    Annotation { path: PathBuf, message: String },
    #[error("manifest: {0}")]
    Manifest(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Accepts JSON strings and numbers as identifiers.
fn id_string<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Id {
        S(String),
        I(i64),
        F(f64),
    }
    Ok(match Id::deserialize(d)? {
        Id::S(s) => s,
        Id::I(i) => i.to_string(),
        Id::F(f) => f.to_string(),
    })
}

/// `null`, `"null"`, `-1`, `"-1"` or a problem id.
fn ref_label<'de, D: Deserializer<'de>>(d: D) -> Result<RefLabel, D::Error> {
    let v = serde_json::Value::deserialize(d)?;
    Ok(match v {
        serde_json::Value::Null => RefLabel::Null,
        serde_json::Value::String(s) => RefLabel::parse(&s),
        serde_json::Value::Number(n) => RefLabel::parse(&n.to_string()),
        other => return Err(serde::de::Error::custom(format!("invalid ref {other}"))),
    })
}

fn ref_string<S: serde::Serializer>(r: &RefLabel, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineRecord {
    pub index: usize,
    pub speaker: String,
    pub utterance: String,
    pub start_ms: i64,
    pub end_ms: i64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemRecord {
    #[serde(deserialize_with = "id_string")]
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorksheetRecord {
    #[serde(deserialize_with = "id_string")]
    pub id: String,
    pub problems: Vec<ProblemRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub line_index: usize,
    pub segment_id: i64,
    #[serde(rename = "ref", deserialize_with = "ref_label", serialize_with = "ref_string")]
    pub reference: RefLabel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpanRecord {
    pub start_line: usize,
    pub end_line: usize,
    #[serde(
        rename = "ref",
        default,
        deserialize_with = "ref_label",
        serialize_with = "ref_string"
    )]
    pub reference: RefLabel,
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, IoError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| IoError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), IoError> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).expect("records serialize");
        buf.push(b'\n');
    }
    write_bytes(path, &buf)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(bytes).map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("value serializes");
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| IoError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Transcript id from a file path: the file name up to its first dot.
pub fn transcript_id(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.split('.').next().unwrap_or_default().to_string()
}

pub fn load_transcript(path: &Path) -> Result<Transcript, IoError> {
    let records: Vec<LineRecord> = read_jsonl(path)?;
    let lines = records
        .into_iter()
        .map(|r| Line::new(r.index, r.speaker, r.utterance, r.start_ms, r.end_ms))
        .collect();
    Transcript::new(transcript_id(path), lines).map_err(|source| IoError::Invalid {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_transcript(path: &Path, transcript: &Transcript) -> Result<(), IoError> {
    let records: Vec<LineRecord> = transcript
        .lines()
        .iter()
        .map(|l| LineRecord {
            index: l.index,
            speaker: l.speaker.clone(),
            utterance: l.utterance.clone(),
            start_ms: l.start_ms,
            end_ms: l.end_ms,
        })
        .collect();
    write_jsonl(path, &records)
}

pub fn load_worksheet(path: &Path) -> Result<Worksheet, IoError> {
    let rec: WorksheetRecord = read_json(path)?;
    Worksheet::new(
        rec.id,
        rec.problems.into_iter().map(|p| Problem::new(p.id, p.text)).collect(),
    )
    .map_err(|source| IoError::Invalid {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_worksheet(path: &Path, worksheet: &Worksheet) -> Result<(), IoError> {
    write_json(
        path,
        &WorksheetRecord {
            id: worksheet.id().to_string(),
            problems: worksheet
                .problems()
                .iter()
                .map(|p| ProblemRecord {
                    id: p.id.clone(),
                    text: p.text.clone(),
                })
                .collect(),
        },
    )
}

/// Reads per-line annotations; the records must cover lines `0..n`
/// exactly once (in any order) when `n_lines` is given.
pub fn load_annotations(path: &Path, n_lines: Option<usize>) -> Result<Labeling, IoError> {
    let mut records: Vec<AnnotationRecord> = read_jsonl(path)?;
    records.sort_by_key(|r| r.line_index);
    let bad = |message: String| IoError::Annotation {
        path: path.to_path_buf(),
        message,
    };
    for (i, r) in records.iter().enumerate() {
        if r.line_index != i {
            return Err(bad(format!("expected line_index {i}, found {}", r.line_index)));
        }
    }
    if let Some(n) = n_lines {
        if records.len() != n {
            return Err(bad(format!(
                "{} annotated lines for a {n}-line transcript",
                records.len()
            )));
        }
    }
    Labeling::new(
        records
            .into_iter()
            .map(|r| LineLabel {
                segment: r.segment_id,
                reference: r.reference,
            })
            .collect(),
    )
    .map_err(|source| IoError::Invalid {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_annotations(path: &Path, labeling: &Labeling) -> Result<(), IoError> {
    let records: Vec<AnnotationRecord> = labeling
        .per_line()
        .iter()
        .enumerate()
        .map(|(i, l)| AnnotationRecord {
            line_index: i,
            segment_id: l.segment,
            reference: l.reference.clone(),
        })
        .collect();
    write_jsonl(path, &records)
}

pub fn load_spans(path: &Path) -> Result<Vec<SegmentSpan>, IoError> {
    let recs: Vec<SpanRecord> = read_json(path)?;
    Ok(recs
        .into_iter()
        .map(|r| SegmentSpan::new(r.start_line, r.end_line, r.reference))
        .collect())
}

pub fn save_spans(path: &Path, spans: &[SegmentSpan]) -> Result<(), IoError> {
    let recs: Vec<SpanRecord> = spans
        .iter()
        .map(|s| SpanRecord {
            start_line: s.start_line,
            end_line: s.end_line,
            reference: s.reference.clone(),
        })
        .collect();
    write_json(path, &recs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    #[default]
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CorpusManifest {
    #[serde(default)]
    pub split: Split,
    pub transcripts: Vec<PathBuf>,
    /// transcript id -> worksheet path
    pub worksheets: BTreeMap<String, PathBuf>,
    /// transcript id -> annotation path
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<BTreeMap<String, PathBuf>>,
    /// transcript id -> extra annotators' files, for agreement statistics
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub agreement: BTreeMap<String, Vec<PathBuf>>,
}

impl CorpusManifest {
    pub fn load(path: &Path) -> Result<Self, IoError> {
        let m: Self = read_json(path)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        write_json(path, self)
    }

    pub fn transcript_ids(&self) -> Vec<String> {
        self.transcripts.iter().map(|p| transcript_id(p)).collect()
    }

    pub fn validate(&self) -> Result<(), IoError> {
        let ids: std::collections::BTreeSet<String> = self.transcript_ids().into_iter().collect();
        if ids.len() != self.transcripts.len() {
            return Err(IoError::Manifest("duplicate transcript ids".into()));
        }
        let maps = self
            .annotations
            .iter()
            .flat_map(|a| a.keys())
            .chain(self.agreement.keys());
        for id in maps {
            if !ids.contains(id) {
                return Err(IoError::Manifest(format!("annotation for unknown transcript {id}")));
            }
        }
        Ok(())
    }
}

/// A loaded manifest.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub manifest: CorpusManifest,
    pub sessions: Vec<Session>,
    /// transcript id -> labelings of additional annotators
    pub extra_annotations: BTreeMap<String, Vec<Labeling>>,
}

impl Corpus {
    pub fn is_annotated(&self) -> bool {
        !self.sessions.is_empty() && self.sessions.iter().all(|s| s.gold.is_some())
    }

    pub fn gold_pairs(&self) -> impl Iterator<Item = (&Transcript, &Labeling)> {
        self.sessions
            .iter()
            .filter_map(|s| s.gold.as_ref().map(|g| (&s.transcript, g)))
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Loads every file named by the manifest, in parallel across transcripts.
pub fn load_corpus(manifest_path: &Path) -> Result<Corpus, IoError> {
    let manifest = CorpusManifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let sessions = manifest
        .transcripts
        .par_iter()
        .map(|tp| {
            let transcript = load_transcript(&resolve(base, tp))?;
            let id = transcript.id().to_string();
            let ws_path = manifest
                .worksheets
                .get(&id)
                .ok_or_else(|| IoError::Manifest(format!("no worksheet for transcript {id}")))?;
            let worksheet = load_worksheet(&resolve(base, ws_path))?;
            let gold = match manifest.annotations.as_ref().and_then(|a| a.get(&id)) {
                Some(ap) => Some(load_annotations(&resolve(base, ap), Some(transcript.len()))?),
                None => None,
            };
            Ok(Session::new(transcript, worksheet, gold))
        })
        .collect::<Result<Vec<_>, IoError>>()?;
    let mut extra_annotations = BTreeMap::new();
    for (id, paths) in &manifest.agreement {
        let n = sessions
            .iter()
            .find(|s| s.transcript.id() == id)
            .map(|s| s.transcript.len());
        let labelings = paths
            .iter()
            .map(|p| load_annotations(&resolve(base, p), n))
            .collect::<Result<Vec<_>, _>>()?;
        extra_annotations.insert(id.clone(), labelings);
    }
    Ok(Corpus {
        manifest,
        sessions,
        extra_annotations,
    })
}

/// Writes sessions under `dir` and returns a manifest with relative paths.
/// Worksheets are written once per worksheet id.
pub fn write_corpus(dir: &Path, sessions: &[Session], split: Split) -> Result<CorpusManifest, IoError> {
    let mut manifest = CorpusManifest {
        split,
        ..Default::default()
    };
    let mut annotations = BTreeMap::new();
    for s in sessions {
        let id = s.transcript.id();
        let tp = PathBuf::from("transcripts").join(format!("{id}.jsonl"));
        save_transcript(&dir.join(&tp), &s.transcript)?;
        manifest.transcripts.push(tp);
        let wp = PathBuf::from("worksheets").join(format!("{}.json", s.worksheet.id()));
        if !dir.join(&wp).exists() {
            save_worksheet(&dir.join(&wp), &s.worksheet)?;
        }
        manifest.worksheets.insert(id.to_string(), wp);
        if let Some(gold) = &s.gold {
            let ap = PathBuf::from("annotations").join(format!("{id}.jsonl"));
            save_annotations(&dir.join(&ap), gold)?;
            annotations.insert(id.to_string(), ap);
        }
    }
    if !annotations.is_empty() {
        manifest.annotations = Some(annotations);
    }
    Ok(manifest)
}

/// One line of a bundled session record. Timestamps may be given in
/// milliseconds or, as `start`/`end`, in seconds.
#[derive(Debug, Clone, Deserialize)]
pub struct BundledLine {
    #[serde(alias = "text")]
    pub utterance: String,
    pub speaker: String,
    pub start_ms: Option<i64>,
    pub end_ms: Option<i64>,
    pub start: Option<f64>,
    pub end: Option<f64>,
    pub segment_id: Option<i64>,
    #[serde(default, rename = "ref", alias = "problem_id", deserialize_with = "ref_label")]
    pub reference: RefLabel,
}

/// A whole session in one record: `{transcript_id, worksheet, lines}`.
#[derive(Debug, Clone, Deserialize)]
pub struct BundledSession {
    #[serde(deserialize_with = "id_string")]
    pub transcript_id: String,
    pub worksheet: WorksheetRecord,
    pub lines: Vec<BundledLine>,
}

fn bundled_time(ms: Option<i64>, secs: Option<f64>) -> Option<i64> {
    ms.or_else(|| secs.map(|s| (s * 1000.0).round() as i64))
}

/// Reads a JSON-lines file of [`BundledSession`] records, the starting
/// point for converting third-party dumps into the canonical layout with
/// [`write_corpus`]. A session is annotated when every line carries a
/// `segment_id`.
pub fn import_bundled(path: &Path) -> Result<Vec<Session>, IoError> {
    let records: Vec<BundledSession> = read_jsonl(path)?;
    let invalid = |source| IoError::Invalid {
        path: path.to_path_buf(),
        source,
    };
    records
        .into_iter()
        .map(|r| {
            let mut lines = Vec::with_capacity(r.lines.len());
            for (i, l) in r.lines.iter().enumerate() {
                let (Some(start), Some(end)) = (bundled_time(l.start_ms, l.start), bundled_time(l.end_ms, l.end))
                else {
                    return Err(IoError::Annotation {
                        path: path.to_path_buf(),
                        message: format!("{} line {i}: missing timestamps", r.transcript_id),
                    });
                };
                lines.push(Line::new(i, l.speaker.clone(), l.utterance.clone(), start, end));
            }
            let transcript = Transcript::new(r.transcript_id.clone(), lines).map_err(invalid)?;
            let worksheet = Worksheet::new(
                r.worksheet.id,
                r.worksheet
                    .problems
                    .into_iter()
                    .map(|p| Problem::new(p.id, p.text))
                    .collect(),
            )
            .map_err(invalid)?;
            let gold = if r.lines.iter().all(|l| l.segment_id.is_some()) && !r.lines.is_empty() {
                let labels = r
                    .lines
                    .iter()
                    .map(|l| LineLabel {
                        segment: l.segment_id.expect("checked above"),
                        reference: l.reference.clone(),
                    })
                    .collect();
                Some(Labeling::new(labels).map_err(invalid)?)
            } else {
                None
            };
            Ok(Session::new(transcript, worksheet, gold))
        })
        .collect()
}
