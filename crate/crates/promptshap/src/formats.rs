//! File formats: prediction matrices, validation sets, manifests, embeddings,
//! value documents, trained models and curves.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use promptshap_core::ensemble::{Mode, PredictionMatrix, ValidationSet};
use promptshap_core::learn::{EmbeddingMatrix, TrainedRegressor};
use promptshap_core::select::CurvePoint;
use promptshap_core::{Method, ShapleyResult};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MODEL_SCHEMA: &str = "promptshap.model/1";

fn open(path: &Path) -> Result<BufReader<fs::File>> {
    fs::File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

/// Writes via a sibling temp file and rename so readers never see a torn file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable document");
    s.push('\n');
    s
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::input(path, e.line(), e.to_string()))
}

/// Parses a JSON Lines file, skipping blank lines.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::input(path, i + 1, e.to_string()))?);
    }
    Ok(out)
}

pub fn jsonl_string<'a, T: Serialize + 'a>(items: impl IntoIterator<Item = &'a T>) -> String {
    let mut s = String::new();
    for item in items {
        s.push_str(&serde_json::to_string(item).expect("serializable record"));
        s.push('\n');
    }
    s
}

// ---------------------------------------------------------------- matrix

/// Reads `prompt_id,<instance ids...>` with integer or JSON-array cells.
pub fn read_matrix(path: &Path, num_labels: usize) -> Result<PredictionMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(open(path)?);
    let header = rdr.headers().map_err(|e| Error::input(path, 1, e.to_string()))?.clone();
    if header.get(0) != Some("prompt_id") {
        return Err(Error::input(path, 1, "header must start with prompt_id"));
    }
    let instance_ids: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let mut prompt_ids = Vec::new();
    let mut hard: Vec<Vec<usize>> = Vec::new();
    let mut prob: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut mode = None;
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::input(path, line, e.to_string()))?;
        let mut cells = record.iter();
        prompt_ids.push(cells.next().unwrap_or_default().to_owned());
        let (mut h, mut p) = (Vec::new(), Vec::new());
        for cell in cells {
            let cell = cell.trim();
            let this = if cell.starts_with('[') { Mode::Probabilistic } else { Mode::HardLabel };
            if *mode.get_or_insert(this) != this {
                return Err(Error::input(path, line, "matrix mixes hard labels and probability rows"));
            }
            match this {
                Mode::HardLabel => h.push(
                    cell.parse::<usize>().map_err(|_| Error::input(path, line, format!("bad label cell {cell:?}")))?,
                ),
                Mode::Probabilistic => p.push(
                    serde_json::from_str::<Vec<f64>>(cell)
                        .map_err(|e| Error::input(path, line, format!("bad probability cell: {e}")))?,
                ),
            }
        }
        hard.push(h);
        prob.push(p);
    }
    let built = match mode {
        Some(Mode::Probabilistic) => PredictionMatrix::probabilistic(prompt_ids, instance_ids, num_labels, prob),
        _ => PredictionMatrix::hard(prompt_ids, instance_ids, num_labels, hard),
    };
    built.map_err(|e| Error::input(path, 0, e.to_string()))
}

pub fn matrix_csv(m: &PredictionMatrix) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["prompt_id".to_owned()];
    header.extend(m.instance_ids().iter().cloned());
    w.write_record(&header).expect("in-memory write");
    for (p, id) in m.prompt_ids().iter().enumerate() {
        let mut row = vec![id.clone()];
        for j in 0..m.instance_ids().len() {
            row.push(match m.probabilities(p, j) {
                Some(probs) => serde_json::to_string(probs).expect("finite probabilities"),
                None => m.label(p, j).to_string(),
            });
        }
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

// ---------------------------------------------------------------- validation

/// Reads `#num_labels=K` followed by `instance_id,gold_label` rows.
pub fn read_validation(path: &Path) -> Result<ValidationSet> {
    let mut num_labels = None;
    let mut rows = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(k) = rest.trim().strip_prefix("num_labels=") {
                let k = k.trim().parse().map_err(|_| Error::input(path, i + 1, format!("bad label count {k:?}")))?;
                num_labels = Some(k);
            }
            continue;
        }
        let (id, gold) = line.split_once(',').ok_or_else(|| Error::input(path, i + 1, "expected instance_id,gold_label"))?;
        if id == "instance_id" && rows.is_empty() {
            continue;
        }
        let gold = gold.trim().parse().map_err(|_| Error::input(path, i + 1, format!("bad gold label {gold:?}")))?;
        rows.push((id.trim().to_owned(), gold));
    }
    let k = num_labels.ok_or_else(|| Error::input(path, 1, "missing #num_labels=K line"))?;
    ValidationSet::new(rows, k).map_err(|e| Error::input(path, 0, e.to_string()))
}

pub fn validation_csv(v: &ValidationSet) -> String {
    let mut s = format!("#num_labels={}\ninstance_id,gold_label\n", v.num_labels());
    for (id, gold) in v.instances() {
        s.push_str(&format!("{id},{gold}\n"));
    }
    s
}

// ---------------------------------------------------------------- manifest

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptEntry {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub rationale: bool,
}

/// Prompts in manifest order; the order defines player indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptManifest {
    prompts: Vec<PromptEntry>,
}

impl PromptManifest {
    pub fn new(prompts: Vec<PromptEntry>) -> std::result::Result<Self, String> {
        let mut seen = HashSet::new();
        for p in &prompts {
            if !seen.insert(p.id.as_str()) {
                return Err(format!("duplicate prompt id {:?}", p.id));
            }
            if p.text.trim().is_empty() {
                return Err(format!("prompt {:?} has empty text", p.id));
            }
        }
        Ok(Self { prompts })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(read_jsonl(path)?).map_err(|m| Error::input(path, 0, m))
    }

    pub fn prompts(&self) -> &[PromptEntry] {
        &self.prompts
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.prompts.iter().map(|p| p.id.clone()).collect()
    }

    pub fn texts(&self) -> Vec<String> {
        self.prompts.iter().map(|p| p.text.clone()).collect()
    }
}

/// One question of a live validation set, with its gold answer in normalized form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiveInstance {
    pub id: String,
    pub question: String,
    pub answer: String,
}

pub fn read_questions(path: &Path) -> Result<Vec<LiveInstance>> {
    let items: Vec<LiveInstance> = read_jsonl(path)?;
    let mut seen = HashSet::new();
    for q in &items {
        if !seen.insert(q.id.as_str()) {
            return Err(Error::input(path, 0, format!("duplicate question id {:?}", q.id)));
        }
    }
    if items.is_empty() {
        return Err(Error::input(path, 0, "no questions"));
    }
    Ok(items)
}

// ---------------------------------------------------------------- embeddings

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    pub vector: Vec<f64>,
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    let recs: Vec<EmbeddingRecord> = read_jsonl(path)?;
    let (ids, rows) = recs.into_iter().map(|r| (r.id, r.vector)).unzip();
    let m = EmbeddingMatrix::new(ids, rows).map_err(|e| Error::input(path, 0, e.to_string()))?;
    if !m.has_unique_ids() {
        return Err(Error::input(path, 0, "duplicate embedding ids"));
    }
    Ok(m)
}

pub fn embeddings_jsonl(m: &EmbeddingMatrix) -> String {
    let recs: Vec<EmbeddingRecord> =
        m.ids().iter().enumerate().map(|(i, id)| EmbeddingRecord { id: id.clone(), vector: m.row(i).to_vec() }).collect();
    jsonl_string(&recs)
}

// ---------------------------------------------------------------- values

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerValue {
    pub id: String,
    pub value: f64,
    pub stderr: f64,
}

/// Serialized [`ShapleyResult`] keyed by prompt id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuesDoc {
    pub method: Method,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub samples: usize,
    pub u_full: f64,
    pub u_empty: f64,
    pub players: Vec<PlayerValue>,
}

impl ValuesDoc {
    pub fn new(result: &ShapleyResult, ids: &[String]) -> Self {
        let players = ids
            .iter()
            .zip(result.values.iter().zip(&result.stderr))
            .map(|(id, (&value, &stderr))| PlayerValue { id: id.clone(), value, stderr })
            .collect();
        Self {
            method: result.method,
            n: result.players(),
            seed: result.seed,
            samples: result.samples,
            u_full: result.u_full,
            u_empty: result.u_empty,
            players,
        }
    }

    pub fn ids(&self) -> Vec<String> {
        self.players.iter().map(|p| p.id.clone()).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.players.iter().map(|p| p.value).collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let doc: Self = read_json(path)?;
        if doc.players.len() != doc.n {
            return Err(Error::input(path, 0, format!("n = {} but {} players listed", doc.n, doc.players.len())));
        }
        Ok(doc)
    }

    /// Values reordered to match `ids`; every id must be present.
    pub fn values_for(&self, ids: &[String]) -> std::result::Result<Vec<f64>, String> {
        ids.iter()
            .map(|id| {
                self.players.iter().find(|p| &p.id == id).map(|p| p.value).ok_or_else(|| format!("no value for prompt {id:?}"))
            })
            .collect()
    }
}

// ---------------------------------------------------------------- model

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub schema: String,
    pub trained_on: Vec<String>,
    pub regressor: TrainedRegressor,
}

impl ModelDoc {
    pub fn new(regressor: TrainedRegressor, trained_on: Vec<String>) -> Self {
        Self { schema: MODEL_SCHEMA.to_owned(), trained_on, regressor }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let doc: Self = read_json(path)?;
        if doc.schema != MODEL_SCHEMA {
            return Err(Error::input(path, 0, format!("unsupported model schema {:?}", doc.schema)));
        }
        Ok(doc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub predicted_value: f64,
}

// ---------------------------------------------------------------- curve

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["k", "added_prompt_id", "utility"]).expect("in-memory write");
    for p in points {
        w.write_record([p.k.to_string(), p.added_prompt_id.clone(), format_float(p.utility)]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// Shortest round-trip rendering, matching the JSON documents.
pub fn format_float(x: f64) -> String {
    serde_json::to_string(&x).unwrap_or_else(|_| x.to_string())
}

pub fn write_string(path: &Path, s: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_atomic(path, s.as_bytes())
}

pub fn append_line(file: &mut fs::File, line: &str) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(line.len() + 1);
    buf.extend_from_slice(line.as_bytes());
    buf.push(b'\n');
    file.write_all(&buf)?;
    file.flush()
}
