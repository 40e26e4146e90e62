use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::persist;

/// Per-sample scores for one pruning method. Higher scores are kept first
/// under direction `top`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    scores: Vec<f64>,
    method_tag: String,
    seed: u64,
    config: BTreeMap<String, String>,
}

impl ScoreTable {
    pub fn new(scores: Vec<f64>, method_tag: impl Into<String>, seed: u64) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::invalid("score table must be non-empty"));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::numeric(format!("non-finite score for sample {i}")));
        }
        Ok(Self {
            scores,
            method_tag: method_tag.into(),
            seed,
            config: BTreeMap::new(),
        })
    }

    /// Attach a metadata entry (pretraining recipe, probe time, ...).
    pub fn with_config(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.config.insert(key.into(), value.to_string());
        self
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn method_tag(&self) -> &str {
        &self.method_tag
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn config(&self) -> &BTreeMap<String, String> {
        &self.config
    }

    /// Same table with every score multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let mut out = Self::new(
            self.scores.iter().map(|s| s * factor).collect(),
            self.method_tag.clone(),
            self.seed,
        )?;
        out.config = self.config.clone();
        Ok(out)
    }

    /// Ids sorted by `(score desc, id asc)`.
    pub fn ranking(&self, ids: impl IntoIterator<Item = usize>) -> Vec<usize> {
        let mut ids: Vec<usize> = ids.into_iter().collect();
        ids.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        ids
    }
}

/// Save as CSV: `#`-prefixed metadata lines, then `id,score` rows.
pub fn save_scores(table: &ScoreTable, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!(
        "# method_tag={}\n# seed={}\n",
        table.method_tag, table.seed
    ));
    for (k, v) in &table.config {
        out.push_str(&format!("# config.{k}={v}\n"));
    }
    out.push_str("id,score\n");
    for (i, s) in table.scores.iter().enumerate() {
        out.push_str(&format!("{i},{s}\n"));
    }
    persist::write_atomic(path.as_ref(), out.as_bytes())
}

pub fn load_scores(path: impl AsRef<Path>) -> Result<ScoreTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut tag = None;
    let mut seed = 0;
    let mut config = BTreeMap::new();
    let mut scores = Vec::new();
    let mut header_seen = false;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx as u64 + 1;
        let parse_err = |message: String| Error::Parse {
            line: lineno,
            message,
        };
        if let Some(meta) = line.strip_prefix('#') {
            let (k, v) = meta
                .trim()
                .split_once('=')
                .ok_or_else(|| parse_err("metadata line needs key=value".into()))?;
            match k {
                "method_tag" => tag = Some(v.to_string()),
                "seed" => {
                    seed = v
                        .parse()
                        .map_err(|_| parse_err(format!("bad seed {v:?}")))?
                }
                other => {
                    if let Some(key) = other.strip_prefix("config.") {
                        config.insert(key.to_string(), v.to_string());
                    }
                }
            }
            continue;
        }
        if !header_seen {
            if line.trim() != "id,score" {
                return Err(parse_err(format!(
                    "expected header id,score, found {line:?}"
                )));
            }
            header_seen = true;
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (id, score) = line
            .split_once(',')
            .ok_or_else(|| parse_err("expected id,score".into()))?;
        let id: usize = id
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("bad id {id:?}")))?;
        if id != scores.len() {
            return Err(parse_err(format!("ids must be 0..n in order, found {id}")));
        }
        let score: f64 = score
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("bad score {score:?}")))?;
        scores.push(score);
    }
    let tag = tag.ok_or_else(|| Error::Parse {
        line: 1,
        message: "missing method_tag metadata".into(),
    })?;
    let mut table = ScoreTable::new(scores, tag, seed)?;
    table.config = config;
    Ok(table)
}
