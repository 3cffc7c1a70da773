//! Single-document JSON model files.
//!
//! ```text
//! {"format_version":1, "type":"ngram"|"bigram"|"mag", "name":..., "order":...,
//!  "tokenizer":"byte"|"word"|"opaque", "vocab":[pieces...], "cost_weight":...,
//!  "smoothing":{...}|null, "span":..., "match_corpus":...,
//!  "tables":{"<space-separated context ids>": [[token, prob], ...]}}
//! ```
//!
//! Probabilities are written with 17 significant digits so a reload
//! reproduces every bit.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use super::{BigramTable, MagModel, MatchPolicy, NGramModel, Smoothing, SparseRow};
use crate::error::{Error, Result};
use crate::model::LanguageModel;
use crate::vocab::{TokenId, TokenSeq, TokenizerKind, Vocab};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ModelType {
    Ngram,
    Bigram,
    Mag,
}

#[derive(Serialize)]
struct FileOut<'a> {
    format_version: u32,
    #[serde(rename = "type")]
    kind: ModelType,
    name: &'a str,
    order: usize,
    tokenizer: TokenizerKind,
    vocab: &'a [String],
    cost_weight: f64,
    smoothing: Option<&'a Smoothing>,
    #[serde(skip_serializing_if = "Option::is_none")]
    span: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    match_corpus: Option<MatchPolicy>,
    tables: BTreeMap<String, Vec<(u32, Box<RawValue>)>>,
}

#[derive(Deserialize)]
struct FileIn {
    format_version: u32,
    #[serde(rename = "type")]
    kind: ModelType,
    name: String,
    order: usize,
    #[serde(default)]
    tokenizer: TokenizerKind,
    vocab: Vec<String>,
    cost_weight: Option<f64>,
    smoothing: Option<Smoothing>,
    span: Option<usize>,
    match_corpus: Option<MatchPolicy>,
    tables: BTreeMap<String, Vec<(u32, f64)>>,
}

/// Any model this crate can persist.
#[derive(Debug, Clone)]
pub enum StatModel {
    NGram(NGramModel),
    Bigram(BigramTable),
    Mag(MagModel),
}

fn prob_literal(p: f64) -> Box<RawValue> {
    RawValue::from_string(format!("{p:.16e}")).expect("formatted float is valid JSON")
}

fn context_key(ctx: &[TokenId]) -> String {
    ctx.iter().map(|t| t.0.to_string()).collect::<Vec<_>>().join(" ")
}

fn parse_key(key: &str) -> Result<TokenSeq> {
    key.split_whitespace()
        .map(|s| {
            s.parse::<u32>()
                .map(TokenId)
                .map_err(|_| Error::Format(format!("bad context key {key:?}")))
        })
        .collect()
}

fn write_row(row: &SparseRow) -> Vec<(u32, Box<RawValue>)> {
    row.iter().map(|&(t, p)| (t.0, prob_literal(p))).collect()
}

fn bigram_tables(t: &BigramTable) -> BTreeMap<String, Vec<(u32, Box<RawValue>)>> {
    t.rows
        .iter()
        .map(|(prev, row)| (context_key(&[*prev]), write_row(row)))
        .collect()
}

fn read_row(key: &str, raw: Vec<(u32, f64)>, vocab: &Vocab) -> Result<SparseRow> {
    let mut row: SparseRow = Vec::with_capacity(raw.len());
    for (t, p) in raw {
        let t = TokenId(t);
        if !vocab.contains(t) || !(p.is_finite() && p >= 0.0) {
            return Err(Error::Format(format!("bad entry ({t}, {p}) in row {key:?}")));
        }
        row.push((t, p));
    }
    row.sort_by_key(|e| e.0);
    let total: f64 = row.iter().map(|e| e.1).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Format(format!("row {key:?} sums to {total}")));
    }
    Ok(row)
}

impl StatModel {
    pub fn name(&self) -> &str {
        match self {
            StatModel::NGram(m) => &m.name,
            StatModel::Bigram(m) => &m.name,
            StatModel::Mag(m) => &m.name,
        }
    }

    pub fn into_model(self) -> Arc<dyn LanguageModel> {
        match self {
            StatModel::NGram(m) => Arc::new(m),
            StatModel::Bigram(m) => Arc::new(m),
            StatModel::Mag(m) => Arc::new(m),
        }
    }

    pub fn to_json(&self) -> String {
        let out = match self {
            StatModel::NGram(m) => {
                let mut tables = BTreeMap::new();
                for table in &m.tables {
                    for (ctx, row) in table {
                        tables.insert(context_key(ctx), write_row(row));
                    }
                }
                FileOut {
                    format_version: FORMAT_VERSION,
                    kind: ModelType::Ngram,
                    name: &m.name,
                    order: m.order,
                    tokenizer: m.vocab.kind(),
                    vocab: m.vocab.pieces(),
                    cost_weight: m.cost_weight,
                    smoothing: Some(&m.smoothing),
                    span: None,
                    match_corpus: None,
                    tables,
                }
            }
            StatModel::Bigram(t) => FileOut {
                format_version: FORMAT_VERSION,
                kind: ModelType::Bigram,
                name: &t.name,
                order: 2,
                tokenizer: t.vocab.kind(),
                vocab: t.vocab.pieces(),
                cost_weight: t.cost_weight(),
                smoothing: None,
                span: None,
                match_corpus: None,
                tables: bigram_tables(t),
            },
            StatModel::Mag(m) => FileOut {
                format_version: FORMAT_VERSION,
                kind: ModelType::Mag,
                name: &m.name,
                order: 2,
                tokenizer: m.fallback.vocab.kind(),
                vocab: m.fallback.vocab.pieces(),
                cost_weight: 0.0,
                smoothing: None,
                span: Some(m.span),
                match_corpus: Some(m.policy),
                tables: bigram_tables(&m.fallback),
            },
        };
        serde_json::to_string(&out).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: FileIn =
            serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format_version {}",
                file.format_version
            )));
        }
        let vocab = Vocab::from_pieces(file.tokenizer, file.vocab)?;
        match file.kind {
            ModelType::Ngram => {
                let smoothing = file
                    .smoothing
                    .ok_or_else(|| Error::Format("n-gram model without smoothing".into()))?;
                if file.order == 0 || smoothing.orders.len() != file.order {
                    return Err(Error::Format("smoothing weights do not match order".into()));
                }
                let mut tables: Vec<HashMap<TokenSeq, SparseRow>> = vec![HashMap::new(); file.order];
                for (key, raw) in file.tables {
                    let ctx = parse_key(&key)?;
                    if ctx.len() >= file.order {
                        return Err(Error::Format(format!("context {key:?} too long for order {}", file.order)));
                    }
                    let row = read_row(&key, raw, &vocab)?;
                    tables[ctx.len()].insert(ctx, row);
                }
                let entries: usize = tables.iter().flat_map(|t| t.values()).map(Vec::len).sum();
                Ok(StatModel::NGram(NGramModel {
                    name: file.name,
                    order: file.order,
                    vocab,
                    tables,
                    smoothing,
                    cost_weight: file.cost_weight.unwrap_or(entries as f64),
                }))
            }
            ModelType::Bigram | ModelType::Mag => {
                let mut rows = BTreeMap::new();
                for (key, raw) in file.tables {
                    let ctx = parse_key(&key)?;
                    if ctx.len() != 1 {
                        return Err(Error::Format(format!("bigram context {key:?} must be one token")));
                    }
                    rows.insert(ctx[0], read_row(&key, raw, &vocab)?);
                }
                let table = BigramTable {
                    name: "bigram".into(),
                    vocab,
                    rows,
                };
                if file.kind == ModelType::Bigram {
                    return Ok(StatModel::Bigram(table.with_name(file.name)));
                }
                let mag = MagModel::new(Arc::new(table))
                    .with_name(file.name)
                    .with_span(file.span.unwrap_or(super::DEFAULT_SPAN))?
                    .with_policy(file.match_corpus.unwrap_or_default());
                Ok(StatModel::Mag(mag))
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        StatModel::from_json(&text)
    }
}

impl From<NGramModel> for StatModel {
    fn from(m: NGramModel) -> Self {
        StatModel::NGram(m)
    }
}

impl From<BigramTable> for StatModel {
    fn from(m: BigramTable) -> Self {
        StatModel::Bigram(m)
    }
}

impl From<MagModel> for StatModel {
    fn from(m: MagModel) -> Self {
        StatModel::Mag(m)
    }
}
