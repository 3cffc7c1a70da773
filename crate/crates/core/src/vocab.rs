use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index into a model family's vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<u32> for TokenId {
    fn from(v: u32) -> Self {
        TokenId(v)
    }
}

impl From<usize> for TokenId {
    fn from(v: usize) -> Self {
        TokenId(v as u32)
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

pub type TokenSeq = Vec<TokenId>;

/// Convenience for tests and examples: `tokens(&[1, 2, 3])`.
pub fn tokens(ids: &[u32]) -> TokenSeq {
    ids.iter().map(|&i| TokenId(i)).collect()
}

pub const BOS_PIECE: &str = "<s>";
pub const EOS_PIECE: &str = "</s>";
pub const UNK_PIECE: &str = "<unk>";

/// How text maps onto pieces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerKind {
    /// One token per UTF-8 byte.
    #[default]
    Byte,
    /// Whitespace-separated words.
    Word,
    /// Pieces carry no text (remote or synthetic models).
    Opaque,
}

/// Bidirectional piece table. Ids 0, 1, 2 are reserved for
/// begin-of-sequence, end-of-sequence and unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    pieces: Vec<String>,
    index: HashMap<String, TokenId>,
    kind: TokenizerKind,
}

impl Vocab {
    pub const BOS: TokenId = TokenId(0);
    pub const EOS: TokenId = TokenId(1);
    pub const UNK: TokenId = TokenId(2);

    /// Builds a vocabulary from pieces. The reserved pieces are always
    /// placed first; duplicates are dropped keeping the first occurrence.
    pub fn new<I, S>(kind: TokenizerKind, pieces: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocab {
            pieces: Vec::new(),
            index: HashMap::new(),
            kind,
        };
        for p in [BOS_PIECE, EOS_PIECE, UNK_PIECE] {
            vocab.push(p.to_string());
        }
        for p in pieces {
            vocab.push(p.into());
        }
        vocab
    }

    /// Reconstructs a vocabulary from a stored piece list, verbatim.
    pub fn from_pieces(kind: TokenizerKind, pieces: Vec<String>) -> Result<Self> {
        if pieces.len() < 2 {
            return Err(Error::Format("vocabulary needs at least two pieces".into()));
        }
        let mut index = HashMap::with_capacity(pieces.len());
        for (i, p) in pieces.iter().enumerate() {
            if index.insert(p.clone(), TokenId(i as u32)).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary piece {p:?}")));
            }
        }
        Ok(Vocab { pieces, index, kind })
    }

    /// A vocabulary of `size` anonymous pieces (`<0>`, `<1>`, ...).
    pub fn anonymous(size: usize) -> Self {
        let pieces = (0..size.max(2)).map(|i| format!("<{i}>")).collect();
        Vocab::from_pieces(TokenizerKind::Opaque, pieces).expect("anonymous pieces are unique")
    }

    fn push(&mut self, piece: String) {
        if !self.index.contains_key(&piece) {
            self.index.insert(piece.clone(), TokenId(self.pieces.len() as u32));
            self.pieces.push(piece);
        }
    }

    pub fn size(&self) -> usize {
        self.pieces.len()
    }

    pub fn kind(&self) -> TokenizerKind {
        self.kind
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    pub fn piece_of(&self, id: TokenId) -> Option<&str> {
        self.pieces.get(id.index()).map(String::as_str)
    }

    pub fn id_of(&self, piece: &str) -> Option<TokenId> {
        self.index.get(piece).copied()
    }

    pub fn contains(&self, id: TokenId) -> bool {
        id.index() < self.pieces.len()
    }

    pub fn check(&self, seq: &[TokenId]) -> Result<()> {
        match seq.iter().find(|t| !self.contains(**t)) {
            Some(t) => Err(Error::contract(format!(
                "token {t} outside vocabulary of size {}",
                self.size()
            ))),
            None => Ok(()),
        }
    }
}
