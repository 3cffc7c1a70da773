use std::path::Path;

use csd_core::{Error, Result, TokenId, TokenSeq, TokenizerKind, Vocab};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Tokenized train/eval splits sharing one vocabulary.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub vocab: Vocab,
    /// One sequence per non-empty line, each terminated by EOS.
    pub train: Vec<TokenSeq>,
    pub eval: Vec<TokenSeq>,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn byte_piece(b: u8) -> String {
    char::from(b).to_string()
}

/// Builds a vocabulary from the pieces of `text`, in first-seen order for
/// words and byte order for bytes.
pub fn build_vocab(text: &str, kind: TokenizerKind) -> Vocab {
    match kind {
        TokenizerKind::Byte => {
            let mut seen = [false; 256];
            for &b in text.as_bytes() {
                seen[b as usize] = true;
            }
            let pieces = (0..=255u8).filter(|&b| seen[b as usize] && b != b'\n').map(byte_piece);
            Vocab::new(kind, pieces)
        }
        TokenizerKind::Word | TokenizerKind::Opaque => Vocab::new(kind, text.split_whitespace()),
    }
}

/// Maps text onto ids; pieces missing from `vocab` become UNK.
pub fn tokenize(text: &str, vocab: &Vocab) -> TokenSeq {
    let id = |piece: &str| vocab.id_of(piece).unwrap_or(Vocab::UNK);
    match vocab.kind() {
        TokenizerKind::Byte => text.as_bytes().iter().map(|&b| id(&byte_piece(b))).collect(),
        TokenizerKind::Word | TokenizerKind::Opaque => text.split_whitespace().map(id).collect(),
    }
}

/// Inverse of [`tokenize`]. Reserved ids render as their pieces except EOS,
/// which ends the text.
pub fn detokenize(seq: &[TokenId], vocab: &Vocab) -> String {
    let seq = match seq.iter().position(|&t| t == Vocab::EOS) {
        Some(end) => &seq[..end],
        None => seq,
    };
    let piece = |t: &TokenId| vocab.piece_of(*t).unwrap_or(csd_core::vocab::UNK_PIECE);
    match vocab.kind() {
        TokenizerKind::Byte => {
            let bytes: Vec<u8> = seq
                .iter()
                .flat_map(|t| {
                    let p = piece(t);
                    let mut chars = p.chars();
                    match (chars.next(), chars.next()) {
                        (Some(c), None) if (c as u32) < 256 => vec![c as u8],
                        _ => p.as_bytes().to_vec(),
                    }
                })
                .collect();
            String::from_utf8_lossy(&bytes).into_owned()
        }
        TokenizerKind::Word | TokenizerKind::Opaque => seq.iter().map(piece).collect::<Vec<_>>().join(" "),
    }
}

fn lines(text: &str, vocab: &Vocab) -> Vec<TokenSeq> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let mut seq = tokenize(l, vocab);
            seq.push(Vocab::EOS);
            seq
        })
        .collect()
}

/// Reads the splits; the vocabulary comes from the training split only.
pub fn ingest_corpus(train: &Path, eval: Option<&Path>, kind: TokenizerKind) -> Result<Corpus> {
    let train_text = read(train)?;
    let vocab = build_vocab(&train_text, kind);
    let eval = match eval {
        Some(path) => lines(&read(path)?, &vocab),
        None => Vec::new(),
    };
    Ok(Corpus {
        train: lines(&train_text, &vocab),
        eval,
        vocab,
    })
}

/// Splits an eval line at the end of the first `delimiter`; the prefix is the
/// prompt. Lines without the delimiter are skipped.
pub fn prompts(eval: &[TokenSeq], vocab: &Vocab, delimiter: &str, count: usize) -> Vec<TokenSeq> {
    let marker = tokenize(delimiter, vocab);
    eval.iter()
        .filter_map(|seq| {
            if marker.is_empty() {
                return seq.first().map(|&t| vec![t]);
            }
            seq.windows(marker.len())
                .position(|w| w == marker.as_slice())
                .map(|i| seq[..i + marker.len()].to_vec())
        })
        .take(count)
        .collect()
}

const NAMES: &[&str] = &[
    "Maria", "Omar", "Lena", "Tomas", "Priya", "Kenji", "Sofia", "Dmitri", "Amara", "Lucas", "Hana", "Felix",
    "Ines", "Jonah", "Rosa", "Viktor",
];
const ITEMS: &[&str] = &[
    "apples", "pencils", "marbles", "stickers", "books", "cookies", "stamps", "shells", "coins", "cards",
    "balloons", "crayons",
];
const PLACES: &[&str] = &["market", "library", "school", "park", "bakery", "museum"];

fn problem(rng: &mut ChaCha8Rng) -> String {
    let a = *NAMES.choose(rng).unwrap();
    let b = loop {
        let b = *NAMES.choose(rng).unwrap();
        if b != a {
            break b;
        }
    };
    let item = *ITEMS.choose(rng).unwrap();
    let place = *PLACES.choose(rng).unwrap();
    match rng.gen_range(0..4) {
        0 => {
            let x = rng.gen_range(3..60);
            let y = rng.gen_range(2..40);
            format!(
                "Q: {a} has {x} {item}. {a} buys {y} more {item} at the {place}. How many {item} does {a} have now? \
                 A: {a} has {x} {item}. {a} buys {y} more {item}. So {a} has {x} + {y} = {} {item} now. The answer is {}.",
                x + y,
                x + y
            )
        }
        1 => {
            let x = rng.gen_range(10..80);
            let y = rng.gen_range(1..x);
            format!(
                "Q: {a} has {x} {item}. {a} gives {y} {item} to {b}. How many {item} does {a} have left? \
                 A: {a} has {x} {item}. {a} gives {y} {item} to {b}. So {a} has {x} - {y} = {} {item} left. The answer is {}.",
                x - y,
                x - y
            )
        }
        2 => {
            let x = rng.gen_range(2..12);
            let y = rng.gen_range(2..12);
            format!(
                "Q: {a} buys {x} boxes of {item} at the {place}. Each box has {y} {item}. How many {item} does {a} buy? \
                 A: {a} buys {x} boxes of {item}. Each box has {y} {item}. So {a} buys {x} * {y} = {} {item}. The answer is {}.",
                x * y,
                x * y
            )
        }
        _ => {
            let x = rng.gen_range(3..50);
            let y = rng.gen_range(3..50);
            format!(
                "Q: {a} has {x} {item} and {b} has {y} {item}. How many {item} do {a} and {b} have together? \
                 A: {a} has {x} {item} and {b} has {y} {item}. So {a} and {b} have {x} + {y} = {} {item} together. The answer is {}.",
                x + y,
                x + y
            )
        }
    }
}

/// Deterministic copy-heavy word-problem corpus: answers restate the names,
/// items and numbers of their questions. One problem per line.
pub fn synthetic_corpus(seed: u64, lines: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    for _ in 0..lines {
        out.push_str(&problem(&mut rng));
        out.push('\n');
    }
    out
}

pub const SHIPPED_TRAIN_SEED: u64 = 20231;
pub const SHIPPED_EVAL_SEED: u64 = 20232;
pub const SHIPPED_TRAIN_LINES: usize = 1500;
pub const SHIPPED_EVAL_LINES: usize = 200;
