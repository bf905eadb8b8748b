//! Phoneme inventory and tokenization of romanized onomatopoeic words.
//!
//! Transcriptions are written as space-separated phoneme tokens, e.g. `"p a N"`
//! or `"b i: i q"`. A long vowel is a single token (`i:`); `N` is the moraic
//! nasal and `q` the geminate marker. Tokens are case sensitive (`N` vs `n`).
//!
//! The default inventory is a reconstruction of a Japanese onomatopoeia phone
//! set: five vowels, their long forms, `N`, `q` and twenty consonants. A
//! different set can be loaded from a text file with one token per line.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PhonemeError {
    #[error("empty input")]
    EmptyInput,
    #[error("unknown token {token:?} at position {position}")]
    UnknownToken { token: String, position: usize },
    #[error("invalid phoneme id {0}")]
    InvalidId(usize),
    #[error("invalid inventory: {0}")]
    InvalidInventory(String),
    #[error("failed to read inventory: {0}")]
    Io(String),
}

pub const DEFAULT_VOWELS: [&str; 5] = ["a", "i", "u", "e", "o"];
pub const DEFAULT_LONG_VOWELS: [&str; 5] = ["a:", "i:", "u:", "e:", "o:"];
pub const DEFAULT_SPECIAL: [&str; 2] = ["N", "q"];
pub const DEFAULT_CONSONANTS: [&str; 20] = [
    "p", "b", "t", "d", "k", "g", "s", "sh", "z", "j", "ts", "ch", "f", "h", "m", "n", "r", "w",
    "y", "v",
];

/// Ordered phoneme set; a token's id is its position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhonemeInventory {
    symbols: Vec<String>,
    id_of: HashMap<String, usize>,
}

impl Default for PhonemeInventory {
    fn default() -> Self {
        let symbols = DEFAULT_VOWELS
            .iter()
            .chain(DEFAULT_LONG_VOWELS.iter())
            .chain(DEFAULT_SPECIAL.iter())
            .chain(DEFAULT_CONSONANTS.iter())
            .map(|s| s.to_string())
            .collect();
        Self::from_symbols(symbols).expect("default inventory is valid")
    }
}

impl PhonemeInventory {
    pub fn from_symbols(symbols: Vec<String>) -> Result<Self, PhonemeError> {
        if symbols.is_empty() {
            return Err(PhonemeError::InvalidInventory("no symbols".into()));
        }
        let mut id_of = HashMap::with_capacity(symbols.len());
        for (id, sym) in symbols.iter().enumerate() {
            if sym.is_empty() || sym.chars().any(char::is_whitespace) {
                return Err(PhonemeError::InvalidInventory(format!(
                    "bad token {sym:?} on entry {id}"
                )));
            }
            if id_of.insert(sym.clone(), id).is_some() {
                return Err(PhonemeError::InvalidInventory(format!("duplicate token {sym:?}")));
            }
        }
        Ok(Self { symbols, id_of })
    }

    /// Parses the inventory text format: one token per line, `#` starts a
    /// comment, blank lines are skipped. Line order defines ids.
    pub fn parse(text: &str) -> Result<Self, PhonemeError> {
        let symbols = text
            .lines()
            .map(|line| line.split('#').next().unwrap_or("").trim())
            .filter(|line| !line.is_empty())
            .map(str::to_string)
            .collect();
        Self::from_symbols(symbols)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PhonemeError> {
        let text = std::fs::read_to_string(path).map_err(|e| PhonemeError::Io(e.to_string()))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for sym in &self.symbols {
            out.push_str(sym);
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.id_of.get(token).copied()
    }

    pub fn symbol(&self, id: usize) -> Option<&str> {
        self.symbols.get(id).map(String::as_str)
    }

    /// Hex SHA-256 of the canonical text form. Checkpoints record it so a
    /// model is never paired with a reordered inventory.
    pub fn hash(&self) -> String {
        hash_symbols(&self.symbols)
    }

    pub fn tokenize(&self, text: &str) -> Result<PhonemeSequence, PhonemeError> {
        tokenize(text, self)
    }

    pub fn detokenize(&self, seq: &PhonemeSequence) -> Result<String, PhonemeError> {
        detokenize(seq, self)
    }
}

pub fn hash_symbols<S: AsRef<str>>(symbols: &[S]) -> String {
    let mut hasher = Sha256::new();
    for s in symbols {
        hasher.update(s.as_ref().as_bytes());
        hasher.update(b"\n");
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhonemeSequence {
    ids: Vec<usize>,
    source_text: String,
}

impl PhonemeSequence {
    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn source_text(&self) -> &str {
        &self.source_text
    }

    /// Builds a sequence from raw ids, checking them against the inventory.
    pub fn from_ids(ids: Vec<usize>, inv: &PhonemeInventory) -> Result<Self, PhonemeError> {
        if ids.is_empty() {
            return Err(PhonemeError::EmptyInput);
        }
        let tokens = ids
            .iter()
            .map(|&id| inv.symbol(id).ok_or(PhonemeError::InvalidId(id)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            source_text: tokens.join(" "),
            ids,
        })
    }
}

impl fmt::Display for PhonemeSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source_text)
    }
}

/// Maps full-width variants that show up in hand-typed transcriptions to
/// their ASCII forms. Anything else is left for the inventory to reject.
fn normalize_token(token: &str) -> String {
    token
        .chars()
        .map(|c| match c {
            '：' | 'ː' => ':',
            c => c,
        })
        .collect()
}

pub fn tokenize(text: &str, inv: &PhonemeInventory) -> Result<PhonemeSequence, PhonemeError> {
    let tokens: Vec<String> = text.split_whitespace().map(normalize_token).collect();
    if tokens.is_empty() {
        return Err(PhonemeError::EmptyInput);
    }
    let ids = tokens
        .iter()
        .enumerate()
        .map(|(position, tok)| {
            inv.id(tok).ok_or_else(|| PhonemeError::UnknownToken {
                token: tok.clone(),
                position,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PhonemeSequence {
        ids,
        source_text: tokens.join(" "),
    })
}

pub fn detokenize(seq: &PhonemeSequence, inv: &PhonemeInventory) -> Result<String, PhonemeError> {
    let tokens = seq
        .ids
        .iter()
        .map(|&id| inv.symbol(id).ok_or(PhonemeError::InvalidId(id)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(tokens.join(" "))
}
