use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Document;
use crate::error::{Error, Result};
use crate::hash;

pub type TokenId = u32;

/// Placeholder appended to word vocabularies for out-of-vocabulary words.
pub const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub doc_id: String,
    pub tokens: Vec<TokenId>,
    pub tokenizer_id: String,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerKind {
    /// Whitespace-separated words with a vocabulary fitted to a corpus.
    Whitespace,
    /// Raw UTF-8 bytes; ids are byte values and nothing is out of vocabulary.
    Byte,
    /// Whitespace-separated words against an externally supplied vocabulary.
    VocabFile,
}

/// Bijection between token strings and ids.
///
/// Word tokenizers always carry an `<unk>` entry; the byte tokenizer has none.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "TokenizerRepr", try_from = "TokenizerRepr")]
pub struct Tokenizer {
    kind: TokenizerKind,
    vocab: Vec<String>,
    index: HashMap<String, TokenId>,
    unk_id: Option<TokenId>,
    id: String,
}

#[derive(Serialize, Deserialize)]
struct TokenizerRepr {
    kind: TokenizerKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    vocab: Vec<String>,
}

impl From<Tokenizer> for TokenizerRepr {
    fn from(t: Tokenizer) -> Self {
        let vocab = match t.kind {
            TokenizerKind::Byte => Vec::new(),
            _ => t.vocab,
        };
        TokenizerRepr {
            kind: t.kind,
            vocab,
        }
    }
}

impl TryFrom<TokenizerRepr> for Tokenizer {
    type Error = Error;

    fn try_from(r: TokenizerRepr) -> Result<Self> {
        match r.kind {
            TokenizerKind::Byte => Ok(Tokenizer::byte()),
            kind => Tokenizer::from_words(kind, r.vocab),
        }
    }
}

impl Tokenizer {
    pub fn byte() -> Self {
        let vocab: Vec<String> = (0..=255u8).map(|b| format!("<0x{b:02X}>")).collect();
        Self::build(TokenizerKind::Byte, vocab, None)
    }

    /// Word tokenizer over an explicit vocabulary; ids follow iteration order.
    /// `<unk>` is appended when absent.
    pub fn whitespace<I, S>(vocab: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::from_words(
            TokenizerKind::Whitespace,
            vocab.into_iter().map(Into::into).collect(),
        )
    }

    /// Word vocabulary in first-occurrence order over the given texts.
    pub fn fit_whitespace<'a, I>(texts: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut vocab = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for text in texts {
            for word in text.split_whitespace() {
                if word != UNK_TOKEN && seen.insert(word) {
                    vocab.push(word.to_string());
                }
            }
        }
        Self::from_words(TokenizerKind::Whitespace, vocab)
            .expect("fitted vocabulary has no duplicates")
    }

    /// One token per line; the id is the zero-based line number.
    pub fn from_vocab_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let vocab = content.lines().map(str::to_string).collect();
        Self::from_words(TokenizerKind::VocabFile, vocab)
    }

    pub fn write_vocab_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut body = self.vocab.join("\n");
        body.push('\n');
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    fn from_words(kind: TokenizerKind, mut vocab: Vec<String>) -> Result<Self> {
        for w in &vocab {
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(Error::InvalidArgument(format!(
                    "vocabulary entry {w:?} is empty or contains whitespace"
                )));
            }
        }
        let unk = match vocab.iter().position(|w| w == UNK_TOKEN) {
            Some(i) => i,
            None => {
                vocab.push(UNK_TOKEN.to_string());
                vocab.len() - 1
            }
        };
        let tok = Self::build(kind, vocab, Some(unk as TokenId));
        if tok.index.len() != tok.vocab.len() {
            return Err(Error::InvalidArgument(
                "vocabulary contains duplicate entries".into(),
            ));
        }
        Ok(tok)
    }

    fn build(kind: TokenizerKind, vocab: Vec<String>, unk_id: Option<TokenId>) -> Self {
        let index = vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as TokenId))
            .collect();
        let mut h = hash::fnv1a64(format!("{kind:?}").as_bytes());
        for w in &vocab {
            h = hash::fnv1a64_extend(h, w.as_bytes());
            h = hash::fnv1a64_extend(h, &[0]);
        }
        let prefix = match kind {
            TokenizerKind::Whitespace => "whitespace",
            TokenizerKind::Byte => "byte",
            TokenizerKind::VocabFile => "vocab",
        };
        Tokenizer {
            kind,
            id: format!("{prefix}-{}-{h:016x}", vocab.len()),
            vocab,
            index,
            unk_id,
        }
    }

    pub fn kind(&self) -> TokenizerKind {
        self.kind
    }

    /// Stable identifier derived from the kind and vocabulary.
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn unk_id(&self) -> Option<TokenId> {
        self.unk_id
    }

    pub fn token_str(&self, id: TokenId) -> Option<&str> {
        self.vocab.get(id as usize).map(String::as_str)
    }

    pub fn token_id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        match self.kind {
            TokenizerKind::Byte => text.bytes().map(TokenId::from).collect(),
            TokenizerKind::Whitespace | TokenizerKind::VocabFile => {
                let unk = self.unk_id.expect("word tokenizers carry <unk>");
                text.split_whitespace()
                    .map(|w| self.index.get(w).copied().unwrap_or(unk))
                    .collect()
            }
        }
    }

    pub fn tokenize(&self, doc: &Document) -> TokenSequence {
        TokenSequence {
            doc_id: doc.id.clone(),
            tokens: self.encode(&doc.text),
            tokenizer_id: self.id.clone(),
        }
    }

    /// Inverse of [`encode`](Self::encode) on space-normalized text. Byte
    /// sequences that are not valid UTF-8 are decoded lossily.
    pub fn detokenize(&self, tokens: &[TokenId]) -> String {
        match self.kind {
            TokenizerKind::Byte => {
                let bytes: Vec<u8> = tokens.iter().map(|&t| t as u8).collect();
                String::from_utf8_lossy(&bytes).into_owned()
            }
            TokenizerKind::Whitespace | TokenizerKind::VocabFile => tokens
                .iter()
                .map(|&t| self.vocab.get(t as usize).map_or(UNK_TOKEN, String::as_str))
                .collect::<Vec<_>>()
                .join(" "),
        }
    }
}
