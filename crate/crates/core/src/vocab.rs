use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Identifier of a decodable symbol: a vocabulary word, blank, or EOS.
///
/// Word tokens occupy `0..vocab_len`; blank and EOS are the two ids after.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Interned token table shared by the corpus, acoustic model and decoder.
#[derive(Debug, Clone)]
pub struct Vocab {
    words: Vec<String>,
    by_text: HashMap<String, TokenId>,
}

impl Vocab {
    /// Builds a vocabulary from word texts. Duplicates keep their first id.
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocab {
            words: Vec::new(),
            by_text: HashMap::new(),
        };
        for w in words {
            let w = w.into();
            if !v.by_text.contains_key(&w) {
                let id = TokenId(v.words.len() as u32);
                v.by_text.insert(w.clone(), id);
                v.words.push(w);
            }
        }
        v
    }

    /// Number of word tokens (excluding blank and EOS).
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Total number of symbols including blank and EOS.
    pub fn num_symbols(&self) -> usize {
        self.words.len() + 2
    }

    pub fn blank(&self) -> TokenId {
        TokenId(self.words.len() as u32)
    }

    pub fn eos(&self) -> TokenId {
        TokenId(self.words.len() as u32 + 1)
    }

    pub fn is_word(&self, t: TokenId) -> bool {
        t.index() < self.words.len()
    }

    pub fn id(&self, text: &str) -> Option<TokenId> {
        self.by_text.get(text).copied()
    }

    /// Text of a token; blank and EOS render as `<blank>` / `<eos>`.
    pub fn text(&self, t: TokenId) -> &str {
        if t == self.blank() {
            "<blank>"
        } else if t == self.eos() {
            "<eos>"
        } else {
            &self.words[t.index()]
        }
    }

    /// All word token ids in id order.
    pub fn word_ids(&self) -> impl Iterator<Item = TokenId> + '_ {
        (0..self.words.len() as u32).map(TokenId)
    }

    /// Renders a token sequence as a space-joined string.
    pub fn render(&self, tokens: &[TokenId]) -> String {
        tokens
            .iter()
            .map(|&t| self.text(t))
            .collect::<Vec<_>>()
            .join(" ")
    }
}
