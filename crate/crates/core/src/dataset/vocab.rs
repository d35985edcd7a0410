use std::collections::{BTreeMap, HashMap};

use sha2::{Digest, Sha256};

pub const BOS: usize = 0;
pub const END: usize = 1;
pub const UNK: usize = 2;
pub const SPECIALS: [&str; 3] = ["<bos>", "<end>", "<unk>"];

/// Lowercases and splits on whitespace and punctuation.
pub fn tokenize(raw: &str) -> Vec<String> {
    raw.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_tokens(std::iter::empty::<String>())
    }
}

impl Vocabulary {
    /// Specials first, then `words` in the given order (duplicates and
    /// special surface forms skipped).
    pub fn from_tokens<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let mut index: HashMap<String, usize> =
            tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        for w in words {
            let w = w.into();
            if !index.contains_key(&w) {
                index.insert(w.clone(), tokens.len());
                tokens.push(w);
            }
        }
        Vocabulary { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| self.id(t).unwrap_or(UNK))
            .collect()
    }

    /// Encoded ids terminated by `END`.
    pub fn encode_expression(&self, tokens: &[String]) -> Vec<usize> {
        let mut ids = self.encode(tokens);
        ids.push(END);
        ids
    }

    /// Surface tokens, stopping at the first `END`; `BOS` is dropped.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .take_while(|&&id| id != END)
            .filter(|&&id| id != BOS)
            .map(|&id| self.token(id).unwrap_or(SPECIALS[UNK]).to_string())
            .collect()
    }

    /// Hex SHA-256 over the newline-joined token list.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        h.finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Tokens with corpus frequency `>= min_count` get ids, in lexicographic
/// order; the rest encode to `UNK`.
pub fn build_vocabulary<'a, I>(expressions: I, min_count: usize) -> Vocabulary
where
    I: IntoIterator<Item = &'a [String]>,
{
    let min_count = min_count.max(1);
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for expr in expressions {
        for t in expr {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    Vocabulary::from_tokens(
        counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count)
            .map(|(t, _)| t),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn frequency_threshold() {
        let corpus = [toks(&["red"]), toks(&["red"]), toks(&["ball"])];
        let v = build_vocabulary(corpus.iter().map(Vec::as_slice), 2);
        assert_eq!(v.len(), 4);
        assert_eq!(v.id("red"), Some(3));
        assert_eq!(v.encode(&toks(&["ball"])), vec![UNK]);

        let v1 = build_vocabulary(corpus.iter().map(Vec::as_slice), 1);
        assert_eq!(v1.len(), 5);

        let empty = build_vocabulary(std::iter::empty(), 1);
        assert_eq!(empty.tokens(), &toks(&SPECIALS));
    }

    #[test]
    fn tokenizer_splits_punctuation() {
        assert_eq!(
            tokenize("The man, on the LEFT!"),
            toks(&["the", "man", "on", "the", "left"])
        );
        assert!(tokenize("  ,, ").is_empty());
    }

    #[test]
    fn expression_ends_with_end() {
        let v = Vocabulary::from_tokens(["a"]);
        assert_eq!(v.encode_expression(&toks(&["a", "zzz"])), vec![3, UNK, END]);
    }

    #[test]
    fn hash_depends_on_tokens() {
        let a = Vocabulary::from_tokens(["a", "b"]);
        let b = Vocabulary::from_tokens(["a", "c"]);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), Vocabulary::from_tokens(["a", "b"]).hash());
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(raw in "[a-e ,.]{0,40}", keep in proptest::collection::vec("[a-e]{1,3}", 0..6)) {
            let v = Vocabulary::from_tokens(keep.iter().cloned());
            let tokens = tokenize(&raw);
            let decoded = v.decode(&v.encode_expression(&tokens));
            let expected: Vec<String> = tokens
                .iter()
                .map(|t| if v.id(t).is_some() { t.clone() } else { SPECIALS[UNK].to_string() })
                .collect();
            prop_assert_eq!(decoded, expected);
        }
    }
}
