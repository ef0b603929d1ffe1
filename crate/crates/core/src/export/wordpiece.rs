//! Greedy longest-match subword tokenization with char offsets.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExportError;

pub const UNK: &str = "[UNK]";
pub const CONTINUATION: &str = "##";
const MAX_WORD_CHARS: usize = 100;

pub const FIXTURE_VOCAB: &str = include_str!("../../data/fixture_vocab.txt");

#[derive(Debug, Clone)]
pub struct Vocabulary {
    pieces: HashSet<String>,
}

impl Vocabulary {
    pub fn from_pieces<I, S>(pieces: I) -> Result<Self, ExportError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let pieces: HashSet<String> = pieces.into_iter().map(Into::into).collect();
        if pieces.is_empty() {
            return Err(ExportError::Vocabulary("vocabulary is empty".into()));
        }
        if !pieces.contains(UNK) {
            return Err(ExportError::Vocabulary(format!("vocabulary lacks {UNK}")));
        }
        Ok(Vocabulary { pieces })
    }

    /// One piece per line; blank lines are ignored.
    pub fn parse(doc: &str) -> Result<Self, ExportError> {
        Self::from_pieces(
            doc.lines()
                .map(|l| l.strip_suffix('\r').unwrap_or(l))
                .filter(|l| !l.is_empty()),
        )
    }

    pub fn from_file(path: &Path) -> Result<Self, ExportError> {
        let doc = fs::read_to_string(path)
            .map_err(|e| ExportError::Vocabulary(format!("{}: {e}", path.display())))?;
        Self::parse(&doc)
    }

    /// The small bundled vocabulary used by tests and offline runs.
    pub fn fixture() -> Self {
        Self::parse(FIXTURE_VOCAB).expect("bundled vocabulary is valid")
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn contains(&self, piece: &str) -> bool {
        self.pieces.contains(piece)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubwordToken {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub is_continuation: bool,
}

impl SubwordToken {
    /// The characters this piece covers, or `None` for the unknown piece.
    pub fn surface(&self) -> Option<&str> {
        if self.text == UNK {
            None
        } else {
            Some(self.text.strip_prefix(CONTINUATION).unwrap_or(&self.text))
        }
    }
}

/// Whitespace-separated words, with every ASCII punctuation char split off
/// as its own word. Yields `(start, end)` char ranges.
fn pre_split(chars: &[char]) -> Vec<(usize, usize)> {
    let mut words = Vec::new();
    let mut start = None;
    for (i, &c) in chars.iter().enumerate() {
        if c.is_whitespace() || c.is_ascii_punctuation() {
            if let Some(s) = start.take() {
                words.push((s, i));
            }
            if c.is_ascii_punctuation() {
                words.push((i, i + 1));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        words.push((s, chars.len()));
    }
    words
}

fn split_word(vocab: &Vocabulary, word: &[char], offset: usize, out: &mut Vec<SubwordToken>) {
    let unknown = |out: &mut Vec<SubwordToken>| {
        out.push(SubwordToken {
            text: UNK.to_string(),
            start: offset,
            end: offset + word.len(),
            is_continuation: false,
        })
    };
    if word.len() > MAX_WORD_CHARS {
        return unknown(out);
    }
    let mut pieces = Vec::new();
    let mut pos = 0;
    while pos < word.len() {
        let prefix = if pos > 0 { CONTINUATION } else { "" };
        let found = (pos + 1..=word.len()).rev().find_map(|end| {
            let cand: String = prefix.chars().chain(word[pos..end].iter().copied()).collect();
            vocab.contains(&cand).then_some((cand, end))
        });
        match found {
            Some((text, end)) => {
                pieces.push(SubwordToken {
                    text,
                    start: offset + pos,
                    end: offset + end,
                    is_continuation: pos > 0,
                });
                pos = end;
            }
            None => return unknown(out),
        }
    }
    out.extend(pieces);
}

pub fn tokenize_subwords(text: &str, vocab: &Vocabulary) -> Vec<SubwordToken> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    for (s, e) in pre_split(&chars) {
        split_word(vocab, &chars[s..e], s, &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab(pieces: &[&str]) -> Vocabulary {
        Vocabulary::from_pieces(pieces.iter().copied().chain([UNK])).unwrap()
    }

    fn pieces(toks: &[SubwordToken]) -> Vec<(&str, usize, usize)> {
        toks.iter().map(|t| (t.text.as_str(), t.start, t.end)).collect()
    }

    #[test]
    fn longest_match_first() {
        let v = vocab(&["ni", "##tro", "nitro"]);
        assert_eq!(pieces(&tokenize_subwords("nitro", &v)), [("nitro", 0, 5)]);
    }

    #[test]
    fn continuation_pieces() {
        let v = vocab(&["ni", "##tro"]);
        let toks = tokenize_subwords("nitro", &v);
        assert_eq!(pieces(&toks), [("ni", 0, 2), ("##tro", 2, 5)]);
        assert!(!toks[0].is_continuation && toks[1].is_continuation);
    }

    #[test]
    fn unknown_word() {
        let v = vocab(&["ni", "##tro"]);
        assert_eq!(pieces(&tokenize_subwords("qzx", &v)), [(UNK, 0, 3)]);
        // a partial match still makes the whole word unknown
        assert_eq!(pieces(&tokenize_subwords("nix", &v)), [(UNK, 0, 3)]);
    }

    #[test]
    fn punctuation_is_split() {
        let v = vocab(&["nitro", "."]);
        assert_eq!(
            pieces(&tokenize_subwords(" nitro.", &v)),
            [("nitro", 1, 6), (".", 6, 7)]
        );
    }

    #[test]
    fn empty_vocab_rejected() {
        assert!(Vocabulary::from_pieces(Vec::<String>::new()).is_err());
        assert!(Vocabulary::parse("a\nb\n").is_err());
    }

    #[test]
    fn fixture_vocab_loads() {
        let v = Vocabulary::fixture();
        assert!(v.len() >= 150);
        assert!(v.contains("##e"));
    }

    proptest! {
        #[test]
        fn pieces_tile_non_whitespace(text in "[a-zA-Z0-9 .,()\\-é\t\n]{0,60}") {
            let v = Vocabulary::fixture();
            let toks = tokenize_subwords(&text, &v);
            let chars: Vec<char> = text.chars().collect();
            let mut covered = String::new();
            let mut last_end = 0;
            for t in &toks {
                prop_assert!(t.start >= last_end && t.start < t.end);
                prop_assert!(chars[last_end..t.start].iter().all(|c| c.is_whitespace()));
                let span: String = chars[t.start..t.end].iter().collect();
                if let Some(s) = t.surface() {
                    prop_assert_eq!(s, span.as_str());
                }
                if t.is_continuation {
                    prop_assert_eq!(t.start, last_end);
                }
                covered.push_str(&span);
                last_end = t.end;
            }
            let expected: String = chars.iter().filter(|c| !c.is_whitespace()).collect();
            prop_assert_eq!(covered, expected);
        }
    }
}
