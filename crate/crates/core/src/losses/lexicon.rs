use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LossError;

/// 39-phone ARPAbet inventory without stress markers.
pub const ARPABET: [&str; 39] = [
    "AA", "AE", "AH", "AO", "AW", "AY", "B", "CH", "D", "DH", "EH", "ER", "EY", "F", "G", "HH",
    "IH", "IY", "JH", "K", "L", "M", "N", "NG", "OW", "OY", "P", "R", "S", "SH", "T", "TH", "UH",
    "UW", "V", "W", "Y", "Z", "ZH",
];

const GRID_LEXICON: &str = include_str!("grid_lexicon.json");

/// How transcripts become CTC label sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// Words looked up in a pronunciation lexicon.
    #[default]
    Phones,
    /// Lower-case letters and space.
    Chars,
}

/// Ordered output symbols; the CTC blank takes index `len()`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    symbols: Vec<String>,
}

impl Vocabulary {
    pub fn new(symbols: Vec<String>) -> Result<Self, LossError> {
        let unique: BTreeSet<&String> = symbols.iter().collect();
        if unique.len() != symbols.len() || symbols.is_empty() {
            return Err(LossError::Lexicon(
                "symbols must be unique and non-empty".into(),
            ));
        }
        Ok(Self { symbols })
    }

    pub fn arpabet() -> Self {
        Self {
            symbols: ARPABET.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn chars() -> Self {
        Self {
            symbols: ('a'..='z')
                .map(String::from)
                .chain([" ".to_string()])
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn blank(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn index(&self, symbol: &str) -> Result<usize, LossError> {
        self.symbols
            .iter()
            .position(|s| s == symbol)
            .ok_or_else(|| LossError::UnknownSymbol(symbol.to_string()))
    }

    /// Characters of the lower-cased transcript; whitespace runs become one space.
    pub fn encode_chars(&self, transcript: &str) -> Result<Vec<usize>, LossError> {
        let text = transcript
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .to_lowercase();
        text.chars().map(|c| self.index(&c.to_string())).collect()
    }
}

/// Word to phone-sequence map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Lexicon {
    words: BTreeMap<String, Vec<String>>,
}

impl Lexicon {
    /// The 51-word Grid corpus vocabulary in ARPAbet.
    pub fn grid() -> Self {
        serde_json::from_str(GRID_LEXICON).expect("bundled lexicon parses")
    }

    pub fn from_map(words: BTreeMap<String, Vec<String>>) -> Self {
        Self { words }
    }

    pub fn load(path: &Path) -> Result<Self, LossError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LossError::Lexicon(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| LossError::Lexicon(e.to_string()))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = (&String, &Vec<String>)> {
        self.words.iter()
    }

    /// Sorted set of phones used by the lexicon.
    pub fn inventory(&self) -> Vocabulary {
        let set: BTreeSet<&String> = self.words.values().flatten().collect();
        Vocabulary {
            symbols: set.into_iter().cloned().collect(),
        }
    }

    pub fn encode(&self, transcript: &str, vocab: &Vocabulary) -> Result<Vec<usize>, LossError> {
        let mut out = Vec::new();
        for w in transcript.split_whitespace() {
            let phones = self
                .words
                .get(&w.to_lowercase())
                .ok_or_else(|| LossError::UnknownWord(w.to_string()))?;
            for p in phones {
                out.push(vocab.index(p)?);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_lexicon_covers_corpus_words() {
        let lex = Lexicon::grid();
        assert_eq!(lex.len(), 51);
        let vocab = Vocabulary::arpabet();
        assert_eq!(vocab.len(), 39);
        for (_, phones) in lex.words() {
            for p in phones {
                vocab.index(p).unwrap();
            }
        }
        let labels = lex.encode("bin blue at f two now", &vocab).unwrap();
        assert_eq!(labels.len(), 3 + 3 + 2 + 2 + 2 + 2);
        assert_eq!(labels[0], vocab.index("B").unwrap());
        assert!(matches!(
            lex.encode("bin purple", &vocab),
            Err(LossError::UnknownWord(_))
        ));
    }

    #[test]
    fn char_mode() {
        let v = Vocabulary::chars();
        assert_eq!(v.len(), 27);
        assert_eq!(v.encode_chars("Bin  Blue").unwrap().len(), 8);
        assert!(v.encode_chars("x1").is_err());
    }

    #[test]
    fn inventory_is_sorted_unique() {
        let lex = Lexicon::from_map(
            [("ba", vec!["b", "a"]), ("ab", vec!["a", "b"])]
                .into_iter()
                .map(|(w, p)| (w.to_string(), p.into_iter().map(String::from).collect()))
                .collect(),
        );
        assert_eq!(
            lex.inventory().symbols(),
            &["a".to_string(), "b".to_string()]
        );
    }
}
