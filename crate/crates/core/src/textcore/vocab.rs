use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::TextError;

pub type TokenId = u32;

pub const UNK: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const SEP: TokenId = 3;
pub const LPAREN: TokenId = 4;
pub const RPAREN: TokenId = 5;
pub const EQUALS: TokenId = 6;
pub const COMMA: TokenId = 7;
pub const QUOTE: TokenId = 8;

/// Surfaces of the reserved ids, in id order.
pub const RESERVED: [&str; 9] = ["<unk>", "<s>", "</s>", "<sep>", "(", ")", "=", ",", "\""];

const STRUCTURAL: [char; 5] = ['(', ')', '=', ',', '"'];

pub fn is_structural(surface: &str) -> bool {
    let mut chars = surface.chars();
    matches!((chars.next(), chars.next()), (Some(c), None) if STRUCTURAL.contains(&c))
}

/// Whitespace split, with each of `( ) = , "` always emitted as its own token.
pub fn split_symbols(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut start = 0;
        for (i, c) in word.char_indices() {
            if STRUCTURAL.contains(&c) {
                if start < i {
                    out.push(&word[start..i]);
                }
                out.push(&word[i..i + 1]);
                start = i + 1;
            }
        }
        if start < word.len() {
            out.push(&word[start..]);
        }
    }
    out
}

/// SHA-256 digest identifying a vocabulary or encoder configuration.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fingerprint(pub [u8; 32]);

impl Fingerprint {
    pub fn of(bytes: &[u8]) -> Self {
        let digest = Sha256::digest(bytes);
        let mut out = [0u8; 32];
        out.copy_from_slice(&digest);
        Fingerprint(out)
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({})", &self.to_string()[..12])
    }
}

/// Dense surface <-> id map. Reserved tokens occupy ids 0..=8.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    surfaces: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut vocab = Vocabulary {
            surfaces: Vec::new(),
            index: HashMap::new(),
        };
        for s in RESERVED {
            vocab.intern(s);
        }
        vocab
    }

    pub fn intern(&mut self, surface: &str) -> TokenId {
        if let Some(&id) = self.index.get(surface) {
            return id;
        }
        let id = self.surfaces.len() as TokenId;
        self.surfaces.push(surface.to_string());
        self.index.insert(surface.to_string(), id);
        id
    }

    pub fn get(&self, surface: &str) -> Option<TokenId> {
        self.index.get(surface).copied()
    }

    pub fn id_or_unk(&self, surface: &str) -> TokenId {
        self.get(surface).unwrap_or(UNK)
    }

    pub fn surface(&self, id: TokenId) -> Option<&str> {
        self.surfaces.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    /// Tokenizes and interns unseen surfaces (corpus build).
    pub fn intern_text(&mut self, text: &str) -> Vec<TokenId> {
        split_symbols(text).into_iter().map(|s| self.intern(s)).collect()
    }

    /// Tokenizes against the frozen vocabulary; unknown surfaces become UNK.
    pub fn tokenize(&self, text: &str) -> Vec<TokenId> {
        split_symbols(text).into_iter().map(|s| self.id_or_unk(s)).collect()
    }

    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .map(|&id| self.surface(id).unwrap_or(RESERVED[UNK as usize]))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// `id<TAB>surface` lines, ascending ids.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, s) in self.surfaces.iter().enumerate() {
            out.push_str(&format!("{id}\t{s}\n"));
        }
        out
    }

    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint::of(self.to_tsv().as_bytes())
    }

    pub fn from_reader(reader: impl BufRead) -> Result<Self, TextError> {
        let mut vocab = Vocabulary {
            surfaces: Vec::new(),
            index: HashMap::new(),
        };
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let bad = || TextError::BadVocabFile { line: n + 1 };
            let (id, surface) = line.split_once('\t').ok_or_else(bad)?;
            let id: usize = id.parse().map_err(|_| bad())?;
            if id != vocab.surfaces.len() || surface.is_empty() || vocab.index.contains_key(surface) {
                return Err(bad());
            }
            if let Some(&reserved) = RESERVED.get(id) {
                if reserved != surface {
                    return Err(bad());
                }
            }
            vocab.index.insert(surface.to_string(), id as TokenId);
            vocab.surfaces.push(surface.to_string());
        }
        if vocab.surfaces.len() < RESERVED.len() {
            return Err(TextError::BadVocabFile {
                line: vocab.surfaces.len() + 1,
            });
        }
        Ok(vocab)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TextError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_tsv().as_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TextError> {
        let f = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(f))
    }
}

/// A frozen vocabulary extended with per-utterance overlay ids, so unseen
/// utterance words can still be copied into slot values.
#[derive(Debug, Clone)]
pub struct TokenSpace<'v> {
    vocab: &'v Vocabulary,
    extra: Vec<String>,
    extra_index: HashMap<String, TokenId>,
}

impl<'v> TokenSpace<'v> {
    pub fn new<S: AsRef<str>>(vocab: &'v Vocabulary, utterance: &[S]) -> Self {
        let mut space = TokenSpace {
            vocab,
            extra: Vec::new(),
            extra_index: HashMap::new(),
        };
        for s in utterance {
            let s = s.as_ref();
            if vocab.get(s).is_none() && !space.extra_index.contains_key(s) {
                let id = (vocab.len() + space.extra.len()) as TokenId;
                space.extra.push(s.to_string());
                space.extra_index.insert(s.to_string(), id);
            }
        }
        space
    }

    pub fn vocab(&self) -> &'v Vocabulary {
        self.vocab
    }

    pub fn len(&self) -> usize {
        self.vocab.len() + self.extra.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn id(&self, surface: &str) -> TokenId {
        self.vocab
            .get(surface)
            .or_else(|| self.extra_index.get(surface).copied())
            .unwrap_or(UNK)
    }

    pub fn surface(&self, id: TokenId) -> &str {
        let i = id as usize;
        if i < self.vocab.len() {
            self.vocab.surface(id).unwrap_or(RESERVED[0])
        } else {
            self.extra.get(i - self.vocab.len()).map_or(RESERVED[0], String::as_str)
        }
    }
}
