//! Expert-knowledge text supervision: label → description knowledge base,
//! a word-level vocabulary, fixed-length tokenization and MLM masking.

use std::collections::HashMap;
use std::path::Path;

use crate::config::MlmReplacement;
use crate::error::{Error, Result};
use crate::masking::masked_count;
use crate::rng::RandomStream;

pub const PAD: u32 = 0;
pub const MASK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;
pub const UNK: u32 = 4;
pub const RESERVED_TOKENS: [&str; 5] = ["[PAD]", "[MASK]", "[CLS]", "[SEP]", "[UNK]"];

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Label → list of textual descriptions, in file order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KnowledgeBase {
    entries: Vec<(String, Vec<String>)>,
    index: HashMap<String, usize>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, label: &str, descriptions: Vec<String>) -> Result<()> {
        let label = normalize_ws(label);
        if label.is_empty() {
            return Err(Error::KnowledgeBase { line: 0, reason: "empty label".into() });
        }
        if self.index.contains_key(&label) {
            return Err(Error::KnowledgeBase {
                line: 0,
                reason: format!("duplicate label `{label}`"),
            });
        }
        let descriptions: Vec<String> = descriptions.iter().map(|d| normalize_ws(d)).collect();
        if descriptions.is_empty() || descriptions.iter().any(String::is_empty) {
            return Err(Error::KnowledgeBase {
                line: 0,
                reason: format!("label `{label}` needs at least one non-empty description"),
            });
        }
        self.index.insert(label.clone(), self.entries.len());
        self.entries.push((label, descriptions));
        Ok(())
    }

    /// Parse blocks of `[label] <name>` followed by one description per line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kb = KnowledgeBase::new();
        let mut current: Option<(usize, String, Vec<String>)> = None;
        let flush = |kb: &mut KnowledgeBase, cur: Option<(usize, String, Vec<String>)>| -> Result<()> {
            if let Some((line, label, descs)) = cur {
                kb.insert(&label, descs).map_err(|e| match e {
                    Error::KnowledgeBase { reason, .. } => Error::KnowledgeBase { line, reason },
                    other => other,
                })?;
            }
            Ok(())
        };
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if let Some(name) = line.strip_prefix("[label]") {
                flush(&mut kb, current.take())?;
                current = Some((i + 1, name.trim().to_string(), Vec::new()));
            } else if line.is_empty() {
                flush(&mut kb, current.take())?;
            } else if let Some((_, _, descs)) = current.as_mut() {
                descs.push(line.to_string());
            } else {
                return Err(Error::KnowledgeBase {
                    line: i + 1,
                    reason: "description outside a `[label]` block".into(),
                });
            }
        }
        flush(&mut kb, current)?;
        Ok(kb)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let blocks: Vec<String> = self
            .entries
            .iter()
            .map(|(label, descs)| {
                let mut b = format!("[label] {label}\n");
                for d in descs {
                    b.push_str(d);
                    b.push('\n');
                }
                b
            })
            .collect();
        blocks.join("\n")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn descriptions(&self, label: &str) -> Option<&[String]> {
        self.index.get(label).map(|&i| self.entries[i].1.as_slice())
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index.contains_key(label)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(l, _)| l.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Every description, in file order.
    pub fn corpus(&self) -> Vec<&str> {
        self.entries
            .iter()
            .flat_map(|(_, d)| d.iter().map(String::as_str))
            .collect()
    }
}

/// Pick one of the label's descriptions uniformly at random.
pub fn expand_label<'kb>(label: &str, kb: &'kb KnowledgeBase, rng: &mut RandomStream) -> Result<&'kb str> {
    let descs = kb
        .descriptions(label)
        .ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
    Ok(&descs[rng.below(descs.len())])
}

/// Lower-cased words; punctuation characters are tokens of their own.
pub fn split_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
        } else if ch.is_alphanumeric() || ch == '\'' || ch == '-' {
            word.extend(ch.to_lowercase());
        } else {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            out.push(ch.to_string());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        for (i, r) in RESERVED_TOKENS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*r) {
                return Err(Error::Vocabulary(format!("line {i} must be {r}")));
            }
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Vocabulary(format!("duplicate token `{t}`")));
            }
        }
        Ok(Self { tokens, ids })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.ids.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> &str {
        self.tokens.get(id as usize).map(String::as_str).unwrap_or("[UNK]")
    }

    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().map(str::to_string).filter(|t| !t.is_empty()).collect())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Space-joined tokens of the real (non-reserved) ids.
    pub fn detokenize(&self, ids: &[u32]) -> String {
        ids.iter()
            .filter(|&&i| i as usize >= RESERVED_TOKENS.len() || i == UNK)
            .map(|&i| self.token(i))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Reserved tokens first, then words by descending frequency (ties by first
/// occurrence), truncated to `max_size` entries.
pub fn build_vocab<S: AsRef<str>>(corpus: &[S], max_size: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::Vocabulary("empty corpus".into()));
    }
    if max_size < RESERVED_TOKENS.len() + 1 {
        return Err(Error::Vocabulary(format!(
            "max_size {max_size} leaves no room beyond {} reserved tokens",
            RESERVED_TOKENS.len()
        )));
    }
    let mut counts: HashMap<String, (usize, usize)> = HashMap::new();
    let mut order = 0;
    for text in corpus {
        for w in split_words(text.as_ref()) {
            if RESERVED_TOKENS.contains(&w.as_str()) {
                continue;
            }
            let entry = counts.entry(w).or_insert((0, order));
            entry.0 += 1;
            order += 1;
        }
    }
    let mut words: Vec<(String, usize, usize)> = counts.into_iter().map(|(w, (c, f))| (w, c, f)).collect();
    words.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    let tokens = RESERVED_TOKENS
        .iter()
        .map(|s| s.to_string())
        .chain(words.into_iter().map(|w| w.0))
        .take(max_size)
        .collect();
    Vocabulary::from_tokens(tokens)
}

/// A fixed-length token sequence and, once masked, its MLM bookkeeping.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenRecord {
    pub ids: Vec<u32>,
    /// Real tokens including `[CLS]` and `[SEP]`.
    pub attention_len: usize,
    pub mask_positions: Vec<usize>,
    /// Original ids at `mask_positions`, same order.
    pub original_ids: Vec<u32>,
}

impl TokenRecord {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Positions eligible for masking: real tokens other than `[CLS]`/`[SEP]`.
    pub fn maskable_positions(&self) -> Vec<usize> {
        (1..self.attention_len.saturating_sub(1)).collect()
    }

    pub fn key_valid(&self) -> Vec<bool> {
        (0..self.ids.len()).map(|i| i < self.attention_len).collect()
    }

    /// Write the stored originals back over the masked positions.
    pub fn unmasked(&self) -> TokenRecord {
        let mut ids = self.ids.clone();
        for (&p, &id) in self.mask_positions.iter().zip(&self.original_ids) {
            ids[p] = id;
        }
        TokenRecord {
            ids,
            attention_len: self.attention_len,
            mask_positions: Vec::new(),
            original_ids: Vec::new(),
        }
    }
}

/// `[CLS] w… [SEP] [PAD]…`, truncated so the record is exactly `max_len` long.
pub fn tokenize(text: &str, vocab: &Vocabulary, max_len: usize) -> TokenRecord {
    assert!(max_len >= 3, "max_len must leave room for [CLS], a token and [SEP]");
    let mut ids = Vec::with_capacity(max_len);
    ids.push(CLS);
    ids.extend(split_words(text).iter().take(max_len - 2).map(|w| vocab.id(w)));
    ids.push(SEP);
    let attention_len = ids.len();
    ids.resize(max_len, PAD);
    TokenRecord {
        ids,
        attention_len,
        mask_positions: Vec::new(),
        original_ids: Vec::new(),
    }
}

/// Corrupt exactly `round(ratio · maskable)` positions (at least one when
/// `ratio > 0`).
pub fn mask_tokens(
    record: &TokenRecord,
    ratio: f64,
    replacement: MlmReplacement,
    vocab_size: usize,
    rng: &mut RandomStream,
) -> Result<TokenRecord> {
    let mut maskable = record.maskable_positions();
    if maskable.is_empty() {
        return Err(Error::NothingToMask);
    }
    let mut k = masked_count(maskable.len(), ratio);
    if ratio > 0.0 {
        k = k.max(1);
    }
    rng.shuffle(&mut maskable);
    let mut positions = maskable[..k].to_vec();
    positions.sort_unstable();
    let mut out = record.clone();
    out.original_ids = positions.iter().map(|&p| record.ids[p]).collect();
    for &p in &positions {
        out.ids[p] = match replacement {
            MlmReplacement::Mask => MASK,
            MlmReplacement::Bert => {
                let u = rng.uniform();
                if u < 0.8 {
                    MASK
                } else if u < 0.9 && vocab_size > RESERVED_TOKENS.len() {
                    (RESERVED_TOKENS.len() + rng.below(vocab_size - RESERVED_TOKENS.len())) as u32
                } else {
                    record.ids[p]
                }
            }
        };
    }
    out.mask_positions = positions;
    Ok(out)
}
