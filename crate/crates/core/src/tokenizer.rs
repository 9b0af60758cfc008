//! WordPiece vocabulary training and greedy sub-word segmentation.
//!
//! Pre-tokenization splits on Unicode whitespace and then isolates every
//! non-alphanumeric character as its own piece. Casing is preserved.
//! Vocabulary training starts from the character alphabet (dropping
//! characters that occur fewer than `min_freq` times) and repeatedly
//! merges the adjacent symbol pair maximizing
//! `freq(pair) / (freq(left) * freq(right))`, admitting a merge only when
//! the pair itself occurs at least `min_freq` times. Segmentation is
//! greedy longest-match-first without backtracking; a word that cannot be
//! segmented becomes a single `[UNK]`.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;
pub const MASK_ID: u32 = 4;
pub const SPECIAL_TOKENS: [&str; 5] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];
pub const CONTINUATION_PREFIX: &str = "##";
/// Words longer than this are mapped straight to `[UNK]`.
pub const MAX_WORD_CHARS: usize = 100;

pub const DEFAULT_TARGET_SIZE: usize = 10_000;
pub const DEFAULT_MIN_FREQ: u64 = 100;

/// Sub-word inventory. Ids 0..5 are the special tokens; every other
/// token either starts a word or carries the `##` continuation prefix.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    min_freq: u64,
    target_size: usize,
}

impl Vocabulary {
    /// Build a vocabulary from content tokens; the specials are prepended.
    pub fn new(content_tokens: &[&str]) -> Result<Self> {
        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        tokens.extend(content_tokens.iter().map(|s| s.to_string()));
        Self::from_token_list(tokens, 0, 0)
    }

    /// Build from a full token list whose first five entries must be the
    /// special tokens (the on-disk and checkpoint representation).
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        Self::from_token_list(tokens, 0, 0)
    }

    fn from_token_list(tokens: Vec<String>, min_freq: u64, target_size: usize) -> Result<Self> {
        for (i, special) in SPECIAL_TOKENS.iter().enumerate() {
            if tokens.get(i).map(|t| t.as_str()) != Some(*special) {
                return Err(Error::Vocab(format!(
                    "token {i} must be {special}, found {:?}",
                    tokens.get(i)
                )));
            }
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if i >= SPECIAL_TOKENS.len() {
                let body = tok.strip_prefix(CONTINUATION_PREFIX).unwrap_or(tok);
                if body.is_empty() {
                    return Err(Error::Vocab(format!("empty token at id {i}")));
                }
            }
            if ids.insert(tok.clone(), i as u32).is_some() {
                return Err(Error::Vocab(format!("duplicate token `{tok}`")));
            }
        }
        Ok(Vocabulary { tokens, ids, min_freq, target_size })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the specials are always present
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.contains_key(token)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(|s| s.as_str())
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_special(id: u32) -> bool {
        (id as usize) < SPECIAL_TOKENS.len()
    }

    pub fn min_freq(&self) -> u64 {
        self.min_freq
    }

    pub fn target_size(&self) -> usize {
        self.target_size
    }

    /// One token per line, line number = id, specials first.
    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::fs::File::create(path)?;
        for tok in &self.tokens {
            writeln!(out, "{tok}")?;
        }
        Ok(())
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut tokens = Vec::new();
        for line in BufReader::new(file).lines() {
            tokens.push(line?);
        }
        Self::from_token_list(tokens, 0, 0)
    }
}

/// Split on Unicode whitespace, then isolate each non-alphanumeric
/// character as its own piece.
pub fn pre_tokenize(text: &str) -> Vec<String> {
    let mut words = Vec::new();
    for chunk in text.split_whitespace() {
        let mut current = String::new();
        for ch in chunk.chars() {
            if ch.is_alphanumeric() {
                current.push(ch);
            } else {
                if !current.is_empty() {
                    words.push(std::mem::take(&mut current));
                }
                words.push(ch.to_string());
            }
        }
        if !current.is_empty() {
            words.push(current);
        }
    }
    words
}

/// Train a WordPiece vocabulary from document strings.
///
/// An empty corpus yields the specials-only vocabulary.
pub fn train_wordpiece<I, S>(docs: I, target_size: usize, min_freq: u64) -> Result<Vocabulary>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if target_size <= SPECIAL_TOKENS.len() {
        return Err(Error::invalid(format!(
            "target_size must exceed {}",
            SPECIAL_TOKENS.len()
        )));
    }

    // Distinct-word counts, sorted for deterministic symbol interning.
    let mut word_counts: HashMap<String, u64> = HashMap::new();
    for doc in docs {
        for word in pre_tokenize(doc.as_ref()) {
            if word.chars().count() <= MAX_WORD_CHARS {
                *word_counts.entry(word).or_default() += 1;
            }
        }
    }
    let mut words: Vec<(String, u64)> = word_counts.into_iter().collect();
    words.sort();

    // Character alphabet in word-initial and continuation form.
    let mut interner = SymbolInterner::default();
    let mut char_freq: HashMap<usize, u64> = HashMap::new();
    let mut segmented: Vec<(Vec<usize>, u64)> = Vec::new();
    for (word, count) in &words {
        let mut syms = Vec::new();
        for (i, ch) in word.chars().enumerate() {
            let sym = if i == 0 {
                interner.intern(&ch.to_string())
            } else {
                interner.intern(&format!("{CONTINUATION_PREFIX}{ch}"))
            };
            *char_freq.entry(sym).or_default() += count;
            syms.push(sym);
        }
        segmented.push((syms, *count));
    }

    // Alphabet symbols below min_freq map to UNK: drop every word that
    // contains one, since it can never be segmented.
    let admitted: Vec<bool> = (0..interner.len())
        .map(|s| char_freq.get(&s).copied().unwrap_or(0) >= min_freq)
        .collect();
    segmented.retain(|(syms, _)| syms.iter().all(|&s| admitted[s]));

    // Alphabet section: most frequent first, then lexicographic.
    let mut alphabet: Vec<usize> = (0..interner.len()).filter(|&s| admitted[s]).collect();
    alphabet.sort_by(|&a, &b| {
        char_freq[&b]
            .cmp(&char_freq[&a])
            .then_with(|| interner.name(a).cmp(interner.name(b)))
    });
    let capacity = target_size - SPECIAL_TOKENS.len();
    alphabet.truncate(capacity);
    let kept: std::collections::HashSet<usize> = alphabet.iter().copied().collect();
    segmented.retain(|(syms, _)| syms.iter().all(|s| kept.contains(s)));

    let mut vocab_syms: Vec<usize> = alphabet.clone();

    // Iterative pair merging.
    while vocab_syms.len() < capacity {
        let mut sym_freq: HashMap<usize, u64> = HashMap::new();
        let mut pair_freq: HashMap<(usize, usize), u64> = HashMap::new();
        for (syms, count) in &segmented {
            for &s in syms {
                *sym_freq.entry(s).or_default() += count;
            }
            for pair in syms.windows(2) {
                *pair_freq.entry((pair[0], pair[1])).or_default() += count;
            }
        }

        let mut best: Option<((usize, usize), u64, f64)> = None;
        for (&pair, &freq) in &pair_freq {
            if freq < min_freq {
                continue;
            }
            let score = freq as f64 / (sym_freq[&pair.0] as f64 * sym_freq[&pair.1] as f64);
            let better = match &best {
                None => true,
                Some((best_pair, best_freq, best_score)) => {
                    let key = |p: &(usize, usize)| {
                        (interner.name(p.0).to_string(), interner.name(p.1).to_string())
                    };
                    score > *best_score
                        || (score == *best_score && freq > *best_freq)
                        || (score == *best_score && freq == *best_freq && key(&pair) < key(best_pair))
                }
            };
            if better {
                best = Some((pair, freq, score));
            }
        }
        let Some(((left, right), _, _)) = best else { break };

        let right_name = interner.name(right);
        let merged_name = format!(
            "{}{}",
            interner.name(left),
            right_name.strip_prefix(CONTINUATION_PREFIX).unwrap_or(right_name)
        );
        let merged = interner.intern(&merged_name);
        vocab_syms.push(merged);

        for (syms, _) in segmented.iter_mut() {
            let mut out = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == left && syms[i + 1] == right {
                    out.push(merged);
                    i += 2;
                } else {
                    out.push(syms[i]);
                    i += 1;
                }
            }
            *syms = out;
        }
    }

    let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
    tokens.extend(vocab_syms.iter().map(|&s| interner.name(s).to_string()));
    Vocabulary::from_token_list(tokens, min_freq, target_size)
}

#[derive(Default)]
struct SymbolInterner {
    names: Vec<String>,
    ids: HashMap<String, usize>,
}

impl SymbolInterner {
    fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_string());
        self.ids.insert(name.to_string(), id);
        id
    }

    fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    fn len(&self) -> usize {
        self.names.len()
    }
}

/// Greedy longest-match-first segmentation of one pre-tokenized word.
/// Returns `None` when the word cannot be segmented (caller emits UNK).
fn segment_word(word: &str, vocab: &Vocabulary) -> Option<Vec<u32>> {
    let chars: Vec<char> = word.chars().collect();
    if chars.is_empty() || chars.len() > MAX_WORD_CHARS {
        return None;
    }
    let mut pieces = Vec::new();
    let mut pos = 0;
    while pos < chars.len() {
        let mut matched = None;
        for end in (pos + 1..=chars.len()).rev() {
            let body: String = chars[pos..end].iter().collect();
            let candidate = if pos == 0 {
                body
            } else {
                format!("{CONTINUATION_PREFIX}{body}")
            };
            if let Some(id) = vocab.id_of(&candidate) {
                matched = Some((id, end));
                break;
            }
        }
        match matched {
            Some((id, end)) => {
                pieces.push(id);
                pos = end;
            }
            None => return None,
        }
    }
    Some(pieces)
}

/// Tokenize text into sub-word token strings. A word that cannot be
/// segmented becomes a single `[UNK]`; pieces and UNK never mix within
/// one word.
pub fn tokenize(text: &str, vocab: &Vocabulary) -> Vec<String> {
    encode(text, vocab)
        .into_iter()
        .map(|id| vocab.token(id).expect("id from this vocab").to_string())
        .collect()
}

/// Tokenize text into ids.
pub fn encode(text: &str, vocab: &Vocabulary) -> Vec<u32> {
    let mut ids = Vec::new();
    for word in pre_tokenize(text) {
        match segment_word(&word, vocab) {
            Some(pieces) => ids.extend(pieces),
            None => ids.push(UNK_ID),
        }
    }
    ids
}

/// Token ids for one word, UNK fallback included.
pub fn encode_word(word: &str, vocab: &Vocabulary) -> Vec<u32> {
    segment_word(word, vocab).unwrap_or_else(|| vec![UNK_ID])
}

/// Reassemble a word from its pieces by stripping continuation prefixes.
pub fn detokenize_word(pieces: &[String]) -> String {
    let mut out = String::new();
    for p in pieces {
        out.push_str(p.strip_prefix(CONTINUATION_PREFIX).unwrap_or(p));
    }
    out
}

/// Pack tokenized documents into fixed-length MLM training sequences.
///
/// Every sequence is exactly `seq_len` ids: `[CLS]`, up to `seq_len - 2`
/// content ids, `[SEP]`, then PAD. Blocks never straddle a document
/// boundary; empty documents produce no sequences.
pub fn build_mlm_sequences<I, S>(docs: I, vocab: &Vocabulary, seq_len: usize) -> Result<Vec<Vec<u32>>>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if seq_len < 8 {
        return Err(Error::invalid("seq_len must be at least 8"));
    }
    let content = seq_len - 2;
    let mut sequences = Vec::new();
    for doc in docs {
        let ids = encode(doc.as_ref(), vocab);
        for chunk in ids.chunks(content) {
            let mut seq = Vec::with_capacity(seq_len);
            seq.push(CLS_ID);
            seq.extend_from_slice(chunk);
            seq.push(SEP_ID);
            seq.resize(seq_len, PAD_ID);
            sequences.push(seq);
        }
    }
    Ok(sequences)
}
