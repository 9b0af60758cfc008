//! Seeded synthetic-language generator for tests and demos.
//!
//! A family of small Germanic-flavored languages sharing one underlying
//! lexicon. Each member applies a character cipher to a fraction of the
//! alphabet (rewriting lowercase letters to uppercase substitutes, so
//! ciphered and plain surface forms never collide) and diverges in word
//! order with a configurable probability. Higher cipher rates raise the
//! lexical-phonetic distance to the base language, and the order knob
//! raises syntactic divergence, so pairs of members make controllable
//! transfer-learning test beds: tag inventories agree, difficulty is
//! dialed by the two rates.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::collections::HashMap;

use crate::data::{Corpus, Document, TagSet, TaggedSentence};
use crate::langdist::WordList;

const ALPHABET: [char; 18] = [
    'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i', 'j', 'k', 'l', 'm', 'n', 'o', 'p', 'q', 'r',
];
const VOWELS: [char; 4] = ['a', 'e', 'i', 'o'];
const CONSONANTS: [char; 14] = ['b', 'c', 'd', 'f', 'g', 'h', 'j', 'k', 'l', 'm', 'n', 'p', 'q', 'r'];

/// Fixed seed of the shared lexicon; every language derives from it.
const LEXICON_SEED: u64 = 0xBA5E;
/// Fixed seed of the cipher ordering, shared so cipher sets nest.
const CIPHER_SEED: u64 = 0xC1F3;

struct Lexicon {
    nouns: Vec<String>,
    verbs: Vec<String>,
    adjs: Vec<String>,
    advs: Vec<String>,
    dets: Vec<String>,
    adps: Vec<String>,
    prons: Vec<String>,
    puncts: Vec<String>,
    /// Forms used both as nouns and verbs; context decides the tag.
    ambiguous: Vec<String>,
}

fn syllable(rng: &mut ChaCha8Rng) -> String {
    let c = CONSONANTS[rng.gen_range(0..CONSONANTS.len())];
    let v = VOWELS[rng.gen_range(0..VOWELS.len())];
    format!("{c}{v}")
}

fn stem(rng: &mut ChaCha8Rng) -> String {
    let mut s = syllable(rng);
    if rng.gen_bool(0.5) {
        s.push_str(&syllable(rng));
    } else {
        s.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())]);
    }
    s
}

fn class_words(
    rng: &mut ChaCha8Rng,
    n: usize,
    suffix: &str,
    taken: &mut std::collections::HashSet<String>,
) -> Vec<String> {
    let mut words = Vec::new();
    while words.len() < n {
        let w = format!("{}{}", stem(rng), suffix);
        if taken.insert(w.clone()) {
            words.push(w);
        }
    }
    words
}

fn base_lexicon() -> Lexicon {
    let mut rng = ChaCha8Rng::seed_from_u64(LEXICON_SEED);
    let mut taken: std::collections::HashSet<String> = std::collections::HashSet::new();
    for w in ["ta", "le", "mi", "en", "po", "ka", "vo", "se", "ni"] {
        taken.insert(w.to_string());
    }
    let nouns = class_words(&mut rng, 24, "ma", &mut taken);
    let verbs = class_words(&mut rng, 16, "ir", &mut taken);
    let adjs = class_words(&mut rng, 10, "ne", &mut taken);
    let advs = class_words(&mut rng, 6, "go", &mut taken);
    let ambiguous = class_words(&mut rng, 4, "", &mut taken);
    Lexicon {
        nouns,
        verbs,
        adjs,
        advs,
        dets: vec!["ta".into(), "le".into(), "mi".into()],
        adps: vec!["en".into(), "po".into(), "ka".into()],
        prons: vec!["vo".into(), "se".into(), "ni".into()],
        puncts: vec![".".into(), "!".into()],
        ambiguous,
    }
}

/// Letters rewritten at a given rate: the first ⌈rate·18⌉ letters of a
/// fixed shuffle, so lower-rate cipher sets are subsets of higher-rate
/// ones. Each rewritten letter maps to the uppercase of the next
/// rewritten letter (cyclically), keeping the map a bijection.
fn cipher_map(rate: f64) -> HashMap<char, char> {
    let mut order: Vec<char> = ALPHABET.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(CIPHER_SEED);
    order.shuffle(&mut rng);
    let k = ((rate.clamp(0.0, 1.0)) * ALPHABET.len() as f64).round() as usize;
    let mut map = HashMap::new();
    for i in 0..k {
        let from = order[i];
        let to = order[(i + 1) % k.max(1)].to_ascii_uppercase();
        map.insert(from, to);
    }
    map
}

fn apply_cipher(word: &str, map: &HashMap<char, char>) -> String {
    word.chars().map(|c| *map.get(&c).unwrap_or(&c)).collect()
}

/// One member of the synthetic family.
#[derive(Clone, Debug)]
pub struct SynthLanguage {
    pub name: String,
    /// Fraction of the alphabet rewritten by the character cipher.
    pub cipher_rate: f64,
    /// Probability of divergent word-order constructions per clause.
    pub reorder_prob: f64,
}

impl SynthLanguage {
    pub fn new(name: impl Into<String>, cipher_rate: f64, reorder_prob: f64) -> Self {
        SynthLanguage { name: name.into(), cipher_rate, reorder_prob }
    }

    fn render(&self, word: &str) -> String {
        apply_cipher(word, &cipher_map(self.cipher_rate))
    }

    /// One sentence as (word, tag-name) pairs.
    fn sentence(&self, lex: &Lexicon, rng: &mut ChaCha8Rng) -> Vec<(String, &'static str)> {
        let cipher = cipher_map(self.cipher_rate);
        let mut out: Vec<(String, &'static str)> = Vec::new();
        let pick = |rng: &mut ChaCha8Rng, words: &[String]| -> String {
            words[rng.gen_range(0..words.len())].clone()
        };

        let noun_phrase = |rng: &mut ChaCha8Rng, out: &mut Vec<(String, &'static str)>| {
            if rng.gen_bool(0.25) {
                out.push((pick(rng, &lex.prons), "PRON"));
                return;
            }
            out.push((pick(rng, &lex.dets), "DET"));
            let adj = rng.gen_bool(0.45).then(|| pick(rng, &lex.adjs));
            let noun = if rng.gen_bool(0.15) {
                pick(rng, &lex.ambiguous)
            } else {
                pick(rng, &lex.nouns)
            };
            match adj {
                // Divergent members favor noun-adjective order.
                Some(a) if rng.gen_bool(self.reorder_prob) => {
                    out.push((noun, "NOUN"));
                    out.push((a, "ADJ"));
                }
                Some(a) => {
                    out.push((a, "ADJ"));
                    out.push((noun, "NOUN"));
                }
                None => out.push((noun, "NOUN")),
            }
        };

        noun_phrase(rng, &mut out);
        let verb = if rng.gen_bool(0.15) {
            pick(rng, &lex.ambiguous)
        } else {
            pick(rng, &lex.verbs)
        };
        let adv = rng.gen_bool(0.35).then(|| pick(rng, &lex.advs));
        let verb_final = rng.gen_bool(self.reorder_prob);
        let adv_first = rng.gen_bool(self.reorder_prob);
        if !verb_final {
            if let Some(a) = &adv {
                if adv_first {
                    out.push((a.clone(), "ADV"));
                    out.push((verb.clone(), "VERB"));
                } else {
                    out.push((verb.clone(), "VERB"));
                    out.push((a.clone(), "ADV"));
                }
            } else {
                out.push((verb.clone(), "VERB"));
            }
        }
        if rng.gen_bool(0.5) {
            out.push((pick(rng, &lex.adps), "ADP"));
            noun_phrase(rng, &mut out);
        }
        if verb_final {
            if let Some(a) = &adv {
                out.push((a.clone(), "ADV"));
            }
            out.push((verb, "VERB"));
        }
        out.push((pick(rng, &lex.puncts), "PUNCT"));

        out.into_iter().map(|(w, t)| (apply_cipher(&w, &cipher), t)).collect()
    }

    /// Plain-text corpus of `n_docs` documents.
    pub fn corpus(&self, n_docs: usize, sentences_per_doc: usize, seed: u64) -> Corpus {
        let lex = base_lexicon();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let documents = (0..n_docs)
            .map(|i| {
                let mut text = String::new();
                for s in 0..sentences_per_doc {
                    if s > 0 {
                        text.push(' ');
                    }
                    let words: Vec<String> =
                        self.sentence(&lex, &mut rng).into_iter().map(|(w, _)| w).collect();
                    text.push_str(&words.join(" "));
                }
                Document { id: format!("{}-{i:06}", self.name), text }
            })
            .collect();
        Corpus::from_documents(format!("synth:{}", self.name), documents)
    }

    /// Tagged sentences over the default 16-tag inventory.
    pub fn treebank(&self, n_sentences: usize, seed: u64, tags: &TagSet) -> Vec<TaggedSentence> {
        let lex = base_lexicon();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n_sentences)
            .map(|_| {
                let pairs = self.sentence(&lex, &mut rng);
                let (words, upos) = pairs
                    .into_iter()
                    .map(|(w, t)| (w, tags.id_of(t).expect("generator emits known tags")))
                    .unzip();
                TaggedSentence { words, upos }
            })
            .collect()
    }

    /// 40-concept word list: canonical content words under this
    /// language's cipher.
    pub fn word_list(&self) -> WordList {
        let lex = base_lexicon();
        let mut entries = BTreeMap::new();
        let concepts: Vec<&String> = lex
            .nouns
            .iter()
            .chain(&lex.verbs)
            .chain(&lex.adjs)
            .take(40)
            .collect();
        for (i, word) in concepts.into_iter().enumerate() {
            entries.insert((i + 1) as u8, vec![self.render(word)]);
        }
        WordList::new(self.name.clone(), entries).expect("generated lists are valid")
    }
}
