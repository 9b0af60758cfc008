//! Treebank and corpus ingestion: CoNLL-U parsing, dev/test splits,
//! size-limited corpus subsets, and sub-word-aligned supervision.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tokenizer::{self, Vocabulary, CLS_ID, PAD_ID, SEP_ID};
use crate::{Error, Result};

/// Label value marking positions excluded from loss and evaluation.
pub const IGNORE_LABEL: i64 = -1;

pub type TagId = usize;

/// The POS tag inventory, loaded from a config file listing exactly 16
/// tags. The shipped default is the Universal Dependencies UPOS set
/// without SYM; swap the file to change which 16 tags apply.
#[derive(Clone, Debug, PartialEq)]
pub struct TagSet {
    names: Vec<String>,
    ids: HashMap<String, TagId>,
}

pub const TAG_COUNT: usize = 16;

impl TagSet {
    /// The embedded default inventory.
    pub fn default16() -> Self {
        Self::from_lines(include_str!("../config/upos16.txt")).expect("embedded tag file is valid")
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_lines(&std::fs::read_to_string(path)?)
    }

    fn from_lines(text: &str) -> Result<Self> {
        let names: Vec<String> = text
            .lines()
            .map(|l| l.trim().to_string())
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect();
        if names.len() != TAG_COUNT {
            return Err(Error::Config(format!(
                "tag set must list exactly {TAG_COUNT} tags, found {}",
                names.len()
            )));
        }
        let mut ids = HashMap::new();
        for (i, name) in names.iter().enumerate() {
            if ids.insert(name.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate tag `{name}`")));
            }
        }
        Ok(TagSet { names, ids })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id_of(&self, name: &str) -> Option<TagId> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: TagId) -> Option<&str> {
        self.names.get(id).map(|s| s.as_str())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Words with their UPOS tags; the unit of fine-tuning and evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct TaggedSentence {
    pub words: Vec<String>,
    pub upos: Vec<TagId>,
}

impl TaggedSentence {
    pub fn new(words: Vec<String>, upos: Vec<TagId>) -> Result<Self> {
        if words.len() != upos.len() {
            return Err(Error::invalid(format!(
                "{} words but {} tags",
                words.len(),
                upos.len()
            )));
        }
        Ok(TaggedSentence { words, upos })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Parse CoNLL-U text: FORM and UPOS columns of simple token lines.
///
/// Comment lines, multiword-token ranges (`1-2`) and empty nodes (`5.1`)
/// are skipped; blank lines delimit sentences.
pub fn parse_conllu(text: &str, tags: &TagSet) -> Result<Vec<TaggedSentence>> {
    let mut sentences = Vec::new();
    let mut words = Vec::new();
    let mut upos = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.trim_end_matches(['\r']);
        if line.is_empty() {
            if !words.is_empty() {
                sentences.push(TaggedSentence::new(std::mem::take(&mut words), std::mem::take(&mut upos))?);
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            // Multiword-token range or empty node: carries no UPOS of its own.
            continue;
        }
        if id.parse::<u64>().is_err() {
            return Err(Error::Parse {
                line: lineno,
                message: format!("invalid token id `{id}`"),
            });
        }
        let form = cols[1];
        let tag_name = cols[3];
        let Some(tag) = tags.id_of(tag_name) else {
            return Err(Error::Parse {
                line: lineno,
                message: format!("unknown UPOS `{tag_name}`"),
            });
        };
        words.push(form.to_string());
        upos.push(tag);
    }
    if !words.is_empty() {
        sentences.push(TaggedSentence::new(words, upos)?);
    }
    Ok(sentences)
}

pub fn parse_conllu_file(path: impl AsRef<Path>, tags: &TagSet) -> Result<Vec<TaggedSentence>> {
    parse_conllu(&std::fs::read_to_string(path)?, tags)
}

/// Serialize sentences back to CoNLL-U (unused columns as `_`).
pub fn write_conllu(sentences: &[TaggedSentence], tags: &TagSet) -> String {
    let mut out = String::new();
    for sentence in sentences {
        for (i, (word, &tag)) in sentence.words.iter().zip(&sentence.upos).enumerate() {
            let tag_name = tags.name(tag).unwrap_or("X");
            out.push_str(&format!(
                "{}\t{}\t_\t{}\t_\t_\t_\t_\t_\t_\n",
                i + 1,
                word,
                tag_name
            ));
        }
        out.push('\n');
    }
    out
}

/// Deterministic dev/test split: seeded shuffle, first ⌈frac·N⌉ to dev.
pub fn split_dev_test(
    sentences: &[TaggedSentence],
    dev_fraction: f64,
    seed: u64,
) -> Result<(Vec<TaggedSentence>, Vec<TaggedSentence>)> {
    if sentences.is_empty() {
        return Err(Error::EmptyInput("split_dev_test on an empty treebank".into()));
    }
    if !(0.0..=1.0).contains(&dev_fraction) {
        return Err(Error::invalid("dev_fraction must be within [0, 1]"));
    }
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let dev_n = (dev_fraction * sentences.len() as f64).ceil() as usize;
    let dev = order[..dev_n].iter().map(|&i| sentences[i].clone()).collect();
    let test = order[dev_n..].iter().map(|&i| sentences[i].clone()).collect();
    Ok((dev, test))
}

#[derive(Clone, Debug)]
pub struct Document {
    pub id: String,
    pub text: String,
}

/// A plain-text corpus: one document per file (directory input, files
/// sorted by name) or blank-line-delimited documents (single file).
#[derive(Clone, Debug)]
pub struct Corpus {
    pub source: String,
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn from_documents(source: impl Into<String>, documents: Vec<Document>) -> Self {
        Corpus { source: source.into(), documents }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let source = path.display().to_string();
        if path.is_dir() {
            let mut files: Vec<_> = std::fs::read_dir(path)?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.is_file())
                .collect();
            files.sort();
            let mut documents = Vec::new();
            for file in files {
                let id = file
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default();
                documents.push(Document { id, text: std::fs::read_to_string(&file)? });
            }
            Ok(Corpus { source, documents })
        } else {
            let text = std::fs::read_to_string(path)?;
            let documents = text
                .split("\n\n")
                .map(|d| d.trim())
                .filter(|d| !d.is_empty())
                .enumerate()
                .map(|(i, d)| Document { id: format!("doc{i:06}"), text: d.to_string() })
                .collect();
            Ok(Corpus { source, documents })
        }
    }

    pub fn total_bytes(&self) -> u64 {
        self.documents.iter().map(|d| d.text.len() as u64).sum()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.documents.iter().map(|d| d.text.as_str())
    }
}

/// A seeded, size-limited selection of corpus documents.
#[derive(Clone, Debug)]
pub struct CorpusSubset {
    pub source: String,
    pub size_bytes: u64,
    pub seed: u64,
    pub indices: Vec<usize>,
    pub doc_ids: Vec<String>,
    pub realized_bytes: u64,
}

impl CorpusSubset {
    pub fn texts<'c>(&self, corpus: &'c Corpus) -> Vec<&'c str> {
        self.indices.iter().map(|&i| corpus.documents[i].text.as_str()).collect()
    }

    /// Line-oriented manifest of document ids, for provenance.
    pub fn manifest(&self) -> String {
        let mut out = String::new();
        for id in &self.doc_ids {
            out.push_str(id);
            out.push('\n');
        }
        out
    }
}

/// Megabytes are decimal: 1 MB = 1,000,000 UTF-8 bytes of raw text.
pub const BYTES_PER_MB: f64 = 1_000_000.0;

/// Draw documents without replacement in seeded-shuffle order until the
/// byte budget is reached. The first document that would overshoot is
/// included when the overshoot stays below 2% of the budget, otherwise
/// selection stops before it. A budget at or above the corpus size
/// returns the whole corpus. Subsets at growing budgets under one seed
/// nest, since they are prefixes of the same shuffle.
pub fn sample_subset(corpus: &Corpus, size_mb: f64, seed: u64) -> Result<CorpusSubset> {
    if size_mb <= 0.0 {
        return Err(Error::invalid("size_mb must be positive"));
    }
    let budget = (size_mb * BYTES_PER_MB).round() as u64;
    let total = corpus.total_bytes();
    if budget >= total {
        let indices: Vec<usize> = (0..corpus.documents.len()).collect();
        return Ok(CorpusSubset {
            source: corpus.source.clone(),
            size_bytes: budget,
            seed,
            doc_ids: corpus.documents.iter().map(|d| d.id.clone()).collect(),
            indices,
            realized_bytes: total,
        });
    }

    let mut order: Vec<usize> = (0..corpus.documents.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut selected = Vec::new();
    let mut realized = 0u64;
    for &idx in &order {
        if realized >= budget {
            break;
        }
        let len = corpus.documents[idx].text.len() as u64;
        if realized + len <= budget {
            selected.push(idx);
            realized += len;
        } else {
            let overshoot = realized + len - budget;
            if (overshoot as f64) < 0.02 * budget as f64 {
                selected.push(idx);
                realized += len;
            }
            break;
        }
    }
    let doc_ids = selected.iter().map(|&i| corpus.documents[i].id.clone()).collect();
    Ok(CorpusSubset {
        source: corpus.source.clone(),
        size_bytes: budget,
        seed,
        indices: selected,
        doc_ids,
        realized_bytes: realized,
    })
}

/// One fixed-length model input window with per-position labels.
///
/// `ids` is exactly `seq_len` long; `labels[i]` is the word's tag at its
/// first sub-word and [`IGNORE_LABEL`] on continuations, CLS, SEP and PAD.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedWindow {
    pub ids: Vec<u32>,
    pub labels: Vec<i64>,
}

/// Tokenize a tagged sentence and attach each word's label to its first
/// sub-word. Sentences longer than one window split at word boundaries;
/// a single word longer than a window is truncated to fit, keeping its
/// first (labeled) piece.
pub fn align_subword_labels(
    sentence: &TaggedSentence,
    vocab: &Vocabulary,
    seq_len: usize,
) -> Result<Vec<AlignedWindow>> {
    if sentence.is_empty() {
        return Err(Error::EmptyInput("align_subword_labels on an empty sentence".into()));
    }
    if seq_len < 8 {
        return Err(Error::invalid("seq_len must be at least 8"));
    }
    let capacity = seq_len - 2;
    let mut windows = Vec::new();
    let mut ids: Vec<u32> = Vec::new();
    let mut labels: Vec<i64> = Vec::new();

    let flush = |ids: &mut Vec<u32>, labels: &mut Vec<i64>, windows: &mut Vec<AlignedWindow>| {
        if ids.is_empty() {
            return;
        }
        let mut w_ids = Vec::with_capacity(seq_len);
        let mut w_labels = Vec::with_capacity(seq_len);
        w_ids.push(CLS_ID);
        w_labels.push(IGNORE_LABEL);
        w_ids.append(ids);
        w_labels.append(labels);
        w_ids.push(SEP_ID);
        w_labels.push(IGNORE_LABEL);
        w_ids.resize(seq_len, PAD_ID);
        w_labels.resize(seq_len, IGNORE_LABEL);
        windows.push(AlignedWindow { ids: w_ids, labels: w_labels });
    };

    for (word, &tag) in sentence.words.iter().zip(&sentence.upos) {
        let mut pieces = tokenizer::encode_word(word, vocab);
        pieces.truncate(capacity);
        if ids.len() + pieces.len() > capacity {
            flush(&mut ids, &mut labels, &mut windows);
        }
        labels.push(tag as i64);
        labels.extend(std::iter::repeat(IGNORE_LABEL).take(pieces.len() - 1));
        ids.extend(pieces);
    }
    flush(&mut ids, &mut labels, &mut windows);
    Ok(windows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tags() -> TagSet {
        TagSet::default16()
    }

    #[test]
    fn default_tagset_has_sixteen_tags() {
        let t = tags();
        assert_eq!(t.len(), 16);
        assert!(t.id_of("NOUN").is_some());
        assert!(t.id_of("VERB").is_some());
        assert!(t.id_of("SYM").is_none());
    }

    #[test]
    fn parse_two_token_sentence() {
        let text = "# sent_id = 1\n\
                    1\tcats\t_\tNOUN\t_\t_\t_\t_\t_\t_\n\
                    2\tsleep\t_\tVERB\t_\t_\t_\t_\t_\t_\n\n";
        let sentences = parse_conllu(text, &tags()).unwrap();
        assert_eq!(sentences.len(), 1);
        assert_eq!(sentences[0].words, vec!["cats", "sleep"]);
        assert_eq!(
            sentences[0].upos,
            vec![tags().id_of("NOUN").unwrap(), tags().id_of("VERB").unwrap()]
        );
    }

    #[test]
    fn comments_only_file_is_empty() {
        let text = "# a comment\n# another\n";
        assert!(parse_conllu(text, &tags()).unwrap().is_empty());
    }

    #[test]
    fn range_lines_are_skipped_but_parts_kept() {
        let text = "3-4\tdel\t_\t_\t_\t_\t_\t_\t_\t_\n\
                    3\tde\t_\tADP\t_\t_\t_\t_\t_\t_\n\
                    4\tel\t_\tDET\t_\t_\t_\t_\t_\t_\n\n";
        let sentences = parse_conllu(text, &tags()).unwrap();
        assert_eq!(sentences[0].words, vec!["de", "el"]);
    }

    #[test]
    fn empty_node_ids_are_skipped() {
        let text = "1\tok\t_\tADV\t_\t_\t_\t_\t_\t_\n\
                    5.1\tghost\t_\t_\t_\t_\t_\t_\t_\t_\n\n";
        let sentences = parse_conllu(text, &tags()).unwrap();
        assert_eq!(sentences[0].words, vec!["ok"]);
    }

    #[test]
    fn malformed_column_count_reports_line() {
        let text = "1\tword\tNOUN\n";
        let err = parse_conllu(text, &tags()).unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 1);
                assert!(message.contains("10"));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn unknown_upos_is_an_error() {
        let text = "1\tword\t_\tBLORP\t_\t_\t_\t_\t_\t_\n";
        let err = parse_conllu(text, &tags()).unwrap_err();
        assert!(err.to_string().contains("BLORP"));
    }

    #[test]
    fn parse_of_serialize_is_identity() {
        let t = tags();
        let sentences = vec![
            TaggedSentence::new(
                vec!["Big".into(), "cats".into(), "sleep".into(), ".".into()],
                vec![
                    t.id_of("ADJ").unwrap(),
                    t.id_of("NOUN").unwrap(),
                    t.id_of("VERB").unwrap(),
                    t.id_of("PUNCT").unwrap(),
                ],
            )
            .unwrap(),
            TaggedSentence::new(vec!["Ja".into()], vec![t.id_of("INTJ").unwrap()]).unwrap(),
        ];
        let round = parse_conllu(&write_conllu(&sentences, &t), &t).unwrap();
        assert_eq!(round, sentences);
    }

    #[test]
    fn split_ratios_and_determinism() {
        let t = tags();
        let sentences: Vec<TaggedSentence> = (0..1000)
            .map(|i| {
                TaggedSentence::new(vec![format!("w{i}")], vec![t.id_of("NOUN").unwrap()]).unwrap()
            })
            .collect();
        let (dev, test) = split_dev_test(&sentences, 0.25, 7).unwrap();
        assert_eq!(dev.len(), 250);
        assert_eq!(test.len(), 750);
        let (dev2, test2) = split_dev_test(&sentences, 0.25, 7).unwrap();
        assert_eq!(dev, dev2);
        assert_eq!(test, test2);
        // Disjoint and exhaustive.
        let mut all: Vec<&str> = dev.iter().chain(&test).map(|s| s.words[0].as_str()).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 1000);
    }

    #[test]
    fn split_single_sentence_goes_to_dev() {
        let t = tags();
        let s = vec![TaggedSentence::new(vec!["x".into()], vec![t.id_of("X").unwrap()]).unwrap()];
        let (dev, test) = split_dev_test(&s, 0.25, 1).unwrap();
        assert_eq!(dev.len(), 1);
        assert!(test.is_empty());
        assert!(split_dev_test(&[], 0.25, 1).is_err());
    }

    fn corpus_of_kb_docs(n: usize) -> Corpus {
        let documents = (0..n)
            .map(|i| Document {
                id: format!("d{i}"),
                // Exactly 1000 bytes of ASCII.
                text: format!("{i:06}").chars().cycle().take(1000).collect(),
            })
            .collect();
        Corpus::from_documents("synthetic", documents)
    }

    #[test]
    fn subset_clamps_to_full_corpus() {
        let corpus = corpus_of_kb_docs(43_000); // 43 MB
        let subset = sample_subset(&corpus, 100.0, 3).unwrap();
        assert_eq!(subset.indices.len(), 43_000);
        assert_eq!(subset.realized_bytes, corpus.total_bytes());
    }

    #[test]
    fn subset_is_deterministic() {
        let corpus = corpus_of_kb_docs(2_000);
        let a = sample_subset(&corpus, 1.0, 7).unwrap();
        let b = sample_subset(&corpus, 1.0, 7).unwrap();
        assert_eq!(a.indices, b.indices);
    }

    #[test]
    fn subset_hits_budget_within_two_percent() {
        let corpus = corpus_of_kb_docs(40_000); // 40 MB of 1KB docs
        let subset = sample_subset(&corpus, 10.0, 11).unwrap();
        let mb = subset.realized_bytes as f64 / BYTES_PER_MB;
        assert!((9.8..=10.2).contains(&mb), "realized {mb} MB");
    }

    #[test]
    fn subsets_nest_under_one_seed() {
        let corpus = corpus_of_kb_docs(6_000);
        let small = sample_subset(&corpus, 1.0, 5).unwrap();
        let large = sample_subset(&corpus, 5.0, 5).unwrap();
        let large_set: std::collections::HashSet<_> = large.indices.iter().collect();
        for idx in &small.indices {
            assert!(large_set.contains(idx));
        }
    }

    #[test]
    fn align_first_subword_gets_the_label() {
        let vocab = Vocabulary::new(&["ab", "##c", "x"]).unwrap();
        let t = tags();
        let noun = t.id_of("NOUN").unwrap();
        let s = TaggedSentence::new(vec!["abc".into()], vec![noun]).unwrap();
        let windows = align_subword_labels(&s, &vocab, 8).unwrap();
        assert_eq!(windows.len(), 1);
        let w = &windows[0];
        assert_eq!(w.ids[0], CLS_ID);
        assert_eq!(w.labels[0], IGNORE_LABEL);
        assert_eq!(w.labels[1], noun as i64); // "ab"
        assert_eq!(w.labels[2], IGNORE_LABEL); // "##c"
    }

    #[test]
    fn align_single_piece_words_have_no_content_ignores() {
        let vocab = Vocabulary::new(&["a", "b"]).unwrap();
        let t = tags();
        let s = TaggedSentence::new(
            vec!["a".into(), "b".into()],
            vec![t.id_of("DET").unwrap(), t.id_of("NOUN").unwrap()],
        )
        .unwrap();
        let windows = align_subword_labels(&s, &vocab, 8).unwrap();
        let w = &windows[0];
        let content_labels: Vec<i64> = w.labels[1..3].to_vec();
        assert!(content_labels.iter().all(|&l| l != IGNORE_LABEL));
    }

    #[test]
    fn align_empty_sentence_is_an_error() {
        let vocab = Vocabulary::new(&["a"]).unwrap();
        let s = TaggedSentence { words: vec![], upos: vec![] };
        assert!(align_subword_labels(&s, &vocab, 8).is_err());
    }

    #[test]
    fn align_splits_long_sentences_at_word_boundaries() {
        let vocab = Vocabulary::new(&["aa", "##aa"]).unwrap();
        let t = tags();
        let noun = t.id_of("NOUN").unwrap();
        // Each word is two pieces; capacity 6 fits three words.
        let s = TaggedSentence::new(
            (0..5).map(|_| "aaaa".to_string()).collect(),
            vec![noun; 5],
        )
        .unwrap();
        let windows = align_subword_labels(&s, &vocab, 8).unwrap();
        assert_eq!(windows.len(), 2);
        let labeled: usize = windows
            .iter()
            .flat_map(|w| &w.labels)
            .filter(|&&l| l != IGNORE_LABEL)
            .count();
        assert_eq!(labeled, 5, "each word labeled exactly once");
        for w in &windows {
            assert_eq!(w.ids.len(), 8);
        }
    }

    proptest! {
        /// Conservation: non-ignored label positions equal the word count
        /// when the sentence fits one window.
        #[test]
        fn alignment_conserves_word_count(n_words in 1usize..6) {
            let vocab = Vocabulary::new(&["a", "##a"]).unwrap();
            let t = TagSet::default16();
            let noun = t.id_of("NOUN").unwrap();
            let s = TaggedSentence::new(
                (0..n_words).map(|_| "aa".to_string()).collect(),
                vec![noun; n_words],
            ).unwrap();
            let windows = align_subword_labels(&s, &vocab, 32).unwrap();
            prop_assert_eq!(windows.len(), 1);
            let labeled = windows[0].labels.iter().filter(|&&l| l != IGNORE_LABEL).count();
            prop_assert_eq!(labeled, n_words);
        }
    }
}
