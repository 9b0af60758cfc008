//! Word-level POS accuracy, the data-size ablation harness, and report
//! tables.

pub mod svg;

use std::collections::BTreeMap;

use crate::data::{align_subword_labels, Corpus, TaggedSentence, IGNORE_LABEL};
use crate::model::{swap_lexical, Batch, LexicalLayer, TaggerModel, TransformerBody};
use crate::tokenizer::{build_mlm_sequences, Vocabulary};
use crate::training::{
    mix_seed, pretrain_lexical, select_checkpoint_combo, BodyCheckpoint, TrainConfig,
};
use crate::{Error, Result};

const EVAL_BATCH: usize = 32;

/// Counting core: fraction of words whose predicted tag equals gold.
pub fn word_accuracy(gold: &[usize], pred: &[usize]) -> Result<f64> {
    if gold.is_empty() || gold.len() != pred.len() {
        return Err(Error::invalid("word_accuracy needs equal, non-empty tag lists"));
    }
    let correct = gold.iter().zip(pred).filter(|(g, p)| g == p).count();
    Ok(correct as f64 / gold.len() as f64)
}

/// Count correct/total words in one window from its logits. Only
/// positions carrying a label (each word's first sub-word) are consulted;
/// predictions at continuation pieces never matter.
pub(crate) fn tally_window(logits: &[f32], labels: &[i64], n_tags: usize) -> (usize, usize) {
    let mut correct = 0;
    let mut total = 0;
    for (i, &label) in labels.iter().enumerate() {
        if label == IGNORE_LABEL {
            continue;
        }
        let row = &logits[i * n_tags..(i + 1) * n_tags];
        let mut best = 0usize;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        total += 1;
        if best == label as usize {
            correct += 1;
        }
    }
    (correct, total)
}

/// Word-level POS accuracy of a model over tagged sentences. Each word
/// counts once, judged by the prediction at its first sub-word; words in
/// split sentences are evaluated in their own window. Invariant to
/// sentence order and batching.
pub fn pos_accuracy(model: &TaggerModel, sentences: &[TaggedSentence]) -> Result<f64> {
    if sentences.is_empty() {
        return Err(Error::EmptyInput("pos_accuracy over zero sentences".into()));
    }
    let mut windows = Vec::new();
    for s in sentences {
        windows.extend(align_subword_labels(s, &model.vocab, model.config.seq_len)?);
    }
    let n_tags = model.config.n_tags;
    let mut correct = 0usize;
    let mut total = 0usize;
    for chunk in windows.chunks(EVAL_BATCH) {
        let seqs: Vec<Vec<u32>> = chunk.iter().map(|w| w.ids.clone()).collect();
        let batch = Batch::from_sequences(&seqs)?;
        let logits = model.forward_pos(&batch)?;
        let per_window = batch.seq * n_tags;
        for (w, window) in chunk.iter().enumerate() {
            let slice = &logits.data()[w * per_window..(w + 1) * per_window];
            let (c, t) = tally_window(slice, &window.labels, n_tags);
            correct += c;
            total += t;
        }
    }
    if total == 0 {
        return Err(Error::EmptyInput("no labeled words to evaluate".into()));
    }
    Ok(correct as f64 / total as f64)
}

/// Which lexical layer produced a result.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum LexicalVariant {
    Original,
    Retrained,
}

impl std::fmt::Display for LexicalVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LexicalVariant::Original => write!(f, "orig."),
            LexicalVariant::Retrained => write!(f, "retr."),
        }
    }
}

/// Unlabeled-data budget of an ablation point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SizeSpec {
    Mb(f64),
    Full,
}

impl SizeSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim().trim_end_matches("MB").trim_end_matches("mb");
        if t.eq_ignore_ascii_case("full") {
            return Ok(SizeSpec::Full);
        }
        t.parse::<f64>()
            .map(SizeSpec::Mb)
            .map_err(|_| Error::invalid(format!("bad size `{text}` (want a number or `full`)")))
    }

    fn sort_key(&self) -> f64 {
        match self {
            SizeSpec::Mb(mb) => *mb,
            SizeSpec::Full => f64::INFINITY,
        }
    }
}

impl std::fmt::Display for SizeSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SizeSpec::Mb(mb) => {
                if (mb - mb.round()).abs() < 1e-9 {
                    write!(f, "{}MB", mb.round() as i64)
                } else {
                    write!(f, "{mb}MB")
                }
            }
            SizeSpec::Full => write!(f, "full"),
        }
    }
}

/// One accuracy measurement.
#[derive(Clone, Debug)]
pub struct ResultRow {
    pub source_lang: String,
    pub base_model: String,
    pub treebank: String,
    pub target_lang: String,
    pub lexical_variant: LexicalVariant,
    pub subset_size: Option<SizeSpec>,
    pub accuracy: f64,
}

impl ResultRow {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.accuracy) {
            return Err(Error::invalid(format!("accuracy {} outside [0,1]", self.accuracy)));
        }
        Ok(())
    }
}

/// TSV round-trip for result rows ('.' decimal, UTF-8, tab-separated).
pub fn rows_to_tsv(rows: &[ResultRow]) -> String {
    let mut out = String::from(
        "source_lang\tbase_model\ttreebank\ttarget_lang\tlexical_variant\tsubset_size\taccuracy\n",
    );
    for r in rows {
        let size = r.subset_size.map(|s| s.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\n",
            r.source_lang, r.base_model, r.treebank, r.target_lang, r.lexical_variant, size, r.accuracy
        ));
    }
    out
}

pub fn rows_from_tsv(text: &str) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 7 {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("expected 7 columns, found {}", cols.len()),
            });
        }
        let variant = match cols[4] {
            "orig." => LexicalVariant::Original,
            "retr." => LexicalVariant::Retrained,
            other => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("unknown lexical variant `{other}`"),
                })
            }
        };
        let subset_size = if cols[5].is_empty() { None } else { Some(SizeSpec::parse(cols[5])?) };
        let accuracy: f64 = cols[6].parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            message: format!("bad accuracy `{}`", cols[6]),
        })?;
        let row = ResultRow {
            source_lang: cols[0].into(),
            base_model: cols[1].into(),
            treebank: cols[2].into(),
            target_lang: cols[3].into(),
            lexical_variant: variant,
            subset_size,
            accuracy,
        };
        row.validate()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Inputs for one ablation sweep over unlabeled-data budgets: a pristine
/// body for MLM retraining, the POS-fine-tuned body checkpoints to
/// combine with, and the target-language material.
pub struct AblationInputs<'a> {
    pub source_lang: &'a str,
    pub base_model: &'a str,
    pub treebank: &'a str,
    pub target_lang: &'a str,
    /// Body the lexical layer is retrained against (pre-task weights).
    pub pretrain_body: &'a TransformerBody,
    /// POS-fine-tuned body checkpoints, the combination grid's one side.
    pub body_checkpoints: &'a [BodyCheckpoint],
    pub target_corpus: &'a Corpus,
    pub target_vocab: &'a Vocabulary,
    pub target_dev: &'a [TaggedSentence],
    pub target_test: &'a [TaggedSentence],
    pub train_cfg: TrainConfig,
    pub grid_cap: usize,
    pub seed: u64,
}

/// Retrain the lexical layer on one sampled subset and score the best
/// checkpoint combination on the target test set.
pub fn run_ablation_point(inputs: &AblationInputs, size: SizeSpec) -> Result<ResultRow> {
    let mb = match size {
        SizeSpec::Mb(mb) => mb,
        SizeSpec::Full => f64::INFINITY,
    };
    let subset = if mb.is_finite() {
        crate::data::sample_subset(inputs.target_corpus, mb, inputs.seed)?
    } else {
        crate::data::sample_subset(
            inputs.target_corpus,
            inputs.target_corpus.total_bytes() as f64 / crate::data::BYTES_PER_MB + 1.0,
            inputs.seed,
        )?
    };
    let seq_len = inputs.pretrain_body.config.seq_len;
    let sequences =
        build_mlm_sequences(subset.texts(inputs.target_corpus), inputs.target_vocab, seq_len)?;
    // The fresh lexical layer and training stream depend only on the
    // master seed, so a budget covering the whole corpus reproduces the
    // non-ablated run exactly.
    let lexical = LexicalLayer::init(
        inputs.target_vocab.clone(),
        inputs.pretrain_body.config.hidden,
        mix_seed(inputs.seed, 0x1E81, 0),
    );
    let outcome = pretrain_lexical(inputs.pretrain_body, lexical, &sequences, &inputs.train_cfg)?;
    let combo = select_checkpoint_combo(
        &outcome.checkpoints,
        inputs.body_checkpoints,
        inputs.target_dev,
        inputs.grid_cap,
    )?;
    let model = swap_lexical(
        &inputs.body_checkpoints[combo.body_index].body,
        &outcome.checkpoints[combo.lexical_index].lexical,
    )?;
    let accuracy = pos_accuracy(&model, inputs.target_test)?;
    let size_label = match size {
        SizeSpec::Full => SizeSpec::Full,
        SizeSpec::Mb(mb) if subset.realized_bytes == inputs.target_corpus.total_bytes() => {
            // Budget at or above the corpus: same run as `full`.
            let _ = mb;
            SizeSpec::Full
        }
        other => other,
    };
    Ok(ResultRow {
        source_lang: inputs.source_lang.into(),
        base_model: inputs.base_model.into(),
        treebank: inputs.treebank.into(),
        target_lang: inputs.target_lang.into(),
        lexical_variant: LexicalVariant::Retrained,
        subset_size: Some(size_label),
        accuracy,
    })
}

/// The data-size ablation: one row per requested subset size.
pub fn run_ablation(inputs: &AblationInputs, sizes: &[SizeSpec]) -> Result<Vec<ResultRow>> {
    if sizes.is_empty() {
        return Err(Error::EmptyInput("ablation size list is empty".into()));
    }
    sizes.iter().map(|&size| run_ablation_point(inputs, size)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportLayout {
    Table1,
    Table2,
    Appendix,
}

impl ReportLayout {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "table1" => Ok(ReportLayout::Table1),
            "table2" => Ok(ReportLayout::Table2),
            "appendix" => Ok(ReportLayout::Appendix),
            other => Err(Error::invalid(format!(
                "unknown layout `{other}` (expected table1, table2 or appendix)"
            ))),
        }
    }
}

/// A rendered report: aligned TSV plus a markdown table with the best
/// value per column bolded. Missing cells appear as "–".
#[derive(Clone, Debug)]
pub struct Report {
    pub tsv: String,
    pub markdown: String,
}

/// Aggregated cells: row labels × column labels with mean accuracies.
#[derive(Clone, Debug)]
pub struct CellTable {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub cells: Vec<Vec<Option<f64>>>,
}

fn column_key(row: &ResultRow, layout: ReportLayout) -> String {
    let size = row.subset_size.map(|s| s.to_string()).unwrap_or_default();
    match layout {
        ReportLayout::Table1 => format!("{} {}", row.target_lang, row.lexical_variant),
        ReportLayout::Table2 => format!("{} {}", row.target_lang, size),
        ReportLayout::Appendix => {
            let mut key = format!("{} {}", row.target_lang, row.lexical_variant);
            if !size.is_empty() {
                key.push(' ');
                key.push_str(&size);
            }
            key
        }
    }
}

fn column_sort_key(row: &ResultRow) -> (String, u8, f64) {
    (
        row.target_lang.clone(),
        match row.lexical_variant {
            LexicalVariant::Original => 0,
            LexicalVariant::Retrained => 1,
        },
        row.subset_size.map(|s| s.sort_key()).unwrap_or(-1.0),
    )
}

fn row_key(row: &ResultRow, layout: ReportLayout) -> String {
    match layout {
        ReportLayout::Appendix => {
            format!("{}\t{}\t{}", row.source_lang, row.base_model, row.treebank)
        }
        _ => format!("{}\t{}", row.source_lang, row.base_model),
    }
}

/// Group rows into the layout's cell table. Table layouts average over
/// treebanks per source language; the appendix keeps per-treebank rows.
pub fn layout_cells(rows: &[ResultRow], layout: ReportLayout) -> Result<CellTable> {
    for row in rows {
        row.validate()?;
    }
    let mut col_order: Vec<((String, u8, f64), String)> = rows
        .iter()
        .map(|row| (column_sort_key(row), column_key(row, layout)))
        .collect();
    col_order.sort_by(|a, b| {
        a.0 .0
            .cmp(&b.0 .0)
            .then(a.0 .1.cmp(&b.0 .1))
            .then(a.0 .2.partial_cmp(&b.0 .2).unwrap_or(std::cmp::Ordering::Equal))
    });
    let mut col_labels: Vec<String> = Vec::new();
    for (_, label) in col_order {
        if !col_labels.contains(&label) {
            col_labels.push(label);
        }
    }
    let mut row_labels: Vec<String> = rows.iter().map(|r| row_key(r, layout)).collect();
    row_labels.sort();
    row_labels.dedup();

    let mut sums: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
    for row in rows {
        let r = row_labels.iter().position(|l| *l == row_key(row, layout)).expect("present");
        let c = col_labels.iter().position(|l| *l == column_key(row, layout)).expect("present");
        let e = sums.entry((r, c)).or_insert((0.0, 0));
        e.0 += row.accuracy;
        e.1 += 1;
    }
    let cells = (0..row_labels.len())
        .map(|r| {
            (0..col_labels.len())
                .map(|c| sums.get(&(r, c)).map(|(s, n)| s / *n as f64))
                .collect()
        })
        .collect();
    Ok(CellTable { row_labels, col_labels, cells })
}

/// Render rows under a layout as aligned TSV plus markdown.
pub fn render_report(rows: &[ResultRow], layout: ReportLayout) -> Result<Report> {
    let table = layout_cells(rows, layout)?;
    let row_header: Vec<&str> = match layout {
        ReportLayout::Appendix => vec!["source", "model", "treebank"],
        _ => vec!["source", "model"],
    };

    let fmt_cell = |v: Option<f64>| match v {
        Some(a) => format!("{:.1}", a * 100.0),
        None => "–".to_string(),
    };
    // Column best, for bolding in the markdown rendering.
    let best_per_col: Vec<Option<f64>> = (0..table.col_labels.len())
        .map(|c| {
            table
                .cells
                .iter()
                .filter_map(|row| row[c])
                .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
        })
        .collect();

    let mut tsv = String::new();
    tsv.push_str(&row_header.join("\t"));
    for col in &table.col_labels {
        tsv.push('\t');
        tsv.push_str(col);
    }
    tsv.push('\n');
    for (r, label) in table.row_labels.iter().enumerate() {
        tsv.push_str(label);
        for c in 0..table.col_labels.len() {
            tsv.push('\t');
            tsv.push_str(&fmt_cell(table.cells[r][c]));
        }
        tsv.push('\n');
    }

    let mut md = String::new();
    md.push_str(&format!("| {} |", row_header.join(" | ")));
    for col in &table.col_labels {
        md.push_str(&format!(" {col} |"));
    }
    md.push('\n');
    md.push_str(&format!("|{}|", "---|".repeat(row_header.len() + table.col_labels.len())));
    md.push('\n');
    for (r, label) in table.row_labels.iter().enumerate() {
        md.push_str(&format!("| {} |", label.replace('\t', " | ")));
        for c in 0..table.col_labels.len() {
            let text = fmt_cell(table.cells[r][c]);
            let bold = match (table.cells[r][c], best_per_col[c]) {
                (Some(v), Some(b)) => (v - b).abs() < 1e-12,
                _ => false,
            };
            if bold {
                md.push_str(&format!(" **{text}** |"));
            } else {
                md.push_str(&format!(" {text} |"));
            }
        }
        md.push('\n');
    }

    Ok(Report { tsv, markdown: md })
}
