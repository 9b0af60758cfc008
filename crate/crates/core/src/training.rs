//! The two independent fine-tuning procedures plus MLM masking and
//! checkpoint-combination selection.
//!
//! Body fine-tuning for POS never sees target-language data; lexical
//! retraining never sees labels. The two meet only afterwards, when
//! checkpoint pairs are scored on target-language dev accuracy.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{align_subword_labels, AlignedWindow, TaggedSentence, IGNORE_LABEL};
use crate::model::{
    set_trainable, swap_lexical, Batch, LexicalLayer, TaggerModel, TrainableGroup,
    TransformerBody,
};
use crate::numcore::{adam_step, linear_lr, AdamState, Graph};
use crate::tokenizer::{Vocabulary, MASK_ID, SPECIAL_TOKENS};
use crate::{Error, Result};

/// Knobs for one training run. The paper-fixed values are the masking
/// rate and the starting learning rates (1e-4 lexical, 1e-5 POS); batch
/// size, step budget, evaluation cadence and patience are artifact
/// defaults, all overridable.
#[derive(Clone, Copy, Debug)]
pub struct TrainConfig {
    pub lr0: f32,
    pub total_steps: u64,
    pub batch_size: usize,
    pub eval_every: u64,
    pub patience: usize,
    pub seed: u64,
    pub mask_rate: f32,
}

pub const DEFAULT_LEXICAL_LR: f32 = 1e-4;
pub const DEFAULT_POS_LR: f32 = 1e-5;

impl TrainConfig {
    /// Defaults for lexical retraining (MLM).
    pub fn lexical_defaults() -> Self {
        TrainConfig {
            lr0: DEFAULT_LEXICAL_LR,
            total_steps: 5_000,
            batch_size: 32,
            eval_every: 250,
            patience: 3,
            seed: 0,
            mask_rate: 0.15,
        }
    }

    /// Defaults for POS fine-tuning.
    pub fn pos_defaults() -> Self {
        TrainConfig { lr0: DEFAULT_POS_LR, ..Self::lexical_defaults() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.mask_rate) {
            return Err(Error::invalid("mask_rate must lie in [0, 1)"));
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience must be at least 1"));
        }
        if self.total_steps == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::invalid(
                "total_steps, batch_size and eval_every must be positive",
            ));
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent stream seed from a base seed and salts.
pub fn mix_seed(base: u64, salt_a: u64, salt_b: u64) -> u64 {
    splitmix64(base ^ splitmix64(salt_a ^ splitmix64(salt_b)))
}

/// BERT-style masking of one packed sequence.
///
/// Each content position is selected independently with probability
/// `rate`; selected positions become `[MASK]` 80% of the time, a random
/// non-special vocabulary id 10%, and stay unchanged 10%. Labels carry
/// the original id at selected positions and [`IGNORE_LABEL`] elsewhere.
/// Special tokens (PAD/UNK/CLS/SEP/MASK) are never selected.
pub fn mask_tokens(
    sequence: &[u32],
    vocab: &Vocabulary,
    rate: f32,
    seed: u64,
) -> Result<(Vec<u32>, Vec<i64>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid("mask rate must lie in [0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_specials = SPECIAL_TOKENS.len() as u32;
    let n_content = vocab.len() as u32 - n_specials;
    let mut ids = sequence.to_vec();
    let mut labels = vec![IGNORE_LABEL; sequence.len()];
    for (i, &id) in sequence.iter().enumerate() {
        if Vocabulary::is_special(id) {
            continue;
        }
        if rng.gen::<f32>() >= rate {
            continue;
        }
        labels[i] = id as i64;
        let roll: f32 = rng.gen();
        if roll < 0.8 {
            ids[i] = MASK_ID;
        } else if roll < 0.9 && n_content > 0 {
            ids[i] = n_specials + rng.gen_range(0..n_content);
        } // else: keep the original token
    }
    Ok((ids, labels))
}

/// Early stopping on a loss stream: stop after `patience` consecutive
/// evaluations without strict improvement over the best seen.
#[derive(Clone, Debug)]
pub struct EarlyStopper {
    best: f64,
    best_index: usize,
    since_best: usize,
    seen: usize,
    patience: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper {
            best: f64::INFINITY,
            best_index: 0,
            since_best: 0,
            seen: 0,
            patience,
        }
    }

    /// Feed one evaluation loss; true means stop now.
    pub fn observe(&mut self, loss: f64) -> bool {
        self.seen += 1;
        if loss < self.best {
            self.best = loss;
            self.best_index = self.seen - 1;
            self.since_best = 0;
            false
        } else {
            self.since_best += 1;
            self.since_best >= self.patience
        }
    }

    pub fn best_index(&self) -> usize {
        self.best_index
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

/// One line per training step, tab-separated on disk.
#[derive(Clone, Debug)]
pub struct MetricsRow {
    pub step: u64,
    pub lr: f32,
    pub loss: f64,
    pub dev_metric: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct MetricsLog {
    pub rows: Vec<MetricsRow>,
}

impl MetricsLog {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("step\tlr\tloss\tdev_metric\n");
        for row in &self.rows {
            let dev = row.dev_metric.map(|d| format!("{d:.6}")).unwrap_or_default();
            out.push_str(&format!("{}\t{:e}\t{:.6}\t{}\n", row.step, row.lr, row.loss, dev));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct LexicalCheckpoint {
    pub step: u64,
    pub lexical: LexicalLayer,
    pub heldout_loss: f64,
}

#[derive(Clone, Debug)]
pub struct BodyCheckpoint {
    pub step: u64,
    pub body: TransformerBody,
    pub dev_loss: f64,
}

#[derive(Debug)]
pub struct PretrainOutcome {
    pub checkpoints: Vec<LexicalCheckpoint>,
    pub metrics: MetricsLog,
    pub final_model: TaggerModel,
}

#[derive(Debug)]
pub struct FinetuneOutcome {
    pub checkpoints: Vec<BodyCheckpoint>,
    /// Index into `checkpoints` of the minimum dev loss.
    pub best: usize,
    pub metrics: MetricsLog,
    pub final_model: TaggerModel,
}

fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xE0C4, epoch));
    order.shuffle(&mut rng);
    order
}

/// Mean MLM loss over pre-masked sequences, without gradient work.
fn mlm_eval_loss(model: &TaggerModel, masked: &[(Vec<u32>, Vec<i64>)], batch_size: usize) -> Result<f64> {
    let mut total = 0.0f64;
    let mut count = 0usize;
    for chunk in masked.chunks(batch_size) {
        let seqs: Vec<Vec<u32>> = chunk.iter().map(|(ids, _)| ids.clone()).collect();
        let labels: Vec<i64> = chunk.iter().flat_map(|(_, l)| l.iter().copied()).collect();
        if labels.iter().all(|&l| l == IGNORE_LABEL) {
            continue;
        }
        let batch = Batch::from_sequences(&seqs)?;
        let mut g = Graph::new();
        let logits = model.forward_mlm_graph(&mut g, &batch)?;
        let loss = g.cross_entropy_loss(logits, &labels, IGNORE_LABEL)?;
        total += g.scalar(loss) * chunk.len() as f64;
        count += chunk.len();
    }
    if count == 0 {
        return Err(Error::EmptyInput("no masked positions in evaluation set".into()));
    }
    Ok(total / count as f64)
}

/// Retrain a lexical layer against a frozen body with masked language
/// modeling. Emits a lexical checkpoint with its held-out loss every
/// `eval_every` steps and at the final step.
pub fn pretrain_lexical(
    body: &TransformerBody,
    lexical: LexicalLayer,
    sequences: &[Vec<u32>],
    cfg: &TrainConfig,
) -> Result<PretrainOutcome> {
    pretrain_mlm(body, lexical, sequences, cfg, TrainableGroup::LexicalOnly)
}

/// MLM training with a chosen trainable group. `LexicalOnly` is the
/// retraining phase; `All` bootstraps a desk-scale base model from
/// scratch.
pub fn pretrain_mlm(
    body: &TransformerBody,
    lexical: LexicalLayer,
    sequences: &[Vec<u32>],
    cfg: &TrainConfig,
    group: TrainableGroup,
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    if sequences.is_empty() {
        return Err(Error::EmptyInput("no MLM sequences".into()));
    }
    let vocab_len = lexical.vocab.len() as u32;
    if let Some(&bad) = sequences.iter().flatten().find(|&&id| id >= vocab_len) {
        return Err(Error::Vocab(format!(
            "sequence id {bad} outside the lexical layer's vocabulary of {vocab_len}"
        )));
    }

    let mut model = swap_lexical(body, &lexical)?;
    set_trainable(&mut model.params, group);

    // Held-out split: seeded shuffle, about 5% (at least one sequence).
    let order = epoch_order(sequences.len(), cfg.seed, u64::MAX);
    let heldout_n = (sequences.len() / 20).max(1);
    let heldout_idx = &order[..heldout_n];
    let train_idx: Vec<usize> = if order.len() > heldout_n {
        order[heldout_n..].to_vec()
    } else {
        order.clone() // degenerate corpus: train on everything
    };
    let heldout: Vec<(Vec<u32>, Vec<i64>)> = heldout_idx
        .iter()
        .enumerate()
        .map(|(i, &idx)| {
            mask_tokens(
                &sequences[idx],
                &model.vocab,
                cfg.mask_rate,
                mix_seed(cfg.seed, 0x4E1D, i as u64),
            )
        })
        .collect::<Result<_>>()?;

    let mut state = AdamState::new();
    let mut metrics = MetricsLog::default();
    let mut checkpoints = Vec::new();
    let steps_per_epoch = train_idx.len().div_ceil(cfg.batch_size) as u64;
    let mut shuffled = epoch_order(train_idx.len(), cfg.seed, 0);

    for step in 1..=cfg.total_steps {
        let epoch = (step - 1) / steps_per_epoch;
        let offset = ((step - 1) % steps_per_epoch) as usize * cfg.batch_size;
        if offset == 0 && step > 1 {
            shuffled = epoch_order(train_idx.len(), cfg.seed, epoch);
        }
        let slots: Vec<usize> = (offset..(offset + cfg.batch_size).min(train_idx.len()))
            .map(|i| train_idx[shuffled[i]])
            .collect();

        let mut seqs = Vec::with_capacity(slots.len());
        let mut labels: Vec<i64> = Vec::new();
        for (slot, &idx) in slots.iter().enumerate() {
            let (ids, l) = mask_tokens(
                &sequences[idx],
                &model.vocab,
                cfg.mask_rate,
                mix_seed(cfg.seed, step, slot as u64),
            )?;
            seqs.push(ids);
            labels.extend(l);
        }
        if labels.iter().all(|&l| l == IGNORE_LABEL) {
            continue; // nothing was masked in this batch
        }

        let lr = linear_lr(step - 1, cfg.total_steps, cfg.lr0)?;
        let batch = Batch::from_sequences(&seqs)?;
        let mut g = Graph::new();
        let logits = model.forward_mlm_graph(&mut g, &batch)?;
        let loss = g.cross_entropy_loss(logits, &labels, IGNORE_LABEL)?;
        g.backward(loss)?;
        model.params.clear_grads();
        g.write_grads(&mut model.params)?;
        adam_step(&mut model.params, &mut state, lr)?;

        let mut dev_metric = None;
        if step % cfg.eval_every == 0 || step == cfg.total_steps {
            let heldout_loss = mlm_eval_loss(&model, &heldout, cfg.batch_size)?;
            dev_metric = Some(heldout_loss);
            checkpoints.push(LexicalCheckpoint {
                step,
                lexical: model.lexical(),
                heldout_loss,
            });
        }
        metrics.rows.push(MetricsRow { step, lr, loss: g.scalar(loss), dev_metric });
    }

    Ok(PretrainOutcome { checkpoints, metrics, final_model: model })
}

fn windows_for(sentences: &[TaggedSentence], vocab: &Vocabulary, seq_len: usize) -> Result<Vec<AlignedWindow>> {
    let mut windows = Vec::new();
    for s in sentences {
        windows.extend(align_subword_labels(s, vocab, seq_len)?);
    }
    Ok(windows)
}

/// Mean POS loss over aligned windows, without gradient work.
fn pos_eval_loss(model: &TaggerModel, windows: &[AlignedWindow], batch_size: usize) -> Result<f64> {
    let mut total = 0.0f64;
    let mut count = 0usize;
    for chunk in windows.chunks(batch_size) {
        let seqs: Vec<Vec<u32>> = chunk.iter().map(|w| w.ids.clone()).collect();
        let labels: Vec<i64> = chunk.iter().flat_map(|w| w.labels.iter().copied()).collect();
        let batch = Batch::from_sequences(&seqs)?;
        let mut g = Graph::new();
        let logits = model.forward_pos_graph(&mut g, &batch)?;
        let loss = g.cross_entropy_loss(logits, &labels, IGNORE_LABEL)?;
        total += g.scalar(loss) * chunk.len() as f64;
        count += chunk.len();
    }
    if count == 0 {
        return Err(Error::EmptyInput("no evaluation windows".into()));
    }
    Ok(total / count as f64)
}

/// Fine-tune the body (encoder plus POS head) on a source treebank with
/// the lexical layer frozen. Early stopping on source dev loss: training
/// halts after `patience` consecutive evaluations without improvement;
/// the minimum-dev-loss checkpoint is marked best.
pub fn finetune_pos(
    model: &TaggerModel,
    train: &[TaggedSentence],
    dev: &[TaggedSentence],
    cfg: &TrainConfig,
) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::EmptyInput("finetune_pos needs train and dev sentences".into()));
    }
    let mut model = model.clone();
    set_trainable(&mut model.params, TrainableGroup::BodyOnly);

    let train_windows = windows_for(train, &model.vocab, model.config.seq_len)?;
    let dev_windows = windows_for(dev, &model.vocab, model.config.seq_len)?;

    let mut state = AdamState::new();
    let mut metrics = MetricsLog::default();
    let mut checkpoints: Vec<BodyCheckpoint> = Vec::new();
    let mut stopper = EarlyStopper::new(cfg.patience);
    let steps_per_epoch = train_windows.len().div_ceil(cfg.batch_size) as u64;
    let mut shuffled = epoch_order(train_windows.len(), cfg.seed, 0);

    for step in 1..=cfg.total_steps {
        let epoch = (step - 1) / steps_per_epoch;
        let offset = ((step - 1) % steps_per_epoch) as usize * cfg.batch_size;
        if offset == 0 && step > 1 {
            shuffled = epoch_order(train_windows.len(), cfg.seed, epoch);
        }
        let chunk: Vec<&AlignedWindow> = (offset
            ..(offset + cfg.batch_size).min(train_windows.len()))
            .map(|i| &train_windows[shuffled[i]])
            .collect();

        let seqs: Vec<Vec<u32>> = chunk.iter().map(|w| w.ids.clone()).collect();
        let labels: Vec<i64> = chunk.iter().flat_map(|w| w.labels.iter().copied()).collect();
        let lr = linear_lr(step - 1, cfg.total_steps, cfg.lr0)?;
        let batch = Batch::from_sequences(&seqs)?;
        let mut g = Graph::new();
        let logits = model.forward_pos_graph(&mut g, &batch)?;
        let loss = g.cross_entropy_loss(logits, &labels, IGNORE_LABEL)?;
        g.backward(loss)?;
        model.params.clear_grads();
        g.write_grads(&mut model.params)?;
        adam_step(&mut model.params, &mut state, lr)?;

        let mut dev_metric = None;
        let evaluate = step % cfg.eval_every == 0 || step == cfg.total_steps;
        let mut stop = false;
        if evaluate {
            let dev_loss = pos_eval_loss(&model, &dev_windows, cfg.batch_size)?;
            dev_metric = Some(dev_loss);
            checkpoints.push(BodyCheckpoint { step, body: model.body(), dev_loss });
            stop = stopper.observe(dev_loss);
        }
        metrics.rows.push(MetricsRow { step, lr, loss: g.scalar(loss), dev_metric });
        if stop {
            break;
        }
    }
    if checkpoints.is_empty() {
        // Step budget below eval_every: checkpoint the final state.
        let dev_loss = pos_eval_loss(&model, &dev_windows, cfg.batch_size)?;
        checkpoints.push(BodyCheckpoint { step: cfg.total_steps, body: model.body(), dev_loss });
        stopper.observe(dev_loss);
    }

    Ok(FinetuneOutcome {
        best: stopper.best_index(),
        checkpoints,
        metrics,
        final_model: model,
    })
}

/// Exhaustive argmax over a checkpoint grid via an injected scorer.
/// Ties break to the earlier row, then the earlier column. Evaluations
/// run in parallel; selection order is fixed.
pub fn select_best_pair<F>(rows: usize, cols: usize, score: F) -> Result<(usize, usize, f64)>
where
    F: Fn(usize, usize) -> Result<f64> + Sync,
{
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyInput("empty checkpoint grid".into()));
    }
    use rayon::prelude::*;
    let cells: Vec<(usize, usize)> =
        (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))).collect();
    let scores: Vec<Result<f64>> = cells.par_iter().map(|&(r, c)| score(r, c)).collect();
    let mut best: Option<(usize, usize, f64)> = None;
    for ((r, c), s) in cells.into_iter().zip(scores) {
        let s = s?;
        if best.map_or(true, |(_, _, b)| s > b) {
            best = Some((r, c, s));
        }
    }
    Ok(best.expect("grid is non-empty"))
}

/// Grid cap: only the last this-many checkpoints per side are scored.
pub const COMBO_GRID_CAP: usize = 8;

#[derive(Clone, Debug)]
pub struct ComboSelection {
    /// Indices into the (uncapped) checkpoint slices.
    pub lexical_index: usize,
    pub body_index: usize,
    pub dev_accuracy: f64,
}

/// Score every (lexical, body) checkpoint pair on target-language dev
/// accuracy and return the argmax. Ties break to the earlier lexical
/// step, then the earlier body step.
pub fn select_checkpoint_combo(
    lexical: &[LexicalCheckpoint],
    bodies: &[BodyCheckpoint],
    target_dev: &[TaggedSentence],
    grid_cap: usize,
) -> Result<ComboSelection> {
    if lexical.is_empty() || bodies.is_empty() {
        return Err(Error::EmptyInput("need at least one checkpoint of each kind".into()));
    }
    if target_dev.is_empty() {
        return Err(Error::EmptyInput("empty target dev set".into()));
    }
    let cap = grid_cap.max(1);
    let lex_base = lexical.len().saturating_sub(cap);
    let body_base = bodies.len().saturating_sub(cap);
    let lex_slice = &lexical[lex_base..];
    let body_slice = &bodies[body_base..];

    let (li, bi, acc) = select_best_pair(lex_slice.len(), body_slice.len(), |l, b| {
        let model = swap_lexical(&body_slice[b].body, &lex_slice[l].lexical)?;
        crate::eval::pos_accuracy(&model, target_dev)
    })?;
    Ok(ComboSelection {
        lexical_index: lex_base + li,
        body_index: body_base + bi,
        dev_accuracy: acc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::{CLS_ID, PAD_ID, SEP_ID};

    fn vocab_n(n_content: usize) -> Vocabulary {
        let content: Vec<String> = (0..n_content).map(|i| format!("t{i}")).collect();
        let refs: Vec<&str> = content.iter().map(|s| s.as_str()).collect();
        Vocabulary::new(&refs).unwrap()
    }

    fn packed_sequence(content: usize) -> Vec<u32> {
        let mut s = vec![CLS_ID];
        s.extend((0..content as u32).map(|i| 5 + (i % 40)));
        s.push(SEP_ID);
        s
    }

    #[test]
    fn zero_rate_masks_nothing() {
        let vocab = vocab_n(40);
        let seq = packed_sequence(20);
        let (ids, labels) = mask_tokens(&seq, &vocab, 0.0, 7).unwrap();
        assert_eq!(ids, seq);
        assert!(labels.iter().all(|&l| l == IGNORE_LABEL));
    }

    #[test]
    fn masking_is_deterministic() {
        let vocab = vocab_n(40);
        let seq = packed_sequence(30);
        let a = mask_tokens(&seq, &vocab, 0.15, 123).unwrap();
        let b = mask_tokens(&seq, &vocab, 0.15, 123).unwrap();
        assert_eq!(a, b);
        let c = mask_tokens(&seq, &vocab, 0.15, 124).unwrap();
        assert_ne!(a, c, "different seeds should differ");
    }

    #[test]
    fn specials_are_never_selected() {
        let vocab = vocab_n(40);
        let mut seq = packed_sequence(30);
        seq.extend([PAD_ID; 12]);
        for trial in 0..200 {
            let (ids, labels) = mask_tokens(&seq, &vocab, 0.5, trial).unwrap();
            for (i, &orig) in seq.iter().enumerate() {
                if Vocabulary::is_special(orig) {
                    assert_eq!(ids[i], orig);
                    assert_eq!(labels[i], IGNORE_LABEL);
                }
            }
        }
    }

    #[test]
    fn selected_fraction_concentrates_at_the_rate() {
        let vocab = vocab_n(40);
        let seq = packed_sequence(126);
        let mut selected = 0usize;
        let mut total = 0usize;
        for i in 0..10_000u64 {
            let (_, labels) = mask_tokens(&seq, &vocab, 0.15, i).unwrap();
            selected += labels.iter().filter(|&&l| l != IGNORE_LABEL).count();
            total += 126;
        }
        let fraction = selected as f64 / total as f64;
        assert!(
            (0.145..=0.155).contains(&fraction),
            "selected fraction {fraction}"
        );
    }

    #[test]
    fn corruption_split_is_roughly_80_10_10() {
        let vocab = vocab_n(40);
        let seq = packed_sequence(126);
        let (mut to_mask, mut random, mut kept) = (0usize, 0usize, 0usize);
        for i in 0..2_000u64 {
            let (ids, labels) = mask_tokens(&seq, &vocab, 0.15, i).unwrap();
            for (i, &l) in labels.iter().enumerate() {
                if l == IGNORE_LABEL {
                    continue;
                }
                if ids[i] == MASK_ID {
                    to_mask += 1;
                } else if ids[i] == seq[i] {
                    kept += 1;
                } else {
                    random += 1;
                }
            }
        }
        let n = (to_mask + random + kept) as f64;
        assert!((to_mask as f64 / n - 0.8).abs() < 0.02);
        // The random draw can reproduce the original token, so split the
        // remainder loosely.
        assert!((random as f64 / n - 0.1).abs() < 0.02);
        assert!((kept as f64 / n - 0.1).abs() < 0.02);
    }

    #[test]
    fn early_stopper_stops_after_patience_flat_evals() {
        let mut s = EarlyStopper::new(2);
        assert!(!s.observe(0.5)); // improves
        assert!(!s.observe(0.5)); // flat #1
        assert!(s.observe(0.5)); // flat #2 → stop
        assert_eq!(s.best_index(), 0);
    }

    #[test]
    fn early_stopper_tracks_minimum() {
        let mut s = EarlyStopper::new(3);
        for (i, loss) in [0.9, 0.7, 0.8, 0.6, 0.65, 0.66, 0.67].iter().enumerate() {
            let stop = s.observe(*loss);
            assert_eq!(stop, i == 6, "at eval {i}");
        }
        assert_eq!(s.best_index(), 3);
        assert_eq!(s.best_loss(), 0.6);
    }

    #[test]
    fn select_best_pair_argmax_and_ties() {
        // 2×2 grid with known accuracies.
        let grid = [[0.3, 0.5], [0.7, 0.6]];
        let (r, c, a) = select_best_pair(2, 2, |r, c| Ok(grid[r][c])).unwrap();
        assert_eq!((r, c), (1, 0));
        assert_eq!(a, 0.7);

        // Singleton.
        let (r, c, _) = select_best_pair(1, 1, |_, _| Ok(0.4)).unwrap();
        assert_eq!((r, c), (0, 0));

        // Tie: earlier row (lexical step) wins, then earlier column.
        let tie = [[0.7, 0.7], [0.7, 0.2]];
        let (r, c, _) = select_best_pair(2, 2, |r, c| Ok(tie[r][c])).unwrap();
        assert_eq!((r, c), (0, 0));

        assert!(select_best_pair(0, 2, |_, _| Ok(0.0)).is_err());
    }

    #[test]
    fn metrics_log_renders_tab_separated() {
        let log = MetricsLog {
            rows: vec![
                MetricsRow { step: 1, lr: 1e-4, loss: 2.5, dev_metric: None },
                MetricsRow { step: 2, lr: 9e-5, loss: 2.25, dev_metric: Some(2.4) },
            ],
        };
        let tsv = log.to_tsv();
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[0], "step\tlr\tloss\tdev_metric");
        assert!(lines[1].starts_with("1\t"));
        assert_eq!(lines[2].split('\t').count(), 4);
    }

    #[test]
    fn mix_seed_is_stable_and_spreads() {
        assert_eq!(mix_seed(1, 2, 3), mix_seed(1, 2, 3));
        assert_ne!(mix_seed(1, 2, 3), mix_seed(1, 2, 4));
        assert_ne!(mix_seed(1, 2, 3), mix_seed(2, 2, 3));
    }
}
