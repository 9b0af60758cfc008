//! Shared pipeline harness for the integration and acceptance suites:
//! builds desk-scale models over the synthetic language family and runs
//! the full transfer recipe (pretrain, POS fine-tune, lexical retrain,
//! combination selection, evaluation).

#![allow(dead_code)]

use lexswap_core::data::{split_dev_test, TagSet, TaggedSentence};
use lexswap_core::eval::pos_accuracy;
use lexswap_core::model::{
    swap_lexical, LexicalLayer, ModelConfig, TaggerModel, TrainableGroup, TransformerBody,
};
use lexswap_core::synth::SynthLanguage;
use lexswap_core::tokenizer::{build_mlm_sequences, train_wordpiece, Vocabulary};
use lexswap_core::training::{
    finetune_pos, mix_seed, pretrain_lexical, pretrain_mlm, select_checkpoint_combo,
    BodyCheckpoint, FinetuneOutcome, TrainConfig,
};
use lexswap_core::Result;

pub const SEQ_LEN: usize = 48;
pub const VOCAB_TARGET: usize = 256;
pub const VOCAB_MIN_FREQ: u64 = 5;
pub const GRID_CAP: usize = 6;

/// Desk-scale encoder used by the transfer experiments.
pub fn toy_config(vocab_size: usize) -> ModelConfig {
    ModelConfig {
        layers: 2,
        hidden: 64,
        heads: 4,
        ffn: 256,
        vocab_size,
        max_positions: SEQ_LEN,
        n_tags: 16,
        seq_len: SEQ_LEN,
    }
}

pub fn pretrain_cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        lr0: 1e-3,
        total_steps: 1_500,
        batch_size: 16,
        eval_every: 300,
        patience: 10,
        seed,
        mask_rate: 0.15,
    }
}

pub fn finetune_cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        lr0: 3e-4,
        total_steps: 800,
        batch_size: 16,
        eval_every: 100,
        patience: 3,
        seed,
        mask_rate: 0.15,
    }
}

pub fn retrain_cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        lr0: 3e-3,
        total_steps: 1_500,
        batch_size: 16,
        eval_every: 300,
        patience: 10,
        seed,
        mask_rate: 0.15,
    }
}

/// A source language prepared for transfer: its pretrained model and the
/// POS-fine-tuned body checkpoints.
pub struct SourceModel {
    pub pretrained: TaggerModel,
    pub finetune: FinetuneOutcome,
    pub vocab: Vocabulary,
}

/// Pretrain a base model on the source corpus (MLM over every
/// parameter), then fine-tune the body for POS tagging on the source
/// treebank with the lexical layer frozen.
pub fn build_source_model(
    source: &SynthLanguage,
    tags: &TagSet,
    seed: u64,
    corpus_docs: usize,
    treebank_sentences: usize,
) -> Result<SourceModel> {
    let corpus = source.corpus(corpus_docs, 25, mix_seed(seed, 0x50, 1));
    let vocab = train_wordpiece(corpus.texts(), VOCAB_TARGET, VOCAB_MIN_FREQ)?;
    let sequences = build_mlm_sequences(corpus.texts(), &vocab, SEQ_LEN)?;

    let config = toy_config(vocab.len());
    let init = TaggerModel::init(config, vocab.clone(), mix_seed(seed, 0x50, 2))?;
    let pretrain = pretrain_mlm(
        &init.body(),
        init.lexical(),
        &sequences,
        &pretrain_cfg(mix_seed(seed, 0x50, 3)),
        TrainableGroup::All,
    )?;
    let pretrained = pretrain.final_model;

    let treebank = source.treebank(treebank_sentences, mix_seed(seed, 0x50, 4), tags);
    let (dev, train) = split_dev_test(&treebank, 0.2, mix_seed(seed, 0x50, 5))?;
    let finetune = finetune_pos(&pretrained, &train, &dev, &finetune_cfg(mix_seed(seed, 0x50, 6)))?;
    Ok(SourceModel { pretrained, finetune, vocab })
}

/// Target-language material: corpus for retraining, dev/test treebank.
pub struct TargetMaterial {
    pub corpus: lexswap_core::data::Corpus,
    pub vocab: Vocabulary,
    pub dev: Vec<TaggedSentence>,
    pub test: Vec<TaggedSentence>,
}

pub fn build_target_material(
    target: &SynthLanguage,
    tags: &TagSet,
    seed: u64,
    corpus_docs: usize,
    treebank_sentences: usize,
) -> Result<TargetMaterial> {
    let corpus = target.corpus(corpus_docs, 25, mix_seed(seed, 0x7A, 1));
    let vocab = train_wordpiece(corpus.texts(), VOCAB_TARGET, VOCAB_MIN_FREQ)?;
    let treebank = target.treebank(treebank_sentences, mix_seed(seed, 0x7A, 2), tags);
    let (dev, test) = split_dev_test(&treebank, 0.25, mix_seed(seed, 0x7A, 3))?;
    Ok(TargetMaterial { corpus, vocab, dev, test })
}

pub struct TransferOutcome {
    pub original_accuracy: f64,
    pub retrained_accuracy: f64,
    pub best_body: TransformerBody,
    pub best_lexical: LexicalLayer,
}

/// Zero-shot transfer of a prepared source model to target material:
/// score the original lexical layer, retrain a fresh lexical layer on
/// the target corpus against the pretrained body, pick the best
/// checkpoint combination on target dev, and score it on target test.
pub fn transfer(
    source: &SourceModel,
    target: &TargetMaterial,
    seed: u64,
) -> Result<TransferOutcome> {
    let best_ft = &source.finetune.checkpoints[source.finetune.best];
    let original_model = swap_lexical(&best_ft.body, &source.pretrained.lexical())?;
    let original_accuracy = pos_accuracy(&original_model, &target.test)?;

    let sequences = build_mlm_sequences(target.corpus.texts(), &target.vocab, SEQ_LEN)?;
    let fresh = LexicalLayer::init(
        target.vocab.clone(),
        source.pretrained.config.hidden,
        mix_seed(seed, 0x7F, 1),
    );
    let retrain = pretrain_lexical(
        &source.pretrained.body(),
        fresh,
        &sequences,
        &retrain_cfg(mix_seed(seed, 0x7F, 2)),
    )?;
    let combo = select_checkpoint_combo(
        &retrain.checkpoints,
        &source.finetune.checkpoints,
        &target.dev,
        GRID_CAP,
    )?;
    let best_lexical = retrain.checkpoints[combo.lexical_index].lexical.clone();
    let best_body = source.finetune.checkpoints[combo.body_index].body.clone();
    let model = swap_lexical(&best_body, &best_lexical)?;
    let retrained_accuracy = pos_accuracy(&model, &target.test)?;

    Ok(TransferOutcome { original_accuracy, retrained_accuracy, best_body, best_lexical })
}

/// The POS-fine-tuned body checkpoints of a source model.
pub fn body_checkpoints(source: &SourceModel) -> &[BodyCheckpoint] {
    &source.finetune.checkpoints
}
