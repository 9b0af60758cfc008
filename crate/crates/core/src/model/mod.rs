//! The transformer tagger: swappable lexical layer, encoder body, MLM and
//! POS heads, parameter freezing, counting, and checkpoint I/O.
//!
//! The lexical layer is the token-embedding matrix plus the tied output
//! bias, nothing else: position embeddings, the embedding layernorm and
//! all task heads live in the body. The MLM output projection is
//! definitionally the transpose of the embedding matrix, so there is one
//! tensor serving both directions.

mod checkpoint;

pub use checkpoint::{
    load_body, load_lexical, load_model, save_body, save_lexical, save_model, CheckpointKind,
    Provenance, FORMAT_VERSION, MAGIC,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::numcore::{AttentionWeights, Graph, NodeId, ParamStore, Tensor};
use crate::tokenizer::{Vocabulary, PAD_ID};
use crate::{Error, Result};

const INIT_STD: f32 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ffn: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    pub n_tags: usize,
    pub seq_len: usize,
}

impl ModelConfig {
    /// Base-sized monolingual preset: 12 layers, hidden 768, 30K vocab.
    pub fn bert_base() -> Self {
        ModelConfig {
            layers: 12,
            hidden: 768,
            heads: 12,
            ffn: 3072,
            vocab_size: 30_000,
            max_positions: 512,
            n_tags: 16,
            seq_len: 128,
        }
    }

    /// Multilingual preset: same body, 120K vocabulary.
    pub fn mbert_base() -> Self {
        ModelConfig { vocab_size: 120_000, ..Self::bert_base() }
    }

    /// Desk-scale preset for tests and demos.
    pub fn toy() -> Self {
        ModelConfig {
            layers: 2,
            hidden: 64,
            heads: 4,
            ffn: 256,
            vocab_size: 2_000,
            max_positions: 128,
            n_tags: 16,
            seq_len: 128,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "bert-base" => Ok(Self::bert_base()),
            "mbert-base" => Ok(Self::mbert_base()),
            "toy" => Ok(Self::toy()),
            other => Err(Error::Config(format!(
                "unknown preset `{other}` (expected bert-base, mbert-base or toy)"
            ))),
        }
    }

    pub fn with_vocab_size(mut self, vocab_size: usize) -> Self {
        self.vocab_size = vocab_size;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden % self.heads != 0 {
            return Err(Error::Config(format!(
                "hidden {} not divisible by heads {}",
                self.hidden, self.heads
            )));
        }
        if self.seq_len > self.max_positions {
            return Err(Error::Config(format!(
                "seq_len {} exceeds max_positions {}",
                self.seq_len, self.max_positions
            )));
        }
        if self.layers == 0 || self.hidden == 0 || self.ffn == 0 {
            return Err(Error::Config("layers, hidden and ffn must be positive".into()));
        }
        if self.vocab_size <= crate::tokenizer::SPECIAL_TOKENS.len() {
            return Err(Error::Config("vocab_size must exceed the special tokens".into()));
        }
        Ok(())
    }
}

/// Named shapes of the lexical parameters.
fn lexical_shapes(vocab_size: usize, hidden: usize) -> Vec<(String, Vec<usize>)> {
    vec![
        ("lexical.embedding".into(), vec![vocab_size, hidden]),
        ("lexical.output_bias".into(), vec![vocab_size]),
    ]
}

/// Named shapes of the body parameters, in checkpoint order.
fn body_shapes(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let h = config.hidden;
    let mut shapes: Vec<(String, Vec<usize>)> = vec![
        ("body.position_embeddings".into(), vec![config.max_positions, h]),
        ("body.embed_layernorm.gain".into(), vec![h]),
        ("body.embed_layernorm.bias".into(), vec![h]),
    ];
    for i in 0..config.layers {
        for proj in ["wq", "wk", "wv", "wo"] {
            shapes.push((format!("body.layer{i}.attn.{proj}"), vec![h, h]));
            shapes.push((format!("body.layer{i}.attn.{}", proj.replace('w', "b")), vec![h]));
        }
        shapes.push((format!("body.layer{i}.attn_layernorm.gain"), vec![h]));
        shapes.push((format!("body.layer{i}.attn_layernorm.bias"), vec![h]));
        shapes.push((format!("body.layer{i}.ffn.w1"), vec![h, config.ffn]));
        shapes.push((format!("body.layer{i}.ffn.b1"), vec![config.ffn]));
        shapes.push((format!("body.layer{i}.ffn.w2"), vec![config.ffn, h]));
        shapes.push((format!("body.layer{i}.ffn.b2"), vec![h]));
        shapes.push((format!("body.layer{i}.ffn_layernorm.gain"), vec![h]));
        shapes.push((format!("body.layer{i}.ffn_layernorm.bias"), vec![h]));
    }
    shapes.push(("body.mlm_transform.dense.w".into(), vec![h, h]));
    shapes.push(("body.mlm_transform.dense.b".into(), vec![h]));
    shapes.push(("body.mlm_transform.layernorm.gain".into(), vec![h]));
    shapes.push(("body.mlm_transform.layernorm.bias".into(), vec![h]));
    shapes.push(("body.pos_head.w".into(), vec![h, config.n_tags]));
    shapes.push(("body.pos_head.b".into(), vec![config.n_tags]));
    shapes
}

fn init_tensor<R: rand::Rng>(name: &str, shape: &[usize], rng: &mut R) -> Tensor {
    // Weight matrices get normal(0, 0.02); biases zero; layernorm gain 1.
    if name.ends_with("layernorm.gain") {
        Tensor::filled(shape, 1.0)
    } else if shape.len() == 1 {
        Tensor::zeros(shape)
    } else {
        Tensor::randn(shape, INIT_STD, rng)
    }
}

/// The swappable token-embedding matrix with its tied output bias.
#[derive(Clone, Debug)]
pub struct LexicalLayer {
    pub vocab: Vocabulary,
    pub params: ParamStore,
}

impl LexicalLayer {
    pub fn init(vocab: Vocabulary, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        for (name, shape) in lexical_shapes(vocab.len(), hidden) {
            let t = init_tensor(&name, &shape, &mut rng);
            params.insert(name, t, true).expect("fresh store");
        }
        LexicalLayer { vocab, params }
    }

    pub fn hidden(&self) -> usize {
        self.params
            .get("lexical.embedding")
            .and_then(|t| t.dims2().ok())
            .map(|(_, h)| h)
            .unwrap_or(0)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }
}

/// Every non-lexical parameter: encoder stack, positional machinery,
/// MLM transform and the POS head.
#[derive(Clone, Debug)]
pub struct TransformerBody {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl TransformerBody {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        for (name, shape) in body_shapes(&config) {
            let t = init_tensor(&name, &shape, &mut rng);
            params.insert(name, t, true)?;
        }
        Ok(TransformerBody { config, params })
    }

    pub fn hidden(&self) -> usize {
        self.config.hidden
    }
}

/// Which parameter group the optimizer may update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainableGroup {
    LexicalOnly,
    BodyOnly,
    All,
}

/// Mark exactly the selected group trainable. The lexical and body
/// prefixes partition the store, so the groups are disjoint and
/// exhaustive.
pub fn set_trainable(store: &mut ParamStore, group: TrainableGroup) {
    store.set_trainable_where(|name| match group {
        TrainableGroup::LexicalOnly => name.starts_with("lexical."),
        TrainableGroup::BodyOnly => name.starts_with("body."),
        TrainableGroup::All => true,
    });
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamCount {
    pub total: u64,
    pub lexical: u64,
}

/// Closed-form parameter count from the config's shape tables; matches
/// the allocated stores exactly.
pub fn count_parameters(config: &ModelConfig) -> ParamCount {
    let numel = |shapes: &[(String, Vec<usize>)]| -> u64 {
        shapes
            .iter()
            .map(|(_, s)| s.iter().product::<usize>() as u64)
            .sum()
    };
    let lexical = numel(&lexical_shapes(config.vocab_size, config.hidden));
    let body = numel(&body_shapes(config));
    ParamCount { total: lexical + body, lexical }
}

/// A batch of fixed-length id sequences, flattened row-major.
#[derive(Clone, Debug)]
pub struct Batch {
    pub ids: Vec<u32>,
    pub batch: usize,
    pub seq: usize,
}

impl Batch {
    pub fn from_sequences(sequences: &[Vec<u32>]) -> Result<Self> {
        let Some(first) = sequences.first() else {
            return Err(Error::EmptyInput("batch of zero sequences".into()));
        };
        let seq = first.len();
        let mut ids = Vec::with_capacity(sequences.len() * seq);
        for s in sequences {
            if s.len() != seq {
                return Err(Error::shape(format!(
                    "ragged batch: {} vs {seq}",
                    s.len()
                )));
            }
            ids.extend_from_slice(s);
        }
        Ok(Batch { ids, batch: sequences.len(), seq })
    }
}

/// A fully assembled tagger: one parameter store holding `lexical.*` and
/// `body.*` entries, plus the vocabulary the lexical layer was built on.
#[derive(Clone, Debug)]
pub struct TaggerModel {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ParamStore,
}

impl TaggerModel {
    /// Fresh model: body and lexical initialized from one seed.
    pub fn init(config: ModelConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        let body = TransformerBody::init(config, seed)?;
        let lexical = LexicalLayer::init(vocab, config.hidden, seed.wrapping_add(1));
        swap_lexical(&body, &lexical)
    }

    /// Clone out the lexical layer.
    pub fn lexical(&self) -> LexicalLayer {
        let mut params = ParamStore::new();
        for (name, entry) in self.params.iter() {
            if name.starts_with("lexical.") {
                params.insert(name, entry.tensor.clone(), entry.trainable).expect("fresh");
            }
        }
        LexicalLayer { vocab: self.vocab.clone(), params }
    }

    /// Clone out the body.
    pub fn body(&self) -> TransformerBody {
        let mut params = ParamStore::new();
        for (name, entry) in self.params.iter() {
            if name.starts_with("body.") {
                params.insert(name, entry.tensor.clone(), entry.trainable).expect("fresh");
            }
        }
        TransformerBody { config: self.config, params }
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.ids.len() != batch.batch * batch.seq {
            return Err(Error::shape(format!(
                "batch ids {} != {}x{}",
                batch.ids.len(),
                batch.batch,
                batch.seq
            )));
        }
        if batch.seq > self.config.max_positions {
            return Err(Error::shape(format!(
                "sequence length {} exceeds max_positions {}",
                batch.seq, self.config.max_positions
            )));
        }
        if let Some(&bad) = batch.ids.iter().find(|&&id| id as usize >= self.vocab.len()) {
            return Err(Error::invalid(format!(
                "token id {bad} out of range for vocabulary of {}",
                self.vocab.len()
            )));
        }
        Ok(())
    }

    /// Shared encoder trunk; returns hidden states [batch*seq × hidden].
    fn encode(&self, g: &mut Graph, batch: &Batch) -> Result<NodeId> {
        self.check_batch(batch)?;
        let mask: Vec<f32> = batch
            .ids
            .iter()
            .map(|&id| if id == PAD_ID { 0.0 } else { 1.0 })
            .collect();

        let embedding = g.param(&self.params, "lexical.embedding")?;
        let tok = g.gather(embedding, &batch.ids)?;
        let pos_ids: Vec<u32> = (0..batch.batch)
            .flat_map(|_| 0..batch.seq as u32)
            .collect();
        let pos_table = g.param(&self.params, "body.position_embeddings")?;
        let pos = g.gather(pos_table, &pos_ids)?;
        let summed = g.add(tok, pos)?;
        let gain = g.param(&self.params, "body.embed_layernorm.gain")?;
        let bias = g.param(&self.params, "body.embed_layernorm.bias")?;
        let mut x = g.layer_norm(summed, gain, bias)?;

        for i in 0..self.config.layers {
            let p = |g: &mut Graph, suffix: &str| -> Result<NodeId> {
                g.param(&self.params, &format!("body.layer{i}.{suffix}"))
            };
            let w = AttentionWeights {
                wq: p(g, "attn.wq")?,
                bq: p(g, "attn.bq")?,
                wk: p(g, "attn.wk")?,
                bk: p(g, "attn.bk")?,
                wv: p(g, "attn.wv")?,
                bv: p(g, "attn.bv")?,
                wo: p(g, "attn.wo")?,
                bo: p(g, "attn.bo")?,
            };
            let attn = g.attention(x, w, &mask, batch.batch, batch.seq, self.config.heads)?;
            let res = g.add(x, attn)?;
            let gain = p(g, "attn_layernorm.gain")?;
            let bias = p(g, "attn_layernorm.bias")?;
            x = g.layer_norm(res, gain, bias)?;

            let w1 = p(g, "ffn.w1")?;
            let b1 = p(g, "ffn.b1")?;
            let w2 = p(g, "ffn.w2")?;
            let b2 = p(g, "ffn.b2")?;
            let h1 = g.linear(x, w1, b1)?;
            let h1 = g.gelu(h1);
            let h2 = g.linear(h1, w2, b2)?;
            let res = g.add(x, h2)?;
            let gain = p(g, "ffn_layernorm.gain")?;
            let bias = p(g, "ffn_layernorm.bias")?;
            x = g.layer_norm(res, gain, bias)?;
        }
        Ok(x)
    }

    /// MLM logits [batch*seq × vocab]: transform, then project against
    /// the transposed embedding and add the tied output bias.
    pub fn forward_mlm_graph(&self, g: &mut Graph, batch: &Batch) -> Result<NodeId> {
        let x = self.encode(g, batch)?;
        let w = g.param(&self.params, "body.mlm_transform.dense.w")?;
        let b = g.param(&self.params, "body.mlm_transform.dense.b")?;
        let t = g.linear(x, w, b)?;
        let t = g.gelu(t);
        let gain = g.param(&self.params, "body.mlm_transform.layernorm.gain")?;
        let bias = g.param(&self.params, "body.mlm_transform.layernorm.bias")?;
        let t = g.layer_norm(t, gain, bias)?;
        let embedding = g.param(&self.params, "lexical.embedding")?;
        let proj = g.matmul_bt(t, embedding)?;
        let out_bias = g.param(&self.params, "lexical.output_bias")?;
        g.add_bias(proj, out_bias)
    }

    /// POS logits [batch*seq × n_tags].
    pub fn forward_pos_graph(&self, g: &mut Graph, batch: &Batch) -> Result<NodeId> {
        let x = self.encode(g, batch)?;
        let w = g.param(&self.params, "body.pos_head.w")?;
        let b = g.param(&self.params, "body.pos_head.b")?;
        g.linear(x, w, b)
    }

    pub fn forward_mlm(&self, batch: &Batch) -> Result<Tensor> {
        let mut g = Graph::new();
        let id = self.forward_mlm_graph(&mut g, batch)?;
        Ok(g.value(id).clone())
    }

    pub fn forward_pos(&self, batch: &Batch) -> Result<Tensor> {
        let mut g = Graph::new();
        let id = self.forward_pos_graph(&mut g, batch)?;
        Ok(g.value(id).clone())
    }
}

/// Combine a body with a (possibly different-vocabulary) lexical layer.
/// Body parameters are copied untouched; the assembled model speaks the
/// lexical layer's vocabulary end to end.
pub fn swap_lexical(body: &TransformerBody, lexical: &LexicalLayer) -> Result<TaggerModel> {
    if lexical.hidden() != body.config.hidden {
        return Err(Error::HiddenSizeMismatch {
            lexical: lexical.hidden(),
            body: body.config.hidden,
        });
    }
    let config = body.config.with_vocab_size(lexical.vocab_size());
    let mut params = ParamStore::new();
    for (name, entry) in lexical.params.iter() {
        params.insert(name, entry.tensor.clone(), entry.trainable)?;
    }
    for (name, entry) in body.params.iter() {
        params.insert(name, entry.tensor.clone(), entry.trainable)?;
    }
    Ok(TaggerModel { config, vocab: lexical.vocab.clone(), params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::SPECIAL_TOKENS;

    fn tiny_vocab(n_content: usize) -> Vocabulary {
        let content: Vec<String> = (0..n_content).map(|i| format!("t{i}")).collect();
        let refs: Vec<&str> = content.iter().map(|s| s.as_str()).collect();
        Vocabulary::new(&refs).unwrap()
    }

    fn tiny_config(vocab: &Vocabulary) -> ModelConfig {
        ModelConfig {
            layers: 2,
            hidden: 16,
            heads: 2,
            ffn: 32,
            vocab_size: vocab.len(),
            max_positions: 16,
            n_tags: 16,
            seq_len: 8,
        }
    }

    fn batch_of(ids: &[u32], batch: usize, seq: usize) -> Batch {
        Batch { ids: ids.to_vec(), batch, seq }
    }

    #[test]
    fn toy_preset_shapes() {
        let vocab = tiny_vocab(100);
        let config = ModelConfig::toy().with_vocab_size(vocab.len());
        let model = TaggerModel::init(config, vocab, 1).unwrap();
        let ids: Vec<u32> = (0..128u32).map(|i| 5 + (i % 100)).collect();
        let logits = model.forward_mlm(&batch_of(&ids, 1, 128)).unwrap();
        assert_eq!(logits.shape(), &[128, 105]);
        let pos = model.forward_pos(&batch_of(&ids, 1, 128)).unwrap();
        assert_eq!(pos.shape(), &[128, 16]);
    }

    #[test]
    fn identical_rows_give_identical_logits() {
        let vocab = tiny_vocab(20);
        let config = tiny_config(&vocab);
        let model = TaggerModel::init(config, vocab, 2).unwrap();
        let row: Vec<u32> = vec![2, 5, 6, 7, 8, 9, 3, 0];
        let mut ids = row.clone();
        ids.extend(&row);
        let logits = model.forward_mlm(&batch_of(&ids, 2, 8)).unwrap();
        let v = logits.data();
        let half = v.len() / 2;
        for i in 0..half {
            assert_eq!(v[i].to_bits(), v[half + i].to_bits());
        }
    }

    #[test]
    fn zeroed_model_predicts_uniformly() {
        let vocab = tiny_vocab(59); // |V| = 64
        let config = tiny_config(&vocab);
        let mut model = TaggerModel::init(config, vocab, 3).unwrap();
        for (_, entry) in model.params.iter_mut() {
            entry.tensor.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let ids: Vec<u32> = vec![2, 5, 6, 7, 8, 9, 3, 0];
        let logits = model.forward_mlm(&batch_of(&ids, 1, 8)).unwrap();
        // Constant across the vocabulary at every position.
        let v = logits.data();
        for row in v.chunks(64) {
            for x in row {
                assert_eq!(*x, row[0]);
            }
        }
        let loss = crate::numcore::cross_entropy(&logits, &[5, 6, -1, -1, -1, -1, -1, -1], -1)
            .unwrap();
        assert!((loss - (64f32).ln()).abs() < 1e-5, "loss {loss}");
    }

    #[test]
    fn out_of_range_id_is_an_error() {
        let vocab = tiny_vocab(10);
        let config = tiny_config(&vocab);
        let model = TaggerModel::init(config, vocab, 4).unwrap();
        let ids: Vec<u32> = vec![2, 5, 999, 0, 0, 0, 0, 3];
        assert!(model.forward_mlm(&batch_of(&ids, 1, 8)).is_err());
    }

    #[test]
    fn pos_head_last_dim_is_sixteen() {
        let vocab = tiny_vocab(12);
        let config = tiny_config(&vocab);
        let model = TaggerModel::init(config, vocab, 5).unwrap();
        let ids: Vec<u32> = vec![2, 5, 6, 3, 0, 0, 0, 0];
        let pos = model.forward_pos(&batch_of(&ids, 1, 8)).unwrap();
        assert_eq!(pos.shape()[1], 16);
    }

    #[test]
    fn batch_permutation_permutes_logits() {
        let vocab = tiny_vocab(20);
        let config = tiny_config(&vocab);
        let model = TaggerModel::init(config, vocab, 6).unwrap();
        let a: Vec<u32> = vec![2, 5, 6, 7, 3, 0, 0, 0];
        let b: Vec<u32> = vec![2, 9, 10, 3, 0, 0, 0, 0];
        let mut ab = a.clone();
        ab.extend(&b);
        let mut ba = b.clone();
        ba.extend(&a);
        let l_ab = model.forward_pos(&batch_of(&ab, 2, 8)).unwrap();
        let l_ba = model.forward_pos(&batch_of(&ba, 2, 8)).unwrap();
        let half = l_ab.len() / 2;
        for i in 0..half {
            assert_eq!(l_ab.data()[i].to_bits(), l_ba.data()[half + i].to_bits());
            assert_eq!(l_ab.data()[half + i].to_bits(), l_ba.data()[i].to_bits());
        }
    }

    #[test]
    fn weight_tying_is_structural() {
        // Perturbing one embedding row must shift the input pathway of
        // that token and the MLM logit column of that token.
        let vocab = tiny_vocab(20);
        let config = tiny_config(&vocab);
        let mut model = TaggerModel::init(config, vocab, 7).unwrap();
        let ids: Vec<u32> = vec![2, 5, 6, 7, 3, 0, 0, 0];
        let before = model.forward_mlm(&batch_of(&ids, 1, 8)).unwrap();

        let hidden = model.config.hidden;
        let row = 6usize;
        {
            let emb = model.params.get_mut("lexical.embedding").unwrap();
            for v in &mut emb.data_mut()[row * hidden..(row + 1) * hidden] {
                *v += 0.5;
            }
        }
        let after = model.forward_mlm(&batch_of(&ids, 1, 8)).unwrap();

        let v_count = model.vocab.len();
        // Input pathway: position 2 consumed token 6, its logits all move.
        let pos2_changed = (0..v_count)
            .any(|c| before.data()[2 * v_count + c] != after.data()[2 * v_count + c]);
        assert!(pos2_changed, "input embedding pathway did not shift");
        // Output pathway: column 6 moves even at positions that did not
        // consume token 6.
        let col6_changed_at_pos1 =
            before.data()[v_count + row] != after.data()[v_count + row];
        assert!(col6_changed_at_pos1, "tied output projection did not shift");
    }

    #[test]
    fn swap_with_own_lexical_is_identity() {
        let vocab = tiny_vocab(20);
        let config = tiny_config(&vocab);
        let model = TaggerModel::init(config, vocab, 8).unwrap();
        let ids: Vec<u32> = vec![2, 5, 6, 7, 3, 0, 0, 0];
        let before = model.forward_mlm(&batch_of(&ids, 1, 8)).unwrap();
        let reassembled = swap_lexical(&model.body(), &model.lexical()).unwrap();
        let after = reassembled.forward_mlm(&batch_of(&ids, 1, 8)).unwrap();
        assert!(before.bits_eq(&after));
    }

    #[test]
    fn swap_changes_vocabulary_end_to_end() {
        let vocab30 = tiny_vocab(25); // 30 tokens
        let config = tiny_config(&vocab30);
        let model = TaggerModel::init(config, vocab30, 9).unwrap();
        let vocab10 = tiny_vocab(5); // 10 tokens
        let fresh = LexicalLayer::init(vocab10, model.config.hidden, 10);
        let swapped = swap_lexical(&model.body(), &fresh).unwrap();
        assert_eq!(swapped.config.vocab_size, 10);
        let ids: Vec<u32> = vec![2, 5, 6, 7, 3, 0, 0, 0];
        let logits = swapped.forward_mlm(&batch_of(&ids, 1, 8)).unwrap();
        assert_eq!(logits.shape()[1], 10);
    }

    #[test]
    fn swap_then_swap_back_is_bit_exact() {
        let vocab = tiny_vocab(20);
        let config = tiny_config(&vocab);
        let model = TaggerModel::init(config, vocab, 11).unwrap();
        let original_lexical = model.lexical();
        let body = model.body();
        let other = LexicalLayer::init(tiny_vocab(8), model.config.hidden, 12);

        let swapped = swap_lexical(&body, &other).unwrap();
        let back = swap_lexical(&swapped.body(), &original_lexical).unwrap();
        let ids: Vec<u32> = vec![2, 5, 6, 7, 3, 0, 0, 0];
        let before = model.forward_mlm(&batch_of(&ids, 1, 8)).unwrap();
        let after = back.forward_mlm(&batch_of(&ids, 1, 8)).unwrap();
        assert!(before.bits_eq(&after));
    }

    #[test]
    fn swap_rejects_hidden_mismatch_naming_both() {
        let vocab = tiny_vocab(10);
        let config = tiny_config(&vocab);
        let body = TransformerBody::init(config, 1).unwrap();
        let lexical = LexicalLayer::init(tiny_vocab(10), 24, 2);
        let err = swap_lexical(&body, &lexical).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("24") && msg.contains("16"), "message: {msg}");
    }

    #[test]
    fn trainable_selectors_partition_the_store() {
        let vocab = tiny_vocab(10);
        let config = tiny_config(&vocab);
        let mut model = TaggerModel::init(config, vocab, 13).unwrap();

        set_trainable(&mut model.params, TrainableGroup::BodyOnly);
        assert!(!model.params.entry("lexical.embedding").unwrap().trainable);
        assert!(!model.params.entry("lexical.output_bias").unwrap().trainable);
        assert!(model.params.iter().filter(|(n, _)| n.starts_with("body.")).all(|(_, e)| e.trainable));

        set_trainable(&mut model.params, TrainableGroup::LexicalOnly);
        assert!(model.params.entry("lexical.embedding").unwrap().trainable);
        assert!(model.params.iter().filter(|(n, _)| n.starts_with("body.")).all(|(_, e)| !e.trainable));

        set_trainable(&mut model.params, TrainableGroup::All);
        assert!(model.params.iter().all(|(_, e)| e.trainable));
    }

    #[test]
    fn count_parameters_matches_presets_within_paper_tolerances() {
        let bert = count_parameters(&ModelConfig::bert_base());
        let total_err = (bert.total as f64 - 110e6).abs() / 110e6;
        let lex_err = (bert.lexical as f64 - 24e6).abs() / 24e6;
        assert!(total_err < 0.05, "bert-base total {} ({:.2}%)", bert.total, 100.0 * total_err);
        assert!(lex_err < 0.05, "bert-base lexical {} ({:.2}%)", bert.lexical, 100.0 * lex_err);

        let mbert = count_parameters(&ModelConfig::mbert_base());
        let mlex_err = (mbert.lexical as f64 - 92e6).abs() / 92e6;
        assert!(mlex_err < 0.02, "mbert lexical {} ({:.2}%)", mbert.lexical, 100.0 * mlex_err);
    }

    #[test]
    fn count_parameters_toy_matches_hand_sum_and_store() {
        // Hand enumeration for layers=2, hidden=64, heads=4, ffn=256,
        // vocab=2000, max_positions=128, tags=16:
        //   lexical: 2000*64 + 2000                    = 130,000
        //   positions: 128*64                          =   8,192
        //   embed layernorm: 2*64                      =     128
        //   per layer: 4*(64*64+64) + 2*64
        //            + 64*256+256 + 256*64+64 + 2*64   =  49,984
        //   mlm transform: 64*64+64 + 2*64             =   4,288
        //   pos head: 64*16+16                         =   1,040
        let config = ModelConfig::toy();
        let count = count_parameters(&config);
        assert_eq!(count.lexical, 130_000);
        assert_eq!(count.total, 130_000 + 8_192 + 128 + 2 * 49_984 + 4_288 + 1_040);

        let vocab_content: Vec<String> = (0..1995).map(|i| format!("t{i}")).collect();
        let refs: Vec<&str> = vocab_content.iter().map(|s| s.as_str()).collect();
        let vocab = Vocabulary::new(&refs).unwrap();
        assert_eq!(vocab.len(), 2000);
        let model = TaggerModel::init(config, vocab, 1).unwrap();
        assert_eq!(model.params.total_len() as u64, count.total);
    }

    #[test]
    fn special_token_count_is_stable() {
        // The vocab math above hinges on five specials.
        assert_eq!(SPECIAL_TOKENS.len(), 5);
    }
}
