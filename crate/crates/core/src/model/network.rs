use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{ModelError, ModelShape, Trainable};
use crate::corpus::VocabHash;
use crate::embedding::EmbeddingMatrix;
use crate::nnkernel::{
    bce_loss, conv1d_backward, conv1d_backward_parts, conv1d_forward, dense_backward, dense_forward, maxpool1d,
    maxpool1d_backward, relu, relu_backward, sigmoid_scalar, Conv1DParams, DenseParams, Scalar, Tensor,
};

/// Parameter blocks in checkpoint order.
pub(crate) const BLOCK_NAMES: [&str; 9] =
    ["embedding", "conv1.w", "conv1.b", "conv2.w", "conv2.b", "dense.w", "dense.b", "out.w", "out.b"];

/// Index into [`Trainable::flags`] for each block.
const BLOCK_LAYER: [usize; 9] = [0, 1, 1, 2, 2, 3, 3, 4, 4];

#[derive(Debug, Clone, PartialEq)]
pub struct SentimentCNN<T> {
    shape: ModelShape,
    vocab_hash: VocabHash,
    seed: u64,
    trainable: Trainable,
    /// `[V+1, emb_dim]`; row 0 is the pad row and is never updated.
    embedding: Tensor<T>,
    conv1: Conv1DParams<T>,
    conv2: Conv1DParams<T>,
    dense: DenseParams<T>,
    out: DenseParams<T>,
}

/// Gradients laid out like the model's parameter blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads<T> {
    pub blocks: [Vec<T>; 9],
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput<T> {
    pub loss: T,
    pub probs: Vec<T>,
    /// Fingerprint of ReLU masks and pooling choices, for gradient checking.
    pub pattern: u64,
}

/// Output shape of every stage for one review.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub layers: Vec<(String, Vec<usize>)>,
    pub probability: f64,
}

pub fn build_model(
    vocab_size: usize,
    emb: &EmbeddingMatrix,
    emb_trainable: bool,
    seed: u64,
) -> Result<SentimentCNN<f32>, ModelError> {
    build_model_with_shape(ModelShape::table1(), vocab_size, emb, emb_trainable, seed)
}

/// Embedding copied from `emb`; conv, dense and output layers Glorot-initialised
/// from one seeded stream in that order, biases zero.
pub fn build_model_with_shape<T: Scalar>(
    shape: ModelShape,
    vocab_size: usize,
    emb: &EmbeddingMatrix,
    emb_trainable: bool,
    seed: u64,
) -> Result<SentimentCNN<T>, ModelError> {
    if emb.vocab_size() != vocab_size || emb.dim() != shape.emb_dim {
        return Err(ModelError::Shape(format!(
            "embedding is {}x{}, model needs {}x{}",
            emb.rows(),
            emb.dim(),
            vocab_size + 1,
            shape.emb_dim
        )));
    }
    let flat = shape.flatten_len()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let conv1 = Conv1DParams::glorot(shape.conv1_filters, shape.conv1_width, shape.emb_dim, 1, &mut rng);
    let conv2 = Conv1DParams::glorot(shape.conv2_filters, shape.conv2_width, shape.conv1_filters, 1, &mut rng);
    let dense = DenseParams::glorot(flat, shape.hidden, &mut rng);
    let out = DenseParams::glorot(shape.hidden, 1, &mut rng);
    let embedding = Tensor::new(
        vec![vocab_size + 1, shape.emb_dim],
        emb.data().iter().map(|&v| T::from_f64(v as f64)).collect(),
    )?;
    let trainable = Trainable { embedding: emb_trainable, ..Trainable::all() };
    SentimentCNN::from_parts(shape, embedding, conv1, conv2, dense, out, trainable, emb.vocab_hash().clone(), seed)
}

fn mix(h: &mut u64, v: u64) {
    *h ^= v;
    *h = h.wrapping_mul(0x0000_0100_0000_01b3);
}

fn mix_mask<T: Scalar>(h: &mut u64, values: &[T]) {
    let mut word = 0u64;
    for (i, v) in values.iter().enumerate() {
        word = (word << 1) | u64::from(*v > T::zero());
        if i % 64 == 63 {
            mix(h, word);
            word = 0;
        }
    }
    mix(h, word);
}

struct ExampleCache<T> {
    x: Tensor<T>,
    /// Rows before the trailing pad run.
    content_rows: usize,
    c1: Tensor<T>,
    argmax1: Vec<usize>,
    p1: Tensor<T>,
    c2: Tensor<T>,
    argmax2: Vec<usize>,
    flat: Vec<T>,
}

struct ExampleGrads<T> {
    conv1_w: Option<Tensor<T>>,
    conv1_b: Option<Tensor<T>>,
    conv2_w: Tensor<T>,
    conv2_b: Tensor<T>,
    /// `[content_rows, emb_dim]` when the embedding is trainable.
    emb_rows: Option<Tensor<T>>,
}

impl<T: Scalar> SentimentCNN<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        shape: ModelShape,
        embedding: Tensor<T>,
        conv1: Conv1DParams<T>,
        conv2: Conv1DParams<T>,
        dense: DenseParams<T>,
        out: DenseParams<T>,
        trainable: Trainable,
        vocab_hash: VocabHash,
        seed: u64,
    ) -> Result<Self, ModelError> {
        let flat = shape.flatten_len()?;
        let checks: [(&str, &[usize], Vec<usize>); 9] = [
            ("embedding", embedding.shape(), vec![embedding.shape().first().copied().unwrap_or(0), shape.emb_dim]),
            ("conv1.w", conv1.weights.shape(), vec![shape.conv1_filters, shape.conv1_width, shape.emb_dim]),
            ("conv1.b", conv1.bias.shape(), vec![shape.conv1_filters]),
            ("conv2.w", conv2.weights.shape(), vec![shape.conv2_filters, shape.conv2_width, shape.conv1_filters]),
            ("conv2.b", conv2.bias.shape(), vec![shape.conv2_filters]),
            ("dense.w", dense.weights.shape(), vec![flat, shape.hidden]),
            ("dense.b", dense.bias.shape(), vec![shape.hidden]),
            ("out.w", out.weights.shape(), vec![shape.hidden, 1]),
            ("out.b", out.bias.shape(), vec![1]),
        ];
        for (name, got, want) in checks {
            if got != want.as_slice() {
                return Err(ModelError::Shape(format!("{name} has shape {got:?}, expected {want:?}")));
            }
        }
        if embedding.shape()[0] == 0 {
            return Err(ModelError::Shape("embedding needs at least the pad row".into()));
        }
        if conv1.stride != 1 || conv2.stride != 1 {
            return Err(ModelError::Shape("convolutions must have stride 1".into()));
        }
        Ok(Self { shape, vocab_hash, seed, trainable, embedding, conv1, conv2, dense, out })
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.shape()[0] - 1
    }

    pub fn vocab_hash(&self) -> &VocabHash {
        &self.vocab_hash
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn trainable(&self) -> Trainable {
        self.trainable
    }

    pub fn set_trainable(&mut self, trainable: Trainable) {
        self.trainable = trainable;
    }

    pub fn embedding(&self) -> &Tensor<T> {
        &self.embedding
    }

    pub fn conv1(&self) -> &Conv1DParams<T> {
        &self.conv1
    }

    pub fn conv2(&self) -> &Conv1DParams<T> {
        &self.conv2
    }

    pub fn dense(&self) -> &DenseParams<T> {
        &self.dense
    }

    pub fn out(&self) -> &DenseParams<T> {
        &self.out
    }

    /// Replace the first convolution (same shape required).
    pub fn set_conv1(&mut self, conv1: Conv1DParams<T>) -> Result<(), ModelError> {
        if conv1.weights.shape() != self.conv1.weights.shape() || conv1.bias.shape() != self.conv1.bias.shape() {
            return Err(ModelError::Shape(format!(
                "conv1 replacement has shape {:?}, expected {:?}",
                conv1.weights.shape(),
                self.conv1.weights.shape()
            )));
        }
        self.conv1 = conv1;
        Ok(())
    }

    /// The embedding as an `f32` matrix.
    pub fn embedding_matrix(&self) -> EmbeddingMatrix {
        let data = self.embedding.data().iter().map(|v| v.as_f64() as f32).collect();
        EmbeddingMatrix::new(self.vocab_size(), self.shape.emb_dim, data, self.vocab_hash.clone())
            .expect("model embedding has a valid shape")
    }

    pub fn cast<U: Scalar>(&self) -> SentimentCNN<U> {
        SentimentCNN {
            shape: self.shape,
            vocab_hash: self.vocab_hash.clone(),
            seed: self.seed,
            trainable: self.trainable,
            embedding: self.embedding.cast(),
            conv1: Conv1DParams { weights: self.conv1.weights.cast(), bias: self.conv1.bias.cast(), stride: 1 },
            conv2: Conv1DParams { weights: self.conv2.weights.cast(), bias: self.conv2.bias.cast(), stride: 1 },
            dense: DenseParams { weights: self.dense.weights.cast(), bias: self.dense.bias.cast() },
            out: DenseParams { weights: self.out.weights.cast(), bias: self.out.bias.cast() },
        }
    }

    pub fn blocks(&self) -> [&[T]; 9] {
        [
            self.embedding.data(),
            self.conv1.weights.data(),
            self.conv1.bias.data(),
            self.conv2.weights.data(),
            self.conv2.bias.data(),
            self.dense.weights.data(),
            self.dense.bias.data(),
            self.out.weights.data(),
            self.out.bias.data(),
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut [T]; 9] {
        [
            self.embedding.data_mut(),
            self.conv1.weights.data_mut(),
            self.conv1.bias.data_mut(),
            self.conv2.weights.data_mut(),
            self.conv2.bias.data_mut(),
            self.dense.weights.data_mut(),
            self.dense.bias.data_mut(),
            self.out.weights.data_mut(),
            self.out.bias.data_mut(),
        ]
    }

    pub fn block_sizes(&self) -> [usize; 9] {
        self.blocks().map(|b| b.len())
    }

    /// Whether each parameter block is updated by the optimizer.
    pub fn block_trainable(&self) -> [bool; 9] {
        let flags = self.trainable.flags();
        BLOCK_LAYER.map(|l| flags[l])
    }

    /// All parameters concatenated in block order.
    pub fn to_flat(&self) -> Vec<T> {
        self.blocks().concat()
    }

    pub fn set_flat(&mut self, flat: &[T]) -> Result<(), ModelError> {
        let total: usize = self.block_sizes().iter().sum();
        if flat.len() != total {
            return Err(ModelError::Shape(format!("{} values for {total} parameters", flat.len())));
        }
        let mut offset = 0;
        for block in self.blocks_mut() {
            let n = block.len();
            block.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    fn check_ids(&self, ids: &[u32]) -> Result<(), ModelError> {
        if ids.len() != self.shape.seq_len {
            return Err(ModelError::Shape(format!("review has {} ids, model expects {}", ids.len(), self.shape.seq_len)));
        }
        let v = self.vocab_size();
        match ids.iter().find(|&&id| id as usize > v) {
            Some(&id) => Err(ModelError::IdOutOfRange { id, vocab_size: v }),
            None => Ok(()),
        }
    }

    fn lookup(&self, ids: &[u32]) -> (Tensor<T>, usize) {
        let d = self.shape.emb_dim;
        let mut x = vec![T::zero(); ids.len() * d];
        let table = self.embedding.data();
        for (row, &id) in x.chunks_mut(d).zip(ids) {
            let id = id as usize;
            row.copy_from_slice(&table[id * d..(id + 1) * d]);
        }
        let content_rows = ids.iter().rposition(|&id| id != 0).map_or(0, |p| p + 1);
        (Tensor::new(vec![ids.len(), d], x).expect("lookup shape"), content_rows)
    }

    fn features(&self, ids: &[u32]) -> Result<ExampleCache<T>, ModelError> {
        let (x, content_rows) = self.lookup(ids);
        let c1 = conv1d_forward(&x, &self.conv1)?;
        let (p1, argmax1) = maxpool1d(&relu(&c1), self.shape.pool_size, self.shape.pool_stride)?;
        let c2 = conv1d_forward(&p1, &self.conv2)?;
        let (p2, argmax2) = maxpool1d(&relu(&c2), self.shape.pool_size, self.shape.pool_stride)?;
        Ok(ExampleCache { x, content_rows, c1, argmax1, p1, c2, argmax2, flat: p2.into_data() })
    }

    /// Dense head on stacked features: hidden pre-activations and output logits.
    fn head(&self, flat: Vec<T>, batch: usize) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>, Tensor<T>), ModelError> {
        let flat = Tensor::new(vec![batch, self.dense.inputs()], flat)?;
        let h_pre = dense_forward(&flat, &self.dense)?;
        let h = relu(&h_pre);
        let z = dense_forward(&h, &self.out)?;
        Ok((flat, h_pre, h, z))
    }

    /// Probability of the positive class for each review (ids of length `seq_len`).
    pub fn forward(&self, batch: &[&[u32]]) -> Result<Vec<T>, ModelError> {
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        for ids in batch {
            self.check_ids(ids)?;
        }
        let caches: Vec<Result<ExampleCache<T>, ModelError>> = batch.par_iter().map(|ids| self.features(ids)).collect();
        let mut flat = Vec::with_capacity(batch.len() * self.dense.inputs());
        for c in caches {
            flat.extend_from_slice(&c?.flat);
        }
        let (_, _, _, z) = self.head(flat, batch.len())?;
        Ok(z.data().iter().map(|&v| sigmoid_scalar(v)).collect())
    }

    /// Runs one review and records the shape after every stage.
    pub fn trace(&self, ids: &[u32]) -> Result<ForwardTrace, ModelError> {
        self.check_ids(ids)?;
        let (x, _) = self.lookup(ids);
        let c1 = relu(&conv1d_forward(&x, &self.conv1)?);
        let (p1, _) = maxpool1d(&c1, self.shape.pool_size, self.shape.pool_stride)?;
        let c2 = relu(&conv1d_forward(&p1, &self.conv2)?);
        let (p2, _) = maxpool1d(&c2, self.shape.pool_size, self.shape.pool_stride)?;
        let flat = Tensor::new(vec![p2.len()], p2.data().to_vec())?;
        let (_, _, h, z) = self.head(p2.data().to_vec(), 1)?;
        let layers = [
            ("embedding", x.shape()),
            ("conv1", c1.shape()),
            ("pool1", p1.shape()),
            ("conv2", c2.shape()),
            ("pool2", p2.shape()),
            ("flatten", flat.shape()),
            ("dense", &h.shape()[1..]),
            ("out", &z.shape()[1..]),
        ]
        .iter()
        .map(|(n, s)| (n.to_string(), s.to_vec()))
        .collect();
        Ok(ForwardTrace { layers, probability: sigmoid_scalar(z.data()[0]).as_f64() })
    }

    fn example_backward(&self, cache: &ExampleCache<T>, dflat: &[T]) -> Result<ExampleGrads<T>, ModelError> {
        let [c1_len, p1_len, c2_len, p2_len] = self.shape.lengths()?;
        let (f1, f2) = (self.shape.conv1_filters, self.shape.conv2_filters);
        let dp2 = Tensor::new(vec![p2_len, f2], dflat.to_vec())?;
        let da2 = maxpool1d_backward(&dp2, &cache.argmax2, [c2_len, f2])?;
        let dc2 = relu_backward(&cache.c2, &da2)?;
        let g2 = conv1d_backward(&cache.p1, &self.conv2, &dc2)?;
        let mut out = ExampleGrads {
            conv1_w: None,
            conv1_b: None,
            conv2_w: g2.grad_weights,
            conv2_b: g2.grad_bias,
            emb_rows: None,
        };
        if !(self.trainable.conv1 || self.trainable.embedding) {
            return Ok(out);
        }
        debug_assert_eq!(g2.grad_x.shape(), [p1_len, f1]);
        let da1 = maxpool1d_backward(&g2.grad_x, &cache.argmax1, [c1_len, f1])?;
        let dc1 = relu_backward(&cache.c1, &da1)?;
        let rows = if self.trainable.embedding { cache.content_rows } else { 0 };
        let parts = conv1d_backward_parts(&cache.x, &self.conv1, &dc1, self.trainable.conv1, rows)?;
        out.conv1_w = parts.grad_weights;
        out.conv1_b = Some(parts.grad_bias);
        out.emb_rows = parts.grad_x;
        Ok(out)
    }

    /// Mean binary cross-entropy over the batch and its gradient, written into `grads`.
    /// Only blocks of trainable layers are filled; the others are left zero.
    pub fn loss_and_grads(
        &self,
        batch: &[&[u32]],
        labels: &[T],
        grads: &mut ModelGrads<T>,
    ) -> Result<StepOutput<T>, ModelError> {
        if batch.is_empty() || batch.len() != labels.len() {
            return Err(ModelError::Shape(format!("{} reviews for {} labels", batch.len(), labels.len())));
        }
        if grads.blocks.iter().map(Vec::len).ne(self.block_sizes()) {
            return Err(ModelError::Shape("gradient buffers do not match the model".into()));
        }
        for ids in batch {
            self.check_ids(ids)?;
        }
        let n = batch.len();
        let caches = batch.par_iter().map(|ids| self.features(ids)).collect::<Result<Vec<_>, _>>()?;
        let mut flat = Vec::with_capacity(n * self.dense.inputs());
        for c in &caches {
            flat.extend_from_slice(&c.flat);
        }
        let (flat, h_pre, h, z) = self.head(flat, n)?;
        let probs: Vec<T> = z.data().iter().map(|&v| sigmoid_scalar(v)).collect();
        let (loss, dprob) = bce_loss(&probs, labels)?;

        let mut pattern = 0xcbf2_9ce4_8422_2325u64;
        for c in &caches {
            mix_mask(&mut pattern, c.c1.data());
            mix_mask(&mut pattern, c.c2.data());
            c.argmax1.iter().chain(&c.argmax2).for_each(|&i| mix(&mut pattern, i as u64));
        }
        mix_mask(&mut pattern, h_pre.data());
        for p in &probs {
            let clamped = p.as_f64() < crate::nnkernel::BCE_EPS || p.as_f64() > 1.0 - crate::nnkernel::BCE_EPS;
            mix(&mut pattern, u64::from(clamped));
        }

        let dz: Vec<T> = dprob.iter().zip(&probs).map(|(&g, &p)| g * p * (T::one() - p)).collect();
        let dz = Tensor::new(vec![n, 1], dz)?;
        let g_out = dense_backward(&h, &self.out, &dz)?;
        let dh = relu_backward(&h_pre, &g_out.grad_x)?;
        let g_dense = dense_backward(&flat, &self.dense, &dh)?;
        let inputs = self.dense.inputs();
        let dflat = g_dense.grad_x.data();
        let per_example = caches
            .par_iter()
            .enumerate()
            .map(|(i, c)| self.example_backward(c, &dflat[i * inputs..(i + 1) * inputs]))
            .collect::<Result<Vec<_>, _>>()?;

        let trainable = self.block_trainable();
        for (block, &t) in grads.blocks.iter_mut().zip(&trainable) {
            if t {
                block.iter_mut().for_each(|v| *v = T::zero());
            }
        }
        let add = |dst: &mut Vec<T>, src: &[T]| dst.iter_mut().zip(src).for_each(|(d, s)| *d += *s);
        let b = &mut grads.blocks;
        if trainable[7] {
            b[7].copy_from_slice(g_out.grad_weights.data());
            b[8].copy_from_slice(g_out.grad_bias.data());
        }
        if trainable[5] {
            b[5].copy_from_slice(g_dense.grad_weights.data());
            b[6].copy_from_slice(g_dense.grad_bias.data());
        }
        let d = self.shape.emb_dim;
        for (eg, ids) in per_example.iter().zip(batch) {
            if trainable[3] {
                add(&mut b[3], eg.conv2_w.data());
                add(&mut b[4], eg.conv2_b.data());
            }
            if trainable[1] {
                if let (Some(w), Some(bias)) = (&eg.conv1_w, &eg.conv1_b) {
                    add(&mut b[1], w.data());
                    add(&mut b[2], bias.data());
                }
            }
            if trainable[0] {
                if let Some(rows) = &eg.emb_rows {
                    for (r, &id) in rows.data().chunks(d).zip(ids.iter()) {
                        if id != 0 {
                            let dst = &mut b[0][id as usize * d..(id as usize + 1) * d];
                            dst.iter_mut().zip(r).for_each(|(x, g)| *x += *g);
                        }
                    }
                }
            }
        }
        Ok(StepOutput { loss, probs, pattern })
    }
}

impl<T: Scalar> ModelGrads<T> {
    pub fn zeros_like(model: &SentimentCNN<T>) -> Self {
        Self { blocks: model.block_sizes().map(|n| vec![T::zero(); n]) }
    }

    pub fn to_flat(&self) -> Vec<T> {
        self.blocks.concat()
    }
}
