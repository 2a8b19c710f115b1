//! Integer encoding of amino-acid strings and the three-layer 1D CNN encoder.

use graphcl_autodiff::{Real, Tape, Tensor, Var};
use rand::Rng;

use crate::error::{Error, Result};
use crate::init::{glorot, glorot_shaped};

/// Padding token; its embedding row is fixed at zero.
pub const PAD: usize = 0;
/// The 25 accepted one-letter codes: the alphabet without `J`.
pub const AMINO_ACIDS: &str = "ABCDEFGHIKLMNOPQRSTUVWXYZ";
pub const UNKNOWN: usize = AMINO_ACIDS.len() + 1;
/// Tokens in use, excluding padding.
pub const VOCAB: usize = UNKNOWN;

/// Alphabetical rank among the accepted codes, so `A → 1`, `B → 2`, `C → 3`.
/// Lowercase letters are folded to uppercase; anything else is `UNKNOWN`.
pub fn token_of(c: char) -> usize {
    let upper = c.to_ascii_uppercase();
    AMINO_ACIDS.find(upper).map_or(UNKNOWN, |i| i + 1)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedProtein {
    pub tokens: Vec<usize>,
    pub original_len: usize,
}

impl TokenizedProtein {
    pub fn truncated(&self) -> bool {
        self.original_len > self.tokens.len()
    }
}

/// Right-pads with [`PAD`] or truncates to exactly `max_len` tokens.
pub fn tokenize_protein(sequence: &str, max_len: usize) -> Result<TokenizedProtein> {
    let sequence = sequence.trim();
    if sequence.is_empty() {
        return Err(Error::Invalid("empty protein sequence".into()));
    }
    let mut tokens: Vec<usize> = sequence.chars().take(max_len).map(token_of).collect();
    tokens.resize(max_len, PAD);
    Ok(TokenizedProtein {
        tokens,
        original_len: sequence.chars().count(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnShape {
    pub embed_dim: usize,
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub max_len: usize,
    pub out_dim: usize,
}

impl CnnShape {
    pub fn check(&self) -> Result<()> {
        if self.channels.is_empty() || self.kernel == 0 || self.embed_dim == 0 || self.out_dim == 0 {
            return Err(Error::Invalid(format!("degenerate protein encoder shape {self:?}")));
        }
        let shrink = self.channels.len() * (self.kernel - 1);
        if self.max_len <= shrink {
            return Err(Error::Invalid(format!(
                "protein length {} leaves no positions after {} convolutions of width {}",
                self.max_len,
                self.channels.len(),
                self.kernel
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<S> {
    /// `[kernel, in, out]`
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnEncoder<S> {
    /// Rows for tokens `1..=VOCAB`; the padding row is implicit and zero.
    pub embedding: Tensor<S>,
    pub convs: Vec<ConvLayer<S>>,
    pub proj_weight: Tensor<S>,
    pub proj_bias: Tensor<S>,
    pub max_len: usize,
}

impl<S: Real> CnnEncoder<S> {
    pub fn new(shape: &CnnShape, rng: &mut impl Rng) -> Result<Self> {
        shape.check()?;
        let embedding = glorot(VOCAB, shape.embed_dim, rng);
        let mut convs = Vec::new();
        let mut c_in = shape.embed_dim;
        for &c_out in &shape.channels {
            let k = shape.kernel;
            convs.push(ConvLayer {
                weight: glorot_shaped(vec![k, c_in, c_out], k * c_in, k * c_out, rng),
                bias: Tensor::zeros(vec![1, c_out]),
            });
            c_in = c_out;
        }
        Ok(Self {
            embedding,
            convs,
            proj_weight: glorot(c_in, shape.out_dim, rng),
            proj_bias: Tensor::zeros(vec![1, shape.out_dim]),
            max_len: shape.max_len,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.proj_weight.shape()[1]
    }

    /// Embedding table including the zero padding row, `(VOCAB + 1) × e`.
    pub fn full_table(&self) -> Tensor<S> {
        let e = self.embedding.shape()[1];
        let mut data = vec![S::zero(); e];
        data.extend_from_slice(self.embedding.data());
        Tensor::new(vec![VOCAB + 1, e], data).expect("table shape")
    }
}

/// Tape handles for one bound encoder.
#[derive(Debug, Clone)]
pub struct CnnVars {
    pub embedding: Var,
    /// `embedding` with the constant zero padding row stacked on top.
    pub table: Var,
    pub convs: Vec<(Var, Var)>,
    pub proj_weight: Var,
    pub proj_bias: Var,
}

impl CnnVars {
    pub fn new<S: Real>(
        tape: &mut Tape<S>,
        embedding: Var,
        convs: Vec<(Var, Var)>,
        proj_weight: Var,
        proj_bias: Var,
    ) -> Result<Self> {
        let e = tape.value(embedding).shape()[1];
        let pad_row = tape.constant(Tensor::zeros(vec![1, e]));
        let table = tape.concat(&[pad_row, embedding], 0)?;
        Ok(Self {
            embedding,
            table,
            convs,
            proj_weight,
            proj_bias,
        })
    }
}

/// Embedding, then `relu(conv)` per layer, max over positions, then an affine map.
pub fn protein_encode<S: Real>(tape: &mut Tape<S>, tokens: &[usize], vars: &CnnVars) -> Result<Var> {
    let mut x = tape.embedding(vars.table, tokens, Some(PAD))?;
    for &(w, b) in &vars.convs {
        let y = tape.conv1d(x, w, Some(b))?;
        x = tape.relu(y)?;
    }
    let pooled = tape.max_cols(x)?;
    let projected = tape.matmul(pooled, vars.proj_weight)?;
    Ok(tape.add_row(projected, vars.proj_bias)?)
}
