//! Prediction head and every loss term of the joint objective.

use graphcl_autodiff::{Real, Tape, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::glorot;

/// Three affine layers `2h → h → h → 1`, ReLU between them.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionHead<S> {
    pub v1: Tensor<S>,
    pub b1: Tensor<S>,
    pub v2: Tensor<S>,
    pub b2: Tensor<S>,
    pub v3: Tensor<S>,
    pub b3: Tensor<S>,
}

impl<S: Real> PredictionHead<S> {
    pub fn new(h: usize, rng: &mut impl Rng) -> Self {
        Self {
            v1: glorot(2 * h, h, rng),
            b1: Tensor::zeros(vec![1, h]),
            v2: glorot(h, h, rng),
            b2: Tensor::zeros(vec![1, h]),
            v3: glorot(h, 1, rng),
            b3: Tensor::zeros(vec![1, 1]),
        }
    }

    pub fn width(&self) -> usize {
        self.v2.shape()[0]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HeadVars {
    pub v1: Var,
    pub b1: Var,
    pub v2: Var,
    pub b2: Var,
    pub v3: Var,
    pub b3: Var,
}

/// Affinity for each row pair of `drugs` and `targets` (both `c×h`), giving `c×1`.
pub fn predict_affinity<S: Real>(tape: &mut Tape<S>, drugs: Var, targets: Var, head: &HeadVars) -> Result<Var> {
    let (dw, tw) = (tape.value(drugs).shape()[1], tape.value(targets).shape()[1]);
    let expected = tape.value(head.v1).shape()[0];
    if dw + tw != expected {
        return Err(Error::Invalid(format!(
            "head expects {expected} input columns, got drug {dw} + target {tw}"
        )));
    }
    let dt = tape.concat(&[drugs, targets], 1)?;
    let h1 = tape.matmul(dt, head.v1)?;
    let h1 = tape.add_row(h1, head.b1)?;
    let h1 = tape.relu(h1)?;
    let h2 = tape.matmul(h1, head.v2)?;
    let h2 = tape.add_row(h2, head.b2)?;
    let h2 = tape.relu(h2)?;
    let out = tape.matmul(h2, head.v3)?;
    Ok(tape.add_row(out, head.b3)?)
}

/// `(1/c) Σ (p − p̂)²` with labels entering as a constant column.
pub fn mse_loss<S: Real>(tape: &mut Tape<S>, predictions: Var, labels: &[S]) -> Result<Var> {
    let shape = tape.value(predictions).shape().to_vec();
    if shape.iter().product::<usize>() != labels.len() || labels.is_empty() {
        return Err(Error::Invalid(format!(
            "{} labels for predictions of shape {shape:?}",
            labels.len()
        )));
    }
    let y = tape.constant(Tensor::new(shape, labels.to_vec())?);
    let diff = tape.sub(predictions, y)?;
    let sq = tape.mul(diff, diff)?;
    Ok(tape.mean(sq)?)
}

/// Perturbation pair for one drug embedding: each vector lies in the
/// hyperoctant of `d` and has L2 norm `epsilon`.
///
/// If `d` is entirely zero the sign mask would erase the noise, so the
/// direction is drawn from the whole cube instead.
pub fn sample_noise_pair(d: &[f64], epsilon: f64, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
    (sample_noise(d, epsilon, rng), sample_noise(d, epsilon, rng))
}

pub fn sample_noise(d: &[f64], epsilon: f64, rng: &mut impl Rng) -> Vec<f64> {
    if epsilon == 0.0 || d.is_empty() {
        return vec![0.0; d.len()];
    }
    let unconstrained = d.iter().all(|&x| x == 0.0);
    loop {
        let raw: Vec<f64> = d
            .iter()
            .map(|&x| {
                let u: f64 = rng.gen();
                if unconstrained {
                    2.0 * u - 1.0
                } else {
                    u * sign(x)
                }
            })
            .collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        // an all-zero draw has no direction; draw again
        if norm > 0.0 {
            return raw.into_iter().map(|v| v * (epsilon / norm)).collect();
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// InfoNCE over the rows of two view matrices (`m×h`, row `i` of each is
/// the same drug): `Σ_i [logsumexp_j(e¹_i·e²_j / τ) − e¹_i·e²_i / τ]`.
pub fn contrastive_loss<S: Real>(tape: &mut Tape<S>, view1: Var, view2: Var, tau: f64, cosine: bool) -> Result<Var> {
    if !(tau > 0.0) {
        return Err(Error::Invalid(format!("temperature must be positive, got {tau}")));
    }
    let (a, b) = if cosine {
        (tape.normalize_rows(view1)?, tape.normalize_rows(view2)?)
    } else {
        (view1, view2)
    };
    let sim = tape.matmul_nt(a, b)?;
    let sim = tape.scale(sim, S::of(1.0 / tau))?;
    let m = tape.value(sim).shape()[0];
    let lse = tape.logsumexp_rows(sim)?;
    // diagonal picked out of the same matrix, so m = 1 cancels exactly
    let eye = tape.constant(Tensor::identity(m));
    let masked = tape.mul(sim, eye)?;
    let diag = tape.sum_rows(masked)?;
    let per_row = tape.sub(lse, diag)?;
    Ok(tape.sum(per_row)?)
}

/// `log mean_{u<v} exp(−2‖x_u − x_v‖₂)` over the rows of `x`.
///
/// Returns `None` when there are fewer than two rows to pair.
pub fn uniformity_loss<S: Real>(tape: &mut Tape<S>, x: Var) -> Result<Option<Var>> {
    let m = tape.value(x).shape()[0];
    if m < 2 {
        return Ok(None);
    }
    let (mut left, mut right) = (Vec::new(), Vec::new());
    for u in 0..m {
        for v in u + 1..m {
            left.push(u);
            right.push(v);
        }
    }
    let pairs = left.len();
    let xu = tape.gather_rows(x, &left)?;
    let xv = tape.gather_rows(x, &right)?;
    let diff = tape.sub(xu, xv)?;
    let dist = tape.row_norms(diff)?;
    let logits = tape.scale(dist, S::of(-2.0))?;
    let logits = tape.transpose(logits)?;
    let lse = tape.logsumexp_rows(logits)?;
    let log_p = tape.constant(Tensor::scalar(S::of((pairs as f64).ln())));
    Ok(Some(tape.sub(lse, log_p)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    pub epsilon: f64,
}

impl LossWeights {
    pub fn check(&self) -> Result<()> {
        let ok = self.alpha >= 0.0 && self.beta >= 0.0 && self.tau > 0.0 && self.epsilon >= 0.0;
        let finite = [self.alpha, self.beta, self.tau, self.epsilon].iter().all(|v| v.is_finite());
        if ok && finite {
            Ok(())
        } else {
            Err(Error::Invalid(format!(
                "loss weights need alpha, beta, epsilon >= 0 and tau > 0, got {self:?}"
            )))
        }
    }
}

/// Term handles feeding the joint loss. Missing uniformity terms count as 0.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub mse: Var,
    pub gcl: Var,
    pub uniform_drug: Option<Var>,
    pub uniform_target: Option<Var>,
}

/// `mse + α·gcl + β·(uni_d + uni_t)`. Refuses to build on a non-finite term
/// and names it.
pub fn joint_loss<S: Real>(tape: &mut Tape<S>, terms: &LossTerms, w: &LossWeights) -> Result<Var> {
    let named = [
        ("L_mse", Some(terms.mse)),
        ("L_gcl", Some(terms.gcl)),
        ("L_uniform_d", terms.uniform_drug),
        ("L_uniform_t", terms.uniform_target),
    ];
    for (name, var) in named {
        if let Some(v) = var {
            if !tape.scalar(v).is_finite() {
                return Err(Error::NonFinite {
                    term: name,
                    context: String::new(),
                });
            }
        }
    }
    let gcl = tape.scale(terms.gcl, S::of(w.alpha))?;
    let mut total = tape.add(terms.mse, gcl)?;
    let uniform = match (terms.uniform_drug, terms.uniform_target) {
        (Some(d), Some(t)) => Some(tape.add(d, t)?),
        (d, t) => d.or(t),
    };
    if let Some(u) = uniform {
        let scaled = tape.scale(u, S::of(w.beta))?;
        total = tape.add(total, scaled)?;
    }
    Ok(total)
}

/// Scalar form of the joint loss for already evaluated terms.
pub fn joint_value(mse: f64, gcl: f64, uniform_drug: f64, uniform_target: f64, w: &LossWeights) -> f64 {
    mse + w.alpha * gcl + w.beta * (uniform_drug + uniform_target)
}
