//! Trainable weights stored as one flat vector with named tensor views.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const DEFAULT_HIDDEN: usize = 40;
/// Added to both softplus outputs so κ and λ stay positive.
pub const HEAD_FLOOR: f64 = 1e-3;

/// How the first head output becomes κ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum HeadMode {
    /// κ = softplus(o) + floor.
    Free,
    /// κ = center + halfwidth · tanh(o).
    FixedKappa { center: f64, halfwidth: f64 },
}

impl Default for HeadMode {
    fn default() -> Self {
        HeadMode::Free
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tensor {
    InputDecayW,
    InputDecayB,
    HiddenDecayW,
    HiddenDecayB,
    UpdateW,
    UpdateB,
    ResetW,
    ResetB,
    CandidateW,
    CandidateB,
    HeadW,
    HeadB,
}

impl Tensor {
    pub const ALL: [Tensor; 12] = [
        Tensor::InputDecayW,
        Tensor::InputDecayB,
        Tensor::HiddenDecayW,
        Tensor::HiddenDecayB,
        Tensor::UpdateW,
        Tensor::UpdateB,
        Tensor::ResetW,
        Tensor::ResetB,
        Tensor::CandidateW,
        Tensor::CandidateB,
        Tensor::HeadW,
        Tensor::HeadB,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Tensor::InputDecayW => "input_decay_w",
            Tensor::InputDecayB => "input_decay_b",
            Tensor::HiddenDecayW => "hidden_decay_w",
            Tensor::HiddenDecayB => "hidden_decay_b",
            Tensor::UpdateW => "update_w",
            Tensor::UpdateB => "update_b",
            Tensor::ResetW => "reset_w",
            Tensor::ResetB => "reset_b",
            Tensor::CandidateW => "candidate_w",
            Tensor::CandidateB => "candidate_b",
            Tensor::HeadW => "head_w",
            Tensor::HeadB => "head_b",
        }
    }
}

/// Offsets of every tensor inside the flat parameter vector. Gate matrices
/// are row-major `(2F + H) × H` over the input `[x̂, h̃, m]`; the head is
/// `H × 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub n_features: usize,
    pub hidden: usize,
}

impl Layout {
    pub fn gate_inputs(&self) -> usize {
        2 * self.n_features + self.hidden
    }

    pub fn shape(&self, t: Tensor) -> Vec<usize> {
        let (f, h, g) = (self.n_features, self.hidden, self.gate_inputs());
        match t {
            Tensor::InputDecayW | Tensor::InputDecayB => vec![f],
            Tensor::HiddenDecayW | Tensor::HiddenDecayB => vec![h],
            Tensor::UpdateW | Tensor::ResetW | Tensor::CandidateW => vec![g, h],
            Tensor::UpdateB | Tensor::ResetB | Tensor::CandidateB => vec![h],
            Tensor::HeadW => vec![h, 2],
            Tensor::HeadB => vec![2],
        }
    }

    pub fn size(&self, t: Tensor) -> usize {
        self.shape(t).iter().product()
    }

    pub fn offset(&self, t: Tensor) -> usize {
        Tensor::ALL.iter().take_while(|&&u| u != t).map(|&u| self.size(u)).sum()
    }

    pub fn range(&self, t: Tensor) -> std::ops::Range<usize> {
        let o = self.offset(t);
        o..o + self.size(t)
    }

    pub fn total(&self) -> usize {
        Tensor::ALL.iter().map(|&t| self.size(t)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrudParameters {
    pub layout: Layout,
    pub head: HeadMode,
    pub values: Vec<f64>,
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn softplus_inverse(y: f64) -> f64 {
    assert!(y > 0.0);
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl GrudParameters {
    pub fn zeros(n_features: usize, hidden: usize, head: HeadMode) -> Self {
        let layout = Layout { n_features, hidden };
        Self {
            layout,
            head,
            values: vec![0.0; layout.total()],
        }
    }

    /// Glorot-uniform gates, zero decays and gate biases, a small random
    /// head whose bias starts κ near 1 and λ near `target_mean` years.
    pub fn init(n_features: usize, hidden: usize, head: HeadMode, target_mean: f64, seed: u64) -> Self {
        assert!(n_features >= 1 && hidden >= 1);
        let mut p = Self::zeros(n_features, hidden, head);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = p.layout.gate_inputs();
        let limit = (6.0 / (g + hidden) as f64).sqrt();
        for t in [Tensor::UpdateW, Tensor::ResetW, Tensor::CandidateW] {
            for v in p.get_mut(t) {
                *v = rng.random_range(-limit..limit);
            }
        }
        for v in p.get_mut(Tensor::HeadW) {
            *v = rng.random_range(-0.01..0.01);
        }
        let kappa_bias = match head {
            HeadMode::Free => softplus_inverse(1.0 - HEAD_FLOOR),
            HeadMode::FixedKappa { .. } => 0.0,
        };
        let lambda = if target_mean.is_finite() && target_mean > 2.0 * HEAD_FLOOR {
            target_mean
        } else {
            1.0
        };
        let b = p.get_mut(Tensor::HeadB);
        b[0] = kappa_bias;
        b[1] = softplus_inverse(lambda - HEAD_FLOOR);
        p
    }

    pub fn get(&self, t: Tensor) -> &[f64] {
        &self.values[self.layout.range(t)]
    }

    pub fn get_mut(&mut self, t: Tensor) -> &mut [f64] {
        let r = self.layout.range(t);
        &mut self.values[r]
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// (κ, dκ/do) for head pre-activation `o`.
    pub fn kappa_from(&self, o: f64) -> (f64, f64) {
        match self.head {
            HeadMode::Free => (softplus(o) + HEAD_FLOOR, sigmoid(o)),
            HeadMode::FixedKappa { center, halfwidth } => {
                let t = o.tanh();
                (center + halfwidth * t, halfwidth * (1.0 - t * t))
            }
        }
    }

    /// (λ, dλ/do).
    pub fn lambda_from(&self, o: f64) -> (f64, f64) {
        (softplus(o) + HEAD_FLOOR, sigmoid(o))
    }
}
