use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::cohort::Modality;

/// Whether decoupled weight decay applies to a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Weight,
    Bias,
    Embedding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `out_dim × in_dim`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Linear {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    fn xavier(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut l = Linear::zeros(in_dim, out_dim);
        fill_uniform(&mut l.weight, xavier_limit(in_dim, out_dim), rng);
        l
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.out_dim];
        super::linalg::affine(&self.weight, &self.bias, x, &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub hidden: Linear,
    pub output: Linear,
}

/// All trainable tensors of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// Per-modality MLP encoders, indexed by [`Modality::index`].
    pub encoders: [Encoder; 3],
    /// Learned modality tags added to every instance embedding.
    pub modality_embed: [Vec<f64>; 3],
    /// Projector φ: Linear D→D followed by ReLU.
    pub projector: Linear,
    /// Attention hidden layer V_a (L×D) with bias.
    pub attention: Linear,
    /// Attention scoring vector w_a (length L).
    pub attention_out: Vec<f64>,
    /// Bag classifier g: Linear D→classes.
    pub classifier: Linear,
}

/// Named view of one tensor.
pub struct TensorRef<'a> {
    pub name: String,
    pub kind: TensorKind,
    pub shape: (usize, usize),
    pub data: &'a [f64],
}

pub struct TensorMut<'a> {
    pub name: String,
    pub kind: TensorKind,
    pub shape: (usize, usize),
    pub data: &'a mut [f64],
}

fn xavier_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn fill_uniform(buf: &mut [f64], limit: f64, rng: &mut ChaCha8Rng) {
    for v in buf.iter_mut() {
        *v = rng.random_range(-limit..limit);
    }
}

impl Params {
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.embed_dim;
        let encoders = [0, 1, 2].map(|i| Encoder {
            hidden: Linear::xavier(config.input_dims[i], config.encoder_hidden[i], &mut rng),
            output: Linear::xavier(config.encoder_hidden[i], d, &mut rng),
        });
        let modality_embed = [0, 1, 2].map(|_| {
            let mut v = vec![0.0; d];
            fill_uniform(&mut v, xavier_limit(d, d), &mut rng);
            v
        });
        let projector = Linear::xavier(d, d, &mut rng);
        let attention = Linear::xavier(d, config.attention_dim, &mut rng);
        let mut attention_out = vec![0.0; config.attention_dim];
        fill_uniform(&mut attention_out, xavier_limit(config.attention_dim, 1), &mut rng);
        let classifier = Linear::xavier(d, config.classes, &mut rng);
        Params {
            encoders,
            modality_embed,
            projector,
            attention,
            attention_out,
            classifier,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut p = self.clone();
        for t in p.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
        p
    }

    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::with_capacity(18);
        for (m, enc) in Modality::ALL.iter().zip(&self.encoders) {
            push_linear_ref(&mut out, &format!("encoder.{m}.hidden"), &enc.hidden);
            push_linear_ref(&mut out, &format!("encoder.{m}.output"), &enc.output);
        }
        for (m, v) in Modality::ALL.iter().zip(&self.modality_embed) {
            out.push(TensorRef {
                name: format!("modality_embed.{m}"),
                kind: TensorKind::Embedding,
                shape: (1, v.len()),
                data: v,
            });
        }
        push_linear_ref(&mut out, "projector", &self.projector);
        push_linear_ref(&mut out, "attention", &self.attention);
        out.push(TensorRef {
            name: "attention_out.weight".into(),
            kind: TensorKind::Weight,
            shape: (1, self.attention_out.len()),
            data: &self.attention_out,
        });
        push_linear_ref(&mut out, "classifier", &self.classifier);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let Params {
            encoders,
            modality_embed,
            projector,
            attention,
            attention_out,
            classifier,
        } = self;
        let mut out = Vec::with_capacity(18);
        for (m, enc) in Modality::ALL.iter().zip(encoders.iter_mut()) {
            let Encoder { hidden, output } = enc;
            push_linear_mut(&mut out, &format!("encoder.{m}.hidden"), hidden);
            push_linear_mut(&mut out, &format!("encoder.{m}.output"), output);
        }
        for (m, v) in Modality::ALL.iter().zip(modality_embed.iter_mut()) {
            out.push(TensorMut {
                name: format!("modality_embed.{m}"),
                kind: TensorKind::Embedding,
                shape: (1, v.len()),
                data: v,
            });
        }
        push_linear_mut(&mut out, "projector", projector);
        push_linear_mut(&mut out, "attention", attention);
        let len = attention_out.len();
        out.push(TensorMut {
            name: "attention_out.weight".into(),
            kind: TensorKind::Weight,
            shape: (1, len),
            data: attention_out,
        });
        push_linear_mut(&mut out, "classifier", classifier);
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Params, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            super::linalg::axpy(scale, b.data, a.data);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v *= s);
        }
    }
}

fn push_linear_ref<'a>(out: &mut Vec<TensorRef<'a>>, prefix: &str, l: &'a Linear) {
    out.push(TensorRef {
        name: format!("{prefix}.weight"),
        kind: TensorKind::Weight,
        shape: (l.out_dim, l.in_dim),
        data: &l.weight,
    });
    out.push(TensorRef {
        name: format!("{prefix}.bias"),
        kind: TensorKind::Bias,
        shape: (1, l.out_dim),
        data: &l.bias,
    });
}

fn push_linear_mut<'a>(out: &mut Vec<TensorMut<'a>>, prefix: &str, l: &'a mut Linear) {
    let (rows, cols) = (l.out_dim, l.in_dim);
    let Linear { weight, bias, .. } = l;
    out.push(TensorMut {
        name: format!("{prefix}.weight"),
        kind: TensorKind::Weight,
        shape: (rows, cols),
        data: weight,
    });
    out.push(TensorMut {
        name: format!("{prefix}.bias"),
        kind: TensorKind::Bias,
        shape: (1, rows),
        data: bias,
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_param_count() {
        assert_eq!(Linear::zeros(2, 3).param_count(), 9);
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let cfg = ModelConfig::default();
        let a = Params::init(&cfg, 7);
        let b = Params::init(&cfg, 7);
        let c = Params::init(&cfg, 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.modality_embed.iter().all(|v| v.len() == 128));
    }

    #[test]
    fn biases_start_at_zero_and_weights_within_limit() {
        let cfg = ModelConfig::default();
        let p = Params::init(&cfg, 1);
        for t in p.tensors() {
            match t.kind {
                TensorKind::Bias => assert!(t.data.iter().all(|v| *v == 0.0), "{}", t.name),
                _ => {
                    let (rows, cols) = t.shape;
                    let limit = if t.kind == TensorKind::Embedding {
                        xavier_limit(cols, cols)
                    } else {
                        xavier_limit(cols, rows)
                    };
                    assert!(t.data.iter().all(|v| v.abs() <= limit), "{}", t.name);
                }
            }
        }
    }

    #[test]
    fn tensor_views_agree() {
        let mut p = Params::init(&ModelConfig::default(), 3);
        let names: Vec<String> = p.tensors().into_iter().map(|t| t.name).collect();
        let names_mut: Vec<String> = p.tensors_mut().into_iter().map(|t| t.name).collect();
        assert_eq!(names, names_mut);
        assert_eq!(names.len(), 12 + 3 + 4 + 1 + 2);
    }
}
