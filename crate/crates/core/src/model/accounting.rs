use std::fmt;

use super::MilModel;

/// Published size of the reference network, for side-by-side reporting.
pub const REPORTED_PARAMS_M: f64 = 0.307;
pub const REPORTED_FLOPS_G: f64 = 0.479;

/// Parameter count and forward-pass FLOPs (2 × multiply-adds) for a bag
/// with given per-modality instance counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Accounting {
    pub params: usize,
    pub instance_counts: [usize; 3],
    pub encoder_flops: u64,
    pub attention_flops: u64,
    pub classifier_flops: u64,
}

impl Accounting {
    pub fn total_flops(&self) -> u64 {
        self.encoder_flops + self.attention_flops + self.classifier_flops
    }

    /// Encoders plus projector/attention/pooling: everything that scales
    /// with the number of instances.
    pub fn pooled_path_flops(&self) -> u64 {
        self.encoder_flops + self.attention_flops
    }
}

impl fmt::Display for Accounting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [p, s, h] = self.instance_counts;
        writeln!(f, "parameters: {} ({:.3}M)", self.params, self.params as f64 / 1e6)?;
        writeln!(
            f,
            "forward FLOPs for a bag of {p} phys + {s} sleep + {h} hrv instances: {} ({:.6}G)",
            self.total_flops(),
            self.total_flops() as f64 / 1e9
        )?;
        writeln!(
            f,
            "  encoders {}, projector+attention+pooling {}, classifier {}",
            self.encoder_flops, self.attention_flops, self.classifier_flops
        )?;
        write!(
            f,
            "reference network (published): {REPORTED_PARAMS_M}M parameters, {REPORTED_FLOPS_G}G FLOPs (layer widths unpublished; not expected to match)"
        )
    }
}

pub fn count_params_flops(model: &MilModel, instance_counts: [usize; 3]) -> Accounting {
    let p = &model.params;
    let d = p.projector.out_dim as u64;
    let l = p.attention.out_dim as u64;
    let mut encoder_macs = 0u64;
    let mut attention_macs = 0u64;
    for (enc, &n) in p.encoders.iter().zip(&instance_counts) {
        let n = n as u64;
        let per = (enc.hidden.in_dim * enc.hidden.out_dim + enc.output.in_dim * enc.output.out_dim) as u64;
        encoder_macs += n * per;
        // projector D×D, attention L×D, score L, weighted sum D
        attention_macs += n * (d * d + l * d + l + d);
    }
    let classifier_macs = (p.classifier.in_dim * p.classifier.out_dim) as u64;
    Accounting {
        params: p.param_count(),
        instance_counts,
        encoder_flops: 2 * encoder_macs,
        attention_flops: 2 * attention_macs,
        classifier_flops: 2 * classifier_macs,
    }
}
