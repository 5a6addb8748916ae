//! Plain-text model checkpoints.
//!
//! Layout (one item per line, values in shortest round-trip decimal):
//!
//! ```text
//! wearmil-checkpoint 1
//! seed <u64>
//! config <key>=<value>        (one line per ModelConfig field)
//! step <u64>
//! tensor <name> <rows> <cols>
//! <rows*cols values, space separated>
//! adam_m <name>
//! <values>
//! adam_v <name>
//! <values>
//! end
//! ```
//!
//! Tensors appear in [`Params::tensors`](super::Params::tensors) order.
//! Reading back yields a bit-identical [`MilModel`].

use std::fmt::Write as _;
use std::path::Path;

use super::{init_model, MilModel, ModelConfig};
use crate::error::{Error, Result};

const MAGIC: &str = "wearmil-checkpoint 1";

fn join(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 24);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        write!(s, "{v:e}").unwrap();
    }
    s
}

fn config_lines(c: &ModelConfig) -> Vec<String> {
    let triple = |a: [usize; 3]| format!("{},{},{}", a[0], a[1], a[2]);
    vec![
        format!("input_dims={}", triple(c.input_dims)),
        format!("embed_dim={}", c.embed_dim),
        format!("encoder_hidden={}", triple(c.encoder_hidden)),
        format!("attention_dim={}", c.attention_dim),
        format!("classes={}", c.classes),
        format!("learning_rate={:e}", c.learning_rate),
        format!("weight_decay={:e}", c.weight_decay),
        format!("max_epochs={}", c.max_epochs),
        format!("patience={}", c.patience),
        format!("grad_accum={}", c.grad_accum),
    ]
}

pub fn to_string(model: &MilModel) -> String {
    let mut out = String::new();
    writeln!(out, "{MAGIC}").unwrap();
    writeln!(out, "seed {}", model.seed).unwrap();
    for line in config_lines(&model.config) {
        writeln!(out, "config {line}").unwrap();
    }
    writeln!(out, "step {}", model.optimizer.step).unwrap();
    for t in model.params.tensors() {
        writeln!(out, "tensor {} {} {}", t.name, t.shape.0, t.shape.1).unwrap();
        writeln!(out, "{}", join(t.data)).unwrap();
    }
    for (t, (m, v)) in model
        .params
        .tensors()
        .iter()
        .zip(model.optimizer.first.iter().zip(&model.optimizer.second))
    {
        writeln!(out, "adam_m {}", t.name).unwrap();
        writeln!(out, "{}", join(m)).unwrap();
        writeln!(out, "adam_v {}", t.name).unwrap();
        writeln!(out, "{}", join(v)).unwrap();
    }
    writeln!(out, "end").unwrap();
    out
}

fn bad(line: usize, msg: impl Into<String>) -> Error {
    Error::Checkpoint(format!("line {line}: {}", msg.into()))
}

fn parse_triple(s: &str, line: usize) -> Result<[usize; 3]> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| bad(line, format!("bad integer list '{s}'"))))
        .collect::<Result<_>>()?;
    parts.try_into().map_err(|_| bad(line, "expected three values"))
}

fn parse_values(s: &str, expected: usize, line: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = if s.trim().is_empty() {
        Vec::new()
    } else {
        s.split(' ')
            .map(|v| v.parse::<f64>().map_err(|_| bad(line, format!("bad number '{v}'"))))
            .collect::<Result<_>>()?
    };
    if values.len() != expected {
        return Err(bad(line, format!("expected {expected} values, found {}", values.len())));
    }
    Ok(values)
}

pub fn from_str(text: &str) -> Result<MilModel> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| lines.next().ok_or_else(|| Error::Checkpoint(format!("truncated before {what}")));

    let (n, magic) = next("header")?;
    if magic != MAGIC {
        return Err(bad(n, "not a wearmil checkpoint"));
    }
    let (n, seed_line) = next("seed")?;
    let seed: u64 = seed_line
        .strip_prefix("seed ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad(n, "expected `seed <u64>`"))?;

    let mut config = ModelConfig::default();
    let step: u64;
    loop {
        let (n, line) = next("config")?;
        if let Some(s) = line.strip_prefix("step ") {
            step = s.parse().map_err(|_| bad(n, "bad step"))?;
            break;
        }
        let kv = line.strip_prefix("config ").ok_or_else(|| bad(n, "expected config line"))?;
        let (k, v) = kv.split_once('=').ok_or_else(|| bad(n, "expected key=value"))?;
        let int = |v: &str| v.parse::<usize>().map_err(|_| bad(n, format!("bad integer '{v}'")));
        let float = |v: &str| v.parse::<f64>().map_err(|_| bad(n, format!("bad number '{v}'")));
        match k {
            "input_dims" => config.input_dims = parse_triple(v, n)?,
            "embed_dim" => config.embed_dim = int(v)?,
            "encoder_hidden" => config.encoder_hidden = parse_triple(v, n)?,
            "attention_dim" => config.attention_dim = int(v)?,
            "classes" => config.classes = int(v)?,
            "learning_rate" => config.learning_rate = float(v)?,
            "weight_decay" => config.weight_decay = float(v)?,
            "max_epochs" => config.max_epochs = int(v)?,
            "patience" => config.patience = int(v)?,
            "grad_accum" => config.grad_accum = int(v)?,
            other => return Err(bad(n, format!("unknown config key '{other}'"))),
        }
    }

    let mut model = init_model(&config, seed)?;
    model.optimizer.step = step;
    {
        let tensors = model.params.tensors_mut();
        let mut data: Vec<(String, (usize, usize), &mut [f64])> =
            tensors.into_iter().map(|t| (t.name, t.shape, t.data)).collect();
        for (name, shape, slot) in data.iter_mut() {
            let (n, head) = next("tensor")?;
            let expected = format!("tensor {name} {} {}", shape.0, shape.1);
            if head != expected {
                return Err(bad(n, format!("expected `{expected}`, found `{head}`")));
            }
            let (n, body) = next("tensor values")?;
            slot.copy_from_slice(&parse_values(body, slot.len(), n)?);
        }
    }
    let names: Vec<String> = model.params.tensors().into_iter().map(|t| t.name).collect();
    for (i, name) in names.iter().enumerate() {
        for (tag, buf) in [("adam_m", &mut model.optimizer.first[i]), ("adam_v", &mut model.optimizer.second[i])] {
            let (n, head) = next(tag)?;
            if head != format!("{tag} {name}") {
                return Err(bad(n, format!("expected `{tag} {name}`")));
            }
            let (n, body) = next("moment values")?;
            let len = buf.len();
            buf.copy_from_slice(&parse_values(body, len, n)?);
        }
    }
    let (n, end) = next("end")?;
    if end != "end" {
        return Err(bad(n, "expected `end`"));
    }
    Ok(model)
}

pub fn save(model: &MilModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_string(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<MilModel> {
    let path = path.as_ref();
    from_str(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}
