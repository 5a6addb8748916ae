//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Unknown keys, repeated keys and
//! bad values are errors that cite the 1-based line. Keys not given keep
//! their defaults; [`to_config_string`] writes every key, so its output
//! reproduces a run exactly.
//!
//! ```text
//! # model
//! embed_dim = 128
//! encoder_hidden = 128,128,128   # or a single value for all modalities
//! attention_dim = 64
//! learning_rate = 0.001
//! weight_decay = 0.0001
//! max_epochs = 100
//! patience = 10
//! grad_accum = 8
//! # protocol
//! seed = 0
//! train_fraction = 0.8
//! class_weighting = true
//! f1 = macro
//! epsilon = 1e-8
//! jobs = 0
//! margin_facit = 5
//! margin_handgrip = 2
//! window_m3 = 46,135
//! window_m6 = 136,225
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use crate::cohort::{DayWindow, Horizon, HorizonWindows};
use crate::error::{Error, Result};
use crate::eval::EvalConfig;

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

fn parse_num<T: std::str::FromStr>(v: &str, key: &str, line: usize) -> Result<T> {
    v.parse()
        .map_err(|_| err(line, format!("invalid value '{v}' for {key}")))
}

fn parse_bool(v: &str, key: &str, line: usize) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(err(line, format!("invalid boolean '{v}' for {key}"))),
    }
}

fn parse_pair(v: &str, key: &str, line: usize) -> Result<(i64, i64)> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(err(line, format!("{key} expects `start,end`")));
    }
    Ok((parse_num(parts[0], key, line)?, parse_num(parts[1], key, line)?))
}

/// Applies `text` on top of `base`.
pub fn apply_config(base: &EvalConfig, text: &str) -> Result<EvalConfig> {
    let mut cfg = base.clone();
    let mut seen = BTreeSet::new();
    let mut windows = [cfg.windows.window(Horizon::M3), cfg.windows.window(Horizon::M6)];
    let mut window_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected `key = value`, found '{content}'")))?;
        let (key, value) = (key.trim(), value.trim());
        if value.is_empty() {
            return Err(err(line, format!("{key} has no value")));
        }
        if !seen.insert(key.to_string()) {
            return Err(err(line, format!("{key} is set twice")));
        }
        let m = &mut cfg.model;
        match key {
            "embed_dim" => m.embed_dim = parse_num(value, key, line)?,
            "encoder_hidden" => {
                let parts: Vec<usize> = value
                    .split(',')
                    .map(|p| parse_num(p.trim(), key, line))
                    .collect::<Result<_>>()?;
                m.encoder_hidden = match parts.as_slice() {
                    [h] => [*h; 3],
                    [a, b, c] => [*a, *b, *c],
                    _ => return Err(err(line, "encoder_hidden expects one or three values")),
                };
            }
            "attention_dim" => m.attention_dim = parse_num(value, key, line)?,
            "learning_rate" => m.learning_rate = parse_num(value, key, line)?,
            "weight_decay" => m.weight_decay = parse_num(value, key, line)?,
            "max_epochs" => m.max_epochs = parse_num(value, key, line)?,
            "patience" => m.patience = parse_num(value, key, line)?,
            "grad_accum" => m.grad_accum = parse_num(value, key, line)?,
            "seed" => cfg.seed = parse_num(value, key, line)?,
            "train_fraction" => cfg.train_fraction = parse_num(value, key, line)?,
            "class_weighting" => cfg.class_weighting = parse_bool(value, key, line)?,
            "f1" => cfg.f1 = value.parse().map_err(|e: Error| err(line, e.to_string()))?,
            "epsilon" => cfg.epsilon = parse_num(value, key, line)?,
            "jobs" => cfg.jobs = parse_num(value, key, line)?,
            "margin_facit" => cfg.margins.facit = parse_num(value, key, line)?,
            "margin_handgrip" => cfg.margins.handgrip = parse_num(value, key, line)?,
            "window_m3" | "window_m6" => {
                let (a, b) = parse_pair(value, key, line)?;
                let w = DayWindow::new(a, b).map_err(|e| err(line, e.to_string()))?;
                windows[if key == "window_m3" { 0 } else { 1 }] = w;
                window_line = line;
            }
            other => return Err(err(line, format!("unknown key '{other}'"))),
        }
    }
    cfg.windows = HorizonWindows::new(windows[0], windows[1]).map_err(|e| err(window_line, e.to_string()))?;
    cfg.validate().map_err(|e| err(0, e.to_string()))?;
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<EvalConfig> {
    apply_config(&EvalConfig::default(), text)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<EvalConfig> {
    let path = path.as_ref();
    parse_config(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

/// Every key with its resolved value, one per line.
pub fn to_config_string(cfg: &EvalConfig) -> String {
    let m = &cfg.model;
    let w3 = cfg.windows.window(Horizon::M3);
    let w6 = cfg.windows.window(Horizon::M6);
    [
        format!("embed_dim = {}", m.embed_dim),
        format!(
            "encoder_hidden = {},{},{}",
            m.encoder_hidden[0], m.encoder_hidden[1], m.encoder_hidden[2]
        ),
        format!("attention_dim = {}", m.attention_dim),
        format!("learning_rate = {:e}", m.learning_rate),
        format!("weight_decay = {:e}", m.weight_decay),
        format!("max_epochs = {}", m.max_epochs),
        format!("patience = {}", m.patience),
        format!("grad_accum = {}", m.grad_accum),
        format!("seed = {}", cfg.seed),
        format!("train_fraction = {}", cfg.train_fraction),
        format!("class_weighting = {}", cfg.class_weighting),
        format!("f1 = {}", cfg.f1),
        format!("epsilon = {:e}", cfg.epsilon),
        format!("jobs = {}", cfg.jobs),
        format!("margin_facit = {}", cfg.margins.facit),
        format!("margin_handgrip = {}", cfg.margins.handgrip),
        format!("window_m3 = {},{}", w3.t_minus, w3.t_plus),
        format!("window_m6 = {},{}", w6.t_minus, w6.t_plus),
    ]
    .join("\n")
        + "\n"
}
