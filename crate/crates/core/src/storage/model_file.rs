//! Text model file with bit-exact weights.
//!
//! ```text
//! SLAGRADER v1
//! head_kind=fa
//! input_dim=16
//! hidden_dim=32
//! labels=A,B,C,D,E,F
//! scores=4018000000000000,4014000000000000,...
//! grid_step=3fe0000000000000
//! meta.seed=7
//! [hidden.weights 32 16]
//! 3fb1...  (one matrix row per line, 16 hex digits per binary64)
//! [hidden.bias 32]
//! [output.weights 6 32]
//! [output.bias 6]
//! end
//! ```
//!
//! The hidden blocks are absent when `hidden_dim=0`.

use std::fmt::Write as _;
use std::path::Path;

use super::{read_text, write_text};
use crate::error::{Error, Result};
use crate::model::{Dense, GraderModel, HeadKind};
use crate::scale::GradeScale;

pub const MODEL_HEADER: &str = "SLAGRADER v1";
const META_PREFIX: &str = "meta.";

fn hex(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn write_block(out: &mut String, name: &str, rows: usize, cols: Option<usize>, values: &[f64]) {
    match cols {
        Some(c) => {
            let _ = writeln!(out, "[{name} {rows} {c}]");
            for row in values.chunks(c.max(1)) {
                let line: Vec<String> = row.iter().map(|v| hex(*v)).collect();
                let _ = writeln!(out, "{}", line.join(" "));
            }
        }
        None => {
            let _ = writeln!(out, "[{name} {rows}]");
            let line: Vec<String> = values.iter().map(|v| hex(*v)).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
    }
}

pub fn model_to_string(model: &GraderModel) -> Result<String> {
    model.validate()?;
    let mut out = String::new();
    let _ = writeln!(out, "{MODEL_HEADER}");
    let _ = writeln!(out, "head_kind={}", model.head);
    let _ = writeln!(out, "input_dim={}", model.input_dim);
    let _ = writeln!(out, "hidden_dim={}", model.hidden_dim());
    let _ = writeln!(out, "labels={}", model.scale.labels().join(","));
    let scores: Vec<String> = model.scale.scores().iter().map(|s| hex(*s)).collect();
    let _ = writeln!(out, "scores={}", scores.join(","));
    let _ = writeln!(out, "grid_step={}", hex(model.scale.grid_step()));
    for (k, v) in &model.provenance {
        if k.contains(['=', '\n']) || v.contains('\n') {
            return Err(Error::Domain(format!("provenance entry {k:?} cannot be stored")));
        }
        let _ = writeln!(out, "{META_PREFIX}{k}={v}");
    }
    if let Some(h) = &model.hidden {
        write_block(&mut out, "hidden.weights", h.out_dim, Some(h.in_dim), &h.weights);
        write_block(&mut out, "hidden.bias", h.out_dim, None, &h.bias);
    }
    let o = &model.output;
    write_block(&mut out, "output.weights", o.out_dim, Some(o.in_dim), &o.weights);
    write_block(&mut out, "output.bias", o.out_dim, None, &o.bias);
    out.push_str("end\n");
    Ok(out)
}

pub fn save_model(model: &GraderModel, path: &Path) -> Result<()> {
    write_text(path, &model_to_string(model)?)
}

pub fn load_model(path: &Path) -> Result<GraderModel> {
    model_from_str(&read_text(path)?, path)
}

struct Block {
    name: String,
    dims: Vec<usize>,
    values: Vec<f64>,
}

pub fn model_from_str(text: &str, path: &Path) -> Result<GraderModel> {
    let fail = |message: String| Error::Model {
        path: path.to_path_buf(),
        message,
    };
    let parse_hex = |tok: &str, ctx: &str| -> Result<f64> {
        if tok.len() != 16 {
            return Err(fail(format!("{ctx}: malformed hex value {tok:?}")));
        }
        u64::from_str_radix(tok, 16)
            .map(f64::from_bits)
            .map_err(|_| fail(format!("{ctx}: malformed hex value {tok:?}")))
    };

    let mut lines = text.lines();
    match lines.next() {
        Some(MODEL_HEADER) => {}
        Some(h) if h.starts_with("SLAGRADER v") => {
            return Err(fail(format!("unsupported version {h:?}, expected {MODEL_HEADER:?}")))
        }
        _ => return Err(fail(format!("missing {MODEL_HEADER:?} header"))),
    }

    let mut header: Vec<(String, String)> = Vec::new();
    let mut blocks: Vec<Block> = Vec::new();
    let mut ended = false;
    for line in lines {
        if ended {
            if !line.trim().is_empty() {
                return Err(fail("content after 'end'".into()));
            }
            continue;
        }
        if line == "end" {
            ended = true;
        } else if let Some(spec) = line.strip_prefix('[') {
            let spec = spec
                .strip_suffix(']')
                .ok_or_else(|| fail(format!("malformed block header {line:?}")))?;
            let mut parts = spec.split_whitespace();
            let name = parts.next().unwrap_or_default().to_string();
            let dims = parts
                .map(|d| d.parse::<usize>().map_err(|_| fail(format!("block {name}: bad dimension {d:?}"))))
                .collect::<Result<Vec<_>>>()?;
            blocks.push(Block {
                name,
                dims,
                values: Vec::new(),
            });
        } else if let Some(block) = blocks.last_mut() {
            for tok in line.split_whitespace() {
                let v = parse_hex(tok, &format!("block {}", block.name))?;
                block.values.push(v);
            }
        } else if let Some((k, v)) = line.split_once('=') {
            header.push((k.to_string(), v.to_string()));
        } else if !line.trim().is_empty() {
            return Err(fail(format!("unexpected header line {line:?}")));
        }
    }
    if !ended {
        let last = blocks.last().map_or("header".to_string(), |b| format!("block {}", b.name));
        return Err(fail(format!("truncated file: missing 'end' after {last}")));
    }

    let get = |key: &str| -> Result<&str> {
        header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| fail(format!("missing header key {key:?}")))
    };
    let get_usize = |key: &str| -> Result<usize> {
        get(key)?
            .parse()
            .map_err(|_| fail(format!("header key {key:?} is not a non-negative integer")))
    };
    let head: HeadKind = get("head_kind")?.parse().map_err(|e: Error| fail(e.to_string()))?;
    let input_dim = get_usize("input_dim")?;
    let hidden_dim = get_usize("hidden_dim")?;
    let labels: Vec<String> = get("labels")?.split(',').map(str::to_string).collect();
    let scores = get("scores")?
        .split(',')
        .map(|t| parse_hex(t, "scores"))
        .collect::<Result<Vec<_>>>()?;
    let grid_step = parse_hex(get("grid_step")?, "grid_step")?;
    let scale = GradeScale::new(labels, scores, grid_step).map_err(|e| fail(e.to_string()))?;
    let provenance = header
        .iter()
        .filter_map(|(k, v)| k.strip_prefix(META_PREFIX).map(|k| (k.to_string(), v.clone())))
        .collect();

    let mut take = |name: &str, dims: &[usize]| -> Result<Vec<f64>> {
        let pos = blocks
            .iter()
            .position(|b| b.name == name)
            .ok_or_else(|| fail(format!("missing block {name}")))?;
        let block = blocks.remove(pos);
        if block.dims != dims {
            return Err(fail(format!(
                "block {name}: dimensions {:?} do not match header {:?}",
                block.dims, dims
            )));
        }
        let expected: usize = dims.iter().product();
        if block.values.len() != expected {
            return Err(fail(format!(
                "block {name}: expected {expected} values, found {}",
                block.values.len()
            )));
        }
        Ok(block.values)
    };

    let hidden = if hidden_dim > 0 {
        let weights = take("hidden.weights", &[hidden_dim, input_dim])?;
        let bias = take("hidden.bias", &[hidden_dim])?;
        Some(Dense {
            out_dim: hidden_dim,
            in_dim: input_dim,
            weights,
            bias,
        })
    } else {
        None
    };
    let out_dim = head.output_dim(&scale);
    let fan_in = if hidden_dim > 0 { hidden_dim } else { input_dim };
    let output = Dense {
        out_dim,
        in_dim: fan_in,
        weights: take("output.weights", &[out_dim, fan_in])?,
        bias: take("output.bias", &[out_dim])?,
    };
    if let Some(extra) = blocks.first() {
        return Err(fail(format!("unexpected block {}", extra.name)));
    }

    let model = GraderModel {
        head,
        input_dim,
        hidden,
        output,
        scale,
        provenance,
    };
    model.validate().map_err(|e| fail(e.to_string()))?;
    Ok(model)
}
