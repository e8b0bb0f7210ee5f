//! Line-oriented text model format:
//!
//! ```text
//! trafficast-model v1
//! cell_kind=lstm
//! layer_sizes=32,16
//! input_dim=4
//! horizon=1
//! seed=42
//! meta.<key>=<value>          (any number, optional)
//! layer0.w_f                  (parameter name)
//! 32 36                       (rows cols)
//! <row of space-separated floats>
//! ...
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so a save/load cycle
//! reproduces every parameter bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{CellKind, ModelConfig, Network};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub const MODEL_HEADER: &str = "trafficast-model v1";

pub fn render_model(net: &Network) -> String {
    let mut out = String::new();
    let c = &net.config;
    let sizes: Vec<String> = c.layer_sizes.iter().map(|s| s.to_string()).collect();
    writeln!(out, "{MODEL_HEADER}").unwrap();
    writeln!(out, "cell_kind={}", c.cell_kind).unwrap();
    writeln!(out, "layer_sizes={}", sizes.join(",")).unwrap();
    writeln!(out, "input_dim={}", c.input_dim).unwrap();
    writeln!(out, "horizon={}", c.horizon).unwrap();
    writeln!(out, "seed={}", c.seed).unwrap();
    for (k, v) in &net.meta {
        writeln!(out, "meta.{k}={v}").unwrap();
    }
    for (name, m) in net.tensors() {
        writeln!(out, "{name}").unwrap();
        writeln!(out, "{} {}", m.rows(), m.cols()).unwrap();
        for r in 0..m.rows() {
            let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", row.join(" ")).unwrap();
        }
    }
    out
}

pub fn save_model(net: &Network, path: &Path) -> Result<()> {
    write_atomic(path, render_model(net).as_bytes())
}

pub fn load_model(path: &Path) -> Result<Network> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text)
}

fn bad(msg: impl Into<String>) -> Error {
    Error::ModelFormat(msg.into())
}

pub fn parse_model(text: &str) -> Result<Network> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end()));
    match lines.next() {
        Some((_, MODEL_HEADER)) => {}
        Some((_, other)) => return Err(bad(format!("unsupported header `{other}` (expected `{MODEL_HEADER}`)"))),
        None => return Err(bad("empty file")),
    }

    let mut fields = BTreeMap::new();
    let mut meta = BTreeMap::new();
    let mut pending = None;
    for (no, line) in lines.by_ref() {
        match line.split_once('=') {
            Some((k, v)) => {
                if let Some(key) = k.strip_prefix("meta.") {
                    meta.insert(key.to_string(), v.to_string());
                } else {
                    fields.insert(k.to_string(), (no, v.to_string()));
                }
            }
            None => {
                pending = Some((no, line));
                break;
            }
        }
    }
    let field = |k: &str| -> Result<&(usize, String)> { fields.get(k).ok_or_else(|| bad(format!("missing `{k}`"))) };
    let number = |k: &str| -> Result<u64> {
        let (no, v) = field(k)?;
        v.parse()
            .map_err(|_| bad(format!("line {no}: `{k}={v}` is not an unsigned integer")))
    };
    let (kind_line, kind) = field("cell_kind")?;
    let cell_kind: CellKind = kind
        .parse()
        .map_err(|e: Error| bad(format!("line {kind_line}: {e}")))?;
    let (sizes_line, sizes) = field("layer_sizes")?;
    let layer_sizes = sizes
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| bad(format!("line {sizes_line}: bad layer_sizes `{sizes}`")))?;
    let config = ModelConfig {
        cell_kind,
        layer_sizes,
        input_dim: number("input_dim")? as usize,
        horizon: number("horizon")? as usize,
        seed: number("seed")?,
    };
    let mut net = Network::zeros(config).map_err(|e| bad(e.to_string()))?;
    net.meta = meta;

    let expected: Vec<(String, (usize, usize))> = net
        .tensors()
        .into_iter()
        .map(|(n, m)| (n, m.shape()))
        .collect();
    let mut next_line = |what: &str| -> Result<(usize, &str)> {
        pending
            .take()
            .or_else(|| lines.next())
            .ok_or_else(|| bad(format!("truncated file: expected {what}")))
    };
    for (slot, (name, shape)) in net.tensors_mut().into_iter().zip(expected) {
        let (no, got) = next_line(&format!("parameter `{name}`"))?;
        if got != name {
            return Err(bad(format!("line {no}: expected parameter `{name}`, found `{got}`")));
        }
        let (no, dims) = next_line(&format!("shape of `{name}`"))?;
        let parsed: Vec<usize> = dims
            .split_whitespace()
            .map(|d| d.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad(format!("line {no}: bad shape `{dims}`")))?;
        if parsed != [shape.0, shape.1] {
            return Err(bad(format!(
                "line {no}: `{name}` is {dims} but the config implies {} {}",
                shape.0, shape.1
            )));
        }
        let data = slot.as_mut_slice();
        for r in 0..shape.0 {
            let (no, row) = next_line(&format!("row {r} of `{name}`"))?;
            let vals: Vec<f64> = row
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(format!("line {no}: unparseable value in `{name}`")))?;
            if vals.len() != shape.1 {
                return Err(bad(format!(
                    "line {no}: `{name}` row has {} values, expected {}",
                    vals.len(),
                    shape.1
                )));
            }
            data[r * shape.1..(r + 1) * shape.1].copy_from_slice(&vals);
        }
    }
    if let Some((no, extra)) = pending.take().or_else(|| lines.find(|(_, l)| !l.is_empty())) {
        return Err(bad(format!("line {no}: unexpected trailing content `{extra}`")));
    }
    Ok(net)
}
