//! Text checkpoint for a trained [`MlpModel`] and the [`TrainConfig`] that
//! produced it.
//!
//! ```text
//! #dcloss-checkpoint version=1
//! loss=dc
//! alpha=0.01
//! lambda1=0.2
//! lambda2=0.05
//! epochs=60
//! batch_size=80
//! momentum=0.9
//! weight_decay=0.0005
//! lr_start=0.2
//! lr_end=0.02
//! seed=0
//! sigma=2
//! hidden=64,64
//! activation=relu
//! dims=32,64,64,101
//! weights.0=<row-major, comma separated>
//! bias.0=<comma separated>
//! ...
//! ```
//!
//! Keys appear in this order. `weights.i` is the `dims[i+1] x dims[i]`
//! matrix of layer `i`. Floats use shortest round-trip formatting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::losses::{LossKind, LossSpec};
use crate::model::{Activation, Dense, MlpModel, TrainConfig};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "#dcloss-checkpoint";

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

pub fn to_text(model: &MlpModel, cfg: &TrainConfig) -> String {
    to_text_with_comments(model, cfg, "")
}

/// Like [`to_text`], with `#`-prefixed `comments` after the format line.
/// The parser skips them.
pub fn to_text_with_comments(model: &MlpModel, cfg: &TrainConfig, comments: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} version={FORMAT_VERSION}");
    out.push_str(comments);
    let _ = writeln!(out, "loss={}", cfg.loss.kind());
    let _ = writeln!(out, "alpha={}", cfg.loss.alpha());
    let _ = writeln!(out, "lambda1={}", cfg.loss.lambda1());
    let _ = writeln!(out, "lambda2={}", cfg.loss.lambda2());
    let _ = writeln!(out, "epochs={}", cfg.epochs);
    let _ = writeln!(out, "batch_size={}", cfg.batch_size);
    let _ = writeln!(out, "momentum={}", cfg.momentum);
    let _ = writeln!(out, "weight_decay={}", cfg.weight_decay);
    let _ = writeln!(out, "lr_start={}", cfg.lr_start);
    let _ = writeln!(out, "lr_end={}", cfg.lr_end);
    let _ = writeln!(out, "seed={}", cfg.seed);
    let _ = writeln!(out, "sigma={}", cfg.sigma);
    let _ = writeln!(out, "hidden={}", join(&cfg.hidden));
    let _ = writeln!(out, "activation={}", model.activation());
    let _ = writeln!(out, "dims={}", join(&model.dims()));
    for (i, layer) in model.layers().iter().enumerate() {
        let _ = writeln!(out, "weights.{i}={}", join(&layer.weights));
        let _ = writeln!(out, "bias.{i}={}", join(&layer.bias));
    }
    out
}

pub fn save(path: impl AsRef<Path>, model: &MlpModel, cfg: &TrainConfig) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_text(model, cfg)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<(MlpModel, TrainConfig)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text, path)
}

pub fn parse(text: &str, path: &Path) -> Result<(MlpModel, TrainConfig)> {
    let bad = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let header = lines.next().map(|(_, l)| l).unwrap_or_default();
    let version = header
        .strip_prefix(MAGIC)
        .and_then(|rest| rest.trim().strip_prefix("version="))
        .ok_or_else(|| bad(1, format!("expected '{MAGIC} version=N' header")))?;
    if version != FORMAT_VERSION.to_string() {
        return Err(Error::Version {
            path: path.to_path_buf(),
            found: version.to_string(),
            expected: FORMAT_VERSION,
        });
    }

    let mut fields: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    for (n, line) in lines {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(n, "expected key=value".into()))?;
        fields.insert(k, (n, v));
    }
    let get = |key: &str| -> Result<(usize, &str)> {
        fields
            .get(key)
            .copied()
            .ok_or_else(|| bad(0, format!("missing key '{key}'")))
    };
    fn num<T: std::str::FromStr>(
        (n, v): (usize, &str),
        bad: &impl Fn(usize, String) -> Error,
    ) -> Result<T> {
        v.parse().map_err(|_| bad(n, format!("bad value '{v}'")))
    }
    fn list<T: std::str::FromStr>(
        (n, v): (usize, &str),
        bad: &impl Fn(usize, String) -> Error,
    ) -> Result<Vec<T>> {
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|s| s.parse().map_err(|_| bad(n, format!("bad list entry '{s}'"))))
            .collect()
    }

    let (ln, kind) = get("loss")?;
    let kind: LossKind = kind.parse().map_err(|e: Error| bad(ln, e.to_string()))?;
    let loss = LossSpec::new(
        kind,
        num(get("alpha")?, &bad)?,
        num(get("lambda1")?, &bad)?,
        num(get("lambda2")?, &bad)?,
    )?;
    let (an, act) = get("activation")?;
    let activation: Activation = act.parse().map_err(|e: Error| bad(an, e.to_string()))?;
    let cfg = TrainConfig {
        loss,
        epochs: num(get("epochs")?, &bad)?,
        batch_size: num(get("batch_size")?, &bad)?,
        momentum: num(get("momentum")?, &bad)?,
        weight_decay: num(get("weight_decay")?, &bad)?,
        lr_start: num(get("lr_start")?, &bad)?,
        lr_end: num(get("lr_end")?, &bad)?,
        seed: num(get("seed")?, &bad)?,
        sigma: num(get("sigma")?, &bad)?,
        hidden: list(get("hidden")?, &bad)?,
        activation,
    };

    let dims_field = get("dims")?;
    let dims: Vec<usize> = list(dims_field, &bad)?;
    if dims.len() < 2 {
        return Err(bad(dims_field.0, "need at least two dims".into()));
    }
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for (i, w) in dims.windows(2).enumerate() {
        let wf = get(&format!("weights.{i}"))?;
        let bf = get(&format!("bias.{i}"))?;
        let weights: Vec<f64> = list(wf, &bad)?;
        let bias: Vec<f64> = list(bf, &bad)?;
        if weights.len() != w[0] * w[1] {
            return Err(bad(
                wf.0,
                format!("expected {} weights, found {}", w[0] * w[1], weights.len()),
            ));
        }
        if bias.len() != w[1] {
            return Err(bad(bf.0, format!("expected {} biases, found {}", w[1], bias.len())));
        }
        layers.push(Dense {
            inputs: w[0],
            outputs: w[1],
            weights,
            bias,
        });
    }
    Ok((MlpModel::from_layers(layers, activation)?, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_exact() {
        let model = MlpModel::random(&[4, 7, 5], Activation::Tanh, 21).unwrap();
        let cfg = TrainConfig {
            loss: LossSpec::ce_mv(0.3, 0.07).unwrap(),
            hidden: vec![7],
            activation: Activation::Tanh,
            ..TrainConfig::default()
        };
        let text = to_text(&model, &cfg);
        let (m2, c2) = parse(&text, Path::new("ckpt")).unwrap();
        assert_eq!(m2, model);
        assert_eq!(c2, cfg);
        assert_eq!(to_text(&m2, &c2), text);
        let commented = to_text_with_comments(&model, &cfg, "# data=train.csv\n");
        assert_eq!(parse(&commented, Path::new("ckpt")).unwrap(), (model, cfg));
    }

    #[test]
    fn rejects_version_and_shape_errors() {
        let model = MlpModel::random(&[2, 3], Activation::Relu, 1).unwrap();
        let cfg = TrainConfig {
            hidden: vec![],
            ..TrainConfig::default()
        };
        let text = to_text(&model, &cfg);
        let v2 = text.replacen("version=1", "version=9", 1);
        assert!(matches!(parse(&v2, Path::new("c")), Err(Error::Version { .. })));
        let short = text.replacen("dims=2,3", "dims=2,4", 1);
        assert!(matches!(parse(&short, Path::new("c")), Err(Error::Parse { .. })));
        assert!(parse("garbage", Path::new("c")).is_err());
    }
}
