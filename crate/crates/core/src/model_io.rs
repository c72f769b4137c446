//! Line-oriented model file format.
//!
//! ```text
//! furcnet-model v1
//! arch extended_furcated
//! stage1 2(64)
//! stage2 2(128)            # "-" when absent
//! layout 94 94 2
//! tasks 3
//! dropout 3fe0000000000000
//! off_grid false
//! layers 7
//! layer cation.0 94 64 relu 3fe0000000000000
//! w <64 values>            # one line per input row, in_dim lines
//! b <64 values>
//! ...
//! end
//! ```
//!
//! Every float is the 16-digit hex of its IEEE-754 bit pattern, so a round
//! trip is bit-exact.

use std::fmt::Write as _;

use crate::arch::{build_with, ArchClass, NetworkSpec, StageSpec};
use crate::data::FeatureLayout;
use crate::error::{FormatError, Result};
use crate::model::Model;
use crate::nn::{Activation, DenseLayer};

pub const HEADER: &str = "furcnet-model v1";

fn hex(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn write_row<'a>(out: &mut String, tag: &str, values: impl Iterator<Item = &'a f64>) {
    out.push_str(tag);
    for v in values {
        out.push(' ');
        out.push_str(&hex(*v));
    }
    out.push('\n');
}

pub fn serialize(model: &Model) -> String {
    let spec = model.spec();
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "arch {}", spec.arch.token());
    let _ = writeln!(out, "stage1 {}", spec.stage1);
    let _ = writeln!(out, "stage2 {}", spec.stage2.map_or_else(|| "-".into(), |s| s.to_string()));
    let l = spec.layout;
    let _ = writeln!(out, "layout {} {} {}", l.n_cation, l.n_anion, l.n_state);
    let _ = writeln!(out, "tasks {}", spec.n_tasks);
    let _ = writeln!(out, "dropout {}", hex(spec.dropout));
    let _ = writeln!(out, "off_grid {}", spec.off_grid);
    let names = model.layer_names();
    let _ = writeln!(out, "layers {}", names.len());
    for (layer, name) in model.layers().zip(&names) {
        let _ = writeln!(
            out,
            "layer {name} {} {} {} {}",
            layer.in_dim(),
            layer.out_dim(),
            layer.activation.token(),
            hex(layer.dropout_rate)
        );
        for row in layer.weights.rows() {
            write_row(&mut out, "w", row.iter());
        }
        write_row(&mut out, "b", layer.bias.iter());
    }
    out.push_str("end\n");
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self, expected: &str) -> Result<(usize, &'a str), FormatError> {
        self.inner
            .next()
            .map(|(i, l)| (i + 1, l.trim_end()))
            .ok_or_else(|| FormatError::Truncated {
                expected: expected.to_string(),
            })
    }

    /// Next line, which must be `key value...`; returns the value part.
    fn field(&mut self, key: &str) -> Result<(usize, &'a str), FormatError> {
        let (n, line) = self.next(key)?;
        match line.split_once(' ') {
            Some((k, rest)) if k == key => Ok((n, rest.trim())),
            _ => Err(FormatError::Parse {
                line: n,
                message: format!("expected `{key} ...`, found {line:?}"),
            }),
        }
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, s: &str, what: &str) -> Result<T, FormatError> {
    s.parse().map_err(|_| FormatError::Parse {
        line,
        message: format!("invalid {what} {s:?}"),
    })
}

fn parse_hex(line: usize, s: &str) -> Result<f64, FormatError> {
    u64::from_str_radix(s, 16)
        .map(f64::from_bits)
        .map_err(|_| FormatError::Parse {
            line,
            message: format!("invalid hex float {s:?}"),
        })
}

fn parse_row(line: usize, text: &str, tag: &str, width: usize, block: &str) -> Result<Vec<f64>, FormatError> {
    let rest = match text.split_once(' ') {
        Some((t, rest)) if t == tag => rest,
        None if text == tag => "",
        _ => {
            return Err(FormatError::Parse {
                line,
                message: format!("expected a `{tag}` row in {block}, found {text:?}"),
            })
        }
    };
    let values = rest
        .split_whitespace()
        .map(|s| parse_hex(line, s))
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != width {
        return Err(FormatError::ShapeInconsistency {
            block: block.to_string(),
            detail: format!("line {line}: declared width {width} but found {} values", values.len()),
        });
    }
    Ok(values)
}

pub fn deserialize(text: &str) -> Result<Model> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (_, header) = lines.next("header")?;
    if header != HEADER {
        return Err(FormatError::Version {
            found: header.to_string(),
        }
        .into());
    }

    let (_, arch) = lines.field("arch")?;
    let arch = ArchClass::ALL
        .into_iter()
        .find(|a| a.token() == arch)
        .ok_or_else(|| FormatError::UnknownToken {
            field: "arch_class".into(),
            token: arch.to_string(),
        })?;
    let (n, stage1) = lines.field("stage1")?;
    let stage1: StageSpec = stage1.parse().map_err(|_| FormatError::Parse {
        line: n,
        message: format!("invalid stage {stage1:?}"),
    })?;
    let (n, stage2) = lines.field("stage2")?;
    let stage2 = match stage2 {
        "-" => None,
        s => Some(s.parse::<StageSpec>().map_err(|_| FormatError::Parse {
            line: n,
            message: format!("invalid stage {s:?}"),
        })?),
    };
    let (n, layout) = lines.field("layout")?;
    let dims = layout
        .split_whitespace()
        .map(|s| parse_num::<usize>(n, s, "layout size"))
        .collect::<Result<Vec<_>, _>>()?;
    let [n_cation, n_anion, n_state] = dims[..] else {
        return Err(FormatError::Parse {
            line: n,
            message: "layout needs three sizes".into(),
        }
        .into());
    };
    let (n, tasks) = lines.field("tasks")?;
    let n_tasks = parse_num::<usize>(n, tasks, "task count")?;
    let (n, dropout) = lines.field("dropout")?;
    let dropout = parse_hex(n, dropout)?;
    let (n, off_grid) = lines.field("off_grid")?;
    let off_grid = parse_num::<bool>(n, off_grid, "off_grid flag")?;

    let spec = NetworkSpec {
        arch,
        stage1,
        stage2,
        layout: FeatureLayout::new(n_cation, n_anion, n_state),
        n_tasks,
        dropout,
        off_grid,
    };
    let mut model = build_with(&spec, DenseLayer::zeros)?;
    let names = model.layer_names();

    let (n, count) = lines.field("layers")?;
    let count = parse_num::<usize>(n, count, "layer count")?;
    if count != names.len() {
        return Err(FormatError::ShapeInconsistency {
            block: "layers".into(),
            detail: format!("file declares {count} layers, spec implies {}", names.len()),
        }
        .into());
    }

    for (layer, name) in model.layers_mut().zip(&names) {
        let (n, head) = lines.field("layer")?;
        let parts: Vec<&str> = head.split_whitespace().collect();
        let [file_name, in_dim, out_dim, act, drop] = parts[..] else {
            return Err(FormatError::Parse {
                line: n,
                message: format!("malformed layer header {head:?}"),
            }
            .into());
        };
        let in_dim = parse_num::<usize>(n, in_dim, "input width")?;
        let out_dim = parse_num::<usize>(n, out_dim, "output width")?;
        if file_name != name || in_dim != layer.in_dim() || out_dim != layer.out_dim() {
            return Err(FormatError::ShapeInconsistency {
                block: name.clone(),
                detail: format!(
                    "file has {file_name} {in_dim}×{out_dim}, spec implies {name} {}×{}",
                    layer.in_dim(),
                    layer.out_dim()
                ),
            }
            .into());
        }
        layer.activation = Activation::from_token(act).ok_or_else(|| FormatError::UnknownToken {
            field: "activation".into(),
            token: act.to_string(),
        })?;
        layer.dropout_rate = parse_hex(n, drop)?;

        for r in 0..in_dim {
            let (n, text) = lines.next(&format!("weight row {r} of {name}"))?;
            let row = parse_row(n, text, "w", out_dim, name)?;
            layer.weights.row_mut(r).assign(&ndarray::ArrayView1::from(&row));
        }
        let (n, text) = lines.next(&format!("bias of {name}"))?;
        let bias = parse_row(n, text, "b", out_dim, name)?;
        layer.bias.assign(&ndarray::ArrayView1::from(&bias));
    }
    let (n, end) = lines.next("end")?;
    if end != "end" {
        return Err(FormatError::Parse {
            line: n,
            message: format!("expected `end`, found {end:?}"),
        }
        .into());
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::build;
    use crate::error::Error;
    use ndarray::Array2;

    fn sample() -> Model {
        let spec = NetworkSpec::extended(StageSpec::new(2, 16), StageSpec::new(2, 32), 3);
        build(&spec, 13).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = sample();
        let text = serialize(&m);
        let back = deserialize(&text).unwrap();
        assert_eq!(back, m);
        let x = Array2::from_shape_fn((3, 190), |(i, j)| ((i * 7 + j) as f64).sin());
        assert_eq!(back.predict(x.view()).unwrap(), m.predict(x.view()).unwrap());
        assert_eq!(serialize(&back), text);
    }

    #[test]
    fn short_weight_row_is_shape_error() {
        let text = serialize(&sample());
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let i = lines.iter().position(|l| l.starts_with("w ")).unwrap();
        let mut vals: Vec<&str> = lines[i].split(' ').collect();
        vals.pop();
        lines[i] = vals.join(" ");
        let err = deserialize(&lines.join("\n")).unwrap_err();
        assert!(
            matches!(err, Error::Format(FormatError::ShapeInconsistency { .. })),
            "{err}"
        );
    }

    #[test]
    fn unknown_arch_token_named() {
        let text = serialize(&sample()).replace("arch extended_furcated", "arch hexafurcated");
        let err = deserialize(&text).unwrap_err();
        assert!(err.to_string().contains("hexafurcated"), "{err}");
        assert!(matches!(err, Error::Format(FormatError::UnknownToken { .. })));
    }

    #[test]
    fn version_and_truncation() {
        let text = serialize(&sample());
        let err = deserialize(&text.replace("furcnet-model v1", "furcnet-model v2")).unwrap_err();
        assert!(matches!(err, Error::Format(FormatError::Version { .. })));
        let cut: String = text.lines().take(40).collect::<Vec<_>>().join("\n");
        let err = deserialize(&cut).unwrap_err();
        assert!(matches!(err, Error::Format(FormatError::Truncated { .. })), "{err}");
    }
}
