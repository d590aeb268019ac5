//! Self-describing text checkpoints. Values are stored as the hex bit
//! pattern of their `f64` widening, so a round trip is bit-exact.

use std::fs;
use std::path::Path;

use super::params::{Hyper, ModelKind, ModelParameters, ParamTensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::trace::TableLayout;

pub const MAGIC: &str = "embcache-checkpoint v1";

pub fn render_checkpoint<T: Scalar>(p: &ModelParameters<T>) -> String {
    let mut s = String::new();
    s.push_str(MAGIC);
    s.push('\n');
    s.push_str(&format!("kind {}\n", p.kind));
    s.push_str(&format!("scalar {}\n", T::NAME));
    let sizes: Vec<String> = p.vocabulary.sizes().iter().map(|x| x.to_string()).collect();
    s.push_str(&format!("vocab {}\n", sizes.join(",")));
    s.push_str(&format!("vocab_hash {}\n", p.vocabulary.fingerprint()));
    s.push_str(&format!("hyper {}\n", p.hyper.render()));
    for t in p.tensors() {
        s.push_str(&format!("param {} {} {}\n", t.name, t.rows, t.cols));
        let vals: Vec<String> = t.data.iter().map(|v| format!("{:016x}", v.to_f64_lossless().to_bits())).collect();
        s.push_str(&vals.join(" "));
        s.push('\n');
    }
    s.push_str("end\n");
    s
}

fn field<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, key: &str) -> Result<(usize, &'a str)> {
    let (n, l) = lines.next().ok_or_else(|| Error::Parse {
        line: 0,
        msg: format!("truncated checkpoint, expected {key}"),
    })?;
    let rest = l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')).ok_or_else(|| Error::Parse {
        line: n,
        msg: format!("expected `{key} ...`, found {l:?}"),
    })?;
    Ok((n, rest))
}

pub fn parse_checkpoint<T: Scalar>(text: &str) -> Result<ModelParameters<T>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l == MAGIC => {}
        other => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("not a checkpoint: expected {MAGIC:?}, found {:?}", other.map(|x| x.1).unwrap_or("")),
            })
        }
    }
    let (n, kind) = field(&mut lines, "kind")?;
    let kind: ModelKind = kind.parse().map_err(|e: Error| Error::Parse { line: n, msg: e.to_string() })?;
    let (n, scalar) = field(&mut lines, "scalar")?;
    if scalar != "f32" && scalar != "f64" {
        return Err(Error::Parse {
            line: n,
            msg: format!("unknown scalar {scalar:?}"),
        });
    }
    let (n, vocab) = field(&mut lines, "vocab")?;
    let sizes = vocab
        .split(',')
        .map(|x| x.trim().parse::<u64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Parse {
            line: n,
            msg: format!("bad vocabulary sizes: {e}"),
        })?;
    let layout = TableLayout::new(sizes).map_err(|e| Error::Parse { line: n, msg: e.to_string() })?;
    let (_, hash) = field(&mut lines, "vocab_hash")?;
    if hash != layout.fingerprint() {
        return Err(Error::VocabularyMismatch {
            expected: hash.to_string(),
            found: layout.fingerprint(),
        });
    }
    let (n, hyper) = field(&mut lines, "hyper")?;
    let hyper = Hyper::parse(hyper).map_err(|e| Error::Parse { line: n, msg: e.to_string() })?;

    let mut tensors = Vec::new();
    loop {
        let (n, l) = lines.next().ok_or(Error::Parse {
            line: 0,
            msg: "missing `end` marker".into(),
        })?;
        if l == "end" {
            break;
        }
        let head: Vec<&str> = l
            .strip_prefix("param ")
            .ok_or_else(|| Error::Parse {
                line: n,
                msg: format!("expected `param name rows cols`, found {l:?}"),
            })?
            .split_whitespace()
            .collect();
        let bad = |msg: String| Error::Parse { line: n, msg };
        if head.len() != 3 {
            return Err(bad(format!("malformed parameter header {l:?}")));
        }
        let rows: usize = head[1].parse().map_err(|_| bad(format!("bad row count {:?}", head[1])))?;
        let cols: usize = head[2].parse().map_err(|_| bad(format!("bad column count {:?}", head[2])))?;
        let (vn, vl) = lines.next().ok_or_else(|| bad(format!("missing values for {}", head[0])))?;
        let data = vl
            .split_whitespace()
            .map(|h| u64::from_str_radix(h, 16).map(|b| T::of(f64::from_bits(b))))
            .collect::<std::result::Result<Vec<T>, _>>()
            .map_err(|e| Error::Parse {
                line: vn,
                msg: format!("bad value: {e}"),
            })?;
        if data.len() != rows * cols {
            return Err(Error::Parse {
                line: vn,
                msg: format!("{} expects {} values, found {}", head[0], rows * cols, data.len()),
            });
        }
        tensors.push(ParamTensor {
            name: head[0].to_string(),
            rows,
            cols,
            row_sparse: head[0] == "embed.id",
            data,
        });
    }
    ModelParameters::from_tensors(kind, hyper, layout, tensors)
}

pub fn save_checkpoint<T: Scalar>(p: &ModelParameters<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, render_checkpoint(p))?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<ModelParameters<T>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    parse_checkpoint(&fs::read_to_string(path)?)
}

/// Loads a checkpoint and refuses it unless it was trained on `vocab`.
pub fn load_for_inference<T: Scalar>(path: impl AsRef<Path>, vocab: &TableLayout) -> Result<ModelParameters<T>> {
    let p = load_checkpoint(path)?;
    p.check_vocabulary(vocab)?;
    Ok(p)
}
