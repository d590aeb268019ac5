//! Turns optgen decisions into supervised samples: per-access keep bits for
//! the caching model and miss sequences for the prefetch model.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::cache_sim::{simulate_optgen, SimResult};
use crate::error::{Error, Result};
use crate::trace::{EmbeddingIndex, SequenceSample, TableLayout, Trace};

/// Fraction of the runtime buffer handed to optgen when labeling; the rest
/// is left for prefetched vectors.
pub const LABEL_CAPACITY_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    pub samples: Vec<SequenceSample>,
    pub label_capacity: usize,
    pub vocabulary: TableLayout,
    /// Samples whose window had no optgen miss (prefetch labeling only).
    pub dropped: usize,
}

/// `floor(0.8 * gpu_capacity)`, refusing a zero result.
pub fn label_capacity(gpu_capacity: usize) -> Result<usize> {
    let cap = (gpu_capacity as f64 * LABEL_CAPACITY_FRACTION).floor() as usize;
    if cap == 0 {
        return Err(Error::InvalidConfig(format!(
            "a buffer of {gpu_capacity} slots leaves no room for optgen labeling"
        )));
    }
    Ok(cap)
}

fn check_alignment(trace: &Trace, s: &SequenceSample) -> Result<()> {
    let acc = trace.accesses();
    let end = s.origin + s.input.len();
    if end > acc.len() || acc[s.origin..end] != s.input[..] {
        return Err(Error::validation(
            None,
            format!("sample at origin {} does not match the trace", s.origin),
        ));
    }
    Ok(())
}

fn caching_labels(trace: &Trace, samples: &[SequenceSample], sim: &SimResult) -> Result<Vec<SequenceSample>> {
    let keep = sim.keep_decisions.as_ref().expect("optgen always emits keep decisions");
    samples
        .iter()
        .map(|s| {
            check_alignment(trace, s)?;
            let mut s = s.clone();
            s.cache_labels = Some(keep[s.origin..s.origin + s.input.len()].to_vec());
            Ok(s)
        })
        .collect()
}

/// First `output_len` optgen misses inside the window, padded by repeating
/// the last one; `None` when the window has no miss.
fn window_targets(trace: &Trace, s: &SequenceSample, sim: &SimResult, output_len: usize) -> Option<Vec<EmbeddingIndex>> {
    let start = s.origin + s.input.len();
    let win_len = s.window.as_ref().map_or(0, Vec::len);
    let end = (start + win_len).min(trace.len());
    let mut targets: Vec<EmbeddingIndex> = (start..end)
        .filter(|&p| !sim.per_access_hit[p])
        .map(|p| trace.accesses()[p])
        .take(output_len)
        .collect();
    let last = *targets.last()?;
    targets.resize(output_len, last);
    Some(targets)
}

pub fn label_caching(trace: &Trace, samples: &[SequenceSample], gpu_capacity: usize) -> Result<LabeledDataset> {
    let cap = label_capacity(gpu_capacity)?;
    let sim = simulate_optgen(trace, cap)?;
    Ok(LabeledDataset {
        samples: caching_labels(trace, samples, &sim)?,
        label_capacity: cap,
        vocabulary: trace.layout().clone(),
        dropped: 0,
    })
}

pub fn label_prefetch(
    trace: &Trace,
    samples: &[SequenceSample],
    gpu_capacity: usize,
    output_len: usize,
) -> Result<LabeledDataset> {
    let cap = label_capacity(gpu_capacity)?;
    let sim = simulate_optgen(trace, cap)?;
    let mut kept = Vec::with_capacity(samples.len());
    let mut dropped = 0;
    for s in samples {
        check_alignment(trace, s)?;
        match window_targets(trace, s, &sim, output_len) {
            Some(t) => {
                let mut s = s.clone();
                s.prefetch_targets = Some(t);
                kept.push(s);
            }
            None => dropped += 1,
        }
    }
    Ok(LabeledDataset {
        samples: kept,
        label_capacity: cap,
        vocabulary: trace.layout().clone(),
        dropped,
    })
}

/// Both label kinds from one optgen run. Every sample keeps its caching
/// labels; samples without a window miss keep `prefetch_targets = None` and
/// are counted in `dropped`.
pub fn label_all(trace: &Trace, samples: &[SequenceSample], gpu_capacity: usize, output_len: usize) -> Result<LabeledDataset> {
    let cap = label_capacity(gpu_capacity)?;
    let sim = simulate_optgen(trace, cap)?;
    let mut out = caching_labels(trace, samples, &sim)?;
    let mut dropped = 0;
    for s in out.iter_mut() {
        s.prefetch_targets = window_targets(trace, s, &sim, output_len);
        dropped += s.prefetch_targets.is_none() as usize;
    }
    Ok(LabeledDataset {
        samples: out,
        label_capacity: cap,
        vocabulary: trace.layout().clone(),
        dropped,
    })
}

impl LabeledDataset {
    /// Splits by origin order: the first `train_fraction` of samples train.
    pub fn split(&self, train_fraction: f64) -> (LabeledDataset, LabeledDataset) {
        let n = ((self.samples.len() as f64) * train_fraction.clamp(0.0, 1.0)).round() as usize;
        let mut train = self.clone();
        let mut valid = self.clone();
        train.samples.truncate(n);
        valid.samples.drain(..n);
        (train, valid)
    }

    /// Samples carrying prefetch targets.
    pub fn with_targets(&self) -> Vec<&SequenceSample> {
        self.samples.iter().filter(|s| s.prefetch_targets.is_some()).collect()
    }

    pub fn render(&self) -> String {
        let sizes: Vec<String> = self.vocabulary.sizes().iter().map(u64::to_string).collect();
        let mut out = String::new();
        let _ = writeln!(out, "tables: {}", sizes.join(","));
        let _ = writeln!(out, "label_capacity: {}", self.label_capacity);
        let _ = writeln!(out, "dropped: {}", self.dropped);
        let ids = |v: &[EmbeddingIndex]| {
            v.iter()
                .map(|a| format!("{}:{}", a.table_id, a.row_id))
                .collect::<Vec<_>>()
                .join(" ")
        };
        for s in &self.samples {
            let labels = s.cache_labels.as_ref().map_or("-".to_string(), |l| {
                l.iter().map(|&b| if b { "1" } else { "0" }).collect::<Vec<_>>().join(" ")
            });
            let targets = s.prefetch_targets.as_deref().map_or("-".to_string(), ids);
            let window = s.window.as_deref().map_or("-".to_string(), ids);
            let _ = writeln!(out, "{} | {} | {} | {} | {}", s.origin, ids(&s.input), labels, targets, window);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let mut header = |key: &str| -> Result<String> {
            let (i, l) = lines.next().ok_or(Error::Parse {
                line: 0,
                msg: format!("missing `{key}` header"),
            })?;
            l.trim()
                .strip_prefix(key)
                .map(|v| v.trim().to_string())
                .ok_or(Error::Parse {
                    line: i + 1,
                    msg: format!("expected `{key}` header"),
                })
        };
        let sizes = crate::trace::io_parse_header(&format!("tables:{}", header("tables:")?))?;
        let vocabulary = TableLayout::new(sizes)?;
        let num = |v: String, line| {
            v.parse::<usize>().map_err(|_| Error::Parse {
                line,
                msg: format!("bad number {v:?}"),
            })
        };
        let label_capacity = num(header("label_capacity:")?, 2)?;
        let dropped = num(header("dropped:")?, 3)?;

        let mut samples = Vec::new();
        for (i, raw) in lines {
            let line_no = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let perr = |msg: String| Error::Parse { line: line_no, msg };
            let fields: Vec<&str> = raw.split('|').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(perr(format!("expected 5 `|`-separated fields, got {}", fields.len())));
            }
            let origin = fields[0].parse().map_err(|_| perr(format!("bad origin {:?}", fields[0])))?;
            let parse_ids = |f: &str| -> Result<Option<Vec<EmbeddingIndex>>> {
                if f == "-" {
                    return Ok(None);
                }
                f.split_whitespace()
                    .map(|tok| {
                        let (t, r) = tok.split_once(':').ok_or_else(|| perr(format!("bad id {tok:?}")))?;
                        let t = t.parse().map_err(|_| perr(format!("bad table id {t:?}")))?;
                        let r = r.parse().map_err(|_| perr(format!("bad row id {r:?}")))?;
                        vocabulary.index(t, r).map_err(|e| Error::validation(Some(line_no), e.to_string()))
                    })
                    .collect::<Result<Vec<_>>>()
                    .map(Some)
            };
            let input = parse_ids(fields[1])?.ok_or_else(|| perr("input ids are required".into()))?;
            let cache_labels = if fields[2] == "-" {
                None
            } else {
                Some(
                    fields[2]
                        .split_whitespace()
                        .map(|b| match b {
                            "1" => Ok(true),
                            "0" => Ok(false),
                            _ => Err(perr(format!("bad label {b:?}"))),
                        })
                        .collect::<Result<Vec<_>>>()?,
                )
            };
            samples.push(SequenceSample {
                origin,
                input,
                cache_labels,
                prefetch_targets: parse_ids(fields[3])?,
                window: parse_ids(fields[4])?,
            });
        }
        Ok(Self {
            samples,
            label_capacity,
            vocabulary,
            dropped,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.render())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        Self::parse(&fs::read_to_string(path)?)
    }
}
