//! Encoder/decoder LSTM stacks with additive attention.

use super::params::{ModelKind, ModelParameters};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::trace::{EmbeddingIndex, TableLayout};

struct StackIds {
    enc_w: usize,
    enc_b: usize,
    dec_w: usize,
    dec_b: usize,
    att_wk: usize,
    att_wq: usize,
    att_b: usize,
    att_v: usize,
    out_w: usize,
    out_b: usize,
}

impl StackIds {
    fn of<T: Scalar>(p: &ModelParameters<T>, s: usize) -> Self {
        let id = |n: &str| p.id(&format!("s{s}.{n}"));
        Self {
            enc_w: id("enc.w"),
            enc_b: id("enc.b"),
            dec_w: id("dec.w"),
            dec_b: id("dec.b"),
            att_wk: id("att.wk"),
            att_wq: id("att.wq"),
            att_b: id("att.b"),
            att_v: id("att.v"),
            out_w: id("out.w"),
            out_b: id("out.b"),
        }
    }
}

fn lstm_step<T: Scalar>(t: &mut Tape<'_, T>, w: usize, b: usize, hd: usize, x: Var, h: Var, c: Var) -> (Var, Var) {
    let xh = t.concat(&[x, h]);
    let z = t.affine(w, Some(b), xh);
    let zi = t.slice(z, 0, hd);
    let zf = t.slice(z, hd, hd);
    let zg = t.slice(z, 2 * hd, hd);
    let zo = t.slice(z, 3 * hd, hd);
    let i = t.sigmoid(zi);
    let f = t.sigmoid(zf);
    let g = t.tanh(zg);
    let o = t.sigmoid(zo);
    let fc = t.mul(f, c);
    let ig = t.mul(i, g);
    let c2 = t.add(fc, ig);
    let tc = t.tanh(c2);
    let h2 = t.mul(o, tc);
    (h2, c2)
}

/// One encoder/decoder stack. The decoder starts from the final encoder
/// state and attends over every encoder output at each step.
fn run_stack<T: Scalar>(t: &mut Tape<'_, T>, ids: &StackIds, hd: usize, enc_in: &[Var], dec_in: &[Var]) -> Vec<Var> {
    let mut h = t.zeros(hd);
    let mut c = t.zeros(hd);
    let mut enc = Vec::with_capacity(enc_in.len());
    for &x in enc_in {
        (h, c) = lstm_step(t, ids.enc_w, ids.enc_b, hd, x, h, c);
        enc.push(h);
    }
    let keys: Vec<Var> = enc.iter().map(|&e| t.affine(ids.att_wk, None, e)).collect();
    let mut out = Vec::with_capacity(dec_in.len());
    for &x in dec_in {
        (h, c) = lstm_step(t, ids.dec_w, ids.dec_b, hd, x, h, c);
        let q = t.affine(ids.att_wq, Some(ids.att_b), h);
        let scores: Vec<Var> = keys
            .iter()
            .map(|&k| {
                let s = t.add(k, q);
                let a = t.tanh(s);
                t.row_dot(ids.att_v, 0, None, a)
            })
            .collect();
        let sc = t.concat(&scores);
        let weights = t.softmax(sc);
        let ctx = t.weighted_sum(weights, &enc);
        let hc = t.concat(&[h, ctx]);
        let o = t.affine(ids.out_w, Some(ids.out_b), hc);
        out.push(t.tanh(o));
    }
    out
}

fn check_input<T: Scalar>(p: &ModelParameters<T>, input: &[EmbeddingIndex]) -> Result<()> {
    if input.is_empty() {
        return Err(Error::Empty("model input"));
    }
    let total = p.vocabulary.total();
    for ix in input {
        if ix.global_id >= total || ix.table_id as usize >= p.vocabulary.num_tables() {
            return Err(Error::OutOfVocabulary {
                global_id: ix.global_id,
                total,
            });
        }
    }
    Ok(())
}

fn tokens<T: Scalar>(t: &mut Tape<'_, T>, p: &ModelParameters<T>, input: &[EmbeddingIndex]) -> Vec<Var> {
    let (eid, etab) = (p.id("embed.id"), p.id("embed.table"));
    input
        .iter()
        .map(|ix| {
            let a = t.row(eid, ix.global_id as usize);
            let b = t.row(etab, ix.table_id as usize);
            t.concat(&[a, b])
        })
        .collect()
}

fn require_kind<T>(p: &ModelParameters<T>, kind: ModelKind) -> Result<()> {
    if p.kind != kind {
        return Err(Error::InvalidConfig(format!("expected a {kind} model, got {}", p.kind)));
    }
    Ok(())
}

/// Recorded caching forward pass; `logits` are the head pre-activations.
pub struct CachingForward<'p, T: Scalar> {
    pub tape: Tape<'p, T>,
    pub logits: Vec<Var>,
}

impl<T: Scalar> CachingForward<'_, T> {
    pub fn probs(&self) -> Vec<T> {
        self.logits
            .iter()
            .map(|&l| {
                let x = self.tape.value(l)[0];
                T::one() / (T::one() + (-x).exp())
            })
            .collect()
    }
}

pub fn record_caching<'p, T: Scalar>(p: &'p ModelParameters<T>, input: &[EmbeddingIndex]) -> Result<CachingForward<'p, T>> {
    require_kind(p, ModelKind::Caching)?;
    check_input(p, input)?;
    let hd = p.hyper.hidden;
    let mut t = Tape::new(p);
    let toks = tokens(&mut t, p, input);
    let outs = run_stack(&mut t, &StackIds::of(p, 0), hd, &toks, &toks);
    let (hw, hb) = (p.id("head.w"), p.id("head.b"));
    let logits = outs.iter().map(|&o| t.row_dot(hw, 0, Some((hb, 0)), o)).collect();
    Ok(CachingForward { tape: t, logits })
}

/// Per-position keep probabilities.
pub fn forward_caching<T: Scalar>(p: &ModelParameters<T>, input: &[EmbeddingIndex]) -> Result<Vec<T>> {
    Ok(record_caching(p, input)?.probs())
}

pub struct PrefetchForward<'p, T: Scalar> {
    pub tape: Tape<'p, T>,
    pub outputs: Vec<Var>,
}

impl<T: Scalar> PrefetchForward<'_, T> {
    pub fn values(&self) -> Vec<T> {
        self.outputs.iter().map(|&o| self.tape.value(o)[0]).collect()
    }
}

pub fn record_prefetch<'p, T: Scalar>(p: &'p ModelParameters<T>, input: &[EmbeddingIndex]) -> Result<PrefetchForward<'p, T>> {
    require_kind(p, ModelKind::Prefetch)?;
    check_input(p, input)?;
    let h = p.hyper;
    let mut t = Tape::new(p);
    let mut xs = tokens(&mut t, p, input);
    for s in 0..h.stacks {
        let ids = StackIds::of(p, s);
        xs = if s + 1 == h.stacks {
            let q = p.id(&format!("s{s}.query"));
            let queries: Vec<Var> = (0..h.output_len).map(|k| t.row(q, k)).collect();
            run_stack(&mut t, &ids, h.hidden, &xs, &queries)
        } else {
            let enc = xs.clone();
            run_stack(&mut t, &ids, h.hidden, &enc, &xs)
        };
    }
    let (fw, fb, pw, pb) = (p.id("fc.w"), p.id("fc.b"), p.id("proj.w"), p.id("proj.b"));
    let outputs = xs
        .iter()
        .enumerate()
        .map(|(k, &o)| {
            let a = t.affine(fw, Some(fb), o);
            let f = t.tanh(a);
            t.row_dot(pw, k, Some((pb, k)), f)
        })
        .collect();
    Ok(PrefetchForward { tape: t, outputs })
}

/// `output_len` continuous predictions on the normalized global-id scale.
pub fn forward_prefetch<T: Scalar>(p: &ModelParameters<T>, input: &[EmbeddingIndex]) -> Result<Vec<T>> {
    Ok(record_prefetch(p, input)?.values())
}

/// Normalized position of a global id, the scale prefetch outputs live on.
pub fn normalize_id(global_id: u64, vocab: &TableLayout) -> f64 {
    let span = vocab.total().saturating_sub(1);
    if span == 0 {
        0.0
    } else {
        global_id as f64 / span as f64
    }
}

/// Maps normalized predictions back to concrete ids, rounding to the
/// nearest id and clamping into range. Non-finite values decode to id 0.
pub fn decode_indices<T: Scalar>(po: &[T], vocab: &TableLayout) -> Vec<EmbeddingIndex> {
    let last = vocab.total() - 1;
    po.iter()
        .map(|v| {
            let x = v.to_f64_lossless() * last as f64;
            let g = if x.is_nan() { 0 } else { x.round().clamp(0.0, last as f64) as u64 };
            vocab.from_global(g).expect("clamped id is in range")
        })
        .collect()
}
