use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::trace::TableLayout;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// Per-position keep/evict priority bit.
    Caching,
    /// `output_len` continuous index predictions.
    Prefetch,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Caching => "caching",
            ModelKind::Prefetch => "prefetch",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "caching" => Ok(ModelKind::Caching),
            "prefetch" => Ok(ModelKind::Prefetch),
            other => Err(Error::InvalidConfig(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hyper {
    pub id_dim: usize,
    pub table_dim: usize,
    pub hidden: usize,
    pub stacks: usize,
    pub input_len: usize,
    pub output_len: usize,
}

impl Hyper {
    pub fn caching() -> Self {
        Self {
            id_dim: 32,
            table_dim: 8,
            hidden: 32,
            stacks: 1,
            input_len: 15,
            output_len: 5,
        }
    }

    pub fn prefetch() -> Self {
        Self {
            stacks: 2,
            ..Self::caching()
        }
    }

    pub fn for_kind(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Caching => Self::caching(),
            ModelKind::Prefetch => Self::prefetch(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.id_dim, self.table_dim, self.hidden, self.stacks, self.input_len, self.output_len];
        if dims.contains(&0) {
            return Err(Error::InvalidConfig(format!("all model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn token_dim(&self) -> usize {
        self.id_dim + self.table_dim
    }

    pub fn render(&self) -> String {
        format!(
            "id_dim={} table_dim={} hidden={} stacks={} input_len={} output_len={}",
            self.id_dim, self.table_dim, self.hidden, self.stacks, self.input_len, self.output_len
        )
    }

    pub fn parse(s: &str) -> Result<Self> {
        let mut h = Self::caching();
        for tok in s.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("bad hyperparameter {tok:?}")))?;
            let v: usize = v
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad value in {tok:?}")))?;
            match k {
                "id_dim" => h.id_dim = v,
                "table_dim" => h.table_dim = v,
                "hidden" => h.hidden = v,
                "stacks" => h.stacks = v,
                "input_len" => h.input_len = v,
                "output_len" => h.output_len = v,
                _ => return Err(Error::InvalidConfig(format!("unknown hyperparameter {k:?}"))),
            }
        }
        h.validate()?;
        Ok(h)
    }
}

/// One named dense array, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor<T> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Gradients touch few rows (embedding tables).
    pub row_sparse: bool,
    pub data: Vec<T>,
}

impl<T: Scalar> ParamTensor<T> {
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    /// Uniform in `[-scale, scale]`.
    Uniform { scale: f64, seed: u64 },
}

impl Init {
    pub fn default_uniform(seed: u64) -> Self {
        Init::Uniform { scale: 0.08, seed }
    }
}

/// Flat named parameter store for one sequence model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters<T> {
    pub kind: ModelKind,
    pub hyper: Hyper,
    pub vocabulary: TableLayout,
    tensors: Vec<ParamTensor<T>>,
    index: HashMap<String, usize>,
}

pub(crate) fn shapes(kind: ModelKind, h: &Hyper, vocab: &TableLayout) -> Vec<(String, usize, usize, bool)> {
    let hd = h.hidden;
    let mut v = vec![
        ("embed.id".to_string(), vocab.total() as usize, h.id_dim, true),
        ("embed.table".to_string(), vocab.num_tables(), h.table_dim, false),
    ];
    for s in 0..h.stacks {
        let enc_in = if s == 0 { h.token_dim() } else { hd };
        let last = s + 1 == h.stacks;
        let dec_in = if kind == ModelKind::Prefetch && last { hd } else { enc_in };
        let p = |n: &str| format!("s{s}.{n}");
        v.push((p("enc.w"), 4 * hd, enc_in + hd, false));
        v.push((p("enc.b"), 1, 4 * hd, false));
        v.push((p("dec.w"), 4 * hd, dec_in + hd, false));
        v.push((p("dec.b"), 1, 4 * hd, false));
        v.push((p("att.wk"), hd, hd, false));
        v.push((p("att.wq"), hd, hd, false));
        v.push((p("att.b"), 1, hd, false));
        v.push((p("att.v"), 1, hd, false));
        v.push((p("out.w"), hd, 2 * hd, false));
        v.push((p("out.b"), 1, hd, false));
        if kind == ModelKind::Prefetch && last {
            v.push((p("query"), h.output_len, hd, false));
        }
    }
    match kind {
        ModelKind::Caching => {
            v.push(("head.w".into(), 1, hd, false));
            v.push(("head.b".into(), 1, 1, false));
        }
        ModelKind::Prefetch => {
            v.push(("fc.w".into(), hd, hd, false));
            v.push(("fc.b".into(), 1, hd, false));
            v.push(("proj.w".into(), h.output_len, hd, false));
            v.push(("proj.b".into(), 1, h.output_len, false));
        }
    }
    v
}

impl<T: Scalar> ModelParameters<T> {
    pub fn new(kind: ModelKind, hyper: Hyper, vocabulary: TableLayout, init: Init) -> Result<Self> {
        hyper.validate()?;
        let mut rng = match init {
            Init::Uniform { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
            Init::Zeros => None,
        };
        let tensors = shapes(kind, &hyper, &vocabulary)
            .into_iter()
            .map(|(name, rows, cols, row_sparse)| {
                let data = match (&mut rng, init) {
                    (Some(r), Init::Uniform { scale, .. }) => {
                        (0..rows * cols).map(|_| T::of(r.random_range(-scale..=scale))).collect()
                    }
                    _ => vec![T::zero(); rows * cols],
                };
                ParamTensor {
                    name,
                    rows,
                    cols,
                    row_sparse,
                    data,
                }
            })
            .collect();
        Self::from_tensors(kind, hyper, vocabulary, tensors)
    }

    /// Assembles parameters, checking names and shapes against the layout
    /// implied by `kind` and `hyper`.
    pub fn from_tensors(kind: ModelKind, hyper: Hyper, vocabulary: TableLayout, tensors: Vec<ParamTensor<T>>) -> Result<Self> {
        hyper.validate()?;
        let expect = shapes(kind, &hyper, &vocabulary);
        if expect.len() != tensors.len() {
            return Err(Error::validation(
                None,
                format!("expected {} parameter arrays, found {}", expect.len(), tensors.len()),
            ));
        }
        for ((name, rows, cols, _), t) in expect.iter().zip(&tensors) {
            if *name != t.name || *rows != t.rows || *cols != t.cols || t.data.len() != rows * cols {
                return Err(Error::validation(
                    None,
                    format!("parameter {} has shape {}x{}, expected {name} {rows}x{cols}", t.name, t.rows, t.cols),
                ));
            }
            if let Some(bad) = t.data.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("{}[{bad}]", t.name)));
            }
        }
        let index = tensors.iter().enumerate().map(|(i, t)| (t.name.clone(), i)).collect();
        Ok(Self {
            kind,
            hyper,
            vocabulary,
            tensors,
            index,
        })
    }

    pub fn tensors(&self) -> &[ParamTensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [ParamTensor<T>] {
        &mut self.tensors
    }

    pub fn id(&self, name: &str) -> usize {
        *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("no parameter named {name}"))
    }

    pub fn get(&self, name: &str) -> Option<&ParamTensor<T>> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn tensor(&self, id: usize) -> &ParamTensor<T> {
        &self.tensors[id]
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    /// Count excluding the id-embedding table, which scales with the vocabulary.
    pub fn dense_parameter_count(&self) -> usize {
        self.tensors.iter().filter(|t| !t.row_sparse).map(|t| t.data.len()).sum()
    }

    pub fn check_vocabulary(&self, vocab: &TableLayout) -> Result<()> {
        if self.vocabulary != *vocab {
            return Err(Error::VocabularyMismatch {
                expected: self.vocabulary.fingerprint(),
                found: vocab.fingerprint(),
            });
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    /// Same parameters in another scalar type.
    pub fn cast<U: Scalar>(&self) -> ModelParameters<U> {
        ModelParameters {
            kind: self.kind,
            hyper: self.hyper,
            vocabulary: self.vocabulary.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| ParamTensor {
                    name: t.name.clone(),
                    rows: t.rows,
                    cols: t.cols,
                    row_sparse: t.row_sparse,
                    data: t.data.iter().map(|x| U::of(x.to_f64_lossless())).collect(),
                })
                .collect(),
            index: self.index.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GradBuf<T> {
    Dense(Vec<T>),
    Rows(BTreeMap<usize, Vec<T>>),
}

/// Gradients with the same named shapes as [`ModelParameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    bufs: Vec<GradBuf<T>>,
    cols: Vec<usize>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(params: &ModelParameters<T>) -> Self {
        let bufs = params
            .tensors
            .iter()
            .map(|t| {
                if t.row_sparse {
                    GradBuf::Rows(BTreeMap::new())
                } else {
                    GradBuf::Dense(vec![T::zero(); t.data.len()])
                }
            })
            .collect();
        Self {
            bufs,
            cols: params.tensors.iter().map(|t| t.cols).collect(),
        }
    }

    pub fn buf(&self, id: usize) -> &GradBuf<T> {
        &self.bufs[id]
    }

    pub(crate) fn dense_mut(&mut self, id: usize) -> &mut [T] {
        match &mut self.bufs[id] {
            GradBuf::Dense(v) => v,
            GradBuf::Rows(_) => panic!("parameter {id} is row-sparse"),
        }
    }

    /// Mutable gradient of one row, allocating sparse rows on demand.
    pub(crate) fn row_mut(&mut self, id: usize, row: usize) -> &mut [T] {
        let cols = self.cols[id];
        match &mut self.bufs[id] {
            GradBuf::Dense(v) => &mut v[row * cols..(row + 1) * cols],
            GradBuf::Rows(m) => m.entry(row).or_insert_with(|| vec![T::zero(); cols]),
        }
    }

    /// Gradient entry at flat position `k` of parameter `id`.
    pub fn value(&self, id: usize, k: usize) -> T {
        match &self.bufs[id] {
            GradBuf::Dense(v) => v[k],
            GradBuf::Rows(m) => {
                let cols = self.cols[id];
                m.get(&(k / cols)).map_or(T::zero(), |r| r[k % cols])
            }
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.bufs.iter_mut().zip(&other.bufs) {
            match (a, b) {
                (GradBuf::Dense(x), GradBuf::Dense(y)) => x.iter_mut().zip(y).for_each(|(p, q)| *p += *q),
                (GradBuf::Rows(x), GradBuf::Rows(y)) => {
                    for (r, yv) in y {
                        let xv = x.entry(*r).or_insert_with(|| vec![T::zero(); yv.len()]);
                        xv.iter_mut().zip(yv).for_each(|(p, q)| *p += *q);
                    }
                }
                _ => unreachable!("gradient layouts differ"),
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for b in self.bufs.iter_mut() {
            match b {
                GradBuf::Dense(x) => x.iter_mut().for_each(|p| *p *= s),
                GradBuf::Rows(m) => m.values_mut().flat_map(|v| v.iter_mut()).for_each(|p| *p *= s),
            }
        }
    }

    /// Fails with the offending parameter name on any NaN or infinity.
    pub fn check_finite(&self, params: &ModelParameters<T>) -> Result<()> {
        for (b, t) in self.bufs.iter().zip(&params.tensors) {
            let ok = match b {
                GradBuf::Dense(x) => x.iter().all(|v| v.is_finite()),
                GradBuf::Rows(m) => m.values().flatten().all(|v| v.is_finite()),
            };
            if !ok {
                return Err(Error::NonFinite(format!("gradient of {}", t.name)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> TableLayout {
        TableLayout::new(vec![10, 6]).unwrap()
    }

    #[test]
    fn shapes_are_consistent() {
        let p = ModelParameters::<f64>::new(ModelKind::Prefetch, Hyper::prefetch(), vocab(), Init::default_uniform(1)).unwrap();
        assert_eq!(p.get("embed.id").unwrap().rows, 16);
        assert_eq!(p.get("s1.query").unwrap().rows, 5);
        assert!(p.get("s0.query").is_none());
        assert_eq!(p.get("s1.enc.w").unwrap().cols, 64);
        assert!(p.tensors().iter().all(|t| t.data.iter().all(|x| x.abs() <= 0.08)));
        let c = ModelParameters::<f64>::new(ModelKind::Caching, Hyper::caching(), vocab(), Init::Zeros).unwrap();
        assert!(c.dense_parameter_count() < c.parameter_count());
        assert!(c.get("head.w").is_some() && c.get("proj.w").is_none());
    }

    #[test]
    fn from_tensors_rejects_bad_shapes() {
        let p = ModelParameters::<f64>::new(ModelKind::Caching, Hyper::caching(), vocab(), Init::Zeros).unwrap();
        let mut ts = p.tensors().to_vec();
        ts[3].cols += 1;
        assert!(ModelParameters::from_tensors(ModelKind::Caching, Hyper::caching(), vocab(), ts).is_err());
        let mut ts = p.tensors().to_vec();
        ts[0].data[0] = f64::NAN;
        assert!(matches!(
            ModelParameters::from_tensors(ModelKind::Caching, Hyper::caching(), vocab(), ts),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn hyper_text_round_trip() {
        let h = Hyper::prefetch();
        assert_eq!(Hyper::parse(&h.render()).unwrap(), h);
        assert!(Hyper::parse("hidden=0").is_err());
    }

    #[test]
    fn sparse_and_dense_gradients_accumulate() {
        let p = ModelParameters::<f64>::new(ModelKind::Caching, Hyper::caching(), vocab(), Init::Zeros).unwrap();
        let mut a = Gradients::zeros_like(&p);
        let mut b = Gradients::zeros_like(&p);
        a.row_mut(0, 3)[1] = 1.0;
        b.row_mut(0, 3)[1] = 2.0;
        b.dense_mut(1)[0] = 5.0;
        a.add_assign(&b);
        a.scale(0.5);
        assert_eq!(a.value(0, 3 * 32 + 1), 1.5);
        assert_eq!(a.value(1, 0), 2.5);
        assert_eq!(a.value(0, 0), 0.0);
    }
}
