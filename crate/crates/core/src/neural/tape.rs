//! Minimal reverse-mode differentiation over vector-valued nodes.
//!
//! Every node holds a dense vector; scalars are length-1 vectors. Parameter
//! reads are recorded by parameter id so that the backward pass can scatter
//! into a [`Gradients`] buffer shaped like the model.

use super::params::{Gradients, ModelParameters};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    /// A whole parameter tensor viewed as one vector.
    Param(usize),
    /// One row of a parameter matrix.
    Row { p: usize, row: usize },
    /// `W x + b` with `b` a `1 x rows` parameter.
    Affine { w: usize, b: Option<usize>, x: Var },
    /// Scalar `W[row] . x + b[bias_idx]`.
    RowDot { w: usize, row: usize, b: Option<(usize, usize)>, x: Var },
    Add(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    Softmax(Var),
    /// `sum_j w[j] * items[j]`.
    WeightedSum { w: Var, items: Vec<Var> },
}

struct Node<T> {
    value: Vec<T>,
    op: Op,
}

pub struct Tape<'p, T: Scalar> {
    params: &'p ModelParameters<T>,
    nodes: Vec<Node<T>>,
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new(params: &'p ModelParameters<T>) -> Self {
        Self {
            params,
            nodes: Vec::with_capacity(1024),
        }
    }

    pub fn params(&self) -> &'p ModelParameters<T> {
        self.params
    }

    fn push(&mut self, value: Vec<T>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn input(&mut self, value: Vec<T>) -> Var {
        self.push(value, Op::Input)
    }

    pub fn zeros(&mut self, n: usize) -> Var {
        self.input(vec![T::zero(); n])
    }

    pub fn param(&mut self, p: usize) -> Var {
        let v = self.params.tensor(p).data.clone();
        self.push(v, Op::Param(p))
    }

    pub fn row(&mut self, p: usize, row: usize) -> Var {
        let v = self.params.tensor(p).row(row).to_vec();
        self.push(v, Op::Row { p, row })
    }

    pub fn affine(&mut self, w: usize, b: Option<usize>, x: Var) -> Var {
        let t = self.params.tensor(w);
        let xs = &self.nodes[x.0].value;
        debug_assert_eq!(t.cols, xs.len(), "affine {} width", t.name);
        let mut out: Vec<T> = match b {
            Some(b) => self.params.tensor(b).data.clone(),
            None => vec![T::zero(); t.rows],
        };
        for (r, o) in out.iter_mut().enumerate() {
            let row = t.row(r);
            let mut acc = T::zero();
            for (a, c) in row.iter().zip(xs) {
                acc += *a * *c;
            }
            *o += acc;
        }
        self.push(out, Op::Affine { w, b, x })
    }

    pub fn row_dot(&mut self, w: usize, row: usize, b: Option<(usize, usize)>, x: Var) -> Var {
        let t = self.params.tensor(w);
        let xs = &self.nodes[x.0].value;
        let mut acc: T = t.row(row).iter().zip(xs).map(|(a, c)| *a * *c).sum();
        if let Some((bp, bi)) = b {
            acc += self.params.tensor(bp).data[bi];
        }
        self.push(vec![acc], Op::RowDot { w, row, b, x })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).iter().zip(self.value(b)).map(|(x, y)| *x + *y).collect();
        self.push(v, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).iter().zip(self.value(b)).map(|(x, y)| *x * *y).collect();
        self.push(v, Op::Mul(a, b))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).iter().map(|x| x.tanh()).collect();
        self.push(v, Op::Tanh(a))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let v = parts.iter().flat_map(|p| self.value(*p).iter().copied()).collect();
        self.push(v, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let v = self.value(x)[start..start + len].to_vec();
        self.push(v, Op::Slice { x, start })
    }

    pub fn softmax(&mut self, x: Var) -> Var {
        let xs = self.value(x);
        let m = xs.iter().copied().fold(T::neg_infinity(), T::max);
        let e: Vec<T> = xs.iter().map(|&v| (v - m).exp()).collect();
        let z: T = e.iter().copied().sum();
        let v = e.into_iter().map(|v| v / z).collect();
        self.push(v, Op::Softmax(x))
    }

    pub fn weighted_sum(&mut self, w: Var, items: &[Var]) -> Var {
        let n = self.value(items[0]).len();
        let mut out = vec![T::zero(); n];
        for (k, it) in items.iter().enumerate() {
            let wk = self.value(w)[k];
            for (o, v) in out.iter_mut().zip(self.value(*it)) {
                *o += wk * *v;
            }
        }
        self.push(out, Op::WeightedSum { w, items: items.to_vec() })
    }

    /// Back-propagates the seed gradients `dL/d(var)` into parameter
    /// gradients.
    pub fn backward(&self, seeds: &[(Var, Vec<T>)]) -> Result<Gradients<T>> {
        let mut grads = Gradients::zeros_like(self.params);
        let mut adj: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        for (v, g) in seeds {
            if g.len() != self.nodes[v.0].value.len() {
                return Err(Error::LengthMismatch {
                    what: "seed gradient",
                    left: g.len(),
                    right: self.nodes[v.0].value.len(),
                });
            }
            acc(&mut adj, *v, g.iter().copied(), &self.nodes);
        }

        for i in (0..self.nodes.len()).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Param(p) => {
                    for (d, gi) in grads.dense_mut(*p).iter_mut().zip(&g) {
                        *d += *gi;
                    }
                }
                Op::Row { p, row } => {
                    for (d, gi) in grads.row_mut(*p, *row).iter_mut().zip(&g) {
                        *d += *gi;
                    }
                }
                Op::Affine { w, b, x } => {
                    let t = self.params.tensor(*w);
                    let xs = &self.nodes[x.0].value;
                    {
                        let dw = grads.dense_mut(*w);
                        for (r, gr) in g.iter().enumerate() {
                            if gr.is_zero() {
                                continue;
                            }
                            let dst = &mut dw[r * t.cols..(r + 1) * t.cols];
                            for (d, xc) in dst.iter_mut().zip(xs) {
                                *d += *gr * *xc;
                            }
                        }
                    }
                    if let Some(b) = b {
                        for (d, gi) in grads.dense_mut(*b).iter_mut().zip(&g) {
                            *d += *gi;
                        }
                    }
                    let mut dx = vec![T::zero(); t.cols];
                    for (r, gr) in g.iter().enumerate() {
                        if gr.is_zero() {
                            continue;
                        }
                        for (d, wv) in dx.iter_mut().zip(t.row(r)) {
                            *d += *gr * *wv;
                        }
                    }
                    acc(&mut adj, *x, dx.into_iter(), &self.nodes);
                }
                Op::RowDot { w, row, b, x } => {
                    let g0 = g[0];
                    let t = self.params.tensor(*w);
                    let xs = &self.nodes[x.0].value;
                    for (d, xc) in grads.row_mut(*w, *row).iter_mut().zip(xs) {
                        *d += g0 * *xc;
                    }
                    if let Some((bp, bi)) = b {
                        grads.dense_mut(*bp)[*bi] += g0;
                    }
                    acc(&mut adj, *x, t.row(*row).iter().map(|&wv| g0 * wv), &self.nodes);
                }
                Op::Add(a, b) => {
                    acc(&mut adj, *a, g.iter().copied(), &self.nodes);
                    acc(&mut adj, *b, g.iter().copied(), &self.nodes);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    acc(&mut adj, *a, g.iter().zip(bv).map(|(gi, y)| *gi * *y), &self.nodes);
                    acc(&mut adj, *b, g.iter().zip(av).map(|(gi, x)| *gi * *x), &self.nodes);
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    acc(&mut adj, *a, g.iter().zip(y).map(|(gi, s)| *gi * *s * (T::one() - *s)), &self.nodes);
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    acc(&mut adj, *a, g.iter().zip(y).map(|(gi, t)| *gi * (T::one() - *t * *t)), &self.nodes);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let n = self.nodes[p.0].value.len();
                        acc(&mut adj, *p, g[off..off + n].iter().copied(), &self.nodes);
                        off += n;
                    }
                }
                Op::Slice { x, start } => {
                    let n = self.nodes[x.0].value.len();
                    let mut dx = vec![T::zero(); n];
                    dx[*start..*start + g.len()].copy_from_slice(&g);
                    acc(&mut adj, *x, dx.into_iter(), &self.nodes);
                }
                Op::Softmax(x) => {
                    let y = &node.value;
                    let gy: T = g.iter().zip(y).map(|(a, b)| *a * *b).sum();
                    acc(&mut adj, *x, g.iter().zip(y).map(|(gi, yi)| *yi * (*gi - gy)), &self.nodes);
                }
                Op::WeightedSum { w, items } => {
                    let wv = &self.nodes[w.0].value;
                    let dw: Vec<T> = items
                        .iter()
                        .map(|it| self.nodes[it.0].value.iter().zip(&g).map(|(a, b)| *a * *b).sum())
                        .collect();
                    acc(&mut adj, *w, dw.into_iter(), &self.nodes);
                    for (k, it) in items.iter().enumerate() {
                        let wk = wv[k];
                        acc(&mut adj, *it, g.iter().map(|gi| *gi * wk), &self.nodes);
                    }
                }
            }
        }
        grads.check_finite(self.params)?;
        Ok(grads)
    }
}

fn acc<T: Scalar>(adj: &mut [Option<Vec<T>>], v: Var, g: impl Iterator<Item = T>, nodes: &[Node<T>]) {
    match &mut adj[v.0] {
        Some(a) => a.iter_mut().zip(g).for_each(|(x, y)| *x += y),
        slot @ None => {
            let mut buf: Vec<T> = g.collect();
            buf.resize(nodes[v.0].value.len(), T::zero());
            *slot = Some(buf);
        }
    }
}
