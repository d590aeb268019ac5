use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CE_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    CrossEntropy,
    /// Count-normalized two-sided Chamfer measure.
    Chamfer2,
    /// One-sided Chamfer measure; kept for the collapse ablation.
    Chamfer1,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::CrossEntropy => "cross-entropy",
            LossKind::Chamfer2 => "chamfer2",
            LossKind::Chamfer1 => "chamfer1",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cross-entropy" | "ce" => Ok(LossKind::CrossEntropy),
            "chamfer2" => Ok(LossKind::Chamfer2),
            "chamfer1" => Ok(LossKind::Chamfer1),
            other => Err(Error::InvalidConfig(format!("unknown loss {other:?}"))),
        }
    }
}

/// Which set the prefetch outputs are matched against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefetchTarget {
    /// Every access of the evaluation window.
    Window,
    /// The labeled optgen misses inside the window.
    Misses,
}

impl FromStr for PrefetchTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "window" => Ok(PrefetchTarget::Window),
            "misses" => Ok(PrefetchTarget::Misses),
            other => Err(Error::InvalidConfig(format!("unknown prefetch target {other:?}"))),
        }
    }
}

impl fmt::Display for PrefetchTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PrefetchTarget::Window => "window",
            PrefetchTarget::Misses => "misses",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub alpha: f64,
    pub window_ratio: usize,
    pub kind: LossKind,
    pub target: PrefetchTarget,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.7,
            window_ratio: 3,
            kind: LossKind::Chamfer2,
            target: PrefetchTarget::Window,
        }
    }
}

impl LossConfig {
    pub fn cross_entropy() -> Self {
        Self {
            kind: LossKind::CrossEntropy,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.window_ratio == 0 {
            return Err(Error::InvalidConfig("window_ratio must be >= 1".into()));
        }
        Ok(())
    }

    /// Weight on the prediction-to-window term; the one-sided ablation drops
    /// the reverse term entirely.
    pub fn effective_alpha(&self) -> f64 {
        match self.kind {
            LossKind::Chamfer1 => 1.0,
            _ => self.alpha,
        }
    }
}

fn nonempty<T>(s: &[T], what: &'static str) -> Result<()> {
    if s.is_empty() {
        Err(Error::Empty(what))
    } else {
        Ok(())
    }
}

/// Index of the first nearest element of `to` for `x`.
fn nearest<T: Scalar>(x: T, to: &[T]) -> usize {
    let mut best = 0;
    let mut bd = (x - to[0]).abs();
    for (j, &y) in to.iter().enumerate().skip(1) {
        let d = (x - y).abs();
        if d < bd {
            bd = d;
            best = j;
        }
    }
    best
}

fn sign<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Sum over `s1` of the distance to the nearest element of `s2`.
pub fn chamfer_one_sided<T: Scalar>(s1: &[T], s2: &[T]) -> Result<T> {
    nonempty(s1, "chamfer source set")?;
    nonempty(s2, "chamfer target set")?;
    Ok(s1.iter().map(|&x| (x - s2[nearest(x, s2)]).abs()).sum())
}

pub fn chamfer_loss<T: Scalar>(po: &[T], w: &[T], alpha: f64) -> Result<T> {
    Ok(chamfer_loss_grad(po, w, alpha)?.0)
}

/// Loss and its subgradient with respect to `po`. Ties go to the first
/// minimizer and a zero distance contributes zero slope.
pub fn chamfer_loss_grad<T: Scalar>(po: &[T], w: &[T], alpha: f64) -> Result<(T, Vec<T>)> {
    nonempty(po, "prefetch outputs")?;
    nonempty(w, "evaluation window")?;
    let a = T::of(alpha);
    let b = T::one() - a;
    let np = T::of(po.len() as f64);
    let nw = T::of(w.len() as f64);
    let mut grad = vec![T::zero(); po.len()];
    let mut fwd = T::zero();
    for (i, &x) in po.iter().enumerate() {
        let j = nearest(x, w);
        fwd += (x - w[j]).abs();
        grad[i] += a / np * sign(x - w[j]);
    }
    let mut back = T::zero();
    if b != T::zero() {
        for &y in w {
            let i = nearest(y, po);
            back += (y - po[i]).abs();
            grad[i] += b / nw * sign(po[i] - y);
        }
    }
    Ok((a * fwd / np + b * back / nw, grad))
}

/// Nearest-neighbour assignment in both directions, used by gradient checks
/// to detect when a perturbation crosses a tie.
pub fn chamfer_assignment<T: Scalar>(po: &[T], w: &[T]) -> (Vec<usize>, Vec<usize>) {
    (
        po.iter().map(|&x| nearest(x, w)).collect(),
        w.iter().map(|&y| nearest(y, po)).collect(),
    )
}

fn clamp_p<T: Scalar>(p: T) -> T {
    let e = T::of(CE_EPSILON);
    p.max(e).min(T::one() - e)
}

/// Mean binary cross entropy with clamped probabilities.
pub fn cross_entropy_loss<T: Scalar>(probs: &[T], labels: &[bool]) -> Result<T> {
    if probs.len() != labels.len() {
        return Err(Error::LengthMismatch {
            what: "probabilities vs labels",
            left: probs.len(),
            right: labels.len(),
        });
    }
    nonempty(probs, "probabilities")?;
    let s: T = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = clamp_p(p);
            if y {
                -p.ln()
            } else {
                -(T::one() - p).ln()
            }
        })
        .sum();
    Ok(s / T::of(probs.len() as f64))
}

/// Cross entropy evaluated from logits, with the gradient per logit. Inside
/// the clamp the slope is `(p - y) / n`; where the clamp is active it is 0.
pub fn cross_entropy_logit_grad<T: Scalar>(logits: &[T], labels: &[bool]) -> Result<(T, Vec<T>)> {
    let probs: Vec<T> = logits.iter().map(|&z| T::one() / (T::one() + (-z).exp())).collect();
    let loss = cross_entropy_loss(&probs, labels)?;
    let n = T::of(probs.len() as f64);
    let e = T::of(CE_EPSILON);
    let grad = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            if p < e || p > T::one() - e {
                T::zero()
            } else {
                let y = if y { T::one() } else { T::zero() };
                (p - y) / n
            }
        })
        .collect();
    Ok((loss, grad))
}
