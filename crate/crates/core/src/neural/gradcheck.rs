//! Central finite-difference check of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::{chamfer_assignment, LossConfig, PrefetchTarget, CE_EPSILON};
use super::model::{normalize_id, record_caching, record_prefetch};
use super::params::{ModelKind, ModelParameters};
use super::train::{sample_loss, sample_loss_grad};
use crate::error::Result;
use crate::trace::SequenceSample;

pub const FD_STEP: f64 = 1e-4;
pub const REL_TOLERANCE: f64 = 1e-3;
/// Distances closer than this to a nearest-neighbour tie are not checked.
pub const TIE_MARGIN: f64 = 1e-6;
/// Denominator floor so that vanishing gradients compare absolutely.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub skipped_ties: usize,
    pub max_rel_error: f64,
    /// `name[index]` of the worst entry.
    pub worst: String,
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Piecewise structure of the loss at `p`: nearest-neighbour assignments for
/// Chamfer losses, active clamps for cross entropy. `None` when the point is
/// within [`TIE_MARGIN`] of a kink.
fn structure(p: &ModelParameters<f64>, s: &SequenceSample, lc: &LossConfig) -> Result<Option<Vec<usize>>> {
    match p.kind {
        ModelKind::Caching => {
            let f = record_caching(p, &s.input)?;
            let mut sig = Vec::new();
            for &l in &f.logits {
                let z = f.tape.value(l)[0];
                let q = 1.0 / (1.0 + (-z).exp());
                if (q - CE_EPSILON).abs() < TIE_MARGIN || (q - 1.0 + CE_EPSILON).abs() < TIE_MARGIN {
                    return Ok(None);
                }
                sig.push(usize::from(!(CE_EPSILON..=1.0 - CE_EPSILON).contains(&q)));
            }
            Ok(Some(sig))
        }
        ModelKind::Prefetch => {
            let po = record_prefetch(p, &s.input)?.values();
            let ids = match lc.target {
                PrefetchTarget::Window => s.window.as_ref(),
                PrefetchTarget::Misses => s.prefetch_targets.as_ref(),
            };
            let w: Vec<f64> = ids.map_or(Vec::new(), |v| v.iter().map(|ix| normalize_id(ix.global_id, &p.vocabulary)).collect());
            if near_tie(&po, &w) || near_tie(&w, &po) {
                return Ok(None);
            }
            let (a, b) = chamfer_assignment(&po, &w);
            Ok(Some(a.into_iter().chain(b).collect()))
        }
    }
}

fn near_tie(from: &[f64], to: &[f64]) -> bool {
    // repeated values are one point, not a tie
    let mut to = to.to_vec();
    to.sort_by(|a, b| a.total_cmp(b));
    to.dedup();
    from.iter().any(|&x| {
        let mut d: Vec<f64> = to.iter().map(|&y| (x - y).abs()).collect();
        d.sort_by(|a, b| a.total_cmp(b));
        d[0] < TIE_MARGIN || (d.len() > 1 && d[1] - d[0] < TIE_MARGIN)
    })
}

/// Checks the listed `(parameter id, flat index)` entries.
pub fn check_entries(
    p: &ModelParameters<f64>,
    s: &SequenceSample,
    lc: &LossConfig,
    entries: &[(usize, usize)],
) -> Result<GradCheckReport> {
    let (_, g) = sample_loss_grad(p, s, lc)?;
    let base = structure(p, s, lc)?;
    let mut q = p.clone();
    let mut rep = GradCheckReport {
        checked: 0,
        skipped_ties: 0,
        max_rel_error: 0.0,
        worst: String::new(),
    };
    for &(id, k) in entries {
        let x = p.tensor(id).data[k];
        q.tensors_mut()[id].data[k] = x + FD_STEP;
        let (up, s_up) = (sample_loss(&q, s, lc)?, structure(&q, s, lc)?);
        q.tensors_mut()[id].data[k] = x - FD_STEP;
        let (down, s_down) = (sample_loss(&q, s, lc)?, structure(&q, s, lc)?);
        q.tensors_mut()[id].data[k] = x;
        if base.is_none() || s_up != base || s_down != base {
            rep.skipped_ties += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * FD_STEP);
        let e = relative_error(g.value(id, k), numeric);
        rep.checked += 1;
        if e > rep.max_rel_error || rep.worst.is_empty() {
            rep.max_rel_error = rep.max_rel_error.max(e);
            rep.worst = format!("{}[{k}]", p.tensor(id).name);
        }
    }
    Ok(rep)
}

/// Draws `count` entries, one parameter array at a time, always picking
/// embedding rows the sample actually reads.
pub fn random_entries(p: &ModelParameters<f64>, s: &SequenceSample, count: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = p.tensors().len();
    (0..count)
        .map(|i| {
            let id = if i < n { i } else { rng.random_range(0..n) };
            let t = p.tensor(id);
            let k = match t.name.as_str() {
                "embed.id" => {
                    let ix = s.input[rng.random_range(0..s.input.len())];
                    ix.global_id as usize * t.cols + rng.random_range(0..t.cols)
                }
                "embed.table" => {
                    let ix = s.input[rng.random_range(0..s.input.len())];
                    ix.table_id as usize * t.cols + rng.random_range(0..t.cols)
                }
                _ => rng.random_range(0..t.data.len()),
            };
            (id, k)
        })
        .collect()
}

pub fn check_random_entries(
    p: &ModelParameters<f64>,
    s: &SequenceSample,
    lc: &LossConfig,
    count: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    check_entries(p, s, lc, &random_entries(p, s, count, seed))
}
