//! Affine latency model over hit rate, fitted by ordinary least squares.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::runtime::{BreakdownReport, BREAKDOWN_HEADER};
use crate::scalar::Scalar;

/// `latency_ms = intercept + slope * hit_rate`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerfModel<T> {
    pub intercept: T,
    pub slope: T,
    pub fit_rmse: T,
    pub n_points: usize,
}

pub fn fit<T: Scalar>(points: &[(T, T)]) -> Result<PerfModel<T>> {
    if points.len() < 2 {
        return Err(Error::DegenerateFit("at least two points are required"));
    }
    for (i, &(h, t)) in points.iter().enumerate() {
        if !h.is_finite() || !t.is_finite() {
            return Err(Error::NonFinite(format!("performance point {i}")));
        }
        if h < T::zero() || h > T::one() {
            return Err(Error::validation(None, format!("point {i}: hit rate {h} is outside [0, 1]")));
        }
        if t <= T::zero() {
            return Err(Error::validation(None, format!("point {i}: latency {t} is not positive")));
        }
    }
    let n = T::of(points.len() as f64);
    let mh = points.iter().map(|p| p.0).sum::<T>() / n;
    let mt = points.iter().map(|p| p.1).sum::<T>() / n;
    let sxx: T = points.iter().map(|p| (p.0 - mh) * (p.0 - mh)).sum();
    if sxx == T::zero() {
        return Err(Error::DegenerateFit("all hit rates are equal"));
    }
    let sxy: T = points.iter().map(|p| (p.0 - mh) * (p.1 - mt)).sum();
    let slope = sxy / sxx;
    let intercept = mt - slope * mh;
    let sse: T = points
        .iter()
        .map(|&(h, t)| {
            let r = t - (intercept + slope * h);
            r * r
        })
        .sum();
    Ok(PerfModel {
        intercept,
        slope,
        fit_rmse: (sse / n).sqrt(),
        n_points: points.len(),
    })
}

impl<T: Scalar> PerfModel<T> {
    /// Estimated latency, floored at zero.
    pub fn estimate(&self, hit_rate: T) -> Result<T> {
        if !(hit_rate >= T::zero() && hit_rate <= T::one()) {
            return Err(Error::validation(None, format!("hit rate {hit_rate} is outside [0, 1]")));
        }
        Ok((self.intercept + self.slope * hit_rate).max(T::zero()))
    }

    pub fn residuals(&self, points: &[(T, T)]) -> Vec<T> {
        points.iter().map(|&(h, t)| t - (self.intercept + self.slope * h)).collect()
    }

    pub fn summary_csv(&self) -> String {
        format!(
            "intercept_ms,slope_ms,rmse_ms,n_points\n{},{},{},{}\n",
            self.intercept, self.slope, self.fit_rmse, self.n_points
        )
    }
}

/// Per-access latency model used to synthesize observations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub hit_cost_us: f64,
    pub miss_cost_us: f64,
    /// Embedding lookups per inference batch.
    pub accesses: usize,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            hit_cost_us: 0.1,
            miss_cost_us: 10.0,
            accesses: 20_000,
        }
    }
}

impl CostModel {
    pub fn latency_ms(&self, hit_rate: f64) -> f64 {
        let per = hit_rate * self.hit_cost_us + (1.0 - hit_rate) * self.miss_cost_us;
        per * self.accesses as f64 / 1000.0
    }

    /// The exact line this model lies on.
    pub fn planted(&self) -> (f64, f64) {
        let n = self.accesses as f64 / 1000.0;
        (self.miss_cost_us * n, (self.hit_cost_us - self.miss_cost_us) * n)
    }

    /// Observations at `hit_rates` with Gaussian noise of `sigma_ms`.
    pub fn observe(&self, hit_rates: &[f64], sigma_ms: f64, seed: u64) -> Result<Vec<(f64, f64)>> {
        let noise = Normal::new(0.0, sigma_ms).map_err(|e| Error::InvalidConfig(format!("noise: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(hit_rates
            .iter()
            .map(|&h| (h, self.latency_ms(h) + noise.sample(&mut rng)))
            .collect())
    }
}

/// Policy names ordered by estimated latency, fastest first; ties keep
/// input order.
pub fn rank_by_estimate<T: Scalar>(model: &PerfModel<T>, rates: &[(String, T)]) -> Result<Vec<String>> {
    let mut est: Vec<(usize, T)> = rates
        .iter()
        .enumerate()
        .map(|(i, (_, h))| model.estimate(*h).map(|e| (i, e)))
        .collect::<Result<_>>()?;
    est.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("estimates are finite").then(a.0.cmp(&b.0)));
    Ok(est.into_iter().map(|(i, _)| rates[i].0.clone()).collect())
}

/// Breakdown CSV with an `estimated_ms` column.
pub fn breakdown_csv_with_estimates(reports: &[BreakdownReport], model: &PerfModel<f64>) -> Result<String> {
    let mut s = format!("{BREAKDOWN_HEADER},estimated_ms\n");
    for r in reports {
        let _ = writeln!(s, "{},{:.4}", r.csv_row(), model.estimate(r.hit_rate())?);
    }
    Ok(s)
}
