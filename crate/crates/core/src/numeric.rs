// SPDX-License-Identifier: Apache-2.0

//! Small numerical building blocks shared by the analysis modules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on exhaustive enumeration work (words, cells, nodes).
pub const DEFAULT_BUDGET: u64 = 10_000_000;

/// Closed real interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "interval [{lo}, {hi}] is reversed");
        Self { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    /// Interval spanned by two points in either order.
    pub fn hull(a: f64, b: f64) -> Self {
        if a <= b {
            Self { lo: a, hi: b }
        } else {
            Self { lo: b, hi: a }
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }
}

/// Work counter that turns runaway enumeration into an error.
#[derive(Debug, Clone)]
pub struct Budget {
    limit: u64,
    used: u64,
}

impl Budget {
    pub fn new(limit: u64) -> Self {
        Self { limit, used: 0 }
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn charge(&mut self, what: &'static str, units: u64) -> Result<()> {
        self.used = self.used.saturating_add(units);
        if self.used > self.limit {
            Err(Error::budget(what, self.used, self.limit))
        } else {
            Ok(())
        }
    }
}

impl Default for Budget {
    fn default() -> Self {
        Self::new(DEFAULT_BUDGET)
    }
}

/// Streaming `log(Σ exp(x_i))` with a running maximum and Kahan-compensated
/// mantissa sum. The result depends only on the order of `push` calls.
#[derive(Debug, Clone)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
    comp: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
            comp: 0.0,
        }
    }
}

impl LogSumExp {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.max {
            let scale = (self.max - x).exp();
            self.sum *= scale;
            self.comp *= scale;
            self.max = x;
        }
        let term = (x - self.max).exp();
        let y = term - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        if self.sum == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

pub fn log_sum_exp<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut acc = LogSumExp::new();
    for x in xs {
        acc.push(x);
    }
    acc.value()
}

/// Kahan-compensated sum in iteration order.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in xs {
        let y = x - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Root of a continuous function with a sign change on `[lo, hi]`, located by
/// bisection until the bracket is narrower than `tol`.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.is_nan() || f_hi.is_nan() || f_lo.signum() == f_hi.signum() {
        return Err(Error::Solver(format!(
            "no sign change on [{lo}, {hi}] (values {f_lo}, {f_hi})"
        )));
    }
    for _ in 0..400 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Zero of a strictly decreasing function on `[lo, ∞)`, widening the upper
/// end by doubling until the sign changes.
pub fn decreasing_root<F: FnMut(f64) -> f64>(mut f: F, lo: f64, initial_hi: f64, tol: f64) -> Result<f64> {
    let mut hi = initial_hi;
    let mut tries = 0;
    while f(hi) > 0.0 {
        hi = lo + 2.0 * (hi - lo);
        tries += 1;
        if tries > 200 || !hi.is_finite() {
            return Err(Error::Solver("no sign change while widening bracket".into()));
        }
    }
    bisect(f, lo, hi, tol)
}

/// `count` points from `lo` to `hi` inclusive, equally spaced.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (count - 1) as f64;
            (0..count)
                .map(|i| if i + 1 == count { hi } else { lo + step * i as f64 })
                .collect()
        }
    }
}

/// `count` logarithmically spaced points from `lo` to `hi` inclusive.
pub fn logspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > 0.0, "logspace needs positive endpoints");
    linspace(lo.ln(), hi.ln(), count)
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            if i == 0 {
                lo
            } else if i + 1 == count {
                hi
            } else {
                v.exp()
            }
        })
        .collect()
}

/// Ordinary least-squares line `y = slope·x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual.
    pub rms_residual: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "line fit needs at least two paired points, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = kahan_sum(xs.iter().copied()) / n;
    let my = kahan_sum(ys.iter().copied()) / n;
    let sxx = kahan_sum(xs.iter().map(|x| (x - mx) * (x - mx)));
    let sxy = kahan_sum(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)));
    if sxx == 0.0 {
        return Err(Error::InsufficientData("line fit with constant abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss = kahan_sum(
        xs.iter()
            .zip(ys)
            .map(|(x, y)| (y - slope * x - intercept).powi(2)),
    );
    Ok(LineFit {
        slope,
        intercept,
        rms_residual: (ss / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_matches_direct_sum() {
        let xs = [-1.0, 0.5, 2.0, -700.0, 3.0];
        let direct: f64 = xs.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(xs) - direct).abs() < 1e-14);
    }

    #[test]
    fn lse_survives_huge_spread() {
        // exp(-1000) underflows on its own; the accumulator must keep it.
        let v = log_sum_exp([-1000.0, -1000.0]);
        assert!((v - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(std::iter::empty()), f64::NEG_INFINITY);
    }

    #[test]
    fn bisect_finds_sqrt_two() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
        assert!(bisect(|x| x * x + 1.0, 0.0, 2.0, 1e-6).is_err());
    }

    #[test]
    fn decreasing_root_widens() {
        let r = decreasing_root(|t| 50.0 - t, 0.0, 1.0, 1e-12).unwrap();
        assert!((r - 50.0).abs() < 1e-10);
    }

    #[test]
    fn line_fit_exact() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 1.0).collect();
        let fit = fit_line(&xs, &ys).unwrap();
        assert!((fit.slope - 2.5).abs() < 1e-14);
        assert!((fit.intercept + 1.0).abs() < 1e-14);
        assert!(fit.rms_residual < 1e-14);
    }

    #[test]
    fn grids_hit_endpoints() {
        let g = logspace(1.0, 1e6, 7);
        assert_eq!(g[0], 1.0);
        assert_eq!(g[6], 1e6);
        assert!((g[3] - 1e3).abs() < 1e-9);
        assert_eq!(linspace(0.0, 2.0, 201)[100], 1.0);
    }

    #[test]
    fn budget_trips() {
        let mut b = Budget::new(10);
        assert!(b.charge("x", 10).is_ok());
        assert!(b.charge("x", 1).unwrap_err().is_budget());
    }
}
