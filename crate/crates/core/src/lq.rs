// SPDX-License-Identifier: Apache-2.0

//! Coarse L^q spectra on dyadic grids, their fixed points, and the implicit
//! exponent `τ(q)` of self-similar measures.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{dyadic_masses, dyadic_masses_transfer, DyadicMasses, GibbsModel, MassMethod};
use crate::numeric::{bisect, fit_line, linspace, LogSumExp};

/// Bisection tolerance for fixed points and sign changes.
const ROOT_TOL: f64 = 1e-12;

/// Where the dyadic masses come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MassSource {
    /// Cylinder refinement with total ambiguity at most `tol` per level.
    Cylinder { tol: f64 },
    /// Transfer-operator fixed point computed `extra_levels` finer.
    Transfer { extra_levels: usize },
}

impl MassSource {
    pub const DEFAULT_TOL: f64 = 1e-9;
    pub const DEFAULT_EXTRA_LEVELS: usize = 4;

    /// Cylinder refinement when the open set condition holds or the system
    /// is nonlinear; the transfer operator for overlapping affine systems.
    pub fn auto(model: &GibbsModel) -> Self {
        let system = model.system();
        if system.osc_certified() || !system.is_affine() || model.probabilities().is_none() {
            MassSource::Cylinder {
                tol: Self::DEFAULT_TOL,
            }
        } else {
            MassSource::Transfer {
                extra_levels: Self::DEFAULT_EXTRA_LEVELS,
            }
        }
    }
}

/// Dyadic masses for every level in `levels`, indexed like `levels`.
pub fn dyadic_levels(
    model: &GibbsModel,
    levels: &[usize],
    source: MassSource,
    budget: u64,
) -> Result<Vec<DyadicMasses>> {
    let top = levels.iter().copied().max().unwrap_or(0);
    match source {
        MassSource::Cylinder { tol } => levels
            .iter()
            .map(|&n| dyadic_masses(model, n, tol, budget))
            .collect(),
        MassSource::Transfer { extra_levels } => {
            let all = dyadic_masses_transfer(model, top, extra_levels, budget)?;
            Ok(levels.iter().map(|&n| all[n].clone()).collect())
        }
    }
}

/// Moment sums `Σ_C ρ(C)^q` over the dyadic cells of one level.
#[derive(Debug, Clone)]
pub struct LevelSums {
    level: usize,
    log_masses: Vec<f64>,
    /// Logs of `mass + ambiguity` over cells where that is positive.
    log_upper: Vec<f64>,
    certified: bool,
}

impl LevelSums {
    pub fn new(masses: &DyadicMasses) -> Self {
        let log_masses = masses.positive().map(f64::ln).collect();
        let log_upper = masses
            .masses
            .iter()
            .zip(&masses.ambiguity)
            .map(|(m, a)| m + a)
            .filter(|v| *v > 0.0)
            .map(f64::ln)
            .collect();
        Self {
            level: masses.level,
            log_masses,
            log_upper,
            certified: masses.method == MassMethod::Cylinder,
        }
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// Number of cells with positive mass.
    pub fn support_count(&self) -> usize {
        self.log_masses.len()
    }

    /// `log Σ_C ρ(C)^q`.
    pub fn log_moment(&self, q: f64) -> f64 {
        log_moment(&self.log_masses, q)
    }

    /// `β_n(q) = log Σ ρ(C)^q / log 2^n`.
    pub fn beta(&self, q: f64) -> f64 {
        self.log_moment(q) / (self.level as f64 * std::f64::consts::LN_2)
    }

    /// Width of the range of `β_n(q)` over all mass assignments compatible
    /// with the ambiguity; `None` for uncertified masses.
    pub fn beta_tolerance(&self, q: f64) -> Option<f64> {
        if !self.certified {
            return None;
        }
        let upper = log_moment(&self.log_upper, q);
        Some((upper - self.log_moment(q)).abs() / (self.level as f64 * std::f64::consts::LN_2))
    }
}

fn log_moment(log_masses: &[f64], q: f64) -> f64 {
    let mut acc = LogSumExp::new();
    for lm in log_masses {
        acc.push(q * lm);
    }
    acc.value()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSample {
    pub q: f64,
    pub beta: f64,
    /// `None` when the masses carry no rigorous bound.
    pub tol: Option<f64>,
}

/// `q ↦ β_n(q)` sampled on a grid, with its fixed point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaCurve {
    pub level: usize,
    pub samples: Vec<BetaSample>,
    pub fixed_point: f64,
    /// `|β_n(q_n) - q_n|` at the returned fixed point.
    pub fixed_point_residual: f64,
    pub method: MassMethod,
}

impl BetaCurve {
    /// All first differences are at most `tol`.
    pub fn is_non_increasing(&self, tol: f64) -> bool {
        self.samples.windows(2).all(|w| w[1].beta - w[0].beta <= tol)
    }

    /// All second differences (scaled to the grid) are at least `-tol`.
    pub fn is_convex(&self, tol: f64) -> bool {
        self.samples.windows(3).all(|w| {
            let s1 = (w[1].beta - w[0].beta) / (w[1].q - w[0].q);
            let s2 = (w[2].beta - w[1].beta) / (w[2].q - w[1].q);
            s2 - s1 >= -tol
        })
    }

    /// Linear interpolation on the sampled grid.
    pub fn interpolate(&self, q: f64) -> Option<f64> {
        let i = self.samples.windows(2).position(|w| w[0].q <= q && q <= w[1].q)?;
        let (a, b) = (self.samples[i], self.samples[i + 1]);
        let t = if b.q > a.q { (q - a.q) / (b.q - a.q) } else { 0.0 };
        Some(a.beta + t * (b.beta - a.beta))
    }
}

/// Default q-grid: `[0, 2]` in steps of 0.01.
pub fn default_q_grid() -> Vec<f64> {
    linspace(0.0, 2.0, 201)
}

fn validate_q_grid(q_grid: &[f64]) -> Result<()> {
    if q_grid.is_empty() {
        return Err(Error::InvalidInput("empty q-grid".into()));
    }
    if let Some(q) = q_grid.iter().find(|q| !(0.0..=4.0).contains(*q)) {
        return Err(Error::InvalidInput(format!("q = {q} is outside [0, 4]")));
    }
    if q_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("q-grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Fixed point of `q ↦ β(q)` on `(0,1)` given an evaluator.
fn beta_fixed_point(sums: &LevelSums) -> Result<(f64, f64)> {
    let b0 = sums.beta(0.0);
    if !(b0 > 0.0) {
        return Err(Error::NoFixedPoint(format!(
            "β_{}(0) = {b0}: the measure charges a single dyadic cell",
            sums.level
        )));
    }
    let q = bisect(|q| sums.beta(q) - q, 0.0, 1.0, ROOT_TOL)?;
    Ok((q, (sums.beta(q) - q).abs()))
}

/// Curve from already computed level sums.
pub fn beta_curve(sums: &LevelSums, q_grid: &[f64], method: MassMethod) -> Result<BetaCurve> {
    validate_q_grid(q_grid)?;
    if sums.level == 0 {
        return Err(Error::InvalidInput("β_n needs n ≥ 1".into()));
    }
    let samples = q_grid
        .par_iter()
        .map(|&q| BetaSample {
            q,
            beta: sums.beta(q),
            tol: sums.beta_tolerance(q),
        })
        .collect();
    let (fixed_point, fixed_point_residual) = beta_fixed_point(sums)?;
    Ok(BetaCurve {
        level: sums.level,
        samples,
        fixed_point,
        fixed_point_residual,
        method,
    })
}

/// `β_n` on a q-grid.
pub fn beta_level(
    model: &GibbsModel,
    n: usize,
    q_grid: &[f64],
    source: MassSource,
    budget: u64,
) -> Result<BetaCurve> {
    if n == 0 {
        return Err(Error::InvalidInput("β_n needs n ≥ 1".into()));
    }
    let masses = dyadic_levels(model, &[n], source, budget)?.remove(0);
    beta_curve(&LevelSums::new(&masses), q_grid, masses.method)
}

/// The fixed point `q_n` of a sampled curve, by bisection on the linear
/// interpolant.
pub fn fixed_point_qn(curve: &BetaCurve) -> Result<f64> {
    let first = curve.samples.first().ok_or_else(|| Error::InsufficientData("empty curve".into()))?;
    if !(first.beta > 0.0) || first.q != 0.0 {
        return Err(Error::NoFixedPoint(format!(
            "curve must start at q = 0 with positive value, got β({}) = {}",
            first.q, first.beta
        )));
    }
    let last = curve.samples.last().unwrap();
    if last.beta - last.q > 0.0 {
        return Err(Error::NoFixedPoint("no sign change of β(q) - q on the grid".into()));
    }
    bisect(
        |q| curve.interpolate(q).unwrap_or(f64::NAN) - q,
        0.0,
        last.q,
        ROOT_TOL,
    )
}

/// Aitken's Δ² extrapolation of the last three terms.
pub fn aitken(seq: &[f64]) -> Option<f64> {
    let [a, b, c] = seq.get(seq.len().checked_sub(3)?..)? else {
        return None;
    };
    let d2 = c - 2.0 * b + a;
    if d2.abs() < 1e-14 {
        return Some(*c);
    }
    let v = c - (c - b) * (c - b) / d2;
    v.is_finite().then_some(v)
}

/// Finite-level estimates of `q_ρ = lim q_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QRhoEstimate {
    /// `(n, q_n)` for every level.
    pub sequence: Vec<(usize, f64)>,
    /// `q_{n_max}`.
    pub raw: f64,
    pub aitken: Option<f64>,
    /// Fixed point of the slope of `log Σ ρ(C)^q` against `n log 2`,
    /// fitted over all levels; removes the `O(1/n)` prefactor bias.
    pub regression: f64,
    /// The value used downstream (the regression estimate).
    pub estimate: f64,
    /// Largest spread among the last three `q_n`, or between the
    /// regression and the Aitken value, whichever is larger.
    pub uncertainty: f64,
    pub method: MassMethod,
}

/// Least-squares slope of `log Σ ρ(C)^q` against `n log 2` over levels.
fn regression_beta(sums: &[LevelSums], q: f64) -> f64 {
    let xs: Vec<f64> = sums
        .iter()
        .map(|s| s.level as f64 * std::f64::consts::LN_2)
        .collect();
    let ys: Vec<f64> = sums.iter().map(|s| s.log_moment(q)).collect();
    fit_line(&xs, &ys).map(|f| f.slope).unwrap_or(f64::NAN)
}

pub fn estimate_q_rho(
    model: &GibbsModel,
    n_min: usize,
    n_max: usize,
    source: MassSource,
    budget: u64,
) -> Result<QRhoEstimate> {
    let levels = check_levels(n_min, n_max)?;
    let masses = dyadic_levels(model, &levels, source, budget)?;
    let method = masses[0].method;
    let sums: Vec<LevelSums> = masses.iter().map(LevelSums::new).collect();
    q_rho_from_sums(&sums, method)
}

fn check_levels(n_min: usize, n_max: usize) -> Result<Vec<usize>> {
    if n_min == 0 || n_min + 2 > n_max {
        return Err(Error::InvalidInput(format!(
            "need 1 ≤ n_min and at least three levels, got {n_min}..={n_max}"
        )));
    }
    Ok((n_min..=n_max).collect())
}

pub fn q_rho_from_sums(sums: &[LevelSums], method: MassMethod) -> Result<QRhoEstimate> {
    let sequence = sums
        .par_iter()
        .map(|s| beta_fixed_point(s).map(|(q, _)| (s.level, q)))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = sequence.iter().map(|(_, q)| *q).collect();
    let raw = *values.last().unwrap();
    let aitken = aitken(&values);
    let regression = bisect(|q| regression_beta(sums, q) - q, 0.0, 1.0, ROOT_TOL)?;
    let tail = &values[values.len() - 3..];
    let spread = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - tail.iter().copied().fold(f64::INFINITY, f64::min);
    let uncertainty = spread.max(aitken.map_or(0.0, |a| (a - regression).abs()));
    Ok(QRhoEstimate {
        sequence,
        raw,
        aitken,
        regression,
        estimate: regression,
        uncertainty,
        method,
    })
}

/// Sign change of `q ↦ n⁻¹ log Σ (ρ(C) 2^{-n})^q`, located on the grid and
/// refined by bisection.
pub fn q_rho_via_partition_sum(
    model: &GibbsModel,
    n: usize,
    q_grid: &[f64],
    source: MassSource,
    budget: u64,
) -> Result<f64> {
    validate_q_grid(q_grid)?;
    if n == 0 {
        return Err(Error::InvalidInput("partition sums need n ≥ 1".into()));
    }
    let masses = dyadic_levels(model, &[n], source, budget)?.remove(0);
    let sums = LevelSums::new(&masses);
    let step = n as f64 * std::f64::consts::LN_2;
    let g = |q: f64| (sums.log_moment(q) - q * step) / n as f64;
    let values: Vec<f64> = q_grid.iter().map(|&q| g(q)).collect();
    let i = values
        .windows(2)
        .position(|w| w[0] > 0.0 && w[1] <= 0.0)
        .ok_or_else(|| Error::NoFixedPoint("partition sum keeps its sign on the q-grid".into()))?;
    if values[i + 1] == 0.0 {
        return Ok(q_grid[i + 1]);
    }
    bisect(g, q_grid[i], q_grid[i + 1], ROOT_TOL)
}

/// Sampled `β̂(α) = inf_q β(q) + αq` and `sup_α β̂(α)/(1+α)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegendreTransform {
    pub alphas: Vec<f64>,
    pub values: Vec<f64>,
    pub sup_ratio: f64,
    pub argmax_alpha: f64,
}

pub fn legendre_transform(curve: &BetaCurve, alpha_grid: &[f64]) -> Result<LegendreTransform> {
    if curve.samples.is_empty() || alpha_grid.is_empty() {
        return Err(Error::InsufficientData("empty curve or α-grid".into()));
    }
    if let Some(a) = alpha_grid.iter().find(|a| !(**a > -1.0)) {
        return Err(Error::InvalidInput(format!("α = {a} must exceed -1")));
    }
    let values: Vec<f64> = alpha_grid
        .iter()
        .map(|&a| {
            curve
                .samples
                .iter()
                .map(|s| s.beta + a * s.q)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let (k, sup_ratio) = values
        .iter()
        .zip(alpha_grid)
        .map(|(v, a)| v / (1.0 + a))
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, r)| if r > best.1 { (i, r) } else { best });
    Ok(LegendreTransform {
        alphas: alpha_grid.to_vec(),
        values,
        sup_ratio,
        argmax_alpha: alpha_grid[k],
    })
}

/// Default α-grid: `[0, 4]` in steps of 0.001.
pub fn default_alpha_grid() -> Vec<f64> {
    linspace(0.0, 4.0, 4001)
}

/// `τ(q)` defined by `Σ p_i^q |r_i|^{τ(q)} = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauFunction {
    log_p: Vec<f64>,
    log_r: Vec<f64>,
}

/// Residual tolerance for `τ`.
pub const TAU_RESIDUAL: f64 = 1e-12;

impl TauFunction {
    pub fn new(probabilities: &[f64], ratios: &[f64]) -> Result<Self> {
        crate::gibbs::validate_probabilities(probabilities)?;
        if probabilities.len() != ratios.len() {
            return Err(Error::InvalidInput(format!(
                "{} probabilities but {} ratios",
                probabilities.len(),
                ratios.len()
            )));
        }
        if let Some(r) = ratios.iter().find(|r| !(r.abs() > 0.0 && r.abs() < 1.0)) {
            return Err(Error::InvalidInput(format!("ratio {r} must satisfy 0 < |r| < 1")));
        }
        Ok(Self {
            log_p: probabilities.iter().map(|p| p.ln()).collect(),
            log_r: ratios.iter().map(|r| r.abs().ln()).collect(),
        })
    }

    /// From an affine model with a Bernoulli potential.
    pub fn from_model(model: &GibbsModel) -> Result<Self> {
        let params = model
            .system()
            .affine_params()
            .ok_or_else(|| Error::Unsupported("τ needs an affine system".into()))?;
        let p = model
            .probabilities()
            .ok_or_else(|| Error::Unsupported("τ needs a Bernoulli potential".into()))?;
        let r: Vec<f64> = params.iter().map(|(r, _)| *r).collect();
        Self::new(p, &r)
    }

    /// `log Σ p_i^q |r_i|^t`.
    fn log_sum(&self, q: f64, t: f64) -> f64 {
        let mut acc = LogSumExp::new();
        for (lp, lr) in self.log_p.iter().zip(&self.log_r) {
            acc.push(q * lp + t * lr);
        }
        acc.value()
    }

    /// `Σ p_i^q |r_i|^{τ} - 1`.
    pub fn residual(&self, q: f64, tau: f64) -> f64 {
        self.log_sum(q, tau).exp_m1()
    }

    /// `(τ(q), τ'(q))`.
    pub fn solve(&self, q: f64) -> Result<(f64, f64)> {
        // h(t) = log Σ p^q r^t is convex and strictly decreasing in t.
        let h = |t: f64| self.log_sum(q, t);
        let mut lo = -1.0;
        let mut hi = 1.0;
        let mut widen = 0;
        while h(lo) < 0.0 || h(hi) > 0.0 {
            lo *= 2.0;
            hi *= 2.0;
            widen += 1;
            if widen > 60 {
                return Err(Error::Solver(format!("cannot bracket τ({q})")));
            }
        }
        let mut t = 0.5 * (lo + hi);
        for _ in 0..200 {
            let (value, slope) = self.value_and_slope(q, t);
            if value > 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let newton = t - value / slope;
            let next = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            let done = (next - t).abs() <= 1e-15 * (1.0 + t.abs()) || hi - lo <= 1e-15;
            t = next;
            if done {
                break;
            }
        }
        if self.residual(q, t).abs() > TAU_RESIDUAL {
            return Err(Error::Solver(format!(
                "τ({q}) did not converge (residual {})",
                self.residual(q, t)
            )));
        }
        Ok((t, self.derivative_at(q, t)))
    }

    /// `h(t) = log Σ p^q r^t` and `h'(t)`.
    fn value_and_slope(&self, q: f64, t: f64) -> (f64, f64) {
        let value = self.log_sum(q, t);
        let slope: f64 = self
            .log_p
            .iter()
            .zip(&self.log_r)
            .map(|(lp, lr)| (q * lp + t * lr - value).exp() * lr)
            .sum();
        (value, slope)
    }

    fn derivative_at(&self, q: f64, tau: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (lp, lr) in self.log_p.iter().zip(&self.log_r) {
            let w = (q * lp + tau * lr).exp();
            num += w * lp;
            den += w * lr;
        }
        -num / den
    }

    pub fn tau(&self, q: f64) -> Result<f64> {
        self.solve(q).map(|(t, _)| t)
    }

    /// `dim_S(ρ) = -τ'(1)`, the entropy-to-Lyapunov ratio.
    pub fn similarity_dimension_of_measure(&self) -> f64 {
        let (num, den) = self
            .log_p
            .iter()
            .zip(&self.log_r)
            .fold((0.0, 0.0), |(n, d), (lp, lr)| (n + lp.exp() * lp, d + lp.exp() * lr));
        num / den
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapCase {
    /// `ζ ≥ q̃`: the spectral dimension is the fixed point of `τ`.
    FixedPoint,
    /// `ζ < q̃`: the spectral dimension comes from the tangent at `q̃`.
    Tangent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub zeta: f64,
    pub q_tilde: f64,
    pub tau_at_q_tilde: f64,
    pub s_rho: f64,
    pub case: OverlapCase,
    pub dim_s: f64,
}

/// Spectral dimension from `τ` for dimensionally regular self-similar
/// measures. The caller must assert regularity; it is not checked.
pub fn spectral_dimension_overlap(tau: &TauFunction, dimensionally_regular: bool) -> Result<OverlapReport> {
    if !dimensionally_regular {
        return Err(Error::Unsupported(
            "the overlap formula holds only for dimensionally regular measures; \
             assert dimensional regularity explicitly to use it"
                .into(),
        ));
    }
    let zeta = bisect(|q| tau.tau(q).unwrap_or(f64::NAN) - q, 0.0, 1.0, ROOT_TOL)?;
    let tangent = |q: f64| match tau.solve(q) {
        Ok((t, dt)) => -dt * q + t - 1.0,
        Err(_) => f64::NAN,
    };
    let dim_s = tau.similarity_dimension_of_measure();
    let q_tilde = if tangent(0.0) <= 0.0 {
        0.0
    } else if tangent(1.0) > 0.0 {
        1.0
    } else {
        bisect(tangent, 0.0, 1.0, ROOT_TOL)?
    };
    let tau_at_q_tilde = tau.tau(q_tilde)?;
    let (s_rho, case) = if zeta >= q_tilde {
        (zeta, OverlapCase::FixedPoint)
    } else {
        (
            q_tilde / (1.0 - tau_at_q_tilde + q_tilde),
            OverlapCase::Tangent,
        )
    };
    Ok(OverlapReport {
        zeta,
        q_tilde,
        tau_at_q_tilde,
        s_rho,
        case,
        dim_s,
    })
}

/// Root `s` of `Σ (p_i |r_i|)^s = 1`.
pub fn self_similar_spectral_dimension(probabilities: &[f64], ratios: &[f64]) -> Result<f64> {
    let tau = TauFunction::new(probabilities, ratios)?;
    let f = |s: f64| {
        let mut acc = LogSumExp::new();
        for (lp, lr) in tau.log_p.iter().zip(&tau.log_r) {
            acc.push(s * (lp + lr));
        }
        acc.value()
    };
    bisect(f, 0.0, 1.0, 1e-15)
}

/// `β_n(0)` across levels; the box-counting dimension of the support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinkowskiEstimate {
    pub sequence: Vec<(usize, f64)>,
    pub raw: f64,
    pub aitken: Option<f64>,
    pub regression: f64,
}

pub fn minkowski_dimension(
    model: &GibbsModel,
    n_min: usize,
    n_max: usize,
    source: MassSource,
    budget: u64,
) -> Result<MinkowskiEstimate> {
    let levels = check_levels(n_min, n_max)?;
    let masses = dyadic_levels(model, &levels, source, budget)?;
    let sums: Vec<LevelSums> = masses.iter().map(LevelSums::new).collect();
    Ok(minkowski_from_sums(&sums))
}

pub fn minkowski_from_sums(sums: &[LevelSums]) -> MinkowskiEstimate {
    let sequence: Vec<(usize, f64)> = sums
        .iter()
        .map(|s| (s.level, (s.support_count() as f64).log2() / s.level as f64))
        .collect();
    let values: Vec<f64> = sequence.iter().map(|(_, v)| *v).collect();
    MinkowskiEstimate {
        raw: *values.last().unwrap(),
        aitken: aitken(&values),
        regression: regression_beta(sums, 0.0),
        sequence,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifs::presets;
    use crate::numeric::DEFAULT_BUDGET;
    use proptest::prelude::*;

    const LOG2_LOG6: f64 = 0.386_852_807_234_541_6;
    const LOG2_LOG3: f64 = 0.630_929_753_571_457_4;

    fn lebesgue() -> GibbsModel {
        GibbsModel::bernoulli(presets::halves(), &[0.5, 0.5]).unwrap()
    }

    fn cantor() -> GibbsModel {
        GibbsModel::bernoulli(presets::cantor(), &[0.5, 0.5]).unwrap()
    }

    fn cyl() -> MassSource {
        MassSource::Cylinder { tol: 1e-9 }
    }

    #[test]
    fn lebesgue_beta_is_linear() {
        for n in [1, 5, 10] {
            let c = beta_level(&lebesgue(), n, &default_q_grid(), cyl(), DEFAULT_BUDGET).unwrap();
            for s in &c.samples {
                assert!((s.beta - (1.0 - s.q)).abs() < 1e-12, "n={n} q={}", s.q);
                assert_eq!(s.tol, Some(0.0));
            }
            assert!((c.fixed_point - 0.5).abs() < 1e-11);
            assert!((fixed_point_qn(&c).unwrap() - 0.5).abs() < 1e-11);
        }
    }

    #[test]
    fn beta_at_one_vanishes() {
        let m = GibbsModel::bernoulli(presets::cantor(), &[0.3, 0.7]).unwrap();
        let c = beta_level(&m, 8, &[0.0, 0.5, 1.0, 1.5], cyl(), DEFAULT_BUDGET).unwrap();
        let s = c.samples[2];
        assert!(s.beta.abs() <= s.tol.unwrap() + 1e-12);
        assert!(c.is_non_increasing(1e-12) && c.is_convex(1e-9));
        assert!(c.fixed_point_residual <= 1e-10);
    }

    #[test]
    fn cantor_support_count() {
        let c = beta_level(&cantor(), 12, &[0.0], cyl(), DEFAULT_BUDGET).unwrap();
        let masses = dyadic_masses(&cantor(), 12, 1e-9, DEFAULT_BUDGET).unwrap();
        let count = masses.positive().count() as f64;
        assert!((c.samples[0].beta - count.log2() / 12.0).abs() < 1e-12);
    }

    #[test]
    fn cantor_estimates() {
        let est = estimate_q_rho(&cantor(), 4, 14, cyl(), DEFAULT_BUDGET).unwrap();
        assert!((est.estimate - LOG2_LOG6).abs() < 0.01, "{est:?}");
        let mink = minkowski_dimension(&cantor(), 4, 14, cyl(), DEFAULT_BUDGET).unwrap();
        assert!((mink.regression - LOG2_LOG3).abs() < 0.01, "{mink:?}");
    }

    #[test]
    fn partition_sum_matches_fixed_point() {
        let m = GibbsModel::bernoulli(presets::cantor(), &[0.4, 0.6]).unwrap();
        let n = 10;
        let curve = beta_level(&m, n, &default_q_grid(), cyl(), DEFAULT_BUDGET).unwrap();
        let ps = q_rho_via_partition_sum(&m, n, &default_q_grid(), cyl(), DEFAULT_BUDGET).unwrap();
        assert!((ps - curve.fixed_point).abs() < 1e-9);
        let lg = legendre_transform(&curve, &default_alpha_grid()).unwrap();
        assert!((lg.sup_ratio - curve.fixed_point).abs() < 5e-3, "{} vs {}", lg.sup_ratio, curve.fixed_point);
        assert!((q_rho_via_partition_sum(&lebesgue(), 6, &default_q_grid(), cyl(), DEFAULT_BUDGET).unwrap() - 0.5).abs() < 1e-11);
    }

    fn synthetic(f: impl Fn(f64) -> f64, q_max: f64) -> BetaCurve {
        let samples = linspace(0.0, q_max, 201)
            .into_iter()
            .map(|q| BetaSample { q, beta: f(q), tol: Some(0.0) })
            .collect();
        BetaCurve {
            level: 1,
            samples,
            fixed_point: f64::NAN,
            fixed_point_residual: f64::NAN,
            method: MassMethod::Cylinder,
        }
    }

    #[test]
    fn legendre_linear_cases() {
        let lin = synthetic(|q| 1.0 - q, 1.0);
        let lg = legendre_transform(&lin, &default_alpha_grid()).unwrap();
        let at_one = lg.alphas.iter().position(|a| *a == 1.0).unwrap();
        assert!((lg.values[at_one] - 1.0).abs() < 1e-12);
        let half = lg.alphas.iter().position(|a| (*a - 0.5).abs() < 1e-12).unwrap();
        assert!((lg.values[half] - 0.5).abs() < 1e-12);
        assert!((lg.sup_ratio - 0.5).abs() < 1e-12 && lg.argmax_alpha == 1.0);

        let cantor = synthetic(|q| (1.0 - q) * LOG2_LOG3, 2.0);
        let lg = legendre_transform(&cantor, &default_alpha_grid()).unwrap();
        assert!((lg.sup_ratio - LOG2_LOG6).abs() < 1e-3);
        let peak = lg.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let top = lg.values.iter().position(|v| *v == peak).unwrap();
        assert!(lg.values[..=top].windows(2).all(|w| w[1] >= w[0] - 1e-15));
        assert_eq!(fixed_point_qn(&cantor).map(|q| (q - LOG2_LOG6).abs() < 1e-9), Ok(true));
    }

    #[test]
    fn fixed_point_requires_positive_start() {
        let flat = synthetic(|q| -q, 1.0);
        assert!(matches!(fixed_point_qn(&flat), Err(Error::NoFixedPoint(_))));
    }

    #[test]
    fn aitken_on_geometric_sequence() {
        let seq: Vec<f64> = (0..5).map(|k| 1.0 + 0.5f64.powi(k)).collect();
        assert!((aitken(&seq).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(aitken(&[1.0, 2.0]), None);
    }

    #[test]
    fn tau_examples() {
        let t = TauFunction::new(&[0.5, 0.5], &[1.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert!(t.tau(1.0).unwrap().abs() < 1e-12);
        for q in [0.0, 0.3, 1.7, 3.0] {
            let (v, d) = t.solve(q).unwrap();
            assert!((v - (1.0 - q) * LOG2_LOG3).abs() < 1e-12);
            assert!((d + LOG2_LOG3).abs() < 1e-12);
        }
        let fig = TauFunction::new(&[0.001, 0.001, 0.05, 0.948], &[0.5; 4]).unwrap();
        assert!((fig.tau(0.0).unwrap() - 2.0).abs() < 1e-12);
        let q: f64 = 0.7;
        let direct = (2.0 * 0.001f64.powf(q) + 0.05f64.powf(q) + 0.948f64.powf(q)).log2();
        assert!((fig.tau(q).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn tau_derivative_matches_difference_quotient() {
        let t = TauFunction::new(&[0.2, 0.5, 0.3], &[0.3, 0.2, 0.4]).unwrap();
        for q in [0.1, 0.9, 2.5] {
            let h = 1e-6;
            let fd = (t.tau(q + h).unwrap() - t.tau(q - h).unwrap()) / (2.0 * h);
            assert!((fd - t.solve(q).unwrap().1).abs() < 1e-7);
        }
    }

    #[test]
    fn overlap_formula_cases() {
        let cantor = TauFunction::new(&[0.5, 0.5], &[1.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert!(spectral_dimension_overlap(&cantor, false).is_err());
        let r = spectral_dimension_overlap(&cantor, true).unwrap();
        assert_eq!(r.q_tilde, 0.0);
        assert_eq!(r.case, OverlapCase::FixedPoint);
        assert!((r.s_rho - LOG2_LOG6).abs() < 1e-10);

        // dim_S ≥ 1 forces s = 1/2
        let lebesgue = TauFunction::new(&[0.5, 0.5], &[0.5, 0.5]).unwrap();
        let r = spectral_dimension_overlap(&lebesgue, true).unwrap();
        assert!((r.s_rho - 0.5).abs() < 1e-10);
        let heavy = TauFunction::new(&[0.3, 0.3, 0.4], &[0.5, 0.5, 0.5]).unwrap();
        assert!(heavy.similarity_dimension_of_measure() > 1.0);
        let r = spectral_dimension_overlap(&heavy, true).unwrap();
        assert_eq!(r.q_tilde, 1.0);
        assert!((r.s_rho - 0.5).abs() < 1e-12);
    }

    #[test]
    fn closed_form_root() {
        let s = self_similar_spectral_dimension(&[1.0 / 3.0, 2.0 / 3.0], &[1.0 / 3.0, 1.0 / 3.0]).unwrap();
        let direct = bisect(|z| (1.0f64 / 9.0).powf(z) + (2.0f64 / 9.0).powf(z) - 1.0, 0.0, 1.0, 1e-15).unwrap();
        assert!((s - direct).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn tau_is_convex_decreasing_with_small_residuals(
            raw in prop::collection::vec(0.05f64..1.0, 2..5),
            ratios in prop::collection::vec(0.05f64..0.6, 5),
        ) {
            let total: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let r = &ratios[..p.len()];
            let t = TauFunction::new(&p, r).unwrap();
            let grid = linspace(0.0, 3.0, 31);
            let vals: Vec<f64> = grid.iter().map(|&q| t.tau(q).unwrap()).collect();
            for (&q, &v) in grid.iter().zip(&vals) {
                prop_assert!(t.residual(q, v).abs() <= TAU_RESIDUAL);
            }
            prop_assert!(vals.windows(2).all(|w| w[1] <= w[0] + 1e-12));
            prop_assert!(vals.windows(3).all(|w| w[2] - 2.0 * w[1] + w[0] >= -1e-10));
            prop_assert!(t.tau(1.0).unwrap().abs() < 1e-12);
        }

        #[test]
        fn overlap_formula_continuity(eps in 0.0f64..0.05) {
            // approaching uniform weights on an OSC system recovers the closed form
            let p = [0.5 - eps, 0.5 + eps];
            let r = [0.4, 0.3];
            let t = TauFunction::new(&p, &r).unwrap();
            let s = spectral_dimension_overlap(&t, true).unwrap().s_rho;
            let closed = self_similar_spectral_dimension(&p, &r).unwrap();
            prop_assert!((s - closed).abs() < 1e-9);
        }
    }
}
