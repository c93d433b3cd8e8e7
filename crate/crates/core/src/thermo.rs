// SPDX-License-Identifier: Apache-2.0

//! Finite-level pressure of `t·ξ` with `ξ = ψ + φ`, its zero, and the
//! Bowen dimension of the attractor.
//!
//! Every word of length `m` contributes an enclosure `[s_ω ξ, S_ω ξ]` of
//! its Birkhoff sums. The upper and lower pressures built from these bound
//! the true pressure from both sides, and their zeros bracket `z_ρ`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{GibbsModel, NormalizedPotential};
use crate::ifs::IfsSystem;
use crate::numeric::{decreasing_root, Budget, Interval, LogSumExp};

/// Root tolerance for pressure zeros.
const ZERO_TOL: f64 = 1e-13;

/// Upper and lower Birkhoff sums of `ξ` for every word of one length.
#[derive(Debug, Clone)]
pub struct WordBounds {
    level: usize,
    upper: Vec<f64>,
    lower: Vec<f64>,
}

impl WordBounds {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn len(&self) -> usize {
        self.upper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.upper.is_empty()
    }

    pub fn max_upper(&self) -> f64 {
        self.upper.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_upper(&self) -> f64 {
        self.upper.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn min_lower(&self) -> f64 {
        self.lower.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest `S_ω ξ - s_ω ξ`.
    pub fn max_width(&self) -> f64 {
        self.upper
            .iter()
            .zip(&self.lower)
            .map(|(u, l)| u - l)
            .fold(0.0, f64::max)
    }

    /// `m⁻¹ log Σ_ω exp(t·S_ω ξ)`.
    pub fn upper_pressure(&self, t: f64) -> f64 {
        level_pressure(&self.upper, t, self.level)
    }

    /// `m⁻¹ log Σ_ω exp(t·s_ω ξ)`.
    pub fn lower_pressure(&self, t: f64) -> f64 {
        level_pressure(&self.lower, t, self.level)
    }

    /// `[u̲, ū]` with `Σ_ω e^{u·s_ω ξ} = Σ_ω e^{ū·S_ω ξ} = 1`.
    pub fn zero_bracket(&self) -> Result<Interval> {
        let max = self.max_upper();
        if !(max < 0.0) {
            return Err(Error::IncreaseLevel {
                level: self.level,
                max_exponent: max,
            });
        }
        let hi = decreasing_root(|t| self.upper_pressure(t), 0.0, 1.0, ZERO_TOL)?;
        let lo = decreasing_root(|t| self.lower_pressure(t), 0.0, 1.0, ZERO_TOL)?;
        Ok(Interval::hull(lo, hi))
    }
}

fn level_pressure(sums: &[f64], t: f64, level: usize) -> f64 {
    let mut acc = LogSumExp::new();
    for s in sums {
        acc.push(t * s);
    }
    acc.value() / level as f64
}

/// Suffix-tree state: the word is built by prepending symbols, which makes
/// `T_ω(1/2)` and `log|T_ω'(1/2)|` incremental.
#[derive(Clone, Copy)]
struct Suffix {
    first: u8,
    depth: usize,
    point: f64,
    log_derivative: f64,
    psi: f64,
}

/// Enclosures of `S_m ξ(ωx)` for all `ω ∈ I^m`, with `ξ = ψ + φ` or
/// `ξ = φ` when `potential` is `None`.
pub fn word_bounds(
    system: &IfsSystem,
    potential: Option<&NormalizedPotential>,
    m: usize,
    budget: u64,
) -> Result<WordBounds> {
    if m == 0 {
        return Err(Error::InvalidInput("pressure level must be at least 1".into()));
    }
    let n = system.len();
    if let Some(p) = potential {
        if p.alphabet_size() != n {
            return Err(Error::InvalidInput("potential and IFS alphabets differ".into()));
        }
    }
    let total = (n as u64).checked_pow(m as u32).unwrap_or(u64::MAX);
    Budget::new(budget)
        .charge("pressure word enumeration", total)
        .map_err(|e| e.with_hint(format!("lower the pressure level below {m}")))?;
    let distortion = system.geometric_distortion(m)?;

    let branches: Vec<(Vec<f64>, Vec<f64>)> = (0..n as u8)
        .into_par_iter()
        .map(|last| {
            let mut upper = Vec::new();
            let mut lower = Vec::new();
            let (boundary_hi, boundary_lo) = boundary_terms(potential, last);
            let map = &system.maps()[last as usize];
            let root = Suffix {
                first: last,
                depth: 1,
                point: map.eval(0.5),
                log_derivative: map.derivative(0.5).abs().ln(),
                psi: symbol_term(potential, last),
            };
            let mut stack = vec![root];
            while let Some(s) = stack.pop() {
                if s.depth == m {
                    upper.push(s.log_derivative + distortion + s.psi + boundary_hi);
                    lower.push(s.log_derivative - distortion + s.psi + boundary_lo);
                    continue;
                }
                for i in (0..n as u8).rev() {
                    let map = &system.maps()[i as usize];
                    stack.push(Suffix {
                        first: i,
                        depth: s.depth + 1,
                        point: map.eval(s.point),
                        log_derivative: s.log_derivative + map.derivative(s.point).abs().ln(),
                        psi: s.psi + prepend_term(potential, i, s.first),
                    });
                }
            }
            (upper, lower)
        })
        .collect();
    let mut upper = Vec::with_capacity(total as usize);
    let mut lower = Vec::with_capacity(total as usize);
    for (u, l) in branches {
        upper.extend(u);
        lower.extend(l);
    }
    Ok(WordBounds {
        level: m,
        upper,
        lower,
    })
}

/// ψ contribution of the last symbol of a word on its own.
fn symbol_term(potential: Option<&NormalizedPotential>, s: u8) -> f64 {
    match potential {
        Some(NormalizedPotential::Bernoulli { probabilities }) => probabilities[s as usize].ln(),
        _ => 0.0,
    }
}

/// ψ contribution of prepending `i` in front of a word starting with `first`.
fn prepend_term(potential: Option<&NormalizedPotential>, i: u8, first: u8) -> f64 {
    match potential {
        None => 0.0,
        Some(NormalizedPotential::Bernoulli { probabilities }) => probabilities[i as usize].ln(),
        Some(NormalizedPotential::Markov { transition, .. }) => {
            transition[i as usize][first as usize].ln()
        }
    }
}

/// Sup and inf over the continuation of the pair term that straddles the
/// end of the word.
fn boundary_terms(potential: Option<&NormalizedPotential>, last: u8) -> (f64, f64) {
    match potential {
        Some(NormalizedPotential::Markov { transition, .. }) => {
            let logs = transition[last as usize].iter().filter(|p| **p > 0.0).map(|p| p.ln());
            logs.fold((f64::NEG_INFINITY, f64::INFINITY), |(hi, lo), v| (hi.max(v), lo.min(v)))
        }
        _ => (0.0, 0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressureSample {
    pub t: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Upper and lower pressure at one level, sampled in `t`, with the
/// bracket of their zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureCurve {
    pub level: usize,
    pub samples: Vec<PressureSample>,
    pub zero: Interval,
}

impl PressureCurve {
    /// Both curves strictly decrease along the grid.
    pub fn is_strictly_decreasing(&self) -> bool {
        self.samples
            .windows(2)
            .all(|w| w[1].upper < w[0].upper && w[1].lower < w[0].lower)
    }
}

/// Default t-grid: `[0, 1]` in steps of 0.01.
pub fn default_t_grid() -> Vec<f64> {
    crate::numeric::linspace(0.0, 1.0, 101)
}

pub fn pressure_level(model: &GibbsModel, m: usize, t_grid: &[f64], budget: u64) -> Result<PressureCurve> {
    if let Some(t) = t_grid.iter().find(|t| !(**t >= 0.0)) {
        return Err(Error::InvalidInput(format!("t = {t} must be nonnegative")));
    }
    let bounds = word_bounds(model.system(), Some(model.potential()), m, budget)?;
    let zero = bounds.zero_bracket()?;
    let samples = t_grid
        .iter()
        .map(|&t| PressureSample {
            t,
            lower: bounds.lower_pressure(t),
            upper: bounds.upper_pressure(t),
        })
        .collect();
    Ok(PressureCurve {
        level: m,
        samples,
        zero,
    })
}

/// Bracket `[u̲_m, ū_m]` containing `z_ρ`.
pub fn pressure_zero(model: &GibbsModel, m: usize, budget: u64) -> Result<Interval> {
    word_bounds(model.system(), Some(model.potential()), m, budget)?.zero_bracket()
}

/// Bracket for the zero of `t ↦ P(tφ)`.
pub fn bowen_dimension(system: &IfsSystem, m: usize, budget: u64) -> Result<Interval> {
    word_bounds(system, None, m, budget)?.zero_bracket()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockPressureSample {
    pub t: f64,
    /// `m⁻¹ P_σ̃(ξ^m)` from single `m`-blocks: the upper level-`m` pressure.
    pub block: f64,
    /// Upper pressure from words of length `k·m`.
    pub refined: f64,
    pub deviation: f64,
    /// `t · max_ω (S_ω ξ - s_ω ξ) / m`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockPressureReport {
    pub block_length: usize,
    pub refined_level: usize,
    pub samples: Vec<BlockPressureSample>,
    pub max_deviation: f64,
    /// Samples where `refined > block` or `block - refined > bound`.
    pub violations: usize,
}

/// Compares the `m`-block pressure with the level-`k·m` pressure. The true
/// pressure lies below both and the refined value lies between the true
/// pressure and the block value, so `0 ≤ block − refined ≤ bound`.
pub fn block_pressure_check(
    model: &GibbsModel,
    m: usize,
    blocks: usize,
    t_grid: &[f64],
    budget: u64,
) -> Result<BlockPressureReport> {
    if blocks == 0 {
        return Err(Error::InvalidInput("need at least one block".into()));
    }
    let coarse = word_bounds(model.system(), Some(model.potential()), m, budget)?;
    let fine = word_bounds(model.system(), Some(model.potential()), m * blocks, budget)?;
    let width = coarse.max_width();
    let samples: Vec<BlockPressureSample> = t_grid
        .iter()
        .map(|&t| {
            let block = coarse.upper_pressure(t);
            let refined = fine.upper_pressure(t);
            BlockPressureSample {
                t,
                block,
                refined,
                deviation: (block - refined).abs(),
                bound: t * width / m as f64,
            }
        })
        .collect();
    let slack = 1e-12;
    let violations = samples
        .iter()
        .filter(|s| s.refined > s.block + slack || s.block - s.refined > s.bound + slack)
        .count();
    Ok(BlockPressureReport {
        block_length: m,
        refined_level: m * blocks,
        max_deviation: samples.iter().map(|s| s.deviation).fold(0.0, f64::max),
        samples,
        violations,
    })
}
