// SPDX-License-Identifier: Apache-2.0

//! Gibbs measures projected from the shift space onto `[0,1]`.
//!
//! Potentials have range one (Bernoulli) or two (Markov). After
//! normalization the cylinder masses are exact products, so every tolerance
//! reported downstream comes from resolving cylinders against a grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ifs::{IfsSystem, Variations};
use crate::numeric::{Budget, Interval};
use crate::symbolic::Word;

/// Raw potential table before normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PotentialTable {
    /// `ψ(i)` for each symbol.
    Symbol(Vec<f64>),
    /// `ψ(ij)` for each pair of consecutive symbols; `-inf` forbids a
    /// transition.
    Pair(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub table: PotentialTable,
}

impl PotentialSpec {
    pub fn symbol(values: Vec<f64>) -> Self {
        Self {
            table: PotentialTable::Symbol(values),
        }
    }

    pub fn pair(values: Vec<Vec<f64>>) -> Self {
        Self {
            table: PotentialTable::Pair(values),
        }
    }

    /// `ψ(i) = log p_i` for a probability vector.
    pub fn from_probabilities(p: &[f64]) -> Result<Self> {
        validate_probabilities(p)?;
        Ok(Self::symbol(p.iter().map(|x| x.ln()).collect()))
    }

    pub fn range(&self) -> usize {
        match self.table {
            PotentialTable::Symbol(_) => 1,
            PotentialTable::Pair(_) => 2,
        }
    }

    pub fn alphabet_size(&self) -> usize {
        match &self.table {
            PotentialTable::Symbol(v) => v.len(),
            PotentialTable::Pair(m) => m.len(),
        }
    }

    /// `var_k(ψ)`: the largest change of `ψ` between sequences sharing their
    /// first `k` symbols. Zero from `k = range` on.
    pub fn variations(&self) -> Variations {
        let spread = |it: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = it
                .filter(|v| v.is_finite())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            if hi >= lo {
                hi - lo
            } else {
                0.0
            }
        };
        match &self.table {
            PotentialTable::Symbol(v) => Variations::Finite(vec![spread(&mut v.iter().copied())]),
            PotentialTable::Pair(m) => {
                let var0 = spread(&mut m.iter().flatten().copied());
                let var1 = m
                    .iter()
                    .map(|row| spread(&mut row.iter().copied()))
                    .fold(0.0, f64::max);
                Variations::Finite(vec![var0, var1])
            }
        }
    }
}

/// Checks that `p` is a strictly positive probability vector.
pub fn validate_probabilities(p: &[f64]) -> Result<()> {
    if p.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "probability vector needs at least two entries, got {}",
            p.len()
        )));
    }
    if let Some(x) = p.iter().find(|x| !(**x > 0.0 && **x < 1.0)) {
        return Err(Error::InvalidInput(format!(
            "probabilities must lie in (0,1), found {x}"
        )));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!(
            "probabilities sum to {total}, not 1"
        )));
    }
    Ok(())
}

/// Normalized potential: `Σ_j e^{ψ₁(ij)} = 1` for every `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NormalizedPotential {
    Bernoulli {
        /// `e^{ψ₁(i)}`.
        probabilities: Vec<f64>,
    },
    Markov {
        /// `P_ij = e^{ψ₁(ij)}`, rows sum to one.
        transition: Vec<Vec<f64>>,
        /// Left fixed vector of `transition`.
        stationary: Vec<f64>,
        /// Perron eigenvalue of the raw matrix `e^{ψ(ij)}`.
        perron_value: f64,
    },
}

impl NormalizedPotential {
    pub fn alphabet_size(&self) -> usize {
        match self {
            NormalizedPotential::Bernoulli { probabilities } => probabilities.len(),
            NormalizedPotential::Markov { stationary, .. } => stationary.len(),
        }
    }

    /// `log P_ij` or `log p_j`; used as a symbol or pair potential.
    pub fn log_table(&self) -> PotentialTable {
        match self {
            NormalizedPotential::Bernoulli { probabilities } => {
                PotentialTable::Symbol(probabilities.iter().map(|p| p.ln()).collect())
            }
            NormalizedPotential::Markov { transition, .. } => PotentialTable::Pair(
                transition
                    .iter()
                    .map(|row| row.iter().map(|p| p.ln()).collect())
                    .collect(),
            ),
        }
    }

    /// Mass of `[ωj]` from the mass of `[ω]` and its last symbol.
    #[inline]
    pub(crate) fn child_mass(&self, mass: f64, last: Option<u8>, j: u8) -> f64 {
        match self {
            NormalizedPotential::Bernoulli { probabilities } => mass * probabilities[j as usize],
            NormalizedPotential::Markov {
                transition,
                stationary,
                ..
            } => match last {
                None => stationary[j as usize],
                Some(l) => mass * transition[l as usize][j as usize],
            },
        }
    }
}

const PERRON_RESIDUAL: f64 = 1e-13;
const PERRON_MAX_ITER: usize = 100_000;

/// Normalizes a range-one or range-two potential.
pub fn normalize_potential(raw: &PotentialSpec) -> Result<NormalizedPotential> {
    match &raw.table {
        PotentialTable::Symbol(values) => {
            if values.len() < 2 {
                return Err(Error::InvalidPotential("need at least two symbols".into()));
            }
            if let Some(v) = values.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidPotential(format!("non-finite value {v}")));
            }
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_z = max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            Ok(NormalizedPotential::Bernoulli {
                probabilities: values.iter().map(|v| (v - log_z).exp()).collect(),
            })
        }
        PotentialTable::Pair(rows) => normalize_pair(rows),
    }
}

fn normalize_pair(rows: &[Vec<f64>]) -> Result<NormalizedPotential> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::InvalidPotential("need at least two symbols".into()));
    }
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidPotential("pair table must be square".into()));
    }
    if let Some(v) = rows.iter().flatten().find(|v| v.is_nan() || **v == f64::INFINITY) {
        return Err(Error::InvalidPotential(format!("invalid value {v}")));
    }
    // Scale by the largest entry so that exp never overflows.
    let shift = rows
        .iter()
        .flatten()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::NonPrimitive("all transitions are forbidden".into()));
    }
    let a: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().map(|v| (v - shift).exp()).collect())
        .collect();
    check_primitive(&a)?;

    let (lambda, h) = perron_vector(&a, false)?;
    let (_, left) = perron_vector(&a, true)?;
    let transition: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| a[i][j] * h[j] / (lambda * h[i])).collect())
        .collect();
    let weights: Vec<f64> = (0..n).map(|i| left[i] * h[i]).collect();
    let total: f64 = weights.iter().sum();
    let stationary = weights.iter().map(|w| w / total).collect();
    Ok(NormalizedPotential::Markov {
        transition,
        stationary,
        perron_value: lambda * shift.exp(),
    })
}

/// Wielandt: a nonnegative `n×n` matrix is primitive iff `A^k > 0` for
/// `k = n² - 2n + 2`.
fn check_primitive(a: &[Vec<f64>]) -> Result<()> {
    let n = a.len();
    let pattern: Vec<Vec<bool>> = a.iter().map(|r| r.iter().map(|v| *v > 0.0).collect()).collect();
    let mut power = pattern.clone();
    for _ in 1..(n * n - 2 * n + 2) {
        if power.iter().flatten().all(|b| *b) {
            return Ok(());
        }
        power = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).any(|k| power[i][k] && pattern[k][j]))
                    .collect()
            })
            .collect();
    }
    if power.iter().flatten().all(|b| *b) {
        Ok(())
    } else {
        Err(Error::NonPrimitive(
            "transition pattern is reducible or periodic; the Perron vector is not unique".into(),
        ))
    }
}

/// Perron eigenvalue and positive eigenvector (right, or left if
/// `transpose`), normalized to unit sum.
fn perron_vector(a: &[Vec<f64>], transpose: bool) -> Result<(f64, Vec<f64>)> {
    let n = a.len();
    let apply = |v: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if transpose { a[j][i] * v[j] } else { a[i][j] * v[j] })
                    .sum()
            })
            .collect()
    };
    let mut v = vec![1.0 / n as f64; n];
    for _ in 0..PERRON_MAX_ITER {
        let w = apply(&v);
        let lambda: f64 = w.iter().sum();
        let next: Vec<f64> = w.iter().map(|x| x / lambda).collect();
        let aw = apply(&next);
        let residual = aw
            .iter()
            .zip(&next)
            .map(|(x, y)| (x - lambda * y).abs())
            .fold(0.0, f64::max);
        let scale = next.iter().copied().fold(0.0, f64::max) * lambda;
        v = next;
        if residual <= PERRON_RESIDUAL * scale {
            return Ok((lambda, v));
        }
    }
    Err(Error::Solver("power iteration for the Perron vector did not converge".into()))
}

/// An IFS with a normalized potential on the same alphabet.
#[derive(Debug, Clone)]
pub struct GibbsModel {
    system: IfsSystem,
    potential: NormalizedPotential,
    variations: Variations,
}

impl GibbsModel {
    pub fn new(system: IfsSystem, raw: &PotentialSpec) -> Result<Self> {
        if raw.alphabet_size() != system.len() {
            return Err(Error::InvalidInput(format!(
                "potential is defined on {} symbols but the IFS has {} maps",
                raw.alphabet_size(),
                system.len()
            )));
        }
        let potential = normalize_potential(raw)?;
        let variations = match &potential.log_table() {
            PotentialTable::Symbol(v) => PotentialSpec::symbol(v.clone()).variations(),
            PotentialTable::Pair(m) => PotentialSpec::pair(m.clone()).variations(),
        };
        Ok(Self {
            system,
            potential,
            variations,
        })
    }

    /// Self-similar (Bernoulli) measure with weights `p`.
    pub fn bernoulli(system: IfsSystem, p: &[f64]) -> Result<Self> {
        Self::new(system, &PotentialSpec::from_probabilities(p)?)
    }

    pub fn system(&self) -> &IfsSystem {
        &self.system
    }

    pub fn potential(&self) -> &NormalizedPotential {
        &self.potential
    }

    /// Variations of the normalized potential.
    pub fn variations(&self) -> &Variations {
        &self.variations
    }

    pub fn alphabet_size(&self) -> usize {
        self.system.len()
    }

    pub fn probabilities(&self) -> Option<&[f64]> {
        match &self.potential {
            NormalizedPotential::Bernoulli { probabilities } => Some(probabilities),
            NormalizedPotential::Markov { .. } => None,
        }
    }

    pub fn cylinder_mass(&self, word: &Word) -> f64 {
        let mut mass = 1.0;
        let mut last = None;
        for &s in word.symbols() {
            mass = self.potential.child_mass(mass, last, s);
            last = Some(s);
        }
        mass
    }
}

/// Cylinder `T_ω([0,1])` with its mass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CylinderNode {
    pub word: Word,
    pub interval: Interval,
    pub mass: f64,
}

/// Prefix-free cover of the attractor by cylinders no wider than
/// `resolution`.
#[derive(Debug, Clone, Serialize)]
pub struct CylinderAtlas {
    pub nodes: Vec<CylinderNode>,
    pub resolution: f64,
}

impl CylinderAtlas {
    pub fn total_mass(&self) -> f64 {
        crate::numeric::kahan_sum(self.nodes.iter().map(|n| n.mass))
    }

    pub fn max_diameter(&self) -> f64 {
        self.nodes.iter().map(|n| n.interval.width()).fold(0.0, f64::max)
    }
}

/// Working state for one cylinder during refinement.
#[derive(Debug, Clone)]
struct Cell {
    word: Vec<u8>,
    mass: f64,
    /// `(R, B)` with `T_ω(x) = R·x + B` for affine systems.
    affine: Option<(f64, f64)>,
}

impl Cell {
    fn root(system: &IfsSystem) -> Self {
        Cell {
            word: Vec::new(),
            mass: 1.0,
            affine: system.is_affine().then_some((1.0, 0.0)),
        }
    }

    fn interval(&self, system: &IfsSystem) -> Interval {
        match self.affine {
            Some((r, b)) => Interval::hull(b, r + b),
            None => system.cylinder_interval_of(&self.word),
        }
    }

    /// Diameter of the image interval; exact `|R|` for affine cells, where
    /// subtracting endpoints would lose relative accuracy at depth.
    fn diameter(&self, system: &IfsSystem) -> f64 {
        match self.affine {
            Some((r, _)) => r.abs(),
            None => self.interval(system).width(),
        }
    }

    fn children<'a>(&'a self, model: &'a GibbsModel) -> impl Iterator<Item = Cell> + 'a {
        let params = model.system.affine_params();
        let last = self.word.last().copied();
        (0..model.alphabet_size() as u8).map(move |j| {
            let mut word = Vec::with_capacity(self.word.len() + 1);
            word.extend_from_slice(&self.word);
            word.push(j);
            let affine = match (self.affine, &params) {
                (Some((r, b)), Some(p)) => {
                    let (rj, bj) = p[j as usize];
                    Some((r * rj, r * bj + b))
                }
                _ => None,
            };
            Cell {
                word,
                mass: model.potential.child_mass(self.mass, last, j),
                affine,
            }
        })
    }
}

/// Relative slack when comparing a computed diameter with a resolution, so
/// that `1/3 · 1/3` counts as `1/9`.
const WIDTH_SLACK: f64 = 1e-12;

/// Stopping-time cover: every node has diameter ≤ `resolution` and its
/// parent does not.
pub fn build_atlas(model: &GibbsModel, resolution: f64, budget: u64) -> Result<CylinderAtlas> {
    if !(resolution > 0.0 && resolution < 1.0) {
        return Err(Error::InvalidInput(format!(
            "atlas resolution must lie in (0,1), got {resolution}"
        )));
    }
    let system = &model.system;
    let mut counter = Budget::new(budget);
    let mut nodes = Vec::new();
    let mut stack = vec![Cell::root(system)];
    while let Some(cell) = stack.pop() {
        counter.charge("cylinder atlas", 1).map_err(|e| {
            let depth = ((budget as f64).ln() / (model.alphabet_size() as f64).ln()).floor();
            e.with_hint(format!(
                "about {depth} full levels fit; try resolution ≥ {:.3e}",
                system.alpha_max().powf(depth)
            ))
        })?;
        if cell.diameter(system) <= resolution * (1.0 + WIDTH_SLACK) {
            let interval = cell.interval(system);
            nodes.push(CylinderNode {
                word: Word::new(cell.word),
                interval,
                mass: cell.mass,
            });
        } else {
            // Reverse so that nodes come out in lexicographic order.
            let children: Vec<Cell> = cell.children(model).collect();
            stack.extend(children.into_iter().rev());
        }
    }
    Ok(CylinderAtlas { nodes, resolution })
}

/// True when an interval is too narrow, relative to its position, for its
/// floating-point endpoints to be compared against a grid point.
fn below_resolution(iv: Interval) -> bool {
    iv.width() <= 16.0 * f64::EPSILON * iv.lo.abs().max(iv.hi.abs())
}

/// Enclosure `[lo, hi]` of `F_ρ(x) = ρ([0, x])` with `hi - lo ≤ tol`.
pub fn distribution_function(model: &GibbsModel, x: f64, tol: f64, budget: u64) -> Result<Interval> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidInput(format!("x = {x} is outside [0,1]")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    // Gibbs measures have no atoms.
    if x == 0.0 || x == 1.0 {
        return Ok(Interval::point(x));
    }
    let system = &model.system;
    let mut counter = Budget::new(budget);
    let mut below = 0.0;
    let mut comp = 0.0;
    let mut stuck = 0.0;
    let mut straddlers = vec![Cell::root(system)];
    loop {
        let mut next = Vec::new();
        let mut ambiguous = 0.0;
        for cell in straddlers {
            counter
                .charge("distribution function", 1)
                .map_err(|e| e.with_hint("increase the tolerance"))?;
            if cell.mass == 0.0 {
                continue;
            }
            let iv = cell.interval(system);
            if iv.hi <= x {
                let y = cell.mass - comp;
                let t = below + y;
                comp = (t - below) - y;
                below = t;
            } else if iv.lo >= x {
                // no mass of this cylinder lies in [0, x]
            } else if below_resolution(iv) {
                stuck += cell.mass;
            } else {
                ambiguous += cell.mass;
                next.push(cell);
            }
        }
        if ambiguous + stuck <= tol {
            let hi = (below + ambiguous + stuck).min(1.0).max(below);
            return Ok(Interval::new(below, hi));
        }
        if next.is_empty() {
            return Err(Error::Solver(format!(
                "tolerance {tol} is below what floating-point cylinder endpoints resolve near x = {x}"
            )));
        }
        straddlers = next.iter().flat_map(|c| c.children(model)).collect();
    }
}

/// How a set of dyadic masses was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassMethod {
    /// Cylinders resolved against the grid; ambiguity is rigorous.
    Cylinder,
    /// Fixed point of a discretized transfer operator; no rigorous bound.
    Transfer,
}

/// Masses of the dyadic cells `((k-1)2^{-n}, k 2^{-n}]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DyadicMasses {
    pub level: usize,
    /// Mass known to lie in each cell.
    pub masses: Vec<f64>,
    /// Mass of unresolved cylinders touching each cell.
    pub ambiguity: Vec<f64>,
    /// Total unresolved mass; `None` for the transfer method.
    pub tolerance: Option<f64>,
    pub method: MassMethod,
}

impl DyadicMasses {
    pub fn total(&self) -> f64 {
        crate::numeric::kahan_sum(self.masses.iter().copied())
    }

    /// Masses of the cells with positive mass, in grid order.
    pub fn positive(&self) -> impl Iterator<Item = f64> + '_ {
        self.masses.iter().copied().filter(|m| *m > 0.0)
    }

    /// One atom per charged cell, at the cell midpoint. Used where the
    /// cylinder atlas would be too large, as for overlapping systems.
    pub fn atoms(&self) -> Vec<Atom> {
        let h = 0.5f64.powi(self.level as i32);
        self.masses
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > 0.0)
            .map(|(k, m)| Atom {
                position: (k as f64 + 0.5) * h,
                mass: *m,
            })
            .collect()
    }
}

/// Cell that contains the left end of `iv`, and the cell that contains its
/// right end, for half-open cells `((k-1)h, kh]` indexed from zero.
fn cell_span(iv: Interval, scale: f64, cells: usize) -> (usize, usize) {
    let last = cells - 1;
    let lo = ((iv.lo * scale).floor().max(0.0) as usize).min(last);
    let hi = (((iv.hi * scale).ceil() - 1.0).max(0.0) as usize).min(last);
    (lo, hi.max(lo))
}

/// Exact dyadic masses: cylinders are refined breadth-first until the mass
/// of those straddling a grid point is at most `tol`.
pub fn dyadic_masses(model: &GibbsModel, n: usize, tol: f64, budget: u64) -> Result<DyadicMasses> {
    if n > 40 {
        return Err(Error::InvalidInput(format!("dyadic level {n} is too deep")));
    }
    if !(tol >= 0.0) {
        return Err(Error::InvalidInput("tolerance must be nonnegative".into()));
    }
    let cells = 1usize << n;
    let mut counter = Budget::new(budget);
    counter.charge("dyadic masses", cells as u64)?;
    let scale = cells as f64;
    let system = &model.system;
    let mut masses = vec![0.0; cells];
    let mut comps = vec![0.0; cells];
    let mut ambiguity = vec![0.0; cells];
    let mut pending = vec![Cell::root(system)];
    let mut stuck: Vec<Cell> = Vec::new();
    let mut depth = 0usize;
    loop {
        let mut straddling = Vec::new();
        let mut unresolved = 0.0;
        for cell in pending {
            counter.charge("dyadic masses", 1).map_err(|e| {
                e.with_hint(format!(
                    "lower the level below {n}, loosen the tolerance, or use the transfer method"
                ))
            })?;
            if cell.mass == 0.0 {
                continue;
            }
            let iv = cell.interval(system);
            let (a, b) = cell_span(iv, scale, cells);
            if a != b && below_resolution(iv) {
                stuck.push(cell);
            } else if a == b {
                let y = cell.mass - comps[a];
                let t = masses[a] + y;
                comps[a] = (t - masses[a]) - y;
                masses[a] = t;
            } else {
                unresolved += cell.mass;
                straddling.push(cell);
            }
        }
        unresolved += stuck.iter().map(|c| c.mass).sum::<f64>();
        if straddling.is_empty() && unresolved > tol {
            return Err(Error::Solver(format!(
                "tolerance {tol} is below what floating-point cylinder endpoints resolve at level {n}"
            )));
        }
        if unresolved <= tol {
            for cell in straddling.iter().chain(&stuck) {
                let (a, b) = cell_span(cell.interval(system), scale, cells);
                for amb in &mut ambiguity[a..=b] {
                    *amb += cell.mass;
                }
            }
            return Ok(DyadicMasses {
                level: n,
                masses,
                ambiguity,
                tolerance: Some(unresolved),
                method: MassMethod::Cylinder,
            });
        }
        depth += 1;
        if depth > 2000 {
            return Err(Error::Solver("dyadic refinement does not terminate".into()));
        }
        pending = straddling.iter().flat_map(|c| c.children(model)).collect();
    }
}

/// Dyadic masses from the fixed point of the transfer operator
/// `H ↦ Σ p_i H∘T_i^{-1}` on a grid `extra_levels` finer than `n`, with mass
/// of each fine cell spread uniformly over its image. Intended for
/// overlapping affine Bernoulli systems, where cylinder refinement is
/// exponentially expensive.
pub fn dyadic_masses_transfer(
    model: &GibbsModel,
    n: usize,
    extra_levels: usize,
    budget: u64,
) -> Result<Vec<DyadicMasses>> {
    let params = model.system.affine_params().ok_or_else(|| {
        Error::Unsupported("the transfer method needs an affine system".into())
    })?;
    let p = model.probabilities().ok_or_else(|| {
        Error::Unsupported("the transfer method needs a Bernoulli potential".into())
    })?;
    let fine = n + extra_levels;
    if fine > 30 {
        return Err(Error::InvalidInput(format!("fine level {fine} is too deep")));
    }
    let cells = 1usize << fine;
    let h = 1.0 / cells as f64;
    let contraction = params.iter().map(|(r, _)| r.abs()).fold(0.0, f64::max);
    let iterations = ((fine as f64 * 2f64.ln()) / -contraction.ln()).ceil() as usize + 4;
    Budget::new(budget)
        .charge(
            "transfer operator",
            (cells as u64) * (params.len() as u64) * iterations as u64,
        )
        .map_err(|e| e.with_hint("lower the level or the number of extra levels"))?;

    let mut density = vec![h; cells];
    let mut next = vec![0.0; cells];
    for _ in 0..iterations {
        next.iter_mut().for_each(|v| *v = 0.0);
        for (&(r, b), &pi) in params.iter().zip(p) {
            for (j, &mass) in density.iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                let x0 = r * (j as f64 * h) + b;
                let x1 = r * ((j + 1) as f64 * h) + b;
                let (lo, hi) = if x0 <= x1 { (x0, x1) } else { (x1, x0) };
                let c0 = ((lo / h).floor().max(0.0) as usize).min(cells - 1);
                let w = pi * mass;
                let boundary = (c0 + 1) as f64 * h;
                if hi <= boundary || c0 + 1 == cells {
                    next[c0] += w;
                } else {
                    let f = (boundary - lo) / (hi - lo);
                    next[c0] += w * f;
                    next[c0 + 1] += w * (1.0 - f);
                }
            }
        }
        std::mem::swap(&mut density, &mut next);
    }
    Ok((0..=n)
        .map(|level| {
            let group = 1usize << (fine - level);
            let masses: Vec<f64> = density
                .chunks(group)
                .map(|c| crate::numeric::kahan_sum(c.iter().copied()))
                .collect();
            DyadicMasses {
                level,
                ambiguity: vec![0.0; masses.len()],
                masses,
                tolerance: None,
                method: MassMethod::Transfer,
            }
        })
        .collect())
}

/// Point mass of a discrete measure on `[0,1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub position: f64,
    pub mass: f64,
}

/// Sorts atoms by position and merges those at identical positions.
pub fn merge_atoms(mut atoms: Vec<Atom>) -> Vec<Atom> {
    atoms.retain(|a| a.mass > 0.0);
    atoms.sort_by(|a, b| a.position.total_cmp(&b.position));
    let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
    for a in atoms {
        match merged.last_mut() {
            Some(last) if last.position == a.position => last.mass += a.mass,
            _ => merged.push(a),
        }
    }
    merged
}

/// One atom per atlas node, at the midpoint of its interval.
pub fn discretize_atoms(model: &GibbsModel, resolution: f64, budget: u64) -> Result<Vec<Atom>> {
    let atlas = build_atlas(model, resolution, budget)?;
    Ok(merge_atoms(
        atlas
            .nodes
            .iter()
            .map(|n| Atom {
                position: n.interval.mid(),
                mass: n.mass,
            })
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifs::presets;
    use crate::numeric::DEFAULT_BUDGET;
    use crate::symbolic::enumerate_words;
    use proptest::prelude::*;

    fn cantor() -> GibbsModel {
        GibbsModel::bernoulli(presets::cantor(), &[0.5, 0.5]).unwrap()
    }

    fn markov() -> GibbsModel {
        let raw = PotentialSpec::pair(vec![vec![0.3, -1.2], vec![0.1, 0.7]]);
        GibbsModel::new(presets::cantor(), &raw).unwrap()
    }

    #[test]
    fn bernoulli_normalization() {
        let p = [0.2, 0.3, 0.5];
        let n = normalize_potential(&PotentialSpec::from_probabilities(&p).unwrap()).unwrap();
        match n {
            NormalizedPotential::Bernoulli { probabilities } => {
                for (a, b) in probabilities.iter().zip(p) {
                    assert!((a - b).abs() < 1e-15);
                }
            }
            _ => panic!(),
        }
        let z = normalize_potential(&PotentialSpec::symbol(vec![0.0, 0.0])).unwrap();
        assert_eq!(
            z,
            NormalizedPotential::Bernoulli {
                probabilities: vec![0.5, 0.5]
            }
        );
    }

    #[test]
    fn markov_rows_sum_to_one() {
        let m = markov();
        match m.potential() {
            NormalizedPotential::Markov {
                transition,
                stationary,
                ..
            } => {
                for row in transition {
                    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
                // stationarity
                for j in 0..2 {
                    let s: f64 = (0..2).map(|i| stationary[i] * transition[i][j]).sum();
                    assert!((s - stationary[j]).abs() < 1e-12);
                }
            }
            _ => panic!(),
        }
    }

    #[test]
    fn equal_rows_collapse_to_bernoulli() {
        // ψ(ij) = log q_j for every i
        let q = [0.3f64, 0.7];
        let raw = PotentialSpec::pair(vec![q.iter().map(|x| x.ln()).collect(); 2]);
        match normalize_potential(&raw).unwrap() {
            NormalizedPotential::Markov {
                transition,
                stationary,
                perron_value,
            } => {
                assert!((perron_value - 1.0).abs() < 1e-12);
                for row in &transition {
                    for (a, b) in row.iter().zip(q) {
                        assert!((a - b).abs() < 1e-12);
                    }
                }
                for (a, b) in stationary.iter().zip(q) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
            _ => panic!(),
        }
    }

    #[test]
    fn reducible_pattern_rejected() {
        let ninf = f64::NEG_INFINITY;
        let raw = PotentialSpec::pair(vec![vec![0.0, ninf], vec![ninf, 0.0]]);
        assert!(matches!(normalize_potential(&raw), Err(Error::NonPrimitive(_))));
        // golden-mean shift is primitive
        let raw = PotentialSpec::pair(vec![vec![0.0, 0.0], vec![0.0, ninf]]);
        assert!(normalize_potential(&raw).is_ok());
    }

    #[test]
    fn cylinder_mass_examples() {
        let w = Word::from_one_based(&[1, 2, 1, 2], 2).unwrap();
        assert_eq!(cantor().cylinder_mass(&w), 1.0 / 16.0);
        let fig = GibbsModel::bernoulli(
            presets::four_halves_overlap(),
            &[0.001, 0.001, 0.05, 0.948],
        )
        .unwrap();
        let w = Word::from_one_based(&[4, 4], 4).unwrap();
        assert!((fig.cylinder_mass(&w) - 0.948 * 0.948).abs() < 1e-16);
    }

    #[test]
    fn masses_are_a_probability() {
        for model in [cantor(), markov()] {
            for n in [1usize, 5, 12] {
                let total: f64 = enumerate_words(2, n, DEFAULT_BUDGET)
                    .unwrap()
                    .map(|w| model.cylinder_mass(&w))
                    .sum();
                assert!((total - 1.0).abs() < 1e-12, "n = {n}: {total}");
            }
        }
    }

    proptest! {
        #[test]
        fn shift_invariance(symbols in prop::collection::vec(1usize..=2, 1..10)) {
            let model = markov();
            let w = Word::from_one_based(&symbols, 2).unwrap();
            let pre: f64 = (0..2u8).map(|j| {
                let mut s = vec![j];
                s.extend_from_slice(w.symbols());
                model.cylinder_mass(&Word::new(s))
            }).sum();
            prop_assert!((pre - model.cylinder_mass(&w)).abs() < 1e-12);
            let post: f64 = (0..2u8).map(|j| model.cylinder_mass(&w.child(j))).sum();
            prop_assert!((post - model.cylinder_mass(&w)).abs() < 1e-12);
        }

        #[test]
        fn cylinder_nesting(symbols in prop::collection::vec(1usize..=4, 0..8), tail in 1usize..=4) {
            let sys = presets::four_halves_overlap();
            let w = Word::from_one_based(&symbols, 4).unwrap();
            let outer = sys.cylinder_interval(&w);
            let inner = sys.cylinder_interval(&w.child((tail - 1) as u8));
            prop_assert!(outer.lo <= inner.lo + 1e-15 && inner.hi <= outer.hi + 1e-15);
            prop_assert!(outer.width() <= sys.alpha_max().powi(w.len() as i32) + 1e-15);
        }
    }

    #[test]
    fn atlas_examples() {
        let a = build_atlas(&cantor(), 1.0 / 9.0, DEFAULT_BUDGET).unwrap();
        assert_eq!(a.nodes.len(), 4);
        assert!(a.nodes.iter().all(|n| n.mass == 0.25 && n.word.len() == 2));
        // 1/3 > 1/4 forces level two as well
        let a = build_atlas(&cantor(), 0.25, DEFAULT_BUDGET).unwrap();
        assert_eq!(a.nodes.len(), 4);
        let a = build_atlas(&markov(), 1e-3, DEFAULT_BUDGET).unwrap();
        assert!((a.total_mass() - 1.0).abs() < 1e-12);
        assert!(a.max_diameter() <= 1e-3);
        let e = build_atlas(&cantor(), 1e-12, 1000).unwrap_err();
        assert!(e.is_budget());
    }

    #[test]
    fn distribution_function_examples() {
        let m = cantor();
        let f = distribution_function(&m, 0.5, 1e-12, DEFAULT_BUDGET).unwrap();
        assert_eq!((f.lo, f.hi), (0.5, 0.5));
        let f0 = distribution_function(&m, 0.0, 1e-12, DEFAULT_BUDGET).unwrap();
        assert_eq!((f0.lo, f0.hi), (0.0, 0.0));
        let f1 = distribution_function(&m, 1.0, 1e-12, DEFAULT_BUDGET).unwrap();
        assert_eq!((f1.lo, f1.hi), (1.0, 1.0));
        // F(1/4) = 1/3 for the Cantor function
        let f = distribution_function(&m, 0.25, 1e-9, DEFAULT_BUDGET).unwrap();
        assert!(f.contains(1.0 / 3.0) && f.width() <= 1e-9, "{f:?}");
        let mut prev = 0.0;
        for k in 0..=50 {
            let f = distribution_function(&markov(), k as f64 / 50.0, 1e-9, DEFAULT_BUDGET).unwrap();
            assert!(f.width() <= 1e-9);
            assert!(prev <= f.hi + 1e-9);
            prev = f.hi;
        }
    }

    #[test]
    fn lebesgue_dyadic_masses_are_exact() {
        let m = GibbsModel::bernoulli(presets::halves(), &[0.5, 0.5]).unwrap();
        assert_eq!(dyadic_masses(&m, 0, 0.0, DEFAULT_BUDGET).unwrap().masses, vec![1.0]);
        let d = dyadic_masses(&m, 9, 0.0, DEFAULT_BUDGET).unwrap();
        assert_eq!(d.tolerance, Some(0.0));
        assert!(d.masses.iter().all(|x| *x == 1.0 / 512.0));
    }

    #[test]
    fn cantor_dyadic_masses_match_distribution_function() {
        let m = cantor();
        let tol = 1e-9;
        let d = dyadic_masses(&m, 2, tol, DEFAULT_BUDGET).unwrap();
        let f: Vec<f64> = (0..=4)
            .map(|k| distribution_function(&m, k as f64 / 4.0, tol, DEFAULT_BUDGET).unwrap().mid())
            .collect();
        for k in 0..4 {
            assert!((d.masses[k] - (f[k + 1] - f[k])).abs() < 2.0 * tol, "cell {k}");
        }
        assert!((d.total() - 1.0).abs() <= tol);
        assert!(dyadic_masses(&m, 2, 1e-14, DEFAULT_BUDGET).is_err());
    }

    #[test]
    fn dyadic_levels_refine() {
        let m = markov();
        let tol = 1e-10;
        let coarse = dyadic_masses(&m, 6, tol, DEFAULT_BUDGET).unwrap();
        let fine = dyadic_masses(&m, 7, tol, DEFAULT_BUDGET).unwrap();
        for k in 0..64 {
            let s = fine.masses[2 * k] + fine.masses[2 * k + 1];
            assert!((s - coarse.masses[k]).abs() <= 2.0 * tol);
        }
    }

    #[test]
    fn transfer_agrees_with_cylinders() {
        let m = GibbsModel::bernoulli(presets::four_halves_overlap(), &[0.1, 0.2, 0.3, 0.4]).unwrap();
        let tol = 2e-3;
        let exact = dyadic_masses(&m, 4, tol, DEFAULT_BUDGET).unwrap();
        let transfer = dyadic_masses_transfer(&m, 4, 10, DEFAULT_BUDGET).unwrap();
        let t = &transfer[4];
        assert!((t.total() - 1.0).abs() < 1e-12);
        let l1: f64 = exact.masses.iter().zip(&t.masses).map(|(a, b)| (a - b).abs()).sum();
        assert!(l1 < 1e-3 + tol, "L1 distance {l1}");
        assert!(matches!(
            dyadic_masses_transfer(&markov(), 4, 2, DEFAULT_BUDGET),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn atoms_examples() {
        let a = discretize_atoms(&cantor(), 1.0 / 3.0, DEFAULT_BUDGET).unwrap();
        assert_eq!(a.len(), 2);
        assert!((a[0].position - 1.0 / 6.0).abs() < 1e-15 && a[0].mass == 0.5);
        assert!((a[1].position - 5.0 / 6.0).abs() < 1e-15 && a[1].mass == 0.5);
        let merged = merge_atoms(vec![
            Atom { position: 0.5, mass: 0.25 },
            Atom { position: 0.2, mass: 0.5 },
            Atom { position: 0.5, mass: 0.25 },
        ]);
        assert_eq!(merged.len(), 2);
        assert_eq!(merged[1], Atom { position: 0.5, mass: 0.5 });
    }

    #[test]
    fn atoms_are_close_in_wasserstein() {
        // W1 = ∫ |F_atoms - F_ρ| dx, with F_ρ from the distribution function
        let m = markov();
        let res = 1e-2;
        let atoms = discretize_atoms(&m, res, DEFAULT_BUDGET).unwrap();
        assert!((atoms.iter().map(|a| a.mass).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(atoms.windows(2).all(|w| w[0].position < w[1].position));
        let grid = 2000;
        let mut w1 = 0.0;
        for k in 0..grid {
            let x = (k as f64 + 0.5) / grid as f64;
            let fa: f64 = atoms.iter().filter(|a| a.position <= x).map(|a| a.mass).sum();
            let fr = distribution_function(&m, x, 1e-9, DEFAULT_BUDGET).unwrap().mid();
            w1 += (fa - fr).abs() / grid as f64;
        }
        assert!(w1 <= res, "W1 = {w1}");
    }
}
