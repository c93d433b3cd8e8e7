// SPDX-License-Identifier: Apache-2.0

//! Dirichlet eigenvalues of Kreĭn strings carrying finitely many atoms.
//!
//! For a purely atomic measure the eigenfunctions are affine between atoms,
//! so the Dirichlet form restricted to hat functions with knots at the atoms
//! is exact. The problem becomes the tridiagonal pencil `K u = λ M u`, whose
//! eigenvalues are counted with the Sturm pivot recurrence.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{discretize_atoms, distribution_function, Atom, GibbsModel};
use crate::numeric::{fit_line, Interval, LineFit};
use crate::symbolic::Word;

/// Symmetric tridiagonal stiffness `K` and diagonal mass `M` for atoms in
/// the open interval `(left, right)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StringPencil {
    left: f64,
    right: f64,
    positions: Vec<f64>,
    masses: Vec<f64>,
    /// `h_0, …, h_N`, including the two boundary gaps.
    gaps: Vec<f64>,
    /// `K_ii = 1/h_{i-1} + 1/h_i`.
    diagonal: Vec<f64>,
    /// `K_{i,i+1} = -1/h_i`.
    off_diagonal: Vec<f64>,
}

/// Pencil on `[0,1]`.
pub fn build_pencil(atoms: &[Atom]) -> Result<StringPencil> {
    build_pencil_on(atoms, 0.0, 1.0)
}

/// Pencil on `[left, right]`. Atoms of zero mass on the boundary are
/// dropped; any other atom outside the open interval is an error.
pub fn build_pencil_on(atoms: &[Atom], left: f64, right: f64) -> Result<StringPencil> {
    if !(left < right) {
        return Err(Error::InvalidInput(format!("empty interval [{left}, {right}]")));
    }
    let mut positions = Vec::with_capacity(atoms.len());
    let mut masses = Vec::with_capacity(atoms.len());
    for a in atoms {
        if !(a.mass >= 0.0) || !a.position.is_finite() {
            return Err(Error::InvalidInput(format!("invalid atom {a:?}")));
        }
        if a.position <= left || a.position >= right {
            if a.mass == 0.0 && (a.position == left || a.position == right) {
                continue;
            }
            if a.position == left || a.position == right {
                return Err(Error::BoundaryAtom(a.position));
            }
            return Err(Error::InvalidInput(format!(
                "atom at {} lies outside [{left}, {right}]",
                a.position
            )));
        }
        if a.mass == 0.0 {
            return Err(Error::InvalidInput(format!("atom at {} has zero mass", a.position)));
        }
        if let Some(&prev) = positions.last() {
            if a.position <= prev {
                return Err(Error::UnsortedAtoms(a.position));
            }
        }
        positions.push(a.position);
        masses.push(a.mass);
    }
    let total: f64 = masses.iter().sum();
    if total > 1.0 + 1e-12 {
        return Err(Error::InvalidInput(format!("total mass {total} exceeds 1")));
    }
    let mut gaps = Vec::with_capacity(positions.len() + 1);
    let mut prev = left;
    for &y in positions.iter().chain(std::iter::once(&right)) {
        gaps.push(y - prev);
        prev = y;
    }
    if let Some(h) = gaps.iter().find(|h| !(**h > 0.0)) {
        return Err(Error::InvalidInput(format!("non-positive gap {h}")));
    }
    let n = positions.len();
    let diagonal = (0..n).map(|i| 1.0 / gaps[i] + 1.0 / gaps[i + 1]).collect();
    let off_diagonal = (0..n.saturating_sub(1)).map(|i| -1.0 / gaps[i + 1]).collect();
    Ok(StringPencil {
        left,
        right,
        positions,
        masses,
        gaps,
        diagonal,
        off_diagonal,
    })
}

/// Result of one Sturm sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SturmCount {
    pub count: usize,
    /// An eigenvalue lies within `1e-12·x` of `x`.
    pub tie: bool,
    /// A zero pivot forced a nudge of `x`.
    pub nudged: bool,
}

impl StringPencil {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn interval(&self) -> Interval {
        Interval::new(self.left, self.right)
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }

    pub fn stiffness_diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn stiffness_off_diagonal(&self) -> &[f64] {
        &self.off_diagonal
    }

    /// Gershgorin bound for the spectrum of `M^{-1/2} K M^{-1/2}`.
    pub fn upper_bound(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut r = self.diagonal[i] / self.masses[i];
                if i > 0 {
                    r += self.off_diagonal[i - 1].abs() / (self.masses[i] * self.masses[i - 1]).sqrt();
                }
                if i + 1 < n {
                    r += self.off_diagonal[i].abs() / (self.masses[i] * self.masses[i + 1]).sqrt();
                }
                r
            })
            .fold(0.0, f64::max)
    }

    /// Number of negative pivots of `K - xM`, or `None` on an exact zero
    /// pivot.
    fn negative_pivots(&self, x: f64) -> Option<usize> {
        let mut count = 0;
        let mut pivot = 1.0;
        for i in 0..self.len() {
            let d = self.diagonal[i] - x * self.masses[i];
            pivot = if i == 0 {
                d
            } else {
                let e = self.off_diagonal[i - 1];
                d - e * e / pivot
            };
            if pivot == 0.0 {
                return None;
            }
            if pivot < 0.0 {
                count += 1;
            }
        }
        Some(count)
    }

    /// Eigenvalues `≤ x` with tie and nudge diagnostics.
    pub fn sturm_count(&self, x: f64) -> SturmCount {
        let mut probe = x;
        let mut nudged = false;
        let count = loop {
            match self.negative_pivots(probe) {
                Some(c) => break c,
                None => {
                    nudged = true;
                    probe = if probe == 0.0 {
                        f64::MIN_POSITIVE
                    } else {
                        probe + 4.0 * f64::EPSILON * probe.abs()
                    };
                }
            }
        };
        let below = self.negative_pivots(x * (1.0 - 1e-12)).unwrap_or(count);
        let above = self.negative_pivots(x * (1.0 + 1e-12)).unwrap_or(count);
        SturmCount {
            count,
            tie: below != above,
            nudged,
        }
    }

    /// `N(x)`: number of eigenvalues not exceeding `x`.
    pub fn count_up_to(&self, x: f64) -> usize {
        if x <= 0.0 {
            return 0;
        }
        let mut probe = x;
        loop {
            if let Some(c) = self.negative_pivots(probe) {
                return c;
            }
            probe += 4.0 * f64::EPSILON * probe;
        }
    }
}

/// Relative tolerance of eigenvalue bisection.
pub const EIGEN_REL_TOL: f64 = 1e-10;

/// The `k` smallest eigenvalues, each isolated by bisection on the count.
///
/// Eigenvalues of an irreducible tridiagonal pencil are simple, but strings
/// with long massless gaps have pairs split by less than one ulp; such pairs
/// come out equal.
pub fn smallest_eigenvalues(pencil: &StringPencil, k: usize) -> Result<Vec<f64>> {
    if k > pencil.len() {
        return Err(Error::InvalidInput(format!(
            "asked for {k} eigenvalues of a pencil with {} atoms",
            pencil.len()
        )));
    }
    let top = pencil.upper_bound() * (1.0 + 1e-9);
    let values: Vec<f64> = (1..=k)
        .into_par_iter()
        .map(|i| {
            let (mut lo, mut hi) = (0.0, top);
            // Bisect to the last representable midpoint; the relative
            // tolerance is what is promised, the rest separates close pairs.
            loop {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if pencil.count_up_to(mid) >= i {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect();
    Ok(values)
}

/// Which counts enter the log-log fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    pub min_count: usize,
    /// Upper end as a fraction of the number of atoms.
    pub max_fraction: f64,
}

impl Default for FitWindow {
    fn default() -> Self {
        Self {
            min_count: 8,
            max_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingCurve {
    pub samples: Vec<(f64, usize)>,
    pub total: usize,
    pub window: FitWindow,
    pub fit: LineFit,
    pub points_used: usize,
    /// Largest grid point inside the window; counts above it reflect the
    /// discretization rather than the measure.
    pub window_top: f64,
    /// `N(x)/x^{slope}` at `window_top`, i.e. the empirical prefactor.
    pub prefactor_at_top: f64,
}

impl CountingCurve {
    pub fn slope(&self) -> f64 {
        self.fit.slope
    }

    pub fn is_monotone(&self) -> bool {
        self.samples.windows(2).all(|w| w[0].1 <= w[1].1)
    }
}

/// `count` log-spaced points from half the first eigenvalue to the
/// Gershgorin bound.
pub fn default_x_grid(pencil: &StringPencil, count: usize) -> Result<Vec<f64>> {
    let first = smallest_eigenvalues(pencil, 1)?;
    let lo = first.first().copied().unwrap_or(1.0) * 0.5;
    Ok(crate::numeric::logspace(lo, pencil.upper_bound(), count))
}

pub fn counting_curve(pencil: &StringPencil, x_grid: &[f64], window: FitWindow) -> Result<CountingCurve> {
    if x_grid.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::InvalidInput("x-grid must be positive".into()));
    }
    let samples: Vec<(f64, usize)> = x_grid
        .par_iter()
        .map(|&x| (x, pencil.count_up_to(x)))
        .collect();
    fit_counting(samples, pencil.len(), window)
}

/// Log-log fit of already counted samples; `total` is the number of atoms.
pub fn fit_counting(samples: Vec<(f64, usize)>, total: usize, window: FitWindow) -> Result<CountingCurve> {
    let max_count = (total as f64 * window.max_fraction).floor() as usize;
    let inside: Vec<(f64, usize)> = samples
        .iter()
        .copied()
        .filter(|&(_, n)| n >= window.min_count && n <= max_count)
        .collect();
    if inside.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "only {} grid points with {} ≤ N ≤ {max_count}; refine the grid or the measure",
            inside.len(),
            window.min_count
        )));
    }
    let xs: Vec<f64> = inside.iter().map(|(x, _)| x.ln()).collect();
    let ys: Vec<f64> = inside.iter().map(|(_, n)| (*n as f64).ln()).collect();
    let fit = fit_line(&xs, &ys)?;
    let (window_top, n_top) = *inside.last().unwrap();
    Ok(CountingCurve {
        samples,
        total,
        window,
        fit,
        points_used: inside.len(),
        window_top,
        prefactor_at_top: n_top as f64 / window_top.powf(fit.slope),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BracketingSample {
    pub x: f64,
    pub whole: usize,
    pub parts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketingReport {
    pub cuts: Vec<f64>,
    pub samples: Vec<BracketingSample>,
    /// Largest amount by which `Σ N_i ≤ N ≤ Σ N_i + cuts` fails; zero when
    /// the inequalities hold everywhere.
    pub max_violation: usize,
}

/// Dirichlet bracketing across cut points: splitting the string at `c`
/// cuts gives `Σ N_i(x) ≤ N(x) ≤ Σ N_i(x) + c`.
pub fn subdivision_bracketing_check(atoms: &[Atom], cuts: &[f64], x_grid: &[f64]) -> Result<BracketingReport> {
    if cuts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("cut points must be strictly increasing".into()));
    }
    if let Some(c) = cuts.iter().find(|c| !(**c > 0.0 && **c < 1.0)) {
        return Err(Error::InvalidInput(format!("cut point {c} is not inside (0,1)")));
    }
    if let Some(c) = cuts
        .iter()
        .find(|c| atoms.iter().any(|a| a.position == **c && a.mass > 0.0))
    {
        return Err(Error::AtomAtCut(*c));
    }
    let whole = build_pencil(atoms)?;
    let mut edges = vec![0.0];
    edges.extend_from_slice(cuts);
    edges.push(1.0);
    let parts = edges
        .windows(2)
        .map(|w| {
            let inside: Vec<Atom> = atoms
                .iter()
                .copied()
                .filter(|a| a.position > w[0] && a.position < w[1])
                .collect();
            build_pencil_on(&inside, w[0], w[1])
        })
        .collect::<Result<Vec<_>>>()?;
    let samples: Vec<BracketingSample> = x_grid
        .par_iter()
        .map(|&x| BracketingSample {
            x,
            whole: whole.count_up_to(x),
            parts: parts.iter().map(|p| p.count_up_to(x)).sum(),
        })
        .collect();
    let max_violation = samples
        .iter()
        .map(|s| {
            let below = s.parts.saturating_sub(s.whole);
            let above = s.whole.saturating_sub(s.parts + cuts.len());
            below.max(above)
        })
        .max()
        .unwrap_or(0);
    Ok(BracketingReport {
        cuts: cuts.to_vec(),
        samples,
        max_violation,
    })
}

/// Affine `(ratio, offset)` pairs and probabilities.
type SimilarityData = (Vec<(f64, f64)>, Vec<f64>);

fn similarity_data(model: &GibbsModel) -> Result<SimilarityData> {
    let system = model.system();
    let params = system
        .affine_params()
        .ok_or_else(|| Error::Unsupported("scaling checks need affine maps".into()))?;
    if !system.osc_certified() {
        return Err(Error::Unsupported("scaling checks need the open set condition".into()));
    }
    let p = model
        .probabilities()
        .ok_or_else(|| Error::Unsupported("scaling checks need a Bernoulli potential".into()))?;
    Ok((params, p.to_vec()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub word: String,
    /// `Π σ_{ω_j} p_{ω_j}`.
    pub factor: f64,
    pub whole: Vec<f64>,
    pub restricted: Vec<f64>,
    pub max_relative_deviation: f64,
}

/// Compares the eigenvalues of the string restricted to `T_ω([0,1])` with
/// those on `[0,1]` divided by `Π σ p`.
pub fn scaling_identity_check(
    model: &GibbsModel,
    word: &Word,
    k: usize,
    resolution: f64,
    budget: u64,
) -> Result<ScalingReport> {
    let (params, p) = similarity_data(model)?;
    let factor: f64 = word
        .symbols()
        .iter()
        .map(|&s| params[s as usize].0.abs() * p[s as usize])
        .product();
    let atoms = discretize_atoms(model, resolution, budget)?;
    let whole = smallest_eigenvalues(&build_pencil(&atoms)?, k)?;
    let cyl = model.system().cylinder_interval(word);
    let inside: Vec<Atom> = atoms
        .iter()
        .copied()
        .filter(|a| a.position > cyl.lo && a.position < cyl.hi)
        .collect();
    let restricted = smallest_eigenvalues(&build_pencil_on(&inside, cyl.lo, cyl.hi)?, k)?;
    let max_relative_deviation = whole
        .iter()
        .zip(&restricted)
        .map(|(w, r)| ((r - w / factor) / (w / factor)).abs())
        .fold(0.0, f64::max);
    Ok(ScalingReport {
        word: word.to_string(),
        factor,
        whole,
        restricted,
        max_relative_deviation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichSample {
    pub x: f64,
    pub count: usize,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub exponent: f64,
    pub first_eigenvalue: f64,
    pub min_weight: f64,
    /// Bounds apply for `x` above this value.
    pub threshold: f64,
    pub samples: Vec<SandwichSample>,
    pub violations: usize,
}

/// For self-similar measures under the open set condition:
/// `(x·min pσ/λ₁)^u ≤ N(x) ≤ 2(x/(λ₁·min pσ))^u + 1` above
/// `λ₁ / min pσ`. Grid points beyond the counting window are skipped,
/// since there the count saturates at the number of atoms.
pub fn counting_sandwich_check(
    model: &GibbsModel,
    pencil: &StringPencil,
    x_grid: &[f64],
    window: FitWindow,
) -> Result<SandwichReport> {
    let (params, p) = similarity_data(model)?;
    let ratios: Vec<f64> = params.iter().map(|(r, _)| *r).collect();
    let exponent = crate::lq::self_similar_spectral_dimension(&p, &ratios)?;
    let min_weight = params
        .iter()
        .zip(&p)
        .map(|((r, _), p)| r.abs() * p)
        .fold(f64::INFINITY, f64::min);
    let first_eigenvalue = smallest_eigenvalues(pencil, 1)?[0];
    let threshold = first_eigenvalue / min_weight;
    let max_count = (pencil.len() as f64 * window.max_fraction).floor() as usize;
    let samples: Vec<SandwichSample> = x_grid
        .iter()
        .filter(|&&x| x > threshold)
        .map(|&x| SandwichSample {
            x,
            count: pencil.count_up_to(x),
            lower: (x * min_weight / first_eigenvalue).powf(exponent),
            upper: 2.0 * (x / (first_eigenvalue * min_weight)).powf(exponent) + 1.0,
        })
        .filter(|s| s.count <= max_count)
        .collect();
    let violations = samples
        .iter()
        .filter(|s| (s.count as f64) < s.lower || (s.count as f64) > s.upper)
        .count();
    Ok(SandwichReport {
        exponent,
        first_eigenvalue,
        min_weight,
        threshold,
        samples,
        violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedSpectrum {
    pub atoms: Vec<Atom>,
    pub eigenvalues: Vec<f64>,
    /// Largest width of the distribution-function enclosures used.
    pub position_uncertainty: f64,
}

/// Spectrum of the operator with `d/dμ` in place of `d/dx`: the atoms are
/// moved through `F_μ` and the classical pencil is solved.
pub fn generalized_transform(
    rho_atoms: &[Atom],
    mu: &GibbsModel,
    k: usize,
    position_tol: f64,
    budget: u64,
) -> Result<GeneralizedSpectrum> {
    if !mu.system().covers_unit_interval() {
        return Err(Error::InvalidInput(
            "the reference measure must have support [0,1]".into(),
        ));
    }
    let mut width: f64 = 0.0;
    let mut atoms = Vec::with_capacity(rho_atoms.len());
    for a in rho_atoms {
        let f = distribution_function(mu, a.position, position_tol, budget)?;
        if f.width() > position_tol {
            return Err(Error::InvalidInput(format!(
                "F_μ({}) is only known to {}; refine the resolution",
                a.position,
                f.width()
            )));
        }
        width = width.max(f.width());
        atoms.push(Atom {
            position: f.mid(),
            mass: a.mass,
        });
    }
    let pencil = build_pencil(&atoms)?;
    Ok(GeneralizedSpectrum {
        eigenvalues: smallest_eigenvalues(&pencil, k)?,
        atoms,
        position_uncertainty: width,
    })
}
