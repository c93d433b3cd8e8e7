// SPDX-License-Identifier: Apache-2.0

//! Contracting iterated function systems on `[0,1]`.
//!
//! Maps are either affine similarities `x ↦ r·x + b` or user supplied
//! `C^{1+γ}` maps that come with their own derivative and Hölder data for
//! `log|T'|`. Nothing here differentiates numerically.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Interval;
use crate::symbolic::Word;

/// Hölder data `|log|T'(x)| - log|T'(y)|| ≤ constant·|x - y|^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Holder {
    pub constant: f64,
    pub exponent: f64,
}

/// A strictly monotone `C^{1+γ}` contraction of `[0,1]`.
pub trait SmoothMap: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn eval(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;
    /// `(inf |T'|, sup |T'|)` over `[0,1]`.
    fn derivative_bounds(&self) -> (f64, f64);
    /// Hölder data of `log|T'|`; `None` if the map cannot certify any.
    fn holder(&self) -> Option<Holder>;
}

#[derive(Debug, Clone)]
pub enum ContractionMap {
    Affine { ratio: f64, offset: f64 },
    Smooth(Arc<dyn SmoothMap>),
}

impl ContractionMap {
    pub fn affine(ratio: f64, offset: f64) -> Self {
        ContractionMap::Affine { ratio, offset }
    }

    pub fn smooth(map: impl SmoothMap + 'static) -> Self {
        ContractionMap::Smooth(Arc::new(map))
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ContractionMap::Affine { ratio, offset } => ratio * x + offset,
            ContractionMap::Smooth(m) => m.eval(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            ContractionMap::Affine { ratio, .. } => *ratio,
            ContractionMap::Smooth(m) => m.derivative(x),
        }
    }

    pub fn derivative_bounds(&self) -> (f64, f64) {
        match self {
            ContractionMap::Affine { ratio, .. } => (ratio.abs(), ratio.abs()),
            ContractionMap::Smooth(m) => m.derivative_bounds(),
        }
    }

    pub fn holder(&self) -> Option<Holder> {
        match self {
            ContractionMap::Affine { .. } => Some(Holder {
                constant: 0.0,
                exponent: 1.0,
            }),
            ContractionMap::Smooth(m) => m.holder(),
        }
    }

    pub fn is_affine(&self) -> bool {
        matches!(self, ContractionMap::Affine { .. })
    }

    pub fn image(&self) -> Interval {
        Interval::hull(self.eval(0.0), self.eval(1.0))
    }

    fn fixed_point(&self) -> f64 {
        match self {
            ContractionMap::Affine { ratio, offset } => offset / (1.0 - ratio),
            ContractionMap::Smooth(m) => {
                let mut x = 0.5;
                for _ in 0..2000 {
                    x = m.eval(x);
                }
                x
            }
        }
    }
}

/// Finite IFS on `[0,1]` with at least two maps.
#[derive(Debug, Clone)]
pub struct IfsSystem {
    maps: Vec<ContractionMap>,
    osc_certified: bool,
    alpha_max: f64,
    alpha_min: f64,
}

const IMAGE_SLACK: f64 = 1e-14;

impl IfsSystem {
    /// Validates the maps. For all-affine systems the open set condition is
    /// checked directly (and `assert_osc` must agree with the check); for
    /// systems with smooth maps it is taken from `assert_osc`.
    pub fn new(maps: Vec<ContractionMap>, assert_osc: bool) -> Result<Self> {
        if maps.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "an IFS needs at least two maps, got {}",
                maps.len()
            )));
        }
        if maps.len() > 256 {
            return Err(Error::InvalidInput("at most 256 maps are supported".into()));
        }
        let mut alpha_max = 0.0f64;
        let mut alpha_min = f64::INFINITY;
        for (i, m) in maps.iter().enumerate() {
            let (lo, hi) = m.derivative_bounds();
            if !(hi < 1.0) {
                return Err(Error::InvalidInput(format!(
                    "map {} is not a uniform contraction (sup |T'| = {hi})",
                    i + 1
                )));
            }
            if !(lo > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "map {} has derivative not bounded away from zero (inf |T'| = {lo})",
                    i + 1
                )));
            }
            let img = m.image();
            if img.lo < -IMAGE_SLACK || img.hi > 1.0 + IMAGE_SLACK {
                return Err(Error::InvalidInput(format!(
                    "map {} sends [0,1] to [{}, {}], outside [0,1]",
                    i + 1,
                    img.lo,
                    img.hi
                )));
            }
            alpha_max = alpha_max.max(hi);
            alpha_min = alpha_min.min(lo);
        }
        let fixed: Vec<f64> = maps.iter().map(ContractionMap::fixed_point).collect();
        if fixed.iter().all(|x| (x - fixed[0]).abs() < 1e-12) {
            return Err(Error::InvalidInput(
                "all maps share a common fixed point (trivial IFS)".into(),
            ));
        }
        let all_affine = maps.iter().all(ContractionMap::is_affine);
        let osc_certified = if all_affine {
            let disjoint = images_have_disjoint_interiors(&maps);
            if assert_osc && !disjoint {
                return Err(Error::InvalidInput(
                    "open set condition asserted but the images of (0,1) overlap".into(),
                ));
            }
            disjoint
        } else {
            assert_osc
        };
        Ok(Self {
            maps,
            osc_certified,
            alpha_max,
            alpha_min,
        })
    }

    /// Affine system from `(ratio, offset)` pairs; OSC is detected.
    pub fn affine(params: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            params
                .iter()
                .map(|&(r, b)| ContractionMap::affine(r, b))
                .collect(),
            false,
        )
    }

    pub fn maps(&self) -> &[ContractionMap] {
        &self.maps
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn osc_certified(&self) -> bool {
        self.osc_certified
    }

    pub fn alpha_max(&self) -> f64 {
        self.alpha_max
    }

    pub fn alpha_min(&self) -> f64 {
        self.alpha_min
    }

    pub fn is_affine(&self) -> bool {
        self.maps.iter().all(ContractionMap::is_affine)
    }

    /// `(ratio, offset)` of every map, if the system is affine.
    pub fn affine_params(&self) -> Option<Vec<(f64, f64)>> {
        self.maps
            .iter()
            .map(|m| match m {
                ContractionMap::Affine { ratio, offset } => Some((*ratio, *offset)),
                ContractionMap::Smooth(_) => None,
            })
            .collect()
    }

    /// True when the images of `[0,1]` cover `[0,1]` without gaps, so the
    /// attractor is the whole interval.
    pub fn covers_unit_interval(&self) -> bool {
        let mut images: Vec<Interval> = self.maps.iter().map(ContractionMap::image).collect();
        images.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        if images[0].lo > IMAGE_SLACK {
            return false;
        }
        let mut reach = images[0].hi;
        for img in &images[1..] {
            if img.lo > reach + IMAGE_SLACK {
                return false;
            }
            reach = reach.max(img.hi);
        }
        reach >= 1.0 - IMAGE_SLACK
    }

    pub fn compose<'a>(&'a self, word: &'a Word) -> ComposedMap<'a> {
        ComposedMap {
            system: self,
            word: word.symbols(),
        }
    }

    /// `T_ω([0,1])`, from the images of the endpoints 0 and 1.
    pub fn cylinder_interval(&self, word: &Word) -> Interval {
        self.cylinder_interval_of(word.symbols())
    }

    pub(crate) fn cylinder_interval_of(&self, word: &[u8]) -> Interval {
        if let Some((r, b)) = self.affine_composition(word) {
            return Interval::hull(b, r + b);
        }
        let c = ComposedMap { system: self, word };
        Interval::hull(c.eval(0.0), c.eval(1.0))
    }

    /// `(R, B)` with `T_ω(x) = R·x + B` when every map in `ω` is affine.
    pub(crate) fn affine_composition(&self, word: &[u8]) -> Option<(f64, f64)> {
        let mut ratio = 1.0;
        let mut offset = 0.0;
        for &s in word {
            match &self.maps[s as usize] {
                ContractionMap::Affine { ratio: r, offset: b } => {
                    offset += ratio * b;
                    ratio *= r;
                }
                ContractionMap::Smooth(_) => return None,
            }
        }
        Some((ratio, offset))
    }

    /// Holder data for `log|T_i'|` combined over all maps (worst constant,
    /// smallest exponent).
    pub fn holder(&self) -> Result<Holder> {
        let mut constant = 0.0f64;
        let mut exponent = 1.0f64;
        for (i, m) in self.maps.iter().enumerate() {
            let h = m.holder().ok_or_else(|| {
                Error::InvalidInput(format!("map {} has no Hölder data for log|T'|", i + 1))
            })?;
            if !(h.exponent > 0.0 && h.exponent <= 1.0) || !(h.constant >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "map {}: invalid Hölder data {:?}",
                    i + 1,
                    h
                )));
            }
            constant = constant.max(h.constant);
            if h.constant > 0.0 {
                exponent = exponent.min(h.exponent);
            }
        }
        Ok(Holder { constant, exponent })
    }

    /// Weak distortion bound `b_m` of the geometric potential: the spread of
    /// `log|T_ω'|` over `[0,1]` for any `|ω| = m`.
    pub fn geometric_distortion(&self, m: usize) -> Result<f64> {
        let h = self.holder()?;
        if h.constant == 0.0 {
            return Ok(0.0);
        }
        let q = self.alpha_max.powf(h.exponent);
        Ok(h.constant * (1.0 - q.powi(m as i32)) / (1.0 - q))
    }

    /// Enclosure of `{S_{|ω|}φ(ωx)} = {log|T_ω'(y)| : y ∈ [0,1]}`.
    pub fn geometric_birkhoff_bounds(&self, word: &Word) -> Result<Interval> {
        self.geometric_bounds_of(word.symbols())
    }

    pub(crate) fn geometric_bounds_of(&self, word: &[u8]) -> Result<Interval> {
        if let Some(sum) = self.affine_log_ratio(word) {
            return Ok(Interval::point(sum));
        }
        let b = self.geometric_distortion(word.len())?;
        let c = ComposedMap { system: self, word };
        let center = c.derivative(0.5).abs().ln();
        Ok(Interval::new(center - b, center + b))
    }

    fn affine_log_ratio(&self, word: &[u8]) -> Option<f64> {
        let mut sum = 0.0;
        for &s in word {
            match &self.maps[s as usize] {
                ContractionMap::Affine { ratio, .. } => sum += ratio.abs().ln(),
                ContractionMap::Smooth(_) => return None,
            }
        }
        Some(sum)
    }
}

fn images_have_disjoint_interiors(maps: &[ContractionMap]) -> bool {
    let mut images: Vec<Interval> = maps.iter().map(ContractionMap::image).collect();
    images.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    images.windows(2).all(|w| w[0].hi <= w[1].lo)
}

/// `T_ω = T_{ω_1} ∘ ⋯ ∘ T_{ω_n}` with its derivative.
#[derive(Debug, Clone, Copy)]
pub struct ComposedMap<'a> {
    system: &'a IfsSystem,
    word: &'a [u8],
}

impl ComposedMap<'_> {
    pub fn eval(&self, x: f64) -> f64 {
        self.word
            .iter()
            .rev()
            .fold(x, |y, &s| self.system.maps[s as usize].eval(y))
    }

    /// Chain rule, innermost map first.
    pub fn derivative(&self, x: f64) -> f64 {
        let mut y = x;
        let mut d = 1.0;
        for &s in self.word.iter().rev() {
            let m = &self.system.maps[s as usize];
            d *= m.derivative(y);
            y = m.eval(y);
        }
        d
    }
}

/// Summable or finite sequence of variations `var_k(ψ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Variations {
    /// `var_k` for `k < len`, zero afterwards.
    Finite(Vec<f64>),
    /// `var_k = constant · ratio^k`.
    Geometric { constant: f64, ratio: f64 },
}

impl Variations {
    pub fn get(&self, k: usize) -> f64 {
        match self {
            Variations::Finite(v) => v.get(k).copied().unwrap_or(0.0),
            Variations::Geometric { constant, ratio } => constant * ratio.powi(k as i32),
        }
    }

    pub fn total(&self) -> Option<f64> {
        match self {
            Variations::Finite(v) => Some(v.iter().sum()),
            Variations::Geometric { constant, ratio } => {
                if *constant == 0.0 {
                    Some(0.0)
                } else if *ratio < 1.0 && *ratio >= 0.0 {
                    Some(constant / (1.0 - ratio))
                } else {
                    None
                }
            }
        }
    }
}

/// Distortion constants of an IFS together with a potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionBudget {
    pub holder: Holder,
    /// Common contraction bound `R`.
    pub contraction: f64,
    /// `log a_0 = Σ_{k≥0} C·R^{γk}`.
    pub a0_log: f64,
    /// `d_0 = log a_0 + Σ_k var_k(ψ)`.
    pub d0: f64,
}

impl DistortionBudget {
    /// `b_m = Σ_{k<m} C·R^{γk}`.
    pub fn b(&self, m: usize) -> f64 {
        if self.holder.constant == 0.0 {
            return 0.0;
        }
        let q = self.contraction.powf(self.holder.exponent);
        self.holder.constant * (1.0 - q.powi(m as i32)) / (1.0 - q)
    }
}

/// Strong distortion budget; fails if the variations are not summable.
pub fn distortion_budget(system: &IfsSystem, variations: &Variations) -> Result<DistortionBudget> {
    let holder = system.holder()?;
    let contraction = system.alpha_max();
    let a0_log = if holder.constant == 0.0 {
        0.0
    } else {
        holder.constant / (1.0 - contraction.powf(holder.exponent))
    };
    let var_total = variations.total().ok_or_else(|| {
        Error::InvalidInput("variation sequence is not summable; no strong distortion budget".into())
    })?;
    Ok(DistortionBudget {
        holder,
        contraction,
        a0_log,
        d0: a0_log + var_total,
    })
}

/// Ready-made nonlinear systems.
pub mod presets {
    use super::*;

    /// Möbius branch `x ↦ x/(2+x)` on the left, and its mirror image on the
    /// right. `|T'| ∈ [2/9, 1/2]`, `|d/dx log|T'|| ≤ 1`.
    #[derive(Debug, Clone, Copy)]
    pub struct MobiusBranch {
        pub mirrored: bool,
    }

    impl SmoothMap for MobiusBranch {
        fn name(&self) -> &str {
            if self.mirrored {
                "mobius-right"
            } else {
                "mobius-left"
            }
        }
        fn eval(&self, x: f64) -> f64 {
            if self.mirrored {
                let y = 1.0 - x;
                1.0 - y / (2.0 + y)
            } else {
                x / (2.0 + x)
            }
        }
        fn derivative(&self, x: f64) -> f64 {
            let y = if self.mirrored { 1.0 - x } else { x };
            2.0 / ((2.0 + y) * (2.0 + y))
        }
        fn derivative_bounds(&self) -> (f64, f64) {
            (2.0 / 9.0, 0.5)
        }
        fn holder(&self) -> Option<Holder> {
            Some(Holder {
                constant: 1.0,
                exponent: 1.0,
            })
        }
    }

    /// Two Möbius branches with images `[0,1/3]` and `[2/3,1]`.
    pub fn mobius_cantor() -> IfsSystem {
        IfsSystem::new(
            vec![
                ContractionMap::smooth(MobiusBranch { mirrored: false }),
                ContractionMap::smooth(MobiusBranch { mirrored: true }),
            ],
            true,
        )
        .expect("preset is valid")
    }

    /// Middle-thirds Cantor maps.
    pub fn cantor() -> IfsSystem {
        IfsSystem::affine(&[(1.0 / 3.0, 0.0), (1.0 / 3.0, 2.0 / 3.0)]).expect("preset is valid")
    }

    /// Two half-scale maps whose self-similar measure with equal weights is
    /// Lebesgue measure.
    pub fn halves() -> IfsSystem {
        IfsSystem::affine(&[(0.5, 0.0), (0.5, 0.5)]).expect("preset is valid")
    }

    /// Four overlapping half-scale maps with algebraically independent
    /// offsets `0, (√2-1)/2, (√3-1)/2, 1/2`. No two words of equal length
    /// give the same map, and the attractor is `[0,1]`.
    pub fn four_halves_overlap() -> IfsSystem {
        IfsSystem::affine(&[
            (0.5, 0.0),
            (0.5, (2f64.sqrt() - 1.0) / 2.0),
            (0.5, (3f64.sqrt() - 1.0) / 2.0),
            (0.5, 0.5),
        ])
        .expect("preset is valid")
    }

    pub fn by_name(name: &str) -> Option<IfsSystem> {
        match name {
            "mobius_cantor" => Some(mobius_cantor()),
            "cantor" => Some(cantor()),
            "halves" => Some(halves()),
            "four_halves_overlap" => Some(four_halves_overlap()),
            _ => None,
        }
    }

    pub const NAMES: [&str; 4] = ["mobius_cantor", "cantor", "halves", "four_halves_overlap"];
}

#[cfg(test)]
mod tests {
    use super::presets::*;
    use super::*;

    fn word(s: &[usize], n: usize) -> Word {
        Word::from_one_based(s, n).unwrap()
    }

    #[test]
    fn affine_composition_cantor() {
        let ifs = cantor();
        let w = word(&[1, 2], 2);
        let c = ifs.compose(&w);
        for x in [0.0, 0.3, 1.0] {
            assert!((c.eval(x) - (x / 9.0 + 2.0 / 9.0)).abs() < 1e-15);
            assert!((c.derivative(x) - 1.0 / 9.0).abs() < 1e-15);
        }
        let e = Word::empty();
        assert_eq!(ifs.compose(&e).eval(0.37), 0.37);
        assert_eq!(ifs.compose(&e).derivative(0.37), 1.0);
    }

    #[test]
    fn cylinder_intervals_cantor() {
        let ifs = cantor();
        let i2 = ifs.cylinder_interval(&word(&[2], 2));
        assert!((i2.lo - 2.0 / 3.0).abs() < 1e-15 && (i2.hi - 1.0).abs() < 1e-15);
        let i21 = ifs.cylinder_interval(&word(&[2, 1], 2));
        assert!((i21.lo - 2.0 / 3.0).abs() < 1e-15 && (i21.hi - 7.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn orientation_reversing_map_handled() {
        let ifs = IfsSystem::affine(&[(-0.4, 0.4), (0.3, 0.7)]).unwrap();
        assert!(ifs.osc_certified());
        let i = ifs.cylinder_interval(&word(&[1, 2], 2));
        // T_1(T_2([0,1])) = T_1([0.7,1]) = [0, 0.12]
        assert!((i.lo - 0.0).abs() < 1e-15 && (i.hi - 0.12).abs() < 1e-15);
    }

    #[test]
    fn validation_rejects_bad_systems() {
        assert!(IfsSystem::affine(&[(0.5, 0.0)]).is_err());
        assert!(IfsSystem::affine(&[(1.0, 0.0), (0.5, 0.5)]).is_err());
        assert!(IfsSystem::affine(&[(0.5, 0.6), (0.5, 0.0)]).is_err());
        // common fixed point 0
        assert!(IfsSystem::affine(&[(0.5, 0.0), (0.25, 0.0)]).is_err());
        let overlap = [ContractionMap::affine(0.6, 0.0), ContractionMap::affine(0.6, 0.4)];
        assert!(IfsSystem::new(overlap.to_vec(), true).is_err());
        assert!(!IfsSystem::new(overlap.to_vec(), false).unwrap().osc_certified());
    }

    #[test]
    fn osc_detection_and_support() {
        assert!(cantor().osc_certified());
        assert!(!cantor().covers_unit_interval());
        assert!(halves().osc_certified());
        assert!(halves().covers_unit_interval());
        let f = four_halves_overlap();
        assert!(!f.osc_certified());
        assert!(f.covers_unit_interval());
    }

    #[test]
    fn affine_bounds_are_exact() {
        let ifs = cantor();
        let b = ifs.geometric_birkhoff_bounds(&word(&[1, 2, 2], 2)).unwrap();
        assert_eq!(b.width(), 0.0);
        assert!((b.lo - 3.0 * (1.0f64 / 3.0).ln()).abs() < 1e-14);
        assert_eq!(ifs.geometric_distortion(7).unwrap(), 0.0);
    }

    #[test]
    fn nonlinear_bounds_contain_samples() {
        let ifs = mobius_cantor();
        for s in [vec![1usize], vec![1, 2], vec![2, 2, 1, 2], vec![1, 1, 1, 2, 1, 2]] {
            let w = word(&s, 2);
            let bounds = ifs.geometric_birkhoff_bounds(&w).unwrap();
            let b = ifs.geometric_distortion(w.len()).unwrap();
            assert!(bounds.width() <= 2.0 * b + 1e-15);
            let c = ifs.compose(&w);
            let mut vals = Vec::new();
            for k in 0..=100 {
                let v = c.derivative(k as f64 / 100.0).abs().ln();
                assert!(bounds.contains(v), "{v} not in {bounds:?} for {w}");
                vals.push(v);
            }
            // endpoint ratio within the weak distortion bound
            let spread = (vals[0] - vals[100]).abs();
            assert!(spread <= b + 1e-12);
        }
    }

    #[test]
    fn distortion_budget_cases() {
        let b = distortion_budget(&cantor(), &Variations::Finite(vec![0.3])).unwrap();
        assert_eq!(b.a0_log, 0.0);
        assert_eq!(b.b(10), 0.0);
        assert!((b.d0 - 0.3).abs() < 1e-15);

        let m = mobius_cantor();
        let nb = distortion_budget(&m, &Variations::Finite(vec![0.2])).unwrap();
        // C / (1 - R^γ) with C = 1, R = 1/2, γ = 1
        assert!((nb.a0_log - 2.0).abs() < 1e-15);
        assert!((nb.d0 - 2.2).abs() < 1e-15);
        assert!(nb.b(1) <= nb.b(5) && nb.b(5) <= nb.a0_log);
        assert!((nb.b(3) - m.geometric_distortion(3).unwrap()).abs() < 1e-15);

        let bad = Variations::Geometric {
            constant: 1.0,
            ratio: 1.0,
        };
        assert!(distortion_budget(&m, &bad).is_err());
    }

    #[test]
    fn mobius_preset_is_consistent() {
        let m = MobiusBranch { mirrored: true };
        assert!((m.eval(0.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.eval(1.0) - 1.0).abs() < 1e-15);
        let h = 1e-6;
        for x in [0.1, 0.5, 0.9] {
            let fd = (m.eval(x + h) - m.eval(x - h)) / (2.0 * h);
            assert!((fd - m.derivative(x)).abs() < 1e-8);
        }
    }
}
