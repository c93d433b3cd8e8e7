// SPDX-License-Identifier: Apache-2.0

//! Spectral dimension of Kreĭn–Feller operators for Gibbs measures on
//! `[0,1]`, computed from multifractal and thermodynamic quantities and,
//! independently, from eigenvalue counts of discretized strings.

// NaN must fail the range checks, so `!(x > 0.0)` is intended.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gibbs;
pub mod ifs;
pub mod krein;
pub mod lq;
pub mod numeric;
pub mod symbolic;
pub mod thermo;

pub use error::{Error, Result};
pub use gibbs::{Atom, CylinderAtlas, CylinderNode, DyadicMasses, GibbsModel, MassMethod, PotentialSpec};
pub use ifs::{ContractionMap, DistortionBudget, Holder, IfsSystem, SmoothMap, Variations};
pub use krein::{CountingCurve, FitWindow, StringPencil};
pub use lq::{BetaCurve, QRhoEstimate, TauFunction};
pub use numeric::{Interval, DEFAULT_BUDGET};
pub use symbolic::{StoppingPartition, Word};
pub use thermo::{PressureCurve, WordBounds};
