// SPDX-License-Identifier: Apache-2.0

//! Fixtures shared by the benchmarks.

use kfspec_core::gibbs::discretize_atoms;
use kfspec_core::ifs::presets;
use kfspec_core::krein::{build_pencil, StringPencil};
use kfspec_core::{GibbsModel, DEFAULT_BUDGET};

pub fn cantor() -> GibbsModel {
    GibbsModel::bernoulli(presets::cantor(), &[0.5, 0.5]).expect("valid model")
}

pub fn overlap() -> GibbsModel {
    GibbsModel::bernoulli(presets::four_halves_overlap(), &[0.001, 0.001, 0.05, 0.948]).expect("valid model")
}

pub fn mobius() -> GibbsModel {
    GibbsModel::bernoulli(presets::mobius_cantor(), &[0.5, 0.5]).expect("valid model")
}

/// Cantor string with `2^level` atoms.
pub fn cantor_pencil(level: i32) -> StringPencil {
    let atoms = discretize_atoms(&cantor(), 3f64.powi(-level), DEFAULT_BUDGET).expect("atlas fits");
    build_pencil(&atoms).expect("valid atoms")
}
