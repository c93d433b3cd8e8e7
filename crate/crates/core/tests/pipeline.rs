// SPDX-License-Identifier: Apache-2.0

use kfspec_core::gibbs::{build_atlas, discretize_atoms};
use kfspec_core::ifs::presets;
use kfspec_core::krein::{build_pencil, counting_curve, default_x_grid, FitWindow};
use kfspec_core::lq::{estimate_q_rho, self_similar_spectral_dimension, MassSource};
use kfspec_core::symbolic::{stopping_partition, AdditiveBounds};
use kfspec_core::thermo::pressure_zero;
use kfspec_core::{GibbsModel, IfsSystem, Word, DEFAULT_BUDGET};
use proptest::prelude::*;

#[test]
fn cantor_routes_agree() {
    let exact = 2f64.ln() / 6f64.ln();
    let model = GibbsModel::bernoulli(presets::cantor(), &[0.5, 0.5]).unwrap();

    let closed = self_similar_spectral_dimension(&[0.5, 0.5], &[1.0 / 3.0, 1.0 / 3.0]).unwrap();
    assert!((closed - exact).abs() < 1e-12);

    let zero = pressure_zero(&model, 4, DEFAULT_BUDGET).unwrap();
    assert!(zero.contains(exact) || (zero.mid() - exact).abs() < 1e-10);

    let q = estimate_q_rho(&model, 4, 12, MassSource::auto(&model), DEFAULT_BUDGET).unwrap();
    assert!((q.estimate - exact).abs() < 0.02, "{q:?}");

    let atoms = discretize_atoms(&model, 3f64.powi(-9), DEFAULT_BUDGET).unwrap();
    let pencil = build_pencil(&atoms).unwrap();
    let curve = counting_curve(&pencil, &default_x_grid(&pencil, 150).unwrap(), FitWindow::default()).unwrap();
    assert!((curve.slope() - exact).abs() < 0.02, "slope {}", curve.slope());
}

fn disjoint_system(raw: &[(f64, f64)]) -> IfsSystem {
    // Lay the images out left to right with the requested ratios and gaps.
    let total: f64 = raw.iter().map(|(r, g)| r + g).sum::<f64>() + 0.05;
    let mut cursor = 0.0;
    let params: Vec<(f64, f64)> = raw
        .iter()
        .map(|(r, g)| {
            cursor += g / total;
            let b = cursor;
            cursor += r / total;
            (r / total, b)
        })
        .collect();
    IfsSystem::affine(&params).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn same_level_cylinders_have_disjoint_interiors(
        raw in prop::collection::vec((0.05f64..1.0, 0.01f64..0.5), 2..5),
        level in 1usize..5,
    ) {
        let system = disjoint_system(&raw);
        prop_assert!(system.osc_certified());
        let n = system.len();
        let mut intervals: Vec<_> = (0..n.pow(level as u32))
            .map(|mut k| {
                let mut symbols = vec![0u8; level];
                for s in symbols.iter_mut().rev() {
                    *s = (k % n) as u8;
                    k /= n;
                }
                system.cylinder_interval(&Word::new(symbols))
            })
            .collect();
        intervals.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        for w in intervals.windows(2) {
            prop_assert!(w[0].hi <= w[1].lo + 1e-15);
        }
    }

    #[test]
    fn atlas_masses_sum_to_one(
        raw in prop::collection::vec((0.05f64..1.0, 0.01f64..0.5), 2..4),
        weights in prop::collection::vec(0.05f64..1.0, 3),
        depth in 2i32..7,
    ) {
        let system = disjoint_system(&raw);
        let n = system.len();
        let sum: f64 = weights[..n].iter().sum();
        let p: Vec<f64> = weights[..n].iter().map(|w| w / sum).collect();
        let model = GibbsModel::bernoulli(system, &p).unwrap();
        let resolution = model.system().alpha_max().powi(depth);
        let atlas = build_atlas(&model, resolution, DEFAULT_BUDGET).unwrap();
        prop_assert!((atlas.total_mass() - 1.0).abs() < 1e-12);
        // Widths come from endpoint differences, so allow rounding at ulp(1).
        prop_assert!(atlas.max_diameter() <= resolution + 4.0 * f64::EPSILON);
        let xi = AdditiveBounds(p.iter().map(|x| x.ln()).collect());
        let partition = stopping_partition(&xi, (resolution * 0.5).ln(), DEFAULT_BUDGET).unwrap();
        prop_assert!(partition.is_prefix_free());
        prop_assert!((partition.bernoulli_mass(&p) - 1.0).abs() < 1e-12);
    }
}
