// SPDX-License-Identifier: Apache-2.0

//! Runs the configured analyses in dependency order: measure, then
//! multifractal and thermodynamic predictions, then the string pencil and
//! its counting function, then the cross-checks.

use kfspec_core::gibbs::discretize_atoms;
use kfspec_core::krein::{
    build_pencil, counting_curve, counting_sandwich_check, default_x_grid, scaling_identity_check,
    smallest_eigenvalues, subdivision_bracketing_check, FitWindow, EIGEN_REL_TOL,
};
use kfspec_core::lq::{
    beta_curve, dyadic_levels, minkowski_from_sums, q_rho_from_sums, spectral_dimension_overlap, LevelSums,
    MassSource, TauFunction,
};
use kfspec_core::numeric::{linspace, logspace};
use kfspec_core::thermo::pressure_level;
use kfspec_core::{Atom, GibbsModel, MassMethod, Word};

use crate::config::{
    AtomSource, CountingConfig, ExperimentConfig, LqConfig, MassMethodChoice, PressureConfig, SandwichConfig,
    TauConfig,
};
use crate::error::CliError;
use crate::report::*;
use crate::writers::{BetaRow, CountingRow, Curves, EigenRow, PressureRow};

/// Which analyses a subcommand runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Lq,
    Tau,
    Pressure,
    Sdim,
    Eigen,
    Count,
    Verify,
    Run,
}

/// Command-line overrides of config values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub level: Option<usize>,
    pub resolution: Option<f64>,
    pub budget: Option<u64>,
    pub seed: Option<u64>,
}

fn tau_applies(model: &GibbsModel) -> bool {
    model.system().is_affine() && model.probabilities().is_some()
}

fn similarity_applies(model: &GibbsModel) -> bool {
    tau_applies(model) && model.system().osc_certified()
}

fn default_counting() -> CountingConfig {
    CountingConfig {
        atoms: AtomSource::Atlas,
        resolution: 0.0,
        dyadic_level: 12,
        grid_points: 200,
        min_count: 8,
        max_fraction: 0.25,
        eigenvalues: 10,
        fit: true,
    }
}

/// Narrows or widens the analysis set of `config` for `command` and applies
/// the overrides.
pub fn prepare(mut config: ExperimentConfig, command: Command, o: &Overrides) -> Result<ExperimentConfig, CliError> {
    let model = config.build_model()?;
    let a = &mut config.analysis;
    let keep_counting = |c: &Option<CountingConfig>| c.clone().unwrap_or_else(default_counting);
    match command {
        Command::Run => {}
        Command::Lq => {
            *a = crate::config::Analyses {
                lq: Some(a.lq.clone().unwrap_or_default()),
                ..Default::default()
            }
        }
        Command::Tau => {
            *a = crate::config::Analyses {
                tau: Some(TauConfig::default()),
                ..Default::default()
            }
        }
        Command::Pressure => {
            *a = crate::config::Analyses {
                pressure: Some(a.pressure.clone().unwrap_or_default()),
                ..Default::default()
            }
        }
        Command::Sdim => {
            *a = crate::config::Analyses {
                lq: Some(a.lq.clone().unwrap_or_default()),
                tau: tau_applies(&model).then(TauConfig::default),
                pressure: Some(a.pressure.clone().unwrap_or_default()),
                ..Default::default()
            }
        }
        Command::Eigen => {
            let mut c = keep_counting(&a.counting);
            c.fit = false;
            *a = crate::config::Analyses {
                counting: Some(c),
                ..Default::default()
            }
        }
        Command::Count => {
            let mut c = keep_counting(&a.counting);
            c.fit = true;
            *a = crate::config::Analyses {
                counting: Some(c),
                ..Default::default()
            }
        }
        Command::Verify => {
            a.lq.get_or_insert_with(LqConfig::default);
            a.pressure.get_or_insert_with(PressureConfig::default);
            if tau_applies(&model) {
                a.tau.get_or_insert_with(TauConfig::default);
            }
            if similarity_applies(&model) {
                a.sandwich.get_or_insert_with(SandwichConfig::default);
            }
            a.counting.get_or_insert_with(default_counting).fit = true;
        }
    }
    if let Some(n) = o.level {
        if let Some(lq) = &mut a.lq {
            lq.n_max = n;
            lq.n_min = lq.n_min.min(n.saturating_sub(2)).max(1);
        }
        if let Some(p) = &mut a.pressure {
            p.level = n;
        }
    }
    if let Some(r) = o.resolution {
        if !(r > 0.0 && r < 1.0) {
            return Err(CliError::Config(format!("--resolution {r} must lie in (0,1)")));
        }
        if let Some(c) = &mut a.counting {
            c.resolution = r;
        }
    }
    if let Some(b) = o.budget {
        config.budget = b;
    }
    Ok(config)
}

pub struct RunOutput {
    pub report: Report,
    pub curves: Curves,
}

/// Resolution actually used by the atlas.
fn atlas_resolution(model: &GibbsModel, c: &CountingConfig) -> f64 {
    if c.resolution > 0.0 {
        c.resolution
    } else {
        model.system().alpha_max().powi(10)
    }
}

fn pencil_atoms(model: &GibbsModel, c: &CountingConfig, budget: u64) -> Result<(Vec<Atom>, String), CliError> {
    Ok(match c.atoms {
        AtomSource::Atlas => {
            let r = atlas_resolution(model, c);
            (discretize_atoms(model, r, budget)?, format!("atlas at resolution {r:e}"))
        }
        AtomSource::Dyadic => {
            let masses = dyadic_levels(model, &[c.dyadic_level], MassSource::auto(model), budget)?.remove(0);
            (masses.atoms(), format!("dyadic cells at level {}", c.dyadic_level))
        }
    })
}

/// Standard error of the least-squares slope of `log N` on `log x`.
fn slope_standard_error(samples: &[(f64, usize)], fit_slope: f64, intercept: f64) -> f64 {
    let n = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|(x, _)| x.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let ss: f64 = samples
        .iter()
        .zip(&xs)
        .map(|((_, c), x)| ((*c as f64).ln() - fit_slope * x - intercept).powi(2))
        .sum();
    (ss / (n - 2.0) / sxx).sqrt()
}

pub fn execute(config: &ExperimentConfig, seed: Option<u64>) -> Result<RunOutput, CliError> {
    let model = config.build_model()?;
    let system = model.system();
    let budget = config.budget;
    let a = &config.analysis;
    let tol = config.tolerance;
    let mut curves = Curves::default();

    let lq = match &a.lq {
        None => None,
        Some(c) => {
            let source = match c.method {
                MassMethodChoice::Auto => MassSource::auto(&model),
                MassMethodChoice::Cylinder => MassSource::Cylinder { tol: c.tol },
                MassMethodChoice::Transfer => MassSource::Transfer {
                    extra_levels: c.extra_levels,
                },
            };
            let levels: Vec<usize> = (c.n_min..=c.n_max).collect();
            let masses = dyadic_levels(&model, &levels, source, budget)?;
            let method = masses[0].method;
            let sums: Vec<LevelSums> = masses.iter().map(LevelSums::new).collect();
            let grid = linspace(0.0, 2.0, c.q_points);
            let mut monotone = true;
            let mut convex = true;
            let mut beta_at_one: f64 = 0.0;
            for s in &sums {
                let curve = beta_curve(s, &grid, method)?;
                monotone &= curve.is_non_increasing(1e-12);
                convex &= curve.is_convex(1e-9);
                beta_at_one = beta_at_one.max(s.beta(1.0).abs());
                curves.beta.extend(curve.samples.iter().map(|b| BetaRow {
                    level: curve.level,
                    q: b.q,
                    beta: b.beta,
                    tol: b.tol,
                }));
            }
            let q = q_rho_from_sums(&sums, method)?;
            let mink = minkowski_from_sums(&sums);
            Some(LqSection {
                method,
                levels: (c.n_min, c.n_max),
                q_rho: Estimate::new(q.estimate, q.uncertainty),
                raw: q.raw,
                aitken: q.aitken,
                sequence: q.sequence,
                minkowski: Estimate::new(mink.regression, (mink.regression - mink.raw).abs()),
                beta_at_one,
                beta_at_one_tolerance: match method {
                    MassMethod::Cylinder => 1e-12 + c.tol,
                    MassMethod::Transfer => 1e-12,
                },
                monotone,
                convex,
            })
        }
    };

    let tau = match &a.tau {
        None => None,
        Some(_) => {
            let t = TauFunction::from_model(&model)?;
            let (p, r): (Vec<f64>, Vec<f64>) = (
                model.probabilities().unwrap().to_vec(),
                system.affine_params().unwrap().iter().map(|(r, _)| *r).collect(),
            );
            let root = kfspec_core::lq::self_similar_spectral_dimension(&p, &r)?;
            let solver = 1e-12;
            let overlap = if config.dimensionally_regular {
                let o = spectral_dimension_overlap(&t, true)?;
                Some(OverlapSection {
                    zeta: Estimate::new(o.zeta, solver),
                    q_tilde: Estimate::new(o.q_tilde, solver),
                    tau_at_q_tilde: Estimate::new(o.tau_at_q_tilde, solver),
                    s_rho: Estimate::new(o.s_rho, solver),
                    case: o.case,
                })
            } else {
                None
            };
            Some(TauSection {
                tau_at_zero: Estimate::new(t.tau(0.0)?, solver),
                dim_s: Estimate::new(t.similarity_dimension_of_measure(), solver),
                similarity_root: Estimate::new(root, 1e-15),
                overlap,
            })
        }
    };

    let pressure = match &a.pressure {
        None => None,
        Some(c) => {
            let curve = pressure_level(&model, c.level, &linspace(0.0, 1.0, c.t_points), budget)?;
            curves.pressure.extend(curve.samples.iter().map(|s| PressureRow {
                level: curve.level,
                t: s.t,
                p_lower: s.lower,
                p_upper: s.upper,
            }));
            Some(PressureSection {
                level: c.level,
                zero: Estimate::from_interval(curve.zero),
                strictly_decreasing: curve.is_strictly_decreasing(),
            })
        }
    };

    let needs_pencil = a.counting.is_some() || a.bracketing.is_some() || a.sandwich.is_some();
    let counting_cfg = a.counting.clone().unwrap_or_else(default_counting);
    let mut pencil_section = None;
    let mut counting = None;
    let mut bracketing = Vec::new();
    let mut sandwich = None;
    if needs_pencil {
        let (atoms, source) = pencil_atoms(&model, &counting_cfg, budget)?;
        let pencil = build_pencil(&atoms)?;
        let window = FitWindow {
            min_count: counting_cfg.min_count,
            max_fraction: counting_cfg.max_fraction,
        };
        if a.counting.is_some() {
            let k = counting_cfg.eigenvalues.min(pencil.len());
            let eigenvalues = smallest_eigenvalues(&pencil, k)?;
            curves.eigenvalues = eigenvalues
                .iter()
                .enumerate()
                .map(|(i, &v)| EigenRow {
                    index: i + 1,
                    eigenvalue: v,
                })
                .collect();
            pencil_section = Some(PencilSection {
                source,
                atoms: pencil.len(),
                total_mass: pencil.masses().iter().sum(),
                eigenvalues,
                eigenvalue_rel_tol: EIGEN_REL_TOL,
            });
            if counting_cfg.fit {
                let grid = default_x_grid(&pencil, counting_cfg.grid_points)?;
                let curve = counting_curve(&pencil, &grid, window)?;
                curves.counting = curve
                    .samples
                    .iter()
                    .map(|&(x, count)| CountingRow { x, count })
                    .collect();
                let max_count = (curve.total as f64 * window.max_fraction).floor() as usize;
                let inside: Vec<(f64, usize)> = curve
                    .samples
                    .iter()
                    .copied()
                    .filter(|&(_, n)| n >= window.min_count && n <= max_count)
                    .collect();
                counting = Some(CountingSection {
                    slope: Estimate::new(
                        curve.slope(),
                        slope_standard_error(&inside, curve.fit.slope, curve.fit.intercept),
                    ),
                    intercept: curve.fit.intercept,
                    rms_residual: curve.fit.rms_residual,
                    points_used: curve.points_used,
                    min_count: window.min_count,
                    max_fraction: window.max_fraction,
                    max_count,
                    window_top: curve.window_top,
                    prefactor_at_top: curve.prefactor_at_top,
                });
            }
        }
        if let Some(b) = &a.bracketing {
            let grid = logspace(1.0, pencil.upper_bound(), b.grid_points);
            for cuts in &b.cuts {
                let r = subdivision_bracketing_check(&atoms, cuts, &grid)?;
                bracketing.push(BracketingSection {
                    cuts: r.cuts,
                    points: r.samples.len(),
                    max_violation: r.max_violation,
                });
            }
        }
        if a.sandwich.is_some() {
            let grid = logspace(1.0, pencil.upper_bound(), counting_cfg.grid_points);
            let r = counting_sandwich_check(&model, &pencil, &grid, window)?;
            sandwich = Some(SandwichSection {
                exponent: r.exponent,
                threshold: r.threshold,
                points: r.samples.len(),
                violations: r.violations,
            });
        }
    }

    let mut scaling = Vec::new();
    if let Some(s) = &a.scaling {
        let resolution = atlas_resolution(&model, &counting_cfg);
        for w in &s.words {
            let word = Word::from_one_based(w, model.alphabet_size())?;
            let r = scaling_identity_check(&model, &word, s.k, resolution, budget)?;
            scaling.push(ScalingSection {
                word: r.word,
                factor: r.factor,
                max_relative_deviation: r.max_relative_deviation,
            });
        }
    }

    let osc = system.osc_certified();
    let prediction = if let (true, Some(p)) = (osc, &pressure) {
        Some(Prediction {
            source: "pressure_zero".into(),
            value: p.zero,
        })
    } else if let Some(o) = tau.as_ref().and_then(|t| t.overlap.as_ref()) {
        Some(Prediction {
            source: "overlap_formula".into(),
            value: o.s_rho,
        })
    } else if let (true, Some(t)) = (osc, &tau) {
        Some(Prediction {
            source: "similarity_root".into(),
            value: t.similarity_root,
        })
    } else {
        lq.as_ref().map(|l| Prediction {
            source: "q_rho".into(),
            value: l.q_rho,
        })
    };

    let mut checks = Vec::new();
    if let Some(l) = &lq {
        checks.push(CrossCheck::at_most("beta_at_one", l.beta_at_one, l.beta_at_one_tolerance));
        if let (true, Some(p)) = (osc, &pressure) {
            checks.push(CrossCheck::close("q_rho_vs_pressure_zero", l.q_rho.value, p.zero.value, tol));
        }
        if let Some(o) = tau.as_ref().and_then(|t| t.overlap.as_ref()) {
            checks.push(CrossCheck::close("q_rho_vs_overlap", l.q_rho.value, o.s_rho.value, tol));
        } else if let (true, Some(t), None) = (osc, &tau, &pressure) {
            checks.push(CrossCheck::close(
                "q_rho_vs_similarity_root",
                l.q_rho.value,
                t.similarity_root.value,
                tol,
            ));
        }
    }
    if let (true, Some(t), Some(p)) = (osc, &tau, &pressure) {
        checks.push(CrossCheck::close(
            "similarity_root_vs_pressure_zero",
            t.similarity_root.value,
            p.zero.value,
            1e-8 + p.zero.uncertainty_or_zero(),
        ));
    }
    if let (Some(c), Some(p)) = (&counting, &prediction) {
        checks.push(CrossCheck::close(
            "counting_slope_vs_prediction",
            c.slope.value,
            p.value.value,
            tol,
        ));
    }
    for (i, b) in bracketing.iter().enumerate() {
        checks.push(CrossCheck::at_most(
            &format!("bracketing_{i}"),
            b.max_violation as f64,
            0.0,
        ));
    }
    if let Some(s) = &a.scaling {
        for r in &scaling {
            checks.push(CrossCheck::at_most(
                &format!("scaling_{}", r.word),
                r.max_relative_deviation,
                s.tolerance,
            ));
        }
    }
    if let Some(s) = &sandwich {
        checks.push(CrossCheck::at_most("sandwich", s.violations as f64, 0.0));
    }

    let singularity = lq
        .as_ref()
        .map(|l| l.q_rho)
        .or(prediction.as_ref().map(|p| p.value))
        .map(|q| singularity_flag(&q));

    let report = Report {
        tool: "kfspec".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_name: config.name.clone(),
        config_sha256: config.hash(),
        seed,
        model: ModelSummary {
            maps: system.len(),
            affine: system.is_affine(),
            osc,
            dimensionally_regular: config.dimensionally_regular,
            probabilities: model.probabilities().map(<[f64]>::to_vec),
        },
        lq,
        tau,
        pressure,
        pencil: pencil_section,
        counting,
        bracketing,
        scaling,
        sandwich,
        prediction,
        singularity,
        verdict: Report::verdict_of(&checks),
        cross_checks: checks,
    };
    Ok(RunOutput { report, curves })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse;

    const CANTOR: &str = r#"
        name = "cantor-small"
        [ifs]
        maps = [{ r = "1/3", b = 0 }, { r = "1/3", b = "2/3" }]
        [potential]
        probabilities = ["1/2", "1/2"]
        [analysis.lq]
        n_max = 10
        [analysis.tau]
        [analysis.pressure]
        level = 4
        [analysis.counting]
        resolution = "3^-8"
        [analysis.bracketing]
        cuts = [[0.5]]
        [analysis.sandwich]
    "#;

    #[test]
    fn cantor_run_passes() {
        let cfg = parse(CANTOR, false).unwrap();
        let out = execute(&cfg, None).unwrap();
        let r = &out.report;
        assert_eq!(r.verdict, Verdict::Pass, "{:#?}", r.cross_checks);
        assert_eq!(r.singularity, Some(Singularity::Singular));
        assert_eq!(r.prediction.as_ref().unwrap().source, "pressure_zero");
        assert!(!out.curves.beta.is_empty() && !out.curves.counting.is_empty());
        assert_eq!(r.pencil.as_ref().unwrap().atoms, 256);
    }

    #[test]
    fn subcommands_narrow_analyses() {
        let cfg = parse(CANTOR, false).unwrap();
        let lq = prepare(cfg.clone(), Command::Lq, &Overrides::default()).unwrap();
        assert!(lq.analysis.lq.is_some() && lq.analysis.counting.is_none());
        let o = Overrides {
            level: Some(7),
            resolution: Some(3f64.powi(-6)),
            ..Default::default()
        };
        let eig = prepare(cfg.clone(), Command::Eigen, &o).unwrap();
        let c = eig.analysis.counting.as_ref().unwrap();
        assert!(!c.fit);
        assert_eq!(c.resolution, 3f64.powi(-6));
        let out = execute(&eig, None).unwrap();
        assert!(out.report.counting.is_none());
        assert_eq!(out.report.pencil.as_ref().unwrap().eigenvalues.len(), 10);
        let v = prepare(cfg, Command::Verify, &o).unwrap();
        assert_eq!(v.analysis.pressure.as_ref().unwrap().level, 7);
        assert_eq!(v.analysis.lq.as_ref().unwrap().n_max, 7);
    }

    #[test]
    fn lebesgue_is_not_singular() {
        let text = r#"
            [ifs]
            preset = "halves"
            [potential]
            probabilities = [0.5, 0.5]
            [analysis.lq]
            n_max = 8
        "#;
        let out = execute(&parse(text, false).unwrap(), None).unwrap();
        assert_ne!(out.report.singularity, Some(Singularity::Singular));
    }
}
