use proptest::prelude::*;
use shuttle_core::engine::simulate_trajectory;
use shuttle_core::ensemble::{simulate_ensemble, EnsembleConfig, HistogramGrid, Observable, PhaseHistogram};
use shuttle_core::model::{Lead, Occupation, Params};
use shuttle_core::reduced::solve_reduced_with;
use shuttle_core::thermo::{entropies, thermo_report};

fn short(t_final: f64) -> Params {
    Params {
        t_final,
        dt: 1e-3,
        ..Params::default()
    }
}

/// Unbiased dot in contact with a single oscillator bath, started at rest at
/// the origin.
fn equilibrium(n_traj: usize, t_final: f64) -> Params {
    Params {
        voltage: 0.0,
        mu_left: 0.0,
        mu_right: 0.0,
        eps0: 0.0,
        x0: 0.0,
        gamma: 10.0 * Params::default().gamma,
        dt: 0.01,
        t_final,
        n_traj,
        ..Params::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn trajectory_keeps_charge_and_energy(index in 0u64..1_000_000, seed in any::<u64>()) {
        let p = Params { master_seed: seed, ..short(60.0) };
        let tr = simulate_trajectory(&p, index, 1.0).unwrap();
        for s in &tr.samples {
            prop_assert!(s.state.x.is_finite() && s.state.v.is_finite());
        }
        let net = tr.ledger.net_electrons_from(Lead::Left) + tr.ledger.net_electrons_from(Lead::Right);
        prop_assert_eq!(net, tr.final_state.q.index() as i64 - p.q0.index() as i64);
        prop_assert!(tr.ledger.jump_count() > 0);
        prop_assert!(tr.relative_first_law_residual(&p) < 1e-8);
    }

    #[test]
    fn frozen_dot_exchanges_nothing_with_the_leads(index in 0u64..1000, q0 in prop::bool::ANY) {
        let p = Params {
            gamma0: 0.0,
            q0: if q0 { Occupation::Filled } else { Occupation::Empty },
            ..short(30.0)
        };
        let tr = simulate_trajectory(&p, index, 1.0).unwrap();
        prop_assert_eq!(tr.final_state.q, p.q0);
        prop_assert_eq!(tr.ledger.heat_left(), 0.0);
        prop_assert_eq!(tr.ledger.heat_right(), 0.0);
        prop_assert_eq!(tr.ledger.work_chem(), 0.0);
        prop_assert_eq!(tr.ledger.jump_count(), 0);
    }

    #[test]
    fn reduced_occupation_stays_a_probability(steps_pow in 7u32..12, p1 in 0.0f64..=1.0) {
        let p = Params::default();
        let tr = solve_reduced_with(&p, 2.0 * p.tau_cycle(), 1 << steps_pow, p1);
        if let Ok(tr) = tr {
            for &v in &tr.p1 {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert_eq!(tr.work_mech[0], 0.0);
            prop_assert_eq!(tr.heat_left[0], 0.0);
            prop_assert_eq!(tr.heat_right[0], 0.0);
            prop_assert_eq!(tr.work_chem[0], 0.0);
        }
    }
}

#[test]
fn ensemble_statistics_are_well_formed() {
    let p = Params { n_traj: 24, ..short(50.0) };
    let cfg = EnsembleConfig {
        output_interval: 0.5,
        checkpoint_interval: 10.0,
        workers: Some(2),
    };
    let series = simulate_ensemble(&p, &cfg).unwrap();
    for obs in Observable::ALL {
        assert!(series.stderr(obs).iter().all(|&s| s >= 0.0), "{obs:?}");
    }
    assert!(series.mean(Observable::Occupation).iter().all(|&q| (0.0..=1.0).contains(&q)));
    let grid = HistogramGrid::default();
    for c in &series.checkpoints {
        let h = PhaseHistogram::from_records(grid, &c.records);
        assert!((h.total_mass() - 1.0).abs() <= 1e-12);
        let s = entropies(&h);
        assert_eq!(s.conditional, s.joint - s.dot);
        // The discrete part of S_{O|D}, without the cell-area constant.
        assert!(s.conditional - grid.cell_area().ln() >= -1e-12);
    }
    let report = thermo_report(&series, grid).unwrap();
    for row in &report.rows {
        assert!(row.first_law_residual.mean.abs() < 1e-5, "{} {:?}", row.t, row.first_law_residual);
        let gap = row.entropy_production.mean - row.entropy_production_split;
        assert!(gap.abs() < 1e-9 * (1.0 + row.entropy_production.mean.abs()), "{} {gap}", row.t);
    }
}

#[test]
fn identical_seeds_give_identical_ensembles_for_any_worker_count() {
    let p = Params { n_traj: 20, ..short(20.0) };
    let run = |workers| {
        let cfg = EnsembleConfig {
            output_interval: 0.5,
            checkpoint_interval: 10.0,
            workers: Some(workers),
        };
        simulate_ensemble(&p, &cfg).unwrap()
    };
    let a = run(1);
    for w in [2, 5] {
        let b = run(w);
        for obs in Observable::ALL {
            assert_eq!(a.mean(obs), b.mean(obs), "{obs:?}");
            assert_eq!(a.stderr(obs), b.stderr(obs), "{obs:?}");
        }
        assert_eq!(a.checkpoints, b.checkpoints);
    }
}

#[test]
fn entropy_differences_are_grid_consistent_at_equilibrium() {
    let p = equilibrium(400, 600.0);
    let cfg = EnsembleConfig {
        output_interval: 1.0,
        checkpoint_interval: 100.0,
        workers: None,
    };
    let series = simulate_ensemble(&p, &cfg).unwrap();
    let kbt = p.thermal_energy();
    let (sx, sv) = ((kbt / p.spring_constant()).sqrt(), (kbt / p.mass).sqrt());
    let grid = HistogramGrid::symmetric(8.0 * sx, 16, 8.0 * sv, 16);
    let coarse = thermo_report(&series, grid).unwrap();
    let fine = thermo_report(&series, grid.refined()).unwrap();
    let delta = |r: &shuttle_core::thermo::ThermoReport| {
        r.row_at(600.0).unwrap().entropies.joint - r.row_at(400.0).unwrap().entropies.joint
    };
    let err = coarse.row_at(600.0).unwrap().joint_entropy_stderr;
    assert!(
        (delta(&coarse) - delta(&fine)).abs() <= 2.0 * err,
        "{} vs {} (stderr {err})",
        delta(&coarse),
        delta(&fine)
    );
}
