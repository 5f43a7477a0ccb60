use std::f64::consts::PI;

use proptest::prelude::*;
use quenchlab::decay::{decay_exponent, nash_n, read_sup_series, streamline_oscillation, CellDiagnostics};
use quenchlab::pde::{make_initial_data, Field, InitialData, SolverConfig, StripSolver};
use quenchlab::{Backend, CellularFlow, Error, IgnitionReaction, StripDomain, XBoundary};

#[test]
fn cutoff_data_is_constant_on_inner_streamlines() {
    let l = 1.0;
    let flow = CellularFlow::new(l).unwrap();
    let d = StripDomain::new(l, 3, 32, XBoundary::Dirichlet).unwrap();
    let f = make_initial_data(d, &InitialData::StreamlineCutoff { l0: PI, delta0: l / 8.0 }, None).unwrap();
    let osc = streamline_oscillation(&f, &flow, 0.5, Backend::Rayon).unwrap();
    assert!(osc.iter().all(|(_, o)| *o < 1e-12));
    let slab = make_initial_data(d, &InitialData::Slab { l0: 0.5 * PI }, None).unwrap();
    let osc = streamline_oscillation(&slab, &flow, 0.5, Backend::Rayon).unwrap();
    assert!(osc.iter().any(|(_, o)| *o > 0.5));
}

#[test]
fn hot_cells_of_a_one_cell_bump() {
    let l = 1.0;
    let flow = CellularFlow::new(l).unwrap();
    let d = StripDomain::new(l, 2, 32, XBoundary::Dirichlet).unwrap();
    let f = make_initial_data(d, &InitialData::Cell { i: 0, j: 0 }, None).unwrap();
    let diag = CellDiagnostics::compute(&f, &flow, 0.2, Backend::Rayon).unwrap();
    // The bump cell differs from each of its four neighbours by about one.
    assert!(diag.pairs.iter().filter(|p| p.drop > 0.9).count() >= 3);
    assert_eq!(diag.hot_cells(0.5).unwrap(), 1);
    assert!(diag.csv_rows(0.5).iter().all(|r| r.len() == 7));
    let zero = Field::zeros(d);
    assert_eq!(CellDiagnostics::compute(&zero, &flow, 0.2, Backend::Rayon).unwrap().hot_cells(0.5).unwrap(), 0);
}

#[test]
fn monitor_csv_round_trip() {
    let d = StripDomain::new(1.0, 2, 16, XBoundary::Dirichlet).unwrap();
    let init = make_initial_data(d, &InitialData::Slab { l0: 1.0 }, None).unwrap();
    let cfg = SolverConfig {
        t_end: 0.5,
        monitor_stride: 1,
        ..SolverConfig::default()
    };
    let rec = StripSolver::new(d, IgnitionReaction::new(0.25, 0.0).unwrap(), cfg).unwrap().run(&init).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.csv");
    rec.write_monitors(&p).unwrap();
    let back = read_sup_series(&p).unwrap();
    assert_eq!(back.len(), rec.monitors.len());
    assert!(back.iter().zip(&rec.monitors).all(|(a, m)| a.0 == m.t && a.1 == m.sup_norm));
}

#[test]
fn decay_fit_needs_enough_samples() {
    let s: Vec<(f64, f64)> = (1..10).map(|k| (k as f64, 1.0 / k as f64)).collect();
    assert!(matches!(decay_exponent(&s, 1.0, 10.0), Err(Error::InsufficientSamples { .. })));
}

proptest! {
    #[test]
    fn nash_profile_decreases(l in 0.1f64..10.0, c1 in 0.5f64..4.0, t in 1e-3f64..1e3) {
        let a = nash_n(t, l, c1).unwrap();
        let b = nash_n(2.0 * t, l, c1).unwrap();
        prop_assert!(b < a);
        let lhs = 4.0 * a.powi(4) / (1.0 + 4.0 * (a * l).powi(3));
        prop_assert!((lhs - c1 / (l * l * t)).abs() <= 1e-9 * lhs);
    }

    #[test]
    fn exact_power_laws_are_recovered(p in -2.0f64..-0.1, c in 0.1f64..10.0) {
        let s: Vec<(f64, f64)> = (0..40).map(|k| {
            let t = 10f64.powf(k as f64 / 20.0);
            (t, c * t.powf(p))
        }).collect();
        let f = decay_exponent(&s, 1.0, 100.0).unwrap();
        prop_assert!((f.slope - p).abs() < 1e-9);
    }
}
