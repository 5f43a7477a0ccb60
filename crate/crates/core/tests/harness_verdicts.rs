use std::f64::consts::PI;

use quenchlab::harness::{classify, find_a0, Classifier, ScanSettings, SlabSetup, StopRule, Verdict};
use quenchlab::pde::{make_initial_data, InitialData, SolverConfig, StripSolver};
use quenchlab::{CellIndex, CellularFlow, IgnitionReaction, StripDomain, SubSolution, XBoundary};

fn reaction() -> IgnitionReaction {
    IgnitionReaction::new(0.25, 1.0).unwrap()
}

/// One burning cell, twice the critical size, with no flow: the barrier is
/// dominated at once and the burned region spreads.
#[test]
fn supercritical_cell_propagates() {
    let r = reaction();
    let l = 2.0 * SubSolution::for_reaction(&r, 1.0).unwrap().l_min();
    let flow = CellularFlow::new(l).unwrap();
    let d = StripDomain::new(l, 2, 16, XBoundary::Dirichlet).unwrap();
    let init = make_initial_data(d, &InitialData::Cell { i: 0, j: 0 }, None).unwrap();
    let sub = SubSolution::for_reaction(&r, l).unwrap();
    let stop = StopRule {
        on_quench: true,
        propagation_after: Some(2.0),
        center_at_least: Some(0.99),
    };
    let seed = CellIndex::new(0, 0);
    let mut cls = Classifier::new(&d, &flow, &r, Some(&sub), seed, stop);
    assert!(cls.has_barrier());
    let cfg = SolverConfig {
        t_end: 40.0,
        ..SolverConfig::default()
    };
    let rec = StripSolver::new(d, r.clone(), cfg).unwrap().run_observed(&init, |m, f| cls.observe(m, f)).unwrap();
    assert!(rec.stopped_early);
    assert!(matches!(cls.verdict(), Verdict::Propagating { .. }));
    assert_eq!(classify(&rec, r.theta0, cls.dominated_at()), cls.verdict());
    assert_eq!(classify(&rec, r.theta0, None).label(), "undecided");
}

#[test]
fn verdicts_serialize_with_a_tag() {
    let v = Verdict::Quenched { t_quench: 1.5 };
    let s = serde_json::to_string(&v).unwrap();
    assert_eq!(s, r#"{"verdict":"quenched","t_quench":1.5}"#);
    assert_eq!(serde_json::from_str::<Verdict>(&s).unwrap(), v);
}

#[test]
fn repeated_search_gives_the_same_bracket() {
    let setup = SlabSetup {
        l: 1.0,
        reaction: reaction(),
        l0: 0.25 * PI,
        points_per_cell: 8,
        margin_cells: 3,
        horizon: 4.0,
        solver: SolverConfig {
            monitor_stride: 2,
            ..SolverConfig::default()
        },
    };
    let scan = ScanSettings {
        a_max: 64.0,
        ..ScanSettings::default()
    };
    let a = find_a0(&setup, &scan).unwrap();
    let b = find_a0(&setup, &scan).unwrap();
    assert_eq!((a.a_lo, a.a_hi, a.flips.clone()), (b.a_lo, b.a_hi, b.flips.clone()));
    assert_eq!(a.csv_record(), b.csv_record());
    // Every probe below the bracket failed to quench, every probe above it did.
    for p in a.probes.iter().filter(|p| p.grid == setup.points_per_cell) {
        let q = p.verdict.unwrap().is_quenched();
        assert!(if p.a <= a.a_lo { !q } else { p.a < a.a_hi || q });
    }
}
