use proptest::prelude::*;
use quenchlab::exit::{pde_exit_oracle, random_probes, simulate_survival, ExitProblem, OracleGrid};
use quenchlab::{Backend, Error};

fn grid() -> OracleGrid {
    OracleGrid {
        n: 48,
        dt: 2e-3,
        substeps: 1,
        record_every: 5,
    }
}

#[test]
fn monte_carlo_matches_oracle_without_flow() {
    let p = ExitProblem::new(1.0, 0.0, 0.3, 3, 20_000, 0.05).unwrap();
    let q = pde_exit_oracle(&p, OracleGrid { n: 96, dt: 1e-3, substeps: 1, record_every: 1 }, 0.3, Backend::Rayon).unwrap();
    let starts = [(1.2, 1.6), (1.6, 1.6), (2.0, 1.3)];
    let rows = simulate_survival(&p, &starts, &[0.1, 0.3], Backend::Rayon).unwrap();
    for r in &rows {
        let o = q.evaluate(r.t, r.x, r.y);
        assert!((r.q_hat - o).abs() <= 4.0 * r.stderr + 5e-3, "{r:?} vs {o}");
    }
}

#[test]
fn paths_do_not_depend_on_backend() {
    let p = ExitProblem::new(1.0, 30.0, 0.2, 17, 3000, 0.02).unwrap();
    let starts = [(1.5, 1.5), (0.9, 2.0)];
    let a = simulate_survival(&p, &starts, &[0.05, 0.2], Backend::Sequential).unwrap();
    let b = simulate_survival(&p, &starts, &[0.05, 0.2], Backend::Rayon).unwrap();
    assert_eq!(a, b);
    let other = ExitProblem { seed: 18, ..p };
    assert_ne!(simulate_survival(&other, &starts, &[0.2], Backend::Rayon).unwrap()[0].q_hat, a[1].q_hat);
}

#[test]
fn rejects_bad_requests() {
    let p = ExitProblem::new(1.0, 0.0, 0.3, 3, 10, 0.05).unwrap();
    assert!(matches!(simulate_survival(&p, &[(0.05, 0.05)], &[0.1], Backend::Rayon), Err(Error::Geometry(_))));
    assert!(simulate_survival(&p, &[(1.5, 1.5)], &[11.0], Backend::Rayon).is_err());
    assert!(ExitProblem::new(1.0, 0.0, 1.5, 3, 10, 0.05).is_err());
    let q = pde_exit_oracle(&p, grid(), 0.1, Backend::Rayon).unwrap();
    assert!(q.heat_uptake(2.0).is_err());
    assert!(q.lowercell(10.0).is_err());
}

#[test]
fn probes_lie_inside_the_domain() {
    let p = ExitProblem::new(2.0, 5.0, 0.6, 1, 10, 0.05).unwrap();
    let flow = p.flow().unwrap();
    for ((x, y), t) in random_probes(&p, 32, 0.05, 1.0, 4).unwrap() {
        assert!(flow.stream(x, y) > 0.65);
        assert!(t > 0.0 && t <= 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn oracle_is_a_survival_probability(a in 0.0f64..200.0, h0 in 0.05f64..0.5) {
        let p = ExitProblem::new(1.0, a, h0, 1, 1, 0.05).unwrap();
        let q = pde_exit_oracle(&p, grid(), 0.2, Backend::Rayon).unwrap();
        for f in &q.frames {
            prop_assert!(f.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
        }
        let m = q.masses();
        prop_assert!(m.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn monte_carlo_survival_decreases_in_time(seed in 0u64..1000, a in 0.0f64..50.0) {
        let p = ExitProblem::new(1.0, a, 0.3, seed, 500, 0.05).unwrap();
        let rows = simulate_survival(&p, &[(1.5, 1.5)], &[0.0, 0.05, 0.1, 0.4], Backend::Rayon).unwrap();
        prop_assert_eq!(rows[0].q_hat, 1.0);
        prop_assert!(rows.windows(2).all(|w| w[1].q_hat <= w[0].q_hat));
    }
}
