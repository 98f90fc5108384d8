use std::f64::consts::PI;
use std::sync::OnceLock;

use proptest::prelude::*;

use chflow::experiments::{Problem, Scenario, Shape};
use chflow::functionals::{self, DiagnosticsRecord};
use chflow::grid::{compensated_sum, Field, Grid};
use chflow::io;
use chflow::manifold;
use chflow::potential::{self, PotentialSpec};
use chflow::profiles::{self, BumpProfile, ProfileHandle};
use chflow::solver::{self, SnapshotSchedule, SolverConfig};

fn quartic() -> PotentialSpec {
    potential::quartic()
}

/// Smooth periodic field built from a few low modes.
fn smooth(grid: &Grid, mean: f64, coeffs: &[(f64, f64)]) -> Field {
    let l = grid.half_length();
    Field::from_fn(grid, |x| {
        mean + coeffs
            .iter()
            .enumerate()
            .map(|(j, (a, b))| {
                let k = PI * (j + 1) as f64 / l;
                a * (k * x).cos() + b * (k * x).sin()
            })
            .sum::<f64>()
    })
}

fn coeffs() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-0.3..0.3f64, -0.3..0.3f64), 1..6)
}

fn bump16() -> &'static BumpProfile {
    static W: OnceLock<BumpProfile> = OnceLock::new();
    W.get_or_init(|| profiles::solve_bump(&Grid::new(16.0, 512).unwrap(), &quartic(), 0.0).unwrap())
}

fn step_cfg() -> SolverConfig {
    let mut cfg = SolverConfig::for_potential(&quartic(), 1.0);
    cfg.dt = 1e-2;
    cfg.adapt = false;
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn step_conserves_mean(mean in -0.5..0.5f64, c in coeffs()) {
        let g = Grid::new(8.0, 128).unwrap();
        let u = smooth(&g, mean, &c);
        let v = solver::step(&u, &step_cfg(), &quartic()).unwrap();
        prop_assert!((v.mean() - u.mean()).abs() <= 1e-14);
    }

    #[test]
    fn step_commutes_with_grid_shifts(c in coeffs(), cells in -64isize..64) {
        let g = Grid::new(8.0, 128).unwrap();
        let u = smooth(&g, 0.1, &c);
        let cfg = step_cfg();
        let a = solver::step(&u.roll(cells), &cfg, &quartic()).unwrap();
        let b = solver::step(&u, &cfg, &quartic()).unwrap().roll(cells);
        prop_assert!(a.sub(&b).linf_norm() <= 1e-12);
    }

    #[test]
    fn energy_and_dissipation_are_translation_invariant(c in coeffs(), s in -8.0..8.0f64) {
        let g = Grid::new(8.0, 128).unwrap();
        let p = quartic();
        let u = smooth(&g, -0.2, &c);
        let v = u.translate(s);
        let (e0, e1) = (functionals::energy(&u, &p), functionals::energy(&v, &p));
        let (d0, d1) = (functionals::dissipation(&u, &p), functionals::dissipation(&v, &p));
        prop_assert!((e0 - e1).abs() <= 1e-10 * e0.abs().max(1.0));
        prop_assert!((d0 - d1).abs() <= 1e-8 * d0.abs().max(1.0));
    }

    #[test]
    fn parseval(mean in -1.0..1.0f64, c in coeffs()) {
        let g = Grid::new(5.0, 64).unwrap();
        let u = smooth(&g, mean, &c);
        let fourier = g.dx() / g.n() as f64 * compensated_sum(u.spectrum().iter().map(|z| z.norm_sqr()));
        let real = u.l2_norm().powi(2);
        prop_assert!((fourier - real).abs() <= 1e-12 * real.max(1.0));
    }

    #[test]
    fn bump_translates_carry_no_mass(a in -16.0..16.0f64) {
        let w = bump16();
        let d = w.samples().sub(w.translated(a).samples());
        prop_assert!(d.integral().abs() <= 1e-10);
    }

    #[test]
    fn bump_projection_recovers_shift(c in -15.0..15.0f64) {
        let w = bump16();
        let u = w.translated(c).samples().clone();
        let r = manifold::project_bump(&u, w).unwrap();
        let ProfileHandle::Bump { c: found } = r.handle else { panic!("{:?}", r.handle) };
        let g = u.grid();
        prop_assert!(g.periodic_delta(found, c).abs() <= 1e-8, "{found} vs {c}");
    }

    #[test]
    fn bump_projection_is_locally_optimal(c in -15.0..15.0f64, c1 in coeffs(), delta in 0.05..2.0f64) {
        let w = bump16();
        let u = w.translated(c).samples().add(&smooth(w.grid(), 0.0, &c1).scale(0.2));
        let r = manifold::project_bump(&u, w).unwrap();
        let ProfileHandle::Bump { c: found } = r.handle else { panic!("{:?}", r.handle) };
        let dist = |a: f64| u.sub(w.translated(a).samples()).l2_norm();
        let best = dist(found);
        prop_assert!((best - r.objective).abs() <= 1e-8 * best.max(1.0));
        prop_assert!(best <= dist(found + delta) + 1e-12);
        prop_assert!(best <= dist(found - delta) + 1e-12);
    }

    #[test]
    fn excess_mass_is_a_distance(c in coeffs(), c2 in coeffs()) {
        let g = Grid::new(8.0, 128).unwrap();
        let u = smooth(&g, 0.0, &c);
        let v = smooth(&g, 0.0, &c2);
        let ab = functionals::excess_mass(&u, &v);
        let ba = functionals::excess_mass(&v, &u);
        prop_assert!(ab >= 0.0 && (ab - ba).abs() <= 1e-12);
        prop_assert!(functionals::excess_mass(&u, &u) == 0.0);
    }

    #[test]
    fn config_round_trips(
        problem in prop_oneof![Just(Problem::TorusBump), Just(Problem::LineBump), Just(Problem::SubTwoEStar)],
        amplitude in 0.05..1.0f64,
        dip in any::<bool>(),
        seed in any::<u32>(),
        noise in 0.0..1e-3f64,
        tol in 1e-9..1e-6f64,
        per_decade in 4usize..40,
    ) {
        let mut s = Scenario::reference(problem);
        s.disturbance.amplitude = amplitude;
        s.disturbance.shape = if dip { Shape::Dip } else { Shape::Bump };
        s.seed = seed as u64;
        s.noise = noise;
        s.solver.tolerance = tol;
        s.solver.schedule = SnapshotSchedule::LogSpaced { t_first: 1e-2, per_decade };
        let text = io::emit_config(&s);
        let back = io::parse_config_str(&text).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(io::config_hash(&back), io::config_hash(&s));
    }

    #[test]
    fn series_csv_round_trips_bit_exactly(rows in prop::collection::vec(
        (0.0..1e4f64, prop::array::uniform12(prop_oneof![Just(f64::NAN), -1e6..1e6f64, Just(1e-300), Just(-0.0)]), any::<bool>()),
        0..20,
    )) {
        let series: Vec<DiagnosticsRecord> = rows
            .iter()
            .map(|(t, v, trusted)| DiagnosticsRecord {
                t: *t,
                energy: v[0],
                dissipation: v[1],
                gap_bump: v[2],
                gap_glued: v[3],
                v: v[4],
                v_tilde: v[5],
                v_minus: v[6],
                shift_c: v[7],
                zero_a: v[8],
                zero_b: v[9],
                xi_sup: v[10],
                linf_f: v[11],
                trusted: *trusted,
            })
            .collect();
        let back = io::parse_series_csv(&io::series_to_csv(&series)).unwrap();
        prop_assert_eq!(back.len(), series.len());
        for (a, b) in back.iter().zip(&series) {
            prop_assert!(a.bit_eq(b));
        }
    }
}
