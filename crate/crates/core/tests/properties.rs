use std::sync::OnceLock;

use proptest::prelude::*;

use nsfem::assembly::AssembledSystem;
use nsfem::elements::ElementPair;
use nsfem::norms::DualNormContext;
use nsfem::solver::{Solver, SolverConfig};
use nsfem::verification::sweeps::level_system;

struct Fixture {
    sys: AssembledSystem,
    ctx: DualNormContext,
}

fn fixture(pair: ElementPair) -> &'static Fixture {
    static TH: OnceLock<Fixture> = OnceLock::new();
    static MINI: OnceLock<Fixture> = OnceLock::new();
    let cell = if pair == ElementPair::TaylorHood { &TH } else { &MINI };
    cell.get_or_init(|| {
        let sys = level_system(4, pair, 5).unwrap();
        let ctx = DualNormContext::new(&sys).unwrap();
        Fixture { sys, ctx }
    })
}

fn pair() -> impl Strategy<Value = ElementPair> {
    prop_oneof![Just(ElementPair::TaylorHood), Just(ElementPair::Mini)]
}

/// A coefficient vector with entries in [-1, 1], zero on Dirichlet dofs.
fn field(f: &Fixture, raw: &[f64]) -> Vec<f64> {
    let n = f.sys.space().n_vel_dofs();
    let mut v: Vec<f64> = (0..n).map(|i| raw[i % raw.len()] * (1.0 + (i % 7) as f64) / 7.0).collect();
    for &i in f.sys.space().dirichlet_dofs() {
        v[i] = 0.0;
    }
    v
}

fn raw() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 1..64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn convection_is_skew(pair in pair(), w in raw(), v in raw()) {
        let f = fixture(pair);
        let (w, v) = (field(f, &w), field(f, &v));
        let n = f.sys.convection(&w).unwrap();
        let scale = f.sys.a_visc.bilinear(&v, &v);
        prop_assert!(n.bilinear(&v, &v).abs() <= 1e-12 * scale.max(1e-300));
    }

    #[test]
    fn divergence_free_dual_norm_is_dominated(pair in pair(), w in raw()) {
        let f = fixture(pair);
        let w = field(f, &w);
        let x = f.ctx.dual_norm_xh(&w).unwrap();
        let v = f.ctx.dual_norm_vh(&w).unwrap();
        prop_assert!(v <= x * (1.0 + 1e-10) + 1e-300);
    }

    #[test]
    fn dual_norms_are_homogeneous(pair in pair(), w in raw(), s in -10.0f64..10.0) {
        let f = fixture(pair);
        let w = field(f, &w);
        let sw: Vec<f64> = w.iter().map(|x| s * x).collect();
        let (a, b) = (f.ctx.dual_norm_xh(&w).unwrap(), f.ctx.dual_norm_xh(&sw).unwrap());
        prop_assert!((b - s.abs() * a).abs() <= 1e-10 * (1.0 + b));
    }

    #[test]
    fn unforced_energy_decays_and_balances(
        pair in pair(),
        log_dt in -3.0f64..1.0,
        amp in 0.1f64..100.0,
        kx in 1usize..3,
    ) {
        let f = fixture(pair);
        let dt = 10f64.powf(log_dt);
        let cfg = SolverConfig::new(1.0, dt, 4).unwrap();
        let k = kx as f64 * std::f64::consts::PI;
        let traj = Solver::new(&f.sys, cfg)
            .unwrap()
            .run(
                |x| [amp * (k * x[0]).sin() * (k * x[1]).sin(), amp * (k * x[0]).cos() * x[1] * (1.0 - x[1])],
                |_, _| [0.0, 0.0],
                |_| Ok(()),
            )
            .unwrap();
        for r in traj.records.windows(2) {
            prop_assert!(r[1].l2_u <= r[0].l2_u * (1.0 + 1e-12));
        }
        prop_assert!(traj.energy_balance().unwrap().relative <= 1e-9);
    }
}
