use proptest::prelude::*;

use sweeper_core::control::{ControlPath, ControlSetFamily};
use sweeper_core::dynamics::{check_bounds, integrate_penalized};
use sweeper_core::geometry::{PenaltySchedule, SetConstants, Shape, SublevelSet, Vector};
use sweeper_core::model::{AffineField, Model, Potential};
use sweeper_core::oracle::proj_c;
use sweeper_core::sets::Primitive;
use sweeper_core::stiff::StepControl;

fn disk() -> SublevelSet {
    SublevelSet::new(Shape::Ball { center: Vector::zeros(2), radius: 1.0 }, 0.9, SetConstants::default()).unwrap()
}

/// Constant drift `c` in the unit disk.
fn drift_model(c: [f64; 2]) -> Model {
    let mbar = (c[0] * c[0] + c[1] * c[1]).sqrt().max(0.1);
    Model::new(
        disk(),
        AffineField::constant(Vector::from_row_slice(&c), 1),
        Potential::zero(2),
        ControlSetFamily::constant(Primitive::Box { lo: vec![0.0], hi: vec![0.0] }),
        mbar,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projection_lands_in_set_and_is_idempotent(x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let set = disk();
        let p = proj_c(&set, &Vector::from_row_slice(&[x, y])).unwrap();
        prop_assert!(set.psi(&p) <= 1e-12);
        let q = proj_c(&set, &p).unwrap();
        prop_assert!((&p - &q).norm() <= 1e-12);
        if x * x + y * y <= 1.0 {
            prop_assert!((p[0] - x).abs() + (p[1] - y).abs() == 0.0);
        } else {
            prop_assert!((p.norm() - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn schedule_identity_holds(mbar in 0.1f64..5.0, eta in 0.1f64..1.0, k in 1usize..12) {
        let s = PenaltySchedule::geometric(mbar, eta, None, k).unwrap();
        for i in 0..s.len() {
            prop_assert!(s.identity_defect(i) <= 1e-12);
            prop_assert!(s.alphas[i] > 0.0);
        }
        // alpha_0 = alpha_1 when gamma_0 = 4 Mbar / eta, strictly smaller after
        prop_assert!(s.alphas.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn penalised_runs_stay_inside_with_bounded_multiplier(
        c0 in -1.5f64..1.5,
        c1 in -1.5f64..1.5,
        r in 0.0f64..0.9,
        th in 0.0f64..std::f64::consts::TAU,
        lg in 1.5f64..4.0,
    ) {
        let model = drift_model([c0, c1]);
        let gamma = 10f64.powf(lg);
        let Ok(schedule) = PenaltySchedule::new(vec![gamma], model.mbar, model.set.eta) else {
            // gamma below 2 Mbar / eta has no alpha
            return Ok(());
        };
        let x0 = Vector::from_row_slice(&[r * th.cos(), r * th.sin()]);
        let u = ControlPath::constant(&[0.0], 11);
        let run = integrate_penalized(&model, gamma, &x0, &u, &StepControl::default(), 201).unwrap();
        prop_assert!(run.diagnostics.max_psi <= 1e-8);
        let started = model.set.in_ck(schedule.alphas[0], &x0);
        let b = check_bounds(&model, &run, &schedule, started);
        if started {
            prop_assert!(b.passed(1e-6, 1e-8), "{b:?}");
        }
    }
}
