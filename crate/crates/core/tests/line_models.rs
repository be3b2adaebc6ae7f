use std::f64::consts::PI;

use approx::assert_relative_eq;
use nalgebra::DVector;
use proptest::prelude::*;

use ibrstab::bifurcation::{trace_to_fold, FoldPoint, HopfPolicy};
use ibrstab::equilibrium::solve_equilibrium;
use ibrstab::inverter::{InverterSystem, ModelKind};
use ibrstab::line::{
    dynamic_line_residuals, line_jacobian_determinant, static_currents_by_solve, static_line_currents,
    verify_reduction_equivalence, LineKind, LineParameters,
};
use ibrstab::Error;

fn line(r: f64, l: f64, omega_dq: f64) -> LineParameters {
    LineParameters {
        r,
        l,
        v_grid: [1.0, 0.0],
        omega_dq,
        omega_b: 120.0 * PI,
    }
}

#[test]
fn unloaded_line_has_zero_derivatives_and_currents() {
    let p = line(0.02, 0.07, 1.0);
    assert_eq!(dynamic_line_residuals([0.0, 0.0], [1.0, 0.0], &p), [0.0, 0.0]);
    assert_eq!(static_line_currents([1.0, 0.0], &p).unwrap(), [0.0, 0.0]);
}

#[test]
fn derivatives_by_direct_substitution() {
    let p = line(0.02, 0.07, 1.0);
    let d = dynamic_line_residuals([1.0, 0.0], [1.05, 0.0], &p);
    let wb = 120.0 * PI;
    // D: wb/L (1.05 - 1) - (R/L) wb * 1 + 0;  Q: 0 - 0 - wb * 1
    assert_relative_eq!(d[0], wb / 0.07 * 0.05 - 0.02 / 0.07 * wb, max_relative = 1e-13);
    assert_relative_eq!(d[1], -wb, max_relative = 1e-13);
}

#[test]
fn closed_form_equals_linear_solve() {
    let p = line(0.02, 0.07, 1.0);
    let a = static_line_currents([1.05, 0.0], &p).unwrap();
    let b = static_currents_by_solve([1.05, 0.0], &p).unwrap();
    assert!((a[0] - b[0]).abs() <= 1e-12 && (a[1] - b[1]).abs() <= 1e-12, "{a:?} {b:?}");
}

#[test]
fn zero_frequency_limit_is_resistive_division() {
    let p = line(0.02, 0.07, 0.0);
    let a = static_line_currents([1.05, 0.0], &p).unwrap();
    let b = static_currents_by_solve([1.05, 0.0], &p).unwrap();
    assert_relative_eq!(a[0], 0.05 / 0.02, max_relative = 1e-12);
    assert!(a[1].abs() < 1e-12);
    assert!((a[0] - b[0]).abs() <= 1e-12 && (a[1] - b[1]).abs() <= 1e-12);
}

#[test]
fn degenerate_line_is_rejected() {
    let p = LineParameters {
        r: 0.0,
        ..line(0.0, 0.07, 0.0)
    };
    assert!(matches!(static_line_currents([1.05, 0.0], &p), Err(Error::InvalidParameter { .. })));
    assert!(p.validate().is_err());
}

#[test]
fn determinant_examples() {
    let unit = LineParameters {
        r: 0.0,
        l: 0.5,
        v_grid: [1.0, 0.0],
        omega_dq: 1.0,
        omega_b: 1.0,
    };
    assert_eq!(line_jacobian_determinant(&unit), 1.0);
    let nominal = line(0.02, 0.07, 1.0);
    let expected = (1.0 + (0.02f64 / 0.07).powi(2)) * (120.0 * PI).powi(2);
    assert_relative_eq!(line_jacobian_determinant(&nominal), expected, max_relative = 1e-14);
}

proptest! {
    #[test]
    fn static_closure_is_the_dynamic_root(
        vd in 0.5f64..1.5, vq in -0.5f64..0.5,
        r in 0.0f64..1.0, l in 0.01f64..2.0, w in 0.9f64..1.1,
    ) {
        let p = line(r, l, w);
        let i = static_line_currents([vd, vq], &p).unwrap();
        let root = static_currents_by_solve([vd, vq], &p).unwrap();
        prop_assert!((i[0] - root[0]).abs() <= 1e-10 * root[0].abs().max(1.0));
        prop_assert!((i[1] - root[1]).abs() <= 1e-10 * root[1].abs().max(1.0));
        let d = dynamic_line_residuals(i, [vd, vq], &p);
        let scale = p.omega_b / l * (1.0 + i[0].abs() + i[1].abs());
        prop_assert!(d[0].abs() <= 1e-12 * scale && d[1].abs() <= 1e-12 * scale, "{d:?}");
    }

    #[test]
    fn determinant_is_positive(r in 0.0f64..=1.0, l in 1e-3f64..=2.0, w in 0.9f64..=1.1, wb in 1.0f64..400.0) {
        let p = LineParameters { r, l, v_grid: [1.0, 0.0], omega_dq: w, omega_b: wb };
        prop_assert!(line_jacobian_determinant(&p) > 0.0);
    }
}

/// Values of `names` read from `(x, y)` of `sys`.
fn pick(sys: &InverterSystem, x: &DVector<f64>, y: &DVector<f64>, names: &[String]) -> Vec<f64> {
    names
        .iter()
        .map(|n| match sys.dae.state_index(n) {
            Some(i) => x[i],
            None => y[sys.dae.alg_index(n).unwrap()],
        })
        .collect()
}

/// Moves an equilibrium of `from` into the variable layout of `to`.
fn relabel(from: &InverterSystem, to: &InverterSystem, x: &DVector<f64>, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let labels = to.dae.labels();
    (
        DVector::from_vec(pick(from, x, y, &labels.states)),
        DVector::from_vec(pick(from, x, y, &labels.algebraic)),
    )
}

#[test]
fn equilibrium_sets_coincide_at_nominal() {
    for kind in [ModelKind::Gfl, ModelKind::Gfm] {
        let stat = InverterSystem::nominal(kind, LineKind::Static).unwrap();
        let dynm = InverterSystem::nominal(kind, LineKind::Dynamic).unwrap();
        let p = stat.nominal_params();
        let es = solve_equilibrium(&stat.dae, p, None).unwrap();
        let ed = solve_equilibrium(&dynm.dae, p, None).unwrap();

        let (x, y) = relabel(&stat, &dynm, &es.x, &es.y);
        assert!(dynm.dae.stacked_residual(&x, &y, p).unwrap().amax() <= 1e-10, "{kind}: static point in dynamic model");
        let (x, y) = relabel(&dynm, &stat, &ed.x, &ed.y);
        assert!(stat.dae.stacked_residual(&x, &y, p).unwrap().amax() <= 1e-10, "{kind}: dynamic point in static model");
        assert!((x - &es.x).amax() <= 1e-8 && (y - &es.y).amax() <= 1e-8);
    }
}

fn fold(sys: &InverterSystem, name: &str) -> FoldPoint {
    let i = sys.param_index(name).unwrap();
    let scan = sys.coordinate_scan(i, HopfPolicy::Record).unwrap();
    trace_to_fold(&sys.dae, sys.nominal_params(), &scan).unwrap().require_fold().unwrap()
}

#[test]
fn folds_coincide_across_line_models() {
    for (kind, name) in [(ModelKind::Gfl, "p*"), (ModelKind::Gfl, "q*"), (ModelKind::Gfm, "V0")] {
        let stat = InverterSystem::nominal(kind, LineKind::Static).unwrap();
        let dynm = InverterSystem::nominal(kind, LineKind::Dynamic).unwrap();
        let fs = fold(&stat, name);
        let fd = fold(&dynm, name);
        let rep = verify_reduction_equivalence(&dynm.dae, &stat.dae, &fd, &fs).unwrap();
        assert!(rep.lambda_relative <= 1e-4, "{kind} {name}: {}", rep.lambda_relative);
        assert!(rep.shared_state_difference <= 1e-6, "{kind} {name}: {}", rep.shared_state_difference);
        assert!(rep.dynamic_rank_ok && rep.static_rank_ok);
        assert_eq!(rep.shared.len(), stat.dae.n_diff() + stat.dae.n_alg());

        // The fold of one model is an equilibrium of the other.
        let (x, y) = relabel(&stat, &dynm, &fs.x, &fs.y);
        assert!(dynm.dae.stacked_residual(&x, &y, &fs.params).unwrap().amax() <= 1e-9);
    }
}

#[test]
fn different_directions_violate_the_contract() {
    let stat = InverterSystem::nominal(ModelKind::Gfl, LineKind::Static).unwrap();
    let dynm = InverterSystem::nominal(ModelKind::Gfl, LineKind::Dynamic).unwrap();
    let err = verify_reduction_equivalence(&dynm.dae, &stat.dae, &fold(&dynm, "p*"), &fold(&stat, "q*")).unwrap_err();
    assert!(matches!(err, Error::Contract(_)));
}
