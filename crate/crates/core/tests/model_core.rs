use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use ibrstab::bifurcation::{trace_to_fold, HopfPolicy};
use ibrstab::equilibrium::solve_equilibrium;
use ibrstab::inverter::{InverterSystem, ModelKind};
use ibrstab::line::{line_jacobian_determinant, LineKind};
use ibrstab::linalg::{eigen_decompose, C64};
use ibrstab::model::{DaeEquations, JacobianScheme, Labels, ParametricDae, Real, DEFAULT_FD_STEP};

fn gfl(line: LineKind) -> InverterSystem {
    InverterSystem::nominal(ModelKind::Gfl, line).unwrap()
}

/// x0' = -x0 + y x1, x1' = sin x0 - y^2, 0 = y - (x0^2 + p x1).
struct Toy;

impl DaeEquations for Toy {
    fn residuals<D: Real>(&self, x: &[D], y: &[D], p: &[D], f: &mut [D], g: &mut [D]) {
        f[0] = -x[0] + y[0] * x[1];
        f[1] = x[0].sin() - y[0] * y[0];
        g[0] = y[0] - (x[0] * x[0] + p[0] * x[1]);
    }
}

fn toy() -> ParametricDae {
    ParametricDae::from_equations("toy", Labels::new(&["a", "b"], &["c"], &["k"]), Toy).unwrap()
}

#[test]
fn residuals_vanish_at_solved_equilibrium() {
    for kind in [ModelKind::Gfl, ModelKind::Gfm] {
        for line in [LineKind::Static, LineKind::Dynamic] {
            let sys = InverterSystem::nominal(kind, line).unwrap();
            let p = sys.nominal_params();
            let eq = solve_equilibrium(&sys.dae, p, None).unwrap();
            let r = sys.dae.stacked_residual(&eq.x, &eq.y, p).unwrap();
            assert!(r.amax() <= 1e-10, "{kind}/{line:?}: {}", r.amax());
        }
    }
}

#[test]
fn evaluation_is_bitwise_deterministic() {
    let sys = gfl(LineKind::Dynamic);
    let p = sys.nominal_params();
    let (x, y) = sys.flat_start(p);
    let (f1, g1) = sys.dae.evaluate_residuals(&x, &y, p).unwrap();
    let (f2, g2) = sys.dae.evaluate_residuals(&x, &y, p).unwrap();
    assert!(f1.iter().zip(f2.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!(g1.iter().zip(g2.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn zero_state_gives_finite_residuals() {
    for kind in [ModelKind::Gfl, ModelKind::Gfm] {
        for line in [LineKind::Static, LineKind::Dynamic] {
            let sys = InverterSystem::nominal(kind, line).unwrap();
            let x = DVector::zeros(sys.dae.n_diff());
            let y = DVector::zeros(sys.dae.n_alg());
            let (f, g) = sys.dae.evaluate_residuals(&x, &y, sys.nominal_params()).unwrap();
            assert!(f.iter().chain(g.iter()).all(|v| v.is_finite()));
        }
    }
}

#[test]
fn analytic_jacobian_agrees_with_finite_differences() {
    for kind in [ModelKind::Gfl, ModelKind::Gfm] {
        for line in [LineKind::Static, LineKind::Dynamic] {
            let sys = InverterSystem::nominal(kind, line).unwrap();
            let p = sys.nominal_params();
            let eq = solve_equilibrium(&sys.dae, p, None).unwrap();
            let exact = sys.dae.assemble_jacobians(&eq.x, &eq.y, p, JacobianScheme::Analytic).unwrap();
            let fd = sys
                .dae
                .assemble_jacobians(&eq.x, &eq.y, p, JacobianScheme::FiniteDifference { h: DEFAULT_FD_STEP })
                .unwrap();
            for (a, b) in [
                (&exact.f_x, &fd.f_x),
                (&exact.f_y, &fd.f_y),
                (&exact.g_x, &fd.g_x),
                (&exact.g_y, &fd.g_y),
                (&exact.f_p, &fd.f_p),
                (&exact.g_p, &fd.g_p),
            ] {
                for (u, v) in a.iter().zip(b.iter()) {
                    assert!((u - v).abs() <= f64::max(1e-6, 1e-4 * u.abs()), "{kind}/{line:?}: {u} vs {v}");
                }
            }
        }
    }
}

#[test]
fn dynamic_line_block_determinant() {
    let sys = gfl(LineKind::Dynamic);
    let p = sys.nominal_params();
    let eq = solve_equilibrium(&sys.dae, p, None).unwrap();
    let d = sys.dae.state_index("i_gD").unwrap();
    let q = sys.dae.state_index("i_gQ").unwrap();
    let fx = &eq.jacobian.f_x;
    let det = fx[(d, d)] * fx[(q, q)] - fx[(d, q)] * fx[(q, d)];
    let expected = line_jacobian_determinant(&sys.line_parameters(p));
    assert_relative_eq!(det, expected, max_relative = 1e-9);
}

#[test]
fn diagonal_spectrum_and_vectors() {
    let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, -1.0]));
    let s = eigen_decompose(&a).unwrap();
    let ev = s.eigenvalues();
    assert_eq!(ev[0], C64::new(0.0, 0.0));
    assert_eq!(ev[1], C64::new(-1.0, 0.0));
    let e1 = DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
    assert!((&s.pairs[0].right - &e1).norm() < 1e-14);
    assert!((&s.pairs[0].left - &e1).norm() < 1e-14);
}

#[test]
fn gfl_fold_has_one_isolated_zero_eigenvalue() {
    let sys = gfl(LineKind::Static);
    let i = sys.param_index("p_star").unwrap();
    let scan = sys.coordinate_scan(i, HopfPolicy::Stop).unwrap();
    let fold = trace_to_fold(&sys.dae, sys.nominal_params(), &scan).unwrap().require_fold().unwrap();
    let re: Vec<f64> = fold.spectrum.eigenvalues().iter().map(|m| m.re.abs()).collect();
    assert!(re[0] <= 1e-6, "{}", re[0]);
    assert!(re[1] >= 10.0 * re[0].max(1e-6), "{}", re[1]);
}

fn complex(a: &DMatrix<f64>) -> DMatrix<C64> {
    a.map(|v| C64::new(v, 0.0))
}

proptest! {
    #[test]
    fn eigenvector_residuals_are_small(entries in prop::collection::vec(-1.0f64..1.0, 25)) {
        let a = DMatrix::from_row_slice(5, 5, &entries);
        let ac = complex(&a);
        let scale = a.norm().max(f64::MIN_POSITIVE);
        let s = eigen_decompose(&a).unwrap();
        prop_assert_eq!(s.pairs.len(), 5);
        for pair in &s.pairs {
            let right = &ac * &pair.right - &pair.right * pair.value;
            let left = pair.left.adjoint() * &ac - pair.left.adjoint() * pair.value;
            prop_assert!(right.norm() <= 1e-8 * scale, "right residual {}", right.norm());
            prop_assert!(left.norm() <= 1e-8 * scale, "left residual {}", left.norm());
            prop_assert!((pair.right.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn left_right_vectors_are_biorthogonal(entries in prop::collection::vec(-1.0f64..1.0, 25)) {
        let a = DMatrix::from_row_slice(5, 5, &entries);
        let s = eigen_decompose(&a).unwrap();
        for (i, wi) in s.pairs.iter().enumerate() {
            for (j, vj) in s.pairs.iter().enumerate() {
                if i != j && (wi.value - vj.value).norm() > 1e-3 {
                    let dot = wi.left.dotc(&vj.right).norm();
                    prop_assert!(dot <= 1e-8, "|w{i}^H v{j}| = {dot}");
                }
            }
        }
    }
}

#[test]
fn schur_reduction_matches_closed_form_elimination() {
    let m = toy();
    let (x0, x1, k) = (0.3, -0.7, 1.9);
    let y = x0 * x0 + k * x1;
    let x = DVector::from_vec(vec![x0, x1]);
    let yv = DVector::from_vec(vec![y]);
    let p = DVector::from_vec(vec![k]);
    let b = m.assemble_jacobians(&x, &yv, &p, JacobianScheme::Analytic).unwrap();
    // Reduced field F(x) = f(x, y(x)) differentiated by hand.
    let expected = DMatrix::from_row_slice(
        2,
        2,
        &[-1.0 + 2.0 * x0 * x1, 2.0 * k * x1 + x0 * x0, x0.cos() - 4.0 * y * x0, -2.0 * y * k],
    );
    for (a, e) in b.reduced_a.iter().zip(expected.iter()) {
        assert!((a - e).abs() <= 1e-8 * e.abs().max(1.0), "{a} vs {e}");
    }
    let fp = DVector::from_vec(vec![x1 * x1, -2.0 * y * x1]);
    assert!((b.reduced_fp.column(0) - fp).amax() <= 1e-12);
}

#[test]
fn schur_reduction_matches_eliminated_static_line_model() {
    // Differentiate x -> f(x, y(x)) with y(x) solved from g = 0 and compare
    // against the Schur complement at the GFL operating point.
    let sys = gfl(LineKind::Static);
    let p = sys.nominal_params();
    let eq = solve_equilibrium(&sys.dae, p, None).unwrap();
    let reduced = |x: &DVector<f64>| {
        let y = sys.dae.solve_algebraic(x, &eq.y, p, 1e-14).unwrap();
        sys.dae.evaluate_residuals(x, &y, p).unwrap().0
    };
    let n = sys.dae.n_diff();
    let a = &eq.jacobian.reduced_a;
    let scale = a.amax();
    for j in 0..n {
        let h = 1e-6 * eq.x[j].abs().max(1.0);
        let mut xp = eq.x.clone();
        let mut xm = eq.x.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (reduced(&xp) - reduced(&xm)) / (2.0 * h);
        for i in 0..n {
            assert!((col[i] - a[(i, j)]).abs() <= 1e-8 * scale, "({i},{j}): {} vs {}", col[i], a[(i, j)]);
        }
    }
}

#[test]
fn finite_difference_error_is_second_order() {
    let m = toy();
    let x = DVector::from_vec(vec![0.4, 0.9]);
    let p = DVector::from_vec(vec![1.3]);
    let y = DVector::from_vec(vec![0.5]);
    let exact = m.state_jacobian(&x, &y, &p, JacobianScheme::Analytic).unwrap();
    let err = |h: f64| {
        let fd = m.state_jacobian(&x, &y, &p, JacobianScheme::FiniteDifference { h }).unwrap();
        (fd - &exact).amax()
    };
    let (e1, e2, e3) = (err(0.1), err(0.05), err(0.025));
    assert!((e1 / e2).log2() >= 1.8, "{e1} {e2}");
    assert!((e2 / e3).log2() >= 1.8, "{e2} {e3}");
}
