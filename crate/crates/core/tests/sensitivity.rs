use nalgebra::DVector;

use ibrstab::bifurcation::{trace_to_fold, FoldPoint, HopfPolicy, ScanSpec};
use ibrstab::inverter::{InverterSystem, ModelKind};
use ibrstab::line::LineKind;
use ibrstab::model::{DaeEquations, Labels, ParametricDae, Real};
use ibrstab::sensitivity::{
    analyze_fold, compare_margin, estimate_margin, hypersurface_tangent, margin_sensitivity, normal_vector,
    sensitivity_table, true_margin, Orientation,
};
use ibrstab::Error;

fn system(kind: ModelKind, line: LineKind) -> InverterSystem {
    InverterSystem::nominal(kind, line).unwrap()
}

fn scan(sys: &InverterSystem, name: &str) -> ScanSpec {
    sys.coordinate_scan(sys.param_index(name).unwrap(), HopfPolicy::Record).unwrap()
}

fn fold(sys: &InverterSystem, name: &str) -> FoldPoint {
    trace_to_fold(&sys.dae, sys.nominal_params(), &scan(sys, name)).unwrap().require_fold().unwrap()
}

/// x' = sum(lambda) - x^2
struct Saddle;

impl DaeEquations for Saddle {
    fn residuals<D: Real>(&self, x: &[D], _y: &[D], p: &[D], f: &mut [D], _g: &mut [D]) {
        f[0] = p.iter().fold(D::from(0.0), |a, b| a + *b) - x[0] * x[0];
    }
}

fn saddle(m: usize) -> ParametricDae {
    let labels = Labels {
        states: vec!["x".into()],
        algebraic: vec![],
        params: (0..m).map(|i| format!("lambda{i}")).collect(),
    };
    ParametricDae::from_equations("saddle", labels, Saddle)
        .unwrap()
        .with_initial_guess(|p| (DVector::from_vec(vec![p.iter().sum::<f64>().max(0.0).sqrt()]), DVector::zeros(0)))
}

#[test]
fn scalar_normal_form_points_toward_disappearance() {
    let m = saddle(1);
    let spec = ScanSpec::coordinate(1, 0, 1.0, -1.0, 1.0).unwrap();
    let f = trace_to_fold(&m, &DVector::from_vec(vec![1.0]), &spec).unwrap().require_fold().unwrap();
    let n = normal_vector(&m, &f).unwrap();
    assert_eq!(n.orientation, Orientation::Disappearance);
    assert!((n.vector[0] + 1.0).abs() < 1e-12, "{}", n.vector[0]);
}

#[test]
fn two_parameter_normal_form_is_diagonal() {
    let m = saddle(2);
    let p0 = DVector::from_vec(vec![0.5, 0.5]);
    let spec = ScanSpec::along(DVector::from_vec(vec![-1.0, 0.0]), 2.0).unwrap();
    let f = trace_to_fold(&m, &p0, &spec).unwrap().require_fold().unwrap();
    assert!(f.params.sum().abs() < 1e-10);
    let n = normal_vector(&m, &f).unwrap();
    let h = -1.0 / 2f64.sqrt();
    assert!((n.vector[0] - h).abs() < 1e-12 && (n.vector[1] - h).abs() < 1e-12, "{:?}", n.vector);
    // Along k = (-1, 0) the margin moves one-for-one with lambda1.
    let rep = analyze_fold(&m, f, &[0, 1]).unwrap();
    assert_eq!(rep.controls, vec![1]);
    assert!((rep.sensitivity[0] - 1.0).abs() < 1e-12);
}

#[test]
fn normals_have_unit_length() {
    for (kind, name) in [(ModelKind::Gfl, "p*"), (ModelKind::Gfl, "q*"), (ModelKind::Gfm, "V0"), (ModelKind::Gfm, "R")]
    {
        let sys = system(kind, LineKind::Static);
        let n = normal_vector(&sys.dae, &fold(&sys, name)).unwrap();
        assert!((n.vector.norm() - 1.0).abs() <= 1e-12);
        assert!(n.raw_norm > 1e-10);
    }
}

#[test]
fn moving_along_the_normal_shrinks_the_margin() {
    for (kind, name) in [(ModelKind::Gfl, "p*"), (ModelKind::Gfm, "V0")] {
        let sys = system(kind, LineKind::Static);
        let spec = scan(&sys, name);
        let f = fold(&sys, name);
        let n = normal_vector(&sys.dae, &f).unwrap();
        let eps = 1e-3;
        let shifted = true_margin(&sys.dae, &(&f.base + &n.vector * eps), &spec).unwrap();
        assert!(shifted < f.margin(), "{kind} {name}: {shifted} vs {}", f.margin());
        let back = true_margin(&sys.dae, &(&f.base - &n.vector * eps), &spec).unwrap();
        assert!(back > f.margin());
    }
}

#[test]
fn tangential_direction_is_rejected() {
    let n = DVector::from_vec(vec![1.0, 0.0]);
    let k = DVector::from_vec(vec![0.0, 1.0]);
    assert!(matches!(margin_sensitivity(&n, &k, &[0]), Err(Error::Tangency { .. })));
}

#[test]
fn zero_step_returns_the_old_margin() {
    let sys = system(ModelKind::Gfl, LineKind::Static);
    let rep = analyze_fold(&sys.dae, fold(&sys, "p*"), &sys.table_columns()).unwrap();
    let q = sys.param_index("q*").unwrap();
    assert_eq!(estimate_margin(&rep, q, 0.0).unwrap(), rep.margin);
    let p = sys.param_index("p*").unwrap();
    assert!(matches!(estimate_margin(&rep, p, 0.1), Err(Error::Contract(_))));
}

#[test]
fn recomputing_at_the_nominal_value_has_no_error() {
    let sys = system(ModelKind::Gfl, LineKind::Static);
    let spec = scan(&sys, "p*");
    let rep = analyze_fold(&sys.dae, fold(&sys, "p*"), &sys.table_columns()).unwrap();
    let q = sys.param_index("q*").unwrap();
    let c = compare_margin(&sys.dae, &rep, &spec, q, 0.5).unwrap();
    assert!(c.error <= 1e-9, "{}", c.error);
}

#[test]
fn estimate_error_is_second_order() {
    for kind in [ModelKind::Gfl, ModelKind::Gfm] {
        let sys = system(kind, LineKind::Static);
        let spec = scan(&sys, "p*");
        let rep = analyze_fold(&sys.dae, fold(&sys, "p*"), &sys.table_columns()).unwrap();
        let q = sys.param_index("q*").unwrap();
        let q0 = sys.nominal_params()[q];
        let errs: Vec<f64> = [0.2, 0.1, 0.05]
            .iter()
            .map(|d| compare_margin(&sys.dae, &rep, &spec, q, q0 + d).unwrap().error)
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.8, "{kind}: errors {errs:?}, order {order}");
        }
    }
}

#[test]
fn normal_is_orthogonal_to_the_fold_hypersurface() {
    for (kind, name, secondary) in [
        (ModelKind::Gfl, "p*", "q*"),
        (ModelKind::Gfl, "q*", "p*"),
        (ModelKind::Gfm, "V0", "p*"),
        (ModelKind::Gfm, "p*", "q*"),
    ] {
        let sys = system(kind, LineKind::Static);
        let f = fold(&sys, name);
        let n = normal_vector(&sys.dae, &f).unwrap();
        let t = hypersurface_tangent(&sys.dae, &f, sys.param_index(secondary).unwrap()).unwrap();
        let dot = n.vector.dot(&(&t / t.norm()));
        assert!(dot.abs() <= 1e-6, "{kind} {name}/{secondary}: {dot}");
    }
}

#[test]
fn rows_agree_across_line_models() {
    for (kind, rows) in [(ModelKind::Gfl, vec!["p*", "q*"]), (ModelKind::Gfm, vec!["V0", "p*", "L", "R"])] {
        let stat = system(kind, LineKind::Static);
        let dynm = system(kind, LineKind::Dynamic);
        let cols = stat.table_columns();
        let scans: Vec<ScanSpec> = rows.iter().map(|r| scan(&stat, r)).collect();
        let ts = sensitivity_table(&stat.dae, stat.nominal_params(), &scans, &cols);
        let td = sensitivity_table(&dynm.dae, dynm.nominal_params(), &scans, &cols);
        for (i, row) in rows.iter().enumerate() {
            for &c in &cols {
                let (a, b) = (ts.entry(i, c), td.entry(i, c));
                assert_eq!(a.is_some(), b.is_some());
                if let (Some(a), Some(b)) = (a, b) {
                    if a.abs() >= 1e-3 {
                        assert!((a - b).abs() <= 0.02 * a.abs(), "{kind} {row}/{}: {a} vs {b}", stat.param_name(c));
                    } else {
                        assert!(b.abs() < 1e-3);
                    }
                }
            }
        }
    }
}

#[test]
fn cause_columns_are_blank() {
    let sys = system(ModelKind::Gfl, LineKind::Static);
    let cols = sys.table_columns();
    let t = sensitivity_table(&sys.dae, sys.nominal_params(), &[scan(&sys, "p*"), scan(&sys, "kp_pll")], &cols);
    let p = sys.param_index("p*").unwrap();
    let q = sys.param_index("q*").unwrap();
    assert!(t.entry(0, p).is_none());
    assert!(t.entry(0, q).is_some());
    assert!(matches!(t.rows[1].result, Err(Error::NoFold { .. })));
}
