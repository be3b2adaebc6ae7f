//! Series RL line between the inverter's filter capacitor and an infinite bus.
//!
//! The line is either dynamic (two current states in the global DQ frame) or
//! static (its steady-state closure, currents as explicit functions of the
//! capacitor voltage). Both give the same equilibria and the same folds.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bifurcation::{rank_deficient_by_one, FoldPoint};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{ParametricDae, Real};

/// Line representation attached to an inverter model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineKind {
    Static,
    Dynamic,
}

impl LineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LineKind::Static => "static",
            LineKind::Dynamic => "dynamic",
        }
    }
}

impl std::str::FromStr for LineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "static" => Ok(LineKind::Static),
            "dynamic" => Ok(LineKind::Dynamic),
            other => Err(Error::Config(format!("unknown line model `{other}` (expected static or dynamic)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineParameters {
    pub r: f64,
    pub l: f64,
    pub v_grid: [f64; 2],
    pub omega_dq: f64,
    pub omega_b: f64,
}

impl LineParameters {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, reason: &str| {
            Err(Error::InvalidParameter {
                name: name.to_string(),
                reason: reason.to_string(),
            })
        };
        if !(self.l > 0.0) {
            return bad("l", "line inductance must be positive");
        }
        if !(self.r >= 0.0) {
            return bad("r", "line resistance must be non-negative");
        }
        if self.omega_dq == 0.0 && self.r == 0.0 {
            return bad("omega_dq", "omega_dq and R/L cannot both vanish");
        }
        Ok(())
    }
}

/// Time derivatives of the line currents `(i_gD, i_gQ)`.
pub fn line_derivatives<D: Real>(i_g: [D; 2], v_c: [D; 2], r: D, l: D, v_g: [D; 2], w_dq: D, w_b: D) -> [D; 2] {
    let a = w_b / l;
    let damp = r / l * w_b;
    [
        a * (v_c[0] - v_g[0]) - damp * i_g[0] + w_dq * w_b * i_g[1],
        a * (v_c[1] - v_g[1]) - damp * i_g[1] - w_dq * w_b * i_g[0],
    ]
}

/// Steady-state line currents for a given capacitor voltage.
pub fn static_currents<D: Real>(v_c: [D; 2], r: D, l: D, v_g: [D; 2], w_dq: D) -> [D; 2] {
    let rl = r / l;
    let den = l * (w_dq * w_dq + rl * rl);
    let dd = v_c[0] - v_g[0];
    let dq = v_c[1] - v_g[1];
    [(rl * dd + w_dq * dq) / den, (rl * dq - w_dq * dd) / den]
}

pub fn dynamic_line_residuals(i_g: [f64; 2], v_c: [f64; 2], params: &LineParameters) -> [f64; 2] {
    line_derivatives(i_g, v_c, params.r, params.l, params.v_grid, params.omega_dq, params.omega_b)
}

pub fn static_line_currents(v_c: [f64; 2], params: &LineParameters) -> Result<[f64; 2]> {
    let rl = params.r / params.l;
    if !(params.omega_dq * params.omega_dq + rl * rl > 0.0) {
        return Err(Error::InvalidParameter {
            name: "omega_dq".into(),
            reason: "degenerate line: omega_dq^2 + (R/L)^2 = 0".into(),
        });
    }
    Ok(static_currents(v_c, params.r, params.l, params.v_grid, params.omega_dq))
}

/// Determinant of the line-current block of the dynamic line Jacobian.
pub fn line_jacobian_determinant(params: &LineParameters) -> f64 {
    let rl = params.r / params.l;
    (params.omega_dq * params.omega_dq + rl * rl) * params.omega_b * params.omega_b
}

/// The 2x2 Jacobian of the line derivatives with respect to `(i_gD, i_gQ)`.
pub fn line_current_jacobian(params: &LineParameters) -> DMatrix<f64> {
    let d = params.r / params.l * params.omega_b;
    let c = params.omega_dq * params.omega_b;
    DMatrix::from_row_slice(2, 2, &[-d, c, -c, -d])
}

/// Solves the steady-state line equations as a dense linear system; used to
/// cross-check the closed form.
pub fn static_currents_by_solve(v_c: [f64; 2], params: &LineParameters) -> Option<[f64; 2]> {
    let zero = dynamic_line_residuals([0.0, 0.0], v_c, params);
    let jac = line_current_jacobian(params);
    let rhs = DVector::from_vec(vec![-zero[0], -zero[1]]);
    let i = crate::linalg::lu_solve(&jac, &rhs)?;
    Some([i[0], i[1]])
}

/// Comparison of one fold located with the dynamic and with the static line.
#[derive(Debug, Clone, Serialize)]
pub struct ReductionReport {
    /// Largest componentwise difference between the two critical parameter vectors.
    pub lambda_difference: f64,
    /// `lambda_difference` relative to the largest scanned coordinate at the static fold.
    pub lambda_relative: f64,
    /// Labels present in both models (states or algebraic variables).
    pub shared: Vec<String>,
    /// Largest absolute difference over the shared variables.
    pub shared_state_difference: f64,
    pub dynamic_rank_ok: bool,
    pub static_rank_ok: bool,
}

fn variables(model: &ParametricDae, fold: &FoldPoint) -> Vec<(String, f64)> {
    let labels = model.labels();
    labels
        .states
        .iter()
        .cloned()
        .zip(fold.x.iter().copied())
        .chain(labels.algebraic.iter().cloned().zip(fold.y.iter().copied()))
        .collect()
}

/// Checks that a fold of the dynamic-line model and one of the static-line
/// model are the same point: same critical parameters, same values for every
/// variable the two models share, and a one-dimensional kernel in both.
pub fn verify_reduction_equivalence(
    model_dyn: &ParametricDae,
    model_stat: &ParametricDae,
    fold_dyn: &FoldPoint,
    fold_stat: &FoldPoint,
) -> Result<ReductionReport> {
    let unit = |k: &DVector<f64>| k / k.norm();
    if fold_dyn.direction.len() != fold_stat.direction.len()
        || fold_dyn.base.len() != fold_stat.base.len()
        || (unit(&fold_dyn.direction) - unit(&fold_stat.direction)).amax() > 1e-12
    {
        return Err(Error::Contract("folds were located along different parameter directions".into()));
    }
    let lambda_difference = (&fold_dyn.params - &fold_stat.params).amax();
    let scale = fold_stat
        .params
        .iter()
        .zip(fold_stat.direction.iter())
        .filter(|(_, k)| **k != 0.0)
        .map(|(p, _)| p.abs())
        .fold(0.0, f64::max);
    let lambda_relative = if scale > 0.0 { lambda_difference / scale } else { lambda_difference };

    let stat_vars = variables(model_stat, fold_stat);
    let mut shared = Vec::new();
    let mut shared_state_difference: f64 = 0.0;
    for (name, value) in variables(model_dyn, fold_dyn) {
        if let Some((_, other)) = stat_vars.iter().find(|(n, _)| *n == name) {
            shared_state_difference = shared_state_difference.max((value - other).abs());
            shared.push(name);
        }
    }

    Ok(ReductionReport {
        lambda_difference,
        lambda_relative,
        shared,
        shared_state_difference,
        dynamic_rank_ok: rank_deficient_by_one(&linalg::singular_values(&fold_dyn.bundle.reduced_a)),
        static_rank_ok: rank_deficient_by_one(&linalg::singular_values(&fold_stat.bundle.reduced_a)),
    })
}
