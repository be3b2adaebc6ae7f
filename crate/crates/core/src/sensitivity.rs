//! Normal vectors to the fold hypersurface and margin sensitivities.
//!
//! At a fold `(x*, y*, lambda*)` the hypersurface normal is proportional to
//! `w^T F_lambda` of the reduced field. Oriented toward the side where the
//! equilibrium disappears, it gives the first-order change of the margin
//! when a control parameter moves.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::bifurcation::{moore_spence_polish, nondegeneracy_value, trace_to_fold, FoldPoint, FoldSeed, ScanSpec};
use crate::equilibrium::{newton_solve, NewtonOptions};
use crate::error::{Error, Result};
use crate::model::ParametricDae;

/// Parameter step used by the disappearance test.
pub const ORIENTATION_STEP: f64 = 1e-4;
pub const TRANSVERSALITY_TOL: f64 = 1e-10;
pub const TANGENCY_TOL: f64 = 1e-10;
/// Relative step for probing the fold hypersurface.
pub const TANGENT_STEP: f64 = 1e-3;

/// How the sign of the normal was fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Equilibria found on exactly one side of the fold.
    Disappearance,
    /// Both or neither side solved; sign taken from `w^T D^2F[v, v]`.
    Curvature,
}

#[derive(Debug, Clone)]
pub struct Normal {
    /// Unit normal pointing away from the existing equilibria.
    pub vector: DVector<f64>,
    /// `|w^T F_lambda|` before scaling.
    pub raw_norm: f64,
    pub orientation: Orientation,
}

fn equilibrium_nearby(model: &ParametricDae, fold: &FoldPoint, p: &DVector<f64>, xi: f64) -> bool {
    let opts = NewtonOptions {
        max_iter: 30,
        ..NewtonOptions::default()
    };
    let vy = fold.bundle.lift(&fold.v);
    let reach = 5.0 * xi * fold.v.amax().max(vy.amax()) + 1e-8;
    [xi, -xi].iter().any(|&t| {
        let x0 = &fold.x + &fold.v * t;
        let y0 = &fold.y + &vy * t;
        match newton_solve(model, p, &x0, &y0, &opts) {
            Ok(sol) => (&sol.x - &fold.x).amax().max((&sol.y - &fold.y).amax()) <= reach,
            Err(_) => false,
        }
    })
}

/// Unit normal of the fold hypersurface at `fold`, oriented so that
/// `lambda* + eps N` has no nearby equilibrium.
pub fn normal_vector(model: &ParametricDae, fold: &FoldPoint) -> Result<Normal> {
    let r = fold.bundle.reduced_fp.tr_mul(&fold.w);
    let raw_norm = r.norm();
    if !(raw_norm >= TRANSVERSALITY_TOL) {
        return Err(Error::Transversality { norm: raw_norm });
    }
    let unit = &r / raw_norm;
    let nd = match &fold.checks {
        Some(c) if c.nondegeneracy.is_finite() => c.nondegeneracy,
        _ => nondegeneracy_value(model, fold).unwrap_or(f64::NAN),
    };

    // Along +unit the reduced field gains eps |r| in the w direction, so the
    // two branches sit near x* +- xi v with xi = sqrt(2 eps |r| / |nd|).
    let eps = ORIENTATION_STEP;
    let xi = if nd.is_finite() && nd != 0.0 {
        (2.0 * eps * raw_norm / nd.abs()).sqrt()
    } else {
        eps.sqrt()
    };
    let plus = equilibrium_nearby(model, fold, &(&fold.params + &unit * eps), xi);
    let minus = equilibrium_nearby(model, fold, &(&fold.params - &unit * eps), xi);
    let (sign, orientation) = match (plus, minus) {
        (true, false) => (-1.0, Orientation::Disappearance),
        (false, true) => (1.0, Orientation::Disappearance),
        _ if nd.is_finite() && nd != 0.0 => (nd.signum(), Orientation::Curvature),
        _ => {
            return Err(Error::Degenerate(
                "cannot orient the normal: disappearance test inconclusive and curvature vanishes".into(),
            ))
        }
    };
    Ok(Normal {
        vector: unit * sign,
        raw_norm,
        orientation,
    })
}

/// Indices with a nonzero direction component.
pub fn cause_set(direction: &DVector<f64>) -> Vec<usize> {
    direction.iter().enumerate().filter(|(_, k)| **k != 0.0).map(|(i, _)| i).collect()
}

/// Margin sensitivities `-|k| N_c / (k^T N)` for each index in `controls`.
pub fn margin_sensitivity(normal: &DVector<f64>, direction: &DVector<f64>, controls: &[usize]) -> Result<DVector<f64>> {
    let kn = direction.dot(normal);
    if !(kn.abs() >= TANGENCY_TOL) {
        return Err(Error::Tangency { value: kn });
    }
    let scale = -direction.norm() / kn;
    Ok(DVector::from_iterator(controls.len(), controls.iter().map(|&c| scale * normal[c])))
}

#[derive(Debug, Clone)]
pub struct SensitivityReport {
    pub fold: FoldPoint,
    pub normal: Normal,
    pub margin: f64,
    pub direction: DVector<f64>,
    pub causes: Vec<usize>,
    /// Control parameters, excluding the causes.
    pub controls: Vec<usize>,
    pub sensitivity: DVector<f64>,
}

impl SensitivityReport {
    pub fn sensitivity_of(&self, param: usize) -> Option<f64> {
        self.controls.iter().position(|&c| c == param).map(|i| self.sensitivity[i])
    }
}

/// Normal and sensitivities at `fold` with respect to `controllable` minus the causes.
pub fn analyze_fold(model: &ParametricDae, fold: FoldPoint, controllable: &[usize]) -> Result<SensitivityReport> {
    let normal = normal_vector(model, &fold)?;
    let causes = cause_set(&fold.direction);
    let controls: Vec<usize> = controllable.iter().copied().filter(|c| !causes.contains(c)).collect();
    let sensitivity = margin_sensitivity(&normal.vector, &fold.direction, &controls)?;
    Ok(SensitivityReport {
        margin: fold.margin(),
        direction: fold.direction.clone(),
        fold,
        normal,
        causes,
        controls,
        sensitivity,
    })
}

/// First-order margin after moving control `param` by `delta`.
pub fn estimate_margin(report: &SensitivityReport, param: usize, delta: f64) -> Result<f64> {
    let d = report
        .sensitivity_of(param)
        .ok_or_else(|| Error::Contract(format!("parameter #{param} is not in the control set")))?;
    Ok(report.margin + d * delta)
}

/// Margin recomputed by continuation from a shifted operating point.
pub fn true_margin(model: &ParametricDae, p0_new: &DVector<f64>, scan: &ScanSpec) -> Result<f64> {
    Ok(trace_to_fold(model, p0_new, scan)?.require_fold()?.margin())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MarginComparison {
    pub control_value: f64,
    pub estimate: f64,
    pub true_margin: f64,
    pub error: f64,
}

/// Estimate against recomputation when control `param` is set to `value`.
pub fn compare_margin(
    model: &ParametricDae,
    report: &SensitivityReport,
    scan: &ScanSpec,
    param: usize,
    value: f64,
) -> Result<MarginComparison> {
    let base = &report.fold.base;
    let estimate = estimate_margin(report, param, value - base[param])?;
    let mut p0 = base.clone();
    p0[param] = value;
    let true_margin = true_margin(model, &p0, scan)?;
    Ok(MarginComparison {
        control_value: value,
        estimate,
        true_margin,
        error: (estimate - true_margin).abs(),
    })
}

#[derive(Debug)]
pub struct SensitivityRow {
    pub scan: ScanSpec,
    pub result: Result<SensitivityReport>,
}

#[derive(Debug)]
pub struct SensitivityTable {
    pub columns: Vec<usize>,
    pub rows: Vec<SensitivityRow>,
}

impl SensitivityTable {
    /// `None` for a cause column or a failed row.
    pub fn entry(&self, row: usize, column: usize) -> Option<f64> {
        self.rows[row].result.as_ref().ok()?.sensitivity_of(column)
    }
}

/// One row per scan, each traced to its fold and differentiated against `columns`.
pub fn sensitivity_table(
    model: &ParametricDae,
    p0: &DVector<f64>,
    scans: &[ScanSpec],
    columns: &[usize],
) -> SensitivityTable {
    let rows = scans
        .par_iter()
        .map(|scan| {
            let result = trace_to_fold(model, p0, scan)
                .and_then(|r| r.require_fold())
                .and_then(|fold| analyze_fold(model, fold, columns));
            SensitivityRow {
                scan: scan.clone(),
                result,
            }
        })
        .collect();
    SensitivityTable {
        columns: columns.to_vec(),
        rows,
    }
}

/// Derivative of the fold point with respect to the ray origin's coordinate
/// `secondary`, by central differences of re-polished folds. It lies in the
/// tangent space of the fold hypersurface.
pub fn hypersurface_tangent(model: &ParametricDae, fold: &FoldPoint, secondary: usize) -> Result<DVector<f64>> {
    let p = fold.base[secondary];
    let h = if p != 0.0 { TANGENT_STEP * p.abs() } else { TANGENT_STEP };
    let seed = FoldSeed {
        s: fold.s,
        x: fold.x.clone(),
        y: fold.y.clone(),
        v: fold.v_full.clone(),
    };
    let shifted = |sign: f64| -> Result<DVector<f64>> {
        let mut base = fold.base.clone();
        base[secondary] += sign * h;
        Ok(moore_spence_polish(model, &base, &fold.direction, &seed)?.params)
    };
    Ok((shifted(1.0)? - shifted(-1.0)?) / (2.0 * h))
}
