//! Pieces shared by the inverter models: grid/line parameters, the LC filter
//! and the inner current controller.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Real;

pub const PARAM_R: usize = 18;
pub const PARAM_L: usize = 19;
pub const PARAM_VGD: usize = 20;
pub const PARAM_VGQ: usize = 21;
pub const GRID_NAMES: [&str; 4] = ["r", "l", "v_gd", "v_gq"];

/// Series line impedance and infinite-bus voltage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridLine {
    pub r: f64,
    pub l: f64,
    pub v_gd: f64,
    pub v_gq: f64,
}

impl GridLine {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.r, self.l, self.v_gd, self.v_gq]
    }

    pub fn from_params(p: &[f64]) -> Self {
        GridLine {
            r: p[PARAM_R],
            l: p[PARAM_L],
            v_gd: p[PARAM_VGD],
            v_gq: p[PARAM_VGQ],
        }
    }
}

pub(crate) fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: name.to_string(),
            reason: format!("must be positive, got {v}"),
        })
    }
}

/// Capacitor voltage and inverter-side current derivatives in the local frame.
#[allow(clippy::too_many_arguments)]
pub fn lc_filter<D: Real>(vc: [D; 2], it: [D; 2], ig: [D; 2], vt: [D; 2], w: D, wb: D, rf: D, lf: D, cf: D) -> [D; 4] {
    let wbw = wb * w;
    let rl = rf / lf * wb;
    [
        wbw * vc[1] + wb / cf * (it[0] - ig[0]),
        -wbw * vc[0] + wb / cf * (it[1] - ig[1]),
        wbw * it[1] + wb / lf * (vt[0] - vc[0]) - rl * it[0],
        -wbw * it[0] + wb / lf * (vt[1] - vc[1]) - rl * it[1],
    ]
}

/// PI current controller with decoupling and voltage feedforward; returns the
/// converter terminal voltage.
#[allow(clippy::too_many_arguments)]
pub fn current_controller<D: Real>(
    i_ref: [D; 2],
    it: [D; 2],
    gamma: [D; 2],
    vc: [D; 2],
    w: D,
    lf: D,
    kp: D,
    ki: D,
    kf: D,
) -> [D; 2] {
    [
        kp * (i_ref[0] - it[0]) + ki * gamma[0] + kf * vc[0] - w * lf * it[1],
        kp * (i_ref[1] - it[1]) + ki * gamma[1] + kf * vc[1] + w * lf * it[0],
    ]
}

/// Converter current and terminal voltage that hold the filter at rest.
pub(crate) struct FilterSteady {
    pub i_t: [f64; 2],
    pub v_t: [f64; 2],
}

pub(crate) fn filter_steady_state(vc: [f64; 2], ig: [f64; 2], w: f64, rf: f64, lf: f64, cf: f64) -> FilterSteady {
    let i_t = [ig[0] - w * cf * vc[1], ig[1] + w * cf * vc[0]];
    let v_t = [vc[0] + rf * i_t[0] - w * lf * i_t[1], vc[1] + rf * i_t[1] + w * lf * i_t[0]];
    FilterSteady { i_t, v_t }
}

/// Current-controller integrator values consistent with `ss` at zero tracking error.
pub(crate) fn current_integrators(ss: &FilterSteady, vc: [f64; 2], w: f64, lf: f64, ki: f64, kf: f64) -> [f64; 2] {
    if ki == 0.0 {
        return [0.0, 0.0];
    }
    [
        (ss.v_t[0] - kf * vc[0] + w * lf * ss.i_t[1]) / ki,
        (ss.v_t[1] - kf * vc[1] - w * lf * ss.i_t[0]) / ki,
    ]
}
