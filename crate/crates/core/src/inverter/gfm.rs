//! Droop-controlled grid-forming inverter.
//!
//! Filtered powers drive P-f and Q-V droop laws; the angle integrates the
//! frequency deviation from the grid frame. A PI voltage controller with
//! current feedforward and capacitor decoupling sets the current reference
//! for the same PI current controller and LC filter as the grid-following unit.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::common::{self, GridLine, PARAM_L, PARAM_R, PARAM_VGD, PARAM_VGQ};
use super::frame::to_local;
use crate::error::{Error, Result};
use crate::line::{line_derivatives, static_currents, LineKind};
use crate::model::{DaeEquations, Real};

pub const PARAM_NAMES: [&str; 22] = [
    "r_f", "l_f", "c_f", "omega0", "v0", "omega_pc", "omega_qc", "kp_vc", "ki_vc", "kf_vc", "kp_cc", "ki_cc",
    "kf_cc", "k_p", "k_q", "p_star", "q_star", "omega_b", "r", "l", "v_gd", "v_gq",
];

pub const CONTROLLABLE: [&str; 12] = [
    "kp_vc", "ki_vc", "kf_vc", "kp_cc", "ki_cc", "kf_cc", "k_p", "k_q", "v0", "omega0", "p_star", "q_star",
];

const R_F: usize = 0;
const L_F: usize = 1;
const C_F: usize = 2;
const OMEGA0: usize = 3;
const V0: usize = 4;
const OMEGA_PC: usize = 5;
const OMEGA_QC: usize = 6;
const KP_VC: usize = 7;
const KI_VC: usize = 8;
const KF_VC: usize = 9;
const KP_CC: usize = 10;
const KI_CC: usize = 11;
const KF_CC: usize = 12;
const K_P: usize = 13;
const K_Q: usize = 14;
const P_STAR: usize = 15;
const Q_STAR: usize = 16;
const OMEGA_B: usize = 17;

pub const STATES: [&str; 11] = [
    "p_tilde", "q_tilde", "theta", "xi_d", "xi_q", "gamma_d", "gamma_q", "v_cd", "v_cq", "i_td", "i_tq",
];

pub const ALGEBRAIC: [&str; 14] = [
    "omega", "v_ref", "i_td_ref", "i_tq_ref", "v_td", "v_tq", "i_gd", "i_gq", "i_gD", "i_gQ", "v_cD", "v_cQ", "p",
    "q",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GfmParameters {
    pub r_f: f64,
    pub l_f: f64,
    pub c_f: f64,
    pub omega0: f64,
    pub v0: f64,
    pub omega_pc: f64,
    pub omega_qc: f64,
    pub kp_vc: f64,
    pub ki_vc: f64,
    pub kf_vc: f64,
    pub kp_cc: f64,
    pub ki_cc: f64,
    pub kf_cc: f64,
    pub k_p: f64,
    pub k_q: f64,
    pub p_star: f64,
    pub q_star: f64,
    pub omega_b: f64,
}

impl GfmParameters {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.r_f,
            self.l_f,
            self.c_f,
            self.omega0,
            self.v0,
            self.omega_pc,
            self.omega_qc,
            self.kp_vc,
            self.ki_vc,
            self.kf_vc,
            self.kp_cc,
            self.ki_cc,
            self.kf_cc,
            self.k_p,
            self.k_q,
            self.p_star,
            self.q_star,
            self.omega_b,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        common::positive("omega_b", self.omega_b)?;
        common::positive("l_f", self.l_f)?;
        common::positive("c_f", self.c_f)?;
        common::positive("omega_pc", self.omega_pc)?;
        common::positive("omega_qc", self.omega_qc)?;
        common::positive("v0", self.v0)?;
        for (name, v) in [("k_p", self.k_p), ("k_q", self.k_q), ("r_f", self.r_f)] {
            if v < 0.0 {
                return Err(Error::InvalidParameter {
                    name: name.into(),
                    reason: "must be non-negative".into(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GfmEquations {
    pub line: LineKind,
}

impl GfmEquations {
    pub fn state_labels(&self) -> Vec<String> {
        let mut s: Vec<String> = STATES.iter().map(|s| s.to_string()).collect();
        if self.line == LineKind::Dynamic {
            s.extend(["i_gD".to_string(), "i_gQ".to_string()]);
        }
        s
    }

    pub fn algebraic_labels(&self) -> Vec<String> {
        ALGEBRAIC
            .iter()
            .filter(|n| self.line == LineKind::Static || !matches!(**n, "i_gD" | "i_gQ"))
            .map(|s| s.to_string())
            .collect()
    }

    fn shift(&self) -> usize {
        match self.line {
            LineKind::Static => 0,
            LineKind::Dynamic => 2,
        }
    }
}

impl DaeEquations for GfmEquations {
    fn residuals<D: Real>(&self, x: &[D], y: &[D], p: &[D], f: &mut [D], g: &mut [D]) {
        let [pt, qt, th, xi_d, xi_q, ga_d, ga_q, vcd, vcq, itd, itq] =
            [x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7], x[8], x[9], x[10]];
        let s = self.shift();
        let [w, v_ref, itd_ref, itq_ref, vtd, vtq, igd, igq] = [y[0], y[1], y[2], y[3], y[4], y[5], y[6], y[7]];
        let (ig_gd, ig_gq) = match self.line {
            LineKind::Static => (y[8], y[9]),
            LineKind::Dynamic => (x[11], x[12]),
        };
        let [vc_gd, vc_gq, pw, qw] = [y[10 - s], y[11 - s], y[12 - s], y[13 - s]];

        let wb = p[OMEGA_B];
        let w0 = p[OMEGA0];
        let (rf, lf, cf) = (p[R_F], p[L_F], p[C_F]);

        f[0] = -p[OMEGA_PC] * (pt - pw);
        f[1] = -p[OMEGA_QC] * (qt - qw);
        f[2] = wb * (w - w0);
        f[3] = v_ref - vcd;
        f[4] = -vcq;
        f[5] = itd_ref - itd;
        f[6] = itq_ref - itq;
        let filt = common::lc_filter([vcd, vcq], [itd, itq], [igd, igq], [vtd, vtq], w, wb, rf, lf, cf);
        f[7..11].copy_from_slice(&filt);

        g[0] = w - w0 + p[K_P] * (pt - p[P_STAR]);
        g[1] = v_ref - p[V0] + p[K_Q] * (qt - p[Q_STAR]);
        let (kp, ki, kf) = (p[KP_VC], p[KI_VC], p[KF_VC]);
        g[2] = itd_ref - (kp * (v_ref - vcd) + ki * xi_d + kf * igd - w * cf * vcq);
        g[3] = itq_ref - (-kp * vcq + ki * xi_q + kf * igq + w * cf * vcd);
        let vt = common::current_controller(
            [itd_ref, itq_ref],
            [itd, itq],
            [ga_d, ga_q],
            [vcd, vcq],
            w,
            lf,
            p[KP_CC],
            p[KI_CC],
            p[KF_CC],
        );
        g[4] = vtd - vt[0];
        g[5] = vtq - vt[1];
        let ig_loc = to_local([ig_gd, ig_gq], th);
        g[6] = igd - ig_loc[0];
        g[7] = igq - ig_loc[1];
        let vc_loc = to_local([vc_gd, vc_gq], th);
        g[10 - s] = vcd - vc_loc[0];
        g[11 - s] = vcq - vc_loc[1];
        g[12 - s] = pw - (vcd * igd + vcq * igq);
        g[13 - s] = qw - (vcq * igd - vcd * igq);

        let (r, l, vg) = (p[PARAM_R], p[PARAM_L], [p[PARAM_VGD], p[PARAM_VGQ]]);
        match self.line {
            LineKind::Static => {
                let i = static_currents([vc_gd, vc_gq], r, l, vg, w0);
                g[8] = ig_gd - i[0];
                g[9] = ig_gq - i[1];
            }
            LineKind::Dynamic => {
                let d = line_derivatives([ig_gd, ig_gq], [vc_gd, vc_gq], r, l, vg, w0, wb);
                f[11] = d[0];
                f[12] = d[1];
            }
        }
    }
}

/// Initial guess built the same way as for the grid-following model; the
/// droop filters start at their setpoints so the frequency starts at `omega0`.
pub fn flat_start(line: LineKind, p: &[f64]) -> (DVector<f64>, DVector<f64>) {
    let grid = GridLine::from_params(p);
    let theta = 0.0;
    let (pt, qt) = (p[P_STAR], p[Q_STAR]);
    let w = p[OMEGA0] - p[K_P] * (pt - p[P_STAR]);
    let v_ref = p[V0] - p[K_Q] * (qt - p[Q_STAR]);
    let vc_g = [grid.v_gd, grid.v_gq];
    let ig_g = static_currents(vc_g, grid.r, grid.l, vc_g, p[OMEGA0]);
    let vc = to_local(vc_g, theta);
    let ig = to_local(ig_g, theta);
    let (pw, qw) = (vc[0] * ig[0] + vc[1] * ig[1], vc[1] * ig[0] - vc[0] * ig[1]);
    let ss = common::filter_steady_state(vc, ig, w, p[R_F], p[L_F], p[C_F]);
    let (kp, ki, kf, cf) = (p[KP_VC], p[KI_VC], p[KF_VC], p[C_F]);
    let xi = if ki != 0.0 {
        [
            (ss.i_t[0] - kp * (v_ref - vc[0]) - kf * ig[0] + w * cf * vc[1]) / ki,
            (ss.i_t[1] + kp * vc[1] - kf * ig[1] - w * cf * vc[0]) / ki,
        ]
    } else {
        [0.0, 0.0]
    };
    let ga = common::current_integrators(&ss, vc, w, p[L_F], p[KI_CC], p[KF_CC]);

    let mut x = vec![
        pt, qt, theta, xi[0], xi[1], ga[0], ga[1], vc[0], vc[1], ss.i_t[0], ss.i_t[1],
    ];
    let mut y = vec![w, v_ref, ss.i_t[0], ss.i_t[1], ss.v_t[0], ss.v_t[1], ig[0], ig[1]];
    match line {
        LineKind::Static => y.extend([ig_g[0], ig_g[1]]),
        LineKind::Dynamic => x.extend([ig_g[0], ig_g[1]]),
    }
    y.extend([vc_g[0], vc_g[1], pw, qw]);
    (DVector::from_vec(x), DVector::from_vec(y))
}
