//! Grid-following inverter: PLL synchronization, PI power controllers, PI
//! current controller and LC output filter.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::common::{self, GridLine, PARAM_L, PARAM_R, PARAM_VGD, PARAM_VGQ};
use super::frame::to_local;
use crate::error::{Error, Result};
use crate::line::{line_derivatives, static_currents, LineKind};
use crate::model::{DaeEquations, Real};

/// Parameter names in vector order. The last four belong to the line and grid.
pub const PARAM_NAMES: [&str; 22] = [
    "r_f", "l_f", "c_f", "omega0", "omega_pc", "omega_qc", "kp_pll", "ki_pll", "kp_apc", "ki_apc", "kp_rpc",
    "ki_rpc", "kp_cc", "ki_cc", "kf_cc", "p_star", "q_star", "omega_b", "r", "l", "v_gd", "v_gq",
];

/// Controllable parameters, in the column order used for sensitivity tables.
pub const CONTROLLABLE: [&str; 11] = [
    "kp_pll", "ki_pll", "kp_cc", "ki_cc", "kf_cc", "kp_apc", "ki_apc", "kp_rpc", "ki_rpc", "p_star", "q_star",
];

const R_F: usize = 0;
const L_F: usize = 1;
const C_F: usize = 2;
const OMEGA0: usize = 3;
const OMEGA_PC: usize = 4;
const OMEGA_QC: usize = 5;
const KP_PLL: usize = 6;
const KI_PLL: usize = 7;
const KP_APC: usize = 8;
const KI_APC: usize = 9;
const KP_RPC: usize = 10;
const KI_RPC: usize = 11;
const KP_CC: usize = 12;
const KI_CC: usize = 13;
const KF_CC: usize = 14;
const P_STAR: usize = 15;
const Q_STAR: usize = 16;
const OMEGA_B: usize = 17;

pub const STATES: [&str; 12] = [
    "p_tilde", "q_tilde", "gamma_pll", "theta_pll", "phi_d", "phi_q", "gamma_d", "gamma_q", "v_cd", "v_cq", "i_td",
    "i_tq",
];

pub const ALGEBRAIC: [&str; 16] = [
    "omega", "i_td_ref", "i_tq_ref", "i_gd", "i_gq", "i_gD", "i_gQ", "v_cD", "v_cQ", "p", "q", "v_td", "v_tq",
    "delta_omega", "u_dc", "i_dc",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GflParameters {
    pub r_f: f64,
    pub l_f: f64,
    pub c_f: f64,
    pub omega0: f64,
    pub omega_pc: f64,
    pub omega_qc: f64,
    pub kp_pll: f64,
    pub ki_pll: f64,
    pub kp_apc: f64,
    pub ki_apc: f64,
    pub kp_rpc: f64,
    pub ki_rpc: f64,
    pub kp_cc: f64,
    pub ki_cc: f64,
    pub kf_cc: f64,
    pub p_star: f64,
    pub q_star: f64,
    pub omega_b: f64,
}

impl GflParameters {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.r_f,
            self.l_f,
            self.c_f,
            self.omega0,
            self.omega_pc,
            self.omega_qc,
            self.kp_pll,
            self.ki_pll,
            self.kp_apc,
            self.ki_apc,
            self.kp_rpc,
            self.ki_rpc,
            self.kp_cc,
            self.ki_cc,
            self.kf_cc,
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
        if self.r_f < 0.0 {
            return Err(Error::InvalidParameter {
                name: "r_f".into(),
                reason: "filter resistance must be non-negative".into(),
            });
        }
        Ok(())
    }
}

/// Residual equations; the line closure decides where `i_gD, i_gQ` live.
#[derive(Debug, Clone, Copy)]
pub struct GflEquations {
    pub line: LineKind,
}

impl GflEquations {
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

    /// Offset applied to algebraic indices that follow `i_gQ`.
    fn shift(&self) -> usize {
        match self.line {
            LineKind::Static => 0,
            LineKind::Dynamic => 2,
        }
    }
}

impl DaeEquations for GflEquations {
    fn residuals<D: Real>(&self, x: &[D], y: &[D], p: &[D], f: &mut [D], g: &mut [D]) {
        let [pt, qt, g_pll, th, ph_d, ph_q, ga_d, ga_q, vcd, vcq, itd, itq] = [
            x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7], x[8], x[9], x[10], x[11],
        ];
        let s = self.shift();
        let (w, itd_ref, itq_ref, igd, igq) = (y[0], y[1], y[2], y[3], y[4]);
        let (ig_gd, ig_gq) = match self.line {
            LineKind::Static => (y[5], y[6]),
            LineKind::Dynamic => (x[12], x[13]),
        };
        let [vc_gd, vc_gq, pw, qw, vtd, vtq, dw, udc, idc] =
            [y[7 - s], y[8 - s], y[9 - s], y[10 - s], y[11 - s], y[12 - s], y[13 - s], y[14 - s], y[15 - s]];

        let wb = p[OMEGA_B];
        let w0 = p[OMEGA0];
        let (rf, lf, cf) = (p[R_F], p[L_F], p[C_F]);

        f[0] = -p[OMEGA_PC] * (pt - pw);
        f[1] = -p[OMEGA_QC] * (qt - qw);
        f[2] = vcq;
        f[3] = wb * dw;
        f[4] = p[P_STAR] - pt;
        f[5] = p[Q_STAR] - qt;
        f[6] = itd_ref - itd;
        f[7] = itq_ref - itq;
        let filt = common::lc_filter([vcd, vcq], [itd, itq], [igd, igq], [vtd, vtq], w, wb, rf, lf, cf);
        f[8..12].copy_from_slice(&filt);

        g[0] = w - w0 - dw;
        g[1] = dw - p[KP_PLL] * vcq - p[KI_PLL] * g_pll;
        g[2] = itd_ref - p[KP_APC] * (p[P_STAR] - pt) - p[KI_APC] * ph_d;
        g[3] = itq_ref - p[KP_RPC] * (p[Q_STAR] - qt) - p[KI_RPC] * ph_q;
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
        g[8] = vcd - vc_loc[0];
        g[9] = vcq - vc_loc[1];
        g[10] = pw - (vcd * igd + vcq * igq);
        g[11] = qw - (vcq * igd - vcd * igq);
        g[12] = udc - D::from(1.0);
        g[13] = udc * idc - (vtd * itd + vtq * itq);

        let (r, l, vg) = (p[PARAM_R], p[PARAM_L], [p[PARAM_VGD], p[PARAM_VGQ]]);
        match self.line {
            LineKind::Static => {
                let i = static_currents([vc_gd, vc_gq], r, l, vg, w0);
                g[14] = ig_gd - i[0];
                g[15] = ig_gq - i[1];
            }
            LineKind::Dynamic => {
                let d = line_derivatives([ig_gd, ig_gq], [vc_gd, vc_gq], r, l, vg, w0, wb);
                f[12] = d[0];
                f[13] = d[1];
            }
        }
    }
}

/// Initial guess: capacitor at grid voltage, line currents from the static
/// closure, controller integrators back-solved from their steady-state
/// relations.
pub fn flat_start(line: LineKind, p: &[f64]) -> (DVector<f64>, DVector<f64>) {
    let grid = GridLine::from_params(p);
    let w = p[OMEGA0];
    let theta = 0.0;
    let vc_g = [grid.v_gd, grid.v_gq];
    let ig_g = static_currents(vc_g, grid.r, grid.l, vc_g, w);
    let vc = to_local(vc_g, theta);
    let ig = to_local(ig_g, theta);
    let (pw, qw) = (vc[0] * ig[0] + vc[1] * ig[1], vc[1] * ig[0] - vc[0] * ig[1]);
    let ss = common::filter_steady_state(vc, ig, w, p[R_F], p[L_F], p[C_F]);
    let div = |a: f64, b: f64| if b != 0.0 { a / b } else { 0.0 };
    let g_pll = div(-p[KP_PLL] * vc[1], p[KI_PLL]);
    // integral action pins the filtered powers to their setpoints
    let (pt, qt) = (p[P_STAR], p[Q_STAR]);
    let ph_d = div(ss.i_t[0], p[KI_APC]);
    let ph_q = div(ss.i_t[1], p[KI_RPC]);
    let ga = common::current_integrators(&ss, vc, w, p[L_F], p[KI_CC], p[KF_CC]);
    let idc = ss.v_t[0] * ss.i_t[0] + ss.v_t[1] * ss.i_t[1];

    let mut x = vec![
        pt, qt, g_pll, theta, ph_d, ph_q, ga[0], ga[1], vc[0], vc[1], ss.i_t[0], ss.i_t[1],
    ];
    let mut y = vec![w, ss.i_t[0], ss.i_t[1], ig[0], ig[1]];
    match line {
        LineKind::Static => y.extend([ig_g[0], ig_g[1]]),
        LineKind::Dynamic => x.extend([ig_g[0], ig_g[1]]),
    }
    y.extend([vc_g[0], vc_g[1], pw, qw, ss.v_t[0], ss.v_t[1], 0.0, 1.0, idc]);
    (DVector::from_vec(x), DVector::from_vec(y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_counts() {
        let s = GflEquations { line: LineKind::Static };
        assert_eq!(s.state_labels().len(), 12);
        assert_eq!(s.algebraic_labels().len(), 16);
        let d = GflEquations { line: LineKind::Dynamic };
        assert_eq!(d.state_labels().len(), 14);
        assert_eq!(d.algebraic_labels().len(), 14);
        assert_eq!(d.algebraic_labels()[5], "v_cD");
    }
}
