//! Steady states of a parametric DAE and a time-domain oracle for them.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, Spectrum};
use crate::model::{reduced_spectrum, stack, JacobianBundle, JacobianScheme, ParametricDae};

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    /// Convergence threshold on the infinity norm of the stacked residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Smallest damping factor tried by the line search.
    pub min_step: f64,
    pub scheme: JacobianScheme,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-10,
            max_iter: 100,
            min_step: 1.0 / 1024.0,
            scheme: JacobianScheme::Auto,
        }
    }
}

/// A solved steady state with its linearization.
#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub params: DVector<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub jacobian: JacobianBundle,
    pub spectrum: Spectrum,
    pub stable: bool,
}

impl Equilibrium {
    pub fn state(&self) -> DVector<f64> {
        stack(&self.x, &self.y)
    }
}

/// Result of a raw Newton solve.
#[derive(Debug, Clone)]
pub struct NewtonSolution {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Damped Newton on `[f; g] = 0` with Armijo backtracking.
pub fn newton_solve(
    model: &ParametricDae,
    p: &DVector<f64>,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    opts: &NewtonOptions,
) -> Result<NewtonSolution> {
    let n = model.n_diff();
    let mut z = stack(x0, y0);
    let split = |z: &DVector<f64>| (z.rows(0, n).into_owned(), z.rows(n, z.len() - n).into_owned());
    let eval = |z: &DVector<f64>| -> Result<DVector<f64>> {
        let (x, y) = split(z);
        model.stacked_residual(&x, &y, p)
    };
    let mut r = eval(&z)?;
    for it in 0..opts.max_iter {
        let norm = r.amax();
        if norm <= opts.tol {
            let (x, y) = split(&z);
            return Ok(NewtonSolution {
                x,
                y,
                residual_norm: norm,
                iterations: it,
            });
        }
        let (x, y) = split(&z);
        let jac = model.state_jacobian(&x, &y, p, opts.scheme)?;
        let dz = linalg::lu_solve(&jac, &r).ok_or(Error::SingularIteration { iteration: it })?;
        let f0 = r.norm_squared();
        let mut t = 1.0;
        loop {
            let trial = &z - &dz * t;
            let accepted = match eval(&trial) {
                Ok(rt) if rt.norm_squared() <= (1.0 - 1e-4 * t) * f0 || t <= opts.min_step => Some((trial, rt)),
                _ => None,
            };
            if let Some((zt, rt)) = accepted {
                z = zt;
                r = rt;
                break;
            }
            if t <= opts.min_step {
                return Err(Error::NewtonDiverged {
                    iterations: it,
                    residual: norm,
                });
            }
            t *= 0.5;
        }
    }
    let norm = r.amax();
    if norm <= opts.tol {
        let (x, y) = split(&z);
        return Ok(NewtonSolution {
            x,
            y,
            residual_norm: norm,
            iterations: opts.max_iter,
        });
    }
    Err(Error::NewtonDiverged {
        iterations: opts.max_iter,
        residual: norm,
    })
}

/// Solves for an equilibrium and linearizes there. Without a guess the
/// model's registered flat start is used.
pub fn solve_equilibrium(
    model: &ParametricDae,
    p: &DVector<f64>,
    guess: Option<(&DVector<f64>, &DVector<f64>)>,
) -> Result<Equilibrium> {
    solve_equilibrium_with(model, p, guess, &NewtonOptions::default())
}

pub fn solve_equilibrium_with(
    model: &ParametricDae,
    p: &DVector<f64>,
    guess: Option<(&DVector<f64>, &DVector<f64>)>,
    opts: &NewtonOptions,
) -> Result<Equilibrium> {
    let (x0, y0) = match guess {
        Some((x, y)) => (x.clone(), y.clone()),
        None => model.initial_guess(p),
    };
    let sol = newton_solve(model, p, &x0, &y0, opts)?;
    linearize(model, p, sol)
}

/// Builds the equilibrium record for a converged point.
pub fn linearize(model: &ParametricDae, p: &DVector<f64>, sol: NewtonSolution) -> Result<Equilibrium> {
    let jacobian = model.assemble_jacobians(&sol.x, &sol.y, p, JacobianScheme::Auto)?;
    let spectrum = reduced_spectrum(&jacobian)?;
    let stable = spectrum.is_stable();
    Ok(Equilibrium {
        x: sol.x,
        y: sol.y,
        params: p.clone(),
        residual_norm: sol.residual_norm,
        iterations: sol.iterations,
        jacobian,
        spectrum,
        stable,
    })
}

/// Starting point for a solve at `p_new`. With a second prior point the guess
/// is extrapolated linearly along the parameter change (exact for linear
/// solution families).
pub fn continuation_warm_start(
    prev: &Equilibrium,
    older: Option<&Equilibrium>,
    p_new: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    if let Some(o) = older {
        let dp = &prev.params - &o.params;
        let dd = dp.norm_squared();
        if dd > 0.0 {
            let t = (p_new - &prev.params).dot(&dp) / dd;
            return (&prev.x + (&prev.x - &o.x) * t, &prev.y + (&prev.y - &o.y) * t);
        }
    }
    (prev.x.clone(), prev.y.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegrationOutcome {
    /// `|x'|_inf` fell below the tolerance.
    SteadyState,
    /// Ran to the time limit without settling.
    TimeLimit,
    /// The step size collapsed or the state blew up.
    Collapsed,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub t_end: f64,
    pub outcome: IntegrationOutcome,
    /// `|x'|_inf` at the final point.
    pub derivative_norm: f64,
}

impl Trajectory {
    pub fn reached_steady_state(&self) -> bool {
        self.outcome == IntegrationOutcome::SteadyState
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IntegrationOptions {
    pub t_max: f64,
    /// Steady-state threshold on `|x'|_inf`.
    pub tol: f64,
    /// Local error tolerance for step-doubling control.
    pub local_tol: f64,
    pub h0: f64,
    pub h_min: f64,
    pub h_max: f64,
    /// States above this magnitude count as a blow-up.
    pub blowup: f64,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        IntegrationOptions {
            t_max: 50.0,
            tol: 1e-9,
            local_tol: 1e-4,
            h0: 1e-5,
            h_min: 1e-10,
            h_max: 5.0,
            blowup: 1e6,
        }
    }
}

/// One backward-Euler step of size `h` from `x` with algebraic guess `y`.
fn backward_euler_step(
    model: &ParametricDae,
    p: &DVector<f64>,
    x: &DVector<f64>,
    y: &DVector<f64>,
    h: f64,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let (n, m) = (model.n_diff(), model.n_alg());
    let mut xn = x.clone();
    let mut yn = y.clone();
    for _ in 0..12 {
        let (f, g) = model.evaluate_residuals(&xn, &yn, p).ok()?;
        let mut r = DVector::zeros(n + m);
        r.rows_mut(0, n).copy_from(&(&xn - x - &f * h));
        r.rows_mut(n, m).copy_from(&g);
        let scale = 1.0 + xn.amax();
        if r.amax() <= 1e-12 * scale {
            return Some((xn, yn));
        }
        let jac = model.state_jacobian(&xn, &yn, p, JacobianScheme::Auto).ok()?;
        let mut it = DMatrix::zeros(n + m, n + m);
        it.view_mut((0, 0), (n, n + m))
            .copy_from(&(-jac.view((0, 0), (n, n + m)) * h));
        for i in 0..n {
            it[(i, i)] += 1.0;
        }
        it.view_mut((n, 0), (m, n + m)).copy_from(&jac.view((n, 0), (m, n + m)));
        let dz = linalg::lu_solve(&it, &r)?;
        xn -= dz.rows(0, n);
        yn -= dz.rows(n, m);
        if dz.amax() <= 1e-13 * scale {
            return Some((xn, yn));
        }
    }
    None
}

/// Integrates from `x0` with backward Euler and step-doubling error control
/// until the state derivative vanishes or `t_max` is reached. The initial
/// algebraic state is solved from `g = 0`, starting at `y_guess`.
pub fn integrate_to_steady_state(
    model: &ParametricDae,
    p: &DVector<f64>,
    x0: &DVector<f64>,
    y_guess: &DVector<f64>,
    opts: &IntegrationOptions,
) -> Result<Trajectory> {
    let mut y = model.solve_algebraic(x0, y_guess, p, 1e-11)?;
    let mut x = x0.clone();
    let mut t = 0.0;
    let mut h = opts.h0;
    let mut times = vec![0.0];
    let mut states = vec![x.clone()];
    let deriv = |x: &DVector<f64>, y: &DVector<f64>| model.evaluate_residuals(x, y, p).map(|(f, _)| f.amax());
    let mut dnorm = deriv(&x, &y)?;

    let outcome = loop {
        if dnorm <= opts.tol {
            break IntegrationOutcome::SteadyState;
        }
        if t >= opts.t_max {
            break IntegrationOutcome::TimeLimit;
        }
        if h < opts.h_min {
            break IntegrationOutcome::Collapsed;
        }
        let h_step = h.min(opts.t_max - t).max(opts.h_min);
        let full = backward_euler_step(model, p, &x, &y, h_step);
        let half = backward_euler_step(model, p, &x, &y, 0.5 * h_step)
            .and_then(|(xh, yh)| backward_euler_step(model, p, &xh, &yh, 0.5 * h_step));
        let (Some((x1, _)), Some((x2, y2))) = (full, half) else {
            h = 0.25 * h_step;
            continue;
        };
        let err = (&x2 - &x1).amax() / (1.0 + x2.amax());
        if err > opts.local_tol {
            h = h_step * (0.9 * (opts.local_tol / err).sqrt()).max(0.2);
            continue;
        }
        t += h_step;
        x = x2;
        y = y2;
        if x.amax() > opts.blowup || y.amax() > opts.blowup {
            times.push(t);
            states.push(x.clone());
            break IntegrationOutcome::Collapsed;
        }
        dnorm = match deriv(&x, &y) {
            Ok(d) => d,
            Err(_) => break IntegrationOutcome::Collapsed,
        };
        times.push(t);
        states.push(x.clone());
        let grow = if err > 0.0 { 0.9 * (opts.local_tol / err).sqrt() } else { 4.0 };
        h = (h_step * grow.clamp(0.2, 4.0)).min(opts.h_max);
    };
    Ok(Trajectory {
        times,
        states,
        x,
        y,
        t_end: t,
        outcome,
        derivative_norm: dnorm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DaeEquations, Labels, Real};

    /// x' = -(x - a), 0 = y - x^2
    struct Relax;

    impl DaeEquations for Relax {
        fn residuals<D: Real>(&self, x: &[D], y: &[D], p: &[D], f: &mut [D], g: &mut [D]) {
            f[0] = -(x[0] - p[0]);
            g[0] = y[0] - x[0] * x[0];
        }
    }

    fn relax() -> ParametricDae {
        ParametricDae::from_equations("relax", Labels::new(&["x"], &["y"], &["a"]), Relax).unwrap()
    }

    #[test]
    fn newton_finds_fixed_point() {
        let m = relax();
        let p = DVector::from_vec(vec![2.0]);
        let eq = solve_equilibrium(&m, &p, None).unwrap();
        assert!((eq.x[0] - 2.0).abs() < 1e-12);
        assert!((eq.y[0] - 4.0).abs() < 1e-10);
        assert!(eq.stable);
        assert!(eq.residual_norm <= 1e-10);
    }

    #[test]
    fn warm_start_exact_on_linear_family() {
        let m = relax();
        let e1 = solve_equilibrium(&m, &DVector::from_vec(vec![1.0]), None).unwrap();
        let e2 = solve_equilibrium(&m, &DVector::from_vec(vec![2.0]), None).unwrap();
        let (x, _) = continuation_warm_start(&e2, Some(&e1), &DVector::from_vec(vec![3.0]));
        assert!((x[0] - 3.0).abs() < 1e-12);
        let (x, y) = continuation_warm_start(&e2, None, &e2.params);
        assert_eq!((x, y), (e2.x.clone(), e2.y.clone()));
    }

    #[test]
    fn integration_settles() {
        let m = relax();
        let p = DVector::from_vec(vec![0.5]);
        let tr = integrate_to_steady_state(
            &m,
            &p,
            &DVector::from_vec(vec![3.0]),
            &DVector::from_vec(vec![0.0]),
            &IntegrationOptions::default(),
        )
        .unwrap();
        assert!(tr.reached_steady_state());
        assert!((tr.x[0] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn divergent_newton_reports_residual() {
        // x' = 1 + x^2 has no real root
        let m = ParametricDae::from_fn("none", Labels::new(&["x"], &[] as &[&str], &[] as &[&str]), |x, _, _, f, _| {
            f[0] = 1.0 + x[0] * x[0]
        })
        .unwrap();
        let r = solve_equilibrium(&m, &DVector::zeros(0), None);
        assert!(matches!(
            r,
            Err(Error::NewtonDiverged { .. }) | Err(Error::SingularIteration { .. })
        ));
    }
}
