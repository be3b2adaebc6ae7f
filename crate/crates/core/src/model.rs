//! Parametric semi-explicit DAE systems `x' = f(x, y, p)`, `0 = g(x, y, p)`.
//!
//! A model is written once as a function generic over [`Real`]; evaluating it
//! with `f64` gives residuals and evaluating it with forward-mode dual numbers
//! gives exact Jacobian columns. Models that only provide an `f64` closure fall
//! back to central finite differences.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_dual::{Dual64, DualNum};

use crate::error::{Error, Result};
use crate::linalg::{self, Spectrum};

/// Scalar types a model can be evaluated with: `f64` and dual numbers over it.
pub trait Real: DualNum<Primitive = f64> + Copy + Send + Sync {}
impl<T: DualNum<Primitive = f64> + Copy + Send + Sync> Real for T {}

/// Residual equations of a DAE written generically over the scalar type.
pub trait DaeEquations: Send + Sync + 'static {
    fn residuals<D: Real>(&self, x: &[D], y: &[D], p: &[D], f: &mut [D], g: &mut [D]);
}

/// Object-safe view of a residual function.
trait Residual: Send + Sync {
    fn eval_f64(&self, x: &[f64], y: &[f64], p: &[f64], f: &mut [f64], g: &mut [f64]);
    fn eval_dual(&self, x: &[Dual64], y: &[Dual64], p: &[Dual64], f: &mut [Dual64], g: &mut [Dual64]) -> bool;
}

struct Generic<T>(T);

impl<T: DaeEquations> Residual for Generic<T> {
    fn eval_f64(&self, x: &[f64], y: &[f64], p: &[f64], f: &mut [f64], g: &mut [f64]) {
        self.0.residuals(x, y, p, f, g)
    }

    fn eval_dual(&self, x: &[Dual64], y: &[Dual64], p: &[Dual64], f: &mut [Dual64], g: &mut [Dual64]) -> bool {
        self.0.residuals(x, y, p, f, g);
        true
    }
}

type GuessFn = dyn Fn(&[f64]) -> (DVector<f64>, DVector<f64>) + Send + Sync;

type ResidualFn = dyn Fn(&[f64], &[f64], &[f64], &mut [f64], &mut [f64]) + Send + Sync;

struct Closure(Box<ResidualFn>);

impl Residual for Closure {
    fn eval_f64(&self, x: &[f64], y: &[f64], p: &[f64], f: &mut [f64], g: &mut [f64]) {
        (self.0)(x, y, p, f, g)
    }

    fn eval_dual(&self, _: &[Dual64], _: &[Dual64], _: &[Dual64], _: &mut [Dual64], _: &mut [Dual64]) -> bool {
        false
    }
}

/// Ordered names of the differential states, algebraic states and parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Labels {
    pub states: Vec<String>,
    pub algebraic: Vec<String>,
    pub params: Vec<String>,
}

impl Labels {
    pub fn new<S: AsRef<str>>(states: &[S], algebraic: &[S], params: &[S]) -> Self {
        let own = |v: &[S]| v.iter().map(|s| s.as_ref().to_string()).collect();
        Labels {
            states: own(states),
            algebraic: own(algebraic),
            params: own(params),
        }
    }

    fn validate(&self) -> Result<()> {
        for (kind, list) in [
            ("state", &self.states),
            ("algebraic", &self.algebraic),
            ("parameter", &self.params),
        ] {
            let mut seen = HashSet::new();
            for name in list {
                if !seen.insert(name.as_str()) {
                    return Err(Error::InvalidModel(format!("duplicate {kind} label `{name}`")));
                }
            }
        }
        Ok(())
    }
}

/// How Jacobians are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum JacobianScheme {
    /// Exact derivatives when the model supports them, otherwise finite differences.
    #[default]
    Auto,
    /// Exact derivatives; an error if the model has none.
    Analytic,
    /// Central differences with per-column step `h * max(1, |value|)`.
    FiniteDifference { h: f64 },
}

pub const DEFAULT_FD_STEP: f64 = 1e-6;
pub const MAX_GY_CONDITION: f64 = 1e12;

/// A named parametric DAE. Immutable and cheap to clone.
#[derive(Clone)]
pub struct ParametricDae {
    name: String,
    labels: Labels,
    residual: Arc<dyn Residual>,
    analytic: bool,
    guess: Option<Arc<GuessFn>>,
}

impl fmt::Debug for ParametricDae {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParametricDae")
            .field("name", &self.name)
            .field("n_diff", &self.n_diff())
            .field("n_alg", &self.n_alg())
            .field("n_param", &self.n_param())
            .finish()
    }
}

/// All partial derivatives at one point plus the index-1 reduction.
#[derive(Debug, Clone)]
pub struct JacobianBundle {
    pub f_x: DMatrix<f64>,
    pub f_y: DMatrix<f64>,
    pub g_x: DMatrix<f64>,
    pub g_y: DMatrix<f64>,
    pub f_p: DMatrix<f64>,
    pub g_p: DMatrix<f64>,
    /// `f_x - f_y g_y^{-1} g_x`
    pub reduced_a: DMatrix<f64>,
    /// `f_p - f_y g_y^{-1} g_p`
    pub reduced_fp: DMatrix<f64>,
    pub gy_condition: f64,
}

impl ParametricDae {
    /// Builds a model from generic equations; Jacobians are exact.
    pub fn from_equations(name: &str, labels: Labels, eqs: impl DaeEquations) -> Result<Self> {
        labels.validate()?;
        Ok(ParametricDae {
            name: name.to_string(),
            labels,
            residual: Arc::new(Generic(eqs)),
            analytic: true,
            guess: None,
        })
    }

    /// Builds a model from an `f64` closure; Jacobians use finite differences.
    pub fn from_fn<F>(name: &str, labels: Labels, f: F) -> Result<Self>
    where
        F: Fn(&[f64], &[f64], &[f64], &mut [f64], &mut [f64]) + Send + Sync + 'static,
    {
        labels.validate()?;
        Ok(ParametricDae {
            name: name.to_string(),
            labels,
            residual: Arc::new(Closure(Box::new(f))),
            analytic: false,
            guess: None,
        })
    }

    /// Attaches the default starting point used when a solver gets no guess.
    pub fn with_initial_guess<G>(mut self, guess: G) -> Self
    where
        G: Fn(&[f64]) -> (DVector<f64>, DVector<f64>) + Send + Sync + 'static,
    {
        self.guess = Some(Arc::new(guess));
        self
    }

    /// Default starting point for `p`; zeros when the model registers none.
    pub fn initial_guess(&self, p: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        match &self.guess {
            Some(g) => g(p.as_slice()),
            None => (DVector::zeros(self.n_diff()), DVector::zeros(self.n_alg())),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn n_diff(&self) -> usize {
        self.labels.states.len()
    }

    pub fn n_alg(&self) -> usize {
        self.labels.algebraic.len()
    }

    pub fn n_param(&self) -> usize {
        self.labels.params.len()
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.analytic
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.labels.params.iter().position(|p| p == name)
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.labels.states.iter().position(|p| p == name)
    }

    pub fn alg_index(&self, name: &str) -> Option<usize> {
        self.labels.algebraic.iter().position(|p| p == name)
    }

    fn check_dims(&self, x: &[f64], y: &[f64], p: &[f64]) -> Result<()> {
        for (what, expected, got) in [
            ("differential state vector", self.n_diff(), x.len()),
            ("algebraic state vector", self.n_alg(), y.len()),
            ("parameter vector", self.n_param(), p.len()),
        ] {
            if expected != got {
                return Err(Error::Dimension { what, expected, got });
            }
        }
        Ok(())
    }

    fn equation_name(&self, i: usize) -> String {
        let n = self.n_diff();
        if i < n {
            format!("d{}/dt", self.labels.states[i])
        } else {
            format!("algebraic #{} ({})", i - n, self.labels.algebraic[i - n])
        }
    }

    /// Residuals `(f, g)` at a point. Fails on a dimension mismatch or a
    /// non-finite entry, naming the first offending equation.
    pub fn evaluate_residuals(
        &self,
        x: &DVector<f64>,
        y: &DVector<f64>,
        p: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        self.check_dims(x.as_slice(), y.as_slice(), p.as_slice())?;
        let (f, g) = self.eval_raw(x.as_slice(), y.as_slice(), p.as_slice());
        if let Some(i) = f.iter().chain(g.iter()).position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                equation: self.equation_name(i),
            });
        }
        Ok((f, g))
    }

    /// Stacked residual `[f; g]`.
    pub fn stacked_residual(&self, x: &DVector<f64>, y: &DVector<f64>, p: &DVector<f64>) -> Result<DVector<f64>> {
        let (f, g) = self.evaluate_residuals(x, y, p)?;
        Ok(stack(&f, &g))
    }

    fn eval_raw(&self, x: &[f64], y: &[f64], p: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let mut f = vec![0.0; self.n_diff()];
        let mut g = vec![0.0; self.n_alg()];
        self.residual.eval_f64(x, y, p, &mut f, &mut g);
        (DVector::from_vec(f), DVector::from_vec(g))
    }

    /// Jacobian of `[f; g]` with respect to the columns selected by `cols`
    /// from the concatenated vector `[x; y; p]`.
    fn jacobian_columns(
        &self,
        x: &[f64],
        y: &[f64],
        p: &[f64],
        cols: std::ops::Range<usize>,
        scheme: JacobianScheme,
    ) -> Result<DMatrix<f64>> {
        let use_ad = match scheme {
            JacobianScheme::Auto => self.analytic,
            JacobianScheme::Analytic => {
                if !self.analytic {
                    return Err(Error::NoAnalyticJacobian(self.name.clone()));
                }
                true
            }
            JacobianScheme::FiniteDifference { .. } => false,
        };
        let h = match scheme {
            JacobianScheme::FiniteDifference { h } => h,
            _ => DEFAULT_FD_STEP,
        };
        let (nx, ny) = (x.len(), y.len());
        let rows = self.n_diff() + self.n_alg();
        let mut jac = DMatrix::zeros(rows, cols.len());
        let mut z: Vec<f64> = x.iter().chain(y).chain(p).copied().collect();

        if use_ad {
            let mut zd: Vec<Dual64> = z.iter().map(|&v| Dual64::from(v)).collect();
            let mut f = vec![Dual64::from(0.0); self.n_diff()];
            let mut g = vec![Dual64::from(0.0); self.n_alg()];
            for (c, j) in cols.enumerate() {
                zd[j].eps = 1.0;
                let (xd, rest) = zd.split_at(nx);
                let (yd, pd) = rest.split_at(ny);
                self.residual.eval_dual(xd, yd, pd, &mut f, &mut g);
                for (r, v) in f.iter().chain(g.iter()).enumerate() {
                    jac[(r, c)] = v.eps;
                }
                zd[j].eps = 0.0;
            }
        } else {
            for (c, j) in cols.enumerate() {
                let orig = z[j];
                let step = h * orig.abs().max(1.0);
                z[j] = orig + step;
                let (fp, gp) = self.eval_raw(&z[..nx], &z[nx..nx + ny], &z[nx + ny..]);
                z[j] = orig - step;
                let (fm, gm) = self.eval_raw(&z[..nx], &z[nx..nx + ny], &z[nx + ny..]);
                z[j] = orig;
                let up = stack(&fp, &gp);
                let down = stack(&fm, &gm);
                for r in 0..rows {
                    jac[(r, c)] = (up[r] - down[r]) / (2.0 * step);
                }
            }
        }
        if jac.iter().any(|v| !v.is_finite()) {
            let (r, _) = jac
                .row_iter()
                .enumerate()
                .find(|(_, row)| row.iter().any(|v| !v.is_finite()))
                .expect("non-finite entry exists");
            return Err(Error::NonFinite {
                equation: self.equation_name(r),
            });
        }
        Ok(jac)
    }

    /// Jacobian of `[f; g]` with respect to `[x; y]`, square of size `n_diff + n_alg`.
    pub fn state_jacobian(
        &self,
        x: &DVector<f64>,
        y: &DVector<f64>,
        p: &DVector<f64>,
        scheme: JacobianScheme,
    ) -> Result<DMatrix<f64>> {
        self.check_dims(x.as_slice(), y.as_slice(), p.as_slice())?;
        let n = x.len() + y.len();
        self.jacobian_columns(x.as_slice(), y.as_slice(), p.as_slice(), 0..n, scheme)
    }

    /// Jacobian of `[f; g]` with respect to `p`.
    pub fn param_jacobian(
        &self,
        x: &DVector<f64>,
        y: &DVector<f64>,
        p: &DVector<f64>,
        scheme: JacobianScheme,
    ) -> Result<DMatrix<f64>> {
        self.check_dims(x.as_slice(), y.as_slice(), p.as_slice())?;
        let n = x.len() + y.len();
        self.jacobian_columns(x.as_slice(), y.as_slice(), p.as_slice(), n..n + p.len(), scheme)
    }

    /// All Jacobian blocks and the reduced quantities at a point.
    pub fn assemble_jacobians(
        &self,
        x: &DVector<f64>,
        y: &DVector<f64>,
        p: &DVector<f64>,
        scheme: JacobianScheme,
    ) -> Result<JacobianBundle> {
        self.evaluate_residuals(x, y, p)?;
        let (n, m) = (self.n_diff(), self.n_alg());
        let np = self.n_param();
        let total = n + m + np;
        let full = self.jacobian_columns(x.as_slice(), y.as_slice(), p.as_slice(), 0..total, scheme)?;
        let f_x = full.view((0, 0), (n, n)).into_owned();
        let f_y = full.view((0, n), (n, m)).into_owned();
        let f_p = full.view((0, n + m), (n, np)).into_owned();
        let g_x = full.view((n, 0), (m, n)).into_owned();
        let g_y = full.view((n, n), (m, m)).into_owned();
        let g_p = full.view((n, n + m), (m, np)).into_owned();
        JacobianBundle::from_blocks(f_x, f_y, g_x, g_y, f_p, g_p)
    }

    /// Eigen-decomposition of the reduced Jacobian at a point.
    pub fn reduced_spectrum_at(&self, x: &DVector<f64>, y: &DVector<f64>, p: &DVector<f64>) -> Result<Spectrum> {
        let bundle = self.assemble_jacobians(x, y, p, JacobianScheme::Auto)?;
        reduced_spectrum(&bundle)
    }

    /// Solves `g(x, y, p) = 0` for `y` by Newton from `y0`.
    pub fn solve_algebraic(&self, x: &DVector<f64>, y0: &DVector<f64>, p: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
        self.check_dims(x.as_slice(), y0.as_slice(), p.as_slice())?;
        let (n, m) = (self.n_diff(), self.n_alg());
        let mut y = y0.clone();
        let mut res = f64::INFINITY;
        for it in 0..50 {
            let (_, g) = self.evaluate_residuals(x, &y, p)?;
            res = g.amax();
            if res <= tol {
                return Ok(y);
            }
            let jac = self.jacobian_columns(x.as_slice(), y.as_slice(), p.as_slice(), n..n + m, JacobianScheme::Auto)?;
            let g_y = jac.view((n, 0), (m, m)).into_owned();
            let dy = linalg::lu_solve(&g_y, &g).ok_or(Error::SingularIteration { iteration: it })?;
            y -= dy;
        }
        Err(Error::InconsistentInitial { residual: res })
    }
}

impl JacobianBundle {
    /// Builds the bundle and performs the Schur-complement reduction.
    pub fn from_blocks(
        f_x: DMatrix<f64>,
        f_y: DMatrix<f64>,
        g_x: DMatrix<f64>,
        g_y: DMatrix<f64>,
        f_p: DMatrix<f64>,
        g_p: DMatrix<f64>,
    ) -> Result<Self> {
        let (reduced_a, reduced_fp, gy_condition) = if g_y.nrows() == 0 {
            (f_x.clone(), f_p.clone(), 1.0)
        } else {
            let cond = linalg::condition_number(&g_y);
            if !(cond <= MAX_GY_CONDITION) {
                return Err(Error::SingularAlgebraic { condition: cond });
            }
            let lu = g_y.clone().lu();
            let sx = lu.solve(&g_x).ok_or(Error::SingularAlgebraic { condition: cond })?;
            let sp = lu.solve(&g_p).ok_or(Error::SingularAlgebraic { condition: cond })?;
            (&f_x - &f_y * sx, &f_p - &f_y * sp, cond)
        };
        Ok(JacobianBundle {
            f_x,
            f_y,
            g_x,
            g_y,
            f_p,
            g_p,
            reduced_a,
            reduced_fp,
            gy_condition,
        })
    }

    pub fn n_diff(&self) -> usize {
        self.f_x.nrows()
    }

    /// Full square Jacobian `[[f_x, f_y], [g_x, g_y]]`.
    pub fn full_state(&self) -> DMatrix<f64> {
        let (n, m) = (self.f_x.nrows(), self.g_y.nrows());
        let mut j = DMatrix::zeros(n + m, n + m);
        j.view_mut((0, 0), (n, n)).copy_from(&self.f_x);
        j.view_mut((0, n), (n, m)).copy_from(&self.f_y);
        j.view_mut((n, 0), (m, n)).copy_from(&self.g_x);
        j.view_mut((n, n), (m, m)).copy_from(&self.g_y);
        j
    }

    /// Parameter Jacobian `[f_p; g_p]`.
    pub fn full_param(&self) -> DMatrix<f64> {
        let (n, m, np) = (self.f_p.nrows(), self.g_p.nrows(), self.f_p.ncols());
        let mut j = DMatrix::zeros(n + m, np);
        j.view_mut((0, 0), (n, np)).copy_from(&self.f_p);
        j.view_mut((n, 0), (m, np)).copy_from(&self.g_p);
        j
    }

    /// Algebraic sensitivity `dy = -g_y^{-1} g_x dx` for a differential-state
    /// direction; used to lift reduced vectors to full ones.
    pub fn lift(&self, dx: &DVector<f64>) -> DVector<f64> {
        if self.g_y.nrows() == 0 {
            return DVector::zeros(0);
        }
        let rhs = -(&self.g_x * dx);
        linalg::lu_solve(&self.g_y, &rhs).unwrap_or_else(|| DVector::zeros(self.g_y.nrows()))
    }
}

/// Eigenvalues with right and left eigenvectors of the reduced Jacobian.
pub fn reduced_spectrum(bundle: &JacobianBundle) -> Result<Spectrum> {
    linalg::eigen_decompose(&bundle.reduced_a)
}

pub fn stack(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.len() + b.len());
    out.rows_mut(0, a.len()).copy_from(a);
    out.rows_mut(a.len(), b.len()).copy_from(b);
    out
}
