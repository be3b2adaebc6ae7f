//! Fold (saddle-node) location along a parameter ray and certification of
//! the saddle-node conditions.
//!
//! The ray is `p(s) = p0 + s k`. Natural-parameter continuation walks `s`
//! upward from zero with adaptive steps. A fold is bracketed either by Newton
//! failure (the branch ends) or by a real eigenvalue crossing zero, refined by
//! step halving and finally polished with the Moore-Spence system
//! `F(z, s) = 0, J(z, s) v = 0, c.v = 1`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::equilibrium::{continuation_warm_start, linearize, newton_solve, Equilibrium, NewtonOptions};
use crate::error::{Error, Result};
use crate::linalg::{self, Spectrum, C64};
use crate::model::{stack, JacobianBundle, JacobianScheme, ParametricDae};

/// What a scan does when a complex pair crosses into the right half-plane
/// before any real eigenvalue does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HopfPolicy {
    /// End the scan with [`ScanOutcome::NonFoldInstability`].
    #[default]
    Stop,
    /// Note the crossing and keep following the equilibrium branch to its fold.
    Record,
}

/// A one-dimensional scan `p0 + s k` for `s` in `[0, s_max]`.
#[derive(Debug, Clone)]
pub struct ScanSpec {
    pub direction: DVector<f64>,
    pub s_max: f64,
    pub initial_step: f64,
    pub max_step: f64,
    pub shrink: f64,
    pub grow: f64,
    /// Width at which the bracket is handed to the polish step.
    pub bracket_tol: f64,
    /// Scanned coordinate when the ray is a coordinate direction.
    pub index: Option<usize>,
    pub hopf: HopfPolicy,
}

impl ScanSpec {
    /// A general ray of length `s_max` along `k`.
    pub fn along(direction: DVector<f64>, s_max: f64) -> Result<Self> {
        if direction.norm() == 0.0 || !direction.iter().all(|v| v.is_finite()) {
            return Err(Error::Config("scan direction must be finite and nonzero".into()));
        }
        if !(s_max > 0.0) {
            return Err(Error::Config("scan length must be positive".into()));
        }
        Ok(ScanSpec {
            direction,
            s_max,
            initial_step: s_max / 200.0,
            max_step: s_max / 25.0,
            shrink: 0.5,
            grow: 1.5,
            bracket_tol: 1e-6,
            index: None,
            hopf: HopfPolicy::Stop,
        })
    }

    /// Scan of coordinate `index` (of `m` parameters) from `start` toward the
    /// endpoint of `[lo, hi]` farther from it.
    pub fn coordinate(m: usize, index: usize, start: f64, lo: f64, hi: f64) -> Result<Self> {
        if index >= m {
            return Err(Error::Config(format!("scan index {index} out of range")));
        }
        if !(lo <= start && start <= hi) {
            return Err(Error::Config(format!(
                "scan range [{lo}, {hi}] does not contain the starting value {start}"
            )));
        }
        let (sign, len) = if hi - start >= start - lo {
            (1.0, hi - start)
        } else {
            (-1.0, start - lo)
        };
        let mut k = DVector::zeros(m);
        k[index] = sign;
        let mut spec = ScanSpec::along(k, len)?;
        spec.index = Some(index);
        Ok(spec)
    }

    pub fn with_hopf_policy(mut self, policy: HopfPolicy) -> Self {
        self.hopf = policy;
        self
    }

    pub fn point(&self, p0: &DVector<f64>, s: f64) -> DVector<f64> {
        p0 + &self.direction * s
    }
}

/// One accepted continuation step.
#[derive(Debug, Clone)]
pub struct BranchPoint {
    pub s: f64,
    pub newton_iterations: usize,
    pub max_real: f64,
    /// Real eigenvalue closest to zero, if any.
    pub critical_real: Option<f64>,
    /// Fold eigenvalue followed backward from the fold by eigenvector overlap.
    pub tracked: Option<C64>,
    /// `|v_prev^H v|` between this point's tracked eigenvector and the next one.
    pub overlap: Option<f64>,
}

#[derive(Debug, Clone)]
pub enum ScanOutcome {
    Fold(Box<FoldPoint>),
    NoFoldInRange { s_end: f64 },
    /// A complex pair crossed into the right half-plane first.
    NonFoldInstability { s: f64, eigenvalue: C64 },
}

#[derive(Debug, Clone)]
pub struct ScanResult {
    pub outcome: ScanOutcome,
    pub branch: Vec<BranchPoint>,
    /// First accepted point with a complex pair in the right half-plane
    /// (only under [`HopfPolicy::Record`]).
    pub hopf_crossing: Option<(f64, C64)>,
}

impl ScanResult {
    pub fn fold(&self) -> Option<&FoldPoint> {
        match &self.outcome {
            ScanOutcome::Fold(f) => Some(f),
            _ => None,
        }
    }

    pub fn into_fold(self) -> Option<FoldPoint> {
        match self.outcome {
            ScanOutcome::Fold(f) => Some(*f),
            _ => None,
        }
    }

    /// The fold, or the reason the scan ended without one as an error.
    pub fn require_fold(self) -> Result<FoldPoint> {
        match self.outcome {
            ScanOutcome::Fold(f) => Ok(*f),
            ScanOutcome::NoFoldInRange { s_end } => Err(Error::NoFold { s_end }),
            ScanOutcome::NonFoldInstability { s, eigenvalue } => Err(Error::HopfBeforeFold {
                s,
                re: eigenvalue.re,
                im: eigenvalue.im,
            }),
        }
    }
}

/// Starting data for the Moore-Spence polish.
#[derive(Debug, Clone)]
pub struct FoldSeed {
    pub s: f64,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    /// Approximate null vector of the full Jacobian `[[f_x, f_y], [g_x, g_y]]`.
    pub v: DVector<f64>,
}

/// Results of the saddle-node checks at a fold.
#[derive(Debug, Clone)]
pub struct GenericityChecks {
    /// Singular values of the reduced Jacobian, descending.
    pub singular_values: Vec<f64>,
    pub rank_deficiency_one: bool,
    pub simple_zero: bool,
    pub transversality: f64,
    pub transversality_ok: bool,
    pub nondegeneracy: f64,
    pub nondegeneracy_ok: bool,
    /// Second derivative of the ray coordinate along the branch.
    pub quadratic_turn: f64,
    pub quadratic_turn_ok: bool,
    /// `w . v` for the unit null vectors.
    pub null_overlap: f64,
}

impl GenericityChecks {
    pub fn all_pass(&self) -> bool {
        self.rank_deficiency_one
            && self.simple_zero
            && self.transversality_ok
            && self.nondegeneracy_ok
            && self.quadratic_turn_ok
    }
}

/// A located fold.
#[derive(Debug, Clone)]
pub struct FoldPoint {
    /// Ray origin `p0`.
    pub base: DVector<f64>,
    pub direction: DVector<f64>,
    pub s: f64,
    /// `p0 + s k`.
    pub params: DVector<f64>,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    /// Right null vector of the reduced Jacobian (unit length).
    pub v: DVector<f64>,
    /// Left null vector of the reduced Jacobian (unit length).
    pub w: DVector<f64>,
    /// Right null vector of the full Jacobian.
    pub v_full: DVector<f64>,
    pub bundle: JacobianBundle,
    pub spectrum: Spectrum,
    pub residual_norm: f64,
    pub polish_iterations: usize,
    pub index: Option<usize>,
    pub checks: Option<GenericityChecks>,
}

impl FoldPoint {
    /// Distance from the ray origin, `s |k|`.
    pub fn margin(&self) -> f64 {
        self.s * self.direction.norm()
    }

    /// Scanned coordinate value at the fold, for coordinate scans.
    pub fn critical_value(&self) -> Option<f64> {
        self.index.map(|i| self.params[i])
    }
}

const SIMPLE_ZERO_RATIO: f64 = 1e-8;
const RANK_GAP_RATIO: f64 = 1e-8;
const RANK_ZERO_RATIO: f64 = 1e-10;
const NONZERO_OVERLAP: f64 = 1e-8;
const NONZERO_COEFFICIENT: f64 = 1e-6;

/// Rank test on descending singular values: exactly one numerically zero,
/// measured against `max(sigma_1, 1)`.
pub fn rank_deficient_by_one(sv: &[f64]) -> bool {
    let n = sv.len();
    let scale = sv.first().copied().unwrap_or(0.0).max(1.0);
    let gap_ok = n < 2 || sv[n - 2] / scale > RANK_GAP_RATIO;
    n >= 1 && gap_ok && sv[n - 1] / scale < RANK_ZERO_RATIO
}

/// Continues the equilibrium branch from `p0` along the scan until a fold,
/// a non-fold instability, or the end of the range.
pub fn trace_to_fold(model: &ParametricDae, p0: &DVector<f64>, scan: &ScanSpec) -> Result<ScanResult> {
    trace_from(model, p0, scan, None)
}

/// As [`trace_to_fold`] with an explicit starting guess for the first solve.
pub fn trace_from(
    model: &ParametricDae,
    p0: &DVector<f64>,
    scan: &ScanSpec,
    guess: Option<(&DVector<f64>, &DVector<f64>)>,
) -> Result<ScanResult> {
    let opts = NewtonOptions::default();
    let (gx, gy) = match guess {
        Some((x, y)) => (x.clone(), y.clone()),
        None => model.initial_guess(p0),
    };
    let start = linearize(model, p0, newton_solve(model, p0, &gx, &gy, &opts)?)?;
    if !start.stable {
        return Err(Error::NotStable {
            max_real: start.spectrum.max_real(),
        });
    }

    let mut branch = vec![branch_point(0.0, &start)];
    let mut spectra = vec![start.spectrum.clone()];
    let mut cur = start;
    let mut prev: Option<Equilibrium> = None;
    let mut s = 0.0;
    let mut h = scan.initial_step.min(scan.s_max);

    let mut hopf_crossing = None;
    loop {
        if s >= scan.s_max {
            return Ok(ScanResult {
                outcome: ScanOutcome::NoFoldInRange { s_end: s },
                branch,
                hopf_crossing,
            });
        }
        let s_new = (s + h).min(scan.s_max);
        let p_new = scan.point(p0, s_new);
        let (wx, wy) = continuation_warm_start(&cur, prev.as_ref(), &p_new);
        let attempt = newton_solve(model, &p_new, &wx, &wy, &opts).and_then(|sol| linearize(model, &p_new, sol));

        let Ok(next) = attempt else {
            if h <= scan.bracket_tol {
                break;
            }
            h *= scan.shrink;
            continue;
        };
        // Once past a Hopf, complex pairs may merge into positive real pairs;
        // only a change in the parity of positive real eigenvalues (the sign
        // of det A) marks a real crossing through zero.
        let real_crossing = match scan.hopf {
            HopfPolicy::Stop => positive_reals(&next.spectrum) > 0,
            HopfPolicy::Record => positive_reals(&next.spectrum) % 2 == 1,
        };
        let complex = next.spectrum.rightmost_complex().map(|p| p.value).filter(|v| v.re >= 0.0);
        if real_crossing {
            if h <= scan.bracket_tol {
                break;
            }
            h *= scan.shrink;
            continue;
        }
        if let Some(mu) = complex {
            if scan.hopf == HopfPolicy::Stop {
                if h <= scan.bracket_tol {
                    return Ok(ScanResult {
                        outcome: ScanOutcome::NonFoldInstability { s: s_new, eigenvalue: mu },
                        branch,
                        hopf_crossing: Some((s_new, mu)),
                    });
                }
                h *= scan.shrink;
                continue;
            }
            hopf_crossing.get_or_insert((s_new, mu));
        }
        let iters = next.iterations;
        branch.push(branch_point(s_new, &next));
        spectra.push(next.spectrum.clone());
        prev = Some(std::mem::replace(&mut cur, next));
        s = s_new;
        if iters <= 4 {
            h = (h * scan.grow).min(scan.max_step);
        }
    }

    let seed = seed_from(&cur, s);
    let mut fold = moore_spence_polish(model, p0, &scan.direction, &seed)?;
    fold.index = scan.index;
    let checks = certify_genericity(model, &fold);
    fold.checks = Some(checks);
    track_fold_eigenvalue(&mut branch, &spectra, &fold);
    Ok(ScanResult {
        outcome: ScanOutcome::Fold(Box::new(fold)),
        branch,
        hopf_crossing,
    })
}

fn branch_point(s: f64, eq: &Equilibrium) -> BranchPoint {
    BranchPoint {
        s,
        newton_iterations: eq.iterations,
        max_real: eq.spectrum.max_real(),
        critical_real: eq.spectrum.critical_real().map(|p| p.value.re),
        tracked: None,
        overlap: None,
    }
}

/// Follows the fold eigenvector backward through the stored spectra.
fn track_fold_eigenvalue(branch: &mut [BranchPoint], spectra: &[Spectrum], fold: &FoldPoint) {
    let mut target: DVector<C64> = fold.v.map(|v| C64::new(v, 0.0));
    for (bp, spec) in branch.iter_mut().zip(spectra).rev() {
        let best = spec
            .pairs
            .iter()
            .map(|p| (p, p.right.dotc(&target).norm()))
            .max_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((pair, ov)) = best {
            bp.tracked = Some(pair.value);
            bp.overlap = Some(ov);
            target = pair.right.clone();
        }
    }
}

/// Builds a polish seed from the last stable point of the branch.
fn positive_reals(spec: &Spectrum) -> usize {
    spec.pairs.iter().filter(|p| p.is_real() && p.value.re >= 0.0).count()
}

fn seed_from(eq: &Equilibrium, s: f64) -> FoldSeed {
    let np = linalg::null_pair(&eq.jacobian.reduced_a);
    let vx = np.right;
    let vy = eq.jacobian.lift(&vx);
    let v = stack(&vx, &vy);
    FoldSeed {
        s,
        x: eq.x.clone(),
        y: eq.y.clone(),
        v,
    }
}

/// Central-difference derivative of the full state Jacobian along `dir`,
/// which equals the matrix `d(J(z) dir)/dz`.
fn jacobian_directional(
    model: &ParametricDae,
    n: usize,
    z: &DVector<f64>,
    p: &DVector<f64>,
    dir: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let eps = 1e-6 * (1.0 + z.amax()) / dir.amax().max(1e-300);
    let jac_at = |zz: &DVector<f64>| {
        let x = zz.rows(0, n).into_owned();
        let y = zz.rows(n, zz.len() - n).into_owned();
        model.state_jacobian(&x, &y, p, JacobianScheme::Auto)
    };
    let jp = jac_at(&(z + dir * eps))?;
    let jm = jac_at(&(z - dir * eps))?;
    Ok((jp - jm) / (2.0 * eps))
}

/// Newton on the Moore-Spence system for `(z, v, s)`. The normalization
/// vector is the seed's null vector.
pub fn moore_spence_polish(
    model: &ParametricDae,
    base: &DVector<f64>,
    direction: &DVector<f64>,
    seed: &FoldSeed,
) -> Result<FoldPoint> {
    let (n, m) = (model.n_diff(), model.n_alg());
    let nz = n + m;
    let c = seed.v.clone() / seed.v.norm_squared();
    let mut z = stack(&seed.x, &seed.y);
    let mut v = seed.v.clone() / seed.v.dot(&c);
    let mut s = seed.s;
    let tol = 1e-10;
    let max_iter = 30;

    let split = |z: &DVector<f64>| (z.rows(0, n).into_owned(), z.rows(n, m).into_owned());
    let residual = |z: &DVector<f64>, v: &DVector<f64>, s: f64| -> Result<(DVector<f64>, DMatrix<f64>)> {
        let p = base + direction * s;
        let (x, y) = split(z);
        let f = model.stacked_residual(&x, &y, &p)?;
        let j = model.state_jacobian(&x, &y, &p, JacobianScheme::Auto)?;
        let mut r = DVector::zeros(2 * nz + 1);
        r.rows_mut(0, nz).copy_from(&f);
        r.rows_mut(nz, nz).copy_from(&(&j * v));
        r[2 * nz] = c.dot(v) - 1.0;
        Ok((r, j))
    };

    let mut iterations = 0;
    let mut norm = f64::INFINITY;
    for it in 0..=max_iter {
        let (r, j) = residual(&z, &v, s)?;
        norm = r.amax();
        if norm <= tol || it == max_iter {
            iterations = it;
            break;
        }
        let p = base + direction * s;
        let (x, y) = split(&z);
        let jp = model.param_jacobian(&x, &y, &p, JacobianScheme::Auto)?;
        let f_s = &jp * direction;
        let hv = jacobian_directional(model, n, &z, &p, &v)?;
        let ds = 1e-6 * (1.0 + s.abs());
        let jv_at = |sv: f64| -> Result<DVector<f64>> {
            let pp = base + direction * sv;
            Ok(model.state_jacobian(&x, &y, &pp, JacobianScheme::Auto)? * &v)
        };
        let jv_s = (jv_at(s + ds)? - jv_at(s - ds)?) / (2.0 * ds);

        let dim = 2 * nz + 1;
        let mut big = DMatrix::zeros(dim, dim);
        big.view_mut((0, 0), (nz, nz)).copy_from(&j);
        big.view_mut((0, 2 * nz), (nz, 1)).copy_from(&f_s);
        big.view_mut((nz, 0), (nz, nz)).copy_from(&hv);
        big.view_mut((nz, nz), (nz, nz)).copy_from(&j);
        big.view_mut((nz, 2 * nz), (nz, 1)).copy_from(&jv_s);
        big.view_mut((2 * nz, nz), (1, nz)).copy_from(&c.transpose());
        let cond = linalg::condition_number(&big);
        if !(cond < 1e15) {
            return Err(Error::Degenerate(format!(
                "augmented Jacobian condition {cond:.2e} at iteration {it}; transversality is likely violated"
            )));
        }
        let d = linalg::lu_solve(&big, &r)
            .ok_or_else(|| Error::Degenerate(format!("augmented Jacobian singular at iteration {it}")))?;
        z -= d.rows(0, nz);
        v -= d.rows(nz, nz);
        s -= d[2 * nz];
        if !s.is_finite() {
            return Err(Error::Degenerate("polish diverged".into()));
        }
    }
    if norm > tol {
        return Err(Error::NewtonDiverged {
            iterations: max_iter,
            residual: norm,
        });
    }

    let params = base + direction * s;
    let (x, y) = split(&z);
    let bundle = model.assemble_jacobians(&x, &y, &params, JacobianScheme::Auto)?;
    let spectrum = crate::model::reduced_spectrum(&bundle)?;
    let np = linalg::null_pair(&bundle.reduced_a);
    let v_red = linalg::orient_real(v.rows(0, n).into_owned());
    let v_red = if v_red.norm() > 0.0 { v_red } else { np.right.clone() };
    Ok(FoldPoint {
        base: base.clone(),
        direction: direction.clone(),
        s,
        params,
        x,
        y,
        v: v_red,
        w: np.left,
        v_full: v.clone() / v.norm(),
        bundle,
        spectrum,
        residual_norm: norm,
        polish_iterations: iterations,
        index: None,
        checks: None,
    })
}

/// Reduced vector field `f(x, y(x), p)` with `y` solved from `g = 0`.
fn reduced_field(model: &ParametricDae, x: &DVector<f64>, y0: &DVector<f64>, p: &DVector<f64>) -> Result<DVector<f64>> {
    let y = model.solve_algebraic(x, y0, p, 1e-14 * (1.0 + y0.amax()))?;
    Ok(model.evaluate_residuals(x, &y, p)?.0)
}

/// `w . D^2 F[v, v]` for the reduced field by central second differences with
/// one Richardson step.
pub fn nondegeneracy_value(model: &ParametricDae, fold: &FoldPoint) -> Result<f64> {
    let second = |h: f64| -> Result<DVector<f64>> {
        let fp = reduced_field(model, &(&fold.x + &fold.v * h), &fold.y, &fold.params)?;
        let f0 = reduced_field(model, &fold.x, &fold.y, &fold.params)?;
        let fm = reduced_field(model, &(&fold.x - &fold.v * h), &fold.y, &fold.params)?;
        Ok((fp - f0 * 2.0 + fm) / (h * h))
    };
    let h = 1e-2;
    let d1 = second(h)?;
    let d2 = second(0.5 * h)?;
    let d = &d2 + (&d2 - &d1) / 3.0;
    Ok(fold.w.dot(&d))
}

/// Solves the branch point with `v.(x - x*) = sigma`, returning the ray
/// coordinate `s`.
fn bordered_branch_point(model: &ParametricDae, fold: &FoldPoint, sigma: f64) -> Result<f64> {
    let (n, m) = (model.n_diff(), model.n_alg());
    let nz = n + m;
    let mut z = stack(&fold.x, &fold.y) + &fold.v_full * (sigma / fold.v_full.rows(0, n).dot(&fold.v));
    let mut s = fold.s;
    let k = &fold.direction;
    for _ in 0..40 {
        let p = &fold.base + k * s;
        let x = z.rows(0, n).into_owned();
        let y = z.rows(n, m).into_owned();
        let f = model.stacked_residual(&x, &y, &p)?;
        let mut r = DVector::zeros(nz + 1);
        r.rows_mut(0, nz).copy_from(&f);
        r[nz] = fold.v.dot(&(&x - &fold.x)) - sigma;
        if r.amax() <= 1e-13 * (1.0 + z.amax()) {
            return Ok(s);
        }
        let j = model.state_jacobian(&x, &y, &p, JacobianScheme::Auto)?;
        let jp = model.param_jacobian(&x, &y, &p, JacobianScheme::Auto)?;
        let mut big = DMatrix::zeros(nz + 1, nz + 1);
        big.view_mut((0, 0), (nz, nz)).copy_from(&j);
        big.view_mut((0, nz), (nz, 1)).copy_from(&(&jp * k));
        big.view_mut((nz, 0), (1, n)).copy_from(&fold.v.transpose());
        let d = linalg::lu_solve(&big, &r).ok_or_else(|| Error::Degenerate("bordered branch system singular".into()))?;
        z -= d.rows(0, nz);
        s -= d[nz];
        if d.amax() <= 1e-15 * (1.0 + z.amax()) {
            return Ok(s);
        }
    }
    Err(Error::NewtonDiverged {
        iterations: 40,
        residual: f64::NAN,
    })
}

/// `d^2 s / d sigma^2` along the branch from a least-squares parabola through
/// five bordered solves around the fold.
pub fn quadratic_turn(model: &ParametricDae, fold: &FoldPoint) -> Result<f64> {
    let h = 5e-3;
    let sigmas = [-2.0 * h, -h, 0.0, h, 2.0 * h];
    let mut a = DMatrix::zeros(5, 3);
    let mut b = DVector::zeros(5);
    for (i, &sg) in sigmas.iter().enumerate() {
        let s = bordered_branch_point(model, fold, sg)?;
        a[(i, 0)] = 1.0;
        a[(i, 1)] = sg;
        a[(i, 2)] = sg * sg;
        b[i] = s - fold.s;
    }
    let ata = a.transpose() * &a;
    let atb = a.transpose() * b;
    let coef = linalg::lu_solve(&ata, &atb).ok_or_else(|| Error::Degenerate("parabola fit singular".into()))?;
    Ok(2.0 * coef[2])
}

/// Evaluates the saddle-node conditions at a located fold. Failing checks are
/// reported in the record, not raised.
pub fn certify_genericity(model: &ParametricDae, fold: &FoldPoint) -> GenericityChecks {
    let a = &fold.bundle.reduced_a;
    let sv = linalg::singular_values(a);
    let scale = sv.first().copied().unwrap_or(0.0).max(1.0);
    let below = sv.iter().filter(|&&s| s < SIMPLE_ZERO_RATIO * scale).count();
    let rank_ok = rank_deficient_by_one(&sv);
    let null_overlap = fold.w.dot(&fold.v);
    let transversality = fold.w.dot(&(&fold.bundle.reduced_fp * &fold.direction));
    let nondegeneracy = nondegeneracy_value(model, fold).unwrap_or(f64::NAN);
    let quadratic = quadratic_turn(model, fold).unwrap_or(f64::NAN);
    GenericityChecks {
        singular_values: sv,
        rank_deficiency_one: rank_ok,
        simple_zero: below == 1 && null_overlap.abs() > NONZERO_OVERLAP,
        transversality,
        transversality_ok: transversality.abs() > NONZERO_COEFFICIENT,
        nondegeneracy,
        nondegeneracy_ok: nondegeneracy.abs() > NONZERO_COEFFICIENT,
        quadratic_turn: quadratic,
        quadratic_turn_ok: quadratic.abs() > NONZERO_COEFFICIENT,
        null_overlap,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DaeEquations, Labels, Real};

    struct NormalForm;

    impl DaeEquations for NormalForm {
        fn residuals<D: Real>(&self, x: &[D], _y: &[D], p: &[D], f: &mut [D], _g: &mut [D]) {
            f[0] = p[0] - x[0] * x[0];
        }
    }

    fn normal_form() -> ParametricDae {
        ParametricDae::from_equations("nf", Labels::new(&["x"], &[] as &[&str], &["lambda"]), NormalForm)
            .unwrap()
            .with_initial_guess(|p| (DVector::from_vec(vec![p[0].max(0.0).sqrt()]), DVector::zeros(0)))
    }

    #[test]
    fn coordinate_scan_picks_far_end() {
        let s = ScanSpec::coordinate(2, 1, 1.0, 0.3, 1.2).unwrap();
        assert_eq!(s.direction[1], -1.0);
        assert!((s.s_max - 0.7).abs() < 1e-15);
        assert!(ScanSpec::coordinate(2, 1, 2.0, 0.3, 1.2).is_err());
    }

    #[test]
    fn normal_form_fold() {
        let m = normal_form();
        let scan = ScanSpec::coordinate(1, 0, 1.0, -1.0, 1.0).unwrap();
        let res = trace_to_fold(&m, &DVector::from_vec(vec![1.0]), &scan).unwrap();
        let fold = res.fold().expect("fold found");
        assert!(fold.params[0].abs() < 1e-10);
        assert!(fold.x[0].abs() < 1e-8);
        let c = fold.checks.as_ref().unwrap();
        assert!(c.all_pass(), "{c:?}");
        assert!((c.nondegeneracy + 2.0).abs() < 1e-6);
        // k = -1 flips the sign of w f_lambda k
        assert!((c.transversality + 1.0).abs() < 1e-9);
        // s(sigma) = 1 - sigma^2 along k = -1
        assert!((c.quadratic_turn + 2.0).abs() < 1e-6);
    }

    #[test]
    fn polish_fixed_point() {
        let m = normal_form();
        let seed = FoldSeed {
            s: 1.0,
            x: DVector::from_vec(vec![0.0]),
            y: DVector::zeros(0),
            v: DVector::from_vec(vec![1.0]),
        };
        let fold = moore_spence_polish(&m, &DVector::from_vec(vec![1.0]), &DVector::from_vec(vec![-1.0]), &seed).unwrap();
        assert!(fold.polish_iterations <= 2);
        assert!((fold.s - 1.0).abs() < 1e-14);
    }

    #[test]
    fn no_fold_in_range() {
        let m = normal_form();
        let scan = ScanSpec::coordinate(1, 0, 1.0, 1.0, 3.0).unwrap();
        let res = trace_to_fold(&m, &DVector::from_vec(vec![1.0]), &scan).unwrap();
        assert!(matches!(res.outcome, ScanOutcome::NoFoldInRange { .. }));
    }
}
