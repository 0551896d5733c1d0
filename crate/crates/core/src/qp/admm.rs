//! Dense operator-splitting QP solver.
//!
//! Solves
//!
//! ```text
//!     minimize    1/2 x' P x + q' x
//!     subject to  l <= A x <= u
//! ```
//!
//! with the ADMM iteration popularized by OSQP: a regularized reduced KKT
//! system is factored once per penalty value, the step-size `rho` adapts to
//! the residual ratio, and a final polishing pass solves the equality
//! system of the guessed active set to recover a high-accuracy solution.
//! `P` only needs to be positive semidefinite. Everything is dense and
//! allocation happens up front; problems here have a handful of variables.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_SCALE: f64 = 1e3;
const INF: f64 = 1e20;

#[derive(Debug, Clone)]
pub struct DenseQp {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a: DMatrix<f64>,
    pub l: DVector<f64>,
    pub u: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmSettings {
    pub max_iter: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eps_prim_inf: f64,
    pub eps_dual_inf: f64,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub adaptive_rho: bool,
    pub check_every: usize,
    pub polish: bool,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            eps_abs: 1e-8,
            eps_rel: 1e-6,
            eps_prim_inf: 1e-7,
            eps_dual_inf: 1e-7,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            adaptive_rho: true,
            check_every: 5,
            polish: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdmmStatus {
    Solved,
    MaxIterations,
    PrimalInfeasible,
    DualInfeasible,
}

#[derive(Debug, Clone)]
pub struct AdmmSolution {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub status: AdmmStatus,
    pub iterations: usize,
    pub prim_res: f64,
    pub dual_res: f64,
    pub polished: bool,
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn project(v: &DVector<f64>, l: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(v.len(), v.iter().zip(l.iter().zip(u.iter())).map(|(x, (lo, hi))| x.clamp(*lo, *hi)))
}

/// Constraint rows scaled to unit norm; returns the scaled problem and the
/// per-row scale factors `d` with `A_scaled = diag(d) A`.
fn equilibrate(qp: &DenseQp) -> (DenseQp, DVector<f64>) {
    let mut scaled = qp.clone();
    let mut d = DVector::from_element(qp.a.nrows(), 1.0);
    for i in 0..qp.a.nrows() {
        let norm = qp.a.row(i).norm();
        if norm > 1e-12 {
            let s = 1.0 / norm;
            d[i] = s;
            scaled.a.row_mut(i).scale_mut(s);
            scaled.l[i] = if qp.l[i] <= -INF { -INF } else { qp.l[i] * s };
            scaled.u[i] = if qp.u[i] >= INF { INF } else { qp.u[i] * s };
        }
    }
    (scaled, d)
}

fn rho_vector(rho: f64, l: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        l.len(),
        l.iter().zip(u.iter()).map(|(lo, hi)| {
            if *lo <= -INF && *hi >= INF {
                RHO_MIN
            } else if (hi - lo).abs() < 1e-12 {
                RHO_EQ_SCALE * rho
            } else {
                rho
            }
        }),
    )
}

struct Kkt {
    chol: Cholesky<f64, Dyn>,
}

impl Kkt {
    fn factor(qp: &DenseQp, sigma: f64, rho: &DVector<f64>) -> Self {
        let n = qp.p.nrows();
        let mut m = qp.p.clone();
        for i in 0..n {
            m[(i, i)] += sigma;
        }
        let weighted = DMatrix::from_fn(qp.a.nrows(), n, |r, c| qp.a[(r, c)] * rho[r]);
        m += qp.a.tr_mul(&weighted);
        let chol = Cholesky::new(m).expect("P + sigma I + A' rho A is positive definite");
        Self { chol }
    }
}

struct Residuals {
    prim: f64,
    dual: f64,
    eps_prim: f64,
    eps_dual: f64,
    prim_scale: f64,
    dual_scale: f64,
}

fn residuals(qp: &DenseQp, x: &DVector<f64>, z: &DVector<f64>, y: &DVector<f64>, s: &AdmmSettings) -> Residuals {
    let ax = &qp.a * x;
    let px = &qp.p * x;
    let aty = qp.a.tr_mul(y);
    let prim = inf_norm(&(&ax - z));
    let dual = inf_norm(&(&px + &qp.q + &aty));
    let prim_scale = inf_norm(&ax).max(inf_norm(z));
    let dual_scale = inf_norm(&px).max(inf_norm(&aty)).max(inf_norm(&qp.q));
    Residuals {
        prim,
        dual,
        eps_prim: s.eps_abs + s.eps_rel * prim_scale,
        eps_dual: s.eps_abs + s.eps_rel * dual_scale,
        prim_scale,
        dual_scale,
    }
}

fn primal_infeasible(qp: &DenseQp, dy: &DVector<f64>, eps: f64) -> bool {
    let norm = inf_norm(dy);
    if norm < 1e-30 {
        return false;
    }
    if inf_norm(&qp.a.tr_mul(dy)) > eps * norm {
        return false;
    }
    let mut support = 0.0;
    for i in 0..dy.len() {
        if dy[i] > 0.0 {
            if qp.u[i] >= INF {
                return false;
            }
            support += qp.u[i] * dy[i];
        } else if dy[i] < 0.0 {
            if qp.l[i] <= -INF {
                return false;
            }
            support += qp.l[i] * dy[i];
        }
    }
    support < -eps * norm
}

fn dual_infeasible(qp: &DenseQp, dx: &DVector<f64>, eps: f64) -> bool {
    let norm = inf_norm(dx);
    if norm < 1e-30 {
        return false;
    }
    if inf_norm(&(&qp.p * dx)) > eps * norm || qp.q.dot(dx) >= -eps * norm {
        return false;
    }
    let adx = &qp.a * dx;
    (0..adx.len()).all(|i| {
        let v = adx[i];
        let lo_ok = qp.l[i] <= -INF || v >= -eps * norm;
        let hi_ok = qp.u[i] >= INF || v <= eps * norm;
        lo_ok && hi_ok
    })
}

/// Solves the equality-constrained QP of the guessed active set and
/// returns `(x, y)` if it is primal and dual feasible.
fn polish(qp: &DenseQp, z: &DVector<f64>, y: &DVector<f64>, s: &AdmmSettings) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = qp.p.nrows();
    let mut active = Vec::new();
    let mut bound = Vec::new();
    for i in 0..qp.a.nrows() {
        if z[i] - qp.l[i] < -y[i] {
            active.push(i);
            bound.push(qp.l[i]);
        } else if qp.u[i] - z[i] < y[i] {
            active.push(i);
            bound.push(qp.u[i]);
        }
    }
    let na = active.len();
    let size = n + na;
    let mut kkt = DMatrix::zeros(size, size);
    kkt.view_mut((0, 0), (n, n)).copy_from(&qp.p);
    for (r, &i) in active.iter().enumerate() {
        for c in 0..n {
            kkt[(n + r, c)] = qp.a[(i, c)];
            kkt[(c, n + r)] = qp.a[(i, c)];
        }
    }
    let mut rhs = DVector::zeros(size);
    rhs.rows_mut(0, n).copy_from(&(-&qp.q));
    for (r, b) in bound.iter().enumerate() {
        rhs[n + r] = *b;
    }
    let delta = 1e-9;
    let mut reg = kkt.clone();
    for i in 0..n {
        reg[(i, i)] += delta;
    }
    for i in n..size {
        reg[(i, i)] -= delta;
    }
    let lu = LU::new(reg);
    let mut sol = lu.solve(&rhs)?;
    for _ in 0..5 {
        let resid = &rhs - &kkt * &sol;
        if inf_norm(&resid) < 1e-14 {
            break;
        }
        sol += lu.solve(&resid)?;
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let x = sol.rows(0, n).into_owned();
    let mut y_full = DVector::zeros(qp.a.nrows());
    for (r, &i) in active.iter().enumerate() {
        y_full[i] = sol[n + r];
    }
    // Dual signs: lower-active multipliers are non-positive, upper-active non-negative.
    let tol = 1e-9 * (1.0 + inf_norm(&y_full));
    for (r, &i) in active.iter().enumerate() {
        let lower = bound[r] == qp.l[i] && !(bound[r] == qp.u[i]);
        let upper = bound[r] == qp.u[i] && !(bound[r] == qp.l[i]);
        if (lower && y_full[i] > tol) || (upper && y_full[i] < -tol) {
            return None;
        }
    }
    let ax = &qp.a * &x;
    let viol = inf_norm(&(&ax - project(&ax, &qp.l, &qp.u)));
    let res = residuals(qp, &x, &project(&ax, &qp.l, &qp.u), &y_full, s);
    if viol <= res.eps_prim && res.dual <= res.eps_dual {
        Some((x, y_full))
    } else {
        None
    }
}

/// Solves `qp`, optionally warm-started from a previous `(x, y)` pair.
pub fn solve(qp: &DenseQp, settings: &AdmmSettings, warm: Option<(&DVector<f64>, &DVector<f64>)>) -> AdmmSolution {
    let n = qp.p.nrows();
    let m = qp.a.nrows();
    let (sqp, d) = equilibrate(qp);

    let mut x = DVector::zeros(n);
    let mut y = DVector::zeros(m);
    if let Some((x0, y0)) = warm {
        if x0.len() == n && y0.len() == m {
            x.copy_from(x0);
            // Scaled duals: y_scaled = y / d.
            y = y0.component_div(&d);
        }
    }
    let mut z = project(&(&sqp.a * &x), &sqp.l, &sqp.u);

    let mut rho = settings.rho;
    let mut rho_vec = rho_vector(rho, &sqp.l, &sqp.u);
    let mut kkt = Kkt::factor(&sqp, settings.sigma, &rho_vec);
    let mut status = AdmmStatus::MaxIterations;
    let mut iterations = settings.max_iter;

    for iter in 1..=settings.max_iter {
        let x_prev = x.clone();
        let y_prev = y.clone();

        let rhs = &x * settings.sigma - &sqp.q + sqp.a.tr_mul(&(rho_vec.component_mul(&z) - &y));
        let x_tilde = kkt.chol.solve(&rhs);
        let z_tilde = &sqp.a * &x_tilde;
        x = &x_tilde * settings.alpha + &x * (1.0 - settings.alpha);
        let z_relaxed = &z_tilde * settings.alpha + &z * (1.0 - settings.alpha);
        let z_next = project(&(&z_relaxed + y.component_div(&rho_vec)), &sqp.l, &sqp.u);
        y += rho_vec.component_mul(&(&z_relaxed - &z_next));
        z = z_next;

        if iter % settings.check_every != 0 && iter != settings.max_iter {
            continue;
        }
        let res = residuals(&sqp, &x, &z, &y, settings);
        if res.prim <= res.eps_prim && res.dual <= res.eps_dual {
            status = AdmmStatus::Solved;
            iterations = iter;
            break;
        }
        if primal_infeasible(&sqp, &(&y - &y_prev), settings.eps_prim_inf) {
            status = AdmmStatus::PrimalInfeasible;
            iterations = iter;
            break;
        }
        if dual_infeasible(&sqp, &(&x - &x_prev), settings.eps_dual_inf) {
            status = AdmmStatus::DualInfeasible;
            iterations = iter;
            break;
        }
        if settings.adaptive_rho && res.prim_scale > 0.0 && res.dual_scale > 0.0 && res.dual > 0.0 {
            let ratio = ((res.prim / res.prim_scale) / (res.dual / res.dual_scale)).sqrt();
            let candidate = (rho * ratio).clamp(RHO_MIN, RHO_MAX);
            if candidate > 5.0 * rho || candidate < 0.2 * rho {
                rho = candidate;
                rho_vec = rho_vector(rho, &sqp.l, &sqp.u);
                kkt = Kkt::factor(&sqp, settings.sigma, &rho_vec);
            }
        }
    }

    let mut polished = false;
    if settings.polish && matches!(status, AdmmStatus::Solved | AdmmStatus::MaxIterations) {
        if let Some((xp, yp)) = polish(&sqp, &z, &y, settings) {
            x = xp;
            y = yp;
            z = project(&(&sqp.a * &x), &sqp.l, &sqp.u);
            polished = true;
            status = AdmmStatus::Solved;
        }
    }
    let res = residuals(&sqp, &x, &z, &y, settings);
    AdmmSolution {
        x,
        y: y.component_mul(&d),
        status,
        iterations,
        prim_res: res.prim,
        dual_res: res.dual,
        polished,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn box_constrained_quadratic() {
        // min 1/2 (x^2 + y^2) - 2x - 2y  s.t. 0 <= x <= 1, 0 <= y <= 3
        let qp = DenseQp {
            p: DMatrix::identity(2, 2),
            q: DVector::from_vec(vec![-2.0, -2.0]),
            a: DMatrix::identity(2, 2),
            l: DVector::from_vec(vec![0.0, 0.0]),
            u: DVector::from_vec(vec![1.0, 3.0]),
        };
        let sol = solve(&qp, &AdmmSettings::default(), None);
        assert_eq!(sol.status, AdmmStatus::Solved);
        assert_abs_diff_eq!(sol.x, DVector::from_vec(vec![1.0, 2.0]), epsilon = 1e-9);
    }

    #[test]
    fn linear_program_hits_vertex() {
        // min -x - y  s.t. x + 2y <= 4, 3x + y <= 6, x, y >= 0  ->  (1.6, 1.2)
        let qp = DenseQp {
            p: DMatrix::zeros(2, 2),
            q: DVector::from_vec(vec![-1.0, -1.0]),
            a: DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 3.0, 1.0, 1.0, 0.0, 0.0, 1.0]),
            l: DVector::from_vec(vec![-INF, -INF, 0.0, 0.0]),
            u: DVector::from_vec(vec![4.0, 6.0, INF, INF]),
        };
        let sol = solve(&qp, &AdmmSettings::default(), None);
        assert_eq!(sol.status, AdmmStatus::Solved);
        assert_abs_diff_eq!(sol.x, DVector::from_vec(vec![1.6, 1.2]), epsilon = 1e-9);
    }

    #[test]
    fn unbounded_direction_is_reported() {
        // min -x  s.t. x >= 0
        let qp = DenseQp {
            p: DMatrix::zeros(1, 1),
            q: DVector::from_vec(vec![-1.0]),
            a: DMatrix::identity(1, 1),
            l: DVector::from_vec(vec![0.0]),
            u: DVector::from_vec(vec![INF]),
        };
        let sol = solve(&qp, &AdmmSettings::default(), None);
        assert_eq!(sol.status, AdmmStatus::DualInfeasible);
    }

    #[test]
    fn infeasible_bounds_are_reported() {
        // x >= 2 and x <= 1 through two rows
        let qp = DenseQp {
            p: DMatrix::identity(1, 1),
            q: DVector::zeros(1),
            a: DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            l: DVector::from_vec(vec![2.0, -INF]),
            u: DVector::from_vec(vec![INF, 1.0]),
        };
        let sol = solve(&qp, &AdmmSettings::default(), None);
        assert_eq!(sol.status, AdmmStatus::PrimalInfeasible);
    }

    #[test]
    fn warm_start_matches_cold() {
        let qp = DenseQp {
            p: DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0]),
            q: DVector::from_vec(vec![1.0, 1.0]),
            a: DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 0.0, 0.0, 1.0]),
            l: DVector::from_vec(vec![1.0, 0.0, 0.0]),
            u: DVector::from_vec(vec![1.0, 0.7, 0.7]),
        };
        let cold = solve(&qp, &AdmmSettings::default(), None);
        let warm = solve(&qp, &AdmmSettings::default(), Some((&cold.x, &cold.y)));
        assert_abs_diff_eq!(cold.x, DVector::from_vec(vec![0.3, 0.7]), epsilon = 1e-9);
        assert_abs_diff_eq!(warm.x, cold.x, epsilon = 1e-9);
        assert!(warm.iterations <= cold.iterations);
    }
}
