//! Internal-force subspace extraction and grasp classification.
//!
//! The null space of `G` holds the internal forces: contact-force
//! combinations that squeeze the object without producing a net wrench.
//! Reactive slip control needs that space to be non-trivial (graspable)
//! and to have no direction the joints cannot generate, i.e.
//! `N(G) ∩ N(J^T) = {0}` (not hyperstatic). A defective hand, with
//! `N(J^T) ≠ {0}`, is still fine as long as the two kernels do not meet.

use nalgebra::{DMatrix, SVD};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative singular-value cutoff used when none is given.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NullspaceError {
    #[error("matrix contains non-finite entries")]
    DegenerateInput,
    #[error("dimension mismatch: G has {g_cols} columns but J has {j_rows} rows")]
    DimensionMismatch { g_cols: usize, j_rows: usize },
}

/// Orthonormal basis of a matrix kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct NullspaceBasis {
    /// `n × k`, orthonormal columns.
    pub v: DMatrix<f64>,
    pub k: usize,
    pub rank: usize,
    /// Absolute singular-value cutoff that was applied.
    pub tolerance_used: f64,
}

/// Singular values of `a` with all right singular vectors.
///
/// Wide matrices are zero-padded to square so the SVD yields a complete
/// set of right singular vectors; padding only adds zero singular values.
fn full_svd(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let (r, c) = a.shape();
    let padded;
    let a = if r < c {
        let mut p = DMatrix::zeros(c, c);
        p.view_mut((0, 0), (r, c)).copy_from(a);
        padded = p;
        &padded
    } else {
        a
    };
    let svd = SVD::new(a.clone(), false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    // Tall matrices: sv has c entries, v_t is c × c.
    sv.truncate(v_t.nrows());
    (sv, v_t)
}

/// Orthonormal basis of `N(a)` with rank decided by `sigma > tol * sigma_max`.
///
/// Column signs are fixed so the first entry with magnitude above `1e-12`
/// is positive.
pub fn nullspace_basis(a: &DMatrix<f64>, tol: f64) -> Result<NullspaceBasis, NullspaceError> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(NullspaceError::DegenerateInput);
    }
    let n = a.ncols();
    if n == 0 {
        return Ok(NullspaceBasis { v: DMatrix::zeros(0, 0), k: 0, rank: 0, tolerance_used: 0.0 });
    }
    let (sv, v_t) = full_svd(a);
    let sigma_max = sv.iter().copied().fold(0.0, f64::max);
    let cutoff = tol * sigma_max;
    let kernel_rows: Vec<usize> = (0..v_t.nrows())
        .filter(|&i| !(sigma_max > 0.0 && sv[i] > cutoff))
        .collect();
    let k = kernel_rows.len();
    let mut v = DMatrix::zeros(n, k);
    for (col, &row) in kernel_rows.iter().enumerate() {
        let mut vec = v_t.row(row).transpose();
        if let Some(first) = vec.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                vec.neg_mut();
            }
        }
        v.set_column(col, &vec);
    }
    Ok(NullspaceBasis { v, k, rank: n - k, tolerance_used: cutoff })
}

/// Numerical rank with cutoff `tol * sigma_max`.
pub fn numerical_rank(a: &DMatrix<f64>, tol: f64) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.clone().singular_values();
    let sigma_max = sv.iter().copied().fold(0.0, f64::max);
    if sigma_max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * sigma_max).count()
}

/// Kernel-based grasp classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraspClass {
    pub graspable: bool,
    pub defective: bool,
    pub hyperstatic: bool,
    pub rsc_applicable: bool,
}

/// Full classification result including the subspace dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct GraspAnalysis {
    pub class: GraspClass,
    pub internal: NullspaceBasis,
    pub unactuable_dim: usize,
    pub hyperstatic_dim: usize,
    /// Smallest `|J^T x| / sigma_max(J)` over unit internal forces `x`;
    /// infinite when there are none.
    pub min_actuation: f64,
}

/// Classifies a grasp from `G` (6 × 3n) and `J` (3n × m).
pub fn classify_grasp(g: &DMatrix<f64>, j: &DMatrix<f64>, tol: f64) -> Result<GraspClass, NullspaceError> {
    analyze_grasp(g, j, tol).map(|a| a.class)
}

/// Absolute cutoff, relative to `sigma_max(J)`, below which an internal
/// force direction counts as needing no joint torque.
pub const DEFAULT_ACTUATION_TOL: f64 = 1e-8;

/// Like [`classify_grasp`] but also returns `N(G)` and the kernel dimensions.
pub fn analyze_grasp(g: &DMatrix<f64>, j: &DMatrix<f64>, tol: f64) -> Result<GraspAnalysis, NullspaceError> {
    analyze_grasp_with(g, j, tol, DEFAULT_ACTUATION_TOL)
}

/// Classification with an explicit actuation cutoff.
///
/// `dim(N(G) ∩ N(J^T))` equals the nullity of `J^T V_G`, where `V_G` is an
/// orthonormal basis of `N(G)`. A singular value of `J^T V_G` at or below
/// `actuation_tol * sigma_max(J)` counts toward that nullity. Raising the
/// cutoff treats nearly unactuable squeezes as hyperstatic, which matters
/// when the contact geometry comes from a noisy estimate.
pub fn analyze_grasp_with(g: &DMatrix<f64>, j: &DMatrix<f64>, tol: f64, actuation_tol: f64) -> Result<GraspAnalysis, NullspaceError> {
    if g.ncols() != j.nrows() {
        return Err(NullspaceError::DimensionMismatch { g_cols: g.ncols(), j_rows: j.nrows() });
    }
    let internal = nullspace_basis(g, tol)?;
    let unactuable = nullspace_basis(&j.transpose(), tol)?;
    let j_scale = if j.is_empty() { 0.0 } else { j.clone().singular_values().iter().copied().fold(0.0, f64::max) };
    let (hyperstatic_dim, min_actuation) = if internal.k > 0 {
        let jv = j.transpose() * &internal.v;
        let sv = if jv.nrows() == 0 { vec![0.0; internal.k] } else { full_svd(&jv).0 };
        let ratio = |s: f64| if j_scale > 0.0 { s / j_scale } else { 0.0 };
        let dim = sv.iter().filter(|&&s| ratio(s) <= actuation_tol).count();
        let min = sv.iter().copied().map(ratio).fold(f64::INFINITY, f64::min);
        (dim, min)
    } else {
        (0, f64::INFINITY)
    };
    let graspable = internal.k > 0;
    let defective = unactuable.k > 0;
    let hyperstatic = hyperstatic_dim > 0;
    Ok(GraspAnalysis {
        class: GraspClass {
            graspable,
            defective,
            hyperstatic,
            rsc_applicable: graspable && !hyperstatic,
        },
        unactuable_dim: unactuable.k,
        hyperstatic_dim,
        min_actuation,
        internal,
    })
}
