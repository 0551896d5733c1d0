//! Reference computations that avoid the code under test: plain Gaussian
//! elimination, vertex enumeration and grid search.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;

use rsc_core::grasp_model::Contact;
use rsc_core::qp::QpProblem;

/// Rank by Gaussian elimination with full pivoting; pivots at or below
/// `rel_tol * max|a|` count as zero.
pub fn gauss_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let (r, c) = a.shape();
    let mut m: Vec<Vec<f64>> = (0..r).map(|i| (0..c).map(|j| a[(i, j)]).collect()).collect();
    let scale = a.iter().fold(0.0f64, |s, x| s.max(x.abs()));
    if scale == 0.0 {
        return 0;
    }
    let cutoff = rel_tol * scale;
    let mut rank = 0;
    let mut cols: Vec<usize> = (0..c).collect();
    while rank < r.min(c) {
        let (mut pi, mut pj, mut best) = (rank, rank, 0.0);
        for (i, row) in m.iter().enumerate().skip(rank) {
            for (jj, &j) in cols.iter().enumerate().skip(rank) {
                if row[j].abs() > best {
                    (pi, pj, best) = (i, jj, row[j].abs());
                }
            }
        }
        if best <= cutoff {
            break;
        }
        m.swap(rank, pi);
        cols.swap(rank, pj);
        let pc = cols[rank];
        for i in rank + 1..r {
            let factor = m[i][pc] / m[rank][pc];
            if factor != 0.0 {
                for &j in &cols {
                    m[i][j] -= factor * m[rank][j];
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Solves a small square system by partial pivoting; `None` if singular.
pub fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[p][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, p);
        b.swap(col, p);
        let (top, rest) = a.split_at_mut(col + 1);
        let pivot = &top[col];
        for (offset, row) in rest.iter_mut().enumerate() {
            let f = row[col] / pivot[col];
            for (x, p) in row.iter_mut().zip(pivot).skip(col) {
                *x -= f * p;
            }
            b[col + 1 + offset] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

/// Random contact set with 1–5 contacts. Every fourth draw puts the
/// contacts on one line with normals along it, which drops the rank of `G`.
pub fn random_contacts<R: Rng>(rng: &mut R, draw: usize) -> Vec<Contact> {
    let n = rng.random_range(1..=5);
    let mut dir = || Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let line = dir().normalize();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let (p, nrm) = if draw % 4 == 3 {
            let s: f64 = dir()[0] * 0.1;
            (line * s, if out.len() % 2 == 0 { line } else { -line })
        } else {
            (dir() * 0.1, dir())
        };
        if nrm.norm() < 1e-3 {
            continue;
        }
        let i = out.len();
        out.push(Contact::new(p, nrm.normalize(), 0.5, i, 0).expect("valid contact"));
    }
    out
}

/// Objective evaluated from the contact forces `f = V λ`:
/// `sum f_n - sum |f_t|^2 - 1/N sum (f_n - mean f_n)^2`.
pub fn objective_from_forces(v: &DMatrix<f64>, lambda: &[f64]) -> f64 {
    let f = v * DVector::from_column_slice(lambda);
    let nc = f.len() / 3;
    let normals: Vec<f64> = (0..nc).map(|i| f[3 * i]).collect();
    let mean = normals.iter().sum::<f64>() / nc as f64;
    let tangential: f64 = (0..nc).map(|i| f[3 * i + 1].powi(2) + f[3 * i + 2].powi(2)).sum();
    let spread: f64 = normals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nc as f64;
    normals.iter().sum::<f64>() - tangential - spread
}

/// Half-spaces `a · λ <= b` of the torque box and the normal sign
/// constraints, built from `J^T`, `V` and the limits.
pub fn halfspaces(p: &QpProblem) -> Vec<(Vec<f64>, f64)> {
    let jtv = &p.jt * &p.basis.v;
    let k = p.basis.k;
    let mut out = Vec::new();
    for r in 0..jtv.nrows() {
        let row: Vec<f64> = (0..k).map(|c| jtv[(r, c)]).collect();
        out.push((row.clone(), p.tau_max[r]));
        out.push((row.iter().map(|x| -x).collect(), -p.tau_min[r]));
    }
    let nc = p.basis.v.nrows() / 3;
    for i in 0..nc {
        out.push(((0..k).map(|c| -p.basis.v[(3 * i, c)]).collect(), 0.0));
    }
    out
}

pub fn feasible(h: &[(Vec<f64>, f64)], x: &[f64], tol: f64) -> bool {
    h.iter().all(|(a, b)| a.iter().zip(x).map(|(u, v)| u * v).sum::<f64>() <= b + tol)
}

fn combinations(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == k {
        out.push(cur.clone());
        return;
    }
    for i in start..n {
        cur.push(i);
        combinations(n, k, i + 1, cur, out);
        cur.pop();
    }
}

/// Bounding box of the feasible λ polytope from its vertices.
pub fn lambda_box(h: &[(Vec<f64>, f64)], k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut combos = Vec::new();
    combinations(h.len(), k, 0, &mut Vec::new(), &mut combos);
    let mut lo = vec![f64::INFINITY; k];
    let mut hi = vec![f64::NEG_INFINITY; k];
    for c in combos {
        let a: Vec<Vec<f64>> = c.iter().map(|&i| h[i].0.clone()).collect();
        let b: Vec<f64> = c.iter().map(|&i| h[i].1).collect();
        if let Some(x) = solve_square(a, b) {
            if feasible(h, &x, 1e-9) {
                for d in 0..k {
                    lo[d] = lo[d].min(x[d]);
                    hi[d] = hi[d].max(x[d]);
                }
            }
        }
    }
    (lo, hi)
}

/// Best feasible grid point over `[lo, hi]` with `pts` points per axis.
fn grid_best(h: &[(Vec<f64>, f64)], v: &DMatrix<f64>, lo: &[f64], hi: &[f64], pts: usize) -> Option<(f64, Vec<f64>)> {
    let k = lo.len();
    let total = pts.pow(k as u32);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut x = vec![0.0; k];
    for idx in 0..total {
        let mut r = idx;
        for d in 0..k {
            let i = r % pts;
            r /= pts;
            x[d] = if pts > 1 { lo[d] + (hi[d] - lo[d]) * i as f64 / (pts - 1) as f64 } else { lo[d] };
        }
        if !feasible(h, &x, 0.0) {
            continue;
        }
        let f = objective_from_forces(v, &x);
        if best.as_ref().is_none_or(|(b, _)| f > *b) {
            best = Some((f, x.clone()));
        }
    }
    best
}

/// Grid search with `pts` points per axis over the vertex bounding box,
/// then repeated zooms around the incumbent.
pub fn grid_search(p: &QpProblem, pts: usize, zooms: usize) -> (f64, Vec<f64>) {
    let h = halfspaces(p);
    let k = p.basis.k;
    let (mut lo, mut hi) = lambda_box(&h, k);
    let mut best = grid_best(&h, &p.basis.v, &lo, &hi, pts).expect("feasible grid point");
    let mut cell: Vec<f64> = (0..k).map(|d| (hi[d] - lo[d]) / (pts - 1) as f64).collect();
    for _ in 0..zooms {
        for d in 0..k {
            lo[d] = best.1[d] - 2.0 * cell[d];
            hi[d] = best.1[d] + 2.0 * cell[d];
        }
        if let Some(b) = grid_best(&h, &p.basis.v, &lo, &hi, 21) {
            if b.0 >= best.0 {
                best = b;
            }
        }
        cell = (0..k).map(|d| (hi[d] - lo[d]) / 20.0).collect();
    }
    best
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
