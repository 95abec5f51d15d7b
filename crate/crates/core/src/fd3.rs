//! Divergence-form finite differences on the cylinder grid.
//!
//! Elliptic operators here all have the shape
//!
//! ```text
//!   L u = -sum_d  d_d ( a_d(x) d_d u )  +  b(x) u
//! ```
//!
//! with `a_d = sqrt|g| g^{dd}` sampled at nodes and averaged onto faces, and
//! `b` already carrying the volume weight. The seven-point stencil is
//! symmetric as a plain matrix on the interior unknowns (equivalently, the
//! unweighted operator is self-adjoint in the volume-weighted inner
//! product), interior row sums vanish when `b = 0`, and the off-diagonal
//! entries are negative, which is what the discrete maximum principle runs
//! on. Dirichlet rows sit at `i = 0` and `i = n1`; the angular directions
//! wrap.

use crate::error::SolveError;
use crate::grid::{Grid3, ScalarField3};

pub struct EllipticProblem {
    pub grid: Grid3,
    /// sqrt|g| g^{dd} at nodes, one field per direction
    coef: [Vec<f64>; 3],
    /// zeroth-order term times sqrt|g| at nodes
    zeroth: Vec<f64>,
    /// sqrt|g| at nodes (volume weight for norms)
    vol: Vec<f64>,
}

pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

impl EllipticProblem {
    pub fn new(grid: Grid3, coef: [Vec<f64>; 3], zeroth: Vec<f64>, vol: Vec<f64>) -> Self {
        assert_eq!(coef[0].len(), grid.len());
        assert_eq!(zeroth.len(), grid.len());
        EllipticProblem { grid, coef, zeroth, vol }
    }

    #[inline]
    fn face(&self, d: usize, a: usize, b: usize) -> f64 {
        0.5 * (self.coef[d][a] + self.coef[d][b])
    }

    /// Apply the operator at an interior node of a full field (boundary
    /// values included in `u`).
    #[inline]
    pub fn apply_at(&self, u: &[f64], i: usize, j: usize, k: usize) -> f64 {
        let g = &self.grid;
        let h = g.spacing();
        let id = g.idx(i, j, k);
        let jp = g.idx(i, (j + 1) % g.n2, k);
        let jm = g.idx(i, (j + g.n2 - 1) % g.n2, k);
        let kp = g.idx(i, j, (k + 1) % g.n3);
        let km = g.idx(i, j, (k + g.n3 - 1) % g.n3);
        let ip = g.idx(i + 1, j, k);
        let im = g.idx(i - 1, j, k);
        let f1p = self.face(0, id, ip);
        let f1m = self.face(0, id, im);
        let f2p = self.face(1, id, jp);
        let f2m = self.face(1, id, jm);
        let f3p = self.face(2, id, kp);
        let f3m = self.face(2, id, km);
        (f1p * (u[id] - u[ip]) + f1m * (u[id] - u[im])) / (h[0] * h[0])
            + (f2p * (u[id] - u[jp]) + f2m * (u[id] - u[jm])) / (h[1] * h[1])
            + (f3p * (u[id] - u[kp]) + f3m * (u[id] - u[km])) / (h[2] * h[2])
            + self.zeroth[id] * u[id]
    }

    /// Residual field L u (interior nodes; boundary rows zero).
    pub fn apply(&self, u: &ScalarField3) -> ScalarField3 {
        let g = self.grid;
        let mut out = ScalarField3::zeros(g);
        for i in 1..g.n1 {
            for j in 0..g.n2 {
                for k in 0..g.n3 {
                    out.values[g.idx(i, j, k)] = self.apply_at(&u.values, i, j, k);
                }
            }
        }
        out
    }

    fn diagonal(&self, i: usize, j: usize, k: usize) -> f64 {
        let g = &self.grid;
        let h = g.spacing();
        let id = g.idx(i, j, k);
        let jp = g.idx(i, (j + 1) % g.n2, k);
        let jm = g.idx(i, (j + g.n2 - 1) % g.n2, k);
        let kp = g.idx(i, j, (k + 1) % g.n3);
        let km = g.idx(i, j, (k + g.n3 - 1) % g.n3);
        let ip = g.idx(i + 1, j, k);
        let im = g.idx(i - 1, j, k);
        (self.face(0, id, ip) + self.face(0, id, im)) / (h[0] * h[0])
            + (self.face(1, id, jp) + self.face(1, id, jm)) / (h[1] * h[1])
            + (self.face(2, id, kp) + self.face(2, id, km)) / (h[2] * h[2])
            + self.zeroth[id]
    }

    /// Solve `L u = 0` with Dirichlet data on both tori by Jacobi-
    /// preconditioned conjugate gradients on the interior unknowns.
    pub fn solve_dirichlet(
        &self,
        bc0: &[f64],
        bc1: &[f64],
        tol: f64,
        max_iter: usize,
    ) -> Result<(ScalarField3, SolveStats), SolveError> {
        let g = self.grid;
        assert_eq!(bc0.len(), g.boundary_len());
        assert_eq!(bc1.len(), g.boundary_len());
        let mut full = ScalarField3::zeros(g);
        for j in 0..g.n2 {
            for k in 0..g.n3 {
                *full.at_mut(0, j, k) = bc0[g.bidx(j, k)];
                *full.at_mut(g.n1, j, k) = bc1[g.bidx(j, k)];
            }
        }
        // rhs = -L(lift); interior unknowns start at zero
        let lift_res = self.apply(&full);
        let n_int = (g.n1 - 1) * g.n2 * g.n3;
        let int_id = |i: usize, j: usize, k: usize| ((i - 1) * g.n2 + j) * g.n3 + k;
        let mut rhs = vec![0.0; n_int];
        let mut inv_diag = vec![0.0; n_int];
        for i in 1..g.n1 {
            for j in 0..g.n2 {
                for k in 0..g.n3 {
                    rhs[int_id(i, j, k)] = -lift_res.values[g.idx(i, j, k)];
                    inv_diag[int_id(i, j, k)] = 1.0 / self.diagonal(i, j, k);
                }
            }
        }
        // interior operator application (boundary contributions excluded by
        // zero padding in the full-field scratch)
        let mut scratch = ScalarField3::zeros(g);
        let apply_int = |x: &[f64], out: &mut [f64], scratch: &mut ScalarField3| {
            for i in 1..g.n1 {
                for j in 0..g.n2 {
                    for k in 0..g.n3 {
                        scratch.values[g.idx(i, j, k)] = x[int_id(i, j, k)];
                    }
                }
            }
            for i in 1..g.n1 {
                for j in 0..g.n2 {
                    for k in 0..g.n3 {
                        out[int_id(i, j, k)] = self.apply_at(&scratch.values, i, j, k);
                    }
                }
            }
        };
        let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
        let rhs_norm = dot(&rhs, &rhs).sqrt();
        let mut x = vec![0.0; n_int];
        if rhs_norm > 0.0 {
            let mut r = rhs.clone();
            let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, m)| a * m).collect();
            let mut p = z.clone();
            let mut rz = dot(&r, &z);
            let mut ap = vec![0.0; n_int];
            let mut iterations = 0;
            let mut converged = false;
            for it in 0..max_iter {
                iterations = it + 1;
                apply_int(&p, &mut ap, &mut scratch);
                let pap = dot(&p, &ap);
                if pap <= 0.0 {
                    return Err(SolveError::SolverDiverged {
                        residual: dot(&r, &r).sqrt() / rhs_norm,
                        iterations,
                        tol,
                    });
                }
                let alpha = rz / pap;
                for idx in 0..n_int {
                    x[idx] += alpha * p[idx];
                    r[idx] -= alpha * ap[idx];
                }
                if dot(&r, &r).sqrt() <= tol * rhs_norm {
                    converged = true;
                    break;
                }
                for idx in 0..n_int {
                    z[idx] = r[idx] * inv_diag[idx];
                }
                let rz_new = dot(&r, &z);
                let beta = rz_new / rz;
                rz = rz_new;
                for idx in 0..n_int {
                    p[idx] = z[idx] + beta * p[idx];
                }
            }
            let rel = dot(&r, &r).sqrt() / rhs_norm;
            if !converged {
                return Err(SolveError::SolverDiverged { residual: rel, iterations, tol });
            }
        }
        for i in 1..g.n1 {
            for j in 0..g.n2 {
                for k in 0..g.n3 {
                    *full.at_mut(i, j, k) = x[int_id(i, j, k)];
                }
            }
        }
        // true residual of the assembled field
        let res = self.apply(&full);
        let res_norm = self.weighted_norm(&res);
        let scale = self.weighted_norm(&full).max(1.0);
        Ok((full, SolveStats { iterations: 0, residual: res_norm / scale }))
    }

    /// L2 norm in the volume-weighted inner product (interior nodes).
    pub fn weighted_norm(&self, f: &ScalarField3) -> f64 {
        let g = self.grid;
        let h = g.spacing();
        let mut acc = 0.0;
        for i in 1..g.n1 {
            for j in 0..g.n2 {
                for k in 0..g.n3 {
                    let id = g.idx(i, j, k);
                    acc += f.values[id] * f.values[id] * self.vol[id];
                }
            }
        }
        (acc * h[0] * h[1] * h[2]).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_problem(n: usize) -> EllipticProblem {
        // isotropic unit metric
        let grid = Grid3::cubic(n, 1.0);
        let ones = vec![1.0; grid.len()];
        EllipticProblem::new(grid, [ones.clone(), ones.clone(), ones.clone()], vec![0.0; grid.len()], ones)
    }

    #[test]
    fn interior_row_sums_vanish() {
        let p = flat_problem(8);
        let ones = ScalarField3::from_fn(p.grid, |_| 1.0);
        let r = p.apply(&ones);
        for v in &r.values {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn matrix_is_symmetric() {
        let grid = Grid3::cubic(8, 1.0);
        let coef = ScalarField3::from_fn(grid, |x| 1.5 + 0.5 * (x[1]).sin() * (x[2]).cos() + x[0]);
        let p = EllipticProblem::new(
            grid,
            [coef.values.clone(), coef.values.clone(), coef.values.clone()],
            vec![0.0; grid.len()],
            coef.values.clone(),
        );
        // random interior fields with zero boundary
        let mut u = ScalarField3::from_fn(grid, |x| (3.0 * x[0]).sin() * (x[1] + 0.3).cos());
        let mut v = ScalarField3::from_fn(grid, |x| (x[0] * x[0] - x[0]) * (2.0 * x[2]).sin());
        for j in 0..grid.n2 {
            for k in 0..grid.n3 {
                *u.at_mut(0, j, k) = 0.0;
                *u.at_mut(grid.n1, j, k) = 0.0;
                *v.at_mut(0, j, k) = 0.0;
                *v.at_mut(grid.n1, j, k) = 0.0;
            }
        }
        let au = p.apply(&u);
        let av = p.apply(&v);
        let dot = |a: &ScalarField3, b: &ScalarField3| -> f64 {
            a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum()
        };
        let lhs = dot(&au, &v);
        let rhs = dot(&u, &av);
        assert!(
            (lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0),
            "symmetry defect {}",
            (lhs - rhs).abs()
        );
    }

    #[test]
    fn constant_and_linear_data_are_exact() {
        let p = flat_problem(10);
        let nb = p.grid.boundary_len();
        let (u, stats) = p.solve_dirichlet(&vec![1.0; nb], &vec![1.0; nb], 1e-12, 100_000).unwrap();
        for v in &u.values {
            assert!((v - 1.0).abs() < 1e-11);
        }
        assert!(stats.residual < 1e-11);
        let (u, _) = p.solve_dirichlet(&vec![0.0; nb], &vec![1.0; nb], 1e-12, 100_000).unwrap();
        for i in 0..=p.grid.n1 {
            let expect = i as f64 / p.grid.n1 as f64;
            assert!((u.at(i, 3, 5) - expect).abs() < 1e-10, "at {i}");
        }
    }

    #[test]
    fn discrete_maximum_principle() {
        let p = flat_problem(10);
        let g = p.grid;
        let mut bc0 = vec![0.0; g.boundary_len()];
        let mut bc1 = vec![0.0; g.boundary_len()];
        for j in 0..g.n2 {
            for k in 0..g.n3 {
                bc0[g.bidx(j, k)] = 1.0 + 0.5 * (TWO_PI * j as f64 / g.n2 as f64).sin();
                bc1[g.bidx(j, k)] = 2.0 + 0.3 * (TWO_PI * k as f64 / g.n3 as f64).cos();
            }
        }
        let lo = bc0.iter().chain(&bc1).cloned().fold(f64::INFINITY, f64::min);
        let hi = bc0.iter().chain(&bc1).cloned().fold(f64::NEG_INFINITY, f64::max);
        let (u, _) = p.solve_dirichlet(&bc0, &bc1, 1e-12, 100_000).unwrap();
        assert!(u.min() >= lo - 1e-9, "min {} vs {lo}", u.min());
        assert!(u.max() <= hi + 1e-9, "max {} vs {hi}", u.max());
    }

    use crate::curve::TWO_PI;
}
