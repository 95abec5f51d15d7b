//! Direct finite-difference solver for the Laplace-Beltrami Dirichlet
//! problem of the full conformally Stackel metric `G = c^4 g`, and the DN
//! map extracted from it. This is the ground truth the separated
//! construction is compared against: same seven-point divergence form as
//! the conformal module, with the `G`-coefficients `sqrt|G| G^{ii} =
//! H1 H2 H3 / H_i^2`, and a one-sided second-order boundary derivative
//! scaled by the unit normal, `-1/H1` at `x^1 = 0` and `+1/H1` at
//! `x^1 = A`.

use crate::error::SolveError;
use crate::fd3::EllipticProblem;
use crate::grid::{Grid3, ScalarField3};
use crate::stackel::{metric_eval, ConformalMetric};

/// Assembled Dirichlet system of `-Delta_G` on the grid.
pub struct DiscreteLaplaceSystem {
    pub problem: EllipticProblem,
    /// 1/H1 on each boundary torus
    pub inv_h1_0: Vec<f64>,
    pub inv_h1_1: Vec<f64>,
}

pub fn assemble_laplace(metric: &ConformalMetric, grid: Grid3) -> DiscreteLaplaceSystem {
    let mut coef: [Vec<f64>; 3] =
        [vec![0.0; grid.len()], vec![0.0; grid.len()], vec![0.0; grid.len()]];
    let mut vol = vec![0.0; grid.len()];
    let mut inv_h1_0 = vec![0.0; grid.boundary_len()];
    let mut inv_h1_1 = vec![0.0; grid.boundary_len()];
    for i in 0..=grid.n1 {
        for j in 0..grid.n2 {
            for k in 0..grid.n3 {
                let x = grid.node(i, j, k);
                let ev = metric_eval(metric, x).expect("metric must be positive on the grid");
                let h = [
                    ev.h_cap_sq[0].sqrt(),
                    ev.h_cap_sq[1].sqrt(),
                    ev.h_cap_sq[2].sqrt(),
                ];
                let sqrt_g = h[0] * h[1] * h[2];
                let id = grid.idx(i, j, k);
                for d in 0..3 {
                    coef[d][id] = sqrt_g / ev.h_cap_sq[d];
                }
                vol[id] = sqrt_g;
                if i == 0 {
                    inv_h1_0[grid.bidx(j, k)] = 1.0 / h[0];
                }
                if i == grid.n1 {
                    inv_h1_1[grid.bidx(j, k)] = 1.0 / h[0];
                }
            }
        }
    }
    DiscreteLaplaceSystem {
        problem: EllipticProblem::new(grid, coef, vec![0.0; grid.len()], vol),
        inv_h1_0,
        inv_h1_1,
    }
}

impl DiscreteLaplaceSystem {
    pub fn solve(
        &self,
        f0: &[f64],
        f1: &[f64],
        tol: f64,
        max_iter: usize,
    ) -> Result<ScalarField3, SolveError> {
        let (u, stats) = self.problem.solve_dirichlet(f0, f1, tol, max_iter)?;
        debug_assert!(stats.residual.is_finite());
        Ok(u)
    }

    /// One-sided second-order normal derivative scaled by the unit normal:
    /// `-(1/H1) d1 u` at `x^1 = 0` and `+(1/H1) d1 u` at `x^1 = A`.
    pub fn dn_from_solution(&self, u: &ScalarField3) -> (Vec<f64>, Vec<f64>) {
        let g = u.grid;
        let h1 = g.spacing()[0];
        let mut out0 = vec![0.0; g.boundary_len()];
        let mut out1 = vec![0.0; g.boundary_len()];
        for j in 0..g.n2 {
            for k in 0..g.n3 {
                let b = g.bidx(j, k);
                let d_at_0 =
                    (-3.0 * u.at(0, j, k) + 4.0 * u.at(1, j, k) - u.at(2, j, k)) / (2.0 * h1);
                let n1 = g.n1;
                let d_at_a = (3.0 * u.at(n1, j, k) - 4.0 * u.at(n1 - 1, j, k)
                    + u.at(n1 - 2, j, k))
                    / (2.0 * h1);
                out0[b] = -self.inv_h1_0[b] * d_at_0;
                out1[b] = self.inv_h1_1[b] * d_at_a;
            }
        }
        (out0, out1)
    }
}

/// Solve and extract the DN data in one call.
pub fn dn_oracle(
    metric: &ConformalMetric,
    grid: Grid3,
    f0: &[f64],
    f1: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, Vec<f64>), SolveError> {
    let sys = assemble_laplace(metric, grid);
    let u = sys.solve(f0, f1, tol, 200_000)?;
    Ok(sys.dn_from_solution(&u))
}

/// Boundary-weighted inner product `int f g H2 H3 dx2 dx3` on one torus.
pub fn boundary_inner(
    metric: &ConformalMetric,
    grid: Grid3,
    end: usize,
    f: &[f64],
    g: &[f64],
) -> f64 {
    let x1 = if end == 0 { 0.0 } else { grid.a_length };
    let h = grid.spacing();
    let mut acc = 0.0;
    for j in 0..grid.n2 {
        for k in 0..grid.n3 {
            let x = [x1, j as f64 * h[1], k as f64 * h[2]];
            let ev = metric_eval(metric, x).unwrap();
            let w = (ev.h_cap_sq[1] * ev.h_cap_sq[2]).sqrt();
            acc += f[grid.bidx(j, k)] * g[grid.bidx(j, k)] * w;
        }
    }
    acc * h[1] * h[2]
}
