//! Discretized-operator oracle for the joint spectrum.
//!
//! `H` and `L` are discretized on an `n x n` periodic grid of the torus with
//! sixth-order central stencils for the one-dimensional operators
//! `A_j = -d^2 - phi_j`, then
//!
//! ```text
//!   H = D^{-1} B_H,  B_H = -s33 A_2 + s23 A_3,   D = diag(s11)
//!   L = D^{-1} B_L,  B_L =  s32 A_2 - s22 A_3
//! ```
//!
//! Both `B` matrices are symmetric and commute with `D^{1/2}`-conjugation
//! into standard symmetric operators. Low eigenspaces of `H` come out of a
//! block Lanczos sweep with full reorthogonalization; the compression of `L`
//! onto each (near-)eigenspace of `H` is then diagonalized, which resolves
//! the joint pairs together with their multiplicities.
//!
//! This route never touches the shooting code: it is the cross-check oracle
//! for it.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ode_residual_fft, AngularOperators, JointEigenpair};
use crate::curve::TWO_PI;
use crate::error::SpectrumError;

/// Periodic sixth-order second-derivative stencil applied along one axis.
/// `axis = 0` differentiates in the x2 index, `axis = 1` in x3.
fn apply_second_derivative(field: &[f64], out: &mut [f64], n: usize, axis: usize, h: f64) {
    let c = [-490.0, 270.0, -27.0, 2.0];
    let scale = 1.0 / (180.0 * h * h);
    let idx = |i: usize, j: usize| i * n + j;
    for i in 0..n {
        for j in 0..n {
            let mut acc = c[0] * field[idx(i, j)];
            for (o, &co) in c.iter().enumerate().skip(1) {
                let (pa, pb) = if axis == 0 {
                    (idx((i + o) % n, j), idx((i + n - o) % n, j))
                } else {
                    (idx(i, (j + o) % n), idx(i, (j + n - o) % n))
                };
                acc += co * (field[pa] + field[pb]);
            }
            out[idx(i, j)] = acc * scale;
        }
    }
}

/// Precomputed diagonal data of the discretized operators.
pub struct DiscreteAngular {
    pub n: usize,
    h: f64,
    s22: Vec<f64>,
    s23: Vec<f64>,
    s32: Vec<f64>,
    s33: Vec<f64>,
    phi2: Vec<f64>,
    phi3: Vec<f64>,
    /// weight s^{11} on the grid
    pub weight: Vec<f64>,
    sqrt_w: Vec<f64>,
    shift: (f64, f64),
}

impl DiscreteAngular {
    pub fn new(ops: &AngularOperators, n: usize) -> Self {
        assert!(n >= 8, "grid too small");
        let h = TWO_PI / n as f64;
        let grid: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let s22: Vec<f64> = grid.iter().map(|&x| ops.s22.eval(x)).collect();
        let s23: Vec<f64> = grid.iter().map(|&x| ops.s23.eval(x)).collect();
        let s32: Vec<f64> = grid.iter().map(|&x| ops.s32.eval(x)).collect();
        let s33: Vec<f64> = grid.iter().map(|&x| ops.s33.eval(x)).collect();
        let phi2: Vec<f64> = grid.iter().map(|&x| ops.phi2.eval(x)).collect();
        let phi3: Vec<f64> = grid.iter().map(|&x| ops.phi3.eval(x)).collect();
        let mut weight = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                weight[i * n + j] = s22[i] * s33[j] - s23[i] * s32[j];
            }
        }
        assert!(
            weight.iter().all(|&w| w > 0.0),
            "weight s11 must be positive on the grid"
        );
        let sqrt_w = weight.iter().map(|w| w.sqrt()).collect();
        DiscreteAngular {
            n,
            h,
            s22,
            s23,
            s32,
            s33,
            phi2,
            phi3,
            weight,
            sqrt_w,
            shift: ops.shift,
        }
    }

    fn a2(&self, f: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        apply_second_derivative(f, scratch, self.n, 0, self.h);
        for i in 0..self.n {
            for j in 0..self.n {
                let id = i * self.n + j;
                out[id] = -scratch[id] - self.phi2[i] * f[id];
            }
        }
    }

    fn a3(&self, f: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        apply_second_derivative(f, scratch, self.n, 1, self.h);
        for i in 0..self.n {
            for j in 0..self.n {
                let id = i * self.n + j;
                out[id] = -scratch[id] - self.phi3[j] * f[id];
            }
        }
    }

    /// B_H f = -s33 A2 f + s23 A3 f (+ B1 s11 f under the shift gauge).
    pub fn apply_bh(&self, f: &[f64], out: &mut [f64]) {
        let n = self.n;
        let mut t = vec![0.0; n * n];
        let mut scratch = vec![0.0; n * n];
        self.a2(f, &mut t, &mut scratch);
        let mut t3 = vec![0.0; n * n];
        self.a3(f, &mut t3, &mut scratch);
        for i in 0..n {
            for j in 0..n {
                let id = i * n + j;
                out[id] = -self.s33[j] * t[id] + self.s23[i] * t3[id]
                    + self.shift.0 * self.weight[id] * f[id];
            }
        }
    }

    /// B_L f = s32 A2 f - s22 A3 f (+ B2 s11 f under the shift gauge).
    pub fn apply_bl(&self, f: &[f64], out: &mut [f64]) {
        let n = self.n;
        let mut t = vec![0.0; n * n];
        let mut scratch = vec![0.0; n * n];
        self.a2(f, &mut t, &mut scratch);
        let mut t3 = vec![0.0; n * n];
        self.a3(f, &mut t3, &mut scratch);
        for i in 0..n {
            for j in 0..n {
                let id = i * n + j;
                out[id] = self.s32[j] * t[id] - self.s22[i] * t3[id]
                    + self.shift.1 * self.weight[id] * f[id];
            }
        }
    }

    /// Symmetrized H: z -> D^{-1/2} B_H D^{-1/2} z.
    pub fn apply_sh(&self, z: &[f64], out: &mut [f64]) {
        let tmp: Vec<f64> = z.iter().zip(&self.sqrt_w).map(|(v, s)| v / s).collect();
        self.apply_bh(&tmp, out);
        for (o, s) in out.iter_mut().zip(&self.sqrt_w) {
            *o /= s;
        }
    }

    pub fn apply_sl(&self, z: &[f64], out: &mut [f64]) {
        let tmp: Vec<f64> = z.iter().zip(&self.sqrt_w).map(|(v, s)| v / s).collect();
        self.apply_bl(&tmp, out);
        for (o, s) in out.iter_mut().zip(&self.sqrt_w) {
            *o /= s;
        }
    }

    /// H f in the original function space (D^{-1} B_H f).
    pub fn apply_h(&self, f: &[f64], out: &mut [f64]) {
        self.apply_bh(f, out);
        for (o, w) in out.iter_mut().zip(&self.weight) {
            *o /= w;
        }
    }

    pub fn apply_l(&self, f: &[f64], out: &mut [f64]) {
        self.apply_bl(f, out);
        for (o, w) in out.iter_mut().zip(&self.weight) {
            *o /= w;
        }
    }

    /// Weighted L2 norm with the s11 weight and grid measure.
    pub fn weighted_norm(&self, f: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (v, w) in f.iter().zip(&self.weight) {
            acc += v * v * w;
        }
        (acc * self.h * self.h).sqrt()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients for an SPD operator.
fn pcg(
    apply: &dyn Fn(&[f64], &mut [f64]),
    inv_diag: &[f64],
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Vec<f64> {
    let dim = rhs.len();
    let mut x = vec![0.0; dim];
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(a, m)| a * m).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let rhs_norm = dot(rhs, rhs).sqrt().max(1e-300);
    let mut ap = vec![0.0; dim];
    for _ in 0..max_iter {
        apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..dim {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= tol * rhs_norm {
            break;
        }
        for i in 0..dim {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..dim {
            p[i] = z[i] + beta * p[i];
        }
    }
    x
}

/// Rough lower spectral bound by a short scalar Lanczos sweep (no
/// reorthogonalization; only the extreme estimate is used).
fn lower_bound_estimate(apply: &dyn Fn(&[f64], &mut [f64]), dim: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = 60.min(dim);
    let mut q_prev = vec![0.0; dim];
    let mut q: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
    let nrm = dot(&q, &q).sqrt();
    q.iter_mut().for_each(|v| *v /= nrm);
    let mut alphas = Vec::with_capacity(steps);
    let mut betas = Vec::with_capacity(steps);
    let mut beta = 0.0;
    let mut w = vec![0.0; dim];
    for _ in 0..steps {
        apply(&q, &mut w);
        let alpha = dot(&q, &w);
        for i in 0..dim {
            w[i] -= alpha * q[i] + beta * q_prev[i];
        }
        beta = dot(&w, &w).sqrt();
        alphas.push(alpha);
        if beta < 1e-13 {
            break;
        }
        q_prev = q.clone();
        q = w.iter().map(|v| v / beta).collect();
        betas.push(beta);
    }
    let m = alphas.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m && i < betas.len() {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    t.symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Block Lanczos with full reorthogonalization for the lowest eigenpairs of
/// a symmetric operator.
fn block_lanczos(
    apply: &dyn Fn(&[f64], &mut [f64]),
    dim: usize,
    block: usize,
    max_vectors: usize,
    seed: u64,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    // starting block
    let mut current: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..dim).map(|_| rng.random::<f64>() - 0.5).collect())
        .collect();
    orthonormalize(&mut current, &basis);
    let m_blocks = max_vectors.min(dim) / block;
    let mut t = DMatrix::<f64>::zeros(m_blocks * block, m_blocks * block);
    let mut n_built = 0usize;
    for jb in 0..m_blocks {
        let base = jb * block;
        for v in &current {
            basis.push(v.clone());
        }
        n_built = base + block;
        // W = S X_j, project against the whole basis (twice), record the
        // projection coefficients onto the last two blocks in T
        let mut next: Vec<Vec<f64>> = Vec::with_capacity(block);
        for (ci, x) in current.iter().enumerate() {
            let mut w = vec![0.0; dim];
            apply(x, &mut w);
            // record alpha block
            for (ri, r) in basis.iter().enumerate().skip(base) {
                let a = dot(r, &w);
                t[(ri, base + ci)] = a;
                t[(base + ci, ri)] = a;
            }
            next.push(w);
        }
        if jb + 1 == m_blocks {
            break;
        }
        // full reorthogonalization (two passes)
        for w in &mut next {
            for _ in 0..2 {
                for r in &basis {
                    let a = dot(r, w);
                    for (wi, ri) in w.iter_mut().zip(r) {
                        *wi -= a * ri;
                    }
                }
            }
        }
        // QR of the residual block; the R factor is the beta coupling
        let mut beta = vec![vec![0.0; block]; block];
        for ci in 0..block {
            for pi in 0..ci {
                let a = dot(&next[pi], &next[ci].clone());
                beta[pi][ci] = a;
                let prev = next[pi].clone();
                for (wi, ri) in next[ci].iter_mut().zip(&prev) {
                    *wi -= a * ri;
                }
            }
            let nrm = dot(&next[ci], &next[ci]).sqrt();
            if nrm < 1e-12 {
                // invariant subspace hit: restart direction
                let mut fresh: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
                for r in basis.iter().chain(next[..ci].iter()) {
                    let a = dot(r, &fresh);
                    for (fi, ri) in fresh.iter_mut().zip(r) {
                        *fi -= a * ri;
                    }
                }
                let n2 = dot(&fresh, &fresh).sqrt().max(1e-300);
                for f in &mut fresh {
                    *f /= n2;
                }
                next[ci] = fresh;
                beta[ci][ci] = 0.0;
            } else {
                beta[ci][ci] = nrm;
                for w in &mut next[ci] {
                    *w /= nrm;
                }
            }
        }
        // B_{j+1} = X_{j+1}^T S X_j equals the R factor of the residual QR
        for r in 0..block {
            for c in 0..block {
                t[(base + block + r, base + c)] = beta[r][c];
                t[(base + c, base + block + r)] = beta[r][c];
            }
        }
        current = next;
    }
    let t_active = t.view((0, 0), (n_built, n_built)).into_owned();
    let eig = t_active.symmetric_eigen();
    // sort ascending
    let mut order: Vec<usize> = (0..n_built).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&col| {
            let coeff = eig.eigenvectors.column(col);
            let mut v = vec![0.0; dim];
            for (bi, b) in basis.iter().enumerate() {
                let c = coeff[bi];
                if c != 0.0 {
                    for (vi, bv) in v.iter_mut().zip(b) {
                        *vi += c * bv;
                    }
                }
            }
            v
        })
        .collect();
    (values, vectors)
}

fn orthonormalize(block: &mut [Vec<f64>], against: &[Vec<f64>]) {
    for ci in 0..block.len() {
        for r in against {
            let a = dot(r, &block[ci]);
            for (w, rv) in block[ci].iter_mut().zip(r) {
                *w -= a * rv;
            }
        }
        for pi in 0..ci {
            let a = dot(&block[pi], &block[ci].clone());
            let prev = block[pi].clone();
            for (w, rv) in block[ci].iter_mut().zip(&prev) {
                *w -= a * rv;
            }
        }
        let n = dot(&block[ci], &block[ci]).sqrt().max(1e-300);
        for w in &mut block[ci] {
            *w /= n;
        }
    }
}

/// Joint spectrum through the discretized operators. Returns at most
/// `count` joint clusters, sorted by `(mu2, nu2)`.
pub fn joint_spectrum_oracle(
    ops: &AngularOperators,
    n_grid: usize,
    count: usize,
) -> Result<Vec<JointEigenpair>, SpectrumError> {
    assert!(n_grid >= 32, "oracle grid must be at least 32");
    let disc = DiscreteAngular::new(ops, n_grid);
    let dim = n_grid * n_grid;
    let need_ritz = (3 * count + 12).min(dim);
    let apply_h = |z: &[f64], out: &mut [f64]| disc.apply_sh(z, out);

    // Shift-invert: the low eigenvalues of S sit at the tiny end of a
    // spectrum of width O(n^2) with O(1) gaps, where plain Krylov iteration
    // crawls; (S + c)^{-1} makes them extreme and well separated.
    let lower = lower_bound_estimate(&apply_h, dim, 0xb0);
    let c_shift = (1.0 - 1.5 * lower.min(0.0)).max(1.0);
    let inv_diag: Vec<f64> = {
        let n = n_grid;
        let diag_d2 = 490.0 / (180.0 * disc.h * disc.h);
        let mut v = vec![0.0; dim];
        for i in 0..n {
            for j in 0..n {
                let id = i * n + j;
                let a2 = diag_d2 - disc.phi2[i];
                let a3 = diag_d2 - disc.phi3[j];
                let bh = -disc.s33[j] * a2
                    + disc.s23[i] * a3
                    + disc.shift.0 * disc.weight[id];
                v[id] = 1.0 / (bh / disc.weight[id] + c_shift).max(1e-8);
            }
        }
        v
    };
    let shifted = |z: &[f64], out: &mut [f64]| {
        disc.apply_sh(z, out);
        for (o, zi) in out.iter_mut().zip(z) {
            *o += c_shift * zi;
        }
    };
    let apply_inv = |z: &[f64], out: &mut [f64]| {
        let x = pcg(&shifted, &inv_diag, z, 1e-13, 20 * n_grid * n_grid);
        out.copy_from_slice(&x);
    };
    let block = 6;
    let max_vectors = (block * (need_ritz.div_ceil(block) + 24)).min(dim);
    let (theta_inv, vectors) = block_lanczos(&apply_inv, dim, block, max_vectors, 0x5eed);

    // largest eigenvalues of the inverse are the lowest of S; keep the
    // explicitly converged ones
    let mut kept: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut scratch = vec![0.0; dim];
    for (th_inv, z) in theta_inv.iter().rev().zip(vectors.into_iter().rev()) {
        if *th_inv <= 0.0 {
            break;
        }
        let th = 1.0 / th_inv - c_shift;
        disc.apply_sh(&z, &mut scratch);
        let mut res = 0.0;
        for i in 0..dim {
            let r = scratch[i] - th * z[i];
            res += r * r;
        }
        let res = res.sqrt();
        if res <= 1e-7 * (1.0 + th.abs()) {
            kept.push((th, z));
        } else {
            break; // Ritz values above the converged window are unreliable
        }
        if kept.len() >= need_ritz {
            break;
        }
    }
    kept.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    if kept.len() < count {
        return Err(SpectrumError::EigsolverFailure(format!(
            "only {} converged Ritz pairs (needed {count})",
            kept.len()
        )));
    }

    // cluster by H-eigenvalue, diagonalize the compression of L inside
    let h6 = disc.h.powi(6);
    let cluster_tol = |v: f64| (5.0 * h6 * (1.0 + v.abs())).max(1e-7);
    let mut joint: Vec<(f64, f64, Vec<f64>)> = Vec::new();
    let mut i = 0;
    while i < kept.len() {
        let mut j = i + 1;
        while j < kept.len() && (kept[j].0 - kept[j - 1].0).abs() < cluster_tol(kept[i].0) {
            j += 1;
        }
        let m = j - i;
        // G = Z^T S_L Z
        let mut g = DMatrix::<f64>::zeros(m, m);
        let mut slz: Vec<Vec<f64>> = Vec::with_capacity(m);
        for a in 0..m {
            let mut out = vec![0.0; dim];
            disc.apply_sl(&kept[i + a].1, &mut out);
            slz.push(out);
        }
        for a in 0..m {
            for b in a..m {
                let v = dot(&kept[i + a].1, &slz[b]);
                g[(a, b)] = v;
                g[(b, a)] = v;
            }
        }
        let eig = g.symmetric_eigen();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
        for &col in &order {
            let coeff: DVector<f64> = eig.eigenvectors.column(col).into_owned();
            let mut z = vec![0.0; dim];
            for a in 0..m {
                let c = coeff[a];
                for (zi, v) in z.iter_mut().zip(&kept[i + a].1) {
                    *zi += c * v;
                }
            }
            // Rayleigh quotients refine both labels
            disc.apply_sh(&z, &mut scratch);
            let mu2 = dot(&z, &scratch);
            disc.apply_sl(&z, &mut scratch);
            let nu2 = dot(&z, &scratch);
            joint.push((mu2, nu2, z));
        }
        i = j;
    }

    joint.sort_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).unwrap());

    // group joint labels into eigenpairs with multiplicity
    let mut pairs: Vec<JointEigenpair> = Vec::new();
    let mut i = 0;
    while i < joint.len() && pairs.len() < count {
        let mut j = i + 1;
        let tol = cluster_tol(joint[i].0.abs() + joint[i].1.abs());
        while j < joint.len()
            && (joint[j].0 - joint[i].0).abs() < tol
            && (joint[j].1 - joint[i].1).abs() < tol
        {
            j += 1;
        }
        let mult = j - i;
        // representative separated factors from the best rank-1 fit of the
        // first member (converted back to the function space)
        let y: Vec<f64> = joint[i]
            .2
            .iter()
            .zip(&disc.sqrt_w)
            .map(|(z, s)| z / s)
            .collect();
        let (v, w) = rank_one_factors(&y, n_grid);
        let coeff_v: Vec<f64> = (0..n_grid)
            .map(|t| ops.coeff_v(joint[i].0, joint[i].1, TWO_PI * t as f64 / n_grid as f64))
            .collect();
        let coeff_w: Vec<f64> = (0..n_grid)
            .map(|t| ops.coeff_w(joint[i].0, joint[i].1, TWO_PI * t as f64 / n_grid as f64))
            .collect();
        let residual_v = ode_residual_fft(&v, &coeff_v);
        let residual_w = ode_residual_fft(&w, &coeff_w);
        pairs.push(JointEigenpair {
            mu2: joint[i].0,
            nu2: joint[i].1,
            multiplicity: mult,
            v_ics: vec![[v[0], 0.0]],
            w_ics: vec![[w[0], 0.0]],
            v_basis: vec![v],
            w_basis: vec![w],
            residual_v,
            residual_w,
        });
        i = j;
    }
    Ok(pairs)
}

/// Leading rank-1 factorization Y ~ v w^T by a few power iterations.
fn rank_one_factors(y: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut w = vec![1.0; n];
    let mut v = vec![0.0; n];
    for _ in 0..40 {
        for i in 0..n {
            v[i] = (0..n).map(|j| y[i * n + j] * w[j]).sum();
        }
        let nv = dot(&v, &v).sqrt().max(1e-300);
        for x in &mut v {
            *x /= nv;
        }
        for j in 0..n {
            w[j] = (0..n).map(|i| y[i * n + j] * v[i]).sum();
        }
        let nw = dot(&w, &w).sqrt().max(1e-300);
        for x in &mut w {
            *x /= nw;
        }
    }
    // put the singular value on w; fix the sign so v's largest entry is +
    let sigma: f64 = {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += v[i] * w[j] * y[i * n + j];
            }
        }
        acc
    };
    let vmax = v.iter().cloned().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
    let flip = if vmax < 0.0 { -1.0 } else { 1.0 };
    let v: Vec<f64> = v.iter().map(|x| flip * x).collect();
    let w: Vec<f64> = w.iter().map(|x| flip * sigma * x).collect();
    (v, w)
}

/// Operator norm of the commutator `[H, L]` measured on band-limited smooth
/// probes (fixed frequencies, seeded coefficients), in the weighted norm.
pub fn commutator_norm(ops: &AngularOperators, n_grid: usize, n_probes: usize, seed: u64) -> f64 {
    let disc = DiscreteAngular::new(ops, n_grid);
    let n = n_grid;
    let dim = n * n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n_probes {
        // smooth probe: random trig polynomial with |j|,|k| <= 3
        let mut f = vec![0.0; dim];
        for j in 0..=3i32 {
            for k in 0..=3i32 {
                let a: f64 = rng.random::<f64>() - 0.5;
                let b: f64 = rng.random::<f64>() - 0.5;
                for ix in 0..n {
                    let x2 = TWO_PI * ix as f64 / n as f64;
                    for iy in 0..n {
                        let x3 = TWO_PI * iy as f64 / n as f64;
                        f[ix * n + iy] += a * (j as f64 * x2 + k as f64 * x3).cos()
                            + b * (j as f64 * x2 - k as f64 * x3).sin();
                    }
                }
            }
        }
        let mut hf = vec![0.0; dim];
        let mut lf = vec![0.0; dim];
        let mut hlf = vec![0.0; dim];
        let mut lhf = vec![0.0; dim];
        disc.apply_h(&f, &mut hf);
        disc.apply_l(&f, &mut lf);
        disc.apply_h(&lf, &mut hlf);
        disc.apply_l(&hf, &mut lhf);
        let diff: Vec<f64> = hlf.iter().zip(&lhf).map(|(a, b)| a - b).collect();
        let r = disc.weighted_norm(&diff) / disc.weighted_norm(&f).max(1e-300);
        worst = worst.max(r);
    }
    worst
}


#[cfg(test)]
mod probe {
    use super::*;
    use crate::stackel::fixture_f1;

    #[test]
    fn sh_operator_is_symmetric() {
        let ops = AngularOperators::from_metric(&fixture_f1());
        let disc = DiscreteAngular::new(&ops, 32);
        let dim = 32 * 32;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
        let y: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut sx = vec![0.0; dim];
        let mut sy = vec![0.0; dim];
        disc.apply_sh(&x, &mut sx);
        disc.apply_sh(&y, &mut sy);
        let a = dot(&y, &sx);
        let b = dot(&x, &sy);
        println!("symmetry defect: {}", (a - b).abs() / a.abs().max(1.0));
        assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn lanczos_on_diagonal_matrix() {
        let dim = 500;
        let diag: Vec<f64> = (0..dim).map(|i| i as f64).collect();
        let apply = |z: &[f64], out: &mut [f64]| {
            for i in 0..dim {
                out[i] = diag[i] * z[i];
            }
        };
        let (vals, _vecs) = block_lanczos(&apply, dim, 6, 240, 3);
        // raw Krylov accuracy at this budget is modest; the production path
        // wraps the routine in shift-invert, which the oracle test covers
        assert!((vals[0] - 0.0).abs() < 1e-4, "ritz0 {}", vals[0]);
        assert!((vals[5] - 5.0).abs() < 1e-3, "ritz5 {}", vals[5]);
    }
}
