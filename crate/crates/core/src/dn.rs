//! Assembly of the separated Dirichlet-to-Neumann operator.
//!
//! Over each joint harmonic the DN map acts through the 2x2 spectral block
//! built from the two-parameter WT data with the oracle-validated sign
//! convention,
//!
//! ```text
//!   u'(0) =  M phi0 + (1/Delta) phi1
//!   u'(A) = -(1/Delta) phi0 - N phi1
//! ```
//!
//! wrapped in the boundary prefactors: with `phi^e = f_e / R_e`,
//!
//! ```text
//!   (Lambda f)_0 = -(R0/H1(0)) [ Gamma1(0)/2 phi^0 + sum_m u_m'(0) Y_m ]
//!   (Lambda f)_1 = +(RA/H1(A)) [ Gamma1(A)/2 phi^1 + sum_m u_m'(A) Y_m ]
//! ```
//!
//! Projections use the trapezoidal rule in the `s^{11}`-weighted inner
//! product, which is spectrally accurate for smooth periodic integrands.
//! Inside a degenerate joint eigenspace the product basis is orthonormalized
//! by modified Gram-Schmidt in that inner product, cosine-type columns
//! first.

use std::fmt::Write as _;
use std::path::Path;

use crate::angular::{resample_v, resample_w, AngularOperators, JointEigenpair};
use crate::curve::TWO_PI;
use crate::error::DnError;
use crate::radial::{bvp_derivative_map, fss, wt, RadialRow, SpectralPair};
use crate::stackel::{metric_eval, ConformalMetric};

#[derive(Debug, Clone)]
pub struct DnBlock {
    pub mu2: f64,
    pub nu2: f64,
    pub m_fn: f64,
    pub n_fn: f64,
    pub inv_delta: f64,
    /// derivative map [[M, 1/Delta], [-1/Delta, -N]]
    pub block: [[f64; 2]; 2],
}

impl DnBlock {
    /// Eigendecomposition of the symmetric form [[M, 1/Delta], [1/Delta, N]].
    pub fn eigen(&self) -> BlockEigen {
        let a = self.m_fn;
        let d = self.n_fn;
        let b = self.inv_delta;
        let disc = ((a - d) * (a - d) + 4.0 * b * b).sqrt();
        let plus = 0.5 * (a + d + disc);
        let minus = 0.5 * (a + d - disc);
        let vec_for = |omega: f64| -> [f64; 2] {
            // (A - omega I) x = 0 for [[a, b], [b, d]]
            let c1 = [b, omega - a];
            let c2 = [omega - d, b];
            let pick = if c1[0].abs() + c1[1].abs() >= c2[0].abs() + c2[1].abs() {
                c1
            } else {
                c2
            };
            let n = (pick[0] * pick[0] + pick[1] * pick[1]).sqrt();
            if n == 0.0 {
                [1.0, 0.0]
            } else {
                [pick[0] / n, pick[1] / n]
            }
        };
        BlockEigen {
            omega_plus: plus,
            omega_minus: minus,
            x_plus: vec_for(plus),
            x_minus: vec_for(minus),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlockEigen {
    pub omega_plus: f64,
    pub omega_minus: f64,
    pub x_plus: [f64; 2],
    pub x_minus: [f64; 2],
}

/// One element of the boundary Hilbert basis: a normalized product
/// eigenfunction sampled on the boundary grid.
#[derive(Debug, Clone)]
pub struct BasisElement {
    pub block_index: usize,
    pub samples: Vec<f64>,
}

pub struct DnOperator {
    pub n2: usize,
    pub n3: usize,
    pub blocks: Vec<DnBlock>,
    pub basis: Vec<BasisElement>,
    /// s^{11} on the boundary grid
    pub weight: Vec<f64>,
    pub inv_h1: [Vec<f64>; 2],
    pub half_gamma1: [Vec<f64>; 2],
    pub r_factor: [Vec<f64>; 2],
    /// joint eigenvalues whose radial problem sat on a Dirichlet eigenvalue
    pub withheld: Vec<(f64, f64)>,
}

pub fn assemble_dn(
    metric: &ConformalMetric,
    pairs: &[JointEigenpair],
    n2: usize,
    n3: usize,
    max_harmonics: usize,
) -> Result<DnOperator, DnError> {
    let ops = AngularOperators::from_metric(metric);
    let row = RadialRow::from_metric(metric);
    let nb = n2 * n3;
    let bidx = |j: usize, k: usize| j * n3 + k;

    let mut weight = vec![0.0; nb];
    for j in 0..n2 {
        for k in 0..n3 {
            weight[bidx(j, k)] =
                ops.weight(TWO_PI * j as f64 / n2 as f64, TWO_PI * k as f64 / n3 as f64);
        }
    }
    let mut inv_h1 = [vec![0.0; nb], vec![0.0; nb]];
    let mut half_gamma1 = [vec![0.0; nb], vec![0.0; nb]];
    let mut r_factor = [vec![0.0; nb], vec![0.0; nb]];
    for (e, x1) in [(0usize, 0.0), (1usize, metric.stackel.a_length)] {
        for j in 0..n2 {
            for k in 0..n3 {
                let x = [x1, TWO_PI * j as f64 / n2 as f64, TWO_PI * k as f64 / n3 as f64];
                let ev = metric_eval(metric, x)
                    .expect("metric must be positive on the boundary");
                inv_h1[e][bidx(j, k)] = 1.0 / ev.h_cap_sq[0].sqrt();
                half_gamma1[e][bidx(j, k)] = 0.5 * ev.gamma_cap[0];
                r_factor[e][bidx(j, k)] = ev.r_factor;
            }
        }
    }

    let quad = (TWO_PI / n2 as f64) * (TWO_PI / n3 as f64);
    let wdot = |a: &[f64], b: &[f64]| -> f64 {
        let mut acc = 0.0;
        for i in 0..nb {
            acc += a[i] * b[i] * weight[i];
        }
        acc * quad
    };

    let mut blocks = Vec::new();
    let mut basis: Vec<BasisElement> = Vec::new();
    let mut withheld = Vec::new();
    'pairs: for pair in pairs {
        if basis.len() >= max_harmonics {
            break;
        }
        let p = SpectralPair::real(pair.mu2, pair.nu2);
        let data = fss(&row, p)?;
        let w = wt(&data);
        if w.is_pole {
            withheld.push((pair.mu2, pair.nu2));
            continue 'pairs;
        }
        let map = bvp_derivative_map(&w)?;
        let m_fn = w.m_fn()?.re;
        let n_fn = w.n_fn()?.re;
        let inv_delta = w.inv_delta()?.re;
        let block_index = blocks.len();
        blocks.push(DnBlock {
            mu2: pair.mu2,
            nu2: pair.nu2,
            m_fn,
            n_fn,
            inv_delta,
            block: [[map[0][0].re, map[0][1].re], [map[1][0].re, map[1][1].re]],
        });

        // product basis of the joint eigenspace, Gram-Schmidt in the
        // weighted inner product (cosine-type columns first)
        let vs: Vec<Vec<f64>> = (0..pair.v_ics.len())
            .map(|a| resample_v(&ops, pair, a, n2))
            .collect();
        let ws: Vec<Vec<f64>> = (0..pair.w_ics.len())
            .map(|b| resample_w(&ops, pair, b, n3))
            .collect();
        let mut group: Vec<Vec<f64>> = Vec::new();
        for va in &vs {
            for wb in &ws {
                let mut y = vec![0.0; nb];
                for j in 0..n2 {
                    for k in 0..n3 {
                        y[bidx(j, k)] = va[j] * wb[k];
                    }
                }
                group.push(y);
            }
        }
        for gi in 0..group.len() {
            for prev in 0..gi {
                let c = wdot(&group[prev], &group[gi].clone());
                let prev_vec = group[prev].clone();
                for (a, b) in group[gi].iter_mut().zip(&prev_vec) {
                    *a -= c * b;
                }
            }
            let n = wdot(&group[gi], &group[gi]).sqrt();
            if n < 1e-10 {
                continue;
            }
            for a in &mut group[gi] {
                *a /= n;
            }
            if basis.len() < max_harmonics {
                basis.push(BasisElement { block_index, samples: group[gi].clone() });
            }
        }
    }

    Ok(DnOperator {
        n2,
        n3,
        blocks,
        basis,
        weight,
        inv_h1,
        half_gamma1,
        r_factor,
        withheld,
    })
}

pub struct DnApplied {
    pub out0: Vec<f64>,
    pub out1: Vec<f64>,
    /// worst relative projection residual of phi = f/R over the two tori;
    /// above ~1e-3 the truncated basis is not resolving the datum
    pub projection_residual: f64,
    pub truncation_warning: bool,
}

impl DnOperator {
    fn wdot(&self, a: &[f64], b: &[f64]) -> f64 {
        let quad = (TWO_PI / self.n2 as f64) * (TWO_PI / self.n3 as f64);
        let mut acc = 0.0;
        for i in 0..a.len() {
            acc += a[i] * b[i] * self.weight[i];
        }
        acc * quad
    }

    pub fn apply(&self, f0: &[f64], f1: &[f64]) -> DnApplied {
        let nb = self.n2 * self.n3;
        assert_eq!(f0.len(), nb);
        assert_eq!(f1.len(), nb);
        let phi0: Vec<f64> = f0.iter().zip(&self.r_factor[0]).map(|(f, r)| f / r).collect();
        let phi1: Vec<f64> = f1.iter().zip(&self.r_factor[1]).map(|(f, r)| f / r).collect();

        let mut spec0 = vec![0.0; nb];
        let mut spec1 = vec![0.0; nb];
        let mut recon0 = vec![0.0; nb];
        let mut recon1 = vec![0.0; nb];
        for el in &self.basis {
            let c0 = self.wdot(&phi0, &el.samples);
            let c1 = self.wdot(&phi1, &el.samples);
            let b = &self.blocks[el.block_index].block;
            let a0 = b[0][0] * c0 + b[0][1] * c1;
            let a1 = b[1][0] * c0 + b[1][1] * c1;
            for i in 0..nb {
                spec0[i] += a0 * el.samples[i];
                spec1[i] += a1 * el.samples[i];
                recon0[i] += c0 * el.samples[i];
                recon1[i] += c1 * el.samples[i];
            }
        }
        let res = |phi: &[f64], recon: &[f64]| -> f64 {
            let diff: Vec<f64> = phi.iter().zip(recon).map(|(a, b)| a - b).collect();
            let num = self.wdot(&diff, &diff).sqrt();
            let den = self.wdot(phi, phi).sqrt();
            if den == 0.0 {
                0.0
            } else {
                num / den
            }
        };
        let projection_residual = res(&phi0, &recon0).max(res(&phi1, &recon1));

        let mut out0 = vec![0.0; nb];
        let mut out1 = vec![0.0; nb];
        for i in 0..nb {
            out0[i] = -self.r_factor[0][i]
                * self.inv_h1[0][i]
                * (self.half_gamma1[0][i] * phi0[i] + spec0[i]);
            out1[i] = self.r_factor[1][i]
                * self.inv_h1[1][i]
                * (self.half_gamma1[1][i] * phi1[i] + spec1[i]);
        }
        DnApplied {
            out0,
            out1,
            projection_residual,
            truncation_warning: projection_residual >= 1e-3,
        }
    }

    /// CSV of all blocks plus a JSON header with the truncation and an
    /// optional fixture hash.
    pub fn export(&self, dir: &Path, fixture_hash: &str) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let header = serde_json::json!({
            "truncation": self.basis.len(),
            "blocks": self.blocks.len(),
            "boundary_grid": [self.n2, self.n3],
            "fixture_sha256": fixture_hash,
            "withheld_pairs": self.withheld,
        });
        std::fs::write(
            dir.join("dn_header.json"),
            serde_json::to_string_pretty(&header).unwrap(),
        )?;
        let mut csv = String::from("m,mu2,nu2,b00,b01,b10,b11,omega_plus,omega_minus\n");
        for (m, b) in self.blocks.iter().enumerate() {
            let e = b.eigen();
            let _ = writeln!(
                csv,
                "{m},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                b.mu2,
                b.nu2,
                b.block[0][0],
                b.block[0][1],
                b.block[1][0],
                b.block[1][1],
                e.omega_plus,
                e.omega_minus
            );
        }
        std::fs::write(dir.join("dn_blocks.csv"), csv)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angular::{joint_spectrum_shooting, SearchBox, ShootingConfig};
    use crate::stackel::fixture_f1;
    use approx::assert_relative_eq;

    fn f1_operator(n: usize) -> DnOperator {
        let m = fixture_f1();
        let ops = AngularOperators::from_metric(&m);
        let (pairs, _) = joint_spectrum_shooting(
            &ops,
            SearchBox::up_to(30.0, 20.0),
            usize::MAX,
            &ShootingConfig::default(),
        )
        .unwrap();
        assemble_dn(&m, &pairs, n, n, 64).unwrap()
    }

    #[test]
    fn zero_pair_block_and_eigen() {
        let op = f1_operator(16);
        let b0 = &op.blocks[0];
        assert_relative_eq!(b0.mu2, 0.0, epsilon = 1e-8);
        // M = N = -1, 1/Delta = 1
        assert_relative_eq!(b0.m_fn, -1.0, max_relative = 1e-9);
        assert_relative_eq!(b0.n_fn, -1.0, max_relative = 1e-9);
        assert_relative_eq!(b0.inv_delta, 1.0, max_relative = 1e-9);
        let e = b0.eigen();
        assert_relative_eq!(e.omega_plus, 0.0, epsilon = 1e-9);
        assert_relative_eq!(e.omega_minus, -2.0, max_relative = 1e-9);
        // eigenvectors (1, 1)/sqrt2 and (1, -1)/sqrt2 up to sign
        assert_relative_eq!(e.x_plus[0].abs(), std::f64::consts::FRAC_1_SQRT_2, max_relative = 1e-9);
        // eigen residual
        for (omega, x) in [(e.omega_plus, e.x_plus), (e.omega_minus, e.x_minus)] {
            let a = [
                b0.m_fn * x[0] + b0.inv_delta * x[1],
                b0.inv_delta * x[0] + b0.n_fn * x[1],
            ];
            let r = ((a[0] - omega * x[0]).powi(2) + (a[1] - omega * x[1]).powi(2)).sqrt();
            assert!(r < 1e-12, "eigen residual {r}");
        }
    }

    #[test]
    fn sqrt3_pair_block() {
        let op = f1_operator(16);
        let b = op
            .blocks
            .iter()
            .find(|b| (b.mu2 - 2.0).abs() < 1e-6 && (b.nu2 - 1.0).abs() < 1e-6)
            .unwrap();
        let k = 3f64.sqrt();
        assert_relative_eq!(b.m_fn, -k / k.tanh(), max_relative = 1e-9);
        assert_relative_eq!(b.inv_delta, k / k.sinh(), max_relative = 1e-9);
        let e = b.eigen();
        assert_relative_eq!(
            e.omega_plus,
            -k / k.tanh() + k / k.sinh(),
            max_relative = 1e-9
        );
        assert_relative_eq!(
            e.omega_minus,
            -k / k.tanh() - k / k.sinh(),
            max_relative = 1e-9
        );
    }

    #[test]
    fn constant_data_matches_direct_solution() {
        let op = f1_operator(16);
        let nb = 16 * 16;
        // f = (1, 0): DN = (1/sqrt2, -1/sqrt2)
        let a = op.apply(&vec![1.0; nb], &vec![0.0; nb]);
        assert!(a.projection_residual < 1e-10);
        let want = 1.0 / 2f64.sqrt();
        for v in &a.out0 {
            assert!((v - want).abs() < 1e-9, "{v}");
        }
        for v in &a.out1 {
            assert!((v + want).abs() < 1e-9);
        }
        // constants are harmonic
        let a = op.apply(&vec![1.0; nb], &vec![1.0; nb]);
        for v in a.out0.iter().chain(&a.out1) {
            assert!(v.abs() < 1e-10);
        }
    }

    #[test]
    fn kernel_through_r_and_linearity() {
        let op = f1_operator(16);
        let nb = 16 * 16;
        // constants lifted through R: f = (R, R) maps to zero
        let f0: Vec<f64> = op.r_factor[0].clone();
        let f1: Vec<f64> = op.r_factor[1].clone();
        let a = op.apply(&f0, &f1);
        for v in a.out0.iter().chain(&a.out1) {
            assert!(v.abs() < 1e-10);
        }
        // linearity to near machine precision
        let g0: Vec<f64> = (0..nb).map(|i| ((i % 16) as f64 * 0.37).sin()).collect();
        let g1: Vec<f64> = (0..nb).map(|i| ((i / 16) as f64 * 0.21).cos()).collect();
        let af = op.apply(&f0, &f1);
        let ag = op.apply(&g0, &g1);
        let combo0: Vec<f64> = f0.iter().zip(&g0).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
        let combo1: Vec<f64> = f1.iter().zip(&g1).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
        let ac = op.apply(&combo0, &combo1);
        for i in 0..nb {
            let want0 = 2.0 * af.out0[i] - 0.5 * ag.out0[i];
            let want1 = 2.0 * af.out1[i] - 0.5 * ag.out1[i];
            assert!((ac.out0[i] - want0).abs() < 1e-12);
            assert!((ac.out1[i] - want1).abs() < 1e-12);
        }
    }

    #[test]
    fn single_harmonic_stays_in_its_block() {
        let op = f1_operator(24);
        let nb = 24 * 24;
        // f = (R Y_m, 0) for a nontrivial basis element
        let el = &op.basis[3];
        let f0: Vec<f64> = el
            .samples
            .iter()
            .zip(&op.r_factor[0])
            .map(|(y, r)| y * r)
            .collect();
        let a = op.apply(&f0, &vec![0.0; nb]);
        assert!(a.projection_residual < 1e-9);
        // the output over R, divided back, projects only onto el
        let phi_out: Vec<f64> = a
            .out0
            .iter()
            .zip(&op.r_factor[0])
            .enumerate()
            .map(|(i, (o, r))| -o / (op.inv_h1[0][i] * r))
            .collect();
        let quad_norm = op.wdot(&phi_out, &phi_out).sqrt();
        let mut leakage: f64 = 0.0;
        for (bi, other) in op.basis.iter().enumerate() {
            if bi == 3 {
                continue;
            }
            leakage = leakage.max(op.wdot(&phi_out, &other.samples).abs());
        }
        assert!(
            leakage / quad_norm.max(1e-300) < 1e-8,
            "leakage {}",
            leakage / quad_norm
        );
    }

    #[test]
    fn dirichlet_pole_is_withheld() {
        // a synthetic joint eigenvalue sitting exactly on the first radial
        // Dirichlet eigenvalue (k^2 = mu2 + nu2 = -pi^2 for the flat row)
        let m = fixture_f1();
        let half = -std::f64::consts::PI * std::f64::consts::PI / 2.0;
        let fake = JointEigenpair {
            mu2: half,
            nu2: half,
            multiplicity: 1,
            v_ics: vec![[1.0, 0.0]],
            w_ics: vec![[1.0, 0.0]],
            v_basis: vec![vec![1.0; 16]],
            w_basis: vec![vec![1.0; 16]],
            residual_v: 0.0,
            residual_w: 0.0,
        };
        let op = assemble_dn(&m, &[fake], 16, 16, 8).unwrap();
        assert!(op.blocks.is_empty());
        assert_eq!(op.withheld.len(), 1);
        assert!((op.withheld[0].0 - half).abs() < 1e-12);
    }

    use crate::angular::JointEigenpair;

    #[test]
    fn rough_data_raises_truncation_warning() {
        let op = f1_operator(32);
        let nb = 32 * 32;
        // data with frequency far above the truncated basis
        let mut f0 = vec![0.0; nb];
        for j in 0..32 {
            for k in 0..32 {
                let x2 = crate::curve::TWO_PI * j as f64 / 32.0;
                let x3 = crate::curve::TWO_PI * k as f64 / 32.0;
                f0[j * 32 + k] = (13.0 * x2).sin() * (11.0 * x3).cos();
            }
        }
        let a = op.apply(&f0, &vec![0.0; nb]);
        assert!(a.truncation_warning, "residual {}", a.projection_residual);
    }

    #[test]
    fn export_writes_blocks() {
        let op = f1_operator(16);
        let dir = tempfile::tempdir().unwrap();
        op.export(dir.path(), "deadbeef").unwrap();
        let csv = std::fs::read_to_string(dir.path().join("dn_blocks.csv")).unwrap();
        assert!(csv.lines().count() > 5);
        let header = std::fs::read_to_string(dir.path().join("dn_header.json")).unwrap();
        assert!(header.contains("deadbeef"));
    }
}
