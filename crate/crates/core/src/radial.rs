//! Fundamental systems and two-parameter Weyl-Titchmarsh data of the radial
//! ODE
//!
//! ```text
//!   -u'' + [mu^2 s12(x) + nu^2 s13(x) - phi1(x)] u = 0      on [0, A]
//! ```
//!
//! at complex spectral pairs `(mu^2, nu^2)`. The sine/cosine fundamental
//! systems at both endpoints give the characteristic function
//! `Delta = W(s0, s1)`, the Wronskians `D = W(c0, s1)`, `E = W(s0, c1)` and
//! the WT functions `M = -D/Delta`, `N = E/Delta`. Solutions grow like
//! `exp(|Re mu| A)`, so endpoint data is carried as [`LogComplex`].
//!
//! Sign convention: the Dirichlet data-to-derivative map is
//! `u'(0) = M phi0 + (1/Delta) phi1`, `u'(A) = -(1/Delta) phi0 - N phi1`.
//! On the flat fixture the explicit solution `u = 1 - x` pins the signs of
//! the second row; tests assert this against the direct solve.

use num_complex::Complex64;

use crate::curve::Curve;
use crate::error::RadialError;
use crate::flow::{integrate_columns, Endpoint, Mat2};
use crate::logc::LogComplex;
use crate::stackel::ConformalMetric;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralPair {
    pub mu2: Complex64,
    pub nu2: Complex64,
}

impl SpectralPair {
    pub fn new(mu2: Complex64, nu2: Complex64) -> Self {
        SpectralPair { mu2, nu2 }
    }

    pub fn real(mu2: f64, nu2: f64) -> Self {
        SpectralPair { mu2: Complex64::new(mu2, 0.0), nu2: Complex64::new(nu2, 0.0) }
    }

    /// Magnitude scale k with k^2 = |mu^2| + |nu^2|; drives the step size.
    pub fn k_scale(&self) -> f64 {
        (self.mu2.norm() + self.nu2.norm()).sqrt()
    }
}

/// The radial row of a fixture: coefficients of the separated radial ODE.
#[derive(Clone)]
pub struct RadialRow {
    pub s12: Curve,
    pub s13: Curve,
    pub phi1: Curve,
    pub a_length: f64,
    max_s12: f64,
    max_s13: f64,
    max_abs_phi1: f64,
}

impl RadialRow {
    pub fn new(s12: Curve, s13: Curve, phi1: Curve, a_length: f64) -> Self {
        let scan_max = |f: &Curve, absolute: bool| -> f64 {
            (0..=512)
                .map(|k| {
                    let v = f.eval(a_length * k as f64 / 512.0);
                    if absolute {
                        v.abs()
                    } else {
                        v
                    }
                })
                .fold(0.0f64, f64::max)
        };
        let max_s12 = scan_max(&s12, true);
        let max_s13 = scan_max(&s13, true);
        let max_abs_phi1 = scan_max(&phi1, true);
        RadialRow { s12, s13, phi1, a_length, max_s12, max_s13, max_abs_phi1 }
    }

    pub fn from_metric(m: &ConformalMetric) -> Self {
        RadialRow::new(
            m.stackel.entry(0, 1).clone(),
            m.stackel.entry(0, 2).clone(),
            m.phi[0].clone(),
            m.stackel.a_length,
        )
    }

    pub fn potential(&self, p: SpectralPair, x: f64) -> Complex64 {
        p.mu2 * self.s12.eval(x) + p.nu2 * self.s13.eval(x) - self.phi1.eval(x)
    }

    /// Local-frequency bound of the ODE over the whole interval; drives
    /// the step count so that accuracy does not degrade with the
    /// coefficients' scale.
    pub fn k_bound(&self, p: SpectralPair) -> f64 {
        (p.mu2.norm() * self.max_s12 + p.nu2.norm() * self.max_s13 + self.max_abs_phi1).sqrt()
    }
}

/// Integration profile. `Fine` keeps the accumulated phase error flat in the
/// spectral parameter so that scaled asymptotic residuals stay clean out to
/// |mu| ~ 500; `Coarse` is for root searches that get polished afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepProfile {
    Fine,
    Coarse,
}

pub fn step_count(domain_len: f64, k: f64, profile: StepProfile) -> usize {
    let h_target = match profile {
        StepProfile::Fine => (domain_len / 400.0)
            .min(0.003 / (1.0 + k))
            .min(0.0376 / (1.0 + k).powf(1.5)),
        StepProfile::Coarse => (domain_len / 400.0).min(0.05 / (1.0 + k)),
    };
    (domain_len / h_target).ceil() as usize
}

#[derive(Debug, Clone)]
pub struct FssData {
    pub p: SpectralPair,
    pub a_length: f64,
    /// (value, derivative) of c0 and s0 at x = A
    pub c0_at_a: Endpoint,
    pub s0_at_a: Endpoint,
    /// (value, derivative) of c1 and s1 at x = 0
    pub c1_at_0: Endpoint,
    pub s1_at_0: Endpoint,
    /// |det of the accumulated flow - 1| for the forward and backward
    /// sweeps: the Wronskian-conservation defect of the computed flow.
    pub w0_defect: f64,
    pub w1_defect: f64,
}

impl FssData {
    /// W(c0, s0) evaluated at A from endpoint values. Well conditioned only
    /// while `|Re k| A` is modest; the tracked `w0_defect` covers the rest.
    pub fn wronskian_0(&self) -> Complex64 {
        let (c, dc) = &self.c0_at_a;
        let (s, ds) = &self.s0_at_a;
        c.mul(ds).sub(&dc.mul(s)).to_complex()
    }

    /// W(c1, s1) evaluated at 0.
    pub fn wronskian_1(&self) -> Complex64 {
        let (c, dc) = &self.c1_at_0;
        let (s, ds) = &self.s1_at_0;
        c.mul(ds).sub(&dc.mul(s)).to_complex()
    }
}

/// Fundamental systems of sine and cosine type at both endpoints.
pub fn fss(row: &RadialRow, p: SpectralPair) -> Result<FssData, RadialError> {
    fss_with_profile(row, p, StepProfile::Fine)
}

pub fn fss_with_profile(
    row: &RadialRow,
    p: SpectralPair,
    profile: StepProfile,
) -> Result<FssData, RadialError> {
    let n = step_count(row.a_length, row.k_bound(p), profile);
    let a = |x: f64| -> Mat2 {
        [
            [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
            [row.potential(p, x), Complex64::new(0.0, 0.0)],
        ]
    };
    let fwd = integrate_columns(&a, 0.0, row.a_length, n)?;
    let bwd = integrate_columns(&a, row.a_length, 0.0, n)?;
    Ok(FssData {
        p,
        a_length: row.a_length,
        c0_at_a: fwd.cosine,
        s0_at_a: fwd.sine,
        c1_at_0: bwd.cosine,
        s1_at_0: bwd.sine,
        w0_defect: fwd.det_defect,
        w1_defect: bwd.det_defect,
    })
}

/// Trajectory of the solution with initial data `(u, u')` at `x = 0`,
/// sampled at `n_samples + 1` evenly spaced points. Plain complex values;
/// intended for moderate spectral parameters.
pub fn radial_solution_samples(
    row: &RadialRow,
    p: SpectralPair,
    ic: (Complex64, Complex64),
    n_samples: usize,
) -> Result<Vec<(f64, Complex64)>, RadialError> {
    let per = step_count(row.a_length / n_samples as f64, row.k_bound(p), StepProfile::Fine).max(8);
    let v = |x: f64| row.potential(p, x);
    let mut y = [ic.0, ic.1];
    let mut out = Vec::with_capacity(n_samples + 1);
    out.push((0.0, y[0]));
    let hseg = row.a_length / n_samples as f64;
    for seg in 0..n_samples {
        let x0 = seg as f64 * hseg;
        let h = hseg / per as f64;
        for i in 0..per {
            let x = x0 + i as f64 * h;
            let f = |x: f64, y: &[Complex64; 2]| [y[1], v(x) * y[0]];
            let k1 = f(x, &y);
            let y2 = [y[0] + k1[0] * (h / 2.0), y[1] + k1[1] * (h / 2.0)];
            let k2 = f(x + h / 2.0, &y2);
            let y3 = [y[0] + k2[0] * (h / 2.0), y[1] + k2[1] * (h / 2.0)];
            let k3 = f(x + h / 2.0, &y3);
            let y4 = [y[0] + k3[0] * h, y[1] + k3[1] * h];
            let k4 = f(x + h, &y4);
            y[0] += (k1[0] + (k2[0] + k3[0]) * 2.0 + k4[0]) * (h / 6.0);
            y[1] += (k1[1] + (k2[1] + k3[1]) * 2.0 + k4[1]) * (h / 6.0);
            if !y[0].is_finite() || !y[1].is_finite() {
                return Err(RadialError::IntegratorOverflow { scale: f64::INFINITY });
            }
        }
        out.push((x0 + hseg, y[0]));
    }
    Ok(out)
}

/// Characteristic and Weyl-Titchmarsh data at one spectral pair.
#[derive(Debug, Clone)]
pub struct WTData {
    pub p: SpectralPair,
    /// Delta = W(s0, s1) = s0(A)
    pub delta: LogComplex,
    /// D = W(c0, s1) = c0(A)
    pub d_fn: LogComplex,
    /// E = W(s0, c1) = -c1(0)
    pub e_fn: LogComplex,
    pub is_pole: bool,
}

pub const POLE_RELATIVE_THRESHOLD: f64 = 1e-8;

pub fn wt(fss: &FssData) -> WTData {
    let delta = fss.s0_at_a.0;
    let d_fn = fss.c0_at_a.0;
    let e_fn = fss.c1_at_0.0.neg();
    // |Delta| < 1e-8 (1 + |D| + |E|), evaluated in log space
    let log_scale_rhs = log_sum_exp(&[0.0, d_fn.log_abs(), e_fn.log_abs()]);
    let is_pole = delta.log_abs() < POLE_RELATIVE_THRESHOLD.ln() + log_scale_rhs;
    WTData { p: fss.p, delta, d_fn, e_fn, is_pole }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

impl WTData {
    /// M = -D/Delta; None at a pole.
    pub fn m_fn(&self) -> Result<Complex64, RadialError> {
        self.guard()?;
        Ok(self.d_fn.div(&self.delta).neg().to_complex())
    }

    /// N = E/Delta; None at a pole.
    pub fn n_fn(&self) -> Result<Complex64, RadialError> {
        self.guard()?;
        Ok(self.e_fn.div(&self.delta).to_complex())
    }

    pub fn inv_delta(&self) -> Result<Complex64, RadialError> {
        self.guard()?;
        Ok(LogComplex::from_real(1.0).div(&self.delta).to_complex())
    }

    fn guard(&self) -> Result<(), RadialError> {
        if self.is_pole {
            return Err(RadialError::PoleAtDirichletEigenvalue { delta_abs: self.delta.abs() });
        }
        Ok(())
    }
}

/// Map from Dirichlet data `(phi0, phi1)` to endpoint derivatives
/// `(u'(0), u'(A))`:
///
/// ```text
///   u'(0) =  M phi0 + (1/Delta) phi1
///   u'(A) = -(1/Delta) phi0 - N phi1
/// ```
pub fn bvp_derivative_map(wt: &WTData) -> Result<[[Complex64; 2]; 2], RadialError> {
    let m = wt.m_fn()?;
    let n = wt.n_fn()?;
    let inv_delta = wt.inv_delta()?;
    Ok([[m, inv_delta], [-inv_delta, -n]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stackel::fixture_f1;
    use approx::assert_relative_eq;

    fn row_f1() -> RadialRow {
        RadialRow::from_metric(&fixture_f1())
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn flat_zero_pair_closed_forms() {
        let row = row_f1();
        let data = fss(&row, SpectralPair::real(0.0, 0.0)).unwrap();
        // c0 = 1, s0 = x, c1 = 1, s1 = x - 1
        assert!((data.c0_at_a.0.to_complex() - c(1.0, 0.0)).norm() < 1e-12);
        assert!((data.s0_at_a.0.to_complex() - c(1.0, 0.0)).norm() < 1e-12);
        assert!((data.c1_at_0.0.to_complex() - c(1.0, 0.0)).norm() < 1e-12);
        assert!((data.s1_at_0.0.to_complex() - c(-1.0, 0.0)).norm() < 1e-12);
        let w = wt(&data);
        assert!(!w.is_pole);
        assert!((w.delta.to_complex() - c(1.0, 0.0)).norm() < 1e-12);
        assert!((w.d_fn.to_complex() - c(1.0, 0.0)).norm() < 1e-12);
        assert!((w.e_fn.to_complex() - c(-1.0, 0.0)).norm() < 1e-12);
        assert!((w.m_fn().unwrap() - c(-1.0, 0.0)).norm() < 1e-12);
        assert!((w.n_fn().unwrap() - c(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn flat_sinh_pair() {
        let row = row_f1();
        let p = SpectralPair::real(2.0, 1.0); // k^2 = 3
        let k = 3f64.sqrt();
        let data = fss(&row, p).unwrap();
        let w = wt(&data);
        assert_relative_eq!(
            w.delta.to_complex().re,
            k.sinh() / k,
            max_relative = 1e-10
        );
        let m = w.m_fn().unwrap();
        assert_relative_eq!(m.re, -k / k.tanh(), max_relative = 1e-10);
        assert!(m.im.abs() < 1e-12);
        let n = w.n_fn().unwrap();
        assert_relative_eq!(n.re, -k / k.tanh(), max_relative = 1e-10);

        // trajectory of s0 matches sinh(k x)/k
        let traj = radial_solution_samples(&row, p, (c(0.0, 0.0), c(1.0, 0.0)), 20).unwrap();
        for (x, u) in traj {
            assert!((u.re - (k * x).sinh() / k).abs() < 1e-10, "at {x}");
        }
    }

    #[test]
    fn dirichlet_eigenvalue_is_a_pole() {
        let row = row_f1();
        let half_pi2 = -std::f64::consts::PI * std::f64::consts::PI / 2.0;
        let data = fss(&row, SpectralPair::real(half_pi2, half_pi2)).unwrap();
        let w = wt(&data);
        assert!(w.is_pole, "Delta = {:?}", w.delta.to_complex());
        assert!(w.m_fn().is_err());
        // s0 = sin(pi x)/pi: purely oscillatory
        let traj = radial_solution_samples(
            &row,
            SpectralPair::real(half_pi2, half_pi2),
            (c(0.0, 0.0), c(1.0, 0.0)),
            10,
        )
        .unwrap();
        let pi = std::f64::consts::PI;
        for (x, u) in traj {
            assert!((u.re - (pi * x).sin() / pi).abs() < 1e-10, "at {x}");
        }
    }

    #[test]
    fn derivative_map_matches_explicit_solutions() {
        let row = row_f1();
        // (0,0), (phi0, phi1) = (1, 0): u = 1 - x
        let w = wt(&fss(&row, SpectralPair::real(0.0, 0.0)).unwrap());
        let map = bvp_derivative_map(&w).unwrap();
        let du0 = map[0][0] * 1.0 + map[0][1] * 0.0;
        let dua = map[1][0] * 1.0 + map[1][1] * 0.0;
        assert!((du0 - c(-1.0, 0.0)).norm() < 1e-12);
        assert!((dua - c(-1.0, 0.0)).norm() < 1e-12);
        // (1,1): u = 1 constant
        let du0 = map[0][0] + map[0][1];
        let dua = map[1][0] + map[1][1];
        assert!(du0.norm() < 1e-12);
        assert!(dua.norm() < 1e-12);
        // (2,1), (1,0): u'(0) = -sqrt3 coth sqrt3, u'(1) = -sqrt3/sinh sqrt3
        let k = 3f64.sqrt();
        let w = wt(&fss(&row, SpectralPair::real(2.0, 1.0)).unwrap());
        let map = bvp_derivative_map(&w).unwrap();
        assert_relative_eq!(map[0][0].re, -k / k.tanh(), max_relative = 1e-10);
        assert_relative_eq!(map[1][0].re, -k / k.sinh(), max_relative = 1e-10);
    }

    #[test]
    fn wronskians_hold_at_large_parameters() {
        let row = row_f1();
        // moderate regime: endpoint-value Wronskian is well conditioned
        let p = SpectralPair::new(c(9.0, 3.0), c(4.0, -2.0));
        let data = fss(&row, p).unwrap();
        assert!((data.wronskian_0() - c(1.0, 0.0)).norm() < 1e-11);
        assert!((data.wronskian_1() - c(1.0, 0.0)).norm() < 1e-11);
        // strongly growing regime where the scaling kicks in: the tracked
        // flow-determinant defect stays tiny even at e^{600} growth
        let p = SpectralPair::new(c(600.0 * 600.0, 11.0), c(300.0, -40.0));
        let data = fss(&row, p).unwrap();
        assert!(data.w0_defect < 1e-10, "w0 defect {}", data.w0_defect);
        assert!(data.w1_defect < 1e-10, "w1 defect {}", data.w1_defect);
        // endpoint magnitudes are ~ e^{600}: far beyond f64 but finite in logs
        assert!(data.s0_at_a.0.log_abs() > 500.0);
    }

    #[test]
    fn weyl_solutions_vanish_at_far_ends() {
        let row = row_f1();
        for (m2, n2) in [(1.3, 0.4), (-2.0, 0.7), (5.0, -1.0)] {
            let p = SpectralPair::real(m2, n2);
            let data = fss(&row, p).unwrap();
            let w = wt(&data);
            let m = w.m_fn().unwrap();
            let n = w.n_fn().unwrap();
            // Psi = c0 + M s0 vanishes at A
            let psi_a = data.c0_at_a.0.to_complex() + m * data.s0_at_a.0.to_complex();
            let scale = data.c0_at_a.0.abs().max(1.0);
            assert!(psi_a.norm() / scale < 1e-8, "Psi(A) = {psi_a} at ({m2},{n2})");
            // Phi = c1 - N s1 vanishes at 0
            let phi_0 = data.c1_at_0.0.to_complex() - n * data.s1_at_0.0.to_complex();
            let scale = data.c1_at_0.0.abs().max(1.0);
            assert!(phi_0.norm() / scale < 1e-8, "Phi(0) = {phi_0} at ({m2},{n2})");
        }
    }

    #[test]
    fn real_pairs_below_spectrum_give_real_data() {
        let row = row_f1();
        for (m2, n2) in [(0.3, 0.3), (1.0, -0.5), (2.0, 2.0)] {
            let w = wt(&fss(&row, SpectralPair::real(m2, n2)).unwrap());
            assert!(w.delta.to_complex().im.abs() < 1e-12);
            assert!(w.m_fn().unwrap().im.abs() < 1e-12);
            assert!(w.n_fn().unwrap().im.abs() < 1e-12);
        }
    }

    #[test]
    fn m_is_decreasing_in_k_on_flat_fixture() {
        // M(k) = -k coth k decreases in k >= 0
        let row = row_f1();
        let mut last = f64::INFINITY;
        for i in 0..50 {
            let k = 0.2 + 0.25 * i as f64;
            let p = SpectralPair::real(k * k / 2.0, k * k / 2.0);
            let m = wt(&fss(&row, p).unwrap()).m_fn().unwrap().re;
            assert!(m < last, "M not decreasing at k = {k}: {m} vs {last}");
            last = m;
        }
    }

    #[test]
    fn analyticity_proxy_in_mu() {
        // Cauchy-Riemann residual of Delta as a function of mu (not mu^2)
        let row = row_f1();
        let base = [
            c(1.3, 0.2),
            c(0.4, -0.9),
            c(2.0, 1.0),
        ];
        for mu in base {
            let nu = c(0.8, -0.3);
            let h = 1e-5;
            let delta_at = |mu: Complex64| -> Complex64 {
                let p = SpectralPair::new(mu * mu, nu * nu);
                wt(&fss(&row, p).unwrap()).delta.to_complex()
            };
            let d_re = (delta_at(mu + h) - delta_at(mu - h)) / (2.0 * h);
            let d_im = (delta_at(mu + c(0.0, h)) - delta_at(mu - c(0.0, h)))
                / Complex64::new(0.0, 2.0 * h);
            assert!(
                (d_re - d_im).norm() < 1e-6 * (1.0 + d_re.norm()),
                "CR residual {} at mu = {mu}",
                (d_re - d_im).norm()
            );
        }
    }
}
