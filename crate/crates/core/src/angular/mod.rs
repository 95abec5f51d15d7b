//! The commuting angular operators on the torus and their joint spectrum.
//!
//! A joint pair `(mu^2, nu^2)` belongs to the spectrum of `(H, L)` exactly
//! when both separated periodic problems
//!
//! ```text
//!   -v'' + [mu^2 s22(x2) + nu^2 s23(x2) - phi2] v = 0
//!   -w'' + [mu^2 s32(x3) + nu^2 s33(x3) - phi3] w = 0
//! ```
//!
//! admit 2*pi-periodic solutions, i.e. both Hill discriminants (monodromy
//! traces) equal 2. The shooting route drives Newton on the trace defects
//! and then sharpens converged roots on the monodromy entries wherever the
//! monodromy is close to the identity — at a closed gap the trace defect
//! vanishes quadratically and trace-only Newton stalls near 1e-6, while the
//! off-diagonal monodromy entries still vanish linearly.
//!
//! The independent discretized-operator route lives in [`oracle`].

pub mod cone;
pub mod oracle;

use rayon::prelude::*;
use rustfft::num_complex::Complex as FftComplex;
use rustfft::FftPlanner;

use crate::curve::{Curve, TWO_PI};
use crate::error::SpectrumError;
use crate::radial::{step_count, StepProfile};
use crate::stackel::ConformalMetric;

/// The angular data of a fixture: the 2x2 block of Stackel entries, the two
/// potentials, and an optional joint-spectrum shift gauge `(B1, B2)` that
/// replaces `(H, L)` by `(H + B1, L + B2)`.
#[derive(Clone)]
pub struct AngularOperators {
    pub s22: Curve,
    pub s23: Curve,
    pub s32: Curve,
    pub s33: Curve,
    pub phi2: Curve,
    pub phi3: Curve,
    pub shift: (f64, f64),
    max2: [f64; 3],
    max3: [f64; 3],
}

impl AngularOperators {
    pub fn new(
        s22: Curve,
        s23: Curve,
        s32: Curve,
        s33: Curve,
        phi2: Curve,
        phi3: Curve,
    ) -> Self {
        let scan = |f: &Curve| -> f64 {
            (0..=512)
                .map(|k| f.eval(TWO_PI * k as f64 / 512.0).abs())
                .fold(0.0f64, f64::max)
        };
        let max2 = [scan(&s22), scan(&s23), scan(&phi2)];
        let max3 = [scan(&s32), scan(&s33), scan(&phi3)];
        AngularOperators { s22, s23, s32, s33, phi2, phi3, shift: (0.0, 0.0), max2, max3 }
    }

    pub fn from_metric(m: &ConformalMetric) -> Self {
        Self::new(
            m.stackel.entry(1, 1).clone(),
            m.stackel.entry(1, 2).clone(),
            m.stackel.entry(2, 1).clone(),
            m.stackel.entry(2, 2).clone(),
            m.phi[1].clone(),
            m.phi[2].clone(),
        )
    }

    pub fn with_shift(mut self, b1: f64, b2: f64) -> Self {
        self.shift = (b1, b2);
        self
    }

    /// det T = s^{11}; the weight of the Hilbert-basis inner product.
    pub fn weight(&self, x2: f64, x3: f64) -> f64 {
        self.s22.eval(x2) * self.s33.eval(x3) - self.s23.eval(x2) * self.s32.eval(x3)
    }

    /// Coefficient of the v-equation at shifted spectral parameters.
    pub fn coeff_v(&self, mu2: f64, nu2: f64, x: f64) -> f64 {
        (mu2 - self.shift.0) * self.s22.eval(x) + (nu2 - self.shift.1) * self.s23.eval(x)
            - self.phi2.eval(x)
    }

    pub fn coeff_w(&self, mu2: f64, nu2: f64, x: f64) -> f64 {
        (mu2 - self.shift.0) * self.s32.eval(x) + (nu2 - self.shift.1) * self.s33.eval(x)
            - self.phi3.eval(x)
    }

    fn k_bound_v(&self, mu2: f64, nu2: f64) -> f64 {
        ((mu2 - self.shift.0).abs() * self.max2[0]
            + (nu2 - self.shift.1).abs() * self.max2[1]
            + self.max2[2])
            .sqrt()
    }

    fn k_bound_w(&self, mu2: f64, nu2: f64) -> f64 {
        ((mu2 - self.shift.0).abs() * self.max3[0]
            + (nu2 - self.shift.1).abs() * self.max3[1]
            + self.max3[2])
            .sqrt()
    }

    /// Cone slopes (c1, c2) = (max(-s32/s33), min(-s22/s23)).
    pub fn cone_bounds(&self) -> (f64, f64) {
        let mut c1 = f64::NEG_INFINITY;
        let mut c2 = f64::INFINITY;
        for k in 0..2048 {
            let t = TWO_PI * k as f64 / 2048.0;
            c1 = c1.max(-self.s32.eval(t) / self.s33.eval(t));
            c2 = c2.min(-self.s22.eval(t) / self.s23.eval(t));
        }
        (c1, c2)
    }
}

type Mat2R = [[f64; 2]; 2];

/// Monodromy matrix of `-v'' + W(x) v = 0` over one period, by RK4 transfer
/// matrices.
fn monodromy<W: Fn(f64) -> f64>(w: &W, k_bound: f64, profile: StepProfile) -> Mat2R {
    let n = step_count(TWO_PI, k_bound, profile).max(2000);
    let h = TWO_PI / n as f64;
    let mut m: Mat2R = [[1.0, 0.0], [0.0, 1.0]];
    let a = |x: f64| -> Mat2R { [[0.0, 1.0], [w(x), 0.0]] };
    for i in 0..n {
        let x = i as f64 * h;
        let a1 = a(x);
        let am = a(x + 0.5 * h);
        let a2 = a(x + h);
        let k1 = a1;
        let k2 = mul2(&am, &add_scaled2(&ID2, &k1, 0.5 * h));
        let k3 = mul2(&am, &add_scaled2(&ID2, &k2, 0.5 * h));
        let k4 = mul2(&a2, &add_scaled2(&ID2, &k3, h));
        let mut step = ID2;
        for r in 0..2 {
            for c in 0..2 {
                step[r][c] += (k1[r][c] + 2.0 * (k2[r][c] + k3[r][c]) + k4[r][c]) * (h / 6.0);
            }
        }
        m = mul2(&step, &m);
    }
    m
}

const ID2: Mat2R = [[1.0, 0.0], [0.0, 1.0]];

fn mul2(a: &Mat2R, b: &Mat2R) -> Mat2R {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

fn add_scaled2(a: &Mat2R, b: &Mat2R, f: f64) -> Mat2R {
    [
        [a[0][0] + f * b[0][0], a[0][1] + f * b[0][1]],
        [a[1][0] + f * b[1][0], a[1][1] + f * b[1][1]],
    ]
}

pub fn monodromy_v(ops: &AngularOperators, mu2: f64, nu2: f64, profile: StepProfile) -> Mat2R {
    let w = |x: f64| ops.coeff_v(mu2, nu2, x);
    monodromy(&w, ops.k_bound_v(mu2, nu2), profile)
}

pub fn monodromy_w(ops: &AngularOperators, mu2: f64, nu2: f64, profile: StepProfile) -> Mat2R {
    let w = |x: f64| ops.coeff_w(mu2, nu2, x);
    monodromy(&w, ops.k_bound_w(mu2, nu2), profile)
}

/// Hill discriminants (monodromy traces) of the two periodic factors. A
/// pair lies in the joint spectrum iff both equal 2.
pub fn hill_discriminants(ops: &AngularOperators, mu2: f64, nu2: f64) -> (f64, f64) {
    let mv = monodromy_v(ops, mu2, nu2, StepProfile::Fine);
    let mw = monodromy_w(ops, mu2, nu2, StepProfile::Fine);
    (mv[0][0] + mv[1][1], mw[0][0] + mw[1][1])
}

// ---------------------------------------------------------------------------
// Shooting search
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct SearchBox {
    pub mu2_max: f64,
    pub nu2_max: f64,
    pub mu2_min: f64,
    pub nu2_min: f64,
}

impl SearchBox {
    pub fn up_to(mu2_max: f64, nu2_max: f64) -> Self {
        SearchBox { mu2_max, nu2_max, mu2_min: -0.75, nu2_min: -0.75 }
    }

    fn contains(&self, mu2: f64, nu2: f64) -> bool {
        mu2 >= self.mu2_min && mu2 <= self.mu2_max && nu2 >= self.nu2_min && nu2 <= self.nu2_max
    }

    fn contains_inflated(&self, mu2: f64, nu2: f64, margin: f64) -> bool {
        mu2 >= self.mu2_min - margin
            && mu2 <= self.mu2_max + margin
            && nu2 >= self.nu2_min - margin
            && nu2 <= self.nu2_max + margin
    }
}

#[derive(Debug, Clone)]
pub struct ShootingConfig {
    /// lattice spacing of the Newton seeds in (mu, nu) space
    pub seed_spacing: f64,
    pub max_newton_iter: usize,
    pub newton_tol: f64,
    pub dedup_tol: f64,
    /// refine converged roots on monodromy entries with the fine integrator
    pub polish: bool,
    /// use the coarse integrator during the Newton sweep
    pub fast_search: bool,
    /// largest trace residual accepted as a root before polish; the coarse
    /// integrator cannot push |d - 2| much below ~1e-4 at large parameters
    pub accept_residual: f64,
    /// lay the seed lattice evenly in (mu^2, nu^2) instead of (mu, nu);
    /// matches the asymptotically uniform density of the joint spectrum in
    /// the squared variables and is the right choice for deep sweeps
    pub seed_in_squared_space: bool,
    /// samples per period stored for each eigenfunction
    pub sample_count: usize,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        ShootingConfig {
            seed_spacing: 0.25,
            max_newton_iter: 50,
            newton_tol: 1e-10,
            dedup_tol: 1e-6,
            polish: true,
            fast_search: false,
            accept_residual: 1e-6,
            seed_in_squared_space: false,
            sample_count: 512,
        }
    }
}

/// One joint eigenvalue with its separated eigenfunction bases. For a
/// degenerate periodic factor the basis holds the cosine-type column
/// (`v(0) = 1, v'(0) = 0`) first and the sine-type column second; that
/// convention fixes the otherwise free basis inside multiplicity-4 spaces.
#[derive(Debug, Clone)]
pub struct JointEigenpair {
    pub mu2: f64,
    pub nu2: f64,
    pub multiplicity: usize,
    /// initial conditions of each periodic v-solution
    pub v_ics: Vec<[f64; 2]>,
    pub w_ics: Vec<[f64; 2]>,
    /// samples on the uniform periodic grid (no duplicated endpoint)
    pub v_basis: Vec<Vec<f64>>,
    pub w_basis: Vec<Vec<f64>>,
    pub residual_v: f64,
    pub residual_w: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ShootingDiagnostics {
    pub seeds: usize,
    pub converged: usize,
    pub stalled: usize,
}

/// Two-parameter shooting search. Newton iterates on the trace defects
/// `(d2 - 2, d3 - 2)` with a finite-difference Jacobian from lattice seeds
/// laid inside the (c1, c2) cone (inflated) plus the cone boundary rays,
/// then polishes each root on the monodromy entries.
pub fn joint_spectrum_shooting(
    ops: &AngularOperators,
    search_box: SearchBox,
    target_count: usize,
    config: &ShootingConfig,
) -> Result<(Vec<JointEigenpair>, ShootingDiagnostics), SpectrumError> {
    let (c1, c2) = ops.cone_bounds();
    let seeds = if config.seed_in_squared_space {
        seed_lattice_squared(&search_box, c1, c2, ops.shift)
    } else {
        seed_lattice(&search_box, c1, c2, config.seed_spacing, ops.shift)
    };
    let mut diag = ShootingDiagnostics { seeds: seeds.len(), ..Default::default() };

    let search_profile = if config.fast_search {
        StepProfile::Coarse
    } else {
        StepProfile::Fine
    };

    let roots: Vec<(f64, f64, f64)> = seeds
        .par_iter()
        .filter_map(|&seed| newton_from_seed(ops, seed, &search_box, config, search_profile))
        .collect();

    diag.converged = roots.len();
    diag.stalled = diag.seeds - roots.len();

    // sort and deduplicate
    let mut roots = roots;
    roots.sort_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).unwrap());
    let mut unique: Vec<(f64, f64, f64)> = Vec::new();
    for r in roots {
        let tol = config.dedup_tol;
        if let Some(last) = unique
            .iter_mut()
            .find(|u| (u.0 - r.0).abs() < tol && (u.1 - r.1).abs() < tol)
        {
            if r.2 < last.2 {
                *last = r;
            }
        } else {
            unique.push(r);
        }
    }
    unique.sort_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).unwrap());

    let mut pairs: Vec<JointEigenpair> = Vec::new();
    for (mu2, nu2, _res) in unique {
        let (mu2, nu2) = if config.polish {
            polish_root(ops, mu2, nu2)
        } else {
            (mu2, nu2)
        };
        if !search_box.contains(mu2, nu2) {
            continue;
        }
        let kernel_tol = if config.polish {
            1e-6
        } else {
            (10.0 * config.accept_residual.sqrt()).clamp(1e-6, 0.2)
        };
        if let Some(pair) = build_eigenpair(ops, mu2, nu2, config.sample_count, kernel_tol) {
            // polishing can move roots across the sort order or merge two
            // tentative ones; dedup once more and re-sort at the end
            let tol = config.dedup_tol;
            let dup = pairs.iter().any(|p: &JointEigenpair| {
                (p.mu2 - pair.mu2).abs() < tol && (p.nu2 - pair.nu2).abs() < tol
            });
            if !dup {
                pairs.push(pair);
            }
        }
    }
    pairs.sort_by(|a, b| (a.mu2, a.nu2).partial_cmp(&(b.mu2, b.nu2)).unwrap());
    pairs.truncate(target_count);
    Ok((pairs, diag))
}

fn seed_lattice(
    bx: &SearchBox,
    c1: f64,
    c2: f64,
    spacing: f64,
    shift: (f64, f64),
) -> Vec<(f64, f64)> {
    let mut seeds = Vec::new();
    // the spectrum of the shifted pair lives near shift + unshifted spectrum
    let mu_max = (bx.mu2_max - shift.0).max(1.0).sqrt();
    let t1 = c1.max(0.0).sqrt();
    let t2 = c2.max(0.0).sqrt();
    let (lo, hi) = (t1 - 0.08, t2 + 0.08);
    seeds.push((shift.0, shift.1)); // origin
    let mut mu = spacing;
    while mu <= mu_max + spacing {
        // cone interior
        let n_theta = (((hi - lo) * mu / spacing).ceil() as usize).max(2);
        for i in 0..=n_theta {
            let theta = lo + (hi - lo) * i as f64 / n_theta as f64;
            let nu = theta * mu;
            seeds.push((shift.0 + mu * mu, shift.1 + nu * nu));
        }
        // boundary rays carry the axis families of product spectra
        for theta in [t1, t2] {
            let nu = theta * mu;
            seeds.push((shift.0 + mu * mu, shift.1 + nu * nu));
        }
        mu += spacing;
    }
    seeds.retain(|&(m2, n2)| bx.contains_inflated(m2, n2, 1.0));
    seeds
}

/// Evenly spaced seeds in the squared variables: ~30 levels of mu^2 with
/// ~14 nu^2 values across the (slightly inflated) cone each, plus the
/// boundary rays.
fn seed_lattice_squared(
    bx: &SearchBox,
    c1: f64,
    c2: f64,
    shift: (f64, f64),
) -> Vec<(f64, f64)> {
    let mut seeds = Vec::new();
    let m_levels = 36usize;
    let n_per = 22usize;
    let lo = (c1 - 0.05).max(0.0);
    let hi = c2 + 0.05;
    for a in 1..=m_levels {
        let mu2 = (bx.mu2_max - shift.0) * a as f64 / m_levels as f64;
        for b in 0..=n_per {
            let ratio = lo + (hi - lo) * b as f64 / n_per as f64;
            seeds.push((shift.0 + mu2, shift.1 + ratio * mu2));
        }
        for ratio in [c1, c2] {
            seeds.push((shift.0 + mu2, shift.1 + ratio * mu2));
        }
    }
    seeds.retain(|&(m2, n2)| bx.contains_inflated(m2, n2, 1.0));
    seeds
}

fn trace_defects(
    ops: &AngularOperators,
    mu2: f64,
    nu2: f64,
    profile: StepProfile,
) -> (f64, f64) {
    let mv = monodromy_v(ops, mu2, nu2, profile);
    let mw = monodromy_w(ops, mu2, nu2, profile);
    (mv[0][0] + mv[1][1] - 2.0, mw[0][0] + mw[1][1] - 2.0)
}

fn newton_from_seed(
    ops: &AngularOperators,
    seed: (f64, f64),
    bx: &SearchBox,
    config: &ShootingConfig,
    profile: StepProfile,
) -> Option<(f64, f64, f64)> {
    let mut p = [seed.0, seed.1];
    let mut best: Option<(f64, f64, f64)> = None;
    let mut stall = 0usize;
    for _ in 0..config.max_newton_iter {
        let (f1, f2) = trace_defects(ops, p[0], p[1], profile);
        let res = f1.abs().max(f2.abs());
        if !res.is_finite() {
            return None;
        }
        match best {
            Some(b) if res < 0.99 * b.2 => {
                best = Some((p[0], p[1], res));
                stall = 0;
            }
            Some(b) => {
                if res < b.2 {
                    best = Some((p[0], p[1], res));
                }
                stall += 1;
                // no measurable descent for several steps: either a plateau
                // at the integrator noise floor or a wandering seed
                if stall >= 6 {
                    break;
                }
            }
            None => best = Some((p[0], p[1], res)),
        }
        if res < config.newton_tol {
            break;
        }
        // forward-difference Jacobian
        let d0 = 1e-6 * (1.0 + p[0].abs());
        let d1 = 1e-6 * (1.0 + p[1].abs());
        let (g1, g2) = trace_defects(ops, p[0] + d0, p[1], profile);
        let (h1, h2) = trace_defects(ops, p[0], p[1] + d1, profile);
        let j = [
            [(g1 - f1) / d0, (h1 - f1) / d1],
            [(g2 - f2) / d0, (h2 - f2) / d1],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let scale = j.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
        if det.abs() < 1e-14 * scale * scale {
            break;
        }
        let mut step = [
            -(j[1][1] * f1 - j[0][1] * f2) / det,
            -(-j[1][0] * f1 + j[0][0] * f2) / det,
        ];
        // clamp proportionally to the parameter scale: distant seeds from a
        // coarse lattice need the approach phase to move whole cells
        let clamp = 1.0f64.max(0.04 * (p[0].abs() + p[1].abs()));
        let norm = step[0].abs().max(step[1].abs());
        if norm > clamp {
            step[0] *= clamp / norm;
            step[1] *= clamp / norm;
        }
        p[0] += step[0];
        p[1] += step[1];
        if !bx.contains_inflated(p[0], p[1], 2.0) {
            return None;
        }
        if norm < 1e-12 * (1.0 + p[0].abs().max(p[1].abs())) {
            break;
        }
    }
    // accept only roots that actually hit the spectrum to modest accuracy;
    // the polish stage tightens them further
    best.filter(|b| b.2 < config.accept_residual)
}

/// Gauss-Newton refinement on monodromy entries. Near a closed gap the
/// trace defect is quadratic in the parameters and plain Newton bottoms out
/// around sqrt(integrator noise); the identity-defect entries still vanish
/// linearly there and restore full accuracy.
fn polish_root(ops: &AngularOperators, mu2: f64, nu2: f64) -> (f64, f64) {
    let residuals = |p: [f64; 2]| -> Vec<f64> {
        let mv = monodromy_v(ops, p[0], p[1], StepProfile::Fine);
        let mw = monodromy_w(ops, p[0], p[1], StepProfile::Fine);
        let mut r = Vec::with_capacity(8);
        for (m, _name) in [(mv, "v"), (mw, "w")] {
            let defect = [
                [m[0][0] - 1.0, m[0][1]],
                [m[1][0], m[1][1] - 1.0],
            ];
            let frob = defect.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
            if frob < 1e-2 {
                r.extend(defect.iter().flatten().copied());
            } else {
                r.push(m[0][0] + m[1][1] - 2.0);
            }
        }
        r
    };
    let mut p = [mu2, nu2];
    for _ in 0..12 {
        let r0 = residuals(p);
        let d0 = 1e-7 * (1.0 + p[0].abs());
        let d1 = 1e-7 * (1.0 + p[1].abs());
        let rp0 = residuals([p[0] + d0, p[1]]);
        let rm0 = residuals([p[0] - d0, p[1]]);
        let rp1 = residuals([p[0], p[1] + d1]);
        let rm1 = residuals([p[0], p[1] - d1]);
        if rp0.len() != r0.len()
            || rm0.len() != r0.len()
            || rp1.len() != r0.len()
            || rm1.len() != r0.len()
        {
            break; // classification flipped across the FD stencil
        }
        // normal equations of the 2-column least squares
        let mut jtj = [[0.0f64; 2]; 2];
        let mut jtr = [0.0f64; 2];
        for i in 0..r0.len() {
            let ji0 = (rp0[i] - rm0[i]) / (2.0 * d0);
            let ji1 = (rp1[i] - rm1[i]) / (2.0 * d1);
            jtj[0][0] += ji0 * ji0;
            jtj[0][1] += ji0 * ji1;
            jtj[1][1] += ji1 * ji1;
            jtr[0] += ji0 * r0[i];
            jtr[1] += ji1 * r0[i];
        }
        jtj[1][0] = jtj[0][1];
        let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
        if det.abs() < 1e-30 {
            break;
        }
        let step = [
            -(jtj[1][1] * jtr[0] - jtj[0][1] * jtr[1]) / det,
            -(-jtj[1][0] * jtr[0] + jtj[0][0] * jtr[1]) / det,
        ];
        p[0] += step[0];
        p[1] += step[1];
        if step[0].abs().max(step[1].abs()) < 1e-13 * (1.0 + p[0].abs().max(p[1].abs())) {
            break;
        }
    }
    (p[0], p[1])
}

/// Null-space analysis of the periodic defect `M - I` and eigenfunction
/// reconstruction from its kernel. `rel_tol` scales with the accuracy of
/// the root: an unpolished root with trace residual r sits sqrt(r) away
/// from the eigenvalue and its defect entries are of that size.
fn periodic_kernel(m: &Mat2R, rel_tol: f64) -> Vec<[f64; 2]> {
    let defect = [
        [m[0][0] - 1.0, m[0][1]],
        [m[1][0], m[1][1] - 1.0],
    ];
    let scale = m.iter().flatten().map(|v| v.abs()).fold(1.0, f64::max);
    // singular values of the 2x2 defect
    let (s1, s2) = svd2(&defect);
    let tol = rel_tol * scale;
    if s1 < tol && s2 < tol {
        return vec![[1.0, 0.0], [0.0, 1.0]];
    }
    if s2 < tol {
        // right singular vector for the smallest singular value
        let v = small_right_singular(&defect);
        let v = if v[0] < 0.0 || (v[0] == 0.0 && v[1] < 0.0) {
            [-v[0], -v[1]]
        } else {
            v
        };
        return vec![v];
    }
    Vec::new()
}

fn svd2(m: &Mat2R) -> (f64, f64) {
    // singular values from the 2x2 Gram matrix
    let a = m[0][0] * m[0][0] + m[1][0] * m[1][0];
    let b = m[0][0] * m[0][1] + m[1][0] * m[1][1];
    let d = m[0][1] * m[0][1] + m[1][1] * m[1][1];
    let tr = a + d;
    let disc = ((a - d) * (a - d) + 4.0 * b * b).sqrt();
    let l1 = 0.5 * (tr + disc);
    let l2 = 0.5 * (tr - disc).max(0.0);
    (l1.sqrt(), l2.sqrt())
}

fn small_right_singular(m: &Mat2R) -> [f64; 2] {
    let a = m[0][0] * m[0][0] + m[1][0] * m[1][0];
    let b = m[0][0] * m[0][1] + m[1][0] * m[1][1];
    let d = m[0][1] * m[0][1] + m[1][1] * m[1][1];
    let tr = a + d;
    let disc = ((a - d) * (a - d) + 4.0 * b * b).sqrt();
    let l2 = 0.5 * (tr - disc).max(0.0);
    // (G - l2 I) v = 0
    let cand = [[-b, a - l2], [d - l2, -b]];
    let pick = if (cand[0][0].abs() + cand[0][1].abs()) > (cand[1][0].abs() + cand[1][1].abs()) {
        cand[0]
    } else {
        cand[1]
    };
    let n = (pick[0] * pick[0] + pick[1] * pick[1]).sqrt();
    if n == 0.0 {
        [1.0, 0.0]
    } else {
        [pick[0] / n, pick[1] / n]
    }
}

/// Integrate `-v'' + W v = 0` over one period sampling `n_out` points.
fn sample_periodic<W: Fn(f64) -> f64>(
    w: &W,
    ic: [f64; 2],
    k_bound: f64,
    n_out: usize,
) -> Vec<f64> {
    let n_total = step_count(TWO_PI, k_bound, StepProfile::Fine).max(2000);
    let per = n_total.div_ceil(n_out);
    let h = TWO_PI / (n_out * per) as f64;
    let mut y = ic;
    let mut out = Vec::with_capacity(n_out);
    out.push(y[0]);
    for seg in 0..n_out {
        for i in 0..per {
            let x = (seg * per + i) as f64 * h;
            let f = |x: f64, y: &[f64; 2]| [y[1], w(x) * y[0]];
            let k1 = f(x, &y);
            let y2 = [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]];
            let k2 = f(x + 0.5 * h, &y2);
            let y3 = [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]];
            let k3 = f(x + 0.5 * h, &y3);
            let y4 = [y[0] + h * k3[0], y[1] + h * k3[1]];
            let k4 = f(x + h, &y4);
            y[0] += h / 6.0 * (k1[0] + 2.0 * (k2[0] + k3[0]) + k4[0]);
            y[1] += h / 6.0 * (k1[1] + 2.0 * (k2[1] + k3[1]) + k4[1]);
        }
        if seg + 1 < n_out {
            out.push(y[0]);
        }
    }
    out
}

/// Spectral (FFT) residual of `-v'' + W v = 0` for periodic samples.
pub fn ode_residual_fft(samples: &[f64], coeff: &[f64]) -> f64 {
    let n = samples.len();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let mut buf: Vec<FftComplex<f64>> =
        samples.iter().map(|&v| FftComplex::new(v, 0.0)).collect();
    fft.process(&mut buf);
    for (k, z) in buf.iter_mut().enumerate() {
        let freq = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        *z *= freq * freq / n as f64; // -v'' has symbol +k^2; 1/n normalizes
    }
    ifft.process(&mut buf);
    let mut num = 0.0;
    let mut den = 0.0;
    let coeff_max = coeff.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    for i in 0..n {
        let r = buf[i].re + coeff[i] * samples[i];
        num += r * r;
        den += samples[i] * samples[i];
    }
    (num / den.max(1e-300)).sqrt() / (1.0 + coeff_max)
}

fn build_eigenpair(
    ops: &AngularOperators,
    mu2: f64,
    nu2: f64,
    sample_count: usize,
    kernel_tol: f64,
) -> Option<JointEigenpair> {
    let mv = monodromy_v(ops, mu2, nu2, StepProfile::Fine);
    let mw = monodromy_w(ops, mu2, nu2, StepProfile::Fine);
    let v_ics = periodic_kernel(&mv, kernel_tol);
    let w_ics = periodic_kernel(&mw, kernel_tol);
    if v_ics.is_empty() || w_ics.is_empty() {
        return None;
    }
    let wv = |x: f64| ops.coeff_v(mu2, nu2, x);
    let ww = |x: f64| ops.coeff_w(mu2, nu2, x);
    let kv = ops.k_bound_v(mu2, nu2);
    let kw = ops.k_bound_w(mu2, nu2);
    let v_basis: Vec<Vec<f64>> =
        v_ics.iter().map(|&ic| sample_periodic(&wv, ic, kv, sample_count)).collect();
    let w_basis: Vec<Vec<f64>> =
        w_ics.iter().map(|&ic| sample_periodic(&ww, ic, kw, sample_count)).collect();
    let coeff_v: Vec<f64> = (0..sample_count)
        .map(|i| wv(TWO_PI * i as f64 / sample_count as f64))
        .collect();
    let coeff_w: Vec<f64> = (0..sample_count)
        .map(|i| ww(TWO_PI * i as f64 / sample_count as f64))
        .collect();
    let residual_v = v_basis
        .iter()
        .map(|v| ode_residual_fft(v, &coeff_v))
        .fold(0.0, f64::max);
    let residual_w = w_basis
        .iter()
        .map(|w| ode_residual_fft(w, &coeff_w))
        .fold(0.0, f64::max);
    Some(JointEigenpair {
        mu2,
        nu2,
        multiplicity: v_ics.len() * w_ics.len(),
        v_ics,
        w_ics,
        v_basis,
        w_basis,
        residual_v,
        residual_w,
    })
}

/// Resample one separated eigenfunction on `n_out` points; used when the
/// DN boundary grid differs from the stored sampling.
pub fn resample_v(
    ops: &AngularOperators,
    pair: &JointEigenpair,
    which: usize,
    n_out: usize,
) -> Vec<f64> {
    let w = |x: f64| ops.coeff_v(pair.mu2, pair.nu2, x);
    sample_periodic(&w, pair.v_ics[which], ops.k_bound_v(pair.mu2, pair.nu2), n_out)
}

pub fn resample_w(
    ops: &AngularOperators,
    pair: &JointEigenpair,
    which: usize,
    n_out: usize,
) -> Vec<f64> {
    let w = |x: f64| ops.coeff_w(pair.mu2, pair.nu2, x);
    sample_periodic(&w, pair.w_ics[which], ops.k_bound_w(pair.mu2, pair.nu2), n_out)
}

/// Flattens pairs into the Hilbert-basis enumeration (each basis element
/// separately, sorted by (mu2, nu2) then by the fixed basis convention).
pub fn hilbert_basis_len(pairs: &[JointEigenpair]) -> usize {
    pairs.iter().map(|p| p.multiplicity).sum()
}
