//! Stackel matrices, conformally Stackel metrics and their gauge freedom.
//!
//! A Stackel matrix is a non-singular 3x3 matrix whose i-th row depends only
//! on the coordinate `x^i`; its first-column cofactors produce the diagonal
//! metric `h_i^2 = det S / s^{i1}` on the toric cylinder `[0,A] x T^2`. The
//! conformal factor `c` multiplies this to `H_i^2 = c^4 h_i^2`. This module
//! owns the pointwise geometry (cofactors, contracted Christoffel symbols,
//! the R factor) and the three transformations that leave the metric alone:
//! column gauges, first-column shifts and coordinate reparametrizations.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use crate::curve::{
    constant, parse_curve, periodicity_defect, Curve, MonotoneMap, ReparamFn, UnivariateFn,
    TWO_PI,
};
use crate::error::GeometryError;

/// Linear combination of curves; used by the gauge transformations so that
/// transformed entries keep exact derivatives.
pub struct ComboFn {
    terms: Vec<(f64, Curve)>,
}

impl ComboFn {
    pub fn new(terms: Vec<(f64, Curve)>) -> Arc<Self> {
        Arc::new(ComboFn { terms })
    }
}

impl UnivariateFn for ComboFn {
    fn eval(&self, x: f64) -> f64 {
        self.terms.iter().map(|(c, f)| c * f.eval(x)).sum()
    }
    fn d1(&self, x: f64) -> f64 {
        self.terms.iter().map(|(c, f)| c * f.d1(x)).sum()
    }
    fn d2(&self, x: f64) -> f64 {
        self.terms.iter().map(|(c, f)| c * f.d2(x)).sum()
    }
}

/// The Liouville correction `phi/f - f''/(4 f^2) + 5 f'^2/(16 f^3)` expressed
/// in the new variable `y = int sqrt(f)`. This is the transformed potential
/// of a reparametrization, with the log-derivative terms written out in the
/// original coordinate.
pub struct TransformedPotentialFn {
    phi: Curve,
    density: Curve,
    map: Arc<MonotoneMap>,
}

impl TransformedPotentialFn {
    pub fn new(phi: Curve, density: Curve, map: Arc<MonotoneMap>) -> Arc<Self> {
        Arc::new(TransformedPotentialFn { phi, density, map })
    }

    /// Value in the original coordinate.
    pub fn eval_x(&self, x: f64) -> f64 {
        let f = self.density.eval(x);
        let fp = self.density.d1(x);
        let fpp = self.density.d2(x);
        self.phi.eval(x) / f - 0.25 * fpp / (f * f) + 5.0 / 16.0 * fp * fp / (f * f * f)
    }
}

impl UnivariateFn for TransformedPotentialFn {
    fn eval(&self, y: f64) -> f64 {
        self.eval_x(self.map.invert(y))
    }
    fn d1(&self, y: f64) -> f64 {
        // numeric in y; only used by validation code paths
        let h = 1e-6 * (1.0 + y.abs());
        (self.eval(y + h) - self.eval(y - h)) / (2.0 * h)
    }
    fn d2(&self, y: f64) -> f64 {
        let h = 1e-5 * (1.0 + y.abs());
        (self.eval(y + h) - 2.0 * self.eval(y) + self.eval(y - h)) / (h * h)
    }
}

#[derive(Clone)]
pub struct StackelMatrix {
    entries: [[Curve; 3]; 3],
    /// length of the radial interval [0, A]
    pub a_length: f64,
}

/// Angular periods are pinned to 2*pi on both torus directions.
pub const ANGULAR_PERIODS: [f64; 2] = [TWO_PI, TWO_PI];

impl StackelMatrix {
    pub fn new(entries: [[Curve; 3]; 3], a_length: f64) -> Self {
        assert!(a_length > 0.0, "radial domain length must be positive");
        StackelMatrix { entries, a_length }
    }

    pub fn entry(&self, i: usize, j: usize) -> &Curve {
        &self.entries[i][j]
    }

    pub fn eval_entry(&self, i: usize, j: usize, xi: f64) -> f64 {
        self.entries[i][j].eval(xi)
    }

    /// Row values at the row's own coordinate.
    pub fn row(&self, i: usize, xi: f64) -> [f64; 3] {
        [
            self.entries[i][0].eval(xi),
            self.entries[i][1].eval(xi),
            self.entries[i][2].eval(xi),
        ]
    }

    fn row_d1(&self, i: usize, xi: f64) -> [f64; 3] {
        [
            self.entries[i][0].d1(xi),
            self.entries[i][1].d1(xi),
            self.entries[i][2].d1(xi),
        ]
    }

    /// First-column cofactors (s^{11}, s^{21}, s^{31}) at a point.
    pub fn cofactors_col1(&self, x: [f64; 3]) -> [f64; 3] {
        let r1 = self.row(0, x[0]);
        let r2 = self.row(1, x[1]);
        let r3 = self.row(2, x[2]);
        [
            r2[1] * r3[2] - r2[2] * r3[1],
            -(r1[1] * r3[2] - r1[2] * r3[1]),
            r1[1] * r2[2] - r1[2] * r2[1],
        ]
    }

    pub fn det(&self, x: [f64; 3]) -> f64 {
        let c = self.cofactors_col1(x);
        self.eval_entry(0, 0, x[0]) * c[0]
            + self.eval_entry(1, 0, x[1]) * c[1]
            + self.eval_entry(2, 0, x[2]) * c[2]
    }

    /// d(det S)/dx^i; only row i varies with x^i.
    fn det_partial(&self, i: usize, x: [f64; 3]) -> f64 {
        let dp = self.row_d1(i, x[i]);
        let (j, k) = match i {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let rj = self.row(j, x[j]);
        let rk = self.row(k, x[k]);
        // cofactors of row i entries; sign pattern from the row position
        let minor = |c1: usize, c2: usize| rj[c1] * rk[c2] - rj[c2] * rk[c1];
        let sign = if i == 1 { -1.0 } else { 1.0 };
        sign * (dp[0] * minor(1, 2) - dp[1] * minor(0, 2) + dp[2] * minor(0, 1))
    }

    /// d(s^{j1})/dx^i for i != j (the cofactor excludes row j).
    fn cof_partial(&self, j: usize, i: usize, x: [f64; 3]) -> f64 {
        debug_assert_ne!(i, j);
        let k = 3 - i - j; // the remaining row index
        let di = self.row_d1(i, x[i]);
        let rk = self.row(k, x[k]);
        // s^{j1} = sign_j * (row_a[1] row_b[2] - row_a[2] row_b[1]) with
        // (a, b) the rows != j in increasing order.
        let sign = if j == 1 { -1.0 } else { 1.0 };
        if i < k {
            sign * (di[1] * rk[2] - di[2] * rk[1])
        } else {
            sign * (rk[1] * di[2] - rk[2] * di[1])
        }
    }

    fn row_d2(&self, i: usize, xi: f64) -> [f64; 3] {
        [
            self.entries[i][0].d2(xi),
            self.entries[i][1].d2(xi),
            self.entries[i][2].d2(xi),
        ]
    }

    /// d^2(det S)/d(x^i)^2.
    fn det_partial2(&self, i: usize, x: [f64; 3]) -> f64 {
        let dp = self.row_d2(i, x[i]);
        let (j, k) = match i {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let rj = self.row(j, x[j]);
        let rk = self.row(k, x[k]);
        let minor = |c1: usize, c2: usize| rj[c1] * rk[c2] - rj[c2] * rk[c1];
        let sign = if i == 1 { -1.0 } else { 1.0 };
        sign * (dp[0] * minor(1, 2) - dp[1] * minor(0, 2) + dp[2] * minor(0, 1))
    }

    /// d^2(s^{j1})/d(x^i)^2 for i != j.
    fn cof_partial2(&self, j: usize, i: usize, x: [f64; 3]) -> f64 {
        debug_assert_ne!(i, j);
        let k = 3 - i - j;
        let di = self.row_d2(i, x[i]);
        let rk = self.row(k, x[k]);
        let sign = if j == 1 { -1.0 } else { 1.0 };
        if i < k {
            sign * (di[1] * rk[2] - di[2] * rk[1])
        } else {
            sign * (rk[1] * di[2] - rk[2] * di[1])
        }
    }

    /// Contracted Christoffel symbols of the Stackel metric,
    /// `gamma_i = -d_i log(h1 h2 h3 / h_i^2)`.
    pub fn gamma(&self, x: [f64; 3]) -> [f64; 3] {
        let det = self.det(x);
        let cof = self.cofactors_col1(x);
        let mut g = [0.0; 3];
        for i in 0..3 {
            let ddet = self.det_partial(i, x);
            let mut dlog_cof = 0.0;
            for j in 0..3 {
                if j != i {
                    dlog_cof += self.cof_partial(j, i, x) / cof[j];
                }
            }
            g[i] = -0.5 * ddet / det + 0.5 * dlog_cof;
        }
        g
    }

    /// d_i gamma_i (no sum), by the quotient rule on the cofactor algebra.
    pub fn gamma_partial(&self, x: [f64; 3]) -> [f64; 3] {
        let det = self.det(x);
        let cof = self.cofactors_col1(x);
        let mut out = [0.0; 3];
        for i in 0..3 {
            let d1 = self.det_partial(i, x);
            let d2 = self.det_partial2(i, x);
            let mut acc = -0.5 * (d2 / det - (d1 / det) * (d1 / det));
            for j in 0..3 {
                if j != i {
                    let c1 = self.cof_partial(j, i, x);
                    let c2 = self.cof_partial2(j, i, x);
                    acc += 0.5 * (c2 / cof[j] - (c1 / cof[j]) * (c1 / cof[j]));
                }
            }
            out[i] = acc;
        }
        out
    }

    /// The 2x2 angular block T = [[s22, s23], [s32, s33]].
    pub fn t_block(&self, x2: f64, x3: f64) -> [[f64; 2]; 2] {
        [
            [self.eval_entry(1, 1, x2), self.eval_entry(1, 2, x2)],
            [self.eval_entry(2, 1, x3), self.eval_entry(2, 2, x3)],
        ]
    }

    /// Cone slopes from the normalized sign conditions:
    /// c1 = max(-s32/s33), c2 = min(-s22/s23), scanned on a sample grid.
    pub fn cone_bounds(&self, samples: usize) -> (f64, f64) {
        let mut c1 = f64::NEG_INFINITY;
        let mut c2 = f64::INFINITY;
        for k in 0..samples {
            let t = TWO_PI * k as f64 / samples as f64;
            let r3 = self.row(2, t);
            let r2 = self.row(1, t);
            c1 = c1.max(-r3[1] / r3[2]);
            c2 = c2.min(-r2[1] / r2[2]);
        }
        (c1, c2)
    }
}

/// Conformal factor: constant, or a product `c1(x^1) c2(x^2) c3(x^3)` so
/// that the log-derivatives stay exactly computable.
#[derive(Clone)]
pub enum ConformalFactor {
    Const(f64),
    Product([Curve; 3]),
}

impl ConformalFactor {
    pub fn one() -> Self {
        ConformalFactor::Const(1.0)
    }

    pub fn value(&self, x: [f64; 3]) -> f64 {
        match self {
            ConformalFactor::Const(v) => *v,
            ConformalFactor::Product(fs) => {
                fs[0].eval(x[0]) * fs[1].eval(x[1]) * fs[2].eval(x[2])
            }
        }
    }

    pub fn dlog(&self, i: usize, x: [f64; 3]) -> f64 {
        match self {
            ConformalFactor::Const(_) => 0.0,
            ConformalFactor::Product(fs) => fs[i].d1(x[i]) / fs[i].eval(x[i]),
        }
    }
}

/// A Stackel matrix together with the separation potentials and the
/// conformal factor: everything the metric needs.
#[derive(Clone)]
pub struct ConformalMetric {
    pub stackel: StackelMatrix,
    pub phi: [Curve; 3],
    pub c: ConformalFactor,
}

#[derive(Debug, Clone)]
pub struct MetricEval {
    pub point: [f64; 3],
    pub h_sq: [f64; 3],
    pub h_cap_sq: [f64; 3],
    pub cofactors: [f64; 3],
    pub det_s: f64,
    pub gamma: [f64; 3],
    pub gamma_cap: [f64; 3],
    pub r_factor: f64,
}

pub fn metric_eval(metric: &ConformalMetric, x: [f64; 3]) -> Result<MetricEval, GeometryError> {
    let s = &metric.stackel;
    let det_s = s.det(x);
    let cof = s.cofactors_col1(x);
    let mut h_sq = [0.0; 3];
    for i in 0..3 {
        h_sq[i] = det_s / cof[i];
        if !(h_sq[i] > 0.0) {
            return Err(GeometryError::NonPositiveCoefficient { axis: i + 1, value: h_sq[i] });
        }
    }
    let c = metric.c.value(x);
    let c4 = c * c * c * c;
    let h_cap_sq = [c4 * h_sq[0], c4 * h_sq[1], c4 * h_sq[2]];
    let gamma = s.gamma(x);
    let mut gamma_cap = [0.0; 3];
    for i in 0..3 {
        gamma_cap[i] = gamma[i] - 2.0 * metric.c.dlog(i, x);
    }
    let r_factor = (cof[0] * cof[1] * cof[2] / (c4 * det_s)).powf(0.25);
    Ok(MetricEval { point: x, h_sq, h_cap_sq, cofactors: cof, det_s, gamma, gamma_cap, r_factor })
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ValidationRow {
    pub name: String,
    pub pass: bool,
    /// worst-case margin; positive means satisfied with room
    pub margin: f64,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub rows: Vec<ValidationRow>,
    pub c1: f64,
    pub c2: f64,
}

impl ValidationReport {
    pub fn valid(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rows {
            writeln!(
                f,
                "{:5} {:32} margin {:+.6e}",
                if r.pass { "PASS" } else { "FAIL" },
                r.name,
                r.margin
            )?;
        }
        write!(f, "cone slopes: c1 = {:.6}, c2 = {:.6}", self.c1, self.c2)
    }
}

/// Checks the normalized-form sign conditions, non-degeneracy and the
/// smoothness/periodicity requirements on a sample grid.
pub fn validate_stackel(
    s: &StackelMatrix,
    samples: usize,
) -> Result<ValidationReport, GeometryError> {
    let samples = samples.max(8);
    let mut rows = Vec::new();

    // smoothness probe and periodicity of angular rows
    for i in 0..3 {
        let domain_len = if i == 0 { s.a_length } else { TWO_PI };
        for j in 0..3 {
            let f = s.entry(i, j);
            for k in 0..=samples {
                let x = domain_len * k as f64 / samples as f64;
                let vals = [f.eval(x), f.d1(x), f.d2(x)];
                if vals.iter().any(|v| !v.is_finite()) {
                    return Err(GeometryError::NonSmoothEntry {
                        row: i + 1,
                        col: j + 1,
                        x,
                        what: format!("non-finite value/derivative {vals:?}"),
                    });
                }
            }
            if i > 0 {
                let defect = periodicity_defect(f);
                rows.push(ValidationRow {
                    name: format!("periodicity s{}{}", i + 1, j + 1),
                    pass: defect < 1e-9,
                    margin: 1e-9 - defect,
                });
            }
        }
    }

    // sign conditions of the normalized form
    let sign_checks: [(&str, usize, usize, f64); 6] = [
        ("s12 > 0", 0, 1, 1.0),
        ("s13 > 0", 0, 2, 1.0),
        ("s22 < 0", 1, 1, -1.0),
        ("s23 > 0", 1, 2, 1.0),
        ("s32 > 0", 2, 1, 1.0),
        ("s33 < 0", 2, 2, -1.0),
    ];
    for (name, i, j, sign) in sign_checks {
        let domain_len = if i == 0 { s.a_length } else { TWO_PI };
        let mut worst = f64::INFINITY;
        for k in 0..=samples {
            let x = domain_len * k as f64 / samples as f64;
            worst = worst.min(sign * s.eval_entry(i, j, x));
        }
        rows.push(ValidationRow { name: name.into(), pass: worst > 0.0, margin: worst });
    }

    // cofactors and determinant positive on the tensor grid
    let mut min_cof = [f64::INFINITY; 3];
    let mut min_det = f64::INFINITY;
    for a in 0..=samples {
        let x1 = s.a_length * a as f64 / samples as f64;
        for b in 0..samples {
            let x2 = TWO_PI * b as f64 / samples as f64;
            for c in 0..samples {
                let x3 = TWO_PI * c as f64 / samples as f64;
                let x = [x1, x2, x3];
                let cof = s.cofactors_col1(x);
                for i in 0..3 {
                    min_cof[i] = min_cof[i].min(cof[i]);
                }
                min_det = min_det.min(s.det(x));
            }
        }
    }
    for i in 0..3 {
        rows.push(ValidationRow {
            name: format!("cofactor s^{}1 > 0", i + 1),
            pass: min_cof[i] > 0.0,
            margin: min_cof[i],
        });
    }
    rows.push(ValidationRow {
        name: "det S > 0".into(),
        pass: min_det > 0.0,
        margin: min_det,
    });

    let (c1, c2) = s.cone_bounds(4 * samples);
    rows.push(ValidationRow {
        name: "c1 < c2 (cone nonempty)".into(),
        pass: c1 < c2,
        margin: c2 - c1,
    });

    Ok(ValidationReport { rows, c1, c2 })
}

// ---------------------------------------------------------------------------
// Gauge transformations
// ---------------------------------------------------------------------------

/// Column gauge of Proposition-type 1: the returned matrix satisfies
/// `(new_{i2}, new_{i3}) . g2 = (s_{i2}, s_{i3})`, which leaves the metric
/// untouched.
pub fn column_gauge(s: &StackelMatrix, g2: [[f64; 2]; 2]) -> Result<StackelMatrix, GeometryError> {
    let det = g2[0][0] * g2[1][1] - g2[0][1] * g2[1][0];
    if det.abs() < 1e-14 {
        return Err(GeometryError::SingularGauge { det });
    }
    let inv = [
        [g2[1][1] / det, -g2[0][1] / det],
        [-g2[1][0] / det, g2[0][0] / det],
    ];
    let make_row = |i: usize| -> [Curve; 3] {
        let s1 = s.entry(i, 0).clone();
        let s2 = s.entry(i, 1).clone();
        let s3 = s.entry(i, 2).clone();
        // row vector times inv: new2 = s2 inv00 + s3 inv10, new3 = s2 inv01 + s3 inv11
        let new2 = ComboFn::new(vec![(inv[0][0], s2.clone()), (inv[1][0], s3.clone())]) as Curve;
        let new3 = ComboFn::new(vec![(inv[0][1], s2), (inv[1][1], s3)]) as Curve;
        [s1, new2, new3]
    };
    Ok(StackelMatrix::new([make_row(0), make_row(1), make_row(2)], s.a_length))
}

/// First-column shift: `new_{i1} = s_{i1} + c1 s_{i2} + c2 s_{i3}`. The
/// first-column cofactors do not involve column one, so the metric is
/// unchanged.
pub fn first_column_shift(s: &StackelMatrix, c1: f64, c2: f64) -> StackelMatrix {
    let make_row = |i: usize| -> [Curve; 3] {
        let s1 = s.entry(i, 0).clone();
        let s2 = s.entry(i, 1).clone();
        let s3 = s.entry(i, 2).clone();
        let new1 = ComboFn::new(vec![(1.0, s1), (c1, s2.clone()), (c2, s3.clone())]) as Curve;
        [new1, s2, s3]
    };
    StackelMatrix::new([make_row(0), make_row(1), make_row(2)], s.a_length)
}

/// Result of a coordinate reparametrization `y^i = int_0^{x^i} sqrt(f_i)`.
pub struct Reparametrized {
    pub stackel: StackelMatrix,
    pub phi: [Curve; 3],
    pub maps: [Arc<MonotoneMap>; 3],
}

/// Divides each row by `f_i` in the new coordinates and transforms the
/// potentials. Angular reparametrizations must preserve the 2*pi period.
pub fn reparam(
    s: &StackelMatrix,
    phi: &[Curve; 3],
    f: [Curve; 3],
) -> Result<Reparametrized, GeometryError> {
    // positivity scan
    for (i, fi) in f.iter().enumerate() {
        let domain_len = if i == 0 { s.a_length } else { TWO_PI };
        for k in 0..=512 {
            let x = domain_len * k as f64 / 512.0;
            let v = fi.eval(x);
            if !(v > 0.0) {
                return Err(GeometryError::NonPositiveReparam { axis: i + 1, x, value: v });
            }
        }
    }
    let maps = [
        MonotoneMap::build(f[0].clone(), s.a_length, 2048)?,
        MonotoneMap::build(f[1].clone(), TWO_PI, 2048)?,
        MonotoneMap::build(f[2].clone(), TWO_PI, 2048)?,
    ];
    for i in 1..3 {
        let period = maps[i].total();
        if (period - TWO_PI).abs() > 1e-10 {
            return Err(GeometryError::NonPeriodicReparam { axis: i + 1, period });
        }
    }
    // an axis with f_i = 1 keeps its entries: composing through the
    // trivial map would only slow every later evaluation down
    let is_identity: [bool; 3] = std::array::from_fn(|i| {
        let domain_len = if i == 0 { s.a_length } else { TWO_PI };
        (0..=64).all(|k| (f[i].eval(domain_len * k as f64 / 64.0) - 1.0).abs() < 1e-13)
    });
    let new_len = maps[0].total();
    let mut rows: Vec<[Curve; 3]> = Vec::with_capacity(3);
    for i in 0..3 {
        let mk = |j: usize| -> Curve {
            if is_identity[i] {
                s.entry(i, j).clone()
            } else {
                ReparamFn::new(s.entry(i, j).clone(), f[i].clone(), maps[i].clone()) as Curve
            }
        };
        rows.push([mk(0), mk(1), mk(2)]);
    }
    let new_phi: [Curve; 3] = std::array::from_fn(|i| {
        if is_identity[i] {
            phi[i].clone()
        } else {
            TransformedPotentialFn::new(phi[i].clone(), f[i].clone(), maps[i].clone()) as Curve
        }
    });
    let rows: [[Curve; 3]; 3] = [rows.remove(0), rows.remove(0), rows.remove(0)];
    Ok(Reparametrized { stackel: StackelMatrix::new(rows, new_len), phi: new_phi, maps })
}

// ---------------------------------------------------------------------------
// Radial normal form
// ---------------------------------------------------------------------------

/// The radial row brought to Schroedinger normal form by `u^1 = int_0^x
/// sqrt(s12)` and `U = s12^{1/4} u`. Holds both the transformed data as
/// functions of `u^1` and the ingredients needed to integrate the
/// normal-form equation directly in the original coordinate.
pub struct RadialNormalForm {
    pub a_bar: f64,
    pub map: Arc<MonotoneMap>,
    pub s13_bar: Curve,
    pub phi1_bar: Arc<TransformedPotentialFn>,
    pub s12: Curve,
    pub s13: Curve,
    pub phi1: Curve,
    pub a_length: f64,
}

pub fn radial_normal_form(
    s12: Curve,
    s13: Curve,
    phi1: Curve,
    a_length: f64,
) -> Result<RadialNormalForm, GeometryError> {
    for k in 0..=512 {
        let x = a_length * k as f64 / 512.0;
        let v = s12.eval(x);
        if !(v > 0.0) {
            return Err(GeometryError::NonPositiveReparam { axis: 1, x, value: v });
        }
    }
    let map = MonotoneMap::build(s12.clone(), a_length, 4096)?;
    let a_bar = map.total();
    let s13_bar = ReparamFn::new(s13.clone(), s12.clone(), map.clone()) as Curve;
    let phi1_bar = TransformedPotentialFn::new(phi1.clone(), s12.clone(), map.clone());
    Ok(RadialNormalForm { a_bar, map, s13_bar, phi1_bar, s12, s13, phi1, a_length })
}

impl RadialNormalForm {
    /// Normal-form potential `q_nu(x) = nu^2 s13/s12 - phi1_bar`, expressed
    /// in the original coordinate.
    pub fn q_nu_at_x(&self, nu2: num_complex::Complex64, x: f64) -> num_complex::Complex64 {
        let ratio = self.s13.eval(x) / self.s12.eval(x);
        nu2 * ratio - self.phi1_bar.eval_x(x)
    }

    pub fn u_of_x(&self, x: f64) -> f64 {
        self.map.forward(x)
    }

    pub fn x_of_u(&self, u: f64) -> f64 {
        self.map.invert(u)
    }
}

// ---------------------------------------------------------------------------
// Fixtures
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct FixtureFile {
    rows: [[String; 3]; 3],
    #[serde(rename = "A")]
    a: f64,
    phi: [String; 3],
    #[serde(default)]
    c: Option<f64>,
}

/// Fixture = metric data plus provenance (source text and content hash).
pub struct Fixture {
    pub metric: ConformalMetric,
    pub name: String,
    pub sha256: String,
}

pub fn fixture_from_json(text: &str, name: &str) -> Result<Fixture, GeometryError> {
    let file: FixtureFile = serde_json::from_str(text)?;
    if !(file.a > 0.0) {
        return Err(GeometryError::InvalidFixture(format!(
            "radial length A must be positive, got {}",
            file.a
        )));
    }
    let mut rows: Vec<[Curve; 3]> = Vec::new();
    for r in &file.rows {
        rows.push([parse_curve(&r[0])?, parse_curve(&r[1])?, parse_curve(&r[2])?]);
    }
    let rows: [[Curve; 3]; 3] = [rows.remove(0), rows.remove(0), rows.remove(0)];
    let phi: [Curve; 3] =
        [parse_curve(&file.phi[0])?, parse_curve(&file.phi[1])?, parse_curve(&file.phi[2])?];
    let c = match file.c {
        Some(v) if v > 0.0 => ConformalFactor::Const(v),
        Some(v) => {
            return Err(GeometryError::InvalidFixture(format!(
                "conformal constant must be positive, got {v}"
            )))
        }
        None => ConformalFactor::one(),
    };
    use sha2::Digest;
    let sha256 = format!("{:x}", sha2::Sha256::digest(text.as_bytes()));
    Ok(Fixture {
        metric: ConformalMetric { stackel: StackelMatrix::new(rows, file.a), phi, c },
        name: name.to_string(),
        sha256,
    })
}

pub fn load_fixture(path: &Path) -> Result<Fixture, GeometryError> {
    let text = std::fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "fixture".into());
    fixture_from_json(&text, &name)
}

/// The constant flat fixture used throughout the tests: rows
/// (2,1,1)/(0,-1,1)/(0,1,-2), A = 1, phi = 0.
pub fn fixture_f1() -> ConformalMetric {
    let rows: [[Curve; 3]; 3] = [
        [constant(2.0), constant(1.0), constant(1.0)],
        [constant(0.0), constant(-1.0), constant(1.0)],
        [constant(0.0), constant(1.0), constant(-2.0)],
    ];
    ConformalMetric {
        stackel: StackelMatrix::new(rows, 1.0),
        phi: [constant(0.0), constant(0.0), constant(0.0)],
        c: ConformalFactor::one(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn f1_cofactors_and_metric() {
        let m = fixture_f1();
        let x = [0.3, 1.1, 4.2];
        let cof = m.stackel.cofactors_col1(x);
        assert_eq!(cof, [1.0, 3.0, 2.0]);
        assert_eq!(m.stackel.det(x), 2.0);
        let ev = metric_eval(&m, x).unwrap();
        assert_relative_eq!(ev.h_sq[0], 2.0);
        assert_relative_eq!(ev.h_sq[1], 2.0 / 3.0);
        assert_relative_eq!(ev.h_sq[2], 1.0);
        assert_eq!(ev.gamma, [0.0, 0.0, 0.0]);
        assert_eq!(ev.gamma_cap, [0.0, 0.0, 0.0]);
        assert_relative_eq!(ev.r_factor, 3f64.powf(0.25), epsilon = 1e-15);
    }

    #[test]
    fn f1_with_constant_conformal_factor() {
        let mut m = fixture_f1();
        m.c = ConformalFactor::Const(2.0);
        let ev = metric_eval(&m, [0.5, 0.0, 0.0]).unwrap();
        for i in 0..3 {
            assert_relative_eq!(ev.h_cap_sq[i], 16.0 * ev.h_sq[i]);
        }
        assert_eq!(ev.gamma_cap, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn f1_validates_with_expected_cone() {
        let m = fixture_f1();
        let report = validate_stackel(&m.stackel, 16).unwrap();
        assert!(report.valid(), "{report}");
        assert_relative_eq!(report.c1, 0.5);
        assert_relative_eq!(report.c2, 1.0);
    }

    #[test]
    fn identity_matrix_is_invalid() {
        let rows: [[Curve; 3]; 3] = [
            [constant(1.0), constant(0.0), constant(0.0)],
            [constant(0.0), constant(1.0), constant(0.0)],
            [constant(0.0), constant(0.0), constant(1.0)],
        ];
        let s = StackelMatrix::new(rows, 1.0);
        let report = validate_stackel(&s, 8).unwrap();
        assert!(!report.valid());
        let r = report.rows.iter().find(|r| r.name == "s12 > 0").unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn equal_rows_are_singular() {
        let rows: [[Curve; 3]; 3] = [
            [constant(2.0), constant(1.0), constant(1.0)],
            [constant(2.0), constant(1.0), constant(1.0)],
            [constant(0.0), constant(1.0), constant(-2.0)],
        ];
        let s = StackelMatrix::new(rows, 1.0);
        let report = validate_stackel(&s, 8).unwrap();
        let r = report.rows.iter().find(|r| r.name == "det S > 0").unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn gamma_matches_finite_differences_on_variable_fixture() {
        // radial-variable first row, constant angular rows
        let rows: [[Curve; 3]; 3] = [
            [
                parse_curve("2 + sin(pi*x)/2").unwrap(),
                parse_curve("1 + x/2").unwrap(),
                parse_curve("1 + x^2/4").unwrap(),
            ],
            [constant(0.0), constant(-1.0), constant(1.0)],
            [constant(0.0), constant(1.0), constant(-2.0)],
        ];
        let s = StackelMatrix::new(rows, 1.0);
        let x = [0.4, 0.9, 2.0];
        let g = s.gamma(x);
        // finite differences of -log(h1 h2 h3 / h_i^2)
        let log_ratio = |i: usize, x: [f64; 3]| -> f64 {
            let det = s.det(x);
            let cof = s.cofactors_col1(x);
            let h: Vec<f64> = (0..3).map(|k| (det / cof[k]).sqrt()).collect();
            (h[0] * h[1] * h[2] / (h[i] * h[i])).ln()
        };
        for i in 0..3 {
            let h = 1e-6;
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = -(log_ratio(i, xp) - log_ratio(i, xm)) / (2.0 * h);
            assert!((g[i] - fd).abs() < 1e-8, "gamma_{i}: {} vs {}", g[i], fd);
        }
    }

    #[test]
    fn r_factor_log_derivative_is_half_gamma() {
        // 2 d_i ln R = Gamma_i with xi_i = 0
        let rows: [[Curve; 3]; 3] = [
            [
                parse_curve("2 + sin(pi*x)/2").unwrap(),
                parse_curve("1 + x/2").unwrap(),
                parse_curve("1 + x^2/4").unwrap(),
            ],
            [constant(0.0), constant(-1.0), constant(1.0)],
            [constant(0.0), constant(1.0), constant(-2.0)],
        ];
        let m = ConformalMetric {
            stackel: StackelMatrix::new(rows, 1.0),
            phi: [constant(0.0), constant(0.0), constant(0.0)],
            c: ConformalFactor::one(),
        };
        let x = [0.35, 0.7, 1.9];
        let ev = metric_eval(&m, x).unwrap();
        for i in 0..3 {
            let h = 1e-6;
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let rp = metric_eval(&m, xp).unwrap().r_factor;
            let rm = metric_eval(&m, xm).unwrap().r_factor;
            let dlog_r = (rp.ln() - rm.ln()) / (2.0 * h);
            assert!(
                (2.0 * dlog_r - ev.gamma_cap[i]).abs() < 1e-8,
                "axis {i}: 2 dlnR = {} vs Gamma = {}",
                2.0 * dlog_r,
                ev.gamma_cap[i]
            );
        }
    }

    #[test]
    fn column_gauge_identity_and_diag() {
        let m = fixture_f1();
        let id = column_gauge(&m.stackel, [[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let x = [0.2, 0.8, 1.4];
        for i in 0..3 {
            for j in 0..3 {
                let xi = x[i];
                assert_relative_eq!(id.eval_entry(i, j, xi), m.stackel.eval_entry(i, j, xi));
            }
        }
        let d = column_gauge(&m.stackel, [[2.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_relative_eq!(d.eval_entry(0, 1, 0.1), 0.5);
        assert_relative_eq!(d.eval_entry(1, 1, 0.1), -0.5);
        assert_relative_eq!(d.eval_entry(2, 2, 0.1), -2.0);
        // metric invariance
        let ha = m.stackel.cofactors_col1(x);
        let det_a = m.stackel.det(x);
        let hb = d.cofactors_col1(x);
        let det_b = d.det(x);
        for i in 0..3 {
            assert_relative_eq!(det_a / ha[i], det_b / hb[i], max_relative = 1e-14);
        }
    }

    #[test]
    fn column_swap_flips_sign_flags() {
        let m = fixture_f1();
        let sw = column_gauge(&m.stackel, [[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let x = [0.2, 0.8, 1.4];
        // metric unchanged
        let det_a = m.stackel.det(x);
        let ha = m.stackel.cofactors_col1(x);
        let det_b = sw.det(x);
        let hb = sw.cofactors_col1(x);
        for i in 0..3 {
            assert_relative_eq!(det_a / ha[i], det_b / hb[i], max_relative = 1e-14);
        }
        // normalization now fails (s22 > 0 after the swap)
        let report = validate_stackel(&sw, 8).unwrap();
        assert!(!report.valid());
    }

    #[test]
    fn singular_gauge_rejected() {
        let m = fixture_f1();
        match column_gauge(&m.stackel, [[1.0, 2.0], [0.5, 1.0]]) {
            Err(GeometryError::SingularGauge { .. }) => {}
            Err(e) => panic!("wrong error: {e}"),
            Ok(_) => panic!("singular gauge accepted"),
        }
    }

    #[test]
    fn first_column_shift_examples() {
        let m = fixture_f1();
        let sh = first_column_shift(&m.stackel, 1.0, 0.0);
        assert_relative_eq!(sh.eval_entry(0, 0, 0.0), 3.0);
        assert_relative_eq!(sh.eval_entry(1, 0, 0.0), -1.0);
        assert_relative_eq!(sh.eval_entry(2, 0, 0.0), 1.0);
        let x = [0.6, 0.1, 0.2];
        assert_relative_eq!(sh.det(x), m.stackel.det(x), max_relative = 1e-14);
        assert_eq!(sh.cofactors_col1(x), m.stackel.cofactors_col1(x));

        let sh2 = first_column_shift(&m.stackel, 0.0, 1.0);
        assert_relative_eq!(sh2.eval_entry(0, 0, 0.0), 3.0);
        assert_relative_eq!(sh2.eval_entry(1, 0, 0.0), 1.0);
        assert_relative_eq!(sh2.eval_entry(2, 0, 0.0), -2.0);
    }

    #[test]
    fn reparam_identity_and_constant() {
        let m = fixture_f1();
        let one: [Curve; 3] = [constant(1.0), constant(1.0), constant(1.0)];
        let rp = reparam(&m.stackel, &m.phi, one).unwrap();
        assert_relative_eq!(rp.stackel.a_length, 1.0, epsilon = 1e-12);
        assert_relative_eq!(rp.stackel.eval_entry(0, 1, 0.5), 1.0, epsilon = 1e-12);
        assert_relative_eq!(rp.phi[0].eval(0.3), 0.0, epsilon = 1e-12);

        let four: [Curve; 3] = [constant(4.0), constant(1.0), constant(1.0)];
        let rp4 = reparam(&m.stackel, &m.phi, four).unwrap();
        assert_relative_eq!(rp4.stackel.a_length, 2.0, epsilon = 1e-10);
        assert_relative_eq!(rp4.stackel.eval_entry(0, 1, 1.0), 0.25, epsilon = 1e-12);
        // phi1 stays zero: constant f has no log-derivative correction
        assert_relative_eq!(rp4.phi[0].eval(0.7), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn reparam_potential_matches_finite_difference_recomputation() {
        // f1(x) = 1 + x^2/2: check phi_bar against the log-derivative terms
        // recomputed by finite differences in the new variable.
        let m = fixture_f1();
        let f: [Curve; 3] =
            [parse_curve("1 + x^2/2").unwrap(), constant(1.0), constant(1.0)];
        let rp = reparam(&m.stackel, &m.phi, f.clone()).unwrap();
        let map = rp.maps[0].clone();
        let logf = move |y: f64| f[0].eval(map.invert(y)).ln();
        for k in 1..10 {
            let y = rp.stackel.a_length * k as f64 / 10.0;
            let h = 1e-4;
            let d1 = (logf(y + h) - logf(y - h)) / (2.0 * h);
            let d2 = (logf(y + h) - 2.0 * logf(y) + logf(y - h)) / (h * h);
            let expected = -d1 * d1 / 16.0 - d2 / 4.0;
            let got = rp.phi[0].eval(y);
            assert!(
                (got - expected).abs() < 1e-6,
                "y={y}: phi_bar={got} vs fd={expected}"
            );
        }
    }

    #[test]
    fn angular_reparam_must_preserve_period() {
        let m = fixture_f1();
        let f: [Curve; 3] = [constant(1.0), constant(4.0), constant(1.0)];
        match reparam(&m.stackel, &m.phi, f) {
            Err(GeometryError::NonPeriodicReparam { axis: 2, .. }) => {}
            Err(e) => panic!("wrong error: {e}"),
            Ok(_) => panic!("period-breaking reparam accepted"),
        }
    }

    #[test]
    fn normal_form_examples() {
        // s12 = 1: identity transformation
        let nf = radial_normal_form(constant(1.0), constant(1.0), constant(0.0), 1.0).unwrap();
        assert_relative_eq!(nf.a_bar, 1.0, epsilon = 1e-12);
        assert_relative_eq!(nf.u_of_x(0.37), 0.37, epsilon = 1e-12);
        assert_relative_eq!(nf.s13_bar.eval(0.5), 1.0, epsilon = 1e-12);
        assert_relative_eq!(nf.phi1_bar.eval(0.5), 0.0, epsilon = 1e-12);

        // s12 = 4, A = 1: doubled length, s13_bar = s13/4
        let nf4 = radial_normal_form(constant(4.0), constant(3.0), constant(0.0), 1.0).unwrap();
        assert_relative_eq!(nf4.a_bar, 2.0, epsilon = 1e-10);
        assert_relative_eq!(nf4.s13_bar.eval(1.0), 0.75, epsilon = 1e-12);

        // s12 = e^{2x}, A = 1: a_bar = e - 1, phi1_bar = 1/(4 (1+u)^2)
        let nfe = radial_normal_form(
            parse_curve("exp(2*x)").unwrap(),
            constant(1.0),
            constant(0.0),
            1.0,
        )
        .unwrap();
        assert_relative_eq!(nfe.a_bar, std::f64::consts::E - 1.0, epsilon = 1e-9);
        for k in 0..8 {
            let u = nfe.a_bar * k as f64 / 8.0;
            let expected = 0.25 / ((1.0 + u) * (1.0 + u));
            assert!(
                (nfe.phi1_bar.eval(u) - expected).abs() < 1e-8,
                "u={u}: {} vs {expected}",
                nfe.phi1_bar.eval(u)
            );
        }
        // round trip of the coordinate map
        for k in 0..=100 {
            let x = k as f64 / 100.0;
            assert!((nfe.x_of_u(nfe.u_of_x(x)) - x).abs() < 1e-10);
        }
    }

    #[test]
    fn non_smooth_entry_is_reported() {
        // log(x) blows up at the x = 0 sample
        let rows: [[Curve; 3]; 3] = [
            [parse_curve("log(x)").unwrap(), constant(1.0), constant(1.0)],
            [constant(0.0), constant(-1.0), constant(1.0)],
            [constant(0.0), constant(1.0), constant(-2.0)],
        ];
        let s = StackelMatrix::new(rows, 1.0);
        match validate_stackel(&s, 8) {
            Err(GeometryError::NonSmoothEntry { row: 1, col: 1, .. }) => {}
            other => panic!("expected NonSmoothEntry, got {:?}", other.map(|r| r.valid())),
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        /// any invertible column gauge and any first-column shift leave the
        /// metric coefficients untouched at arbitrary points
        #[test]
        fn gauge_transforms_preserve_metric(
            a in -3.0f64..3.0, b in -3.0f64..3.0,
            c in -3.0f64..3.0, d in -3.0f64..3.0,
            c1 in -2.0f64..2.0, c2 in -2.0f64..2.0,
            x1 in 0.0f64..1.0, x2 in 0.0f64..6.28, x3 in 0.0f64..6.28,
        ) {
            proptest::prop_assume!((a * d - b * c).abs() > 0.1);
            let m = fixture_f1();
            let x = [x1, x2, x3];
            let base_det = m.stackel.det(x);
            let base_cof = m.stackel.cofactors_col1(x);
            let gauged = column_gauge(&m.stackel, [[a, b], [c, d]]).unwrap();
            let shifted = first_column_shift(&m.stackel, c1, c2);
            for s in [&gauged, &shifted] {
                let det = s.det(x);
                let cof = s.cofactors_col1(x);
                for i in 0..3 {
                    let h_base = base_det / base_cof[i];
                    let h_new = det / cof[i];
                    proptest::prop_assert!(
                        (h_base - h_new).abs() <= 1e-12 * h_base.abs(),
                        "h{i}: {h_base} vs {h_new}"
                    );
                }
            }
        }
    }

    #[test]
    fn fixture_json_round_trip() {
        let text = r#"{
            "rows": [["2", "1", "1"], ["0", "-1", "1"], ["0", "1", "-2"]],
            "A": 1.0,
            "phi": ["0", "0", "0"]
        }"#;
        let fix = fixture_from_json(text, "f1").unwrap();
        let report = validate_stackel(&fix.metric.stackel, 12).unwrap();
        assert!(report.valid());
        assert_eq!(fix.sha256.len(), 64);
    }
}
