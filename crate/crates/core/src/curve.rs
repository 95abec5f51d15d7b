//! Univariate functions with two derivatives.
//!
//! Every Stackel-matrix entry, potential and reparametrization function is a
//! `UnivariateFn`: something evaluable together with its first and second
//! derivative. Closed-form entries come from the expression grammar; a cubic
//! spline variant covers data-defined entries.

use std::sync::Arc;

use crate::error::GeometryError;
use crate::expr::Expr;

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

pub trait UnivariateFn: Send + Sync {
    fn eval(&self, x: f64) -> f64;
    fn d1(&self, x: f64) -> f64;
    fn d2(&self, x: f64) -> f64;

    /// Source text when the function came from the expression grammar.
    fn source(&self) -> Option<&str> {
        None
    }
}

pub type Curve = Arc<dyn UnivariateFn>;

/// Closed-form function parsed from the fixture grammar, with symbolic
/// derivatives.
pub struct ExprFn {
    src: String,
    f: Arc<Expr>,
    df: Arc<Expr>,
    ddf: Arc<Expr>,
}

impl ExprFn {
    pub fn parse(src: &str) -> Result<Arc<Self>, GeometryError> {
        let f = Expr::parse(src)?;
        Ok(Arc::new(Self::from_expr(src.to_string(), f)))
    }

    pub fn from_expr(src: String, f: Arc<Expr>) -> Self {
        let df = f.diff();
        let ddf = df.diff();
        ExprFn { src, f, df, ddf }
    }
}

impl UnivariateFn for ExprFn {
    fn eval(&self, x: f64) -> f64 {
        self.f.eval(x)
    }
    fn d1(&self, x: f64) -> f64 {
        self.df.eval(x)
    }
    fn d2(&self, x: f64) -> f64 {
        self.ddf.eval(x)
    }
    fn source(&self) -> Option<&str> {
        Some(&self.src)
    }
}

pub struct ConstFn(pub f64);

impl UnivariateFn for ConstFn {
    fn eval(&self, _x: f64) -> f64 {
        self.0
    }
    fn d1(&self, _x: f64) -> f64 {
        0.0
    }
    fn d2(&self, _x: f64) -> f64 {
        0.0
    }
}

pub fn constant(v: f64) -> Curve {
    Arc::new(ConstFn(v))
}

pub fn parse_curve(src: &str) -> Result<Curve, GeometryError> {
    Ok(ExprFn::parse(src)? as Curve)
}

/// Cubic spline through equally spaced samples; the fallback representation
/// for entries that are only available as data.
pub struct SplineFn {
    x0: f64,
    h: f64,
    y: Vec<f64>,
    /// second derivatives at the knots
    m: Vec<f64>,
    periodic: bool,
}

impl SplineFn {
    /// Natural cubic spline on `[x0, x0 + (n-1) h]`.
    pub fn natural(x0: f64, h: f64, y: Vec<f64>) -> Arc<Self> {
        let n = y.len();
        assert!(n >= 4, "spline needs at least 4 samples");
        let mut m = vec![0.0; n];
        // Tridiagonal solve for interior second derivatives.
        let mut diag = vec![4.0; n - 2];
        let mut rhs = vec![0.0; n - 2];
        for i in 1..n - 1 {
            rhs[i - 1] = 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1]) / (h * h);
        }
        for i in 1..n - 2 {
            let w = 1.0 / diag[i - 1];
            diag[i] -= w;
            rhs[i] -= w * rhs[i - 1];
        }
        for i in (0..n - 2).rev() {
            let upper = if i + 1 < n - 2 { rhs[i + 1] } else { 0.0 };
            rhs[i] = (rhs[i] - upper) / diag[i];
        }
        m[1..n - 1].copy_from_slice(&rhs);
        Arc::new(SplineFn { x0, h, y, m, periodic: false })
    }

    /// Periodic cubic spline on one period; `y` holds samples at
    /// `x0 + k h` for `k = 0..n` with `y[n] == y[0]` implied (pass n values).
    pub fn periodic(x0: f64, period: f64, y: Vec<f64>) -> Arc<Self> {
        let n = y.len();
        assert!(n >= 4, "spline needs at least 4 samples");
        let h = period / n as f64;
        // Solve the cyclic tridiagonal system (1, 4, 1) m = rhs via
        // Sherman-Morrison.
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            let ym = y[(i + n - 1) % n];
            let yp = y[(i + 1) % n];
            rhs[i] = 6.0 * (yp - 2.0 * y[i] + ym) / (h * h);
        }
        // Thomas solve of the modified (non-cyclic) tridiagonal system with
        // diagonal (5, 4, ..., 4, 5) and off-diagonals 1; the corner entries
        // are restored below via Sherman-Morrison with gamma = -1.
        let solve_tri = |b: &[f64]| -> Vec<f64> {
            let mut dm = vec![4.0; n];
            dm[0] = 5.0;
            dm[n - 1] = 5.0;
            let mut x = b.to_vec();
            for i in 1..n {
                let w = 1.0 / dm[i - 1];
                dm[i] -= w;
                x[i] -= w * x[i - 1];
            }
            x[n - 1] /= dm[n - 1];
            for i in (0..n - 1).rev() {
                x[i] = (x[i] - x[i + 1]) / dm[i];
            }
            x
        };
        // A = T + u v^T with u = (-1, 0, .., 0, 1)^T? Use the classic gamma
        // formulation: gamma = -1, u = (gamma, 0, ..., 1), v = (1, 0, ..,
        // corner/gamma).
        let gamma = -1.0f64;
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = 1.0;
        // modified diagonal already in solve_tri: dm[0] = 4 - gamma = 5,
        // dm[n-1] = 4 - corner*corner/gamma = 4 + 1 = 5 with corner = 1.
        let zx = solve_tri(&rhs);
        let zu = solve_tri(&u);
        let vy = zx[0] + zx[n - 1] / gamma * 1.0;
        let vu = zu[0] + zu[n - 1] / gamma * 1.0;
        let factor = vy / (1.0 + vu);
        let m: Vec<f64> = zx.iter().zip(&zu).map(|(a, b)| a - factor * b).collect();
        Arc::new(SplineFn { x0, h, y, m, periodic: true })
    }

    fn locate(&self, x: f64) -> (usize, usize, f64) {
        let n = self.y.len();
        if self.periodic {
            let period = self.h * n as f64;
            let mut t = (x - self.x0).rem_euclid(period);
            if !t.is_finite() {
                t = 0.0;
            }
            let i = ((t / self.h).floor() as usize).min(n - 1);
            (i, (i + 1) % n, t - i as f64 * self.h)
        } else {
            let t = ((x - self.x0) / self.h).clamp(0.0, (n - 2) as f64);
            let i = (t.floor() as usize).min(n - 2);
            (i, i + 1, x - self.x0 - i as f64 * self.h)
        }
    }
}

impl UnivariateFn for SplineFn {
    fn eval(&self, x: f64) -> f64 {
        let (i, j, dx) = self.locate(x);
        let h = self.h;
        let a = (h - dx) / h;
        let b = dx / h;
        a * self.y[i]
            + b * self.y[j]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[j]) * h * h / 6.0
    }
    fn d1(&self, x: f64) -> f64 {
        let (i, j, dx) = self.locate(x);
        let h = self.h;
        let a = (h - dx) / h;
        let b = dx / h;
        (self.y[j] - self.y[i]) / h
            + ((1.0 - 3.0 * a * a) * self.m[i] + (3.0 * b * b - 1.0) * self.m[j]) * h / 6.0
    }
    fn d2(&self, x: f64) -> f64 {
        let (i, j, dx) = self.locate(x);
        let h = self.h;
        let a = (h - dx) / h;
        let b = dx / h;
        a * self.m[i] + b * self.m[j]
    }
}

/// Composition `g(y) = f(x(y)) / w(x(y))`-style machinery used by
/// reparametrizations: the new entry in the variable `y = int_0^x sqrt(f_i)`.
///
/// Derivatives w.r.t. `y` follow from the chain rule with `dx/dy =
/// 1/sqrt(f_i(x))`; the inverse map is resolved by a guarded Newton iteration
/// on the cached cumulative quadrature.
pub struct ReparamFn {
    /// entry in the original variable, already divided by f_i
    entry: Curve,
    /// the reparametrization density f_i (positive)
    density: Curve,
    map: Arc<MonotoneMap>,
}

impl ReparamFn {
    pub fn new(entry: Curve, density: Curve, map: Arc<MonotoneMap>) -> Arc<Self> {
        Arc::new(ReparamFn { entry, density, map })
    }
}

impl UnivariateFn for ReparamFn {
    fn eval(&self, y: f64) -> f64 {
        let x = self.map.invert(y);
        self.entry.eval(x) / self.density.eval(x)
    }
    fn d1(&self, y: f64) -> f64 {
        let x = self.map.invert(y);
        let f = self.density.eval(x);
        let g = self.entry.eval(x) / f;
        let gp = (self.entry.d1(x) - g * self.density.d1(x)) / f;
        gp / f.sqrt()
    }
    fn d2(&self, y: f64) -> f64 {
        let x = self.map.invert(y);
        let f = self.density.eval(x);
        let fp = self.density.d1(x);
        let g = self.entry.eval(x) / f;
        let gp = (self.entry.d1(x) - g * fp) / f;
        let gpp = (self.entry.d2(x) - 2.0 * gp * fp - g * self.density.d2(x)) / f;
        // d2/dy2 = g''/f - f' g'/(2 f^2)
        gpp / f - fp * gp / (2.0 * f * f)
    }
}

/// Strictly increasing map `y(x) = int_0^x sqrt(f(t)) dt` with a numeric
/// inverse. Quadrature is composite Simpson on a fine fixed grid.
pub struct MonotoneMap {
    density: Curve,
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl MonotoneMap {
    pub fn build(density: Curve, x_end: f64, n: usize) -> Result<Arc<Self>, GeometryError> {
        let n = n.max(256);
        let h = x_end / n as f64;
        let mut xs = Vec::with_capacity(n + 1);
        let mut ys = Vec::with_capacity(n + 1);
        let sqrt_f = |x: f64| -> Result<f64, GeometryError> {
            let v = density.eval(x);
            if !(v > 0.0) {
                return Err(GeometryError::NonPositiveReparam { axis: 0, x, value: v });
            }
            Ok(v.sqrt())
        };
        let mut acc = 0.0;
        xs.push(0.0);
        ys.push(0.0);
        for i in 0..n {
            let a = i as f64 * h;
            let b = a + h;
            let fa = sqrt_f(a)?;
            let fm = sqrt_f(0.5 * (a + b))?;
            let fb = sqrt_f(b)?;
            acc += h / 6.0 * (fa + 4.0 * fm + fb);
            xs.push(b);
            ys.push(acc);
        }
        Ok(Arc::new(MonotoneMap { density, xs, ys }))
    }

    pub fn total(&self) -> f64 {
        *self.ys.last().unwrap()
    }

    pub fn forward(&self, x: f64) -> f64 {
        // Simpson from the nearest cached node.
        let n = self.xs.len() - 1;
        let x_end = self.xs[n];
        let xc = x.clamp(0.0, x_end);
        let h = x_end / n as f64;
        let i = ((xc / h).floor() as usize).min(n - 1);
        let a = self.xs[i];
        let fa = self.density.eval(a).sqrt();
        let fm = self.density.eval(0.5 * (a + xc)).max(0.0).sqrt();
        let fb = self.density.eval(xc).max(0.0).sqrt();
        self.ys[i] + (xc - a) / 6.0 * (fa + 4.0 * fm + fb)
    }

    /// Invert y(x) = y by table lookup plus Newton.
    pub fn invert(&self, y: f64) -> f64 {
        let n = self.xs.len() - 1;
        let y_end = self.ys[n];
        let yc = y.clamp(0.0, y_end);
        let mut lo = 0usize;
        let mut hi = n;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.ys[mid] <= yc {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut x = self.xs[lo]
            + (yc - self.ys[lo]) / (self.ys[hi] - self.ys[lo]).max(1e-300)
                * (self.xs[hi] - self.xs[lo]);
        for _ in 0..40 {
            let fy = self.forward(x) - yc;
            let d = self.density.eval(x).max(0.0).sqrt();
            if d == 0.0 {
                break;
            }
            let step = fy / d;
            x -= step;
            x = x.clamp(0.0, self.xs[n]);
            if step.abs() < 1e-14 * (1.0 + x.abs()) {
                break;
            }
        }
        x
    }
}

/// Checks value and first two derivatives match at 0 and 2*pi.
pub fn periodicity_defect(f: &Curve) -> f64 {
    let s = |a: f64, b: f64| (a - b).abs() / (1.0 + a.abs().max(b.abs()));
    s(f.eval(0.0), f.eval(TWO_PI))
        + s(f.d1(0.0), f.d1(TWO_PI))
        + s(f.d2(0.0), f.d2(TWO_PI))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn natural_spline_reproduces_cubic() {
        let h = 0.05;
        let y: Vec<f64> = (0..81).map(|i| {
            let x = i as f64 * h;
            x * x * x - x
        }).collect();
        let s = SplineFn::natural(0.0, h, y);
        // interior points away from the natural-boundary layer
        for &x in &[1.0, 1.5, 2.3, 3.0] {
            assert!((s.eval(x) - (x * x * x - x)).abs() < 2e-4, "val at {x}");
            assert!((s.d1(x) - (3.0 * x * x - 1.0)).abs() < 2e-3, "d1 at {x}");
        }
    }

    #[test]
    fn periodic_spline_tracks_trig() {
        let n = 64;
        let y: Vec<f64> = (0..n).map(|i| (TWO_PI * i as f64 / n as f64).sin()).collect();
        let s = SplineFn::periodic(0.0, TWO_PI, y);
        for k in 0..9 {
            let x = 0.7 * k as f64;
            assert!((s.eval(x) - x.sin()).abs() < 1e-5, "val at {x}");
            assert!((s.d1(x) - x.cos()).abs() < 1e-3, "d1 at {x}");
            assert!((s.d2(x) + x.sin()).abs() < 1e-2, "d2 at {x}");
        }
        assert!(periodicity_defect(&(s as Curve)) < 1e-9);
    }

    #[test]
    fn monotone_map_round_trips() {
        let f = parse_curve("1 + x^2/2").unwrap();
        let map = MonotoneMap::build(f, 1.0, 1024).unwrap();
        for k in 0..=100 {
            let x = k as f64 / 100.0;
            let y = map.forward(x);
            let back = map.invert(y);
            assert!((back - x).abs() < 1e-10, "x={x} back={back}");
        }
    }
}
