//! Cone localization and density of the joint spectrum.
//!
//! The square-rooted spectrum points `(mu_m, nu_m)` asymptotically fill the
//! cone `sqrt(c1 + eps) <= nu/mu <= sqrt(c2 - eps)` with quadratic counting
//! growth and a uniform pairwise separation; both facts feed the uniqueness
//! set used by the analytic continuation. This module measures them on a
//! computed spectrum: minimal separation, `N(r)/r^2` at a ladder of radii,
//! and least-squares slope bounds `C1 mu^2 + D1 <= nu^2 <= C2 mu^2 + D2`.

use super::JointEigenpair;
use crate::error::SpectrumError;

#[derive(Debug, Clone)]
pub struct ConeDensityReport {
    pub epsilon: f64,
    pub c1: f64,
    pub c2: f64,
    /// square-rooted pairs inside the open cone
    pub pairs_in_cone: Vec<(f64, f64)>,
    pub h_min: f64,
    /// (radius, N(r)/r^2) samples
    pub density_curve: Vec<(f64, f64)>,
    /// fitted lower/upper slope lines in (mu^2, nu^2)
    pub lower_line: (f64, f64),
    pub upper_line: (f64, f64),
}

/// Requires at least `min_pairs` spectrum points inside the cone.
pub const DEFAULT_MIN_PAIRS: usize = 50;

pub fn cone_density(
    pairs: &[JointEigenpair],
    epsilon: f64,
    c1: f64,
    c2: f64,
    min_pairs: usize,
) -> Result<ConeDensityReport, SpectrumError> {
    if epsilon >= (c2 - c1) / 2.0 {
        return Err(SpectrumError::InsufficientPairs { found: 0, need: min_pairs });
    }
    let lo = c1 + epsilon;
    let hi = c2 - epsilon;
    let mut in_cone: Vec<(f64, f64)> = Vec::new();
    for p in pairs {
        if p.mu2 <= 0.0 || p.nu2 < 0.0 {
            continue;
        }
        let ratio = p.nu2 / p.mu2;
        if ratio >= lo && ratio <= hi {
            in_cone.push((p.mu2.sqrt(), p.nu2.sqrt()));
        }
    }
    if in_cone.len() < min_pairs {
        return Err(SpectrumError::InsufficientPairs { found: in_cone.len(), need: min_pairs });
    }
    let mut h_min = f64::INFINITY;
    for i in 0..in_cone.len() {
        for j in (i + 1)..in_cone.len() {
            let d = ((in_cone[i].0 - in_cone[j].0).powi(2)
                + (in_cone[i].1 - in_cone[j].1).powi(2))
            .sqrt();
            h_min = h_min.min(d);
        }
    }
    let r_max = in_cone
        .iter()
        .map(|&(m, n)| (m * m + n * n).sqrt())
        .fold(0.0, f64::max);
    let mut density_curve = Vec::with_capacity(10);
    for k in 1..=10 {
        let r = r_max * k as f64 / 10.0;
        let count = in_cone
            .iter()
            .filter(|&&(m, n)| (m * m + n * n).sqrt() <= r)
            .count();
        density_curve.push((r, count as f64 / (r * r)));
    }
    // slope bounds over the full spectrum (not just the cone interior)
    let all: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|p| p.mu2 > 1e-9)
        .map(|p| (p.mu2, p.nu2))
        .collect();
    let lower_line = envelope_line(&all, false);
    let upper_line = envelope_line(&all, true);
    Ok(ConeDensityReport {
        epsilon,
        c1,
        c2,
        pairs_in_cone: in_cone,
        h_min,
        density_curve,
        lower_line,
        upper_line,
    })
}

/// Tightest line nu^2 = C mu^2 + D bounding the points from below/above
/// with the slope pinned to the extreme ratio.
fn envelope_line(points: &[(f64, f64)], upper: bool) -> (f64, f64) {
    let slope = points
        .iter()
        .map(|&(m, n)| n / m)
        .fold(if upper { f64::NEG_INFINITY } else { f64::INFINITY }, |acc, r| {
            if upper {
                acc.max(r)
            } else {
                acc.min(r)
            }
        });
    let intercept = points
        .iter()
        .map(|&(m, n)| n - slope * m)
        .fold(if upper { f64::NEG_INFINITY } else { f64::INFINITY }, |acc, d| {
            if upper {
                acc.max(d)
            } else {
                acc.min(d)
            }
        });
    (slope, intercept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angular::{joint_spectrum_shooting, AngularOperators, SearchBox, ShootingConfig};
    use crate::stackel::fixture_f1;

    fn lattice_pairs(limit: i64) -> Vec<JointEigenpair> {
        // exact flat-lattice spectrum, used as the counting oracle
        let mut v = Vec::new();
        for j in 0..=limit {
            for k in 0..=limit {
                let mu2 = (2 * j * j + k * k) as f64;
                let nu2 = (j * j + k * k) as f64;
                if mu2 <= (limit * limit) as f64 {
                    v.push(JointEigenpair {
                        mu2,
                        nu2,
                        multiplicity: 1,
                        v_ics: vec![],
                        w_ics: vec![],
                        v_basis: vec![],
                        w_basis: vec![],
                        residual_v: 0.0,
                        residual_w: 0.0,
                    });
                }
            }
        }
        v
    }

    #[test]
    fn flat_lattice_density_and_separation() {
        let pairs = lattice_pairs(16);
        let rep = cone_density(&pairs, 0.05, 0.5, 1.0, 50).unwrap();
        assert!(rep.h_min > 0.0);
        // every cone member has ratio within the trimmed window
        for &(m, n) in &rep.pairs_in_cone {
            let r = (n * n) / (m * m);
            assert!(r >= 0.55 - 1e-12 && r <= 0.95 + 1e-12);
        }
        // counting respects the closed form: verify against direct count
        let (r, d) = *rep.density_curve.last().unwrap();
        let direct = rep
            .pairs_in_cone
            .iter()
            .filter(|&&(m, n)| (m * m + n * n).sqrt() <= r)
            .count();
        assert!((d - direct as f64 / (r * r)).abs() < 1e-12);
        assert!(d > 0.05, "density floor violated: {d}");
        // slope bounds bracket every pair
        for p in &pairs {
            if p.mu2 > 1e-9 {
                assert!(p.nu2 >= rep.lower_line.0 * p.mu2 + rep.lower_line.1 - 1e-9);
                assert!(p.nu2 <= rep.upper_line.0 * p.mu2 + rep.upper_line.1 + 1e-9);
            }
        }
    }

    #[test]
    fn degenerate_cone_is_rejected() {
        let pairs = lattice_pairs(8);
        match cone_density(&pairs, 0.3, 0.5, 1.0, 10) {
            Err(SpectrumError::InsufficientPairs { .. }) => {}
            other => panic!("expected InsufficientPairs, got {other:?}"),
        }
    }

    #[test]
    fn shooting_pairs_feed_the_report() {
        let ops = AngularOperators::from_metric(&fixture_f1());
        let (pairs, _) = joint_spectrum_shooting(
            &ops,
            SearchBox::up_to(60.0, 40.0),
            usize::MAX,
            &ShootingConfig { fast_search: true, ..Default::default() },
        )
        .unwrap();
        let rep = cone_density(&pairs, 0.02, 0.5, 1.0, 12).unwrap();
        assert!(rep.h_min > 0.1);
    }
}
