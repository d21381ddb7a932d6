use nalgebra::DVector;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use super::grid::TypeGrid;
use super::report::{VerificationReport, Witness};
use crate::bayes::{great_circle, tangent_basis, NoiseModel};
use crate::error::{Error, Result};
use crate::valuation::perfect_customization_value;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeOptions {
    pub fd_step: f64,
    pub gradient_tolerance: f64,
    pub path_tolerance: f64,
    pub path_pairs: usize,
    pub seed: u64,
    /// Simpson panels per great-circle arc.
    pub panels: usize,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        Self {
            fd_step: 1e-5,
            gradient_tolerance: 1e-4,
            path_tolerance: 1e-6,
            path_pairs: 20,
            seed: 0,
            panels: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeReport {
    pub gradient: VerificationReport,
    pub path_independence: VerificationReport,
    pub passed: bool,
}

/// Price `½ ln((σ² + n)/σ²)` of the full-surplus mechanism at unit `u`.
pub fn envelope_payment(sigma: &NoiseModel, n: usize, u: &DVector<f64>) -> f64 {
    let s = sigma.on_sphere(u).powi(2);
    0.5 * ((s + n as f64) / s).ln()
}

/// Tangential gradient of [`envelope_payment`]:
/// `−n σ ∇σ / (σ² (σ² + n))`.
pub fn envelope_payment_gradient(sigma: &NoiseModel, n: usize, u: &DVector<f64>) -> Result<DVector<f64>> {
    let sd = sigma.on_sphere(u);
    let s = sd * sd;
    let n = n as f64;
    Ok(sigma.tangential_gradient(u)? * (-n * sd / (s * (s + n))))
}

/// Central-difference tangential gradient of `y ↦ V(x, y)` at `y = x`.
fn value_gradient_fd(sigma: &NoiseModel, n: usize, x: &DVector<f64>, h: f64) -> Result<DVector<f64>> {
    let zero = NoiseModel::zero();
    let mut g = DVector::zeros(x.len());
    for t in tangent_basis(x) {
        let fwd = perfect_customization_value(x, &great_circle(x, &t, h), n, sigma, &zero)?;
        let bwd = perfect_customization_value(x, &great_circle(x, &t, -h), n, sigma, &zero)?;
        g += t * ((fwd - bwd) / (2.0 * h));
    }
    Ok(g)
}

/// `∫ ∇t · dγ` along the short great-circle arc from `p` to `q`.
fn arc_integral(sigma: &NoiseModel, n: usize, p: &DVector<f64>, q: &DVector<f64>, panels: usize) -> Result<f64> {
    let c = p.dot(q).clamp(-1.0, 1.0);
    let perp = q - p * c;
    let pn = perp.norm();
    if pn < 1e-12 {
        return if c > 0.0 {
            Ok(0.0)
        } else {
            Err(Error::invalid("antipodal endpoints have no unique great-circle arc"))
        };
    }
    let t0 = perp / pn;
    let theta = pn.atan2(c);
    let m = panels + panels % 2;
    let h = theta / m as f64;
    let f = |phi: f64| -> Result<f64> {
        let (s, co) = phi.sin_cos();
        let pt = p * co + &t0 * s;
        let vel = &t0 * co - p * s;
        Ok(envelope_payment_gradient(sigma, n, &pt)?.dot(&vel))
    };
    let mut sum = f(0.0)? + f(theta)?;
    for k in 1..m {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(k as f64 * h)?;
    }
    Ok(sum * h / 3.0)
}

/// Checks that the closed-form price is the envelope integral of the
/// buyer's marginal value: its gradient matches the finite-difference
/// gradient of `y ↦ V(x, y)` at `y = x`, and integrating it along two
/// different paths gives the same price difference.
pub fn envelope_gradient_check(
    sigma: &NoiseModel,
    n: usize,
    grid: &TypeGrid,
    opts: &EnvelopeOptions,
) -> Result<EnvelopeReport> {
    if n == 0 {
        return Err(Error::invalid("number of records must be positive"));
    }
    if grid.is_empty() {
        return Err(Error::invalid("type grid is empty"));
    }
    let pts = grid.points();

    let (mut worst_g, mut wi) = (f64::NEG_INFINITY, 0);
    for (i, x) in pts.iter().enumerate() {
        let closed = envelope_payment_gradient(sigma, n, x)?;
        let fd = value_gradient_fd(sigma, n, x, opts.fd_step)?;
        let gap = (closed - fd).amax();
        if gap > worst_g {
            (worst_g, wi) = (gap, i);
        }
    }
    let gradient = VerificationReport::new(
        "envelope-gradient",
        worst_g,
        Witness::Point {
            index: wi,
            x: pts[wi].iter().copied().collect(),
        },
        grid.len(),
        opts.gradient_tolerance,
    );

    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let d = grid.dim();
    let (mut worst_p, mut witness) = (0.0f64, Witness::None);
    if pts.len() >= 2 {
        for _ in 0..opts.path_pairs {
            let i = rng.random_range(0..pts.len());
            let mut j = rng.random_range(0..pts.len() - 1);
            if j >= i {
                j += 1;
            }
            let (a, b) = (&pts[i], &pts[j]);
            if a.dot(b) < -1.0 + 1e-9 {
                continue;
            }
            let via = detour_point(a, b, d, &mut rng);
            let direct = arc_integral(sigma, n, a, b, opts.panels)?;
            let around = arc_integral(sigma, n, a, &via, opts.panels)? + arc_integral(sigma, n, &via, b, opts.panels)?;
            let exact = envelope_payment(sigma, n, b) - envelope_payment(sigma, n, a);
            let gap = (direct - around).abs().max((direct - exact).abs());
            if gap > worst_p || matches!(witness, Witness::None) {
                worst_p = worst_p.max(gap);
                witness = Witness::Pair {
                    true_index: i,
                    report_index: j,
                    x: a.iter().copied().collect(),
                    x_hat: b.iter().copied().collect(),
                };
            }
        }
    }
    let path_independence = VerificationReport::new(
        "envelope-path-independence",
        worst_p,
        witness,
        grid.len(),
        opts.path_tolerance,
    );
    Ok(EnvelopeReport {
        passed: gradient.passed && path_independence.passed,
        gradient,
        path_independence,
    })
}

/// Intermediate point for the second path: the far side of the circle
/// through `a` and `b` in two dimensions, a random direction otherwise.
fn detour_point(a: &DVector<f64>, b: &DVector<f64>, d: usize, rng: &mut ChaCha20Rng) -> DVector<f64> {
    if d == 2 {
        let mid = a + b;
        return -(mid.normalize());
    }
    loop {
        let v: DVector<f64> = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let nv = v.norm();
        if nv < 1e-3 {
            continue;
        }
        let v: DVector<f64> = v / nv;
        if v.dot(a).abs() < 0.95 && v.dot(b).abs() < 0.95 {
            return v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_noise_has_flat_price() {
        let sigma = NoiseModel::constant(1.3);
        let g = TypeGrid::angular_mesh(24).unwrap();
        for x in g.points() {
            assert_eq!(envelope_payment_gradient(&sigma, 5, x).unwrap().amax(), 0.0);
        }
        let r = envelope_gradient_check(&sigma, 5, &g, &EnvelopeOptions::default()).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.gradient.worst_violation < 1e-8);
    }

    #[test]
    fn affine_noise_in_the_plane() {
        let sigma = NoiseModel::affine(1.0, vec![0.5, 0.0]);
        let g = TypeGrid::uniform_random(2, 40, 11).unwrap();
        let r = envelope_gradient_check(&sigma, 5, &g, &EnvelopeOptions::default()).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn arcs_around_the_circle_agree() {
        let sigma = NoiseModel::affine(1.0, vec![0.5, 0.0]);
        let a = DVector::from_vec(vec![1.0, 0.0]);
        let b = DVector::from_vec(vec![-(0.99f64), (1.0 - 0.99f64 * 0.99).sqrt()]);
        let direct = arc_integral(&sigma, 5, &a, &b, 512).unwrap();
        let via = -(&a + &b).normalize();
        let around = arc_integral(&sigma, 5, &a, &via, 512).unwrap() + arc_integral(&sigma, 5, &via, &b, 512).unwrap();
        assert!((direct - around).abs() < 1e-9);
        let exact = envelope_payment(&sigma, 5, &b) - envelope_payment(&sigma, 5, &a);
        assert!((direct - exact).abs() < 1e-9);
    }

    #[test]
    fn kinked_noise_is_flagged() {
        let sigma = NoiseModel::from_fn("kink", |u| 1.0 + u[0].abs());
        let g = TypeGrid::explicit(vec![DVector::from_vec(vec![0.0, 1.0])]).unwrap();
        let err = envelope_gradient_check(&sigma, 5, &g, &EnvelopeOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NonSmoothNoise { .. }));
    }
}
