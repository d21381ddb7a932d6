use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};

type SphereFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
type SphereGrad = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// Noise standard deviation as a function of the feature direction.
///
/// The model stores `σ` on the unit sphere and extends it by proportional
/// scaling, `σ(x) = ‖x‖ · σ(x/‖x‖)`, so a record along `c·x` is exactly as
/// informative as one along `x`. The same type describes artificial noise
/// a seller may add, where zero is allowed.
#[derive(Clone)]
pub struct NoiseModel {
    label: String,
    on_sphere: SphereFn,
    gradient: Option<SphereGrad>,
}

impl fmt::Debug for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NoiseModel").field("label", &self.label).finish()
    }
}

impl NoiseModel {
    pub fn constant(sigma: f64) -> Self {
        Self {
            label: format!("constant({sigma})"),
            on_sphere: Arc::new(move |_| sigma),
            gradient: Some(Arc::new(|u: &DVector<f64>| DVector::zeros(u.len()))),
        }
    }

    /// No noise at all; only meaningful as an artificial-noise schedule.
    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// `σ(u) = offset + ⟨slope, u⟩` on the unit sphere.
    pub fn affine(offset: f64, slope: Vec<f64>) -> Self {
        let slope = DVector::from_vec(slope);
        let label = format!("affine({offset}; {:?})", slope.as_slice());
        let s1 = slope.clone();
        Self {
            label,
            on_sphere: Arc::new(move |u| offset + s1.dot(u)),
            gradient: Some(Arc::new(move |_| slope.clone())),
        }
    }

    /// Arbitrary sphere function; its gradient is taken numerically when needed.
    pub fn from_fn<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            on_sphere: Arc::new(f),
            gradient: None,
        }
    }

    /// Attaches the ambient gradient of the sphere function.
    pub fn with_gradient<G>(mut self, g: G) -> Self
    where
        G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(g));
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `σ` at a unit vector.
    pub fn on_sphere(&self, u: &DVector<f64>) -> f64 {
        (self.on_sphere)(u)
    }

    /// `σ(x) = ‖x‖ · σ(x/‖x‖)`; zero at the origin.
    pub fn stddev(&self, x: &DVector<f64>) -> f64 {
        let norm = x.norm();
        if norm == 0.0 {
            return 0.0;
        }
        norm * self.on_sphere(&(x / norm))
    }

    /// Tangential gradient of `σ` on the sphere at unit `u`.
    ///
    /// Uses the attached gradient when present, otherwise central differences
    /// along great circles. Fails with [`Error::NonSmoothNoise`] when the
    /// one-sided differences disagree.
    pub fn tangential_gradient(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let project = |g: DVector<f64>| {
            let radial = g.dot(u);
            g - u * radial
        };
        if let Some(g) = &self.gradient {
            return Ok(project(g(u)));
        }
        const H: f64 = 1e-6;
        let s0 = self.on_sphere(u);
        let mut grad = DVector::zeros(u.len());
        for t in tangent_basis(u) {
            let fwd = self.on_sphere(&great_circle(u, &t, H));
            let bwd = self.on_sphere(&great_circle(u, &t, -H));
            let right = (fwd - s0) / H;
            let left = (s0 - bwd) / H;
            let gap = (right - left).abs();
            if gap > 1e-3 * (1.0 + right.abs().max(left.abs())) {
                return Err(Error::NonSmoothNoise {
                    point: u.iter().copied().collect(),
                    gap,
                });
            }
            grad += &t * ((fwd - bwd) / (2.0 * H));
        }
        Ok(grad)
    }
}

/// Orthonormal basis of the tangent space of the unit sphere at `u`.
pub fn tangent_basis(u: &DVector<f64>) -> Vec<DVector<f64>> {
    let d = u.len();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(d.saturating_sub(1));
    let mut axes: Vec<usize> = (0..d).collect();
    // Start from the axes least aligned with u for conditioning.
    axes.sort_by(|&a, &b| u[a].abs().total_cmp(&u[b].abs()));
    for &k in &axes {
        if basis.len() + 1 == d {
            break;
        }
        let mut v = DVector::zeros(d);
        v[k] = 1.0;
        v -= u * u.dot(&v);
        for b in &basis {
            let c = b.dot(&v);
            v -= b * c;
        }
        let n = v.norm();
        if n > 1e-8 {
            basis.push(v / n);
        }
    }
    basis
}

/// Point at arc length `h` from `u` along unit tangent `t`.
pub fn great_circle(u: &DVector<f64>, t: &DVector<f64>, h: f64) -> DVector<f64> {
    u * h.cos() + t * h.sin()
}
