use std::f64::consts::PI;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};

/// Minimum angular separation between explicit grid points, in radians.
pub const DUPLICATE_ANGLE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridGenerator {
    UniformRandom { seed: u64, count: usize },
    FibonacciSphere { count: usize },
    AngularMesh { resolution: usize },
    Explicit,
}

/// A finite set of unit-norm buyer types on the sphere `S^{d-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeGrid {
    dim: usize,
    points: Vec<DVector<f64>>,
    generator: GridGenerator,
}

impl TypeGrid {
    /// `resolution` equally spaced angles on the circle (d = 2), starting at
    /// `e₁` and turning counter-clockwise. When the resolution is a multiple
    /// of four the quadrants are exact rotations of the first, so `±e₁`,
    /// `±e₂` appear exactly.
    pub fn angular_mesh(resolution: usize) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::invalid("angular mesh needs at least one point"));
        }
        let step = 2.0 * PI / resolution as f64;
        let points = if resolution.is_multiple_of(4) {
            let quarter = resolution / 4;
            let first: Vec<(f64, f64)> = (0..quarter)
                .map(|k| {
                    if k == 0 {
                        (1.0, 0.0)
                    } else {
                        let (s, c) = (k as f64 * step).sin_cos();
                        (c, s)
                    }
                })
                .collect();
            let mut pts = Vec::with_capacity(resolution);
            for q in 0..4 {
                for &(c, s) in &first {
                    let (x, y) = match q {
                        0 => (c, s),
                        1 => (-s, c),
                        2 => (-c, -s),
                        _ => (s, -c),
                    };
                    pts.push(DVector::from_vec(vec![x, y]));
                }
            }
            pts
        } else {
            (0..resolution)
                .map(|k| {
                    let (s, c) = (k as f64 * step).sin_cos();
                    DVector::from_vec(vec![c, s])
                })
                .collect()
        };
        Ok(Self {
            dim: 2,
            points,
            generator: GridGenerator::AngularMesh { resolution },
        })
    }

    /// Fibonacci lattice on `S²`.
    pub fn fibonacci_sphere(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::invalid("Fibonacci grid needs at least one point"));
        }
        let golden_angle = PI * (3.0 - 5f64.sqrt());
        let points = (0..count)
            .map(|i| {
                let y = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                let r = (1.0 - y * y).max(0.0).sqrt();
                let (s, c) = (golden_angle * i as f64).sin_cos();
                DVector::from_vec(vec![r * c, y, r * s]).normalize()
            })
            .collect();
        Ok(Self {
            dim: 3,
            points,
            generator: GridGenerator::FibonacciSphere { count },
        })
    }

    /// Normalized standard Gaussian draws from `ChaCha20Rng::seed_from_u64(seed)`.
    pub fn uniform_random(dim: usize, count: usize, seed: u64) -> Result<Self> {
        if dim == 0 || count == 0 {
            return Err(Error::invalid("uniform grid needs a positive dimension and count"));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut points = Vec::with_capacity(count);
        while points.len() < count {
            let v = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
            let n: f64 = v.norm();
            if n > 1e-6 {
                points.push(v / n);
            }
        }
        Ok(Self {
            dim,
            points,
            generator: GridGenerator::UniformRandom { seed, count },
        })
    }

    /// User-supplied directions, renormalized. Points closer than
    /// [`DUPLICATE_ANGLE`] to an earlier point are rejected.
    pub fn explicit(points: Vec<DVector<f64>>) -> Result<Self> {
        let dim = points
            .first()
            .map(|p| p.len())
            .ok_or_else(|| Error::invalid("explicit grid is empty"))?;
        let mut unit = Vec::with_capacity(points.len());
        for (i, p) in points.into_iter().enumerate() {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "grid point",
                    expected: dim,
                    found: p.len(),
                });
            }
            let u = crate::linalg::unit(&p, "grid point")?;
            if let Some(j) = unit.iter().position(|q: &DVector<f64>| angle(q, &u) < DUPLICATE_ANGLE) {
                return Err(Error::invalid(format!("grid point {i} duplicates point {j}")));
            }
            unit.push(u);
        }
        Ok(Self {
            dim,
            points: unit,
            generator: GridGenerator::Explicit,
        })
    }

    /// 720 angles for d = 2, 1000 Fibonacci points for d = 3, otherwise
    /// 2048 seeded uniform points.
    pub fn default_for(dim: usize, seed: u64) -> Result<Self> {
        match dim {
            2 => Self::angular_mesh(720),
            3 => Self::fibonacci_sphere(1000),
            _ => Self::uniform_random(dim, 2048, seed),
        }
    }

    /// The standard basis `e_1, …, e_d`.
    pub fn basis(dim: usize) -> Result<Self> {
        Self::explicit(
            (0..dim)
                .map(|j| {
                    let mut e = DVector::zeros(dim);
                    e[j] = 1.0;
                    e
                })
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn generator(&self) -> &GridGenerator {
        &self.generator
    }

    /// Polar angle of each point for d = 2, otherwise the point index.
    pub fn abscissa(&self, i: usize) -> f64 {
        if self.dim == 2 {
            let p = &self.points[i];
            p[1].atan2(p[0])
        } else {
            i as f64
        }
    }
}

fn angle(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    // atan2 form stays accurate for nearly parallel vectors.
    let cross = (a * b.dot(a) - b).norm();
    cross.atan2(a.dot(b))
}
