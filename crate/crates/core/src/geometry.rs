//! Geometry-dependent quantities: slant ranges, free-space path gains,
//! direction cosines, UPA steering vectors and their position gradients.
//!
//! Steering vectors and beams are kept in Kronecker-factored form
//! (`a = a_x ⊗ a_y`, element index `i * ny + j`), which turns every inner
//! product into a product of two short sums.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{PlannerError, Result};
use crate::scenario::{ArrayGeometry, Point2};

/// Slant distances below this (squared, m²) are rejected as non-physical.
pub const MIN_DISTANCE_SQ: f64 = 1.0;

/// Squared 3D distance between a UAV at horizontal `q`, altitude `h`, and a
/// ground node at `v`.
pub fn slant_distance_sq(q: Point2, h: f64, v: Point2) -> f64 {
    let dx = q[0] - v[0];
    let dy = q[1] - v[1];
    h * h + dx * dx + dy * dy
}

fn checked_distance_sq(q: Point2, h: f64, v: Point2) -> Result<f64> {
    let d2 = slant_distance_sq(q, h, v);
    if d2 < MIN_DISTANCE_SQ || !d2.is_finite() {
        Err(PlannerError::DegenerateGeometry { distance_sq: d2 })
    } else {
        Ok(d2)
    }
}

/// Free-space channel power gain `β0 / d²`.
pub fn path_gain(q: Point2, h: f64, v: Point2, beta0: f64) -> Result<f64> {
    Ok(beta0 / checked_distance_sq(q, h, v)?)
}

/// Direction of a UAV as seen from a ground node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionCosines {
    /// Cosine along x, `sin θ cos φ`.
    pub phi: f64,
    /// Cosine along y, `sin θ sin φ`.
    pub omega: f64,
    /// Zenith angle from the upward normal [rad].
    pub zenith: f64,
    /// Azimuth in the horizontal plane [rad].
    pub azimuth: f64,
}

impl DirectionCosines {
    pub fn from_angles(zenith: f64, azimuth: f64) -> Self {
        Self {
            phi: zenith.sin() * azimuth.cos(),
            omega: zenith.sin() * azimuth.sin(),
            zenith,
            azimuth,
        }
    }

    /// Unit direction vector in 3D.
    pub fn unit_vector(&self) -> [f64; 3] {
        [self.phi, self.omega, self.zenith.cos()]
    }
}

pub fn direction_cosines(q: Point2, h: f64, v: Point2) -> Result<DirectionCosines> {
    let d = checked_distance_sq(q, h, v)?.sqrt();
    let dx = q[0] - v[0];
    let dy = q[1] - v[1];
    Ok(DirectionCosines {
        phi: dx / d,
        omega: dy / d,
        zenith: (h / d).clamp(-1.0, 1.0).acos(),
        azimuth: dy.atan2(dx),
    })
}

/// Vector in Kronecker-factored form `x ⊗ y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KronVector {
    pub x: Vec<Complex64>,
    pub y: Vec<Complex64>,
}

impl KronVector {
    pub fn len(&self) -> usize {
        self.x.len() * self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Dense vector, element `i * ny + j` equal to `x[i] * y[j]`.
    pub fn full(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.len());
        for xi in &self.x {
            for yj in &self.y {
                out.push(xi * yj);
            }
        }
        out
    }

    pub fn norm_sq(&self) -> f64 {
        let nx: f64 = self.x.iter().map(|c| c.norm_sqr()).sum();
        let ny: f64 = self.y.iter().map(|c| c.norm_sqr()).sum();
        nx * ny
    }

    /// Inner product `self^H other`.
    pub fn inner(&self, other: &KronVector) -> Complex64 {
        dot_h(&self.x, &other.x) * dot_h(&self.y, &other.y)
    }

    /// Copy scaled to unit norm.
    pub fn normalized(&self) -> KronVector {
        let sx = self.x.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let sy = self.y.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        KronVector {
            x: self.x.iter().map(|c| c / sx).collect(),
            y: self.y.iter().map(|c| c / sy).collect(),
        }
    }
}

/// `a^H b` for dense vectors.
pub fn dot_h(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(ai, bi)| ai.conj() * bi).sum()
}

fn phase_ramp(n: usize, spacing: f64, wavelength: f64, cosine: f64) -> Vec<Complex64> {
    let k = -2.0 * PI * spacing * cosine / wavelength;
    (0..n)
        .map(|i| Complex64::from_polar(1.0, k * i as f64))
        .collect()
}

/// UPA response toward the given direction cosines.
pub fn steering_vector(phi: f64, omega: f64, geom: &ArrayGeometry) -> KronVector {
    KronVector {
        x: phase_ramp(geom.nx, geom.dx, geom.wavelength, phi),
        y: phase_ramp(geom.ny, geom.dy, geom.wavelength, omega),
    }
}

/// Steering vector from a BS at `v` toward a UAV at (`q`, `h`).
pub fn steering_toward(q: Point2, h: f64, v: Point2, geom: &ArrayGeometry) -> Result<KronVector> {
    let c = direction_cosines(q, h, v)?;
    Ok(steering_vector(c.phi, c.omega, geom))
}

/// Unit-norm beam steered at (zenith, azimuth).
pub fn beam_at_angles(zenith: f64, azimuth: f64, geom: &ArrayGeometry) -> KronVector {
    let c = DirectionCosines::from_angles(zenith, azimuth);
    steering_vector(c.phi, c.omega, geom).normalized()
}

/// Jacobian of (Φ, Ω) with respect to (q_x, q_y): `[[dΦ/dx, dΦ/dy], [dΩ/dx, dΩ/dy]]`.
pub fn cosine_jacobian(q: Point2, h: f64, v: Point2) -> Result<[[f64; 2]; 2]> {
    let d2 = checked_distance_sq(q, h, v)?;
    let d3 = d2 * d2.sqrt();
    let dx = q[0] - v[0];
    let dy = q[1] - v[1];
    let cross = -dx * dy / d3;
    Ok([
        [(dy * dy + h * h) / d3, cross],
        [cross, (dx * dx + h * h) / d3],
    ])
}

/// Factor derivatives of the steering vector with respect to the
/// horizontal coordinates.
#[derive(Debug, Clone)]
struct SteeringParts {
    a: KronVector,
    /// d a_x / dΦ
    dax: Vec<Complex64>,
    /// d a_y / dΩ
    day: Vec<Complex64>,
    jac: [[f64; 2]; 2],
}

fn steering_parts(q: Point2, h: f64, v: Point2, geom: &ArrayGeometry) -> Result<SteeringParts> {
    let c = direction_cosines(q, h, v)?;
    let jac = cosine_jacobian(q, h, v)?;
    let a = steering_vector(c.phi, c.omega, geom);
    let kx = -2.0 * PI * geom.dx / geom.wavelength;
    let ky = -2.0 * PI * geom.dy / geom.wavelength;
    let dax =
        a.x.iter()
            .enumerate()
            .map(|(i, ai)| Complex64::new(0.0, kx * i as f64) * ai)
            .collect();
    let day =
        a.y.iter()
            .enumerate()
            .map(|(j, aj)| Complex64::new(0.0, ky * j as f64) * aj)
            .collect();
    Ok(SteeringParts { a, dax, day, jac })
}

/// Dense gradients `[∂a/∂q_x, ∂a/∂q_y]`, each of length `nx * ny`.
pub fn steering_gradient(
    q: Point2,
    h: f64,
    v: Point2,
    geom: &ArrayGeometry,
) -> Result<[Vec<Complex64>; 2]> {
    let p = steering_parts(q, h, v, geom)?;
    let mut out = [Vec::with_capacity(p.a.len()), Vec::with_capacity(p.a.len())];
    for (d, g) in out.iter_mut().enumerate() {
        let dphi = p.jac[0][d];
        let domega = p.jac[1][d];
        for i in 0..p.a.x.len() {
            for j in 0..p.a.y.len() {
                g.push(p.dax[i] * dphi * p.a.y[j] + p.a.x[i] * p.day[j] * domega);
            }
        }
    }
    Ok(out)
}

/// `|a^H w|²` for dense vectors.
pub fn directional_gain(a: &[Complex64], w: &[Complex64]) -> f64 {
    dot_h(a, w).norm_sqr()
}

/// Gain of beam `w` at BS `v` toward a UAV at (`q`, `h`).
pub fn gain_toward(
    q: Point2,
    h: f64,
    v: Point2,
    geom: &ArrayGeometry,
    w: &KronVector,
) -> Result<f64> {
    Ok(steering_toward(q, h, v, geom)?.inner(w).norm_sqr())
}

/// Gain of a fixed beam and its gradient with respect to the UAV position.
pub fn gain_and_gradient(
    q: Point2,
    h: f64,
    v: Point2,
    geom: &ArrayGeometry,
    w: &KronVector,
) -> Result<(f64, [f64; 2])> {
    let p = steering_parts(q, h, v, geom)?;
    let sx = dot_h(&p.a.x, &w.x);
    let sy = dot_h(&p.a.y, &w.y);
    let dsx = dot_h(&p.dax, &w.x);
    let dsy = dot_h(&p.day, &w.y);
    let s = sx * sy;
    let mut grad = [0.0; 2];
    for (d, g) in grad.iter_mut().enumerate() {
        let ds = dsx * sy * p.jac[0][d] + sx * dsy * p.jac[1][d];
        *g = 2.0 * (s.conj() * ds).re;
    }
    Ok((s.norm_sqr(), grad))
}

/// First-order model of a directional gain around an anchor position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineGain {
    pub anchor: Point2,
    pub value: f64,
    pub grad: [f64; 2],
}

impl AffineGain {
    pub fn build(
        anchor: Point2,
        h: f64,
        v: Point2,
        geom: &ArrayGeometry,
        w: &KronVector,
    ) -> Result<Self> {
        let (value, grad) = gain_and_gradient(anchor, h, v, geom, w)?;
        Ok(Self {
            anchor,
            value,
            grad,
        })
    }

    pub fn eval(&self, q: Point2) -> f64 {
        self.value + self.grad[0] * (q[0] - self.anchor[0]) + self.grad[1] * (q[1] - self.anchor[1])
    }
}

/// Value of the affine gain model built at `anchor`, evaluated at `q`.
pub fn linearized_gain(
    q: Point2,
    anchor: Point2,
    h: f64,
    v: Point2,
    geom: &ArrayGeometry,
    w: &KronVector,
) -> Result<f64> {
    Ok(AffineGain::build(anchor, h, v, geom, w)?.eval(q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn geom8() -> ArrayGeometry {
        ArrayGeometry::half_wavelength(8, 0.1)
    }

    #[test]
    fn slant_distance_examples() {
        assert_eq!(slant_distance_sq([5.0, 5.0], 80.0, [5.0, 5.0]), 6400.0);
        assert_eq!(slant_distance_sq([60.0, 0.0], 80.0, [0.0, 0.0]), 10000.0);
        assert_eq!(slant_distance_sq([0.0, 0.0], 0.0, [0.0, 0.0]), 0.0);
    }

    #[test]
    fn path_gain_examples() {
        let g = path_gain([1.0, 2.0], 80.0, [1.0, 2.0], 1.0).unwrap();
        assert!((g - 1.5625e-4).abs() < 1e-16);
        let g = path_gain([60.0, 0.0], 80.0, [0.0, 0.0], 1.0).unwrap();
        assert!((g - 1e-4).abs() < 1e-16);
        assert!(matches!(
            path_gain([0.0, 0.0], 0.0, [0.0, 0.0], 1.0),
            Err(PlannerError::DegenerateGeometry { .. })
        ));
    }

    #[test]
    fn path_gain_decreases_with_distance() {
        let mut last = f64::INFINITY;
        for i in 0..50 {
            let g = path_gain([i as f64 * 7.0, 0.0], 80.0, [0.0, 0.0], 1.0).unwrap();
            assert!(g > 0.0 && g < last);
            last = g;
        }
    }

    #[test]
    fn direction_cosine_examples() {
        let c = direction_cosines([3.0, 4.0], 80.0, [3.0, 4.0]).unwrap();
        assert_eq!((c.phi, c.omega, c.zenith), (0.0, 0.0, 0.0));
        let c = direction_cosines([100.0, 0.0], 80.0, [0.0, 0.0]).unwrap();
        assert!((c.phi - 100.0 / 16400f64.sqrt()).abs() < 1e-12);
        assert!(c.omega.abs() < 1e-15);
        let c = direction_cosines([0.0, 100.0], 80.0, [0.0, 0.0]).unwrap();
        assert!(c.phi.abs() < 1e-15);
        assert!((c.omega - 0.780_868_809_443_03).abs() < 1e-10);
    }

    #[test]
    fn cosines_agree_with_angles() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let q = [rng.gen_range(-300.0..300.0), rng.gen_range(-300.0..300.0)];
            let c = direction_cosines(q, rng.gen_range(10.0..150.0), [0.0, 0.0]).unwrap();
            let a = DirectionCosines::from_angles(c.zenith, c.azimuth);
            assert!((a.phi - c.phi).abs() < 1e-12);
            assert!((a.omega - c.omega).abs() < 1e-12);
            assert!(c.phi * c.phi + c.omega * c.omega <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn steering_examples() {
        let a = steering_vector(0.0, 0.0, &geom8()).full();
        assert!(a
            .iter()
            .all(|c| (c - Complex64::new(1.0, 0.0)).norm() < 1e-15));
        let g = ArrayGeometry {
            nx: 2,
            ny: 1,
            dx: 0.05,
            dy: 0.05,
            wavelength: 0.1,
        };
        let a = steering_vector(1.0, 0.0, &g).full();
        assert!((a[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((a[1] - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
        let a = steering_vector(0.3, -0.7, &geom8());
        assert!((a.norm_sq() - 64.0).abs() < 1e-10);
        assert!(a.full().iter().all(|c| (c.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn steering_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let geom = geom8();
        for _ in 0..100 {
            let q = [rng.gen_range(-300.0..300.0), rng.gen_range(-300.0..300.0)];
            let v = [rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0)];
            let grad = steering_gradient(q, 80.0, v, &geom).unwrap();
            let h = 1e-4;
            for d in 0..2 {
                let mut qp = q;
                let mut qm = q;
                qp[d] += h;
                qm[d] -= h;
                let ap = steering_toward(qp, 80.0, v, &geom).unwrap().full();
                let am = steering_toward(qm, 80.0, v, &geom).unwrap().full();
                let fd: Vec<Complex64> = ap
                    .iter()
                    .zip(&am)
                    .map(|(p, m)| (p - m) / (2.0 * h))
                    .collect();
                let scale = fd.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1e-12);
                for (g, f) in grad[d].iter().zip(&fd) {
                    assert!((g - f).norm() / scale < 1e-5);
                }
            }
        }
    }

    #[test]
    fn steering_gradient_overhead_is_imaginary_ramp() {
        let geom = geom8();
        let grad = steering_gradient([10.0, 10.0], 80.0, [10.0, 10.0], &geom).unwrap();
        let k = -2.0 * PI * geom.dx / geom.wavelength / 80.0;
        for i in 0..8 {
            for j in 0..8 {
                let g = grad[0][i * 8 + j];
                assert!(g.re.abs() < 1e-15);
                assert!((g.im - k * i as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn steering_gradient_scales_inversely() {
        let geom = geom8();
        let g1 = steering_gradient([40.0, -25.0], 80.0, [0.0, 0.0], &geom).unwrap();
        let g2 = steering_gradient([80.0, -50.0], 160.0, [0.0, 0.0], &geom).unwrap();
        for d in 0..2 {
            for (a, b) in g1[d].iter().zip(&g2[d]) {
                assert!((a - b * 2.0).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn matched_gain_equals_array_size() {
        let geom = geom8();
        let a = steering_toward([120.0, -40.0], 80.0, [10.0, 5.0], &geom).unwrap();
        let w = a.normalized();
        assert!((a.inner(&w).norm_sqr() - 64.0).abs() < 1e-9);
        assert!((directional_gain(&a.full(), &w.full()) - 64.0).abs() < 1e-9);
    }

    #[test]
    fn orthogonal_and_random_beams() {
        let geom = geom8();
        let a = steering_vector(0.0, 0.0, &geom).full();
        let mut w = vec![Complex64::new(0.0, 0.0); 64];
        w[0] = Complex64::new(1.0 / 2f64.sqrt(), 0.0);
        w[1] = Complex64::new(-1.0 / 2f64.sqrt(), 0.0);
        assert!(directional_gain(&a, &w) < 1e-20);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let mut w: Vec<Complex64> = (0..64)
                .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                .collect();
            let n = w.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            w.iter_mut().for_each(|c| *c /= n);
            let g = directional_gain(&a, &w);
            assert!((0.0..=64.0 + 1e-9).contains(&g));
        }
    }

    #[test]
    fn gain_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let geom = geom8();
        for _ in 0..100 {
            let q = [rng.gen_range(-300.0..300.0), rng.gen_range(-300.0..300.0)];
            let v = [rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0)];
            let w = beam_at_angles(rng.gen_range(0.0..1.2), rng.gen_range(-PI..PI), &geom);
            let (_, grad) = gain_and_gradient(q, 80.0, v, &geom, &w).unwrap();
            let h = 1e-4;
            let fd: Vec<f64> = (0..2)
                .map(|d| {
                    let mut qp = q;
                    let mut qm = q;
                    qp[d] += h;
                    qm[d] -= h;
                    (gain_toward(qp, 80.0, v, &geom, &w).unwrap()
                        - gain_toward(qm, 80.0, v, &geom, &w).unwrap())
                        / (2.0 * h)
                })
                .collect();
            let scale = fd[0].abs().max(fd[1].abs()).max(1e-8);
            for d in 0..2 {
                assert!((grad[d] - fd[d]).abs() / scale < 1e-5, "{grad:?} vs {fd:?}");
            }
        }
    }

    #[test]
    fn linearized_gain_is_tangent_with_quadratic_error() {
        let geom = geom8();
        let v = [0.0, 0.0];
        let anchor = [90.0, 40.0];
        let w = beam_at_angles(0.7, 0.3, &geom);
        let g0 = gain_toward(anchor, 80.0, v, &geom, &w).unwrap();
        assert_eq!(
            linearized_gain(anchor, anchor, 80.0, v, &geom, &w).unwrap(),
            g0
        );
        let err = |s: f64| {
            let q = [anchor[0] + s * 0.6, anchor[1] + s * 0.8];
            (linearized_gain(q, anchor, 80.0, v, &geom, &w).unwrap()
                - gain_toward(q, 80.0, v, &geom, &w).unwrap())
            .abs()
        };
        let (e1, e2, e3) = (err(0.2), err(0.1), err(0.05));
        let order = ((e1 / e2).log2() + (e2 / e3).log2()) / 2.0;
        assert!(order >= 1.9, "order {order}");
    }

    #[test]
    fn matched_beam_overhead_is_stationary() {
        let geom = geom8();
        let w = beam_at_angles(0.0, 0.0, &geom);
        let (g, grad) = gain_and_gradient([0.0, 0.0], 80.0, [0.0, 0.0], &geom, &w).unwrap();
        assert!((g - 64.0).abs() < 1e-9);
        assert!(grad[0].abs() < 1e-12 && grad[1].abs() < 1e-12);
    }
}
