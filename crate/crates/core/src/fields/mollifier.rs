use crate::util::sphere_measure;

/// Radial bump `c exp(-1 / (1 - |z|^2))` on the unit ball of `R^m`, with
/// `c` normalising the integral to one, together with a symmetric lattice
/// quadrature of the ball used by adaptive convolutions.
#[derive(Debug, Clone)]
pub struct Mollifier {
    m: usize,
    c: f64,
    points: Vec<f64>,
    weights: Vec<f64>,
}

fn bump(r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r2)).exp()
    }
}

impl Mollifier {
    /// `per_unit` lattice points per unit length along each axis.
    pub fn new(m: usize, per_unit: usize) -> Self {
        assert!((1..=4).contains(&m) && per_unit >= 2);
        // radial Simpson rule for the normalisation constant
        let n = 20_000;
        let h = 1.0 / n as f64;
        let mut s = 0.0;
        for i in 0..=n {
            let r = i as f64 * h;
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            s += w * bump(r * r) * r.powi(m as i32 - 1);
        }
        let radial = s * h / 3.0;
        let c = 1.0 / (sphere_measure(m - 1) * radial);

        let q = per_unit as i64;
        let step = 1.0 / q as f64;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let side = 2 * q + 1;
        let total = side.pow(m as u32);
        for mut code in 0..total {
            let mut z = vec![0.0; m];
            for zc in z.iter_mut() {
                *zc = ((code % side) - q) as f64 * step;
                code /= side;
            }
            let r2: f64 = z.iter().map(|v| v * v).sum();
            let w = c * bump(r2) * step.powi(m as i32);
            if w > 0.0 {
                points.extend(z);
                weights.push(w);
            }
        }
        let sum: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= sum;
        }
        Self { m, c, points, weights }
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn constant(&self) -> f64 {
        self.c
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        self.c * bump(z.iter().map(|v| v * v).sum())
    }

    /// Quadrature nodes in the unit ball and their weights (summing to one).
    pub fn quadrature(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.points.chunks(self.m).zip(self.weights.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_mass_by_independent_quadrature() {
        for m in 1..=3 {
            let phi = Mollifier::new(m, 4);
            // midpoint rule on a fine Cartesian lattice of [-1, 1]^m
            let n: usize = match m {
                1 => 20_000,
                2 => 1_000,
                _ => 120,
            };
            let h = 2.0 / n as f64;
            let mut s = 0.0;
            let total = n.pow(m as u32);
            for mut code in 0..total {
                let mut z = vec![0.0; m];
                for zc in z.iter_mut() {
                    *zc = -1.0 + ((code % n) as f64 + 0.5) * h;
                    code /= n;
                }
                s += phi.value(&z);
            }
            s *= h.powi(m as i32);
            let tol = if m == 3 { 1e-6 } else { 1e-8 };
            assert!((s - 1.0).abs() < tol, "m = {m}: mass {s}");
        }
    }

    #[test]
    fn symmetric_nonnegative_supported_in_ball() {
        let phi = Mollifier::new(2, 6);
        assert!(phi.value(&[1.0, 0.0]) == 0.0 && phi.value(&[0.0, 0.0]) > 0.0);
        assert_eq!(phi.value(&[0.3, -0.2]), phi.value(&[-0.3, 0.2]));
        let mut first = [0.0; 2];
        let mut total = 0.0;
        for (z, w) in phi.quadrature() {
            assert!(w > 0.0);
            first[0] += w * z[0];
            first[1] += w * z[1];
            total += w;
        }
        assert!((total - 1.0).abs() < 1e-14);
        assert!(first[0].abs() < 1e-15 && first[1].abs() < 1e-15);
    }
}
