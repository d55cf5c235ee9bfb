//! Small dense linear-algebra and spherical-geometry helpers.

/// Determinant of a square matrix given row-major, by Gaussian elimination
/// with partial pivoting.
pub fn det(a: &[f64], n: usize) -> f64 {
    debug_assert_eq!(a.len(), n * n);
    match n {
        0 => 1.0,
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        3 => {
            a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6]) + a[2] * (a[3] * a[7] - a[4] * a[6])
        }
        _ => {
            let mut m = a.to_vec();
            let mut d = 1.0;
            for col in 0..n {
                let mut piv = col;
                for r in col + 1..n {
                    if m[r * n + col].abs() > m[piv * n + col].abs() {
                        piv = r;
                    }
                }
                if m[piv * n + col] == 0.0 {
                    return 0.0;
                }
                if piv != col {
                    for c in 0..n {
                        m.swap(piv * n + c, col * n + c);
                    }
                    d = -d;
                }
                let p = m[col * n + col];
                d *= p;
                for r in col + 1..n {
                    let f = m[r * n + col] / p;
                    if f != 0.0 {
                        for c in col..n {
                            m[r * n + c] -= f * m[col * n + c];
                        }
                    }
                }
            }
            d
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Signed solid angle of the spherical triangle spanned by three unit
/// vectors (Van Oosterom–Strackee). Positive when `det[a, b, c] > 0`.
pub fn solid_angle(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> f64 {
    let num = dot3(a, &cross(b, c));
    let den = 1.0 + dot3(a, b) + dot3(b, c) + dot3(c, a);
    2.0 * num.atan2(den)
}

/// Wraps an angle difference into `(-pi, pi]`.
pub fn wrap_angle(mut d: f64) -> f64 {
    use std::f64::consts::PI;
    d %= 2.0 * PI;
    if d > PI {
        d -= 2.0 * PI;
    } else if d <= -PI {
        d += 2.0 * PI;
    }
    d
}

/// Quintic smoothstep on `[0, 1]`, clamped outside.
pub fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
    }
}

/// Volume of the unit ball in dimension `m`.
pub fn unit_ball_volume(m: usize) -> f64 {
    use std::f64::consts::PI;
    match m {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * PI / m as f64 * unit_ball_volume(m - 2),
    }
}

/// Surface measure of the unit sphere `S^n`.
pub fn sphere_measure(n: usize) -> f64 {
    (n as f64 + 1.0) * unit_ball_volume(n + 1)
}
