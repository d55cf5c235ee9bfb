use super::PipelineError;
use serde::Serialize;

/// Which model map a profile belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ProfileKind {
    Thickening,
    /// Shrinking ansatz with `lim phi(s) s = theta r` and the root
    /// `sqrt(1 + gamma)` of `phi(tau sqrt(1 + gamma)) tau = r`.
    Shrinking {
        tau: f64,
        theta: f64,
        gamma: f64,
    },
}

/// Radial profile `phi` on `(0, 1]` with `phi = 1` on `[rho, 1]` and
/// `g(s) = phi(s) s = lim + a / (ln(rho / s) + kappa) + b s` below `rho`,
/// i.e. `phi(s) = (lim / s)(1 + c / ln(1 / s) + ...)` near zero. With
/// `kappa = min(1/2, 1 - lim / rho)`, `a` and `b >= 0` make `g` continuous
/// with unit slope at `rho`; a small `kappa` keeps the logarithmic
/// correction `a / lim = kappa^2 / (1 - kappa)` small.
#[derive(Debug, Clone, Serialize)]
pub struct RadialProfile {
    pub kind: ProfileKind,
    pub r: f64,
    pub rho: f64,
    /// `lim_{s -> 0} phi(s) s`.
    pub limit: f64,
    a: f64,
    kappa: f64,
    b: f64,
    pub certificate: ProfileCertificate,
}

/// Numerical checks of the profile on a log grid of `[1e-8, 1]`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ProfileCertificate {
    pub identity_beyond_rho: bool,
    pub strictly_increasing: bool,
    /// `|phi(1e-8) 1e-8 - lim| / lim`.
    pub limit_error: f64,
    /// `max s^{j+1} |phi^{(j)}(s)|` for `j = 0, 1, 2`.
    pub derivative_constants: [f64; 3],
    pub beta: f64,
    /// `min J(s) s^beta` with `J = phi^{m-1} (phi s)'` the Jacobian of the
    /// radial map.
    pub jacobian_floor: f64,
}

const GRID_POINTS: usize = 4001;

impl RadialProfile {
    fn build(kind: ProfileKind, r: f64, rho: f64, limit: f64) -> Self {
        let kappa = f64::min(0.5, 1.0 - limit / rho);
        let a = limit * kappa * kappa / (1.0 - kappa);
        let b = 1.0 - a / (rho * kappa * kappa);
        Self {
            kind,
            r,
            rho,
            limit,
            a,
            kappa,
            b,
            certificate: ProfileCertificate::default(),
        }
    }

    /// Profile for the thickening model: `lim phi(s) s = r`.
    pub fn thickening(r: f64, rho: f64, m: usize) -> Result<Self, PipelineError> {
        if !(0.0 < r && r < rho && rho < 1.0) {
            return Err(PipelineError::InvalidProfile(format!(
                "need 0 < r < rho < 1, got r = {r}, rho = {rho}"
            )));
        }
        let mut p = Self::build(ProfileKind::Thickening, r, rho, r);
        p.certificate = p.certify(m)?;
        Ok(p)
    }

    /// Profile for the shrinking model: `lim phi(s) s = theta r`, then
    /// `gamma` from `phi(tau sqrt(1 + gamma)) tau = r` by bisection on
    /// `(theta, 1 / tau)`.
    pub fn shrinking(r: f64, rho: f64, tau: f64, theta: f64, m: usize) -> Result<Self, PipelineError> {
        if !(0.0 < tau && tau < r && r < rho && rho < 1.0) {
            return Err(PipelineError::InvalidProfile(format!(
                "need 0 < tau < r < rho < 1, got tau = {tau}, r = {r}, rho = {rho}"
            )));
        }
        if !(1.0 < theta && theta < 1.0 / r && theta * r < rho) {
            return Err(PipelineError::NoRoot(format!(
                "theta = {theta} must satisfy 1 < theta < 1/r and theta r < rho"
            )));
        }
        let mut p = Self::build(ProfileKind::Shrinking { tau, theta, gamma: 0.0 }, r, rho, theta * r);
        let f = |x: f64| p.phi(tau * x) * tau - r;
        let (mut lo, mut hi) = (theta, 1.0 / tau);
        if !(f(lo) > 0.0 && f(hi) < 0.0) {
            return Err(PipelineError::NoRoot(format!(
                "bracket [{lo}, {hi}] gives values {} and {}",
                f(lo),
                f(hi)
            )));
        }
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let root = 0.5 * (lo + hi);
        if !(theta < root && root < 1.0 / tau) {
            return Err(PipelineError::NoRoot(format!("root {root} outside (theta, 1/tau)")));
        }
        p.kind = ProfileKind::Shrinking {
            tau,
            theta,
            gamma: root * root - 1.0,
        };
        p.certificate = p.certify(m)?;
        Ok(p)
    }

    /// `g(s) = phi(s) s`.
    pub fn g(&self, s: f64) -> f64 {
        if s >= self.rho {
            s
        } else if s <= 0.0 {
            self.limit
        } else {
            self.limit + self.a / ((self.rho / s).ln() + self.kappa) + self.b * s
        }
    }

    fn g_derivatives(&self, s: f64) -> (f64, f64, f64) {
        if s >= self.rho {
            return (s, 1.0, 0.0);
        }
        let l = (self.rho / s).ln() + self.kappa;
        let g = self.limit + self.a / l + self.b * s;
        let g1 = self.a / (s * l * l) + self.b;
        let g2 = self.a * (2.0 - l) / (s * s * l * l * l);
        (g, g1, g2)
    }

    pub fn phi(&self, s: f64) -> f64 {
        if s >= self.rho {
            1.0
        } else {
            self.g(s) / s
        }
    }

    /// `(phi, phi', phi'')` at `s > 0`.
    pub fn phi_derivatives(&self, s: f64) -> (f64, f64, f64) {
        let (g, g1, g2) = self.g_derivatives(s);
        (
            g / s,
            g1 / s - g / (s * s),
            g2 / s - 2.0 * g1 / (s * s) + 2.0 * g / (s * s * s),
        )
    }

    fn certify(&self, m: usize) -> Result<ProfileCertificate, PipelineError> {
        let grid: Vec<f64> = (0..GRID_POINTS)
            .map(|i| 10f64.powf(-8.0 + 8.0 * i as f64 / (GRID_POINTS - 1) as f64))
            .collect();
        let identity = grid.iter().filter(|&&s| s >= self.rho).all(|&s| self.phi(s) == 1.0);
        let increasing = grid.windows(2).all(|w| self.g(w[1]) > self.g(w[0]));
        let limit_error = (self.g(1e-8) - self.limit).abs() / self.limit;
        let mut consts = [0.0f64; 3];
        let beta = m as f64 - 0.5;
        let mut floor = f64::INFINITY;
        for &s in &grid {
            let (p0, p1, p2) = self.phi_derivatives(s);
            consts[0] = consts[0].max(s * p0.abs());
            consts[1] = consts[1].max(s * s * p1.abs());
            consts[2] = consts[2].max(s * s * s * p2.abs());
            if s < self.rho {
                let (_, g1, _) = self.g_derivatives(s);
                floor = floor.min(p0.powi(m as i32 - 1) * g1 * s.powf(beta));
            }
        }
        let cert = ProfileCertificate {
            identity_beyond_rho: identity,
            strictly_increasing: increasing,
            limit_error,
            derivative_constants: consts,
            beta,
            jacobian_floor: floor,
        };
        if !(identity && increasing && limit_error <= 0.1 && consts.iter().all(|c| c.is_finite()) && floor > 0.0) {
            return Err(PipelineError::InvalidProfile(format!("certificate failed: {cert:?}")));
        }
        Ok(cert)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_difference_quotients() {
        let p = RadialProfile::thickening(0.2, 0.4, 2).unwrap();
        for s in [1e-3, 0.05, 0.2, 0.39] {
            let e = 1e-6 * s;
            let (_, d1, d2) = p.phi_derivatives(s);
            let fd1 = (p.phi(s + e) - p.phi(s - e)) / (2.0 * e);
            let fd2 = (p.phi_derivatives(s + e).1 - p.phi_derivatives(s - e).1) / (2.0 * e);
            assert!((fd1 - d1).abs() <= 1e-5 * d1.abs().max(1.0), "{s}: {fd1} {d1}");
            assert!((fd2 - d2).abs() <= 1e-4 * d2.abs().max(1.0), "{s}: {fd2} {d2}");
        }
    }

    #[test]
    fn continuous_with_unit_slope_at_rho() {
        for (r, rho) in [(0.1, 0.3), (0.1, 0.4), (0.9375, 0.96875)] {
            let p = RadialProfile::thickening(r, rho, 3).unwrap();
            let (g, g1, _) = p.g_derivatives(rho - 1e-12);
            assert!((g - rho).abs() < 1e-9 && (g1 - 1.0).abs() < 1e-9, "{r} {rho}");
        }
    }

    #[test]
    fn shrinking_root_inside_bracket() {
        let p = RadialProfile::shrinking(0.2, 0.4, 0.05, 1.5, 2).unwrap();
        if let ProfileKind::Shrinking { tau, theta, gamma } = p.kind {
            let x = (1.0 + gamma).sqrt();
            assert!(theta < x && x < 1.0 / tau);
            assert!((p.phi(tau * x) * tau - 0.2).abs() < 1e-9);
        } else {
            panic!();
        }
        assert!(matches!(
            RadialProfile::shrinking(0.2, 0.3, 0.05, 1.5, 2),
            Err(PipelineError::NoRoot(_))
        ));
    }
}
