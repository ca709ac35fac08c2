//! Derived jet quantities.

use std::f64::consts::PI;

use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JetCharge {
    pub value: f64,
    /// Set when every weight vanished and the charge was defined as 0.
    pub degenerate: bool,
}

/// `Q = sum(p_T * q) / sum(p_T)` over `(q, p_T)` pairs.
pub fn jet_charge(particles: &[(f64, f64)]) -> JetCharge {
    let (num, den) = particles
        .iter()
        .filter(|(_, pt)| *pt > 0.0)
        .fold((0.0, 0.0), |(n, d), &(q, pt)| (n + pt * q, d + pt));
    if den > 0.0 {
        JetCharge {
            value: (num / den).clamp(-1.0, 1.0),
            degenerate: false,
        }
    } else {
        JetCharge {
            value: 0.0,
            degenerate: true,
        }
    }
}

/// `eta = -ln tan(theta / 2)` for `theta` strictly inside `(0, pi)`.
pub fn pseudorapidity(theta: f64) -> Result<f64, DataError> {
    if !(theta > 0.0 && theta < PI) {
        return Err(DataError::Domain(format!("polar angle {theta} outside (0, pi)")));
    }
    Ok(-(0.5 * theta).tan().ln())
}

/// Wraps an azimuthal difference into `(-pi, pi]`.
pub fn wrap_phi(dphi: f64) -> f64 {
    let mut x = dphi.rem_euclid(2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    }
    x
}

/// Euclidean distance in `(eta, phi)`. `dphi` is taken as given; pass it
/// through [`wrap_phi`] first when it may exceed the principal range.
pub fn delta_r(deta: f64, dphi: f64) -> f64 {
    deta.hypot(dphi)
}
