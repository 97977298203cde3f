use super::{FemError, MaterialParams};

/// Characteristic scales mapping dimensional variables to non-dimensional
/// ones: `x' = x / L`, `t' = t / t_c`, `T' = (T - T_inf) / dT_c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaling {
    pub length: f64,
    pub time: f64,
    pub delta_t: f64,
    pub ambient: f64,
}

impl Scaling {
    pub fn with_ambient(self, ambient: f64) -> Self {
        Scaling { ambient, ..self }
    }

    pub fn length_to_nondim(&self, x: f64) -> f64 {
        x / self.length
    }

    pub fn length_from_nondim(&self, x: f64) -> f64 {
        x * self.length
    }

    pub fn time_to_nondim(&self, t: f64) -> f64 {
        t / self.time
    }

    pub fn time_from_nondim(&self, t: f64) -> f64 {
        t * self.time
    }

    pub fn temperature_to_nondim(&self, t: f64) -> f64 {
        (t - self.ambient) / self.delta_t
    }

    pub fn temperature_from_nondim(&self, t: f64) -> f64 {
        t * self.delta_t + self.ambient
    }
}

/// Non-dimensional material with diffusivity `kappa t_c / (rho cp L^2)` and
/// unit density and heat capacity, plus the scales used.
pub fn nondimensionalize(
    kappa: f64,
    rho: f64,
    cp: f64,
    length: f64,
    time: f64,
    delta_t: f64,
) -> Result<(MaterialParams, Scaling), FemError> {
    for (name, v) in [
        ("kappa", kappa),
        ("rho", rho),
        ("cp", cp),
        ("length", length),
        ("time", time),
        ("delta_t", delta_t),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(FemError::InvalidMaterial(format!("{name} must be positive, got {v}")));
        }
    }
    let alpha = kappa * time / (rho * cp * length * length);
    Ok((
        MaterialParams::from_alpha(alpha)?,
        Scaling {
            length,
            time,
            delta_t,
            ambient: 0.0,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_inputs_give_unit_alpha() {
        let (m, _) = nondimensionalize(1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(m.alpha(), 1.0);
    }

    #[test]
    fn alpha_formula() {
        // steel-like values over a 10 mm part and a 2 s time scale
        let (m, _) = nondimensionalize(45.0, 7850.0, 490.0, 0.01, 2.0, 100.0).unwrap();
        let expect = 45.0 * 2.0 / (7850.0 * 490.0 * 1e-4);
        assert!((m.alpha() - expect).abs() < 1e-15 * expect);
        assert_eq!(m.kappa, m.alpha());
    }

    #[test]
    fn mappings_invert() {
        let (_, s) = nondimensionalize(1.0, 2.0, 3.0, 0.5, 7.0, 180.0).unwrap();
        let s = s.with_ambient(25.0);
        for v in [-3.0, 0.0, 1.7, 210.0] {
            assert!((s.temperature_from_nondim(s.temperature_to_nondim(v)) - v).abs() < 1e-12);
            assert!((s.length_from_nondim(s.length_to_nondim(v)) - v).abs() < 1e-12);
            assert!((s.time_from_nondim(s.time_to_nondim(v)) - v).abs() < 1e-12);
        }
        assert_eq!(s.temperature_to_nondim(25.0), 0.0);
        assert_eq!(s.temperature_to_nondim(205.0), 1.0);
    }

    #[test]
    fn rejects_non_positive() {
        assert!(nondimensionalize(0.0, 1.0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(nondimensionalize(1.0, 1.0, 1.0, -1.0, 1.0, 1.0).is_err());
    }
}
