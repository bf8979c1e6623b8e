use super::{nonmonotone_condition, positive, rail_clamp, SaturationParams};
use crate::error::{Error, Result};
use crate::pwl::{contains_zero, grad_proj_near, BranchPoint, PwlInterval, Stability};

/// Saturation stage whose output is summed with its own input on a
/// three-resistor node: `r_a1` from the input, `r_a2` from the saturation
/// output, `r_s` to ground.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonMonotoneParams {
    pub sat: SaturationParams,
    pub r_a1: f64,
    pub r_a2: f64,
    pub r_s: f64,
}

/// Local maximum and minimum of the characteristic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonMonotoneExtrema {
    pub max_point: BranchPoint,
    pub min_point: BranchPoint,
}

impl NonMonotoneParams {
    pub fn validate(&self) -> Result<()> {
        self.sat.validate()?;
        positive("r_a1", self.r_a1)?;
        positive("r_a2", self.r_a2)?;
        positive("r_s", self.r_s)
    }

    /// Superposition weights `(g2, g3)` of the summing node: `g2` multiplies
    /// the saturation output, `g3` the input.
    pub fn gains(&self) -> (f64, f64) {
        let (ra1, ra2, rs) = (self.r_a1, self.r_a2, self.r_s);
        if rs.is_infinite() {
            return (ra1 / (ra1 + ra2), ra2 / (ra1 + ra2));
        }
        let den = rs * (ra1 + ra2) + ra1 * ra2;
        (rs * ra1 / den, rs * ra2 / den)
    }

    pub fn condition(&self) -> bool {
        let (g2, g3) = self.gains();
        nonmonotone_condition(self.sat.gain(), g2, g3)
    }

    pub fn eval(&self, v_y: f64) -> f64 {
        let v_y = rail_clamp(v_y, self.sat.v_cc);
        let (g2, g3) = self.gains();
        g2 * self.sat.eval(v_y) + g3 * v_y
    }

    /// Chain-rule generalized gradient `g3 - g1 g2 Psi` at `v_y`.
    pub fn gradient(&self, v_y: f64) -> crate::pwl::GradInterval {
        let (g2, g3) = self.gains();
        let g1 = self.sat.gain();
        let arg = g1 * (v_y - self.sat.threshold());
        grad_proj_near(arg, PwlInterval::saturation(self.sat.swing()), 1e-12)
            .scale(-g1 * g2)
            .shift(g3)
    }

    /// Closed-form extrema, each checked against the non-smooth stationarity
    /// condition.
    pub fn extrema(&self) -> Result<NonMonotoneExtrema> {
        let (g2, g3) = self.gains();
        let g1 = self.sat.gain();
        if !(g1 * g2 > g3) {
            return Err(Error::NotNonMonotone { g1g2: g1 * g2, g3 });
        }
        let [lo, hi] = self.sat.breakpoints();
        for v in [lo, hi] {
            if !contains_zero(self.gradient(v)) {
                return Err(Error::NotNonMonotone { g1g2: g1 * g2, g3 });
            }
        }
        Ok(NonMonotoneExtrema {
            max_point: BranchPoint { input: lo, output: self.eval(lo), stability: Stability::Fold },
            min_point: BranchPoint { input: hi, output: self.eval(hi), stability: Stability::Fold },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::TransistorModel;
    use approx::assert_abs_diff_eq;

    fn reference() -> NonMonotoneParams {
        NonMonotoneParams {
            sat: SaturationParams::new(100e3, 16e3, 10e3, 5.0, TransistorModel::default()),
            r_a1: 100e3,
            r_a2: 33e3,
            r_s: 220e3,
        }
    }

    // Node equation of the summing node solved directly.
    fn nodal(v1: f64, vy: f64, p: &NonMonotoneParams) -> f64 {
        (vy / p.r_a1 + v1 / p.r_a2) / (1.0 / p.r_a1 + 1.0 / p.r_a2 + 1.0 / p.r_s)
    }

    #[test]
    fn gains_match_nodal_analysis() {
        let p = reference();
        let (g2, g3) = p.gains();
        assert_abs_diff_eq!(g2, nodal(1.0, 0.0, &p), epsilon = 1e-12);
        assert_abs_diff_eq!(g3, nodal(0.0, 1.0, &p), epsilon = 1e-12);
        assert_abs_diff_eq!(g2, 0.6757, epsilon = 1e-4);
        assert_abs_diff_eq!(g3, 0.2230, epsilon = 1e-4);
    }

    #[test]
    fn gain_limits() {
        let mut p = reference();
        p.r_s = f64::INFINITY;
        let (g2, g3) = p.gains();
        assert_abs_diff_eq!(g2 + g3, 1.0, epsilon = 1e-12);
        p.r_s = 1e15;
        let (g2, g3) = p.gains();
        assert_abs_diff_eq!(g2 + g3, 1.0, epsilon = 1e-9);
        p.r_a2 = p.r_a1;
        let (g2, g3) = p.gains();
        assert_abs_diff_eq!(g2, g3, epsilon = 1e-15);
    }

    #[test]
    fn characteristic_points() {
        let p = reference();
        let (g2, g3) = p.gains();
        assert_abs_diff_eq!(p.eval(0.0), g2 * 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.eval(0.0), 3.3785, epsilon = 2e-4);
        assert_abs_diff_eq!(p.eval(0.6), 3.512, epsilon = 1e-3);
        assert_abs_diff_eq!(p.eval(5.0), (g2 + g3) * 5.0 - g2 * p.sat.swing(), epsilon = 1e-12);
    }

    #[test]
    fn condition_cases() {
        assert!(reference().condition());
        assert!(!nonmonotone_condition(1.0, 0.1, 0.5));
        assert!(nonmonotone_condition(1.0, 0.5, 0.5));
    }

    #[test]
    fn extrema_locations() {
        let e = reference().extrema().unwrap();
        assert_eq!(e.max_point.input, 0.6);
        assert_abs_diff_eq!(e.min_point.input, 2.692, epsilon = 2e-3);
        assert!((e.min_point.input - 2.5).abs() < 0.25);
    }

    #[test]
    fn slope_pattern() {
        let p = reference();
        let (g2, g3) = p.gains();
        let g1 = p.sat.gain();
        for (v, want) in [(0.3, g3), (1.5, g3 - g1 * g2), (4.0, g3)] {
            let s = (p.eval(v + 1e-6) - p.eval(v - 1e-6)) / 2e-6;
            assert_abs_diff_eq!(s, want, epsilon = 1e-6);
        }
    }

    #[test]
    fn monotone_design_rejected() {
        let mut p = reference();
        p.r_a1 = 1e3;
        assert!(matches!(p.extrema(), Err(Error::NotNonMonotone { .. })));
    }
}
