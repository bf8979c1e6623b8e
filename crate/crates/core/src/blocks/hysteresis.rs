use super::{positive, rail_clamp, TransistorModel};
use crate::error::Result;
use crate::pwl::{
    all_roots, implicit_solve, proj, root_stability, BranchPoint, PwlInterval, Stability,
};

/// Differential pair closed on itself: the output collector drives the
/// inverting base through `r_b5`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HysteresisParams {
    /// Base resistor on the input side.
    pub r_b4: f64,
    /// Feedback base resistor.
    pub r_b5: f64,
    pub r_e: f64,
    /// Collector resistor of the output transistor.
    pub r_c4: f64,
    /// Collector resistor of the feedback transistor (complement output).
    pub r_c5: f64,
    pub v_cc: f64,
    pub model: TransistorModel,
    /// Replaces the computed feedback gain, for probing the bistability condition.
    pub g7_override: Option<f64>,
}

/// Fold points at the two ends of the bistable window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HysteresisCorners {
    /// Upper branch ends here (`v_x = v_cc`).
    pub upper: BranchPoint,
    /// Lower branch ends here (`v_x = v_cc - vs3`).
    pub lower: BranchPoint,
}

impl HysteresisParams {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        for (n, v) in [
            ("r_b4", self.r_b4),
            ("r_b5", self.r_b5),
            ("r_e", self.r_e),
            ("r_c4", self.r_c4),
            ("r_c5", self.r_c5),
        ] {
            positive(n, v)?;
        }
        Ok(())
    }

    fn re_bar(&self) -> f64 {
        (self.model.beta + 1.0) * self.r_e
    }

    /// `(g6, g7, vs3)`.
    pub fn gains(&self) -> (f64, f64, f64) {
        let re = self.re_bar();
        let d = re * (self.r_b4 + self.r_b5) + self.r_b4 * self.r_b5;
        let rc = self.model.beta * self.r_c4;
        let g6 = rc * (re + self.r_b5) / d;
        let g7 = self.g7_override.unwrap_or(rc * re / d);
        // Swing at the upper fold, where the feedback transistor is just off.
        let vs3 = rc / (re + rc) * (self.v_cc - self.model.v_ce_sat);
        (g6, g7, vs3)
    }

    pub fn bistable(&self) -> bool {
        self.gains().1 > 1.0
    }

    /// Residual `F(v5, vx)`.
    pub fn residual(&self, v5: f64, vx: f64) -> f64 {
        let (g6, g7, vs3) = self.gains();
        let von = self.model.v_on;
        vx - self.v_cc + proj(g6 * (v5 - von) - g7 * (vx - von), PwlInterval::saturation(vs3))
    }

    /// Values of `vx` where the projection argument hits either end of its set.
    pub fn breakpoints(&self, v5: f64) -> [f64; 2] {
        let (g6, g7, vs3) = self.gains();
        let von = self.model.v_on;
        if g7 == 0.0 {
            return [f64::NAN, f64::NAN];
        }
        let base = von + g6 * (v5 - von) / g7;
        [base - vs3 / g7, base]
    }

    fn range(&self) -> PwlInterval {
        PwlInterval::saturation(self.v_cc)
    }

    /// Output for input `v5`, continuing the branch nearest to `seed`.
    pub fn solve(&self, v5: f64, seed: f64) -> Result<f64> {
        let v5 = rail_clamp(v5, self.v_cc);
        implicit_solve(|a, z| self.residual(a, z), v5, seed, self.range(), &self.breakpoints(v5))
    }

    /// Every equilibrium of the block at `v5`, labelled.
    pub fn branches(&self, v5: f64) -> Vec<BranchPoint> {
        all_roots(|a, z| self.residual(a, z), v5, self.range(), &self.breakpoints(v5))
            .into_iter()
            .map(|z| BranchPoint { input: v5, output: z, stability: self.stability(v5, z) })
            .collect()
    }

    pub fn stability(&self, v5: f64, vx: f64) -> Stability {
        root_stability(|a, z| self.residual(a, z), v5, vx, 1e-7)
    }

    /// The two singular points, derived from `F = 0` on each boundary of the
    /// saturation set.
    pub fn corners(&self) -> HysteresisCorners {
        let (g6, g7, vs3) = self.gains();
        let (von, vcc) = (self.model.v_on, self.v_cc);
        let upper_v5 = von + g7 * (vcc - von) / g6;
        let lower_v5 = von + (g7 * (vcc - vs3 - von) + vs3) / g6;
        HysteresisCorners {
            upper: BranchPoint { input: upper_v5, output: vcc, stability: Stability::Fold },
            lower: BranchPoint { input: lower_v5, output: vcc - vs3, stability: Stability::Fold },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pwl::{contains_zero, grad_proj_near};
    use approx::assert_abs_diff_eq;

    pub(crate) fn reference() -> HysteresisParams {
        HysteresisParams {
            r_b4: 2.4e3,
            r_b5: 6e3,
            r_e: 240.0,
            r_c4: 820.0,
            r_c5: 240.0,
            v_cc: 5.0,
            model: TransistorModel::default(),
            g7_override: None,
        }
    }

    #[test]
    fn reference_gains() {
        let p = reference();
        let (g6, g7, vs3) = p.gains();
        assert_abs_diff_eq!(g6, 11.37, epsilon = 0.01);
        assert_abs_diff_eq!(g7, 9.12, epsilon = 0.01);
        assert_abs_diff_eq!(vs3, 3.782, epsilon = 1e-3);
        assert!(p.bistable());
        // The complement collector resistor gives the smaller feedback gain.
        let q = HysteresisParams { r_c4: 240.0, ..p };
        assert_abs_diff_eq!(q.gains().1, 2.67, epsilon = 0.01);
    }

    #[test]
    fn branch_selection_by_seed() {
        let p = reference();
        let c = p.corners();
        let v5 = 0.5 * (c.upper.input + c.lower.input);
        assert_abs_diff_eq!(p.solve(v5, 4.9).unwrap(), 5.0, epsilon = 1e-9);
        let (_, _, vs3) = p.gains();
        assert_abs_diff_eq!(p.solve(v5, 1.3).unwrap(), 5.0 - vs3, epsilon = 1e-9);
        let b = p.branches(v5);
        assert_eq!(b.len(), 3);
        assert_eq!(b[1].stability, Stability::Unstable);
        assert_eq!(b[0].stability, Stability::Stable);
    }

    #[test]
    fn low_input_gives_supply() {
        let p = reference();
        assert_abs_diff_eq!(p.solve(0.2, 0.0).unwrap(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn corners_are_singular() {
        let p = reference();
        let (g6, g7, vs3) = p.gains();
        let c = p.corners();
        for corner in [c.upper, c.lower] {
            assert!(p.residual(corner.input, corner.output).abs() < 1e-9);
            let arg = g6 * (corner.input - 0.6) - g7 * (corner.output - 0.6);
            let grad = grad_proj_near(arg, PwlInterval::saturation(vs3), 1e-12).scale(-g7).shift(1.0);
            assert!(contains_zero(grad));
        }
        assert!(c.lower.input < c.upper.input);
    }

    #[test]
    fn weak_feedback_is_single_valued() {
        let p = HysteresisParams { g7_override: Some(0.5), ..reference() };
        for i in 0..=100 {
            assert_eq!(p.branches(0.05 * i as f64).len(), 1);
        }
    }
}
