use super::{positive, rail_clamp, TransistorModel, THERMAL_VOLTAGE};
use crate::error::{Error, Result};
use crate::pwl::{proj, PwlInterval};

const DIODE_IS: f64 = 1e-14;
const BISECTION_LIMIT: usize = 200;

/// Common-emitter stage with base, collector and emitter resistors.
///
/// `r_bias` optionally pulls the emitter up to the supply, which biases the
/// emitter at the Thévenin voltage of the `r_e`/`r_bias` divider.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaturationParams {
    pub r_b: f64,
    pub r_c: f64,
    pub r_e: f64,
    pub v_cc: f64,
    pub model: TransistorModel,
    pub r_bias: Option<f64>,
}

impl SaturationParams {
    pub fn new(r_b: f64, r_c: f64, r_e: f64, v_cc: f64, model: TransistorModel) -> Self {
        Self { r_b, r_c, r_e, v_cc, model, r_bias: None }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.r_b < 0.0 {
            return Err(Error::InvalidParameter(format!("r_b must be non-negative, got {}", self.r_b)));
        }
        positive("r_c", self.r_c)?;
        positive("r_e", self.r_e)?;
        if let Some(r) = self.r_bias {
            positive("r_bias", r)?;
        }
        if !(self.v_cc > self.model.v_ce_sat) {
            return Err(Error::InvalidParameter("v_cc must exceed v_ce_sat".into()));
        }
        Ok(())
    }

    /// Emitter Thévenin resistance and open-circuit voltage.
    pub fn emitter_thevenin(&self) -> (f64, f64) {
        match self.r_bias {
            Some(rb) => (self.r_e * rb / (self.r_e + rb), self.v_cc * self.r_e / (self.r_e + rb)),
            None => (self.r_e, 0.0),
        }
    }

    /// Slope `g1` of the active region.
    pub fn gain(&self) -> f64 {
        let (r_e, _) = self.emitter_thevenin();
        let b = self.model.beta;
        b * self.r_c / (self.r_b + (b + 1.0) * r_e)
    }

    /// Output swing `vs1` between cut-off and saturation.
    pub fn swing(&self) -> f64 {
        let (r_e, v_e) = self.emitter_thevenin();
        (self.v_cc - self.model.v_ce_sat - v_e) * self.r_c / (self.r_c + r_e)
    }

    /// `(g1, vs1)`.
    pub fn gains(&self) -> (f64, f64) {
        (self.gain(), self.swing())
    }

    /// Input voltage at which the junction starts to conduct.
    pub fn threshold(&self) -> f64 {
        self.model.v_on + self.emitter_thevenin().1
    }

    /// Input voltages of the two corners of the characteristic.
    pub fn breakpoints(&self) -> [f64; 2] {
        let t = self.threshold();
        [t, t + self.swing() / self.gain()]
    }

    /// Piecewise-linear collector voltage for base drive `v_in`.
    pub fn eval(&self, v_in: f64) -> f64 {
        let v = rail_clamp(v_in, self.v_cc);
        self.v_cc - proj(self.gain() * (v - self.threshold()), PwlInterval::saturation(self.swing()))
    }

    /// Base current drawn by the piecewise-linear stage.
    pub fn base_current(&self, v_in: f64) -> f64 {
        let (r_e, _) = self.emitter_thevenin();
        let b = self.model.beta;
        ((v_in - self.threshold()) / (self.r_b + (b + 1.0) * r_e)).max(0.0)
    }

    /// Collector voltage of the same stage with an exponential base junction.
    ///
    /// Collector current follows `I_s (exp(v_be / V_T) - 1)` and the base
    /// carries `1/beta` of it; in saturation the collector is pinned
    /// `v_ce_sat` above the emitter. Solved by bisection on the base current.
    pub fn smooth_ce_oracle(&self, v_in: f64) -> Result<f64> {
        let v_in = rail_clamp(v_in, self.v_cc);
        let (r_e, v_eb) = self.emitter_thevenin();
        let b = self.model.beta;
        let vce_sat = self.model.v_ce_sat;
        let v_be = |ib: f64| THERMAL_VOLTAGE * (1.0 + b * ib / DIODE_IS).ln();

        // Active region: v_in = r_b i_b + v_be + v_eb + r_e (b + 1) i_b
        let active = |ib: f64| self.r_b * ib + v_be(ib) + v_eb + r_e * (b + 1.0) * ib - v_in;
        let hi = (v_in / (self.r_b + r_e)).max(1e-3);
        let ib = bisect(active, 0.0, hi)?;
        let v_e = v_eb + r_e * (b + 1.0) * ib;
        let v_c = self.v_cc - self.r_c * b * ib;
        if v_c - v_e >= vce_sat {
            return Ok(v_c);
        }
        // Saturated: i_c = (v_cc - v_e - vce_sat) / r_c, emitter node carries i_b + i_c.
        let emitter = |ib: f64| {
            let g = 1.0 / r_e + 1.0 / self.r_c;
            (v_eb / r_e + ib + (self.v_cc - vce_sat) / self.r_c) / g
        };
        let sat = |ib: f64| self.r_b * ib + v_be(ib) + emitter(ib) - v_in;
        let ib = bisect(sat, 0.0, hi)?;
        Ok(emitter(ib) + vce_sat)
    }
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> Result<f64> {
    if f(lo) >= 0.0 {
        return Ok(lo);
    }
    let mut grow = 0;
    while f(hi) < 0.0 {
        hi *= 2.0;
        grow += 1;
        if grow > 60 {
            return Err(Error::NoConvergence(BISECTION_LIMIT));
        }
    }
    for _ in 0..BISECTION_LIMIT {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-18 + 1e-14 * hi {
            return Ok(0.5 * (lo + hi));
        }
    }
    Err(Error::NoConvergence(BISECTION_LIMIT))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn reference() -> SaturationParams {
        SaturationParams::new(100e3, 16e3, 10e3, 5.0, TransistorModel::default())
    }

    #[test]
    fn reference_gains() {
        let (g1, vs1) = reference().gains();
        // 100*16k / (100k + 101*10k) and 4.9*16/26
        assert_abs_diff_eq!(g1, 1.6e6 / 1.11e6, epsilon = 1e-12);
        assert_abs_diff_eq!(g1, 1.4414, epsilon = 1e-4);
        assert_abs_diff_eq!(vs1, 3.0154, epsilon = 1e-4);
    }

    #[test]
    fn small_base_resistor_limit() {
        let p = SaturationParams::new(1e-9, 10e3, 10e3, 5.0, TransistorModel::default());
        assert_abs_diff_eq!(p.gain(), 100.0 / 101.0, epsilon = 1e-9);
    }

    #[test]
    fn characteristic_values() {
        let p = reference();
        assert_eq!(p.eval(0.3), 5.0);
        assert_abs_diff_eq!(p.eval(1.0), 5.0 - 1.6e6 / 1.11e6 * 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(p.eval(1.0), 4.4234, epsilon = 1e-4);
        assert_abs_diff_eq!(p.eval(5.0), 1.9846, epsilon = 1e-4);
    }

    #[test]
    fn oracle_tracks_pwl() {
        let p = reference();
        assert_abs_diff_eq!(p.smooth_ce_oracle(0.0).unwrap(), 5.0, epsilon = 1e-9);
        assert!((p.smooth_ce_oracle(1.0).unwrap() - p.eval(1.0)).abs() <= 0.15);
        assert!((p.smooth_ce_oracle(5.0).unwrap() - p.eval(5.0)).abs() <= 0.15);
    }

    #[test]
    fn biased_emitter_shifts_threshold() {
        let mut p = SaturationParams::new(0.0, 200.0, 20.0, 5.0, TransistorModel::default());
        p.r_bias = Some(150.0);
        assert_abs_diff_eq!(p.threshold(), 0.6 + 5.0 * 20.0 / 170.0, epsilon = 1e-12);
        assert_eq!(p.eval(1.0), 5.0);
        assert!(p.eval(1.3) < 5.0);
    }
}
