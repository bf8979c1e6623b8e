use super::{positive, rail_clamp, TransistorModel};
use crate::error::{Error, Result};
use crate::pwl::{proj, PwlInterval};

const MODE_TOL: f64 = 1e-12;

/// Region of operation of a switch-level transistor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransistorMode {
    Cutoff,
    Active,
    Saturated,
}

impl TransistorMode {
    pub const ALL: [TransistorMode; 3] =
        [TransistorMode::Cutoff, TransistorMode::Active, TransistorMode::Saturated];
}

/// Emitter-coupled pair with a shared emitter resistor.
///
/// `r_b2`/`r_c2` belong to the transistor driven by the non-inverting input
/// (whose collector is the output), `r_b3`/`r_c3` to the inverting side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffAmpParams {
    pub r_b2: f64,
    pub r_b3: f64,
    pub r_e_shared: f64,
    pub r_c2: f64,
    pub r_c3: f64,
    pub v_cc: f64,
    pub model: TransistorModel,
}

/// Operating point of one side of the pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairOperatingPoint {
    pub mode: TransistorMode,
    pub v_c: f64,
    pub i_b: f64,
    pub i_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSolution {
    pub plus: PairOperatingPoint,
    pub minus: PairOperatingPoint,
    pub v_e: f64,
}

struct Side {
    v_in: f64,
    r_b: f64,
    r_c: f64,
    sink: f64,
}

impl DiffAmpParams {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        for (n, v) in [
            ("r_b2", self.r_b2),
            ("r_b3", self.r_b3),
            ("r_e_shared", self.r_e_shared),
            ("r_c2", self.r_c2),
            ("r_c3", self.r_c3),
        ] {
            positive(n, v)?;
        }
        Ok(())
    }

    fn re_bar(&self) -> f64 {
        (self.model.beta + 1.0) * self.r_e_shared
    }

    /// `(g4, g5, d)`.
    pub fn gains(&self) -> (f64, f64, f64) {
        let re = self.re_bar();
        let d = re * (self.r_b2 + self.r_b3) + self.r_b2 * self.r_b3;
        let rc = self.model.beta * self.r_c2;
        (rc * (re + self.r_b3) / d, rc * re / d, d)
    }

    /// Base currents of the linear model with both transistors conducting.
    pub fn base_currents(&self, v_plus: f64, v_minus: f64) -> (f64, f64) {
        let re = self.re_bar();
        let (_, _, d) = self.gains();
        let (a, b) = (v_plus - self.model.v_on, v_minus - self.model.v_on);
        (((re + self.r_b3) * a - re * b) / d, (-re * a + (re + self.r_b2) * b) / d)
    }

    /// Output swing `vs2` at the given inputs.
    pub fn swing(&self, v_plus: f64, v_minus: f64) -> f64 {
        let re = self.re_bar();
        let rc = self.model.beta * self.r_c2;
        let (_, ib3) = self.base_currents(v_plus, v_minus);
        let vs = rc / (re + rc) * (self.v_cc - self.model.v_ce_sat - re * ib3.max(0.0));
        vs.clamp(0.0, self.v_cc)
    }

    /// Whether the inverting-side transistor stays out of saturation, which is
    /// the domain of the closed-form characteristic.
    pub fn closed_form_valid(&self, v_plus: f64, v_minus: f64) -> bool {
        let re = self.re_bar();
        let (ib2, ib3) = self.base_currents(v_plus, v_minus);
        let rc3 = self.model.beta * self.r_c3;
        re * ib2 + (rc3 + re) * ib3 < self.v_cc - self.model.v_ce_sat
    }

    /// Closed-form characteristic `v_cc - proj(g4 (v+ - v_on) - g5 (v- - v_on), [0, vs2])`.
    pub fn eval_closed_form(&self, v_plus: f64, v_minus: f64) -> f64 {
        let (g4, g5, _) = self.gains();
        let von = self.model.v_on;
        let arg = g4 * (v_plus - von) - g5 * (v_minus - von);
        self.v_cc - proj(arg, PwlInterval::saturation(self.swing(v_plus, v_minus)))
    }

    /// Output voltage with every transistor region resolved.
    ///
    /// Agrees with [`eval_closed_form`](Self::eval_closed_form) wherever
    /// [`closed_form_valid`](Self::closed_form_valid) holds, and clamps the way
    /// the circuit does elsewhere.
    pub fn eval(&self, v_plus: f64, v_minus: f64) -> f64 {
        let v_plus = rail_clamp(v_plus, self.v_cc);
        let v_minus = rail_clamp(v_minus, self.v_cc);
        match self.solve_pair(v_plus, v_minus, 0.0) {
            Ok(s) => s.plus.v_c,
            Err(_) => self.eval_closed_form(v_plus, v_minus),
        }
    }

    /// Operating point of the pair. `sink` is an extra current drawn from the
    /// output collector node.
    pub fn solve_pair(&self, v_plus: f64, v_minus: f64, sink: f64) -> Result<PairSolution> {
        let a = Side { v_in: v_plus, r_b: self.r_b2, r_c: self.r_c2, sink };
        let b = Side { v_in: v_minus, r_b: self.r_b3, r_c: self.r_c3, sink: 0.0 };
        solve_emitter_pair(&a, &b, self.r_e_shared, self.v_cc, &self.model)
    }
}

// Emitter node balance for a mode pair, then a consistency check of each side.
fn solve_emitter_pair(
    a: &Side,
    b: &Side,
    r_e: f64,
    v_cc: f64,
    m: &TransistorModel,
) -> Result<PairSolution> {
    let beta = m.beta;
    // Emitter current of one side as c + k * v_e.
    let term = |mode: TransistorMode, s: &Side| -> (f64, f64) {
        match mode {
            TransistorMode::Cutoff => (0.0, 0.0),
            TransistorMode::Active => ((beta + 1.0) * (s.v_in - m.v_on) / s.r_b, -(beta + 1.0) / s.r_b),
            TransistorMode::Saturated => (
                (s.v_in - m.v_on) / s.r_b + (v_cc - m.v_ce_sat) / s.r_c - s.sink,
                -1.0 / s.r_b - 1.0 / s.r_c,
            ),
        }
    };
    let side = |mode: TransistorMode, s: &Side, v_e: f64| -> Option<PairOperatingPoint> {
        match mode {
            TransistorMode::Cutoff => {
                (s.v_in - v_e <= m.v_on + MODE_TOL).then(|| PairOperatingPoint {
                    mode,
                    v_c: v_cc - s.r_c * s.sink,
                    i_b: 0.0,
                    i_c: 0.0,
                })
            }
            TransistorMode::Active => {
                let i_b = (s.v_in - v_e - m.v_on) / s.r_b;
                let v_c = v_cc - s.r_c * (beta * i_b + s.sink);
                (i_b >= -MODE_TOL && v_c - v_e >= m.v_ce_sat - MODE_TOL)
                    .then_some(PairOperatingPoint { mode, v_c, i_b, i_c: beta * i_b })
            }
            TransistorMode::Saturated => {
                let i_b = (s.v_in - v_e - m.v_on) / s.r_b;
                let v_c = v_e + m.v_ce_sat;
                let i_c = (v_cc - v_c) / s.r_c - s.sink;
                (i_b >= -MODE_TOL && i_c >= -MODE_TOL && i_c <= beta * i_b + MODE_TOL)
                    .then_some(PairOperatingPoint { mode, v_c, i_b, i_c })
            }
        }
    };
    for ma in TransistorMode::ALL {
        for mb in TransistorMode::ALL {
            let (ca, ka) = term(ma, a);
            let (cb, kb) = term(mb, b);
            let v_e = (ca + cb) / (1.0 / r_e - ka - kb);
            if let (Some(plus), Some(minus)) = (side(ma, a, v_e), side(mb, b, v_e)) {
                return Ok(PairSolution { plus, minus, v_e });
            }
        }
    }
    Err(Error::NoOperatingPoint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn reference() -> DiffAmpParams {
        DiffAmpParams {
            r_b2: 1e3,
            r_b3: 1.2e3,
            r_e_shared: 470.0,
            r_c2: 4.7e3,
            r_c3: 4.7e3,
            v_cc: 5.0,
            model: TransistorModel::default(),
        }
    }

    #[test]
    fn reference_gains() {
        let (g4, g5, d) = reference().gains();
        assert_abs_diff_eq!(d, 105.634e6, epsilon = 1e3);
        assert_abs_diff_eq!(g4, 216.5, epsilon = 0.1);
        assert_abs_diff_eq!(g5, 211.2, epsilon = 0.1);
    }

    #[test]
    fn base_currents_solve_the_loop_equations() {
        let p = reference();
        let re = 101.0 * 470.0;
        let (v4, vz) = (1.5, 1.2);
        let (i2, i3) = p.base_currents(v4, vz);
        assert_abs_diff_eq!((1e3 + re) * i2 + re * i3, v4 - 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(re * i2 + (1.2e3 + re) * i3, vz - 0.6, epsilon = 1e-12);
    }

    #[test]
    fn closed_form_cases() {
        let p = reference();
        assert_eq!(p.eval_closed_form(0.9, 1.2), 5.0);
        let (g4, g5, _) = p.gains();
        let v = 0.61;
        let want = 5.0 - proj((g4 - g5) * (v - 0.6), PwlInterval::saturation(p.swing(v, v)));
        assert_abs_diff_eq!(p.eval_closed_form(v, v), want, epsilon = 1e-12);
    }

    #[test]
    fn pair_matches_closed_form_in_its_domain() {
        let p = reference();
        let mut checked = 0;
        for i in 0..=100 {
            for j in 0..=100 {
                let (v4, vz) = (0.5 + 0.01 * i as f64, 0.5 + 0.01 * j as f64);
                let s = p.solve_pair(v4, vz, 0.0).unwrap();
                if s.plus.mode != TransistorMode::Saturated
                    && s.minus.mode == TransistorMode::Active
                    && p.closed_form_valid(v4, vz)
                {
                    assert_abs_diff_eq!(p.eval(v4, vz), p.eval_closed_form(v4, vz), epsilon = 1e-9);
                    checked += 1;
                }
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn output_stays_on_rails() {
        let p = reference();
        for i in 0..=50 {
            for j in 0..=50 {
                let v = p.eval(0.1 * i as f64, 0.1 * j as f64);
                assert!((0.0..=5.0).contains(&v));
            }
        }
    }
}
