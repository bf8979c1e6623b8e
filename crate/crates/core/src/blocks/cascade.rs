use super::{DiffAmpParams, Gains, HysteresisParams, NonMonotoneParams};
use crate::error::{Error, Result};
use crate::pwl::{Stability, TOL_RES};

/// The three static blocks in series: non-monotone stage, modulating
/// differential pair, hysteresis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeParams {
    pub nonmonotone: NonMonotoneParams,
    pub diffamp: DiffAmpParams,
    pub hysteresis: HysteresisParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepDirection {
    Up,
    Down,
}

impl SweepDirection {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepDirection::Up => "up",
            SweepDirection::Down => "down",
        }
    }
}

impl std::str::FromStr for SweepDirection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "up" => Ok(SweepDirection::Up),
            "down" => Ok(SweepDirection::Down),
            _ => Err(Error::InvalidParameter(format!("direction must be up or down, got {s}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub input: f64,
    pub output: f64,
    /// `"upper"`, `"lower"` or `"middle"` part of the hysteresis characteristic.
    pub branch: &'static str,
    pub stability: Stability,
}

/// A static characteristic traced by continuation.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub direction: SweepDirection,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    /// Inputs between which the traced branch jumps, i.e. where the unstable
    /// branch lives.
    pub fn jumps(&self, threshold: f64) -> Vec<(f64, f64)> {
        self.points
            .windows(2)
            .filter(|w| (w[1].output - w[0].output).abs() > threshold)
            .map(|w| (w[0].input, w[1].input))
            .collect()
    }
}

impl CascadeParams {
    pub fn validate(&self) -> Result<()> {
        self.nonmonotone.validate()?;
        self.diffamp.validate()?;
        self.hysteresis.validate()
    }

    pub fn gains(&self) -> Gains {
        let sat = &self.nonmonotone.sat;
        let (g2, g3) = self.nonmonotone.gains();
        let (g4, g5, d) = self.diffamp.gains();
        let (g6, g7, vs3) = self.hysteresis.gains();
        let von = self.diffamp.model.v_on;
        Gains {
            g1: sat.gain(),
            g2,
            g3,
            g4,
            g5,
            g6,
            g7,
            vs1: sat.swing(),
            // Swing with both inputs at the turn-on voltage, where no base current flows.
            vs2: self.diffamp.swing(von, von),
            vs3,
            d,
        }
    }

    /// Input of the hysteresis block for a given `v_y` and `v_z`.
    pub fn drive(&self, v_y: f64, v_z: f64) -> f64 {
        self.diffamp.eval(self.nonmonotone.eval(v_y), v_z)
    }
}

fn branch_of(h: &HysteresisParams, vx: f64) -> &'static str {
    let (_, _, vs3) = h.gains();
    if (vx - h.v_cc).abs() <= 1e-9 {
        "upper"
    } else if (vx - (h.v_cc - vs3)).abs() <= 1e-9 {
        "lower"
    } else {
        "middle"
    }
}

fn trace<F: Fn(f64) -> f64>(
    h: &HysteresisParams,
    drive: F,
    grid: &[f64],
    direction: SweepDirection,
) -> Result<SweepResult> {
    let ordered: Vec<f64> = match direction {
        SweepDirection::Up => grid.to_vec(),
        SweepDirection::Down => grid.iter().rev().copied().collect(),
    };
    if ordered.windows(2).any(|w| match direction {
        SweepDirection::Up => w[1] < w[0],
        SweepDirection::Down => w[1] > w[0],
    }) {
        return Err(Error::InvalidParameter("sweep grid must be sorted".into()));
    }
    let mut points = Vec::with_capacity(ordered.len());
    let mut seed = match ordered.first() {
        Some(&v) => {
            // Start on the branch the block relaxes to from the supply.
            h.solve(drive(v), h.v_cc)?
        }
        None => return Ok(SweepResult { direction, points }),
    };
    for &v in &ordered {
        let v5 = drive(v);
        let vx = h.solve(v5, seed)?;
        debug_assert!(h.residual(v5, vx).abs() <= TOL_RES);
        points.push(SweepPoint {
            input: v,
            output: vx,
            branch: branch_of(h, vx),
            stability: h.stability(v5, vx),
        });
        seed = vx;
    }
    Ok(SweepResult { direction, points })
}

/// `v_y -> v_x` characteristic of the full cascade at fixed `v_z`.
///
/// Each point continues from the previous one, so an upward and a downward
/// sweep follow different stable branches wherever the characteristic is
/// multivalued.
pub fn mirrored_hysteresis_sweep(
    p: &CascadeParams,
    v_z: f64,
    v_y_grid: &[f64],
    direction: SweepDirection,
) -> Result<SweepResult> {
    trace(&p.hysteresis, |v_y| p.drive(v_y, v_z), v_y_grid, direction)
}

impl HysteresisParams {
    /// `v5 -> v_x` characteristic of the block alone.
    pub fn sweep(&self, v5_grid: &[f64], direction: SweepDirection) -> Result<SweepResult> {
        trace(self, |v| v, v5_grid, direction)
    }
}

/// Area enclosed between two sweeps over the same grid (trapezoidal rule).
pub fn loop_area(a: &SweepResult, b: &SweepResult) -> f64 {
    let mut pa: Vec<_> = a.points.iter().map(|p| (p.input, p.output)).collect();
    let mut pb: Vec<_> = b.points.iter().map(|p| (p.input, p.output)).collect();
    pa.sort_by(|x, y| x.0.total_cmp(&y.0));
    pb.sort_by(|x, y| x.0.total_cmp(&y.0));
    if pa.len() != pb.len() || pa.len() < 2 {
        return 0.0;
    }
    pa.windows(2)
        .zip(pb.windows(2))
        .map(|(wa, wb)| {
            let dx = wa[1].0 - wa[0].0;
            let d0 = (wa[0].1 - wb[0].1).abs();
            let d1 = (wa[1].1 - wb[1].1).abs();
            0.5 * dx * (d0 + d1)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::{SaturationParams, TransistorModel};

    fn cascade() -> CascadeParams {
        let m = TransistorModel::default();
        CascadeParams {
            nonmonotone: NonMonotoneParams {
                sat: SaturationParams::new(100e3, 16e3, 10e3, 5.0, m),
                r_a1: 100e3,
                r_a2: 33e3,
                r_s: 220e3,
            },
            diffamp: DiffAmpParams {
                r_b2: 1e3,
                r_b3: 1.2e3,
                r_e_shared: 470.0,
                r_c2: 4.7e3,
                r_c3: 4.7e3,
                v_cc: 5.0,
                model: m,
            },
            hysteresis: HysteresisParams {
                r_b4: 2.4e3,
                r_b5: 6e3,
                r_e: 240.0,
                r_c4: 820.0,
                r_c5: 240.0,
                v_cc: 5.0,
                model: m,
                g7_override: None,
            },
        }
    }

    fn grid(n: usize) -> Vec<f64> {
        (0..=n).map(|i| 5.0 * i as f64 / n as f64).collect()
    }

    #[test]
    fn block_sweep_encloses_area() {
        let h = cascade().hysteresis;
        let g = grid(500);
        let up = h.sweep(&g, SweepDirection::Up).unwrap();
        let down = h.sweep(&g, SweepDirection::Down).unwrap();
        assert!(loop_area(&up, &down) > 1.0);
        let weak = HysteresisParams { g7_override: Some(0.8), ..h };
        let up = weak.sweep(&g, SweepDirection::Up).unwrap();
        let down = weak.sweep(&g, SweepDirection::Down).unwrap();
        assert_eq!(loop_area(&up, &down), 0.0);
    }

    #[test]
    fn sweep_points_are_roots() {
        let p = cascade();
        let r = mirrored_hysteresis_sweep(&p, 1.5, &grid(200), SweepDirection::Down).unwrap();
        for pt in &r.points {
            let v5 = p.drive(pt.input, 1.5);
            assert!(p.hysteresis.residual(v5, pt.output).abs() <= TOL_RES);
            assert_ne!(pt.stability, Stability::Unstable);
        }
    }

    #[test]
    fn unsorted_grid_rejected() {
        let h = cascade().hysteresis;
        assert!(h.sweep(&[1.0, 0.5], SweepDirection::Up).is_err());
    }

    #[test]
    fn empty_grid() {
        let h = cascade().hysteresis;
        assert!(h.sweep(&[], SweepDirection::Up).unwrap().points.is_empty());
    }
}
