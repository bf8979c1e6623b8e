//! Scalar piecewise-linear primitives: interval projection, its generalized
//! gradient, and exact root finding for functions that are piecewise linear
//! in their second argument.

use crate::error::{Error, Result};

/// Residual tolerance for implicit solves, in volts.
pub const TOL_RES: f64 = 1e-9;

/// Closed interval `[lo, hi]` of voltages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PwlInterval {
    pub lo: f64,
    pub hi: f64,
}

impl PwlInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::InvalidParameter(format!(
                "interval lower bound {lo} exceeds upper bound {hi}"
            )));
        }
        Ok(Self { lo, hi })
    }

    /// The saturation set `[0, v_s]`.
    pub fn saturation(v_s: f64) -> Self {
        Self { lo: 0.0, hi: v_s.max(0.0) }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Set-valued slope `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradInterval {
    pub min: f64,
    pub max: f64,
}

impl GradInterval {
    pub fn point(v: f64) -> Self {
        Self { min: v, max: v }
    }

    pub fn new(a: f64, b: f64) -> Self {
        Self { min: a.min(b), max: a.max(b) }
    }

    pub fn is_singleton(&self) -> bool {
        self.min == self.max
    }

    /// `k * self`, reordering the bounds for negative `k`.
    pub fn scale(self, k: f64) -> Self {
        Self::new(k * self.min, k * self.max)
    }

    /// `c + self`.
    pub fn shift(self, c: f64) -> Self {
        Self { min: self.min + c, max: self.max + c }
    }
}

/// Nearest point of `s` to `v`.
pub fn proj(v: f64, s: PwlInterval) -> f64 {
    if v <= s.lo {
        s.lo
    } else if v >= s.hi {
        s.hi
    } else {
        v
    }
}

/// Generalized gradient of [`proj`]: `{0}` outside, `[0, 1]` on the boundary,
/// `{1}` in the interior.
pub fn grad_proj(v: f64, s: PwlInterval) -> GradInterval {
    if v == s.lo || v == s.hi {
        GradInterval { min: 0.0, max: 1.0 }
    } else if s.lo < v && v < s.hi {
        GradInterval::point(1.0)
    } else {
        GradInterval::point(0.0)
    }
}

/// [`grad_proj`] with boundary membership decided to within `tol`, for
/// arguments computed in floating point at a known corner.
pub fn grad_proj_near(v: f64, s: PwlInterval, tol: f64) -> GradInterval {
    if (v - s.lo).abs() <= tol {
        grad_proj(s.lo, s)
    } else if (v - s.hi).abs() <= tol {
        grad_proj(s.hi, s)
    } else {
        grad_proj(v, s)
    }
}

pub fn contains_zero(g: GradInterval) -> bool {
    g.min <= 0.0 && 0.0 <= g.max
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stability {
    Stable,
    Unstable,
    Fold,
}

impl Stability {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
            Stability::Fold => "fold",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchPoint {
    pub input: f64,
    pub output: f64,
    pub stability: Stability,
}

/// Every root of `z -> f(input, z)` on `range`, given the breakpoints at which
/// the map changes slope. Each linear piece is solved in closed form.
///
/// Roots are returned sorted ascending and deduplicated; a piece that is
/// identically zero contributes both of its endpoints.
pub fn all_roots<F>(f: F, input: f64, range: PwlInterval, breakpoints: &[f64]) -> Vec<f64>
where
    F: Fn(f64, f64) -> f64,
{
    let mut knots: Vec<f64> = Vec::with_capacity(breakpoints.len() + 2);
    knots.push(range.lo);
    knots.extend(
        breakpoints
            .iter()
            .copied()
            .filter(|b| b.is_finite() && *b > range.lo && *b < range.hi),
    );
    knots.push(range.hi);
    knots.sort_by(|a, b| a.total_cmp(b));
    knots.dedup();

    let mut roots = Vec::new();
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (fa, fb) = (f(input, a), f(input, b));
        if fa == 0.0 {
            roots.push(a);
        }
        if fb == 0.0 {
            roots.push(b);
        }
        if (fa < 0.0 && fb > 0.0) || (fa > 0.0 && fb < 0.0) {
            let z = a + (b - a) * fa / (fa - fb);
            roots.push(polish(&f, input, z, a, b));
        }
    }
    roots.sort_by(|a, b| a.total_cmp(b));
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    roots
}

// Interpolation on an exactly affine piece is already at round-off; a couple
// of secant corrections absorb breakpoints that were supplied slightly off.
fn polish<F: Fn(f64, f64) -> f64>(f: &F, input: f64, mut z: f64, a: f64, b: f64) -> f64 {
    for _ in 0..3 {
        let r = f(input, z);
        if r.abs() <= TOL_RES * 1e-3 {
            break;
        }
        let h = 1e-7 * (b - a).max(1e-6);
        let zl = (z - h).max(a);
        let zr = (z + h).min(b);
        let slope = (f(input, zr) - f(input, zl)) / (zr - zl);
        if slope == 0.0 || !slope.is_finite() {
            break;
        }
        z = (z - r / slope).clamp(a, b);
    }
    z
}

/// Solves `f(input, z) = 0` for `z` on `range`.
///
/// When several roots exist the one nearest to `seed` is returned (ties go to
/// the larger root). Feeding the previous solution back in as the seed gives
/// branch continuation, which is what carries hysteresis memory through a
/// sweep.
pub fn implicit_solve<F>(
    f: F,
    input: f64,
    seed: f64,
    range: PwlInterval,
    breakpoints: &[f64],
) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
{
    let roots = all_roots(&f, input, range, breakpoints);
    let best = roots
        .into_iter()
        .filter(|z| f(input, *z).abs() <= TOL_RES)
        .min_by(|a, b| {
            let (da, db) = ((a - seed).abs(), (b - seed).abs());
            da.total_cmp(&db).then(b.total_cmp(a))
        });
    best.ok_or(Error::NoRoot { lo: range.lo, hi: range.hi })
}

/// Stability of a root of `f(input, .)` under the relaxation `dz/dt = -f`.
///
/// Uses one-sided slopes around the root; a root where the generalized
/// gradient contains zero is a fold.
pub fn root_stability<F>(f: F, input: f64, z: f64, h: f64) -> Stability
where
    F: Fn(f64, f64) -> f64,
{
    let f0 = f(input, z);
    let left = (f0 - f(input, z - h)) / h;
    let right = (f(input, z + h) - f0) / h;
    let g = GradInterval::new(left, right);
    if contains_zero(g) {
        Stability::Fold
    } else if g.min > 0.0 {
        Stability::Stable
    } else {
        Stability::Unstable
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s03() -> PwlInterval {
        PwlInterval::new(0.0, 3.0).unwrap()
    }

    #[test]
    fn projection_cases() {
        assert_eq!(proj(-1.0, s03()), 0.0);
        assert_eq!(proj(1.5, s03()), 1.5);
        assert_eq!(proj(4.2, s03()), 3.0);
    }

    #[test]
    fn gradient_cases() {
        assert_eq!(grad_proj(-1.0, s03()), GradInterval::point(0.0));
        assert_eq!(grad_proj(0.0, s03()), GradInterval { min: 0.0, max: 1.0 });
        assert_eq!(grad_proj(3.0, s03()), GradInterval { min: 0.0, max: 1.0 });
        assert_eq!(grad_proj(1.0, s03()), GradInterval::point(1.0));
        assert_eq!(grad_proj(7.0, s03()), GradInterval::point(0.0));
        assert_eq!(grad_proj_near(3.0 + 1e-13, s03(), 1e-12), GradInterval { min: 0.0, max: 1.0 });
    }

    #[test]
    fn zero_membership() {
        assert!(contains_zero(GradInterval { min: 0.0, max: 1.0 }));
        assert!(!contains_zero(GradInterval { min: 0.3, max: 0.9 }));
        assert!(contains_zero(GradInterval { min: -0.2, max: 0.5 }));
    }

    #[test]
    fn inverted_interval_rejected() {
        assert!(PwlInterval::new(1.0, 0.0).is_err());
    }

    #[test]
    fn constant_root() {
        let z = implicit_solve(|_, z| z - 2.0, 0.7, 0.0, PwlInterval::new(0.0, 5.0).unwrap(), &[])
            .unwrap();
        assert!((z - 2.0).abs() < 1e-12);
    }

    #[test]
    fn no_root_is_reported() {
        let r = implicit_solve(|_, z| z + 1.0, 0.0, 0.0, PwlInterval::new(0.0, 5.0).unwrap(), &[]);
        assert_eq!(r, Err(Error::NoRoot { lo: 0.0, hi: 5.0 }));
    }

    #[test]
    fn seed_picks_branch_and_ties_go_up() {
        let f = |_: f64, z: f64| (z - 2.0).abs() - 1.0;
        let r = PwlInterval::new(0.0, 5.0).unwrap();
        assert_eq!(all_roots(f, 0.0, r, &[2.0]), vec![1.0, 3.0]);
        assert_eq!(implicit_solve(f, 0.0, 0.0, r, &[2.0]).unwrap(), 1.0);
        assert_eq!(implicit_solve(f, 0.0, 4.5, r, &[2.0]).unwrap(), 3.0);
        assert_eq!(implicit_solve(f, 0.0, 2.0, r, &[2.0]).unwrap(), 3.0);
    }

    #[test]
    fn stability_labels() {
        let r = |_: f64, z: f64| z - 1.0;
        assert_eq!(root_stability(r, 0.0, 1.0, 1e-6), Stability::Stable);
        let r = |_: f64, z: f64| 1.0 - z;
        assert_eq!(root_stability(r, 0.0, 1.0, 1e-6), Stability::Unstable);
        let r = |_: f64, z: f64| -(z - 1.0).abs();
        assert_eq!(root_stability(r, 0.0, 1.0, 1e-6), Stability::Fold);
    }
}
