//! Three-timescale normal form of the tonic/bursting transition and its
//! critical manifold.

use crate::classify::{classify, detect_spikes, ClassifySettings, FiringMode};
use crate::error::{Error, Result};
use crate::trace::{Polarity, Trace};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalFormParams {
    /// Bifurcation parameter.
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub eps_s: f64,
    /// Zero freezes `z`.
    pub eps_u: f64,
    /// External input.
    pub u: f64,
}

impl NormalFormParams {
    pub fn new(lambda: f64, alpha: f64, beta: f64) -> Self {
        Self { lambda, alpha, beta, eps_s: SEARCH_EPS_S, eps_u: SEARCH_EPS_U, u: 0.0 }
    }

    /// Requires `0 <= eps_u <= eps_s / 10 <= 1 / 100` and finite values.
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda, self.alpha, self.beta, self.eps_s, self.eps_u, self.u];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("normal form parameters must be finite".into()));
        }
        if !(self.eps_s > 0.0 && self.eps_s / 10.0 <= 0.01) {
            return Err(Error::InvalidParameter(format!("eps_s = {} must lie in (0, 0.1]", self.eps_s)));
        }
        if !(self.eps_u >= 0.0 && self.eps_u <= self.eps_s / 10.0) {
            return Err(Error::InvalidParameter(format!(
                "eps_u = {} must lie in [0, eps_s / 10]",
                self.eps_u
            )));
        }
        Ok(())
    }

    /// Loose a-priori bound on `|x|` along trajectories.
    pub fn x_bound(&self) -> f64 {
        10.0 * (1.0 + self.beta.abs() + self.alpha.abs() + self.lambda.abs())
    }

    pub fn frozen(&self) -> Self {
        Self { eps_u: 0.0, ..*self }
    }
}

/// Timescale ratios used by the preset search.
pub const SEARCH_EPS_S: f64 = 0.05;
pub const SEARCH_EPS_U: f64 = 0.005;
pub const SEARCH_START: NfState = NfState { x: -1.0, y: -0.5, z: 0.5 };

/// Tonic preset found by `preset_search`.
pub const NF_TONIC: NormalFormParams =
    NormalFormParams { lambda: 0.5, alpha: 0.0, beta: 1.0, eps_s: SEARCH_EPS_S, eps_u: SEARCH_EPS_U, u: 0.0 };
/// Bursting preset found by `preset_search`.
pub const NF_BURST: NormalFormParams =
    NormalFormParams { lambda: 0.2, alpha: -0.65, beta: 0.65, eps_s: SEARCH_EPS_S, eps_u: SEARCH_EPS_U, u: 0.0 };

pub fn preset(name: &str) -> Option<NormalFormParams> {
    match name {
        "nf-tonic" => Some(NF_TONIC),
        "nf-burst" => Some(NF_BURST),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NfState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl NfState {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    fn from_array(a: [f64; 3]) -> Self {
        Self { x: a[0], y: a[1], z: a[2] }
    }
}

pub fn nf_rhs(s: &NfState, p: &NormalFormParams) -> (f64, f64, f64) {
    let dx = -s.x.powi(3) - (p.lambda + s.y).powi(2) + p.beta * s.x - (p.alpha + p.u) - s.z;
    let dy = p.eps_s * (s.x - s.y);
    let dz = p.eps_u * (s.x - s.z);
    (dx, dy, dz)
}

/// Jacobian of `nf_rhs` with respect to `(x, y, z)`, row per derivative.
pub fn nf_jacobian(s: &NfState, p: &NormalFormParams) -> [[f64; 3]; 3] {
    [
        [-3.0 * s.x * s.x + p.beta, -2.0 * (p.lambda + s.y), -1.0],
        [p.eps_s, -p.eps_s, 0.0],
        [p.eps_u, 0.0, -p.eps_u],
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalRoot {
    pub x: f64,
    pub multiplicity: usize,
}

/// Real roots of `-x^3 - (lambda + y)^2 + beta x - alpha - z = 0`, sorted
/// ascending, with multiplicities.
pub fn critical_manifold_roots(y: f64, z: f64, p: &NormalFormParams) -> Vec<CriticalRoot> {
    // Depressed cubic x^3 + a x + c = 0.
    let a = -p.beta;
    let c = (p.lambda + y).powi(2) + p.alpha + z;
    cubic_roots(a, c)
}

fn cubic_roots(a: f64, c: f64) -> Vec<CriticalRoot> {
    let f = |x: f64| x * x * x + a * x + c;
    let scale = a.abs().powi(3).max(c * c).max(f64::MIN_POSITIVE);
    let disc = -(4.0 * a.powi(3) + 27.0 * c * c);
    let polish = |x: f64| {
        let mut x = x;
        for _ in 0..4 {
            let d = 3.0 * x * x + a;
            if d.abs() < 1e-300 {
                break;
            }
            let nx = x - f(x) / d;
            if f(nx).abs() >= f(x).abs() {
                break;
            }
            x = nx;
        }
        x
    };
    let simple = |x: f64| CriticalRoot { x, multiplicity: 1 };
    if disc.abs() <= 1e-12 * scale {
        if a.abs() <= 1e-12 && c.abs() <= 1e-12 {
            return vec![CriticalRoot { x: 0.0, multiplicity: 3 }];
        }
        // One simple and one double root.
        let single = polish(3.0 * c / a);
        let double = -1.5 * c / a;
        let mut r = vec![simple(single), CriticalRoot { x: double, multiplicity: 2 }];
        r.sort_by(|p, q| p.x.total_cmp(&q.x));
        return r;
    }
    if disc > 0.0 {
        let m = 2.0 * (-a / 3.0).sqrt();
        let theta = (3.0 * c / (a * m)).clamp(-1.0, 1.0).acos() / 3.0;
        let mut r: Vec<CriticalRoot> = (0..3)
            .map(|k| simple(polish(m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos())))
            .collect();
        r.sort_by(|p, q| p.x.total_cmp(&q.x));
        return r;
    }
    let s = (c * c / 4.0 + a.powi(3) / 27.0).sqrt();
    let x = (-c / 2.0 + s).cbrt() + (-c / 2.0 - s).cbrt();
    vec![simple(polish(x))]
}

/// Adaptive integration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NfSettings {
    pub rtol: f64,
    pub atol: f64,
    /// Defaults to `0.1 / max(1, |beta|)`.
    pub dt_max: Option<f64>,
}

impl Default for NfSettings {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10, dt_max: None }
    }
}

impl NfSettings {
    pub fn dt_max(&self, p: &NormalFormParams) -> f64 {
        self.dt_max.unwrap_or(0.1 / p.beta.abs().max(1.0))
    }
}

const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights minus the embedded fourth-order weights.
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const MAX_REJECTS: usize = 60;

fn f3(s: [f64; 3], p: &NormalFormParams) -> [f64; 3] {
    let (a, b, c) = nf_rhs(&NfState::from_array(s), p);
    [a, b, c]
}

/// Dormand-Prince 5(4) integration. Every accepted step is recorded; the
/// step cap keeps at least twenty samples per fast oscillation.
pub fn nf_integrate(s0: NfState, p: &NormalFormParams, t_end: f64, settings: &NfSettings) -> Result<Trace> {
    p.validate()?;
    if !(t_end > 0.0) {
        return Err(Error::InvalidParameter(format!("t_end = {t_end} must be positive")));
    }
    let dt_max = settings.dt_max(p);
    let bound = p.x_bound();
    let mut tr = Trace::new(&["x", "y", "z"], Polarity::Up);
    let mut y = s0.to_array();
    let mut t = 0.0;
    tr.push(t, y.to_vec())?;
    let mut h = dt_max.min(t_end);
    let mut k0 = f3(y, p);
    let mut rejects = 0;
    let mut flagged = false;
    while t < t_end {
        h = h.min(t_end - t).min(dt_max);
        if h <= 1e-12 * t.abs().max(1.0) || rejects > MAX_REJECTS {
            return Err(Error::StepFailure { t });
        }
        let mut k = [[0.0; 3]; 7];
        k[0] = k0;
        for i in 1..7 {
            let mut yi = y;
            for (j, kj) in k.iter().enumerate().take(i) {
                for d in 0..3 {
                    yi[d] += h * DP_A[i][j] * kj[d];
                }
            }
            k[i] = f3(yi, p);
        }
        let mut y5 = y;
        let mut err: f64 = 0.0;
        for d in 0..3 {
            y5[d] += h * (0..6).map(|j| DP_A[6][j] * k[j][d]).sum::<f64>();
        }
        for d in 0..3 {
            let e = h * (0..7).map(|j| DP_E[j] * k[j][d]).sum::<f64>();
            let sc = settings.atol + settings.rtol * y[d].abs().max(y5[d].abs());
            err = err.max((e / sc).abs());
        }
        if !err.is_finite() {
            h *= 0.2;
            rejects += 1;
            continue;
        }
        if err <= 1.0 {
            t = if t_end - (t + h) < 1e-12 * t_end { t_end } else { t + h };
            y = y5;
            k0 = k[6];
            rejects = 0;
            if y[0].abs() > bound && !flagged {
                log::warn!("|x| = {} exceeds the a-priori bound {bound} at t = {t}", y[0].abs());
                flagged = true;
            }
            tr.push(t, y.to_vec())?;
        } else {
            rejects += 1;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    Ok(tr)
}

/// Classification settings for normal-form traces: the fast time unit is 1.
pub fn nf_classify_settings() -> ClassifySettings {
    ClassifySettings { min_swing: 0.05, ..ClassifySettings::from_tau_fast(NF_TAU_FAST) }
}

const NF_TAU_FAST: f64 = 0.25;

/// Abscissa of the left fold of the equilibrium curve `x = y`, where the
/// resting node of the slow-fast subsystem disappears. `None` when the curve
/// is monotone and there is no bistability.
pub fn left_fold(p: &NormalFormParams) -> Option<f64> {
    let disc = 1.0 - 3.0 * (2.0 * p.lambda - p.beta);
    (disc > 0.0).then(|| (-1.0 - disc.sqrt()) / 3.0)
}

/// Attractor of the slow-fast subsystem at one frozen `z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NfRegime {
    /// Settled on the node left of the fold.
    Rest,
    /// Spiking or parked on the right branch.
    Active,
}

/// Frozen-`z` hysteresis of the slow-fast subsystem. `z` is ramped down
/// from the top of `grid`, starting on the resting node, and back up,
/// carrying the state. Returns the `z` of the first active point on the way
/// down and of the first resting point on the way up.
pub fn nf_z_transition(p: &NormalFormParams, grid: &[f64], settle: f64, observe: f64) -> Result<(f64, f64)> {
    let mut down = grid.to_vec();
    down.sort_by(|a, b| b.total_cmp(a));
    let (Some(&top), Some(fold)) = (down.first(), left_fold(p)) else {
        return Err(Error::NoTransition);
    };
    let x0 = fold - 1.0;
    let (on_down, end) = ramp(p, &down, NfState::new(x0, x0, top), settle, observe)?;
    let up: Vec<f64> = down.iter().rev().copied().collect();
    let (on_up, _) = ramp(p, &up, end, settle, observe)?;
    let rest = NfRegime::Rest;
    let onset = on_down.windows(2).position(|w| w[0] == rest && w[1] != rest).map(|i| down[i + 1]);
    let offset = on_up.windows(2).position(|w| w[0] != rest && w[1] == rest).map(|i| up[i + 1]);
    match (onset, offset) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(Error::NoTransition),
    }
}

fn ramp(p: &NormalFormParams, grid: &[f64], start: NfState, settle: f64, observe: f64) -> Result<(Vec<NfRegime>, NfState)> {
    let settings = NfSettings::default();
    let cls = nf_classify_settings();
    let fold = left_fold(p).unwrap_or(f64::NEG_INFINITY);
    let q = p.frozen();
    let last = |tr: &Trace, z: f64| {
        let s = tr.states.last().unwrap();
        NfState::new(s[0], s[1], z)
    };
    let mut s = start;
    let mut out = Vec::with_capacity(grid.len());
    for &z in grid {
        let a = nf_integrate(NfState { z, ..s }, &q, settle, &settings)?;
        let b = nf_integrate(last(&a, z), &q, observe, &settings)?;
        let spiking = detect_spikes(&b, &cls).len() >= 2;
        let left = b.states.iter().all(|v| v[0] < fold);
        out.push(if left && !spiking { NfRegime::Rest } else { NfRegime::Active });
        s = last(&b, z);
    }
    Ok((out, s))
}

/// Attractor of the slow-fast subsystem at each frozen `z` along `grid`,
/// with the state carried over.
pub fn nf_frozen_ramp(p: &NormalFormParams, grid: &[f64], start: NfState, settle: f64, observe: f64) -> Result<Vec<NfRegime>> {
    Ok(ramp(p, grid, start, settle, observe)?.0)
}

/// For each interval between consecutive spikes, the smallest `|dx/dt|`
/// reached, relative to the largest `|dx/dt|` of the whole trace. Values
/// near zero mean every spike relaxes back to a quasi-steady state before
/// the next one.
pub fn interspike_relaxation(tr: &Trace, p: &NormalFormParams) -> Vec<f64> {
    let speed: Vec<f64> = tr
        .states
        .iter()
        .map(|v| nf_rhs(&NfState::new(v[0], v[1], v[2]), p).0.abs())
        .collect();
    let peak = speed.iter().cloned().fold(0.0, f64::max);
    if peak == 0.0 {
        return Vec::new();
    }
    let spikes = detect_spikes(tr, &nf_classify_settings());
    spikes
        .windows(2)
        .map(|w| {
            tr.times
                .iter()
                .zip(&speed)
                .filter(|(t, _)| **t > w[0] && **t < w[1])
                .map(|(_, v)| *v)
                .fold(f64::INFINITY, f64::min)
                / peak
        })
        .collect()
}

/// Outcome of one point of the preset search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub params: NormalFormParams,
    pub mode: FiringMode,
    pub spikes_per_burst: f64,
    pub interspike_interval: f64,
}

/// Coarse grid search over `(lambda, alpha, beta)` in `[-2, 2]^3` with the
/// search timescales. Each point is integrated from the origin for `t_end`
/// and the second half is classified. The start is off the origin, which is
/// an equilibrium whenever `alpha = -lambda^2`.
pub fn preset_search(step: f64, t_end: f64) -> Vec<SearchHit> {
    let n = (4.0 / step).round() as usize;
    let axis: Vec<f64> = (0..=n).map(|i| -2.0 + 4.0 * i as f64 / n as f64).collect();
    let mut hits = Vec::new();
    for &lambda in &axis {
        for &alpha in &axis {
            for &beta in &axis {
                let p = NormalFormParams::new(lambda, alpha, beta);
                if let Some(hit) = search_point(&p, t_end) {
                    hits.push(hit);
                }
            }
        }
    }
    hits
}

pub fn search_point(p: &NormalFormParams, t_end: f64) -> Option<SearchHit> {
    let tr = nf_integrate(SEARCH_START, p, t_end, &NfSettings::default()).ok()?;
    let c = classify(&tr.window(0.5 * t_end), &nf_classify_settings()).ok()?;
    Some(SearchHit {
        params: *p,
        mode: c.mode,
        spikes_per_burst: c.spikes_per_burst,
        interspike_interval: c.interspike_interval,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn zero() -> NormalFormParams {
        NormalFormParams { lambda: 0.0, alpha: 0.0, beta: 0.0, eps_s: 0.1, eps_u: 0.01, u: 0.0 }
    }

    #[test]
    fn rhs_examples() {
        assert_eq!(nf_rhs(&NfState::default(), &zero()), (0.0, 0.0, 0.0));
        assert_eq!(nf_rhs(&NfState::new(1.0, 1.0, 1.0), &zero()), (-3.0, 0.0, 0.0));
        let p = NormalFormParams { u: 2.0, ..zero() };
        assert_eq!(nf_rhs(&NfState::new(1.0, 1.0, 1.0), &p), (-5.0, 0.0, 0.0));
    }

    #[test]
    fn root_examples() {
        let r = critical_manifold_roots(0.0, 0.0, &zero());
        assert_eq!(r, vec![CriticalRoot { x: 0.0, multiplicity: 3 }]);
        let r = critical_manifold_roots(1.0, 0.0, &zero());
        assert_eq!(r.len(), 1);
        assert_relative_eq!(r[0].x, -1.0, epsilon = 1e-14);
        let p = NormalFormParams { beta: 3.0, ..zero() };
        let r = critical_manifold_roots(0.0, 2.0, &p);
        assert_eq!(r.len(), 2);
        assert_relative_eq!(r[0].x, -2.0, epsilon = 1e-12);
        assert_eq!(r[0].multiplicity, 1);
        assert_relative_eq!(r[1].x, 1.0, epsilon = 1e-12);
        assert_eq!(r[1].multiplicity, 2);
    }

    #[test]
    fn three_simple_roots() {
        let p = NormalFormParams { beta: 3.0, ..zero() };
        let r = critical_manifold_roots(0.0, 0.5, &p);
        assert_eq!(r.len(), 3);
        for w in r.windows(2) {
            assert!(w[0].x < w[1].x);
        }
        for root in r {
            assert!(nf_rhs(&NfState::new(root.x, 0.0, 0.5), &p).0.abs() < 1e-10);
        }
    }

    #[test]
    fn validate_timescales() {
        assert!(NF_BURST.validate().is_ok());
        assert!(NormalFormParams { eps_u: 0.01, ..NF_BURST }.validate().is_err());
        assert!(NormalFormParams { eps_s: 0.5, eps_u: 0.0, ..NF_BURST }.validate().is_err());
        assert!(NF_BURST.frozen().validate().is_ok());
    }

    #[test]
    fn integrate_decays_to_stable_point() {
        let p = NormalFormParams { beta: -1.0, ..NormalFormParams::new(0.0, 0.0, 0.0) };
        let tr = nf_integrate(NfState::new(0.5, 0.0, 0.0), &p, 2000.0, &NfSettings::default()).unwrap();
        let last = tr.states.last().unwrap();
        let (dx, dy, dz) = nf_rhs(&NfState::new(last[0], last[1], last[2]), &p);
        assert!(dx.abs() + dy.abs() + dz.abs() < 1e-6);
        let dt = tr.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        assert!(dt <= 0.1 + 1e-12);
    }

    #[test]
    fn rejects_bad_end_time() {
        assert!(nf_integrate(NfState::default(), &NF_BURST, 0.0, &NfSettings::default()).is_err());
    }

    #[test]
    fn burst_preset_has_z_hysteresis() {
        let grid: Vec<f64> = (0..=100).map(|i| -0.2 + 1.2 * i as f64 / 100.0).collect();
        let (down, up) = nf_z_transition(&NF_BURST, &grid, 300.0, 200.0).unwrap();
        assert!(up - down > 0.1, "down {down} up {up}");
    }

    #[test]
    fn tonic_preset_relaxes_between_spikes() {
        let tr = nf_integrate(SEARCH_START, &NF_TONIC, 2000.0, &NfSettings::default()).unwrap();
        let r = interspike_relaxation(&tr.window(500.0), &NF_TONIC);
        assert!(r.len() >= 10);
        assert!(r.iter().all(|&v| v < 0.01), "{r:?}");
    }

    #[test]
    fn monotone_curve_has_no_fold() {
        assert!(left_fold(&NormalFormParams::new(2.0, 0.0, -1.0)).is_none());
        let x1 = left_fold(&NF_BURST).unwrap();
        let p = NF_BURST;
        let slope = -3.0 * x1 * x1 - 2.0 * (p.lambda + x1) + p.beta;
        assert_relative_eq!(slope, 0.0, epsilon = 1e-12);
    }

    fn params() -> impl Strategy<Value = NormalFormParams> {
        (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64, 0.001..0.1f64, 0.0..1.0f64, -1.0..1.0f64).prop_map(
            |(lambda, alpha, beta, eps_s, r, u)| NormalFormParams { lambda, alpha, beta, eps_s, eps_u: r * eps_s / 10.0, u },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn jacobian_matches_finite_differences(p in params(), x in -3.0..3.0f64, y in -3.0..3.0f64, z in -3.0..3.0f64) {
            let s = NfState::new(x, y, z);
            let j = nf_jacobian(&s, &p);
            let h = 1e-6;
            for k in 0..3 {
                let shift = |d: f64| {
                    let mut v = [x, y, z];
                    v[k] += d;
                    let (a, b, c) = nf_rhs(&NfState::new(v[0], v[1], v[2]), &p);
                    [a, b, c]
                };
                let (fp, fm) = (shift(h), shift(-h));
                for i in 0..3 {
                    let fd = (fp[i] - fm[i]) / (2.0 * h);
                    prop_assert!((fd - j[i][k]).abs() <= 1e-5 * j[i][k].abs().max(1.0), "d{i}/d{k}: {fd} vs {}", j[i][k]);
                }
            }
        }

        #[test]
        fn critical_roots_are_roots(p in params(), y in -3.0..3.0f64, z in -3.0..3.0f64) {
            let roots = critical_manifold_roots(y, z, &p);
            prop_assert!(!roots.is_empty());
            for r in roots {
                let f = nf_rhs(&NfState::new(r.x, y, z), &NormalFormParams { u: 0.0, ..p }).0;
                prop_assert!(f.abs() <= 1e-9 * (1.0 + r.x.abs().powi(3)), "x {} residual {f}", r.x);
            }
        }
    }
}
