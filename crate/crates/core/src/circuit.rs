//! The closed-loop burster: cascade, slow `v_y` filter, ultra-slow `v_z`
//! loop and a parasitic lag on the feedback path.
//!
//! The whole circuit is solved as one piecewise-linear network. Capacitor
//! voltages (`v_y` on node 1, `v_o` on node 18) and the lagged copy of `v_x`
//! driving the feedback base are the states; everything else is algebraic.
//! For a fixed combination of transistor regions the dynamics are affine,
//! so each step is an exact matrix-exponential update and region changes
//! are located by bisection.

use std::collections::HashMap;
use std::rc::Rc;

use nalgebra::{DVector, Matrix2, Matrix3, SMatrix, Vector2, Vector3};

use crate::blocks::{
    CascadeParams, DiffAmpParams, HysteresisParams, NonMonotoneParams, SaturationParams,
    TransistorMode, TransistorModel,
};
use crate::classify::ClassifySettings;
use crate::error::{Error, Result};
use crate::network::{Bjt, Mode, Network, NetworkSolver, Resistor, Transfer};
use crate::trace::{Event, EventKind, Polarity, Trace};

/// Node numbers of the circuit template.
pub mod nodes {
    pub const GND: usize = 0;
    pub const V_Y: usize = 1;
    pub const VCC: usize = 5;
    pub const V_X: usize = 13;
    pub const V_X_COMPLEMENT: usize = 16;
    pub const V_Z: usize = 12;
    pub const V_O: usize = 18;
    /// Lagged copy of `v_x` feeding the feedback base resistor.
    pub const V_X_LAGGED: usize = 20;
}

/// Rectangular current pulse added to the baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentStep {
    pub start: f64,
    pub duration: f64,
    pub amplitude: f64,
}

/// Piecewise-constant current injected into the ultra-slow capacitor node.
/// Negative current excites the circuit.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Stimulus {
    pub baseline: f64,
    pub steps: Vec<CurrentStep>,
}

impl Stimulus {
    pub fn constant(i: f64) -> Self {
        Self { baseline: i, steps: Vec::new() }
    }

    /// Current on the interval starting at `t`.
    pub fn at(&self, t: f64) -> f64 {
        self.baseline
            + self
                .steps
                .iter()
                .filter(|s| s.start <= t && t < s.start + s.duration)
                .map(|s| s.amplitude)
                .sum::<f64>()
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> =
            self.steps.iter().flat_map(|s| [s.start, s.start + s.duration]).collect();
        b.sort_by(|x, y| x.total_cmp(y));
        b.dedup();
        b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitConfig {
    pub cascade: CascadeParams,
    pub r_i1: f64,
    pub r_i2: f64,
    pub c_i: f64,
    pub r_o1: f64,
    pub r_o2: f64,
    pub c_o: f64,
    /// Parasitic capacitance of the lag on the feedback path.
    pub c_fast: f64,
    /// The `v_z` amplifier: base on the ultra-slow node, emitter biased by
    /// `r_bias` to the supply.
    pub conditioner: SaturationParams,
    pub stimulus: Stimulus,
    /// Holds `v_z` at a fixed value and opens the ultra-slow loop.
    pub frozen_vz: Option<f64>,
    pub h_max: f64,
    pub event_tol: f64,
    pub record_dt: f64,
    /// Level whose downward crossing by `v_x` marks a spike onset.
    pub spike_level: f64,
}

impl CircuitConfig {
    /// Component values of the reference deck with the given transistor model.
    pub fn reference(model: TransistorModel) -> Self {
        let v_cc = 5.0;
        let mut conditioner = SaturationParams::new(0.0, 200.0, 20.0, v_cc, model);
        conditioner.r_bias = Some(150.0);
        CircuitConfig {
            cascade: CascadeParams {
                nonmonotone: NonMonotoneParams {
                    sat: SaturationParams::new(100e3, 16e3, 10e3, v_cc, model),
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
                    v_cc,
                    model,
                },
                hysteresis: HysteresisParams {
                    r_b4: 2.4e3,
                    r_b5: 6e3,
                    r_e: 240.0,
                    r_c4: 820.0,
                    r_c5: 240.0,
                    v_cc,
                    model,
                    g7_override: None,
                },
            },
            r_i1: 15e3,
            r_i2: 47e3,
            c_i: 22e-9,
            r_o1: 4.7e3,
            r_o2: 4.7e3,
            c_o: 4.7e-6,
            c_fast: 1e-9,
            conditioner,
            stimulus: Stimulus::default(),
            frozen_vz: None,
            h_max: 2e-6,
            event_tol: 1e-12,
            record_dt: 2e-6,
            spike_level: 3.0,
        }
    }

    pub fn v_cc(&self) -> f64 {
        self.cascade.hysteresis.v_cc
    }

    pub fn model(&self) -> TransistorModel {
        self.cascade.diffamp.model
    }

    /// Replaces the transistor model in every block.
    pub fn set_model(&mut self, m: TransistorModel) {
        self.cascade.nonmonotone.sat.model = m;
        self.cascade.diffamp.model = m;
        self.cascade.hysteresis.model = m;
        self.conditioner.model = m;
    }

    pub fn tau_fast(&self) -> f64 {
        self.cascade.hysteresis.r_c4 * self.c_fast
    }

    /// Spike detection scaled to this circuit's fast time constant.
    pub fn classify_settings(&self) -> ClassifySettings {
        ClassifySettings::from_tau_fast(self.tau_fast())
    }

    pub fn tau_slow(&self) -> f64 {
        self.c_i * parallel(self.r_i1, self.r_i2)
    }

    pub fn tau_ultra(&self) -> f64 {
        self.c_o * parallel(self.r_o1, self.r_o2)
    }

    pub fn validate(&self) -> Result<()> {
        self.cascade.validate()?;
        self.conditioner.validate()?;
        for (n, v) in [
            ("r_i1", self.r_i1),
            ("r_i2", self.r_i2),
            ("c_i", self.c_i),
            ("r_o1", self.r_o1),
            ("r_o2", self.r_o2),
            ("c_o", self.c_o),
            ("c_fast", self.c_fast),
            ("h_max", self.h_max),
            ("event_tol", self.event_tol),
            ("record_dt", self.record_dt),
        ] {
            crate::blocks::positive(n, v)?;
        }
        let (f, s, u) = (self.tau_fast(), self.tau_slow(), self.tau_ultra());
        if !(f < s / 10.0 && s / 10.0 < u / 100.0) {
            return Err(Error::InvalidParameter(format!(
                "time constants not separated: fast {f:.3e} s, slow {s:.3e} s, ultra-slow {u:.3e} s"
            )));
        }
        Ok(())
    }

    /// The circuit as a network whose inputs are ground, supply, the three
    /// states and, when frozen, `v_z`.
    pub fn network(&self) -> Network {
        use nodes::*;
        let c = &self.cascade;
        let nm = &c.nonmonotone;
        let da = &c.diffamp;
        let hy = &c.hysteresis;
        let co = &self.conditioner;
        let r = |name: &str, a: usize, b: usize, r: f64| Resistor { name: name.into(), a, b, r };
        let q = |name: &str, c: usize, b: usize, e: usize| Bjt { name: name.into(), c, b, e };
        let mut resistors = vec![
            r("rC1", VCC, 2, nm.sat.r_c),
            r("rB1", 3, V_Y, nm.sat.r_b),
            r("rE1", 4, GND, nm.sat.r_e),
            r("Ra1", 6, V_Y, nm.r_a1),
            r("Ra2", 6, 2, nm.r_a2),
            r("Rs", 6, GND, nm.r_s),
            r("rC2", 7, VCC, da.r_c2),
            r("rC3", 10, VCC, da.r_c3),
            r("rB2", 8, 6, da.r_b2),
            r("rB3", V_Z, 11, da.r_b3),
            r("rE2", 9, GND, da.r_e_shared),
            r("rC4", V_X, VCC, hy.r_c4),
            r("rC5", V_X_COMPLEMENT, VCC, hy.r_c5),
            r("rB4", 14, 7, hy.r_b4),
            r("rE4", 15, GND, hy.r_e),
            r("ri1", V_X, V_Y, self.r_i1),
            r("ri2", V_Y, GND, self.r_i2),
            r("ro1", V_X_COMPLEMENT, V_O, self.r_o1),
            r("ro2", V_O, GND, self.r_o2),
            r("rC6", V_Z, VCC, co.r_c),
            r("rE6", 19, GND, co.r_e),
        ];
        if let Some(rb) = co.r_bias {
            resistors.push(r("rbi", 19, VCC, rb));
        }
        // A zero base resistor ties the conditioner base to the capacitor.
        let (q6_base, extra) = if co.r_b > 0.0 {
            (21, Some(r("rB6", 21, V_O, co.r_b)))
        } else {
            (V_O, None)
        };
        resistors.extend(extra);
        let mut inputs = vec![GND, VCC, V_X_LAGGED, V_Y, V_O];
        if self.frozen_vz.is_some() {
            inputs.push(V_Z);
        }
        Network {
            resistors,
            bjts: vec![
                q("q1", 2, 3, 4),
                q("q2", 7, 8, 9),
                q("q3", 10, 11, 9),
                q("q4", V_X, 14, 15),
                q("q5", V_X_COMPLEMENT, 17, 15),
                q("q6", V_Z, q6_base, 19),
            ],
            transfers: vec![Transfer { source: V_X_LAGGED, target: 17, tap: V_X, r: hy.r_b5 }],
            model: self.model(),
            inputs,
        }
    }
}

fn parallel(a: f64, b: f64) -> f64 {
    a * b / (a + b)
}

/// State of the closed loop: lagged `v_x`, `v_y` and the ultra-slow
/// capacitor voltage `v_o`, from which `v_z` follows algebraically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircuitState {
    pub v_x: f64,
    pub v_y: f64,
    pub v_o: f64,
}

impl CircuitState {
    pub fn new(v_x: f64, v_y: f64, v_o: f64) -> Self {
        Self { v_x, v_y, v_o }
    }

    fn vec(&self) -> Vector3<f64> {
        Vector3::new(self.v_x, self.v_y, self.v_o)
    }

    fn from_vec(v: &Vector3<f64>) -> Self {
        Self { v_x: v[0], v_y: v[1], v_o: v[2] }
    }
}

impl Default for CircuitState {
    fn default() -> Self {
        Self { v_x: 5.0, v_y: 1.25, v_o: 1.3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivative {
    pub dvx: f64,
    pub dvy: f64,
    pub dvo: f64,
}

/// Affine function of the state.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Lin {
    a: Vector3<f64>,
    b: f64,
}

impl Lin {
    fn eval(&self, s: &Vector3<f64>) -> f64 {
        self.a.dot(s) + self.b
    }
}

#[derive(Debug, Clone)]
struct Condition {
    value: Lin,
    tol: f64,
}

#[derive(Debug, Clone)]
struct ModeDynamics {
    k: Matrix3<f64>,
    k0: Vector3<f64>,
    conditions: Vec<Condition>,
    v_x: Lin,
    v_z: Lin,
    v_x_complement: Lin,
    /// Step maps for the nominal step and its dyadic fractions.
    nominal: Vec<(Matrix3<f64>, Matrix3<f64>)>,
}

impl ModeDynamics {
    fn consistent(&self, s: &Vector3<f64>) -> bool {
        self.conditions.iter().all(|c| c.value.eval(s) >= -c.tol)
    }

    fn derivative(&self, s: &Vector3<f64>, forcing: &Vector3<f64>) -> Vector3<f64> {
        self.k * s + self.k0 + forcing
    }
}

/// Exact one-step maps `(Phi, Gamma)` of `ds/dt = K s + c`, so that
/// `s(tau) = Phi s(0) + Gamma c`, for `tau = h / 2^j`, `j = 0..=levels`.
///
/// The finest level comes from a short Taylor series and coarser ones by
/// squaring. Squaring loses about one bit per level, which is harmless for
/// locating events, so the full step itself is taken from a separately
/// computed exponential.
fn ladder(k: &Matrix3<f64>, h: f64, levels: usize) -> Vec<(Matrix3<f64>, Matrix3<f64>)> {
    let tau = h / 2f64.powi(levels as i32);
    let a = k * tau;
    let a2 = a * a;
    let a3 = a2 * a;
    let a4 = a3 * a;
    let id = Matrix3::identity();
    let phi = id + a + a2 / 2.0 + a3 / 6.0 + a4 / 24.0;
    let gamma = (id + a / 2.0 + a2 / 6.0 + a3 / 24.0 + a4 / 120.0) * tau;
    let mut out = vec![(phi, gamma); levels + 1];
    for j in (0..levels).rev() {
        let (p, g) = out[j + 1];
        out[j] = (p * p, g + p * g);
    }
    out[0] = exp_step(k, h);
    out
}

fn exp_step(k: &Matrix3<f64>, h: f64) -> (Matrix3<f64>, Matrix3<f64>) {
    let mut m = SMatrix::<f64, 6, 6>::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&(k * h));
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&(Matrix3::identity() * h));
    let e = m.exp();
    (e.fixed_view::<3, 3>(0, 0).into_owned(), e.fixed_view::<3, 3>(0, 3).into_owned())
}

fn ladder_levels(h: f64, event_tol: f64, k: &Matrix3<f64>) -> usize {
    let norm = k.abs().row_sum().max();
    let finest = event_tol.min(1e-3 / norm.max(1e-300));
    ((h / finest).log2().ceil().max(1.0) as usize).min(60)
}

/// Largest dyadic prefix of the step on which `ok` keeps holding. Returns
/// the state at the start of the final interval, its offset, and the state
/// just past the end of that interval.
fn dyadic_search<F: Fn(&Vector3<f64>) -> bool>(
    lad: &[(Matrix3<f64>, Matrix3<f64>)],
    h: f64,
    s: Vector3<f64>,
    c: Vector3<f64>,
    ok: F,
) -> (f64, Vector3<f64>) {
    let (mut lo, mut s_lo) = (0.0, s);
    let mut width = h;
    for (phi, gamma) in &lad[1..] {
        width *= 0.5;
        let cand = phi * s_lo + gamma * c;
        if ok(&cand) {
            s_lo = cand;
            lo += width;
        }
    }
    let (phi, gamma) = lad[lad.len() - 1];
    (lo + width, phi * s_lo + gamma * c)
}

/// A consistent equilibrium of the closed loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub state: CircuitState,
    pub v_z: f64,
    pub stable: bool,
    /// Largest real part among the eigenvalues of the active mode.
    pub growth_rate: f64,
    pub mode: Mode,
}

/// Simulator for one configuration.
#[derive(Debug, Clone)]
pub struct CircuitModel {
    config: CircuitConfig,
    solver: NetworkSolver,
    cache: HashMap<Mode, Option<Rc<ModeDynamics>>>,
    /// `u = map * s + offset`.
    map: nalgebra::DMatrix<f64>,
    offset: DVector<f64>,
    last_mode: Mode,
}

const V_X_SLOT: usize = 2;
const V_Y_SLOT: usize = 3;
const V_O_SLOT: usize = 4;
const V_Z_SLOT: usize = 5;
const CHATTER_LIMIT: usize = 200;

impl CircuitModel {
    pub fn new(config: CircuitConfig) -> Result<Self> {
        config.validate()?;
        let net = config.network();
        let nu = net.inputs.len();
        let solver = NetworkSolver::new(net)?;
        let mut map = nalgebra::DMatrix::zeros(nu, 3);
        map[(V_X_SLOT, 0)] = 1.0;
        map[(V_Y_SLOT, 1)] = 1.0;
        map[(V_O_SLOT, 2)] = 1.0;
        let mut offset = DVector::zeros(nu);
        offset[1] = config.v_cc();
        if let Some(vz) = config.frozen_vz {
            offset[V_Z_SLOT] = vz;
        }
        Ok(Self {
            config,
            solver,
            cache: HashMap::new(),
            map,
            offset,
            last_mode: vec![TransistorMode::Active; 6],
        })
    }

    pub fn config(&self) -> &CircuitConfig {
        &self.config
    }

    fn inputs(&self, s: &Vector3<f64>) -> DVector<f64> {
        &self.map * DVector::from_column_slice(s.as_slice()) + &self.offset
    }

    fn dynamics(&mut self, mode: &[TransistorMode]) -> Option<Rc<ModeDynamics>> {
        if !self.cache.contains_key(mode) {
            let d = self.build_dynamics(mode).map(Rc::new);
            self.cache.insert(mode.to_vec(), d);
        }
        self.cache.get(mode).and_then(|d| d.clone())
    }

    fn build_dynamics(&mut self, mode: &[TransistorMode]) -> Option<ModeDynamics> {
        let map = self.map.clone();
        let offset = self.offset.clone();
        let cfg = self.config.clone();
        let sol = self.solver.solve_mode(mode)?;
        let lin = |a: &crate::network::Affine| {
            let v = map.transpose() * &a.coeffs;
            Lin { a: Vector3::new(v[0], v[1], v[2]), b: a.coeffs.dot(&offset) + a.offset }
        };
        let v_x = lin(&sol.voltages[nodes::V_X]);
        let i_y = lin(&sol.input_currents[V_Y_SLOT]);
        let i_o = lin(&sol.input_currents[V_O_SLOT]);
        let tau = cfg.tau_fast();
        let mut k = Matrix3::zeros();
        let mut k0 = Vector3::zeros();
        let rows = [
            Lin { a: (v_x.a - Vector3::new(1.0, 0.0, 0.0)) / tau, b: v_x.b / tau },
            Lin { a: i_y.a / cfg.c_i, b: i_y.b / cfg.c_i },
            if cfg.frozen_vz.is_some() {
                Lin { a: Vector3::zeros(), b: 0.0 }
            } else {
                Lin { a: i_o.a / cfg.c_o, b: i_o.b / cfg.c_o }
            },
        ];
        for (i, r) in rows.iter().enumerate() {
            k.set_row(i, &r.a.transpose());
            k0[i] = r.b;
        }
        let conditions =
            sol.constraints.iter().map(|c| Condition { value: lin(&c.value), tol: c.tol }).collect();
        let v_z = lin(&sol.voltages[nodes::V_Z]);
        let v_x_complement = lin(&sol.voltages[nodes::V_X_COMPLEMENT]);
        Some(ModeDynamics {
            nominal: ladder(&k, cfg.h_max, ladder_levels(cfg.h_max, cfg.event_tol, &k)),
            k,
            k0,
            conditions,
            v_x,
            v_z,
            v_x_complement,
        })
    }

    fn forcing(&self, t: f64) -> Vector3<f64> {
        if self.config.frozen_vz.is_some() {
            return Vector3::zeros();
        }
        Vector3::new(0.0, 0.0, self.config.stimulus.at(t) / self.config.c_o)
    }

    /// Region combination consistent with state `s`.
    pub fn mode_at(&mut self, s: &CircuitState) -> Result<Mode> {
        let u = self.inputs(&s.vec());
        let start = self.last_mode.clone();
        let m = self.solver.find_mode(&u, &start)?;
        self.last_mode = m.clone();
        Ok(m)
    }

    pub fn rhs(&mut self, s: &CircuitState, t: f64) -> Result<Derivative> {
        let mode = self.mode_at(s)?;
        let f = self.forcing(t);
        let d = self.dynamics(&mode).ok_or(Error::NoOperatingPoint)?.derivative(&s.vec(), &f);
        Ok(Derivative { dvx: d[0], dvy: d[1], dvo: d[2] })
    }

    /// `v_z` (conditioner output, or the frozen value) at state `s`.
    pub fn v_z(&mut self, s: &CircuitState) -> Result<f64> {
        let mode = self.mode_at(s)?;
        Ok(self.dynamics(&mode).ok_or(Error::NoOperatingPoint)?.v_z.eval(&s.vec()))
    }

    /// Instantaneous voltages `(v_x, v_x complement)` at the hysteresis outputs.
    pub fn outputs(&mut self, s: &CircuitState) -> Result<(f64, f64)> {
        let mode = self.mode_at(s)?;
        let d = self.dynamics(&mode).ok_or(Error::NoOperatingPoint)?;
        let v = s.vec();
        Ok((d.v_x.eval(&v), d.v_x_complement.eval(&v)))
    }

    /// Integrates from `s0` over `[0, t_end]`.
    pub fn integrate(&mut self, s0: CircuitState, t_end: f64) -> Result<(Trace, CircuitState)> {
        if !(t_end > 0.0) {
            return Err(Error::InvalidParameter(format!("t_end must be positive, got {t_end}")));
        }
        let cfg = self.config.clone();
        let level = cfg.spike_level;
        let mut trace = Trace::new(&["vx", "vy", "vz"], Polarity::Down);
        let mut s = s0.vec();
        let mut mode = self.mode_at(&s0)?;
        let mut t = 0.0;
        let sample = |d: &ModeDynamics, s: &Vector3<f64>| vec![s[0], s[1], d.v_z.eval(s)];
        {
            let d = self.dynamics(&mode).ok_or(Error::NoOperatingPoint)?;
            trace.push(0.0, sample(&d, &s))?;
        }
        let breaks: Vec<f64> =
            cfg.stimulus.breakpoints().into_iter().filter(|b| *b > 0.0 && *b < t_end).collect();
        let mut next_break = 0;
        let mut n_rec: u64 = 1;
        let mut chatter = 0;
        let mut in_spike = s[0] <= level;
        let mut peak = (t, s[0]);

        while t < t_end {
            let next_rec = (n_rec as f64 * cfg.record_dt).min(t_end);
            let mut stop = (t + cfg.h_max).min(next_rec).min(t_end);
            if next_break < breaks.len() {
                stop = stop.min(breaks[next_break]);
            }
            let h_full = stop - t;
            let forcing = self.forcing(t);
            let d = self.dynamics(&mode).ok_or(Error::NoOperatingPoint)?;
            let c = d.k0 + forcing;
            let owned;
            let lad: &[(Matrix3<f64>, Matrix3<f64>)] = if h_full == cfg.h_max {
                &d.nominal
            } else {
                owned = ladder(&d.k, h_full, ladder_levels(h_full, cfg.event_tol, &d.k));
                &owned
            };
            let (phi, gamma) = lad[0];
            let mut s1 = phi * s + gamma * c;
            let mut h = h_full;
            let mut crossed = false;
            if !d.consistent(&s1) {
                (h, s1) = dyadic_search(lad, h_full, s, c, |x| d.consistent(x));
                crossed = true;
            }
            if !s1.iter().all(|v| v.is_finite()) {
                return Err(Error::StepFailure { t });
            }

            // Spike bookkeeping on the lagged v_x.
            if !in_spike && s[0] > level && s1[0] <= level {
                let (at, _) = dyadic_search(lad, h_full, s, c, |x| x[0] > level);
                trace.events.push(Event { time: t + at.min(h), kind: EventKind::SpikeOnset });
                in_spike = true;
                peak = (t + h, s1[0]);
            } else if in_spike {
                if s1[0] < peak.1 {
                    peak = (t + h, s1[0]);
                }
                if s1[0] > level {
                    trace.events.push(Event { time: peak.0, kind: EventKind::SpikePeak });
                    in_spike = false;
                }
            }

            t = if crossed { t + h } else { stop };
            s = s1;
            if crossed {
                trace.events.push(Event { time: t, kind: EventKind::RegionCrossing });
                let u = self.inputs(&s);
                mode = self.solver.find_mode(&u, &mode)?;
                chatter = if h <= 1e3 * cfg.event_tol { chatter + 1 } else { 0 };
                if chatter > CHATTER_LIMIT {
                    return Err(Error::StepFailure { t });
                }
            }
            if next_break < breaks.len() && t >= breaks[next_break] {
                next_break += 1;
            }
            if t >= next_rec {
                let d = self.dynamics(&mode).ok_or(Error::NoOperatingPoint)?;
                let row = sample(&d, &s);
                if t > *trace.times.last().unwrap_or(&-1.0) {
                    trace.push(t, row)?;
                }
                n_rec += 1;
            }
        }
        self.last_mode = mode;
        Ok((trace, CircuitState::from_vec(&s)))
    }

    /// Every equilibrium, found by solving the affine dynamics of each region
    /// combination and keeping the self-consistent solutions. With `v_z`
    /// frozen, `v_o` is held at `reference.v_o`.
    pub fn equilibria(&mut self, reference: &CircuitState) -> Vec<Equilibrium> {
        let frozen = self.config.frozen_vz.is_some();
        let forcing = self.forcing(0.0);
        let mut found: Vec<Equilibrium> = Vec::new();
        for code in 0..729usize {
            let mut mode = Vec::with_capacity(6);
            let mut c = code;
            for _ in 0..6 {
                mode.push(TransistorMode::ALL[c % 3]);
                c /= 3;
            }
            let Some(d) = self.dynamics(&mode) else { continue };
            let rhs = d.k0 + forcing;
            let (s, growth) = if frozen {
                let k2: Matrix2<f64> = d.k.fixed_view::<2, 2>(0, 0).into_owned();
                let b = Vector2::new(rhs[0], rhs[1]) + d.k.fixed_view::<2, 1>(0, 2) * reference.v_o;
                let Some(x) = k2.lu().solve(&(-b)) else { continue };
                let g = k2.complex_eigenvalues().iter().map(|e| e.re).fold(f64::MIN, f64::max);
                (Vector3::new(x[0], x[1], reference.v_o), g)
            } else {
                let Some(x) = d.k.lu().solve(&(-rhs)) else { continue };
                let g = d.k.complex_eigenvalues().iter().map(|e| e.re).fold(f64::MIN, f64::max);
                (x, g)
            };
            if !s.iter().all(|v| v.is_finite()) || !d.consistent(&s) {
                continue;
            }
            let state = CircuitState::from_vec(&s);
            if found.iter().any(|e| {
                (e.state.v_x - state.v_x).abs() + (e.state.v_y - state.v_y).abs() + (e.state.v_o - state.v_o).abs()
                    < 1e-6
            }) {
                continue;
            }
            found.push(Equilibrium { state, v_z: d.v_z.eval(&s), stable: growth < 0.0, growth_rate: growth, mode });
        }
        found.sort_by(|a, b| a.state.v_y.total_cmp(&b.state.v_y));
        found
    }
}

/// Derivative of the closed loop at `s`.
pub fn circuit_rhs(s: &CircuitState, c: &CircuitConfig, t: f64) -> Result<Derivative> {
    CircuitModel::new(c.clone())?.rhs(s, t)
}

/// Integrates a configuration from `s0` for `t_end` seconds.
pub fn circuit_integrate(s0: CircuitState, c: &CircuitConfig, t_end: f64) -> Result<Trace> {
    Ok(CircuitModel::new(c.clone())?.integrate(s0, t_end)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> TransistorModel {
        TransistorModel::default()
    }

    #[test]
    fn reference_time_constants() {
        let c = CircuitConfig::reference(model());
        assert!((c.tau_fast() - 0.82e-6).abs() < 1e-12);
        assert!((c.tau_slow() - 22e-9 * 15e3 * 47e3 / 62e3).abs() < 1e-12);
        assert!((c.tau_ultra() - 4.7e-6 * 2350.0).abs() < 1e-12);
        c.validate().unwrap();
    }

    #[test]
    fn ladder_matches_matrix_exponential() {
        let k = Matrix3::new(-1.2e6, 3.0e5, 0.0, 2.0e3, -4.0e3, 1.0e2, 0.0, 5.0, -90.0);
        let h = 2e-6;
        let lad = ladder(&k, h, ladder_levels(h, 1e-12, &k));
        for (j, (phi, gamma)) in lad.iter().enumerate().take(4) {
            let tau = h / 2f64.powi(j as i32);
            let mut m = SMatrix::<f64, 6, 6>::zeros();
            m.fixed_view_mut::<3, 3>(0, 0).copy_from(&(k * tau));
            m.fixed_view_mut::<3, 3>(0, 3).copy_from(&(Matrix3::identity() * tau));
            let e = m.exp();
            let (ep, eg) = ((phi - e.fixed_view::<3, 3>(0, 0)).abs().max(), (gamma - e.fixed_view::<3, 3>(0, 3)).abs().max() / tau);
            let tol = if j == 0 { 1e-13 } else { 1e-9 };
            assert!(ep < tol && eg < tol, "{j} {ep:e} {eg:e}");
        }
    }

    #[test]
    fn stimulus_pulses() {
        let s = Stimulus {
            baseline: 1e-6,
            steps: vec![CurrentStep { start: 1.0, duration: 2.0, amplitude: -3e-6 }],
        };
        assert_eq!(s.at(0.5), 1e-6);
        assert!((s.at(1.0) + 2e-6).abs() < 1e-18);
        assert_eq!(s.at(3.0), 1e-6);
        assert_eq!(s.breakpoints(), vec![1.0, 3.0]);
    }

    #[test]
    fn equilibria_have_zero_derivative() {
        let mut m = CircuitModel::new(CircuitConfig::reference(model())).unwrap();
        let eq = m.equilibria(&CircuitState::default());
        assert!(!eq.is_empty());
        for e in &eq {
            let d = m.rhs(&e.state, 0.0).unwrap();
            assert!(d.dvx.abs() < 1e-6 && d.dvy.abs() < 1e-6 && d.dvo.abs() < 1e-6, "{d:?}");
        }
    }

    #[test]
    fn states_stay_on_rails() {
        let mut m = CircuitModel::new(CircuitConfig::reference(model())).unwrap();
        let (tr, _) = m.integrate(CircuitState::default(), 5e-3).unwrap();
        for row in &tr.states {
            for v in row {
                assert!((-0.1..=5.1).contains(v), "{row:?}");
            }
        }
    }
}
