//! Resistive network with switch-level transistors, solved exactly for a
//! given combination of transistor regions.
//!
//! Some nodes are driven externally (ground, supply, capacitor voltages);
//! they form the input vector `u`. Once every transistor's region is fixed
//! the network is linear, so every node voltage and device current is an
//! affine function of `u`. Those maps are cached per region combination.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::blocks::{TransistorMode, TransistorModel};
use crate::error::{Error, Result};

/// Voltage tolerance of the region consistency checks.
pub const MODE_TOL_V: f64 = 1e-9;
/// Current tolerance of the region consistency checks.
pub const MODE_TOL_I: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Resistor {
    pub name: String,
    pub a: usize,
    pub b: usize,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bjt {
    pub name: String,
    pub c: usize,
    pub b: usize,
    pub e: usize,
}

/// A resistor from input node `source` into `target` whose current is drawn
/// from node `tap` instead of `source`. Used for a delayed copy of `tap`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transfer {
    pub source: usize,
    pub target: usize,
    pub tap: usize,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub resistors: Vec<Resistor>,
    pub bjts: Vec<Bjt>,
    pub transfers: Vec<Transfer>,
    pub model: TransistorModel,
    /// Externally driven nodes; their order defines the input vector.
    pub inputs: Vec<usize>,
}

/// `value = coeffs . u + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub coeffs: DVector<f64>,
    pub offset: f64,
}

impl Affine {
    fn zero(n: usize) -> Self {
        Self { coeffs: DVector::zeros(n), offset: 0.0 }
    }

    pub fn eval(&self, u: &DVector<f64>) -> f64 {
        self.coeffs.dot(u) + self.offset
    }

    fn axpy(&mut self, k: f64, o: &Affine) {
        self.coeffs.axpy(k, &o.coeffs, 1.0);
        self.offset += k * o.offset;
    }
}

/// A region condition `value >= -tol`; when violated the device should move
/// to `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub value: Affine,
    pub tol: f64,
    pub device: usize,
    pub target: TransistorMode,
}

/// Affine solution of the network for one region combination.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSolution {
    pub voltages: Vec<Affine>,
    pub base_currents: Vec<Affine>,
    pub collector_currents: Vec<Affine>,
    /// Current delivered by the network into each input node.
    pub input_currents: Vec<Affine>,
    pub constraints: Vec<Constraint>,
}

impl ModeSolution {
    /// First violated region condition at `u`.
    pub fn violation(&self, u: &DVector<f64>) -> Option<&Constraint> {
        self.constraints.iter().find(|c| c.value.eval(u) < -c.tol)
    }
}

pub type Mode = Vec<TransistorMode>;

/// Network plus a cache of solved region combinations.
#[derive(Debug, Clone)]
pub struct NetworkSolver {
    pub net: Network,
    n_nodes: usize,
    cache: HashMap<Mode, Option<ModeSolution>>,
}

enum Slot {
    Free(usize),
    Input(usize),
}

impl NetworkSolver {
    pub fn new(net: Network) -> Result<Self> {
        net.model.validate()?;
        let mut n_nodes = 0;
        for r in &net.resistors {
            if !(r.r > 0.0) {
                return Err(Error::InvalidParameter(format!("{} must be positive", r.name)));
            }
            n_nodes = n_nodes.max(r.a + 1).max(r.b + 1);
        }
        for q in &net.bjts {
            n_nodes = n_nodes.max(q.c + 1).max(q.b + 1).max(q.e + 1);
        }
        for t in &net.transfers {
            n_nodes = n_nodes.max(t.source + 1).max(t.target + 1).max(t.tap + 1);
        }
        for &i in &net.inputs {
            n_nodes = n_nodes.max(i + 1);
        }
        Ok(Self { net, n_nodes, cache: HashMap::new() })
    }

    pub fn n_inputs(&self) -> usize {
        self.net.inputs.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn cached_modes(&self) -> usize {
        self.cache.len()
    }

    fn slots(&self) -> (Vec<Slot>, usize) {
        let mut slots = Vec::with_capacity(self.n_nodes);
        let mut free = 0;
        for n in 0..self.n_nodes {
            if let Some(k) = self.net.inputs.iter().position(|&i| i == n) {
                slots.push(Slot::Input(k));
            } else {
                slots.push(Slot::Free(free));
                free += 1;
            }
        }
        (slots, free)
    }

    /// Affine solution for `mode`, or `None` when that combination leaves the
    /// network singular.
    pub fn solve_mode(&mut self, mode: &[TransistorMode]) -> Option<&ModeSolution> {
        if !self.cache.contains_key(mode) {
            let sol = self.build(mode);
            self.cache.insert(mode.to_vec(), sol);
        }
        self.cache.get(mode).and_then(|s| s.as_ref())
    }

    fn build(&self, mode: &[TransistorMode]) -> Option<ModeSolution> {
        let net = &self.net;
        let beta = net.model.beta;
        let nu = net.inputs.len();
        let (slots, n_free) = self.slots();
        let mut ib_col = vec![None; net.bjts.len()];
        let mut ic_col = vec![None; net.bjts.len()];
        let mut n = n_free;
        for (k, m) in mode.iter().enumerate() {
            if *m != TransistorMode::Cutoff {
                ib_col[k] = Some(n);
                n += 1;
            }
        }
        for (k, m) in mode.iter().enumerate() {
            if *m == TransistorMode::Saturated {
                ic_col[k] = Some(n);
                n += 1;
            }
        }
        // A x = B u + c
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut b = DMatrix::<f64>::zeros(n, nu);
        let mut c = DVector::<f64>::zeros(n);

        // Current `g * (v_p - v_q)` leaving node `row`.
        let leave = |a: &mut DMatrix<f64>, b: &mut DMatrix<f64>, row: usize, p: usize, q: usize, g: f64| {
            let Slot::Free(r) = slots[row] else { return };
            for (node, s) in [(p, g), (q, -g)] {
                match slots[node] {
                    Slot::Free(j) => a[(r, j)] += s,
                    Slot::Input(j) => b[(r, j)] -= s,
                }
            }
        };
        for res in &net.resistors {
            let g = 1.0 / res.r;
            leave(&mut a, &mut b, res.a, res.a, res.b, g);
            leave(&mut a, &mut b, res.b, res.b, res.a, g);
        }
        for t in &net.transfers {
            let g = 1.0 / t.r;
            // Current g (v_source - v_target) enters `target` and leaves `tap`.
            leave(&mut a, &mut b, t.target, t.target, t.source, g);
            leave(&mut a, &mut b, t.tap, t.source, t.target, g);
        }
        // Device current `x[col] * k` leaving `node`.
        let device = |a: &mut DMatrix<f64>, node: usize, col: usize, k: f64| {
            if let Slot::Free(r) = slots[node] {
                a[(r, col)] += k;
            }
        };
        // Row enforcing v_p - v_q = value.
        let pin = |a: &mut DMatrix<f64>, b: &mut DMatrix<f64>, c: &mut DVector<f64>, row: usize, p: usize, q: usize, value: f64| {
            for (node, s) in [(p, 1.0), (q, -1.0)] {
                match slots[node] {
                    Slot::Free(j) => a[(row, j)] += s,
                    Slot::Input(j) => b[(row, j)] -= s,
                }
            }
            c[row] += value;
        };
        for (k, q) in net.bjts.iter().enumerate() {
            if let Some(col) = ib_col[k] {
                device(&mut a, q.b, col, 1.0);
                device(&mut a, q.e, col, -1.0);
                pin(&mut a, &mut b, &mut c, col, q.b, q.e, net.model.v_on);
                if mode[k] == TransistorMode::Active {
                    device(&mut a, q.c, col, beta);
                    device(&mut a, q.e, col, -beta);
                }
            }
            if let Some(col) = ic_col[k] {
                device(&mut a, q.c, col, 1.0);
                device(&mut a, q.e, col, -1.0);
                pin(&mut a, &mut b, &mut c, col, q.c, q.e, net.model.v_ce_sat);
            }
        }

        let lu = a.lu();
        let p = lu.solve(&b)?;
        let q = lu.solve(&c)?;
        if !p.iter().chain(q.iter()).all(|v| v.is_finite()) {
            return None;
        }
        let unknown = |col: usize| Affine { coeffs: p.row(col).transpose(), offset: q[col] };

        let voltages: Vec<Affine> = slots
            .iter()
            .map(|s| match *s {
                Slot::Free(j) => unknown(j),
                Slot::Input(j) => {
                    let mut v = Affine::zero(nu);
                    v.coeffs[j] = 1.0;
                    v
                }
            })
            .collect();
        let base_currents: Vec<Affine> =
            ib_col.iter().map(|c| c.map_or_else(|| Affine::zero(nu), unknown)).collect();
        let collector_currents: Vec<Affine> = (0..net.bjts.len())
            .map(|k| match (mode[k], ic_col[k]) {
                (TransistorMode::Saturated, Some(col)) => unknown(col),
                (TransistorMode::Active, _) => {
                    let mut v = Affine::zero(nu);
                    v.axpy(beta, &base_currents[k]);
                    v
                }
                _ => Affine::zero(nu),
            })
            .collect();

        let mut input_currents: Vec<Affine> = vec![Affine::zero(nu); nu];
        let input_slot = |node: usize| match slots[node] {
            Slot::Input(j) => Some(j),
            Slot::Free(_) => None,
        };
        for res in &net.resistors {
            let g = 1.0 / res.r;
            for (here, there) in [(res.a, res.b), (res.b, res.a)] {
                if let Some(j) = input_slot(here) {
                    input_currents[j].axpy(g, &voltages[there]);
                    input_currents[j].axpy(-g, &voltages[here]);
                }
            }
        }
        for t in &net.transfers {
            let g = 1.0 / t.r;
            if let Some(j) = input_slot(t.target) {
                input_currents[j].axpy(g, &voltages[t.source]);
                input_currents[j].axpy(-g, &voltages[t.target]);
            }
            if let Some(j) = input_slot(t.tap) {
                input_currents[j].axpy(-g, &voltages[t.source]);
                input_currents[j].axpy(g, &voltages[t.target]);
            }
        }
        for (k, qd) in net.bjts.iter().enumerate() {
            let (ib, ic) = (&base_currents[k], &collector_currents[k]);
            if let Some(j) = input_slot(qd.b) {
                input_currents[j].axpy(-1.0, ib);
            }
            if let Some(j) = input_slot(qd.c) {
                input_currents[j].axpy(-1.0, ic);
            }
            if let Some(j) = input_slot(qd.e) {
                input_currents[j].axpy(1.0, ib);
                input_currents[j].axpy(1.0, ic);
            }
        }

        let mut constraints = Vec::new();
        for (k, qd) in net.bjts.iter().enumerate() {
            let mut vbe = voltages[qd.b].clone();
            vbe.axpy(-1.0, &voltages[qd.e]);
            let mut vce = voltages[qd.c].clone();
            vce.axpy(-1.0, &voltages[qd.e]);
            let mk = |value: Affine, tol: f64, target: TransistorMode| Constraint { value, tol, device: k, target };
            match mode[k] {
                TransistorMode::Cutoff => {
                    let mut v = Affine::zero(nu);
                    v.offset = net.model.v_on;
                    v.axpy(-1.0, &vbe);
                    constraints.push(mk(v, MODE_TOL_V, TransistorMode::Active));
                }
                TransistorMode::Active => {
                    constraints.push(mk(base_currents[k].clone(), MODE_TOL_I, TransistorMode::Cutoff));
                    let mut v = vce;
                    v.offset -= net.model.v_ce_sat;
                    constraints.push(mk(v, MODE_TOL_V, TransistorMode::Saturated));
                }
                TransistorMode::Saturated => {
                    constraints.push(mk(base_currents[k].clone(), MODE_TOL_I, TransistorMode::Cutoff));
                    let mut v = Affine::zero(nu);
                    v.axpy(beta, &base_currents[k]);
                    v.axpy(-1.0, &collector_currents[k]);
                    constraints.push(mk(v, MODE_TOL_I, TransistorMode::Active));
                    constraints.push(mk(collector_currents[k].clone(), MODE_TOL_I, TransistorMode::Cutoff));
                }
            }
        }
        Some(ModeSolution { voltages, base_currents, collector_currents, input_currents, constraints })
    }

    /// Region combination consistent with inputs `u`, searched from `start`
    /// by flipping violated devices, then by enumeration.
    pub fn find_mode(&mut self, u: &DVector<f64>, start: &[TransistorMode]) -> Result<Mode> {
        let mut mode = start.to_vec();
        for _ in 0..4 * self.net.bjts.len().max(1) * 3 {
            let next = match self.solve_mode(&mode) {
                Some(sol) => match sol.violation(u) {
                    None => return Ok(mode),
                    Some(c) => (c.device, c.target),
                },
                None => break,
            };
            mode[next.0] = next.1;
        }
        let nb = self.net.bjts.len();
        let total = 3usize.pow(nb as u32);
        for code in 0..total {
            let mut m = Vec::with_capacity(nb);
            let mut c = code;
            for _ in 0..nb {
                m.push(TransistorMode::ALL[c % 3]);
                c /= 3;
            }
            if let Some(sol) = self.solve_mode(&m) {
                if sol.violation(u).is_none() {
                    log::debug!("region search fell back to enumeration");
                    return Ok(m);
                }
            }
        }
        Err(Error::NoOperatingPoint)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn r(name: &str, a: usize, b: usize, r: f64) -> Resistor {
        Resistor { name: name.into(), a, b, r }
    }

    // Single common-emitter stage: 0 ground, 1 supply, 2 input.
    fn ce_stage() -> NetworkSolver {
        NetworkSolver::new(Network {
            resistors: vec![r("rc", 1, 3, 16e3), r("rb", 2, 4, 100e3), r("re", 5, 0, 10e3)],
            bjts: vec![Bjt { name: "q".into(), c: 3, b: 4, e: 5 }],
            transfers: vec![],
            model: TransistorModel::default(),
            inputs: vec![0, 1, 2],
        })
        .unwrap()
    }

    #[test]
    fn divider() {
        let mut s = NetworkSolver::new(Network {
            resistors: vec![r("a", 1, 2, 1e3), r("b", 2, 0, 3e3)],
            bjts: vec![],
            transfers: vec![],
            model: TransistorModel::default(),
            inputs: vec![0, 1],
        })
        .unwrap();
        let u = DVector::from_vec(vec![0.0, 4.0]);
        let sol = s.solve_mode(&[]).unwrap();
        assert_abs_diff_eq!(sol.voltages[2].eval(&u), 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.input_currents[1].eval(&u), -1e-3, epsilon = 1e-15);
    }

    #[test]
    fn ce_stage_matches_closed_form() {
        use crate::blocks::SaturationParams;
        let block = SaturationParams::new(100e3, 16e3, 10e3, 5.0, TransistorModel::default());
        let mut s = ce_stage();
        let mut mode = vec![TransistorMode::Cutoff];
        for i in 0..=50 {
            let vin = 0.1 * i as f64;
            let u = DVector::from_vec(vec![0.0, 5.0, vin]);
            mode = s.find_mode(&u, &mode).unwrap();
            let vc = s.solve_mode(&mode).unwrap().voltages[3].eval(&u);
            if vin < 2.4 {
                assert_abs_diff_eq!(vc, block.eval(vin), epsilon = 1e-9);
            }
            assert!(vc >= block.eval(vin) - 0.05);
        }
        assert_eq!(mode, vec![TransistorMode::Saturated]);
    }

    #[test]
    fn currents_balance() {
        let mut s = ce_stage();
        let u = DVector::from_vec(vec![0.0, 5.0, 1.5]);
        let m = s.find_mode(&u, &[TransistorMode::Cutoff]).unwrap();
        let sol = s.solve_mode(&m).unwrap();
        let total: f64 = sol.input_currents.iter().map(|c| c.eval(&u)).sum();
        assert_abs_diff_eq!(total, 0.0, epsilon = 1e-15);
    }
}
