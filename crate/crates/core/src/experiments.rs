//! Experiments on the closed loop: the `v_z` hysteresis of the fast-slow
//! subsystem and the response to current steps.

use crate::circuit::{CircuitConfig, CircuitModel, CircuitState, CurrentStep, Stimulus};
use crate::error::{Error, Result};
use crate::trace::EventKind;

/// Settling and observation windows used at each frozen `v_z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RampSettings {
    pub settle: f64,
    pub observe: f64,
    /// Spikes in the observation window needed to call the state oscillating.
    pub min_spikes: usize,
}

impl Default for RampSettings {
    fn default() -> Self {
        Self { settle: 10e-3, observe: 2e-3, min_spikes: 2 }
    }
}

/// Attractor reached at one frozen `v_z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Rest,
    Oscillating,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RampPoint {
    pub v_z: f64,
    pub regime: Regime,
    pub spikes: usize,
}

fn frozen(c: &CircuitConfig, v_z: f64) -> CircuitConfig {
    let mut c = c.clone();
    c.frozen_vz = Some(v_z);
    c.stimulus = Stimulus::default();
    c
}

/// Steps `v_z` along `grid` in order, carrying the state from one value to
/// the next, and reports the attractor found at each value.
pub fn frozen_ramp(
    c: &CircuitConfig,
    grid: &[f64],
    start: CircuitState,
    settings: RampSettings,
) -> Result<Vec<RampPoint>> {
    Ok(ramp_states(c, grid, start, settings)?.into_iter().map(|(p, _)| p).collect())
}

fn ramp_states(
    c: &CircuitConfig,
    grid: &[f64],
    start: CircuitState,
    settings: RampSettings,
) -> Result<Vec<(RampPoint, CircuitState)>> {
    let mut s = start;
    let mut out = Vec::with_capacity(grid.len());
    for &vz in grid {
        let (p, end) = probe(c, vz, s, settings)?;
        out.push((p, end));
        s = end;
    }
    Ok(out)
}

fn probe(c: &CircuitConfig, vz: f64, s: CircuitState, settings: RampSettings) -> Result<(RampPoint, CircuitState)> {
    let mut m = CircuitModel::new(frozen(c, vz))?;
    let (_, settled) = m.integrate(s, settings.settle)?;
    let (tr, end) = m.integrate(settled, settings.observe)?;
    let spikes = tr.event_times(EventKind::SpikeOnset).len();
    let regime = if spikes >= settings.min_spikes { Regime::Oscillating } else { Regime::Rest };
    Ok((RampPoint { v_z: vz, regime, spikes }, end))
}

/// Bisects a transition bracketed by two neighbouring ramp points. The state
/// is always continued from the side that still shows the old regime, so the
/// ramp memory is kept. Returns the midpoint of the final bracket.
fn refine(
    c: &CircuitConfig,
    before: (RampPoint, CircuitState),
    after: f64,
    settings: RampSettings,
) -> Result<f64> {
    let (old, mut s) = (before.0.regime, before.1);
    let (mut a, mut b) = (before.0.v_z, after);
    for _ in 0..REFINE_STEPS {
        let mid = 0.5 * (a + b);
        let (p, end) = probe(c, mid, s, settings)?;
        if p.regime == old {
            a = mid;
            s = end;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

const REFINE_STEPS: usize = 6;

/// `v_z` values of the rest-to-oscillation transition on an upward ramp and
/// of the oscillation-to-rest transition on a downward ramp, with the
/// ultra-slow loop open.
pub fn z_transition_hysteresis(c: &CircuitConfig, vz_grid: &[f64]) -> Result<(f64, f64)> {
    z_transition_hysteresis_with(c, vz_grid, RampSettings::default())
}

pub fn z_transition_hysteresis_with(
    c: &CircuitConfig,
    vz_grid: &[f64],
    settings: RampSettings,
) -> Result<(f64, f64)> {
    let mut grid = vz_grid.to_vec();
    grid.sort_by(|a, b| a.total_cmp(b));
    let Some(&hi) = grid.last() else {
        return Err(Error::NoTransition);
    };
    // The first grid point settles the nominal state onto a rest node.
    let up = ramp_states(c, &grid, CircuitState::default(), settings)?;
    let mut m = CircuitModel::new(frozen(c, hi))?;
    let (_, top) = m.integrate(CircuitState { v_x: 5.0, v_y: 1.0, v_o: CircuitState::default().v_o }, settings.settle)?;
    let down_grid: Vec<f64> = grid.iter().rev().copied().collect();
    let down = ramp_states(c, &down_grid, top, settings)?;

    let vz_up = up
        .windows(2)
        .find(|w| w[0].0.regime == Regime::Rest && w[1].0.regime == Regime::Oscillating)
        .map(|w| refine(c, w[0], w[1].0.v_z, settings))
        .transpose()?;
    let vz_down = down
        .windows(2)
        .find(|w| w[0].0.regime == Regime::Oscillating && w[1].0.regime == Regime::Rest)
        .map(|w| refine(c, w[0], w[1].0.v_z, settings))
        .transpose()?;
    log::debug!("z ramp up: {vz_up:?}, down: {vz_down:?}");
    match (vz_up, vz_down) {
        (Some(u), Some(d)) => Ok((u, d)),
        _ => Err(Error::NoTransition),
    }
}

/// One row of an excitability table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcitabilityResponse {
    pub amplitude: f64,
    /// Time from the first to the last spike, plus one interspike interval.
    pub response_duration: f64,
    pub mean_spike_frequency: f64,
    pub spikes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcitabilitySettings {
    /// Time allowed for the circuit to reach rest before the step.
    pub settle: f64,
    /// Time observed after the step ends.
    pub tail: f64,
}

impl Default for ExcitabilitySettings {
    fn default() -> Self {
        Self { settle: 60e-3, tail: 40e-3 }
    }
}

/// Applies each current step on top of the configured baseline, starting
/// from rest, and measures the spiking response.
pub fn excitability_experiment(
    c: &CircuitConfig,
    step_amplitudes: &[f64],
    step_duration: f64,
) -> Result<Vec<ExcitabilityResponse>> {
    excitability_experiment_with(c, step_amplitudes, step_duration, ExcitabilitySettings::default())
}

pub fn excitability_experiment_with(
    c: &CircuitConfig,
    step_amplitudes: &[f64],
    step_duration: f64,
    settings: ExcitabilitySettings,
) -> Result<Vec<ExcitabilityResponse>> {
    let mut base = c.clone();
    base.stimulus.steps.clear();
    let mut m = CircuitModel::new(base.clone())?;
    let (tr, rest) = m.integrate(CircuitState::default(), settings.settle)?;
    let late = tr.window(0.5 * settings.settle).event_times(EventKind::SpikeOnset).len();
    if late > 0 {
        return Err(Error::NotAtRest(late));
    }
    let mut out = Vec::with_capacity(step_amplitudes.len());
    for &a in step_amplitudes {
        let mut cfg = base.clone();
        cfg.stimulus.steps.push(CurrentStep { start: 0.0, duration: step_duration, amplitude: a });
        let mut m = CircuitModel::new(cfg)?;
        let (tr, _) = m.integrate(rest, step_duration + settings.tail)?;
        let sp = tr.event_times(EventKind::SpikeOnset);
        out.push(response(a, &sp));
    }
    Ok(out)
}

fn response(amplitude: f64, spikes: &[f64]) -> ExcitabilityResponse {
    match spikes {
        [] => ExcitabilityResponse { amplitude, response_duration: 0.0, mean_spike_frequency: 0.0, spikes: 0 },
        [_] => ExcitabilityResponse { amplitude, response_duration: 0.0, mean_spike_frequency: 0.0, spikes: 1 },
        _ => {
            let span = spikes[spikes.len() - 1] - spikes[0];
            let isi = span / (spikes.len() - 1) as f64;
            ExcitabilityResponse {
                amplitude,
                response_duration: span + isi,
                mean_spike_frequency: 1.0 / isi,
                spikes: spikes.len(),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn response_summary() {
        let r = response(-1e-6, &[0.0, 1e-3, 2e-3]);
        assert_eq!(r.spikes, 3);
        assert!((r.mean_spike_frequency - 1000.0).abs() < 1e-9);
        assert!((r.response_duration - 3e-3).abs() < 1e-15);
        assert_eq!(response(0.0, &[]).response_duration, 0.0);
    }

    #[test]
    fn empty_grid_has_no_transition() {
        let c = CircuitConfig::reference(crate::blocks::TransistorModel::default());
        assert_eq!(z_transition_hysteresis(&c, &[]), Err(Error::NoTransition));
    }
}
