use burstsim_core::classify::{classify, FiringMode};
use burstsim_core::experiments::{excitability_experiment_with, ExcitabilitySettings};
use burstsim_core::netlist::{deck_to_config, parse_deck, DeckOptions, REFERENCE_DECK};
use burstsim_core::trace::EventKind;
use burstsim_core::{circuit_integrate, CircuitConfig, CircuitState, Error};

fn reference() -> CircuitConfig {
    deck_to_config(&parse_deck(REFERENCE_DECK).unwrap(), DeckOptions::default()).unwrap()
}

#[test]
fn reference_deck_bursts() {
    let c = reference();
    let tr = circuit_integrate(CircuitState::default(), &c, 40e-3).unwrap();
    let cl = classify(&tr, &c.classify_settings()).unwrap();
    assert_eq!(cl.mode, FiringMode::Bursting);
    assert!(cl.spikes_per_burst >= 2.0);
    assert!(cl.duty_cycle > 0.0 && cl.duty_cycle < 1.0);
}

#[test]
fn spike_events_match_classifier() {
    let c = reference();
    let tr = circuit_integrate(CircuitState::default(), &c, 20e-3).unwrap();
    let events = tr.event_times(EventKind::SpikeOnset).len();
    let detected = classify(&tr, &c.classify_settings()).unwrap().spike_times.len();
    assert!(events.abs_diff(detected) <= 2, "events {events}, detected {detected}");
}

#[test]
fn slower_ultra_loop_stretches_bursts() {
    let c = reference();
    let period = |c: &CircuitConfig| {
        let tr = circuit_integrate(CircuitState::default(), c, 60e-3).unwrap();
        let cl = classify(&tr, &c.classify_settings()).unwrap();
        assert_eq!(cl.mode, FiringMode::Bursting);
        cl.interburst_interval
    };
    let slow = CircuitConfig { c_o: 2.0 * c.c_o, ..c.clone() };
    assert!(period(&slow) > 1.5 * period(&c));
}

#[test]
fn oscillating_baseline_is_rejected() {
    let c = reference();
    let settings = ExcitabilitySettings { settle: 20e-3, tail: 5e-3 };
    assert!(matches!(excitability_experiment_with(&c, &[-20e-6], 1e-3, settings), Err(Error::NotAtRest(_))));
}

#[test]
fn silencing_step_gives_no_spikes() {
    let mut c = reference();
    c.stimulus.baseline = 30e-6;
    let r = excitability_experiment_with(&c, &[20e-6], 2e-3, ExcitabilitySettings::default()).unwrap();
    assert_eq!(r[0].spikes, 0);
}
