//! Piecewise-linear model of a three-timescale neuromorphic burster built
//! from six bipolar transistors.

pub mod blocks;
pub mod circuit;
pub mod classify;
pub mod error;
pub mod experiments;
pub mod io;
pub mod netlist;
pub mod network;
pub mod normal_form;
pub mod pwl;
pub mod trace;

pub use blocks::{
    mirrored_hysteresis_sweep, CascadeParams, Gains, SweepDirection, SweepResult, TransistorModel,
};
pub use circuit::{circuit_integrate, CircuitConfig, CircuitModel, CircuitState, CurrentStep, Stimulus};
pub use classify::{classify, Classification, ClassifySettings, FiringMode};
pub use error::{Error, Result};
pub use experiments::{excitability_experiment, z_transition_hysteresis, ExcitabilityResponse};
pub use netlist::{deck_to_config, parse_deck, Deck, DeckOptions, REFERENCE_DECK};
pub use normal_form::{nf_integrate, NfSettings, NfState, NormalFormParams};
pub use trace::{Polarity, Trace};
