//! Fixtures shared by the benchmarks.

use burstsim_core::{deck_to_config, parse_deck, CircuitConfig, DeckOptions, REFERENCE_DECK};

/// Configuration of the reference deck with the analysis gain.
pub fn reference_config() -> CircuitConfig {
    deck_to_config(&parse_deck(REFERENCE_DECK).expect("reference deck parses"), DeckOptions::default())
        .expect("reference deck matches the template")
}

/// Evenly spaced grid over `[lo, hi]` with `n + 1` points.
pub fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}
