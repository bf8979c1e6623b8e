//! Spike detection and tonic/bursting classification of a trace.

use crate::error::{Error, Result};
use crate::trace::{Polarity, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FiringMode {
    Quiescent,
    Tonic,
    Bursting,
    /// Spikes whose intervals fit neither the tonic nor the bursting pattern.
    Irregular,
}

impl FiringMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FiringMode::Quiescent => "quiescent",
            FiringMode::Tonic => "tonic",
            FiringMode::Bursting => "bursting",
            FiringMode::Irregular => "irregular",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub mode: FiringMode,
    /// Mean spike count of the complete bursts (1 for tonic firing).
    pub spikes_per_burst: f64,
    /// Mean interval between spikes inside a burst.
    pub interspike_interval: f64,
    /// Mean silent interval from the last spike of a burst to the next burst.
    pub interburst_interval: f64,
    /// Fraction of the burst period spent firing.
    pub duty_cycle: f64,
    /// Coefficient of variation over all interspike intervals.
    pub isi_cv: f64,
    pub spike_times: Vec<f64>,
}

/// Detection parameters. The refractory window is a time and therefore
/// scales with the trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifySettings {
    pub refractory: f64,
    /// Hysteresis band as a fraction of the 5th to 95th percentile span.
    pub hysteresis: f64,
    pub lower_percentile: f64,
    pub upper_percentile: f64,
    /// Traces whose full range is below this are quiescent.
    pub min_swing: f64,
}

impl ClassifySettings {
    /// Refractory window of twenty fast time constants.
    pub fn from_tau_fast(tau_fast: f64) -> Self {
        Self { refractory: 20.0 * tau_fast, hysteresis: 0.1, lower_percentile: 5.0, upper_percentile: 95.0, min_swing: 1e-3 }
    }
}

/// Burst pattern thresholds.
const BURST_RATIO: f64 = 5.0;
const TONIC_CV: f64 = 0.2;
/// Minimum ratio between the shortest long interval and the longest short
/// interval for the interval set to count as bimodal.
const BIMODAL_GAP: f64 = 2.0;
const MIN_TONIC_INTERVALS: usize = 10;
const MIN_BURST_GAPS: usize = 2;
/// Percentile span, relative to the full range, below which the trace is
/// treated as a sparse spike train.
const SPARSE_SPAN: f64 = 0.1;

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (pos - i as f64) * (sorted[j] - sorted[i])
}

/// Upward threshold crossings of the spiking column (downward ones for
/// traces with `Polarity::Down`), with hysteresis and a refractory window.
pub fn detect_spikes(tr: &Trace, settings: &ClassifySettings) -> Vec<f64> {
    if tr.len() < 2 || tr.labels.is_empty() {
        return Vec::new();
    }
    let sign = match tr.polarity {
        Polarity::Up => 1.0,
        Polarity::Down => -1.0,
    };
    let x: Vec<f64> = tr.states.iter().map(|s| sign * s[0]).collect();
    let mut sorted = x.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    if max - min <= settings.min_swing {
        return Vec::new();
    }
    let mut lo = percentile(&sorted, settings.lower_percentile);
    let mut hi = percentile(&sorted, settings.upper_percentile);
    // Sparse spikes occupy less than the percentile tails; use the extremes.
    if hi - lo < SPARSE_SPAN * (max - min) {
        (lo, hi) = (min, max);
    }
    let mid = 0.5 * (lo + hi);
    let band = 0.5 * settings.hysteresis * (hi - lo);
    let (on, off) = (mid + band, mid - band);
    let mut armed = x[0] < off;
    let mut spikes: Vec<f64> = Vec::new();
    for k in 1..x.len() {
        if armed && x[k - 1] < on && x[k] >= on {
            let f = (on - x[k - 1]) / (x[k] - x[k - 1]);
            let t = tr.times[k - 1] + f * (tr.times[k] - tr.times[k - 1]);
            if spikes.last().is_none_or(|&last| t - last >= settings.refractory) {
                spikes.push(t);
            }
            armed = false;
        } else if !armed && x[k] < off {
            armed = true;
        }
    }
    spikes
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn cv(v: &[f64]) -> f64 {
    let m = mean(v);
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
    var.sqrt() / m
}

/// Splits the intervals at the largest ratio between consecutive sorted
/// values. Returns the threshold separating short from long intervals when
/// the split is wide enough.
fn bimodal_split(isi: &[f64]) -> Option<f64> {
    let mut s = isi.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let (k, ratio) = s
        .windows(2)
        .enumerate()
        .map(|(k, w)| (k, w[1] / w[0]))
        .max_by(|a, b| a.1.total_cmp(&b.1))?;
    (ratio >= BIMODAL_GAP).then(|| (s[k] * s[k + 1]).sqrt())
}

pub fn classify(tr: &Trace, settings: &ClassifySettings) -> Result<Classification> {
    if tr.len() < 3 {
        return Err(Error::TooShort(format!("{} samples", tr.len())));
    }
    let spikes = detect_spikes(tr, settings);
    classify_spikes(&spikes)
}

/// Classification from spike times alone.
pub fn classify_spikes(spikes: &[f64]) -> Result<Classification> {
    let quiet = Classification {
        mode: FiringMode::Quiescent,
        spikes_per_burst: 0.0,
        interspike_interval: 0.0,
        interburst_interval: 0.0,
        duty_cycle: 0.0,
        isi_cv: 0.0,
        spike_times: spikes.to_vec(),
    };
    if spikes.is_empty() {
        return Ok(quiet);
    }
    if spikes.len() < 3 {
        return Err(Error::TooShort(format!("{} spikes", spikes.len())));
    }
    let isi: Vec<f64> = spikes.windows(2).map(|w| w[1] - w[0]).collect();
    let isi_cv = cv(&isi);
    let min = isi.iter().copied().fold(f64::INFINITY, f64::min);
    let max = isi.iter().copied().fold(0.0, f64::max);

    if max / min > BURST_RATIO {
        if let Some(split) = bimodal_split(&isi) {
            let gaps = isi.iter().filter(|&&d| d > split).count();
            if gaps < MIN_BURST_GAPS {
                return Err(Error::TooShort(format!("{gaps} interburst gaps")));
            }
            let mut bursts: Vec<Vec<f64>> = vec![vec![spikes[0]]];
            for (w, &d) in spikes.windows(2).zip(&isi) {
                if d > split {
                    bursts.push(Vec::new());
                }
                bursts.last_mut().unwrap().push(w[1]);
            }
            // The first and last bursts may be cut by the trace ends.
            let complete: &[Vec<f64>] = if bursts.len() >= 3 { &bursts[1..bursts.len() - 1] } else { &bursts };
            let spikes_per_burst = complete.iter().map(|b| b.len() as f64).sum::<f64>() / complete.len() as f64;
            let short: Vec<f64> = isi.iter().copied().filter(|&d| d <= split).collect();
            let long: Vec<f64> = isi.iter().copied().filter(|&d| d > split).collect();
            let interspike_interval = mean(&short);
            let interburst_interval = mean(&long);
            let active = complete.iter().map(|b| b[b.len() - 1] - b[0] + interspike_interval).sum::<f64>()
                / complete.len() as f64;
            let period = (bursts[bursts.len() - 1][0] - bursts[0][0]) / (bursts.len() - 1) as f64;
            let out = Classification {
                mode: FiringMode::Bursting,
                spikes_per_burst,
                interspike_interval,
                interburst_interval,
                duty_cycle: (active / period).min(1.0),
                isi_cv,
                spike_times: spikes.to_vec(),
            };
            if spikes_per_burst >= 2.0 && interburst_interval >= BURST_RATIO * interspike_interval {
                return Ok(out);
            }
            return Ok(Classification { mode: FiringMode::Irregular, ..out });
        }
    }
    let m = mean(&isi);
    let base = Classification {
        mode: FiringMode::Irregular,
        spikes_per_burst: 1.0,
        interspike_interval: m,
        interburst_interval: m,
        duty_cycle: 0.0,
        isi_cv,
        spike_times: spikes.to_vec(),
    };
    if isi_cv < TONIC_CV {
        if isi.len() < MIN_TONIC_INTERVALS {
            return Err(Error::TooShort(format!("{} interspike intervals", isi.len())));
        }
        return Ok(Classification { mode: FiringMode::Tonic, ..base });
    }
    Ok(base)
}

/// Spike train with groups of `per_burst` spikes `isi` apart, one group every
/// `period` starting at `isi`, sampled every `dt` as unit pulses of width
/// `width` on a zero baseline.
pub fn synthetic_train(per_burst: usize, isi: f64, period: f64, t_end: f64, dt: f64, width: f64) -> Trace {
    let n = (t_end / dt).round() as usize;
    let w = (width / dt).round().max(1.0) as usize;
    let mut on = vec![false; n + 1];
    let mut b = 0;
    'outer: loop {
        for j in 0..per_burst {
            let k = ((isi + b as f64 * period + j as f64 * isi) / dt).round() as usize;
            if k > n {
                break 'outer;
            }
            on[k..(k + w).min(n + 1)].iter_mut().for_each(|x| *x = true);
        }
        b += 1;
    }
    let mut tr = Trace::new(&["x"], Polarity::Up);
    for (k, x) in on.into_iter().enumerate() {
        tr.push(k as f64 * dt, vec![x as u8 as f64]).unwrap();
    }
    tr
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(refractory: f64) -> ClassifySettings {
        ClassifySettings { refractory, ..ClassifySettings::from_tau_fast(0.0) }
    }

    #[test]
    fn constant_trace_is_quiescent() {
        let mut tr = Trace::new(&["x"], Polarity::Up);
        for k in 0..100 {
            tr.push(k as f64, vec![2.0]).unwrap();
        }
        assert_eq!(classify(&tr, &settings(1.0)).unwrap().mode, FiringMode::Quiescent);
    }

    #[test]
    fn uniform_train_is_tonic() {
        let tr = synthetic_train(1, 1e-3, 1e-3, 30e-3, 1e-5, 2e-4);
        let c = classify(&tr, &settings(2e-5)).unwrap();
        assert_eq!(c.mode, FiringMode::Tonic);
        assert!((c.interspike_interval - 1e-3).abs() < 1e-6);
        assert!(c.isi_cv < 1e-6);
    }

    #[test]
    fn grouped_train_is_bursting() {
        let tr = synthetic_train(4, 1e-3, 20e-3, 100e-3, 1e-5, 2e-4);
        let c = classify(&tr, &settings(2e-5)).unwrap();
        assert_eq!(c.mode, FiringMode::Bursting);
        assert_eq!(c.spikes_per_burst, 4.0);
        assert!((c.interspike_interval - 1e-3).abs() < 1e-6);
        assert!((c.interburst_interval - 17e-3).abs() < 1e-6);
        assert!((c.duty_cycle - 0.2).abs() < 1e-6);
    }

    #[test]
    fn down_polarity_detects_dips() {
        let up = synthetic_train(1, 1e-3, 1e-3, 30e-3, 1e-5, 2e-4);
        let mut down = Trace::new(&["x"], Polarity::Down);
        for (t, s) in up.times.iter().zip(&up.states) {
            down.push(*t, vec![5.0 - s[0]]).unwrap();
        }
        assert_eq!(detect_spikes(&down, &settings(2e-5)), detect_spikes(&up, &settings(2e-5)));
    }

    #[test]
    fn refractory_window_merges_ringing() {
        let mut tr = Trace::new(&["x"], Polarity::Up);
        for k in 0..2000 {
            // Two sub-pulses 50 us apart inside every 1 ms spike.
            let on = matches!(k % 100, 10 | 11 | 15 | 16);
            tr.push(k as f64 * 1e-5, vec![on as u8 as f64]).unwrap();
        }
        assert_eq!(detect_spikes(&tr, &settings(1e-6)).len(), 40);
        assert_eq!(detect_spikes(&tr, &settings(2e-4)).len(), 20);
    }

    #[test]
    fn time_rescaling_keeps_verdict() {
        let tr = synthetic_train(3, 1e-3, 15e-3, 100e-3, 1e-5, 2e-4);
        let mut scaled = tr.clone();
        scaled.times.iter_mut().for_each(|t| *t *= 1000.0);
        let a = classify(&tr, &settings(2e-5)).unwrap();
        let b = classify(&scaled, &settings(2e-2)).unwrap();
        assert_eq!(a.mode, b.mode);
        assert_eq!(a.spikes_per_burst, b.spikes_per_burst);
        assert!((b.interburst_interval / a.interburst_interval - 1000.0).abs() < 1e-6);
    }

    #[test]
    fn too_few_spikes() {
        assert!(matches!(classify_spikes(&[0.0, 1.0]), Err(Error::TooShort(_))));
        assert!(matches!(classify_spikes(&[0.0, 1.0, 2.0, 3.0]), Err(Error::TooShort(_))));
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[0.0, 1.0, 2.0], 50.0), 1.0);
        assert_eq!(percentile(&[0.0, 10.0], 25.0), 2.5);
    }
}
