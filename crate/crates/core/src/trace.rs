//! Sampled trajectories and the events found while integrating them.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    SpikeOnset,
    SpikePeak,
    /// A transistor changed region.
    RegionCrossing,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::SpikeOnset => "spike_onset",
            EventKind::SpikePeak => "spike_peak",
            EventKind::RegionCrossing => "region_crossing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

/// Direction of a spike in the first trace column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Up,
    Down,
}

/// Time series of a few named state variables. The first column is the
/// spiking variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub labels: Vec<String>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub events: Vec<Event>,
    pub polarity: Polarity,
}

impl Trace {
    pub fn new(labels: &[&str], polarity: Polarity) -> Self {
        Self {
            labels: labels.iter().map(|s| s.to_string()).collect(),
            times: Vec::new(),
            states: Vec::new(),
            events: Vec::new(),
            polarity,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Appends a sample; times must increase strictly.
    pub fn push(&mut self, t: f64, state: Vec<f64>) -> Result<()> {
        if state.len() != self.labels.len() {
            return Err(Error::InvalidParameter(format!(
                "sample has {} values for {} columns",
                state.len(),
                self.labels.len()
            )));
        }
        if let Some(&last) = self.times.last() {
            if !(t > last) {
                return Err(Error::InvalidParameter(format!("time {t} does not follow {last}")));
            }
        }
        self.times.push(t);
        self.states.push(state);
        Ok(())
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[i]).collect()
    }

    pub fn event_times(&self, kind: EventKind) -> Vec<f64> {
        self.events.iter().filter(|e| e.kind == kind).map(|e| e.time).collect()
    }

    /// Samples with `t >= t0`, times shifted so the window starts at zero.
    pub fn window(&self, t0: f64) -> Trace {
        let mut out = Trace { labels: self.labels.clone(), polarity: self.polarity, ..Trace::new(&[], self.polarity) };
        for (t, s) in self.times.iter().zip(&self.states) {
            if *t >= t0 {
                out.times.push(t - t0);
                out.states.push(s.clone());
            }
        }
        out.events = self
            .events
            .iter()
            .filter(|e| e.time >= t0)
            .map(|e| Event { time: e.time - t0, kind: e.kind })
            .collect();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_rejects_non_increasing_time() {
        let mut tr = Trace::new(&["x"], Polarity::Up);
        tr.push(0.0, vec![1.0]).unwrap();
        assert!(tr.push(0.0, vec![1.0]).is_err());
        assert!(tr.push(1.0, vec![1.0, 2.0]).is_err());
        assert_eq!(tr.len(), 1);
    }

    #[test]
    fn window_shifts_time() {
        let mut tr = Trace::new(&["x"], Polarity::Up);
        for i in 0..10 {
            tr.push(i as f64, vec![i as f64]).unwrap();
        }
        tr.events.push(Event { time: 7.0, kind: EventKind::SpikeOnset });
        let w = tr.window(5.0);
        assert_eq!(w.times, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(w.column(0)[0], 5.0);
        assert_eq!(w.event_times(EventKind::SpikeOnset), vec![2.0]);
    }
}
