use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::chi2::chi2_quantile;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Chi-square confidence level of the per-sample threshold.
    pub confidence: f64,
    /// Exceedances needed within the last `window_n` samples to open an event.
    pub window_m: usize,
    pub window_n: usize,
    /// Consecutive in-bound samples that close an event.
    pub recovery_n: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            confidence: 0.99,
            window_m: 3,
            window_n: 5,
            recovery_n: 5,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(invalid("confidence", format!("must lie in (0, 1), got {}", self.confidence)));
        }
        if self.window_m == 0 || self.window_m > self.window_n {
            return Err(invalid(
                "window",
                format!("need 1 <= M <= N, got {}-of-{}", self.window_m, self.window_n),
            ));
        }
        if self.recovery_n == 0 {
            return Err(invalid("recovery_n", "must be at least 1"));
        }
        Ok(())
    }
}

/// A detected interval. `end` is the step at which the event was closed, or
/// `None` while it is still open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyEvent {
    pub start: u64,
    pub end: Option<u64>,
    pub peak: f64,
    pub threshold: f64,
}

impl AnomalyEvent {
    pub fn overlaps(&self, from: u64, to: u64) -> bool {
        self.start <= to && self.end.is_none_or(|e| e >= from)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transition {
    Opened { step: u64 },
    Closed(AnomalyEvent),
}

/// M-of-N persistence automaton over a statistic stream.
///
/// An event opens on an exceeding sample that brings the window to at least
/// M exceedances, and closes on the `recovery_n`-th consecutive in-bound
/// sample. The window and the in-bound run depend only on the stream, never
/// on whether an event is open. Together with opening only on an exceeding
/// sample this makes coverage monotone: any step inside an event at some
/// threshold is inside an event at every lower threshold.
///
/// The whole automaton is a plain value and can be serialized mid-stream and
/// resumed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detector {
    config: DetectorConfig,
    threshold: f64,
    window: VecDeque<bool>,
    in_bound_run: usize,
    open: Option<AnomalyEvent>,
}

impl Detector {
    /// Threshold is the `config.confidence` quantile of `χ²(measurement_dim)`.
    pub fn new(config: DetectorConfig, measurement_dim: usize) -> Result<Self> {
        config.validate()?;
        if measurement_dim == 0 {
            return Err(invalid("measurement_dim", "must be at least 1"));
        }
        let threshold = chi2_quantile(config.confidence, measurement_dim as f64)?;
        Ok(Self::with_threshold(config, threshold))
    }

    pub fn with_threshold(config: DetectorConfig, threshold: f64) -> Self {
        Self {
            window: VecDeque::with_capacity(config.window_n),
            config,
            threshold,
            in_bound_run: 0,
            open: None,
        }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn is_open(&self) -> bool {
        self.open.is_some()
    }

    /// Feeds one value. Non-finite values count as exceedances.
    pub fn push(&mut self, step: u64, value: f64) -> Option<Transition> {
        let exceeds = !(value <= self.threshold);
        if self.window.len() == self.config.window_n {
            self.window.pop_front();
        }
        self.window.push_back(exceeds);
        self.in_bound_run = if exceeds { 0 } else { self.in_bound_run + 1 };

        match &mut self.open {
            Some(event) => {
                event.peak = event.peak.max(value);
                if self.in_bound_run >= self.config.recovery_n {
                    let mut closed = *event;
                    closed.end = Some(step);
                    self.open = None;
                    return Some(Transition::Closed(closed));
                }
                None
            }
            None => {
                let count = self.window.iter().filter(|&&e| e).count();
                if exceeds && count >= self.config.window_m {
                    self.open = Some(AnomalyEvent {
                        start: step,
                        end: None,
                        peak: value,
                        threshold: self.threshold,
                    });
                    return Some(Transition::Opened { step });
                }
                None
            }
        }
    }

    /// The event still open at the end of the stream, if any.
    pub fn open_event(&self) -> Option<AnomalyEvent> {
        self.open
    }
}

/// Runs a fresh [`Detector`] over `(step, value)` pairs and returns the
/// events in order, the last one possibly still open.
pub fn detect<I>(nis_stream: I, measurement_dim: usize, config: &DetectorConfig) -> Result<Vec<AnomalyEvent>>
where
    I: IntoIterator<Item = (u64, f64)>,
{
    let mut detector = Detector::new(*config, measurement_dim)?;
    Ok(run_detector(&mut detector, nis_stream))
}

pub(crate) fn run_detector<I>(detector: &mut Detector, stream: I) -> Vec<AnomalyEvent>
where
    I: IntoIterator<Item = (u64, f64)>,
{
    let mut events = Vec::new();
    for (step, value) in stream {
        if let Some(Transition::Closed(e)) = detector.push(step, value) {
            events.push(e);
        }
    }
    events.extend(detector.open_event());
    events
}

/// Number of stream steps covered by events, with an open event running to
/// `last_step`.
pub fn open_event_steps(events: &[AnomalyEvent], last_step: u64) -> u64 {
    events
        .iter()
        .map(|e| e.end.unwrap_or(last_step).saturating_sub(e.start) + 1)
        .sum()
}

/// One JSON object per line: `{"start":k,"end":k|null,"peak":v,"threshold":t}`.
pub fn events_to_json_lines(events: &[AnomalyEvent]) -> Result<String> {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    Ok(out)
}
