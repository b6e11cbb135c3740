//! Episode traces as JSON lines: one header line, then one line per step.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Action, FailureKind, FailureTracker, SimError, WorldState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub object: String,
    pub mass: f64,
    pub friction: f64,
    pub success_threshold: f64,
    pub lift_margin: f64,
    pub initial: WorldState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub actions: [Action; 2],
    pub rewards: [f64; 2],
    pub drop_event: bool,
    pub state: WorldState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub header: TraceHeader,
    pub steps: Vec<TraceStep>,
}

impl Trace {
    pub fn final_state(&self) -> &WorldState {
        self.steps.last().map_or(&self.header.initial, |s| &s.state)
    }

    pub fn success(&self) -> bool {
        self.final_state().goal_distance() < self.header.success_threshold
    }

    /// Replays the failure bookkeeping over the recorded steps.
    pub fn classify(&self) -> FailureKind {
        let mut tracker = FailureTracker::default();
        for s in &self.steps {
            tracker.record(&s.state, s.drop_event, self.header.lift_margin);
        }
        tracker.classify(self.success())
    }
}

pub fn write_trace<W: Write>(mut out: W, trace: &Trace) -> Result<(), SimError> {
    let line = |e: serde_json::Error| SimError::Contract(format!("serializing trace: {e}"));
    writeln!(out, "{}", serde_json::to_string(&trace.header).map_err(line)?)?;
    for s in &trace.steps {
        writeln!(out, "{}", serde_json::to_string(s).map_err(line)?)?;
    }
    Ok(())
}

/// Parse a trace; errors carry the 1-based number of the first bad line.
pub fn read_trace<R: BufRead>(input: R) -> Result<Trace, SimError> {
    let mut lines = input.lines().enumerate();
    let bad = |line: usize, message: String| SimError::Trace { line, message };
    let header: TraceHeader = match lines.next() {
        None => return Err(bad(1, "empty trace".into())),
        Some((_, text)) => serde_json::from_str(&text?).map_err(|e| bad(1, e.to_string()))?,
    };
    let mut steps = Vec::new();
    for (i, text) in lines {
        let text = text?;
        if text.trim().is_empty() {
            continue;
        }
        let s: TraceStep = serde_json::from_str(&text).map_err(|e| bad(i + 1, e.to_string()))?;
        if s.step != steps.len() + 1 {
            return Err(bad(
                i + 1,
                format!("expected step {}, found {}", steps.len() + 1, s.step),
            ));
        }
        steps.push(s);
    }
    Ok(Trace { header, steps })
}
