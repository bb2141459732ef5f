use std::collections::VecDeque;
use std::sync::mpsc::SyncSender;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::csv_io::TelemetryRecord;
use crate::error::{Error, Result};

pub const DEFAULT_TOPIC: &str = "incubator.telemetry";

/// One delivered telemetry sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportMessage {
    pub topic: String,
    /// JSON-encoded [`TelemetryRecord`].
    pub payload: String,
    /// Starts at 1 and increases by one per message on a topic.
    pub sequence: u64,
}

impl TransportMessage {
    pub fn record(&self) -> Result<TelemetryRecord> {
        Ok(serde_json::from_str(&self.payload)?)
    }
}

/// Receiving end of a telemetry feed. Called sequentially, never concurrently,
/// for a given stream.
///
/// A broker-backed implementation would publish here; only in-process
/// consumers ship with this crate.
pub trait MessageConsumer {
    fn deliver(&mut self, msg: TransportMessage) -> std::result::Result<(), String>;
}

impl<F> MessageConsumer for F
where
    F: FnMut(TransportMessage) -> std::result::Result<(), String>,
{
    fn deliver(&mut self, msg: TransportMessage) -> std::result::Result<(), String> {
        self(msg)
    }
}

/// FIFO buffer that rejects out-of-order sequence numbers.
#[derive(Debug, Default)]
pub struct InProcessQueue {
    messages: VecDeque<TransportMessage>,
    last_sequence: Option<u64>,
}

impl InProcessQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pop(&mut self) -> Option<TransportMessage> {
        self.messages.pop_front()
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn drain(&mut self) -> impl Iterator<Item = TransportMessage> + '_ {
        self.messages.drain(..)
    }
}

impl MessageConsumer for InProcessQueue {
    fn deliver(&mut self, msg: TransportMessage) -> std::result::Result<(), String> {
        if let Some(last) = self.last_sequence {
            if msg.sequence <= last {
                return Err(format!("sequence {} after {}", msg.sequence, last));
            }
        }
        self.last_sequence = Some(msg.sequence);
        self.messages.push_back(msg);
        Ok(())
    }
}

/// Forwards messages to another thread over a bounded channel.
#[derive(Debug)]
pub struct ChannelConsumer {
    sender: SyncSender<TransportMessage>,
}

impl ChannelConsumer {
    pub fn new(sender: SyncSender<TransportMessage>) -> Self {
        Self { sender }
    }
}

impl MessageConsumer for ChannelConsumer {
    fn deliver(&mut self, msg: TransportMessage) -> std::result::Result<(), String> {
        self.sender.send(msg).map_err(|_| "receiver disconnected".to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pacing {
    /// Deliver as fast as the consumer accepts.
    Instant,
    /// Sleep for timestamp gaps divided by the factor.
    Realtime { speedup: f64 },
}

/// Publishes `records` in order on `topic`, numbering them from 1.
///
/// Returns the number delivered. A consumer error stops the replay and is
/// reported together with the count delivered before it.
pub fn replay<C: MessageConsumer + ?Sized>(
    records: &[TelemetryRecord],
    topic: &str,
    sink: &mut C,
    pacing: Pacing,
) -> Result<u64> {
    if let Pacing::Realtime { speedup } = pacing {
        if !(speedup > 0.0 && speedup.is_finite()) {
            return Err(crate::error::invalid("speedup", format!("must be positive, got {speedup}")));
        }
    }
    let mut delivered = 0u64;
    let mut previous: Option<f64> = None;
    for rec in records {
        if let (Pacing::Realtime { speedup }, Some(prev)) = (pacing, previous) {
            let gap = (rec.timestamp - prev).max(0.0) / speedup;
            if gap > 0.0 {
                thread::sleep(Duration::from_secs_f64(gap));
            }
        }
        previous = Some(rec.timestamp);
        let msg = TransportMessage {
            topic: topic.to_string(),
            payload: serde_json::to_string(rec)?,
            sequence: delivered + 1,
        };
        sink.deliver(msg).map_err(|reason| Error::Delivery { delivered, reason })?;
        delivered += 1;
    }
    Ok(delivered)
}
