//! Telemetry persistence, deterministic replay, and the in-process transport
//! that stands in for the message broker between the physical incubator and
//! its twin.

mod csv_io;
mod transport;

pub use csv_io::{read_csv, write_csv, TelemetryRecord, GROUND_TRUTH_COLUMN, REQUIRED_COLUMNS};
pub use transport::{
    replay, ChannelConsumer, InProcessQueue, MessageConsumer, Pacing, TransportMessage, DEFAULT_TOPIC,
};
