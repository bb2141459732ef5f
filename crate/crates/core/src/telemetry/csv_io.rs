use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REQUIRED_COLUMNS: [&str; 4] = ["timestamp", "heater_on", "t_room", "t_box"];
pub const GROUND_TRUTH_COLUMN: &str = "t_heater";

/// One sample of the incubator's sensor feed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    /// Seconds since the start of the run.
    pub timestamp: f64,
    pub heater_on: bool,
    pub t_room: f64,
    pub t_box: f64,
    /// Ground-truth heater temperature; only synthetic runs have it.
    pub t_heater: Option<f64>,
}

impl TelemetryRecord {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let fields = [("timestamp", self.timestamp), ("t_room", self.t_room), ("t_box", self.t_box)];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(format!("{name} is not finite"));
            }
        }
        if matches!(self.t_heater, Some(v) if !v.is_finite()) {
            return Err("t_heater is not finite".into());
        }
        Ok(())
    }
}

fn parse_number(field: &str, name: &str, line: u64) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Csv {
        line,
        message: format!("{name}: cannot parse {field:?} as a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Csv {
            line,
            message: format!("{name}: {field:?} is not finite"),
        });
    }
    Ok(v)
}

/// Reads `timestamp,heater_on,t_room,t_box[,t_heater]` rows in file order.
///
/// `heater_on` is `0` or `1`; an empty `t_heater` field means absent.
/// Timestamps must not decrease.
pub fn read_csv<R: Read>(source: R) -> Result<Vec<TelemetryRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(source);
    let headers = reader.headers().map_err(csv_error)?.clone();
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    if names.len() < REQUIRED_COLUMNS.len() || names[..4] != REQUIRED_COLUMNS {
        let missing = REQUIRED_COLUMNS
            .iter()
            .find(|c| !names.contains(c))
            .map(|c| format!("missing required column {c}"))
            .unwrap_or_else(|| format!("columns must be {}", REQUIRED_COLUMNS.join(",")));
        return Err(Error::Csv { line: 1, message: missing });
    }
    let with_truth = match &names[4..] {
        [] => false,
        [GROUND_TRUTH_COLUMN] => true,
        extra => {
            return Err(Error::Csv {
                line: 1,
                message: format!("unexpected columns {}", extra.join(",")),
            })
        }
    };

    let mut out = Vec::new();
    let mut last_ts = f64::NEG_INFINITY;
    for row in reader.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map_or(0, |p| p.line());
        let timestamp = parse_number(&row[0], "timestamp", line)?;
        let heater_on = match row[1].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Csv {
                    line,
                    message: format!("heater_on must be 0 or 1, got {other:?}"),
                })
            }
        };
        let t_room = parse_number(&row[2], "t_room", line)?;
        let t_box = parse_number(&row[3], "t_box", line)?;
        let t_heater = if with_truth && !row[4].trim().is_empty() {
            Some(parse_number(&row[4], "t_heater", line)?)
        } else {
            None
        };
        if timestamp < last_ts {
            return Err(Error::Csv {
                line,
                message: format!("timestamp {timestamp} decreases (previous {last_ts})"),
            });
        }
        last_ts = timestamp;
        out.push(TelemetryRecord {
            timestamp,
            heater_on,
            t_room,
            t_box,
            t_heater,
        });
    }
    Ok(out)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Csv {
            line,
            message: format!("{kind:?}"),
        },
    }
}

/// Writes a header and one row per record. The `t_heater` column is present
/// for the whole file as soon as any record carries it. Numbers use the
/// shortest representation that parses back to the same `f64`.
pub fn write_csv<W: Write>(records: &[TelemetryRecord], mut sink: W) -> Result<()> {
    let with_truth = records.iter().any(|r| r.t_heater.is_some());
    let mut header = REQUIRED_COLUMNS.join(",");
    if with_truth {
        header.push(',');
        header.push_str(GROUND_TRUTH_COLUMN);
    }
    let mut buf = String::with_capacity(64 * (records.len() + 1));
    buf.push_str(&header);
    buf.push('\n');
    for (i, r) in records.iter().enumerate() {
        r.validate().map_err(|message| Error::Csv {
            line: i as u64 + 2,
            message,
        })?;
        buf.push_str(&format!(
            "{:?},{},{:?},{:?}",
            r.timestamp,
            u8::from(r.heater_on),
            r.t_room,
            r.t_box
        ));
        if with_truth {
            buf.push(',');
            if let Some(t) = r.t_heater {
                buf.push_str(&format!("{t:?}"));
            }
        }
        buf.push('\n');
    }
    sink.write_all(buf.as_bytes())?;
    sink.flush()?;
    Ok(())
}
