//! Batch and streaming estimation over incubator telemetry, the per-step
//! estimate table, and the glue the command-line tool is built from.
//!
//! A telemetry record at time `t` is mapped to step `1 + round((t - t0) / dt)`
//! where `t0` is the first record's timestamp. The record's heater flag and
//! room temperature form the input that drove the plant into that step, and
//! its box temperature is the measurement taken there. Missing steps are
//! bridged by prediction alone with the last known input held.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::anomaly::{self, AnomalyEvent, DetectorConfig};
use crate::error::{dim_err, invalid, Error, Result};
use crate::incubator::{simulate_run, FaultSchedule, RunConfig};
use crate::kalman::{kf_step, FilterState};
use crate::matgauss::{Gaussian, Matrix};
use crate::statespace::LinearDiscreteSystem;
use crate::telemetry::{MessageConsumer, TelemetryRecord, TransportMessage};

/// Header of the estimate table.
pub const ESTIMATE_COLUMNS: [&str; 9] = [
    "step",
    "timestamp",
    "mu_theater",
    "mu_tbox",
    "var_theater",
    "var_tbox",
    "innovation",
    "nis",
    "measured_tbox",
];

/// Prior variance used when a bare system document gives none.
const VAGUE_PRIOR_VARIANCE: f64 = 1e4;

/// Model and prior for the estimator.
///
/// Either an incubator run configuration (the same document `simulate`
/// reads) or a bare discrete system with keys `A`, `B`, `C`, `R`, `Q`, `dt`
/// and optional `initial_state` / `prior_variance`.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimateConfig {
    Incubator(RunConfig),
    System { system: LinearDiscreteSystem, prior: Gaussian },
}

impl EstimateConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        if value.get("A").is_none() {
            let cfg: RunConfig = serde_json::from_value(value)?;
            cfg.validate()?;
            return Ok(Self::Incubator(cfg));
        }
        let system: LinearDiscreteSystem = serde_json::from_value(value.clone())?;
        let n = system.state_dim();
        let mean: Vec<f64> = match value.get("initial_state") {
            Some(v) => serde_json::from_value(v.clone())?,
            None => vec![0.0; n],
        };
        let variance: Vec<f64> = match value.get("prior_variance") {
            Some(v) => serde_json::from_value(v.clone())?,
            None => vec![VAGUE_PRIOR_VARIANCE; n],
        };
        if mean.len() != n {
            return Err(dim_err("initial_state", n, mean.len()));
        }
        if variance.len() != n {
            return Err(dim_err("prior_variance", n, variance.len()));
        }
        let prior = Gaussian::new(mean, Matrix::from_diagonal(&variance))?;
        Ok(Self::System { system, prior })
    }

    pub fn system(&self) -> Result<LinearDiscreteSystem> {
        match self {
            Self::Incubator(cfg) => cfg.system(),
            Self::System { system, .. } => Ok(system.clone()),
        }
    }

    pub fn prior(&self) -> Result<Gaussian> {
        match self {
            Self::Incubator(cfg) => Gaussian::new(cfg.initial_state(), Matrix::from_diagonal(&cfg.prior_variance)),
            Self::System { prior, .. } => Ok(prior.clone()),
        }
    }
}

/// One line of the estimate table. Prediction-only steps have no
/// innovation, NIS or measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateRow {
    pub step: u64,
    pub timestamp: f64,
    pub mu_theater: f64,
    pub mu_tbox: f64,
    pub var_theater: f64,
    pub var_tbox: f64,
    pub innovation: Option<f64>,
    pub nis: Option<f64>,
    pub measured_tbox: Option<f64>,
}

/// Streaming Kalman filter over telemetry records.
#[derive(Debug, Clone)]
pub struct Estimator {
    sys: LinearDiscreteSystem,
    state: FilterState,
    origin: Option<f64>,
    input: Vec<f64>,
}

impl Estimator {
    /// The system must have two states, two inputs `[P, T_r]` and the single
    /// measurement `T_b`.
    pub fn new(sys: LinearDiscreteSystem, prior: &Gaussian) -> Result<Self> {
        if sys.state_dim() != 2 {
            return Err(dim_err("estimator state dimension", 2, sys.state_dim()));
        }
        if sys.input_dim() != 2 {
            return Err(dim_err("estimator input dimension", 2, sys.input_dim()));
        }
        if sys.measurement_dim() != 1 {
            return Err(dim_err("estimator measurement dimension", 1, sys.measurement_dim()));
        }
        if prior.dim() != 2 {
            return Err(dim_err("prior dimension", 2, prior.dim()));
        }
        Ok(Self {
            sys,
            state: FilterState::prior(prior),
            origin: None,
            input: vec![0.0, 0.0],
        })
    }

    pub fn from_config(cfg: &EstimateConfig) -> Result<Self> {
        Self::new(cfg.system()?, &cfg.prior()?)
    }

    pub fn state(&self) -> &FilterState {
        &self.state
    }

    pub fn system(&self) -> &LinearDiscreteSystem {
        &self.sys
    }

    /// Consumes one record and returns the rows it completes: any bridged
    /// prediction-only steps followed by the measured step.
    pub fn push(&mut self, rec: &TelemetryRecord) -> Result<Vec<EstimateRow>> {
        rec.validate().map_err(|m| invalid("telemetry record", m))?;
        let dt = self.sys.dt();
        let origin = *self.origin.get_or_insert(rec.timestamp);
        let offset = ((rec.timestamp - origin) / dt).round();
        if !(offset >= 0.0 && offset < u64::MAX as f64) {
            return Err(invalid("timestamp", format!("{} precedes the first record", rec.timestamp)));
        }
        let step = 1 + offset as u64;
        if step <= self.state.step {
            return Err(invalid(
                "timestamp",
                format!("{} maps to step {step}, which is already estimated", rec.timestamp),
            ));
        }

        let mut rows = Vec::new();
        while self.state.step + 1 < step {
            let (next, _) = kf_step(&self.state, &self.sys, &self.input, None)?;
            self.state = next;
            let t = origin + (self.state.step - 1) as f64 * dt;
            rows.push(self.row(t, None, None));
        }
        self.input = vec![if rec.heater_on { 1.0 } else { 0.0 }, rec.t_room];
        let (next, res) = kf_step(&self.state, &self.sys, &self.input, Some(&[rec.t_box]))?;
        let res = res.expect("measurement supplied");
        let nis = anomaly::nis(&res)?;
        self.state = next;
        rows.push(self.row(rec.timestamp, Some((res.innovation[0], nis)), Some(rec.t_box)));
        Ok(rows)
    }

    fn row(&self, timestamp: f64, update: Option<(f64, f64)>, measured: Option<f64>) -> EstimateRow {
        let s = &self.state;
        EstimateRow {
            step: s.step,
            timestamp,
            mu_theater: s.mean[0],
            mu_tbox: s.mean[1],
            var_theater: s.covariance[(0, 0)],
            var_tbox: s.covariance[(1, 1)],
            innovation: update.map(|u| u.0),
            nis: update.map(|u| u.1),
            measured_tbox: measured,
        }
    }
}

/// Collects estimate rows from transport messages.
#[derive(Debug)]
pub struct EstimatingConsumer {
    estimator: Estimator,
    rows: Vec<EstimateRow>,
}

impl EstimatingConsumer {
    pub fn new(estimator: Estimator) -> Self {
        Self {
            estimator,
            rows: Vec::new(),
        }
    }

    pub fn into_rows(self) -> Vec<EstimateRow> {
        self.rows
    }
}

impl MessageConsumer for EstimatingConsumer {
    fn deliver(&mut self, msg: TransportMessage) -> std::result::Result<(), String> {
        let rec = msg.record().map_err(|e| e.to_string())?;
        let rows = self.estimator.push(&rec).map_err(|e| e.to_string())?;
        self.rows.extend(rows);
        Ok(())
    }
}

/// Filters a whole recording.
pub fn estimate(records: &[TelemetryRecord], cfg: &EstimateConfig) -> Result<Vec<EstimateRow>> {
    let mut est = Estimator::from_config(cfg)?;
    let mut rows = Vec::with_capacity(records.len());
    for rec in records {
        rows.extend(est.push(rec)?);
    }
    Ok(rows)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

pub fn write_estimates<W: Write>(rows: &[EstimateRow], sink: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(sink);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(ESTIMATE_COLUMNS).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            format!("{:?}", r.timestamp),
            format!("{:?}", r.mu_theater),
            format!("{:?}", r.mu_tbox),
            format!("{:?}", r.var_theater),
            format!("{:?}", r.var_tbox),
            fmt_opt(r.innovation),
            fmt_opt(r.nis),
            fmt_opt(r.measured_tbox),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_estimates<R: Read>(source: R) -> Result<Vec<EstimateRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let header_err = |message: String| Error::Csv { line: 1, message };
    let headers = reader.headers().map_err(|e| header_err(e.to_string()))?.clone();
    if headers.iter().ne(ESTIMATE_COLUMNS) {
        return Err(header_err(format!(
            "expected header {}, got {}",
            ESTIMATE_COLUMNS.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| Error::Csv {
            line,
            message: e.to_string(),
        })?;
        let bad = |col: &str, v: &str| Error::Csv {
            line,
            message: format!("bad {col} value {v:?}"),
        };
        let num = |idx: usize| -> Result<f64> {
            let v = &rec[idx];
            match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(bad(ESTIMATE_COLUMNS[idx], v)),
            }
        };
        let opt = |idx: usize| -> Result<Option<f64>> {
            if rec[idx].is_empty() {
                Ok(None)
            } else {
                num(idx).map(Some)
            }
        };
        let step = rec[0].parse::<u64>().map_err(|_| bad("step", &rec[0]))?;
        let row = EstimateRow {
            step,
            timestamp: num(1)?,
            mu_theater: num(2)?,
            mu_tbox: num(3)?,
            var_theater: num(4)?,
            var_tbox: num(5)?,
            innovation: opt(6)?,
            nis: opt(7)?,
            measured_tbox: opt(8)?,
        };
        if let Some(prev) = rows.last().map(|r: &EstimateRow| r.step) {
            if row.step <= prev {
                return Err(Error::Csv {
                    line,
                    message: format!("step {} does not follow {prev}", row.step),
                });
            }
        }
        if row.nis.is_some_and(|v| v < 0.0) {
            return Err(bad("nis", &rec[7]));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// `(step, nis)` for every measured step.
pub fn nis_stream(rows: &[EstimateRow]) -> impl Iterator<Item = (u64, f64)> + '_ {
    rows.iter().filter_map(|r| r.nis.map(|v| (r.step, v)))
}

/// Runs the detector over an estimate table (scalar measurement).
pub fn detect_rows(rows: &[EstimateRow], cfg: &DetectorConfig) -> Result<Vec<AnomalyEvent>> {
    anomaly::detect(nis_stream(rows), 1, cfg)
}

/// Provenance written next to a simulated recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationMeta {
    pub config: RunConfig,
    pub faults: FaultSchedule,
    pub seed: u64,
    pub steps: usize,
}

/// Simulate, estimate and detect in memory: the same composition as the
/// three command-line stages joined by files.
pub fn run_pipeline(
    cfg: &RunConfig,
    faults: &FaultSchedule,
    steps: usize,
    seed: u64,
    detector: &DetectorConfig,
) -> Result<(Vec<TelemetryRecord>, Vec<EstimateRow>, Vec<AnomalyEvent>)> {
    let run = simulate_run(cfg, faults, steps, seed)?;
    let rows = estimate(&run.telemetry, &EstimateConfig::Incubator(cfg.clone()))?;
    let events = detect_rows(&rows, detector)?;
    Ok((run.telemetry, rows, events))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::incubator::Fault;
    use crate::kalman::{predict, update};

    fn rec(t: f64, heater_on: bool, t_box: f64) -> TelemetryRecord {
        TelemetryRecord {
            timestamp: t,
            heater_on,
            t_room: 21.0,
            t_box,
            t_heater: None,
        }
    }

    fn cfg() -> EstimateConfig {
        EstimateConfig::Incubator(RunConfig::default())
    }

    #[test]
    fn empty_telemetry_gives_header_only() {
        let rows = estimate(&[], &cfg()).unwrap();
        assert!(rows.is_empty());
        let mut out = Vec::new();
        write_estimates(&rows, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), ESTIMATE_COLUMNS.join(",") + "\n");
    }

    #[test]
    fn rows_follow_the_filter_recursion() {
        let records = [rec(3.0, true, 21.1), rec(6.0, true, 21.3)];
        let rows = estimate(&records, &cfg()).unwrap();
        let sys = cfg().system().unwrap();
        let mut state = FilterState::prior(&cfg().prior().unwrap());
        for (r, row) in records.iter().zip(&rows) {
            let pred = predict(&state, &sys, &[1.0, 21.0]).unwrap();
            let res = update(&pred, &sys, &[r.t_box]).unwrap();
            assert_eq!(row.mu_theater, res.posterior.mean[0]);
            assert_eq!(row.var_tbox, res.posterior.covariance[(1, 1)]);
            assert_eq!(row.innovation, Some(res.innovation[0]));
            assert_eq!(row.nis, Some(anomaly::nis(&res).unwrap()));
            state = res.posterior;
        }
        assert_eq!(rows.iter().map(|r| r.step).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn gaps_are_bridged_by_prediction() {
        let records = [rec(100.0, true, 21.0), rec(109.0, false, 21.2)];
        let rows = estimate(&records, &cfg()).unwrap();
        assert_eq!(rows.iter().map(|r| r.step).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
        assert_eq!(rows[1].timestamp, 103.0);
        assert!(rows[1].nis.is_none() && rows[2].measured_tbox.is_none());
        let mut est = Estimator::from_config(&cfg()).unwrap();
        est.push(&records[0]).unwrap();
        let sys = est.system().clone();
        let (bridged, _) = kf_step(est.state(), &sys, &[1.0, 21.0], None).unwrap();
        assert_eq!(rows[1].mu_theater, bridged.mean[0]);
        assert_eq!(rows[1].var_tbox, bridged.covariance[(1, 1)]);
        assert_eq!(rows[3].measured_tbox, Some(21.2));
    }

    #[test]
    fn duplicate_step_is_rejected() {
        let records = [rec(3.0, true, 21.0), rec(3.4, true, 21.0)];
        assert!(estimate(&records, &cfg()).is_err());
    }

    #[test]
    fn estimate_table_round_trip() {
        let records = [rec(3.0, true, 21.1), rec(12.0, false, 21.3), rec(15.0, false, 21.25)];
        let rows = estimate(&records, &cfg()).unwrap();
        let mut buf = Vec::new();
        write_estimates(&rows, &mut buf).unwrap();
        assert_eq!(read_estimates(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn malformed_estimate_table() {
        let header = ESTIMATE_COLUMNS.join(",");
        assert!(read_estimates("step,nis\n1,2\n".as_bytes()).is_err());
        let text = format!("{header}\n1,3.0,1,1,1,1,0.1,abc,21\n");
        match read_estimates(text.as_bytes()) {
            Err(Error::Csv { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let text = format!("{header}\n2,3.0,1,1,1,1,0.1,0.5,21\n1,6.0,1,1,1,1,0.1,0.5,21\n");
        assert!(read_estimates(text.as_bytes()).is_err());
    }

    #[test]
    fn system_document_config() {
        let sys = RunConfig::default().system().unwrap();
        let mut doc = serde_json::to_value(&sys).unwrap();
        let parsed = EstimateConfig::from_json_str(&doc.to_string()).unwrap();
        assert_eq!(parsed.system().unwrap(), sys);
        assert_eq!(parsed.prior().unwrap().covariance()[(0, 0)], VAGUE_PRIOR_VARIANCE);

        doc["initial_state"] = serde_json::json!([1.0, 2.0, 3.0]);
        let err = EstimateConfig::from_json_str(&doc.to_string()).unwrap_err();
        assert!(err.to_string().contains("initial_state"), "{err}");
    }

    #[test]
    fn wrong_state_dimension_is_named() {
        let three = r#"{"A":[[1,0,0],[0,1,0],[0,0,1]],"B":[[0,0],[0,0],[0,0]],"C":[[0,1,0]],
            "R":[[1,0,0],[0,1,0],[0,0,1]],"Q":[[1]],"dt":3}"#;
        let cfg = EstimateConfig::from_json_str(three).unwrap();
        let err = Estimator::from_config(&cfg).unwrap_err();
        assert!(err.to_string().contains("state dimension"), "{err}");
    }

    #[test]
    fn tracks_simulated_heater() {
        let run_cfg = RunConfig::default();
        let run = simulate_run(&run_cfg, &FaultSchedule::none(), 1000, 3).unwrap();
        let rows = estimate(&run.telemetry, &EstimateConfig::Incubator(run_cfg)).unwrap();
        let mae: f64 = rows
            .iter()
            .zip(&run.telemetry)
            .map(|(r, t)| (r.mu_theater - t.t_heater.unwrap()).abs())
            .sum::<f64>()
            / rows.len() as f64;
        assert!(mae < 5.0 * 0.05, "mae {mae}");
    }

    #[test]
    fn pipeline_detects_lid_opening() {
        let faults = FaultSchedule::new(vec![Fault::lid_open(600, 660, 10.0)]).unwrap();
        let (_, _, events) = run_pipeline(&RunConfig::default(), &faults, 1200, 7, &DetectorConfig::default()).unwrap();
        assert_eq!(events.len(), 1);
        assert!(events[0].overlaps(600, 680));
    }
}
