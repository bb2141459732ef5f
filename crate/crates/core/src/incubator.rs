//! Two-state incubator thermal plant.
//!
//! State is `[T_h, T_b]` (heater and box-air temperature, °C), input is
//! `[P, T_r]` (heater on/off and room temperature). The continuous model is
//!
//! ```text
//! c_h dT_h/dt = P p_heat - g_hb (T_h - T_b)
//! c_b dT_b/dt = g_hb (T_h - T_b) - g_br (T_b - T_r)
//! ```
//!
//! discretized exactly at the sample period; only `T_b` is measured. The
//! default parameter values are a synthetic but physically plausible
//! instance, not a calibration of real hardware.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::matgauss::Matrix;
use crate::statespace::{discretize, ContinuousLti, DiscretizationMethod, LinearDiscreteSystem, Trajectory, TrajectoryPoint};
use crate::telemetry::TelemetryRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncubatorParams {
    /// Heater heat capacity, J/K.
    pub c_h: f64,
    /// Box-air heat capacity, J/K.
    pub c_b: f64,
    /// Heater to box conductance, W/K.
    pub g_hb: f64,
    /// Box to room conductance, W/K.
    pub g_br: f64,
    /// Heater power when on, W.
    pub p_heat: f64,
    /// Ambient temperature, °C.
    pub t_room: f64,
    /// Sample period, s.
    pub dt: f64,
}

impl Default for IncubatorParams {
    fn default() -> Self {
        Self {
            c_h: 300.0,
            c_b: 150.0,
            g_hb: 1.0,
            g_br: 0.5,
            p_heat: 30.0,
            t_room: 21.0,
            dt: 3.0,
        }
    }
}

impl IncubatorParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [("c_h", self.c_h), ("c_b", self.c_b), ("dt", self.dt)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        let non_negative = [("g_hb", self.g_hb), ("g_br", self.g_br), ("p_heat", self.p_heat)];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be non-negative, got {v}")));
            }
        }
        if !self.t_room.is_finite() {
            return Err(invalid("t_room", "must be finite"));
        }
        Ok(())
    }

    pub fn continuous(&self) -> Result<ContinuousLti> {
        self.validate()?;
        let a = Matrix::from_rows(&[
            [-self.g_hb / self.c_h, self.g_hb / self.c_h],
            [self.g_hb / self.c_b, -(self.g_hb + self.g_br) / self.c_b],
        ])?;
        let b = Matrix::from_rows(&[[self.p_heat / self.c_h, 0.0], [0.0, self.g_br / self.c_b]])?;
        ContinuousLti::new(a, b)
    }

    /// Parameters with `g_br` multiplied by `factor`.
    pub fn with_gbr_scaled(&self, factor: f64) -> Self {
        Self {
            g_br: self.g_br * factor,
            ..*self
        }
    }

    /// Thermal equilibrium with the heater off.
    pub fn ambient_state(&self) -> Vec<f64> {
        vec![self.t_room, self.t_room]
    }
}

/// Default process noise `diag(1e-4, 1e-4)` K².
pub fn default_process_noise() -> Matrix {
    Matrix::from_diagonal(&[1e-4, 1e-4])
}

/// Default measurement noise `[2.5e-3]` K², about 0.05 K sensor std.
pub fn default_measurement_noise() -> Matrix {
    Matrix::from_diagonal(&[2.5e-3])
}

/// Discrete plant with the default noise covariances.
pub fn build_system(p: &IncubatorParams) -> Result<LinearDiscreteSystem> {
    build_system_with_noise(p, default_process_noise(), default_measurement_noise())
}

pub fn build_system_with_noise(p: &IncubatorParams, r: Matrix, q: Matrix) -> Result<LinearDiscreteSystem> {
    let (a, b) = discretize(&p.continuous()?, p.dt, DiscretizationMethod::Exact)?;
    let c = Matrix::from_rows(&[[0.0, 1.0]])?;
    LinearDiscreteSystem::new(a, b, c, r, q, p.dt)
}

/// Parameter a fault acts on. Only the box-to-room conductance is modeled;
/// an open lid multiplies it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaultParam {
    #[serde(rename = "g_br")]
    GBr,
}

/// Scales `param` by `factor` over steps `start..end` (end exclusive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fault {
    pub start: u64,
    pub end: u64,
    pub param: FaultParam,
    pub factor: f64,
}

impl Fault {
    pub fn lid_open(start: u64, end: u64, factor: f64) -> Self {
        Self {
            start,
            end,
            param: FaultParam::GBr,
            factor,
        }
    }

    pub fn contains(&self, k: u64) -> bool {
        (self.start..self.end).contains(&k)
    }
}

/// Parses `param:xFACTOR:START-END`, e.g. `gbr:x10:600-660`.
impl std::str::FromStr for Fault {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| invalid("fault", format!("{why} in {s:?}; expected param:xFACTOR:START-END"));
        let parts: Vec<&str> = s.split(':').collect();
        let [param, factor, interval] = parts[..] else {
            return Err(bad("wrong number of fields"));
        };
        let param = match param {
            "gbr" | "g_br" => FaultParam::GBr,
            _ => return Err(bad("unknown parameter")),
        };
        let factor: f64 = factor
            .strip_prefix('x')
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| bad("bad factor"))?;
        let (start, end) = interval.split_once('-').ok_or_else(|| bad("bad interval"))?;
        let start: u64 = start.parse().map_err(|_| bad("bad start"))?;
        let end: u64 = end.parse().map_err(|_| bad("bad end"))?;
        Ok(Fault {
            start,
            end,
            param,
            factor,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Fault>", into = "Vec<Fault>")]
pub struct FaultSchedule {
    faults: Vec<Fault>,
}

impl TryFrom<Vec<Fault>> for FaultSchedule {
    type Error = crate::Error;

    fn try_from(faults: Vec<Fault>) -> Result<Self> {
        FaultSchedule::new(faults)
    }
}

impl From<FaultSchedule> for Vec<Fault> {
    fn from(s: FaultSchedule) -> Self {
        s.faults
    }
}

impl FaultSchedule {
    /// Sorts the faults by start and rejects overlaps, empty intervals and
    /// non-positive factors.
    pub fn new(mut faults: Vec<Fault>) -> Result<Self> {
        for f in &faults {
            if !(f.factor > 0.0 && f.factor.is_finite()) {
                return Err(invalid("factor", format!("must be positive, got {}", f.factor)));
            }
            if f.end <= f.start {
                return Err(invalid("fault interval", format!("{}-{} is empty", f.start, f.end)));
            }
        }
        faults.sort_by_key(|f| f.start);
        for pair in faults.windows(2) {
            if pair[1].start < pair[0].end {
                return Err(invalid(
                    "fault interval",
                    format!("{}-{} overlaps {}-{}", pair[0].start, pair[0].end, pair[1].start, pair[1].end),
                ));
            }
        }
        Ok(Self { faults })
    }

    pub fn none() -> Self {
        Self::default()
    }

    pub fn faults(&self) -> &[Fault] {
        &self.faults
    }

    pub fn is_empty(&self) -> bool {
        self.faults.is_empty()
    }

    pub fn active(&self, k: u64) -> Option<&Fault> {
        self.faults.iter().find(|f| f.contains(k))
    }

    /// True plant parameters at step `k`.
    pub fn params_at(&self, base: &IncubatorParams, k: u64) -> IncubatorParams {
        match self.active(k) {
            Some(f) => match f.param {
                FaultParam::GBr => base.with_gbr_scaled(f.factor),
            },
            None => *base,
        }
    }
}

/// Hysteresis on/off controller on box temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thermostat {
    pub setpoint: f64,
    pub band: f64,
}

impl Default for Thermostat {
    fn default() -> Self {
        Self {
            setpoint: 35.0,
            band: 1.0,
        }
    }
}

impl Thermostat {
    pub fn validate(&self) -> Result<()> {
        if !(self.band > 0.0 && self.band.is_finite()) {
            return Err(invalid("band", format!("must be positive, got {}", self.band)));
        }
        if !self.setpoint.is_finite() {
            return Err(invalid("setpoint", "must be finite"));
        }
        Ok(())
    }

    /// Next heater command given the current one and a box temperature reading.
    pub fn command(&self, heater_on: bool, t_box: f64) -> bool {
        if t_box < self.setpoint - 0.5 * self.band {
            true
        } else if t_box > self.setpoint + 0.5 * self.band {
            false
        } else {
            heater_on
        }
    }
}

/// Inputs `[P, t_room]` produced by running the thermostat in closed loop on
/// the noise-free plant `sys` from `x0`. Each command uses the box
/// temperature reached at the end of the previous step.
pub fn thermostat_inputs(
    thermostat: &Thermostat,
    t_room: f64,
    n: usize,
    sys: &LinearDiscreteSystem,
    x0: &[f64],
) -> Result<Vec<Vec<f64>>> {
    thermostat.validate()?;
    let mut x = x0.to_vec();
    let mut reading = sys.measure(&x)?[0];
    let mut heater_on = false;
    let mut inputs = Vec::with_capacity(n);
    for _ in 0..n {
        heater_on = thermostat.command(heater_on, reading);
        let u = vec![if heater_on { 1.0 } else { 0.0 }, t_room];
        x = sys.step(&x, &u)?;
        reading = sys.measure(&x)?[0];
        inputs.push(u);
    }
    Ok(inputs)
}

/// Everything needed to reproduce a synthetic run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub params: IncubatorParams,
    #[serde(rename = "R", default = "default_process_noise")]
    pub process_noise: Matrix,
    #[serde(rename = "Q", default = "default_measurement_noise")]
    pub measurement_noise: Matrix,
    #[serde(default)]
    pub thermostat: Thermostat,
    /// True initial state; defaults to ambient equilibrium.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<Vec<f64>>,
    /// Diagonal of the estimator's prior covariance around the initial state.
    #[serde(default = "default_prior_variance")]
    pub prior_variance: Vec<f64>,
}

fn default_prior_variance() -> Vec<f64> {
    vec![1.0, 1.0]
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_params(IncubatorParams::default())
    }
}

impl RunConfig {
    pub fn from_params(params: IncubatorParams) -> Self {
        Self {
            params,
            process_noise: default_process_noise(),
            measurement_noise: default_measurement_noise(),
            thermostat: Thermostat::default(),
            initial_state: None,
            prior_variance: default_prior_variance(),
        }
    }

    pub fn initial_state(&self) -> Vec<f64> {
        self.initial_state.clone().unwrap_or_else(|| self.params.ambient_state())
    }

    /// Nominal (closed-lid) discrete plant with this run's noise.
    pub fn system(&self) -> Result<LinearDiscreteSystem> {
        build_system_with_noise(&self.params, self.process_noise.clone(), self.measurement_noise.clone())
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.thermostat.validate()?;
        let sys = self.system()?;
        sys.check_state("initial_state", &self.initial_state())?;
        sys.check_state("prior_variance", &self.prior_variance)?;
        if self.prior_variance.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(invalid("prior_variance", "entries must be non-negative"));
        }
        Ok(())
    }
}

/// A closed-loop synthetic run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub telemetry: Vec<TelemetryRecord>,
    /// Whether a fault was active at each step.
    pub fault_active: Vec<bool>,
}

/// Closed-loop noisy simulation with fault injection.
///
/// At step `k` the thermostat acts on the previous noisy reading, the true
/// plant advances with the parameters in force at `k` (faults replace the
/// nominal `g_br`), and noise comes from sub-streams `(seed, k, ·)`. The
/// telemetry carries the ground-truth heater temperature.
pub fn simulate_run(cfg: &RunConfig, faults: &FaultSchedule, n: usize, seed: u64) -> Result<RunOutput> {
    cfg.validate()?;
    let nominal = cfg.system()?;
    let mut faulted: Vec<(f64, LinearDiscreteSystem)> = Vec::new();
    for f in faults.faults() {
        if !faulted.iter().any(|(factor, _)| *factor == f.factor) {
            let p = faults.params_at(&cfg.params, f.start);
            let sys = build_system_with_noise(&p, cfg.process_noise.clone(), cfg.measurement_noise.clone())?;
            faulted.push((f.factor, sys));
        }
    }

    let t_room = cfg.params.t_room;
    let mut x = cfg.initial_state();
    let mut reading = nominal.measure(&x)?[0];
    let mut heater_on = false;
    let mut points = Vec::with_capacity(n);
    let mut telemetry = Vec::with_capacity(n);
    let mut fault_active = Vec::with_capacity(n);

    for k in 1..=n as u64 {
        heater_on = cfg.thermostat.command(heater_on, reading);
        let u = vec![if heater_on { 1.0 } else { 0.0 }, t_room];
        let active = faults.active(k);
        let plant = match active {
            Some(f) => &faulted.iter().find(|(factor, _)| *factor == f.factor).expect("fault system built").1,
            None => &nominal,
        };
        let (next, y) = plant.step_noisy(&x, &u, seed, k)?;
        reading = y[0];
        telemetry.push(TelemetryRecord {
            timestamp: k as f64 * cfg.params.dt,
            heater_on,
            t_room,
            t_box: y[0],
            t_heater: Some(next[0]),
        });
        points.push(TrajectoryPoint {
            k,
            state: next.clone(),
            input: u,
            measurement: y,
        });
        fault_active.push(active.is_some());
        x = next;
    }
    Ok(RunOutput {
        trajectory: Trajectory { points },
        telemetry,
        fault_active,
    })
}
