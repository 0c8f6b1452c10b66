//! Scenario scheduling and deterministic telemetry generation.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::types::{Chemistry, StreamItem, TelemetryRecord};
use crate::Scalar;

use super::{OcvTable, SimBattery, SimError};

/// Per-channel Gaussian measurement noise (1σ).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub sigma_v: Scalar,
    pub sigma_i: Scalar,
    pub sigma_t: Scalar,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma_v: 0.005,
            sigma_i: 0.050,
            sigma_t: 0.1,
        }
    }
}

impl NoiseConfig {
    pub fn none() -> Self {
        Self {
            sigma_v: 0.0,
            sigma_i: 0.0,
            sigma_t: 0.0,
        }
    }
}

/// Scripted housing-temperature trace: seasonal plus daily sinusoids.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TemperatureConfig {
    pub mean_c: Scalar,
    pub seasonal_amp_c: Scalar,
    pub daily_amp_c: Scalar,
}

impl Default for TemperatureConfig {
    fn default() -> Self {
        Self {
            mean_c: 16.0,
            seasonal_amp_c: 13.0,
            daily_amp_c: 5.0,
        }
    }
}

impl TemperatureConfig {
    pub fn constant(c: Scalar) -> Self {
        Self {
            mean_c: c,
            seasonal_amp_c: 0.0,
            daily_amp_c: 0.0,
        }
    }

    fn at(&self, t: i64, t0: i64) -> Scalar {
        let elapsed = (t - t0) as Scalar;
        let day_of_year = elapsed / 86_400.0;
        let hour = ((t.rem_euclid(86_400)) as Scalar) / 3600.0;
        self.mean_c
            + self.seasonal_amp_c
                * (2.0 * std::f64::consts::PI * (day_of_year - 172.0) / 365.25).cos()
                * -1.0
            + self.daily_amp_c * (2.0 * std::f64::consts::PI * (hour - 9.0) / 24.0).sin()
    }
}

/// Household load schedule: clear-sky PV charge by day, steady overnight
/// supply, programmed current pulses during discharge.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadScenario {
    pub days: u32,
    /// Unix epoch seconds of the first sample. Defaults to a 07:00 UTC
    /// morning so each simulated day holds one charge and one discharge.
    pub start_timestamp: i64,
    pub initial_soc_pct: Scalar,
    /// Overnight discharge current, negative amperes.
    pub night_current_a: Scalar,
    /// Slow wander amplitude on the overnight band, amperes.
    pub night_wander_a: Scalar,
    /// Peak of the clear-sky charge ramp, positive amperes.
    pub pv_peak_current_a: Scalar,
    /// Charge window, hours of day.
    pub charge_start_h: Scalar,
    pub charge_end_h: Scalar,
    /// Evening discharge begins here.
    pub discharge_start_h: Scalar,
    /// Programmed pulses per night (each produces two current steps).
    pub pulses_per_night: u32,
    /// Pulses are spread over this many hours after the discharge begins.
    pub pulse_window_h: Scalar,
    /// Current added during a pulse, amperes (negative deepens discharge).
    pub pulse_delta_a: Scalar,
    pub pulse_hold_s: u32,
    pub noise: NoiseConfig,
    pub temperature: TemperatureConfig,
    /// Stride of true-SOC entries in the event log, seconds.
    pub truth_stride_s: u32,
    /// CV phase ends when charge current decays below this.
    pub cv_floor_a: Scalar,
}

impl LoadScenario {
    /// One-day scenario with the default household profile for a battery.
    pub fn daily(battery: &SimBattery, days: u32) -> Self {
        let c1 = battery.current_1c();
        Self {
            days,
            start_timestamp: 1_451_631_600, // 2016-01-01T07:00:00Z
            initial_soc_pct: 30.0,
            night_current_a: -0.1 * c1,
            night_wander_a: 0.01 * c1,
            pv_peak_current_a: 0.3 * c1,
            charge_start_h: 7.5,
            charge_end_h: 16.0,
            discharge_start_h: 16.5,
            pulses_per_night: 6,
            pulse_window_h: 8.0,
            pulse_delta_a: -0.6 * c1,
            pulse_hold_s: 4,
            noise: NoiseConfig::default(),
            temperature: TemperatureConfig::default(),
            truth_stride_s: 60,
            cv_floor_a: 0.2,
        }
    }

    fn validate(&self, battery: &SimBattery) -> Result<(), SimError> {
        if self.days == 0 {
            return Err(SimError::ConfigOutOfRange("days must be >= 1".into()));
        }
        if self.night_current_a > 0.0 {
            return Err(SimError::ConfigOutOfRange(
                "night_current_a must be <= 0".into(),
            ));
        }
        if self.pv_peak_current_a < 0.0 {
            return Err(SimError::ConfigOutOfRange(
                "pv_peak_current_a must be >= 0".into(),
            ));
        }
        if !(self.charge_start_h < self.charge_end_h
            && self.charge_end_h <= self.discharge_start_h)
        {
            return Err(SimError::ConfigOutOfRange("charge window disordered".into()));
        }
        let (lo, hi) = (battery.soc_min(), battery.soc_max());
        if self.initial_soc_pct < lo || self.initial_soc_pct > hi {
            return Err(SimError::ConfigOutOfRange(format!(
                "initial soc {} outside usable window [{lo}, {hi}]",
                self.initial_soc_pct
            )));
        }
        Ok(())
    }
}

/// True charge/discharge window as scheduled.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PhaseTruth {
    pub kind: crate::types::Direction,
    pub start: i64,
    pub end: i64,
}

/// One executed pulse with its ground truth.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PulseTruth {
    pub t_start: i64,
    pub t_end: i64,
    pub i_base_a: Scalar,
    pub i_pulse_a: Scalar,
    pub soc_pct: Scalar,
    pub temp_c: Scalar,
    pub true_dcr_system_ohm: Scalar,
}

/// Ground-truth ledger emitted alongside the telemetry. Byte-stable for a
/// fixed seed and config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventLog {
    pub version: u32,
    pub seed: u64,
    pub chemistry: Chemistry,
    pub nominal_capacity_ah: Scalar,
    pub cell_count_series: u32,
    pub eoc_v_cell: Scalar,
    pub eod_v_cell: Scalar,
    pub aged_years: Scalar,
    pub soh_pct: Scalar,
    pub lli_shift_pp: Scalar,
    pub dcr_multiplier: Scalar,
    /// Aged OCV: (nominal SOC, cell volts) over the usable window.
    pub true_ocv: Vec<(Scalar, Scalar)>,
    /// Aged cell-level DCR sampled on a coarse (SOC, T) grid.
    pub dcr_soc_grid: Vec<Scalar>,
    pub dcr_temp_grid: Vec<Scalar>,
    pub dcr_cell_ohm: Vec<Vec<Scalar>>,
    pub phases: Vec<PhaseTruth>,
    pub pulses: Vec<PulseTruth>,
    /// First sample timestamps of each programmed current step.
    pub pulse_edges: Vec<i64>,
    /// Instants where the battery reached full charge.
    pub full_charge_instants: Vec<i64>,
    /// (timestamp, true nominal SOC) at the configured stride.
    pub true_soc: Vec<(i64, Scalar)>,
    pub truth_stride_s: u32,
    pub samples: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Idle,
    Charge,
    ChargeCv,
    Full,
    Discharge,
    Empty,
}

/// Deterministic 1 Hz telemetry generator. Iterate to drive it; call
/// [`Simulator::into_log`] afterwards for the ground truth.
pub struct Simulator {
    battery: SimBattery,
    scenario: LoadScenario,
    table: OcvTable,
    rng: ChaCha8Rng,
    noise_v: Option<Normal<Scalar>>,
    noise_i: Option<Normal<Scalar>>,
    noise_t: Option<Normal<Scalar>>,
    t: i64,
    end_t: i64,
    soc: Scalar,
    mode: Mode,
    prev_mode: Mode,
    mode_started: i64,
    pulse_queue: Vec<(i64, i64)>, // (start, end) sorted ascending
    active_pulse: Option<(i64, i64, Scalar)>, // start, end, base current
    log: EventLog,
}

impl Simulator {
    pub fn new(
        battery: &SimBattery,
        scenario: &LoadScenario,
        seed: u64,
    ) -> Result<Simulator, SimError> {
        scenario.validate(battery)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = battery.ocv_table();
        let pulse_queue = schedule_pulses(scenario, &mut rng);
        let truth = dcr_truth_grid(battery);
        let (lo, hi) = (battery.soc_min(), battery.soc_max());
        let true_ocv: Vec<(Scalar, Scalar)> = (0..=400)
            .map(|k| {
                let s = lo + (hi - lo) * k as Scalar / 400.0;
                (s, battery.voltage_cell_at(&table, s))
            })
            .collect();
        let log = EventLog {
            version: 1,
            seed,
            chemistry: battery.chemistry,
            nominal_capacity_ah: battery.capacity_ah,
            cell_count_series: battery.cell_count_series,
            eoc_v_cell: battery.eoc_v_cell,
            eod_v_cell: battery.eod_v_cell,
            aged_years: battery.aged_years,
            soh_pct: battery.soh_pct(),
            lli_shift_pp: battery.lli_shift_pp(),
            dcr_multiplier: battery.dcr_multiplier(),
            true_ocv,
            dcr_soc_grid: truth.0,
            dcr_temp_grid: truth.1,
            dcr_cell_ohm: truth.2,
            phases: Vec::new(),
            pulses: Vec::new(),
            pulse_edges: Vec::new(),
            full_charge_instants: Vec::new(),
            true_soc: Vec::new(),
            truth_stride_s: scenario.truth_stride_s,
            samples: 0,
        };
        let mk_noise = |s: Scalar| {
            if s > 0.0 {
                Some(Normal::new(0.0, s).expect("valid sigma"))
            } else {
                None
            }
        };
        Ok(Simulator {
            battery: battery.clone(),
            scenario: scenario.clone(),
            table,
            noise_v: mk_noise(scenario.noise.sigma_v),
            noise_i: mk_noise(scenario.noise.sigma_i),
            noise_t: mk_noise(scenario.noise.sigma_t),
            rng,
            t: scenario.start_timestamp,
            end_t: scenario.start_timestamp + scenario.days as i64 * 86_400,
            soc: scenario.initial_soc_pct,
            mode: Mode::Idle,
            prev_mode: Mode::Idle,
            mode_started: scenario.start_timestamp,
            pulse_queue,
            active_pulse: None,
            log,
        })
    }

    pub fn into_log(self) -> EventLog {
        let mut log = self.log;
        if let Some(open) = phase_of(self.prev_mode) {
            log.phases.push(PhaseTruth {
                kind: open,
                start: self.mode_started,
                end: self.t - 1,
            });
        }
        log
    }

    /// Adapter for feeding the pipeline directly.
    pub fn stream_items(self) -> impl Iterator<Item = Result<StreamItem, crate::ingest::IngestError>> {
        self.map(|rec| Ok(StreamItem::Record(rec)))
    }

    fn hour_of_day(&self) -> Scalar {
        ((self.t.rem_euclid(86_400)) as Scalar) / 3600.0
    }

    /// Scheduled operating mode ignoring battery limits.
    fn scheduled_mode(&self) -> Mode {
        let h = self.hour_of_day();
        if h >= self.scenario.charge_start_h && h < self.scenario.charge_end_h {
            Mode::Charge
        } else if h >= self.scenario.discharge_start_h || h < self.scenario.charge_start_h - 0.5 {
            Mode::Discharge
        } else {
            Mode::Idle
        }
    }

    fn pv_current(&self) -> Scalar {
        let h = self.hour_of_day();
        let span = self.scenario.charge_end_h - self.scenario.charge_start_h;
        let x = (h - self.scenario.charge_start_h) / span;
        (self.scenario.pv_peak_current_a * (std::f64::consts::PI * x).sin()).max(0.0)
    }

    fn night_current(&self) -> Scalar {
        // slow wander: two incommensurate hour-scale sinusoids
        let e = (self.t - self.scenario.start_timestamp) as Scalar;
        self.scenario.night_current_a
            + self.scenario.night_wander_a
                * (0.6 * (e / 5_400.0).sin() + 0.4 * (e / 12_960.0).sin())
    }
}

fn phase_of(mode: Mode) -> Option<crate::types::Direction> {
    match mode {
        Mode::Charge | Mode::ChargeCv => Some(crate::types::Direction::Charge),
        Mode::Discharge => Some(crate::types::Direction::Discharge),
        _ => None,
    }
}

fn schedule_pulses(scenario: &LoadScenario, rng: &mut ChaCha8Rng) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    if scenario.pulses_per_night == 0 {
        return out;
    }
    // scheduling is calendar-based: the discharge windows straddle the
    // midnights after each simulated day
    let midnight0 = scenario.start_timestamp - scenario.start_timestamp.rem_euclid(86_400);
    let end_t = scenario.start_timestamp + scenario.days as i64 * 86_400;
    for day in 0..scenario.days {
        let midnight = midnight0 + day as i64 * 86_400;
        let window_start = midnight + ((scenario.discharge_start_h + 0.5) * 3600.0) as i64;
        let window_len = (scenario.pulse_window_h * 3600.0) as i64;
        for k in 0..scenario.pulses_per_night {
            let base = window_start
                + window_len * k as i64 / scenario.pulses_per_night as i64
                + window_len / (2 * scenario.pulses_per_night as i64);
            let jitter = rng.gen_range(-300..=300);
            let start = base + jitter;
            if start >= scenario.start_timestamp
                && start + (scenario.pulse_hold_s as i64) < end_t
            {
                out.push((start, start + scenario.pulse_hold_s as i64));
            }
        }
    }
    out.sort_unstable();
    out.reverse(); // pop() takes the earliest
    out
}

fn dcr_truth_grid(battery: &SimBattery) -> (Vec<Scalar>, Vec<Scalar>, Vec<Vec<Scalar>>) {
    let soc: Vec<Scalar> = (0..=20).map(|k| k as Scalar * 5.0).collect();
    let temp: Vec<Scalar> = (0..=8).map(|k| k as Scalar * 5.0).collect();
    let grid = soc
        .iter()
        .map(|&s| {
            temp.iter()
                .map(|&t| battery.dcr.cell_ohm(s, t) * battery.dcr_multiplier())
                .collect()
        })
        .collect();
    (soc, temp, grid)
}

impl Iterator for Simulator {
    type Item = TelemetryRecord;

    fn next(&mut self) -> Option<TelemetryRecord> {
        if self.t >= self.end_t {
            return None;
        }
        let t = self.t;
        let temp_clean = self.scenario.temperature.at(t, self.scenario.start_timestamp);
        let eoc_sys = self.battery.eoc_v_system();
        let eod_sys = self.battery.eod_v_system();
        let (soc_min, soc_max) = (self.battery.soc_min(), self.battery.soc_max());

        // mode selection
        let sched = self.scheduled_mode();
        self.mode = match (self.mode, sched) {
            // battery-limit latches survive while the schedule keeps the mode
            (Mode::Full, Mode::Charge) => Mode::Full,
            (Mode::Empty, Mode::Discharge) => Mode::Empty,
            (Mode::ChargeCv, Mode::Charge) => Mode::ChargeCv,
            (_, s) => s,
        };

        let r_sys = self.battery.dcr_system_ohm(self.soc, temp_clean);
        let ocv_sys = self.battery.voltage_cell_at(&self.table, self.soc)
            * self.battery.cell_count_series as Scalar;

        // pick the clean current
        let mut current = match self.mode {
            Mode::Idle | Mode::Full | Mode::Empty => 0.0,
            Mode::Charge => {
                let i = self.pv_current();
                if ocv_sys + i * r_sys >= eoc_sys {
                    self.mode = Mode::ChargeCv;
                    ((eoc_sys - ocv_sys) / r_sys).clamp(0.0, i)
                } else {
                    i
                }
            }
            Mode::ChargeCv => {
                let i = ((eoc_sys - ocv_sys) / r_sys).clamp(0.0, self.pv_current());
                if i <= self.scenario.cv_floor_a || self.soc >= soc_max - 1e-9 {
                    self.mode = Mode::Full;
                    self.log.full_charge_instants.push(t);
                    0.0
                } else {
                    i
                }
            }
            Mode::Discharge => self.night_current(),
        };

        // programmed pulses ride on the discharge current
        if self.mode == Mode::Discharge {
            if let Some((start, end, base)) = self.active_pulse {
                if t > end {
                    self.active_pulse = None;
                    self.log.pulse_edges.push(t);
                    let _ = (start, base);
                } else {
                    current = base + self.scenario.pulse_delta_a;
                }
            }
            if self.active_pulse.is_none() {
                while let Some(&(start, end)) = self.pulse_queue.last() {
                    if start < t {
                        self.pulse_queue.pop(); // missed (battery was busy)
                        continue;
                    }
                    if start == t {
                        self.pulse_queue.pop();
                        let base = current;
                        let pulsed = base + self.scenario.pulse_delta_a;
                        // keep the terminal voltage above EOD with margin
                        let projected = ocv_sys + pulsed * r_sys;
                        if projected > eod_sys + 0.03 * self.battery.cell_count_series as Scalar
                        {
                            self.active_pulse = Some((start, end, base));
                            self.log.pulse_edges.push(t);
                            self.log.pulses.push(PulseTruth {
                                t_start: t,
                                t_end: end,
                                i_base_a: base,
                                i_pulse_a: pulsed,
                                soc_pct: self.soc,
                                temp_c: temp_clean,
                                true_dcr_system_ohm: r_sys,
                            });
                            current = pulsed;
                        }
                    }
                    break;
                }
            }
        } else {
            self.active_pulse = None;
        }

        // battery floor: stop discharging at the usable window edge or EOD
        if self.mode == Mode::Discharge {
            let projected = ocv_sys + current * r_sys;
            if self.soc <= soc_min + 1e-9 || projected <= eod_sys {
                self.mode = Mode::Empty;
                current = 0.0;
                self.active_pulse = None;
            }
        }

        // phase bookkeeping on mode transitions
        if phase_of(self.mode) != phase_of(self.prev_mode) {
            if let Some(kind) = phase_of(self.prev_mode) {
                self.log.phases.push(PhaseTruth {
                    kind,
                    start: self.mode_started,
                    end: t - 1,
                });
            }
            if phase_of(self.mode).is_some() {
                self.mode_started = t;
            }
        }
        self.prev_mode = self.mode;

        // terminal voltage and emitted record
        let v_clean = ocv_sys + current * r_sys;
        let nv = self.noise_v.map_or(0.0, |n| n.sample(&mut self.rng));
        let ni = self.noise_i.map_or(0.0, |n| n.sample(&mut self.rng));
        let nt = self.noise_t.map_or(0.0, |n| n.sample(&mut self.rng));
        let voltage = v_clean + nv;
        let meas_current = current + ni;
        let record = TelemetryRecord {
            timestamp: t,
            voltage,
            current: meas_current,
            power: voltage * meas_current,
            temperature: temp_clean + nt,
        };

        // truth logging, then integrate the clean current
        if self.scenario.truth_stride_s > 0
            && (t - self.scenario.start_timestamp) % self.scenario.truth_stride_s as i64 == 0
        {
            self.log.true_soc.push((t, self.soc));
        }
        self.log.samples += 1;
        self.soc += current / 3600.0 / self.battery.capacity_ah * 100.0;
        self.soc = self.soc.clamp(soc_min, soc_max);
        self.t += 1;
        Some(record)
    }
}

/// Summary of a file generation run.
#[derive(Debug, Serialize)]
pub struct GenerateSummary {
    pub samples: u64,
    pub pulses: usize,
    pub full_charges: usize,
    pub csv_bytes: u64,
}

/// Run a scenario and write the telemetry CSV plus the event-log JSON.
/// Output is byte-identical for identical (battery, scenario, seed).
pub fn generate(
    battery: &SimBattery,
    scenario: &LoadScenario,
    seed: u64,
    csv_path: &Path,
    log_path: &Path,
) -> Result<GenerateSummary, SimError> {
    let mut sim = Simulator::new(battery, scenario, seed)?;
    let file = std::fs::File::create(csv_path)?;
    let mut w = std::io::BufWriter::with_capacity(1 << 20, file);
    writeln!(w, "timestamp,voltage_v,current_a,power_w,temperature_c")?;
    for rec in &mut sim {
        writeln!(
            w,
            "{},{:.4},{:.3},{:.1},{:.2}",
            rec.timestamp, rec.voltage, rec.current, rec.power, rec.temperature
        )?;
    }
    w.flush()?;
    let csv_bytes = std::fs::metadata(csv_path)?.len();
    let log = sim.into_log();
    let summary = GenerateSummary {
        samples: log.samples,
        pulses: log.pulses.len(),
        full_charges: log.full_charge_instants.len(),
        csv_bytes,
    };
    let json = serde_json::to_vec_pretty(&log).expect("event log serializes");
    std::fs::write(log_path, json)?;
    Ok(summary)
}
