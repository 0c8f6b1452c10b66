//! Operational phase detection, the throughput and dynamics filters, and
//! overvoltage correction into partial qOCV curves.

use serde::Serialize;
use thiserror::Error;

use crate::dcr::DcrTable;
use crate::ingest::{IngestError, SocSample};
use crate::math;
use crate::types::{Direction, PeriodTag, StreamItem, SystemConfig};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum PhaseError {
    #[error("no DCR table covers phase starting at {phase_start}")]
    MissingDcrTable { phase_start: i64 },
    #[error("phase too short to correct")]
    TooShort,
    #[error("ingest error: {0}")]
    Ingest(#[from] IngestError),
}

/// One telemetry sample inside a phase, SOC-annotated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSample {
    pub timestamp: i64,
    pub voltage: Scalar,
    pub current: Scalar,
    pub temperature: Scalar,
    /// Percent of the SOC reference capacity.
    pub soc: Scalar,
}

/// A contiguous run of uniform current sign without gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct OperationalPhase {
    pub id: u64,
    pub direction: Direction,
    pub samples: Vec<PhaseSample>,
    pub period_tag: PeriodTag,
}

impl OperationalPhase {
    pub fn start(&self) -> i64 {
        self.samples.first().map_or(0, |s| s.timestamp)
    }

    pub fn end(&self) -> i64 {
        self.samples.last().map_or(0, |s| s.timestamp)
    }

    /// Absolute SOC difference from the first to the last sample.
    pub fn soc_span(&self) -> Scalar {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => (b.soc - a.soc).abs(),
            _ => 0.0,
        }
    }

    /// Largest |dI/dt| between consecutive samples, amperes per second.
    pub fn max_dynamic_a_per_s(&self) -> Scalar {
        self.samples
            .windows(2)
            .map(|w| {
                let dt = (w[1].timestamp - w[0].timestamp) as Scalar;
                ((w[1].current - w[0].current) / dt).abs()
            })
            .fold(0.0, Scalar::max)
    }

    pub fn mean_abs_current(&self) -> Scalar {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.current.abs()).sum::<Scalar>() / self.samples.len() as Scalar
    }
}

/// Phase slicing and filter thresholds.
#[derive(Debug, Clone)]
pub struct PhaseConfig {
    /// |I| below this is idle and terminates a phase. Default 1 % of 1C.
    pub idle_threshold_a: Scalar,
    /// Minimum SOC span a phase must cover, percentage points.
    pub min_soc_span_pp: Scalar,
    /// Dynamics limit as a fraction of the 1C current, per second.
    pub max_dynamic_fraction: Scalar,
    /// Current of a 1C rate, amperes.
    pub current_1c_a: Scalar,
    /// Group phases by calendar year (false) or month (true).
    pub monthly_periods: bool,
}

impl PhaseConfig {
    pub fn for_system(system: &SystemConfig) -> Self {
        Self {
            idle_threshold_a: 0.01 * system.current_1c(),
            min_soc_span_pp: 5.0,
            max_dynamic_fraction: 0.10,
            current_1c_a: system.current_1c(),
            monthly_periods: false,
        }
    }

    pub fn dynamics_limit_a_per_s(&self) -> Scalar {
        self.max_dynamic_fraction * self.current_1c_a
    }

    fn period_of(&self, timestamp: i64) -> PeriodTag {
        if self.monthly_periods {
            PeriodTag::month_of(timestamp)
        } else {
            PeriodTag::year_of(timestamp)
        }
    }
}

/// Split an SOC-annotated stream into maximal uniform-sign phases. Idle
/// samples (|I| below the deadband) and gaps terminate a phase; a sign flip
/// closes one phase and opens the next.
pub struct PhaseSplitter {
    cfg: PhaseConfig,
    current: Vec<PhaseSample>,
    direction: Option<Direction>,
    next_id: u64,
}

impl PhaseSplitter {
    pub fn new(cfg: PhaseConfig) -> Self {
        Self {
            cfg,
            current: Vec::new(),
            direction: None,
            next_id: 0,
        }
    }

    fn close(&mut self) -> Option<OperationalPhase> {
        let direction = self.direction.take()?;
        if self.current.is_empty() {
            return None;
        }
        let samples = std::mem::take(&mut self.current);
        let id = self.next_id;
        self.next_id += 1;
        let period_tag = self.cfg.period_of(samples[0].timestamp);
        Some(OperationalPhase {
            id,
            direction,
            samples,
            period_tag,
        })
    }

    /// Feed one sample; returns a phase when one just closed.
    pub fn push(&mut self, sample: &SocSample) -> Option<OperationalPhase> {
        let rec = sample.record;
        let sign = if rec.current >= self.cfg.idle_threshold_a {
            Some(Direction::Charge)
        } else if rec.current <= -self.cfg.idle_threshold_a {
            Some(Direction::Discharge)
        } else {
            None
        };
        let ps = PhaseSample {
            timestamp: rec.timestamp,
            voltage: rec.voltage,
            current: rec.current,
            temperature: rec.temperature,
            soc: sample.soc,
        };
        match (self.direction, sign) {
            (_, None) => self.close(),
            (None, Some(d)) => {
                self.direction = Some(d);
                self.current.push(ps);
                None
            }
            (Some(cur), Some(d)) if cur == d => {
                self.current.push(ps);
                None
            }
            (Some(_), Some(d)) => {
                let closed = self.close();
                self.direction = Some(d);
                self.current.push(ps);
                closed
            }
        }
    }

    /// A gap closes the running phase.
    pub fn push_gap(&mut self) -> Option<OperationalPhase> {
        self.close()
    }

    /// Flush at end of stream.
    pub fn finish(&mut self) -> Option<OperationalPhase> {
        self.close()
    }
}

/// Convenience for bounded streams: run the splitter over items annotated by
/// the tracker.
pub fn split_by_sign<I>(
    items: I,
    tracker: &mut crate::ingest::SocTracker,
    cfg: PhaseConfig,
) -> Result<Vec<OperationalPhase>, PhaseError>
where
    I: IntoIterator<Item = Result<StreamItem, IngestError>>,
{
    let mut splitter = PhaseSplitter::new(cfg);
    let mut phases = Vec::new();
    for item in items {
        match item? {
            StreamItem::Record(rec) => {
                let s = tracker.push(&rec);
                if let Some(p) = splitter.push(&s) {
                    phases.push(p);
                }
            }
            StreamItem::Gap(gap) => {
                tracker.push_gap(&gap);
                if let Some(p) = splitter.push_gap() {
                    phases.push(p);
                }
            }
        }
    }
    if let Some(p) = splitter.finish() {
        phases.push(p);
    }
    Ok(phases)
}

/// Why a phase was kept or dropped, for the audit log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterOutcome {
    Kept,
    BelowThroughput,
    SplitByDynamics,
}

/// Audit row for one phase that entered the filters.
#[derive(Debug, Clone, Serialize)]
pub struct PhaseAudit {
    pub phase_id: u64,
    pub direction: Direction,
    pub start: i64,
    pub end: i64,
    pub soc_span_pct: Scalar,
    pub max_dynamic_a_per_s: Scalar,
    pub kept: bool,
    pub reason: FilterOutcome,
}

pub fn audit_row(phase: &OperationalPhase, kept: bool, reason: FilterOutcome) -> PhaseAudit {
    PhaseAudit {
        phase_id: phase.id,
        direction: phase.direction,
        start: phase.start(),
        end: phase.end(),
        soc_span_pct: phase.soc_span(),
        max_dynamic_a_per_s: phase.max_dynamic_a_per_s(),
        kept,
        reason,
    }
}

/// Keep phases whose SOC span reaches the threshold (inclusive).
pub fn filter_throughput(
    phases: Vec<OperationalPhase>,
    min_soc_span_pp: Scalar,
    audit: &mut Vec<PhaseAudit>,
) -> Vec<OperationalPhase> {
    let mut kept = Vec::new();
    for phase in phases {
        if phase.soc_span() >= min_soc_span_pp {
            kept.push(phase);
        } else {
            audit.push(audit_row(&phase, false, FilterOutcome::BelowThroughput));
        }
    }
    kept
}

/// Enforce the dynamics limit. Phases violating it are split at every
/// violating sample pair; the fragments re-enter the throughput filter.
pub fn filter_dynamics(
    phases: Vec<OperationalPhase>,
    cfg: &PhaseConfig,
    next_id: &mut u64,
    audit: &mut Vec<PhaseAudit>,
) -> Vec<OperationalPhase> {
    let limit = cfg.dynamics_limit_a_per_s();
    let mut out = Vec::new();
    for phase in phases {
        if phase.max_dynamic_a_per_s() <= limit {
            out.push(phase);
            continue;
        }
        audit.push(audit_row(&phase, false, FilterOutcome::SplitByDynamics));
        let mut fragment: Vec<PhaseSample> = Vec::new();
        let mut fragments: Vec<Vec<PhaseSample>> = Vec::new();
        for s in phase.samples {
            if let Some(prev) = fragment.last() {
                let dt = (s.timestamp - prev.timestamp) as Scalar;
                if ((s.current - prev.current) / dt).abs() > limit {
                    fragments.push(std::mem::take(&mut fragment));
                }
            }
            fragment.push(s);
        }
        fragments.push(fragment);
        for samples in fragments {
            if samples.is_empty() {
                continue;
            }
            let frag = OperationalPhase {
                id: {
                    let id = *next_id;
                    *next_id += 1;
                    id
                },
                direction: phase.direction,
                period_tag: cfg.period_of(samples[0].timestamp),
                samples,
            };
            if frag.soc_span() >= cfg.min_soc_span_pp {
                out.push(frag);
            } else {
                audit.push(audit_row(&frag, false, FilterOutcome::BelowThroughput));
            }
        }
    }
    out
}

/// One point of a partial qOCV curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartialPoint {
    /// Percent of nominal capacity.
    pub soc: Scalar,
    /// Corrected voltage, cell level, volts.
    pub voltage: Scalar,
    /// True when the DCR used nearest-neighbor fill or hull clamping.
    pub extrapolated_dcr: bool,
}

/// Overvoltage-corrected partial curve on a uniform SOC grid, ordered along
/// the phase direction (SOC increasing for charge, decreasing for
/// discharge).
#[derive(Debug, Clone, PartialEq)]
pub struct PartialQocvCurve {
    pub points: Vec<PartialPoint>,
    pub direction: Direction,
    pub source_phase_id: u64,
    pub period_tag: PeriodTag,
    /// Mean |I| over the phase as a fraction of 1C.
    pub mean_c_rate: Scalar,
}

/// Correction settings.
#[derive(Debug, Clone)]
pub struct CorrectionConfig {
    /// SOC resampling grid step, percentage points.
    pub soc_grid_step_pp: Scalar,
    /// Series cell count dividing system voltage to cell level.
    pub cell_count_series: u32,
    /// Converts reference-capacity SOC to nominal-capacity SOC
    /// (reference_capacity / nominal_capacity). 1 when SOC is already
    /// normalized by nominal capacity.
    pub soc_scale: Scalar,
    /// Current of a 1C rate, amperes, for the mean C-rate record.
    pub current_1c_a: Scalar,
}

impl CorrectionConfig {
    pub fn for_system(system: &SystemConfig) -> Self {
        Self {
            soc_grid_step_pp: 0.25,
            cell_count_series: system.cell_count_series,
            soc_scale: 1.0,
            current_1c_a: system.current_1c(),
        }
    }
}

/// Apply `V_corrected = V - I·DCR(SOC, T)`, rescale SOC to nominal units,
/// divide to cell level, and resample onto the uniform SOC grid.
pub fn correct_overvoltage(
    phase: &OperationalPhase,
    table: &DcrTable,
    cfg: &CorrectionConfig,
) -> Result<PartialQocvCurve, PhaseError> {
    if phase.samples.len() < 2 {
        return Err(PhaseError::TooShort);
    }
    if phase.start() < table.valid_start || phase.start() >= table.valid_end {
        return Err(PhaseError::MissingDcrTable {
            phase_start: phase.start(),
        });
    }
    let cells = cfg.cell_count_series as Scalar;
    let mut socs = Vec::with_capacity(phase.samples.len());
    let mut volts = Vec::with_capacity(phase.samples.len());
    let mut extrap = Vec::with_capacity(phase.samples.len());
    for s in &phase.samples {
        let hit = table
            .lookup(s.soc, s.temperature)
            .ok_or(PhaseError::MissingDcrTable {
                phase_start: phase.start(),
            })?;
        let corrected = s.voltage - s.current * hit.ohms;
        socs.push(s.soc * cfg.soc_scale);
        volts.push(corrected / cells);
        extrap.push(hit.extrapolated);
    }
    // orient ascending in SOC for resampling
    let ascending = phase.direction == Direction::Charge;
    if !ascending {
        socs.reverse();
        volts.reverse();
        extrap.reverse();
    }
    let step = cfg.soc_grid_step_pp;
    let lo = (socs[0] / step).ceil() * step;
    let hi = (socs[socs.len() - 1] / step).floor() * step;
    if hi <= lo {
        return Err(PhaseError::TooShort);
    }
    let n = ((hi - lo) / step).round() as usize + 1;
    let grid: Vec<Scalar> = (0..n).map(|k| lo + k as Scalar * step).collect();
    // SOC is strictly monotonic inside a phase (current never idles), but
    // guard against ties from clamping
    for w in socs.windows(2) {
        if w[1] <= w[0] {
            return Err(PhaseError::TooShort);
        }
    }
    let vgrid = math::resample_linear(&socs, &volts, &grid);
    let mut points: Vec<PartialPoint> = grid
        .iter()
        .zip(vgrid.iter())
        .enumerate()
        .map(|(k, (&soc, &voltage))| {
            // carry the extrapolation flag of the nearest source sample
            let idx = nearest_index(&socs, grid[k]);
            PartialPoint {
                soc,
                voltage,
                extrapolated_dcr: extrap[idx],
            }
        })
        .collect();
    if !ascending {
        points.reverse();
    }
    Ok(PartialQocvCurve {
        points,
        direction: phase.direction,
        source_phase_id: phase.id,
        period_tag: phase.period_tag,
        mean_c_rate: phase.mean_abs_current() / cfg.current_1c_a,
    })
}

fn nearest_index(sorted: &[Scalar], q: Scalar) -> usize {
    let mut best = 0;
    let mut best_d = Scalar::INFINITY;
    for (i, &v) in sorted.iter().enumerate() {
        let d = (v - q).abs();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Run throughput then dynamics (fragments re-filtered) over freshly split
/// phases; returns kept phases and appends audit rows for every decision.
pub fn apply_filters(
    phases: Vec<OperationalPhase>,
    cfg: &PhaseConfig,
    next_id: &mut u64,
    audit: &mut Vec<PhaseAudit>,
) -> Vec<OperationalPhase> {
    let after_throughput = filter_throughput(phases, cfg.min_soc_span_pp, audit);
    let kept = filter_dynamics(after_throughput, cfg, next_id, audit);
    for phase in &kept {
        audit.push(audit_row(phase, true, FilterOutcome::Kept));
    }
    kept
}

/// Audit log CSV with the documented columns.
pub fn audit_to_csv(rows: &[PhaseAudit]) -> String {
    let mut out =
        String::from("phase_id,direction,start,end,soc_span_pct,max_dynamic_a_per_s,kept,reason\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.phase_id,
            r.direction,
            r.start,
            r.end,
            r.soc_span_pct,
            r.max_dynamic_a_per_s,
            r.kept,
            match r.reason {
                FilterOutcome::Kept => "kept",
                FilterOutcome::BelowThroughput => "below_throughput",
                FilterOutcome::SplitByDynamics => "split_by_dynamics",
            }
        ));
    }
    out
}
