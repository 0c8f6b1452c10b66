//! DC-resistance estimation from current pulses, SOC×temperature lookup
//! tables, and long-term aging trends.
//!
//! A pulse is a current step of at least `min_delta_i` completed within the
//! step window, followed by a hold phase where the current stays within
//! 10 % of the step amplitude. DCR = ΔV/ΔI with (V1, I1) sampled right
//! before the step and (V2, I2) at the end of the hold. C-rate similarity is
//! not enforced; the dynamics filter downstream takes care of it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{IngestError, SocTracker};
use crate::math;
use crate::types::{StreamItem, SystemConfig};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum DcrError {
    #[error("pulse has zero current delta")]
    ZeroCurrentDelta,
    #[error("no qualifying pulses in period")]
    EmptyTable,
    #[error("need at least {required} yearly tables with data in range, found {found}")]
    InsufficientYears { found: usize, required: usize },
    #[error("ingest error: {0}")]
    Ingest(#[from] IngestError),
}

/// One detected current pulse with the context needed for binning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcrPulse {
    pub t_start: i64,
    pub t_end: i64,
    pub v1: Scalar,
    pub v2: Scalar,
    pub i1: Scalar,
    pub i2: Scalar,
    pub soc_at_pulse: Scalar,
    pub temp_at_pulse: Scalar,
}

/// Pulse qualification thresholds.
#[derive(Debug, Clone)]
pub struct PulseConfig {
    /// Minimum current step in amperes. Default 0.5C.
    pub min_delta_i_a: Scalar,
    /// Maximum time for the step to complete, seconds.
    pub max_step_s: i64,
    /// Minimum hold after the step, seconds.
    pub min_hold_s: i64,
    /// Maximum total pulse duration, seconds.
    pub max_pulse_s: i64,
    /// Hold tolerance as fraction of the step amplitude.
    pub hold_tolerance: Scalar,
}

impl PulseConfig {
    pub fn for_system(system: &SystemConfig) -> Self {
        Self {
            min_delta_i_a: 0.5 * system.current_1c(),
            max_step_s: 2,
            min_hold_s: 2,
            max_pulse_s: 10,
            hold_tolerance: 0.10,
        }
    }
}

/// DCR per Eq ΔV/ΔI. The caller discards non-positive results (see
/// [`build_table`], which tallies them).
pub fn estimate_dcr(pulse: &DcrPulse) -> Result<Scalar, DcrError> {
    let delta_i = pulse.i2 - pulse.i1;
    if delta_i == 0.0 {
        return Err(DcrError::ZeroCurrentDelta);
    }
    Ok((pulse.v2 - pulse.v1) / delta_i)
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    ts: i64,
    v: Scalar,
    i: Scalar,
    temp: Scalar,
    soc: Scalar,
}

fn sign_flip(a: Scalar, b: Scalar) -> bool {
    a != 0.0 && b != 0.0 && a.signum() != b.signum()
}

/// Streaming pulse state machine. `recent` buffers pre-step samples so a
/// step may develop over up to `max_step_s`; once a hold is open, `base` is
/// the sample immediately before the step.
struct PulseDetector<'a> {
    cfg: &'a PulseConfig,
    recent: std::collections::VecDeque<Sample>,
    base: Option<Sample>,
    hold: Vec<Sample>,
    pulses: Vec<DcrPulse>,
}

impl<'a> PulseDetector<'a> {
    fn new(cfg: &'a PulseConfig) -> Self {
        Self {
            cfg,
            recent: std::collections::VecDeque::new(),
            base: None,
            hold: Vec::new(),
            pulses: Vec::new(),
        }
    }

    fn push(&mut self, s: Sample) {
        if self.hold.is_empty() {
            self.try_open(s);
            return;
        }
        let base = self.base.expect("hold implies base");
        let first = self.hold[0];
        let last = *self.hold.last().unwrap();
        let amplitude = (first.i - base.i).abs();
        let continues = (s.i - first.i).abs() <= self.cfg.hold_tolerance * amplitude
            && !sign_flip(first.i, s.i)
            && s.ts - base.ts <= self.cfg.max_pulse_s
            && s.ts - last.ts <= self.cfg.max_step_s;
        if continues {
            self.hold.push(s);
            return;
        }
        self.finish_hold();
        self.try_open(s);
    }

    /// Look for a step from any sample of the recent window to `s`.
    /// The newest qualifying sample becomes the base (v1/i1 right before
    /// the step).
    fn try_open(&mut self, s: Sample) {
        let mut opened = false;
        for h in self.recent.iter().rev() {
            if s.ts - h.ts > self.cfg.max_step_s {
                break;
            }
            if (s.i - h.i).abs() >= self.cfg.min_delta_i_a && !sign_flip(h.i, s.i) {
                self.base = Some(*h);
                self.hold.clear();
                self.hold.push(s);
                opened = true;
                break;
            }
        }
        if !opened {
            self.recent.push_back(s);
            while let Some(front) = self.recent.front() {
                if s.ts - front.ts > self.cfg.max_step_s {
                    self.recent.pop_front();
                } else {
                    break;
                }
            }
        }
    }

    /// Close the active hold, emitting a pulse when the window qualifies,
    /// and reseed the recent buffer with the hold samples.
    fn finish_hold(&mut self) {
        if let Some(base) = self.base {
            let first = self.hold[0];
            let last = *self.hold.last().unwrap();
            let hold_span = last.ts - first.ts;
            let total = last.ts - base.ts;
            if hold_span >= self.cfg.min_hold_s && total <= self.cfg.max_pulse_s {
                self.pulses.push(DcrPulse {
                    t_start: base.ts,
                    t_end: last.ts,
                    v1: base.v,
                    v2: last.v,
                    i1: base.i,
                    i2: last.i,
                    soc_at_pulse: base.soc,
                    temp_at_pulse: base.temp,
                });
            }
        }
        self.recent.clear();
        for s in self.hold.drain(..) {
            self.recent.push_back(s);
        }
        self.base = None;
    }

    fn reset(&mut self) {
        if !self.hold.is_empty() {
            self.finish_hold();
        }
        self.recent.clear();
        self.base = None;
    }
}

/// Scan a stream for qualifying pulses. The stream is consumed once; SOC is
/// tracked alongside with the supplied tracker.
pub fn detect_pulses<I>(
    items: I,
    tracker: &mut SocTracker,
    cfg: &PulseConfig,
) -> Result<Vec<DcrPulse>, DcrError>
where
    I: IntoIterator<Item = Result<StreamItem, IngestError>>,
{
    let mut det = PulseDetector::new(cfg);
    for item in items {
        match item? {
            StreamItem::Record(rec) => {
                let annotated = tracker.push(&rec);
                det.push(Sample {
                    ts: rec.timestamp,
                    v: rec.voltage,
                    i: rec.current,
                    temp: rec.temperature,
                    soc: annotated.soc,
                });
            }
            StreamItem::Gap(gap) => {
                tracker.push_gap(&gap);
                det.reset();
            }
        }
    }
    det.reset();
    Ok(det.pulses.into_iter().collect())
}

/// Table binning configuration.
#[derive(Debug, Clone)]
pub struct TableConfig {
    pub soc_bin_edges: Vec<Scalar>,
    pub temp_bin_edges: Vec<Scalar>,
    pub min_samples: usize,
}

impl Default for TableConfig {
    fn default() -> Self {
        Self {
            soc_bin_edges: (0..=10).map(|i| i as Scalar * 10.0).collect(),
            temp_bin_edges: (0..=8).map(|i| i as Scalar * 5.0).collect(),
            min_samples: 5,
        }
    }
}

/// A populated table cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcrCell {
    pub median_dcr_ohm: Option<Scalar>,
    pub sample_count: usize,
}

/// SOC×temperature binned DC resistance for one validity period.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DcrTable {
    pub soc_bin_edges: Vec<Scalar>,
    pub temp_bin_edges: Vec<Scalar>,
    /// cells[soc_bin][temp_bin]
    pub cells: Vec<Vec<DcrCell>>,
    pub valid_start: i64,
    pub valid_end: i64,
    /// Pulses whose ΔV/ΔI came out non-positive.
    pub negative_resistance_count: usize,
    /// Pulses outside the bin edges.
    pub out_of_range_count: usize,
}

/// Result of a table lookup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcrLookup {
    pub ohms: Scalar,
    /// True when an empty bin was filled by nearest-neighbor or the query
    /// lay outside the bin-center hull.
    pub extrapolated: bool,
}

impl DcrTable {
    fn bin_centers(edges: &[Scalar]) -> Vec<Scalar> {
        edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn soc_centers(&self) -> Vec<Scalar> {
        Self::bin_centers(&self.soc_bin_edges)
    }

    pub fn temp_centers(&self) -> Vec<Scalar> {
        Self::bin_centers(&self.temp_bin_edges)
    }

    pub fn populated_cells(&self) -> usize {
        self.cells
            .iter()
            .flatten()
            .filter(|c| c.median_dcr_ohm.is_some())
            .count()
    }

    /// Dense grid with empty bins filled by nearest populated neighbor in
    /// bin-index space. Second return: per-bin fill flag.
    fn filled_grid(&self) -> (Vec<Vec<Scalar>>, Vec<Vec<bool>>) {
        let ns = self.cells.len();
        let nt = self.cells.first().map_or(0, |c| c.len());
        let mut grid = vec![vec![0.0; nt]; ns];
        let mut filled = vec![vec![false; nt]; ns];
        for i in 0..ns {
            for j in 0..nt {
                match self.cells[i][j].median_dcr_ohm {
                    Some(v) => grid[i][j] = v,
                    None => {
                        filled[i][j] = true;
                        let mut best: Option<(usize, Scalar)> = None;
                        for (pi, row) in self.cells.iter().enumerate() {
                            for (pj, cell) in row.iter().enumerate() {
                                if let Some(v) = cell.median_dcr_ohm {
                                    let d2 = (pi as isize - i as isize).pow(2)
                                        + (pj as isize - j as isize).pow(2);
                                    let key = d2 as usize * nt * ns + pi * nt + pj;
                                    if best.map_or(true, |(bk, _)| key < bk) {
                                        best = Some((key, v));
                                    }
                                }
                            }
                        }
                        grid[i][j] = best.map(|(_, v)| v).unwrap_or(0.0);
                    }
                }
            }
        }
        (grid, filled)
    }

    /// DCR at (soc, temp) by bilinear interpolation over bin centers; empty
    /// bins are filled by nearest-neighbor. The flag is set when the query
    /// lands outside the binned area or in a bin that needed filling.
    pub fn lookup(&self, soc: Scalar, temp: Scalar) -> Option<DcrLookup> {
        if self.populated_cells() == 0 {
            return None;
        }
        let sc = self.soc_centers();
        let tc = self.temp_centers();
        let (grid, fillmask) = self.filled_grid();
        let ohms = math::bilinear(&sc, &tc, &grid, soc, temp);
        let own = (
            bin_index(&self.soc_bin_edges, soc),
            bin_index(&self.temp_bin_edges, temp),
        );
        let extrapolated = match own {
            (Some(si), Some(ti)) => fillmask[si][ti],
            _ => true,
        };
        Some(DcrLookup { ohms, extrapolated })
    }
}

fn bin_index(edges: &[Scalar], v: Scalar) -> Option<usize> {
    if v < edges[0] || v > *edges.last().unwrap() {
        return None;
    }
    let mut i = 0;
    while i + 2 < edges.len() && edges[i + 1] <= v {
        i += 1;
    }
    // last edge inclusive
    if v >= edges[i] && (v < edges[i + 1] || (i + 2 == edges.len() && v <= edges[i + 1])) {
        Some(i)
    } else {
        None
    }
}

/// Build the per-bin median table over pulses within `[start, end)`.
pub fn build_table(
    pulses: &[DcrPulse],
    cfg: &TableConfig,
    valid_start: i64,
    valid_end: i64,
) -> Result<DcrTable, DcrError> {
    let ns = cfg.soc_bin_edges.len() - 1;
    let nt = cfg.temp_bin_edges.len() - 1;
    let mut buckets: Vec<Vec<Vec<Scalar>>> = vec![vec![Vec::new(); nt]; ns];
    let mut negative = 0usize;
    let mut out_of_range = 0usize;
    let mut qualifying = 0usize;
    for pulse in pulses {
        if pulse.t_start < valid_start || pulse.t_start >= valid_end {
            continue;
        }
        let r = match estimate_dcr(pulse) {
            Ok(r) => r,
            Err(_) => continue,
        };
        if r <= 0.0 {
            negative += 1;
            continue;
        }
        let (si, ti) = match (
            bin_index(&cfg.soc_bin_edges, pulse.soc_at_pulse),
            bin_index(&cfg.temp_bin_edges, pulse.temp_at_pulse),
        ) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                out_of_range += 1;
                continue;
            }
        };
        buckets[si][ti].push(r);
        qualifying += 1;
    }
    if qualifying == 0 {
        return Err(DcrError::EmptyTable);
    }
    let cells = buckets
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|vals| DcrCell {
                    median_dcr_ohm: if vals.len() >= cfg.min_samples {
                        math::median(&vals)
                    } else {
                        None
                    },
                    sample_count: vals.len(),
                })
                .collect()
        })
        .collect();
    Ok(DcrTable {
        soc_bin_edges: cfg.soc_bin_edges.clone(),
        temp_bin_edges: cfg.temp_bin_edges.clone(),
        cells,
        valid_start,
        valid_end,
        negative_resistance_count: negative,
        out_of_range_count: out_of_range,
    })
}

/// Yearly relative DCR development in a SOC/temperature range.
#[derive(Debug, Clone, Serialize)]
pub struct DcrTrend {
    /// First year normalized to 100 %.
    pub yearly_relative_pct: Vec<Scalar>,
    /// Least-squares slope of the yearly values, percentage points per year.
    pub gradient_pp_per_year: Scalar,
    pub soc_range: (Scalar, Scalar),
    pub temp_range: (Scalar, Scalar),
}

const SECONDS_PER_YEAR: Scalar = 365.25 * 86_400.0;

/// Fit the relative DCR trend over yearly tables. Each table contributes the
/// mean of its populated cells whose bin centers fall inside the ranges.
pub fn fit_trend(
    tables: &[DcrTable],
    soc_range: (Scalar, Scalar),
    temp_range: (Scalar, Scalar),
) -> Result<DcrTrend, DcrError> {
    let mut points: Vec<(Scalar, Scalar)> = Vec::new();
    for table in tables {
        let sc = table.soc_centers();
        let tc = table.temp_centers();
        let mut sum = 0.0;
        let mut n = 0usize;
        for (i, &s) in sc.iter().enumerate() {
            if s < soc_range.0 || s > soc_range.1 {
                continue;
            }
            for (j, &t) in tc.iter().enumerate() {
                if t < temp_range.0 || t > temp_range.1 {
                    continue;
                }
                if let Some(v) = table.cells[i][j].median_dcr_ohm {
                    sum += v;
                    n += 1;
                }
            }
        }
        if n > 0 {
            let years = table.valid_start as Scalar / SECONDS_PER_YEAR;
            points.push((years, sum / n as Scalar));
        }
    }
    if points.len() < 2 {
        return Err(DcrError::InsufficientYears {
            found: points.len(),
            required: 2,
        });
    }
    points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let first = points[0];
    let xs: Vec<Scalar> = points.iter().map(|(t, _)| t - first.0).collect();
    let ys: Vec<Scalar> = points.iter().map(|(_, v)| v / first.1 * 100.0).collect();
    let fit = math::linear_fit(&xs, &ys).expect("two or more distinct years");
    Ok(DcrTrend {
        yearly_relative_pct: ys,
        gradient_pp_per_year: fit.slope,
        soc_range,
        temp_range,
    })
}

/// JSON shape for table export: `{soc_edges, temp_edges, cells, period}`.
#[derive(Debug, Serialize, Deserialize)]
pub struct DcrTableJson {
    pub soc_edges: Vec<Scalar>,
    pub temp_edges: Vec<Scalar>,
    pub cells: Vec<Vec<DcrCellJson>>,
    pub period: PeriodJson,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DcrCellJson {
    pub dcr_ohm: Option<Scalar>,
    pub n: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PeriodJson {
    pub start: i64,
    pub end: i64,
}

impl DcrTable {
    pub fn to_json(&self) -> DcrTableJson {
        DcrTableJson {
            soc_edges: self.soc_bin_edges.clone(),
            temp_edges: self.temp_bin_edges.clone(),
            cells: self
                .cells
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|c| DcrCellJson {
                            dcr_ohm: c.median_dcr_ohm,
                            n: c.sample_count,
                        })
                        .collect()
                })
                .collect(),
            period: PeriodJson {
                start: self.valid_start,
                end: self.valid_end,
            },
        }
    }

    pub fn from_json(json: &DcrTableJson) -> Self {
        DcrTable {
            soc_bin_edges: json.soc_edges.clone(),
            temp_bin_edges: json.temp_edges.clone(),
            cells: json
                .cells
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|c| DcrCell {
                            median_dcr_ohm: c.dcr_ohm,
                            sample_count: c.n,
                        })
                        .collect()
                })
                .collect(),
            valid_start: json.period.start,
            valid_end: json.period.end,
            negative_resistance_count: 0,
            out_of_range_count: 0,
        }
    }
}

/// Trend CSV: `year,relative_dcr_pct` rows plus a summary row.
pub fn trend_to_csv(trend: &DcrTrend) -> String {
    let mut out = String::from("year,relative_dcr_pct\n");
    for (i, v) in trend.yearly_relative_pct.iter().enumerate() {
        out.push_str(&format!("{i},{v}\n"));
    }
    out.push_str(&format!(
        "gradient_pp_per_year,{}\n",
        trend.gradient_pp_per_year
    ));
    out
}
