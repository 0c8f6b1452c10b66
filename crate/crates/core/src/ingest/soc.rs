//! Coulomb-counting SOC with full-charge anchoring.
//!
//! SOC(t) = SOC(t0) + ∫I dt / reference_capacity × 100 %, trapezoidal over
//! sample intervals. A full-charge anchor (voltage at EOC with taper
//! current, sustained for the hold time) resets SOC to 100 % of the
//! reference capacity; the pre-reset deviation from 100 % is recorded as a
//! drift quality metric, never absorbed silently. Integration continues
//! across gap markers with the trapezoid spanning the hole; the resulting
//! uncertainty shows up in the drift metric.

use serde::Serialize;

use crate::types::{AnchorKind, GapMarker, StreamItem, SystemConfig, TelemetryRecord};
use crate::Scalar;

use super::IngestError;

/// SOC integration settings.
#[derive(Debug, Clone)]
pub struct SocConfig {
    /// Capacity the SOC percentage refers to. `None` uses the system's
    /// nominal capacity; supply a per-period estimate for tighter SOC.
    pub reference_capacity_ah: Option<Scalar>,
    /// Starting SOC before the first anchor is seen.
    pub initial_soc_pct: Scalar,
    /// How long the EOC condition must hold before an anchor fires.
    pub anchor_hold_s: i64,
    /// Minimum spacing between consecutive anchors.
    pub min_anchor_interval_s: i64,
    /// Caller-supplied anchors: (timestamp, soc_pct), applied when the
    /// stream reaches the timestamp.
    pub manual_anchors: Vec<(i64, Scalar)>,
}

impl Default for SocConfig {
    fn default() -> Self {
        Self {
            reference_capacity_ah: None,
            initial_soc_pct: 50.0,
            anchor_hold_s: 60,
            min_anchor_interval_s: 600,
            manual_anchors: Vec::new(),
        }
    }
}

const CLAMP_MIN: Scalar = -5.0;
const CLAMP_MAX: Scalar = 105.0;

/// One anchor event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnchorEvent {
    pub timestamp: i64,
    pub kind: AnchorKind,
    /// SOC right before the reset minus the reset value, in pp.
    pub drift_pp: Scalar,
}

/// A record annotated with its SOC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocSample {
    pub record: TelemetryRecord,
    pub soc: Scalar,
    pub anchor: Option<AnchorKind>,
}

/// Streaming SOC integrator. Feed records in timestamp order via
/// [`SocTracker::push`]; gaps via [`SocTracker::push_gap`].
#[derive(Debug, Clone)]
pub struct SocTracker {
    reference_capacity_ah: Scalar,
    eoc_voltage_v: Scalar,
    eoc_taper_current_a: Scalar,
    cfg: SocConfig,
    soc: Scalar,
    last: Option<(i64, Scalar)>,
    cond_since: Option<i64>,
    anchored_this_episode: bool,
    last_anchor_ts: Option<i64>,
    next_manual: usize,
    events: Vec<AnchorEvent>,
    clamp_count: u64,
    anchored: bool,
}

impl SocTracker {
    pub fn new(system: &SystemConfig, cfg: SocConfig) -> Self {
        let reference = cfg
            .reference_capacity_ah
            .unwrap_or(system.nominal_capacity_ah);
        let mut cfg = cfg;
        cfg.manual_anchors.sort_by_key(|(ts, _)| *ts);
        Self {
            reference_capacity_ah: reference,
            eoc_voltage_v: system.eoc_voltage_v,
            eoc_taper_current_a: system.eoc_taper_current_a,
            cfg,
            soc: Scalar::NAN,
            last: None,
            cond_since: None,
            anchored_this_episode: false,
            last_anchor_ts: None,
            next_manual: 0,
            events: Vec::new(),
            clamp_count: 0,
            anchored: false,
        }
    }

    /// Continue integration from a previous tracker's end state, pairing the
    /// trapezoid across the split point.
    pub fn resume_from(system: &SystemConfig, cfg: SocConfig, soc: Scalar, last: (i64, Scalar)) -> Self {
        let mut t = Self::new(system, cfg);
        t.soc = soc;
        t.last = Some(last);
        t
    }

    pub fn reference_capacity_ah(&self) -> Scalar {
        self.reference_capacity_ah
    }

    pub fn soc(&self) -> Scalar {
        self.soc
    }

    /// End state for [`SocTracker::resume_from`].
    pub fn state(&self) -> Option<(Scalar, (i64, Scalar))> {
        self.last.map(|l| (self.soc, l))
    }

    pub fn anchored(&self) -> bool {
        self.anchored
    }

    pub fn events(&self) -> &[AnchorEvent] {
        &self.events
    }

    pub fn clamp_count(&self) -> u64 {
        self.clamp_count
    }

    pub fn push_gap(&mut self, _gap: &GapMarker) {
        // the trapezoid of the next record spans the hole; the EOC hold
        // episode does not survive a gap
        self.cond_since = None;
        self.anchored_this_episode = false;
    }

    pub fn push(&mut self, rec: &TelemetryRecord) -> SocSample {
        if self.soc.is_nan() {
            self.soc = self.cfg.initial_soc_pct;
        }
        if let Some((t0, i0)) = self.last {
            let dt = (rec.timestamp - t0) as Scalar;
            if dt > 0.0 {
                let delta_ah = 0.5 * (i0 + rec.current) * dt / 3600.0;
                self.soc += delta_ah / self.reference_capacity_ah * 100.0;
            }
        }
        if self.soc > CLAMP_MAX {
            self.soc = CLAMP_MAX;
            self.clamp_count += 1;
        } else if self.soc < CLAMP_MIN {
            self.soc = CLAMP_MIN;
            self.clamp_count += 1;
        }
        self.last = Some((rec.timestamp, rec.current));

        let mut fired = None;
        // manual anchors take precedence at their timestamp
        while self.next_manual < self.cfg.manual_anchors.len()
            && self.cfg.manual_anchors[self.next_manual].0 <= rec.timestamp
        {
            let (ts, soc) = self.cfg.manual_anchors[self.next_manual];
            self.next_manual += 1;
            self.events.push(AnchorEvent {
                timestamp: ts,
                kind: AnchorKind::ManualAnchor,
                drift_pp: self.soc - soc,
            });
            self.soc = soc;
            self.anchored = true;
            fired = Some(AnchorKind::ManualAnchor);
        }

        let condition =
            rec.voltage >= self.eoc_voltage_v && rec.current.abs() <= self.eoc_taper_current_a;
        if condition {
            let since = *self.cond_since.get_or_insert(rec.timestamp);
            let spaced_out = self
                .last_anchor_ts
                .map_or(true, |t| rec.timestamp - t >= self.cfg.min_anchor_interval_s);
            if !self.anchored_this_episode
                && rec.timestamp - since >= self.cfg.anchor_hold_s
                && spaced_out
            {
                self.events.push(AnchorEvent {
                    timestamp: rec.timestamp,
                    kind: AnchorKind::FullChargeAnchor,
                    drift_pp: self.soc - 100.0,
                });
                self.soc = 100.0;
                self.anchored = true;
                self.anchored_this_episode = true;
                self.last_anchor_ts = Some(rec.timestamp);
                fired = Some(AnchorKind::FullChargeAnchor);
            }
        } else {
            self.cond_since = None;
            self.anchored_this_episode = false;
        }

        SocSample {
            record: *rec,
            soc: self.soc,
            anchor: fired,
        }
    }
}

/// Materialized SOC series over a bounded stream.
#[derive(Debug, Clone)]
pub struct SocSeries {
    /// One SOC value per emitted record, percent of `reference_capacity_ah`.
    pub soc: Vec<Scalar>,
    pub anchor_events: Vec<AnchorEvent>,
    pub reference_capacity_ah: Scalar,
    /// False when no anchor was found; the series then starts from the
    /// configured initial SOC and carries low confidence.
    pub anchored: bool,
    pub clamp_count: u64,
}

impl SocSeries {
    /// Largest absolute anchor drift, the headline quality metric.
    pub fn max_drift_pp(&self) -> Option<Scalar> {
        self.anchor_events
            .iter()
            .map(|e| e.drift_pp.abs())
            .fold(None, |acc, d| Some(acc.map_or(d, |a: Scalar| a.max(d))))
    }
}

/// Integrate SOC over a bounded stream of items.
pub fn compute_soc<I>(
    items: I,
    system: &SystemConfig,
    cfg: SocConfig,
) -> Result<SocSeries, IngestError>
where
    I: IntoIterator<Item = Result<StreamItem, IngestError>>,
{
    let mut tracker = SocTracker::new(system, cfg);
    let mut soc = Vec::new();
    for item in items {
        match item? {
            StreamItem::Record(rec) => soc.push(tracker.push(&rec).soc),
            StreamItem::Gap(gap) => tracker.push_gap(&gap),
        }
    }
    Ok(SocSeries {
        soc,
        anchor_events: tracker.events.clone(),
        reference_capacity_ah: tracker.reference_capacity_ah,
        anchored: tracker.anchored,
        clamp_count: tracker.clamp_count,
    })
}
