//! Core cohort vocabulary: patients, modalities, follow-up horizons and the
//! change-from-baseline labelling rules.
//!
//! Everything here is immutable value types and pure functions.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;

use crate::error::{Error, Result};

/// Opaque, non-empty patient token.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PatientId(String);

impl PatientId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.trim().is_empty() {
            return Err(Error::invalid("patient id must be non-empty"));
        }
        Ok(PatientId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PatientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Modality {
    Phys,
    Sleep,
    Hrv,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Phys, Modality::Sleep, Modality::Hrv];

    pub fn index(self) -> usize {
        match self {
            Modality::Phys => 0,
            Modality::Sleep => 1,
            Modality::Hrv => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Phys => "phys",
            Modality::Sleep => "sleep",
            Modality::Hrv => "hrv",
        }
    }

    /// Single-letter tag used in ablation labels ("P+S", "S+E", ...).
    pub fn letter(self) -> char {
        match self {
            Modality::Phys => 'P',
            Modality::Sleep => 'S',
            Modality::Hrv => 'E',
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "phys" | "p" => Ok(Modality::Phys),
            "sleep" | "s" => Ok(Modality::Sleep),
            "hrv" | "ecg" | "e" => Ok(Modality::Hrv),
            other => Err(Error::invalid(format!("unknown modality '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Horizon {
    M3,
    M6,
}

impl Horizon {
    pub const ALL: [Horizon; 2] = [Horizon::M3, Horizon::M6];

    pub fn index(self) -> usize {
        match self {
            Horizon::M3 => 0,
            Horizon::M6 => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Horizon::M3 => "M3",
            Horizon::M6 => "M6",
        }
    }
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Horizon {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "M3" => Ok(Horizon::M3),
            "M6" => Ok(Horizon::M6),
            other => Err(Error::invalid(format!("unknown horizon '{other}'"))),
        }
    }
}

/// Clinical endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Task {
    Facit,
    Handgrip,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::Facit, Task::Handgrip];

    pub fn name(self) -> &'static str {
        match self {
            Task::Facit => "facit",
            Task::Handgrip => "handgrip",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "facit" | "facit-f" => Ok(Task::Facit),
            "handgrip" | "hg" => Ok(Task::Handgrip),
            other => Err(Error::invalid(format!("unknown task '{other}'"))),
        }
    }
}

/// Three-way change class. Integer codes are fixed: 0 worsened, 1 stable,
/// 2 improved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DeltaClass {
    Worsened = 0,
    Stable = 1,
    Improved = 2,
}

impl DeltaClass {
    pub const ALL: [DeltaClass; 3] = [DeltaClass::Worsened, DeltaClass::Stable, DeltaClass::Improved];
    pub const COUNT: usize = 3;

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        match code {
            0 => Some(DeltaClass::Worsened),
            1 => Some(DeltaClass::Stable),
            2 => Some(DeltaClass::Improved),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DeltaClass::Worsened => "worsened",
            DeltaClass::Stable => "stable",
            DeltaClass::Improved => "improved",
        }
    }
}

/// Inclusive day interval relative to baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DayWindow {
    pub t_minus: i64,
    pub t_plus: i64,
}

impl DayWindow {
    pub fn new(t_minus: i64, t_plus: i64) -> Result<Self> {
        if t_minus > t_plus {
            return Err(Error::invalid(format!(
                "window start {t_minus} is after window end {t_plus}"
            )));
        }
        Ok(DayWindow { t_minus, t_plus })
    }

    pub fn contains(&self, tau: i64) -> bool {
        self.t_minus <= tau && tau <= self.t_plus
    }

    pub fn len_days(&self) -> i64 {
        self.t_plus - self.t_minus + 1
    }

    fn overlaps(&self, other: &DayWindow) -> bool {
        self.t_minus <= other.t_plus && other.t_minus <= self.t_plus
    }
}

/// Per-horizon day windows. M3 and M6 never overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HorizonWindows {
    m3: DayWindow,
    m6: DayWindow,
}

impl HorizonWindows {
    pub fn new(m3: DayWindow, m6: DayWindow) -> Result<Self> {
        if m3.overlaps(&m6) {
            return Err(Error::invalid(format!(
                "horizon windows overlap: M3=[{},{}] M6=[{},{}]",
                m3.t_minus, m3.t_plus, m6.t_minus, m6.t_plus
            )));
        }
        Ok(HorizonWindows { m3, m6 })
    }

    pub fn window(&self, horizon: Horizon) -> DayWindow {
        match horizon {
            Horizon::M3 => self.m3,
            Horizon::M6 => self.m6,
        }
    }

    pub fn assign(&self, tau: i64) -> Option<Horizon> {
        assign_horizon(tau, self)
    }
}

impl Default for HorizonWindows {
    /// ±45-day bands around day 90 and day 180, made contiguous.
    fn default() -> Self {
        HorizonWindows {
            m3: DayWindow { t_minus: 46, t_plus: 135 },
            m6: DayWindow { t_minus: 136, t_plus: 225 },
        }
    }
}

/// Per-task discretization margins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margins {
    pub facit: f64,
    pub handgrip: f64,
}

impl Margins {
    pub fn for_task(&self, task: Task) -> f64 {
        match task {
            Task::Facit => self.facit,
            Task::Handgrip => self.handgrip,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for task in Task::ALL {
            let r = self.for_task(task);
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::invalid(format!("margin for {task} must be positive, got {r}")));
            }
        }
        Ok(())
    }
}

impl Default for Margins {
    fn default() -> Self {
        Margins {
            facit: 5.0,
            handgrip: 2.0,
        }
    }
}

/// A single dated feature vector from one modality for one patient.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRow {
    pub patient: PatientId,
    pub modality: Modality,
    pub date: NaiveDate,
    pub features: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointLabel {
    pub patient: PatientId,
    pub task: Task,
    pub horizon: Horizon,
    pub delta: f64,
    pub class: DeltaClass,
}

/// Signed whole days from baseline.
pub fn days_from_baseline(date: NaiveDate, baseline: NaiveDate) -> i64 {
    date.signed_duration_since(baseline).num_days()
}

pub fn compute_delta(y_horizon: f64, y_baseline: f64) -> Result<f64> {
    if !y_horizon.is_finite() || !y_baseline.is_finite() {
        return Err(Error::invalid(format!(
            "non-finite endpoint value (follow-up {y_horizon}, baseline {y_baseline})"
        )));
    }
    Ok(y_horizon - y_baseline)
}

/// Boundaries belong to the outer classes: `delta <= -r` is worsened and
/// `delta >= r` is improved.
pub fn discretize_delta(delta: f64, margin: f64) -> Result<DeltaClass> {
    if !(margin > 0.0) || !margin.is_finite() {
        return Err(Error::invalid(format!("margin must be positive, got {margin}")));
    }
    if delta.is_nan() {
        return Err(Error::invalid("delta is NaN"));
    }
    Ok(if delta <= -margin {
        DeltaClass::Worsened
    } else if delta >= margin {
        DeltaClass::Improved
    } else {
        DeltaClass::Stable
    })
}

pub fn assign_horizon(tau: i64, windows: &HorizonWindows) -> Option<Horizon> {
    if windows.m3.contains(tau) {
        Some(Horizon::M3)
    } else if windows.m6.contains(tau) {
        Some(Horizon::M6)
    } else {
        None
    }
}

/// Parses an ISO-8601 calendar date (`YYYY-MM-DD`).
pub fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok()
}
