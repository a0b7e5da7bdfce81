use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_WATTS: f64 = 200.0;

/// Watt-hours for `wall_seconds` of compute at a constant `watts` rating.
pub fn energy_of(wall_seconds: f64, watts: f64) -> Result<f64> {
    if !(wall_seconds >= 0.0) || !(watts >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "energy_of needs non-negative inputs, got {wall_seconds} s at {watts} W"
        )));
    }
    Ok(wall_seconds * watts / 3600.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyEvent {
    Train,
    Infer,
    DriftCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyEntry {
    pub event: EnergyEvent,
    pub wall_seconds: f64,
    pub watts: f64,
    pub wh: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub entries: Vec<EnergyEntry>,
}

impl EnergyLedger {
    pub fn record(&mut self, event: EnergyEvent, wall_seconds: f64, watts: f64) -> Result<EnergyEntry> {
        let entry = EnergyEntry {
            event,
            wall_seconds,
            watts,
            wh: energy_of(wall_seconds, watts)?,
        };
        self.entries.push(entry);
        Ok(entry)
    }

    /// Sum in insertion order.
    pub fn total(&self, event: EnergyEvent) -> f64 {
        self.entries.iter().filter(|e| e.event == event).map(|e| e.wh).sum()
    }

    pub fn total_all(&self) -> f64 {
        self.entries.iter().map(|e| e.wh).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions() {
        assert!((energy_of(60.0, 200.0).unwrap() - 3.3333).abs() < 1e-4);
        assert_eq!(energy_of(0.0, 200.0).unwrap(), 0.0);
        assert_eq!(energy_of(3600.0, 200.0).unwrap(), 200.0);
        assert!(energy_of(-1.0, 200.0).is_err());
        assert!(energy_of(1.0, -200.0).is_err());
    }

    #[test]
    fn ledger_totals_are_sums() {
        let mut l = EnergyLedger::default();
        for (i, ev) in [EnergyEvent::Train, EnergyEvent::Infer, EnergyEvent::Train, EnergyEvent::DriftCheck]
            .into_iter()
            .enumerate()
        {
            let e = l.record(ev, 0.1 * (i + 1) as f64, 200.0).unwrap();
            assert_eq!(e.wh, e.wall_seconds * e.watts / 3600.0);
        }
        let by_kind = l.total(EnergyEvent::Train) + l.total(EnergyEvent::Infer) + l.total(EnergyEvent::DriftCheck);
        assert!((by_kind - l.total_all()).abs() < 1e-15);
        assert_eq!(l.total(EnergyEvent::Train), l.entries[0].wh + l.entries[2].wh);
    }
}
