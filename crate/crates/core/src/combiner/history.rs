//! Absolute-error records of the ensemble members, kept per horizon channel.

use std::collections::{BTreeMap, HashSet};

use crate::error::{Error, Result};

/// Member losses for one origin on one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct LossRecord {
    pub origin: usize,
    pub losses: Vec<f64>,
}

/// Records for `H` horizon channels plus one complete-horizon channel.
///
/// Channel `h - 1` holds the errors at horizon `h`. Channel `H` receives an
/// origin's horizon-averaged errors once all `H` horizons of that origin
/// have been recorded.
#[derive(Debug, Clone)]
pub struct LossHistory {
    members: usize,
    horizon: usize,
    channels: Vec<Vec<LossRecord>>,
    seen: HashSet<(usize, usize)>,
    partial: BTreeMap<usize, (usize, Vec<f64>)>,
}

impl LossHistory {
    pub fn new(members: usize, horizon: usize) -> Self {
        Self {
            members,
            horizon,
            channels: vec![Vec::new(); horizon + 1],
            seen: HashSet::new(),
            partial: BTreeMap::new(),
        }
    }

    pub fn members(&self) -> usize {
        self.members
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Index of the complete-horizon channel.
    pub fn complete_channel(&self) -> usize {
        self.horizon
    }

    pub fn records(&self, channel: usize) -> &[LossRecord] {
        &self.channels[channel]
    }

    pub fn is_observed(&self, origin: usize, h: usize) -> bool {
        self.seen.contains(&(origin, h))
    }

    /// Stores the errors of every member at `(origin, h)`, `h` in `1..=H`.
    /// Returns the horizon-averaged errors when this completes the origin.
    pub fn record(&mut self, origin: usize, h: usize, losses: &[f64]) -> Result<Option<Vec<f64>>> {
        if h == 0 || h > self.horizon {
            return Err(Error::Integrity(format!("horizon {h} outside 1..={}", self.horizon)));
        }
        if losses.len() != self.members {
            return Err(Error::shape(format!("{} member losses", self.members), losses.len()));
        }
        if losses.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(Error::Numeric(format!("invalid loss at origin {origin}, horizon {h}")));
        }
        if !self.seen.insert((origin, h)) {
            return Err(Error::Integrity(format!(
                "duplicate feedback for origin {origin}, horizon {h}"
            )));
        }
        self.channels[h - 1].push(LossRecord {
            origin,
            losses: losses.to_vec(),
        });
        let entry = self
            .partial
            .entry(origin)
            .or_insert_with(|| (0, vec![0.0; losses.len()]));
        entry.0 += 1;
        entry.1.iter_mut().zip(losses).for_each(|(s, l)| *s += l);
        if entry.0 < self.horizon {
            return Ok(None);
        }
        let (_, sums) = self.partial.remove(&origin).unwrap();
        let avg: Vec<f64> = sums.iter().map(|s| s / self.horizon as f64).collect();
        self.channels[self.horizon].push(LossRecord {
            origin,
            losses: avg.clone(),
        });
        Ok(Some(avg))
    }

    /// Per-member MAE over the most recent `min(lambda, available)` records
    /// of a channel; `None` when the channel is empty.
    pub fn window_mae(&self, channel: usize, lambda: usize) -> Option<Vec<f64>> {
        let recs = &self.channels[channel];
        if recs.is_empty() || lambda == 0 {
            return None;
        }
        let tail = &recs[recs.len().saturating_sub(lambda)..];
        let mut mae = vec![0.0; self.members];
        for r in tail {
            mae.iter_mut().zip(&r.losses).for_each(|(m, l)| *m += l);
        }
        mae.iter_mut().for_each(|m| *m /= tail.len() as f64);
        Some(mae)
    }
}
