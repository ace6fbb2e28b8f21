//! Discrete heading-sector action space.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::world::normalize_angle;

pub type ActionId = usize;

/// Heading sectors evenly partitioning the full turn, plus an optional STAY.
///
/// With `centered` set, sector `i` spans `[i·w − w/2, i·w + w/2)` so its
/// bisector is the heading `i·w`; otherwise it spans `[i·w, (i+1)·w)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpace {
    pub sector_count: usize,
    pub include_stay: bool,
    #[serde(default = "default_centered")]
    pub centered: bool,
}

fn default_centered() -> bool {
    true
}

impl Default for ActionSpace {
    fn default() -> Self {
        Self {
            sector_count: 8,
            include_stay: true,
            centered: true,
        }
    }
}

impl ActionSpace {
    pub fn new(sector_count: usize, include_stay: bool) -> Result<Self> {
        if sector_count == 0 {
            return Err(NavError::Config("sector_count must be at least 1".into()));
        }
        Ok(Self {
            sector_count,
            include_stay,
            centered: true,
        })
    }

    pub fn action_count(&self) -> usize {
        self.sector_count + usize::from(self.include_stay)
    }

    pub fn stay(&self) -> Option<ActionId> {
        self.include_stay.then_some(self.sector_count)
    }

    pub fn is_stay(&self, a: ActionId) -> bool {
        self.stay() == Some(a)
    }

    pub fn sector_width(&self) -> f64 {
        TAU / self.sector_count as f64
    }

    /// `[start, end)` of the sector in radians; `start` may be negative.
    pub fn sector_bounds(&self, a: ActionId) -> (f64, f64) {
        let w = self.sector_width();
        let start = if self.centered {
            a as f64 * w - w / 2.0
        } else {
            a as f64 * w
        };
        (start, start + w)
    }

    pub fn bisector(&self, a: ActionId) -> f64 {
        let (s, e) = self.sector_bounds(a);
        normalize_angle((s + e) / 2.0)
    }

    /// Sector containing a heading.
    pub fn sector_of(&self, angle: f64) -> ActionId {
        let w = self.sector_width();
        let shifted = if self.centered {
            normalize_angle(angle + w / 2.0)
        } else {
            normalize_angle(angle)
        };
        ((shifted / w).floor() as usize).min(self.sector_count - 1)
    }

    /// Heading sector pointing the other way; STAY maps to itself.
    pub fn opposite(&self, a: ActionId) -> ActionId {
        if self.is_stay(a) {
            return a;
        }
        let target = normalize_angle(self.bisector(a) + TAU / 2.0);
        self.sector_of(target)
    }

    pub fn sectors(&self) -> impl Iterator<Item = ActionId> {
        0..self.sector_count
    }
}
