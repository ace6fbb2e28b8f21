//! Simulated 360° LiDAR and the panoramic observation signature built on it.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::{Cell, Pose, World};
use crate::error::{NavError, Result};

pub const DEFAULT_RAYS: usize = 36;
pub const DEFAULT_MAX_RANGE: f64 = 12.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidarScan {
    /// Distance per ray, ray `i` at `start_angle + 2πi/R`.
    pub ranges: Vec<f64>,
    pub max_range: f64,
    pub start_angle: f64,
}

impl LidarScan {
    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn ray_angle(&self, i: usize) -> f64 {
        super::normalize_angle(self.start_angle + TAU * i as f64 / self.ranges.len() as f64)
    }

    pub fn spacing(&self) -> f64 {
        TAU / self.ranges.len() as f64
    }

    /// Smallest range among the rays nearest to `angle` (one ray when it is
    /// aligned, the two bracketing rays otherwise).
    pub fn range_towards(&self, angle: f64) -> f64 {
        let n = self.ranges.len();
        let rel = super::normalize_angle(angle - self.start_angle) / self.spacing();
        let lo = rel.floor();
        let frac = rel - lo;
        let lo = lo as usize % n;
        if frac < 1e-9 {
            self.ranges[lo]
        } else if frac > 1.0 - 1e-9 {
            self.ranges[(lo + 1) % n]
        } else {
            self.ranges[lo].min(self.ranges[(lo + 1) % n])
        }
    }

    /// Largest range among the rays nearest to `angle`; a direction counts
    /// as blocked only when every nearby ray is.
    pub fn widest_range_towards(&self, angle: f64) -> f64 {
        let n = self.ranges.len();
        let rel = super::normalize_angle(angle - self.start_angle) / self.spacing();
        let lo = rel.floor() as usize % n;
        self.ranges[lo].max(self.ranges[(lo + 1) % n])
    }

    /// Whether ray `i` stopped on an obstacle rather than at max range.
    pub fn is_hit(&self, i: usize) -> bool {
        self.ranges[i] < self.max_range
    }
}

/// Rotation-canonical panorama: ray 0 points along world +x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSignature {
    pub depth: Vec<f64>,
    pub appearance: Vec<u8>,
}

impl ObservationSignature {
    pub fn len(&self) -> usize {
        self.depth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depth.is_empty()
    }

    /// The world-frame scan this signature was built from.
    pub fn to_scan(&self, max_range: f64) -> LidarScan {
        LidarScan {
            ranges: self.depth.iter().map(|d| d * max_range).collect(),
            max_range,
            start_angle: 0.0,
        }
    }
}

impl World {
    fn check_pose(&self, pose: &Pose) -> Result<()> {
        if !self.is_free_at(pose) {
            return Err(NavError::PoseInWall {
                x: pose.x,
                y: pose.y,
            });
        }
        Ok(())
    }

    /// Ray-cast scan with ray `i` at `pose.yaw + 2πi/rays`.
    pub fn lidar_scan(&self, pose: &Pose, rays: usize, max_range: f64) -> Result<LidarScan> {
        self.check_pose(pose)?;
        let ranges = (0..rays)
            .map(|i| {
                let a = pose.yaw + TAU * i as f64 / rays as f64;
                self.march(pose.x, pose.y, a, max_range, Cell::blocks_lidar)
                    .distance
            })
            .collect();
        Ok(LidarScan {
            ranges,
            max_range,
            start_angle: pose.yaw,
        })
    }

    /// World-aligned panorama at `pose`; independent of `pose.yaw`.
    pub fn panorama_signature(
        &self,
        pose: &Pose,
        rays: usize,
        max_range: f64,
    ) -> Result<ObservationSignature> {
        self.check_pose(pose)?;
        let mut depth = Vec::with_capacity(rays);
        let mut appearance = Vec::with_capacity(rays);
        for i in 0..rays {
            let a = TAU * i as f64 / rays as f64;
            let hit = self.march(pose.x, pose.y, a, max_range, Cell::blocks_lidar);
            depth.push(hit.distance / max_range);
            let label = match (hit.cell, self.cell(hit.last_free)) {
                (Some(_), Cell::Free(l)) => l,
                _ => 0,
            };
            appearance.push(label);
        }
        Ok(ObservationSignature { depth, appearance })
    }
}
