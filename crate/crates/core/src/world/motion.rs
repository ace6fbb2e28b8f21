//! Atomic straight-line motion with collision failure and odometry drift.

use serde::{Deserialize, Serialize};

use super::{Cell, CellIndex, Pose, World};
use crate::error::Result;

/// Accumulated odometry bias. Drift only ever touches the reported
/// odometry, never the ground-truth pose.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Odometry {
    pub dx: f64,
    pub dy: f64,
    pub dyaw: f64,
}

impl Odometry {
    pub fn apply(&self, true_pose: &Pose) -> Pose {
        Pose::new(
            true_pose.x + self.dx,
            true_pose.y + self.dy,
            true_pose.yaw + self.dyaw,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionResult {
    pub succeeded: bool,
    pub true_pose: Pose,
    pub odometry_pose: Pose,
    pub blocked_at: Option<CellIndex>,
}

impl World {
    /// First cell blocking motion on the segment `from → to`, if any.
    pub fn first_blocking_cell(&self, from: &Pose, to: &Pose) -> Option<CellIndex> {
        let len = from.distance(to);
        if len == 0.0 {
            return None;
        }
        let angle = (to.y - from.y).atan2(to.x - from.x);
        self.march(from.x, from.y, angle, len, Cell::blocks_motion)
            .cell
    }

    /// Whether the straight segment between two points crosses no blocking
    /// cell (LiDAR semantics when `lidar` is set, motion semantics otherwise).
    pub fn segment_clear(&self, from: &Pose, to: &Pose, lidar: bool) -> bool {
        let len = from.distance(to);
        if len == 0.0 {
            return true;
        }
        let angle = (to.y - from.y).atan2(to.x - from.x);
        let hit = if lidar {
            self.march(from.x, from.y, angle, len, Cell::blocks_lidar)
        } else {
            self.march(from.x, from.y, angle, len, Cell::blocks_motion)
        };
        hit.cell.is_none()
    }

    /// Moves in a straight line from `from` to `target`. The motion either
    /// completes or leaves the pose untouched.
    pub fn execute_motion(
        &self,
        from: &Pose,
        target: &Pose,
        odometry: &mut Odometry,
    ) -> Result<MotionResult> {
        if !self.is_free_at(from) {
            return Err(crate::error::NavError::PoseInWall {
                x: from.x,
                y: from.y,
            });
        }
        let blocked = self.first_blocking_cell(from, target).or_else(|| {
            (!self.is_free_at(target))
                .then(|| self.cell_at(target.x, target.y))
                .flatten()
        });
        if blocked.is_some() {
            return Ok(MotionResult {
                succeeded: false,
                true_pose: *from,
                odometry_pose: odometry.apply(from),
                blocked_at: blocked,
            });
        }
        odometry.dx += self.drift.dx;
        odometry.dy += self.drift.dy;
        odometry.dyaw += self.drift.dyaw;
        Ok(MotionResult {
            succeeded: true,
            true_pose: *target,
            odometry_pose: odometry.apply(target),
            blocked_at: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Drift, WorldDescription};

    fn world(grid: &[&str], drift: Drift) -> World {
        World::from_description(&WorldDescription {
            cell_size: 1.0,
            grid: grid.iter().map(|s| s.to_string()).collect(),
            obstacle_events: vec![],
            drift,
            start: None,
        })
        .unwrap()
    }

    #[test]
    fn same_cell_target_succeeds() {
        let w = world(&["####", "#..#", "####"], Drift::default());
        let mut odo = Odometry::default();
        let from = Pose::new(1.5, 1.5, 0.0);
        let r = w
            .execute_motion(&from, &Pose::new(1.6, 1.4, 0.0), &mut odo)
            .unwrap();
        assert!(r.succeeded);
        let r = w.execute_motion(&from, &from, &mut odo).unwrap();
        assert!(r.succeeded);
        assert_eq!(r.true_pose, from);
    }

    #[test]
    fn wall_on_segment_blocks_atomically() {
        let w = world(&["######", "#..#.#", "######"], Drift::default());
        let mut odo = Odometry::default();
        let from = Pose::new(1.5, 1.5, 0.0);
        let r = w
            .execute_motion(&from, &Pose::new(4.5, 1.5, 0.0), &mut odo)
            .unwrap();
        assert!(!r.succeeded);
        assert_eq!(r.true_pose, from);
        assert_eq!(r.blocked_at, Some((1, 3)));
    }

    #[test]
    fn hidden_obstacle_blocks_motion_not_lidar() {
        let w = world(&["######", "#..!.#", "######"], Drift::default());
        let mut odo = Odometry::default();
        let from = Pose::new(1.5, 1.5, 0.0);
        let r = w
            .execute_motion(&from, &Pose::new(4.5, 1.5, 0.0), &mut odo)
            .unwrap();
        assert!(!r.succeeded);
        let scan = w.lidar_scan(&from, 4, 12.0).unwrap();
        assert!((scan.ranges[0] - 3.5).abs() < 1e-12);
    }

    #[test]
    fn drift_accumulates_linearly_on_success() {
        let w = world(
            &["#############", "#...........#", "#############"],
            Drift {
                dx: 0.05,
                dy: 0.0,
                dyaw: 0.0,
            },
        );
        let mut odo = Odometry::default();
        let mut pose = Pose::new(1.5, 1.5, 0.0);
        let mut last = None;
        for _ in 0..10 {
            let target = Pose::new(pose.x + 1.0, pose.y, 0.0);
            let r = w.execute_motion(&pose, &target, &mut odo).unwrap();
            assert!(r.succeeded);
            pose = r.true_pose;
            last = Some(r);
        }
        let r = last.unwrap();
        assert!((r.odometry_pose.x - r.true_pose.x - 0.5).abs() < 1e-12);
        // a failed motion adds no drift
        let r = w
            .execute_motion(&pose, &Pose::new(pose.x + 3.0, pose.y, 0.0), &mut odo)
            .unwrap();
        assert!(!r.succeeded);
        assert!((r.odometry_pose.x - r.true_pose.x - 0.5).abs() < 1e-12);
    }
}
