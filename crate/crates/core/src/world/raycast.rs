//! Exact grid ray marching (Amanatides–Woo) over axis-aligned cells.

use super::{Cell, CellIndex, World};

/// Crossings closer than this (in cell units) are treated as passing exactly
/// through a grid vertex.
const VERTEX_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    /// Distance travelled in meters, capped at the query limit.
    pub distance: f64,
    /// First blocking cell, `None` when the limit was reached first.
    pub cell: Option<CellIndex>,
    /// Last non-blocking cell traversed before the hit (or the limit).
    pub last_free: CellIndex,
}

impl World {
    /// Marches from `(x, y)` along `angle` until a cell satisfying `blocks`
    /// is entered or `limit` meters are covered. A ray grazing a vertex
    /// shared with a blocking cell counts as a hit.
    pub(crate) fn march(
        &self,
        x: f64,
        y: f64,
        angle: f64,
        limit: f64,
        blocks: impl Fn(Cell) -> bool,
    ) -> RayHit {
        let cs = self.cell_size;
        let (ox, oy) = (x / cs, y / cs);
        let (dx, dy) = (angle.cos(), angle.sin());
        let mut cx = ox.floor() as i64;
        let mut cy = oy.floor() as i64;
        let limit_cells = limit / cs;

        let (step_x, mut t_max_x, t_delta_x) = axis_setup(ox, dx, cx);
        let (step_y, mut t_max_y, t_delta_y) = axis_setup(oy, dy, cy);

        let blocked = |cx: i64, cy: i64| -> bool {
            if cx < 0 || cy < 0 || cy as usize >= self.rows() || cx as usize >= self.cols() {
                return true;
            }
            blocks(self.cell((cy as usize, cx as usize)))
        };
        let mut last_free = (cy as usize, cx as usize);

        loop {
            let t;
            let tie = (t_max_x - t_max_y).abs() <= VERTEX_EPS;
            if tie {
                t = t_max_x.min(t_max_y);
                if t > limit_cells {
                    break;
                }
                // passing through a vertex: both side cells and the diagonal
                for (hx, hy) in [
                    (cx + step_x, cy),
                    (cx, cy + step_y),
                    (cx + step_x, cy + step_y),
                ] {
                    if blocked(hx, hy) {
                        return RayHit {
                            distance: t * cs,
                            cell: Some((hy.max(0) as usize, hx.max(0) as usize)),
                            last_free,
                        };
                    }
                }
                cx += step_x;
                cy += step_y;
                t_max_x += t_delta_x;
                t_max_y += t_delta_y;
            } else if t_max_x < t_max_y {
                t = t_max_x;
                if t > limit_cells {
                    break;
                }
                cx += step_x;
                t_max_x += t_delta_x;
                if blocked(cx, cy) {
                    return RayHit {
                        distance: t * cs,
                        cell: Some((cy.max(0) as usize, cx.max(0) as usize)),
                        last_free,
                    };
                }
            } else {
                t = t_max_y;
                if t > limit_cells {
                    break;
                }
                cy += step_y;
                t_max_y += t_delta_y;
                if blocked(cx, cy) {
                    return RayHit {
                        distance: t * cs,
                        cell: Some((cy.max(0) as usize, cx.max(0) as usize)),
                        last_free,
                    };
                }
            }
            last_free = (cy as usize, cx as usize);
        }
        RayHit {
            distance: limit,
            cell: None,
            last_free,
        }
    }
}

fn axis_setup(origin: f64, dir: f64, cell: i64) -> (i64, f64, f64) {
    if dir > 0.0 {
        (1, (cell as f64 + 1.0 - origin) / dir, 1.0 / dir)
    } else if dir < 0.0 {
        (-1, (cell as f64 - origin) / dir, -1.0 / dir)
    } else {
        (0, f64::INFINITY, f64::INFINITY)
    }
}
