//! Shared gridworld pieces for Harvest and Cleanup.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_SIDE: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridConfig {
    pub width: usize,
    pub height: usize,
}

impl GridConfig {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        let g = Self { width, height };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < MIN_SIDE || self.height < MIN_SIDE {
            return Err(Error::InvalidParameter(format!(
                "grid must be at least {MIN_SIDE}x{MIN_SIDE}, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.width, idx / self.width)
    }

    /// Cells within Euclidean distance `radius` of `(x, y)`, centre included.
    pub fn disc(&self, x: usize, y: usize, radius: f64) -> impl Iterator<Item = usize> + '_ {
        let r = radius.floor() as i64;
        let r2 = radius * radius;
        let (cx, cy) = (x as i64, y as i64);
        (-r..=r).flat_map(move |dy| {
            (-r..=r).filter_map(move |dx| {
                let (nx, ny) = (cx + dx, cy + dy);
                let inside = nx >= 0 && ny >= 0 && (nx as usize) < self.width && (ny as usize) < self.height;
                (inside && ((dx * dx + dy * dy) as f64) <= r2).then(|| self.index(nx as usize, ny as usize))
            })
        })
    }
}

/// Facing direction, clockwise from north (decreasing y).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dir {
    North,
    East,
    South,
    West,
}

impl Dir {
    pub const ALL: [Dir; 4] = [Dir::North, Dir::East, Dir::South, Dir::West];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn delta(self) -> (i64, i64) {
        match self {
            Dir::North => (0, -1),
            Dir::East => (1, 0),
            Dir::South => (0, 1),
            Dir::West => (-1, 0),
        }
    }

    pub fn left(self) -> Dir {
        Dir::ALL[(self.index() + 3) % 4]
    }

    pub fn right(self) -> Dir {
        Dir::ALL[(self.index() + 1) % 4]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Avatar {
    pub x: usize,
    pub y: usize,
    pub dir: Dir,
}

/// Movement actions shared by both gridworlds. Moves are absolute.
pub const MOVE_LABELS: [&str; 7] = ["up", "right", "down", "left", "turn_left", "turn_right", "stay"];
pub const STAY: usize = 6;

/// Cell one step away from `a` in direction `d`, if on the grid.
pub fn neighbor(grid: &GridConfig, x: usize, y: usize, d: Dir) -> Option<(usize, usize)> {
    let (dx, dy) = d.delta();
    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
    (nx >= 0 && ny >= 0 && (nx as usize) < grid.width && (ny as usize) < grid.height).then(|| (nx as usize, ny as usize))
}

/// Apply movement actions in a priority order that rotates with `t`.
///
/// Agents move one at a time; a move into an occupied cell or off the grid
/// leaves the agent in place. Non-movement choices (index > 5) are no-ops here.
pub fn resolve_moves(grid: &GridConfig, avatars: &[Avatar], choices: &[usize], t: usize) -> Vec<Avatar> {
    let n = avatars.len();
    let mut out = avatars.to_vec();
    for k in 0..n {
        let i = (t + k) % n;
        match choices[i] {
            m @ 0..=3 => {
                let d = Dir::ALL[m];
                out[i].dir = d;
                if let Some((nx, ny)) = neighbor(grid, out[i].x, out[i].y, d) {
                    if !out.iter().any(|o| o.x == nx && o.y == ny) {
                        out[i].x = nx;
                        out[i].y = ny;
                    }
                }
            }
            4 => out[i].dir = out[i].dir.left(),
            5 => out[i].dir = out[i].dir.right(),
            _ => {}
        }
    }
    out
}

/// `(dx, dy)` to the nearest flagged cell by Euclidean distance; ties go to
/// the lowest cell index.
pub fn nearest(grid: &GridConfig, x: usize, y: usize, flags: &[bool]) -> Option<(i64, i64)> {
    let mut best: Option<(i64, (i64, i64))> = None;
    for (idx, _) in flags.iter().enumerate().filter(|(_, &f)| f) {
        let (cx, cy) = grid.coords(idx);
        let (dx, dy) = (cx as i64 - x as i64, cy as i64 - y as i64);
        let d2 = dx * dx + dy * dy;
        if best.is_none_or(|(b, _)| d2 < b) {
            best = Some((d2, (dx, dy)));
        }
    }
    best.map(|(_, d)| d)
}

/// Features of the closest other agent: relative position and orientation.
pub fn closest_agent_features(grid: &GridConfig, avatars: &[Avatar], agent: usize) -> [f64; 6] {
    let me = avatars[agent];
    let mut best: Option<(i64, usize)> = None;
    for (j, o) in avatars.iter().enumerate().filter(|(j, _)| *j != agent) {
        let (dx, dy) = (o.x as i64 - me.x as i64, o.y as i64 - me.y as i64);
        let d2 = dx * dx + dy * dy;
        if best.is_none_or(|(b, _)| d2 < b) {
            best = Some((d2, j));
        }
    }
    let mut f = [0.0; 6];
    if let Some((_, j)) = best {
        let o = avatars[j];
        f[0] = (o.x as f64 - me.x as f64) / grid.width as f64;
        f[1] = (o.y as f64 - me.y as f64) / grid.height as f64;
        f[2 + o.dir.index()] = 1.0;
    }
    f
}

pub fn own_features(grid: &GridConfig, me: Avatar) -> [f64; 6] {
    let mut f = [0.0; 6];
    f[0] = me.x as f64 / grid.width as f64;
    f[1] = me.y as f64 / grid.height as f64;
    f[2 + me.dir.index()] = 1.0;
    f
}

/// `[dx, dy, present]` toward the nearest flagged cell.
pub fn nearest_features(grid: &GridConfig, me: Avatar, flags: &[bool]) -> [f64; 3] {
    match nearest(grid, me.x, me.y, flags) {
        Some((dx, dy)) => [dx as f64 / grid.width as f64, dy as f64 / grid.height as f64, 1.0],
        None => [0.0, 0.0, 0.0],
    }
}

/// Deterministic spawn cells: corners and edge midpoints first, then any
/// free cell in row-major order.
pub fn spawn_points(grid: &GridConfig, n: usize, blocked: &dyn Fn(usize, usize) -> bool) -> Result<Vec<(usize, usize)>> {
    let (w, h) = (grid.width - 1, grid.height - 1);
    let preferred = [(0, 0), (w, h), (w, 0), (0, h), (w / 2, 0), (w / 2, h), (0, h / 2), (w, h / 2)];
    let mut out: Vec<(usize, usize)> = Vec::with_capacity(n);
    let candidates = preferred.into_iter().chain((0..grid.cells()).map(|i| grid.coords(i)));
    for c in candidates {
        if out.len() == n {
            break;
        }
        if !blocked(c.0, c.1) && !out.contains(&c) {
            out.push(c);
        }
    }
    if out.len() < n {
        return Err(Error::InvalidParameter(format!("grid too small for {n} agents")));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disc_radius_two() {
        let g = GridConfig::new(15, 15).unwrap();
        assert_eq!(g.disc(7, 7, 2.0).count(), 13);
        assert_eq!(g.disc(0, 0, 2.0).count(), 6);
        assert_eq!(g.disc(7, 7, 5.0).count(), 81);
    }

    #[test]
    fn small_grid_rejected() {
        assert!(GridConfig::new(4, 9).is_err());
        assert!(GridConfig::new(5, 5).is_ok());
    }

    #[test]
    fn conflicting_moves_leave_one_winner() {
        let g = GridConfig::new(5, 5).unwrap();
        let av = [Avatar { x: 1, y: 2, dir: Dir::North }, Avatar { x: 3, y: 2, dir: Dir::North }];
        // Both head for (2, 2).
        let even = resolve_moves(&g, &av, &[1, 3], 0);
        assert_eq!((even[0].x, even[1].x), (2, 3));
        let odd = resolve_moves(&g, &av, &[1, 3], 1);
        assert_eq!((odd[0].x, odd[1].x), (1, 2));
    }

    #[test]
    fn walls_block() {
        let g = GridConfig::new(5, 5).unwrap();
        let av = [Avatar { x: 0, y: 0, dir: Dir::East }];
        let out = resolve_moves(&g, &av, &[0], 0);
        assert_eq!((out[0].x, out[0].y, out[0].dir), (0, 0, Dir::North));
        let out = resolve_moves(&g, &av, &[4], 0);
        assert_eq!(out[0].dir, Dir::North);
        let out = resolve_moves(&g, &av, &[5], 0);
        assert_eq!(out[0].dir, Dir::South);
    }
}
