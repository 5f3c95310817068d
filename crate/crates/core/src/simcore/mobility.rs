use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::EnvConfig;
use crate::error::{Error, Result};

const EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, o: Point) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }
}

/// Axis-aligned direction of travel along a corridor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Heading {
    East,
    North,
    West,
    South,
}

impl Heading {
    pub fn unit(self) -> (f64, f64) {
        match self {
            Heading::East => (1.0, 0.0),
            Heading::North => (0.0, 1.0),
            Heading::West => (-1.0, 0.0),
            Heading::South => (0.0, -1.0),
        }
    }

    /// Rotated by +90°.
    pub fn left(self) -> Self {
        match self {
            Heading::East => Heading::North,
            Heading::North => Heading::West,
            Heading::West => Heading::South,
            Heading::South => Heading::East,
        }
    }

    pub fn right(self) -> Self {
        self.left().left().left()
    }

    pub fn reverse(self) -> Self {
        self.left().left()
    }

    fn horizontal(self) -> bool {
        matches!(self, Heading::East | Heading::West)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Turn {
    Straight,
    Left,
    Right,
}

/// Draws an intersection branch with the configured probabilities.
pub fn draw_turn(cfg: &EnvConfig, rng: &mut impl Rng) -> Turn {
    let u: f64 = rng.random();
    if u < cfg.turn_probs.straight {
        Turn::Straight
    } else if u < cfg.turn_probs.straight + cfg.turn_probs.left {
        Turn::Left
    } else {
        Turn::Right
    }
}

pub fn apply_turn(h: Heading, t: Turn) -> Heading {
    match t {
        Turn::Straight => h,
        Turn::Left => h.left(),
        Turn::Right => h.right(),
    }
}

/// Rectangular corridor grid with nodes at multiples of the spacing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorridorGrid {
    pub spacing: f64,
    pub nx: usize,
    pub ny: usize,
}

impl CorridorGrid {
    pub fn new(cfg: &EnvConfig) -> Self {
        let s = cfg.corridor_spacing_m;
        let nx = (cfg.area_m[0] / s + EPS).floor() as usize;
        let ny = (cfg.area_m[1] / s + EPS).floor() as usize;
        Self { spacing: s, nx, ny }
    }

    pub fn width(&self) -> f64 {
        self.nx as f64 * self.spacing
    }

    pub fn height(&self) -> f64 {
        self.ny as f64 * self.spacing
    }

    fn on_line(&self, c: f64) -> bool {
        let k = (c / self.spacing).round();
        (c - k * self.spacing).abs() < EPS * self.spacing.max(1.0)
    }

    /// Whether `p` lies on some corridor.
    pub fn contains(&self, p: Point) -> bool {
        let inside = p.x >= -EPS && p.x <= self.width() + EPS && p.y >= -EPS && p.y <= self.height() + EPS;
        inside && (self.on_line(p.x) || self.on_line(p.y))
    }

    /// Coordinate of the next node strictly ahead, or `None` when the corridor ends.
    fn next_node(&self, p: Point, h: Heading) -> Option<f64> {
        let s = self.spacing;
        let (c, extent, dir) = match h {
            Heading::East => (p.x, self.width(), 1.0),
            Heading::West => (p.x, self.width(), -1.0),
            Heading::North => (p.y, self.height(), 1.0),
            Heading::South => (p.y, self.height(), -1.0),
        };
        let next = if dir > 0.0 { ((c / s + EPS).floor() + 1.0) * s } else { ((c / s - EPS).ceil() - 1.0) * s };
        (next >= -EPS && next <= extent + EPS).then_some(next)
    }
}

/// Positions, headings and speeds of all subnetworks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MobilityState {
    pub positions: Vec<Point>,
    pub headings: Vec<Heading>,
    pub speeds: Vec<f64>,
}

impl MobilityState {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Smallest pairwise distance (infinite for fewer than two subnetworks).
    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                best = best.min(self.positions[i].distance(self.positions[j]));
            }
        }
        best
    }
}

/// Uniform placement on the corridors, rejection-sampled for separation.
pub fn place(cfg: &EnvConfig, rng: &mut impl Rng) -> Result<MobilityState> {
    let grid = CorridorGrid::new(cfg);
    let (w, h) = (grid.width(), grid.height());
    let vertical_total = (grid.nx + 1) as f64 * h;
    let total = vertical_total + (grid.ny + 1) as f64 * w;
    let n = cfg.n_subnetworks;
    let mut positions: Vec<Point> = Vec::with_capacity(n);
    let mut headings = Vec::with_capacity(n);
    for _ in 0..n {
        let mut placed = false;
        for _ in 0..cfg.placement_attempts {
            let u = rng.random_range(0.0..total);
            let flip: bool = rng.random();
            let (p, hd) = if u < vertical_total {
                let line = ((u / h) as usize).min(grid.nx);
                let p = Point::new(line as f64 * grid.spacing, u - line as f64 * h);
                (p, if flip { Heading::North } else { Heading::South })
            } else {
                let v = u - vertical_total;
                let line = ((v / w) as usize).min(grid.ny);
                let p = Point::new(v - line as f64 * w, line as f64 * grid.spacing);
                (p, if flip { Heading::East } else { Heading::West })
            };
            if positions.iter().all(|q| q.distance(p) >= cfg.min_separation_m) {
                positions.push(p);
                headings.push(hd);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::PlacementFailed {
                placed: positions.len(),
                wanted: n,
                min_sep: cfg.min_separation_m,
                attempts: cfg.placement_attempts,
            });
        }
    }
    let [lo, hi] = cfg.speed_range_mps;
    let speeds = (0..n).map(|_| if hi > lo { rng.random_range(lo..=hi) } else { lo }).collect();
    Ok(MobilityState { positions, headings, speeds })
}

/// Advances every subnetwork by one TTI.
///
/// Subnetworks move in index order; a move that would bring one closer than
/// the minimum separation to any other is cancelled for this TTI.
pub fn step_mobility(state: &MobilityState, cfg: &EnvConfig, rng: &mut impl Rng) -> MobilityState {
    let grid = CorridorGrid::new(cfg);
    let mut next = state.clone();
    let dt = cfg.tti_s();
    for i in 0..state.len() {
        let (p, h) = advance(&grid, state.positions[i], state.headings[i], state.speeds[i] * dt, cfg, rng);
        let clear = (0..state.len()).filter(|&j| j != i).all(|j| p.distance(next.positions[j]) >= cfg.min_separation_m);
        if clear {
            next.positions[i] = p;
            next.headings[i] = h;
        }
    }
    next
}

fn advance(grid: &CorridorGrid, mut p: Point, mut h: Heading, mut remaining: f64, cfg: &EnvConfig, rng: &mut impl Rng) -> (Point, Heading) {
    // Bounded so a zero-length grid can never spin.
    for _ in 0..64 {
        let node = match grid.next_node(p, h) {
            Some(c) => c,
            None => {
                h = h.reverse();
                match grid.next_node(p, h) {
                    Some(c) => c,
                    None => return (p, h),
                }
            }
        };
        let cur = if h.horizontal() { p.x } else { p.y };
        let dist = (node - cur).abs();
        if remaining < dist - EPS {
            let (ux, uy) = h.unit();
            p = Point::new(p.x + ux * remaining, p.y + uy * remaining);
            return (p, h);
        }
        if h.horizontal() {
            p.x = node;
        } else {
            p.y = node;
        }
        remaining = (remaining - dist).max(0.0);
        let turned = apply_turn(h, draw_turn(cfg, rng));
        h = if grid.next_node(p, turned).is_some() { turned } else { h.reverse() };
        if remaining <= 0.0 {
            break;
        }
    }
    (p, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(p: Point, h: Heading, speed: f64) -> MobilityState {
        MobilityState { positions: vec![p], headings: vec![h], speeds: vec![speed] }
    }

    #[test]
    fn mid_corridor_kinematics() {
        let cfg = EnvConfig::full_scale(1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = single(Point::new(13.0, 20.0), Heading::East, 2.5);
        let n = step_mobility(&s, &cfg, &mut rng);
        assert!((n.positions[0].x - 13.0025).abs() < 1e-12);
        assert_eq!(n.positions[0].y, 20.0);
        assert_eq!(n.headings[0], Heading::East);
    }

    #[test]
    fn turn_rotation() {
        assert_eq!(apply_turn(Heading::East, Turn::Left), Heading::North);
        assert_eq!(apply_turn(Heading::North, Turn::Right), Heading::East);
        assert_eq!(apply_turn(Heading::South, Turn::Straight), Heading::South);
    }

    #[test]
    fn crossing_an_intersection_changes_to_a_valid_heading() {
        let cfg = EnvConfig::full_scale(1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = single(Point::new(19.999, 20.0), Heading::East, 2.5);
        let n = step_mobility(&s, &cfg, &mut rng);
        let p = n.positions[0];
        assert!(CorridorGrid::new(&cfg).contains(p));
        let moved = (p.x - 20.0).abs() + (p.y - 20.0).abs();
        assert!((moved - 0.0015).abs() < 1e-9, "{p:?}");
    }

    #[test]
    fn boundary_turns_back() {
        let cfg = EnvConfig::full_scale(1, 1);
        let grid = CorridorGrid::new(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = single(Point::new(grid.width(), 30.0), Heading::East, 2.5);
        let n = step_mobility(&s, &cfg, &mut rng);
        assert_eq!(n.headings[0], Heading::West);
        assert!(n.positions[0].x < grid.width());
    }

    #[test]
    fn placement_fails_when_too_dense() {
        let mut cfg = EnvConfig::desk(50, 3);
        cfg.placement_attempts = 50;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(place(&cfg, &mut rng), Err(Error::PlacementFailed { .. })));
    }

    #[test]
    fn halted_mover_keeps_separation() {
        let cfg = EnvConfig::full_scale(2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = MobilityState {
            positions: vec![Point::new(13.0, 20.0), Point::new(14.5, 20.0)],
            headings: vec![Heading::East, Heading::West],
            speeds: vec![2.5, 2.5],
        };
        let n = step_mobility(&s, &cfg, &mut rng);
        assert_eq!(n.positions, s.positions);
    }
}
