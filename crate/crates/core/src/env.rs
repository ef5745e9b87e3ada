//! Workspaces: random static forests, fields of moving obstacles, start/goal
//! sampling and collision checks.

use std::f64::consts::TAU;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::Cost;
use crate::error::{Error, Result};
use crate::rng::{self, Domain};

/// Axis-aligned workspace rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Bounds {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self {
            min: [min_x, min_y],
            max: [max_x, max_y],
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min[0] && x <= self.max[0] && y >= self.min[1] && y <= self.max[1]
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * (self.width() + self.height())
    }

    fn validate(&self) -> Result<()> {
        if !(self.width() > 0.0 && self.height() > 0.0) {
            return Err(Error::Config("workspace bounds must have positive extent".into()));
        }
        Ok(())
    }
}

/// A static obstacle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Shape {
    Circle { center: [f64; 2], radius: f64 },
    /// Convex polygon with counter-clockwise vertices.
    Polygon { vertices: Vec<[f64; 2]> },
}

impl Shape {
    /// Euclidean distance from `p` to the shape; zero inside or on the boundary.
    pub fn distance(&self, p: [f64; 2]) -> f64 {
        match self {
            Shape::Circle { center, radius } => {
                ((p[0] - center[0]).hypot(p[1] - center[1]) - radius).max(0.0)
            }
            Shape::Polygon { vertices } => {
                if point_in_convex(vertices, p) {
                    return 0.0;
                }
                let n = vertices.len();
                (0..n)
                    .map(|i| segment_distance(p, vertices[i], vertices[(i + 1) % n]))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Whether `p` is within `inflation` of the shape (boundary inclusive).
    pub fn contains(&self, p: [f64; 2], inflation: f64) -> bool {
        match self {
            Shape::Circle { center, radius } => {
                let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
                let r = radius + inflation;
                dx * dx + dy * dy <= r * r
            }
            Shape::Polygon { vertices } => {
                point_in_convex(vertices, p) || (inflation > 0.0 && self.distance(p) <= inflation)
            }
        }
    }

    /// Axis-aligned bounding box `[min_x, min_y, max_x, max_y]`.
    pub fn aabb(&self) -> [f64; 4] {
        match self {
            Shape::Circle { center, radius } => [
                center[0] - radius,
                center[1] - radius,
                center[0] + radius,
                center[1] + radius,
            ],
            Shape::Polygon { vertices } => vertices.iter().fold(
                [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY],
                |b, v| [b[0].min(v[0]), b[1].min(v[1]), b[2].max(v[0]), b[3].max(v[1])],
            ),
        }
    }
}

fn point_in_convex(vertices: &[[f64; 2]], p: [f64; 2]) -> bool {
    let n = vertices.len();
    (0..n).all(|i| {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0.0
    })
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (abx, aby) = (b[0] - a[0], b[1] - a[1]);
    let len2 = abx * abx + aby * aby;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * abx + (p[1] - a[1]) * aby) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p[0] - a[0] - t * abx).hypot(p[1] - a[1] - t * aby)
}

/// Static obstacles inside a workspace. Construct through [`StaticMap::new`];
/// a bucket grid over the obstacles is built once for fast point queries.
#[derive(Debug, Clone)]
pub struct StaticMap {
    bounds: Bounds,
    obstacles: Vec<Shape>,
    seed: u64,
    inflation: f64,
    grid: BucketGrid,
}

#[derive(Debug, Clone)]
struct BucketGrid {
    cell: f64,
    nx: usize,
    ny: usize,
    starts: Vec<u32>,
    items: Vec<u32>,
}

impl BucketGrid {
    fn build(bounds: &Bounds, obstacles: &[Shape], inflation: f64) -> Self {
        let cell = 1.0f64.max(bounds.width().max(bounds.height()) / 256.0);
        let nx = (bounds.width() / cell).ceil().max(1.0) as usize;
        let ny = (bounds.height() / cell).ceil().max(1.0) as usize;
        let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); nx * ny];
        for (i, s) in obstacles.iter().enumerate() {
            let b = s.aabb();
            let to_cell = |v: f64, lo: f64, n: usize| -> usize {
                (((v - lo) / cell).floor().max(0.0) as usize).min(n - 1)
            };
            let (x0, x1) = (
                to_cell(b[0] - inflation, bounds.min[0], nx),
                to_cell(b[2] + inflation, bounds.min[0], nx),
            );
            let (y0, y1) = (
                to_cell(b[1] - inflation, bounds.min[1], ny),
                to_cell(b[3] + inflation, bounds.min[1], ny),
            );
            for cy in y0..=y1 {
                for cx in x0..=x1 {
                    buckets[cy * nx + cx].push(i as u32);
                }
            }
        }
        let mut starts = Vec::with_capacity(nx * ny + 1);
        let mut items = Vec::new();
        starts.push(0);
        for b in buckets {
            items.extend(b);
            starts.push(items.len() as u32);
        }
        Self {
            cell,
            nx,
            ny,
            starts,
            items,
        }
    }

    fn bucket(&self, bounds: &Bounds, x: f64, y: f64) -> &[u32] {
        let cx = (((x - bounds.min[0]) / self.cell) as usize).min(self.nx - 1);
        let cy = (((y - bounds.min[1]) / self.cell) as usize).min(self.ny - 1);
        let c = cy * self.nx + cx;
        &self.items[self.starts[c] as usize..self.starts[c + 1] as usize]
    }
}

impl StaticMap {
    /// `inflation` grows every obstacle by the agent radius.
    pub fn new(bounds: Bounds, obstacles: Vec<Shape>, seed: u64, inflation: f64) -> Result<Self> {
        bounds.validate()?;
        if !(inflation >= 0.0 && inflation.is_finite()) {
            return Err(Error::Config("inflation must be finite and >= 0".into()));
        }
        for s in &obstacles {
            let b = s.aabb();
            let ok = match s {
                Shape::Circle { radius, .. } => *radius > 0.0,
                Shape::Polygon { vertices } => vertices.len() >= 3,
            };
            if !ok || b.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("degenerate obstacle".into()));
            }
            if !(bounds.contains(b[0], b[1]) && bounds.contains(b[2], b[3])) {
                return Err(Error::Config("obstacle extends beyond the workspace".into()));
            }
        }
        let grid = BucketGrid::build(&bounds, &obstacles, inflation);
        Ok(Self {
            bounds,
            obstacles,
            seed,
            inflation,
            grid,
        })
    }

    pub fn empty(bounds: Bounds) -> Result<Self> {
        Self::new(bounds, Vec::new(), 0, 0.0)
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn obstacles(&self) -> &[Shape] {
        &self.obstacles
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn inflation(&self) -> f64 {
        self.inflation
    }

    /// Point collision: inside an (inflated) obstacle or outside the workspace.
    pub fn collides(&self, x: f64, y: f64) -> bool {
        if !self.bounds.contains(x, y) {
            return true;
        }
        self.grid
            .bucket(&self.bounds, x, y)
            .iter()
            .any(|&i| self.obstacles[i as usize].contains([x, y], self.inflation))
    }

    /// Distance from `(x, y)` to the nearest obstacle surface, ignoring bounds.
    pub fn clearance(&self, x: f64, y: f64) -> f64 {
        self.obstacles
            .iter()
            .map(|s| s.distance([x, y]))
            .fold(f64::INFINITY, f64::min)
    }
}

/// `1(x)`: one when the agent point collides with the map.
pub fn static_collision(state: &[f64], map: &StaticMap) -> u8 {
    map.collides(state[0], state[1]) as u8
}

/// Parameters of the random forest generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestParams {
    pub bounds: Bounds,
    pub obstacle_count: usize,
    /// Circle radii and polygon circumradii are drawn uniformly from this range.
    pub size_range: [f64; 2],
    pub agent_radius: f64,
    /// Minimum free distance around start and goal.
    pub clearance: f64,
    /// Minimum straight-line distance between start and goal.
    pub min_goal_distance: f64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            bounds: Bounds::new(0.0, 0.0, 50.0, 50.0),
            obstacle_count: 30,
            size_range: [0.5, 2.5],
            agent_radius: 0.0,
            clearance: 1.0,
            min_goal_distance: 20.0,
        }
    }
}

/// Random convex polygons (5 to 8 vertices) and circles, deterministic in `seed`.
pub fn generate_forest(
    seed: u64,
    bounds: Bounds,
    obstacle_count: usize,
    size_range: [f64; 2],
    agent_radius: f64,
) -> Result<StaticMap> {
    bounds.validate()?;
    let [lo, hi] = size_range;
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::Config(format!("invalid obstacle size range {size_range:?}")));
    }
    if 2.0 * hi >= bounds.width().min(bounds.height()) && obstacle_count > 0 {
        return Err(Error::Config("obstacles do not fit inside the workspace".into()));
    }
    let mut rng = rng::stream(seed, Domain::StaticMap, 0);
    let mut obstacles = Vec::with_capacity(obstacle_count);
    for _ in 0..obstacle_count {
        let size = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let cx = rng.random_range(bounds.min[0] + size..=bounds.max[0] - size);
        let cy = rng.random_range(bounds.min[1] + size..=bounds.max[1] - size);
        if rng.random_bool(0.5) {
            obstacles.push(Shape::Circle {
                center: [cx, cy],
                radius: size,
            });
        } else {
            let n = rng.random_range(5..=8usize);
            let phase = rng.random_range(0.0..TAU);
            // jittered, evenly spaced angles keep the polygon convex and non-degenerate
            let slot = TAU / n as f64;
            let vertices = (0..n)
                .map(|i| {
                    let a = phase + slot * (i as f64 + rng.random_range(-0.3..0.3));
                    [cx + size * a.cos(), cy + size * a.sin()]
                })
                .collect();
            obstacles.push(Shape::Polygon { vertices });
        }
    }
    StaticMap::new(bounds, obstacles, seed, agent_radius)
}

/// Sample a collision-free start and goal by rejection.
///
/// Returns `(start, goal)`; the start heading points at the goal.
pub fn sample_start_goal(
    map: &StaticMap,
    seed: u64,
    clearance: f64,
    min_goal_distance: f64,
) -> Result<([f64; 3], [f64; 2])> {
    const ATTEMPTS: usize = 10_000;
    let b = *map.bounds();
    let mut rng = rng::stream(seed, Domain::StartGoal, 0);
    let margin = clearance.min(0.5 * b.width()).min(0.5 * b.height());
    let free = |rng: &mut rand_chacha::ChaCha8Rng| -> Option<[f64; 2]> {
        for _ in 0..ATTEMPTS {
            let x = rng.random_range(b.min[0] + margin..=b.max[0] - margin);
            let y = rng.random_range(b.min[1] + margin..=b.max[1] - margin);
            if !map.collides(x, y) && map.clearance(x, y) >= clearance + map.inflation() {
                return Some([x, y]);
            }
        }
        None
    };
    for _ in 0..ATTEMPTS {
        let start = free(&mut rng)
            .ok_or_else(|| Error::Generation("no collision-free start position".into()))?;
        let goal = free(&mut rng)
            .ok_or_else(|| Error::Generation("no collision-free goal position".into()))?;
        let d = (goal[0] - start[0]).hypot(goal[1] - start[1]);
        if d >= min_goal_distance {
            let heading = (goal[1] - start[1]).atan2(goal[0] - start[0]);
            return Ok(([start[0], start[1], heading], goal));
        }
    }
    Err(Error::Generation(format!(
        "no start/goal pair at least {min_goal_distance} m apart"
    )))
}

/// `ψ(x) = φ(x) = ‖(x, y) − goal‖ + α 1(x)`.
#[derive(Debug, Clone)]
pub struct GoalCost {
    pub goal: [f64; 2],
    pub alpha: f64,
    pub map: Arc<StaticMap>,
}

pub fn goal_distance_cost(state: &[f64], goal: [f64; 2], alpha: f64, map: &StaticMap) -> f64 {
    (state[0] - goal[0]).hypot(state[1] - goal[1]) + alpha * f64::from(static_collision(state, map))
}

impl Cost for GoalCost {
    fn running(&self, state: &[f64], _step: usize) -> f64 {
        goal_distance_cost(state, self.goal, self.alpha, &self.map)
    }

    fn terminal(&self, state: &[f64], _step: usize) -> f64 {
        goal_distance_cost(state, self.goal, self.alpha, &self.map)
    }
}

/// A moving obstacle with its true (hidden) constant inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MovingObstacle {
    /// `[x, y, theta]`.
    pub state: [f64; 3],
    pub speed: f64,
    pub turn_rate: f64,
    pub radius: f64,
}

/// Ranges for the moving-obstacle field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldParams {
    pub bounds: Bounds,
    pub obstacle_count: usize,
    pub speed_range: [f64; 2],
    pub turn_rate_range: [f64; 2],
    pub collision_radius: f64,
    pub clearance: f64,
    pub min_goal_distance: f64,
}

impl Default for FieldParams {
    fn default() -> Self {
        Self {
            bounds: Bounds::new(0.0, 0.0, 75.0, 50.0),
            obstacle_count: 100,
            speed_range: [0.5, 1.5],
            turn_rate_range: [-0.5, 0.5],
            collision_radius: 1.0,
            clearance: 3.0,
            min_goal_distance: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicField {
    pub bounds: Bounds,
    pub obstacles: Vec<MovingObstacle>,
    pub seed: u64,
}

/// Initial poses uniform over the bounds, headings uniform in `[0, 2π)`,
/// speeds and turn rates uniform over their ranges.
pub fn sample_dynamic_field(seed: u64, params: &FieldParams) -> Result<DynamicField> {
    params.bounds.validate()?;
    let [v0, v1] = params.speed_range;
    let [w0, w1] = params.turn_rate_range;
    if !(v0 <= v1 && w0 <= w1 && params.collision_radius > 0.0) {
        return Err(Error::Config("invalid dynamic field ranges".into()));
    }
    let b = params.bounds;
    let mut rng = rng::stream(seed, Domain::DynamicField, 0);
    let mut uniform = |lo: f64, hi: f64| if hi > lo { rng.random_range(lo..hi) } else { lo };
    let obstacles = (0..params.obstacle_count)
        .map(|_| {
            let x = uniform(b.min[0], b.max[0]);
            let y = uniform(b.min[1], b.max[1]);
            let theta = uniform(0.0, TAU);
            let speed = uniform(v0, v1);
            let turn_rate = uniform(w0, w1);
            MovingObstacle {
                state: [x, y, theta],
                speed,
                turn_rate,
                radius: params.collision_radius,
            }
        })
        .collect();
    Ok(DynamicField {
        bounds: b,
        obstacles,
        seed,
    })
}

pub const MAP_DOCUMENT_VERSION: u32 = 1;

/// Versioned JSON form of a static map or a dynamic field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapDocument {
    pub version: u32,
    pub seed: u64,
    pub bounds: Bounds,
    #[serde(default)]
    pub inflation: f64,
    pub obstacles: Vec<MapObstacle>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum MapObstacle {
    Circle { center: [f64; 2], radius: f64 },
    Polygon { vertices: Vec<[f64; 2]> },
    Moving(MovingObstacle),
}

impl From<&StaticMap> for MapDocument {
    fn from(map: &StaticMap) -> Self {
        Self {
            version: MAP_DOCUMENT_VERSION,
            seed: map.seed,
            bounds: map.bounds,
            inflation: map.inflation,
            obstacles: map
                .obstacles
                .iter()
                .map(|s| match s {
                    Shape::Circle { center, radius } => MapObstacle::Circle {
                        center: *center,
                        radius: *radius,
                    },
                    Shape::Polygon { vertices } => MapObstacle::Polygon {
                        vertices: vertices.clone(),
                    },
                })
                .collect(),
        }
    }
}

impl From<&DynamicField> for MapDocument {
    fn from(field: &DynamicField) -> Self {
        Self {
            version: MAP_DOCUMENT_VERSION,
            seed: field.seed,
            bounds: field.bounds,
            inflation: 0.0,
            obstacles: field.obstacles.iter().copied().map(MapObstacle::Moving).collect(),
        }
    }
}

impl MapDocument {
    fn check_version(&self) -> Result<()> {
        if self.version != MAP_DOCUMENT_VERSION {
            return Err(Error::Config(format!(
                "unsupported map document version {}",
                self.version
            )));
        }
        Ok(())
    }

    /// Rebuild the static part; moving obstacles are ignored.
    pub fn to_static_map(&self) -> Result<StaticMap> {
        self.check_version()?;
        let obstacles = self
            .obstacles
            .iter()
            .filter_map(|o| match o {
                MapObstacle::Circle { center, radius } => Some(Shape::Circle {
                    center: *center,
                    radius: *radius,
                }),
                MapObstacle::Polygon { vertices } => Some(Shape::Polygon {
                    vertices: vertices.clone(),
                }),
                MapObstacle::Moving(_) => None,
            })
            .collect();
        StaticMap::new(self.bounds, obstacles, self.seed, self.inflation)
    }

    pub fn to_dynamic_field(&self) -> Result<DynamicField> {
        self.check_version()?;
        Ok(DynamicField {
            bounds: self.bounds,
            seed: self.seed,
            obstacles: self
                .obstacles
                .iter()
                .filter_map(|o| match o {
                    MapObstacle::Moving(m) => Some(*m),
                    _ => None,
                })
                .collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Shape {
        Shape::Polygon {
            vertices: vec![[1.0, 1.0], [3.0, 1.0], [3.0, 3.0], [1.0, 3.0]],
        }
    }

    #[test]
    fn empty_forest_accepts_any_start_goal() {
        let map = generate_forest(3, Bounds::new(0.0, 0.0, 50.0, 50.0), 0, [0.5, 2.5], 0.0).unwrap();
        assert!(map.obstacles().is_empty());
        let (s, g) = sample_start_goal(&map, 1, 1.0, 20.0).unwrap();
        assert!(!map.collides(s[0], s[1]) && !map.collides(g[0], g[1]));
    }

    #[test]
    fn forest_is_deterministic() {
        let b = Bounds::new(0.0, 0.0, 50.0, 50.0);
        let a = generate_forest(11, b, 30, [0.5, 2.5], 0.0).unwrap();
        let c = generate_forest(11, b, 30, [0.5, 2.5], 0.0).unwrap();
        assert_eq!(a.obstacles(), c.obstacles());
        let d = generate_forest(12, b, 30, [0.5, 2.5], 0.0).unwrap();
        assert_ne!(a.obstacles(), d.obstacles());
    }

    #[test]
    fn forest_shapes_within_spec() {
        let b = Bounds::new(0.0, 0.0, 50.0, 50.0);
        let map = generate_forest(5, b, 200, [0.5, 2.5], 0.0).unwrap();
        for s in map.obstacles() {
            let bb = s.aabb();
            assert!(b.contains(bb[0], bb[1]) && b.contains(bb[2], bb[3]));
            match s {
                Shape::Circle { radius, .. } => assert!((0.5..=2.5).contains(radius)),
                Shape::Polygon { vertices } => {
                    assert!((5..=8).contains(&vertices.len()));
                    // convex and counter-clockwise
                    let n = vertices.len();
                    for i in 0..n {
                        let (a, b, c) = (vertices[i], vertices[(i + 1) % n], vertices[(i + 2) % n]);
                        let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
                        assert!(cross > 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn collision_examples() {
        let b = Bounds::new(0.0, 0.0, 10.0, 10.0);
        let map = StaticMap::new(
            b,
            vec![
                Shape::Circle {
                    center: [7.0, 7.0],
                    radius: 1.0,
                },
                square(),
            ],
            0,
            0.0,
        )
        .unwrap();
        assert_eq!(static_collision(&[7.0, 7.0, 0.0], &map), 1);
        assert_eq!(static_collision(&[8.0, 7.0, 0.0], &map), 1);
        assert_eq!(static_collision(&[3.0, 2.0, 0.0], &map), 1);
        assert_eq!(static_collision(&[5.0, 5.0, 0.0], &map), 0);
        assert_eq!(static_collision(&[-0.1, 5.0, 0.0], &map), 1);
        assert_eq!(static_collision(&[5.0, 10.5, 0.0], &map), 1);
    }

    #[test]
    fn inflated_boundary_is_inclusive() {
        let b = Bounds::new(0.0, 0.0, 10.0, 10.0);
        let map = StaticMap::new(b, vec![square()], 0, 0.5).unwrap();
        assert_eq!(static_collision(&[3.5, 2.0, 0.0], &map), 1);
        assert_eq!(static_collision(&[3.51, 2.0, 0.0], &map), 0);
        // corner rounding: distance to (3,3) is exactly 0.5
        let d = 0.5 / 2f64.sqrt();
        assert_eq!(static_collision(&[3.0 + d * 0.999, 3.0 + d * 0.999, 0.0], &map), 1);
        assert_eq!(static_collision(&[3.4, 3.4, 0.0], &map), 0);
        let circle = StaticMap::new(
            b,
            vec![Shape::Circle {
                center: [5.0, 5.0],
                radius: 1.0,
            }],
            0,
            0.5,
        )
        .unwrap();
        assert_eq!(static_collision(&[6.5, 5.0, 0.0], &circle), 1);
    }

    #[test]
    fn goal_cost_examples() {
        let map = StaticMap::new(
            Bounds::new(-10.0, -10.0, 10.0, 10.0),
            vec![Shape::Circle {
                center: [3.0, 4.0],
                radius: 0.5,
            }],
            0,
            0.0,
        )
        .unwrap();
        assert_eq!(goal_distance_cost(&[1.0, 1.0, 0.0], [1.0, 1.0], 1000.0, &map), 0.0);
        assert!((goal_distance_cost(&[-3.0, -4.0, 0.0], [0.0, 0.0], 1000.0, &map) - 5.0).abs() < 1e-12);
        assert!((goal_distance_cost(&[3.0, 4.0, 0.0], [0.0, 0.0], 1000.0, &map) - 1005.0).abs() < 1e-12);
    }

    #[test]
    fn crowded_workspace_fails_generation() {
        let b = Bounds::new(0.0, 0.0, 10.0, 10.0);
        let map = StaticMap::new(
            b,
            vec![Shape::Polygon {
                vertices: vec![[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]],
            }],
            0,
            0.0,
        )
        .unwrap();
        assert!(matches!(sample_start_goal(&map, 0, 0.5, 1.0), Err(Error::Generation(_))));
    }

    #[test]
    fn obstacles_outside_bounds_rejected() {
        let b = Bounds::new(0.0, 0.0, 10.0, 10.0);
        let r = StaticMap::new(
            b,
            vec![Shape::Circle {
                center: [9.5, 5.0],
                radius: 1.0,
            }],
            0,
            0.0,
        );
        assert!(r.is_err());
    }

    #[test]
    fn field_examples() {
        let p = FieldParams::default();
        assert!(sample_dynamic_field(1, &FieldParams { obstacle_count: 0, ..p.clone() })
            .unwrap()
            .obstacles
            .is_empty());
        let f = sample_dynamic_field(1, &p).unwrap();
        assert_eq!(f.obstacles.len(), 100);
        for o in &f.obstacles {
            assert!((0.5..=1.5).contains(&o.speed));
            assert!((-0.5..=0.5).contains(&o.turn_rate));
            assert!((0.0..75.0).contains(&o.state[0]) && (0.0..50.0).contains(&o.state[1]));
            assert!((0.0..TAU).contains(&o.state[2]));
            assert_eq!(o.radius, 1.0);
        }
        assert_eq!(f, sample_dynamic_field(1, &p).unwrap());
    }

    #[test]
    fn map_document_round_trip() {
        let map = generate_forest(4, Bounds::new(0.0, 0.0, 50.0, 50.0), 10, [0.5, 2.5], 0.25).unwrap();
        let doc = MapDocument::from(&map);
        let text = serde_json::to_string(&doc).unwrap();
        assert!(text.contains("\"type\":\"circle\"") || text.contains("\"type\":\"polygon\""));
        let back: MapDocument = serde_json::from_str(&text).unwrap();
        let rebuilt = back.to_static_map().unwrap();
        assert_eq!(rebuilt.obstacles(), map.obstacles());
        assert_eq!(rebuilt.inflation(), 0.25);

        let field = sample_dynamic_field(3, &FieldParams { obstacle_count: 4, ..Default::default() }).unwrap();
        let doc = MapDocument::from(&field);
        let back: MapDocument = serde_json::from_str(&serde_json::to_string(&doc).unwrap()).unwrap();
        assert_eq!(back.to_dynamic_field().unwrap(), field);

        let mut bad = doc;
        bad.version = 99;
        assert!(bad.to_dynamic_field().is_err());
    }
}
