use std::sync::Arc;

use rand::Rng;

use crate::dynamics::{arc_step, wrap_angle};
use crate::env::{
    generate_forest, sample_dynamic_field, sample_start_goal, Bounds, DynamicField, MapDocument,
    MapObstacle, MovingObstacle, StaticMap, MAP_DOCUMENT_VERSION,
};
use crate::error::{Error, Result};
use crate::planner::ObstacleObservation;
use crate::rng::{self, Domain};

use super::config::{CrossingParams, ExperimentConfig, ScenarioConfig};

/// A concrete episode layout.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub map: Arc<StaticMap>,
    /// True states of the moving obstacles at time zero.
    pub movers: Vec<MovingObstacle>,
    pub start: [f64; 3],
    pub goal: [f64; 2],
    pub document: MapDocument,
}

impl Scenario {
    /// Step limit: three perimeters of travel unless overridden.
    pub fn step_limit(&self, config: &ExperimentConfig) -> usize {
        config.step_limit.unwrap_or_else(|| {
            let b = self.map.bounds();
            (3.0 * b.perimeter() / config.vehicle.speed / config.dt).ceil() as usize
        })
    }
}

/// Advance a moving obstacle by one step under its true inputs.
pub fn advance_mover(m: &mut MovingObstacle, dt: f64) {
    let [x, y, th] = arc_step(m.state[0], m.state[1], m.state[2], m.speed, m.turn_rate, dt);
    m.state = [x, y, wrap_angle(th)];
}

/// What the planner is allowed to see of the movers.
pub fn observe(movers: &[MovingObstacle]) -> Vec<ObstacleObservation> {
    movers
        .iter()
        .map(|m| ObstacleObservation {
            pose: m.state,
            radius: m.radius,
        })
        .collect()
}

/// True if the point lies inside (or on) any mover's collision disc.
pub fn mover_collision(x: f64, y: f64, movers: &[MovingObstacle]) -> bool {
    movers
        .iter()
        .any(|m| (x - m.state[0]).hypot(y - m.state[1]) <= m.radius)
}

pub fn build_scenario(config: &ExperimentConfig, seed: u64) -> Result<Scenario> {
    match &config.scenario {
        ScenarioConfig::Forest(p) => {
            let map = generate_forest(seed, p.bounds, p.obstacle_count, p.size_range, p.agent_radius)?;
            let (start, goal) = sample_start_goal(&map, seed, p.clearance, p.min_goal_distance)?;
            Ok(Scenario {
                document: MapDocument::from(&map),
                map: Arc::new(map),
                movers: Vec::new(),
                start,
                goal,
            })
        }
        ScenarioConfig::DynamicField(p) => {
            let field = sample_dynamic_field(seed, p)?;
            let (start, goal) = field_start_goal(&field, seed, p.clearance, p.min_goal_distance)?;
            Ok(Scenario {
                document: MapDocument::from(&field),
                map: Arc::new(StaticMap::new(field.bounds, Vec::new(), seed, 0.0)?),
                movers: field.obstacles,
                start,
                goal,
            })
        }
        ScenarioConfig::Crossing(p) => crossing(p, config.vehicle.speed, seed),
        ScenarioConfig::Fixed(layout) => {
            let map = layout.map.to_static_map()?;
            let movers = layout.map.to_dynamic_field()?.obstacles;
            let [x, y, _] = layout.start;
            if map.collides(x, y) || mover_collision(x, y, &movers) {
                return Err(Error::Config("fixed start is in collision".into()));
            }
            if !layout.start.iter().chain(&layout.goal).all(|v| v.is_finite()) {
                return Err(Error::Config("fixed start and goal must be finite".into()));
            }
            Ok(Scenario {
                map: Arc::new(map),
                movers,
                start: layout.start,
                goal: layout.goal,
                document: layout.map.clone(),
            })
        }
    }
}

fn field_start_goal(
    field: &DynamicField,
    seed: u64,
    clearance: f64,
    min_goal_distance: f64,
) -> Result<([f64; 3], [f64; 2])> {
    const ATTEMPTS: usize = 10_000;
    let b = field.bounds;
    let margin = clearance.min(0.5 * b.width()).min(0.5 * b.height());
    let mut rng = rng::stream(seed, Domain::StartGoal, 1);
    let clear = |x: f64, y: f64| {
        field
            .obstacles
            .iter()
            .all(|m| (x - m.state[0]).hypot(y - m.state[1]) >= m.radius + clearance)
    };
    for _ in 0..ATTEMPTS {
        let sx = rng.random_range(b.min[0] + margin..=b.max[0] - margin);
        let sy = rng.random_range(b.min[1] + margin..=b.max[1] - margin);
        let gx = rng.random_range(b.min[0] + margin..=b.max[0] - margin);
        let gy = rng.random_range(b.min[1] + margin..=b.max[1] - margin);
        if (gx - sx).hypot(gy - sy) >= min_goal_distance && clear(sx, sy) && clear(gx, gy) {
            return Ok(([sx, sy, (gy - sy).atan2(gx - sx)], [gx, gy]));
        }
    }
    Err(Error::Generation("no obstacle-free start/goal in the dynamic field".into()))
}

fn crossing(p: &CrossingParams, agent_speed: f64, seed: u64) -> Result<Scenario> {
    let [v0, v1] = p.speed_range;
    if !(p.goal_distance > 0.0
        && p.meet_distance > 0.0
        && p.meet_distance < p.goal_distance
        && 0.0 < v0
        && v0 <= v1
        && p.collision_radius > 0.0
        && p.margin > 0.0)
    {
        return Err(Error::Config("invalid crossing parameters".into()));
    }
    let mut rng = rng::stream(seed, Domain::Scenario, 0);
    let speed = if v1 > v0 { rng.random_range(v0..v1) } else { v0 };
    let t_meet = p.meet_distance / agent_speed;
    let h = p.obstacle_heading;
    let origin = [
        p.meet_distance - speed * t_meet * h.cos(),
        -speed * t_meet * h.sin(),
    ];
    let mover = MovingObstacle {
        state: [origin[0], origin[1], wrap_angle(h)],
        speed,
        turn_rate: 0.0,
        radius: p.collision_radius,
    };
    let xs = [0.0, p.goal_distance, origin[0]];
    let ys = [0.0, origin[1]];
    let fold = |v: &[f64], f: fn(f64, f64) -> f64, init: f64| v.iter().copied().fold(init, f);
    let bounds = Bounds::new(
        fold(&xs, f64::min, f64::INFINITY) - p.margin,
        fold(&ys, f64::min, f64::INFINITY) - p.margin,
        fold(&xs, f64::max, f64::NEG_INFINITY) + p.margin,
        fold(&ys, f64::max, f64::NEG_INFINITY) + p.margin,
    );
    Ok(Scenario {
        map: Arc::new(StaticMap::new(bounds, Vec::new(), seed, 0.0)?),
        movers: vec![mover],
        start: [0.0, 0.0, 0.0],
        goal: [p.goal_distance, 0.0],
        document: MapDocument {
            version: MAP_DOCUMENT_VERSION,
            seed,
            bounds,
            inflation: 0.0,
            obstacles: vec![MapObstacle::Moving(mover)],
        },
    })
}
