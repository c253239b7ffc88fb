//! Scenario snapshots, their JSON file format and the synthetic intersection
//! generator.

use std::collections::HashSet;
use std::f64::consts::FRAC_PI_2;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Point2, PolylinePath, GEOM_TOL};

/// Current on-disk schema version.
pub const SCHEMA_VERSION: u64 = 1;

/// One traffic participant at the scenario time.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: String,
    pub position: Point2,
    /// m/s along the path.
    pub speed: f64,
    /// Intended route; vertex 0 is `position`.
    pub path: PolylinePath,
}

impl AgentState {
    /// Builds an agent whose position is the first path vertex.
    pub fn on_path(id: impl Into<String>, speed: f64, path: PolylinePath) -> Self {
        Self {
            id: id.into(),
            position: path.start(),
            speed,
            path,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub ego: AgentState,
    pub others: Vec<AgentState>,
    /// Snapshot time in seconds.
    pub time: f64,
    /// Seed the scenario was generated from.
    pub seed: u64,
}

impl Scenario {
    pub fn agent_count(&self) -> usize {
        self.others.len() + 1
    }

    pub fn other(&self, id: &str) -> Option<&AgentState> {
        self.others.iter().find(|a| a.id == id)
    }
}

/// Checks every scenario invariant and returns one message per violation.
pub fn validate(scenario: &Scenario) -> Vec<String> {
    let mut violations = Vec::new();
    if !scenario.time.is_finite() {
        violations.push("non-finite time".to_string());
    }
    let mut seen = HashSet::new();
    for agent in std::iter::once(&scenario.ego).chain(&scenario.others) {
        if !seen.insert(agent.id.as_str()) {
            violations.push(format!("duplicate id: {}", agent.id));
        }
        if !agent.position.is_finite() {
            violations.push(format!("non-finite coordinate: {}", agent.id));
        }
        if !agent.speed.is_finite() {
            violations.push(format!("non-finite speed: {}", agent.id));
        } else if agent.speed < 0.0 {
            violations.push(format!("negative speed: {}", agent.id));
        }
        if agent.position.is_finite() && agent.path.start().distance(agent.position) > GEOM_TOL {
            violations.push(format!("path origin mismatch: {}", agent.id));
        }
    }
    violations
}

// ---------------------------------------------------------------------------
// File format

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    version: u64,
    scenarios: Vec<ScenarioRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioRecord {
    seed: u64,
    time: f64,
    ego: AgentRecord,
    others: Vec<AgentRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentRecord {
    id: String,
    x: f64,
    y: f64,
    speed: f64,
    path: Vec<[f64; 2]>,
}

impl From<&AgentState> for AgentRecord {
    fn from(a: &AgentState) -> Self {
        Self {
            id: a.id.clone(),
            x: a.position.x,
            y: a.position.y,
            speed: a.speed,
            path: a.path.vertices().iter().map(|&p| p.into()).collect(),
        }
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported schema version {0} (expected {SCHEMA_VERSION})")]
    UnsupportedVersion(u64),
    #[error("non-finite coordinate at line {line}")]
    NonFinite { line: usize },
    #[error("scenario {scenario}: invalid path for agent {agent}: {source}")]
    Path {
        scenario: usize,
        agent: String,
        source: GeometryError,
    },
    #[error("scenario {scenario}: {}", violations.join("; "))]
    Invalid {
        scenario: usize,
        violations: Vec<String>,
    },
}

impl LoadError {
    /// Syntax-level problems, as opposed to well-formed documents carrying bad data.
    pub fn is_syntax(&self) -> bool {
        matches!(self, LoadError::Parse { .. })
    }
}

/// Serializes scenarios to the versioned JSON document.
pub fn save(scenarios: &[Scenario]) -> Vec<u8> {
    let file = ScenarioFile {
        version: SCHEMA_VERSION,
        scenarios: scenarios
            .iter()
            .map(|s| ScenarioRecord {
                seed: s.seed,
                time: s.time,
                ego: (&s.ego).into(),
                others: s.others.iter().map(Into::into).collect(),
            })
            .collect(),
    };
    serde_json::to_vec(&file).expect("scenario serialization is infallible")
}

/// JSON has no literal for NaN or infinities, but some writers emit
/// `NaN`/`Infinity` tokens anyway. Report those by line before parsing.
fn find_non_finite_token(bytes: &[u8]) -> Option<usize> {
    let mut line = 1;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'\n' {
            line += 1;
        }
        if in_string {
            match (escaped, b) {
                (true, _) => escaped = false,
                (false, b'\\') => escaped = true,
                (false, b'"') => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'N' if bytes[i..].starts_with(b"NaN") => return Some(line),
            b'I' if bytes[i..].starts_with(b"Infinity") => return Some(line),
            _ => {}
        }
    }
    None
}

fn agent_from_record(scenario: usize, rec: AgentRecord) -> Result<AgentState, LoadError> {
    if ![rec.x, rec.y, rec.speed].iter().all(|v| v.is_finite()) {
        return Err(LoadError::Invalid {
            scenario,
            violations: vec![format!("non-finite coordinate: {}", rec.id)],
        });
    }
    let path = PolylinePath::new(rec.path.into_iter().map(Point2::from).collect()).map_err(
        |source| LoadError::Path {
            scenario,
            agent: rec.id.clone(),
            source,
        },
    )?;
    Ok(AgentState {
        id: rec.id,
        position: Point2::new(rec.x, rec.y),
        speed: rec.speed,
        path,
    })
}

/// Parses and validates a scenario document.
pub fn load(bytes: &[u8]) -> Result<Vec<Scenario>, LoadError> {
    if let Some(line) = find_non_finite_token(bytes) {
        return Err(LoadError::NonFinite { line });
    }
    let file: ScenarioFile = serde_json::from_slice(bytes).map_err(|e| LoadError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if file.version != SCHEMA_VERSION {
        return Err(LoadError::UnsupportedVersion(file.version));
    }
    file.scenarios
        .into_iter()
        .enumerate()
        .map(|(index, rec)| {
            let scenario = Scenario {
                seed: rec.seed,
                time: rec.time,
                ego: agent_from_record(index, rec.ego)?,
                others: rec
                    .others
                    .into_iter()
                    .map(|a| agent_from_record(index, a))
                    .collect::<Result<_, _>>()?,
            };
            let violations = validate(&scenario);
            if violations.is_empty() {
                Ok(scenario)
            } else {
                Err(LoadError::Invalid {
                    scenario: index,
                    violations,
                })
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Generator

/// Geometry of a symmetric multi-arm intersection with right-hand traffic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntersectionLayout {
    pub arms: usize,
    /// Lanes per travel direction on each arm.
    pub lanes_per_arm: usize,
    pub lane_width: f64,
    /// Length of each arm measured from the intersection box, meters.
    pub arm_length: f64,
}

impl Default for IntersectionLayout {
    fn default() -> Self {
        Self {
            arms: 4,
            lanes_per_arm: 2,
            lane_width: 3.5,
            arm_length: 400.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    /// Inclusive range for the total agent count, ego included.
    pub n_agents_range: [usize; 2],
    /// Along-path gap between consecutive agents on one route, meters.
    pub spacing_range: [f64; 2],
    /// m/s.
    pub speed_range: [f64; 2],
    pub n_scenarios: usize,
    /// Ego distance before the intersection box, meters.
    pub ego_distance_range: [f64; 2],
    pub layout: IntersectionLayout,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_agents_range: [30, 100],
            spacing_range: [5.0, 100.0],
            speed_range: [0.0, 25.0],
            n_scenarios: 500,
            ego_distance_range: [0.0, 100.0],
            layout: IntersectionLayout::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerateError {
    #[error("invalid generator config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("infeasible config: {0}")]
    Infeasible(String),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> GenerateError {
    GenerateError::InvalidConfig {
        field,
        reason: reason.into(),
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), GenerateError> {
        let [n_lo, n_hi] = self.n_agents_range;
        if n_lo < 2 || n_lo > n_hi {
            return Err(invalid(
                "n_agents_range",
                format!("need 2 <= min <= max, got [{n_lo}, {n_hi}]"),
            ));
        }
        let [s_lo, s_hi] = self.spacing_range;
        if !(s_lo.is_finite() && s_hi.is_finite() && s_lo > 0.0 && s_lo <= s_hi) {
            return Err(invalid(
                "spacing_range",
                format!("need 0 < min <= max, got [{s_lo}, {s_hi}]"),
            ));
        }
        let [v_lo, v_hi] = self.speed_range;
        if !(v_lo.is_finite() && v_hi.is_finite() && v_lo >= 0.0 && v_lo <= v_hi) {
            return Err(invalid(
                "speed_range",
                format!("need 0 <= min <= max, got [{v_lo}, {v_hi}]"),
            ));
        }
        let [e_lo, e_hi] = self.ego_distance_range;
        if !(e_lo.is_finite() && e_hi.is_finite() && e_lo >= 0.0 && e_lo <= e_hi) {
            return Err(invalid(
                "ego_distance_range",
                format!("need 0 <= min <= max, got [{e_lo}, {e_hi}]"),
            ));
        }
        if e_lo > self.layout.arm_length {
            return Err(invalid(
                "ego_distance_range",
                format!("min {e_lo} exceeds layout.arm_length"),
            ));
        }
        if self.n_scenarios == 0 {
            return Err(invalid("n_scenarios", "must be positive"));
        }
        let l = &self.layout;
        if l.arms < 3 {
            return Err(invalid("layout.arms", format!("need at least 3, got {}", l.arms)));
        }
        if l.lanes_per_arm == 0 {
            return Err(invalid("layout.lanes_per_arm", "must be positive"));
        }
        if !(l.lane_width.is_finite() && l.lane_width > 0.0) {
            return Err(invalid("layout.lane_width", "must be positive"));
        }
        if !(l.arm_length.is_finite() && l.arm_length > 0.0) {
            return Err(invalid("layout.arm_length", "must be positive"));
        }
        // Each inbound lane carries one route; count the shortest option per lane.
        let routes = build_routes(l);
        let mut capacity = 0usize;
        for arm in 0..l.arms {
            for lane in 0..l.lanes_per_arm {
                let shortest = routes
                    .iter()
                    .filter(|r| r.arm == arm && r.lane == lane)
                    .map(|r| usable_length(&r.path))
                    .fold(f64::INFINITY, f64::min);
                capacity += (shortest / s_lo) as usize + 1;
            }
        }
        if n_hi > capacity {
            return Err(GenerateError::Infeasible(format!(
                "spacing_range: {n_hi} agents cannot fit {} active routes at minimum spacing {s_lo} m (capacity {capacity})",
                l.arms * l.lanes_per_arm
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Maneuver {
    Left,
    Straight,
    Right,
}

/// A full route through the intersection: approach lane, maneuver, exit lane.
#[derive(Debug, Clone)]
pub struct Route {
    pub arm: usize,
    pub lane: usize,
    pub maneuver: Maneuver,
    pub path: PolylinePath,
    /// Arc length at which the route reaches the intersection box.
    pub approach_length: f64,
}

fn rotate(p: Point2, angle: f64) -> Point2 {
    let (s, c) = angle.sin_cos();
    Point2::new(c * p.x - s * p.y, s * p.x + c * p.y)
}

fn maneuvers_for_lane(lane: usize, lanes: usize) -> Vec<Maneuver> {
    let mut m = Vec::new();
    if lane == 0 {
        m.push(Maneuver::Left);
    }
    m.push(Maneuver::Straight);
    if lane + 1 == lanes {
        m.push(Maneuver::Right);
    }
    m
}

/// Number of quadratic-curve segments used for turning connectors.
const TURN_SEGMENTS: usize = 6;

/// All routes of the layout, grouped by inbound lane in `(arm, lane)` order.
pub fn build_routes(layout: &IntersectionLayout) -> Vec<Route> {
    let arms = layout.arms;
    let lanes = layout.lanes_per_arm;
    let w = layout.lane_width;
    let half = lanes as f64 * w;
    let step = 2.0 * std::f64::consts::PI / arms as f64;
    // For arm k: outward direction u and its left normal.
    let frame = |k: usize| {
        let u = rotate(Point2::new(1.0, 0.0), k as f64 * step);
        let left = rotate(u, FRAC_PI_2);
        (u, left)
    };
    // Box boundary distance that clears the crossing lanes of neighbouring arms.
    let box_dist = half / (step / 2.0).tan().min(1.0) + w;

    let mut routes = Vec::new();
    for arm in 0..arms {
        let (u, left) = frame(arm);
        for lane in 0..lanes {
            let offset = (lane as f64 + 0.5) * w;
            // Inbound traffic moves along -u; its right-hand side is +left.
            let inbound_offset = left * offset;
            let start = u * (box_dist + layout.arm_length) + inbound_offset;
            let stop = u * box_dist + inbound_offset;
            for maneuver in maneuvers_for_lane(lane, lanes) {
                let exit_arm = match maneuver {
                    Maneuver::Straight => (arm + arms / 2) % arms,
                    Maneuver::Right => (arm + 1) % arms,
                    Maneuver::Left => (arm + arms - 1) % arms,
                };
                let (eu, eleft) = frame(exit_arm);
                // Outbound traffic moves along +eu; its right-hand side is -eleft.
                let exit_offset = eleft * (-offset);
                let exit_start = eu * box_dist + exit_offset;
                let exit_end = eu * (box_dist + layout.arm_length) + exit_offset;
                let mut vertices = vec![start, stop];
                if maneuver != Maneuver::Straight {
                    // Quadratic Bezier with the control point where the lane lines meet.
                    let d_in = u * -1.0;
                    let d_out = eu;
                    let denom = d_in.cross(d_out);
                    let control = if denom.abs() > 1e-12 {
                        let t = (exit_start - stop).cross(d_out) / denom;
                        stop + d_in * t
                    } else {
                        stop.lerp(exit_start, 0.5)
                    };
                    for i in 1..TURN_SEGMENTS {
                        let t = i as f64 / TURN_SEGMENTS as f64;
                        let a = stop.lerp(control, t);
                        let b = control.lerp(exit_start, t);
                        vertices.push(a.lerp(b, t));
                    }
                }
                vertices.push(exit_start);
                vertices.push(exit_end);
                let path = PolylinePath::new(vertices).expect("layout routes are well formed");
                routes.push(Route {
                    arm,
                    lane,
                    maneuver,
                    path,
                    approach_length: layout.arm_length,
                });
            }
        }
    }
    routes
}

/// Agents keep at least this much path ahead of them.
const MIN_PATH_AHEAD: f64 = 1.0;

fn usable_length(path: &PolylinePath) -> f64 {
    path.length() - MIN_PATH_AHEAD
}

/// Suffix of `path` starting at arc length `m`.
fn suffix(path: &PolylinePath, m: f64) -> PolylinePath {
    let cum = path.cumulative_arclen();
    let start = path.point_at(m);
    let mut vertices = vec![start];
    vertices.extend(
        path.vertices()
            .iter()
            .zip(cum)
            .filter(|(_, &c)| c > m + GEOM_TOL)
            .map(|(&v, _)| v),
    );
    if vertices.len() >= 2 && vertices[0].distance(vertices[1]) <= GEOM_TOL {
        vertices.remove(1);
    }
    PolylinePath::new(vertices).expect("suffix keeps at least MIN_PATH_AHEAD of path")
}

const ROUTE_ATTEMPTS: usize = 200;
const SCENARIO_ATTEMPTS: usize = 200;

struct Placement {
    route: usize,
    arclen: f64,
}

/// Places `counts[r]` agents on each active route with uniform gaps.
fn place_agents(
    rng: &mut ChaCha8Rng,
    routes: &[&Route],
    counts: &[usize],
    spacing: [f64; 2],
) -> Option<Vec<Placement>> {
    let mut placements = Vec::new();
    for (r, (&route, &count)) in routes.iter().zip(counts).enumerate() {
        if count == 0 {
            continue;
        }
        let usable = usable_length(&route.path);
        let mut placed = false;
        for _ in 0..ROUTE_ATTEMPTS {
            let gaps: Vec<f64> = (1..count)
                .map(|_| rng.gen_range(spacing[0]..=spacing[1]))
                .collect();
            let span: f64 = gaps.iter().sum();
            if span > usable {
                continue;
            }
            let mut m = rng.gen_range(0.0..=usable - span);
            placements.push(Placement { route: r, arclen: m });
            for g in gaps {
                m += g;
                placements.push(Placement { route: r, arclen: m });
            }
            placed = true;
            break;
        }
        if !placed {
            return None;
        }
    }
    Some(placements)
}

/// Generates one scenario from its own seed.
pub fn generate_one(config: &GeneratorConfig, seed: u64) -> Result<Scenario, GenerateError> {
    config.validate()?;
    let layout = &config.layout;
    let all_routes = build_routes(layout);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for _ in 0..SCENARIO_ATTEMPTS {
        // One maneuver per inbound lane keeps every physical approach lane to a single route.
        let mut active: Vec<&Route> = Vec::new();
        for arm in 0..layout.arms {
            for lane in 0..layout.lanes_per_arm {
                let options: Vec<&Route> = all_routes
                    .iter()
                    .filter(|r| r.arm == arm && r.lane == lane)
                    .collect();
                active.push(options.choose(&mut rng).expect("every lane has a route"));
            }
        }
        let n_agents = rng.gen_range(config.n_agents_range[0]..=config.n_agents_range[1]);
        let mut counts = vec![0usize; active.len()];
        for _ in 0..n_agents {
            counts[rng.gen_range(0..active.len())] += 1;
        }
        let Some(placements) = place_agents(&mut rng, &active, &counts, config.spacing_range)
        else {
            continue;
        };
        let [near, far] = config.ego_distance_range;
        let approaching: Vec<usize> = placements
            .iter()
            .enumerate()
            .filter(|(_, p)| {
                let to_box = active[p.route].approach_length - p.arclen;
                to_box > 0.0 && (near..=far).contains(&to_box)
            })
            .map(|(i, _)| i)
            .collect();
        let Some(&ego_index) = approaching.choose(&mut rng) else {
            continue;
        };
        let mut ego = None;
        let mut others = Vec::with_capacity(placements.len() - 1);
        for (i, p) in placements.iter().enumerate() {
            let speed = rng.gen_range(config.speed_range[0]..=config.speed_range[1]);
            let path = suffix(&active[p.route].path, p.arclen);
            if i == ego_index {
                ego = Some(AgentState::on_path("ego", speed, path));
            } else {
                let id = format!("a{}", others.len());
                others.push(AgentState::on_path(id, speed, path));
            }
        }
        return Ok(Scenario {
            ego: ego.expect("ego index is a placement"),
            others,
            time: 0.0,
            seed,
        });
    }
    Err(GenerateError::Infeasible(format!(
        "spacing_range: could not place agents after {SCENARIO_ATTEMPTS} attempts"
    )))
}

/// Generates `config.n_scenarios` scenarios; a pure function of `(config, seed)`.
pub fn generate(config: &GeneratorConfig, seed: u64) -> Result<Vec<Scenario>, GenerateError> {
    config.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..config.n_scenarios).map(|_| master.next_u64()).collect();
    seeds
        .into_par_iter()
        .map(|s| generate_one(config, s))
        .collect()
}
