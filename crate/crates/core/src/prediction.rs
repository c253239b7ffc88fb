//! Constant-velocity prediction along agent paths and the uncertainty
//! envelopes (isotropic Gaussians, circle sets) built around it.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point2, PolylinePath};
use crate::scenario::AgentState;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredictionError {
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("covariance sum is not positive definite (det = {det})")]
    SingularCovariance { det: f64 },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> PredictionError {
    PredictionError::InvalidConfig {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictionConfig {
    /// Sample spacing, seconds.
    pub step: f64,
    /// Prediction horizon, seconds.
    pub horizon: f64,
    /// Closest encounters at or after this time are ignored, seconds.
    pub s_max: f64,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        Self {
            step: 0.1,
            horizon: 12.0,
            s_max: 10.0,
        }
    }
}

impl PredictionConfig {
    pub fn validate(&self) -> Result<(), PredictionError> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(invalid("prediction.step", "must be positive"));
        }
        if !(self.horizon >= self.step && self.horizon.is_finite()) {
            return Err(invalid("prediction.horizon", "must be at least one step"));
        }
        if !(self.s_max <= self.horizon && self.s_max >= 0.0) {
            return Err(invalid("prediction.s_max", "must lie in [0, horizon]"));
        }
        Ok(())
    }

    /// Number of samples on the grid `0, step, ..., horizon`.
    pub fn sample_count(&self) -> usize {
        (self.horizon / self.step + 1e-9).floor() as usize + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UncertaintyConfig {
    /// Position standard deviation at s = 0, meters.
    pub sigma0: f64,
    /// Linear growth of the standard deviation, m/s.
    pub growth: f64,
    /// Number of circles per agent in the circle approximation.
    pub k_circles: usize,
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        Self {
            sigma0: 0.5,
            growth: 0.3,
            k_circles: 3,
        }
    }
}

impl UncertaintyConfig {
    pub fn validate(&self) -> Result<(), PredictionError> {
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return Err(invalid("uncertainty.sigma0", "must be positive"));
        }
        if !(self.growth >= 0.0 && self.growth.is_finite()) {
            return Err(invalid("uncertainty.growth", "must be non-negative"));
        }
        if self.k_circles == 0 {
            return Err(invalid("uncertainty.k_circles", "must be at least 1"));
        }
        Ok(())
    }

    pub fn sigma_at(&self, s: f64) -> f64 {
        self.sigma0 + self.growth * s
    }
}

/// Predicted positions of one agent on a uniform time grid starting at s = 0.
#[derive(Debug, Clone)]
pub struct Trajectory<'a> {
    path: &'a PolylinePath,
    speed: f64,
    step: f64,
    positions: Vec<Point2>,
}

impl<'a> Trajectory<'a> {
    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn path(&self) -> &'a PolylinePath {
        self.path
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Point2] {
        &self.positions
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, Point2)> + '_ {
        self.positions
            .iter()
            .enumerate()
            .map(|(k, &p)| (self.time(k), p))
    }

    /// Position at an arbitrary time, evaluated on the path.
    pub fn position_at(&self, s: f64) -> Point2 {
        self.path.point_at(self.speed * s)
    }
}

pub fn predict<'a>(agent: &'a AgentState, cfg: &PredictionConfig) -> Trajectory<'a> {
    let n = cfg.sample_count();
    let positions = (0..n)
        .map(|k| agent.path.point_at(agent.speed * (k as f64 * cfg.step)))
        .collect();
    Trajectory {
        path: &agent.path,
        speed: agent.speed,
        step: cfg.step,
        positions,
    }
}

/// Symmetric 2x2 covariance, m².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cov2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Cov2 {
    pub fn isotropic(variance: f64) -> Self {
        Self {
            xx: variance,
            xy: 0.0,
            yy: variance,
        }
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn is_positive_definite(&self) -> bool {
        self.xx > 0.0 && self.det() > 0.0
    }
}

impl std::ops::Add for Cov2 {
    type Output = Cov2;
    fn add(self, rhs: Cov2) -> Cov2 {
        Cov2 {
            xx: self.xx + rhs.xx,
            xy: self.xy + rhs.xy,
            yy: self.yy + rhs.yy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianState {
    pub mean: Point2,
    pub covariance: Cov2,
}

impl GaussianState {
    /// Value of the product integral of two Gaussian densities, which is the
    /// density of N(0, Σ₁+Σ₂) evaluated at μ₂−μ₁. Units 1/m².
    pub fn overlap(&self, other: &GaussianState) -> Result<f64, PredictionError> {
        let sum = self.covariance + other.covariance;
        let det = sum.det();
        if !sum.is_positive_definite() {
            return Err(PredictionError::SingularCovariance { det });
        }
        let d = other.mean - self.mean;
        let quad = (sum.yy * d.x * d.x - 2.0 * sum.xy * d.x * d.y + sum.xx * d.y * d.y) / det;
        Ok((-0.5 * quad).exp() / (2.0 * PI * det.sqrt()))
    }
}

pub fn gaussian_at(traj: &Trajectory<'_>, s: f64, ucfg: &UncertaintyConfig) -> GaussianState {
    let sigma = ucfg.sigma_at(s);
    GaussianState {
        mean: traj.position_at(s),
        covariance: Cov2::isotropic(sigma * sigma),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: Point2,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircleSet {
    pub circles: Vec<Circle>,
}

impl CircleSet {
    pub fn len(&self) -> usize {
        self.circles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.circles.is_empty()
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.circles
            .iter()
            .any(|c| c.center.distance(p) <= c.radius + 1e-12)
    }
}

/// Arc length offsets of the circle centers relative to the predicted position.
pub fn circle_offsets(k: usize, spacing: f64) -> impl Iterator<Item = f64> {
    let mid = (k as f64 - 1.0) / 2.0;
    (0..k).map(move |i| (i as f64 - mid) * spacing)
}

/// `k` circles spread along the path around the predicted position; spacing
/// and radius both equal the standard deviation at `s`.
pub fn circles_at(traj: &Trajectory<'_>, s: f64, ucfg: &UncertaintyConfig) -> CircleSet {
    let sigma = ucfg.sigma_at(s);
    let along = traj.speed() * s;
    CircleSet {
        circles: circle_offsets(ucfg.k_circles, sigma)
            .map(|off| Circle {
                center: traj.path().point_at(along + off),
                radius: sigma,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(len: f64) -> PolylinePath {
        PolylinePath::new(vec![Point2::new(0.0, 0.0), Point2::new(len, 0.0)]).unwrap()
    }

    #[test]
    fn zero_speed_stays_put() {
        let a = AgentState::on_path("a", 0.0, straight(50.0));
        let t = predict(&a, &PredictionConfig::default());
        assert_eq!(t.len(), 121);
        assert!(t.positions().iter().all(|&p| p == Point2::new(0.0, 0.0)));
    }

    #[test]
    fn predicts_along_path() {
        let a = AgentState::on_path("a", 10.0, straight(500.0));
        let t = predict(&a, &PredictionConfig::default());
        assert!((t.positions()[20].x - 20.0).abs() < 1e-9);

        let l = PolylinePath::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(4.0, 0.0),
            Point2::new(4.0, 100.0),
        ])
        .unwrap();
        let a = AgentState::on_path("b", 4.0, l);
        let t = predict(&a, &PredictionConfig::default());
        let p = t.positions()[15];
        assert!((p.x - 4.0).abs() < 1e-9 && (p.y - 2.0).abs() < 1e-9);
    }

    #[test]
    fn clamps_at_path_end() {
        let a = AgentState::on_path("a", 25.0, straight(30.0));
        let t = predict(&a, &PredictionConfig::default());
        assert_eq!(*t.positions().last().unwrap(), Point2::new(30.0, 0.0));
    }

    #[test]
    fn gaussian_covariance_growth() {
        let a = AgentState::on_path("a", 1.0, straight(50.0));
        let t = predict(&a, &PredictionConfig::default());
        let u = UncertaintyConfig::default();
        let g0 = gaussian_at(&t, 0.0, &u);
        assert!((g0.covariance.xx - 0.25).abs() < 1e-12);
        assert_eq!(g0.covariance.xy, 0.0);
        let g10 = gaussian_at(&t, 10.0, &u);
        assert!((g10.covariance.xx - 12.25).abs() < 1e-12);
        assert!((g10.covariance.yy - 12.25).abs() < 1e-12);
        let frozen = UncertaintyConfig {
            growth: 0.0,
            ..u.clone()
        };
        assert_eq!(
            gaussian_at(&t, 0.0, &frozen).covariance,
            gaussian_at(&t, 12.0, &frozen).covariance
        );
    }

    #[test]
    fn circle_examples() {
        let a = AgentState::on_path("a", 5.0, straight(100.0));
        let t = predict(&a, &PredictionConfig::default());
        let one = circles_at(
            &t,
            2.0,
            &UncertaintyConfig {
                k_circles: 1,
                ..Default::default()
            },
        );
        assert_eq!(one.len(), 1);
        assert_eq!(one.circles[0].center, Point2::new(10.0, 0.0));
        assert!((one.circles[0].radius - 1.1).abs() < 1e-12);

        let b = AgentState::on_path("b", 5.0, straight(100.0));
        let mut moved = b.clone();
        moved.path = PolylinePath::new(vec![Point2::new(-10.0, 0.0), Point2::new(90.0, 0.0)])
            .unwrap();
        moved.position = moved.path.start();
        let t = predict(&moved, &PredictionConfig::default());
        let three = circles_at(&t, 0.0, &UncertaintyConfig::default());
        let xs: Vec<f64> = three.circles.iter().map(|c| c.center.x).collect();
        assert_eq!(xs, vec![-10.0, -10.0, -9.5]);
        // Backward offsets clamp at the path start; away from the start they are symmetric.
        let t = predict(&b, &PredictionConfig::default());
        let mid = circles_at(&t, 4.0, &UncertaintyConfig::default());
        let xs: Vec<f64> = mid.circles.iter().map(|c| c.center.x).collect();
        assert!((xs[0] - 18.3).abs() < 1e-9 && (xs[1] - 20.0).abs() < 1e-9);
        assert!((xs[2] - 21.7).abs() < 1e-9);
        assert!(three.circles.iter().all(|c| (c.radius - 0.5).abs() < 1e-12));
    }

    #[test]
    fn overlap_identity_case() {
        let g = GaussianState {
            mean: Point2::new(1.0, 2.0),
            covariance: Cov2::isotropic(1.0),
        };
        let v = g.overlap(&g).unwrap();
        assert!((v - 1.0 / (4.0 * PI)).abs() < 1e-12);
        let far = GaussianState {
            mean: Point2::new(1e4, 0.0),
            ..g
        };
        assert_eq!(g.overlap(&far).unwrap(), 0.0);
        let flat = GaussianState {
            mean: Point2::new(0.0, 0.0),
            covariance: Cov2 {
                xx: 1.0,
                xy: 1.0,
                yy: 1.0,
            },
        };
        assert!(matches!(
            flat.overlap(&flat),
            Err(PredictionError::SingularCovariance { .. })
        ));
    }

    #[test]
    fn config_validation_names_field() {
        let cfg = PredictionConfig {
            s_max: 20.0,
            ..Default::default()
        };
        match cfg.validate() {
            Err(PredictionError::InvalidConfig { field, .. }) => {
                assert_eq!(field, "prediction.s_max")
            }
            other => panic!("{other:?}"),
        }
    }
}
