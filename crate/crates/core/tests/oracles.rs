//! Model outputs checked against independent brute-force computations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use risk_sieve::geometry::{find_crossing, min_path_distance};
use risk_sieve::prediction::{circles_at, gaussian_at, predict, Cov2, GaussianState};
use risk_sieve::risk_models::{closest_encounter, survival_risk_from_overlaps};
use risk_sieve::scenario::AgentState;
use risk_sieve::{Point2, PolylinePath, RiskConfig, SurvivalConfig, UncertaintyConfig};

fn random_path(rng: &mut ChaCha8Rng, max_vertices: usize, spread: f64) -> PolylinePath {
    let n = rng.gen_range(2..=max_vertices);
    let mut p = Point2::new(rng.gen_range(-spread..spread), rng.gen_range(-spread..spread));
    let mut vertices = vec![p];
    for _ in 1..n {
        let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let len = rng.gen_range(1.0..spread);
        p = p + Point2::new(angle.cos(), angle.sin()) * len;
        vertices.push(p);
    }
    PolylinePath::new(vertices).unwrap()
}

fn dist_to_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

fn xy(p: Point2) -> (f64, f64) {
    (p.x, p.y)
}

/// Samples `a` every `step` meters and measures each sample against `b` exactly.
fn sampled_distance(a: &PolylinePath, b: &PolylinePath, step: f64) -> f64 {
    let mut best = f64::INFINITY;
    for w in a.vertices().windows(2) {
        let (p0, p1) = (xy(w[0]), xy(w[1]));
        let len = ((p1.0 - p0.0).powi(2) + (p1.1 - p0.1).powi(2)).sqrt();
        let n = (len / step).ceil() as usize;
        for i in 0..=n {
            let t = i as f64 / n as f64;
            let p = (p0.0 + t * (p1.0 - p0.0), p0.1 + t * (p1.1 - p0.1));
            for v in b.vertices().windows(2) {
                best = best.min(dist_to_segment(p, xy(v[0]), xy(v[1])));
            }
        }
    }
    best
}

#[test]
fn path_distance_matches_dense_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..200 {
        let a = random_path(&mut rng, 5, 20.0);
        let b = random_path(&mut rng, 5, 20.0);
        let exact = min_path_distance(&a, &b);
        let oracle = sampled_distance(&a, &b, 1e-3).min(sampled_distance(&b, &a, 1e-3));
        assert!(
            (exact - oracle).abs() <= 2e-3 && exact <= oracle + 1e-9,
            "case {case}: exact {exact}, sampled {oracle}"
        );
    }
}

fn arclen_at_vertex(path: &PolylinePath, i: usize) -> f64 {
    path.vertices()[..=i]
        .windows(2)
        .map(|w| w[0].distance(w[1]))
        .sum()
}

#[test]
fn crossing_matches_exhaustive_segment_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut with_crossing = 0;
    for case in 0..500 {
        let ego = random_path(&mut rng, 6, 15.0);
        let other = random_path(&mut rng, 6, 15.0);
        // Every proper intersection of every segment pair, as (ego arc length, other arc length).
        let mut hits = Vec::new();
        for i in 0..ego.vertices().len() - 1 {
            let (a0, a1) = (ego.vertices()[i], ego.vertices()[i + 1]);
            for j in 0..other.vertices().len() - 1 {
                let (b0, b1) = (other.vertices()[j], other.vertices()[j + 1]);
                let (r, s, q) = (a1 - a0, b1 - b0, b0 - a0);
                let den = r.x * s.y - r.y * s.x;
                if den.abs() < 1e-12 {
                    continue;
                }
                let t = (q.x * s.y - q.y * s.x) / den;
                let u = (q.x * r.y - q.y * r.x) / den;
                if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
                    hits.push((
                        arclen_at_vertex(&ego, i) + t * r.norm(),
                        arclen_at_vertex(&other, j) + u * s.norm(),
                    ));
                }
            }
        }
        let found = find_crossing(&ego, &other);
        match hits.iter().min_by(|x, y| x.0.total_cmp(&y.0)) {
            None => assert!(found.is_none(), "case {case}: spurious crossing {found:?}"),
            Some(&(le, lo)) => {
                with_crossing += 1;
                let c = found.unwrap_or_else(|| panic!("case {case}: crossing missed"));
                assert!((c.arclen_ego - le).abs() < 1e-9, "case {case}: {c:?} vs {le}");
                assert!((c.arclen_other - lo).abs() < 1e-9, "case {case}: {c:?} vs {lo}");
                assert!(c.point.distance(ego.point_at(le)) < 1e-9);
            }
        }
    }
    assert!(with_crossing > 30, "too few crossing cases: {with_crossing}");
}

fn agent(id: &str, path: PolylinePath, speed: f64) -> AgentState {
    AgentState::on_path(id, speed, path)
}

#[test]
fn closest_encounter_matches_exhaustive_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let cfg = RiskConfig::default();
    for _ in 0..300 {
        let ego = agent("ego", random_path(&mut rng, 5, 60.0), rng.gen_range(0.0..25.0));
        let other = agent("a0", random_path(&mut rng, 5, 60.0), rng.gen_range(0.0..25.0));
        let n = cfg.prediction.sample_count();
        let mut best = (f64::INFINITY, 0);
        for k in 0..n {
            let s = k as f64 * cfg.prediction.step;
            let pe = ego.path.point_at(ego.speed * s);
            let po = other.path.point_at(other.speed * s);
            let d = pe.distance(po);
            if d < best.0 {
                best = (d, k);
            }
        }
        let e = closest_encounter(&ego, &other, &cfg);
        assert_eq!(e.distance, best.0);
        assert_eq!(e.time, best.1 as f64 * cfg.prediction.step);
    }
}

fn random_cov(rng: &mut ChaCha8Rng) -> Cov2 {
    let xx: f64 = rng.gen_range(0.2..3.0);
    let yy: f64 = rng.gen_range(0.2..3.0);
    let rho: f64 = rng.gen_range(-0.8..0.8);
    Cov2 {
        xx,
        xy: rho * (xx * yy).sqrt(),
        yy,
    }
}

fn density(x: (f64, f64), mean: Point2, c: &Cov2) -> f64 {
    let (dx, dy) = (x.0 - mean.x, x.1 - mean.y);
    let det = c.xx * c.yy - c.xy * c.xy;
    let q = (c.yy * dx * dx - 2.0 * c.xy * dx * dy + c.xx * dy * dy) / det;
    (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
}

#[test]
fn gaussian_overlap_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for case in 0..50 {
        let c1 = random_cov(&mut rng);
        let c2 = random_cov(&mut rng);
        let m1 = Point2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let m2 = m1 + Point2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        // E_{x ~ N1}[N2(x)] by sampling N1 through its Cholesky factor.
        let l11 = c1.xx.sqrt();
        let l21 = c1.xy / l11;
        let l22 = (c1.yy - l21 * l21).sqrt();
        let n = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let x = (m1.x + l11 * z1, m1.y + l21 * z1 + l22 * z2);
            acc += density(x, m2, &c2);
        }
        let mc = acc / n as f64;
        let exact = GaussianState {
            mean: m1,
            covariance: c1,
        }
        .overlap(&GaussianState {
            mean: m2,
            covariance: c2,
        })
        .unwrap();
        assert!(
            ((exact - mc) / mc).abs() < 0.02,
            "case {case}: exact {exact}, monte carlo {mc}"
        );
    }
}

#[test]
fn constant_rate_survival_matches_closed_form() {
    let step = 0.1;
    let n = 121;
    let horizon = (n - 1) as f64 * step;
    for &p in &[1e-6, 1e-3, 0.01, 0.05, 0.2] {
        for &escape in &[0.0, 0.2, 1.0] {
            let scfg = SurvivalConfig {
                escape_rate: escape,
                dt: step,
            };
            let r = p / step;
            let total = r + escape;
            let expected = r / total * (1.0 - (-total * horizon).exp());
            let got = survival_risk_from_overlaps(&vec![p; n], step, &scfg);
            assert!(
                (got - expected).abs() < 1e-3,
                "p {p}, escape {escape}: {got} vs {expected}"
            );
        }
    }
}

#[test]
fn odd_circle_sets_cover_one_sigma_disc() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let cfg = RiskConfig::default();
    for k in [1, 3, 5] {
        let ucfg = UncertaintyConfig {
            k_circles: k,
            ..UncertaintyConfig::default()
        };
        for _ in 0..50 {
            let a = agent("a", random_path(&mut rng, 5, 40.0), rng.gen_range(0.0..25.0));
            let traj = predict(&a, &cfg.prediction);
            for (s, _) in traj.samples().step_by(7) {
                let g = gaussian_at(&traj, s, &ucfg);
                let sigma = g.covariance.xx.sqrt();
                let set = circles_at(&traj, s, &ucfg);
                for i in 0..64 {
                    let th = i as f64 / 64.0 * std::f64::consts::TAU;
                    let rim = g.mean + Point2::new(th.cos(), th.sin()) * (sigma * (1.0 - 1e-9));
                    assert!(set.contains(rim), "k {k}, s {s}: rim point {rim:?} uncovered");
                }
            }
        }
    }
}
