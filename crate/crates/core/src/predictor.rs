//! Post-impact box velocity from offline simulations of simultaneous
//! impacts at sampled contact heights, interpolated with Gaussian radial
//! basis functions.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::controller::{Controller, ControllerOptions, Variant};
use crate::dynamics::{inverse_kinematics, jacobians, BoxState, Pose2, NUM_CONTACTS};
use crate::error::{Error, Result};
use crate::fields::{ante_linear_field_unextended, AnteFieldParams};
use crate::sim::{Mode, Plant, World};

const MODEL_VERSION: u32 = 1;
const REGULARIZATION: f64 = 1e-10;
const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorConfig {
    /// Nodes per axis of the square offset grid.
    pub grid_size: usize,
    /// Grid spans `[-grid_extent, grid_extent]` on both offsets (m).
    pub grid_extent: f64,
    /// Shaping parameter ρ (1/m).
    pub rho: f64,
    /// Full contact must hold this long before the velocity is recorded (s).
    pub t_hold: f64,
    /// Give up on a sample after this long (s).
    pub horizon: f64,
    /// Plant used for the offline runs.
    pub mode: Mode,
    /// Add a small diagonal term instead of failing on an ill-conditioned system.
    pub regularize: bool,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            grid_size: 5,
            grid_extent: 0.06,
            rho: 10.0,
            t_hold: 0.02,
            horizon: 0.3,
            mode: Mode::Rigid,
            regularize: false,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size == 0 || !(self.grid_extent >= 0.0) || !(self.rho > 0.0) {
            return Err(Error::InvalidParameter(
                "predictor grid and rho must be positive".into(),
            ));
        }
        if !(self.t_hold >= 0.0 && self.horizon > self.t_hold) {
            return Err(Error::InvalidParameter("predictor horizon must exceed t_hold".into()));
        }
        Ok(())
    }

    /// Offsets of the square grid, `y₁` major.
    pub fn grid(&self) -> Vec<[f64; 2]> {
        let n = self.grid_size;
        let axis: Vec<f64> = (0..n)
            .map(|k| {
                if n == 1 {
                    0.0
                } else {
                    -self.grid_extent + 2.0 * self.grid_extent * k as f64 / (n - 1) as f64
                }
            })
            .collect();
        axis.iter().flat_map(|&a| axis.iter().map(move |&b| [a, b])).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImpactSample {
    /// Offsets of both end-effector frames along the box `y` axis (m).
    pub y_minus: [f64; 2],
    /// `(ṗ_x, ṗ_y, θ̇)` of the box once the grasp is established.
    pub dq_b_plus: Vector3<f64>,
}

/// Initial condition of one offline run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImpactConfig {
    pub y_minus: [f64; 2],
    pub world: World,
}

/// Both end effectors touching opposite faces of the box at the estimated
/// pose, at heights `y`, aligned with the face and moving with the
/// pre-impact field. Offsets out of reach are skipped with a warning.
pub fn sample_impact_configs(config: &Config, offsets: &[[f64; 2]]) -> Result<Vec<ImpactConfig>> {
    let ante = AnteFieldParams::from_config(&config.fields, &config.box_params)?;
    let plant = Plant::new(config, config.predictor.mode);
    let mut out = vec![];
    for y in offsets {
        match impact_config(config, &ante, &plant, *y) {
            Some(c) => out.push(c),
            None => log::warn!("offsets {y:?} are out of reach; sample skipped"),
        }
    }
    Ok(out)
}

fn impact_config(config: &Config, ante: &AnteFieldParams, plant: &Plant, y: [f64; 2]) -> Option<ImpactConfig> {
    let theta_b = ante.theta_b_est;
    let x_b = Vector2::new(theta_b.cos(), theta_b.sin());
    let y_b = Vector2::new(-theta_b.sin(), theta_b.cos());
    let half = config.box_params.half_width();
    let mut robots = [plant.rest_state(0, Vector3::zeros()); 2];
    for i in 0..2 {
        let side = if i == 0 { -1.0 } else { 1.0 };
        let p = ante.p_b_est + side * half * x_b + y[i] * y_b;
        let pose = Pose2 {
            p,
            theta: ante.nominal_heading(i),
        };
        let q = inverse_kinematics(&config.robots[i], &pose)?;
        let v = ante_linear_field_unextended(&p, i, ante).v;
        let j = jacobians(&config.robots[i], &q, &Vector3::zeros()).stacked();
        let dq = j.try_inverse()? * Vector3::new(v.x, v.y, 0.0);
        let mut s = plant.rest_state(i, q);
        s.dq = dq;
        s.motor_dq = dq;
        robots[i] = s;
    }
    Some(ImpactConfig {
        y_minus: y,
        world: World {
            robots,
            box_state: BoxState::at_rest(ante.p_b_est, theta_b),
        },
    })
}

/// Runs one impact configuration under the pre-impact controller until all
/// four gaps have stayed closed for `t_hold`; returns the box twist then.
pub fn simulate_impact(config: &Config, initial: &ImpactConfig) -> Result<ImpactSample> {
    let pc = &config.predictor;
    let plant = Plant::new(config, pc.mode);
    let mut controller = Controller::new(
        config.control_model()?,
        ControllerOptions {
            variant: Variant::NoImpactMap,
            lock_ante: true,
        },
        None,
    )?;
    let dt = config.controller.dt;
    let h = config.sim.dt_integrator;
    let substeps = config.sim.substeps(dt)?;
    let steps = (pc.horizon / dt).ceil() as usize;
    let mut world = initial.world;
    let mut closed_since: Option<f64> = None;
    for k in 0..steps {
        let t = k as f64 * dt;
        let out = controller.control_step(t, &world.robots);
        if let Some(f) = out.fault {
            return Err(Error::Config(format!(
                "offline run at {:?} faulted: {f}",
                initial.y_minus
            )));
        }
        for s in 0..substeps {
            let ts = t + (s + 1) as f64 * h;
            world = plant.try_step(&world, &out.tau, h, ts)?;
            let contacts = plant.contacts(&world);
            if contacts.iter().filter(|c| c.gap <= 0.0).count() == NUM_CONTACTS {
                let since = *closed_since.get_or_insert(ts);
                if ts - since >= pc.t_hold - 1e-12 {
                    let b = world.box_state;
                    return Ok(ImpactSample {
                        y_minus: initial.y_minus,
                        dq_b_plus: Vector3::new(b.dp.x, b.dp.y, b.dtheta),
                    });
                }
            } else {
                closed_since = None;
            }
        }
    }
    Err(Error::NoFullContact)
}

/// Offsets of offline runs that produced no sample, with the reason.
pub type FailedRuns = Vec<([f64; 2], Error)>;

/// Offline runs in parallel; failed runs are returned separately.
pub fn run_offline_sims(config: &Config, configs: &[ImpactConfig]) -> (Vec<ImpactSample>, FailedRuns) {
    let results: Vec<_> = configs
        .par_iter()
        .map(|c| (c.y_minus, simulate_impact(config, c)))
        .collect();
    let mut ok = vec![];
    let mut failed = vec![];
    for (y, r) in results {
        match r {
            Ok(s) => ok.push(s),
            Err(e) => {
                log::warn!("impact sample at {y:?} failed: {e}");
                failed.push((y, e));
            }
        }
    }
    (ok, failed)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub velocity: Vector3<f64>,
    /// The query lies outside the convex hull of the nodes.
    pub extrapolated: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RbfModel {
    pub rho: f64,
    pub samples: Vec<ImpactSample>,
    /// One row `wⱼᵀ` per node.
    pub weights: Vec<Vector3<f64>>,
    pub regularized: bool,
    /// Grid metadata `(grid_size, grid_extent)` when fitted on a grid.
    pub grid: Option<(usize, f64)>,
    hull: Vec<[f64; 2]>,
}

pub fn basis(rho: f64, r: f64) -> f64 {
    (-(rho * r) * (rho * r)).exp()
}

fn dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// `Φ_jk = φ(‖y_j − y_k‖)`.
pub fn kernel_matrix(nodes: &[[f64; 2]], rho: f64) -> DMatrix<f64> {
    let n = nodes.len();
    DMatrix::from_fn(n, n, |j, k| basis(rho, dist(&nodes[j], &nodes[k])))
}

/// Solves `Φ W = targets` by Cholesky. `regularize` permits a 1e-10
/// diagonal shift when `Φ` is too ill-conditioned to solve as is.
pub fn fit_rbf(samples: &[ImpactSample], rho: f64, regularize: bool) -> Result<RbfModel> {
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter("rho must be > 0".into()));
    }
    let nodes: Vec<[f64; 2]> = samples.iter().map(|s| s.y_minus).collect();
    for j in 0..nodes.len() {
        for k in 0..j {
            if dist(&nodes[j], &nodes[k]) == 0.0 {
                return Err(Error::InvalidParameter(format!("duplicate RBF node {:?}", nodes[j])));
            }
        }
    }
    let mut phi = kernel_matrix(&nodes, rho);
    let eig = phi.clone().symmetric_eigen().eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let mut regularized = false;
    if cond > MAX_CONDITION {
        if !regularize {
            return Err(Error::IllConditioned { cond });
        }
        phi += DMatrix::identity(nodes.len(), nodes.len()) * REGULARIZATION;
        regularized = true;
    }
    let chol = phi.cholesky().ok_or(Error::IllConditioned { cond })?;
    let targets = DMatrix::from_fn(samples.len(), 3, |j, c| samples[j].dq_b_plus[c]);
    let w = chol.solve(&targets);
    let weights = (0..samples.len())
        .map(|j| Vector3::new(w[(j, 0)], w[(j, 1)], w[(j, 2)]))
        .collect();
    Ok(RbfModel {
        rho,
        samples: samples.to_vec(),
        weights,
        regularized,
        grid: None,
        hull: convex_hull(&nodes),
    })
}

/// Samples, simulates and fits with the config's predictor settings.
pub fn fit_from_config(config: &Config) -> Result<(RbfModel, FailedRuns)> {
    let pc = &config.predictor;
    let configs = sample_impact_configs(config, &pc.grid())?;
    let (samples, failed) = run_offline_sims(config, &configs);
    let mut model = fit_rbf(&samples, pc.rho, pc.regularize)?;
    model.grid = Some((pc.grid_size, pc.grid_extent));
    Ok((model, failed))
}

impl RbfModel {
    pub fn predict(&self, y: [f64; 2]) -> Prediction {
        let velocity = self
            .samples
            .iter()
            .zip(&self.weights)
            .map(|(s, w)| w * basis(self.rho, dist(&y, &s.y_minus)))
            .fold(Vector3::zeros(), |a, b| a + b);
        Prediction {
            velocity,
            extrapolated: !inside_hull(&self.hull, &y),
        }
    }

    /// Largest `‖Φ W − targets‖∞`.
    pub fn fit_residual(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| (self.predict(s.y_minus).velocity - s.dq_b_plus).amax())
            .fold(0.0, f64::max)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# impact-map RBF model; phi(r) = exp(-(rho r)^2)");
        let _ = writeln!(s, "version {MODEL_VERSION}");
        let _ = writeln!(s, "rho {}", self.rho);
        let _ = writeln!(s, "n_exp {}", self.samples.len());
        match self.grid {
            Some((n, e)) => {
                let _ = writeln!(s, "grid {n} {e}");
            }
            None => {
                let _ = writeln!(s, "grid none");
            }
        }
        let _ = writeln!(s, "regularized {}", self.regularized);
        let _ = writeln!(s, "nodes  # y1 y2 dp_x dp_y dtheta");
        for n in &self.samples {
            let v = n.dq_b_plus;
            let _ = writeln!(s, "{} {} {} {} {}", n.y_minus[0], n.y_minus[1], v.x, v.y, v.z);
        }
        let _ = writeln!(s, "weights  # w_x w_y w_theta");
        for w in &self.weights {
            let _ = writeln!(s, "{} {} {}", w.x, w.y, w.z);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::ModelFormat(m.to_string());
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty());
        let mut field = |key: &str| -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| bad(&format!("missing {key}")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(bad(&format!("expected {key}, found {line:?}")));
            }
            Ok(parts.map(str::to_string).collect())
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("bad number {s:?}")));
        let version: u32 = field("version")?
            .first()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("bad version"))?;
        if version != MODEL_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let rho = num(field("rho")?.first().ok_or_else(|| bad("rho"))?)?;
        let n: usize = field("n_exp")?
            .first()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("bad n_exp"))?;
        let g = field("grid")?;
        let grid = match g.as_slice() {
            [none] if none == "none" => None,
            [size, extent] => Some((size.parse().map_err(|_| bad("bad grid size"))?, num(extent)?)),
            _ => return Err(bad("bad grid line")),
        };
        let regularized = match field("regularized")?.first().map(String::as_str) {
            Some("true") => true,
            Some("false") => false,
            _ => return Err(bad("bad regularized flag")),
        };
        field("nodes")?;
        let rows = |lines: &mut dyn Iterator<Item = &str>, count: usize, width: usize| -> Result<Vec<Vec<f64>>> {
            (0..count)
                .map(|_| {
                    let line = lines.next().ok_or_else(|| bad("truncated table"))?;
                    let vals = line.split_whitespace().map(num).collect::<Result<Vec<f64>>>()?;
                    if vals.len() != width {
                        return Err(bad(&format!("expected {width} columns in {line:?}")));
                    }
                    Ok(vals)
                })
                .collect()
        };
        let node_rows = rows(&mut lines, n, 5)?;
        let header = lines.next().ok_or_else(|| bad("missing weights"))?;
        if header != "weights" {
            return Err(bad("expected weights"));
        }
        let weight_rows = rows(&mut lines, n, 3)?;
        if lines.next().is_some() {
            return Err(bad("trailing data"));
        }
        let samples: Vec<ImpactSample> = node_rows
            .iter()
            .map(|r| ImpactSample {
                y_minus: [r[0], r[1]],
                dq_b_plus: Vector3::new(r[2], r[3], r[4]),
            })
            .collect();
        let nodes: Vec<[f64; 2]> = samples.iter().map(|s| s.y_minus).collect();
        Ok(RbfModel {
            rho,
            weights: weight_rows.iter().map(|r| Vector3::new(r[0], r[1], r[2])).collect(),
            samples,
            regularized,
            grid,
            hull: convex_hull(&nodes),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn cross(o: &[f64; 2], a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise hull (monotone chain); collinear points dropped.
fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a.partial_cmp(b).expect("finite nodes"));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut lower: Vec<[f64; 2]> = vec![];
    for q in &p {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], q) <= 0.0 {
            lower.pop();
        }
        lower.push(*q);
    }
    let mut upper: Vec<[f64; 2]> = vec![];
    for q in p.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], q) <= 0.0 {
            upper.pop();
        }
        upper.push(*q);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn inside_hull(hull: &[[f64; 2]], y: &[f64; 2]) -> bool {
    const EPS: f64 = 1e-12;
    match hull.len() {
        0 => false,
        1 => dist(&hull[0], y) <= EPS,
        2 => {
            let (a, b) = (&hull[0], &hull[1]);
            let len = dist(a, b);
            let t = ((y[0] - a[0]) * (b[0] - a[0]) + (y[1] - a[1]) * (b[1] - a[1])) / (len * len);
            (-EPS..=1.0 + EPS).contains(&t) && cross(a, b, y).abs() / len <= EPS
        }
        n => (0..n).all(|k| cross(&hull[k], &hull[(k + 1) % n], y) >= -EPS),
    }
}

/// `W` as a 3 × N matrix.
pub fn weight_matrix(model: &RbfModel) -> DMatrix<f64> {
    DMatrix::from_fn(3, model.weights.len(), |r, c| model.weights[c][r])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn synthetic(nodes: &[[f64; 2]]) -> Vec<ImpactSample> {
        nodes
            .iter()
            .map(|y| ImpactSample {
                y_minus: *y,
                dq_b_plus: Vector3::new(y[0] - y[1], 0.5 * (y[0] + y[1]), 10.0 * (y[0] - y[1])),
            })
            .collect()
    }

    #[test]
    fn single_node() {
        let s = synthetic(&[[0.01, -0.02]]);
        let m = fit_rbf(&s, 20.0, false).unwrap();
        assert_eq!(m.weights[0], s[0].dq_b_plus);
    }

    #[test]
    fn kernel_is_symmetric_with_unit_diagonal() {
        let grid = PredictorConfig::default().grid();
        let phi = kernel_matrix(&grid, 20.0);
        assert_eq!(phi, phi.transpose());
        assert!(phi.diagonal().iter().all(|d| *d == 1.0));
    }

    #[test]
    fn grid_counts() {
        let g = PredictorConfig::default().grid();
        assert_eq!(g.len(), 25);
        assert_eq!(g[0], [-0.06, -0.06]);
        assert_eq!(g[24], [0.06, 0.06]);
    }

    #[test]
    fn interpolates_at_nodes() {
        let s = synthetic(&PredictorConfig::default().grid());
        let m = fit_rbf(&s, 20.0, false).unwrap();
        assert!(m.fit_residual() < 1e-9, "{}", m.fit_residual());
        assert!(!m.predict([0.0, 0.0]).extrapolated);
    }

    #[test]
    fn far_queries_decay_and_are_flagged() {
        let m = fit_rbf(&synthetic(&PredictorConfig::default().grid()), 20.0, false).unwrap();
        let p = m.predict([2.0, -2.0]);
        assert!(p.extrapolated);
        assert!(p.velocity.norm() < 1e-100);
    }

    #[test]
    fn ill_conditioned_system_is_rejected() {
        let cfg = PredictorConfig {
            rho: 0.5,
            ..PredictorConfig::default()
        };
        let s = synthetic(&cfg.grid());
        assert!(matches!(fit_rbf(&s, cfg.rho, false), Err(Error::IllConditioned { .. })));
        let m = fit_rbf(&s, cfg.rho, true).unwrap();
        assert!(m.regularized);
    }

    #[test]
    fn duplicate_nodes_rejected() {
        let s = synthetic(&[[0.0, 0.0], [0.0, 0.0]]);
        assert!(fit_rbf(&s, 20.0, false).is_err());
        assert!(matches!(fit_rbf(&[], 20.0, false), Err(Error::NoSamples)));
    }

    #[test]
    fn text_round_trip() {
        let mut m = fit_rbf(&synthetic(&PredictorConfig::default().grid()), 20.0, false).unwrap();
        m.grid = Some((5, 0.06));
        let back = RbfModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert!(RbfModel::from_text(&m.to_text().replace("version 1", "version 9")).is_err());
    }

    #[test]
    fn hull_membership() {
        let hull = convex_hull(&PredictorConfig::default().grid());
        assert_eq!(hull.len(), 4);
        assert!(inside_hull(&hull, &[0.06, 0.0]));
        assert!(!inside_hull(&hull, &[0.0601, 0.0]));
    }

    #[test]
    fn symmetric_configuration_is_mirror_symmetric() {
        let config = Config::default();
        let c = sample_impact_configs(&config, &[[0.0, 0.0]]).unwrap();
        let plant = Plant::new(&config, Mode::Rigid);
        let pts = plant.contacts(&c[0].world);
        for p in &pts {
            assert!(p.gap.abs() < 1e-9);
        }
        let ee: Vec<_> = (0..2)
            .map(|i| crate::sim::ee_twist(&config.robots[i], &c[0].world.robots[i]))
            .collect();
        assert!((ee[0].0.p.x + ee[1].0.p.x).abs() < 1e-12);
        assert!((ee[0].0.p.y - ee[1].0.p.y).abs() < 1e-12);
        assert!((ee[0].1.x + ee[1].1.x).abs() < 1e-12);
        assert!(ee[0].1.z.abs() < 1e-12);
    }

    #[test]
    fn offsets_place_both_faces_in_contact() {
        let config = Config::default();
        let grid = config.predictor.grid();
        let cs = sample_impact_configs(&config, &grid).unwrap();
        assert_eq!(cs.len(), 25);
        let plant = Plant::new(&config, Mode::Rigid);
        for c in &cs {
            assert!(plant.contacts(&c.world).iter().all(|p| p.gap.abs() < 1e-9));
        }
    }

    /// Mirroring the scene about the box's vertical axis swaps the offsets
    /// and flips `ṗ_x` and `θ̇`; `ṗ_y` comes from the arms' own coupling and
    /// is not cancelled by the symmetry.
    #[test]
    fn swapped_offsets_give_mirrored_impacts() {
        let config = Config::default();
        let cs = sample_impact_configs(&config, &[[0.0, 0.0], [0.03, -0.06], [-0.06, 0.03]]).unwrap();
        let sym = simulate_impact(&config, &cs[0]).unwrap().dq_b_plus;
        assert!(sym.x.abs() < 1e-9 && sym.z.abs() < 1e-9, "{sym:?}");
        let a = simulate_impact(&config, &cs[1]).unwrap().dq_b_plus;
        let b = simulate_impact(&config, &cs[2]).unwrap().dq_b_plus;
        assert!((a - Vector3::new(-b.x, b.y, -b.z)).amax() < 1e-9, "{a:?} {b:?}");
        assert!(a.z.abs() > 1e-3);
        assert_eq!(simulate_impact(&config, &cs[1]).unwrap().dq_b_plus, a);
    }

    #[test]
    fn default_grid_reaches_full_contact() {
        let config = Config::default();
        let cs = sample_impact_configs(&config, &config.predictor.grid()).unwrap();
        let (ok, failed) = run_offline_sims(&config, &cs);
        assert!(failed.is_empty(), "{failed:?}");
        assert_eq!(ok.len(), 25);
    }

    proptest! {
        #[test]
        fn prediction_is_lipschitz_along_a_line(a in -0.06f64..0.06, b in -0.06f64..0.06) {
            let m = fit_rbf(&synthetic(&PredictorConfig::default().grid()), 20.0, false).unwrap();
            let h = 1e-4;
            let p0 = m.predict([a, b]).velocity;
            let p1 = m.predict([a + h, b]).velocity;
            // Bound from the weight magnitudes and the basis slope.
            let slope = m.weights.iter().map(|w| w.norm()).sum::<f64>() * 20.0 * (2.0f64).sqrt();
            prop_assert!((p1 - p0).norm() <= slope * h);
        }
    }
}
