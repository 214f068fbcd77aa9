//! Direct Adam optimisation of point positions against a target mesh.
//!
//! This stands in for network training: the free parameters are the output
//! point coordinates themselves, so the behaviour observed is that of the
//! loss landscape alone. One optimiser step plays the role of one epoch in
//! the learning-rate schedule.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Error;
use crate::losses::{combined_loss_with, ComponentValues, LossWeights, TargetBundle};
use crate::mesh::PointCloud;
use crate::spatial::correspondences;
use crate::Vec3;

/// Learning rate used whenever the quadric term is active.
pub const QUADRIC_LEARNING_RATE: f64 = 1e-4;
/// Learning rate for every other loss combination.
pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;
pub const LR_DECAY_FACTOR: f64 = 0.8;
pub const LR_DECAY_EVERY: usize = 100;

/// Named loss combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum LossKind {
    Chamfer,
    Quadric,
    Normal,
    Surface,
    ChamferQuadric,
    ChamferSurface,
    ChamferNormal,
}

impl LossKind {
    pub const ALL: [LossKind; 7] = [
        LossKind::Chamfer,
        LossKind::Quadric,
        LossKind::Normal,
        LossKind::Surface,
        LossKind::ChamferQuadric,
        LossKind::ChamferSurface,
        LossKind::ChamferNormal,
    ];

    /// Equal unit weights on every active term.
    pub fn weights(self) -> LossWeights {
        match self {
            LossKind::Chamfer => LossWeights::new(1.0, 0.0, 0.0, 0.0),
            LossKind::Quadric => LossWeights::new(0.0, 1.0, 0.0, 0.0),
            LossKind::Normal => LossWeights::new(0.0, 0.0, 1.0, 0.0),
            LossKind::Surface => LossWeights::new(0.0, 0.0, 0.0, 1.0),
            LossKind::ChamferQuadric => LossWeights::new(1.0, 1.0, 0.0, 0.0),
            LossKind::ChamferSurface => LossWeights::new(1.0, 0.0, 0.0, 1.0),
            LossKind::ChamferNormal => LossWeights::new(1.0, 0.0, 1.0, 0.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Chamfer => "chamfer",
            LossKind::Quadric => "quadric",
            LossKind::Normal => "normal",
            LossKind::Surface => "surface",
            LossKind::ChamferQuadric => "chamfer+quadric",
            LossKind::ChamferSurface => "chamfer+surface",
            LossKind::ChamferNormal => "chamfer+normal",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown loss preset {s:?}")))
    }
}

impl From<LossKind> for String {
    fn from(k: LossKind) -> String {
        k.name().to_string()
    }
}

impl TryFrom<String> for LossKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self, Error> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// Target vertices (cycled if more points are requested) plus Gaussian
    /// jitter of standard deviation `jitter_sigma`.
    JitteredVertices,
    /// Uniform on the bounding sphere of the target.
    UniformSphere,
    /// Caller supplies the initial cloud through [`fit_points_from`].
    Given,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub weights: LossWeights,
    pub steps: usize,
    pub learning_rate: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub init: InitKind,
    pub jitter_sigma: f64,
    pub seed: u64,
    /// Output cloud size; defaults to the target vertex count.
    #[serde(default)]
    pub num_points: Option<usize>,
    /// Match correspondences once at the start and keep them.
    #[serde(default)]
    pub freeze_correspondences: bool,
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), Error> {
        self.weights.validate()?;
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.steps == 0 {
            return bad("steps must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return bad("lr decay factor must lie in (0, 1]");
        }
        if self.lr_decay_every == 0 {
            return bad("lr decay interval must be at least 1");
        }
        if !(self.adam_beta1 > 0.0 && self.adam_beta1 < 1.0 && self.adam_beta2 > 0.0 && self.adam_beta2 < 1.0) {
            return bad("Adam betas must lie in (0, 1)");
        }
        if self.adam_epsilon.is_nan() || self.adam_epsilon <= 0.0 {
            return bad("Adam epsilon must be positive");
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return bad("jitter sigma must be finite and non-negative");
        }
        if self.num_points == Some(0) {
            return bad("num_points must be positive");
        }
        Ok(())
    }

    /// Learning rate in effect at `step` (0-based).
    pub fn lr_at(&self, step: usize) -> f64 {
        let decays = (step / self.lr_decay_every) as i32;
        self.learning_rate * self.lr_decay_factor.powi(decays)
    }
}

/// Schedule defaults for a loss combination: 1e-4 when the quadric term is
/// active and 1e-3 otherwise, multiplied by 0.8 every 100 steps, with the
/// usual Adam constants.
pub fn default_config(kind: LossKind) -> FitConfig {
    let weights = kind.weights();
    FitConfig {
        weights,
        steps: 1000,
        learning_rate: if weights.quadric > 0.0 { QUADRIC_LEARNING_RATE } else { DEFAULT_LEARNING_RATE },
        lr_decay_factor: LR_DECAY_FACTOR,
        lr_decay_every: LR_DECAY_EVERY,
        adam_beta1: 0.9,
        adam_beta2: 0.999,
        adam_epsilon: 1e-8,
        init: InitKind::JitteredVertices,
        jitter_sigma: 0.05,
        seed: 42,
        num_points: None,
        freeze_correspondences: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub total: f64,
    pub components: ComponentValues,
}

/// Loss history, one record per step evaluated before that step's update,
/// and the cloud after the final update.
#[derive(Debug, Clone, PartialEq)]
pub struct FitTrace {
    pub records: Vec<StepRecord>,
    pub initial: PointCloud,
    pub final_cloud: PointCloud,
}

impl FitTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `step,lr,total,chamfer,quadric,normal,surface`, floats in shortest
    /// round-trip form.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "step,lr,total,chamfer,quadric,normal,surface")?;
        for r in &self.records {
            let c = &r.components;
            writeln!(
                out,
                "{},{:?},{:?},{:?},{:?},{:?},{:?}",
                r.step, r.lr, r.total, c.chamfer, c.quadric, c.normal, c.surface
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error("non-finite {component} at step {step}")]
    NonFiniteLoss { step: usize, component: String, trace: Box<FitTrace> },

    #[error(transparent)]
    Loss(#[from] Error),
}

/// Optimises a cloud initialised according to `config.init`.
pub fn fit_points(target: &TargetBundle, config: &FitConfig) -> Result<FitTrace, FitError> {
    config.validate()?;
    let initial = initial_cloud(target, config)?;
    run(target, config, initial)
}

/// Optimises the given starting cloud; `config.init` is ignored.
pub fn fit_points_from(target: &TargetBundle, config: &FitConfig, initial: PointCloud) -> Result<FitTrace, FitError> {
    config.validate()?;
    if initial.is_empty() {
        return Err(Error::EmptyInput.into());
    }
    run(target, config, initial)
}

pub fn initial_cloud(target: &TargetBundle, config: &FitConfig) -> Result<PointCloud, Error> {
    let verts = target.vertices.points();
    if verts.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = config.num_points.unwrap_or(verts.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let points = match config.init {
        InitKind::JitteredVertices => {
            let jitter = Normal::new(0.0, config.jitter_sigma)
                .map_err(|e| Error::InvalidConfig(format!("jitter sigma: {e}")))?;
            (0..n)
                .map(|i| {
                    verts[i % verts.len()]
                        + Vec3::new(jitter.sample(&mut rng), jitter.sample(&mut rng), jitter.sample(&mut rng))
                })
                .collect()
        }
        InitKind::UniformSphere => {
            let mut lo = verts[0];
            let mut hi = verts[0];
            for v in verts {
                lo = lo.inf(v);
                hi = hi.sup(v);
            }
            let center = (lo + hi) * 0.5;
            let radius = verts.iter().map(|v| (v - center).norm()).fold(0.0, f64::max);
            (0..n)
                .map(|_| loop {
                    let d = Vec3::new(
                        StandardNormal.sample(&mut rng),
                        StandardNormal.sample(&mut rng),
                        StandardNormal.sample(&mut rng),
                    );
                    let len: f64 = d.norm();
                    if len > 1e-12 {
                        break center + d * (radius / len);
                    }
                })
                .collect()
        }
        InitKind::Given => {
            return Err(Error::InvalidConfig("init 'given' requires an explicit starting cloud".into()));
        }
    };
    PointCloud::new(points)
}

struct Adam {
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    m: Vec<Vec3>,
    v: Vec<Vec3>,
    t: i32,
}

impl Adam {
    fn new(n: usize, config: &FitConfig) -> Self {
        Self {
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
            epsilon: config.adam_epsilon,
            m: vec![Vec3::zeros(); n],
            v: vec![Vec3::zeros(); n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [Vec3], grads: &[Vec3], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = *m * self.beta1 + g * (1.0 - self.beta1);
            *v = *v * self.beta2 + g.component_mul(g) * (1.0 - self.beta2);
            for k in 0..3 {
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

fn run(target: &TargetBundle, config: &FitConfig, initial: PointCloud) -> Result<FitTrace, FitError> {
    let mut points = initial.points().to_vec();
    let mut adam = Adam::new(points.len(), config);
    let mut records = Vec::with_capacity(config.steps);
    let frozen = if config.freeze_correspondences {
        Some(correspondences(&initial, &target.vertices)?)
    } else {
        None
    };

    for step in 0..config.steps {
        let cloud = PointCloud::new(points.clone()).map_err(|_| FitError::NonFiniteLoss {
            step,
            component: "position".into(),
            trace: Box::new(partial_trace(&records, &initial, &points)),
        })?;
        let corr = match &frozen {
            Some(c) => c.clone(),
            None => correspondences(&cloud, &target.vertices)?,
        };
        let loss = combined_loss_with(&cloud, target, &config.weights, &corr)?;
        let lr = config.lr_at(step);
        let record = StepRecord { step, lr, total: loss.total.scalar, components: loss.components };
        let offending = loss
            .components
            .iter()
            .chain(std::iter::once(("total", loss.total.scalar)))
            .find(|(_, v)| !v.is_finite())
            .map(|(name, _)| name.to_string())
            .or_else(|| {
                loss.total
                    .gradients
                    .iter()
                    .any(|g| !g.iter().all(|c| c.is_finite()))
                    .then(|| "gradient".to_string())
            });
        records.push(record);
        if let Some(component) = offending {
            return Err(FitError::NonFiniteLoss {
                step,
                component,
                trace: Box::new(partial_trace(&records, &initial, &points)),
            });
        }
        adam.step(&mut points, &loss.total.gradients, lr);
    }

    match PointCloud::new(points.clone()) {
        Ok(final_cloud) => Ok(FitTrace { records, initial, final_cloud }),
        Err(_) => Err(FitError::NonFiniteLoss {
            step: config.steps,
            component: "position".into(),
            trace: Box::new(partial_trace(&records, &initial, &points)),
        }),
    }
}

fn partial_trace(records: &[StepRecord], initial: &PointCloud, points: &[Vec3]) -> FitTrace {
    let finite: Vec<Vec3> = points.iter().map(|p| p.map(|c| if c.is_finite() { c } else { 0.0 })).collect();
    FitTrace {
        records: records.to_vec(),
        initial: initial.clone(),
        final_cloud: PointCloud::new(finite).unwrap_or_default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::chamfer_loss;
    use crate::shapes;

    #[test]
    fn default_schedules() {
        assert_eq!(default_config(LossKind::Chamfer).learning_rate, 1e-3);
        assert_eq!(default_config(LossKind::ChamferQuadric).learning_rate, 1e-4);
        assert_eq!(default_config(LossKind::Quadric).learning_rate, 1e-4);
        assert_eq!(default_config(LossKind::ChamferNormal).learning_rate, 1e-3);
        for kind in LossKind::ALL {
            let c = default_config(kind);
            assert_eq!((c.lr_decay_factor, c.lr_decay_every), (0.8, 100));
            assert_eq!((c.adam_beta1, c.adam_beta2, c.adam_epsilon), (0.9, 0.999, 1e-8));
            c.validate().unwrap();
        }
    }

    #[test]
    fn lr_decays_stepwise() {
        let c = default_config(LossKind::Chamfer);
        assert_eq!(c.lr_at(0), 1e-3);
        assert_eq!(c.lr_at(99), 1e-3);
        assert!((c.lr_at(100) - 8e-4).abs() < 1e-18);
        assert!((c.lr_at(250) - 1e-3 * 0.64).abs() < 1e-18);
    }

    #[test]
    fn preset_names_round_trip() {
        for kind in LossKind::ALL {
            assert_eq!(kind.name().parse::<LossKind>().unwrap(), kind);
        }
        assert!("cd".parse::<LossKind>().is_err());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = default_config(LossKind::Chamfer);
        let mut c = base.clone();
        c.steps = 0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.adam_beta1 = 1.0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.lr_decay_factor = 0.0;
        assert!(c.validate().is_err());
        let mut c = base;
        c.init = InitKind::Given;
        let target = TargetBundle::prepare(shapes::cube(1)).unwrap();
        assert!(fit_points(&target, &c).is_err());
    }

    #[test]
    fn quadric_fit_from_exact_vertices_stays_put() {
        let target = TargetBundle::prepare(shapes::cube(2)).unwrap();
        let mut config = default_config(LossKind::Quadric);
        config.steps = 50;
        let trace = fit_points_from(&target, &config, target.vertices.clone()).unwrap();
        assert_eq!(trace.len(), 50);
        assert!(trace.records.iter().all(|r| r.total < 1e-7));
        for (a, b) in trace.final_cloud.points().iter().zip(target.vertices.points()) {
            assert!((a - b).norm() < 1e-6);
        }
    }

    #[test]
    fn chamfer_fit_on_cube_descends() {
        let target = TargetBundle::prepare(shapes::cube(1)).unwrap();
        let config = default_config(LossKind::Chamfer);
        let trace = fit_points(&target, &config).unwrap();
        let initial = chamfer_loss(&trace.initial, &target.vertices).unwrap().scalar;
        let last = chamfer_loss(&trace.final_cloud, &target.vertices).unwrap().scalar;
        assert!(last < 0.5 * initial, "{last} vs {initial}");
    }

    #[test]
    fn fit_is_deterministic() {
        let target = TargetBundle::prepare(shapes::cube(2)).unwrap();
        let mut config = default_config(LossKind::ChamferQuadric);
        config.steps = 30;
        let a = fit_points(&target, &config).unwrap();
        let b = fit_points(&target, &config).unwrap();
        assert_eq!(a, b);
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
        assert_eq!(String::from_utf8(ca).unwrap().lines().count(), 31);
    }

    #[test]
    fn cycled_initialisation() {
        let target = TargetBundle::prepare(shapes::cube(1)).unwrap();
        let mut config = default_config(LossKind::Chamfer);
        config.num_points = Some(20);
        config.jitter_sigma = 0.0;
        let cloud = initial_cloud(&target, &config).unwrap();
        assert_eq!(cloud.len(), 20);
        assert_eq!(cloud[8], target.vertices[0]);

        config.init = InitKind::UniformSphere;
        let sphere = initial_cloud(&target, &config).unwrap();
        let c = Vec3::repeat(0.5);
        for p in sphere.points() {
            assert!(((p - c).norm() - 0.75f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn frozen_correspondences_are_honoured() {
        let target = TargetBundle::prepare(shapes::grid(3, 3)).unwrap();
        let mut config = default_config(LossKind::Quadric);
        config.freeze_correspondences = true;
        config.steps = 5;
        let trace = fit_points(&target, &config).unwrap();
        assert_eq!(trace.len(), 5);
    }
}
