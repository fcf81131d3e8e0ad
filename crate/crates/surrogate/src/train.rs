//! Training loop: displacement, Sobolev and material-penalty losses balanced
//! by gradient normalization, network updated by Adam.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SurrogateError};
use crate::gradnorm::{gradnorm_update, GradNormStep, TaskWeights};
use crate::losses::{
    displacement_loss, homogeneity_penalty, projection_covariance, sample_unit_sphere, sobolev_loss, weight_decay,
};
use crate::model::SurrogateModel;
use crate::network::{Architecture, Batch, NetworkParameters};
use crate::normalize::NormalizationStats;
use crate::optim::{Adam, AdamConfig, OptimizerState};

pub const TASKS: usize = 3;

/// Realization of the third (material) task loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaterialPenalty {
    /// Response at modulus `cE` must equal the response at `E` divided by `c`.
    Homogeneity,
    /// Squared weights of the material sub-network.
    WeightDecay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub architecture: Architecture,
    /// Asymmetry of the balancing targets.
    pub alpha: f64,
    pub epochs: usize,
    /// Samples per step; `None` uses the whole set.
    pub batch_size: Option<usize>,
    pub learning_rate: f64,
    pub task_learning_rate: f64,
    /// Training stops once any parameter exceeds this magnitude.
    pub divergence_threshold: f64,
    pub seed: u64,
    pub penalty: MaterialPenalty,
    /// Range of the log-uniform modulus factor `c`.
    pub scale_range: [f64; 2],
    /// Lower bound on a task weight before renormalization.
    pub task_weight_floor: f64,
    pub compliance_scaling: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::default(),
            alpha: 1.5,
            epochs: 2000,
            batch_size: None,
            learning_rate: 1e-3,
            task_learning_rate: 2.5e-2,
            divergence_threshold: 1e3,
            seed: 0,
            penalty: MaterialPenalty::Homogeneity,
            scale_range: [0.5, 2.0],
            task_weight_floor: 1e-6,
            compliance_scaling: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SobolevConfig {
    /// Derivative order; only first derivatives are supported.
    pub order: usize,
    /// Unit-sphere directions drawn per step.
    pub draws: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for SobolevConfig {
    fn default() -> Self {
        Self {
            order: 1,
            draws: 8,
            dim: 2,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self, sobolev: &SobolevConfig) -> Result<()> {
        let bad = |m: String| Err(SurrogateError::Config(m));
        self.architecture.validate()?;
        if self.alpha.is_nan() || self.alpha < 0.0 {
            return bad(format!("alpha must be non-negative, got {}", self.alpha));
        }
        if self.divergence_threshold.is_nan() || self.divergence_threshold <= 0.0 {
            return bad("divergence threshold must be positive".into());
        }
        if self.epochs == 0 || self.batch_size == Some(0) {
            return bad("epochs and batch size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.task_learning_rate >= 0.0) {
            return bad("learning rates must be positive".into());
        }
        let [lo, hi] = self.scale_range;
        if !(lo > 0.0 && hi >= lo) {
            return bad("scale range must be positive and ordered".into());
        }
        if self.task_weight_floor.is_nan() || self.task_weight_floor <= 0.0 {
            return bad("task weight floor must be positive".into());
        }
        if sobolev.order != 1 {
            return bad(format!(
                "only first-order Sobolev terms are supported, got {}",
                sobolev.order
            ));
        }
        if sobolev.draws == 0 {
            return bad("at least one projection draw is needed".into());
        }
        if sobolev.dim != self.architecture.coordinate_dims {
            return bad(format!(
                "Sobolev dimension {} differs from the {} coordinate features",
                sobolev.dim, self.architecture.coordinate_dims
            ));
        }
        Ok(())
    }
}

/// Physical training data: unique node rows `(x, y, ...)`, unique material
/// rows `(E, A, I)`, the evaluated pairs, nodal targets and their
/// derivatives along each coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub nodes: Array2<f64>,
    pub materials: Array2<f64>,
    pub pairs: Vec<(usize, usize)>,
    pub targets: Array2<f64>,
    /// `jacobians[k][(row, output)] = d output / d x_k`.
    pub jacobians: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
    /// `sum theta_i L_i` with the weights in effect during the epoch.
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TrainOutcome {
    Completed,
    Diverged { epoch: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingState {
    pub params: NetworkParameters,
    pub optimizer: OptimizerState,
    pub weights: TaskWeights,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone)]
pub struct TrainingResult {
    pub model: SurrogateModel,
    pub state: TrainingState,
    pub outcome: TrainOutcome,
}

/// Normalized data of one optimization step.
struct StepData {
    batch: Batch,
    targets: Array2<f64>,
    jacobians: Vec<Array2<f64>>,
    /// Physical material rows of `batch.materials`.
    materials: Array2<f64>,
}

/// Loss values, balancing norms and the weighted total gradient of a step.
pub struct StepEvaluation {
    pub losses: [f64; TASKS],
    /// `||grad_W L_i||` over the shared head layer.
    pub grad_norms: [f64; TASKS],
    /// Per-task parameter gradients, when requested.
    pub task_gradients: Option<[NetworkParameters; TASKS]>,
    pub total_gradient: NetworkParameters,
}

/// Trains from a seeded Xavier initialization.
pub fn train(set: &TrainingSet, cfg: &TrainingConfig, sobolev: &SobolevConfig) -> Result<TrainingResult> {
    cfg.validate(sobolev)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let params = NetworkParameters::new(&cfg.architecture, &mut rng)?;
    train_from(set, cfg, sobolev, params)
}

/// Trains starting from the given parameters.
pub fn train_from(
    set: &TrainingSet,
    cfg: &TrainingConfig,
    sobolev: &SobolevConfig,
    params: NetworkParameters,
) -> Result<TrainingResult> {
    cfg.validate(sobolev)?;
    params.check_widths()?;
    let mut trainer = Trainer::new(set, cfg, sobolev, params)?;
    let outcome = trainer.run()?;
    let Trainer { stats, state, .. } = trainer;
    Ok(TrainingResult {
        model: SurrogateModel {
            params: state.params.clone(),
            normalization: stats,
        },
        state,
        outcome,
    })
}

/// Stateful training driver; exposed so single steps can be inspected.
pub struct Trainer<'a> {
    set: &'a TrainingSet,
    cfg: &'a TrainingConfig,
    sobolev: &'a SobolevConfig,
    pub stats: NormalizationStats,
    pub state: TrainingState,
    /// Balancing quantities of the most recent step.
    pub last_balance: Option<GradNormStep>,
    nodes: Array2<f64>,
    materials: Array2<f64>,
    targets: Array2<f64>,
    jacobians: Vec<Array2<f64>>,
    rows_by_sample: Vec<Vec<usize>>,
    full: Option<StepData>,
    penalty_rng: ChaCha8Rng,
    sphere_rng: ChaCha8Rng,
    shuffle_rng: ChaCha8Rng,
}

impl<'a> Trainer<'a> {
    pub fn new(
        set: &'a TrainingSet,
        cfg: &'a TrainingConfig,
        sobolev: &'a SobolevConfig,
        params: NetworkParameters,
    ) -> Result<Self> {
        if set.pairs.is_empty() {
            return Err(SurrogateError::EmptyBatch);
        }
        if set.jacobians.len() != sobolev.dim {
            return Err(SurrogateError::MissingDerivatives);
        }
        let width = |what, expected, got| {
            if expected == got {
                Ok(())
            } else {
                Err(SurrogateError::WidthMismatch { what, expected, got })
            }
        };
        width("node features", params.node.input_width(), set.nodes.ncols())?;
        width(
            "material features",
            params.material.input_width(),
            set.materials.ncols(),
        )?;
        width("targets", params.head.output_width(), set.targets.ncols())?;
        width("target rows", set.pairs.len(), set.targets.nrows())?;
        for j in &set.jacobians {
            width("derivative rows", set.pairs.len(), j.nrows())?;
        }

        let stats = NormalizationStats::fit(
            &set.nodes,
            &set.materials,
            &set.pairs,
            &set.targets,
            cfg.compliance_scaling,
        );
        let nodes = map_rows(&set.nodes, |r| stats.normalize_node(r));
        let materials = map_rows(&set.materials, |r| stats.normalize_material(r));
        let mut targets = set.targets.clone();
        let mut jacobians = set.jacobians.clone();
        for (r, &(_, mi)) in set.pairs.iter().enumerate() {
            let m = set.materials.row(mi).to_vec();
            let enc = stats.encode_output(set.targets.row(r).as_slice().expect("row"), &m);
            targets.row_mut(r).assign(&ndarray::Array1::from(enc));
            for (k, jac) in jacobians.iter_mut().enumerate() {
                for o in 0..jac.ncols() {
                    jac[(r, o)] *= stats.jacobian_factor(o, k, &m);
                }
            }
        }
        let mut rows_by_sample = vec![Vec::new(); set.materials.nrows()];
        for (r, &(_, mi)) in set.pairs.iter().enumerate() {
            rows_by_sample[mi].push(r);
        }
        let size = params.param_count();
        let mut sphere_rng = ChaCha8Rng::seed_from_u64(sobolev.seed);
        sphere_rng.set_stream(2);
        let mut penalty_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        penalty_rng.set_stream(1);
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        shuffle_rng.set_stream(3);
        let mut trainer = Self {
            set,
            cfg,
            sobolev,
            stats,
            state: TrainingState {
                params,
                optimizer: OptimizerState {
                    adam: Adam::new(
                        size,
                        AdamConfig {
                            learning_rate: cfg.learning_rate,
                            ..AdamConfig::default()
                        },
                    ),
                    task_learning_rate: cfg.task_learning_rate,
                },
                weights: TaskWeights::new(TASKS),
                history: Vec::new(),
            },
            last_balance: None,
            nodes,
            materials,
            targets,
            jacobians,
            rows_by_sample,
            full: None,
            penalty_rng,
            sphere_rng,
            shuffle_rng,
        };
        let all: Vec<usize> = (0..set.materials.nrows()).collect();
        if cfg.batch_size.is_none_or(|b| b >= all.len()) {
            trainer.full = Some(trainer.step_data(&all));
        }
        Ok(trainer)
    }

    fn step_data(&self, samples: &[usize]) -> StepData {
        let mut pairs = Vec::new();
        let mut rows = Vec::new();
        for (local, &mi) in samples.iter().enumerate() {
            for &r in &self.rows_by_sample[mi] {
                pairs.push((self.set.pairs[r].0, local));
                rows.push(r);
            }
        }
        StepData {
            batch: Batch {
                nodes: self.nodes.clone(),
                materials: self.materials.select(Axis(0), samples),
                pairs,
            },
            targets: self.targets.select(Axis(0), &rows),
            jacobians: self.jacobians.iter().map(|j| j.select(Axis(0), &rows)).collect(),
            materials: self.set.materials.select(Axis(0), samples),
        }
    }

    /// Runs every remaining epoch.
    pub fn run(&mut self) -> Result<TrainOutcome> {
        for epoch in self.state.history.len()..self.cfg.epochs {
            if let Some(reason) = self.epoch(epoch)? {
                return Ok(TrainOutcome::Diverged { epoch, reason });
            }
        }
        Ok(TrainOutcome::Completed)
    }

    /// One epoch; returns a divergence reason if training must stop.
    pub fn epoch(&mut self, epoch: usize) -> Result<Option<String>> {
        let groups: Vec<Vec<usize>> = match self.cfg.batch_size {
            Some(b) if self.full.is_none() => {
                let mut ids: Vec<usize> = (0..self.set.materials.nrows()).collect();
                ids.shuffle(&mut self.shuffle_rng);
                ids.chunks(b).map(<[usize]>::to_vec).collect()
            }
            _ => vec![Vec::new()],
        };
        let steps = groups.len() as f64;
        let mut record = EpochRecord {
            epoch,
            l1: 0.0,
            l2: 0.0,
            l3: 0.0,
            theta1: 0.0,
            theta2: 0.0,
            theta3: 0.0,
            g1: 0.0,
            g2: 0.0,
            g3: 0.0,
            total: 0.0,
        };
        let mut stop = None;
        for group in &groups {
            let owned;
            let data = match &self.full {
                Some(d) => d,
                None => {
                    owned = self.step_data(group);
                    &owned
                }
            };
            let theta = self.state.weights.theta.clone();
            let eval = evaluate_step(
                &self.state.params,
                data,
                &theta,
                self.cfg,
                self.sobolev,
                &self.stats,
                &mut self.penalty_rng,
                &mut self.sphere_rng,
                false,
            )?;
            let total: f64 = theta.iter().zip(&eval.losses).map(|(t, l)| t * l).sum();
            record.l1 += eval.losses[0] / steps;
            record.l2 += eval.losses[1] / steps;
            record.l3 += eval.losses[2] / steps;
            record.total += total / steps;
            record.g1 += theta[0] * eval.grad_norms[0] / steps;
            record.g2 += theta[1] * eval.grad_norms[1] / steps;
            record.g3 += theta[2] * eval.grad_norms[2] / steps;
            if !total.is_finite() {
                stop = Some("non-finite loss".to_string());
                break;
            }

            self.last_balance = Some(gradnorm_update(
                &mut self.state.weights,
                &eval.losses,
                &eval.grad_norms,
                self.cfg.alpha,
                self.state.optimizer.task_learning_rate,
                self.cfg.task_weight_floor,
            ));

            let mut flat = self.state.params.flatten();
            match self
                .state
                .optimizer
                .adam
                .step(&mut flat, &eval.total_gradient.flatten())
            {
                Ok(()) => {}
                Err(SurrogateError::NonFiniteGradient(i)) => {
                    stop = Some(format!("non-finite gradient at parameter {i}"));
                    break;
                }
                Err(e) => return Err(e),
            }
            self.state.params.assign_flat(&flat);
            let largest = self.state.params.max_abs();
            if largest.is_nan() || largest > self.cfg.divergence_threshold {
                stop = Some(format!(
                    "parameter magnitude {largest} exceeds {}",
                    self.cfg.divergence_threshold
                ));
                break;
            }
        }
        let w = &self.state.weights.theta;
        (record.theta1, record.theta2, record.theta3) = (w[0], w[1], w[2]);
        self.state.history.push(record);
        Ok(stop)
    }

    /// Evaluates the losses and gradients of a full-set step with the current
    /// state without updating anything (the random draws do advance).
    pub fn evaluate_full(&mut self, with_task_gradients: bool) -> Result<StepEvaluation> {
        let all: Vec<usize> = (0..self.set.materials.nrows()).collect();
        let data = self.step_data(&all);
        let theta = self.state.weights.theta.clone();
        evaluate_step(
            &self.state.params,
            &data,
            &theta,
            self.cfg,
            self.sobolev,
            &self.stats,
            &mut self.penalty_rng,
            &mut self.sphere_rng,
            with_task_gradients,
        )
    }
}

fn map_rows(a: &Array2<f64>, f: impl Fn(&[f64]) -> Vec<f64>) -> Array2<f64> {
    let mut out = a.clone();
    for (mut dst, src) in out.rows_mut().into_iter().zip(a.rows()) {
        dst.assign(&ndarray::Array1::from(f(src.as_slice().expect("row"))));
    }
    out
}

fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[allow(clippy::too_many_arguments)]
fn evaluate_step(
    params: &NetworkParameters,
    data: &StepData,
    theta: &[f64],
    cfg: &TrainingConfig,
    sobolev: &SobolevConfig,
    stats: &NormalizationStats,
    penalty_rng: &mut ChaCha8Rng,
    sphere_rng: &mut ChaCha8Rng,
    with_task_gradients: bool,
) -> Result<StepEvaluation> {
    let fwd = params.forward(&data.batch, true)?;
    let shared = params.shared_layer();
    let zero_out = Array2::zeros(fwd.outputs().raw_dim());

    let (l1, g1) = displacement_loss(fwd.outputs(), &data.targets);

    let draws: Vec<Vec<f64>> = (0..sobolev.draws)
        .map(|_| sample_unit_sphere(sobolev.dim, sphere_rng))
        .collect();
    let (l2, g2) = sobolev_loss(fwd.output_tangents(), &data.jacobians, &projection_covariance(&draws));

    let n1 = frobenius(&params.head_weight_gradient(&fwd, &g1, &[], shared));
    let n2 = frobenius(&params.head_weight_gradient(&fwd, &zero_out, &g2, shared));

    let mut total = params.zeros_like();
    let mut task: Option<[NetworkParameters; TASKS]> = None;
    let (l3, n3) = match cfg.penalty {
        MaterialPenalty::Homogeneity => {
            let [lo, hi] = cfg.scale_range;
            let (a, b) = (lo.ln(), hi.ln());
            let scales: Vec<f64> = (0..data.batch.materials.nrows())
                .map(|_| {
                    if b > a {
                        penalty_rng.random_range(a..b).exp()
                    } else {
                        lo
                    }
                })
                .collect();
            let mut scaled = data.batch.clone();
            let e = stats.modulus_index();
            for (m, c) in scales.iter().enumerate() {
                scaled.materials[(m, e)] += stats.modulus_shift(*c);
            }
            let rho_by_sample: Vec<f64> = scales
                .iter()
                .enumerate()
                .map(|(m, &c)| {
                    let phys = data.materials.row(m).to_vec();
                    let mut stiffer = phys.clone();
                    stiffer[e] *= c;
                    c * stats.output_scale(&phys) / stats.output_scale(&stiffer)
                })
                .collect();
            let rho: Vec<f64> = data.batch.pairs.iter().map(|&(_, m)| rho_by_sample[m]).collect();
            let offset: Vec<f64> = stats
                .output_mean
                .iter()
                .zip(&stats.output_std)
                .map(|(m, s)| m / s)
                .collect();
            let fwd_c = params.forward(&scaled, false)?;
            let (l3, g_c, g_plain) = homogeneity_penalty(fwd_c.outputs(), fwd.outputs(), &rho, &offset);
            let w3 = params.head_weight_gradient(&fwd, &g_plain, &[], shared)
                + params.head_weight_gradient(&fwd_c, &g_c, &[], shared);

            let combined = &g1 * theta[0] + &g_plain * theta[2];
            let g2w: Vec<Array2<f64>> = g2.iter().map(|g| g * theta[1]).collect();
            params.accumulate(&fwd, &combined, &g2w, &mut total);
            params.accumulate(&fwd_c, &(&g_c * theta[2]), &[], &mut total);
            if with_task_gradients {
                let mut t3 = params.backward(&fwd, &g_plain, &[]);
                params.accumulate(&fwd_c, &g_c, &[], &mut t3);
                task = Some([
                    params.backward(&fwd, &g1, &[]),
                    params.backward(&fwd, &zero_out, &g2),
                    t3,
                ]);
            }
            (l3, frobenius(&w3))
        }
        MaterialPenalty::WeightDecay => {
            let (l3, decay) = weight_decay(&params.material);
            let combined = &g1 * theta[0];
            let g2w: Vec<Array2<f64>> = g2.iter().map(|g| g * theta[1]).collect();
            params.accumulate(&fwd, &combined, &g2w, &mut total);
            for (dst, src) in total.material.layers.iter_mut().zip(&decay.layers) {
                dst.weights.scaled_add(theta[2], &src.weights);
            }
            if with_task_gradients {
                let mut t3 = params.zeros_like();
                t3.material = decay;
                task = Some([
                    params.backward(&fwd, &g1, &[]),
                    params.backward(&fwd, &zero_out, &g2),
                    t3,
                ]);
            }
            // the material sub-network is not part of the shared head layer
            (l3, 0.0)
        }
    };
    Ok(StepEvaluation {
        losses: [l1, l2, l3],
        grad_norms: [n1, n2, n3],
        task_gradients: task,
        total_gradient: total,
    })
}
