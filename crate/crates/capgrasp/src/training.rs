//! Sampler training with on-the-fly conditional labeling, and
//! discriminator training on oracle labels.
//!
//! Each sampler batch item gets a fresh (half-angle, cone axis) draw:
//! the half-angle is uniform on (0, alpha_max], the axis is sampled
//! inside the cone around the grasp's own approach direction, and the
//! pair is rotated into the approach space. Labels are never cached
//! across epochs.

use std::io::Write as IoWrite;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{GraspDataset, Split};
use crate::geometry::{
    approach_space_transform, approach_vector, sample_direction_in_cone, transform_grasp,
    GraspPose,
};
use crate::mlp::PointNetGrads;
use crate::model::{
    bce_backward, bce_forward, discriminator_grad_tensors, discriminator_score,
    discriminator_tensors_mut, elbo_backward, elbo_forward, sampler_grad_tensors,
    sampler_tensors_mut, DiscriminatorModel, SamplerGrads, SamplerMode, SamplerModel,
    DEFAULT_LATENT_DIM,
};
use crate::rng::stream;
use crate::scene::PointCloud;
use crate::{Error, Result};

/// Sampler training configuration. The learning rate anneals linearly
/// from `learning_rate` to zero over all steps.
#[derive(Clone, Copy, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub steps_per_epoch: usize,
    pub alpha_max: f64,
    pub beta: f64,
    pub learning_rate: f64,
    pub latent_dim: usize,
    pub mode: SamplerMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            epochs: 300,
            batch_size: 32,
            steps_per_epoch: 4,
            alpha_max: std::f64::consts::FRAC_PI_2,
            beta: 1e-2,
            learning_rate: 2e-3,
            latent_dim: DEFAULT_LATENT_DIM,
            mode: SamplerMode::Constrained,
            seed: 0,
        }
    }
}

/// One conditional training pair in the approach space.
#[derive(Clone, Debug)]
pub struct ConditionalPair {
    pub cloud: PointCloud,
    pub grasp: GraspPose,
    pub half_angle: f64,
}

/// Build a conditional pair: draw the half-angle, draw the cone axis
/// inside the cone around the grasp approach, and canonicalize. The
/// output grasp approach lies within `half_angle` of -y by construction.
pub fn make_conditional_pair<R: Rng + ?Sized>(
    cloud: &PointCloud,
    g: &GraspPose,
    alpha_max: f64,
    rng: &mut R,
) -> ConditionalPair {
    let v_g = approach_vector(g);
    // Uniform on (0, alpha_max].
    let alpha = alpha_max * (1.0 - rng.random::<f64>());
    let v_a = sample_direction_in_cone(v_g, alpha, rng);
    let t = approach_space_transform(v_a);
    ConditionalPair {
        cloud: cloud.transformed(&t),
        grasp: transform_grasp(&t, g),
        half_angle: alpha,
    }
}

/// The unconstrained-baseline pair: identity transform, wide-open angle.
pub fn unconstrained_pair(cloud: &PointCloud, g: &GraspPose) -> ConditionalPair {
    ConditionalPair { cloud: cloud.clone(), grasp: *g, half_angle: std::f64::consts::PI }
}

/// Adaptive-moment optimizer over a fixed list of parameter tensors.
pub struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Adam {
    pub fn new(tensor_sizes: &[usize]) -> Adam {
        Adam {
            m: tensor_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: tensor_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>, lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((tensor, grad), (m, v)) in params
            .into_iter()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for ((p, &g), (mi, vi)) in
                tensor.iter_mut().zip(grad).zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

/// Per-epoch training statistics.
#[derive(Clone, Copy, Debug)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_reconstruction: f64,
    pub mean_kl: f64,
    pub lr: f64,
}

/// Write the per-epoch sampler log as CSV.
pub fn write_loss_csv<W: IoWrite>(stats: &[EpochStats], mut out: W) -> Result<()> {
    writeln!(out, "epoch,mean_loss,mean_rec_loss,mean_kl,lr")?;
    for s in stats {
        writeln!(
            out,
            "{},{},{},{},{}",
            s.epoch, s.mean_loss, s.mean_reconstruction, s.mean_kl, s.lr
        )?;
    }
    Ok(())
}

fn distinct_indices<R: Rng + ?Sized>(n: usize, count: usize, rng: &mut R) -> Vec<usize> {
    debug_assert!(count <= n);
    let mut chosen = Vec::with_capacity(count);
    while chosen.len() < count {
        let i = rng.random_range(0..n);
        if !chosen.contains(&i) {
            chosen.push(i);
        }
    }
    chosen
}

/// Train a sampler on the train-split positives of a dataset.
pub fn train_sampler(
    dataset: &GraspDataset,
    config: &TrainConfig,
) -> Result<(SamplerModel, Vec<EpochStats>)> {
    let scenes: Vec<_> = dataset.split_scenes(Split::Train).collect();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (si, scene) in scenes.iter().enumerate() {
        for (gi, lg) in scene.grasps.iter().enumerate() {
            if lg.label {
                pairs.push((si, gi));
            }
        }
    }
    if pairs.len() < config.batch_size {
        return Err(Error::ConfigValue {
            key: "batch".into(),
            reason: format!(
                "batch size {} exceeds the {} positive training records",
                config.batch_size,
                pairs.len()
            ),
        });
    }

    let mut model = SamplerModel::new(config.latent_dim, config.mode, &mut stream(config.seed, 0));
    let mut rng = stream(config.seed, 1);
    let sizes: Vec<usize> = sampler_tensors_mut(&mut model).iter().map(|t| t.len()).collect();
    let mut adam = Adam::new(&sizes);
    let total_steps = (config.epochs * config.steps_per_epoch) as f64;
    let mut history = Vec::with_capacity(config.epochs);
    let mut step_index = 0usize;

    for epoch in 1..=config.epochs {
        let mut sums = (0.0, 0.0, 0.0);
        let mut lr = 0.0;
        for batch in 0..config.steps_per_epoch {
            let mut grads = SamplerGrads::zeros_like(&model);
            let batch_refs: Vec<(usize, usize)> =
                distinct_indices(pairs.len(), config.batch_size, &mut rng)
                    .into_iter()
                    .map(|i| pairs[i])
                    .collect();
            for &(si, gi) in &batch_refs {
                let scene = scenes[si];
                let cloud = scene.cloud();
                let g = &scene.grasps[gi].grasp;
                let pair = match config.mode {
                    SamplerMode::Constrained => {
                        make_conditional_pair(&cloud, g, config.alpha_max, &mut rng)
                    }
                    SamplerMode::Unconstrained => unconstrained_pair(&cloud, g),
                };
                let eps: Vec<f64> =
                    (0..config.latent_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                let (breakdown, cache) = elbo_forward(
                    &model,
                    &pair.cloud,
                    &pair.grasp,
                    pair.half_angle,
                    &eps,
                    config.beta,
                );
                if !breakdown.loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, batch });
                }
                sums.0 += breakdown.loss;
                sums.1 += breakdown.reconstruction;
                sums.2 += breakdown.kl;
                elbo_backward(&model, &cache, &mut grads);
            }
            grads.scale(1.0 / config.batch_size as f64);
            lr = config.learning_rate * (1.0 - step_index as f64 / total_steps);
            let grad_slices: Vec<Vec<f64>> =
                sampler_grad_tensors(&grads).into_iter().map(|t| t.to_vec()).collect();
            adam.step(
                sampler_tensors_mut(&mut model),
                grad_slices.iter().map(|t| t.as_slice()).collect(),
                lr,
            );
            step_index += 1;
        }
        let denom = (config.steps_per_epoch * config.batch_size) as f64;
        history.push(EpochStats {
            epoch,
            mean_loss: sums.0 / denom,
            mean_reconstruction: sums.1 / denom,
            mean_kl: sums.2 / denom,
            lr,
        });
    }
    Ok((model, history))
}

/// Discriminator training configuration.
#[derive(Clone, Copy, Debug)]
pub struct DiscTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub steps_per_epoch: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Cap on held-out grasps scored for the final metrics.
    pub eval_samples: usize,
}

impl Default for DiscTrainConfig {
    fn default() -> DiscTrainConfig {
        DiscTrainConfig {
            epochs: 150,
            batch_size: 32,
            steps_per_epoch: 4,
            learning_rate: 2e-3,
            seed: 0,
            eval_samples: 1024,
        }
    }
}

/// Held-out discriminator quality.
#[derive(Clone, Copy, Debug)]
pub struct DiscMetrics {
    pub accuracy: f64,
    pub roc_auc: f64,
    pub evaluated: usize,
}

/// Per-epoch discriminator statistics.
#[derive(Clone, Copy, Debug)]
pub struct DiscEpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
}

pub fn write_disc_loss_csv<W: IoWrite>(stats: &[DiscEpochStats], mut out: W) -> Result<()> {
    writeln!(out, "epoch,mean_loss,lr")?;
    for s in stats {
        writeln!(out, "{},{},{}", s.epoch, s.mean_loss, s.lr)?;
    }
    Ok(())
}

/// Rank-based ROC-AUC with tie handling.
pub fn roc_auc(scored: &[(f64, bool)]) -> f64 {
    let n_pos = scored.iter().filter(|(_, l)| *l).count();
    let n_neg = scored.len() - n_pos;
    assert!(n_pos > 0 && n_neg > 0, "ROC-AUC needs both classes");
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].0.total_cmp(&scored[b].0));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scored[order[j + 1]].0 == scored[order[i]].0 {
            j += 1;
        }
        // Average rank over the tie group (ranks are 1-based).
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &k in &order[i..=j] {
            if scored[k].1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    (rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos as f64 * n_neg as f64)
}

type GraspRef = (usize, usize);

fn labeled_refs(scenes: &[&crate::dataset::SceneRecord], label: bool) -> Vec<GraspRef> {
    let mut refs = Vec::new();
    for (si, scene) in scenes.iter().enumerate() {
        for (gi, lg) in scene.grasps.iter().enumerate() {
            if lg.label == label {
                refs.push((si, gi));
            }
        }
    }
    refs
}

/// Accuracy at threshold 0.5 and ROC-AUC on up to `cap` balanced grasps
/// drawn from a split.
pub fn evaluate_discriminator(
    model: &DiscriminatorModel,
    dataset: &GraspDataset,
    split: Split,
    cap: usize,
    seed: u64,
) -> DiscMetrics {
    let scenes: Vec<_> = dataset.split_scenes(split).collect();
    let pos = labeled_refs(&scenes, true);
    let neg = labeled_refs(&scenes, false);
    assert!(!pos.is_empty() && !neg.is_empty(), "need both labels in the {split:?} split");
    let per_class = (cap / 2).min(pos.len()).min(neg.len()).max(1);
    let mut rng = stream(seed, 2_000);
    let mut scored = Vec::with_capacity(2 * per_class);
    for refs in [&pos, &neg] {
        for _ in 0..per_class {
            let (si, gi) = refs[rng.random_range(0..refs.len())];
            let scene = scenes[si];
            let s = discriminator_score(model, &scene.cloud(), &scene.grasps[gi].grasp);
            scored.push((s, scene.grasps[gi].label));
        }
    }
    let correct = scored.iter().filter(|(s, l)| (*s >= 0.5) == *l).count();
    DiscMetrics {
        accuracy: correct as f64 / scored.len() as f64,
        roc_auc: roc_auc(&scored),
        evaluated: scored.len(),
    }
}

/// Train the discriminator on balanced batches from the train split and
/// report held-out metrics from the test split.
pub fn train_discriminator(
    dataset: &GraspDataset,
    config: &DiscTrainConfig,
) -> Result<(DiscriminatorModel, DiscMetrics, Vec<DiscEpochStats>)> {
    let scenes: Vec<_> = dataset.split_scenes(Split::Train).collect();
    let pos = labeled_refs(&scenes, true);
    let neg = labeled_refs(&scenes, false);
    let half = config.batch_size / 2;
    if pos.len() < half || neg.len() < half {
        return Err(Error::ConfigValue {
            key: "batch".into(),
            reason: format!(
                "balanced batches need {half} of each label; have {} positive, {} negative",
                pos.len(),
                neg.len()
            ),
        });
    }

    let mut model = DiscriminatorModel::new(&mut stream(config.seed, 10));
    let mut rng = stream(config.seed, 11);
    let sizes: Vec<usize> =
        discriminator_tensors_mut(&mut model).iter().map(|t| t.len()).collect();
    let mut adam = Adam::new(&sizes);
    let total_steps = (config.epochs * config.steps_per_epoch) as f64;
    let mut history = Vec::with_capacity(config.epochs);
    let mut step_index = 0usize;

    for epoch in 1..=config.epochs {
        let mut loss_sum = 0.0;
        let mut lr = 0.0;
        for batch in 0..config.steps_per_epoch {
            let mut grads = PointNetGrads::zeros_like(&model.net);
            let mut batch_refs = Vec::with_capacity(2 * half);
            for refs in [&pos, &neg] {
                for i in distinct_indices(refs.len(), half, &mut rng) {
                    batch_refs.push(refs[i]);
                }
            }
            for &(si, gi) in &batch_refs {
                let scene = scenes[si];
                let cloud = scene.cloud();
                let lg = &scene.grasps[gi];
                let (loss, cache) = bce_forward(&model, &cloud, &lg.grasp, lg.label);
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, batch });
                }
                loss_sum += loss;
                bce_backward(&model, &cache, &mut grads);
            }
            grads.scale(1.0 / batch_refs.len() as f64);
            lr = config.learning_rate * (1.0 - step_index as f64 / total_steps);
            let grad_slices: Vec<Vec<f64>> =
                discriminator_grad_tensors(&grads).into_iter().map(|t| t.to_vec()).collect();
            adam.step(
                discriminator_tensors_mut(&mut model),
                grad_slices.iter().map(|t| t.as_slice()).collect(),
                lr,
            );
            step_index += 1;
        }
        history.push(DiscEpochStats {
            epoch,
            mean_loss: loss_sum / (config.steps_per_epoch * 2 * half) as f64,
            lr,
        });
    }

    let metrics =
        evaluate_discriminator(&model, dataset, Split::Test, config.eval_samples, config.seed);
    Ok((model, metrics, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{curate_dataset, CurationConfig};
    use crate::geometry::{cone_contains, ConeConstraint, UnitQuat, Vec3};
    use crate::oracle::GripperSpec;

    fn tiny_cloud(seed: u64) -> PointCloud {
        let mut rng = stream(seed, 0);
        PointCloud {
            points: (0..8)
                .map(|_| {
                    Vec3::new(
                        rng.random_range(-0.1..0.1),
                        rng.random_range(-0.1..0.1),
                        rng.random_range(-0.1..0.1),
                    )
                })
                .collect(),
            normals: None,
            centroid_offset: Vec3::ZERO,
        }
    }

    fn random_grasp(rng: &mut impl Rng) -> GraspPose {
        let axis = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let axis = if axis.norm() < 1e-6 { Vec3::X } else { axis.normalized() };
        GraspPose::new(
            UnitQuat::from_axis_angle(axis, rng.random_range(-3.0..3.0)),
            Vec3::new(
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
            ),
        )
    }

    #[test]
    fn conditional_pair_honors_cone_closure() {
        let mut rng = stream(110, 0);
        let cloud = tiny_cloud(111);
        for _ in 0..20_000 {
            let g = random_grasp(&mut rng);
            let pair = make_conditional_pair(&cloud, &g, std::f64::consts::FRAC_PI_2, &mut rng);
            let approach = approach_vector(&pair.grasp);
            let angle = approach.dot(Vec3::NEG_Y).clamp(-1.0, 1.0).acos();
            assert!(
                angle <= pair.half_angle,
                "closure violated: angle {angle} > alpha {}",
                pair.half_angle
            );
        }
    }

    #[test]
    fn conditional_pair_with_aligned_grasp_stays_in_cone() {
        let mut rng = stream(112, 0);
        let cloud = tiny_cloud(113);
        // Grasp already approaching along -y.
        let g = GraspPose::new(
            UnitQuat::from_axis_angle(Vec3::X, std::f64::consts::FRAC_PI_2),
            Vec3::ZERO,
        );
        for _ in 0..1000 {
            let pair = make_conditional_pair(&cloud, &g, 0.8, &mut rng);
            let cone = ConeConstraint::new(Vec3::NEG_Y, pair.half_angle.max(1e-12));
            assert!(cone_contains(&cone, approach_vector(&pair.grasp)));
        }
    }

    #[test]
    fn conditional_pair_vanishing_alpha_is_canonical() {
        let mut rng = stream(114, 0);
        let cloud = tiny_cloud(115);
        for _ in 0..200 {
            let g = random_grasp(&mut rng);
            let pair = make_conditional_pair(&cloud, &g, 1e-9, &mut rng);
            let approach = approach_vector(&pair.grasp);
            assert!((approach - Vec3::NEG_Y).norm() < 1e-4);
        }
    }

    #[test]
    fn alpha_is_resampled_each_call() {
        let mut rng = stream(116, 0);
        let cloud = tiny_cloud(117);
        let g = random_grasp(&mut rng);
        let a = make_conditional_pair(&cloud, &g, 1.0, &mut rng).half_angle;
        let b = make_conditional_pair(&cloud, &g, 1.0, &mut rng).half_angle;
        assert_ne!(a, b);
    }

    #[test]
    fn adam_zero_lr_keeps_parameters_bitwise() {
        let mut params = vec![vec![0.5, -0.25, 1.0], vec![0.0, -0.0]];
        let before = params.clone();
        let grads = vec![vec![1.0, -2.0, 0.5], vec![3.0, -1.0]];
        let mut adam = Adam::new(&[3, 2]);
        adam.step(
            params.iter_mut().map(|t| t.as_mut_slice()).collect(),
            grads.iter().map(|t| t.as_slice()).collect(),
            0.0,
        );
        for (a, b) in params.iter().flatten().zip(before.iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn roc_auc_of_known_rankings() {
        let perfect: Vec<(f64, bool)> = (0..20).map(|i| (i as f64, i >= 10)).collect();
        assert_eq!(roc_auc(&perfect), 1.0);
        let inverted: Vec<(f64, bool)> = (0..20).map(|i| (i as f64, i < 10)).collect();
        assert_eq!(roc_auc(&inverted), 0.0);
        let ties: Vec<(f64, bool)> = (0..20).map(|i| (0.5, i % 2 == 0)).collect();
        assert_eq!(roc_auc(&ties), 0.5);
    }

    fn tiny_dataset(seed: u64) -> GraspDataset {
        curate_dataset(
            &CurationConfig {
                objects: 4,
                cams_per_object: 2,
                grasps_per_object: 24,
                negatives_per_object: 24,
                points_per_cloud: 64,
                test_fraction: 0.25,
                seed,
            },
            &GripperSpec::default(),
        )
        .unwrap()
    }

    #[test]
    fn sampler_training_is_deterministic() {
        let ds = tiny_dataset(118);
        let config = TrainConfig {
            epochs: 3,
            batch_size: 8,
            steps_per_epoch: 2,
            seed: 5,
            ..TrainConfig::default()
        };
        let (_, h1) = train_sampler(&ds, &config).unwrap();
        let (_, h2) = train_sampler(&ds, &config).unwrap();
        for (a, b) in h1.iter().zip(&h2) {
            assert_eq!(a.mean_loss.to_bits(), b.mean_loss.to_bits());
            assert_eq!(a.mean_kl.to_bits(), b.mean_kl.to_bits());
        }
    }

    #[test]
    fn sampler_training_rejects_oversized_batch() {
        let ds = tiny_dataset(119);
        let config =
            TrainConfig { epochs: 1, batch_size: 100_000, ..TrainConfig::default() };
        assert!(train_sampler(&ds, &config).is_err());
    }

    #[test]
    fn untrained_discriminator_sits_at_chance() {
        let ds = tiny_dataset(120);
        let model = DiscriminatorModel::new(&mut stream(121, 0));
        let metrics = evaluate_discriminator(&model, &ds, Split::Train, 400, 122);
        assert!(
            (metrics.accuracy - 0.5).abs() <= 0.06,
            "chance accuracy was {}",
            metrics.accuracy
        );
    }

    #[test]
    fn discriminator_label_flip_symmetry() {
        let ds = tiny_dataset(123);
        let mut flipped = ds.clone();
        for scene in &mut flipped.scenes {
            for lg in &mut scene.grasps {
                lg.label = !lg.label;
            }
        }
        let config = DiscTrainConfig {
            epochs: 40,
            batch_size: 16,
            steps_per_epoch: 2,
            seed: 7,
            eval_samples: 400,
            ..DiscTrainConfig::default()
        };
        let (_, normal, _) = train_discriminator(&ds, &config).unwrap();
        let (_, inverse, _) = train_discriminator(&flipped, &config).unwrap();
        assert!(
            (normal.accuracy - (1.0 - inverse.accuracy)).abs() <= 0.05,
            "normal {} vs flipped {}",
            normal.accuracy,
            inverse.accuracy
        );
    }

    #[test]
    fn loss_csv_format() {
        let stats = vec![EpochStats {
            epoch: 1,
            mean_loss: 1.5,
            mean_reconstruction: 1.25,
            mean_kl: 25.0,
            lr: 0.002,
        }];
        let mut buf = Vec::new();
        write_loss_csv(&stats, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "epoch,mean_loss,mean_rec_loss,mean_kl,lr\n1,1.5,1.25,25,0.002\n");
    }
}
