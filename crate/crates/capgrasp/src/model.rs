//! Conditional grasp sampler (encoder/decoder over pooled point features)
//! and grasp discriminator, with hand-written gradients and a text
//! checkpoint format.
//!
//! The sampler works in the approach space: its per-point features carry
//! the cone half-angle, and the decoder emits a 7-D grasp whose
//! quaternion is renormalized before use. The discriminator scores a
//! grasp from the object points concatenated with the 6 gripper control
//! points, separated by a binary point-wise feature.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geometry::{
    approach_space_transform, grasp_control_points, transform_grasp, ConeConstraint, GraspPose,
    UnitQuat, Vec3,
};
use crate::mlp::{
    grad_check_tensors, mlp_grad_tensors, mlp_tensors_mut, Activation, Mlp, PointNet,
    PointNetCache, PointNetGrads,
};
use crate::scene::PointCloud;
use crate::{Error, Result};

pub const DEFAULT_LATENT_DIM: usize = 4;
/// Raw decoder quaternions below this norm map to the identity.
pub const QUAT_NORM_FLOOR: f64 = 1e-8;

/// Whether a sampler was trained with the approach-space canonicalization
/// (constrained) or with the identity transform and a fixed wide-open
/// angle feature (the unconstrained baseline ablation).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerMode {
    Constrained,
    Unconstrained,
}

/// Latent draw of the sampler.
#[derive(Clone, Debug)]
pub struct LatentSample(pub Vec<f64>);

/// Conditional VAE grasp sampler.
#[derive(Clone, Debug)]
pub struct SamplerModel {
    pub latent_dim: usize,
    pub mode: SamplerMode,
    /// Per-point input (x, y, z, qw, qx, qy, qz, px, py, pz, alpha).
    pub encoder: PointNet,
    /// Per-point input (x, y, z, z_1..z_L, alpha).
    pub decoder: PointNet,
}

impl SamplerModel {
    pub fn new<R: Rng + ?Sized>(latent_dim: usize, mode: SamplerMode, rng: &mut R) -> SamplerModel {
        SamplerModel {
            latent_dim,
            mode,
            encoder: PointNet::standard(3 + 7 + 1, 2 * latent_dim, rng),
            decoder: PointNet::standard(3 + latent_dim + 1, 7, rng),
        }
    }
}

/// Grasp success classifier over (x, y, z, b) points with a logistic head.
#[derive(Clone, Debug)]
pub struct DiscriminatorModel {
    pub net: PointNet,
}

impl DiscriminatorModel {
    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> DiscriminatorModel {
        DiscriminatorModel { net: PointNet::standard(4, 1, rng) }
    }
}

fn encoder_features(points: &[Vec3], g: &GraspPose, alpha: f64) -> Vec<f64> {
    let mut feats = Vec::with_capacity(points.len() * 11);
    for p in points {
        feats.extend_from_slice(&[
            p.x, p.y, p.z, g.q.w, g.q.x, g.q.y, g.q.z, g.p.x, g.p.y, g.p.z, alpha,
        ]);
    }
    feats
}

fn decoder_features(points: &[Vec3], z: &[f64], alpha: f64) -> Vec<f64> {
    let width = 3 + z.len() + 1;
    let mut feats = Vec::with_capacity(points.len() * width);
    for p in points {
        feats.extend_from_slice(&[p.x, p.y, p.z]);
        feats.extend_from_slice(z);
        feats.push(alpha);
    }
    feats
}

fn discriminator_features(points: &[Vec3], g: &GraspPose) -> Vec<f64> {
    let control = grasp_control_points(g);
    let mut feats = Vec::with_capacity((points.len() + 6) * 4);
    for p in points {
        feats.extend_from_slice(&[p.x, p.y, p.z, 0.0]);
    }
    for p in &control.0 {
        feats.extend_from_slice(&[p.x, p.y, p.z, 1.0]);
    }
    feats
}

/// Posterior parameters for a (cloud, grasp, alpha) triple in the
/// approach space.
pub fn encode(
    model: &SamplerModel,
    cloud: &PointCloud,
    g: &GraspPose,
    alpha: f64,
) -> (Vec<f64>, Vec<f64>) {
    let feats = encoder_features(&cloud.points, g, alpha);
    let (out, _) = model.encoder.forward(&feats, cloud.len());
    let l = model.latent_dim;
    (out[..l].to_vec(), out[l..].to_vec())
}

/// z = mu + exp(logvar / 2) * eps.
pub fn reparameterize(mu: &[f64], logvar: &[f64], eps: &[f64]) -> LatentSample {
    assert_eq!(mu.len(), logvar.len());
    assert_eq!(mu.len(), eps.len());
    LatentSample(
        mu.iter()
            .zip(logvar)
            .zip(eps)
            .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
            .collect(),
    )
}

fn pose_from_raw(raw: &[f64]) -> GraspPose {
    let q = UnitQuat::new(raw[0], raw[1], raw[2], raw[3]);
    let q = if q.norm() < QUAT_NORM_FLOOR { UnitQuat::IDENTITY } else { q.normalized() };
    GraspPose::new(q, Vec3::new(raw[4], raw[5], raw[6]))
}

/// Decode a grasp in the approach space from a latent draw.
pub fn decode(model: &SamplerModel, cloud: &PointCloud, z: &LatentSample, alpha: f64) -> GraspPose {
    let feats = decoder_features(&cloud.points, &z.0, alpha);
    let (out, _) = model.decoder.forward(&feats, cloud.len());
    pose_from_raw(&out)
}

/// KL(N(mu, diag(exp(logvar))) || N(0, I)).
pub fn kl_divergence(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| m * m + lv.exp() - 1.0 - lv)
        .sum::<f64>()
}

/// L1 distance between the control-point clouds of two poses.
pub fn reconstruction_l1(g_star: &GraspPose, g_hat: &GraspPose) -> f64 {
    let a = grasp_control_points(g_star).flatten();
    let b = grasp_control_points(g_hat).flatten();
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// ELBO loss value on already-decoded quantities.
pub fn elbo_loss_value(
    g_star: &GraspPose,
    g_hat: &GraspPose,
    mu: &[f64],
    logvar: &[f64],
    beta: f64,
) -> f64 {
    reconstruction_l1(g_star, g_hat) + beta * kl_divergence(mu, logvar)
}

/// Parameter gradients of a [`SamplerModel`].
#[derive(Clone, Debug)]
pub struct SamplerGrads {
    pub encoder: PointNetGrads,
    pub decoder: PointNetGrads,
}

impl SamplerGrads {
    pub fn zeros_like(model: &SamplerModel) -> SamplerGrads {
        SamplerGrads {
            encoder: PointNetGrads::zeros_like(&model.encoder),
            decoder: PointNetGrads::zeros_like(&model.decoder),
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.encoder.scale(s);
        self.decoder.scale(s);
    }

    pub fn add(&mut self, o: &SamplerGrads) {
        self.encoder.add(&o.encoder);
        self.decoder.add(&o.decoder);
    }
}

/// Loss terms of one conditional pair.
#[derive(Clone, Copy, Debug)]
pub struct ElboBreakdown {
    pub loss: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

pub struct ElboCache {
    enc_cache: PointNetCache,
    dec_cache: PointNetCache,
    mu: Vec<f64>,
    logvar: Vec<f64>,
    eps: Vec<f64>,
    raw: Vec<f64>,
    g_hat: GraspPose,
    g_star: GraspPose,
    n: usize,
    beta: f64,
}

/// Forward pass of Eq-style ELBO training on one conditional pair with a
/// fixed noise draw `eps`.
pub fn elbo_forward(
    model: &SamplerModel,
    cloud: &PointCloud,
    g_star: &GraspPose,
    alpha: f64,
    eps: &[f64],
    beta: f64,
) -> (ElboBreakdown, ElboCache) {
    let n = cloud.len();
    let enc_feats = encoder_features(&cloud.points, g_star, alpha);
    let (enc_out, enc_cache) = model.encoder.forward(&enc_feats, n);
    let l = model.latent_dim;
    let (mu, logvar) = (enc_out[..l].to_vec(), enc_out[l..].to_vec());
    let z = reparameterize(&mu, &logvar, eps);
    let dec_feats = decoder_features(&cloud.points, &z.0, alpha);
    let (raw, dec_cache) = model.decoder.forward(&dec_feats, n);
    let g_hat = pose_from_raw(&raw);
    let reconstruction = reconstruction_l1(g_star, &g_hat);
    let kl = kl_divergence(&mu, &logvar);
    (
        ElboBreakdown { loss: reconstruction + beta * kl, reconstruction, kl },
        ElboCache {
            enc_cache,
            dec_cache,
            mu,
            logvar,
            eps: eps.to_vec(),
            raw,
            g_hat,
            g_star: *g_star,
            n,
            beta,
        },
    )
}

// Partial derivatives of the (unit-quaternion) rotation matrix entries
// with respect to the quaternion components.
fn rotation_jacobians(q: UnitQuat) -> [[[f64; 3]; 3]; 4] {
    let (w, x, y, z) = (q.w, q.x, q.y, q.z);
    [
        // d/dw
        [[0.0, -2.0 * z, 2.0 * y], [2.0 * z, 0.0, -2.0 * x], [-2.0 * y, 2.0 * x, 0.0]],
        // d/dx
        [[0.0, 2.0 * y, 2.0 * z], [2.0 * y, -4.0 * x, -2.0 * w], [2.0 * z, 2.0 * w, -4.0 * x]],
        // d/dy
        [[-4.0 * y, 2.0 * x, 2.0 * w], [2.0 * x, 0.0, 2.0 * z], [-2.0 * w, 2.0 * z, -4.0 * y]],
        // d/dz
        [[-4.0 * z, -2.0 * w, 2.0 * x], [2.0 * w, -4.0 * z, 2.0 * y], [2.0 * x, 2.0 * y, 0.0]],
    ]
}

/// Backward pass of [`elbo_forward`], accumulating into `grads`.
pub fn elbo_backward(model: &SamplerModel, cache: &ElboCache, grads: &mut SamplerGrads) {
    let l = model.latent_dim;
    // d rec / d control points: sign of the difference.
    let h_star = grasp_control_points(&cache.g_star).flatten();
    let h_hat = grasp_control_points(&cache.g_hat).flatten();
    let signs: Vec<f64> = h_hat
        .iter()
        .zip(h_star)
        .map(|(a, b)| {
            if a > &b {
                1.0
            } else if a < &b {
                -1.0
            } else {
                0.0
            }
        })
        .collect();

    // d rec / d pose.
    let mut d_p = Vec3::ZERO;
    let mut d_qhat = [0.0f64; 4];
    let jac = rotation_jacobians(cache.g_hat.q);
    for (k, canon) in crate::geometry::CANONICAL_CONTROL_POINTS.iter().enumerate() {
        let s = Vec3::new(signs[3 * k], signs[3 * k + 1], signs[3 * k + 2]);
        d_p = d_p + s;
        for (a, j) in jac.iter().enumerate() {
            let col = Vec3::new(
                j[0][0] * canon.x + j[0][1] * canon.y + j[0][2] * canon.z,
                j[1][0] * canon.x + j[1][1] * canon.y + j[1][2] * canon.z,
                j[2][0] * canon.x + j[2][1] * canon.y + j[2][2] * canon.z,
            );
            d_qhat[a] += s.dot(col);
        }
    }

    // Through the quaternion renormalization.
    let raw_q = [cache.raw[0], cache.raw[1], cache.raw[2], cache.raw[3]];
    let norm = (raw_q.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let mut d_raw = vec![0.0; 7];
    if norm >= QUAT_NORM_FLOOR {
        let qh = [cache.g_hat.q.w, cache.g_hat.q.x, cache.g_hat.q.y, cache.g_hat.q.z];
        let dot: f64 = d_qhat.iter().zip(qh).map(|(d, q)| d * q).sum();
        for a in 0..4 {
            d_raw[a] = (d_qhat[a] - qh[a] * dot) / norm;
        }
    }
    d_raw[4] = d_p.x;
    d_raw[5] = d_p.y;
    d_raw[6] = d_p.z;

    // Decoder backward; collect d loss / d z from the latent feature
    // columns (3..3+L) summed over points.
    let d_feats = model.decoder.backward(&cache.dec_cache, &d_raw, &mut grads.decoder);
    let width = 3 + l + 1;
    let mut d_z = vec![0.0; l];
    for i in 0..cache.n {
        for (li, dz) in d_z.iter_mut().enumerate() {
            *dz += d_feats[i * width + 3 + li];
        }
    }

    // Reparameterization and KL.
    let mut d_enc_out = vec![0.0; 2 * l];
    for i in 0..l {
        let sigma = (0.5 * cache.logvar[i]).exp();
        d_enc_out[i] = d_z[i] + cache.beta * cache.mu[i];
        d_enc_out[l + i] =
            d_z[i] * cache.eps[i] * 0.5 * sigma + cache.beta * 0.5 * (cache.logvar[i].exp() - 1.0);
    }
    model.encoder.backward(&cache.enc_cache, &d_enc_out, &mut grads.encoder);
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Success probability of a grasp under the discriminator:
/// D(S = 1 | g, O) in (0, 1).
pub fn discriminator_score(model: &DiscriminatorModel, cloud: &PointCloud, g: &GraspPose) -> f64 {
    let feats = discriminator_features(&cloud.points, g);
    let (out, _) = model.net.forward(&feats, cloud.len() + 6);
    logistic(out[0])
}

/// Binary cross-entropy of a probability against a boolean label.
pub fn bce_loss(p: f64, label: bool) -> f64 {
    let y = if label { 1.0 } else { 0.0 };
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

pub struct BceCache {
    cache: PointNetCache,
    p: f64,
    label: bool,
}

/// Forward discriminator + BCE on one labeled grasp.
pub fn bce_forward(
    model: &DiscriminatorModel,
    cloud: &PointCloud,
    g: &GraspPose,
    label: bool,
) -> (f64, BceCache) {
    let feats = discriminator_features(&cloud.points, g);
    let (out, cache) = model.net.forward(&feats, cloud.len() + 6);
    let p = logistic(out[0]);
    (bce_loss(p, label), BceCache { cache, p, label })
}

/// Backward pass of [`bce_forward`]: d BCE / d logit = p - y.
pub fn bce_backward(model: &DiscriminatorModel, cache: &BceCache, grads: &mut PointNetGrads) {
    let y = if cache.label { 1.0 } else { 0.0 };
    model.net.backward(&cache.cache, &[cache.p - y], grads);
}

/// Draw M grasps in the camera frame that target the cone: canonicalize
/// the cloud, decode M independent latents with the cone half-angle as
/// the condition, and rotate the results back. The unconstrained baseline
/// ignores the cone, matching how it was trained.
pub fn sample_constrained_grasps<R: Rng + ?Sized>(
    model: &SamplerModel,
    cloud: &PointCloud,
    cone: &ConeConstraint,
    count: usize,
    rng: &mut R,
) -> Vec<GraspPose> {
    assert!(count > 0);
    let (transform, alpha) = match model.mode {
        SamplerMode::Constrained => {
            (approach_space_transform(cone.axis), cone.half_angle)
        }
        SamplerMode::Unconstrained => {
            (crate::geometry::RigidTransform::IDENTITY, std::f64::consts::PI)
        }
    };
    let canon = cloud.transformed(&transform);
    let back = transform.inverse();
    (0..count)
        .map(|_| {
            let z = LatentSample(
                (0..model.latent_dim).map(|_| StandardNormal.sample(rng)).collect(),
            );
            let g = decode(model, &canon, &z, alpha);
            transform_grasp(&back, &g)
        })
        .collect()
}

pub fn sampler_tensors_mut(model: &mut SamplerModel) -> Vec<&mut [f64]> {
    let mut v = mlp_tensors_mut(&mut model.encoder.trunk);
    v.extend(mlp_tensors_mut(&mut model.encoder.head));
    v.extend(mlp_tensors_mut(&mut model.decoder.trunk));
    v.extend(mlp_tensors_mut(&mut model.decoder.head));
    v
}

pub fn sampler_grad_tensors(grads: &SamplerGrads) -> Vec<&[f64]> {
    let mut v = mlp_grad_tensors(&grads.encoder.trunk);
    v.extend(mlp_grad_tensors(&grads.encoder.head));
    v.extend(mlp_grad_tensors(&grads.decoder.trunk));
    v.extend(mlp_grad_tensors(&grads.decoder.head));
    v
}

pub fn discriminator_tensors_mut(model: &mut DiscriminatorModel) -> Vec<&mut [f64]> {
    let mut v = mlp_tensors_mut(&mut model.net.trunk);
    v.extend(mlp_tensors_mut(&mut model.net.head));
    v
}

pub fn discriminator_grad_tensors(grads: &PointNetGrads) -> Vec<&[f64]> {
    let mut v = mlp_grad_tensors(&grads.trunk);
    v.extend(mlp_grad_tensors(&grads.head));
    v
}

/// Finite-difference check of the full sampler ELBO gradient on randomly
/// probed parameters; returns the max relative error.
pub fn sampler_grad_check<R: Rng + ?Sized>(
    model: &mut SamplerModel,
    cloud: &PointCloud,
    g_star: &GraspPose,
    alpha: f64,
    beta: f64,
    probes: usize,
    step: f64,
    rng: &mut R,
) -> f64 {
    let eps: Vec<f64> = (0..model.latent_dim).map(|_| StandardNormal.sample(rng)).collect();
    let (_, cache) = elbo_forward(model, cloud, g_star, alpha, &eps, beta);
    let mut grads = SamplerGrads::zeros_like(model);
    elbo_backward(model, &cache, &mut grads);
    let analytic: Vec<Vec<f64>> =
        sampler_grad_tensors(&grads).into_iter().map(|t| t.to_vec()).collect();
    let eps_fixed = eps.clone();
    grad_check_tensors(
        model,
        sampler_tensors_mut,
        move |m| elbo_forward(m, cloud, g_star, alpha, &eps_fixed, beta).0.loss,
        &analytic,
        probes,
        step,
        rng,
    )
}

/// Finite-difference check of the discriminator BCE gradient.
pub fn discriminator_grad_check<R: Rng + ?Sized>(
    model: &mut DiscriminatorModel,
    cloud: &PointCloud,
    g: &GraspPose,
    label: bool,
    probes: usize,
    step: f64,
    rng: &mut R,
) -> f64 {
    let (_, cache) = bce_forward(model, cloud, g, label);
    let mut grads = PointNetGrads::zeros_like(&model.net);
    bce_backward(model, &cache, &mut grads);
    let analytic: Vec<Vec<f64>> =
        discriminator_grad_tensors(&grads).into_iter().map(|t| t.to_vec()).collect();
    grad_check_tensors(
        model,
        discriminator_tensors_mut,
        move |m| bce_forward(m, cloud, g, label).0,
        &analytic,
        probes,
        step,
        rng,
    )
}

// ---------------------------------------------------------------------
// Checkpoint format: a JSON header line describing shapes, then one line
// of row-major weights and one of biases per layer, 17 significant
// digits, exact round trip.
// ---------------------------------------------------------------------

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct LayerDesc {
    rows: usize,
    cols: usize,
    activation: String,
}

#[derive(Serialize, Deserialize)]
struct SectionDesc {
    name: String,
    layers: Vec<LayerDesc>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format_version: u32,
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    latent_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<SamplerMode>,
    sections: Vec<SectionDesc>,
}

fn describe(name: &str, mlp: &Mlp) -> SectionDesc {
    SectionDesc {
        name: name.to_string(),
        layers: mlp
            .layers
            .iter()
            .map(|l| LayerDesc {
                rows: l.out_dim,
                cols: l.in_dim,
                activation: l.activation.tag().to_string(),
            })
            .collect(),
    }
}

fn write_numbers<W: Write>(out: &mut W, values: &[f64]) -> Result<()> {
    let mut line = String::with_capacity(values.len() * 24);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            line.push(' ');
        }
        line.push_str(&format!("{v:.16e}"));
    }
    line.push('\n');
    out.write_all(line.as_bytes())?;
    Ok(())
}

fn write_mlp<W: Write>(out: &mut W, mlp: &Mlp) -> Result<()> {
    for layer in &mlp.layers {
        write_numbers(out, &layer.weights)?;
        write_numbers(out, &layer.biases)?;
    }
    Ok(())
}

fn read_numbers(lines: &mut impl Iterator<Item = std::io::Result<String>>, expect: usize) -> Result<Vec<f64>> {
    let line = lines
        .next()
        .ok_or_else(|| Error::Checkpoint("unexpected end of file".into()))??;
    let values: std::result::Result<Vec<f64>, _> =
        line.split_whitespace().map(str::parse::<f64>).collect();
    let values = values.map_err(|e| Error::Checkpoint(format!("bad number: {e}")))?;
    if values.len() != expect {
        return Err(Error::Checkpoint(format!(
            "expected {expect} values, found {}",
            values.len()
        )));
    }
    Ok(values)
}

fn read_mlp(
    lines: &mut impl Iterator<Item = std::io::Result<String>>,
    desc: &SectionDesc,
) -> Result<Mlp> {
    let mut layers = Vec::with_capacity(desc.layers.len());
    for layer in &desc.layers {
        let activation = Activation::from_tag(&layer.activation)
            .ok_or_else(|| Error::Checkpoint(format!("unknown activation {}", layer.activation)))?;
        let weights = read_numbers(lines, layer.rows * layer.cols)?;
        let biases = read_numbers(lines, layer.rows)?;
        layers.push(crate::mlp::Layer {
            weights,
            biases,
            in_dim: layer.cols,
            out_dim: layer.rows,
            activation,
        });
    }
    Ok(Mlp { layers })
}

pub fn save_sampler<W: Write>(model: &SamplerModel, mut out: W) -> Result<()> {
    let header = CheckpointHeader {
        format_version: CHECKPOINT_VERSION,
        kind: "sampler".into(),
        latent_dim: Some(model.latent_dim),
        mode: Some(model.mode),
        sections: vec![
            describe("encoder_trunk", &model.encoder.trunk),
            describe("encoder_head", &model.encoder.head),
            describe("decoder_trunk", &model.decoder.trunk),
            describe("decoder_head", &model.decoder.head),
        ],
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    write_mlp(&mut out, &model.encoder.trunk)?;
    write_mlp(&mut out, &model.encoder.head)?;
    write_mlp(&mut out, &model.decoder.trunk)?;
    write_mlp(&mut out, &model.decoder.head)?;
    Ok(())
}

pub fn save_sampler_file(model: &SamplerModel, path: &Path) -> Result<()> {
    save_sampler(model, std::io::BufWriter::new(std::fs::File::create(path)?))
}

fn read_header(
    lines: &mut impl Iterator<Item = std::io::Result<String>>,
    kind: &str,
) -> Result<CheckpointHeader> {
    let line = lines
        .next()
        .ok_or_else(|| Error::Checkpoint("empty checkpoint".into()))??;
    let header: CheckpointHeader = serde_json::from_str(&line)?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    if header.kind != kind {
        return Err(Error::Checkpoint(format!(
            "expected a {kind} checkpoint, found {}",
            header.kind
        )));
    }
    Ok(header)
}

pub fn load_sampler<R: std::io::Read>(input: R) -> Result<SamplerModel> {
    let mut lines = BufReader::new(input).lines();
    let header = read_header(&mut lines, "sampler")?;
    if header.sections.len() != 4 {
        return Err(Error::Checkpoint("sampler checkpoint needs 4 sections".into()));
    }
    let encoder_trunk = read_mlp(&mut lines, &header.sections[0])?;
    let encoder_head = read_mlp(&mut lines, &header.sections[1])?;
    let decoder_trunk = read_mlp(&mut lines, &header.sections[2])?;
    let decoder_head = read_mlp(&mut lines, &header.sections[3])?;
    Ok(SamplerModel {
        latent_dim: header
            .latent_dim
            .ok_or_else(|| Error::Checkpoint("missing latent_dim".into()))?,
        mode: header.mode.ok_or_else(|| Error::Checkpoint("missing mode".into()))?,
        encoder: PointNet { trunk: encoder_trunk, head: encoder_head },
        decoder: PointNet { trunk: decoder_trunk, head: decoder_head },
    })
}

pub fn load_sampler_file(path: &Path) -> Result<SamplerModel> {
    load_sampler(std::fs::File::open(path)?)
}

pub fn save_discriminator<W: Write>(model: &DiscriminatorModel, mut out: W) -> Result<()> {
    let header = CheckpointHeader {
        format_version: CHECKPOINT_VERSION,
        kind: "discriminator".into(),
        latent_dim: None,
        mode: None,
        sections: vec![
            describe("trunk", &model.net.trunk),
            describe("head", &model.net.head),
        ],
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    write_mlp(&mut out, &model.net.trunk)?;
    write_mlp(&mut out, &model.net.head)?;
    Ok(())
}

pub fn save_discriminator_file(model: &DiscriminatorModel, path: &Path) -> Result<()> {
    save_discriminator(model, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn load_discriminator<R: std::io::Read>(input: R) -> Result<DiscriminatorModel> {
    let mut lines = BufReader::new(input).lines();
    let header = read_header(&mut lines, "discriminator")?;
    if header.sections.len() != 2 {
        return Err(Error::Checkpoint("discriminator checkpoint needs 2 sections".into()));
    }
    let trunk = read_mlp(&mut lines, &header.sections[0])?;
    let head = read_mlp(&mut lines, &header.sections[1])?;
    Ok(DiscriminatorModel { net: PointNet { trunk, head } })
}

pub fn load_discriminator_file(path: &Path) -> Result<DiscriminatorModel> {
    load_discriminator(std::fs::File::open(path)?)
}
