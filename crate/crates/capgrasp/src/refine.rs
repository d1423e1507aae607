//! Metropolis-Hastings grasp refinement with an optional cone constraint.
//!
//! Proposals are symmetric (Gaussian translation, axis-angle rotation
//! with a half-normal angle and uniform axis), so the acceptance rule is
//! the plain score ratio. In constrained mode a proposal outside the cone
//! scores zero and can never be accepted, which keeps a chain that starts
//! inside the cone inside it for every accepted state.

use std::io::Write as IoWrite;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::geometry::{approach_vector, cone_contains, ConeConstraint, GraspPose, UnitQuat, Vec3};
use crate::model::{discriminator_score, DiscriminatorModel};
use crate::scene::PointCloud;
use crate::Result;

/// Floor on the current score in the acceptance ratio, so chains that
/// start at score zero can still move.
pub const SCORE_FLOOR: f64 = 1e-12;

/// Random-walk proposal scales and chain length.
#[derive(Clone, Copy, Debug)]
pub struct ProposalConfig {
    pub sigma_translation: f64,
    pub sigma_rotation: f64,
    pub iterations: usize,
}

impl Default for ProposalConfig {
    fn default() -> ProposalConfig {
        ProposalConfig { sigma_translation: 0.02, sigma_rotation: 0.1, iterations: 10 }
    }
}

/// Anything that scores a grasp against a cloud in [0, 1].
pub trait GraspScorer {
    fn score(&self, cloud: &PointCloud, g: &GraspPose) -> f64;
}

impl GraspScorer for DiscriminatorModel {
    fn score(&self, cloud: &PointCloud, g: &GraspPose) -> f64 {
        discriminator_score(self, cloud, g)
    }
}

/// One chain step record.
#[derive(Clone, Copy, Debug)]
pub struct TraceStep {
    /// The proposed pose of this iteration.
    pub pose: GraspPose,
    /// Effective score of the proposal (zero when outside the cone).
    pub score: f64,
    pub accepted: bool,
    pub in_cone: bool,
}

/// Full per-iteration record of one refinement chain.
#[derive(Clone, Debug, Default)]
pub struct RefinementTrace {
    pub steps: Vec<TraceStep>,
}

impl RefinementTrace {
    pub fn write_csv<W: IoWrite>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iteration,score,accepted,in_cone")?;
        for (i, s) in self.steps.iter().enumerate() {
            writeln!(out, "{},{},{},{}", i, s.score, s.accepted, s.in_cone)?;
        }
        Ok(())
    }
}

/// Symmetric random perturbation of a pose: isotropic Gaussian position
/// noise and a rotation by |N(0, sigma)| about a uniform axis.
pub fn propose_perturbation<R: Rng + ?Sized>(
    g: &GraspPose,
    cfg: &ProposalConfig,
    rng: &mut R,
) -> GraspPose {
    let jitter = Vec3::new(
        cfg.sigma_translation * StandardNormal.sample::<_, f64>(rng),
        cfg.sigma_translation * StandardNormal.sample::<_, f64>(rng),
        cfg.sigma_translation * StandardNormal.sample::<_, f64>(rng),
    );
    let axis = uniform_axis(rng);
    let angle: f64 = StandardNormal.sample::<_, f64>(rng) * cfg.sigma_rotation;
    // |angle| about a uniform axis is a symmetric proposal.
    let dq = UnitQuat::from_axis_angle(axis, angle.abs());
    GraspPose::new(dq.mul(g.q).normalized(), g.p + jitter)
}

fn uniform_axis<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let s = (1.0 - z * z).max(0.0).sqrt();
    Vec3::new(s * phi.cos(), s * phi.sin(), z)
}

fn effective_score<S: GraspScorer + ?Sized>(
    scorer: &S,
    cloud: &PointCloud,
    g: &GraspPose,
    cone: Option<&ConeConstraint>,
) -> (f64, bool) {
    let in_cone = cone.map(|c| cone_contains(c, approach_vector(g))).unwrap_or(true);
    match cone {
        Some(_) if !in_cone => (0.0, false),
        _ => (scorer.score(cloud, g), in_cone),
    }
}

/// Refine a grasp with a Metropolis-Hastings chain under the score
/// (optionally zeroed outside the cone). Returns the chain's final state
/// and the full trace.
pub fn mh_refine<S: GraspScorer + ?Sized, R: Rng + ?Sized>(
    start: &GraspPose,
    cloud: &PointCloud,
    scorer: &S,
    cone: Option<&ConeConstraint>,
    cfg: &ProposalConfig,
    rng: &mut R,
) -> (GraspPose, RefinementTrace) {
    let mut current = *start;
    let (mut current_score, _) = effective_score(scorer, cloud, &current, cone);
    let mut trace = RefinementTrace { steps: Vec::with_capacity(cfg.iterations) };
    for _ in 0..cfg.iterations {
        let proposal = propose_perturbation(&current, cfg, rng);
        let (score, in_cone) = effective_score(scorer, cloud, &proposal, cone);
        let ratio = score / current_score.max(SCORE_FLOOR);
        let accepted = rng.random::<f64>() < ratio.min(1.0);
        if accepted {
            current = proposal;
            current_score = score;
        }
        trace.steps.push(TraceStep { pose: proposal, score, accepted, in_cone });
    }
    (current, trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    struct ConstantScorer(f64);

    impl GraspScorer for ConstantScorer {
        fn score(&self, _: &PointCloud, _: &GraspPose) -> f64 {
            self.0
        }
    }

    /// Score decreasing in the distance to a target position.
    struct TargetScorer {
        target: Vec3,
    }

    impl GraspScorer for TargetScorer {
        fn score(&self, _: &PointCloud, g: &GraspPose) -> f64 {
            (-(g.p - self.target).norm_squared() / 0.02).exp()
        }
    }

    fn empty_cloud() -> PointCloud {
        PointCloud {
            points: vec![Vec3::ZERO],
            normals: None,
            centroid_offset: Vec3::ZERO,
        }
    }

    fn down_grasp() -> GraspPose {
        // Approach along -y.
        GraspPose::new(
            UnitQuat::from_axis_angle(Vec3::X, std::f64::consts::FRAC_PI_2),
            Vec3::ZERO,
        )
    }

    #[test]
    fn degenerate_proposal_is_identity() {
        let mut rng = stream(130, 0);
        let cfg = ProposalConfig { sigma_translation: 0.0, sigma_rotation: 0.0, iterations: 1 };
        let g = down_grasp();
        for _ in 0..100 {
            let p = propose_perturbation(&g, &cfg, &mut rng);
            assert_eq!(p.p, g.p);
            assert!(p.q.angle_to(g.q) < 1e-12);
        }
    }

    #[test]
    fn proposal_translation_std_matches_sigma() {
        let mut rng = stream(131, 0);
        let cfg = ProposalConfig { sigma_translation: 0.02, sigma_rotation: 0.1, iterations: 1 };
        let g = down_grasp();
        let n = 100_000;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let p = propose_perturbation(&g, &cfg, &mut rng);
            let d = p.p - g.p;
            sum_sq += d.norm_squared();
        }
        // Per-component variance sigma^2, pooled over 3 components.
        let std = (sum_sq / (3.0 * n as f64)).sqrt();
        assert!((std - 0.02).abs() < 0.02 * 0.02, "std {std}");
    }

    #[test]
    fn constant_score_constrained_chain_statistics() {
        let mut rng = stream(132, 0);
        let cone = ConeConstraint::new(Vec3::NEG_Y, 30f64.to_radians());
        let scorer = ConstantScorer(0.7);
        let cloud = empty_cloud();
        let (final_pose, trace) = mh_refine(
            &down_grasp(),
            &cloud,
            &scorer,
            Some(&cone),
            &ProposalConfig { iterations: 200, ..ProposalConfig::default() },
            &mut rng,
        );
        // With a constant score the ratio is 1 inside the cone and 0
        // outside: acceptance must exactly match cone membership.
        for step in &trace.steps {
            assert_eq!(step.accepted, step.in_cone);
        }
        assert!(cone_contains(&cone, approach_vector(&final_pose)));
    }

    #[test]
    fn out_of_cone_proposals_are_always_rejected() {
        let mut rng = stream(133, 0);
        let cone = ConeConstraint::new(Vec3::NEG_Y, 10f64.to_radians());
        let scorer = ConstantScorer(0.9);
        let cloud = empty_cloud();
        let (_, trace) = mh_refine(
            &down_grasp(),
            &cloud,
            &scorer,
            Some(&cone),
            &ProposalConfig { sigma_rotation: 0.5, iterations: 500, ..ProposalConfig::default() },
            &mut rng,
        );
        let out_of_cone_accepts =
            trace.steps.iter().filter(|s| !s.in_cone && s.accepted).count();
        assert_eq!(out_of_cone_accepts, 0);
        assert!(trace.steps.iter().any(|s| !s.in_cone), "test never left the cone");
    }

    #[test]
    fn constrained_chain_closure_over_many_steps() {
        let cone = ConeConstraint::new(Vec3::NEG_Y, 30f64.to_radians());
        let scorer = ConstantScorer(0.5);
        let cloud = empty_cloud();
        let cfg = ProposalConfig { iterations: 100, ..ProposalConfig::default() };
        let mut violations = 0usize;
        for chain in 0..1000 {
            let mut rng = stream(134, chain);
            let mut current = down_grasp();
            let (final_pose, trace) =
                mh_refine(&current, &cloud, &scorer, Some(&cone), &cfg, &mut rng);
            for step in &trace.steps {
                if step.accepted {
                    current = step.pose;
                    if !cone_contains(&cone, approach_vector(&current)) {
                        violations += 1;
                    }
                }
            }
            if !cone_contains(&cone, approach_vector(&final_pose)) {
                violations += 1;
            }
        }
        assert_eq!(violations, 0);
    }

    #[test]
    fn chain_can_enter_cone_from_outside() {
        // Start outside: the floored ratio accepts the first in-cone
        // proposal with probability 1, after which the chain stays in.
        let cone = ConeConstraint::new(Vec3::NEG_Y, 45f64.to_radians());
        let scorer = ConstantScorer(0.8);
        let cloud = empty_cloud();
        let start = GraspPose::new(UnitQuat::IDENTITY, Vec3::ZERO); // approach +z
        let mut entered = 0;
        for chain in 0..200 {
            let mut rng = stream(135, chain);
            let (final_pose, _) = mh_refine(
                &start,
                &cloud,
                &scorer,
                Some(&cone),
                &ProposalConfig { sigma_rotation: 0.4, iterations: 30, ..Default::default() },
                &mut rng,
            );
            if cone_contains(&cone, approach_vector(&final_pose)) {
                entered += 1;
            }
        }
        assert!(entered > 150, "only {entered} of 200 chains entered the cone");
    }

    #[test]
    fn unconstrained_chain_climbs_a_monotone_score() {
        let scorer = TargetScorer { target: Vec3::new(0.05, -0.02, 0.08) };
        let cloud = empty_cloud();
        let cfg = ProposalConfig { iterations: 40, ..ProposalConfig::default() };
        let chains = 100;
        let mut mean_start = 0.0;
        let mut mean_final = 0.0;
        // Average scores should be non-decreasing along the chain.
        let mut iteration_means = vec![0.0; cfg.iterations];
        for chain in 0..chains {
            let mut rng = stream(136, chain as u64);
            let start = down_grasp();
            mean_start += scorer.score(&cloud, &start);
            let (final_pose, trace) = mh_refine(&start, &cloud, &scorer, None, &cfg, &mut rng);
            mean_final += scorer.score(&cloud, &final_pose);
            let mut current = scorer.score(&cloud, &start);
            for (i, step) in trace.steps.iter().enumerate() {
                if step.accepted {
                    current = step.score;
                }
                iteration_means[i] += current;
            }
        }
        mean_start /= chains as f64;
        mean_final /= chains as f64;
        assert!(mean_final > mean_start, "final {mean_final} <= start {mean_start}");
        // Loosely increasing: late-chain average above early-chain.
        let early: f64 = iteration_means[..10].iter().sum::<f64>() / 10.0;
        let late: f64 = iteration_means[30..].iter().sum::<f64>() / 10.0;
        assert!(late >= early);
    }

    #[test]
    fn trace_has_one_step_per_iteration_and_csv_shape() {
        let mut rng = stream(137, 0);
        let scorer = ConstantScorer(0.4);
        let cloud = empty_cloud();
        let cfg = ProposalConfig { iterations: 7, ..ProposalConfig::default() };
        let (_, trace) = mh_refine(&down_grasp(), &cloud, &scorer, None, &cfg, &mut rng);
        assert_eq!(trace.steps.len(), 7);
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 8);
        assert!(text.starts_with("iteration,score,accepted,in_cone\n"));
    }
}
