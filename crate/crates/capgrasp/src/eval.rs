//! Success-over-coverage curves, kept ratio, and the per-sector benchmark
//! protocol.
//!
//! Coverage thresholds compare in the cosine and squared-distance domains
//! so the strict "less than" boundaries behave bit-exactly. The curve is
//! swept over the distinct discriminator scores in descending order; its
//! AUC is the trapezoidal integral of success rate over coverage.

use std::io::Write as IoWrite;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{GraspDataset, SceneRecord, Split};
use crate::geometry::{
    approach_vector, cone_contains, sector_of, ConeConstraint, GraspPose, SectorGrid,
};
use crate::model::{discriminator_score, sample_constrained_grasps, DiscriminatorModel, SamplerModel};
use crate::oracle::{evaluate_grasp, GripperSpec};
use crate::refine::{mh_refine, ProposalConfig};
use crate::rng::stream;
use crate::{Error, Result};

/// Thresholds deciding when a generated grasp covers a ground-truth one.
#[derive(Clone, Copy, Debug)]
pub struct CoverageParams {
    pub angle_threshold: f64,
    pub distance_threshold: f64,
}

impl Default for CoverageParams {
    fn default() -> CoverageParams {
        CoverageParams {
            angle_threshold: 10f64.to_radians(),
            distance_threshold: 0.02,
        }
    }
}

/// A generated grasp with its discriminator score and oracle label.
#[derive(Clone, Copy, Debug)]
pub struct ScoredGrasp {
    pub grasp: GraspPose,
    pub score: f64,
    pub success: bool,
}

fn covers(generated: &GraspPose, gt: &GraspPose, params: &CoverageParams) -> bool {
    let cos_thr = params.angle_threshold.cos();
    let d = generated.p - gt.p;
    approach_vector(generated).dot(approach_vector(gt)) > cos_thr
        && d.norm_squared() < params.distance_threshold * params.distance_threshold
}

/// Covered flag per ground-truth grasp: a gt grasp is covered when some
/// generated grasp is within both thresholds (strictly). One generated
/// grasp may cover many gt grasps.
pub fn coverage(
    generated: &[ScoredGrasp],
    gt: &[GraspPose],
    params: &CoverageParams,
) -> Vec<bool> {
    gt.iter()
        .map(|g| generated.iter().any(|s| covers(&s.grasp, g, params)))
        .collect()
}

/// One point of the success-over-coverage curve.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub coverage: f64,
    pub success_rate: f64,
}

/// The curve and its area under success-rate-over-coverage.
#[derive(Clone, Debug)]
pub struct SuccessOverCoverage {
    pub points: Vec<CurvePoint>,
    pub auc: f64,
}

/// Sweep the score threshold over the distinct scores (descending),
/// computing success rate and gt coverage of the kept set, then integrate
/// success rate over coverage by trapezoid from coverage zero. The
/// leading point at an unreachable threshold keeps the integrand defined
/// at coverage zero by borrowing the first nonempty success rate.
pub fn success_over_coverage(
    generated: &[ScoredGrasp],
    gt: &[GraspPose],
    params: &CoverageParams,
) -> Result<SuccessOverCoverage> {
    if generated.is_empty() {
        return Err(Error::EmptyGraspSet);
    }
    let mut thresholds: Vec<f64> = generated.iter().map(|g| g.score).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();

    let mut points = Vec::with_capacity(thresholds.len() + 1);
    for &thr in &thresholds {
        let kept: Vec<ScoredGrasp> =
            generated.iter().copied().filter(|g| g.score >= thr).collect();
        let successes = kept.iter().filter(|g| g.success).count();
        let success_rate = successes as f64 / kept.len() as f64;
        let covered = if gt.is_empty() {
            0.0
        } else {
            coverage(&kept, gt, params).iter().filter(|&&c| c).count() as f64 / gt.len() as f64
        };
        points.push(CurvePoint { threshold: thr, coverage: covered, success_rate });
    }
    let first_rate = points[0].success_rate;
    points.insert(
        0,
        CurvePoint { threshold: f64::INFINITY, coverage: 0.0, success_rate: first_rate },
    );

    let mut auc = 0.0;
    for pair in points.windows(2) {
        auc += (pair[1].coverage - pair[0].coverage)
            * 0.5
            * (pair[0].success_rate + pair[1].success_rate);
    }
    Ok(SuccessOverCoverage { points, auc })
}

/// Fraction of grasps whose approach direction lies inside the cone.
pub fn kept_ratio(grasps: &[GraspPose], cone: &ConeConstraint) -> Result<f64> {
    if grasps.is_empty() {
        return Err(Error::EmptyGraspSet);
    }
    let kept = grasps
        .iter()
        .filter(|g| cone_contains(cone, approach_vector(g)))
        .count();
    Ok(kept as f64 / grasps.len() as f64)
}

/// Refinement variant applied between sampling and scoring.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefineMode {
    None,
    Unconstrained,
    Constrained,
}

/// Sector benchmark configuration.
#[derive(Clone, Copy, Debug)]
pub struct BenchmarkConfig {
    pub grid: SectorGrid,
    pub per_sector: usize,
    pub refine_mode: RefineMode,
    pub proposal: ProposalConfig,
    pub coverage: CoverageParams,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> BenchmarkConfig {
        BenchmarkConfig {
            grid: SectorGrid::default(),
            per_sector: 50,
            refine_mode: RefineMode::None,
            proposal: ProposalConfig::default(),
            coverage: CoverageParams::default(),
            seed: 0,
        }
    }
}

/// One object x sector evaluation cell.
#[derive(Clone, Debug)]
pub struct SectorCell {
    pub object_id: String,
    pub sector: usize,
    /// None when the sector holds no ground-truth grasps.
    pub auc: Option<f64>,
    pub kept_ratio: f64,
    pub n_generated: usize,
    pub n_gt: usize,
    pub n_covered: usize,
    pub n_success: usize,
    pub curve: Vec<CurvePoint>,
}

/// Full benchmark output.
#[derive(Clone, Debug)]
pub struct BenchmarkReport {
    pub cells: Vec<SectorCell>,
    /// Ground-truth-weighted mean AUC over sectors that had gt grasps.
    pub aggregate_auc: f64,
    /// Generated-grasp-weighted mean kept ratio over all sectors.
    pub aggregate_kept_ratio: f64,
    pub total_generated: usize,
    pub total_gt: usize,
    pub total_covered: usize,
    pub total_success: usize,
    /// (object_id, sector) cells skipped for coverage aggregation.
    pub skipped: Vec<(String, usize)>,
}

const CELL_STREAM_SPAN: u64 = 8192;

fn evaluate_cell(
    sampler: &SamplerModel,
    discriminator: &DiscriminatorModel,
    scene: &SceneRecord,
    gripper: &GripperSpec,
    sector: usize,
    cell_index: usize,
    cfg: &BenchmarkConfig,
) -> Result<SectorCell> {
    let cloud = scene.cloud();
    let cone = cfg.grid.sector_cone(sector);
    let base = cell_index as u64 * CELL_STREAM_SPAN;
    let mut rng = stream(cfg.seed, base);
    let mut grasps = sample_constrained_grasps(sampler, &cloud, &cone, cfg.per_sector, &mut rng);

    if cfg.refine_mode != RefineMode::None {
        let cone_arg = match cfg.refine_mode {
            RefineMode::Constrained => Some(&cone),
            _ => None,
        };
        grasps = grasps
            .iter()
            .enumerate()
            .map(|(k, g)| {
                let mut chain_rng = stream(cfg.seed, base + 1 + k as u64);
                mh_refine(g, &cloud, discriminator, cone_arg, &cfg.proposal, &mut chain_rng).0
            })
            .collect();
    }

    let shape = scene.shape_in_centered_frame();
    let scored: Vec<ScoredGrasp> = grasps
        .iter()
        .map(|g| ScoredGrasp {
            grasp: *g,
            score: discriminator_score(discriminator, &cloud, g),
            success: evaluate_grasp(&shape, g, gripper),
        })
        .collect();

    let gt: Vec<GraspPose> = scene
        .grasps
        .iter()
        .filter(|lg| lg.label)
        .map(|lg| lg.grasp)
        .filter(|g| sector_of(approach_vector(g), &cfg.grid) == sector)
        .collect();

    let kept = kept_ratio(&grasps, &cone)?;
    let n_success = scored.iter().filter(|s| s.success).count();
    if gt.is_empty() {
        return Ok(SectorCell {
            object_id: scene.object_id.clone(),
            sector,
            auc: None,
            kept_ratio: kept,
            n_generated: scored.len(),
            n_gt: 0,
            n_covered: 0,
            n_success,
            curve: Vec::new(),
        });
    }
    let curve = success_over_coverage(&scored, &gt, &cfg.coverage)?;
    let n_covered = coverage(&scored, &gt, &cfg.coverage).iter().filter(|&&c| c).count();
    Ok(SectorCell {
        object_id: scene.object_id.clone(),
        sector,
        auc: Some(curve.auc),
        kept_ratio: kept,
        n_generated: scored.len(),
        n_gt: gt.len(),
        n_covered,
        n_success,
        curve: curve.points,
    })
}

/// Run the benchmark over the first test-split scene of every test
/// object: per sector, sample toward the sector's circumscribed cone,
/// optionally refine, score, oracle-label, and compare against the
/// sector's ground-truth grasps.
pub fn sector_benchmark(
    sampler: &SamplerModel,
    discriminator: &DiscriminatorModel,
    dataset: &GraspDataset,
    gripper: &GripperSpec,
    cfg: &BenchmarkConfig,
) -> Result<BenchmarkReport> {
    assert!(cfg.per_sector > 0 && (cfg.per_sector as u64) < CELL_STREAM_SPAN - 1);
    let mut object_scenes: Vec<&SceneRecord> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for scene in dataset.split_scenes(Split::Test) {
        if seen.insert(scene.object_id.clone()) {
            object_scenes.push(scene);
        }
    }
    if object_scenes.is_empty() {
        return Err(Error::EmptyGraspSet);
    }

    let sectors = cfg.grid.sector_count();
    let cells: Result<Vec<SectorCell>> = (0..object_scenes.len() * sectors)
        .into_par_iter()
        .map(|ci| {
            let scene = object_scenes[ci / sectors];
            evaluate_cell(sampler, discriminator, scene, gripper, ci % sectors, ci, cfg)
        })
        .collect();
    let cells = cells?;

    let mut gt_weight = 0.0;
    let mut auc_sum = 0.0;
    let mut kept_weight = 0.0;
    let mut kept_sum = 0.0;
    let mut totals = (0usize, 0usize, 0usize, 0usize);
    let mut skipped = Vec::new();
    for cell in &cells {
        kept_weight += cell.n_generated as f64;
        kept_sum += cell.kept_ratio * cell.n_generated as f64;
        totals.0 += cell.n_generated;
        totals.1 += cell.n_gt;
        totals.2 += cell.n_covered;
        totals.3 += cell.n_success;
        match cell.auc {
            Some(auc) => {
                gt_weight += cell.n_gt as f64;
                auc_sum += auc * cell.n_gt as f64;
            }
            None => skipped.push((cell.object_id.clone(), cell.sector)),
        }
    }
    Ok(BenchmarkReport {
        cells,
        aggregate_auc: if gt_weight > 0.0 { auc_sum / gt_weight } else { 0.0 },
        aggregate_kept_ratio: if kept_weight > 0.0 { kept_sum / kept_weight } else { 0.0 },
        total_generated: totals.0,
        total_gt: totals.1,
        total_covered: totals.2,
        total_success: totals.3,
        skipped,
    })
}

/// Per-cell CSV: one row per object x sector.
pub fn write_report_csv<W: IoWrite>(report: &BenchmarkReport, mut out: W) -> Result<()> {
    writeln!(out, "object_id,sector,auc,kept_ratio,n_gt,n_covered,n_success")?;
    for c in &report.cells {
        let auc = c.auc.map(|a| a.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            c.object_id, c.sector, auc, c.kept_ratio, c.n_gt, c.n_covered, c.n_success
        )?;
    }
    Ok(())
}

/// Curve-point CSV for plotting.
pub fn write_curves_csv<W: IoWrite>(report: &BenchmarkReport, mut out: W) -> Result<()> {
    writeln!(out, "object_id,sector,threshold,coverage,success_rate")?;
    for c in &report.cells {
        for p in &c.curve {
            writeln!(
                out,
                "{},{},{},{},{}",
                c.object_id, c.sector, p.threshold, p.coverage, p.success_rate
            )?;
        }
    }
    Ok(())
}

/// Aggregate summary as flat key-value text.
pub fn write_summary<W: IoWrite>(report: &BenchmarkReport, mut out: W) -> Result<()> {
    writeln!(out, "aggregate_auc = {}", report.aggregate_auc)?;
    writeln!(out, "aggregate_kept_ratio = {}", report.aggregate_kept_ratio)?;
    writeln!(out, "total_generated = {}", report.total_generated)?;
    writeln!(out, "total_gt = {}", report.total_gt)?;
    writeln!(out, "total_covered = {}", report.total_covered)?;
    writeln!(out, "total_success = {}", report.total_success)?;
    let skipped: Vec<String> = report
        .skipped
        .iter()
        .map(|(o, s)| format!("{o}:{s}"))
        .collect();
    writeln!(out, "skipped_sectors = {}", skipped.join(" "))?;
    Ok(())
}
