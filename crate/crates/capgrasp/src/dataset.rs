//! Grasp dataset records, curation, and the JSON-lines file format.
//!
//! One record per line; fields: scene_id, object_id, split,
//! shape{kind, dims, pose}, camera{pos, quat}, centroid_offset,
//! points (flattened N x 3, 6 significant digits), grasps[{q, p, label}].
//! Quaternions are stored scalar-first; readers reject non-unit ones.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{transform_grasp, GraspPose, UnitQuat, Vec3};
use crate::oracle::{generate_ground_truth, generate_negatives, GripperSpec};
use crate::rng::stream;
use crate::scene::{
    random_camera, random_graspable_shape, render_cloud, zero_center, CameraPose, PointCloud,
    PrimitiveShape, ShapeKind,
};
use crate::{Error, Result};

/// Train/test membership, split by object.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// A labeled grasp in the centered camera frame.
#[derive(Clone, Copy, Debug)]
pub struct LabeledGrasp {
    pub grasp: GraspPose,
    pub label: bool,
}

/// One rendered scene with its labeled grasps, all in the centered
/// camera frame.
#[derive(Clone, Debug)]
pub struct SceneRecord {
    pub scene_id: String,
    pub object_id: String,
    pub split: Split,
    /// Shape in its original (world) frame.
    pub shape: PrimitiveShape,
    pub camera: CameraPose,
    pub centroid_offset: Vec3,
    pub points: Vec<Vec3>,
    pub grasps: Vec<LabeledGrasp>,
}

impl SceneRecord {
    pub fn cloud(&self) -> PointCloud {
        PointCloud {
            points: self.points.clone(),
            normals: None,
            centroid_offset: self.centroid_offset,
        }
    }

    /// The shape re-expressed in the centered camera frame of this scene.
    pub fn shape_in_centered_frame(&self) -> PrimitiveShape {
        let to_cam = self.camera.to_camera();
        let shape_cam = self.shape.transformed(&to_cam);
        PrimitiveShape {
            kind: shape_cam.kind,
            pose_q: shape_cam.pose_q,
            pose_p: shape_cam.pose_p - self.centroid_offset,
        }
    }
}

/// Dataset of scenes; ordering is deterministic.
#[derive(Clone, Debug, Default)]
pub struct GraspDataset {
    pub scenes: Vec<SceneRecord>,
}

impl GraspDataset {
    pub fn split_scenes(&self, split: Split) -> impl Iterator<Item = &SceneRecord> {
        self.scenes.iter().filter(move |s| s.split == split)
    }

    pub fn object_ids(&self, split: Split) -> Vec<String> {
        let mut ids: Vec<String> = self
            .split_scenes(split)
            .map(|s| s.object_id.clone())
            .collect();
        ids.dedup();
        ids
    }
}

/// Curation parameters; defaults match the desk-scale configuration.
#[derive(Clone, Copy, Debug)]
pub struct CurationConfig {
    pub objects: usize,
    pub cams_per_object: usize,
    pub grasps_per_object: usize,
    pub negatives_per_object: usize,
    pub points_per_cloud: usize,
    /// Fraction of objects held out as the test split.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for CurationConfig {
    fn default() -> CurationConfig {
        CurationConfig {
            objects: 20,
            cams_per_object: 8,
            grasps_per_object: 200,
            negatives_per_object: 200,
            points_per_cloud: 512,
            test_fraction: 0.25,
            seed: 0,
        }
    }
}

// Stream slots per object: positives, negatives, then one per camera.
fn object_stream(object: usize, slot: u64) -> u64 {
    object as u64 * 1024 + slot
}

/// Curate a dataset over procedurally generated graspable primitives.
pub fn curate_dataset(cfg: &CurationConfig, gripper: &GripperSpec) -> Result<GraspDataset> {
    let shapes: Vec<PrimitiveShape> = (0..cfg.objects)
        .map(|i| random_graspable_shape(i, &mut stream(cfg.seed, object_stream(i, 3))))
        .collect();
    curate_dataset_over(&shapes, cfg, gripper)
}

/// Curate a dataset over caller-provided shapes: generate ground-truth
/// positives and hard negatives per object, render each camera view,
/// express all grasps in the camera frame, and zero-center jointly.
pub fn curate_dataset_over(
    shapes: &[PrimitiveShape],
    cfg: &CurationConfig,
    gripper: &GripperSpec,
) -> Result<GraspDataset> {
    assert!(!shapes.is_empty());
    let n_test = ((shapes.len() as f64) * cfg.test_fraction).round() as usize;
    let n_train = shapes.len() - n_test;

    let per_object: Vec<Result<Vec<SceneRecord>>> = shapes
        .par_iter()
        .enumerate()
        .map(|(o, shape)| curate_object(o, shape, o < n_train, cfg, gripper))
        .collect();

    let mut scenes = Vec::with_capacity(shapes.len() * cfg.cams_per_object);
    for object_scenes in per_object {
        scenes.extend(object_scenes?);
    }
    Ok(GraspDataset { scenes })
}

fn curate_object(
    o: usize,
    shape: &PrimitiveShape,
    is_train: bool,
    cfg: &CurationConfig,
    gripper: &GripperSpec,
) -> Result<Vec<SceneRecord>> {
    let object_id = format!("obj{o:03}");
    let positives = generate_ground_truth(
        shape,
        cfg.grasps_per_object,
        gripper,
        &mut stream(cfg.seed, object_stream(o, 0)),
    )?;
    let negatives = generate_negatives(
        shape,
        &positives,
        cfg.negatives_per_object,
        gripper,
        &mut stream(cfg.seed, object_stream(o, 1)),
    )?;

    let mut scenes = Vec::with_capacity(cfg.cams_per_object);
    for k in 0..cfg.cams_per_object {
        let scene_id = format!("{object_id}_cam{k:02}");
        let mut rng = stream(cfg.seed, object_stream(o, 4 + k as u64));
        let cam = random_camera(shape.pose_p, &mut rng);
        let cloud = render_cloud(shape, &cam, cfg.points_per_cloud, &mut rng).map_err(|e| {
            match e {
                Error::Render { reason, .. } => Error::Render { scene: scene_id.clone(), reason },
                other => other,
            }
        })?;
        let to_cam = cam.to_camera();
        let grasps_cam: Vec<GraspPose> = positives
            .iter()
            .chain(negatives.iter())
            .map(|g| transform_grasp(&to_cam, g))
            .collect();
        let (centered, shifted, offset) = zero_center(&cloud, &grasps_cam);
        let labeled = shifted
            .into_iter()
            .enumerate()
            .map(|(i, grasp)| LabeledGrasp { grasp, label: i < positives.len() })
            .collect();
        scenes.push(SceneRecord {
            scene_id,
            object_id: object_id.clone(),
            split: if is_train { Split::Train } else { Split::Test },
            shape: *shape,
            camera: cam,
            centroid_offset: offset,
            points: centered.points,
            grasps: labeled,
        });
    }
    Ok(scenes)
}

// ---------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct WireRecord {
    scene_id: String,
    object_id: String,
    split: Split,
    shape: WireShape,
    camera: WireCamera,
    centroid_offset: [f64; 3],
    points: Vec<f64>,
    grasps: Vec<WireGrasp>,
}

#[derive(Serialize, Deserialize)]
struct WireShape {
    kind: String,
    dims: Vec<f64>,
    pose: WirePose,
}

#[derive(Serialize, Deserialize)]
struct WirePose {
    q: [f64; 4],
    p: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct WireCamera {
    pos: [f64; 3],
    quat: [f64; 4],
}

#[derive(Serialize, Deserialize)]
struct WireGrasp {
    q: [f64; 4],
    p: [f64; 3],
    label: bool,
}

fn quat_array(q: UnitQuat) -> [f64; 4] {
    [q.w, q.x, q.y, q.z]
}

fn vec_array(v: Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

/// Round to `sig` significant decimal digits.
pub fn round_sig(x: f64, sig: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return 0.0;
    }
    let magnitude = x.abs().log10().floor() as i32;
    let factor = 10f64.powi(sig - 1 - magnitude);
    (x * factor).round() / factor
}

fn to_wire(record: &SceneRecord) -> WireRecord {
    let (kind, dims) = match record.shape.kind {
        ShapeKind::Box(d) => ("box", d.to_vec()),
        ShapeKind::Cylinder(d) => ("cylinder", d.to_vec()),
        ShapeKind::Sphere(d) => ("sphere", d.to_vec()),
    };
    let mut points = Vec::with_capacity(record.points.len() * 3);
    for p in &record.points {
        points.push(round_sig(p.x, 6));
        points.push(round_sig(p.y, 6));
        points.push(round_sig(p.z, 6));
    }
    WireRecord {
        scene_id: record.scene_id.clone(),
        object_id: record.object_id.clone(),
        split: record.split,
        shape: WireShape {
            kind: kind.to_string(),
            dims,
            pose: WirePose {
                q: quat_array(record.shape.pose_q),
                p: vec_array(record.shape.pose_p),
            },
        },
        camera: WireCamera {
            pos: vec_array(record.camera.position),
            quat: quat_array(record.camera.orientation),
        },
        centroid_offset: vec_array(record.centroid_offset),
        points,
        grasps: record
            .grasps
            .iter()
            .map(|g| WireGrasp {
                q: quat_array(g.grasp.q),
                p: vec_array(g.grasp.p),
                label: g.label,
            })
            .collect(),
    }
}

fn check_unit_quat(q: [f64; 4], what: &str, line: usize) -> Result<UnitQuat> {
    let quat = UnitQuat::new(q[0], q[1], q[2], q[3]);
    if !quat.is_unit() {
        return Err(Error::DatasetRecord {
            line,
            reason: format!("non-unit {what} quaternion (norm {})", quat.norm()),
        });
    }
    Ok(quat)
}

fn from_wire(wire: WireRecord, line: usize) -> Result<SceneRecord> {
    let bad = |reason: String| Error::DatasetRecord { line, reason };
    let kind = match (wire.shape.kind.as_str(), wire.shape.dims.as_slice()) {
        ("box", &[a, b, c]) => ShapeKind::Box([a, b, c]),
        ("cylinder", &[r, h]) => ShapeKind::Cylinder([r, h]),
        ("sphere", &[r]) => ShapeKind::Sphere([r]),
        (kind, dims) => {
            return Err(bad(format!("bad shape {kind} with {} dims", dims.len())));
        }
    };
    if wire.points.is_empty() || wire.points.len() % 3 != 0 {
        return Err(bad(format!("points length {} not a positive multiple of 3", wire.points.len())));
    }
    let shape_q = check_unit_quat(wire.shape.pose.q, "shape pose", line)?;
    let cam_q = check_unit_quat(wire.camera.quat, "camera", line)?;
    let mut grasps = Vec::with_capacity(wire.grasps.len());
    for g in &wire.grasps {
        let q = check_unit_quat(g.q, "grasp", line)?;
        grasps.push(LabeledGrasp {
            grasp: GraspPose::new(q, Vec3::new(g.p[0], g.p[1], g.p[2])),
            label: g.label,
        });
    }
    Ok(SceneRecord {
        scene_id: wire.scene_id,
        object_id: wire.object_id,
        split: wire.split,
        shape: PrimitiveShape::new(
            kind,
            shape_q,
            Vec3::new(wire.shape.pose.p[0], wire.shape.pose.p[1], wire.shape.pose.p[2]),
        ),
        camera: CameraPose {
            position: Vec3::new(wire.camera.pos[0], wire.camera.pos[1], wire.camera.pos[2]),
            orientation: cam_q,
        },
        centroid_offset: Vec3::new(
            wire.centroid_offset[0],
            wire.centroid_offset[1],
            wire.centroid_offset[2],
        ),
        points: wire
            .points
            .chunks_exact(3)
            .map(|c| Vec3::new(c[0], c[1], c[2]))
            .collect(),
        grasps,
    })
}

pub fn write_dataset<W: Write>(dataset: &GraspDataset, mut out: W) -> Result<()> {
    for record in &dataset.scenes {
        serde_json::to_writer(&mut out, &to_wire(record))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_dataset_file(dataset: &GraspDataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_dataset(dataset, std::io::BufWriter::new(file))
}

pub fn read_dataset<R: std::io::Read>(input: R) -> Result<GraspDataset> {
    let reader = BufReader::new(input);
    let mut scenes = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: WireRecord = serde_json::from_str(&line).map_err(|e| Error::DatasetRecord {
            line: i + 1,
            reason: e.to_string(),
        })?;
        scenes.push(from_wire(wire, i + 1)?);
    }
    Ok(GraspDataset { scenes })
}

pub fn read_dataset_file(path: &Path) -> Result<GraspDataset> {
    read_dataset(std::fs::File::open(path)?)
}
