//! File formats: per-camera motion files (parametric or joints-only),
//! camera/pose files, offset and SIM(3) artifacts, ground truth, refinement
//! outputs, reports, binary PPM images and training checkpoints.
//!
//! All JSON numbers are written with serde's shortest-round-trip float
//! encoding, so written files reload bit-exactly.

use crate::error::{Error, Result};
use crate::planefield::{Decoders, PlaneField};
use crate::posealign::{CameraPose, CameraTrajectory, Intrinsics, SimilarityTransform};
use crate::skeleton::{
    Frame, HumanState, JointFrame, JointSet, MotionSequence, JOINT_COUNT, SHAPE_COUNT,
};
use crate::timesync::{AlignmentMatrices, GlobalOffsets};
use nalgebra::{Matrix3, Vector3};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Parse {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| Error::Write {
            path: path.to_path_buf(),
            source,
        })?;
    }
    let file = fs::File::create(path).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer(&mut writer, value)?;
    writer.flush().map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

fn v3a(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn mat3_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ]
}

fn rows_mat3(r: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::new(
        r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
    )
}

// ---------------------------------------------------------------------------
// motion files

#[derive(Serialize, Deserialize)]
struct StateRecord {
    phi: [f64; 3],
    theta: Vec<[f64; 3]>,
    beta: Vec<f64>,
    gamma: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct FrameRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    states: Option<Vec<StateRecord>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    joints_canonical: Option<Vec<[f64; 3]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    joints_global: Option<Vec<[f64; 3]>>,
}

#[derive(Serialize, Deserialize)]
struct MotionRecord {
    camera_id: String,
    fps: f64,
    humans: usize,
    frames: Vec<FrameRecord>,
}

pub fn save_motion(path: &Path, seq: &MotionSequence) -> Result<()> {
    let frames = seq
        .frames
        .iter()
        .map(|f| match (&f.states, &f.canonical, &f.global) {
            (Some(states), _, _) => FrameRecord {
                states: Some(
                    states
                        .iter()
                        .map(|s| StateRecord {
                            phi: v3a(&s.root_orientation),
                            theta: s.body_pose.iter().map(v3a).collect(),
                            beta: s.shape.clone(),
                            gamma: v3a(&s.root_position),
                        })
                        .collect(),
                ),
                joints_canonical: None,
                joints_global: None,
            },
            (None, Some(canon), Some(global)) => FrameRecord {
                states: None,
                joints_canonical: Some(canon.positions.iter().map(v3a).collect()),
                joints_global: Some(global.positions.iter().map(v3a).collect()),
            },
            _ => unreachable!("frame must carry states or both joint sets"),
        })
        .collect();
    write_json(
        path,
        &MotionRecord {
            camera_id: seq.camera_id.clone(),
            fps: seq.fps,
            humans: seq.humans,
            frames,
        },
    )
}

pub fn load_motion(path: &Path) -> Result<MotionSequence> {
    let rec: MotionRecord = read_json(path)?;
    let frames = rec
        .frames
        .iter()
        .enumerate()
        .map(|(t, f)| match (&f.states, &f.joints_canonical, &f.joints_global) {
            (Some(states), _, _) => {
                for s in states {
                    if s.theta.len() != JOINT_COUNT || s.beta.len() != SHAPE_COUNT {
                        return Err(Error::InputError(format!(
                            "{}: frame {t} has malformed state (theta {} beta {})",
                            path.display(),
                            s.theta.len(),
                            s.beta.len()
                        )));
                    }
                }
                Ok(Frame {
                    states: Some(
                        states
                            .iter()
                            .map(|s| HumanState {
                                root_orientation: v3(s.phi),
                                body_pose: s.theta.iter().map(|a| v3(*a)).collect(),
                                shape: s.beta.clone(),
                                root_position: v3(s.gamma),
                            })
                            .collect(),
                    ),
                    canonical: None,
                    global: None,
                })
            }
            (None, Some(canon), Some(global)) => Ok(Frame {
                states: None,
                canonical: Some(JointSet {
                    kind: JointFrame::Canonical,
                    positions: canon.iter().map(|a| v3(*a)).collect(),
                }),
                global: Some(JointSet {
                    kind: JointFrame::Global,
                    positions: global.iter().map(|a| v3(*a)).collect(),
                }),
            }),
            _ => Err(Error::InputError(format!(
                "{}: frame {t} must carry \"states\" or both joints arrays",
                path.display()
            ))),
        })
        .collect::<Result<Vec<_>>>()?;
    let seq = MotionSequence {
        camera_id: rec.camera_id,
        fps: rec.fps,
        humans: rec.humans,
        frames,
    };
    seq.validate()?;
    Ok(seq)
}

// ---------------------------------------------------------------------------
// camera / pose files

#[derive(Serialize, Deserialize)]
struct PoseRecord {
    t: i64,
    #[serde(rename = "R")]
    rotation: [[f64; 3]; 3],
    tau: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct IntrinsicsRecord {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
}

#[derive(Serialize, Deserialize)]
struct CameraRecord {
    camera_id: String,
    frames: Vec<PoseRecord>,
    intrinsics: IntrinsicsRecord,
}

fn camera_to_record(traj: &CameraTrajectory) -> CameraRecord {
    CameraRecord {
        camera_id: traj.camera_id.clone(),
        frames: traj
            .poses
            .iter()
            .map(|p| PoseRecord {
                t: p.timestamp,
                rotation: mat3_rows(&p.rotation),
                tau: v3a(&p.translation),
            })
            .collect(),
        intrinsics: IntrinsicsRecord {
            fx: traj.intrinsics.fx,
            fy: traj.intrinsics.fy,
            cx: traj.intrinsics.cx,
            cy: traj.intrinsics.cy,
            width: traj.intrinsics.width,
            height: traj.intrinsics.height,
        },
    }
}

fn record_to_camera(rec: &CameraRecord) -> CameraTrajectory {
    CameraTrajectory {
        camera_id: rec.camera_id.clone(),
        poses: rec
            .frames
            .iter()
            .map(|p| CameraPose {
                rotation: rows_mat3(&p.rotation),
                translation: v3(p.tau),
                timestamp: p.t,
            })
            .collect(),
        intrinsics: Intrinsics {
            fx: rec.intrinsics.fx,
            fy: rec.intrinsics.fy,
            cx: rec.intrinsics.cx,
            cy: rec.intrinsics.cy,
            width: rec.intrinsics.width,
            height: rec.intrinsics.height,
        },
    }
}

pub fn save_trajectory(path: &Path, traj: &CameraTrajectory) -> Result<()> {
    write_json(path, &camera_to_record(traj))
}

pub fn load_trajectory(path: &Path) -> Result<CameraTrajectory> {
    let rec: CameraRecord = read_json(path)?;
    let traj = record_to_camera(&rec);
    traj.validate()?;
    Ok(traj)
}

pub fn save_poses(path: &Path, trajectories: &[CameraTrajectory]) -> Result<()> {
    let recs: Vec<CameraRecord> = trajectories.iter().map(camera_to_record).collect();
    write_json(path, &recs)
}

pub fn load_poses(path: &Path) -> Result<Vec<CameraTrajectory>> {
    let recs: Vec<CameraRecord> = read_json(path)?;
    Ok(recs.iter().map(record_to_camera).collect())
}

// ---------------------------------------------------------------------------
// offsets / sim3 artifacts

#[derive(Serialize, Deserialize)]
pub struct OffsetsFile {
    pub anchor: usize,
    pub offsets: Vec<i64>,
    pub cost_matrix: Vec<Vec<f64>>,
    pub offset_matrix: Vec<Vec<i64>>,
    /// Frame rate the offsets are expressed in (the common upsampled rate).
    pub common_fps: f64,
}

pub fn save_offsets(
    path: &Path,
    offsets: &GlobalOffsets,
    mats: &AlignmentMatrices,
    common_fps: f64,
) -> Result<()> {
    write_json(
        path,
        &OffsetsFile {
            anchor: offsets.anchor,
            offsets: offsets.offsets.clone(),
            cost_matrix: mats.cost.clone(),
            offset_matrix: mats.offset.clone(),
            common_fps,
        },
    )
}

pub fn load_offsets(path: &Path) -> Result<(GlobalOffsets, AlignmentMatrices, f64)> {
    let f: OffsetsFile = read_json(path)?;
    Ok((
        GlobalOffsets {
            offsets: f.offsets,
            anchor: f.anchor,
        },
        AlignmentMatrices {
            cost: f.cost_matrix,
            offset: f.offset_matrix,
        },
        f.common_fps,
    ))
}

#[derive(Serialize, Deserialize)]
struct Sim3Record {
    camera_id: String,
    scale_src: f64,
    scale_dst: f64,
    centroid_src: [f64; 3],
    centroid_dst: [f64; 3],
    rotation: [[f64; 3]; 3],
}

pub fn save_sim3(path: &Path, entries: &[(String, SimilarityTransform)]) -> Result<()> {
    let recs: Vec<Sim3Record> = entries
        .iter()
        .map(|(id, t)| Sim3Record {
            camera_id: id.clone(),
            scale_src: t.scale_src,
            scale_dst: t.scale_dst,
            centroid_src: v3a(&t.centroid_src),
            centroid_dst: v3a(&t.centroid_dst),
            rotation: mat3_rows(&t.rotation),
        })
        .collect();
    write_json(path, &recs)
}

pub fn load_sim3(path: &Path) -> Result<Vec<(String, SimilarityTransform)>> {
    let recs: Vec<Sim3Record> = read_json(path)?;
    Ok(recs
        .into_iter()
        .map(|r| {
            (
                r.camera_id,
                SimilarityTransform {
                    scale_src: r.scale_src,
                    scale_dst: r.scale_dst,
                    centroid_src: v3(r.centroid_src),
                    centroid_dst: v3(r.centroid_dst),
                    rotation: rows_mat3(&r.rotation),
                },
            )
        })
        .collect())
}

// ---------------------------------------------------------------------------
// ground truth

/// Everything the simulator knows: per-camera true offsets (frames of the
/// reference rate), world-frame trajectories and the world-to-video SIM(3)
/// of every camera.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub offsets: Vec<i64>,
    pub fps_ref: f64,
    pub sim3: Vec<SimilarityTransform>,
    pub world_trajectories: Vec<CameraTrajectory>,
}

#[derive(Serialize, Deserialize)]
struct GroundTruthFile {
    offsets: Vec<i64>,
    fps_ref: f64,
    sim3: Vec<Sim3Record>,
    world_trajectories: Vec<CameraRecord>,
}

pub fn save_ground_truth(path: &Path, gt: &GroundTruth, camera_ids: &[String]) -> Result<()> {
    write_json(
        path,
        &GroundTruthFile {
            offsets: gt.offsets.clone(),
            fps_ref: gt.fps_ref,
            sim3: gt
                .sim3
                .iter()
                .zip(camera_ids)
                .map(|(t, id)| Sim3Record {
                    camera_id: id.clone(),
                    scale_src: t.scale_src,
                    scale_dst: t.scale_dst,
                    centroid_src: v3a(&t.centroid_src),
                    centroid_dst: v3a(&t.centroid_dst),
                    rotation: mat3_rows(&t.rotation),
                })
                .collect(),
            world_trajectories: gt.world_trajectories.iter().map(camera_to_record).collect(),
        },
    )
}

pub fn load_ground_truth(path: &Path) -> Result<GroundTruth> {
    let f: GroundTruthFile = read_json(path)?;
    Ok(GroundTruth {
        offsets: f.offsets,
        fps_ref: f.fps_ref,
        sim3: f
            .sim3
            .iter()
            .map(|r| SimilarityTransform {
                scale_src: r.scale_src,
                scale_dst: r.scale_dst,
                centroid_src: v3(r.centroid_src),
                centroid_dst: v3(r.centroid_dst),
                rotation: rows_mat3(&r.rotation),
            })
            .collect(),
        world_trajectories: f.world_trajectories.iter().map(record_to_camera).collect(),
    })
}

// ---------------------------------------------------------------------------
// refinement output and metrics log

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinedCamera {
    pub camera_id: String,
    #[serde(rename = "R")]
    pub rotation: [[f64; 3]; 3],
    pub tau: [f64; 3],
    /// Continuous time offset, frames of the common rate.
    pub dt: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinedFile {
    pub cameras: Vec<RefinedCamera>,
    pub anchor: usize,
    pub schedule: serde_json::Value,
}

impl RefinedFile {
    pub fn pose(&self, i: usize) -> CameraPose {
        CameraPose {
            rotation: rows_mat3(&self.cameras[i].rotation),
            translation: v3(self.cameras[i].tau),
            timestamp: 0,
        }
    }
}

pub fn refined_camera(id: &str, pose: &CameraPose, dt: f64) -> RefinedCamera {
    RefinedCamera {
        camera_id: id.to_string(),
        rotation: mat3_rows(&pose.rotation),
        tau: v3a(&pose.translation),
        dt,
    }
}

/// One line of the training metrics log (line-delimited JSON).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rot_err_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trans_err: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt_err: Option<f64>,
}

pub fn save_metrics_log(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| Error::Write {
            path: path.to_path_buf(),
            source,
        })?;
    }
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_metrics_log(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|source| Error::Parse {
                path: path.to_path_buf(),
                source,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// checkpoints

pub const CHECKPOINT_VERSION: u32 = 1;

/// Self-describing training checkpoint: all plane arrays, decoder
/// parameters, the schedule step and the current calibration parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub step: usize,
    pub field: PlaneField,
    pub decoders: Decoders,
    pub pose_deltas: Vec<[f64; 6]>,
    pub offsets: Vec<f64>,
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_json(path, ckpt)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let ckpt: Checkpoint = read_json(path)?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::InputError(format!(
            "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
            ckpt.version
        )));
    }
    Ok(ckpt)
}

// ---------------------------------------------------------------------------
// PPM images

/// RGB image with values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Vector3<f64>>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![Vector3::zeros(); width * height],
        }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &Vector3<f64> {
        &self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut Vector3<f64> {
        &mut self.pixels[y * self.width + x]
    }
}

/// Writes a binary P6 8-bit PPM.
pub fn write_ppm(path: &Path, image: &Image) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| Error::Write {
            path: path.to_path_buf(),
            source,
        })?;
    }
    let mut buf = Vec::with_capacity(32 + image.pixels.len() * 3);
    buf.extend_from_slice(format!("P6\n{} {}\n255\n", image.width, image.height).as_bytes());
    for p in &image.pixels {
        for c in 0..3 {
            buf.push((p[c].clamp(0.0, 1.0) * 255.0 + 0.5) as u8);
        }
    }
    fs::write(path, buf).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a binary P6 8-bit PPM.
pub fn read_ppm(path: &Path) -> Result<Image> {
    let data = fs::read(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |msg: &str| Error::InputError(format!("{}: {msg}", path.display()));
    let mut cursor = data.as_slice();
    let mut token = || -> Result<String> {
        let mut out = String::new();
        let mut byte = [0u8; 1];
        loop {
            cursor.read_exact(&mut byte).map_err(|_| bad("truncated header"))?;
            let c = byte[0] as char;
            if c.is_ascii_whitespace() {
                if !out.is_empty() {
                    return Ok(out);
                }
            } else if c == '#' {
                while cursor.read_exact(&mut byte).is_ok() && byte[0] != b'\n' {}
            } else {
                out.push(c);
            }
        }
    };
    if token()? != "P6" {
        return Err(bad("not a binary P6 PPM"));
    }
    let width: usize = token()?.parse().map_err(|_| bad("bad width"))?;
    let height: usize = token()?.parse().map_err(|_| bad("bad height"))?;
    let maxval: usize = token()?.parse().map_err(|_| bad("bad maxval"))?;
    if maxval != 255 {
        return Err(bad("only 8-bit PPMs supported"));
    }
    let expected = width * height * 3;
    if cursor.len() < expected {
        return Err(bad("truncated pixel data"));
    }
    let pixels = cursor[..expected]
        .chunks_exact(3)
        .map(|c| Vector3::new(c[0] as f64 / 255.0, c[1] as f64 / 255.0, c[2] as f64 / 255.0))
        .collect();
    Ok(Image {
        width,
        height,
        pixels,
    })
}

// ---------------------------------------------------------------------------
// dataset directory layout

pub fn motions_dir(dataset: &Path) -> PathBuf {
    dataset.join("motions")
}

pub fn cameras_dir(dataset: &Path) -> PathBuf {
    dataset.join("cameras")
}

pub fn images_dir(dataset: &Path, camera_id: &str) -> PathBuf {
    dataset.join("images").join(camera_id)
}

pub fn image_path(dataset: &Path, camera_id: &str, frame: usize) -> PathBuf {
    images_dir(dataset, camera_id).join(format!("{frame:06}.ppm"))
}

pub fn gt_path(dataset: &Path) -> PathBuf {
    dataset.join("gt.json")
}

fn sorted_json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|source| Error::Read {
            path: dir.to_path_buf(),
            source,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    Ok(files)
}

/// Loads all motion sequences of a dataset, sorted by file name.
pub fn load_all_motions(dataset: &Path) -> Result<Vec<MotionSequence>> {
    sorted_json_files(&motions_dir(dataset))?
        .iter()
        .map(|p| load_motion(p))
        .collect()
}

/// Loads all camera trajectories of a dataset, sorted by file name.
pub fn load_all_cameras(dataset: &Path) -> Result<Vec<CameraTrajectory>> {
    sorted_json_files(&cameras_dir(dataset))?
        .iter()
        .map(|p| load_trajectory(p))
        .collect()
}
