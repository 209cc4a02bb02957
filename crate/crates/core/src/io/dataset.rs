//! `transforms_{train,val,test}.json` datasets: a shared horizontal field of
//! view (or explicit intrinsics) and per-frame OpenGL camera-to-world poses
//! with an optional time stamp.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::io::image_io::{read_png, write_png};
use crate::io::IoError;
use crate::math::{Mat3, Mat4};
use crate::render::{Camera, Image};

/// Poses whose rotation block deviates from orthonormal by more than this are
/// rejected; smaller deviations are projected back onto a rotation.
const POSE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        Split::ALL.into_iter().find(|x| x.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub camera: Camera,
    pub image: Image,
    /// Path as written in the transforms file.
    pub file_path: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<Frame>,
    pub val: Vec<Frame>,
    pub test: Vec<Frame>,
    /// Native time mapped to 0.
    pub time_offset: f64,
    /// Native time span mapped to 1 (1 when all times are equal).
    pub time_scale: f64,
}

impl Dataset {
    pub fn split(&self, s: Split) -> &[Frame] {
        match s {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn split_mut(&mut self, s: Split) -> &mut Vec<Frame> {
        match s {
            Split::Train => &mut self.train,
            Split::Val => &mut self.val,
            Split::Test => &mut self.test,
        }
    }

    pub fn image_size(&self) -> Option<(usize, usize)> {
        Split::ALL
            .iter()
            .flat_map(|&s| self.split(s).first())
            .map(|f| (f.camera.width, f.camera.height))
            .next()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TransformsFile {
    camera_angle_x: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fl_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fl_y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cy: Option<f64>,
    frames: Vec<FrameEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FrameEntry {
    file_path: String,
    transform_matrix: [[f64; 4]; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    time: Option<f64>,
}

fn to_mat4(rows: &[[f64; 4]; 4]) -> Mat4 {
    Mat4::from_fn(|i, j| rows[i][j])
}

fn from_mat4(m: &Mat4) -> [[f64; 4]; 4] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

/// Validates a camera-to-world pose and snaps small rotation errors away.
fn clean_pose(m: &Mat4, frame: &str) -> Result<Mat4, IoError> {
    let r: Mat3 = m.fixed_view::<3, 3>(0, 0).into_owned();
    let err = (r * r.transpose() - Mat3::identity()).abs().max();
    if !(err <= POSE_TOLERANCE) || r.determinant() <= 0.0 {
        return Err(IoError::NonInvertiblePose { frame: frame.into(), error: err });
    }
    if err <= 1e-9 {
        return Ok(*m);
    }
    let svd = r.svd(true, true);
    let fixed = svd.u.unwrap() * svd.v_t.unwrap();
    let mut out = *m;
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&fixed);
    Ok(out)
}

fn image_path(dir: &Path, file_path: &str) -> PathBuf {
    let p = dir.join(file_path);
    if p.extension().is_some() {
        p
    } else {
        p.with_extension("png")
    }
}

struct RawSplit {
    split: Split,
    file: TransformsFile,
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, IoError> {
    load_dataset_with_background(dir, [0.0; 3])
}

/// Loads every split present in `dir`. Times are min-max normalized over all
/// splits together so they share one clock.
pub fn load_dataset_with_background(dir: &Path, background: [f64; 3]) -> Result<Dataset, IoError> {
    let mut raws = Vec::new();
    for split in Split::ALL {
        let path = dir.join(format!("transforms_{}.json", split.name()));
        if !path.exists() {
            continue;
        }
        let text = fs::read_to_string(&path)?;
        let file: TransformsFile = serde_json::from_str(&text)
            .map_err(|e| IoError::MalformedJson { path: path.clone(), message: e.to_string() })?;
        raws.push(RawSplit { split, file });
    }
    if raws.is_empty() {
        return Err(IoError::MissingFile(dir.join("transforms_train.json")));
    }

    let times = raws.iter().flat_map(|r| r.file.frames.iter().map(|f| f.time.unwrap_or(0.0)));
    let (lo, hi) = times.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), t| (a.min(t), b.max(t)));
    let (offset, scale) = if hi > lo { (lo, hi - lo) } else { (if lo.is_finite() { lo } else { 0.0 }, 1.0) };

    let mut ds = Dataset { train: vec![], val: vec![], test: vec![], time_offset: offset, time_scale: scale };
    let mut expected: Option<(usize, usize)> = None;
    for raw in raws {
        let f = &raw.file;
        for entry in &f.frames {
            let path = image_path(dir, &entry.file_path);
            let image = read_png(&path, background)?;
            let size = (image.width, image.height);
            match expected {
                Some(e) if e != size => return Err(IoError::ImageSize { path, expected: e, got: size }),
                _ => expected = Some(size),
            }
            let (w, h) = size;
            let fx = f.fl_x.unwrap_or(0.5 * w as f64 / (0.5 * f.camera_angle_x).tan());
            let fy = f.fl_y.unwrap_or(fx);
            let cx = f.cx.unwrap_or(0.5 * w as f64);
            let cy = f.cy.unwrap_or(0.5 * h as f64);
            let pose = clean_pose(&to_mat4(&entry.transform_matrix), &entry.file_path)?;
            let time = (entry.time.unwrap_or(0.0) - offset) / scale;
            let camera = Camera::from_gl_camera_to_world(&pose, w, h, fx, fy, cx, cy, time)?;
            ds.split_mut(raw.split).push(Frame { camera, image, file_path: entry.file_path.clone() });
        }
    }
    Ok(ds)
}

/// Writes transforms files and 8-bit PNGs. Times are written normalized.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<(), IoError> {
    fs::create_dir_all(dir)?;
    for split in Split::ALL {
        let frames = ds.split(split);
        if frames.is_empty() {
            continue;
        }
        fs::create_dir_all(dir.join(split.name()))?;
        let first = &frames[0].camera;
        let mut entries = Vec::with_capacity(frames.len());
        for (i, fr) in frames.iter().enumerate() {
            let rel = if fr.file_path.is_empty() {
                format!("./{}/r_{:03}", split.name(), i)
            } else {
                fr.file_path.clone()
            };
            write_png(&image_path(dir, &rel), &fr.image.clamped())?;
            entries.push(FrameEntry {
                file_path: rel,
                transform_matrix: from_mat4(&fr.camera.gl_camera_to_world()),
                time: Some(fr.camera.time),
            });
        }
        let file = TransformsFile {
            camera_angle_x: 2.0 * (0.5 * first.width as f64 / first.fx).atan(),
            fl_x: Some(first.fx),
            fl_y: Some(first.fy),
            cx: Some(first.cx),
            cy: Some(first.cy),
            frames: entries,
        };
        let text = serde_json::to_string_pretty(&file).expect("transforms serialize");
        fs::write(dir.join(format!("transforms_{}.json", split.name())), text)?;
    }
    Ok(())
}

/// A single camera for `render` and `flow`: size, intrinsics and an OpenGL
/// camera-to-world pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraFile {
    pub width: usize,
    pub height: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera_angle_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fl_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fl_y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cy: Option<f64>,
    pub transform_matrix: [[f64; 4]; 4],
}

impl CameraFile {
    pub fn from_camera(cam: &Camera) -> Self {
        CameraFile {
            width: cam.width,
            height: cam.height,
            camera_angle_x: None,
            fl_x: Some(cam.fx),
            fl_y: Some(cam.fy),
            cx: Some(cam.cx),
            cy: Some(cam.cy),
            transform_matrix: from_mat4(&cam.gl_camera_to_world()),
        }
    }

    pub fn to_camera(&self, time: f64) -> Result<Camera, IoError> {
        let fx = match (self.fl_x, self.camera_angle_x) {
            (Some(f), _) => f,
            (None, Some(a)) => 0.5 * self.width as f64 / (0.5 * a).tan(),
            (None, None) => {
                return Err(IoError::MalformedJson {
                    path: PathBuf::new(),
                    message: "camera needs fl_x or camera_angle_x".into(),
                })
            }
        };
        let pose = clean_pose(&to_mat4(&self.transform_matrix), "camera")?;
        Ok(Camera::from_gl_camera_to_world(
            &pose,
            self.width,
            self.height,
            fx,
            self.fl_y.unwrap_or(fx),
            self.cx.unwrap_or(0.5 * self.width as f64),
            self.cy.unwrap_or(0.5 * self.height as f64),
            time,
        )?)
    }
}

pub fn load_camera_file(path: &Path) -> Result<CameraFile, IoError> {
    if !path.exists() {
        return Err(IoError::MissingFile(path.to_path_buf()));
    }
    serde_json::from_str(&fs::read_to_string(path)?)
        .map_err(|e| IoError::MalformedJson { path: path.to_path_buf(), message: e.to_string() })
}

pub fn save_camera_file(path: &Path, cam: &CameraFile) -> Result<(), IoError> {
    fs::write(path, serde_json::to_string_pretty(cam).expect("camera serialize"))?;
    Ok(())
}
