//! File codecs: camera JSON, pose JSONL, binary PNM images, model files.
//!
//! Every writer goes through [`write_atomic`], so a failed run never
//! leaves a truncated output behind.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{Point2, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::image_warp::Image;
use crate::lifting::{EpochLoss, NormStats, TrainConfig, TrainedModel};
use crate::mlp::Mlp;
use crate::pose::{Pose2D, Pose3D};
use crate::synthetic::Sample;

/// Writes `bytes` to a sibling temp file, syncs it and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses a JSON document, attributing errors to `path`.
pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// Pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &to_json_bytes(value)?)
}

pub fn read_camera(path: &Path) -> Result<CameraIntrinsics> {
    read_json(path)
}

pub fn write_camera(path: &Path, cam: &CameraIntrinsics) -> Result<()> {
    write_json(path, cam)
}

/// One line of a pose JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    pub joints2d: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joints3d: Option<Vec<[f64; 3]>>,
    pub root: usize,
}

impl PoseRecord {
    pub fn from_pose2d(p: &Pose2D) -> Self {
        PoseRecord {
            joints2d: p.joints.iter().map(|j| [j.x, j.y]).collect(),
            joints3d: None,
            root: p.root,
        }
    }

    pub fn from_sample(s: &Sample) -> Self {
        PoseRecord {
            joints3d: Some(s.pose3d.joints.iter().map(|j| [j.x, j.y, j.z]).collect()),
            ..Self::from_pose2d(&s.pose2d)
        }
    }

    pub fn pose2d(&self) -> Result<Pose2D> {
        if self.joints2d.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("2D keypoints must be finite".into()));
        }
        Pose2D::new(self.joints2d.iter().map(|j| Point2::new(j[0], j[1])).collect(), self.root)
    }

    pub fn sample(&self) -> Result<Sample> {
        let joints3d = self
            .joints3d
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("record has no joints3d".into()))?;
        if joints3d.len() != self.joints2d.len() {
            return Err(Error::InvalidInput(format!(
                "{} 2D keypoints but {} 3D joints",
                self.joints2d.len(),
                joints3d.len()
            )));
        }
        if joints3d.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("3D joints must be finite".into()));
        }
        Ok(Sample {
            pose2d: self.pose2d()?,
            pose3d: Pose3D::new(joints3d.iter().map(|j| Vector3::new(j[0], j[1], j[2])).collect(), self.root)?,
        })
    }
}

/// Serializes records one JSON object per line.
pub fn pose_jsonl_bytes(records: &[PoseRecord]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::InvalidInput(e.to_string()))?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn write_pose_jsonl(path: &Path, records: &[PoseRecord]) -> Result<()> {
    write_atomic(path, &pose_jsonl_bytes(records)?)
}

/// Reads a pose JSONL file; blank lines are skipped.
pub fn read_pose_jsonl(path: &Path) -> Result<Vec<PoseRecord>> {
    let text = read_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: PoseRecord = serde_json::from_str(line)
            .map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
        rec.pose2d()
            .map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Reads records that must all carry 3D joints.
pub fn read_samples(path: &Path) -> Result<Vec<Sample>> {
    read_pose_jsonl(path)?
        .iter()
        .enumerate()
        .map(|(i, r)| r.sample().map_err(|e| Error::format(path, format!("record {}: {e}", i + 1))))
        .collect()
}

/// Encodes a 1-channel image as P5 or a 3-channel image as P6 (maxval 255).
///
/// Values are clamped to `[0, 1]` and rounded half-up.
pub fn encode_pnm(img: &Image) -> Result<Vec<u8>> {
    let magic = match img.channels() {
        1 => "P5",
        3 => "P6",
        c => return Err(Error::InvalidInput(format!("PNM needs 1 or 3 channels, got {c}"))),
    };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8));
    Ok(out)
}

/// Decodes binary P5/P6 with maxval up to 255 into values in `[0, 1]`.
pub fn decode_pnm(bytes: &[u8]) -> std::result::Result<Image, String> {
    let mut pos = 0;
    let mut token = || -> std::result::Result<String, String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let channels = match token()?.as_str() {
        "P5" => 1,
        "P6" => 3,
        m => return Err(format!("unsupported PNM magic '{m}' (expected P5 or P6)")),
    };
    let mut num = |what: &str| -> std::result::Result<usize, String> {
        token()?.parse::<usize>().map_err(|_| format!("invalid {what}"))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if width == 0 || height == 0 {
        return Err("image dimensions must be positive".into());
    }
    if !(1..=255).contains(&maxval) {
        return Err(format!("maxval {maxval} unsupported (expected 1..=255)"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let start = pos + 1;
    let n = width * height * channels;
    if bytes.len() < start + n {
        return Err(format!("raster truncated: expected {n} bytes"));
    }
    let data = bytes[start..start + n].iter().map(|&b| b as f64 / maxval as f64).collect();
    Image::new(height, width, channels, data).map_err(|e| e.to_string())
}

pub fn read_pnm(path: &Path) -> Result<Image> {
    decode_pnm(&read_bytes(path)?).map_err(|m| Error::format(path, m))
}

pub fn write_pnm(path: &Path, img: &Image) -> Result<()> {
    write_atomic(path, &encode_pnm(img)?)
}

/// On-disk form of a trained lifting model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRecord {
    pub n_in: usize,
    pub hidden: usize,
    pub n_out: usize,
    pub params: Vec<f64>,
    pub stats: NormStats,
    pub config: TrainConfig,
    pub curve: Vec<EpochLoss>,
    pub best_epoch: usize,
}

impl From<&TrainedModel> for ModelRecord {
    fn from(m: &TrainedModel) -> Self {
        ModelRecord {
            n_in: m.mlp.n_in(),
            hidden: m.mlp.hidden(),
            n_out: m.mlp.n_out(),
            params: m.mlp.params().to_vec(),
            stats: m.stats.clone(),
            config: m.config.clone(),
            curve: m.curve.clone(),
            best_epoch: m.best_epoch,
        }
    }
}

impl TryFrom<ModelRecord> for TrainedModel {
    type Error = Error;

    fn try_from(r: ModelRecord) -> Result<Self> {
        let dims_ok = r.stats.input_mean.len() == r.n_in
            && r.stats.input_std.len() == r.n_in
            && r.stats.output_mean.len() == r.n_out
            && r.stats.output_std.len() == r.n_out;
        if !dims_ok {
            return Err(Error::InvalidInput("normalization statistics do not match the network".into()));
        }
        r.config.validate()?;
        Ok(TrainedModel {
            mlp: Mlp::from_params(r.n_in, r.hidden, r.n_out, r.params)?,
            stats: r.stats,
            config: r.config,
            curve: r.curve,
            best_epoch: r.best_epoch,
        })
    }
}

pub fn write_model(path: &Path, m: &TrainedModel) -> Result<()> {
    write_json(path, &ModelRecord::from(m))
}

pub fn read_model(path: &Path) -> Result<TrainedModel> {
    let rec: ModelRecord = read_json(path)?;
    TrainedModel::try_from(rec).map_err(|e| Error::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{gen_figure_dataset, DatasetSpec, Placement};

    fn tmpdir(tag: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("pcl-io-{tag}-{}", std::process::id()));
        fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn pnm_round_trip() {
        let img = Image::from_fn(5, 7, 3, |r, c, k| ((r * 7 + c) * 3 + k) as f64 / 255.0).unwrap();
        let back = decode_pnm(&encode_pnm(&img).unwrap()).unwrap();
        assert_eq!(back, img);
        let gray = Image::from_fn(2, 3, 1, |r, c, _| (r + c) as f64 / 255.0).unwrap();
        assert_eq!(decode_pnm(&encode_pnm(&gray).unwrap()).unwrap(), gray);
    }

    #[test]
    fn pnm_rounding_and_clamping() {
        let img = Image::new(1, 4, 1, vec![-0.5, 0.5 / 255.0, 0.4 / 255.0, 1.7]).unwrap();
        let bytes = encode_pnm(&img).unwrap();
        assert_eq!(&bytes[bytes.len() - 4..], &[0, 1, 0, 255]);
    }

    #[test]
    fn pnm_header_comments_and_errors() {
        let bytes = b"P5\n# comment\n2 1\n# another\n255\n\x00\xff";
        let img = decode_pnm(bytes).unwrap();
        assert_eq!(img.data(), &[0.0, 1.0]);
        assert!(decode_pnm(b"P3\n1 1\n255\n0").is_err());
        assert!(decode_pnm(b"P5\n2 2\n255\n\x00").is_err());
        assert!(decode_pnm(b"P5\n2 2\n65535\n").is_err());
    }

    #[test]
    fn pose_jsonl_round_trip() {
        let cam = CameraIntrinsics::new(0.6, 0.6, 0.5, 0.5, 1000, 1000).unwrap();
        let samples = gen_figure_dataset(&DatasetSpec::figures(5, Placement::General, cam, 1)).unwrap();
        let recs: Vec<PoseRecord> = samples.iter().map(PoseRecord::from_sample).collect();
        let dir = tmpdir("jsonl");
        let path = dir.join("poses.jsonl");
        write_pose_jsonl(&path, &recs).unwrap();
        assert_eq!(read_samples(&path).unwrap(), samples);
        let again = dir.join("again.jsonl");
        write_pose_jsonl(&again, &read_pose_jsonl(&path).unwrap()).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
    }

    #[test]
    fn pose_jsonl_errors_name_line() {
        let dir = tmpdir("badjsonl");
        let path = dir.join("bad.jsonl");
        fs::write(&path, "{\"joints2d\":[[0.1,0.2]],\"root\":0}\n{\"joints2d\":[],\"root\":0}\n").unwrap();
        let err = read_pose_jsonl(&path).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        fs::write(&path, "{\"joints2d\":[[0.1,0.2]],\"root\":0,\"extra\":1}\n").unwrap();
        assert!(read_pose_jsonl(&path).is_err());
        fs::write(&path, "{\"joints2d\":[[0.1,0.2]],\"root\":0}\n").unwrap();
        assert!(read_samples(&path).is_err());
    }

    #[test]
    fn camera_round_trip_and_validation() {
        let dir = tmpdir("cam");
        let path = dir.join("cam.json");
        let cam = CameraIntrinsics::new(0.61, 0.59, 0.49, 0.51, 640, 480).unwrap();
        write_camera(&path, &cam).unwrap();
        assert_eq!(read_camera(&path).unwrap(), cam);
        fs::write(&path, r#"{"fx":-1,"fy":1,"cx":0.5,"cy":0.5,"width":10,"height":10}"#).unwrap();
        assert!(read_camera(&path).is_err());
        let missing = dir.join("nope.json");
        let err = read_camera(&missing).unwrap_err().to_string();
        assert!(err.contains("nope.json"));
    }

    #[test]
    fn model_round_trip() {
        let cam = CameraIntrinsics::new(0.6, 0.6, 0.5, 0.5, 1000, 1000).unwrap();
        let set = crate::lifting::LiftingSet {
            camera: cam,
            samples: gen_figure_dataset(&DatasetSpec::figures(40, Placement::General, cam, 2)).unwrap(),
        };
        let cfg = TrainConfig {
            epochs: 1,
            hidden: 8,
            ..Default::default()
        };
        let model = crate::lifting::train(&set, &cfg).unwrap();
        let dir = tmpdir("model");
        let path = dir.join("m.json");
        write_model(&path, &model).unwrap();
        assert_eq!(read_model(&path).unwrap(), model);
    }

    #[test]
    fn atomic_write_leaves_no_temp_files() {
        let dir = tmpdir("atomic");
        let path = dir.join("out.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        let names: Vec<_> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 1);
        assert!(write_atomic(&dir.join("missing/dir/x"), b"x").is_err());
    }
}
