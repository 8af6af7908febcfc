//! Dataset directories.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/<sequence>/odometry.csv   t,dx,dy,dtheta,a0..a{A-1}[,gt_x,gt_y,gt_theta]
//! <dir>/<sequence>/frames/000000.png, 000001.png, ...   (one per CSV row, in row order)
//! ```
//!
//! Frames are 8-bit grayscale or RGB PNGs; a pixel byte `k` loads as `k / 255`.
//! CSV numbers use the shortest decimal form that parses back to the same
//! `f64`, so a save/load round trip is bit-exact. Recorded logs can use the
//! same layout with `sim` set to null and the ground-truth columns omitted.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SimConfig;
use crate::domain::{validate_sequence, Action, FrameRecord, ImageShape, Observation, OdometryDelta, Pose2D};
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceEntry {
    pub name: String,
    /// Directory relative to the dataset root.
    pub path: String,
    pub frame_count: usize,
    pub image_shape: ImageShape,
    pub action_dim: usize,
    pub has_ground_truth: bool,
    pub seed: Option<u64>,
    /// Frames where simulated odometry reset. Evaluation only.
    #[serde(default)]
    pub reset_frames: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: Option<u64>,
    /// Generator settings; null for recorded logs.
    pub sim: Option<SimConfig>,
    pub sequences: Vec<SequenceEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub entry: SequenceEntry,
    pub frames: Vec<FrameRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub sequences: Vec<Sequence>,
}

impl Dataset {
    pub fn image_shape(&self) -> Option<ImageShape> {
        self.sequences.first().map(|s| s.entry.image_shape)
    }

    pub fn action_dim(&self) -> Option<usize> {
        self.sequences.first().map(|s| s.entry.action_dim)
    }

    pub fn frame_count(&self) -> usize {
        self.sequences.iter().map(|s| s.frames.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.manifest.sequences.len() != self.sequences.len() {
            return Err(Error::OutOfRange(format!(
                "manifest lists {} sequences, dataset holds {}",
                self.manifest.sequences.len(),
                self.sequences.len()
            )));
        }
        let shape = self.image_shape();
        let adim = self.action_dim();
        for (s, m) in self.sequences.iter().zip(&self.manifest.sequences) {
            if &s.entry != m {
                return Err(Error::OutOfRange(format!("sequence {} disagrees with manifest", s.entry.name)));
            }
            validate_sequence(&s.frames)?;
            if s.frames.len() != m.frame_count {
                return Err(Error::OutOfRange(format!(
                    "sequence {}: manifest says {} frames, found {}",
                    m.name,
                    m.frame_count,
                    s.frames.len()
                )));
            }
            if Some(m.image_shape) != shape || Some(m.action_dim) != adim {
                return Err(Error::OutOfRange(format!(
                    "sequence {} differs in image shape or action dimension",
                    m.name
                )));
            }
            if s.frames[0].observation.shape() != m.image_shape || s.frames[0].action.dim() != m.action_dim {
                return Err(Error::OutOfRange(format!("sequence {} frames disagree with manifest", m.name)));
            }
            if s.frames.iter().any(|f| f.ground_truth.is_some() != m.has_ground_truth) {
                return Err(Error::OutOfRange(format!("sequence {} has partial ground truth", m.name)));
            }
        }
        Ok(())
    }
}

fn png_bytes(obs: &Observation) -> Result<Vec<u8>> {
    let shape = obs.shape();
    let color = match shape.channels {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        c => return Err(Error::Config(format!("cannot store {c}-channel images as PNG"))),
    };
    let data: Vec<u8> = obs
        .pixels()
        .iter()
        .map(|&v| {
            let k = (v * 255.0).round();
            if (0.0..=255.0).contains(&k) && k / 255.0 == v {
                Ok(k as u8)
            } else {
                Err(Error::OutOfRange(format!("pixel value {v} is not an 8-bit level")))
            }
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, shape.width as u32, shape.height as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header().map_err(|e| Error::Config(e.to_string()))?;
    w.write_image_data(&data).map_err(|e| Error::Config(e.to_string()))?;
    w.finish().map_err(|e| Error::Config(e.to_string()))?;
    Ok(out)
}

fn read_png(path: &Path, expect: ImageShape) -> Result<Observation> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = png::Decoder::new(BufReader::new(file))
        .read_info()
        .map_err(|e| Error::format(path, e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::format(path, e.to_string()))?;
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => return Err(Error::format(path, format!("unsupported color type {other:?}"))),
    };
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::format(path, "only 8-bit images are supported"));
    }
    let shape = ImageShape::new(info.height as usize, info.width as usize, channels);
    if shape != expect {
        return Err(Error::format(path, format!("image is {shape}, manifest says {expect}")));
    }
    let pixels = buf[..info.buffer_size()].iter().map(|&b| b as f64 / 255.0).collect();
    Observation::new(shape, pixels)
}

fn csv_header(action_dim: usize, gt: bool) -> Vec<String> {
    let mut h: Vec<String> = ["t", "dx", "dy", "dtheta"].map(String::from).to_vec();
    h.extend((0..action_dim).map(|i| format!("a{i}")));
    if gt {
        h.extend(["gt_x", "gt_y", "gt_theta"].map(String::from));
    }
    h
}

fn odometry_csv(seq: &Sequence) -> Result<Vec<u8>> {
    let e = &seq.entry;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |err: csv::Error| Error::Config(err.to_string());
    w.write_record(csv_header(e.action_dim, e.has_ground_truth)).map_err(csv_err)?;
    for f in &seq.frames {
        let mut row = vec![f.t.to_string(), f.odometry.dx.to_string(), f.odometry.dy.to_string(), f.odometry.dtheta.to_string()];
        row.extend(f.action.controls.iter().map(f64::to_string));
        if let Some(g) = f.ground_truth {
            row.extend([g.x, g.y, g.theta].map(|v| v.to_string()));
        }
        w.write_record(row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Config(e.to_string()))
}

fn read_sequence(root: &Path, entry: &SequenceEntry) -> Result<Sequence> {
    let dir = root.join(&entry.path);
    let csv_path = dir.join("odometry.csv");
    let file = fs::File::open(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::format(&csv_path, e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    if header != csv_header(entry.action_dim, entry.has_ground_truth) {
        return Err(Error::format(&csv_path, format!("unexpected columns {header:?}")));
    }
    let mut frames = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(&csv_path, e.to_string()))?;
        let num = |j: usize| -> Result<f64> {
            rec.get(j)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::format(&csv_path, format!("row {i}, column {j} is not a number")))
        };
        let t = rec
            .get(0)
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| Error::format(&csv_path, format!("row {i} has a bad frame index")))?;
        let odometry = OdometryDelta {
            dx: num(1)?,
            dy: num(2)?,
            dtheta: num(3)?,
        };
        odometry.validate().map_err(|e| Error::format(&csv_path, format!("row {i}: {e}")))?;
        let a = entry.action_dim;
        let action = Action::new((0..a).map(|j| num(4 + j)).collect::<Result<_>>()?)
            .map_err(|e| Error::format(&csv_path, format!("row {i}: {e}")))?;
        let ground_truth = if entry.has_ground_truth {
            Some(Pose2D::new(num(4 + a)?, num(5 + a)?, num(6 + a)?))
        } else {
            None
        };
        let png_path = dir.join("frames").join(format!("{i:06}.png"));
        let observation = read_png(&png_path, entry.image_shape)?;
        frames.push(FrameRecord {
            t,
            observation,
            action,
            odometry,
            ground_truth,
        });
    }
    if frames.len() != entry.frame_count {
        return Err(Error::format(
            &csv_path,
            format!("manifest says {} frames, found {}", entry.frame_count, frames.len()),
        ));
    }
    Ok(Sequence {
        entry: entry.clone(),
        frames,
    })
}

fn sibling(dir: &Path, tag: &str) -> Result<PathBuf> {
    let name = dir
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a directory path", dir.display())))?;
    Ok(dir.with_file_name(format!(".{}.{tag}", name.to_string_lossy())))
}

/// Writes the dataset into a temporary sibling directory and renames it into
/// place. An existing `dir` is replaced only if it is empty or is itself a
/// dataset.
pub fn save_dataset(dir: &Path, data: &Dataset) -> Result<()> {
    data.validate()?;
    if dir.exists() {
        let is_dataset = dir.join("manifest.json").is_file();
        let is_empty = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?.next().is_none();
        if !is_dataset && !is_empty {
            return Err(Error::Config(format!(
                "{} exists and is not a dataset; refusing to overwrite",
                dir.display()
            )));
        }
    }
    if let Some(parent) = dir.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = sibling(dir, "partial")?;
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    let result = (|| {
        for seq in &data.sequences {
            let sdir = tmp.join(&seq.entry.path);
            let fdir = sdir.join("frames");
            fs::create_dir_all(&fdir).map_err(|e| Error::io(&fdir, e))?;
            for (i, f) in seq.frames.iter().enumerate() {
                let p = fdir.join(format!("{i:06}.png"));
                let bytes = png_bytes(&f.observation).map_err(|e| Error::Frame {
                    index: i,
                    source: Box::new(e),
                })?;
                fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
            }
            let p = sdir.join("odometry.csv");
            fs::write(&p, odometry_csv(seq)?).map_err(|e| Error::io(&p, e))?;
        }
        let mut manifest = serde_json::to_vec_pretty(&data.manifest).expect("manifest serialises");
        manifest.push(b'\n');
        write_atomic(&tmp.join("manifest.json"), &manifest)
    })();
    if let Err(e) = result {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e);
    }
    if dir.exists() {
        let old = sibling(dir, "old")?;
        let _ = fs::remove_dir_all(&old);
        fs::rename(dir, &old).map_err(|e| Error::io(dir, e))?;
        fs::rename(&tmp, dir).map_err(|e| Error::io(dir, e))?;
        fs::remove_dir_all(&old).map_err(|e| Error::io(&old, e))?;
    } else {
        fs::rename(&tmp, dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

pub fn load_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join("manifest.json");
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let value: serde_json::Value =
        serde_json::from_slice(&bytes).map_err(|e| Error::format(&path, e.to_string()))?;
    let version = value
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::format(&path, "missing version"))?;
    if version != DATASET_VERSION as u64 {
        return Err(Error::Version {
            found: version.try_into().unwrap_or(u32::MAX),
            expected: DATASET_VERSION,
        });
    }
    let manifest: DatasetManifest =
        serde_json::from_slice(&bytes).map_err(|e| Error::format(&path, e.to_string()))?;
    for s in &manifest.sequences {
        let p = Path::new(&s.path);
        if p.is_absolute() || p.components().any(|c| matches!(c, std::path::Component::ParentDir)) {
            return Err(Error::format(&path, format!("sequence path {} leaves the dataset", s.path)));
        }
    }
    Ok(manifest)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = load_manifest(dir)?;
    let sequences = manifest
        .sequences
        .iter()
        .map(|e| read_sequence(dir, e))
        .collect::<Result<Vec<_>>>()?;
    let data = Dataset { manifest, sequences };
    data.validate()
        .map_err(|e| Error::format(dir.join("manifest.json"), e.to_string()))?;
    Ok(data)
}
