//! Structure-from-motion text dataset support: `cameras.txt`,
//! `images.txt`, and `points3D.txt` in the common reconstruction text
//! layout, cross-reference validation, conversion to render cameras,
//! and per-block bundle export.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::partitioner::ScenePartition;
use crate::scene::quat_to_rotation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CameraModel {
    SimplePinhole,
    Pinhole,
}

impl CameraModel {
    fn name(&self) -> &'static str {
        match self {
            CameraModel::SimplePinhole => "SIMPLE_PINHOLE",
            CameraModel::Pinhole => "PINHOLE",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SfmCamera {
    pub camera_id: u32,
    pub model: CameraModel,
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SfmImage {
    pub image_id: u32,
    /// World-to-camera rotation quaternion (w, x, y, z).
    pub qvec: Vector4<f64>,
    pub tvec: Vector3<f64>,
    pub camera_id: u32,
    pub name: String,
    /// (x, y, point3d_id); id -1 marks an unmatched observation.
    pub points2d: Vec<(f64, f64, i64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SfmPoint {
    pub point_id: u64,
    pub position: Vector3<f64>,
    pub color: [u8; 3],
    pub error: f64,
    /// (image_id, point2d_idx) observations.
    pub track: Vec<(u32, u32)>,
}

/// A parsed sparse reconstruction. Entries are kept sorted by id so that
/// slice indices are stable across load / save cycles.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SfmDataset {
    pub cameras: Vec<SfmCamera>,
    pub images: Vec<SfmImage>,
    pub points: Vec<SfmPoint>,
}

fn parse_err(file: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .collect())
}

fn field<T: std::str::FromStr>(
    tokens: &[&str],
    idx: usize,
    file: &Path,
    line: usize,
    what: &str,
) -> Result<T> {
    let tok = tokens
        .get(idx)
        .ok_or_else(|| parse_err(file, line, format!("missing field: {what}")))?;
    tok.parse()
        .map_err(|_| parse_err(file, line, format!("cannot parse {what} from '{tok}'")))
}

pub fn read_cameras_txt(path: &Path) -> Result<Vec<SfmCamera>> {
    let mut cameras = BTreeMap::new();
    for (line_no, line) in read_lines(path)? {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let camera_id: u32 = field(&tokens, 0, path, line_no, "camera id")?;
        let model_name = tokens
            .get(1)
            .ok_or_else(|| parse_err(path, line_no, "missing camera model"))?;
        let width: usize = field(&tokens, 2, path, line_no, "width")?;
        let height: usize = field(&tokens, 3, path, line_no, "height")?;
        let camera = match *model_name {
            "PINHOLE" => SfmCamera {
                camera_id,
                model: CameraModel::Pinhole,
                width,
                height,
                fx: field(&tokens, 4, path, line_no, "fx")?,
                fy: field(&tokens, 5, path, line_no, "fy")?,
                cx: field(&tokens, 6, path, line_no, "cx")?,
                cy: field(&tokens, 7, path, line_no, "cy")?,
            },
            "SIMPLE_PINHOLE" => {
                let f: f64 = field(&tokens, 4, path, line_no, "f")?;
                SfmCamera {
                    camera_id,
                    model: CameraModel::SimplePinhole,
                    width,
                    height,
                    fx: f,
                    fy: f,
                    cx: field(&tokens, 5, path, line_no, "cx")?,
                    cy: field(&tokens, 6, path, line_no, "cy")?,
                }
            }
            other => {
                return Err(Error::Format(format!(
                    "unsupported camera model '{other}' (supported: PINHOLE, SIMPLE_PINHOLE)"
                )))
            }
        };
        if cameras.insert(camera_id, camera).is_some() {
            return Err(parse_err(
                path,
                line_no,
                format!("duplicate camera id {camera_id}"),
            ));
        }
    }
    Ok(cameras.into_values().collect())
}

pub fn read_images_txt(path: &Path) -> Result<Vec<SfmImage>> {
    let lines = read_lines(path)?;
    if lines.len() % 2 != 0 {
        return Err(Error::Format(format!(
            "{}: image entries must come in header/observation line pairs",
            path.display()
        )));
    }
    let mut images = BTreeMap::new();
    for pair in lines.chunks(2) {
        let (line_no, header) = &pair[0];
        let tokens: Vec<&str> = header.split_whitespace().collect();
        if tokens.len() < 10 {
            return Err(parse_err(path, *line_no, "image header needs 10 fields"));
        }
        let image_id: u32 = field(&tokens, 0, path, *line_no, "image id")?;
        let qvec = Vector4::new(
            field(&tokens, 1, path, *line_no, "qw")?,
            field(&tokens, 2, path, *line_no, "qx")?,
            field(&tokens, 3, path, *line_no, "qy")?,
            field(&tokens, 4, path, *line_no, "qz")?,
        );
        let tvec = Vector3::new(
            field(&tokens, 5, path, *line_no, "tx")?,
            field(&tokens, 6, path, *line_no, "ty")?,
            field(&tokens, 7, path, *line_no, "tz")?,
        );
        let camera_id: u32 = field(&tokens, 8, path, *line_no, "camera id")?;
        let name = tokens[9].to_string();

        let (obs_no, obs) = &pair[1];
        let obs_tokens: Vec<&str> = obs.split_whitespace().collect();
        if obs_tokens.len() % 3 != 0 {
            return Err(parse_err(
                path,
                *obs_no,
                "observations must be (x, y, point3d_id) triples",
            ));
        }
        let mut points2d = Vec::with_capacity(obs_tokens.len() / 3);
        for t in obs_tokens.chunks(3) {
            let x: f64 = t[0]
                .parse()
                .map_err(|_| parse_err(path, *obs_no, format!("bad observation x '{}'", t[0])))?;
            let y: f64 = t[1]
                .parse()
                .map_err(|_| parse_err(path, *obs_no, format!("bad observation y '{}'", t[1])))?;
            let id: i64 = t[2]
                .parse()
                .map_err(|_| parse_err(path, *obs_no, format!("bad point3d id '{}'", t[2])))?;
            points2d.push((x, y, id));
        }
        if qvec.norm() < 1e-9 {
            return Err(parse_err(path, *line_no, "zero-norm rotation quaternion"));
        }
        let image = SfmImage {
            image_id,
            qvec,
            tvec,
            camera_id,
            name,
            points2d,
        };
        if images.insert(image_id, image).is_some() {
            return Err(parse_err(
                path,
                *line_no,
                format!("duplicate image id {image_id}"),
            ));
        }
    }
    Ok(images.into_values().collect())
}

pub fn read_points3d_txt(path: &Path) -> Result<Vec<SfmPoint>> {
    let mut points = BTreeMap::new();
    for (line_no, line) in read_lines(path)? {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 8 || (tokens.len() - 8) % 2 != 0 {
            return Err(parse_err(
                path,
                line_no,
                "point line needs id, xyz, rgb, error and (image_id, idx) pairs",
            ));
        }
        let point_id: u64 = field(&tokens, 0, path, line_no, "point id")?;
        let position = Vector3::new(
            field(&tokens, 1, path, line_no, "x")?,
            field(&tokens, 2, path, line_no, "y")?,
            field(&tokens, 3, path, line_no, "z")?,
        );
        let color = [
            field::<u8>(&tokens, 4, path, line_no, "r")?,
            field::<u8>(&tokens, 5, path, line_no, "g")?,
            field::<u8>(&tokens, 6, path, line_no, "b")?,
        ];
        let error: f64 = field(&tokens, 7, path, line_no, "error")?;
        let mut track = Vec::with_capacity((tokens.len() - 8) / 2);
        for t in tokens[8..].chunks(2) {
            let image_id: u32 = t[0]
                .parse()
                .map_err(|_| parse_err(path, line_no, format!("bad track image id '{}'", t[0])))?;
            let idx: u32 = t[1]
                .parse()
                .map_err(|_| parse_err(path, line_no, format!("bad track index '{}'", t[1])))?;
            track.push((image_id, idx));
        }
        if points
            .insert(
                point_id,
                SfmPoint {
                    point_id,
                    position,
                    color,
                    error,
                    track,
                },
            )
            .is_some()
        {
            return Err(parse_err(
                path,
                line_no,
                format!("duplicate point id {point_id}"),
            ));
        }
    }
    Ok(points.into_values().collect())
}

impl SfmDataset {
    /// Load `cameras.txt`, `images.txt`, `points3D.txt` from a directory
    /// and validate cross-references.
    pub fn load(dir: &Path) -> Result<SfmDataset> {
        let dataset = SfmDataset {
            cameras: read_cameras_txt(&dir.join("cameras.txt"))?,
            images: read_images_txt(&dir.join("images.txt"))?,
            points: read_points3d_txt(&dir.join("points3D.txt"))?,
        };
        dataset.validate()?;
        Ok(dataset)
    }

    pub fn validate(&self) -> Result<()> {
        let camera_ids: HashSet<u32> = self.cameras.iter().map(|c| c.camera_id).collect();
        let image_ids: HashSet<u32> = self.images.iter().map(|i| i.image_id).collect();
        let point_ids: HashSet<u64> = self.points.iter().map(|p| p.point_id).collect();
        for image in &self.images {
            if !camera_ids.contains(&image.camera_id) {
                return Err(Error::Validation(format!(
                    "image {} references missing camera {}",
                    image.image_id, image.camera_id
                )));
            }
            for &(_, _, pid) in &image.points2d {
                if pid >= 0 && !point_ids.contains(&(pid as u64)) {
                    return Err(Error::Validation(format!(
                        "image {} observes missing point {pid}",
                        image.image_id
                    )));
                }
            }
        }
        for point in &self.points {
            for &(image_id, _) in &point.track {
                if !image_ids.contains(&image_id) {
                    return Err(Error::Validation(format!(
                        "point {} tracked in missing image {image_id}",
                        point.point_id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Write the three text files into `dir` with full f64 round-trip
    /// precision.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let write = |name: &str, body: String| -> Result<()> {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|source| Error::Io { path, source })
        };

        let mut cameras = String::from("# CAMERA_ID MODEL WIDTH HEIGHT PARAMS[]\n");
        for c in &self.cameras {
            match c.model {
                CameraModel::Pinhole => writeln!(
                    cameras,
                    "{} {} {} {} {} {} {} {}",
                    c.camera_id,
                    c.model.name(),
                    c.width,
                    c.height,
                    c.fx,
                    c.fy,
                    c.cx,
                    c.cy
                ),
                CameraModel::SimplePinhole => writeln!(
                    cameras,
                    "{} {} {} {} {} {} {}",
                    c.camera_id,
                    c.model.name(),
                    c.width,
                    c.height,
                    c.fx,
                    c.cx,
                    c.cy
                ),
            }
            .expect("string write");
        }
        write("cameras.txt", cameras)?;

        let mut images =
            String::from("# IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME\n# X Y POINT3D_ID ...\n");
        for i in &self.images {
            writeln!(
                images,
                "{} {} {} {} {} {} {} {} {} {}",
                i.image_id,
                i.qvec[0],
                i.qvec[1],
                i.qvec[2],
                i.qvec[3],
                i.tvec[0],
                i.tvec[1],
                i.tvec[2],
                i.camera_id,
                i.name
            )
            .expect("string write");
            let obs: Vec<String> = i
                .points2d
                .iter()
                .map(|(x, y, id)| format!("{x} {y} {id}"))
                .collect();
            writeln!(images, "{}", obs.join(" ")).expect("string write");
        }
        write("images.txt", images)?;

        let mut points =
            String::from("# POINT3D_ID X Y Z R G B ERROR TRACK[] as (IMAGE_ID POINT2D_IDX)\n");
        for p in &self.points {
            let track: Vec<String> = p
                .track
                .iter()
                .map(|(img, idx)| format!("{img} {idx}"))
                .collect();
            let mut line = format!(
                "{} {} {} {} {} {} {} {}",
                p.point_id,
                p.position[0],
                p.position[1],
                p.position[2],
                p.color[0],
                p.color[1],
                p.color[2],
                p.error
            );
            if !track.is_empty() {
                line.push(' ');
                line.push_str(&track.join(" "));
            }
            points.push_str(&line);
            points.push('\n');
        }
        write("points3D.txt", points)?;
        Ok(())
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.points.iter().map(|p| p.position).collect()
    }

    /// Build render cameras; `image_dir` (when given) prefixes each
    /// image name to form the ground-truth path.
    pub fn to_cameras(&self, image_dir: Option<&Path>) -> Result<Vec<Camera>> {
        let by_id: BTreeMap<u32, &SfmCamera> =
            self.cameras.iter().map(|c| (c.camera_id, c)).collect();
        let mut out = Vec::with_capacity(self.images.len());
        for image in &self.images {
            let intr = by_id[&image.camera_id];
            let camera = Camera {
                image_id: image.image_id,
                width: intr.width,
                height: intr.height,
                fx: intr.fx,
                fy: intr.fy,
                cx: intr.cx,
                cy: intr.cy,
                rotation: quat_to_rotation(&image.qvec),
                translation: image.tvec,
                image_path: image_dir.map(|d| d.join(&image.name)),
            };
            camera.validate()?;
            out.push(camera);
        }
        Ok(out)
    }

    /// Per-image visible point slice indices (into `self.points` order),
    /// keyed by image id. Used for camera-to-block assignment.
    pub fn visibility(&self) -> Vec<(u32, Vec<usize>)> {
        let index_of: BTreeMap<u64, usize> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (p.point_id, i))
            .collect();
        self.images
            .iter()
            .map(|image| {
                let mut seen: Vec<usize> = image
                    .points2d
                    .iter()
                    .filter(|(_, _, id)| *id >= 0)
                    .filter_map(|(_, _, id)| index_of.get(&(*id as u64)).copied())
                    .collect();
                seen.sort_unstable();
                seen.dedup();
                (image.image_id, seen)
            })
            .collect()
    }

    /// Camera center per image id, for the position assignment rule.
    pub fn camera_positions(&self) -> Vec<(u32, Vector3<f64>)> {
        self.images
            .iter()
            .map(|image| {
                let rot = quat_to_rotation(&image.qvec);
                (image.image_id, -rot.transpose() * image.tvec)
            })
            .collect()
    }

    /// Restrict the dataset to a point subset (slice indices) and an
    /// image subset, dropping dangling references on both sides.
    pub fn subset(&self, point_indices: &[usize], image_ids: &[u32]) -> SfmDataset {
        let keep_points: HashSet<usize> = point_indices.iter().copied().collect();
        let keep_images: HashSet<u32> = image_ids.iter().copied().collect();
        let points: Vec<SfmPoint> = self
            .points
            .iter()
            .enumerate()
            .filter(|(i, _)| keep_points.contains(i))
            .map(|(_, p)| {
                let mut p = p.clone();
                p.track.retain(|(img, _)| keep_images.contains(img));
                p
            })
            .collect();
        let kept_point_ids: HashSet<u64> = points.iter().map(|p| p.point_id).collect();
        let images: Vec<SfmImage> = self
            .images
            .iter()
            .filter(|i| keep_images.contains(&i.image_id))
            .map(|i| {
                let mut i = i.clone();
                for obs in &mut i.points2d {
                    if obs.2 >= 0 && !kept_point_ids.contains(&(obs.2 as u64)) {
                        obs.2 = -1;
                    }
                }
                i
            })
            .collect();
        let used_cameras: HashSet<u32> = images.iter().map(|i| i.camera_id).collect();
        let cameras = self
            .cameras
            .iter()
            .filter(|c| used_cameras.contains(&c.camera_id))
            .cloned()
            .collect();
        SfmDataset {
            cameras,
            images,
            points,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleManifest {
    pub block_index: [usize; 3],
    pub bounds_min: [f64; 3],
    pub bounds_max: [f64; 3],
    pub point_count: usize,
    pub image_count: usize,
    pub trainable: bool,
}

/// Write one bundle directory per trainable block:
/// `block_i_j_k/{cameras.txt, images.txt, points3D.txt, manifest.json}`.
/// Returns the written bundle directories in block order.
pub fn export_bundles(
    dataset: &SfmDataset,
    partition: &ScenePartition,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for block in &partition.blocks {
        if !block.trainable {
            continue;
        }
        let bundle = dataset.subset(&block.point_ids, &block.camera_ids);
        let dir = out_dir.join(block.dir_name());
        bundle.save(&dir)?;
        let manifest = BundleManifest {
            block_index: block.index,
            bounds_min: block.bounds.min,
            bounds_max: block.bounds.max,
            point_count: bundle.points.len(),
            image_count: bundle.images.len(),
            trainable: block.trainable,
        };
        let path = dir.join("manifest.json");
        let body = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Format(format!("manifest serialization: {e}")))?;
        std::fs::write(&path, body).map_err(|source| Error::Io { path, source })?;
        written.push(dir);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample_dataset() -> SfmDataset {
        SfmDataset {
            cameras: vec![SfmCamera {
                camera_id: 1,
                model: CameraModel::Pinhole,
                width: 64,
                height: 48,
                fx: 60.0,
                fy: 61.0,
                cx: 32.0,
                cy: 24.0,
            }],
            images: vec![
                SfmImage {
                    image_id: 1,
                    qvec: Vector4::new(1.0, 0.0, 0.0, 0.0),
                    tvec: Vector3::new(0.1, -0.2, 3.0),
                    camera_id: 1,
                    name: "img_0001.png".into(),
                    points2d: vec![(10.5, 20.25, 7), (1.0, 2.0, -1)],
                },
                SfmImage {
                    image_id: 2,
                    qvec: Vector4::new(0.9238795325112867, 0.0, 0.3826834323650898, 0.0),
                    tvec: Vector3::new(0.0, 0.0, 2.5),
                    camera_id: 1,
                    name: "img_0002.png".into(),
                    points2d: vec![(30.0, 31.0, 7), (5.0, 6.0, 9)],
                },
            ],
            points: vec![
                SfmPoint {
                    point_id: 7,
                    position: Vector3::new(0.25, -0.5, 1.0 / 3.0),
                    color: [255, 128, 0],
                    error: 0.75,
                    track: vec![(1, 0), (2, 0)],
                },
                SfmPoint {
                    point_id: 9,
                    position: Vector3::new(-1.0, 2.0, 0.5),
                    color: [0, 0, 255],
                    error: 1.25,
                    track: vec![(2, 1)],
                },
            ],
        }
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let dataset = sample_dataset();
        dataset.save(dir.path()).unwrap();
        let loaded = SfmDataset::load(dir.path()).unwrap();
        assert_eq!(loaded.cameras.len(), 1);
        assert_eq!(loaded.images.len(), 2);
        assert_eq!(loaded.points.len(), 2);
        // f64 Display prints shortest round-trip decimals, so positions
        // must come back bit-identical.
        assert_eq!(loaded.points[0].position, dataset.points[0].position);
        assert_eq!(loaded.images[1].qvec, dataset.images[1].qvec);
        assert_eq!(loaded.images[0].points2d, dataset.images[0].points2d);
        assert_eq!(loaded.points[1].track, dataset.points[1].track);
    }

    #[test]
    fn simple_pinhole_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut dataset = sample_dataset();
        dataset.cameras[0].model = CameraModel::SimplePinhole;
        dataset.cameras[0].fy = dataset.cameras[0].fx;
        dataset.save(dir.path()).unwrap();
        let loaded = SfmDataset::load(dir.path()).unwrap();
        assert_eq!(loaded.cameras[0].model, CameraModel::SimplePinhole);
        assert_eq!(loaded.cameras[0].fx, 60.0);
        assert_eq!(loaded.cameras[0].fy, 60.0);
    }

    #[test]
    fn unsupported_model_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("cameras.txt"),
            "1 OPENCV_FISHEYE 64 48 60 60 32 24 0 0 0 0\n",
        )
        .unwrap();
        let err = read_cameras_txt(&dir.path().join("cameras.txt")).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
        assert!(err.to_string().contains("OPENCV_FISHEYE"));
    }

    #[test]
    fn malformed_line_reports_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("points3D.txt");
        std::fs::write(&path, "# header\n7 0.1 0.2 bogus 255 0 0 0.5\n").unwrap();
        let err = read_points3d_txt(&path).unwrap_err();
        match err {
            Error::Parse { file, line, .. } => {
                assert!(file.ends_with("points3D.txt"));
                assert_eq!(line, 2);
            }
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn dangling_references_fail_validation() {
        let mut dataset = sample_dataset();
        dataset.images[0].camera_id = 99;
        assert!(matches!(
            dataset.validate(),
            Err(Error::Validation(_))
        ));

        let mut dataset = sample_dataset();
        dataset.points[0].track.push((42, 0));
        assert!(matches!(dataset.validate(), Err(Error::Validation(_))));

        let mut dataset = sample_dataset();
        dataset.images[0].points2d.push((0.0, 0.0, 12345));
        assert!(matches!(dataset.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn to_cameras_applies_intrinsics_and_pose() {
        let dataset = sample_dataset();
        let cameras = dataset.to_cameras(Some(Path::new("/data/images"))).unwrap();
        assert_eq!(cameras.len(), 2);
        assert_eq!(cameras[0].fx, 60.0);
        assert_eq!(cameras[0].fy, 61.0);
        // Identity quaternion: center = -t.
        assert_relative_eq!(
            cameras[0].position(),
            Vector3::new(-0.1, 0.2, -3.0),
            epsilon = 1e-12
        );
        assert_eq!(
            cameras[1].image_path.as_deref(),
            Some(Path::new("/data/images/img_0002.png"))
        );
    }

    #[test]
    fn visibility_maps_ids_to_point_indices() {
        let dataset = sample_dataset();
        let vis = dataset.visibility();
        assert_eq!(vis, vec![(1, vec![0]), (2, vec![0, 1])]);
    }

    #[test]
    fn subset_drops_dangling_references() {
        let dataset = sample_dataset();
        // Keep only point index 1 (id 9) and image 2.
        let sub = dataset.subset(&[1], &[2]);
        assert_eq!(sub.points.len(), 1);
        assert_eq!(sub.images.len(), 1);
        assert_eq!(sub.points[0].track, vec![(2, 1)]);
        // Image 2 observed point 7 at slot 0; that slot is now unmatched.
        assert_eq!(sub.images[0].points2d[0].2, -1);
        assert_eq!(sub.images[0].points2d[1].2, 9);
        sub.validate().unwrap();
    }
}
