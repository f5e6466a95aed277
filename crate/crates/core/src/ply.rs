//! Binary little-endian PLY serialization of Gaussian clouds.
//!
//! Properties are stored as doubles so that save / load cycles are
//! bit-exact. The fixed order is: x y z nx ny nz f_dc_0..2
//! [f_rest_0..8 when first-order harmonics are present] opacity
//! scale_0..2 rot_0..3. Normals are written as zeros and ignored on
//! read; scale holds log scales, opacity the pre-sigmoid logit, and
//! rot the (w, x, y, z) quaternion.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Vector3, Vector4};

use crate::error::{Error, Result};
use crate::scene::GaussianCloud;

const BASE_PROPS: [&str; 9] = [
    "x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2",
];
const REST_PROPS: [&str; 9] = [
    "f_rest_0", "f_rest_1", "f_rest_2", "f_rest_3", "f_rest_4", "f_rest_5", "f_rest_6",
    "f_rest_7", "f_rest_8",
];
const TAIL_PROPS: [&str; 8] = [
    "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3",
];

fn property_order(with_sh1: bool) -> Vec<&'static str> {
    let mut props: Vec<&'static str> = BASE_PROPS.to_vec();
    if with_sh1 {
        props.extend_from_slice(&REST_PROPS);
    }
    props.extend_from_slice(&TAIL_PROPS);
    props
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn save_ply(cloud: &GaussianCloud, path: &Path) -> Result<()> {
    cloud.validate()?;
    let with_sh1 = cloud.sh1.is_some();
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);

    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", cloud.len()));
    for prop in property_order(with_sh1) {
        header.push_str(&format!("property double {prop}\n"));
    }
    header.push_str("end_header\n");
    w.write_all(header.as_bytes()).map_err(io_err(path))?;

    let mut row: Vec<f64> = Vec::with_capacity(26);
    for i in 0..cloud.len() {
        row.clear();
        row.extend_from_slice(cloud.positions[i].as_slice());
        row.extend_from_slice(&[0.0; 3]);
        row.extend_from_slice(cloud.colors[i].as_slice());
        if let Some(sh1) = &cloud.sh1 {
            row.extend_from_slice(&sh1[i]);
        }
        row.push(cloud.opacities[i]);
        row.extend_from_slice(cloud.log_scales[i].as_slice());
        row.extend_from_slice(cloud.rotations[i].as_slice());
        for v in &row {
            w.write_all(&v.to_le_bytes()).map_err(io_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

pub fn load_ply(path: &Path) -> Result<GaussianCloud> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut r = BufReader::new(file);

    let mut line = String::new();
    let read_line = |r: &mut BufReader<std::fs::File>, line: &mut String| -> Result<String> {
        line.clear();
        let n = r.read_line(line).map_err(io_err(path))?;
        if n == 0 {
            return Err(Error::Format(format!(
                "{}: truncated header",
                path.display()
            )));
        }
        Ok(line.trim_end().to_string())
    };

    if read_line(&mut r, &mut line)? != "ply" {
        return Err(Error::Format(format!(
            "{}: missing ply magic",
            path.display()
        )));
    }
    if read_line(&mut r, &mut line)? != "format binary_little_endian 1.0" {
        return Err(Error::Format(format!(
            "{}: only binary little-endian 1.0 is supported",
            path.display()
        )));
    }

    let mut vertex_count: Option<usize> = None;
    let mut props: Vec<String> = Vec::new();
    loop {
        let l = read_line(&mut r, &mut line)?;
        if l == "end_header" {
            break;
        }
        if l.starts_with("comment") {
            continue;
        }
        if let Some(rest) = l.strip_prefix("element vertex ") {
            vertex_count = Some(rest.trim().parse().map_err(|_| {
                Error::Format(format!("{}: bad vertex count '{rest}'", path.display()))
            })?);
        } else if l.starts_with("element ") {
            return Err(Error::Format(format!(
                "{}: unexpected element '{l}'",
                path.display()
            )));
        } else if let Some(rest) = l.strip_prefix("property ") {
            let mut it = rest.split_whitespace();
            let ty = it.next().unwrap_or("");
            let name = it.next().unwrap_or("");
            if ty != "double" {
                return Err(Error::Format(format!(
                    "{}: property '{name}' has type '{ty}', expected double",
                    path.display()
                )));
            }
            props.push(name.to_string());
        } else {
            return Err(Error::Format(format!(
                "{}: unexpected header line '{l}'",
                path.display()
            )));
        }
    }
    let vertex_count = vertex_count
        .ok_or_else(|| Error::Format(format!("{}: missing vertex element", path.display())))?;

    let with_sh1 = match props.len() {
        17 => false,
        26 => true,
        n => {
            return Err(Error::Format(format!(
                "{}: expected 17 or 26 properties, found {n}",
                path.display()
            )))
        }
    };
    for (got, want) in props.iter().zip(property_order(with_sh1)) {
        if got != want {
            return Err(Error::Format(format!(
                "{}: property '{got}' out of order, expected '{want}'",
                path.display()
            )));
        }
    }

    let mut cloud = GaussianCloud::default();
    if with_sh1 {
        cloud.sh1 = Some(Vec::with_capacity(vertex_count));
    }
    let mut buf = vec![0u8; props.len() * 8];
    for _ in 0..vertex_count {
        r.read_exact(&mut buf).map_err(|_| {
            Error::Format(format!("{}: truncated vertex data", path.display()))
        })?;
        let vals: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut at = 0usize;
        let mut take = |n: usize| {
            let s = &vals[at..at + n];
            at += n;
            s.to_vec()
        };
        let pos = take(3);
        take(3); // normals, unused
        let dc = take(3);
        let rest = if with_sh1 { take(9) } else { Vec::new() };
        let opacity = take(1)[0];
        let scale = take(3);
        let rot = take(4);
        cloud.positions.push(Vector3::from_row_slice(&pos));
        cloud.colors.push(Vector3::from_row_slice(&dc));
        if let Some(sh1) = &mut cloud.sh1 {
            sh1.push(rest.try_into().expect("nine harmonics"));
        }
        cloud.opacities.push(opacity);
        cloud.log_scales.push(Vector3::from_row_slice(&scale));
        cloud
            .rotations
            .push(Vector4::new(rot[0], rot[1], rot[2], rot[3]));
        cloud.ages.push(0);
    }
    let mut trailing = Vec::new();
    r.read_to_end(&mut trailing).map_err(io_err(path))?;
    if !trailing.is_empty() {
        return Err(Error::Format(format!(
            "{}: {} trailing bytes after vertex data",
            path.display(),
            trailing.len()
        )));
    }
    cloud.validate()?;
    Ok(cloud)
}
