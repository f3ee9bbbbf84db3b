//! Human-facing exports: ASCII PLY and CSV point clouds, and bird's-eye-view
//! occupancy images as binary PGM.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use radelft_core::{OccupancyGrid, PointCloud};

use crate::error::{FormatError, Result};

/// ASCII PLY with `x y z` and, when present, `doppler` and `power_db`.
pub fn ply_string(cloud: &PointCloud) -> Result<String> {
    cloud.check()?;
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    writeln!(s, "element vertex {}", cloud.len()).unwrap();
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.doppler.is_some() {
        s.push_str("property double doppler\n");
    }
    if cloud.power_db.is_some() {
        s.push_str("property double power_db\n");
    }
    s.push_str("end_header\n");
    for_each_row(cloud, |row| {
        s.push_str(&row.join(" "));
        s.push('\n');
    });
    Ok(s)
}

/// CSV with header `x,y,z[,doppler][,power]`; power is in dB.
pub fn csv_string(cloud: &PointCloud) -> Result<String> {
    cloud.check()?;
    let mut header = vec!["x", "y", "z"];
    if cloud.doppler.is_some() {
        header.push("doppler");
    }
    if cloud.power_db.is_some() {
        header.push("power");
    }
    let mut s = header.join(",") + "\n";
    for_each_row(cloud, |row| {
        s.push_str(&row.join(","));
        s.push('\n');
    });
    Ok(s)
}

/// Shortest round-trip decimal text of every value.
fn for_each_row(cloud: &PointCloud, mut f: impl FnMut(Vec<String>)) {
    for (i, p) in cloud.points.iter().enumerate() {
        let mut row: Vec<String> = p.iter().map(|v| format!("{v:?}")).collect();
        if let Some(d) = &cloud.doppler {
            row.push(format!("{:?}", d[i]));
        }
        if let Some(w) = &cloud.power_db {
            row.push(format!("{:?}", w[i]));
        }
        f(row);
    }
}

/// Parses the ASCII PLY written by [`ply_string`].
pub fn parse_ply(text: &str) -> Result<PointCloud> {
    let bad = |m: &str| FormatError::Invalid(format!("PLY: {m}"));
    let mut lines = text.lines();
    if lines.next() != Some("ply") {
        return Err(bad("missing 'ply' magic"));
    }
    let mut n = None;
    let mut props = Vec::new();
    for line in lines.by_ref() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            ["end_header"] => break,
            ["format", f, _] if *f != "ascii" => return Err(bad("only ASCII PLY is supported")),
            ["element", "vertex", k] => n = Some(k.parse::<usize>().map_err(|_| bad("bad vertex count"))?),
            ["property", _, name] => props.push(name.to_string()),
            _ => {}
        }
    }
    let n = n.ok_or_else(|| bad("no vertex element"))?;
    if props.len() < 3 || props[..3] != ["x", "y", "z"] {
        return Err(bad("first properties must be x y z"));
    }
    parse_rows(lines.take(n), &props, n, char::is_whitespace)
}

/// Parses the CSV written by [`csv_string`].
pub fn parse_csv(text: &str) -> Result<PointCloud> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| FormatError::Invalid("CSV: empty file".into()))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    if header.len() < 3 || header[..3] != ["x", "y", "z"] {
        return Err(FormatError::Invalid("CSV: header must start with x,y,z".into()));
    }
    let rows: Vec<&str> = lines.filter(|l| !l.trim().is_empty()).collect();
    let n = rows.len();
    parse_rows(rows.into_iter(), &header, n, |c| c == ',')
}

fn parse_rows<'a>(
    rows: impl Iterator<Item = &'a str>,
    cols: &[String],
    n: usize,
    sep: fn(char) -> bool,
) -> Result<PointCloud> {
    let mut cloud = PointCloud::default();
    let has = |name: &str| cols.iter().position(|c| c == name);
    let (di, pi) = (has("doppler"), has("power_db").or_else(|| has("power")));
    let mut doppler = Vec::new();
    let mut power = Vec::new();
    for row in rows {
        let v: Vec<f64> = row
            .split(sep)
            .filter(|s| !s.is_empty())
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| FormatError::Invalid(format!("bad number in row '{row}': {e}")))?;
        if v.len() != cols.len() {
            return Err(FormatError::Invalid(format!("row '{row}' has {} values, expected {}", v.len(), cols.len())));
        }
        cloud.points.push([v[0], v[1], v[2]]);
        if let Some(i) = di {
            doppler.push(v[i]);
        }
        if let Some(i) = pi {
            power.push(v[i]);
        }
    }
    if cloud.len() != n {
        return Err(FormatError::Truncated(format!("{} of {n} points present", cloud.len())));
    }
    cloud.doppler = di.map(|_| doppler);
    cloud.power_db = pi.map(|_| power);
    cloud.check()?;
    Ok(cloud)
}

/// 8-bit grayscale image, row-major from the top.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, pixels: vec![0; width * height] }
    }

    /// Binary PGM (`P5`).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| FormatError::Invalid(format!("PGM: {m}"));
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        if fields[0] != "P5" || fields[3] != "255" {
            return Err(bad("expected an 8-bit P5 image"));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("bad size"));
        let (width, height) = (parse(&fields[1])?, parse(&fields[2])?);
        let pixels = bytes.get(pos + 1..).unwrap_or_default().to_vec();
        if pixels.len() != width * height {
            return Err(bad("pixel count does not match size"));
        }
        Ok(Self { width, height, pixels })
    }

    /// Places `other` to the right of `self` with a one-pixel gray divider.
    pub fn beside(&self, other: &GrayImage) -> GrayImage {
        let height = self.height.max(other.height);
        let width = self.width + 1 + other.width;
        let mut out = GrayImage::new(width, height);
        for y in 0..height {
            out.pixels[y * width + self.width] = 128;
            if y < self.height {
                out.pixels[y * width..][..self.width].copy_from_slice(&self.pixels[y * self.width..][..self.width]);
            }
            if y < other.height {
                out.pixels[y * width + self.width + 1..][..other.width]
                    .copy_from_slice(&other.pixels[y * other.width..][..other.width]);
            }
        }
        out
    }
}

/// Top-down view of an occupancy grid on a Cartesian raster: x across,
/// y (boresight) up, each voxel max-projected over elevation and drawn at its
/// center. The raster spans the grid's full range and azimuth field of view.
pub fn bird_eye_view(occ: &OccupancyGrid, meters_per_pixel: f64) -> GrayImage {
    let g = &occ.grid;
    let r_max = g.max_range() + g.range_res;
    let half_width = r_max * g.az.max_abs_sine().min(1.0);
    let width = ((2.0 * half_width / meters_per_pixel).ceil() as usize).max(1);
    let height = ((r_max / meters_per_pixel).ceil() as usize).max(1);
    let mut img = GrayImage::new(width, height);
    for v in occ.occupied() {
        let r = g.range_center(v.r);
        let u = g.az.center(v.a);
        let (x, y) = (r * u, r * (1.0 - u * u).max(0.0).sqrt());
        let col = ((x + half_width) / meters_per_pixel).floor();
        let row = height as f64 - 1.0 - (y / meters_per_pixel).floor();
        if col >= 0.0 && (col as usize) < width && row >= 0.0 && (row as usize) < height {
            img.pixels[row as usize * width + col as usize] = 255;
        }
    }
    img
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| FormatError::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| FormatError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud() -> PointCloud {
        PointCloud {
            points: vec![[0.1, 2.0, -0.3], [1e-17, 5.5, 1.0 / 3.0]],
            doppler: Some(vec![-1.25, 0.0]),
            power_db: None,
        }
    }

    #[test]
    fn ply_round_trip_is_exact() {
        let c = cloud();
        assert_eq!(parse_ply(&ply_string(&c).unwrap()).unwrap(), c);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let c = cloud();
        let text = csv_string(&c).unwrap();
        assert!(text.starts_with("x,y,z,doppler\n"));
        assert_eq!(parse_csv(&text).unwrap(), c);
    }

    #[test]
    fn empty_cloud_is_a_valid_ply() {
        let text = ply_string(&PointCloud::default()).unwrap();
        assert!(text.contains("element vertex 0\n"));
        assert!(text.ends_with("end_header\n"));
        assert!(parse_ply(&text).unwrap().is_empty());
    }

    #[test]
    fn truncated_ply_rejected() {
        let text = ply_string(&cloud()).unwrap();
        let cut = &text[..text.trim_end().rfind('\n').unwrap() + 1];
        assert!(parse_ply(cut).is_err());
    }

    #[test]
    fn pgm_round_trip() {
        let mut img = GrayImage::new(3, 2);
        img.pixels = vec![0, 10, 255, 32, 9, 1];
        assert_eq!(GrayImage::from_pgm(&img.to_pgm()).unwrap(), img);
        let both = img.beside(&img);
        assert_eq!((both.width, both.height), (7, 2));
        assert_eq!(both.pixels[3], 128);
    }
}
