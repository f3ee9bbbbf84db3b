//! The RDLC binary tensor container and the JSON sidecars describing what a
//! group of tensors holds.
//!
//! Layout, little-endian: magic `RDLC`, `u16` version, `u8` dtype code,
//! `u8` rank, `rank` x `u64` dims, then the row-major payload. Complex
//! values are stored as (re, im) `f64` pairs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use radelft_core::{AdcFrame, Complex64, OccupancyGrid, PointCloud, PolarGrid, RadarCube};
use serde::{Deserialize, Serialize};

use crate::error::{FormatError, Result};

pub const TENSOR_MAGIC: [u8; 4] = *b"RDLC";
pub const TENSOR_VERSION: u16 = 1;
pub const SIDECAR_FORMAT: &str = "radelft-sidecar";
pub const SIDECAR_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U8(Vec<u8>),
    U16(Vec<u16>),
    I32(Vec<i32>),
    C128(Vec<Complex64>),
}

impl TensorData {
    fn code(&self) -> u8 {
        match self {
            Self::F32(_) => 1,
            Self::F64(_) => 2,
            Self::U8(_) => 3,
            Self::U16(_) => 4,
            Self::I32(_) => 5,
            Self::C128(_) => 6,
        }
    }

    fn dtype_name(&self) -> &'static str {
        match self {
            Self::F32(_) => "f32",
            Self::F64(_) => "f64",
            Self::U8(_) => "u8",
            Self::U16(_) => "u16",
            Self::I32(_) => "i32",
            Self::C128(_) => "c128",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::F32(v) => v.len(),
            Self::F64(v) => v.len(),
            Self::U8(v) => v.len(),
            Self::U16(v) => v.len(),
            Self::I32(v) => v.len(),
            Self::C128(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A shaped tensor of one of the supported element types.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub shape: Vec<usize>,
    pub data: TensorData,
}

macro_rules! accessor {
    ($name:ident, $variant:ident, $t:ty) => {
        pub fn $name(self) -> Result<Vec<$t>> {
            match self.data {
                TensorData::$variant(v) => Ok(v),
                other => Err(FormatError::Shape(format!(
                    "expected {} tensor, found {}",
                    stringify!($t),
                    other.dtype_name()
                ))),
            }
        }
    };
}

impl RawTensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(FormatError::Shape(format!("{} elements cannot have shape {shape:?}", data.len())));
        }
        Ok(Self { shape, data })
    }

    accessor!(into_f32, F32, f32);
    accessor!(into_f64, F64, f64);
    accessor!(into_u8, U8, u8);
    accessor!(into_u16, U16, u16);
    accessor!(into_c128, C128, Complex64);

    /// Fails unless the tensor has exactly this shape.
    pub fn expect_shape(&self, shape: &[usize]) -> Result<()> {
        if self.shape != shape {
            return Err(FormatError::Shape(format!("tensor has shape {:?}, expected {shape:?}", self.shape)));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.shape.len() + 16 * self.data.len());
        out.extend_from_slice(&TENSOR_MAGIC);
        out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
        out.push(self.data.code());
        out.push(self.shape.len() as u8);
        for &d in &self.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U8(v) => out.extend_from_slice(v),
            TensorData::U16(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::I32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::C128(v) => v.iter().for_each(|c| {
                out.extend_from_slice(&c.re.to_le_bytes());
                out.extend_from_slice(&c.im.to_le_bytes());
            }),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
        if magic != TENSOR_MAGIC {
            return Err(FormatError::Magic { expected: TENSOR_MAGIC, found: magic });
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != TENSOR_VERSION {
            return Err(FormatError::Version { found: version, supported: TENSOR_VERSION });
        }
        let code = r.take(1)?[0];
        let rank = r.take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = u64::from_le_bytes(r.array()?);
            shape.push(usize::try_from(d).map_err(|_| FormatError::Shape(format!("dimension {d} too large")))?);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| FormatError::Shape(format!("shape {shape:?} overflows")))?;
        let width = match code {
            1 => 4,
            2 => 8,
            3 => 1,
            4 => 2,
            5 => 4,
            6 => 16,
            c => return Err(FormatError::Dtype(c)),
        };
        let payload = r.take(n.checked_mul(width).ok_or_else(|| FormatError::Shape("payload size overflows".into()))?)?;
        if r.pos != bytes.len() {
            return Err(FormatError::Shape(format!("{} trailing bytes after payload", bytes.len() - r.pos)));
        }
        let chunks = |w: usize| payload.chunks_exact(w);
        let data = match code {
            1 => TensorData::F32(chunks(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()),
            2 => TensorData::F64(chunks(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()),
            3 => TensorData::U8(payload.to_vec()),
            4 => TensorData::U16(chunks(2).map(|c| u16::from_le_bytes(c.try_into().unwrap())).collect()),
            5 => TensorData::I32(chunks(4).map(|c| i32::from_le_bytes(c.try_into().unwrap())).collect()),
            _ => TensorData::C128(
                chunks(16)
                    .map(|c| {
                        Complex64::new(
                            f64::from_le_bytes(c[..8].try_into().unwrap()),
                            f64::from_le_bytes(c[8..].try_into().unwrap()),
                        )
                    })
                    .collect(),
            ),
        };
        Ok(Self { shape, data })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            FormatError::Truncated(format!("needed {n} bytes at offset {}, file has {}", self.pos, self.bytes.len()))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }
}

pub fn write_tensor(path: &Path, t: &RawTensor) -> Result<()> {
    fs::write(path, t.to_bytes()).map_err(|e| FormatError::io(path, e))
}

pub fn read_tensor(path: &Path) -> Result<RawTensor> {
    let bytes = fs::read(path).map_err(|e| FormatError::io(path, e))?;
    RawTensor::from_bytes(&bytes).map_err(|e| match e {
        FormatError::Io { .. } => e,
        other => FormatError::Invalid(format!("{}: {other}", path.display())),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Adc,
    Cube,
    Occupancy,
    Cloud,
}

/// JSON description of one artifact: its tensors (file names relative to
/// the sidecar) and the metadata needed to rebuild it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format: String,
    pub version: u16,
    pub kind: ArtifactKind,
    pub tensors: BTreeMap<String, String>,
    #[serde(default)]
    pub timestamp: Option<f64>,
    #[serde(default)]
    pub grid: Option<PolarGrid>,
    #[serde(default)]
    pub tx_of_chirp: Option<Vec<usize>>,
}

impl Sidecar {
    fn new(kind: ArtifactKind, timestamp: Option<f64>) -> Self {
        Self {
            format: SIDECAR_FORMAT.into(),
            version: SIDECAR_VERSION,
            kind,
            tensors: BTreeMap::new(),
            timestamp,
            grid: None,
            tx_of_chirp: None,
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
        let car: Sidecar = serde_json::from_str(&text)?;
        if car.format != SIDECAR_FORMAT {
            return Err(FormatError::Invalid(format!("{}: not a sidecar (format '{}')", path.display(), car.format)));
        }
        if car.version != SIDECAR_VERSION {
            return Err(FormatError::Version { found: car.version, supported: SIDECAR_VERSION });
        }
        Ok(car)
    }

    fn expect(&self, kind: ArtifactKind, path: &Path) -> Result<()> {
        if self.kind != kind {
            return Err(FormatError::Invalid(format!("{}: holds {:?}, expected {kind:?}", path.display(), self.kind)));
        }
        Ok(())
    }

    fn tensor(&self, name: &str, sidecar: &Path) -> Result<RawTensor> {
        let file = self
            .tensors
            .get(name)
            .ok_or_else(|| FormatError::Invalid(format!("{}: no '{name}' tensor", sidecar.display())))?;
        read_tensor(&sibling(sidecar, file))
    }

    fn grid(&self, sidecar: &Path) -> Result<PolarGrid> {
        self.grid.clone().ok_or_else(|| FormatError::Invalid(format!("{}: grid missing", sidecar.display())))
    }
}

fn sibling(sidecar: &Path, file: &str) -> PathBuf {
    sidecar.parent().unwrap_or(Path::new(".")).join(file)
}

/// Writes the tensors next to `sidecar` as `<stem>.<name>.rdlc`, then the sidecar.
fn write_artifact(sidecar: &Path, mut car: Sidecar, tensors: Vec<(&str, RawTensor)>) -> Result<()> {
    let stem = sidecar
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| FormatError::Invalid(format!("bad artifact path {}", sidecar.display())))?;
    for (name, t) in tensors {
        let file = format!("{stem}.{name}.rdlc");
        write_tensor(&sibling(sidecar, &file), &t)?;
        car.tensors.insert(name.to_string(), file);
    }
    let text = serde_json::to_string_pretty(&car)?;
    fs::write(sidecar, text + "\n").map_err(|e| FormatError::io(sidecar, e))
}

pub fn write_adc(path: &Path, frame: &AdcFrame) -> Result<()> {
    frame.check()?;
    let mut car = Sidecar::new(ArtifactKind::Adc, Some(frame.timestamp));
    car.tx_of_chirp = Some(frame.tx_of_chirp.clone());
    let samples = RawTensor::new(frame.shape().to_vec(), TensorData::C128(frame.data.clone()))?;
    write_artifact(path, car, vec![("samples", samples)])
}

pub fn read_adc(path: &Path) -> Result<AdcFrame> {
    let car = Sidecar::read(path)?;
    car.expect(ArtifactKind::Adc, path)?;
    let t = car.tensor("samples", path)?;
    let [n_fast, n_slow, n_vchan] = <[usize; 3]>::try_from(t.shape.clone())
        .map_err(|_| FormatError::Shape(format!("ADC tensor must be rank 3, got {:?}", t.shape)))?;
    let frame = AdcFrame {
        n_fast,
        n_slow,
        n_vchan,
        data: t.into_c128()?,
        timestamp: car.timestamp.unwrap_or(0.0),
        tx_of_chirp: car.tx_of_chirp.unwrap_or_default(),
    };
    frame.check()?;
    Ok(frame)
}

pub fn write_cube(path: &Path, cube: &RadarCube) -> Result<()> {
    cube.check()?;
    let mut car = Sidecar::new(ArtifactKind::Cube, Some(cube.timestamp));
    car.grid = Some(cube.grid.clone());
    let shape = cube.shape().to_vec();
    let power = RawTensor::new(shape.clone(), TensorData::F64(cube.power.clone()))?;
    let elev = RawTensor::new(shape, TensorData::U16(cube.elev_argmax.clone()))?;
    write_artifact(path, car, vec![("power", power), ("elevation", elev)])
}

pub fn read_cube(path: &Path) -> Result<RadarCube> {
    let car = Sidecar::read(path)?;
    car.expect(ArtifactKind::Cube, path)?;
    let grid = car.grid(path)?;
    let shape = [grid.n_range, grid.n_doppler, grid.n_az()];
    let power = car.tensor("power", path)?;
    power.expect_shape(&shape)?;
    let elev = car.tensor("elevation", path)?;
    elev.expect_shape(&shape)?;
    Ok(RadarCube::new(grid, power.into_f64()?, elev.into_u16()?, car.timestamp.unwrap_or(0.0))?)
}

pub fn write_occupancy(path: &Path, occ: &OccupancyGrid, timestamp: Option<f64>) -> Result<()> {
    let mut car = Sidecar::new(ArtifactKind::Occupancy, timestamp);
    car.grid = Some(occ.grid.clone());
    let t = RawTensor::new(occ.shape().to_vec(), TensorData::U8(occ.occ.clone()))?;
    write_artifact(path, car, vec![("occupancy", t)])
}

pub fn read_occupancy(path: &Path) -> Result<(OccupancyGrid, Option<f64>)> {
    let car = Sidecar::read(path)?;
    car.expect(ArtifactKind::Occupancy, path)?;
    let grid = car.grid(path)?;
    let t = car.tensor("occupancy", path)?;
    t.expect_shape(&[grid.n_range, grid.n_az(), grid.n_el()])?;
    Ok((OccupancyGrid::from_vec(grid, t.into_u8()?)?, car.timestamp))
}

pub fn write_cloud(path: &Path, cloud: &PointCloud, timestamp: Option<f64>) -> Result<()> {
    cloud.check()?;
    let car = Sidecar::new(ArtifactKind::Cloud, timestamp);
    let flat: Vec<f64> = cloud.points.iter().flatten().copied().collect();
    let mut tensors = vec![("points", RawTensor::new(vec![cloud.len(), 3], TensorData::F64(flat))?)];
    if let Some(d) = &cloud.doppler {
        tensors.push(("doppler", RawTensor::new(vec![d.len()], TensorData::F64(d.clone()))?));
    }
    if let Some(p) = &cloud.power_db {
        tensors.push(("power_db", RawTensor::new(vec![p.len()], TensorData::F64(p.clone()))?));
    }
    write_artifact(path, car, tensors)
}

pub fn read_cloud(path: &Path) -> Result<(PointCloud, Option<f64>)> {
    let car = Sidecar::read(path)?;
    car.expect(ArtifactKind::Cloud, path)?;
    let t = car.tensor("points", path)?;
    if t.shape.len() != 2 || t.shape[1] != 3 {
        return Err(FormatError::Shape(format!("point tensor must be [N, 3], got {:?}", t.shape)));
    }
    let n = t.shape[0];
    let flat = t.into_f64()?;
    let column = |name: &str| -> Result<Option<Vec<f64>>> {
        if !car.tensors.contains_key(name) {
            return Ok(None);
        }
        let c = car.tensor(name, path)?;
        c.expect_shape(&[n])?;
        Ok(Some(c.into_f64()?))
    };
    let cloud = PointCloud {
        points: flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        doppler: column("doppler")?,
        power_db: column("power_db")?,
    };
    cloud.check()?;
    Ok((cloud, car.timestamp))
}

/// Kind of the artifact described by a sidecar.
pub fn artifact_kind(path: &Path) -> Result<ArtifactKind> {
    Ok(Sidecar::read(path)?.kind)
}
