//! Voxel-grid radiance field and the NVOX binary container.
//!
//! Layout (little-endian, no padding):
//!
//! | offset | size        | content                              |
//! |--------|-------------|--------------------------------------|
//! | 0      | 4           | magic `NVOX`                         |
//! | 4      | 4           | format version, `u32 = 1`            |
//! | 8      | 12          | dims `nx, ny, nz` as `u32`           |
//! | 20     | 48          | bounds `min xyz, max xyz` as `f64`   |
//! | 68     | 16 per cell | `r, g, b, sigma` as `f32`            |
//!
//! Cells are stored x-fastest, z-slowest. Voxel values sit at cell centers and
//! are trilinearly interpolated; queries outside the bounds are vacuum.

use std::fs;
use std::path::Path;

use thiserror::Error;

use super::{FieldBounds, RadianceField, RadianceSample};
use crate::camera::Vec3;

pub const NVOX_MAGIC: [u8; 4] = *b"NVOX";
const NVOX_VERSION: u32 = 1;
const HEADER_LEN: usize = 68;
const RECORD_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum NvoxError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic {found:?} at byte 0, expected \"NVOX\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported format version {version} at byte 4")]
    UnsupportedVersion { version: u32 },
    #[error("truncated {what} at byte {offset}: need {needed} bytes, {available} available")]
    Truncated {
        what: &'static str,
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("zero dimension in {dims:?} at byte 8")]
    ZeroDimension { dims: [u32; 3] },
    #[error("dimensions {dims:?} at byte 8 overflow the addressable payload")]
    DimsOverflow { dims: [u32; 3] },
    #[error("non-finite {what} at byte {offset}")]
    NonFinite { what: &'static str, offset: usize },
    #[error("bounds at byte 20 are not ordered (min {min:?}, max {max:?})")]
    InvalidBounds { min: [f64; 3], max: [f64; 3] },
    #[error("{extra} trailing bytes after payload at byte {offset}")]
    TrailingBytes { offset: usize, extra: usize },
    #[error("data length {actual} does not match dims {dims:?}")]
    LengthMismatch { dims: [u32; 3], actual: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    dims: [u32; 3],
    bounds: FieldBounds,
    data: Vec<[f32; 4]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelStats {
    pub cells: usize,
    pub occupied: usize,
    pub max_sigma: f32,
    pub mean_sigma: f64,
}

impl VoxelGrid {
    pub fn new(dims: [u32; 3], bounds: FieldBounds, data: Vec<[f32; 4]>) -> Result<Self, NvoxError> {
        if dims.contains(&0) {
            return Err(NvoxError::ZeroDimension { dims });
        }
        let cells = cell_count(dims).ok_or(NvoxError::DimsOverflow { dims })?;
        if data.len() != cells {
            return Err(NvoxError::LengthMismatch {
                dims,
                actual: data.len(),
            });
        }
        if let Some(idx) = data.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(NvoxError::NonFinite {
                what: "voxel value",
                offset: HEADER_LEN + idx * RECORD_LEN,
            });
        }
        Ok(Self { dims, bounds, data })
    }

    /// Grid with every cell set to `value`.
    pub fn filled(dims: [u32; 3], bounds: FieldBounds, value: [f32; 4]) -> Result<Self, NvoxError> {
        let cells = cell_count(dims).ok_or(NvoxError::DimsOverflow { dims })?;
        Self::new(dims, bounds, vec![value; cells])
    }

    pub fn dims(&self) -> [u32; 3] {
        self.dims
    }

    pub fn grid_bounds(&self) -> FieldBounds {
        self.bounds
    }

    pub fn data(&self) -> &[[f32; 4]] {
        &self.data
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        let [nx, ny, _] = self.dims.map(|d| d as usize);
        x + nx * (y + ny * z)
    }

    pub fn cell_mut(&mut self, x: usize, y: usize, z: usize) -> &mut [f32; 4] {
        let i = self.index(x, y, z);
        &mut self.data[i]
    }

    /// World position of a voxel center.
    pub fn voxel_center(&self, x: usize, y: usize, z: usize) -> Vec3 {
        let cell = self.cell_size();
        let min = self.bounds.min();
        Vec3::new(
            min.x + (x as f64 + 0.5) * cell.x,
            min.y + (y as f64 + 0.5) * cell.y,
            min.z + (z as f64 + 0.5) * cell.z,
        )
    }

    fn cell_size(&self) -> Vec3 {
        let extent = self.bounds.max() - self.bounds.min();
        Vec3::new(
            extent.x / self.dims[0] as f64,
            extent.y / self.dims[1] as f64,
            extent.z / self.dims[2] as f64,
        )
    }

    pub fn stats(&self) -> VoxelStats {
        let occupied = self.data.iter().filter(|r| r[3] > 0.0).count();
        let max_sigma = self.data.iter().map(|r| r[3]).fold(0.0f32, f32::max);
        let mean_sigma =
            self.data.iter().map(|r| r[3].max(0.0) as f64).sum::<f64>() / self.data.len() as f64;
        VoxelStats {
            cells: self.data.len(),
            occupied,
            max_sigma,
            mean_sigma,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * RECORD_LEN);
        out.extend_from_slice(&NVOX_MAGIC);
        out.extend_from_slice(&NVOX_VERSION.to_le_bytes());
        for d in self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in self.bounds.min().iter().chain(self.bounds.max().iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for rec in &self.data {
            for v in rec {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NvoxError> {
        let mut reader = Reader { bytes, offset: 0 };
        let magic: [u8; 4] = reader.take("magic", 4)?.try_into().unwrap();
        if magic != NVOX_MAGIC {
            return Err(NvoxError::BadMagic { found: magic });
        }
        let version = reader.u32("version")?;
        if version != NVOX_VERSION {
            return Err(NvoxError::UnsupportedVersion { version });
        }
        let dims = [reader.u32("dims")?, reader.u32("dims")?, reader.u32("dims")?];
        let mut corners = [0.0f64; 6];
        for c in &mut corners {
            let offset = reader.offset;
            *c = reader.f64("bounds")?;
            if !c.is_finite() {
                return Err(NvoxError::NonFinite {
                    what: "bound",
                    offset,
                });
            }
        }
        let min = [corners[0], corners[1], corners[2]];
        let max = [corners[3], corners[4], corners[5]];
        let bounds = FieldBounds::new(min.into(), max.into())
            .map_err(|_| NvoxError::InvalidBounds { min, max })?;
        if dims.contains(&0) {
            return Err(NvoxError::ZeroDimension { dims });
        }
        let cells = cell_count(dims)
            .filter(|c| c.checked_mul(RECORD_LEN).is_some())
            .ok_or(NvoxError::DimsOverflow { dims })?;
        let payload = reader.take("voxel payload", cells * RECORD_LEN)?;
        let mut data = Vec::with_capacity(cells);
        for (idx, chunk) in payload.chunks_exact(RECORD_LEN).enumerate() {
            let mut rec = [0.0f32; 4];
            for (k, v) in rec.iter_mut().enumerate() {
                *v = f32::from_le_bytes(chunk[k * 4..k * 4 + 4].try_into().unwrap());
                if !v.is_finite() {
                    return Err(NvoxError::NonFinite {
                        what: "voxel value",
                        offset: HEADER_LEN + idx * RECORD_LEN + k * 4,
                    });
                }
            }
            data.push(rec);
        }
        if reader.offset != bytes.len() {
            return Err(NvoxError::TrailingBytes {
                offset: reader.offset,
                extra: bytes.len() - reader.offset,
            });
        }
        Ok(Self { dims, bounds, data })
    }

    fn record(&self, x: usize, y: usize, z: usize) -> &[f32; 4] {
        &self.data[self.index(x, y, z)]
    }
}

fn cell_count(dims: [u32; 3]) -> Option<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, what: &'static str, n: usize) -> Result<&'a [u8], NvoxError> {
        let available = self.bytes.len() - self.offset;
        if available < n {
            return Err(NvoxError::Truncated {
                what,
                offset: self.offset,
                needed: n,
                available,
            });
        }
        let out = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(out)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, NvoxError> {
        Ok(u32::from_le_bytes(self.take(what, 4)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &'static str) -> Result<f64, NvoxError> {
        Ok(f64::from_le_bytes(self.take(what, 8)?.try_into().unwrap()))
    }
}

/// Continuous cell coordinate along one axis: lower index and weight of the
/// upper neighbour, clamped to the outermost voxel centers.
fn axis_weights(pos: f64, min: f64, cell: f64, n: u32) -> (usize, usize, f64) {
    let last = (n - 1) as f64;
    let g = ((pos - min) / cell - 0.5).clamp(0.0, last);
    let i0 = (g.floor() as usize).min(n as usize - 1);
    let i1 = (i0 + 1).min(n as usize - 1);
    (i0, i1, g - i0 as f64)
}

impl RadianceField for VoxelGrid {
    fn query(&self, x: &Vec3, _d: &Vec3) -> RadianceSample {
        if !self.bounds.contains(x) {
            return RadianceSample::VACUUM;
        }
        let cell = self.cell_size();
        let min = self.bounds.min();
        let (x0, x1, wx) = axis_weights(x.x, min.x, cell.x, self.dims[0]);
        let (y0, y1, wy) = axis_weights(x.y, min.y, cell.y, self.dims[1]);
        let (z0, z1, wz) = axis_weights(x.z, min.z, cell.z, self.dims[2]);
        let mut acc = [0.0f64; 4];
        for (zi, wzi) in [(z0, 1.0 - wz), (z1, wz)] {
            for (yi, wyi) in [(y0, 1.0 - wy), (y1, wy)] {
                for (xi, wxi) in [(x0, 1.0 - wx), (x1, wx)] {
                    let w = wxi * wyi * wzi;
                    if w == 0.0 {
                        continue;
                    }
                    let rec = self.record(xi, yi, zi);
                    for k in 0..4 {
                        acc[k] += w * rec[k] as f64;
                    }
                }
            }
        }
        RadianceSample {
            color: [acc[0], acc[1], acc[2]].map(|c| c.clamp(0.0, 1.0)),
            sigma: acc[3].max(0.0),
        }
    }

    fn bounds(&self) -> Option<FieldBounds> {
        Some(self.bounds)
    }
}

pub fn load_voxel_grid(path: &Path) -> Result<VoxelGrid, NvoxError> {
    let bytes = fs::read(path).map_err(|source| NvoxError::Io {
        path: path.display().to_string(),
        source,
    })?;
    VoxelGrid::from_bytes(&bytes)
}

pub fn write_voxel_grid(path: &Path, grid: &VoxelGrid) -> Result<(), NvoxError> {
    fs::write(path, grid.to_bytes()).map_err(|source| NvoxError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_bounds() -> FieldBounds {
        FieldBounds::new(Vec3::zeros(), Vec3::repeat(1.0)).unwrap()
    }

    fn sample_grid() -> VoxelGrid {
        let mut g = VoxelGrid::filled([3, 2, 4], unit_bounds(), [0.0; 4]).unwrap();
        for (i, rec) in g.data.iter_mut().enumerate() {
            *rec = [0.1 * (i % 10) as f32, 0.5, 0.25, i as f32 * 0.75];
        }
        g
    }

    #[test]
    fn bytes_round_trip() {
        let g = sample_grid();
        let bytes = g.to_bytes();
        assert_eq!(bytes.len(), HEADER_LEN + 24 * RECORD_LEN);
        let back = VoxelGrid::from_bytes(&bytes).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.nvox");
        let g = sample_grid();
        write_voxel_grid(&path, &g).unwrap();
        assert_eq!(fs::read(&path).unwrap(), g.to_bytes());
        assert_eq!(load_voxel_grid(&path).unwrap(), g);
    }

    #[test]
    fn constant_grid_is_constant_inside() {
        let g = VoxelGrid::filled([4, 3, 2], unit_bounds(), [0.2, 0.4, 0.6, 3.0]).unwrap();
        for p in [[0.0, 0.0, 0.0], [0.37, 0.91, 0.5], [1.0, 1.0, 1.0], [0.5, 0.01, 0.99]] {
            let s = g.query(&Vec3::from(p), &Vec3::z());
            assert!((s.sigma - 3.0).abs() < 1e-6);
            assert!((s.color[1] - 0.4).abs() < 1e-6);
        }
        assert_eq!(g.query(&Vec3::new(1.1, 0.5, 0.5), &Vec3::z()), RadianceSample::VACUUM);
    }

    #[test]
    fn single_corner_trilinear_weight() {
        let mut g = VoxelGrid::filled([2, 2, 2], unit_bounds(), [0.0; 4]).unwrap();
        g.cell_mut(0, 0, 0)[3] = 8.0;
        let s = g.query(&Vec3::repeat(0.5), &Vec3::z());
        assert!((s.sigma - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reproduces_values_at_voxel_centers() {
        let g = sample_grid();
        for z in 0..4 {
            for y in 0..2 {
                for x in 0..3 {
                    let s = g.query(&g.voxel_center(x, y, z), &Vec3::z());
                    let rec = g.data()[g.index(x, y, z)];
                    assert!((s.sigma - rec[3] as f64).abs() < 1e-6);
                    assert!((s.color[0] - rec[0] as f64).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn negative_density_clamped_at_query() {
        let g = VoxelGrid::filled([1, 1, 1], unit_bounds(), [0.5, 0.5, 0.5, -2.0]).unwrap();
        assert_eq!(g.query(&Vec3::repeat(0.5), &Vec3::z()).sigma, 0.0);
    }

    #[test]
    fn parse_errors_carry_offsets() {
        let good = sample_grid().to_bytes();

        let mut bad = good.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(VoxelGrid::from_bytes(&bad), Err(NvoxError::BadMagic { .. })));

        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(
            VoxelGrid::from_bytes(&bad),
            Err(NvoxError::UnsupportedVersion { version: 2 })
        ));

        match VoxelGrid::from_bytes(&good[..good.len() - 3]) {
            Err(NvoxError::Truncated { offset, .. }) => assert_eq!(offset, HEADER_LEN),
            other => panic!("{other:?}"),
        }
        match VoxelGrid::from_bytes(&good[..30]) {
            Err(NvoxError::Truncated { what, offset, .. }) => {
                assert_eq!(what, "bounds");
                assert_eq!(offset, 28);
            }
            other => panic!("{other:?}"),
        }

        let mut bad = good.clone();
        let at = HEADER_LEN + 5 * RECORD_LEN + 12;
        bad[at..at + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        match VoxelGrid::from_bytes(&bad) {
            Err(NvoxError::NonFinite { offset, .. }) => assert_eq!(offset, at),
            other => panic!("{other:?}"),
        }

        let mut bad = good.clone();
        for k in 0..3 {
            bad[8 + 4 * k..12 + 4 * k].copy_from_slice(&u32::MAX.to_le_bytes());
        }
        assert!(matches!(
            VoxelGrid::from_bytes(&bad),
            Err(NvoxError::DimsOverflow { .. }) | Err(NvoxError::Truncated { .. })
        ));

        let mut bad = good.clone();
        bad[8..12].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(VoxelGrid::from_bytes(&bad), Err(NvoxError::ZeroDimension { .. })));

        let mut bad = good.clone();
        bad.push(0);
        assert!(matches!(
            VoxelGrid::from_bytes(&bad),
            Err(NvoxError::TrailingBytes { extra: 1, .. })
        ));
    }
}
