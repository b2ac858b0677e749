//! Axis-aligned voxel volumes with physical spacing.
//!
//! Voxel `(i, j, k)` has its centre at `origin + (i*sx, j*sy, k*sz)` and data
//! is stored x-fastest.

mod components;
mod edt;
mod io;

pub use components::{connected_components, dice};
pub use edt::distance_transform;
pub use io::{load_volume, save_volume, VolumeFormat};

use crate::error::{Error, Result};
use crate::geom::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolumeKind {
    BinaryMask,
    ScalarField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelVolume {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    data: Vec<f32>,
    kind: VolumeKind,
}

impl VoxelVolume {
    pub fn new(
        dims: [usize; 3],
        spacing: [f64; 3],
        origin: [f64; 3],
        data: Vec<f32>,
        kind: VolumeKind,
    ) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!("dims must be >= 1, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "spacing must be positive, got {spacing:?}"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidArgument("origin must be finite".into()));
        }
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(Error::DataLength {
                expected,
                found: data.len(),
            });
        }
        if kind == VolumeKind::BinaryMask && data.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::NotBinary);
        }
        Ok(VoxelVolume {
            dims,
            spacing,
            origin,
            data,
            kind,
        })
    }

    /// All-zero mask on the given grid.
    pub fn empty_mask(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        let n = dims.iter().product();
        Self::new(dims, spacing, origin, vec![0.0; n], VolumeKind::BinaryMask)
    }

    /// Same grid as `self`, new data.
    pub fn with_data(&self, data: Vec<f32>, kind: VolumeKind) -> Result<Self> {
        Self::new(self.dims, self.spacing, self.origin, data, kind)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }
    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }
    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }
    pub fn data(&self) -> &[f32] {
        &self.data
    }
    pub fn kind(&self) -> VolumeKind {
        self.kind
    }
    pub fn is_binary(&self) -> bool {
        self.kind == VolumeKind::BinaryMask
    }
    pub fn len(&self) -> usize {
        self.data.len()
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    pub fn voxel_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let j = (idx / self.dims[0]) % self.dims[1];
        let k = idx / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.data[self.index(i, j, k)]
    }

    /// Value at signed indices, `None` outside the grid.
    #[inline]
    pub fn get_signed(&self, i: i64, j: i64, k: i64) -> Option<f32> {
        if i < 0 || j < 0 || k < 0 {
            return None;
        }
        let (i, j, k) = (i as usize, j as usize, k as usize);
        if i >= self.dims[0] || j >= self.dims[1] || k >= self.dims[2] {
            return None;
        }
        Some(self.get(i, j, k))
    }

    pub fn world(&self, i: usize, j: usize, k: usize) -> Vec3 {
        Vec3::new(
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        )
    }

    pub fn world_of_index(&self, idx: usize) -> Vec3 {
        let [i, j, k] = self.coords(idx);
        self.world(i, j, k)
    }

    /// Continuous voxel coordinates of a world point.
    pub fn to_voxel(&self, p: &Vec3) -> Vec3 {
        Vec3::new(
            (p.x - self.origin[0]) / self.spacing[0],
            (p.y - self.origin[1]) / self.spacing[1],
            (p.z - self.origin[2]) / self.spacing[2],
        )
    }

    /// Number of set voxels (non-zero values).
    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0.0).count()
    }

    /// Trilinear interpolation at a world point; coordinates outside the grid
    /// are clamped to the boundary.
    pub fn sample(&self, p: &Vec3) -> f64 {
        let q = self.to_voxel(p);
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let n = self.dims[a];
            let mut x = q[a].clamp(0.0, (n - 1) as f64);
            // Snap round-off so voxel centres return stored values exactly.
            let r = x.round();
            if (x - r).abs() < 1e-9 {
                x = r;
            }
            let f = x.floor();
            let mut b = f as usize;
            let mut t = x - f;
            if b >= n - 1 {
                b = n - 1;
                t = 0.0;
            }
            base[a] = b;
            frac[a] = t;
        }
        let mut acc = 0.0;
        for dz in 0..2 {
            let wz = if dz == 0 { 1.0 - frac[2] } else { frac[2] };
            if wz == 0.0 {
                continue;
            }
            for dy in 0..2 {
                let wy = if dy == 0 { 1.0 - frac[1] } else { frac[1] };
                if wy == 0.0 {
                    continue;
                }
                for dx in 0..2 {
                    let wx = if dx == 0 { 1.0 - frac[0] } else { frac[0] };
                    if wx == 0.0 {
                        continue;
                    }
                    let v = self.get(base[0] + dx, base[1] + dy, base[2] + dz) as f64;
                    acc += wx * wy * wz * v;
                }
            }
        }
        acc
    }

    /// Indices of set voxels with at least one empty (or out-of-grid) 6-neighbour.
    pub fn surface_voxels(&self) -> Vec<usize> {
        let [nx, ny, nz] = self.dims;
        let mut out = Vec::new();
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    if self.get(i, j, k) == 0.0 {
                        continue;
                    }
                    let (ii, jj, kk) = (i as i64, j as i64, k as i64);
                    let nb = [
                        (ii - 1, jj, kk),
                        (ii + 1, jj, kk),
                        (ii, jj - 1, kk),
                        (ii, jj + 1, kk),
                        (ii, jj, kk - 1),
                        (ii, jj, kk + 1),
                    ];
                    if nb
                        .iter()
                        .any(|&(a, b, c)| self.get_signed(a, b, c).map_or(true, |v| v == 0.0))
                    {
                        out.push(self.index(i, j, k));
                    }
                }
            }
        }
        out
    }

    /// World-mm centres of the surface voxels.
    pub fn surface_points(&self) -> Vec<Vec3> {
        self.surface_voxels()
            .into_iter()
            .map(|i| self.world_of_index(i))
            .collect()
    }

    /// World-mm centres of all set voxels.
    pub fn set_points(&self) -> Vec<Vec3> {
        (0..self.len())
            .filter(|&i| self.data[i] != 0.0)
            .map(|i| self.world_of_index(i))
            .collect()
    }

    /// Copy of the sub-grid `[lo, lo + size)` (clipped to the grid).
    pub fn crop(&self, lo: [usize; 3], size: [usize; 3]) -> Result<Self> {
        let mut dims = [0usize; 3];
        for a in 0..3 {
            if lo[a] >= self.dims[a] {
                return Err(Error::InvalidArgument(format!(
                    "crop start {lo:?} outside dims {:?}",
                    self.dims
                )));
            }
            dims[a] = size[a].min(self.dims[a] - lo[a]).max(1);
        }
        let mut data = Vec::with_capacity(dims.iter().product());
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    data.push(self.get(lo[0] + i, lo[1] + j, lo[2] + k));
                }
            }
        }
        let o = self.world(lo[0], lo[1], lo[2]);
        Self::new(dims, self.spacing, [o.x, o.y, o.z], data, self.kind)
    }

    /// Binary copy thresholded at `> 0.5`.
    pub fn to_mask(&self) -> Self {
        let data = self
            .data
            .iter()
            .map(|&v| if v > 0.5 { 1.0 } else { 0.0 })
            .collect();
        VoxelVolume {
            dims: self.dims,
            spacing: self.spacing,
            origin: self.origin,
            data,
            kind: VolumeKind::BinaryMask,
        }
    }

    pub fn same_grid(&self, other: &VoxelVolume) -> bool {
        self.dims == other.dims && self.spacing == other.spacing && self.origin == other.origin
    }
}

/// Multi-channel scalar grid sharing one geometry (image-feature stand-in).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    channels: Vec<VoxelVolume>,
}

impl FeatureGrid {
    pub fn new(channels: Vec<VoxelVolume>) -> Result<Self> {
        let Some(first) = channels.first() else {
            return Err(Error::InvalidArgument("feature grid needs >= 1 channel".into()));
        };
        if channels.iter().any(|c| !c.same_grid(first)) {
            return Err(Error::InvalidArgument(
                "feature channels must share dims/spacing/origin".into(),
            ));
        }
        Ok(FeatureGrid { channels })
    }

    pub fn channels(&self) -> usize {
        self.channels.len()
    }

    pub fn base(&self) -> &VoxelVolume {
        &self.channels[0]
    }

    /// Trilinear sample of every channel (clamped outside the grid).
    pub fn sample_trilinear(&self, p: &Vec3) -> Vec<f64> {
        self.channels.iter().map(|c| c.sample(p)).collect()
    }
}
