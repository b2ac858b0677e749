//! Per-branch tube meshes from a centerline and a voxel label: radial ray
//! casting, angular and longitudinal radius smoothing, and ring stitching.

use rayon::prelude::*;

use crate::centerline::BranchCenterline;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::mesh::TriMesh;
use crate::volume::VoxelVolume;

/// Rays per cross-section at the default 15° step.
pub const DEFAULT_RAYS: usize = 24;
/// Fewer rays than this give degenerate rings.
pub const MIN_RAYS: usize = 8;
/// Longitudinal radius slope allowed after fold removal.
pub const MAX_RADIUS_SLOPE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructConfig {
    pub rays: usize,
    /// Marching step along each ray, mm.
    pub ray_step: f64,
    /// Angular Gaussian sigma, in ray indices.
    pub sigma_angular: f64,
    /// Longitudinal Gaussian sigma, in rings.
    pub sigma_longitudinal: f64,
    pub r_min: f64,
    pub r_max: f64,
    /// Emptiness that must follow a boundary crossing, mm.
    pub hole_tolerance: f64,
    /// A branch with a larger fraction of invalid rings is rejected.
    pub max_invalid_fraction: f64,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        ReconstructConfig {
            rays: DEFAULT_RAYS,
            ray_step: 0.05,
            sigma_angular: 1.0,
            sigma_longitudinal: 2.0,
            r_min: 0.1,
            r_max: 10.0,
            hole_tolerance: 1.0,
            max_invalid_fraction: 0.5,
        }
    }
}

impl ReconstructConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.rays < MIN_RAYS {
            return bad("at least 8 rays per ring");
        }
        if !(self.ray_step > 0.0) {
            return bad("ray step must be > 0");
        }
        if !(self.sigma_angular >= 0.0 && self.sigma_longitudinal >= 0.0) {
            return bad("smoothing sigmas must be >= 0");
        }
        if !(self.r_min > 0.0 && self.r_max > self.r_min) {
            return bad("need 0 < r_min < r_max");
        }
        if !(self.hole_tolerance >= 0.0) {
            return bad("hole tolerance must be >= 0");
        }
        Ok(())
    }
}

/// Cross-section boundary around one centerline sample.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSectionRing {
    pub center: Vec3,
    pub tangent: Vec3,
    pub u: Vec3,
    pub v: Vec3,
    /// Radius along ray `j`, at angle `j · 360° / rays` from `u` toward `v`.
    pub radii: Vec<f64>,
    pub points: Vec<Vec3>,
}

/// Unit direction of ray `j` of `n` in the `(u, v)` plane.
pub fn ray_direction(u: &Vec3, v: &Vec3, j: usize, n: usize) -> Vec3 {
    let a = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
    u * a.cos() + v * a.sin()
}

impl CrossSectionRing {
    pub fn new(center: Vec3, tangent: Vec3, u: Vec3, v: Vec3, radii: Vec<f64>) -> Self {
        let mut r = CrossSectionRing { center, tangent, u, v, radii, points: Vec::new() };
        r.update_points();
        r
    }

    /// Recomputes boundary points from the radii.
    pub fn update_points(&mut self) {
        let n = self.radii.len();
        self.points = (0..n)
            .map(|j| self.center + ray_direction(&self.u, &self.v, j, n) * self.radii[j])
            .collect();
    }
}

/// Radius along each ray: the first 0.5-occupancy crossing followed by at
/// least `hole_tolerance` of emptiness, clamped to `[r_min, r_max]`. `None`
/// when the center itself lies outside the mask.
pub fn cast_rays(center: &Vec3, u: &Vec3, v: &Vec3, mask: &VoxelVolume, cfg: &ReconstructConfig) -> Option<Vec<f64>> {
    if mask.sample(center) < 0.5 {
        return None;
    }
    Some(
        (0..cfg.rays)
            .map(|j| {
                let dir = ray_direction(u, v, j, cfg.rays);
                march(center, &dir, mask, cfg).clamp(cfg.r_min, cfg.r_max)
            })
            .collect(),
    )
}

fn march(center: &Vec3, dir: &Vec3, mask: &VoxelVolume, cfg: &ReconstructConfig) -> f64 {
    let step = cfg.ray_step;
    let occ = |r: f64| mask.sample(&(center + dir * r));
    let limit = cfg.r_max + cfg.hole_tolerance;
    let mut prev = occ(0.0);
    let mut k = 1usize;
    loop {
        let r = step * k as f64;
        if r > cfg.r_max {
            return cfg.r_max;
        }
        let cur = occ(r);
        if prev >= 0.5 && cur < 0.5 {
            let crossing = r - step + step * (prev - 0.5) / (prev - cur);
            // Confirm the gap is not a hole.
            let mut m = k + 1;
            let mut refill = None;
            while step * (m as f64) <= (crossing + cfg.hole_tolerance).min(limit) {
                if occ(step * m as f64) >= 0.5 {
                    refill = Some(m);
                    break;
                }
                m += 1;
            }
            match refill {
                None => return crossing,
                Some(m) => {
                    k = m;
                    prev = occ(step * m as f64);
                    k += 1;
                    continue;
                }
            }
        }
        prev = cur;
        k += 1;
    }
}

/// Normalized Gaussian weights for offsets `-h..=h`, `h = ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let h = (3.0 * sigma).ceil() as i64;
    let w: Vec<f64> = (-h..=h).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Circular Gaussian smoothing over the ray index.
pub fn smooth_radii_angular(radii: &[f64], sigma: f64) -> Vec<f64> {
    let n = radii.len() as i64;
    if n == 0 {
        return Vec::new();
    }
    let k = gaussian_kernel(sigma);
    let h = (k.len() / 2) as i64;
    (0..n)
        .map(|j| {
            k.iter()
                .enumerate()
                .map(|(o, w)| w * radii[(j + o as i64 - h).rem_euclid(n) as usize])
                .sum()
        })
        .collect()
}

/// Gaussian smoothing of each ray's radius along the ring sequence, with
/// replicated ends. Boundary points are recomputed.
pub fn smooth_radii_longitudinal(rings: &[CrossSectionRing], sigma: f64) -> Vec<CrossSectionRing> {
    let n = rings.len() as i64;
    let k = gaussian_kernel(sigma);
    let h = (k.len() / 2) as i64;
    (0..n)
        .map(|i| {
            let mut r = rings[i as usize].clone();
            for j in 0..r.radii.len() {
                r.radii[j] = k
                    .iter()
                    .enumerate()
                    .map(|(o, w)| w * rings[(i + o as i64 - h).clamp(0, n - 1) as usize].radii[j])
                    .sum();
            }
            r.update_points();
            r
        })
        .collect()
}

/// Shortens rays so that, for every pair of rings `i < k`, ring `k` lies
/// strictly ahead of ring `i`'s plane and ring `i` strictly behind ring
/// `k`'s. Strips between consecutive rings then occupy disjoint slabs, so
/// the stitched surface cannot fold through itself on tight bends. Pairs
/// whose centers do not advance along both tangents, or lie farther apart
/// than their two largest radii combined, are skipped, as are rays that meet
/// the other ring's plane outside its largest radius. Returns the number of
/// radii changed.
pub fn unfold_rings(rings: &mut [CrossSectionRing], r_min: f64) -> usize {
    let n = rings.len();
    let mut changed = 0;
    for i in 0..n {
        for k in i + 1..n {
            let step = rings[k].center - rings[i].center;
            let reach = max_radius(&rings[i]) + max_radius(&rings[k]);
            if step.norm() > reach {
                continue;
            }
            let ahead_i = step.dot(&rings[i].tangent);
            let ahead_k = step.dot(&rings[k].tangent);
            if ahead_i <= 0.0 || ahead_k <= 0.0 {
                continue;
            }
            // (ring to clamp, other ring, room, direction sign)
            let jobs = [(k, i, ahead_i, -1.0), (i, k, ahead_k, 1.0)];
            for (which, other, ahead, sign) in jobs {
                let (normal, disk_center, disk_radius) =
                    (rings[other].tangent, rings[other].center, max_radius(&rings[other]));
                let ring = &mut rings[which];
                let m = ring.radii.len();
                for j in 0..m {
                    let dir = ray_direction(&ring.u, &ring.v, j, m);
                    let toward = sign * dir.dot(&normal);
                    if toward <= 0.0 {
                        continue;
                    }
                    let hit = ahead / toward;
                    // rays crossing the plane outside the other disk cannot fold
                    if (ring.center + dir * hit - disk_center).norm() <= disk_radius {
                        let cap = (0.9 * hit).max(r_min);
                        if ring.radii[j] > cap {
                            ring.radii[j] = cap;
                            changed += 1;
                        }
                    }
                }
            }
        }
    }
    for r in rings.iter_mut() {
        r.update_points();
    }
    changed
}

fn max_radius(ring: &CrossSectionRing) -> f64 {
    ring.radii.iter().cloned().fold(0.0, f64::max)
}

/// Lowers radii so that each ray's radius changes by at most `max_slope`
/// times the center-to-center distance between consecutive rings. Only
/// shrinks, so the ordering established by [`unfold_rings`] is kept.
pub fn limit_radius_slope(rings: &mut [CrossSectionRing], max_slope: f64) {
    let n = rings.len();
    for i in 1..n {
        let d = (rings[i].center - rings[i - 1].center).norm() * max_slope;
        for j in 0..rings[i].radii.len() {
            let cap = rings[i - 1].radii[j] + d;
            if rings[i].radii[j] > cap {
                rings[i].radii[j] = cap;
            }
        }
    }
    for i in (0..n.saturating_sub(1)).rev() {
        let d = (rings[i + 1].center - rings[i].center).norm() * max_slope;
        for j in 0..rings[i].radii.len() {
            let cap = rings[i + 1].radii[j] + d;
            if rings[i].radii[j] > cap {
                rings[i].radii[j] = cap;
            }
        }
    }
    for r in rings.iter_mut() {
        r.update_points();
    }
}

/// Connects consecutive rings by two triangles per ray pair, with optional
/// fan caps at the end centers. Faces are oriented away from the centerline.
pub fn stitch_rings(rings: &[CrossSectionRing], cap_ends: bool) -> Result<TriMesh> {
    if rings.len() < 2 {
        return Err(Error::Reconstruct(format!("need at least 2 rings, got {}", rings.len())));
    }
    let m = rings[0].points.len();
    if m < 3 || rings.iter().any(|r| r.points.len() != m) {
        return Err(Error::Reconstruct("rings must share a ray count of at least 3".into()));
    }
    let n = rings.len();
    let mut vertices: Vec<Vec3> = rings.iter().flat_map(|r| r.points.iter().copied()).collect();
    let mut faces = Vec::with_capacity(2 * m * n);
    for i in 0..n - 1 {
        for j in 0..m {
            let a = i * m + j;
            let b = i * m + (j + 1) % m;
            let c = (i + 1) * m + (j + 1) % m;
            let d = (i + 1) * m + j;
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    if cap_ends {
        let c0 = vertices.len();
        vertices.push(rings[0].center);
        vertices.push(rings[n - 1].center);
        let last = (n - 1) * m;
        for j in 0..m {
            faces.push([c0, (j + 1) % m, j]);
        }
        for j in 0..m {
            faces.push([c0 + 1, last + j, last + (j + 1) % m]);
        }
    }
    let progress: f64 = rings.windows(2).map(|w| w[0].tangent.dot(&(w[1].center - w[0].center))).sum();
    let mesh = TriMesh::new(vertices, faces)?;
    Ok(if progress < 0.0 { mesh.flipped() } else { mesh })
}

/// Rings for every centerline sample; `None` marks an invalid ring.
pub fn cast_rings(cl: &BranchCenterline, mask: &VoxelVolume, cfg: &ReconstructConfig) -> Vec<Option<CrossSectionRing>> {
    cl.samples
        .par_iter()
        .map(|s| {
            cast_rays(&s.position, &s.u, &s.v, mask, cfg).map(|radii| {
                CrossSectionRing::new(s.position, s.tangent, s.u, s.v, smooth_radii_angular(&radii, cfg.sigma_angular))
            })
        })
        .collect()
}

/// Ray casting, angular then longitudinal smoothing, fold removal and capped
/// stitching.
/// Invalid rings (center outside the mask) are dropped and bridged.
pub fn reconstruct_branch(cl: &BranchCenterline, mask: &VoxelVolume, cfg: &ReconstructConfig) -> Result<TriMesh> {
    cfg.validate()?;
    if cl.len() < 2 {
        return Err(Error::Reconstruct(format!("branch too short: {} samples", cl.len())));
    }
    let cast = cast_rings(cl, mask, cfg);
    let invalid = cast.iter().filter(|r| r.is_none()).count();
    if invalid as f64 > cfg.max_invalid_fraction * cast.len() as f64 {
        return Err(Error::Reconstruct(format!("{invalid} of {} rings have centers outside the mask", cast.len())));
    }
    if invalid > 0 {
        log::warn!("reconstruct: dropped {invalid} of {} rings outside the mask", cast.len());
    }
    let rings: Vec<CrossSectionRing> = cast.into_iter().flatten().collect();
    if rings.len() < 2 {
        return Err(Error::Reconstruct("fewer than 2 valid rings".into()));
    }
    let mut rings = smooth_radii_longitudinal(&rings, cfg.sigma_longitudinal);
    let clamped = unfold_rings(&mut rings, cfg.r_min);
    if clamped > 0 {
        log::debug!("reconstruct: shortened {clamped} rays to avoid ring folds");
        limit_radius_slope(&mut rings, MAX_RADIUS_SLOPE);
    }
    stitch_rings(&rings, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::centerline::centerline_from_points;
    use crate::mesh::integrity_report;
    use crate::volume::VolumeKind;

    /// Mask of `inside` on a grid at `spacing` covering `[lo, hi]`.
    fn mask_of(lo: Vec3, hi: Vec3, spacing: f64, inside: impl Fn(&Vec3) -> bool) -> VoxelVolume {
        let dims = [0, 1, 2].map(|a| ((hi[a] - lo[a]) / spacing).ceil() as usize + 1);
        let g = VoxelVolume::empty_mask(dims, [spacing; 3], [lo.x, lo.y, lo.z]).unwrap();
        let data = (0..g.len()).map(|i| if inside(&g.world_of_index(i)) { 1.0f32 } else { 0.0 }).collect();
        g.with_data(data, VolumeKind::BinaryMask).unwrap()
    }

    fn tube_mask() -> VoxelVolume {
        mask_of(Vec3::new(-4.25, -4.25, -1.0), Vec3::new(4.25, 4.25, 21.0), 0.5, |p| {
            p.x * p.x + p.y * p.y <= 4.0 && (0.0..=20.0).contains(&p.z)
        })
    }

    #[test]
    fn on_axis_rays_match_radius() {
        let m = tube_mask();
        let r = cast_rays(&Vec3::new(0.0, 0.0, 10.0), &Vec3::x(), &Vec3::y(), &m, &ReconstructConfig::default()).unwrap();
        assert_eq!(r.len(), 24);
        for x in r {
            assert!((x - 2.0).abs() <= 0.25, "{x}");
        }
    }

    #[test]
    fn off_axis_rays_match_chords() {
        let m = tube_mask();
        let c = Vec3::new(1.0, 0.0, 10.0);
        let r = cast_rays(&c, &Vec3::x(), &Vec3::y(), &m, &ReconstructConfig::default()).unwrap();
        for (j, x) in r.iter().enumerate() {
            let d = ray_direction(&Vec3::x(), &Vec3::y(), j, 24);
            // Distance from c along d to the circle of radius 2.
            let b = c.x * d.x + c.y * d.y;
            let chord = -b + (b * b - (c.x * c.x + c.y * c.y - 4.0)).sqrt();
            assert!((x - chord).abs() <= 0.25, "ray {j}: {x} vs {chord}");
        }
        let min = r.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = r.iter().cloned().fold(0.0, f64::max);
        assert!((min - 1.0).abs() <= 0.25 && (max - 3.0).abs() <= 0.25);
    }

    #[test]
    fn full_mask_caps_at_r_max() {
        let m = mask_of(Vec3::zeros(), Vec3::new(4.0, 4.0, 4.0), 1.0, |_| true);
        let r = cast_rays(&Vec3::new(2.0, 2.0, 2.0), &Vec3::x(), &Vec3::y(), &m, &ReconstructConfig::default()).unwrap();
        assert!(r.iter().all(|&x| x == 10.0));
    }

    #[test]
    fn hole_is_skipped() {
        // Slab of 8 mm with a thin empty shell at radius 1.5 mm.
        let m = mask_of(Vec3::new(-5.0, -5.0, -1.0), Vec3::new(5.0, 5.0, 1.0), 0.25, |p| {
            let r = (p.x * p.x + p.y * p.y).sqrt();
            r <= 4.0 && !(1.45..1.55).contains(&r)
        });
        let r = cast_rays(&Vec3::zeros(), &Vec3::x(), &Vec3::y(), &m, &ReconstructConfig::default()).unwrap();
        assert!(r.iter().all(|&x| (x - 4.0).abs() < 0.3), "{r:?}");
        assert!(cast_rays(&Vec3::new(4.5, 4.5, 0.0), &Vec3::x(), &Vec3::y(), &m, &ReconstructConfig::default()).is_none());
    }

    fn conv_circular_oracle(x: &[f64], sigma: f64) -> Vec<f64> {
        let h = (3.0 * sigma).ceil() as i64;
        let n = x.len() as i64;
        let w: Vec<f64> = (-h..=h).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
        let s: f64 = w.iter().sum();
        (0..n)
            .map(|i| (-h..=h).map(|k| w[(k + h) as usize] / s * x[((i - k) % n + n) as usize % n as usize]).sum())
            .collect()
    }

    #[test]
    fn angular_smoothing() {
        assert!(smooth_radii_angular(&[2.0; 24], 1.0).iter().all(|&x| (x - 2.0).abs() < 1e-15));
        let mut imp = vec![2.0; 24];
        imp[5] = 3.0;
        let out = smooth_radii_angular(&imp, 1.0);
        let k0 = gaussian_kernel(1.0)[3];
        assert!((out[5] - (2.0 + k0)).abs() < 1e-12);
        for (a, b) in out.iter().zip(conv_circular_oracle(&imp, 1.0)) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(smooth_radii_angular(&imp, 0.0), imp);
        let mean_in: f64 = imp.iter().sum::<f64>() / 24.0;
        let mean_out: f64 = out.iter().sum::<f64>() / 24.0;
        assert!((mean_in - mean_out).abs() < 1e-9);
    }

    fn ring_z(z: f64, r: f64) -> CrossSectionRing {
        CrossSectionRing::new(Vec3::new(0.0, 0.0, z), Vec3::z(), Vec3::x(), Vec3::y(), vec![r; 24])
    }

    #[test]
    fn longitudinal_smoothing() {
        let same: Vec<_> = (0..5).map(|i| ring_z(i as f64, 2.0)).collect();
        for (a, b) in smooth_radii_longitudinal(&same, 2.0).iter().zip(&same) {
            assert!(a.radii.iter().zip(&b.radii).all(|(x, y)| (x - y).abs() < 1e-12));
        }
        let one = vec![ring_z(0.0, 3.0)];
        assert!((smooth_radii_longitudinal(&one, 2.0)[0].radii[3] - 3.0).abs() < 1e-12);
        let step: Vec<_> = (0..20).map(|i| ring_z(i as f64, if i < 10 { 2.0 } else { 3.0 })).collect();
        let out = smooth_radii_longitudinal(&step, 2.0);
        // Replicated-end convolution oracle.
        let x: Vec<f64> = step.iter().map(|r| r.radii[0]).collect();
        let w: Vec<f64> = (-6i64..=6).map(|k| (-(k * k) as f64 / 8.0).exp()).collect();
        let s: f64 = w.iter().sum();
        for i in 0..20i64 {
            let o: f64 = (-6i64..=6).map(|k| w[(k + 6) as usize] / s * x[(i + k).clamp(0, 19) as usize]).sum();
            assert!((out[i as usize].radii[7] - o).abs() < 1e-12);
        }
        for wdw in out.windows(2) {
            assert!(wdw[1].radii[0] >= wdw[0].radii[0]);
        }
        let p = &out[12];
        assert!((p.points[0] - (p.center + Vec3::x() * p.radii[0])).norm() < 1e-9);
    }

    #[test]
    fn stitch_counts_and_orientation() {
        let two = [ring_z(0.0, 1.0), ring_z(1.0, 1.0)];
        let m = stitch_rings(&two, true).unwrap();
        assert_eq!(m.faces.len(), 96);
        let r = integrity_report(&m);
        assert!(r.watertight && r.orientation_consistent);
        assert_eq!(r.euler, 2);
        assert!(m.signed_volume() > 0.0);

        let many: Vec<_> = (0..51).map(|i| ring_z(0.2 * i as f64, 1.0)).collect();
        let m = stitch_rings(&many, true).unwrap();
        assert_eq!(m.faces.len(), 2448);

        let rev: Vec<_> = many.iter().rev().cloned().collect();
        let mr = stitch_rings(&rev, true).unwrap();
        assert!(mr.signed_volume() > 0.0);
        assert!((mr.signed_volume() - m.signed_volume()).abs() < 1e-9);
        assert!(stitch_rings(&many[..1], true).is_err());
    }

    #[test]
    fn straight_tube_branch() {
        let m = tube_mask();
        let cl = centerline_from_points(&[Vec3::new(0.0, 0.0, 0.5), Vec3::new(0.0, 0.0, 19.5)], None, 0.2).unwrap();
        let mesh = reconstruct_branch(&cl, &m, &ReconstructConfig::default()).unwrap();
        assert!(integrity_report(&mesh).watertight);
        let side: Vec<f64> = mesh
            .vertices
            .iter()
            .filter(|p| (1.0..19.0).contains(&p.z))
            .map(|p| ((p.x * p.x + p.y * p.y).sqrt() - 2.0).abs())
            .collect();
        let mean = side.iter().sum::<f64>() / side.len() as f64;
        assert!(mean <= 0.25, "{mean}");
    }

    #[test]
    fn tip_outside_mask_is_dropped() {
        let m = tube_mask();
        let cl = centerline_from_points(&[Vec3::new(0.0, 0.0, 2.0), Vec3::new(0.0, 0.0, 23.0)], None, 0.2).unwrap();
        let mesh = reconstruct_branch(&cl, &m, &ReconstructConfig::default()).unwrap();
        assert!(integrity_report(&mesh).watertight);
        assert!(mesh.vertices.iter().all(|p| p.z <= 20.6));
        // Mostly outside: rejected.
        let cl = centerline_from_points(&[Vec3::new(0.0, 0.0, 15.0), Vec3::new(0.0, 0.0, 40.0)], None, 0.2).unwrap();
        assert!(matches!(reconstruct_branch(&cl, &m, &ReconstructConfig::default()), Err(Error::Reconstruct(_))));
    }

    #[test]
    fn arc_tube_volume() {
        // Quarter torus: bend radius 10 mm, tube radius 2 mm.
        let (rb, rt) = (10.0, 2.0);
        let half_pi = std::f64::consts::FRAC_PI_2;
        let m = mask_of(Vec3::new(-3.0, -3.0, -3.0), Vec3::new(13.0, 13.0, 3.0), 0.25, |p| {
            let ang = p.y.atan2(p.x);
            if !(0.0..=half_pi).contains(&ang) {
                return false;
            }
            let d = ((p.x * p.x + p.y * p.y).sqrt() - rb).hypot(p.z);
            d <= rt
        });
        let pts: Vec<Vec3> = (0..=40)
            .map(|k| {
                let a = half_pi * k as f64 / 40.0;
                Vec3::new(rb * a.cos(), rb * a.sin(), 0.0)
            })
            .collect();
        let cl = centerline_from_points(&pts, None, 0.2).unwrap();
        let mesh = reconstruct_branch(&cl, &m, &ReconstructConfig::default()).unwrap();
        let analytic = std::f64::consts::PI * rt * rt * rb * half_pi;
        let v = mesh.signed_volume();
        assert!((v - analytic).abs() < 0.05 * analytic, "{v} vs {analytic}");
    }

    #[test]
    fn tight_bend_is_fold_free() {
        // 90° elbow with 3 mm bend radius in a wide mask: raw rings overlap.
        let m = mask_of(Vec3::new(-6.0, -6.0, -2.0), Vec3::new(12.0, 6.0, 14.0), 0.25, |p| {
            p.y.abs() <= 4.0 && p.x >= -4.0 && p.z >= 0.0 && p.x <= 10.0 && p.z <= 12.0
        });
        let mut pts = vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 0.0, 5.0)];
        for k in 1..10 {
            let a = std::f64::consts::FRAC_PI_2 * k as f64 / 10.0;
            pts.push(Vec3::new(3.0 - 3.0 * a.cos(), 0.0, 5.0 + 3.0 * a.sin()));
        }
        pts.extend([Vec3::new(3.0, 0.0, 8.0), Vec3::new(8.0, 0.0, 8.0)]);
        let cl = centerline_from_points(&pts, None, 0.2).unwrap();
        let mesh = reconstruct_branch(&cl, &m, &ReconstructConfig::default()).unwrap();
        assert!(integrity_report(&mesh).watertight);
        let si = crate::mesh::self_intersections(&mesh);
        assert!(si.is_empty(), "{} intersecting face pairs", si.len());
    }

    #[test]
    fn unfold_caps_backward_rays() {
        // Second ring tilted 60° about y; its -x rays reach behind the first plane.
        let a = ring_z(0.0, 2.0);
        let t = Vec3::new((60f64).to_radians().sin(), 0.0, (60f64).to_radians().cos());
        let u = Vec3::y().cross(&t).normalize();
        let b = CrossSectionRing::new(Vec3::new(0.0, 0.0, 0.5), t, u, t.cross(&u), vec![2.0; 24]);
        let mut rings = vec![a, b];
        assert!(unfold_rings(&mut rings, 0.1) > 0);
        for p in &rings[1].points {
            assert!(p.z > 0.0);
        }
        for p in &rings[0].points {
            assert!((p - rings[1].center).dot(&t) < 0.0);
        }
        // Parallel rings are untouched.
        let mut straight = vec![ring_z(0.0, 2.0), ring_z(0.2, 2.0)];
        assert_eq!(unfold_rings(&mut straight, 0.1), 0);
    }

    #[test]
    fn unfold_ignores_planes_met_outside_the_disk() {
        // A nearly horizontal ring above the first: its plane cuts the first
        // ring's +y rays at 2.06 mm, but 6 mm from its own center.
        let a = ring_z(0.0, 2.0);
        let t = Vec3::new(0.0, (10f64).to_radians().cos(), (10f64).to_radians().sin());
        let u = Vec3::x();
        let b = CrossSectionRing::new(Vec3::new(0.0, 1.0, 6.0), t, u, t.cross(&u), vec![4.5; 24]);
        let mut rings = vec![a, b];
        let before = rings.clone();
        assert_eq!(unfold_rings(&mut rings, 0.1), 0);
        assert_eq!(rings, before);
    }
}
