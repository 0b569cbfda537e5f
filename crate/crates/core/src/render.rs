//! Quadrature of the volume rendering integral along fisheye rays.
//!
//! `[t_n, t_f]` is split into `n` equal bins of width `delta`. Each bin is
//! sampled once (at its midpoint, or uniformly inside it when jittered) and
//! treated as a homogeneous slab: `alpha_i = 1 - exp(-sigma_i delta)`,
//! `T_i = prod_{j<i} (1 - alpha_j)`, `C = sum T_i alpha_i c_i + T_n bg`.

use std::path::Path;
use std::time::{Duration, Instant};

use image::{GrayImage, ImageBuffer, Luma, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::camera::{Camera, Ray};
use crate::field::RadianceField;
use crate::rig::RenderRig;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid render options: {0}")]
    InvalidOptions(String),
    #[error("failed to write {path}: {source}")]
    Image {
        path: String,
        #[source]
        source: image::ImageError,
    },
}

/// Integration interval along each ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DepthRange {
    /// Clip every ray against the field's bounding box; rays that miss it are
    /// not integrated.
    Auto,
    Explicit { near: f64, far: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOptions {
    pub n_samples: usize,
    pub depth: DepthRange,
    pub background: [f64; 3],
    pub mask_threshold: f64,
    /// Stratified jitter inside each bin; `None` samples bin midpoints.
    pub jitter_seed: Option<u64>,
    /// `k x k` sub-pixel samples per pixel.
    pub supersample: u32,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            n_samples: 128,
            depth: DepthRange::Auto,
            background: [0.0; 3],
            mask_threshold: 0.5,
            jitter_seed: None,
            supersample: 1,
        }
    }
}

impl RenderOptions {
    pub fn validate(&self) -> Result<(), RenderError> {
        let bad = |msg: String| Err(RenderError::InvalidOptions(msg));
        if self.n_samples == 0 {
            return bad("n_samples must be at least 1".into());
        }
        if let DepthRange::Explicit { near, far } = self.depth {
            if !(near.is_finite() && far.is_finite() && near < far) {
                return bad(format!("need near < far, got [{near}, {far}]"));
            }
        }
        if !self.background.iter().all(|c| (0.0..=1.0).contains(c)) {
            return bad(format!("background {:?} outside [0, 1]", self.background));
        }
        if !(self.mask_threshold > 0.0 && self.mask_threshold < 1.0) {
            return bad(format!(
                "mask_threshold must lie in (0, 1), got {}",
                self.mask_threshold
            ));
        }
        if self.supersample == 0 {
            return bad("supersample must be at least 1".into());
        }
        Ok(())
    }
}

/// Composited color and accumulated opacity of one ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaySample {
    pub rgb: [f64; 3],
    pub alpha: f64,
}

/// Midpoint estimate of `exp(-int_{t_a}^{t_b} sigma ds)` with `n` bins.
/// An empty interval has transmittance 1.
pub fn transmittance<F>(field: &F, ray: &Ray, t_a: f64, t_b: f64, n: usize) -> f64
where
    F: RadianceField + ?Sized,
{
    if t_b.partial_cmp(&t_a) != Some(std::cmp::Ordering::Greater) {
        return 1.0;
    }
    let n = n.max(1);
    let delta = (t_b - t_a) / n as f64;
    let depth: f64 = (0..n)
        .map(|i| {
            let t = t_a + (i as f64 + 0.5) * delta;
            field.query(&ray.at(t), &ray.direction).sigma
        })
        .sum();
    (-depth * delta).exp()
}

fn integrate<F>(
    field: &F,
    ray: &Ray,
    (t0, t1): (f64, f64),
    n: usize,
    background: &[f64; 3],
    mut jitter: Option<&mut ChaCha8Rng>,
) -> RaySample
where
    F: RadianceField + ?Sized,
{
    let delta = (t1 - t0) / n as f64;
    let mut trans = 1.0;
    let mut rgb = [0.0; 3];
    for i in 0..n {
        let offset = match jitter.as_deref_mut() {
            Some(rng) => rng.random::<f64>(),
            None => 0.5,
        };
        let t = t0 + (i as f64 + offset) * delta;
        let s = field.query(&ray.at(t), &ray.direction);
        if s.sigma <= 0.0 {
            continue;
        }
        let survive = (-s.sigma * delta).exp();
        let weight = trans * (1.0 - survive);
        for k in 0..3 {
            rgb[k] += weight * s.color[k];
        }
        trans *= survive;
    }
    for k in 0..3 {
        rgb[k] += trans * background[k];
    }
    RaySample {
        rgb,
        alpha: 1.0 - trans,
    }
}

fn ray_interval<F>(field: &F, ray: &Ray, depth: DepthRange) -> Option<(f64, f64)>
where
    F: RadianceField + ?Sized,
{
    match depth {
        DepthRange::Explicit { near, far } => Some((near, far)),
        DepthRange::Auto => field.bounds()?.intersect_ray(ray),
    }
}

fn trace<F>(field: &F, ray: &Ray, opts: &RenderOptions, jitter: Option<&mut ChaCha8Rng>) -> RaySample
where
    F: RadianceField + ?Sized,
{
    match ray_interval(field, ray, opts.depth) {
        Some(interval) => integrate(field, ray, interval, opts.n_samples, &opts.background, jitter),
        None => RaySample {
            rgb: opts.background,
            alpha: 0.0,
        },
    }
}

fn jitter_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Renders a single ray. With a jitter seed, bin offsets come from stream 0 of
/// that seed.
pub fn render_ray<F>(field: &F, ray: &Ray, opts: &RenderOptions) -> RaySample
where
    F: RadianceField + ?Sized,
{
    let mut rng = opts.jitter_seed.map(|s| jitter_rng(s, 0));
    trace(field, ray, opts, rng.as_mut())
}

/// Boolean image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![false; width as usize * height as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.data[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&m| m).count()
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            Luma([if self.get(x, y) { 255 } else { 0 }])
        })
    }

    /// Any non-zero pixel is foreground.
    pub fn from_image(img: &GrayImage) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            data: img.pixels().map(|p| p.0[0] > 0).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub width: u32,
    pub height: u32,
    /// Row-major RGB triples in `[0, 1]`.
    pub rgb: Vec<f64>,
    pub alpha: Vec<f64>,
    pub mask: Mask,
    pub elapsed: Duration,
}

impl RenderOutput {
    pub fn pixel(&self, x: u32, y: u32) -> [f64; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    /// Pixel data equality, ignoring timing.
    pub fn same_pixels(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.rgb == other.rgb
            && self.alpha == other.alpha
            && self.mask == other.mask
    }

    pub fn rgb_image(&self) -> RgbImage {
        let q = |c: f64| (c.clamp(0.0, 1.0) * 255.0).round() as u8;
        RgbImage::from_fn(self.width, self.height, |x, y| {
            image::Rgb(self.pixel(x, y).map(q))
        })
    }

    pub fn alpha_image(&self) -> ImageBuffer<Luma<u16>, Vec<u16>> {
        ImageBuffer::from_fn(self.width, self.height, |x, y| {
            let a = self.alpha[y as usize * self.width as usize + x as usize];
            Luma([(a.clamp(0.0, 1.0) * 65535.0).round() as u16])
        })
    }

    pub fn save_rgb(&self, path: &Path) -> Result<(), RenderError> {
        self.rgb_image().save(path).map_err(|source| image_err(path, source))
    }

    pub fn save_mask(&self, path: &Path) -> Result<(), RenderError> {
        self.mask.to_image().save(path).map_err(|source| image_err(path, source))
    }

    pub fn save_alpha(&self, path: &Path) -> Result<(), RenderError> {
        self.alpha_image().save(path).map_err(|source| image_err(path, source))
    }
}

fn image_err(path: &Path, source: image::ImageError) -> RenderError {
    RenderError::Image {
        path: path.display().to_string(),
        source,
    }
}

/// Renders every pixel of `cam`. Pixels are distributed over the current rayon
/// pool by rows; each pixel's computation (including its jitter stream) depends
/// only on its index, so the output does not depend on the worker count.
pub fn render_image<F>(field: &F, cam: &Camera, opts: &RenderOptions) -> Result<RenderOutput, RenderError>
where
    F: RadianceField + ?Sized,
{
    opts.validate()?;
    let start = Instant::now();
    let w = cam.intrinsics.width as usize;
    let h = cam.intrinsics.height as usize;
    let k = opts.supersample as usize;
    let inv_samples = 1.0 / (k * k) as f64;
    let mut rgb = vec![0.0; 3 * w * h];
    let mut alpha = vec![0.0; w * h];

    rgb.par_chunks_mut(3 * w)
        .zip(alpha.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (rgb_row, alpha_row))| {
            for x in 0..w {
                let mut acc = [0.0; 4];
                for sub in 0..k * k {
                    let (a, b) = (sub % k, sub / k);
                    let u = x as f64 + (a as f64 + 0.5) / k as f64;
                    let v = y as f64 + (b as f64 + 0.5) / k as f64;
                    let sample = match cam.ray_for_pixel(u, v) {
                        Ok(ray) => {
                            let stream = ((y * w + x) * k * k + sub) as u64;
                            let mut rng = opts.jitter_seed.map(|s| jitter_rng(s, stream));
                            trace(field, &ray, opts, rng.as_mut())
                        }
                        Err(_) => RaySample {
                            rgb: opts.background,
                            alpha: 0.0,
                        },
                    };
                    for c in 0..3 {
                        acc[c] += sample.rgb[c];
                    }
                    acc[3] += sample.alpha;
                }
                for c in 0..3 {
                    rgb_row[3 * x + c] = acc[c] * inv_samples;
                }
                alpha_row[x] = acc[3] * inv_samples;
            }
        });

    let mask = Mask {
        width: w as u32,
        height: h as u32,
        data: alpha.iter().map(|&a| a >= opts.mask_threshold).collect(),
    };
    Ok(RenderOutput {
        width: w as u32,
        height: h as u32,
        rgb,
        alpha,
        mask,
        elapsed: start.elapsed(),
    })
}

/// Renders all rig cameras in rig order.
pub fn render_set<F>(field: &F, rig: &RenderRig, opts: &RenderOptions) -> Result<Vec<RenderOutput>, RenderError>
where
    F: RadianceField + ?Sized,
{
    rig.cameras
        .iter()
        .map(|cam| render_image(field, cam, opts))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{Extrinsics, Intrinsics, Vec3};
    use crate::field::{GaussianBlob, UniformBox, UniformSphere, Union, Vacuum, Primitive};

    fn down_ray(z: f64) -> Ray {
        Ray::new(Vec3::new(0.0, 0.0, z), Vec3::new(0.0, 0.0, -1.0))
    }

    #[test]
    fn vacuum_transmittance_is_one() {
        assert_eq!(transmittance(&Vacuum, &down_ray(2.0), 0.0, 5.0, 64), 1.0);
    }

    #[test]
    fn sphere_chord_transmittance() {
        let s = UniformSphere::new(Vec3::new(0.0, 0.0, 1.0), 0.3, 2.0, [1.0; 3]).unwrap();
        let t = transmittance(&s, &down_ray(2.0), 0.5, 1.5, 1024);
        assert!((t - (-1.2f64).exp()).abs() < 1e-3);
        let miss = Ray::new(Vec3::new(1.0, 0.0, 2.0), Vec3::new(0.0, 0.0, -1.0));
        assert_eq!(transmittance(&s, &miss, 0.0, 3.0, 256), 1.0);
    }

    #[test]
    fn vacuum_ray_shows_background() {
        let opts = RenderOptions {
            background: [0.2, 0.4, 0.6],
            depth: DepthRange::Explicit { near: 0.0, far: 3.0 },
            ..Default::default()
        };
        let s = render_ray(&Vacuum, &down_ray(2.0), &opts);
        assert_eq!(s.rgb, [0.2, 0.4, 0.6]);
        assert_eq!(s.alpha, 0.0);
        let auto = RenderOptions {
            depth: DepthRange::Auto,
            ..opts
        };
        assert_eq!(render_ray(&Vacuum, &down_ray(2.0), &auto).rgb, [0.2, 0.4, 0.6]);
    }

    #[test]
    fn emissive_slab_closed_form() {
        let c0 = [0.9, 0.5, 0.1];
        let (sigma, len) = (3.0, 0.4);
        let slab = UniformBox::new(Vec3::new(-1.0, -1.0, 0.3), Vec3::new(1.0, 1.0, 0.3 + len), sigma, c0)
            .unwrap();
        let opts = RenderOptions {
            n_samples: 1024,
            ..Default::default()
        };
        let s = render_ray(&slab, &down_ray(2.0), &opts);
        let expected = 1.0 - (-sigma * len).exp();
        for k in 0..3 {
            assert!((s.rgb[k] - c0[k] * expected).abs() < 1e-3);
        }
        assert!((s.alpha - expected).abs() < 1e-3);
    }

    #[test]
    fn opaque_wall_occludes() {
        let wall = Primitive::Box(
            UniformBox::new(Vec3::new(-1.0, -1.0, 1.0), Vec3::new(1.0, 1.0, 1.1), 1e4, [0.0, 1.0, 0.0])
                .unwrap(),
        );
        let behind = Primitive::Sphere(
            UniformSphere::new(Vec3::new(0.0, 0.0, 0.5), 0.2, 50.0, [1.0, 0.0, 0.0]).unwrap(),
        );
        let scene = Union::new([wall, behind]);
        let opts = RenderOptions {
            n_samples: 1024,
            ..Default::default()
        };
        let s = render_ray(&scene, &down_ray(2.0), &opts);
        assert!((s.rgb[0] - 0.0).abs() < 1e-3);
        assert!((s.rgb[1] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn alpha_matches_final_transmittance() {
        let g = GaussianBlob::new(Vec3::new(0.0, 0.0, 1.0), 0.2, 4.0, [0.3, 0.6, 0.9]).unwrap();
        let opts = RenderOptions {
            n_samples: 300,
            depth: DepthRange::Explicit { near: 0.0, far: 2.0 },
            ..Default::default()
        };
        let ray = down_ray(2.0);
        let s = render_ray(&g, &ray, &opts);
        let t = transmittance(&g, &ray, 0.0, 2.0, 300);
        assert!((s.alpha - (1.0 - t)).abs() < 1e-12);
    }

    #[test]
    fn jitter_is_seeded() {
        let g = GaussianBlob::new(Vec3::new(0.0, 0.0, 1.0), 0.2, 4.0, [0.3, 0.6, 0.9]).unwrap();
        let opts = RenderOptions {
            n_samples: 16,
            jitter_seed: Some(11),
            ..Default::default()
        };
        let a = render_ray(&g, &down_ray(2.0), &opts);
        let b = render_ray(&g, &down_ray(2.0), &opts);
        assert_eq!(a, b);
        let mid = render_ray(&g, &down_ray(2.0), &RenderOptions { jitter_seed: None, ..opts.clone() });
        assert_ne!(a, mid);
    }

    #[test]
    fn options_validation() {
        let base = RenderOptions::default();
        assert!(base.validate().is_ok());
        for bad in [
            RenderOptions { n_samples: 0, ..base.clone() },
            RenderOptions { mask_threshold: 1.0, ..base.clone() },
            RenderOptions { depth: DepthRange::Explicit { near: 2.0, far: 1.0 }, ..base.clone() },
            RenderOptions { supersample: 0, ..base.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn image_outside_circle_is_background() {
        let intr = Intrinsics::full_circle(16, std::f64::consts::FRAC_PI_2).unwrap();
        let cam = Camera::new(
            intr,
            Extrinsics::from_center(crate::rig::downward_rotation(), Vec3::new(0.0, 0.0, 1.0)).unwrap(),
        )
        .unwrap();
        let fog = UniformBox::new(Vec3::repeat(-5.0), Vec3::repeat(5.0), 1.0, [1.0; 3]).unwrap();
        let opts = RenderOptions {
            n_samples: 8,
            background: [0.0, 0.0, 1.0],
            ..Default::default()
        };
        let out = render_image(&fog, &cam, &opts).unwrap();
        assert_eq!(out.alpha[0], 0.0);
        assert_eq!(out.pixel(0, 0), [0.0, 0.0, 1.0]);
        assert!(out.alpha[8 * 16 + 8] > 0.5);
        assert!(out.mask.get(8, 8));
        for (a, m) in out.alpha.iter().zip(&out.mask.data) {
            assert_eq!(*m, *a >= 0.5);
        }
    }
}
