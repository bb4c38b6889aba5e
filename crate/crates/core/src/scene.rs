//! Procedural target scenes: per-pixel depth and reflectivity maps.
//!
//! Each [`SceneClassSpec`] names a shape family plus parameter ranges; a
//! variant seed picks one concrete shape from those ranges. Geometry is
//! rasterized on pixel centers in normalized frame coordinates `u, v` in
//! `(-1, 1)`, so the same spec renders consistently at any resolution.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binio::{read_file, write_atomic, Decoder, Encoder};
use crate::error::{Error, Result};
use crate::seed::mix;

/// Largest depth accepted by the generator: `c * T_rep / 2` at a 20 MHz
/// repetition rate.
pub const MAX_UNAMBIGUOUS_DEPTH_M: f64 = 7.5;

pub const MAP_MAGIC: &[u8; 4] = b"TSPM";
pub const MAP_VERSION: u16 = 1;
/// magic + version + width + height
pub const MAP_HEADER_LEN: usize = 4 + 2 + 4 + 4;

#[derive(Debug, Clone, PartialEq)]
pub struct DepthReflMap {
    pub width: usize,
    pub height: usize,
    /// Row-major meters, 0 where there is no target.
    pub depth: Vec<f32>,
    /// Row-major, in `[0, 1]`, 0 exactly where `depth` is 0.
    pub reflectivity: Vec<f32>,
}

impl DepthReflMap {
    pub fn target_pixels(&self) -> usize {
        self.reflectivity.iter().filter(|&&r| r > 0.0).count()
    }

    pub fn get(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.depth[i], self.reflectivity[i])
    }

    /// Checks the structural invariants; returns the index of the first
    /// offending pixel on failure.
    pub fn validate(&self) -> std::result::Result<(), (usize, &'static str)> {
        let n = self.width * self.height;
        if self.depth.len() != n || self.reflectivity.len() != n {
            return Err((0, "grid size does not match dimensions"));
        }
        for i in 0..n {
            let (d, r) = (self.depth[i], self.reflectivity[i]);
            if !d.is_finite() || !r.is_finite() {
                return Err((i, "non-finite value"));
            }
            if !(0.0..=1.0).contains(&r) {
                return Err((i, "reflectivity outside [0, 1]"));
            }
            if d < 0.0 || d as f64 >= MAX_UNAMBIGUOUS_DEPTH_M {
                return Err((i, "depth outside unambiguous range"));
            }
            if (d == 0.0) != (r == 0.0) {
                return Err((i, "background pixel must have zero depth and reflectivity"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeFamily {
    /// Full-frame plane, optionally tilted.
    Plane,
    Disk,
    /// Square front face with one receding side face.
    Box,
    Sphere,
    /// Vertical axis, curved face toward the sensor.
    Cylinder,
    /// Apex toward the sensor.
    Cone,
    Pyramid,
    /// Vertical bar in front, horizontal bar recessed by `relief`.
    Cross,
    /// Four steps across the frame, `relief` deep in total.
    Staircase,
    Ring,
    /// Disk in front of a full-frame backplane.
    DiskOnWall,
    LShape,
    /// V-groove opening toward the sensor.
    Wedge,
    /// Sphere in front of a full-frame backplane.
    SphereOnWall,
}

impl ShapeFamily {
    pub const ALL: [ShapeFamily; 14] = [
        ShapeFamily::Plane,
        ShapeFamily::Disk,
        ShapeFamily::Box,
        ShapeFamily::Sphere,
        ShapeFamily::Cylinder,
        ShapeFamily::Cone,
        ShapeFamily::Pyramid,
        ShapeFamily::Cross,
        ShapeFamily::Staircase,
        ShapeFamily::Ring,
        ShapeFamily::DiskOnWall,
        ShapeFamily::LShape,
        ShapeFamily::Wedge,
        ShapeFamily::SphereOnWall,
    ];
}

/// Closed interval `[lo, hi]`; `lo == hi` pins the parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRange {
    pub lo: f64,
    pub hi: f64,
}

impl ParamRange {
    pub const fn fixed(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn is_valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi
    }

    fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.is_point() {
            self.lo
        } else {
            self.lo + (self.hi - self.lo) * rng.random::<f64>()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", deny_unknown_fields)]
pub enum ReflectivityMode {
    /// Target pixels 1, background 0.
    #[default]
    Binary,
    /// Target pixels share one albedo drawn per variant.
    Continuous { albedo: ParamRange },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneClassSpec {
    pub class_id: u32,
    pub family: ShapeFamily,
    /// Object scale as a fraction of the half frame, in `(0, 1]`.
    pub size: ParamRange,
    /// Reference (nearest-face) depth in meters.
    pub depth: ParamRange,
    /// Extra depth added linearly from the left to the right column, meters.
    #[serde(default = "zero_range")]
    pub tilt: ParamRange,
    /// Depth extent of the 3D structure (sphere radius, step height, ...), meters.
    #[serde(default = "zero_range")]
    pub relief: ParamRange,
    #[serde(default)]
    pub reflectivity: ReflectivityMode,
}

fn zero_range() -> ParamRange {
    ParamRange::fixed(0.0)
}

impl SceneClassSpec {
    pub fn new(class_id: u32, family: ShapeFamily, size: ParamRange, depth: ParamRange) -> Self {
        Self {
            class_id,
            family,
            size,
            depth,
            tilt: zero_range(),
            relief: zero_range(),
            reflectivity: ReflectivityMode::Binary,
        }
    }

    pub fn with_tilt(mut self, tilt: ParamRange) -> Self {
        self.tilt = tilt;
        self
    }

    pub fn with_relief(mut self, relief: ParamRange) -> Self {
        self.relief = relief;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.class_id;
        for (name, r) in [
            ("size", self.size),
            ("depth", self.depth),
            ("tilt", self.tilt),
            ("relief", self.relief),
        ] {
            if !r.is_valid() {
                return Err(Error::Config(format!(
                    "class {c}: empty or non-finite {name} range [{}, {}]",
                    r.lo, r.hi
                )));
            }
        }
        if self.size.lo <= 0.0 || self.size.hi > 1.0 {
            return Err(Error::Config(format!("class {c}: size must lie in (0, 1]")));
        }
        if self.depth.lo <= 0.0 {
            return Err(Error::Config(format!("class {c}: depth must be positive")));
        }
        if self.relief.lo < 0.0 {
            return Err(Error::Config(format!("class {c}: relief must be non-negative")));
        }
        let nearest = self.depth.lo + self.tilt.lo.min(0.0);
        let farthest = self.depth.hi + self.tilt.hi.max(0.0) + self.relief.hi;
        if nearest <= 0.0 || farthest >= MAX_UNAMBIGUOUS_DEPTH_M {
            return Err(Error::Config(format!(
                "class {c}: depths span ({nearest}, {farthest}) m, outside (0, {MAX_UNAMBIGUOUS_DEPTH_M}) m"
            )));
        }
        if let ReflectivityMode::Continuous { albedo } = self.reflectivity {
            if !albedo.is_valid() || albedo.lo <= 0.0 || albedo.hi > 1.0 {
                return Err(Error::Config(format!("class {c}: albedo must lie in (0, 1]")));
            }
        }
        Ok(())
    }
}

/// One concrete draw from a spec's ranges.
#[derive(Debug, Clone, Copy)]
struct Shape {
    family: ShapeFamily,
    size: f64,
    depth: f64,
    tilt: f64,
    relief: f64,
    albedo: f64,
}

impl Shape {
    /// Depth of the surface at normalized frame coordinates, or `None` for
    /// background. `col_frac` runs 0..=1 from the left to the right column.
    fn surface(&self, u: f64, v: f64, col_frac: f64) -> Option<f64> {
        let r = self.size;
        let rho = (u * u + v * v).sqrt();
        let base = self.depth + self.tilt * col_frac;
        let rel = self.relief;
        let dome = |t: f64| rel * (1.0 - (1.0 - t * t).max(0.0).sqrt());
        match self.family {
            ShapeFamily::Plane => Some(base),
            ShapeFamily::Disk => (rho <= r).then_some(base),
            ShapeFamily::Box => {
                // front face on the left 2/3 of the square, side face on the rest
                if u.abs() > r || v.abs() > r {
                    return None;
                }
                let split = r / 3.0;
                if u <= split {
                    Some(base)
                } else {
                    Some(base + rel * (u - split) / (r - split))
                }
            }
            ShapeFamily::Sphere => (rho <= r).then(|| base + dome(rho / r)),
            ShapeFamily::Cylinder => {
                (u.abs() <= r && v.abs() <= 0.9).then(|| base + dome(u / r))
            }
            ShapeFamily::Cone => (rho <= r).then(|| base + rel * rho / r),
            ShapeFamily::Pyramid => {
                let m = u.abs().max(v.abs());
                (m <= r).then(|| base + rel * m / r)
            }
            ShapeFamily::Cross => {
                let w = r / 3.0;
                if u.abs() <= w && v.abs() <= r {
                    Some(base)
                } else if v.abs() <= w && u.abs() <= r {
                    Some(base + rel)
                } else {
                    None
                }
            }
            ShapeFamily::Staircase => {
                if u.abs() > r || v.abs() > r {
                    return None;
                }
                let step = (((u + r) / (2.0 * r)) * 4.0).floor().clamp(0.0, 3.0);
                Some(base + rel * step / 3.0)
            }
            ShapeFamily::Ring => (rho <= r && rho >= 0.5 * r).then_some(base),
            ShapeFamily::DiskOnWall => Some(if rho <= r { base } else { base + rel }),
            ShapeFamily::LShape => {
                let w = r / 2.5;
                if u.abs() > r || v.abs() > r {
                    None
                } else if u <= -r + w {
                    Some(base)
                } else if v >= r - w {
                    Some(base + 0.5 * rel)
                } else {
                    None
                }
            }
            ShapeFamily::Wedge => {
                (u.abs() <= r && v.abs() <= r).then(|| base + rel * (1.0 - u.abs() / r))
            }
            ShapeFamily::SphereOnWall => Some(if rho <= r {
                base + dome(rho / r)
            } else {
                base + rel
            }),
        }
    }
}

/// Renders one variant of a class. Pure function of its arguments.
pub fn gen_scene(
    spec: &SceneClassSpec,
    variant_seed: u64,
    width: usize,
    height: usize,
) -> Result<DepthReflMap> {
    if width < 8 || height < 8 {
        return Err(Error::Config(format!(
            "scene must be at least 8x8, got {width}x{height}"
        )));
    }
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(variant_seed ^ mix(spec.class_id as u64)));
    let albedo = match spec.reflectivity {
        ReflectivityMode::Binary => 1.0,
        ReflectivityMode::Continuous { albedo } => albedo.sample(&mut rng),
    };
    let shape = Shape {
        family: spec.family,
        size: spec.size.sample(&mut rng),
        depth: spec.depth.sample(&mut rng),
        tilt: spec.tilt.sample(&mut rng),
        relief: spec.relief.sample(&mut rng),
        albedo,
    };

    let n = width * height;
    let mut depth = vec![0f32; n];
    let mut refl = vec![0f32; n];
    for y in 0..height {
        let v = (y as f64 + 0.5) / height as f64 * 2.0 - 1.0;
        for x in 0..width {
            let u = (x as f64 + 0.5) / width as f64 * 2.0 - 1.0;
            let col_frac = x as f64 / (width - 1) as f64;
            if let Some(d) = shape.surface(u, v, col_frac) {
                depth[y * width + x] = d as f32;
                refl[y * width + x] = shape.albedo as f32;
            }
        }
    }
    if refl.iter().all(|&r| r == 0.0) {
        // shape smaller than a pixel: keep the pixel nearest the frame center
        let (x, y) = (width / 2, height / 2);
        let col_frac = x as f64 / (width - 1) as f64;
        depth[y * width + x] = (shape.depth + shape.tilt * col_frac) as f32;
        refl[y * width + x] = shape.albedo as f32;
    }
    Ok(DepthReflMap {
        width,
        height,
        depth,
        reflectivity: refl,
    })
}

pub fn encode_map(map: &DepthReflMap) -> Vec<u8> {
    let n = map.width * map.height;
    let mut e = Encoder::with_capacity(MAP_HEADER_LEN + 8 * n);
    e.bytes(MAP_MAGIC);
    e.u16(MAP_VERSION);
    e.u32(map.width as u32);
    e.u32(map.height as u32);
    for &d in &map.depth {
        e.f32(d);
    }
    for &r in &map.reflectivity {
        e.f32(r);
    }
    e.into_inner()
}

pub fn decode_map(bytes: &[u8]) -> Result<DepthReflMap> {
    let mut d = Decoder::new(bytes);
    d.magic(MAP_MAGIC)?;
    d.version(MAP_VERSION)?;
    let width = d.u32("width")? as usize;
    let height = d.u32("height")? as usize;
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::format(6, "dimensions overflow"))?;
    let expected = MAP_HEADER_LEN as u64 + 8 * n as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::format(
            bytes.len().min(expected as usize) as u64,
            format!("payload length {} does not match {width}x{height} grids ({expected} bytes)", bytes.len()),
        ));
    }
    let depth = (0..n).map(|_| d.f32("depth")).collect::<Result<Vec<_>>>()?;
    let reflectivity = (0..n)
        .map(|_| d.f32("reflectivity"))
        .collect::<Result<Vec<_>>>()?;
    d.finish()?;
    let map = DepthReflMap {
        width,
        height,
        depth,
        reflectivity,
    };
    if let Err((i, why)) = map.validate() {
        return Err(Error::format((MAP_HEADER_LEN + 4 * i) as u64, why));
    }
    Ok(map)
}

pub fn save_map(map: &DepthReflMap, path: &Path) -> Result<()> {
    write_atomic(path, &encode_map(map))
}

pub fn load_map(path: &Path) -> Result<DepthReflMap> {
    decode_map(&read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plane(depth: f64) -> SceneClassSpec {
        SceneClassSpec::new(0, ShapeFamily::Plane, ParamRange::fixed(1.0), ParamRange::fixed(depth))
    }

    #[test]
    fn full_frame_plane() {
        let m = gen_scene(&plane(1.5), 3, 8, 8).unwrap();
        assert!(m.depth.iter().all(|&d| d == 1.5f32));
        assert!(m.reflectivity.iter().all(|&r| r == 1.0));
    }

    #[test]
    fn deterministic() {
        for fam in ShapeFamily::ALL {
            let spec = SceneClassSpec::new(4, fam, ParamRange::new(0.3, 0.8), ParamRange::new(0.1, 0.2))
                .with_relief(ParamRange::new(0.01, 0.05))
                .with_tilt(ParamRange::new(-0.02, 0.02));
            let a = gen_scene(&spec, 99, 16, 12).unwrap();
            let b = gen_scene(&spec, 99, 16, 12).unwrap();
            assert_eq!(a, b, "{fam:?}");
            a.validate().unwrap();
            assert!(a.target_pixels() >= 1);
        }
    }

    #[test]
    fn tilted_plane_matches_plane_equation() {
        let spec = plane(2.0).with_tilt(ParamRange::fixed(0.5));
        let m = gen_scene(&spec, 0, 16, 16).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                // plane through (col 0, 2.0 m) and (col 15, 2.5 m)
                let (near, far) = (2.0f64, 2.5f64);
                let expect = near + (far - near) * (x as f64) / 15.0;
                let (d, r) = m.get(x, y);
                assert!((d as f64 - expect).abs() < 1e-6, "({x},{y}) {d} vs {expect}");
                assert_eq!(r, 1.0);
            }
        }
        assert_eq!(m.get(0, 0).0, 2.0);
        assert_eq!(m.get(15, 7).0, 2.5);
    }

    #[test]
    fn empty_range_rejected() {
        let spec = SceneClassSpec::new(1, ShapeFamily::Disk, ParamRange::new(0.6, 0.4), ParamRange::fixed(1.0));
        assert!(matches!(gen_scene(&spec, 0, 8, 8), Err(Error::Config(_))));
        let spec = plane(1.0).with_relief(ParamRange::new(f64::NAN, 1.0));
        assert!(matches!(gen_scene(&spec, 0, 8, 8), Err(Error::Config(_))));
        assert!(matches!(gen_scene(&plane(1.0), 0, 4, 8), Err(Error::Config(_))));
    }

    #[test]
    fn out_of_range_depth_rejected() {
        assert!(gen_scene(&plane(8.0), 0, 8, 8).is_err());
    }

    #[test]
    fn tiny_shape_keeps_one_pixel() {
        let spec = SceneClassSpec::new(2, ShapeFamily::Ring, ParamRange::fixed(0.01), ParamRange::fixed(0.2));
        let m = gen_scene(&spec, 0, 8, 8).unwrap();
        assert_eq!(m.target_pixels(), 1);
    }

    #[test]
    fn distinct_seeds_distinct_maps() {
        let spec = SceneClassSpec::new(7, ShapeFamily::SphereOnWall, ParamRange::new(0.3, 0.9), ParamRange::new(0.1, 0.2))
            .with_relief(ParamRange::new(0.02, 0.06));
        let mut seen = std::collections::HashSet::new();
        for s in 0..1000u64 {
            let m = gen_scene(&spec, s, 16, 16).unwrap();
            assert!(seen.insert(encode_map(&m)), "collision at seed {s}");
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SceneClassSpec::new(1, ShapeFamily::Staircase, ParamRange::new(0.5, 0.9), ParamRange::new(0.1, 0.2))
            .with_relief(ParamRange::fixed(0.03));
        let m = gen_scene(&spec, 5, 20, 10).unwrap();
        let p = dir.path().join("m.tspm");
        save_map(&m, &p).unwrap();
        assert_eq!(load_map(&p).unwrap(), m);
    }

    #[test]
    fn wrong_magic_is_format_error() {
        let m = gen_scene(&plane(1.0), 0, 8, 8).unwrap();
        let mut b = encode_map(&m);
        b[0] = b'X';
        assert!(matches!(decode_map(&b), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn truncated_payload_is_format_error() {
        let m = gen_scene(&plane(1.0), 0, 8, 8).unwrap();
        let b = encode_map(&m);
        match decode_map(&b[..b.len() - 3]) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, b.len() as u64 - 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn file_size_single_target_pixel() {
        let spec = SceneClassSpec::new(2, ShapeFamily::Disk, ParamRange::fixed(0.001), ParamRange::fixed(0.2));
        let (w, h) = (9usize, 13usize);
        let m = gen_scene(&spec, 0, w, h).unwrap();
        assert_eq!(m.target_pixels(), 1);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("one.tspm");
        save_map(&m, &p).unwrap();
        let size = std::fs::metadata(&p).unwrap().len();
        // "TSPM" + u16 + u32 + u32, then two f32 grids
        assert_eq!(size, (4 + 2 + 4 + 4 + 2 * w * h * 4) as u64);
    }

    proptest! {
        #[test]
        fn binary_reflectivity_and_background_agree(
            fam in 0usize..14, seed in any::<u64>(), w in 8usize..24, h in 8usize..24
        ) {
            let spec = SceneClassSpec::new(3, ShapeFamily::ALL[fam], ParamRange::new(0.2, 1.0), ParamRange::new(0.05, 0.3))
                .with_relief(ParamRange::new(0.0, 0.05))
                .with_tilt(ParamRange::new(-0.03, 0.03));
            let m = gen_scene(&spec, seed, w, h).unwrap();
            for i in 0..w * h {
                prop_assert!(m.reflectivity[i] == 0.0 || m.reflectivity[i] == 1.0);
                prop_assert_eq!(m.depth[i] == 0.0, m.reflectivity[i] == 0.0);
            }
            prop_assert_eq!(decode_map(&encode_map(&m)).unwrap(), m);
        }
    }
}
