//! Geometric transforms applied with one shared parameter set to all 16
//! panels of an instance. Labels and symbolic panels are never touched.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rpmgen::{Raster, RpmInstance, BACKGROUND};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    /// Shift along x (columns).
    Horizontal,
    /// Shift along y (rows).
    Vertical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Transform {
    HFlip,
    VFlip,
    Transpose,
    /// Counter-clockwise, in degrees.
    Rotate(f64),
    /// Splits the panel into `grid`×`grid` tiles; output tile `i` is input
    /// tile `perm[i]`.
    GridShuffle { grid: u8, perm: Vec<u8> },
    Roll { axis: Axis, offset: u16 },
}

impl Transform {
    fn rank(&self) -> u8 {
        match self {
            Transform::HFlip => 0,
            Transform::VFlip => 1,
            Transform::Transpose => 2,
            Transform::Rotate(_) => 3,
            Transform::GridShuffle { .. } => 4,
            Transform::Roll { .. } => 5,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Transform::HFlip => "hflip",
            Transform::VFlip => "vflip",
            Transform::Transpose => "transpose",
            Transform::Rotate(_) => "rotate",
            Transform::GridShuffle { .. } => "grid_shuffle",
            Transform::Roll { .. } => "roll",
        }
    }
}

/// An ordered list of transforms, at most one per kind, kept in the
/// canonical order flips, transpose, rotate, grid shuffle, roll.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct TransformSpec {
    transforms: Vec<Transform>,
}

impl TransformSpec {
    pub fn new(mut transforms: Vec<Transform>) -> Result<Self> {
        transforms.sort_by_key(Transform::rank);
        for w in transforms.windows(2) {
            if w[0].rank() == w[1].rank() {
                return Err(Error::InvalidArgument(format!("{} listed twice", w[0].name())));
            }
        }
        for t in &transforms {
            match t {
                Transform::Rotate(a) if !a.is_finite() => {
                    return Err(Error::InvalidArgument(format!("rotation angle {a}")));
                }
                Transform::GridShuffle { grid, perm } => {
                    if !matches!(grid, 2 | 3) {
                        return Err(Error::InvalidArgument(format!("grid shuffle needs 2 or 3 tiles, got {grid}")));
                    }
                    let mut sorted = perm.clone();
                    sorted.sort_unstable();
                    if sorted != (0..grid * grid).collect::<Vec<u8>>() {
                        return Err(Error::InvalidArgument(format!("{perm:?} is not a permutation of {} tiles", grid * grid)));
                    }
                }
                _ => {}
            }
        }
        Ok(Self { transforms })
    }

    pub fn single(t: Transform) -> Result<Self> {
        Self::new(vec![t])
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.transforms
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }
}

/// Sampling options.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Uniform angle in [0, 360) when true, a multiple of 90° otherwise.
    pub free_rotation: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { free_rotation: true }
    }
}

/// Draws a nonempty random subset of transform kinds with random parameters.
pub fn sample_transform<R: Rng + ?Sized>(rng: &mut R, panel_size: u16, config: &AugmentConfig) -> TransformSpec {
    loop {
        let mut ts = Vec::new();
        if rng.random_bool(0.5) {
            ts.push(Transform::HFlip);
        }
        if rng.random_bool(0.5) {
            ts.push(Transform::VFlip);
        }
        if rng.random_bool(0.5) {
            ts.push(Transform::Transpose);
        }
        if rng.random_bool(0.5) {
            let angle = if config.free_rotation {
                rng.random_range(0.0..360.0)
            } else {
                f64::from(rng.random_range(0..4u8)) * 90.0
            };
            ts.push(Transform::Rotate(angle));
        }
        if rng.random_bool(0.5) {
            let grid = if rng.random_bool(0.5) { 2 } else { 3 };
            let mut perm: Vec<u8> = (0..grid * grid).collect();
            perm.shuffle(rng);
            ts.push(Transform::GridShuffle { grid, perm });
        }
        if rng.random_bool(0.5) {
            let axis = if rng.random_bool(0.5) { Axis::Horizontal } else { Axis::Vertical };
            ts.push(Transform::Roll {
                axis,
                offset: rng.random_range(0..panel_size.max(1)),
            });
        }
        if !ts.is_empty() {
            return TransformSpec::new(ts).expect("sampled transforms are valid");
        }
    }
}

fn remap(r: &Raster, f: impl Fn(usize, usize) -> Option<(usize, usize)>) -> Raster {
    let n = usize::from(r.size());
    let mut out = Raster::filled(r.size(), BACKGROUND);
    let px = out.pixels_mut();
    for y in 0..n {
        for x in 0..n {
            if let Some((sx, sy)) = f(x, y) {
                px[y * n + x] = r.get(sx, sy);
            }
        }
    }
    out
}

fn apply_one(r: &Raster, t: &Transform) -> Raster {
    let n = usize::from(r.size());
    match t {
        Transform::HFlip => remap(r, |x, y| Some((n - 1 - x, y))),
        Transform::VFlip => remap(r, |x, y| Some((x, n - 1 - y))),
        Transform::Transpose => remap(r, |x, y| Some((y, x))),
        Transform::Rotate(deg) => {
            let c = (n as f64 - 1.0) / 2.0;
            let (s, co) = deg.to_radians().sin_cos();
            remap(r, |x, y| {
                // inverse rotation of the output pixel center; y grows downward
                let dx = x as f64 - c;
                let dy = c - y as f64;
                let sx = (co * dx + s * dy + c).round();
                let sy = (c - (-s * dx + co * dy)).round();
                let inside = sx >= 0.0 && sy >= 0.0 && sx < n as f64 && sy < n as f64;
                inside.then_some((sx as usize, sy as usize))
            })
        }
        Transform::GridShuffle { grid, perm } => {
            let g = usize::from(*grid);
            let tile = n / g;
            remap(r, |x, y| {
                if tile == 0 || x >= tile * g || y >= tile * g {
                    return Some((x, y));
                }
                let src = usize::from(perm[(y / tile) * g + x / tile]);
                Some(((src % g) * tile + x % tile, (src / g) * tile + y % tile))
            })
        }
        Transform::Roll { axis, offset } => {
            let o = usize::from(*offset) % n.max(1);
            match axis {
                Axis::Horizontal => remap(r, |x, y| Some(((x + n - o) % n, y))),
                Axis::Vertical => remap(r, |x, y| Some((x, (y + n - o) % n))),
            }
        }
    }
}

/// Applies every transform of `spec` in order to one raster.
pub fn apply_raster(r: &Raster, spec: &TransformSpec) -> Raster {
    spec.transforms.iter().fold(r.clone(), |acc, t| apply_one(&acc, t))
}

/// Transforms all 16 rasters with the same spec; everything else is copied.
pub fn apply(instance: &RpmInstance, spec: &TransformSpec) -> RpmInstance {
    RpmInstance {
        rasters: instance.rasters.iter().map(|r| apply_raster(r, spec)).collect(),
        ..instance.clone()
    }
}

/// Two independently augmented views of one instance.
pub fn make_views<R: Rng + ?Sized>(instance: &RpmInstance, rng: &mut R, config: &AugmentConfig) -> (RpmInstance, RpmInstance) {
    let size = instance.panel_size();
    let a = sample_transform(rng, size, config);
    let b = sample_transform(rng, size, config);
    (apply(instance, &a), apply(instance, &b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(n: u16) -> Raster {
        Raster::new(n, (0..usize::from(n).pow(2)).map(|i| (i % 251) as u8).collect()).unwrap()
    }

    #[test]
    fn quarter_turns_compose() {
        let r = ramp(7);
        let ninety = TransformSpec::single(Transform::Rotate(90.0)).unwrap();
        let four = (0..4).fold(r.clone(), |a, _| apply_raster(&a, &ninety));
        assert_eq!(four, r);
        // 90° counter-clockwise equals transpose followed by a vertical flip
        let tv = TransformSpec::new(vec![Transform::Transpose]).unwrap();
        let v = TransformSpec::single(Transform::VFlip).unwrap();
        assert_eq!(apply_raster(&r, &ninety), apply_raster(&apply_raster(&r, &tv), &v));
    }

    #[test]
    fn canonical_order_and_validation() {
        let s = TransformSpec::new(vec![
            Transform::Roll {
                axis: Axis::Vertical,
                offset: 1,
            },
            Transform::HFlip,
        ])
        .unwrap();
        assert_eq!(s.transforms()[0], Transform::HFlip);
        assert!(TransformSpec::new(vec![Transform::HFlip, Transform::HFlip]).is_err());
        assert!(TransformSpec::single(Transform::GridShuffle {
            grid: 2,
            perm: vec![0, 0, 1, 2]
        })
        .is_err());
    }

    #[test]
    fn sampling_is_reproducible() {
        let cfg = AugmentConfig::default();
        let a = sample_transform(&mut ChaCha8Rng::seed_from_u64(1), 28, &cfg);
        let b = sample_transform(&mut ChaCha8Rng::seed_from_u64(1), 28, &cfg);
        assert_eq!(a, b);
    }

    #[test]
    fn grid_shuffle_moves_tiles() {
        let r = ramp(4);
        let s = TransformSpec::single(Transform::GridShuffle {
            grid: 2,
            perm: vec![3, 2, 1, 0],
        })
        .unwrap();
        let out = apply_raster(&r, &s);
        assert_eq!(out.get(0, 0), r.get(2, 2));
        assert_eq!(out.get(3, 1), r.get(1, 3));
    }
}
