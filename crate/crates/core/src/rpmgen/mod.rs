//! Procedural generation of Raven-style matrices.
//!
//! An instance is a 3×3 grid of symbolic panels whose bottom-right panel is
//! missing, eight candidate answers, and the abstract structure that produced
//! it. Rule semantics live in [`semantics`] and are used by [`verify`], which
//! re-derives every rule parameter from the context rows alone.

mod io;
mod raster;
mod realize;
mod semantics;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rules::{AbstractStructure, Grammar, Rule};

pub use io::{decode_dataset, encode_dataset, read_dataset, write_dataset, FORMAT_VERSION, MAGIC};
pub use raster::{color_intensity, rasterize, BACKGROUND};
pub use realize::{generate_candidates, realize_matrix, sample_structure};
pub use semantics::{rule_report, verify};

/// Default side length of a rendered panel, in pixels.
pub const DEFAULT_PANEL_SIZE: u16 = 28;

/// Largest object count used for a governed `number` attribute.
pub const MAX_COUNT: i32 = 4;

/// Number of shape types.
pub const TYPE_LEVELS: u8 = 4;
/// Number of size levels.
pub const SIZE_LEVELS: u8 = 5;
/// Number of color (intensity) levels.
pub const COLOR_LEVELS: u8 = 5;

/// Panel configuration; fixes the grammar and the slot lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Layout {
    /// Pair-style, one component on a 3×3 slot lattice.
    Center,
    /// Pair-style, one component on a 2×2 slot lattice.
    Grid2x2,
    /// Triple-style, shape objects on a 3×3 slot lattice.
    ShapeGrid,
}

impl Layout {
    pub const ALL: [Layout; 3] = [Layout::Center, Layout::Grid2x2, Layout::ShapeGrid];

    pub fn grammar(self) -> Grammar {
        match self {
            Layout::Center | Layout::Grid2x2 => Grammar::PairStyle,
            Layout::ShapeGrid => Grammar::TripleStyle,
        }
    }

    /// Side of the slot lattice.
    pub fn lattice(self) -> u8 {
        match self {
            Layout::Grid2x2 => 2,
            Layout::Center | Layout::ShapeGrid => 3,
        }
    }

    pub fn slots(self) -> u8 {
        self.lattice() * self.lattice()
    }

    pub fn code(self) -> u8 {
        match self {
            Layout::Center => 0,
            Layout::Grid2x2 => 1,
            Layout::ShapeGrid => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Layout::ALL.into_iter().find(|l| l.code() == code)
    }

    /// Rules the generator can realize for this layout, in rule-space order.
    pub fn active_rules(self) -> Vec<Rule> {
        crate::rules::enumerate_rule_space(self.grammar())
            .into_iter()
            .filter(|r| self.supports(r))
            .collect()
    }

    pub fn supports(self, rule: &Rule) -> bool {
        semantics::supports(self, rule)
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layout::Center => "center",
            Layout::Grid2x2 => "2x2grid",
            Layout::ShapeGrid => "shape-grid",
        })
    }
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "center" => Ok(Layout::Center),
            "2x2grid" | "grid2x2" | "2x2" => Ok(Layout::Grid2x2),
            "shape-grid" | "shapegrid" | "shapes" => Ok(Layout::ShapeGrid),
            _ => Err(Error::InvalidArgument(format!(
                "unknown layout `{s}` (expected center, 2x2grid or shape-grid)"
            ))),
        }
    }
}

/// Direction along which rules are applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    Row,
    Column,
}

/// One drawn object.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Object {
    /// Slot index in reading order.
    pub position: u8,
    pub kind: u8,
    pub size: u8,
    pub color: u8,
}

/// Symbolic content of one panel. Objects are kept sorted by position and
/// positions are distinct.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PanelSpec {
    lattice: u8,
    objects: Vec<Object>,
}

impl PanelSpec {
    pub fn new(lattice: u8, mut objects: Vec<Object>) -> Result<Self> {
        objects.sort();
        let slots = lattice * lattice;
        for w in objects.windows(2) {
            if w[0].position == w[1].position {
                return Err(Error::InvalidArgument(format!(
                    "two objects at slot {}",
                    w[0].position
                )));
            }
        }
        for o in &objects {
            if o.position >= slots || o.kind >= TYPE_LEVELS || o.size >= SIZE_LEVELS || o.color >= COLOR_LEVELS {
                return Err(Error::InvalidArgument(format!("object out of range: {o:?}")));
            }
        }
        Ok(Self { lattice, objects })
    }

    pub fn empty(lattice: u8) -> Self {
        Self {
            lattice,
            objects: Vec::new(),
        }
    }

    pub fn lattice(&self) -> u8 {
        self.lattice
    }

    pub fn objects(&self) -> &[Object] {
        &self.objects
    }

    pub fn count(&self) -> usize {
        self.objects.len()
    }

    /// Bitmask of occupied slots.
    pub fn position_mask(&self) -> u16 {
        self.objects.iter().fold(0, |m, o| m | 1 << o.position)
    }
}

/// 8-bit grayscale square image.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Raster {
    size: u16,
    pixels: Vec<u8>,
}

impl Raster {
    pub fn new(size: u16, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != usize::from(size) * usize::from(size) {
            return Err(Error::Shape(format!(
                "{size}x{size} raster needs {} pixels, got {}",
                usize::from(size).pow(2),
                pixels.len()
            )));
        }
        Ok(Self { size, pixels })
    }

    pub fn filled(size: u16, value: u8) -> Self {
        Self {
            size,
            pixels: vec![value; usize::from(size).pow(2)],
        }
    }

    pub fn size(&self) -> u16 {
        self.size
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * usize::from(self.size) + x]
    }
}

/// A generated matrix with its candidates.
///
/// `panels` and `rasters` hold 16 entries: the 8 context panels in reading
/// order followed by the 8 choices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RpmInstance {
    pub layout: Layout,
    pub structure: AbstractStructure,
    pub orientation: Orientation,
    pub panels: Vec<PanelSpec>,
    pub rasters: Vec<Raster>,
    /// 1-based index of the correct choice.
    pub correct_index: u8,
    pub seed: u64,
}

impl RpmInstance {
    pub fn context(&self) -> &[PanelSpec] {
        &self.panels[..8]
    }

    pub fn choices(&self) -> &[PanelSpec] {
        &self.panels[8..]
    }

    pub fn panel_size(&self) -> u16 {
        self.rasters.first().map_or(0, Raster::size)
    }

    /// The full 3×3 grid with choice `choice` (0-based) in the last slot.
    pub fn completed_grid(&self, choice: usize) -> [&PanelSpec; 9] {
        std::array::from_fn(|i| if i < 8 { &self.panels[i] } else { &self.panels[8 + choice] })
    }

    /// The 8 completed matrices as raster index lists (context 0..8, then the
    /// choice), in choice order.
    pub fn complete_candidates(&self) -> [[usize; 9]; 8] {
        std::array::from_fn(|l| std::array::from_fn(|i| if i < 8 { i } else { 8 + l }))
    }

    /// Re-renders every panel at `size`.
    pub fn render(&mut self, size: u16) {
        self.rasters = self.panels.iter().map(|p| rasterize(p, size)).collect();
    }
}

/// A set of instances sharing one layout and panel size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub layout: Layout,
    pub panel_size: u16,
    pub instances: Vec<RpmInstance>,
}

impl Dataset {
    pub fn grammar(&self) -> Grammar {
        self.layout.grammar()
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Seed of instance `index` within a dataset seeded by `dataset_seed`.
pub fn instance_seed(dataset_seed: u64, index: u64) -> u64 {
    splitmix64(dataset_seed ^ splitmix64(index))
}

const MAX_ATTEMPTS: usize = 200;

/// Deterministically generates one instance from its seed.
pub fn generate_instance(layout: Layout, seed: u64, panel_size: u16) -> Result<RpmInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let structure = sample_structure(layout, &mut rng);
    let orientation = match layout.grammar() {
        Grammar::PairStyle => Orientation::Row,
        Grammar::TripleStyle => {
            if rand::Rng::random_bool(&mut rng, 0.5) {
                Orientation::Row
            } else {
                Orientation::Column
            }
        }
    };
    let mut attempt = 0;
    let (context, choices, correct_index) = loop {
        attempt += 1;
        let grid = realize_matrix(layout, &structure, orientation, &mut rng)?;
        let context: Vec<PanelSpec> = grid[..8].to_vec();
        match generate_candidates(layout, &grid[8], &structure, orientation, &context, &mut rng) {
            Ok((choices, k)) => break (context, choices, k),
            Err(Error::Generation { .. }) if attempt < MAX_ATTEMPTS => continue,
            Err(e) => return Err(e),
        }
    };
    let panels: Vec<PanelSpec> = context.into_iter().chain(choices).collect();
    let rasters = panels.iter().map(|p| rasterize(p, panel_size)).collect();
    Ok(RpmInstance {
        layout,
        structure,
        orientation,
        panels,
        rasters,
        correct_index,
        seed,
    })
}

/// Generates `count` instances. Instance `i` depends only on
/// `(seed, i)`, so the result is identical for any `workers` value.
pub fn generate_dataset(layout: Layout, count: usize, seed: u64, panel_size: u16, workers: usize) -> Result<Dataset> {
    let workers = workers.max(1).min(count.max(1));
    let gen = |i: usize| generate_instance(layout, instance_seed(seed, i as u64), panel_size);
    let instances = if workers == 1 {
        (0..count).map(gen).collect::<Result<Vec<_>>>()?
    } else {
        let chunk = count.div_ceil(workers);
        let parts: Vec<Result<Vec<RpmInstance>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let gen = &gen;
                    scope.spawn(move || {
                        (w * chunk..((w + 1) * chunk).min(count))
                            .map(gen)
                            .collect::<Result<Vec<_>>>()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("generator thread panicked")).collect()
        });
        let mut all = Vec::with_capacity(count);
        for p in parts {
            all.extend(p?);
        }
        all
    };
    Ok(Dataset {
        layout,
        panel_size,
        instances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        for layout in Layout::ALL {
            let a = generate_instance(layout, 42, 28).unwrap();
            let b = generate_instance(layout, 42, 28).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn parallel_matches_serial() {
        let a = generate_dataset(Layout::ShapeGrid, 23, 9, 20, 1).unwrap();
        let b = generate_dataset(Layout::ShapeGrid, 23, 9, 20, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn panel_rejects_collisions() {
        let o = Object {
            position: 2,
            kind: 0,
            size: 0,
            color: 0,
        };
        assert!(PanelSpec::new(3, vec![o, o]).is_err());
        assert!(PanelSpec::new(2, vec![Object { position: 4, ..o }]).is_err());
    }

    #[test]
    fn candidate_completion_layout() {
        let inst = generate_instance(Layout::Center, 1, 28).unwrap();
        let c = inst.complete_candidates();
        assert_eq!(c.len(), 8);
        for (l, m) in c.iter().enumerate() {
            assert_eq!(&m[..8], &[0, 1, 2, 3, 4, 5, 6, 7]);
            assert_eq!(m[8], 8 + l);
        }
    }
}
