//! Rule semantics and the verifier.
//!
//! Pair-style panels carry five ordinal attributes: object count, position
//! (anchor of the occupied run of slots), type, size and color, the last
//! three shared by every object of the panel.
//!
//! - `Constant`: equal values along a line.
//! - `Progression`: a fixed nonzero step along every line.
//! - `Arithmetic`: `third = first ± second` on 1-based values, one sign per
//!   matrix.
//! - `Distribute_Three`: every line is a permutation of the same three
//!   distinct values.
//!
//! Triple-style panels are read as value sets: occupied slots, object count
//! and the sets of distinct types, sizes and colors.
//!
//! - `progression`: fixed nonzero step of the count, of a single shared
//!   type/size/color value, or a fixed cyclic shift of the occupied slots.
//! - `AND`/`OR`/`XOR`: the third set is the intersection / union /
//!   symmetric difference of the first two.
//! - `consistent_union`: every line holds the same multiset of values.
//!
//! Every parameter (step, sign, value set) is re-derived from the matrix
//! itself, never taken from the generator.

use crate::error::{Error, Result};
use crate::rules::{ObjectKind, PairAttribute, PairRelation, Rule, TripleAttribute, TripleRelation};

use super::{Layout, Object, Orientation, PanelSpec, RpmInstance};

pub(crate) fn supports(layout: Layout, rule: &Rule) -> bool {
    match (layout.grammar(), rule) {
        (crate::rules::Grammar::PairStyle, Rule::Pair { substructure, .. }) => *substructure == 0,
        (
            crate::rules::Grammar::TripleStyle,
            Rule::Triple {
                relation,
                object,
                attribute,
            },
        ) => {
            *object == ObjectKind::Shape
                && !(*attribute == TripleAttribute::Number
                    && matches!(
                        relation,
                        TripleRelation::And | TripleRelation::Or | TripleRelation::Xor
                    ))
        }
        _ => false,
    }
}

/// Number of ordinal levels of a pair-style attribute.
pub(crate) fn pair_levels(layout: Layout, attr: PairAttribute) -> u8 {
    match (layout, attr) {
        (Layout::Grid2x2, PairAttribute::Number) => 3,
        (_, PairAttribute::Number) => 4,
        (Layout::Grid2x2, PairAttribute::Position) => 4,
        (_, PairAttribute::Position) => 5,
        (_, PairAttribute::Type) => super::TYPE_LEVELS,
        (_, PairAttribute::Size) => super::SIZE_LEVELS,
        (_, PairAttribute::Color) => super::COLOR_LEVELS,
    }
}

/// Slots occupied by `count` objects anchored at `anchor`, ascending.
pub(crate) fn pair_placement(layout: Layout, anchor: u8, count: u8) -> Vec<u8> {
    let mut cells: Vec<u8> = match layout {
        Layout::Grid2x2 => (0..count).map(|i| (anchor + i) % 4).collect(),
        _ => (anchor..anchor + count).collect(),
    };
    cells.sort_unstable();
    cells
}

/// Builds a pair-style panel from attribute levels (indexed by
/// [`PairAttribute::index`]).
pub(crate) fn pair_panel(layout: Layout, levels: [u8; 5]) -> PanelSpec {
    let [number, position, kind, size, color] = levels;
    let objects = pair_placement(layout, position, number + 1)
        .into_iter()
        .map(|p| Object {
            position: p,
            kind,
            size,
            color,
        })
        .collect();
    PanelSpec::new(layout.lattice(), objects).expect("levels are within range")
}

/// Attribute levels of a well-formed pair-style panel.
pub(crate) fn pair_values(layout: Layout, panel: &PanelSpec) -> Option<[u8; 5]> {
    let objs = panel.objects();
    let first = objs.first()?;
    if objs.len() > usize::from(pair_levels(layout, PairAttribute::Number)) || panel.lattice() != layout.lattice() {
        return None;
    }
    if objs
        .iter()
        .any(|o| o.kind != first.kind || o.size != first.size || o.color != first.color)
    {
        return None;
    }
    let count = objs.len() as u8;
    let cells: Vec<u8> = objs.iter().map(|o| o.position).collect();
    let anchor = (0..pair_levels(layout, PairAttribute::Position))
        .find(|&a| pair_placement(layout, a, count) == cells)?;
    Some([count - 1, anchor, first.kind, first.size, first.color])
}

fn pair_rule_holds(relation: PairRelation, v: &[[i32; 3]; 3]) -> bool {
    match relation {
        PairRelation::Constant => v.iter().all(|r| r[0] == r[1] && r[1] == r[2]),
        PairRelation::Progression => {
            let step = v[0][1] - v[0][0];
            step != 0 && v.iter().all(|r| r[1] - r[0] == step && r[2] - r[1] == step)
        }
        PairRelation::Arithmetic => {
            // 1-based magnitudes
            let m = |x: i32| x + 1;
            let r0 = v[0];
            let sign = if m(r0[2]) == m(r0[0]) + m(r0[1]) {
                1
            } else if m(r0[2]) == m(r0[0]) - m(r0[1]) {
                -1
            } else {
                return false;
            };
            v.iter().all(|r| m(r[2]) == m(r[0]) + sign * m(r[1]))
        }
        PairRelation::DistributeThree => {
            let mut set = v[0];
            set.sort_unstable();
            if set[0] == set[1] || set[1] == set[2] {
                return false;
            }
            v.iter().all(|r| {
                let mut s = *r;
                s.sort_unstable();
                s == set
            })
        }
    }
}

/// Value sets of one triple-style panel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct TripleValues {
    pub position: u16,
    pub number: u16,
    pub kind: u16,
    pub size: u16,
    pub color: u16,
}

impl TripleValues {
    pub fn of(panel: &PanelSpec) -> Self {
        let mut v = TripleValues {
            position: 0,
            number: panel.count() as u16,
            kind: 0,
            size: 0,
            color: 0,
        };
        for o in panel.objects() {
            v.position |= 1 << o.position;
            v.kind |= 1 << o.kind;
            v.size |= 1 << o.size;
            v.color |= 1 << o.color;
        }
        v
    }

    pub fn get(&self, attr: TripleAttribute) -> u16 {
        match attr {
            TripleAttribute::Position => self.position,
            TripleAttribute::Number => self.number,
            TripleAttribute::Type => self.kind,
            TripleAttribute::Size => self.size,
            TripleAttribute::Color => self.color,
        }
    }
}

/// Moves every occupied slot `delta` steps forward in reading order, wrapping.
pub(crate) fn rotate_mask(mask: u16, delta: u8, slots: u8) -> u16 {
    (0..slots)
        .filter(|i| mask & (1 << i) != 0)
        .fold(0, |m, i| m | 1 << ((i + delta) % slots))
}

fn singleton_value(mask: u16) -> Option<i32> {
    (mask.count_ones() == 1).then(|| mask.trailing_zeros() as i32)
}

fn triple_rule_holds(relation: TripleRelation, attr: TripleAttribute, lines: &[[TripleValues; 3]; 3], slots: u8) -> bool {
    let vals: [[u16; 3]; 3] = lines.map(|l| l.map(|p| p.get(attr)));
    match relation {
        TripleRelation::Progression => match attr {
            TripleAttribute::Position => {
                if vals.iter().any(|l| l[0] == l[1] || l[0] == 0) {
                    return false;
                }
                (1..slots).any(|d| {
                    vals.iter().all(|l| {
                        rotate_mask(l[0], d, slots) == l[1] && rotate_mask(l[1], d, slots) == l[2]
                    })
                })
            }
            _ => {
                let scalar = |m: u16| -> Option<i32> {
                    if attr == TripleAttribute::Number {
                        Some(i32::from(m))
                    } else {
                        singleton_value(m)
                    }
                };
                let Some(ints) = vals
                    .iter()
                    .map(|l| Some([scalar(l[0])?, scalar(l[1])?, scalar(l[2])?]))
                    .collect::<Option<Vec<_>>>()
                else {
                    return false;
                };
                let step = ints[0][1] - ints[0][0];
                step != 0 && ints.iter().all(|l| l[1] - l[0] == step && l[2] - l[1] == step)
            }
        },
        TripleRelation::And => vals.iter().all(|l| l[2] == l[0] & l[1]),
        TripleRelation::Or => vals.iter().all(|l| l[2] == l[0] | l[1]),
        TripleRelation::Xor => vals.iter().all(|l| l[2] == l[0] ^ l[1]),
        TripleRelation::ConsistentUnion => {
            let sorted = |l: &[u16; 3]| {
                let mut s = *l;
                s.sort_unstable();
                s
            };
            let first = sorted(&vals[0]);
            vals.iter().all(|l| sorted(l) == first)
        }
    }
}

/// Whether `rule` holds on the completed 3×3 `grid` (reading order).
pub(crate) fn rule_holds(layout: Layout, rule: &Rule, orientation: Orientation, grid: &[&PanelSpec; 9]) -> Result<bool> {
    if !supports(layout, rule) {
        return Err(Error::InvalidRule(format!("{rule} is not supported by layout {layout}")));
    }
    let line_idx = |i: usize, j: usize| match orientation {
        Orientation::Row => 3 * i + j,
        Orientation::Column => i + 3 * j,
    };
    Ok(match *rule {
        Rule::Pair {
            relation,
            attribute,
            ..
        } => {
            let Some(levels) = grid
                .iter()
                .map(|p| pair_values(layout, p))
                .collect::<Option<Vec<_>>>()
            else {
                return Ok(false);
            };
            let v: [[i32; 3]; 3] =
                std::array::from_fn(|i| std::array::from_fn(|j| i32::from(levels[line_idx(i, j)][attribute.index()])));
            pair_rule_holds(relation, &v)
        }
        Rule::Triple {
            relation,
            attribute,
            ..
        } => {
            if grid.iter().any(|p| p.count() == 0) {
                return Ok(false);
            }
            let lines: [[TripleValues; 3]; 3] =
                std::array::from_fn(|i| std::array::from_fn(|j| TripleValues::of(grid[line_idx(i, j)])));
            triple_rule_holds(relation, attribute, &lines, layout.slots())
        }
    })
}

/// Whether every rule of `instance`'s structure holds with choice `choice`
/// (0-based) filled in, rule by rule.
pub fn rule_report(instance: &RpmInstance, choice: usize) -> Result<Vec<(Rule, bool)>> {
    if instance.panels.len() != 16 {
        return Err(Error::InvalidArgument(format!(
            "instance has {} panels, expected 16",
            instance.panels.len()
        )));
    }
    if choice >= 8 {
        return Err(Error::InvalidArgument(format!("choice {choice} out of 0..8")));
    }
    if instance.structure.is_empty() {
        return Err(Error::EmptyStructure);
    }
    let grid = instance.completed_grid(choice);
    instance
        .structure
        .rules()
        .iter()
        .map(|r| Ok((*r, rule_holds(instance.layout, r, instance.orientation, &grid)?)))
        .collect()
}

/// 1-based indices of the choices that satisfy every rule.
pub fn verify(instance: &RpmInstance) -> Result<Vec<u8>> {
    let mut ok = Vec::new();
    for choice in 0..8 {
        if rule_report(instance, choice)?.iter().all(|(_, holds)| *holds) {
            ok.push(choice as u8 + 1);
        }
    }
    Ok(ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_progression_needs_shared_step() {
        let good = [[0, 1, 2], [1, 2, 3], [2, 3, 4]];
        assert!(pair_rule_holds(PairRelation::Progression, &good));
        let mixed = [[0, 1, 2], [0, 2, 4], [2, 3, 4]];
        assert!(!pair_rule_holds(PairRelation::Progression, &mixed));
        let flat = [[1, 1, 1], [2, 2, 2], [0, 0, 0]];
        assert!(!pair_rule_holds(PairRelation::Progression, &flat));
        assert!(pair_rule_holds(PairRelation::Constant, &flat));
    }

    #[test]
    fn pair_arithmetic_on_magnitudes() {
        // magnitudes (1,2,3), (2,2,4), (1,1,2)
        let plus = [[0, 1, 2], [1, 1, 3], [0, 0, 1]];
        assert!(pair_rule_holds(PairRelation::Arithmetic, &plus));
        // magnitudes (4,1,3), (5,2,3), (3,2,1)
        let minus = [[3, 0, 2], [4, 1, 2], [2, 1, 0]];
        assert!(pair_rule_holds(PairRelation::Arithmetic, &minus));
        let mixed = [[0, 1, 2], [4, 1, 2], [0, 0, 1]];
        assert!(!pair_rule_holds(PairRelation::Arithmetic, &mixed));
    }

    #[test]
    fn pair_distribute_three() {
        let ok = [[0, 2, 4], [2, 4, 0], [4, 0, 2]];
        assert!(pair_rule_holds(PairRelation::DistributeThree, &ok));
        let bad = [[0, 2, 4], [2, 4, 0], [4, 0, 0]];
        assert!(!pair_rule_holds(PairRelation::DistributeThree, &bad));
    }

    #[test]
    fn rotate_wraps() {
        assert_eq!(rotate_mask(0b1_0000_0001, 1, 9), 0b0_0000_0011);
        assert_eq!(rotate_mask(0b11, 2, 4), 0b1100);
    }

    #[test]
    fn pair_panel_roundtrip() {
        for layout in [Layout::Center, Layout::Grid2x2] {
            let n = pair_levels(layout, PairAttribute::Number);
            let p = pair_levels(layout, PairAttribute::Position);
            for number in 0..n {
                for pos in 0..p {
                    let levels = [number, pos, 3, 4, 2];
                    let panel = pair_panel(layout, levels);
                    assert_eq!(pair_values(layout, &panel), Some(levels));
                }
            }
        }
    }

    #[test]
    fn unsupported_rules() {
        let and_number = Rule::triple(TripleRelation::And, ObjectKind::Shape, TripleAttribute::Number);
        assert!(!supports(Layout::ShapeGrid, &and_number));
        let line = Rule::triple(TripleRelation::Or, ObjectKind::Line, TripleAttribute::Color);
        assert!(!supports(Layout::ShapeGrid, &line));
        let slot1 = Rule::pair_in(1, PairRelation::Constant, PairAttribute::Size).unwrap();
        assert!(!supports(Layout::Center, &slot1));
        assert_eq!(Layout::ShapeGrid.active_rules().len(), 22);
        assert_eq!(Layout::Center.active_rules().len(), 19);
    }
}
