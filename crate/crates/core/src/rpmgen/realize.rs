use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rules::{
    AbstractStructure, Grammar, ObjectKind, PairAttribute, PairRelation, Rule, TripleAttribute, TripleRelation,
};

use super::semantics::{pair_levels, pair_panel, pair_values, rotate_mask, rule_holds};
use super::{MAX_COUNT, Layout, Object, Orientation, PanelSpec, COLOR_LEVELS, MAX_ATTEMPTS, SIZE_LEVELS, TYPE_LEVELS};

/// Samples the rules of one matrix.
///
/// Pair-style layouts govern every attribute with exactly one relation.
/// Triple-style matrices carry 1 to 4 rules on distinct attributes, never
/// `number` together with `position`.
pub fn sample_structure<R: Rng + ?Sized>(layout: Layout, rng: &mut R) -> AbstractStructure {
    let rules: Vec<Rule> = match layout.grammar() {
        Grammar::PairStyle => PairAttribute::ALL
            .iter()
            .map(|&attribute| {
                let options: Vec<PairRelation> = PairRelation::ALL
                    .iter()
                    .copied()
                    .filter(|r| Rule::pair(*r, attribute).is_ok())
                    .collect();
                Rule::pair(*options.choose(rng).expect("nonempty"), attribute).expect("filtered")
            })
            .collect(),
        Grammar::TripleStyle => {
            let count = rng.random_range(1..=4usize);
            let mut attrs: Vec<TripleAttribute> = TripleAttribute::ALL.to_vec();
            attrs.shuffle(rng);
            let mut chosen: Vec<TripleAttribute> = Vec::new();
            for a in attrs {
                let clash = matches!(
                    (a, chosen.iter().any(|c| matches!(c, TripleAttribute::Number | TripleAttribute::Position))),
                    (TripleAttribute::Number | TripleAttribute::Position, true)
                );
                if !clash {
                    chosen.push(a);
                }
                if chosen.len() == count {
                    break;
                }
            }
            chosen
                .into_iter()
                .map(|attribute| {
                    let options: Vec<TripleRelation> = TripleRelation::ALL
                        .iter()
                        .copied()
                        .filter(|r| layout.supports(&Rule::triple(*r, ObjectKind::Shape, attribute)))
                        .collect();
                    Rule::triple(*options.choose(rng).expect("nonempty"), ObjectKind::Shape, attribute)
                })
                .collect()
        }
    };
    AbstractStructure::new(layout.grammar(), rules).expect("sampled rules are valid")
}

fn check_structure(layout: Layout, structure: &AbstractStructure) -> Result<()> {
    if structure.grammar() != layout.grammar() {
        return Err(Error::InvalidArgument(format!(
            "{} structure for a {} layout",
            structure.grammar(),
            layout.grammar()
        )));
    }
    if let Some(r) = structure.rules().iter().find(|r| !layout.supports(r)) {
        return Err(Error::InvalidRule(format!("{r} is not supported by layout {layout}")));
    }
    Ok(())
}

fn satisfied(layout: Layout, structure: &AbstractStructure, orientation: Orientation, grid: &[&PanelSpec; 9]) -> Result<bool> {
    for r in structure.rules() {
        if !rule_holds(layout, r, orientation, grid)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Realizes a 3×3 grid (reading order, last entry is the answer) on which
/// every rule of `structure` holds. Ungoverned attributes are random.
pub fn realize_matrix<R: Rng + ?Sized>(
    layout: Layout,
    structure: &AbstractStructure,
    orientation: Orientation,
    rng: &mut R,
) -> Result<Vec<PanelSpec>> {
    check_structure(layout, structure)?;
    for _ in 0..MAX_ATTEMPTS {
        let rows = match layout.grammar() {
            Grammar::PairStyle => realize_pair(layout, structure, rng),
            Grammar::TripleStyle => realize_triple(layout, structure, rng),
        };
        let Some(rows) = rows else { continue };
        let grid: Vec<PanelSpec> = match orientation {
            Orientation::Row => rows,
            Orientation::Column => (0..9).map(|i| rows[(i % 3) * 3 + i / 3].clone()).collect(),
        };
        let refs: [&PanelSpec; 9] = std::array::from_fn(|i| &grid[i]);
        if satisfied(layout, structure, orientation, &refs)? {
            return Ok(grid);
        }
    }
    Err(Error::Generation {
        attempts: MAX_ATTEMPTS,
        reason: format!("could not realize {structure}"),
    })
}

fn pair_line_values<R: Rng + ?Sized>(relation: PairRelation, levels: u8, rng: &mut R) -> Option<[[u8; 3]; 3]> {
    let l = i32::from(levels);
    let rows: [[i32; 3]; 3] = match relation {
        PairRelation::Constant => std::array::from_fn(|_| [rng.random_range(0..l); 3]),
        PairRelation::Progression => {
            let steps: Vec<i32> = [-2i32, -1, 1, 2].into_iter().filter(|d| 2 * d.abs() < l).collect();
            let step = *steps.choose(rng)?;
            std::array::from_fn(|_| {
                let lo = (-2 * step).max(0);
                let hi = (l - 1 - 2 * step).min(l - 1);
                let s = rng.random_range(lo..=hi);
                [s, s + step, s + 2 * step]
            })
        }
        PairRelation::Arithmetic => {
            let sign = if rng.random_bool(0.5) { 1 } else { -1 };
            // magnitudes are level + 1
            let mut pairs = Vec::new();
            for a in 1..=l {
                for b in 1..=l {
                    let c = a + sign * b;
                    if (1..=l).contains(&c) {
                        pairs.push([a - 1, b - 1, c - 1]);
                    }
                }
            }
            std::array::from_fn(|_| *pairs.choose(rng).expect("levels >= 2"))
        }
        PairRelation::DistributeThree => {
            let mut all: Vec<i32> = (0..l).collect();
            all.shuffle(rng);
            let base = [all[0], all[1], all[2]];
            let shift = if rng.random_bool(0.5) { 1 } else { 2 };
            std::array::from_fn(|r| std::array::from_fn(|c| base[(c + r * shift) % 3]))
        }
    };
    Some(rows.map(|r| r.map(|v| v as u8)))
}

fn realize_pair<R: Rng + ?Sized>(layout: Layout, structure: &AbstractStructure, rng: &mut R) -> Option<Vec<PanelSpec>> {
    // levels[attr][row][col]
    let mut levels = [[[0u8; 3]; 3]; 5];
    let mut governed = [false; 5];
    for r in structure.rules() {
        if let Rule::Pair {
            relation,
            attribute,
            ..
        } = *r
        {
            if governed[attribute.index()] {
                // a second relation on the same attribute is checked, not built
                continue;
            }
            governed[attribute.index()] = true;
            levels[attribute.index()] = pair_line_values(relation, pair_levels(layout, attribute), rng)?;
        }
    }
    for &attribute in PairAttribute::ALL {
        if !governed[attribute.index()] {
            let n = pair_levels(layout, attribute);
            levels[attribute.index()] = std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(0..n)));
        }
    }
    Some(
        (0..9)
            .map(|i| pair_panel(layout, std::array::from_fn(|a| levels[a][i / 3][i % 3])))
            .collect(),
    )
}

fn random_subset<R: Rng + ?Sized>(n: u8, p: f64, rng: &mut R) -> u16 {
    loop {
        let m = (0..n).filter(|_| rng.random_bool(p)).fold(0u16, |m, i| m | 1 << i);
        if m != 0 {
            return m;
        }
    }
}

fn triple_range(attr: TripleAttribute) -> u8 {
    match attr {
        TripleAttribute::Type => TYPE_LEVELS,
        TripleAttribute::Size => SIZE_LEVELS,
        TripleAttribute::Color => COLOR_LEVELS,
        TripleAttribute::Position | TripleAttribute::Number => 9,
    }
}

/// Row-wise value grid for one triple-style rule: masks for set-valued
/// attributes, plain counts for `number`.
///
/// `caps` bounds the size of each panel's value set by its object count.
fn triple_line_values<R: Rng + ?Sized>(
    relation: TripleRelation,
    attr: TripleAttribute,
    slots: u8,
    caps: &[[u32; 3]; 3],
    rng: &mut R,
) -> Option<[[u16; 3]; 3]> {
    let range = if attr == TripleAttribute::Position { slots } else { triple_range(attr) };
    let single = |v: i32| -> u16 { 1 << v };
    Some(match (relation, attr) {
        (TripleRelation::Progression, TripleAttribute::Position) => {
            let step = *[1u8, 2, slots - 1, slots - 2].choose(rng)?;
            let mut rows = [[0u16; 3]; 3];
            for row in rows.iter_mut() {
                let a = loop {
                    let a = random_subset(slots, 0.3, rng);
                    if rotate_mask(a, step, slots) != a && a.count_ones() <= 5 {
                        break a;
                    }
                };
                let b = rotate_mask(a, step, slots);
                *row = [a, b, rotate_mask(b, step, slots)];
            }
            rows
        }
        (TripleRelation::Progression, _) => {
            let (lo, hi) = if attr == TripleAttribute::Number { (1, MAX_COUNT) } else { (0, i32::from(range) - 1) };
            let step = *[-2i32, -1, 1, 2]
                .iter()
                .filter(|d| 2 * d.abs() <= hi - lo)
                .collect::<Vec<_>>()
                .choose(rng)?;
            let step = *step;
            std::array::from_fn(|_| {
                let s = rng.random_range((lo - 2 * step).max(lo)..=(hi - 2 * step).min(hi));
                let v = [s, s + step, s + 2 * step];
                if attr == TripleAttribute::Number {
                    v.map(|x| x as u16)
                } else {
                    v.map(single)
                }
            })
        }
        (TripleRelation::And | TripleRelation::Or | TripleRelation::Xor, _) => {
            let p = if attr == TripleAttribute::Position { 0.5 } else { 0.4 };
            let mut rows = [[0u16; 3]; 3];
            for (row, cap) in rows.iter_mut().zip(caps) {
                let mut tries = 0;
                *row = loop {
                    tries += 1;
                    if tries > MAX_ATTEMPTS {
                        return None;
                    }
                    let a = random_subset(range, p, rng);
                    let b = random_subset(range, p, rng);
                    let c = match relation {
                        TripleRelation::And => a & b,
                        TripleRelation::Or => a | b,
                        _ => a ^ b,
                    };
                    let fits = [a, b, c].iter().zip(cap).all(|(m, k)| m.count_ones() <= *k);
                    if c != 0 && a != b && fits {
                        break [a, b, c];
                    }
                };
            }
            rows
        }
        (TripleRelation::ConsistentUnion, _) => {
            let mut values: Vec<u16> = Vec::new();
            while values.len() < 3 {
                let v = match attr {
                    TripleAttribute::Position => random_subset(slots, 0.3, rng),
                    TripleAttribute::Number => rng.random_range(1..=MAX_COUNT as u16),
                    _ => single(rng.random_range(0..i32::from(range))),
                };
                if !values.contains(&v) {
                    values.push(v);
                }
            }
            std::array::from_fn(|_| {
                let mut row = values.clone();
                row.shuffle(rng);
                [row[0], row[1], row[2]]
            })
        }
    })
}

fn realize_triple<R: Rng + ?Sized>(layout: Layout, structure: &AbstractStructure, rng: &mut R) -> Option<Vec<PanelSpec>> {
    let slots = layout.slots();
    let mut grids: BTreeMap<TripleAttribute, [[u16; 3]; 3]> = BTreeMap::new();
    let mut rules: Vec<&Rule> = structure.rules().iter().collect();
    // counts first, so that set-valued attributes can respect them
    rules.sort_by_key(|r| {
        !matches!(
            r,
            Rule::Triple {
                attribute: TripleAttribute::Position | TripleAttribute::Number,
                ..
            }
        )
    });
    let mut caps = [[u32::from(slots); 3]; 3];
    for r in rules {
        if let Rule::Triple {
            relation,
            attribute,
            ..
        } = *r
        {
            if let std::collections::btree_map::Entry::Vacant(e) = grids.entry(attribute) {
                let g = triple_line_values(relation, attribute, slots, &caps, rng)?;
                match attribute {
                    TripleAttribute::Position => caps = g.map(|row| row.map(|m| m.count_ones())),
                    TripleAttribute::Number => caps = g.map(|row| row.map(u32::from)),
                    _ => {}
                }
                e.insert(g);
            }
        }
    }
    let mut panels = Vec::with_capacity(9);
    for i in 0..9 {
        let value = |a: TripleAttribute| grids.get(&a).map(|g| g[i / 3][i % 3]);
        let set_attrs = [TripleAttribute::Type, TripleAttribute::Size, TripleAttribute::Color];
        let needed = set_attrs
            .iter()
            .filter_map(|a| value(*a))
            .map(|m| m.count_ones() as u8)
            .max()
            .unwrap_or(1)
            .max(1);
        let cells: Vec<u8> = if let Some(mask) = value(TripleAttribute::Position) {
            (0..slots).filter(|c| mask & (1 << c) != 0).collect()
        } else {
            let n = match value(TripleAttribute::Number) {
                Some(n) => n as u8,
                None => rng.random_range(needed..=(needed + 3).min(slots)),
            };
            let mut all: Vec<u8> = (0..slots).collect();
            all.shuffle(rng);
            all.truncate(usize::from(n));
            all
        };
        if cells.len() < usize::from(needed) || cells.is_empty() {
            return None;
        }
        let mut columns: [Vec<u8>; 3] = Default::default();
        for (slot, attr) in set_attrs.iter().enumerate() {
            columns[slot] = match value(*attr) {
                Some(mask) => {
                    let vals: Vec<u8> = (0..16).filter(|v| mask & (1 << v) != 0).collect();
                    let mut col: Vec<u8> = vals.clone();
                    while col.len() < cells.len() {
                        col.push(*vals.choose(rng).expect("nonempty"));
                    }
                    col.shuffle(rng);
                    col
                }
                None => (0..cells.len()).map(|_| rng.random_range(0..triple_range(*attr))).collect(),
            };
        }
        let objects = cells
            .iter()
            .enumerate()
            .map(|(k, &position)| Object {
                position,
                kind: columns[0][k],
                size: columns[1][k],
                color: columns[2][k],
            })
            .collect();
        panels.push(PanelSpec::new(layout.lattice(), objects).ok()?);
    }
    Some(panels)
}

/// One deterministic edit of a panel. A candidate set is the 2×2×2 cube of
/// three edits applied to the answer, so every choice is a corner and none
/// sits in the middle of the others.
#[derive(Clone, Copy, Debug)]
enum Edit {
    Level(PairAttribute, u8),
    Recolor(TripleAttribute, u8, u8),
    SetOne(u8, TripleAttribute, u8),
    /// Copies of a template object in every slot of the mask.
    Add(u16, Object),
    /// Removes the objects in every slot of the mask.
    Remove(u16),
    Move(u8, u8),
}

fn triple_get(attr: TripleAttribute, o: &Object) -> u8 {
    match attr {
        TripleAttribute::Type => o.kind,
        TripleAttribute::Size => o.size,
        _ => o.color,
    }
}

fn triple_set(attr: TripleAttribute, o: &mut Object, v: u8) {
    match attr {
        TripleAttribute::Type => o.kind = v,
        TripleAttribute::Size => o.size = v,
        _ => o.color = v,
    }
}

fn apply_edit(layout: Layout, edit: Edit, panel: &PanelSpec) -> Option<PanelSpec> {
    let mut objects = panel.objects().to_vec();
    match edit {
        Edit::Level(attr, v) => {
            let mut levels = pair_values(layout, panel)?;
            levels[attr.index()] = v;
            return Some(pair_panel(layout, levels));
        }
        Edit::Recolor(attr, from, to) => {
            let mut hit = false;
            for o in objects.iter_mut().filter(|o| triple_get(attr, o) == from) {
                triple_set(attr, o, to);
                hit = true;
            }
            if !hit {
                return None;
            }
        }
        Edit::SetOne(slot, attr, v) => {
            let o = objects.iter_mut().find(|o| o.position == slot)?;
            if triple_get(attr, o) == v {
                return None;
            }
            triple_set(attr, o, v);
        }
        Edit::Add(mask, template) => {
            if objects.iter().any(|o| mask & 1 << o.position != 0) {
                return None;
            }
            for position in (0..16u8).filter(|s| mask & 1 << s != 0) {
                objects.push(Object { position, ..template });
            }
        }
        Edit::Remove(mask) => {
            let before = objects.len();
            objects.retain(|o| mask & 1 << o.position == 0);
            if objects.is_empty() || before - objects.len() != mask.count_ones() as usize {
                return None;
            }
        }
        Edit::Move(from, to) => {
            if objects.iter().any(|o| o.position == to) {
                return None;
            }
            objects.iter_mut().find(|o| o.position == from)?.position = to;
        }
    }
    PanelSpec::new(layout.lattice(), objects).ok()
}

fn sample_edits<R: Rng + ?Sized>(
    layout: Layout,
    answer: &PanelSpec,
    pair_governed: &[PairAttribute],
    triple_governed: &[(TripleRelation, TripleAttribute)],
    rng: &mut R,
) -> Option<[Edit; 3]> {
    if layout.grammar() == Grammar::PairStyle {
        let levels = pair_values(layout, answer)?;
        let attrs: Vec<PairAttribute> = pair_governed.choose_multiple(rng, 3).copied().collect();
        if attrs.len() < 3 {
            return None;
        }
        let mut edits = [Edit::Remove(0); 3];
        for (e, attr) in edits.iter_mut().zip(attrs) {
            let others: Vec<u8> = (0..pair_levels(layout, attr)).filter(|v| *v != levels[attr.index()]).collect();
            *e = Edit::Level(attr, *others.choose(rng)?);
        }
        return Some(edits);
    }
    let objects = answer.objects();
    let occupied: Vec<u8> = objects.iter().map(|o| o.position).collect();
    let free: Vec<u8> = (0..layout.slots()).filter(|s| !occupied.contains(s)).collect();
    // Distinct attributes where possible: stacking three edits of one ordinal
    // attribute turns the answer into the extreme corner.
    let mut attrs: Vec<TripleAttribute> = triple_governed.iter().map(|(_, a)| *a).collect();
    attrs.shuffle(rng);
    while attrs.len() < 3 {
        attrs.push(*attrs.choose(rng)?);
    }
    let mut edits = [Edit::Remove(0); 3];
    for (e, &attr) in edits.iter_mut().zip(&attrs) {
        *e = match attr {
            // Several objects at once, so that cubes mixing additions and
            // removals can avoid every corner landing back on the answer's count.
            TripleAttribute::Number => {
                let k = rng.random_range(1..=3usize);
                let mask = |slots: &[u8], rng: &mut R| -> Option<u16> {
                    let pick: Vec<u8> = slots.choose_multiple(rng, k).copied().collect();
                    (pick.len() == k).then(|| pick.iter().fold(0u16, |m, s| m | 1 << s))
                };
                if rng.random_bool(0.5) {
                    Edit::Remove(mask(&occupied, rng)?)
                } else {
                    Edit::Add(mask(&free, rng)?, *objects.choose(rng)?)
                }
            }
            TripleAttribute::Position => Edit::Move(*occupied.choose(rng)?, *free.choose(rng)?),
            _ => {
                let o = objects.choose(rng)?;
                let from = triple_get(attr, o);
                let others: Vec<u8> = (0..triple_range(attr)).filter(|v| *v != from).collect();
                let to = *others.choose(rng)?;
                if rng.random_bool(0.5) {
                    Edit::Recolor(attr, from, to)
                } else {
                    Edit::SetOne(o.position, attr, to)
                }
            }
        };
    }
    Some(edits)
}

/// The 7 non-answer corners of the edit cube, or `None` if a corner is
/// malformed, repeated or still valid.
fn edit_cube(
    layout: Layout,
    answer: &PanelSpec,
    edits: &[Edit; 3],
    holds: &dyn Fn(&PanelSpec) -> Result<bool>,
) -> Result<Option<Vec<PanelSpec>>> {
    let mut corners = vec![answer.clone()];
    for mask in 1..8usize {
        let mut p = answer.clone();
        for (bit, e) in edits.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                match apply_edit(layout, *e, &p) {
                    Some(q) => p = q,
                    None => return Ok(None),
                }
            }
        }
        if corners.contains(&p) || holds(&p)? {
            return Ok(None);
        }
        corners.push(p);
    }
    corners.remove(0);
    Ok(Some(corners))
}

/// Few tries per answer. Retrying one answer until some cube fits would favour
/// cubes whose edits all point the same way (e.g. only additions to a
/// one-object panel), which makes the answer an extreme corner; the caller
/// draws a new matrix instead.
const CUBE_ATTEMPTS: usize = 8;

/// Builds 7 distractors, each rejected by the verifier, as the non-answer
/// corners of a cube of three governed-attribute edits, and places the answer
/// at a uniformly random position. Returns the 8 choices and the 1-based
/// correct index.
pub fn generate_candidates<R: Rng + ?Sized>(
    layout: Layout,
    answer: &PanelSpec,
    structure: &AbstractStructure,
    orientation: Orientation,
    context: &[PanelSpec],
    rng: &mut R,
) -> Result<(Vec<PanelSpec>, u8)> {
    check_structure(layout, structure)?;
    if context.len() != 8 {
        return Err(Error::InvalidArgument(format!("{} context panels, expected 8", context.len())));
    }
    let grid_with = |p: &PanelSpec| -> [PanelSpec; 9] {
        std::array::from_fn(|i| if i < 8 { context[i].clone() } else { p.clone() })
    };
    let holds = |p: &PanelSpec| -> Result<bool> {
        let g = grid_with(p);
        let refs: [&PanelSpec; 9] = std::array::from_fn(|i| &g[i]);
        satisfied(layout, structure, orientation, &refs)
    };
    if !holds(answer)? {
        return Err(Error::InvalidArgument("answer does not satisfy the structure".into()));
    }
    let pair_governed: Vec<PairAttribute> = {
        let mut v: Vec<PairAttribute> = structure
            .rules()
            .iter()
            .filter_map(|r| match r {
                Rule::Pair { attribute, .. } => Some(*attribute),
                _ => None,
            })
            .collect();
        v.dedup();
        v
    };
    let triple_governed: Vec<(TripleRelation, TripleAttribute)> = structure
        .rules()
        .iter()
        .filter_map(|r| match r {
            Rule::Triple {
                relation,
                attribute,
                ..
            } => Some((*relation, *attribute)),
            _ => None,
        })
        .collect();

    for _ in 0..CUBE_ATTEMPTS {
        let Some(edits) = sample_edits(layout, answer, &pair_governed, &triple_governed, rng) else { continue };
        if let Some(distractors) = edit_cube(layout, answer, &edits, &holds)? {
            return Ok(place_answer(answer, distractors, rng));
        }
    }
    Err(Error::Generation {
        attempts: CUBE_ATTEMPTS,
        reason: "no edit cube with 7 distinct rejected distractors".into(),
    })
}

fn place_answer<R: Rng + ?Sized>(answer: &PanelSpec, mut choices: Vec<PanelSpec>, rng: &mut R) -> (Vec<PanelSpec>, u8) {
    choices.push(answer.clone());
    choices.shuffle(rng);
    let k = choices.iter().position(|p| p == answer).expect("answer present");
    (choices, k as u8 + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rpmgen::semantics::pair_values;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn structure(rules: &[&str], g: Grammar) -> AbstractStructure {
        AbstractStructure::new(g, rules.iter().map(|r| r.parse::<Rule>().unwrap())).unwrap()
    }

    #[test]
    fn center_structures_have_five_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let s = sample_structure(Layout::Center, &mut rng);
            assert_eq!(s.len(), 5);
            let attrs: std::collections::BTreeSet<_> = s
                .rules()
                .iter()
                .map(|r| match r {
                    Rule::Pair { attribute, .. } => *attribute,
                    _ => unreachable!(),
                })
                .collect();
            assert_eq!(attrs.len(), 5);
        }
    }

    #[test]
    fn triple_structures_respect_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut saw_single = false;
        for _ in 0..500 {
            let s = sample_structure(Layout::ShapeGrid, &mut rng);
            assert!((1..=4).contains(&s.len()));
            saw_single |= s.len() == 1;
            let has = |a: TripleAttribute| {
                s.rules().iter().any(|r| matches!(r, Rule::Triple { attribute, .. } if *attribute == a))
            };
            assert!(!(has(TripleAttribute::Number) && has(TripleAttribute::Position)));
            assert!(s.rules().iter().all(|r| Layout::ShapeGrid.supports(r)));
        }
        assert!(saw_single);
    }

    #[test]
    fn constant_number_keeps_counts() {
        let s = structure(&["[Constant,Number]"], Grammar::PairStyle);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let grid = realize_matrix(Layout::Center, &s, Orientation::Row, &mut rng).unwrap();
            for row in grid.chunks(3) {
                assert!(row.iter().all(|p| p.count() == row[0].count()));
            }
        }
    }

    #[test]
    fn arithmetic_size_adds_magnitudes() {
        let s = structure(&["[Arithmetic,Size]"], Grammar::PairStyle);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut saw_plus = false;
        for _ in 0..30 {
            let grid = realize_matrix(Layout::Center, &s, Orientation::Row, &mut rng).unwrap();
            let mag = |p: &PanelSpec| i32::from(pair_values(Layout::Center, p).unwrap()[3]) + 1;
            let plus = grid.chunks(3).all(|r| mag(&r[2]) == mag(&r[0]) + mag(&r[1]));
            let minus = grid.chunks(3).all(|r| mag(&r[2]) == mag(&r[0]) - mag(&r[1]));
            assert!(plus ^ minus);
            saw_plus |= plus;
        }
        assert!(saw_plus);
    }

    #[test]
    fn progression_color_steps() {
        let s = structure(&["[Progression,Color]"], Grammar::PairStyle);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let grid = realize_matrix(Layout::Center, &s, Orientation::Row, &mut rng).unwrap();
            let c = |p: &PanelSpec| i32::from(p.objects()[0].color);
            let step = c(&grid[1]) - c(&grid[0]);
            assert_ne!(step, 0);
            for r in grid.chunks(3) {
                assert_eq!(c(&r[1]) - c(&r[0]), step);
                assert_eq!(c(&r[2]) - c(&r[1]), step);
            }
        }
    }

    #[test]
    fn and_on_position_rowwise() {
        let s = structure(&["[AND,shape,position]"], Grammar::TripleStyle);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let grid = realize_matrix(Layout::ShapeGrid, &s, Orientation::Row, &mut rng).unwrap();
            for r in grid.chunks(3) {
                assert_eq!(r[2].position_mask(), r[0].position_mask() & r[1].position_mask());
            }
        }
    }

    #[test]
    fn contradictory_structure_errors() {
        let s = structure(&["[Constant,Size]", "[Progression,Size]"], Grammar::PairStyle);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert!(matches!(
            realize_matrix(Layout::Center, &s, Orientation::Row, &mut rng),
            Err(Error::Generation { .. })
        ));
    }

    #[test]
    fn size_bump_under_constant_size_rejected() {
        let s = structure(&["[Constant,Size]"], Grammar::PairStyle);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let grid = loop {
            let g = realize_matrix(Layout::Center, &s, Orientation::Row, &mut rng).unwrap();
            if pair_values(Layout::Center, &g[8]).unwrap()[3] < SIZE_LEVELS - 1 {
                break g;
            }
        };
        let mut levels = pair_values(Layout::Center, &grid[8]).unwrap();
        levels[3] += 1;
        let bumped = pair_panel(Layout::Center, levels);
        let mut g2 = grid.clone();
        g2[8] = bumped;
        let refs: [&PanelSpec; 9] = std::array::from_fn(|i| &g2[i]);
        assert!(!satisfied(Layout::Center, &s, Orientation::Row, &refs).unwrap());
    }
}
