//! Rule grammars, rule-space enumeration and meta-target encodings.
//!
//! Two grammars are supported. Pair-style rules are `[relation, attribute]`
//! pairs tagged with the substructure they apply to; triple-style rules are
//! `[relation, object, attribute]` triples.
//!
//! Sparse index order (the position of a rule in [`enumerate_rule_space`]):
//!
//! - pair-style: `slot * 19 + k` where `k` ranks the 19 valid
//!   `(relation, attribute)` combinations relation-major, skipping
//!   `(Arithmetic, Type)`;
//! - triple-style: `(relation * 5 + attribute) * 2 + object`.
//!
//! Dense slot order:
//!
//! - pair-style (9): `Constant, Progression, Arithmetic, Distribute_Three,
//!   Number, Position, Type, Size, Color`;
//! - triple-style (12): `shape, line, color, number, position, size, type,
//!   progression, XOR, OR, AND, consistent_union`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Grammar {
    PairStyle,
    TripleStyle,
}

impl Grammar {
    pub const ALL: [Grammar; 2] = [Grammar::PairStyle, Grammar::TripleStyle];

    /// Maximal number of rules in one structure.
    pub fn max_rules(self) -> usize {
        match self {
            Grammar::PairStyle => 2 * PairAttribute::ALL.len(),
            Grammar::TripleStyle => 4,
        }
    }

    pub fn rule_space_size(self) -> usize {
        match self {
            Grammar::PairStyle => 2 * PAIR_COMBOS,
            Grammar::TripleStyle => 50,
        }
    }

    pub fn dense_len(self) -> usize {
        match self {
            Grammar::PairStyle => 9,
            Grammar::TripleStyle => 12,
        }
    }

    pub fn target_len(self, scheme: Scheme) -> usize {
        match scheme {
            Scheme::Dense => self.dense_len(),
            Scheme::Sparse => self.rule_space_size(),
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Grammar::PairStyle => 0,
            Grammar::TripleStyle => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Grammar::PairStyle),
            1 => Some(Grammar::TripleStyle),
            _ => None,
        }
    }
}

impl fmt::Display for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Grammar::PairStyle => "pair",
            Grammar::TripleStyle => "triple",
        })
    }
}

impl FromStr for Grammar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pair" | "pairstyle" | "pair-style" | "raven" => Ok(Grammar::PairStyle),
            "triple" | "triplestyle" | "triple-style" | "pgm" => Ok(Grammar::TripleStyle),
            _ => Err(Error::InvalidArgument(format!(
                "unknown grammar `{s}` (expected pair or triple)"
            ))),
        }
    }
}

macro_rules! named_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn index(self) -> usize {
                self as usize
            }

            pub fn name(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                let norm = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
                $name::ALL
                    .iter()
                    .copied()
                    .find(|v| v.name().to_ascii_lowercase() == norm)
                    .ok_or_else(|| Error::InvalidRule(format!(
                        "unknown {} `{s}`", stringify!($name)
                    )))
            }
        }
    };
}

named_enum!(PairRelation {
    Constant => "Constant",
    Progression => "Progression",
    Arithmetic => "Arithmetic",
    DistributeThree => "Distribute_Three",
});

named_enum!(PairAttribute {
    Number => "Number",
    Position => "Position",
    Type => "Type",
    Size => "Size",
    Color => "Color",
});

named_enum!(TripleRelation {
    Progression => "progression",
    Xor => "XOR",
    Or => "OR",
    And => "AND",
    ConsistentUnion => "consistent_union",
});

named_enum!(ObjectKind {
    Shape => "shape",
    Line => "line",
});

named_enum!(TripleAttribute {
    Size => "size",
    Type => "type",
    Color => "color",
    Position => "position",
    Number => "number",
});

const PAIR_COMBOS: usize = 19;

/// One abstract rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    Pair {
        substructure: u8,
        relation: PairRelation,
        attribute: PairAttribute,
    },
    Triple {
        relation: TripleRelation,
        object: ObjectKind,
        attribute: TripleAttribute,
    },
}

impl Rule {
    pub fn pair(relation: PairRelation, attribute: PairAttribute) -> Result<Rule> {
        Rule::pair_in(0, relation, attribute)
    }

    pub fn pair_in(substructure: u8, relation: PairRelation, attribute: PairAttribute) -> Result<Rule> {
        let rule = Rule::Pair {
            substructure,
            relation,
            attribute,
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn triple(relation: TripleRelation, object: ObjectKind, attribute: TripleAttribute) -> Rule {
        Rule::Triple {
            relation,
            object,
            attribute,
        }
    }

    pub fn grammar(&self) -> Grammar {
        match self {
            Rule::Pair { .. } => Grammar::PairStyle,
            Rule::Triple { .. } => Grammar::TripleStyle,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Rule::Pair {
                substructure,
                relation,
                attribute,
            } => {
                if substructure > 1 {
                    return Err(Error::InvalidRule(format!(
                        "substructure slot {substructure} (expected 0 or 1)"
                    )));
                }
                if relation == PairRelation::Arithmetic && attribute == PairAttribute::Type {
                    return Err(Error::InvalidRule(
                        "Arithmetic cannot be applied to Type".into(),
                    ));
                }
                Ok(())
            }
            Rule::Triple { .. } => Ok(()),
        }
    }

    /// Position of this rule in [`enumerate_rule_space`].
    pub fn sparse_index(&self) -> usize {
        match *self {
            Rule::Pair {
                substructure,
                relation,
                attribute,
            } => {
                let raw = relation.index() * PairAttribute::ALL.len() + attribute.index();
                let skip = arithmetic_type_raw();
                let combo = if raw > skip { raw - 1 } else { raw };
                substructure as usize * PAIR_COMBOS + combo
            }
            Rule::Triple {
                relation,
                object,
                attribute,
            } => {
                (relation.index() * TripleAttribute::ALL.len() + attribute.index())
                    * ObjectKind::ALL.len()
                    + object.index()
            }
        }
    }

    /// Slots set in this rule's dense string.
    fn dense_slots(&self) -> [usize; 3] {
        match *self {
            // third entry repeats the relation; OR-ing it twice is harmless
            Rule::Pair {
                relation,
                attribute,
                ..
            } => [relation.index(), 4 + attribute.index(), relation.index()],
            Rule::Triple {
                relation,
                object,
                attribute,
            } => {
                let attr_slot = match attribute {
                    TripleAttribute::Color => 2,
                    TripleAttribute::Number => 3,
                    TripleAttribute::Position => 4,
                    TripleAttribute::Size => 5,
                    TripleAttribute::Type => 6,
                };
                [object.index(), attr_slot, 7 + relation.index()]
            }
        }
    }
}

fn arithmetic_type_raw() -> usize {
    PairRelation::Arithmetic.index() * PairAttribute::ALL.len() + PairAttribute::Type.index()
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::Pair {
                substructure,
                relation,
                attribute,
            } => {
                write!(f, "[{relation},{attribute}]")?;
                if *substructure > 0 {
                    write!(f, "@{substructure}")?;
                }
                Ok(())
            }
            Rule::Triple {
                relation,
                object,
                attribute,
            } => write!(f, "[{relation},{object},{attribute}]"),
        }
    }
}

impl FromStr for Rule {
    type Err = Error;

    /// Parses `[Constant,Number]`, `[Constant,Number]@1` or `[OR,shape,type]`.
    fn from_str(s: &str) -> Result<Rule> {
        let s = s.trim();
        let (body, slot) = match s.rsplit_once('@') {
            Some((b, slot)) => (
                b,
                slot.parse::<u8>()
                    .map_err(|_| Error::InvalidRule(format!("bad slot in `{s}`")))?,
            ),
            None => (s, 0),
        };
        let inner = body
            .trim()
            .strip_prefix('[')
            .and_then(|b| b.strip_suffix(']'))
            .ok_or_else(|| Error::InvalidRule(format!("expected [..] in `{s}`")))?;
        let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
        match parts.as_slice() {
            [r, a] => Rule::pair_in(slot, r.parse()?, a.parse()?),
            [r, o, a] => Ok(Rule::triple(r.parse()?, o.parse()?, a.parse()?)),
            _ => Err(Error::InvalidRule(format!("cannot parse `{s}`"))),
        }
    }
}

/// Every rule of a grammar, in sparse index order.
pub fn enumerate_rule_space(grammar: Grammar) -> Vec<Rule> {
    match grammar {
        Grammar::PairStyle => {
            let mut out = Vec::with_capacity(2 * PAIR_COMBOS);
            for slot in 0..2u8 {
                for &relation in PairRelation::ALL {
                    for &attribute in PairAttribute::ALL {
                        if let Ok(r) = Rule::pair_in(slot, relation, attribute) {
                            out.push(r);
                        }
                    }
                }
            }
            out
        }
        Grammar::TripleStyle => {
            let mut out = Vec::with_capacity(50);
            for &relation in TripleRelation::ALL {
                for &attribute in TripleAttribute::ALL {
                    for &object in ObjectKind::ALL {
                        out.push(Rule::triple(relation, object, attribute));
                    }
                }
            }
            out
        }
    }
}

/// Set of rules governing one matrix.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AbstractStructure {
    grammar: Grammar,
    rules: BTreeSet<Rule>,
}

impl AbstractStructure {
    /// Deduplicates `rules`; fails if empty, larger than the grammar limit,
    /// mixed-grammar or containing an invalid rule.
    pub fn new(grammar: Grammar, rules: impl IntoIterator<Item = Rule>) -> Result<Self> {
        let rules: BTreeSet<Rule> = rules.into_iter().collect();
        if rules.is_empty() {
            return Err(Error::EmptyStructure);
        }
        for r in &rules {
            if r.grammar() != grammar {
                return Err(Error::InvalidRule(format!(
                    "{r} does not belong to the {grammar} grammar"
                )));
            }
            r.validate()?;
        }
        if rules.len() > grammar.max_rules() {
            return Err(Error::InvalidRule(format!(
                "{} rules exceed the {grammar} limit of {}",
                rules.len(),
                grammar.max_rules()
            )));
        }
        Ok(Self { grammar, rules })
    }

    pub fn grammar(&self) -> Grammar {
        self.grammar
    }

    pub fn rules(&self) -> &BTreeSet<Rule> {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn contains(&self, rule: &Rule) -> bool {
        self.rules.contains(rule)
    }

    /// Sparse indices of the rules, ascending.
    pub fn label_set(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.rules.iter().map(Rule::sparse_index).collect();
        v.sort_unstable();
        v
    }

    pub fn union(&self, other: &AbstractStructure) -> Result<AbstractStructure> {
        AbstractStructure::new(
            self.grammar,
            self.rules.iter().chain(other.rules.iter()).copied(),
        )
    }
}

impl fmt::Display for AbstractStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, r) in self.rules.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{r}")?;
        }
        f.write_str("}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    Dense,
    Sparse,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Dense => "dense",
            Scheme::Sparse => "sparse",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dense" => Ok(Scheme::Dense),
            "sparse" => Ok(Scheme::Sparse),
            _ => Err(Error::InvalidArgument(format!(
                "unknown encoding `{s}` (expected dense or sparse)"
            ))),
        }
    }
}

/// Fixed-length binary rule encoding.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MetaTarget {
    scheme: Scheme,
    grammar: Grammar,
    bits: Vec<bool>,
}

impl MetaTarget {
    pub fn from_bits(grammar: Grammar, scheme: Scheme, bits: Vec<bool>) -> Result<Self> {
        let expected = grammar.target_len(scheme);
        if bits.len() != expected {
            return Err(Error::Shape(format!(
                "{scheme} {grammar} meta-target needs {expected} bits, got {}",
                bits.len()
            )));
        }
        Ok(Self {
            scheme,
            grammar,
            bits,
        })
    }

    /// Parses an ASCII string of `0`/`1`.
    pub fn from_bit_string(grammar: Grammar, scheme: Scheme, s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidArgument(format!(
                    "bit strings hold only 0/1, found `{other}`"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_bits(grammar, scheme, bits)
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn grammar(&self) -> Grammar {
        self.grammar
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn to_bit_string(&self) -> String {
        self.bits.iter().map(|b| if *b { '1' } else { '0' }).collect()
    }

    pub fn to_ints(&self) -> Vec<u8> {
        self.bits.iter().map(|b| u8::from(*b)).collect()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|b| f64::from(u8::from(*b))).collect()
    }

    /// Bitwise OR of two targets of the same kind.
    pub fn or(&self, other: &MetaTarget) -> Result<MetaTarget> {
        if self.scheme != other.scheme || self.grammar != other.grammar {
            return Err(Error::InvalidArgument(
                "cannot OR meta-targets of different kinds".into(),
            ));
        }
        Ok(MetaTarget {
            scheme: self.scheme,
            grammar: self.grammar,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect(),
        })
    }
}

impl fmt::Display for MetaTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bit_string())
    }
}

/// Multi-hot encoding: each rule sets its relation, attribute (and object)
/// slots; rules are OR-ed together.
pub fn encode_dense(s: &AbstractStructure) -> Result<MetaTarget> {
    if s.is_empty() {
        return Err(Error::EmptyStructure);
    }
    let mut bits = vec![false; s.grammar.dense_len()];
    for r in s.rules() {
        for slot in r.dense_slots() {
            bits[slot] = true;
        }
    }
    MetaTarget::from_bits(s.grammar, Scheme::Dense, bits)
}

/// One-hot per rule over [`enumerate_rule_space`], OR-ed together.
pub fn encode_sparse(s: &AbstractStructure) -> Result<MetaTarget> {
    if s.is_empty() {
        return Err(Error::EmptyStructure);
    }
    let mut bits = vec![false; s.grammar.rule_space_size()];
    for r in s.rules() {
        bits[r.sparse_index()] = true;
    }
    MetaTarget::from_bits(s.grammar, Scheme::Sparse, bits)
}

pub fn encode(s: &AbstractStructure, scheme: Scheme) -> Result<MetaTarget> {
    match scheme {
        Scheme::Dense => encode_dense(s),
        Scheme::Sparse => encode_sparse(s),
    }
}

/// Inverse of [`encode_sparse`].
pub fn decode_sparse(m: &MetaTarget) -> Result<AbstractStructure> {
    if m.scheme != Scheme::Sparse {
        return Err(Error::DenseNotInvertible);
    }
    let space = enumerate_rule_space(m.grammar);
    let rules = m
        .bits
        .iter()
        .zip(space)
        .filter_map(|(bit, rule)| bit.then_some(rule));
    AbstractStructure::new(m.grammar, rules)
}

/// Two distinct structures of at most two rules with identical dense
/// encodings, found by exhaustive search (singletons first, then pairs, in
/// rule-space order).
pub fn find_dense_collision(grammar: Grammar) -> (AbstractStructure, AbstractStructure) {
    let space = enumerate_rule_space(grammar);
    let mut candidates: Vec<Vec<Rule>> = space.iter().map(|r| vec![*r]).collect();
    for i in 0..space.len() {
        for j in i + 1..space.len() {
            candidates.push(vec![space[i], space[j]]);
        }
    }
    let mut seen: HashMap<Vec<bool>, AbstractStructure> = HashMap::new();
    for rules in candidates {
        let s = AbstractStructure::new(grammar, rules).expect("rule space entries are valid");
        let bits = encode_dense(&s).expect("nonempty").bits;
        if let Some(prev) = seen.get(&bits) {
            return (prev.clone(), s);
        }
        seen.insert(bits, s);
    }
    unreachable!("both grammars have dense collisions among two-rule structures")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(r: TripleRelation, o: ObjectKind, a: TripleAttribute) -> Rule {
        Rule::triple(r, o, a)
    }

    #[test]
    fn rule_space_sizes() {
        assert_eq!(enumerate_rule_space(Grammar::TripleStyle).len(), 50);
        assert_eq!(enumerate_rule_space(Grammar::PairStyle).len(), 38);
    }

    #[test]
    fn rule_space_has_no_duplicates_and_matches_index() {
        for g in Grammar::ALL {
            let space = enumerate_rule_space(g);
            let set: BTreeSet<_> = space.iter().collect();
            assert_eq!(set.len(), space.len());
            for (i, r) in space.iter().enumerate() {
                assert_eq!(r.sparse_index(), i, "{r}");
            }
        }
    }

    #[test]
    fn arithmetic_type_rejected() {
        assert!(Rule::pair(PairRelation::Arithmetic, PairAttribute::Type).is_err());
        assert!("[Arithmetic,Type]".parse::<Rule>().is_err());
    }

    #[test]
    fn dense_worked_example() {
        use ObjectKind::*;
        use TripleAttribute as A;
        use TripleRelation as R;
        let or_rule = AbstractStructure::new(Grammar::TripleStyle, [t(R::Or, Shape, A::Type)]).unwrap();
        let and_rule =
            AbstractStructure::new(Grammar::TripleStyle, [t(R::And, Line, A::Color)]).unwrap();
        let both = or_rule.union(&and_rule).unwrap();
        assert_eq!(encode_dense(&or_rule).unwrap().to_bit_string(), "100000100100");
        assert_eq!(encode_dense(&and_rule).unwrap().to_bit_string(), "011000000010");
        assert_eq!(encode_dense(&both).unwrap().to_bit_string(), "111000100110");
    }

    #[test]
    fn dense_pair_slots() {
        let s = AbstractStructure::new(
            Grammar::PairStyle,
            [Rule::pair(PairRelation::Progression, PairAttribute::Color).unwrap()],
        )
        .unwrap();
        assert_eq!(encode_dense(&s).unwrap().to_bit_string(), "010000001");
    }

    #[test]
    fn sparse_popcount_and_roundtrip() {
        let space = enumerate_rule_space(Grammar::PairStyle);
        let s = AbstractStructure::new(Grammar::PairStyle, [space[3], space[20], space[37]]).unwrap();
        let m = encode_sparse(&s).unwrap();
        assert_eq!(m.popcount(), 3);
        assert_eq!(decode_sparse(&m).unwrap(), s);
    }

    #[test]
    fn decode_rejects_dense_and_zero() {
        let s = AbstractStructure::new(
            Grammar::TripleStyle,
            [t(TripleRelation::And, ObjectKind::Shape, TripleAttribute::Position)],
        )
        .unwrap();
        assert!(matches!(
            decode_sparse(&encode_dense(&s).unwrap()),
            Err(Error::DenseNotInvertible)
        ));
        let zero = MetaTarget::from_bits(Grammar::TripleStyle, Scheme::Sparse, vec![false; 50]).unwrap();
        assert!(matches!(decode_sparse(&zero), Err(Error::EmptyStructure)));
    }

    #[test]
    fn empty_structure_rejected() {
        assert!(matches!(
            AbstractStructure::new(Grammar::PairStyle, []),
            Err(Error::EmptyStructure)
        ));
    }

    #[test]
    fn collision_example_from_both_orders() {
        use ObjectKind::*;
        use TripleAttribute as A;
        use TripleRelation as R;
        let a = AbstractStructure::new(
            Grammar::TripleStyle,
            [t(R::Or, Shape, A::Type), t(R::And, Line, A::Color)],
        )
        .unwrap();
        let b = AbstractStructure::new(
            Grammar::TripleStyle,
            [t(R::Or, Shape, A::Color), t(R::And, Line, A::Type)],
        )
        .unwrap();
        assert_eq!(encode_dense(&a).unwrap(), encode_dense(&b).unwrap());
        assert_ne!(encode_sparse(&a).unwrap(), encode_sparse(&b).unwrap());
    }

    #[test]
    fn found_collisions_are_genuine() {
        for g in Grammar::ALL {
            let (a, b) = find_dense_collision(g);
            assert_ne!(a, b);
            assert!(a.len() <= 2 && b.len() <= 2);
            assert_eq!(encode_dense(&a).unwrap(), encode_dense(&b).unwrap());
            assert_ne!(encode_sparse(&a).unwrap(), encode_sparse(&b).unwrap());
        }
    }

    #[test]
    fn rule_text_roundtrip() {
        for g in Grammar::ALL {
            for r in enumerate_rule_space(g) {
                assert_eq!(r.to_string().parse::<Rule>().unwrap(), r);
            }
        }
        assert_eq!(
            "[consistent union, shape, number]".parse::<Rule>().unwrap(),
            t(TripleRelation::ConsistentUnion, ObjectKind::Shape, TripleAttribute::Number)
        );
    }

    #[test]
    fn structure_limit_enforced() {
        let space = enumerate_rule_space(Grammar::TripleStyle);
        assert!(AbstractStructure::new(Grammar::TripleStyle, space[..5].to_vec()).is_err());
        assert!(AbstractStructure::new(Grammar::TripleStyle, space[..4].to_vec()).is_ok());
    }
}
