//! The instruction concept space, its surface grammar, and zero-shot splits.
//!
//! A concept is a fully specified instruction tuple
//! `(verb, color, size, weight, shape)`; the full space has
//! 3 * 4 * 2 * 2 * 4 = 192 elements. Instructions are flat strings like
//! `"pull the big red square twice"`; `twice` is a surface form of
//! `weight = heavy` for push/pull verbs, while `walk` uses the plain
//! `heavy` adjective.

use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Verb {
    Walk,
    Push,
    Pull,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Color {
    Red,
    Blue,
    Yellow,
    Green,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Size {
    Small,
    Big,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Weight {
    Light,
    Heavy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Shape {
    Square,
    Circle,
    Cylinder,
    Diamond,
}

macro_rules! enum_slot {
    ($ty:ident, $($variant:ident => $name:literal),+) => {
        impl $ty {
            pub const ALL: &'static [$ty] = &[$($ty::$variant),+];

            pub fn index(self) -> usize {
                Self::ALL.iter().position(|v| *v == self).unwrap()
            }

            pub fn from_index(i: usize) -> Option<$ty> {
                Self::ALL.get(i).copied()
            }

            pub fn name(self) -> &'static str {
                match self {
                    $($ty::$variant => $name),+
                }
            }

            pub fn from_name(s: &str) -> Option<$ty> {
                match s {
                    $($name => Some($ty::$variant),)+
                    _ => None,
                }
            }
        }
    };
}

enum_slot!(Verb, Walk => "walk", Push => "push", Pull => "pull");
enum_slot!(Color, Red => "red", Blue => "blue", Yellow => "yellow", Green => "green");
enum_slot!(Size, Small => "small", Big => "big");
enum_slot!(Weight, Light => "light", Heavy => "heavy");
enum_slot!(Shape, Square => "square", Circle => "circle", Cylinder => "cylinder", Diamond => "diamond");

/// Slot cardinalities in canonical order (verb, color, size, weight, shape).
pub const SLOT_CARDINALITIES: [usize; 5] = [3, 4, 2, 2, 4];
/// Number of slots in a concept.
pub const NUM_SLOTS: usize = 5;
/// Width of the one-hot block encoding: 3 + 4 + 2 + 2 + 4.
pub const CONCEPT_BITS: usize = 15;
/// Size of the full concept space.
pub const NUM_CONCEPTS: usize = 192;

/// A fully specified instruction: what to do, to which object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Concept {
    pub verb: Verb,
    pub color: Color,
    pub size: Size,
    pub weight: Weight,
    pub shape: Shape,
}

impl Concept {
    pub fn new(verb: Verb, color: Color, size: Size, weight: Weight, shape: Shape) -> Self {
        Concept { verb, color, size, weight, shape }
    }

    /// All 192 concepts in a fixed order (verb major, shape minor).
    pub fn all() -> Vec<Concept> {
        let mut out = Vec::with_capacity(NUM_CONCEPTS);
        for &verb in Verb::ALL {
            for &color in Color::ALL {
                for &size in Size::ALL {
                    for &weight in Weight::ALL {
                        for &shape in Shape::ALL {
                            out.push(Concept { verb, color, size, weight, shape });
                        }
                    }
                }
            }
        }
        out
    }

    /// Per-slot value indices in canonical order.
    pub fn slot_indices(&self) -> [usize; NUM_SLOTS] {
        [
            self.verb.index(),
            self.color.index(),
            self.size.index(),
            self.weight.index(),
            self.shape.index(),
        ]
    }

    /// Position of this concept in [`Concept::all`].
    pub fn index(&self) -> usize {
        let [v, c, s, w, h] = self.slot_indices();
        (((v * 4 + c) * 2 + s) * 2 + w) * 4 + h
    }

    pub fn from_index(i: usize) -> Option<Concept> {
        if i >= NUM_CONCEPTS {
            return None;
        }
        let h = i % 4;
        let w = (i / 4) % 2;
        let s = (i / 8) % 2;
        let c = (i / 16) % 4;
        let v = i / 64;
        Some(Concept {
            verb: Verb::from_index(v)?,
            color: Color::from_index(c)?,
            size: Size::from_index(s)?,
            weight: Weight::from_index(w)?,
            shape: Shape::from_index(h)?,
        })
    }

    /// One-hot block encoding, 15 bits wide, exactly 5 bits set.
    pub fn encode(&self) -> [f64; CONCEPT_BITS] {
        let mut bits = [0.0; CONCEPT_BITS];
        let idx = self.slot_indices();
        let mut offset = 0;
        for (slot, &card) in SLOT_CARDINALITIES.iter().enumerate() {
            bits[offset + idx[slot]] = 1.0;
            offset += card;
        }
        bits
    }

    /// The (verb, weight) task class this concept belongs to.
    pub fn task_class(&self) -> TaskClass {
        TaskClass { verb: self.verb, weight: self.weight }
    }
}

/// Canonical log form: slot names joined by `/`, e.g. `pull/red/big/heavy/square`.
impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}/{}",
            self.verb.name(),
            self.color.name(),
            self.size.name(),
            self.weight.name(),
            self.shape.name()
        )
    }
}

/// A (verb, weight) pair; the unit of curriculum sampling and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TaskClass {
    pub verb: Verb,
    pub weight: Weight,
}

impl TaskClass {
    pub const ALL: [TaskClass; 6] = [
        TaskClass { verb: Verb::Walk, weight: Weight::Light },
        TaskClass { verb: Verb::Walk, weight: Weight::Heavy },
        TaskClass { verb: Verb::Push, weight: Weight::Light },
        TaskClass { verb: Verb::Push, weight: Weight::Heavy },
        TaskClass { verb: Verb::Pull, weight: Weight::Light },
        TaskClass { verb: Verb::Pull, weight: Weight::Heavy },
    ];

    pub fn name(&self) -> String {
        format!("{}_{}", self.verb.name(), self.weight.name())
    }

    pub fn from_name(s: &str) -> Option<TaskClass> {
        let (v, w) = s.split_once('_')?;
        Some(TaskClass { verb: Verb::from_name(v)?, weight: Weight::from_name(w)? })
    }
}

impl fmt::Display for TaskClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitKind {
    None,
    Visual,
    Numeral,
}

impl SplitKind {
    pub fn name(self) -> &'static str {
        match self {
            SplitKind::None => "none",
            SplitKind::Visual => "visual",
            SplitKind::Numeral => "numeral",
        }
    }

    pub fn from_name(s: &str) -> Option<SplitKind> {
        match s {
            "none" => Some(SplitKind::None),
            "visual" => Some(SplitKind::Visual),
            "numeral" => Some(SplitKind::Numeral),
            _ => None,
        }
    }
}

/// A partition of the concept space into train and held-out test concepts.
#[derive(Debug, Clone)]
pub struct SplitSpec {
    pub kind: SplitKind,
    pub train_concepts: Vec<Concept>,
    pub test_concepts: Vec<Concept>,
    test_mask: [bool; NUM_CONCEPTS],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Test,
}

impl SplitSpec {
    pub fn is_test(&self, c: &Concept) -> bool {
        self.test_mask[c.index()]
    }

    pub fn is_train(&self, c: &Concept) -> bool {
        !self.is_test(c)
    }

    pub fn concepts(&self, mode: Mode) -> &[Concept] {
        match mode {
            Mode::Train => &self.train_concepts,
            Mode::Test => &self.test_concepts,
        }
    }

    /// Task classes that occur in the given mode's concept set.
    pub fn classes(&self, mode: Mode) -> Vec<TaskClass> {
        TaskClass::ALL
            .iter()
            .copied()
            .filter(|cl| self.concepts(mode).iter().any(|c| c.task_class() == *cl))
            .collect()
    }
}

/// Build one of the three concept splits.
///
/// - `visual`: test = every concept with a red square target (12 concepts)
/// - `numeral`: test = every pull-heavy concept (32 concepts)
/// - `none`: everything is a training concept
pub fn make_split(kind: SplitKind) -> SplitSpec {
    let is_test = |c: &Concept| match kind {
        SplitKind::None => false,
        SplitKind::Visual => c.color == Color::Red && c.shape == Shape::Square,
        SplitKind::Numeral => c.verb == Verb::Pull && c.weight == Weight::Heavy,
    };
    let mut train_concepts = Vec::new();
    let mut test_concepts = Vec::new();
    let mut test_mask = [false; NUM_CONCEPTS];
    for c in Concept::all() {
        if is_test(&c) {
            test_mask[c.index()] = true;
            test_concepts.push(c);
        } else {
            train_concepts.push(c);
        }
    }
    SplitSpec { kind, train_concepts, test_concepts, test_mask }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("unknown token `{0}`")]
    UnknownToken(String),
    #[error("missing {0}")]
    MissingSlot(&'static str),
    #[error("conflicting weight markers")]
    ConflictingWeight,
    #[error("duplicate {0}")]
    DuplicateSlot(&'static str),
}

/// Parse an instruction string into its concept.
///
/// Grammar: `VERB_PHRASE ARTICLE [SIZE] [WEIGHT] COLOR SHAPE ["twice"]` with
/// `VERB_PHRASE` one of `walk to`, `push`, `pull` and `ARTICLE` one of
/// `a`, `the`. `twice` and the `heavy` adjective both mark `weight = heavy`;
/// an instruction with no weight marker is light. At most one weight marker
/// may appear. Size is required.
pub fn parse_instruction(text: &str) -> Result<Concept, ParseError> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let mut pos = 0;

    let verb = match tokens.first().copied() {
        Some("walk") => {
            if tokens.get(1).copied() != Some("to") {
                return Err(ParseError::MissingSlot("`to` after `walk`"));
            }
            pos = 2;
            Verb::Walk
        }
        Some("push") => {
            pos = 1;
            Verb::Push
        }
        Some("pull") => {
            pos = 1;
            Verb::Pull
        }
        Some(other) => return Err(ParseError::UnknownToken(other.to_string())),
        None => return Err(ParseError::MissingSlot("verb")),
    };

    match tokens.get(pos).copied() {
        Some("a") | Some("the") => pos += 1,
        Some(other) => return Err(ParseError::UnknownToken(other.to_string())),
        None => return Err(ParseError::MissingSlot("article")),
    }

    let mut color = None;
    let mut size = None;
    let mut weight: Option<Weight> = None;
    let mut shape = None;
    for &tok in &tokens[pos..] {
        if let Some(c) = Color::from_name(tok) {
            if color.replace(c).is_some() {
                return Err(ParseError::DuplicateSlot("color"));
            }
        } else if let Some(s) = Size::from_name(tok) {
            if size.replace(s).is_some() {
                return Err(ParseError::DuplicateSlot("size"));
            }
        } else if let Some(w) = Weight::from_name(tok) {
            if weight.replace(w).is_some() {
                return Err(ParseError::ConflictingWeight);
            }
        } else if tok == "twice" {
            if weight.replace(Weight::Heavy).is_some() {
                return Err(ParseError::ConflictingWeight);
            }
        } else if let Some(s) = Shape::from_name(tok) {
            if shape.replace(s).is_some() {
                return Err(ParseError::DuplicateSlot("shape"));
            }
        } else {
            return Err(ParseError::UnknownToken(tok.to_string()));
        }
    }

    Ok(Concept {
        verb,
        color: color.ok_or(ParseError::MissingSlot("color"))?,
        size: size.ok_or(ParseError::MissingSlot("size"))?,
        weight: weight.unwrap_or(Weight::Light),
        shape: shape.ok_or(ParseError::MissingSlot("shape"))?,
    })
}

/// Render the canonical surface form of a concept.
///
/// Adjective order is size, weight, color. Heavy is rendered as a trailing
/// `twice` for push/pull and as the `heavy` adjective for walk; light is
/// never rendered.
pub fn render_instruction(c: &Concept) -> String {
    let mut out = String::new();
    out.push_str(match c.verb {
        Verb::Walk => "walk to the",
        Verb::Push => "push the",
        Verb::Pull => "pull the",
    });
    out.push(' ');
    out.push_str(c.size.name());
    out.push(' ');
    if c.weight == Weight::Heavy && c.verb == Verb::Walk {
        out.push_str("heavy ");
    }
    out.push_str(c.color.name());
    out.push(' ');
    out.push_str(c.shape.name());
    if c.weight == Weight::Heavy && c.verb != Verb::Walk {
        out.push_str(" twice");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_spec_examples() {
        assert_eq!(
            parse_instruction("pull the big red square twice").unwrap(),
            Concept::new(Verb::Pull, Color::Red, Size::Big, Weight::Heavy, Shape::Square)
        );
        assert_eq!(
            parse_instruction("walk to the small red square").unwrap(),
            Concept::new(Verb::Walk, Color::Red, Size::Small, Weight::Light, Shape::Square)
        );
        assert_eq!(
            parse_instruction("push the big heavy green cylinder").unwrap(),
            Concept::new(Verb::Push, Color::Green, Size::Big, Weight::Heavy, Shape::Cylinder)
        );
    }

    #[test]
    fn render_spec_examples() {
        assert_eq!(
            render_instruction(&Concept::new(
                Verb::Push,
                Color::Red,
                Size::Small,
                Weight::Light,
                Shape::Circle
            )),
            "push the small red circle"
        );
        assert_eq!(
            render_instruction(&Concept::new(
                Verb::Pull,
                Color::Blue,
                Size::Big,
                Weight::Heavy,
                Shape::Diamond
            )),
            "pull the big blue diamond twice"
        );
        assert_eq!(
            render_instruction(&Concept::new(
                Verb::Walk,
                Color::Green,
                Size::Small,
                Weight::Heavy,
                Shape::Square
            )),
            "walk to the small heavy green square"
        );
    }

    #[test]
    fn parse_render_roundtrip_exhaustive() {
        let all = Concept::all();
        assert_eq!(all.len(), NUM_CONCEPTS);
        for c in &all {
            let text = render_instruction(c);
            assert_eq!(parse_instruction(&text).unwrap(), *c, "failed on `{text}`");
        }
    }

    #[test]
    fn parse_accepts_indefinite_article_and_explicit_light() {
        assert_eq!(
            parse_instruction("push a small light blue circle").unwrap(),
            Concept::new(Verb::Push, Color::Blue, Size::Small, Weight::Light, Shape::Circle)
        );
    }

    #[test]
    fn parse_errors() {
        assert_eq!(
            parse_instruction("shove the small red square"),
            Err(ParseError::UnknownToken("shove".into()))
        );
        assert_eq!(
            parse_instruction("push the small red frisbee"),
            Err(ParseError::UnknownToken("frisbee".into()))
        );
        assert_eq!(
            parse_instruction("push the red square"),
            Err(ParseError::MissingSlot("size"))
        );
        assert_eq!(
            parse_instruction("push the small red"),
            Err(ParseError::MissingSlot("shape"))
        );
        assert_eq!(
            parse_instruction("push small red square"),
            Err(ParseError::UnknownToken("small".into()))
        );
        assert_eq!(
            parse_instruction("pull the small light red square twice"),
            Err(ParseError::ConflictingWeight)
        );
        assert_eq!(
            parse_instruction("pull the small heavy red square twice"),
            Err(ParseError::ConflictingWeight)
        );
        assert_eq!(
            parse_instruction("push the small big red square"),
            Err(ParseError::DuplicateSlot("size"))
        );
        assert_eq!(parse_instruction(""), Err(ParseError::MissingSlot("verb")));
        assert_eq!(parse_instruction("walk the red square"), Err(ParseError::MissingSlot("`to` after `walk`")));
    }

    #[test]
    fn encode_first_and_last_values() {
        let first = Concept::new(Verb::Walk, Color::Red, Size::Small, Weight::Light, Shape::Square);
        let mut expect = [0.0; CONCEPT_BITS];
        for i in [0, 3, 7, 9, 11] {
            expect[i] = 1.0;
        }
        assert_eq!(first.encode(), expect);

        let last = Concept::new(Verb::Pull, Color::Green, Size::Big, Weight::Heavy, Shape::Diamond);
        let mut expect = [0.0; CONCEPT_BITS];
        for i in [2, 6, 8, 10, 14] {
            expect[i] = 1.0;
        }
        assert_eq!(last.encode(), expect);
    }

    #[test]
    fn encode_has_five_bits_and_is_injective() {
        let mut seen = std::collections::HashSet::new();
        for c in Concept::all() {
            let bits = c.encode();
            assert_eq!(bits.iter().filter(|&&b| b == 1.0).count(), 5);
            assert!(bits.iter().all(|&b| b == 0.0 || b == 1.0));
            let key: Vec<u8> = bits.iter().map(|&b| b as u8).collect();
            assert!(seen.insert(key), "duplicate encoding for {c}");
        }
        assert_eq!(seen.len(), NUM_CONCEPTS);
    }

    #[test]
    fn concept_index_roundtrip() {
        for (i, c) in Concept::all().iter().enumerate() {
            assert_eq!(c.index(), i);
            assert_eq!(Concept::from_index(i).unwrap(), *c);
        }
        assert!(Concept::from_index(NUM_CONCEPTS).is_none());
    }

    #[test]
    fn split_counts() {
        let visual = make_split(SplitKind::Visual);
        assert_eq!(visual.test_concepts.len(), 12);
        assert_eq!(visual.train_concepts.len(), 180);

        let numeral = make_split(SplitKind::Numeral);
        assert_eq!(numeral.test_concepts.len(), 32);
        assert_eq!(numeral.train_concepts.len(), 160);

        let none = make_split(SplitKind::None);
        assert_eq!(none.train_concepts.len(), 192);
        assert_eq!(none.test_concepts.len(), 0);
    }

    #[test]
    fn splits_partition_the_space() {
        for kind in [SplitKind::None, SplitKind::Visual, SplitKind::Numeral] {
            let split = make_split(kind);
            let mut seen = std::collections::HashSet::new();
            for c in split.train_concepts.iter().chain(&split.test_concepts) {
                assert!(seen.insert(c.index()), "{c} in both sets");
            }
            assert_eq!(seen.len(), NUM_CONCEPTS);
            for c in &split.test_concepts {
                assert!(split.is_test(c));
            }
            for c in &split.train_concepts {
                assert!(split.is_train(c));
            }
        }
    }

    #[test]
    fn split_test_membership_matches_definition() {
        let visual = make_split(SplitKind::Visual);
        for c in &visual.test_concepts {
            assert!(c.color == Color::Red && c.shape == Shape::Square);
        }
        let numeral = make_split(SplitKind::Numeral);
        for c in &numeral.test_concepts {
            assert!(c.verb == Verb::Pull && c.weight == Weight::Heavy);
        }
        // numeral training still carries push-heavy and pull-light
        assert!(numeral
            .train_concepts
            .iter()
            .any(|c| c.verb == Verb::Push && c.weight == Weight::Heavy));
        assert!(numeral
            .train_concepts
            .iter()
            .any(|c| c.verb == Verb::Pull && c.weight == Weight::Light));
    }

    #[test]
    fn task_class_names() {
        assert_eq!(TaskClass { verb: Verb::Pull, weight: Weight::Heavy }.name(), "pull_heavy");
        for cl in TaskClass::ALL {
            assert_eq!(TaskClass::from_name(&cl.name()), Some(cl));
        }
    }

    #[test]
    fn tuple_display() {
        let c = Concept::new(Verb::Pull, Color::Red, Size::Big, Weight::Heavy, Shape::Square);
        assert_eq!(c.to_string(), "pull/red/big/heavy/square");
    }
}
