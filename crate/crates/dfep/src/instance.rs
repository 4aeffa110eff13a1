//! Instance data model: objects with class labels and exact rational
//! probabilities, tests with outcome vectors and integer costs, and the
//! pair-counting / outcome-partition machinery built on top of them.

use std::fmt;
use std::ops::{BitAnd, BitOr};

use num_rational::BigRational;
use num_traits::Zero;

pub type ObjectId = usize;
pub type TestId = usize;
pub type ClassId = usize;
pub type Outcome = u32;

/// Hard cap on instance size: subsets are bit-indexed in a single word.
pub const MAX_OBJECTS: usize = 64;

/// Bit-indexed subset of object ids. Bits at positions at or beyond the
/// instance's object count are always zero.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct SubsetMask(u64);

impl SubsetMask {
    pub const EMPTY: SubsetMask = SubsetMask(0);

    pub fn full(n: usize) -> Self {
        assert!(n <= MAX_OBJECTS);
        if n == MAX_OBJECTS {
            SubsetMask(u64::MAX)
        } else {
            SubsetMask((1u64 << n) - 1)
        }
    }

    pub fn singleton(id: ObjectId) -> Self {
        assert!(id < MAX_OBJECTS);
        SubsetMask(1u64 << id)
    }

    pub fn from_ids<I: IntoIterator<Item = ObjectId>>(ids: I) -> Self {
        let mut m = SubsetMask::EMPTY;
        for id in ids {
            m.insert(id);
        }
        m
    }

    pub fn from_bits(bits: u64) -> Self {
        SubsetMask(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn contains(self, id: ObjectId) -> bool {
        id < MAX_OBJECTS && self.0 & (1u64 << id) != 0
    }

    pub fn insert(&mut self, id: ObjectId) {
        assert!(id < MAX_OBJECTS);
        self.0 |= 1u64 << id;
    }

    pub fn remove(&mut self, id: ObjectId) {
        if id < MAX_OBJECTS {
            self.0 &= !(1u64 << id);
        }
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn minus(self, other: SubsetMask) -> SubsetMask {
        SubsetMask(self.0 & !other.0)
    }

    pub fn is_subset_of(self, other: SubsetMask) -> bool {
        self.0 & !other.0 == 0
    }

    /// Iterates member object ids in increasing order.
    pub fn iter(self) -> impl Iterator<Item = ObjectId> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let id = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(id)
            }
        })
    }

    pub fn ids(self) -> Vec<ObjectId> {
        self.iter().collect()
    }
}

impl BitAnd for SubsetMask {
    type Output = SubsetMask;
    fn bitand(self, rhs: SubsetMask) -> SubsetMask {
        SubsetMask(self.0 & rhs.0)
    }
}

impl BitOr for SubsetMask {
    type Output = SubsetMask;
    fn bitor(self, rhs: SubsetMask) -> SubsetMask {
        SubsetMask(self.0 | rhs.0)
    }
}

impl fmt::Debug for SubsetMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// An object with its class label and exact probability.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjectRecord {
    pub id: ObjectId,
    pub class: ClassId,
    pub prob: BigRational,
}

/// A test with its positive integer cost and one outcome per object.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TestRecord {
    pub id: TestId,
    pub cost: u64,
    pub outcomes: Vec<Outcome>,
}

/// Per-class member counts of an object subset.
#[derive(Clone, Debug)]
pub struct ClassCounts {
    counts: Vec<u64>,
    total: u64,
}

impl ClassCounts {
    pub fn of(instance: &Instance, subset: SubsetMask) -> ClassCounts {
        let mut counts = vec![0u64; instance.num_classes()];
        let mut total = 0u64;
        for id in subset.iter() {
            counts[instance.class_of(id)] += 1;
            total += 1;
        }
        ClassCounts { counts, total }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of cross-class pairs, via (|A|^2 - sum n_i^2) / 2.
    pub fn pairs(&self) -> u64 {
        let sq: u64 = self.counts.iter().map(|c| c * c).sum();
        (self.total * self.total - sq) / 2
    }
}

/// How a test splits the cross-class pairs of a subset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairSplit {
    /// Pairs with both endpoints outside the star cell.
    pub kept: u64,
    /// Pairs with exactly one endpoint outside the star cell.
    pub separated: u64,
    /// Pairs with both endpoints inside the star cell.
    pub uncovered: u64,
}

impl PairSplit {
    pub fn covered(&self) -> u64 {
        self.kept + self.separated
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ValidationError {
    NoObjects,
    NoClasses,
    TooManyObjects { count: usize },
    ObjectIdMismatch { position: usize, found: usize },
    TestIdMismatch { position: usize, found: usize },
    ClassOutOfRange { object: ObjectId, class: ClassId },
    EmptyClass { class: ClassId },
    NegativeProbability { object: ObjectId },
    NonUnitProbabilitySum { sum: String },
    NonPositiveCost { test: TestId },
    OutcomeLengthMismatch { test: TestId, len: usize },
    OutcomeOutOfRange { test: TestId, object: ObjectId, value: i64 },
    InseparableCrossClassPair { a: ObjectId, b: ObjectId },
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ValidationError::*;
        match self {
            NoObjects => write!(f, "instance has no objects"),
            NoClasses => write!(f, "instance has no classes"),
            TooManyObjects { count } => {
                write!(f, "instance has {count} objects; at most {MAX_OBJECTS} supported")
            }
            ObjectIdMismatch { position, found } => {
                write!(f, "object at position {position} has id {found}")
            }
            TestIdMismatch { position, found } => {
                write!(f, "test at position {position} has id {found}")
            }
            ClassOutOfRange { object, class } => {
                write!(f, "object {object} has class {class} outside the declared range")
            }
            EmptyClass { class } => write!(f, "class {class} has no objects"),
            NegativeProbability { object } => {
                write!(f, "object {object} has a negative probability")
            }
            NonUnitProbabilitySum { sum } => {
                write!(f, "probabilities sum to {sum}, expected 1")
            }
            NonPositiveCost { test } => write!(f, "test {test} has a non-positive cost"),
            OutcomeLengthMismatch { test, len } => {
                write!(f, "test {test} has {len} outcomes, expected one per object")
            }
            OutcomeOutOfRange { test, object, value } => {
                write!(f, "test {test} assigns object {object} the invalid outcome {value}")
            }
            InseparableCrossClassPair { a, b } => {
                write!(f, "objects {a} and {b} are in different classes but no test separates them")
            }
        }
    }
}

impl std::error::Error for ValidationError {}

/// A validated instance: objects, class partition, tests, probabilities,
/// costs. Construction via [`Instance::new`] checks every invariant and
/// returns the full list of violations on failure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    objects: Vec<ObjectRecord>,
    tests: Vec<TestRecord>,
    num_classes: usize,
    num_outcomes: Outcome,
    // Per test: the nonempty outcome cells over the full object set,
    // sorted by outcome label.
    cells: Vec<Vec<(Outcome, SubsetMask)>>,
}

impl Instance {
    /// Validates the raw records and assembles an instance. On failure
    /// returns every violated invariant, not just the first.
    pub fn new(
        num_classes: usize,
        objects: Vec<ObjectRecord>,
        tests: Vec<TestRecord>,
    ) -> Result<Instance, Vec<ValidationError>> {
        let mut errors = Vec::new();
        let n = objects.len();

        if n == 0 {
            errors.push(ValidationError::NoObjects);
        }
        if num_classes == 0 {
            errors.push(ValidationError::NoClasses);
        }
        if n > MAX_OBJECTS {
            errors.push(ValidationError::TooManyObjects { count: n });
            return Err(errors);
        }

        for (pos, o) in objects.iter().enumerate() {
            if o.id != pos {
                errors.push(ValidationError::ObjectIdMismatch { position: pos, found: o.id });
            }
            if o.class >= num_classes {
                errors.push(ValidationError::ClassOutOfRange { object: pos, class: o.class });
            }
            if o.prob < BigRational::zero() {
                errors.push(ValidationError::NegativeProbability { object: pos });
            }
        }

        let mut class_used = vec![false; num_classes];
        for o in &objects {
            if o.class < num_classes {
                class_used[o.class] = true;
            }
        }
        for (c, used) in class_used.iter().enumerate() {
            if !used {
                errors.push(ValidationError::EmptyClass { class: c });
            }
        }

        let sum: BigRational = objects.iter().map(|o| o.prob.clone()).sum();
        if n > 0 && sum != BigRational::from_integer(1.into()) {
            errors.push(ValidationError::NonUnitProbabilitySum { sum: sum.to_string() });
        }

        for (pos, t) in tests.iter().enumerate() {
            if t.id != pos {
                errors.push(ValidationError::TestIdMismatch { position: pos, found: t.id });
            }
            if t.cost == 0 {
                errors.push(ValidationError::NonPositiveCost { test: pos });
            }
            if t.outcomes.len() != n {
                errors.push(ValidationError::OutcomeLengthMismatch { test: pos, len: t.outcomes.len() });
            }
        }

        // Cross-class separability: every pair of objects in different
        // classes must get different outcomes on some test. Same-class
        // duplicates are fine.
        let rows_ok = tests.iter().all(|t| t.outcomes.len() == n);
        if rows_ok {
            for a in 0..n {
                for b in (a + 1)..n {
                    if objects[a].class == objects[b].class {
                        continue;
                    }
                    let separated = tests.iter().any(|t| t.outcomes[a] != t.outcomes[b]);
                    if !separated {
                        errors.push(ValidationError::InseparableCrossClassPair { a, b });
                    }
                }
            }
        }

        if !errors.is_empty() {
            return Err(errors);
        }

        let num_outcomes = tests
            .iter()
            .flat_map(|t| t.outcomes.iter().copied())
            .max()
            .map_or(1, |m| m + 1);
        let cells = compute_cells(&tests, n);

        Ok(Instance { objects, tests, num_classes, num_outcomes, cells })
    }

    /// Restriction to a subset of objects: objects re-indexed, classes
    /// compacted, probabilities kept as-is (a sub-distribution), tests
    /// kept with their outcome columns restricted. This mirrors how a
    /// decision tree for the full set is also one for any subset, so no
    /// separability re-check is needed.
    pub fn restrict(&self, keep: SubsetMask) -> Instance {
        let ids = keep.ids();
        let mut class_map = vec![usize::MAX; self.num_classes];
        let mut next_class = 0;
        for &id in &ids {
            let c = self.objects[id].class;
            if class_map[c] == usize::MAX {
                class_map[c] = next_class;
                next_class += 1;
            }
        }
        let objects = ids
            .iter()
            .enumerate()
            .map(|(pos, &id)| ObjectRecord {
                id: pos,
                class: class_map[self.objects[id].class],
                prob: self.objects[id].prob.clone(),
            })
            .collect();
        let tests: Vec<TestRecord> = self
            .tests
            .iter()
            .map(|t| TestRecord {
                id: t.id,
                cost: t.cost,
                outcomes: ids.iter().map(|&id| t.outcomes[id]).collect(),
            })
            .collect();
        let cells = compute_cells(&tests, ids.len());
        Instance {
            objects,
            tests,
            num_classes: next_class,
            num_outcomes: self.num_outcomes,
            cells,
        }
    }

    pub fn num_objects(&self) -> usize {
        self.objects.len()
    }

    pub fn num_tests(&self) -> usize {
        self.tests.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_outcomes(&self) -> Outcome {
        self.num_outcomes
    }

    pub fn objects(&self) -> &[ObjectRecord] {
        &self.objects
    }

    pub fn tests(&self) -> &[TestRecord] {
        &self.tests
    }

    pub fn class_of(&self, id: ObjectId) -> ClassId {
        self.objects[id].class
    }

    pub fn prob(&self, id: ObjectId) -> &BigRational {
        &self.objects[id].prob
    }

    pub fn cost(&self, t: TestId) -> u64 {
        self.tests[t].cost
    }

    pub fn outcome(&self, t: TestId, id: ObjectId) -> Outcome {
        self.tests[t].outcomes[id]
    }

    pub fn total_cost(&self) -> u64 {
        self.tests.iter().map(|t| t.cost).sum()
    }

    pub fn full_mask(&self) -> SubsetMask {
        SubsetMask::full(self.objects.len())
    }

    /// p(Q): total probability of a subset.
    pub fn prob_of(&self, subset: SubsetMask) -> BigRational {
        let mut sum = BigRational::zero();
        for id in subset.iter() {
            sum += &self.objects[id].prob;
        }
        sum
    }

    /// P(G): the number of pairs of objects in G from different classes.
    pub fn count_pairs(&self, g: SubsetMask) -> u64 {
        ClassCounts::of(self, g).pairs()
    }

    /// The nonempty outcome cells of test `t` restricted to `g`, sorted
    /// by outcome label. Cells are disjoint and union to `g`.
    pub fn outcome_partition(&self, t: TestId, g: SubsetMask) -> Vec<(Outcome, SubsetMask)> {
        self.cells[t]
            .iter()
            .filter_map(|&(label, cell)| {
                let restricted = cell & g;
                if restricted.is_empty() {
                    None
                } else {
                    Some((label, restricted))
                }
            })
            .collect()
    }

    /// The cell of `t` on `g` with the most pairs (ties broken towards
    /// the lowest outcome label), and its complement within `g`.
    pub fn star_and_sigma(&self, t: TestId, g: SubsetMask) -> (SubsetMask, SubsetMask) {
        let cells = self.outcome_partition(t, g);
        debug_assert!(!cells.is_empty() || g.is_empty());
        if cells.is_empty() {
            return (SubsetMask::EMPTY, SubsetMask::EMPTY);
        }
        let mut star = cells[0].1;
        let mut best = self.count_pairs(star);
        for &(_, cell) in &cells[1..] {
            let p = self.count_pairs(cell);
            if p > best {
                best = p;
                star = cell;
            }
        }
        (star, g.minus(star))
    }

    /// Splits P(G) into kept / separated / uncovered with respect to
    /// test `t`: kept pairs lie inside sigma, uncovered pairs inside the
    /// star cell, separated pairs straddle the two.
    pub fn pair_tripartition(&self, t: TestId, g: SubsetMask) -> PairSplit {
        let (star, sigma) = self.star_and_sigma(t, g);
        let total = self.count_pairs(g);
        let kept = self.count_pairs(sigma);
        let uncovered = self.count_pairs(star);
        PairSplit { kept, separated: total - kept - uncovered, uncovered }
    }

    /// True when a test splits `g` into at least two nonempty cells.
    pub fn splits(&self, t: TestId, g: SubsetMask) -> bool {
        let mut seen: Option<Outcome> = None;
        for id in g.iter() {
            let o = self.tests[t].outcomes[id];
            match seen {
                None => seen = Some(o),
                Some(prev) if prev != o => return true,
                _ => {}
            }
        }
        false
    }
}

fn compute_cells(tests: &[TestRecord], n: usize) -> Vec<Vec<(Outcome, SubsetMask)>> {
    tests
        .iter()
        .map(|t| {
            let mut map: std::collections::BTreeMap<Outcome, SubsetMask> =
                std::collections::BTreeMap::new();
            for id in 0..n {
                map.entry(t.outcomes[id]).or_insert(SubsetMask::EMPTY).insert(id);
            }
            map.into_iter().collect()
        })
        .collect()
}
