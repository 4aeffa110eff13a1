//! Cost functionals: tree costs (worst and expected), separation and
//! total costs of test sequences, and object routing.

use std::fmt;

use num_rational::BigRational;
use num_traits::Zero;

use crate::instance::{ClassId, Instance, ObjectId, Outcome, SubsetMask, TestId};
use crate::tree::{DecisionTree, Node, NodeId};

/// An ordered, duplicate-free list of test ids, optionally restricted
/// to a subset of objects. Stars and sigmas are computed on the
/// restriction (the full object set by default).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TestSequence {
    tests: Vec<TestId>,
    restriction: Option<SubsetMask>,
}

impl TestSequence {
    pub fn new(tests: Vec<TestId>) -> Result<TestSequence, CostError> {
        for (i, t) in tests.iter().enumerate() {
            if tests[..i].contains(t) {
                return Err(CostError::DuplicateTest { test: *t });
            }
        }
        Ok(TestSequence { tests, restriction: None })
    }

    pub fn restricted_to(mut self, objects: SubsetMask) -> TestSequence {
        self.restriction = Some(objects);
        self
    }

    pub fn tests(&self) -> &[TestId] {
        &self.tests
    }

    pub fn len(&self) -> usize {
        self.tests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tests.is_empty()
    }

    pub fn object_set(&self, instance: &Instance) -> SubsetMask {
        self.restriction.unwrap_or_else(|| instance.full_mask())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CostError {
    EmptySequence,
    DuplicateTest { test: TestId },
    MissingBranch { object: ObjectId, node: NodeId, outcome: Outcome },
}

impl fmt::Display for CostError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostError::EmptySequence => write!(f, "sequence has no tests"),
            CostError::DuplicateTest { test } => write!(f, "test {test} appears twice"),
            CostError::MissingBranch { object, node, outcome } => {
                write!(f, "object {object} has no branch for outcome {outcome} at node {node}")
            }
        }
    }
}

impl std::error::Error for CostError {}

/// Worst and expected testing cost of a tree, with per-object path
/// costs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostReport {
    pub worst: u64,
    pub expected: BigRational,
    pub per_object: Vec<u64>,
}

/// Where routing an object through a tree ends up.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Classification {
    pub class: ClassId,
    pub cost: u64,
    pub path: Vec<TestId>,
}

/// Routes an object from the root by its test outcomes, returning the
/// leaf class, the summed path cost, and the tests applied.
pub fn classify(
    tree: &DecisionTree,
    instance: &Instance,
    object: ObjectId,
) -> Result<Classification, CostError> {
    let mut node = tree.root();
    let mut cost = 0u64;
    let mut path = Vec::new();
    loop {
        match tree.node(node) {
            Node::Leaf { class, .. } => {
                return Ok(Classification { class: *class, cost, path });
            }
            Node::Test { test, children } => {
                let outcome = instance.outcome(*test, object);
                match children.get(&outcome) {
                    Some(&child) => {
                        cost += instance.cost(*test);
                        path.push(*test);
                        node = child;
                    }
                    None => return Err(CostError::MissingBranch { object, node, outcome }),
                }
            }
        }
    }
}

/// Worst and expected testing cost of a tree over an instance.
pub fn tree_costs(tree: &DecisionTree, instance: &Instance) -> Result<CostReport, CostError> {
    let mut per_object = Vec::with_capacity(instance.num_objects());
    let mut worst = 0u64;
    let mut expected = BigRational::zero();
    for object in 0..instance.num_objects() {
        let c = classify(tree, instance, object)?.cost;
        worst = worst.max(c);
        expected += instance.prob(object) * BigRational::from_integer(c.into());
        per_object.push(c);
    }
    Ok(CostReport { worst, expected, per_object })
}

/// The index i(x) of the first test in the sequence that covers x
/// (x in sigma), with the final index as fallback for objects only
/// covered by the last test or never covered at all.
fn coverage_index(sigmas: &[SubsetMask], object: ObjectId) -> usize {
    let q = sigmas.len();
    for (j, sigma) in sigmas.iter().enumerate().take(q - 1) {
        if sigma.contains(object) {
            return j;
        }
    }
    q - 1
}

fn sequence_sigmas(instance: &Instance, seq: &TestSequence) -> Vec<SubsetMask> {
    let ground = seq.object_set(instance);
    seq.tests().iter().map(|&t| instance.star_and_sigma(t, ground).1).collect()
}

/// Separation cost: each object pays the cumulative cost of the prefix
/// ending at the first test that covers it; objects not covered before
/// the last test pay the full sequence cost.
pub fn sepcost(instance: &Instance, seq: &TestSequence) -> Result<BigRational, CostError> {
    if seq.is_empty() {
        return Err(CostError::EmptySequence);
    }
    let ground = seq.object_set(instance);
    let sigmas = sequence_sigmas(instance, seq);
    let prefix: Vec<u64> = seq
        .tests()
        .iter()
        .scan(0u64, |acc, &t| {
            *acc += instance.cost(t);
            Some(*acc)
        })
        .collect();
    let mut total = BigRational::zero();
    for object in ground.iter() {
        let i = coverage_index(&sigmas, object);
        total += instance.prob(object) * BigRational::from_integer(prefix[i].into());
    }
    Ok(total)
}

/// Separation cost variant where objects never covered by the sequence
/// are charged `k` instead of the full sequence cost. The empty
/// sequence charges every object `k`.
pub fn sepcost_k(instance: &Instance, seq: &TestSequence, k: &BigRational) -> BigRational {
    let ground = seq.object_set(instance);
    let sigmas = sequence_sigmas(instance, seq);
    let covered = sigmas.iter().fold(SubsetMask::EMPTY, |acc, &s| acc | s);
    let prefix: Vec<u64> = seq
        .tests()
        .iter()
        .scan(0u64, |acc, &t| {
            *acc += instance.cost(t);
            Some(*acc)
        })
        .collect();
    let mut total = BigRational::zero();
    for object in ground.iter() {
        if covered.contains(object) {
            let i = coverage_index(&sigmas, object);
            total += instance.prob(object) * BigRational::from_integer(prefix[i].into());
        } else {
            total += instance.prob(object) * k;
        }
    }
    total
}

/// Total cost of a sequence.
pub fn totcost(instance: &Instance, seq: &TestSequence) -> u64 {
    seq.tests().iter().map(|&t| instance.cost(t)).sum()
}

/// True iff every cross-class pair of the sequence's object set has
/// some test that does not place both endpoints in its star cell.
pub fn sequence_covers_all_pairs(instance: &Instance, seq: &TestSequence) -> bool {
    let ground = seq.object_set(instance);
    let stars: Vec<SubsetMask> =
        seq.tests().iter().map(|&t| instance.star_and_sigma(t, ground).0).collect();
    let ids = ground.ids();
    for i in 0..ids.len() {
        for j in (i + 1)..ids.len() {
            let (a, b) = (ids[i], ids[j]);
            if instance.class_of(a) == instance.class_of(b) {
                continue;
            }
            let covered = stars.iter().any(|s| !(s.contains(a) && s.contains(b)));
            if !covered {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples;
    use num_bigint::BigInt;
    use std::collections::BTreeMap;

    fn ratio(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn five_object_tree() -> DecisionTree {
        let nodes = vec![
            Node::Test { test: 1, children: BTreeMap::from([(0, 1), (1, 2)]) },
            Node::Leaf { class: 1, objects: SubsetMask::from_ids([2]) },
            Node::Test { test: 2, children: BTreeMap::from([(0, 3), (1, 4)]) },
            Node::Leaf { class: 2, objects: SubsetMask::from_ids([3, 4]) },
            Node::Test { test: 0, children: BTreeMap::from([(0, 5), (1, 6)]) },
            Node::Leaf { class: 0, objects: SubsetMask::from_ids([0]) },
            Node::Leaf { class: 0, objects: SubsetMask::from_ids([1]) },
        ];
        DecisionTree::new(nodes, 0, Vec::new())
    }

    /// Direct per-object simulation of the separation cost, independent
    /// of the sigma-mask implementation.
    fn simulate_sepcost(instance: &Instance, seq: &TestSequence) -> BigRational {
        let ground = seq.object_set(instance);
        let q = seq.len();
        let mut total = BigRational::zero();
        for object in ground.iter() {
            let mut i = q;
            for (j, &t) in seq.tests().iter().enumerate().take(q - 1) {
                let (_, sigma) = instance.star_and_sigma(t, ground);
                if sigma.contains(object) {
                    i = j + 1;
                    break;
                }
            }
            let paid: u64 = seq.tests()[..i].iter().map(|&t| instance.cost(t)).sum();
            total += instance.prob(object) * BigRational::from_integer(paid.into());
        }
        total
    }

    #[test]
    fn classify_single_leaf_tree_costs_nothing() {
        let objects = vec![
            crate::instance::ObjectRecord { id: 0, class: 0, prob: ratio(1, 2) },
            crate::instance::ObjectRecord { id: 1, class: 0, prob: ratio(1, 2) },
        ];
        let tests = vec![crate::instance::TestRecord { id: 0, cost: 1, outcomes: vec![0, 1] }];
        let inst = Instance::new(1, objects, tests).unwrap();
        let tree = DecisionTree::leaf(0, inst.full_mask());
        let c = classify(&tree, &inst, 0).unwrap();
        assert_eq!((c.class, c.cost, c.path), (0, 0, vec![]));
    }

    #[test]
    fn deepest_path_costs_six() {
        let inst = samples::five_objects();
        let tree = five_object_tree();
        let c = classify(&tree, &inst, 1).unwrap();
        assert_eq!(c.cost, 1 + 3 + 2);
        assert_eq!(c.path, vec![1, 2, 0]);
    }

    #[test]
    fn every_object_classifies_to_its_true_class() {
        let inst = samples::five_objects();
        let tree = five_object_tree();
        for object in 0..inst.num_objects() {
            let c = classify(&tree, &inst, object).unwrap();
            assert_eq!(c.class, inst.class_of(object), "object {object}");
        }
    }

    #[test]
    fn five_object_tree_costs_match_the_grouped_sum() {
        let inst = samples::five_objects();
        let report = tree_costs(&five_object_tree(), &inst).unwrap();
        assert_eq!(report.worst, 6);
        assert_eq!(report.expected, ratio(49, 10));
        assert_eq!(report.per_object, vec![6, 6, 1, 4, 4]);
    }

    #[test]
    fn expected_cost_recomputes_from_per_object_costs() {
        let inst = samples::five_objects();
        let report = tree_costs(&five_object_tree(), &inst).unwrap();
        let recomputed: BigRational = (0..inst.num_objects())
            .map(|o| inst.prob(o) * BigRational::from_integer(report.per_object[o].into()))
            .sum();
        assert_eq!(report.expected, recomputed);
    }

    #[test]
    fn single_test_sequence_charges_everyone_its_cost() {
        let inst = samples::five_objects();
        let seq = TestSequence::new(vec![2]).unwrap();
        assert_eq!(sepcost(&inst, &seq).unwrap(), ratio(3, 1));
    }

    #[test]
    fn object_covered_by_the_first_test_pays_only_it() {
        // Sequence (t1 cost 1, t2 cost 3): object 2 is in sigma(t1).
        let inst = samples::five_objects();
        let seq = TestSequence::new(vec![1, 2]).unwrap();
        let (_, sigma) = inst.star_and_sigma(1, inst.full_mask());
        assert!(sigma.contains(2));
        // Objects 3 and 4 are covered by t2 (last test): they pay 1+3.
        // Objects 0 and 1 are never covered: they also pay 1+3.
        let expected = inst.prob(2) * ratio(1, 1)
            + (inst.prob(0) + inst.prob(1) + inst.prob(3) + inst.prob(4)) * ratio(4, 1);
        assert_eq!(sepcost(&inst, &seq).unwrap(), expected);
    }

    #[test]
    fn sepcost_matches_direct_simulation() {
        let inst = samples::five_objects();
        for tests in [vec![0, 1, 2], vec![2, 0], vec![1, 0, 2], vec![2, 1]] {
            let seq = TestSequence::new(tests).unwrap();
            assert_eq!(sepcost(&inst, &seq).unwrap(), simulate_sepcost(&inst, &seq));
        }
    }

    #[test]
    fn sepcost_of_empty_sequence_is_an_error() {
        let inst = samples::five_objects();
        let seq = TestSequence::new(vec![]).unwrap();
        assert_eq!(sepcost(&inst, &seq), Err(CostError::EmptySequence));
    }

    #[test]
    fn sepcost_k_of_empty_sequence_charges_k() {
        let inst = samples::five_objects();
        let seq = TestSequence::new(vec![]).unwrap();
        let k = ratio(7, 2);
        assert_eq!(sepcost_k(&inst, &seq, &k), k);
    }

    #[test]
    fn object_covered_only_by_the_last_test_pays_the_same_either_way() {
        let inst = samples::five_objects();
        // t1 covers object 2; t2 covers objects 3 and 4 as its sigma.
        let seq = TestSequence::new(vec![1, 2]).unwrap();
        let k = BigRational::from_integer(totcost(&inst, &seq).into());
        // With K equal to the total cost, covered-by-last and uncovered
        // objects pay the full prefix in both functionals.
        assert_eq!(sepcost(&inst, &seq).unwrap(), sepcost_k(&inst, &seq, &k));
    }

    #[test]
    fn sepcost_k_with_large_k_dominates() {
        let inst = samples::five_objects();
        let seq = TestSequence::new(vec![1]).unwrap();
        let k = ratio(100, 1);
        assert!(sepcost_k(&inst, &seq, &k) > sepcost(&inst, &seq).unwrap());
    }

    #[test]
    fn totcost_sums_the_costs() {
        let inst = samples::five_objects();
        assert_eq!(totcost(&inst, &TestSequence::new(vec![]).unwrap()), 0);
        assert_eq!(totcost(&inst, &TestSequence::new(vec![0, 1, 2]).unwrap()), 6);
    }

    #[test]
    fn all_tests_cover_all_pairs() {
        let inst = samples::five_objects();
        let seq = TestSequence::new(vec![0, 1, 2]).unwrap();
        assert!(sequence_covers_all_pairs(&inst, &seq));
    }

    #[test]
    fn empty_sequence_covers_nothing() {
        let inst = samples::five_objects();
        let seq = TestSequence::new(vec![]).unwrap();
        assert!(!sequence_covers_all_pairs(&inst, &seq));
    }

    #[test]
    fn coverage_check_matches_exhaustive_pair_scan() {
        let inst = samples::five_objects();
        for tests in [vec![1], vec![2], vec![1, 2], vec![0, 2]] {
            let seq = TestSequence::new(tests).unwrap();
            let ground = inst.full_mask();
            let stars: Vec<SubsetMask> =
                seq.tests().iter().map(|&t| inst.star_and_sigma(t, ground).0).collect();
            let ids = ground.ids();
            let mut all = true;
            for i in 0..ids.len() {
                for j in (i + 1)..ids.len() {
                    if inst.class_of(ids[i]) == inst.class_of(ids[j]) {
                        continue;
                    }
                    if stars.iter().all(|s| s.contains(ids[i]) && s.contains(ids[j])) {
                        all = false;
                    }
                }
            }
            assert_eq!(sequence_covers_all_pairs(&inst, &seq), all, "{:?}", seq.tests());
        }
    }

    #[test]
    fn duplicate_tests_are_rejected() {
        assert_eq!(TestSequence::new(vec![1, 2, 1]), Err(CostError::DuplicateTest { test: 1 }));
    }
}
