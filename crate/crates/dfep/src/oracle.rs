//! Exact brute-force reference solvers for desk-scale instances:
//! optimal expected/worst-cost trees by subset DP, minimum-cost and
//! minimum-separation-cost covering sequences, and the budgeted
//! coverage optimum. These are the ground truth the test suites
//! compare everything else against.

use std::collections::HashMap;
use std::fmt;

use num_rational::BigRational;
use num_traits::Zero;

use crate::instance::{Instance, SubsetMask, TestId};
use crate::submodular::{SubmodularObjective, Value};
use crate::tree::{DecisionTree, Node};

/// Size guards; solvers refuse larger instances rather than silently
/// truncating.
#[derive(Clone, Copy, Debug)]
pub struct OracleLimits {
    pub max_objects: usize,
    pub max_tests: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits { max_objects: 12, max_tests: 15 }
    }
}

impl OracleLimits {
    /// The widest limits the solvers accept when forced past the
    /// defaults; the covering-sequence DPs still allocate 2^tests
    /// entries, so the ceiling stays firm.
    pub fn forced() -> OracleLimits {
        OracleLimits { max_objects: 26, max_tests: 22 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OracleError {
    InstanceTooLarge { objects: usize, tests: usize },
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleError::InstanceTooLarge { objects, tests } => {
                write!(f, "instance with {objects} objects / {tests} tests exceeds oracle limits")
            }
        }
    }
}

impl std::error::Error for OracleError {}

/// An exact optimum with a witness tree.
#[derive(Clone, Debug)]
pub struct TreeOpt<V> {
    pub value: V,
    pub tree: DecisionTree,
    pub explored_states: usize,
}

/// An exact optimum with a witness sequence of tests.
#[derive(Clone, Debug)]
pub struct SeqOpt<V> {
    pub value: V,
    pub sequence: Vec<TestId>,
    pub explored_states: usize,
}

fn check_objects(instance: &Instance, limits: &OracleLimits) -> Result<(), OracleError> {
    if instance.num_objects() > limits.max_objects {
        return Err(OracleError::InstanceTooLarge {
            objects: instance.num_objects(),
            tests: instance.num_tests(),
        });
    }
    Ok(())
}

fn check_tests(instance: &Instance, limits: &OracleLimits) -> Result<(), OracleError> {
    if instance.num_tests() > limits.max_tests {
        return Err(OracleError::InstanceTooLarge {
            objects: instance.num_objects(),
            tests: instance.num_tests(),
        });
    }
    Ok(())
}

// The covering-sequence oracles index cross-class pairs in a 128-bit
// word.
fn check_pair_width(instance: &Instance) -> Result<(), OracleError> {
    if instance.count_pairs(instance.full_mask()) > 128 {
        return Err(OracleError::InstanceTooLarge {
            objects: instance.num_objects(),
            tests: instance.num_tests(),
        });
    }
    Ok(())
}

/// Minimum expected testing cost over all decision trees, by memoized
/// recursion over object subsets: a subset with no pairs costs nothing;
/// otherwise pay cost(t) * p(G) for the best properly-splitting test t
/// plus the optimal costs of its cells. Ties go to the lowest test id.
pub fn opt_expected(
    instance: &Instance,
    limits: &OracleLimits,
) -> Result<TreeOpt<BigRational>, OracleError> {
    check_objects(instance, limits)?;
    let mut memo: HashMap<u64, (BigRational, Option<TestId>)> = HashMap::new();
    let value = expected_rec(instance, instance.full_mask(), &mut memo);
    let explored = memo.len();
    let tree = reconstruct_tree(instance, instance.full_mask(), &|g| memo[&g.bits()].1);
    Ok(TreeOpt { value, tree, explored_states: explored })
}

fn expected_rec(
    instance: &Instance,
    g: SubsetMask,
    memo: &mut HashMap<u64, (BigRational, Option<TestId>)>,
) -> BigRational {
    if let Some((v, _)) = memo.get(&g.bits()) {
        return v.clone();
    }
    if instance.count_pairs(g) == 0 {
        memo.insert(g.bits(), (BigRational::zero(), None));
        return BigRational::zero();
    }
    let p_g = instance.prob_of(g);
    let mut best: Option<(BigRational, TestId)> = None;
    for t in 0..instance.num_tests() {
        if !instance.splits(t, g) {
            continue;
        }
        let mut candidate = BigRational::from_integer(instance.cost(t).into()) * &p_g;
        for (_, cell) in instance.outcome_partition(t, g) {
            candidate += expected_rec(instance, cell, memo);
        }
        match &best {
            Some((v, _)) if *v <= candidate => {}
            _ => best = Some((candidate, t)),
        }
    }
    let (value, test) = best.expect("a separable subset with pairs has a splitting test");
    memo.insert(g.bits(), (value.clone(), Some(test)));
    value
}

/// Minimum worst-case testing cost, same recursion with cost(t) plus
/// the worst child.
pub fn opt_worst(instance: &Instance, limits: &OracleLimits) -> Result<TreeOpt<u64>, OracleError> {
    check_objects(instance, limits)?;
    let mut memo: HashMap<u64, (u64, Option<TestId>)> = HashMap::new();
    let value = worst_rec(instance, instance.full_mask(), &mut memo);
    let explored = memo.len();
    let tree = reconstruct_tree(instance, instance.full_mask(), &|g| memo[&g.bits()].1);
    Ok(TreeOpt { value, tree, explored_states: explored })
}

fn worst_rec(
    instance: &Instance,
    g: SubsetMask,
    memo: &mut HashMap<u64, (u64, Option<TestId>)>,
) -> u64 {
    if let Some((v, _)) = memo.get(&g.bits()) {
        return *v;
    }
    if instance.count_pairs(g) == 0 {
        memo.insert(g.bits(), (0, None));
        return 0;
    }
    let mut best: Option<(u64, TestId)> = None;
    for t in 0..instance.num_tests() {
        if !instance.splits(t, g) {
            continue;
        }
        let mut deepest = 0u64;
        for (_, cell) in instance.outcome_partition(t, g) {
            deepest = deepest.max(worst_rec(instance, cell, memo));
        }
        let candidate = instance.cost(t) + deepest;
        match best {
            Some((v, _)) if v <= candidate => {}
            _ => best = Some((candidate, t)),
        }
    }
    let (value, test) = best.expect("a separable subset with pairs has a splitting test");
    memo.insert(g.bits(), (value, Some(test)));
    value
}

/// Rebuilds the witness tree from per-subset argmin choices.
fn reconstruct_tree(
    instance: &Instance,
    root_set: SubsetMask,
    choice: &dyn Fn(SubsetMask) -> Option<TestId>,
) -> DecisionTree {
    let mut nodes = Vec::new();
    build_witness(instance, root_set, choice, &mut nodes);
    DecisionTree::new(nodes, 0, Vec::new())
}

fn build_witness(
    instance: &Instance,
    g: SubsetMask,
    choice: &dyn Fn(SubsetMask) -> Option<TestId>,
    nodes: &mut Vec<Node>,
) -> usize {
    let id = nodes.len();
    match choice(g) {
        None => {
            let class = instance.class_of(g.iter().next().expect("nonempty subset"));
            nodes.push(Node::Leaf { class, objects: g });
        }
        Some(t) => {
            nodes.push(Node::Test { test: t, children: Default::default() });
            let mut children = std::collections::BTreeMap::new();
            for (label, cell) in instance.outcome_partition(t, g) {
                let child = build_witness(instance, cell, choice, nodes);
                children.insert(label, child);
            }
            nodes[id] = Node::Test { test: t, children };
        }
    }
    id
}

/// Pair-coverage bitmask machinery shared by the covering-sequence
/// oracles: cross-class pairs are indexed, and each test covers the
/// pairs it does not bury inside its star cell.
struct PairTable {
    full: u128,
    per_test: Vec<u128>,
    sigmas: Vec<SubsetMask>,
}

fn pair_table(instance: &Instance) -> PairTable {
    let ground = instance.full_mask();
    let ids = ground.ids();
    let mut pairs = Vec::new();
    for i in 0..ids.len() {
        for j in (i + 1)..ids.len() {
            if instance.class_of(ids[i]) != instance.class_of(ids[j]) {
                pairs.push((ids[i], ids[j]));
            }
        }
    }
    assert!(pairs.len() <= 128, "pair bitmask overflow");
    let mut per_test = Vec::with_capacity(instance.num_tests());
    let mut sigmas = Vec::with_capacity(instance.num_tests());
    for t in 0..instance.num_tests() {
        let (star, sigma) = instance.star_and_sigma(t, ground);
        let mut mask = 0u128;
        for (k, &(a, b)) in pairs.iter().enumerate() {
            if !(star.contains(a) && star.contains(b)) {
                mask |= 1u128 << k;
            }
        }
        per_test.push(mask);
        sigmas.push(sigma);
    }
    let full = if pairs.is_empty() { 0 } else { (1u128 << pairs.len()) - 1 };
    PairTable { full, per_test, sigmas }
}

/// Minimum total cost of a set of tests covering all cross-class
/// pairs, by subset enumeration. The witness lists the tests in
/// increasing id order (any order attains the same total cost).
pub fn totcost_star(instance: &Instance, limits: &OracleLimits) -> Result<SeqOpt<u64>, OracleError> {
    check_tests(instance, limits)?;
    check_pair_width(instance)?;
    let table = pair_table(instance);
    let m = instance.num_tests();
    let mut best: Option<(u64, u32)> = None;
    for subset in 0u32..(1u32 << m) {
        let mut covered = 0u128;
        let mut cost = 0u64;
        for t in 0..m {
            if subset & (1 << t) != 0 {
                covered |= table.per_test[t];
                cost += instance.cost(t);
            }
        }
        if covered == table.full {
            match best {
                Some((c, _)) if c <= cost => {}
                _ => best = Some((cost, subset)),
            }
        }
    }
    let (value, subset) = best.expect("all tests together cover every pair");
    let sequence = (0..m).filter(|t| subset & (1 << t) != 0).collect();
    Ok(SeqOpt { value, sequence, explored_states: 1usize << m })
}

/// Minimum separation cost over all pair-covering sequences: a DP over
/// test subsets where appending test t last charges the subset's full
/// cost to the objects t newly covers; objects never covered pay the
/// full cost of the final subset.
pub fn sepcost_star(
    instance: &Instance,
    limits: &OracleLimits,
) -> Result<SeqOpt<BigRational>, OracleError> {
    check_tests(instance, limits)?;
    check_pair_width(instance)?;
    let table = pair_table(instance);
    let m = instance.num_tests();
    let size = 1usize << m;

    let mut subset_cost = vec![0u64; size];
    let mut covered_objs = vec![SubsetMask::EMPTY; size];
    let mut covered_pairs = vec![0u128; size];
    for subset in 1..size {
        let t = subset.trailing_zeros() as usize;
        let rest = subset & (subset - 1);
        subset_cost[subset] = subset_cost[rest] + instance.cost(t);
        covered_objs[subset] = covered_objs[rest] | table.sigmas[t];
        covered_pairs[subset] = covered_pairs[rest] | table.per_test[t];
    }

    // g[A]: cheapest way to order A, counting only objects covered by A.
    let mut g: Vec<Option<BigRational>> = vec![None; size];
    let mut parent: Vec<Option<TestId>> = vec![None; size];
    g[0] = Some(BigRational::zero());
    for subset in 1..size {
        let mut best: Option<(BigRational, TestId)> = None;
        for t in 0..m {
            if subset & (1 << t) == 0 {
                continue;
            }
            let prev = subset & !(1 << t);
            let Some(prev_val) = &g[prev] else { continue };
            let newly = table.sigmas[t].minus(covered_objs[prev]);
            let candidate = prev_val
                + BigRational::from_integer(subset_cost[subset].into())
                    * instance.prob_of(newly);
            match &best {
                Some((v, _)) if *v <= candidate => {}
                _ => best = Some((candidate, t)),
            }
        }
        if let Some((v, t)) = best {
            g[subset] = Some(v);
            parent[subset] = Some(t);
        }
    }

    let full_objs = instance.full_mask();
    let mut best: Option<(BigRational, usize)> = None;
    for subset in 0..size {
        if covered_pairs[subset] != table.full {
            continue;
        }
        let Some(val) = &g[subset] else { continue };
        let uncovered = full_objs.minus(covered_objs[subset]);
        let candidate = val
            + BigRational::from_integer(subset_cost[subset].into()) * instance.prob_of(uncovered);
        match &best {
            Some((v, _)) if *v <= candidate => {}
            _ => best = Some((candidate, subset)),
        }
    }
    let (value, mut subset) = best.expect("all tests together cover every pair");
    let mut sequence = Vec::new();
    while subset != 0 {
        let t = parent[subset].expect("reachable subset has a parent");
        sequence.push(t);
        subset &= !(1 << t);
    }
    sequence.reverse();
    Ok(SeqOpt { value, sequence, explored_states: size })
}

/// Exhaustive maximum of a coverage objective over all test subsets
/// within the budget.
pub fn budgeted_submodular_opt(
    objective: &SubmodularObjective<'_>,
    budget: u64,
    limits: &OracleLimits,
) -> Result<SeqOpt<Value>, OracleError> {
    let instance = objective.instance();
    check_tests(instance, limits)?;
    let m = instance.num_tests();
    let mut best: Option<(Value, u32)> = None;
    for subset in 0u32..(1u32 << m) {
        let cost: u64 =
            (0..m).filter(|t| subset & (1 << t) != 0).map(|t| instance.cost(t)).sum();
        if cost > budget {
            continue;
        }
        let tests: Vec<TestId> = (0..m).filter(|t| subset & (1 << t) != 0).collect();
        let value = objective.evaluate(&tests);
        let better = match &best {
            None => true,
            Some((v, _)) => value.as_ratio() > v.as_ratio(),
        };
        if better {
            best = Some((value, subset));
        }
    }
    let (value, subset) = best.expect("the empty set is always feasible");
    let sequence = (0..m).filter(|t| subset & (1 << t) != 0).collect();
    Ok(SeqOpt { value, sequence, explored_states: 1usize << m })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::{sepcost, tree_costs, TestSequence};
    use crate::instance::{ObjectRecord, TestRecord};
    use crate::samples;
    use crate::submodular::ObjectiveKind;
    use num_bigint::BigInt;

    fn ratio(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn limits() -> OracleLimits {
        OracleLimits::default()
    }

    fn single_class_instance() -> Instance {
        let objects = (0..3)
            .map(|id| ObjectRecord { id, class: 0, prob: ratio(1, 3) })
            .collect();
        let tests = vec![TestRecord { id: 0, cost: 2, outcomes: vec![0, 1, 0] }];
        Instance::new(1, objects, tests).unwrap()
    }

    #[test]
    fn single_class_optima_are_zero() {
        let inst = single_class_instance();
        assert_eq!(opt_expected(&inst, &limits()).unwrap().value, BigRational::zero());
        assert_eq!(opt_worst(&inst, &limits()).unwrap().value, 0);
        assert_eq!(totcost_star(&inst, &limits()).unwrap().value, 0);
        assert_eq!(sepcost_star(&inst, &limits()).unwrap().value, BigRational::zero());
    }

    #[test]
    fn witnesses_reevaluate_to_the_reported_optima() {
        let inst = samples::five_objects();
        let e = opt_expected(&inst, &limits()).unwrap();
        let report = tree_costs(&e.tree, &inst).unwrap();
        assert_eq!(report.expected, e.value);
        e.tree.verify(&inst).unwrap();

        let w = opt_worst(&inst, &limits()).unwrap();
        let report = tree_costs(&w.tree, &inst).unwrap();
        assert_eq!(report.worst, w.value);
        w.tree.verify(&inst).unwrap();

        let t = totcost_star(&inst, &limits()).unwrap();
        let seq = TestSequence::new(t.sequence.clone()).unwrap();
        assert_eq!(crate::costs::totcost(&inst, &seq), t.value);
        assert!(crate::costs::sequence_covers_all_pairs(&inst, &seq));

        let s = sepcost_star(&inst, &limits()).unwrap();
        let seq = TestSequence::new(s.sequence.clone()).unwrap();
        assert!(crate::costs::sequence_covers_all_pairs(&inst, &seq));
        assert_eq!(sepcost(&inst, &seq).unwrap(), s.value);
    }

    #[test]
    fn oracle_values_are_invariant_under_reordering() {
        let inst = samples::five_objects();
        // Reverse objects and tests, rebuilding records so ids match
        // positions again.
        let n = inst.num_objects();
        let perm: Vec<usize> = (0..n).rev().collect();
        let objects = perm
            .iter()
            .enumerate()
            .map(|(pos, &old)| ObjectRecord {
                id: pos,
                class: inst.class_of(old),
                prob: inst.prob(old).clone(),
            })
            .collect();
        let tests = (0..inst.num_tests())
            .rev()
            .enumerate()
            .map(|(pos, old)| TestRecord {
                id: pos,
                cost: inst.cost(old),
                outcomes: perm.iter().map(|&o| inst.outcome(old, o)).collect(),
            })
            .collect();
        let permuted = Instance::new(inst.num_classes(), objects, tests).unwrap();
        assert_eq!(
            opt_expected(&inst, &limits()).unwrap().value,
            opt_expected(&permuted, &limits()).unwrap().value
        );
        assert_eq!(
            opt_worst(&inst, &limits()).unwrap().value,
            opt_worst(&permuted, &limits()).unwrap().value
        );
    }

    #[test]
    fn single_covering_test_sepcost_is_its_cost() {
        let objects = vec![
            ObjectRecord { id: 0, class: 0, prob: ratio(1, 2) },
            ObjectRecord { id: 1, class: 1, prob: ratio(1, 2) },
        ];
        let tests = vec![TestRecord { id: 0, cost: 4, outcomes: vec![0, 1] }];
        let inst = Instance::new(2, objects, tests).unwrap();
        let s = sepcost_star(&inst, &limits()).unwrap();
        assert_eq!(s.value, ratio(4, 1));
        let t = totcost_star(&inst, &limits()).unwrap();
        assert_eq!(t.value, 4);
    }

    #[test]
    fn sepcost_dp_matches_factorial_enumeration() {
        let inst = samples::five_objects();
        let dp = sepcost_star(&inst, &limits()).unwrap();

        // Enumerate every ordering of every pair-covering subset.
        let m = inst.num_tests();
        let mut best: Option<BigRational> = None;
        for subset in 1u32..(1 << m) {
            let tests: Vec<TestId> = (0..m).filter(|t| subset & (1 << t) != 0).collect();
            let mut perm = tests.clone();
            permute(&mut perm, 0, &mut |order| {
                let seq = TestSequence::new(order.to_vec()).unwrap();
                if crate::costs::sequence_covers_all_pairs(&inst, &seq) {
                    let v = sepcost(&inst, &seq).unwrap();
                    if best.as_ref().is_none_or(|b| v < *b) {
                        best = Some(v);
                    }
                }
            });
        }
        assert_eq!(dp.value, best.unwrap());
    }

    fn permute(items: &mut Vec<TestId>, k: usize, visit: &mut impl FnMut(&[TestId])) {
        if k == items.len() {
            visit(items);
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            permute(items, k + 1, visit);
            items.swap(k, i);
        }
    }

    #[test]
    fn budgeted_optimum_is_monotone_in_the_budget() {
        let inst = samples::five_objects();
        let obj = SubmodularObjective::new(&inst, ObjectiveKind::PairCoverage);
        let mut last = BigRational::zero();
        for budget in 0..=inst.total_cost() {
            let r = budgeted_submodular_opt(&obj, budget, &limits()).unwrap();
            let v = r.value.as_ratio();
            assert!(v >= last, "budget {budget}");
            last = v;
        }
    }

    #[test]
    fn budgeted_optimum_boundary_budgets() {
        let inst = samples::five_objects();
        let obj = SubmodularObjective::new(&inst, ObjectiveKind::PairCoverage);
        let zero = budgeted_submodular_opt(&obj, 0, &limits()).unwrap();
        assert!(zero.value.is_zero());
        let all = budgeted_submodular_opt(&obj, inst.total_cost(), &limits()).unwrap();
        assert_eq!(all.value, Value::Pairs(inst.count_pairs(inst.full_mask())));
    }

    #[test]
    fn oversized_instances_are_refused() {
        let inst = samples::five_objects();
        let tiny = OracleLimits { max_objects: 2, max_tests: 1 };
        assert!(matches!(
            opt_expected(&inst, &tiny),
            Err(OracleError::InstanceTooLarge { .. })
        ));
        assert!(matches!(totcost_star(&inst, &tiny), Err(OracleError::InstanceTooLarge { .. })));
    }
}
