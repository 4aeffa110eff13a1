//! Reproducible instance families: seeded random instances, the
//! identification family whose expected-optimal and worst-optimal
//! trees pull in opposite directions, and the set-cover translation
//! with its cover-extraction inverse.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::costs::{classify, tree_costs};
use crate::instance::{Instance, ObjectId, ObjectRecord, Outcome, TestId, TestRecord};
use crate::tree::DecisionTree;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GenError {
    InvalidParam(String),
    TooLarge { requested: usize, cap: usize },
    SeparabilityUnreachable { attempts: usize },
    InfeasibleCover { element: usize },
    NotACover { missing: Vec<usize> },
    CoverBoundViolated { size: usize },
}

impl fmt::Display for GenError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GenError::InvalidParam(msg) => write!(f, "invalid parameter: {msg}"),
            GenError::TooLarge { requested, cap } => {
                write!(f, "{requested} exceeds the cap of {cap}")
            }
            GenError::SeparabilityUnreachable { attempts } => {
                write!(f, "no separable outcome matrix found in {attempts} attempts")
            }
            GenError::InfeasibleCover { element } => {
                write!(f, "element {element} is not covered by any set")
            }
            GenError::NotACover { missing } => {
                write!(f, "extracted family misses elements {missing:?}")
            }
            GenError::CoverBoundViolated { size } => {
                write!(f, "extracted cover of size {size} exceeds its cost bound")
            }
        }
    }
}

impl std::error::Error for GenError {}

/// How random instance probabilities are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbShape {
    /// Every object gets 1/n.
    Uniform,
    /// Random power-of-two weights, normalized to sum one.
    Dyadic,
    /// Like Dyadic, but one object gets probability zero.
    ZeroSpiked,
}

/// Parameters of the seeded random family. The same parameters always
/// produce the same instance, byte for byte.
#[derive(Clone, Debug)]
pub struct RandomParams {
    pub seed: u64,
    pub num_objects: usize,
    pub num_classes: usize,
    pub num_tests: usize,
    pub num_outcomes: Outcome,
    pub max_cost: u64,
    pub prob_shape: ProbShape,
}

const SEPARABILITY_ATTEMPTS: usize = 1000;

/// Random instance: classes cover every label, costs uniform in
/// [1, max_cost], probabilities per the requested shape, and the
/// outcome matrix redrawn until all cross-class pairs are separable.
pub fn gen_random(params: &RandomParams) -> Result<Instance, GenError> {
    let RandomParams { seed, num_objects: n, num_classes: m, num_tests, num_outcomes, max_cost, prob_shape } =
        *params;
    if n == 0 || m == 0 || num_tests == 0 || num_outcomes == 0 || max_cost == 0 {
        return Err(GenError::InvalidParam("all size parameters must be positive".into()));
    }
    if m > n {
        return Err(GenError::InvalidParam(format!("{m} classes need at least {m} objects")));
    }
    if n > crate::instance::MAX_OBJECTS {
        return Err(GenError::TooLarge { requested: n, cap: crate::instance::MAX_OBJECTS });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Classes: a shuffled prefix guarantees every class is used.
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut classes = vec![0usize; n];
    for (c, &obj) in order.iter().take(m).enumerate() {
        classes[obj] = c;
    }
    for &obj in order.iter().skip(m) {
        classes[obj] = rng.gen_range(0..m);
    }

    let probs = draw_probs(&mut rng, n, prob_shape);
    let costs: Vec<u64> = (0..num_tests).map(|_| rng.gen_range(1..=max_cost)).collect();

    let mut matrix: Option<Vec<Vec<Outcome>>> = None;
    for _ in 0..SEPARABILITY_ATTEMPTS {
        let candidate: Vec<Vec<Outcome>> = (0..num_tests)
            .map(|_| (0..n).map(|_| rng.gen_range(0..num_outcomes)).collect())
            .collect();
        if separable(&classes, &candidate) {
            matrix = Some(candidate);
            break;
        }
    }
    let matrix =
        matrix.ok_or(GenError::SeparabilityUnreachable { attempts: SEPARABILITY_ATTEMPTS })?;

    let objects = (0..n)
        .map(|id| ObjectRecord { id, class: classes[id], prob: probs[id].clone() })
        .collect();
    let tests = matrix
        .into_iter()
        .enumerate()
        .map(|(id, outcomes)| TestRecord { id, cost: costs[id], outcomes })
        .collect();
    Ok(Instance::new(m, objects, tests).expect("generated instance is valid by construction"))
}

fn draw_probs(rng: &mut ChaCha8Rng, n: usize, shape: ProbShape) -> Vec<BigRational> {
    match shape {
        ProbShape::Uniform => {
            vec![BigRational::new(BigInt::one(), BigInt::from(n as i64)); n]
        }
        ProbShape::Dyadic | ProbShape::ZeroSpiked => {
            let mut weights: Vec<u64> =
                (0..n).map(|_| 1u64 << rng.gen_range(0..=6u32)).collect();
            if matches!(shape, ProbShape::ZeroSpiked) && n >= 2 {
                let idx = rng.gen_range(0..n);
                weights[idx] = 0;
            }
            let total: u64 = weights.iter().sum();
            weights
                .into_iter()
                .map(|w| BigRational::new(BigInt::from(w), BigInt::from(total)))
                .collect()
        }
    }
}

fn separable(classes: &[usize], matrix: &[Vec<Outcome>]) -> bool {
    let n = classes.len();
    for a in 0..n {
        for b in (a + 1)..n {
            if classes[a] == classes[b] {
                continue;
            }
            if matrix.iter().all(|row| row[a] == row[b]) {
                return false;
            }
        }
    }
    true
}

const DICHOTOMY_CAP: usize = 10;

/// The identification family on n objects (n a power of two, each its
/// own class) with geometric probabilities 1/2, 1/4, ... (the last two
/// equal) and one unit-cost binary test per nonconstant bitstring.
/// Minimizing expected cost yields a deep skewed tree; minimizing
/// worst cost yields the balanced tree of depth log2 n.
pub fn gen_identification_dichotomy(n: usize) -> Result<Instance, GenError> {
    if n < 2 || !n.is_power_of_two() {
        return Err(GenError::InvalidParam(format!("n must be a power of two >= 2, got {n}")));
    }
    if n > DICHOTOMY_CAP {
        return Err(GenError::TooLarge { requested: n, cap: DICHOTOMY_CAP });
    }
    let objects = (0..n)
        .map(|id| {
            let exp = if id == n - 1 { n - 1 } else { id + 1 };
            ObjectRecord {
                id,
                class: id,
                prob: BigRational::new(BigInt::one(), BigInt::from(1u64 << exp)),
            }
        })
        .collect();
    let num_strings = 1u64 << n;
    let tests = (1..num_strings - 1)
        .enumerate()
        .map(|(id, bits)| TestRecord {
            id,
            cost: 1,
            outcomes: (0..n).map(|i| ((bits >> i) & 1) as Outcome).collect(),
        })
        .collect();
    Ok(Instance::new(n, objects, tests).expect("identification family is valid"))
}

/// A set-cover instance: a universe 0..universe and a family of
/// subsets, as read from the set-cover input format.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetCoverInstance {
    pub universe: usize,
    pub sets: Vec<Vec<usize>>,
}

impl SetCoverInstance {
    /// Every element appears in at least one set.
    pub fn is_feasible(&self) -> bool {
        (0..self.universe).all(|u| self.sets.iter().any(|s| s.contains(&u)))
    }
}

/// A translated set-cover instance together with the bookkeeping
/// needed to pull covers back out of decision trees.
#[derive(Clone, Debug)]
pub struct Reduction {
    pub instance: Instance,
    pub num_universe: usize,
    pub num_sets: usize,
    pub num_classes: usize,
    pub eta: BigRational,
}

impl Reduction {
    /// The distinguished high-probability object.
    pub fn o1(&self) -> ObjectId {
        self.num_universe
    }

    /// The test derived from set `i`.
    pub fn set_test(&self, i: usize) -> TestId {
        i
    }

    /// The extra test that scatters the non-universe objects.
    pub fn tilde_test(&self) -> TestId {
        self.num_sets
    }

    /// Walks the tree path of the distinguished object, collects the
    /// sets of the tests on it, and checks both that they cover the
    /// universe and that the family is small relative to the tree's
    /// costs (at most twice the expected cost, and at most the worst
    /// cost).
    pub fn extract_cover(&self, tree: &DecisionTree) -> Result<Vec<usize>, GenError> {
        let path = classify(tree, &self.instance, self.o1())
            .map_err(|_| GenError::NotACover { missing: (0..self.num_universe).collect() })?
            .path;
        let family: Vec<usize> =
            path.iter().filter(|&&t| t < self.num_sets).map(|&t| t).collect();
        let mut covered = vec![false; self.num_universe];
        for &i in &family {
            for u in 0..self.num_universe {
                // Set test i answers 0 exactly on the members of set i.
                if self.instance.outcome(self.set_test(i), u) == 0 {
                    covered[u] = true;
                }
            }
        }
        let missing: Vec<usize> =
            (0..self.num_universe).filter(|&u| !covered[u]).collect();
        if !missing.is_empty() {
            return Err(GenError::NotACover { missing });
        }
        let report = tree_costs(tree, &self.instance)
            .map_err(|_| GenError::CoverBoundViolated { size: family.len() })?;
        let size = BigRational::from_integer(BigInt::from(family.len() as u64));
        let two = BigRational::from_integer(BigInt::from(2));
        if size > &two * &report.expected || family.len() as u64 > report.worst {
            return Err(GenError::CoverBoundViolated { size: family.len() });
        }
        Ok(family)
    }
}

/// Translates set cover into class identification: universe elements
/// form one class, b-1 extra objects get singleton classes, every set
/// becomes a test answering 0 on its members, and one extra test
/// scatters the added objects except the first. The first added object
/// carries almost all probability, so any good tree must separate it
/// from the universe cheaply, which forces a small cover onto its path.
pub fn gen_setcover_reduction(
    sc: &SetCoverInstance,
    b: usize,
    eta: Option<BigRational>,
) -> Result<Reduction, GenError> {
    if b < 2 {
        return Err(GenError::InvalidParam(format!("b must be at least 2, got {b}")));
    }
    if sc.universe == 0 {
        return Err(GenError::InvalidParam("universe must be nonempty".into()));
    }
    for set in &sc.sets {
        for &u in set {
            if u >= sc.universe {
                return Err(GenError::InvalidParam(format!(
                    "set element {u} outside universe of size {}",
                    sc.universe
                )));
            }
        }
    }
    if let Some(missing) = (0..sc.universe).find(|u| !sc.sets.iter().any(|s| s.contains(u))) {
        return Err(GenError::InfeasibleCover { element: missing });
    }

    let n = sc.universe;
    let others = (n + b - 2) as i64;
    let bound = BigRational::new(BigInt::one(), BigInt::from(2 * others));
    let eta = match eta {
        Some(e) => {
            if e <= BigRational::zero() || e >= bound {
                return Err(GenError::InvalidParam(format!(
                    "eta must lie strictly between 0 and {bound}"
                )));
            }
            e
        }
        None => BigRational::new(BigInt::one(), BigInt::from(2 * others + 2)),
    };

    let total_objects = n + b - 1;
    if total_objects > crate::instance::MAX_OBJECTS {
        return Err(GenError::TooLarge {
            requested: total_objects,
            cap: crate::instance::MAX_OBJECTS,
        });
    }

    let p_o1 = BigRational::one() - BigRational::from_integer(BigInt::from(others)) * &eta;
    let objects = (0..total_objects)
        .map(|id| {
            if id < n {
                ObjectRecord { id, class: 0, prob: eta.clone() }
            } else if id == n {
                ObjectRecord { id, class: 1, prob: p_o1.clone() }
            } else {
                ObjectRecord { id, class: id - n + 1, prob: eta.clone() }
            }
        })
        .collect();

    let mut tests: Vec<TestRecord> = sc
        .sets
        .iter()
        .enumerate()
        .map(|(id, set)| TestRecord {
            id,
            cost: 1,
            outcomes: (0..total_objects)
                .map(|o| if o < n && set.contains(&o) { 0 } else { 1 })
                .collect(),
        })
        .collect();
    // The scatter test: 0 on the universe and the first added object,
    // i-1 on each further added object.
    tests.push(TestRecord {
        id: sc.sets.len(),
        cost: 1,
        outcomes: (0..total_objects)
            .map(|o| if o <= n { 0 } else { (o - n) as Outcome })
            .collect(),
    });

    let instance = Instance::new(b, objects, tests)
        .expect("feasible reductions satisfy cross-class separability");
    Ok(Reduction { instance, num_universe: n, num_sets: sc.sets.len(), num_classes: b, eta })
}
