//! Small built-in instances used in documentation and tests.

use num_bigint::BigInt;
use num_rational::BigRational;

use crate::instance::{Instance, ObjectRecord, TestRecord};

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Five objects in three classes ({0,1}, {2}, {3,4}) probed by three
/// tests of costs 2, 1 and 3. The full set carries eight cross-class
/// pairs. Test 1 isolates object 2, test 2 splits {3,4} from {0,1}, and
/// test 0 tells objects 0 and 1 apart.
pub fn five_objects() -> Instance {
    let objects = vec![
        ObjectRecord { id: 0, class: 0, prob: ratio(1, 5) },
        ObjectRecord { id: 1, class: 0, prob: ratio(2, 5) },
        ObjectRecord { id: 2, class: 1, prob: ratio(1, 10) },
        ObjectRecord { id: 3, class: 2, prob: ratio(3, 20) },
        ObjectRecord { id: 4, class: 2, prob: ratio(3, 20) },
    ];
    let tests = vec![
        TestRecord { id: 0, cost: 2, outcomes: vec![0, 1, 0, 0, 0] },
        TestRecord { id: 1, cost: 1, outcomes: vec![1, 1, 0, 1, 1] },
        TestRecord { id: 2, cost: 3, outcomes: vec![1, 1, 0, 0, 0] },
    ];
    Instance::new(3, objects, tests).expect("sample instance is valid")
}

/// Two objects in two classes, separable by both tests; test 1 is the
/// cheaper of the two.
pub fn two_objects() -> Instance {
    let objects = vec![
        ObjectRecord { id: 0, class: 0, prob: ratio(1, 2) },
        ObjectRecord { id: 1, class: 1, prob: ratio(1, 2) },
    ];
    let tests = vec![
        TestRecord { id: 0, cost: 3, outcomes: vec![0, 1] },
        TestRecord { id: 1, cost: 1, outcomes: vec![1, 0] },
    ];
    Instance::new(2, objects, tests).expect("sample instance is valid")
}
