//! Decision tree representation: an arena of internal test nodes with
//! outcome-keyed children and leaves holding single-class object sets,
//! plus the per-invocation backbone records the builder attaches.

use std::collections::BTreeMap;
use std::fmt;

use crate::costs::TestSequence;
use crate::instance::{ClassId, Instance, Outcome, SubsetMask, TestId};

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Node {
    Test { test: TestId, children: BTreeMap<Outcome, NodeId> },
    Leaf { class: ClassId, objects: SubsetMask },
}

/// What one invocation of the recursive builder did: the objects it was
/// handed, the budget it computed and the two greedy pick sequences
/// that form its backbone. Base-case invocations carry no budget and
/// empty sequences.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InvocationRecord {
    pub objects: SubsetMask,
    /// P at entry, over `objects`.
    pub pairs: u64,
    pub budget: Option<u64>,
    pub t_a: Vec<TestId>,
    pub t_b: Vec<TestId>,
    /// Pairs of `objects` covered by the concatenated backbone.
    pub pairs_covered: u64,
}

impl InvocationRecord {
    pub fn cost_a(&self, instance: &Instance) -> u64 {
        self.t_a.iter().map(|&t| instance.cost(t)).sum()
    }

    pub fn cost_b(&self, instance: &Instance) -> u64 {
        self.t_b.iter().map(|&t| instance.cost(t)).sum()
    }

    /// The backbone in selection order, restricted to this invocation's
    /// object set.
    pub fn backbone(&self) -> TestSequence {
        let tests: Vec<TestId> = self.t_a.iter().chain(self.t_b.iter()).copied().collect();
        TestSequence::new(tests).expect("backbone tests are distinct").restricted_to(self.objects)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    root: NodeId,
    backbones: Vec<InvocationRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TreeError {
    EmptyLeaf { node: NodeId },
    MixedClassLeaf { node: NodeId },
    WrongLeafClass { node: NodeId },
    LeavesDoNotPartition,
    UnknownTest { node: NodeId, test: TestId },
    RepeatedTestOnPath { test: TestId },
    DanglingChild { node: NodeId, child: NodeId },
    MissingBranch { object: usize, node: NodeId, outcome: Outcome },
    MisroutedObject { object: usize },
}

impl fmt::Display for TreeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use TreeError::*;
        match self {
            EmptyLeaf { node } => write!(f, "leaf {node} has no objects"),
            MixedClassLeaf { node } => write!(f, "leaf {node} holds objects of several classes"),
            WrongLeafClass { node } => write!(f, "leaf {node} is labeled with the wrong class"),
            LeavesDoNotPartition => write!(f, "leaf object sets do not partition the instance"),
            UnknownTest { node, test } => write!(f, "node {node} references unknown test {test}"),
            RepeatedTestOnPath { test } => write!(f, "test {test} repeats on a root-to-leaf path"),
            DanglingChild { node, child } => {
                write!(f, "node {node} links to nonexistent child {child}")
            }
            MissingBranch { object, node, outcome } => {
                write!(f, "object {object} has no branch for outcome {outcome} at node {node}")
            }
            MisroutedObject { object } => {
                write!(f, "object {object} is routed to a leaf that does not list it")
            }
        }
    }
}

impl std::error::Error for TreeError {}

impl DecisionTree {
    pub fn new(nodes: Vec<Node>, root: NodeId, backbones: Vec<InvocationRecord>) -> DecisionTree {
        DecisionTree { nodes, root, backbones }
    }

    /// A tree that is a single leaf.
    pub fn leaf(class: ClassId, objects: SubsetMask) -> DecisionTree {
        DecisionTree { nodes: vec![Node::Leaf { class, objects }], root: 0, backbones: Vec::new() }
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn backbones(&self) -> &[InvocationRecord] {
        &self.backbones
    }

    /// The backbone test sequence of one recorded invocation.
    pub fn backbone_sequence(&self, invocation: usize) -> TestSequence {
        self.backbones[invocation].backbone()
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Structural validity against an instance: every leaf nonempty and
    /// single-class with a matching label, leaves partition the object
    /// set, no test repeats on a path, and routing every object by its
    /// outcomes reaches the leaf that lists it.
    pub fn verify(&self, instance: &Instance) -> Result<(), TreeError> {
        let mut seen = SubsetMask::EMPTY;
        let mut covered = 0usize;
        self.walk(instance, self.root, &mut Vec::new(), &mut seen, &mut covered)?;
        if seen != instance.full_mask() || covered != instance.num_objects() {
            return Err(TreeError::LeavesDoNotPartition);
        }
        for object in 0..instance.num_objects() {
            let mut node = self.root;
            loop {
                match &self.nodes[node] {
                    Node::Leaf { objects, .. } => {
                        if !objects.contains(object) {
                            return Err(TreeError::MisroutedObject { object });
                        }
                        break;
                    }
                    Node::Test { test, children } => {
                        let outcome = instance.outcome(*test, object);
                        match children.get(&outcome) {
                            Some(&child) => node = child,
                            None => {
                                return Err(TreeError::MissingBranch { object, node, outcome })
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn walk(
        &self,
        instance: &Instance,
        node: NodeId,
        path: &mut Vec<TestId>,
        seen: &mut SubsetMask,
        covered: &mut usize,
    ) -> Result<(), TreeError> {
        match &self.nodes[node] {
            Node::Leaf { class, objects } => {
                if objects.is_empty() {
                    return Err(TreeError::EmptyLeaf { node });
                }
                let mut classes = objects.iter().map(|id| instance.class_of(id));
                let first = classes.next().unwrap();
                if classes.any(|c| c != first) {
                    return Err(TreeError::MixedClassLeaf { node });
                }
                if first != *class {
                    return Err(TreeError::WrongLeafClass { node });
                }
                if !(*seen & *objects).is_empty() {
                    return Err(TreeError::LeavesDoNotPartition);
                }
                *seen = *seen | *objects;
                *covered += objects.len();
                Ok(())
            }
            Node::Test { test, children } => {
                if *test >= instance.num_tests() {
                    return Err(TreeError::UnknownTest { node, test: *test });
                }
                if path.contains(test) {
                    return Err(TreeError::RepeatedTestOnPath { test: *test });
                }
                path.push(*test);
                for (_, &child) in children {
                    if child >= self.nodes.len() {
                        return Err(TreeError::DanglingChild { node, child });
                    }
                    self.walk(instance, child, path, seen, covered)?;
                }
                path.pop();
                Ok(())
            }
        }
    }

    /// Graphviz rendering: internal nodes show the test id and cost,
    /// edges carry outcome labels, leaves show the class.
    pub fn to_dot(&self, instance: &Instance) -> String {
        let mut out = String::from("digraph decision_tree {\n");
        for (id, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Test { test, .. } => {
                    out.push_str(&format!(
                        "  n{id} [label=\"t{test} (c={})\"];\n",
                        instance.cost(*test)
                    ));
                }
                Node::Leaf { class, .. } => {
                    out.push_str(&format!("  n{id} [label=\"class {class}\", shape=box];\n"));
                }
            }
        }
        for (id, node) in self.nodes.iter().enumerate() {
            if let Node::Test { children, .. } = node {
                for (outcome, child) in children {
                    out.push_str(&format!("  n{id} -> n{child} [label=\"{outcome}\"];\n"));
                }
            }
        }
        out.push_str("}\n");
        out
    }
}
