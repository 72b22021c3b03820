//! Fixed-capacity node arena shared by every tree of a forest.

use std::fmt;

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split<F> {
    pub dim: usize,
    pub threshold: F,
    pub left: NodeId,
    pub right: NodeId,
}

impl<F: Scalar> Split<F> {
    /// Child on the side of `value`: `value <= threshold` goes left.
    #[inline]
    pub fn route(&self, value: F) -> NodeId {
        if value <= self.threshold {
            self.left
        } else {
            self.right
        }
    }
}

#[derive(Debug, Clone)]
struct Links<F> {
    split_time: F,
    parent: Option<NodeId>,
    split: Option<Split<F>>,
}

/// Read-only view of one node.
#[derive(Debug, Clone, Copy)]
pub struct MondrianNode<'a, F> {
    pub id: NodeId,
    pub lower: &'a [F],
    pub upper: &'a [F],
    pub label_counts: &'a [u32],
    pub split_time: F,
    pub parent: Option<NodeId>,
    pub split: Option<Split<F>>,
}

impl<F: Scalar> MondrianNode<'_, F> {
    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }

    pub fn split_dim(&self) -> Option<usize> {
        self.split.map(|s| s.dim)
    }

    pub fn split_threshold(&self) -> Option<F> {
        self.split.map(|s| s.threshold)
    }

    pub fn left_child(&self) -> Option<NodeId> {
        self.split.map(|s| s.left)
    }

    pub fn right_child(&self) -> Option<NodeId> {
        self.split.map(|s| s.right)
    }

    pub fn total_count(&self) -> u64 {
        self.label_counts.iter().map(|&c| u64::from(c)).sum()
    }
}

/// Arena of nodes whose total size never exceeds `capacity_bytes`.
#[derive(Debug, Clone)]
pub struct NodePool<F> {
    n_features: usize,
    n_classes: usize,
    capacity_bytes: u64,
    node_size_bytes: u64,
    capacity_nodes: usize,
    links: Vec<Links<F>>,
    lower: Vec<F>,
    upper: Vec<F>,
    counts: Vec<u32>,
}

impl<F: Scalar> NodePool<F> {
    pub fn new(n_features: usize, n_classes: usize, capacity_bytes: u64, node_size_bytes: u64) -> Self {
        let capacity_nodes = (capacity_bytes / node_size_bytes.max(1)).min(u64::from(u32::MAX)) as usize;
        Self {
            n_features,
            n_classes,
            capacity_bytes,
            node_size_bytes,
            capacity_nodes,
            links: Vec::with_capacity(capacity_nodes),
            lower: Vec::with_capacity(capacity_nodes * n_features),
            upper: Vec::with_capacity(capacity_nodes * n_features),
            counts: Vec::with_capacity(capacity_nodes * n_classes),
        }
    }

    pub fn capacity_bytes(&self) -> u64 {
        self.capacity_bytes
    }

    pub fn node_size_bytes(&self) -> u64 {
        self.node_size_bytes
    }

    pub fn capacity_nodes(&self) -> usize {
        self.capacity_nodes
    }

    pub fn allocated(&self) -> usize {
        self.links.len()
    }

    pub fn allocated_bytes(&self) -> u64 {
        self.allocated() as u64 * self.node_size_bytes
    }

    pub fn can_allocate(&self, n: usize) -> bool {
        self.allocated() + n <= self.capacity_nodes
    }

    pub fn is_full(&self) -> bool {
        !self.can_allocate(1)
    }

    /// Appends a leaf with the given bounds, or returns `None` when full.
    pub fn allocate(&mut self, lower: &[F], upper: &[F], split_time: F, parent: Option<NodeId>) -> Option<NodeId> {
        debug_assert_eq!(lower.len(), self.n_features);
        debug_assert_eq!(upper.len(), self.n_features);
        if !self.can_allocate(1) {
            return None;
        }
        let id = NodeId(self.links.len() as u32);
        self.links.push(Links {
            split_time,
            parent,
            split: None,
        });
        self.lower.extend_from_slice(lower);
        self.upper.extend_from_slice(upper);
        self.counts.extend(std::iter::repeat_n(0, self.n_classes));
        Some(id)
    }

    pub fn node(&self, id: NodeId) -> MondrianNode<'_, F> {
        let l = &self.links[id.index()];
        MondrianNode {
            id,
            lower: self.lower(id),
            upper: self.upper(id),
            label_counts: self.counts(id),
            split_time: l.split_time,
            parent: l.parent,
            split: l.split,
        }
    }

    #[inline]
    pub fn lower(&self, id: NodeId) -> &[F] {
        let s = id.index() * self.n_features;
        &self.lower[s..s + self.n_features]
    }

    #[inline]
    pub fn upper(&self, id: NodeId) -> &[F] {
        let s = id.index() * self.n_features;
        &self.upper[s..s + self.n_features]
    }

    #[inline]
    pub fn counts(&self, id: NodeId) -> &[u32] {
        let s = id.index() * self.n_classes;
        &self.counts[s..s + self.n_classes]
    }

    #[inline]
    pub fn split(&self, id: NodeId) -> Option<Split<F>> {
        self.links[id.index()].split
    }

    #[inline]
    pub fn split_time(&self, id: NodeId) -> F {
        self.links[id.index()].split_time
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.links[id.index()].parent
    }

    pub(crate) fn set_lower(&mut self, id: NodeId, dim: usize, value: F) {
        self.lower[id.index() * self.n_features + dim] = value;
    }

    pub(crate) fn set_upper(&mut self, id: NodeId, dim: usize, value: F) {
        self.upper[id.index() * self.n_features + dim] = value;
    }

    pub(crate) fn increment(&mut self, id: NodeId, label: usize) {
        let c = &mut self.counts[id.index() * self.n_classes + label];
        *c = c.saturating_add(1);
    }

    pub(crate) fn set_split(&mut self, id: NodeId, split: Split<F>) {
        self.links[id.index()].split = Some(split);
    }

    pub(crate) fn set_parent(&mut self, id: NodeId, parent: Option<NodeId>) {
        self.links[id.index()].parent = parent;
    }

    /// Points `parent`'s link that currently targets `old` at `new`.
    pub(crate) fn replace_child(&mut self, parent: NodeId, old: NodeId, new: NodeId) {
        if let Some(split) = self.links[parent.index()].split.as_mut() {
            if split.left == old {
                split.left = new;
            } else if split.right == old {
                split.right = new;
            }
        }
    }
}
