//! Online Mondrian Forest classifier backed by a fixed-size node pool.
//!
//! Every tree of a forest allocates from the same [`NodePool`]. Once the pool
//! cannot hold another split (two nodes), trees stop growing: blocks still
//! extend and leaves still count labels.
//!
//! Training follows the online Mondrian block-extension scheme. At each node
//! on the sample's path the extension mass of the node's block drives an
//! exponential clock; if it fires before the node's own split time (and before
//! the budget) a new split is inserted above the node, separating the old
//! block from a fresh leaf holding the sample.
//!
//! Prediction smooths label counts from the root down with absolute
//! discounting: a node with counts `c`, `n = sum(c)` and `T` distinct labels
//! turns its parent's distribution `q` into
//! `(c_k - d*[c_k > 0] + d*T*q_k) / n`. The root's parent distribution is
//! uniform, and `base_count` adds that many uniform pseudo-counts at the root.

mod memory;
mod pool;
mod split;

pub use memory::{footprint_bytes, Footprint, NodeSizeModel};
pub use pool::{MondrianNode, NodeId, NodePool, Split};
pub use split::{draw_split_location, draw_split_time, extension, sample_split, SplitProposal};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::instrument::{Counters, Instrument, InstrumentationMode};
use crate::scalar::Scalar;
use crate::vprec::{PrecisionFormat, VprecError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ForestError {
    #[error("invalid forest configuration: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("feature {index} is not finite in the working format ({value})")]
    NonFiniteFeature { index: usize, value: f64 },
    #[error("node bound is not finite in the working format ({value})")]
    NonFiniteBound { value: f64 },
    #[error("non-finite value while computing {context}")]
    NonFiniteValue { context: &'static str },
}

impl ForestError {
    /// True for errors caused by values leaving the representable range.
    pub fn is_overflow(&self) -> bool {
        matches!(
            self,
            ForestError::NonFiniteFeature { .. }
                | ForestError::NonFiniteBound { .. }
                | ForestError::NonFiniteValue { .. }
        )
    }
}

/// Base count, discount and budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparameters {
    pub base_count: f64,
    pub discount: f64,
    pub budget: f64,
}

impl Hyperparameters {
    /// Settings used in the human-activity benchmarks for a given forest size.
    pub fn for_tree_count(n_trees: usize) -> Self {
        let budget = match n_trees {
            0 | 1 => 1.0,
            2..=10 => 0.4,
            _ => 0.2,
        };
        Self {
            base_count: 0.0,
            discount: 1.0,
            budget,
        }
    }
}

/// How pool capacity is converted from bytes to nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StorageModel {
    /// Nodes are sized at binary64 whatever the format, as on hardware
    /// without native support for the reduced format.
    #[default]
    Working,
    /// Floating-point node fields are sized at the mode's format width.
    Packed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub memory_bytes: u64,
    pub base_count: f64,
    pub discount: f64,
    pub budget: f64,
    pub n_features: usize,
    pub n_classes: usize,
    pub seed: u64,
    pub mode: InstrumentationMode,
    pub storage: StorageModel,
}

impl ForestConfig {
    /// Five trees, 3 MB, uninstrumented, seed 0.
    pub fn new(n_features: usize, n_classes: usize) -> Self {
        let hp = Hyperparameters::for_tree_count(5);
        Self {
            n_trees: 5,
            memory_bytes: 3_000_000,
            base_count: hp.base_count,
            discount: hp.discount,
            budget: hp.budget,
            n_features,
            n_classes,
            seed: 0,
            mode: InstrumentationMode::Uninstrumented,
            storage: StorageModel::Working,
        }
    }

    /// Sets the tree count together with its matching hyperparameters.
    pub fn with_trees(mut self, n_trees: usize) -> Self {
        self.n_trees = n_trees;
        self.set_hyperparameters(Hyperparameters::for_tree_count(n_trees));
        self
    }

    pub fn with_memory_bytes(mut self, bytes: u64) -> Self {
        self.memory_bytes = bytes;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_mode(mut self, mode: InstrumentationMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_storage(mut self, storage: StorageModel) -> Self {
        self.storage = storage;
        self
    }

    pub fn with_hyperparameters(mut self, hp: Hyperparameters) -> Self {
        self.set_hyperparameters(hp);
        self
    }

    fn set_hyperparameters(&mut self, hp: Hyperparameters) {
        self.base_count = hp.base_count;
        self.discount = hp.discount;
        self.budget = hp.budget;
    }

    pub fn hyperparameters(&self) -> Hyperparameters {
        Hyperparameters {
            base_count: self.base_count,
            discount: self.discount,
            budget: self.budget,
        }
    }

    pub fn node_size_model(&self) -> NodeSizeModel {
        NodeSizeModel::for_features(self.n_features)
    }

    /// Bytes charged per pool node.
    pub fn node_size_bytes(&self) -> u64 {
        let format = match self.storage {
            StorageModel::Working => PrecisionFormat::DOUBLE,
            StorageModel::Packed => self.mode.format(),
        };
        self.node_size_model().node_bytes(format)
    }

    pub fn validate(&self) -> Result<(), ForestError> {
        let bad = |m: String| Err(ForestError::InvalidConfig(m));
        if self.n_trees == 0 {
            return bad("at least one tree is required".into());
        }
        if self.n_features == 0 || self.n_classes == 0 {
            return bad("feature and class counts must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return bad(format!("discount {} outside [0, 1]", self.discount));
        }
        if !(self.budget > 0.0 && self.budget.is_finite()) {
            return bad(format!("budget {} must be positive", self.budget));
        }
        if !(self.base_count >= 0.0 && self.base_count.is_finite()) {
            return bad(format!("base count {} must be non-negative", self.base_count));
        }
        Ok(())
    }
}

/// Hyperparameters as seen by the classifier, after instrumentation.
#[derive(Debug, Clone, Copy)]
struct Constants<F> {
    budget: F,
    discount: F,
    base_count: F,
    uniform: F,
}

#[derive(Debug, Clone)]
pub struct MondrianForest<F: Scalar> {
    config: ForestConfig,
    inst: Instrument,
    pool: NodePool<F>,
    roots: Vec<Option<NodeId>>,
    rngs: Vec<ChaCha8Rng>,
    consts: Constants<F>,
}

fn nonfinite_value(context: &'static str) -> impl Fn(VprecError) -> ForestError {
    move |_| ForestError::NonFiniteValue { context }
}

#[inline]
fn finite<F: Scalar>(x: Result<F, VprecError>, context: &'static str) -> Result<F, ForestError> {
    match x {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(ForestError::NonFiniteValue { context }),
    }
}

impl<F: Scalar> MondrianForest<F> {
    /// Builds an empty forest. Tree `t` draws from stream `t` of a ChaCha8
    /// generator keyed by `config.seed`.
    pub fn new(config: ForestConfig) -> Result<Self, ForestError> {
        config.validate()?;
        let inst = Instrument::new(config.mode);
        let constant = |x: f64, context| finite(inst.value(F::from_f64_lossy(x)), context);
        let consts = Constants {
            budget: constant(config.budget, "budget")?,
            discount: constant(config.discount, "discount")?,
            base_count: constant(config.base_count, "base count")?,
            uniform: constant(1.0 / config.n_classes as f64, "uniform prior")?,
        };
        let pool = NodePool::new(
            config.n_features,
            config.n_classes,
            config.memory_bytes,
            config.node_size_bytes(),
        );
        let rngs = (0..config.n_trees)
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(t as u64);
                rng
            })
            .collect();
        Ok(Self {
            roots: vec![None; config.n_trees],
            config,
            inst,
            pool,
            rngs,
            consts,
        })
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn pool(&self) -> &NodePool<F> {
        &self.pool
    }

    pub fn root(&self, tree: usize) -> Option<NodeId> {
        self.roots[tree]
    }

    pub fn node(&self, id: NodeId) -> MondrianNode<'_, F> {
        self.pool.node(id)
    }

    pub fn counters(&self) -> Counters {
        self.inst.counters()
    }

    pub fn reset_counters(&self) {
        self.inst.reset_counters();
    }

    /// Budget after instrumentation.
    pub fn effective_budget(&self) -> F {
        self.consts.budget
    }

    /// Footprint of the nodes currently allocated, stored in the mode's format.
    pub fn footprint(&self) -> Footprint {
        Footprint::of_nodes(
            self.config.node_size_model(),
            self.pool.allocated() as u64,
            self.config.mode.format(),
        )
    }

    fn check_features(&self, features: &[f64]) -> Result<(), ForestError> {
        if features.len() != self.config.n_features {
            return Err(ForestError::DimensionMismatch {
                expected: self.config.n_features,
                got: features.len(),
            });
        }
        Ok(())
    }

    /// Converts and (under whole instrumentation) rounds incoming features.
    fn ingest(&self, features: &[f64]) -> Result<Vec<F>, ForestError> {
        self.check_features(features)?;
        features
            .iter()
            .enumerate()
            .map(|(index, &raw)| {
                let non_finite = || ForestError::NonFiniteFeature { index, value: raw };
                let v = self.inst.value(F::from_f64_lossy(raw)).map_err(|_| non_finite())?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(non_finite())
                }
            })
            .collect()
    }

    fn store(&self, x: F) -> Result<F, ForestError> {
        match self.inst.store(x) {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(v) => Err(ForestError::NonFiniteBound {
                value: v.to_f64_lossy(),
            }),
            Err(_) => Err(ForestError::NonFiniteBound {
                value: x.to_f64_lossy(),
            }),
        }
    }

    fn stored(&self, xs: impl Iterator<Item = F>) -> Result<Vec<F>, ForestError> {
        xs.map(|x| self.store(x)).collect()
    }

    /// Trains on one sample: each tree routes it from its root, possibly inserting
    /// a split, and the leaf it ends in counts its label.
    pub fn partial_fit(&mut self, features: &[f64], label: usize) -> Result<(), ForestError> {
        if label >= self.config.n_classes {
            return Err(ForestError::LabelOutOfRange {
                label,
                n_classes: self.config.n_classes,
            });
        }
        let x = self.ingest(features)?;
        let mut ext = Vec::with_capacity(x.len());
        for tree in 0..self.config.n_trees {
            self.extend_tree(tree, &x, label, &mut ext)?;
        }
        Ok(())
    }

    fn extend_tree(&mut self, tree: usize, x: &[F], label: usize, ext: &mut Vec<F>) -> Result<(), ForestError> {
        let Some(root) = self.roots[tree] else {
            let bounds = self.stored(x.iter().copied())?;
            if let Some(id) = self.pool.allocate(&bounds, &bounds, self.consts.budget, None) {
                self.pool.increment(id, label);
                self.roots[tree] = Some(id);
            }
            return Ok(());
        };

        let mut node = root;
        let mut parent_time = F::zero();
        loop {
            let mass = finite(
                extension(self.pool.lower(node), self.pool.upper(node), x, &self.inst, ext),
                "extension mass",
            )?;
            if mass > F::zero() && self.pool.can_allocate(2) {
                let limit = self.pool.split_time(node).min(self.consts.budget);
                let rng = &mut self.rngs[tree];
                let time =
                    draw_split_time(parent_time, mass, rng, &self.inst).map_err(nonfinite_value("split time"))?;
                if time > parent_time && time < limit {
                    let location = draw_split_location(
                        self.pool.lower(node),
                        self.pool.upper(node),
                        x,
                        ext,
                        mass,
                        rng,
                        &self.inst,
                    )
                    .map_err(nonfinite_value("split threshold"))?;
                    if let Some((dim, threshold)) = location {
                        if !threshold.is_finite() {
                            return Err(ForestError::NonFiniteValue {
                                context: "split threshold",
                            });
                        }
                        return self.insert_split_above(tree, node, x, label, dim, threshold, time);
                    }
                }
            }

            self.extend_bounds(node, x)?;
            match self.pool.split(node) {
                None => {
                    self.pool.increment(node, label);
                    return Ok(());
                }
                Some(split) => {
                    parent_time = self.pool.split_time(node);
                    node = split.route(x[split.dim]);
                }
            }
        }
    }

    fn extend_bounds(&mut self, node: NodeId, x: &[F]) -> Result<(), ForestError> {
        for (d, &v) in x.iter().enumerate() {
            if v < self.pool.lower(node)[d] {
                let stored = self.store(v)?;
                self.pool.set_lower(node, d, stored);
            }
            if v > self.pool.upper(node)[d] {
                let stored = self.store(v)?;
                self.pool.set_upper(node, d, stored);
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn insert_split_above(
        &mut self,
        tree: usize,
        node: NodeId,
        x: &[F],
        label: usize,
        dim: usize,
        threshold: F,
        time: F,
    ) -> Result<(), ForestError> {
        let lower = self.stored(self.pool.lower(node).iter().zip(x).map(|(&l, &v)| l.min(v)))?;
        let upper = self.stored(self.pool.upper(node).iter().zip(x).map(|(&u, &v)| u.max(v)))?;
        let point = self.stored(x.iter().copied())?;
        let grandparent = self.pool.parent(node);

        let parent = self
            .pool
            .allocate(&lower, &upper, time, grandparent)
            .expect("pool capacity checked before splitting");
        let leaf = self
            .pool
            .allocate(&point, &point, self.consts.budget, Some(parent))
            .expect("pool capacity checked before splitting");
        self.pool.increment(leaf, label);

        let (left, right) = if x[dim] <= threshold {
            (leaf, node)
        } else {
            (node, leaf)
        };
        self.pool.set_split(
            parent,
            Split {
                dim,
                threshold,
                left,
                right,
            },
        );
        self.pool.set_parent(node, Some(parent));
        match grandparent {
            Some(g) => self.pool.replace_child(g, node, parent),
            None => self.roots[tree] = Some(parent),
        }
        Ok(())
    }

    /// Class distribution averaged over trees.
    pub fn predict_proba(&self, features: &[f64]) -> Result<Vec<F>, ForestError> {
        let x = self.ingest(features)?;
        let k = self.config.n_classes;
        let mut total = vec![F::zero(); k];
        let mut post = vec![F::zero(); k];
        let mut scratch = vec![F::zero(); k];
        for tree in 0..self.config.n_trees {
            self.tree_posterior(tree, &x, &mut post, &mut scratch)?;
            for (t, &p) in total.iter_mut().zip(&post) {
                *t = finite(self.inst.add(*t, p), "forest average")?;
            }
        }
        let n_trees = finite(
            self.inst.value(F::from_f64_lossy(self.config.n_trees as f64)),
            "tree count",
        )?;
        for t in &mut total {
            *t = finite(self.inst.div(*t, n_trees), "forest average")?;
        }
        Ok(total)
    }

    fn tree_posterior(&self, tree: usize, x: &[F], q: &mut [F], p: &mut [F]) -> Result<(), ForestError> {
        q.fill(self.consts.uniform);
        let mut cursor = self.roots[tree];
        let mut is_root = true;
        while let Some(node) = cursor {
            let counts = self.pool.counts(node);
            let n: u64 = counts.iter().map(|&c| u64::from(c)).sum();
            if n > 0 {
                self.smooth(counts, n, is_root, q, p)?;
                q.copy_from_slice(p);
            }
            is_root = false;
            cursor = self.pool.split(node).map(|s| s.route(x[s.dim]));
        }
        Ok(())
    }

    /// Turns the parent distribution `q` into this node's distribution `p`.
    fn smooth(&self, counts: &[u32], n: u64, is_root: bool, q: &[F], p: &mut [F]) -> Result<(), ForestError> {
        const CTX: &str = "posterior";
        let inst = &self.inst;
        let as_value = |c: u64| finite(inst.value(F::from_f64_lossy(c as f64)), CTX);
        let Constants {
            discount, base_count, ..
        } = self.consts;
        let with_base = is_root && base_count > F::zero();

        let distinct = counts.iter().filter(|&&c| c > 0).count() as u64;
        let mut denom = as_value(n)?;
        if with_base {
            denom = finite(inst.add(denom, base_count), CTX)?;
        }
        let mass = finite(inst.mul(discount, as_value(distinct)?), CTX)?;
        for ((pk, &qk), &ck) in p.iter_mut().zip(q).zip(counts) {
            let mut num = as_value(u64::from(ck))?;
            if ck > 0 {
                num = finite(inst.sub(num, discount), CTX)?;
            }
            num = finite(inst.add(num, finite(inst.mul(mass, qk), CTX)?), CTX)?;
            if with_base {
                num = finite(inst.add(num, finite(inst.mul(base_count, qk), CTX)?), CTX)?;
            }
            *pk = finite(inst.div(num, denom), CTX)?;
        }
        Ok(())
    }

    /// Most probable class; ties go to the smallest index.
    pub fn predict(&self, features: &[f64]) -> Result<usize, ForestError> {
        Ok(argmax(&self.predict_proba(features)?))
    }

    /// Checks the structural invariants of every tree. Thresholds are checked
    /// against parent bounds only when bounds are stored unrounded.
    pub fn validate_structure(&self) -> Result<(), String> {
        let check_thresholds = self.config.mode.format().is_identity_for::<F>();
        for (t, root) in self.roots.iter().enumerate() {
            let Some(root) = *root else { continue };
            if self.pool.parent(root).is_some() {
                return Err(format!("tree {t}: root {root} has a parent"));
            }
            let mut stack = vec![(root, F::zero())];
            while let Some((id, parent_time)) = stack.pop() {
                let n = self.pool.node(id);
                if n.lower.iter().zip(n.upper).any(|(l, u)| l > u) {
                    return Err(format!("tree {t}: node {id} has inverted bounds"));
                }
                if n.split_time <= parent_time {
                    return Err(format!("tree {t}: node {id} split time does not increase"));
                }
                let Some(split) = n.split else { continue };
                if n.split_time > self.consts.budget {
                    return Err(format!("tree {t}: internal node {id} exceeds the budget"));
                }
                if check_thresholds && !(n.lower[split.dim] <= split.threshold && split.threshold <= n.upper[split.dim])
                {
                    return Err(format!("tree {t}: node {id} threshold outside its bounds"));
                }
                for child in [split.left, split.right] {
                    if self.pool.parent(child) != Some(id) {
                        return Err(format!("tree {t}: child {child} does not point back to {id}"));
                    }
                    stack.push((child, n.split_time));
                }
            }
        }
        Ok(())
    }

    /// Number of nodes reachable from a tree's root.
    pub fn tree_size(&self, tree: usize) -> usize {
        let mut stack: Vec<NodeId> = self.roots[tree].into_iter().collect();
        let mut size = 0;
        while let Some(id) = stack.pop() {
            size += 1;
            if let Some(s) = self.pool.split(id) {
                stack.extend([s.left, s.right]);
            }
        }
        size
    }
}

/// Index of the largest entry, preferring the smallest index among ties.
pub fn argmax<F: PartialOrd + Copy>(values: &[F]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
