//! Recorded computation with eager evaluation and reverse-mode accumulation.
//!
//! A [`Tape`] is built by calling its operation methods; each call checks
//! shapes, evaluates the result immediately and appends one node. Nodes only
//! reference earlier nodes, so the tape is topologically ordered by
//! construction. [`Tape::replay`] re-evaluates the same record on new leaf
//! values using the same kernels, which makes replays bit-identical to the
//! original evaluation for identical leaves.

use std::collections::HashMap;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Index of a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Matrix axis used by slicing and concatenation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

/// Primitive operations. Leaves are either inputs (data, constants, masks)
/// or trainable parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Input,
    Param,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    /// Elementwise maximum across equally shaped operands.
    Max(Vec<NodeId>),
    Concat {
        parts: Vec<NodeId>,
        axis: Axis,
    },
    /// `len` entries along `axis` starting at `start` with stride `step`.
    Slice {
        input: NodeId,
        axis: Axis,
        start: usize,
        len: usize,
        step: usize,
    },
    /// Scalar `-log softmax(logits)[target]`; the loss head.
    SoftmaxCrossEntropy {
        logits: NodeId,
        target: usize,
    },
}

impl Op {
    pub fn is_leaf(&self) -> bool {
        matches!(self, Op::Input | Op::Param)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Param => "param",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Relu(_) => "relu",
            Op::Max(_) => "max",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
    scope: usize,
}

/// The computation record.
#[derive(Clone, Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    scopes: Vec<String>,
    scope_ids: HashMap<String, usize>,
    current_scope: usize,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            scopes: vec!["<root>".to_string()],
            scope_ids: HashMap::from([("<root>".to_string(), 0)]),
            current_scope: 0,
        }
    }

    /// Label subsequent nodes with a layer name (used for diagnostics).
    pub fn scope(&mut self, name: &str) {
        let next = self.scopes.len();
        let id = *self.scope_ids.entry(name.to_string()).or_insert(next);
        if id == next {
            self.scopes.push(name.to_string());
        }
        self.current_scope = id;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn op(&self, id: NodeId) -> &Op {
        &self.nodes[id.0].op
    }

    pub fn scope_of(&self, id: NodeId) -> &str {
        &self.scopes[self.nodes[id.0].scope]
    }

    pub fn last(&self) -> Option<NodeId> {
        self.nodes.len().checked_sub(1).map(NodeId)
    }

    /// Leaf nodes (inputs and parameters) in creation order.
    pub fn leaves(&self) -> Vec<NodeId> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].op.is_leaf())
            .map(NodeId)
            .collect()
    }

    pub fn params(&self) -> Vec<NodeId> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].op == Op::Param)
            .map(NodeId)
            .collect()
    }

    /// First node holding a NaN or infinity, with its layer label.
    pub fn first_non_finite(&self) -> Option<(NodeId, &str)> {
        self.nodes
            .iter()
            .position(|n| !n.value.is_finite())
            .map(|i| (NodeId(i), self.scopes[self.nodes[i].scope].as_str()))
    }

    fn push(&mut self, op: Op) -> Result<NodeId> {
        let index = self.nodes.len();
        let value = eval(&op, index, |id| &self.nodes[id.0].value)?;
        self.nodes.push(Node {
            op,
            value,
            scope: self.current_scope,
        });
        Ok(NodeId(index))
    }

    fn check(&self, ids: &[NodeId]) -> Result<()> {
        let n = self.nodes.len();
        match ids.iter().find(|id| id.0 >= n) {
            Some(id) => Err(Error::shape(n, format!("operand {} does not exist", id.0))),
            None => Ok(()),
        }
    }

    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.leaf(Op::Input, value)
    }

    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.leaf(Op::Param, value)
    }

    fn leaf(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            scope: self.current_scope,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(&[a, b])?;
        self.push(Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(&[a, b])?;
        self.push(Op::Add(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(&[a, b])?;
        self.push(Op::Mul(a, b))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(&[a])?;
        self.push(Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(&[a])?;
        self.push(Op::Tanh(a))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(&[a])?;
        self.push(Op::Relu(a))
    }

    pub fn max(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.check(parts)?;
        self.push(Op::Max(parts.to_vec()))
    }

    pub fn concat(&mut self, parts: &[NodeId], axis: Axis) -> Result<NodeId> {
        self.check(parts)?;
        self.push(Op::Concat {
            parts: parts.to_vec(),
            axis,
        })
    }

    pub fn slice(&mut self, input: NodeId, axis: Axis, start: usize, len: usize, step: usize) -> Result<NodeId> {
        self.check(&[input])?;
        self.push(Op::Slice {
            input,
            axis,
            start,
            len,
            step,
        })
    }

    pub fn softmax_cross_entropy(&mut self, logits: NodeId, target: usize) -> Result<NodeId> {
        self.check(&[logits])?;
        self.push(Op::SoftmaxCrossEntropy { logits, target })
    }

    /// Sum of all entries, expressed as `1ᵀ · X · 1`.
    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let (r, c) = self.dims(x)?;
        let left = self.input(Tensor::ones(vec![1, r]));
        let right = self.input(Tensor::ones(vec![c, 1]));
        let t = self.matmul(left, x)?;
        self.matmul(t, right)
    }

    /// Multiply every entry by a constant.
    pub fn scale(&mut self, x: NodeId, factor: f64) -> Result<NodeId> {
        let shape = self.value(x).shape().to_vec();
        let k = self.input(Tensor::filled(shape, factor));
        self.mul(x, k)
    }

    /// Repeat an `r x 1` column `cols` times: `col · 1ᵀ`.
    pub fn repeat_cols(&mut self, col: NodeId, cols: usize) -> Result<NodeId> {
        let ones = self.input(Tensor::ones(vec![1, cols]));
        self.matmul(col, ones)
    }

    fn dims(&self, x: NodeId) -> Result<(usize, usize)> {
        self.check(&[x])?;
        self.value(x)
            .dims2()
            .ok_or_else(|| Error::shape(self.len(), "rank > 2 operand"))
    }

    /// Re-evaluate the record on new leaf values, given in [`Tape::leaves`] order.
    pub fn replay(&self, leaves: &[Tensor]) -> Result<Tape> {
        let expected = self.leaves();
        if expected.len() != leaves.len() {
            return Err(Error::shape(
                0,
                format!("record has {} leaves, got {}", expected.len(), leaves.len()),
            ));
        }
        let mut out = Tape {
            nodes: Vec::with_capacity(self.nodes.len()),
            scopes: self.scopes.clone(),
            scope_ids: self.scope_ids.clone(),
            current_scope: self.current_scope,
        };
        let mut next_leaf = leaves.iter();
        for (index, node) in self.nodes.iter().enumerate() {
            let value = if node.op.is_leaf() {
                let v = next_leaf.next().expect("leaf count checked");
                if v.shape() != node.value.shape() {
                    return Err(Error::shape(
                        index,
                        format!("leaf declared {:?}, got {:?}", node.value.shape(), v.shape()),
                    ));
                }
                v.clone()
            } else {
                eval(&node.op, index, |id| &out.nodes[id.0].value)?
            };
            out.nodes.push(Node {
                op: node.op.clone(),
                value,
                scope: node.scope,
            });
        }
        Ok(out)
    }

    /// Gradients of a scalar node with respect to every node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        self.check(&[loss])?;
        if self.value(loss).len() != 1 {
            return Err(Error::shape(
                loss.0,
                "reverse accumulation from a non-scalar output needs an explicit seed",
            ));
        }
        let seed = Tensor::filled(self.value(loss).shape().to_vec(), 1.0);
        self.backward_with_seed(loss, seed)
    }

    /// Vector-Jacobian product: propagate `seed` (shaped like `output`) backwards.
    pub fn backward_with_seed(&self, output: NodeId, seed: Tensor) -> Result<Gradients> {
        self.check(&[output])?;
        if seed.shape() != self.value(output).shape() {
            return Err(Error::shape(
                output.0,
                format!(
                    "seed shape {:?} does not match output {:?}",
                    seed.shape(),
                    self.value(output).shape()
                ),
            ));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        adj[output.0] = Some(seed);
        for index in (0..=output.0).rev() {
            let Some(g) = adj[index].take() else { continue };
            let node = &self.nodes[index];
            self.propagate(&node.op, &node.value, &g, &mut adj);
            adj[index] = Some(g);
        }
        let grads = adj
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| match g {
                Some(g) => Some(g),
                None if n.op.is_leaf() => Some(Tensor::zeros(n.value.shape().to_vec())),
                None => None,
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &Tensor, adj: &mut [Option<Tensor>]) {
        let val = |id: &NodeId| &self.nodes[id.0].value;
        match op {
            Op::Input | Op::Param => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (val(a), val(b));
                let (m, k) = av.dims2().unwrap();
                let n = bv.cols();
                let (ad, bd, gd) = (av.data(), bv.data(), g.data());
                let mut da = vec![0.0; m * k];
                for i in 0..m {
                    for l in 0..k {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += gd[i * n + j] * bd[l * n + j];
                        }
                        da[i * k + l] = s;
                    }
                }
                let mut db = vec![0.0; k * n];
                for i in 0..m {
                    for l in 0..k {
                        let a_il = ad[i * k + l];
                        let row = &mut db[l * n..(l + 1) * n];
                        for (r, gv) in row.iter_mut().zip(&gd[i * n..(i + 1) * n]) {
                            *r += a_il * gv;
                        }
                    }
                }
                accumulate(adj, *a, av.shape(), da);
                accumulate(adj, *b, bv.shape(), db);
            }
            Op::Add(a, b) => {
                accumulate(adj, *a, val(a).shape(), g.data().to_vec());
                accumulate(adj, *b, val(b).shape(), g.data().to_vec());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(a), val(b));
                let da = g.data().iter().zip(bv.data()).map(|(g, y)| g * y).collect();
                let db = g.data().iter().zip(av.data()).map(|(g, x)| g * x).collect();
                accumulate(adj, *a, av.shape(), da);
                accumulate(adj, *b, bv.shape(), db);
            }
            Op::Sigmoid(a) => {
                let d = g
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(g, y)| g * y * (1.0 - y))
                    .collect();
                accumulate(adj, *a, val(a).shape(), d);
            }
            Op::Tanh(a) => {
                let d = g
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(g, y)| g * (1.0 - y * y))
                    .collect();
                accumulate(adj, *a, val(a).shape(), d);
            }
            Op::Relu(a) => {
                let d = g
                    .data()
                    .iter()
                    .zip(val(a).data())
                    .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                    .collect();
                accumulate(adj, *a, val(a).shape(), d);
            }
            Op::Max(parts) => {
                let len = out.len();
                let mut winners = vec![0usize; len];
                for (e, w) in winners.iter_mut().enumerate() {
                    let mut best = val(&parts[0]).data()[e];
                    for (p, id) in parts.iter().enumerate().skip(1) {
                        let v = val(id).data()[e];
                        if v > best {
                            best = v;
                            *w = p;
                        }
                    }
                }
                for (p, id) in parts.iter().enumerate() {
                    let d = (0..len)
                        .map(|e| if winners[e] == p { g.data()[e] } else { 0.0 })
                        .collect();
                    accumulate(adj, *id, val(id).shape(), d);
                }
            }
            Op::Concat { parts, axis } => {
                let (_, out_cols) = out.dims2().unwrap();
                let mut offset = 0;
                for id in parts {
                    let v = val(id);
                    let (r, c) = v.dims2().unwrap();
                    let mut d = Vec::with_capacity(r * c);
                    match axis {
                        Axis::Rows => {
                            d.extend_from_slice(&g.data()[offset * c..(offset + r) * c]);
                            offset += r;
                        }
                        Axis::Cols => {
                            for row in 0..r {
                                let base = row * out_cols + offset;
                                d.extend_from_slice(&g.data()[base..base + c]);
                            }
                            offset += c;
                        }
                    }
                    accumulate(adj, *id, v.shape(), d);
                }
            }
            Op::Slice {
                input,
                axis,
                start,
                len,
                step,
            } => {
                let v = val(input);
                let (r, c) = v.dims2().unwrap();
                let mut d = vec![0.0; r * c];
                match axis {
                    Axis::Rows => {
                        for j in 0..*len {
                            let src = start + j * step;
                            d[src * c..(src + 1) * c].copy_from_slice(&g.data()[j * c..(j + 1) * c]);
                        }
                    }
                    Axis::Cols => {
                        for row in 0..r {
                            for j in 0..*len {
                                d[row * c + start + j * step] = g.data()[row * len + j];
                            }
                        }
                    }
                }
                accumulate(adj, *input, v.shape(), d);
            }
            Op::SoftmaxCrossEntropy { logits, target } => {
                let z = val(logits);
                let scale = g.data()[0];
                let mut p = softmax(z.data());
                p[*target] -= 1.0;
                let d = p.into_iter().map(|v| v * scale).collect();
                accumulate(adj, *logits, z.shape(), d);
            }
        }
    }
}

fn accumulate(adj: &mut [Option<Tensor>], id: NodeId, shape: &[usize], d: Vec<f64>) {
    match &mut adj[id.0] {
        Some(t) => {
            for (a, b) in t.data_mut().iter_mut().zip(d) {
                *a += b;
            }
        }
        slot @ None => {
            *slot = Some(Tensor::new(shape.to_vec(), d).expect("gradient shape"));
        }
    }
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dims_of(t: &Tensor, index: usize) -> Result<(usize, usize)> {
    t.dims2()
        .ok_or_else(|| Error::shape(index, format!("rank > 2 operand {:?}", t.shape())))
}

fn same_shape(a: &Tensor, b: &Tensor, index: usize, what: &str) -> Result<()> {
    if dims_of(a, index)? != dims_of(b, index)? {
        return Err(Error::shape(
            index,
            format!("{what}: {:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

/// Evaluate one operation. Shared by eager construction and replay.
fn eval<'a>(op: &Op, index: usize, val: impl Fn(NodeId) -> &'a Tensor) -> Result<Tensor> {
    let t = match op {
        Op::Input | Op::Param => unreachable!("leaves are not evaluated"),
        Op::MatMul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let (m, k) = dims_of(av, index)?;
            let (k2, n) = dims_of(bv, index)?;
            if k != k2 {
                return Err(Error::shape(
                    index,
                    format!("matmul {:?} x {:?}", av.shape(), bv.shape()),
                ));
            }
            let (ad, bd) = (av.data(), bv.data());
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                let row = &mut out[i * n..(i + 1) * n];
                for l in 0..k {
                    let a_il = ad[i * k + l];
                    for (o, b) in row.iter_mut().zip(&bd[l * n..(l + 1) * n]) {
                        *o += a_il * b;
                    }
                }
            }
            Tensor::new(vec![m, n], out)?
        }
        Op::Add(a, b) | Op::Mul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            same_shape(av, bv, index, op.name())?;
            let data = if matches!(op, Op::Add(..)) {
                av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect()
            } else {
                av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect()
            };
            Tensor::new(av.shape().to_vec(), data)?
        }
        Op::Sigmoid(a) => val(*a).map(sigmoid),
        Op::Tanh(a) => val(*a).map(f64::tanh),
        Op::Relu(a) => val(*a).map(|x| if x > 0.0 { x } else { 0.0 }),
        Op::Max(parts) => {
            let first = parts
                .first()
                .map(|id| val(*id))
                .ok_or_else(|| Error::shape(index, "max over zero operands"))?;
            let mut data = first.data().to_vec();
            for id in &parts[1..] {
                let v = val(*id);
                same_shape(first, v, index, "max")?;
                for (d, x) in data.iter_mut().zip(v.data()) {
                    if *x > *d {
                        *d = *x;
                    }
                }
            }
            Tensor::new(first.shape().to_vec(), data)?
        }
        Op::Concat { parts, axis } => {
            if parts.is_empty() {
                return Err(Error::shape(index, "concat of zero operands"));
            }
            let dims = parts
                .iter()
                .map(|id| dims_of(val(*id), index))
                .collect::<Result<Vec<_>>>()?;
            match axis {
                Axis::Rows => {
                    let c = dims[0].1;
                    if dims.iter().any(|d| d.1 != c) {
                        return Err(Error::shape(index, format!("row concat of {dims:?}")));
                    }
                    let rows = dims.iter().map(|d| d.0).sum();
                    let mut data = Vec::with_capacity(rows * c);
                    for id in parts {
                        data.extend_from_slice(val(*id).data());
                    }
                    Tensor::new(vec![rows, c], data)?
                }
                Axis::Cols => {
                    let r = dims[0].0;
                    if dims.iter().any(|d| d.0 != r) {
                        return Err(Error::shape(index, format!("column concat of {dims:?}")));
                    }
                    let cols: usize = dims.iter().map(|d| d.1).sum();
                    let mut data = Vec::with_capacity(r * cols);
                    for row in 0..r {
                        for id in parts {
                            data.extend_from_slice(val(*id).row_slice(row));
                        }
                    }
                    Tensor::new(vec![r, cols], data)?
                }
            }
        }
        Op::Slice {
            input,
            axis,
            start,
            len,
            step,
        } => {
            let v = val(*input);
            let (r, c) = dims_of(v, index)?;
            let extent = match axis {
                Axis::Rows => r,
                Axis::Cols => c,
            };
            if *len == 0 || *step == 0 || start + (len - 1) * step >= extent {
                return Err(Error::shape(
                    index,
                    format!("slice start {start} len {len} step {step} out of range for extent {extent}"),
                ));
            }
            match axis {
                Axis::Rows => {
                    let mut data = Vec::with_capacity(len * c);
                    for j in 0..*len {
                        data.extend_from_slice(v.row_slice(start + j * step));
                    }
                    Tensor::new(vec![*len, c], data)?
                }
                Axis::Cols => {
                    let mut data = Vec::with_capacity(r * len);
                    for row in 0..r {
                        let src = v.row_slice(row);
                        data.extend((0..*len).map(|j| src[start + j * step]));
                    }
                    Tensor::new(vec![r, *len], data)?
                }
            }
        }
        Op::SoftmaxCrossEntropy { logits, target } => {
            let z = val(*logits);
            dims_of(z, index)?;
            if *target >= z.len() {
                return Err(Error::shape(
                    index,
                    format!("target {target} outside {} logits", z.len()),
                ));
            }
            let m = z.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.data().iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            Tensor::scalar(lse - z.data()[*target])
        }
    };
    Ok(t)
}

/// Adjoints from one reverse sweep. Every leaf has an entry (zero when off-path).
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of node `id`, if it lies on a path to the output (always set for leaves).
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient of a leaf.
    pub fn leaf(&self, id: NodeId) -> &Tensor {
        self.get(id).expect("gradient requested for a non-leaf off-path node")
    }

    pub fn into_leaves(mut self, ids: &[NodeId]) -> Vec<Tensor> {
        ids.iter()
            .map(|id| self.grads[id.0].take().expect("leaf gradient"))
            .collect()
    }
}

/// Replay `tape` on `inputs` (leaf order) and return the final node's value.
pub fn forward(tape: &Tape, inputs: &[Tensor]) -> Result<Tensor> {
    let replayed = tape.replay(inputs)?;
    let last = replayed.last().ok_or_else(|| Error::shape(0, "empty record"))?;
    Ok(replayed.value(last).clone())
}

/// Reverse accumulation from `output`; a seed is required unless the output is scalar.
pub fn reverse_accumulate(tape: &Tape, output: NodeId, seed: Option<Tensor>) -> Result<Gradients> {
    match seed {
        Some(s) => tape.backward_with_seed(output, s),
        None => tape.backward(output),
    }
}
