//! Reverse-mode differentiation over a linear record of vector operations.
//!
//! Every operation appends one node holding its forward value. `backward`
//! walks the nodes from the output down to index 0, so gradients flow in the
//! exact reverse of recording order, and contributions to an operand used
//! several times add up.

use std::sync::atomic::{AtomicU32, Ordering};

use super::tensor::{axpy, matvec_into, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

static NEXT_TAPE_ID: AtomicU32 = AtomicU32::new(0);

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u32,
    index: u32,
}

impl Var {
    pub fn index(self) -> usize {
        self.index as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nonlinearity {
    Tanh,
    Sigmoid,
    Hadamard,
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Affine { w: usize, x: usize, b: Option<usize> },
    Add(usize, usize),
    Sub(usize, usize),
    Hadamard(usize, usize),
    Tanh(usize),
    Sigmoid(usize),
    Scale(usize, T),
    Square(usize),
    Abs(usize),
    Concat(usize, usize),
    Dot(usize, usize),
    Stack(Vec<usize>),
    MaskedSoftmax(usize),
    WeightedSum { weights: usize, vectors: Vec<usize> },
    Distance(usize, usize),
    Contrastive { d: usize, similar: bool, margin: T },
    Mean(Vec<usize>),
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

#[derive(Debug)]
pub struct Tape<T> {
    id: u32,
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a differentiable input (a parameter).
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records an input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        assert_eq!(v.tape, self.id, "variable from another tape");
        &self.nodes[v.index()].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        let index = self.nodes.len() as u32;
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var {
            tape: self.id,
            index,
        }
    }

    fn idx(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index() >= self.nodes.len() {
            return Err(Error::NotOnTape);
        }
        Ok(v.index())
    }

    fn val(&self, i: usize) -> &Tensor<T> {
        &self.nodes[i].value
    }

    fn grad_flag(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].needs_grad)
    }

    fn vector_len(&self, op: &'static str, i: usize) -> Result<usize> {
        let t = self.val(i);
        if !t.is_vector() {
            return Err(Error::shape(op, t.shape(), (t.len(), 1)));
        }
        Ok(t.rows())
    }

    fn same_len(&self, op: &'static str, a: usize, b: usize) -> Result<usize> {
        let (la, lb) = (self.vector_len(op, a)?, self.vector_len(op, b)?);
        if la != lb {
            return Err(Error::shape(op, self.val(a).shape(), self.val(b).shape()));
        }
        Ok(la)
    }

    /// `W x + b`.
    pub fn affine(&mut self, w: Var, x: Var, b: Var) -> Result<Var> {
        let (wi, xi, bi) = (self.idx(w)?, self.idx(x)?, self.idx(b)?);
        self.affine_impl(wi, xi, Some(bi))
    }

    /// `W x`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (wi, xi) = (self.idx(w)?, self.idx(x)?);
        self.affine_impl(wi, xi, None)
    }

    fn affine_impl(&mut self, wi: usize, xi: usize, bi: Option<usize>) -> Result<Var> {
        let (m, n) = self.val(wi).shape();
        let xlen = self.vector_len("affine", xi)?;
        if xlen != n {
            return Err(Error::shape("affine", (m, n), self.val(xi).shape()));
        }
        let mut out = vec![T::zero(); m];
        matvec_into(self.val(wi).as_slice(), m, n, self.val(xi).as_slice(), &mut out);
        let mut ids = vec![wi, xi];
        if let Some(bi) = bi {
            let b = self.val(bi);
            if b.shape() != (m, 1) {
                return Err(Error::shape("affine bias", (m, 1), b.shape()));
            }
            for (o, &bv) in out.iter_mut().zip(b.as_slice()) {
                *o += bv;
            }
            ids.push(bi);
        }
        let ng = self.grad_flag(&ids);
        Ok(self.push(
            Tensor::vector(out),
            Op::Affine {
                w: wi,
                x: xi,
                b: bi,
            },
            ng,
        ))
    }

    fn zip_op(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        op: impl Fn(usize, usize) -> Op<T>,
    ) -> Result<Var> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        self.same_len(name, ai, bi)?;
        let data = self
            .val(ai)
            .as_slice()
            .iter()
            .zip(self.val(bi).as_slice())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let ng = self.grad_flag(&[ai, bi]);
        Ok(self.push(Tensor::vector(data), op(ai, bi), ng))
    }

    fn map_op(&mut self, a: Var, f: impl Fn(T) -> T, op: impl Fn(usize) -> Op<T>) -> Result<Var> {
        let ai = self.idx(a)?;
        let value = self.val(ai).map(f);
        let ng = self.nodes[ai].needs_grad;
        Ok(self.push(value, op(ai), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op("hadamard", a, b, |x, y| x * y, Op::Hadamard)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map_op(a, T::tanh, Op::Tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map_op(a, |x| T::one() / (T::one() + (-x).exp()), Op::Sigmoid)
    }

    /// Entrywise nonlinearity by kind; `Hadamard` needs the second operand.
    pub fn elementwise(&mut self, kind: Nonlinearity, a: Var, b: Option<Var>) -> Result<Var> {
        match (kind, b) {
            (Nonlinearity::Tanh, _) => self.tanh(a),
            (Nonlinearity::Sigmoid, _) => self.sigmoid(a),
            (Nonlinearity::Hadamard, Some(b)) => self.hadamard(a, b),
            (Nonlinearity::Hadamard, None) => {
                let ai = self.idx(a)?;
                Err(Error::shape("hadamard", self.val(ai).shape(), (0, 0)))
            }
        }
    }

    pub fn scale(&mut self, a: Var, c: T) -> Result<Var> {
        self.map_op(a, move |x| x * c, move |i| Op::Scale(i, c))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.map_op(a, |x| x * x, Op::Square)
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.map_op(a, T::abs, Op::Abs)
    }

    /// Stacks two vectors end to end.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        self.vector_len("concat", ai)?;
        self.vector_len("concat", bi)?;
        let mut data = self.val(ai).as_slice().to_vec();
        data.extend_from_slice(self.val(bi).as_slice());
        let ng = self.grad_flag(&[ai, bi]);
        Ok(self.push(Tensor::vector(data), Op::Concat(ai, bi), ng))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        self.same_len("dot", ai, bi)?;
        let v = super::tensor::dot(self.val(ai).as_slice(), self.val(bi).as_slice());
        let ng = self.grad_flag(&[ai, bi]);
        Ok(self.push(Tensor::scalar(v), Op::Dot(ai, bi), ng))
    }

    /// Collects scalar nodes into one vector.
    pub fn stack(&mut self, scalars: &[Var]) -> Result<Var> {
        let mut ids = Vec::with_capacity(scalars.len());
        let mut data = Vec::with_capacity(scalars.len());
        for &s in scalars {
            let i = self.idx(s)?;
            let t = self.val(i);
            if t.shape() != (1, 1) {
                return Err(Error::shape("stack", t.shape(), (1, 1)));
            }
            data.push(t.as_slice()[0]);
            ids.push(i);
        }
        let ng = self.grad_flag(&ids);
        Ok(self.push(Tensor::vector(data), Op::Stack(ids), ng))
    }

    /// Softmax over the entries whose mask bit is set; masked entries are 0.
    pub fn masked_softmax(&mut self, logits: Var, mask: &[bool]) -> Result<Var> {
        let li = self.idx(logits)?;
        let n = self.vector_len("masked_softmax", li)?;
        if mask.len() != n {
            return Err(Error::shape("masked_softmax", (n, 1), (mask.len(), 1)));
        }
        let x = self.val(li).as_slice();
        let max = x
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(&v, _)| v)
            .fold(None, |acc: Option<T>, v| Some(acc.map_or(v, |a| a.max(v))))
            .ok_or(Error::EmptyAttention)?;
        let mut out: Vec<T> = x
            .iter()
            .zip(mask)
            .map(|(&v, &m)| if m { (v - max).exp() } else { T::zero() })
            .collect();
        let total: T = out.iter().copied().sum();
        for o in &mut out {
            *o = *o / total;
        }
        let ng = self.nodes[li].needs_grad;
        Ok(self.push(Tensor::vector(out), Op::MaskedSoftmax(li), ng))
    }

    /// `sum_j weights[j] * vectors[j]`.
    pub fn weighted_sum(&mut self, weights: Var, vectors: &[Var]) -> Result<Var> {
        let wi = self.idx(weights)?;
        let n = self.vector_len("weighted_sum", wi)?;
        if vectors.len() != n {
            return Err(Error::shape("weighted_sum", (n, 1), (vectors.len(), 1)));
        }
        let mut ids = Vec::with_capacity(n);
        for &v in vectors {
            ids.push(self.idx(v)?);
        }
        let d = match ids.first() {
            Some(&i) => self.vector_len("weighted_sum", i)?,
            None => return Err(Error::shape("weighted_sum", (0, 1), (0, 1))),
        };
        let mut out = vec![T::zero(); d];
        for (&wj, &vi) in self.val(wi).as_slice().iter().zip(&ids) {
            let v = self.val(vi);
            if v.shape() != (d, 1) {
                return Err(Error::shape("weighted_sum", (d, 1), v.shape()));
            }
            axpy(wj, v.as_slice(), &mut out);
        }
        let mut all = ids.clone();
        all.push(wi);
        let ng = self.grad_flag(&all);
        Ok(self.push(
            Tensor::vector(out),
            Op::WeightedSum {
                weights: wi,
                vectors: ids,
            },
            ng,
        ))
    }

    /// `sqrt(sum (a - b)^2 + eps)`.
    pub fn euclidean_distance(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        self.same_len("euclidean_distance", ai, bi)?;
        let d = distance(self.val(ai).as_slice(), self.val(bi).as_slice());
        let ng = self.grad_flag(&[ai, bi]);
        Ok(self.push(Tensor::scalar(d), Op::Distance(ai, bi), ng))
    }

    /// Contrastive loss of a scalar distance node: `d^2 / 2` for similar
    /// pairs, `max(0, margin - d)^2 / 2` otherwise.
    pub fn contrastive(&mut self, d: Var, similar: bool, margin: T) -> Result<Var> {
        let di = self.idx(d)?;
        let t = self.val(di);
        if t.shape() != (1, 1) {
            return Err(Error::shape("contrastive", t.shape(), (1, 1)));
        }
        let value = contrastive_value(t.as_slice()[0], similar, margin);
        let ng = self.nodes[di].needs_grad;
        Ok(self.push(
            Tensor::scalar(value),
            Op::Contrastive {
                d: di,
                similar,
                margin,
            },
            ng,
        ))
    }

    /// Mean of equally shaped nodes.
    pub fn mean(&mut self, items: &[Var]) -> Result<Var> {
        let first = *items
            .first()
            .ok_or(Error::shape("mean", (0, 0), (1, 1)))?;
        let shape = self.val(self.idx(first)?).shape();
        let mut ids = Vec::with_capacity(items.len());
        let mut acc = Tensor::zeros(shape.0, shape.1);
        for &v in items {
            let i = self.idx(v)?;
            let t = self.val(i);
            if t.shape() != shape {
                return Err(Error::shape("mean", shape, t.shape()));
            }
            for (a, &x) in acc.as_mut_slice().iter_mut().zip(t.as_slice()) {
                *a += x;
            }
            ids.push(i);
        }
        let inv = T::one() / T::from_usize(items.len()).unwrap();
        let acc = acc.map(|x| x * inv);
        let ng = self.grad_flag(&ids);
        Ok(self.push(acc, Op::Mean(ids), ng))
    }

    /// Propagates `seed` (the gradient of some objective with respect to
    /// `output`) back through the tape.
    pub fn backward(&self, output: Var, seed: &[T]) -> Result<Gradients<T>> {
        let out = self.idx(output)?;
        let shape = self.val(out).shape();
        if seed.len() != shape.0 * shape.1 {
            return Err(Error::shape("backward seed", shape, (seed.len(), 1)));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; out + 1];
        grads[out] = Some(seed.to_vec());
        for i in (0..=out).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { tape: self.id, grads })
    }

    /// Gradient of a scalar output with respect to each of `params`. Inputs
    /// the output does not depend on receive zeros.
    pub fn gradient_of(&self, output: Var, params: &[Var]) -> Result<Vec<Tensor<T>>> {
        let oi = self.idx(output)?;
        let shape = self.val(oi).shape();
        if shape != (1, 1) {
            return Err(Error::NonScalarOutput(shape));
        }
        let grads = self.backward(output, &[T::one()])?;
        params
            .iter()
            .map(|&p| {
                self.idx(p)?;
                Ok(grads.tensor(self, p))
            })
            .collect()
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let needs = |j: usize| self.nodes[j].needs_grad;
        let y = self.val(i).as_slice();
        match &self.nodes[i].op {
            Op::Leaf => {}
            &Op::Affine { w, x, b } => {
                let (m, n) = self.val(w).shape();
                let xs = self.val(x).as_slice();
                if needs(w) {
                    let gw = slot(grads, w, m * n);
                    for (r, &gr) in g.iter().enumerate() {
                        if gr != T::zero() {
                            axpy(gr, xs, &mut gw[r * n..(r + 1) * n]);
                        }
                    }
                }
                if needs(x) {
                    let ws = self.val(w).as_slice();
                    let gx = slot(grads, x, n);
                    for (r, &gr) in g.iter().enumerate() {
                        axpy(gr, &ws[r * n..(r + 1) * n], gx);
                    }
                }
                if let Some(b) = b {
                    if needs(b) {
                        axpy(T::one(), g, slot(grads, b, m));
                    }
                }
            }
            &Op::Add(a, b) => {
                if needs(a) {
                    axpy(T::one(), g, slot(grads, a, g.len()));
                }
                if needs(b) {
                    axpy(T::one(), g, slot(grads, b, g.len()));
                }
            }
            &Op::Sub(a, b) => {
                if needs(a) {
                    axpy(T::one(), g, slot(grads, a, g.len()));
                }
                if needs(b) {
                    axpy(-T::one(), g, slot(grads, b, g.len()));
                }
            }
            &Op::Hadamard(a, b) => {
                let (av, bv) = (self.val(a).as_slice(), self.val(b).as_slice());
                if needs(a) {
                    let ga = slot(grads, a, g.len());
                    for k in 0..g.len() {
                        ga[k] += g[k] * bv[k];
                    }
                }
                if needs(b) {
                    let gb = slot(grads, b, g.len());
                    for k in 0..g.len() {
                        gb[k] += g[k] * av[k];
                    }
                }
            }
            &Op::Tanh(a) => {
                let ga = slot(grads, a, g.len());
                for k in 0..g.len() {
                    ga[k] += g[k] * (T::one() - y[k] * y[k]);
                }
            }
            &Op::Sigmoid(a) => {
                let ga = slot(grads, a, g.len());
                for k in 0..g.len() {
                    ga[k] += g[k] * y[k] * (T::one() - y[k]);
                }
            }
            &Op::Scale(a, c) => axpy(c, g, slot(grads, a, g.len())),
            &Op::Square(a) => {
                let av = self.val(a).as_slice();
                let ga = slot(grads, a, g.len());
                for k in 0..g.len() {
                    ga[k] += (av[k] + av[k]) * g[k];
                }
            }
            &Op::Abs(a) => {
                let av = self.val(a).as_slice();
                let ga = slot(grads, a, g.len());
                for k in 0..g.len() {
                    let s = if av[k] > T::zero() {
                        T::one()
                    } else if av[k] < T::zero() {
                        -T::one()
                    } else {
                        T::zero()
                    };
                    ga[k] += s * g[k];
                }
            }
            &Op::Concat(a, b) => {
                let la = self.val(a).len();
                if needs(a) {
                    axpy(T::one(), &g[..la], slot(grads, a, la));
                }
                if needs(b) {
                    let lb = g.len() - la;
                    axpy(T::one(), &g[la..], slot(grads, b, lb));
                }
            }
            &Op::Dot(a, b) => {
                let (av, bv) = (self.val(a).as_slice(), self.val(b).as_slice());
                if needs(a) {
                    axpy(g[0], bv, slot(grads, a, bv.len()));
                }
                if needs(b) {
                    axpy(g[0], av, slot(grads, b, av.len()));
                }
            }
            Op::Stack(ids) => {
                for (k, &s) in ids.iter().enumerate() {
                    if needs(s) {
                        slot(grads, s, 1)[0] += g[k];
                    }
                }
            }
            &Op::MaskedSoftmax(l) => {
                let inner: T = y.iter().zip(g).map(|(&a, &b)| a * b).sum();
                let gl = slot(grads, l, g.len());
                for k in 0..g.len() {
                    gl[k] += y[k] * (g[k] - inner);
                }
            }
            Op::WeightedSum { weights, vectors } => {
                let wv = self.val(*weights).as_slice();
                if needs(*weights) {
                    let partial: Vec<T> = vectors
                        .iter()
                        .map(|&v| super::tensor::dot(g, self.val(v).as_slice()))
                        .collect();
                    let gw = slot(grads, *weights, vectors.len());
                    for (a, p) in gw.iter_mut().zip(partial) {
                        *a += p;
                    }
                }
                for (&v, &wj) in vectors.iter().zip(wv) {
                    if needs(v) {
                        axpy(wj, g, slot(grads, v, g.len()));
                    }
                }
            }
            &Op::Distance(a, b) => {
                let d = y[0];
                let (av, bv) = (self.val(a).as_slice(), self.val(b).as_slice());
                let c = g[0] / d;
                if needs(a) {
                    let ga = slot(grads, a, av.len());
                    for k in 0..av.len() {
                        ga[k] += c * (av[k] - bv[k]);
                    }
                }
                if needs(b) {
                    let gb = slot(grads, b, av.len());
                    for k in 0..av.len() {
                        gb[k] -= c * (av[k] - bv[k]);
                    }
                }
            }
            &Op::Contrastive { d, similar, margin } => {
                let dv = self.val(d).as_slice()[0];
                slot(grads, d, 1)[0] += g[0] * contrastive_slope(dv, similar, margin);
            }
            Op::Mean(ids) => {
                let inv = T::one() / T::from_usize(ids.len()).unwrap();
                for &s in ids {
                    if needs(s) {
                        axpy(inv, g, slot(grads, s, g.len()));
                    }
                }
            }
        }
    }
}

fn slot<T: Scalar>(grads: &mut [Option<Vec<T>>], i: usize, len: usize) -> &mut [T] {
    grads[i].get_or_insert_with(|| vec![T::zero(); len])
}

/// `sqrt(sum (a - b)^2 + eps)` on plain slices.
pub fn distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    let s: T = a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum();
    (s + T::distance_eps()).sqrt()
}

pub fn contrastive_value<T: Scalar>(d: T, similar: bool, margin: T) -> T {
    let half = T::from_f64_lossy(0.5);
    if similar {
        half * d * d
    } else {
        let gap = (margin - d).max(T::zero());
        half * gap * gap
    }
}

/// dL/dd; the hinge kink at `d == margin` takes subgradient 0.
pub fn contrastive_slope<T: Scalar>(d: T, similar: bool, margin: T) -> T {
    if similar {
        d
    } else if d < margin {
        d - margin
    } else {
        T::zero()
    }
}

/// Per-node gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients<T> {
    tape: u32,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Raw gradient, `None` if nothing flowed into `v`.
    pub fn get(&self, v: Var) -> Option<&[T]> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.index()).and_then(|g| g.as_deref())
    }

    /// Gradient shaped like the node's value, zeros if nothing flowed in.
    pub fn tensor(&self, tape: &Tape<T>, v: Var) -> Tensor<T> {
        let (r, c) = tape.value(v).shape();
        match self.get(v) {
            Some(g) => Tensor::from_vec(r, c, g.to_vec()).expect("gradient shape"),
            None => Tensor::zeros(r, c),
        }
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<T>> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get_mut(v.index()).and_then(Option::take)
    }
}
