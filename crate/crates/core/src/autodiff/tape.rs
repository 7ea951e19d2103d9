use std::cell::{Ref, RefCell};
use std::sync::atomic::{AtomicUsize, Ordering};

use super::kernel::gemm;
use super::ops::gelu_grad_scalar;
use super::{Tensor, TensorError};

static NEXT_TAPE_ID: AtomicUsize = AtomicUsize::new(0);

/// Recorded operation together with whatever the backward rule needs.
pub(crate) enum Op {
    Leaf,
    MatMul {
        a: usize,
        b: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    BatchMatMul {
        a: usize,
        b: usize,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
        b_t: bool,
    },
    Add {
        a: usize,
        b: usize,
    },
    Sub {
        a: usize,
        b: usize,
    },
    Mul {
        a: usize,
        b: usize,
    },
    AddBias {
        x: usize,
        b: usize,
    },
    Scale {
        x: usize,
        c: f64,
    },
    MulConst {
        x: usize,
        mask: Vec<f64>,
    },
    Gelu {
        x: usize,
    },
    Sigmoid {
        x: usize,
    },
    Softmax {
        x: usize,
    },
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Reshape {
        x: usize,
    },
    Permute {
        x: usize,
        src: Vec<usize>,
    },
    MeanAxis {
        x: usize,
        outer: usize,
        len: usize,
        inner: usize,
    },
    MaxAxis {
        x: usize,
        argmax: Vec<usize>,
    },
    SelectAxis {
        x: usize,
        outer: usize,
        len: usize,
        inner: usize,
        index: usize,
    },
    Concat {
        a: usize,
        b: usize,
        rows: usize,
        da: usize,
        db: usize,
    },
    GatherRows {
        x: usize,
        idx: Vec<usize>,
        width: usize,
    },
    Sum {
        x: usize,
    },
    L2Loss {
        y: usize,
        t: usize,
        batch: usize,
    },
    CrossEntropy {
        logits: usize,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
}

pub(crate) struct Node {
    pub(crate) value: Tensor,
    pub(crate) op: Op,
    pub(crate) requires_grad: bool,
}

/// Append-only record of a forward computation.
///
/// Nodes are stored in execution order, so the list is always topologically
/// sorted. A tape is single-threaded; independent tapes may live on
/// different threads.
pub struct Tape {
    id: usize,
    pub(crate) nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    pub(crate) tape: &'t Tape,
    pub(crate) id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var(#{} {:?})", self.id, self.shape())
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records a trainable leaf holding a copy of `t`'s values.
    pub fn param(&self, t: &Tensor) -> Var<'_> {
        self.leaf(t, true)
    }

    /// Records a non-trainable input.
    pub fn constant(&self, t: &Tensor) -> Var<'_> {
        self.leaf(t, false)
    }

    /// Like [`Tape::constant`] but takes ownership, avoiding a copy.
    pub fn constant_owned(&self, t: Tensor) -> Var<'_> {
        self.push(t, Op::Leaf, false)
    }

    fn leaf(&self, t: &Tensor, requires_grad: bool) -> Var<'_> {
        let value = Tensor::from_parts(t.shape().to_vec(), t.data().to_vec());
        self.push(value, Op::Leaf, requires_grad)
    }

    pub(crate) fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    pub(crate) fn requires_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients, TensorError> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(TensorError::ForeignVar);
        }
        let nodes = self.nodes.borrow();
        let shape = nodes[loss.id].value.shape();
        if nodes[loss.id].value.numel() != 1 {
            return Err(TensorError::NonScalarLoss(shape.to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(vec![1.0]);

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if matches!(node.op, Op::Leaf) {
                grads[id] = Some(g);
                continue;
            }
            propagate(&nodes, id, &g, &mut grads);
        }
        Ok(Gradients {
            tape_id: self.id,
            grads,
        })
    }
}

/// Adds into `grads[id]`, allocating it on first touch. Skips constants.
fn acc<'a>(nodes: &[Node], grads: &'a mut [Option<Vec<f64>>], id: usize) -> Option<&'a mut Vec<f64>> {
    if !nodes[id].requires_grad {
        return None;
    }
    let n = nodes[id].value.numel();
    Some(grads[id].get_or_insert_with(|| vec![0.0; n]))
}

fn propagate(nodes: &[Node], id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let out = nodes[id].value.data();
    match &nodes[id].op {
        Op::Leaf => {}
        &Op::MatMul { a, b, m, k, n } => {
            let (av, bv) = (nodes[a].value.data(), nodes[b].value.data());
            if let Some(da) = acc(nodes, grads, a) {
                gemm(m, n, k, g, false, bv, true, da, true);
            }
            if let Some(db) = acc(nodes, grads, b) {
                gemm(k, m, n, av, true, g, false, db, true);
            }
        }
        &Op::BatchMatMul {
            a,
            b,
            batch,
            m,
            k,
            n,
            b_t,
        } => {
            let (av, bv) = (nodes[a].value.data(), nodes[b].value.data());
            let (sa, sb, sc) = (m * k, k * n, m * n);
            if let Some(da) = acc(nodes, grads, a) {
                for i in 0..batch {
                    let gi = &g[i * sc..(i + 1) * sc];
                    let bi = &bv[i * sb..(i + 1) * sb];
                    // b stored k×n: dA = dC·Bᵀ; stored n×k: dA = dC·B
                    gemm(m, n, k, gi, false, bi, !b_t, &mut da[i * sa..(i + 1) * sa], true);
                }
            }
            if let Some(db) = acc(nodes, grads, b) {
                for i in 0..batch {
                    let gi = &g[i * sc..(i + 1) * sc];
                    let ai = &av[i * sa..(i + 1) * sa];
                    let dbi = &mut db[i * sb..(i + 1) * sb];
                    if b_t {
                        // dBᵀ (n×k) = dCᵀ·A
                        gemm(n, m, k, gi, true, ai, false, dbi, true);
                    } else {
                        gemm(k, m, n, ai, true, gi, false, dbi, true);
                    }
                }
            }
        }
        &Op::Add { a, b } => {
            for src in [a, b] {
                if let Some(d) = acc(nodes, grads, src) {
                    d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
                }
            }
        }
        &Op::Sub { a, b } => {
            if let Some(d) = acc(nodes, grads, a) {
                d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
            }
            if let Some(d) = acc(nodes, grads, b) {
                d.iter_mut().zip(g).for_each(|(d, g)| *d -= g);
            }
        }
        &Op::Mul { a, b } => {
            let (av, bv) = (nodes[a].value.data(), nodes[b].value.data());
            if let Some(d) = acc(nodes, grads, a) {
                for ((d, g), b) in d.iter_mut().zip(g).zip(bv) {
                    *d += g * b;
                }
            }
            if let Some(d) = acc(nodes, grads, b) {
                for ((d, g), a) in d.iter_mut().zip(g).zip(av) {
                    *d += g * a;
                }
            }
        }
        &Op::AddBias { x, b } => {
            if let Some(d) = acc(nodes, grads, x) {
                d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
            }
            if let Some(d) = acc(nodes, grads, b) {
                let width = d.len();
                for row in g.chunks_exact(width) {
                    d.iter_mut().zip(row).for_each(|(d, g)| *d += g);
                }
            }
        }
        &Op::Scale { x, c } => {
            if let Some(d) = acc(nodes, grads, x) {
                d.iter_mut().zip(g).for_each(|(d, g)| *d += c * g);
            }
        }
        Op::MulConst { x, mask } => {
            if let Some(d) = acc(nodes, grads, *x) {
                for ((d, g), m) in d.iter_mut().zip(g).zip(mask) {
                    *d += g * m;
                }
            }
        }
        &Op::Gelu { x } => {
            let xv = nodes[x].value.data();
            if let Some(d) = acc(nodes, grads, x) {
                for ((d, g), x) in d.iter_mut().zip(g).zip(xv) {
                    *d += g * gelu_grad_scalar(*x);
                }
            }
        }
        &Op::Sigmoid { x } => {
            if let Some(d) = acc(nodes, grads, x) {
                for ((d, g), y) in d.iter_mut().zip(g).zip(out) {
                    *d += g * y * (1.0 - y);
                }
            }
        }
        &Op::Softmax { x } => {
            let width = *nodes[id].value.shape().last().unwrap();
            if let Some(d) = acc(nodes, grads, x) {
                for ((d, g), y) in d
                    .chunks_exact_mut(width)
                    .zip(g.chunks_exact(width))
                    .zip(out.chunks_exact(width))
                {
                    let dot: f64 = g.iter().zip(y).map(|(g, y)| g * y).sum();
                    for ((d, g), y) in d.iter_mut().zip(g).zip(y) {
                        *d += y * (g - dot);
                    }
                }
            }
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            xhat,
            inv_std,
        } => {
            let (x, gain, bias) = (*x, *gain, *bias);
            let width = nodes[gain].value.numel();
            let gv = nodes[gain].value.data();
            if let Some(d) = acc(nodes, grads, gain) {
                for (row_g, row_h) in g.chunks_exact(width).zip(xhat.chunks_exact(width)) {
                    for ((d, g), h) in d.iter_mut().zip(row_g).zip(row_h) {
                        *d += g * h;
                    }
                }
            }
            if let Some(d) = acc(nodes, grads, bias) {
                for row_g in g.chunks_exact(width) {
                    d.iter_mut().zip(row_g).for_each(|(d, g)| *d += g);
                }
            }
            if let Some(d) = acc(nodes, grads, x) {
                let inv_w = 1.0 / width as f64;
                for (((d, row_g), row_h), inv) in d
                    .chunks_exact_mut(width)
                    .zip(g.chunks_exact(width))
                    .zip(xhat.chunks_exact(width))
                    .zip(inv_std)
                {
                    let mut sum_dh = 0.0;
                    let mut sum_dh_h = 0.0;
                    for ((g, gain), h) in row_g.iter().zip(gv).zip(row_h) {
                        let dh = g * gain;
                        sum_dh += dh;
                        sum_dh_h += dh * h;
                    }
                    for (((d, g), gain), h) in d.iter_mut().zip(row_g).zip(gv).zip(row_h) {
                        let dh = g * gain;
                        *d += inv * (dh - inv_w * sum_dh - h * inv_w * sum_dh_h);
                    }
                }
            }
        }
        &Op::Reshape { x } => {
            if let Some(d) = acc(nodes, grads, x) {
                d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
            }
        }
        Op::Permute { x, src } => {
            if let Some(d) = acc(nodes, grads, *x) {
                for (g, &s) in g.iter().zip(src) {
                    d[s] += g;
                }
            }
        }
        &Op::MeanAxis { x, outer, len, inner } => {
            if let Some(d) = acc(nodes, grads, x) {
                let scale = 1.0 / len as f64;
                for o in 0..outer {
                    for l in 0..len {
                        let base = (o * len + l) * inner;
                        for i in 0..inner {
                            d[base + i] += g[o * inner + i] * scale;
                        }
                    }
                }
            }
        }
        Op::MaxAxis { x, argmax } => {
            if let Some(d) = acc(nodes, grads, *x) {
                for (g, &src) in g.iter().zip(argmax) {
                    d[src] += g;
                }
            }
        }
        &Op::SelectAxis {
            x,
            outer,
            len,
            inner,
            index,
        } => {
            if let Some(d) = acc(nodes, grads, x) {
                for o in 0..outer {
                    let base = (o * len + index) * inner;
                    for i in 0..inner {
                        d[base + i] += g[o * inner + i];
                    }
                }
            }
        }
        &Op::Concat { a, b, rows, da, db } => {
            let w = da + db;
            if let Some(d) = acc(nodes, grads, a) {
                for r in 0..rows {
                    for (d, g) in d[r * da..(r + 1) * da].iter_mut().zip(&g[r * w..r * w + da]) {
                        *d += g;
                    }
                }
            }
            if let Some(d) = acc(nodes, grads, b) {
                for r in 0..rows {
                    for (d, g) in d[r * db..(r + 1) * db].iter_mut().zip(&g[r * w + da..(r + 1) * w]) {
                        *d += g;
                    }
                }
            }
        }
        Op::GatherRows { x, idx, width } => {
            if let Some(d) = acc(nodes, grads, *x) {
                for (row, &src) in idx.iter().enumerate() {
                    for (d, g) in d[src * width..(src + 1) * width]
                        .iter_mut()
                        .zip(&g[row * width..(row + 1) * width])
                    {
                        *d += g;
                    }
                }
            }
        }
        &Op::Sum { x } => {
            if let Some(d) = acc(nodes, grads, x) {
                d.iter_mut().for_each(|d| *d += g[0]);
            }
        }
        &Op::L2Loss { y, t, batch } => {
            let scale = 2.0 * g[0] / batch as f64;
            let (yv, tv) = (nodes[y].value.data(), nodes[t].value.data());
            if let Some(d) = acc(nodes, grads, y) {
                for ((d, y), t) in d.iter_mut().zip(yv).zip(tv) {
                    *d += scale * (y - t);
                }
            }
            if let Some(d) = acc(nodes, grads, t) {
                for ((d, y), t) in d.iter_mut().zip(yv).zip(tv) {
                    *d -= scale * (y - t);
                }
            }
        }
        Op::CrossEntropy { logits, labels, probs } => {
            if let Some(d) = acc(nodes, grads, *logits) {
                let classes = probs.len() / labels.len();
                let scale = g[0] / labels.len() as f64;
                for (r, &label) in labels.iter().enumerate() {
                    let row = &probs[r * classes..(r + 1) * classes];
                    let drow = &mut d[r * classes..(r + 1) * classes];
                    for (c, (d, p)) in drow.iter_mut().zip(row).enumerate() {
                        let target = if c == label { 1.0 } else { 0.0 };
                        *d += scale * (p - target);
                    }
                }
            }
        }
    }
}

/// Result of [`Tape::backward`]: gradients of trainable leaves.
pub struct Gradients {
    tape_id: usize,
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient for `v`, or `None` if `v` is unreachable from the loss.
    pub fn get(&self, v: Var<'_>) -> Option<&[f64]> {
        if v.tape.id != self.tape_id {
            return None;
        }
        self.grads.get(v.id).and_then(|g| g.as_deref())
    }

    /// Gradient for `v`, zero-filled when unreachable.
    pub fn wrt(&self, v: Var<'_>) -> Vec<f64> {
        match self.get(v) {
            Some(g) => g.to_vec(),
            None => vec![0.0; v.numel()],
        }
    }

    /// Adds the gradient of `v` into the gradient buffer of `target`.
    pub fn accumulate_into(&self, v: Var<'_>, target: &mut Tensor) -> Result<(), TensorError> {
        if v.shape() != target.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "accumulate_into",
                lhs: v.shape(),
                rhs: target.shape().to_vec(),
            });
        }
        let Some(g) = self.get(v) else { return Ok(()) };
        if let Some(dst) = target.grad_mut() {
            dst.iter_mut().zip(g).for_each(|(d, g)| *d += g);
        }
        Ok(())
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Ref<'t, Tensor> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id].value)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn numel(&self) -> usize {
        self.value().numel()
    }

    /// Owned copy of the current value.
    pub fn to_tensor(&self) -> Tensor {
        let v = self.value();
        Tensor::from_parts(v.shape().to_vec(), v.data().to_vec())
    }

    /// Scalar value; panics on a non-scalar.
    pub fn item(&self) -> f64 {
        self.value().item().expect("item() on a non-scalar")
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires_grad(self.id)
    }
}
