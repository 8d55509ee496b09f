//! Minimal reverse-mode automatic differentiation.
//!
//! A [`Graph`] is an append-only tape: every operation pushes a node holding
//! its forward value and an op record naming its parents, which always have
//! smaller ids. [`Graph::backward`] walks the tape once in reverse and leaves
//! `∂loss/∂value` on every node that requires a gradient.

pub mod check;
pub mod conv;

use crate::depth::Mask;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::losses::LossKernel;
use crate::maps::{corner_aligned_taps, Tap};
use crate::real::Real;

pub use conv::{ConvGeometry, Padding};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Conv2d {
        x: NodeId,
        kernel: NodeId,
        bias: Option<NodeId>,
        geom: ConvGeometry,
        /// Patch matrix of `x`, kept when the kernel needs a gradient.
        patches: Option<Vec<T>>,
    },
    Concat(Vec<NodeId>),
    Relu(NodeId),
    Sigmoid(NodeId),
    Softplus(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Abs(NodeId),
    Square(NodeId),
    Sqrt(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MulScalar(NodeId, T),
    AddScalar(NodeId, T),
    SumAll(NodeId),
    Upsample {
        x: NodeId,
        rows: Vec<Tap>,
        cols: Vec<Tap>,
    },
    NormalizeChannels {
        x: NodeId,
        eps: T,
    },
    Loss {
        pred: NodeId,
        target: Grid<T>,
        mask: Mask,
        kernel: LossKernel,
    },
}

impl<T> Op<T> {
    fn parents(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf => vec![],
            Op::Conv2d { x, kernel, bias, .. } => {
                let mut v = vec![*x, *kernel];
                v.extend(bias);
                v
            }
            Op::Concat(xs) => xs.clone(),
            Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Softplus(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Abs(a)
            | Op::Square(a)
            | Op::Sqrt(a)
            | Op::MulScalar(a, _)
            | Op::AddScalar(a, _)
            | Op::SumAll(a) => vec![*a],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Upsample { x, .. } | Op::NormalizeChannels { x, .. } => vec![*x],
            Op::Loss { pred, .. } => vec![*pred],
        }
    }
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Grid<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Reverse-mode tape over `T`-valued grids.
#[derive(Clone, Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Grid<T>>>,
    backward_done: bool,
}

fn stable_sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn stable_softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, id: NodeId) -> Result<&Node<T>> {
        self.nodes
            .get(id.0)
            .ok_or_else(|| Error::Graph(format!("node {} does not exist", id.0)))
    }

    fn push(&mut self, value: Grid<T>, op: Op<T>) -> Result<NodeId> {
        let id = self.nodes.len();
        let mut requires_grad = false;
        for p in op.parents() {
            if p.0 >= id {
                return Err(Error::Graph(format!(
                    "node {id} refers to node {} that is not earlier on the tape",
                    p.0
                )));
            }
            requires_grad |= self.nodes[p.0].requires_grad;
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(NodeId(id))
    }

    /// Leaf node; gradients are kept for it when `requires_grad` is set.
    pub fn leaf(&mut self, value: Grid<T>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Grid<T>) -> NodeId {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Grid<T>) -> NodeId {
        self.leaf(value, false)
    }

    pub fn value(&self, id: NodeId) -> &Grid<T> {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Gradient of the last [`backward`](Self::backward) root with respect to `id`.
    pub fn grad(&self, id: NodeId) -> Option<&Grid<T>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Clears gradients so `backward` may run again.
    pub fn reset_grads(&mut self) {
        self.grads.clear();
        self.backward_done = false;
    }

    fn unary(&mut self, a: NodeId, op: Op<T>, f: impl Fn(T) -> T) -> Result<NodeId> {
        let v = self.check(a)?.value.map(f);
        self.push(v, op)
    }

    fn binary(&mut self, a: NodeId, b: NodeId, op: Op<T>, f: impl Fn(T, T) -> T) -> Result<NodeId> {
        let (va, vb) = (&self.check(a)?.value, &self.check(b)?.value);
        if !va.same_shape(vb) {
            return Err(Error::ShapeMismatch(format!(
                "elementwise op on {:?} and {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let (h, w, c) = va.shape();
        let v = Grid::from_vec(h, w, c, data)?;
        self.push(v, op)
    }

    /// Cross-correlation of `x (h, w, cin)` with `kernel (kh, kw, cin * cout)`,
    /// plus an optional `(1, 1, cout)` bias.
    pub fn conv2d(
        &mut self,
        x: NodeId,
        kernel: NodeId,
        bias: Option<NodeId>,
        stride: usize,
        padding: Padding,
    ) -> Result<NodeId> {
        let xv = &self.check(x)?.value;
        let kv = &self.check(kernel)?.value;
        let geom = ConvGeometry::new(xv.shape(), kv.shape(), stride, padding)?;
        let bias_data = match bias {
            Some(b) => {
                let bv = &self.check(b)?.value;
                if bv.len() != geom.cout {
                    return Err(Error::ShapeMismatch(format!(
                        "bias of {} values for {} output channels",
                        bv.len(),
                        geom.cout
                    )));
                }
                Some(bv.data())
            }
            None => None,
        };
        let patches = conv::im2col(xv.data(), &geom);
        let out = conv::forward_patches(&patches, kv.data(), bias_data, &geom);
        let keep = self.requires_grad(kernel);
        let v = Grid::from_vec(geom.out_h, geom.out_w, geom.cout, out)?;
        self.push(
            v,
            Op::Conv2d {
                x,
                kernel,
                bias,
                geom,
                patches: keep.then_some(patches),
            },
        )
    }

    pub fn concat_channels(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        let parts: Vec<&Grid<T>> = xs
            .iter()
            .map(|&id| self.check(id).map(|n| &n.value))
            .collect::<Result<_>>()?;
        let v = crate::grid::concat_channels(&parts)?;
        self.push(v, Op::Concat(xs.to_vec()))
    }

    /// Sign of every ReLU input on the tape, in node order.
    pub fn relu_signature(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for n in &self.nodes {
            if let Op::Relu(a) = n.op {
                out.extend(self.nodes[a.0].value.data().iter().map(|&v| v > T::zero()));
            }
        }
        out
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Op::Relu(a), |x| x.max(T::zero()))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Op::Sigmoid(a), stable_sigmoid)
    }

    pub fn softplus(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Op::Softplus(a), stable_softplus)
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Op::Exp(a), |x| x.exp())
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Op::Log(a), |x| x.ln())
    }

    pub fn abs(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Op::Abs(a), |x| x.abs())
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    pub fn sqrt(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Op::Sqrt(a), |x| x.sqrt())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn mul_scalar(&mut self, a: NodeId, s: T) -> Result<NodeId> {
        self.unary(a, Op::MulScalar(a, s), |x| x * s)
    }

    pub fn add_scalar(&mut self, a: NodeId, s: T) -> Result<NodeId> {
        self.unary(a, Op::AddScalar(a, s), |x| x + s)
    }

    /// Sum of every element, as a `1x1x1` grid.
    pub fn sum_all(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.check(a)?.value.sum();
        self.push(Grid::filled(1, 1, 1, s), Op::SumAll(a))
    }

    /// Sum of scalar nodes.
    pub fn sum_scalars(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        let (first, rest) = xs
            .split_first()
            .ok_or_else(|| Error::InvalidArgument("sum of zero terms".into()))?;
        rest.iter().try_fold(*first, |acc, &x| self.add(acc, x))
    }

    /// Corner-aligned bilinear resize to `h x w`.
    pub fn upsample_bilinear(&mut self, x: NodeId, h: usize, w: usize) -> Result<NodeId> {
        let xv = &self.check(x)?.value;
        if h == 0 || w == 0 {
            return Err(Error::InvalidArgument("upsample to an empty grid".into()));
        }
        let rows = corner_aligned_taps(xv.height(), h);
        let cols = corner_aligned_taps(xv.width(), w);
        let v = crate::maps::resample_with_taps(xv, &rows, &cols);
        self.push(v, Op::Upsample { x, rows, cols })
    }

    /// Doubles both spatial dimensions.
    pub fn upsample_bilinear_x2(&mut self, x: NodeId) -> Result<NodeId> {
        let (h, w, _) = self.check(x)?.value.shape();
        self.upsample_bilinear(x, 2 * h, 2 * w)
    }

    /// Divides each pixel's channel vector by `sqrt(|v|^2 + eps)`.
    pub fn normalize_channels(&mut self, x: NodeId, eps: T) -> Result<NodeId> {
        let mut v = self.check(x)?.value.clone();
        let c = v.channels();
        for px in v.data_mut().chunks_mut(c) {
            let n = (px.iter().map(|&a| a * a).sum::<T>() + eps).sqrt();
            for a in px.iter_mut() {
                *a /= n;
            }
        }
        self.push(v, Op::NormalizeChannels { x, eps })
    }

    pub(crate) fn fused_loss(
        &mut self,
        pred: NodeId,
        target: &Grid<T>,
        mask: &Mask,
        kernel: LossKernel,
    ) -> Result<NodeId> {
        let pv = &self.check(pred)?.value;
        let value = kernel.value(pv, target, mask)?;
        self.push(
            Grid::filled(1, 1, 1, value),
            Op::Loss {
                pred,
                target: target.clone(),
                mask: mask.clone(),
                kernel,
            },
        )
    }

    /// Populates gradients of the scalar `root` for every node that requires them.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        if self.backward_done {
            return Err(Error::Graph(
                "backward already ran on this graph; call reset_grads first".into(),
            ));
        }
        let rv = &self.check(root)?.value;
        if rv.len() != 1 {
            return Err(Error::Graph(format!(
                "backward needs a scalar root, got shape {:?}",
                rv.shape()
            )));
        }
        let mut grads: Vec<Option<Grid<T>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Grid::filled(1, 1, 1, T::one()));
        for id in (0..=root.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        self.grads = grads;
        self.backward_done = true;
        Ok(())
    }

    fn propagate(&self, id: usize, g: &Grid<T>, grads: &mut [Option<Grid<T>>]) -> Result<()> {
        let node = &self.nodes[id];
        let y = &node.value;
        let nodes = &self.nodes;
        // Lazily allocated gradient slot for a parent that requires it.
        fn slot<'a, T: Real>(
            nodes: &[Node<T>],
            grads: &'a mut [Option<Grid<T>>],
            p: NodeId,
        ) -> Option<&'a mut Grid<T>> {
            let n = &nodes[p.0];
            if !n.requires_grad {
                return None;
            }
            let (h, w, c) = n.value.shape();
            Some(grads[p.0].get_or_insert_with(|| Grid::zeros(h, w, c)))
        }
        let elementwise = |grads: &mut [Option<Grid<T>>], a: NodeId, f: &dyn Fn(usize, T) -> T| {
            if let Some(ga) = slot(nodes, grads, a) {
                for (i, (d, &gv)) in ga.data_mut().iter_mut().zip(g.data()).enumerate() {
                    *d += f(i, gv);
                }
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                x,
                kernel,
                bias,
                geom,
                patches,
            } => {
                let xv = nodes[x.0].value.data();
                let kv = nodes[kernel.0].value.data();
                let mut dx = slot(nodes, grads, *x).map(|s| std::mem::replace(s, Grid::zeros(0, 0, 0)));
                let mut dk =
                    slot(nodes, grads, *kernel).map(|s| std::mem::replace(s, Grid::zeros(0, 0, 0)));
                let mut db = bias
                    .and_then(|b| slot(nodes, grads, b))
                    .map(|s| std::mem::replace(s, Grid::zeros(0, 0, 0)));
                conv::backward(
                    xv,
                    patches.as_deref(),
                    kv,
                    g.data(),
                    geom,
                    dx.as_mut().map(|d| d.data_mut()),
                    dk.as_mut().map(|d| d.data_mut()),
                    db.as_mut().map(|d| d.data_mut()),
                );
                if let Some(d) = dx {
                    grads[x.0] = Some(d);
                }
                if let Some(d) = dk {
                    grads[kernel.0] = Some(d);
                }
                if let (Some(d), Some(b)) = (db, bias) {
                    grads[b.0] = Some(d);
                }
            }
            Op::Concat(xs) => {
                let c_out = y.channels();
                let mut offset = 0;
                for &p in xs {
                    let c = nodes[p.0].value.channels();
                    if let Some(gp) = slot(nodes, grads, p) {
                        for (px, dst) in gp.data_mut().chunks_mut(c).enumerate() {
                            let src = &g.data()[px * c_out + offset..][..c];
                            for (d, &s) in dst.iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    }
                    offset += c;
                }
            }
            Op::Relu(a) => {
                let xv = nodes[a.0].value.data();
                elementwise(grads, *a, &|i, gv| if xv[i] > T::zero() { gv } else { T::zero() });
            }
            Op::Sigmoid(a) => {
                let yv = y.data();
                elementwise(grads, *a, &|i, gv| gv * yv[i] * (T::one() - yv[i]));
            }
            Op::Softplus(a) => {
                let xv = nodes[a.0].value.data();
                elementwise(grads, *a, &|i, gv| gv * stable_sigmoid(xv[i]));
            }
            Op::Exp(a) => {
                let yv = y.data();
                elementwise(grads, *a, &|i, gv| gv * yv[i]);
            }
            Op::Log(a) => {
                let xv = nodes[a.0].value.data();
                elementwise(grads, *a, &|i, gv| gv / xv[i]);
            }
            Op::Abs(a) => {
                let xv = nodes[a.0].value.data();
                elementwise(grads, *a, &|i, gv| {
                    if xv[i] > T::zero() {
                        gv
                    } else if xv[i] < T::zero() {
                        -gv
                    } else {
                        T::zero()
                    }
                });
            }
            Op::Square(a) => {
                let xv = nodes[a.0].value.data();
                let two = T::of(2.0);
                elementwise(grads, *a, &|i, gv| gv * two * xv[i]);
            }
            Op::Sqrt(a) => {
                let yv = y.data();
                let two = T::of(2.0);
                elementwise(grads, *a, &|i, gv| gv / (two * yv[i]));
            }
            Op::Add(a, b) => {
                elementwise(grads, *a, &|_, gv| gv);
                elementwise(grads, *b, &|_, gv| gv);
            }
            Op::Sub(a, b) => {
                elementwise(grads, *a, &|_, gv| gv);
                elementwise(grads, *b, &|_, gv| -gv);
            }
            Op::Mul(a, b) => {
                let av = nodes[a.0].value.data();
                let bv = nodes[b.0].value.data();
                elementwise(grads, *a, &|i, gv| gv * bv[i]);
                elementwise(grads, *b, &|i, gv| gv * av[i]);
            }
            Op::MulScalar(a, s) => {
                let s = *s;
                elementwise(grads, *a, &|_, gv| gv * s);
            }
            Op::AddScalar(a, _) => elementwise(grads, *a, &|_, gv| gv),
            Op::SumAll(a) => {
                let gv = g.data()[0];
                if let Some(ga) = slot(nodes, grads, *a) {
                    for d in ga.data_mut() {
                        *d += gv;
                    }
                }
            }
            Op::Upsample { x, rows, cols } => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    let (w, c) = (gx.width(), gx.channels());
                    let dst = gx.data_mut();
                    let src = g.data();
                    let mut o = 0;
                    for ry in rows {
                        let ty = T::of(ry.t);
                        for rx in cols {
                            let tx = T::of(rx.t);
                            let w00 = (T::one() - ty) * (T::one() - tx);
                            let w01 = (T::one() - ty) * tx;
                            let w10 = ty * (T::one() - tx);
                            let w11 = ty * tx;
                            let i00 = (ry.lo * w + rx.lo) * c;
                            let i01 = (ry.lo * w + rx.hi) * c;
                            let i10 = (ry.hi * w + rx.lo) * c;
                            let i11 = (ry.hi * w + rx.hi) * c;
                            for ch in 0..c {
                                let gv = src[o];
                                dst[i00 + ch] += w00 * gv;
                                dst[i01 + ch] += w01 * gv;
                                dst[i10 + ch] += w10 * gv;
                                dst[i11 + ch] += w11 * gv;
                                o += 1;
                            }
                        }
                    }
                }
            }
            Op::NormalizeChannels { x, eps } => {
                let xv = &nodes[x.0].value;
                let c = xv.channels();
                if let Some(gx) = slot(nodes, grads, *x) {
                    for ((dst, xs), (ys, gs)) in gx
                        .data_mut()
                        .chunks_mut(c)
                        .zip(xv.data().chunks(c))
                        .zip(y.data().chunks(c).zip(g.data().chunks(c)))
                    {
                        let n = (xs.iter().map(|&a| a * a).sum::<T>() + *eps).sqrt();
                        let dot: T = ys.iter().zip(gs).map(|(&a, &b)| a * b).sum();
                        for ((d, &yv), &gv) in dst.iter_mut().zip(ys).zip(gs) {
                            *d += (gv - yv * dot) / n;
                        }
                    }
                }
            }
            Op::Loss {
                pred,
                target,
                mask,
                kernel,
            } => {
                let gv = g.data()[0];
                if let Some(gp) = slot(nodes, grads, *pred) {
                    kernel.accumulate_grad(&nodes[pred.0].value, target, mask, gv, gp)?;
                }
            }
        }
        Ok(())
    }
}
