use std::sync::Arc;

use super::kernels::{self, ConvGeom};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How the right-hand operand of a binary op lines up with the left.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Bcast {
    Same,
    Scalar,
    /// rhs matches the trailing dims of lhs and repeats over the leading ones
    Outer,
    /// rhs matches the leading dims of lhs and repeats over the trailing ones
    Inner,
}

impl Bcast {
    fn resolve(lhs: &[usize], rhs: &[usize]) -> Result<Self> {
        if lhs == rhs {
            return Ok(Bcast::Same);
        }
        let rn: usize = rhs.iter().product();
        if rn == 1 {
            return Ok(Bcast::Scalar);
        }
        let trailing_ones = rhs.iter().rev().take_while(|&&d| d == 1).count();
        if trailing_ones > 0 {
            let core = &rhs[..rhs.len() - trailing_ones];
            if lhs.starts_with(core) {
                return Ok(Bcast::Inner);
            }
        }
        let leading_ones = rhs.iter().take_while(|&&d| d == 1).count();
        if lhs.ends_with(&rhs[leading_ones..]) {
            return Ok(Bcast::Outer);
        }
        Err(Error::shape(format!("cannot broadcast {rhs:?} onto {lhs:?}")))
    }

    #[inline]
    fn index(self, i: usize, lhs_len: usize, rhs_len: usize) -> usize {
        match self {
            Bcast::Same => i,
            Bcast::Scalar => 0,
            Bcast::Outer => i % rhs_len,
            Bcast::Inner => i / (lhs_len / rhs_len),
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug)]
enum Unary {
    Abs,
    Square,
    Sqrt,
    Log,
    Exp,
    Tanh,
    Sigmoid,
    Softplus,
    LeakyRelu(f64),
    Clamp(f64, f64),
    Scale(f64),
    AddScalar(f64),
}

/// Constant matrix pair for a separable 2-D linear map `L X R^T`.
#[derive(Debug)]
pub(crate) struct SeparableMap {
    pub left: Vec<f64>,
    pub out_rows: usize,
    pub rows: usize,
    pub right: Vec<f64>,
    pub out_cols: usize,
    pub cols: usize,
}

/// Ring membership for the radial profile op: for every output bin, the
/// flat pixel indices (in sorted-radius order) that it averages.
#[derive(Debug, Clone)]
pub(crate) struct RadialBins {
    pub height: usize,
    pub width: usize,
    /// pixel indices sorted by radius (stable on ties)
    pub order: Vec<usize>,
    /// `[start, end)` ranges into `order` for each output bin
    pub ranges: Vec<(usize, usize)>,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Binary(Binary, Var, Var, Bcast),
    Unary(Unary, Var),
    MatMul(Var, Var),
    Conv2d {
        input: Var,
        weight: Var,
        geom: ConvGeom,
        cols: Vec<f64>,
    },
    ConvTranspose2d {
        input: Var,
        weight: Var,
        /// geometry of the equivalent forward conv from output to input space
        geom: ConvGeom,
    },
    ChannelBias(Var, Var),
    Reshape(Var),
    Concat(Vec<Var>),
    Sum(Var),
    Mean(Var),
    MeanAxis(Var, usize),
    SliceLast(Var, usize),
    MaskMul(Var, Arc<Vec<f64>>),
    Separable(Var, Arc<SeparableMap>),
    Radial(Var, Arc<RadialBins>),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradient tape. Every op appends a node; nodes are in topological order by
/// construction because inputs must exist before they can be referenced.
///
/// A graph is built per forward pass and dropped afterwards. It is `Send`
/// but not meant to be shared.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Result of [`Graph::backward`]: one gradient per node that requires it.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the root with respect to `v`. Leaves that require grad but
    /// are unreachable from the root get zeros.
    pub fn get(&self, v: Var) -> Option<Tensor> {
        let shape = self.shapes.get(v.0)?.clone();
        match &self.grads[v.0] {
            Some(g) => Some(Tensor::from_parts(shape, g.clone())),
            None => Some(Tensor::zeros(shape)),
        }
    }

    pub fn wrt(&self, v: Var) -> Tensor {
        self.get(v).expect("variable belongs to this graph")
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    // ---- elementwise ---------------------------------------------------

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let bc = Bcast::resolve(av.shape(), bv.shape())?;
        let (an, bn) = (av.numel(), bv.numel());
        let (ad, bd) = (av.data(), bv.data());
        let data: Vec<f64> = (0..an)
            .map(|i| {
                let x = ad[i];
                let y = bd[bc.index(i, an, bn)];
                match kind {
                    Binary::Add => x + y,
                    Binary::Sub => x - y,
                    Binary::Mul => x * y,
                    Binary::Div => x / y,
                }
            })
            .collect();
        let value = Tensor::from_parts(av.shape().to_vec(), data);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Binary(kind, a, b, bc), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Div, a, b)
    }

    fn unary(&mut self, kind: Unary, a: Var) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        if let Unary::Log = kind {
            if let Some(x) = av.data().iter().find(|&&x| !(x > 0.0)) {
                return Err(Error::Domain(format!("log of non-positive value {x}")));
            }
        }
        if let Unary::Sqrt = kind {
            if let Some(x) = av.data().iter().find(|&&x| !(x >= 0.0)) {
                return Err(Error::Domain(format!("sqrt of negative value {x}")));
            }
        }
        let value = av.map(|x| match kind {
            Unary::Abs => x.abs(),
            Unary::Square => x * x,
            Unary::Sqrt => x.sqrt(),
            Unary::Log => x.ln(),
            Unary::Exp => x.exp(),
            Unary::Tanh => x.tanh(),
            Unary::Sigmoid => sigmoid(x),
            Unary::Softplus => softplus(x),
            Unary::LeakyRelu(s) => {
                if x > 0.0 {
                    x
                } else {
                    s * x
                }
            }
            Unary::Clamp(lo, hi) => x.clamp(lo, hi),
            Unary::Scale(s) => s * x,
            Unary::AddScalar(s) => x + s,
        });
        let rg = self.rg(a);
        Ok(self.push(value, Op::Unary(kind, a), rg))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(Unary::Abs, a).expect("abs is total")
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(Unary::Square, a).expect("square is total")
    }

    /// Errors on negative input.
    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Sqrt, a)
    }

    /// Errors on non-positive input.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Log, a)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(Unary::Exp, a).expect("exp is total")
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Unary::Tanh, a).expect("tanh is total")
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Unary::Sigmoid, a).expect("sigmoid is total")
    }

    /// `ln(1 + e^x)`, so `-ln sigmoid(x) = softplus(-x)`.
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(Unary::Softplus, a).expect("softplus is total")
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.unary(Unary::LeakyRelu(slope), a).expect("leaky relu is total")
    }

    /// Gradient passes through only inside `[lo, hi]`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(Unary::Clamp(lo, hi), a).expect("clamp is total")
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(Unary::Scale(s), a).expect("scale is total")
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        self.unary(Unary::AddScalar(s), a).expect("add_scalar is total")
    }

    /// Multiply by a constant mask repeated over the leading dims.
    pub fn mask_mul(&mut self, a: Var, mask: Arc<Vec<f64>>) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        if mask.is_empty() || !av.numel().is_multiple_of(mask.len()) {
            return Err(Error::shape(format!(
                "mask of {} values does not tile {:?}",
                mask.len(),
                av.shape()
            )));
        }
        let m = mask.len();
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x * mask[i % m])
            .collect();
        let value = Tensor::from_parts(av.shape().to_vec(), data);
        let rg = self.rg(a);
        Ok(self.push(value, Op::MaskMul(a, mask), rg))
    }

    // ---- linear algebra --------------------------------------------------

    /// `[m, k] x [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (sa, sb) = (av.shape(), bv.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape(format!("matmul {sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        kernels::gemm(m, k, n, av.data(), false, bv.data(), false, 0.0, &mut out);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), rg))
    }

    /// Input `[B, Cin, H, W]`, weight `[Cout, Cin, k, k]`.
    pub fn conv2d(&mut self, input: Var, weight: Var, stride: usize, padding: usize) -> Result<Var> {
        let (xv, wv) = (&self.nodes[input.0].value, &self.nodes[weight.0].value);
        let (sx, sw) = (xv.shape(), wv.shape());
        if sx.len() != 4 || sw.len() != 4 || sx[1] != sw[1] || sw[2] != sw[3] || stride == 0 {
            return Err(Error::shape(format!("conv2d input {sx:?} weight {sw:?}")));
        }
        let geom = ConvGeom {
            channels: sx[1],
            height: sx[2],
            width: sx[3],
            kernel: sw[2],
            stride,
            padding,
        };
        if sx[2] + 2 * padding < sw[2] || sx[3] + 2 * padding < sw[2] {
            return Err(Error::shape(format!("conv2d kernel {sw:?} larger than padded input {sx:?}")));
        }
        let (batch, cout) = (sx[0], sw[0]);
        let cols = kernels::im2col(xv.data(), batch, geom);
        let l = geom.out_len();
        let mut out = vec![0.0; cout * batch * l];
        kernels::gemm(cout, geom.col_rows(), batch * l, wv.data(), false, &cols, false, 0.0, &mut out);
        let out = kernels::channel_to_batch_major(&out, batch, cout, l);
        let value = Tensor::from_parts(vec![batch, cout, geom.out_height(), geom.out_width()], out);
        let rg = self.rg(input) || self.rg(weight);
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                weight,
                geom,
                cols,
            },
            rg,
        ))
    }

    /// Input `[B, Cin, H, W]`, weight `[Cin, Cout, k, k]`; output spatial size
    /// `(H - 1) * stride - 2 * padding + k`.
    pub fn conv_transpose2d(
        &mut self,
        input: Var,
        weight: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let (xv, wv) = (&self.nodes[input.0].value, &self.nodes[weight.0].value);
        let (sx, sw) = (xv.shape(), wv.shape());
        if sx.len() != 4 || sw.len() != 4 || sx[1] != sw[0] || sw[2] != sw[3] || stride == 0 {
            return Err(Error::shape(format!(
                "conv_transpose2d input {sx:?} weight {sw:?}"
            )));
        }
        let (batch, cin, hin, win) = (sx[0], sx[1], sx[2], sx[3]);
        let (cout, k) = (sw[1], sw[2]);
        let hout = ((hin - 1) * stride + k)
            .checked_sub(2 * padding)
            .ok_or_else(|| Error::shape("conv_transpose2d padding too large"))?;
        let wout = ((win - 1) * stride + k)
            .checked_sub(2 * padding)
            .ok_or_else(|| Error::shape("conv_transpose2d padding too large"))?;
        let geom = ConvGeom {
            channels: cout,
            height: hout,
            width: wout,
            kernel: k,
            stride,
            padding,
        };
        debug_assert_eq!(geom.out_height(), hin);
        let lin = hin * win;
        let xm = kernels::batch_to_channel_major(xv.data(), batch, cin, lin);
        let mut cols = vec![0.0; geom.col_rows() * batch * lin];
        kernels::gemm(geom.col_rows(), cin, batch * lin, wv.data(), true, &xm, false, 0.0, &mut cols);
        let out = kernels::col2im(&cols, batch, geom);
        let value = Tensor::from_parts(vec![batch, cout, hout, wout], out);
        let rg = self.rg(input) || self.rg(weight);
        Ok(self.push(
            value,
            Op::ConvTranspose2d {
                input,
                weight,
                geom,
            },
            rg,
        ))
    }

    /// Add `bias[c]` to every element of channel `c` (axis 1).
    pub fn channel_bias(&mut self, input: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (&self.nodes[input.0].value, &self.nodes[bias.0].value);
        let sx = xv.shape();
        if sx.len() < 2 || bv.shape().len() != 1 || bv.numel() != sx[1] {
            return Err(Error::shape(format!(
                "channel bias {:?} for input {sx:?}",
                bv.shape()
            )));
        }
        let c = sx[1];
        let inner: usize = sx[2..].iter().product();
        let bd = bv.data();
        let data = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + bd[(i / inner) % c])
            .collect();
        let value = Tensor::from_parts(sx.to_vec(), data);
        let rg = self.rg(input) || self.rg(bias);
        Ok(self.push(value, Op::ChannelBias(input, bias), rg))
    }

    /// Apply `L X R^T` to every trailing 2-D plane.
    pub(crate) fn separable(&mut self, input: Var, map: Arc<SeparableMap>) -> Result<Var> {
        let xv = &self.nodes[input.0].value;
        let s = xv.shape();
        if s.len() < 2 || s[s.len() - 2] != map.rows || s[s.len() - 1] != map.cols {
            return Err(Error::shape(format!(
                "separable map {}x{} on {s:?}",
                map.rows, map.cols
            )));
        }
        let planes = xv.numel() / (map.rows * map.cols);
        let out = kernels::separable(
            xv.data(),
            planes,
            map.rows,
            map.cols,
            &map.left,
            map.out_rows,
            &map.right,
            map.out_cols,
        );
        let mut shape = s.to_vec();
        let n = shape.len();
        shape[n - 2] = map.out_rows;
        shape[n - 1] = map.out_cols;
        let rg = self.rg(input);
        Ok(self.push(Tensor::from_parts(shape, out), Op::Separable(input, map), rg))
    }

    /// Ring means over the trailing `H x W` plane, computed by the
    /// cumulative-sum bin-transition scheme.
    pub(crate) fn radial(&mut self, input: Var, bins: Arc<RadialBins>) -> Result<Var> {
        let xv = &self.nodes[input.0].value;
        let s = xv.shape();
        if s.len() < 2 || s[s.len() - 2] != bins.height || s[s.len() - 1] != bins.width {
            return Err(Error::shape(format!(
                "radial bins for {}x{} on {s:?}",
                bins.height, bins.width
            )));
        }
        if bins.ranges.is_empty() {
            return Err(Error::shape(format!(
                "{}x{} plane has no complete radial bin",
                bins.height, bins.width
            )));
        }
        let plane = bins.height * bins.width;
        let planes = xv.numel() / plane;
        let nb = bins.ranges.len();
        let mut out = Vec::with_capacity(planes * nb);
        let mut csum = vec![0.0; plane];
        for p in 0..planes {
            let src = &xv.data()[p * plane..(p + 1) * plane];
            let mut acc = 0.0;
            for (slot, &idx) in csum.iter_mut().zip(&bins.order) {
                acc += src[idx];
                *slot = acc;
            }
            for &(start, end) in &bins.ranges {
                // csim[rind[k+1]] - csim[rind[k]] with rind[k] = start - 1
                out.push((csum[end - 1] - csum[start - 1]) / (end - start) as f64);
            }
        }
        let mut shape = s[..s.len() - 2].to_vec();
        shape.push(nb);
        let rg = self.rg(input);
        Ok(self.push(Tensor::from_parts(shape, out), Op::Radial(input, bins), rg))
    }

    // ---- shape ---------------------------------------------------------

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.nodes[a.0].value.clone().reshape(shape.to_vec())?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    /// Concatenate along axis 0; trailing dims must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat of nothing"))?;
        let tail = self.shape(*first).get(1..).unwrap_or(&[]).to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for &p in parts {
            let v = &self.nodes[p.0].value;
            if v.shape().is_empty() || v.shape()[1..] != tail[..] {
                return Err(Error::shape(format!(
                    "concat {:?} with trailing {tail:?}",
                    v.shape()
                )));
            }
            lead += v.shape()[0];
            data.extend_from_slice(v.data());
        }
        let mut shape = vec![lead];
        shape.extend(tail);
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::from_parts(shape, data), Op::Concat(parts.to_vec()), rg))
    }

    /// Keep the last-axis range `[start, start + len)`.
    pub fn slice_last(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let v = &self.nodes[a.0].value;
        let s = v.shape();
        let last = *s.last().ok_or_else(|| Error::shape("slice of a scalar"))?;
        if len == 0 || start + len > last {
            return Err(Error::shape(format!("slice {start}+{len} of {last}")));
        }
        let rows = v.numel() / last;
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&v.data()[r * last + start..r * last + start + len]);
        }
        let mut shape = s.to_vec();
        *shape.last_mut().unwrap() = len;
        let rg = self.rg(a);
        Ok(self.push(Tensor::from_parts(shape, data), Op::SliceLast(a, start), rg))
    }

    // ---- reductions ------------------------------------------------------

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.mean();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Mean(a), rg)
    }

    /// Mean over one axis, which is removed from the shape.
    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let v = &self.nodes[a.0].value;
        let s = v.shape();
        if axis >= s.len() {
            return Err(Error::shape(format!("axis {axis} of {s:?}")));
        }
        let outer: usize = s[..axis].iter().product();
        let n = s[axis];
        let inner: usize = s[axis + 1..].iter().product();
        let mut out = vec![0.0; outer * inner];
        let d = v.data();
        for o in 0..outer {
            for k in 0..n {
                let src = &d[(o * n + k) * inner..][..inner];
                for (dst, &x) in out[o * inner..][..inner].iter_mut().zip(src) {
                    *dst += x;
                }
            }
        }
        let inv = 1.0 / n as f64;
        out.iter_mut().for_each(|x| *x *= inv);
        let mut shape = s.to_vec();
        shape.remove(axis);
        let rg = self.rg(a);
        Ok(self.push(Tensor::from_parts(shape, out), Op::MeanAxis(a, axis), rg))
    }

    // ---- backward --------------------------------------------------------

    /// Reverse pass from a one-element root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let rv = &self.nodes[root.0].value;
        if rv.numel() != 1 {
            return Err(Error::contract(format!(
                "backward root must be scalar, got shape {:?}",
                rv.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);
        for id in (0..=root.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads);
            grads[id] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        // only keep what leaves need; interior grads are still there but harmless
        Ok(Gradients { grads, shapes })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.rg(v) {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.numel()]);
        f(slot);
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::Binary(kind, a, b, bc) => {
                let (ad, bd) = (val(*a).data(), val(*b).data());
                let (an, bn) = (ad.len(), bd.len());
                self.accumulate(grads, *a, |ga| match kind {
                    Binary::Add | Binary::Sub => ga.iter_mut().zip(g).for_each(|(x, &y)| *x += y),
                    Binary::Mul => {
                        for i in 0..an {
                            ga[i] += g[i] * bd[bc.index(i, an, bn)];
                        }
                    }
                    Binary::Div => {
                        for i in 0..an {
                            ga[i] += g[i] / bd[bc.index(i, an, bn)];
                        }
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for i in 0..an {
                        let j = bc.index(i, an, bn);
                        gb[j] += match kind {
                            Binary::Add => g[i],
                            Binary::Sub => -g[i],
                            Binary::Mul => g[i] * ad[i],
                            Binary::Div => -g[i] * ad[i] / (bd[j] * bd[j]),
                        };
                    }
                });
            }
            Op::Unary(kind, a) => {
                let x = val(*a).data();
                let y = node.value.data();
                self.accumulate(grads, *a, |ga| {
                    for i in 0..ga.len() {
                        let d = match *kind {
                            Unary::Abs => {
                                if x[i] > 0.0 {
                                    1.0
                                } else if x[i] < 0.0 {
                                    -1.0
                                } else {
                                    0.0
                                }
                            }
                            Unary::Square => 2.0 * x[i],
                            Unary::Sqrt => {
                                if y[i] > 0.0 {
                                    0.5 / y[i]
                                } else {
                                    0.0
                                }
                            }
                            Unary::Log => 1.0 / x[i],
                            Unary::Exp => y[i],
                            Unary::Tanh => 1.0 - y[i] * y[i],
                            Unary::Sigmoid => y[i] * (1.0 - y[i]),
                            Unary::Softplus => sigmoid(x[i]),
                            Unary::LeakyRelu(s) => {
                                if x[i] > 0.0 {
                                    1.0
                                } else {
                                    s
                                }
                            }
                            Unary::Clamp(lo, hi) => {
                                if x[i] >= lo && x[i] <= hi {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                            Unary::Scale(s) => s,
                            Unary::AddScalar(_) => 1.0,
                        };
                        ga[i] += g[i] * d;
                    }
                });
            }
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                self.accumulate(grads, *a, |ga| {
                    kernels::gemm(m, n, k, g, false, bv.data(), true, 1.0, ga);
                });
                self.accumulate(grads, *b, |gb| {
                    kernels::gemm(k, m, n, av.data(), true, g, false, 1.0, gb);
                });
            }
            Op::Conv2d {
                input,
                weight,
                geom,
                cols,
            } => {
                let batch = val(*input).shape()[0];
                let wv = val(*weight);
                let cout = wv.shape()[0];
                let l = geom.out_len();
                let gm = kernels::batch_to_channel_major(g, batch, cout, l);
                self.accumulate(grads, *weight, |gw| {
                    kernels::gemm(cout, batch * l, geom.col_rows(), &gm, false, cols, true, 1.0, gw);
                });
                self.accumulate(grads, *input, |gx| {
                    let mut dcols = vec![0.0; geom.col_rows() * batch * l];
                    kernels::gemm(geom.col_rows(), cout, batch * l, wv.data(), true, &gm, false, 0.0, &mut dcols);
                    let dx = kernels::col2im(&dcols, batch, *geom);
                    gx.iter_mut().zip(dx).for_each(|(a, b)| *a += b);
                });
            }
            Op::ConvTranspose2d {
                input,
                weight,
                geom,
            } => {
                let xv = val(*input);
                let wv = val(*weight);
                let (batch, cin) = (xv.shape()[0], xv.shape()[1]);
                let lin = xv.shape()[2] * xv.shape()[3];
                let dcols = kernels::im2col(g, batch, *geom);
                self.accumulate(grads, *weight, |gw| {
                    let xm = kernels::batch_to_channel_major(xv.data(), batch, cin, lin);
                    kernels::gemm(cin, batch * lin, geom.col_rows(), &xm, false, &dcols, true, 1.0, gw);
                });
                self.accumulate(grads, *input, |gx| {
                    let mut dxm = vec![0.0; cin * batch * lin];
                    kernels::gemm(cin, geom.col_rows(), batch * lin, wv.data(), false, &dcols, false, 0.0, &mut dxm);
                    let dx = kernels::channel_to_batch_major(&dxm, batch, cin, lin);
                    gx.iter_mut().zip(dx).for_each(|(a, b)| *a += b);
                });
            }
            Op::ChannelBias(input, bias) => {
                let s = node.value.shape();
                let c = s[1];
                let inner: usize = s[2..].iter().product();
                self.accumulate(grads, *input, |gx| {
                    gx.iter_mut().zip(g).for_each(|(a, &b)| *a += b);
                });
                self.accumulate(grads, *bias, |gb| {
                    for (i, &gi) in g.iter().enumerate() {
                        gb[(i / inner) % c] += gi;
                    }
                });
            }
            Op::Reshape(a) => {
                self.accumulate(grads, *a, |ga| ga.iter_mut().zip(g).for_each(|(x, &y)| *x += y));
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = val(p).numel();
                    self.accumulate(grads, p, |gp| {
                        gp.iter_mut()
                            .zip(&g[offset..offset + n])
                            .for_each(|(x, &y)| *x += y)
                    });
                    offset += n;
                }
            }
            Op::Sum(a) => {
                let g0 = g[0];
                self.accumulate(grads, *a, |ga| ga.iter_mut().for_each(|x| *x += g0));
            }
            Op::Mean(a) => {
                let n = val(*a).numel() as f64;
                let g0 = g[0] / n;
                self.accumulate(grads, *a, |ga| ga.iter_mut().for_each(|x| *x += g0));
            }
            Op::MeanAxis(a, axis) => {
                let s = val(*a).shape();
                let outer: usize = s[..*axis].iter().product();
                let n = s[*axis];
                let inner: usize = s[axis + 1..].iter().product();
                let inv = 1.0 / n as f64;
                self.accumulate(grads, *a, |ga| {
                    for o in 0..outer {
                        for k in 0..n {
                            let dst = &mut ga[(o * n + k) * inner..][..inner];
                            for (d, &gi) in dst.iter_mut().zip(&g[o * inner..][..inner]) {
                                *d += gi * inv;
                            }
                        }
                    }
                });
            }
            Op::SliceLast(a, start) => {
                let last = *val(*a).shape().last().unwrap();
                let len = *node.value.shape().last().unwrap();
                self.accumulate(grads, *a, |ga| {
                    for (r, chunk) in g.chunks(len).enumerate() {
                        for (j, &gi) in chunk.iter().enumerate() {
                            ga[r * last + start + j] += gi;
                        }
                    }
                });
            }
            Op::MaskMul(a, mask) => {
                let m = mask.len();
                self.accumulate(grads, *a, |ga| {
                    for (i, x) in ga.iter_mut().enumerate() {
                        *x += g[i] * mask[i % m];
                    }
                });
            }
            Op::Separable(a, map) => {
                let planes = val(*a).numel() / (map.rows * map.cols);
                let dx = kernels::separable_adjoint(
                    g,
                    planes,
                    map.rows,
                    map.cols,
                    &map.left,
                    map.out_rows,
                    &map.right,
                    map.out_cols,
                );
                self.accumulate(grads, *a, |ga| ga.iter_mut().zip(dx).for_each(|(x, y)| *x += y));
            }
            Op::Radial(a, bins) => {
                let plane = bins.height * bins.width;
                let nb = bins.ranges.len();
                self.accumulate(grads, *a, |ga| {
                    for (p, gp) in g.chunks(nb).enumerate() {
                        let dst = &mut ga[p * plane..(p + 1) * plane];
                        for (&(start, end), &gk) in bins.ranges.iter().zip(gp) {
                            let share = gk / (end - start) as f64;
                            for &idx in &bins.order[start..end] {
                                dst[idx] += share;
                            }
                        }
                    }
                });
            }
        }
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn add_elementwise() {
        let mut g = Graph::new();
        let a = g.constant(t(&[1, 2], &[1.0, 2.0]));
        let b = g.constant(t(&[1, 2], &[3.0, 4.0]));
        let c = g.add(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[4.0, 6.0]);
    }

    #[test]
    fn identity_matmul() {
        let mut g = Graph::new();
        let i2 = g.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let a = g.constant(t(&[2, 2], &[0.3, -1.5, 2.25, 7.0]));
        let c = g.matmul(i2, a).unwrap();
        assert_eq!(g.value(c).data(), g.value(a).data());
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::scalar(0.0));
        let s = g.sigmoid(a);
        assert_eq!(g.value(s).item().unwrap(), 0.5);
    }

    #[test]
    fn shape_mismatch_is_invalid_shape() {
        let mut g = Graph::new();
        let a = g.constant(t(&[2, 3], &[0.0; 6]));
        let b = g.constant(t(&[2, 2], &[0.0; 4]));
        assert!(matches!(g.add(a, b), Err(Error::InvalidShape(_))));
        assert!(matches!(g.matmul(a, a), Err(Error::InvalidShape(_))));
    }

    #[test]
    fn log_of_nonpositive_is_domain_error() {
        let mut g = Graph::new();
        let a = g.constant(t(&[2], &[1.0, 0.0]));
        assert!(matches!(g.log(a), Err(Error::Domain(_))));
    }

    #[test]
    fn grad_of_sum_is_ones() {
        let mut g = Graph::new();
        let x = g.param(t(&[2, 3], &[1.0, -2.0, 3.0, 0.5, 0.0, 9.0]));
        let s = g.sum(x);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(x).data(), &[1.0; 6]);
    }

    #[test]
    fn grad_of_mean_square() {
        let xs = [1.0, -2.0, 3.0, 0.5];
        let mut g = Graph::new();
        let x = g.param(t(&[4], &xs));
        let sq = g.square(x);
        let m = g.mean(sq);
        let grads = g.backward(m).unwrap();
        let want: Vec<f64> = xs.iter().map(|v| 2.0 * v / 4.0).collect();
        assert_eq!(grads.wrt(x).data(), &want[..]);
    }

    #[test]
    fn non_scalar_root_is_contract_error() {
        let mut g = Graph::new();
        let x = g.param(t(&[2], &[1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn unreachable_leaf_gets_zero_grad() {
        let mut g = Graph::new();
        let x = g.param(t(&[3], &[1.0, 2.0, 3.0]));
        let y = g.param(t(&[2], &[1.0, 2.0]));
        let s = g.sum(x);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(y).data(), &[0.0, 0.0]);
    }

    #[test]
    fn broadcast_modes() {
        let mut g = Graph::new();
        let a = g.constant(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let outer = g.constant(t(&[3], &[10.0, 20.0, 30.0]));
        let inner = g.constant(t(&[2, 1], &[100.0, 200.0]));
        let s = g.constant(Tensor::scalar(0.5));
        let o = g.add(a, outer).unwrap();
        assert_eq!(g.value(o).data(), &[11.0, 22.0, 33.0, 14.0, 25.0, 36.0]);
        let i = g.add(a, inner).unwrap();
        assert_eq!(g.value(i).data(), &[101.0, 102.0, 103.0, 204.0, 205.0, 206.0]);
        let m = g.mul(a, s).unwrap();
        assert_eq!(g.value(m).data(), &[0.5, 1.0, 1.5, 2.0, 2.5, 3.0]);
    }
}
