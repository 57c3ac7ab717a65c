//! Core differentiable ops: broadcasting arithmetic, matmul, shape
//! manipulation, reductions, and row gather/scatter.

use std::rc::Rc;

use crate::error::{Result, TensorError};
use crate::tensor::{numel, Tensor};

/// Numpy-style broadcast of two shapes (aligned from the right).
pub fn broadcast_shapes(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i + a.len() >= n { a[i + a.len() - n] } else { 1 };
        let db = if i + b.len() >= n { b[i + b.len() - n] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// For every linear index of `out`, the linear index into `input` under
/// broadcasting. `None` when the shapes are identical.
fn broadcast_map(out: &[usize], input: &[usize]) -> Option<Rc<Vec<usize>>> {
    if out == input {
        return None;
    }
    let n = out.len();
    let offset = n - input.len();
    let mut in_strides = vec![0usize; n];
    let mut s = 1;
    for i in (0..input.len()).rev() {
        in_strides[i + offset] = if input[i] == 1 { 0 } else { s };
        s *= input[i];
    }
    let total = numel(out);
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; n];
    let mut lin = 0usize;
    for _ in 0..total {
        map.push(lin);
        for d in (0..n).rev() {
            idx[d] += 1;
            lin += in_strides[d];
            if idx[d] < out[d] {
                break;
            }
            lin -= in_strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    Some(Rc::new(map))
}

fn reduce_to(g: &[f64], map: &Option<Rc<Vec<usize>>>, len: usize) -> Vec<f64> {
    match map {
        None => g.to_vec(),
        Some(m) => {
            let mut out = vec![0.0; len];
            for (o, &i) in m.iter().enumerate() {
                out[i] += g[o];
            }
            out
        }
    }
}

#[derive(Clone, Copy)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn name(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Div => "div",
        }
    }

    #[inline]
    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => a / b,
        }
    }
}

impl Tensor {
    fn binary(&self, other: &Tensor, op: BinOp) -> Result<Tensor> {
        let shape = broadcast_shapes(self.shape(), other.shape())
            .ok_or_else(|| TensorError::shape(op.name(), self.shape(), other.shape()))?;
        let map_a = broadcast_map(&shape, self.shape());
        let map_b = broadcast_map(&shape, other.shape());
        let n = numel(&shape);
        let data = {
            let a = self.data();
            let b = other.data();
            match (&map_a, &map_b) {
                (None, None) => a.iter().zip(b.iter()).map(|(x, y)| op.apply(*x, *y)).collect(),
                _ => (0..n)
                    .map(|o| {
                        let ia = map_a.as_ref().map_or(o, |m| m[o]);
                        let ib = map_b.as_ref().map_or(o, |m| m[o]);
                        op.apply(a[ia], b[ib])
                    })
                    .collect(),
            }
        };
        let (ta, tb) = (self.clone(), other.clone());
        Tensor::from_op(op.name(), data, shape, &[self, other], move |g, _out| {
            let (la, lb) = (ta.numel(), tb.numel());
            let ga = ta.requires_grad().then(|| {
                let local: Vec<f64> = match op {
                    BinOp::Add | BinOp::Sub => g.to_vec(),
                    BinOp::Mul => {
                        let b = tb.data();
                        g.iter()
                            .enumerate()
                            .map(|(o, gv)| gv * b[map_b.as_ref().map_or(o, |m| m[o])])
                            .collect()
                    }
                    BinOp::Div => {
                        let b = tb.data();
                        g.iter()
                            .enumerate()
                            .map(|(o, gv)| gv / b[map_b.as_ref().map_or(o, |m| m[o])])
                            .collect()
                    }
                };
                reduce_to(&local, &map_a, la)
            });
            let gb = tb.requires_grad().then(|| {
                let local: Vec<f64> = match op {
                    BinOp::Add => g.to_vec(),
                    BinOp::Sub => g.iter().map(|v| -v).collect(),
                    BinOp::Mul => {
                        let a = ta.data();
                        g.iter()
                            .enumerate()
                            .map(|(o, gv)| gv * a[map_a.as_ref().map_or(o, |m| m[o])])
                            .collect()
                    }
                    BinOp::Div => {
                        let a = ta.data();
                        let b = tb.data();
                        g.iter()
                            .enumerate()
                            .map(|(o, gv)| {
                                let av = a[map_a.as_ref().map_or(o, |m| m[o])];
                                let bv = b[map_b.as_ref().map_or(o, |m| m[o])];
                                -gv * av / (bv * bv)
                            })
                            .collect()
                    }
                };
                reduce_to(&local, &map_b, lb)
            });
            vec![ga, gb]
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, BinOp::Add)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, BinOp::Sub)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, BinOp::Mul)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, BinOp::Div)
    }

    /// Elementwise map with derivative `df(x, y)` expressed through the
    /// input `x` and output `y`.
    pub(crate) fn unary<F, D>(&self, op: &'static str, f: F, df: D) -> Result<Tensor>
    where
        F: Fn(f64) -> f64,
        D: Fn(f64, f64) -> f64 + 'static,
    {
        let data: Vec<f64> = self.data().iter().map(|&x| f(x)).collect();
        let input = self.clone();
        Tensor::from_op(op, data, self.shape().to_vec(), &[self], move |g, out| {
            let x = input.data();
            vec![Some(
                g.iter()
                    .zip(x.iter().zip(out))
                    .map(|(gv, (xv, yv))| gv * df(*xv, *yv))
                    .collect(),
            )]
        })
    }

    pub fn neg(&self) -> Result<Tensor> {
        self.unary("neg", |x| -x, |_, _| -1.0)
    }

    pub fn scale(&self, s: f64) -> Result<Tensor> {
        self.unary("scale", move |x| x * s, move |_, _| s)
    }

    pub fn add_scalar(&self, s: f64) -> Result<Tensor> {
        self.unary("add_scalar", move |x| x + s, |_, _| 1.0)
    }

    pub fn exp(&self) -> Result<Tensor> {
        self.unary("exp", f64::exp, |_, y| y)
    }

    pub fn ln(&self) -> Result<Tensor> {
        self.unary("ln", f64::ln, |x, _| 1.0 / x)
    }

    pub fn sqrt(&self) -> Result<Tensor> {
        self.unary("sqrt", f64::sqrt, |_, y| 0.5 / y)
    }

    pub fn square(&self) -> Result<Tensor> {
        self.unary("square", |x| x * x, |x, _| 2.0 * x)
    }

    /// |x| with subgradient 0 at the kink.
    pub fn abs(&self) -> Result<Tensor> {
        self.unary("abs", f64::abs, |x, _| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    pub fn powi(&self, n: i32) -> Result<Tensor> {
        self.unary("powi", move |x| x.powi(n), move |x, _| n as f64 * x.powi(n - 1))
    }

    pub fn broadcast_to(&self, shape: &[usize]) -> Result<Tensor> {
        let ok = broadcast_shapes(self.shape(), shape).is_some_and(|s| s == shape);
        if !ok {
            return Err(TensorError::shape("broadcast_to", self.shape(), shape));
        }
        Tensor::zeros(shape).add(self)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.numel() {
            return Err(TensorError::shape("reshape", self.shape(), shape));
        }
        Tensor::from_op("reshape", self.to_vec(), shape.to_vec(), &[self], |g, _| {
            vec![Some(g.to_vec())]
        })
    }

    /// General axis permutation (copies).
    pub fn permute(&self, axes: &[usize]) -> Result<Tensor> {
        let n = self.ndim();
        let mut seen = vec![false; n];
        if axes.len() != n || axes.iter().any(|&a| a >= n || std::mem::replace(&mut seen[a], true)) {
            return Err(TensorError::invalid(
                "permute",
                format!("bad axes {axes:?} for rank {n}"),
            ));
        }
        let in_shape = self.shape().to_vec();
        let out_shape: Vec<usize> = axes.iter().map(|&a| in_shape[a]).collect();
        let mut in_strides = vec![1usize; n];
        for i in (0..n.saturating_sub(1)).rev() {
            in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
        }
        // Source index for every destination index.
        let total = self.numel();
        let strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
        let mut map = Vec::with_capacity(total);
        let mut idx = vec![0usize; n];
        let mut lin = 0usize;
        for _ in 0..total {
            map.push(lin);
            for d in (0..n).rev() {
                idx[d] += 1;
                lin += strides[d];
                if idx[d] < out_shape[d] {
                    break;
                }
                lin -= strides[d] * idx[d];
                idx[d] = 0;
            }
        }
        let data = {
            let src = self.data();
            map.iter().map(|&i| src[i]).collect()
        };
        Tensor::from_op("permute", data, out_shape, &[self], move |g, _| {
            let mut gi = vec![0.0; total];
            for (o, &i) in map.iter().enumerate() {
                gi[i] = g[o];
            }
            vec![Some(gi)]
        })
    }

    /// Swaps the last two axes.
    pub fn transpose(&self) -> Result<Tensor> {
        let n = self.ndim();
        if n < 2 {
            return Err(TensorError::invalid("transpose", "rank < 2"));
        }
        let mut axes: Vec<usize> = (0..n).collect();
        axes.swap(n - 2, n - 1);
        self.permute(&axes)
    }

    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::invalid("concat", "no inputs"))?;
        let rank = first.ndim();
        if axis >= rank {
            return Err(TensorError::invalid("concat", format!("axis {axis} >= rank {rank}")));
        }
        for p in parts {
            let ok = p.ndim() == rank && (0..rank).all(|d| d == axis || p.shape()[d] == first.shape()[d]);
            if !ok {
                return Err(TensorError::shape("concat", first.shape(), p.shape()));
            }
        }
        let outer: usize = first.shape()[..axis].iter().product();
        let inner: usize = first.shape()[axis + 1..].iter().product();
        let sizes: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total_axis: usize = sizes.iter().sum();
        let mut shape = first.shape().to_vec();
        shape[axis] = total_axis;
        let mut data = Vec::with_capacity(numel(&shape));
        let borrowed: Vec<_> = parts.iter().map(|p| p.data()).collect();
        for o in 0..outer {
            for (p, &s) in borrowed.iter().zip(&sizes) {
                data.extend_from_slice(&p[o * s * inner..(o + 1) * s * inner]);
            }
        }
        drop(borrowed);
        Tensor::from_op("concat", data, shape, parts, move |g, _| {
            let mut grads: Vec<Vec<f64>> = sizes.iter().map(|s| Vec::with_capacity(outer * s * inner)).collect();
            let mut pos = 0;
            for _ in 0..outer {
                for (gi, &s) in grads.iter_mut().zip(&sizes) {
                    gi.extend_from_slice(&g[pos..pos + s * inner]);
                    pos += s * inner;
                }
            }
            grads.into_iter().map(Some).collect()
        })
    }

    /// Half-open range `[start, end)` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Result<Tensor> {
        let shape = self.shape().to_vec();
        if axis >= shape.len() || start > end || end > shape[axis] {
            return Err(TensorError::invalid(
                "slice",
                format!("range {start}..{end} on axis {axis} of {shape:?}"),
            ));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let len = end - start;
        let full = shape[axis];
        let mut data = Vec::with_capacity(outer * len * inner);
        {
            let src = self.data();
            for o in 0..outer {
                let base = (o * full + start) * inner;
                data.extend_from_slice(&src[base..base + len * inner]);
            }
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let total = self.numel();
        Tensor::from_op("slice", data, out_shape, &[self], move |g, _| {
            let mut gi = vec![0.0; total];
            for o in 0..outer {
                let base = (o * full + start) * inner;
                gi[base..base + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(gi)]
        })
    }

    pub fn sum(&self) -> Result<Tensor> {
        let s: f64 = self.data().iter().sum();
        let n = self.numel();
        Tensor::from_op("sum", vec![s], vec![], &[self], move |g, _| vec![Some(vec![g[0]; n])])
    }

    pub fn mean(&self) -> Result<Tensor> {
        let n = self.numel();
        if n == 0 {
            return Err(TensorError::invalid("mean", "empty tensor"));
        }
        self.sum()?.scale(1.0 / n as f64)
    }

    pub fn sum_axis(&self, axis: usize, keepdim: bool) -> Result<Tensor> {
        let shape = self.shape().to_vec();
        if axis >= shape.len() {
            return Err(TensorError::invalid("sum_axis", format!("axis {axis} of {shape:?}")));
        }
        let outer: usize = shape[..axis].iter().product();
        let mid = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let mut data = vec![0.0; outer * inner];
        {
            let src = self.data();
            for o in 0..outer {
                for m in 0..mid {
                    let row = &src[(o * mid + m) * inner..(o * mid + m + 1) * inner];
                    for (d, s) in data[o * inner..(o + 1) * inner].iter_mut().zip(row) {
                        *d += s;
                    }
                }
            }
        }
        let mut out_shape = shape.clone();
        if keepdim {
            out_shape[axis] = 1;
        } else {
            out_shape.remove(axis);
        }
        Tensor::from_op("sum_axis", data, out_shape, &[self], move |g, _| {
            let mut gi = Vec::with_capacity(outer * mid * inner);
            for o in 0..outer {
                for _ in 0..mid {
                    gi.extend_from_slice(&g[o * inner..(o + 1) * inner]);
                }
            }
            vec![Some(gi)]
        })
    }

    pub fn mean_axis(&self, axis: usize, keepdim: bool) -> Result<Tensor> {
        let n = *self
            .shape()
            .get(axis)
            .ok_or_else(|| TensorError::invalid("mean_axis", "axis out of range"))?;
        self.sum_axis(axis, keepdim)?.scale(1.0 / n as f64)
    }

    /// Matrix product. Supports `(m,k)@(k,n)`, `(b,m,k)@(b,k,n)` and
    /// `(b,m,k)@(k,n)` (right operand shared across the batch).
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (a, b) = (self.shape().to_vec(), other.shape().to_vec());
        let err = || TensorError::shape("matmul", &a, &b);
        let (batch, m, k, n, shared_b) = match (a.len(), b.len()) {
            (2, 2) if a[1] == b[0] => (1, a[0], a[1], b[1], true),
            (3, 3) if a[0] == b[0] && a[2] == b[1] => (a[0], a[1], a[2], b[2], false),
            (3, 2) if a[2] == b[0] => (a[0], a[1], a[2], b[1], true),
            _ => return Err(err()),
        };
        let mut out = vec![0.0; batch * m * n];
        {
            let ad = self.data();
            let bd = other.data();
            if shared_b {
                // Fold the batch into the row dimension.
                gemm(batch * m, k, n, &ad, k, 1, &bd, n, 1, &mut out, 0.0);
            } else {
                for bi in 0..batch {
                    gemm(
                        m,
                        k,
                        n,
                        &ad[bi * m * k..(bi + 1) * m * k],
                        k,
                        1,
                        &bd[bi * k * n..(bi + 1) * k * n],
                        n,
                        1,
                        &mut out[bi * m * n..(bi + 1) * m * n],
                        0.0,
                    );
                }
            }
        }
        let out_shape = if a.len() == 2 { vec![m, n] } else { vec![batch, m, n] };
        let (ta, tb) = (self.clone(), other.clone());
        Tensor::from_op("matmul", out, out_shape, &[self, other], move |g, _| {
            let ad = ta.data();
            let bd = tb.data();
            let ga = ta.requires_grad().then(|| {
                let mut ga = vec![0.0; batch * m * k];
                if shared_b {
                    // dA = G B^T
                    gemm_raw(batch * m, n, k, g, n, 1, &bd, 1, n, &mut ga, k, 1, 0.0);
                } else {
                    for bi in 0..batch {
                        gemm_raw(
                            m,
                            n,
                            k,
                            &g[bi * m * n..],
                            n,
                            1,
                            &bd[bi * k * n..],
                            1,
                            n,
                            &mut ga[bi * m * k..],
                            k,
                            1,
                            0.0,
                        );
                    }
                }
                ga
            });
            let gb = tb.requires_grad().then(|| {
                if shared_b {
                    // dB = A^T G with the batch folded into rows
                    let mut gb = vec![0.0; k * n];
                    gemm_raw(k, batch * m, n, &ad, 1, k, g, n, 1, &mut gb, n, 1, 0.0);
                    gb
                } else {
                    let mut gb = vec![0.0; batch * k * n];
                    for bi in 0..batch {
                        gemm_raw(
                            k,
                            m,
                            n,
                            &ad[bi * m * k..],
                            1,
                            k,
                            &g[bi * m * n..],
                            n,
                            1,
                            &mut gb[bi * k * n..],
                            n,
                            1,
                            0.0,
                        );
                    }
                    gb
                }
            });
            vec![ga, gb]
        })
    }

    /// Gathers rows (first axis) by index.
    pub fn index_select(&self, indices: Rc<Vec<usize>>) -> Result<Tensor> {
        let shape = self.shape().to_vec();
        let rows = *shape
            .first()
            .ok_or_else(|| TensorError::invalid("index_select", "scalar input"))?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(TensorError::invalid("index_select", format!("index {bad} >= {rows}")));
        }
        let inner: usize = shape[1..].iter().product();
        let mut data = Vec::with_capacity(indices.len() * inner);
        {
            let src = self.data();
            for &i in indices.iter() {
                data.extend_from_slice(&src[i * inner..(i + 1) * inner]);
            }
        }
        let mut out_shape = shape.clone();
        out_shape[0] = indices.len();
        Tensor::from_op("index_select", data, out_shape, &[self], move |g, _| {
            let mut gi = vec![0.0; rows * inner];
            for (e, &i) in indices.iter().enumerate() {
                for (d, s) in gi[i * inner..(i + 1) * inner]
                    .iter_mut()
                    .zip(&g[e * inner..(e + 1) * inner])
                {
                    *d += s;
                }
            }
            vec![Some(gi)]
        })
    }

    /// Scatter-add of rows: `out[indices[e]] += self[e]`, with `rows` output rows.
    pub fn index_add(&self, indices: Rc<Vec<usize>>, rows: usize) -> Result<Tensor> {
        let shape = self.shape().to_vec();
        if shape.first() != Some(&indices.len()) {
            return Err(TensorError::invalid(
                "index_add",
                format!(
                    "{} indices for {} rows",
                    indices.len(),
                    shape.first().copied().unwrap_or(0)
                ),
            ));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(TensorError::invalid("index_add", format!("index {bad} >= {rows}")));
        }
        let inner: usize = shape[1..].iter().product();
        let mut data = vec![0.0; rows * inner];
        {
            let src = self.data();
            for (e, &i) in indices.iter().enumerate() {
                for (d, s) in data[i * inner..(i + 1) * inner]
                    .iter_mut()
                    .zip(&src[e * inner..(e + 1) * inner])
                {
                    *d += s;
                }
            }
        }
        let mut out_shape = shape.clone();
        out_shape[0] = rows;
        Tensor::from_op("index_add", data, out_shape, &[self], move |g, _| {
            let mut gi = Vec::with_capacity(indices.len() * inner);
            for &i in indices.iter() {
                gi.extend_from_slice(&g[i * inner..(i + 1) * inner]);
            }
            vec![Some(gi)]
        })
    }
}

/// `c = a·b + beta·c` on contiguous row-major buffers with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    c: &mut [f64],
    beta: f64,
) {
    gemm_raw(m, k, n, a, rsa, csa, b, rsb, csb, c, n, 1, beta);
}

/// Strided dgemm wrapper. Bounds are checked against the extents implied
/// by the strides before handing raw pointers to `matrixmultiply`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_raw(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    let extent = |r: usize, cdim: usize, rs: usize, cs: usize| {
        if r == 0 || cdim == 0 {
            0
        } else {
            (r - 1) * rs + (cdim - 1) * cs + 1
        }
    };
    assert!(a.len() >= extent(m, k, rsa, csa), "gemm: lhs too short");
    assert!(b.len() >= extent(k, n, rsb, csb), "gemm: rhs too short");
    assert!(c.len() >= extent(m, n, rsc, csc), "gemm: output too short");
    // SAFETY: extents verified above; the three slices do not alias because
    // `c` is borrowed mutably.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}
