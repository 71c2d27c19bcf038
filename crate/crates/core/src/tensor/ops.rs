//! Differentiable primitives. Each op validates shapes, computes its value
//! and registers a gradient rule. Broadcasting is limited to adding a
//! trailing-dimension bias; everything else requires matching shapes or an
//! explicit row-wise op.

use std::sync::Arc;

use crate::error::{Error, Result};

use super::kernels::{self, AttnDims, ScanDims, ScanInputs};
use super::{Scalar, Tensor, Var};

/// Evaluation strategy for [`Var::selective_scan`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanMode {
    #[default]
    Sequential,
    Parallel,
}

fn same_shape<S: Scalar>(op: &'static str, a: &Tensor<S>, b: &Tensor<S>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

fn rank2<S: Scalar>(op: &'static str, t: &Tensor<S>) -> Result<(usize, usize)> {
    match t.shape() {
        &[r, c] => Ok((r, c)),
        s => Err(Error::shape(op, format!("expected a matrix, got shape {s:?}"))),
    }
}

fn like<S: Scalar>(t: &Tensor<S>, data: Vec<S>) -> Tensor<S> {
    Tensor::from_parts(t.shape().to_vec(), data)
}

impl<S: Scalar> Var<S> {
    fn unary(
        &self,
        f: impl Fn(S) -> S,
        df: impl Fn(S, S) -> S + 'static,
    ) -> Result<Var<S>> {
        let x = self.shared_value();
        let y: Vec<S> = x.data().iter().map(|&v| f(v)).collect();
        let out = like(&x, y);
        let y_saved = Arc::new(out.clone());
        Var::record(&[self], out, move |g, _| {
            let d = x
                .data()
                .iter()
                .zip(y_saved.data())
                .zip(g.data())
                .map(|((&xi, &yi), &gi)| gi * df(xi, yi))
                .collect();
            vec![Some(like(&x, d))]
        })
    }

    pub fn add(&self, other: &Var<S>) -> Result<Var<S>> {
        same_shape("add", self.value(), other.value())?;
        let data = self
            .value()
            .data()
            .iter()
            .zip(other.value().data())
            .map(|(&a, &b)| a + b)
            .collect();
        let out = like(self.value(), data);
        Var::record(&[self, other], out, |g, needs| {
            needs.iter().map(|&n| n.then(|| g.clone())).collect()
        })
    }

    pub fn sub(&self, other: &Var<S>) -> Result<Var<S>> {
        self.add(&other.neg()?)
    }

    pub fn mul(&self, other: &Var<S>) -> Result<Var<S>> {
        same_shape("mul", self.value(), other.value())?;
        let (a, b) = (self.shared_value(), other.shared_value());
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
        let out = like(&a, data);
        Var::record(&[self, other], out, move |g, needs| {
            let prod = |t: &Tensor<S>| {
                like(t, g.data().iter().zip(t.data()).map(|(&gi, &v)| gi * v).collect())
            };
            vec![needs[0].then(|| prod(&b)), needs[1].then(|| prod(&a))]
        })
    }

    /// Adds `bias` (`[n]`) to every last-dimension slice of `self`.
    pub fn add_bias(&self, bias: &Var<S>) -> Result<Var<S>> {
        let n = self.value().cols();
        if bias.shape() != [n] {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                lhs: self.shape().to_vec(),
                rhs: bias.shape().to_vec(),
            });
        }
        let b = bias.value().data();
        let mut data = self.value().data().to_vec();
        for row in data.chunks_exact_mut(n) {
            for (x, &bi) in row.iter_mut().zip(b) {
                *x += bi;
            }
        }
        let out = like(self.value(), data);
        Var::record(&[self, bias], out, move |g, needs| {
            let db = needs[1].then(|| {
                let mut acc = vec![S::zero(); n];
                for row in g.data().chunks_exact(n) {
                    for (a, &v) in acc.iter_mut().zip(row) {
                        *a += v;
                    }
                }
                Tensor::from_parts(vec![n], acc)
            });
            vec![needs[0].then(|| g.clone()), db]
        })
    }

    pub fn scale(&self, c: f64) -> Result<Var<S>> {
        let c = S::of(c);
        self.unary(move |x| x * c, move |_, _| c)
    }

    pub fn neg(&self) -> Result<Var<S>> {
        self.unary(|x| -x, |_, _| -S::one())
    }

    pub fn exp(&self) -> Result<Var<S>> {
        self.unary(|x| x.exp(), |_, y| y)
    }

    pub fn log(&self) -> Result<Var<S>> {
        if self.value().data().iter().any(|&v| v <= S::zero()) {
            return Err(Error::shape("log", "input must be strictly positive"));
        }
        self.unary(|x| x.ln(), |x, _| S::one() / x)
    }

    pub fn silu(&self) -> Result<Var<S>> {
        self.unary(kernels::silu, |x, _| kernels::silu_grad(x))
    }

    pub fn softplus(&self) -> Result<Var<S>> {
        self.unary(kernels::softplus, |x, _| kernels::sigmoid(x))
    }

    pub fn gelu(&self) -> Result<Var<S>> {
        self.unary(kernels::gelu, |x, _| kernels::gelu_grad(x))
    }

    /// `[m,k] · [k,n] → [m,n]`
    pub fn matmul(&self, other: &Var<S>) -> Result<Var<S>> {
        let (a, b) = (self.shared_value(), other.shared_value());
        let (m, k) = rank2("matmul", &a)?;
        let (k2, n) = rank2("matmul", &b)?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let mut c = vec![S::zero(); m * n];
        kernels::gemm_nn(a.data(), b.data(), &mut c, m, k, n);
        let out = Tensor::from_parts(vec![m, n], c);
        Var::record(&[self, other], out, move |g, needs| {
            let da = needs[0].then(|| {
                let mut d = vec![S::zero(); m * k];
                kernels::gemm_nt(g.data(), b.data(), &mut d, m, n, k);
                Tensor::from_parts(vec![m, k], d)
            });
            let db = needs[1].then(|| {
                let mut d = vec![S::zero(); k * n];
                kernels::gemm_tn(a.data(), g.data(), &mut d, m, k, n);
                Tensor::from_parts(vec![k, n], d)
            });
            vec![da, db]
        })
    }

    /// `[m,k] · [n,k]ᵀ → [m,n]`
    pub fn matmul_nt(&self, other: &Var<S>) -> Result<Var<S>> {
        let (a, b) = (self.shared_value(), other.shared_value());
        let (m, k) = rank2("matmul_nt", &a)?;
        let (n, k2) = rank2("matmul_nt", &b)?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul_nt",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let mut c = vec![S::zero(); m * n];
        kernels::gemm_nt(a.data(), b.data(), &mut c, m, k, n);
        let out = Tensor::from_parts(vec![m, n], c);
        Var::record(&[self, other], out, move |g, needs| {
            let da = needs[0].then(|| {
                let mut d = vec![S::zero(); m * k];
                kernels::gemm_nn(g.data(), b.data(), &mut d, m, n, k);
                Tensor::from_parts(vec![m, k], d)
            });
            let db = needs[1].then(|| {
                let mut d = vec![S::zero(); n * k];
                kernels::gemm_tn(g.data(), a.data(), &mut d, m, n, k);
                Tensor::from_parts(vec![n, k], d)
            });
            vec![da, db]
        })
    }

    pub fn softmax_lastdim(&self) -> Result<Var<S>> {
        if !self.value().is_finite() {
            return Err(Error::NonFinite { op: "softmax_lastdim" });
        }
        let n = self.value().cols();
        let mut data = self.value().data().to_vec();
        for row in data.chunks_exact_mut(n) {
            kernels::softmax_in_place(row);
        }
        let out = like(self.value(), data);
        let y = Arc::new(out.clone());
        Var::record(&[self], out, move |g, _| {
            let mut d = vec![S::zero(); y.numel()];
            for ((dr, yr), gr) in d
                .chunks_exact_mut(n)
                .zip(y.data().chunks_exact(n))
                .zip(g.data().chunks_exact(n))
            {
                let s = kernels::dot(yr, gr);
                for ((o, &yi), &gi) in dr.iter_mut().zip(yr).zip(gr) {
                    *o = yi * (gi - s);
                }
            }
            vec![Some(like(&y, d))]
        })
    }

    /// `x·gain/sqrt(mean(x²)+eps)` per last-dimension slice.
    pub fn rmsnorm(&self, gain: &Var<S>, eps: f64) -> Result<Var<S>> {
        let n = self.value().cols();
        if gain.shape() != [n] {
            return Err(Error::ShapeMismatch {
                op: "rmsnorm",
                lhs: self.shape().to_vec(),
                rhs: gain.shape().to_vec(),
            });
        }
        let (x, w) = (self.shared_value(), gain.shared_value());
        let eps = S::of(eps);
        let inv: Vec<S> = x
            .data()
            .chunks_exact(n)
            .map(|r| S::one() / (kernels::dot(r, r) / S::of(n as f64) + eps).sqrt())
            .collect();
        let mut data = vec![S::zero(); x.numel()];
        for ((o, r), &iv) in data.chunks_exact_mut(n).zip(x.data().chunks_exact(n)).zip(&inv) {
            for ((oi, &xi), &wi) in o.iter_mut().zip(r).zip(w.data()) {
                *oi = xi * iv * wi;
            }
        }
        let out = like(&x, data);
        Var::record(&[self, gain], out, move |g, needs| {
            let nf = S::of(n as f64);
            let mut dx = needs[0].then(|| vec![S::zero(); x.numel()]);
            let mut dw = needs[1].then(|| vec![S::zero(); n]);
            for (row, &iv) in inv.iter().enumerate() {
                let xr = x.row(row);
                let gr = g.row(row);
                if let Some(dw) = dw.as_mut() {
                    for j in 0..n {
                        dw[j] += gr[j] * xr[j] * iv;
                    }
                }
                if let Some(dx) = dx.as_mut() {
                    // d/dx of x·r·w where r = (mean x² + eps)^(-1/2)
                    let mut gw_x = S::zero();
                    for j in 0..n {
                        gw_x += gr[j] * w.data()[j] * xr[j];
                    }
                    let coef = gw_x * iv * iv * iv / nf;
                    let dr = &mut dx[row * n..(row + 1) * n];
                    for j in 0..n {
                        dr[j] = gr[j] * w.data()[j] * iv - xr[j] * coef;
                    }
                }
            }
            vec![dx.map(|d| like(&x, d)), dw.map(|d| Tensor::from_parts(vec![n], d))]
        })
    }

    pub fn reduce_sum(&self) -> Result<Var<S>> {
        let shape = self.shape().to_vec();
        let out = Tensor::scalar(self.value().sum());
        Var::record(&[self], out, move |g, _| vec![Some(Tensor::full(&shape, g.item()))])
    }

    pub fn reduce_mean(&self) -> Result<Var<S>> {
        let n = self.value().numel() as f64;
        self.reduce_sum()?.scale(1.0 / n)
    }

    /// Column means of a matrix: `[r, c] → [c]`.
    pub fn mean_rows(&self) -> Result<Var<S>> {
        let (r, c) = rank2("mean_rows", self.value())?;
        let inv = S::of(1.0 / r as f64);
        let mut acc = vec![S::zero(); c];
        for row in self.value().data().chunks_exact(c) {
            for (a, &v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        acc.iter_mut().for_each(|a| *a *= inv);
        Var::record(&[self], Tensor::from_parts(vec![c], acc), move |g, _| {
            let d = (0..r * c).map(|i| g.data()[i % c] * inv).collect();
            vec![Some(Tensor::from_parts(vec![r, c], d))]
        })
    }

    pub fn transpose(&self) -> Result<Var<S>> {
        let out = self.value().transpose()?;
        Var::record(&[self], out, |g, _| vec![Some(g.transpose().expect("rank 2"))])
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<S>> {
        let orig = self.shape().to_vec();
        let out = self.value().reshape(shape)?;
        Var::record(&[self], out, move |g, _| vec![Some(g.reshape(&orig).expect("same numel"))])
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(parts: &[Var<S>], axis: usize) -> Result<Var<S>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let rank = first.shape().len();
        if axis >= rank {
            return Err(Error::shape("concat", format!("axis {axis} out of range for rank {rank}")));
        }
        for p in parts {
            let s = p.shape();
            if s.len() != rank || s.iter().enumerate().any(|(i, &d)| i != axis && d != first.shape()[i]) {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: first.shape().to_vec(),
                    rhs: s.to_vec(),
                });
            }
        }
        let outer: usize = first.shape()[..axis].iter().product();
        let inner: usize = first.shape()[axis + 1..].iter().product();
        let lens: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = lens.iter().sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &l) in parts.iter().zip(&lens) {
                data.extend_from_slice(&p.value().data()[o * l * inner..(o + 1) * l * inner]);
            }
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = total;
        let refs: Vec<&Var<S>> = parts.iter().collect();
        Var::record(&refs, Tensor::from_parts(shape, data), move |g, needs| {
            let mut offset = 0;
            let mut grads = Vec::with_capacity(lens.len());
            for (&l, &need) in lens.iter().zip(needs) {
                if need {
                    let mut d = Vec::with_capacity(outer * l * inner);
                    for o in 0..outer {
                        let base = o * total * inner + offset * inner;
                        d.extend_from_slice(&g.data()[base..base + l * inner]);
                    }
                    let mut s = g.shape().to_vec();
                    s[axis] = l;
                    grads.push(Some(Tensor::from_parts(s, d)));
                } else {
                    grads.push(None);
                }
                offset += l;
            }
            grads
        })
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Result<Var<S>> {
        let shape = self.shape().to_vec();
        if axis >= shape.len() || start >= end || end > shape[axis] {
            return Err(Error::shape(
                "slice",
                format!("range {start}..{end} on axis {axis} of {shape:?}"),
            ));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let (len, l) = (shape[axis], end - start);
        let mut data = Vec::with_capacity(outer * l * inner);
        for o in 0..outer {
            let base = (o * len + start) * inner;
            data.extend_from_slice(&self.value().data()[base..base + l * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = l;
        Var::record(&[self], Tensor::from_parts(out_shape, data), move |g, _| {
            let mut d = vec![S::zero(); outer * len * inner];
            for o in 0..outer {
                let base = (o * len + start) * inner;
                d[base..base + l * inner].copy_from_slice(&g.data()[o * l * inner..(o + 1) * l * inner]);
            }
            vec![Some(Tensor::from_parts(shape.clone(), d))]
        })
    }

    /// Rows of `table` (`[V, d]`) selected by `ids`.
    pub fn embedding_lookup(table: &Var<S>, ids: &[usize]) -> Result<Var<S>> {
        let (v, d) = rank2("embedding_lookup", table.value())?;
        if ids.is_empty() {
            return Err(Error::shape("embedding_lookup", "no ids"));
        }
        table.gather_rows_checked("embedding_lookup", ids, v, d)
    }

    pub fn gather_rows(&self, rows: &[usize]) -> Result<Var<S>> {
        let (r, c) = rank2("gather_rows", self.value())?;
        if rows.is_empty() {
            return Err(Error::shape("gather_rows", "no rows"));
        }
        self.gather_rows_checked("gather_rows", rows, r, c)
    }

    fn gather_rows_checked(&self, op: &'static str, rows: &[usize], r: usize, c: usize) -> Result<Var<S>> {
        if let Some(&bad) = rows.iter().find(|&&i| i >= r) {
            return Err(Error::IndexOutOfRange { op, index: bad, bound: r });
        }
        let mut data = Vec::with_capacity(rows.len() * c);
        for &i in rows {
            data.extend_from_slice(self.value().row(i));
        }
        let rows = rows.to_vec();
        let out = Tensor::from_parts(vec![rows.len(), c], data);
        Var::record(&[self], out, move |g, _| {
            let mut d = vec![S::zero(); r * c];
            for (k, &i) in rows.iter().enumerate() {
                kernels::axpy(S::one(), g.row(k), &mut d[i * c..(i + 1) * c]);
            }
            vec![Some(Tensor::from_parts(vec![r, c], d))]
        })
    }

    /// Sums row `k` of `self` into row `rows[k]` of a zero `[n, c]` matrix.
    pub fn scatter_add_rows(&self, rows: &[usize], n: usize) -> Result<Var<S>> {
        let (r, c) = rank2("scatter_add_rows", self.value())?;
        if rows.len() != r {
            return Err(Error::shape("scatter_add_rows", format!("{} targets for {r} rows", rows.len())));
        }
        if let Some(&bad) = rows.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange {
                op: "scatter_add_rows",
                index: bad,
                bound: n,
            });
        }
        let mut data = vec![S::zero(); n * c];
        for (k, &i) in rows.iter().enumerate() {
            kernels::axpy(S::one(), self.value().row(k), &mut data[i * c..(i + 1) * c]);
        }
        let rows = rows.to_vec();
        Var::record(&[self], Tensor::from_parts(vec![n, c], data), move |g, _| {
            let mut d = Vec::with_capacity(r * c);
            for &i in &rows {
                d.extend_from_slice(g.row(i));
            }
            vec![Some(Tensor::from_parts(vec![r, c], d))]
        })
    }

    /// Scales row `i` of `self` (`[r, c]`) by `weights[i]` (`[r]`).
    pub fn mul_rows(&self, weights: &Var<S>) -> Result<Var<S>> {
        let (r, c) = rank2("mul_rows", self.value())?;
        if weights.shape() != [r] {
            return Err(Error::ShapeMismatch {
                op: "mul_rows",
                lhs: self.shape().to_vec(),
                rhs: weights.shape().to_vec(),
            });
        }
        let (x, w) = (self.shared_value(), weights.shared_value());
        let mut data = x.data().to_vec();
        for (row, &wi) in data.chunks_exact_mut(c).zip(w.data()) {
            row.iter_mut().for_each(|v| *v *= wi);
        }
        Var::record(&[self, weights], Tensor::from_parts(vec![r, c], data), move |g, needs| {
            let dx = needs[0].then(|| {
                let mut d = g.data().to_vec();
                for (row, &wi) in d.chunks_exact_mut(c).zip(w.data()) {
                    row.iter_mut().for_each(|v| *v *= wi);
                }
                Tensor::from_parts(vec![r, c], d)
            });
            let dw = needs[1].then(|| {
                let d = (0..r).map(|i| kernels::dot(g.row(i), x.row(i))).collect();
                Tensor::from_parts(vec![r], d)
            });
            vec![dx, dw]
        })
    }

    /// Elements at `(row, col)` pairs of a matrix, as a vector.
    pub fn gather_cells(&self, cells: &[(usize, usize)]) -> Result<Var<S>> {
        let (r, c) = rank2("gather_cells", self.value())?;
        if cells.is_empty() {
            return Err(Error::shape("gather_cells", "no cells"));
        }
        for &(i, j) in cells {
            if i >= r || j >= c {
                return Err(Error::IndexOutOfRange {
                    op: "gather_cells",
                    index: i * c + j,
                    bound: r * c,
                });
            }
        }
        let data = cells.iter().map(|&(i, j)| self.value().data()[i * c + j]).collect();
        let cells = cells.to_vec();
        Var::record(&[self], Tensor::from_parts(vec![cells.len()], data), move |g, _| {
            let mut d = vec![S::zero(); r * c];
            for (k, &(i, j)) in cells.iter().enumerate() {
                d[i * c + j] += g.data()[k];
            }
            vec![Some(Tensor::from_parts(vec![r, c], d))]
        })
    }

    /// Overwrites rows `positions[k]` of `self` with row `k` of `rows`.
    pub fn place_rows(&self, positions: &[usize], rows: &Var<S>) -> Result<Var<S>> {
        let (t, c) = rank2("place_rows", self.value())?;
        let (n, c2) = rank2("place_rows", rows.value())?;
        if c != c2 || n != positions.len() {
            return Err(Error::ShapeMismatch {
                op: "place_rows",
                lhs: self.shape().to_vec(),
                rhs: rows.shape().to_vec(),
            });
        }
        if let Some(&bad) = positions.iter().find(|&&p| p >= t) {
            return Err(Error::IndexOutOfRange {
                op: "place_rows",
                index: bad,
                bound: t,
            });
        }
        let mut data = self.value().data().to_vec();
        for (k, &p) in positions.iter().enumerate() {
            data[p * c..(p + 1) * c].copy_from_slice(rows.value().row(k));
        }
        let positions = positions.to_vec();
        Var::record(&[self, rows], Tensor::from_parts(vec![t, c], data), move |g, needs| {
            let dbase = needs[0].then(|| {
                let mut d = g.data().to_vec();
                for &p in &positions {
                    d[p * c..(p + 1) * c].iter_mut().for_each(|v| *v = S::zero());
                }
                Tensor::from_parts(vec![t, c], d)
            });
            let drows = needs[1].then(|| {
                let mut d = Vec::with_capacity(n * c);
                for &p in &positions {
                    d.extend_from_slice(g.row(p));
                }
                Tensor::from_parts(vec![n, c], d)
            });
            vec![dbase, drows]
        })
    }

    /// Softmax over the selected columns of each row: `[T, E] → [T, k]`.
    /// `selection[t]` lists the chosen columns of row `t`.
    pub fn topk_gates(&self, selection: &[Vec<usize>]) -> Result<Var<S>> {
        let (t, e) = rank2("topk_gates", self.value())?;
        let k = selection.first().map_or(0, Vec::len);
        if selection.len() != t || k == 0 || selection.iter().any(|s| s.len() != k || s.iter().any(|&j| j >= e)) {
            return Err(Error::shape("topk_gates", "selection does not match logits"));
        }
        let mut data = Vec::with_capacity(t * k);
        for (row, sel) in selection.iter().enumerate() {
            let mut vals: Vec<S> = sel.iter().map(|&j| self.value().data()[row * e + j]).collect();
            kernels::softmax_in_place(&mut vals);
            data.extend(vals);
        }
        let out = Tensor::from_parts(vec![t, k], data);
        let y = Arc::new(out.clone());
        let selection = selection.to_vec();
        Var::record(&[self], out, move |g, _| {
            let mut d = vec![S::zero(); t * e];
            for (row, sel) in selection.iter().enumerate() {
                let yr = y.row(row);
                let gr = g.row(row);
                let s = kernels::dot(yr, gr);
                for (slot, &j) in sel.iter().enumerate() {
                    d[row * e + j] += yr[slot] * (gr[slot] - s);
                }
            }
            vec![Some(Tensor::from_parts(vec![t, e], d))]
        })
    }

    /// Mean next-token cross entropy over all rows of `[T, V]` logits.
    pub fn cross_entropy(&self, targets: &[usize]) -> Result<Var<S>> {
        let t: Vec<Option<usize>> = targets.iter().copied().map(Some).collect();
        self.cross_entropy_masked(&t)
    }

    /// Mean cross entropy over rows whose target is `Some`. With no active
    /// rows the loss is zero.
    pub fn cross_entropy_masked(&self, targets: &[Option<usize>]) -> Result<Var<S>> {
        let (t, v) = rank2("cross_entropy", self.value())?;
        if targets.len() != t {
            return Err(Error::shape("cross_entropy", format!("{} targets for {t} rows", targets.len())));
        }
        if let Some(bad) = targets.iter().flatten().find(|&&y| y >= v) {
            return Err(Error::IndexOutOfRange {
                op: "cross_entropy",
                index: *bad,
                bound: v,
            });
        }
        if !self.value().is_finite() {
            return Err(Error::NonFinite { op: "cross_entropy" });
        }
        let active = targets.iter().flatten().count();
        let inv = if active == 0 { S::zero() } else { S::one() / S::of(active as f64) };
        let mut probs = vec![S::zero(); t * v];
        let mut loss = S::zero();
        for (row, target) in targets.iter().enumerate() {
            let Some(y) = *target else { continue };
            let p = &mut probs[row * v..(row + 1) * v];
            p.copy_from_slice(self.value().row(row));
            let m = p.iter().copied().fold(S::neg_infinity(), S::max);
            let mut z = S::zero();
            for x in p.iter_mut() {
                *x = (*x - m).exp();
                z += *x;
            }
            loss += z.ln() + m - self.value().row(row)[y];
            p.iter_mut().for_each(|x| *x /= z);
        }
        let targets = targets.to_vec();
        Var::record(&[self], Tensor::scalar(loss * inv), move |g, _| {
            let scale = g.item() * inv;
            let mut d = probs.clone();
            for (row, target) in targets.iter().enumerate() {
                let dr = &mut d[row * v..(row + 1) * v];
                match *target {
                    Some(y) => {
                        dr[y] -= S::one();
                        dr.iter_mut().for_each(|x| *x *= scale);
                    }
                    None => dr.iter_mut().for_each(|x| *x = S::zero()),
                }
            }
            vec![Some(Tensor::from_parts(vec![t, v], d))]
        })
    }

    /// Grouped-query scaled dot-product attention over whole sequences.
    /// `q: [T, H·hd]`, `k, v: [T, Hkv·hd]`.
    pub fn attention(
        q: &Var<S>,
        k: &Var<S>,
        v: &Var<S>,
        n_heads: usize,
        n_kv_heads: usize,
        causal: bool,
    ) -> Result<Var<S>> {
        if n_kv_heads == 0 || n_heads % n_kv_heads != 0 {
            return Err(Error::InvalidConfig(vec![format!(
                "n_heads ({n_heads}) must be a multiple of n_kv_heads ({n_kv_heads})"
            )]));
        }
        let (tq, qw) = rank2("attention", q.value())?;
        let (tk, kw) = rank2("attention", k.value())?;
        same_shape("attention", k.value(), v.value())?;
        if qw % n_heads != 0 || kw != (qw / n_heads) * n_kv_heads || (causal && tq != tk) {
            return Err(Error::ShapeMismatch {
                op: "attention",
                lhs: q.shape().to_vec(),
                rhs: k.shape().to_vec(),
            });
        }
        let dims = AttnDims {
            tq,
            tk,
            n_heads,
            n_kv_heads,
            head_dim: qw / n_heads,
            causal_offset: causal.then_some(0),
        };
        let tracked = q.requires_grad() || k.requires_grad() || v.requires_grad();
        let mut probs = tracked.then(|| vec![S::zero(); n_heads * tq * tk]);
        let out = kernels::attention_forward(q.value().data(), k.value().data(), v.value().data(), dims, probs.as_deref_mut());
        let (qa, ka, va) = (q.shared_value(), k.shared_value(), v.shared_value());
        let probs = probs.unwrap_or_default();
        Var::record(&[q, k, v], Tensor::from_parts(vec![tq, qw], out), move |g, _| {
            let mut dq = vec![S::zero(); tq * qw];
            let mut dk = vec![S::zero(); tk * kw];
            let mut dv = vec![S::zero(); tk * kw];
            kernels::attention_backward(
                qa.data(),
                ka.data(),
                va.data(),
                &probs,
                g.data(),
                dims,
                &mut dq,
                &mut dk,
                &mut dv,
            );
            vec![
                Some(Tensor::from_parts(vec![tq, qw], dq)),
                Some(Tensor::from_parts(vec![tk, kw], dk)),
                Some(Tensor::from_parts(vec![tk, kw], dv)),
            ]
        })
    }

    /// Depthwise causal convolution with zero history: `x: [T, C]`,
    /// `weight: [C, W]`, `bias: [C]`.
    pub fn causal_conv1d(&self, weight: &Var<S>, bias: &Var<S>) -> Result<Var<S>> {
        let (t, c) = rank2("causal_conv1d", self.value())?;
        let (c2, width) = rank2("causal_conv1d", weight.value())?;
        if c2 != c || bias.shape() != [c] {
            return Err(Error::ShapeMismatch {
                op: "causal_conv1d",
                lhs: self.shape().to_vec(),
                rhs: weight.shape().to_vec(),
            });
        }
        let (x, w) = (self.shared_value(), weight.shared_value());
        let window = vec![S::zero(); (width - 1) * c];
        let out = kernels::causal_conv_forward(x.data(), t, c, w.data(), width, bias.value().data(), &window);
        Var::record(&[self, weight, bias], Tensor::from_parts(vec![t, c], out), move |g, _| {
            let mut dx = vec![S::zero(); t * c];
            let mut dw = vec![S::zero(); c * width];
            let mut db = vec![S::zero(); c];
            kernels::causal_conv_backward(x.data(), t, c, w.data(), width, g.data(), &mut dx, &mut dw, &mut db);
            vec![
                Some(Tensor::from_parts(vec![t, c], dx)),
                Some(Tensor::from_parts(vec![c, width], dw)),
                Some(Tensor::from_parts(vec![c], db)),
            ]
        })
    }

    /// Selective state-space scan from a zero state.
    ///
    /// `u, delta: [T, C]`, `a: [C, N]`, `b, c: [T, N]`, `d: [C]` → `[T, C]`.
    pub fn selective_scan(
        u: &Var<S>,
        delta: &Var<S>,
        a: &Var<S>,
        b: &Var<S>,
        c: &Var<S>,
        d: &Var<S>,
        mode: ScanMode,
    ) -> Result<Var<S>> {
        let (t, ch) = rank2("selective_scan", u.value())?;
        let (_, n) = rank2("selective_scan", a.value())?;
        let ok = delta.shape() == [t, ch]
            && a.shape() == [ch, n]
            && b.shape() == [t, n]
            && c.shape() == [t, n]
            && d.shape() == [ch];
        if !ok {
            return Err(Error::shape(
                "selective_scan",
                format!(
                    "u {:?}, delta {:?}, a {:?}, b {:?}, c {:?}, d {:?}",
                    u.shape(),
                    delta.shape(),
                    a.shape(),
                    b.shape(),
                    c.shape(),
                    d.shape()
                ),
            ));
        }
        let dims = ScanDims { t, c: ch, s: n };
        let vals = [u, delta, a, b, c, d].map(Var::shared_value);
        let inputs = ScanInputs {
            u: vals[0].data(),
            delta: vals[1].data(),
            a: vals[2].data(),
            b: vals[3].data(),
            cm: vals[4].data(),
            d: vals[5].data(),
        };
        let mut state = vec![S::zero(); ch * n];
        let mut hist = vec![S::zero(); t * ch * n];
        let y = match mode {
            ScanMode::Sequential => kernels::scan_sequential(inputs, dims, &mut state, Some(&mut hist)),
            ScanMode::Parallel => kernels::scan_parallel(inputs, dims, &mut state, Some(&mut hist)),
        };
        Var::record(&[u, delta, a, b, c, d], Tensor::from_parts(vec![t, ch], y), move |g, _| {
            let inputs = ScanInputs {
                u: vals[0].data(),
                delta: vals[1].data(),
                a: vals[2].data(),
                b: vals[3].data(),
                cm: vals[4].data(),
                d: vals[5].data(),
            };
            let mut du = vec![S::zero(); t * ch];
            let mut ddelta = vec![S::zero(); t * ch];
            let mut da = vec![S::zero(); ch * n];
            let mut db = vec![S::zero(); t * n];
            let mut dc = vec![S::zero(); t * n];
            let mut dd = vec![S::zero(); ch];
            kernels::scan_backward(
                inputs, dims, &hist, g.data(), &mut du, &mut ddelta, &mut da, &mut db, &mut dc, &mut dd,
            );
            vec![
                Some(Tensor::from_parts(vec![t, ch], du)),
                Some(Tensor::from_parts(vec![t, ch], ddelta)),
                Some(Tensor::from_parts(vec![ch, n], da)),
                Some(Tensor::from_parts(vec![t, n], db)),
                Some(Tensor::from_parts(vec![t, n], dc)),
                Some(Tensor::from_parts(vec![ch], dd)),
            ]
        })
    }
}
