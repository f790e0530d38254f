//! Operation tape for reverse-mode differentiation.
//!
//! A [`Tape`] records every forward operation as a node holding the produced
//! value, its parent node ids and a backward closure. [`Tape::backward`]
//! walks the nodes in reverse creation order (which is a topological order by
//! construction) and accumulates gradients. One training step builds and
//! consumes one tape; tapes are not shared between threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{logsumexp_slice, shape_err, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a tape.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Var(usize);

type BackFn = Box<dyn Fn(&Tensor, &[&Tensor], &Tensor, &[bool]) -> Vec<Option<Tensor>>>;

struct Node {
    value: Tensor,
    parents: Vec<usize>,
    back: Option<BackFn>,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`]. Leaves that the loss never
/// touched report `None`; callers map that to zeros of the leaf shape.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor {
        match self.get(v) {
            Some(g) => g.clone(),
            None => Tensor::zeros(shape),
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a gradient leaf (parameter).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            parents: Vec::new(),
            back: None,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Registers an input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            parents: Vec::new(),
            back: None,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant_scalar(&mut self, x: f64) -> Var {
        self.constant(Tensor::scalar(x))
    }

    pub fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push<F>(&mut self, value: Tensor, parents: Vec<usize>, back: F) -> Var
    where
        F: Fn(&Tensor, &[&Tensor], &Tensor, &[bool]) -> Vec<Option<Tensor>> + 'static,
    {
        let needs_grad = parents.iter().any(|&p| self.nodes[p].needs_grad);
        let back: Option<BackFn> = if needs_grad { Some(Box::new(back)) } else { None };
        self.nodes.push(Node {
            value,
            parents,
            back,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    // ---- elementwise ----

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.val(a), self.val(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("add", ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::from_vec(ta.shape().to_vec(), data)?;
        Ok(self.push(out, vec![a.0, b.0], |g, _p, _o, needs| {
            vec![
                needs[0].then(|| g.clone()),
                needs[1].then(|| g.clone()),
            ]
        }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.val(a), self.val(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("sub", ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x - y).collect();
        let out = Tensor::from_vec(ta.shape().to_vec(), data)?;
        Ok(self.push(out, vec![a.0, b.0], |g, _p, _o, needs| {
            vec![
                needs[0].then(|| g.clone()),
                needs[1].then(|| {
                    let mut n = g.clone();
                    for x in n.data_mut() {
                        *x = -*x;
                    }
                    n
                }),
            ]
        }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.val(a), self.val(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("mul", ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::from_vec(ta.shape().to_vec(), data)?;
        Ok(self.push(out, vec![a.0, b.0], |g, p, _o, needs| {
            let grad_for = |other: &Tensor| {
                let data = g.data().iter().zip(other.data()).map(|(gi, oi)| gi * oi).collect();
                Tensor::from_vec(g.shape().to_vec(), data).unwrap()
            };
            vec![
                needs[0].then(|| grad_for(p[1])),
                needs[1].then(|| grad_for(p[0])),
            ]
        }))
    }

    /// Sums any number of same-shaped tensors in argument order.
    pub fn add_n(&mut self, vs: &[Var]) -> Result<Var> {
        let first = vs
            .first()
            .ok_or_else(|| Error::Tensor("add_n of nothing".into()))?;
        let shape = self.val(*first).shape().to_vec();
        let mut acc = Tensor::zeros(&shape);
        for &v in vs {
            let t = self.val(v);
            if t.shape() != shape.as_slice() {
                return Err(shape_err("add_n", &shape, t.shape()));
            }
            acc.add_assign(t);
        }
        let parents = vs.iter().map(|v| v.0).collect();
        Ok(self.push(acc, parents, |g, _p, _o, needs| {
            needs.iter().map(|&n| n.then(|| g.clone())).collect()
        }))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let ta = self.val(a);
        let data = ta.data().iter().map(|x| x + c).collect();
        let out = Tensor::from_vec(ta.shape().to_vec(), data).unwrap();
        self.push(out, vec![a.0], |g, _p, _o, needs| {
            vec![needs[0].then(|| g.clone())]
        })
    }

    pub fn mul_scalar(&mut self, a: Var, c: f64) -> Var {
        let ta = self.val(a);
        let data = ta.data().iter().map(|x| x * c).collect();
        let out = Tensor::from_vec(ta.shape().to_vec(), data).unwrap();
        self.push(out, vec![a.0], move |g, _p, _o, needs| {
            vec![needs[0].then(|| {
                let data = g.data().iter().map(|x| x * c).collect();
                Tensor::from_vec(g.shape().to_vec(), data).unwrap()
            })]
        })
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.mul_scalar(a, -1.0)
    }

    /// Elementwise `a - s` where `s` is a scalar var.
    pub fn sub_bscalar(&mut self, a: Var, s: Var) -> Result<Var> {
        let ts = self.val(s);
        if !ts.is_scalar() {
            return Err(shape_err("sub_bscalar", self.val(a).shape(), ts.shape()));
        }
        let sv = ts.item();
        let ta = self.val(a);
        let data = ta.data().iter().map(|x| x - sv).collect();
        let out = Tensor::from_vec(ta.shape().to_vec(), data)?;
        Ok(self.push(out, vec![a.0, s.0], |g, _p, _o, needs| {
            vec![
                needs[0].then(|| g.clone()),
                needs[1].then(|| {
                    let s: f64 = g.data().iter().sum();
                    Tensor::scalar(-s)
                }),
            ]
        }))
    }

    fn unary<F, D>(&mut self, a: Var, f: F, dfdx: D) -> Var
    where
        F: Fn(f64) -> f64,
        D: Fn(f64, f64) -> f64 + 'static, // (x, out) -> derivative
    {
        let ta = self.val(a);
        let data = ta.data().iter().map(|&x| f(x)).collect();
        let out = Tensor::from_vec(ta.shape().to_vec(), data).unwrap();
        self.push(out, vec![a.0], move |g, p, o, needs| {
            vec![needs[0].then(|| {
                let data = g
                    .data()
                    .iter()
                    .zip(p[0].data().iter().zip(o.data()))
                    .map(|(gi, (&x, &y))| gi * dfdx(x, y))
                    .collect();
                Tensor::from_vec(g.shape().to_vec(), data).unwrap()
            })]
        })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, |x| 1.0 / (1.0 + (-x).exp()), |_x, y| y * (1.0 - y))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, |_x, y| 1.0 - y * y)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, |_x, y| y)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, |x, _y| 1.0 / x)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), |x, _y| if x > 0.0 { 1.0 } else { 0.0 })
    }

    /// Inverted dropout with an explicit seed; identity when `rate == 0`.
    pub fn dropout(&mut self, a: Var, rate: f64, seed: u64) -> Var {
        if rate <= 0.0 {
            return a;
        }
        let keep = 1.0 - rate;
        let ta = self.val(a);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mask: Vec<f64> = (0..ta.numel())
            .map(|_| {
                if rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let data = ta.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::from_vec(ta.shape().to_vec(), data).unwrap();
        self.push(out, vec![a.0], move |g, _p, _o, needs| {
            vec![needs[0].then(|| {
                let data = g.data().iter().zip(&mask).map(|(gi, m)| gi * m).collect();
                Tensor::from_vec(g.shape().to_vec(), data).unwrap()
            })]
        })
    }

    // ---- linear algebra ----

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.val(a), self.val(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.cols() != tb.rows() {
            return Err(shape_err("matmul", ta.shape(), tb.shape()));
        }
        let (p, q, r) = (ta.rows(), ta.cols(), tb.cols());
        let mut data = vec![0.0; p * r];
        for i in 0..p {
            for k in 0..q {
                let aik = ta.at2(i, k);
                for j in 0..r {
                    data[i * r + j] += aik * tb.at2(k, j);
                }
            }
        }
        let out = Tensor::from_vec(vec![p, r], data)?;
        Ok(self.push(out, vec![a.0, b.0], move |g, p_vals, _o, needs| {
            let (ta, tb) = (p_vals[0], p_vals[1]);
            let da = needs[0].then(|| {
                // dA = dC . B^T
                let mut d = vec![0.0; p * q];
                for i in 0..p {
                    for j in 0..r {
                        let gij = g.at2(i, j);
                        for k in 0..q {
                            d[i * q + k] += gij * tb.at2(k, j);
                        }
                    }
                }
                Tensor::from_vec(vec![p, q], d).unwrap()
            });
            let db = needs[1].then(|| {
                // dB = A^T . dC
                let mut d = vec![0.0; q * r];
                for i in 0..p {
                    for k in 0..q {
                        let aik = ta.at2(i, k);
                        for j in 0..r {
                            d[k * r + j] += aik * g.at2(i, j);
                        }
                    }
                }
                Tensor::from_vec(vec![q, r], d).unwrap()
            });
            vec![da, db]
        }))
    }

    /// `A[p,q] . x[q] -> [p]`
    pub fn matvec(&mut self, a: Var, x: Var) -> Result<Var> {
        let (ta, tx) = (self.val(a), self.val(x));
        if ta.shape().len() != 2 || tx.shape().len() != 1 || ta.cols() != tx.shape()[0] {
            return Err(shape_err("matvec", ta.shape(), tx.shape()));
        }
        let (p, q) = (ta.rows(), ta.cols());
        let mut data = vec![0.0; p];
        for i in 0..p {
            let row = ta.row_slice(i);
            let mut s = 0.0;
            for j in 0..q {
                s += row[j] * tx.data()[j];
            }
            data[i] = s;
        }
        let out = Tensor::vector(data);
        Ok(self.push(out, vec![a.0, x.0], move |g, p_vals, _o, needs| {
            let (ta, tx) = (p_vals[0], p_vals[1]);
            let da = needs[0].then(|| {
                let mut d = vec![0.0; p * q];
                for i in 0..p {
                    let gi = g.data()[i];
                    for j in 0..q {
                        d[i * q + j] = gi * tx.data()[j];
                    }
                }
                Tensor::from_vec(vec![p, q], d).unwrap()
            });
            let dx = needs[1].then(|| {
                let mut d = vec![0.0; q];
                for i in 0..p {
                    let gi = g.data()[i];
                    let row = ta.row_slice(i);
                    for j in 0..q {
                        d[j] += gi * row[j];
                    }
                }
                Tensor::vector(d)
            });
            vec![da, dx]
        }))
    }

    /// `x[p] . A[p,q] -> [q]`
    pub fn vecmat(&mut self, x: Var, a: Var) -> Result<Var> {
        let (tx, ta) = (self.val(x), self.val(a));
        if ta.shape().len() != 2 || tx.shape().len() != 1 || ta.rows() != tx.shape()[0] {
            return Err(shape_err("vecmat", tx.shape(), ta.shape()));
        }
        let (p, q) = (ta.rows(), ta.cols());
        let mut data = vec![0.0; q];
        for i in 0..p {
            let xi = tx.data()[i];
            let row = ta.row_slice(i);
            for j in 0..q {
                data[j] += xi * row[j];
            }
        }
        let out = Tensor::vector(data);
        Ok(self.push(out, vec![x.0, a.0], move |g, p_vals, _o, needs| {
            let (tx, ta) = (p_vals[0], p_vals[1]);
            let dx = needs[0].then(|| {
                let mut d = vec![0.0; p];
                for i in 0..p {
                    let row = ta.row_slice(i);
                    let mut s = 0.0;
                    for j in 0..q {
                        s += row[j] * g.data()[j];
                    }
                    d[i] = s;
                }
                Tensor::vector(d)
            });
            let da = needs[1].then(|| {
                let mut d = vec![0.0; p * q];
                for i in 0..p {
                    let xi = tx.data()[i];
                    for j in 0..q {
                        d[i * q + j] = xi * g.data()[j];
                    }
                }
                Tensor::from_vec(vec![p, q], d).unwrap()
            });
            vec![dx, da]
        }))
    }

    pub fn dot(&mut self, x: Var, y: Var) -> Result<Var> {
        let (tx, ty) = (self.val(x), self.val(y));
        if tx.shape() != ty.shape() || tx.shape().len() != 1 {
            return Err(shape_err("dot", tx.shape(), ty.shape()));
        }
        let s: f64 = tx.data().iter().zip(ty.data()).map(|(a, b)| a * b).sum();
        Ok(self.push(Tensor::scalar(s), vec![x.0, y.0], |g, p, _o, needs| {
            let gi = g.item();
            let scaled = |t: &Tensor| {
                let data = t.data().iter().map(|v| v * gi).collect();
                Tensor::vector(data)
            };
            vec![
                needs[0].then(|| scaled(p[1])),
                needs[1].then(|| scaled(p[0])),
            ]
        }))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ta = self.val(a);
        if ta.shape().len() != 2 {
            return Err(shape_err("transpose", ta.shape(), &[]));
        }
        let (p, q) = (ta.rows(), ta.cols());
        let mut data = vec![0.0; p * q];
        for i in 0..p {
            for j in 0..q {
                data[j * p + i] = ta.at2(i, j);
            }
        }
        let out = Tensor::from_vec(vec![q, p], data)?;
        Ok(self.push(out, vec![a.0], move |g, _p, _o, needs| {
            vec![needs[0].then(|| {
                let mut d = vec![0.0; p * q];
                for i in 0..q {
                    for j in 0..p {
                        d[j * q + i] = g.at2(i, j);
                    }
                }
                Tensor::from_vec(vec![p, q], d).unwrap()
            })]
        }))
    }

    // ---- structure ----

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Tensor("concat of nothing".into()));
        }
        let mut data = Vec::new();
        let mut lens = Vec::with_capacity(parts.len());
        for &v in parts {
            let t = self.val(v);
            if t.shape().len() != 1 {
                return Err(shape_err("concat", t.shape(), &[]));
            }
            lens.push(t.numel());
            data.extend_from_slice(t.data());
        }
        let out = Tensor::vector(data);
        let parents = parts.iter().map(|v| v.0).collect();
        Ok(self.push(out, parents, move |g, _p, _o, needs| {
            let mut offset = 0;
            lens.iter()
                .zip(needs)
                .map(|(&len, &n)| {
                    let piece =
                        n.then(|| Tensor::vector(g.data()[offset..offset + len].to_vec()));
                    offset += len;
                    piece
                })
                .collect()
        }))
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ta = self.val(a);
        if ta.shape().len() != 1 || start + len > ta.numel() {
            return Err(Error::Tensor(format!(
                "slice {start}..{} out of bounds for {:?}",
                start + len,
                ta.shape()
            )));
        }
        let total = ta.numel();
        let out = Tensor::vector(ta.data()[start..start + len].to_vec());
        Ok(self.push(out, vec![a.0], move |g, _p, _o, needs| {
            vec![needs[0].then(|| {
                let mut d = vec![0.0; total];
                d[start..start + len].copy_from_slice(g.data());
                Tensor::vector(d)
            })]
        }))
    }

    /// Extracts row `i` of a matrix as a vector (embedding lookup).
    pub fn row(&mut self, m: Var, i: usize) -> Result<Var> {
        let tm = self.val(m);
        if tm.shape().len() != 2 || i >= tm.rows() {
            return Err(Error::Tensor(format!(
                "row {i} out of bounds for {:?}",
                tm.shape()
            )));
        }
        let (rows, cols) = (tm.rows(), tm.cols());
        let out = Tensor::vector(tm.row_slice(i).to_vec());
        Ok(self.push(out, vec![m.0], move |g, _p, _o, needs| {
            vec![needs[0].then(|| {
                let mut d = vec![0.0; rows * cols];
                d[i * cols..(i + 1) * cols].copy_from_slice(g.data());
                Tensor::from_vec(vec![rows, cols], d).unwrap()
            })]
        }))
    }

    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        if rows.is_empty() {
            return Err(Error::Tensor("stack_rows of nothing".into()));
        }
        let width = self.val(rows[0]).numel();
        let mut data = Vec::with_capacity(rows.len() * width);
        for &v in rows {
            let t = self.val(v);
            if t.shape().len() != 1 || t.numel() != width {
                return Err(shape_err("stack_rows", &[width], t.shape()));
            }
            data.extend_from_slice(t.data());
        }
        let out = Tensor::from_vec(vec![rows.len(), width], data)?;
        let parents = rows.iter().map(|v| v.0).collect();
        Ok(self.push(out, parents, move |g, _p, _o, needs| {
            needs
                .iter()
                .enumerate()
                .map(|(i, &n)| n.then(|| Tensor::vector(g.row_slice(i).to_vec())))
                .collect()
        }))
    }

    // ---- reductions ----

    pub fn sum(&mut self, a: Var) -> Var {
        let ta = self.val(a);
        let s: f64 = ta.data().iter().sum();
        let shape = ta.shape().to_vec();
        self.push(Tensor::scalar(s), vec![a.0], move |g, _p, _o, needs| {
            vec![needs[0].then(|| Tensor::full(&shape, g.item()))]
        })
    }

    /// Collapses `axis` of a matrix by summation (`axis 0` sums over rows).
    pub fn sum_axis(&mut self, m: Var, axis: usize) -> Result<Var> {
        let tm = self.val(m);
        if tm.shape().len() != 2 || axis > 1 {
            return Err(Error::Tensor(format!(
                "sum_axis axis {axis} invalid for {:?}",
                tm.shape()
            )));
        }
        let (rows, cols) = (tm.rows(), tm.cols());
        let out = if axis == 0 {
            let mut d = vec![0.0; cols];
            for i in 0..rows {
                for j in 0..cols {
                    d[j] += tm.at2(i, j);
                }
            }
            Tensor::vector(d)
        } else {
            let mut d = vec![0.0; rows];
            for (i, di) in d.iter_mut().enumerate() {
                *di = tm.row_slice(i).iter().sum();
            }
            Tensor::vector(d)
        };
        Ok(self.push(out, vec![m.0], move |g, _p, _o, needs| {
            vec![needs[0].then(|| {
                let mut d = vec![0.0; rows * cols];
                for i in 0..rows {
                    for j in 0..cols {
                        d[i * cols + j] = if axis == 0 { g.data()[j] } else { g.data()[i] };
                    }
                }
                Tensor::from_vec(vec![rows, cols], d).unwrap()
            })]
        }))
    }

    /// `log sum exp` along `axis` with max-shift stabilization.
    ///
    /// For 1-D input the only valid axis is 0 and the result is a scalar; for
    /// 2-D input axis 0 collapses rows (result length = cols) and axis 1
    /// collapses columns (result length = rows).
    pub fn logsumexp(&mut self, a: Var, axis: usize) -> Result<Var> {
        let ta = self.val(a);
        match ta.shape().len() {
            1 => {
                if axis != 0 {
                    return Err(Error::Tensor(format!(
                        "logsumexp axis {axis} invalid for vector"
                    )));
                }
                let v = logsumexp_slice(ta.data());
                Ok(self.push(Tensor::scalar(v), vec![a.0], |g, p, o, needs| {
                    vec![needs[0].then(|| {
                        let lse = o.item();
                        let gi = g.item();
                        let data = p[0].data().iter().map(|&x| gi * (x - lse).exp()).collect();
                        Tensor::vector(data)
                    })]
                }))
            }
            2 => {
                if axis > 1 {
                    return Err(Error::Tensor(format!(
                        "logsumexp axis {axis} invalid for matrix"
                    )));
                }
                let (rows, cols) = (ta.rows(), ta.cols());
                let out = if axis == 1 {
                    let d: Vec<f64> = (0..rows).map(|i| logsumexp_slice(ta.row_slice(i))).collect();
                    Tensor::vector(d)
                } else {
                    let d: Vec<f64> = (0..cols)
                        .map(|j| {
                            let col: Vec<f64> = (0..rows).map(|i| ta.at2(i, j)).collect();
                            logsumexp_slice(&col)
                        })
                        .collect();
                    Tensor::vector(d)
                };
                Ok(self.push(out, vec![a.0], move |g, p, o, needs| {
                    vec![needs[0].then(|| {
                        let mut d = vec![0.0; rows * cols];
                        for i in 0..rows {
                            for j in 0..cols {
                                let (gi, lse) = if axis == 1 {
                                    (g.data()[i], o.data()[i])
                                } else {
                                    (g.data()[j], o.data()[j])
                                };
                                d[i * cols + j] = gi * (p[0].at2(i, j) - lse).exp();
                            }
                        }
                        Tensor::from_vec(vec![rows, cols], d).unwrap()
                    })]
                }))
            }
            _ => Err(Error::Tensor(format!(
                "logsumexp expects rank 1 or 2, got {:?}",
                ta.shape()
            ))),
        }
    }

    /// `out[i][j] = m[i][j] - v[i]` (per-row shift, `v` has one entry per row).
    pub fn sub_rowvec(&mut self, m: Var, v: Var) -> Result<Var> {
        let (tm, tv) = (self.val(m), self.val(v));
        if tm.shape().len() != 2 || tv.shape().len() != 1 || tv.numel() != tm.rows() {
            return Err(shape_err("sub_rowvec", tm.shape(), tv.shape()));
        }
        let (rows, cols) = (tm.rows(), tm.cols());
        let mut data = vec![0.0; rows * cols];
        for i in 0..rows {
            let shift = tv.data()[i];
            for j in 0..cols {
                data[i * cols + j] = tm.at2(i, j) - shift;
            }
        }
        let out = Tensor::from_vec(vec![rows, cols], data)?;
        Ok(self.push(out, vec![m.0, v.0], move |g, _p, _o, needs| {
            vec![
                needs[0].then(|| g.clone()),
                needs[1].then(|| {
                    let d: Vec<f64> = (0..rows).map(|i| -g.row_slice(i).iter().sum::<f64>()).collect();
                    Tensor::vector(d)
                }),
            ]
        }))
    }

    /// `out[i][j] = m[i][j] - v[j]` (per-column shift, `v` has one entry per column).
    pub fn sub_colvec(&mut self, m: Var, v: Var) -> Result<Var> {
        let (tm, tv) = (self.val(m), self.val(v));
        if tm.shape().len() != 2 || tv.shape().len() != 1 || tv.numel() != tm.cols() {
            return Err(shape_err("sub_colvec", tm.shape(), tv.shape()));
        }
        let (rows, cols) = (tm.rows(), tm.cols());
        let mut data = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                data[i * cols + j] = tm.at2(i, j) - tv.data()[j];
            }
        }
        let out = Tensor::from_vec(vec![rows, cols], data)?;
        Ok(self.push(out, vec![m.0, v.0], move |g, _p, _o, needs| {
            vec![
                needs[0].then(|| g.clone()),
                needs[1].then(|| {
                    let mut d = vec![0.0; cols];
                    for i in 0..rows {
                        for j in 0..cols {
                            d[j] -= g.at2(i, j);
                        }
                    }
                    Tensor::vector(d)
                }),
            ]
        }))
    }

    /// Log-softmax of a vector: `x - logsumexp(x)`.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let lse = self.logsumexp(a, 0)?;
        self.sub_bscalar(a, lse)
    }

    // ---- backward ----

    /// Propagates gradients from a scalar loss back to every reachable node.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if !self.val(loss).is_scalar() {
            return Err(Error::Tensor(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.val(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(self.val(loss).shape(), 1.0));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if let Some(back) = &node.back {
                let parent_vals: Vec<&Tensor> =
                    node.parents.iter().map(|&p| &self.nodes[p].value).collect();
                let needs: Vec<bool> = node
                    .parents
                    .iter()
                    .map(|&p| self.nodes[p].needs_grad)
                    .collect();
                let parent_grads = back(&g, &parent_vals, &node.value, &needs);
                debug_assert_eq!(parent_grads.len(), node.parents.len());
                for (p, pg) in node.parents.clone().into_iter().zip(parent_grads) {
                    if let Some(pg) = pg {
                        match &mut grads[p] {
                            Some(acc) => acc.add_assign(&pg),
                            slot => *slot = Some(pg),
                        }
                    }
                }
            }
            // Leaves keep their gradient; intermediates are dropped.
            if node.back.is_none() && node.needs_grad {
                grads[id] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }
}
