use crate::params::{Grads, ParamId, ParamStore};
use crate::{Error, Real, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    Gather(ParamId, Vec<usize>),
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, T),
    AddConst(Var),
    MulConst(Var, Vec<T>),
    Transpose(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Log(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Sum(Var),
    Mean(Var),
    SumCols(Var),
    MeanRows(Var),
    MulCol(Var, Var),
    Pick(Var, Vec<usize>),
}

#[derive(Debug, Clone)]
struct Node<T> {
    shape: [usize; 2],
    value: Vec<T>,
    op: Op<T>,
}

/// Records operations against a borrowed parameter store.
#[derive(Debug)]
pub struct Tape<'p, T> {
    store: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
}

fn mm<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let x = a[i * k + p];
            if x == T::zero() {
                continue;
            }
            for (o, &y) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += x * y;
            }
        }
    }
}

/// out[m,n] += a[m,k] · b[n,k]ᵀ
fn mm_nt<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    for i in 0..m {
        let ar = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let br = &b[j * k..(j + 1) * k];
            let mut s = T::zero();
            for (&x, &y) in ar.iter().zip(br) {
                s += x * y;
            }
            out[i * n + j] += s;
        }
    }
}

/// out[k,n] += a[m,k]ᵀ · b[m,n]
fn mm_tn<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    for i in 0..m {
        let br = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let x = a[i * k + p];
            if x == T::zero() {
                continue;
            }
            for (o, &y) in out[p * n..(p + 1) * n].iter_mut().zip(br) {
                *o += x * y;
            }
        }
    }
}

fn softmax_rows<T: Real>(x: &[T], cols: usize, log: bool) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for (xr, or) in x.chunks(cols).zip(out.chunks_mut(cols)) {
        let m = xr.iter().copied().fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for (o, &v) in or.iter_mut().zip(xr) {
            *o = (v - m).exp();
            z += *o;
        }
        if log {
            let lz = z.ln();
            for (o, &v) in or.iter_mut().zip(xr) {
                *o = v - m - lz;
            }
        } else {
            for o in or.iter_mut() {
                *o = *o / z;
            }
        }
    }
    out
}

impl<'p, T: Real> Tape<'p, T> {
    pub fn new(store: &'p ParamStore<T>) -> Self {
        Tape { store, nodes: Vec::new() }
    }

    pub fn store(&self) -> &'p ParamStore<T> {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[T] {
        match &self.nodes[v.0].op {
            Op::Param(id) => self.store.value(*id),
            _ => &self.nodes[v.0].value,
        }
    }

    /// The single element of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> T {
        self.value(v)[0]
    }

    fn push(&mut self, shape: [usize; 2], value: Vec<T>, op: Op<T>) -> Var {
        debug_assert!(matches!(op, Op::Param(_)) || value.len() == shape[0] * shape[1]);
        self.nodes.push(Node { shape, value, op });
        Var(self.nodes.len() - 1)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<[usize; 2]> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::Shape { op, left: sa, right: sb });
        }
        Ok(sa)
    }

    /// Constant input without gradient.
    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<T>) -> Result<Var> {
        if data.len() != rows * cols {
            return Err(Error::Invalid(format!("constant: {} values for shape [{rows}, {cols}]", data.len())));
        }
        Ok(self.push([rows, cols], data, Op::Leaf))
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.push([rows, cols], vec![T::zero(); rows * cols], Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.push(self.store.shape(id), Vec::new(), Op::Param(id))
    }

    /// Rows `ids` of an embedding parameter, as `[ids.len(), cols]`.
    pub fn gather(&mut self, id: ParamId, ids: &[usize]) -> Result<Var> {
        let [rows, cols] = self.store.shape(id);
        let table = self.store.value(id);
        let mut out = Vec::with_capacity(ids.len() * cols);
        for &r in ids {
            if r >= rows {
                return Err(Error::Invalid(format!("gather: row {r} out of range for {rows} rows")));
            }
            out.extend_from_slice(&table[r * cols..(r + 1) * cols]);
        }
        Ok(self.push([ids.len(), cols], out, Op::Gather(id, ids.to_vec())))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let ([m, k], [k2, n]) = (self.shape(a), self.shape(b));
        if k != k2 {
            return Err(Error::Shape { op: "matmul", left: [m, k], right: [k2, n] });
        }
        let mut out = vec![T::zero(); m * n];
        mm(self.value(a), self.value(b), m, k, n, &mut out);
        Ok(self.push([m, n], out, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let ([m, k], [n, k2]) = (self.shape(a), self.shape(b));
        if k != k2 {
            return Err(Error::Shape { op: "matmul_nt", left: [m, k], right: [n, k2] });
        }
        let mut out = vec![T::zero(); m * n];
        mm_nt(self.value(a), self.value(b), m, k, n, &mut out);
        Ok(self.push([m, n], out, Op::MatMulNT(a, b)))
    }

    fn zip(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T, rec: Op<T>) -> Result<Var> {
        let s = self.same_shape(op, a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| f(x, y)).collect();
        Ok(self.push(s, out, rec))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a `1 × n` row to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let ([m, n], sb) = (self.shape(a), self.shape(bias));
        if sb != [1, n] {
            return Err(Error::Shape { op: "add_bias", left: [m, n], right: sb });
        }
        let b = self.value(bias);
        let out = self.value(a).chunks(n.max(1)).flat_map(|r| r.iter().zip(b).map(|(&x, &y)| x + y)).collect();
        Ok(self.push([m, n], out, Op::AddBias(a, bias)))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let out = self.value(a).iter().map(|&x| x * c).collect();
        self.push(self.shape(a), out, Op::Scale(a, c))
    }

    /// Adds a constant, e.g. an additive attention mask.
    pub fn add_const(&mut self, a: Var, c: &[T]) -> Result<Var> {
        let s = self.shape(a);
        if c.len() != s[0] * s[1] {
            return Err(Error::Shape { op: "add_const", left: s, right: [1, c.len()] });
        }
        let out = self.value(a).iter().zip(c).map(|(&x, &y)| x + y).collect();
        Ok(self.push(s, out, Op::AddConst(a)))
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        let out = self.value(a).iter().map(|&x| x + c).collect();
        self.push(self.shape(a), out, Op::AddConst(a))
    }

    /// Elementwise product with a constant, e.g. a padding mask.
    pub fn mul_const(&mut self, a: Var, c: &[T]) -> Result<Var> {
        let s = self.shape(a);
        if c.len() != s[0] * s[1] {
            return Err(Error::Shape { op: "mul_const", left: s, right: [1, c.len()] });
        }
        let out = self.value(a).iter().zip(c).map(|(&x, &y)| x * y).collect();
        Ok(self.push(s, out, Op::MulConst(a, c.to_vec())))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let [m, n] = self.shape(a);
        let v = self.value(a);
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = v[i * n + j];
            }
        }
        self.push([n, m], out, Op::Transpose(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::Invalid("concat_cols: no inputs".into()))?;
        let m = self.shape(first)[0];
        for &p in parts {
            if self.shape(p)[0] != m {
                return Err(Error::Shape { op: "concat_cols", left: self.shape(first), right: self.shape(p) });
            }
        }
        let n: usize = parts.iter().map(|&p| self.shape(p)[1]).sum();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for &p in parts {
                let c = self.shape(p)[1];
                out.extend_from_slice(&self.value(p)[i * c..(i + 1) * c]);
            }
        }
        Ok(self.push([m, n], out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::Invalid("concat_rows: no inputs".into()))?;
        let n = self.shape(first)[1];
        for &p in parts {
            if self.shape(p)[1] != n {
                return Err(Error::Shape { op: "concat_rows", left: self.shape(first), right: self.shape(p) });
            }
        }
        let m: usize = parts.iter().map(|&p| self.shape(p)[0]).sum();
        let mut out = Vec::with_capacity(m * n);
        for &p in parts {
            out.extend_from_slice(self.value(p));
        }
        Ok(self.push([m, n], out, Op::ConcatRows(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let [m, n] = self.shape(a);
        if start + len > n {
            return Err(Error::Shape { op: "slice_cols", left: [m, n], right: [start, len] });
        }
        let v = self.value(a);
        let out = (0..m).flat_map(|i| v[i * n + start..i * n + start + len].iter().copied()).collect();
        Ok(self.push([m, len], out, Op::SliceCols(a, start)))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let [m, n] = self.shape(a);
        if start + len > m {
            return Err(Error::Shape { op: "slice_rows", left: [m, n], right: [start, len] });
        }
        let out = self.value(a)[start * n..(start + len) * n].to_vec();
        Ok(self.push([len, n], out, Op::SliceRows(a, start)))
    }

    fn map(&mut self, a: Var, f: impl Fn(T) -> T, rec: Op<T>) -> Var {
        let out = self.value(a).iter().map(|&x| f(x)).collect();
        self.push(self.shape(a), out, rec)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, |x| T::one() / (T::one() + (-x).exp()), Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, T::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| x.max(T::zero()), Op::Relu(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.map(a, T::ln, Op::Log(a))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let out = softmax_rows(self.value(a), self.shape(a)[1], false);
        self.push(self.shape(a), out, Op::Softmax(a))
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let out = softmax_rows(self.value(a), self.shape(a)[1], true);
        self.push(self.shape(a), out, Op::LogSoftmax(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().copied().sum();
        self.push([1, 1], vec![s], Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.iter().copied().sum::<T>() / T::of(v.len().max(1) as f64);
        self.push([1, 1], vec![s], Op::Mean(a))
    }

    /// Sum across columns: `[m, n] → [m, 1]`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let [m, n] = self.shape(a);
        let out = self.value(a).chunks(n.max(1)).map(|r| r.iter().copied().sum()).take(m).collect();
        self.push([m, 1], out, Op::SumCols(a))
    }

    /// Mean across rows: `[m, n] → [1, n]`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let [m, n] = self.shape(a);
        let v = self.value(a);
        let mut out = vec![T::zero(); n];
        for r in v.chunks(n.max(1)) {
            for (o, &x) in out.iter_mut().zip(r) {
                *o += x;
            }
        }
        let inv = T::one() / T::of(m.max(1) as f64);
        out.iter_mut().for_each(|o| *o *= inv);
        self.push([1, n], out, Op::MeanRows(a))
    }

    /// Scales row `i` of `a` by `c[i]`, with `c` of shape `[m, 1]`.
    pub fn mul_col(&mut self, a: Var, c: Var) -> Result<Var> {
        let ([m, n], sc) = (self.shape(a), self.shape(c));
        if sc != [m, 1] {
            return Err(Error::Shape { op: "mul_col", left: [m, n], right: sc });
        }
        let cv = self.value(c);
        let out = self
            .value(a)
            .chunks(n.max(1))
            .zip(cv)
            .flat_map(|(r, &s)| r.iter().map(move |&x| x * s))
            .collect();
        Ok(self.push([m, n], out, Op::MulCol(a, c)))
    }

    /// Element `a[i, idx[i]]` of every row, as `[m, 1]`.
    pub fn pick(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let [m, n] = self.shape(a);
        if idx.len() != m || idx.iter().any(|&j| j >= n) {
            return Err(Error::Invalid(format!("pick: {} indices for shape [{m}, {n}]", idx.len())));
        }
        let v = self.value(a);
        let out = idx.iter().enumerate().map(|(i, &j)| v[i * n + j]).collect();
        Ok(self.push([m, 1], out, Op::Pick(a, idx.to_vec())))
    }

    /// Gradients of a `1 × 1` loss with respect to every parameter.
    pub fn backward(&self, loss: Var) -> Result<Grads<T>> {
        if self.shape(loss) != [1, 1] {
            return Err(Error::Invalid(format!("backward needs a scalar loss, got {:?}", self.shape(loss))));
        }
        let mut pg = self.store.zero_grads();
        let mut g: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        g[loss.0] = Some(vec![T::one()]);

        fn acc<T: Real>(g: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut Vec<T> {
            g[v.0].get_or_insert_with(|| vec![T::zero(); len])
        }

        for i in (0..=loss.0).rev() {
            let Some(gi) = g[i].take() else { continue };
            let node = &self.nodes[i];
            let [m, n] = node.shape;
            let len_of = |v: Var| self.nodes[v.0].shape[0] * self.nodes[v.0].shape[1];
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    for (p, &x) in pg.values[id.0].iter_mut().zip(&gi) {
                        *p += x;
                    }
                }
                Op::Gather(id, ids) => {
                    let dst = &mut pg.values[id.0];
                    for (r, &row) in ids.iter().enumerate() {
                        for (p, &x) in dst[row * n..(row + 1) * n].iter_mut().zip(&gi[r * n..(r + 1) * n]) {
                            *p += x;
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let k = self.shape(*a)[1];
                    let (av, bv) = (self.value(*a), self.value(*b));
                    mm_nt(&gi, bv, m, n, k, acc(&mut g, *a, m * k));
                    mm_tn(av, &gi, m, k, n, acc(&mut g, *b, k * n));
                }
                Op::MatMulNT(a, b) => {
                    let k = self.shape(*a)[1];
                    let (av, bv) = (self.value(*a), self.value(*b));
                    mm(&gi, bv, m, n, k, acc(&mut g, *a, m * k));
                    mm_tn(&gi, av, m, n, k, acc(&mut g, *b, n * k));
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let neg = matches!(node.op, Op::Sub(..));
                    acc(&mut g, *a, m * n).iter_mut().zip(&gi).for_each(|(p, &x)| *p += x);
                    acc(&mut g, *b, m * n).iter_mut().zip(&gi).for_each(|(p, &x)| *p += if neg { -x } else { x });
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let da: Vec<T> = gi.iter().zip(bv).map(|(&x, &y)| x * y).collect();
                    let db: Vec<T> = gi.iter().zip(av).map(|(&x, &y)| x * y).collect();
                    acc(&mut g, *a, m * n).iter_mut().zip(da).for_each(|(p, x)| *p += x);
                    acc(&mut g, *b, m * n).iter_mut().zip(db).for_each(|(p, x)| *p += x);
                }
                Op::AddBias(a, b) => {
                    acc(&mut g, *a, m * n).iter_mut().zip(&gi).for_each(|(p, &x)| *p += x);
                    let db = acc(&mut g, *b, n);
                    for r in gi.chunks(n.max(1)) {
                        db.iter_mut().zip(r).for_each(|(p, &x)| *p += x);
                    }
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    acc(&mut g, *a, m * n).iter_mut().zip(&gi).for_each(|(p, &x)| *p += x * c);
                }
                Op::AddConst(a) => {
                    acc(&mut g, *a, m * n).iter_mut().zip(&gi).for_each(|(p, &x)| *p += x);
                }
                Op::MulConst(a, c) => {
                    acc(&mut g, *a, m * n).iter_mut().zip(gi.iter().zip(c)).for_each(|(p, (&x, &y))| *p += x * y);
                }
                Op::Transpose(a) => {
                    let da = acc(&mut g, *a, m * n);
                    // Node is [m, n], input is [n, m].
                    for r in 0..m {
                        for c in 0..n {
                            da[c * m + r] += gi[r * n + c];
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let c = self.shape(p)[1];
                        let dp = acc(&mut g, p, m * c);
                        for r in 0..m {
                            for j in 0..c {
                                dp[r * c + j] += gi[r * n + off + j];
                            }
                        }
                        off += c;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let l = len_of(p);
                        acc(&mut g, p, l).iter_mut().zip(&gi[off..off + l]).for_each(|(q, &x)| *q += x);
                        off += l;
                    }
                }
                Op::SliceCols(a, start) => {
                    let an = self.shape(*a)[1];
                    let da = acc(&mut g, *a, m * an);
                    for r in 0..m {
                        for j in 0..n {
                            da[r * an + start + j] += gi[r * n + j];
                        }
                    }
                }
                Op::SliceRows(a, start) => {
                    let l = len_of(*a);
                    let da = acc(&mut g, *a, l);
                    da[start * n..start * n + m * n].iter_mut().zip(&gi).for_each(|(p, &x)| *p += x);
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    acc(&mut g, *a, m * n)
                        .iter_mut()
                        .zip(gi.iter().zip(y))
                        .for_each(|(p, (&x, &s))| *p += x * s * (T::one() - s));
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    acc(&mut g, *a, m * n)
                        .iter_mut()
                        .zip(gi.iter().zip(y))
                        .for_each(|(p, (&x, &t))| *p += x * (T::one() - t * t));
                }
                Op::Relu(a) => {
                    let xv = self.value(*a);
                    let d: Vec<T> = gi.iter().zip(xv).map(|(&x, &v)| if v > T::zero() { x } else { T::zero() }).collect();
                    acc(&mut g, *a, m * n).iter_mut().zip(d).for_each(|(p, x)| *p += x);
                }
                Op::Log(a) => {
                    let xv = self.value(*a);
                    let d: Vec<T> = gi.iter().zip(xv).map(|(&x, &v)| x / v).collect();
                    acc(&mut g, *a, m * n).iter_mut().zip(d).for_each(|(p, x)| *p += x);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let mut d = vec![T::zero(); m * n];
                    for r in 0..m {
                        let s = r * n..(r + 1) * n;
                        let dot: T = gi[s.clone()].iter().zip(&y[s.clone()]).map(|(&x, &p)| x * p).sum();
                        for j in s {
                            d[j] = y[j] * (gi[j] - dot);
                        }
                    }
                    acc(&mut g, *a, m * n).iter_mut().zip(d).for_each(|(p, x)| *p += x);
                }
                Op::LogSoftmax(a) => {
                    let y = &node.value;
                    let mut d = vec![T::zero(); m * n];
                    for r in 0..m {
                        let s = r * n..(r + 1) * n;
                        let tot: T = gi[s.clone()].iter().copied().sum();
                        for j in s {
                            d[j] = gi[j] - y[j].exp() * tot;
                        }
                    }
                    acc(&mut g, *a, m * n).iter_mut().zip(d).for_each(|(p, x)| *p += x);
                }
                Op::Sum(a) => {
                    let l = len_of(*a);
                    acc(&mut g, *a, l).iter_mut().for_each(|p| *p += gi[0]);
                }
                Op::Mean(a) => {
                    let l = len_of(*a);
                    let x = gi[0] / T::of(l.max(1) as f64);
                    acc(&mut g, *a, l).iter_mut().for_each(|p| *p += x);
                }
                Op::SumCols(a) => {
                    let an = self.shape(*a)[1];
                    let da = acc(&mut g, *a, m * an);
                    for r in 0..m {
                        da[r * an..(r + 1) * an].iter_mut().for_each(|p| *p += gi[r]);
                    }
                }
                Op::MeanRows(a) => {
                    let am = self.shape(*a)[0];
                    let inv = T::one() / T::of(am.max(1) as f64);
                    let da = acc(&mut g, *a, am * n);
                    for r in 0..am {
                        da[r * n..(r + 1) * n].iter_mut().zip(&gi).for_each(|(p, &x)| *p += x * inv);
                    }
                }
                Op::MulCol(a, c) => {
                    let (av, cv) = (self.value(*a), self.value(*c));
                    let mut da = vec![T::zero(); m * n];
                    let mut dc = vec![T::zero(); m];
                    for r in 0..m {
                        for j in 0..n {
                            da[r * n + j] = gi[r * n + j] * cv[r];
                            dc[r] += gi[r * n + j] * av[r * n + j];
                        }
                    }
                    acc(&mut g, *a, m * n).iter_mut().zip(da).for_each(|(p, x)| *p += x);
                    acc(&mut g, *c, m).iter_mut().zip(dc).for_each(|(p, x)| *p += x);
                }
                Op::Pick(a, idx) => {
                    let an = self.shape(*a)[1];
                    let da = acc(&mut g, *a, m * an);
                    for (r, &j) in idx.iter().enumerate() {
                        da[r * an + j] += gi[r];
                    }
                }
            }
        }
        Ok(pg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let s = ParamStore::<f64>::new();
        let mut t = Tape::new(&s);
        let z = t.zeros(1, 5);
        let y = t.softmax(z);
        assert!(t.value(y).iter().all(|&p| (p - 0.2).abs() < 1e-15));
    }

    #[test]
    fn sigmoid_slope_at_zero() {
        let mut s = ParamStore::<f64>::new();
        let x = s.zeros("x", 1, 1).unwrap();
        let mut t = Tape::new(&s);
        let v = t.param(x);
        let y = t.sigmoid(v);
        let l = t.sum(y);
        assert_eq!(t.backward(l).unwrap().get(x), &[0.25]);
    }

    #[test]
    fn sum_grad_is_ones_and_unused_param_zero() {
        let mut s = ParamStore::<f64>::new();
        let x = s.add("x", 2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let u = s.add("unused", 1, 2, vec![7.0, 8.0]).unwrap();
        let mut t = Tape::new(&s);
        let v = t.param(x);
        let l = t.sum(v);
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(x), &[1.0; 6]);
        assert_eq!(g.get(u), &[0.0, 0.0]);
    }

    #[test]
    fn errors_name_shapes() {
        let s = ParamStore::<f32>::new();
        let mut t = Tape::new(&s);
        let a = t.zeros(2, 3);
        let b = t.zeros(2, 3);
        let e = t.matmul(a, b).unwrap_err();
        assert_eq!(e, Error::Shape { op: "matmul", left: [2, 3], right: [2, 3] });
        assert!(e.to_string().contains("[2, 3]"));
        let c = t.add(a, b).unwrap();
        assert!(t.backward(c).is_err());
    }

    #[test]
    fn gather_scatters_into_rows() {
        let mut s = ParamStore::<f64>::new();
        let e = s.add("emb", 3, 2, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let mut t = Tape::new(&s);
        let v = t.gather(e, &[2, 0, 2]).unwrap();
        assert_eq!(t.value(v), &[4.0, 5.0, 0.0, 1.0, 4.0, 5.0]);
        let l = t.sum(v);
        assert_eq!(t.backward(l).unwrap().get(e), &[1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
        assert!(t.gather(e, &[3]).is_err());
    }
}
