//! Reverse-mode differentiation over a flat scalar buffer.
//!
//! A [`Tape`] records primitive operations in topological order and computes
//! forward values eagerly at record time. [`Tape::backward`] then sweeps the
//! node list in reverse, accumulating adjoints, so the adjoint of every leaf
//! equals the partial derivative of the seeded output with respect to that
//! leaf. The accumulation order is fixed by the node order, which makes
//! gradients bit-reproducible for a fixed tape.
//!
//! Besides scalar primitives there are a few vectorized nodes (affine map,
//! reduction sum, rectifier) that write a contiguous range of output slots;
//! these carry the bulk of the MLP arithmetic without per-scalar node
//! overhead.

use super::DiffError;

/// Index of a scalar slot in the tape's value/adjoint buffers.
pub type Slot = u32;

/// Handle to one recorded scalar value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) Slot);

/// Handle to a contiguous range of recorded scalar values.
#[derive(Clone, Copy, Debug)]
pub struct VarRange {
    pub(crate) start: Slot,
    pub(crate) len: u32,
}

impl VarRange {
    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// The `i`-th scalar of the range.
    pub fn at(&self, i: usize) -> Var {
        assert!(i < self.len as usize, "VarRange index out of range");
        Var(self.start + i as u32)
    }
}

#[derive(Clone, Copy, Debug)]
enum Node {
    /// `n` externally-set input slots starting at `out`.
    Leaf { out: Slot, n: u32 },
    Const { out: Slot },
    Add { a: Slot, b: Slot, out: Slot },
    Sub { a: Slot, b: Slot, out: Slot },
    Mul { a: Slot, b: Slot, out: Slot },
    Div { a: Slot, b: Slot, out: Slot },
    Neg { a: Slot, out: Slot },
    Exp { a: Slot, out: Slot },
    Ln { a: Slot, out: Slot },
    Sin { a: Slot, out: Slot },
    Cos { a: Slot, out: Slot },
    Sqrt { a: Slot, out: Slot },
    Recip { a: Slot, out: Slot },
    AddConst { a: Slot, c: f64, out: Slot },
    MulConst { a: Slot, c: f64, out: Slot },
    /// `a + c * b`.
    Axpy { a: Slot, b: Slot, c: f64, out: Slot },
    /// `scale * sin(freq * a)`; the workhorse of positional encoding.
    SinScaled { a: Slot, freq: f64, scale: f64, out: Slot },
    CosScaled { a: Slot, freq: f64, scale: f64, out: Slot },
    /// Ties take the first operand's subgradient.
    Max { a: Slot, b: Slot, out: Slot },
    /// Huber penalty with threshold `delta`; quadratic branch at the knee.
    Huber { a: Slot, delta: f64, out: Slot },
    /// `softplus(a - shift)`, numerically stable on both tails.
    Softplus { a: Slot, shift: f64, out: Slot },
    Sigmoid { a: Slot, out: Slot },
    /// Dense affine map `y = W x + b` with `W` row-major at `w`.
    Affine { w: Slot, b: Slot, x: Slot, rows: u32, cols: u32, out: Slot },
    /// Elementwise `max(x_i, 0)` over `n` slots.
    Relu { x: Slot, n: u32, out: Slot },
    /// Reduction sum over `n` contiguous slots.
    Sum { x: Slot, n: u32, out: Slot },
}

/// Append-only record of primitive operations with eager forward values.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    vals: Vec<f64>,
    adj: Vec<f64>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drops all nodes and values but keeps allocations for reuse.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.vals.clear();
        self.adj.clear();
    }

    pub fn num_slots(&self) -> usize {
        self.vals.len()
    }

    pub fn value(&self, v: Var) -> f64 {
        self.vals[v.0 as usize]
    }

    pub fn values(&self, r: VarRange) -> &[f64] {
        &self.vals[r.start as usize..(r.start + r.len) as usize]
    }

    /// Adjoint of `v` after the last [`backward`](Self::backward) call.
    pub fn adjoint(&self, v: Var) -> f64 {
        self.adj[v.0 as usize]
    }

    pub fn adjoints(&self, r: VarRange) -> &[f64] {
        &self.adj[r.start as usize..(r.start + r.len) as usize]
    }

    fn push_slot(&mut self, v: f64) -> Slot {
        let s = self.vals.len() as Slot;
        self.vals.push(v);
        s
    }

    fn push_slots(&mut self, n: usize) -> Slot {
        let s = self.vals.len() as Slot;
        self.vals.resize(self.vals.len() + n, 0.0);
        s
    }

    /// Reserves one leaf slot holding `v`.
    pub fn leaf(&mut self, v: f64) -> Var {
        let out = self.push_slot(v);
        self.nodes.push(Node::Leaf { out, n: 1 });
        Var(out)
    }

    /// Reserves a contiguous block of leaf slots initialized from `vals`.
    pub fn leaves(&mut self, vals: &[f64]) -> VarRange {
        let start = self.vals.len() as Slot;
        self.vals.extend_from_slice(vals);
        self.nodes.push(Node::Leaf { out: start, n: vals.len() as u32 });
        VarRange { start, len: vals.len() as u32 }
    }

    pub fn constant(&mut self, v: f64) -> Var {
        let out = self.push_slot(v);
        self.nodes.push(Node::Const { out });
        Var(out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.vals[a.0 as usize] + self.vals[b.0 as usize];
        let out = self.push_slot(v);
        self.nodes.push(Node::Add { a: a.0, b: b.0, out });
        Var(out)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.vals[a.0 as usize] - self.vals[b.0 as usize];
        let out = self.push_slot(v);
        self.nodes.push(Node::Sub { a: a.0, b: b.0, out });
        Var(out)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.vals[a.0 as usize] * self.vals[b.0 as usize];
        let out = self.push_slot(v);
        self.nodes.push(Node::Mul { a: a.0, b: b.0, out });
        Var(out)
    }

    /// Fails on division by exactly zero.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let bv = self.vals[b.0 as usize];
        if bv == 0.0 {
            return Err(DiffError::Domain { op: "div", value: bv });
        }
        let v = self.vals[a.0 as usize] / bv;
        let out = self.push_slot(v);
        self.nodes.push(Node::Div { a: a.0, b: b.0, out });
        Ok(Var(out))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = -self.vals[a.0 as usize];
        let out = self.push_slot(v);
        self.nodes.push(Node::Neg { a: a.0, out });
        Var(out)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.vals[a.0 as usize].exp();
        let out = self.push_slot(v);
        self.nodes.push(Node::Exp { a: a.0, out });
        Var(out)
    }

    /// Natural log; fails on non-positive input.
    pub fn ln(&mut self, a: Var) -> Result<Var, DiffError> {
        let av = self.vals[a.0 as usize];
        if av <= 0.0 {
            return Err(DiffError::Domain { op: "ln", value: av });
        }
        let out = self.push_slot(av.ln());
        self.nodes.push(Node::Ln { a: a.0, out });
        Ok(Var(out))
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let v = self.vals[a.0 as usize].sin();
        let out = self.push_slot(v);
        self.nodes.push(Node::Sin { a: a.0, out });
        Var(out)
    }

    pub fn cos(&mut self, a: Var) -> Var {
        let v = self.vals[a.0 as usize].cos();
        let out = self.push_slot(v);
        self.nodes.push(Node::Cos { a: a.0, out });
        Var(out)
    }

    /// Fails on negative input. A zero input is accepted; its adjoint is
    /// infinite and propagates unmasked.
    pub fn sqrt(&mut self, a: Var) -> Result<Var, DiffError> {
        let av = self.vals[a.0 as usize];
        if av < 0.0 {
            return Err(DiffError::Domain { op: "sqrt", value: av });
        }
        let out = self.push_slot(av.sqrt());
        self.nodes.push(Node::Sqrt { a: a.0, out });
        Ok(Var(out))
    }

    pub fn recip(&mut self, a: Var) -> Result<Var, DiffError> {
        let av = self.vals[a.0 as usize];
        if av == 0.0 {
            return Err(DiffError::Domain { op: "recip", value: av });
        }
        let out = self.push_slot(av.recip());
        self.nodes.push(Node::Recip { a: a.0, out });
        Ok(Var(out))
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let v = self.vals[a.0 as usize] + c;
        let out = self.push_slot(v);
        self.nodes.push(Node::AddConst { a: a.0, c, out });
        Var(out)
    }

    pub fn mul_const(&mut self, a: Var, c: f64) -> Var {
        let v = self.vals[a.0 as usize] * c;
        let out = self.push_slot(v);
        self.nodes.push(Node::MulConst { a: a.0, c, out });
        Var(out)
    }

    /// `a + c * b` in one node.
    pub fn axpy(&mut self, a: Var, c: f64, b: Var) -> Var {
        let v = self.vals[a.0 as usize] + c * self.vals[b.0 as usize];
        let out = self.push_slot(v);
        self.nodes.push(Node::Axpy { a: a.0, b: b.0, c, out });
        Var(out)
    }

    pub fn sin_scaled(&mut self, a: Var, freq: f64, scale: f64) -> Var {
        let v = scale * (freq * self.vals[a.0 as usize]).sin();
        let out = self.push_slot(v);
        self.nodes.push(Node::SinScaled { a: a.0, freq, scale, out });
        Var(out)
    }

    pub fn cos_scaled(&mut self, a: Var, freq: f64, scale: f64) -> Var {
        let v = scale * (freq * self.vals[a.0 as usize]).cos();
        let out = self.push_slot(v);
        self.nodes.push(Node::CosScaled { a: a.0, freq, scale, out });
        Var(out)
    }

    /// Maximum of two scalars; the first operand wins ties.
    pub fn max(&mut self, a: Var, b: Var) -> Var {
        let av = self.vals[a.0 as usize];
        let bv = self.vals[b.0 as usize];
        let out = self.push_slot(if av >= bv { av } else { bv });
        self.nodes.push(Node::Max { a: a.0, b: b.0, out });
        Var(out)
    }

    /// Huber penalty `r^2/2` for `|r| <= delta`, else `delta*|r| - delta^2/2`.
    pub fn huber(&mut self, a: Var, delta: f64) -> Var {
        let r = self.vals[a.0 as usize];
        let v = huber_value(r, delta);
        let out = self.push_slot(v);
        self.nodes.push(Node::Huber { a: a.0, delta, out });
        Var(out)
    }

    /// `softplus(a - shift) = ln(1 + exp(a - shift))`.
    pub fn softplus(&mut self, a: Var, shift: f64) -> Var {
        let t = self.vals[a.0 as usize] - shift;
        let out = self.push_slot(softplus_value(t));
        self.nodes.push(Node::Softplus { a: a.0, shift, out });
        Var(out)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.vals[a.0 as usize];
        let out = self.push_slot(sigmoid_value(t));
        self.nodes.push(Node::Sigmoid { a: a.0, out });
        Var(out)
    }

    /// Matrix-vector product plus bias: `y = W x + b` with `W` stored
    /// row-major in the `rows * cols` slots starting at `w`.
    pub fn affine(&mut self, w: VarRange, b: VarRange, x: VarRange, rows: usize, cols: usize) -> VarRange {
        assert_eq!(w.len(), rows * cols, "weight range size mismatch");
        assert_eq!(b.len(), rows, "bias range size mismatch");
        assert_eq!(x.len(), cols, "input range size mismatch");
        let out = self.push_slots(rows);
        let (ws, bs, xs) = (w.start as usize, b.start as usize, x.start as usize);
        for i in 0..rows {
            let row = &self.vals[ws + i * cols..ws + (i + 1) * cols];
            let mut acc = 0.0;
            for (wv, xv) in row.iter().zip(&self.vals[xs..xs + cols]) {
                acc += wv * xv;
            }
            self.vals[out as usize + i] = acc + self.vals[bs + i];
        }
        self.nodes.push(Node::Affine {
            w: w.start,
            b: b.start,
            x: x.start,
            rows: rows as u32,
            cols: cols as u32,
            out,
        });
        VarRange { start: out, len: rows as u32 }
    }

    /// Elementwise rectifier over a contiguous range.
    pub fn relu(&mut self, x: VarRange) -> VarRange {
        let n = x.len();
        let out = self.push_slots(n);
        for i in 0..n {
            let v = self.vals[x.start as usize + i];
            self.vals[out as usize + i] = if v >= 0.0 { v } else { 0.0 };
        }
        self.nodes.push(Node::Relu { x: x.start, n: n as u32, out });
        VarRange { start: out, len: n as u32 }
    }

    /// Reduction sum over a contiguous range.
    pub fn sum(&mut self, x: VarRange) -> Var {
        let s: f64 = self.vals[x.start as usize..x.start as usize + x.len()].iter().sum();
        let out = self.push_slot(s);
        self.nodes.push(Node::Sum { x: x.start, n: x.len, out });
        Var(out)
    }

    /// Seeds `output` with adjoint 1 and sweeps the node list in reverse.
    ///
    /// Adjoints are reset first, so calling this twice on the same tape
    /// yields identical results. NaNs propagate unmasked.
    pub fn backward(&mut self, output: Var) {
        self.adj.clear();
        self.adj.resize(self.vals.len(), 0.0);
        self.adj[output.0 as usize] = 1.0;
        for node in self.nodes.iter().rev() {
            match *node {
                Node::Leaf { .. } | Node::Const { .. } => {}
                Node::Add { a, b, out } => {
                    let g = self.adj[out as usize];
                    self.adj[a as usize] += g;
                    self.adj[b as usize] += g;
                }
                Node::Sub { a, b, out } => {
                    let g = self.adj[out as usize];
                    self.adj[a as usize] += g;
                    self.adj[b as usize] -= g;
                }
                Node::Mul { a, b, out } => {
                    let g = self.adj[out as usize];
                    self.adj[a as usize] += g * self.vals[b as usize];
                    self.adj[b as usize] += g * self.vals[a as usize];
                }
                Node::Div { a, b, out } => {
                    let g = self.adj[out as usize];
                    let bv = self.vals[b as usize];
                    self.adj[a as usize] += g / bv;
                    self.adj[b as usize] -= g * self.vals[out as usize] / bv;
                }
                Node::Neg { a, out } => {
                    self.adj[a as usize] -= self.adj[out as usize];
                }
                Node::Exp { a, out } => {
                    self.adj[a as usize] += self.adj[out as usize] * self.vals[out as usize];
                }
                Node::Ln { a, out } => {
                    self.adj[a as usize] += self.adj[out as usize] / self.vals[a as usize];
                }
                Node::Sin { a, out } => {
                    self.adj[a as usize] += self.adj[out as usize] * self.vals[a as usize].cos();
                }
                Node::Cos { a, out } => {
                    self.adj[a as usize] -= self.adj[out as usize] * self.vals[a as usize].sin();
                }
                Node::Sqrt { a, out } => {
                    self.adj[a as usize] += self.adj[out as usize] * 0.5 / self.vals[out as usize];
                }
                Node::Recip { a, out } => {
                    let v = self.vals[out as usize];
                    self.adj[a as usize] -= self.adj[out as usize] * v * v;
                }
                Node::AddConst { a, out, .. } => {
                    self.adj[a as usize] += self.adj[out as usize];
                }
                Node::MulConst { a, c, out } => {
                    self.adj[a as usize] += self.adj[out as usize] * c;
                }
                Node::Axpy { a, b, c, out } => {
                    let g = self.adj[out as usize];
                    self.adj[a as usize] += g;
                    self.adj[b as usize] += g * c;
                }
                Node::SinScaled { a, freq, scale, out } => {
                    let g = self.adj[out as usize];
                    self.adj[a as usize] += g * scale * freq * (freq * self.vals[a as usize]).cos();
                }
                Node::CosScaled { a, freq, scale, out } => {
                    let g = self.adj[out as usize];
                    self.adj[a as usize] -= g * scale * freq * (freq * self.vals[a as usize]).sin();
                }
                Node::Max { a, b, out } => {
                    let g = self.adj[out as usize];
                    if self.vals[a as usize] >= self.vals[b as usize] {
                        self.adj[a as usize] += g;
                    } else {
                        self.adj[b as usize] += g;
                    }
                }
                Node::Huber { a, delta, out } => {
                    let r = self.vals[a as usize];
                    let d = if r.abs() <= delta { r } else { delta * r.signum() };
                    self.adj[a as usize] += self.adj[out as usize] * d;
                }
                Node::Softplus { a, shift, out } => {
                    let t = self.vals[a as usize] - shift;
                    self.adj[a as usize] += self.adj[out as usize] * sigmoid_value(t);
                }
                Node::Sigmoid { a, out } => {
                    let v = self.vals[out as usize];
                    self.adj[a as usize] += self.adj[out as usize] * v * (1.0 - v);
                }
                Node::Affine { w, b, x, rows, cols, out } => {
                    let (rows, cols) = (rows as usize, cols as usize);
                    let (ws, bs, xs, os) = (w as usize, b as usize, x as usize, out as usize);
                    for i in 0..rows {
                        let g = self.adj[os + i];
                        if g == 0.0 {
                            continue;
                        }
                        self.adj[bs + i] += g;
                        let row_at = ws + i * cols;
                        for j in 0..cols {
                            self.adj[xs + j] += g * self.vals[row_at + j];
                            self.adj[row_at + j] += g * self.vals[xs + j];
                        }
                    }
                }
                Node::Relu { x, n, out } => {
                    for i in 0..n as usize {
                        if self.vals[x as usize + i] >= 0.0 {
                            self.adj[x as usize + i] += self.adj[out as usize + i];
                        }
                    }
                }
                Node::Sum { x, n, out } => {
                    let g = self.adj[out as usize];
                    for i in 0..n as usize {
                        self.adj[x as usize + i] += g;
                    }
                }
            }
        }
    }

    /// True if any recorded value is NaN or infinite.
    pub fn has_nonfinite_value(&self) -> bool {
        self.vals.iter().any(|v| !v.is_finite())
    }
}

pub(crate) fn huber_value(r: f64, delta: f64) -> f64 {
    if r.abs() <= delta {
        0.5 * r * r
    } else {
        delta * r.abs() - 0.5 * delta * delta
    }
}

pub(crate) fn softplus_value(t: f64) -> f64 {
    if t > 30.0 {
        t
    } else if t < -30.0 {
        t.exp()
    } else {
        t.exp().ln_1p()
    }
}

pub(crate) fn sigmoid_value(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}
