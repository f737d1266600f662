use num_traits::Float;

use super::AutodiffError;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation recorded for a node. Operands always refer to earlier nodes.
#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    /// Differentiable leaf.
    Input,
    /// Non-differentiable leaf.
    Constant,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// Row-major matrix times vector.
    MatVec(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    /// `clamp(x / 6 + 1/2, 0, 1)`.
    HardSigmoid(Var),
    Softplus(Var),
    Log(Var),
    Neg(Var),
    Sum(Var),
    Mean(Var),
    Concat(Vec<Var>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Constant => "constant",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::MatVec(..) => "matvec",
            Op::Tanh(_) => "tanh",
            Op::Sigmoid(_) => "sigmoid",
            Op::HardSigmoid(_) => "hardsigmoid",
            Op::Softplus(_) => "softplus",
            Op::Log(_) => "log",
            Op::Neg(_) => "neg",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Concat(_) => "concat",
        }
    }

    /// Nodes this one reads.
    pub fn operands(&self) -> Vec<Var> {
        match self {
            Op::Input | Op::Constant => Vec::new(),
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MatVec(a, b) => vec![*a, *b],
            Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::HardSigmoid(a)
            | Op::Softplus(a)
            | Op::Log(a)
            | Op::Neg(a)
            | Op::Sum(a)
            | Op::Mean(a) => vec![*a],
            Op::Concat(vs) => vs.clone(),
        }
    }
}

#[derive(Debug, Clone)]
struct Node<T> {
    op: Op,
    value: Vec<T>,
    /// Column count; vectors have `cols == 1`.
    cols: usize,
}

impl<T> Node<T> {
    fn rows(&self) -> usize {
        self.value.len() / self.cols.max(1)
    }
}

/// Append-only computation graph. Values are computed eagerly as nodes are
/// pushed; [`Tape::forward`] re-evaluates everything after leaves change.
///
/// Binary element-wise ops accept equal lengths or a length-1 operand, which
/// is broadcast. There is no other broadcasting.
#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

pub(crate) fn sigmoid<T: Float>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `log(1 + exp(x))` without overflow; underflows to exactly zero for very
/// negative `x`.
pub(crate) fn softplus<T: Float>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn hardsigmoid<T: Float>(x: T) -> T {
    let six = T::from(6.0).unwrap();
    let half = T::from(0.5).unwrap();
    (x / six + half).max(T::zero()).min(T::one())
}

fn broadcast_len(a: usize, b: usize) -> Option<usize> {
    match (a, b) {
        _ if a == b => Some(a),
        (1, n) | (n, 1) => Some(n),
        _ => None,
    }
}

fn zip_broadcast<T: Float>(a: &[T], b: &[T], f: impl Fn(T, T) -> T) -> Vec<T> {
    let n = a.len().max(b.len());
    let ai = |i: usize| if a.len() == 1 { a[0] } else { a[i] };
    let bi = |i: usize| if b.len() == 1 { b[0] } else { b[i] };
    (0..n).map(|i| f(ai(i), bi(i))).collect()
}

/// Accumulates `g` into `acc`, summing over broadcast positions when `acc` is
/// a scalar and `g` is not.
fn accumulate<T: Float>(acc: &mut [T], g: impl Iterator<Item = T>) {
    if acc.len() == 1 {
        let s = g.fold(T::zero(), |s, v| s + v);
        acc[0] = acc[0] + s;
    } else {
        for (a, v) in acc.iter_mut().zip(g) {
            *a = *a + v;
        }
    }
}

impl<T: Float> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn with_capacity(n: usize) -> Self {
        Self { nodes: Vec::with_capacity(n) }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Every node in recording order.
    pub fn vars(&self) -> impl Iterator<Item = Var> {
        (0..self.nodes.len()).map(Var)
    }

    /// Differentiable vector leaf.
    pub fn input(&mut self, value: Vec<T>) -> Var {
        self.push_leaf(Op::Input, value, 1)
    }

    /// Differentiable scalar leaf.
    pub fn scalar_input(&mut self, value: T) -> Var {
        self.input(vec![value])
    }

    /// Differentiable row-major matrix leaf.
    pub fn matrix_input(&mut self, rows: usize, cols: usize, value: Vec<T>) -> Var {
        assert_eq!(rows * cols, value.len(), "matrix leaf has wrong element count");
        self.push_leaf(Op::Input, value, cols)
    }

    pub fn constant(&mut self, value: Vec<T>) -> Var {
        self.push_leaf(Op::Constant, value, 1)
    }

    pub fn scalar_constant(&mut self, value: T) -> Var {
        self.constant(vec![value])
    }

    fn push_leaf(&mut self, op: Op, value: Vec<T>, cols: usize) -> Var {
        self.nodes.push(Node { op, value, cols });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    /// First element of a node's value; intended for scalar nodes.
    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value[0]
    }

    pub fn op(&self, v: Var) -> &Op {
        &self.nodes[v.0].op
    }

    /// Replaces the value of a leaf. Call [`Tape::forward`] afterwards.
    pub fn set_value(&mut self, v: Var, value: Vec<T>) -> Result<(), AutodiffError> {
        let node = self.nodes.get_mut(v.0).ok_or(AutodiffError::UnknownNode(v.0))?;
        if !matches!(node.op, Op::Input | Op::Constant) {
            return Err(AutodiffError::NotALeaf(v.0));
        }
        if node.value.len() != value.len() {
            return Err(AutodiffError::Shape { op: "set_value", left: node.value.len(), right: value.len() });
        }
        node.value = value;
        Ok(())
    }

    fn push(&mut self, op: Op) -> Result<Var, AutodiffError> {
        let at = self.nodes.len();
        for operand in op.operands() {
            if operand.0 >= at {
                return Err(AutodiffError::UnknownNode(operand.0));
            }
        }
        let (value, cols) = self.eval(&op)?;
        self.nodes.push(Node { op, value, cols });
        Ok(Var(at))
    }

    fn eval(&self, op: &Op) -> Result<(Vec<T>, usize), AutodiffError> {
        let val = |v: &Var| &self.nodes[v.0].value;
        let unary = |a: &Var, f: fn(T) -> T| val(a).iter().map(|&x| f(x)).collect::<Vec<_>>();
        let cols = match op {
            Op::Tanh(a) | Op::Sigmoid(a) | Op::HardSigmoid(a) | Op::Softplus(a) | Op::Log(a) | Op::Neg(a) => {
                self.nodes[a.0].cols
            }
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                let (na, nb) = (&self.nodes[a.0], &self.nodes[b.0]);
                if na.value.len() >= nb.value.len() {
                    na.cols
                } else {
                    nb.cols
                }
            }
            _ => 1,
        };
        let out = match op {
            Op::Input | Op::Constant => unreachable!("leaves are not evaluated"),
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                let (x, y) = (val(a), val(b));
                broadcast_len(x.len(), y.len()).ok_or(AutodiffError::Shape {
                    op: op.name(),
                    left: x.len(),
                    right: y.len(),
                })?;
                match op {
                    Op::Add(..) => zip_broadcast(x, y, |p, q| p + q),
                    Op::Sub(..) => zip_broadcast(x, y, |p, q| p - q),
                    _ => zip_broadcast(x, y, |p, q| p * q),
                }
            }
            Op::MatVec(m, x) => {
                let node = &self.nodes[m.0];
                let (rows, cols) = (node.rows(), node.cols);
                let xs = val(x);
                if xs.len() != cols {
                    return Err(AutodiffError::Shape { op: "matvec", left: cols, right: xs.len() });
                }
                (0..rows)
                    .map(|i| {
                        node.value[i * cols..(i + 1) * cols].iter().zip(xs).fold(T::zero(), |s, (&w, &v)| s + w * v)
                    })
                    .collect()
            }
            Op::Tanh(a) => unary(a, T::tanh),
            Op::Sigmoid(a) => unary(a, sigmoid),
            Op::HardSigmoid(a) => unary(a, hardsigmoid),
            Op::Softplus(a) => unary(a, softplus),
            Op::Log(a) => {
                if let Some(&bad) = val(a).iter().find(|&&x| !(x > T::zero())) {
                    return Err(AutodiffError::Domain { op: "log", value: bad.to_f64().unwrap_or(f64::NAN) });
                }
                unary(a, T::ln)
            }
            Op::Neg(a) => unary(a, |x| -x),
            Op::Sum(a) => vec![val(a).iter().fold(T::zero(), |s, &x| s + x)],
            Op::Mean(a) => {
                let xs = val(a);
                if xs.is_empty() {
                    return Err(AutodiffError::Shape { op: "mean", left: 0, right: 1 });
                }
                let n = T::from(xs.len()).unwrap();
                vec![xs.iter().fold(T::zero(), |s, &x| s + x) / n]
            }
            Op::Concat(vs) => vs.iter().flat_map(|v| val(v).iter().copied()).collect(),
        };
        Ok((out, cols))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Mul(a, b))
    }

    pub fn matvec(&mut self, m: Var, x: Var) -> Result<Var, AutodiffError> {
        self.push(Op::MatVec(m, x))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Sigmoid(a))
    }

    pub fn hardsigmoid(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.push(Op::HardSigmoid(a))
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Softplus(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Log(a))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Neg(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Mean(a))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        self.push(Op::Concat(parts.to_vec()))
    }

    /// Re-evaluates every non-leaf node in recording order.
    pub fn forward(&mut self) -> Result<(), AutodiffError> {
        for i in 0..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Input | Op::Constant) {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let (value, cols) = self.eval(&op)?;
            self.nodes[i].value = value;
            self.nodes[i].cols = cols;
        }
        Ok(())
    }

    /// Reverse sweep from a scalar `output`.
    pub fn backward(&self, output: Var) -> Result<Gradient<T>, AutodiffError> {
        let out = self.nodes.get(output.0).ok_or(AutodiffError::UnknownNode(output.0))?;
        if out.value.len() != 1 {
            return Err(AutodiffError::NotScalar(out.value.len()));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(vec![T::one()]);

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let slot = |grads: &mut Vec<Option<Vec<T>>>, v: Var| -> usize {
                let n = self.nodes[v.0].value.len();
                grads[v.0].get_or_insert_with(|| vec![T::zero(); n]);
                v.0
            };
            let at = |xs: &[T], k: usize| if xs.len() == 1 { xs[0] } else { xs[k] };
            match &node.op {
                Op::Input | Op::Constant => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(node.op, Op::Sub(..)) { -T::one() } else { T::one() };
                    let ia = slot(&mut grads, *a);
                    accumulate(grads[ia].as_mut().unwrap(), g.iter().copied());
                    let ib = slot(&mut grads, *b);
                    accumulate(grads[ib].as_mut().unwrap(), g.iter().map(|&v| sign * v));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let ia = slot(&mut grads, *a);
                    accumulate(grads[ia].as_mut().unwrap(), g.iter().enumerate().map(|(k, &v)| v * at(vb, k)));
                    let ib = slot(&mut grads, *b);
                    accumulate(grads[ib].as_mut().unwrap(), g.iter().enumerate().map(|(k, &v)| v * at(va, k)));
                }
                Op::MatVec(m, x) => {
                    let mnode = &self.nodes[m.0];
                    let cols = mnode.cols;
                    let xs = &self.nodes[x.0].value;
                    let im = slot(&mut grads, *m);
                    {
                        let gm = grads[im].as_mut().unwrap();
                        for (r, &gr) in g.iter().enumerate() {
                            if gr == T::zero() {
                                continue;
                            }
                            for (w, &xv) in gm[r * cols..(r + 1) * cols].iter_mut().zip(xs) {
                                *w = *w + gr * xv;
                            }
                        }
                    }
                    let ix = slot(&mut grads, *x);
                    let gx = grads[ix].as_mut().unwrap();
                    for (r, &gr) in g.iter().enumerate() {
                        for (acc, &w) in gx.iter_mut().zip(&mnode.value[r * cols..(r + 1) * cols]) {
                            *acc = *acc + gr * w;
                        }
                    }
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    let ia = slot(&mut grads, *a);
                    accumulate(grads[ia].as_mut().unwrap(), g.iter().zip(y).map(|(&v, &y)| v * (T::one() - y * y)));
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    let ia = slot(&mut grads, *a);
                    accumulate(grads[ia].as_mut().unwrap(), g.iter().zip(y).map(|(&v, &y)| v * y * (T::one() - y)));
                }
                Op::HardSigmoid(a) => {
                    let x = &self.nodes[a.0].value;
                    let three = T::from(3.0).unwrap();
                    let sixth = T::one() / T::from(6.0).unwrap();
                    let ia = slot(&mut grads, *a);
                    accumulate(
                        grads[ia].as_mut().unwrap(),
                        g.iter().zip(x).map(|(&v, &x)| if x > -three && x < three { v * sixth } else { T::zero() }),
                    );
                }
                Op::Softplus(a) => {
                    let x = &self.nodes[a.0].value;
                    let ia = slot(&mut grads, *a);
                    accumulate(grads[ia].as_mut().unwrap(), g.iter().zip(x).map(|(&v, &x)| v * sigmoid(x)));
                }
                Op::Log(a) => {
                    let x = &self.nodes[a.0].value;
                    let ia = slot(&mut grads, *a);
                    accumulate(grads[ia].as_mut().unwrap(), g.iter().zip(x).map(|(&v, &x)| v / x));
                }
                Op::Neg(a) => {
                    let ia = slot(&mut grads, *a);
                    accumulate(grads[ia].as_mut().unwrap(), g.iter().map(|&v| -v));
                }
                Op::Sum(a) | Op::Mean(a) => {
                    let n = self.nodes[a.0].value.len();
                    let scale = if matches!(node.op, Op::Mean(_)) { T::from(n).unwrap() } else { T::one() };
                    let ia = slot(&mut grads, *a);
                    let gv = g[0] / scale;
                    for acc in grads[ia].as_mut().unwrap().iter_mut() {
                        *acc = *acc + gv;
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.nodes[p.0].value.len();
                        let ip = slot(&mut grads, *p);
                        let gp = grads[ip].as_mut().unwrap();
                        for (acc, &v) in gp.iter_mut().zip(&g[offset..offset + n]) {
                            *acc = *acc + v;
                        }
                        offset += n;
                    }
                }
            }
        }

        // Keep gradients only for differentiable leaves.
        for (i, g) in grads.iter_mut().enumerate() {
            if !matches!(self.nodes[i].op, Op::Input) {
                *g = None;
            }
        }
        Ok(Gradient { grads })
    }
}

/// Partial derivatives of a scalar output with respect to the input leaves.
#[derive(Debug, Clone)]
pub struct Gradient<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Float> Gradient<T> {
    /// `None` when `v` is not an input leaf reachable from the output.
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient for `v`, zero-filled to `len` when the output does not depend on it.
    pub fn wrt(&self, v: Var, len: usize) -> Vec<T> {
        self.get(v).map_or_else(|| vec![T::zero(); len], <[T]>::to_vec)
    }

    pub fn scalar(&self, v: Var) -> T {
        self.get(v).map_or(T::zero(), |g| g[0])
    }

    /// Leaves with a recorded gradient.
    pub fn leaves(&self) -> impl Iterator<Item = (Var, &[T])> {
        self.grads.iter().enumerate().filter_map(|(i, g)| g.as_deref().map(|g| (Var(i), g)))
    }
}
