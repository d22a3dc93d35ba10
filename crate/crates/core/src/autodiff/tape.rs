use super::tensor::{self, Tensor};
use super::trig;
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Constant,
    Linear {
        w: Var,
        b: Var,
        x: Var,
    },
    Sine {
        x: Var,
    },
    Relu {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Sub {
        a: Var,
        b: Var,
    },
    Square {
        x: Var,
    },
    Mean {
        x: Var,
    },
    Sum {
        terms: Vec<Var>,
    },
    BlockAverage {
        x: Var,
        height: usize,
        width: usize,
        factor: usize,
    },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    // Sine caches omega0·cos(omega0·x) for the pullback.
    local_grad: Option<Tensor>,
    requires_grad: bool,
}

/// Define-by-run record of primitive operations for reverse-mode
/// differentiation. Rebuild one per iteration.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    adjoints: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient w.r.t. a leaf; zero if the leaf is not on any path to the loss.
    pub fn get(&self, var: Var) -> Tensor {
        self.adjoints[var.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[var.0]))
    }

    /// Moves the gradient out, leaving zero behind.
    pub fn take(&mut self, var: Var) -> Tensor {
        self.adjoints[var.0]
            .take()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[var.0]))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Clears all nodes so the tape can record a new graph.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.backward_done = false;
    }

    fn push(&mut self, op: Op, value: Tensor, local_grad: Option<Tensor>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            local_grad,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Differentiable input (a parameter).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, None, true)
    }

    /// Non-differentiable input (coordinates, targets).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Constant, value, None, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn linear(&mut self, w: Var, b: Var, x: Var) -> Result<Var> {
        let y = tensor::linear_forward(self.value(w), self.value(b), self.value(x))?;
        let rg = self.requires(w) || self.requires(b) || self.requires(x);
        Ok(self.push(Op::Linear { w, b, x }, y, None, rg))
    }

    pub fn sine(&mut self, x: Var, omega0: f64) -> Var {
        let input = self.value(x);
        let mut y = Vec::with_capacity(input.len());
        let mut d = Vec::with_capacity(input.len());
        for &v in input.data() {
            let (s, c) = trig::sin_cos(omega0 * v);
            y.push(s);
            d.push(omega0 * c);
        }
        let shape = input.shape().to_vec();
        let rg = self.requires(x);
        let y = Tensor::new(shape.clone(), y).expect("shape preserved");
        let d = Tensor::new(shape, d).expect("shape preserved");
        self.push(Op::Sine { x }, y, Some(d), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        let rg = self.requires(x);
        self.push(Op::Relu { x }, y, None, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        va.same_shape(vb, "add")?;
        let mut y = va.clone();
        y.add_assign(vb);
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(Op::Add { a, b }, y, None, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        va.same_shape(vb, "sub")?;
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x - y).collect();
        let y = Tensor::new(va.shape().to_vec(), data)?;
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(Op::Sub { a, b }, y, None, rg))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let y = self.value(x).map(|v| v * v);
        let rg = self.requires(x);
        self.push(Op::Square { x }, y, None, rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let y = Tensor::scalar(v.sum() / v.len() as f64);
        let rg = self.requires(x);
        self.push(Op::Mean { x }, y, None, rg)
    }

    /// Sum of equally shaped terms, accumulated in the given order.
    pub fn sum(&mut self, terms: &[Var]) -> Result<Var> {
        let first = terms.first().ok_or_else(|| Error::Config("sum of zero terms".into()))?;
        let mut y = self.value(*first).clone();
        for t in &terms[1..] {
            self.value(*t).same_shape(&y, "sum")?;
            y.add_assign(self.value(*t));
        }
        let rg = terms.iter().any(|t| self.requires(*t));
        Ok(self.push(Op::Sum { terms: terms.to_vec() }, y, None, rg))
    }

    /// Mean squared error, recorded as subtract → square → mean.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let diff = self.sub(pred, target)?;
        let sq = self.square(diff);
        Ok(self.mean(sq))
    }

    /// Non-overlapping `factor × factor` block average of a `[height·width, channels]`
    /// image tensor.
    pub fn block_average(&mut self, x: Var, height: usize, width: usize, factor: usize) -> Result<Var> {
        let y = block_average(self.value(x), height, width, factor)?;
        let rg = self.requires(x);
        Ok(self.push(
            Op::BlockAverage {
                x,
                height,
                width,
                factor,
            },
            y,
            None,
            rg,
        ))
    }

    /// Reverse sweep from a scalar `loss`. Adjoints of shared subgraphs
    /// accumulate across all their consumers.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        let loss_shape = self.nodes[loss.0].value.shape().to_vec();
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::NonScalarLoss(loss_shape));
        }
        self.backward_done = true;

        let n = self.nodes.len();
        let mut adj: Vec<Option<Tensor>> = vec![None; n];
        adj[loss.0] = Some(Tensor::full(&loss_shape, 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf | Op::Constant) {
                continue;
            }
            let upstream = if i == loss.0 { adj[i].clone() } else { adj[i].take() };
            let Some(g) = upstream else { continue };
            match &node.op {
                Op::Leaf | Op::Constant => unreachable!(),
                Op::Linear { w, b, x } => {
                    let (w, b, x) = (*w, *b, *x);
                    if self.requires(x) {
                        let dx = tensor::matmul_nn(&g, self.value(w));
                        accumulate(&mut adj, x, dx);
                    }
                    if self.requires(w) {
                        let dw = tensor::matmul_tn(&g, self.value(x));
                        accumulate(&mut adj, w, dw);
                    }
                    if self.requires(b) {
                        accumulate(&mut adj, b, tensor::column_sums(&g));
                    }
                }
                Op::Sine { x } => {
                    let d = node.local_grad.as_ref().expect("sine caches derivative");
                    let mut dx = g;
                    for (v, dv) in dx.data_mut().iter_mut().zip(d.data()) {
                        *v *= dv;
                    }
                    accumulate(&mut adj, *x, dx);
                }
                Op::Relu { x } => {
                    let input = self.value(*x);
                    let mut dx = g;
                    for (v, xv) in dx.data_mut().iter_mut().zip(input.data()) {
                        if *xv <= 0.0 {
                            *v = 0.0;
                        }
                    }
                    accumulate(&mut adj, *x, dx);
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    if self.requires(b) {
                        accumulate(&mut adj, b, g.clone());
                    }
                    if self.requires(a) {
                        accumulate(&mut adj, a, g);
                    }
                }
                Op::Sub { a, b } => {
                    let (a, b) = (*a, *b);
                    if self.requires(b) {
                        accumulate(&mut adj, b, g.map(|v| -v));
                    }
                    if self.requires(a) {
                        accumulate(&mut adj, a, g);
                    }
                }
                Op::Square { x } => {
                    let input = self.value(*x);
                    let mut dx = g;
                    for (v, xv) in dx.data_mut().iter_mut().zip(input.data()) {
                        *v *= 2.0 * xv;
                    }
                    accumulate(&mut adj, *x, dx);
                }
                Op::Mean { x } => {
                    let input = self.value(*x);
                    let scale = g.item() / input.len() as f64;
                    accumulate(&mut adj, *x, Tensor::full(input.shape(), scale));
                }
                Op::Sum { terms } => {
                    for t in terms {
                        if self.requires(*t) {
                            accumulate(&mut adj, *t, g.clone());
                        }
                    }
                }
                Op::BlockAverage {
                    x,
                    height,
                    width,
                    factor,
                } => {
                    let dx = block_average_pullback(&g, *height, *width, *factor);
                    accumulate(&mut adj, *x, dx);
                }
            }
        }

        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { adjoints: adj, shapes })
    }
}

fn accumulate(adj: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut adj[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot => *slot = Some(g),
    }
}

/// Block average of a `[height·width, channels]` tensor (also accepts a flat
/// single-channel `[height·width]` tensor).
pub fn block_average(x: &Tensor, height: usize, width: usize, factor: usize) -> Result<Tensor> {
    if factor == 0 || !height.is_multiple_of(factor) || !width.is_multiple_of(factor) {
        return Err(Error::shape("block_average (image vs factor)", (height, width), factor));
    }
    if x.rows() != height * width {
        return Err(Error::shape(
            "block_average (rows vs height·width)",
            x.shape(),
            (height, width),
        ));
    }
    let channels = if x.shape().len() >= 2 { x.cols() } else { 1 };
    let (oh, ow) = (height / factor, width / factor);
    let norm = 1.0 / (factor * factor) as f64;
    let src = x.data();
    let mut out = vec![0.0; oh * ow * channels];
    for oy in 0..oh {
        for ox in 0..ow {
            let dst = &mut out[(oy * ow + ox) * channels..][..channels];
            for dy in 0..factor {
                let row = (oy * factor + dy) * width;
                for dx in 0..factor {
                    let px = &src[(row + ox * factor + dx) * channels..][..channels];
                    for (d, s) in dst.iter_mut().zip(px) {
                        *d += s;
                    }
                }
            }
            for d in dst.iter_mut() {
                *d *= norm;
            }
        }
    }
    let shape = if x.shape().len() >= 2 {
        vec![oh * ow, channels]
    } else {
        vec![oh * ow]
    };
    Tensor::new(shape, out)
}

pub(crate) fn block_average_pullback(g: &Tensor, height: usize, width: usize, factor: usize) -> Tensor {
    let channels = if g.shape().len() >= 2 { g.cols() } else { 1 };
    let ow = width / factor;
    let norm = 1.0 / (factor * factor) as f64;
    let mut dx = vec![0.0; height * width * channels];
    for y in 0..height {
        for x in 0..width {
            let src = &g.data()[((y / factor) * ow + x / factor) * channels..][..channels];
            let dst = &mut dx[(y * width + x) * channels..][..channels];
            for (d, s) in dst.iter_mut().zip(src) {
                *d = s * norm;
            }
        }
    }
    let shape = if g.shape().len() >= 2 {
        vec![height * width, channels]
    } else {
        vec![height * width]
    };
    Tensor::new(shape, dx).expect("pullback shape")
}
