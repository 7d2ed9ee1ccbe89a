use rand::Rng;

use super::kernels::{self, ConvGeom};
use super::{stable_sigmoid, Float, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Mode {
    Train,
    #[default]
    Eval,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Var,
        geom: ConvGeom,
    },
    Relu(Var),
    Sigmoid(Var),
    MaxPool {
        input: Var,
        argmax: Vec<usize>,
    },
    AdaptiveAvgPool {
        input: Var,
        grid: usize,
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Concat {
        a: Var,
        b: Var,
    },
    Dropout {
        input: Var,
        mask: Vec<T>,
    },
    Add(Var, Var),
    Reshape(Var),
    RepeatChannels {
        input: Var,
        times: usize,
    },
    Sum(Var),
    Mean(Var),
    /// Mean of a caller-evaluated per-element loss; `local_grad` holds the
    /// per-element derivative already divided by the element count.
    MeanLoss {
        input: Var,
        local_grad: Vec<T>,
    },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::MaxPool { .. } => "maxpool2d",
            Op::AdaptiveAvgPool { .. } => "adaptive_avg_pool_grid",
            Op::Linear { .. } => "linear",
            Op::Concat { .. } => "concat",
            Op::Dropout { .. } => "dropout",
            Op::Add(..) => "add",
            Op::Reshape(_) => "reshape",
            Op::RepeatChannels { .. } => "repeat_channels",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::MeanLoss { .. } => "mean_loss",
        }
    }
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Counts returned by [`Graph::backward`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BackwardReport {
    /// Nodes whose backward rule ran. Each node is visited at most once.
    pub visited: usize,
}

/// Define-by-run computation record.
///
/// Insertion order is a topological order. Gradients live on the node
/// tensors (`Tensor::grad`) after [`Graph::backward`]; every call to
/// `backward` first clears all gradients and then accumulates afresh, so
/// repeated calls are idempotent.
#[derive(Debug, Default)]
pub struct Graph<T: Float = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Float> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds a leaf. It is differentiated iff `tensor.requires_grad`.
    pub fn leaf(&mut self, mut tensor: Tensor<T>) -> Var {
        tensor.zero_grad();
        self.nodes.push(Node {
            value: tensor,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, mut tensor: Tensor<T>) -> Var {
        tensor.requires_grad = false;
        self.leaf(tensor)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last backward root with respect to `v`, if `v`
    /// participates in differentiation.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad()
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].value.requires_grad
    }

    fn push(&mut self, shape: &[usize], data: Vec<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "{} (element {pos} of output {shape:?})",
                op.name()
            )));
        }
        let mut value = Tensor::new(shape, data)?;
        value.requires_grad = inputs.iter().any(|&i| self.tracked(i));
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let geom = ConvGeom::new(
            self.shape(input),
            self.shape(kernel),
            self.shape(bias),
            stride,
            padding,
        )?;
        let out = kernels::conv2d_forward(
            &geom,
            self.value(input).data(),
            self.value(kernel).data(),
            self.value(bias).data(),
        );
        self.push(
            &geom.output_shape(),
            out,
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
            },
            &[input, kernel, bias],
        )
    }

    pub fn relu(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let out = x.data().iter().map(|&v| v.max(T::zero())).collect();
        let shape = x.shape().to_vec();
        self.push(&shape, out, Op::Relu(input), &[input])
    }

    pub fn sigmoid(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let out = x.data().iter().map(|&v| stable_sigmoid(v)).collect();
        let shape = x.shape().to_vec();
        self.push(&shape, out, Op::Sigmoid(input), &[input])
    }

    pub fn maxpool2d(&mut self, input: Var, window: usize, stride: usize) -> Result<Var> {
        let (shape, out, argmax) = kernels::maxpool2d_forward(
            self.shape(input),
            self.value(input).data(),
            window,
            stride,
        )?;
        self.push(&shape, out, Op::MaxPool { input, argmax }, &[input])
    }

    pub fn adaptive_avg_pool(&mut self, input: Var, grid: usize) -> Result<Var> {
        let (shape, out) =
            kernels::adaptive_avg_pool_forward(self.shape(input), self.value(input).data(), grid)?;
        self.push(&shape, out, Op::AdaptiveAvgPool { input, grid }, &[input])
    }

    /// Affine map `x·W + b` with x: N×D, W: D×M, b: M.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (n, d, m) = match (self.shape(input), self.shape(weight), self.shape(bias)) {
            (&[n, d], &[dw, m], &[mb]) if d == dw && m == mb => (n, d, m),
            (x, w, b) => {
                return Err(Error::shape(
                    "linear",
                    format!("incompatible shapes input {x:?}, weight {w:?}, bias {b:?}"),
                ))
            }
        };
        let out = kernels::linear_forward(
            n,
            d,
            m,
            self.value(input).data(),
            self.value(weight).data(),
            self.value(bias).data(),
        );
        self.push(
            &[n, m],
            out,
            Op::Linear {
                input,
                weight,
                bias,
            },
            &[input, weight, bias],
        )
    }

    /// Feature-axis concatenation of two N×D tensors.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, d1, d2) = match (self.shape(a), self.shape(b)) {
            (&[n, d1], &[nb, d2]) if n == nb => (n, d1, d2),
            (sa, sb) => {
                return Err(Error::shape(
                    "concat",
                    format!("leading dims differ or not 2-D: {sa:?} vs {sb:?}"),
                ))
            }
        };
        let (xa, xb) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(n * (d1 + d2));
        for i in 0..n {
            out.extend_from_slice(&xa[i * d1..(i + 1) * d1]);
            out.extend_from_slice(&xb[i * d2..(i + 1) * d2]);
        }
        self.push(&[n, d1 + d2], out, Op::Concat { a, b }, &[a, b])
    }

    /// Inverted dropout. In eval mode, or with `rate == 0`, returns `input`
    /// itself.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        input: Var,
        rate: f32,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(input);
        }
        let keep = T::of(1.0 / (1.0 - rate as f64));
        let x = self.value(input);
        let mask: Vec<T> = (0..x.numel())
            .map(|_| {
                if rng.random::<f32>() < rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let out = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let shape = x.shape().to_vec();
        self.push(&shape, out, Op::Dropout { input, mask }, &[input])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                "add",
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        self.push(&shape, out, Op::Add(a, b), &[a, b])
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != self.value(input).numel() {
            return Err(Error::shape(
                "reshape",
                format!("cannot view {:?} as {shape:?}", self.shape(input)),
            ));
        }
        let out = self.value(input).data().to_vec();
        self.push(shape, out, Op::Reshape(input), &[input])
    }

    /// Flattens everything after the batch axis.
    pub fn flatten(&mut self, input: Var) -> Result<Var> {
        let shape = self.shape(input);
        let n = *shape
            .first()
            .ok_or_else(|| Error::shape("flatten", "rank-0 input"))?;
        let rest = shape[1..].iter().product();
        self.reshape(input, &[n, rest])
    }

    /// Tiles an N×1×H×W tensor to N×times×H×W.
    pub fn repeat_channels(&mut self, input: Var, times: usize) -> Result<Var> {
        let (n, h, w) = match self.shape(input) {
            &[n, 1, h, w] => (n, h, w),
            s => {
                return Err(Error::shape(
                    "repeat_channels",
                    format!("expected single-channel NCHW input, got {s:?}"),
                ))
            }
        };
        let x = self.value(input).data();
        let mut out = Vec::with_capacity(n * times * h * w);
        for i in 0..n {
            for _ in 0..times {
                out.extend_from_slice(&x[i * h * w..(i + 1) * h * w]);
            }
        }
        self.push(
            &[n, times, h, w],
            out,
            Op::RepeatChannels { input, times },
            &[input],
        )
    }

    pub fn sum(&mut self, input: Var) -> Result<Var> {
        let s = self.value(input).sum();
        self.push(&[1], vec![s], Op::Sum(input), &[input])
    }

    pub fn mean(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        if x.numel() == 0 {
            return Err(Error::shape("mean", "empty input"));
        }
        let m = x.sum() / T::of(x.numel() as f64);
        self.push(&[1], vec![m], Op::Mean(input), &[input])
    }

    /// Scalar node whose value is the mean of `per_element` and whose
    /// derivative with respect to element `i` of `input` is
    /// `per_element_grad[i] / n`. Used to attach losses evaluated outside
    /// the graph.
    pub fn mean_loss(
        &mut self,
        input: Var,
        per_element: &[T],
        per_element_grad: &[T],
    ) -> Result<Var> {
        let n = self.value(input).numel();
        if per_element.len() != n || per_element_grad.len() != n || n == 0 {
            return Err(Error::shape(
                "mean_loss",
                format!(
                    "input has {n} elements, got {} values and {} derivatives",
                    per_element.len(),
                    per_element_grad.len()
                ),
            ));
        }
        let scale = T::of(n as f64);
        let value = per_element.iter().copied().sum::<T>() / scale;
        let local_grad = per_element_grad.iter().map(|&g| g / scale).collect();
        self.push(
            &[1],
            vec![value],
            Op::MeanLoss { input, local_grad },
            &[input],
        )
    }

    /// Reverse-mode sweep from a single-element `root`.
    ///
    /// All existing gradients are cleared first, then `d root / d root = 1`
    /// is propagated through every tracked node in reverse insertion order.
    pub fn backward(&mut self, root: Var) -> Result<BackwardReport> {
        let root_shape = self.shape(root).to_vec();
        if self.value(root).numel() != 1 {
            return Err(Error::NotScalar(root_shape));
        }
        for node in &mut self.nodes {
            node.value.zero_grad();
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(vec![T::one()]);
        let mut visited = 0;
        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].value.requires_grad {
                continue;
            }
            visited += 1;
            self.propagate(idx, &g, &mut grads)?;
            self.nodes[idx].value.set_grad(g)?;
        }
        Ok(BackwardReport { visited })
    }

    fn propagate(&self, idx: usize, g: &[T], grads: &mut [Option<Vec<T>>]) -> Result<()> {
        let node = &self.nodes[idx];
        let mut send = |v: Var, delta: Vec<T>| {
            if !self.tracked(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.iter_mut().zip(delta).for_each(|(a, d)| *a += d),
                slot @ None => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
            } => {
                let grads = kernels::conv2d_backward(
                    geom,
                    self.value(*input).data(),
                    self.value(*kernel).data(),
                    g,
                    self.tracked(*input),
                );
                if let Some(dx) = grads.input {
                    send(*input, dx);
                }
                send(*kernel, grads.kernel);
                send(*bias, grads.bias);
            }
            Op::Relu(x) => {
                let dx = self
                    .value(*x)
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&v, &d)| if v > T::zero() { d } else { T::zero() })
                    .collect();
                send(*x, dx);
            }
            Op::Sigmoid(x) => {
                let dx = node
                    .value
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&s, &d)| d * s * (T::one() - s))
                    .collect();
                send(*x, dx);
            }
            Op::MaxPool { input, argmax } => {
                let mut dx = vec![T::zero(); self.value(*input).numel()];
                for (&src, &d) in argmax.iter().zip(g) {
                    dx[src] += d;
                }
                send(*input, dx);
            }
            Op::AdaptiveAvgPool { input, grid } => {
                send(
                    *input,
                    kernels::adaptive_avg_pool_backward(self.shape(*input), g, *grid),
                );
            }
            Op::Linear {
                input,
                weight,
                bias,
            } => {
                let (n, d) = (self.shape(*input)[0], self.shape(*input)[1]);
                let m = self.shape(*weight)[1];
                let lg = kernels::linear_backward(
                    n,
                    d,
                    m,
                    self.value(*input).data(),
                    self.value(*weight).data(),
                    g,
                );
                send(*input, lg.input);
                send(*weight, lg.weight);
                send(*bias, lg.bias);
            }
            Op::Concat { a, b } => {
                let (n, d1) = (self.shape(*a)[0], self.shape(*a)[1]);
                let d2 = self.shape(*b)[1];
                let mut ga = Vec::with_capacity(n * d1);
                let mut gb = Vec::with_capacity(n * d2);
                for row in g.chunks(d1 + d2).take(n) {
                    ga.extend_from_slice(&row[..d1]);
                    gb.extend_from_slice(&row[d1..]);
                }
                send(*a, ga);
                send(*b, gb);
            }
            Op::Dropout { input, mask } => {
                send(*input, g.iter().zip(mask).map(|(&d, &m)| d * m).collect());
            }
            Op::Add(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.to_vec());
            }
            Op::Reshape(x) => send(*x, g.to_vec()),
            Op::RepeatChannels { input, times } => {
                let plane: usize = self.shape(*input)[2..].iter().product();
                let n = self.shape(*input)[0];
                let mut dx = vec![T::zero(); n * plane];
                for i in 0..n {
                    for t in 0..*times {
                        let src = &g[(i * times + t) * plane..(i * times + t + 1) * plane];
                        dx[i * plane..(i + 1) * plane]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(a, &b)| *a += b);
                    }
                }
                send(*input, dx);
            }
            Op::Sum(x) => send(*x, vec![g[0]; self.value(*x).numel()]),
            Op::Mean(x) => {
                let n = self.value(*x).numel();
                send(*x, vec![g[0] / T::of(n as f64); n]);
            }
            Op::MeanLoss { input, local_grad } => {
                send(*input, local_grad.iter().map(|&l| l * g[0]).collect());
            }
        }
        Ok(())
    }
}
