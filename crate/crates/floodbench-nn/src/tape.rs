//! Reverse-mode autodiff over a flat tape.
//!
//! A [`Tape`] records every operation as a node in creation order; parents
//! always precede children, so walking the tape backwards is a topological
//! order and gradient accumulation is bit-reproducible. Activations are
//! dense row-major `f64` buffers shaped `(channels, rows, cols)`; conv
//! kernels are `(out_ch, in_ch, kh, kw)`; transposed-conv kernels are
//! `(in_ch, out_ch, 2, 2)`; biases are `(channels)`.
//!
//! Every operation validates its output for non-finite values and backward
//! validates every gradient, so a NaN anywhere surfaces as an error naming
//! the operation instead of silently corrupting training.

use crate::error::NnError;

/// Handle to a tape node. Only valid for the tape that created it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        x: Var,
        k: Var,
        b: Var,
        pad: [usize; 4],
    },
    TConv2x2 {
        x: Var,
        k: Var,
        b: Var,
    },
    Pool2x2 {
        x: Var,
        argmax: Vec<usize>,
    },
    Upsample2x {
        x: Var,
    },
    Relu {
        x: Var,
    },
    Concat {
        xs: Vec<Var>,
    },
    Add {
        a: Var,
        b: Var,
    },
    Sub {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        factor: f64,
    },
    Shift {
        x: Var,
        dr: isize,
        dc: isize,
    },
    Slice {
        x: Var,
        start: usize,
    },
    Sum {
        x: Var,
    },
    WeightedMae {
        pred: Var,
        target: Vec<f64>,
        inside: Vec<bool>,
        weights: Vec<f64>,
        n_inside: usize,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::TConv2x2 { .. } => "transposed_conv2x2",
            Op::Pool2x2 { .. } => "pool2x2",
            Op::Upsample2x { .. } => "upsample_bilinear2x",
            Op::Relu { .. } => "relu",
            Op::Concat { .. } => "concat_channels",
            Op::Add { .. } => "add",
            Op::Sub { .. } => "sub",
            Op::Scale { .. } => "scale",
            Op::Shift { .. } => "shift",
            Op::Slice { .. } => "slice_channels",
            Op::Sum { .. } => "sum",
            Op::WeightedMae { .. } => "weighted_mae",
        }
    }
}

#[derive(Debug)]
struct Node {
    dims: Vec<usize>,
    values: Vec<f64>,
    needs_grad: bool,
    op: Op,
}

/// Dynamic computation graph; build one per training step.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Vec<f64>>,
    backward_done: bool,
}

fn check_finite(values: &[f64], op: &'static str, what: &'static str) -> Result<(), NnError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NnError::NonFinite { op, what })
    }
}

fn chw(dims: &[usize], op: &'static str) -> Result<(usize, usize, usize), NnError> {
    match dims {
        [c, h, w] => Ok((*c, *h, *w)),
        other => Err(NnError::Shape {
            op,
            detail: format!("expected (C,H,W) activation, got {other:?}"),
        }),
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, dims: Vec<usize>, values: Vec<f64>, needs_grad: bool, op: Op) -> Var {
        debug_assert_eq!(dims.iter().product::<usize>(), values.len());
        self.nodes.push(Node {
            dims,
            values,
            needs_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    /// Register an input or parameter tensor.
    pub fn leaf(
        &mut self,
        dims: &[usize],
        values: Vec<f64>,
        requires_grad: bool,
    ) -> Result<Var, NnError> {
        if dims.iter().product::<usize>() != values.len() {
            return Err(NnError::Shape {
                op: "leaf",
                detail: format!("{dims:?} does not hold {} values", values.len()),
            });
        }
        check_finite(&values, "leaf", "values")?;
        Ok(self.push(dims.to_vec(), values, requires_grad, Op::Leaf))
    }

    /// Constant leaf that never receives gradients.
    pub fn constant(&mut self, dims: &[usize], values: Vec<f64>) -> Result<Var, NnError> {
        self.leaf(dims, values, false)
    }

    pub fn dims(&self, v: Var) -> &[usize] {
        &self.node(v).dims
    }

    pub fn values(&self, v: Var) -> &[f64] {
        &self.node(v).values
    }

    /// Value of a scalar (single-element) node.
    pub fn scalar(&self, v: Var) -> Result<f64, NnError> {
        let n = self.node(v);
        if n.values.len() != 1 {
            return Err(NnError::Shape {
                op: "scalar",
                detail: format!("node has {} elements", n.values.len()),
            });
        }
        Ok(n.values[0])
    }

    /// Gradient of `v` after [`Tape::backward`]; `None` before backward or
    /// for nodes that do not require gradients.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads
            .get(v.0)
            .filter(|g| !g.is_empty())
            .map(|g| g.as_slice())
    }

    /// Clear gradients and allow another backward pass over this tape.
    pub fn clear_grads(&mut self) {
        self.grads.clear();
        self.backward_done = false;
    }

    // ------------------------------------------------------------------
    // Operations
    // ------------------------------------------------------------------

    /// Cross-correlation with per-side zero padding `[top, bottom, left,
    /// right]`. `x` is `(C,H,W)`, `k` is `(O,C,KH,KW)`, `b` is `(O)`.
    pub fn conv2d(&mut self, x: Var, k: Var, b: Var, pad: [usize; 4]) -> Result<Var, NnError> {
        const OP: &str = "conv2d";
        let (c_in, h, w) = chw(&self.node(x).dims, OP)?;
        let kd = &self.node(k).dims;
        let (o_ch, k_in, kh, kw) = match kd[..] {
            [o, i, a, b] => (o, i, a, b),
            _ => {
                return Err(NnError::Shape {
                    op: OP,
                    detail: format!("kernel dims {kd:?}, expected (O,I,KH,KW)"),
                })
            }
        };
        if k_in != c_in {
            return Err(NnError::Shape {
                op: OP,
                detail: format!("input has {c_in} channels, kernel expects {k_in}"),
            });
        }
        if self.node(b).dims != [o_ch] {
            return Err(NnError::Shape {
                op: OP,
                detail: format!("bias dims {:?}, expected ({o_ch})", self.node(b).dims),
            });
        }
        let [top, bottom, left, right] = pad;
        let oh = (h + top + bottom).checked_sub(kh - 1).filter(|&v| v > 0);
        let ow = (w + left + right).checked_sub(kw - 1).filter(|&v| v > 0);
        let (oh, ow) = match (oh, ow) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(NnError::Shape {
                    op: OP,
                    detail: format!("kernel {kh}x{kw} larger than padded input {h}x{w}"),
                })
            }
        };

        let xv = &self.node(x).values;
        let kv = &self.node(k).values;
        let bv = &self.node(b).values;
        let mut out = vec![0.0f64; o_ch * oh * ow];
        for o in 0..o_ch {
            let bias = bv[o];
            for oi in 0..oh {
                for oj in 0..ow {
                    let mut acc = bias;
                    for ci in 0..c_in {
                        let x_base = ci * h * w;
                        let k_base = (o * c_in + ci) * kh * kw;
                        for dkh in 0..kh {
                            let xi = oi as isize + dkh as isize - top as isize;
                            if xi < 0 || xi >= h as isize {
                                continue;
                            }
                            let x_row = x_base + xi as usize * w;
                            let k_row = k_base + dkh * kw;
                            for dkw in 0..kw {
                                let xj = oj as isize + dkw as isize - left as isize;
                                if xj < 0 || xj >= w as isize {
                                    continue;
                                }
                                acc += xv[x_row + xj as usize] * kv[k_row + dkw];
                            }
                        }
                    }
                    out[(o * oh + oi) * ow + oj] = acc;
                }
            }
        }
        check_finite(&out, OP, "output")?;
        let needs = self.node(x).needs_grad || self.node(k).needs_grad || self.node(b).needs_grad;
        Ok(self.push(vec![o_ch, oh, ow], out, needs, Op::Conv2d { x, k, b, pad }))
    }

    /// 2x2 max pooling with stride 2; spatial dims must be even.
    pub fn pool2x2(&mut self, x: Var) -> Result<Var, NnError> {
        const OP: &str = "pool2x2";
        let (c, h, w) = chw(&self.node(x).dims, OP)?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(NnError::Shape {
                op: OP,
                detail: format!("odd spatial dims {h}x{w}"),
            });
        }
        let (oh, ow) = (h / 2, w / 2);
        let xv = &self.node(x).values;
        let mut out = vec![0.0f64; c * oh * ow];
        let mut argmax = vec![0usize; c * oh * ow];
        for ch in 0..c {
            for oi in 0..oh {
                for oj in 0..ow {
                    let mut best_idx = (ch * h + 2 * oi) * w + 2 * oj;
                    let mut best = xv[best_idx];
                    // Fixed scan order; ties keep the first cell, so the
                    // subgradient choice is deterministic.
                    for (di, dj) in [(0usize, 1usize), (1, 0), (1, 1)] {
                        let idx = (ch * h + 2 * oi + di) * w + 2 * oj + dj;
                        if xv[idx] > best {
                            best = xv[idx];
                            best_idx = idx;
                        }
                    }
                    let o_idx = (ch * oh + oi) * ow + oj;
                    out[o_idx] = best;
                    argmax[o_idx] = best_idx;
                }
            }
        }
        check_finite(&out, OP, "output")?;
        let needs = self.node(x).needs_grad;
        Ok(self.push(vec![c, oh, ow], out, needs, Op::Pool2x2 { x, argmax }))
    }

    /// Transposed convolution with a 2x2 kernel and stride 2, doubling the
    /// spatial dims. `x` is `(I,H,W)`, `k` is `(I,O,2,2)`, `b` is `(O)`.
    pub fn transposed_conv2x2(&mut self, x: Var, k: Var, b: Var) -> Result<Var, NnError> {
        const OP: &str = "transposed_conv2x2";
        let (c_in, h, w) = chw(&self.node(x).dims, OP)?;
        let kd = &self.node(k).dims;
        let (k_in, o_ch) = match kd[..] {
            [i, o, 2, 2] => (i, o),
            _ => {
                return Err(NnError::Shape {
                    op: OP,
                    detail: format!("kernel dims {kd:?}, expected (I,O,2,2)"),
                })
            }
        };
        if k_in != c_in {
            return Err(NnError::Shape {
                op: OP,
                detail: format!("input has {c_in} channels, kernel expects {k_in}"),
            });
        }
        if self.node(b).dims != [o_ch] {
            return Err(NnError::Shape {
                op: OP,
                detail: format!("bias dims {:?}, expected ({o_ch})", self.node(b).dims),
            });
        }
        let (oh, ow) = (2 * h, 2 * w);
        let xv = &self.node(x).values;
        let kv = &self.node(k).values;
        let bv = &self.node(b).values;
        let mut out = vec![0.0f64; o_ch * oh * ow];
        for o in 0..o_ch {
            let base = o * oh * ow;
            for v in &mut out[base..base + oh * ow] {
                *v = bv[o];
            }
        }
        for ci in 0..c_in {
            for i in 0..h {
                for j in 0..w {
                    let xval = xv[(ci * h + i) * w + j];
                    for o in 0..o_ch {
                        let k_base = ((ci * o_ch + o) * 2) * 2;
                        for di in 0..2 {
                            for dj in 0..2 {
                                out[(o * oh + 2 * i + di) * ow + 2 * j + dj] +=
                                    xval * kv[k_base + di * 2 + dj];
                            }
                        }
                    }
                }
            }
        }
        check_finite(&out, OP, "output")?;
        let needs = self.node(x).needs_grad || self.node(k).needs_grad || self.node(b).needs_grad;
        Ok(self.push(vec![o_ch, oh, ow], out, needs, Op::TConv2x2 { x, k, b }))
    }

    /// Bilinear upsampling by 2 (half-pixel centers, borders clamped).
    pub fn upsample_bilinear2x(&mut self, x: Var) -> Result<Var, NnError> {
        const OP: &str = "upsample_bilinear2x";
        let (c, h, w) = chw(&self.node(x).dims, OP)?;
        let (oh, ow) = (2 * h, 2 * w);
        let xv = &self.node(x).values;
        let mut out = vec![0.0f64; c * oh * ow];
        for ch in 0..c {
            for oi in 0..oh {
                let (i0, i1, wi) = Self::bilinear_axis(oi, h);
                for oj in 0..ow {
                    let (j0, j1, wj) = Self::bilinear_axis(oj, w);
                    let v00 = xv[(ch * h + i0) * w + j0];
                    let v01 = xv[(ch * h + i0) * w + j1];
                    let v10 = xv[(ch * h + i1) * w + j0];
                    let v11 = xv[(ch * h + i1) * w + j1];
                    out[(ch * oh + oi) * ow + oj] = (1.0 - wi) * ((1.0 - wj) * v00 + wj * v01)
                        + wi * ((1.0 - wj) * v10 + wj * v11);
                }
            }
        }
        check_finite(&out, OP, "output")?;
        let needs = self.node(x).needs_grad;
        Ok(self.push(vec![c, oh, ow], out, needs, Op::Upsample2x { x }))
    }

    /// For output index `o` along an axis of source length `n`: the two
    /// source indices and the interpolation weight of the second one.
    fn bilinear_axis(o: usize, n: usize) -> (usize, usize, f64) {
        let src = (o as f64 + 0.5) / 2.0 - 0.5;
        let floor = src.floor();
        let frac = src - floor;
        let i0 = floor.max(0.0).min((n - 1) as f64) as usize;
        let i1 = (floor + 1.0).max(0.0).min((n - 1) as f64) as usize;
        (i0, i1, frac)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, NnError> {
        let values: Vec<f64> = self.node(x).values.iter().map(|&v| v.max(0.0)).collect();
        check_finite(&values, "relu", "output")?;
        let needs = self.node(x).needs_grad;
        let dims = self.node(x).dims.clone();
        Ok(self.push(dims, values, needs, Op::Relu { x }))
    }

    /// Multiply every element by a fixed scalar. The factor is a constant of
    /// the graph, not a differentiable input.
    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var, NnError> {
        if !factor.is_finite() {
            return Err(NnError::InvalidArg(format!(
                "scale: factor {factor} is not finite"
            )));
        }
        let values: Vec<f64> = self.node(x).values.iter().map(|&v| v * factor).collect();
        check_finite(&values, "scale", "output")?;
        let needs = self.node(x).needs_grad;
        let dims = self.node(x).dims.clone();
        Ok(self.push(dims, values, needs, Op::Scale { x, factor }))
    }

    /// Concatenate along the channel axis; spatial dims must agree.
    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var, NnError> {
        const OP: &str = "concat_channels";
        if xs.is_empty() {
            return Err(NnError::InvalidArg("concat of zero tensors".into()));
        }
        let (_, h, w) = chw(&self.node(xs[0]).dims, OP)?;
        let mut total_c = 0;
        for &v in xs {
            let (c, vh, vw) = chw(&self.node(v).dims, OP)?;
            if (vh, vw) != (h, w) {
                return Err(NnError::Shape {
                    op: OP,
                    detail: format!("spatial dims {vh}x{vw} vs {h}x{w}"),
                });
            }
            total_c += c;
        }
        let mut values = Vec::with_capacity(total_c * h * w);
        for &v in xs {
            values.extend_from_slice(&self.node(v).values);
        }
        let needs = xs.iter().any(|&v| self.node(v).needs_grad);
        Ok(self.push(
            vec![total_c, h, w],
            values,
            needs,
            Op::Concat { xs: xs.to_vec() },
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.elementwise(a, b, "add", |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.elementwise(a, b, "sub", |x, y| x - y, Op::Sub { a, b })
    }

    fn elementwise(
        &mut self,
        a: Var,
        b: Var,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
        node_op: Op,
    ) -> Result<Var, NnError> {
        if self.node(a).dims != self.node(b).dims {
            return Err(NnError::Shape {
                op,
                detail: format!("{:?} vs {:?}", self.node(a).dims, self.node(b).dims),
            });
        }
        let values: Vec<f64> = self
            .node(a)
            .values
            .iter()
            .zip(&self.node(b).values)
            .map(|(&x, &y)| f(x, y))
            .collect();
        check_finite(&values, op, "output")?;
        let needs = self.node(a).needs_grad || self.node(b).needs_grad;
        let dims = self.node(a).dims.clone();
        Ok(self.push(dims, values, needs, node_op))
    }

    /// Shift content by (dr, dc) cells, filling vacated cells with zero:
    /// out[i][j] = x[i−dr][j−dc].
    pub fn shift(&mut self, x: Var, dr: isize, dc: isize) -> Result<Var, NnError> {
        const OP: &str = "shift";
        let (c, h, w) = chw(&self.node(x).dims, OP)?;
        let xv = &self.node(x).values;
        let mut values = vec![0.0f64; c * h * w];
        for ch in 0..c {
            for i in 0..h {
                let si = i as isize - dr;
                if si < 0 || si >= h as isize {
                    continue;
                }
                for j in 0..w {
                    let sj = j as isize - dc;
                    if sj < 0 || sj >= w as isize {
                        continue;
                    }
                    values[(ch * h + i) * w + j] = xv[(ch * h + si as usize) * w + sj as usize];
                }
            }
        }
        let needs = self.node(x).needs_grad;
        Ok(self.push(vec![c, h, w], values, needs, Op::Shift { x, dr, dc }))
    }

    /// Contiguous channel slice `[start, start+len)` of a (C,H,W) activation.
    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NnError> {
        const OP: &str = "slice_channels";
        let (c, h, w) = chw(&self.node(x).dims, OP)?;
        if len == 0 || start + len > c {
            return Err(NnError::Shape {
                op: OP,
                detail: format!("slice [{start}, {}) out of {c} channels", start + len),
            });
        }
        let hw = h * w;
        let values = self.node(x).values[start * hw..(start + len) * hw].to_vec();
        let needs = self.node(x).needs_grad;
        Ok(self.push(vec![len, h, w], values, needs, Op::Slice { x, start }))
    }

    /// Sum of all elements, as a scalar node.
    pub fn sum(&mut self, x: Var) -> Result<Var, NnError> {
        let total: f64 = self.node(x).values.iter().sum();
        if !total.is_finite() {
            return Err(NnError::NonFinite {
                op: "sum",
                what: "output",
            });
        }
        let needs = self.node(x).needs_grad;
        Ok(self.push(vec![1], vec![total], needs, Op::Sum { x }))
    }

    /// Mean absolute error over inside cells, with the error of cells whose
    /// |target| exceeds `threshold` multiplied by `factor`. Normalized by
    /// the inside-cell count, not the weight sum.
    pub fn weighted_mae(
        &mut self,
        pred: Var,
        target: &[f64],
        inside: &[bool],
        threshold: f64,
        factor: f64,
    ) -> Result<Var, NnError> {
        const OP: &str = "weighted_mae";
        let n = self.node(pred).values.len();
        if target.len() != n || inside.len() != n {
            return Err(NnError::Shape {
                op: OP,
                detail: format!(
                    "pred has {n} cells, target {} and mask {}",
                    target.len(),
                    inside.len()
                ),
            });
        }
        let n_inside = inside.iter().filter(|&&b| b).count();
        if n_inside == 0 {
            return Err(NnError::InvalidArg(
                "weighted_mae over an empty mask".into(),
            ));
        }
        let weights: Vec<f64> = target
            .iter()
            .map(|&t| if t.abs() > threshold { factor } else { 1.0 })
            .collect();
        let pv = &self.node(pred).values;
        let mut acc = 0.0f64;
        for i in 0..n {
            if inside[i] {
                acc += weights[i] * (pv[i] - target[i]).abs();
            }
        }
        let loss = acc / n_inside as f64;
        if !loss.is_finite() {
            return Err(NnError::NonFinite {
                op: OP,
                what: "output",
            });
        }
        let needs = self.node(pred).needs_grad;
        Ok(self.push(
            vec![1],
            vec![loss],
            needs,
            Op::WeightedMae {
                pred,
                target: target.to_vec(),
                inside: inside.to_vec(),
                weights,
                n_inside,
            },
        ))
    }

    // ------------------------------------------------------------------
    // Backward
    // ------------------------------------------------------------------

    /// Reverse-accumulate gradients from a scalar loss into every
    /// gradient-requiring node. Errors if called twice without
    /// [`Tape::clear_grads`].
    pub fn backward(&mut self, loss: Var) -> Result<(), NnError> {
        if self.backward_done {
            return Err(NnError::State(
                "backward already ran on this tape; call clear_grads() to rerun".into(),
            ));
        }
        if self.node(loss).values.len() != 1 {
            return Err(NnError::Shape {
                op: "backward",
                detail: "loss must be scalar".into(),
            });
        }
        self.backward_done = true;
        self.grads = self
            .nodes
            .iter()
            .map(|n| {
                if n.needs_grad {
                    vec![0.0f64; n.values.len()]
                } else {
                    Vec::new()
                }
            })
            .collect();
        if self.grads[loss.0].is_empty() {
            // Loss does not depend on any gradient-requiring leaf; nothing
            // to propagate.
            return Ok(());
        }
        self.grads[loss.0][0] = 1.0;

        for i in (0..=loss.0).rev() {
            if self.grads[i].is_empty() {
                continue;
            }
            // A node's gradient is complete once the reverse sweep reaches
            // it; validate it before fanning out.
            check_finite(&self.grads[i], self.nodes[i].op.name(), "grad")?;
            let gout = std::mem::take(&mut self.grads[i]);
            self.propagate(i, &gout);
            self.grads[i] = gout;
        }
        Ok(())
    }

    fn propagate(&mut self, idx: usize, gout: &[f64]) {
        // Split borrows: values are read-only, grads are written.
        let nodes = std::mem::take(&mut self.nodes);
        let node = &nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, k, b, pad } => {
                let (c_in, h, w) = match nodes[x.0].dims[..] {
                    [c, a, b] => (c, a, b),
                    _ => unreachable!("validated in forward"),
                };
                let (o_ch, _, kh, kw) = match nodes[k.0].dims[..] {
                    [o, i, a, b] => (o, i, a, b),
                    _ => unreachable!("validated in forward"),
                };
                let (oh, ow) = (node.dims[1], node.dims[2]);
                let [top, _, left, _] = *pad;
                let xv = &nodes[x.0].values;
                let kv = &nodes[k.0].values;
                let want_x = !self.grads[x.0].is_empty();
                let want_k = !self.grads[k.0].is_empty();
                let want_b = !self.grads[b.0].is_empty();
                for o in 0..o_ch {
                    for oi in 0..oh {
                        for oj in 0..ow {
                            let g = gout[(o * oh + oi) * ow + oj];
                            if g == 0.0 {
                                continue;
                            }
                            if want_b {
                                self.grads[b.0][o] += g;
                            }
                            if !(want_x || want_k) {
                                continue;
                            }
                            for ci in 0..c_in {
                                let x_base = ci * h * w;
                                let k_base = (o * c_in + ci) * kh * kw;
                                for dkh in 0..kh {
                                    let xi = oi as isize + dkh as isize - top as isize;
                                    if xi < 0 || xi >= h as isize {
                                        continue;
                                    }
                                    let x_row = x_base + xi as usize * w;
                                    let k_row = k_base + dkh * kw;
                                    for dkw in 0..kw {
                                        let xj = oj as isize + dkw as isize - left as isize;
                                        if xj < 0 || xj >= w as isize {
                                            continue;
                                        }
                                        if want_x {
                                            self.grads[x.0][x_row + xj as usize] +=
                                                g * kv[k_row + dkw];
                                        }
                                        if want_k {
                                            self.grads[k.0][k_row + dkw] +=
                                                g * xv[x_row + xj as usize];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Op::TConv2x2 { x, k, b } => {
                let (c_in, h, w) = match nodes[x.0].dims[..] {
                    [c, a, b] => (c, a, b),
                    _ => unreachable!("validated in forward"),
                };
                let o_ch = nodes[k.0].dims[1];
                let (oh, ow) = (node.dims[1], node.dims[2]);
                let xv = &nodes[x.0].values;
                let kv = &nodes[k.0].values;
                let want_x = !self.grads[x.0].is_empty();
                let want_k = !self.grads[k.0].is_empty();
                let want_b = !self.grads[b.0].is_empty();
                if want_b {
                    for o in 0..o_ch {
                        let mut acc = 0.0;
                        for v in &gout[o * oh * ow..(o + 1) * oh * ow] {
                            acc += v;
                        }
                        self.grads[b.0][o] += acc;
                    }
                }
                if want_x || want_k {
                    for ci in 0..c_in {
                        for i in 0..h {
                            for j in 0..w {
                                let xval = xv[(ci * h + i) * w + j];
                                let mut dx = 0.0;
                                for o in 0..o_ch {
                                    let k_base = ((ci * o_ch + o) * 2) * 2;
                                    for di in 0..2 {
                                        for dj in 0..2 {
                                            let g = gout
                                                [(o * oh + 2 * i + di) * ow + 2 * j + dj];
                                            dx += g * kv[k_base + di * 2 + dj];
                                            if want_k {
                                                self.grads[k.0][k_base + di * 2 + dj] +=
                                                    g * xval;
                                            }
                                        }
                                    }
                                }
                                if want_x {
                                    self.grads[x.0][(ci * h + i) * w + j] += dx;
                                }
                            }
                        }
                    }
                }
            }
            Op::Pool2x2 { x, argmax } => {
                if self.needs_after_take(x) {
                    for (o_idx, &src) in argmax.iter().enumerate() {
                        self.grads[x.0][src] += gout[o_idx];
                    }
                }
            }
            Op::Upsample2x { x } => {
                if self.needs_after_take(x) {
                    let (c, h, w) = match nodes[x.0].dims[..] {
                        [c, a, b] => (c, a, b),
                        _ => unreachable!("validated in forward"),
                    };
                    let (oh, ow) = (node.dims[1], node.dims[2]);
                    for ch in 0..c {
                        for oi in 0..oh {
                            let (i0, i1, wi) = Tape::bilinear_axis(oi, h);
                            for oj in 0..ow {
                                let (j0, j1, wj) = Tape::bilinear_axis(oj, w);
                                let g = gout[(ch * oh + oi) * ow + oj];
                                if g == 0.0 {
                                    continue;
                                }
                                self.grads[x.0][(ch * h + i0) * w + j0] +=
                                    g * (1.0 - wi) * (1.0 - wj);
                                self.grads[x.0][(ch * h + i0) * w + j1] += g * (1.0 - wi) * wj;
                                self.grads[x.0][(ch * h + i1) * w + j0] += g * wi * (1.0 - wj);
                                self.grads[x.0][(ch * h + i1) * w + j1] += g * wi * wj;
                            }
                        }
                    }
                }
            }
            Op::Relu { x } => {
                if self.needs_after_take(x) {
                    let xv = &nodes[x.0].values;
                    for (i, &g) in gout.iter().enumerate() {
                        if xv[i] > 0.0 {
                            self.grads[x.0][i] += g;
                        }
                    }
                }
            }
            Op::Scale { x, factor } => {
                if self.needs_after_take(x) {
                    for (i, &g) in gout.iter().enumerate() {
                        self.grads[x.0][i] += g * factor;
                    }
                }
            }
            Op::Concat { xs } => {
                let mut offset = 0;
                for &part in xs {
                    let len = nodes[part.0].values.len();
                    if !self.grads[part.0].is_empty() {
                        for i in 0..len {
                            self.grads[part.0][i] += gout[offset + i];
                        }
                    }
                    offset += len;
                }
            }
            Op::Add { a, b } => {
                if !self.grads[a.0].is_empty() {
                    for (i, &g) in gout.iter().enumerate() {
                        self.grads[a.0][i] += g;
                    }
                }
                if !self.grads[b.0].is_empty() {
                    for (i, &g) in gout.iter().enumerate() {
                        self.grads[b.0][i] += g;
                    }
                }
            }
            Op::Sub { a, b } => {
                if !self.grads[a.0].is_empty() {
                    for (i, &g) in gout.iter().enumerate() {
                        self.grads[a.0][i] += g;
                    }
                }
                if !self.grads[b.0].is_empty() {
                    for (i, &g) in gout.iter().enumerate() {
                        self.grads[b.0][i] -= g;
                    }
                }
            }
            Op::Shift { x, dr, dc } => {
                if self.needs_after_take(x) {
                    let (c, h, w) = match nodes[x.0].dims[..] {
                        [c, a, b] => (c, a, b),
                        _ => unreachable!("validated in forward"),
                    };
                    for ch in 0..c {
                        for i in 0..h {
                            let si = i as isize - dr;
                            if si < 0 || si >= h as isize {
                                continue;
                            }
                            for j in 0..w {
                                let sj = j as isize - dc;
                                if sj < 0 || sj >= w as isize {
                                    continue;
                                }
                                self.grads[x.0][(ch * h + si as usize) * w + sj as usize] +=
                                    gout[(ch * h + i) * w + j];
                            }
                        }
                    }
                }
            }
            Op::Slice { x, start } => {
                if self.needs_after_take(x) {
                    let hw = match nodes[x.0].dims[..] {
                        [_, h, w] => h * w,
                        _ => unreachable!("validated in forward"),
                    };
                    let base = start * hw;
                    for (i, g) in gout.iter().enumerate() {
                        self.grads[x.0][base + i] += g;
                    }
                }
            }
            Op::Sum { x } => {
                if self.needs_after_take(x) {
                    let g = gout[0];
                    for v in self.grads[x.0].iter_mut() {
                        *v += g;
                    }
                }
            }
            Op::WeightedMae {
                pred,
                target,
                inside,
                weights,
                n_inside,
            } => {
                if self.needs_after_take(pred) {
                    let g = gout[0] / *n_inside as f64;
                    let pv = &nodes[pred.0].values;
                    for i in 0..pv.len() {
                        if inside[i] {
                            let e = pv[i] - target[i];
                            // Subgradient 0 at the kink e == 0.
                            let s = if e > 0.0 {
                                1.0
                            } else if e < 0.0 {
                                -1.0
                            } else {
                                0.0
                            };
                            self.grads[pred.0][i] += g * weights[i] * s;
                        }
                    }
                }
            }
        }
        self.nodes = nodes;
    }

    /// `needs` for use inside `propagate`, where `self.nodes` is taken.
    fn needs_after_take(&self, v: &Var) -> bool {
        !self.grads[v.0].is_empty()
    }
}
