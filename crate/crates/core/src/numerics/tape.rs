//! Reverse-mode differentiation over an explicit operation tape.
//!
//! Every operation applied through a [`Tape`] computes its value eagerly with
//! the same [`Tensor`] kernels used for plain evaluation and appends a node
//! describing how to push gradients back to its inputs. [`Tape::grad`] walks
//! the nodes in exact reverse order of recording.

use std::cell::RefCell;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Transpose(usize),
    AddRow(usize, usize),
    Add(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddConst(usize),
    MulConst(usize, Tensor),
    Relu(usize),
    Tanh(usize),
    Normalize(usize),
    SumAll(usize),
    LogSoftmaxRows(usize),
    MaskedRowLogSumExp(usize, Tensor),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var(nodes.len() - 1)
    }

    fn with<R>(&self, v: Var, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.nodes.borrow()[v.0].value)
    }

    fn with2<R>(&self, a: Var, b: Var, f: impl FnOnce(&Tensor, &Tensor) -> R) -> R {
        let nodes = self.nodes.borrow();
        f(&nodes[a.0].value, &nodes[b.0].value)
    }

    /// Records an input (parameter, data batch, constant).
    pub fn leaf(&self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> Tensor {
        self.with(v, Tensor::clone)
    }

    pub fn scalar_value(&self, v: Var) -> Result<f64> {
        self.with(v, Tensor::item)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.with(v, |t| t.shape().to_vec())
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let value = self.with2(a, b, Tensor::matmul)?;
        Ok(self.push(value, Op::MatMul(a.0, b.0)))
    }

    pub fn transpose(&self, a: Var) -> Result<Var> {
        let value = self.with(a, Tensor::transpose)?;
        Ok(self.push(value, Op::Transpose(a.0)))
    }

    pub fn add_row(&self, a: Var, bias: Var) -> Result<Var> {
        let value = self.with2(a, bias, Tensor::add_row)?;
        Ok(self.push(value, Op::AddRow(a.0, bias.0)))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        let value = self.with2(a, b, Tensor::add)?;
        Ok(self.push(value, Op::Add(a.0, b.0)))
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        let value = self.with2(a, b, Tensor::mul)?;
        Ok(self.push(value, Op::Mul(a.0, b.0)))
    }

    pub fn scale(&self, a: Var, k: f64) -> Result<Var> {
        let value = self.with(a, |t| t.scale(k))?;
        Ok(self.push(value, Op::Scale(a.0, k)))
    }

    /// Adds a constant of the same shape; the constant receives no gradient.
    pub fn add_const(&self, a: Var, c: &Tensor) -> Result<Var> {
        let value = self.with(a, |t| t.add(c))?;
        Ok(self.push(value, Op::AddConst(a.0)))
    }

    /// Elementwise product with a constant of the same shape.
    pub fn mul_const(&self, a: Var, c: Tensor) -> Result<Var> {
        let value = self.with(a, |t| t.mul(&c))?;
        Ok(self.push(value, Op::MulConst(a.0, c)))
    }

    pub fn relu(&self, a: Var) -> Var {
        let value = self.with(a, Tensor::relu);
        self.push(value, Op::Relu(a.0))
    }

    pub fn tanh(&self, a: Var) -> Var {
        let value = self.with(a, Tensor::tanh);
        self.push(value, Op::Tanh(a.0))
    }

    /// Row-wise L2 normalization (whole vector for rank 1).
    pub fn l2_normalize(&self, a: Var) -> Result<Var> {
        let value = self.with(a, Tensor::l2_normalize)?;
        Ok(self.push(value, Op::Normalize(a.0)))
    }

    pub fn sum(&self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.with(a, Tensor::sum))?;
        Ok(self.push(value, Op::SumAll(a.0)))
    }

    pub fn log_softmax_rows(&self, a: Var) -> Result<Var> {
        let value = self.with(a, Tensor::log_softmax_rows)?;
        Ok(self.push(value, Op::LogSoftmaxRows(a.0)))
    }

    /// For each row `i`, `log Σ_{j: mask[i,j] = 1} exp(a[i,j])`, or 0 when the
    /// row mask is empty. Output has shape `[rows]`.
    pub fn masked_row_logsumexp(&self, a: Var, mask: Tensor) -> Result<Var> {
        let value = self.with(a, |t| -> Result<Tensor> {
            if t.shape() != mask.shape() || t.shape().len() != 2 {
                return Err(Error::Dimension {
                    op: "masked_row_logsumexp",
                    left: t.shape().to_vec(),
                    right: mask.shape().to_vec(),
                });
            }
            let (m, n) = t.dims2();
            let out = (0..m)
                .map(|i| {
                    let row = t.row(i);
                    let mrow = mask.row(i);
                    let max = row
                        .iter()
                        .zip(mrow)
                        .filter(|(_, &k)| k != 0.0)
                        .map(|(&v, _)| v)
                        .fold(f64::NEG_INFINITY, f64::max);
                    if max == f64::NEG_INFINITY {
                        return 0.0;
                    }
                    let s: f64 = (0..n).filter(|&j| mrow[j] != 0.0).map(|j| (row[j] - max).exp()).sum();
                    max + s.ln()
                })
                .collect();
            Tensor::vector(out)
        })?;
        Ok(self.push(value, Op::MaskedRowLogSumExp(a.0, mask)))
    }

    /// Gradients of the scalar `output` with respect to each of `inputs`.
    ///
    /// Inputs that do not participate in `output` receive an exact zero tensor.
    pub fn grad(&self, output: Var, inputs: &[Var]) -> Result<Vec<Tensor>> {
        let nodes = self.nodes.borrow();
        let out_node = &nodes[output.0];
        if !out_node.value.is_scalar() {
            return Err(Error::Contract(format!(
                "gradient requires a scalar output, found shape {:?}",
                out_node.value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(vec![1.0]);

        fn acc(grads: &mut [Option<Vec<f64>>], idx: usize, g: &[f64]) {
            match &mut grads[idx] {
                Some(existing) => existing.iter_mut().zip(g).for_each(|(e, v)| *e += v),
                slot @ None => *slot = Some(g.to_vec()),
            }
        }

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &nodes[idx];
            let val = |i: usize| &nodes[i].value;
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (m, n) = node.value.dims2();
                    let gt = Tensor::from_parts_unchecked(vec![m, n], g.clone());
                    let ga = gt.matmul(&val(*b).transpose()?)?;
                    let gb = val(*a).transpose()?.matmul(&gt)?;
                    acc(&mut grads, *a, ga.data());
                    acc(&mut grads, *b, gb.data());
                }
                Op::Transpose(a) => {
                    let (m, n) = node.value.dims2();
                    let gt = Tensor::from_parts_unchecked(vec![m, n], g.clone()).transpose()?;
                    acc(&mut grads, *a, gt.data());
                }
                Op::AddRow(a, bias) => {
                    let n = node.value.cols();
                    let mut gb = vec![0.0; n];
                    for row in g.chunks(n) {
                        gb.iter_mut().zip(row).for_each(|(s, v)| *s += v);
                    }
                    acc(&mut grads, *a, &g);
                    acc(&mut grads, *bias, &gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, &g);
                    acc(&mut grads, *b, &g);
                }
                Op::Mul(a, b) => {
                    let ga: Vec<f64> = g.iter().zip(val(*b).data()).map(|(g, v)| g * v).collect();
                    let gb: Vec<f64> = g.iter().zip(val(*a).data()).map(|(g, v)| g * v).collect();
                    acc(&mut grads, *a, &ga);
                    acc(&mut grads, *b, &gb);
                }
                Op::Scale(a, k) => {
                    let ga: Vec<f64> = g.iter().map(|v| v * k).collect();
                    acc(&mut grads, *a, &ga);
                }
                Op::AddConst(a) => acc(&mut grads, *a, &g),
                Op::MulConst(a, c) => {
                    let ga: Vec<f64> = g.iter().zip(c.data()).map(|(g, v)| g * v).collect();
                    acc(&mut grads, *a, &ga);
                }
                Op::Relu(a) => {
                    let ga: Vec<f64> = g
                        .iter()
                        .zip(val(*a).data())
                        .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                        .collect();
                    acc(&mut grads, *a, &ga);
                }
                Op::Tanh(a) => {
                    let ga: Vec<f64> = g.iter().zip(node.value.data()).map(|(g, y)| g * (1.0 - y * y)).collect();
                    acc(&mut grads, *a, &ga);
                }
                Op::Normalize(a) => {
                    let x = val(*a);
                    let n = node.value.cols();
                    let mut ga = vec![0.0; g.len()];
                    for ((grow, yrow), (xrow, out)) in g
                        .chunks(n)
                        .zip(node.value.data().chunks(n))
                        .zip(x.data().chunks(n).zip(ga.chunks_mut(n)))
                    {
                        let norm = xrow.iter().map(|v| v * v).sum::<f64>().sqrt();
                        let dot: f64 = grow.iter().zip(yrow).map(|(g, y)| g * y).sum();
                        for ((o, gv), yv) in out.iter_mut().zip(grow).zip(yrow) {
                            *o = (gv - yv * dot) / norm;
                        }
                    }
                    acc(&mut grads, *a, &ga);
                }
                Op::SumAll(a) => {
                    let ga = vec![g[0]; val(*a).len()];
                    acc(&mut grads, *a, &ga);
                }
                Op::LogSoftmaxRows(a) => {
                    let n = node.value.cols();
                    let mut ga = vec![0.0; g.len()];
                    for ((grow, yrow), out) in g.chunks(n).zip(node.value.data().chunks(n)).zip(ga.chunks_mut(n)) {
                        let gsum: f64 = grow.iter().sum();
                        for ((o, gv), yv) in out.iter_mut().zip(grow).zip(yrow) {
                            *o = gv - yv.exp() * gsum;
                        }
                    }
                    acc(&mut grads, *a, &ga);
                }
                Op::MaskedRowLogSumExp(a, mask) => {
                    let x = val(*a);
                    let n = x.cols();
                    let mut ga = vec![0.0; x.len()];
                    for (i, out) in ga.chunks_mut(n).enumerate() {
                        let lse = node.value.data()[i];
                        for (j, o) in out.iter_mut().enumerate() {
                            if mask.get(i, j) != 0.0 {
                                *o = g[i] * (x.get(i, j) - lse).exp();
                            }
                        }
                    }
                    acc(&mut grads, *a, &ga);
                }
            }
        }

        inputs
            .iter()
            .map(|v| {
                let shape = nodes[v.0].value.shape().to_vec();
                let data = grads
                    .get(v.0)
                    .and_then(Option::clone)
                    .unwrap_or_else(|| vec![0.0; shape.iter().product()]);
                if data.iter().all(|x| x.is_finite()) {
                    Ok(Tensor::from_parts_unchecked(shape, data))
                } else {
                    Err(Error::NonFinite { op: "grad" })
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_derivative() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0).unwrap());
        let y = tape.mul(x, x).unwrap();
        let g = tape.grad(y, &[x]).unwrap();
        assert_eq!(g[0].item().unwrap(), 6.0);
    }

    #[test]
    fn non_participating_input_gets_zero() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]).unwrap());
        let c = tape.leaf(Tensor::scalar(5.0).unwrap());
        let y = tape.scale(c, 2.0).unwrap();
        let g = tape.grad(y, &[x]).unwrap();
        assert_eq!(g[0], Tensor::zeros(&[2]));
        // x recorded after the output also gets zero
        let late = tape.leaf(Tensor::scalar(1.0).unwrap());
        assert_eq!(tape.grad(y, &[late]).unwrap()[0].item().unwrap(), 0.0);
    }

    #[test]
    fn non_scalar_output_is_contract_error() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]).unwrap());
        assert!(matches!(tape.grad(x, &[x]), Err(Error::Contract(_))));
    }

    #[test]
    fn shared_input_accumulates() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(2.0).unwrap());
        let a = tape.scale(x, 3.0).unwrap();
        let b = tape.mul(x, x).unwrap();
        let y = tape.add(a, b).unwrap();
        assert_eq!(tape.grad(y, &[x]).unwrap()[0].item().unwrap(), 7.0);
    }

    #[test]
    fn masked_lse_empty_row_is_zero_with_zero_grad() {
        let tape = Tape::new();
        let s = tape.leaf(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let mask = Tensor::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let l = tape.masked_row_logsumexp(s, mask).unwrap();
        let v = tape.value(l);
        assert_eq!(v.data()[0], 0.0);
        assert!((v.data()[1] - (3f64.exp() + 4f64.exp()).ln()).abs() < 1e-12);
        let total = tape.sum(l).unwrap();
        let g = tape.grad(total, &[s]).unwrap();
        assert_eq!(&g[0].data()[..2], &[0.0, 0.0]);
    }
}
