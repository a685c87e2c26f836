use crate::{AdError, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

type BackwardFn = Box<dyn Fn(&BackwardContext<'_>, &mut GradSink<'_>)>;

struct Node {
    value: Vec<f64>,
    shape: Vec<usize>,
    inputs: Vec<Var>,
    backward: Option<BackwardFn>,
    needs_grad: bool,
}

/// Append-only record of a forward computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    conv_fault: Option<f64>,
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
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

    fn leaf(&mut self, value: Vec<f64>, shape: &[usize], needs_grad: bool) -> Result<Var> {
        if value.len() != numel(shape) {
            return Err(AdError::Shape(format!(
                "{} values for shape {shape:?}",
                value.len()
            )));
        }
        self.nodes.push(Node {
            value,
            shape: shape.to_vec(),
            inputs: Vec::new(),
            backward: None,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, value: Vec<f64>, shape: &[usize]) -> Result<Var> {
        self.leaf(value, shape, false)
    }

    /// A leaf whose gradient is collected by [`Tape::backward`].
    pub fn param(&mut self, value: Vec<f64>, shape: &[usize]) -> Result<Var> {
        self.leaf(value, shape, true)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.leaf(vec![value], &[1], false).expect("scalar shape")
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// First element of a node, for scalars.
    pub fn item(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Appends an operation node. `backward` receives the output gradient and
    /// accumulates input gradients through the [`GradSink`]; it is skipped
    /// entirely when no input needs a gradient.
    pub fn push_op<F>(&mut self, value: Vec<f64>, shape: &[usize], inputs: &[Var], backward: F) -> Result<Var>
    where
        F: Fn(&BackwardContext<'_>, &mut GradSink<'_>) + 'static,
    {
        if value.len() != numel(shape) {
            return Err(AdError::Shape(format!(
                "op produced {} values for shape {shape:?}",
                value.len()
            )));
        }
        let id = self.nodes.len();
        if let Some(bad) = inputs.iter().find(|v| v.0 >= id) {
            return Err(AdError::Cycle { node: id, input: bad.0 });
        }
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            shape: shape.to_vec(),
            inputs: inputs.to_vec(),
            backward: needs_grad.then(|| Box::new(backward) as BackwardFn),
            needs_grad,
        });
        Ok(Var(id))
    }

    /// Test fixture: scales every convolution input/weight gradient by
    /// `factor`, producing a deliberately wrong backward pass.
    #[doc(hidden)]
    pub fn corrupt_conv_backward(&mut self, factor: Option<f64>) {
        self.conv_fault = factor;
    }

    pub(crate) fn conv_fault(&self) -> Option<f64> {
        self.conv_fault
    }

    /// Reverse sweep from a scalar `loss`. Returns gradients for every node
    /// that depends on a parameter; constants get none.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let node = &self.nodes[loss.0];
        if node.value.len() != 1 {
            return Err(AdError::NotScalar(node.shape.clone()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        if node.needs_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            let Some(grad_out) = grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            if let Some(bw) = &node.backward {
                for v in &node.inputs {
                    if v.0 >= i {
                        return Err(AdError::Cycle { node: i, input: v.0 });
                    }
                }
                let ctx = BackwardContext {
                    tape: self,
                    node: i,
                    grad: &grad_out,
                };
                let mut sink = GradSink {
                    grads: &mut grads,
                    tape: self,
                    inputs: &node.inputs,
                };
                bw(&ctx, &mut sink);
            }
            grads[i] = Some(grad_out);
        }
        grads.resize(self.nodes.len(), None);
        Ok(Gradients { grads })
    }
}

/// Read access to a node's inputs, output and output gradient during the
/// backward sweep.
pub struct BackwardContext<'a> {
    tape: &'a Tape,
    node: usize,
    grad: &'a [f64],
}

impl BackwardContext<'_> {
    fn input_var(&self, i: usize) -> Var {
        self.tape.nodes[self.node].inputs[i]
    }

    pub fn input(&self, i: usize) -> &[f64] {
        self.tape.value(self.input_var(i))
    }

    pub fn input_shape(&self, i: usize) -> &[usize] {
        self.tape.shape(self.input_var(i))
    }

    pub fn output(&self) -> &[f64] {
        &self.tape.nodes[self.node].value
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.tape.nodes[self.node].shape
    }

    pub fn grad_output(&self) -> &[f64] {
        self.grad
    }

    pub(crate) fn conv_fault(&self) -> Option<f64> {
        self.tape.conv_fault()
    }
}

/// Accumulates gradients into an operation's inputs.
pub struct GradSink<'a> {
    grads: &'a mut [Option<Vec<f64>>],
    tape: &'a Tape,
    inputs: &'a [Var],
}

impl GradSink<'_> {
    pub fn wants(&self, i: usize) -> bool {
        self.inputs.get(i).is_some_and(|&v| self.tape.needs_grad(v))
    }

    /// Gradient buffer of input `i`, zero-initialized on first use. `None`
    /// when that input does not exist or does not need a gradient.
    pub fn grad_mut(&mut self, i: usize) -> Option<&mut [f64]> {
        if !self.wants(i) {
            return None;
        }
        let v = self.inputs[i];
        let n = self.tape.value(v).len();
        Some(self.grads[v.0].get_or_insert_with(|| vec![0.0; n]).as_mut_slice())
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of `v`, or `None` when nothing flowed into it.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `v` with zeros where nothing flowed in.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Vec<f64> {
        self.get(v)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; tape.value(v).len()])
    }
}
