use std::collections::{BTreeMap, HashMap};

use ndarray::linalg::general_mat_mul;

use super::tensor::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input(String),
    Param(ParamId),
    MatMul(NodeId, NodeId),
    /// `a[n×m] + b[m]`, broadcast over rows.
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId, f64),
    Relu(NodeId),
    Sigmoid(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    StopGradient(NodeId),
    /// Value of `value_from`, gradient routed unchanged to `grad_to`.
    StraightThrough { grad_to: NodeId, value_from: NodeId },
    /// Nearest-code replacement of each `code_dim` slot of `z`. The gradient
    /// reaches the codebook rows that were selected, never `z`.
    CodebookLookup { z: NodeId, codebook: NodeId },
}

impl Op {
    fn inputs(&self) -> Vec<NodeId> {
        use Op::*;
        match *self {
            Input(_) | Param(_) => vec![],
            MatMul(a, b) | AddBias(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b) => vec![a, b],
            Scale(a, _) | AddScalar(a, _) | Relu(a) | Sigmoid(a) | Exp(a) | Log(a) | Sum(a)
            | Mean(a) | StopGradient(a) => vec![a],
            StraightThrough { grad_to, value_from } => vec![grad_to, value_from],
            CodebookLookup { z, codebook } => vec![z, codebook],
        }
    }

    fn kind(&self) -> &'static str {
        use Op::*;
        match self {
            Input(_) => "input",
            Param(_) => "param",
            MatMul(..) => "matmul",
            AddBias(..) => "add_bias",
            Add(..) => "add",
            Sub(..) => "sub",
            Mul(..) => "mul",
            Scale(..) => "scale",
            AddScalar(..) => "add_scalar",
            Relu(_) => "relu",
            Sigmoid(_) => "sigmoid",
            Exp(_) => "exp",
            Log(_) => "log",
            Sum(_) => "sum",
            Mean(_) => "mean",
            StopGradient(_) => "stop_gradient",
            StraightThrough { .. } => "straight_through",
            CodebookLookup { .. } => "codebook_lookup",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    label: Option<String>,
    value: Option<Tensor>,
    /// Selected code per slot, row-major `n × slots`, for codebook lookups.
    indices: Vec<usize>,
    needs_grad: bool,
}

/// Named forward results.
pub type Outputs = BTreeMap<String, Tensor>;

/// An acyclic expression graph. Nodes can only reference earlier nodes, so
/// insertion order is a topological order.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    outputs: BTreeMap<String, NodeId>,
    grad_inputs: Vec<String>,
}

/// Gradients from one backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    params: Vec<Tensor>,
    nodes: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn param(&self, id: ParamId) -> &Tensor {
        &self.params[id.0]
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    /// Gradient at an intermediate node, if the node lies on a path from a
    /// parameter or gradient-tracked input to the loss.
    pub fn node(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].as_ref()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op) -> NodeId {
        let needs_grad = match &op {
            Op::Param(_) => true,
            Op::Input(name) => self.grad_inputs.contains(name),
            Op::StopGradient(_) => false,
            Op::StraightThrough { grad_to, .. } => self.nodes[grad_to.0].needs_grad,
            Op::CodebookLookup { codebook, .. } => self.nodes[codebook.0].needs_grad,
            other => other.inputs().iter().any(|i| self.nodes[i.0].needs_grad),
        };
        for i in op.inputs() {
            assert!(i.0 < self.nodes.len(), "node {i:?} does not exist yet");
        }
        self.nodes.push(Node {
            op,
            label: None,
            value: None,
            indices: Vec::new(),
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Attaches a human-readable name used in error messages.
    pub fn label(&mut self, node: NodeId, label: impl Into<String>) -> NodeId {
        self.nodes[node.0].label = Some(label.into());
        node
    }

    pub fn mark_output(&mut self, name: impl Into<String>, node: NodeId) {
        self.outputs.insert(name.into(), node);
    }

    pub fn output_node(&self, name: &str) -> Option<NodeId> {
        self.outputs.get(name).copied()
    }

    pub fn input(&mut self, name: impl Into<String>) -> NodeId {
        let name = name.into();
        let id = self.push(Op::Input(name.clone()));
        self.label(id, name)
    }

    /// An input whose gradient is tracked and reported by backward.
    pub fn input_with_grad(&mut self, name: impl Into<String>) -> NodeId {
        let name = name.into();
        self.grad_inputs.push(name.clone());
        self.input(name)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        self.push(Op::Param(id))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::MatMul(a, b))
    }

    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        self.push(Op::AddBias(a, bias))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        self.push(Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        self.push(Op::AddScalar(a, c))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Exp(a))
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Log(a))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sum(a))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Mean(a))
    }

    pub fn stop_gradient(&mut self, a: NodeId) -> NodeId {
        self.push(Op::StopGradient(a))
    }

    /// Forward value of `value_from`; the incoming gradient is copied to
    /// `grad_to` as if the node were the identity on it.
    pub fn straight_through(&mut self, grad_to: NodeId, value_from: NodeId) -> NodeId {
        self.push(Op::StraightThrough { grad_to, value_from })
    }

    pub fn codebook_lookup(&mut self, z: NodeId, codebook: NodeId) -> NodeId {
        self.push(Op::CodebookLookup { z, codebook })
    }

    /// `x·W + b`
    pub fn linear(&mut self, x: NodeId, w: ParamId, b: ParamId) -> NodeId {
        let w = self.param(w);
        let b = self.param(b);
        let xw = self.matmul(x, w);
        self.add_bias(xw, b)
    }

    /// Per-row squared distance averaged over rows, for `width`-column
    /// operands. Written as `width · mean(·)` so the graph does not depend
    /// on the batch size.
    pub fn row_sq_norm_mean(&mut self, a: NodeId, b: NodeId, width: usize) -> NodeId {
        let m = self.mse(a, b);
        self.scale(m, width as f64)
    }

    /// Mean of squared differences over all elements.
    pub fn mse(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let d = self.sub(a, b);
        let sq = self.mul(d, d);
        self.mean(sq)
    }

    /// `½ Σ (μ² + exp(logvar) − logvar − 1)` per row, averaged over rows:
    /// the KL divergence of a diagonal Gaussian from the standard normal.
    pub fn gaussian_kl(&mut self, mu: NodeId, logvar: NodeId, width: usize) -> NodeId {
        let mu2 = self.mul(mu, mu);
        let var = self.exp(logvar);
        let a = self.add(mu2, var);
        let b = self.sub(a, logvar);
        let c = self.add_scalar(b, -1.0);
        let m = self.mean(c);
        self.scale(m, 0.5 * width as f64)
    }

    fn node_name(&self, id: NodeId) -> String {
        let n = &self.nodes[id.0];
        match &n.label {
            Some(l) => format!("{l} (#{}, {})", id.0, n.op.kind()),
            None => format!("#{} ({})", id.0, n.op.kind()),
        }
    }

    fn shape_err(&self, id: NodeId, message: String) -> Error {
        Error::Shape {
            node: self.node_name(id),
            message,
        }
    }

    pub fn value(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].value.as_ref()
    }

    /// Code index per slot from the last forward pass of a lookup node.
    pub fn lookup_indices(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].indices
    }

    /// Evaluates every node and returns the values of the marked outputs.
    pub fn forward(&mut self, params: &ParamStore, inputs: &HashMap<String, Tensor>) -> Result<Outputs> {
        self.evaluate(params, inputs)?;
        Ok(self
            .outputs
            .iter()
            .map(|(k, id)| (k.clone(), self.nodes[id.0].value.clone().expect("evaluated")))
            .collect())
    }

    /// Evaluates every node without collecting outputs.
    pub fn evaluate(&mut self, params: &ParamStore, inputs: &HashMap<String, Tensor>) -> Result<()> {
        for idx in 0..self.nodes.len() {
            let id = NodeId(idx);
            let (value, indices) = self.eval_node(id, params, inputs)?;
            let node = &mut self.nodes[idx];
            node.value = Some(value);
            node.indices = indices;
        }
        Ok(())
    }

    fn val(&self, id: NodeId) -> &Tensor {
        self.nodes[id.0].value.as_ref().expect("inputs precede their consumers")
    }

    fn eval_node(
        &self,
        id: NodeId,
        params: &ParamStore,
        inputs: &HashMap<String, Tensor>,
    ) -> Result<(Tensor, Vec<usize>)> {
        use Op::*;
        let op = &self.nodes[id.0].op;
        let same_shape = |a: NodeId, b: NodeId| -> Result<()> {
            let (x, y) = (self.val(a), self.val(b));
            if x.shape() != y.shape() {
                return Err(self.shape_err(
                    id,
                    format!("operands have shapes {:?} and {:?}", x.shape(), y.shape()),
                ));
            }
            Ok(())
        };
        let out = match op {
            Input(name) => inputs
                .get(name)
                .cloned()
                .ok_or_else(|| self.shape_err(id, format!("input '{name}' is not bound")))?,
            Param(p) => {
                if p.0 >= params.len() {
                    return Err(self.shape_err(id, format!("parameter {} not in store", p.0)));
                }
                params.get(*p).clone()
            }
            MatMul(a, b) => {
                let (x, w) = (self.val(*a), self.val(*b));
                if x.shape().len() != 2 || w.shape().len() != 2 || x.shape()[1] != w.shape()[0] {
                    return Err(self.shape_err(
                        id,
                        format!("cannot multiply {:?} by {:?}", x.shape(), w.shape()),
                    ));
                }
                let (n, m) = (x.shape()[0], w.shape()[1]);
                let mut out = Tensor::zeros(&[n, m]);
                general_mat_mul(1.0, &x.view2(), &w.view2(), 0.0, &mut out.view2_mut());
                out
            }
            AddBias(a, b) => {
                let (x, bias) = (self.val(*a), self.val(*b));
                let (_, m) = x.dims2();
                if bias.len() != m || x.shape().len() != 2 {
                    return Err(self.shape_err(
                        id,
                        format!("bias {:?} does not match {:?}", bias.shape(), x.shape()),
                    ));
                }
                let mut out = x.clone();
                for row in out.data_mut().chunks_mut(m) {
                    for (v, b) in row.iter_mut().zip(bias.data()) {
                        *v += b;
                    }
                }
                out
            }
            Add(a, b) => {
                same_shape(*a, *b)?;
                self.val(*a).zip_map(self.val(*b), |x, y| x + y)
            }
            Sub(a, b) => {
                same_shape(*a, *b)?;
                self.val(*a).zip_map(self.val(*b), |x, y| x - y)
            }
            Mul(a, b) => {
                same_shape(*a, *b)?;
                self.val(*a).zip_map(self.val(*b), |x, y| x * y)
            }
            Scale(a, c) => self.val(*a).map(|x| x * c),
            AddScalar(a, c) => self.val(*a).map(|x| x + c),
            Relu(a) => self.val(*a).map(|x| if x > 0.0 { x } else { 0.0 }),
            Sigmoid(a) => self.val(*a).map(sigmoid),
            Exp(a) => self.val(*a).map(f64::exp),
            Log(a) => self.val(*a).map(f64::ln),
            Sum(a) => Tensor::scalar(self.val(*a).data().iter().sum()),
            Mean(a) => {
                let x = self.val(*a);
                Tensor::scalar(x.data().iter().sum::<f64>() / x.len() as f64)
            }
            StopGradient(a) => self.val(*a).clone(),
            StraightThrough { grad_to, value_from } => {
                same_shape(*grad_to, *value_from)?;
                self.val(*value_from).clone()
            }
            CodebookLookup { z, codebook } => {
                let (zv, cb) = (self.val(*z), self.val(*codebook));
                if cb.shape().len() != 2 || zv.shape().len() != 2 {
                    return Err(self.shape_err(id, "lookup needs 2-D latents and codebook".into()));
                }
                let code_dim = cb.shape()[1];
                let l = zv.shape()[1];
                if l % code_dim != 0 {
                    return Err(self.shape_err(
                        id,
                        format!("latent width {l} is not a multiple of code width {code_dim}"),
                    ));
                }
                let mut out = zv.clone();
                let mut indices = Vec::with_capacity(zv.len() / code_dim);
                for slot in out.data_mut().chunks_mut(code_dim) {
                    let k = crate::generative::nearest_code(slot, cb.data(), code_dim);
                    slot.copy_from_slice(&cb.data()[k * code_dim..(k + 1) * code_dim]);
                    indices.push(k);
                }
                return Ok((out, indices));
            }
        };
        Ok((out, Vec::new()))
    }

    /// Gradients of the scalar `loss` with respect to every parameter in a
    /// store of `n_params` tensors. Parameters absent from the graph or not
    /// on a path to `loss` get zeros.
    pub fn backward(&self, loss: NodeId, params: &ParamStore) -> Result<Gradients> {
        let lv = self
            .value(loss)
            .ok_or_else(|| self.shape_err(loss, "forward has not been run".into()))?;
        if lv.len() != 1 {
            return Err(self.shape_err(
                loss,
                format!("loss must be scalar, has shape {:?}", lv.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::new(lv.shape().to_vec(), vec![1.0])?);

        let accumulate = |grads: &mut Vec<Option<Tensor>>, target: NodeId, g: Tensor| {
            if !self.nodes[target.0].needs_grad {
                return;
            }
            match &mut grads[target.0] {
                Some(acc) => acc.add_assign(&g),
                slot => *slot = Some(g),
            }
        };

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].clone() else { continue };
            let node = &self.nodes[idx];
            use Op::*;
            match &node.op {
                Input(_) | Param(_) => {}
                MatMul(a, b) => {
                    let (x, w) = (self.val(*a), self.val(*b));
                    if self.nodes[a.0].needs_grad {
                        let mut ga = Tensor::zeros(x.shape());
                        general_mat_mul(1.0, &g.view2(), &w.view2().t(), 0.0, &mut ga.view2_mut());
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.nodes[b.0].needs_grad {
                        let mut gb = Tensor::zeros(w.shape());
                        general_mat_mul(1.0, &x.view2().t(), &g.view2(), 0.0, &mut gb.view2_mut());
                        accumulate(&mut grads, *b, gb);
                    }
                }
                AddBias(a, b) => {
                    let bias = self.val(*b);
                    let m = bias.len();
                    let mut gb = Tensor::zeros(bias.shape());
                    for row in g.data().chunks(m) {
                        for (acc, v) in gb.data_mut().iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut grads, *b, gb);
                    accumulate(&mut grads, *a, g);
                }
                Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Sub(a, b) => {
                    accumulate(&mut grads, *b, g.map(|v| -v));
                    accumulate(&mut grads, *a, g);
                }
                Mul(a, b) => {
                    let (x, y) = (self.val(*a), self.val(*b));
                    accumulate(&mut grads, *a, g.zip_map(y, |gv, yv| gv * yv));
                    accumulate(&mut grads, *b, g.zip_map(x, |gv, xv| gv * xv));
                }
                Scale(a, c) => accumulate(&mut grads, *a, g.map(|v| v * c)),
                AddScalar(a, _) => accumulate(&mut grads, *a, g),
                Relu(a) => {
                    let x = self.val(*a);
                    accumulate(&mut grads, *a, g.zip_map(x, |gv, xv| if xv > 0.0 { gv } else { 0.0 }));
                }
                Sigmoid(a) => {
                    let s = node.value.as_ref().expect("evaluated");
                    accumulate(&mut grads, *a, g.zip_map(s, |gv, sv| gv * sv * (1.0 - sv)));
                }
                Exp(a) => {
                    let e = node.value.as_ref().expect("evaluated");
                    accumulate(&mut grads, *a, g.zip_map(e, |gv, ev| gv * ev));
                }
                Log(a) => {
                    let x = self.val(*a);
                    accumulate(&mut grads, *a, g.zip_map(x, |gv, xv| gv / xv));
                }
                Sum(a) => {
                    let x = self.val(*a);
                    let gv = g.item();
                    accumulate(&mut grads, *a, Tensor::new(x.shape().to_vec(), vec![gv; x.len()])?);
                }
                Mean(a) => {
                    let x = self.val(*a);
                    let gv = g.item() / x.len() as f64;
                    accumulate(&mut grads, *a, Tensor::new(x.shape().to_vec(), vec![gv; x.len()])?);
                }
                StopGradient(_) => {}
                StraightThrough { grad_to, .. } => accumulate(&mut grads, *grad_to, g),
                CodebookLookup { codebook, .. } => {
                    let cb = self.val(*codebook);
                    let code_dim = cb.shape()[1];
                    let mut gc = Tensor::zeros(cb.shape());
                    for (slot, &k) in g.data().chunks(code_dim).zip(&node.indices) {
                        let row = &mut gc.data_mut()[k * code_dim..(k + 1) * code_dim];
                        for (acc, v) in row.iter_mut().zip(slot) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut grads, *codebook, gc);
                }
            }
        }

        let mut param_grads: Vec<Tensor> = params.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
        for (idx, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(p), Some(g)) = (&node.op, &grads[idx]) {
                if p.0 < param_grads.len() {
                    param_grads[p.0].add_assign(g);
                }
            }
        }
        Ok(Gradients {
            params: param_grads,
            nodes: grads,
        })
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bind(pairs: &[(&str, Tensor)]) -> HashMap<String, Tensor> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn identity_linear_layer() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let b = store.add("b", Tensor::zeros(&[2]));
        let mut g = Graph::new();
        let x = g.input("x");
        let y = g.linear(x, w, b);
        g.mark_output("y", y);
        let xv = Tensor::new(vec![1, 2], vec![3.5, -2.0]).unwrap();
        let out = g.forward(&store, &bind(&[("x", xv.clone())])).unwrap();
        assert_eq!(out["y"], xv);
    }

    #[test]
    fn relu_forward() {
        let store = ParamStore::new();
        let mut g = Graph::new();
        let x = g.input("x");
        let r = g.relu(x);
        g.mark_output("r", r);
        let out = g
            .forward(&store, &bind(&[("x", Tensor::vector(vec![-1.0, 2.0]))]))
            .unwrap();
        assert_eq!(out["r"].data(), &[0.0, 2.0]);
    }

    #[test]
    fn two_layer_matches_hand_product() {
        // x = [1, 2]; W1 = [[1, -1], [0.5, 2]]; b1 = [0, -5]; W2 = [[2], [3]]; b2 = [1]
        // h = relu([1 + 1, -1 + 4 - 5]) = [2, 0]; y = 2*2 + 0*3 + 1 = 5
        let mut store = ParamStore::new();
        let w1 = store.add("w1", Tensor::new(vec![2, 2], vec![1.0, -1.0, 0.5, 2.0]).unwrap());
        let b1 = store.add("b1", Tensor::vector(vec![0.0, -5.0]));
        let w2 = store.add("w2", Tensor::new(vec![2, 1], vec![2.0, 3.0]).unwrap());
        let b2 = store.add("b2", Tensor::vector(vec![1.0]));
        let mut g = Graph::new();
        let x = g.input("x");
        let h = g.linear(x, w1, b1);
        let h = g.relu(h);
        let y = g.linear(h, w2, b2);
        g.mark_output("y", y);
        let out = g
            .forward(&store, &bind(&[("x", Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap())]))
            .unwrap();
        assert_eq!(out["y"].data(), &[5.0]);
    }

    #[test]
    fn shape_mismatch_names_node() {
        let store = ParamStore::new();
        let mut g = Graph::new();
        let a = g.input("a");
        let b = g.input("b");
        let s = g.add(a, b);
        g.label(s, "broken_sum");
        let err = g
            .forward(
                &store,
                &bind(&[("a", Tensor::vector(vec![1.0])), ("b", Tensor::vector(vec![1.0, 2.0]))]),
            )
            .unwrap_err();
        assert!(err.to_string().contains("broken_sum"), "{err}");
    }

    #[test]
    fn unbound_input_is_an_error() {
        let mut g = Graph::new();
        g.input("missing");
        assert!(g.forward(&ParamStore::new(), &HashMap::new()).is_err());
    }

    #[test]
    fn square_gradient() {
        let mut store = ParamStore::new();
        let p = store.add("x", Tensor::scalar(3.0));
        let mut g = Graph::new();
        let x = g.param(p);
        let sq = g.mul(x, x);
        let loss = g.sum(sq);
        g.evaluate(&store, &HashMap::new()).unwrap();
        let grads = g.backward(loss, &store).unwrap();
        assert_eq!(grads.param(p).data(), &[6.0]);
    }

    #[test]
    fn sum_of_matvec_gradient_is_broadcast_input() {
        // loss = sum(x W) with x 1×3, W 3×2: dL/dW[i][j] = x[i]
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::new(vec![3, 2], vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap());
        let unused = store.add("unused", Tensor::vector(vec![1.0, 2.0]));
        let mut g = Graph::new();
        let x = g.input("x");
        let wn = g.param(w);
        let y = g.matmul(x, wn);
        let loss = g.sum(y);
        g.evaluate(&store, &bind(&[("x", Tensor::new(vec![1, 3], vec![2.0, -1.0, 4.0]).unwrap())]))
            .unwrap();
        let grads = g.backward(loss, &store).unwrap();
        assert_eq!(grads.param(w).data(), &[2.0, 2.0, -1.0, -1.0, 4.0, 4.0]);
        assert_eq!(grads.param(unused).data(), &[0.0, 0.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut store = ParamStore::new();
        let p = store.add("p", Tensor::vector(vec![1.0, 2.0]));
        let mut g = Graph::new();
        let x = g.param(p);
        g.evaluate(&store, &HashMap::new()).unwrap();
        assert!(g.backward(x, &store).is_err());
    }

    #[test]
    fn relu_gradient_at_zero_is_zero() {
        let mut store = ParamStore::new();
        let p = store.add("p", Tensor::vector(vec![0.0, 1.0, -1.0]));
        let mut g = Graph::new();
        let x = g.param(p);
        let r = g.relu(x);
        let loss = g.sum(r);
        g.evaluate(&store, &HashMap::new()).unwrap();
        let grads = g.backward(loss, &store).unwrap();
        assert_eq!(grads.param(p).data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn stop_gradient_blocks() {
        let mut store = ParamStore::new();
        let p = store.add("p", Tensor::scalar(2.0));
        let mut g = Graph::new();
        let x = g.param(p);
        let s = g.stop_gradient(x);
        let y = g.mul(x, s);
        let loss = g.sum(y);
        g.evaluate(&store, &HashMap::new()).unwrap();
        // d/dx (x * sg(x)) = sg(x) = 2
        assert_eq!(g.backward(loss, &store).unwrap().param(p).data(), &[2.0]);
    }

    #[test]
    fn straight_through_copies_gradient() {
        let mut store = ParamStore::new();
        let ze = store.add("ze", Tensor::vector(vec![0.3, -7.0]));
        let zq = store.add("zq", Tensor::vector(vec![1.0, 1.0]));
        let mut g = Graph::new();
        let a = g.param(ze);
        let b = g.param(zq);
        let st = g.straight_through(a, b);
        g.mark_output("st", st);
        let loss = g.sum(st);
        let out = g.forward(&store, &HashMap::new()).unwrap();
        assert_eq!(out["st"].data(), &[1.0, 1.0]);
        let grads = g.backward(loss, &store).unwrap();
        assert_eq!(grads.param(ze).data(), &[1.0, 1.0]);
        assert_eq!(grads.param(zq).data(), &[0.0, 0.0]);
    }

    #[test]
    fn forward_is_bit_deterministic() {
        let mut rng = crate::rng::seeded(11);
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::glorot(5, 4, &mut rng));
        let b = store.add("b", Tensor::zeros(&[4]));
        let mut g = Graph::new();
        let x = g.input("x");
        let y = g.linear(x, w, b);
        let y = g.sigmoid(y);
        g.mark_output("y", y);
        let xv = Tensor::glorot(3, 5, &mut rng);
        let a = g.forward(&store, &bind(&[("x", xv.clone())])).unwrap();
        let bb = g.forward(&store, &bind(&[("x", xv)])).unwrap();
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a["y"]), bits(&bb["y"]));
    }
}
