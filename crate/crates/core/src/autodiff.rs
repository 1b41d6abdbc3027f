//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Graph`] records every operation of a forward pass in topological
//! order; [`Graph::backward`] replays the tape in reverse and accumulates
//! parameter gradients into a [`ParameterSet`]. There is no broadcasting:
//! callers expand explicitly (`repeat_row`), which keeps every backward rule
//! a few lines of auditable code.
//!
//! Shape mismatches and contract violations panic with messages naming the
//! offending shapes; they are programming errors, not recoverable states.

use std::collections::BTreeMap;

use crate::scalar::Scalar;

/// Dense row-major tensor with an optional gradient slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    pub shape: Vec<usize>,
    pub data: Vec<F>,
    pub grad: Option<Vec<F>>,
}

impl<F: Scalar> Tensor<F> {
    pub fn new(shape: Vec<usize>, data: Vec<F>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor shape {:?} does not match data length {}",
            shape,
            data.len()
        );
        Tensor { shape, data, grad: None }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor { shape, data: vec![F::zero(); n], grad: None }
    }

    pub fn scalar(x: F) -> Self {
        Tensor { shape: vec![1], data: vec![x], grad: None }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Rows of a 2-D tensor.
    pub fn rows(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "expected 2-D tensor, got shape {:?}", self.shape);
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "expected 2-D tensor, got shape {:?}", self.shape);
        self.shape[1]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn ensure_grad(&mut self) -> &mut Vec<F> {
        let n = self.data.len();
        self.grad.get_or_insert_with(|| vec![F::zero(); n])
    }
}

/// Named map of trainable tensors. Iteration order is sorted by name so
/// seeded runs are bit-reproducible.
#[derive(Debug, Clone, Default)]
pub struct ParameterSet<F> {
    params: BTreeMap<String, Tensor<F>>,
}

impl<F: Scalar> ParameterSet<F> {
    pub fn new() -> Self {
        ParameterSet { params: BTreeMap::new() }
    }

    /// Registers a parameter, enabling its gradient slot.
    pub fn insert(&mut self, name: &str, mut tensor: Tensor<F>) {
        tensor.ensure_grad();
        let prev = self.params.insert(name.to_string(), tensor);
        assert!(prev.is_none(), "duplicate parameter name {name:?}");
    }

    pub fn get(&self, name: &str) -> &Tensor<F> {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor<F> {
        self.params
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<F>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Total number of trainable scalars.
    pub fn num_scalars(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    pub fn zero_grads(&mut self) {
        for t in self.params.values_mut() {
            for g in t.ensure_grad() {
                *g = F::zero();
            }
        }
    }

    /// Gradient-descent step: `p -= lr * grad(p)`. Gradients are left in
    /// place until [`ParameterSet::zero_grads`].
    pub fn sgd_step(&mut self, lr: F) {
        for (name, t) in self.params.iter_mut() {
            let grad = t
                .grad
                .as_ref()
                .unwrap_or_else(|| panic!("sgd_step: parameter {name:?} has no gradient"));
            for (p, g) in t.data.iter_mut().zip(grad) {
                *p = *p - lr * *g;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.values().all(Tensor::is_finite)
    }

    fn accumulate_grad(&mut self, name: &str, delta: &[F]) {
        let t = self.get_mut(name);
        assert_eq!(
            t.numel(),
            delta.len(),
            "gradient length {} does not match parameter {name:?} of {} scalars",
            delta.len(),
            t.numel()
        );
        for (g, d) in t.ensure_grad().iter_mut().zip(delta) {
            *g += *d;
        }
    }
}

/// Handle into a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<F> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Hadamard(Var, Var),
    Relu(Var),
    Tanh(Var),
    Ln(Var),
    Scale(Var, F),
    MaskedSoftmax(Var, Vec<usize>),
    GatherSum(Var, Vec<Vec<usize>>),
    GatherRows(Var, Vec<usize>),
    RepeatRow(Var, usize),
    ConcatRows(Vec<Var>),
    Reshape(Var),
    Sum(Var),
    Select(Var, usize),
}

struct Node<F> {
    shape: Vec<usize>,
    data: Vec<F>,
    op: Op<F>,
    /// Set when this leaf mirrors a named parameter.
    param: Option<String>,
}

/// Append-only computation record. Every node's inputs precede it.
#[derive(Default)]
pub struct Graph<F> {
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn data(&self, v: Var) -> &[F] {
        &self.nodes[v.0].data
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor<F> {
        Tensor::new(self.shape(v).to_vec(), self.data(v).to_vec())
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<F>, op: Op<F>, param: Option<String>) -> Var {
        debug_assert!(
            data.iter().all(|x| x.is_finite()),
            "non-finite value produced by forward op (shape {shape:?})"
        );
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.nodes.push(Node { shape, data, op, param });
        Var(self.nodes.len() - 1)
    }

    /// Constant leaf.
    pub fn input(&mut self, t: Tensor<F>) -> Var {
        self.push(t.shape, t.data, Op::Leaf, None)
    }

    /// Leaf mirroring a named parameter; `backward` accumulates into it.
    pub fn param(&mut self, params: &ParameterSet<F>, name: &str) -> Var {
        let t = params.get(name);
        self.push(t.shape.clone(), t.data.clone(), Op::Leaf, Some(name.to_string()))
    }

    pub fn zeros(&mut self, shape: Vec<usize>) -> Var {
        self.input(Tensor::zeros(shape))
    }

    /// `a[m×k] · b[k×n] -> [m×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        assert!(
            sa.len() == 2 && sb.len() == 2 && sa[1] == sb[0],
            "matmul: incompatible shapes {sa:?} x {sb:?}"
        );
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![F::zero(); m * n];
        {
            let da = self.data(a);
            let db = self.data(b);
            for i in 0..m {
                for p in 0..k {
                    let aip = da[i * k + p];
                    if aip == F::zero() {
                        continue;
                    }
                    let brow = &db[p * n..(p + 1) * n];
                    let orow = &mut out[i * n..(i + 1) * n];
                    for j in 0..n {
                        orow[j] += aip * brow[j];
                    }
                }
            }
        }
        self.push(vec![m, n], out, Op::MatMul(a, b), None)
    }

    fn binary_data(&self, a: Var, b: Var, what: &str) -> (Vec<usize>, Vec<F>, Vec<F>) {
        let (sa, sb) = (self.shape(a), self.shape(b));
        assert_eq!(sa, sb, "{what}: shape mismatch {sa:?} vs {sb:?}");
        (sa.to_vec(), self.data(a).to_vec(), self.data(b).to_vec())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (shape, da, db) = self.binary_data(a, b, "add");
        let out = da.iter().zip(&db).map(|(x, y)| *x + *y).collect();
        self.push(shape, out, Op::Add(a, b), None)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Var {
        let (shape, da, db) = self.binary_data(a, b, "hadamard");
        let out = da.iter().zip(&db).map(|(x, y)| *x * *y).collect();
        self.push(shape, out, Op::Hadamard(a, b), None)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let shape = self.shape(a).to_vec();
        let out = self.data(a).iter().map(|x| x.max(F::zero())).collect();
        self.push(shape, out, Op::Relu(a), None)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let shape = self.shape(a).to_vec();
        let out = self.data(a).iter().map(|x| x.tanh()).collect();
        self.push(shape, out, Op::Tanh(a), None)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let shape = self.shape(a).to_vec();
        let out = self.data(a).iter().map(|x| x.ln()).collect();
        self.push(shape, out, Op::Ln(a), None)
    }

    pub fn scale(&mut self, a: Var, c: F) -> Var {
        let shape = self.shape(a).to_vec();
        let out = self.data(a).iter().map(|x| *x * c).collect();
        self.push(shape, out, Op::Scale(a, c), None)
    }

    /// Softmax restricted to `subset` of a 1-D score vector; positions
    /// outside the subset are exactly zero. Stabilized by subtracting the
    /// subset max.
    pub fn masked_softmax(&mut self, scores: Var, subset: &[usize]) -> Var {
        let shape = self.shape(scores).to_vec();
        assert_eq!(shape.len(), 1, "masked_softmax: expected 1-D scores, got {shape:?}");
        assert!(!subset.is_empty(), "masked_softmax: empty subset");
        let n = shape[0];
        let d = self.data(scores);
        let mut max = F::neg_infinity();
        for &i in subset {
            assert!(i < n, "masked_softmax: index {i} out of range for {n} scores");
            max = max.max(d[i]);
        }
        let mut out = vec![F::zero(); n];
        let mut denom = F::zero();
        for &i in subset {
            let e = (d[i] - max).exp();
            out[i] = e;
            denom += e;
        }
        for &i in subset {
            out[i] = out[i] / denom;
        }
        self.push(shape, out, Op::MaskedSoftmax(scores, subset.to_vec()), None)
    }

    /// Row `g` of the output is the sum of `messages` rows listed in
    /// `groups[g]`, summed in ascending index order. An empty group yields a
    /// zero row (isolated nodes).
    pub fn gather_sum(&mut self, messages: Var, groups: &[Vec<usize>]) -> Var {
        let shape = self.shape(messages).to_vec();
        assert_eq!(shape.len(), 2, "gather_sum: expected 2-D messages, got {shape:?}");
        let (n, k) = (shape[0], shape[1]);
        let d = self.data(messages);
        let mut out = vec![F::zero(); groups.len() * k];
        for (g, group) in groups.iter().enumerate() {
            for &i in group {
                assert!(i < n, "gather_sum: row index {i} out of range for {n} rows");
                for j in 0..k {
                    out[g * k + j] += d[i * k + j];
                }
            }
        }
        self.push(vec![groups.len(), k], out, Op::GatherSum(messages, groups.to_vec()), None)
    }

    /// Selects rows of a 2-D tensor (with repetition allowed).
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Var {
        let shape = self.shape(a).to_vec();
        assert_eq!(shape.len(), 2, "gather_rows: expected 2-D tensor, got {shape:?}");
        let (n, k) = (shape[0], shape[1]);
        let d = self.data(a);
        let mut out = Vec::with_capacity(indices.len() * k);
        for &i in indices {
            assert!(i < n, "gather_rows: row index {i} out of range for {n} rows");
            out.extend_from_slice(&d[i * k..(i + 1) * k]);
        }
        self.push(vec![indices.len(), k], out, Op::GatherRows(a, indices.to_vec()), None)
    }

    /// Explicit expansion of a single row `[1×k]` (or `[k]`) to `[n×k]`.
    pub fn repeat_row(&mut self, a: Var, n: usize) -> Var {
        let shape = self.shape(a).to_vec();
        let k = match shape.as_slice() {
            [k] => *k,
            [1, k] => *k,
            _ => panic!("repeat_row: expected a single row, got shape {shape:?}"),
        };
        let d = self.data(a);
        let mut out = Vec::with_capacity(n * k);
        for _ in 0..n {
            out.extend_from_slice(&d[..k]);
        }
        self.push(vec![n, k], out, Op::RepeatRow(a, n), None)
    }

    /// Stacks 2-D blocks with equal column counts along the row axis.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows: empty input");
        let k = self.shape(parts[0])[1];
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let s = self.shape(p);
            assert!(
                s.len() == 2 && s[1] == k,
                "concat_rows: shape {s:?} incompatible with column count {k}"
            );
            rows += s[0];
            out.extend_from_slice(self.data(p));
        }
        self.push(vec![rows, k], out, Op::ConcatRows(parts.to_vec()), None)
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Var {
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            self.data(a).len(),
            "reshape: cannot view {:?} as {shape:?}",
            self.shape(a)
        );
        let data = self.data(a).to_vec();
        self.push(shape, data, Op::Reshape(a), None)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: F = self.data(a).iter().copied().sum();
        self.push(vec![1], vec![s], Op::Sum(a), None)
    }

    /// Scalar at flat index `i`.
    pub fn select(&mut self, a: Var, i: usize) -> Var {
        let d = self.data(a);
        assert!(i < d.len(), "select: index {i} out of range for {} elements", d.len());
        let x = d[i];
        self.push(vec![1], vec![x], Op::Select(a, i), None)
    }

    /// Reverse pass from a scalar `loss`; parameter gradients are
    /// accumulated (not overwritten) into `params`.
    pub fn backward(&self, loss: Var, params: &mut ParameterSet<F>) {
        assert_eq!(
            self.data(loss).len(),
            1,
            "backward: loss must be scalar, got shape {:?}",
            self.shape(loss)
        );
        let mut grads: Vec<Option<Vec<F>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![F::one()]);

        for id in (0..=loss.0).rev() {
            let Some(gout) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf => {
                    if let Some(name) = &node.param {
                        params.accumulate_grad(name, &gout);
                    }
                }
                Op::MatMul(a, b) => {
                    let (m, k) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                    let n = self.nodes[b.0].shape[1];
                    let da = &self.nodes[a.0].data;
                    let db = &self.nodes[b.0].data;
                    {
                        let ga = Self::grad_slot(&mut grads, *a, m * k);
                        for i in 0..m {
                            for p in 0..k {
                                let mut acc = F::zero();
                                for j in 0..n {
                                    acc += gout[i * n + j] * db[p * n + j];
                                }
                                ga[i * k + p] += acc;
                            }
                        }
                    }
                    let gb = Self::grad_slot(&mut grads, *b, k * n);
                    for p in 0..k {
                        for i in 0..m {
                            let aip = da[i * k + p];
                            if aip == F::zero() {
                                continue;
                            }
                            for j in 0..n {
                                gb[p * n + j] += aip * gout[i * n + j];
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    for v in [a, b] {
                        let g = Self::grad_slot(&mut grads, *v, gout.len());
                        for (gi, go) in g.iter_mut().zip(&gout) {
                            *gi += *go;
                        }
                    }
                }
                Op::Hadamard(a, b) => {
                    let da = self.nodes[a.0].data.clone();
                    let db = self.nodes[b.0].data.clone();
                    {
                        let ga = Self::grad_slot(&mut grads, *a, gout.len());
                        for i in 0..gout.len() {
                            ga[i] += gout[i] * db[i];
                        }
                    }
                    let gb = Self::grad_slot(&mut grads, *b, gout.len());
                    for i in 0..gout.len() {
                        gb[i] += gout[i] * da[i];
                    }
                }
                Op::Relu(a) => {
                    // Subgradient 0 at exactly 0.
                    let da = &self.nodes[a.0].data;
                    let g = Self::grad_slot(&mut grads, *a, gout.len());
                    for i in 0..gout.len() {
                        if da[i] > F::zero() {
                            g[i] += gout[i];
                        }
                    }
                }
                Op::Tanh(a) => {
                    let y = &node.data;
                    let g = Self::grad_slot(&mut grads, *a, gout.len());
                    for i in 0..gout.len() {
                        g[i] += gout[i] * (F::one() - y[i] * y[i]);
                    }
                }
                Op::Ln(a) => {
                    let da = &self.nodes[a.0].data;
                    let g = Self::grad_slot(&mut grads, *a, gout.len());
                    for i in 0..gout.len() {
                        g[i] += gout[i] / da[i];
                    }
                }
                Op::Scale(a, c) => {
                    let g = Self::grad_slot(&mut grads, *a, gout.len());
                    for i in 0..gout.len() {
                        g[i] += gout[i] * *c;
                    }
                }
                Op::MaskedSoftmax(a, subset) => {
                    // dx_i = y_i * (g_i - sum_j g_j y_j), i in subset.
                    let y = &node.data;
                    let mut dot = F::zero();
                    for &i in subset {
                        dot += gout[i] * y[i];
                    }
                    let g = Self::grad_slot(&mut grads, *a, gout.len());
                    for &i in subset {
                        g[i] += y[i] * (gout[i] - dot);
                    }
                }
                Op::GatherSum(a, groups) => {
                    let k = node.shape[1];
                    let n = self.nodes[a.0].data.len();
                    let g = Self::grad_slot(&mut grads, *a, n);
                    for (gi, group) in groups.iter().enumerate() {
                        for &i in group {
                            for j in 0..k {
                                g[i * k + j] += gout[gi * k + j];
                            }
                        }
                    }
                }
                Op::GatherRows(a, indices) => {
                    let k = node.shape[1];
                    let n = self.nodes[a.0].data.len();
                    let g = Self::grad_slot(&mut grads, *a, n);
                    for (r, &i) in indices.iter().enumerate() {
                        for j in 0..k {
                            g[i * k + j] += gout[r * k + j];
                        }
                    }
                }
                Op::RepeatRow(a, n) => {
                    let k = node.shape[1];
                    let len = self.nodes[a.0].data.len();
                    let g = Self::grad_slot(&mut grads, *a, len);
                    for r in 0..*n {
                        for j in 0..k {
                            g[j] += gout[r * k + j];
                        }
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.nodes[p.0].data.len();
                        let g = Self::grad_slot(&mut grads, p, len);
                        for j in 0..len {
                            g[j] += gout[offset + j];
                        }
                        offset += len;
                    }
                }
                Op::Reshape(a) => {
                    let g = Self::grad_slot(&mut grads, *a, gout.len());
                    for (gi, go) in g.iter_mut().zip(&gout) {
                        *gi += *go;
                    }
                }
                Op::Sum(a) => {
                    let len = self.nodes[a.0].data.len();
                    let g = Self::grad_slot(&mut grads, *a, len);
                    for gi in g.iter_mut() {
                        *gi += gout[0];
                    }
                }
                Op::Select(a, i) => {
                    let len = self.nodes[a.0].data.len();
                    let g = Self::grad_slot(&mut grads, *a, len);
                    g[*i] += gout[0];
                }
            }
        }
    }

    fn grad_slot(grads: &mut [Option<Vec<F>>], v: Var, len: usize) -> &mut Vec<F> {
        grads[v.0].get_or_insert_with(|| vec![F::zero(); len])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type G = Graph<f64>;

    fn param(params: &mut ParameterSet<f64>, name: &str, shape: Vec<usize>, data: Vec<f64>) {
        params.insert(name, Tensor::new(shape, data));
    }

    #[test]
    fn matmul_identity() {
        let mut g = G::new();
        let id = g.input(Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]));
        let x = g.input(Tensor::new(vec![2, 1], vec![3.0, -4.0]));
        let y = g.matmul(id, x);
        assert_eq!(g.data(y), &[3.0, -4.0]);
    }

    #[test]
    fn matmul_hand_arithmetic() {
        let mut g = G::new();
        let a = g.input(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let b = g.input(Tensor::new(vec![2, 1], vec![1.0, 1.0]));
        let c = g.matmul(a, b);
        assert_eq!(g.data(c), &[3.0, 7.0]);
    }

    #[test]
    #[should_panic(expected = "matmul: incompatible shapes")]
    fn matmul_shape_mismatch() {
        let mut g = G::new();
        let a = g.input(Tensor::new(vec![2, 3], vec![0.0; 6]));
        let b = g.input(Tensor::new(vec![2, 2], vec![0.0; 4]));
        g.matmul(a, b);
    }

    #[test]
    fn matmul_gradient_matches_finite_differences() {
        // d sum(A·x) / dA against central differences, h=1e-5.
        let a0 = vec![0.3, -1.2, 0.7, 1.9, -0.4, 0.05];
        let x0 = vec![1.4, -0.6];
        let eval = |a: &[f64]| -> f64 {
            let mut g = G::new();
            let av = g.input(Tensor::new(vec![3, 2], a.to_vec()));
            let xv = g.input(Tensor::new(vec![2, 1], x0.clone()));
            let y = g.matmul(av, xv);
            let s = g.sum(y);
            g.data(s)[0]
        };

        let mut params = ParameterSet::new();
        param(&mut params, "a", vec![3, 2], a0.clone());
        let mut g = G::new();
        let av = g.param(&params, "a");
        let xv = g.input(Tensor::new(vec![2, 1], x0.clone()));
        let y = g.matmul(av, xv);
        let loss = g.sum(y);
        g.backward(loss, &mut params);
        let grad = params.get("a").grad.clone().unwrap();

        let h = 1e-5;
        for i in 0..a0.len() {
            let mut plus = a0.clone();
            let mut minus = a0.clone();
            plus[i] += h;
            minus[i] -= h;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-6);
            assert!(rel < 1e-6, "param {i}: ad {} vs fd {fd}", grad[i]);
        }
    }

    #[test]
    fn elementwise_basics() {
        let mut g = G::new();
        let a = g.input(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]));
        let b = g.input(Tensor::new(vec![3], vec![0.0, 1.0, 2.0]));
        let h = g.hadamard(a, b);
        assert_eq!(g.data(h), &[0.0, 2.0, 6.0]);

        let c = g.input(Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]));
        let r = g.relu(c);
        assert_eq!(g.data(r), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn tanh_gradient_at_zero() {
        let mut params = ParameterSet::new();
        param(&mut params, "x", vec![1], vec![0.0]);
        let mut g = G::new();
        let x = g.param(&params, "x");
        let t = g.tanh(x);
        let loss = g.sum(t);
        g.backward(loss, &mut params);
        assert_eq!(params.get("x").grad.as_ref().unwrap(), &vec![1.0]);
    }

    #[test]
    fn masked_softmax_singleton_and_uniform() {
        let mut g = G::new();
        let s = g.input(Tensor::new(vec![1], vec![5.0]));
        let y = g.masked_softmax(s, &[0]);
        assert_eq!(g.data(y), &[1.0]);

        let s = g.input(Tensor::new(vec![3], vec![7.5, 7.5, 7.5]));
        let y = g.masked_softmax(s, &[0, 1, 2]);
        for &p in g.data(y) {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn masked_softmax_two_scores() {
        let mut g = G::new();
        let s = g.input(Tensor::new(vec![2], vec![1.0, 2.0]));
        let y = g.masked_softmax(s, &[0, 1]);
        assert!((g.data(y)[0] - 0.26894).abs() < 1e-5);
        assert!((g.data(y)[1] - 0.73106).abs() < 1e-5);
    }

    #[test]
    fn masked_softmax_zeroes_excluded_positions() {
        let mut g = G::new();
        let s = g.input(Tensor::new(vec![4], vec![10.0, 1.0, 2.0, 10.0]));
        let y = g.masked_softmax(s, &[1, 2]);
        let d = g.data(y);
        assert_eq!(d[0], 0.0);
        assert_eq!(d[3], 0.0);
        assert!((d[1] + d[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    #[should_panic(expected = "empty subset")]
    fn masked_softmax_empty_subset() {
        let mut g = G::new();
        let s = g.input(Tensor::new(vec![2], vec![0.0, 0.0]));
        g.masked_softmax(s, &[]);
    }

    #[test]
    fn gather_sum_identity_and_empty_group() {
        let mut g = G::new();
        let m = g.input(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let y = g.gather_sum(m, &[vec![1], vec![0]]);
        assert_eq!(g.data(y), &[3.0, 4.0, 1.0, 2.0]);

        let y = g.gather_sum(m, &[vec![]]);
        assert_eq!(g.data(y), &[0.0, 0.0]);
    }

    #[test]
    fn gather_sum_matches_loop_oracle() {
        let input: Vec<f64> = (0..12).map(|i| (i as f64) * 0.37 - 1.1).collect();
        let groups = vec![vec![0, 2], vec![1, 3]];
        let mut g = G::new();
        let m = g.input(Tensor::new(vec![4, 3], input.clone()));
        let y = g.gather_sum(m, &groups);
        // Naive double loop, ascending index order.
        let mut expect = vec![0.0; 6];
        for (gi, group) in groups.iter().enumerate() {
            for &i in group {
                for j in 0..3 {
                    expect[gi * 3 + j] += input[i * 3 + j];
                }
            }
        }
        assert_eq!(g.data(y), expect.as_slice());
    }

    #[test]
    fn backward_sum_gives_ones_and_hadamard_doubles() {
        let mut params = ParameterSet::new();
        param(&mut params, "p", vec![3], vec![0.5, -1.0, 2.0]);

        let mut g = G::new();
        let p = g.param(&params, "p");
        let loss = g.sum(p);
        g.backward(loss, &mut params);
        assert_eq!(params.get("p").grad.as_ref().unwrap(), &vec![1.0, 1.0, 1.0]);

        params.zero_grads();
        let mut g = G::new();
        let p = g.param(&params, "p");
        let sq = g.hadamard(p, p);
        let loss = g.sum(sq);
        g.backward(loss, &mut params);
        assert_eq!(params.get("p").grad.as_ref().unwrap(), &vec![1.0, -2.0, 4.0]);
    }

    #[test]
    #[should_panic(expected = "loss must be scalar")]
    fn backward_rejects_non_scalar_loss() {
        let mut params = ParameterSet::new();
        param(&mut params, "p", vec![2], vec![1.0, 2.0]);
        let mut g = G::new();
        let p = g.param(&params, "p");
        g.backward(p, &mut params);
    }

    #[test]
    fn sgd_step_basic_and_zero_lr() {
        let mut params = ParameterSet::new();
        param(&mut params, "p", vec![1], vec![1.0]);
        params.get_mut("p").grad = Some(vec![2.0]);
        params.sgd_step(0.5);
        assert_eq!(params.get("p").data, vec![0.0]);

        let before = params.get("p").data.clone();
        params.sgd_step(0.0);
        assert_eq!(params.get("p").data, before);
    }

    #[test]
    fn accumulated_backward_equals_step_on_summed_gradient() {
        let run = |accumulate: bool| -> Vec<f64> {
            let mut params = ParameterSet::new();
            param(&mut params, "p", vec![2], vec![0.7, -0.3]);
            let losses = [1.5, -2.0];
            if accumulate {
                for &c in &losses {
                    let mut g = G::new();
                    let p = g.param(&params, "p");
                    let sq = g.hadamard(p, p);
                    let s = g.sum(sq);
                    let loss = g.scale(s, c);
                    g.backward(loss, &mut params);
                }
                params.sgd_step(0.1);
            } else {
                // Single backward on the summed loss.
                let mut g = G::new();
                let p = g.param(&params, "p");
                let sq = g.hadamard(p, p);
                let s = g.sum(sq);
                let l0 = g.scale(s, losses[0]);
                let l1 = g.scale(s, losses[1]);
                let loss = g.add(l0, l1);
                g.backward(loss, &mut params);
                params.sgd_step(0.1);
            }
            params.get("p").data.clone()
        };
        let a = run(true);
        let b = run(false);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn repeat_and_gather_rows_roundtrip() {
        let mut g = G::new();
        let r = g.input(Tensor::new(vec![1, 3], vec![1.0, 2.0, 3.0]));
        let rep = g.repeat_row(r, 4);
        assert_eq!(g.shape(rep), &[4, 3]);
        let back = g.gather_rows(rep, &[0, 3]);
        assert_eq!(g.data(back), &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
    }
}
