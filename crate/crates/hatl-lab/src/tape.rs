//! Reverse-mode automatic differentiation over [`Mat`] values.
//!
//! A [`Tape`] records one computation graph. Builders evaluate eagerly, so
//! node values are available immediately; [`Tape::backward`] then walks the
//! graph once in reverse. The same forward definitions serve training and
//! inference: inference simply never calls `backward`.
//!
//! The operator set is exactly what the lab's model needs, nothing more.

use crate::mat::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    /// a * b
    MatMul(NodeId, NodeId),
    /// a * b^T
    MatMulNT(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// x (S x C) plus a (1 x C) bias replicated over rows.
    AddRowBroadcast(NodeId, NodeId),
    /// x plus a constant matrix (e.g. an attention mask).
    AddConst(NodeId),
    Scale(NodeId, f64),
    /// x scaled by a learnable 1x1 node.
    ScalarMul(NodeId, NodeId),
    Tanh(NodeId),
    SoftmaxRows(NodeId),
    LogSoftmaxRows(NodeId),
    /// Row i of the output is row i-1 of the input; row 0 is zero.
    ShiftRowsDown(NodeId),
    /// Output row i is table row idx[i].
    GatherRows(NodeId, Vec<usize>),
    /// sum(x .* w) as a 1x1 value; w is a constant coefficient matrix.
    WeightedSum(NodeId, Mat),
    /// Linear combination of 1x1 nodes.
    AffineCombine(Vec<(NodeId, f64)>),
    /// Scalar whose gradient w.r.t. `input` was computed at forward time.
    CustomScalar { input: NodeId, input_grad: Mat },
}

#[derive(Debug)]
struct Node {
    value: Mat,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar root with respect to every node, indexed by
/// [`NodeId`]. Nodes the root does not depend on hold `None`.
pub struct Gradients {
    grads: Vec<Option<Mat>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Mat> {
        self.grads[id.0].as_ref()
    }
}

fn accumulate(slot: &mut Option<Mat>, delta: Mat) {
    match slot {
        Some(g) => g.add_assign(&delta),
        None => *slot = Some(delta),
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Mat, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Mat {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Mat) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul_nt(self.value(b));
        self.push(v, Op::MatMulNT(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).add(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    pub fn add_row_broadcast(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        let xv = self.value(x);
        let bv = self.value(bias);
        assert_eq!(bv.rows(), 1, "bias must be a row vector");
        assert_eq!(bv.cols(), xv.cols(), "bias width mismatch");
        let mut v = xv.clone();
        for i in 0..v.rows() {
            for (o, b) in v.row_mut(i).iter_mut().zip(bv.row(0)) {
                *o += b;
            }
        }
        self.push(v, Op::AddRowBroadcast(x, bias))
    }

    pub fn add_const(&mut self, x: NodeId, c: &Mat) -> NodeId {
        let v = self.value(x).add(c);
        self.push(v, Op::AddConst(x))
    }

    pub fn scale(&mut self, x: NodeId, k: f64) -> NodeId {
        let v = self.value(x).scale(k);
        self.push(v, Op::Scale(x, k))
    }

    pub fn scalar_mul(&mut self, x: NodeId, s: NodeId) -> NodeId {
        let sv = self.value(s).scalar_value();
        let v = self.value(x).scale(sv);
        self.push(v, Op::ScalarMul(x, s))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(f64::tanh);
        self.push(v, Op::Tanh(x))
    }

    pub fn softmax_rows(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let mut v = xv.clone();
        for i in 0..v.rows() {
            let row = v.row_mut(i);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for r in row.iter_mut() {
                *r = (*r - m).exp();
                sum += *r;
            }
            for r in row.iter_mut() {
                *r /= sum;
            }
        }
        self.push(v, Op::SoftmaxRows(x))
    }

    pub fn log_softmax_rows(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let mut v = xv.clone();
        for i in 0..v.rows() {
            let row = v.row_mut(i);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|r| (r - m).exp()).sum::<f64>().ln();
            for r in row.iter_mut() {
                *r -= lse;
            }
        }
        self.push(v, Op::LogSoftmaxRows(x))
    }

    pub fn shift_rows_down(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let mut v = Mat::zeros(xv.rows(), xv.cols());
        for i in 1..xv.rows() {
            v.row_mut(i).copy_from_slice(xv.row(i - 1));
        }
        self.push(v, Op::ShiftRowsDown(x))
    }

    pub fn gather_rows(&mut self, table: NodeId, idx: &[usize]) -> NodeId {
        let tv = self.value(table);
        let mut v = Mat::zeros(idx.len(), tv.cols());
        for (i, &r) in idx.iter().enumerate() {
            assert!(r < tv.rows(), "gather row {r} out of range");
            v.row_mut(i).copy_from_slice(tv.row(r));
        }
        self.push(v, Op::GatherRows(table, idx.to_vec()))
    }

    pub fn weighted_sum(&mut self, x: NodeId, w: Mat) -> NodeId {
        let xv = self.value(x);
        assert_eq!(xv.shape(), w.shape(), "weighted_sum shape mismatch");
        let s: f64 = xv.as_slice().iter().zip(w.as_slice()).map(|(a, b)| a * b).sum();
        self.push(Mat::scalar(s), Op::WeightedSum(x, w))
    }

    pub fn affine_combine(&mut self, terms: &[(NodeId, f64)]) -> NodeId {
        let mut s = 0.0;
        for &(id, c) in terms {
            s += c * self.value(id).scalar_value();
        }
        self.push(Mat::scalar(s), Op::AffineCombine(terms.to_vec()))
    }

    /// Scalar node with an externally supplied value and input gradient.
    /// Used for losses whose gradient is computed analytically during the
    /// forward pass (e.g. alignment losses).
    pub fn custom_scalar(&mut self, input: NodeId, value: f64, input_grad: Mat) -> NodeId {
        assert_eq!(
            self.value(input).shape(),
            input_grad.shape(),
            "custom_scalar gradient shape mismatch"
        );
        self.push(Mat::scalar(value), Op::CustomScalar { input, input_grad })
    }

    /// Gradients of the scalar `root` with respect to every node.
    pub fn backward(&self, root: NodeId) -> Gradients {
        assert_eq!(
            self.value(root).shape(),
            (1, 1),
            "backward root must be scalar"
        );
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Mat::scalar(1.0));

        for id in (0..=root.0).rev() {
            let Some(gout) = grads[id].take() else {
                continue;
            };
            match &self.nodes[id].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let da = gout.matmul_nt(self.value(*b));
                    let db = self.value(*a).matmul_tn(&gout);
                    accumulate(&mut grads[a.0], da);
                    accumulate(&mut grads[b.0], db);
                }
                Op::MatMulNT(a, b) => {
                    let da = gout.matmul(self.value(*b));
                    let db = gout.matmul_tn(self.value(*a));
                    accumulate(&mut grads[a.0], da);
                    accumulate(&mut grads[b.0], db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[a.0], gout.clone());
                    accumulate(&mut grads[b.0], gout.clone());
                }
                Op::AddRowBroadcast(x, bias) => {
                    let mut db = Mat::zeros(1, gout.cols());
                    for i in 0..gout.rows() {
                        for (o, g) in db.row_mut(0).iter_mut().zip(gout.row(i)) {
                            *o += g;
                        }
                    }
                    accumulate(&mut grads[x.0], gout.clone());
                    accumulate(&mut grads[bias.0], db);
                }
                Op::AddConst(x) => {
                    accumulate(&mut grads[x.0], gout.clone());
                }
                Op::Scale(x, k) => {
                    accumulate(&mut grads[x.0], gout.scale(*k));
                }
                Op::ScalarMul(x, s) => {
                    let sv = self.value(*s).scalar_value();
                    let xv = self.value(*x);
                    let ds: f64 = gout
                        .as_slice()
                        .iter()
                        .zip(xv.as_slice())
                        .map(|(g, x)| g * x)
                        .sum();
                    accumulate(&mut grads[x.0], gout.scale(sv));
                    accumulate(&mut grads[s.0], Mat::scalar(ds));
                }
                Op::Tanh(x) => {
                    let y = &self.nodes[id].value;
                    let mut dx = gout.clone();
                    for (d, v) in dx.as_mut_slice().iter_mut().zip(y.as_slice()) {
                        *d *= 1.0 - v * v;
                    }
                    accumulate(&mut grads[x.0], dx);
                }
                Op::SoftmaxRows(x) => {
                    let s = &self.nodes[id].value;
                    let mut dx = Mat::zeros(s.rows(), s.cols());
                    for i in 0..s.rows() {
                        let dot: f64 = gout
                            .row(i)
                            .iter()
                            .zip(s.row(i))
                            .map(|(g, p)| g * p)
                            .sum();
                        for ((d, g), p) in dx.row_mut(i).iter_mut().zip(gout.row(i)).zip(s.row(i))
                        {
                            *d = p * (g - dot);
                        }
                    }
                    accumulate(&mut grads[x.0], dx);
                }
                Op::LogSoftmaxRows(x) => {
                    let y = &self.nodes[id].value;
                    let mut dx = Mat::zeros(y.rows(), y.cols());
                    for i in 0..y.rows() {
                        let gsum: f64 = gout.row(i).iter().sum();
                        for ((d, g), v) in dx.row_mut(i).iter_mut().zip(gout.row(i)).zip(y.row(i))
                        {
                            *d = g - v.exp() * gsum;
                        }
                    }
                    accumulate(&mut grads[x.0], dx);
                }
                Op::ShiftRowsDown(x) => {
                    let mut dx = Mat::zeros(gout.rows(), gout.cols());
                    for i in 0..gout.rows().saturating_sub(1) {
                        dx.row_mut(i).copy_from_slice(gout.row(i + 1));
                    }
                    accumulate(&mut grads[x.0], dx);
                }
                Op::GatherRows(table, idx) => {
                    let tv = self.value(*table);
                    let mut dt = Mat::zeros(tv.rows(), tv.cols());
                    for (i, &r) in idx.iter().enumerate() {
                        for (d, g) in dt.row_mut(r).iter_mut().zip(gout.row(i)) {
                            *d += g;
                        }
                    }
                    accumulate(&mut grads[table.0], dt);
                }
                Op::WeightedSum(x, w) => {
                    accumulate(&mut grads[x.0], w.scale(gout.scalar_value()));
                }
                Op::AffineCombine(terms) => {
                    let g = gout.scalar_value();
                    for &(t, c) in terms {
                        accumulate(&mut grads[t.0], Mat::scalar(c * g));
                    }
                }
                Op::CustomScalar { input, input_grad } => {
                    accumulate(&mut grads[input.0], input_grad.scale(gout.scalar_value()));
                }
            }
            grads[id] = Some(gout);
        }

        Gradients { grads }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    /// Central-difference check of d(scalar)/d(inputs) for an arbitrary
    /// graph builder. `build` must construct the same graph for any input
    /// values with matching shapes.
    fn check_grads(inputs: &[Mat], build: impl Fn(&mut Tape, &[NodeId]) -> NodeId) {
        let h = 1e-6;
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
        let root = build(&mut tape, &ids);
        let grads = tape.backward(root);

        for (which, input) in inputs.iter().enumerate() {
            let analytic = grads.get(ids[which]);
            for k in 0..input.len() {
                let eval = |delta: f64| {
                    let mut perturbed: Vec<Mat> = inputs.to_vec();
                    perturbed[which].as_mut_slice()[k] += delta;
                    let mut t = Tape::new();
                    let pids: Vec<NodeId> =
                        perturbed.iter().map(|m| t.leaf(m.clone())).collect();
                    let r = build(&mut t, &pids);
                    t.value(r).scalar_value()
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let a = analytic.map_or(0.0, |g| g.as_slice()[k]);
                let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1.0);
                assert!(
                    err < 1e-6,
                    "input {which} coord {k}: analytic {a} vs fd {fd}"
                );
            }
        }
    }

    fn scalarize(tape: &mut Tape, x: NodeId, rng: &mut Rng) -> NodeId {
        let (r, c) = tape.value(x).shape();
        let w = Mat::randn(r, c, 1.0, rng);
        tape.weighted_sum(x, w)
    }

    #[test]
    fn matmul_gradients() {
        let mut rng = Rng::seed_from(1);
        let a = Mat::randn(3, 4, 1.0, &mut rng);
        let b = Mat::randn(4, 2, 1.0, &mut rng);
        let w = Mat::randn(3, 2, 1.0, &mut rng);
        check_grads(&[a, b], |t, ids| {
            let y = t.matmul(ids[0], ids[1]);
            t.weighted_sum(y, w.clone())
        });
    }

    #[test]
    fn matmul_nt_gradients() {
        let mut rng = Rng::seed_from(2);
        let a = Mat::randn(3, 4, 1.0, &mut rng);
        let b = Mat::randn(5, 4, 1.0, &mut rng);
        let w = Mat::randn(3, 5, 1.0, &mut rng);
        check_grads(&[a, b], |t, ids| {
            let y = t.matmul_nt(ids[0], ids[1]);
            t.weighted_sum(y, w.clone())
        });
    }

    #[test]
    fn add_and_broadcast_gradients() {
        let mut rng = Rng::seed_from(3);
        let a = Mat::randn(3, 4, 1.0, &mut rng);
        let b = Mat::randn(3, 4, 1.0, &mut rng);
        let bias = Mat::randn(1, 4, 1.0, &mut rng);
        let w = Mat::randn(3, 4, 1.0, &mut rng);
        check_grads(&[a, b, bias], |t, ids| {
            let s = t.add(ids[0], ids[1]);
            let y = t.add_row_broadcast(s, ids[2]);
            t.weighted_sum(y, w.clone())
        });
    }

    #[test]
    fn scale_scalar_mul_tanh_gradients() {
        let mut rng = Rng::seed_from(4);
        let x = Mat::randn(3, 3, 1.0, &mut rng);
        let s = Mat::scalar(0.7);
        let w = Mat::randn(3, 3, 1.0, &mut rng);
        check_grads(&[x, s], |t, ids| {
            let a = t.scale(ids[0], 1.5);
            let b = t.scalar_mul(a, ids[1]);
            let c = t.tanh(b);
            t.weighted_sum(c, w.clone())
        });
    }

    #[test]
    fn softmax_rows_gradients() {
        let mut rng = Rng::seed_from(5);
        let x = Mat::randn(4, 5, 1.0, &mut rng);
        let w = Mat::randn(4, 5, 1.0, &mut rng);
        check_grads(&[x], |t, ids| {
            let y = t.softmax_rows(ids[0]);
            t.weighted_sum(y, w.clone())
        });
    }

    #[test]
    fn log_softmax_rows_gradients() {
        let mut rng = Rng::seed_from(6);
        let x = Mat::randn(4, 5, 1.0, &mut rng);
        let w = Mat::randn(4, 5, 1.0, &mut rng);
        check_grads(&[x], |t, ids| {
            let y = t.log_softmax_rows(ids[0]);
            t.weighted_sum(y, w.clone())
        });
    }

    #[test]
    fn shift_and_gather_gradients() {
        let mut rng = Rng::seed_from(7);
        let table = Mat::randn(6, 3, 1.0, &mut rng);
        let w = Mat::randn(4, 3, 1.0, &mut rng);
        let idx = vec![2, 2, 0, 5];
        check_grads(&[table], |t, ids| {
            let g = t.gather_rows(ids[0], &idx);
            let s = t.shift_rows_down(g);
            t.weighted_sum(s, w.clone())
        });
    }

    #[test]
    fn add_const_and_affine_combine_gradients() {
        let mut rng = Rng::seed_from(8);
        let x = Mat::randn(3, 3, 1.0, &mut rng);
        let y = Mat::randn(3, 3, 1.0, &mut rng);
        let c = Mat::randn(3, 3, 1.0, &mut rng);
        let wx = Mat::randn(3, 3, 1.0, &mut rng);
        let wy = Mat::randn(3, 3, 1.0, &mut rng);
        check_grads(&[x, y], |t, ids| {
            let xc = t.add_const(ids[0], &c);
            let sx = t.weighted_sum(xc, wx.clone());
            let sy = t.weighted_sum(ids[1], wy.clone());
            t.affine_combine(&[(sx, 0.25), (sy, -1.5)])
        });
    }

    #[test]
    fn custom_scalar_routes_external_gradient() {
        // f(x) = sum(x^2) with value and gradient supplied externally.
        let x = Mat::from_vec(2, 2, vec![1.0, -2.0, 3.0, 0.5]);
        let mut tape = Tape::new();
        let xid = tape.leaf(x.clone());
        let value: f64 = x.as_slice().iter().map(|v| v * v).sum();
        let grad = x.scale(2.0);
        let loss = tape.custom_scalar(xid, value, grad);
        let scaled = tape.affine_combine(&[(loss, 0.5)]);
        let grads = tape.backward(scaled);
        let gx = grads.get(xid).unwrap();
        for (g, v) in gx.as_slice().iter().zip(x.as_slice()) {
            assert!((g - v).abs() < 1e-15);
        }
    }

    #[test]
    fn diamond_graph_accumulates_both_paths() {
        // y = sum(x) + sum(x) must give gradient 2 everywhere.
        let x = Mat::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let ones = Mat::from_vec(2, 2, vec![1.0; 4]);
        let mut tape = Tape::new();
        let xid = tape.leaf(x);
        let s1 = tape.weighted_sum(xid, ones.clone());
        let s2 = tape.weighted_sum(xid, ones);
        let y = tape.affine_combine(&[(s1, 1.0), (s2, 1.0)]);
        let grads = tape.backward(y);
        for g in grads.get(xid).unwrap().as_slice() {
            assert_eq!(*g, 2.0);
        }
    }

    #[test]
    fn composite_graph_gradients() {
        let mut rng = Rng::seed_from(9);
        let x = Mat::randn(4, 3, 0.8, &mut rng);
        let w1 = Mat::randn(3, 3, 0.8, &mut rng);
        let b1 = Mat::randn(1, 3, 0.5, &mut rng);
        let w2 = Mat::randn(3, 5, 0.8, &mut rng);
        let rng2 = Rng::seed_from(10);
        check_grads(&[x, w1, b1, w2], |t, ids| {
            let h = t.matmul(ids[0], ids[1]);
            let h = t.add_row_broadcast(h, ids[2]);
            let h = t.tanh(h);
            let prev = t.shift_rows_down(h);
            let h = t.add(h, prev);
            let logits = t.matmul(h, ids[3]);
            let lp = t.log_softmax_rows(logits);
            let mut r = rng2.clone();
            scalarize(t, lp, &mut r)
        });
    }
}
