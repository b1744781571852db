//! Minimal reverse-mode automatic differentiation over dense matrices.
//!
//! Every value is an `Array2<f64>`; row vectors are `1 × n`. A [`Tape`] records
//! operations in execution order and [`Tape::backward`] walks it in reverse.

use ndarray::{s, Array1, Array2, Axis};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    /// `a · b`
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulBt(Var, Var),
    /// `a + 1·bias` with `bias` a `1 × n` row.
    AddRow(Var, Var),
    RowSoftmax(Var),
    SliceCols(Var, usize, usize),
    ConcatCols(Vec<Var>),
    MeanRows(Var),
    /// Mean softmax cross-entropy of `logits` rows against class labels. The
    /// stored matrix holds the softmax probabilities.
    CrossEntropy(Var, Vec<usize>, Array2<f64>),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node, `None` where unreachable.
#[derive(Debug)]
pub struct Grads(Vec<Option<Array2<f64>>>);

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.0[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Array2<f64>> {
        self.0[v.0].take()
    }
}

pub fn row_softmax(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
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

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(v, Op::MatMulBt(a, b))
    }

    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        assert_eq!(self.value(bias).nrows(), 1, "bias must be a row vector");
        let v = self.value(a) + self.value(bias);
        self.push(v, Op::AddRow(a, bias))
    }

    pub fn row_softmax(&mut self, a: Var) -> Var {
        let v = row_softmax(self.value(a));
        self.push(v, Op::RowSoftmax(a))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice(s![.., start..end]).to_owned();
        self.push(v, Op::SliceCols(a, start, end))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).mean_axis(Axis(0)).expect("non-empty").insert_axis(Axis(0));
        self.push(v, Op::MeanRows(a))
    }

    /// Mean cross-entropy over the rows of `logits`; produces a `1 × 1` node.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Var {
        let z = self.value(logits);
        assert_eq!(z.nrows(), labels.len());
        let probs = row_softmax(z);
        let mut loss = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let row = z.row(i);
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - row[y];
        }
        loss /= labels.len() as f64;
        self.push(Array2::from_elem((1, 1), loss), Op::CrossEntropy(logits, labels.to_vec(), probs))
    }

    /// Reverse sweep from the scalar node `out`.
    pub fn backward(&self, out: Var) -> Grads {
        assert_eq!(self.value(out).dim(), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(Array2::ones((1, 1)));

        fn acc(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=out.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    acc(&mut grads, *a, g.dot(&self.value(*b).t()));
                    acc(&mut grads, *b, self.value(*a).t().dot(&g));
                }
                Op::MatMulBt(a, b) => {
                    acc(&mut grads, *a, g.dot(self.value(*b)));
                    acc(&mut grads, *b, g.t().dot(self.value(*a)));
                }
                Op::AddRow(a, bias) => {
                    acc(&mut grads, *bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, *a, g);
                }
                Op::RowSoftmax(a) => {
                    let y = &node.value;
                    let mut dx = y * &g;
                    let dots: Array1<f64> = dx.sum_axis(Axis(1));
                    for (mut row, (yr, d)) in dx.axis_iter_mut(Axis(0)).zip(y.axis_iter(Axis(0)).zip(dots.iter())) {
                        row.scaled_add(-d, &yr);
                    }
                    acc(&mut grads, *a, dx);
                }
                Op::SliceCols(a, start, end) => {
                    let parent = &self.nodes[a.0].value;
                    let slot = grads[a.0].get_or_insert_with(|| Array2::zeros(parent.raw_dim()));
                    let mut view = slot.slice_mut(s![.., *start..*end]);
                    view += &g;
                }
                Op::ConcatCols(parts) => {
                    let mut col = 0;
                    for &p in parts {
                        let w = self.value(p).ncols();
                        acc(&mut grads, p, g.slice(s![.., col..col + w]).to_owned());
                        col += w;
                    }
                }
                Op::MeanRows(a) => {
                    let n = self.value(*a).nrows();
                    let row = g.row(0).mapv(|v| v / n as f64);
                    let full = row.broadcast((n, row.len())).expect("broadcast").to_owned();
                    acc(&mut grads, *a, full);
                }
                Op::CrossEntropy(logits, labels, probs) => {
                    let scale = g[[0, 0]] / labels.len() as f64;
                    let mut d = probs.clone();
                    for (i, &y) in labels.iter().enumerate() {
                        d[[i, y]] -= 1.0;
                    }
                    d.mapv_inplace(|v| v * scale);
                    acc(&mut grads, *logits, d);
                }
            }
        }
        Grads(grads)
    }
}
