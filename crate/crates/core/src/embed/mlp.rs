//! Feed-forward encoder over sparse inputs with a logistic training head.
//!
//! Hidden layers use ReLU; the last encoder layer is linear and its output
//! is the representation. The head (one logistic unit) only exists to
//! train the stack and is dropped from the representation.

use ndarray::{Array1, Array2, Axis};
use rand::Rng as _;

use crate::data::SparseVector;
use crate::linalg::sigmoid;
use crate::optim::{Adam, Moments};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `in x out`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn xavier(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Dense {
            weight: Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-limit..limit)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn zeros_like(&self) -> Self {
        Dense {
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.len()),
        }
    }

    fn len(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn slot(&self, i: usize) -> (bool, usize) {
        if i < self.weight.len() {
            (true, i)
        } else {
            (false, i - self.weight.len())
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub head: Dense,
}

/// Gradient with the same shapes as the network.
pub type Gradients = Mlp;

struct Activations {
    /// Pre-activations of every layer (`batch x width`).
    pre: Vec<Array2<f64>>,
    /// Layer outputs after the nonlinearity (the last one is linear).
    post: Vec<Array2<f64>>,
    prob: Array1<f64>,
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

impl Mlp {
    /// `dims = [input, hidden..., output]`.
    pub fn new(dims: &[usize], rng: &mut Rng) -> Self {
        assert!(
            dims.len() >= 2,
            "need at least an input and an output width"
        );
        let layers = dims
            .windows(2)
            .map(|w| Dense::xavier(w[0], w[1], rng))
            .collect();
        let head = Dense::xavier(*dims.last().unwrap(), 1, rng);
        Mlp { layers, head }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.ncols()
    }

    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.weight.ncols()))
            .collect()
    }

    fn sparse_first_layer(&self, batch: &[&SparseVector]) -> Array2<f64> {
        let first = &self.layers[0];
        let mut z = Array2::zeros((batch.len(), first.weight.ncols()));
        for (mut row, x) in z.outer_iter_mut().zip(batch) {
            row.assign(&first.bias);
            for (j, v) in x.iter() {
                if j < first.weight.nrows() {
                    row.scaled_add(v, &first.weight.row(j));
                }
            }
        }
        z
    }

    fn forward(&self, batch: &[&SparseVector]) -> Activations {
        let last = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        let mut z = self.sparse_first_layer(batch);
        for l in 0..self.layers.len() {
            if l > 0 {
                z = post[l - 1_usize].dot(&self.layers[l].weight) + &self.layers[l].bias;
            }
            let h = if l == last { z.clone() } else { z.mapv(relu) };
            pre.push(z.clone());
            post.push(h);
        }
        let logits = post[last].dot(&self.head.weight).column(0).to_owned() + self.head.bias[0];
        Activations {
            pre,
            post,
            prob: logits.mapv(sigmoid),
        }
    }

    /// Representation of one input (output of the last encoder layer).
    pub fn encode(&self, x: &SparseVector) -> Vec<f64> {
        let acts = self.forward(&[x]);
        acts.post.last().unwrap().row(0).to_vec()
    }

    fn bce(prob: &Array1<f64>, targets: &[f64]) -> f64 {
        const EPS: f64 = 1e-12;
        let n = targets.len() as f64;
        prob.iter()
            .zip(targets)
            .map(|(&p, &y)| -(y * p.max(EPS).ln() + (1.0 - y) * (1.0 - p).max(EPS).ln()))
            .sum::<f64>()
            / n
    }

    /// Mean binary cross-entropy of the head's prediction.
    pub fn loss(&self, batch: &[&SparseVector], targets: &[f64]) -> f64 {
        Self::bce(&self.forward(batch).prob, targets)
    }

    pub fn loss_and_grad(&self, batch: &[&SparseVector], targets: &[f64]) -> (f64, Gradients) {
        let acts = self.forward(batch);
        let loss = Self::bce(&acts.prob, targets);
        let n = targets.len() as f64;
        let dlogit = Array1::from_iter(acts.prob.iter().zip(targets).map(|(&p, &y)| (p - y) / n));
        let last = self.layers.len() - 1;
        let dlogit_col = dlogit.view().insert_axis(Axis(1));
        let mut grads_layers: Vec<Dense> = self.layers.iter().map(Dense::zeros_like).collect();
        let head = Dense {
            weight: acts.post[last]
                .t()
                .dot(&dlogit_col)
                .as_standard_layout()
                .into_owned(),
            bias: Array1::from_elem(1, dlogit.sum()),
        };
        // d loss / d (output of last layer)
        let mut delta = dlogit_col.dot(&self.head.weight.t());
        for l in (0..self.layers.len()).rev() {
            if l != last {
                delta.zip_mut_with(&acts.pre[l], |d, &z| {
                    if z <= 0.0 {
                        *d = 0.0
                    }
                });
            }
            grads_layers[l].bias = delta.sum_axis(Axis(0));
            if l > 0 {
                grads_layers[l].weight = acts.post[l - 1]
                    .t()
                    .dot(&delta)
                    .as_standard_layout()
                    .into_owned();
                delta = delta.dot(&self.layers[l].weight.t());
            } else {
                let gw = &mut grads_layers[0].weight;
                for (drow, x) in delta.outer_iter().zip(batch) {
                    for (j, v) in x.iter() {
                        if j < gw.nrows() {
                            gw.row_mut(j).scaled_add(v, &drow);
                        }
                    }
                }
            }
        }
        (
            loss,
            Mlp {
                layers: grads_layers,
                head,
            },
        )
    }

    fn tensors(&self) -> impl Iterator<Item = &Dense> {
        self.layers.iter().chain(std::iter::once(&self.head))
    }

    pub fn param_count(&self) -> usize {
        self.tensors().map(Dense::len).sum()
    }

    fn locate(&self, mut i: usize) -> (usize, bool, usize) {
        for (t, d) in self.tensors().enumerate() {
            if i < d.len() {
                let (is_w, j) = d.slot(i);
                return (t, is_w, j);
            }
            i -= d.len();
        }
        panic!("parameter index out of range");
    }

    fn tensor_mut(&mut self, t: usize) -> &mut Dense {
        if t < self.layers.len() {
            &mut self.layers[t]
        } else {
            &mut self.head
        }
    }

    /// Flat parameter access: layers in order (weights row-major, then
    /// bias), then the head.
    pub fn param(&self, i: usize) -> f64 {
        let (t, is_w, j) = self.locate(i);
        let d = self.tensors().nth(t).unwrap();
        if is_w {
            d.weight.as_slice().unwrap()[j]
        } else {
            d.bias[j]
        }
    }

    pub fn set_param(&mut self, i: usize, value: f64) {
        let (t, is_w, j) = self.locate(i);
        let d = self.tensor_mut(t);
        if is_w {
            d.weight.as_slice_mut().unwrap()[j] = value;
        } else {
            d.bias[j] = value;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .all(|d| d.weight.iter().chain(d.bias.iter()).all(|v| v.is_finite()))
    }
}

/// Adam state for every tensor of an [`Mlp`].
pub struct MlpOptimizer {
    adam: Adam,
    moments: Vec<(Moments, Moments)>,
}

impl MlpOptimizer {
    pub fn new(net: &Mlp, adam: Adam) -> Self {
        let moments = net
            .tensors()
            .map(|d| (Moments::zeros(d.weight.len()), Moments::zeros(d.bias.len())))
            .collect();
        MlpOptimizer { adam, moments }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) {
        self.adam.begin_step();
        let n_layers = net.layers.len();
        for (t, (mw, mb)) in self.moments.iter_mut().enumerate() {
            let (d, g) = if t < n_layers {
                (&mut net.layers[t], &grads.layers[t])
            } else {
                (&mut net.head, &grads.head)
            };
            self.adam.update(
                mw,
                d.weight.as_slice_mut().unwrap(),
                g.weight.as_slice().unwrap(),
            );
            self.adam.update(
                mb,
                d.bias.as_slice_mut().unwrap(),
                g.bias.as_slice().unwrap(),
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn batch() -> (Vec<SparseVector>, Vec<f64>) {
        let xs = vec![
            SparseVector::new(vec![0, 2, 5], vec![0.5, 1.0, -0.3]).unwrap(),
            SparseVector::new(vec![1, 3], vec![0.8, 0.6]).unwrap(),
            SparseVector::new(vec![0, 4, 5], vec![-0.7, 0.2, 0.9]).unwrap(),
        ];
        (xs, vec![1.0, 0.0, 1.0])
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut net = Mlp::new(&[6, 4, 4, 4, 3], &mut substream(5, "init"));
        let (xs, ys) = batch();
        let refs: Vec<&SparseVector> = xs.iter().collect();
        let (_, grads) = net.loss_and_grad(&refs, &ys);
        let total = net.param_count();
        // one probe in the sparse layer, the middle layers, a bias and the head
        let probes = [2, 30, 47, 70, total - 2];
        let h = 1e-5;
        for &i in &probes {
            let orig = net.param(i);
            net.set_param(i, orig + h);
            let up = net.loss(&refs, &ys);
            net.set_param(i, orig - h);
            let down = net.loss(&refs, &ys);
            net.set_param(i, orig);
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.param(i);
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-8);
            assert!(
                rel < 1e-4,
                "param {i}: analytic {analytic} numeric {numeric}"
            );
        }
    }

    #[test]
    fn forward_is_finite() {
        let net = Mlp::new(&[6, 5, 5, 5, 4], &mut substream(1, "init"));
        let (xs, _) = batch();
        for x in &xs {
            let e = net.encode(x);
            assert_eq!(e.len(), 4);
            assert!(e.iter().all(|v| v.is_finite()));
        }
        assert_eq!(net.dims(), vec![6, 5, 5, 5, 4]);
    }
}
