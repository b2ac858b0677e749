//! Stacked graph-convolution network predicting per-vertex offsets.

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{GraphConvLayer, MeshGraph};

/// Hidden layers use ReLU and, when widths match, a skip connection; the
/// last layer is linear and starts at zero so the initial offsets vanish.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnNet {
    pub layers: Vec<GraphConvLayer>,
}

/// Forward intermediates needed by the backward pass.
pub(crate) struct Cache {
    /// `P·h_{k-1}` per layer.
    propagated: Vec<DMatrix<f64>>,
    /// Pre-activation per layer.
    pre: Vec<DMatrix<f64>>,
}

impl GcnNet {
    /// `depth ≥ 1` layers mapping `in_width` to 3 through `hidden`.
    pub fn new(in_width: usize, hidden: usize, depth: usize, seed: u64) -> Self {
        assert!(depth >= 1 && hidden >= 1 && in_width >= 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(depth);
        for k in 0..depth {
            let rows = if k == 0 { in_width } else { hidden };
            let last = k + 1 == depth;
            let cols = if last { 3 } else { hidden };
            let weights = if last {
                DMatrix::zeros(rows, cols)
            } else {
                let bound = (6.0 / (rows + cols) as f64).sqrt();
                DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
            };
            layers.push(GraphConvLayer {
                weights,
                bias: Some(DVector::zeros(cols)),
            });
        }
        GcnNet { layers }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.out_width()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.as_ref().expect("bias present").iter());
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut k = 0;
        for l in &mut self.layers {
            let n = l.weights.len();
            l.weights.as_mut_slice().copy_from_slice(&flat[k..k + n]);
            k += n;
            let b = l.bias.as_mut().expect("bias present");
            let m = b.len();
            b.as_mut_slice().copy_from_slice(&flat[k..k + m]);
            k += m;
        }
    }

    pub(crate) fn forward(&self, graph: &MeshGraph, input: &DMatrix<f64>) -> (DMatrix<f64>, Cache) {
        let mut h = input.clone();
        let mut cache = Cache {
            propagated: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
        };
        for (k, l) in self.layers.iter().enumerate() {
            let ph = graph.propagate(&h);
            let mut z = &ph * &l.weights;
            let b = l.bias.as_ref().expect("bias present");
            for mut row in z.row_iter_mut() {
                row += b.transpose();
            }
            let next = if k + 1 == self.layers.len() {
                z.clone()
            } else {
                let a = z.map(|v| v.max(0.0));
                if a.ncols() == h.ncols() {
                    a + &h
                } else {
                    a
                }
            };
            cache.propagated.push(ph);
            cache.pre.push(z);
            h = next;
        }
        (h, cache)
    }

    /// Parameter gradient (flattened as in `params`) given `d_out`.
    pub(crate) fn backward(&self, graph: &MeshGraph, cache: &Cache, d_out: &DMatrix<f64>) -> Vec<f64> {
        let depth = self.layers.len();
        let mut per_layer = vec![(DMatrix::zeros(0, 0), DVector::zeros(0)); depth];
        let mut d_h = d_out.clone();
        for k in (0..depth).rev() {
            let l = &self.layers[k];
            let d_z = if k + 1 == depth {
                d_h.clone()
            } else {
                d_h.zip_map(&cache.pre[k], |g, z| if z > 0.0 { g } else { 0.0 })
            };
            let d_w = cache.propagated[k].transpose() * &d_z;
            let d_b = DVector::from_iterator(d_z.ncols(), d_z.column_iter().map(|c| c.sum()));
            per_layer[k] = (d_w, d_b);
            if k > 0 {
                let mut d_prev = graph.propagate(&(&d_z * l.weights.transpose()));
                let residual = k + 1 < depth && l.in_width() == l.out_width();
                if residual {
                    d_prev += &d_h;
                }
                d_h = d_prev;
            }
        }
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in per_layer {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deform::graph::make_icosphere;
    use crate::geom::Vec3;

    #[test]
    fn zero_last_layer_gives_zero_offsets() {
        let g = make_icosphere(1, 1.0, Vec3::zeros());
        let net = GcnNet::new(3, 8, 3, 1);
        let (out, _) = net.forward(&g, g.features());
        assert_eq!(out.shape(), (g.len(), 3));
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn params_round_trip() {
        let mut net = GcnNet::new(4, 5, 3, 2);
        let p: Vec<f64> = (0..net.param_count()).map(|k| k as f64 * 0.01).collect();
        net.set_params(&p);
        assert_eq!(net.params(), p);
        assert_eq!(net.param_count(), 4 * 5 + 5 + 5 * 5 + 5 + 5 * 3 + 3);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let g = make_icosphere(1, 1.0, Vec3::zeros());
        let mut net = GcnNet::new(3, 6, 3, 4);
        // Non-zero last layer so every parameter influences the output.
        let mut p = net.params();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for v in &mut p {
            *v += rng.random_range(-0.3..0.3);
        }
        net.set_params(&p);
        let x = g.features().clone();
        // Objective: sum of out ⊙ r for a fixed random r.
        let r = DMatrix::from_fn(g.len(), 3, |_, _| rng.random_range(-1.0..1.0));
        let objective = |net: &GcnNet| net.forward(&g, &x).0.component_mul(&r).sum();
        let (_, cache) = net.forward(&g, &x);
        let analytic = net.backward(&g, &cache, &r);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for k in (0..p.len()).step_by(7) {
            let mut q = p.clone();
            q[k] += h;
            let mut up = net.clone();
            up.set_params(&q);
            q[k] -= 2.0 * h;
            let mut down = net.clone();
            down.set_params(&q);
            let numeric = (objective(&up) - objective(&down)) / (2.0 * h);
            worst = worst.max((analytic[k] - numeric).abs() / numeric.abs().max(1e-6));
        }
        assert!(worst < 1e-5, "{worst}");
    }
}
