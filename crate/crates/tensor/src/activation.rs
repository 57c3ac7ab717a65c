//! Pointwise activations and normalized exponentials.

use std::rc::Rc;

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tensor {
    pub fn sigmoid(&self) -> Result<Tensor> {
        self.unary("sigmoid", sigmoid_scalar, |_, y| y * (1.0 - y))
    }

    pub fn tanh(&self) -> Result<Tensor> {
        self.unary("tanh", f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn relu(&self) -> Result<Tensor> {
        self.unary("relu", |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    /// `x * sigmoid(x)`.
    pub fn silu(&self) -> Result<Tensor> {
        self.unary(
            "silu",
            |x| x * sigmoid_scalar(x),
            |x, _| {
                let s = sigmoid_scalar(x);
                s * (1.0 + x * (1.0 - s))
            },
        )
    }

    /// ELU with unit scale.
    pub fn elu(&self) -> Result<Tensor> {
        self.unary(
            "elu",
            |x| if x > 0.0 { x } else { x.exp_m1() },
            |x, y| if x > 0.0 { 1.0 } else { y + 1.0 },
        )
    }

    /// `max(0, x) + slope * min(0, x)`.
    pub fn leaky_relu(&self, slope: f64) -> Result<Tensor> {
        if !(0.0..1.0).contains(&slope) || slope == 0.0 {
            return Err(TensorError::invalid(
                "leaky_relu",
                format!("slope {slope} outside (0,1)"),
            ));
        }
        self.unary(
            "leaky_relu",
            move |x| x.max(0.0) + slope * x.min(0.0),
            move |x, _| if x > 0.0 { 1.0 } else { slope },
        )
    }

    /// Softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        let shape = self.shape().to_vec();
        if axis >= shape.len() {
            return Err(TensorError::invalid("softmax", format!("axis {axis} of {shape:?}")));
        }
        let outer: usize = shape[..axis].iter().product();
        let mid = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out = self.to_vec();
        for o in 0..outer {
            for i in 0..inner {
                let at = |m: usize| (o * mid + m) * inner + i;
                let max = (0..mid).map(|m| out[at(m)]).fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for m in 0..mid {
                    let e = (out[at(m)] - max).exp();
                    out[at(m)] = e;
                    sum += e;
                }
                for m in 0..mid {
                    out[at(m)] /= sum;
                }
            }
        }
        Tensor::from_op("softmax", out, shape, &[self], move |g, y| {
            let mut gi = vec![0.0; g.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |m: usize| (o * mid + m) * inner + i;
                    let dot: f64 = (0..mid).map(|m| g[at(m)] * y[at(m)]).sum();
                    for m in 0..mid {
                        gi[at(m)] = y[at(m)] * (g[at(m)] - dot);
                    }
                }
            }
            vec![Some(gi)]
        })
    }

    /// Softmax of a 1-D score vector within groups: entry `e` is normalized
    /// against every entry sharing `segments[e]`. Used for per-node,
    /// per-link-type attention over edge lists.
    pub fn segment_softmax(&self, segments: Rc<Vec<usize>>, n_segments: usize) -> Result<Tensor> {
        if self.ndim() != 1 || segments.len() != self.numel() {
            return Err(TensorError::invalid(
                "segment_softmax",
                format!("scores {:?} with {} segment ids", self.shape(), segments.len()),
            ));
        }
        if let Some(&bad) = segments.iter().find(|&&s| s >= n_segments) {
            return Err(TensorError::invalid(
                "segment_softmax",
                format!("segment {bad} >= {n_segments}"),
            ));
        }
        let x = self.data();
        let mut max = vec![f64::NEG_INFINITY; n_segments];
        for (v, &s) in x.iter().zip(segments.iter()) {
            max[s] = max[s].max(*v);
        }
        let mut out: Vec<f64> = x
            .iter()
            .zip(segments.iter())
            .map(|(v, &s)| (v - max[s]).exp())
            .collect();
        let mut sum = vec![0.0; n_segments];
        for (v, &s) in out.iter().zip(segments.iter()) {
            sum[s] += v;
        }
        for (v, &s) in out.iter_mut().zip(segments.iter()) {
            *v /= sum[s];
        }
        drop(x);
        let shape = self.shape().to_vec();
        Tensor::from_op("segment_softmax", out, shape, &[self], move |g, y| {
            let mut dot = vec![0.0; n_segments];
            for ((gv, yv), &s) in g.iter().zip(y).zip(segments.iter()) {
                dot[s] += gv * yv;
            }
            let gi = g
                .iter()
                .zip(y)
                .zip(segments.iter())
                .map(|((gv, yv), &s)| yv * (gv - dot[s]))
                .collect();
            vec![Some(gi)]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let x = Tensor::new(vec![0.7; 4], &[4]).unwrap();
        let y = x.softmax(0).unwrap();
        for v in y.to_vec() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn leaky_relu_matches_definition() {
        let x = Tensor::new(vec![-2.0, 3.0, 0.0], &[3]).unwrap();
        let y = x.leaky_relu(0.2).unwrap().to_vec();
        assert!((y[0] + 0.4).abs() < 1e-15);
        assert_eq!(y[1], 3.0);
        assert_eq!(y[2], 0.0);
        assert!(x.leaky_relu(1.5).is_err());
    }

    #[test]
    fn elu_is_zero_at_origin() {
        let y = Tensor::new(vec![0.0], &[1]).unwrap().elu().unwrap();
        assert_eq!(y.item(), 0.0);
    }

    #[test]
    fn segment_softmax_normalizes_each_group() {
        let x = Tensor::new(vec![1.0, 2.0, 3.0, -1.0, 0.5], &[5]).unwrap();
        let seg = Rc::new(vec![0, 0, 1, 1, 1]);
        let y = x.segment_softmax(seg, 3).unwrap().to_vec();
        assert!((y[0] + y[1] - 1.0).abs() < 1e-12);
        assert!((y[2] + y[3] + y[4] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_is_stable_for_large_inputs() {
        let y = Tensor::new(vec![-800.0, 800.0], &[2])
            .unwrap()
            .sigmoid()
            .unwrap()
            .to_vec();
        assert_eq!(y, vec![0.0, 1.0]);
    }
}
