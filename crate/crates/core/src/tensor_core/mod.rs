//! Dense tensors, the sequential layer set and reverse-mode gradients with
//! respect to an additive noise tensor.

mod layer;
mod loss;
mod tape;
mod tensor;

pub use layer::{forward_layer, Layer, LayerKind, LayerParams, LayerSpec};
pub use loss::{cross_entropy, cross_entropy_with_grad, softmax};
pub use tape::{Gradients, NodeId, Tape};
pub use tensor::Tensor;

use crate::error::Result;

/// Output of [`grad_wrt_noise`].
#[derive(Debug, Clone)]
pub struct NoiseGradient {
    pub loss: f64,
    pub logits: Tensor,
    /// `d loss / d n`, shaped like the noise.
    pub grad: Tensor,
}

/// Runs `a + n` through `cloud_layers`, evaluates `loss_fn` on the logits and
/// returns the gradient of the loss with respect to `n`.
///
/// `loss_fn` returns the loss value and its gradient w.r.t. the logits. The
/// layer parameters are only read.
pub fn grad_wrt_noise<F>(
    cloud_layers: &[Layer],
    a: &Tensor,
    n: &Tensor,
    loss_fn: F,
) -> Result<NoiseGradient>
where
    F: FnOnce(&Tensor) -> Result<(f64, Tensor)>,
{
    let mut tape = Tape::new();
    let a_node = tape.leaf(a.clone());
    let n_node = tape.leaf(n.clone());
    let noisy = tape.add(a_node, n_node)?;
    let out = tape.layers(cloud_layers, noisy)?;
    let logits = tape.value(out).clone();
    let (loss, seed) = loss_fn(&logits)?;
    if !loss.is_finite() {
        return Err(crate::Error::NonFinite("loss".into()));
    }
    let mut grads = tape.backward(out, seed, false)?;
    let grad = grads
        .take(n_node)
        .expect("noise leaf is always reachable through the adder");
    Ok(NoiseGradient { loss, logits, grad })
}

/// Evaluates `layers` in order.
pub fn forward(layers: &[Layer], input: &Tensor) -> Result<Tensor> {
    let mut iter = layers.iter();
    let Some(first) = iter.next() else {
        return Ok(input.clone());
    };
    iter.try_fold(forward_layer(first, input)?, |x, layer| {
        forward_layer(layer, &x)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sum_loss(logits: &Tensor) -> Result<(f64, Tensor)> {
        Ok((logits.sum(), Tensor::full(logits.shape(), 1.0)))
    }

    #[test]
    fn identity_cloud_gives_all_ones_gradient() {
        let flatten = Layer::new(LayerSpec::new("id", LayerKind::Flatten), &[5], None).unwrap();
        let a = Tensor::from_vec(vec![1.0, -2.0, 0.5, 3.0, 0.0]);
        let n = Tensor::from_vec(vec![0.1, 0.2, -0.3, 0.4, 0.5]);
        let g = grad_wrt_noise(&[flatten], &a, &n, sum_loss).unwrap();
        assert_eq!(g.grad.data(), &[1.0; 5]);
    }

    #[test]
    fn fc_gradient_is_weight_column_sums() {
        let w: Vec<f32> = vec![1.0, 2.0, -1.0, 0.5, 0.25, 4.0];
        let fc = Layer::new(
            LayerSpec::new(
                "fc",
                LayerKind::Fc {
                    in_features: 3,
                    out_features: 2,
                },
            ),
            &[3],
            Some(LayerParams {
                weight: Tensor::new(vec![2, 3], w).unwrap(),
                bias: Tensor::from_vec(vec![0.3, -0.3]),
            }),
        )
        .unwrap();
        let a = Tensor::from_vec(vec![0.2, 0.4, 0.6]);
        let n = Tensor::from_vec(vec![-1.0, 1.0, 2.0]);
        let g = grad_wrt_noise(&[fc], &a, &n, sum_loss).unwrap();
        assert_eq!(g.grad.data(), &[1.5, 2.25, 3.0]);
    }

    #[test]
    fn noise_gradient_equals_gradient_at_noisy_activation() {
        let relu = Layer::new(LayerSpec::new("r", LayerKind::Relu), &[4], None).unwrap();
        let a = Tensor::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let n = Tensor::from_vec(vec![0.5, 1.0, -1.0, 0.25]);
        let layers = [relu];
        let via_noise = grad_wrt_noise(&layers, &a, &n, sum_loss).unwrap();

        let mut tape = Tape::new();
        let noisy = tape.leaf(a.add(&n).unwrap());
        let out = tape.layers(&layers, noisy).unwrap();
        let seed = Tensor::full(tape.value(out).shape(), 1.0);
        let direct = tape.backward(out, seed, false).unwrap();
        assert_eq!(
            via_noise.grad.to_le_bytes(),
            direct.wrt(noisy).unwrap().to_le_bytes()
        );
    }

    #[test]
    fn nonfinite_loss_is_an_error() {
        let flatten = Layer::new(LayerSpec::new("id", LayerKind::Flatten), &[2], None).unwrap();
        let a = Tensor::zeros(&[2]);
        let res = grad_wrt_noise(&[flatten], &a, &a, |l| {
            Ok((f64::NAN, Tensor::zeros(l.shape())))
        });
        assert!(matches!(res, Err(crate::Error::NonFinite(_))));
    }
}
