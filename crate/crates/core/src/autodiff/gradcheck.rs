use std::collections::HashMap;

use super::graph::{Graph, NodeId};
use super::tensor::{ParamStore, Tensor};
use crate::error::Result;

pub const DEFAULT_GRAD_CHECK_EPSILON: f64 = 1e-5;

/// Largest relative error between backprop gradients and central finite
/// differences over every parameter coordinate. The relative error of a
/// pair `(a, b)` is `|a − b| / max(|a|, |b|, 1e-8)`.
///
/// Parameters are restored bit-exactly before returning.
pub fn grad_check(
    graph: &mut Graph,
    params: &mut ParamStore,
    inputs: &HashMap<String, Tensor>,
    loss: NodeId,
    epsilon: f64,
) -> Result<f64> {
    grad_check_steps(graph, params, inputs, loss, &[epsilon])
}

/// Like [`grad_check`], but each coordinate is scored by the best of several
/// finite-difference steps. A large step suffers truncation error near
/// piecewise-linear kinks, a small one suffers cancellation when the loss is
/// large relative to the gradient; a wrong derivative fails at every step.
pub fn grad_check_steps(
    graph: &mut Graph,
    params: &mut ParamStore,
    inputs: &HashMap<String, Tensor>,
    loss: NodeId,
    steps: &[f64],
) -> Result<f64> {
    assert!(!steps.is_empty(), "at least one step required");
    graph.evaluate(params, inputs)?;
    let grads = graph.backward(loss, params)?;
    let mut worst: f64 = 0.0;
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        for k in 0..params.get(id).len() {
            let orig = params.get(id).data()[k];
            let analytic = grads.param(id).data()[k];
            let mut best = f64::INFINITY;
            for &epsilon in steps {
                params.get_mut(id).data_mut()[k] = orig + epsilon;
                graph.evaluate(params, inputs)?;
                let plus = graph.value(loss).expect("evaluated").item();
                params.get_mut(id).data_mut()[k] = orig - epsilon;
                graph.evaluate(params, inputs)?;
                let minus = graph.value(loss).expect("evaluated").item();
                params.get_mut(id).data_mut()[k] = orig;
                let numeric = (plus - minus) / (2.0 * epsilon);
                let denom = analytic.abs().max(numeric.abs()).max(1e-8);
                best = best.min((analytic - numeric).abs() / denom);
            }
            worst = worst.max(best);
        }
    }
    graph.evaluate(params, inputs)?;
    Ok(worst)
}
