use super::{bce_loss_grad, ModelParams};
use crate::codec::{PromptEncoding, TargetVector};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

const PROJECTIONS: usize = 8;
const COORDS_PER_PROJECTION: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub max_abs_analytic: f64,
    pub max_abs_numeric: f64,
    pub projections: usize,
}

fn loss_at(params: &ModelParams, sample: &(PromptEncoding, TargetVector)) -> Result<f64> {
    let cache = params.forward_cached(&sample.0.tokens.ids)?;
    Ok(bce_loss_grad(&cache.logits, &sample.1)?.0)
}

fn analytic(params: &ModelParams, sample: &(PromptEncoding, TargetVector)) -> Result<ModelParams> {
    let cache = params.forward_cached(&sample.0.tokens.ids)?;
    let (_, dlogits) = bce_loss_grad(&cache.logits, &sample.1)?;
    let mut grads = params.zeros_like();
    params.backward(&cache, &dlogits, &mut grads);
    Ok(grads)
}

/// Compares the backward pass against central differences along random
/// ±1 directions, each supported on 256 parameter coordinates.
pub fn grad_check(
    params: &ModelParams,
    sample: &(PromptEncoding, TargetVector),
    epsilon: f64,
) -> Result<GradCheckReport> {
    grad_check_with(params, sample, epsilon, analytic)
}

/// [`grad_check`] with a caller-supplied gradient routine.
pub fn grad_check_with<F>(
    params: &ModelParams,
    sample: &(PromptEncoding, TargetVector),
    epsilon: f64,
    gradient: F,
) -> Result<GradCheckReport>
where
    F: Fn(&ModelParams, &(PromptEncoding, TargetVector)) -> Result<ModelParams>,
{
    if !(1e-6..=1e-3).contains(&epsilon) {
        return Err(Error::Model(format!("grad_check epsilon {epsilon} outside [1e-6, 1e-3]")));
    }
    let grads = gradient(params, sample)?;
    let total = params.parameter_count();
    let flat_grad: Vec<f64> = grads.tensors().iter().flat_map(|(_, t)| t.iter().copied()).collect();
    let mut rng = SplitMix64::new(0x6772_6164);

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        max_abs_analytic: 0.0,
        max_abs_numeric: 0.0,
        projections: PROJECTIONS,
    };
    for _ in 0..PROJECTIONS {
        let mut coords: Vec<usize> = (0..total).collect();
        rng.shuffle(&mut coords);
        coords.truncate(COORDS_PER_PROJECTION.min(total));
        let direction: Vec<(usize, f64)> = coords
            .into_iter()
            .map(|i| (i, if rng.next_u64() & 1 == 0 { 1.0 } else { -1.0 }))
            .collect();

        let analytic: f64 = direction.iter().map(|&(i, s)| s * flat_grad[i]).sum();
        let plus = loss_at(&perturbed(params, &direction, epsilon), sample)?;
        let minus = loss_at(&perturbed(params, &direction, -epsilon), sample)?;
        let numeric = (plus - minus) / (2.0 * epsilon);

        let scale = analytic.abs().max(numeric.abs()).max(1e-8);
        report.max_relative_error = report.max_relative_error.max((analytic - numeric).abs() / scale);
        report.max_abs_analytic = report.max_abs_analytic.max(analytic.abs());
        report.max_abs_numeric = report.max_abs_numeric.max(numeric.abs());
    }
    Ok(report)
}

fn perturbed(params: &ModelParams, direction: &[(usize, f64)], step: f64) -> ModelParams {
    let mut out = params.clone();
    let mut tensors = out.tensors_mut();
    let mut bounds = Vec::with_capacity(tensors.len());
    let mut start = 0;
    for (_, t) in &tensors {
        bounds.push(start);
        start += t.len();
    }
    for &(flat, sign) in direction {
        let idx = bounds.partition_point(|&b| b <= flat) - 1;
        tensors[idx].1[flat - bounds[idx]] += sign * step;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{build_classification_targets, LossScope};
    use crate::model::ModelConfig;
    use crate::template::CharSpan;
    use crate::tokenizer::TokenSeq;

    fn sample(len: usize) -> (PromptEncoding, TargetVector) {
        let ids: Vec<u32> = (0..len as u32).map(|i| 2 + (i * 7) % 20).collect();
        let tokens = TokenSeq {
            offsets: (0..len - 2).map(|j| CharSpan::new(j, j + 1)).collect(),
            ids,
        };
        let enc = PromptEncoding::new(tokens, vec![len - 3, len - 2]).unwrap();
        let t = build_classification_targets(&enc, 0, LossScope::FullSequence).unwrap();
        (enc, t)
    }

    fn config() -> ModelConfig {
        ModelConfig {
            vocab_size: 24,
            d_model: 16,
            layers: 1,
            heads: 2,
            d_ff: 32,
            max_length: 32,
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let p = ModelParams::init(11, config()).unwrap();
        let r = grad_check(&p, &sample(10), 1e-4).unwrap();
        assert!(r.max_relative_error < 1e-4, "{r:?}");
        assert!(r.max_abs_analytic > 1e-6);
    }

    #[test]
    fn two_layers_also_match() {
        let p = ModelParams::init(12, ModelConfig { layers: 2, heads: 4, ..config() }).unwrap();
        let r = grad_check(&p, &sample(12), 1e-5).unwrap();
        assert!(r.max_relative_error < 1e-4, "{r:?}");
    }

    #[test]
    fn corrupted_backward_is_caught() {
        let p = ModelParams::init(11, config()).unwrap();
        let r = grad_check_with(&p, &sample(10), 1e-4, |params, s| {
            let mut g = analytic(params, s)?;
            g.layers[0].w_ff1.mapv_inplace(|x| -x);
            g.head.mapv_inplace(|x| 1.5 * x);
            Ok(g)
        })
        .unwrap();
        assert!(r.max_relative_error > 1e-2, "{r:?}");
    }

    #[test]
    fn saturated_model_has_zero_gradients() {
        let mut p = ModelParams::init(11, config()).unwrap();
        // Every position's hidden state becomes the constant `final_bias`,
        // driving all logits to -100: fully original, clipped, zero gradient.
        p.final_gain.fill(0.0);
        p.final_bias.fill(1.0);
        p.head.fill(-100.0 / 16.0);
        let (enc, _) = sample(10);
        let zeros = TargetVector {
            values: vec![0.0; enc.len()],
            loss_mask: vec![true; enc.len()],
        };
        let r = grad_check(&p, &(enc, zeros), 1e-4).unwrap();
        assert!(r.max_abs_analytic < 1e-8 && r.max_abs_numeric < 1e-8, "{r:?}");
    }

    #[test]
    fn epsilon_range() {
        let p = ModelParams::init(11, config()).unwrap();
        assert!(grad_check(&p, &sample(6), 1e-2).is_err());
    }
}
