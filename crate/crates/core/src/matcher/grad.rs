use super::{MatcherError, ModelState};
use crate::losses::{cross_entropy, cross_entropy_dscore, hinge_active, hinge_with_margin, LossKind};
use crate::strategies::LearningProtocol;

fn validated(model: &ModelState, protocol: &LearningProtocol) -> Result<(), MatcherError> {
    protocol.validate()?;
    for (t, _) in &protocol.pairwise {
        model.check_tokens(&t.context, &t.pos_response)?;
        model.check_tokens(&t.context, &t.neg_response)?;
    }
    for (e, _) in &protocol.pointwise {
        model.check_tokens(&e.dialogue.context, &e.dialogue.response)?;
    }
    Ok(())
}

/// Per-instance losses of `protocol` under `model`. Inputs must be validated.
fn instance_losses(model: &ModelState, protocol: &LearningProtocol) -> Vec<f64> {
    match protocol.loss_kind {
        LossKind::HingeWithMargin => protocol
            .pairwise
            .iter()
            .map(|(t, margin)| {
                let sp = model.forward(&t.context, &t.pos_response).score;
                let sn = model.forward(&t.context, &t.neg_response).score;
                hinge_with_margin(sp, sn, *margin).expect("validated margin")
            })
            .collect(),
        LossKind::CrossEntropy | LossKind::WeightedCrossEntropy => protocol
            .pointwise
            .iter()
            .map(|(e, w)| {
                let s = model.forward(&e.dialogue.context, &e.dialogue.response).score;
                w * cross_entropy(e.label, s)
            })
            .collect(),
    }
}

/// Value of the protocol's loss `J` (a sum over its instances).
pub fn protocol_loss(model: &ModelState, protocol: &LearningProtocol) -> Result<f64, MatcherError> {
    validated(model, protocol)?;
    Ok(instance_losses(model, protocol).iter().sum())
}

/// Loss `J` and its analytic gradient with respect to the model parameters.
///
/// Margins and weights in the protocol are treated as constants.
pub fn loss_and_grad(model: &ModelState, protocol: &LearningProtocol) -> Result<(f64, Vec<f64>), MatcherError> {
    validated(model, protocol)?;
    let mut grad = vec![0.0; model.params().len()];
    let mut loss = 0.0;
    match protocol.loss_kind {
        LossKind::HingeWithMargin => {
            for (t, margin) in &protocol.pairwise {
                let fp = model.forward(&t.context, &t.pos_response);
                let fn_ = model.forward(&t.context, &t.neg_response);
                loss += hinge_with_margin(fp.score, fn_.score, *margin).expect("validated margin");
                if hinge_active(fp.score, fn_.score, *margin) {
                    model.backward(&fp, &t.context, &t.pos_response, -1.0, &mut grad);
                    model.backward(&fn_, &t.context, &t.neg_response, 1.0, &mut grad);
                }
            }
        }
        LossKind::CrossEntropy | LossKind::WeightedCrossEntropy => {
            for (e, w) in &protocol.pointwise {
                let (ctx, resp) = (&e.dialogue.context, &e.dialogue.response);
                let f = model.forward(ctx, resp);
                loss += w * cross_entropy(e.label, f.score);
                let ds = w * cross_entropy_dscore(e.label, f.score);
                model.backward(&f, ctx, resp, ds, &mut grad);
            }
        }
    }
    Ok((loss, grad))
}

/// Central differences `(J(θ + h eᵢ) - J(θ - h eᵢ)) / 2h` for every coordinate.
///
/// The difference is accumulated instance by instance so the rounding error
/// of the full sum does not swamp small partial derivatives.
pub fn numeric_gradient(model: &ModelState, protocol: &LearningProtocol, step: f64) -> Result<Vec<f64>, MatcherError> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(MatcherError::InvalidStep(step));
    }
    validated(model, protocol)?;
    let mut probe = model.clone();
    let n = model.params().len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let orig = model.params()[i];
        probe.params_mut()[i] = orig + step;
        let plus = instance_losses(&probe, protocol);
        probe.params_mut()[i] = orig - step;
        let minus = instance_losses(&probe, protocol);
        probe.params_mut()[i] = orig;
        let diff: f64 = plus.iter().zip(&minus).map(|(a, b)| a - b).sum();
        out.push(diff / (2.0 * step));
    }
    Ok(out)
}

/// `maxᵢ |aᵢ - nᵢ| / max(|aᵢ|, |nᵢ|, 1e-8)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

/// Largest relative error between the analytic gradient and central
/// finite differences with the given step.
pub fn finite_diff_check(model: &ModelState, protocol: &LearningProtocol, step: f64) -> Result<f64, MatcherError> {
    let numeric = numeric_gradient(model, protocol, step)?;
    let (_, analytic) = loss_and_grad(model, protocol)?;
    Ok(max_relative_error(&analytic, &numeric))
}
