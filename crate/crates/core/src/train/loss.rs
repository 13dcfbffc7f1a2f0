use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Probability clamp keeping the logarithms finite.
pub const BCE_EPS: f64 = 1e-7;

fn check(prob: &Tensor, target: &Tensor) -> Result<()> {
    if prob.shape() != target.shape() {
        return Err(Error::shape(format!(
            "prediction {:?} and target {:?} differ in shape",
            prob.shape(),
            target.shape()
        )));
    }
    Ok(())
}

/// Mean binary cross-entropy over all pixels, with probabilities clamped to [ε, 1−ε].
pub fn bce_loss(prob: &Tensor, target: &Tensor) -> Result<f64> {
    check(prob, target)?;
    let n = prob.data().len().max(1) as f64;
    let sum: f64 = prob
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let p = (p as f64).clamp(BCE_EPS, 1.0 - BCE_EPS);
            let t = t as f64;
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    Ok(sum / n)
}

/// Gradient of the mean BCE with respect to the pre-sigmoid logits: `(p − t) / N`.
pub fn bce_logit_grad(prob: &Tensor, target: &Tensor) -> Result<Tensor> {
    check(prob, target)?;
    let n = prob.data().len().max(1) as f32;
    let data = prob
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p - t) / n)
        .collect();
    Tensor::from_vec(prob.shape(), data)
}
