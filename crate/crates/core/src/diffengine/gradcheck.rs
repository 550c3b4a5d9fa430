use super::{EngineError, Graph, Tensor, Var};

/// Compares reverse-mode gradients of `f` against central differences.
///
/// `f` receives a fresh graph plus one trainable leaf per input and must
/// return a scalar. The result is the maximum over every input coordinate of
/// `|analytic - numeric| / max(1, |analytic|)`.
pub fn grad_check<F>(f: F, inputs: &[Tensor], step: f64) -> Result<f64, EngineError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, EngineError>,
{
    if !(1e-7..=1e-3).contains(&step) {
        return Err(EngineError::InvalidArgument("grad_check step must lie in [1e-7, 1e-3]"));
    }
    let eval = |values: &[Tensor]| -> Result<f64, EngineError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        let v = g.value(out);
        if v.len() != 1 {
            return Err(EngineError::NonScalarLoss(v.shape().to_vec()));
        }
        Ok(v.data()[0])
    };

    let first = eval(inputs)?;
    let second = eval(inputs)?;
    if first.to_bits() != second.to_bits() {
        return Err(EngineError::NonDeterministic { first, second });
    }

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut worst = 0.0f64;
    let mut probe: Vec<Tensor> = inputs.to_vec();
    for (slot, &var) in vars.iter().enumerate() {
        let analytic = grads.wrt(var);
        for i in 0..inputs[slot].len() {
            let base = inputs[slot].data()[i];
            probe[slot].data_mut()[i] = base + step;
            let plus = eval(&probe)?;
            probe[slot].data_mut()[i] = base - step;
            let minus = eval(&probe)?;
            probe[slot].data_mut()[i] = base;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.data()[i];
            let err = (a - numeric).abs() / a.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
