//! Central finite-difference verification of tape gradients.

use super::{ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Error metric: `max |g_analytic − g_numeric| / max(1, |g_numeric|)`.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(1.0)
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Checks the gradient of a scalar function of `inputs`, built on a fresh
/// tape by `f` from leaf variables of the inputs.
pub fn grad_check<F>(inputs: &[Tensor], h: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if h <= 0.0 {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
        let out = f(&mut tape, &vars)?;
        finite(tape.value(out).as_scalar(), "gradient-check forward")
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut worst = 0.0f64;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let zeros = Tensor::zeros(inputs[i].rows(), inputs[i].cols());
        let analytic = grads.wrt(*var).unwrap_or(&zeros).clone();
        for j in 0..inputs[i].len() {
            let orig = inputs[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = orig - h;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = orig;
            let numeric = finite((plus - minus) / (2.0 * h), "finite difference")?;
            worst = worst.max(rel_err(analytic.data()[j], numeric));
        }
    }
    Ok(worst)
}

/// Checks gradients of a scalar function with respect to every parameter in `store`.
pub fn grad_check_params<F>(store: &ParamStore, h: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    if h <= 0.0 {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let mut tape = Tape::new();
    let out = f(&mut tape, store)?;
    let analytic = tape.backward(out)?.param_grads(store);

    let mut work = store.clone();
    let mut worst = 0.0f64;
    for id in store.ids() {
        for j in 0..store.value(id).len() {
            let orig = store.value(id).data()[j];
            let mut eval_at = |x: f64| -> Result<f64> {
                work.get_mut(id).value_mut().data_mut()[j] = x;
                let mut t = Tape::new();
                let out = f(&mut t, &work)?;
                finite(t.value(out).as_scalar(), "gradient-check forward")
            };
            let plus = eval_at(orig + h)?;
            let minus = eval_at(orig - h)?;
            work.get_mut(id).value_mut().data_mut()[j] = orig;
            let numeric = finite((plus - minus) / (2.0 * h), "finite difference")?;
            worst = worst.max(rel_err(analytic[id.index()].data()[j], numeric));
        }
    }
    Ok(worst)
}
