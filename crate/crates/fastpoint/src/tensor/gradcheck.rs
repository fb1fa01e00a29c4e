//! Central-difference verification of tape gradients.

use super::{ParamSet, Scalar, Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Max over all parameter elements of
    /// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
    pub max_rel_err: f64,
    /// Parameter and flat element index where the max occurred.
    pub worst: Option<(String, usize)>,
    pub elements_checked: usize,
}

fn eval<T: Scalar, F>(f: &F, params: &mut ParamSet<T>) -> Result<f64>
where
    F: Fn(&mut Tape<T>, &mut ParamSet<T>) -> Result<Var>,
{
    let mut tape = Tape::new();
    let out = f(&mut tape, params)?;
    let v = tape.value(out);
    if !v.is_scalar() {
        return Err(Error::Contract(format!(
            "grad_check needs a scalar-valued computation, got shape {:?}",
            v.shape()
        )));
    }
    Ok(v.data()[0].as_f64())
}

/// Compares the tape gradient of `f` against `(f(p+h) - f(p-h)) / 2h` for
/// every element of every parameter.
///
/// `f` must be deterministic: it is evaluated twice up front and a bitwise
/// output mismatch is reported as a contract violation. Dropout must be
/// disabled (or given identical seeds per call); batch norm may run on batch
/// statistics since they are a pure function of the inputs.
pub fn grad_check<T: Scalar, F>(params: &mut ParamSet<T>, f: F, h: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<T>, &mut ParamSet<T>) -> Result<Var>,
{
    let first = eval(&f, params)?;
    let second = eval(&f, params)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::Contract(format!(
            "grad_check given a non-deterministic computation: {first} vs {second}"
        )));
    }

    params.zero_grads();
    {
        let mut tape = Tape::new();
        let out = f(&mut tape, params)?;
        tape.backward(out, params)?;
    }
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|p| p.grad.data().iter().map(|g| g.as_f64()).collect())
        .collect();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        elements_checked: 0,
    };
    for pi in 0..params.len() {
        let n = params.get(super::ParamId(pi)).value.numel();
        for ei in 0..n {
            let id = super::ParamId(pi);
            let orig = params.get(id).value.data()[ei];
            let step = T::from_f64(h);

            params.get_mut(id).value.data_mut()[ei] = orig + step;
            let plus = eval(&f, params)?;
            params.get_mut(id).value.data_mut()[ei] = orig - step;
            let minus = eval(&f, params)?;
            params.get_mut(id).value.data_mut()[ei] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[pi][ei];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.elements_checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some((params.get(id).name.clone(), ei));
            }
        }
    }
    Ok(report)
}
