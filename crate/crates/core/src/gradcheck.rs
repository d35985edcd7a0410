//! Central finite-difference check of tape gradients.

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `(parameter name, flat index)` of the worst entry.
    pub worst: Option<(String, usize)>,
    /// `(analytic, numeric)` at the worst entry.
    pub worst_values: Option<(f64, f64)>,
    pub entries_checked: usize,
}

fn evaluate<F>(params: &ParamStore, loss_fn: &F) -> Result<f64>
where
    F: Fn(&ParamStore, &mut Tape) -> Result<Var>,
{
    let mut tape = Tape::new();
    let root = loss_fn(params, &mut tape)?;
    let v = tape.value(root).item();
    if !v.is_finite() {
        return Err(Error::Numeric("loss is not finite".into()));
    }
    Ok(v)
}

/// Compares the analytic gradient of `loss_fn` with `(f(θ+ε) − f(θ−ε)) / 2ε`
/// for every parameter entry. Relative error uses the denominator
/// `max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<F>(params: &ParamStore, loss_fn: F, epsilon: f64) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore, &mut Tape) -> Result<Var>,
{
    if !(1e-6..=1e-3).contains(&epsilon) {
        return Err(Error::Config(format!(
            "epsilon {epsilon} outside [1e-6, 1e-3]"
        )));
    }
    let mut analytic = params.clone();
    analytic.zero_grad();
    {
        let mut tape = Tape::new();
        let root = loss_fn(&analytic, &mut tape)?;
        if !tape.value(root).item().is_finite() {
            return Err(Error::Numeric("loss is not finite".into()));
        }
        tape.backward(root, &mut analytic)?;
    }

    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        worst_values: None,
        entries_checked: 0,
    };
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in &names {
        let n = params.value(name)?.len();
        for i in 0..n {
            let original = probe.value(name)?.data()[i];
            probe.value_mut(name)?.data_mut()[i] = original + epsilon;
            let plus = evaluate(&probe, &loss_fn)?;
            probe.value_mut(name)?.data_mut()[i] = original - epsilon;
            let minus = evaluate(&probe, &loss_fn)?;
            probe.value_mut(name)?.data_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let exact = analytic.get(name).expect("same names").grad.data()[i];
            let denom = exact.abs().max(numeric.abs()).max(1e-8);
            let rel = (exact - numeric).abs() / denom;
            report.entries_checked += 1;
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst = Some((name.clone(), i));
                report.worst_values = Some((exact, numeric));
            }
        }
    }
    Ok(report)
}
