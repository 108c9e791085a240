use super::params::ParamStore;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Worst coordinate found by [`finite_diff_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compares tape gradients of `f` with central differences of step `h`.
///
/// `f` records a scalar loss on the supplied tape. Relative error per
/// coordinate is `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn finite_diff_check<F>(f: F, params: &ParamStore, h: f64) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore, &mut Tape) -> Result<Var>,
{
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let out = f(store, &mut tape)?;
        let v = tape.value(out).item();
        if !v.is_finite() {
            return Err(Error::NonFiniteEvaluation(v));
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let loss = f(params, &mut tape)?;
    let grads = tape.gradients(loss, params)?;

    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        param: String::new(),
        index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let names: Vec<String> = params.names().map(str::to_owned).collect();
    for name in &names {
        let analytic = grads.get(name).expect("aligned gradients").clone();
        for i in 0..analytic.len() {
            let orig = work.get(name).expect("present").data()[i];
            work.get_mut(name).expect("present").data_mut()[i] = orig + h;
            let plus = eval(&work)?;
            work.get_mut(name).expect("present").data_mut()[i] = orig - h;
            let minus = eval(&work)?;
            work.get_mut(name).expect("present").data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.data()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.checked += 1;
            if rel > report.max_rel_error {
                report = GradCheckReport {
                    max_rel_error: rel,
                    param: name.clone(),
                    index: i,
                    analytic: a,
                    numeric,
                    checked: report.checked,
                };
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    #[test]
    fn linear_function_is_exact() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::column(vec![0.3, -1.2, 2.5])).unwrap();
        let coeffs = Tensor::column(vec![1.5, -0.25, 4.0]);
        let report = finite_diff_check(
            |s, tape| {
                let w = tape.param(s, "w")?;
                let c = tape.constant(coeffs.clone());
                let p = tape.mul(w, c)?;
                let total = tape.sum(p);
                Ok(tape.shift(total, 0.7))
            },
            &store,
            1e-5,
        )
        .unwrap();
        // central differences at h = 1e-5 carry ~eps·|f|/h of roundoff
        assert!(report.max_rel_error < 1e-8, "{report:?}");
    }

    #[test]
    fn exp_at_zero() {
        let mut store = ParamStore::new();
        store.insert("x", Tensor::scalar(0.0)).unwrap();
        let report = finite_diff_check(
            |s, tape| {
                let x = tape.param(s, "x")?;
                Ok(tape.exp(x))
            },
            &store,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-8, "{report:?}");
        assert!((report.analytic - 1.0).abs() < 1e-15);
    }

    #[test]
    fn non_finite_evaluation_reported() {
        let mut store = ParamStore::new();
        store.insert("x", Tensor::scalar(1e-6)).unwrap();
        let result = finite_diff_check(
            |s, tape| {
                let x = tape.param(s, "x")?;
                let r = tape.recip(x);
                Ok(tape.sum(r))
            },
            &store,
            1e-6,
        );
        assert!(matches!(result, Err(Error::NonFiniteEvaluation(_))));
    }
}
