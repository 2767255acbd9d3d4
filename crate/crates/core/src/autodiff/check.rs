use serde::Serialize;

use super::graph::{Graph, Var};
use super::params::ParamStore;
use super::AutodiffError;

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckEntry {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Largest offenders first.
    pub worst: Vec<GradCheckEntry>,
}

/// Relative error with a 1e-3 floor on the denominator, so gradients that
/// are both near zero are compared absolutely.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Compares reverse-mode gradients of `loss` against central finite
/// differences for every scalar in `store`.
pub fn gradient_check<F>(store: &ParamStore, loss: F, eps: f64, tol: f64) -> Result<GradCheckReport, AutodiffError>
where
    F: Fn(&mut Graph) -> Result<Var, AutodiffError>,
{
    let analytic = {
        let mut g = Graph::new(store);
        let l = loss(&mut g)?;
        g.backward(l)?
    };
    let eval = |s: &ParamStore| -> Result<f64, AutodiffError> {
        let mut g = Graph::new(s);
        let l = loss(&mut g)?;
        Ok(g.value(l).item())
    };

    let mut probe = store.clone();
    let mut entries = Vec::new();
    for id in store.ids() {
        for i in 0..store.value(id).len() {
            let orig = store.value(id).data()[i];
            probe.value_mut(id).data_mut()[i] = orig + eps;
            let up = eval(&probe)?;
            probe.value_mut(id).data_mut()[i] = orig - eps;
            let down = eval(&probe)?;
            probe.value_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.get(id).data()[i];
            entries.push(GradCheckEntry {
                param: store.name(id).to_string(),
                index: i,
                analytic: a,
                numeric,
                rel_error: relative_error(a, numeric),
            });
        }
    }
    entries.sort_by(|a, b| b.rel_error.total_cmp(&a.rel_error));
    let checked = entries.len();
    let max_rel_error = entries.first().map_or(0.0, |e| e.rel_error);
    entries.truncate(5);
    let report = GradCheckReport { checked, max_rel_error, worst: entries };
    if max_rel_error > tol {
        let w = &report.worst[0];
        return Err(AutodiffError::GradCheck { param: w.param.clone(), index: w.index, rel_error: w.rel_error, tol });
    }
    Ok(report)
}
