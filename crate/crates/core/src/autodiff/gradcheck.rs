//! Central finite-difference verification of [`Graph::backward`].

use super::{Graph, ParamStore, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    /// Parameter name and flat index where it occurred.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Compares the gradient of `loss` with respect to every parameter entry
/// against `(f(p + h) - f(p - h)) / 2h`. `loss` must build the same scalar
/// on every call. `floor` keeps entries with near-zero gradient from
/// dominating the relative error.
pub fn check_gradients<E, F>(
    store: &mut ParamStore<f64>,
    h: f64,
    floor: f64,
    mut loss: F,
) -> Result<GradCheck, E>
where
    F: FnMut(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var, E>,
    E: From<super::AutodiffError>,
{
    store.zero_grad();
    let mut g = Graph::new();
    let l = loss(&mut g, store)?;
    g.backward(l, store)?;
    let mut eval = |store: &ParamStore<f64>| -> Result<f64, E> {
        let mut g = Graph::new();
        let l = loss(&mut g, store)?;
        Ok(g.scalar(l))
    };
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for id in store.ids().collect::<Vec<_>>() {
        let analytic = store.grad(id).clone();
        let cols = analytic.ncols();
        for (idx, &a) in analytic.iter().enumerate() {
            let at = [idx / cols, idx % cols];
            let orig = store.value(id)[at];
            store.value_mut(id)[at] = orig + h;
            let up = eval(store)?;
            store.value_mut(id)[at] = orig - h;
            let down = eval(store)?;
            store.value_mut(id)[at] = orig;
            let numeric = (up - down) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some((store.name(id).to_string(), idx));
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
