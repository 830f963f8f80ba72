use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{structural, Error, Result};

/// Compares the reverse-mode gradient of a scalar function against central
/// differences and returns the worst relative error
/// `|a − n| / max(1e-8, |a| + |n|)` over all coordinates.
pub fn grad_check<F>(f: F, point: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    grad_check_many(|g, xs| f(g, xs[0]), std::slice::from_ref(point), h)
}

/// [`grad_check`] over several input tensors at once.
pub fn grad_check_many<F>(f: F, points: &[Tensor], h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numeric("gradient check at a non-finite point".into()));
    }
    let eval = |pts: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars = pts
            .iter()
            .map(|p| g.param(p.clone()))
            .collect::<Result<Vec<_>>>()?;
        let out = f(&mut g, &vars)?;
        g.value(out).item()
    };

    let mut g = Graph::new();
    let vars = points
        .iter()
        .map(|p| g.param(p.clone()))
        .collect::<Result<Vec<_>>>()?;
    let out = f(&mut g, &vars)?;
    if g.value(out).numel() != 1 {
        return Err(structural!("gradient check needs a scalar function"));
    }
    let mut grads = g.backward(out)?;
    let analytic = grads.collect(&vars)?;

    let mut worst = 0.0f64;
    let mut probe = points.to_vec();
    for (t, grad) in analytic.iter().enumerate() {
        for i in 0..points[t].numel() {
            let orig = points[t].data()[i];
            probe[t].data_mut()[i] = orig + h;
            let plus = eval(&probe)?;
            probe[t].data_mut()[i] = orig - h;
            let minus = eval(&probe)?;
            probe[t].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            if !numeric.is_finite() {
                return Err(Error::Numeric(format!("non-finite difference at coordinate {i}")));
            }
            let a = grad.data()[i];
            let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
