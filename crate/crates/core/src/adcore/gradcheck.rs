//! Central finite-difference oracle for tape gradients.
//!
//! Re-evaluates the forward closure at perturbed inputs, so it never touches
//! the backward closures it is checking. Used by unit tests and the
//! acceptance suite; kept in the library so both can share it.

use super::graph::{Graph, Var};
use super::tensor::Tensor;

/// Default central-difference step at 64-bit.
pub const DEFAULT_STEP: f64 = 1e-5;
/// Default relative-error bound at 64-bit.
pub const DEFAULT_TOL: f64 = 1e-4;

/// Relative error with an absolute floor so near-zero gradients compare
/// absolutely at `tol * 1e-4`.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / f64::max(1e-4, f64::max(a.abs(), b.abs()))
}

/// Check analytic gradients of a scalar-valued graph against central finite
/// differences for every element of every input.
///
/// `build` must be a pure function of the input tensors (fix any internal
/// seeds). Returns the first offending element as an error string.
pub fn check_gradients<F>(
    build: F,
    inputs: &[Tensor<f64>],
    step: f64,
    tol: f64,
) -> Result<(), String>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Var,
{
    let eval = |tensors: &[Tensor<f64>]| -> f64 {
        let mut g: Graph<f64> = Graph::new();
        let vars: Vec<Var> = tensors.iter().map(|t| g.leaf(t.clone())).collect();
        let loss = build(&mut g, &vars);
        assert_eq!(g.value(loss).numel(), 1, "gradcheck requires a scalar loss");
        g.value(loss).item()
    };

    // Analytic pass.
    let mut g: Graph<f64> = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let loss = build(&mut g, &vars);
    let grads = g.backward_collect(loss);

    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (ti, input) in inputs.iter().enumerate() {
        let analytic = grads[vars[ti].0]
            .as_ref()
            .map(|t| t.data().to_vec())
            .unwrap_or_else(|| vec![0.0; input.numel()]);
        for e in 0..input.numel() {
            let orig = input.data()[e];
            work[ti].data_mut()[e] = orig + step;
            let plus = eval(&work);
            work[ti].data_mut()[e] = orig - step;
            let minus = eval(&work);
            work[ti].data_mut()[e] = orig;
            let fd = (plus - minus) / (2.0 * step);
            let err = rel_err(analytic[e], fd);
            if err > tol {
                return Err(format!(
                    "input {ti} element {e}: analytic {:.8e} vs fd {:.8e} (rel err {:.3e})",
                    analytic[e], fd, err
                ));
            }
        }
    }
    Ok(())
}

/// Fill a tensor with reproducible values in roughly [-1, 1].
pub fn seeded_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    use rand::Rng;
    let mut rng = crate::seed::rng(seed);
    Tensor::from_fn(shape, |_| rng.random::<f64>() * 2.0 - 1.0)
}
