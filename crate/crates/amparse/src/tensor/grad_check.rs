//! Central-difference verification of tape gradients.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{GradMap, ParamStore};
use crate::error::{Error, Result};

/// Compares analytic gradients against central finite differences.
///
/// `f` must be deterministic given the parameter values (fix all noise and
/// disable dropout before calling). At most `max_coords` coordinates are
/// probed, sampled uniformly without replacement when the parameter count
/// exceeds the budget. Returns the maximum relative error
/// `|g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|)` over the probed coordinates.
///
/// Central differences quantize to `ulp(|f|) / (2 eps)`, so coordinates
/// whose analytic AND numeric gradients both sit below the magnitude that
/// this noise can resolve at `rel_tol` are skipped: no finite-difference
/// oracle exists for them. A coordinate where only one side sees signal is
/// still compared (and fails), so missing or spurious gradients are caught.
pub fn grad_check<F>(
    params: &ParamStore,
    analytic: &GradMap,
    f: F,
    eps: f64,
    rel_tol: f64,
    max_coords: usize,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&ParamStore) -> Result<f64>,
{
    if eps <= 0.0 {
        return Err(Error::Config(format!("grad_check eps must be > 0, got {eps}")));
    }
    let mut coords: Vec<(String, usize)> = Vec::new();
    for (name, t) in params.iter() {
        for i in 0..t.numel() {
            coords.push((name.clone(), i));
        }
    }
    if coords.len() > max_coords {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        coords.shuffle(&mut rng);
        coords.truncate(max_coords);
    }

    let f0 = f(params)?;
    if !f0.is_finite() {
        return Err(Error::Diverged(format!("non-finite objective at the base point: {f0}")));
    }
    // One ulp of f leaks into the difference quotient; allow a few for
    // accumulation, then ask which gradient magnitude that noise resolves.
    let fd_noise = f0.abs().max(1.0) * f64::EPSILON * 8.0 / (2.0 * eps);
    let floor = fd_noise / (2.0 * rel_tol);

    let mut work = params.clone();
    let mut max_rel = 0.0f64;
    for (name, idx) in coords {
        let orig = work.get(&name).unwrap().data()[idx];

        work.get_mut(&name).unwrap().data_mut()[idx] = orig + eps;
        let f_plus = f(&work)?;
        work.get_mut(&name).unwrap().data_mut()[idx] = orig - eps;
        let f_minus = f(&work)?;
        work.get_mut(&name).unwrap().data_mut()[idx] = orig;

        if !f_plus.is_finite() || !f_minus.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite objective while perturbing {name}[{idx}]: f+={f_plus}, f-={f_minus}"
            )));
        }
        let g_fd = (f_plus - f_minus) / (2.0 * eps);
        let g_ad = analytic
            .get(&name)
            .ok_or_else(|| Error::Model(format!("no analytic gradient for {name}")))?
            .data()[idx];
        if g_ad.abs() < floor && g_fd.abs() < floor {
            continue;
        }
        let rel = (g_ad - g_fd).abs() / (1e-8f64).max(g_ad.abs() + g_fd.abs());
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::tape::Tape;
    use crate::tensor::Tensor;

    fn quadratic(store: &ParamStore) -> Result<f64> {
        // f = sum(x^2) + 3 * sum(W v)
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let x = b.var("x");
        let w = b.var("w");
        let v = tape.constant(Tensor::vector(vec![1.0, -2.0]));
        let x2 = tape.mul(x, x)?;
        let s1 = tape.sum(x2);
        let wv = tape.matvec(w, v)?;
        let s2 = tape.sum(wv);
        let s2 = tape.mul_scalar(s2, 3.0);
        let loss = tape.add(s1, s2)?;
        Ok(tape.val(loss).item())
    }

    fn quadratic_grads(store: &ParamStore) -> GradMap {
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let x = b.var("x");
        let w = b.var("w");
        let v = tape.constant(Tensor::vector(vec![1.0, -2.0]));
        let x2 = tape.mul(x, x).unwrap();
        let s1 = tape.sum(x2);
        let wv = tape.matvec(w, v).unwrap();
        let s2 = tape.sum(wv);
        let s2 = tape.mul_scalar(s2, 3.0);
        let loss = tape.add(s1, s2).unwrap();
        let grads = tape.backward(loss).unwrap();
        b.grads(store, &grads)
    }

    #[test]
    fn quadratic_matches_to_rounding() {
        let mut store = ParamStore::new();
        store.insert("x", Tensor::vector(vec![0.3, -1.1, 2.0]));
        store.insert("w", Tensor::matrix(2, 2, vec![0.5, 1.5, -0.25, 2.0]).unwrap());
        let analytic = quadratic_grads(&store);
        let err = grad_check(&store, &analytic, quadratic, 1e-5, 1e-8, usize::MAX, 7).unwrap();
        assert!(err < 1e-8, "relative error {err}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let mut store = ParamStore::new();
        store.insert("p", Tensor::vector(vec![1.0, 2.0]));
        let mut analytic = GradMap::new();
        analytic.insert("p".into(), Tensor::zeros(&[2]));
        let err = grad_check(&store, &analytic, |_| Ok(42.0), 1e-5, 1e-8, usize::MAX, 7).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn nonlinear_chain_passes_tightly() {
        // f = logsumexp(tanh(W x) + sigmoid(x[0..2])) through several ops
        let build = |store: &ParamStore, want_grads: bool| -> Result<(f64, Option<GradMap>)> {
            let mut tape = Tape::new();
            let b = store.bind(&mut tape);
            let w = b.var("w");
            let x = b.var("x");
            let wx = tape.matvec(w, x)?;
            let t = tape.tanh(wx);
            let xs = tape.slice(x, 0, 2)?;
            let s = tape.sigmoid(xs);
            let sum = tape.add(t, s)?;
            let loss = tape.logsumexp(sum, 0)?;
            let v = tape.val(loss).item();
            if want_grads {
                let grads = tape.backward(loss)?;
                Ok((v, Some(b.grads(store, &grads))))
            } else {
                Ok((v, None))
            }
        };
        let mut store = ParamStore::new();
        store.insert("w", Tensor::matrix(2, 3, vec![0.2, -0.4, 0.9, 1.1, 0.05, -0.7]).unwrap());
        store.insert("x", Tensor::vector(vec![0.4, -0.9, 1.6]));
        let (_, grads) = build(&store, true).unwrap();
        let err = grad_check(
            &store,
            &grads.unwrap(),
            |s| build(s, false).map(|(v, _)| v),
            1e-5,
            1e-6,
            usize::MAX,
            7,
        )
        .unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }
}
