//! The tensor core: tape-recorded operations, reverse-mode gradients and
//! finite-difference verification.
//!
//! ```bash
//! cargo run -p amparse --example autodiff_basics
//! ```

use amparse::tensor::checkpoint::{GradMap, ParamStore};
use amparse::tensor::grad_check::grad_check;
use amparse::tensor::tape::Tape;
use amparse::tensor::Tensor;

fn main() -> amparse::Result<()> {
    // loss = logsumexp(W x): the gradient of logsumexp is the softmax.
    let mut store = ParamStore::new();
    store.insert("w", Tensor::matrix(3, 2, vec![0.5, -1.0, 0.25, 2.0, 1.5, 0.0])?);
    store.insert("x", Tensor::vector(vec![1.0, -0.5]));

    let forward = |store: &ParamStore| -> amparse::Result<(f64, Option<GradMap>, bool)> {
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let wx = tape.matvec(b.var("w"), b.var("x"))?;
        let loss = tape.logsumexp(wx, 0)?;
        let value = tape.val(loss).item();
        let grads = tape.backward(loss)?;
        Ok((value, Some(b.grads(store, &grads)), true))
    };

    let (value, grads, _) = forward(&store)?;
    let grads = grads.unwrap();
    println!("loss = {value:.6}");
    println!("d loss / d x = {:?}", grads["x"].data());

    let err = grad_check(
        &store,
        &grads,
        |s| forward(s).map(|(v, _, _)| v),
        1e-5,
        1e-6,
        usize::MAX,
        42,
    )?;
    println!("max relative error vs central differences: {err:.2e}");

    // The checkpoint container round-trips parameters bit-exactly.
    let dir = std::env::temp_dir().join("amparse_autodiff_example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("params.bin");
    store.save(&path)?;
    let loaded = ParamStore::load(&path)?;
    println!(
        "checkpoint round trip exact: {}",
        loaded.get("w") == store.get("w") && loaded.get("x") == store.get("x")
    );
    Ok(())
}
