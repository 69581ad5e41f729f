//! The two learnable heads: forward passes, analytic gradients, and a
//! finite-difference spot check.
//!
//! ```bash
//! cargo run --release --example lite_heads
//! ```

use lite_rerank::nn::{
    flat_lite_backward, flat_lite_forward, sep_lite_backward, sep_lite_forward, FlatLiteParams,
    ParamSet, SepLiteParams,
};
use lite_rerank::Matrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (l1, l2) = (4usize, 6usize);
    let s = Matrix::new(
        l1,
        l2,
        (0..l1 * l2).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap();

    println!("Separable head");
    println!("==============\n");
    println!("A shared two-layer MLP transforms every row of S, a second");
    println!("shared MLP every column of the result, and a linear projection");
    println!("reads the score off the flattened output.\n");

    let sep = SepLiteParams::init(l1, l2, 8, 16, 0);
    let (score, cache) = sep_lite_forward(&s, &sep).unwrap();
    println!("input S: {l1} x {l2}, head widths m1=8 m2=16");
    println!("score = {score:.6}");

    let (grads, d_s) = sep_lite_backward(&sep, &cache, 1.0).unwrap();
    let grad_norm: f64 = grads
        .tensors()
        .iter()
        .flat_map(|t| t.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    println!("parameter gradient norm = {grad_norm:.6}");
    println!("input gradient dS[0][0] = {:.6}", d_s.get(0, 0));

    // Spot-check one weight against central finite differences.
    let h = 1e-5;
    let mut probe = sep.clone();
    let orig = probe.w1.get(0, 0);
    probe.w1.set(0, 0, orig + h);
    let plus = sep_lite_forward(&s, &probe).unwrap().0;
    probe.w1.set(0, 0, orig - h);
    let minus = sep_lite_forward(&s, &probe).unwrap().0;
    let numeric = (plus - minus) / (2.0 * h);
    let analytic = grads.w1.get(0, 0);
    println!("w1[0][0]: analytic {analytic:.10}, finite difference {numeric:.10}");
    assert!((analytic - numeric).abs() / analytic.abs().max(1e-6) < 1e-4);

    println!("\nFlattened head");
    println!("==============\n");
    println!("A two-layer ReLU network on vec(S).\n");

    let flat = FlatLiteParams::init(12, l1 * l2, 0);
    let (score, cache) = flat_lite_forward(&s, &flat).unwrap();
    println!("hidden width 12, input {} entries", l1 * l2);
    println!("score = {score:.6}");
    let (grads, _) = flat_lite_backward(&flat, &cache, 1.0).unwrap();
    println!(
        "output-weight gradient a[0] = {:.6} (equals hidden activation)",
        grads.a[0]
    );

    // The diagonal selector reproduces trace(S) exactly, including
    // negative diagonals, via paired +/- hidden units.
    println!("\nTrace selector");
    println!("--------------");
    let square = Matrix::new(4, 4, (0..16).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
    let selector = FlatLiteParams::trace_selector(4, 4);
    let (got, _) = flat_lite_forward(&square, &selector).unwrap();
    println!("trace(S) = {:.12}", square.trace());
    println!("selector = {got:.12}");
    assert!((got - square.trace()).abs() < 1e-12);

    println!("\nDone.");
}
