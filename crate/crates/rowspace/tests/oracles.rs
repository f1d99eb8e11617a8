//! Independent oracles for the tensor ops and the backward engine.
//!
//! Each oracle recomputes the op from first principles (naive loops, closed
//! forms, central finite differences) without touching the implementation
//! path it checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rowspace::{ops, Error, InitKind, Parameter, Tape, Tensor};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn tensor(dims: &[usize], data: Vec<f64>) -> Tensor<f64> {
    Tensor::from_vec(dims.to_vec(), data).unwrap()
}

fn assert_close(actual: &[f64], expected: &[f64], tol: f64, what: &str) {
    assert_eq!(actual.len(), expected.len(), "{what}: length mismatch");
    for (i, (a, e)) in actual.iter().zip(expected.iter()).enumerate() {
        assert!(
            (a - e).abs() <= tol * (1.0 + e.abs()),
            "{what}: index {i}: got {a}, expected {e}"
        );
    }
}

/// Central finite differences of `f` w.r.t. a flat input, step 1e-4.
fn finite_diff(dims: &[usize], x0: &[f64], f: impl Fn(&Tensor<f64>) -> f64) -> Vec<f64> {
    let eps = 1e-4;
    let mut grad = Vec::with_capacity(x0.len());
    for i in 0..x0.len() {
        let mut plus = x0.to_vec();
        plus[i] += eps;
        let mut minus = x0.to_vec();
        minus[i] -= eps;
        let fp = f(&tensor(dims, plus));
        let fm = f(&tensor(dims, minus));
        grad.push((fp - fm) / (2.0 * eps));
    }
    grad
}

/// Analytic gradient of a weighted sum of `f(x)`'s outputs w.r.t. x.
fn analytic_grad(
    dims: &[usize],
    x0: &[f64],
    weights: &[f64],
    f: impl Fn(&Tensor<f64>) -> Tensor<f64>,
) -> Vec<f64> {
    let tape = Tape::<f64>::new();
    let x = tape.watch(&tensor(dims, x0.to_vec()));
    let y = f(&x);
    let loss = ops::weighted_sum(&y, weights).unwrap();
    tape.backward(&loss).unwrap();
    tape.grad(&x).unwrap().to_vec()
}

/// FD-vs-analytic check of one op, via a random weighted sum of outputs.
fn grad_matches_fd(dims: &[usize], seed: u64, f: impl Fn(&Tensor<f64>) -> Tensor<f64>) {
    let mut r = rng(seed);
    let x0 = rand_vec(&mut r, dims.iter().product());
    let out_len = f(&tensor(dims, x0.clone())).numel();
    let weights = rand_vec(&mut r, out_len);
    let analytic = analytic_grad(dims, &x0, &weights, &f);
    let numeric = finite_diff(dims, &x0, |x| {
        let y = f(x);
        y.to_vec()
            .iter()
            .zip(weights.iter())
            .map(|(a, b)| a * b)
            .sum()
    });
    for (i, (a, n)) in analytic.iter().zip(numeric.iter()).enumerate() {
        let denom = a.abs().max(n.abs()).max(1.0);
        assert!(
            (a - n).abs() / denom < 1e-6,
            "gradient mismatch at {i}: analytic {a}, numeric {n}"
        );
    }
}

// ── matmul ───────────────────────────────────────────────────────────

#[test]
fn matmul_identity() {
    let eye = tensor(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]);
    let m = tensor(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
    let c = ops::matmul(&eye, &m).unwrap();
    assert_eq!(c.to_vec(), vec![1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn matmul_hand_case() {
    let a = tensor(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
    let b = tensor(&[2, 1], vec![5.0, 6.0]);
    let c = ops::matmul(&a, &b).unwrap();
    assert_eq!(c.to_vec(), vec![17.0, 39.0]);
}

#[test]
fn matmul_matches_triple_loop_oracle() {
    let (m, k, n) = (3, 4, 2);
    let mut r = rng(7);
    let av = rand_vec(&mut r, m * k);
    let bv = rand_vec(&mut r, k * n);
    // oracle: naive triple loop, inner index ascending
    let mut expected = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                expected[i * n + j] += av[i * k + p] * bv[p * n + j];
            }
        }
    }
    let c = ops::matmul(&tensor(&[m, k], av), &tensor(&[k, n], bv)).unwrap();
    assert_eq!(c.to_vec(), expected, "same accumulation order: bitwise equal");
}

#[test]
fn matmul_shape_error_names_both_dims() {
    let a = tensor(&[2, 3], vec![0.0; 6]);
    let b = tensor(&[4, 2], vec![0.0; 8]);
    let err = ops::matmul(&a, &b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("2x3") && msg.contains("4x2"), "got: {msg}");
}

#[test]
fn matmul_gradients_match_finite_differences() {
    let mut r = rng(11);
    let bv = rand_vec(&mut r, 4 * 2);
    let b = tensor(&[4, 2], bv);
    grad_matches_fd(&[3, 4], 12, move |x| ops::matmul(x, &b).unwrap());
}

// ── transpose ────────────────────────────────────────────────────────

#[test]
fn transpose_hand_case() {
    let t = tensor(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
    assert_eq!(ops::transpose(&t).unwrap().to_vec(), vec![1.0, 3.0, 2.0, 4.0]);
}

#[test]
fn transpose_is_an_involution() {
    let mut r = rng(3);
    let xv = rand_vec(&mut r, 12);
    let x = tensor(&[3, 4], xv.clone());
    let tt = ops::transpose(&ops::transpose(&x).unwrap()).unwrap();
    assert_eq!(tt.dims(), &[3, 4]);
    assert_eq!(tt.to_vec(), xv);
}

#[test]
fn transpose_routes_gradients_to_the_source_parameter() {
    let p = Parameter::<f64>::new("w", vec![2, 3], InitKind::Zeros);
    p.set_value(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    let tape = Tape::<f64>::new();
    let w = p.tracked();
    let wt = ops::transpose(&w).unwrap(); // [3, 2]
    let x = tensor(&[1, 3], vec![1.0, 1.0, 1.0]);
    let y = ops::matmul(&x, &wt).unwrap(); // [1, 2], backward passes through the view
    let loss = ops::sum_all(&y);
    tape.backward(&loss).unwrap();
    drop(tape);
    // d/dw of Σ x·wᵀ... the grad lands in p's single buffer with w's dims
    assert_eq!(p.grad_tensor().dims(), p.dims());
    assert_eq!(p.grad(), vec![1.0; 6]);
}

// ── conv2d ───────────────────────────────────────────────────────────

#[test]
fn conv_1x1_equals_per_pixel_matmul() {
    let mut r = rng(21);
    let xv = rand_vec(&mut r, 1 * 3 * 4 * 4);
    let wv = rand_vec(&mut r, 2 * 3);
    let x = tensor(&[1, 3, 4, 4], xv.clone());
    let w = tensor(&[2, 3, 1, 1], wv.clone());
    let y = ops::conv2d(&x, &w, 1, 0).unwrap();
    // oracle: per-pixel channel-vector matmul
    for py in 0..4 {
        for px in 0..4 {
            for co in 0..2 {
                let mut e = 0.0;
                for ci in 0..3 {
                    e += wv[co * 3 + ci] * xv[(ci * 4 + py) * 4 + px];
                }
                let got = y.get(&[0, co, py, px]).unwrap();
                assert!((got - e).abs() < 1e-12, "pixel ({py},{px}) ch {co}");
            }
        }
    }
}

#[test]
fn conv_identity_kernel_preserves_input() {
    let mut r = rng(22);
    let xv = rand_vec(&mut r, 2 * 2 * 5 * 5);
    let x = tensor(&[2, 2, 5, 5], xv.clone());
    // 3×3 kernels: center 1 on the matching channel, 0 elsewhere
    let mut wv = vec![0.0; 2 * 2 * 9];
    wv[(0 * 2 + 0) * 9 + 4] = 1.0;
    wv[(1 * 2 + 1) * 9 + 4] = 1.0;
    let w = tensor(&[2, 2, 3, 3], wv);
    let y = ops::conv2d(&x, &w, 1, 1).unwrap();
    assert_eq!(y.dims(), &[2, 2, 5, 5]);
    assert_eq!(y.to_vec(), xv);
}

#[test]
fn conv_matches_direct_summation_oracle() {
    let mut r = rng(23);
    let xv = rand_vec(&mut r, 1 * 2 * 5 * 5);
    let wv = rand_vec(&mut r, 3 * 2 * 3 * 3);
    let x = tensor(&[1, 2, 5, 5], xv.clone());
    let w = tensor(&[3, 2, 3, 3], wv.clone());
    let (stride, pad) = (1usize, 0usize);
    let y = ops::conv2d(&x, &w, stride, pad).unwrap();
    assert_eq!(y.dims(), &[1, 3, 3, 3]);
    // oracle: direct 6-loop summation over (co, oy, ox, ci, ki, kj)
    let mut expected = vec![0.0; 3 * 3 * 3];
    for co in 0..3 {
        for oy in 0..3 {
            for ox in 0..3 {
                let mut acc = 0.0;
                for ci in 0..2 {
                    for ki in 0..3 {
                        for kj in 0..3 {
                            let iy = oy * stride + ki - pad;
                            let ix = ox * stride + kj - pad;
                            acc += xv[(ci * 5 + iy) * 5 + ix] * wv[((co * 2 + ci) * 3 + ki) * 3 + kj];
                        }
                    }
                }
                expected[(co * 3 + oy) * 3 + ox] = acc;
            }
        }
    }
    assert_eq!(y.to_vec(), expected, "same reduction order: bitwise equal");
}

#[test]
fn conv_rejects_non_integral_output() {
    let x = Tensor::<f64>::zeros(vec![1, 1, 5, 5]);
    let w = Tensor::<f64>::zeros(vec![1, 1, 2, 2]);
    assert!(matches!(ops::conv2d(&x, &w, 2, 0), Err(Error::Shape(_))));
}

#[test]
fn conv_gradients_match_finite_differences() {
    // both input and kernel gradients
    let mut r = rng(24);
    let wv = rand_vec(&mut r, 3 * 2 * 9);
    let w = tensor(&[3, 2, 3, 3], wv.clone());
    grad_matches_fd(&[1, 2, 5, 5], 25, move |x| ops::conv2d(x, &w, 1, 1).unwrap());

    let xv = rand_vec(&mut r, 1 * 2 * 5 * 5);
    let x = tensor(&[1, 2, 5, 5], xv);
    grad_matches_fd(&[3, 2, 3, 3], 26, move |w| ops::conv2d(&x, w, 2, 1).unwrap());
}

// ── activations ──────────────────────────────────────────────────────

#[test]
fn relu_hand_cases() {
    let x = tensor(&[2], vec![-1.0, 2.0]);
    assert_eq!(ops::relu(&x).to_vec(), vec![0.0, 2.0]);
}

#[test]
fn gelu_is_zero_at_zero() {
    let x = tensor(&[1], vec![0.0]);
    assert_eq!(ops::gelu(&x).to_vec(), vec![0.0]);
}

#[test]
fn gelu_matches_error_function_oracle() {
    // oracle: 0.5·x·(1 + erf(x/√2)) via libm::erf
    let probes = [-2.0, -0.5, 0.25, 1.0, 3.0];
    let x = tensor(&[5], probes.to_vec());
    let y = ops::gelu(&x).to_vec();
    for (i, &p) in probes.iter().enumerate() {
        let expected = 0.5 * p * (1.0 + libm::erf(p / std::f64::consts::SQRT_2));
        assert!((y[i] - expected).abs() < 1e-12);
    }
    // the spec's frozen value
    assert!((y[3] - 0.841345).abs() < 1e-6, "gelu(1) = {}", y[3]);
}

#[test]
fn activation_gradients_match_finite_differences() {
    grad_matches_fd(&[7], 31, |x| ops::relu(&ops::add(x, &Tensor::full(vec![7], 0.3)).unwrap()));
    grad_matches_fd(&[7], 32, |x| ops::gelu(x));
}

// ── softmax ──────────────────────────────────────────────────────────

#[test]
fn softmax_uniform_input() {
    let x = tensor(&[3], vec![0.0, 0.0, 0.0]);
    let y = ops::softmax_lastdim(&x).unwrap().to_vec();
    for v in y {
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }
}

#[test]
fn softmax_shift_invariance_gives_stability() {
    let big = ops::softmax_lastdim(&tensor(&[2], vec![1000.0, 1000.5]))
        .unwrap()
        .to_vec();
    let small = ops::softmax_lastdim(&tensor(&[2], vec![0.0, 0.5]))
        .unwrap()
        .to_vec();
    assert!(big.iter().all(|v| v.is_finite()));
    assert_close(&big, &small, 1e-12, "softmax shift invariance");
}

#[test]
fn softmax_slices_sum_to_one() {
    let mut r = rng(41);
    let x = tensor(&[4, 5], rand_vec(&mut r, 20));
    let y = ops::softmax_lastdim(&x).unwrap().to_vec();
    for row in y.chunks(5) {
        let s: f64 = row.iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
        assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}

#[test]
fn softmax_gradients_match_finite_differences() {
    grad_matches_fd(&[2, 4], 42, |x| ops::softmax_lastdim(x).unwrap());
}

// ── layer norm ───────────────────────────────────────────────────────

#[test]
fn layer_norm_constant_slice_is_zero() {
    let x = tensor(&[3], vec![5.0, 5.0, 5.0]);
    let gamma = tensor(&[3], vec![1.0; 3]);
    let beta = tensor(&[3], vec![0.0; 3]);
    let y = ops::layer_norm(&x, &gamma, &beta, 1e-5).unwrap().to_vec();
    for v in y {
        assert!(v.abs() < 1e-9, "eps keeps the zero-variance slice finite");
    }
}

#[test]
fn layer_norm_matches_closed_form_oracle() {
    // oracle: mean 2, variance 2/3 → (x−2)/√(2/3) = ±√1.5, 0
    let x = tensor(&[3], vec![1.0, 2.0, 3.0]);
    let gamma = tensor(&[3], vec![1.0; 3]);
    let beta = tensor(&[3], vec![0.0; 3]);
    let y = ops::layer_norm(&x, &gamma, &beta, 0.0).unwrap().to_vec();
    let r = 1.5f64.sqrt();
    assert_close(&y, &[-r, 0.0, r], 1e-12, "layer_norm closed form");
    assert!((y[0] + 1.2247).abs() < 1e-4);
}

#[test]
fn layer_norm_output_mean_is_tiny() {
    let mut r = rng(51);
    let x = tensor(&[4, 8], rand_vec(&mut r, 32));
    let gamma = tensor(&[8], vec![1.0; 8]);
    let beta = tensor(&[8], vec![0.0; 8]);
    let y = ops::layer_norm(&x, &gamma, &beta, 1e-12).unwrap().to_vec();
    for row in y.chunks(8) {
        let mean: f64 = row.iter().sum::<f64>() / 8.0;
        assert!(mean.abs() < 1e-6);
    }
}

#[test]
fn layer_norm_gradients_match_finite_differences() {
    let gamma = tensor(&[6], vec![0.7, 1.1, 0.9, 1.3, 0.5, 1.0]);
    let beta = tensor(&[6], vec![0.1, -0.2, 0.0, 0.3, -0.1, 0.2]);
    let (g, b) = (gamma.clone(), beta.clone());
    grad_matches_fd(&[3, 6], 52, move |x| ops::layer_norm(x, &g, &b, 1e-5).unwrap());
    // gradients w.r.t. gamma
    let mut r = rng(53);
    let xv = rand_vec(&mut r, 18);
    let x = tensor(&[3, 6], xv);
    let b2 = beta.clone();
    grad_matches_fd(&[6], 54, move |gamma| {
        ops::layer_norm(&x, gamma, &b2, 1e-5).unwrap()
    });
}

// ── batch norm ───────────────────────────────────────────────────────

#[test]
fn batch_norm_eval_with_initial_stats_is_identity_up_to_eps() {
    // eval before any train step: running mean 0, var 1 (not an error)
    use rowspace::Mode;
    let mut r = rng(55);
    let xv = rand_vec(&mut r, 2 * 3 * 4 * 4);
    let x = tensor(&[2, 3, 4, 4], xv.clone());
    let gamma = tensor(&[3], vec![1.0; 3]);
    let beta = tensor(&[3], vec![0.0; 3]);
    let rm = tensor(&[3], vec![0.0; 3]);
    let rv = tensor(&[3], vec![1.0; 3]);
    let y = ops::batch_norm2d(&x, &gamma, &beta, &rm, &rv, Mode::Eval, 1e-5, 0.1)
        .unwrap()
        .to_vec();
    assert_close(&y, &xv, 1e-5, "bn eval with unit stats");
}

#[test]
fn batch_norm_train_output_has_zero_channel_means() {
    use rowspace::Mode;
    let mut r = rng(56);
    let x = tensor(&[4, 2, 3, 3], rand_vec(&mut r, 4 * 2 * 9));
    let gamma = tensor(&[2], vec![1.0; 2]);
    let beta = tensor(&[2], vec![0.0; 2]);
    let rm = tensor(&[2], vec![0.0; 2]);
    let rv = tensor(&[2], vec![1.0; 2]);
    let y = ops::batch_norm2d(&x, &gamma, &beta, &rm, &rv, Mode::Train, 1e-5, 0.1).unwrap();
    for ch in 0..2 {
        let mut mean = 0.0;
        for img in 0..4 {
            for py in 0..3 {
                for px in 0..3 {
                    mean += y.get(&[img, ch, py, px]).unwrap();
                }
            }
        }
        mean /= 36.0;
        assert!(mean.abs() < 1e-6, "channel {ch} batch mean {mean}");
    }
}

#[test]
fn batch_norm_matches_two_pass_statistics_oracle() {
    use rowspace::Mode;
    let mut r = rng(57);
    let xv = rand_vec(&mut r, 3 * 2 * 4 * 4);
    let gv = [0.8, 1.3];
    let bv = [0.2, -0.4];
    let x = tensor(&[3, 2, 4, 4], xv.clone());
    let y = ops::batch_norm2d(
        &x,
        &tensor(&[2], gv.to_vec()),
        &tensor(&[2], bv.to_vec()),
        &tensor(&[2], vec![0.0; 2]),
        &tensor(&[2], vec![1.0; 2]),
        Mode::Train,
        1e-5,
        0.1,
    )
    .unwrap();
    // oracle: two-pass mean/variance per channel, then the affine map
    for ch in 0..2 {
        let mut vals = Vec::new();
        for img in 0..3 {
            for p in 0..16 {
                vals.push(xv[(img * 2 + ch) * 16 + p]);
            }
        }
        let m: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
        let var: f64 = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64;
        for (i, img) in (0..3).enumerate() {
            let _ = i;
            for py in 0..4 {
                for px in 0..4 {
                    let raw = xv[((img * 2 + ch) * 4 + py) * 4 + px];
                    let expected = gv[ch] * (raw - m) / (var + 1e-5).sqrt() + bv[ch];
                    let got = y.get(&[img, ch, py, px]).unwrap();
                    assert!((got - expected).abs() < 1e-10);
                }
            }
        }
    }
}

#[test]
fn batch_norm_updates_running_stats_by_ema() {
    use rowspace::Mode;
    let mut r = rng(58);
    let xv = rand_vec(&mut r, 2 * 1 * 3 * 3);
    let x = tensor(&[2, 1, 3, 3], xv.clone());
    let rm = tensor(&[1], vec![0.0]);
    let rv = tensor(&[1], vec![1.0]);
    ops::batch_norm2d(
        &x,
        &tensor(&[1], vec![1.0]),
        &tensor(&[1], vec![0.0]),
        &rm,
        &rv,
        Mode::Train,
        1e-5,
        0.1,
    )
    .unwrap();
    let m: f64 = xv.iter().sum::<f64>() / 18.0;
    let var_biased: f64 = xv.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 18.0;
    let var_unbiased = var_biased * 18.0 / 17.0;
    assert!((rm.to_vec()[0] - 0.1 * m).abs() < 1e-12);
    assert!((rv.to_vec()[0] - (0.9 + 0.1 * var_unbiased)).abs() < 1e-12);
}

#[test]
fn batch_norm_gradients_match_finite_differences() {
    use rowspace::Mode;
    let gamma = tensor(&[2], vec![0.9, 1.2]);
    let beta = tensor(&[2], vec![0.1, -0.3]);
    let (g, b) = (gamma.clone(), beta.clone());
    grad_matches_fd(&[2, 2, 3, 3], 59, move |x| {
        // fresh running buffers per call: the EMA side effect must not leak
        let rm = tensor(&[2], vec![0.0; 2]);
        let rv = tensor(&[2], vec![1.0; 2]);
        ops::batch_norm2d(x, &g, &b, &rm, &rv, Mode::Train, 1e-5, 0.1).unwrap()
    });
    // gamma path, eval mode
    let mut r = rng(60);
    let x = tensor(&[2, 2, 3, 3], rand_vec(&mut r, 36));
    let b2 = beta.clone();
    grad_matches_fd(&[2], 61, move |gamma| {
        let rm = tensor(&[2], vec![0.05; 2]);
        let rv = tensor(&[2], vec![0.9; 2]);
        ops::batch_norm2d(&x, gamma, &b2, &rm, &rv, Mode::Eval, 1e-5, 0.1).unwrap()
    });
}

// ── cross entropy ────────────────────────────────────────────────────

#[test]
fn cross_entropy_uniform_logits() {
    let logits = tensor(&[2, 10], vec![0.0; 20]);
    let loss = ops::cross_entropy(&logits, &[3, 7]).unwrap().item().unwrap();
    assert!((loss - 10f64.ln()).abs() < 1e-12);
    assert!((loss - 2.302585).abs() < 1e-6);
}

#[test]
fn cross_entropy_confident_prediction() {
    let mut z = vec![0.0; 10];
    z[4] = 30.0;
    let loss = ops::cross_entropy(&tensor(&[1, 10], z), &[4])
        .unwrap()
        .item()
        .unwrap();
    assert!(loss < 1e-9);
}

#[test]
fn cross_entropy_matches_log_sum_exp_oracle() {
    let mut r = rng(61);
    let zv = rand_vec(&mut r, 3 * 5);
    let labels = [2usize, 0, 4];
    let loss = ops::cross_entropy(&tensor(&[3, 5], zv.clone()), &labels)
        .unwrap()
        .item()
        .unwrap();
    // oracle: direct summation of −log softmax
    let mut expected = 0.0;
    for (row, &y) in zv.chunks(5).zip(labels.iter()) {
        let lse = row.iter().map(|v| v.exp()).sum::<f64>().ln();
        expected += lse - row[y];
    }
    expected /= 3.0;
    assert!((loss - expected).abs() < 1e-12);
}

#[test]
fn cross_entropy_rejects_out_of_range_labels() {
    let logits = tensor(&[1, 3], vec![0.0; 3]);
    assert!(matches!(
        ops::cross_entropy(&logits, &[3]),
        Err(Error::Index(_))
    ));
}

#[test]
fn cross_entropy_gradients_match_finite_differences() {
    let labels = vec![1usize, 3, 0];
    grad_matches_fd(&[3, 4], 62, move |z| ops::cross_entropy(z, &labels).unwrap());
}

// ── shape ops ────────────────────────────────────────────────────────

#[test]
fn shape_op_gradients_match_finite_differences() {
    grad_matches_fd(&[2, 3, 4], 71, |x| ops::permute(x, &[2, 0, 1]).unwrap());
    grad_matches_fd(&[2, 6], 72, |x| ops::reshape(x, vec![3, 4]).unwrap());
    grad_matches_fd(&[3, 4], 73, |x| ops::narrow(x, 1, 2).unwrap());
    grad_matches_fd(&[2, 3], 74, |x| ops::expand_leading(x, 4));
    grad_matches_fd(&[2, 2, 3], 75, |x| ops::token_at(x, 1).unwrap());
    let mut r = rng(76);
    let other = tensor(&[2, 2, 3], rand_vec(&mut r, 12));
    grad_matches_fd(&[2, 2, 3], 77, move |x| {
        ops::concat_tokens(x, &other).unwrap()
    });
    grad_matches_fd(&[5, 5], 78, |x| ops::maxpool2d(&ops::reshape(x, vec![1, 1, 5, 5]).unwrap(), 3, 2, 1).unwrap());
    grad_matches_fd(&[1, 2, 4, 4], 79, |x| ops::global_avg_pool(x).unwrap());
    let bias = tensor(&[3], vec![0.3, -0.6, 0.9]);
    grad_matches_fd(&[4, 3], 80, move |x| ops::add_broadcast(x, &bias).unwrap());
    grad_matches_fd(&[3, 3], 81, |x| ops::bmm(&ops::reshape(x, vec![1, 3, 3]).unwrap(), &ops::reshape(x, vec![1, 3, 3]).unwrap()).unwrap());
}

// ── backward semantics ───────────────────────────────────────────────

#[test]
fn backward_product_rule() {
    // y = x·x at x = 3 → dy/dx = 6
    let tape = Tape::<f64>::new();
    let x = tape.watch(&Tensor::scalar(3.0));
    let y = ops::mul(&x, &x).unwrap();
    tape.backward(&y).unwrap();
    assert_eq!(tape.grad(&x).unwrap().to_vec(), vec![6.0]);
}

#[test]
fn backward_accumulates_over_repeated_uses() {
    // y = w·x + w·x with x = 5 → dw = 10: the tying-critical case
    let w = Parameter::<f64>::new("w", vec![1], InitKind::Zeros);
    w.set_value(&[2.0]).unwrap();
    let x = Tensor::scalar(5.0);
    let tape = Tape::<f64>::new();
    let wt = w.tracked();
    let wt2 = w.tracked(); // second use resolves to the same leaf node
    let y = ops::add(&ops::mul(&wt, &x).unwrap(), &ops::mul(&wt2, &x).unwrap()).unwrap();
    tape.backward(&y).unwrap();
    drop(tape);
    assert_eq!(w.grad(), vec![10.0]);
}

#[test]
fn backward_twice_without_zero_grad_doubles() {
    let w = Parameter::<f64>::new("w", vec![2], InitKind::Zeros);
    w.set_value(&[1.0, 2.0]).unwrap();
    let run = || {
        let tape = Tape::<f64>::new();
        let y = ops::sum_all(&ops::mul(&w.tracked(), &w.tracked()).unwrap());
        tape.backward(&y).unwrap();
    };
    run();
    let first = w.grad();
    run();
    let second = w.grad();
    assert_eq!(second, first.iter().map(|g| 2.0 * g).collect::<Vec<_>>());
    w.zero_grad();
    assert_eq!(w.grad(), vec![0.0, 0.0]);
}

#[test]
fn composite_graph_matches_finite_differences() {
    // a little network: softmax(gelu(x·W))·v summed, grads w.r.t. x
    let mut r = rng(91);
    let wv = rand_vec(&mut r, 4 * 3);
    let w = tensor(&[4, 3], wv);
    grad_matches_fd(&[2, 4], 92, move |x| {
        let h = ops::gelu(&ops::matmul(x, &w).unwrap());
        ops::softmax_lastdim(&h).unwrap()
    });
}

#[test]
fn repeated_symmetric_use_scales_gradient_by_count() {
    // p appearing k times in structurally identical summands → grad = k × single-use grad
    let x = Tensor::from_vec(vec![3], vec![0.4, -0.2, 0.7]).unwrap();
    let single = {
        let p = Parameter::<f64>::new("p", vec![3], InitKind::Zeros);
        p.set_value(&[0.5, 1.5, -0.5]).unwrap();
        let tape = Tape::<f64>::new();
        let y = ops::sum_all(&ops::mul(&p.tracked(), &x).unwrap());
        tape.backward(&y).unwrap();
        drop(tape);
        p.grad()
    };
    for k in [2usize, 3, 5] {
        let p = Parameter::<f64>::new("p", vec![3], InitKind::Zeros);
        p.set_value(&[0.5, 1.5, -0.5]).unwrap();
        let tape = Tape::<f64>::new();
        let mut acc = ops::mul(&p.tracked(), &x).unwrap();
        for _ in 1..k {
            acc = ops::add(&acc, &ops::mul(&p.tracked(), &x).unwrap()).unwrap();
        }
        let y = ops::sum_all(&acc);
        tape.backward(&y).unwrap();
        drop(tape);
        let expected: Vec<f64> = single.iter().map(|g| g * k as f64).collect();
        assert_eq!(p.grad(), expected, "k = {k}");
    }
}

#[test]
fn forward_replay_is_bitwise_deterministic() {
    let mut r = rng(95);
    let xv = rand_vec(&mut r, 2 * 3 * 6 * 6);
    let wv = rand_vec(&mut r, 4 * 3 * 9);
    let run = || {
        let x = tensor(&[2, 3, 6, 6], xv.clone());
        let w = tensor(&[4, 3, 3, 3], wv.clone());
        let y = ops::conv2d(&x, &w, 1, 1).unwrap();
        let y = ops::global_avg_pool(&y).unwrap();
        ops::softmax_lastdim(&y).unwrap().to_vec()
    };
    let a = run();
    let b = run();
    assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
}
