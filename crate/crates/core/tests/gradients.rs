mod support;

use kanfactor_core::factor_model::mse_loss;
use kanfactor_core::{ConditionalAutoencoder, Matrix, NetKind, Parameters};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{finite_difference_grads, kinks, random_model, rel_err};

struct Case {
    model: ConditionalAutoencoder,
    z: Matrix,
    r: Vec<f64>,
}

/// Random model plus a cross-section that keeps every ReLU pre-activation and
/// every KAN input at least `1e-4` away from a kink.
fn case(kind: NetKind, seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let model = random_model(kind, seed);
    let p = model.n_characteristics();
    loop {
        let n = rng.random_range(p + 1..=8.max(p + 1));
        let z = support::random_matrix(&mut rng, n, p, 1.0);
        if kinks(model.beta_net(), &z).iter().any(|v| v.abs() < 1e-4) {
            continue;
        }
        let r = (0..n).map(|_| rng.random_range(-0.3..0.3)).collect();
        return Case { model, z, r };
    }
}

fn loss(m: &ConditionalAutoencoder, z: &Matrix, r: &[f64]) -> f64 {
    let (pred, _) = m.forward(z, r).unwrap();
    mse_loss(&pred.r_hat, r).unwrap().0
}

fn check(kind: NetKind, seed: u64) -> usize {
    let Case { model, z, r } = case(kind, seed);
    let (pred, cache) = model.forward(&z, &r).unwrap();
    let (_, dpred) = mse_loss(&pred.r_hat, &r).unwrap();
    let grads = model.backward(&cache, &dpred).unwrap();
    assert!(grads.is_congruent(&model));
    let fd = finite_difference_grads(&model, 1e-6, |m| loss(m, &z, &r));
    let mut n = 0;
    for (t, (g, f)) in grads.tensors.iter().zip(&fd).enumerate() {
        for (i, (a, b)) in g.iter().zip(f).enumerate() {
            assert!(
                rel_err(*a, *b, 1e-8) <= 1e-5,
                "{kind} seed {seed} tensor {t} index {i}: analytic {a} vs fd {b}"
            );
            n += 1;
        }
    }
    n
}

#[test]
fn kan_models_match_finite_differences() {
    let checked: usize = (0..60).map(|s| check(NetKind::Kan, s)).sum();
    assert!(checked > 1000);
}

#[test]
fn mlp_models_match_finite_differences() {
    let checked: usize = (0..60).map(|s| check(NetKind::Mlp, 1000 + s)).sum();
    assert!(checked > 1000);
}

#[test]
fn linear_models_match_finite_differences() {
    for s in 0..10 {
        check(NetKind::Linear, 2000 + s);
    }
}

#[test]
fn stale_cache_is_rejected() {
    let Case { mut model, z, r } = case(NetKind::Kan, 7);
    let (pred, cache) = model.forward(&z, &r).unwrap();
    let (_, dpred) = mse_loss(&pred.r_hat, &r).unwrap();
    model.param_slices_mut()[0][0] += 0.1;
    assert!(matches!(
        model.backward(&cache, &dpred),
        Err(kanfactor_core::Error::StaleCache)
    ));
}

#[test]
fn rescaling_gamma_out_and_w0_is_invisible() {
    for kind in [NetKind::Kan, NetKind::Mlp, NetKind::Linear] {
        for seed in 0..5 {
            let Case { model, z, r } = case(kind, 300 + seed);
            let (base, _) = model.forward(&z, &r).unwrap();
            for c in [0.5, 2.0, 10.0] {
                let mut m = model.clone();
                let (beta, factor) = m.networks_mut();
                beta.gamma_out_mut().weight = beta.gamma_out().weight.scaled(c);
                factor.w0.weight = factor.w0.weight.scaled(1.0 / c);
                let (p, _) = m.forward(&z, &r).unwrap();
                for (a, b) in p.r_hat.iter().zip(base.r_hat.iter()) {
                    assert!((a - b).abs() <= 1e-12, "{kind} c={c}: {a} vs {b}");
                }
            }
        }
    }
}
