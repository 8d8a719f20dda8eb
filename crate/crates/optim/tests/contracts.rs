use gdp_optim::train::{clipped_gradient_sum, l2_norm, sgd_update};
use gdp_optim::{
    adam_update, clip, noisy_adam_step, noisy_gradient, poisson_subsample, run, step_rngs, Algorithm, Dataset,
    LearningRate, Logistic, Loss, OptimizerState, Quadratic, TrainConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, Discrete};

/// Random data with occasional extreme magnitudes.
fn adversarial_data(n: usize, dim: usize, rng: &mut ChaCha20Rng) -> Dataset {
    let features = (0..n)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    let scale = 10f64.powi(rng.gen_range(-6..=150));
                    rng.gen_range(-1.0..1.0) * scale
                })
                .collect()
        })
        .collect();
    let labels = (0..n).map(|_| rng.gen_range(-1e3..1e3)).collect();
    Dataset::new(features, labels).unwrap()
}

#[test]
fn adding_one_example_moves_clipped_sum_by_at_most_r() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let dim = rng.gen_range(1..6);
        let n = rng.gen_range(2..30);
        let data = adversarial_data(n, dim, &mut rng);
        let bound = 10f64.powf(rng.gen_range(-3.0..3.0));
        let theta: Vec<f64> = (0..dim).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let extra = rng.gen_range(0..n);
        let batch: Vec<usize> = (0..n).filter(|&i| i != extra && rng.gen_bool(0.5)).collect();
        let mut with: Vec<usize> = batch.clone();
        with.push(extra);
        let a = clipped_gradient_sum(&theta, &batch, &data, &Quadratic, bound);
        let b = clipped_gradient_sum(&theta, &with, &data, &Quadratic, bound);
        let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| y - x).collect();
        // The difference is the added clipped gradient, up to rounding in the
        // summation of the other terms.
        let scale = batch.len() as f64 * bound * 4.0 * f64::EPSILON;
        let excess = l2_norm(&diff) - bound;
        worst = worst.max(excess / bound);
        assert!(excess <= scale, "{} > {bound}", l2_norm(&diff));
    }
    assert!(worst < 1e-12);
}

proptest! {
    #[test]
    fn clipped_norm_is_bounded(
        v in prop::collection::vec(-1e300f64..1e300, 1..20),
        exp in -200i32..200,
        bound in 1e-3f64..1e3,
    ) {
        let scaled: Vec<f64> = v.iter().map(|x| x * 10f64.powi(exp).min(1.0)).collect();
        let c = clip(&scaled, bound);
        prop_assert!(l2_norm(&c) <= bound);
        if l2_norm(&scaled) <= bound {
            prop_assert_eq!(&c, &scaled);
        }
        for (a, b) in c.iter().zip(&scaled) {
            prop_assert!(a * b >= 0.0);
        }
    }
}

#[test]
fn noiseless_full_batch_is_plain_sgd() {
    let data = Dataset::synthetic(64, 4, 5);
    let cfg = TrainConfig {
        eta: LearningRate::Constant(0.3),
        clip_norm: 1e300,
        sigma: 0.0,
        p: 1.0,
        steps: 50,
        seed: 17,
        ..TrainConfig::default()
    };
    let out = run(&data, &Logistic, &cfg, 1e-5).unwrap();
    let mut theta = vec![0.0; data.dim()];
    for _ in 0..cfg.steps {
        let mut sum = vec![0.0; theta.len()];
        for (x, &y) in data.features.iter().zip(&data.labels) {
            for (s, g) in sum.iter_mut().zip(Logistic.gradient(&theta, x, y)) {
                *s += g;
            }
        }
        let n = data.len() as f64;
        theta = theta.iter().zip(&sum).map(|(t, s)| t - 0.3 * (s / n)).collect();
    }
    assert_eq!(out.state.theta, theta);
    assert!(out.losses.last().unwrap() < &out.losses[0]);
}

fn run_on_threads(threads: usize, cfg: &TrainConfig, data: &Dataset) -> Vec<f64> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| run(data, &Logistic, cfg, 1e-5).unwrap().state.theta)
}

#[test]
fn seeded_runs_agree_across_thread_counts() {
    let data = Dataset::synthetic(400, 5, 2);
    for algorithm in [Algorithm::Sgd, Algorithm::Adam] {
        let cfg = TrainConfig {
            sigma: 1.1,
            p: 0.2,
            steps: 60,
            seed: 42,
            algorithm,
            ..TrainConfig::default()
        };
        let one = run_on_threads(1, &cfg, &data);
        let four = run_on_threads(4, &cfg, &data);
        assert_eq!(one, four);
        assert_eq!(one, run_on_threads(1, &cfg, &data));
        let other = TrainConfig { seed: 43, ..cfg.clone() };
        assert_ne!(one, run_on_threads(4, &other, &data));
    }
}

#[test]
fn batch_sizes_are_binomial() {
    let (n, p, draws) = (40usize, 0.3, 10_000u64);
    let mut counts = vec![0u64; n + 1];
    for t in 0..draws {
        let (mut rng, _) = step_rngs(2024, t);
        counts[poisson_subsample(n, p, &mut rng).len()] += 1;
    }
    let binom = Binomial::new(p, n as u64).unwrap();
    // Pool neighbouring sizes until each cell expects at least 5 draws.
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    for k in 0..=n {
        obs += counts[k] as f64;
        exp += binom.pmf(k as u64) * draws as f64;
        if exp >= 5.0 {
            cells.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    if let Some(last) = cells.last_mut() {
        last.0 += obs;
        last.1 += exp;
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = (cells.len() - 1) as f64;
    let critical = ChiSquared::new(dof).unwrap().inverse_cdf(0.999);
    assert!(stat < critical, "chi-square {stat} over {critical} with {dof} dof");
}

#[test]
fn large_subsample_mean_matches_binomial() {
    let (n, p, trials) = (100_000usize, 0.5, 100);
    let total: usize = (0..trials)
        .map(|t| {
            let (mut rng, _) = step_rngs(7, t as u64);
            poisson_subsample(n, p, &mut rng).len()
        })
        .sum();
    let mean = total as f64 / trials as f64;
    let sd = (n as f64 * p * (1.0 - p) / trials as f64).sqrt();
    assert!((mean - n as f64 * p).abs() <= 3.0 * sd);
}

#[test]
fn noiseless_adam_matches_scratch_recurrence() {
    let data = Dataset::new(
        vec![vec![1.0, 0.5], vec![1.0, -1.5], vec![1.0, 2.0], vec![1.0, 0.1]],
        vec![1.0, -2.0, 3.0, 0.4],
    )
    .unwrap();
    let cfg = TrainConfig {
        eta: LearningRate::Schedule(vec![0.05, 0.04, 0.03]),
        clip_norm: 1e6,
        sigma: 0.0,
        p: 1.0,
        steps: 200,
        beta1: 0.8,
        beta2: 0.95,
        xi: 1e-6,
        seed: 1,
        algorithm: Algorithm::Adam,
    };
    let out = run(&data, &Quadratic, &cfg, 1e-5).unwrap();

    let (mut th0, mut th1) = (0.0f64, 0.0f64);
    let (mut m0, mut m1, mut u0, mut u1) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for t in 0..cfg.steps {
        let eta = [0.05, 0.04, 0.03][(t as usize).min(2)];
        let (mut g0, mut g1) = (0.0, 0.0);
        for (x, y) in data.features.iter().zip(&data.labels) {
            let r = th0 * x[0] + th1 * x[1] - y;
            g0 += r * x[0];
            g1 += r * x[1];
        }
        g0 /= 4.0;
        g1 /= 4.0;
        m0 = 0.8 * m0 + 0.2 * g0;
        m1 = 0.8 * m1 + 0.2 * g1;
        u0 = 0.95 * u0 + 0.05 * g0 * g0;
        u1 = 0.95 * u1 + 0.05 * g1 * g1;
        th0 -= eta * m0 / (u0.sqrt() + 1e-6);
        th1 -= eta * m1 / (u1.sqrt() + 1e-6);
    }
    assert!((out.state.theta[0] - th0).abs() < 1e-12);
    assert!((out.state.theta[1] - th1).abs() < 1e-12);
}

#[test]
fn decay_free_adam_is_normalized_step() {
    let cfg = TrainConfig {
        beta1: 0.0,
        beta2: 0.0,
        xi: 1e-8,
        ..TrainConfig::default()
    };
    let state = OptimizerState::new(vec![1.0, -2.0, 0.0]);
    let g = [0.5, -3.0, 0.0];
    let next = adam_update(&state, &g, 0.1, &cfg);
    assert_eq!(next.m, g.to_vec());
    assert_eq!(next.u, g.iter().map(|x| x * x).collect::<Vec<_>>());
    for i in 0..3 {
        let w = g[i] / (g[i].abs() + 1e-8);
        assert_eq!(next.theta[i], state.theta[i] - 0.1 * w);
    }
}

#[test]
fn adam_state_is_a_function_of_the_noisy_gradients() {
    let data = Dataset::synthetic(100, 3, 8);
    let cfg = TrainConfig {
        sigma: 1.3,
        p: 0.1,
        algorithm: Algorithm::Adam,
        ..TrainConfig::default()
    };
    let mut live = OptimizerState::new(vec![0.0; 3]);
    let mut stream = Vec::new();
    for t in 0..30 {
        let (mut sampling, mut noise) = step_rngs(cfg.seed, t);
        let batch = poisson_subsample(data.len(), cfg.p, &mut sampling);
        let mut replay_noise = noise.clone();
        stream.push(noisy_gradient(&live.theta, &batch, &data, &Logistic, &cfg, &mut replay_noise));
        live = noisy_adam_step(&live, &batch, &data, &Logistic, &cfg, &mut noise);
    }
    let mut replayed = OptimizerState::new(vec![0.0; 3]);
    for (t, g) in stream.iter().enumerate() {
        replayed = match g {
            Some(g) => adam_update(&replayed, g, cfg.eta.at(t as u64), &cfg),
            None => OptimizerState {
                step: replayed.step + 1,
                ..replayed
            },
        };
    }
    assert_eq!(live, replayed);
}

#[test]
fn sgd_update_is_plain_descent() {
    let s = OptimizerState::new(vec![1.0, 2.0]);
    assert_eq!(sgd_update(&s, &[0.5, -1.0], 0.2).theta, vec![0.9, 2.2]);
}

#[test]
fn report_follows_clt_formula() {
    let data = Dataset::synthetic(200, 3, 3);
    let cfg = TrainConfig {
        sigma: 1.1,
        p: 0.05,
        steps: 400,
        ..TrainConfig::default()
    };
    let out = run(&data, &Logistic, &cfg, 1e-5).unwrap();
    let want = 0.05 * 400f64.sqrt() * (1.0 / 1.21f64).exp_m1().sqrt();
    let mu = out.report.mu.unwrap();
    assert!((mu - want).abs() < 1e-9);
    assert!((mu - 1.134).abs() < 1e-3);
    assert_eq!(out.batch_sizes.len(), 400);
    assert!(out.report.eps > 0.0);
}

#[test]
fn degenerate_runs() {
    let data = Dataset::synthetic(50, 2, 4);
    let base = TrainConfig {
        sigma: 0.0,
        p: 0.5,
        steps: 10,
        ..TrainConfig::default()
    };
    assert_eq!(run(&data, &Logistic, &base, 1e-5).unwrap().report.mu, Some(f64::INFINITY));
    let none = TrainConfig { steps: 0, sigma: 1.0, ..base };
    let out = run(&data, &Logistic, &none, 1e-5).unwrap();
    assert_eq!(out.state.theta, vec![0.0, 0.0]);
    assert_eq!(out.report.mu, Some(0.0));
    let bad = TrainConfig { p: 0.0, ..none };
    assert!(run(&data, &Logistic, &bad, 1e-5).is_err());
}
