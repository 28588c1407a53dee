use bee_core::balancing::ChunkLayout;
use bee_core::theory::{closed_form_entropy, constraint_residual, mc_entropy, solve_sigma, BalancingTarget};

#[test]
fn vanilla_mc_matches_log_n_minus_half() {
    for n in [256usize, 1024] {
        let r = mc_entropy(n, BalancingTarget::vanilla(), 2000, 1, None).unwrap();
        let expected = (n as f64).ln() - 0.5;
        assert!(
            (r.estimate - expected).abs() <= 3.0 * r.stderr + 0.02,
            "n={n}: {} vs {expected} (stderr {})",
            r.estimate,
            r.stderr
        );
    }
}

#[test]
fn chunked_and_per_token_draws_agree_at_small_sigma() {
    let t = BalancingTarget::new(0.0, 0.25).unwrap();
    let layout = ChunkLayout::contiguous(0, &[16; 64], 0).unwrap();
    let chunked = mc_entropy(1024, t, 1000, 3, Some(&layout)).unwrap();
    let per_token = mc_entropy(1024, t, 1000, 3, None).unwrap();
    let tol = 4.0 * (chunked.stderr.powi(2) + per_token.stderr.powi(2)).sqrt() + 0.02;
    assert!((chunked.estimate - per_token.estimate).abs() <= tol);
}

#[test]
fn solved_sigma_flattens_entropy() {
    let mut closed = Vec::new();
    for n in [256.0, 1024.0, 4096.0] {
        let sigma = solve_sigma(n, 0.0).unwrap();
        assert!(constraint_residual(n, 0.0, sigma).unwrap().abs() < 1e-10);
        closed.push(closed_form_entropy(n, 0.0, sigma).unwrap());
    }
    for h in closed {
        assert!((h - 0.5).abs() < 1e-9);
    }
}

#[test]
fn sigma_grows_with_n_for_both_means() {
    for mu in [0.0, 0.1] {
        let s: Vec<f64> = [16.0, 64.0, 256.0, 1024.0, 4096.0]
            .iter()
            .map(|&n| solve_sigma(n, mu).unwrap())
            .collect();
        assert!(s.windows(2).all(|w| w[0] < w[1]), "{s:?}");
    }
}
