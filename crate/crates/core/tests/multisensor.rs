use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rcf::multisensor::tune_block;
use rcf::ridge::{log_grid, tune_lambda, CvOptions};

fn signal_problem(seed: u64, n: usize, k: usize) -> (DMatrix<f64>, Vec<f64>, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, k, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>() - 0.5).collect();
    let y = (0..n)
        .map(|i| (0..k).map(|j| x[(i, j)] * w[j]).sum::<f64>() + 0.3 * (rng.random::<f64>() - 0.5))
        .collect();
    (x, y, rng)
}

#[test]
fn fusion_never_scores_below_imagery_alone() {
    let grid1 = log_grid(1e-2, 1e3, 6);
    let mut grid2 = grid1.clone();
    grid2.push(1e12);
    for seed in 0..5 {
        let (x, y, mut rng) = signal_problem(seed, 120, 8);
        let z = DMatrix::from_fn(120, 4, |_, _| rng.random::<f64>());
        let single = tune_lambda(&x, &y, &grid1, &CvOptions { folds: 5, seed, ..CvOptions::default() }).unwrap();
        let block = tune_block(&x, &z, &y, &grid1, &grid2, 5, seed).unwrap();
        assert!(
            block.best_mean_r2() >= single.best_mean_r2() - 1e-9,
            "seed {seed}: {} < {}",
            block.best_mean_r2(),
            single.best_mean_r2()
        );
    }
}

#[test]
fn duplicated_block_adds_nothing() {
    let grid = log_grid(1e-2, 1e3, 6);
    let (x, y, _) = signal_problem(3, 150, 10);
    let single = tune_lambda(&x, &y, &grid, &CvOptions { folds: 5, seed: 3, ..CvOptions::default() }).unwrap();
    let block = tune_block(&x, &x, &y, &grid, &grid, 5, 3).unwrap();
    assert!((block.best_mean_r2() - single.best_mean_r2()).abs() < 0.02);
}
