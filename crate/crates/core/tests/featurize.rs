use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rcf::featurize::{activation_map, build_bank, featurize_corpus, featurize_image, BankConfig, Precision};
use rcf::{CellId, Image, PatchBank};

fn random_images(n: usize, hw: usize, seed: u64) -> Vec<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let data = (0..hw * hw * 3).map(|_| rng.random::<f64>()).collect();
            let cell = CellId { row: i, col: 0, lat: 30.0 + i as f64 * 0.01, lon: -100.0 };
            Image::new(hw, hw, 3, data, cell, format!("img{i}")).unwrap()
        })
        .collect()
}

fn config(k: usize, seed: u64) -> BankConfig {
    BankConfig { k, m: 3, eps_rel: 1e-6, center: true, seed }
}

/// Whiten each window and each raw patch separately, dot, add the bias,
/// rectify, average.
fn nested_loop_features(img: &Image, bank: &PatchBank) -> Vec<f64> {
    let (m, d, half) = (bank.m(), bank.dim(), bank.n_stored());
    let mu = bank.mean();
    let w = bank.whitening();
    let whiten = |v: &[f64]| -> Vec<f64> {
        (0..d).map(|a| (0..d).map(|b| w[(a, b)] * (v[b] - mu[b])).sum()).collect()
    };
    let patches: Vec<Vec<f64>> = (0..half).map(|p| whiten(&bank.raw_patch(p))).collect();
    let rows = img.height() - m + 1;
    let cols = img.width() - m + 1;
    let mut sums = vec![0.0; bank.k()];
    for i in 0..rows {
        for j in 0..cols {
            let mut window = Vec::with_capacity(d);
            for di in 0..m {
                for dj in 0..m {
                    for s in 0..bank.bands() {
                        window.push(img.get(i + di, j + dj, s));
                    }
                }
            }
            let ws = whiten(&window);
            for (p, q) in patches.iter().enumerate() {
                let z: f64 = ws.iter().zip(q).map(|(a, b)| a * b).sum();
                sums[p] += (z + 1.0).max(0.0);
                sums[p + half] += (-z + 1.0).max(0.0);
            }
        }
    }
    sums.iter().map(|s| s / (rows * cols) as f64).collect()
}

#[test]
fn fast_path_matches_nested_loops() {
    let images = random_images(10, 32, 1);
    let bank = build_bank(&images, &config(64, 2)).unwrap();
    let table = featurize_corpus(&images, &bank, Precision::F64).unwrap();
    for (i, img) in images.iter().enumerate() {
        let want = nested_loop_features(img, &bank);
        for (a, b) in table.row(i).iter().zip(&want) {
            assert!((a - b).abs() < 1e-10, "image {i}: {a} vs {b}");
        }
    }
}

#[test]
fn pooled_features_are_map_means() {
    let images = random_images(3, 20, 4);
    let bank = build_bank(&images, &config(32, 7)).unwrap();
    for img in &images {
        let x = featurize_image(img, &bank).unwrap();
        for k in [0, 5, 15, 16, 21, 31] {
            let map = activation_map(img, &bank, k).unwrap();
            assert!((map.mean() - x[k]).abs() < 1e-10);
        }
    }
}

#[test]
fn same_seed_same_bytes() {
    let images = random_images(12, 24, 3);
    let a = build_bank(&images, &config(128, 9)).unwrap();
    let b = build_bank(&images, &config(128, 9)).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
    let ta = featurize_corpus(&images, &a, Precision::F64).unwrap();
    let tb = featurize_corpus(&images, &b, Precision::F64).unwrap();
    assert_eq!(ta.values(), tb.values());
    let c = build_bank(&images, &config(128, 10)).unwrap();
    assert_ne!(a.fingerprint(), c.fingerprint());
}

#[test]
fn permuted_corpus_permutes_rows() {
    let images = random_images(6, 16, 5);
    let bank = build_bank(&images, &config(16, 1)).unwrap();
    let table = featurize_corpus(&images, &bank, Precision::F64).unwrap();
    let order = [4, 2, 0, 5, 1, 3];
    let shuffled: Vec<Image> = order.iter().map(|&i| images[i].clone()).collect();
    let again = featurize_corpus(&shuffled, &bank, Precision::F64).unwrap();
    for (r, &i) in order.iter().enumerate() {
        assert_eq!(again.row(r), table.row(i));
    }
}

#[test]
fn f32_storage_is_close() {
    let images = random_images(4, 16, 6);
    let bank = build_bank(&images, &config(32, 2)).unwrap();
    let hi = featurize_corpus(&images, &bank, Precision::F64).unwrap();
    let lo = featurize_corpus(&images, &bank, Precision::F32).unwrap();
    for (a, b) in hi.values().iter().zip(lo.values()) {
        assert!((a - b).abs() <= 1e-4 * a.abs().max(1e-12));
    }
}
