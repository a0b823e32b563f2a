use laganom::diagnostics::{fit_kde, mi_grid, mutual_information, default_bandwidth_grid};
use laganom::Panel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn normals(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

#[test]
fn self_dependence_beats_correlated_pair() {
    let xs = normals(1, 5_000);
    let noise = normals(2, 5_000);
    let ys: Vec<f64> = xs.iter().zip(&noise).map(|(x, e)| 0.8 * x + 0.6 * e).collect();
    let self_mi = mutual_information(&xs, &xs, 128).unwrap();
    let pair = mutual_information(&xs, &ys, 128).unwrap();
    assert!(self_mi > pair, "{self_mi} vs {pair}");
}

#[test]
fn independent_series_have_small_off_diagonal() {
    let panel = Panel::new(vec![normals(3, 3_000), normals(4, 3_000), normals(5, 3_000)], None).unwrap();
    let grid = mi_grid(&panel, &[0, 1, 2], 64).unwrap();
    for a in 0..3 {
        for b in 0..3 {
            if a != b {
                assert!(grid.values[a][b].unwrap() < 0.05);
            }
        }
    }
    let mut csv = Vec::new();
    grid.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 4);
}

#[test]
fn kde_is_non_negative_on_a_grid() {
    let xs = normals(6, 1_000);
    let kde = fit_kde(&xs, 1, &default_bandwidth_grid(&xs, 1)).unwrap();
    for i in 0..200 {
        let x = -10.0 + 0.1 * i as f64;
        assert!(kde.density(&[x]) >= 0.0);
    }
}
