mod common;

use common::{chacha, random_matrix, sigmoid};
use hetinfomax::cluster::{
    cluster_summaries, cosine_similarities, fit, fit_from, hard_labels, init_centers, update_assignments, update_centers,
    ClusterConfig,
};
use hetinfomax::numkit::Matrix;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn config(clusters: usize, beta: f64, iterations: usize) -> ClusterConfig {
    ClusterConfig {
        clusters,
        beta,
        iterations,
        literal_sign: false,
    }
}

/// Points scattered with standard deviation `sigma` around the given centers,
/// `per` points each, labels in center order.
fn blobs(centers: &[Vec<f64>], per: usize, sigma: f64, seed: u64) -> (Matrix, Vec<usize>) {
    let mut r = chacha(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let d = centers[0].len();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per {
            data.extend(center.iter().map(|v| v + noise.sample(&mut r)));
            labels.push(c);
        }
    }
    (Matrix::from_vec(centers.len() * per, d, data), labels)
}

fn axis_centers(r: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..r).map(|c| (0..r).map(|k| if k == c { scale } else { 0.0 }).collect()).collect()
}

/// Fraction of points whose label matches the planted one under the best
/// relabeling.
fn matched_accuracy(found: &[usize], planted: &[usize], r: usize) -> f64 {
    fn perms(r: usize) -> Vec<Vec<usize>> {
        if r == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in perms(r - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, r - 1);
                out.push(q);
            }
        }
        out
    }
    perms(r)
        .iter()
        .map(|map| found.iter().zip(planted).filter(|(f, p)| map[**f] == **p).count())
        .max()
        .unwrap() as f64
        / planted.len() as f64
}

#[test]
fn assignments_are_row_stochastic_on_hundred_instances() {
    for trial in 0..100 {
        let mut r = chacha(trial);
        let n = r.random_range(2..30);
        let d = r.random_range(1..6);
        let k = r.random_range(1..=n.min(5));
        let beta = if trial % 2 == 0 { r.random_range(0.5..10.0) } else { r.random_range(10.0..100.0) };
        let points = random_matrix(n, d, 2.0, &mut r);
        let state = fit(&points, &config(k, beta, 5), trial).unwrap();
        let direct = update_assignments(&points, &state.centers, &state.config).unwrap();
        for c in [&state.assignments, &direct] {
            for row in c.row_iter() {
                let s: f64 = row.iter().sum();
                assert!((s - 1.0).abs() <= 1e-9, "trial {trial}");
                assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)), "trial {trial}");
                // With a logit gap of at most 2β the extremes stay representable.
                if k > 1 && beta <= 10.0 {
                    assert!(row.iter().all(|&v| v > 0.0 && v < 1.0), "trial {trial}");
                }
            }
        }
    }
}

#[test]
fn centers_lie_in_the_bounding_box_of_the_points() {
    for trial in 0..50 {
        let mut r = chacha(200 + trial);
        let points = random_matrix(20, 3, 1.0, &mut r);
        let state = fit(&points, &config(4, 20.0, 6), trial).unwrap();
        for c in 0..4 {
            for j in 0..3 {
                let col = (0..20).map(|i| points[(i, j)]);
                let lo = col.clone().fold(f64::INFINITY, f64::min);
                let hi = col.fold(f64::NEG_INFINITY, f64::max);
                let v = state.centers[(c, j)];
                assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }
}

#[test]
fn update_centers_matches_weighted_mean() {
    let mut r = chacha(5);
    let points = random_matrix(9, 4, 1.0, &mut r);
    let raw = random_matrix(9, 3, 1.0, &mut r).map(|v| v.exp());
    let assignments = Matrix::from_fn(9, 3, |i, c| raw[(i, c)] / raw.row(i).iter().sum::<f64>());
    let centers = update_centers(&points, &assignments).unwrap();
    for c in 0..3 {
        let mass: f64 = (0..9).map(|i| assignments[(i, c)]).sum();
        for j in 0..4 {
            let want = (0..9).map(|i| assignments[(i, c)] * points[(i, j)]).sum::<f64>() / mass;
            assert!((centers[(c, j)] - want).abs() <= 1e-12);
        }
    }
}

#[test]
fn summaries_match_direct_weighted_sum() {
    let mut r = chacha(6);
    let points = random_matrix(10, 4, 1.0, &mut r);
    let state = fit(&points, &config(3, 10.0, 3), 1).unwrap();
    let z = cluster_summaries(&points, &state).unwrap();
    let sims = cosine_similarities(&points, &state.centers, None).unwrap();
    for i in 0..10 {
        let logits: Vec<f64> = sims.row(i).iter().map(|s| 10.0 * s).collect();
        let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = e.iter().sum();
        for j in 0..4 {
            let mix: f64 = (0..3).map(|c| e[c] / total * state.centers[(c, j)]).sum();
            assert!((z[(i, j)] - sigmoid(mix)).abs() <= 1e-12);
            assert!(z[(i, j)] > 0.0 && z[(i, j)] < 1.0);
        }
    }
}

#[test]
fn summaries_ignore_cluster_order() {
    let mut r = chacha(7);
    let points = random_matrix(12, 3, 1.0, &mut r);
    let state = fit(&points, &config(3, 30.0, 4), 2).unwrap();
    let order = [2, 0, 1];
    let mut swapped = state.clone();
    swapped.centers = state.centers.select_rows(&order);
    swapped.assignments = Matrix::from_fn(12, 3, |i, c| state.assignments[(i, order[c])]);
    let a = cluster_summaries(&points, &state).unwrap();
    let b = cluster_summaries(&points, &swapped).unwrap();
    assert!(a.max_abs_diff(&b) <= 1e-12);
}

proptest! {
    #[test]
    fn larger_beta_never_softens(seed in any::<u64>(), low in 0.1f64..50.0, factor in 1.0f64..10.0) {
        let mut r = chacha(seed);
        let points = random_matrix(8, 3, 1.0, &mut r);
        let centers = random_matrix(3, 3, 1.0, &mut r);
        let soft = update_assignments(&points, &centers, &config(3, low, 1)).unwrap();
        let sharp = update_assignments(&points, &centers, &config(3, low * factor, 1)).unwrap();
        for i in 0..8 {
            let a = soft.row(i).iter().cloned().fold(0.0, f64::max);
            let b = sharp.row(i).iter().cloned().fold(0.0, f64::max);
            prop_assert!(b >= a - 1e-15);
        }
    }
}

#[test]
fn single_cluster_init_is_a_data_row() {
    let mut r = chacha(8);
    let points = random_matrix(7, 2, 1.0, &mut r);
    for seed in 0..20 {
        let c = init_centers(&points, 1, seed).unwrap();
        assert!((0..7).any(|i| c.row(0) == points.row(i)));
    }
}

#[test]
fn kmeans_plus_plus_splits_far_clouds() {
    let (points, labels) = blobs(&[vec![0.0, 0.0], vec![100.0, 100.0]], 10, 1.0, 9);
    let mut good = 0;
    for seed in 0..1000 {
        let c = init_centers(&points, 2, seed).unwrap();
        let owner = |row: &[f64]| {
            let i = (0..points.rows()).find(|&i| points.row(i) == row).unwrap();
            labels[i]
        };
        if owner(c.row(0)) != owner(c.row(1)) {
            good += 1;
        }
    }
    assert!(good as f64 / 1000.0 > 0.99, "{good}");
}

#[test]
fn points_at_distinct_locations_are_recovered_within_five_steps() {
    let locations = [vec![3.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 1.0]];
    let (points, _) = blobs(&locations, 5, 0.0, 0);
    for seed in 0..10 {
        let state = fit(&points, &config(3, 1000.0, 5), seed).unwrap();
        for loc in &locations {
            let best = (0..3)
                .map(|c| state.centers.row(c).iter().zip(loc).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                .fold(f64::INFINITY, f64::min);
            assert!(best <= 1e-6, "seed {seed}: {best}");
        }
    }
}

#[test]
fn planted_blobs_are_labelled_exactly() {
    let (points, planted) = blobs(&axis_centers(3, 10.0), 20, 1.0, 11);
    let state = fit(&points, &config(3, 100.0, 10), 3).unwrap();
    assert_eq!(matched_accuracy(&state.hard_labels(), &planted, 3), 1.0);
}

/// Hard Lloyd iterations with cosine nearest-center assignment.
fn lloyd_labels(points: &Matrix, mut centers: Matrix, iterations: usize) -> Vec<usize> {
    let assign = |centers: &Matrix| hard_labels(&cosine_similarities(points, centers, None).unwrap());
    for _ in 0..iterations {
        let labels = assign(&centers);
        for c in 0..centers.rows() {
            let members: Vec<usize> = (0..points.rows()).filter(|&i| labels[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            let mean = points.select_rows(&members).column_mean();
            centers.row_mut(c).copy_from_slice(mean.row(0));
        }
    }
    assign(&centers)
}

#[test]
fn large_beta_reproduces_lloyd_labels() {
    for seed in 0..10 {
        let (points, _) = blobs(&axis_centers(3, 10.0), 15, 1.0, 100 + seed);
        let start = init_centers(&points, 3, seed).unwrap();
        let soft = fit_from(&points, start.clone(), &config(3, 1e4, 8)).unwrap();
        assert_eq!(soft.hard_labels(), lloyd_labels(&points, start, 8), "seed {seed}");
    }
}
