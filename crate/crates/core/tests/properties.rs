use collapsescope::clp::match_permutation;
use collapsescope::metrics::{class_distance_matrix, msdr, nc1, nc2, RepresentationMatrix};
use collapsescope::model::{grad_unhinged, ActivationKind, TwoLayerNet};
use collapsescope::numerics::{gauss_sample, sym_eigen, Matrix, RngStream};
use collapsescope::reduce::{joint_probabilities, kmeans};
use collapsescope::synthgen::{coarsen_labels, refine_with_betas};
use collapsescope::trainer::{train_on, LossKind, Solver, TrainConfig, Targets};
use proptest::prelude::*;

fn gaussian(rows: usize, cols: usize, seed: u64, label: &str) -> Matrix {
    Matrix::from_vec(rows, cols, gauss_sample(&RngStream::new(seed, label), rows * cols, 0.0, 1.0).unwrap()).unwrap()
}

fn rotation(d: usize, seed: u64) -> Matrix {
    let g = gaussian(d, d, seed, "rotation");
    let q = nalgebra::DMatrix::from_row_slice(d, d, g.as_slice()).qr().q();
    Matrix::from_fn(d, d, |i, j| q[(i, j)])
}

fn labels(n: usize, c: usize, seed: u64) -> Vec<usize> {
    // first c samples cover every class
    let noise = gauss_sample(&RngStream::new(seed, "labels"), n, 0.0, 1.0).unwrap();
    (0..n).map(|i| if i < c { i } else { (noise[i].abs() * 1000.0) as usize % c }).collect()
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn partition(assign: &[usize]) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for g in 0..=assign.iter().copied().max().unwrap_or(0) {
        let members: Vec<usize> = (0..assign.len()).filter(|&i| assign[i] == g).collect();
        if !members.is_empty() {
            groups.push(members);
        }
    }
    groups.sort();
    groups
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn nc_metrics_rotation_invariant(seed in 0u64..10_000, n in 8usize..30, c in 2usize..5, d in 2usize..7) {
        let h = gaussian(n, d, seed, "h");
        let y = labels(n, c, seed);
        let r = rotation(d, seed);
        let a = RepresentationMatrix::new(h.clone(), y.clone(), c).unwrap();
        let b = RepresentationMatrix::new(h.matmul(&r).unwrap(), y, c).unwrap();
        prop_assert!(rel_close(nc1(&a).unwrap().value, nc1(&b).unwrap().value, 1e-9));
        prop_assert!(rel_close(nc2(&a).unwrap(), nc2(&b).unwrap(), 1e-9));
    }

    #[test]
    fn msdr_and_nc2_scale_invariant(seed in 0u64..10_000, n in 8usize..30, d in 1usize..6, scale in 1e-3f64..1e3) {
        let h = gaussian(n, d, seed, "h");
        let y = labels(n, 4, seed);
        let map = [0, 1, 0, 1];
        let a = RepresentationMatrix::new(h.clone(), y.clone(), 4).unwrap();
        let b = RepresentationMatrix::new(h.scale(scale), y, 4).unwrap();
        let (da, db) = (class_distance_matrix(&a).unwrap(), class_distance_matrix(&b).unwrap());
        prop_assert!(rel_close(msdr(&da, &map).unwrap(), msdr(&db, &map).unwrap(), 1e-9));
        prop_assert!(rel_close(nc2(&a).unwrap(), nc2(&b).unwrap(), 1e-9));
    }

    #[test]
    fn kmeans_partition_ignores_row_order(seed in 0u64..10_000, n in 6usize..40, k in 1usize..4) {
        // well separated blobs so the optimum is unique
        let noise = gaussian(n, 2, seed, "x");
        let x = Matrix::from_fn(n, 2, |i, j| noise[(i, j)] * 0.1 + if j == 0 { 20.0 * (i % k) as f64 } else { 0.0 });
        let perm: Vec<usize> = (0..n).rev().collect();
        let xp = x.select_rows(&perm);
        let s = RngStream::new(seed, "km");
        let a = kmeans(&x, k, 5, 300, &s).unwrap();
        let b = kmeans(&xp, k, 5, 300, &s).unwrap();
        let mut back = vec![0; n];
        for (pos, &orig) in perm.iter().enumerate() {
            back[orig] = b.assignments[pos];
        }
        prop_assert_eq!(partition(&a.assignments), partition(&back));
        prop_assert!(rel_close(a.inertia, b.inertia, 1e-9));
    }

    #[test]
    fn tsne_joint_p_is_a_distribution(seed in 0u64..10_000, n in 6usize..40) {
        let x = gaussian(n, 3, seed, "x");
        let (p, _) = joint_probabilities(&x, 5.0f64.min((n - 1) as f64 / 3.0 - 0.01).max(1.5)).unwrap();
        prop_assert!(p.is_symmetric(1e-15));
        prop_assert!(p.as_slice().iter().all(|&v| v >= 0.0));
        prop_assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matching_equals_global_exhaustive(seed in 0u64..10_000, supers in 1usize..4, k in 1usize..4, n in 5usize..40) {
        let map: Vec<usize> = (0..supers * k).map(|c| c / k).collect();
        let noise = gauss_sample(&RngStream::new(seed, "m"), 2 * n, 0.0, 1.0).unwrap();
        let pick = |v: f64, m: usize| (v.abs() * 1e4) as usize % m;
        let y: Vec<usize> = (0..n).map(|i| pick(noise[i], supers * k)).collect();
        let recon: Vec<usize> = y.iter().zip(&noise[n..]).map(|(&c, &v)| (c / k) * k + pick(v, k)).collect();
        let m = match_permutation(&recon, &y, &map, k).unwrap();

        // all super-class-respecting bijections at once
        let perms: Vec<Vec<usize>> = {
            use itertools::Itertools;
            (0..k).permutations(k).collect()
        };
        let mut best = 0;
        let total = perms.len().pow(supers as u32);
        for code in 0..total {
            let mut mapping = vec![0; supers * k];
            let mut rest = code;
            for s in 0..supers {
                let p = &perms[rest % perms.len()];
                rest /= perms.len();
                for j in 0..k {
                    mapping[s * k + j] = s * k + p[j];
                }
            }
            best = best.max(recon.iter().zip(&y).filter(|(&r, &t)| mapping[r] == t).count());
        }
        prop_assert_eq!(m.matches, best);

        // relabeling clusters inside a super-class changes nothing
        let shifted: Vec<usize> = recon.iter().map(|&r| (r / k) * k + (r % k + 1) % k).collect();
        prop_assert_eq!(match_permutation(&shifted, &y, &map, k).unwrap().matches, best);
    }

    #[test]
    fn unhinged_gradient_flips_with_labels(seed in 0u64..10_000, n in 2usize..10, d in 1usize..6, m in 1usize..6) {
        let x = gaussian(n, d, seed, "x");
        let net = TwoLayerNet::fixed_ones(gaussian(d, m, seed, "w").scale(0.3), ActivationKind::SmoothedCubic);
        let y: Vec<f64> = (0..n).map(|i| if i % 3 == 0 { -1.0 } else { 1.0 }).collect();
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let g = grad_unhinged(&net, &x, &y).unwrap();
        let gn = grad_unhinged(&net, &x, &neg).unwrap();
        prop_assert!(g.as_slice().iter().zip(gn.as_slice()).all(|(a, b)| *a == -*b));
    }

    #[test]
    fn eigenvalues_sum_to_trace(seed in 0u64..10_000, n in 1usize..12) {
        let b = gaussian(n, n, seed, "b");
        let a = b.add(&b.transpose()).unwrap();
        let e = sym_eigen(&a).unwrap();
        prop_assert!(rel_close(e.values.iter().sum::<f64>(), a.trace(), 1e-9));
    }

    #[test]
    fn coarsening_a_zero_beta_refinement_is_plain_coarsening(seed in 0u64..10_000, n in 1usize..50) {
        let y = labels(n.max(6), 6, seed);
        let refined = refine_with_betas(&y, 6, &vec![false; y.len()]).unwrap();
        prop_assert_eq!(coarsen_labels(&refined, 6, 3).unwrap(), coarsen_labels(&y, 6, 3).unwrap());
    }
}

/// Rotating the inputs and the initial weights together leaves the hidden layer unchanged.
#[test]
fn theorem_training_is_rotation_equivariant() {
    let (n, d, m) = (16, 12, 5);
    let x = gaussian(n, d, 4, "x");
    let w0 = gaussian(d, m, 4, "w").scale(0.2);
    let r = rotation(d, 4);
    let y = Targets::Signs((0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect());
    let cfg = TrainConfig {
        eta: 1e-2,
        steps: 200,
        weight_decay: 0.0,
        init_std: 0.2,
        loss: LossKind::Unhinged,
        seed: 0,
        checkpoint_every: 0,
        extra_checkpoints: vec![],
        record_hidden: true,
        solver: Solver::Direct,
    };
    let hidden = |x: &Matrix, w: Matrix| {
        let (_, log) = train_on(&TwoLayerNet::fixed_ones(w, ActivationKind::SmoothedCubic), x, &y, &cfg).unwrap();
        log.last().unwrap().hidden.clone().unwrap()
    };
    let a = hidden(&x, w0.clone());
    let b = hidden(&x.matmul(&r).unwrap(), r.transpose().matmul(&w0).unwrap());
    let scale = a.max_abs().max(1e-300);
    for (u, v) in a.as_slice().iter().zip(b.as_slice()) {
        assert!((u - v).abs() <= 1e-9 * scale, "{u} vs {v}");
    }
}
