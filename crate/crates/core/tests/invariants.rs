use mfdyn::dynamics::{
    manifold_membership, sub_manifold_membership, FactorPair, TrainConfig, Trainer,
};
use mfdyn::linalg::{orthonormal_basis, DenseMatrix};
use mfdyn::observation::{build_observation_graph, connected_components, IncompleteMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gauss(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DenseMatrix {
    DenseMatrix::from_fn(r, c, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Values bounded away from zero so every masked entry counts as observed.
fn nonzero_values(rng: &mut ChaCha8Rng, d: usize) -> DenseMatrix {
    DenseMatrix::from_fn(d, d, |_, _| {
        let s = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        s * rng.gen_range(0.5..2.0)
    })
}

fn fixed_step_config(m: &IncompleteMatrix, steps: usize) -> TrainConfig {
    TrainConfig {
        max_steps: steps,
        loss_tolerance: f64::MIN_POSITIVE,
        ..TrainConfig::for_instance(m)
    }
}

fn run(
    m: &IncompleteMatrix,
    cfg: TrainConfig,
    theta: FactorPair,
    steps: usize,
    mut each: impl FnMut(&FactorPair),
) -> FactorPair {
    let mut t = Trainer::from_theta(m, cfg, theta).unwrap();
    for _ in 0..steps {
        t.step().unwrap();
        each(t.theta());
    }
    assert_eq!(t.halvings(), 0, "a fixed step size is required");
    t.into_theta()
}

#[test]
fn span_manifold_is_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let d = rng.gen_range(2..=5);
        let k = rng.gen_range(1..d);
        let mask = DenseMatrix::from_fn(d, d, |_, _| if rng.gen_bool(0.7) { 1.0 } else { 0.0 });
        if mask.as_slice().iter().all(|&x| x == 0.0) {
            continue;
        }
        let m = IncompleteMatrix::new(nonzero_values(&mut rng, d), mask).unwrap();
        let q = orthonormal_basis(&gauss(&mut rng, d, k, 1.0)).unwrap();
        let basis: Vec<Vec<f64>> = (0..k).map(|c| q.column(c)).collect();
        let a = gauss(&mut rng, d, k, 0.3).mul_transpose(&q).unwrap();
        let b = q.matmul(&gauss(&mut rng, k, d, 0.3)).unwrap();
        let cfg = fixed_step_config(&m, 1000);
        run(&m, cfg, FactorPair::new(a, b).unwrap(), 1000, |th| {
            assert!(manifold_membership(th, &basis, 1e-10).unwrap());
        });
    }
}

/// Random mask whose rows and columns split into `groups` blocks; entries
/// only inside blocks, so the observation graph has at least two components.
fn block_instance(rng: &mut ChaCha8Rng, d: usize) -> IncompleteMatrix {
    let groups = rng.gen_range(2..=d.min(3));
    let rg: Vec<usize> = (0..d).map(|i| i % groups).collect();
    let cg: Vec<usize> = (0..d).map(|j| (j + 1) % groups).collect();
    let mut mask = DenseMatrix::from_fn(d, d, |i, j| {
        if rg[i] == cg[j] && rng.gen_bool(0.7) {
            1.0
        } else {
            0.0
        }
    });
    for g in 0..groups {
        let i = rg.iter().position(|&x| x == g).unwrap();
        let j = cg.iter().position(|&x| x == g).unwrap();
        mask[(i, j)] = 1.0;
    }
    IncompleteMatrix::new(nonzero_values(rng, d), mask).unwrap()
}

#[test]
fn component_sub_manifold_is_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..20 {
        let d = rng.gen_range(2..=6);
        let m = block_instance(&mut rng, d);
        let comps = connected_components(&build_observation_graph(&m));
        assert!(comps.len() >= 2);
        let comp = comps.components[rng.gen_range(0..comps.len())].clone();
        let k = rng.gen_range(1..=d);
        let q = orthonormal_basis(&gauss(&mut rng, d, k, 1.0)).unwrap();
        let basis: Vec<Vec<f64>> = (0..k).map(|c| q.column(c)).collect();
        let mut a = gauss(&mut rng, d, k, 0.3).mul_transpose(&q).unwrap();
        let mut b = q.matmul(&gauss(&mut rng, k, d, 0.3)).unwrap();
        for i in (0..d).filter(|i| !comp.rows.contains(i)) {
            a.row_mut(i).fill(0.0);
        }
        for j in (0..d).filter(|j| !comp.cols.contains(j)) {
            b.set_column(j, &vec![0.0; d]);
        }
        let cfg = fixed_step_config(&m, 1000);
        run(&m, cfg, FactorPair::new(a, b).unwrap(), 1000, |th| {
            assert!(sub_manifold_membership(th, &comp, &basis, 1e-10).unwrap());
        });
    }
}

#[test]
fn disconnected_components_train_independently() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..20 {
        let d = rng.gen_range(2..=6);
        let m = block_instance(&mut rng, d);
        let comps = connected_components(&build_observation_graph(&m));
        let theta0 = FactorPair::gaussian(d, 1e-2, &mut rng);
        let cfg = fixed_step_config(&m, 500);
        let mut full = Vec::new();
        run(&m, cfg.clone(), theta0.clone(), 500, |th| {
            full.push(th.clone())
        });
        for comp in &comps.components {
            let mask = DenseMatrix::from_fn(d, d, |i, j| {
                if comp.rows.contains(&i) && comp.cols.contains(&j) {
                    m.mask()[(i, j)]
                } else {
                    0.0
                }
            });
            let sub = IncompleteMatrix::new(m.values().hadamard(&mask).unwrap(), mask).unwrap();
            // Same per-entry step: the loss is normalized by the observation count.
            let sub_cfg = TrainConfig {
                learning_rate: cfg.learning_rate * sub.n() as f64 / m.n() as f64,
                ..fixed_step_config(&sub, 500)
            };
            let mut step = 0;
            run(&sub, sub_cfg, theta0.clone(), 500, |th| {
                let f = &full[step];
                for &i in &comp.rows {
                    for (x, y) in th.a.row(i).iter().zip(f.a.row(i)) {
                        assert!((x - y).abs() <= 1e-12, "step {step} row {i}: {x} vs {y}");
                    }
                }
                for &j in &comp.cols {
                    for (x, y) in th.b.column(j).iter().zip(&f.b.column(j)) {
                        assert!((x - y).abs() <= 1e-12, "step {step} col {j}: {x} vs {y}");
                    }
                }
                step += 1;
            });
        }
    }
}

/// Drift of `A^T A - B B^T` after training for the same total time.
fn imbalance_drift(m: &IncompleteMatrix, theta0: &FactorPair, lr: f64, time: f64) -> f64 {
    let steps = (time / lr).round() as usize;
    let cfg = TrainConfig {
        learning_rate: lr,
        ..fixed_step_config(m, steps)
    };
    let end = run(m, cfg, theta0.clone(), steps, |_| {});
    end.imbalance().max_abs_diff(&theta0.imbalance())
}

#[test]
fn imbalance_drift_is_first_order_in_step_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..5 {
        let d = rng.gen_range(2..=4);
        let m = IncompleteMatrix::new(
            nonzero_values(&mut rng, d),
            DenseMatrix::from_fn(d, d, |_, _| 1.0),
        )
        .unwrap();
        let theta0 = FactorPair::gaussian(d, 0.1, &mut rng);
        let lr = 1e-2 / m.max_abs_observed();
        let time = 200.0 * lr;
        let coarse = imbalance_drift(&m, &theta0, lr, time);
        let fine = imbalance_drift(&m, &theta0, lr / 2.0, time);
        let ratio = coarse / fine;
        assert!((1.6..=2.5).contains(&ratio), "ratio {ratio}");
    }
}
