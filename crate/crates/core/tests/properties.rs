use std::path::{Path, PathBuf};

use statrs::distribution::{ChiSquared, ContinuousCDF};

use bdtsim::dataset::{add_input_noise, load_wdbc, load_wdbc_split, read_wdbc_raw};
use bdtsim::experiments::sweep::{run_sweep, Axis, ModelSpec, SweepSpec};
use bdtsim::grng::GrngConfig;
use bdtsim::inference::{draw_epsilons, pipelines_for, predict_batch, traverse_software, tree_pipelines, InferenceOptions, Predictor};
use bdtsim::mapping::map_node_wise;
use bdtsim::sim::NoiseSpec;
use bdtsim::training::train;
use bdtsim::tree::{TreeKind, TreeNode};

fn wdbc() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/wdbc.data")
}

#[test]
fn wdbc_file_shape() {
    let raw = read_wdbc_raw(wdbc()).unwrap();
    assert_eq!(raw.rows.len(), 569);
    assert_eq!(raw.labels.iter().filter(|&&l| l == 1).count(), 212);
    let d = load_wdbc(wdbc()).unwrap();
    assert_eq!(d.n_features(), 30);
    assert!(d.rows().flatten().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn split_is_disjoint_and_seeded() {
    let (a, b) = load_wdbc_split(wdbc(), 0.25, 3).unwrap();
    assert_eq!(a.len() + b.len(), 569);
    assert_eq!(b.len(), 142);
    let (c, _) = load_wdbc_split(wdbc(), 0.25, 3).unwrap();
    assert_eq!(a, c);
}

/// Comparing `x + eps` with `mu` and sampling thresholds `mu + eps` differ
/// by the sign of `eps`; both must give the same path distribution.
#[test]
fn sign_conventions_share_path_distribution() {
    let (train_set, test) = load_wdbc_split(wdbc(), 0.25, 0).unwrap();
    let t = train(&train_set, TreeKind::Bdt, 3, 2).unwrap();
    let p = tree_pipelines(&t, &GrngConfig::default()).unwrap();
    let internal = t.internal_nodes();
    let n_paths = t.paths().len();
    // A sample near several boundaries so many paths are visited.
    let x = (0..test.len())
        .map(|i| test.row(i))
        .min_by(|a, b| {
            let near = |x: &[f64]| {
                t.nodes()
                    .iter()
                    .filter_map(|n| match *n {
                        TreeNode::Internal { feature, mu, sigma, .. } if sigma > 0.0 => {
                            Some(((x[feature] - mu) / sigma).abs())
                        }
                        _ => None,
                    })
                    .sum::<f64>()
            };
            near(a).total_cmp(&near(b))
        })
        .unwrap();
    let n = 10_000;
    let (mut plus, mut minus) = (vec![0f64; n_paths], vec![0f64; n_paths]);
    let mut eps = vec![0.0; t.nodes().len()];
    for i in 0..n {
        let draws = draw_epsilons(&p, 1, i);
        for (k, e) in draws.iter().enumerate() {
            eps[internal[k]] = *e;
        }
        plus[traverse_software(&t, x, &eps)] += 1.0;
        // Independent draws for the second semantics.
        let draws = draw_epsilons(&p, 2, i);
        for (k, e) in draws.iter().enumerate() {
            eps[internal[k]] = -*e;
        }
        minus[traverse_software(&t, x, &eps)] += 1.0;
    }
    let used: Vec<usize> = (0..n_paths).filter(|&k| plus[k] + minus[k] > 0.0).collect();
    assert!(used.len() >= 2, "sample should straddle boundaries");
    // Two-sample homogeneity with equal totals.
    let stat: f64 = used
        .iter()
        .map(|&k| (plus[k] - minus[k]).powi(2) / (plus[k] + minus[k]))
        .sum();
    let df = (used.len() - 1) as f64;
    let p_value = 1.0 - ChiSquared::new(df).unwrap().cdf(stat);
    assert!(p_value > 0.01, "chi-square {stat} on {df} df, p = {p_value}");
}

#[test]
fn more_iterations_do_not_hurt_on_noisy_data() {
    let (train_set, test) = load_wdbc_split(wdbc(), 0.25, 1).unwrap();
    let t = train(&train_set, TreeKind::Bdt, 4, 2).unwrap();
    let a = map_node_wise(&t).unwrap();
    let p = pipelines_for(&a, &GrngConfig::default()).unwrap();
    let noise = NoiseSpec { read_sigma: 0.1, ..NoiseSpec::default() };
    let noisy = add_input_noise(&test, 0.05, 9).unwrap();
    let mean_acc = |n_iter: usize| {
        (0..5)
            .map(|s| {
                let opts = InferenceOptions { n_iter, noise, ..Default::default() };
                predict_batch(Predictor::Array(&a), &noisy, &opts, &p, s).unwrap().accuracy
            })
            .sum::<f64>()
            / 5.0
    };
    let (one, hundred) = (mean_acc(1), mean_acc(100));
    assert!(hundred >= one - 0.02, "n_iter 100: {hundred}, n_iter 1: {one}");
}

#[test]
fn dt_degrades_monotonically_with_device_noise() {
    let (train_set, test) = load_wdbc_split(wdbc(), 0.25, 2).unwrap();
    let spec = SweepSpec {
        trials: 3,
        ..SweepSpec::new(
            Axis::DeviceNoise,
            vec![0.0, 0.05, 0.1, 0.2, 0.3],
            vec![ModelSpec { kind: TreeKind::Dt, max_depth: 4 }],
        )
    };
    let r = run_sweep(&spec, &train_set, &test).unwrap();
    let pts = &r.series[0].points;
    for w in pts.windows(2) {
        let slack = w[0].std_acc + w[1].std_acc + 1e-9;
        assert!(w[1].mean_acc <= w[0].mean_acc + slack, "{:?} -> {:?}", w[0], w[1]);
    }
}

#[test]
fn bdt_beats_dt_under_device_noise() {
    let (train_set, test) = load_wdbc_split(wdbc(), 0.25, 0).unwrap();
    let models = vec![
        ModelSpec { kind: TreeKind::Dt, max_depth: 6 },
        ModelSpec { kind: TreeKind::Bdt, max_depth: 6 },
    ];
    let spec = SweepSpec { trials: 3, ..SweepSpec::new(Axis::DeviceNoise, vec![0.1, 0.2], models) };
    let r = run_sweep(&spec, &train_set, &test).unwrap();
    for (dt, bdt) in r.series[0].points.iter().zip(&r.series[1].points) {
        assert!(bdt.mean_acc >= dt.mean_acc, "sigma {:?}: BDT {} < DT {}", dt.value, bdt.mean_acc, dt.mean_acc);
    }
}
