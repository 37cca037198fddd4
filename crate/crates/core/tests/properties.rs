use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qif_core::io::{read_dataset, split_sample, standardize_columns, write_dataset, ColumnSchema};
use qif_core::{
    build_basis, fit, moment_vector, objective, score_jacobian, AuxiliaryInfo, BasisSet, CorrelationStructure,
    ExtendedScoreConfig, FitOptions, LongitudinalDataset, MarginalModelSpec, Subject,
};

fn panel(seed: u64, n: usize, q: usize, p: usize, logit: bool) -> LongitudinalDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
    let subjects = (0..n)
        .map(|_| {
            let x = DMatrix::from_fn(q, p, |_, _| rng.random_range(-1.5..1.5));
            let shared: f64 = rng.random_range(-1.0..1.0);
            let y = DVector::from_fn(q, |j, _| {
                let eta: f64 = (0..p).map(|k| x[(j, k)] * beta[k]).sum();
                if logit {
                    let pr = 1.0 / (1.0 + (-eta).exp());
                    f64::from(u8::from(rng.random::<f64>() < pr))
                } else {
                    eta + shared + rng.random_range(-1.0..1.0)
                }
            });
            Subject::new(y, x)
        })
        .collect();
    LongitudinalDataset::new(subjects).unwrap()
}

fn structure() -> impl Strategy<Value = CorrelationStructure> {
    prop_oneof![
        Just(CorrelationStructure::Independence),
        Just(CorrelationStructure::CompoundSymmetry),
        Just(CorrelationStructure::Ar1),
    ]
}

fn sign_groups(q: usize) -> AuxiliaryInfo {
    let (partition, _) = AuxiliaryInfo::parse("col[1,1] >= 0\ncol[1,1] < 0\n").unwrap();
    AuxiliaryInfo::new(
        partition,
        vec![DVector::from_element(q, 0.1), DVector::from_element(q, -0.2)],
    )
    .unwrap()
}

fn config(s: CorrelationStructure, q: usize, logit: bool, aux: bool) -> ExtendedScoreConfig {
    let spec = if logit {
        MarginalModelSpec::bernoulli()
    } else {
        MarginalModelSpec::gaussian()
    };
    ExtendedScoreConfig::new(spec, build_basis(s, q).unwrap(), aux.then(|| sign_groups(q)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn objective_is_non_negative(seed in any::<u64>(), s in structure(), logit in any::<bool>(), aux in any::<bool>(),
                                 b in prop::collection::vec(-3.0f64..3.0, 2)) {
        let ds = panel(seed, 40, 3, 2, logit);
        let q = objective(&config(s, 3, logit, aux), &ds, &DVector::from_vec(b)).unwrap();
        prop_assert!(q >= 0.0 && q.is_finite());
    }

    #[test]
    fn rescaling_basis_leaves_objective(seed in any::<u64>(), s in prop_oneof![Just(CorrelationStructure::CompoundSymmetry), Just(CorrelationStructure::Ar1)],
                                        c in prop_oneof![-20.0f64..-0.05, 0.05f64..20.0], aux in any::<bool>()) {
        let ds = panel(seed, 60, 4, 2, false);
        let base = config(s, 4, false, aux);
        let mats = base.basis().matrices().to_vec();
        let scaled = BasisSet::from_matrices(vec![mats[0].clone(), &mats[1] * c]).unwrap();
        let other = base.with_basis(scaled);
        let beta = DVector::from_vec(vec![0.3, -0.4]);
        let a = objective(&base, &ds, &beta).unwrap();
        let b = objective(&other, &ds, &beta).unwrap();
        prop_assert!((a - b).abs() <= 1e-8 * a.max(1e-300), "{a} vs {b}");
    }

    #[test]
    fn subject_order_does_not_matter(seed in any::<u64>(), s in structure(), aux in any::<bool>()) {
        let ds = panel(seed, 50, 3, 2, false);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a);
        let mut order: Vec<usize> = (0..ds.n()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let shuffled = ds.select(&order).unwrap();
        let cfg = config(s, 3, false, aux);
        let a = fit(&cfg, &ds, None, &FitOptions::default()).unwrap();
        let b = fit(&cfg, &shuffled, None, &FitOptions::default()).unwrap();
        prop_assert!((&a.beta_hat - &b.beta_hat).amax() < 1e-10);
    }

    #[test]
    fn jacobian_matches_central_differences(seed in any::<u64>(), s in structure(), logit in any::<bool>(), aux in any::<bool>(),
                                            b in prop::collection::vec(-1.0f64..1.0, 3)) {
        let ds = panel(seed, 30, 3, 3, logit);
        let cfg = config(s, 3, logit, aux);
        let beta = DVector::from_vec(b);
        let jac = score_jacobian(&cfg, &ds, &beta).unwrap();
        let h = 1e-5;
        let mut fd = DMatrix::zeros(jac.nrows(), jac.ncols());
        for k in 0..3 {
            let mut up = beta.clone();
            let mut down = beta.clone();
            up[k] += h;
            down[k] -= h;
            let d = (moment_vector(&cfg, &ds, &up).unwrap().mean - moment_vector(&cfg, &ds, &down).unwrap().mean) / (2.0 * h);
            fd.set_column(k, &d);
        }
        let rel = (&jac - &fd).amax() / jac.amax().max(1e-12);
        prop_assert!(rel < 1e-6, "relative error {rel}");
    }

    #[test]
    fn csv_round_trip(seed in any::<u64>(), n in 1usize..20, q in 1usize..5, p in 1usize..4) {
        let ds = panel(seed, n, q, p, false);
        let ids: Vec<String> = (0..n).map(|i| format!("id{i}")).collect();
        let names: Vec<String> = (0..p).map(|k| format!("x{k}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let schema = ColumnSchema::new("id", "t", "y", &refs);
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ds, &ids, &schema).unwrap();
        let back = read_dataset(buf.as_slice(), &schema).unwrap();
        prop_assert_eq!(back.ids, ids);
        for (a, b) in ds.subjects().iter().zip(back.dataset.subjects()) {
            prop_assert!((&a.response - &b.response).amax() <= 1e-12);
            prop_assert!((&a.covariates - &b.covariates).amax() <= 1e-12);
        }
    }

    #[test]
    fn standardizing_twice_is_once(seed in any::<u64>(), n in 3usize..40) {
        let ds = panel(seed, n, 3, 2, false);
        let (once, _) = standardize_columns(&ds, &[0, 1]).unwrap();
        let (twice, _) = standardize_columns(&once, &[0, 1]).unwrap();
        for (a, b) in once.subjects().iter().zip(twice.subjects()) {
            prop_assert!((&a.covariates - &b.covariates).amax() <= 1e-12);
        }
    }

    #[test]
    fn split_partitions_subjects(seed in any::<u64>(), n in 2usize..60, frac in 0.0f64..1.0) {
        let ds = panel(seed, n, 2, 1, false);
        let size = 1 + ((n - 2) as f64 * frac) as usize;
        let split = split_sample(&ds, size, seed).unwrap();
        prop_assert_eq!(split.analysis.n(), size);
        let mut all: Vec<usize> = split.analysis_indices.iter().chain(&split.holdout_indices).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        for (pos, &i) in split.analysis_indices.iter().enumerate() {
            prop_assert_eq!(&split.analysis.subjects()[pos], &ds.subjects()[i]);
        }
    }

    #[test]
    fn empty_aux_block_is_plain_qif(seed in any::<u64>(), s in structure(), logit in any::<bool>()) {
        let ds = panel(seed, 80, 3, 2, logit);
        let plain = config(s, 3, logit, false);
        let empty = plain.with_aux(Some(AuxiliaryInfo::empty()));
        let a = fit(&plain, &ds, None, &FitOptions::default()).unwrap();
        let b = fit(&empty, &ds, None, &FitOptions::default()).unwrap();
        prop_assert_eq!(a, b);
    }
}
