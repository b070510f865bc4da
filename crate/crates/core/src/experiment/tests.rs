use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;

use super::split::kfold_groups;
use super::*;
use crate::connectivity::{normalize_adjacency, raw_adjacency, ConnectivityConfig, Measure};
use crate::signal::{Session, Task, Trial};

fn tiny(subjects: usize, trials: usize, channels: usize, seed: u64) -> Dataset {
    generate_synthetic(&SyntheticConfig::new(subjects, trials, channels, 200, seed)).unwrap()
}

fn tiny_config(measure: Measure) -> ExperimentConfig {
    let mut config = ExperimentConfig::new(measure, 3);
    config.model.max_epochs = 2;
    config.model.gconv_dims = [8, 4];
    config.model.dense_dims = [16, 8];
    config
}

#[test]
fn hundred_trials_split_seventy_ten_twenty() {
    let ds = tiny(3, 100, 4, 1);
    let plans = stratified_kfold(&ds, 5, 9).unwrap();
    assert_eq!(plans.len(), 5);
    for plan in &plans {
        for s in 0..3 {
            assert_eq!(plan.train[s].len(), 70);
            assert_eq!(plan.validation[s].len(), 10);
            assert_eq!(plan.test[s].len(), 20);
        }
    }
    let mut tests: Vec<usize> = plans.iter().flat_map(|p| p.test_indices()).collect();
    tests.sort_unstable();
    assert_eq!(tests, (0..300).collect::<Vec<_>>());
    assert_eq!(plans, stratified_kfold(&ds, 5, 9).unwrap());
    assert_ne!(plans, stratified_kfold(&ds, 5, 10).unwrap());
}

#[test]
fn too_few_trials_is_a_parameter_error() {
    let groups = vec![(0..8).collect::<Vec<_>>(), (8..30).collect()];
    assert!(matches!(kfold_groups(&groups, 5, 0), Err(Error::InvalidParameter(_))));
    let groups = vec![(0..10).collect::<Vec<_>>(), (10..20).collect()];
    assert!(kfold_groups(&groups, 5, 0).is_ok());
}

proptest! {
    #[test]
    fn folds_partition_every_subject(
        sizes in proptest::collection::vec(10usize..60, 1..5),
        k in 2usize..6,
        seed in any::<u64>(),
    ) {
        let mut next = 0;
        let groups: Vec<Vec<usize>> = sizes
            .iter()
            .map(|&n| {
                let g = (next..next + n).collect();
                next += n;
                g
            })
            .collect();
        prop_assume!(sizes.iter().all(|&n| n / k > 0 && (n - n / k) / 8 > 0));
        let plans = kfold_groups(&groups, k, seed).unwrap();
        for (s, group) in groups.iter().enumerate() {
            let mut seen_in_test = Vec::new();
            for plan in &plans {
                let mut all: Vec<usize> = plan.train[s]
                    .iter()
                    .chain(&plan.validation[s])
                    .chain(&plan.test[s])
                    .copied()
                    .collect();
                all.sort_unstable();
                prop_assert_eq!(&all, group);
                prop_assert!(!plan.train[s].is_empty());
                prop_assert!(!plan.validation[s].is_empty());
                prop_assert_eq!(plan.test[s].len(), group.len() / k);
                seen_in_test.extend_from_slice(&plan.test[s]);
            }
            let len = seen_in_test.len();
            seen_in_test.sort_unstable();
            seen_in_test.dedup();
            prop_assert_eq!(seen_in_test.len(), len);
        }
    }

    #[test]
    fn pooled_crr_is_trial_weighted_mean(
        folds in proptest::collection::vec((1usize..50, 0.0f64..=1.0), 1..8),
    ) {
        let results: Vec<FoldResult> = folds
            .iter()
            .enumerate()
            .map(|(i, &(n, frac))| {
                let correct = (frac * n as f64) as usize;
                FoldResult {
                    setting: "all".to_string(),
                    fold: i,
                    crr: correct as f64 / n as f64,
                    n_test: n,
                    n_correct: correct,
                    best_epoch: 1,
                    history: Vec::new(),
                }
            })
            .collect();
        let total: usize = results.iter().map(|f| f.n_test).sum();
        let weighted: f64 = results.iter().map(|f| f.crr * f.n_test as f64).sum::<f64>() / total as f64;
        let report = ExperimentReport {
            protocol: "p".to_string(),
            measure: Measure::Cor,
            tasks: vec![Task::Synth],
            config: crate::model::ModelConfig::new(4, 200, 2, Measure::Cor),
            folds: results,
            wall_clock_seconds: None,
        };
        prop_assert!((report.pooled_crr() - weighted).abs() <= 1e-12);
    }
}

#[test]
fn crr_examples() {
    let truth: Vec<usize> = (0..10).collect();
    let mut pred = truth.clone();
    assert_eq!(crr(&pred, &truth).unwrap(), 1.0);
    pred[0] = 9;
    pred[1] = 9;
    assert_eq!(crr(&pred, &truth).unwrap(), 0.8);
    let wrong: Vec<usize> = truth.iter().map(|t| (t + 1) % 10).collect();
    assert_eq!(crr(&wrong, &truth).unwrap(), 0.0);
    assert!(matches!(crr(&pred[..3], &truth), Err(Error::InvalidParameter(_))));
    assert!(crr(&[], &[]).is_err());
}

#[test]
fn population_standard_deviation() {
    let (mean, sd) = mean_sd(&[0.8, 1.0]);
    assert!((mean - 0.9).abs() < 1e-15);
    assert!((sd - 0.1).abs() < 1e-15);
    assert_eq!(mean_sd(&[0.5]), (0.5, 0.0));
}

#[test]
fn generator_is_deterministic_and_validates() {
    let a = tiny(2, 3, 4, 11);
    assert_eq!(a, tiny(2, 3, 4, 11));
    assert_ne!(a, tiny(2, 3, 4, 12));
    assert_eq!(a.n_subjects(), 2);
    assert_eq!(a.len(), 6);
    for t in a.trials() {
        assert!(t.data().iter().all(|v| *v == (*v as f32) as f64));
    }
    for (m, n, t) in [(1, 4, 200), (2, 3, 200), (2, 4, 199)] {
        let r = generate_synthetic(&SyntheticConfig::new(m, 2, n, t, 0));
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
    }
}

#[test]
fn channels_share_unit_power() {
    let mut config = SyntheticConfig::new(3, 20, 8, 1000, 5);
    config.snr_db = 100.0;
    let ds = generate_synthetic(&config).unwrap();
    for s in 0..3 {
        for ch in 0..8 {
            let power: f64 = ds
                .trials()
                .iter()
                .filter(|t| t.subject_id == s)
                .map(|t| t.channel(ch).iter().map(|v| v * v).sum::<f64>() / 1000.0)
                .sum::<f64>()
                / 20.0;
            assert!((power - 1.0).abs() < 0.2, "subject {s} channel {ch}: {power}");
        }
    }
}

#[test]
fn noiseless_subjects_have_distinct_correlation_structure() {
    let mut config = SyntheticConfig::new(2, 1, 8, 1000, 21);
    config.snr_db = f64::INFINITY;
    let ds = generate_synthetic(&config).unwrap();
    let cfg = ConnectivityConfig::default();
    let cor: Vec<_> = ds
        .trials()
        .iter()
        .map(|t| normalize_adjacency(&raw_adjacency(t, ds.layout(), Measure::Cor, &cfg, 0).unwrap()))
        .collect();
    let frob: f64 = cor[0]
        .weights()
        .iter()
        .zip(cor[1].weights())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    assert!(frob > 0.5, "{frob}");
}

#[test]
fn session_shift_moves_only_session_two() {
    let mut one = SyntheticConfig::new(2, 2, 6, 200, 4);
    one.session_shift = 0.3;
    let mut two = one.clone();
    two.session = Session::II;
    let mut two_unshifted = two.clone();
    two_unshifted.session_shift = 0.0;
    assert_eq!(subject_mixing(&one, 1), subject_mixing(&two_unshifted, 1));
    assert_ne!(subject_mixing(&one, 1), subject_mixing(&two, 1));
    let a = generate_synthetic(&two_unshifted).unwrap();
    let b = generate_synthetic(&two).unwrap();
    assert!(a.trials().iter().all(|t| t.session == Session::II));
    assert_ne!(a, b);
    assert_ne!(generate_synthetic(&one).unwrap().trials()[0], a.trials()[0]);
}

#[test]
fn dataset_rejects_gaps_and_ragged_trials() {
    let trial = |subject: u32, len: usize| {
        Trial::new(vec![0.5; 2 * len], 2, subject, Session::I, Task::Mi, 250.0).unwrap()
    };
    let layout = ElectrodeLayout::for_channel_count(2);
    assert!(Dataset::new(vec![trial(0, 10), trial(2, 10)], layout.clone()).is_err());
    assert!(matches!(
        Dataset::new(vec![trial(0, 10), trial(1, 11)], layout.clone()),
        Err(Error::Shape(_))
    ));
    assert!(Dataset::new(vec![trial(0, 10)], ElectrodeLayout::for_channel_count(3)).is_err());
    let ds = Dataset::new(vec![trial(1, 10), trial(0, 10), trial(1, 10)], layout).unwrap();
    assert_eq!(ds.subject_indices(), vec![vec![1], vec![0, 2]]);
    assert_eq!(ds.task(), Some(Task::Mi));
    assert_eq!(ds.session(), Some(Session::I));
}

#[test]
fn subset_connectivity_commutes_with_restriction() {
    let ds = tiny(2, 2, 12, 8);
    let channels = [0usize, 3, 4, 7, 9, 11, 2, 5];
    let cfg = ConnectivityConfig::default();
    for trial in ds.trials() {
        let sub = trial.select_channels(&channels).unwrap();
        let layout = ds.layout().select(&channels).unwrap();
        for m in [Measure::Dist, Measure::Cor, Measure::Plv, Measure::Pli, Measure::Rho] {
            let full = raw_adjacency(trial, ds.layout(), m, &cfg, 0).unwrap();
            let direct = raw_adjacency(&sub, &layout, m, &cfg, 0).unwrap();
            assert_eq!(full.select(&channels).unwrap(), direct, "{}", m.name());
        }
    }
}

#[test]
fn full_montage_subset_equals_intra_session() {
    let ds = tiny(3, 10, 4, 2);
    let config = tiny_config(Measure::Cor);
    let group = ElectrodeGroup {
        name: "all".to_string(),
        channels: ds.layout().names().to_vec(),
    };
    let intra = plan_intra_session(&ds, &config).unwrap();
    let subset = plan_electrode_subset(&ds, &group, &config).unwrap();
    assert_eq!(intra.samples(), subset.samples());
    assert_eq!(intra.jobs(), subset.jobs());
    let bad = ElectrodeGroup {
        name: "bad".to_string(),
        channels: vec!["Xx9".to_string()],
    };
    assert!(matches!(
        plan_electrode_subset(&ds, &bad, &config),
        Err(Error::InvalidParameter(_))
    ));
}

#[test]
fn intra_session_reports_five_deterministic_folds() {
    let ds = tiny(3, 10, 4, 2);
    let config = tiny_config(Measure::Cor);
    let report = run_intra_session(&ds, &config).unwrap();
    assert_eq!(report.folds.len(), 5);
    assert_eq!(report.summaries().len(), 1);
    assert_eq!(report.summaries()[0].folds, 5);
    for f in &report.folds {
        assert!((0.0..=1.0).contains(&f.crr));
        assert_eq!(f.n_test, 6);
        assert_eq!(f.history.len(), 2);
    }
    assert_eq!(report, run_intra_session(&ds, &config).unwrap());
}

#[test]
fn cross_session_selection_is_nested_and_disjoint() {
    let source = tiny(2, 10, 4, 3);
    let mut target_cfg = SyntheticConfig::new(2, 20, 4, 200, 3);
    target_cfg.session = Session::II;
    let target = generate_synthetic(&target_cfg).unwrap();
    let mut config = tiny_config(Measure::Cor);
    config.repetitions = 2;
    let plan = plan_cross_session(&source, &target, &FINETUNE_GRID, &config).unwrap();
    assert_eq!(FINETUNE_GRID.len(), 11);
    assert_eq!(FINETUNE_GRID[0], 0.0);
    assert_eq!(plan.jobs().len(), 22);
    let offset = source.len();
    for (i, job) in plan.jobs().iter().enumerate() {
        let fraction = FINETUNE_GRID[i / 2];
        let mut used: Vec<usize> = job.train.iter().chain(&job.validation).copied().collect();
        let borrowed = used.iter().filter(|&&j| j >= offset).count();
        assert_eq!(borrowed, 2 * libm::round(fraction * 20.0) as usize);
        assert_eq!(job.test.len(), 40 - borrowed);
        used.extend_from_slice(&job.test);
        used.sort_unstable();
        assert_eq!(used, (0..offset + 40).collect::<Vec<_>>());
    }
    // a repetition's selection at 10% contains its selection at 5%
    let chosen = |job: &FitJob| {
        let test: Vec<usize> = job.test.clone();
        (offset..offset + 40).filter(|i| !test.contains(i)).collect::<Vec<_>>()
    };
    let small = chosen(&plan.jobs()[2]);
    let large = chosen(&plan.jobs()[4]);
    assert!(small.iter().all(|i| large.contains(i)));
    assert_eq!(plan.jobs()[2].seed, plan.jobs()[4].seed);

    let three = tiny(3, 10, 4, 3);
    assert!(matches!(
        plan_cross_session(&three, &target, &[0.0], &config),
        Err(Error::InvalidParameter(_))
    ));
    assert!(plan_cross_session(&source, &target, &[1.0], &config).is_err());
    let short = generate_synthetic(&SyntheticConfig::new(2, 10, 4, 250, 3)).unwrap();
    assert!(matches!(
        plan_cross_task(&source, &short, &[0.0], &config),
        Err(Error::InvalidParameter(_))
    ));
}

#[test]
fn diverse_tasks_pool_records_both_tasks() {
    let mut a = SyntheticConfig::new(2, 10, 4, 200, 6);
    a.task = Task::Mi;
    let mut b = a.clone();
    b.task = Task::Ssvep;
    b.peaks_hz = vec![8.0, 15.0, 30.0];
    let (a, b) = (generate_synthetic(&a).unwrap(), generate_synthetic(&b).unwrap());
    let plan = plan_diverse_tasks(&[&a, &b], &tiny_config(Measure::Cor)).unwrap();
    assert_eq!(plan.samples().len(), 40);
    assert_eq!(plan.protocol(), "diverse-tasks");
    let report = plan.run().unwrap();
    assert_eq!(report.tasks, vec![Task::Mi, Task::Ssvep]);
}

#[test]
fn finish_checks_result_count() {
    let ds = tiny(2, 10, 4, 2);
    let plan = plan_intra_session(&ds, &tiny_config(Measure::Idn)).unwrap();
    assert!(matches!(plan.finish(Vec::new()), Err(Error::Usage(_))));
    assert!(plan.run_job(99).is_err());
}
