use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;
use warden_core::identity::{match_runs, RunDiff, DEFAULT_LINE_WINDOW};
use warden_core::testkit::{random_finding, random_run, run_with, shift_file};
use warden_core::AnalysisRun;

fn assert_partition(prev: &AnalysisRun, curr: &AnalysisRun, diff: &RunDiff) {
    let mut prev_seen: Vec<usize> = vec![0; prev.findings.len()];
    let mut curr_seen: Vec<usize> = vec![0; curr.findings.len()];
    let index_of = |run: &AnalysisRun, f: &warden_core::Finding| {
        run.findings.iter().position(|g| g == f).expect("finding belongs to the run")
    };
    for p in &diff.persisted {
        prev_seen[index_of(prev, &p.prev)] += 1;
        curr_seen[index_of(curr, &p.curr)] += 1;
    }
    for f in &diff.resolved {
        prev_seen[index_of(prev, f)] += 1;
    }
    for f in &diff.introduced {
        curr_seen[index_of(curr, f)] += 1;
    }
    assert!(prev_seen.iter().all(|&n| n == 1), "prev not partitioned: {prev_seen:?}");
    assert!(curr_seen.iter().all(|&n| n == 1), "curr not partitioned: {curr_seen:?}");
}

/// Runs built so each finding is unique, which the partition check relies on.
fn distinct(run: AnalysisRun) -> AnalysisRun {
    let mut seen = HashSet::new();
    let findings =
        run.findings.into_iter().filter(|f| seen.insert((f.pattern_id.clone(), f.location.clone()))).collect();
    run_with(&run.run_id, findings)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn partition_holds(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prev = distinct(random_run(&mut rng, "p", 40));
        // curr: some of prev (moved a little) plus fresh findings
        let mut findings: Vec<_> = prev
            .findings
            .iter()
            .filter(|_| rand::Rng::random_bool(&mut rng, 0.7))
            .cloned()
            .collect();
        for _ in 0..rand::Rng::random_range(&mut rng, 0..10) {
            findings.push(random_finding(&mut rng, 4));
        }
        let curr = distinct(run_with("c", findings));
        let window = rand::Rng::random_range(&mut rng, 0..20);
        let diff = match_runs(&prev, &curr, window);
        assert_partition(&prev, &curr, &diff);
        prop_assert_eq!(&diff, &match_runs(&prev, &curr, window));
    }

    #[test]
    fn self_match_persists_everything(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let run = random_run(&mut rng, "r", 60);
        let diff = match_runs(&run, &run, DEFAULT_LINE_WINDOW);
        prop_assert_eq!(diff.persisted.len(), run.findings.len());
        prop_assert!(diff.resolved.is_empty() && diff.introduced.is_empty());
        prop_assert!(diff.persisted.iter().all(|p| p.prev == p.curr));
    }

    #[test]
    fn uniform_shift_keeps_matches(seed in any::<u64>(), delta in -10i64..=10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prev = random_run(&mut rng, "p", 60);
        let Some(file) = prev.findings.first().map(|f| f.location.file_path.clone()) else {
            return Ok(());
        };
        // keep lines positive so the shift really is uniform
        let min_line = prev.findings.iter().filter(|f| f.location.file_path == file)
            .filter_map(|f| f.location.start_line).min().unwrap();
        prop_assume!(min_line as i64 + delta >= 1);
        let curr = shift_file(&prev, &file, delta);
        let diff = match_runs(&prev, &curr, DEFAULT_LINE_WINDOW);
        prop_assert_eq!(diff.persisted.len(), prev.findings.len());
        for p in &diff.persisted {
            prop_assert_eq!(&p.prev.fingerprint, &p.curr.fingerprint);
        }
    }
}
