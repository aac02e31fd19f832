mod common;

#[test]
fn short_random_traces_are_clean() {
    for seed in 0..8 {
        let o = common::random_trace(seed, 5_000, 64);
        assert!(
            o.clean(),
            "seed {seed}: {:?}",
            (
                &o.value_errors.iter().take(5).collect::<Vec<_>>(),
                &o.swmr,
                &o.directory,
                &o.conservation.iter().take(5).collect::<Vec<_>>(),
                &o.locks
            )
        );
    }
}
