macro_rules! example_test {
    ($module:ident, $file:literal) => {
        #[allow(dead_code)]
        #[path = $file]
        mod $module;

        #[test]
        fn $module() {
            $module::run_example().expect(concat!($file, " should run"));
        }
    };
}

example_test!(core_identity, "../examples/core_identity.rs");
example_test!(alibi_approximation, "../examples/alibi_approximation.rs");
example_test!(multihead_schedule, "../examples/multihead_schedule.rs");
example_test!(grid_attention, "../examples/grid_attention.rs");
example_test!(learnable_params, "../examples/learnable_params.rs");
example_test!(storage_accounting, "../examples/storage_accounting.rs");
