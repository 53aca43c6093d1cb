// SPDX-License-Identifier: Apache-2.0

macro_rules! example {
    ($name:ident, $test:ident) => {
        #[allow(dead_code)]
        mod $name {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", stringify!($name), ".rs"));
        }

        #[test]
        fn $test() {
            $name::run_example().expect(concat!(stringify!($name), " should run"));
        }
    };
}

example!(equilibrium_and_bgk, equilibrium_and_bgk_runs);
example!(spectral_grid, spectral_grid_runs);
example!(linearized_group, linearized_group_runs);
example!(gevrey_trace, gevrey_trace_runs);
example!(relaxation_decay, relaxation_decay_runs);
example!(bgk_run, bgk_run_runs);
example!(duhamel_picard, duhamel_picard_runs);
example!(abstract_battery, abstract_battery_runs);
example!(stability_scan, stability_scan_runs);
example!(experiment_runner, experiment_runner_runs);
