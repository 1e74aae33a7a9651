//! Property tests for serialization and configuration parsing.

use proptest::prelude::*;
use zk_core::config::parse_config;
use zk_core::io::{read_table, write_table};

const FULL: &str = r#"[run]
mode = "simulate"
[grid]
d = 1
nx = 32
ny = 8
transverse_bc = "dirichlet"
[model]
c = 1.0
epsilon = 0.01
nonlinear = true
[forcing]
kind = "zero"
[initial]
preset = "poly-bump"
amplitude = 1.0
[time]
t_end = 0.1
theta = 0.5
cfl = 1.0
dt_max = 0.01
dt_min = 1e-8
extrapolation = "ab2"
[output]
record_interval = 0.01
snapshot_interval = 0.0
keep_states = false
[estimates]
c_prime = 1.0
guard_factor = 0.0
guard_norm = "grad"
compatibility = "warn"
[tolerances]
compatibility = 1e-6
identity = 1e-3
gronwall_slack = 1e-6
[sweep]
epsilons = [1e-2, 1e-3]
[bvp]
n = 64
epsilons = [1e-1, 1e-2]
g = 6.0
nonlinear = false
[verify]
xtilde = 0.5
[mms]
nx = [16, 32]
epsilons = [0.0]
dt_per_h = 1.0
"#;

/// Line indices of `key = value` lines in `FULL`.
fn key_lines() -> Vec<usize> {
    FULL.lines()
        .enumerate()
        .filter(|(_, l)| l.contains(" = "))
        .map(|(i, _)| i)
        .collect()
}

#[test]
fn full_config_parses() {
    parse_config(FULL).unwrap();
}

proptest! {
    #[test]
    fn csv_table_round_trips_bitwise(rows in prop::collection::vec(
        prop::collection::vec(prop::option::of(any::<f64>().prop_filter("finite", |v| v.is_finite())), 3),
        0..20,
    )) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_table(&p, "# t v1", &["a", "b", "c"], &rows).unwrap();
        let back = read_table(&p, "# t v1", &["a", "b", "c"]).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for (r, s) in rows.iter().zip(&back) {
            for (x, y) in r.iter().zip(s) {
                prop_assert_eq!(x.map(f64::to_bits), y.map(f64::to_bits));
            }
        }
    }

    #[test]
    fn one_mutated_key_is_rejected(pick in any::<prop::sample::Index>(), pos in any::<prop::sample::Index>(), c in "[a-z_]") {
        let lines: Vec<&str> = FULL.lines().collect();
        let target = key_lines()[pick.index(key_lines().len())];
        let key = lines[target].split(" = ").next().unwrap();
        let at = pos.index(key.len() + 1);
        let mutated = format!("{}{}{}", &key[..at], c, &key[at..]);
        let text: Vec<String> = lines
            .iter()
            .enumerate()
            .map(|(i, l)| if i == target { l.replacen(key, &mutated, 1) } else { l.to_string() })
            .collect();
        prop_assert!(parse_config(&text.join("\n")).is_err(), "mutated {} -> {}", key, mutated);
    }
}
