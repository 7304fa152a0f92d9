mod common;

use common::{assets, lenet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splitnoise::network::valid_cuts;
use splitnoise::planner::{build_cost_table, choose_cut, DeviceProfile};
use splitnoise::wire::activation_frame_len;

fn profile(name: &str) -> DeviceProfile {
    DeviceProfile::load(assets().join(format!("profiles/{name}.toml"))).unwrap()
}

/// Brute-force total latency for one cut, summed directly from the profile.
fn reference_total(p: &DeviceProfile, shapes: &[Vec<usize>], cut: usize) -> f64 {
    let bytes = 10 + 1 + 4 * shapes[cut].len() + 4 * shapes[cut].iter().product::<usize>();
    p.edge_ms[..cut].iter().sum::<f64>()
        + p.latency_ms
        + 1000.0 * bytes as f64 / p.bandwidth_bytes_per_s
        + p.cloud_ms[cut..].iter().sum::<f64>()
}

#[test]
fn cost_rows_match_direct_sums() {
    let net = lenet();
    let shapes = net.spec().shapes().unwrap();
    for name in ["lenet5-lte", "lenet5-offload"] {
        let p = profile(name);
        let t = build_cost_table(net.spec(), &p).unwrap();
        assert_eq!(
            t.rows.iter().map(|r| r.cut).collect::<Vec<_>>(),
            valid_cuts(net.spec())
        );
        for row in t.rows.iter().chain([&t.input_baseline]) {
            let r = reference_total(&p, &shapes, row.cut);
            assert!(
                (row.total_ms - r).abs() < 1e-9 * r,
                "{name} cut {}",
                row.cut
            );
            assert_eq!(row.transmit_bytes, activation_frame_len(&shapes[row.cut]));
        }
    }
}

#[test]
fn lte_profile_prefers_the_last_conv_cut() {
    let t = build_cost_table(lenet().spec(), &profile("lenet5-lte")).unwrap();
    assert_eq!(choose_cut(&t).unwrap(), 7);
    let best = t
        .rows
        .iter()
        .map(|r| r.total_ms)
        .fold(f64::INFINITY, f64::min);
    assert!((best - 24.563).abs() < 1e-3, "{best}");
}

#[test]
fn planner_never_returns_the_input_even_when_it_is_cheapest() {
    let t = build_cost_table(lenet().spec(), &profile("lenet5-offload")).unwrap();
    assert!(t
        .rows
        .iter()
        .all(|r| t.input_baseline.total_ms < r.total_ms));
    let cut = choose_cut(&t).unwrap();
    assert_ne!(cut, 0);
    assert_eq!(cut, 3);
}

fn random_profile(rng: &mut impl Rng, layers: usize) -> DeviceProfile {
    DeviceProfile {
        name: "random".into(),
        edge_ms: (0..layers).map(|_| rng.random_range(0.01..50.0)).collect(),
        cloud_ms: (0..layers).map(|_| rng.random_range(0.001..5.0)).collect(),
        bandwidth_bytes_per_s: 10f64.powf(rng.random_range(4.0..9.0)),
        latency_ms: rng.random_range(0.0..100.0),
    }
}

#[test]
fn argmin_is_invariant_under_uniform_scaling() {
    let spec = lenet().spec().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..100 {
        let p = random_profile(&mut rng, spec.layers.len());
        let cut = choose_cut(&build_cost_table(&spec, &p).unwrap()).unwrap();
        for c in [0.001, 0.5, 3.0, 1000.0] {
            let scaled = choose_cut(&build_cost_table(&spec, &p.scaled(c)).unwrap()).unwrap();
            assert_eq!(scaled, cut, "scale {c}");
        }
    }
}

#[test]
fn bad_profiles_are_rejected() {
    let spec = lenet().spec().clone();
    let good = profile("lenet5-lte");
    let mut short = good.clone();
    short.edge_ms.pop();
    assert!(build_cost_table(&spec, &short).is_err());
    let mut negative = good.clone();
    negative.cloud_ms[2] = -1.0;
    assert!(negative.validate().is_err());
    let mut no_bandwidth = good.clone();
    no_bandwidth.bandwidth_bytes_per_s = 0.0;
    assert!(no_bandwidth.validate().is_err());
    assert!(DeviceProfile::from_toml_str("name = 3").is_err());
    let text = good.to_toml_string();
    assert_eq!(DeviceProfile::from_toml_str(&text).unwrap(), good);
}
