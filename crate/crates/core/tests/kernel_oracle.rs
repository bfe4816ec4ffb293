use kadhop::sim::{kernel_exhaustive, kernel_oracle, KernelCase};
use kadhop::{closest_contacts, Preset, SystemSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec_for(case: &KernelCase) -> SystemSpec {
    let mut spec = SystemSpec::preset(Preset::Mdht, case.b, case.n, 1, 1).unwrap();
    spec.preset = None;
    spec.k = vec![case.k; case.b as usize + 1];
    let mut row = vec![0.0; case.b as usize + 1];
    for &(l, w) in &case.row {
        row[l as usize] += w;
    }
    spec.gain[case.d as usize] = row;
    spec.validate().unwrap();
    spec
}

fn random_row(rng: &mut impl Rng, d: u32) -> Vec<(u32, f64)> {
    let top = d.min(4);
    match rng.random_range(0..3) {
        0 => vec![(1, 1.0)],
        1 => vec![(rng.random_range(1..=top), 1.0)],
        _ if top >= 2 => {
            let l = rng.random_range(1..top);
            vec![(l, 0.75), (l + 1, 0.25)]
        }
        _ => vec![(1, 1.0)],
    }
}

#[test]
fn exhaustive_matches_kernel_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..40 {
        let b = rng.random_range(2..=5);
        let d = rng.random_range(1..=b);
        let case = KernelCase {
            b,
            n: rng.random_range(3..=8),
            k: rng.random_range(1..=4),
            row: random_row(&mut rng, d),
            d,
            gamma: rng.random_range(1..=3),
        };
        let exact = kernel_exhaustive(&case);
        let analytic = closest_contacts(&spec_for(&case), case.d, case.gamma);
        let gap = exact.max_abs_diff(&analytic);
        assert!(gap < 1e-12, "{case:?}: {gap}");
    }
}

#[test]
fn sampled_kernel_within_four_sigma() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for i in 0..6 {
        let b = rng.random_range(5..=8);
        let d = rng.random_range(2..=b);
        let case = KernelCase {
            b,
            n: rng.random_range(10..=60),
            k: rng.random_range(1..=4),
            row: random_row(&mut rng, d),
            d,
            gamma: rng.random_range(1..=2),
        };
        let est = kernel_oracle(&case, 100_000, i);
        let analytic = closest_contacts(&spec_for(&case), case.d, case.gamma);
        assert!(est.max_sigma(&analytic) < 4.5, "{case:?}");
    }
}
