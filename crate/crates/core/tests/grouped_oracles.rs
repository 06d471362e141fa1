use std::io::Cursor;

use lorenz_abc::gb::{lorenz, GbParams, GbSampler, SubModel};
use lorenz_abc::grouped::{
    from_sample, gini_lower_bound, gini_upper_bound, load_grouped, quantile_grid, summary_select, write_grouped,
    ColumnKind, FormatDescriptor, GroupedData, GroupedError, GroupedShares,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn draws(g: GbParams, n: usize, seed: u64) -> Vec<f64> {
    let sampler = GbSampler::new(g);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| sampler.sample(&mut rng)).collect()
}

/// Gini of a finite discrete law by the mean-difference definition.
fn discrete_gini(atoms: &[(f64, f64)]) -> f64 {
    let mu: f64 = atoms.iter().map(|(x, w)| x * w).sum();
    let mut md = 0.0;
    for (x, w) in atoms {
        for (y, v) in atoms {
            md += w * v * (x - y).abs();
        }
    }
    md / (2.0 * mu)
}

/// Two-point allocations `(lo, hi, weight on hi)` on an 11-point grid that
/// preserve the class mean.
fn two_point_allocations(lo: f64, hi: f64, mean: f64) -> Vec<(f64, f64, f64)> {
    let grid: Vec<f64> = (0..=10).map(|i| lo + (hi - lo) * i as f64 / 10.0).collect();
    let mut out = Vec::new();
    for &a in grid.iter().filter(|&&a| a <= mean) {
        for &b in grid.iter().filter(|&&b| b >= mean) {
            if b > a {
                out.push((a, b, (mean - a) / (b - a)));
            } else {
                out.push((a, a, 0.0));
            }
        }
    }
    out
}

#[test]
fn upper_bound_matches_brute_force_on_three_classes() {
    let z = [0.0, 1.0, 2.0, 4.0];
    let probs = [0.5, 0.3, 0.2];
    let means = [0.5, 1.5, 3.0];
    let mu: f64 = probs.iter().zip(&means).map(|(p, m)| p * m).sum();
    let allocs: Vec<_> = (0..3).map(|j| two_point_allocations(z[j], z[j + 1], means[j])).collect();
    let mut best: f64 = 0.0;
    for a0 in &allocs[0] {
        for a1 in &allocs[1] {
            for a2 in &allocs[2] {
                let mut atoms = Vec::with_capacity(6);
                for (j, &(lo, hi, w)) in [a0, a1, a2].into_iter().enumerate() {
                    atoms.push((lo, probs[j] * (1.0 - w)));
                    atoms.push((hi, probs[j] * w));
                }
                best = best.max(discrete_gini(&atoms));
            }
        }
    }
    let pop = [0.5, 0.8];
    let inc = [0.5 * 0.5 / mu, (0.25 + 0.45) / mu];
    let shares = GroupedShares::from_interior(&pop, &inc, None).unwrap();
    let upper = gini_upper_bound(&shares, Some(&z), Some(mu)).unwrap();
    assert!((upper - best).abs() < 1e-6, "formula {upper}, brute force {best}");
    let point_masses: Vec<(f64, f64)> = means.iter().zip(probs).map(|(&m, p)| (m, p)).collect();
    assert!((gini_lower_bound(&shares) - discrete_gini(&point_masses)).abs() < 1e-12);
}

#[test]
fn lower_bound_equals_gini_of_class_means() {
    let x = draws(GbParams::dagum(3.0, 1.0, 1.5).unwrap(), 10_000, 3);
    let (shares, _) = from_sample(&x, &quantile_grid(5)).unwrap();
    let mu = x.iter().sum::<f64>() / x.len() as f64;
    let atoms: Vec<(f64, f64)> = shares
        .pop_shares()
        .iter()
        .zip(shares.income_shares().q)
        .map(|(&p, q)| (mu * q / p, p))
        .collect();
    assert!((gini_lower_bound(&shares) - discrete_gini(&atoms)).abs() < 1e-12);
}

#[test]
fn grouped_draws_track_closed_form_lorenz() {
    let g = GbParams::dagum(3.8, 1.0, 1.3).unwrap();
    let x = draws(g, 100_000, 11);
    let (shares, stats) = from_sample(&x, &quantile_grid(5)).unwrap();
    for (j, y) in shares.interior().iter().enumerate() {
        let u = (j + 1) as f64 / 5.0;
        let l = lorenz(SubModel::DA, &g, u).unwrap();
        assert!((y - l).abs() < 0.005, "u={u}: {y} vs {l}");
    }
    assert_eq!(stats.n_js, vec![20_000, 40_000, 60_000, 80_000]);
    assert!(stats.z.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn deciles_reduced_to_even_indices_equal_quintiles() {
    let x = draws(GbParams::singh_maddala(1.6, 1.0, 3.5).unwrap(), 10_000, 5);
    let (dec, _) = from_sample(&x, &quantile_grid(10)).unwrap();
    let (quin, _) = from_sample(&x, &quantile_grid(5)).unwrap();
    let reduced = summary_select(&dec, &[2, 4, 6, 8]).unwrap();
    assert_eq!(reduced, quin.interior());
}

#[test]
fn lower_bound_stays_below_population_gini() {
    let g = GbParams::singh_maddala(2.3, 1.0, 3.0).unwrap();
    let x = draws(g, 100_000, 8);
    let (shares, _) = from_sample(&x, &quantile_grid(10)).unwrap();
    assert!(gini_lower_bound(&shares) <= 0.3041);
}

#[test]
fn lower_bound_converges_with_fine_grouping() {
    let g = GbParams::dagum(3.8, 1.0, 1.3).unwrap();
    let truth = g.gini().unwrap().value;
    let x = draws(g, 1_000_000, 9);
    let (shares, _) = from_sample(&x, &quantile_grid(100)).unwrap();
    let lower = gini_lower_bound(&shares);
    // below the Gini of the sample it was computed from, and close to the population value
    let mut sorted = x.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let total: f64 = sorted.iter().sum();
    let weighted: f64 = sorted.iter().enumerate().map(|(i, v)| (2.0 * (i as f64 + 1.0) - n - 1.0) * v).sum();
    let sample_gini = weighted / (n * total);
    assert!(lower <= sample_gini, "lower {lower}, sample {sample_gini}");
    assert!(sample_gini - lower < 1e-3, "gap {}", sample_gini - lower);
    assert!((truth - lower).abs() < 0.001, "lower {lower}, truth {truth}");
}

#[test]
fn bounds_bracket_true_gini() {
    let g = GbParams::dagum(3.0, 1.0, 1.5).unwrap();
    let truth = g.gini().unwrap().value;
    let mut hits = 0;
    for rep in 0..100 {
        let x = draws(g, 10_000, 100 + rep);
        let data = GroupedData::from_sample(&x, &quantile_grid(5)).unwrap();
        let b = data.bounds().unwrap();
        let upper = b.upper.unwrap();
        assert!(b.lower <= upper);
        if b.lower <= truth && truth <= upper {
            hits += 1;
        }
    }
    assert!(hits >= 95, "{hits} of 100");
}

fn load(text: &str) -> Result<GroupedData, GroupedError> {
    load_grouped(Cursor::new(text.as_bytes()), &FormatDescriptor::default())
}

#[test]
fn load_per_group_shares() {
    let data = load("group,pop_share,income_share\n1,0.2,0.05\n2,0.2,0.10\n3,0.2,0.20\n4,0.2,0.25\n5,0.2,0.40\n").unwrap();
    let expect = [0.0, 0.05, 0.15, 0.35, 0.60, 1.0];
    for (a, b) in data.shares.inc_cum().iter().zip(expect) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(data.shares.k(), 5);
    assert_eq!(data.shares.n(), None);
}

#[test]
fn load_cumulative_percent_tab_separated() {
    let data = load("group\tpop_cum\tincome_cum\n1\t25\t10\n2\t50\t30\n3\t75\t55\n4\t100\t100\n").unwrap();
    assert_eq!(data.shares.interior(), &[0.1, 0.3, 0.55]);
    assert_eq!(data.shares.pop_grid(), &[0.25, 0.5, 0.75]);
}

#[test]
fn load_counts_and_class_means() {
    let data = load("group,households,mean\n1,50,0.5\n2,30,1.5\n3,20,3.0\n").unwrap();
    assert_eq!(data.shares.n(), Some(100));
    let mu = data.mean_income.unwrap();
    assert!((mu - 1.3).abs() < 1e-12);
    assert!((data.shares.interior()[0] - 0.25 / 1.3).abs() < 1e-12);
}

#[test]
fn load_errors_carry_line_numbers() {
    assert!(matches!(load(""), Err(GroupedError::Ingest { .. })));
    assert!(matches!(load("group,pop,inc\n"), Err(GroupedError::Ingest { .. })));
    match load("group,pop_cum,income_cum\n1,0.25,0.1\n2,0.5,0.3\n3,0.75,0.8\n4,1.0,1.0\n") {
        Err(GroupedError::Ingest { line, msg }) => {
            assert_eq!(line, 4, "{msg}");
            assert!(msg.contains("dominance"));
        }
        other => panic!("expected dominance error, got {other:?}"),
    }
    match load("group,pop,inc\n1,0.5,0.2\n2,abc,0.8\n") {
        Err(GroupedError::Ingest { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected parse error, got {other:?}"),
    }
    assert!(load("group,pop,inc\n1,0.5,0.2\n2,0.4,0.8\n").is_err());
}

#[test]
fn explicit_format_overrides_detection() {
    // per-group shares that happen to be nondecreasing and end at 0.5
    let fmt = FormatDescriptor {
        delimiter: Some(b';'),
        population: ColumnKind::PerGroup,
        income: ColumnKind::PerGroup,
    };
    let data = load_grouped(Cursor::new("g;a;b\n1;0.5;0.5\n2;0.5;0.5\n"), &fmt).unwrap();
    assert_eq!(data.shares.interior(), &[0.5]);
}

#[test]
fn write_then_load_round_trips() {
    let x = draws(GbParams::gb2(2.1, 1.0, 1.8, 2.0).unwrap(), 5_000, 2);
    let mut data = GroupedData::from_sample(&x, &quantile_grid(10)).unwrap();
    for top in [None, Some(f64::INFINITY)] {
        if let Some(t) = top {
            *data.boundaries.as_mut().unwrap().last_mut().unwrap() = t;
        }
        let mut buf = Vec::new();
        write_grouped(&mut buf, &data).unwrap();
        let back = load_grouped(Cursor::new(buf), &FormatDescriptor::default()).unwrap();
        assert_eq!(back, data);
    }
}

proptest! {
    #[test]
    fn from_sample_always_valid(incomes in prop::collection::vec(1e-3f64..1e3, 20..200)) {
        let (s, stats) = from_sample(&incomes, &quantile_grid(5)).unwrap();
        prop_assert!(s.inc_cum().windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(s.inc_cum().iter().zip(s.pop_cum()).all(|(y, p)| *y <= p + 1e-12));
        prop_assert!(stats.z.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn from_sample_is_scale_invariant(incomes in prop::collection::vec(1e-3f64..1e3, 20..200), scale in 1e-3f64..1e3) {
        let scaled: Vec<f64> = incomes.iter().map(|x| x * scale).collect();
        let (a, _) = from_sample(&incomes, &quantile_grid(4)).unwrap();
        let (b, _) = from_sample(&scaled, &quantile_grid(4)).unwrap();
        for (x, y) in a.interior().iter().zip(b.interior()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn lower_never_exceeds_upper(incomes in prop::collection::vec(1e-2f64..1e2, 30..300), k in 2usize..8) {
        // distinct values keep the order statistics strictly increasing
        let mut incomes = incomes;
        for (i, x) in incomes.iter_mut().enumerate() {
            *x += i as f64 * 1e-9;
        }
        let data = GroupedData::from_sample(&incomes, &quantile_grid(k)).unwrap();
        let b = data.bounds().unwrap();
        prop_assert!(b.lower >= 0.0);
        prop_assert!(b.lower <= b.upper.unwrap() + 1e-15);
        prop_assert!(b.upper.unwrap() < 1.0);
    }
}
