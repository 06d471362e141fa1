use lorenz_abc::abc::*;
use lorenz_abc::gb::{lorenz, GbParams, GbSampler, SubModel};
use lorenz_abc::grouped::{from_sample, quantile_grid, GroupedShares};
use lorenz_abc::prior::PriorSpec;
use lorenz_abc::stats::weighted_sd;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn da_data(n: usize, k: usize, seed: u64) -> GroupedShares {
    let smp = GbSampler::new(GbParams::dagum(3.8, 1.0, 1.3).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| smp.sample(&mut rng)).collect();
    from_sample(&x, &quantile_grid(k)).unwrap().0
}

fn settings(n_particles: usize, n_obs: usize, eps: Vec<f64>) -> AbcSettings {
    AbcSettings {
        n_particles,
        n_obs,
        schedule: ToleranceSchedule::new(eps).unwrap(),
        summary: None,
        stall_cap: DEFAULT_STALL_CAP,
    }
}

fn assert_valid(system: &ParticleSystem, y: &[f64]) {
    for p in &system.particles {
        assert!(distance(&p.x, y).unwrap() < system.eps_current);
        assert!(p.w >= 0.0);
    }
    let total: f64 = system.weights().iter().sum();
    assert!((total - 1.0).abs() < 1e-12, "weights sum to {total}");
}

#[test]
fn vacuous_tolerance_accepts_everything() {
    let data = da_data(2000, 5, 1);
    let s = settings(50, 500, vec![1.0]);
    let abc = Abc::new(PriorSpec::standard(SubModel::DA), &data, &s, 3).unwrap();
    let sys = abc.init_step(1.0).unwrap();
    assert_eq!(sys.rejection_counts, vec![0]);
    assert!(sys.particles.iter().all(|p| p.w == 1.0 / 50.0));
}

#[test]
fn initial_population_is_within_tolerance() {
    let data = da_data(10_000, 5, 2);
    let s = settings(100, 10_000, vec![0.1]);
    let abc = Abc::new(PriorSpec::standard(SubModel::DA), &data, &s, 4).unwrap();
    let sys = abc.init_step(0.1).unwrap();
    assert_eq!(sys.len(), 100);
    assert_valid(&sys, abc.target());
}

#[test]
fn infeasible_tolerance_stalls() {
    let data = da_data(2000, 5, 3);
    let mut s = settings(4, 200, vec![1e-9]);
    s.stall_cap = 200;
    let abc = Abc::new(PriorSpec::standard(SubModel::DA), &data, &s, 5).unwrap();
    match abc.init_step(1e-9) {
        Err(AbcError::Stall { step, rejections, .. }) => {
            assert_eq!(step, 0);
            assert!(rejections > 200);
        }
        other => panic!("expected stall, got {other:?}"),
    }
}

#[test]
fn increasing_tolerance_is_rejected() {
    let data = da_data(2000, 5, 4);
    let s = settings(10, 200, vec![0.5]);
    let abc = Abc::new(PriorSpec::standard(SubModel::DA), &data, &s, 6).unwrap();
    let sys = abc.init_step(0.5).unwrap();
    assert!(matches!(abc.smc_step(&sys, 0.6), Err(AbcError::Schedule(_))));
}

#[test]
fn short_run_keeps_invariants() {
    let data = da_data(2000, 5, 5);
    let s = settings(200, 2000, vec![0.1, 0.04, 0.025]);
    let abc = Abc::new(PriorSpec::standard(SubModel::DA), &data, &s, 7).unwrap();
    let run = abc.run(&s.schedule, true).unwrap();
    assert_valid(&run.system, abc.target());
    assert_eq!(run.system.step, 2);
    assert_eq!(run.system.rejection_counts.len(), 3);
    let eps: Vec<f64> = run.trajectory.steps.iter().map(|r| r.eps).collect();
    assert_eq!(eps, vec![0.1, 0.04, 0.025]);
    assert!(run.trajectory.steps.iter().all(|r| r.gini.is_some() && r.params.len() == 2));

    let diag = abc.fit_diagnostic(&run.system);
    assert_eq!(diag.len(), 4);
    assert!(diag.iter().all(|d| *d <= 0.025));

    let summary = posterior_summary(abc.prior(), &run.system);
    assert_eq!(summary.names, vec!["a", "p"]);
    for i in summary.params.iter().chain([&summary.gini.interval]) {
        assert!(i.q025 <= i.q500 && i.q500 <= i.q975);
        assert!(i.contains(i.mean));
    }

    let mut traj = Vec::new();
    write_trajectory(&mut traj, &run.trajectory).unwrap();
    let traj = String::from_utf8(traj).unwrap();
    assert!(traj.starts_with("step,epsilon,param,q2.5,q50,q97.5,mean\n"));
    // two parameters plus the Gini at each of three steps
    assert_eq!(traj.lines().count(), 1 + 3 * 3);
    let mut parts = Vec::new();
    write_particles(&mut parts, &summary.names, &run.system).unwrap();
    let parts = String::from_utf8(parts).unwrap();
    assert!(parts.starts_with("particle,a,p,x1,x2,x3,x4,weight\n"));
    assert_eq!(parts.lines().count(), 201);
}

#[test]
fn single_step_schedule_equals_init() {
    let data = da_data(2000, 5, 6);
    let s = settings(40, 1000, vec![0.1]);
    let abc = Abc::new(PriorSpec::standard(SubModel::DA), &data, &s, 8).unwrap();
    assert_eq!(abc.run(&s.schedule, false).unwrap().system, abc.init_step(0.1).unwrap());
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let data = da_data(2000, 5, 7);
    let s = settings(60, 1000, vec![0.1, 0.05, 0.03]);
    let abc = Abc::new(PriorSpec::standard(SubModel::SM), &data, &s, 9).unwrap();
    let in_pool = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| abc.run(&s.schedule, false).unwrap().system)
    };
    let one = in_pool(1);
    assert_eq!(one, in_pool(4));
    assert_eq!(one, abc.run(&s.schedule, false).unwrap().system);
}

#[test]
fn flat_kernel_step_reproduces_the_prior() {
    // with a vacuous tolerance and no data kernel a step is importance
    // sampling of the prior from the perturbed previous population
    let data = da_data(1000, 5, 8);
    let s = settings(10_000, 10, vec![1.0]);
    let prior = PriorSpec::standard(SubModel::DA);
    let abc = Abc::new(prior.clone(), &data, &s, 10).unwrap();
    let sys = abc.init_step(1.0).unwrap();
    let next = abc.smc_step_with(&sys, 1.0, DataKernel::Flat).unwrap();
    assert_eq!(next.rejection_counts.len(), 2);
    let w = next.weights();
    let ess = next.ess();
    assert!(ess > 5000.0, "ess {ess}");
    for (s, m) in prior.means().iter().enumerate() {
        let col = next.column(s);
        let mean: f64 = col.iter().zip(&w).map(|(x, w)| x * w).sum();
        let se = weighted_sd(&col, &w) / ess.sqrt();
        assert!((mean - m).abs() < 3.0 * se, "coord {s}: {mean} vs {m} (se {se})");
    }
}

#[test]
fn simulated_shares_track_the_lorenz_curve() {
    let prior = PriorSpec::standard(SubModel::DA);
    let params = GbParams::dagum(3.8, 1.0, 1.3).unwrap();
    let theta = prior.theta(&params);
    let grid = quantile_grid(5);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = simulate_shares(&prior, &theta, 10_000, &grid, None, &mut rng).unwrap();
    for (xj, u) in x.iter().zip(&grid) {
        let l = lorenz(SubModel::DA, &params, *u).unwrap();
        assert!((xj - l).abs() < 0.02, "{xj} vs {l} at {u}");
    }
    let again = simulate_shares(&prior, &theta, 10_000, &grid, None, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
    assert_eq!(x, again);
}

#[test]
fn decile_summary_matches_quintile_simulation() {
    let prior = PriorSpec::standard(SubModel::SM);
    let theta = prior.theta(&GbParams::singh_maddala(1.6, 1.0, 3.5).unwrap());
    for seed in 0..5 {
        let quint = simulate_shares(&prior, &theta, 10_000, &quantile_grid(5), None, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let dec = simulate_shares(
            &prior,
            &theta,
            10_000,
            &quantile_grid(10),
            Some(&[2, 4, 6, 8]),
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
        .unwrap();
        assert_eq!(quint, dec);
    }
}

#[test]
fn evidence_edge_cases() {
    let data = da_data(2000, 5, 9);
    let s = settings(10, 500, vec![1.0]);
    let abc = Abc::new(PriorSpec::standard(SubModel::DA), &data, &s, 12).unwrap();
    let all = abc.evidence(1.0, 200).unwrap();
    assert_eq!((all.acceptances, all.trials, all.log_evidence), (200, 200, 0.0));
    let none = abc.evidence(1e-12, 50).unwrap();
    assert_eq!(none.acceptances, 0);
    assert_eq!(none.log_evidence, f64::NEG_INFINITY);
    let a = abc.evidence(0.05, 500).unwrap();
    assert_eq!(a, abc.evidence(0.05, 500).unwrap());
    assert!(a.acceptances <= a.trials);
    if a.acceptances > 0 {
        assert_eq!(a.log_evidence, (a.acceptances as f64 / 500.0).ln());
    }
}

#[test]
fn nonincreasing_tolerance_step_keeps_population_valid() {
    let data = da_data(2000, 5, 10);
    let s = settings(50, 1000, vec![0.05]);
    let abc = Abc::new(PriorSpec::standard(SubModel::DA), &data, &s, 13).unwrap();
    let sys = abc.init_step(0.05).unwrap();
    let same = abc.smc_step(&sys, 0.05).unwrap();
    assert_valid(&same, abc.target());
    assert_eq!(same.step, 1);
}
