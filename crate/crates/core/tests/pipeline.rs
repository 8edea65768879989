//! End-to-end paths through simulation, storage, fitting and checking.

use std::sync::Arc;

use ancestor_hawkes::calendar::CalendarGrid;
use ancestor_hawkes::diagnostics::{
    cumulative_envelope, posterior_predictive, PpcOptions, Statistic, ENVELOPE_LEVELS,
};
use ancestor_hawkes::gibbs::{run_chain, BackgroundSpec, FitSpec, McmcConfig, ModelKind};
use ancestor_hawkes::io::{read_chain, read_events, read_truth, write_chain, write_events, write_truth, ChainMeta};
use ancestor_hawkes::likelihood::{ancestor_conditional_loglik, classic_conditional_loglik, stability_report};
use ancestor_hawkes::scenarios::{scenario1, scenario3};
use ancestor_hawkes::simulate::{simulate, SimulationRequest, StopRule};
use ancestor_hawkes::{
    AncestorParams, Background, BranchingState, ClassicParams, InfluenceMatrix, KernelSpec, ModelParams,
    SeasonalBackground,
};
use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn quick(iterations: usize, burn_in: usize, seed: u64) -> McmcConfig {
    McmcConfig { iterations, burn_in, seed, ..Default::default() }
}

#[test]
fn simulated_data_survive_storage() {
    let spec = scenario1().unwrap().with_events(500);
    let data = simulate(&SimulationRequest::new(spec.model_params(), spec.stop, 1)).unwrap();
    let mut events = Vec::new();
    write_events(&data.log, &mut events).unwrap();
    let log = read_events(events.as_slice(), Some(data.horizon()), Some(3)).unwrap();
    assert_eq!(log, data.log);
    let mut truth = Vec::new();
    write_truth(&data.truth, &mut truth).unwrap();
    assert_eq!(read_truth(truth.as_slice(), &log).unwrap(), data.truth);
}

#[test]
fn chain_survives_storage_and_refits_identically() {
    let spec = scenario3().unwrap().with_events(300);
    let data = simulate(&SimulationRequest::new(spec.model_params(), spec.stop, 2)).unwrap();
    let fit = FitSpec::new(ModelKind::Ancestor, BackgroundSpec::Constant, quick(300, 100, 4));
    let chain = run_chain(&data.log, &fit).unwrap();
    assert_eq!(run_chain(&data.log, &fit).unwrap().draws, chain.draws);
    let mut csv = Vec::new();
    write_chain(&chain, &mut csv).unwrap();
    let back = read_chain(csv.as_slice(), &ChainMeta::of(&chain)).unwrap();
    assert_eq!(back.draws, chain.draws);
}

#[test]
fn ancestor_with_equal_blocks_is_classic() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let m = rng.random_range(1..=3);
        let mu: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..0.3)).collect();
        let k = InfluenceMatrix::from_fn(m, |_, _| rng.random_range(0.05..0.3));
        let g = KernelSpec::new(rng.random_range(0.5..3.0), rng.random_range(0.5..3.0)).unwrap();
        let classic = ClassicParams::new(Background::constant(mu.clone()).unwrap(), k.clone(), g).unwrap();
        let ancestor =
            AncestorParams::new(Background::constant(mu).unwrap(), k.clone(), k, g, g, false).unwrap();
        let data =
            simulate(&SimulationRequest::new(ModelParams::Classic(classic.clone()), StopRule::Horizon(200.0), 3))
                .unwrap();
        let log = &data.log;
        let random_b: Vec<u32> = (0..log.len()).map(|i| rng.random_range(0..=i as u32)).collect();
        for b in [data.truth.clone(), BranchingState::from_parents(log, random_b).unwrap()] {
            let a = ancestor_conditional_loglik(&ancestor, log, &b).unwrap().value();
            let c = classic_conditional_loglik(&classic, log, &b).unwrap().value();
            assert!((a - c).abs() <= 1e-9 * c.abs().max(1.0), "{a} vs {c}");
        }
        let sa = stability_report(&ancestor);
        assert!((sa.spectral_radius_k - sa.spectral_radius_l).abs() < 1e-12);
    }
}

#[test]
fn fit_check_and_envelope_agree_with_the_data() {
    let spec = scenario1().unwrap().with_events(600);
    let data = simulate(&SimulationRequest::new(spec.model_params(), spec.stop, 5)).unwrap();
    let fit = FitSpec::new(ModelKind::Ancestor, BackgroundSpec::Constant, quick(1500, 500, 6));
    let chain = run_chain(&data.log, &fit).unwrap();
    let report = posterior_predictive(&chain, &data.log, &Statistic::ALL, &PpcOptions::new(60, 7)).unwrap();
    assert_eq!(report.results.len(), 3);
    for r in &report.results {
        assert_eq!(r.draws.len(), 60);
        assert!((0.0..=1.0).contains(&r.p_value));
    }
    let horizon = data.horizon();
    let grid: Vec<f64> = (0..=10).map(|i| horizon * i as f64 / 10.0).collect();
    let env = cumulative_envelope(&chain, &data.log, &grid, 60, 7).unwrap();
    assert_eq!(env.observed.last().copied(), Some(data.log.len() as f64));
    for q in &env.quantiles {
        assert!(q.windows(2).all(|w| w[0] <= w[1]));
    }
    for pair in env.quantiles.windows(2) {
        assert!((0..ENVELOPE_LEVELS.len()).all(|i| pair[0][i] <= pair[1][i]));
    }
    let last = env.quantiles.last().unwrap();
    let n = data.log.len() as f64;
    assert!(last[0] <= n && n <= last[4], "{n} outside {last:?}");
}

#[test]
fn seasonal_fit_recovers_levels_and_shape() {
    let day = |m, d| NaiveDate::from_ymd_opt(2021, m, d).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let calendar = Arc::new(CalendarGrid::from_local(day(1, 1), day(7, 1), chrono_tz::UTC).unwrap());
    let hour: Vec<f64> = (0..24).map(|h| if (8..20).contains(&h) { 3.0 } else { 0.5 }).collect();
    let truth = SeasonalBackground::new(vec![0.2, 0.1], hour, vec![1.0; 7], vec![1.0; 12], calendar.clone()).unwrap();
    let params = AncestorParams::new(
        Background::Seasonal(truth),
        InfluenceMatrix::diag_off(2, 0.3, 0.1),
        InfluenceMatrix::diag_off(2, 0.2, 0.05),
        KernelSpec::uniform(2.0).unwrap(),
        KernelSpec::uniform(1.0).unwrap(),
        false,
    )
    .unwrap();
    let data =
        simulate(&SimulationRequest::new(ModelParams::Ancestor(params), StopRule::Horizon(calendar.horizon()), 9))
            .unwrap();
    let fit = FitSpec::new(ModelKind::Ancestor, BackgroundSpec::Seasonal { calendar }, quick(600, 200, 10));
    let chain = run_chain(&data.log, &fit).unwrap();
    let fitted = chain.posterior_mean_params().unwrap();
    let Background::Seasonal(s) = fitted.background() else { panic!("seasonal background expected") };
    for (est, tru) in s.alpha().iter().zip([0.2, 0.1]) {
        assert!((est / tru - 1.0).abs() < 0.25, "alpha {est} vs {tru}");
    }
    let day_mean: f64 = s.theta_hour()[8..20].iter().sum::<f64>() / 12.0;
    let night_mean: f64 = s.theta_hour()[..8].iter().chain(&s.theta_hour()[20..]).sum::<f64>() / 12.0;
    assert!(day_mean > 3.0 * night_mean, "day {day_mean} night {night_mean}");
}
