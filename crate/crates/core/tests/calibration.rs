//! Simulation-based calibration of the full samplers: parameters drawn from
//! the prior, data simulated from them, and the rank of each true value
//! within its posterior draws should be uniform.

use ancestor_hawkes::diagnostics::ks_uniform;
use ancestor_hawkes::gibbs::{
    run_chain, BackgroundDraw, BackgroundSpec, Draw, FitSpec, GammaPrior, McmcConfig, ModelKind, Priors,
};
use ancestor_hawkes::simulate::{simulate, SimulationRequest, StopRule};
use ancestor_hawkes::{AncestorParams, Background, ClassicParams, InfluenceMatrix, KernelSpec, ModelParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const REPLICATES: usize = 200;

type Extract = fn(&Draw) -> f64;

const SHARED: [(&str, Extract); 5] = [
    ("mu_1", |d| d.background.mean_rates(None)[0]),
    ("K_1_1", |d| d.k.get(0, 0)),
    ("K_1_2", |d| d.k.get(0, 1)),
    ("beta_diag", |d| d.g.rate_diag),
    ("beta_off", |d| d.g.rate_off),
];

const ANCESTOR_ONLY: [(&str, Extract); 4] = [
    ("L_1_1", |d| d.l.as_ref().unwrap().get(0, 0)),
    ("L_1_2", |d| d.l.as_ref().unwrap().get(0, 1)),
    ("gamma_diag", |d| d.h.unwrap().rate_diag),
    ("gamma_off", |d| d.h.unwrap().rate_off),
];

fn priors() -> Priors {
    Priors {
        mu: GammaPrior::new(5.0, 50.0),
        k: GammaPrior::new(12.0, 20.0),
        l: GammaPrior::new(6.0, 20.0),
        kernel_rate: GammaPrior::new(4.0, 4.0),
        ..Default::default()
    }
}

fn as_draw(params: &ModelParams) -> Draw {
    let (k, l, g, h) = match params {
        ModelParams::Classic(p) => (p.k.clone(), None, p.g, None),
        ModelParams::Ancestor(p) => (p.k.clone(), Some(p.l.clone()), p.g, Some(p.h)),
    };
    Draw {
        iteration: 0,
        background: BackgroundDraw::Constant(params.background().as_constant().unwrap().to_vec()),
        k,
        l,
        g,
        h,
        rho_k: 0.0,
        rho_l: None,
        immigrants: 0,
        immigrant_counts: Vec::new(),
    }
}

fn calibrate(model: ModelKind, seed: u64) {
    let mut priors = priors();
    if !model.is_ancestor() {
        // K alone governs stability in the classic model.
        priors.k = GammaPrior::new(6.0, 20.0);
    }
    let quantities: Vec<(&str, Extract)> =
        SHARED.iter().chain(if model.is_ancestor() { &ANCESTOR_ONLY[..] } else { &[] }).copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ranks = vec![Vec::with_capacity(REPLICATES); quantities.len()];
    let mut r = 0u64;
    while ranks[0].len() < REPLICATES {
        r += 1;
        let background = Background::constant((0..2).map(|_| priors.mu.sample(&mut rng)).collect()).unwrap();
        let k = InfluenceMatrix::from_fn(2, |_, _| priors.k.sample(&mut rng));
        let mut rate = || priors.kernel_rate.sample(&mut rng);
        let g = KernelSpec::new(rate(), rate()).unwrap();
        let truth = if model.is_ancestor() {
            let h = KernelSpec::new(rate(), rate()).unwrap();
            let l = InfluenceMatrix::from_fn(2, |_, _| priors.l.sample(&mut rng));
            ModelParams::Ancestor(AncestorParams::new(background, k, l, g, h, false).unwrap())
        } else {
            ModelParams::Classic(ClassicParams::new(background, k, g).unwrap())
        };
        let mut request = SimulationRequest::new(truth.clone(), StopRule::Horizon(100.0), r);
        request.max_events = 5000;
        // Supercritical prior draws explode; calibration conditions on stable ones.
        let Ok(data) = simulate(&request) else { continue };
        let config = McmcConfig { iterations: 1200, burn_in: 200, thin: 10, seed: r, ..Default::default() };
        let spec = FitSpec { model, background: BackgroundSpec::Constant, priors, config };
        let chain = run_chain(&data.log, &spec).unwrap();
        let true_draw = as_draw(&truth);
        for (slot, (_, f)) in ranks.iter_mut().zip(&quantities) {
            let t = f(&true_draw);
            let below = chain.draws.iter().filter(|d| f(d) < t).count();
            slot.push((below as f64 + 0.5) / (chain.len() as f64 + 1.0));
        }
    }
    for ((name, _), xs) in quantities.iter().zip(&ranks) {
        let (d, p) = ks_uniform(xs);
        assert!(p > 0.01, "{model} {name}: KS D = {d:.3}, p = {p:.4}");
    }
}

#[test]
fn ancestor_sampler_ranks_are_uniform() {
    calibrate(ModelKind::Ancestor, 77);
}

#[test]
fn classic_sampler_ranks_are_uniform() {
    calibrate(ModelKind::Classic, 78);
}
