use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spikelda::corpus::Corpus;
use spikelda::online::{ed_continue, init_weights, objective, ode_integrate, Integrator, LearningMode, OdeConfig, StepSchedule, TrainOptions};
use spikelda::snn::constraint_deviation;
use spikelda::Hyperparams;

fn tiny_corpus() -> Corpus {
    let docs = vec![
        vec![(0, 5), (1, 4), (2, 1)],
        vec![(0, 3), (1, 5), (5, 1)],
        vec![(3, 4), (4, 5), (5, 2)],
        vec![(2, 1), (3, 3), (4, 2), (5, 4)],
    ];
    Corpus::from_docs(6, docs, None).unwrap()
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs[xs.len() / 2]
}

fn run(mode: LearningMode, lambda: f64) -> (f64, f64) {
    let corpus = tiny_corpus();
    let hp = Hyperparams::symmetric(2, 6, lambda, 0.01).unwrap();
    let target = mode.beta_target(&hp).unwrap();
    let rm = StepSchedule::RobbinsMonro { a: 0.01, b: 1000.0, c: 0.7 };
    let mut devs = Vec::new();
    let mut gaps = Vec::new();
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w0 = init_weights::<f64, _>(2, 6, 4, mode, &mut rng);
        let out = ed_continue(w0.clone(), &corpus, &hp, mode, (rm, rm), 400_000, TrainOptions::default(), &mut rng).unwrap();
        let cfg = OdeConfig {
            dt: 0.05,
            steps: 5_000,
            integrator: Integrator::Rk4,
            objective: false,
        };
        let limit = ode_integrate(&w0, &corpus, &hp, mode, cfg).unwrap().weights;
        let further = ode_integrate(&limit, &corpus, &hp, mode, cfg).unwrap().weights;
        let limit_obj = objective(&limit, &corpus, &hp, mode).unwrap();
        assert!(
            (objective(&further, &corpus, &hp, mode).unwrap() - limit_obj).abs() < 1e-8,
            "ODE has not settled"
        );
        let (za, zb) = constraint_deviation(&out.weights, target);
        let dev = za.iter().chain(&zb).fold(0.0f64, |m, x| m.max(x.abs()));
        let gap = (objective(&out.weights, &corpus, &hp, mode).unwrap() - limit_obj).abs();
        println!("{mode:?} seed {seed}: deviation {dev:.2e}, objective gap {gap:.2e}");
        devs.push(dev);
        gaps.push(gap);
    }
    (median(devs), median(gaps))
}

#[test]
fn robbins_monro_plsi_reaches_ode_limit() {
    let (dev, gap) = run(LearningMode::Plsi, 1.0);
    assert!(dev < 1e-2, "median deviation {dev}");
    assert!(gap < 1e-2, "median objective gap {gap}");
}

#[test]
fn robbins_monro_map_reaches_ode_limit() {
    let (dev, gap) = run(LearningMode::Map, 1.1);
    assert!(dev < 1e-2, "median deviation {dev}");
    assert!(gap < 1e-2, "median objective gap {gap}");
}
