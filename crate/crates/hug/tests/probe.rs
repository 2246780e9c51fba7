use hug::data::{generate_synthetic, SyntheticSpec};
use hug::model::{ModelParams, PlaneIndex, PlaneTable, SourceConfig, ThetaPrior};
use hug::sampler::{Chain, MoveKind, SamplerConfig};

#[test]
fn probe_floor_dynamics() {
    let truth = vec![
        vec![0.3, 0.78, 0.8],
        vec![0.8, 0.13, 0.8],
        vec![0.7, 0.7, 0.1],
        vec![0.2, 0.2, 0.2],
    ];
    let raw = generate_synthetic(&SyntheticSpec { sources: truth.clone(), samples: 200, seed: 101 }).unwrap();
    let ds = raw.normalize(None).unwrap();
    let table = PlaneTable::new(&ds).unwrap();
    let norm_truth: Vec<Vec<f64>> = truth.iter().map(|s| {
        s.iter().enumerate().map(|(k, &x)| (x - ds.spec.lo[k]) / (ds.spec.hi[k] - ds.spec.lo[k])).collect()
    }).collect();
    let mut chain = Chain::new(&table, ThetaPrior::default(), 0.01, SamplerConfig::default(), 42).unwrap();
    chain.set_params(ModelParams::with_theta([11.25, 250.0, 0.25, 1.0], 0.01)).unwrap();
    chain.set_sources(&SourceConfig::new(norm_truth, 3).unwrap()).unwrap();
    let t = 1e-6;
    // emulate sweeps without theta resampling, fixed plane cycling for clarity
    for sweep in 0..30 {
        for v in 0..3 {
            chain.set_plane(PlaneIndex::from_zero_based(v)).unwrap();
            let before = chain.statistics();
            let mut accepted = [0usize; 3];
            for _ in 0..200 {
                let o = chain.mh_step(t);
                if o.accepted {
                    match o.kind.unwrap() {
                        MoveKind::Birth => accepted[0] += 1,
                        MoveKind::Death => accepted[1] += 1,
                        MoveKind::Change => accepted[2] += 1,
                    }
                }
            }
            let after = chain.statistics();
            if sweep < 3 || sweep == 29 {
                println!(
                    "sweep {sweep} plane {v}: n {} -> {}, g {:.3} -> {:.3}, n_e {:.3} -> {:.3}, acc b/d/c = {:?}",
                    before.n, after.n, before.g, after.g, before.n_e, after.n_e, accepted
                );
            }
        }
    }
    // final per-plane stats
    for v in 0..3 {
        chain.set_plane(PlaneIndex::from_zero_based(v)).unwrap();
        let s = chain.statistics();
        println!("final plane {v}: g {:.3} n_e {:.3} n {}", s.g, s.n_e, s.n);
    }
}
