use gate_racer_core::sim_harness::{
    run_episode, BlackoutConfig, PerturbationKind, ProviderKind, ScenarioConfig, Track,
};

fn run(name: &str, scenario: &ScenarioConfig, track: &Track) {
    let mut ok = 0;
    let mut fails = Vec::new();
    for trial in 0..scenario.trials as u64 {
        let r = run_episode(track, scenario, trial, None);
        if r.success {
            ok += 1;
        } else {
            fails.push(format!("t{}={:?}", trial, r.failure.unwrap()));
        }
    }
    println!("{name}: {ok}/{} fails=[{}]", scenario.trials, fails.join(", "));
}

fn main() {
    let track = Track::circular(4, 5.0, 1.0, 3);
    let base = |p| {
        let mut s = ScenarioConfig::baseline(p, 42);
        s.speed_cap = 3.5;
        s
    };

    if std::env::args().any(|a| a == "--all") {
        run("nominal-analytic", &base(ProviderKind::Analytic), &track);
    }

    let mut s = base(ProviderKind::Perturbed);
    s.perturbation = PerturbationKind::Position;
    s.magnitude = 0.3;
    run("pos-0.3", &s, &track);
    s.magnitude = 0.9;
    run("pos-0.9", &s, &track);

    let mut s = base(ProviderKind::Perturbed);
    s.perturbation = PerturbationKind::Yaw;
    s.magnitude = 30f64.to_radians();
    run("yaw-30", &s, &track);
    s.magnitude = 60f64.to_radians();
    run("yaw-60", &s, &track);

    if std::env::args().any(|a| a == "--all") {
        let mut s = base(ProviderKind::CachedAnalytic);
        s.blackout = Some(BlackoutConfig { radius: 2.0, steps: 10 });
        run("blackout-cached", &s, &track);
    }
}
