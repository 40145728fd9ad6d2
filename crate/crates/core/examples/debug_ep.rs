use gate_racer_core::sim_harness::{
    run_episode, BlackoutConfig, PerturbationKind, ProviderKind, ScenarioConfig, Track,
};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let trial: u64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(2);
    let mag: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(30.0);
    let kind = args.get(3).map(|s| s.as_str()).unwrap_or("yaw");
    let track = Track::circular(4, 5.0, 1.0, 3);
    let mut s = ScenarioConfig::baseline(ProviderKind::Perturbed, 42);
    s.speed_cap = 3.5;
    if kind == "none" {
        s.provider = ProviderKind::Analytic;
    } else if kind == "blackout" {
        s.provider = ProviderKind::CachedAnalytic;
        s.blackout = Some(BlackoutConfig { radius: 2.0, steps: 10 });
    } else if kind == "pos" {
        s.perturbation = PerturbationKind::Position;
        s.magnitude = mag;
    } else {
        s.perturbation = PerturbationKind::Yaw;
        s.magnitude = mag.to_radians();
    }
    s.record_log = true;
    let r = run_episode(&track, &s, trial, None);
    println!(
        "trial {trial}: success={} failure={:?} passes={} steps={}",
        r.success,
        r.failure,
        r.gate_pass_times.len(),
        r.log.len()
    );
    for (i, row) in r.log.iter().enumerate() {
        if i % 25 == 0 || i + 6 >= r.log.len() {
            let v = row.state.v.norm();
            println!(
                "t={:7.2} wp={:2} p=({:6.2},{:6.2},{:5.2}) |v|={:5.2} sdf={:6.3}",
                row.t, row.waypoint, row.state.p.x, row.state.p.y, row.state.p.z, v, row.believed_sdf
            );
        }
    }
}
