use scalesense_core::ba::{optimize_window, Tracker, TrackerParams};
use scalesense_core::sim::{generate, NoiseConfig, ScenarioConfig, ScenarioKind};

fn main() {
    let mut config = ScenarioConfig::new(ScenarioKind::RichMotion, 2);
    config.noise = NoiseConfig { pose_walk_std: 0.0, observation_std: 0.001 };
    config.duration = 12.0;
    let output = generate(&config).unwrap();

    let frames = output.tracks.timestamps.len();
    let mut per_frame: Vec<Vec<(u64, nalgebra::Vector2<f64>)>> = vec![Vec::new(); frames];
    for track in &output.tracks.tracks {
        for obs in &track.observations {
            per_frame[obs.frame].push((track.id, obs.point));
        }
    }
    let mut tracker = Tracker::new(TrackerParams { tolerance: 1e-10, ..TrackerParams::default() });
    for (frame, observations) in per_frame.iter().enumerate().take(220) {
        tracker.process_frame(output.tracks.timestamps[frame], observations).unwrap();
    }
    let mut window = tracker.window().clone();
    for round in 0..10 {
        let report = optimize_window(&mut window, 30, 1e-14).unwrap();
        println!(
            "round {round}: iters={} cost {:.6e} -> {:.6e} converged={}",
            report.iterations, report.initial_cost, report.final_cost, report.converged
        );
    }
}
