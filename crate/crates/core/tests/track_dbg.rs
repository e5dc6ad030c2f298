#[test]
fn dbg_tracks() {
    use acro_core::dynamics::*;
    use acro_core::sensing::*;
    use acro_core::trajectory::*;
    use rand::SeedableRng;
    let traj = build_maneuver(Maneuver::PowerLoop, &ManeuverParams::default()).unwrap();
    let scene = SceneConfig::default();
    let cam = CameraModel::default();
    let lms = scene.generate().unwrap();
    let mut tracker = Tracker::new(TrackerConfig::default(), cam);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let mut k = 0u64;
    loop {
        let t = k as f64 / 30.0;
        if t >= traj.duration() { break; }
        let (state, _) = traj.sample_at(t);
        let rendered = cam.render_keypoints(&state, &lms);
        let nvis = rendered.len();
        let frame = tracker.process(state, rendered, &mut rng);
        if frame.tracks.len() < 10 {
            let fwd = state.q * nalgebra::Vector3::x();
            eprintln!("t={t:.2} visible={nvis} tracks={} degen={} p={:?} fwd={:?}", frame.tracks.len(), frame.degenerate, state.p.as_slice(), fwd.as_slice());
        }
        k += 1;
    }
    eprintln!("done");
}
