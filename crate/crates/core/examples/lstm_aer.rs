//! LSTM autoencoder regression: trains on the training sessions, then
//! encodes, regresses, labels and correlates every test session.

use fbn::decompose::{group_fnc, lstm_aer_pipeline, MatchConfig, OlsConfig};
use fbn::io::Role;
use fbn::lstm::{load_model, save_model, train, Architecture, TrainConfig};
use fbn::preprocess::{run_chain, PreprocessConfig};
use fbn::sbc::{synth_seeds, templates_from_sessions};
use fbn::synth::{generate, ground_truth_match, SynthSpec};

fn main() -> fbn::Result<()> {
    let spec = SynthSpec {
        height: 32,
        width: 32,
        sources: 4,
        subjects: 3,
        frames: 400,
        ..SynthSpec::default()
    };
    let cohort = generate(&spec)?;
    let data = cohort
        .sessions
        .iter()
        .map(|s| run_chain(&s.matrix, &cohort.mask, &PreprocessConfig::default()))
        .collect::<fbn::Result<Vec<_>>>()?;
    let with_role = |r: Role| -> Vec<usize> { (0..data.len()).filter(|&i| cohort.sessions[i].role == r).collect() };

    let pick = |r| with_role(r).into_iter().map(|i| &data[i]).collect::<Vec<_>>();
    let cfg = TrainConfig {
        architecture: Architecture {
            fc_size: 32,
            encoder: vec![32, 8],
            decoder: vec![32, 32],
        },
        epochs: 30,
        ..TrainConfig::default()
    };
    let (model, report) = train(&pick(Role::Train), &pick(Role::Val), &cfg)?;
    println!(
        "trained {} parameters: val mse {:.5} -> {:.5} (best epoch {}, {:.1} s)",
        model.param_count(),
        report.initial_val_mse,
        report.best_val_mse(),
        report.best_epoch,
        report.wall_time_s
    );

    let dir = tempfile::tempdir().map_err(|e| fbn::Error::io("creating a temp dir", e))?;
    let path = dir.path().join("model.fbl");
    save_model(&path, &model, Some(report.best_epoch))?;
    let (model, _) = load_model(&path)?;

    let frame = spec.atlas_frame()?;
    let seeds = synth_seeds(&spec)?;
    let reference = with_role(Role::Train)
        .into_iter()
        .chain(with_role(Role::Val))
        .map(|i| (cohort.sessions[i].subject_id.as_str(), cohort.sessions[i].session_id.as_str(), &data[i]));
    let templates = templates_from_sessions(reference, &cohort.mask, &frame, &seeds)?;

    let mut fncs = Vec::new();
    for i in with_role(Role::Test) {
        let out = lstm_aer_pipeline(
            &data[i],
            &cohort.mask,
            &model,
            &templates,
            &OlsConfig::default(),
            &MatchConfig::default(),
        )?;
        let truth = ground_truth_match(&out.maps, cohort.session_truth(i))?;
        println!(
            "{}: {} maps, matched {:?}, ground truth mean |r| {:.3}",
            cohort.sessions[i].subject_id,
            out.maps.len(),
            out.assignment.matched_labels(),
            truth.mean_abs_r
        );
        fncs.push(out.fnc);
    }
    match group_fnc(&fncs) {
        Ok(g) => println!("group FNC over {} networks: {:?}", g.size(), g.labels),
        Err(e) => println!("no group FNC: {e}"),
    }
    Ok(())
}
