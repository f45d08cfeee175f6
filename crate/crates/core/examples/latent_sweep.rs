//! Trains autoencoders with different bottleneck sizes and counts how many
//! ground-truth sources their regressed maps recover.

use fbn::cli::truth_scores;
use fbn::decompose::{ols_regress, MatchConfig, OlsConfig};
use fbn::io::Role;
use fbn::lstm::{train, Architecture, TrainConfig};
use fbn::preprocess::{run_chain, PreprocessConfig};
use fbn::synth::{generate, SynthSpec};

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
    let pick = |r: Role| -> Vec<usize> { (0..data.len()).filter(|&i| cohort.sessions[i].role == r).collect() };
    let refs = |r| pick(r).into_iter().map(|i| &data[i]).collect::<Vec<_>>();

    for c in [2, 4, 8] {
        let cfg = TrainConfig {
            architecture: Architecture {
                fc_size: 32,
                encoder: vec![32, c],
                decoder: vec![32, 32],
            },
            epochs: 30,
            ..TrainConfig::default()
        };
        let (model, report) = train(&refs(Role::Train), &refs(Role::Val), &cfg)?;
        let mut found = 0;
        let mut r = 0.0;
        let test = pick(Role::Test);
        for &i in &test {
            let maps = ols_regress(&data[i], &model.encode(&data[i])?, &OlsConfig::default())?;
            let (k, mean_r) = truth_scores(&maps, cohort.session_truth(i), MatchConfig::default().floor)?;
            found += k;
            r += mean_r;
        }
        println!(
            "C = {c}: best val mse {:.5}, {:.2} of {} sources per session, mean |r| {:.3}",
            report.best_val_mse(),
            found as f64 / test.len() as f64,
            spec.sources,
            r / test.len() as f64
        );
    }
    Ok(())
}
