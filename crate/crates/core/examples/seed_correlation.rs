//! Seed-based correlation: seed maps, a seed-by-seed FC matrix and group
//! templates built from the training sessions.

use fbn::io::Role;
use fbn::preprocess::{run_chain, PreprocessConfig};
use fbn::sbc::{fc_matrix, seed_maps, synth_seeds, templates_from_sessions};
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
    let frame = spec.atlas_frame()?;
    let seeds = synth_seeds(&spec)?;
    let data = cohort
        .sessions
        .iter()
        .map(|s| run_chain(&s.matrix, &cohort.mask, &PreprocessConfig::default()))
        .collect::<fbn::Result<Vec<_>>>()?;

    for s in &seeds {
        println!(
            "seed {} at ({:.2}, {:.2}) mm, {} pixels",
            s.name,
            s.center_mm[0],
            s.center_mm[1],
            s.pixels(&cohort.mask, &frame)?.len()
        );
    }
    let maps: Vec<_> = seed_maps(&data[0], &cohort.mask, &frame, &seeds)?.into_iter().map(|m| m.map).collect();
    let m = ground_truth_match(&maps, cohort.session_truth(0))?;
    println!("session 0 seed maps vs ground truth: mean |r| {:.3}", m.mean_abs_r);

    let fc = fc_matrix(&data[0], &seeds, &cohort.mask, &frame)?;
    for (i, a) in fc.labels.iter().enumerate() {
        let row: Vec<String> = (0..fc.size()).map(|j| format!("{:+.2}", fc.values[(i, j)])).collect();
        println!("  {a} {}", row.join(" "));
    }

    let train = cohort
        .sessions
        .iter()
        .zip(&data)
        .filter(|(s, _)| s.role == Role::Train)
        .map(|(s, d)| (s.subject_id.as_str(), s.session_id.as_str(), d));
    let templates = templates_from_sessions(train, &cohort.mask, &frame, &seeds)?;
    let r = ground_truth_match(&templates.maps, &cohort.truth.sources)?;
    println!("templates {:?} vs canonical sources: mean |r| {:.3}", templates.labels(), r.mean_abs_r);
    Ok(())
}
