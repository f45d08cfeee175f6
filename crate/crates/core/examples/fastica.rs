//! Spatial FastICA on a Laplace mixture with known sources and on one
//! preprocessed imaging session.

use fbn::ica::{fastica, IcaConfig};
use fbn::preprocess::{run_chain, PreprocessConfig};
use fbn::synth::{generate, ground_truth_match, laplace_mixture, SynthSpec};

fn main() -> fbn::Result<()> {
    for noise in [0.0, 20.0, 80.0] {
        let (x, truth) = laplace_mixture(4, 1024, 2048, noise, 7)?;
        let cfg = IcaConfig {
            components: 4,
            ..IcaConfig::default()
        };
        let res = fastica(&x, &cfg)?;
        let m = ground_truth_match(&res.sources, &truth)?;
        println!(
            "noise sd {noise}: mean |r| {:.4} after {} iterations (converged {})",
            m.mean_abs_r, res.iterations, res.converged
        );
    }

    let spec = SynthSpec {
        height: 32,
        width: 32,
        sources: 4,
        subjects: 1,
        frames: 400,
        ..SynthSpec::default()
    };
    let cohort = generate(&spec)?;
    let x = run_chain(&cohort.sessions[0].matrix, &cohort.mask, &PreprocessConfig::default())?;
    let res = fastica(
        &x,
        &IcaConfig {
            components: 6,
            ..IcaConfig::default()
        },
    )?;
    let m = ground_truth_match(&res.sources, cohort.session_truth(0))?;
    println!("imaging session, 6 components: {} sources matched, mean |r| {:.3}", m.matched_sources(), m.mean_abs_r);
    for (est, src, r) in &m.pairs {
        println!("  component {est} -> source {src}: r = {r:+.3}");
    }
    Ok(())
}
