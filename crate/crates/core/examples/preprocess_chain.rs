//! Ratiometric correction of a two-channel recording followed by the
//! detrend, smoothing and global-signal-regression chain and epoching.

use fbn::preprocess::{ratiometric_correct, run_chain, segment_epochs, Channel, FrameStack, PreprocessConfig};
use fbn::synth::{generate, SynthSpec};
use ndarray::{Array2, Axis};

fn global_sd(m: &fbn::DataMatrix) -> f64 {
    let g = m.values().mean_axis(Axis(1)).expect("non-empty");
    g.std(0.0)
}

fn main() -> fbn::Result<()> {
    let spec = SynthSpec {
        height: 32,
        width: 32,
        sources: 4,
        subjects: 1,
        frames: 400,
        ..SynthSpec::default()
    };
    let cohort = generate(&spec)?;
    let mask = &cohort.mask;
    let session = &cohort.sessions[0].matrix;

    // Emission carries the signal times a shared hemodynamic drift, the
    // reference channel only the drift.
    let (t, hw) = (session.frames(), mask.height() * mask.width());
    let drift: Vec<f64> = (0..t).map(|i| 1.0 + 0.2 * (i as f64 / 40.0).sin()).collect();
    let mut em = Array2::from_elem((t, hw), 1.0);
    let mut reference = Array2::from_elem((t, hw), 1.0);
    for (p, &flat) in mask.pixel_order().iter().enumerate() {
        for i in 0..t {
            em[(i, flat)] = 100.0 * (1.0 + 0.01 * session.values()[(i, p)]) * drift[i];
            reference[(i, flat)] = 50.0 * drift[i];
        }
    }
    let em = FrameStack::new(mask.height(), mask.width(), em, Channel::Emission)?;
    let reference = FrameStack::new(mask.height(), mask.width(), reference, Channel::Reference)?;
    let (corrected, baseline) = ratiometric_correct(&em, &reference, mask, spec.fps)?;
    println!(
        "ratiometric: {} frames x {} pixels, mean emission baseline {:.2}",
        corrected.frames(),
        corrected.pixels(),
        baseline.emission.mean().unwrap_or(0.0)
    );

    let clean = run_chain(&corrected, mask, &PreprocessConfig::default())?;
    println!("global signal sd before {:.4}, after {:.2e}", global_sd(&corrected), global_sd(&clean));

    for len in [5.0, 10.0, 20.0] {
        let epochs = segment_epochs(&clean, len)?;
        println!("{len:>4} s epochs: {} of {} frames", epochs.len(), epochs[0].frames());
    }
    Ok(())
}
