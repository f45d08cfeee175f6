//! Generates a small synthetic cohort, inspects its ground truth and
//! round-trips one session through the binary matrix format.

use fbn::io::{load_data_matrix, load_mask, save_data_matrix, save_mask, Dtype};
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
    println!(
        "mask {}x{} with {} brain pixels, {} sessions at {} fps",
        cohort.mask.height(),
        cohort.mask.width(),
        cohort.mask.count(),
        cohort.sessions.len(),
        spec.fps
    );
    for s in &cohort.sessions {
        println!(
            "  {}/{} {:?}: {} frames x {} pixels ({:.1} s)",
            s.subject_id,
            s.session_id,
            s.role,
            s.matrix.frames(),
            s.matrix.pixels(),
            s.matrix.duration()
        );
    }
    for (k, src) in cohort.truth.sources.iter().enumerate() {
        let c = cohort.truth.centers[k];
        println!("  source {} centred at ({:.1}, {:.1})", src.label.as_deref().unwrap_or("?"), c.x, c.y);
    }

    let dir = tempfile::tempdir().map_err(|e| fbn::Error::io("creating a temp dir", e))?;
    let first = &cohort.sessions[0].matrix;
    save_data_matrix(first, &dir.path().join("session.fbm"), Dtype::F32)?;
    save_mask(&cohort.mask, &dir.path().join("mask.fbk"))?;
    let back = load_data_matrix(&dir.path().join("session.fbm"), spec.fps)?;
    let err = (&back.values() - &first.values()).fold(0.0f64, |m, v| m.max(v.abs()));
    println!("f32 round trip max error {err:.2e}, mask equal: {}", load_mask(&dir.path().join("mask.fbk"))? == cohort.mask);
    Ok(())
}
