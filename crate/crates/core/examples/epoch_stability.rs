//! Similarity of seed-based and ICA maps to the group templates as the
//! analysed epoch grows.

use fbn::decompose::MatchConfig;
use fbn::eval::{epoch_stability_curve, Method};
use fbn::ica::IcaConfig;
use fbn::io::Role;
use fbn::preprocess::{run_chain, PreprocessConfig};
use fbn::sbc::{synth_seeds, templates_from_sessions};
use fbn::synth::{generate, SynthSpec};

fn main() -> fbn::Result<()> {
    let spec = SynthSpec {
        height: 32,
        width: 32,
        sources: 4,
        subjects: 3,
        frames: 600,
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
    let reference = cohort
        .sessions
        .iter()
        .zip(&data)
        .filter(|(s, _)| s.role != Role::Test)
        .map(|(s, d)| (s.subject_id.as_str(), s.session_id.as_str(), d));
    let templates = templates_from_sessions(reference, &cohort.mask, &frame, &seeds)?;

    let methods = [
        Method::Sbc {
            mask: &cohort.mask,
            frame: &frame,
            seeds: &seeds,
        },
        Method::Ica {
            config: IcaConfig {
                components: 6,
                ..IcaConfig::default()
            },
        },
    ];
    let lengths = [5.0, 10.0, 20.0, data[0].duration()];
    for m in &methods {
        println!("{}", m.name());
        for (s, x) in cohort.sessions.iter().zip(&data).filter(|(s, _)| s.role == Role::Test) {
            let curve = epoch_stability_curve(x, m, &lengths, &templates, &MatchConfig::default());
            let cells: Vec<String> = curve
                .iter()
                .map(|p| match p.mean_r {
                    Some(r) => format!("{:.1}s {r:.3}", p.length_s),
                    None => format!("{:.1}s -", p.length_s),
                })
                .collect();
            println!("  {}: {}", s.subject_id, cells.join(", "));
        }
    }
    Ok(())
}
