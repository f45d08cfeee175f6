//! Evaluation battery on ICA maps of a small cohort: Dice overlap with
//! thresholded ground truth, reproducibility, subject variation, standard
//! deviation maps and a paired t-test between two methods.

use fbn::decompose::{template_match, MatchConfig};
use fbn::eval::{
    dice, paired_ttest, reproducibility, std_maps, subject_variation, threshold_fbn, threshold_reference, EvenMedian,
    LabelledMap, TsneConfig, VariationConfig,
};
use fbn::ica::{fastica, IcaConfig};
use fbn::preprocess::{run_chain, PreprocessConfig};
use fbn::sbc::{seed_maps, synth_seeds, TemplateSet};
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
    let frame = spec.atlas_frame()?;
    let seeds = synth_seeds(&spec)?;
    let templates = TemplateSet {
        maps: cohort.truth.sources.clone(),
        provenance: Vec::new(),
    };

    let mut ica_maps = Vec::new();
    let mut ica_dice = Vec::new();
    let mut sbc_dice = Vec::new();
    for (i, s) in cohort.sessions.iter().enumerate() {
        let x = run_chain(&s.matrix, &cohort.mask, &PreprocessConfig::default())?;
        let ica = fastica(
            &x,
            &IcaConfig {
                components: 6,
                ..IcaConfig::default()
            },
        )?;
        let sbc: Vec<_> = seed_maps(&x, &cohort.mask, &frame, &seeds)?.into_iter().map(|m| m.map).collect();
        let a = template_match(&ica.sources, &templates, &MatchConfig::default())?;
        let truth = cohort.session_truth(i);
        for e in a.representatives() {
            let k = truth.iter().position(|t| t.label.as_deref() == Some(&e.label)).expect("label");
            let reference = threshold_reference(truth[k].weights.mapv(|v| v.max(0.0)).as_slice().expect("contiguous"))?;
            ica_dice.push(dice(&threshold_fbn(&ica.sources[e.map], EvenMedian::Lower)?, &reference)?);
            sbc_dice.push(dice(&threshold_fbn(&sbc[k], EvenMedian::Lower)?, &reference)?);
            ica_maps.push(LabelledMap {
                subject: s.subject_id.clone(),
                session: s.session_id.clone(),
                label: e.label.clone(),
                map: ica.sources[e.map].clone(),
            });
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!("dice with thresholded truth: ica {:.3}, sbc {:.3} over {} maps", mean(&ica_dice), mean(&sbc_dice), ica_dice.len());
    let t = paired_ttest(&sbc_dice, &ica_dice)?;
    println!("paired t-test sbc vs ica: t = {:.3}, df = {}, p = {:.4}", t.t, t.df, t.p);

    let rep = reproducibility(&ica_maps)?;
    for (k, label) in rep.labels.iter().enumerate() {
        let f = |v: Option<f64>| v.map_or("-".to_string(), |r| format!("{r:.3}"));
        println!("  {label}: intra {} inter {}", f(rep.intra[k]), f(rep.inter[k]));
    }

    let cfg = VariationConfig {
        tsne: TsneConfig {
            perplexity: 5.0,
            iterations: 500,
            ..TsneConfig::default()
        },
        ..VariationConfig::default()
    };
    let var = subject_variation(&ica_maps, &cfg)?;
    println!("subject silhouette {:.3} +/- {:.3}", var.mean, var.sd);

    let sd = std_maps(&ica_maps, &rep.labels[0])?;
    println!(
        "{}: mean inter-subject sd {:.3}, intra-subject sd {:.3}",
        rep.labels[0],
        sd.inter.mean().unwrap_or(0.0),
        sd.intra.mean().unwrap_or(0.0)
    );
    Ok(())
}
