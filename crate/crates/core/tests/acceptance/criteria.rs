use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use fbn::cli::truth_scores;
use fbn::decompose::{ols_regress, ols_weights, template_match, MatchConfig, OlsConfig};
use fbn::eval::{
    conditional_probabilities, dice, epoch_stability_curve, paired_ttest, subject_variation, BinaryMap, LabelledMap,
    Method, VariationConfig,
};
use fbn::ica::{fastica, IcaConfig};
use fbn::io::{
    decode_mask, decode_matrix, encode_mask, encode_matrix, load_mask, load_matrix, save_mask, save_matrix, Dtype, Role,
};
use fbn::lstm::{mse_loss, train, Architecture, LstmAe, TrainConfig};
use fbn::preprocess::{run_chain, PreprocessConfig};
use fbn::sbc::{synth_seeds, templates_from_sessions, TemplateSet};
use fbn::stats::{fisher_z, fisher_z_inv, pearson_view};
use fbn::synth::{generate, ground_truth_match, laplace_mixture, SynthSpec};
use fbn::types::{BrainMask, DataMatrix, SpatialMap};
use fbn::Error;
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{cli, say, Outcome};

/// Training budget of every autoencoder in the suite. The best validation
/// epoch on the default cohort falls well inside it.
pub const EPOCHS: usize = 100;
const LATENT: usize = 16;
const STABILITY_SEEDS: u64 = 5;
const VARIATION_SEEDS: u64 = 3;

/// Default cohort after preprocessing, with its ground truth and templates.
pub struct Experiment {
    pub mask: BrainMask,
    pub subjects: Vec<String>,
    pub sessions: Vec<String>,
    pub roles: Vec<Role>,
    pub subject_index: Vec<usize>,
    pub data: Vec<DataMatrix>,
    pub truth: Vec<Vec<SpatialMap>>,
    pub templates: TemplateSet,
    pub spec: SynthSpec,
}

impl Experiment {
    pub fn new(seed: u64) -> Self {
        let spec = SynthSpec {
            seed,
            ..SynthSpec::default()
        };
        let c = generate(&spec).unwrap();
        let pre = PreprocessConfig::default();
        let data: Vec<DataMatrix> = c.sessions.iter().map(|s| run_chain(&s.matrix, &c.mask, &pre).unwrap()).collect();
        let frame = spec.atlas_frame().unwrap();
        let seeds = synth_seeds(&spec).unwrap();
        let templates = templates_from_sessions(
            c.sessions
                .iter()
                .zip(&data)
                .filter(|(s, _)| s.role != Role::Test)
                .map(|(s, m)| (s.subject_id.as_str(), s.session_id.as_str(), m)),
            &c.mask,
            &frame,
            &seeds,
        )
        .unwrap();
        Experiment {
            subjects: c.sessions.iter().map(|s| s.subject_id.clone()).collect(),
            sessions: c.sessions.iter().map(|s| s.session_id.clone()).collect(),
            roles: c.sessions.iter().map(|s| s.role).collect(),
            subject_index: c.sessions.iter().map(|s| s.subject).collect(),
            truth: c.truth.subject_sources.clone(),
            mask: c.mask,
            data,
            templates,
            spec,
        }
    }

    fn with_role(&self, role: Role) -> Vec<usize> {
        (0..self.data.len()).filter(|&i| self.roles[i] == role).collect()
    }

    pub fn train(&self, latent: usize) -> (LstmAe, usize, f64) {
        let pick = |r| self.with_role(r).into_iter().map(|i| &self.data[i]).collect::<Vec<_>>();
        let cfg = TrainConfig {
            architecture: Architecture::with_latent(latent),
            epochs: EPOCHS,
            ..TrainConfig::default()
        };
        let (model, report) = train(&pick(Role::Train), &pick(Role::Val), &cfg).unwrap();
        (model, report.best_epoch, report.wall_time_s)
    }

    pub fn lstm_maps(&self, model: &LstmAe, i: usize) -> Vec<SpatialMap> {
        let y = model.encode(&self.data[i]).unwrap();
        ols_regress(&self.data[i], &y, &OlsConfig::default())
            .unwrap()
            .into_iter()
            .map(|m| m.with_mask(self.mask.id()))
            .collect()
    }

    /// Template-labelled maps of every session (best map per label).
    fn labelled(&self, maps_of: impl Fn(usize) -> Vec<SpatialMap>) -> Vec<LabelledMap> {
        let mut out = Vec::new();
        for i in 0..self.data.len() {
            let maps = maps_of(i);
            let a = template_match(&maps, &self.templates, &MatchConfig::default()).unwrap();
            for e in a.representatives() {
                out.push(LabelledMap {
                    subject: self.subjects[i].clone(),
                    session: self.sessions[i].clone(),
                    label: e.label.clone(),
                    map: maps[e.map].clone(),
                });
            }
        }
        out
    }

    fn lengths(&self) -> Vec<f64> {
        vec![10.0, 20.0, 30.0, 40.0, 50.0, self.data[0].duration()]
    }

    /// Mean over test sessions of the similarity to the templates at each
    /// length; `None` where a length failed.
    fn stability(&self, method: &Method<'_>, lengths: &[f64]) -> Vec<Option<f64>> {
        let test = self.with_role(Role::Test);
        let curves: Vec<_> = test
            .iter()
            .map(|&i| epoch_stability_curve(&self.data[i], method, lengths, &self.templates, &MatchConfig::default()))
            .collect();
        (0..lengths.len())
            .map(|k| {
                let rs: Option<Vec<f64>> = curves.iter().map(|c| c[k].mean_r).collect();
                rs.map(|v| v.iter().sum::<f64>() / v.len() as f64)
            })
            .collect()
    }

    fn sbc_stability(&self) -> Vec<Option<f64>> {
        let frame = self.spec.atlas_frame().unwrap();
        let seeds = synth_seeds(&self.spec).unwrap();
        let m = Method::Sbc {
            mask: &self.mask,
            frame: &frame,
            seeds: &seeds,
        };
        self.stability(&m, &self.lengths())
    }
}

/// State reused across criteria 4 to 7.
#[derive(Default)]
pub struct Shared {
    exp0: Option<Experiment>,
    model: Option<LstmAe>,
    sbc_curves: BTreeMap<u64, Vec<Option<f64>>>,
}

impl Shared {
    fn ensure(&mut self) {
        if self.exp0.is_none() {
            self.exp0 = Some(Experiment::new(0));
        }
        if self.model.is_none() {
            self.model = Some(self.exp0.as_ref().unwrap().train(LATENT).0);
        }
    }
}

fn fmt_curve(c: &[Option<f64>]) -> String {
    c.iter()
        .map(|v| v.map_or("-".into(), |r| format!("{r:.3}")))
        .collect::<Vec<_>>()
        .join(" ")
}

// 1

fn tiny_arch() -> Architecture {
    Architecture {
        fc_size: 4,
        encoder: vec![4, 3, 2],
        decoder: vec![3, 4, 4],
    }
}

/// Difference of the MSE between two reconstructions, summed entrywise
/// as `(a − b)(a + b − 2x)` so that nothing cancels.
fn loss_difference(a: &Array2<f64>, b: &Array2<f64>, x: ArrayView2<'_, f64>) -> f64 {
    let mut acc = 0.0;
    for ((&p, &q), &v) in a.iter().zip(b.iter()).zip(x.iter()) {
        acc += (p - q) * (p + q - 2.0 * v);
    }
    acc / x.len() as f64
}

pub fn gradient_check() -> Outcome {
    const STEP: f64 = 1e-5;
    const FLOOR: f64 = 1e-6;
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for seed in 0..4u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x = Array2::from_shape_fn((5, 6), |_| rng.random_range(-0.9..0.9));
        let mut m = LstmAe::new(6, &tiny_arch(), seed).unwrap();
        if seed >= 2 {
            // Away from the initialization every gate is active.
            m.params_mut().iter_mut().for_each(|p| *p += rng.random_range(-0.5..0.5));
        }
        let fwd = m.forward(x.view()).unwrap();
        let base = mse_loss(fwd.reconstruction.view(), x.view()).unwrap();
        assert!(base.is_finite());
        let grads = m.backward(&fwd, x.view()).unwrap();
        let mut probe = m.clone();
        for k in 0..m.param_count() {
            let p0 = m.params()[k];
            probe.params_mut()[k] = p0 + STEP;
            let up = probe.forward(x.view()).unwrap().reconstruction;
            probe.params_mut()[k] = p0 - STEP;
            let down = probe.forward(x.view()).unwrap().reconstruction;
            probe.params_mut()[k] = p0;
            let num = loss_difference(&up, &down, x.view()) / (2.0 * STEP);
            let rel = (grads[k] - num).abs() / (grads[k].abs() + num.abs()).max(FLOOR);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        worst < 1e-5 && secs < 10.0,
        format!("max relative error {worst:.2e} over {checked} parameters (limit 1e-5), {secs:.2} s (limit 10 s)"),
    )
}

// 2

pub fn fastica_recovery() -> Outcome {
    let start = Instant::now();
    let cfg = IcaConfig {
        components: 4,
        ..IcaConfig::default()
    };
    let (clean, truth) = laplace_mixture(4, 1024, 2048, 0.0, 11).unwrap();
    let r_clean = ground_truth_match(&fastica(&clean, &cfg).unwrap().sources, &truth).unwrap().mean_abs_r;
    // Noise relative to the signal: sd 0.2 × sd of the noise-free data.
    let v = clean.values();
    let mean = v.mean().unwrap();
    let sd = (v.mapv(|a| (a - mean).powi(2)).mean().unwrap()).sqrt();
    let (noisy, truth_n) = laplace_mixture(4, 1024, 2048, 0.2 * sd, 11).unwrap();
    let r_noisy = ground_truth_match(&fastica(&noisy, &cfg).unwrap().sources, &truth_n).unwrap().mean_abs_r;
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        r_clean >= 0.99 && r_noisy >= 0.90 && secs < 30.0,
        format!(
            "noise-free mean |r| {r_clean:.4} (need >= 0.99), noise 0.2 mean |r| {r_noisy:.4} (need >= 0.90), {secs:.2} s (limit 30 s)"
        ),
    )
}

// 3

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(rng))
}

pub fn ols_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_orth = 0.0f64;
    for _ in 0..100 {
        let t = rng.random_range(20..200);
        let c = rng.random_range(1..12.min(t));
        let n = rng.random_range(5..60);
        let x = gaussian(&mut rng, t, n);
        let y = gaussian(&mut rng, t, c);
        let w = ols_weights(x.view(), y.view(), &OlsConfig::default()).unwrap();
        let resid = &x - &y.dot(&w);
        let g = y.t().dot(&resid);
        worst_orth = worst_orth.max(g.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    let mut worst_rec = 0.0f64;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(50 + seed);
        let (t, c, n) = (120, 6, 300);
        let y = gaussian(&mut rng, t, c);
        let w0 = gaussian(&mut rng, c, n);
        let x = DataMatrix::new(y.dot(&w0), 10.0).unwrap();
        let emb = fbn::types::LatentEmbedding::new(y).unwrap();
        let maps = ols_regress(&x, &emb, &OlsConfig::default()).unwrap();
        for (k, m) in maps.iter().enumerate() {
            let r = pearson_view(m.weights.view(), w0.row(k)).unwrap();
            worst_rec = worst_rec.max((r - 1.0).abs());
        }
    }
    Outcome::new(
        worst_orth < 1e-8 && worst_rec < 1e-9,
        format!(
            "max |Y'(X - YW)| {worst_orth:.2e} over 100 instances (limit 1e-8), exact recovery |r - 1| {worst_rec:.2e} (limit 1e-9)"
        ),
    )
}

// 4

pub fn end_to_end(shared: &mut Shared) -> Outcome {
    let start = Instant::now();
    let exp = Experiment::new(0);
    let (model, best_epoch, train_s) = exp.train(LATENT);
    let mut rs = Vec::new();
    for i in exp.with_role(Role::Test) {
        let maps = exp.lstm_maps(&model, i);
        rs.push(ground_truth_match(&maps, &exp.truth[exp.subject_index[i]]).unwrap().mean_abs_r);
    }
    let mean = rs.iter().sum::<f64>() / rs.len() as f64;
    let secs = start.elapsed().as_secs_f64();
    let n = exp.mask.count();
    shared.exp0 = Some(exp);
    shared.model = Some(model);
    Outcome::new(
        mean >= 0.8 && secs <= 900.0,
        format!(
            "ground-truth mean |r| {mean:.3} over {} test sessions (need >= 0.8); N = {n}, C = {LATENT}, best epoch {best_epoch} of {EPOCHS}, training {train_s:.0} s, total {secs:.0} s (limit 900 s)",
            rs.len()
        ),
    )
}

// 5

fn variation_pair(exp: &Experiment, model: &LstmAe) -> (f64, f64) {
    let cfg = VariationConfig::default();
    let lstm = subject_variation(&exp.labelled(|i| exp.lstm_maps(model, i)), &cfg).unwrap();
    let ica_cfg = IcaConfig::default();
    let ica = subject_variation(
        &exp.labelled(|i| {
            fastica(&exp.data[i], &ica_cfg)
                .unwrap()
                .sources
                .into_iter()
                .map(|m| m.with_mask(exp.mask.id()))
                .collect()
        }),
        &cfg,
    )
    .unwrap();
    (lstm.mean, ica.mean)
}

pub fn subject_variation_vote(shared: &mut Shared) -> Outcome {
    shared.ensure();
    let mut wins = 0;
    let mut parts = Vec::new();
    for seed in 0..VARIATION_SEEDS {
        let (l, i) = if seed == 0 {
            let exp = shared.exp0.as_ref().unwrap();
            variation_pair(exp, shared.model.as_ref().unwrap())
        } else {
            let exp = Experiment::new(seed);
            let (model, _, _) = exp.train(LATENT);
            let pair = variation_pair(&exp, &model);
            shared.sbc_curves.insert(seed, exp.sbc_stability());
            pair
        };
        say(&format!("  seed {seed}: silhouette lstm-aer {l:.4}, ica {i:.4}"));
        wins += (l > i) as usize;
        parts.push(format!("seed {seed}: {l:.3} vs {i:.3}"));
    }
    Outcome::new(
        2 * wins > VARIATION_SEEDS as usize,
        format!(
            "lstm-aer silhouette above ica in {wins} of {VARIATION_SEEDS} seeds ({})",
            parts.join(", ")
        ),
    )
}

// 6

pub fn epoch_stability(shared: &mut Shared) -> Outcome {
    shared.ensure();
    for seed in 0..STABILITY_SEEDS {
        if !shared.sbc_curves.contains_key(&seed) {
            let curve = if seed == 0 {
                shared.exp0.as_ref().unwrap().sbc_stability()
            } else {
                Experiment::new(seed).sbc_stability()
            };
            shared.sbc_curves.insert(seed, curve);
        }
    }
    let exp = shared.exp0.as_ref().unwrap();
    let lengths = exp.lengths();
    let mean: Vec<Option<f64>> = (0..lengths.len())
        .map(|k| {
            let v: Option<Vec<f64>> = shared.sbc_curves.values().map(|c| c[k]).collect();
            v.map(|v| v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect();
    let sbc_ok = mean.iter().all(Option::is_some) && mean.windows(2).all(|w| w[1].unwrap() >= w[0].unwrap());

    let m = Method::LstmAer {
        model: shared.model.as_ref().unwrap(),
        ols: OlsConfig::default(),
    };
    let ends = [lengths[0], *lengths.last().unwrap()];
    let lstm = exp.stability(&m, &ends);
    let gain = match (lstm[0], lstm[1]) {
        (Some(a), Some(b)) => Some(b - a),
        _ => None,
    };
    let lstm_ok = gain.is_some_and(|g| g >= 0.1);
    Outcome::new(
        sbc_ok && lstm_ok,
        format!(
            "sbc mean over {STABILITY_SEEDS} seeds at {:?} s: {} (non-decreasing: {sbc_ok}); lstm-aer {} -> {} (gain {}, need >= 0.1)",
            lengths.iter().map(|l| (l * 10.0).round() / 10.0).collect::<Vec<_>>(),
            fmt_curve(&mean),
            fmt_curve(&lstm[..1]),
            fmt_curve(&lstm[1..]),
            gain.map_or("-".into(), |g| format!("{g:+.3}")),
        ),
    )
}

// 7

fn distinct_sources(exp: &Experiment, model: &LstmAe) -> f64 {
    let floor = MatchConfig::default().floor;
    let test = exp.with_role(Role::Test);
    let total: usize = test
        .iter()
        .map(|&i| truth_scores(&exp.lstm_maps(model, i), &exp.truth[exp.subject_index[i]], floor).unwrap().0)
        .sum();
    total as f64 / test.len() as f64
}

pub fn latent_sweep(shared: &mut Shared) -> Outcome {
    shared.ensure();
    let exp = shared.exp0.as_ref().unwrap();
    let d16 = distinct_sources(exp, shared.model.as_ref().unwrap());
    let d8 = distinct_sources(exp, &exp.train(8).0);
    let d32 = distinct_sources(exp, &exp.train(32).0);
    let g = exp.spec.sources as f64;
    Outcome::new(
        d8 < d16 && d8 < g && d32 >= d16,
        format!(
            "mean distinct ground-truth sources over test sessions: C=8 {d8:.2}, C=16 {d16:.2}, C=32 {d32:.2} (need C=8 < C=16, C=8 < {g}, C=32 >= C=16)"
        ),
    )
}

// 8

/// Two-sided Student t tail for df = 2 in closed form.
fn t_tail_df2(t: f64) -> f64 {
    1.0 - t.abs() / (t * t + 2.0).sqrt()
}

pub fn statistics() -> Outcome {
    let mut fails = Vec::new();
    let mut worst = 0.0f64;
    for k in -999..=999 {
        let r = k as f64 / 1000.0;
        worst = worst.max((fisher_z_inv(fisher_z(r).unwrap()).unwrap() - r).abs());
    }
    for k in -300..=300 {
        let z = k as f64 / 100.0;
        worst = worst.max((fisher_z(fisher_z_inv(z).unwrap()).unwrap() - z).abs());
    }
    if worst >= 1e-12 {
        fails.push(format!("fisher roundtrip {worst:.1e}"));
    }

    let bits = |v: &[u8]| BinaryMap {
        bits: v.iter().map(|&b| b == 1).collect(),
    };
    let cases: [(&[u8], &[u8], f64); 4] = [
        (&[1, 1, 0, 0], &[1, 0, 1, 0], 0.5),
        (&[1, 1, 1, 0], &[1, 1, 1, 0], 1.0),
        (&[1, 0, 0, 0], &[0, 1, 0, 0], 0.0),
        (&[1, 1, 1, 1], &[1, 0, 0, 0], 0.4),
    ];
    for (a, b, want) in cases {
        let d = dice(&bits(a), &bits(b)).unwrap();
        if d != want {
            fails.push(format!("dice {a:?} {b:?} = {d}, want {want}"));
        }
    }

    let tt = paired_ttest(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]).unwrap();
    let oracle = t_tail_df2(tt.t);
    if (tt.t - 3.4641).abs() > 1e-4 || (tt.p - 0.0742).abs() > 1e-3 || (tt.p - oracle).abs() > 1e-12 {
        fails.push(format!("t-test t {} p {} (oracle {oracle})", tt.t, tt.p));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = gaussian(&mut rng, 120, 10);
    let mut worst_h = 0.0f64;
    for perp in [5.0, 15.0, 30.0] {
        let p = conditional_probabilities(x.view(), perp).unwrap();
        for row in p.rows() {
            let h: f64 = row.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.log2()).sum();
            worst_h = worst_h.max((h - perp.log2()).abs());
        }
    }
    if worst_h >= 1e-4 {
        fails.push(format!("t-SNE row entropy off by {worst_h:.1e} bits"));
    }
    Outcome::new(
        fails.is_empty(),
        if fails.is_empty() {
            format!(
                "fisher roundtrip {worst:.1e}, dice hand cases exact, t = {:.4} p = {:.4} (closed form {oracle:.4}), row entropy within {worst_h:.1e} bits",
                tt.t, tt.p
            )
        } else {
            fails.join("; ")
        },
    )
}

// 9

pub fn cli_determinism() -> Outcome {
    match cli::determinism_check() {
        Ok(msg) => Outcome::new(true, msg),
        Err(msg) => Outcome::new(false, msg),
    }
}

// 10

fn is<T>(r: fbn::Result<T>, f: impl Fn(&Error) -> bool) -> bool {
    matches!(&r, Err(e) if f(e))
}

pub fn io_formats() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let mut fails = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let m = gaussian(&mut rng, 7, 13);
    save_matrix(m.view(), &p("a.fbm"), Dtype::F64).unwrap();
    let (back, dt) = load_matrix(&p("a.fbm")).unwrap();
    if dt != Dtype::F64 || back.iter().zip(m.iter()).any(|(a, b)| a.to_bits() != b.to_bits()) {
        fails.push("f64 roundtrip".to_string());
    }
    let m32 = m.mapv(|v| v as f32 as f64);
    save_matrix(m32.view(), &p("b.fbm"), Dtype::F32).unwrap();
    let (back32, _) = load_matrix(&p("b.fbm")).unwrap();
    if back32.iter().zip(m32.iter()).any(|(a, b)| a.to_bits() != b.to_bits()) {
        fails.push("f32 roundtrip".to_string());
    }
    save_matrix(back.view(), &p("c.fbm"), Dtype::F64).unwrap();
    if std::fs::read(p("a.fbm")).unwrap() != std::fs::read(p("c.fbm")).unwrap() {
        fails.push("re-save not byte-identical".to_string());
    }
    let mask = BrainMask::from_fn(9, 11, |r, c| (r * 3 + c) % 4 != 0).unwrap();
    save_mask(&mask, &p("m.fbk")).unwrap();
    if load_mask(&p("m.fbk")).unwrap() != mask {
        fails.push("mask roundtrip".to_string());
    }

    let path = Path::new("x.fbm");
    let good = encode_matrix(m.view(), Dtype::F64).unwrap();
    let mut bad_magic = good.clone();
    bad_magic[..4].copy_from_slice(b"XXXX");
    let mut bad_dtype = good.clone();
    bad_dtype[12] = 7;
    let mut overflow = good.clone();
    overflow[4..8].copy_from_slice(&u32::MAX.to_le_bytes());
    overflow[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
    let short = &good[..good.len() - 8];
    let checks = [
        ("bad magic", is(decode_matrix(&bad_magic, path), |e| matches!(e, Error::BadMagic { .. }))),
        ("bad dtype", is(decode_matrix(&bad_dtype, path), |e| matches!(e, Error::BadDtype { dtype: 7, .. }))),
        ("overflow", is(decode_matrix(&overflow, path), |e| matches!(e, Error::DimensionOverflow { .. }))),
        (
            "truncated",
            is(decode_matrix(short, path), |e| {
                matches!(e, Error::Truncated { expected, actual, .. } if *expected == 7 * 13 * 8 && *actual == 7 * 13 * 8 - 8)
            }),
        ),
        ("short header", is(decode_matrix(&good[..10], path), |e| matches!(e, Error::Truncated { .. }))),
    ];
    let mut mask_bytes = encode_mask(&mask).unwrap();
    let mut mask_magic = mask_bytes.clone();
    mask_magic[..4].copy_from_slice(b"FBM1");
    mask_bytes[20] = 2;
    let mask_checks = [
        ("mask magic", is(decode_mask(&mask_magic, path), |e| matches!(e, Error::BadMagic { .. }))),
        ("mask byte", is(decode_mask(&mask_bytes, path), |e| matches!(e, Error::BadMaskByte { value: 2, .. }))),
    ];
    for (name, ok) in checks.iter().chain(&mask_checks) {
        if !ok {
            fails.push(format!("{name} error class"));
        }
    }
    Outcome::new(
        fails.is_empty(),
        if fails.is_empty() {
            "f64/f32/mask roundtrips bit-exact; bad magic, dtype, overflow, truncation and mask byte errors classified".into()
        } else {
            fails.join("; ")
        },
    )
}
