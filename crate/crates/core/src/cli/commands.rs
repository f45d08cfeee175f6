use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Axis;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::RunConfig;
use super::stage::{Status, StageWriter, Workspace, MANIFEST};
use crate::decompose::{fnc_matrix, group_fnc, ols_regress, template_match, MatchConfig, NetworkAssignment};
use crate::error::{Error, Result};
use crate::eval::{
    dice, epoch_stability_curve, reproducibility, std_maps, subject_variation, threshold_fbn, threshold_reference,
    LabelledMap, Method, StabilityPoint,
};
use crate::ica::fastica;
use crate::io::{
    load_catalog, load_data_matrix, load_mask, load_matrix, save_catalog, Cell, Dtype, Role, SessionRecord, Table,
};
use crate::lstm::{encode_model, load_model, train, Architecture, LstmAe, TrainConfig};
use crate::preprocess::{ratiometric_correct, run_chain, Channel, FrameStack};
use crate::sbc::{build_templates, default_seeds, fc_matrix, seed_maps, synth_seeds, SeedSpec, SessionMaps, TemplateSet};
use crate::synth::{generate, ground_truth_match, SynthSpec};
use crate::types::{maps_to_matrix, AtlasFrame, BrainMask, DataMatrix, FcMatrix, LatentEmbedding, SpatialMap};

/// Method whose maps a command evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Sbc,
    Ica,
    Lstm,
}

impl MethodName {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodName::Sbc => "sbc",
            MethodName::Ica => "ica",
            MethodName::Lstm => "lstm",
        }
    }

    /// Stage holding the method's per-session maps.
    fn maps_stage(self) -> &'static str {
        match self {
            MethodName::Sbc => "sbc",
            MethodName::Ica => "ica",
            MethodName::Lstm => "regress",
        }
    }
}

pub const ALL_METHODS: [MethodName; 3] = [MethodName::Sbc, MethodName::Ica, MethodName::Lstm];

/// A loaded stage catalog.
pub struct Sessions {
    pub records: Vec<SessionRecord>,
    pub mask: BrainMask,
    pub data: Vec<DataMatrix>,
}

impl Sessions {
    fn indices(&self, roles: &[Role]) -> Vec<usize> {
        (0..self.records.len()).filter(|&i| roles.contains(&self.records[i].role)).collect()
    }
}

pub struct Ctx {
    pub cfg: RunConfig,
    pub ws: Workspace,
}

fn manifest_of(ws: &Workspace, stage: &str) -> PathBuf {
    ws.stage_dir(stage).join(MANIFEST)
}

fn map_rows(path: &Path, labels: Option<&[String]>, mask: &BrainMask) -> Result<Vec<SpatialMap>> {
    let (m, _) = load_matrix(path)?;
    if m.ncols() != mask.count() {
        return Err(Error::Shape(format!(
            "{}: maps have {} pixels, mask has {}",
            path.display(),
            m.ncols(),
            mask.count()
        )));
    }
    if let Some(l) = labels {
        if l.len() != m.nrows() {
            return Err(Error::Shape(format!(
                "{}: {} maps for {} labels",
                path.display(),
                m.nrows(),
                l.len()
            )));
        }
    }
    Ok(m.axis_iter(Axis(0))
        .enumerate()
        .map(|(i, row)| SpatialMap {
            weights: row.to_owned(),
            label: labels.map(|l| l[i].clone()),
            mask: Some(mask.id()),
        })
        .collect())
}

fn fc_table(fc: &FcMatrix) -> Table {
    let mut t = Table::new(std::iter::once("label".to_string()).chain(fc.labels.iter().cloned()));
    for (i, l) in fc.labels.iter().enumerate() {
        let mut row = vec![Cell::from(l.as_str())];
        row.extend(fc.values.row(i).iter().map(|&v| Cell::Real(v)));
        t.push(row);
    }
    t
}

fn assignment_table(a: &NetworkAssignment) -> Table {
    let mut t = Table::new(["map", "label", "r", "matched", "ties"]);
    for e in &a.entries {
        t.push(vec![
            e.map.into(),
            e.label.as_str().into(),
            e.r.into(),
            Cell::Int(e.matched as i64),
            e.ties.join(";").into(),
        ]);
    }
    t
}

fn opt_cell(v: Option<f64>) -> Cell {
    v.map_or_else(|| Cell::Text(String::new()), Cell::Real)
}

/// Outputs of encode, regress and match on one session.
pub struct SessionResult {
    pub embedding: LatentEmbedding,
    pub maps: Vec<SpatialMap>,
    pub assignment: NetworkAssignment,
    /// `None` when fewer than two networks were matched.
    pub fnc: Option<FcMatrix>,
}

pub fn session_pipeline(
    m: &DataMatrix,
    mask: &BrainMask,
    model: &LstmAe,
    templates: &TemplateSet,
    cfg: &RunConfig,
) -> Result<SessionResult> {
    let embedding = model.encode(m)?;
    let maps: Vec<SpatialMap> = ols_regress(m, &embedding, &cfg.ols)?
        .into_iter()
        .map(|s| s.with_mask(mask.id()))
        .collect();
    let assignment = template_match(&maps, templates, &cfg.matching)?;
    let fnc = match fnc_matrix(&embedding, &assignment) {
        Ok(f) => Some(f),
        Err(e @ (Error::InvalidInput(_) | Error::Degenerate(_))) => {
            log::warn!("no FNC matrix: {e}");
            None
        }
        Err(e) => return Err(e),
    };
    Ok(SessionResult {
        embedding,
        maps,
        assignment,
        fnc,
    })
}

/// Distinct ground-truth sources named by template matching against the
/// truth maps, and the one-to-one mean |r|.
pub fn truth_scores(maps: &[SpatialMap], truth: &[SpatialMap], floor: f64) -> Result<(usize, f64)> {
    let set = TemplateSet {
        maps: truth.to_vec(),
        provenance: Vec::new(),
    };
    let a = template_match(maps, &set, &MatchConfig { abs: true, floor })?;
    Ok((a.matched_labels().len(), ground_truth_match(maps, truth)?.mean_abs_r))
}

impl Ctx {
    fn synthetic(&self) -> bool {
        self.cfg.paths.catalog.is_none()
    }

    fn precision(&self) -> Dtype {
        self.cfg.lstm.precision
    }

    /// Atlas frame and seed table in effect.
    pub fn seed_table(&self) -> Result<(AtlasFrame, Vec<SeedSpec>)> {
        let s = &self.cfg.seeds;
        if self.synthetic() {
            let frame = match &s.frame {
                Some(f) => f.clone(),
                None => self.cfg.synth.atlas_frame()?,
            };
            let seeds = match &s.seeds {
                Some(v) => v.clone(),
                None => synth_seeds(&self.cfg.synth)?,
            };
            return Ok((frame, seeds));
        }
        let frame = s.frame.clone().ok_or_else(|| {
            Error::Config("seeds.frame (atlas frame of the data) is required with an external catalog".into())
        })?;
        Ok((frame, s.seeds.clone().unwrap_or_else(default_seeds)))
    }

    fn seed_names(&self) -> Result<Vec<String>> {
        Ok(self.seed_table()?.1.into_iter().map(|s| s.name).collect())
    }

    pub fn load_sessions(&self, stage: &str) -> Result<Sessions> {
        self.ws.verified(stage)?;
        let dir = self.ws.stage_dir(stage);
        let records = load_catalog(&dir.join("catalog.json"))?;
        let mask = load_mask(&dir.join("mask.fbk"))?;
        let data = records
            .par_iter()
            .map(|r| load_data_matrix(&r.matrix_path, r.fps))
            .collect::<Result<Vec<_>>>()?;
        Ok(Sessions { records, mask, data })
    }

    /// Per-subject ground-truth maps of a synthetic run.
    pub fn truth(&self, mask: &BrainMask) -> Result<Option<BTreeMap<String, Vec<SpatialMap>>>> {
        if !self.synthetic() {
            return Ok(None);
        }
        self.ws.verified("synth")?;
        let labels: Vec<String> = (0..self.cfg.synth.sources).map(SynthSpec::source_label).collect();
        let mut out = BTreeMap::new();
        let dir = self.ws.stage_dir("synth").join("truth");
        for s in 0..self.cfg.synth.subjects {
            let id = subject_id(s);
            out.insert(id.clone(), map_rows(&dir.join(format!("{id}.fbm")), Some(&labels), mask)?);
        }
        Ok(Some(out))
    }

    fn templates(&self, mask: &BrainMask) -> Result<TemplateSet> {
        self.ws.verified("sbc")?;
        let names = self.seed_names()?;
        Ok(TemplateSet {
            maps: map_rows(&self.ws.stage_dir("sbc").join("templates.fbm"), Some(&names), mask)?,
            provenance: Vec::new(),
        })
    }

    fn model(&self, stage: &str) -> Result<LstmAe> {
        self.ws.verified(stage)?;
        Ok(load_model(&self.ws.stage_dir(stage).join("model.fbl"))?.0)
    }

    // Stages

    pub fn synth(&self) -> Result<Status> {
        let spec = &self.cfg.synth;
        self.ws.run("synth", spec, &[], |w| {
            let c = generate(spec)?;
            w.mask("mask.fbk", &c.mask)?;
            let mut records = Vec::new();
            for (i, s) in c.sessions.iter().enumerate() {
                let key = format!("{}_{}", s.subject_id, s.session_id);
                w.matrix(&format!("sessions/{key}.fbm"), s.matrix.values(), Dtype::F64)?;
                w.matrix(&format!("traces/{key}.fbm"), c.truth.traces[i].view(), Dtype::F64)?;
                records.push(SessionRecord {
                    subject_id: s.subject_id.clone(),
                    session_id: s.session_id.clone(),
                    role: s.role,
                    fps: s.matrix.fps(),
                    matrix_path: w.path(&format!("sessions/{key}.fbm")),
                    mask_path: w.path("mask.fbk"),
                    reference_path: None,
                });
            }
            save_catalog(&records, &w.path("catalog.json"))?;
            w.adopt("catalog.json")?;
            w.matrix("groundtruth.fbm", maps_to_matrix(&c.truth.sources)?.view(), Dtype::F64)?;
            for (s, maps) in c.truth.subject_sources.iter().enumerate() {
                w.matrix(&format!("truth/{}.fbm", subject_id(s)), maps_to_matrix(maps)?.view(), Dtype::F64)?;
            }
            Ok(())
        })
    }

    fn raw_catalog(&self) -> Result<(PathBuf, Vec<PathBuf>)> {
        match &self.cfg.paths.catalog {
            None => {
                self.synth()?;
                Ok((
                    self.ws.stage_dir("synth").join("catalog.json"),
                    vec![manifest_of(&self.ws, "synth")],
                ))
            }
            Some(p) => {
                let records = load_catalog(p)?;
                let mut inputs = vec![p.clone()];
                for r in &records {
                    inputs.push(r.matrix_path.clone());
                    inputs.push(r.mask_path.clone());
                    inputs.extend(r.reference_path.clone());
                }
                inputs.sort();
                inputs.dedup();
                Ok((p.clone(), inputs))
            }
        }
    }

    pub fn preprocess(&self) -> Result<Status> {
        let (catalog, inputs) = self.raw_catalog()?;
        let source = match &self.cfg.paths.catalog {
            None => "synth".to_string(),
            Some(p) => p.display().to_string(),
        };
        let cfg = json!({ "preprocess": &self.cfg.preprocess, "catalog": source });
        self.ws.run("preprocess", &cfg, &inputs, |w| {
            let records = load_catalog(&catalog)?;
            let first = records
                .first()
                .ok_or_else(|| Error::InvalidInput(format!("{} lists no sessions", catalog.display())))?;
            let mask = load_mask(&first.mask_path)?;
            for r in &records[1..] {
                if r.mask_path != first.mask_path && load_mask(&r.mask_path)? != mask {
                    return Err(Error::InvalidInput(format!(
                        "session {} uses a different mask; all sessions must share one",
                        r.key()
                    )));
                }
            }
            let out = records
                .par_iter()
                .map(|r| {
                    let raw = match &r.reference_path {
                        None => load_data_matrix(&r.matrix_path, r.fps)?,
                        Some(rp) => {
                            let (h, wd) = (mask.height(), mask.width());
                            let em = FrameStack::new(h, wd, load_matrix(&r.matrix_path)?.0, Channel::Emission)?;
                            let rf = FrameStack::new(h, wd, load_matrix(rp)?.0, Channel::Reference)?;
                            ratiometric_correct(&em, &rf, &mask, r.fps)?.0
                        }
                    };
                    if raw.pixels() != mask.count() {
                        return Err(Error::Shape(format!(
                            "session {} has {} pixels, mask has {}",
                            r.key(),
                            raw.pixels(),
                            mask.count()
                        )));
                    }
                    log::debug!("preprocessing {}", r.key());
                    run_chain(&raw, &mask, &self.cfg.preprocess)
                })
                .collect::<Result<Vec<_>>>()?;
            w.mask("mask.fbk", &mask)?;
            let mut recs = Vec::new();
            for (r, m) in records.iter().zip(&out) {
                let rel = format!("sessions/{}.fbm", r.key());
                w.matrix(&rel, m.values(), Dtype::F64)?;
                recs.push(SessionRecord {
                    matrix_path: w.path(&rel),
                    mask_path: w.path("mask.fbk"),
                    reference_path: None,
                    ..r.clone()
                });
            }
            save_catalog(&recs, &w.path("catalog.json"))?;
            w.adopt("catalog.json")
        })
    }

    pub fn sbc(&self) -> Result<Status> {
        self.preprocess()?;
        let (frame, seeds) = self.seed_table()?;
        let cfg = json!({ "frame": &frame, "seeds": &seeds });
        self.ws.run("sbc", &cfg, &[manifest_of(&self.ws, "preprocess")], |w| {
            let s = self.load_sessions("preprocess")?;
            let per = s
                .data
                .par_iter()
                .map(|m| -> Result<_> {
                    let maps = seed_maps(m, &s.mask, &frame, &seeds)?;
                    Ok((maps, fc_matrix(m, &seeds, &s.mask, &frame)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut fit = Vec::new();
            for (r, (maps, fc)) in s.records.iter().zip(&per) {
                let key = r.key();
                let ms: Vec<SpatialMap> = maps.iter().map(|m| m.map.clone().with_mask(s.mask.id())).collect();
                w.matrix(&format!("maps/{key}.fbm"), maps_to_matrix(&ms)?.view(), Dtype::F64)?;
                w.csv(&format!("fc/{key}.csv"), &fc_table(fc))?;
                if r.role != Role::Test {
                    fit.push(SessionMaps {
                        subject_id: r.subject_id.clone(),
                        session_id: r.session_id.clone(),
                        maps: ms,
                    });
                }
            }
            if fit.is_empty() {
                return Err(Error::InvalidInput(
                    "templates need at least one train or val session".into(),
                ));
            }
            let t = build_templates(&fit)?;
            w.matrix("templates.fbm", maps_to_matrix(&t.maps)?.view(), Dtype::F64)?;
            w.json("templates.json", &json!({ "labels": t.labels(), "sessions": t.provenance }))
        })
    }

    pub fn ica(&self) -> Result<Status> {
        self.preprocess()?;
        let ica = self.cfg.ica;
        self.ws.run("ica", &ica, &[manifest_of(&self.ws, "preprocess")], |w| {
            let s = self.load_sessions("preprocess")?;
            let res = s
                .data
                .par_iter()
                .map(|m| fastica(m, &ica))
                .collect::<Result<Vec<_>>>()?;
            let mut t = Table::new(["subject", "session", "iterations", "converged"]);
            for (r, x) in s.records.iter().zip(&res) {
                let key = r.key();
                w.matrix(&format!("maps/{key}.fbm"), x.source_matrix().view(), self.precision())?;
                w.matrix(&format!("timecourses/{key}.fbm"), x.mixing.values(), self.precision())?;
                t.push(vec![
                    r.subject_id.as_str().into(),
                    r.session_id.as_str().into(),
                    x.iterations.into(),
                    Cell::Int(x.converged as i64),
                ]);
            }
            w.csv("convergence.csv", &t)
        })
    }

    fn train_on(&self, s: &Sessions, cfg: &TrainConfig) -> Result<(LstmAe, crate::lstm::TrainReport)> {
        let pick = |role| -> Vec<&DataMatrix> { s.indices(&[role]).into_iter().map(|i| &s.data[i]).collect() };
        let (tr, va) = (pick(Role::Train), pick(Role::Val));
        if tr.is_empty() || va.is_empty() {
            return Err(Error::InvalidInput(
                "LSTM training needs at least one train and one val session".into(),
            ));
        }
        train(&tr, &va, cfg)
    }

    fn write_model(w: &mut StageWriter, dir: &str, model: &LstmAe, report: &crate::lstm::TrainReport) -> Result<()> {
        let p = |f: &str| if dir.is_empty() { f.to_string() } else { format!("{dir}/{f}") };
        w.bytes(&p("model.fbl"), &encode_model(model, Some(report.best_epoch)))?;
        w.json(&p("report.json"), report)?;
        let mut t = Table::new(["epoch", "train_mse", "val_mse"]);
        for (e, (a, b)) in report.train_mse.iter().zip(&report.val_mse).enumerate() {
            t.push(vec![e.into(), (*a).into(), (*b).into()]);
        }
        w.csv(&p("loss.csv"), &t)
    }

    pub fn lstm_train(&self) -> Result<Status> {
        self.preprocess()?;
        let cfg = self.cfg.lstm.train_config();
        self.ws.run("lstm", &cfg, &[manifest_of(&self.ws, "preprocess")], |w| {
            let s = self.load_sessions("preprocess")?;
            let (model, report) = self.train_on(&s, &cfg)?;
            log::info!(
                "lstm: best epoch {} of {}, val mse {:.6}",
                report.best_epoch,
                cfg.epochs,
                report.best_val_mse()
            );
            Self::write_model(w, "", &model, &report)
        })
    }

    pub fn lstm_encode(&self) -> Result<Status> {
        self.lstm_train()?;
        let inputs = [manifest_of(&self.ws, "preprocess"), manifest_of(&self.ws, "lstm")];
        self.ws.run("encode", &json!({ "precision": self.precision() }), &inputs, |w| {
            let s = self.load_sessions("preprocess")?;
            let model = self.model("lstm")?;
            let ys = s.data.par_iter().map(|m| model.encode(m)).collect::<Result<Vec<_>>>()?;
            for (r, y) in s.records.iter().zip(&ys) {
                w.matrix(&format!("{}.fbm", r.key()), y.values(), self.precision())?;
            }
            Ok(())
        })
    }

    pub fn regress(&self) -> Result<Status> {
        self.lstm_encode()?;
        let inputs = [manifest_of(&self.ws, "preprocess"), manifest_of(&self.ws, "encode")];
        let cfg = json!({ "ols": self.cfg.ols, "precision": self.precision() });
        self.ws.run("regress", &cfg, &inputs, |w| {
            let s = self.load_sessions("preprocess")?;
            let dir = self.ws.stage_dir("encode");
            let maps = s
                .records
                .par_iter()
                .zip(&s.data)
                .map(|(r, m)| {
                    let y = LatentEmbedding::new(load_matrix(&dir.join(format!("{}.fbm", r.key())))?.0)?;
                    ols_regress(m, &y, &self.cfg.ols)
                })
                .collect::<Result<Vec<_>>>()?;
            for (r, ms) in s.records.iter().zip(&maps) {
                w.matrix(&format!("maps/{}.fbm", r.key()), maps_to_matrix(ms)?.view(), self.precision())?;
            }
            Ok(())
        })
    }

    fn ensure_maps(&self, method: MethodName) -> Result<()> {
        match method {
            MethodName::Sbc => self.sbc(),
            MethodName::Ica => self.ica(),
            MethodName::Lstm => self.regress(),
        }
        .map(|_| ())
    }

    /// Every session's maps of `method`, with template labels where the
    /// method does not name its maps.
    fn method_maps(&self, method: MethodName, s: &Sessions) -> Result<Vec<Vec<SpatialMap>>> {
        let stage = method.maps_stage();
        self.ws.verified(stage)?;
        let dir = self.ws.stage_dir(stage).join("maps");
        let names = self.seed_names()?;
        let labels = (method == MethodName::Sbc).then_some(names.as_slice());
        s.records
            .iter()
            .map(|r| map_rows(&dir.join(format!("{}.fbm", r.key())), labels, &s.mask))
            .collect()
    }

    fn labelled_maps(&self, method: MethodName, s: &Sessions, templates: &TemplateSet) -> Result<Vec<LabelledMap>> {
        let all = self.method_maps(method, s)?;
        let mut out = Vec::new();
        for (r, maps) in s.records.iter().zip(all) {
            let named: Vec<SpatialMap> = if method == MethodName::Sbc {
                maps
            } else {
                let a = template_match(&maps, templates, &self.cfg.matching)?;
                a.representatives()
                    .iter()
                    .map(|e| maps[e.map].clone().with_label(e.label.clone()))
                    .collect()
            };
            for m in named {
                out.push(LabelledMap {
                    subject: r.subject_id.clone(),
                    session: r.session_id.clone(),
                    label: m.label.clone().unwrap_or_default(),
                    map: m,
                });
            }
        }
        Ok(out)
    }

    pub fn match_maps(&self, method: MethodName) -> Result<Status> {
        self.ensure_maps(method)?;
        self.sbc()?;
        let inputs = [
            manifest_of(&self.ws, "preprocess"),
            manifest_of(&self.ws, "sbc"),
            manifest_of(&self.ws, method.maps_stage()),
        ];
        let stage = format!("match-{}", method.as_str());
        self.ws.run(&stage, &self.cfg.matching, &inputs, |w| {
            let s = self.load_sessions("preprocess")?;
            let templates = self.templates(&s.mask)?;
            let mut summary = Table::new(["subject", "session", "maps", "matched_networks"]);
            for (r, maps) in s.records.iter().zip(self.method_maps(method, &s)?) {
                let a = template_match(&maps, &templates, &self.cfg.matching)?;
                w.csv(&format!("{}.csv", r.key()), &assignment_table(&a))?;
                summary.push(vec![
                    r.subject_id.as_str().into(),
                    r.session_id.as_str().into(),
                    maps.len().into(),
                    a.matched_labels().len().into(),
                ]);
            }
            w.csv("summary.csv", &summary)
        })
    }

    fn test_indices(&self, s: &Sessions) -> Result<Vec<usize>> {
        let idx = s.indices(&[Role::Test]);
        if idx.is_empty() {
            return Err(Error::InvalidInput("the catalog has no test sessions".into()));
        }
        Ok(idx)
    }

    fn truth_inputs(&self) -> Vec<PathBuf> {
        if self.synthetic() {
            vec![manifest_of(&self.ws, "synth")]
        } else {
            Vec::new()
        }
    }

    /// Writes one pipeline tree (per test session) under `dir` and returns
    /// its summary rows.
    fn pipeline_tree(
        &self,
        w: &mut StageWriter,
        dir: &str,
        s: &Sessions,
        results: &[(usize, SessionResult)],
        truth: Option<&BTreeMap<String, Vec<SpatialMap>>>,
    ) -> Result<PipelineSummary> {
        let p = |f: String| if dir.is_empty() { f } else { format!("{dir}/{f}") };
        let mut table = Table::new([
            "subject",
            "session",
            "matched_networks",
            "mean_template_r",
            "truth_sources",
            "truth_mean_abs_r",
        ]);
        let mut fncs = Vec::new();
        let mut sum = PipelineSummary::default();
        for (i, res) in results {
            let r = &s.records[*i];
            let key = r.key();
            w.matrix(&p(format!("{key}/maps.fbm")), maps_to_matrix(&res.maps)?.view(), self.precision())?;
            w.matrix(&p(format!("{key}/latent.fbm")), res.embedding.values(), self.precision())?;
            w.csv(&p(format!("{key}/assignment.csv")), &assignment_table(&res.assignment))?;
            if let Some(f) = &res.fnc {
                w.csv(&p(format!("{key}/fnc.csv")), &fc_table(f))?;
                fncs.push(f.clone());
            }
            let reps = res.assignment.representatives();
            let mean_r = (!reps.is_empty()).then(|| reps.iter().map(|e| e.r).sum::<f64>() / reps.len() as f64);
            let gt = match truth.and_then(|t| t.get(&r.subject_id)) {
                Some(t) => Some(truth_scores(&res.maps, t, self.cfg.matching.floor)?),
                None => None,
            };
            let matched = res.assignment.matched_labels().len();
            table.push(vec![
                r.subject_id.as_str().into(),
                r.session_id.as_str().into(),
                matched.into(),
                opt_cell(mean_r),
                gt.map_or(Cell::Text(String::new()), |g| g.0.into()),
                opt_cell(gt.map(|g| g.1)),
            ]);
            sum.push(matched, mean_r, gt);
        }
        w.csv(&p("summary.csv".into()), &table)?;
        if !fncs.is_empty() {
            match group_fnc(&fncs) {
                Ok(g) => w.csv(&p("group_fnc.csv".into()), &fc_table(&g))?,
                Err(e @ (Error::InvalidInput(_) | Error::Degenerate(_))) => log::warn!("no group FNC matrix: {e}"),
                Err(e) => return Err(e),
            }
        }
        Ok(sum)
    }

    pub fn pipeline(&self) -> Result<Status> {
        self.sbc()?;
        self.lstm_train()?;
        let mut inputs = vec![
            manifest_of(&self.ws, "preprocess"),
            manifest_of(&self.ws, "sbc"),
            manifest_of(&self.ws, "lstm"),
        ];
        inputs.extend(self.truth_inputs());
        let cfg = json!({ "ols": self.cfg.ols, "matching": self.cfg.matching, "precision": self.precision() });
        self.ws.run("pipeline", &cfg, &inputs, |w| {
            let s = self.load_sessions("preprocess")?;
            let templates = self.templates(&s.mask)?;
            let model = self.model("lstm")?;
            let truth = self.truth(&s.mask)?;
            let results = self
                .test_indices(&s)?
                .into_par_iter()
                .map(|i| Ok((i, session_pipeline(&s.data[i], &s.mask, &model, &templates, &self.cfg)?)))
                .collect::<Result<Vec<_>>>()?;
            self.pipeline_tree(w, "", &s, &results, truth.as_ref())?;
            Ok(())
        })
    }

    // Evaluation

    fn eval_stage<F>(&self, kind: &str, method: MethodName, extra: serde_json::Value, body: F) -> Result<Status>
    where
        F: FnOnce(&mut StageWriter, &Sessions, &TemplateSet) -> Result<()>,
    {
        self.ensure_maps(method)?;
        self.sbc()?;
        let mut inputs = vec![
            manifest_of(&self.ws, "preprocess"),
            manifest_of(&self.ws, "sbc"),
            manifest_of(&self.ws, method.maps_stage()),
        ];
        if method == MethodName::Lstm {
            inputs.push(manifest_of(&self.ws, "lstm"));
        }
        let cfg = json!({ "matching": self.cfg.matching, "eval": self.cfg.eval, "extra": extra });
        let stage = format!("eval/{kind}-{}", method.as_str());
        self.ws.run(&stage, &cfg, &inputs, |w| {
            let s = self.load_sessions("preprocess")?;
            let templates = self.templates(&s.mask)?;
            body(w, &s, &templates)
        })
    }

    /// Binary reference maps per subject and label.
    fn dice_references(&self, s: &Sessions) -> Result<BTreeMap<String, BTreeMap<String, Vec<bool>>>> {
        let names = self.seed_names()?;
        let to_bits = |maps: &[SpatialMap], clip: bool| -> Result<BTreeMap<String, Vec<bool>>> {
            let mut out = BTreeMap::new();
            for m in maps {
                let v: Vec<f64> = m.weights.iter().map(|&x| if clip { x.max(0.0) } else { x }).collect();
                out.insert(m.label.clone().unwrap_or_default(), threshold_reference(&v)?.bits);
            }
            Ok(out)
        };
        let mut out = BTreeMap::new();
        if let Some(p) = &self.cfg.paths.reference {
            let shared = to_bits(&map_rows(p, Some(&names), &s.mask)?, false)?;
            for r in &s.records {
                out.insert(r.subject_id.clone(), shared.clone());
            }
        } else if let Some(truth) = self.truth(&s.mask)? {
            for (subject, maps) in &truth {
                out.insert(subject.clone(), to_bits(maps, true)?);
            }
        } else {
            return Err(Error::Config(
                "eval dice needs paths.reference with an external catalog".into(),
            ));
        }
        Ok(out)
    }

    pub fn eval_dice(&self, method: MethodName) -> Result<Status> {
        let extra = match &self.cfg.paths.reference {
            Some(p) => json!({ "reference_sha256": super::stage::hash_file(p)? }),
            None => json!(null),
        };
        self.eval_stage("dice", method, extra, |w, s, templates| {
            let refs = self.dice_references(s)?;
            let maps = self.labelled_maps(method, s, templates)?;
            let mut t = Table::new(["subject", "session", "label", "dice"]);
            let mut by_label: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for m in &maps {
                let Some(reference) = refs.get(&m.subject).and_then(|r| r.get(&m.label)) else {
                    continue;
                };
                let fbn = threshold_fbn(&m.map, self.cfg.eval.even_median)?;
                let d = dice(
                    &fbn,
                    &crate::eval::BinaryMap {
                        bits: reference.clone(),
                    },
                )?;
                t.push(vec![
                    m.subject.as_str().into(),
                    m.session.as_str().into(),
                    m.label.as_str().into(),
                    d.into(),
                ]);
                by_label.entry(m.label.clone()).or_default().push(d);
            }
            w.csv("dice.csv", &t)?;
            w.csv("summary.csv", &mean_sd_table(&by_label))
        })
    }

    pub fn eval_variation(&self, method: MethodName) -> Result<Status> {
        self.eval_stage("variation", method, json!(null), |w, s, templates| {
            let maps = self.labelled_maps(method, s, templates)?;
            let rep = subject_variation(&maps, &self.cfg.eval.variation)?;
            let mut t = Table::new(["subject", "session", "network", "x", "y", "silhouette"]);
            for (i, m) in maps.iter().enumerate() {
                t.push(vec![
                    m.subject.as_str().into(),
                    m.session.as_str().into(),
                    m.label.as_str().into(),
                    rep.points.coords[(i, 0)].into(),
                    rep.points.coords[(i, 1)].into(),
                    rep.per_point[i].into(),
                ]);
            }
            w.csv("points.csv", &t)?;
            let mut n = Table::new(["network", "silhouette"]);
            for (l, v) in &rep.per_network {
                n.push(vec![l.as_str().into(), (*v).into()]);
            }
            w.csv("networks.csv", &n)?;
            w.json("summary.json", &json!({ "method": method, "mean": rep.mean, "sd": rep.sd, "points": maps.len() }))
        })
    }

    pub fn eval_repro(&self, method: MethodName) -> Result<Status> {
        self.eval_stage("repro", method, json!(null), |w, s, templates| {
            let rep = reproducibility(&self.labelled_maps(method, s, templates)?)?;
            let mut t = Table::new(["label", "intra", "inter"]);
            for i in 0..rep.labels.len() {
                t.push(vec![rep.labels[i].as_str().into(), opt_cell(rep.intra[i]), opt_cell(rep.inter[i])]);
            }
            w.csv("repro.csv", &t)
        })
    }

    pub fn eval_stdmaps(&self, method: MethodName) -> Result<Status> {
        self.eval_stage("stdmaps", method, json!(null), |w, s, templates| {
            let maps = self.labelled_maps(method, s, templates)?;
            let mut t = Table::new(["label", "mean_inter_sd", "mean_intra_sd", "error"]);
            for label in templates.labels() {
                match std_maps(&maps, label) {
                    Ok(sd) => {
                        let both = ndarray::stack(Axis(0), &[sd.inter.view(), sd.intra.view()])
                            .map_err(|e| Error::Shape(e.to_string()))?;
                        w.matrix(&format!("{label}.fbm"), both.view(), Dtype::F64)?;
                        t.push(vec![
                            label.into(),
                            sd.inter.mean().unwrap_or(f64::NAN).into(),
                            sd.intra.mean().unwrap_or(f64::NAN).into(),
                            "".into(),
                        ]);
                    }
                    Err(e) if e.is_user_error() => {
                        log::warn!("stdmaps {label}: {e}");
                        t.push(vec![label.into(), opt_cell(None), opt_cell(None), e.to_string().into()]);
                    }
                    Err(e) => return Err(e),
                }
            }
            w.csv("summary.csv", &t)
        })
    }

    fn lengths(&self, override_s: Option<&[f64]>, duration: f64) -> Vec<f64> {
        let mut v: Vec<f64> = override_s.unwrap_or(&self.cfg.eval.epoch_lengths_s).to_vec();
        v.sort_by(f64::total_cmp);
        v.dedup();
        if v.last().is_none_or(|&l| l < duration) {
            v.push(duration);
        }
        v
    }

    fn stability_rows(
        &self,
        method: MethodName,
        s: &Sessions,
        templates: &TemplateSet,
        lengths: Option<&[f64]>,
    ) -> Result<Vec<(usize, Vec<StabilityPoint>)>> {
        let (frame, seeds) = self.seed_table()?;
        let model = match method {
            MethodName::Lstm => Some(self.model("lstm")?),
            _ => None,
        };
        let m = match method {
            MethodName::Sbc => Method::Sbc {
                mask: &s.mask,
                frame: &frame,
                seeds: &seeds,
            },
            MethodName::Ica => Method::Ica { config: self.cfg.ica },
            MethodName::Lstm => Method::LstmAer {
                model: model.as_ref().expect("loaded above"),
                ols: self.cfg.ols,
            },
        };
        self.test_indices(s)?
            .into_par_iter()
            .map(|i| {
                let ls = self.lengths(lengths, s.data[i].duration());
                Ok((i, epoch_stability_curve(&s.data[i], &m, &ls, templates, &self.cfg.matching)))
            })
            .collect()
    }

    pub fn eval_epochs(&self, method: MethodName) -> Result<Status> {
        self.eval_stage("epochs", method, json!({ "ica": self.cfg.ica, "ols": self.cfg.ols }), |w, s, templates| {
            let rows = self.stability_rows(method, s, templates, None)?;
            w.csv("curve.csv", &curve_table(s, &[(method, rows)]))
        })
    }

    // Sweeps

    pub fn sweep_c(&self, values: &[usize]) -> Result<Status> {
        if values.is_empty() || values.contains(&0) {
            return Err(Error::InvalidInput("sweep-c needs latent sizes >= 1".into()));
        }
        self.sbc()?;
        let mut inputs = vec![manifest_of(&self.ws, "preprocess"), manifest_of(&self.ws, "sbc")];
        inputs.extend(self.truth_inputs());
        let cfg = json!({
            "values": values,
            "lstm": self.cfg.lstm,
            "ols": self.cfg.ols,
            "matching": self.cfg.matching,
        });
        self.ws.run("sweep-c", &cfg, &inputs, |w| {
            let s = self.load_sessions("preprocess")?;
            let templates = self.templates(&s.mask)?;
            let truth = self.truth(&s.mask)?;
            let test = self.test_indices(&s)?;
            let runs = values
                .par_iter()
                .map(|&c| {
                    let mut tc = self.cfg.lstm.train_config();
                    tc.architecture = latent_architecture(&tc.architecture, c);
                    let (model, report) = self.train_on(&s, &tc)?;
                    log::info!("sweep-c: C = {c}, best epoch {}", report.best_epoch);
                    let res = test
                        .iter()
                        .map(|&i| Ok((i, session_pipeline(&s.data[i], &s.mask, &model, &templates, &self.cfg)?)))
                        .collect::<Result<Vec<_>>>()?;
                    Ok((c, model, report, res))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut t = Table::new([
                "c",
                "sessions",
                "matched_networks",
                "mean_template_r",
                "truth_sources",
                "truth_mean_abs_r",
                "best_epoch",
                "best_val_mse",
            ]);
            for (c, model, report, res) in &runs {
                let dir = format!("c{c}");
                Self::write_model(w, &dir, model, report)?;
                let sum = self.pipeline_tree(w, &dir, &s, res, truth.as_ref())?;
                t.push(vec![
                    (*c).into(),
                    res.len().into(),
                    sum.matched_mean().into(),
                    opt_cell(sum.template_r_mean()),
                    opt_cell(sum.truth_sources_mean()),
                    opt_cell(sum.truth_r_mean()),
                    report.best_epoch.into(),
                    report.best_val_mse().into(),
                ]);
            }
            w.csv("comparison.csv", &t)
        })
    }

    pub fn sweep_epochs(&self, lengths: Option<&[f64]>) -> Result<Status> {
        if let Some(bad) = lengths.and_then(|l| l.iter().find(|v| !(v.is_finite() && **v > 0.0))) {
            return Err(Error::InvalidInput(format!("epoch lengths must be positive, found {bad}")));
        }
        self.sbc()?;
        self.ica()?;
        self.lstm_train()?;
        let inputs = ["preprocess", "sbc", "ica", "lstm"].map(|st| manifest_of(&self.ws, st));
        let cfg = json!({
            "lengths": lengths.unwrap_or(&self.cfg.eval.epoch_lengths_s),
            "ica": self.cfg.ica,
            "ols": self.cfg.ols,
            "matching": self.cfg.matching,
        });
        self.ws.run("sweep-epochs", &cfg, &inputs, |w| {
            let s = self.load_sessions("preprocess")?;
            let templates = self.templates(&s.mask)?;
            let curves = ALL_METHODS
                .iter()
                .map(|&m| Ok((m, self.stability_rows(m, &s, &templates, lengths)?)))
                .collect::<Result<Vec<_>>>()?;
            w.csv("curve.csv", &curve_table(&s, &curves))?;
            let mut t = Table::new(["method", "length_s", "mean_r", "sessions"]);
            for (m, rows) in &curves {
                let mut by_len: BTreeMap<u64, (f64, Vec<f64>)> = BTreeMap::new();
                for (_, pts) in rows {
                    for p in pts {
                        let e = by_len.entry(p.length_s.to_bits()).or_insert((p.length_s, Vec::new()));
                        if let Some(r) = p.mean_r {
                            e.1.push(r);
                        }
                    }
                }
                let mut lens: Vec<_> = by_len.into_values().collect();
                lens.sort_by(|a, b| a.0.total_cmp(&b.0));
                for (len, rs) in lens {
                    let mean = (!rs.is_empty()).then(|| rs.iter().sum::<f64>() / rs.len() as f64);
                    t.push(vec![m.as_str().into(), len.into(), opt_cell(mean), rs.len().into()]);
                }
            }
            w.csv("summary.csv", &t)
        })
    }
}

pub fn subject_id(s: usize) -> String {
    format!("sub{s:02}")
}

fn latent_architecture(a: &Architecture, c: usize) -> Architecture {
    let mut out = a.clone();
    if let Some(last) = out.encoder.last_mut() {
        *last = c;
    }
    out
}

fn mean_sd_table(by_label: &BTreeMap<String, Vec<f64>>) -> Table {
    let mut t = Table::new(["label", "mean", "sd", "n"]);
    for (l, v) in by_label {
        let sd = if v.len() > 1 { Some(crate::stats::sample_sd(v)) } else { None };
        t.push(vec![l.as_str().into(), crate::stats::mean(v).into(), opt_cell(sd), v.len().into()]);
    }
    t
}

fn curve_table(s: &Sessions, curves: &[(MethodName, Vec<(usize, Vec<StabilityPoint>)>)]) -> Table {
    let mut t = Table::new([
        "method", "subject", "session", "length_s", "frames", "epochs", "mean_r", "sd_r", "error",
    ]);
    for (m, rows) in curves {
        for (i, pts) in rows {
            let r = &s.records[*i];
            for p in pts {
                t.push(vec![
                    m.as_str().into(),
                    r.subject_id.as_str().into(),
                    r.session_id.as_str().into(),
                    p.length_s.into(),
                    p.frames.into(),
                    p.epochs.into(),
                    opt_cell(p.mean_r),
                    opt_cell(p.sd_r),
                    p.error.clone().unwrap_or_default().into(),
                ]);
            }
        }
    }
    t
}

#[derive(Default)]
struct PipelineSummary {
    matched: Vec<f64>,
    template_r: Vec<f64>,
    truth_sources: Vec<f64>,
    truth_r: Vec<f64>,
}

impl PipelineSummary {
    fn push(&mut self, matched: usize, template_r: Option<f64>, truth: Option<(usize, f64)>) {
        self.matched.push(matched as f64);
        self.template_r.extend(template_r);
        if let Some((n, r)) = truth {
            self.truth_sources.push(n as f64);
            self.truth_r.push(r);
        }
    }

    fn mean(v: &[f64]) -> Option<f64> {
        (!v.is_empty()).then(|| crate::stats::mean(v))
    }

    fn matched_mean(&self) -> f64 {
        Self::mean(&self.matched).unwrap_or(0.0)
    }

    fn template_r_mean(&self) -> Option<f64> {
        Self::mean(&self.template_r)
    }

    fn truth_sources_mean(&self) -> Option<f64> {
        Self::mean(&self.truth_sources)
    }

    fn truth_r_mean(&self) -> Option<f64> {
        Self::mean(&self.truth_r)
    }
}
