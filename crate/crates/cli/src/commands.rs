use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use contact_field::eval::{evaluate_fields, LossConfig};
use contact_field::force_opt::{self, Candidate, SocpProblem, SolverConfig};
use contact_field::geometry::{batch_distance, SdfScene};
use contact_field::io::{read_episode, read_fields, write_episode, write_fields, write_ply};
use contact_field::real_label::{label_episode_real, HeuristicConfig};
use contact_field::sim_label::{label_frame, ExtrapolationConfig, SoftContactConfig, SparseContact};
use contact_field::synth::{generate_episode, SynthConfig};
use contact_field::tactile::{
    calibrate, compute_wrench, filter_episode, load_filter_config, FilterConfig, GateConfig,
};
use contact_field::{CalibrationScale, Error, FrameId, Vec3, Wrench};

use crate::{
    CalibrateArgs, Cli, Command, EvalArgs, ExportPlyArgs, FilterArgs, LabelRealArgs,
    LabelSimArgs, SolveForcesArgs, SynthArgs,
};

/// Like `println!`, but a closed stdout is not an error.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a, cli.seed),
        Command::Filter(a) => filter(a),
        Command::LabelSim(a) => label_sim(a),
        Command::LabelReal(a) => label_real(a),
        Command::SolveForces(a) => solve_forces(a),
        Command::Eval(a) => eval(a),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::ExportPly(a) => export_ply(a),
    }
}

fn read_text(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Validation(format!("{}: {e}", path.display())).into())
}

/// One JSON value per non-blank line.
fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: format!("{}: {e}", path.display()),
        })?;
        out.push(v);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn filter_configs(path: Option<&PathBuf>) -> Result<(FilterConfig, GateConfig)> {
    Ok(match path {
        Some(p) => load_filter_config(p)?,
        None => (FilterConfig::default(), GateConfig::default()),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct WrenchRecord {
    force: [f64; 3],
    torque: [f64; 3],
}

impl WrenchRecord {
    fn from_wrench(w: &Wrench) -> Self {
        Self {
            force: w.force.into(),
            torque: w.torque.into(),
        }
    }

    fn to_wrench(&self) -> Wrench {
        Wrench::new(self.force.into(), self.torque.into(), FrameId::Gripper)
    }
}

#[derive(Debug, Serialize)]
struct TruthRecord<'a> {
    t: f64,
    phase: contact_field::synth::Phase,
    wrench: WrenchRecord,
    contact_set: &'a [usize],
}

fn synth(a: SynthArgs, seed: Option<u64>) -> Result<()> {
    let mut cfg: SynthConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    if let Some(n) = a.frames {
        cfg.episode.n_frames = n;
    }
    if let Some(s) = seed {
        cfg.rng_seed = s;
    }
    let ep = generate_episode(&cfg)?;
    write_episode(&a.out, &ep.frames)?;
    if let Some(p) = &a.contacts {
        write_jsonl(p, &ep.contacts)?;
    }
    if let Some(p) = &a.truth {
        let records = ep.frames.iter().enumerate().map(|(k, f)| TruthRecord {
            t: f.time,
            phase: ep.phases[k],
            wrench: WrenchRecord::from_wrench(&ep.wrenches[k]),
            contact_set: &ep.contact_sets[k],
        });
        write_jsonl(p, records)?;
    }
    say!("wrote {} frames to {}", ep.frames.len(), a.out.display());
    Ok(())
}

fn filter(a: FilterArgs) -> Result<()> {
    let (cfg, _) = filter_configs(a.config.as_ref())?;
    let mut frames = read_episode(&a.episode)?;
    filter_episode(&mut frames, &cfg)?;
    write_episode(&a.out, &frames)?;
    say!("filtered {} frames into {}", frames.len(), a.out.display());
    Ok(())
}

fn label_sim(a: LabelSimArgs) -> Result<()> {
    let scene = SdfScene::load(&a.scene)?;
    let frames = read_episode(&a.episode)?;
    let contacts: Vec<Vec<SparseContact>> = read_jsonl(&a.contacts)?;
    if contacts.len() != frames.len() {
        bail!(Error::Validation(format!(
            "{} contact records for {} frames",
            contacts.len(),
            frames.len()
        )));
    }
    let soft = SoftContactConfig {
        k_sharpness: a.k_sharpness,
        half_prob_depth: a.half_prob_depth,
    };
    let extra = ExtrapolationConfig {
        lambda_dist: a.lambda_dist,
        d_thresh: a.d_thresh,
        clip_percentile: (!a.no_clip).then_some(a.clip_percentile),
    };
    let fields = frames
        .par_iter()
        .zip(contacts.par_iter())
        .map(|(f, c)| {
            let d = batch_distance(&scene, &f.tool_points);
            label_frame(&f.tool_points, &d, c, &soft, &extra).map(|field| (f.time, field))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    write_fields(&a.out, &fields)?;
    say!("labeled {} frames into {}", fields.len(), a.out.display());
    Ok(())
}

fn label_real(a: LabelRealArgs) -> Result<()> {
    let (filter_cfg, gate) = filter_configs(a.filter_config.as_ref())?;
    let mut frames = read_episode(&a.episode)?;
    match a.table_z.as_str() {
        "from-frames" => {
            if let Some(f) = frames.iter().find(|f| f.table_z.is_none()) {
                bail!(Error::Validation(format!(
                    "frame at t={} has no table_z; pass --table-z",
                    f.time
                )));
            }
        }
        s => {
            let z: f64 = s.parse().map_err(|_| {
                Error::Validation(format!("--table-z expects a number or `from-frames`, got `{s}`"))
            })?;
            for f in frames.iter_mut() {
                f.table_z = Some(z);
            }
        }
    }
    let heur = HeuristicConfig {
        epsilon_height: a.epsilon_height,
        gate,
    };
    let cal = CalibrationScale::new(a.calibration)?;
    let labels = label_episode_real(&frames, &filter_cfg, &heur, cal, a.lambda, a.eps)?;
    let fields: Vec<_> = frames.iter().map(|f| f.time).zip(labels.fields).collect();
    write_fields(&a.out, &fields)?;
    let diag_path = a.diagnostics.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".diag.jsonl");
        PathBuf::from(p)
    });
    write_jsonl(&diag_path, &labels.diagnostics)?;
    let gated = labels.diagnostics.iter().filter(|d| d.gated).count();
    let skipped = labels.diagnostics.iter().filter(|d| d.skipped.is_some()).count();
    let unconverged = labels.diagnostics.iter().filter(|d| !d.converged).count();
    say!(
        "labeled {} frames ({gated} in contact, {skipped} skipped, {unconverged} unconverged) into {}",
        fields.len(),
        a.out.display()
    );
    Ok(())
}

#[derive(Debug, Deserialize)]
struct CandidateRecord {
    t: f64,
    candidates: Vec<Candidate>,
    #[serde(default)]
    wrench: Option<WrenchRecord>,
}

#[derive(Debug, Serialize)]
struct SolutionRecord {
    t: f64,
    forces: Vec<[f64; 3]>,
    objective: f64,
    wrench_residual: f64,
    kkt_residual: f64,
    iterations: usize,
    converged: bool,
}

fn solve_forces(a: SolveForcesArgs) -> Result<()> {
    let frames = read_episode(&a.episode)?;
    let records: Vec<CandidateRecord> = read_jsonl(&a.candidates)?;
    let cal = CalibrationScale::new(a.calibration)?;
    let cfg = SolverConfig::default();
    let mut out = Vec::with_capacity(records.len());
    let mut warm: Option<Vec<Vec3>> = None;
    for rec in records {
        let frame = frames
            .iter()
            .find(|f| (f.time - rec.t).abs() <= 1e-9)
            .ok_or_else(|| Error::Validation(format!("no frame at t={}", rec.t)))?;
        let target = match &rec.wrench {
            Some(w) => w.to_wrench(),
            None => compute_wrench(&frame.tactile, &frame.gripper_pose, cal)?,
        };
        if rec.candidates.is_empty() {
            log::warn!("t={}: no candidates, skipping", rec.t);
            warm = None;
            continue;
        }
        let problem = SocpProblem {
            candidates: rec.candidates,
            target,
            reg_lambda: a.lambda,
            reg_eps: a.eps,
        };
        let start = warm.as_deref().filter(|w| w.len() == problem.candidates.len());
        let sol = force_opt::solve_warm(&problem, &cfg, start)?;
        out.push(SolutionRecord {
            t: rec.t,
            forces: sol.forces.iter().map(|f| (*f).into()).collect(),
            objective: sol.objective,
            wrench_residual: sol.wrench_residual,
            kkt_residual: sol.kkt_residual,
            iterations: sol.iterations,
            converged: sol.converged,
        });
        warm = Some(sol.forces);
    }
    write_jsonl(&a.out, &out)?;
    say!("solved {} frames into {}", out.len(), a.out.display());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let pred = read_fields(&a.pred)?;
    let gt = read_fields(&a.gt)?;
    if pred.len() != gt.len() {
        bail!(Error::Validation(format!(
            "{} predicted frames but {} reference frames",
            pred.len(),
            gt.len()
        )));
    }
    if let Some(((tp, _), (tg, _))) = pred.iter().zip(&gt).find(|((tp, _), (tg, _))| (tp - tg).abs() > 1e-9) {
        bail!(Error::Validation(format!("frame times differ: {tp} vs {tg}")));
    }
    let p: Vec<_> = pred.into_iter().map(|(_, f)| f).collect();
    let g: Vec<_> = gt.into_iter().map(|(_, f)| f).collect();
    let report = evaluate_fields(&p, &g, a.threshold, &LossConfig::default())?;
    if let Some(path) = &a.report {
        write_json(path, &report)?;
    }
    say!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

#[derive(Debug, Serialize)]
struct CalibrationRecord {
    scale: f64,
    frame: usize,
}

fn calibrate_cmd(a: CalibrateArgs) -> Result<()> {
    let frames = read_episode(&a.episode)?;
    if frames.is_empty() {
        bail!(Error::Validation("episode has no frames".into()));
    }
    let reference: WrenchRecord = read_json(&a.reference)?;
    let observed: Vec<Wrench> = frames
        .iter()
        .map(|f| compute_wrench(&f.tactile, &f.gripper_pose, CalibrationScale::identity()))
        .collect::<Result<_, _>>()?;
    let k = match a.frame {
        Some(k) if k < frames.len() => k,
        Some(k) => bail!(Error::Validation(format!(
            "frame {k} out of range for {} frames",
            frames.len()
        ))),
        None => (0..observed.len())
            .max_by(|&i, &j| observed[i].scaled_norm().total_cmp(&observed[j].scaled_norm()))
            .expect("non-empty"),
    };
    let scale = calibrate(&observed[k], &reference.to_wrench())?;
    let rec = CalibrationRecord {
        scale: scale.value(),
        frame: k,
    };
    if let Some(p) = &a.out {
        write_json(p, &rec)?;
    }
    say!("{}", serde_json::to_string(&rec)?);
    Ok(())
}

fn export_ply(a: ExportPlyArgs) -> Result<()> {
    let frames = read_episode(&a.episode)?;
    let frame = frames.get(a.frame).ok_or_else(|| {
        Error::Validation(format!("frame {} out of range for {} frames", a.frame, frames.len()))
    })?;
    let field = match &a.fields {
        Some(p) => {
            let fields = read_fields(p)?;
            fields
                .into_iter()
                .nth(a.frame)
                .map(|(_, f)| f)
                .ok_or_else(|| Error::Validation(format!("{} has no frame {}", p.display(), a.frame)))?
        }
        None => frame
            .labels
            .clone()
            .ok_or_else(|| Error::Validation(format!("frame {} carries no labels; pass --fields", a.frame)))?,
    };
    write_ply(&a.out, &frame.tool_points, &field)
        .with_context(|| format!("exporting frame {}", a.frame))?;
    say!("wrote {} points to {}", field.len(), a.out.display());
    Ok(())
}
