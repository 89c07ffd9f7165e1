//! Experiment drivers behind the command-line front end: run configuration,
//! the theory verification suite, multi-seed training batches and summary
//! tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::advantage::{group_stats, standardized_column, worked_example, Estimator};
use crate::envs::{constant_velocity_sweep, BanditConfig, ReacherConfig, SweepResult};
use crate::error::{Error, Result};
use crate::policy::{save_checkpoint, Activation, AdamConfig};
use crate::theory::{
    affine_invariance_fuzz, empirical_corr, reversal_example, write_corr_csv, AffineFuzzReport,
    CorrReport, CovSpec, ReversalExample,
};
use crate::trainer::{write_metrics_csv, EnvSpec, MetricsLog, TrainConfig, Trainer};

/// Version written into every `finals.csv` row.
pub const FINALS_SCHEMA_VERSION: u32 = 1;
/// Allowed gap between predicted and empirical correlations.
pub const CORR_TOL: f64 = 0.01;
/// Sample count at which [`CORR_TOL`] is meaningful.
pub const MIN_VERIFY_SAMPLES: usize = 1_000_000;
/// Allowed entrywise change of MO-GRPO advantages under an affine transform.
pub const AFFINE_TOL: f64 = 1e-6;
/// Reference MO-GRPO per-column terms of the worked example.
pub const REFERENCE_MOGRPO_TERMS: [[f64; 3]; 2] = [[-1.22, 0.0, 1.22], [0.93, 0.46, -1.39]];
/// Reference GRPO advantages of the worked example (not reproducible from its inputs).
pub const REFERENCE_GRPO_ADVANTAGES: [f64; 3] = [-1.38, 0.43, 0.95];
pub const DEMO_TOL: f64 = 0.01;

// ---------------------------------------------------------------------------
// Run configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub out: PathBuf,
    pub seed: u64,
    /// Seeds expand as `seed + index` for `index < seeds`.
    pub seeds: usize,
    pub methods: Vec<Estimator>,
    /// Train methods and seeds on worker threads.
    pub parallel: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            out: PathBuf::from("runs"),
            seed: 0,
            seeds: 5,
            methods: Estimator::ALL.to_vec(),
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub group_size: usize,
    pub clip_eps: f64,
    pub kl_beta: f64,
    pub inner_steps: usize,
    pub ref_interval: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub sqrt_k_scale: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            group_size: 8,
            clip_eps: 0.2,
            kl_beta: 0.04,
            inner_steps: 1,
            ref_interval: 1,
            hidden: vec![16, 16, 16],
            activation: Activation::Tanh,
            sqrt_k_scale: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BanditSection {
    pub arms: usize,
    /// Training iterations, one group of pulls each.
    pub iterations: usize,
}

impl Default for BanditSection {
    fn default() -> Self {
        Self {
            arms: 50,
            iterations: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReacherSection {
    pub iterations: usize,
    pub eval_episodes: usize,
    /// Lattice size per joint of the constant-velocity self-check.
    pub sweep_grid: usize,
    pub env: ReacherConfig,
}

impl Default for ReacherSection {
    fn default() -> Self {
        Self {
            iterations: 500,
            eval_episodes: 32,
            sweep_grid: 201,
            env: ReacherConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    /// `fig1` or `bandit`; ignored when `spec_file` is set.
    pub preset: String,
    pub spec_file: Option<PathBuf>,
    /// Minimum pooled samples per estimator.
    pub samples: usize,
    /// Large groups keep finite-group attenuation below the tolerance.
    pub group_size: usize,
    pub fuzz_trials: usize,
    pub fuzz_group_size: usize,
    pub fuzz_objectives: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            preset: "fig1".into(),
            spec_file: None,
            samples: MIN_VERIFY_SAMPLES,
            group_size: 1024,
            fuzz_trials: 1000,
            fuzz_group_size: 8,
            fuzz_objectives: 3,
        }
    }
}

/// Contents of a run-config file; every section and key is optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub train: TrainSection,
    pub optimizer: AdamConfig,
    pub bandit: BanditSection,
    pub reacher: ReacherSection,
    pub verify: VerifySection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse(&text).map_err(|e| Error::file(path, e))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.seeds == 0 {
            return Err(Error::Config("seed list must be nonempty".into()));
        }
        if self.run.methods.is_empty() {
            return Err(Error::Config("method list must be nonempty".into()));
        }
        self.reacher.env.validate()?;
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.run.seeds as u64)
            .map(|i| self.run.seed + i)
            .collect()
    }

    /// Trainer settings for one (experiment, method, seed) cell.
    pub fn train_config(
        &self,
        experiment: Experiment,
        method: Estimator,
        seed: u64,
    ) -> TrainConfig {
        let t = &self.train;
        let (iterations, env, eval_episodes) = match experiment {
            Experiment::Bandit => (
                self.bandit.iterations,
                EnvSpec::Bandit(BanditConfig {
                    arms: self.bandit.arms,
                    ..BanditConfig::default()
                }),
                0,
            ),
            Experiment::Reacher => (
                self.reacher.iterations,
                EnvSpec::Reacher(self.reacher.env.clone()),
                self.reacher.eval_episodes,
            ),
        };
        TrainConfig {
            estimator: method,
            group_size: t.group_size,
            clip_eps: t.clip_eps,
            kl_beta: t.kl_beta,
            iterations,
            inner_steps: t.inner_steps,
            ref_interval: t.ref_interval,
            optimizer: self.optimizer,
            hidden: t.hidden.clone(),
            activation: t.activation,
            env,
            seed,
            scale_by_sqrt_k: t.sqrt_k_scale,
            eval_episodes,
        }
    }

    /// Short tag identifying non-default study settings.
    pub fn variant(&self, experiment: Experiment) -> String {
        let mut tags = Vec::new();
        if experiment == Experiment::Reacher && self.reacher.env.r1_noise_std > 0.0 {
            tags.push(format!("r1_noise_std={}", self.reacher.env.r1_noise_std));
        }
        if self.train.sqrt_k_scale {
            tags.push("sqrt_k".to_string());
        }
        if tags.is_empty() {
            "default".into()
        } else {
            tags.join("+")
        }
    }
}

// ---------------------------------------------------------------------------
// Worked example

#[derive(Debug, Clone)]
pub struct DemoReport {
    pub text: String,
    pub passed: bool,
}

fn fmt_vec(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:+.4}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Prints the three-output, two-objective example under every estimator and
/// checks the MO-GRPO per-column terms against the reference digits.
pub fn demo_advantage() -> DemoReport {
    let r = worked_example();
    let stats = group_stats(&r);
    let mut t = String::new();
    let _ = writeln!(t, "rewards (rows = outputs, columns = R1, R2)");
    for (g, row) in r.rows().enumerate() {
        let _ = writeln!(t, "  o{}: {}", g + 1, fmt_vec(row));
    }
    let _ = writeln!(
        t,
        "per-objective mean {}  std {}",
        fmt_vec(&stats.means),
        fmt_vec(&stats.stds)
    );
    let _ = writeln!(
        t,
        "row sums {}  mean {:.4}  std {:.4}",
        fmt_vec(&r.row_sums()),
        stats.total_mean,
        stats.total_std
    );
    let _ = writeln!(t);

    let grpo = Estimator::Grpo.advantages(&r, false);
    let _ = writeln!(
        t,
        "GRPO     {}  argmax o{}",
        fmt_vec(&grpo.values),
        grpo.argmax() + 1
    );
    let _ = writeln!(
        t,
        "         reference {} does not follow from the row sums above",
        fmt_vec(&REFERENCE_GRPO_ADVANTAGES)
    );
    let dr = Estimator::DrGrpo.advantages(&r, false);
    let _ = writeln!(
        t,
        "Dr. GRPO {}  argmax o{}",
        fmt_vec(&dr.values),
        dr.argmax() + 1
    );

    let mut passed = true;
    for (i, reference) in REFERENCE_MOGRPO_TERMS.iter().enumerate() {
        let col = standardized_column(&r, i);
        let ok = col
            .iter()
            .zip(reference)
            .all(|(a, b)| (a - b).abs() <= DEMO_TOL);
        passed &= ok;
        let _ = writeln!(
            t,
            "MO-GRPO  R{} term {}  reference {}  {}",
            i + 1,
            fmt_vec(&col),
            fmt_vec(reference),
            if ok { "match" } else { "MISMATCH" }
        );
    }
    let mo = Estimator::MoGrpo.advantages(&r, false);
    let _ = writeln!(
        t,
        "MO-GRPO  {}  argmax o{}",
        fmt_vec(&mo.values),
        mo.argmax() + 1
    );
    let _ = writeln!(t, "{}", if passed { "PASS" } else { "FAIL" });
    DemoReport { text: t, passed }
}

// ---------------------------------------------------------------------------
// Theory verification

#[derive(Debug, Clone)]
pub struct VerifyOutcome {
    pub label: String,
    pub reports: Vec<CorrReport>,
    pub reversal: ReversalExample,
    pub fuzz: AffineFuzzReport,
    /// Every individual check with its result; the outcome passes iff all do.
    pub checks: Vec<(String, bool)>,
}

impl VerifyOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|(_, ok)| *ok)
    }

    pub fn render(&self) -> String {
        let mut t = String::new();
        let _ = writeln!(
            t,
            "correlation check: {} ({} samples per estimator)",
            self.label, self.reports[0].samples
        );
        for r in &self.reports {
            for (i, gap) in r.abs_gaps().iter().enumerate() {
                let _ = writeln!(
                    t,
                    "  {:<8} R{}  predicted {:+.4}  empirical {:+.4}  gap {:.4}",
                    r.estimator.display_name(),
                    i + 1,
                    r.predicted[i],
                    r.empirical[i],
                    gap
                );
            }
        }
        if self.reports[0].samples < MIN_VERIFY_SAMPLES {
            let _ = writeln!(
                t,
                "  note: the {CORR_TOL} tolerance assumes at least {MIN_VERIFY_SAMPLES} samples"
            );
        }
        let rv = &self.reversal;
        let _ =
            writeln!(
            t,
            "reversal: scale {:?} (threshold {:.4}); GRPO argmax {} -> {}; MO-GRPO argmax {} -> {}",
            rv.scale, rv.threshold, rv.grpo_before, rv.grpo_after, rv.mogrpo_before, rv.mogrpo_after
        );
        let f = &self.fuzz;
        let _ = writeln!(
            t,
            "affine fuzz: {} trials, max |dA| {:.2e} (exact form {:.2e}), argmax preserved {}/{}",
            f.trials, f.max_abs_diff, f.max_abs_diff_unguarded, f.argmax_matches, f.trials
        );
        for (name, ok) in &self.checks {
            let _ = writeln!(t, "{} {name}", if *ok { "PASS" } else { "FAIL" });
        }
        t
    }
}

/// Correlation, reversal and affine-invariance checks for one reward model.
pub fn run_verify(
    spec: &CovSpec,
    label: &str,
    settings: &VerifySection,
    seed: u64,
) -> Result<VerifyOutcome> {
    let n_groups = settings.samples.div_ceil(settings.group_size.max(1)).max(1);
    let reports = Estimator::ALL
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            empirical_corr(
                spec,
                e,
                settings.group_size,
                n_groups,
                crate::rng::derive_seed(seed, i as u64),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let reversal = reversal_example();
    let fuzz = affine_invariance_fuzz(
        settings.fuzz_trials,
        settings.fuzz_group_size,
        settings.fuzz_objectives,
        crate::rng::derive_seed(seed, 99),
    )?;
    let mut checks: Vec<(String, bool)> = reports
        .iter()
        .map(|r| {
            (
                format!(
                    "{} correlations within {CORR_TOL}",
                    r.estimator.display_name()
                ),
                r.max_gap() <= CORR_TOL,
            )
        })
        .collect();
    checks.push(("reversal flips GRPO".into(), reversal.grpo_flipped()));
    checks.push((
        "reversal leaves MO-GRPO unchanged".into(),
        reversal.mogrpo_stable(),
    ));
    checks.push((
        format!("affine fuzz within {AFFINE_TOL:e}"),
        fuzz.max_abs_diff <= AFFINE_TOL,
    ));
    checks.push((
        "affine fuzz argmax preserved".into(),
        fuzz.argmax_matches == fuzz.trials,
    ));
    Ok(VerifyOutcome {
        label: label.to_string(),
        reports,
        reversal,
        fuzz,
        checks,
    })
}

/// Loads the spec named by the config (file wins over preset).
pub fn verify_spec(settings: &VerifySection) -> Result<(CovSpec, String)> {
    match &settings.spec_file {
        Some(path) => Ok((CovSpec::from_toml_file(path)?, path.display().to_string())),
        None => Ok((CovSpec::preset(&settings.preset)?, settings.preset.clone())),
    }
}

/// Runs verification and writes `corr_<label>.csv` into `out_dir`.
pub fn cmd_verify(cfg: &RunConfig, out_dir: &Path) -> Result<VerifyOutcome> {
    let (spec, label) = verify_spec(&cfg.verify)?;
    let outcome = run_verify(&spec, &label, &cfg.verify, cfg.run.seed)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::file(out_dir, e))?;
    let stem = Path::new(&label)
        .file_stem()
        .map_or("spec".into(), |s| s.to_string_lossy().into_owned());
    let path = out_dir.join(format!("corr_{stem}.csv"));
    let file = fs::File::create(&path).map_err(|e| Error::file(&path, e))?;
    write_corr_csv(&outcome.reports, file)?;
    Ok(outcome)
}

// ---------------------------------------------------------------------------
// Training batches

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Bandit,
    Reacher,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Bandit => "bandit",
            Experiment::Reacher => "reacher",
        }
    }
}

/// Final score of one (method, seed) run.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalRow {
    pub env: String,
    pub variant: String,
    pub method: Estimator,
    pub seed: u64,
    pub total: f64,
    pub per_objective: Vec<f64>,
    /// Score of the uniform-random policy for the same seed.
    pub baseline: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub rows: Vec<FinalRow>,
    pub summary: SummaryTable,
    /// Constant-velocity self-check (reacher only).
    pub sweep: Option<SweepResult>,
    pub out_dir: PathBuf,
}

fn run_one(cfg: TrainConfig, out_dir: &Path) -> Result<MetricsLog> {
    let stem = format!("{}_seed{}", cfg.estimator.id(), cfg.seed);
    let mut trainer = Trainer::new(cfg)?;
    if let Err(e) = trainer.advance() {
        let path = out_dir.join(format!("last_good_{stem}.txt"));
        save_checkpoint(trainer.policy(), &path)?;
        return Err(e);
    }
    let log = trainer.finish()?;
    let path = out_dir.join(format!("metrics_{stem}.csv"));
    let file = fs::File::create(&path).map_err(|e| Error::file(&path, e))?;
    write_metrics_csv(&log, std::io::BufWriter::new(file))?;
    save_checkpoint(
        &log.final_policy,
        &out_dir.join(format!("policy_{stem}.txt")),
    )?;
    Ok(log)
}

/// Trains every configured method on every seed and writes per-run metrics,
/// policies, `finals.csv`, `summary.csv` and a `meta.toml` sidecar.
pub fn run_batch(cfg: &RunConfig, experiment: Experiment, out_dir: &Path) -> Result<BatchResult> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::file(out_dir, e))?;
    let sweep = match experiment {
        Experiment::Bandit => None,
        Experiment::Reacher => Some(constant_velocity_sweep(
            &cfg.reacher.env,
            cfg.reacher.sweep_grid,
        )),
    };
    let jobs: Vec<TrainConfig> = cfg
        .run
        .methods
        .iter()
        .flat_map(|&m| cfg.seeds().into_iter().map(move |s| (m, s)))
        .map(|(m, s)| cfg.train_config(experiment, m, s))
        .collect();
    let logs: Vec<MetricsLog> = if cfg.run.parallel {
        jobs.into_par_iter()
            .map(|j| run_one(j, out_dir))
            .collect::<Result<_>>()?
    } else {
        jobs.into_iter()
            .map(|j| run_one(j, out_dir))
            .collect::<Result<_>>()?
    };
    let variant = cfg.variant(experiment);
    let mut rows: Vec<FinalRow> = logs
        .iter()
        .map(|l| FinalRow {
            env: experiment.name().into(),
            variant: variant.clone(),
            method: l.method,
            seed: l.seed,
            total: l.final_eval.total,
            per_objective: l.final_eval.per_objective.clone(),
            baseline: l.baseline.per_objective.clone(),
        })
        .collect();
    rows.sort_by_key(|r| (r.method, r.seed));
    write_finals(&rows, &out_dir.join("finals.csv"))?;
    let mut tables = summarize(&rows)?;
    let summary = tables.pop().expect("one env/variant per batch");
    write_summary_csv(std::slice::from_ref(&summary), &out_dir.join("summary.csv"))?;
    write_meta(cfg, experiment, out_dir)?;
    Ok(BatchResult {
        rows,
        summary,
        sweep,
        out_dir: out_dir.to_path_buf(),
    })
}

#[derive(Serialize)]
struct Meta<'a> {
    command: String,
    created_unix_seconds: u64,
    config: &'a RunConfig,
}

fn write_meta(cfg: &RunConfig, experiment: Experiment, out_dir: &Path) -> Result<()> {
    let created = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let meta = Meta {
        command: format!("run-{}", experiment.name()),
        created_unix_seconds: created,
        config: cfg,
    };
    let text = toml::to_string(&meta).map_err(|e| Error::Config(e.to_string()))?;
    let path = out_dir.join("meta.toml");
    fs::write(&path, text).map_err(|e| Error::file(&path, e))
}

fn objective_count(rows: &[FinalRow]) -> usize {
    rows.first().map_or(0, |r| r.per_objective.len())
}

/// Writes final scores with columns
/// `schema_version,env,variant,method,seed,total,r1..rK,baseline_r1..baseline_rK`.
pub fn write_finals(rows: &[FinalRow], path: &Path) -> Result<()> {
    let k = objective_count(rows);
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::file(path, e))?;
    let mut header: Vec<String> = [
        "schema_version",
        "env",
        "variant",
        "method",
        "seed",
        "total",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=k).map(|i| format!("r{i}")));
    header.extend((1..=k).map(|i| format!("baseline_r{i}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            FINALS_SCHEMA_VERSION.to_string(),
            r.env.clone(),
            r.variant.clone(),
            r.method.id().to_string(),
            r.seed.to_string(),
            format!("{:.6}", r.total),
        ];
        rec.extend(
            r.per_objective
                .iter()
                .chain(&r.baseline)
                .map(|v| format!("{v:.6}")),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `finals.csv`, rejecting unknown schema versions.
pub fn read_finals(path: &Path) -> Result<Vec<FinalRow>> {
    let named = |detail: String| Error::file(path, detail);
    let mut rd = csv::Reader::from_path(path).map_err(|e| Error::file(path, e))?;
    let header = rd.headers().map_err(|e| Error::file(path, e))?.clone();
    let k = header
        .iter()
        .filter(|h| h.starts_with('r') && h[1..].parse::<usize>().is_ok())
        .count();
    if header.len() != 6 + 2 * k || header.get(0) != Some("schema_version") {
        return Err(named(format!(
            "unexpected header `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| Error::file(path, e))?;
        let at = |what: &str| named(format!("row {}: bad {what}", line + 1));
        let version: u32 = rec[0].parse().map_err(|_| at("schema_version"))?;
        if version != FINALS_SCHEMA_VERSION {
            return Err(named(format!("unsupported schema version {version}")));
        }
        let num = |i: usize| -> Result<f64> { rec[i].parse().map_err(|_| at(&header[i])) };
        rows.push(FinalRow {
            env: rec[1].to_string(),
            variant: rec[2].to_string(),
            method: rec[3].parse().map_err(|_| at("method"))?,
            seed: rec[4].parse().map_err(|_| at("seed"))?,
            total: num(5)?,
            per_objective: (6..6 + k).map(num).collect::<Result<_>>()?,
            baseline: (6 + k..6 + 2 * k).map(num).collect::<Result<_>>()?,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Summaries

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

pub fn mean_std(xs: &[f64]) -> MeanStd {
    let n = xs.len().max(1) as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    MeanStd {
        mean,
        std: var.sqrt(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Estimator,
    pub seeds: usize,
    pub total: MeanStd,
    pub per_objective: Vec<MeanStd>,
    pub baseline_total: MeanStd,
}

/// Per-method mean ± std across seeds for one (env, variant).
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub env: String,
    pub variant: String,
    pub rows: Vec<SummaryRow>,
}

impl SummaryTable {
    pub fn row(&self, method: Estimator) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn render(&self) -> String {
        let k = self.rows.first().map_or(0, |r| r.per_objective.len());
        let mut t = String::new();
        let _ = writeln!(t, "{} ({})", self.env, self.variant);
        let mut header = format!("{:<10} {:>6}  {:<17}", "method", "seeds", "total");
        for i in 1..=k {
            let _ = write!(header, "  {:<17}", format!("r{i}"));
        }
        let _ = writeln!(t, "{}", header.trim_end());
        let cell = |m: &MeanStd| format!("{:>7.4} ± {:<7.4}", m.mean, m.std);
        for r in &self.rows {
            let mut line = format!(
                "{:<10} {:>6}  {}",
                r.method.display_name(),
                r.seeds,
                cell(&r.total)
            );
            for m in &r.per_objective {
                let _ = write!(line, "  {}", cell(m));
            }
            let _ = writeln!(t, "{}", line.trim_end());
        }
        if let Some(r) = self.rows.first() {
            let _ = writeln!(
                t,
                "{:<10} {:>6}  {}",
                "random",
                r.seeds,
                cell(&r.baseline_total).trim_end()
            );
        }
        t
    }
}

/// Groups rows by (env, variant) and method; methods are ordered GRPO, Dr. GRPO, MO-GRPO.
pub fn summarize(rows: &[FinalRow]) -> Result<Vec<SummaryTable>> {
    let mut groups: BTreeMap<(String, String), BTreeMap<Estimator, Vec<&FinalRow>>> =
        BTreeMap::new();
    for r in rows {
        groups
            .entry((r.env.clone(), r.variant.clone()))
            .or_default()
            .entry(r.method)
            .or_default()
            .push(r);
    }
    let mut tables = Vec::new();
    for ((env, variant), methods) in groups {
        let mut out = Vec::new();
        for (method, runs) in methods {
            let k = runs[0].per_objective.len();
            if runs.iter().any(|r| r.per_objective.len() != k) {
                return Err(Error::Config(format!(
                    "{env}/{variant}: inconsistent objective counts"
                )));
            }
            let totals: Vec<f64> = runs.iter().map(|r| r.total).collect();
            let per_objective = (0..k)
                .map(|i| mean_std(&runs.iter().map(|r| r.per_objective[i]).collect::<Vec<_>>()))
                .collect();
            let base: Vec<f64> = runs.iter().map(|r| r.baseline.iter().sum()).collect();
            out.push(SummaryRow {
                method,
                seeds: runs.len(),
                total: mean_std(&totals),
                per_objective,
                baseline_total: mean_std(&base),
            });
        }
        tables.push(SummaryTable {
            env,
            variant,
            rows: out,
        });
    }
    Ok(tables)
}

/// Long-format summary: `env,variant,method,seeds,metric,mean,std`.
pub fn write_summary_csv(tables: &[SummaryTable], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::file(path, e))?;
    w.write_record(["env", "variant", "method", "seeds", "metric", "mean", "std"])?;
    for t in tables {
        for r in &t.rows {
            let metrics = std::iter::once(("total".to_string(), r.total))
                .chain(
                    r.per_objective
                        .iter()
                        .enumerate()
                        .map(|(i, m)| (format!("r{}", i + 1), *m)),
                )
                .chain(std::iter::once((
                    "baseline_total".to_string(),
                    r.baseline_total,
                )));
            for (name, m) in metrics {
                w.write_record([
                    t.env.clone(),
                    t.variant.clone(),
                    r.method.id().to_string(),
                    r.seeds.to_string(),
                    name,
                    format!("{:.6}", m.mean),
                    format!("{:.6}", m.std),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn find_finals(dir: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::file(dir, e))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::file(dir, e))?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_finals(&p, found)?;
        } else if p.file_name().is_some_and(|n| n == "finals.csv") {
            found.push(p);
        }
    }
    Ok(())
}

/// Aggregates every `finals.csv` under `dir` and writes `dir/summary.csv`.
pub fn cmd_report(dir: &Path) -> Result<Vec<SummaryTable>> {
    let mut files = Vec::new();
    find_finals(dir, &mut files)?;
    if files.is_empty() {
        return Err(Error::file(dir, "no finals.csv found"));
    }
    let mut rows = Vec::new();
    for f in &files {
        rows.extend(read_finals(f)?);
    }
    let tables = summarize(&rows)?;
    write_summary_csv(&tables, &dir.join("summary.csv"))?;
    Ok(tables)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: Estimator, seed: u64, total: f64) -> FinalRow {
        FinalRow {
            env: "bandit".into(),
            variant: "default".into(),
            method,
            seed,
            total,
            per_objective: vec![total / 2.0, total / 2.0],
            baseline: vec![0.1, 0.2],
        }
    }

    #[test]
    fn population_std() {
        let m = mean_std(&[1.0, 3.0]);
        assert_eq!((m.mean, m.std), (2.0, 1.0));
        assert_eq!(mean_std(&[4.0]).std, 0.0);
    }

    #[test]
    fn summary_orders_methods() {
        let rows = vec![
            row(Estimator::MoGrpo, 0, 1.0),
            row(Estimator::Grpo, 0, 2.0),
            row(Estimator::DrGrpo, 0, 3.0),
        ];
        let t = &summarize(&rows).unwrap()[0];
        let order: Vec<_> = t.rows.iter().map(|r| r.method).collect();
        assert_eq!(order, Estimator::ALL.to_vec());
        assert!(t.render().lines().nth(2).unwrap().starts_with("GRPO"));
    }

    #[test]
    fn finals_round_trip_and_version_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("finals.csv");
        let rows = vec![row(Estimator::Grpo, 0, 1.0), row(Estimator::Grpo, 1, 3.0)];
        write_finals(&rows, &path).unwrap();
        assert_eq!(read_finals(&path).unwrap(), rows);

        let text = fs::read_to_string(&path).unwrap().replace("\n1,", "\n2,");
        fs::write(&path, text).unwrap();
        let err = read_finals(&path).unwrap_err().to_string();
        assert!(
            err.contains("finals.csv") && err.contains("schema version 2"),
            "{err}"
        );
    }

    #[test]
    fn report_aggregates_nested_dirs() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("a");
        fs::create_dir(&sub).unwrap();
        write_finals(
            &[row(Estimator::Grpo, 0, 1.0), row(Estimator::Grpo, 1, 3.0)],
            &sub.join("finals.csv"),
        )
        .unwrap();
        let tables = cmd_report(dir.path()).unwrap();
        let r = tables[0].row(Estimator::Grpo).unwrap();
        assert_eq!((r.total.mean, r.total.std, r.seeds), (2.0, 1.0, 2));
        assert!(dir.path().join("summary.csv").exists());
        assert!(cmd_report(&sub.join("missing")).is_err());
    }

    #[test]
    fn config_parsing() {
        let cfg = RunConfig::parse(
            "[run]\nseeds = 2\nmethods = [\"mogrpo\"]\n[reacher.env]\nr1_noise_std = 2.0\n",
        )
        .unwrap();
        assert_eq!(cfg.seeds(), vec![0, 1]);
        assert_eq!(cfg.variant(Experiment::Reacher), "r1_noise_std=2");
        assert_eq!(cfg.variant(Experiment::Bandit), "default");
        assert!(RunConfig::parse("[run]\nseeds = 0\n").is_err());
        assert!(RunConfig::parse("[train]\nbogus = 1\n").is_err());
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn checked_in_config_matches_defaults() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
        assert_eq!(RunConfig::load(&path).unwrap(), RunConfig::default());
    }

    #[test]
    fn demo_passes() {
        let d = demo_advantage();
        assert!(d.passed, "{}", d.text);
        assert!(d.text.contains("-1.2247"));
    }

    #[test]
    fn small_bandit_batch_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::default();
        cfg.run.seeds = 2;
        cfg.bandit.iterations = 5;
        cfg.bandit.arms = 4;
        let res = run_batch(&cfg, Experiment::Bandit, dir.path()).unwrap();
        assert_eq!(res.rows.len(), 6);
        assert_eq!(res.summary.rows.len(), 3);
        for f in [
            "finals.csv",
            "summary.csv",
            "meta.toml",
            "metrics_mogrpo_seed1.csv",
            "policy_grpo_seed0.txt",
        ] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let first = fs::read(dir.path().join("finals.csv")).unwrap();
        run_batch(&cfg, Experiment::Bandit, dir.path()).unwrap();
        assert_eq!(fs::read(dir.path().join("finals.csv")).unwrap(), first);
    }
}
