//! Config-driven sweeps that join simulated costs with the lower bounds and
//! write one CSV per analysis.

use std::fs;
use std::path::{Path, PathBuf};

use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::bounds;
use crate::cdag::{build_cdag, LemmaReport};
use crate::digit::DigitString;
use crate::error::{Error, Result};
use crate::memsim::{cache_aware_schedule, simulate_io, MachineConfig, Policy};
use crate::parsim::{self, balanced_input_layout, Strategy};
use crate::plan::{self, census, InstructionTree, SizeModel};
use crate::toom;
use crate::trace::NodeKind;

fn default_base() -> u64 {
    crate::digit::DEFAULT_BASE
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_base")]
    pub base: u64,
    #[serde(default)]
    pub sizes: Vec<usize>,
    pub plans: Vec<PlanSource>,
    #[serde(default)]
    pub size_model: ModelChoice,
    #[serde(default)]
    pub values: ValueSource,
    #[serde(default)]
    pub machine: Option<MachineGrid>,
    #[serde(default)]
    pub parallel: Option<ParallelGrid>,
    #[serde(default)]
    pub lemmas: LemmaSettings,
    #[serde(default)]
    pub analyses: Analyses,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlanSource {
    Standard,
    Uniform {
        k: usize,
        n0: usize,
    },
    Random {
        seed: u64,
        #[serde(default = "one")]
        count: usize,
        k_choices: Vec<usize>,
        p_standard: f64,
    },
    Inline {
        plan: InstructionTree,
    },
}

fn one() -> usize {
    1
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    #[default]
    Padded,
    ZeroPad,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ValueSource {
    /// Fresh operands of exactly `n` digits per run, drawn from the config seed.
    #[default]
    Random,
    /// Decimal integers.
    Explicit { a: String, b: String },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineGrid {
    #[serde(rename = "M")]
    pub m: Vec<usize>,
    #[serde(rename = "B")]
    pub b: Vec<usize>,
    pub policies: Vec<Policy>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParallelGrid {
    #[serde(rename = "P")]
    pub p: Vec<usize>,
    #[serde(rename = "B_m")]
    pub b_m: Vec<usize>,
    pub strategies: Vec<Strategy>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaSettings {
    /// Only sizes up to this many digits get a CDAG.
    #[serde(default = "default_lemma_n")]
    pub max_n: usize,
    #[serde(default = "default_budget")]
    pub budget: usize,
    /// MSP threshold; by default the smallest standard leaf size.
    #[serde(default)]
    pub threshold: Option<usize>,
}

fn default_lemma_n() -> usize {
    32
}

fn default_budget() -> usize {
    200
}

impl Default for LemmaSettings {
    fn default() -> Self {
        LemmaSettings { max_n: default_lemma_n(), budget: default_budget(), threshold: None }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct Analyses {
    #[serde(default = "default_true")]
    pub simulate: bool,
    #[serde(default = "default_true")]
    pub bounds: bool,
    #[serde(default = "default_true")]
    pub census: bool,
    #[serde(default)]
    pub lemmas: bool,
    #[serde(default)]
    pub parallel: bool,
}

impl Default for Analyses {
    fn default() -> Self {
        Analyses { simulate: true, bounds: true, census: true, lemmas: false, parallel: false }
    }
}

impl Analyses {
    pub const NAMES: [&'static str; 5] = ["simulate", "bounds", "census", "lemmas", "parallel"];

    /// Enables exactly the comma-separated analyses in `list`.
    pub fn from_list(list: &str) -> Result<Self> {
        let mut a = Analyses { simulate: false, bounds: false, census: false, lemmas: false, parallel: false };
        for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match name {
                "simulate" => a.simulate = true,
                "bounds" => a.bounds = true,
                "census" => a.census = true,
                "lemmas" => a.lemmas = true,
                "parallel" => a.parallel = true,
                other => {
                    return Err(Error::Config(format!(
                        "analyses: unknown analysis {other:?}, expected one of {}",
                        Self::NAMES.join(", ")
                    )))
                }
            }
        }
        Ok(a)
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        crate::digit::check_base(self.base).map_err(|e| Error::Config(format!("base: {e}")))?;
        if self.plans.is_empty() {
            return Err(Error::Config("plans: at least one plan source is required".into()));
        }
        if self.sizes.is_empty() && !matches!(self.values, ValueSource::Explicit { .. }) {
            return Err(Error::Config("sizes: at least one size is required for random values".into()));
        }
        if let Some(i) = self.sizes.iter().position(|&n| n == 0) {
            return Err(Error::Config(format!("sizes[{i}]: size must be positive")));
        }
        for (i, p) in self.plans.iter().enumerate() {
            match p {
                PlanSource::Uniform { k, n0 } => {
                    if !(2..=toom::MAX_K).contains(k) {
                        return Err(Error::Config(format!("plans[{i}].k: {k} outside 2..={}", toom::MAX_K)));
                    }
                    if *n0 == 0 {
                        return Err(Error::Config(format!("plans[{i}].n0: must be positive")));
                    }
                }
                PlanSource::Random { k_choices, p_standard, count, .. } => {
                    if k_choices.is_empty() || k_choices.iter().any(|k| !(2..=toom::MAX_K).contains(k)) {
                        return Err(Error::Config(format!("plans[{i}].k_choices: values must lie in 2..={}", toom::MAX_K)));
                    }
                    if !(0.0..=1.0).contains(p_standard) {
                        return Err(Error::Config(format!("plans[{i}].p_standard: {p_standard} outside [0, 1]")));
                    }
                    if *count == 0 {
                        return Err(Error::Config(format!("plans[{i}].count: must be positive")));
                    }
                }
                PlanSource::Standard | PlanSource::Inline { .. } => {}
            }
        }
        if let ValueSource::Explicit { a, b } = &self.values {
            for (name, v) in [("values.a", a), ("values.b", b)] {
                v.trim().parse::<BigInt>().map_err(|e| Error::Config(format!("{name}: {e}")))?;
            }
        }
        if let Some(m) = &self.machine {
            if m.m.is_empty() || m.b.is_empty() || m.policies.is_empty() {
                return Err(Error::Config("machine: M, B and policies must be non-empty".into()));
            }
            for &mm in &m.m {
                for &bb in &m.b {
                    MachineConfig::new(mm, bb, Policy::Lru)?;
                }
            }
        }
        if let Some(p) = &self.parallel {
            if p.p.is_empty() || p.b_m.is_empty() || p.strategies.is_empty() {
                return Err(Error::Config("parallel: P, B_m and strategies must be non-empty".into()));
            }
            if let Some(&bad) = p.p.iter().find(|&&x| x == 0 || x > parsim::MAX_P) {
                return Err(Error::Config(format!("parallel.P = {bad} must lie in 1..={}", parsim::MAX_P)));
            }
            if p.b_m.contains(&0) {
                return Err(Error::Config("parallel.B_m must be positive".into()));
            }
            if let Some(m) = &self.machine {
                let min_m = m.m.iter().copied().min().unwrap_or(0);
                if let Some(&bad) = p.b_m.iter().find(|&&x| x > min_m) {
                    return Err(Error::Config(format!("parallel.B_m = {bad} exceeds machine.M = {min_m}")));
                }
            }
        }
        if self.analyses.simulate && self.machine.is_none() {
            return Err(Error::Config("machine: required by the simulate analysis".into()));
        }
        if self.analyses.parallel && self.parallel.is_none() {
            return Err(Error::Config("parallel: required by the parallel analysis".into()));
        }
        Ok(())
    }

    fn model(&self) -> SizeModel {
        match self.size_model {
            ModelChoice::Padded => SizeModel::Padded { base: self.base },
            ModelChoice::ZeroPad => SizeModel::ZeroPad,
        }
    }
}

/// One concrete plan for one size.
#[derive(Clone, Debug)]
pub struct PlanInstance {
    pub label: String,
    pub plan: InstructionTree,
}

fn instantiate(src: &PlanSource, i: usize, n: usize, model: SizeModel) -> Result<Vec<PlanInstance>> {
    let at = |e: Error| Error::Config(format!("plans[{i}] at n={n}: {e}"));
    Ok(match src {
        PlanSource::Standard => vec![PlanInstance { label: "standard".into(), plan: InstructionTree::standard() }],
        PlanSource::Uniform { k, n0 } => vec![PlanInstance {
            label: format!("toom{k}-n0_{n0}"),
            plan: plan::uniform_plan_clamped(n, *k, *n0, model).map_err(at)?,
        }],
        PlanSource::Random { seed, count, k_choices, p_standard } => (0..*count)
            .map(|j| {
                let s = seed.wrapping_add(j as u64);
                Ok(PlanInstance {
                    label: format!("random-{s}"),
                    plan: plan::random_plan(n, s, k_choices, *p_standard, model).map_err(at)?,
                })
            })
            .collect::<Result<_>>()?,
        PlanSource::Inline { plan } => {
            plan::validate(plan, n, model).map_err(at)?;
            vec![PlanInstance { label: format!("inline-{i}"), plan: plan.clone() }]
        }
    })
}

fn random_operand(rng: &mut ChaCha8Rng, n: usize, base: u64) -> Result<DigitString> {
    let mut d: Vec<u64> = (0..n).map(|_| rng.gen_range(0..base)).collect();
    if let Some(top) = d.last_mut() {
        *top = rng.gen_range(1..base);
    }
    DigitString::new(base, false, d)
}

/// Seed for the operands of one run, independent of how many runs precede it.
fn run_seed(seed: u64, label: &str, n: usize) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for b in label.bytes().chain(n.to_le_bytes()) {
        h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A run that failed a dominance or lemma check.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub analysis: &'static str,
    pub run_id: String,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RatioStats {
    pub analysis: &'static str,
    pub rows: usize,
    pub min: Option<f64>,
    pub median: Option<f64>,
    pub max: Option<f64>,
    pub violations: usize,
}

fn stats(analysis: &'static str, rows: usize, mut ratios: Vec<f64>, violations: usize) -> RatioStats {
    ratios.sort_by(|a, b| a.total_cmp(b));
    let median = if ratios.is_empty() {
        None
    } else if ratios.len() % 2 == 1 {
        Some(ratios[ratios.len() / 2])
    } else {
        Some((ratios[ratios.len() / 2 - 1] + ratios[ratios.len() / 2]) / 2.0)
    };
    RatioStats { analysis, rows, min: ratios.first().copied(), median, max: ratios.last().copied(), violations }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentSummary {
    pub stats: Vec<RatioStats>,
    pub violations: Vec<Violation>,
    pub lemma_instances: usize,
    pub lemma_failures: usize,
    pub files: Vec<PathBuf>,
}

impl ExperimentSummary {
    pub fn ok(&self) -> bool {
        self.violations.is_empty() && self.lemma_failures == 0
    }
}

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

fn opt6(x: Option<f64>) -> String {
    x.map(f6).unwrap_or_default()
}

/// `measured / bound`, absent when the bound is zero.
fn ratio(measured: f64, bound: f64) -> Option<f64> {
    (bound > 0.0).then(|| measured / bound)
}

struct Table {
    name: &'static str,
    w: csv::Writer<Vec<u8>>,
    rows: usize,
}

impl Table {
    fn new(name: &'static str, header: &[&str]) -> Self {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        Table { name, w, rows: 0 }
    }

    fn row(&mut self, fields: &[String]) {
        self.w.write_record(fields).expect("in-memory write");
        self.rows += 1;
    }

    fn save(self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(format!("{}.csv", self.name));
        let bytes = self.w.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
        fs::write(&path, bytes).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

/// Threshold that makes every standard leaf of the trace a type-1 MSP.
fn default_lemma_threshold(trace: &crate::trace::ExecutionTrace) -> usize {
    trace
        .subs
        .iter()
        .filter(|s| s.node == NodeKind::Standard && s.size() > 0)
        .map(|s| s.size())
        .min()
        .unwrap_or(1)
}

/// Runs every enabled analysis and writes `io.csv`, `bounds.csv`,
/// `census.csv`, `lemmas.csv`, `parallel.csv` (those enabled) and
/// `summary.csv` into `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentSummary> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::Config(format!("{}: {e}", out.display())))?;
    let model = cfg.model();
    let base = cfg.base;

    let explicit = match &cfg.values {
        ValueSource::Explicit { a, b } => {
            let parse = |s: &str| -> Result<DigitString> {
                DigitString::from_bigint(&s.trim().parse::<BigInt>().map_err(|e| Error::Config(e.to_string()))?, base)
            };
            Some((parse(a)?, parse(b)?))
        }
        ValueSource::Random => None,
    };
    let sizes: Vec<usize> = match (&explicit, cfg.sizes.is_empty()) {
        (Some((a, b)), true) => vec![a.size().max(b.size()).max(1)],
        _ => cfg.sizes.clone(),
    };
    if let Some((a, b)) = &explicit {
        let need = a.size().max(b.size());
        if let Some(&n) = sizes.iter().find(|&&n| n < need) {
            return Err(Error::Config(format!("sizes: {n} is smaller than the explicit operands ({need} digits)")));
        }
    }

    let mut io = Table::new("io", &[
        "run_id", "plan_hash", "n", "s", "M", "B", "policy", "reads", "writes", "total", "bound_total", "ratio",
    ]);
    let mut bt = Table::new("bounds", &[
        "run_id", "plan_hash", "n", "M", "B", "regime", "terms", "bound", "uniform_k", "uniform_n0", "uniform_bound",
    ]);
    let mut ct = Table::new("census", &[
        "run_id", "plan_hash", "n", "threshold", "nu1", "nu2", "nu", "tcard_formula", "tcard_enumerated", "tcard_flagged",
    ]);
    let mut lt = Table::new("lemmas", &["run_id", "threshold", "lemma", "params", "required", "achieved", "pass"]);
    let mut pt = Table::new("parallel", &[
        "run_id", "strategy", "n", "P", "B_m", "alpha", "beta_measured", "max_words", "max_messages", "bound_regime",
        "bound", "ratio", "status",
    ]);

    let mut summary = ExperimentSummary::default();
    let (mut io_ratios, mut par_ratios) = (Vec::new(), Vec::new());
    let (mut io_viol, mut par_viol) = (0, 0);

    for &n in &sizes {
        for (i, src) in cfg.plans.iter().enumerate() {
            for inst in instantiate(src, i, n, model)? {
                let run_id = format!("{}/n{n}", inst.label);
                let hash = inst.plan.plan_hash();
                let (a, b) = match &explicit {
                    Some(ab) => ab.clone(),
                    None => {
                        let mut rng = ChaCha8Rng::seed_from_u64(run_seed(cfg.seed, &inst.label, n));
                        (random_operand(&mut rng, n, base)?, random_operand(&mut rng, n, base)?)
                    }
                };
                let needs_trace = cfg.analyses.simulate || cfg.analyses.lemmas && n <= cfg.lemmas.max_n;
                let trace = if needs_trace {
                    let (c, t) = toom::trace_multiply_sized(&a, &b, &inst.plan, n)?;
                    if c.to_bigint() != a.to_bigint() * b.to_bigint() {
                        return Err(Error::Internal(format!("{run_id}: wrong product")));
                    }
                    Some(t)
                } else {
                    None
                };
                let uniform = parsim::uniform_shape(&inst.plan, n, model);

                if let Some(mg) = &cfg.machine {
                    for &m in &mg.m {
                        let cen = census(&inst.plan, n, 8 * m, model);
                        if cfg.analyses.census {
                            ct.row(&[
                                run_id.clone(),
                                hash.clone(),
                                n.to_string(),
                                cen.threshold.to_string(),
                                cen.nu1().to_string(),
                                cen.nu2().to_string(),
                                cen.nu().to_string(),
                                cen.tcard_formula.to_string(),
                                cen.tcard_enumerated.to_string(),
                                cen.tcard_flagged.to_string(),
                            ]);
                        }
                        for &bb in &mg.b {
                            let sb = bounds::seq_bound_general(&cen, n, m, bb);
                            if cfg.analyses.bounds {
                                let ub = uniform.map(|(k, n0)| bounds::seq_bound_uniform(n, m, bb, k, n0).bound);
                                bt.row(&[
                                    run_id.clone(),
                                    hash.clone(),
                                    n.to_string(),
                                    m.to_string(),
                                    bb.to_string(),
                                    sb.regime.into(),
                                    sb.terms_string(),
                                    f6(sb.bound),
                                    uniform.map(|u| u.0.to_string()).unwrap_or_default(),
                                    uniform.map(|u| u.1.to_string()).unwrap_or_default(),
                                    opt6(ub),
                                ]);
                            }
                            if !cfg.analyses.simulate {
                                continue;
                            }
                            let t = trace.as_ref().expect("trace recorded for simulate");
                            for &pol in &mg.policies {
                                let mc = MachineConfig::new(m, bb, pol)?;
                                let order = cache_aware_schedule(t, &mc);
                                let r = simulate_io(t, &mc, &order)?;
                                let total = r.total() as f64;
                                let q = ratio(total, sb.bound);
                                if let Some(q) = q {
                                    io_ratios.push(q);
                                }
                                if total < sb.bound {
                                    io_viol += 1;
                                    summary.violations.push(Violation {
                                        analysis: "simulate",
                                        run_id: run_id.clone(),
                                        detail: format!("M={m} B={bb} {}: {total} < {}", pol.name(), sb.bound),
                                    });
                                }
                                io.row(&[
                                    run_id.clone(),
                                    hash.clone(),
                                    n.to_string(),
                                    base.to_string(),
                                    m.to_string(),
                                    bb.to_string(),
                                    pol.name().into(),
                                    r.reads.to_string(),
                                    r.writes.to_string(),
                                    r.total().to_string(),
                                    f6(sb.bound),
                                    opt6(q),
                                ]);
                            }
                        }
                    }
                }

                if cfg.analyses.lemmas && n <= cfg.lemmas.max_n {
                    let t = trace.as_ref().expect("trace recorded for lemmas");
                    let th = cfg.lemmas.threshold.unwrap_or_else(|| default_lemma_threshold(t));
                    let g = build_cdag(t, th)?;
                    let rep: LemmaReport = crate::cdag::verify_lemmas(&g, run_seed(cfg.seed, &run_id, th), cfg.lemmas.budget);
                    summary.lemma_instances += rep.rows.len();
                    for r in &rep.rows {
                        if !r.pass {
                            summary.lemma_failures += 1;
                            summary.violations.push(Violation {
                                analysis: "lemmas",
                                run_id: run_id.clone(),
                                detail: format!("{} {}: {} < {}", r.lemma, r.params, r.achieved, r.required),
                            });
                        }
                        lt.row(&[
                            run_id.clone(),
                            th.to_string(),
                            r.lemma.into(),
                            r.params.clone(),
                            r.required.to_string(),
                            r.achieved.to_string(),
                            r.pass.to_string(),
                        ]);
                    }
                }

                if let (true, Some(pg)) = (cfg.analyses.parallel, &cfg.parallel) {
                    for &p in &pg.p {
                        for &bm in &pg.b_m {
                            for &st in &pg.strategies {
                                let layout = balanced_input_layout(n, p, cfg.seed)?.with_b_m(bm);
                                let mut row = vec![
                                    run_id.clone(),
                                    st.name().into(),
                                    n.to_string(),
                                    p.to_string(),
                                    bm.to_string(),
                                    f6(layout.alpha),
                                ];
                                match parsim::run_parallel(&a, &b, &inst.plan, &layout, st) {
                                    Ok((_, rep)) => {
                                        let bound = parsim::applicable_bound(&inst.plan, n, model, &rep);
                                        let q = ratio(rep.max_words as f64, bound.bound);
                                        if let Some(q) = q {
                                            par_ratios.push(q);
                                        }
                                        let ok = rep.max_words as f64 >= bound.bound;
                                        if !ok {
                                            par_viol += 1;
                                            summary.violations.push(Violation {
                                                analysis: "parallel",
                                                run_id: run_id.clone(),
                                                detail: format!(
                                                    "{} P={p} B_m={bm}: {} < {}",
                                                    st.name(),
                                                    rep.max_words,
                                                    bound.bound
                                                ),
                                            });
                                        }
                                        row.extend([
                                            f6(rep.beta),
                                            rep.max_words.to_string(),
                                            rep.max_messages.to_string(),
                                            bound.regime.into(),
                                            f6(bound.bound),
                                            opt6(q),
                                            if ok { "ok" } else { "violation" }.into(),
                                        ]);
                                    }
                                    Err(Error::Strategy(_)) => {
                                        row.extend(["", "", "", "", "", "", "unplaceable"].map(String::from));
                                    }
                                    Err(e) => return Err(e),
                                }
                                pt.row(&row);
                            }
                        }
                    }
                }
            }
        }
    }

    if cfg.analyses.simulate {
        summary.stats.push(stats("simulate", io.rows, io_ratios, io_viol));
        summary.files.push(io.save(out)?);
    }
    if cfg.analyses.bounds {
        summary.stats.push(stats("bounds", bt.rows, Vec::new(), 0));
        summary.files.push(bt.save(out)?);
    }
    if cfg.analyses.census {
        summary.stats.push(stats("census", ct.rows, Vec::new(), 0));
        summary.files.push(ct.save(out)?);
    }
    if cfg.analyses.lemmas {
        summary.stats.push(stats("lemmas", lt.rows, Vec::new(), summary.lemma_failures));
        summary.files.push(lt.save(out)?);
    }
    if cfg.analyses.parallel {
        summary.stats.push(stats("parallel", pt.rows, par_ratios, par_viol));
        summary.files.push(pt.save(out)?);
    }
    let mut st = Table::new("summary", &["analysis", "rows", "min_ratio", "median_ratio", "max_ratio", "violations"]);
    for s in &summary.stats {
        st.row(&[
            s.analysis.into(),
            s.rows.to_string(),
            opt6(s.min),
            opt6(s.median),
            opt6(s.max),
            s.violations.to_string(),
        ]);
    }
    summary.files.push(st.save(out)?);
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::from_json(text)
    }

    #[test]
    fn uniform_two_machine_points() {
        let c = cfg(r#"{"seed":1,"sizes":[64],"plans":[{"kind":"uniform","k":2,"n0":8}],
            "machine":{"M":[8,16],"B":[1],"policies":["IdealOffline"]},
            "analyses":{"simulate":true,"bounds":true,"census":false}}"#)
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let s = run_experiment(&c, dir.path()).unwrap();
        assert!(s.ok(), "{:?}", s.violations);
        let io = fs::read_to_string(dir.path().join("io.csv")).unwrap();
        let bounds = fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
        assert_eq!(io.lines().count(), 3);
        assert_eq!(bounds.lines().count(), 3);
        assert!(s.stats[0].min.unwrap() >= 1.0);
    }

    #[test]
    fn b_above_m_names_the_field() {
        let e = cfg(r#"{"sizes":[8],"plans":[{"kind":"standard"}],
            "machine":{"M":[8],"B":[16],"policies":["LRU"]}}"#)
        .unwrap_err();
        assert!(e.to_string().contains("machine.B"), "{e}");
    }

    #[test]
    fn parse_errors_carry_position() {
        let e = cfg("{\"sizes\": [8],\n \"plans\": [{\"kind\": \"nope\"}]}").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
    }

    #[test]
    fn lemmas_on_small_schoolbook() {
        let c = cfg(r#"{"sizes":[8],"base":10,"plans":[{"kind":"standard"}],
            "lemmas":{"budget":50},
            "analyses":{"simulate":false,"bounds":false,"census":false,"lemmas":true}}"#)
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let s = run_experiment(&c, dir.path()).unwrap();
        assert!(s.lemma_instances > 0);
        assert_eq!(s.lemma_failures, 0);
    }

    #[test]
    fn explicit_values_and_inline_plan() {
        let c = cfg(r#"{"base":10,"plans":[{"kind":"inline","plan":{"std":"schoolbook"}}],
            "values":{"kind":"explicit","a":"1234","b":"5678"},
            "machine":{"M":[8],"B":[1],"policies":["LRU"]},
            "analyses":{"census":false,"bounds":false}}"#)
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let s = run_experiment(&c, dir.path()).unwrap();
        let io = fs::read_to_string(dir.path().join("io.csv")).unwrap();
        assert!(io.lines().nth(1).unwrap().starts_with("inline-0/n4,"));
        assert!(s.ok());
    }

    #[test]
    fn analyses_list() {
        let a = Analyses::from_list("bounds, parallel").unwrap();
        assert!(a.bounds && a.parallel && !a.simulate);
        assert!(Analyses::from_list("plots").is_err());
    }
}
