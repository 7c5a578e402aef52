use std::fmt::Write as _;
use std::fs;

use anyhow::{bail, Context, Result};
use mlcppm::adversary::{
    covertness_estimate, detect_linear_code, exact_kl_oracle, exact_kl_oracle_with_budget, CovertnessConfig,
};
use mlcppm::channels::degrading_map;
use mlcppm::codec::run_chain;
use mlcppm::levels::{level_capacity_bound, level_mi_table, msd_rate_plan, throughput_summary};
use mlcppm::{
    Dmc, LinearCode, LogBase, PlanConfig, RatePlan, ResolvabilityMode, Session, SessionConfig, TinyCodebook,
    UPolicy,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::channel_spec::parse_channel;
use crate::output::{emit, Document};
use crate::{
    Cli, CodeKind, Command, CovertnessCmd, Degraded, DetectArgs, EstimateArgs, ExactArgs, Format, PlanArgs,
    Resolvability, SessionArgs, SimulateArgs, TablesArgs, Unit,
};

// Independent streams for the pieces of one seeded run.
const STREAM_CHAIN: u64 = 1;
const STREAM_DETECT: u64 = 2;
const STREAM_CODEBOOK: u64 = 3;

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Tables(a) => emit(a.out.as_deref(), &tables(&a)?),
        Command::Plan(a) => {
            let (summary, plan) = plan(&a.plan)?;
            if let Some(p) = &a.out {
                emit(Some(p), &plan.to_json())?;
            }
            emit(None, &summary)
        }
        Command::Simulate(a) => emit(a.out.as_deref(), &simulate(&a)?),
        Command::Detect(a) => emit(a.out.as_deref(), &detect(&a)?),
        Command::Covertness(CovertnessCmd::Exact(a)) => emit(a.out.as_deref(), &covertness_exact(&a)?),
        Command::Covertness(CovertnessCmd::Estimate(a)) => emit(a.out.as_deref(), &covertness_sampled(&a)?),
    }
}

fn base(unit: Unit) -> LogBase {
    match unit {
        Unit::Bits => LogBase::Bits,
        Unit::Nats => LogBase::Nats,
    }
}

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.10}")
    } else {
        v.to_string()
    }
}

pub fn tables(a: &TablesArgs) -> Result<String> {
    let bob = parse_channel(&a.bob)?;
    let willie_spec = a.willie.as_deref().unwrap_or(&a.bob);
    let willie = parse_channel(willie_spec)?;
    if a.levels == 0 {
        bail!("--levels must be at least 1");
    }
    let b = base(a.unit);
    let unit = b.unit();
    let table = level_mi_table(&bob, &willie, a.levels, b)?;
    let bob_stats = bob.stats(LogBase::Nats);
    let bound = |i: usize| bob_stats.finite().map_or(f64::NAN, |s| b.from_nats(level_capacity_bound(s, i)));
    let kl = |d: &Dmc| d.stats(b).finite().map_or(f64::INFINITY, |s| s.kl);

    let mut doc = Document::new("tables", None, unit);
    doc.set("bob", &a.bob)?;
    doc.set("willie", willie_spec)?;
    doc.set("levels", a.levels)?;
    doc.set("kl_bob", fmt(kl(&bob)))?;
    doc.set("kl_willie", fmt(kl(&willie)))?;
    match a.format {
        Format::Csv => {
            let mut out = doc.comment_header();
            writeln!(out, "level,I_Y[{unit}],I_Z[{unit}],diff[{unit}],C_bound[{unit}]")?;
            for t in &table {
                writeln!(out, "{},{},{},{},{}", t.level, fmt(t.i_y), fmt(t.i_z), fmt(t.diff), fmt(bound(t.level)))?;
            }
            Ok(out)
        }
        Format::Jsonl => {
            for t in &table {
                doc.push("level", json!({
                    "level": t.level, "i_y": t.i_y, "i_z": t.i_z, "diff": t.diff, "c_bound": bound(t.level),
                }))?;
            }
            doc.render(Format::Jsonl)
        }
    }
}

fn u_policy(s: &str) -> Result<UPolicy> {
    let (kind, v) = s.split_once(':').with_context(|| format!("u policy {s:?}: expected share:F, floor:R or fixed:U"))?;
    Ok(match kind {
        "share" => UPolicy::CapacityShare(v.parse()?),
        "floor" => UPolicy::RateFloor(v.parse()?),
        "fixed" => UPolicy::Fixed(v.parse()?),
        _ => bail!("unknown u policy {kind:?}"),
    })
}

pub struct Planned {
    pub plan: RatePlan,
    pub bob: Dmc,
    pub willie: Dmc,
}

pub fn build_plan(a: &PlanArgs) -> Result<Planned> {
    let bob = parse_channel(&a.bob)?;
    let willie = parse_channel(&a.willie)?;
    let degraded = match a.degraded {
        Degraded::Yes => true,
        Degraded::No => false,
        Degraded::Auto => degrading_map(&bob, &willie).is_some(),
    };
    let cfg = PlanConfig {
        q: a.levels,
        delta: a.delta,
        blocks: a.blocks,
        epsilon: a.epsilon,
        degraded,
        u_policy: u_policy(&a.u_policy)?,
        ell_override: a.ell,
    };
    let plan = msd_rate_plan(&bob, &willie, &cfg, base(a.unit))?;
    Ok(Planned { plan, bob, willie })
}

fn plan_header(doc: &mut Document, a: &PlanArgs, plan: &RatePlan) -> Result<()> {
    doc.set("bob", &a.bob)?;
    doc.set("willie", &a.willie)?;
    doc.set("q", plan.q)?;
    doc.set("m", plan.m)?;
    doc.set("ell", plan.ell)?;
    doc.set("u", plan.u)?;
    doc.set("blocks", plan.blocks)?;
    doc.set("delta_nats", plan.delta)?;
    doc.set("epsilon", plan.epsilon)?;
    doc.set("degraded", plan.degraded)
}

/// Human-readable summary and the plan itself.
pub fn plan(a: &PlanArgs) -> Result<(String, RatePlan)> {
    let Planned { plan, bob, willie } = build_plan(a)?;
    let unit = plan.base.unit();
    let ell = plan.ell as f64;
    let mut s = String::new();
    writeln!(s, "# command: plan")?;
    writeln!(s, "# bob: {}", a.bob)?;
    writeln!(s, "# willie: {}", a.willie)?;
    writeln!(s, "# unit: {unit}")?;
    writeln!(s, "q: {}  m: {}  ell: {}  blocks: {}  u: {}", plan.q, plan.m, plan.ell, plan.blocks, plan.u)?;
    writeln!(s, "degraded: {}", if plan.degraded { "yes" } else { "no" })?;
    writeln!(s, "level,I_Y[{unit}],I_Z[{unit}],R_U[{unit}],R_V[{unit}],R_K[{unit}]")?;
    for l in &plan.levels {
        writeln!(s, "{},{},{},{},{},{}", l.level, fmt(l.i_y), fmt(l.i_z), fmt(l.r_u), fmt(l.r_v), fmt(l.r_k))?;
    }
    match (bob.stats(LogBase::Nats).finite(), willie.stats(LogBase::Nats).finite()) {
        (Some(bs), Some(ws)) => {
            let t = throughput_summary(&plan, bs, ws)?;
            writeln!(s, "covert throughput: {} {unit} (capacity {})", fmt(t.covert_throughput), fmt(t.covert_capacity))?;
            writeln!(s, "key throughput: {} {unit} (capacity {})", fmt(t.key_throughput), fmt(t.key_capacity))?;
            if t.degenerate {
                writeln!(s, "warning: Willie's chi2 is zero, capacity ratios undefined")?;
            }
        }
        _ => writeln!(s, "capacities: unbounded (an output only the pulse can produce)")?,
    }
    writeln!(s, "chaining feasible: {}", if plan.chaining_feasible() { "yes" } else { "no" })?;
    let key_bits = plan.base.to_nats(ell * plan.sum_key()) / std::f64::consts::LN_2;
    writeln!(s, "keys required: {}", (key_bits - 1e-9).ceil().max(0.0) as u64)?;
    Ok((s, plan))
}

fn session(planned: Planned, a: &SessionArgs) -> Result<Session> {
    let cfg = SessionConfig {
        construction_trials: a.trials,
        seed: a.seed,
        resolvability: match a.resolvability {
            Resolvability::Genie => ResolvabilityMode::FullUniform,
            Resolvability::Extractor => ResolvabilityMode::Extractor { margin: a.margin },
        },
        ..Default::default()
    };
    Ok(Session::new(planned.plan, planned.bob, planned.willie, &cfg)?)
}

fn session_header(doc: &mut Document, s: &Session, a: &SessionArgs) -> Result<()> {
    doc.set("session_ell", s.ell())?;
    doc.set("effective_delta_nats", s.effective_delta())?;
    doc.set("construction_trials", a.trials)?;
    doc.set("resolvability", format!("{:?}", a.resolvability).to_lowercase())?;
    doc.set("genie_high_levels", s.genie_high_levels())
}

pub fn simulate(a: &SimulateArgs) -> Result<String> {
    let planned = build_plan(&a.plan)?;
    let blocks = planned.plan.blocks;
    let mut doc = Document::new("simulate", Some(a.session.seed), "bits");
    plan_header(&mut doc, &a.plan, &planned.plan)?;
    let s = session(planned, &a.session)?;
    session_header(&mut doc, &s, &a.session)?;
    let mut report = run_chain(&s, blocks, false, &mut seeded(a.session.seed, STREAM_CHAIN))?;
    for r in &report.records {
        doc.push("block", r)?;
    }
    report.records.clear();
    let mut summary = serde_json::to_value(&report)?;
    summary.as_object_mut().map(|o| o.remove("records"));
    doc.push("summary", summary)?;
    doc.render(a.format)
}

pub fn detect(a: &DetectArgs) -> Result<String> {
    let willie = parse_channel(&a.willie)?;
    let mut rng = seeded(a.seed, STREAM_DETECT);
    let (code, source) = match &a.generator {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading generator file {}", p.display()))?;
            let code = LinearCode::parse(&text).with_context(|| format!("invalid generator file {}", p.display()))?;
            (code, p.display().to_string())
        }
        None => match a.code {
            CodeKind::Identity => (LinearCode::identity_prefix(a.n, a.k)?, "identity".to_string()),
            CodeKind::Random => (LinearCode::random(a.n, a.k, &mut rng)?, "random".to_string()),
        },
    };
    let report = detect_linear_code(&code, &willie, a.trials, &mut rng)?;
    let mut doc = Document::new("detect", Some(a.seed), "nats");
    doc.set("willie", &a.willie)?;
    doc.set("code", source)?;
    doc.set("n", code.n())?;
    doc.set("k", code.k())?;
    doc.set("trials", a.trials)?;
    doc.push("detection", &report)?;
    doc.render(a.format)
}

fn codebook(spec: &str, q: usize, ell: usize, seed: u64) -> Result<TinyCodebook> {
    let n = q * ell;
    Ok(match spec {
        "uniform" => TinyCodebook::uniform(q, ell)?,
        "zero" => TinyCodebook::new(q, ell, vec![vec![0; n]])?,
        other => {
            let Some(count) = other.strip_prefix("random:") else {
                bail!("codebook {other:?}: expected uniform, zero or random:N");
            };
            let count: usize = count.parse().with_context(|| format!("codebook size {count:?}"))?;
            let mut rng = seeded(seed, STREAM_CODEBOOK);
            let entries = (0..count).map(|_| (0..n).map(|_| rng.random_range(0..2u8)).collect()).collect();
            TinyCodebook::new(q, ell, entries)?
        }
    })
}

pub fn covertness_exact(a: &ExactArgs) -> Result<String> {
    let willie = parse_channel(&a.willie)?;
    let cb = codebook(&a.codebook, a.levels, a.ell, a.seed)?;
    let oracle = match a.budget {
        Some(b) => exact_kl_oracle_with_budget(&cb, &willie, b),
        None => exact_kl_oracle(&cb, &willie),
    }
    .context("exact enumeration refused; shrink --levels/--ell or raise --budget")?;
    let mut doc = Document::new("covertness-exact", Some(a.seed), "nats");
    doc.set("willie", &a.willie)?;
    doc.set("codebook", &a.codebook)?;
    doc.set("q", a.levels)?;
    doc.set("ell", a.ell)?;
    let holds = oracle.bound_holds();
    let mut v = serde_json::to_value(&oracle)?;
    v.as_object_mut().map(|o| o.insert("bound_holds".into(), holds.into()));
    doc.push("oracle", v)?;
    doc.render(a.format)
}

pub fn covertness_sampled(a: &EstimateArgs) -> Result<String> {
    let planned = build_plan(&a.plan)?;
    let mut doc = Document::new("covertness-estimate", Some(a.session.seed), "nats");
    plan_header(&mut doc, &a.plan, &planned.plan)?;
    let s = session(planned, &a.session)?;
    session_header(&mut doc, &s, &a.session)?;
    doc.set("samples", a.samples)?;
    doc.set("uniform_control", a.uniform_control)?;
    let cfg = CovertnessConfig {
        blocks: a.samples,
        seed: a.session.seed,
        bins: a.bins,
        uniform_control: a.uniform_control,
    };
    doc.push("covertness", covertness_estimate(&s, &cfg)?)?;
    doc.render(a.format)
}
