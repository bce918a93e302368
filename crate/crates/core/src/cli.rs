//! The `tlpir` command line.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::audit::{audit, AuditReport, AuditTarget};
use crate::capacity::{
    best_scheme, csv_row, decimal, prop1_bound, rate_upper, ratio_str, report, sweep, Best, RateReport, SweepSpec,
    SystemParams, Vary, CSV_HEADER,
};
use crate::error::{Error, Result};
use crate::nb_engine::{self, TableKind};
use crate::net::{default_seed, retrieve, RetrievalRequest, RetrievalTranscript, Transport};
use crate::ns_engine::{self, BuildOptions, CodingGroup};
use crate::ns_params::{build_table, NsParameterTable};
use crate::plan::Scheme;

#[derive(Debug, Parser)]
#[command(name = "tlpir", version, about = "Two-level private information retrieval")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact rates of both schemes, the capacity bound and the naive baseline.
    Rates {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Group sizes and codes of both schemes.
    Params {
        #[command(flatten)]
        system: SystemArgs,
        /// Show the codes for this target only.
        #[arg(long)]
        target: Option<usize>,
        #[command(flatten)]
        build: BuildArgs,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one retrieval against simulated servers and verify the result.
    Retrieve {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, value_enum, default_value_t = SchemeArg::Auto)]
        scheme: SchemeArg,
        #[arg(long)]
        target: usize,
        /// Defaults to $PIR_SEED, else 42.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = Transport::Inproc)]
        transport: Transport,
        /// Server i listens on port_base + i; 0 picks free ports.
        #[arg(long, default_value_t = 0)]
        port_base: u16,
        #[command(flatten)]
        build: BuildArgs,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Structural privacy audit of a scheme.
    Audit {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, value_enum, default_value_t = SchemeArg::Auto)]
        scheme: SchemeArg,
        /// high: messages 1..K1 against T1 servers; low: all messages against T2.
        #[arg(long, value_enum, default_value_t = Level::Both)]
        level: Level,
        /// Audit a known-bad plan instead of a scheme.
        #[arg(long, value_enum)]
        fixture: Option<Fixture>,
        /// First seed; defaults to $PIR_SEED, else 42.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of consecutive seeds to audit.
        #[arg(long, default_value_t = 2)]
        trials: u64,
        #[command(flatten)]
        build: BuildArgs,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rates along a one-parameter family of systems.
    Sweep {
        /// A preset family: a = (10, 6:K1, 2:K1+4), K1 = 1..8; b = (10, T1:2, 2:6), T1 = 2..10.
        #[arg(long, value_enum)]
        figure: Option<Figure>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        t1: Option<usize>,
        #[arg(long)]
        k1: Option<usize>,
        #[arg(long)]
        t2: Option<usize>,
        #[arg(long)]
        k2: Option<usize>,
        #[arg(long, value_enum)]
        vary: Option<VaryArg>,
        #[arg(long)]
        from: Option<usize>,
        #[arg(long)]
        to: Option<usize>,
        /// Keep K2 = K1 + offset while sweeping.
        #[arg(long)]
        k2_offset: Option<usize>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, Args)]
pub struct SystemArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub t1: usize,
    #[arg(long)]
    pub k1: usize,
    #[arg(long)]
    pub t2: usize,
    #[arg(long)]
    pub k2: usize,
}

impl SystemArgs {
    fn params(&self) -> Result<SystemParams> {
        SystemParams::new(self.n, self.t1, self.k1, self.t2, self.k2)
    }
}

#[derive(Debug, Clone, Copy, Args)]
pub struct BuildArgs {
    /// Prime field modulus; defaults to the smallest prime above the longest code.
    #[arg(long)]
    pub modulus: Option<u64>,
    /// Keep the full message length N^K2.
    #[arg(long)]
    pub no_reduce: bool,
}

impl BuildArgs {
    fn options(&self) -> BuildOptions {
        BuildOptions { modulus: self.modulus, reduce: !self.no_reduce }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Ns,
    Nb,
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Level {
    High,
    Low,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fixture {
    Broken,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VaryArg {
    K1,
    T1,
}

/// Exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Scheme chosen for a request, with the reason when it was picked automatically.
fn resolve_scheme(arg: SchemeArg, p: &SystemParams) -> (Scheme, Option<String>) {
    match arg {
        SchemeArg::Ns => (Scheme::Ns, None),
        SchemeArg::Nb => (Scheme::Nb, None),
        SchemeArg::Auto => match best_scheme(p) {
            Best::Ns => (Scheme::Ns, Some("auto: NS has the higher rate".into())),
            Best::Nb => (Scheme::Nb, Some("auto: NB has the higher rate".into())),
            Best::Tie => (Scheme::Ns, Some("auto: NS and NB tie, using NS".into())),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatesDoc {
    #[serde(flatten)]
    pub report: RateReport,
    pub decimals: DecimalRates,
    /// Present for (3,2:2,1:3) only, where a sharper bound is known.
    pub prop1_bound: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecimalRates {
    pub r_ns: String,
    pub r_nb: String,
    pub r_upper: String,
    pub r_naive: String,
}

pub fn rates_doc(p: &SystemParams) -> RatesDoc {
    let report = report(p);
    let decimals = DecimalRates {
        r_ns: decimal(&report.r_ns, 12),
        r_nb: decimal(&report.r_nb, 12),
        r_upper: decimal(&report.r_upper, 12),
        r_naive: decimal(&report.r_naive, 12),
    };
    let prop1 = (*p == SystemParams { n: 3, t1: 2, k1: 2, t2: 1, k2: 3 }).then(|| ratio_str::to_string(&prop1_bound()));
    RatesDoc { report, decimals, prop1_bound: prop1 }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetGroups {
    pub k_star: usize,
    pub groups: Vec<CodingGroup>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NsDoc {
    pub table: NsParameterTable,
    pub reduction: u64,
    pub message_len: usize,
    pub modulus: u64,
    pub targets: Vec<TargetGroups>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NbTableDoc {
    pub kind: TableKind,
    pub messages: Vec<usize>,
    pub size: usize,
    pub groups: Vec<CodingGroup>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NbTargetDoc {
    pub k_star: usize,
    pub a: NbTableDoc,
    pub b: NbTableDoc,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NbDoc {
    pub reduction: u64,
    pub message_len: usize,
    pub modulus: u64,
    /// Table sizes before reduction.
    pub t1: u64,
    pub t2: u64,
    pub targets: Vec<NbTargetDoc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamsDoc {
    pub params: SystemParams,
    pub ns: NsDoc,
    /// Absent when K1 = K2.
    pub nb: Option<NbDoc>,
}

pub fn params_doc(p: &SystemParams, target: Option<usize>, opts: &BuildOptions) -> Result<ParamsDoc> {
    let targets = match target {
        Some(k) => vec![k],
        None if p.k1 < p.k2 => vec![1, p.k1 + 1],
        None => vec![1],
    };
    let (r, l, field) = ns_engine::setup(p, opts)?;
    let ns = NsDoc {
        table: build_table(p)?,
        reduction: r,
        message_len: l,
        modulus: field.q(),
        targets: targets
            .iter()
            .map(|&k| Ok(TargetGroups { k_star: k, groups: ns_engine::coding_groups(p, k, opts)? }))
            .collect::<Result<_>>()?,
    };
    let nb = if p.k1 < p.k2 {
        let (r, l, field) = nb_engine::setup(p, opts)?;
        let (t1, t2) = nb_engine::table_totals(p);
        let per = targets
            .iter()
            .map(|&k| {
                let t = nb_engine::build_tables(p, k, opts)?;
                let doc = |x: &nb_engine::PrecodedTable| NbTableDoc {
                    kind: x.kind,
                    messages: x.messages.clone(),
                    size: x.size(),
                    groups: x.groups.clone(),
                };
                Ok(NbTargetDoc { k_star: k, a: doc(&t.a), b: doc(&t.b) })
            })
            .collect::<Result<_>>()?;
        Some(NbDoc { reduction: r, message_len: l, modulus: field.q(), t1, t2, targets: per })
    } else {
        None
    };
    Ok(ParamsDoc { params: *p, ns, nb })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrieveDoc {
    #[serde(flatten)]
    pub transcript: RetrievalTranscript,
    pub note: Option<String>,
}

/// Result of one command: rendered output and whether verification passed.
pub struct Outcome {
    pub output: String,
    pub verified: bool,
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map(|s| s + "\n").map_err(|e| Error::Internal(e.to_string()))
}

fn group_lines(out: &mut String, groups: &[CodingGroup]) {
    for g in groups {
        let _ = writeln!(
            out,
            "    {:?} layer {} m={} code ({},{}) segments {:?}",
            g.composition, g.layer, g.m, g.n, g.k, g.segment_offsets
        );
    }
}

fn group_csv(out: &mut String, scheme: &str, k: usize, table: &str, groups: &[CodingGroup]) {
    for g in groups {
        let comp: Vec<String> = g.composition.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "{scheme},{k},{table},{},{},{},{},{}", comp.join(" "), g.layer, g.m, g.n, g.k);
    }
}

pub fn cmd_rates(p: &SystemParams, format: Format) -> Result<Outcome> {
    let doc = rates_doc(p);
    let r = &doc.report;
    let verified = r.r_ns.clone().max(r.r_nb.clone()) <= rate_upper(p);
    let output = match format {
        Format::Json => json(&doc)?,
        Format::Csv => format!("{CSV_HEADER}\n{}\n", csv_row(r)),
        Format::Text => {
            let mut s = String::new();
            let f = ratio_str::to_string;
            let _ = writeln!(s, "system {p}");
            let _ = writeln!(s, "r_ns    = {} ({})", f(&r.r_ns), doc.decimals.r_ns);
            let _ = writeln!(s, "r_nb    = {} ({})", f(&r.r_nb), doc.decimals.r_nb);
            let _ = writeln!(s, "r_upper = {} ({})", f(&r.r_upper), doc.decimals.r_upper);
            let _ = writeln!(s, "r_naive = {} ({})", f(&r.r_naive), doc.decimals.r_naive);
            let _ = writeln!(s, "NS cost gap to the bound = {}", f(&r.d_gap));
            let _ = writeln!(s, "NS saving over naive = {}", f(&r.coding_gain));
            let _ = writeln!(s, "best: {}", r.best);
            if let Some(b) = &doc.prop1_bound {
                let _ = writeln!(s, "note: a tighter bound {b} is known for this system (below r_upper)");
            }
            s
        }
    };
    Ok(Outcome { output, verified })
}

pub fn cmd_params(p: &SystemParams, target: Option<usize>, opts: &BuildOptions, format: Format) -> Result<Outcome> {
    if let Some(k) = target {
        if k == 0 || k > p.k2 {
            return Err(Error::Params(format!("target {k} outside 1..={}", p.k2)));
        }
    }
    let doc = params_doc(p, target, opts)?;
    let output = match format {
        Format::Json => json(&doc)?,
        Format::Csv => {
            let mut s = String::from("scheme,k_star,table,composition,layer,m,n,k\n");
            for t in &doc.ns.targets {
                group_csv(&mut s, "ns", t.k_star, "-", &t.groups);
            }
            for t in doc.nb.iter().flat_map(|nb| &nb.targets) {
                group_csv(&mut s, "nb", t.k_star, "A", &t.a.groups);
                group_csv(&mut s, "nb", t.k_star, "B", &t.b.groups);
            }
            s
        }
        Format::Text => {
            let mut s = String::new();
            let ns = &doc.ns;
            let _ = writeln!(s, "system {p}");
            let _ = writeln!(
                s,
                "NS: M={} L={} (full {}) reduction {} q={}",
                ns.table.big_m, ns.message_len, ns.table.l, ns.reduction, ns.modulus
            );
            let _ = writeln!(s, "  classes (i high, j low): m, n1/k1, n2/k2 before reduction");
            for c in &ns.table.classes {
                let o = |v: Option<u64>| v.map_or("-".to_string(), |x| x.to_string());
                let _ = writeln!(
                    s,
                    "    ({},{}) m={} n1={} k1={} n2={} k2={}",
                    c.i,
                    c.j,
                    c.m,
                    o(c.n1),
                    o(c.k1),
                    o(c.n2),
                    o(c.k2)
                );
            }
            for t in &ns.targets {
                let _ = writeln!(s, "  codes for k*={}", t.k_star);
                group_lines(&mut s, &t.groups);
            }
            match &doc.nb {
                None => {
                    let _ = writeln!(s, "NB: not applicable (K1 = K2)");
                }
                Some(nb) => {
                    let _ = writeln!(
                        s,
                        "NB: L={} reduction {} q={} tables t1={} t2={}",
                        nb.message_len, nb.reduction, nb.modulus, nb.t1, nb.t2
                    );
                    for t in &nb.targets {
                        for (name, table) in [("A", &t.a), ("B", &t.b)] {
                            let _ = writeln!(
                                s,
                                "  k*={} table {name} {:?} messages {:?}, {} symbols",
                                t.k_star, table.kind, table.messages, table.size
                            );
                            group_lines(&mut s, &table.groups);
                        }
                    }
                }
            }
            s
        }
    };
    Ok(Outcome { output, verified: true })
}

pub fn cmd_retrieve(req: &RetrievalRequest, note: Option<String>, format: Format) -> Result<Outcome> {
    let t = retrieve(req)?;
    let verified = t.recovered_ok;
    let output = match format {
        Format::Json => json(&RetrieveDoc { transcript: t, note })?,
        Format::Csv => {
            let mut s = String::from("server,upload_bytes,upload_symbols,download_bytes,download_symbols,answer_sha256\n");
            for v in &t.servers {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    v.server, v.upload_bytes, v.upload_symbols, v.download_bytes, v.download_symbols, v.answer_sha256
                );
            }
            s
        }
        Format::Text => {
            let mut s = String::new();
            if let Some(n) = &note {
                let _ = writeln!(s, "{n}");
            }
            let _ = writeln!(s, "{}", t.summary());
            for v in &t.servers {
                let _ = writeln!(s, "  server {}: {} symbols down, {} up", v.server, v.download_symbols, v.upload_symbols);
            }
            let _ = writeln!(s, "recovered message sha256 {}", t.recovered_sha256);
            s
        }
    };
    Ok(Outcome { output, verified })
}

pub fn audit_targets(p: &SystemParams, scheme: Scheme, level: Level) -> Vec<AuditTarget> {
    match level {
        Level::High => vec![AuditTarget::high(*p, scheme)],
        Level::Low => vec![AuditTarget::low(*p, scheme)],
        Level::Both => vec![AuditTarget::high(*p, scheme), AuditTarget::low(*p, scheme)],
    }
}

pub fn cmd_audit(targets: &[AuditTarget], seeds: &[u64], opts: &BuildOptions, format: Format) -> Result<Outcome> {
    let reports: Vec<AuditReport> = targets.iter().map(|t| audit(t, seeds, opts)).collect::<Result<_>>()?;
    let verified = reports.iter().all(|r| r.pass);
    let output = match format {
        Format::Json => json(&reports)?,
        Format::Csv => {
            let mut s = String::from("scheme,protected,level,k_star,message,colluding,rows,rank,required_rank,pass\n");
            for r in &reports {
                let set: Vec<String> = r.target.protected_set.iter().map(usize::to_string).collect();
                for c in &r.checks {
                    let col: Vec<String> = c.colluding.iter().map(usize::to_string).collect();
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{},{},{},{},{},{}",
                        r.target.scheme,
                        set.join(" "),
                        r.target.level,
                        c.k_star,
                        c.message,
                        col.join(" "),
                        c.rows,
                        c.rank,
                        c.required_rank,
                        c.pass
                    );
                }
            }
            s
        }
        Format::Text => {
            let mut s = String::new();
            for r in &reports {
                let t = &r.target;
                let _ = writeln!(
                    s,
                    "{} {} S={:?} T={}: {} ({} colluding sets, {} block checks, pattern {}){}",
                    t.scheme,
                    t.params,
                    t.protected_set,
                    t.level,
                    if r.pass { "PASS" } else { "FAIL" },
                    r.colluding_sets,
                    r.checks.len(),
                    if r.pattern_ok { "identical" } else { "differs" },
                    if r.all_full_row_rank() || r.checks.is_empty() { "" } else { ", some blocks rank-deficient" }
                );
                if let Some(c) = &r.counterexample {
                    let _ = writeln!(s, "  counterexample: {c}");
                    let _ = writeln!(s, "  verdict: {}", r.verdict());
                }
            }
            s
        }
    };
    Ok(Outcome { output, verified })
}

#[allow(clippy::too_many_arguments)]
pub fn sweep_spec(
    figure: Option<Figure>,
    system: [Option<usize>; 5],
    vary: Option<VaryArg>,
    from: Option<usize>,
    to: Option<usize>,
    k2_offset: Option<usize>,
) -> Result<SweepSpec> {
    let mut spec = match figure {
        Some(Figure::A) => SweepSpec::figure_a(),
        Some(Figure::B) => SweepSpec::figure_b(),
        None => {
            let [n, t1, k1, t2, k2] = system;
            let need = |v: Option<usize>, name: &str| v.ok_or_else(|| Error::Params(format!("sweep needs --{name}")));
            let vary = match vary.ok_or_else(|| Error::Params("sweep needs --figure or --vary".into()))? {
                VaryArg::K1 => Vary::K1,
                VaryArg::T1 => Vary::T1,
            };
            let from = need(from, "from")?;
            let mut base = SystemParams { n: need(n, "n")?, t1: 0, k1: 0, t2: need(t2, "t2")?, k2: 0 };
            match vary {
                Vary::K1 => base.t1 = need(t1, "t1")?,
                Vary::T1 => base.k1 = need(k1, "k1")?,
            }
            base.k2 = match k2_offset {
                Some(_) => 0,
                None => need(k2, "k2")?,
            };
            SweepSpec { base, vary, from, to: need(to, "to")?, k2_offset }
        }
    };
    if figure.is_some() {
        if let Some(v) = from {
            spec.from = v;
        }
        if let Some(v) = to {
            spec.to = v;
        }
    }
    Ok(spec)
}

pub fn cmd_sweep(spec: &SweepSpec, format: Format) -> Result<Outcome> {
    let reports = sweep(spec)?;
    let verified = reports.iter().all(|r| r.r_ns.clone().max(r.r_nb.clone()) <= r.r_upper);
    let output = match format {
        Format::Json => json(&reports)?,
        Format::Csv => {
            let mut s = format!("{CSV_HEADER}\n");
            for r in &reports {
                s.push_str(&csv_row(r));
                s.push('\n');
            }
            s
        }
        Format::Text => {
            let mut s = String::new();
            for r in &reports {
                let _ = writeln!(
                    s,
                    "{}: r_ns {} r_nb {} r_upper {} best {}",
                    r.params,
                    decimal(&r.r_ns, 6),
                    decimal(&r.r_nb, 6),
                    decimal(&r.r_upper, 6),
                    r.best
                );
            }
            s
        }
    };
    Ok(Outcome { output, verified })
}

fn seed_or_default(seed: Option<u64>) -> Result<u64> {
    seed.map_or_else(default_seed, Ok)
}

/// Executes a parsed command.
pub fn execute(cli: Cli) -> Result<(Outcome, Option<PathBuf>)> {
    Ok(match cli.command {
        Command::Rates { system, format, out } => (cmd_rates(&system.params()?, format)?, out),
        Command::Params { system, target, build, format, out } => {
            (cmd_params(&system.params()?, target, &build.options(), format)?, out)
        }
        Command::Retrieve { system, scheme, target, seed, transport, port_base, build, format, out } => {
            let p = system.params()?;
            if target == 0 || target > p.k2 {
                return Err(Error::Params(format!("target {target} outside 1..={}", p.k2)));
            }
            let (scheme, note) = resolve_scheme(scheme, &p);
            let req = RetrievalRequest {
                params: p,
                scheme,
                k_star: target,
                seed: seed_or_default(seed)?,
                transport,
                port_base,
                options: build.options(),
            };
            (cmd_retrieve(&req, note, format)?, out)
        }
        Command::Audit { system, scheme, level, fixture, seed, trials, build, format, out } => {
            let p = system.params()?;
            let scheme = match fixture {
                Some(Fixture::Broken) => Scheme::Fixture,
                None => resolve_scheme(scheme, &p).0,
            };
            if trials == 0 {
                return Err(Error::Params("--trials must be at least 1".into()));
            }
            let first = seed_or_default(seed)?;
            let seeds: Vec<u64> = (0..trials).map(|i| first.wrapping_add(i)).collect();
            (cmd_audit(&audit_targets(&p, scheme, level), &seeds, &build.options(), format)?, out)
        }
        Command::Sweep { figure, n, t1, k1, t2, k2, vary, from, to, k2_offset, format, out } => {
            let spec = sweep_spec(figure, [n, t1, k1, t2, k2], vary, from, to, k2_offset)?;
            (cmd_sweep(&spec, format)?, out)
        }
    })
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code: 0 when the command's verification passes, 1 when it does not, 2 on
/// usage errors.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() { stderr.write_all(rendered.as_bytes()) } else { stdout.write_all(rendered.as_bytes()) };
            return code;
        }
    };
    match execute(cli) {
        Ok((outcome, out)) => {
            let written = match &out {
                Some(path) => std::fs::write(path, &outcome.output)
                    .map(|_| format!("wrote {}\n", path.display()))
                    .map_err(Error::from),
                None => Ok(outcome.output.clone()),
            };
            match written {
                Ok(text) => {
                    let _ = stdout.write_all(text.as_bytes());
                }
                Err(e) => {
                    let _ = writeln!(stderr, "error: {e}");
                    return EXIT_VERIFY_FAILED;
                }
            }
            if outcome.verified {
                EXIT_OK
            } else {
                EXIT_VERIFY_FAILED
            }
        }
        Err(e @ Error::Params(_)) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_USAGE
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_VERIFY_FAILED
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("tlpir").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    const WORKED: [&str; 10] = ["--n", "4", "--t1", "2", "--k1", "2", "--t2", "1", "--k2", "4"];
    const SMALL: [&str; 10] = ["--n", "3", "--t1", "2", "--k1", "2", "--t2", "1", "--k2", "3"];

    fn with(cmd: &str, sys: &[&str], extra: &[&str]) -> Vec<String> {
        std::iter::once(cmd).chain(sys.iter().copied()).chain(extra.iter().copied()).map(String::from).collect()
    }

    fn go(v: Vec<String>) -> (i32, String, String) {
        let refs: Vec<&str> = v.iter().map(String::as_str).collect();
        run_args(&refs)
    }

    #[test]
    fn rates_text_and_json() {
        let (code, out, _) = go(with("rates", &WORKED, &[]));
        assert_eq!(code, 0);
        assert!(out.contains("r_ns    = 16/29"));
        assert!(out.contains("r_nb    = 16/29"));
        let (code, out, _) = go(with("rates", &SMALL, &["--format", "json"]));
        assert_eq!(code, 0);
        let doc: RatesDoc = serde_json::from_str(&out).unwrap();
        assert_eq!(ratio_str::to_string(&doc.report.r_upper), "9/17");
        assert_eq!(doc.prop1_bound.as_deref(), Some("11/21"));
        let (_, out, _) = go(with("rates", &WORKED, &["--format", "json"]));
        assert!(serde_json::from_str::<RatesDoc>(&out).unwrap().prop1_bound.is_none());
    }

    #[test]
    fn usage_errors() {
        let bad = ["--n", "4", "--t1", "1", "--k1", "2", "--t2", "2", "--k2", "4"];
        assert_eq!(go(with("rates", &bad, &[])).0, EXIT_USAGE);
        assert_eq!(go(with("retrieve", &WORKED, &["--target", "5"])).0, EXIT_USAGE);
        assert_eq!(go(with("retrieve", &WORKED, &["--target", "0"])).0, EXIT_USAGE);
        assert_eq!(run_args(&["sweep", "--vary", "k1", "--n", "10", "--t1", "6", "--t2", "2", "--k2-offset", "4", "--from", "5", "--to", "2"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["bogus"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn retrieve_reports_totals() {
        let (code, out, _) = go(with("retrieve", &WORKED, &["--scheme", "ns", "--target", "1", "--seed", "42"]));
        assert_eq!(code, 0);
        assert!(out.contains("downloaded 116 symbols, rate 16/29, recovery OK"), "{out}");
        let (code, out, _) = go(with("retrieve", &WORKED, &["--target", "3", "--format", "json"]));
        assert_eq!(code, 0);
        let doc: RetrieveDoc = serde_json::from_str(&out).unwrap();
        assert!(doc.note.unwrap().contains("tie"));
        assert_eq!(doc.transcript.download_total, 116);
    }

    #[test]
    fn audit_and_fixture() {
        let (code, out, _) = go(with("audit", &WORKED, &["--scheme", "ns", "--level", "high", "--trials", "1"]));
        assert_eq!(code, 0, "{out}");
        assert!(out.contains("PASS"));
        let (code, out, _) = go(with("audit", &WORKED, &["--scheme", "nb", "--level", "low", "--format", "json"]));
        assert_eq!(code, 0);
        let reports: Vec<AuditReport> = serde_json::from_str(&out).unwrap();
        assert!(reports[0].pass);
        let (code, out, _) = go(with("audit", &WORKED, &["--fixture", "broken"]));
        assert_eq!(code, EXIT_VERIFY_FAILED);
        assert!(out.contains("FAIL") && out.contains("counterexample"));
    }

    #[test]
    fn params_documents() {
        let (code, out, _) = go(with("params", &WORKED, &["--format", "json"]));
        assert_eq!(code, 0);
        let doc: ParamsDoc = serde_json::from_str(&out).unwrap();
        assert_eq!((doc.ns.reduction, doc.ns.message_len, doc.ns.modulus), (4, 64, 29));
        assert_eq!(doc.nb.as_ref().unwrap().message_len, 64);
        let (code, out, _) = go(with("params", &WORKED, &["--target", "4"]));
        assert_eq!(code, 0);
        assert!(out.contains("code (16,4)"));
        let full = ["--n", "4", "--t1", "2", "--k1", "2", "--t2", "2", "--k2", "2"];
        let (_, out, _) = go(with("params", &full, &["--no-reduce"]));
        assert!(out.contains("NB: not applicable"));
        assert!(out.contains("L=16"));
    }

    #[test]
    fn sweeps() {
        let (code, out, _) = run_args(&["sweep", "--figure", "a"]);
        assert_eq!(code, 0);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 9);
        assert!(lines[1].starts_with("10,6,1,2,5,"));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.csv");
        let (code, out, _) = run_args(&["sweep", "--figure", "b", "--out", path.to_str().unwrap()]);
        assert_eq!(code, 0);
        assert!(out.starts_with("wrote "));
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 10);
        let (code, out, _) = run_args(&[
            "sweep", "--vary", "t1", "--n", "10", "--k1", "2", "--t2", "2", "--k2", "6", "--from", "2", "--to", "4",
            "--format", "json",
        ]);
        assert_eq!(code, 0);
        assert_eq!(serde_json::from_str::<Vec<RateReport>>(&out).unwrap().len(), 3);
    }
}
