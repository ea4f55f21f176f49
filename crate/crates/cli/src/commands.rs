use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use wordflow::cascade::{
    aggregate_risk, read_events, shuffle_test, write_class_risk_tsv, write_events, write_risk_tsv, ClassRisk,
    IngestOptions,
};
use wordflow::features::write_threshold_tsv;
use wordflow::graph::{degree_distribution, geo_assortativity};
use wordflow::hawkes;
use wordflow::simulate::{branching, synth_graph, uniform_base, Branching, SimConfig};
use wordflow::stats::{compare_pipeline, write_compare_tsv, write_plot_tsv};
use wordflow::tsv;
use wordflow::{
    Cascade, CompareOptions, CompareReport, FeatureContext, Kernel, ModelSpec, Params, RiskReport, SocialGraph,
};

use crate::config::{HorizonMode, OriginMode, RunConfig};
use crate::Failure;

/// JSON report wrapper; the config echo makes every run reproducible.
#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    seed: u64,
    config: &'a RunConfig,
    result: &'a T,
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<(), Failure> {
    w.flush().map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn write_with<F>(path: &Path, body: F) -> Result<(), Failure>
where
    F: FnOnce(&mut BufWriter<File>) -> wordflow::Result<()>,
{
    let mut w = create(path)?;
    body(&mut w).map_err(|e| Failure::from(e).context(path.display()))?;
    finish(w, path)
}

fn write_report<T: Serialize>(cfg: &RunConfig, command: &str, name: &str, result: &T) -> Result<PathBuf, Failure> {
    let path = output_dir(cfg).join(name);
    let env = Envelope {
        command,
        seed: cfg.seed,
        config: cfg,
        result,
    };
    write_with(&path, |w| {
        serde_json::to_writer_pretty(&mut *w, &env)?;
        writeln!(w)?;
        Ok(())
    })?;
    Ok(path)
}

pub fn output_dir(cfg: &RunConfig) -> PathBuf {
    cfg.resolve(&cfg.output_dir)
}

fn track(g: &mut SocialGraph, cfg: &RunConfig) {
    if cfg.tracked_cities.is_empty() {
        let all = g.city_labels().to_vec();
        g.set_tracked_cities(&all);
    } else {
        g.set_tracked_cities(&cfg.tracked_cities);
    }
}

pub fn load_graph(cfg: &RunConfig) -> Result<SocialGraph, Failure> {
    let path = cfg.resolve(&cfg.edges_path);
    let mut g = SocialGraph::read_edge_list(open(&path)?).map_err(|e| Failure::from(e).context(path.display()))?;
    if !cfg.cities_path.is_empty() {
        let path = cfg.resolve(&cfg.cities_path);
        g.read_cities(open(&path)?)
            .map_err(|e| Failure::from(e).context(path.display()))?;
    }
    track(&mut g, cfg);
    Ok(g)
}

/// Reads the event file into cascades, restricted to `cfg.words` when set.
/// Users seen only in events join `g` as isolated nodes.
pub fn load_cascades(cfg: &RunConfig, g: &mut SocialGraph) -> Result<Vec<Cascade>, Failure> {
    let opts = IngestOptions {
        origin_epoch_seconds: (cfg.origin == OriginMode::Fixed).then_some(cfg.origin_epoch_seconds),
        horizon_hours: (cfg.horizon == HorizonMode::Fixed).then_some(cfg.horizon_hours),
    };
    let path = cfg.resolve(&cfg.events_path);
    let mut all = read_events(open(&path)?, g, &opts).map_err(|e| match e {
        wordflow::Error::InvalidArgument(m) => Failure::Config(format!("{}: {m}", path.display())),
        e => Failure::from(e).context(path.display()),
    })?;
    let cascades: Vec<Cascade> = if cfg.words.is_empty() {
        all.into_values().collect()
    } else {
        cfg.words
            .iter()
            .map(|w| {
                all.remove(w)
                    .ok_or_else(|| Failure::Analysis(format!("word `{w}` has no events")))
            })
            .collect::<Result<_, _>>()?
    };
    if cascades.is_empty() {
        return Err(Failure::Analysis(format!("{}: no events", path.display())));
    }
    Ok(cascades)
}

/// `word<TAB>class` lines.
pub fn load_classes(cfg: &RunConfig) -> Result<BTreeMap<String, String>, Failure> {
    let mut out = BTreeMap::new();
    if cfg.classes_path.is_empty() {
        return Ok(out);
    }
    let path = cfg.resolve(&cfg.classes_path);
    for (n, line) in open(&path)?.lines().enumerate() {
        let line = line.map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        match line.split_once('\t') {
            Some((w, c)) if !w.trim().is_empty() && !c.trim().is_empty() => {
                out.insert(w.trim().to_string(), c.trim().to_string());
            }
            _ => {
                return Err(Failure::Io(format!(
                    "{}: line {}: expected `word<TAB>class`",
                    path.display(),
                    n + 1
                )))
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetStats {
    pub users: usize,
    pub edges: usize,
    pub tracked_cities: Vec<String>,
    pub degree_histogram: BTreeMap<usize, usize>,
    /// Share of tracked-city edges whose endpoints share a city.
    pub assortativity: Option<f64>,
    pub warnings: Vec<String>,
}

pub fn net_stats(cfg: &RunConfig) -> Result<NetStats, Failure> {
    let g = load_graph(cfg)?;
    let mut warnings = Vec::new();
    if g.edge_count() == 0 {
        warnings.push("edge file contains no edges".to_string());
    }
    let assortativity = match geo_assortativity(&g) {
        Ok(a) => Some(a),
        Err(e) => {
            warnings.push(format!("assortativity not available: {e}"));
            None
        }
    };
    let stats = NetStats {
        users: g.len(),
        edges: g.edge_count(),
        tracked_cities: g.tracked_cities().into_iter().map(String::from).collect(),
        degree_histogram: degree_distribution(&g),
        assortativity,
        warnings,
    };
    for w in &stats.warnings {
        eprintln!("warning: {w}");
    }
    let path = output_dir(cfg).join("degree_histogram.tsv");
    write_with(&path, |w| {
        writeln!(w, "degree\tusers")?;
        for (d, n) in &stats.degree_histogram {
            writeln!(w, "{d}\t{n}")?;
        }
        Ok(())
    })?;
    write_report(cfg, "net-stats", "net_stats.json", &stats)?;
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskRun {
    pub words: Vec<RiskReport>,
    pub classes: Vec<ClassRisk>,
}

pub fn risk(cfg: &RunConfig) -> Result<RiskRun, Failure> {
    let mut g = load_graph(cfg)?;
    let cascades = load_cascades(cfg, &mut g)?;
    let classes = load_classes(cfg)?;
    let words = cascades
        .iter()
        .map(|c| shuffle_test(c, &g, cfg.permutations, cfg.seed))
        .collect::<wordflow::Result<Vec<_>>>()?;
    for r in words.iter().filter(|r| r.is_empty()) {
        eprintln!(
            "warning: word `{}` has no usable exposures; risks not available",
            r.word
        );
    }
    let run = RiskRun {
        classes: aggregate_risk(&words, &classes),
        words,
    };
    let dir = output_dir(cfg);
    write_with(&dir.join("risk.tsv"), |w| write_risk_tsv(w, &run.words, &classes))?;
    write_with(&dir.join("class_risk.tsv"), |w| write_class_risk_tsv(w, &run.classes))?;
    write_report(cfg, "risk", "risk.json", &run)?;
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WordFit {
    pub word: String,
    pub events: usize,
    pub adopters: usize,
    pub spec: ModelSpec,
    pub aa_threshold: Option<f64>,
    pub pool_size: usize,
    pub loglik: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Weights for F1..F4; inactive features are zero.
    pub theta: Option<[f64; 4]>,
    /// Base intensity per adopter, by user id.
    pub mu: BTreeMap<String, f64>,
    pub trace: Vec<f64>,
    pub error: Option<String>,
}

fn fit_word(cfg: &RunConfig, g: &SocialGraph, c: &Cascade, kernel: Kernel) -> (WordFit, Option<FeatureContext>) {
    let mut row = WordFit {
        word: c.word.clone(),
        events: c.len(),
        adopters: c.adopters().len(),
        spec: cfg.fit_spec,
        aa_threshold: None,
        pool_size: 0,
        loglik: None,
        iterations: 0,
        converged: false,
        theta: None,
        mu: BTreeMap::new(),
        trace: Vec::new(),
        error: None,
    };
    let ctx = match FeatureContext::for_cascade(g, c, cfg.tie_strength_percentile) {
        Ok(ctx) => ctx,
        Err(e) => {
            row.error = Some(e.to_string());
            return (row, None);
        }
    };
    row.aa_threshold = ctx.threshold;
    row.pool_size = ctx.pool_size;
    match hawkes::fit(g, &ctx, c, cfg.fit_spec, kernel, &cfg.fit_config()) {
        Ok(f) => {
            row.loglik = Some(f.loglik);
            row.iterations = f.iterations;
            row.converged = f.converged;
            row.theta = Some(f.params.theta);
            row.mu = f.params.mu.iter().map(|(&u, &v)| (g.name(u).to_string(), v)).collect();
            row.trace = f.trace;
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    (row, Some(ctx))
}

pub fn fit(cfg: &RunConfig) -> Result<Vec<WordFit>, Failure> {
    let mut g = load_graph(cfg)?;
    let cascades = load_cascades(cfg, &mut g)?;
    let kernel = cfg.kernel();
    let results: Vec<(WordFit, Option<FeatureContext>)> =
        cascades.par_iter().map(|c| fit_word(cfg, &g, c, kernel)).collect();

    let dir = output_dir(cfg);
    write_with(&dir.join("fit.tsv"), |w| {
        writeln!(
            w,
            "word\tN\tadopters\tspec\tloglik\titerations\tconverged\ttheta_F1\ttheta_F2\ttheta_F3\ttheta_F4"
        )?;
        for (r, _) in &results {
            let theta = r.theta.map_or([None; 4], |t| t.map(Some));
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.word,
                r.events,
                r.adopters,
                r.spec,
                tsv::opt(r.loglik),
                r.iterations,
                r.converged,
                tsv::opt(theta[0]),
                tsv::opt(theta[1]),
                tsv::opt(theta[2]),
                tsv::opt(theta[3])
            )?;
        }
        Ok(())
    })?;
    write_with(&dir.join("thresholds.tsv"), |w| {
        write_threshold_tsv(
            w,
            results
                .iter()
                .filter_map(|(r, ctx)| ctx.as_ref().map(|c| (r.word.as_str(), c))),
        )
    })?;
    let rows: Vec<WordFit> = results.into_iter().map(|(r, _)| r).collect();
    write_report(cfg, "fit", "fit.json", &rows)?;
    for r in &rows {
        if let Some(e) = &r.error {
            eprintln!("warning: word `{}` not fitted: {e}", r.word);
        }
    }
    if rows.iter().all(|r| r.error.is_some()) {
        return Err(Failure::Analysis("no word could be fitted".into()));
    }
    Ok(rows)
}

pub fn compare(cfg: &RunConfig) -> Result<CompareReport, Failure> {
    let mut g = load_graph(cfg)?;
    let cascades = load_cascades(cfg, &mut g)?;
    let opts = CompareOptions {
        base: cfg.base_spec,
        added: cfg.added()?,
        alpha: cfg.alpha,
        kernel: cfg.kernel(),
        fit: cfg.fit_config(),
        percentile: cfg.tie_strength_percentile,
    };
    let report = compare_pipeline(&cascades, &g, &opts)?;
    let dir = output_dir(cfg);
    write_with(&dir.join("compare.tsv"), |w| write_compare_tsv(w, &report))?;
    write_with(&dir.join("compare_plot.tsv"), |w| write_plot_tsv(w, &report))?;
    write_report(cfg, "compare", "compare.json", &report)?;
    if report.tests == 0 {
        return Err(Failure::Analysis("no test could be computed".into()));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimWord {
    pub word: String,
    pub seed: u64,
    pub events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimRun {
    pub users: usize,
    pub edges: usize,
    pub branching: Branching,
    pub words: Vec<SimWord>,
}

/// Seed of the `i`-th simulated word.
pub fn word_seed(cfg: &RunConfig, i: usize) -> u64 {
    cfg.seed.wrapping_add(i as u64)
}

/// Builds the synthetic graph and simulates every word, without writing files.
pub fn simulate_cascades(cfg: &RunConfig) -> Result<(SocialGraph, Vec<Cascade>, Branching), Failure> {
    let mut g = synth_graph(cfg.graph_kind(), cfg.seed).map_err(|e| match e {
        wordflow::Error::InvalidArgument(m) => Failure::Config(m),
        e => e.into(),
    })?;
    track(&mut g, cfg);
    let ctx = FeatureContext::all_users(&g, cfg.tie_strength_percentile)?;
    let kernel = Kernel::untruncated(cfg.kernel_decay_per_hour);
    let stats = branching(&g, &ctx, &cfg.sim_theta, kernel.decay);
    let params = Params::new(cfg.sim_theta, uniform_base(&g, cfg.sim_base_rate_per_hour));
    let cascades = (0..cfg.sim_words)
        .into_par_iter()
        .map(|i| {
            let mut sim = SimConfig::new(params.clone(), cfg.sim_horizon_hours, word_seed(cfg, i));
            sim.word = format!("sim{i}");
            sim.kernel = kernel;
            sim.max_branching = cfg.sim_max_branching;
            sim.max_events = cfg.sim_max_events;
            wordflow::simulate::simulate(&g, &ctx, &sim)
        })
        .collect::<wordflow::Result<Vec<_>>>()?;
    Ok((g, cascades, stats))
}

/// Config that re-reads the files written by [`simulate`] from their own directory.
pub fn replay_config(cfg: &RunConfig, g: &SocialGraph) -> RunConfig {
    RunConfig {
        edges_path: "edges.tsv".into(),
        cities_path: "cities.tsv".into(),
        events_path: "events.tsv".into(),
        classes_path: String::new(),
        output_dir: ".".into(),
        tracked_cities: g.tracked_cities().into_iter().map(String::from).collect(),
        origin: OriginMode::Fixed,
        origin_epoch_seconds: 0,
        horizon: HorizonMode::Fixed,
        horizon_hours: cfg.sim_horizon_hours,
        words: Vec::new(),
        ..cfg.clone()
    }
}

pub fn simulate(cfg: &RunConfig) -> Result<SimRun, Failure> {
    let (g, cascades, stats) = simulate_cascades(cfg)?;
    let dir = output_dir(cfg);
    write_with(&dir.join("edges.tsv"), |w| g.write_edge_list(w))?;
    write_with(&dir.join("cities.tsv"), |w| g.write_cities(w))?;
    write_with(&dir.join("events.tsv"), |w| write_events(w, &cascades, &g))?;
    let replay = replay_config(cfg, &g);
    let path = dir.join("run.toml");
    let mut w = create(&path)?;
    w.write_all(replay.to_toml().as_bytes())
        .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    finish(w, &path)?;

    let run = SimRun {
        users: g.len(),
        edges: g.edge_count(),
        branching: stats,
        words: cascades
            .iter()
            .enumerate()
            .map(|(i, c)| SimWord {
                word: c.word.clone(),
                seed: word_seed(cfg, i),
                events: c.len(),
            })
            .collect(),
    };
    for w in run.words.iter().filter(|w| w.events == 0) {
        eprintln!(
            "warning: word `{}` produced no events and is absent from events.tsv",
            w.word
        );
    }
    write_report(cfg, "simulate", "simulate.json", &run)?;
    Ok(run)
}
