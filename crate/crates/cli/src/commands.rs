use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use linbp_core::beliefs::{read_sparse_beliefs, write_beliefs};
use linbp_core::bp::{bp_run_residual, BpConfig};
use linbp_core::convergence::{convergence_report, mooij_bp_bound, PowerConfig, ReportConfig};
use linbp_core::eval::{epsilon_sweep, log_grid, top_beliefs_masked, Method, SweepConfig};
use linbp_core::graph::{hop_distances, read_edges_between, write_edge_list, UNREACHABLE};
use linbp_core::linbp::{linbp_closed_form, linbp_iterate, IterConfig, Variant};
use linbp_core::sbp::{read_geodesic, sbp_run, write_geodesic, SbpState};
use linbp_core::synth::{kronecker_power, sample_explicit_beliefs, GenerationSummary, RngSpec, SeedMatrix};
use linbp_core::{center, degree_vector, Adjacency, BeliefMatrix, BeliefMode, CouplingMatrix, Error, Graph};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::files::{load_beliefs, load_coupling, load_graph, open, set_threads, with_suffix, write_json, Config, Output};
use crate::{ConvergeArgs, GenerateArgs, RunArgs, Status, SweepArgs, UpdateArgs};

fn check_positive(name: &str, v: f64) -> Result<()> {
    anyhow::ensure!(v.is_finite() && v > 0.0, "--{name} must be positive, got {v}");
    Ok(())
}

fn unlabeled_mask(g: &Graph, e: &BeliefMatrix) -> Vec<bool> {
    hop_distances(g, &e.explicit_nodes()).iter().map(|&l| l == UNREACHABLE).collect()
}

/// Stored next to an SBP state so later updates can reload it.
#[derive(Serialize, Deserialize)]
struct StateMeta {
    config: serde_json::Value,
    epsilon_h: f64,
    classes: usize,
    normalized: bool,
    converged: bool,
    unlabeled: Vec<String>,
}

fn write_state(prefix: &Path, config: &str, state: &SbpState, normalized: bool) -> Result<()> {
    let labels = state.graph().labels();
    let mut out = Output::create(with_suffix(prefix, ".geodesic.tsv"), config)?;
    write_geodesic(state.geodesic(), labels, out.writer())?;
    out.finish()?;
    let mut out = Output::create(with_suffix(prefix, ".explicit.tsv"), config)?;
    write_beliefs(state.explicit(), labels, true, out.writer())?;
    out.finish()?;
    let mut out = Output::create(with_suffix(prefix, ".edges.tsv"), config)?;
    write_edge_list(state.graph(), out.writer())?;
    out.finish()?;
    write_belief_file(prefix, config, state.beliefs(), labels, normalized, true)?;
    let unlabeled = state
        .unlabeled()
        .iter()
        .enumerate()
        .filter(|(_, &u)| u)
        .map(|(v, _)| labels.name(v).into_owned())
        .collect();
    write_json(
        with_suffix(prefix, ".meta.json"),
        &StateMeta {
            config: serde_json::from_str(config)?,
            epsilon_h: state.coupling().epsilon(),
            classes: state.coupling().k(),
            normalized,
            converged: true,
            unlabeled,
        },
    )
}

fn write_belief_file(
    prefix: &Path,
    config: &str,
    b: &BeliefMatrix,
    labels: &linbp_core::graph::NodeLabels,
    normalized: bool,
    converged: bool,
) -> Result<()> {
    let mut out = Output::create(with_suffix(prefix, ".beliefs.tsv"), config)?;
    writeln!(out.writer(), "# converged: {converged}")?;
    let b = if normalized { b.to_normalized() } else { b.clone() };
    write_beliefs(&b, labels, false, out.writer())?;
    out.finish()
}

pub fn run(a: &RunArgs) -> Result<Status> {
    let parallel = set_threads(a.threads)?;
    check_positive("epsilon-h", a.epsilon_h)?;
    let config = Config { command: "run", args: a }.json();
    let g = load_graph(&a.graph)?;
    let h = load_coupling(&a.coupling)?;
    let e = load_beliefs(&a.beliefs, &g, h.k(), BeliefMode::Residual)?;
    let r = center(&h).with_epsilon(a.epsilon_h)?;
    let d = degree_vector(&g);
    let unlabeled = unlabeled_mask(&g, &e);

    let mut iters = 0;
    let mut diverged = false;
    let (beliefs, converged) = match a.method {
        Method::Sbp => {
            let state = sbp_run(&g, &r, &e)?;
            write_state(&a.out, &config, &state, a.normalized)?;
            let mut out = Output::create(with_suffix(&a.out, ".coupling.txt"), &config)?;
            h.write(out.writer())?;
            out.finish()?;
            iters = state.stats().iterations;
            (Some(state.beliefs().clone()), true)
        }
        Method::Bp => {
            let cfg = BpConfig {
                max_iters: a.max_iters,
                tol: a.tol,
                relative: a.relative_tol,
                parallel,
            };
            let out = bp_run_residual(&g, &r, &e, &cfg)?;
            iters = out.iters;
            (Some(out.beliefs), out.converged)
        }
        Method::Linbp | Method::LinbpStar => {
            let variant = if a.method == Method::Linbp { Variant::Linbp } else { Variant::LinbpStar };
            if a.closed_form {
                match linbp_closed_form(&g, &d, &r, &e, variant, a.dense_limit) {
                    Ok(b) => (Some(b), true),
                    Err(Error::Singular) => {
                        eprintln!("warning: the linear system is singular at this scale");
                        (None, false)
                    }
                    Err(err) => return Err(err.into()),
                }
            } else {
                let cfg = IterConfig {
                    max_iters: a.max_iters,
                    tol: a.tol,
                    relative: a.relative_tol,
                    parallel,
                    ..IterConfig::default()
                };
                match linbp_iterate(&g, &d, &r, &e, variant, &cfg) {
                    Ok(out) => {
                        iters = out.iters;
                        (Some(out.beliefs), out.converged)
                    }
                    Err(Error::Diverged { iteration, change }) => {
                        eprintln!("warning: diverged at iteration {iteration} (change {change:e})");
                        iters = iteration;
                        diverged = true;
                        (None, false)
                    }
                    Err(err) => return Err(err.into()),
                }
            }
        }
    };

    let labels = g.labels();
    match &beliefs {
        Some(b) if a.method != Method::Sbp => write_belief_file(&a.out, &config, b, labels, a.normalized, converged)?,
        Some(_) => {}
        None => {
            let mut out = Output::create(with_suffix(&a.out, ".beliefs.tsv"), &config)?;
            writeln!(out.writer(), "# converged: false")?;
            writeln!(out.writer(), "# diverged: true")?;
            out.finish()?;
        }
    }
    let mut out = Output::create(with_suffix(&a.out, ".top.tsv"), &config)?;
    if let Some(b) = &beliefs {
        let keep: Vec<bool> = unlabeled.iter().map(|u| !u).collect();
        let top = top_beliefs_masked(b, a.tie_tol, &keep);
        for (v, set) in top.sets().iter().enumerate().filter(|(_, s)| !s.is_empty()) {
            let classes: Vec<String> = set.iter().map(usize::to_string).collect();
            writeln!(out.writer(), "{}\t{}", labels.name(v), classes.join(","))?;
        }
    }
    out.finish()?;
    if a.method != Method::Sbp {
        let names: Vec<String> = (0..g.node_count())
            .filter(|&v| unlabeled[v])
            .map(|v| labels.name(v).into_owned())
            .collect();
        write_json(
            with_suffix(&a.out, ".meta.json"),
            &json!({
                "config": serde_json::from_str::<serde_json::Value>(&config)?,
                "converged": converged,
                "diverged": diverged,
                "iters": iters,
                "unlabeled": names,
            }),
        )?;
    }
    if !converged {
        eprintln!("warning: {} did not converge", a.method);
        return Ok(Status::NotConverged);
    }
    Ok(Status::Ok)
}

pub fn converge(a: &ConvergeArgs) -> Result<Status> {
    set_threads(a.threads)?;
    check_positive("epsilon-h", a.epsilon_h)?;
    let config = Config { command: "converge", args: a }.json();
    let g = load_graph(&a.graph)?;
    if g.node_count() == 0 {
        bail!("graph {} has no nodes", a.graph.display());
    }
    let h = load_coupling(&a.coupling)?;
    let r = center(&h).with_epsilon(a.epsilon_h)?;
    let report = convergence_report(&g, &degree_vector(&g), &r, a.method, &ReportConfig::default())?;
    let k = h.k() as f64;
    let h_eps = r.scaled().add_scalar(1.0 / k);
    let mooij = if h_eps.iter().all(|&v| v > 0.0) {
        Some(mooij_bp_bound(&g, &CouplingMatrix::new(h_eps)?, &PowerConfig::default())?)
    } else {
        None
    };
    let report = report.with_mooij(mooij);
    match &a.out {
        Some(prefix) => {
            let mut out = Output::create(with_suffix(prefix, ".report.txt"), &config)?;
            out.writer().write_all(report.to_text().as_bytes())?;
            out.finish()?;
            let mut out = Output::create(with_suffix(prefix, ".probes.csv"), &config)?;
            out.writer().write_all(report.probes_csv().as_bytes())?;
            out.finish()?;
        }
        None => {
            println!("# config: {config}");
            print!("{}", report.to_text());
        }
    }
    Ok(Status::Ok)
}

pub fn generate(a: &GenerateArgs) -> Result<Status> {
    let config = Config { command: "generate", args: a }.json();
    let seed = match &a.seed_matrix {
        Some(path) => SeedMatrix::read(open(path)?).with_context(|| format!("reading seed matrix {}", path.display()))?,
        None => SeedMatrix::star(),
    };
    let kg = kronecker_power(&seed, a.power)?;
    let n = kg.graph.node_count();
    let rng = RngSpec::new(a.rng_seed);
    let sampled = sample_explicit_beliefs(n, a.fraction, a.classes, &mut rng.rng()?, a.rounding)?;
    if sampled.count() == 0 {
        eprintln!("warning: no explicit beliefs were sampled");
    }
    let mut out = Output::create(with_suffix(&a.out, ".edges.tsv"), &config)?;
    write_edge_list(&kg.graph, out.writer())?;
    out.finish()?;
    let mut out = Output::create(with_suffix(&a.out, ".beliefs.tsv"), &config)?;
    write_beliefs(&sampled.beliefs, kg.graph.labels(), true, out.writer())?;
    out.finish()?;
    let summary = GenerationSummary {
        seed_matrix: seed,
        power: a.power,
        nodes: n,
        entries_before: kg.entries_before,
        entries_after: kg.graph.entry_count(),
        self_loops_dropped: kg.self_loops_dropped,
        classes: a.classes,
        fraction: a.fraction,
        rounding: a.rounding,
        explicit: sampled.count(),
        rng,
    };
    let path = with_suffix(&a.out, ".meta.jsonl");
    let mut out = std::io::BufWriter::new(std::fs::File::create(&path).with_context(|| format!("cannot create {}", path.display()))?);
    writeln!(out, "{}", json!({ "config": serde_json::from_str::<serde_json::Value>(&config)? }))?;
    summary.write_json_lines(&mut out)?;
    out.flush()?;
    Ok(Status::Ok)
}

fn load_state(prefix: &Path) -> Result<(SbpState, StateMeta)> {
    let meta_path = with_suffix(prefix, ".meta.json");
    let meta: StateMeta = serde_json::from_reader(open(&meta_path)?).with_context(|| format!("reading {}", meta_path.display()))?;
    let g = load_graph(&with_suffix(prefix, ".edges.tsv"))?;
    let h = load_coupling(&with_suffix(prefix, ".coupling.txt"))?;
    anyhow::ensure!(h.k() == meta.classes, "coupling has {} classes but the state has {}", h.k(), meta.classes);
    let r = center(&h).with_epsilon(meta.epsilon_h)?;
    let explicit = load_beliefs(&with_suffix(prefix, ".explicit.tsv"), &g, h.k(), BeliefMode::Residual)?;
    let mode = if meta.normalized { BeliefMode::Normalized } else { BeliefMode::Residual };
    let beliefs = load_beliefs(&with_suffix(prefix, ".beliefs.tsv"), &g, h.k(), mode)?;
    let geo_path = with_suffix(prefix, ".geodesic.tsv");
    let geodesic = read_geodesic(open(&geo_path)?, g.labels(), g.node_count()).with_context(|| format!("reading {}", geo_path.display()))?;
    let state = SbpState::from_parts(g, r, explicit, beliefs, geodesic).context("stored state is inconsistent")?;
    Ok((state, meta))
}

pub fn update(a: &UpdateArgs) -> Result<Status> {
    let config = Config { command: "update", args: a }.json();
    let (mut state, meta) = load_state(&a.state)?;
    let (n, labels) = (state.graph().node_count(), state.graph().labels().clone());
    let changed = if let Some(path) = &a.new_beliefs {
        let delta = read_sparse_beliefs(open(path)?, state.coupling().k(), &labels, n).with_context(|| format!("reading {}", path.display()))?;
        if !delta.is_empty() {
            state.update_beliefs(&delta)?;
        }
        !delta.is_empty()
    } else if let Some(path) = &a.new_edges {
        let edges = read_edges_between(open(path)?, &labels, n).with_context(|| format!("reading {}", path.display()))?;
        if !edges.is_empty() {
            state.update_edges(&edges)?;
        }
        !edges.is_empty()
    } else {
        unreachable!("clap requires one delta")
    };
    if a.verify {
        let fresh = sbp_run(state.graph(), state.coupling(), state.explicit())?;
        let diff = fresh.beliefs().max_abs_diff(state.beliefs());
        let geo_ok = fresh.geodesic() == state.geodesic();
        if !geo_ok || !(diff <= 1e-10) {
            eprintln!("error: incremental state differs from a fresh run (geodesic numbers equal: {geo_ok}, belief difference {diff:e})");
            return Ok(Status::VerifyMismatch);
        }
    }
    if changed {
        let stats = state.stats();
        eprintln!(
            "updated {} beliefs in {} rounds, {} geodesic changes",
            stats.recomputed,
            stats.iterations,
            stats.trace.len()
        );
        write_state(&a.state, &config, &state, meta.normalized)?;
    }
    Ok(Status::Ok)
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        bail!("--eps-log-grid expects start,stop,points, got {spec:?}");
    }
    let start: f64 = parts[0].parse().with_context(|| format!("bad grid start {:?}", parts[0]))?;
    let stop: f64 = parts[1].parse().with_context(|| format!("bad grid stop {:?}", parts[1]))?;
    let points: usize = parts[2].parse().with_context(|| format!("bad grid size {:?}", parts[2]))?;
    Ok(log_grid(start, stop, points)?)
}

pub fn sweep(a: &SweepArgs) -> Result<Status> {
    let parallel = set_threads(a.threads)?;
    let config = Config { command: "sweep", args: a }.json();
    let grid = match (&a.eps_log_grid, &a.eps) {
        (Some(spec), _) => parse_grid(spec)?,
        (None, Some(values)) => values.clone(),
        (None, None) => unreachable!("clap requires a grid"),
    };
    let g = load_graph(&a.graph)?;
    let h = load_coupling(&a.coupling)?;
    let e = load_beliefs(&a.beliefs, &g, h.k(), BeliefMode::Residual)?;
    let probe = match &a.probe {
        Some(id) => Some(
            g.labels()
                .resolve(id, g.node_count())
                .ok_or_else(|| Error::UnknownNode(id.clone()))?,
        ),
        None => None,
    };
    let cfg = SweepConfig {
        methods: a.methods.clone(),
        gt: a.gt,
        tie_tol: a.tie_tol,
        probe,
        include_unlabeled: a.include_unlabeled,
        bp: BpConfig {
            max_iters: a.max_iters,
            tol: a.tol,
            relative: a.relative_tol,
            parallel: false,
        },
        linbp: IterConfig {
            max_iters: a.max_iters,
            tol: a.tol,
            relative: a.relative_tol,
            ..IterConfig::default()
        },
        parallel,
    };
    let result = epsilon_sweep(&g, &degree_vector(&g), &center(&h), &e, &grid, &cfg)?;
    match &a.out {
        Some(prefix) => {
            let mut out = Output::create(with_suffix(prefix, ".sweep.csv"), &config)?;
            out.writer().write_all(result.to_csv().as_bytes())?;
            out.finish()?;
            let mut out = Output::create(with_suffix(prefix, ".aggregates.csv"), &config)?;
            let w = out.writer();
            writeln!(w, "method,convergent_points,mean_accuracy,min_accuracy,mean_recall,min_recall,mean_precision,min_precision")?;
            for ag in result.aggregates() {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    ag.method,
                    ag.convergent_points,
                    ag.mean_accuracy,
                    ag.min_accuracy,
                    ag.mean_recall,
                    ag.min_recall,
                    ag.mean_precision,
                    ag.min_precision
                )?;
            }
            out.finish()?;
            write_json(
                with_suffix(prefix, ".meta.json"),
                &json!({
                    "config": serde_json::from_str::<serde_json::Value>(&config)?,
                    "grid": grid,
                    "aggregates": result.aggregates(),
                }),
            )?;
        }
        None => {
            println!("# config: {config}");
            print!("{}", result.to_csv());
        }
    }
    Ok(Status::Ok)
}
