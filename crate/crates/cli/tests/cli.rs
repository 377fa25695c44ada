use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const FIG1C: &str = "3\n0.6 0.3 0.1\n0.3 0.0 0.7\n0.1 0.7 0.2\n";
const TORUS: &str = "0\t4\n1\t5\n2\t6\n3\t7\n4\t5\n5\t6\n6\t7\n7\t4\n";
const TORUS_BELIEFS: &str = "0\t0\t0.02\n0\t1\t-0.01\n0\t2\t-0.01\n\
                             1\t0\t-0.01\n1\t1\t0.02\n1\t2\t-0.01\n\
                             2\t0\t-0.01\n2\t1\t-0.01\n2\t2\t0.02\n";
/// One labeled node, so every mode of the update is excited.
const ONE_BELIEF: &str = "0\t0\t0.02\n0\t1\t-0.01\n0\t2\t-0.01\n";

fn linbp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linbp")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

struct Work {
    dir: TempDir,
}

impl Work {
    fn new() -> Self {
        Work {
            dir: TempDir::new().unwrap(),
        }
    }

    fn file(&self, name: &str, text: &str) -> String {
        let p = self.dir.path().join(name);
        fs::write(&p, text).unwrap();
        p.to_str().unwrap().to_owned()
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn prefix(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_owned()
    }

    fn torus(&self) -> (String, String, String) {
        (self.file("g.tsv", TORUS), self.file("e.tsv", TORUS_BELIEFS), self.file("h.txt", FIG1C))
    }
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap_or_else(|_| panic!("missing {}", p.display()))
}

fn report_value(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no {key} in\n{text}"))
        .trim()
        .to_owned()
}

#[test]
fn sbp_run_writes_beliefs_and_geodesic_numbers() {
    let w = Work::new();
    let (g, e, h) = w.torus();
    let out = linbp(&["run", "--method", "sbp", "--graph", &g, "--beliefs", &e, "--coupling", &h, "--out", &w.prefix("run")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let beliefs = read(&w.path("run.beliefs.tsv"));
    assert!(beliefs.starts_with("# config: {\"command\":\"run\""));
    assert_eq!(beliefs.lines().filter(|l| !l.starts_with('#')).count(), 24);
    let geo = read(&w.path("run.geodesic.tsv"));
    assert!(geo.lines().any(|l| l == "3\t3"), "{geo}");
    assert!(w.path("run.top.tsv").exists());
}

#[test]
fn linbp_above_threshold_exits_2() {
    let w = Work::new();
    let (g, _, h) = w.torus();
    let e = w.file("one.tsv", ONE_BELIEF);
    let out = linbp(&[
        "run", "--method", "linbp", "--graph", &g, "--beliefs", &e, "--coupling", &h, "--epsilon-h", "0.6", "--max-iters",
        "5000", "--out", &w.prefix("run"),
    ]);
    assert_eq!(code(&out), 2);
    let meta = read(&w.path("run.meta.json"));
    assert!(meta.contains("\"converged\": false"));
    assert!(meta.contains("\"diverged\": true"));
}

#[test]
fn linbp_below_threshold_converges() {
    let w = Work::new();
    let (g, e, h) = w.torus();
    let out = linbp(&[
        "run", "--method", "linbp", "--graph", &g, "--beliefs", &e, "--coupling", &h, "--epsilon-h", "0.3", "--max-iters",
        "5000", "--out", &w.prefix("run"),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(read(&w.path("run.beliefs.tsv")).contains("# converged: true"));
}

#[test]
fn missing_coupling_exits_1() {
    let w = Work::new();
    let (g, e, _) = w.torus();
    let missing = w.prefix("absent.txt");
    let out = linbp(&["run", "--method", "bp", "--graph", &g, "--beliefs", &e, "--coupling", &missing, "--out", &w.prefix("run")]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.txt"));
}

#[test]
fn converge_on_uniform_coupling_is_unbounded() {
    let w = Work::new();
    let (g, _, _) = w.torus();
    let h = w.file("u.txt", "2\n0.5 0.5\n0.5 0.5\n");
    let out = linbp(&["converge", "--graph", &g, "--coupling", &h]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(report_value(&text, "epsilon_exact"), "unbounded");
}

#[test]
fn converge_on_empty_graph_exits_1() {
    let w = Work::new();
    let g = w.file("g.tsv", "# nothing here\n");
    let h = w.file("h.txt", FIG1C);
    assert_eq!(code(&linbp(&["converge", "--graph", &g, "--coupling", &h])), 1);
}

#[test]
fn converge_reports_torus_thresholds() {
    let w = Work::new();
    let (g, _, h) = w.torus();
    for (method, exact, sufficient) in [("linbp", 0.488, 0.360), ("linbp_star", 0.658, 0.455)] {
        let prefix = w.prefix(method);
        let out = linbp(&["converge", "--graph", &g, "--coupling", &h, "--method", method, "--out", &prefix]);
        assert_eq!(code(&out), 0);
        let text = read(&w.path(&format!("{method}.report.txt")));
        let got: f64 = report_value(&text, "epsilon_exact").parse().unwrap();
        assert!((got - exact).abs() < 1e-3, "{method}: {got}");
        let got: f64 = report_value(&text, "epsilon_sufficient").parse().unwrap();
        assert!((got - sufficient).abs() < 1e-3, "{method}: {got}");
        assert!(read(&w.path(&format!("{method}.probes.csv"))).contains("epsilon,rho"));
    }
}

#[test]
fn generate_power_five() {
    let w = Work::new();
    let prefix = w.prefix("k5");
    assert_eq!(code(&linbp(&["generate", "--power", "5", "--out", &prefix])), 0);
    let edges = read(&w.path("k5.edges.tsv"));
    assert!(edges.contains("# nodes: 243"));
    let beliefs = read(&w.path("k5.beliefs.tsv"));
    let nodes: std::collections::BTreeSet<&str> = beliefs
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split('\t').next().unwrap())
        .collect();
    assert_eq!(nodes.len(), 12);
    assert!(read(&w.path("k5.meta.jsonl")).lines().count() >= 2);

    let again = w.prefix("k5b");
    linbp(&["generate", "--power", "5", "--out", &again]);
    assert_eq!(beliefs, read(&w.path("k5b.beliefs.tsv")).replace("k5b", "k5"));
}

#[test]
fn generate_with_zero_fraction_warns() {
    let w = Work::new();
    let out = linbp(&["generate", "--power", "1", "--fraction", "0", "--out", &w.prefix("z")]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert!(read(&w.path("z.beliefs.tsv")).lines().all(|l| l.starts_with('#')));
}

fn sbp_state(w: &Work) -> String {
    let (g, e, h) = w.torus();
    let prefix = w.prefix("state");
    let out = linbp(&["run", "--method", "sbp", "--graph", &g, "--beliefs", &e, "--coupling", &h, "--out", &prefix]);
    assert_eq!(code(&out), 0);
    prefix
}

const STATE_FILES: [&str; 6] = [
    "state.beliefs.tsv",
    "state.geodesic.tsv",
    "state.explicit.tsv",
    "state.edges.tsv",
    "state.meta.json",
    "state.coupling.txt",
];

#[test]
fn empty_update_leaves_state_untouched() {
    let w = Work::new();
    let prefix = sbp_state(&w);
    let before: Vec<String> = STATE_FILES.iter().map(|f| read(&w.path(f))).collect();
    let empty = w.file("none.tsv", "# no rows\n");
    assert_eq!(code(&linbp(&["update", "--state", &prefix, "--new-beliefs", &empty])), 0);
    let after: Vec<String> = STATE_FILES.iter().map(|f| read(&w.path(f))).collect();
    assert_eq!(before, after);
}

#[test]
fn verified_updates_succeed() {
    let w = Work::new();
    let prefix = sbp_state(&w);
    let delta = w.file("d.tsv", "3\t0\t0.05\n3\t1\t-0.05\n");
    let out = linbp(&["update", "--state", &prefix, "--new-beliefs", &delta, "--verify"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(read(&w.path("state.geodesic.tsv")).lines().any(|l| l == "3\t0"));

    let edges = w.file("new.tsv", "0\t3\n");
    let out = linbp(&["update", "--state", &prefix, "--new-edges", &edges, "--verify"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(read(&w.path("state.edges.tsv")).lines().any(|l| l == "0\t3\t1"));
}

#[test]
fn update_with_unknown_node_exits_1() {
    let w = Work::new();
    let prefix = sbp_state(&w);
    let edges = w.file("new.tsv", "0\t99\n");
    assert_eq!(code(&linbp(&["update", "--state", &prefix, "--new-edges", &edges])), 1);
    let missing = w.prefix("nowhere");
    let delta = w.file("d.tsv", "3\t0\t0.05\n3\t1\t-0.05\n");
    assert_eq!(code(&linbp(&["update", "--state", &missing, "--new-beliefs", &delta])), 1);
}

#[test]
fn update_detects_a_tampered_state() {
    let w = Work::new();
    let prefix = sbp_state(&w);
    let path = w.path("state.beliefs.tsv");
    let text = read(&path);
    let tampered: String = text
        .lines()
        .map(|l| if l.starts_with("5\t0\t") { "5\t0\t1".to_owned() } else { l.to_owned() })
        .collect::<Vec<_>>()
        .join("\n");
    fs::write(&path, tampered + "\n").unwrap();
    let delta = w.file("d.tsv", "7\t0\t0.05\n7\t1\t-0.05\n");
    let out = linbp(&["update", "--state", &prefix, "--new-beliefs", &delta, "--verify"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn single_point_sbp_sweep() {
    let w = Work::new();
    let (g, e, h) = w.torus();
    let out = linbp(&[
        "sweep", "--graph", &g, "--beliefs", &e, "--coupling", &h, "--eps-log-grid", "0.01,0.01,1", "--methods", "sbp",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&String::from_utf8_lossy(&out.stdout));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][1], "sbp");
}

#[test]
fn sweep_across_the_threshold_flips_once() {
    let w = Work::new();
    let (g, _, h) = w.torus();
    let e = w.file("one.tsv", ONE_BELIEF);
    let prefix = w.prefix("sw");
    let out = linbp(&[
        "sweep", "--graph", &g, "--beliefs", &e, "--coupling", &h, "--eps-log-grid", "0.1,2,12", "--methods", "linbp",
        "--gt", "linbp", "--max-iters", "5000", "--out", &prefix,
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&read(&w.path("sw.sweep.csv")));
    assert_eq!(rows.len(), 12);
    let flags: Vec<bool> = rows.iter().map(|r| r[2] == "true").collect();
    let flips = flags.windows(2).filter(|p| p[0] != p[1]).count();
    assert_eq!(flips, 1, "{flags:?}");
    assert!(flags[0] && !flags[11]);
    let last_ok = rows.iter().filter(|r| r[2] == "true").map(|r| r[0].parse::<f64>().unwrap()).fold(0.0, f64::max);
    let first_bad = rows.iter().filter(|r| r[2] == "false").map(|r| r[0].parse::<f64>().unwrap()).fold(f64::MAX, f64::min);
    assert!(last_ok < 0.488 && 0.488 < first_bad);
    assert!(rows.iter().filter(|r| r[2] == "false").all(|r| r[4].is_empty()));
    assert!(w.path("sw.aggregates.csv").exists());
}

#[test]
fn every_text_output_has_a_config_header() {
    let w = Work::new();
    sbp_state(&w);
    for f in ["state.beliefs.tsv", "state.geodesic.tsv", "state.explicit.tsv", "state.edges.tsv", "state.top.tsv"] {
        assert!(read(&w.path(f)).starts_with("# config: "), "{f}");
    }
}

#[test]
fn single_threaded_runs_are_reproducible() {
    let w = Work::new();
    let (g, e, h) = w.torus();
    for name in ["a", "b"] {
        let prefix = w.prefix("out");
        linbp(&["run", "--method", "bp", "--graph", &g, "--beliefs", &e, "--coupling", &h, "--epsilon-h", "0.2", "--out", &prefix]);
        fs::rename(w.path("out.beliefs.tsv"), w.path(&format!("{name}.tsv"))).unwrap();
    }
    assert_eq!(read(&w.path("a.tsv")), read(&w.path("b.tsv")));
}
