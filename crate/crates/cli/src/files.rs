use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use linbp_core::beliefs::read_beliefs;
use linbp_core::graph::load_edge_list;
use linbp_core::{Adjacency, BeliefMatrix, BeliefMode, CouplingMatrix, Graph};
use serde::Serialize;

/// `<prefix><suffix>`, e.g. `out/run` + `.beliefs.tsv`.
pub fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = prefix.as_os_str().to_owned();
    s.push(suffix);
    s.into()
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

pub fn load_graph(path: &Path) -> Result<Graph> {
    load_edge_list(open(path)?, false).with_context(|| format!("reading graph {}", path.display()))
}

pub fn load_coupling(path: &Path) -> Result<CouplingMatrix> {
    CouplingMatrix::read(open(path)?).with_context(|| format!("reading coupling {}", path.display()))
}

pub fn load_beliefs(path: &Path, g: &Graph, k: usize, mode: BeliefMode) -> Result<BeliefMatrix> {
    read_beliefs(open(path)?, g.node_count(), k, g.labels(), mode).with_context(|| format!("reading beliefs {}", path.display()))
}

/// The serialized command line that heads every output.
#[derive(Serialize)]
pub struct Config<'a, T: Serialize> {
    pub command: &'a str,
    #[serde(flatten)]
    pub args: &'a T,
}

impl<T: Serialize> Config<'_, T> {
    pub fn json(&self) -> String {
        serde_json::to_string(self).expect("arguments serialize")
    }
}

/// A text output that starts with `# config: {...}`.
pub struct Output {
    path: PathBuf,
    w: BufWriter<File>,
}

impl Output {
    pub fn create(path: PathBuf, config: &str) -> Result<Self> {
        let f = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut w = BufWriter::new(f);
        writeln!(w, "# config: {config}")?;
        Ok(Output { path, w })
    }

    pub fn writer(&mut self) -> &mut BufWriter<File> {
        &mut self.w
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush().with_context(|| format!("writing {}", self.path.display()))
    }
}

pub fn write_json<T: Serialize>(path: PathBuf, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn set_threads(threads: usize) -> Result<bool> {
    anyhow::ensure!(threads >= 1, "--threads must be at least 1");
    if threads > 1 {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    Ok(threads > 1)
}
