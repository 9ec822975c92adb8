use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use jobsignal_core::records::{read_jsonl, write_jsonl, FlatParams};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Stage;
use crate::PipelineError;

/// Version written into every JSON artifact envelope.
pub const SCHEMA_VERSION: u32 = 1;

pub const APPLICATIONS: &str = "applications.jsonl";
pub const HIDDEN: &str = "hidden.jsonl";
pub const TRUTH: &str = "truth.params";
pub const MEASURED: &str = "measured.jsonl";
pub const CONSIDERED: &str = "considered.jsonl";
pub const CONSIDERATION: &str = "consideration.json";
pub const SIGNAL_SIDE: &str = "signal_side.json";
pub const REDUCED: &str = "reduced.params";
pub const REDUCED_FIT: &str = "reduced_fit.json";
pub const BID_SIGNAL: &str = "bid_signal.json";
pub const POOL: &str = "pool.json";
pub const TYPES: &str = "types.jsonl";
pub const INVERSION: &str = "inversion.json";
pub const BELIEFS: &str = "beliefs.json";
pub const STRUCTURAL: &str = "structural.params";
pub const STRUCTURAL_FIT: &str = "structural_fit.json";
pub const COUNTERFACTUAL: &str = "counterfactual.json";
pub const OUTCOMES: &str = "outcomes.csv";
pub const REPORT_DIR: &str = "report";
pub const MANIFEST: &str = "manifest.jsonl";

/// Stage that writes a given artifact, for error messages.
pub fn producer(name: &str) -> Option<Stage> {
    Some(match name {
        APPLICATIONS | HIDDEN | TRUTH => Stage::Simulate,
        MEASURED => Stage::Measure,
        CONSIDERED | CONSIDERATION => Stage::Consider,
        SIGNAL_SIDE | REDUCED | REDUCED_FIT => Stage::FitReduced,
        BID_SIGNAL => Stage::FitCopula,
        POOL => Stage::BuildPool,
        TYPES | INVERSION => Stage::InvertSupply,
        BELIEFS => Stage::FitBeliefs,
        STRUCTURAL | STRUCTURAL_FIT => Stage::FitDemand,
        COUNTERFACTUAL | OUTCOMES => Stage::Counterfactual,
        _ => return None,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema: String,
    pub version: u32,
    pub seed: u64,
    pub data: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub stage: Stage,
    pub seed: u64,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub wall_ms: u128,
}

pub fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Reads and writes artifacts in one output directory, tracking what a
/// stage touched for its manifest line.
pub struct Workspace {
    pub dir: PathBuf,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl Workspace {
    pub fn new(dir: &Path) -> Result<Self, PipelineError> {
        fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), inputs: Vec::new(), outputs: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Records `path` as an input, failing with the producing stage named
    /// when it is absent.
    pub fn require(&mut self, path: PathBuf) -> Result<PathBuf, PipelineError> {
        if !path.is_file() {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            return Err(PipelineError::MissingArtifact { path: path.clone(), producer: producer(name) });
        }
        self.inputs.push(path.clone());
        Ok(path)
    }

    pub fn input(&mut self, name: &str) -> Result<PathBuf, PipelineError> {
        self.require(self.path(name))
    }

    fn output(&mut self, name: &str) -> Result<PathBuf, PipelineError> {
        let p = self.path(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
        }
        self.outputs.push(p.clone());
        Ok(p)
    }

    pub fn read_records<T: DeserializeOwned>(&mut self, name: &str) -> Result<Vec<T>, PipelineError> {
        let p = self.input(name)?;
        read_records(&p)
    }

    pub fn write_records<T: Serialize>(&mut self, name: &str, items: &[T]) -> Result<(), PipelineError> {
        let p = self.output(name)?;
        let f = File::create(&p).map_err(|e| PipelineError::io(&p, e))?;
        write_jsonl(BufWriter::new(f), items).map_err(|e| PipelineError::at(&p, e))
    }

    pub fn read_json<T: DeserializeOwned>(&mut self, name: &str, schema: &str) -> Result<T, PipelineError> {
        let p = self.input(name)?;
        let text = fs::read_to_string(&p).map_err(|e| PipelineError::io(&p, e))?;
        let env: Envelope<T> =
            serde_json::from_str(&text).map_err(|e| PipelineError::Schema { path: p.clone(), message: e.to_string() })?;
        if env.schema != schema || env.version != SCHEMA_VERSION {
            return Err(PipelineError::Schema {
                path: p,
                message: format!(
                    "expected schema `{schema}` v{SCHEMA_VERSION}, found `{}` v{}",
                    env.schema, env.version
                ),
            });
        }
        Ok(env.data)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, schema: &str, seed: u64, data: &T) -> Result<(), PipelineError> {
        let p = self.output(name)?;
        let env = Envelope { schema: schema.to_string(), version: SCHEMA_VERSION, seed, data };
        let mut text = serde_json::to_string_pretty(&env).map_err(|e| PipelineError::at(&p, e))?;
        text.push('\n');
        fs::write(&p, text).map_err(|e| PipelineError::io(&p, e))
    }

    pub fn read_params(&mut self, name: &str) -> Result<FlatParams, PipelineError> {
        let p = self.input(name)?;
        let text = fs::read_to_string(&p).map_err(|e| PipelineError::io(&p, e))?;
        FlatParams::parse(&text).map_err(|e| PipelineError::at(&p, e))
    }

    pub fn write_params(&mut self, name: &str, header: &str, params: &FlatParams) -> Result<(), PipelineError> {
        let p = self.output(name)?;
        let text = format!("# {header}\n{}", params.to_text());
        fs::write(&p, text).map_err(|e| PipelineError::io(&p, e))
    }

    /// A CSV writer for `name`, registered as an output.
    pub fn csv(&mut self, name: &str) -> Result<csv::Writer<File>, PipelineError> {
        let p = self.output(name)?;
        csv::Writer::from_path(&p).map_err(|e| PipelineError::at(&p, e))
    }

    pub fn manifest_entry(&self, stage: Stage, seed: u64, wall_ms: u128) -> Result<ManifestEntry, PipelineError> {
        let hash = |ps: &[PathBuf]| -> Result<Vec<FileHash>, PipelineError> {
            let mut v: Vec<FileHash> = ps
                .iter()
                .map(|p| {
                    let rel = p.strip_prefix(&self.dir).unwrap_or(p);
                    Ok(FileHash { path: rel.display().to_string(), sha256: sha256_file(p)? })
                })
                .collect::<Result<_, PipelineError>>()?;
            v.sort_by(|a, b| a.path.cmp(&b.path));
            v.dedup();
            Ok(v)
        };
        Ok(ManifestEntry { stage, seed, inputs: hash(&self.inputs)?, outputs: hash(&self.outputs)?, wall_ms })
    }

    pub fn append_manifest(&self, entry: &ManifestEntry) -> Result<(), PipelineError> {
        let p = self.path(MANIFEST);
        let mut f = fs::OpenOptions::new().create(true).append(true).open(&p).map_err(|e| PipelineError::io(&p, e))?;
        let line = serde_json::to_string(entry).map_err(|e| PipelineError::at(&p, e))?;
        writeln!(f, "{line}").map_err(|e| PipelineError::io(&p, e))
    }
}

pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let f = File::open(path).map_err(|e| PipelineError::io(path, e))?;
    read_jsonl(BufReader::new(f)).map_err(|e| PipelineError::at(path, e))
}
