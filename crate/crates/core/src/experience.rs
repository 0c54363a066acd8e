//! The self-evolving experience base.
//!
//! An append-only store of [`StepRecord`]s with role and tool indices. Whole
//! trajectories are committed atomically; readers work on immutable
//! [`KbSnapshot`]s, so a commit never disturbs an in-flight route call.
//!
//! The persisted form is UTF-8 JSON Lines: one record per line, keys equal to
//! the record field names.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::embedding::{cosine_slices, DimensionMismatch};
use crate::types::{
    validate_record, EmbeddingVector, InvalidRecord, ModelId, RoleId, StepRecord, ToolId,
    SCHEMA_VERSION,
};

#[derive(Debug, Error)]
pub enum KbError {
    #[error(transparent)]
    InvalidRecord(#[from] InvalidRecord),
    #[error("duplicate record id `{0}`")]
    DuplicateRecordId(String),
    #[error("trajectory mixes episodes `{expected}` and `{found}`")]
    EpisodeMismatch { expected: String, found: String },
    #[error("step indices must be contiguous from 0: position {position} has step_index {found}")]
    NonContiguousSteps { position: usize, found: u32 },
    #[error("line {0}: corrupt record")]
    CorruptLine(usize, #[source] Option<serde_json::Error>),
    #[error("line {0}: trailing partial line (interrupted write?)")]
    PartialTrailingLine(usize),
    #[error("line {line}: unsupported schema_version {version}")]
    UnsupportedSchemaVersion { line: usize, version: u64 },
    #[error(transparent)]
    Dimension(#[from] DimensionMismatch),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Default)]
struct KbState {
    dimension: usize,
    records: Vec<Arc<StepRecord>>,
    role_index: HashMap<RoleId, Vec<usize>>,
    tool_index: HashMap<ToolId, Vec<usize>>,
    ids: HashSet<String>,
    generation: u64,
}

/// Immutable view of the experience base at one generation.
#[derive(Debug, Clone)]
pub struct KbSnapshot(Arc<KbState>);

impl KbSnapshot {
    pub fn generation(&self) -> u64 {
        self.0.generation
    }

    pub fn len(&self) -> usize {
        self.0.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.records.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.0.dimension
    }

    pub fn records(&self) -> &[Arc<StepRecord>] {
        &self.0.records
    }

    pub fn record(&self, position: usize) -> &Arc<StepRecord> {
        &self.0.records[position]
    }

    /// Positions of records performed by `role`, ascending.
    pub fn role_positions(&self, role: &RoleId) -> &[usize] {
        self.0.role_index.get(role).map_or(&[], Vec::as_slice)
    }

    /// Positions of records whose tool set intersects `predicted`, ascending.
    pub fn tool_positions<'a>(
        &self,
        predicted: impl IntoIterator<Item = &'a ToolId>,
    ) -> Vec<usize> {
        let mut out: Vec<usize> = predicted
            .into_iter()
            .filter_map(|t| self.0.tool_index.get(t))
            .flatten()
            .copied()
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Positions of records with cosine similarity to `query` at or above `theta`.
    pub fn semantic_positions(
        &self,
        query: &EmbeddingVector,
        theta: f64,
    ) -> Result<Vec<usize>, DimensionMismatch> {
        if query.dimension() != self.0.dimension {
            return Err(DimensionMismatch {
                left: query.dimension(),
                right: self.0.dimension,
            });
        }
        let mut out = Vec::new();
        for (i, r) in self.0.records.iter().enumerate() {
            if cosine_slices(query.values(), r.embedding.values())? >= theta {
                out.push(i);
            }
        }
        Ok(out)
    }

    fn collect(&self, positions: &[usize]) -> Vec<Arc<StepRecord>> {
        positions
            .iter()
            .map(|&i| Arc::clone(&self.0.records[i]))
            .collect()
    }

    pub fn query_by_role(&self, role: &RoleId) -> Vec<Arc<StepRecord>> {
        self.collect(self.role_positions(role))
    }

    pub fn query_by_tools<'a>(
        &self,
        predicted: impl IntoIterator<Item = &'a ToolId>,
    ) -> Vec<Arc<StepRecord>> {
        self.collect(&self.tool_positions(predicted))
    }

    pub fn query_semantic(
        &self,
        query: &EmbeddingVector,
        theta: f64,
    ) -> Result<Vec<Arc<StepRecord>>, DimensionMismatch> {
        Ok(self.collect(&self.semantic_positions(query, theta)?))
    }

    /// Record counts per model.
    pub fn model_counts(&self) -> BTreeMap<ModelId, usize> {
        let mut out = BTreeMap::new();
        for r in &self.0.records {
            *out.entry(r.model.clone()).or_default() += 1;
        }
        out
    }

    /// Writes every record as one JSON line.
    pub fn persist<W: Write>(&self, mut writer: W) -> Result<(), KbError> {
        for r in &self.0.records {
            write_line(&mut writer, r)?;
        }
        writer.flush()?;
        Ok(())
    }
}

fn write_line<W: Write>(writer: &mut W, record: &StepRecord) -> io::Result<()> {
    serde_json::to_writer(&mut *writer, record).map_err(io::Error::other)?;
    writer.write_all(b"\n")
}

/// Canonical single-line encoding of a record (no trailing newline).
pub fn encode_record(record: &StepRecord) -> String {
    serde_json::to_string(record).expect("records always serialize")
}

#[derive(Debug)]
struct LogSink {
    path: PathBuf,
    file: File,
}

/// The experience base `K`.
#[derive(Debug)]
pub struct ExperienceBase {
    state: Arc<KbState>,
    sink: Option<LogSink>,
}

impl ExperienceBase {
    pub fn new(dimension: usize) -> Self {
        Self {
            state: Arc::new(KbState {
                dimension,
                ..KbState::default()
            }),
            sink: None,
        }
    }

    /// Opens (or creates) a file-backed base. Every later commit is appended
    /// and synced to the file before it becomes visible.
    pub fn open(path: impl AsRef<Path>, dimension: usize) -> Result<Self, KbError> {
        let path = path.as_ref();
        let mut kb = if path.exists() {
            Self::load(BufReader::new(File::open(path)?), dimension)?
        } else {
            Self::new(dimension)
        };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        kb.sink = Some(LogSink {
            path: path.to_owned(),
            file,
        });
        Ok(kb)
    }

    /// An in-memory copy sharing the current records; later commits to either
    /// side are not seen by the other.
    pub fn detached(&self) -> Self {
        Self {
            state: Arc::clone(&self.state),
            sink: None,
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.sink.as_ref().map(|s| s.path.as_path())
    }

    pub fn snapshot(&self) -> KbSnapshot {
        KbSnapshot(Arc::clone(&self.state))
    }

    pub fn generation(&self) -> u64 {
        self.state.generation
    }

    pub fn len(&self) -> usize {
        self.state.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.state.records.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.state.dimension
    }

    fn check_trajectory(&self, records: &[StepRecord]) -> Result<(), KbError> {
        let episode = &records[0].episode_id;
        let mut seen = HashSet::new();
        for (position, r) in records.iter().enumerate() {
            validate_record(r, self.state.dimension)?;
            if &r.episode_id != episode {
                return Err(KbError::EpisodeMismatch {
                    expected: episode.clone(),
                    found: r.episode_id.clone(),
                });
            }
            if r.step_index as usize != position {
                return Err(KbError::NonContiguousSteps {
                    position,
                    found: r.step_index,
                });
            }
            if self.state.ids.contains(&r.record_id) || !seen.insert(&r.record_id) {
                return Err(KbError::DuplicateRecordId(r.record_id.clone()));
            }
        }
        Ok(())
    }

    /// Commits one trajectory atomically and returns the new generation.
    /// An empty trajectory is a no-op.
    pub fn append_trajectory(&mut self, records: Vec<StepRecord>) -> Result<u64, KbError> {
        if records.is_empty() {
            return Ok(self.state.generation);
        }
        self.check_trajectory(&records)?;
        if let Some(sink) = &mut self.sink {
            append_durably(&mut sink.file, &records)?;
        }
        self.publish(records);
        Ok(self.state.generation)
    }

    fn publish(&mut self, records: Vec<StepRecord>) {
        let state = Arc::make_mut(&mut self.state);
        for r in records {
            let position = state.records.len();
            state
                .role_index
                .entry(r.role.clone())
                .or_default()
                .push(position);
            for t in &r.tools {
                state
                    .tool_index
                    .entry(t.clone())
                    .or_default()
                    .push(position);
            }
            state.ids.insert(r.record_id.clone());
            state.records.push(Arc::new(r));
        }
        state.generation += 1;
    }

    pub fn persist<W: Write>(&self, writer: W) -> Result<(), KbError> {
        self.snapshot().persist(writer)
    }

    /// Rebuilds a base from JSON Lines. Each run of records starting at
    /// `step_index == 0` counts as one committed trajectory.
    pub fn load<R: Read>(reader: R, dimension: usize) -> Result<Self, KbError> {
        let mut kb = Self::new(dimension);
        let mut reader = BufReader::new(reader);
        let mut pending: Vec<StepRecord> = Vec::new();
        let mut buf = Vec::new();
        let mut line_no = 0usize;
        loop {
            buf.clear();
            if reader.read_until(b'\n', &mut buf)? == 0 {
                break;
            }
            line_no += 1;
            if buf.last() != Some(&b'\n') {
                return Err(KbError::PartialTrailingLine(line_no));
            }
            let record = parse_line(&buf[..buf.len() - 1], line_no)?;
            if record.step_index == 0 && !pending.is_empty() {
                kb.append_trajectory(std::mem::take(&mut pending))?;
            }
            pending.push(record);
        }
        kb.append_trajectory(pending)?;
        Ok(kb)
    }
}

fn parse_line(bytes: &[u8], line: usize) -> Result<StepRecord, KbError> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| KbError::CorruptLine(line, Some(e)))?;
    match value
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
    {
        Some(v) if v > u64::from(SCHEMA_VERSION) => {
            return Err(KbError::UnsupportedSchemaVersion { line, version: v })
        }
        Some(_) => {}
        None => return Err(KbError::CorruptLine(line, None)),
    }
    serde_json::from_value(value).map_err(|e| KbError::CorruptLine(line, Some(e)))
}

fn append_durably(file: &mut File, records: &[StepRecord]) -> Result<(), KbError> {
    let start = file.seek(SeekFrom::End(0))?;
    let mut bytes = Vec::new();
    for r in records {
        write_line(&mut bytes, r)?;
    }
    let result = file.write_all(&bytes).and_then(|_| file.sync_data());
    if let Err(e) = result {
        // Roll back so the log never holds half a trajectory.
        let _ = file.set_len(start);
        return Err(e.into());
    }
    Ok(())
}
