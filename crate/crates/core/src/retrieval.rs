//! Multi-faceted candidate retrieval and tool prediction.
//!
//! The candidate set is the union of three independent facets: records from
//! the same agent role, records whose instruction embedding is at least
//! `theta_sim` similar, and records whose tools intersect the predicted tools.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::embedding::{tokenize, DimensionMismatch};
use crate::experience::KbSnapshot;
use crate::types::{EmbeddingVector, RoleId, RouterConfig, StepRecord, ToolId};

/// The sub-task being routed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubTaskContext {
    pub role: RoleId,
    pub instruction: String,
    pub embedding: EmbeddingVector,
    pub episode_id: String,
    pub step_index: u32,
}

/// Facets that matched one candidate record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FacetTags {
    pub agent: bool,
    pub semantic: bool,
    pub tool: bool,
}

impl FacetTags {
    pub fn any(self) -> bool {
        self.agent || self.semantic || self.tool
    }
}

impl fmt::Display for FacetTags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [
            (self.agent, "Agent"),
            (self.semantic, "Semantic"),
            (self.tool, "Tool"),
        ]
        .into_iter()
        .filter_map(|(on, n)| on.then_some(n))
        .collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

/// Retrieved evidence for one routing decision. Records keep experience-base order.
#[derive(Debug, Clone, Default)]
pub struct CandidateSet {
    pub records: Vec<Arc<StepRecord>>,
    pub facet_tags: BTreeMap<String, FacetTags>,
    pub predicted_tools: BTreeSet<ToolId>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("tool predictor unavailable: {0}")]
    FallbackUnavailable(String),
}

/// Second-stage tool predictor consulted when no keyword fires.
pub trait ToolPredictor: Send + Sync {
    fn predict(&self, instruction: &str) -> Result<BTreeSet<ToolId>, PredictError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeywordTableError {
    #[error("line {line}: expected `keyword = tool`")]
    Syntax { line: usize },
    #[error("keyword `{0}` must be a single non-empty lowercase token")]
    BadKeyword(String),
    #[error("keyword `{0}` listed twice")]
    Duplicate(String),
    #[error("line {line}: empty tool name")]
    EmptyTool { line: usize },
}

/// Trigger keyword → tool dictionary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordTable(BTreeMap<String, ToolId>);

impl KeywordTable {
    pub fn new<K: Into<String>>(
        entries: impl IntoIterator<Item = (K, ToolId)>,
    ) -> Result<Self, KeywordTableError> {
        let mut map = BTreeMap::new();
        for (keyword, tool) in entries {
            let keyword = keyword.into();
            let single_token = tokenize(&keyword).eq(std::iter::once(keyword.clone()));
            if !single_token {
                return Err(KeywordTableError::BadKeyword(keyword));
            }
            if map.insert(keyword.clone(), tool).is_some() {
                return Err(KeywordTableError::Duplicate(keyword));
            }
        }
        Ok(Self(map))
    }

    /// Parses `keyword = tool` lines; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, KeywordTableError> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or(KeywordTableError::Syntax { line: i + 1 })?;
            let tool =
                ToolId::new(v.trim()).map_err(|_| KeywordTableError::EmptyTool { line: i + 1 })?;
            entries.push((k.trim().to_owned(), tool));
        }
        Self::new(entries)
    }

    pub fn get(&self, keyword: &str) -> Option<&ToolId> {
        self.0.get(keyword)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &ToolId)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Stage one: tools of every keyword that appears as a whole token.
    pub fn match_tools(&self, instruction: &str) -> BTreeSet<ToolId> {
        tokenize(instruction)
            .filter_map(|t| self.0.get(&t).cloned())
            .collect()
    }
}

impl Default for KeywordTable {
    fn default() -> Self {
        const WEB: &[&str] = &["search", "browse", "fetch", "google", "website", "lookup"];
        const CODE: &[&str] = &["run", "plot", "execute", "compute", "script", "calculate"];
        const FILE: &[&str] = &["read", "file", "pdf", "spreadsheet", "open"];
        let tool = |n: &str| ToolId::new(n).expect("static tool name");
        let entries = WEB
            .iter()
            .map(|k| (*k, tool("web_search")))
            .chain(CODE.iter().map(|k| (*k, tool("code_interpreter"))))
            .chain(FILE.iter().map(|k| (*k, tool("file_reader"))));
        Self::new(entries).expect("static table is valid")
    }
}

/// Two-stage tool prediction: keyword hits first, the fallback only when no
/// keyword fires. A failing fallback is logged and treated as no tools.
pub fn predict_tools(
    instruction: &str,
    table: &KeywordTable,
    fallback: Option<&dyn ToolPredictor>,
) -> BTreeSet<ToolId> {
    let hits = table.match_tools(instruction);
    if !hits.is_empty() {
        return hits;
    }
    match fallback.map(|p| p.predict(instruction)) {
        Some(Ok(tools)) => tools,
        Some(Err(e)) => {
            warn!(error = %e, "tool prediction fallback failed");
            BTreeSet::new()
        }
        None => BTreeSet::new(),
    }
}

/// Assembles the candidate set for `ctx` from one snapshot.
pub fn retrieve_candidates(
    ctx: &SubTaskContext,
    snapshot: &KbSnapshot,
    config: &RouterConfig,
    table: &KeywordTable,
    fallback: Option<&dyn ToolPredictor>,
) -> Result<CandidateSet, DimensionMismatch> {
    let facets = config.facets;
    let predicted_tools = if facets.tool {
        predict_tools(&ctx.instruction, table, fallback)
    } else {
        BTreeSet::new()
    };
    let mut tags: BTreeMap<usize, FacetTags> = BTreeMap::new();
    if facets.agent {
        for &i in snapshot.role_positions(&ctx.role) {
            tags.entry(i).or_default().agent = true;
        }
    }
    if facets.semantic {
        for i in snapshot.semantic_positions(&ctx.embedding, config.theta_sim)? {
            tags.entry(i).or_default().semantic = true;
        }
    }
    if facets.tool {
        for i in snapshot.tool_positions(&predicted_tools) {
            tags.entry(i).or_default().tool = true;
        }
    }
    let mut out = CandidateSet {
        predicted_tools,
        ..CandidateSet::default()
    };
    for (i, t) in tags {
        let record = Arc::clone(snapshot.record(i));
        out.facet_tags.insert(record.record_id.clone(), t);
        out.records.push(record);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::hash_embed;
    use crate::experience::ExperienceBase;
    use crate::types::fixtures::{record, unit};

    fn tool(n: &str) -> ToolId {
        ToolId::new(n).unwrap()
    }

    struct Stub;
    impl ToolPredictor for Stub {
        fn predict(&self, instruction: &str) -> Result<BTreeSet<ToolId>, PredictError> {
            if instruction.contains("summar") {
                Ok([tool("llm_only")].into())
            } else {
                Err(PredictError::FallbackUnavailable("offline".into()))
            }
        }
    }

    #[test]
    fn keyword_stage_examples() {
        let t = KeywordTable::default();
        assert_eq!(
            predict_tools("search for the latest report", &t, None),
            [tool("web_search")].into()
        );
        assert_eq!(
            predict_tools("run the script and plot results", &t, None),
            [tool("code_interpreter")].into()
        );
        assert!(predict_tools("summarize the paragraph", &t, None).is_empty());
    }

    #[test]
    fn whole_token_matching_only() {
        let t = KeywordTable::default();
        assert!(predict_tools("research the topic", &t, None).is_empty());
        assert_eq!(
            predict_tools("SEARCH!", &t, None),
            [tool("web_search")].into()
        );
    }

    #[test]
    fn fallback_fires_only_without_keyword_hits() {
        let t = KeywordTable::default();
        assert_eq!(
            predict_tools("summarize the paragraph", &t, Some(&Stub)),
            [tool("llm_only")].into()
        );
        assert_eq!(
            predict_tools("search and summarize", &t, Some(&Stub)),
            [tool("web_search")].into()
        );
        assert!(predict_tools("translate this", &t, Some(&Stub)).is_empty());
    }

    #[test]
    fn table_parsing() {
        let t =
            KeywordTable::parse("# tools\nsearch = web_search\n\nplot = code_interpreter # viz\n")
                .unwrap();
        assert_eq!(t.get("plot"), Some(&tool("code_interpreter")));
        assert_eq!(
            KeywordTable::parse("nonsense"),
            Err(KeywordTableError::Syntax { line: 1 })
        );
        assert!(matches!(
            KeywordTable::parse("Search = web_search"),
            Err(KeywordTableError::BadKeyword(_))
        ));
        assert!(matches!(
            KeywordTable::parse("a = x\na = y"),
            Err(KeywordTableError::Duplicate(_))
        ));
        assert_eq!(
            KeywordTable::parse("a = "),
            Err(KeywordTableError::EmptyTool { line: 1 })
        );
    }

    #[test]
    fn one_facet_each() {
        const DIM: usize = 4;
        let mut kb = ExperienceBase::new(DIM);
        let mut r1 = record("e", 0, "coder", "m1", DIM);
        r1.embedding = unit(DIM, 3);
        let mut r2 = record("e", 1, "planner", "m2", DIM);
        // cos = 0.9 against the query e_0.
        r2.embedding = EmbeddingVector::new(vec![0.9, (1.0f64 - 0.81).sqrt(), 0.0, 0.0]).unwrap();
        let mut r3 = record("e", 2, "web", "m3", DIM);
        r3.embedding = unit(DIM, 2);
        r3.tools.insert(tool("web_search"));
        kb.append_trajectory(vec![r1, r2, r3]).unwrap();

        let ctx = SubTaskContext {
            role: RoleId::new("coder").unwrap(),
            instruction: "search the web".into(),
            embedding: unit(DIM, 0),
            episode_id: "q".into(),
            step_index: 0,
        };
        let cand = retrieve_candidates(
            &ctx,
            &kb.snapshot(),
            &RouterConfig::default(),
            &KeywordTable::default(),
            None,
        )
        .unwrap();
        assert_eq!(cand.len(), 3);
        let tag = |id: &str| cand.facet_tags[id];
        assert_eq!(
            tag("e/0"),
            FacetTags {
                agent: true,
                ..Default::default()
            }
        );
        assert_eq!(
            tag("e/1"),
            FacetTags {
                semantic: true,
                ..Default::default()
            }
        );
        assert_eq!(
            tag("e/2"),
            FacetTags {
                tool: true,
                ..Default::default()
            }
        );
        assert_eq!(tag("e/2").to_string(), "{Tool}");

        let cfg = RouterConfig {
            facets: crate::types::FacetMask::SEMANTIC_ONLY,
            ..RouterConfig::default()
        };
        let sem = retrieve_candidates(&ctx, &kb.snapshot(), &cfg, &KeywordTable::default(), None)
            .unwrap();
        assert_eq!(sem.len(), 1);
        assert!(sem.predicted_tools.is_empty());
    }

    #[test]
    fn empty_base_gives_empty_candidates() {
        let kb = ExperienceBase::new(8);
        let ctx = SubTaskContext {
            role: RoleId::new("coder").unwrap(),
            instruction: "run it".into(),
            embedding: hash_embed("run it", 8),
            episode_id: "q".into(),
            step_index: 0,
        };
        let cand = retrieve_candidates(
            &ctx,
            &kb.snapshot(),
            &RouterConfig::default(),
            &KeywordTable::default(),
            None,
        )
        .unwrap();
        assert!(cand.is_empty());
        assert_eq!(cand.predicted_tools, [tool("code_interpreter")].into());
    }
}
