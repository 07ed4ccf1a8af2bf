//! Contrastive prompt construction.
//!
//! A prompt is rendered from a versioned template with two placeholders:
//! `{SIMILAR_BLOCK}` receives the retrieved nearest-neighbor coordinates
//! (nearest first) and `{DISSIMILAR_BLOCK}` the farthest ones (farthest
//! first), one "lat, lon" line each with six fractional digits. Embedding
//! distances never appear in the text; the model only sees locations.
//!
//! Templates are registered by id so every run's provenance can cite the
//! exact wording. The default template ships embedded in the binary; a
//! template directory can override it or add new ids (file stem = id).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geodesy::GeoCoord;
use crate::vecstore::Neighbor;

pub const DEFAULT_TEMPLATE_ID: &str = "contrastive-v1";
pub const DEFAULT_K_SIMILAR: usize = 16;
pub const DEFAULT_K_DISSIMILAR: usize = 16;

const SIMILAR_PLACEHOLDER: &str = "{SIMILAR_BLOCK}";
const DISSIMILAR_PLACEHOLDER: &str = "{DISSIMILAR_BLOCK}";
/// Rendered in place of an empty neighbor list; contains no digits so it
/// can never be mistaken for a coordinate.
const EMPTY_BLOCK: &str = "(none)";

const DEFAULT_TEMPLATE_BODY: &str = include_str!("../templates/contrastive-v1.txt");

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("unknown template id {0:?}")]
    UnknownTemplate(String),
    #[error("image attachment is empty")]
    EmptyImage,
    #[error("template {id:?} must contain {placeholder} exactly once, found {count} occurrences")]
    PlaceholderCount {
        id: String,
        placeholder: &'static str,
        count: usize,
    },
    #[error("k_similar and k_dissimilar must be at least 1")]
    ZeroK,
    #[error("{list} list holds {got} neighbors, cap is {cap}")]
    TooManyNeighbors {
        list: &'static str,
        got: usize,
        cap: usize,
    },
    #[error("{0} list is not ordered correctly")]
    BadOrdering(&'static str),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Image bytes plus the metadata the wire protocol needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageAttachment {
    pub bytes: Vec<u8>,
    /// MIME type, e.g. "image/jpeg".
    pub media_type: String,
    pub image_id: String,
}

/// A rendered prompt ready for the model.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub text: String,
    pub image: ImageAttachment,
    pub template_id: String,
}

/// Validated retrieval lists feeding one prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    similar: Vec<Neighbor>,
    dissimilar: Vec<Neighbor>,
    k_similar: usize,
    k_dissimilar: usize,
}

impl RetrievalResult {
    /// Wraps retrieval output, checking caps and orderings: `similar` must
    /// be ascending in distance (ties ascending id), `dissimilar`
    /// descending (ties ascending id). Either list may be shorter than its
    /// cap, including empty.
    pub fn new(
        similar: Vec<Neighbor>,
        dissimilar: Vec<Neighbor>,
        k_similar: usize,
        k_dissimilar: usize,
    ) -> Result<RetrievalResult, PromptError> {
        if k_similar == 0 || k_dissimilar == 0 {
            return Err(PromptError::ZeroK);
        }
        if similar.len() > k_similar {
            return Err(PromptError::TooManyNeighbors {
                list: "similar",
                got: similar.len(),
                cap: k_similar,
            });
        }
        if dissimilar.len() > k_dissimilar {
            return Err(PromptError::TooManyNeighbors {
                list: "dissimilar",
                got: dissimilar.len(),
                cap: k_dissimilar,
            });
        }
        let ascending = |a: &Neighbor, b: &Neighbor| {
            a.distance < b.distance || (a.distance == b.distance && a.id < b.id)
        };
        if similar.windows(2).any(|w| !ascending(&w[0], &w[1])) {
            return Err(PromptError::BadOrdering("similar"));
        }
        let descending = |a: &Neighbor, b: &Neighbor| {
            a.distance > b.distance || (a.distance == b.distance && a.id < b.id)
        };
        if dissimilar.windows(2).any(|w| !descending(&w[0], &w[1])) {
            return Err(PromptError::BadOrdering("dissimilar"));
        }
        Ok(RetrievalResult {
            similar,
            dissimilar,
            k_similar,
            k_dissimilar,
        })
    }

    /// Both lists capped at the default depth of 16 each.
    pub fn with_default_k(
        similar: Vec<Neighbor>,
        dissimilar: Vec<Neighbor>,
    ) -> Result<RetrievalResult, PromptError> {
        RetrievalResult::new(similar, dissimilar, DEFAULT_K_SIMILAR, DEFAULT_K_DISSIMILAR)
    }

    pub fn similar(&self) -> &[Neighbor] {
        &self.similar
    }

    pub fn dissimilar(&self) -> &[Neighbor] {
        &self.dissimilar
    }

    pub fn k_similar(&self) -> usize {
        self.k_similar
    }

    pub fn k_dissimilar(&self) -> usize {
        self.k_dissimilar
    }
}

/// One coordinate as it appears in prompt text: six fractional digits,
/// "lat, lon" order.
pub fn render_coord_line(coord: GeoCoord) -> String {
    format!("{:.6}, {:.6}", coord.lat(), coord.lon())
}

/// Registered prompt templates, keyed by id.
pub struct TemplateRegistry {
    templates: BTreeMap<String, String>,
}

impl TemplateRegistry {
    /// Registry holding only the embedded default template.
    pub fn builtin() -> TemplateRegistry {
        let mut registry = TemplateRegistry {
            templates: BTreeMap::new(),
        };
        registry
            .register(DEFAULT_TEMPLATE_ID, DEFAULT_TEMPLATE_BODY)
            .expect("embedded template is well-formed");
        registry
    }

    /// Adds or replaces a template after checking that each placeholder
    /// appears exactly once.
    pub fn register(&mut self, id: &str, body: &str) -> Result<(), PromptError> {
        for placeholder in [SIMILAR_PLACEHOLDER, DISSIMILAR_PLACEHOLDER] {
            let count = body.matches(placeholder).count();
            if count != 1 {
                return Err(PromptError::PlaceholderCount {
                    id: id.to_string(),
                    placeholder,
                    count,
                });
            }
        }
        self.templates.insert(id.to_string(), body.to_string());
        Ok(())
    }

    /// Registers every `*.txt` file in `dir` under its file stem,
    /// overriding embedded templates with the same id. Returns how many
    /// templates were loaded.
    pub fn load_dir(&mut self, dir: &Path) -> Result<usize, PromptError> {
        let io_err = |path: &Path, source| PromptError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut loaded = 0;
        let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| io_err(dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|path| path.extension().is_some_and(|ext| ext == "txt"))
            .collect();
        entries.sort();
        for path in entries {
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let body = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
            self.register(stem, &body)?;
            loaded += 1;
        }
        Ok(loaded)
    }

    pub fn get(&self, id: &str) -> Option<&str> {
        self.templates.get(id).map(String::as_str)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    /// Renders the prompt for one query.
    ///
    /// The text is a pure function of the retrieval lists and template:
    /// identical inputs produce byte-identical prompts. Empty neighbor
    /// lists render a digit-free marker, so the text always contains
    /// exactly `similar + dissimilar` coordinate pairs.
    pub fn build_prompt(
        &self,
        image: ImageAttachment,
        retrieval: &RetrievalResult,
        template_id: &str,
    ) -> Result<PromptBundle, PromptError> {
        let template = self
            .get(template_id)
            .ok_or_else(|| PromptError::UnknownTemplate(template_id.to_string()))?;
        if image.bytes.is_empty() {
            return Err(PromptError::EmptyImage);
        }
        let text = template
            .replacen(SIMILAR_PLACEHOLDER, &render_block(&retrieval.similar), 1)
            .replacen(
                DISSIMILAR_PLACEHOLDER,
                &render_block(&retrieval.dissimilar),
                1,
            );
        Ok(PromptBundle {
            text,
            image,
            template_id: template_id.to_string(),
        })
    }
}

fn render_block(neighbors: &[Neighbor]) -> String {
    if neighbors.is_empty() {
        return EMPTY_BLOCK.to_string();
    }
    let mut block = String::new();
    for (i, neighbor) in neighbors.iter().enumerate() {
        if i > 0 {
            block.push('\n');
        }
        let _ = write!(block, "{}", render_coord_line(neighbor.coord));
    }
    block
}
