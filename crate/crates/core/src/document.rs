//! JSON document format and JSON-lines corpus I/O.
//!
//! A document line looks like
//!
//! ```json
//! {"id": "doc-1", "source": "synthetic", "segments": ["..."], "root": NODE}
//! ```
//!
//! where `NODE = {"kind": "root"|"heading"|"text", "content": string,
//! "segments": [int], "children": [NODE]}`. The top-level `segments` array
//! (the raw segment texts) is optional; it is written by the chunker and makes
//! a gold line usable as a prediction input as well. Prediction inputs are
//! `{"id": string, "segments": [string]}`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::catalog::{CatalogError, CatalogNode, CatalogTree, NodeKind, Segment};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("schema error at {path}: {message}")]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

impl SchemaError {
    fn new(path: impl Into<String>, message: impl Into<String>) -> SchemaError {
        SchemaError { path: path.into(), message: message.into() }
    }
}

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed JSON: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("line {line}: {source}")]
    Schema { line: usize, source: SchemaError },
    #[error("document {id}: {reason}")]
    Segments { id: String, reason: String },
}

impl DocumentError {
    /// True for errors caused by file contents rather than the file system.
    pub fn is_schema(&self) -> bool {
        !matches!(self, DocumentError::Io(_))
    }
}

/// How strictly trees are checked on load.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    Strict,
    /// Accepts text nodes with children, as emitted by unconstrained decoding.
    AllowTextChildren,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub source: String,
    /// Raw segment texts in document order, when known.
    pub segments: Option<Vec<String>>,
    pub tree: CatalogTree,
}

#[derive(Serialize)]
struct NodeWire<'a> {
    kind: NodeKind,
    content: &'a str,
    segments: &'a [usize],
    children: Vec<NodeWire<'a>>,
}

impl<'a> From<&'a CatalogNode> for NodeWire<'a> {
    fn from(n: &'a CatalogNode) -> Self {
        NodeWire {
            kind: n.kind,
            content: &n.content,
            segments: &n.segments,
            children: n.children.iter().map(NodeWire::from).collect(),
        }
    }
}

#[derive(Serialize)]
struct DocumentWire<'a> {
    id: &'a str,
    source: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    segments: Option<&'a [String]>,
    root: NodeWire<'a>,
}

impl Document {
    pub fn new(id: impl Into<String>, source: impl Into<String>, tree: CatalogTree) -> Document {
        Document { id: id.into(), source: source.into(), segments: None, tree }
    }

    pub fn to_json(&self) -> String {
        let wire = DocumentWire {
            id: &self.id,
            source: &self.source,
            segments: self.segments.as_deref(),
            root: NodeWire::from(&self.tree.root),
        };
        serde_json::to_string(&wire).expect("document serialization cannot fail")
    }

    pub fn to_value(&self) -> Value {
        serde_json::from_str(&self.to_json()).expect("round-trip through JSON text")
    }

    pub fn from_value(value: &Value, mode: ParseMode) -> Result<Document, SchemaError> {
        let obj = value.as_object().ok_or_else(|| SchemaError::new("$", "expected an object"))?;
        let id = string_field(obj, "id", "$")?;
        let source = match obj.get("source") {
            None => String::new(),
            Some(v) => v
                .as_str()
                .ok_or_else(|| SchemaError::new("$.source", "expected a string"))?
                .to_owned(),
        };
        let segments = match obj.get("segments") {
            None | Some(Value::Null) => None,
            Some(v) => Some(string_array(v, "$.segments")?),
        };
        let root_value = obj.get("root").ok_or_else(|| SchemaError::new("$.root", "missing field"))?;
        let root = parse_node(root_value, "root")?;
        let tree = CatalogTree { root };
        tree.validate_structure(mode == ParseMode::AllowTextChildren)
            .map_err(|e| match e {
                CatalogError::InvalidTree { path, reason } => SchemaError::new(path, reason),
                other => SchemaError::new("root", other.to_string()),
            })?;
        Ok(Document { id, source, segments, tree })
    }

    pub fn parse(line: &str, mode: ParseMode) -> Result<Document, DocumentError> {
        let value: Value = serde_json::from_str(line).map_err(|e| DocumentError::Json { line: 1, source: e })?;
        Document::from_value(&value, mode).map_err(|e| DocumentError::Schema { line: 1, source: e })
    }

    /// The segment stream this document was built from.
    ///
    /// Uses the stored segment texts when present; otherwise each node must
    /// own exactly one segment, whose text is then the node content.
    pub fn segment_list(&self) -> Result<Vec<Segment>, DocumentError> {
        let fail = |reason: String| DocumentError::Segments { id: self.id.clone(), reason };
        if let Some(raw) = &self.segments {
            let segs = Segment::sequence(raw).map_err(|e| fail(e.to_string()))?;
            let covered = self.tree.segment_order().len();
            if covered != segs.len() {
                return Err(fail(format!("tree covers {covered} segments but {} are listed", segs.len())));
            }
            return Ok(segs);
        }
        let mut out = Vec::new();
        let mut err = None;
        self.tree.root.walk(0, &mut |node, depth| {
            if depth == 0 || err.is_some() {
                return;
            }
            if node.segments.len() != 1 {
                err = Some(fail(format!(
                    "node {:?} spans {} segments and no segment texts are stored",
                    node.content,
                    node.segments.len()
                )));
                return;
            }
            match Segment::new(node.segments[0], &node.content) {
                Ok(s) => out.push(s),
                Err(e) => err = Some(fail(e.to_string())),
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }
}

fn string_field(obj: &Map<String, Value>, key: &str, at: &str) -> Result<String, SchemaError> {
    let path = format!("{at}.{key}");
    match obj.get(key) {
        None => Err(SchemaError::new(path, "missing field")),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(SchemaError::new(path, "expected a string")),
    }
}

fn string_array(v: &Value, path: &str) -> Result<Vec<String>, SchemaError> {
    let arr = v.as_array().ok_or_else(|| SchemaError::new(path, "expected an array of strings"))?;
    arr.iter()
        .enumerate()
        .map(|(i, s)| {
            s.as_str()
                .map(str::to_owned)
                .ok_or_else(|| SchemaError::new(format!("{path}[{i}]"), "expected a string"))
        })
        .collect()
}

fn parse_node(v: &Value, path: &str) -> Result<CatalogNode, SchemaError> {
    let obj = v.as_object().ok_or_else(|| SchemaError::new(path, "expected a node object"))?;
    let kind_str = string_field(obj, "kind", path)?;
    let kind = NodeKind::parse(&kind_str)
        .ok_or_else(|| SchemaError::new(format!("{path}.kind"), format!("unknown node kind `{kind_str}`")))?;
    if path == "root" && kind != NodeKind::Root {
        return Err(SchemaError::new("root.kind", "top node must have kind root"));
    }
    let content = match obj.get("content") {
        None if kind == NodeKind::Root => String::new(),
        _ => string_field(obj, "content", path)?,
    };
    let segments = match obj.get("segments") {
        None if kind == NodeKind::Root => Vec::new(),
        None => return Err(SchemaError::new(format!("{path}.segments"), "missing field")),
        Some(Value::Array(arr)) => arr
            .iter()
            .enumerate()
            .map(|(i, x)| {
                x.as_u64()
                    .map(|n| n as usize)
                    .ok_or_else(|| SchemaError::new(format!("{path}.segments[{i}]"), "expected a non-negative integer"))
            })
            .collect::<Result<Vec<_>, _>>()?,
        Some(_) => return Err(SchemaError::new(format!("{path}.segments"), "expected an array")),
    };
    let children = match obj.get("children") {
        None => Vec::new(),
        Some(Value::Array(arr)) => arr
            .iter()
            .enumerate()
            .map(|(i, c)| parse_node(c, &format!("{path}.children[{i}]")))
            .collect::<Result<Vec<_>, _>>()?,
        Some(_) => return Err(SchemaError::new(format!("{path}.children"), "expected an array")),
    };
    Ok(CatalogNode { kind, content, segments, children })
}

/// A prediction input: raw segments of one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentStream {
    pub id: String,
    pub segments: Vec<String>,
}

impl SegmentStream {
    pub fn to_segments(&self) -> Result<Vec<Segment>, DocumentError> {
        Segment::sequence(&self.segments)
            .map_err(|e| DocumentError::Segments { id: self.id.clone(), reason: e.to_string() })
    }
}

fn read_lines<R: BufRead, T>(
    reader: R,
    mut parse: impl FnMut(usize, &str) -> Result<T, DocumentError>,
) -> Result<Vec<T>, DocumentError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse(i + 1, &line)?);
    }
    Ok(out)
}

pub fn read_documents<R: BufRead>(reader: R, mode: ParseMode) -> Result<Vec<Document>, DocumentError> {
    read_lines(reader, |line, text| {
        let value: Value = serde_json::from_str(text).map_err(|e| DocumentError::Json { line, source: e })?;
        Document::from_value(&value, mode).map_err(|e| DocumentError::Schema { line, source: e })
    })
}

pub fn read_streams<R: BufRead>(reader: R) -> Result<Vec<SegmentStream>, DocumentError> {
    read_lines(reader, |line, text| {
        serde_json::from_str(text).map_err(|e| DocumentError::Json { line, source: e })
    })
}

pub fn write_documents<W: Write>(mut writer: W, docs: &[Document]) -> std::io::Result<()> {
    for d in docs {
        writeln!(writer, "{}", d.to_json())?;
    }
    writer.flush()
}
