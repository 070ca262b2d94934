//! Catalog trees, input segments, transition actions and the state they mutate.
//!
//! A catalog tree is a rooted ordered tree whose non-root nodes are either
//! headings or body texts. Texts are always leaves; headings may or may not
//! have children. Every non-root node remembers which input segments were
//! merged into its content, so a tree always linearizes back to the segment
//! stream it was built from.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CatalogError {
    #[error("action {action} is not legal when the focus is a {focus} node")]
    IllegalAction { action: Action, focus: NodeKind },
    #[error("action {0} requires an input segment")]
    MissingInput(Action),
    #[error("invalid segment #{index}: {reason}")]
    InvalidSegment { index: usize, reason: String },
    #[error("invalid tree at {path}: {reason}")]
    InvalidTree { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Root,
    Heading,
    Text,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Root => "root",
            NodeKind::Heading => "heading",
            NodeKind::Text => "text",
        }
    }

    pub fn parse(s: &str) -> Option<NodeKind> {
        match s {
            "root" => Some(NodeKind::Root),
            "heading" => Some(NodeKind::Heading),
            "text" => Some(NodeKind::Text),
            _ => None,
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the contents of two merged segments are glued together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Joiner {
    /// Plain concatenation, for scripts without word separators.
    #[default]
    None,
    /// A single ASCII space between pieces.
    Space,
}

impl Joiner {
    pub fn join(self, head: &str, tail: &str) -> String {
        let mut joined = String::with_capacity(head.len() + tail.len() + 1);
        joined.push_str(head);
        self.append(&mut joined, tail);
        joined
    }

    pub fn append(self, buf: &mut String, piece: &str) {
        if !buf.is_empty() && self == Joiner::Space {
            buf.push(' ');
        }
        buf.push_str(piece);
    }

    pub fn join_all<'a, I: IntoIterator<Item = &'a str>>(self, pieces: I) -> String {
        let mut out = String::new();
        for p in pieces {
            self.append(&mut out, p);
        }
        out
    }
}

impl std::str::FromStr for Joiner {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" | "" => Ok(Joiner::None),
            "space" => Ok(Joiner::Space),
            other => Err(format!("unknown joiner `{other}` (expected none|space)")),
        }
    }
}

/// One input text piece, in document order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub index: usize,
    pub text: String,
}

impl Segment {
    /// Builds a segment, folding line breaks into single spaces and trimming.
    pub fn new(index: usize, raw: &str) -> Result<Segment, CatalogError> {
        let text = normalize_segment_text(raw);
        if text.is_empty() {
            return Err(CatalogError::InvalidSegment {
                index,
                reason: "segment text is empty after trimming".into(),
            });
        }
        Ok(Segment { index, text })
    }

    /// Builds a contiguous, 0-based segment list from raw strings.
    pub fn sequence<S: AsRef<str>>(raw: &[S]) -> Result<Vec<Segment>, CatalogError> {
        raw.iter()
            .enumerate()
            .map(|(i, s)| Segment::new(i, s.as_ref()))
            .collect()
    }
}

pub fn normalize_segment_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut in_break = false;
    for ch in raw.chars() {
        if matches!(ch, '\n' | '\r' | '\u{2028}' | '\u{2029}' | '\u{85}') {
            if !in_break {
                out.push(' ');
            }
            in_break = true;
        } else {
            in_break = false;
            out.push(ch);
        }
    }
    out.trim().to_owned()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatalogNode {
    pub kind: NodeKind,
    pub content: String,
    /// Indices of the segments merged into `content`, in order.
    pub segments: Vec<usize>,
    pub children: Vec<CatalogNode>,
}

impl CatalogNode {
    pub fn root() -> CatalogNode {
        CatalogNode {
            kind: NodeKind::Root,
            content: String::new(),
            segments: Vec::new(),
            children: Vec::new(),
        }
    }

    pub fn heading(content: impl Into<String>, segments: Vec<usize>) -> CatalogNode {
        CatalogNode {
            kind: NodeKind::Heading,
            content: content.into(),
            segments,
            children: Vec::new(),
        }
    }

    pub fn text(content: impl Into<String>, segments: Vec<usize>) -> CatalogNode {
        CatalogNode {
            kind: NodeKind::Text,
            content: content.into(),
            segments,
            children: Vec::new(),
        }
    }

    pub fn with_children(mut self, children: Vec<CatalogNode>) -> CatalogNode {
        self.children = children;
        self
    }

    /// Number of nodes in this subtree, including `self`.
    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(CatalogNode::node_count).sum::<usize>()
    }

    /// Height of this subtree counted in nodes (a leaf has height 1).
    pub fn height(&self) -> usize {
        1 + self.children.iter().map(CatalogNode::height).max().unwrap_or(0)
    }

    /// Pre-order walk with the depth of each node (`self` at `depth`).
    pub fn walk<'a>(&'a self, depth: usize, visit: &mut dyn FnMut(&'a CatalogNode, usize)) {
        visit(self, depth);
        for child in &self.children {
            child.walk(depth + 1, visit);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatalogTree {
    pub root: CatalogNode,
}

impl Default for CatalogTree {
    fn default() -> Self {
        CatalogTree::new()
    }
}

impl CatalogTree {
    pub fn new() -> CatalogTree {
        CatalogTree { root: CatalogNode::root() }
    }

    pub fn from_children(children: Vec<CatalogNode>) -> CatalogTree {
        CatalogTree { root: CatalogNode::root().with_children(children) }
    }

    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }

    pub fn node_at(&self, path: &[usize]) -> Option<&CatalogNode> {
        let mut node = &self.root;
        for &i in path {
            node = node.children.get(i)?;
        }
        Some(node)
    }

    fn node_at_mut(&mut self, path: &[usize]) -> Option<&mut CatalogNode> {
        let mut node = &mut self.root;
        for &i in path {
            node = node.children.get_mut(i)?;
        }
        Some(node)
    }

    /// Pre-order list of `(level, type, content)` tuples; the root is
    /// skipped and its children sit at level 1.
    pub fn flatten(&self) -> Vec<EvalTuple> {
        let mut out = Vec::with_capacity(self.node_count().saturating_sub(1));
        self.root.walk(0, &mut |node, depth| {
            if depth > 0 {
                out.push(EvalTuple {
                    level: depth,
                    kind: node.kind,
                    content: node.content.clone(),
                });
            }
        });
        out
    }

    /// All segment indices in pre-order.
    pub fn segment_order(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.root.walk(0, &mut |node, _| out.extend_from_slice(&node.segments));
        out
    }

    /// Checks every structural invariant of a catalog tree.
    pub fn validate(&self) -> Result<(), CatalogError> {
        self.validate_structure(false)
    }

    /// Like [`validate`](Self::validate), optionally tolerating text nodes
    /// with children (produced only by unconstrained decoding).
    pub fn validate_structure(&self, allow_text_children: bool) -> Result<(), CatalogError> {
        let bad = |path: &str, reason: &str| CatalogError::InvalidTree {
            path: path.to_owned(),
            reason: reason.to_owned(),
        };
        if self.root.kind != NodeKind::Root {
            return Err(bad("root", "root node must have kind root"));
        }
        if !self.root.content.is_empty() || !self.root.segments.is_empty() {
            return Err(bad("root", "root node must have empty content and segments"));
        }
        let mut cursor = 0usize;
        for (i, child) in self.root.children.iter().enumerate() {
            check_subtree(child, &format!("root.children[{i}]"), allow_text_children, &mut cursor)?;
        }
        Ok(())
    }

    /// Validates structure and checks every node's content against the
    /// segment texts it claims to be made of.
    pub fn validate_against(&self, segments: &[Segment], joiner: Joiner) -> Result<(), CatalogError> {
        self.validate()?;
        let total = self.segment_order().len();
        if total != segments.len() {
            return Err(CatalogError::InvalidTree {
                path: "root".into(),
                reason: format!("tree covers {total} segments, stream has {}", segments.len()),
            });
        }
        let mut err = None;
        self.root.walk(0, &mut |node, _| {
            if err.is_some() || node.kind == NodeKind::Root {
                return;
            }
            let expected = joiner.join_all(node.segments.iter().map(|&i| segments[i].text.as_str()));
            if expected != node.content {
                err = Some(CatalogError::InvalidTree {
                    path: format!("segments {:?}", node.segments),
                    reason: format!("content {:?} != joined segments {:?}", node.content, expected),
                });
            }
        });
        err.map_or(Ok(()), Err)
    }
}

/// Walks a subtree the way the transition system would have built it: the
/// node is created by its first segment, after which its remaining segments
/// and its child subtrees must consume the following indices in order.
fn check_subtree(
    node: &CatalogNode,
    path: &str,
    allow_text_children: bool,
    cursor: &mut usize,
) -> Result<(), CatalogError> {
    let bad = |reason: String| CatalogError::InvalidTree { path: path.to_owned(), reason };
    match node.kind {
        NodeKind::Root => return Err(bad("root kind below the top".into())),
        NodeKind::Text if !node.children.is_empty() && !allow_text_children => {
            return Err(bad("text node has children".into()));
        }
        _ => {}
    }
    if node.content.is_empty() {
        return Err(bad("non-root node has empty content".into()));
    }
    let Some(&first) = node.segments.first() else {
        return Err(bad("non-root node has no source segments".into()));
    };
    if first != *cursor {
        return Err(bad(format!("segment {first} out of order (expected {})", *cursor)));
    }
    *cursor += 1;
    let mut own = node.segments[1..].iter().peekable();
    let mut children = node.children.iter().enumerate();
    loop {
        if let Some(&&s) = own.peek() {
            if s == *cursor {
                own.next();
                *cursor += 1;
                continue;
            }
        }
        match children.next() {
            Some((i, child)) => check_subtree(child, &format!("{path}.children[{i}]"), allow_text_children, cursor)?,
            None => break,
        }
    }
    if let Some(&s) = own.next() {
        return Err(bad(format!("segment {s} out of order (expected {})", *cursor)));
    }
    Ok(())
}

/// The `(level, type, content)` triple used by the tuple metric.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EvalTuple {
    pub level: usize,
    pub kind: NodeKind,
    pub content: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    SubHeading,
    SubText,
    Concat,
    Reduce,
}

impl Action {
    /// Declaration order, which is also the tie-breaking order.
    pub const ALL: [Action; 4] = [Action::SubHeading, Action::SubText, Action::Concat, Action::Reduce];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    pub fn consumes_input(self) -> bool {
        self != Action::Reduce
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::SubHeading => "sub_heading",
            Action::SubText => "sub_text",
            Action::Concat => "concat",
            Action::Reduce => "reduce",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A small set of actions, iterated in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ActionSet(u8);

impl ActionSet {
    pub const EMPTY: ActionSet = ActionSet(0);
    pub const ALL: ActionSet = ActionSet(0b1111);

    pub fn of(actions: &[Action]) -> ActionSet {
        actions.iter().fold(ActionSet::EMPTY, |s, &a| s.with(a))
    }

    pub fn with(self, a: Action) -> ActionSet {
        ActionSet(self.0 | (1 << a.index()))
    }

    pub fn contains(self, a: Action) -> bool {
        self.0 & (1 << a.index()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = Action> {
        Action::ALL.into_iter().filter(move |&a| self.contains(a))
    }
}

/// Tree under construction plus the current stack top.
///
/// The stack is implicit: it is the path from the root to the focus node,
/// stored as child indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionState {
    tree: CatalogTree,
    focus: Vec<usize>,
    consumed: usize,
    joiner: Joiner,
}

impl TransitionState {
    pub fn new(joiner: Joiner) -> TransitionState {
        TransitionState {
            tree: CatalogTree::new(),
            focus: Vec::new(),
            consumed: 0,
            joiner,
        }
    }

    pub fn tree(&self) -> &CatalogTree {
        &self.tree
    }

    pub fn into_tree(self) -> CatalogTree {
        self.tree
    }

    pub fn focus_path(&self) -> &[usize] {
        &self.focus
    }

    /// Depth of the focus node; the root is at 0.
    pub fn depth(&self) -> usize {
        self.focus.len()
    }

    pub fn focus(&self) -> &CatalogNode {
        self.tree.node_at(&self.focus).expect("focus path always points into the tree")
    }

    pub fn consumed(&self) -> usize {
        self.consumed
    }

    pub fn joiner(&self) -> Joiner {
        self.joiner
    }

    /// The actions the two structural constraints permit in this state.
    pub fn legal_actions(&self, queue_empty: bool) -> ActionSet {
        let kind = self.focus().kind;
        match (kind, queue_empty) {
            (NodeKind::Root, false) => ActionSet::of(&[Action::SubHeading, Action::SubText]),
            (NodeKind::Root, true) => ActionSet::EMPTY,
            (NodeKind::Text, false) => ActionSet::of(&[Action::Concat, Action::Reduce]),
            (NodeKind::Heading, false) => ActionSet::ALL,
            (_, true) => ActionSet::of(&[Action::Reduce]),
        }
    }

    /// Actions that can be carried out at all, ignoring the leaf-text and
    /// first-action constraints. Used by unconstrained decoding.
    pub fn applicable_actions(&self, queue_empty: bool) -> ActionSet {
        let at_root = self.focus.is_empty();
        Action::ALL
            .into_iter()
            .filter(|a| match a {
                Action::Reduce => !at_root,
                Action::Concat => !at_root && !queue_empty,
                Action::SubHeading | Action::SubText => !queue_empty,
            })
            .fold(ActionSet::EMPTY, ActionSet::with)
    }

    /// Applies `action`, enforcing the structural constraints.
    pub fn apply(&mut self, action: Action, q: Option<&Segment>) -> Result<(), CatalogError> {
        if !self.legal_actions(q.is_none()).contains(action) {
            if action.consumes_input() && q.is_none() {
                return Err(CatalogError::MissingInput(action));
            }
            return Err(CatalogError::IllegalAction { action, focus: self.focus().kind });
        }
        self.apply_unchecked(action, q)
    }

    /// Applies `action` as long as it is applicable, without the leaf-text
    /// and first-action constraints.
    pub fn apply_relaxed(&mut self, action: Action, q: Option<&Segment>) -> Result<(), CatalogError> {
        if action.consumes_input() && q.is_none() {
            return Err(CatalogError::MissingInput(action));
        }
        if !self.applicable_actions(q.is_none()).contains(action) {
            return Err(CatalogError::IllegalAction { action, focus: self.focus().kind });
        }
        self.apply_unchecked(action, q)
    }

    fn apply_unchecked(&mut self, action: Action, q: Option<&Segment>) -> Result<(), CatalogError> {
        let joiner = self.joiner;
        match action {
            Action::SubHeading | Action::SubText => {
                let q = q.ok_or(CatalogError::MissingInput(action))?;
                let node = if action == Action::SubHeading {
                    CatalogNode::heading(q.text.clone(), vec![q.index])
                } else {
                    CatalogNode::text(q.text.clone(), vec![q.index])
                };
                let focus = self.tree.node_at_mut(&self.focus).expect("valid focus");
                focus.children.push(node);
                let child = focus.children.len() - 1;
                self.focus.push(child);
                self.consumed += 1;
            }
            Action::Concat => {
                let q = q.ok_or(CatalogError::MissingInput(action))?;
                let focus = self.tree.node_at_mut(&self.focus).expect("valid focus");
                joiner.append(&mut focus.content, &q.text);
                focus.segments.push(q.index);
                self.consumed += 1;
            }
            Action::Reduce => {
                self.focus.pop();
            }
        }
        Ok(())
    }
}
