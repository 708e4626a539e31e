//! UI hierarchy dumps: parsing, serialisation, selector resolution and digests.

use std::fmt::Write as _;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::Selector;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GuiError {
    #[error("malformed UI dump: {0}")]
    MalformedDump(String),
    #[error("no widget matches {0}")]
    SelectorNotFound(String),
    #[error("selector {selector} matches {count} widgets")]
    AmbiguousSelector { selector: String, count: usize },
}

/// Screen rectangle in pixels, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Bounds {
    pub left: i32,
    pub top: i32,
    pub right: i32,
    pub bottom: i32,
}

impl Bounds {
    pub fn new(left: i32, top: i32, right: i32, bottom: i32) -> Self {
        Bounds { left, top, right, bottom }
    }

    /// Parses the dump notation `[l,t][r,b]`.
    pub fn parse(s: &str) -> Option<Bounds> {
        let s = s.trim();
        let inner = s.strip_prefix('[')?.strip_suffix(']')?;
        let (first, second) = inner.split_once("][")?;
        let pair = |p: &str| -> Option<(i32, i32)> {
            let (a, b) = p.split_once(',')?;
            Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
        };
        let (left, top) = pair(first)?;
        let (right, bottom) = pair(second)?;
        let b = Bounds { left, top, right, bottom };
        b.is_well_formed().then_some(b)
    }

    pub fn is_well_formed(&self) -> bool {
        self.left <= self.right && self.top <= self.bottom
    }

    pub fn contains(&self, x: i32, y: i32) -> bool {
        x >= self.left && x <= self.right && y >= self.top && y <= self.bottom
    }

    pub fn center(&self) -> (i32, i32) {
        ((self.left + self.right) / 2, (self.top + self.bottom) / 2)
    }
}

impl std::fmt::Display for Bounds {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{},{}][{},{}]", self.left, self.top, self.right, self.bottom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuiNode {
    pub class_name: String,
    pub resource_id: String,
    pub text: String,
    pub content_desc: String,
    pub bounds: Bounds,
    pub clickable: bool,
    pub enabled: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<GuiNode>,
}

impl GuiNode {
    pub fn new(class_name: impl Into<String>, bounds: Bounds) -> Self {
        GuiNode {
            class_name: class_name.into(),
            resource_id: String::new(),
            text: String::new(),
            content_desc: String::new(),
            bounds,
            clickable: false,
            enabled: true,
            children: Vec::new(),
        }
    }

    /// Pre-order traversal.
    pub fn iter(&self) -> impl Iterator<Item = &GuiNode> {
        let mut stack = vec![self];
        std::iter::from_fn(move || {
            let node = stack.pop()?;
            stack.extend(node.children.iter().rev());
            Some(node)
        })
    }

    /// Pre-order traversal with depth (root at 0).
    pub fn iter_with_depth(&self) -> impl Iterator<Item = (usize, &GuiNode)> {
        let mut stack = vec![(0usize, self)];
        std::iter::from_fn(move || {
            let (depth, node) = stack.pop()?;
            stack.extend(node.children.iter().rev().map(|c| (depth + 1, c)));
            Some((depth, node))
        })
    }

    pub fn node_count(&self) -> usize {
        self.iter().count()
    }

    pub fn depth(&self) -> usize {
        self.iter_with_depth().map(|(d, _)| d).max().unwrap_or(0)
    }

    /// Resolves a selector: a resource id must match exactly one node, text takes
    /// the first pre-order match, and a point picks the deepest node containing it.
    pub fn resolve(&self, selector: &Selector) -> Result<&GuiNode, GuiError> {
        match selector {
            Selector::ResourceId(id) => {
                let mut matches = self.iter().filter(|n| !n.resource_id.is_empty() && id_matches(&n.resource_id, id));
                let first = matches.next().ok_or_else(|| GuiError::SelectorNotFound(selector.to_string()))?;
                let extra = matches.count();
                if extra > 0 {
                    return Err(GuiError::AmbiguousSelector {
                        selector: selector.to_string(),
                        count: extra + 1,
                    });
                }
                Ok(first)
            }
            Selector::Text(text) => self
                .iter()
                .find(|n| n.text == *text || (!n.content_desc.is_empty() && n.content_desc == *text))
                .ok_or_else(|| GuiError::SelectorNotFound(selector.to_string())),
            Selector::Point { x, y } => self
                .iter_with_depth()
                .filter(|(_, n)| n.bounds.contains(*x, *y))
                .max_by_key(|(d, _)| *d)
                .map(|(_, n)| n)
                .ok_or_else(|| GuiError::SelectorNotFound(selector.to_string())),
        }
    }

    /// Mutable variant of [`GuiNode::resolve`] for the first id or text match.
    pub fn find_mut(&mut self, selector: &Selector) -> Option<&mut GuiNode> {
        let hit = match selector {
            Selector::ResourceId(id) => id_matches(&self.resource_id, id) && !self.resource_id.is_empty(),
            Selector::Text(t) => self.text == *t || (!self.content_desc.is_empty() && self.content_desc == *t),
            Selector::Point { x, y } => {
                self.bounds.contains(*x, *y)
                    && !self.children.iter().any(|c| c.bounds.contains(*x, *y))
            }
        };
        if hit {
            return Some(self);
        }
        self.children.iter_mut().find_map(|c| c.find_mut(selector))
    }
}

/// Full ids look like `pkg:id/name`; agents usually say just `name`.
fn id_matches(full: &str, wanted: &str) -> bool {
    full == wanted || full.rsplit_once('/').is_some_and(|(_, short)| short == wanted)
}

/// A captured hierarchy dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuiState {
    pub raw_dump: String,
    pub root: GuiNode,
    pub foreground_activity: String,
    pub timestamp: i64,
}

impl GuiState {
    /// Builds a state from a tree, rendering the matching dump text.
    pub fn from_tree(root: GuiNode, foreground_activity: impl Into<String>, timestamp: i64) -> Self {
        let foreground_activity = foreground_activity.into();
        let raw_dump = serialize_gui(&root, &foreground_activity);
        GuiState { raw_dump, root, foreground_activity, timestamp }
    }

    pub fn digest(&self) -> String {
        normalize_gui(self)
    }
}

/// Parses a `uiautomator dump` document.
///
/// The first `node` element becomes the root; a `hierarchy` wrapper with
/// several top-level nodes gets a synthetic root spanning them. An
/// `activity` attribute on the wrapper, when present, fills the foreground
/// activity.
pub fn parse_gui_dump(xml: &str) -> Result<GuiState, GuiError> {
    let mut reader = Reader::from_str(xml);
    reader.config_mut().check_end_names = true;

    let mut open: Vec<String> = Vec::new();
    let mut stack: Vec<GuiNode> = Vec::new();
    let mut tops: Vec<GuiNode> = Vec::new();
    let mut activity = String::new();
    let mut saw_root_element = false;

    loop {
        let event = reader
            .read_event()
            .map_err(|e| GuiError::MalformedDump(format!("at byte {}: {e}", reader.buffer_position())))?;
        match event {
            Event::Start(start) => {
                let name = element_name(&start);
                saw_root_element = true;
                if name == "node" {
                    stack.push(node_from(&start)?);
                } else if name == "hierarchy" {
                    if let Some(a) = attr(&start, "activity")? {
                        activity = a;
                    }
                }
                open.push(name);
            }
            Event::Empty(start) => {
                let name = element_name(&start);
                saw_root_element = true;
                if name == "node" {
                    let node = node_from(&start)?;
                    attach(node, &mut stack, &mut tops);
                } else if name == "hierarchy" {
                    if let Some(a) = attr(&start, "activity")? {
                        activity = a;
                    }
                }
            }
            Event::End(end) => {
                let name = end.name().as_ref().to_string();
                open.pop();
                if name == "node" {
                    let node = stack
                        .pop()
                        .ok_or_else(|| GuiError::MalformedDump("unbalanced </node>".into()))?;
                    attach(node, &mut stack, &mut tops);
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }

    if !open.is_empty() {
        return Err(GuiError::MalformedDump(format!("document ends inside <{}>", open.join("><"))));
    }
    if !saw_root_element {
        return Err(GuiError::MalformedDump("no elements".into()));
    }
    let root = match tops.len() {
        0 => return Err(GuiError::MalformedDump("no node elements".into())),
        1 => tops.pop().unwrap_or_else(|| unreachable!()),
        _ => {
            let bounds = tops.iter().fold(tops[0].bounds, |acc, n| Bounds {
                left: acc.left.min(n.bounds.left),
                top: acc.top.min(n.bounds.top),
                right: acc.right.max(n.bounds.right),
                bottom: acc.bottom.max(n.bounds.bottom),
            });
            let mut root = GuiNode::new("hierarchy", bounds);
            root.children = tops;
            root
        }
    };
    Ok(GuiState { raw_dump: xml.to_string(), root, foreground_activity: activity, timestamp: 0 })
}

fn element_name(start: &BytesStart<'_>) -> String {
    start.name().as_ref().to_string()
}

fn attach(node: GuiNode, stack: &mut [GuiNode], tops: &mut Vec<GuiNode>) {
    match stack.last_mut() {
        Some(parent) => parent.children.push(node),
        None => tops.push(node),
    }
}

fn attr(start: &BytesStart<'_>, key: &str) -> Result<Option<String>, GuiError> {
    for a in start.attributes() {
        let a = a.map_err(|e| GuiError::MalformedDump(e.to_string()))?;
        if a.key.as_ref() == key {
            let v = a
                .normalized_value(quick_xml::XmlVersion::Implicit1_0)
                .map_err(|e| GuiError::MalformedDump(e.to_string()))?;
            return Ok(Some(v.into_owned()));
        }
    }
    Ok(None)
}

fn node_from(start: &BytesStart<'_>) -> Result<GuiNode, GuiError> {
    let mut node = GuiNode::new("", Bounds::default());
    for a in start.attributes() {
        let a = a.map_err(|e| GuiError::MalformedDump(e.to_string()))?;
        let value = a
            .normalized_value(quick_xml::XmlVersion::Implicit1_0)
            .map_err(|e| GuiError::MalformedDump(e.to_string()))?
            .into_owned();
        match a.key.as_ref() {
            "class" => node.class_name = value,
            "resource-id" => node.resource_id = value,
            "text" => node.text = value,
            "content-desc" => node.content_desc = value,
            "clickable" => node.clickable = value == "true",
            "enabled" => node.enabled = value == "true",
            "bounds" => {
                node.bounds = Bounds::parse(&value)
                    .ok_or_else(|| GuiError::MalformedDump(format!("bad bounds `{value}`")))?
            }
            _ => {}
        }
    }
    Ok(node)
}

/// Renders a tree in the `uiautomator dump` grammar.
pub fn serialize_gui(root: &GuiNode, activity: &str) -> String {
    let mut out = String::from("<?xml version='1.0' encoding='UTF-8' standalone='yes' ?>");
    if activity.is_empty() {
        out.push_str("<hierarchy rotation=\"0\">");
    } else {
        let _ = write!(out, "<hierarchy rotation=\"0\" activity=\"{}\">", escape_attr(activity));
    }
    write_node(&mut out, root, 0);
    out.push_str("</hierarchy>");
    out
}

fn write_node(out: &mut String, node: &GuiNode, index: usize) {
    let _ = write!(
        out,
        "<node index=\"{index}\" text=\"{}\" resource-id=\"{}\" class=\"{}\" content-desc=\"{}\" clickable=\"{}\" enabled=\"{}\" bounds=\"{}\"",
        escape_attr(&node.text),
        escape_attr(&node.resource_id),
        escape_attr(&node.class_name),
        escape_attr(&node.content_desc),
        node.clickable,
        node.enabled,
        node.bounds
    );
    if node.children.is_empty() {
        out.push_str(" />");
    } else {
        out.push('>');
        for (i, child) in node.children.iter().enumerate() {
            write_node(out, child, i);
        }
        out.push_str("</node>");
    }
}

/// Escapes an attribute value so that attribute-value normalisation is lossless.
fn escape_attr(s: &str) -> String {
    let escaped = quick_xml::escape::escape(s);
    escaped.replace('\n', "&#10;").replace('\t', "&#9;")
}

/// Deterministic digest over class, resource id, text, bounds and enabled
/// flag of every node in pre-order. Timestamp and activity are excluded.
pub fn normalize_gui(state: &GuiState) -> String {
    let mut hasher = Sha256::new();
    for (depth, node) in state.root.iter_with_depth() {
        for field in [node.class_name.as_str(), node.resource_id.as_str(), node.text.as_str()] {
            hasher.update((field.len() as u64).to_le_bytes());
            hasher.update(field.as_bytes());
        }
        for v in [node.bounds.left, node.bounds.top, node.bounds.right, node.bounds.bottom] {
            hasher.update(v.to_le_bytes());
        }
        hasher.update([node.enabled as u8]);
        hasher.update((depth as u64).to_le_bytes());
        hasher.update((node.children.len() as u64).to_le_bytes());
    }
    hasher.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}
