use std::fmt;

use serde::{Deserialize, Serialize};

use crate::textcore::split_symbols;

/// Errors raised while reading TOP bracket notation.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TreeError {
    #[error("unbalanced brackets at token {position}")]
    UnbalancedBrackets { position: usize },
    #[error("bad label `{label}`")]
    BadLabel { label: String },
    #[error("node `{label}` has no content")]
    EmptyNode { label: String },
    #[error("expected a single root intent")]
    MultipleRoots,
    #[error("`{label}` cannot appear directly under `{parent}`")]
    Misplaced { label: String, parent: String },
    #[error("slot `{label}` holds more than one nested intent")]
    AmbiguousSlot { label: String },
    #[error("slot `{label}` contains a bare quote token")]
    QuoteInSpan { label: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IntentNode {
    pub label: String,
    pub children: Vec<Child>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Child {
    Slot(SlotNode),
    Loose(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SlotNode {
    pub label: String,
    pub filler: SlotFiller,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SlotFiller {
    Intent(IntentNode),
    Span(Vec<String>),
}

/// A single-rooted TOP semantic parse.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParseTree {
    pub root: IntentNode,
}

pub(crate) fn is_label_body(s: &str) -> bool {
    !s.is_empty()
        && s
            .bytes()
            .all(|b| b.is_ascii_uppercase() || b.is_ascii_digit() || b == b'_')
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Intent,
    Slot,
}

fn parse_opener(token: &str) -> Result<(Kind, String), TreeError> {
    let body = &token[1..];
    let (kind, name) = if let Some(name) = body.strip_prefix("IN:") {
        (Kind::Intent, name)
    } else if let Some(name) = body.strip_prefix("SL:") {
        (Kind::Slot, name)
    } else {
        return Err(TreeError::BadLabel {
            label: body.to_string(),
        });
    };
    if !is_label_body(name) {
        return Err(TreeError::BadLabel {
            label: body.to_string(),
        });
    }
    Ok((kind, name.to_string()))
}

enum Item {
    Word(String),
    Node(Kind, String, Vec<Item>),
}

struct Frame {
    kind: Kind,
    label: String,
    items: Vec<Item>,
}

/// Parses one line of TOP bracket notation, e.g.
/// `[IN:GET_EVENT the [SL:NAME_EVENT Eagles ] game ]`.
///
/// Words are split on the structural symbols `( ) = , "` so every surface
/// token in the tree is atomic with respect to the API serialization.
pub fn parse_top(text: &str) -> Result<ParseTree, TreeError> {
    let mut stack: Vec<Frame> = Vec::new();
    let mut roots: Vec<Item> = Vec::new();

    for (position, raw) in text.split_whitespace().enumerate() {
        if raw.starts_with('[') {
            let (kind, label) = parse_opener(raw)?;
            stack.push(Frame {
                kind,
                label,
                items: Vec::new(),
            });
        } else if raw == "]" {
            let frame = stack
                .pop()
                .ok_or(TreeError::UnbalancedBrackets { position })?;
            let node = Item::Node(frame.kind, frame.label, frame.items);
            match stack.last_mut() {
                Some(parent) => parent.items.push(node),
                None => roots.push(node),
            }
        } else {
            let Some(top) = stack.last_mut() else {
                // words outside the root are not part of any tree
                return Err(TreeError::MultipleRoots);
            };
            top.items
                .extend(split_symbols(raw).into_iter().map(|w| Item::Word(w.to_string())));
        }
    }
    if !stack.is_empty() {
        return Err(TreeError::UnbalancedBrackets {
            position: text.split_whitespace().count(),
        });
    }
    if roots.len() != 1 {
        return Err(TreeError::MultipleRoots);
    }
    match roots.pop() {
        Some(Item::Node(Kind::Intent, label, items)) => Ok(ParseTree {
            root: build_intent(label, items)?,
        }),
        Some(Item::Node(Kind::Slot, label, _)) => Err(TreeError::Misplaced {
            label: format!("SL:{label}"),
            parent: "root".into(),
        }),
        _ => Err(TreeError::MultipleRoots),
    }
}

fn build_intent(label: String, items: Vec<Item>) -> Result<IntentNode, TreeError> {
    if items.is_empty() {
        return Err(TreeError::EmptyNode {
            label: format!("IN:{label}"),
        });
    }
    let mut children = Vec::with_capacity(items.len());
    for item in items {
        match item {
            Item::Word(w) => children.push(Child::Loose(w)),
            Item::Node(Kind::Slot, slot, inner) => children.push(Child::Slot(build_slot(slot, inner)?)),
            Item::Node(Kind::Intent, inner, _) => {
                return Err(TreeError::Misplaced {
                    label: format!("IN:{inner}"),
                    parent: format!("IN:{label}"),
                })
            }
        }
    }
    Ok(IntentNode { label, children })
}

fn build_slot(label: String, items: Vec<Item>) -> Result<SlotNode, TreeError> {
    let mut words = Vec::new();
    let mut nested = None;
    for item in items {
        match item {
            Item::Word(w) => words.push(w),
            Item::Node(Kind::Intent, inner, inner_items) => {
                if nested.is_some() {
                    return Err(TreeError::AmbiguousSlot { label });
                }
                nested = Some(build_intent(inner, inner_items)?);
            }
            Item::Node(Kind::Slot, inner, _) => {
                return Err(TreeError::Misplaced {
                    label: format!("SL:{inner}"),
                    parent: format!("SL:{label}"),
                })
            }
        }
    }
    // a nested intent wins over stray words in the same slot
    let filler = match nested {
        Some(intent) => SlotFiller::Intent(intent),
        None if words.is_empty() => {
            return Err(TreeError::EmptyNode {
                label: format!("SL:{label}"),
            })
        }
        None => {
            if words.iter().any(|w| w == "\"") {
                return Err(TreeError::QuoteInSpan { label });
            }
            SlotFiller::Span(words)
        }
    };
    Ok(SlotNode { label, filler })
}

impl IntentNode {
    fn collect_tokens<'a>(&'a self, out: &mut Vec<&'a str>) {
        for child in &self.children {
            match child {
                Child::Loose(w) => out.push(w),
                Child::Slot(slot) => match &slot.filler {
                    SlotFiller::Intent(i) => i.collect_tokens(out),
                    SlotFiller::Span(ws) => out.extend(ws.iter().map(String::as_str)),
                },
            }
        }
    }

    fn collect_labels(&self, out: &mut Vec<String>) {
        out.push(format!("IN:{}", self.label));
        for child in &self.children {
            if let Child::Slot(slot) = child {
                out.push(format!("SL:{}", slot.label));
                if let SlotFiller::Intent(i) = &slot.filler {
                    i.collect_labels(out);
                }
            }
        }
    }
}

impl ParseTree {
    /// Surface tokens of the utterance in original order.
    pub fn tokens(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.root.collect_tokens(&mut out);
        out
    }

    /// Every intent and slot label, prefixed (`IN:`/`SL:`), in pre-order.
    pub fn labels(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.root.collect_labels(&mut out);
        out
    }
}

impl fmt::Display for IntentNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[IN:{}", self.label)?;
        for child in &self.children {
            match child {
                Child::Loose(w) => write!(f, " {w}")?,
                Child::Slot(slot) => {
                    write!(f, " [SL:{}", slot.label)?;
                    match &slot.filler {
                        SlotFiller::Intent(i) => write!(f, " {i}")?,
                        SlotFiller::Span(ws) => {
                            for w in ws {
                                write!(f, " {w}")?;
                            }
                        }
                    }
                    write!(f, " ]")?;
                }
            }
        }
        write!(f, " ]")
    }
}

impl fmt::Display for ParseTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_event_fragment() {
        let tree = parse_top("[IN:GET_EVENT the [SL:NAME_EVENT Eagles ] game ]").unwrap();
        assert_eq!(tree.root.label, "GET_EVENT");
        assert_eq!(
            tree.root.children,
            vec![
                Child::Loose("the".into()),
                Child::Slot(SlotNode {
                    label: "NAME_EVENT".into(),
                    filler: SlotFiller::Span(vec!["Eagles".into()]),
                }),
                Child::Loose("game".into()),
            ]
        );
        assert_eq!(tree.tokens(), vec!["the", "Eagles", "game"]);
    }

    #[test]
    fn minimal_tree() {
        let tree = parse_top("[IN:A x ]").unwrap();
        assert_eq!(tree.root.children, vec![Child::Loose("x".into())]);
    }

    #[test]
    fn missing_close_is_unbalanced() {
        assert!(matches!(
            parse_top("[IN:A [SL:B y ]"),
            Err(TreeError::UnbalancedBrackets { .. })
        ));
        assert!(matches!(
            parse_top("[IN:A x ] ]"),
            Err(TreeError::UnbalancedBrackets { .. })
        ));
    }

    #[test]
    fn label_errors() {
        assert!(matches!(parse_top("[XX:A x ]"), Err(TreeError::BadLabel { .. })));
        assert!(matches!(parse_top("[IN:lower x ]"), Err(TreeError::BadLabel { .. })));
        assert!(matches!(parse_top("[IN: x ]"), Err(TreeError::BadLabel { .. })));
    }

    #[test]
    fn empty_nodes() {
        assert!(matches!(parse_top("[IN:A ]"), Err(TreeError::EmptyNode { .. })));
        assert!(matches!(parse_top("[IN:A [SL:B ] ]"), Err(TreeError::EmptyNode { .. })));
    }

    #[test]
    fn rejects_two_roots_and_misplacement() {
        assert_eq!(parse_top("[IN:A x ] [IN:B y ]"), Err(TreeError::MultipleRoots));
        assert_eq!(parse_top(""), Err(TreeError::MultipleRoots));
        assert!(matches!(parse_top("[SL:A x ]"), Err(TreeError::Misplaced { .. })));
        assert!(matches!(parse_top("[IN:A [IN:B x ] ]"), Err(TreeError::Misplaced { .. })));
    }

    #[test]
    fn nested_intent_wins_in_slot() {
        let tree = parse_top("[IN:A [SL:B to [IN:C x ] ] ]").unwrap();
        let Child::Slot(slot) = &tree.root.children[0] else { panic!() };
        assert!(matches!(slot.filler, SlotFiller::Intent(_)));
    }

    #[test]
    fn words_split_on_structural_symbols() {
        let tree = parse_top("[IN:A [SL:B 3,5 ] ]").unwrap();
        assert_eq!(tree.tokens(), vec!["3", ",", "5"]);
    }

    #[test]
    fn display_round_trips() {
        let text = "[IN:GET_DIRECTIONS Driving directions to [SL:DESTINATION [IN:GET_EVENT the [SL:NAME_EVENT Eagles ] game ] ] ]";
        let tree = parse_top(text).unwrap();
        assert_eq!(tree.to_string(), text);
        assert_eq!(
            tree.labels(),
            vec!["IN:GET_DIRECTIONS", "SL:DESTINATION", "IN:GET_EVENT", "SL:NAME_EVENT"]
        );
    }
}
