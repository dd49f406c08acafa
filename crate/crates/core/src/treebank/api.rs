use std::fmt;

use serde::{Deserialize, Serialize};

use super::tree::{is_label_body, Child, IntentNode, ParseTree, SlotFiller};
use crate::textcore::split_symbols;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed API at token {position}: {reason}")]
pub struct MalformedApi {
    pub position: usize,
    pub reason: String,
}

/// Code-style form of a parse: `NAME ( SLOT = VALUE , ... )`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ApiCall {
    pub name: String,
    pub args: Vec<Arg>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Arg {
    pub slot: String,
    pub value: ArgValue,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArgValue {
    Span(Vec<String>),
    Call(ApiCall),
}

impl ApiCall {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            args: Vec::new(),
        }
    }

    pub fn span(mut self, slot: impl Into<String>, text: &str) -> Self {
        self.args.push(Arg {
            slot: slot.into(),
            value: ArgValue::Span(text.split_whitespace().map(str::to_string).collect()),
        });
        self
    }

    pub fn call(mut self, slot: impl Into<String>, call: ApiCall) -> Self {
        self.args.push(Arg {
            slot: slot.into(),
            value: ArgValue::Call(call),
        });
        self
    }

    /// Checks names and span tokens against the serialization grammar.
    pub fn validate(&self) -> Result<(), MalformedApi> {
        let bad = |reason: String| MalformedApi {
            position: 0,
            reason,
        };
        if !is_label_body(&self.name) {
            return Err(bad(format!("illegal call name `{}`", self.name)));
        }
        for arg in &self.args {
            if !is_label_body(&arg.slot) {
                return Err(bad(format!("illegal slot name `{}`", arg.slot)));
            }
            match &arg.value {
                ArgValue::Call(c) => c.validate()?,
                ArgValue::Span(tokens) => {
                    if tokens.is_empty() {
                        return Err(bad(format!("empty span for `{}`", arg.slot)));
                    }
                    for tok in tokens {
                        if tok == "\"" || split_symbols(tok) != [tok.as_str()] {
                            return Err(bad(format!("span token `{tok}` is not atomic")));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// 1 for a flat call, otherwise one more than the deepest nested call.
    pub fn depth(&self) -> usize {
        1 + self
            .args
            .iter()
            .filter_map(|a| match &a.value {
                ArgValue::Call(c) => Some(c.depth()),
                ArgValue::Span(_) => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Recursively sorts sibling arguments by (slot name, canonical value).
    pub fn canonicalize(&self) -> ApiCall {
        let mut keyed: Vec<(String, String, Arg)> = self
            .args
            .iter()
            .map(|arg| {
                let value = match &arg.value {
                    ArgValue::Call(c) => ArgValue::Call(c.canonicalize()),
                    ArgValue::Span(s) => ArgValue::Span(s.clone()),
                };
                let rendered = value.to_string();
                (
                    arg.slot.clone(),
                    rendered,
                    Arg {
                        slot: arg.slot.clone(),
                        value,
                    },
                )
            })
            .collect();
        // stable: identical keys keep their original order
        keyed.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
        ApiCall {
            name: self.name.clone(),
            args: keyed.into_iter().map(|(_, _, arg)| arg).collect(),
        }
    }

    /// Intent and slot names in pre-order.
    pub fn labels(&self) -> Vec<&str> {
        let mut out = vec![self.name.as_str()];
        for arg in &self.args {
            out.push(&arg.slot);
            if let ArgValue::Call(c) = &arg.value {
                out.extend(c.labels());
            }
        }
        out
    }
}

impl fmt::Display for ApiCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (", self.name)?;
        for (i, arg) in self.args.iter().enumerate() {
            if i > 0 {
                write!(f, " ,")?;
            }
            write!(f, " {} = {}", arg.slot, arg.value)?;
        }
        write!(f, " )")
    }
}

impl fmt::Display for ArgValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArgValue::Call(c) => c.fmt(f),
            ArgValue::Span(tokens) => {
                write!(f, "\"")?;
                for tok in tokens {
                    write!(f, " {tok}")?;
                }
                write!(f, " \"")
            }
        }
    }
}

/// Renders the single-spaced token stream, e.g. `A ( X = " 1 " )`.
pub fn serialize_api(api: &ApiCall) -> String {
    api.to_string()
}

/// Reduces a TOP tree to its API form. Loose tokens are dropped.
pub fn tree_to_api(tree: &ParseTree) -> ApiCall {
    intent_to_api(&tree.root)
}

fn intent_to_api(node: &IntentNode) -> ApiCall {
    let args = node
        .children
        .iter()
        .filter_map(|child| match child {
            Child::Loose(_) => None,
            Child::Slot(slot) => Some(Arg {
                slot: slot.label.clone(),
                value: match &slot.filler {
                    SlotFiller::Intent(inner) => ArgValue::Call(intent_to_api(inner)),
                    SlotFiller::Span(words) => ArgValue::Span(words.clone()),
                },
            }),
        })
        .collect();
    ApiCall {
        name: node.label.clone(),
        args,
    }
}

struct Parser<'a> {
    tokens: Vec<&'a str>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, reason: impl Into<String>) -> Result<T, MalformedApi> {
        Err(MalformedApi {
            position: self.pos,
            reason: reason.into(),
        })
    }

    fn peek(&self) -> Option<&'a str> {
        self.tokens.get(self.pos).copied()
    }

    fn expect(&mut self, want: &str) -> Result<(), MalformedApi> {
        match self.peek() {
            Some(t) if t == want => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => self.err(format!("expected `{want}`, found `{t}`")),
            None => self.err(format!("expected `{want}`, found end of input")),
        }
    }

    fn name(&mut self) -> Result<String, MalformedApi> {
        match self.peek() {
            Some(t) if is_label_body(t) => {
                self.pos += 1;
                Ok(t.to_string())
            }
            Some(t) => self.err(format!("expected a name, found `{t}`")),
            None => self.err("expected a name, found end of input"),
        }
    }

    fn call(&mut self) -> Result<ApiCall, MalformedApi> {
        let name = self.name()?;
        self.expect("(")?;
        let mut args = Vec::new();
        if self.peek() == Some(")") {
            self.pos += 1;
            return Ok(ApiCall { name, args });
        }
        loop {
            let slot = self.name()?;
            self.expect("=")?;
            let value = match self.peek() {
                Some("\"") => {
                    self.pos += 1;
                    let start = self.pos;
                    while let Some(t) = self.peek() {
                        if t == "\"" {
                            break;
                        }
                        self.pos += 1;
                    }
                    if self.peek().is_none() {
                        return self.err("unterminated quote");
                    }
                    if self.pos == start {
                        return self.err("empty span");
                    }
                    let span = self.tokens[start..self.pos].iter().map(|t| t.to_string()).collect();
                    self.pos += 1;
                    ArgValue::Span(span)
                }
                Some(t) if is_label_body(t) => ArgValue::Call(self.call()?),
                Some(t) => return self.err(format!("expected a value, found `{t}`")),
                None => return self.err("expected a value, found end of input"),
            };
            args.push(Arg { slot, value });
            match self.peek() {
                Some(",") => self.pos += 1,
                Some(")") => {
                    self.pos += 1;
                    return Ok(ApiCall { name, args });
                }
                Some(t) => return self.err(format!("expected `,` or `)`, found `{t}`")),
                None => return self.err("unbalanced parentheses"),
            }
        }
    }
}

/// Parses the serialization produced by [`serialize_api`]. Structural
/// symbols need not be space-separated.
pub fn parse_api(text: &str) -> Result<ApiCall, MalformedApi> {
    let tokens = text.split_whitespace().flat_map(split_symbols).collect();
    let mut parser = Parser { tokens, pos: 0 };
    let call = parser.call()?;
    if parser.pos != parser.tokens.len() {
        return parser.err("trailing tokens after call");
    }
    Ok(call)
}
