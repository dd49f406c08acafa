//! TOP bracket trees, their code-style API reduction, and the
//! order-invariant exact-match metric.

mod api;
mod metric;
mod tree;

pub use api::{parse_api, serialize_api, tree_to_api, ApiCall, Arg, ArgValue, MalformedApi};
pub use metric::{exact_match, MatchResult};
pub use tree::{parse_top, Child, IntentNode, ParseTree, SlotFiller, SlotNode, TreeError};

/// Nesting depth of an API call (1 for a flat call).
pub fn depth(api: &ApiCall) -> usize {
    api.depth()
}

/// Sibling-order canonical form.
pub fn canonicalize(api: &ApiCall) -> ApiCall {
    api.canonicalize()
}
