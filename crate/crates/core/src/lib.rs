//! Core of the ER diagram feedback assistant: diagram model and grammar,
//! canonical JSON and DOT export, relationship-centred pruning, requirement
//! corpora, prompt construction and feedback evaluation metrics.

#[cfg(feature = "arbitrary")]
pub mod arbitrary;
pub mod dot;
pub mod eval;
pub mod json;
pub mod model;
pub mod parser;
pub mod prompt;
pub mod prune;
pub mod requirements;
pub mod validate;

pub use dot::{check_dot_syntax, to_dot, view_to_dot, DotError};
pub use json::{from_json, to_json, JsonError};
pub use model::*;
pub use parser::{format, parse, DeclKind, ParseError, ParseErrorCode, ParsedSchema, SourceSpan};
pub use prune::{list_relationships, prune, PruneError, PrunedView};
pub use requirements::{load_requirements, RequirementItem, RequirementSet, RequirementsError};
pub use validate::{validate, Violation};
