//! Embedded call grammar, validation and streaming interception.

mod annotated;
mod call;
mod registry;
mod stream;

pub use annotated::{canonicalize_text, parse_annotated, AnnotatedText, Segment};
pub use call::{
    parse_call, serialize_call, ParsedCall, ResultValue, SyntaxError, ToolCall, ToolResult,
    CLOSE_TAG, OPEN_TAG, RESULT_ARROW,
};
pub use registry::{
    validate_call, ParamSpec, Registry, SignatureIssue, ToolCallSpec, Validation, ValueKind,
    COMPARE_MODES, GET_CLOSEST, LIST_WITHIN,
};
pub use stream::{
    coalesce, scan_stream, ScanItem, StreamErrorKind, StreamEvent, StreamScanner,
    StreamSyntaxError, MAX_CALL_SPAN,
};

pub(crate) use registry::describe as describe_issues;
pub(crate) use call::parse_head;
