//! JVM stack traces.
//!
//! Traces are stored MUT-first: `frames[0]` is the method under test and
//! the last frame holds the target throw statement. The JVM prints frames
//! innermost-first, so [`parse_stack_trace`] reverses and [`render`]
//! reverses back.

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jmodel::{MethodId, RepoContext, ThrowSite};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Frame {
    pub class_fqn: String,
    pub method: String,
    pub file: String,
    pub line: u32,
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at {}.{}({}:{})", self.class_fqn, self.method, self.file, self.line)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StackTrace {
    pub frames: Vec<Frame>,
}

impl StackTrace {
    pub fn new(frames: Vec<Frame>) -> StackTrace {
        StackTrace { frames }
    }

    pub fn first(&self) -> Option<&Frame> {
        self.frames.first()
    }

    pub fn last(&self) -> Option<&Frame> {
        self.frames.last()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("malformed trace: {0}")]
    MalformedTrace(String),
    #[error("no frames remain after excluding test and utility frames")]
    EmptyAfterExclusion,
    #[error("no throw statement at {file}:{line}")]
    NoThrowAtFrame { file: String, line: u32 },
    #[error("frame {0} does not resolve to a declaration in the repository")]
    UnresolvedFrame(Frame),
}

/// A frame line that was recognised but not kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DroppedFrame {
    pub line: String,
    pub reason: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrameLine {
    Frame(Frame),
    Dropped(DroppedFrame),
}

fn frame_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        // optional module/classloader prefix such as `java.base/` or `app//`
        Regex::new(r"^\s*at\s+(?:\S*/)?(?P<cls>[^\s/()]+)\.(?P<method>[^\s.()]+)\((?P<loc>[^()]*)\)\s*$").expect("static regex")
    })
}

/// Class-name prefixes of reflection, JDK and test-runner frames.
const SYNTHETIC_PREFIXES: &[&str] = &[
    "java.",
    "javax.",
    "jdk.",
    "sun.",
    "com.sun.",
    "org.junit.",
    "junit.",
    "org.apache.maven.surefire.",
    "org.gradle.",
    "worker.org.gradle.",
    "org.eclipse.jdt.internal.junit",
    "com.intellij.",
    "org.testng.",
    "exbt.runtime.",
];

pub fn is_synthetic_class(class_fqn: &str) -> bool {
    SYNTHETIC_PREFIXES.iter().any(|p| class_fqn.starts_with(p))
}

/// Classifies one line. `None` means the line is not a frame line at all.
pub fn parse_frame_line(line: &str) -> Option<FrameLine> {
    let caps = frame_regex().captures(line)?;
    let class_fqn = caps["cls"].to_string();
    let method = caps["method"].to_string();
    let loc = &caps["loc"];
    let dropped = |reason| Some(FrameLine::Dropped(DroppedFrame { line: line.trim().to_string(), reason }));
    if is_synthetic_class(&class_fqn) {
        return dropped("synthetic frame");
    }
    let Some((file, line_no)) = loc.rsplit_once(':') else {
        return dropped(if loc == "Native Method" { "native frame" } else { "no line number" });
    };
    let Ok(line_no) = line_no.trim().parse::<u32>() else {
        return dropped("no line number");
    };
    if line_no == 0 {
        return dropped("no line number");
    }
    if !file.ends_with(".java") {
        return dropped("not a Java source frame");
    }
    Some(FrameLine::Frame(Frame { class_fqn, method, file: file.to_string(), line: line_no }))
}

/// Parses JVM stack-trace text. Non-frame lines (exception headers,
/// `... N more`) are ignored; parsing stops at the first `Caused by:` or
/// `Suppressed:` segment.
pub fn parse_stack_trace(text: &str) -> Result<StackTrace, TraceError> {
    parse_stack_trace_with_drops(text).map(|(t, _)| t)
}

pub fn parse_stack_trace_with_drops(text: &str) -> Result<(StackTrace, Vec<DroppedFrame>), TraceError> {
    let mut frames = Vec::new();
    let mut dropped = Vec::new();
    let mut saw_frame_line = false;
    for line in text.lines() {
        let trimmed = line.trim_start();
        if trimmed.starts_with("Caused by:") || trimmed.starts_with("Suppressed:") {
            if saw_frame_line {
                break;
            }
            continue;
        }
        match parse_frame_line(line) {
            Some(FrameLine::Frame(f)) => {
                saw_frame_line = true;
                frames.push(f);
            }
            Some(FrameLine::Dropped(d)) => {
                saw_frame_line = true;
                log::debug!("dropping frame `{}`: {}", d.line, d.reason);
                dropped.push(d);
            }
            None => {}
        }
    }
    if !saw_frame_line {
        return Err(TraceError::MalformedTrace("no frame line in canonical `at <class>.<method>(<file>:<line>)` form".into()));
    }
    if frames.is_empty() {
        return Err(TraceError::MalformedTrace("every frame was dropped".into()));
    }
    frames.reverse();
    Ok((StackTrace { frames }, dropped))
}

/// Renders in JVM order (innermost first), one `\tat ...` line per frame.
pub fn render(trace: &StackTrace) -> String {
    let mut out = String::new();
    for f in trace.frames.iter().rev() {
        out.push('\t');
        out.push_str(&f.to_string());
        out.push('\n');
    }
    out
}

/// Removes frames belonging to the destination test file, to any test
/// source root, or to classes not declared in the repository.
pub fn exclude_test_and_util_frames(trace: &StackTrace, dest: &str, ctx: &RepoContext) -> Result<StackTrace, TraceError> {
    let dest_name = dest.rsplit('/').next().unwrap_or(dest);
    let frames: Vec<Frame> = trace
        .frames
        .iter()
        .filter(|f| {
            let Some(unit) = ctx.unit_declaring(&outer_class(&f.class_fqn, ctx)) else {
                return false;
            };
            !(unit.is_test || unit.path == dest || (f.file == dest_name && unit.file_name() == dest_name))
        })
        .cloned()
        .collect();
    if frames.is_empty() {
        return Err(TraceError::EmptyAfterExclusion);
    }
    Ok(StackTrace { frames })
}

/// Nearest enclosing class of `fqn` that the repository declares
/// (`Outer$1` → `Outer`).
fn outer_class(fqn: &str, ctx: &RepoContext) -> String {
    let mut owner = fqn.to_string();
    while !ctx.declares_class(&owner) {
        match owner.rfind('$') {
            Some(i) => owner.truncate(i),
            None => return fqn.to_string(),
        }
    }
    owner
}

/// The method under test (first frame) and the target throw statement
/// (last frame).
pub fn endpoints(trace: &StackTrace, ctx: &RepoContext) -> Result<(MethodId, ThrowSite), TraceError> {
    let first = trace.first().ok_or_else(|| TraceError::MalformedTrace("empty trace".into()))?;
    let last = trace.last().expect("non-empty");
    let (_, mut_decl) =
        ctx.resolve_frame(&first.class_fqn, &first.method, first.line).ok_or_else(|| TraceError::UnresolvedFrame(first.clone()))?;
    let (unit, _) = ctx.resolve_frame(&last.class_fqn, &last.method, last.line).ok_or_else(|| TraceError::UnresolvedFrame(last.clone()))?;
    let site =
        ctx.throw_site_at(&unit.path, last.line).ok_or_else(|| TraceError::NoThrowAtFrame { file: unit.path.clone(), line: last.line })?;
    Ok((mut_decl.id.clone(), site))
}
