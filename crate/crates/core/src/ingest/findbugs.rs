use roxmltree::{Document, Node};

use super::{content_run_id, IngestError, RunMeta};
use crate::identity::assign_fingerprints;
use crate::model::{AnalysisRun, Confidence, Finding, Fingerprint, SeverityRank, SourceLocation};

const ELEMENT: &str = "BugInstance";

/// Parse a FindBugs/SpotBugs `BugCollection` report.
///
/// One finding per `BugInstance`, in document order. `priority` 1/2/3 maps to
/// high/normal/low confidence and `rank` is taken verbatim.
pub fn parse_findbugs_xml(bytes: &[u8], meta: &RunMeta) -> Result<AnalysisRun, IngestError> {
    let text =
        std::str::from_utf8(bytes).map_err(|e| IngestError::MalformedReport(format!("report is not UTF-8: {e}")))?;
    let doc = Document::parse(text).map_err(|e| IngestError::MalformedReport(e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "BugCollection" {
        return Err(IngestError::MalformedReport(format!(
            "expected root element BugCollection, found {}",
            root.tag_name().name()
        )));
    }

    let mut findings = Vec::new();
    for (index, bug) in children(root, ELEMENT).enumerate() {
        findings.push(parse_bug(bug, index)?);
    }
    assign_fingerprints(&mut findings);

    let tool_version =
        meta.tool_version.clone().or_else(|| root.attribute("version").map(str::to_owned)).unwrap_or_default();
    Ok(AnalysisRun {
        run_id: content_run_id(bytes),
        timestamp: meta.timestamp,
        tool_name: "findbugs".to_owned(),
        tool_version,
        findings,
        metrics: None,
    })
}

fn children<'a, 'i>(node: Node<'a, 'i>, name: &'static str) -> impl Iterator<Item = Node<'a, 'i>> {
    node.children().filter(move |c| c.is_element() && c.tag_name().name() == name)
}

/// The `primary="true"` child of that name, else the first one.
fn primary_child<'a, 'i>(node: Node<'a, 'i>, name: &'static str) -> Option<Node<'a, 'i>> {
    children(node, name).find(|c| c.attribute("primary") == Some("true")).or_else(|| children(node, name).next())
}

fn parse_bug(bug: Node<'_, '_>, index: usize) -> Result<Finding, IngestError> {
    let invalid = |field: &str, reason: String| {
        let kind = bug.attribute("type").unwrap_or("?");
        IngestError::invalid(ELEMENT, index, field, format!("{reason} (type {kind})"))
    };

    let pattern_id = bug
        .attribute("type")
        .filter(|t| !t.is_empty())
        .ok_or_else(|| invalid("type", "missing bug pattern type".into()))?
        .to_owned();

    let rank_attr = bug.attribute("rank").ok_or_else(|| invalid("rank", "missing".into()))?;
    let severity = rank_attr
        .trim()
        .parse::<i64>()
        .ok()
        .and_then(|r| SeverityRank::new(r).ok())
        .ok_or_else(|| invalid("rank", format!("`{rank_attr}` is not an integer in 1..=20")))?;

    let priority = bug.attribute("priority").ok_or_else(|| invalid("priority", "missing".into()))?;
    let confidence = match priority.trim() {
        "1" => Confidence::High,
        "2" => Confidence::Normal,
        "3" => Confidence::Low,
        other => return Err(invalid("priority", format!("`{other}` is not one of 1, 2, 3"))),
    };

    let category = bug.attribute("category").unwrap_or_default().to_owned();
    let message = ["LongMessage", "ShortMessage"]
        .into_iter()
        .filter_map(|name| children(bug, name).next())
        .filter_map(|n| n.text())
        .map(str::trim)
        .find(|t| !t.is_empty())
        .map(str::to_owned)
        .unwrap_or_else(|| pattern_id.clone());

    let class = primary_child(bug, "Class");
    let method = primary_child(bug, "Method");
    let source_line = primary_child(bug, "SourceLine")
        .or_else(|| method.and_then(|m| children(m, "SourceLine").next()))
        .or_else(|| class.and_then(|c| children(c, "SourceLine").next()))
        .ok_or_else(|| invalid("SourceLine", "no source line".into()))?;

    let file_path = source_line
        .attribute("sourcepath")
        .filter(|p| !p.is_empty())
        .ok_or_else(|| invalid("sourcepath", "missing on SourceLine".into()))?;
    let line = |attr: &str| -> Result<Option<u32>, IngestError> {
        match source_line.attribute(attr) {
            None => Ok(None),
            Some(raw) => match raw.trim().parse::<u32>() {
                Ok(n) if n > 0 => Ok(Some(n)),
                _ => Err(invalid(attr, format!("`{raw}` is not a positive line number"))),
            },
        }
    };
    let location = SourceLocation {
        class_name: class
            .and_then(|c| c.attribute("classname"))
            .or_else(|| source_line.attribute("classname"))
            .map(str::to_owned),
        method_signature: method.and_then(|m| {
            m.attribute("name").map(|name| format!("{name}{}", m.attribute("signature").unwrap_or_default()))
        }),
        ..SourceLocation::new(file_path).with_lines(line("start")?, line("end")?)
    };
    location.validate().map_err(|e| invalid("SourceLine", e.to_string()))?;

    Ok(Finding { fingerprint: Fingerprint::default(), pattern_id, category, message, severity, confidence, location })
}
