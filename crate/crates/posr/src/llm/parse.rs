//! Total parsers for model output. Every input yields a value or a
//! [`ParseFailure`].

use posr_core::model::{RefLabel, SegmentSpan, Worksheet};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("could not parse model output: {reason}")]
pub struct ParseFailure {
    pub raw: String,
    pub reason: String,
}

impl ParseFailure {
    fn new(raw: &str, reason: impl Into<String>) -> Self {
        Self {
            raw: raw.to_string(),
            reason: reason.into(),
        }
    }
}

/// First JSON array, scanning every `[` left to right, that `accept` maps
/// to `Some`. Surrounding prose and code fences are skipped naturally.
fn first_array<T>(text: &str, mut accept: impl FnMut(&[Value]) -> Option<T>) -> Option<T> {
    for (i, _) in text.match_indices('[') {
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        if let Some(Ok(Value::Array(items))) = stream.next() {
            if let Some(v) = accept(&items) {
                return Some(v);
            }
        }
    }
    None
}

/// Line index from a JSON number or numeric string, clamped to
/// `[0, n_lines)`.
fn line_index(v: &Value, n_lines: usize) -> Option<usize> {
    let raw = match v {
        Value::Number(n) => n
            .as_i64()
            .map(|x| x as f64)
            .or_else(|| n.as_f64().filter(|f| f.fract() == 0.0))?,
        Value::String(s) => s.trim().parse::<i64>().ok()? as f64,
        _ => return None,
    };
    let max = n_lines.saturating_sub(1) as f64;
    Some(raw.clamp(0.0, max) as usize)
}

/// Parses `[[start, end], ...]`.
pub fn parse_segmentation(text: &str, n_lines: usize) -> Result<Vec<SegmentSpan>, ParseFailure> {
    first_array(text, |items| {
        items
            .iter()
            .map(|pair| match pair {
                Value::Array(p) if p.len() == 2 => Some(SegmentSpan::unlabeled(
                    line_index(&p[0], n_lines)?,
                    line_index(&p[1], n_lines)?,
                )),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
    })
    .ok_or_else(|| ParseFailure::new(text, "no list of [start, end] pairs found"))
}

fn is_separator(c: char) -> bool {
    c.is_whitespace()
        || matches!(
            c,
            ',' | ';' | ':' | '(' | ')' | '[' | ']' | '{' | '}' | '"' | '\'' | '`' | '*'
        )
}

/// `null` gives `Null`, `-1` gives `NotInCorpus`, otherwise the first token
/// naming a worksheet problem.
pub fn parse_retrieval(text: &str, worksheet: &Worksheet) -> Result<RefLabel, ParseFailure> {
    for token in text.split(is_separator) {
        let token = token.trim_end_matches(['.', '!', '?']);
        if token.is_empty() {
            continue;
        }
        if worksheet.contains(token) {
            return Ok(RefLabel::Problem(token.to_string()));
        }
        if token.eq_ignore_ascii_case("null") {
            return Ok(RefLabel::Null);
        }
        if token == "-1" {
            return Ok(RefLabel::NotInCorpus);
        }
    }
    Err(ParseFailure::new(text, "no problem id, null or -1 found"))
}

fn joint_reference(v: Option<&Value>, worksheet: &Worksheet) -> RefLabel {
    let id = match v {
        None | Some(Value::Null) => return RefLabel::Null,
        Some(Value::Number(n)) => n.to_string(),
        Some(Value::String(s)) => s.trim().to_string(),
        Some(other) => other.to_string(),
    };
    if id.eq_ignore_ascii_case("null") || id.is_empty() {
        RefLabel::Null
    } else if id == "-1" {
        RefLabel::NotInCorpus
    } else if worksheet.contains(&id) {
        RefLabel::Problem(id)
    } else {
        log::warn!("model named unknown problem id {id:?}; treating it as not in the worksheet");
        RefLabel::NotInCorpus
    }
}

/// Parses `[{"start_line_idx": .., "end_line_idx": .., "problem_id": ..}, ...]`.
/// Ids missing from the worksheet become `NotInCorpus`.
pub fn parse_joint(text: &str, n_lines: usize, worksheet: &Worksheet) -> Result<Vec<SegmentSpan>, ParseFailure> {
    first_array(text, |items| {
        items
            .iter()
            .map(|item| {
                let obj = item.as_object()?;
                Some(SegmentSpan::new(
                    line_index(obj.get("start_line_idx")?, n_lines)?,
                    line_index(obj.get("end_line_idx")?, n_lines)?,
                    joint_reference(obj.get("problem_id"), worksheet),
                ))
            })
            .collect::<Option<Vec<_>>>()
    })
    .ok_or_else(|| ParseFailure::new(text, "no list of segment objects found"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use posr_core::model::Problem;

    fn ws() -> Worksheet {
        Worksheet::new("w", vec![Problem::new("3", "a"), Problem::new("7", "b")]).unwrap()
    }

    #[test]
    fn segmentation_formats() {
        assert_eq!(
            parse_segmentation("[[0,10],[11,20]]", 21).unwrap(),
            vec![SegmentSpan::unlabeled(0, 10), SegmentSpan::unlabeled(11, 20)]
        );
        assert_eq!(
            parse_segmentation("Here are the segments:\n```[[0,5]]```", 10).unwrap(),
            vec![SegmentSpan::unlabeled(0, 5)]
        );
        assert!(parse_segmentation("I cannot determine segments.", 10).is_err());
        assert_eq!(parse_segmentation("[]", 10).unwrap(), vec![]);
    }

    #[test]
    fn segmentation_clamps() {
        assert_eq!(
            parse_segmentation("[[-3, 4], [5, 99]]", 10).unwrap(),
            vec![SegmentSpan::unlabeled(0, 4), SegmentSpan::unlabeled(5, 9)]
        );
    }

    #[test]
    fn segmentation_skips_non_pairs() {
        let text = "segments [1, 2, 3] then [[0, 1], [2, 3]]";
        assert_eq!(parse_segmentation(text, 4).unwrap().len(), 2);
    }

    #[test]
    fn retrieval_answers() {
        assert_eq!(parse_retrieval("null", &ws()).unwrap(), RefLabel::Null);
        assert_eq!(parse_retrieval("NULL", &ws()).unwrap(), RefLabel::Null);
        assert_eq!(parse_retrieval("\"null\"", &ws()).unwrap(), RefLabel::Null);
        assert_eq!(parse_retrieval("-1", &ws()).unwrap(), RefLabel::NotInCorpus);
        assert_eq!(parse_retrieval("Problem ID 7", &ws()).unwrap(), RefLabel::problem("7"));
        assert_eq!(parse_retrieval("3.", &ws()).unwrap(), RefLabel::problem("3"));
        assert!(parse_retrieval("no idea", &ws()).is_err());
    }

    #[test]
    fn joint_answers() {
        let ws = ws();
        assert_eq!(
            parse_joint(r#"[{"start_line_idx":0,"end_line_idx":9,"problem_id":3}]"#, 10, &ws).unwrap(),
            vec![SegmentSpan::new(0, 9, RefLabel::problem("3"))]
        );
        let text = r#"```json
[{"start_line_idx": 0, "end_line_idx": 4, "problem_id": -1},
 {"start_line_idx": 5, "end_line_idx": 6, "problem_id": null},
 {"start_line_idx": 7, "end_line_idx": 9, "problem_id": "42"}]
```"#;
        let spans = parse_joint(text, 10, &ws).unwrap();
        let refs: Vec<_> = spans.iter().map(|s| s.reference.clone()).collect();
        assert_eq!(refs, vec![RefLabel::NotInCorpus, RefLabel::Null, RefLabel::NotInCorpus]);
        assert!(parse_joint("sorry", 10, &ws).is_err());
    }
}
