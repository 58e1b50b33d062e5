use std::sync::OnceLock;

use regex::Regex;

use super::{SceneScript, ScriptError, ScriptSequence, ScriptWarning, UserBrief};

fn markers() -> &'static [Regex; 3] {
    static MARKERS: OnceLock<[Regex; 3]> = OnceLock::new();
    MARKERS.get_or_init(|| {
        [
            // "Scene 3:", "Prompt #2 -", "shot 4)"
            Regex::new(r"^(?i:scene|prompt|shot)\s*#?\d+\s*[:.)\-]?\s*(.*)$").unwrap(),
            // "1." / "2)" followed by whitespace or end of line; "2.5 seconds" is not a marker
            Regex::new(r"^\d+\s*[.)](?:\s+(.*)|$)").unwrap(),
            Regex::new(r"^[-*•]\s+(.*)$").unwrap(),
        ]
    })
}

fn strip_marker(line: &str) -> Option<String> {
    markers().iter().find_map(|re| {
        re.captures(line).map(|caps| {
            caps.get(1)
                .map(|m| m.as_str().trim().to_string())
                .unwrap_or_default()
        })
    })
}

fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        let at_boundary = matches!(c, '.' | '!' | '?')
            && chars.peek().map_or(true, |next| next.is_whitespace());
        if at_boundary {
            let s = current.trim();
            if !s.is_empty() {
                out.push(s.to_string());
            }
            current.clear();
        }
    }
    let tail = current.trim();
    if !tail.is_empty() {
        out.push(tail.to_string());
    }
    out
}

/// Segments raw model output into scenes.
///
/// Lines carrying a list marker win: when any line is numbered or bulleted,
/// only those lines become scenes and the rest (preambles, sign-offs) are
/// dropped. Without markers, several non-blank lines give one scene each, and
/// a lone paragraph is split into sentences, which must number at least two.
pub fn parse_scripts(raw: &str, brief: &UserBrief) -> Result<ScriptSequence, ScriptError> {
    let lines: Vec<&str> = raw
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();

    let marked: Vec<Option<String>> = lines.iter().map(|l| strip_marker(l)).collect();
    let texts: Vec<String> = if marked.iter().any(Option::is_some) {
        marked.into_iter().flatten().filter(|t| !t.is_empty()).collect()
    } else if lines.len() > 1 {
        lines.iter().map(|l| l.to_string()).collect()
    } else if let Some(paragraph) = lines.first() {
        let sentences = split_sentences(paragraph);
        if sentences.len() < 2 {
            return Err(ScriptError::Parse);
        }
        sentences
    } else {
        Vec::new()
    };

    if texts.is_empty() {
        return Err(ScriptError::Parse);
    }
    let mut warnings = Vec::new();
    if texts.len() != brief.n_scenes {
        warnings.push(ScriptWarning::CountMismatch {
            expected: brief.n_scenes,
            got: texts.len(),
        });
    }
    let scenes = texts
        .into_iter()
        .enumerate()
        .map(|(index, text)| SceneScript {
            index,
            text,
            duration_seconds: brief.scene_seconds,
        })
        .collect();
    Ok(ScriptSequence {
        brief: brief.clone(),
        scenes,
        warnings,
    })
}

/// `1. first\n2. second\n...`, the inverse of [`parse_scripts`] on scene texts.
pub fn format_as_numbered_list<S: AsRef<str>>(texts: &[S]) -> String {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{}. {}", i + 1, t.as_ref()))
        .collect::<Vec<_>>()
        .join("\n")
}
