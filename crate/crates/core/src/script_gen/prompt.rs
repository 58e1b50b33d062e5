use super::{ScriptError, ScriptSequence, ToneCategory, UserBrief};

const PREAMBLE: &str = "Write a sequence of prompts, using for movie generation for AI. Requirements:";

/// Requirements two through five, quoted as-is. Requirement one carries the
/// scene count and duration slots and is rendered separately.
pub const EXPANSION_REQUIREMENTS: [&str; 4] = [
    "2) each prompt contains clear subjects and detailed descriptions;",
    "3) each prompt contains texts like \"4K\" and \"high resolution\" for leading high-quality generation;",
    "4) the transition of each scene is very smooth;",
    "5) no other character appears in this movie.",
];

const SUBJECT_LEAD: &str = "The movie is about ";

/// Renders the expansion prompt. Pure: identical briefs give identical bytes.
pub fn build_expansion_prompt(brief: &UserBrief) -> Result<String, ScriptError> {
    brief.validate()?;
    let mut out = String::with_capacity(512);
    out.push_str(PREAMBLE);
    out.push('\n');
    out.push_str(&format!(
        "1) write {} prompts, each prompt only serves for one scene lasting for about {} seconds;",
        brief.n_scenes, brief.scene_seconds
    ));
    for req in EXPANSION_REQUIREMENTS {
        out.push('\n');
        out.push_str(req);
    }
    out.push(' ');
    out.push_str(SUBJECT_LEAD);
    out.push_str(brief.text.trim());
    Ok(out)
}

/// Prompt asking the model for a single tone word out of the closed set.
pub fn build_tone_prompt(scripts: &ScriptSequence) -> Result<String, ScriptError> {
    if scripts.scenes.is_empty() {
        return Err(ScriptError::NoScenes);
    }
    let options = ToneCategory::ALL
        .iter()
        .map(|c| c.as_str())
        .collect::<Vec<_>>()
        .join(", ");
    let mut out = format!(
        "Summarize the plot and tone of the movie described by the scene scripts below. \
         Answer with exactly one word chosen from: {options}.\nScripts:"
    );
    for scene in &scripts.scenes {
        out.push_str(&format!("\n{}. {}", scene.index + 1, scene.text));
    }
    Ok(out)
}
