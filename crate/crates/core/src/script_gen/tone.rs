use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{build_tone_prompt, CompletionRequest, ScriptError, ScriptSequence, TextExpansionClient};

/// Closed set of movie tones used to pick background music.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToneCategory {
    Epic,
    Tense,
    Joyful,
    Melancholic,
    Mysterious,
    Serene,
    Triumphant,
    Ominous,
}

impl ToneCategory {
    pub const ALL: [ToneCategory; 8] = [
        ToneCategory::Epic,
        ToneCategory::Tense,
        ToneCategory::Joyful,
        ToneCategory::Melancholic,
        ToneCategory::Mysterious,
        ToneCategory::Serene,
        ToneCategory::Triumphant,
        ToneCategory::Ominous,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ToneCategory::Epic => "epic",
            ToneCategory::Tense => "tense",
            ToneCategory::Joyful => "joyful",
            ToneCategory::Melancholic => "melancholic",
            ToneCategory::Mysterious => "mysterious",
            ToneCategory::Serene => "serene",
            ToneCategory::Triumphant => "triumphant",
            ToneCategory::Ominous => "ominous",
        }
    }

    /// Word stems that vote for this tone when the model's answer is unusable.
    fn keywords(self) -> &'static [&'static str] {
        match self {
            ToneCategory::Epic => &["epic", "soar", "vast", "legend", "hero", "journey", "majestic"],
            ToneCategory::Tense => &["tense", "chase", "danger", "emergency", "escape", "narrow", "hairpin", "alarm"],
            ToneCategory::Joyful => &["joy", "laugh", "play", "celebrat", "happy", "smil", "danc"],
            ToneCategory::Melancholic => &["melanchol", "rain", "alone", "farewell", "tear", "lonely", "sad"],
            ToneCategory::Mysterious => &["myster", "fog", "shadow", "secret", "ancient", "unknown", "mist"],
            ToneCategory::Serene => &["seren", "calm", "gentle", "meadow", "sunset", "peaceful", "quiet"],
            ToneCategory::Triumphant => &["triumph", "victor", "checkered flag", "trophy", "champion", "finish line", "winner"],
            ToneCategory::Ominous => &["ominous", "dark", "storm", "doom", "ruin", "looming", "threat"],
        }
    }
}

impl fmt::Display for ToneCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ToneCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        ToneCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown tone category {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToneLabel {
    pub category: ToneCategory,
    pub confidence: f64,
}

const CONTAINED_CONFIDENCE: f64 = 0.8;
const VOTE_CONFIDENCE: f64 = 0.5;

/// Maps a free-form answer onto the enumeration: an exact single word gives
/// confidence 1, a mention inside longer text gives 0.8 split across all
/// categories mentioned (earliest mention wins). `None` when nothing matches.
pub fn map_tone_response(response: &str) -> Option<ToneLabel> {
    let lower = response.to_lowercase();
    let bare = lower.trim_matches(|c: char| !c.is_alphanumeric());
    if let Ok(category) = bare.parse::<ToneCategory>() {
        return Some(ToneLabel {
            category,
            confidence: 1.0,
        });
    }
    let mut mentions: Vec<(usize, ToneCategory)> = ToneCategory::ALL
        .into_iter()
        .filter_map(|c| lower.find(c.as_str()).map(|pos| (pos, c)))
        .collect();
    mentions.sort();
    let (_, category) = *mentions.first()?;
    Some(ToneLabel {
        category,
        confidence: CONTAINED_CONFIDENCE / mentions.len() as f64,
    })
}

fn keyword_patterns() -> &'static Vec<(ToneCategory, Regex)> {
    static PATTERNS: OnceLock<Vec<(ToneCategory, Regex)>> = OnceLock::new();
    PATTERNS.get_or_init(|| {
        ToneCategory::ALL
            .into_iter()
            .flat_map(|c| {
                c.keywords()
                    .iter()
                    .map(move |kw| (c, Regex::new(&format!(r"\b{}", regex::escape(kw))).unwrap()))
            })
            .collect()
    })
}

/// Counts keyword-stem occurrences over all scene texts. Ties go to the
/// category listed first; with no votes at all the result is `epic` at
/// confidence 0.
pub fn keyword_vote(scripts: &ScriptSequence) -> ToneLabel {
    let mut votes = [0usize; 8];
    for scene in &scripts.scenes {
        let text = scene.text.to_lowercase();
        for (category, re) in keyword_patterns() {
            votes[*category as usize] += re.find_iter(&text).count();
        }
    }
    let total: usize = votes.iter().sum();
    let (best, &count) = votes
        .iter()
        .enumerate()
        .fold((0, &0), |acc, (i, v)| if *v > *acc.1 { (i, v) } else { acc });
    let confidence = if total == 0 {
        0.0
    } else {
        VOTE_CONFIDENCE * count as f64 / total as f64
    };
    ToneLabel {
        category: ToneCategory::ALL[best],
        confidence,
    }
}

pub fn summarize_tone(
    scripts: &ScriptSequence,
    client: &dyn TextExpansionClient,
) -> Result<ToneLabel, ScriptError> {
    let prompt = build_tone_prompt(scripts)?;
    let answer = client.complete(&CompletionRequest::new(prompt))?;
    Ok(map_tone_response(&answer).unwrap_or_else(|| keyword_vote(scripts)))
}
