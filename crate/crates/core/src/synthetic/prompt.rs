use crate::error::{Error, Result};
use crate::survey::Answer;

const SYSTEM_TEMPLATE: &str = "You are a member of the Swiss party <party>. You have to answer statements based on beliefs of your party. You can only answer with a number between 0 and 100, where 0 means fully disagree and 100 means fully agree. Do not provide reasoning, just the number.";

/// `(system, user)` prompts for one party and one statement.
pub fn build_prompts(party: &str, question_text: &str) -> Result<(String, String)> {
    if party.is_empty() {
        return Err(Error::Input("party label is empty".into()));
    }
    if question_text.is_empty() {
        return Err(Error::Input("question text is empty".into()));
    }
    Ok((
        SYSTEM_TEMPLATE.replace("<party>", party),
        format!("Rate the following statement: '{question_text}'"),
    ))
}

/// Parses a bare 0–100 rating into `[0, 1]`; anything else is missing.
pub fn parse_llm_reply(text: &str) -> Answer {
    let t = text.trim();
    // Only plain decimal notation counts: no signs, exponents, or words like "inf".
    let well_formed = !t.is_empty()
        && t.chars().all(|c| c.is_ascii_digit() || c == '.')
        && t.chars().filter(|&c| c == '.').count() <= 1
        && t.chars().any(|c| c.is_ascii_digit());
    if !well_formed {
        return None;
    }
    let n: f64 = t.parse().ok()?;
    (0.0..=100.0).contains(&n).then(|| n / 100.0)
}
