use super::McqBody;

pub fn option_label(index: usize) -> char {
    (b'A' + index as u8) as char
}

/// Canonical layout: stem paragraph, question line, one labeled line per
/// option with "(correct)" on the key, then an optional explanation line.
pub fn render_mcq(body: &McqBody) -> String {
    render(body, true)
}

/// Same layout without the answer key, for exam sheets.
pub fn render_mcq_unkeyed(body: &McqBody) -> String {
    render(body, false)
}

fn render(body: &McqBody, keyed: bool) -> String {
    let mut out = String::with_capacity(body.stem.len() + body.question.len() + 200);
    out.push_str(&body.stem);
    out.push('\n');
    out.push_str(&body.question);
    out.push('\n');
    for (i, option) in body.options.iter().enumerate() {
        out.push(option_label(i));
        out.push_str(") ");
        out.push_str(option);
        if keyed && i == body.correct_index {
            out.push_str(" (correct)");
        }
        out.push('\n');
    }
    if keyed {
        if let Some(explanation) = &body.explanation {
            out.push_str("Explanation: ");
            out.push_str(explanation);
            out.push('\n');
        }
    }
    out
}
