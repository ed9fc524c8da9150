/// Pulls the artifact out of a model response: the body of the last
/// markdown code fence when there is one, otherwise the whole text.
pub fn extract_artifact(response: &str) -> String {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in response.lines() {
        let fence = line.trim_start().starts_with("```");
        match (&mut current, fence) {
            (None, true) => current = Some(Vec::new()),
            (Some(body), true) => {
                blocks.push(body.join("\n"));
                current = None;
            }
            (Some(body), false) => body.push(line),
            (None, false) => {}
        }
    }
    // an unclosed fence still counts: models get cut off
    if let Some(body) = current {
        blocks.push(body.join("\n"));
    }
    match blocks.pop() {
        Some(b) => b.trim().to_string() + "\n",
        None => response.trim().to_string() + "\n",
    }
}
