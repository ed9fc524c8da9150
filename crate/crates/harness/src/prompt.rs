//! Prompt construction from the fixed task templates.

use crate::dataset::ProjectBundle;
use crate::task::TaskKind;

pub const CODE_FROM_LOGICAL: &str = include_str!("../templates/code_from_logical.md");
pub const CODE_FROM_PHYSICAL: &str = include_str!("../templates/code_from_physical.md");
pub const GEN_LOGICAL: &str = include_str!("../templates/gen_logical.md");
pub const GEN_PHYSICAL: &str = include_str!("../templates/gen_physical.md");

pub const DESCRIPTION: &str = "{Project Description Text}";
pub const LOGICAL_JSON: &str = "{Standardized Logical Diagram JSON}";
pub const PHYSICAL_JSON: &str = "{Standardized Physical Diagram JSON}";
pub const SKETCH: &str = "{Sketch Code Text}";

const SEPARATOR: &str = "\n---\n\n";

const STEPWISE_CIRCUIT: &str = "Work in two steps. First answer the logical circuit task above with its JSON. \
Then use that logical circuit to answer the physical layout task. Only the last JSON block in your answer is graded.\n";

const STEPWISE_CODE: &str = "Work in two steps. First rewrite the physical layout above as a logical circuit: \
a JSON object with the same \"components\" (without the breadboard) and direct pin-to-pin \"connections\". \
Then write the code for that logical circuit. Only the last code block in your answer is graded.\n";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PromptOptions {
    /// Ask for an intermediate logical circuit before the physical layout
    /// or the code. Only affects the two tasks that involve a physical
    /// circuit.
    pub logical_first: bool,
}

/// Replaces each `{Placeholder}` with its value. Text without
/// placeholders comes back unchanged.
pub fn fill_template(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in values {
        out = out.replace(key, value);
    }
    out
}

pub fn template_for(task: TaskKind) -> &'static str {
    match task {
        TaskKind::GenLogical => GEN_LOGICAL,
        TaskKind::GenPhysical => GEN_PHYSICAL,
        TaskKind::CodeFromLogical => CODE_FROM_LOGICAL,
        TaskKind::CodeFromPhysical => CODE_FROM_PHYSICAL,
    }
}

pub fn build_prompt(project: &ProjectBundle, task: TaskKind, options: PromptOptions) -> String {
    let values = [
        (DESCRIPTION, project.description.trim()),
        (LOGICAL_JSON, project.logical_text.trim()),
        (PHYSICAL_JSON, project.physical_text.trim()),
        (SKETCH, project.code.trim_end()),
    ];
    let base = fill_template(template_for(task), &values);
    if !options.logical_first {
        return base;
    }
    match task {
        TaskKind::GenPhysical => {
            let logical = fill_template(GEN_LOGICAL, &values);
            format!("{logical}{SEPARATOR}{base}{SEPARATOR}{STEPWISE_CIRCUIT}")
        }
        TaskKind::CodeFromPhysical => format!("{base}{SEPARATOR}{STEPWISE_CODE}"),
        TaskKind::GenLogical | TaskKind::CodeFromLogical => base,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_placeholders_is_verbatim() {
        let t = "# Plain\nnothing to fill {here}\n";
        assert_eq!(fill_template(t, &[(DESCRIPTION, "x")]), t);
    }

    #[test]
    fn templates_carry_expected_markers() {
        assert!(GEN_PHYSICAL.contains("#### Electrical Connections:"));
        assert!(CODE_FROM_PHYSICAL.contains("#### Electrical Connections:"));
        assert!(CODE_FROM_LOGICAL.starts_with("# Arduino Code Generation Task (Logical Hardware)"));
        for t in [CODE_FROM_LOGICAL, CODE_FROM_PHYSICAL] {
            assert!(t.contains("Please provide only the code without explanations or markdown formatting."));
        }
        assert!(GEN_LOGICAL.contains(SKETCH) && GEN_PHYSICAL.contains(SKETCH));
        assert!(CODE_FROM_LOGICAL.contains(LOGICAL_JSON));
        assert!(CODE_FROM_PHYSICAL.contains(PHYSICAL_JSON));
    }
}
