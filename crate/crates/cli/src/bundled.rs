//! Problem files compiled into the binary so every command can be exercised
//! without any setup. Names double as CLI arguments: a problem argument that
//! is not a readable file is looked up here.

use crate::problemfile::{ProblemFile, ProblemFileError};

pub const EXAMPLE_NAMES: [&str; 6] = [
    "ex32_gamma",
    "ex41_box",
    "ex_jump",
    "ex412_bilinear",
    "ex_qp",
    "ex42_bilevel",
];

pub fn bundled_source(name: &str) -> Option<&'static str> {
    match name {
        "ex32_gamma" => Some(include_str!("../problems/ex32_gamma.json")),
        "ex41_box" => Some(include_str!("../problems/ex41_box.json")),
        "ex_jump" => Some(include_str!("../problems/ex_jump.json")),
        "ex412_bilinear" => Some(include_str!("../problems/ex412_bilinear.json")),
        "ex_qp" => Some(include_str!("../problems/ex_qp.json")),
        "ex42_bilevel" => Some(include_str!("../problems/ex42_bilevel.json")),
        _ => None,
    }
}

pub fn load_bundled(name: &str) -> Result<(ProblemFile, Vec<String>), ProblemFileError> {
    let source = bundled_source(name).ok_or_else(|| ProblemFileError::Invalid {
        path: name.to_string(),
        message: format!("not a file and not a bundled example ({})", EXAMPLE_NAMES.join(", ")),
    })?;
    ProblemFile::from_str(source)
}
