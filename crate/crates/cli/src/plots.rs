//! Plot scripts written next to the reports. Nothing is plotted in
//! process; the scripts read the CSVs and need only matplotlib.

use std::path::Path;

use crate::error::Result;

const SCRIPTS: [(&str, &str); 3] = [
    ("plot_traces.py", include_str!("../scripts/plot_traces.py")),
    ("plot_summary.py", include_str!("../scripts/plot_summary.py")),
    ("plot_slide.py", include_str!("../scripts/plot_slide.py")),
];

/// Writes the scripts that apply to the reports in `dir`.
pub fn emit_plots(dir: &Path) -> Result<Vec<&'static str>> {
    let mut written = Vec::new();
    for (name, body) in SCRIPTS {
        let applies = match name {
            "plot_traces.py" => dir.join("traces").is_dir(),
            "plot_slide.py" => dir.join("slide.csv").exists(),
            _ => true,
        };
        if applies {
            std::fs::write(dir.join(name), body)?;
            written.push(name);
        }
    }
    Ok(written)
}
