//! Regenerate the demonstration recordings under `fixtures/recordings/`.
//!
//! ```text
//! cargo run --example synthesize_demos -- crates/core/fixtures/recordings
//! ```

use std::path::PathBuf;

use digknow::eval::TaskSuite;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/recordings"));
    std::fs::create_dir_all(&dir)?;
    for rec in TaskSuite::bundled().recordings()? {
        let id = rec.id.clone().unwrap_or_default();
        let path = dir.join(format!("{id}.json"));
        std::fs::write(&path, serde_json::to_string(&rec)? + "\n")?;
        println!("{} ({} frames)", path.display(), rec.frames.len());
    }
    Ok(())
}
