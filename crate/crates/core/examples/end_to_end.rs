//! Runs every pipeline stage through the run-directory interface.
//!
//! Usage: `cargo run --example end_to_end [workspace dir]`

use std::path::PathBuf;

use octflow::cli::{run_text, Command};

const STAGES: [(Command, &str); 7] = [
    (Command::Phantom, "count = 5\n[phantom]\nslices = 8\ndepth = 64\nwidth = 64\nvessel_count = [3, 5]\nradius_range = [2.0, 3.0]\ninner_band = 0.3\nouter_band = 0.7\n"),
    (Command::Train, "corpus = \"phantom\"\nfractions = { train = 0.6, validation = 0.2, test = 0.2 }\nstrip = { height = 32, width = 32 }\nmodel = { blocks = 5, base_filters = 5, bridge = \"concat\" }\ntrain = { learning_rate = 1e-3, batch_size = 4, max_iterations = 200, validation_interval = 50 }\n"),
    (Command::Bakeoff, "corpus = \"phantom\"\nfractions = { train = 0.6, validation = 0.2, test = 0.2 }\nstrip = { height = 32, width = 32 }\ntrain = { learning_rate = 1e-3, batch_size = 4, max_iterations = 20, validation_interval = 10 }\n"),
    (Command::Infer, "train_run = \"train\"\ncorpus = \"phantom\"\n"),
    (Command::Project, "[[maps]]\nname = \"truth\"\nvolume = \"phantom/volumes/phantom-000.flow.vol\"\nband_from = \"phantom/volumes/phantom-000.structure.vol\"\n"),
    (Command::Eval, "corpus = \"phantom\"\ninfer_run = \"infer\"\nsquare_side = 8\nsquare_count = 4\n"),
    (Command::Stats, "paired = \"eval/paired.csv\"\nclinical_reference = true\n"),
];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("octflow_end_to_end"), PathBuf::from);
    std::fs::create_dir_all(&root)?;
    for (cmd, text) in STAGES {
        let hash = run_text(cmd, text, &root, &root.join(cmd.name()))?;
        println!("{:<8} config_sha256={hash}", cmd.name());
    }
    for report in ["eval/report.txt", "stats/report.txt"] {
        println!("--- {report}\n{}", std::fs::read_to_string(root.join(report))?);
    }
    Ok(())
}
