//! Runs a scaled-down spectrum experiment through the same entry point as the
//! command line tool and lists the files it writes.

use msgfem::config::{Experiment, RunConfig};
use msgfem::experiments::{run, Task};

fn main() -> msgfem::Result<()> {
    let mut cfg = RunConfig::preset(Experiment::Spectrum);
    cfg.mesh.cells = 64;
    let out = std::env::temp_dir().join("msgfem-spectrum");
    let manifest = run(Task::Spectrum, &cfg, &out)?;
    for f in &manifest.files {
        println!("{}", f.display());
    }
    print!("{}", std::fs::read_to_string(out.join("spectrum_summary.csv"))?);
    Ok(())
}
