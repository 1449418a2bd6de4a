//! Factor fill and eigensolve time of the saddle-point system on one interior
//! 3D subdomain, full oversampling domain versus ring.

use msgfem::config::{Experiment, RunConfig};
use msgfem::experiments::timing_instance;
use msgfem::local_spaces::{eigensolve, Variant};

fn main() -> msgfem::Result<()> {
    let cfg = RunConfig::preset(Experiment::TimingFillin);
    let opts = cfg.eigen.options(cfg.seed);
    for m in [5, 9, 13] {
        let (mesh, coeff, d, i) = timing_instance(&cfg, m, 1)?;
        for variant in [Variant::Full, Variant::Ring] {
            let r = eigensolve(&mesh, &coeff, &d, i, variant, 6, &opts)?;
            println!(
                "m = {m:2} {variant:4}  saddle dim {:6}  nnz/row {:7.1}  factor {:6.2}s  iterate {:6.2}s",
                r.stats.saddle_dim,
                r.stats.fill.nnz_per_row(),
                r.stats.factor_seconds,
                r.stats.solve_seconds
            );
        }
    }
    Ok(())
}
