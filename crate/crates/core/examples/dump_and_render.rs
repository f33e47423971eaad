//! Generate through the command layer, write the dump and render it.

use gvs::commands::{cmd_gen, cmd_render, cmd_schedule_dump};
use gvs::config::{RunConfig, SamplerKind};

fn main() -> gvs::error::Result<()> {
    let dir = std::env::temp_dir().join("gvs_dump_and_render");
    let mut cfg = RunConfig::default();
    cfg.sampler = SamplerKind::Gvs;
    cfg.seed = 7;
    let out = cmd_gen(&cfg, &dir)?;
    println!("dump {} ({} frames)", out.sequence.display(), cfg.trajectory.frames);
    println!("f2fc {:.2e}", out.report.f2fc);
    println!("image {}", cmd_render(&out.sequence, None)?.display());
    println!("schedule {}", cmd_schedule_dump(&cfg, &dir)?.display());
    Ok(())
}
