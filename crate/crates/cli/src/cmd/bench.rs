use std::fmt::Write;

use ringfit::bench::{log_log_slope, time_engines, BenchConfig};

use super::write_text;
use crate::error::CliError;
use crate::manifest::{sidecar, RunManifest};
use crate::{BenchArgs, Context};

pub fn bench(ctx: &Context, args: BenchArgs) -> Result<(), CliError> {
    let mut manifest = RunManifest::start("bench", ctx);
    if args.sizes.is_empty() {
        return Err(CliError::Usage("--sizes needs at least one value".into()));
    }
    let config = BenchConfig {
        order: args.order,
        rank: args.rank,
        missing_rate: args.missing,
        repeats: args.repeats,
        batch_size: args.batch_size,
        parallel: ctx.parallel(),
        seed: args.seed,
    };
    manifest.seed = Some(config.seed);
    manifest.config(&serde_json::json!({ "sizes": &args.sizes, "bench": &config }))?;

    let mut rows = Vec::new();
    for &size in &args.sizes {
        let row = manifest.time(&format!("size_{size}"), || time_engines(size, &config))?;
        ctx.progress(format_args!("bench: size {size} done"));
        rows.push(row);
    }

    let mut table = String::from("size observed gibbs_seconds online_seconds\n");
    for r in &rows {
        writeln!(
            table,
            "{} {} {:.6e} {:.6e}",
            r.size, r.observed, r.gibbs_seconds, r.online_seconds
        )
        .expect("writing to a String");
    }
    let observed: Vec<f64> = rows.iter().map(|r| r.observed as f64).collect();
    let gibbs: Vec<f64> = rows.iter().map(|r| r.gibbs_seconds).collect();
    let online: Vec<f64> = rows.iter().map(|r| r.online_seconds).collect();
    if let (Some(g), Some(o)) = (
        log_log_slope(&observed, &gibbs),
        log_log_slope(&observed, &online),
    ) {
        writeln!(
            table,
            "# log-log slope vs observed: gibbs {g:.3}, online {o:.3}"
        )
        .expect("writing to a String");
    }
    print!("{table}");

    let manifest_path = match &args.out {
        Some(out) => {
            write_text(out, &table)?;
            manifest.output(out);
            sidecar(out)
        }
        None => std::path::PathBuf::from("bench.manifest.json"),
    };
    manifest.finish(&manifest_path)
}
