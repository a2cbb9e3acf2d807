use ringfit::data::io::write_sparse;
use ringfit::data::{generate_synthetic, SyntheticSpec};
use ringfit::{DataKind, TRModel};
use serde::{Deserialize, Serialize};

use super::{create_dir, write_json};
use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::{Context, Kind, SimulateArgs};

/// Ground truth written by `simulate` as truth.json.
#[derive(Debug, Serialize, Deserialize)]
pub struct Truth {
    pub spec: SyntheticSpec,
    pub ranks: Vec<usize>,
    pub offset: f64,
    pub noise_std: f64,
    pub data_range: f64,
    pub model: TRModel,
}

pub fn simulate(ctx: &Context, args: SimulateArgs) -> Result<(), CliError> {
    let mut manifest = RunManifest::start("simulate", ctx);
    let kind = match args.kind {
        Kind::Continuous => DataKind::Continuous,
        Kind::Binary => DataKind::Binary,
    };
    let snr_db = match (args.noiseless, args.snr) {
        (true, _) => None,
        (false, Some(s)) => Some(s),
        (false, None) => SyntheticSpec::default().snr_db,
    };
    let spec = SyntheticSpec {
        shape: args.shape,
        true_rank: args.rank,
        snr_db,
        missing_rate: args.missing,
        kind,
        signal_scale: args.signal_scale,
        seed: args.seed,
    };
    spec.validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    manifest.seed = Some(spec.seed);
    manifest.config(&spec)?;

    let data = manifest.time("generate", || generate_synthetic(&spec))?;
    create_dir(&args.out)?;
    let train = args.out.join("train.txt");
    let test = args.out.join("test.txt");
    let truth_path = args.out.join("truth.json");
    manifest.time("write", || -> Result<(), CliError> {
        write_sparse(&train, &data.train)?;
        write_sparse(&test, &data.test)?;
        write_json(
            &truth_path,
            &Truth {
                ranks: data.truth.ranks(),
                offset: data.offset,
                noise_std: data.noise_std,
                data_range: data.data_range,
                model: data.truth,
                spec,
            },
        )
    })?;
    for p in [&train, &test, &truth_path] {
        manifest.output(p);
    }
    ctx.progress(format_args!(
        "simulate: {} observed, {} held out",
        data.train.len(),
        data.test.len()
    ));
    manifest.finish(&args.out.join("manifest.json"))
}
