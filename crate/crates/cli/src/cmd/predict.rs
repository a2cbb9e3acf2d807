use ringfit::data::io::{read_sparse, write_predictions, Predictions};
use ringfit::Checkpoint;

use crate::error::CliError;
use crate::manifest::{sidecar, RunManifest};
use crate::{Context, PredictArgs};

pub fn predict(ctx: &Context, args: PredictArgs) -> Result<(), CliError> {
    let mut manifest = RunManifest::start("predict", ctx);
    manifest.input(&args.checkpoint);
    manifest.input(&args.indices);
    let ckpt = manifest.time("read", || Checkpoint::load(&args.checkpoint))?;
    let at = manifest.time("read", || read_sparse(&args.indices))?;
    let values = manifest.time("predict", || ckpt.predict(&at))?;
    let preds = Predictions {
        shape: ckpt.shape.clone(),
        kind: ckpt.kind,
        indices: at.flat_indices().to_vec(),
        values,
    };
    manifest.time("write", || write_predictions(&args.out, &preds))?;
    manifest.output(&args.out);
    manifest.config(&serde_json::json!({
        "engine": ckpt.engine_name(),
        "models_averaged": ckpt.prediction_models().len(),
    }))?;
    ctx.progress(format_args!(
        "predict: {} entries from {} model(s)",
        preds.len(),
        ckpt.prediction_models().len()
    ));
    manifest.finish(&sidecar(&args.out))
}
