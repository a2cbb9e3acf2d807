use std::collections::HashMap;

use ringfit::data::io::{read_predictions, read_sparse};
use ringfit::data::{compute_metrics, rank_error};
use ringfit::Checkpoint;

use super::fit::estimated_ranks;
use super::simulate::Truth;
use super::{read_json, write_text};
use crate::error::CliError;
use crate::manifest::{sidecar, RunManifest};
use crate::{Context, EvalArgs};

pub fn eval(ctx: &Context, args: EvalArgs) -> Result<(), CliError> {
    let mut manifest = RunManifest::start("eval", ctx);
    manifest.input(&args.predictions);
    manifest.input(&args.test);
    let preds = read_predictions(&args.predictions)?;
    let test = read_sparse(&args.test)?;
    if preds.shape != test.shape() || preds.kind != test.kind() {
        return Err(CliError::Usage(
            "predictions and test file differ in shape or kind".into(),
        ));
    }

    let lookup: HashMap<&[usize], f64> = (0..preds.len())
        .map(|n| (preds.index(n), preds.values[n]))
        .collect();
    let aligned = (0..test.len())
        .map(|n| {
            lookup.get(test.index(n)).copied().ok_or_else(|| {
                let one_based: Vec<usize> = test.index(n).iter().map(|i| i + 1).collect();
                CliError::Usage(format!("no prediction for test index {one_based:?}"))
            })
        })
        .collect::<Result<Vec<f64>, _>>()?;

    let truth: Option<Truth> = match &args.truth {
        Some(p) => {
            manifest.input(p);
            Some(read_json(p)?)
        }
        None => None,
    };
    let data_range = args.data_range.or(truth.as_ref().map(|t| t.data_range));
    let mut report = compute_metrics(&aligned, &test, data_range)?;
    if let (Some(path), Some(truth)) = (&args.checkpoint, &truth) {
        manifest.input(path);
        let ckpt = Checkpoint::load(path)?;
        report.rank_err = Some(rank_error(&estimated_ranks(&ckpt), &truth.ranks)?);
    }

    let text = report.to_string();
    print!("{text}");
    let manifest_path = match &args.out {
        Some(out) => {
            write_text(out, &text)?;
            manifest.output(out);
            sidecar(out)
        }
        None => sidecar(&args.predictions).with_extension("eval.json"),
    };
    manifest.config(&report)?;
    manifest.finish(&manifest_path)
}
