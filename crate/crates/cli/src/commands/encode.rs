use anyhow::{bail, Context, Result};
use leap::encoders::{lape, rwpe};
use leap::nn::Init;
use leap::train::ParamFile;
use leap::autodiff::ParamStore;
use leap::{DenseMatrix, FeaturedGraph, LeapEncoder, PeSpec};

use super::{jsonl_bytes, load_records};
use crate::args::{EncodeArgs, PeKind};
use crate::output::emit;

/// A LEAP encoder with the parameter store it reads from.
struct Encoder {
    leap: LeapEncoder,
    store: ParamStore,
}

fn leap_encoder(args: &EncodeArgs, feature_dim: usize, seed: u64) -> Result<Encoder> {
    match (&args.params, args.untrained) {
        (Some(_), true) => bail!("--params and --untrained are mutually exclusive"),
        (None, false) => bail!("leap encodings need trained parameters (--params) or --untrained"),
        (Some(path), false) => {
            let file = ParamFile::load(path).with_context(|| format!("cannot load {}", path.display()))?;
            if !matches!(file.model.pe, PeSpec::Leap(_)) {
                bail!("{} holds a model without a LEAP encoder ({})", path.display(), file.model.pe.label());
            }
            let model = file.to_model()?;
            let leap = model.leap().expect("LEAP model has an encoder").clone();
            if leap.feature_dim != feature_dim {
                bail!(
                    "parameters expect {}-dimensional features but the dataset has {feature_dim}",
                    leap.feature_dim
                );
            }
            Ok(Encoder { leap, store: model.store })
        }
        (None, true) => {
            let config = leap::LeapConfig {
                seed,
                ..args.leap.config(false)
            };
            let mut store = ParamStore::new();
            let leap = LeapEncoder::new(config, feature_dim, &mut store, &mut Init::new(seed))?;
            Ok(Encoder { leap, store })
        }
    }
}

pub fn run(args: &EncodeArgs, seed: u64) -> Result<()> {
    let mut records = load_records(&args.input)?;
    let graphs: Vec<FeaturedGraph> = records.iter().map(|r| r.to_graph()).collect::<leap::Result<_>>()?;
    if args.pe != PeKind::Leap && (args.params.is_some() || args.untrained) {
        bail!("--params and --untrained only apply to --pe leap");
    }
    let encoder = match args.pe {
        PeKind::Leap | PeKind::LeapF => {
            let dim = graphs.first().map_or(0, FeaturedGraph::feature_dim);
            Some(leap_encoder(args, dim, seed)?)
        }
        PeKind::None => bail!("--pe none has nothing to encode"),
        _ => None,
    };
    for (record, g) in records.iter_mut().zip(&graphs) {
        let pe: DenseMatrix = match (args.pe, &encoder) {
            (PeKind::Rwpe, _) => rwpe(g, args.leap.pe_dim)?,
            (PeKind::Lape, _) => lape(g, args.leap.pe_dim)?,
            (_, Some(enc)) => enc.leap.encode(&enc.store, g)?,
            _ => unreachable!("encoder chosen above"),
        };
        record.pe = Some(pe.to_rows());
    }
    emit(args.out.as_deref(), &jsonl_bytes(&records)?)
}
