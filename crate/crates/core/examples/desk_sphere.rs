//! Trains the desk-scale network on one sphere, reconstructs it and scores
//! the result.
//!
//! ```text
//! cargo run --release --example desk_sphere -- [epochs] [band]
//! ```
use std::time::Instant;

use mifrecon::datagen::{prepare_shape_with_cloud, Dataset, NoisePolicy, PrepareConfig};
use mifrecon::geometry::primitives;
use mifrecon::metrics::evaluate_pair;
use mifrecon::network::{dataset_tensors, NetworkDims, TrainConfig, Trainer};
use mifrecon::reconstruct::{reconstruct_shape, ReconstructOptions};

fn main() -> mifrecon::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(60, |s| s.parse().expect("epochs"));
    let band: Option<f64> = args.next().map(|s| s.parse().expect("band width"));

    let dims = NetworkDims::desk();
    let cfg = PrepareConfig {
        n_near: 800,
        n_cube: 200,
        noise: NoisePolicy::clean(),
        seed: 1,
        ..PrepareConfig::desk()
    };
    let mesh = primitives::icosphere(4);
    let (shape, cloud) = prepare_shape_with_cloud("sphere", &mesh, &cfg, 0)?;
    let mut dataset = Dataset::new(dims.n_d, dims.n_s, dims.k);
    dataset.shapes.push(shape);
    let data = dataset_tensors(&dataset, &dims)?;

    let mut trainer = Trainer::new(TrainConfig { epochs, ..TrainConfig::new(dims) })?;
    let t = Instant::now();
    trainer.fit(&data, None, |tr| {
        if tr.epoch % 10 == 0 {
            println!("epoch {:>3} loss {:.5} ({:.1?})", tr.epoch, tr.history.last().map_or(f64::NAN, |h| h.loss), t.elapsed());
        }
        Ok(())
    })?;

    let t = Instant::now();
    let opts = ReconstructOptions { band, ..Default::default() };
    let recon = reconstruct_shape(&cloud.without_attributes(), &trainer.params, &opts)?;
    let score = evaluate_pair("sphere", &recon, &mesh.normalized()?)?;
    println!(
        "{} triangles in {:.1?}: CD×100 {:.3}, NCE {:.4}",
        recon.triangles.len(),
        t.elapsed(),
        score.cd_x100,
        score.nce
    );
    Ok(())
}
