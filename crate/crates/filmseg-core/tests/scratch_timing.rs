//! Temporary timing probe. Deleted before release.

use std::time::Instant;

use filmseg_core::accept::{run_pipeline, smoke_overrides};
use filmseg_core::config::resolve;

#[test]
#[ignore]
fn full_pipeline_timing() {
    let settings = resolve(None, Vec::<&str>::new()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let t0 = Instant::now();
    let mut last = Instant::now();
    let mut progress = |msg: &str| {
        println!("[{:7.2}s +{:6.2}s] {msg}", t0.elapsed().as_secs_f64(), last.elapsed().as_secs_f64());
        last = Instant::now();
    };
    let out = run_pipeline(&settings, dir.path(), &mut progress).unwrap();
    println!("total: {:.2}s", t0.elapsed().as_secs_f64());
    println!(
        "frozen seen {:.3} unseen {:.3} | cross unseen {:.3} | ft unseen {:.3} | det {:.3} | hyb {:.3}",
        out.frozen.seen.mean_iou,
        out.frozen.unseen.mean_iou,
        out.cross.unseen.mean_iou,
        out.finetune.unseen.mean_iou,
        out.detector_unseen.mean_iou,
        out.hybrid_unseen.mean_iou
    );
    println!("param ratio {:.4}", out.frozen.train.decoder_param_ratio);
    let det = &out.detector_unseen;
    for b in &det.buckets {
        println!("det bucket A{}: {:.3} (n={})", b.attribute_count, b.mean_iou, b.n_samples);
    }
    for b in &out.hybrid_unseen.buckets {
        println!("hyb bucket A{}: {:.3} (n={})", b.attribute_count, b.mean_iou, b.n_samples);
    }
}

#[test]
fn smoke_pipeline_timing() {
    let settings = resolve(None, smoke_overrides()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let t0 = Instant::now();
    let mut last = Instant::now();
    let mut progress = |msg: &str| {
        println!("[{:7.2}s +{:6.2}s] {msg}", t0.elapsed().as_secs_f64(), last.elapsed().as_secs_f64());
        last = Instant::now();
    };
    let out = run_pipeline(&settings, dir.path(), &mut progress).unwrap();
    println!("total: {:.2}s", t0.elapsed().as_secs_f64());
    println!(
        "frozen seen {:.3} unseen {:.3} | cross unseen {:.3} | ft unseen {:.3} | det {:.3} | hyb {:.3}",
        out.frozen.seen.mean_iou,
        out.frozen.unseen.mean_iou,
        out.cross.unseen.mean_iou,
        out.finetune.unseen.mean_iou,
        out.detector_unseen.mean_iou,
        out.hybrid_unseen.mean_iou
    );
    println!("param ratio {:.4}", out.frozen.train.decoder_param_ratio);
}
