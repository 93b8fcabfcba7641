// Scratch probe for acceptance-criterion configs; not part of the deliverable.
use retarget_core::datagen::*;
use retarget_core::eval::*;
use retarget_core::net::*;
use std::time::Instant;

fn main() {
    let mode = std::env::args().nth(1).unwrap_or_else(|| "ablate".into());
    let rig = make_procedural_rig(1, 2000, 62).unwrap();
    let tmpl = template_from_rig(&rig).unwrap();
    let dist = default_pose_distribution();

    if mode == "c46" {
        // criteria 4 and 6 at their pinned recipe
        let gen = GenConfig { count: 5000, seed: 42, ..GenConfig::default() };
        let data = generate_dataset(&rig, &tmpl, &rig.reasonable, &dist, &gen).unwrap();
        let (pool, heldout) = ablation_split(&data);
        let spec = NetworkSpec::for_rig(Variant::FullGrouping, &rig);
        let cfg = TrainConfig { epochs: 20, seed: 7, ..TrainConfig::default() };
        let t = Instant::now();
        let (params, rep) = train(pool, &spec, &cfg).unwrap();
        println!("c4: {:.0}s  ratio {:.4} (init {:.4} final {:.4})",
            t.elapsed().as_secs_f64(),
            rep.final_val_loss() / rep.initial_val_loss(),
            rep.initial_val_loss(), rep.final_val_loss());
        let untrained = init_params(&spec, 7).unwrap();
        let u = round_trip_eval(&rig, &tmpl, &untrained, &spec, heldout).unwrap().mean;
        let tr = round_trip_eval(&rig, &tmpl, &params, &spec, heldout).unwrap().mean;
        let oracle = round_trip_eval_oracle(&rig, &tmpl, heldout).unwrap().mean;
        println!("c6: oracle {oracle:.2e}  untrained {u:.3}  trained {tr:.3}  ratio {:.4}", tr / u);
        return;
    }

    // candidate criterion-5 recipe
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(36);
    let lr_step: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(12);
    let count: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let lr0: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let gen = GenConfig { count, seed: 43, ..GenConfig::default() };
    let data = generate_dataset(&rig, &tmpl, &rig.reasonable, &dist, &gen).unwrap();
    let cfg = TrainConfig { epochs, lr_step_epochs: lr_step, lr0, ..TrainConfig::default() };
    let t = Instant::now();
    let abl = ablation_run(&data, &Variant::all(), &[101, 202, 303], &rig, &tmpl, &cfg).unwrap();
    println!("ablation (epochs={epochs} lr_step={lr_step} n={count} lr0={lr0:.0e}): {:.0}s", t.elapsed().as_secs_f64());
    for c in &abl.cells {
        println!("  {} seed {} -> {:?}", c.variant, c.seed, c.heldout_mse);
    }
    println!("medians: {:?}", abl.medians);
}
