use posmaps::choi::ChoiParams;
use posmaps::optim::{train_loop, LossConfig, Outcome, TrainConfig};
use posmaps::sdp::SolverOptions;

#[test]
fn train_d3_single_run() {
    let params = ChoiParams::random(3, 3, 7);
    let loss_cfg = LossConfig::default();
    let train_cfg = TrainConfig {
        seed: 7,
        max_epochs: 800,
        ..Default::default()
    };
    let t0 = std::time::Instant::now();
    let rec = train_loop(&params, &loss_cfg, &train_cfg, &SolverOptions::default()).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    let last = rec.rows.last().unwrap();
    eprintln!(
        "outcome {:?} success_epoch {:?} epochs {} wall {:.1}s last: loss={:.4} z1={:.4} z2={:.4}",
        rec.outcome,
        rec.success_epoch,
        rec.rows.len(),
        dt,
        last.loss,
        last.zeta1,
        last.zetak
    );
    for r in rec.rows.iter().step_by(25) {
        eprintln!("  epoch {:4}: loss {:.5} z1 {:+.5} z2 {:+.5} ({:.0} ms)", r.epoch, r.loss, r.zeta1, r.zetak, r.wall_s*1e3);
    }
    assert_eq!(rec.outcome, Outcome::Success);
}
