use gapsel_core::bank::SystemBank;
use gapsel_core::similarity::FrequencyRange;
use gapsel_core::transfer::*;

fn main() {
    let bank = SystemBank::simulation_bank();
    let target = bank.build_target().unwrap();
    let range = FrequencyRange::new(0.0, 10.0).unwrap();
    let suite = standard_suite(&range, 0.015, 10.5, 1.0, 4).unwrap();
    let traj = &suite[10];
    println!("trajectory {}", traj.id);
    let cfg = TransferConfig { seed: Some(4), ..Default::default() };
    let base = baseline_tracking(&target, traj).unwrap();
    let log = online_inverse_tracking(&target, &InverseModel::no_transfer(), traj, &cfg, 4).unwrap();
    println!("baseline rms {:.4}  learned rms {:.4}", base.rms, log.rms);
    let n = log.desired.len();
    for seg in 0..10 {
        let lo = seg * n / 10;
        let hi = (seg + 1) * n / 10;
        let rms: f64 = (lo..hi).map(|k| (log.desired[k] - log.actual[k]).powi(2)).sum::<f64>() / (hi - lo) as f64;
        let maxref = (lo..hi).map(|k| log.reference[k].abs()).fold(0.0f64, f64::max);
        println!("  seg {seg}: rms {:.4}  max|gamma| {:.3}", rms.sqrt(), maxref);
    }
}
