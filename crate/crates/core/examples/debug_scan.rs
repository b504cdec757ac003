use gapsel_core::bank::SystemBank;
use gapsel_core::similarity::FrequencyRange;
use gapsel_core::transfer::*;

fn main() {
    let bank = SystemBank::simulation_bank();
    let target = bank.build_target().unwrap();
    let range = FrequencyRange::new(0.0, 10.0).unwrap();
    let suite = standard_suite(&range, 0.015, 10.5, 1.0, 1).unwrap();
    for gain in [1.0, 0.6, 0.4] {
        for lp in [0.2, 0.1, 0.05] {
            let cfg = TransferConfig {
                learning_gain: gain,
                correction_lowpass: lp,
                seed: Some(1),
                ..Default::default()
            };
            let mut worst: f64 = f64::INFINITY;
            let mut mean_red = 0.0;
            for traj in &suite {
                let base = baseline_tracking(&target, traj).unwrap();
                let log = online_inverse_tracking(&target, &InverseModel::no_transfer(), traj, &cfg, 7).unwrap();
                let red = 100.0 * (1.0 - log.rms / base.rms);
                worst = worst.min(red);
                mean_red += red / suite.len() as f64;
            }
            println!("gain={gain:.1} lp={lp:.2}: mean red {mean_red:6.1}%  worst {worst:6.1}%");
        }
    }
}
