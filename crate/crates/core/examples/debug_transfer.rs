use gapsel_core::bo::{run_selection, SelectionConfig};
use gapsel_core::bank::SystemBank;
use gapsel_core::similarity::FrequencyRange;
use gapsel_core::transfer::*;
use std::time::Instant;

fn main() {
    let bank = SystemBank::simulation_bank();
    let target = bank.build_target().unwrap();
    let sources = bank.build_sources().unwrap();
    let range = FrequencyRange::new(0.0, 10.0).unwrap();
    for master in 1u64..=6 {
        let t0 = Instant::now();
        let sel_cfg = SelectionConfig { seed: Some(master), ..Default::default() };
        let selection = run_selection(&target, &sources, &range, &sel_cfg).unwrap();
        let suite = standard_suite(&range, 0.015, 10.5, 1.0, master).unwrap();
        let cfg = TransferConfig { seed: Some(master), ..Default::default() };
        let report = run_transfer_study(&target, &sources, &suite, &selection, &cfg).unwrap();
        println!("== master {master}  ({:.1}s)  baseline {:.4}", t0.elapsed().as_secs_f64(), report.baseline_mean_rms);
        println!("   zero  rms {:.5}  red {:.1}%  (worst traj red {:.1}%)",
            report.zero_prior.mean_rms, report.zero_prior.mean_reduction_pct,
            report.zero_prior.outcomes.iter().map(|o| o.reduction_pct).fold(f64::INFINITY, f64::min));
        for row in &report.sources {
            println!("   {}  psi*={:.4}  rms={:.5}  red={:.1}%", row.source_id, row.psi_star.unwrap(), row.mean_rms, row.mean_reduction_pct);
        }
        println!("   spearman={}  consistent={}", report.spearman_psi_vs_rms, report.ranking_consistent);
    }
}
