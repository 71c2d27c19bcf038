//! Toy hybrid versus pure-attention decoder over a context ladder: prefill
//! time, decode throughput and session memory, with fitted growth rates.

use hybrid_mllm::bench::{efficiency_ladder, fit_exponent, fit_line, toy_pair, Timing, WallClock};
use hybrid_mllm::model::HybridModel;

fn main() -> hybrid_mllm::Result<()> {
    let ladder = [128, 256, 512, 1024];
    let (hybrid, attention) = toy_pair(16);
    let timing = Timing { warmups: 1, trials: 3 };
    let mut clock = WallClock::default();
    let xs: Vec<f64> = ladder.iter().map(|&t| t as f64).collect();
    for (label, cfg) in [("hybrid", hybrid), ("attention", attention)] {
        let model = HybridModel::<f32>::random(&cfg, 0)?;
        let reports = efficiency_ladder(label, &model, &ladder, 32, timing, &mut clock)?;
        println!("== {label} ({} attention layers of {})", cfg.n_attn_layers(), cfg.n_layers());
        for r in &reports {
            println!(
                "  T {:>5}: prefill {:.4}s  decode {:>8.1} tok/s  session {:>8} B",
                r.context, r.prefill.median, r.throughput.median, r.session_bytes
            );
        }
        let prefill: Vec<f64> = reports.iter().map(|r| r.prefill.median).collect();
        let step: Vec<f64> = reports.iter().map(|r| r.decode_step_seconds()).collect();
        let mem: Vec<f64> = reports.iter().map(|r| r.session_bytes as f64).collect();
        println!(
            "  prefill exponent {:.2}, decode-step slope {:.2e} s/token, memory slope {:.1} B/token (analytic {})",
            fit_exponent(&xs, &prefill),
            fit_line(&xs, &step).0,
            fit_line(&xs, &mem).0,
            cfg.kv_scalars_per_token() * 4
        );
    }
    Ok(())
}
