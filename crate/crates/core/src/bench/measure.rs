//! Wall-clock measurements of prefill latency, decode throughput and
//! session memory on toy models.

use std::collections::VecDeque;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{argmax, HybridConfig, HybridModel, ModelInput};
use crate::protocol::WORD_BASE;
use crate::rng;
use crate::tensor::{Scalar, Tensor, Var};

use super::cost::{flops_estimate, CostModelConfig};

/// Seconds since an arbitrary origin.
pub trait Clock {
    fn now(&mut self) -> f64;
}

/// Monotonic wall clock.
pub struct WallClock(Instant);

impl Default for WallClock {
    fn default() -> Self {
        Self(Instant::now())
    }
}

impl Clock for WallClock {
    fn now(&mut self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Replays scripted readings, repeating the last one when exhausted.
pub struct StubClock {
    readings: VecDeque<f64>,
    last: f64,
}

impl StubClock {
    pub fn new(readings: impl IntoIterator<Item = f64>) -> Self {
        Self {
            readings: readings.into_iter().collect(),
            last: 0.0,
        }
    }
}

impl Clock for StubClock {
    fn now(&mut self) -> f64 {
        if let Some(t) = self.readings.pop_front() {
            self.last = t;
        }
        self.last
    }
}

/// `(n − 1) / (time_n − time_1)`, where `time_k` is the moment the `k`-th
/// token was emitted.
pub fn throughput(n: usize, time_1: f64, time_n: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::Precondition(format!("throughput needs at least 2 tokens, got {n}")));
    }
    let span = time_n - time_1;
    if !(span > 0.0) {
        return Err(Error::Precondition(format!("non-increasing emission times {time_1} → {time_n}")));
    }
    Ok((n - 1) as f64 / span)
}

/// Warmup and repetition counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub warmups: usize,
    pub trials: usize,
}

impl Default for Timing {
    fn default() -> Self {
        Self { warmups: 3, trials: 5 }
    }
}

pub fn median(samples: &[f64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => s[n / 2],
        _ => 0.5 * (s[n / 2 - 1] + s[n / 2]),
    }
}

/// Median of the kept samples, with every sample retained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub median: f64,
    pub samples: Vec<f64>,
    pub warmup_samples: Vec<f64>,
}

fn repeat(timing: Timing, mut run: impl FnMut() -> Result<f64>) -> Result<Measurement> {
    let warmup_samples = (0..timing.warmups).map(|_| run()).collect::<Result<Vec<_>>>()?;
    let samples = (0..timing.trials.max(1)).map(|_| run()).collect::<Result<Vec<_>>>()?;
    Ok(Measurement {
        median: median(&samples),
        samples,
        warmup_samples,
    })
}

/// Deterministic word tokens standing in for a prompt.
pub fn prompt_tokens(t: usize, vocab: usize, seed: u64) -> Vec<usize> {
    let mut r = rng::seeded(seed);
    let span = vocab.saturating_sub(WORD_BASE).max(1);
    (0..t).map(|_| (WORD_BASE + rng::below(&mut r, span)).min(vocab - 1)).collect()
}

/// Median fresh-session prefill time of `t` tokens.
pub fn measure_prefill<S: Scalar>(
    model: &HybridModel<S>,
    t: usize,
    timing: Timing,
    clock: &mut dyn Clock,
) -> Result<Measurement> {
    if t == 0 {
        return Err(Error::Precondition("prefill needs at least one token".into()));
    }
    let ids = prompt_tokens(t, model.cfg.vocab_size, 0);
    repeat(timing, || {
        let mut session = model.new_session();
        let start = clock.now();
        session.prefill(ModelInput::text(&ids))?;
        Ok(clock.now() - start)
    })
}

/// Emission times of `n` greedy tokens after a `t`-token prompt, measured
/// from the start of prefill.
pub fn emission_times<S: Scalar>(model: &HybridModel<S>, t: usize, n: usize, clock: &mut dyn Clock) -> Result<Vec<f64>> {
    let ids = prompt_tokens(t.max(1), model.cfg.vocab_size, 0);
    let mut session = model.new_session();
    let start = clock.now();
    let mut logits = session.prefill(ModelInput::text(&ids))?;
    let mut times = Vec::with_capacity(n);
    for k in 0..n {
        let next = argmax(logits.data());
        times.push(clock.now() - start);
        if k + 1 < n {
            logits = session.decode_step(next)?;
        }
    }
    Ok(times)
}

/// Decode rate after a `t`-token context: the median over trials of
/// `(n − 1) / (time_n − time_1)`.
pub fn measure_throughput<S: Scalar>(
    model: &HybridModel<S>,
    t: usize,
    n: usize,
    timing: Timing,
    clock: &mut dyn Clock,
) -> Result<Measurement> {
    if n < 2 {
        return Err(Error::Precondition(format!("throughput needs at least 2 tokens, got {n}")));
    }
    repeat(timing, || {
        let times = emission_times(model, t, n, clock)?;
        throughput(n, times[0], times[n - 1])
    })
}

/// Cache and state bytes held by a session after a `t`-token prefill.
pub fn session_bytes<S: Scalar>(model: &HybridModel<S>, t: usize) -> Result<usize> {
    let ids = prompt_tokens(t.max(1), model.cfg.vocab_size, 0);
    let mut session = model.new_session();
    session.prefill(ModelInput::text(&ids))?;
    Ok(session.byte_size())
}

/// One context length of an efficiency ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub label: String,
    pub context: usize,
    pub prefill: Measurement,
    pub throughput: Measurement,
    pub session_bytes: usize,
    pub config: HybridConfig,
}

impl EfficiencyReport {
    pub fn decode_step_seconds(&self) -> f64 {
        1.0 / self.throughput.median
    }
}

/// Prefill, throughput and memory at every context length in `ladder`.
pub fn efficiency_ladder<S: Scalar>(
    label: &str,
    model: &HybridModel<S>,
    ladder: &[usize],
    decode_tokens: usize,
    timing: Timing,
    clock: &mut dyn Clock,
) -> Result<Vec<EfficiencyReport>> {
    ladder
        .iter()
        .map(|&t| {
            Ok(EfficiencyReport {
                label: label.into(),
                context: t,
                prefill: measure_prefill(model, t, timing, clock)?,
                throughput: measure_throughput(model, t, decode_tokens, timing, clock)?,
                session_bytes: session_bytes(model, t)?,
                config: model.cfg.clone(),
            })
        })
        .collect()
}

/// Least-squares slope and intercept of `y` on `x`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Exponent `p` of the power law `y ∝ x^p` fitted in log-log space.
pub fn fit_exponent(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    fit_line(&lx, &ly).0
}

/// Matched-size toy decoders: the hybrid layout (one attention layer in
/// eight) and a control with attention in every layer.
pub fn toy_pair(d_model: usize) -> (HybridConfig, HybridConfig) {
    let hybrid = HybridConfig {
        d_model,
        d_ff: 2 * d_model,
        n_stacks: 1,
        layers_per_stack: 8,
        attn_positions: vec![3],
        moe_stride: 0,
        n_heads: 2,
        n_kv_heads: 1,
        head_dim: d_model / 2,
        d_state: 8,
        tokens_per_image: 9,
        ..HybridConfig::default()
    };
    let attention = HybridConfig {
        attn_positions: (0..8).collect(),
        ..hybrid.clone()
    };
    (hybrid, attention)
}

/// Cost of one image-token budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenBudgetRow {
    pub tokens_per_image: usize,
    pub n_images: usize,
    pub context: usize,
    pub flops: f64,
    pub prefill: Measurement,
}

/// Prefill time and analytic FLOPs of `n_images` images at each
/// tokens-per-image budget, with random image embeddings in every slot.
pub fn sweep_tokens_per_image<S: Scalar>(
    model: &HybridModel<S>,
    budgets: &[usize],
    n_images: usize,
    timing: Timing,
    clock: &mut dyn Clock,
) -> Result<Vec<TokenBudgetRow>> {
    let pc = model.count_params();
    budgets
        .iter()
        .map(|&b| {
            let t = n_images * b;
            let ids = vec![crate::protocol::IMG_TOKEN; t];
            let slots: Vec<usize> = (0..t).collect();
            let mut r = rng::seeded(b as u64);
            let embeds = Var::constant(Tensor::from_f64(
                &[t, model.cfg.d_model],
                &(0..t * model.cfg.d_model).map(|_| 0.02 * rng::normal(&mut r)).collect::<Vec<_>>(),
            )?);
            let prefill = repeat(timing, || {
                let mut session = model.new_session();
                let start = clock.now();
                session.prefill(ModelInput {
                    ids: &ids,
                    image_slots: &slots,
                    image_embeds: Some(&embeds),
                })?;
                Ok(clock.now() - start)
            })?;
            let cost = CostModelConfig {
                total_params: pc.total as f64,
                active_params: pc.active as f64,
                tokens_per_image: b,
                ..CostModelConfig::default()
            };
            Ok(TokenBudgetRow {
                tokens_per_image: b,
                n_images,
                context: t,
                flops: flops_estimate(&cost, n_images as u64),
                prefill,
            })
        })
        .collect()
}

/// Writes an `x,y` series file for external plotting.
pub fn write_series(path: &Path, x_name: &str, y_name: &str, points: &[(f64, f64)]) -> Result<()> {
    let mut out = format!("{x_name},{y_name}\n");
    for (x, y) in points {
        out.push_str(&format!("{x},{y}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Ladder as CSV, one row per context with the median figures and every
/// raw sample.
pub fn ladder_csv(reports: &[EfficiencyReport]) -> String {
    let mut out = String::from("label,context,prefill_s,throughput_tok_s,session_bytes,prefill_samples,throughput_samples\n");
    let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
    for r in reports {
        out.push_str(&format!(
            "{},{},{:e},{:e},{},{},{}\n",
            r.label,
            r.context,
            r.prefill.median,
            r.throughput.median,
            r.session_bytes,
            join(&r.prefill.samples),
            join(&r.throughput.samples)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn throughput_formula() {
        assert!((throughput(1000, 10.0, 20.0).unwrap() - 99.9).abs() < 1e-12);
        assert_eq!(throughput(1000, 110.0, 120.0).unwrap(), throughput(1000, 10.0, 20.0).unwrap());
        assert!(throughput(1, 0.0, 1.0).is_err());
        assert!(throughput(5, 2.0, 2.0).is_err());
    }

    #[test]
    fn stub_clock_drives_the_measurement() {
        let (cfg, _) = toy_pair(8);
        let model = HybridModel::<f64>::random(&cfg, 0).unwrap();
        // prefill start, then one reading per emitted token
        let mut clock = StubClock::new([0.0, 10.0, 11.0, 12.0, 20.0]);
        let times = emission_times(&model, 3, 4, &mut clock).unwrap();
        assert_eq!(times, vec![10.0, 11.0, 12.0, 20.0]);
        assert!((throughput(4, times[0], times[3]).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn median_and_fits() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v * v).collect();
        assert!((fit_exponent(&x, &y) - 2.0).abs() < 1e-12);
        let (m, b) = fit_line(&x, &x.map(|v| 5.0 * v + 1.0));
        assert!((m - 5.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn session_memory_is_linear_in_context() {
        let (cfg, _) = toy_pair(8);
        let model = HybridModel::<f32>::random(&cfg, 0).unwrap();
        let a = session_bytes(&model, 10).unwrap();
        let b = session_bytes(&model, 30).unwrap();
        assert_eq!(b - a, 20 * cfg.kv_scalars_per_token() * std::mem::size_of::<f32>());
    }

    #[test]
    fn warmups_are_excluded_but_kept() {
        let (cfg, _) = toy_pair(8);
        let model = HybridModel::<f32>::random(&cfg, 0).unwrap();
        let m = measure_prefill(&model, 4, Timing::default(), &mut WallClock::default()).unwrap();
        assert_eq!((m.warmup_samples.len(), m.samples.len()), (3, 5));
        assert!(m.median > 0.0 && m.median.is_finite());
    }
}
