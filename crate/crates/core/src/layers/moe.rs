use crate::error::Result;
use crate::params::{Builder, Init};
use crate::tensor::{Scalar, Tensor, Var};

use super::SwiGlu;

/// Per-token routing decisions of one MoE call.
#[derive(Clone, Debug, PartialEq)]
pub struct RoutingRecord {
    /// Selected experts per token, best first.
    pub experts: Vec<Vec<usize>>,
    /// Matching combination weights; each row sums to 1.
    pub weights: Vec<Vec<f64>>,
}

pub struct MoeOutput<S: Scalar> {
    pub out: Var<S>,
    pub routing: RoutingRecord,
    /// Load-balancing penalty, present only when enabled on the layer.
    pub aux_loss: Option<Var<S>>,
}

/// Top-k routed mixture of gated feed-forward experts.
#[derive(Clone, Debug)]
pub struct Moe<S: Scalar> {
    pub router: Var<S>,
    pub experts: Vec<SwiGlu<S>>,
    pub top_k: usize,
    /// Routes every token to this expert alone with weight 1.
    pub forced_expert: Option<usize>,
    pub aux_loss: bool,
}

/// Indices of the `k` largest entries, ties resolved toward the lower index.
pub fn top_k_indices<S: Scalar>(logits: &[S], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..logits.len()).collect();
    idx.sort_by(|&a, &b| logits[b].partial_cmp(&logits[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

impl<S: Scalar> Moe<S> {
    pub fn new(
        b: &mut Builder<'_, S>,
        d_model: usize,
        d_ff: usize,
        n_experts: usize,
        top_k: usize,
        std: f64,
        out_std: f64,
    ) -> Result<Self> {
        let router = b.param("router", &[d_model, n_experts], Init::Normal(std))?;
        let experts = (0..n_experts)
            .map(|e| b.scope(format!("experts.{e}"), |b| SwiGlu::new(b, d_model, d_ff, std, out_std)))
            .collect::<Result<_>>()?;
        Ok(Self {
            router,
            experts,
            top_k,
            forced_expert: None,
            aux_loss: false,
        })
    }

    pub fn n_experts(&self) -> usize {
        self.experts.len()
    }

    pub fn forward(&self, x: &Var<S>) -> Result<MoeOutput<S>> {
        let t = x.shape()[0];
        let logits = x.matmul(&self.router)?;
        let selection: Vec<Vec<usize>> = (0..t)
            .map(|i| match self.forced_expert {
                Some(e) => vec![e],
                None => top_k_indices(logits.value().row(i), self.top_k),
            })
            .collect();
        let gates = logits.topk_gates(&selection)?;

        let mut outs = Vec::new();
        let mut targets = Vec::new();
        for (e, expert) in self.experts.iter().enumerate() {
            let mut rows = Vec::new();
            let mut cells = Vec::new();
            for (i, sel) in selection.iter().enumerate() {
                if let Some(slot) = sel.iter().position(|&s| s == e) {
                    rows.push(i);
                    cells.push((i, slot));
                }
            }
            if rows.is_empty() {
                continue;
            }
            let y = expert.forward(&x.gather_rows(&rows)?)?;
            outs.push(y.mul_rows(&gates.gather_cells(&cells)?)?);
            targets.extend(rows);
        }
        let out = Var::concat(&outs, 0)?.scatter_add_rows(&targets, t)?;

        let routing = RoutingRecord {
            weights: (0..t).map(|i| gates.value().row(i).iter().map(|w| w.f64()).collect()).collect(),
            experts: selection,
        };
        let aux_loss = if self.aux_loss {
            Some(self.balance_loss(&logits, &routing.experts)?)
        } else {
            None
        };
        Ok(MoeOutput { out, routing, aux_loss })
    }

    /// `E · Σ_e f_e · P_e` with `f_e` the fraction of routing slots taken by
    /// expert `e` and `P_e` its mean router probability.
    fn balance_loss(&self, logits: &Var<S>, selection: &[Vec<usize>]) -> Result<Var<S>> {
        let e = self.n_experts();
        let slots = selection.iter().map(Vec::len).sum::<usize>() as f64;
        let mut frac = vec![0.0; e];
        for &j in selection.iter().flatten() {
            frac[j] += 1.0 / slots;
        }
        let frac = Var::constant(Tensor::from_f64(&[e], &frac)?);
        logits.softmax_lastdim()?.mean_rows()?.mul(&frac)?.reduce_sum()?.scale(e as f64)
    }
}
