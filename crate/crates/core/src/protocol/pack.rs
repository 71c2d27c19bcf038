//! Fixed-length packing of whole sequences separated by `<eos>`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::template::MultimodalSequence;
use super::vocab::EOS;

/// Full-scale pack length.
pub const REFERENCE_PACK_LEN: usize = 176_000;
/// Desk-scale default pack length.
pub const DESK_PACK_LEN: usize = 4096;

/// Placement of one input sequence inside a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub item: usize,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedBatch {
    pub tokens: Vec<usize>,
    pub spans: Vec<Span>,
}

/// Greedy first-fit over lengths: each item goes to the first batch with
/// room for it plus one separator. Returns item indices per batch, in input
/// order within each batch.
pub fn plan_packing(lengths: &[usize], limit: usize) -> Result<Vec<Vec<usize>>> {
    let mut batches: Vec<Vec<usize>> = Vec::new();
    let mut used: Vec<usize> = Vec::new();
    for (index, &len) in lengths.iter().enumerate() {
        if len > limit {
            return Err(Error::OversizedSequence { index, len, limit });
        }
        let slot = used
            .iter()
            .position(|&u| u + 1 + len <= limit)
            .unwrap_or_else(|| {
                batches.push(Vec::new());
                used.push(0);
                batches.len() - 1
            });
        used[slot] += if batches[slot].is_empty() { len } else { len + 1 };
        batches[slot].push(index);
    }
    Ok(batches)
}

/// Packed length of a planned batch: members plus separators between them.
pub fn batch_len(lengths: &[usize], members: &[usize]) -> usize {
    members.iter().map(|&i| lengths[i]).sum::<usize>() + members.len().saturating_sub(1)
}

/// Renders and concatenates sequences per [`plan_packing`]. No separator
/// is appended after a batch's last member.
pub fn pack(seqs: &[MultimodalSequence], limit: usize) -> Result<Vec<PackedBatch>> {
    let lengths: Vec<usize> = seqs.iter().map(MultimodalSequence::len).collect();
    let plan = plan_packing(&lengths, limit)?;
    Ok(plan
        .into_iter()
        .map(|members| {
            let mut tokens = Vec::with_capacity(batch_len(&lengths, &members));
            let mut spans = Vec::with_capacity(members.len());
            for (k, &item) in members.iter().enumerate() {
                if k > 0 {
                    tokens.push(EOS);
                }
                spans.push(Span {
                    item,
                    start: tokens.len(),
                    len: lengths[item],
                });
                tokens.extend(seqs[item].render());
            }
            PackedBatch { tokens, spans }
        })
        .collect())
}
