//! Multimodal data protocol: vocabulary, sequence templates, packing and
//! dataset records.

mod pack;
mod record;
mod template;
mod vocab;

pub use pack::{batch_len, pack, plan_packing, PackedBatch, Span, DESK_PACK_LEN, REFERENCE_PACK_LEN};
pub use record::{read_jsonl, write_jsonl, DatasetRecord, TaskType};
pub use template::{check_brackets, MultimodalSequence, Protocol, Segment};
pub use vocab::{
    Vocabulary, BYTE_BASE, DEFAULT_SIZE, EOS, FRAME_SEP, IMG_CLOSE, IMG_OPEN, IMG_TOKEN, NEWLINE, SPECIALS, VID_CLOSE,
    VID_OPEN, WORD_BASE,
};
