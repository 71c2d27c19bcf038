//! Saves and reloads a vision-language checkpoint, then shows that a
//! flipped byte is rejected.

use hybrid_mllm::mllm::{VisionLanguageModel, VlmConfig};
use hybrid_mllm::model::checkpoint::sha256_hex;

fn main() -> hybrid_mllm::Result<()> {
    let dir = std::env::temp_dir().join(format!("hybrid-mllm-ckpt-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| hybrid_mllm::Error::io(&dir, e))?;
    let path = dir.join("model.ckpt");
    let vlm = VisionLanguageModel::<f32>::random(&VlmConfig::desk(), 7)?;
    let digest = vlm.save(&path)?;
    let bytes = std::fs::read(&path).map_err(|e| hybrid_mllm::Error::io(&path, e))?;
    println!("wrote {} ({} bytes, sha256 {})", path.display(), bytes.len(), &digest[..16]);
    assert_eq!(sha256_hex(&bytes), digest);
    let back = VisionLanguageModel::<f32>::load(&path)?;
    println!("reloaded parameters identical: {}", back.to_map() == vlm.to_map());
    let mut bad = bytes.clone();
    let mid = bad.len() / 2;
    bad[mid] ^= 0xff;
    let corrupt = dir.join("corrupt.ckpt");
    std::fs::write(&corrupt, &bad).map_err(|e| hybrid_mllm::Error::io(&corrupt, e))?;
    match VisionLanguageModel::<f32>::load(&corrupt) {
        Ok(_) => println!("corrupted checkpoint loaded (unexpected)"),
        Err(e) => println!("corrupted checkpoint rejected: {e}"),
    }
    std::fs::remove_dir_all(&dir).map_err(|e| hybrid_mllm::Error::io(&dir, e))?;
    Ok(())
}
