//! Writes the bundled procedural sample tree: a pretrained checkpoint,
//! photo-domain subjects, style references, and paired style portraits.
//!
//! Usage: `cargo run --example generate_sample_data -- [DIR] [PHOTOS] [REFS] [SEED]`
//!
//! Defaults produce `sample_data/` with 4 photos and 7 references. The tree
//! is byte-deterministic in the seed, so the CLI's replay command works on
//! runs that consume it.

use styleid::dataset::generate_sample_data;
use styleid::Result;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let root = args.next().unwrap_or_else(|| "sample_data".into());
    let photos: usize = args.next().map_or(Ok(4), |s| s.parse()).expect("PHOTOS must be a count");
    let refs: usize = args.next().map_or(Ok(7), |s| s.parse()).expect("REFS must be a count");
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse()).expect("SEED must be an integer");

    let paths = generate_sample_data(&root, photos, refs, seed)?;
    println!("sample tree under {}", paths.root.display());
    println!("  pretrained checkpoint: {}", paths.pretrained.display());
    println!("  {} photo(s), e.g. {}", paths.photos.len(), paths.photos[0].display());
    println!("  {} reference(s), e.g. {}", paths.refs.len(), paths.refs[0].display());
    println!("  {} portrait(s) paired with the photos by stem", paths.portraits.len());
    Ok(())
}
