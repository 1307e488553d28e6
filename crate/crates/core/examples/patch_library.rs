//! Building, subsampling, saving and reloading a patch library.
//!
//! ```text
//! cargo run --example patch_library
//! ```

use mdf::patchlib::{build_library, PatchLibrary};
use mdf::synth::{gen_lattice_scene, SceneConfig};

fn main() -> mdf::Result<()> {
    let crop = gen_lattice_scene(&SceneConfig::lattice(40, 40, 3))?;

    for (np, stride, cap) in [(7, 1, None), (7, 2, None), (5, 1, Some(200)), (9, 3, None)] {
        let lib = build_library(std::slice::from_ref(&crop), np, stride, cap, 42)?;
        let z = lib.centers();
        let (lo, hi) = z.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        println!(
            "Np={np} stride={stride} cap={cap:?}: {:>5} patches, centers in [{lo:.1}, {hi:.1}]",
            lib.len()
        );
    }

    let dir = std::env::temp_dir().join("mdf-patch-library-example");
    std::fs::create_dir_all(&dir).map_err(|e| mdf::Error::Runtime(e.to_string()))?;
    let path = dir.join("lattice.patches");
    let lib = build_library(&[crop], 7, 2, None, 0)?;
    lib.save(&path)?;
    let back = PatchLibrary::load(&path)?;
    assert_eq!(back.patches_flat(), lib.patches_flat());
    println!("saved and reloaded {} patches via {}", back.len(), path.display());
    println!("provenance: {:?}", back.source_meta());
    Ok(())
}
