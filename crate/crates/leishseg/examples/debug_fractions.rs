use leishseg::data::io::{load_entry, read_manifest, Split};
use leishseg::data::patch::{extract_patch, plan_patch_grid};
use leishseg::data::sampler::{patch_fraction, FractionMode};
use leishseg::error::Result;

fn main() -> Result<()> {
    let entries = read_manifest("/tmp/desk-probe/dataset/manifest.csv".as_ref())?;
    for (size, stride) in [(64usize, 32usize), (32, 16), (32, 32)] {
        let mut fractions = Vec::new();
        for entry in entries.iter().filter(|e| e.split == Split::Train) {
            let image = load_entry(entry)?;
            let grid = plan_patch_grid(image.height(), image.width(), size, stride)?;
            for &(row, col) in &grid.origins {
                let patch = extract_patch(&image, row, col, size)?;
                fractions.push(patch_fraction(&patch.labels, FractionMode::CombinedSum));
            }
        }
        fractions.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let n = fractions.len();
        println!(
            "patch {size} stride {stride}: {n} patches, top fractions {:.3?}",
            &fractions[..8.min(n)]
        );
        for t in [0.2, 0.3, 0.4, 0.5] {
            let count = fractions.iter().filter(|&&f| f >= t).count();
            println!("  >= {t}: {count}");
        }
    }
    Ok(())
}
