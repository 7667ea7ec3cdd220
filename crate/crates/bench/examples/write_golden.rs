//! Regenerates fixtures/golden/g0_archive. Only run this after an intended
//! archive format change.

fn main() {
    let dir = flexgraph_bench::graphs::fixture_dir("golden").join("g0_archive");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).expect("create golden dir");
    flexgraph_bench::acceptance::write_g0_archive(&dir);
    println!("wrote {}", dir.display());
}
