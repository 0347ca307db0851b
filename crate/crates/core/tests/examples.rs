macro_rules! example {
    ($module:ident, $file:literal) => {
        mod $module {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }
    };
}

example!(segment_audio, "segment_audio.rs");
example!(mfcc_features, "mfcc_features.rs");
example!(tsne_embedding, "tsne_embedding.rs");
example!(dbscan_clusters, "dbscan_clusters.rs");
example!(cylinder_layout, "cylinder_layout.rs");
example!(build_scene, "build_scene.rs");
example!(analyze_trajectory, "analyze_trajectory.rs");
example!(full_pipeline, "full_pipeline.rs");

#[test]
fn segment_audio_runs() {
    segment_audio::run_example().expect("segment_audio example");
}

#[test]
fn mfcc_features_runs() {
    mfcc_features::run_example().expect("mfcc_features example");
}

#[test]
fn tsne_embedding_runs() {
    tsne_embedding::run_example().expect("tsne_embedding example");
}

#[test]
fn dbscan_clusters_runs() {
    dbscan_clusters::run_example().expect("dbscan_clusters example");
}

#[test]
fn cylinder_layout_runs() {
    cylinder_layout::run_example().expect("cylinder_layout example");
}

#[test]
fn build_scene_runs() {
    build_scene::run_example().expect("build_scene example");
}

#[test]
fn analyze_trajectory_runs() {
    analyze_trajectory::run_example().expect("analyze_trajectory example");
}

#[test]
fn full_pipeline_runs() {
    full_pipeline::run_example().expect("full_pipeline example");
}
