pub mod audio;
pub mod clustering;
pub mod embedding;
pub mod features;
pub mod json;
pub mod pipeline;
pub mod scene;
pub mod spatial;
pub mod synth;
pub mod trajectory;
