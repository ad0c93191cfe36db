pub mod augment;
pub mod decode;
pub mod detect_rate;
pub mod eval;
pub mod fuse;
pub mod gen_targets;
pub mod match_cmd;
