//! Holds the acceptance suite; run it with `cargo test -p lth-verify --test acceptance`.
