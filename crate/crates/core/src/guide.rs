//! Doc-test anchors for the user guide in `book/`.
//!
//! Each chapter of the mdbook guide is included here as module
//! documentation so that `cargo test --doc` compiles and runs every
//! fenced Rust snippet in the book. Editing a chapter therefore keeps
//! the guide and the library honest with each other.
