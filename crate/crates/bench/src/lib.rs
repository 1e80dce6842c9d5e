//! Benchmarks for the rclm engine; see `benches/`.
