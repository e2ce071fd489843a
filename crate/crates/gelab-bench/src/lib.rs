//! Empty library target; the criterion benchmarks live under `benches/`.
