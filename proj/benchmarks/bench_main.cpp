#include <benchmark/benchmark.h>

// The distribution's libbenchmark_main is built with a different LTO
// version, so the entry point lives here.
BENCHMARK_MAIN();
