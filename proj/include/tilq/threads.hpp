#pragma once

#include <cstdint>
#include <functional>

namespace tilq {

/// Worker count: TILQ_THREADS when set (>= 1), hardware concurrency otherwise.
int worker_count();

/// Fixed work decomposition for path ensembles: paths are processed in chunks
/// of kChunk consecutive indices. Chunks are claimed by workers dynamically,
/// but every per-chunk result lands in a slot indexed by chunk number and the
/// final reduction walks the slots in order, so results are bit-identical for
/// any worker count.
inline constexpr int64_t kChunk = 1024;

/// Runs fn(chunk_index, path_begin, path_end) over all chunks of [0, n_paths).
void parallel_chunks(int64_t n_paths,
                     const std::function<void(int64_t, int64_t, int64_t)>& fn);

}  // namespace tilq
