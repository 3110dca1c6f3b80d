#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "evstr/core/types.hpp"
#include "evstr/error.hpp"

namespace evstr {

// Half-open range of stream indices forming one batch.
struct BatchSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
  bool operator==(const BatchSpan&) const = default;
};

// Batches of exactly `n` events advancing by n/2; consecutive batches share
// their overlapping half. A stream shorter than `n` yields nothing.
inline std::vector<BatchSpan> stream_batches(std::size_t stream_size, std::size_t n) {
  if (n < 4 || n % 2 != 0) {
    raise(ErrorCategory::kInvalidArgument, "batch size must be even and at least 4");
  }
  std::vector<BatchSpan> out;
  const std::size_t stride = n / 2;
  for (std::size_t b = 0; b + n <= stream_size; b += stride) out.push_back({b, b + n});
  return out;
}

inline std::vector<BatchSpan> stream_batches(std::span<const Event> stream, std::size_t n) {
  return stream_batches(stream.size(), n);
}

// Consecutive non-overlapping batches.
inline std::vector<BatchSpan> disjoint_batches(std::size_t stream_size, std::size_t n) {
  if (n < 2) raise(ErrorCategory::kInvalidArgument, "batch size must be at least 2");
  std::vector<BatchSpan> out;
  for (std::size_t b = 0; b + n <= stream_size; b += n) out.push_back({b, b + n});
  return out;
}

// Batch over a span of the stream; the window runs from its first to its
// last time stamp.
inline EventBatch make_batch(std::span<const Event> stream, BatchSpan span) {
  if (span.end > stream.size() || span.begin >= span.end) {
    raise(ErrorCategory::kInvalidArgument, "batch span outside the stream");
  }
  return EventBatch(std::vector<Event>(stream.begin() + span.begin, stream.begin() + span.end),
                    stream[span.begin].t, stream[span.end - 1].t);
}

}  // namespace evstr
