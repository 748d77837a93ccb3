// Exact k-nearest-neighbour search over a feature bank.
//
// The anomaly score of a query is the mean L2 distance to its k nearest bank
// rows. Candidates are shortlisted with the expansion
// |q|^2 + |b|^2 - 2 q.b (clamped at zero), evaluated block-wise with a matrix
// product, and the shortlist is then re-measured as sum((q - b)^2) so that the
// returned distances do not depend on how queries were batched.

#pragma once

#include "cknn/core.hpp"

#include <chrono>
#include <cstddef>
#include <span>
#include <vector>

namespace cknn {

// Distances at or below this are treated as an exact match of the query.
inline constexpr double kExactMatchDistance = 1e-12;

struct Neighbor {
  std::size_t row = 0;
  double distance = 0.0;
};

// Read-only view of a bank matrix plus its squared row norms. The matrix must
// outlive the index.
class SearchIndex {
 public:
  explicit SearchIndex(const FeatureMatrix& bank);

  std::size_t size() const { return static_cast<std::size_t>(bank_->rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(bank_->cols()); }
  const FeatureMatrix& matrix() const { return *bank_; }
  const std::vector<double>& squared_norms() const { return norms_; }

  // The k nearest rows in ascending (distance, row) order. With exclude_exact,
  // at most one row at distance <= kExactMatchDistance is skipped first.
  std::vector<Neighbor> search(std::span<const double> query, std::size_t k,
                               bool exclude_exact) const;

  // Batched search over consecutive query rows [first, first + count).
  std::vector<std::vector<Neighbor>> search_block(const FeatureMatrix& queries,
                                                  Eigen::Index first,
                                                  Eigen::Index count, std::size_t k,
                                                  bool exclude_exact) const;

 private:
  const FeatureMatrix* bank_;
  std::vector<double> norms_;
};

double knn_score(const SearchIndex& index, std::span<const double> query, std::size_t k,
                 bool exclude_exact);

enum class BatchErrorPolicy {
  FailBatch,  // first failing query aborts the whole batch
  MarkNaN,    // failing queries yield NaN, others are still scored
};

struct BatchOptions {
  unsigned workers = 0;            // 0: hardware concurrency
  Eigen::Index chunk_rows = 64;    // queries per matrix-product block
  BatchErrorPolicy on_error = BatchErrorPolicy::FailBatch;
};

// Row-wise knn_score. Output is identical for any worker count or chunk size.
std::vector<double> knn_score_batch(const SearchIndex& index, const FeatureMatrix& queries,
                                    std::size_t k, bool exclude_exact,
                                    const BatchOptions& options = {});

struct BenchReport {
  std::size_t bank_rows = 0;
  std::size_t dim = 0;
  std::size_t k = 0;
  double p = 100.0;  // bank subsample percent the index was built from
  std::size_t batch_size = 0;
  std::size_t streaming_queries = 0;
  double streaming_seconds = 0.0;
  std::size_t batch_queries = 0;
  double batch_seconds = 0.0;

  double streaming_fps() const;
  double batch_fps() const;
};

struct BenchOptions {
  std::chrono::duration<double> duration{1.0};  // per mode
  std::size_t batch_size = 256;
  double p = 100.0;  // reported only
  std::uint64_t seed = 0;
};

// Measures queries per second, one query at a time and in batches. Queries
// are bank rows perturbed by unit Gaussian noise. Informational only.
BenchReport bench_throughput(const SearchIndex& index, std::size_t k,
                             const BenchOptions& options = {});

}  // namespace cknn
