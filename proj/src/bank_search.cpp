#include "cknn/bank_search.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <optional>
#include <thread>

namespace cknn {

namespace {

constexpr Eigen::Index kBankBlock = 2048;
// Extra shortlist slots so round-off in the expansion cannot evict a true
// neighbour before exact re-measurement.
constexpr std::size_t kShortlistMargin = 4;

struct Candidate {
  double d2;
  std::size_t row;
  bool operator<(const Candidate& o) const {
    return d2 != o.d2 ? d2 < o.d2 : row < o.row;
  }
};

// Bounded ascending list of the best candidates seen so far.
class Shortlist {
 public:
  explicit Shortlist(std::size_t capacity) : capacity_(capacity) { items_.reserve(capacity + 1); }

  void offer(const Candidate& c) {
    if (items_.size() == capacity_ && !(c < items_.back())) return;
    auto pos = std::upper_bound(items_.begin(), items_.end(), c);
    items_.insert(pos, c);
    if (items_.size() > capacity_) items_.pop_back();
  }
  const std::vector<Candidate>& items() const { return items_; }

 private:
  std::size_t capacity_;
  std::vector<Candidate> items_;
};

double exact_d2(const double* a, const double* b, Eigen::Index d) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double t = a[j] - b[j];
    s += t * t;
  }
  return s;
}

bool all_finite(const double* x, Eigen::Index d) {
  for (Eigen::Index j = 0; j < d; ++j) {
    if (!std::isfinite(x[j])) return false;
  }
  return true;
}

std::vector<Neighbor> finish(const FeatureMatrix& bank, const double* query,
                             const std::vector<Candidate>& shortlist, std::size_t k,
                             bool exclude_exact) {
  const Eigen::Index d = bank.cols();
  std::vector<Candidate> exact;
  exact.reserve(shortlist.size());
  for (const auto& c : shortlist) {
    exact.push_back({exact_d2(query, bank.data() + static_cast<Eigen::Index>(c.row) * d, d), c.row});
  }
  std::sort(exact.begin(), exact.end());
  std::size_t start = 0;
  if (exclude_exact && !exact.empty() &&
      std::sqrt(exact.front().d2) <= kExactMatchDistance) {
    start = 1;
  }
  if (exact.size() - start < k) {
    throw InvalidInput("k=" + std::to_string(k) + " exceeds the " +
                       std::to_string(exact.size() - start) +
                       " neighbours available in a bank of " + std::to_string(bank.rows()) +
                       " rows");
  }
  std::vector<Neighbor> out;
  out.reserve(k);
  for (std::size_t i = start; i < start + k; ++i) {
    out.push_back({exact[i].row, std::sqrt(exact[i].d2)});
  }
  return out;
}

// Per-query results for one block; an error message replaces the neighbours
// of a query that could not be scored.
struct BlockResult {
  std::vector<std::vector<Neighbor>> neighbors;
  std::vector<std::optional<std::string>> errors;
};

BlockResult run_block(const FeatureMatrix& bank, const std::vector<double>& norms,
                      const FeatureMatrix& queries, Eigen::Index first, Eigen::Index count,
                      std::size_t k, bool exclude_exact) {
  const Eigen::Index m = bank.rows();
  const Eigen::Index d = bank.cols();
  BlockResult res;
  res.neighbors.resize(static_cast<std::size_t>(count));
  res.errors.resize(static_cast<std::size_t>(count));

  const std::size_t capacity =
      std::min<std::size_t>(static_cast<std::size_t>(m), k + 1 + kShortlistMargin);
  std::vector<Shortlist> lists(static_cast<std::size_t>(count), Shortlist(capacity));
  std::vector<double> qnorm(static_cast<std::size_t>(count));
  std::vector<bool> ok(static_cast<std::size_t>(count), true);
  for (Eigen::Index i = 0; i < count; ++i) {
    const double* q = queries.data() + (first + i) * d;
    if (!all_finite(q, d)) {
      ok[i] = false;
      res.errors[i] = "query #" + std::to_string(first + i) + " has a non-finite value";
    }
    qnorm[i] = queries.row(first + i).squaredNorm();
  }

  auto qblock = queries.middleRows(first, count);
  Eigen::MatrixXd gram;
  for (Eigen::Index b0 = 0; b0 < m; b0 += kBankBlock) {
    const Eigen::Index bn = std::min(kBankBlock, m - b0);
    gram.noalias() = qblock * bank.middleRows(b0, bn).transpose();
    for (Eigen::Index i = 0; i < count; ++i) {
      if (!ok[i]) continue;
      auto& list = lists[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 0; j < bn; ++j) {
        double d2 = qnorm[i] + norms[static_cast<std::size_t>(b0 + j)] - 2.0 * gram(i, j);
        if (d2 < 0.0) d2 = 0.0;
        list.offer({d2, static_cast<std::size_t>(b0 + j)});
      }
    }
  }

  for (Eigen::Index i = 0; i < count; ++i) {
    if (!ok[i]) continue;
    try {
      res.neighbors[i] = finish(bank, queries.data() + (first + i) * d,
                                lists[static_cast<std::size_t>(i)].items(), k, exclude_exact);
    } catch (const InvalidInput& e) {
      res.errors[i] = "query #" + std::to_string(first + i) + ": " + e.what();
    }
  }
  return res;
}

void check_k(std::size_t k) {
  if (k == 0) throw InvalidInput("k must be positive");
}

double mean_distance(const std::vector<Neighbor>& nn) {
  double s = 0.0;
  for (const auto& n : nn) s += n.distance;
  return s / static_cast<double>(nn.size());
}

}  // namespace

SearchIndex::SearchIndex(const FeatureMatrix& bank) : bank_(&bank) {
  norms_.resize(static_cast<std::size_t>(bank.rows()));
  for (Eigen::Index r = 0; r < bank.rows(); ++r) {
    norms_[static_cast<std::size_t>(r)] = bank.row(r).squaredNorm();
  }
}

std::vector<Neighbor> SearchIndex::search(std::span<const double> query, std::size_t k,
                                          bool exclude_exact) const {
  if (query.size() != dim()) {
    throw InvalidInput("query dim " + std::to_string(query.size()) + " != bank dim " +
                       std::to_string(dim()));
  }
  FeatureMatrix q(1, static_cast<Eigen::Index>(query.size()));
  std::copy(query.begin(), query.end(), q.data());
  auto out = search_block(q, 0, 1, k, exclude_exact);
  return std::move(out.front());
}

std::vector<std::vector<Neighbor>> SearchIndex::search_block(const FeatureMatrix& queries,
                                                             Eigen::Index first,
                                                             Eigen::Index count, std::size_t k,
                                                             bool exclude_exact) const {
  check_k(k);
  if (queries.cols() != bank_->cols()) {
    throw InvalidInput("query dim " + std::to_string(queries.cols()) + " != bank dim " +
                       std::to_string(bank_->cols()));
  }
  auto res = run_block(*bank_, norms_, queries, first, count, k, exclude_exact);
  for (const auto& e : res.errors) {
    if (e) throw InvalidInput(*e);
  }
  return std::move(res.neighbors);
}

double knn_score(const SearchIndex& index, std::span<const double> query, std::size_t k,
                 bool exclude_exact) {
  return mean_distance(index.search(query, k, exclude_exact));
}

std::vector<double> knn_score_batch(const SearchIndex& index, const FeatureMatrix& queries,
                                    std::size_t k, bool exclude_exact,
                                    const BatchOptions& options) {
  check_k(k);
  if (queries.cols() != static_cast<Eigen::Index>(index.dim())) {
    throw InvalidInput("query dim " + std::to_string(queries.cols()) + " != bank dim " +
                       std::to_string(index.dim()));
  }
  const Eigen::Index n = queries.rows();
  std::vector<double> out(static_cast<std::size_t>(n), std::numeric_limits<double>::quiet_NaN());
  if (n == 0) return out;

  const Eigen::Index chunk = std::max<Eigen::Index>(1, options.chunk_rows);
  const Eigen::Index chunks = (n + chunk - 1) / chunk;
  unsigned workers = options.workers ? options.workers : std::thread::hardware_concurrency();
  workers = std::clamp<unsigned>(workers, 1, static_cast<unsigned>(chunks));

  std::atomic<Eigen::Index> next{0};
  std::mutex err_mu;
  std::optional<std::pair<Eigen::Index, std::string>> first_error;

  auto work = [&] {
    for (Eigen::Index c = next++; c < chunks; c = next++) {
      const Eigen::Index lo = c * chunk;
      const Eigen::Index cnt = std::min(chunk, n - lo);
      auto res = run_block(index.matrix(), index.squared_norms(), queries, lo, cnt, k,
                           exclude_exact);
      for (Eigen::Index i = 0; i < cnt; ++i) {
        if (res.errors[i]) {
          std::lock_guard lock(err_mu);
          if (!first_error || lo + i < first_error->first) first_error = {{lo + i, *res.errors[i]}};
        } else {
          out[static_cast<std::size_t>(lo + i)] = mean_distance(res.neighbors[i]);
        }
      }
    }
  };

  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }

  if (first_error && options.on_error == BatchErrorPolicy::FailBatch) {
    throw InvalidInput(first_error->second);
  }
  return out;
}

// ---------------------------------------------------------------------------

double BenchReport::streaming_fps() const {
  return streaming_seconds > 0 ? static_cast<double>(streaming_queries) / streaming_seconds : 0.0;
}

double BenchReport::batch_fps() const {
  return batch_seconds > 0 ? static_cast<double>(batch_queries) / batch_seconds : 0.0;
}

BenchReport bench_throughput(const SearchIndex& index, std::size_t k, const BenchOptions& options) {
  check_k(k);
  if (index.size() == 0) throw InvalidInput("cannot benchmark an empty bank");
  using clock = std::chrono::steady_clock;
  BenchReport rep;
  rep.bank_rows = index.size();
  rep.dim = index.dim();
  rep.k = k;
  rep.p = options.p;
  rep.batch_size = std::max<std::size_t>(1, options.batch_size);

  Rng rng = Rng(options.seed).split("bench");
  const auto d = static_cast<Eigen::Index>(index.dim());
  FeatureMatrix queries(static_cast<Eigen::Index>(rep.batch_size), d);
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    const auto src = static_cast<Eigen::Index>(rng.below(index.size()));
    for (Eigen::Index j = 0; j < d; ++j) queries(i, j) = index.matrix()(src, j) + rng.normal();
  }
  // exclude_exact=false keeps k <= bank size sufficient.
  const std::size_t kk = std::min(k, index.size());
  volatile double sink = 0.0;

  auto t0 = clock::now();
  do {
    const auto r = static_cast<Eigen::Index>(rep.streaming_queries % rep.batch_size);
    sink = sink + knn_score(index, row_span(queries, r), kk, false);
    ++rep.streaming_queries;
  } while (clock::now() - t0 < options.duration);
  rep.streaming_seconds = std::chrono::duration<double>(clock::now() - t0).count();

  t0 = clock::now();
  do {
    auto s = knn_score_batch(index, queries, kk, false);
    sink = sink + s.front();
    rep.batch_queries += s.size();
  } while (clock::now() - t0 < options.duration);
  rep.batch_seconds = std::chrono::duration<double>(clock::now() - t0).count();
  (void)sink;
  return rep;
}

}  // namespace cknn
