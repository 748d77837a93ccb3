// Expectation-maximisation for full-covariance Gaussian mixtures, seeded by
// greedy k-means++ followed by a few Lloyd iterations.

#include "cknn/scorers.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace cknn {

namespace {

double log_sum_exp(const double* v, std::size_t n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, v[i]);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - mx);
  return mx + std::log(s);
}

}  // namespace

GmmModel::GmmModel(std::vector<double> weights, Eigen::MatrixXd means,
                   std::vector<Eigen::MatrixXd> covariances, FitInfo info)
    : weights_(std::move(weights)),
      means_(std::move(means)),
      covariances_(std::move(covariances)),
      info_(std::move(info)) {
  const auto n = weights_.size();
  const auto d = means_.cols();
  if (n == 0 || static_cast<std::size_t>(means_.rows()) != n || covariances_.size() != n) {
    throw InvalidInput("inconsistent GMM parameter shapes");
  }
  chol_.reserve(n);
  log_norm_.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto& c = covariances_[j];
    if (c.rows() != d || c.cols() != d) throw InvalidInput("GMM covariance has the wrong shape");
    Eigen::LLT<Eigen::MatrixXd> llt(c);
    if (llt.info() != Eigen::Success) {
      throw ComputeError("GMM covariance " + std::to_string(j) + " is not positive definite");
    }
    Eigen::MatrixXd l = llt.matrixL();
    double log_det = 2.0 * l.diagonal().array().log().sum();
    log_norm_.push_back(std::log(weights_[j]) -
                        0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) + log_det));
    chol_.push_back(std::move(l));
  }
}

void GmmModel::component_log_densities(std::span<const double> x, std::vector<double>& out) const {
  const auto d = means_.cols();
  if (static_cast<Eigen::Index>(x.size()) != d) {
    throw InvalidInput("GMM input dim " + std::to_string(x.size()) + " != model dim " +
                       std::to_string(d));
  }
  Eigen::Map<const Eigen::VectorXd> xv(x.data(), d);
  out.resize(weights_.size());
  for (std::size_t j = 0; j < weights_.size(); ++j) {
    Eigen::VectorXd diff = xv - means_.row(static_cast<Eigen::Index>(j)).transpose();
    chol_[j].triangularView<Eigen::Lower>().solveInPlace(diff);
    out[j] = log_norm_[j] - 0.5 * diff.squaredNorm();
  }
}

bool GmmModel::operator==(const GmmModel& o) const {
  if (weights_ != o.weights_ || means_.rows() != o.means_.rows() ||
      means_.cols() != o.means_.cols() || means_ != o.means_ ||
      covariances_.size() != o.covariances_.size()) {
    return false;
  }
  for (std::size_t j = 0; j < covariances_.size(); ++j) {
    if (covariances_[j] != o.covariances_[j]) return false;
  }
  return info_.iterations == o.info_.iterations && info_.log_likelihood == o.info_.log_likelihood;
}

namespace {

// N x n matrix of log w_j + log N(x_i; mu_j, Sigma_j).
Eigen::MatrixXd log_prob_matrix(const std::vector<Eigen::MatrixXd>& chol,
                                const std::vector<double>& log_norm, const Eigen::MatrixXd& means,
                                const FeatureMatrix& x) {
  const Eigen::Index n = static_cast<Eigen::Index>(chol.size());
  Eigen::MatrixXd out(x.rows(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::MatrixXd diff_t = (x.rowwise() - means.row(j)).transpose();  // d x N
    chol[static_cast<std::size_t>(j)].triangularView<Eigen::Lower>().solveInPlace(diff_t);
    out.col(j) = (log_norm[static_cast<std::size_t>(j)] -
                  0.5 * diff_t.colwise().squaredNorm().array()).matrix().transpose();
  }
  return out;
}

struct Params {
  std::vector<double> weights;
  Eigen::MatrixXd means;
  std::vector<Eigen::MatrixXd> covs;
};

class EmFitter {
 public:
  EmFitter(const FeatureMatrix& x, std::size_t n, Rng rng, const GmmFitOptions& opt)
      : x_(x), n_(static_cast<Eigen::Index>(n)), rng_(std::move(rng)), opt_(opt) {
    Eigen::RowVectorXd mu = x_.colwise().mean();
    Eigen::MatrixXd centered = x_.rowwise() - mu;
    global_var_ = (centered.array().square().colwise().sum() /
                   static_cast<double>(x_.rows())).transpose();
  }

  GmmModel fit() {
    Params params = m_step_hard(kmeans_assign());
    GmmModel::FitInfo info;
    double prev = -std::numeric_limits<double>::infinity();
    for (int it = 0;; ++it) {
      Eigen::MatrixXd lp = e_step(params);  // becomes responsibilities
      const double ll = last_ll_;
      info.log_likelihood_trace.push_back(ll);
      const bool converged = it > 0 && std::abs(ll - prev) < opt_.tolerance * std::abs(ll);
      if (converged || it >= opt_.max_iterations) {
        info.iterations = it;
        info.log_likelihood = ll;
        info.reseeds = reseeds_;
        return GmmModel(std::move(params.weights), std::move(params.means),
                        std::move(params.covs), std::move(info));
      }
      prev = ll;
      params = m_step(lp);
    }
  }

 private:
  // Greedy k-means++ seeding and Lloyd refinement; returns hard labels.
  std::vector<Eigen::Index> kmeans_assign() {
    const Eigen::Index N = x_.rows();
    Eigen::MatrixXd centers(n_, x_.cols());
    std::vector<double> closest(static_cast<std::size_t>(N));
    auto d2_to = [&](const auto& c, Eigen::Index i) {
      return (x_.row(i) - c).squaredNorm();
    };
    centers.row(0) = x_.row(static_cast<Eigen::Index>(rng_.below(static_cast<std::uint64_t>(N))));
    double potential = 0.0;
    for (Eigen::Index i = 0; i < N; ++i) {
      closest[i] = d2_to(centers.row(0), i);
      potential += closest[i];
    }
    const int trials = 2 + static_cast<int>(std::log(static_cast<double>(n_)));
    for (Eigen::Index c = 1; c < n_; ++c) {
      Eigen::Index best = -1;
      double best_pot = std::numeric_limits<double>::infinity();
      for (int t = 0; t < trials; ++t) {
        Eigen::Index cand = N - 1;
        if (potential > 0.0) {
          double r = rng_.uniform() * potential;
          for (Eigen::Index i = 0; i < N; ++i) {
            r -= closest[i];
            if (r < 0.0) {
              cand = i;
              break;
            }
          }
        } else {
          cand = static_cast<Eigen::Index>(rng_.below(static_cast<std::uint64_t>(N)));
        }
        double pot = 0.0;
        for (Eigen::Index i = 0; i < N; ++i) pot += std::min(closest[i], d2_to(x_.row(cand), i));
        if (pot < best_pot) {
          best_pot = pot;
          best = cand;
        }
      }
      centers.row(c) = x_.row(best);
      potential = 0.0;
      for (Eigen::Index i = 0; i < N; ++i) {
        closest[i] = std::min(closest[i], d2_to(centers.row(c), i));
        potential += closest[i];
      }
    }

    std::vector<Eigen::Index> label(static_cast<std::size_t>(N), 0);
    for (int it = 0; it <= opt_.kmeans_iterations; ++it) {
      bool changed = false;
      for (Eigen::Index i = 0; i < N; ++i) {
        Eigen::Index arg = 0;
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index c = 0; c < n_; ++c) {
          const double d2 = d2_to(centers.row(c), i);
          if (d2 < best) {
            best = d2;
            arg = c;
          }
        }
        changed |= label[i] != arg;
        label[i] = arg;
      }
      if (it > 0 && !changed) break;
      if (it == opt_.kmeans_iterations) break;
      Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(n_, x_.cols());
      std::vector<double> counts(static_cast<std::size_t>(n_), 0.0);
      for (Eigen::Index i = 0; i < N; ++i) {
        sums.row(label[i]) += x_.row(i);
        counts[static_cast<std::size_t>(label[i])] += 1.0;
      }
      for (Eigen::Index c = 0; c < n_; ++c) {
        if (counts[static_cast<std::size_t>(c)] > 0) {
          centers.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
        }
      }
    }
    return label;
  }

  Params m_step_hard(const std::vector<Eigen::Index>& label) {
    Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(x_.rows(), n_);
    for (Eigen::Index i = 0; i < x_.rows(); ++i) resp(i, label[static_cast<std::size_t>(i)]) = 1.0;
    return m_step(resp);
  }

  Params m_step(const Eigen::MatrixXd& resp) {
    const Eigen::Index N = x_.rows();
    const Eigen::Index d = x_.cols();
    Params p;
    p.weights.resize(static_cast<std::size_t>(n_));
    p.means.resize(n_, d);
    p.covs.resize(static_cast<std::size_t>(n_));
    for (Eigen::Index j = 0; j < n_; ++j) {
      const double nk = resp.col(j).sum();
      const auto ju = static_cast<std::size_t>(j);
      if (nk / static_cast<double>(N) < opt_.collapse_weight) {
        if (++reseeds_ > opt_.max_reseeds) {
          throw ComputeError("GMM component collapsed more than " +
                             std::to_string(opt_.max_reseeds) + " times");
        }
        p.means.row(j) = x_.row(static_cast<Eigen::Index>(rng_.below(static_cast<std::uint64_t>(N))));
        p.covs[ju] = global_var_.asDiagonal();
        p.covs[ju].diagonal().array() += opt_.reg_eps;
        p.weights[ju] = 1.0 / static_cast<double>(n_);
        continue;
      }
      p.weights[ju] = nk / static_cast<double>(N);
      p.means.row(j) = (resp.col(j).transpose() * x_) / nk;
      Eigen::MatrixXd diff = x_.rowwise() - p.means.row(j);
      Eigen::MatrixXd weighted = diff.array().colwise() * resp.col(j).array();
      p.covs[ju] = (weighted.transpose() * diff) / nk;
      p.covs[ju] = 0.5 * (p.covs[ju] + p.covs[ju].transpose());
      p.covs[ju].diagonal().array() += opt_.reg_eps;
    }
    double total = 0.0;
    for (double w : p.weights) total += w;
    for (double& w : p.weights) w /= total;
    return p;
  }

  // Returns responsibilities and records the total log-likelihood.
  Eigen::MatrixXd e_step(const Params& params) {
    std::vector<Eigen::MatrixXd> chol;
    std::vector<double> log_norm;
    factorize(params, chol, log_norm);
    Eigen::MatrixXd lp = log_prob_matrix(chol, log_norm, params.means, x_);
    double total = 0.0;
    std::vector<double> buf(static_cast<std::size_t>(n_));
    for (Eigen::Index i = 0; i < lp.rows(); ++i) {
      for (Eigen::Index j = 0; j < n_; ++j) buf[static_cast<std::size_t>(j)] = lp(i, j);
      const double lse = log_sum_exp(buf.data(), buf.size());
      total += lse;
      lp.row(i) = (lp.row(i).array() - lse).exp();
    }
    last_ll_ = total;
    return lp;
  }

  static void factorize(const Params& p, std::vector<Eigen::MatrixXd>& chol,
                        std::vector<double>& log_norm) {
    const double d = static_cast<double>(p.means.cols());
    for (std::size_t j = 0; j < p.weights.size(); ++j) {
      Eigen::LLT<Eigen::MatrixXd> llt(p.covs[j]);
      if (llt.info() != Eigen::Success) {
        throw ComputeError("GMM covariance " + std::to_string(j) + " lost positive definiteness");
      }
      Eigen::MatrixXd l = llt.matrixL();
      log_norm.push_back(std::log(p.weights[j]) -
                         0.5 * (d * std::log(2.0 * std::numbers::pi) +
                                2.0 * l.diagonal().array().log().sum()));
      chol.push_back(std::move(l));
    }
  }

  const FeatureMatrix& x_;
  Eigen::Index n_;
  Rng rng_;
  GmmFitOptions opt_;
  Eigen::VectorXd global_var_;
  int reseeds_ = 0;
  double last_ll_ = 0.0;
};

}  // namespace

GmmModel gmm_fit(const FeatureMatrix& x, std::size_t n_components, std::uint64_t seed,
                 const GmmFitOptions& options) {
  if (n_components == 0) throw InvalidInput("GMM needs at least one component");
  if (x.cols() < 1) throw InvalidInput("GMM input must have at least one column");
  if (static_cast<std::size_t>(x.rows()) < n_components) {
    throw InvalidInput("GMM with " + std::to_string(n_components) + " components needs at least " +
                       std::to_string(n_components) + " rows, got " + std::to_string(x.rows()));
  }
  if (!x.allFinite()) throw InvalidInput("GMM input contains non-finite values");
  return EmFitter(x, n_components, Rng(seed).split("gmm"), options).fit();
}

double gmm_score(const GmmModel& model, std::span<const double> x) {
  for (double v : x) {
    if (!std::isfinite(v)) throw InvalidInput("GMM query contains non-finite values");
  }
  std::vector<double> lp;
  model.component_log_densities(x, lp);
  return -log_sum_exp(lp.data(), lp.size());
}

std::vector<double> gmm_score_all(const GmmModel& model, const FeatureMatrix& x) {
  if (static_cast<std::size_t>(x.cols()) != model.dim()) {
    throw InvalidInput("GMM input dim " + std::to_string(x.cols()) + " != model dim " +
                       std::to_string(model.dim()));
  }
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  std::vector<double> lp;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    model.component_log_densities(row_span(x, i), lp);
    out[static_cast<std::size_t>(i)] = -log_sum_exp(lp.data(), lp.size());
  }
  return out;
}

}  // namespace cknn
