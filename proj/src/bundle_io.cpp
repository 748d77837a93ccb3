#include "cknn/io.hpp"

#include "binary_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace cknn {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifestName = "bundle.txt";

const char* bank_file(Modality m) { return m == Modality::App ? "app_bank.bin" : "mot_bank.bin"; }
const char* gmm_file(Modality m) { return m == Modality::App ? "gmm_app.bin" : "gmm_mot.bin"; }

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError("cannot create '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ParseError("write to '" + path.string() + "' failed");
}

std::ifstream open_file(const fs::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("bundle is missing its " + std::string(what) + " (" + path.string() + ")");
  return in;
}

// key=value lines; '#' starts a comment line.
class KeyValues {
 public:
  explicit KeyValues(std::istream& in) {
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ParseError("bundle manifest line " + std::to_string(lineno) + ": expected key=value");
      }
      values_[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ParseError("bundle manifest lacks '" + key + "'");
    return it->second;
  }

  double real(const std::string& key) const {
    const auto& s = str(key);
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (s.empty() || *end != '\0') throw ParseError("bundle manifest: '" + key + "' is not a number");
    return v;
  }

  template <typename T>
  T integer(const std::string& key) const {
    const auto& s = str(key);
    T v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
      throw ParseError("bundle manifest: '" + key + "' is not an integer");
    }
    return v;
  }

 private:
  std::map<std::string, std::string> values_;
};

void check_stats(const ScoreStats& s, Modality m) {
  if (!std::isfinite(s.mean) || !std::isfinite(s.stddev) || s.stddev < 0.0) {
    throw InvalidInput(std::string(to_string(m)) + " normalization stats are not finite");
  }
  if (s.degenerate != (s.stddev < kDegenerateStd)) {
    throw InvalidInput(std::string(to_string(m)) + " degenerate flag disagrees with its stddev");
  }
}

}  // namespace

void ModelBundle::validate() const {
  hyperparams.validate();
  for (Modality m : {Modality::App, Modality::Mot}) {
    const auto& b = bank(m);
    const std::uint32_t d = m == Modality::App ? d_app : d_mot;
    b.validate();
    if (b.modality != m) throw InvalidInput(std::string(to_string(m)) + " bank has the wrong modality");
    if (b.dim() != d) {
      throw InvalidInput(std::string(to_string(m)) + " bank dim " + std::to_string(b.dim()) +
                         " != bundle dim " + std::to_string(d));
    }
    check_stats(stats(m), m);
    const auto& g = m == Modality::App ? app_gmm : mot_gmm;
    if (g && g->dim() != d) throw InvalidInput(std::string(to_string(m)) + " GMM has the wrong dim");
  }
}

// ---------------------------------------------------------------------------
// blobs

void write_bank_blob(std::ostream& out, const FeatureBank& bank) {
  detail::LeWriter w(out);
  w.put_bytes(kBankMagic, 4);
  w.put(kBlobVersion);
  w.put(static_cast<std::uint32_t>(bank.modality));
  w.put(static_cast<std::uint64_t>(bank.size()));
  w.put(static_cast<std::uint32_t>(bank.dim()));

  w.put_f64(bank.meta.tau);
  w.put_f64(bank.meta.p);
  w.put_string(bank.meta.scorer);
  w.put(bank.meta.seed);
  w.put(static_cast<std::uint32_t>(bank.meta.compression));
  w.put(static_cast<std::uint64_t>(bank.meta.source_objects));
  w.put(static_cast<std::uint64_t>(bank.meta.removed));

  std::vector<std::string> ids;
  std::unordered_map<std::string, std::uint32_t> index;
  for (const auto& k : bank.provenance) {
    if (index.emplace(k.video_id, static_cast<std::uint32_t>(ids.size())).second) {
      ids.push_back(k.video_id);
    }
  }
  w.put(static_cast<std::uint32_t>(ids.size()));
  for (const auto& id : ids) w.put_string(id);
  for (const auto& k : bank.provenance) {
    w.put(index.at(k.video_id));
    w.put(k.frame_idx);
    w.put(k.object_idx);
  }
  const double* p = bank.matrix.data();
  for (Eigen::Index i = 0; i < bank.matrix.size(); ++i) w.put_f32(static_cast<float>(p[i]));
}

FeatureBank read_bank_blob(std::istream& in) {
  detail::LeReader r(in, "bank blob");
  r.expect_magic(kBankMagic);
  if (r.get<std::uint32_t>("version") != kBlobVersion) r.fail("unsupported version");
  FeatureBank b;
  const auto mod = r.get<std::uint32_t>("modality");
  if (mod > 1) r.fail("unknown modality " + std::to_string(mod));
  b.modality = static_cast<Modality>(mod);
  const auto rows = r.get<std::uint64_t>("rows");
  const auto dim = r.get<std::uint32_t>("dim");
  if (rows == 0 || dim == 0) r.fail("empty bank");
  if (rows > (1ull << 40) || dim > (1u << 20)) r.fail("implausible bank shape");

  b.meta.tau = r.get_f64("tau");
  b.meta.p = r.get_f64("p");
  b.meta.scorer = r.get_string("scorer");
  b.meta.seed = r.get<std::uint64_t>("seed");
  const auto comp = r.get<std::uint32_t>("compression");
  if (comp > 1) r.fail("unknown compression " + std::to_string(comp));
  b.meta.compression = static_cast<Compression>(comp);
  b.meta.source_objects = r.get<std::uint64_t>("source objects");
  b.meta.removed = r.get<std::uint64_t>("removed");

  const auto nids = r.get<std::uint32_t>("video id count");
  std::vector<std::string> ids(nids);
  for (auto& id : ids) id = r.get_string("video id");
  b.provenance.resize(rows);
  for (auto& k : b.provenance) {
    const auto v = r.get<std::uint32_t>("provenance video");
    if (v >= nids) r.fail("provenance video index out of range");
    k.video_id = ids[v];
    k.frame_idx = r.get<std::uint32_t>("provenance frame");
    k.object_idx = r.get<std::uint32_t>("provenance object");
  }
  b.matrix.resize(static_cast<Eigen::Index>(rows), dim);
  double* p = b.matrix.data();
  for (Eigen::Index i = 0; i < b.matrix.size(); ++i) {
    p[i] = r.get_f32("bank data");
    if (!std::isfinite(p[i])) r.fail("non-finite bank value");
  }
  if (!r.at_end()) r.fail("trailing data");
  return b;
}

void write_gmm_blob(std::ostream& out, const GmmModel& g) {
  detail::LeWriter w(out);
  w.put_bytes(kGmmMagic, 4);
  w.put(kBlobVersion);
  w.put(static_cast<std::uint32_t>(g.components()));
  w.put(static_cast<std::uint32_t>(g.dim()));
  for (double v : g.weights()) w.put_f64(v);
  for (Eigen::Index i = 0; i < g.means().rows(); ++i) {
    for (Eigen::Index j = 0; j < g.means().cols(); ++j) w.put_f64(g.means()(i, j));
  }
  for (const auto& c : g.covariances()) {
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
      for (Eigen::Index j = 0; j < c.cols(); ++j) w.put_f64(c(i, j));
    }
  }
  const auto& info = g.info();
  w.put(static_cast<std::int32_t>(info.iterations));
  w.put_f64(info.log_likelihood);
  w.put(static_cast<std::int32_t>(info.reseeds));
  w.put(static_cast<std::uint64_t>(info.log_likelihood_trace.size()));
  for (double v : info.log_likelihood_trace) w.put_f64(v);
}

GmmModel read_gmm_blob(std::istream& in) {
  detail::LeReader r(in, "gmm blob");
  r.expect_magic(kGmmMagic);
  if (r.get<std::uint32_t>("version") != kBlobVersion) r.fail("unsupported version");
  const auto n = r.get<std::uint32_t>("components");
  const auto d = r.get<std::uint32_t>("dim");
  if (n == 0 || d == 0 || n > 4096 || d > 4096) r.fail("implausible GMM shape");
  std::vector<double> weights(n);
  for (double& w : weights) w = r.get_f64("weight");
  Eigen::MatrixXd means(n, d);
  for (Eigen::Index i = 0; i < means.rows(); ++i) {
    for (Eigen::Index j = 0; j < means.cols(); ++j) means(i, j) = r.get_f64("mean");
  }
  std::vector<Eigen::MatrixXd> covs(n, Eigen::MatrixXd(d, d));
  for (auto& c : covs) {
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
      for (Eigen::Index j = 0; j < c.cols(); ++j) c(i, j) = r.get_f64("covariance");
    }
  }
  GmmFitInfo info;
  info.iterations = r.get<std::int32_t>("iterations");
  info.log_likelihood = r.get_f64("log likelihood");
  info.reseeds = r.get<std::int32_t>("reseeds");
  const auto trace = r.get<std::uint64_t>("trace length");
  if (trace > 1'000'000) r.fail("implausible trace length");
  info.log_likelihood_trace.resize(trace);
  for (double& v : info.log_likelihood_trace) v = r.get_f64("trace");
  if (!r.at_end()) r.fail("trailing data");
  try {
    return GmmModel(std::move(weights), std::move(means), std::move(covs), std::move(info));
  } catch (const Error& e) {
    throw ParseError(std::string("gmm blob: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// directory

void save_bundle(const ModelBundle& b, const fs::path& dir) {
  b.validate();
  fs::create_directories(dir);
  const auto& hp = b.hyperparams;

  std::ostringstream kv;
  kv << "# cknn model bundle\n"
     << "format=cknn-bundle\n"
     << "version=" << kBlobVersion << '\n'
     << "seed=" << hp.seed << '\n'
     << "k=" << hp.k << '\n'
     << "n_components=" << hp.n_components << '\n'
     << "tau=" << fmt_double(hp.tau) << '\n'
     << "p=" << fmt_double(hp.p) << '\n'
     << "smoothing_sigma=" << fmt_double(hp.smoothing_sigma) << '\n'
     << "scorer_app=" << b.app_scorer.describe() << '\n'
     << "scorer_mot=" << b.mot_scorer.describe() << '\n'
     << "compression=" << to_string(b.compression) << '\n'
     << "d_app=" << b.d_app << '\n'
     << "d_mot=" << b.d_mot << '\n';
  for (Modality m : {Modality::App, Modality::Mot}) {
    const std::string pre(to_string(m));
    const auto& s = b.stats(m);
    const auto& g = m == Modality::App ? b.app_gmm : b.mot_gmm;
    kv << pre << "_mean=" << fmt_double(s.mean) << '\n'
       << pre << "_std=" << fmt_double(s.stddev) << '\n'
       << pre << "_degenerate=" << (s.degenerate ? 1 : 0) << '\n'
       << pre << "_bank_rows=" << b.bank(m).size() << '\n'
       << pre << "_bank=" << bank_file(m) << '\n'
       << pre << "_gmm=" << (g ? gmm_file(m) : "none") << '\n';
  }
  write_file(dir / kManifestName, kv.str());

  for (Modality m : {Modality::App, Modality::Mot}) {
    std::ostringstream blob;
    write_bank_blob(blob, b.bank(m));
    write_file(dir / bank_file(m), blob.str());
    const auto& g = m == Modality::App ? b.app_gmm : b.mot_gmm;
    if (g) {
      std::ostringstream gb;
      write_gmm_blob(gb, *g);
      write_file(dir / gmm_file(m), gb.str());
    } else {
      fs::remove(dir / gmm_file(m));
    }
  }
}

ModelBundle load_bundle(const fs::path& dir) {
  auto manifest = open_file(dir / kManifestName, "manifest");
  KeyValues kv(manifest);
  if (kv.str("format") != "cknn-bundle") throw ParseError("not a cknn bundle manifest");
  if (kv.integer<std::uint32_t>("version") != kBlobVersion) {
    throw ParseError("unsupported bundle version");
  }

  ModelBundle b;
  auto& hp = b.hyperparams;
  hp.seed = kv.integer<std::uint64_t>("seed");
  hp.k = kv.integer<std::size_t>("k");
  hp.n_components = kv.integer<std::size_t>("n_components");
  hp.tau = kv.real("tau");
  hp.p = kv.real("p");
  hp.smoothing_sigma = kv.real("smoothing_sigma");
  b.d_app = kv.integer<std::uint32_t>("d_app");
  b.d_mot = kv.integer<std::uint32_t>("d_mot");
  try {
    b.app_scorer = PseudoScorerConfig::parse(Modality::App, kv.str("scorer_app"));
    b.mot_scorer = PseudoScorerConfig::parse(Modality::Mot, kv.str("scorer_mot"));
    b.compression = parse_compression(kv.str("compression"));
  } catch (const InvalidInput& e) {
    throw ParseError(std::string("bundle manifest: ") + e.what());
  }

  for (Modality m : {Modality::App, Modality::Mot}) {
    const std::string pre(to_string(m));
    ScoreStats s;
    s.mean = kv.real(pre + "_mean");
    s.stddev = kv.real(pre + "_std");
    s.degenerate = s.stddev < kDegenerateStd;
    (m == Modality::App ? b.app_stats : b.mot_stats) = s;

    auto bin = open_file(dir / kv.str(pre + "_bank"), (pre + " bank").c_str());
    FeatureBank bank = read_bank_blob(bin);
    if (bank.size() != kv.integer<std::size_t>(pre + "_bank_rows")) {
      throw ParseError(pre + " bank has " + std::to_string(bank.size()) +
                       " rows, manifest says " + kv.str(pre + "_bank_rows"));
    }
    (m == Modality::App ? b.app_bank : b.mot_bank) = std::move(bank);

    const auto& gname = kv.str(pre + "_gmm");
    if (gname != "none") {
      auto gin = open_file(dir / gname, (pre + " GMM").c_str());
      (m == Modality::App ? b.app_gmm : b.mot_gmm) = read_gmm_blob(gin);
    }
  }
  try {
    b.validate();
  } catch (const InvalidInput& e) {
    throw ParseError(std::string("inconsistent bundle: ") + e.what());
  }
  return b;
}

}  // namespace cknn
