// cknn command-line front end.
//
// Exit codes: 0 success, 2 usage, 3 data (unreadable or invalid input files),
// 4 compute (build, numerical or metric failure).

#include "cknn/bank_search.hpp"
#include "cknn/cleanse.hpp"
#include "cknn/eval.hpp"
#include "cknn/infer.hpp"
#include "cknn/io.hpp"
#include "cknn/pipeline.hpp"
#include "cknn/synth.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <algorithm>
#include <map>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kCompute = 4 };

class UsageError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

int verbosity = 1;

void info(const std::string& s) {
  if (verbosity > 0) std::cerr << s << '\n';
}

// ---------------------------------------------------------------------------
// Options shared by several subcommands

struct ModelFlags {
  cknn::Hyperparams hp;
  std::string scorer_app = "gmm";
  std::string scorer_mot = "gmm";
  bool coreset = false;
};

void add_hyper_flags(CLI::App* c, cknn::Hyperparams& hp) {
  c->add_option("--k", hp.k, "neighbours in the kNN score")->envname("CKNN_K");
  c->add_option("--n-components", hp.n_components, "GMM components")->envname("CKNN_N_COMPONENTS");
  c->add_option("--tau", hp.tau, "percent of training objects removed per modality")
      ->envname("CKNN_TAU");
  c->add_option("--p", hp.p, "percent of cleansed objects kept in each bank")->envname("CKNN_P");
  c->add_option("--sigma", hp.smoothing_sigma, "temporal smoothing sigma in frames")
      ->envname("CKNN_SIGMA");
  c->add_option("--seed", hp.seed, "random seed")->envname("CKNN_SEED");
}

void add_model_flags(CLI::App* c, ModelFlags& f) {
  add_hyper_flags(c, f.hp);
  c->add_option("--scorer-app", f.scorer_app, "gmm[:n] or knn[:k[:subsample%]]")
      ->envname("CKNN_SCORER_APP");
  c->add_option("--scorer-mot", f.scorer_mot, "gmm[:n] or knn[:k[:subsample%]]")
      ->envname("CKNN_SCORER_MOT");
  c->add_flag("--coreset", f.coreset, "greedy coreset instead of random bank sampling")
      ->envname("CKNN_CORESET");
}

cknn::PseudoScorerConfig scorer_from(cknn::Modality m, const std::string& text,
                                     const cknn::Hyperparams& hp) {
  if (text == "gmm") return cknn::PseudoScorerConfig::gmm(m, hp.n_components);
  if (text == "knn") return cknn::PseudoScorerConfig::knn(m, hp.k);
  return cknn::PseudoScorerConfig::parse(m, text);
}

cknn::CleanseConfig cleanse_config(const ModelFlags& f) {
  f.hp.validate();
  cknn::CleanseConfig c;
  c.hyperparams = f.hp;
  c.app_scorer = scorer_from(cknn::Modality::App, f.scorer_app, f.hp);
  c.mot_scorer = scorer_from(cknn::Modality::Mot, f.scorer_mot, f.hp);
  c.compression = f.coreset ? cknn::Compression::Coreset : cknn::Compression::Random;
  return c;
}

// "# key=value" lines describing every option of the subcommand.
std::string config_header(const CLI::App* cmd) {
  std::ostringstream os;
  os << "# cknn " << cmd->get_name() << '\n';
  std::istringstream lines(cmd->config_to_str(true, false));
  std::string line;
  while (std::getline(lines, line)) {
    if (!line.empty()) os << "# " << line << '\n';
  }
  return os.str();
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw cknn::ParseError("cannot create '" + path + "'");
  out << std::setprecision(17);
  return out;
}

// Expands `--config FILE` (key=value lines, '#' comments) into long options
// placed right after the subcommand name, so that explicit flags, which come
// later, take precedence. Keys whose environment variable is set are skipped
// so the environment also beats the file.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  for (std::size_t i = 1; i < args.size(); ++i) {
    std::string file;
    std::size_t erase = 0;
    if (args[i] == "--config" && i + 1 < args.size()) {
      file = args[i + 1];
      erase = 2;
    } else if (args[i].rfind("--config=", 0) == 0) {
      file = args[i].substr(9);
      erase = 1;
    } else {
      continue;
    }
    std::ifstream in(file);
    if (!in) throw UsageError("cannot read config file '" + file + "'");
    args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
               args.begin() + static_cast<std::ptrdiff_t>(i + erase));
    std::vector<std::string> injected;
    std::string line;
    while (std::getline(in, line)) {
      const auto start = line.find_first_not_of(" \t");
      if (start == std::string::npos || line[start] == '#' || line[start] == '[') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw UsageError("config line without '=': " + line);
      auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r\"");
        const auto b = s.find_last_not_of(" \t\r\"");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
      };
      std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      std::replace(key.begin(), key.end(), '_', '-');
      std::string env = "CKNN_" + key;
      std::replace(env.begin(), env.end(), '-', '_');
      std::transform(env.begin(), env.end(), env.begin(), ::toupper);
      if (std::getenv(env.c_str())) continue;
      if (value == "true" || value == "false") {
        if (value == "true") injected.push_back("--" + key);
      } else {
        injected.push_back("--" + key + "=" + value);
      }
    }
    std::size_t at = 1;
    while (at < args.size() && args[at].rfind("-", 0) == 0) ++at;
    at = std::min(at + 1, args.size());
    args.insert(args.begin() + static_cast<std::ptrdiff_t>(at), injected.begin(), injected.end());
    break;
  }
  return args;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  cknn::SynthConfig cfg;
  std::string modality = "both";
  std::string duration_model = "uniform";
  std::string train_out, test_out, truth_out;
};

void add_synth(CLI::App& app, SynthArgs& a) {
  auto* c = app.add_subcommand("synth", "generate a synthetic dataset with clustered anomalies");
  auto& g = a.cfg;
  c->add_option("--train-out", a.train_out, "train split path (.jsonl for text)")->required();
  c->add_option("--test-out", a.test_out, "test split path (.jsonl for text)")->required();
  c->add_option("--truth-out", a.truth_out, "ground-truth sidecar (JSON)");
  c->add_option("--seed", g.seed)->envname("CKNN_SEED");
  c->add_option("--train-videos", g.n_train_videos);
  c->add_option("--test-videos", g.n_test_videos);
  c->add_option("--frames", g.frames_per_video);
  c->add_option("--objects-per-frame", g.objects_per_frame_mean);
  c->add_option("--d-app", g.d_app);
  c->add_option("--d-mot", g.d_mot);
  c->add_option("--normal-modes", g.n_normal_modes);
  c->add_option("--mode-spread", g.mode_spread);
  c->add_option("--event-rate", g.anomaly_event_rate);
  c->add_option("--event-duration", g.event_duration_frames);
  c->add_option("--duration-model", a.duration_model)->check(CLI::IsMember({"uniform", "geometric", "fixed"}));
  c->add_option("--offset", g.anomaly_offset);
  c->add_option("--jitter", g.within_event_jitter);
  c->add_option("--anomaly-modality", a.modality)
      ->check(CLI::IsMember({"both", "app", "mot", "mixed"}));
}

json truth_json(const cknn::SynthDataset& ds, const cknn::SynthConfig& cfg) {
  json t;
  t["seed"] = cfg.seed;
  t["expected_contamination"] = ds.truth.expected_contamination;
  t["overlap_warning"] = ds.truth.overlap_warning;
  t["train_abnormal"] = ds.truth.train_abnormal;
  t["test_abnormal"] = ds.truth.test_abnormal;
  t["events"] = json::array();
  for (const auto& e : ds.truth.events) {
    t["events"].push_back({{"video", e.video_id},
                           {"start", e.start_frame},
                           {"duration", e.duration},
                           {"modality", cknn::to_string(e.modality)}});
  }
  return t;
}

int run_synth(const CLI::App* cmd, SynthArgs& a) {
  a.cfg.anomaly_modality = cknn::parse_anomaly_modality(a.modality);
  a.cfg.duration_model = cknn::parse_duration_model(a.duration_model);
  try {
    a.cfg.validate();
  } catch (const cknn::InvalidInput& e) {
    throw UsageError(e.what());
  }
  const auto ds = cknn::generate(a.cfg);
  cknn::write_dataset(a.train_out, ds.train, cknn::format_for_path(a.train_out));
  cknn::write_dataset(a.test_out, ds.test, cknn::format_for_path(a.test_out));
  std::size_t abn = 0;
  for (auto f : ds.truth.train_abnormal) abn += f;
  for (auto f : ds.truth.test_abnormal) abn += f;
  const std::size_t total = ds.train.objects.size() + ds.test.objects.size();
  if (!a.truth_out.empty()) {
    auto out = open_output(a.truth_out);
    json t = truth_json(ds, a.cfg);
    t["config"] = config_header(cmd);
    out << t.dump() << '\n';
  }
  std::cout << "train objects: " << ds.train.objects.size() << '\n'
            << "test objects: " << ds.test.objects.size() << '\n'
            << "events: " << ds.truth.events.size() << '\n'
            << "contamination: " << (total ? static_cast<double>(abn) / total : 0.0)
            << " (expected " << ds.truth.expected_contamination << ")\n";
  if (ds.truth.overlap_warning) {
    std::cerr << "warning: anomaly offset < 2, anomaly modes overlap the normal modes\n";
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
  ModelFlags model;
  std::string train, out;
};

int run_fit(FitArgs& a) {
  cknn::CleanseConfig cfg;
  try {
    cfg = cleanse_config(a.model);
  } catch (const cknn::InvalidInput& e) {
    throw UsageError(e.what());
  }
  const auto manifest = cknn::read_dataset(a.train);
  const auto res = cknn::fit_bundle(manifest.training_view(), cfg);
  cknn::save_bundle(res.bundle, a.out);
  const auto& r = res.report;
  std::cout << "objects: " << r.source_objects << '\n'
            << "app removed: " << r.app_removed << "  app bank rows: " << r.app_bank_rows << '\n'
            << "mot removed: " << r.mot_removed << "  mot bank rows: " << r.mot_bank_rows << '\n'
            << "fit seconds: " << std::fixed << std::setprecision(3) << r.seconds << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// score

struct ScoreArgs {
  std::string bundle, test, out, detail;
  std::optional<std::size_t> k;
  std::optional<double> sigma;
};

int run_score(const CLI::App* cmd, ScoreArgs& a) {
  const auto bundle = cknn::load_bundle(a.bundle);
  auto opt = cknn::InferOptions::from(bundle.hyperparams);
  if (a.k) opt.k = *a.k;
  if (a.sigma) opt.sigma = *a.sigma;
  if (opt.k == 0 || !(opt.sigma > 0)) throw UsageError("k and sigma must be positive");
  opt.keep_object_detail = !a.detail.empty();
  // Labels, if any, are dropped before scoring.
  auto manifest = cknn::read_dataset(a.test);
  for (auto& v : manifest.videos) v.labels.reset();
  const auto series = cknn::score_manifest(bundle, manifest, opt);

  const std::string header = config_header(cmd) + "# bundle_seed=" +
                             std::to_string(bundle.hyperparams.seed) + "\n";
  auto out = open_output(a.out);
  out << header << "# video_id\tframe_idx\traw\tsmoothed\n";
  for (const auto& s : series) {
    for (std::size_t t = 0; t < s.raw.size(); ++t) {
      out << s.video_id << '\t' << t << '\t' << s.raw[t] << '\t' << s.smoothed[t] << '\n';
    }
  }
  if (!a.detail.empty()) {
    auto det = open_output(a.detail);
    det << header << "# video_id\tframe_idx\tobject_idx\ts_app\ts_mot\tcombined\n";
    for (const auto& s : series) {
      for (const auto& o : s.objects) {
        det << s.video_id << '\t' << o.frame_idx << '\t' << o.object_idx << '\t' << o.s_app
            << '\t' << o.s_mot << '\t' << o.combined << '\n';
      }
    }
  }
  std::size_t frames = 0;
  for (const auto& s : series) frames += s.raw.size();
  std::cout << "scored " << series.size() << " videos, " << frames << " frames\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  ModelFlags model;
  std::string train, test, mode = "merge", out, records;
  std::vector<std::string> sweep;
};

// "tau=0,10,25" -> ("tau", {"0","10","25"})
std::vector<std::pair<std::string, std::vector<std::string>>> parse_sweep(
    const std::vector<std::string>& specs) {
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  for (const auto& s : specs) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--sweep expects name=v1,v2,...: " + s);
    std::string name = s.substr(0, eq);
    std::replace(name.begin(), name.end(), '-', '_');
    static const std::set<std::string> known{"k", "n_components", "tau", "p", "sigma", "seed"};
    if (!known.count(name)) throw UsageError("cannot sweep '" + name + "'");
    std::vector<std::string> values;
    std::stringstream ss(s.substr(eq + 1));
    for (std::string v; std::getline(ss, v, ',');) {
      if (!v.empty()) values.push_back(v);
    }
    if (values.empty()) throw UsageError("--sweep " + name + " has no values");
    axes.emplace_back(std::move(name), std::move(values));
  }
  return axes;
}

void apply_setting(cknn::Hyperparams& hp, const std::string& name, const std::string& v) {
  try {
    if (name == "k") hp.k = std::stoul(v);
    else if (name == "n_components") hp.n_components = std::stoul(v);
    else if (name == "tau") hp.tau = std::stod(v);
    else if (name == "p") hp.p = std::stod(v);
    else if (name == "sigma") hp.smoothing_sigma = std::stod(v);
    else if (name == "seed") hp.seed = std::stoull(v);
  } catch (const std::logic_error&) {
    throw UsageError("bad value '" + v + "' for " + name);
  }
}

int run_eval(const CLI::App* cmd, EvalArgs& a) {
  const auto mode = cknn::parse_protocol_mode(a.mode);
  const auto axes = parse_sweep(a.sweep);
  try {
    cleanse_config(a.model);
  } catch (const cknn::InvalidInput& e) {
    throw UsageError(e.what());
  }
  const auto test = cknn::read_dataset(a.test);
  if (!test.has_labels()) throw cknn::InvalidInput("the test manifest has no frame labels");
  cknn::DatasetManifest train;
  train.d_app = test.d_app;
  train.d_mot = test.d_mot;
  if (!a.train.empty()) {
    train = cknn::read_dataset(a.train);
  } else if (mode != cknn::ProtocolMode::Partial) {
    throw UsageError("--train is required for mode " + a.mode);
  }

  const std::string header = config_header(cmd);
  std::optional<std::ofstream> text, records;
  if (!a.out.empty()) text = open_output(a.out);
  if (!a.records.empty()) records = open_output(a.records);
  if (text) *text << header;
  if (records) *records << header;

  // Grid cells in row-major order of the --sweep axes; one cell without sweeps.
  std::vector<std::size_t> idx(axes.size(), 0);
  for (bool more = true; more;) {
    ModelFlags flags = a.model;
    json cell = json::object();
    for (std::size_t i = 0; i < axes.size(); ++i) {
      apply_setting(flags.hp, axes[i].first, axes[i].second[idx[i]]);
      const auto& v = axes[i].second[idx[i]];
      char* end = nullptr;
      const double num = std::strtod(v.c_str(), &end);
      cell[axes[i].first] = (end && *end == '\0') ? json(num) : json(v);
    }
    cknn::CleanseConfig cfg;
    try {
      cfg = cleanse_config(flags);
    } catch (const cknn::InvalidInput& e) {
      throw UsageError(e.what());
    }
    cknn::ProtocolOptions popt;
    popt.cleanse = cfg;
    popt.on_run = [&](const cknn::RunResult& r) {
      std::ostringstream os;
      os << "run " << r.name << ": fit " << std::fixed << std::setprecision(2) << r.fit.seconds
         << "s, app bank " << r.fit.app_bank_rows << ", mot bank " << r.fit.mot_bank_rows;
      if (mode == cknn::ProtocolMode::MergePlus) {
        os << ", audit: " << r.eval_rows_in_banks << " bank rows from " << r.eval_videos.front();
      }
      info(os.str());
    };
    const auto res = cknn::run_protocol(train, test, mode, popt);

    std::ostringstream table;
    table << std::fixed << std::setprecision(4);
    if (!axes.empty()) table << "cell " << cell.dump() << '\n';
    for (const auto& v : res.per_video) table << v.video_id << '\t' << v.auroc << '\n';
    for (const auto& s : res.skipped) table << s << "\tskipped (single-class labels)\n";
    table << "mean_auroc\t" << res.mean_auroc << "\t(" << res.per_video.size() << " videos, "
          << res.runs.size() << " runs)\n";
    std::cout << table.str();
    if (text) *text << table.str();
    if (records) {
      for (const auto& v : res.per_video) {
        json r{{"type", "video"}, {"video", v.video_id}, {"auroc", v.auroc}};
        if (!axes.empty()) r["cell"] = cell;
        *records << r.dump() << '\n';
      }
      for (const auto& run : res.runs) {
        json r{{"type", "run"},
               {"run", run.name},
               {"app_bank_rows", run.fit.app_bank_rows},
               {"mot_bank_rows", run.fit.mot_bank_rows},
               {"app_removed", run.fit.app_removed},
               {"mot_removed", run.fit.mot_removed},
               {"eval_rows_in_banks", run.eval_rows_in_banks}};
        if (!axes.empty()) r["cell"] = cell;
        *records << r.dump() << '\n';
      }
      json r{{"type", "summary"},
             {"mode", cknn::to_string(mode)},
             {"mean_auroc", res.mean_auroc},
             {"videos", res.per_video.size()},
             {"skipped", res.skipped},
             {"runs", res.runs.size()}};
      if (!axes.empty()) r["cell"] = cell;
      *records << r.dump() << '\n';
    }

    more = false;
    for (std::size_t i = axes.size(); i-- > 0;) {
      if (++idx[i] < axes[i].second.size()) {
        more = true;
        break;
      }
      idx[i] = 0;
    }
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
  std::string bundle, modality = "app", format = "text";
  std::size_t rows = 10000, dim = 16, k = 4, batch = 256;
  double p = 100.0, duration = 1.0;
  std::uint64_t seed = 0;
};

int run_bench(BenchArgs& a) {
  if (a.k == 0 || !(a.duration > 0) || !(a.p > 0 && a.p <= 100)) {
    throw UsageError("k and --bench-duration must be positive and p in (0, 100]");
  }
  cknn::FeatureBank bank;
  if (!a.bundle.empty()) {
    const auto b = cknn::load_bundle(a.bundle);
    bank = b.bank(cknn::parse_modality(a.modality));
  } else {
    if (a.rows == 0 || a.dim == 0) throw UsageError("--rows and --dim must be positive");
    cknn::Rng rng = cknn::Rng(a.seed).split("bench-bank");
    bank.matrix.resize(static_cast<Eigen::Index>(a.rows), static_cast<Eigen::Index>(a.dim));
    for (Eigen::Index i = 0; i < bank.matrix.size(); ++i) bank.matrix.data()[i] = rng.normal();
    bank.provenance.assign(a.rows, cknn::ObjectKey{"bench", 0, 0});
  }
  if (a.p < 100.0) bank = cknn::random_compress(bank, a.p, a.seed);
  cknn::SearchIndex index(bank.matrix);
  cknn::BenchOptions opt;
  opt.duration = std::chrono::duration<double>(a.duration);
  opt.batch_size = a.batch;
  opt.p = a.p;
  opt.seed = a.seed;
  const auto rep = cknn::bench_throughput(index, a.k, opt);
  if (a.format == "kv") {
    std::cout << "bank_rows=" << rep.bank_rows << "\ndim=" << rep.dim << "\nk=" << rep.k
              << "\np=" << rep.p << "\nbatch_size=" << rep.batch_size
              << "\nstreaming_queries=" << rep.streaming_queries
              << "\nstreaming_seconds=" << rep.streaming_seconds
              << "\nstreaming_fps=" << rep.streaming_fps() << "\nbatch_queries=" << rep.batch_queries
              << "\nbatch_seconds=" << rep.batch_seconds << "\nbatch_fps=" << rep.batch_fps()
              << '\n';
  } else {
    std::cout << "bank " << rep.bank_rows << " x " << rep.dim << " (p=" << rep.p << "), k=" << rep.k
              << '\n'
              << std::fixed << std::setprecision(1) << "streaming: " << rep.streaming_fps()
              << " queries/s\n"
              << "batch(" << rep.batch_size << "): " << rep.batch_fps() << " queries/s\n";
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// suggest-tau

struct TauArgs {
  ModelFlags model;
  std::string train, modality = "app", out;
};

int run_suggest_tau(const CLI::App* cmd, TauArgs& a) {
  const auto m = cknn::parse_modality(a.modality);
  cknn::CleanseConfig cfg;
  try {
    cfg = cleanse_config(a.model);
  } catch (const cknn::InvalidInput& e) {
    throw UsageError(e.what());
  }
  const auto manifest = cknn::read_dataset(a.train);
  const auto view = manifest.training_view();
  const auto x = cknn::stack_features(view.objects, m, view.dim(m));
  const auto& scorer = m == cknn::Modality::App ? cfg.app_scorer : cfg.mot_scorer;
  const auto ps = cknn::pseudo_score(scorer, x, cknn::mix_seed(a.model.hp.seed, "pseudo-score"));
  const auto s = cknn::suggest_tau(ps.scores);

  std::cout << "scores: " << ps.scores.size() << " in [" << s.lo << ", " << s.hi << "]\n"
            << "modal bin: " << s.modal_bin << "  tail starts at bin: " << s.tail_bin << '\n'
            << "suggested tau: " << std::fixed << std::setprecision(2) << s.tau_star
            << (s.degenerate ? " (degenerate: constant scores)" : "") << " (advisory)\n";
  if (!a.out.empty()) {
    auto out = open_output(a.out);
    out << config_header(cmd);
    json r{{"tau_star", s.tau_star}, {"degenerate", s.degenerate}, {"lo", s.lo},
           {"hi", s.hi},            {"modal_bin", s.modal_bin},   {"tail_bin", s.tail_bin},
           {"histogram", s.histogram}};
    out << r.dump() << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cleansed k-nearest-neighbour video anomaly detection"};
  app.option_defaults()->always_capture_default()->multi_option_policy(
      CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.add_flag_callback("-q,--quiet", [] { verbosity = 0; }, "suppress progress messages");

  SynthArgs synth;
  add_synth(app, synth);

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "cleanse a training set and write a model bundle");
  fit_cmd->add_option("--train", fit.train, "training dataset")->required();
  fit_cmd->add_option("--out", fit.out, "bundle directory")->required();
  add_model_flags(fit_cmd, fit.model);

  ScoreArgs score;
  auto* score_cmd = app.add_subcommand("score", "score every frame of a dataset with a bundle");
  score_cmd->add_option("--bundle", score.bundle)->required();
  score_cmd->add_option("--test", score.test, "dataset to score")->required();
  score_cmd->add_option("--out", score.out, "per-frame scores (TSV)")->required();
  score_cmd->add_option("--detail", score.detail, "per-object scores (TSV)");
  score_cmd->add_option("--k", score.k, "override the bundle's k")->envname("CKNN_K");
  score_cmd->add_option("--sigma", score.sigma, "override the bundle's sigma")->envname("CKNN_SIGMA");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "fit, score and compute per-video AUROC");
  eval_cmd->add_option("--train", eval.train, "train split (optional for partial mode)");
  eval_cmd->add_option("--test", eval.test, "labelled test split")->required();
  eval_cmd->add_option("--mode", eval.mode)
      ->check(CLI::IsMember({"partial", "merge", "merge_plus", "merge+"}))
      ->envname("CKNN_MODE");
  eval_cmd->add_option("--out", eval.out, "results table (text)");
  eval_cmd->add_option("--records", eval.records, "results as JSON lines");
  eval_cmd->add_option("--sweep", eval.sweep, "name=v1,v2,... (repeatable; grid over all)")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  add_model_flags(eval_cmd, eval.model);

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "measure kNN search throughput");
  bench_cmd->add_option("--bundle", bench.bundle, "benchmark a bundle's bank");
  bench_cmd->add_option("--modality", bench.modality)->check(CLI::IsMember({"app", "mot"}));
  bench_cmd->add_option("--rows", bench.rows, "synthetic bank rows");
  bench_cmd->add_option("--dim", bench.dim, "synthetic bank dim");
  bench_cmd->add_option("--k", bench.k)->envname("CKNN_K");
  bench_cmd->add_option("--p", bench.p, "subsample the bank to p percent")->envname("CKNN_P");
  bench_cmd->add_option("--batch-size", bench.batch);
  bench_cmd->add_option("--bench-duration", bench.duration, "seconds per mode")
      ->envname("CKNN_BENCH_DURATION");
  bench_cmd->add_option("--seed", bench.seed)->envname("CKNN_SEED");
  bench_cmd->add_option("--format", bench.format)->check(CLI::IsMember({"text", "kv"}));

  TauArgs tau;
  auto* tau_cmd = app.add_subcommand("suggest-tau", "suggest tau from the pseudo-score histogram");
  tau_cmd->add_option("--train", tau.train)->required();
  tau_cmd->add_option("--modality", tau.modality)->check(CLI::IsMember({"app", "mot"}));
  tau_cmd->add_option("--out", tau.out, "histogram and suggestion (JSON)");
  add_model_flags(tau_cmd, tau.model);

  std::vector<std::string> args;
  try {
    args = expand_config(std::vector<std::string>(argv, argv + argc));
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  std::vector<char*> cargs;
  for (auto& s : args) cargs.push_back(s.data());

  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (app.got_subcommand("synth")) return run_synth(app.get_subcommand("synth"), synth);
    if (app.got_subcommand(fit_cmd)) return run_fit(fit);
    if (app.got_subcommand(score_cmd)) return run_score(score_cmd, score);
    if (app.got_subcommand(eval_cmd)) return run_eval(eval_cmd, eval);
    if (app.got_subcommand(bench_cmd)) return run_bench(bench);
    if (app.got_subcommand(tau_cmd)) return run_suggest_tau(tau_cmd, tau);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const cknn::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    switch (e.kind()) {
      case cknn::ErrorKind::InvalidInput:
      case cknn::ErrorKind::Parse:
        return kData;
      default:
        return kCompute;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kCompute;
  }
  return kUsage;
}
