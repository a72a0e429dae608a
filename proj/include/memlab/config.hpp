#pragma once

// Run configuration files (JSON). Sections: data, model, attack_train,
// attack_eval, loss, train, report. Every key is optional and defaulted;
// unknown keys are rejected with the offending path.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <json.hpp>

#include "memlab/attacks.hpp"
#include "memlab/data.hpp"
#include "memlab/error.hpp"
#include "memlab/losses.hpp"
#include "memlab/optim.hpp"
#include "memlab/random.hpp"
#include "memlab/report.hpp"
#include "memlab/train.hpp"

namespace memlab {

using Json = nlohmann::json;

enum class DataSource { TwoGaussians, TwoMoons, Csv };

struct DataConfig {
  DataSource generator = DataSource::TwoMoons;
  std::size_t n_per_class = 500;
  std::size_t n_per_class_test = 500;
  double noise_std = 0.2;
  std::string train_csv;
  std::string test_csv;
  std::string label_column = "label";
  std::size_t num_classes = 0;
  std::optional<std::pair<double, double>> feature_range;
};

struct ReportConfig {
  PlotGrid plot;
  std::vector<std::size_t> plot_epochs;  // epochs n whose (n-1, n) pair is drawn; empty: the last epoch
  std::size_t forgetting_window = 10;
  std::vector<std::size_t> eval_restarts = {1};
  std::vector<double> sweep_betas = {1.0, 3.0, 6.0, 12.0};
  std::vector<double> sweep_beta_mems = {0.0};
};

struct RunConfig {
  DataConfig data;
  TrainConfig train;
  ReportConfig report;

  RunConfig() {
    train.batch_size = 32;
    train.sgd.nesterov = false;
    train.train_attack.objective = Objective::KLFromClean;
    train.loss.method = Method::MemLossV1;
    train.loss.beta = 5.0;
    train.loss.K = 1;
    train.loss.beta_mem = {2.0};
  }

  void validate() const {
    train.validate();
    if (data.generator == DataSource::Csv) {
      if (data.train_csv.empty()) throw ConfigError("required for csv data", "data.train_csv");
      if (data.test_csv.empty()) throw ConfigError("required for csv data", "data.test_csv");
    } else {
      if (data.n_per_class < 1) throw ConfigError("must be >= 1", "data.n_per_class");
      if (data.n_per_class_test < 1) throw ConfigError("must be >= 1", "data.n_per_class_test");
      if (!(data.noise_std >= 0.0)) throw ConfigError("must be >= 0", "data.noise_std");
    }
    if (data.feature_range && !(data.feature_range->first < data.feature_range->second)) {
      throw ConfigError("needs lo < hi", "data.feature_range");
    }
    const auto& g = report.plot;
    if (g.width == 0 || g.height == 0) throw ConfigError("plot size must be >= 1", "report.plot");
    if (!(g.x_min < g.x_max) || !(g.y_min < g.y_max)) throw ConfigError("plot bounds must increase", "report.plot");
    if (report.forgetting_window < 1) throw ConfigError("must be >= 1", "report.forgetting_window");
    if (report.eval_restarts.empty()) throw ConfigError("must be non-empty", "report.eval_restarts");
    for (auto r : report.eval_restarts) {
      if (r < 1) throw ConfigError("entries must be >= 1", "report.eval_restarts");
    }
    if (report.sweep_betas.empty()) throw ConfigError("must be non-empty", "report.sweep_betas");
    if (report.sweep_beta_mems.empty()) throw ConfigError("must be non-empty", "report.sweep_beta_mems");
  }
};

namespace detail {

static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seed and count fields share one reader");

template <class E>
struct EnumNames {
  std::vector<std::pair<E, const char*>> names;

  const char* to_string(E e) const {
    for (const auto& [v, n] : names) {
      if (v == e) return n;
    }
    return "?";
  }

  E parse(const std::string& s, const std::string& field) const {
    for (const auto& [v, n] : names) {
      if (s == n) return v;
    }
    std::string allowed;
    for (const auto& [v, n] : names) allowed += (allowed.empty() ? "" : ", ") + std::string(n);
    throw ConfigError("unknown value '" + s + "' (expected one of: " + allowed + ")", field);
  }
};

inline const EnumNames<Norm> kNorms{{{Norm::Linf, "linf"}, {Norm::L2, "l2"}}};
inline const EnumNames<Objective> kObjectives{
    {{Objective::CE, "ce"}, {Objective::KLFromClean, "kl"}, {Objective::CWMargin, "cw"}}};
inline const EnumNames<InitKind> kInits{
    {{InitKind::Gaussian, "gaussian"}, {InitKind::UniformBall, "uniform"}, {InitKind::None, "none"}}};
inline const EnumNames<Method> kMethods{{{Method::Standard, "standard"},
                                         {Method::AT, "at"},
                                         {Method::TRADES, "trades"},
                                         {Method::MemLossV1, "memloss_v1"},
                                         {Method::MemLossV2, "memloss_v2"},
                                         {Method::MemLossV3, "memloss_v3"}}};
inline const EnumNames<Schedule> kSchedules{
    {{Schedule::OneCycleCosine, "one_cycle_cosine"}, {Schedule::Constant, "constant"}}};
inline const EnumNames<DataSource> kSources{
    {{DataSource::TwoGaussians, "two_gaussians"}, {DataSource::TwoMoons, "two_moons"}, {DataSource::Csv, "csv"}}};

/// Typed reads from one JSON object; remembers which keys were consumed.
class Section {
 public:
  Section(const Json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError("must be an object", path_);
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const Json* get(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void read(const std::string& key, double& out) {
    if (auto* v = get(key)) {
      if (!v->is_number()) throw ConfigError("expected a number", field(key));
      out = v->get<double>();
    }
  }

  void read(const std::string& key, std::size_t& out) {
    if (auto* v = get(key)) out = count(*v, field(key));
  }

  void read(const std::string& key, bool& out) {
    if (auto* v = get(key)) {
      if (!v->is_boolean()) throw ConfigError("expected true or false", field(key));
      out = v->get<bool>();
    }
  }

  void read(const std::string& key, std::string& out) {
    if (auto* v = get(key)) {
      if (!v->is_string()) throw ConfigError("expected a string", field(key));
      out = v->get<std::string>();
    }
  }

  template <class E>
  void read(const std::string& key, E& out, const EnumNames<E>& names) {
    std::string s;
    if (!has(key)) {
      seen_.insert(key);
      return;
    }
    read(key, s);
    out = names.parse(s, field(key));
  }

  void read(const std::string& key, std::vector<double>& out) {
    if (auto* v = get(key)) {
      if (!v->is_array()) throw ConfigError("expected an array of numbers", field(key));
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number()) throw ConfigError("expected an array of numbers", field(key));
        out.push_back(e.get<double>());
      }
    }
  }

  void read(const std::string& key, std::vector<std::size_t>& out) {
    if (auto* v = get(key)) {
      if (!v->is_array()) throw ConfigError("expected an array of integers", field(key));
      out.clear();
      for (const auto& e : *v) out.push_back(count(e, field(key)));
    }
  }

  /// null or [lo, hi]
  void read(const std::string& key, std::optional<std::pair<double, double>>& out) {
    if (auto* v = get(key)) {
      if (v->is_null()) {
        out.reset();
        return;
      }
      if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number() || !(*v)[1].is_number()) {
        throw ConfigError("expected null or [lo, hi]", field(key));
      }
      out = std::pair{(*v)[0].get<double>(), (*v)[1].get<double>()};
    }
  }

  Section child(const std::string& key) {
    static const Json kEmpty = Json::object();
    const Json* v = get(key);
    return Section(v ? *v : kEmpty, field(key));
  }

  void reject_unknown() const {
    for (const auto& [k, v] : obj_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown key", field(k));
    }
  }

 private:
  static std::uint64_t count(const Json& v, const std::string& field) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    if (v.is_number_integer()) throw ConfigError("must be >= 0", field);
    throw ConfigError("expected a non-negative integer", field);
  }

  const Json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void read_attack(Section s, AttackConfig& a) {
  s.read("norm", a.norm, kNorms);
  s.read("eps", a.eps);
  s.read("alpha", a.alpha);
  s.read("steps", a.steps);
  s.read("restarts", a.restarts);
  s.read("objective", a.objective, kObjectives);
  s.read("init", a.init, kInits);
  s.read("init_noise_std", a.init_noise_std);
  std::optional<std::pair<double, double>> box;
  if (a.domain_box) box = std::pair{a.domain_box->lo, a.domain_box->hi};
  s.read("domain_box", box);
  if (box) {
    a.domain_box = Box{box->first, box->second};
  } else {
    a.domain_box.reset();
  }
  s.reject_unknown();
}

inline Json attack_to_json(const AttackConfig& a) {
  return Json{{"norm", kNorms.to_string(a.norm)},
              {"eps", a.eps},
              {"alpha", a.alpha},
              {"steps", a.steps},
              {"restarts", a.restarts},
              {"objective", kObjectives.to_string(a.objective)},
              {"init", kInits.to_string(a.init)},
              {"init_noise_std", a.init_noise_std},
              {"domain_box", a.domain_box ? Json::array({a.domain_box->lo, a.domain_box->hi}) : Json(nullptr)}};
}

}  // namespace detail

/// Builds a RunConfig from a parsed document. Relative CSV paths resolve
/// against `base_dir`. Throws ConfigError naming the offending field.
inline RunConfig parse_run_config(const Json& doc, const std::filesystem::path& base_dir = {}) {
  using detail::Section;
  RunConfig cfg;
  Section root(doc, "");

  Section data = root.child("data");
  data.read("generator", cfg.data.generator, detail::kSources);
  data.read("n_per_class", cfg.data.n_per_class);
  data.read("n_per_class_test", cfg.data.n_per_class_test);
  data.read("noise_std", cfg.data.noise_std);
  data.read("train_csv", cfg.data.train_csv);
  data.read("test_csv", cfg.data.test_csv);
  data.read("label_column", cfg.data.label_column);
  data.read("num_classes", cfg.data.num_classes);
  data.read("feature_range", cfg.data.feature_range);
  data.reject_unknown();
  for (auto* p : {&cfg.data.train_csv, &cfg.data.test_csv}) {
    if (!p->empty() && std::filesystem::path(*p).is_relative() && !base_dir.empty()) {
      *p = std::filesystem::absolute(base_dir / *p).lexically_normal().string();
    }
  }

  Section model = root.child("model");
  model.read("hidden", cfg.train.hidden);
  model.reject_unknown();

  // Image data lives in [0, 1]: csv inputs get that box unless told otherwise.
  const bool csv = cfg.data.generator == DataSource::Csv;
  for (auto [name, attack] : {std::pair{"attack_train", &cfg.train.train_attack},
                              std::pair{"attack_eval", &cfg.train.early_stop_attack}}) {
    Section s = root.child(name);
    if (csv && !s.has("domain_box")) attack->domain_box = Box{0.0, 1.0};
    detail::read_attack(std::move(s), *attack);
  }

  Section loss = root.child("loss");
  loss.read("method", cfg.train.loss.method, detail::kMethods);
  loss.read("beta", cfg.train.loss.beta);
  loss.read("beta_mem", cfg.train.loss.beta_mem);
  loss.read("K", cfg.train.loss.K);
  loss.read("stop_grad_weight", cfg.train.loss.stop_grad_weight);
  loss.reject_unknown();
  // Non-memory methods carry no slots unless the file asks for them.
  if (!uses_memory(cfg.train.loss.method) && !loss.has("K") && !loss.has("beta_mem")) {
    cfg.train.loss.K = 0;
    cfg.train.loss.beta_mem.clear();
  }

  Section tr = root.child("train");
  tr.read("epochs", cfg.train.epochs);
  tr.read("batch_size", cfg.train.batch_size);
  tr.read("schedule", cfg.train.schedule.kind, detail::kSchedules);
  tr.read("lr_max", cfg.train.schedule.lr_max);
  tr.read("warmup_frac", cfg.train.schedule.warmup_frac);
  tr.read("momentum", cfg.train.sgd.momentum);
  tr.read("nesterov", cfg.train.sgd.nesterov);
  tr.read("weight_decay", cfg.train.sgd.weight_decay);
  tr.read("seed", cfg.train.seed);
  tr.reject_unknown();

  Section rep = root.child("report");
  Section plot = rep.child("plot");
  plot.read("width", cfg.report.plot.width);
  plot.read("height", cfg.report.plot.height);
  plot.read("x_min", cfg.report.plot.x_min);
  plot.read("x_max", cfg.report.plot.x_max);
  plot.read("y_min", cfg.report.plot.y_min);
  plot.read("y_max", cfg.report.plot.y_max);
  plot.reject_unknown();
  rep.read("plot_epochs", cfg.report.plot_epochs);
  rep.read("forgetting_window", cfg.report.forgetting_window);
  rep.read("eval_restarts", cfg.report.eval_restarts);
  rep.read("sweep_betas", cfg.report.sweep_betas);
  rep.read("sweep_beta_mems", cfg.report.sweep_beta_mems);
  rep.reject_unknown();

  root.reject_unknown();
  cfg.validate();
  return cfg;
}

/// Fully explicit form of `cfg`; parsing it back yields an identical config.
inline Json to_json(const RunConfig& cfg) {
  using namespace detail;
  const auto& t = cfg.train;
  const auto& d = cfg.data;
  const auto& r = cfg.report;
  Json j;
  j["data"] = {{"generator", kSources.to_string(d.generator)},
               {"n_per_class", d.n_per_class},
               {"n_per_class_test", d.n_per_class_test},
               {"noise_std", d.noise_std},
               {"train_csv", d.train_csv},
               {"test_csv", d.test_csv},
               {"label_column", d.label_column},
               {"num_classes", d.num_classes},
               {"feature_range", d.feature_range ? Json::array({d.feature_range->first, d.feature_range->second})
                                                 : Json(nullptr)}};
  j["model"] = {{"hidden", t.hidden}};
  j["attack_train"] = attack_to_json(t.train_attack);
  j["attack_eval"] = attack_to_json(t.early_stop_attack);
  j["loss"] = {{"method", kMethods.to_string(t.loss.method)},
               {"beta", t.loss.beta},
               {"beta_mem", t.loss.beta_mem},
               {"K", t.loss.K},
               {"stop_grad_weight", t.loss.stop_grad_weight}};
  j["train"] = {{"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"schedule", kSchedules.to_string(t.schedule.kind)},
                {"lr_max", t.schedule.lr_max},
                {"warmup_frac", t.schedule.warmup_frac},
                {"momentum", t.sgd.momentum},
                {"nesterov", t.sgd.nesterov},
                {"weight_decay", t.sgd.weight_decay},
                {"seed", t.seed}};
  j["report"] = {{"plot",
                  {{"width", r.plot.width},
                   {"height", r.plot.height},
                   {"x_min", r.plot.x_min},
                   {"x_max", r.plot.x_max},
                   {"y_min", r.plot.y_min},
                   {"y_max", r.plot.y_max}}},
                 {"plot_epochs", r.plot_epochs},
                 {"forgetting_window", r.forgetting_window},
                 {"eval_restarts", r.eval_restarts},
                 {"sweep_betas", r.sweep_betas},
                 {"sweep_beta_mems", r.sweep_beta_mems}};
  return j;
}

inline Json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("not valid JSON: ") + e.what(), what);
  }
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Applies one `section.key=value` override. The value is read as JSON when
/// it parses as a scalar and as a plain string otherwise.
inline void apply_override(Json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq || dot == 0 || dot + 1 == eq) {
    throw ConfigError("override must look like section.key=value", assignment);
  }
  const std::string section = assignment.substr(0, dot);
  const std::string key = assignment.substr(dot + 1, eq - dot - 1);
  const std::string text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  if (value.is_object() || value.is_array()) throw ConfigError("overrides only set scalar fields", section + "." + key);
  if (!doc.is_object()) throw ConfigError("must be an object", "");
  Json& sec = doc[section];
  if (sec.is_null()) sec = Json::object();
  if (!sec.is_object()) throw ConfigError("must be an object", section);
  sec[key] = std::move(value);
}

struct LoadedConfig {
  RunConfig config;
  std::string input_text;  // file bytes as read
};

inline LoadedConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {}) {
  LoadedConfig out;
  out.input_text = read_text_file(path);
  Json doc = parse_json_text(out.input_text, path.string());
  for (const auto& o : overrides) apply_override(doc, o);
  out.config = parse_run_config(doc, path.parent_path());
  return out;
}

/// Train and test splits. Toy data draws from streams derived from train.seed.
inline std::pair<Dataset, Dataset> make_datasets(const RunConfig& cfg) {
  const auto& d = cfg.data;
  if (d.generator == DataSource::Csv) {
    CsvSchema schema{d.label_column, d.num_classes, d.feature_range};
    Dataset train_ds = load_csv(d.train_csv, schema, Split::Train);
    if (schema.num_classes == 0) schema.num_classes = train_ds.num_classes;
    Dataset test_ds = load_csv(d.test_csv, schema, Split::Test);
    return {std::move(train_ds), std::move(test_ds)};
  }
  ToySpec spec;
  spec.generator = d.generator == DataSource::TwoGaussians ? ToyGenerator::TwoGaussians : ToyGenerator::TwoMoons;
  spec.noise_std = d.noise_std;
  spec.n_per_class = d.n_per_class;
  spec.seed = derive_key(cfg.train.seed, Stream::DataTrain);
  Dataset train_ds = generate_toy(spec, Split::Train);
  spec.n_per_class = d.n_per_class_test;
  spec.seed = derive_key(cfg.train.seed, Stream::DataTest);
  Dataset test_ds = generate_toy(spec, Split::Test);
  return {std::move(train_ds), std::move(test_ds)};
}

}  // namespace memlab
