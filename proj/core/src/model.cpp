#include "nes/model.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "nes/error.hpp"
#include "text_util.hpp"

namespace nes {

namespace {

constexpr std::string_view kFormatName = "nes-query-model";

bool by_magnitude(const std::pair<std::string, double>& a, const std::pair<std::string, double>& b) {
  const double ma = std::abs(a.second);
  const double mb = std::abs(b.second);
  if (ma != mb) return ma > mb;
  return a.first < b.first;
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Logistic loss over sparse binary rows. The last coordinate is the bias.
class LogisticObjective {
 public:
  LogisticObjective(std::vector<std::vector<std::uint32_t>> rows, std::vector<double> targets,
                    std::vector<double> costs, std::size_t dims, double l2)
      : rows_(std::move(rows)),
        targets_(std::move(targets)),
        costs_(std::move(costs)),
        dims_(dims),
        l2_(l2) {}

  std::size_t size() const { return dims_ + 1; }

  double evaluate(const std::vector<double>& x, std::vector<double>& grad) const {
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    const double bias = x[dims_];
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      double margin = bias;
      for (const auto j : rows_[i]) margin += x[j];
      const double z = -targets_[i] * margin;
      loss += costs_[i] * softplus(z);
      const double coef = -costs_[i] * targets_[i] * sigmoid(z);
      for (const auto j : rows_[i]) grad[j] += coef;
      grad[dims_] += coef;
    }
    for (std::size_t j = 0; j < dims_; ++j) {
      loss += 0.5 * l2_ * x[j] * x[j];
      grad[j] += l2_ * x[j];
    }
    return loss;
  }

 private:
  std::vector<std::vector<std::uint32_t>> rows_;
  std::vector<double> targets_;
  std::vector<double> costs_;
  std::size_t dims_;
  double l2_;
};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

struct MinimizeResult {
  std::vector<double> x;
  double loss;
  int iterations;
};

MinimizeResult lbfgs(const LogisticObjective& obj, const TrainerParams& params) {
  const std::size_t n = obj.size();
  std::vector<double> x(n, 0.0);
  std::vector<double> g(n);
  double f = obj.evaluate(x, g);

  struct Pair {
    std::vector<double> s, y;
    double rho;
  };
  std::deque<Pair> memory;
  std::vector<double> dir(n), x_new(n), g_new(n);
  int it = 0;

  for (; it < params.max_epochs; ++it) {
    double gmax = 0.0;
    for (const double v : g) gmax = std::max(gmax, std::abs(v));
    if (gmax < 1e-12) break;

    // Two-loop recursion.
    dir = g;
    std::vector<double> alpha(memory.size());
    for (std::size_t k = memory.size(); k-- > 0;) {
      alpha[k] = memory[k].rho * dot(memory[k].s, dir);
      for (std::size_t j = 0; j < n; ++j) dir[j] -= alpha[k] * memory[k].y[j];
    }
    double gamma = 1.0;
    if (!memory.empty()) {
      gamma = dot(memory.back().s, memory.back().y) / dot(memory.back().y, memory.back().y);
    } else {
      gamma = 1.0 / std::sqrt(dot(g, g));
    }
    for (auto& v : dir) v *= gamma;
    for (std::size_t k = 0; k < memory.size(); ++k) {
      const double beta = memory[k].rho * dot(memory[k].y, dir);
      for (std::size_t j = 0; j < n; ++j) dir[j] += memory[k].s[j] * (alpha[k] - beta);
    }
    for (auto& v : dir) v = -v;

    double slope = dot(g, dir);
    if (slope >= 0) {
      // Not a descent direction; restart from steepest descent.
      memory.clear();
      for (std::size_t j = 0; j < n; ++j) dir[j] = -g[j] / std::sqrt(dot(g, g));
      slope = dot(g, dir);
    }

    double step = 1.0;
    double f_new = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t j = 0; j < n; ++j) x_new[j] = x[j] + step * dir[j];
      f_new = obj.evaluate(x_new, g_new);
      if (f_new <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    Pair p{std::vector<double>(n), std::vector<double>(n), 0.0};
    for (std::size_t j = 0; j < n; ++j) {
      p.s[j] = x_new[j] - x[j];
      p.y[j] = g_new[j] - g[j];
    }
    const double sy = dot(p.s, p.y);
    if (sy > 1e-12) {
      p.rho = 1.0 / sy;
      memory.push_back(std::move(p));
      if (memory.size() > static_cast<std::size_t>(std::max(1, params.history))) {
        memory.pop_front();
      }
    }

    const double delta = std::abs(f - f_new);
    x.swap(x_new);
    g.swap(g_new);
    f = f_new;
    if (delta <= params.tolerance * std::max(1.0, std::abs(f))) {
      ++it;
      break;
    }
  }
  return {std::move(x), f, it};
}

}  // namespace

// ---------------------------------------------------------------------------

QueryModel::QueryModel(std::string class_name, WeightMap weights, double bias,
                       std::size_t trained_on, std::map<std::string, std::string> meta)
    : class_name_(std::move(class_name)),
      weights_(std::move(weights)),
      bias_(bias),
      trained_on_(trained_on),
      meta_(std::move(meta)) {
  if (!std::isfinite(bias_)) throw Error("query model bias is not finite");
  for (auto it = weights_.begin(); it != weights_.end();) {
    if (!std::isfinite(it->second)) {
      throw Error(fmt::format("weight of '{}' is not finite", it->first));
    }
    it = it->second == 0.0 ? weights_.erase(it) : std::next(it);
  }
}

double QueryModel::weight(std::string_view feature) const {
  auto it = weights_.find(feature);
  return it == weights_.end() ? 0.0 : it->second;
}

double QueryModel::score(const FeatureVector& fv) const {
  double s = 0.0;
  for (const auto& f : fv) {
    if (auto it = weights_.find(f); it != weights_.end()) s += it->second;
  }
  return s;
}

QueryModel QueryModel::scaled(double c) const {
  if (!(c > 0)) throw Error("scale factor must be positive");
  WeightMap w;
  for (const auto& [f, v] : weights_) w.emplace(f, v * c);
  return QueryModel(class_name_, std::move(w), bias_ * c, trained_on_, meta_);
}

QueryModel train(std::span<const LabeledToken> labeled, const TrainerParams& params,
                 std::string class_name) {
  if (labeled.empty()) throw Error("cannot train a query model without labeled tokens");
  const auto positives = static_cast<std::size_t>(
      std::count_if(labeled.begin(), labeled.end(), [](const auto& t) { return t.positive; }));
  const std::size_t negatives = labeled.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw SingleClassError(fmt::format(
        "training data has {} positive and {} negative tokens; keep ranking with the prior model",
        positives, negatives));
  }
  if (!(params.l2 > 0)) throw ConfigError("trainer.l2 must be > 0");
  if (params.max_epochs < 1) throw ConfigError("trainer.max_epochs must be >= 1");

  std::map<std::string_view, std::uint32_t> columns;
  for (const auto& t : labeled) {
    for (const auto& f : t.features) columns.emplace(f, 0);
  }
  std::vector<std::string_view> names;
  names.reserve(columns.size());
  for (auto& [name, col] : columns) {
    col = static_cast<std::uint32_t>(names.size());
    names.push_back(name);
  }

  const double pos_cost = std::clamp(static_cast<double>(negatives) / static_cast<double>(positives),
                                     1.0, std::max(1.0, params.max_positive_weight));
  std::vector<std::vector<std::uint32_t>> rows;
  std::vector<double> targets, costs;
  rows.reserve(labeled.size());
  for (const auto& t : labeled) {
    std::vector<std::uint32_t> row;
    row.reserve(t.features.size());
    for (const auto& f : t.features) row.push_back(columns.at(f));
    rows.push_back(std::move(row));
    targets.push_back(t.positive ? 1.0 : -1.0);
    costs.push_back(t.positive ? pos_cost : 1.0);
  }

  LogisticObjective objective(std::move(rows), std::move(targets), std::move(costs), names.size(),
                              params.l2);
  const auto result = lbfgs(objective, params);

  WeightMap weights;
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (result.x[j] != 0.0) weights.emplace(std::string(names[j]), result.x[j]);
  }
  std::map<std::string, std::string> meta{
      {"trainer", "logistic-l2-lbfgs"},
      {"l2", detail::format_double(params.l2)},
      {"max_epochs", std::to_string(params.max_epochs)},
      {"tolerance", detail::format_double(params.tolerance)},
      {"positive_weight", detail::format_double(pos_cost)},
      {"iterations", std::to_string(result.iterations)},
      {"loss", detail::format_double(result.loss)},
  };
  return QueryModel(std::move(class_name), std::move(weights), result.x.back(), labeled.size(),
                    std::move(meta));
}

std::vector<std::pair<std::string, double>> top_features(const QueryModel& model, std::size_t n) {
  std::vector<std::pair<std::string, double>> all(model.weights().begin(), model.weights().end());
  n = std::min(n, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(),
                    by_magnitude);
  all.resize(n);
  return all;
}

QueryModel prune(const QueryModel& model, std::size_t max_features) {
  if (max_features < 1) throw Error("prune: max_features must be >= 1");
  if (max_features >= model.size()) return model;
  auto kept = top_features(model, max_features);
  auto meta = model.meta();
  meta["pruned_to"] = std::to_string(max_features);
  return QueryModel(model.class_name(), WeightMap(kept.begin(), kept.end()), model.bias(),
                    model.trained_on(), std::move(meta));
}

double uncertainty_of_score(const QueryModel& model, double score) {
  return -std::abs(score - model.threshold());
}

double uncertainty(const QueryModel& model, const FeatureVector& fv) {
  return uncertainty_of_score(model, model.score(fv));
}

std::vector<std::pair<std::string, double>> feature_importance(
    std::span<const std::pair<QueryModel, double>> models, FeatureGrouping grouping,
    std::size_t top_n) {
  if (models.empty()) throw Error("feature_importance needs at least one model");
  std::map<std::string, double> mass;
  for (const auto& [model, uap] : models) {
    for (const auto& [feature, w] : top_features(model, top_n)) {
      const auto group = grouping == FeatureGrouping::kFamily ? feature_family(feature)
                                                              : feature_template(feature);
      mass[std::string(group)] += uap;
    }
  }
  std::vector<std::pair<std::string, double>> out(mass.begin(), mass.end());
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

void write_model(std::ostream& out, const QueryModel& model) {
  out << "format\t" << kFormatName << '\n';
  out << "version\t" << kModelFormatVersion << '\n';
  out << "class\t" << model.class_name() << '\n';
  out << "trained_on\t" << model.trained_on() << '\n';
  out << "bias\t" << detail::format_double(model.bias()) << '\n';
  for (const auto& [k, v] : model.meta()) out << "meta\t" << k << '\t' << v << '\n';
  out << "weights\t" << model.size() << '\n';
  for (const auto& [f, w] : model.weights()) out << f << '\t' << detail::format_double(w) << '\n';
}

QueryModel read_model(std::istream& in, const std::string& source_name) {
  std::string line;
  std::size_t line_no = 0;
  std::string class_name;
  std::size_t trained_on = 0;
  double bias = 0.0;
  std::map<std::string, std::string> meta;
  WeightMap weights;
  bool saw_format = false;
  bool saw_version = false;
  std::size_t expected = 0;
  bool in_weights = false;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cols = detail::split_char(line, '\t');
    if (in_weights) {
      double w = 0.0;
      if (cols.size() != 2 || !detail::parse_double(cols[1], w)) {
        throw ParseError(source_name, line_no, "expected feature<TAB>weight");
      }
      if (!std::isfinite(w)) {
        throw ParseError(source_name, line_no, fmt::format("weight of '{}' is not finite", cols[0]));
      }
      if (!weights.emplace(std::string(cols[0]), w).second) {
        throw ParseError(source_name, line_no, fmt::format("duplicate feature '{}'", cols[0]));
      }
      continue;
    }
    const auto key = cols[0];
    if (key == "format") {
      if (cols.size() != 2 || cols[1] != kFormatName) {
        throw ParseError(source_name, line_no, "not a query model file");
      }
      saw_format = true;
    } else if (key == "version") {
      int v = 0;
      if (cols.size() != 2 || !detail::parse_integer(cols[1], v)) {
        throw ParseError(source_name, line_no, "bad version line");
      }
      if (v != kModelFormatVersion) {
        throw VersionError(fmt::format("{}: model format version {} is not supported (expected {})",
                                       source_name, v, kModelFormatVersion));
      }
      saw_version = true;
    } else if (key == "class" && cols.size() == 2) {
      class_name = std::string(cols[1]);
    } else if (key == "trained_on" && cols.size() == 2) {
      if (!detail::parse_integer(cols[1], trained_on)) {
        throw ParseError(source_name, line_no, "bad trained_on");
      }
    } else if (key == "bias" && cols.size() == 2) {
      if (!detail::parse_double(cols[1], bias) || !std::isfinite(bias)) {
        throw ParseError(source_name, line_no, "bad bias");
      }
    } else if (key == "meta" && cols.size() == 3) {
      meta[std::string(cols[1])] = std::string(cols[2]);
    } else if (key == "weights" && cols.size() == 2) {
      if (!detail::parse_integer(cols[1], expected)) {
        throw ParseError(source_name, line_no, "bad weight count");
      }
      in_weights = true;
    } else {
      throw ParseError(source_name, line_no, fmt::format("unexpected line '{}'", line));
    }
  }
  if (!saw_format || !saw_version) throw ParseError(source_name, 0, "missing format header");
  if (!in_weights) throw ParseError(source_name, 0, "missing weights section");
  if (weights.size() != expected) {
    throw ParseError(source_name, 0,
                     fmt::format("expected {} weights, found {}", expected, weights.size()));
  }
  return QueryModel(std::move(class_name), std::move(weights), bias, trained_on, std::move(meta));
}

void save_model(const QueryModel& model, const std::filesystem::path& path) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write {}", tmp.string()));
    if (path.extension() == ".json") {
      out << model_to_json(model).dump(2) << '\n';
    } else {
      write_model(out, model);
    }
    if (!out) throw IoError(fmt::format("write failed: {}", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

QueryModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string(), 0, e.what());
    }
    return model_from_json(j);
  }
  std::istringstream is(text);
  return read_model(is, path.string());
}

nlohmann::json model_to_json(const QueryModel& model) {
  nlohmann::json weights = nlohmann::json::object();
  for (const auto& [f, w] : model.weights()) weights[f] = w;
  return {{"format", kFormatName},   {"version", kModelFormatVersion},
          {"class_name", model.class_name()}, {"trained_on", model.trained_on()},
          {"bias", model.bias()},    {"meta", model.meta()},
          {"weights", std::move(weights)}};
}

QueryModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", std::string{}) != kFormatName) throw Error("not a query model document");
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion) {
      throw VersionError(fmt::format("model format version {} is not supported", version));
    }
    WeightMap weights;
    for (const auto& [f, w] : j.at("weights").items()) {
      if (!w.is_number()) throw Error(fmt::format("weight of '{}' is not a number", f));
      weights.emplace(f, w.get<double>());
    }
    return QueryModel(j.value("class_name", std::string{}), std::move(weights),
                      j.value("bias", 0.0), j.value("trained_on", std::size_t{0}),
                      j.value("meta", std::map<std::string, std::string>{}));
  } catch (const nlohmann::json::exception& e) {
    throw Error(fmt::format("malformed model document: {}", e.what()));
  }
}

}  // namespace nes
