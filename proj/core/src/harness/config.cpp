#include "zotune/harness/config.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "zotune/error.hpp"

namespace zotune::harness {

namespace {

constexpr std::string_view kTasks[] = {"quadratic_hetero", "blobs_logreg", "blobs_mlp",
                                       "tokens_attention"};

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

struct Line {
  std::string_view source;
  std::size_t number = 0;
  std::string key;

  [[noreturn]] void fail(const std::string& message) const {
    throw ConfigError(fmt::format("{}:{}: {}: {}", source, number, key, message));
  }
};

std::vector<std::string_view> split_list(std::string_view value) {
  value = trim(value);
  if (!value.empty() && value.front() == '[') {
    if (value.back() != ']') return {};
    value = trim(value.substr(1, value.size() - 2));
  }
  std::vector<std::string_view> out;
  if (value.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = value.find(',', start);
    out.push_back(trim(value.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::uint64_t parse_u64(std::string_view text, const Line& line) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc() || ptr != end) {
    line.fail(fmt::format("expected a non-negative integer, got '{}'", text));
  }
  return v;
}

std::size_t parse_size(std::string_view text, const Line& line) {
  return static_cast<std::size_t>(parse_u64(text, line));
}

double parse_double(std::string_view text, const Line& line) {
  const std::string owned(text);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(owned.c_str(), &end);
  if (owned.empty() || end != owned.c_str() + owned.size() || errno == ERANGE ||
      !std::isfinite(v)) {
    line.fail(fmt::format("expected a finite number, got '{}'", text));
  }
  return v;
}

template <typename T, typename F>
std::vector<T> parse_list(std::string_view value, const Line& line, F&& item) {
  const auto parts = split_list(value);
  if (parts.empty()) line.fail("expected a non-empty list");
  std::vector<T> out;
  for (auto part : parts) {
    if (part.empty()) line.fail("empty list item");
    out.push_back(item(part));
  }
  return out;
}

template <typename F>
auto rethrow_on(const Line& line, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError& e) {
    line.fail(e.what());
  }
}

struct Parser {
  ExperimentConfig config;
  ProjectionConfig projection;
  std::set<std::string> seen;
  std::map<std::string, std::size_t> proj_lines;
  using Handler = std::function<void(std::string_view, const Line&)>;
  std::map<std::string, Handler, std::less<>> handlers;

  Parser() {
    auto& c = config;
    auto& t = config.task_options;
    handlers["task"] = [&c](auto v, const Line& l) {
      c.task = rethrow_on(l, [&] { return task_from_string(v); });
    };
    handlers["methods"] = [&c](auto v, const Line& l) {
      c.methods = parse_list<Method>(
          v, l, [&](auto s) { return rethrow_on(l, [&] { return method_from_string(s); }); });
      auto sorted = c.methods;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        l.fail("duplicate method");
      }
    };
    handlers["seeds"] = [&c](auto v, const Line& l) {
      c.seeds = parse_list<std::uint64_t>(v, l, [&](auto s) { return parse_u64(s, l); });
      auto sorted = c.seeds;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        l.fail("duplicate seed");
      }
    };
    handlers["output_dir"] = [&c](auto v, const Line& l) {
      if (v.empty()) l.fail("empty path");
      c.output_dir = std::filesystem::path(std::string(v));
    };
    handlers["train.steps"] = [&c](auto v, const Line& l) { c.train.steps = parse_size(v, l); };
    handlers["train.lr"] = [&c](auto v, const Line& l) { c.train.lr = parse_double(v, l); };
    handlers["train.lr_schedule"] = [&c](auto v, const Line& l) {
      c.train.lr_schedule = rethrow_on(l, [&] { return lr_schedule_from_string(v); });
    };
    handlers["train.eps"] = [&c](auto v, const Line& l) { c.train.eps = parse_double(v, l); };
    handlers["train.q"] = [&c](auto v, const Line& l) { c.train.q = parse_size(v, l); };
    handlers["train.batch_size"] = [&c](auto v, const Line& l) {
      c.train.batch_size = parse_size(v, l);
    };
    handlers["train.eval_every"] = [&c](auto v, const Line& l) {
      c.train.eval_every = parse_size(v, l);
    };
    handlers["fo.lr"] = [&c](auto v, const Line& l) { c.fo_lr = parse_double(v, l); };

    auto& p = projection;
    handlers["proj.tau"] = [&p](auto v, const Line& l) { p.tau = parse_double(v, l); };
    handlers["proj.kappa"] = [&p](auto v, const Line& l) { p.kappa = parse_size(v, l); };
    handlers["proj.eps_proj"] = [&p](auto v, const Line& l) { p.eps_proj = parse_double(v, l); };
    handlers["proj.inner_iters"] = [&p](auto v, const Line& l) {
      p.inner_iters = parse_size(v, l);
    };
    handlers["proj.inner_lr"] = [&p](auto v, const Line& l) { p.inner_lr = parse_double(v, l); };
    handlers["proj.gap_floor"] = [&p](auto v, const Line& l) {
      p.gap_floor = parse_double(v, l);
    };

    handlers["anchor"] = [&c](auto v, const Line& l) {
      constexpr std::string_view prefix = "warmstart:";
      if (v == "init") {
        c.warmstart.reset();
      } else if (v.substr(0, prefix.size()) == prefix && v.size() > prefix.size()) {
        c.warmstart = std::filesystem::path(std::string(v.substr(prefix.size())));
      } else {
        l.fail(fmt::format("expected 'init' or 'warmstart:<path>', got '{}'", v));
      }
    };
    handlers["anchor.precision"] = [&c](auto v, const Line& l) {
      c.anchor_precision = rethrow_on(l, [&] { return precision_from_string(v); });
    };
    handlers["anchor.roles"] = [&c](auto v, const Line& l) {
      c.anchor_roles = parse_list<Role>(
          v, l, [&](auto s) { return rethrow_on(l, [&] { return role_from_string(s); }); });
    };

    handlers["task.layers"] = [&t](auto v, const Line& l) { t.layers = parse_size(v, l); };
    handlers["task.dim"] = [&t](auto v, const Line& l) { t.dim = parse_size(v, l); };
    handlers["task.radius_min"] = [&t](auto v, const Line& l) {
      t.radius_min = parse_double(v, l);
    };
    handlers["task.radius_span"] = [&t](auto v, const Line& l) {
      t.radius_span = parse_double(v, l);
    };
    handlers["task.curvature"] = [&t](auto v, const Line& l) {
      t.curvature = parse_double(v, l);
    };
    handlers["task.curvature_span"] = [&t](auto v, const Line& l) {
      t.curvature_span = parse_double(v, l);
    };
    handlers["task.noise"] = [&t](auto v, const Line& l) { t.noise = parse_double(v, l); };
    handlers["task.batches"] = [&t](auto v, const Line& l) { t.batches = parse_size(v, l); };
    handlers["task.features"] = [&t](auto v, const Line& l) { t.features = parse_size(v, l); };
    handlers["task.classes"] = [&t](auto v, const Line& l) { t.classes = parse_size(v, l); };
    handlers["task.separation"] = [&t](auto v, const Line& l) {
      t.separation = parse_double(v, l);
    };
    handlers["task.hidden"] = [&t](auto v, const Line& l) { t.hidden = parse_size(v, l); };
    handlers["task.d_model"] = [&t](auto v, const Line& l) { t.d_model = parse_size(v, l); };
    handlers["task.seq_len"] = [&t](auto v, const Line& l) { t.seq_len = parse_size(v, l); };
    handlers["task.vocab"] = [&t](auto v, const Line& l) { t.vocab = parse_size(v, l); };
    handlers["task.data_csv"] = [&t](auto v, const Line& l) {
      if (v.empty()) l.fail("empty path");
      t.data_csv = std::filesystem::path(std::string(v));
    };

    handlers["threshold"] = [&c](auto v, const Line& l) {
      c.threshold_fraction = parse_double(v, l);
      if (!(c.threshold_fraction > 0.0)) l.fail("must be > 0");
    };
    handlers["threshold.loss"] = [&c](auto v, const Line& l) {
      c.threshold_loss = parse_double(v, l);
    };
    handlers["varsym.samples"] = [&c](auto v, const Line& l) {
      c.varsym_samples = parse_size(v, l);
    };
    handlers["rate.budgets"] = [&c](auto v, const Line& l) {
      c.rate_budgets = parse_list<std::size_t>(v, l, [&](auto s) { return parse_size(s, l); });
    };
    handlers["rate.lr0"] = [&c](auto v, const Line& l) { c.rate_lr0 = parse_double(v, l); };
    handlers["rate.seeds"] = [&c](auto v, const Line& l) { c.rate_seeds = parse_size(v, l); };
    handlers["rate.checkpoints"] = [&c](auto v, const Line& l) {
      c.rate_checkpoints = parse_size(v, l);
    };
  }

  void feed(std::string_view raw, std::string_view source, std::size_t number) {
    const auto hash = raw.find('#');
    const auto text = trim(raw.substr(0, hash));
    if (text.empty()) return;
    const auto eq = text.find('=');
    Line line{source, number, std::string(trim(text.substr(0, eq)))};
    if (eq == std::string_view::npos) {
      throw ConfigError(fmt::format("{}:{}: expected 'key = value'", source, number));
    }
    if (line.key.empty()) {
      throw ConfigError(fmt::format("{}:{}: missing key before '='", source, number));
    }
    const auto it = handlers.find(line.key);
    if (it == handlers.end()) line.fail("unknown key");
    if (!seen.insert(line.key).second) line.fail("duplicate key");
    const auto value = trim(text.substr(eq + 1));
    if (value.empty()) line.fail("missing value");
    if (line.key.rfind("proj.", 0) == 0) proj_lines[line.key] = number;
    it->second(value, line);
  }

  ExperimentConfig finish(std::string_view source) {
    for (const char* key : {"task", "methods", "seeds", "train.steps", "train.lr"}) {
      if (!seen.count(key)) {
        throw ConfigError(fmt::format("{}: missing required key '{}'", source, key));
      }
    }
    if (config.has_method(Method::Dizo)) {
      for (const char* key : {"proj.tau", "proj.kappa"}) {
        if (!seen.count(key)) {
          throw ConfigError(
              fmt::format("{}: missing required key '{}' (needed by method dizo)", source, key));
        }
      }
      try {
        projection.validate();
      } catch (const ConfigError& e) {
        throw ConfigError(fmt::format("{}:{}: {}", source, proj_lines.begin()->second, e.what()));
      }
      config.projection = projection;
    } else if (!proj_lines.empty()) {
      const auto& [key, number] = *proj_lines.begin();
      throw ConfigError(
          fmt::format("{}:{}: {}: projection keys need method dizo", source, number, key));
    }
    try {
      config.train.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("{}: {}", source, e.what()));
    }
    if (config.fo_lr && !(*config.fo_lr >= 0.0)) {
      throw ConfigError(fmt::format("{}: fo.lr must be >= 0", source));
    }
    return config;
  }
};

}  // namespace

std::string_view to_string(TaskKind task) { return kTasks[static_cast<int>(task)]; }

TaskKind task_from_string(std::string_view name) {
  for (std::size_t i = 0; i < std::size(kTasks); ++i) {
    if (kTasks[i] == name) return static_cast<TaskKind>(i);
  }
  throw ConfigError(fmt::format("unknown task '{}'", name));
}

bool ExperimentConfig::has_method(Method method) const {
  return std::find(methods.begin(), methods.end(), method) != methods.end();
}

ExperimentConfig parse_config(std::string_view text, std::string_view source) {
  Parser parser;
  std::size_t number = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    ++number;
    parser.feed(text.substr(start, nl == std::string_view::npos ? std::string_view::npos
                                                                : nl - start),
                source, number);
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return parser.finish(source);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), path.string());
}

nlohmann::json resolved_config(const ExperimentConfig& c) {
  nlohmann::json j;
  j["task"] = std::string(to_string(c.task));
  auto& methods = j["methods"] = nlohmann::json::array();
  for (auto m : c.methods) methods.push_back(std::string(to_string(m)));
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir.generic_string();
  j["train.steps"] = c.train.steps;
  j["train.lr"] = c.train.lr;
  j["train.lr_schedule"] = std::string(to_string(c.train.lr_schedule));
  j["train.eps"] = c.train.eps;
  j["train.q"] = c.train.q;
  j["train.batch_size"] = c.train.batch_size;
  j["train.eval_every"] = c.train.eval_every;
  if (c.has_method(Method::FoReference)) j["fo.lr"] = c.fo_lr.value_or(c.train.lr);
  if (c.projection) {
    const auto& p = *c.projection;
    j["proj.tau"] = p.tau;
    j["proj.kappa"] = p.kappa;
    j["proj.eps_proj"] = p.eps_proj;
    j["proj.inner_iters"] = p.inner_iters;
    j["proj.inner_lr"] = p.inner_lr;
    j["proj.gap_floor"] = p.gap_floor;
  }
  j["anchor"] = c.warmstart ? "warmstart:" + c.warmstart->generic_string() : std::string("init");
  j["anchor.precision"] = std::string(to_string(c.anchor_precision));
  if (c.anchor_roles) {
    auto& roles = j["anchor.roles"] = nlohmann::json::array();
    for (auto r : *c.anchor_roles) roles.push_back(std::string(to_string(r)));
  } else {
    j["anchor.roles"] = "task-default";
  }
  const auto& t = c.task_options;
  j["task.layers"] = t.layers;
  j["task.dim"] = t.dim;
  j["task.radius_min"] = t.radius_min;
  j["task.radius_span"] = t.radius_span;
  j["task.curvature"] = t.curvature;
  j["task.curvature_span"] = t.curvature_span;
  j["task.noise"] = t.noise;
  j["task.batches"] = t.batches;
  j["task.features"] = t.features;
  j["task.classes"] = t.classes;
  j["task.separation"] = t.separation;
  j["task.hidden"] = t.hidden;
  j["task.d_model"] = t.d_model;
  j["task.seq_len"] = t.seq_len;
  j["task.vocab"] = t.vocab;
  if (t.data_csv) j["task.data_csv"] = t.data_csv->generic_string();
  j["threshold"] = c.threshold_fraction;
  if (c.threshold_loss) j["threshold.loss"] = *c.threshold_loss;
  j["varsym.samples"] = c.varsym_samples;
  j["rate.budgets"] = c.rate_budgets;
  j["rate.lr0"] = c.rate_lr0;
  j["rate.seeds"] = c.rate_seeds;
  j["rate.checkpoints"] = c.rate_checkpoints;
  return j;
}

}  // namespace zotune::harness
