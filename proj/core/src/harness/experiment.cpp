#include "zotune/harness/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "zotune/anchor.hpp"
#include "zotune/checkpoint.hpp"
#include "zotune/dizo.hpp"
#include "zotune/error.hpp"
#include "zotune/grad_oracle.hpp"
#include "zotune/harness/records_csv.hpp"
#include "zotune/rng.hpp"
#include "zotune/version.hpp"

namespace zotune::harness {

namespace {

void summarize(const ExperimentConfig& config, const TaskInstance& task, ArmResult& arm) {
  auto& s = arm.summary;
  const auto& log = arm.log;
  s.method = arm.spec.method;
  s.seed = arm.spec.seed;
  s.steps = config.train.steps;
  s.q = arm.spec.method == Method::FoReference ? 0 : config.train.q;
  if (arm.spec.method == Method::Dizo) {
    s.kappa = config.projection->kappa;
    s.inner_iters = config.projection->inner_iters;
  }
  if (!log.records.empty()) {
    s.initial_loss = log.records.front().loss_clean;
    s.final_loss = log.records.back().loss_clean;
  }
  s.threshold_loss = config.threshold_loss.value_or(config.threshold_fraction * s.initial_loss);
  for (const auto& r : log.records) {
    if (r.loss_clean <= s.threshold_loss) {
      s.iterations_to_threshold = r.iteration;
      break;
    }
  }
  for (const auto& r : log.records) {
    for (double m : r.projection_mag) {
      s.min_projection_mag = std::min(s.min_projection_mag, m);
      s.max_projection_mag = std::max(s.max_projection_mag, m);
    }
  }
  if (arm.params) s.final_accuracy = task.oracle->accuracy(*arm.params, task.eval);
  s.forward_passes = log.stats.forward_passes;
  s.projection_cycles = log.stats.projection_cycles;
  s.projection_failures = log.stats.projection_failures;
  s.stability_violations = log.stats.stability_violations;
  s.min_slack = std::isfinite(log.stats.min_slack) ? log.stats.min_slack : 0.0;
}

template <typename T>
nlohmann::json optional_json(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <typename T>
std::optional<T> optional_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

}  // namespace

std::string ArmSpec::name() const { return fmt::format("{}_seed{}", to_string(method), seed); }

std::vector<ArmSpec> expand_arms(const ExperimentConfig& config) {
  std::vector<ArmSpec> out;
  for (auto method : config.methods) {
    for (auto seed : config.seeds) out.push_back({method, seed});
  }
  return out;
}

ArmResult run_arm(const ExperimentConfig& config, const ArmSpec& spec) {
  const auto task = make_task(config, spec.seed);
  TrainConfig train = config.train;
  train.seed = spec.seed;
  ArmResult arm{spec, {}, std::nullopt, {}};
  try {
    RunResult result;
    switch (spec.method) {
      case Method::ZoSgd:
        result = zo_sgd_run(*task.oracle, task.init, task.train, train, {}, &task.eval);
        break;
      case Method::Dizo: {
        if (!config.projection) throw ConfigError("dizo arm without projection settings");
        const auto anchor = build_anchor(task.init, config.anchor_roles.value_or(task.default_roles),
                                         config.anchor_precision);
        result = dizo_run(*task.oracle, task.init, task.train, train, *config.projection, anchor,
                          {}, &task.eval);
        break;
      }
      case Method::FoReference: {
        FoOptions options;
        options.eval_every = train.eval_every;
        options.eval_batch = &task.eval;
        result = fo_reference_run(*task.oracle, task.init, task.train,
                                  config.fo_lr.value_or(train.lr), train.steps, options);
        break;
      }
    }
    arm.log = std::move(result.log);
    arm.params = std::move(result.params);
  } catch (const RunAborted& e) {
    arm.log = e.partial();
    arm.summary.aborted = true;
    arm.summary.error = e.what();
  }
  summarize(config, task, arm);
  return arm;
}

std::vector<const ArmSummary*> ExperimentSummary::failed() const {
  std::vector<const ArmSummary*> out;
  for (const auto& arm : arms) {
    if (arm.aborted) out.push_back(&arm);
  }
  return out;
}

nlohmann::json to_json(const ArmSummary& a) {
  return {
      {"method", std::string(to_string(a.method))},
      {"seed", a.seed},
      {"aborted", a.aborted},
      {"error", a.error},
      {"steps", a.steps},
      {"q", a.q},
      {"kappa", a.kappa},
      {"inner_iters", a.inner_iters},
      {"initial_loss", a.initial_loss},
      {"final_loss", a.final_loss},
      {"final_accuracy", optional_json(a.final_accuracy)},
      {"threshold_loss", a.threshold_loss},
      {"iterations_to_threshold", optional_json(a.iterations_to_threshold)},
      {"forward_passes", a.forward_passes},
      {"projection_cycles", a.projection_cycles},
      {"projection_failures", a.projection_failures},
      {"stability_violations", a.stability_violations},
      {"min_slack", a.min_slack},
      {"min_projection_mag", a.min_projection_mag},
      {"max_projection_mag", a.max_projection_mag},
  };
}

nlohmann::json to_json(const ExperimentSummary& s) {
  nlohmann::json arms = nlohmann::json::array();
  for (const auto& a : s.arms) arms.push_back(to_json(a));
  return {{"task", std::string(to_string(s.task))},
          {"threshold", s.threshold_fraction},
          {"threshold_loss", optional_json(s.threshold_loss)},
          {"arms", std::move(arms)}};
}

ExperimentSummary summary_from_json(const nlohmann::json& j) {
  try {
    ExperimentSummary s;
    s.task = task_from_string(j.at("task").get<std::string>());
    s.threshold_fraction = j.at("threshold").get<double>();
    s.threshold_loss = optional_from<double>(j, "threshold_loss");
    for (const auto& a : j.at("arms")) {
      ArmSummary arm;
      arm.method = method_from_string(a.at("method").get<std::string>());
      arm.seed = a.at("seed").get<std::uint64_t>();
      arm.aborted = a.at("aborted").get<bool>();
      arm.error = a.value("error", std::string());
      arm.steps = a.at("steps").get<std::size_t>();
      arm.q = a.at("q").get<std::size_t>();
      arm.kappa = a.at("kappa").get<std::size_t>();
      arm.inner_iters = a.at("inner_iters").get<std::size_t>();
      arm.initial_loss = a.at("initial_loss").get<double>();
      arm.final_loss = a.at("final_loss").get<double>();
      arm.final_accuracy = optional_from<double>(a, "final_accuracy");
      arm.threshold_loss = a.at("threshold_loss").get<double>();
      arm.iterations_to_threshold = optional_from<std::size_t>(a, "iterations_to_threshold");
      arm.forward_passes = a.at("forward_passes").get<std::size_t>();
      arm.projection_cycles = a.at("projection_cycles").get<std::size_t>();
      arm.projection_failures = a.at("projection_failures").get<std::size_t>();
      arm.stability_violations = a.at("stability_violations").get<std::size_t>();
      arm.min_slack = a.at("min_slack").get<double>();
      arm.min_projection_mag = a.value("min_projection_mag", 1.0);
      arm.max_projection_mag = a.value("max_projection_mag", 1.0);
      s.arms.push_back(std::move(arm));
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("malformed summary: {}", e.what()));
  }
}

ExperimentSummary load_summary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open summary '{}'", path.string()));
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  try {
    return summary_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

std::size_t worker_count_from_env() {
  const char* raw = std::getenv("ZOTUNE_WORKERS");
  if (raw == nullptr || *raw == '\0') {
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
  }
  const std::string_view text(raw);
  std::size_t n = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), n);
  if (ec != std::errc() || ptr != text.data() + text.size() || n == 0) {
    throw ConfigError(fmt::format("ZOTUNE_WORKERS must be a positive integer, got '{}'", text));
  }
  return n;
}

nlohmann::json make_manifest(const ExperimentConfig& config) {
  nlohmann::json arms = nlohmann::json::array();
  for (const auto& spec : expand_arms(config)) arms.push_back(spec.name());
  return {{"config", resolved_config(config)},
          {"version", std::string(version())},
          {"git_revision", std::string(git_revision())},
          {"rng", std::string(kRngAlgorithm)},
          {"arms", std::move(arms)}};
}

ExperimentSummary run_experiment(const ExperimentConfig& config, std::size_t workers) {
  const auto specs = expand_arms(config);
  std::filesystem::create_directories(config.output_dir);

  std::vector<ArmSummary> summaries(specs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= specs.size()) return;
      try {
        auto arm = run_arm(config, specs[i]);
        const auto stem = config.output_dir / specs[i].name();
        write_file_atomic(stem.string() + ".csv", format_records_csv(arm.log));
        if (arm.params) save_params(stem.string() + ".ckpt", *arm.params);
        summaries[i] = std::move(arm.summary);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        next.store(specs.size());
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(specs.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);

  ExperimentSummary summary;
  summary.task = config.task;
  summary.threshold_fraction = config.threshold_fraction;
  summary.threshold_loss = config.threshold_loss;
  summary.arms = std::move(summaries);
  write_file_atomic(config.output_dir / "summary.json", to_json(summary).dump(2) + "\n");
  write_file_atomic(config.output_dir / "manifest.json", make_manifest(config).dump(2) + "\n");
  return summary;
}

std::size_t expected_forward_passes(Method method, std::size_t steps, std::size_t q,
                                    std::size_t kappa, std::size_t inner_iters) {
  if (method == Method::FoReference) return 0;
  std::size_t total = 2 * q * steps;
  if (method == Method::Dizo && kappa > 0) total += 2 * inner_iters * (steps / kappa);
  return total;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ConfigError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

CompareReport compare_arms(const std::vector<ExperimentSummary>& summaries) {
  if (summaries.empty()) throw ConfigError("compare needs at least one summary");
  CompareReport report;
  report.task = summaries.front().task;
  std::size_t total = 0;
  for (const auto& s : summaries) {
    if (s.task != report.task) {
      throw ConfigError(fmt::format("cannot compare task {} with task {}", to_string(report.task),
                                    to_string(s.task)));
    }
    if (s.threshold_fraction != summaries.front().threshold_fraction ||
        s.threshold_loss != summaries.front().threshold_loss) {
      throw ConfigError("summaries use different loss thresholds");
    }
    total += s.arms.size();
  }
  if (total < 2) throw ConfigError("compare needs at least 2 arms");

  std::map<Method, std::vector<const ArmSummary*>> groups;
  for (const auto& s : summaries) {
    for (const auto& a : s.arms) groups[a.method].push_back(&a);
  }
  std::map<Method, std::size_t> index;
  for (const auto& [method, arms] : groups) {
    MethodComparison m;
    m.method = method;
    std::vector<double> reached;
    std::vector<double> finals;
    for (const auto* a : arms) {
      m.iterations.emplace_back(a->seed, a->aborted ? std::nullopt : a->iterations_to_threshold);
      if (a->aborted) {
        report.warnings.push_back(
            fmt::format("{}_seed{} aborted: {}", to_string(method), a->seed, a->error));
      } else {
        finals.push_back(a->final_loss);
      }
      if (m.iterations.back().second) {
        reached.push_back(static_cast<double>(*m.iterations.back().second));
      } else {
        ++m.dnf;
        report.warnings.push_back(fmt::format("{}_seed{} did not reach the threshold (DNF), "
                                              "excluded from the ratio",
                                              to_string(method), a->seed));
      }
    }
    if (!reached.empty()) m.median_iterations = median(reached);
    if (!finals.empty()) m.median_final_loss = median(finals);
    const auto* first = arms.front();
    m.forward_passes = first->forward_passes;
    m.expected_forward_passes =
        expected_forward_passes(method, first->steps, first->q, first->kappa, first->inner_iters);
    for (const auto* a : arms) {
      if (a->forward_passes != m.forward_passes && !a->aborted) {
        report.warnings.push_back(
            fmt::format("{} arms disagree on forward-pass counts", to_string(method)));
        break;
      }
    }
    index[method] = report.methods.size();
    report.methods.push_back(std::move(m));
  }
  if (index.count(Method::Dizo) && index.count(Method::ZoSgd)) {
    const auto& d = report.methods[index[Method::Dizo]];
    const auto& z = report.methods[index[Method::ZoSgd]];
    if (d.median_iterations && z.median_iterations && *z.median_iterations > 0.0) {
      report.dizo_over_zo = *d.median_iterations / *z.median_iterations;
    } else if (d.median_iterations && z.median_iterations) {
      report.dizo_over_zo = *d.median_iterations == 0.0 ? 1.0 : INFINITY;
    } else {
      report.warnings.push_back("ratio undefined: an arm group never reached the threshold");
    }
  }
  return report;
}

std::string format_report(const CompareReport& report) {
  fmt::memory_buffer out;
  auto it = std::back_inserter(out);
  fmt::format_to(it, "task {}\n", to_string(report.task));
  for (const auto& m : report.methods) {
    fmt::format_to(it, "{}:\n", to_string(m.method));
    for (const auto& [seed, iters] : m.iterations) {
      if (iters) {
        fmt::format_to(it, "  seed {:<6} iterations {}\n", seed, *iters);
      } else {
        fmt::format_to(it, "  seed {:<6} DNF\n", seed);
      }
    }
    if (m.median_iterations) {
      fmt::format_to(it, "  median iterations {}\n", *m.median_iterations);
    } else {
      fmt::format_to(it, "  median iterations DNF\n");
    }
    fmt::format_to(it, "  median final loss {:.6g}\n", m.median_final_loss);
    fmt::format_to(it, "  forward passes {} (expected {})\n", m.forward_passes,
                   m.expected_forward_passes);
  }
  if (report.dizo_over_zo) {
    fmt::format_to(it, "ratio dizo/zo_sgd {:.4f}\n", *report.dizo_over_zo);
  }
  for (const auto& w : report.warnings) fmt::format_to(it, "warning: {}\n", w);
  return fmt::to_string(out);
}

std::vector<LayerMoment> run_varsym(const ExperimentConfig& config) {
  auto task = make_task(config, config.seeds.front());
  return variance_symmetry_test(*task.oracle, task.init, task.train.front(), config.train.eps,
                                config.varsym_samples, config.seeds.front());
}

RateFit run_rate(const ExperimentConfig& config,
                 const std::function<void(const RunLog&)>& on_run) {
  if (config.rate_checkpoints < 1) throw ConfigError("rate.checkpoints must be >= 1");
  if (config.rate_seeds < 1) throw ConfigError("rate.seeds must be >= 1");
  if (!(config.rate_lr0 > 0.0)) throw ConfigError("rate.lr0 must be > 0");
  const auto task = make_task(config, config.seeds.front());
  if (!task.oracle->has_analytic_gradient() && task.init.total_dim() > FDSpec{}.max_dim) {
    throw ConfigError("rate needs a task with an analytic gradient or a small model");
  }
  BudgetRun run = [&](std::size_t budget, std::uint64_t seed) {
    TrainConfig train = config.train;
    train.steps = budget;
    train.lr = config.rate_lr0 / std::sqrt(static_cast<double>(budget));
    train.lr_schedule = LrSchedule::Constant;
    train.seed = seed;
    train.eval_every = std::max<std::size_t>(1, budget / config.rate_checkpoints);
    std::vector<double> values;
    LoopOptions options;
    options.eval_batch = &task.eval;
    options.param_observer = [&](std::size_t iteration, const ParamSet& params) {
      if (iteration == 0) return;
      ParamSet probe = params;
      const auto g = reference_gradient(*task.oracle, probe, task.eval);
      const double n = l2_norm(g.flat());
      values.push_back(n * n);
    };
    const auto result = run_zo_loop(*task.oracle, task.init, task.train, train, options);
    if (on_run) on_run(result.log);
    return values;
  };
  std::vector<std::uint64_t> seeds;
  for (std::size_t k = 0; k < config.rate_seeds; ++k) {
    seeds.push_back(derive_seed(config.seeds.front(), k));
  }
  return rate_fit(run, config.rate_budgets, seeds);
}

}  // namespace zotune::harness
