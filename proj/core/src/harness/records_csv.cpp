#include "zotune/harness/records_csv.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "zotune/error.hpp"

namespace zotune::harness {

namespace {

constexpr const char* kFixed[] = {"iter", "loss_clean", "loss_probe",
                                  "lr", "step_movement", "stability_slack"};
constexpr std::size_t kFixedCount = std::size(kFixed);

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double to_double(const std::string& cell, std::size_t row) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(cell.c_str(), &end);
  if (cell.empty() || end != cell.c_str() + cell.size()) {
    throw StructuralError(fmt::format("csv row {}: bad number '{}'", row, cell));
  }
  return v;
}

}  // namespace

std::vector<std::string> csv_header(const RunLog& log) {
  std::vector<std::string> out(std::begin(kFixed), std::end(kFixed));
  for (const auto& name : log.layers) out.push_back("gap." + name);
  for (const auto& name : log.layers) out.push_back("upd." + name);
  for (const auto& name : log.projected_layers) out.push_back("projmag." + name);
  return out;
}

std::string format_records_csv(const RunLog& log) {
  fmt::memory_buffer out;
  const auto header = csv_header(log);
  for (std::size_t i = 0; i < header.size(); ++i) {
    fmt::format_to(std::back_inserter(out), "{}{}", i ? "," : "", header[i]);
  }
  out.push_back('\n');
  for (const auto& r : log.records) {
    fmt::format_to(std::back_inserter(out), "{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}",
                   r.iteration, r.loss_clean, r.loss_probe, r.lr, r.step_movement,
                   r.stability_slack);
    for (double v : r.gap) fmt::format_to(std::back_inserter(out), ",{:.17g}", v);
    for (double v : r.update_norm) fmt::format_to(std::back_inserter(out), ",{:.17g}", v);
    for (double v : r.projection_mag) fmt::format_to(std::back_inserter(out), ",{:.17g}", v);
    out.push_back('\n');
  }
  return fmt::to_string(out);
}

RunLog parse_records_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw StructuralError("csv is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line);
  if (header.size() < kFixedCount) throw StructuralError("csv header is too short");
  for (std::size_t i = 0; i < kFixedCount; ++i) {
    if (header[i] != kFixed[i]) {
      throw StructuralError(
          fmt::format("csv column {} is '{}', expected '{}'", i, header[i], kFixed[i]));
    }
  }
  RunLog log;
  std::size_t col = kFixedCount;
  while (col < header.size() && header[col].rfind("gap.", 0) == 0) {
    log.layers.push_back(header[col].substr(4));
    ++col;
  }
  for (std::size_t l = 0; l < log.layers.size(); ++l, ++col) {
    if (col >= header.size() || header[col] != "upd." + log.layers[l]) {
      throw StructuralError(fmt::format("csv is missing column 'upd.{}'", log.layers[l]));
    }
  }
  for (; col < header.size(); ++col) {
    if (header[col].rfind("projmag.", 0) != 0) {
      throw StructuralError(fmt::format("unexpected csv column '{}'", header[col]));
    }
    log.projected_layers.push_back(header[col].substr(8));
  }
  log.method = log.projected_layers.empty() ? Method::ZoSgd : Method::Dizo;

  const std::size_t n_layers = log.layers.size();
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw StructuralError(fmt::format("csv row {} has {} cells, expected {}", row,
                                        cells.size(), header.size()));
    }
    RunRecord r;
    const double iter = to_double(cells[0], row);
    if (iter < 0.0 || iter != std::floor(iter)) {
      throw StructuralError(fmt::format("csv row {}: bad iteration '{}'", row, cells[0]));
    }
    r.iteration = static_cast<std::size_t>(iter);
    r.loss_clean = to_double(cells[1], row);
    r.loss_probe = to_double(cells[2], row);
    r.lr = to_double(cells[3], row);
    r.step_movement = to_double(cells[4], row);
    r.stability_slack = to_double(cells[5], row);
    std::size_t c = kFixedCount;
    for (std::size_t l = 0; l < n_layers; ++l) r.gap.push_back(to_double(cells[c++], row));
    for (std::size_t l = 0; l < n_layers; ++l) {
      r.update_norm.push_back(to_double(cells[c++], row));
    }
    for (std::size_t p = 0; p < log.projected_layers.size(); ++p) {
      r.projection_mag.push_back(to_double(cells[c++], row));
    }
    log.records.push_back(std::move(r));
  }
  return log;
}

RunLog read_records_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot open '{}'", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_records_csv(buffer.str());
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += fmt::format(".tmp{}", std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write '{}'", tmp.string()));
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw Error(fmt::format("write to '{}' failed", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace zotune::harness
