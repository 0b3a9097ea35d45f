#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "zotune/optimizer.hpp"

namespace zotune::harness {

// Header: iter, loss_clean, loss_probe, lr, step_movement, stability_slack,
// then gap.<layer> and upd.<layer> for every layer and projmag.<layer> for
// every projected layer, in layer order. Values use %.17g so they read back
// bit for bit.
std::vector<std::string> csv_header(const RunLog& log);
std::string format_records_csv(const RunLog& log);

// Inverse of format_records_csv. The method is dizo when projmag columns are
// present and zo_sgd otherwise. Throws StructuralError on malformed input.
RunLog parse_records_csv(const std::string& text);
RunLog read_records_csv(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace zotune::harness
