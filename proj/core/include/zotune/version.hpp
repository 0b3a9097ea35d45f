#pragma once

#include <string_view>

namespace zotune {

std::string_view version();
std::string_view git_revision();

}  // namespace zotune
