// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace pex::io {

/// RFC 4180 reader: quoted fields may hold delimiters, doubled quotes and
/// line breaks. A UTF-8 byte-order mark on the first field is dropped.
std::vector<std::vector<std::string>> parse_csv(std::string_view text, char delimiter = ',');
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path, char delimiter);

std::string read_file(const std::filesystem::path& path);

}  // namespace pex::io
